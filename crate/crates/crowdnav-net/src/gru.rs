//! Gated recurrent unit assembled from tape operations.

use crate::error::NetError;
use crate::tape::{Tape, TensorId};

/// Tape handles for one GRU cell's parameters.
#[derive(Debug, Clone, Copy)]
pub struct GruIds {
    pub w_z: TensorId,
    pub u_z: TensorId,
    pub b_z: TensorId,
    pub w_r: TensorId,
    pub u_r: TensorId,
    pub b_r: TensorId,
    pub w_c: TensorId,
    pub u_c: TensorId,
    pub b_c: TensorId,
}

/// One GRU step:
/// z = sigmoid(x W_z + h U_z + b_z), r = sigmoid(x W_r + h U_r + b_r),
/// c = tanh(x W_c + (r dot h) U_c + b_c), h' = (1 - z) dot h + z dot c.
pub fn gru_cell(
    tape: &mut Tape,
    x: TensorId,
    h_prev: TensorId,
    ids: &GruIds,
) -> Result<TensorId, NetError> {
    let z = gate(tape, x, h_prev, ids.w_z, ids.u_z, ids.b_z)?;
    let z = tape.sigmoid(z);
    let r = gate(tape, x, h_prev, ids.w_r, ids.u_r, ids.b_r)?;
    let r = tape.sigmoid(r);

    let gated_h = tape.mul(r, h_prev)?;
    let xw = tape.matmul(x, ids.w_c)?;
    let hu = tape.matmul(gated_h, ids.u_c)?;
    let lin = tape.add(xw, hu)?;
    let lin = tape.add(lin, ids.b_c)?;
    let candidate = tape.tanh(lin);

    let keep = tape.mul(z, h_prev)?;
    let take = tape.mul(z, candidate)?;
    let carried = tape.sub(h_prev, keep)?;
    tape.add(carried, take)
}

fn gate(
    tape: &mut Tape,
    x: TensorId,
    h_prev: TensorId,
    w: TensorId,
    u: TensorId,
    b: TensorId,
) -> Result<TensorId, NetError> {
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h_prev, u)?;
    let lin = tape.add(xw, hu)?;
    tape.add(lin, b)
}
