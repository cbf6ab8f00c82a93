//! The crowd-navigation policy network.
//!
//! Dataflow per step: human features (current + predicted positions, robot
//! frame) pass through multi-head human-human attention, then a single-head
//! robot-human attention reduces the crowd to one feature row. That row,
//! concatenated with an embedded robot state, feeds a GRU whose hidden state
//! drives a value head and a diagonal-Gaussian action head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crowdnav_sim::{AgentState, Observation, Vec2};

use crate::error::NetError;
use crate::gru::{gru_cell, GruIds};
use crate::matrix::Matrix;
use crate::tape::{Tape, TensorId};

/// ln(2*pi), the normalization constant of a 2-d unit Gaussian.
pub const LN_2PI: f64 = 1.8378770664093453;

/// Width of the robot feature row: planar velocity, goal offset, max speed,
/// heading, radius, plus the two zeroed position slots of the robot frame.
pub const ROBOT_FEATURE_WIDTH: usize = 9;

/// Layer sizes. All attention and embedding widths are configurable so tests
/// can gradient-check small instances cheaply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    /// Prediction horizon K; human feature rows hold K+1 positions.
    pub horizon: usize,
    /// Human-human attention width.
    pub d_hh: usize,
    /// Human-human attention head count; must divide `d_hh`.
    pub heads: usize,
    /// Robot-human attention width.
    pub d_rh: usize,
    /// Robot embedding width.
    pub d_r: usize,
    /// GRU hidden width.
    pub d_h: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims {
            horizon: 5,
            d_hh: 64,
            heads: 8,
            d_rh: 64,
            d_r: 64,
            d_h: 128,
        }
    }
}

impl NetDims {
    pub fn human_feature_width(&self) -> usize {
        2 * (self.horizon + 1)
    }

    pub fn gru_input_width(&self) -> usize {
        self.d_rh + self.d_r
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.horizon == 0 {
            return Err(NetError::InvalidDims("horizon must be positive".into()));
        }
        for (name, v) in [
            ("d_hh", self.d_hh),
            ("heads", self.heads),
            ("d_rh", self.d_rh),
            ("d_r", self.d_r),
            ("d_h", self.d_h),
        ] {
            if v == 0 {
                return Err(NetError::InvalidDims(format!("{name} must be positive")));
            }
        }
        if !self.d_hh.is_multiple_of(self.heads) {
            return Err(NetError::InvalidDims(format!(
                "d_hh {} not divisible by heads {}",
                self.d_hh, self.heads
            )));
        }
        Ok(())
    }
}

/// All learned parameters, as plain matrices. [`PolicyParams::tensors`] fixes
/// the canonical (name, tensor) order used by checkpoints and the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub dims: NetDims,
    pub w_hh_q: Matrix,
    pub w_hh_k: Matrix,
    pub w_hh_v: Matrix,
    pub w_hh_o: Matrix,
    pub w_rh_q: Matrix,
    pub w_rh_k: Matrix,
    pub w_rh_v: Matrix,
    pub f_r_w1: Matrix,
    pub f_r_b1: Matrix,
    pub f_r_w2: Matrix,
    pub f_r_b2: Matrix,
    pub gru_w_z: Matrix,
    pub gru_u_z: Matrix,
    pub gru_b_z: Matrix,
    pub gru_w_r: Matrix,
    pub gru_u_r: Matrix,
    pub gru_b_r: Matrix,
    pub gru_w_c: Matrix,
    pub gru_u_c: Matrix,
    pub gru_b_c: Matrix,
    pub w_value: Matrix,
    pub b_value: Matrix,
    pub w_policy: Matrix,
    pub b_policy: Matrix,
    pub log_std: Matrix,
}

impl PolicyParams {
    /// All parameters zero; the base for tests and checkpoint loading.
    pub fn zeros(dims: NetDims) -> Result<Self, NetError> {
        dims.validate()?;
        let w = dims.human_feature_width();
        let gi = dims.gru_input_width();
        Ok(PolicyParams {
            dims,
            w_hh_q: Matrix::zeros(w, dims.d_hh),
            w_hh_k: Matrix::zeros(w, dims.d_hh),
            w_hh_v: Matrix::zeros(w, dims.d_hh),
            w_hh_o: Matrix::zeros(dims.d_hh, dims.d_hh),
            w_rh_q: Matrix::zeros(dims.d_hh, dims.d_rh),
            w_rh_k: Matrix::zeros(ROBOT_FEATURE_WIDTH, dims.d_rh),
            w_rh_v: Matrix::zeros(dims.d_hh, dims.d_rh),
            f_r_w1: Matrix::zeros(ROBOT_FEATURE_WIDTH, dims.d_r),
            f_r_b1: Matrix::zeros(1, dims.d_r),
            f_r_w2: Matrix::zeros(dims.d_r, dims.d_r),
            f_r_b2: Matrix::zeros(1, dims.d_r),
            gru_w_z: Matrix::zeros(gi, dims.d_h),
            gru_u_z: Matrix::zeros(dims.d_h, dims.d_h),
            gru_b_z: Matrix::zeros(1, dims.d_h),
            gru_w_r: Matrix::zeros(gi, dims.d_h),
            gru_u_r: Matrix::zeros(dims.d_h, dims.d_h),
            gru_b_r: Matrix::zeros(1, dims.d_h),
            gru_w_c: Matrix::zeros(gi, dims.d_h),
            gru_u_c: Matrix::zeros(dims.d_h, dims.d_h),
            gru_b_c: Matrix::zeros(1, dims.d_h),
            w_value: Matrix::zeros(dims.d_h, 1),
            b_value: Matrix::zeros(1, 1),
            w_policy: Matrix::zeros(dims.d_h, 2),
            b_policy: Matrix::zeros(1, 2),
            log_std: Matrix::zeros(1, 2),
        })
    }

    /// Xavier-uniform weights and zero biases. The action-mean weights start
    /// small so early rollouts stay near zero velocity, and the exploration
    /// std starts at e^-1 of the speed cap: unit std would drown the commands
    /// in noise and crash every early episode into the crowd.
    pub fn init(dims: NetDims, seed: u64) -> Result<Self, NetError> {
        let mut params = PolicyParams::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, tensor) in params.tensors_mut() {
            let is_weight = !name.starts_with("gru_b")
                && !name.starts_with("f_r_b")
                && !matches!(name, "b_value" | "b_policy" | "log_std");
            if !is_weight {
                continue;
            }
            let (rows, cols) = tensor.shape();
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            for v in tensor.as_mut_slice() {
                *v = rng.gen_range(-limit..limit);
            }
            if name == "w_policy" {
                tensor.scale_assign(0.01);
            }
        }
        for v in params.log_std.as_mut_slice() {
            *v = -1.0;
        }
        Ok(params)
    }

    /// Canonical (name, tensor) pairs, in checkpoint order.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_hh_q", &self.w_hh_q),
            ("w_hh_k", &self.w_hh_k),
            ("w_hh_v", &self.w_hh_v),
            ("w_hh_o", &self.w_hh_o),
            ("w_rh_q", &self.w_rh_q),
            ("w_rh_k", &self.w_rh_k),
            ("w_rh_v", &self.w_rh_v),
            ("f_r_w1", &self.f_r_w1),
            ("f_r_b1", &self.f_r_b1),
            ("f_r_w2", &self.f_r_w2),
            ("f_r_b2", &self.f_r_b2),
            ("gru_w_z", &self.gru_w_z),
            ("gru_u_z", &self.gru_u_z),
            ("gru_b_z", &self.gru_b_z),
            ("gru_w_r", &self.gru_w_r),
            ("gru_u_r", &self.gru_u_r),
            ("gru_b_r", &self.gru_b_r),
            ("gru_w_c", &self.gru_w_c),
            ("gru_u_c", &self.gru_u_c),
            ("gru_b_c", &self.gru_b_c),
            ("w_value", &self.w_value),
            ("b_value", &self.b_value),
            ("w_policy", &self.w_policy),
            ("b_policy", &self.b_policy),
            ("log_std", &self.log_std),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("w_hh_q", &mut self.w_hh_q),
            ("w_hh_k", &mut self.w_hh_k),
            ("w_hh_v", &mut self.w_hh_v),
            ("w_hh_o", &mut self.w_hh_o),
            ("w_rh_q", &mut self.w_rh_q),
            ("w_rh_k", &mut self.w_rh_k),
            ("w_rh_v", &mut self.w_rh_v),
            ("f_r_w1", &mut self.f_r_w1),
            ("f_r_b1", &mut self.f_r_b1),
            ("f_r_w2", &mut self.f_r_w2),
            ("f_r_b2", &mut self.f_r_b2),
            ("gru_w_z", &mut self.gru_w_z),
            ("gru_u_z", &mut self.gru_u_z),
            ("gru_b_z", &mut self.gru_b_z),
            ("gru_w_r", &mut self.gru_w_r),
            ("gru_u_r", &mut self.gru_u_r),
            ("gru_b_r", &mut self.gru_b_r),
            ("gru_w_c", &mut self.gru_w_c),
            ("gru_u_c", &mut self.gru_u_c),
            ("gru_b_c", &mut self.gru_b_c),
            ("w_value", &mut self.w_value),
            ("b_value", &mut self.b_value),
            ("w_policy", &mut self.w_policy),
            ("b_policy", &mut self.b_policy),
            ("log_std", &mut self.log_std),
        ]
    }

    pub fn initial_hidden(&self) -> Matrix {
        Matrix::zeros(1, self.dims.d_h)
    }
}

/// Tape handles for every parameter, mirroring [`PolicyParams`].
#[derive(Debug, Clone, Copy)]
pub struct ParamIds {
    pub w_hh_q: TensorId,
    pub w_hh_k: TensorId,
    pub w_hh_v: TensorId,
    pub w_hh_o: TensorId,
    pub w_rh_q: TensorId,
    pub w_rh_k: TensorId,
    pub w_rh_v: TensorId,
    pub f_r_w1: TensorId,
    pub f_r_b1: TensorId,
    pub f_r_w2: TensorId,
    pub f_r_b2: TensorId,
    pub gru: GruIds,
    pub w_value: TensorId,
    pub b_value: TensorId,
    pub w_policy: TensorId,
    pub b_policy: TensorId,
    pub log_std: TensorId,
}

impl ParamIds {
    /// Inverse of [`ParamIds::ordered`].
    pub fn from_ordered(ids: [TensorId; 25]) -> Self {
        ParamIds {
            w_hh_q: ids[0],
            w_hh_k: ids[1],
            w_hh_v: ids[2],
            w_hh_o: ids[3],
            w_rh_q: ids[4],
            w_rh_k: ids[5],
            w_rh_v: ids[6],
            f_r_w1: ids[7],
            f_r_b1: ids[8],
            f_r_w2: ids[9],
            f_r_b2: ids[10],
            gru: GruIds {
                w_z: ids[11],
                u_z: ids[12],
                b_z: ids[13],
                w_r: ids[14],
                u_r: ids[15],
                b_r: ids[16],
                w_c: ids[17],
                u_c: ids[18],
                b_c: ids[19],
            },
            w_value: ids[20],
            b_value: ids[21],
            w_policy: ids[22],
            b_policy: ids[23],
            log_std: ids[24],
        }
    }

    /// Ids in the same order as [`PolicyParams::tensors`].
    pub fn ordered(&self) -> [TensorId; 25] {
        [
            self.w_hh_q,
            self.w_hh_k,
            self.w_hh_v,
            self.w_hh_o,
            self.w_rh_q,
            self.w_rh_k,
            self.w_rh_v,
            self.f_r_w1,
            self.f_r_b1,
            self.f_r_w2,
            self.f_r_b2,
            self.gru.w_z,
            self.gru.u_z,
            self.gru.b_z,
            self.gru.w_r,
            self.gru.u_r,
            self.gru.b_r,
            self.gru.w_c,
            self.gru.u_c,
            self.gru.b_c,
            self.w_value,
            self.b_value,
            self.w_policy,
            self.b_policy,
            self.log_std,
        ]
    }
}

/// Puts every parameter on the tape, trainable or frozen.
pub fn register_params(tape: &mut Tape, params: &PolicyParams, trainable: bool) -> ParamIds {
    let mut reg = |m: &Matrix| {
        if trainable {
            tape.leaf(m.clone())
        } else {
            tape.constant(m.clone())
        }
    };
    ParamIds {
        w_hh_q: reg(&params.w_hh_q),
        w_hh_k: reg(&params.w_hh_k),
        w_hh_v: reg(&params.w_hh_v),
        w_hh_o: reg(&params.w_hh_o),
        w_rh_q: reg(&params.w_rh_q),
        w_rh_k: reg(&params.w_rh_k),
        w_rh_v: reg(&params.w_rh_v),
        f_r_w1: reg(&params.f_r_w1),
        f_r_b1: reg(&params.f_r_b1),
        f_r_w2: reg(&params.f_r_w2),
        f_r_b2: reg(&params.f_r_b2),
        gru: GruIds {
            w_z: reg(&params.gru_w_z),
            u_z: reg(&params.gru_u_z),
            b_z: reg(&params.gru_b_z),
            w_r: reg(&params.gru_w_r),
            u_r: reg(&params.gru_u_r),
            b_r: reg(&params.gru_b_r),
            w_c: reg(&params.gru_w_c),
            u_c: reg(&params.gru_u_c),
            b_c: reg(&params.gru_b_c),
        },
        w_value: reg(&params.w_value),
        b_value: reg(&params.b_value),
        w_policy: reg(&params.w_policy),
        b_policy: reg(&params.b_policy),
        log_std: reg(&params.log_std),
    }
}

/// Tape handles produced by one forward step. Intermediate stages stay
/// exposed so invariance tests can inspect them.
#[derive(Debug, Clone, Copy)]
pub struct GraphOutput {
    pub value: TensorId,
    pub mean: TensorId,
    pub log_std: TensorId,
    pub h_next: TensorId,
    pub v_hh: TensorId,
    pub v_rh: TensorId,
    /// Robot-human attention weights, 1 x n.
    pub rh_weights: TensorId,
}

/// Position offsets enter the network in sensor-range units: metric offsets
/// of several meters would push the first attention and gate layers into
/// saturation at initialization.
pub const POSITION_SCALE: f64 = 0.2;

/// Human feature matrix (one row per slot, current + K predicted positions,
/// all relative to the robot) plus the visibility mask. Invisible slots are
/// zero rows, so their absolute state cannot influence anything downstream.
pub fn build_human_features(
    observation: &Observation,
    horizon: usize,
) -> Result<(Matrix, Vec<bool>), NetError> {
    let width = 2 * (horizon + 1);
    let n = observation.humans.len();
    let mut features = Matrix::zeros(n, width);
    for (i, human) in observation.humans.iter().enumerate() {
        if !observation.visibility[i] {
            continue;
        }
        if human.predicted.len() != horizon {
            return Err(NetError::ShapeMismatch {
                op: "build_human_features",
                details: format!(
                    "slot {i} has {} predicted positions, expected {horizon}",
                    human.predicted.len()
                ),
            });
        }
        let origin = observation.robot.position;
        features.set(i, 0, (human.position.x - origin.x) * POSITION_SCALE);
        features.set(i, 1, (human.position.y - origin.y) * POSITION_SCALE);
        for (k, p) in human.predicted.iter().enumerate() {
            features.set(i, 2 + 2 * k, (p.x - origin.x) * POSITION_SCALE);
            features.set(i, 3 + 2 * k, (p.y - origin.y) * POSITION_SCALE);
        }
    }
    Ok((features, observation.visibility.clone()))
}

/// Robot feature row in its own frame: position slots are zero, the goal is
/// a scaled offset, and velocity, max speed, heading, and radius pass
/// through.
pub fn build_robot_features(robot: &AgentState) -> Matrix {
    Matrix::from_rows(&[vec![
        0.0,
        0.0,
        robot.velocity.x,
        robot.velocity.y,
        (robot.goal.x - robot.position.x) * POSITION_SCALE,
        (robot.goal.y - robot.position.y) * POSITION_SCALE,
        robot.v_max,
        robot.heading,
        robot.radius,
    ]])
}

/// Records one forward step on the tape.
pub fn forward_graph(
    tape: &mut Tape,
    ids: &ParamIds,
    dims: &NetDims,
    features: TensorId,
    mask: &[bool],
    robot: TensorId,
    h_prev: TensorId,
) -> Result<GraphOutput, NetError> {
    let n = tape.value(features).rows();
    if mask.len() != n {
        return Err(NetError::ShapeMismatch {
            op: "forward_graph",
            details: format!("mask length {} for {n} feature rows", mask.len()),
        });
    }

    let q = tape.matmul(features, ids.w_hh_q)?;
    let k = tape.matmul(features, ids.w_hh_k)?;
    let v = tape.matmul(features, ids.w_hh_v)?;
    let head_dim = dims.d_hh / dims.heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut heads_out: Option<TensorId> = None;
    for h in 0..dims.heads {
        let lo = h * head_dim;
        let hi = lo + head_dim;
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let kt = tape.transpose(kh);
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scalar_mul(scores, scale);
        let weights = tape.masked_row_softmax(scores, mask)?;
        let out = tape.matmul(weights, vh)?;
        heads_out = Some(match heads_out {
            Some(acc) => tape.concat_cols(acc, out)?,
            None => out,
        });
    }
    let attn = tape.matmul(heads_out.expect("at least one head"), ids.w_hh_o)?;
    let mut row_mask = Matrix::zeros(n, dims.d_hh);
    for (i, &visible) in mask.iter().enumerate() {
        if visible {
            for c in 0..dims.d_hh {
                row_mask.set(i, c, 1.0);
            }
        }
    }
    let row_mask = tape.constant(row_mask);
    let v_hh = tape.mul(attn, row_mask)?;

    let q_rh = tape.matmul(v_hh, ids.w_rh_q)?;
    let v_rh_proj = tape.matmul(v_hh, ids.w_rh_v)?;
    let k_rh = tape.matmul(robot, ids.w_rh_k)?;
    let qt = tape.transpose(q_rh);
    let scores_rh = tape.matmul(k_rh, qt)?;
    let scores_rh = tape.scalar_mul(scores_rh, 1.0 / (dims.d_rh as f64).sqrt());
    let rh_weights = tape.masked_row_softmax(scores_rh, mask)?;
    let v_rh = tape.matmul(rh_weights, v_rh_proj)?;

    let r1 = tape.matmul(robot, ids.f_r_w1)?;
    let r1 = tape.add(r1, ids.f_r_b1)?;
    let r1 = tape.relu(r1);
    let v_r = tape.matmul(r1, ids.f_r_w2)?;
    let v_r = tape.add(v_r, ids.f_r_b2)?;

    let gru_in = tape.concat_cols(v_rh, v_r)?;
    let h_next = gru_cell(tape, gru_in, h_prev, &ids.gru)?;

    let value = tape.matmul(h_next, ids.w_value)?;
    let value = tape.add(value, ids.b_value)?;
    let mean = tape.matmul(h_next, ids.w_policy)?;
    let mean = tape.add(mean, ids.b_policy)?;

    Ok(GraphOutput {
        value,
        mean,
        log_std: ids.log_std,
        h_next,
        v_hh,
        v_rh,
        rh_weights,
    })
}

/// Plain-value outputs of one inference step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub value: f64,
    pub action_mean: Vec2,
    pub log_std: [f64; 2],
    pub h_next: Matrix,
}

/// Inference context: parameters registered once on a private tape, with the
/// per-step graph truncated away after each forward.
#[derive(Debug, Clone)]
pub struct PolicySession {
    tape: Tape,
    ids: ParamIds,
    dims: NetDims,
    base_len: usize,
}

impl PolicySession {
    pub fn new(params: &PolicyParams) -> Result<Self, NetError> {
        params.dims.validate()?;
        let mut tape = Tape::new();
        let ids = register_params(&mut tape, params, false);
        let base_len = tape.len();
        Ok(PolicySession {
            tape,
            ids,
            dims: params.dims,
            base_len,
        })
    }

    pub fn dims(&self) -> &NetDims {
        &self.dims
    }

    pub fn initial_hidden(&self) -> Matrix {
        Matrix::zeros(1, self.dims.d_h)
    }

    /// One forward step from raw feature matrices.
    pub fn forward_features(
        &mut self,
        features: &Matrix,
        mask: &[bool],
        robot: &Matrix,
        h_prev: &Matrix,
    ) -> Result<PolicyOutput, NetError> {
        let f = self.tape.constant(features.clone());
        let r = self.tape.constant(robot.clone());
        let h = self.tape.constant(h_prev.clone());
        let graph = forward_graph(&mut self.tape, &self.ids, &self.dims, f, mask, r, h)?;
        let mean = self.tape.value(graph.mean);
        let log_std = self.tape.value(graph.log_std);
        let output = PolicyOutput {
            value: self.tape.scalar_value(graph.value),
            action_mean: Vec2::new(mean.get(0, 0), mean.get(0, 1)),
            log_std: [log_std.get(0, 0), log_std.get(0, 1)],
            h_next: self.tape.value(graph.h_next).clone(),
        };
        self.tape.truncate(self.base_len);
        Ok(output)
    }

    /// One forward step straight from an observation.
    pub fn forward(
        &mut self,
        observation: &Observation,
        h_prev: &Matrix,
    ) -> Result<PolicyOutput, NetError> {
        let (features, mask) = build_human_features(observation, self.dims.horizon)?;
        let robot = build_robot_features(&observation.robot);
        self.forward_features(&features, &mask, &robot, h_prev)
    }
}

/// Log-density of a diagonal Gaussian at `action`.
pub fn gaussian_log_prob(action: [f64; 2], mean: [f64; 2], log_std: [f64; 2]) -> f64 {
    let mut quad = 0.0;
    let mut log_det = 0.0;
    for i in 0..2 {
        let z = (action[i] - mean[i]) * (-log_std[i]).exp();
        quad += z * z;
        log_det += log_std[i];
    }
    -0.5 * quad - log_det - LN_2PI
}

/// Samples the diagonal Gaussian and returns the raw action with its
/// log-probability. The speed clamp happens in the environment, so the
/// density is evaluated on the unclamped sample.
pub fn sample_action(output: &PolicyOutput, rng: &mut impl Rng) -> (Vec2, f64) {
    let mean = [output.action_mean.x, output.action_mean.y];
    let mut action = [0.0; 2];
    for i in 0..2 {
        let z: f64 = rng.sample(StandardNormal);
        action[i] = mean[i] + output.log_std[i].exp() * z;
    }
    let log_prob = gaussian_log_prob(action, mean, output.log_std);
    (Vec2::new(action[0], action[1]), log_prob)
}
