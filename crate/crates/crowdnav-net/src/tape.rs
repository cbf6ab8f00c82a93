//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Operations record onto a [`Tape`] in execution order; [`Tape::backward`]
//! walks the records in reverse, accumulating gradients for every trainable
//! leaf. Recording order is the topological order, so a single reverse sweep
//! suffices.

use crate::error::NetError;
use crate::matrix::Matrix;

/// Handle to a tensor on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    /// `a + b` where `b` either matches `a`'s shape or is a single row
    /// broadcast across `a`'s rows.
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    ScalarMul(TensorId, f64),
    ScalarAdd(TensorId),
    Mul(TensorId, TensorId),
    ConcatCols(TensorId, TensorId),
    SliceCols(TensorId, usize),
    Transpose(TensorId),
    Relu(TensorId),
    Tanh(TensorId),
    Sigmoid(TensorId),
    Exp(TensorId),
    RowSoftmax(TensorId),
    MaskedRowSoftmax(TensorId),
    Sum(TensorId),
    Mean(TensorId),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    trainable: bool,
}

/// Accumulated gradients from one backward sweep, indexed by tensor id.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the tensor, if it was reached.
    /// Trainable leaves are always present (zero-filled when off the path).
    pub fn get(&self, id: TensorId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

/// The recording tape. One tape per worker; tapes are not shared across
/// threads.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded tensors; pair with [`Tape::truncate`] to reuse a
    /// tape across inference steps without re-registering parameters.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every tensor recorded after the first `len`. Callers must not
    /// use ids minted past the cut afterwards.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Registers a trainable parameter leaf.
    pub fn leaf(&mut self, value: Matrix) -> TensorId {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a non-trainable input leaf.
    pub fn constant(&mut self, value: Matrix) -> TensorId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Reads a 1x1 tensor as a scalar.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        let value = self.value(id);
        assert_eq!(value.shape(), (1, 1), "tensor is not a scalar");
        value.get(0, 0)
    }

    fn push(&mut self, value: Matrix, op: Op, trainable: bool) -> TensorId {
        self.nodes.push(Node {
            value,
            op,
            trainable,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn shape_error(op: &'static str, details: String) -> NetError {
        NetError::ShapeMismatch { op, details }
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NetError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Self::shape_error("matmul", format!("{ar}x{ac} * {br}x{bc}")));
        }
        let value = self.value(a).matmul(self.value(b));
        Ok(self.push(value, Op::MatMul(a, b), false))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NetError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if !(br == ar && bc == ac || br == 1 && bc == ac) {
            return Err(Self::shape_error("add", format!("{ar}x{ac} + {br}x{bc}")));
        }
        let lhs = self.value(a);
        let rhs = self.value(b);
        let mut value = lhs.clone();
        for r in 0..ar {
            for c in 0..ac {
                let add = if br == 1 { rhs.get(0, c) } else { rhs.get(r, c) };
                value.set(r, c, lhs.get(r, c) + add);
            }
        }
        Ok(self.push(value, Op::Add(a, b), false))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NetError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::shape_error(
                "sub",
                format!("{:?} - {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b), false))
    }

    pub fn scalar_mul(&mut self, a: TensorId, scalar: f64) -> TensorId {
        let value = self.value(a).map(|x| x * scalar);
        self.push(value, Op::ScalarMul(a, scalar), false)
    }

    pub fn scalar_add(&mut self, a: TensorId, scalar: f64) -> TensorId {
        let value = self.value(a).map(|x| x + scalar);
        self.push(value, Op::ScalarAdd(a), false)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NetError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::shape_error(
                "mul",
                format!("{:?} * {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b), false))
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NetError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ar != br {
            return Err(Self::shape_error(
                "concat_cols",
                format!("{ar}x{ac} | {br}x{bc}"),
            ));
        }
        let lhs = self.value(a);
        let rhs = self.value(b);
        let mut value = Matrix::zeros(ar, ac + bc);
        for r in 0..ar {
            for c in 0..ac {
                value.set(r, c, lhs.get(r, c));
            }
            for c in 0..bc {
                value.set(r, ac + c, rhs.get(r, c));
            }
        }
        Ok(self.push(value, Op::ConcatCols(a, b), false))
    }

    pub fn slice_cols(&mut self, a: TensorId, start: usize, end: usize) -> Result<TensorId, NetError> {
        let (ar, ac) = self.value(a).shape();
        if start > end || end > ac {
            return Err(Self::shape_error(
                "slice_cols",
                format!("{start}..{end} of {ar}x{ac}"),
            ));
        }
        let src = self.value(a);
        let mut value = Matrix::zeros(ar, end - start);
        for r in 0..ar {
            for c in start..end {
                value.set(r, c - start, src.get(r, c));
            }
        }
        Ok(self.push(value, Op::SliceCols(a, start), false))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), false)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a), false)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a), false)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(value, Op::Sigmoid(a), false)
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a), false)
    }

    pub fn row_softmax(&mut self, a: TensorId) -> TensorId {
        let cols = self.value(a).cols();
        let mask = vec![true; cols];
        let value = masked_softmax_value(self.value(a), &mask);
        self.push(value, Op::RowSoftmax(a), false)
    }

    /// Row softmax over the unmasked columns only. Masked columns get exact
    /// zero weight; a row with no unmasked column comes out all zero.
    pub fn masked_row_softmax(&mut self, a: TensorId, mask: &[bool]) -> Result<TensorId, NetError> {
        let (rows, cols) = self.value(a).shape();
        if mask.len() != cols {
            return Err(Self::shape_error(
                "masked_row_softmax",
                format!("mask length {} for {rows}x{cols}", mask.len()),
            ));
        }
        let value = masked_softmax_value(self.value(a), mask);
        Ok(self.push(value, Op::MaskedRowSoftmax(a), false))
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.value(a).as_slice().iter().sum();
        self.push(Matrix::new(1, 1, vec![total]), Op::Sum(a), false)
    }

    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let n = self.value(a).as_slice().len();
        assert!(n > 0, "mean of an empty tensor");
        let total: f64 = self.value(a).as_slice().iter().sum();
        self.push(Matrix::new(1, 1, vec![total / n as f64]), Op::Mean(a), false)
    }

    /// Smallest |x| feeding any relu on the tape. Gradient checks use this to
    /// reject instances that straddle the relu kink, where finite differences
    /// are not informative.
    pub fn min_abs_at_kinks(&self) -> f64 {
        let mut min = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu(parent) = node.op {
                for &x in self.nodes[parent.0].value.as_slice() {
                    min = min.min(x.abs());
                }
            }
        }
        min
    }

    /// Gradient of a scalar loss with respect to every tensor on its path.
    /// Trainable leaves off the path get explicit zero gradients.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients, NetError> {
        let loss_node = &self.nodes[loss.0];
        if matches!(loss_node.op, Op::Leaf) && !loss_node.trainable {
            return Err(NetError::BackwardOnConstant);
        }
        let (rows, cols) = loss_node.value.shape();
        if (rows, cols) != (1, 1) {
            return Err(NetError::NotScalarLoss { rows, cols });
        }

        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::new(1, 1, vec![1.0]));

        for id in (0..=loss.0).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            self.accumulate_parents(id, &grad, &mut grads);
            grads[id] = Some(grad);
        }

        for (id, node) in self.nodes.iter().enumerate() {
            if node.trainable && grads[id].is_none() {
                grads[id] = Some(Matrix::zeros(node.value.rows(), node.value.cols()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate_parents(&self, id: usize, grad: &Matrix, grads: &mut [Option<Matrix>]) {
        let add_to = |grads: &mut [Option<Matrix>], parent: TensorId, delta: Matrix| {
            match &mut grads[parent.0] {
                Some(existing) => existing.add_scaled_assign(&delta, 1.0),
                slot => *slot = Some(delta),
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = grad.matmul(&self.nodes[b.0].value.transpose());
                let db = self.nodes[a.0].value.transpose().matmul(grad);
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::Add(a, b) => {
                add_to(grads, *a, grad.clone());
                let (br, bc) = self.nodes[b.0].value.shape();
                if br == grad.rows() {
                    add_to(grads, *b, grad.clone());
                } else {
                    let mut db = Matrix::zeros(1, bc);
                    for r in 0..grad.rows() {
                        for c in 0..bc {
                            db.set(0, c, db.get(0, c) + grad.get(r, c));
                        }
                    }
                    add_to(grads, *b, db);
                }
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, grad.clone());
                add_to(grads, *b, grad.map(|g| -g));
            }
            Op::ScalarMul(a, s) => add_to(grads, *a, grad.map(|g| g * s)),
            Op::ScalarAdd(a) => add_to(grads, *a, grad.clone()),
            Op::Mul(a, b) => {
                let da = grad.zip_map(&self.nodes[b.0].value, |g, y| g * y);
                let db = grad.zip_map(&self.nodes[a.0].value, |g, x| g * x);
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::ConcatCols(a, b) => {
                let ac = self.nodes[a.0].value.cols();
                let bc = self.nodes[b.0].value.cols();
                let mut da = Matrix::zeros(grad.rows(), ac);
                let mut db = Matrix::zeros(grad.rows(), bc);
                for r in 0..grad.rows() {
                    for c in 0..ac {
                        da.set(r, c, grad.get(r, c));
                    }
                    for c in 0..bc {
                        db.set(r, c, grad.get(r, ac + c));
                    }
                }
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::SliceCols(a, start) => {
                let (ar, ac) = self.nodes[a.0].value.shape();
                let mut da = Matrix::zeros(ar, ac);
                for r in 0..grad.rows() {
                    for c in 0..grad.cols() {
                        da.set(r, start + c, grad.get(r, c));
                    }
                }
                add_to(grads, *a, da);
            }
            Op::Transpose(a) => add_to(grads, *a, grad.transpose()),
            Op::Relu(a) => {
                let da = grad.zip_map(&self.nodes[a.0].value, |g, x| if x > 0.0 { g } else { 0.0 });
                add_to(grads, *a, da);
            }
            Op::Tanh(a) => {
                let da = grad.zip_map(&self.nodes[id].value, |g, y| g * (1.0 - y * y));
                add_to(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let da = grad.zip_map(&self.nodes[id].value, |g, y| g * y * (1.0 - y));
                add_to(grads, *a, da);
            }
            Op::Exp(a) => {
                let da = grad.zip_map(&self.nodes[id].value, |g, y| g * y);
                add_to(grads, *a, da);
            }
            Op::RowSoftmax(a) | Op::MaskedRowSoftmax(a) => {
                let y = &self.nodes[id].value;
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let mut dot = 0.0;
                    for c in 0..y.cols() {
                        dot += grad.get(r, c) * y.get(r, c);
                    }
                    for c in 0..y.cols() {
                        da.set(r, c, y.get(r, c) * (grad.get(r, c) - dot));
                    }
                }
                add_to(grads, *a, da);
            }
            Op::Sum(a) => {
                let g = grad.get(0, 0);
                let (ar, ac) = self.nodes[a.0].value.shape();
                add_to(grads, *a, Matrix::filled(ar, ac, g));
            }
            Op::Mean(a) => {
                let (ar, ac) = self.nodes[a.0].value.shape();
                let g = grad.get(0, 0) / (ar * ac) as f64;
                add_to(grads, *a, Matrix::filled(ar, ac, g));
            }
        }
    }
}

/// Softmax per row over the unmasked columns, with max-subtraction for
/// stability. Masked columns get exact zeros; fully masked rows give a zero
/// row instead of NaN.
fn masked_softmax_value(input: &Matrix, mask: &[bool]) -> Matrix {
    let (rows, cols) = input.shape();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let mut max = f64::NEG_INFINITY;
        for (c, &keep) in mask.iter().enumerate() {
            if keep {
                max = max.max(input.get(r, c));
            }
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for (c, &keep) in mask.iter().enumerate() {
            if keep {
                let e = (input.get(r, c) - max).exp();
                out.set(r, c, e);
                total += e;
            }
        }
        for (c, &keep) in mask.iter().enumerate() {
            if keep {
                out.set(r, c, out.get(r, c) / total);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data)
    }

    #[test]
    fn uniform_softmax_over_equal_scores() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]));
        let y = tape.row_softmax(x);
        for c in 0..3 {
            assert!((tape.value(y).get(0, c) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_softmax_single_survivor() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[vec![5.0, 9.0, 2.0]]));
        let y = tape.masked_row_softmax(x, &[true, false, false]).unwrap();
        assert_eq!(tape.value(y).as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one_or_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.constant(random_matrix(&mut rng, 6, 5));
        let mask = [true, false, true, true, false];
        let y = tape.masked_row_softmax(x, &mask).unwrap();
        for r in 0..6 {
            let row_sum: f64 = tape.value(y).row(r).iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-9);
        }
        let all_masked = tape.masked_row_softmax(x, &[false; 5]).unwrap();
        assert_eq!(tape.value(all_masked).as_slice(), &[0.0; 30]);
    }

    #[test]
    fn sum_of_leaf_gives_all_ones_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let loss = tape.sum(w);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn product_rule_on_elementwise_mul() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tape.constant(Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]));
        let prod = tape.mul(a, b).unwrap();
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap(), tape.value(b));
    }

    #[test]
    fn leaves_off_the_path_get_zero_gradients() {
        let mut tape = Tape::new();
        let used = tape.leaf(Matrix::filled(1, 2, 1.0));
        let unused = tape.leaf(Matrix::filled(3, 3, 1.0));
        let loss = tape.sum(used);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(unused).unwrap(), &Matrix::zeros(3, 3));
    }

    #[test]
    fn backward_rejects_constants_and_non_scalars() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::filled(1, 1, 2.0));
        assert!(matches!(tape.backward(c), Err(NetError::BackwardOnConstant)));
        let w = tape.leaf(Matrix::filled(2, 2, 1.0));
        let doubled = tape.scalar_mul(w, 2.0);
        assert!(matches!(
            tape.backward(doubled),
            Err(NetError::NotScalarLoss { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn shape_mismatches_are_rejected_at_call_time() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::zeros(2, 3));
        let b = tape.constant(Matrix::zeros(2, 3));
        let tall = tape.constant(Matrix::zeros(3, 1));
        let square = tape.constant(Matrix::zeros(2, 2));
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.concat_cols(a, tall).is_err());
        assert!(tape.slice_cols(a, 2, 5).is_err());
        assert!(tape.masked_row_softmax(a, &[true, false]).is_err());
        assert!(tape.add(a, square).is_err());
    }

    #[test]
    fn truncate_reuses_the_parameter_prefix() {
        let mut tape = Tape::new();
        let w = tape.leaf(Matrix::filled(1, 2, 3.0));
        let base = tape.len();
        for _ in 0..4 {
            let x = tape.constant(Matrix::filled(1, 2, 1.0));
            let y = tape.mul(w, x).unwrap();
            let loss = tape.sum(y);
            assert_eq!(tape.scalar_value(loss), 6.0);
            tape.truncate(base);
        }
        assert_eq!(tape.len(), base);
    }

}
