//! Central finite-difference gradient checking.
//!
//! The checker treats the loss as a black-box function of parameter matrices,
//! so it exercises the reverse-mode engine without sharing any code with it.

use crate::matrix::Matrix;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of comparing analytic gradients against finite differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Largest absolute difference across all parameter entries.
    pub worst_abs: f64,
    /// Largest difference relative to the tolerance envelope.
    pub worst_ratio: f64,
    /// (parameter index, row, col) of the worst entry.
    pub worst_entry: (usize, usize, usize),
    pub entries_checked: usize,
}

impl GradCheck {
    /// Accepts when every entry satisfies
    /// `|analytic - fd| <= 1e-8 + 1e-4 * max(|analytic|, |fd|)`.
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

/// Compares `analytic` against central finite differences of `loss` around
/// `params`, perturbing one entry at a time by `step`.
pub fn check_gradients<F>(
    params: &[Matrix],
    analytic: &[Matrix],
    step: f64,
    mut loss: F,
) -> GradCheck
where
    F: FnMut(&[Matrix]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let mut scratch: Vec<Matrix> = params.to_vec();
    let mut worst_abs = 0.0_f64;
    let mut worst_ratio = 0.0_f64;
    let mut worst_entry = (0, 0, 0);
    let mut entries_checked = 0;
    for (p, grad) in analytic.iter().enumerate() {
        assert_eq!(params[p].shape(), grad.shape(), "gradient shape mismatch");
        for r in 0..params[p].rows() {
            for c in 0..params[p].cols() {
                let original = scratch[p].get(r, c);
                scratch[p].set(r, c, original + step);
                let plus = loss(&scratch);
                scratch[p].set(r, c, original - step);
                let minus = loss(&scratch);
                scratch[p].set(r, c, original);
                let fd = (plus - minus) / (2.0 * step);
                let a = grad.get(r, c);
                let abs_err = (a - fd).abs();
                let envelope = 1e-8 + 1e-4 * a.abs().max(fd.abs());
                let ratio = abs_err / envelope;
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_abs = abs_err;
                    worst_entry = (p, r, c);
                }
                entries_checked += 1;
            }
        }
    }
    GradCheck {
        worst_abs,
        worst_ratio,
        worst_entry,
        entries_checked,
    }
}
