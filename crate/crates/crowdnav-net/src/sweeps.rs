//! Randomized gradient sweeps: every tape op, the GRU cell, both attention
//! blocks, and the full policy forward pass, each checked against the central
//! finite-difference oracle on freshly sampled small instances.
//!
//! Shared between unit tests (few instances) and the acceptance suite (many).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gradcheck::{check_gradients, DEFAULT_STEP};
use crate::gru::{gru_cell, GruIds};
use crate::matrix::Matrix;
use crate::policy::{forward_graph, NetDims, PolicyParams};
use crate::tape::{Tape, TensorId};

/// Instances whose relu inputs come closer to zero than this are re-drawn;
/// finite differences across the kink say nothing about the gradient.
const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: usize = 1000;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data)
}

fn run_case(
    label: &str,
    params: &[Matrix],
    build: &dyn Fn(&mut Tape, &[TensorId]) -> TensorId,
) -> Result<usize, String> {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params.iter().map(|m| tape.leaf(m.clone())).collect();
    let loss = build(&mut tape, &ids);
    let grads = tape
        .backward(loss)
        .map_err(|e| format!("{label}: backward failed: {e}"))?;
    let analytic: Vec<Matrix> = ids
        .iter()
        .map(|&id| grads.get(id).expect("trainable leaf gradient").clone())
        .collect();
    let check = check_gradients(params, &analytic, DEFAULT_STEP, |values| {
        let mut t = Tape::new();
        let ids: Vec<TensorId> = values.iter().map(|m| t.constant(m.clone())).collect();
        let loss = build(&mut t, &ids);
        t.scalar_value(loss)
    });
    if check.passed() {
        Ok(check.entries_checked)
    } else {
        Err(format!(
            "{label}: worst |analytic - fd| = {} at {:?} ({}x tolerance)",
            check.worst_abs, check.worst_entry, check.worst_ratio
        ))
    }
}

fn weighted_scalar(tape: &mut Tape, out: TensorId, weights: &Matrix) -> TensorId {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w).expect("weight shape matches output");
    tape.sum(prod)
}

/// Gradient-checks every tape operation on `instances` random inputs each.
/// Returns the number of parameter entries verified.
pub fn sweep_ops(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for instance in 0..instances {
        let a0 = random_matrix(&mut rng, 3, 4);
        let b0 = random_matrix(&mut rng, 4, 2);
        let c0 = random_matrix(&mut rng, 3, 4);
        let row0 = random_matrix(&mut rng, 1, 4);
        let relu_in = {
            let data = (0..12)
                .map(|_| {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    sign * rng.gen_range(KINK_MARGIN..1.0)
                })
                .collect();
            Matrix::new(3, 4, data)
        };
        let w_ab = random_matrix(&mut rng, 3, 2);
        let w_a = random_matrix(&mut rng, 3, 4);
        let w_row = random_matrix(&mut rng, 4, 3);
        let w_cat = random_matrix(&mut rng, 3, 8);
        let w_slice = random_matrix(&mut rng, 3, 2);
        let mask = [true, false, true, true];

        type Builder = Box<dyn Fn(&mut Tape, &[TensorId]) -> TensorId>;
        let cases: Vec<(&str, Vec<Matrix>, Builder)> = vec![
            ("matmul", vec![a0.clone(), b0.clone()], {
                let w = w_ab.clone();
                Box::new(move |t, p| {
                    let out = t.matmul(p[0], p[1]).unwrap();
                    weighted_scalar(t, out, &w)
                })
            }),
            ("add_broadcast", vec![a0.clone(), row0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.add(p[0], p[1]).unwrap();
                    weighted_scalar(t, out, &w)
                })
            }),
            ("add_same_shape", vec![a0.clone(), c0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.add(p[0], p[1]).unwrap();
                    weighted_scalar(t, out, &w)
                })
            }),
            ("sub", vec![a0.clone(), c0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.sub(p[0], p[1]).unwrap();
                    weighted_scalar(t, out, &w)
                })
            }),
            ("scalar_mul_add", vec![a0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let scaled = t.scalar_mul(p[0], -1.7);
                    let shifted = t.scalar_add(scaled, 0.4);
                    weighted_scalar(t, shifted, &w)
                })
            }),
            ("mul", vec![a0.clone(), c0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.mul(p[0], p[1]).unwrap();
                    weighted_scalar(t, out, &w)
                })
            }),
            ("concat_cols", vec![a0.clone(), c0.clone()], {
                let w = w_cat.clone();
                Box::new(move |t, p| {
                    let out = t.concat_cols(p[0], p[1]).unwrap();
                    weighted_scalar(t, out, &w)
                })
            }),
            ("slice_cols", vec![a0.clone()], {
                let w = w_slice.clone();
                Box::new(move |t, p| {
                    let out = t.slice_cols(p[0], 1, 3).unwrap();
                    weighted_scalar(t, out, &w)
                })
            }),
            ("transpose", vec![a0.clone()], {
                let w = w_row.clone();
                Box::new(move |t, p| {
                    let out = t.transpose(p[0]);
                    weighted_scalar(t, out, &w)
                })
            }),
            ("relu", vec![relu_in.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.relu(p[0]);
                    weighted_scalar(t, out, &w)
                })
            }),
            ("tanh", vec![a0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.tanh(p[0]);
                    weighted_scalar(t, out, &w)
                })
            }),
            ("sigmoid", vec![a0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.sigmoid(p[0]);
                    weighted_scalar(t, out, &w)
                })
            }),
            ("exp", vec![a0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.exp(p[0]);
                    weighted_scalar(t, out, &w)
                })
            }),
            ("row_softmax", vec![a0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.row_softmax(p[0]);
                    weighted_scalar(t, out, &w)
                })
            }),
            ("masked_row_softmax", vec![a0.clone()], {
                let w = w_a.clone();
                Box::new(move |t, p| {
                    let out = t.masked_row_softmax(p[0], &mask).unwrap();
                    weighted_scalar(t, out, &w)
                })
            }),
            ("sum", vec![a0.clone()], {
                Box::new(move |t, p| {
                    let sq = t.mul(p[0], p[0]).unwrap();
                    t.sum(sq)
                })
            }),
            ("mean", vec![a0.clone()], {
                Box::new(move |t, p| {
                    let sq = t.mul(p[0], p[0]).unwrap();
                    t.mean(sq)
                })
            }),
        ];

        for (name, params, build) in &cases {
            let label = format!("{name} instance {instance}");
            checked += run_case(&label, params, build.as_ref())?;
        }
    }
    Ok(checked)
}

/// Gradient-checks the GRU cell on random small instances.
pub fn sweep_gru(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for instance in 0..instances {
        let d_in = 3;
        let d_h = 4;
        let shapes = [
            (d_in, d_h),
            (d_h, d_h),
            (1, d_h),
            (d_in, d_h),
            (d_h, d_h),
            (1, d_h),
            (d_in, d_h),
            (d_h, d_h),
            (1, d_h),
        ];
        let params: Vec<Matrix> = shapes
            .iter()
            .map(|&(r, c)| random_matrix(&mut rng, r, c))
            .collect();
        let x_in = random_matrix(&mut rng, 1, d_in);
        let h_in = random_matrix(&mut rng, 1, d_h);
        let weights = random_matrix(&mut rng, 1, d_h);

        let build = move |t: &mut Tape, p: &[TensorId]| {
            let ids = GruIds {
                w_z: p[0],
                u_z: p[1],
                b_z: p[2],
                w_r: p[3],
                u_r: p[4],
                b_r: p[5],
                w_c: p[6],
                u_c: p[7],
                b_c: p[8],
            };
            let x = t.constant(x_in.clone());
            let h = t.constant(h_in.clone());
            let out = gru_cell(t, x, h, &ids).unwrap();
            weighted_scalar(t, out, &weights)
        };
        checked += run_case(&format!("gru instance {instance}"), &params, &build)?;
    }
    Ok(checked)
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    loop {
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        if mask.iter().any(|&m| m) {
            return mask;
        }
    }
}

/// Gradient-checks the human-human multi-head attention block alone.
pub fn sweep_hh_attention(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let n = 3;
    let width = 4;
    let d_hh = 6;
    let heads = 2;
    for instance in 0..instances {
        let params = vec![
            random_matrix(&mut rng, width, d_hh),
            random_matrix(&mut rng, width, d_hh),
            random_matrix(&mut rng, width, d_hh),
            random_matrix(&mut rng, d_hh, d_hh),
        ];
        let features = random_matrix(&mut rng, n, width);
        let mask = random_mask(&mut rng, n);
        let weights = random_matrix(&mut rng, n, d_hh);

        let build = move |t: &mut Tape, p: &[TensorId]| {
            let f = t.constant(features.clone());
            let q = t.matmul(f, p[0]).unwrap();
            let k = t.matmul(f, p[1]).unwrap();
            let v = t.matmul(f, p[2]).unwrap();
            let head_dim = d_hh / heads;
            let scale = 1.0 / (head_dim as f64).sqrt();
            let mut heads_out: Option<TensorId> = None;
            for h in 0..heads {
                let lo = h * head_dim;
                let hi = lo + head_dim;
                let qh = t.slice_cols(q, lo, hi).unwrap();
                let kh = t.slice_cols(k, lo, hi).unwrap();
                let vh = t.slice_cols(v, lo, hi).unwrap();
                let kt = t.transpose(kh);
                let scores = t.matmul(qh, kt).unwrap();
                let scores = t.scalar_mul(scores, scale);
                let w = t.masked_row_softmax(scores, &mask).unwrap();
                let out = t.matmul(w, vh).unwrap();
                heads_out = Some(match heads_out {
                    Some(acc) => t.concat_cols(acc, out).unwrap(),
                    None => out,
                });
            }
            let attn = t.matmul(heads_out.unwrap(), p[3]).unwrap();
            weighted_scalar(t, attn, &weights)
        };
        checked += run_case(&format!("hh_attention instance {instance}"), &params, &build)?;
    }
    Ok(checked)
}

/// Gradient-checks the robot-human attention block alone.
pub fn sweep_rh_attention(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let n = 3;
    let d_hh = 5;
    let d_rh = 4;
    let robot_width = 9;
    for instance in 0..instances {
        let params = vec![
            random_matrix(&mut rng, d_hh, d_rh),
            random_matrix(&mut rng, robot_width, d_rh),
            random_matrix(&mut rng, d_hh, d_rh),
        ];
        let v_hh = random_matrix(&mut rng, n, d_hh);
        let robot = random_matrix(&mut rng, 1, robot_width);
        let mask = random_mask(&mut rng, n);
        let weights = random_matrix(&mut rng, 1, d_rh);

        let build = move |t: &mut Tape, p: &[TensorId]| {
            let vhh = t.constant(v_hh.clone());
            let r = t.constant(robot.clone());
            let q = t.matmul(vhh, p[0]).unwrap();
            let k = t.matmul(r, p[1]).unwrap();
            let v = t.matmul(vhh, p[2]).unwrap();
            let qt = t.transpose(q);
            let scores = t.matmul(k, qt).unwrap();
            let scores = t.scalar_mul(scores, 1.0 / (d_rh as f64).sqrt());
            let w = t.masked_row_softmax(scores, &mask).unwrap();
            let out = t.matmul(w, v).unwrap();
            weighted_scalar(t, out, &weights)
        };
        checked += run_case(&format!("rh_attention instance {instance}"), &params, &build)?;
    }
    Ok(checked)
}

fn small_dims() -> NetDims {
    NetDims {
        horizon: 2,
        d_hh: 6,
        heads: 2,
        d_rh: 5,
        d_r: 4,
        d_h: 6,
    }
}

/// Gradient-checks the full forward pass (all 25 parameter tensors) against
/// a scalar loss touching the value, the action mean, and the log-std.
pub fn sweep_policy_forward(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = small_dims();
    let mut checked = 0;
    let mut done = 0;
    let mut draws = 0;
    while done < instances {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err("could not sample enough kink-free instances".into());
        }
        let mut template =
            PolicyParams::zeros(dims).map_err(|e| format!("dims rejected: {e}"))?;
        for (_, tensor) in template.tensors_mut() {
            for v in tensor.as_mut_slice() {
                *v = rng.gen_range(-0.7..0.7);
            }
        }
        let n = 3;
        let features = random_matrix(&mut rng, n, dims.human_feature_width());
        let mask = random_mask(&mut rng, n);
        let robot = random_matrix(&mut rng, 1, 9);
        let h_prev = random_matrix(&mut rng, 1, dims.d_h);
        let w_mean = random_matrix(&mut rng, 1, 2);
        let w_std = random_matrix(&mut rng, 1, 2);

        let params: Vec<Matrix> = template.tensors().iter().map(|(_, m)| (*m).clone()).collect();
        let build = {
            let features = features.clone();
            let mask = mask.clone();
            let robot = robot.clone();
            let h_prev = h_prev.clone();
            let w_mean = w_mean.clone();
            let w_std = w_std.clone();
            move |t: &mut Tape, p: &[TensorId]| {
                let ids = crate::policy::ParamIds::from_ordered(p.try_into().unwrap());
                let f = t.constant(features.clone());
                let r = t.constant(robot.clone());
                let h = t.constant(h_prev.clone());
                let graph = forward_graph(t, &ids, &dims, f, &mask, r, h).unwrap();
                let mean_term = weighted_scalar(t, graph.mean, &w_mean);
                let std_term = weighted_scalar(t, graph.log_std, &w_std);
                let partial = t.add(graph.value, mean_term).unwrap();
                t.add(partial, std_term).unwrap()
            }
        };

        // Probe the instance once; re-draw if any relu input sits on a kink.
        let mut probe = Tape::new();
        let probe_ids: Vec<TensorId> = params.iter().map(|m| probe.leaf(m.clone())).collect();
        build(&mut probe, &probe_ids);
        if probe.min_abs_at_kinks() < KINK_MARGIN {
            continue;
        }

        checked += run_case(&format!("policy_forward instance {done}"), &params, &build)?;
        done += 1;
    }
    Ok(checked)
}
