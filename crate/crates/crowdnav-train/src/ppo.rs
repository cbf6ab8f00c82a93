//! Clipped-surrogate policy optimization on the autodiff tape.
//!
//! The whole loss is composed from tape operations, so one backward pass per
//! environment fragment yields exact gradients through the recurrent
//! unroll. Clipping and the pessimistic minimum are built from relu:
//! `clip(x, lo, hi) = lo + relu(x - lo) - relu(x - hi)` and
//! `min(a, b) = a - relu(a - b)`.

use crowdnav_net::gradcheck::{check_gradients, DEFAULT_STEP};
use crowdnav_net::policy::{forward_graph, register_params, ParamIds, LN_2PI};
use crowdnav_net::{Matrix, NetDims, NetError, PolicyParams, Tape, TensorId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::TrainConfig;
use crate::error::TrainError;
use crate::gae::gae;
use crate::rollout::{EnvSegment, RolloutBatch};

/// Supervision for one transition: what was done and what it was worth.
#[derive(Debug, Clone, Copy)]
pub struct StepTarget {
    pub action: [f64; 2],
    pub log_prob_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Tape handles for one transition's loss and its reusable pieces.
#[derive(Debug, Clone, Copy)]
pub struct StepLossGraph {
    pub loss: TensorId,
    /// Negated pessimistic surrogate, before coefficients.
    pub policy_term: TensorId,
    /// Squared value error, before the value coefficient.
    pub value_error: TensorId,
    pub entropy: TensorId,
    pub h_next: TensorId,
}

/// Records one transition's PPO loss on the tape, including the policy
/// forward pass that produces the fresh log-probability.
#[allow(clippy::too_many_arguments)]
pub fn step_loss_graph(
    tape: &mut Tape,
    ids: &ParamIds,
    dims: &NetDims,
    features: &Matrix,
    mask: &[bool],
    robot: &Matrix,
    h_prev: TensorId,
    target: &StepTarget,
    config: &TrainConfig,
) -> Result<StepLossGraph, NetError> {
    let f = tape.constant(features.clone());
    let r = tape.constant(robot.clone());
    let graph = forward_graph(tape, ids, dims, f, mask, r, h_prev)?;

    // Log-density of the stored action under the fresh Gaussian, written the
    // same way `gaussian_log_prob` evaluates it.
    let action_row = tape.constant(Matrix::from_rows(&[vec![
        target.action[0],
        target.action[1],
    ]]));
    let diff = tape.sub(action_row, graph.mean)?;
    let neg_log_std = tape.scalar_mul(graph.log_std, -1.0);
    let inv_std = tape.exp(neg_log_std);
    let z = tape.mul(diff, inv_std)?;
    let zz = tape.mul(z, z)?;
    let quad = tape.sum(zz);
    let sum_log_std = tape.sum(graph.log_std);
    let half_quad = tape.scalar_mul(quad, -0.5);
    let centered = tape.sub(half_quad, sum_log_std)?;
    let log_prob_new = tape.scalar_add(centered, -LN_2PI);

    let shifted = tape.scalar_add(log_prob_new, -target.log_prob_old);
    let ratio = tape.exp(shifted);
    let surrogate = tape.scalar_mul(ratio, target.advantage);

    let lo = 1.0 - config.clip_eps;
    let hi = 1.0 + config.clip_eps;
    let above_lo = tape.scalar_add(ratio, -lo);
    let above_lo = tape.relu(above_lo);
    let above_hi = tape.scalar_add(ratio, -hi);
    let above_hi = tape.relu(above_hi);
    let clipped_span = tape.sub(above_lo, above_hi)?;
    let clipped_ratio = tape.scalar_add(clipped_span, lo);
    let clipped_surrogate = tape.scalar_mul(clipped_ratio, target.advantage);

    let gap = tape.sub(surrogate, clipped_surrogate)?;
    let gap_relu = tape.relu(gap);
    let pessimistic = tape.sub(surrogate, gap_relu)?;
    let policy_term = tape.scalar_mul(pessimistic, -1.0);

    let value_diff = tape.scalar_add(graph.value, -target.ret);
    let value_error = tape.mul(value_diff, value_diff)?;

    let entropy = tape.scalar_add(sum_log_std, 1.0 + LN_2PI);

    let weighted_value = tape.scalar_mul(value_error, config.value_coef);
    let weighted_entropy = tape.scalar_mul(entropy, -config.entropy_coef);
    let partial = tape.add(policy_term, weighted_value)?;
    let loss = tape.add(partial, weighted_entropy)?;

    Ok(StepLossGraph {
        loss,
        policy_term,
        value_error,
        entropy,
        h_next: graph.h_next,
    })
}

/// Shifts each advantage by the batch mean and divides by the batch standard
/// deviation, leaving the per-environment layout intact.
pub fn normalize_advantages(advantages: &mut [Vec<f64>]) {
    let count: usize = advantages.iter().map(Vec::len).sum();
    if count == 0 {
        return;
    }
    let sum: f64 = advantages.iter().flatten().sum();
    let mean = sum / count as f64;
    let var: f64 = advantages
        .iter()
        .flatten()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / count as f64;
    let denom = var.sqrt() + 1e-8;
    for env in advantages.iter_mut() {
        for a in env.iter_mut() {
            *a = (*a - mean) / denom;
        }
    }
}

/// Per-environment advantage estimates (normalized over the whole batch) and
/// value targets.
pub fn compute_targets(
    batch: &RolloutBatch,
    config: &TrainConfig,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut advantages = Vec::with_capacity(batch.segments.len());
    let mut returns = Vec::with_capacity(batch.segments.len());
    for segment in &batch.segments {
        let rewards: Vec<f64> = segment.steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = segment.steps.iter().map(|s| s.value_old).collect();
        let dones: Vec<bool> = segment.steps.iter().map(|s| s.done).collect();
        let (adv, ret) = gae(
            &rewards,
            &values,
            &dones,
            segment.bootstrap_value,
            config.gamma,
            config.gae_lambda,
        );
        advantages.push(adv);
        returns.push(ret);
    }
    normalize_advantages(&mut advantages);
    (advantages, returns)
}

/// Adam with bias correction, keyed by the canonical parameter order.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &PolicyParams) -> Self {
        let shapes: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.clone(),
            second: shapes,
        }
    }

    pub fn apply(&mut self, params: &mut PolicyParams, grads: &[Matrix], lr: f64) {
        self.step += 1;
        let correction1 = 1.0 - self.beta1.powi(self.step as i32);
        let correction2 = 1.0 - self.beta2.powi(self.step as i32);
        let tensors = params.tensors_mut();
        assert_eq!(tensors.len(), grads.len());
        for (((grad, m), v), (_, tensor)) in grads
            .iter()
            .zip(&mut self.first)
            .zip(&mut self.second)
            .zip(tensors)
        {
            let g = grad.as_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            let p = tensor.as_mut_slice();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Sample means of the loss components over one update.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean pre-clip global gradient norm over the gradient steps.
    pub grad_norm: f64,
    pub num_samples: usize,
}

struct Fragment {
    loss: f64,
    grads: Vec<Matrix>,
    policy_sum: f64,
    value_sum: f64,
    entropy_sum: f64,
    steps: usize,
}

/// Unrolls one environment segment on a fresh tape, sums the per-step losses
/// scaled by `inv_total`, and backpropagates through the whole unroll.
/// Episode boundaries restart the hidden state from a constant zero, so no
/// gradient crosses them.
fn env_fragment(
    params: &PolicyParams,
    segment: &EnvSegment,
    advantages: &[f64],
    returns: &[f64],
    inv_total: f64,
    config: &TrainConfig,
) -> Result<Fragment, TrainError> {
    let dims = params.dims;
    let mut tape = Tape::new();
    let ids = register_params(&mut tape, params, true);
    let mut h = tape.constant(segment.h_start.clone());
    let mut total: Option<TensorId> = None;
    let mut policy_sum = 0.0;
    let mut value_sum = 0.0;
    let mut entropy_sum = 0.0;
    for (t, sample) in segment.steps.iter().enumerate() {
        let target = StepTarget {
            action: sample.action,
            log_prob_old: sample.log_prob_old,
            advantage: advantages[t],
            ret: returns[t],
        };
        let graph = step_loss_graph(
            &mut tape,
            &ids,
            &dims,
            &sample.features,
            &sample.mask,
            &sample.robot,
            h,
            &target,
            config,
        )?;
        policy_sum += tape.scalar_value(graph.policy_term);
        value_sum += tape.scalar_value(graph.value_error);
        entropy_sum += tape.scalar_value(graph.entropy);
        let scaled = tape.scalar_mul(graph.loss, inv_total);
        total = Some(match total {
            None => scaled,
            Some(acc) => tape.add(acc, scaled)?,
        });
        h = if sample.done {
            tape.constant(Matrix::zeros(1, dims.d_h))
        } else {
            graph.h_next
        };
    }
    let loss_id = total.ok_or_else(|| TrainError::Config("empty segment".into()))?;
    let loss = tape.scalar_value(loss_id);
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            update: 0,
            context: format!("fragment loss {loss}"),
        });
    }
    let grads = tape.backward(loss_id)?;
    let ordered = ids.ordered();
    let out: Vec<Matrix> = ordered
        .iter()
        .map(|&id| grads.get(id).expect("trainable leaf gradient").clone())
        .collect();
    Ok(Fragment {
        loss,
        grads: out,
        policy_sum,
        value_sum,
        entropy_sum,
        steps: segment.steps.len(),
    })
}

/// Mean loss of the whole batch under the given parameters, using the same
/// fragment construction as the update.
pub fn evaluate_batch_loss(
    params: &PolicyParams,
    batch: &RolloutBatch,
    config: &TrainConfig,
) -> Result<f64, TrainError> {
    let (advantages, returns) = compute_targets(batch, config);
    let inv_total = 1.0 / batch.num_samples() as f64;
    let mut acc = 0.0;
    for (e, segment) in batch.segments.iter().enumerate() {
        let fragment =
            env_fragment(params, segment, &advantages[e], &returns[e], inv_total, config)?;
        acc += fragment.loss;
    }
    Ok(acc)
}

fn split_into_chunks(order: &[usize], chunks: usize) -> Vec<Vec<usize>> {
    let base = order.len() / chunks;
    let extra = order.len() % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let size = base + usize::from(c < extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    out
}

/// One PPO update over a collected batch: several epochs of minibatch
/// gradient steps, where each minibatch is a subset of whole environment
/// segments. Gradients are clipped by global norm and applied with Adam.
pub fn ppo_update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    batch: &RolloutBatch,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    update_index: usize,
) -> Result<UpdateStats, TrainError> {
    let num_envs = batch.segments.len();
    let num_samples = batch.num_samples();
    if num_envs == 0 || num_samples == 0 {
        return Err(TrainError::Config("cannot update from an empty batch".into()));
    }
    let (advantages, returns) = compute_targets(batch, config);

    let mut order: Vec<usize> = (0..num_envs).collect();
    let mut policy_sum = 0.0;
    let mut value_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut counted = 0usize;
    let mut norm_sum = 0.0;
    let mut gradient_steps = 0usize;

    let set_update = |err: TrainError| match err {
        TrainError::NonFiniteLoss { context, .. } => TrainError::NonFiniteLoss {
            update: update_index,
            context,
        },
        other => other,
    };

    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in split_into_chunks(&order, config.minibatches.min(num_envs)) {
            let total: usize = chunk.iter().map(|&e| batch.segments[e].steps.len()).sum();
            if total == 0 {
                continue;
            }
            let inv_total = 1.0 / total as f64;

            #[cfg(feature = "parallel")]
            let fragments: Vec<_> = chunk
                .par_iter()
                .map(|&e| {
                    env_fragment(
                        params,
                        &batch.segments[e],
                        &advantages[e],
                        &returns[e],
                        inv_total,
                        config,
                    )
                })
                .collect();
            #[cfg(not(feature = "parallel"))]
            let fragments: Vec<_> = chunk
                .iter()
                .map(|&e| {
                    env_fragment(
                        params,
                        &batch.segments[e],
                        &advantages[e],
                        &returns[e],
                        inv_total,
                        config,
                    )
                })
                .collect();

            let mut grads: Option<Vec<Matrix>> = None;
            for fragment in fragments {
                let fragment = fragment.map_err(set_update)?;
                policy_sum += fragment.policy_sum;
                value_sum += fragment.value_sum;
                entropy_sum += fragment.entropy_sum;
                counted += fragment.steps;
                match &mut grads {
                    None => grads = Some(fragment.grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&fragment.grads) {
                            a.add_scaled_assign(g, 1.0);
                        }
                    }
                }
            }
            let mut grads = grads.expect("non-empty chunk produced gradients");

            let norm = grads
                .iter()
                .map(Matrix::squared_sum)
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    update: update_index,
                    context: format!("gradient norm {norm}"),
                });
            }
            norm_sum += norm;
            gradient_steps += 1;
            if norm > config.max_grad_norm {
                let scale = config.max_grad_norm / norm;
                for g in &mut grads {
                    g.scale_assign(scale);
                }
            }
            adam.apply(params, &grads, config.learning_rate);
        }
    }

    let denom = counted.max(1) as f64;
    Ok(UpdateStats {
        policy_loss: policy_sum / denom,
        value_loss: value_sum / denom,
        entropy: entropy_sum / denom,
        grad_norm: norm_sum / gradient_steps.max(1) as f64,
        num_samples,
    })
}

/// Finite-difference sweep of the full transition loss: forward pass,
/// log-probability, clipped surrogate, value error, and entropy, all
/// differentiated with respect to every parameter tensor. Targets are drawn
/// so the active surrogate branch keeps a live gradient and every relu input
/// stays away from its kink.
pub fn sweep_step_loss(instances: usize, seed: u64) -> Result<usize, String> {
    const KINK_MARGIN: f64 = 1e-3;
    const MAX_DRAWS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = NetDims {
        horizon: 2,
        d_hh: 6,
        heads: 2,
        d_rh: 5,
        d_r: 4,
        d_h: 6,
    };
    let config = TrainConfig::default();
    let mut checked = 0;
    let mut done = 0;
    let mut draws = 0;
    while done < instances {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err("could not sample enough kink-free instances".into());
        }
        let mut template = PolicyParams::zeros(dims).map_err(|e| format!("dims: {e}"))?;
        for (_, tensor) in template.tensors_mut() {
            for v in tensor.as_mut_slice() {
                *v = rng.gen_range(-0.7..0.7);
            }
        }
        let n = 3;
        let features = {
            let data = (0..n * dims.human_feature_width())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            Matrix::new(n, dims.human_feature_width(), data)
        };
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        let robot = {
            let data = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Matrix::new(1, 9, data)
        };
        let h_prev = {
            let data = (0..dims.d_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Matrix::new(1, dims.d_h, data)
        };
        let action = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];

        // Fresh log-probability under the drawn parameters, so the ratio can
        // be placed outside the clip band with the live branch selected.
        let probe_output = {
            let mut session = crowdnav_net::PolicySession::new(&template)
                .map_err(|e| format!("session: {e}"))?;
            session
                .forward_features(&features, &mask, &robot, &h_prev)
                .map_err(|e| format!("forward: {e}"))?
        };
        let log_prob_now = crowdnav_net::policy::gaussian_log_prob(
            action,
            [probe_output.action_mean.x, probe_output.action_mean.y],
            probe_output.log_std,
        );
        let offset = 0.5 + rng.gen_range(0.0..0.3);
        let magnitude = 0.1 + rng.gen_range(0.0..1.0);
        let (log_prob_old, advantage) = if rng.gen_bool(0.5) {
            (log_prob_now - offset, -magnitude)
        } else {
            (log_prob_now + offset, magnitude)
        };
        let target = StepTarget {
            action,
            log_prob_old,
            advantage,
            ret: rng.gen_range(-2.0..2.0),
        };

        let params: Vec<Matrix> = template
            .tensors()
            .iter()
            .map(|(_, m)| (*m).clone())
            .collect();
        let build = {
            let features = features.clone();
            let mask = mask.clone();
            let robot = robot.clone();
            let h_prev = h_prev.clone();
            let config = config.clone();
            move |t: &mut Tape, p: &[TensorId]| {
                let ids = ParamIds::from_ordered(p.try_into().unwrap());
                let h = t.constant(h_prev.clone());
                let graph =
                    step_loss_graph(t, &ids, &dims, &features, &mask, &robot, h, &target, &config)
                        .unwrap();
                graph.loss
            }
        };

        let mut probe = Tape::new();
        let probe_ids: Vec<TensorId> = params.iter().map(|m| probe.leaf(m.clone())).collect();
        build(&mut probe, &probe_ids);
        if probe.min_abs_at_kinks() < KINK_MARGIN {
            continue;
        }

        let mut tape = Tape::new();
        let ids: Vec<TensorId> = params.iter().map(|m| tape.leaf(m.clone())).collect();
        let loss = build(&mut tape, &ids);
        let grads = tape
            .backward(loss)
            .map_err(|e| format!("backward failed: {e}"))?;
        let analytic: Vec<Matrix> = ids
            .iter()
            .map(|&id| grads.get(id).expect("trainable leaf gradient").clone())
            .collect();
        let check = check_gradients(&params, &analytic, DEFAULT_STEP, |values| {
            let mut t = Tape::new();
            let ids: Vec<TensorId> = values.iter().map(|m| t.constant(m.clone())).collect();
            let loss = build(&mut t, &ids);
            t.scalar_value(loss)
        });
        if !check.passed() {
            return Err(format!(
                "step loss instance {done}: worst |analytic - fd| = {} at {:?} ({}x tolerance)",
                check.worst_abs, check.worst_entry, check.worst_ratio
            ));
        }
        checked += check.entries_checked;
        done += 1;
    }
    Ok(checked)
}
