use crate::error::TrainError;

/// PPO hyperparameters and run-length settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Environments stepped in parallel during rollout collection.
    pub num_envs: usize,
    /// Steps collected per environment between policy updates.
    pub steps_per_update: usize,
    /// Total environment steps for the whole run. The number of updates is
    /// this divided by `num_envs * steps_per_update`, rounded up.
    pub total_steps: usize,
    /// Adam step size.
    pub learning_rate: f64,
    /// Decay the step size linearly to zero across the planned updates.
    /// Late full-size updates can wreck an already-good policy on a single
    /// unlucky batch, and a policy lost that way rarely comes back.
    pub anneal_lr: bool,
    /// Discount factor.
    pub gamma: f64,
    /// Generalized advantage estimation mixing factor.
    pub gae_lambda: f64,
    /// PPO ratio clip radius.
    pub clip_eps: f64,
    /// Weight of the squared value error in the loss.
    pub value_coef: f64,
    /// Weight of the entropy bonus in the loss.
    pub entropy_coef: f64,
    /// Passes over each collected batch.
    pub epochs: usize,
    /// Minibatches per epoch. Each minibatch is a subset of whole
    /// environment segments so hidden states stay coherent.
    pub minibatches: usize,
    /// Global gradient norm ceiling; gradients above it are rescaled.
    pub max_grad_norm: f64,
    /// Updates between intermediate checkpoints (0 disables them).
    pub checkpoint_every: usize,
    /// Seed for environment resets, action sampling, and minibatch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_envs: 16,
            steps_per_update: 30,
            total_steps: 500_000,
            learning_rate: 4e-5,
            anneal_lr: false,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            epochs: 4,
            minibatches: 4,
            max_grad_norm: 0.5,
            checkpoint_every: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.num_envs == 0 {
            return Err(TrainError::Config("num_envs must be positive".into()));
        }
        if self.steps_per_update == 0 {
            return Err(TrainError::Config(
                "steps_per_update must be positive".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.minibatches == 0 {
            return Err(TrainError::Config("minibatches must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::Config(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(TrainError::Config("gamma must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(TrainError::Config("gae_lambda must lie in [0, 1]".into()));
        }
        if !(self.clip_eps.is_finite() && self.clip_eps > 0.0) {
            return Err(TrainError::Config(
                "clip_eps must be finite and positive".into(),
            ));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(TrainError::Config(
                "loss coefficients must be non-negative".into(),
            ));
        }
        if !(self.max_grad_norm.is_finite() && self.max_grad_norm > 0.0) {
            return Err(TrainError::Config(
                "max_grad_norm must be finite and positive".into(),
            ));
        }
        Ok(())
    }

    /// Environment steps gathered per update.
    pub fn steps_per_batch(&self) -> usize {
        self.num_envs * self.steps_per_update
    }

    /// Number of updates needed to reach `total_steps`.
    pub fn planned_updates(&self) -> usize {
        self.total_steps.div_ceil(self.steps_per_batch())
    }
}
