//! TD residuals, generalized advantage estimates, n-step and TD(λ) returns
//! for a single finite trajectory.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("trajectory needs len(values) = len(rewards) + 1, got {values} values for {rewards} rewards")]
    LengthMismatch { rewards: usize, values: usize },
    #[error("trajectory contains a non-finite entry")]
    NonFinite,
    #[error("{name} must be in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("index {t} out of range for horizon {horizon}")]
    IndexOutOfRange { t: usize, horizon: usize },
    #[error("n-step return needs n >= 1")]
    ZeroSteps,
}

/// `rewards[t]` is received after step `t`; `values` holds `V(S_0)..=V(S_T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    rewards: Vec<f64>,
    values: Vec<f64>,
    terminal: bool,
}

impl Trajectory {
    /// When `terminal` is set the bootstrap value `V(S_T)` is treated as 0
    /// whatever was passed in.
    pub fn new(rewards: Vec<f64>, values: Vec<f64>, terminal: bool) -> Result<Self, EstimatorError> {
        if values.len() != rewards.len() + 1 {
            return Err(EstimatorError::LengthMismatch {
                rewards: rewards.len(),
                values: values.len(),
            });
        }
        if rewards.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite);
        }
        let mut values = values;
        if terminal {
            *values.last_mut().unwrap() = 0.0;
        }
        Ok(Self {
            rewards,
            values,
            terminal,
        })
    }

    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Value estimates with the terminal bootstrap already zeroed.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    pub gamma: f64,
    pub lambda: f64,
}

impl EstimatorParams {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self, EstimatorError> {
        check_unit("gamma", gamma)?;
        check_unit("lambda", lambda)?;
        Ok(Self { gamma, lambda })
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), EstimatorError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(EstimatorError::OutOfRange { name, value })
    }
}

/// `δ_t = R_t + γ V(S_{t+1}) − V(S_t)`
pub fn td_residuals(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let v = &traj.values;
    traj.rewards
        .iter()
        .enumerate()
        .map(|(t, r)| r + gamma * v[t + 1] - v[t])
        .collect()
}

/// Backward recursion `A_t = δ_t + γλ A_{t+1}` with `A_T = 0`.
pub fn gae_advantages(traj: &Trajectory, params: EstimatorParams) -> Vec<f64> {
    let deltas = td_residuals(traj, params.gamma);
    let decay = params.gamma * params.lambda;
    let mut advantages = vec![0.0; deltas.len()];
    let mut running = 0.0;
    for t in (0..deltas.len()).rev() {
        running = deltas[t] + decay * running;
        advantages[t] = running;
    }
    advantages
}

/// Discounted sum of `n` rewards from `t`, bootstrapped with `V(S_{t+n})`.
/// `n` is capped at the remaining horizon.
pub fn n_step_return(traj: &Trajectory, t: usize, n: usize, gamma: f64) -> Result<f64, EstimatorError> {
    let horizon = traj.horizon();
    if t >= horizon {
        return Err(EstimatorError::IndexOutOfRange { t, horizon });
    }
    if n == 0 {
        return Err(EstimatorError::ZeroSteps);
    }
    let n = n.min(horizon - t);
    let mut discount = 1.0;
    let mut total = 0.0;
    for k in 0..n {
        total += discount * traj.rewards[t + k];
        discount *= gamma;
    }
    Ok(total + discount * traj.values[t + n])
}

/// λ-weighted mix of n-step returns, truncated at the end of the trajectory:
/// `(1−λ) Σ_{n<T−t} λ^{n−1} G_{t:t+n} + λ^{T−t−1} G_{t:T}`.
///
/// Computed with the backward recursion
/// `G_t = R_t + γ((1−λ) V(S_{t+1}) + λ G_{t+1})`, `G_T = V(S_T)`,
/// which expands to exactly that weighting.
pub fn td_lambda_returns(traj: &Trajectory, params: EstimatorParams) -> Vec<f64> {
    let EstimatorParams { gamma, lambda } = params;
    let horizon = traj.horizon();
    let v = &traj.values;
    let mut returns = vec![0.0; horizon];
    let mut next = v[horizon];
    for t in (0..horizon).rev() {
        next = traj.rewards[t] + gamma * ((1.0 - lambda) * v[t + 1] + lambda * next);
        returns[t] = next;
    }
    returns
}
