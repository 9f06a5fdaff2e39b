//! Per-cell optimistic MWU learner with dynamic learning-rate control.
//!
//! Each `(player, stage, state)` cell runs its own learner. Accumulators are
//! kept divided by the utility weight: the learner stores
//! `U^(t) / w_t` and `u^(t-1) / w_{t-1}` instead of the raw sums, so the
//! optimistic signal is `R^(t) = eta * (U^(t) / w_t + u^(t-1) / w_{t-1})`,
//! which is the same vector as `(eta / w_t) * (U^(t) + kappa_t u^(t-1))`
//! without the polynomial growth of `w_t`.
//!
//! Given the signal, the learning rate `lambda` maximizes
//! `f(lambda) = (alpha_tilde - 1) ln(lambda) + logsumexp(lambda * R)` and the
//! policy is `softmax(lambda * R)`. Equivalently the pair maximizes the lifted
//! objective over `y = lambda * x` on the scaled simplex.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::schedule::WeightSchedule;
use crate::{Error, Result};

/// What is subtracted from the utility vector to form the feedback signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// `<nu, x>` under the learner's own current policy.
    ExpectedValue,
    /// The cell's averaged value `V^(t)(s)`.
    VValue,
}

/// How `lambda` is chosen from the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Maximize `f` over `(lambda_floor, lambda_cap]`.
    Argmax,
    /// Use `eta` whenever `max_k R[k] >= -beta ln d`, otherwise maximize `f`.
    TwoCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub beta: f64,
    pub alpha_tilde: f64,
    pub eta: f64,
    pub lambda_floor: f64,
    pub lambda_cap: f64,
    pub baseline: Baseline,
    pub lambda_rule: LambdaRule,
    pub grid_size: usize,
    pub refine_tol: f64,
}

pub const DEFAULT_BETA: f64 = 70.0;

/// `beta ln^2(A_max) + 2 ln(A_max) + 2`.
pub fn default_alpha_tilde(beta: f64, max_actions: usize) -> f64 {
    let l = (max_actions as f64).ln();
    beta * l * l + 2.0 * l + 2.0
}

impl HyperParams {
    /// Default solver settings around the given constants.
    pub fn new(beta: f64, max_actions: usize, eta: f64) -> Self {
        Self {
            beta,
            alpha_tilde: default_alpha_tilde(beta, max_actions),
            eta,
            lambda_floor: 1e-12,
            lambda_cap: 1.0,
            baseline: Baseline::ExpectedValue,
            lambda_rule: LambdaRule::Argmax,
            grid_size: 256,
            refine_tol: 1e-10,
        }
    }

    /// `beta = 70` and `eta = 1 / (24 H sqrt(H) N)`.
    pub fn theoretical(horizon: usize, num_players: usize, max_actions: usize) -> Self {
        Self::new(
            DEFAULT_BETA,
            max_actions,
            crate::schedule::theoretical_eta(horizon, num_players),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.beta >= DEFAULT_BETA) {
            return bad(format!("beta must be at least 70, got {}", self.beta));
        }
        if !self.alpha_tilde.is_finite() {
            return bad("alpha_tilde must be finite".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.lambda_floor > 0.0
            && self.lambda_floor < self.lambda_cap
            && self.lambda_cap <= 1.0)
        {
            return bad(format!(
                "need 0 < lambda_floor < lambda_cap <= 1, got {} and {}",
                self.lambda_floor, self.lambda_cap
            ));
        }
        if self.grid_size < 2 {
            return bad("solver grid needs at least two points".into());
        }
        if !(self.refine_tol > 0.0) {
            return bad("refinement tolerance must be positive".into());
        }
        Ok(())
    }

    /// Geometric grid over `(lambda_floor, lambda_cap]`, ending at the cap.
    pub fn lambda_grid(&self) -> Vec<f64> {
        let n = self.grid_size;
        let ratio = (self.lambda_cap / self.lambda_floor).ln();
        (1..=n)
            .map(|k| {
                if k == n {
                    self.lambda_cap
                } else {
                    self.lambda_floor * (ratio * k as f64 / n as f64).exp()
                }
            })
            .collect()
    }
}

/// Max-shifted `ln sum_k exp(scale * r[k])`.
pub fn logsumexp_scaled(r: &[f64], scale: f64) -> f64 {
    let m = r
        .iter()
        .map(|&v| scale * v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + r.iter().map(|&v| (scale * v - m).exp()).sum::<f64>().ln()
}

/// `f(lambda) = (alpha_tilde - 1) ln(lambda) + logsumexp(lambda * r)`.
pub fn lambda_objective(lambda: f64, r: &[f64], alpha_tilde: f64) -> f64 {
    (alpha_tilde - 1.0) * lambda.ln() + logsumexp_scaled(r, lambda)
}

/// `x[k] = exp(lambda r[k]) / sum_j exp(lambda r[j])`.
pub fn softmax_policy(r: &[f64], lambda: f64) -> Vec<f64> {
    let mut x = vec![0.0; r.len()];
    softmax_into(r, lambda, &mut x);
    x
}

fn softmax_into(r: &[f64], lambda: f64, out: &mut [f64]) {
    let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(r) {
        *o = (lambda * (v - m)).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Maximizes [`lambda_objective`] over `(lambda_floor, lambda_cap]`.
///
/// When `(alpha_tilde - 1) / lambda_cap + min_k r[k] > 0` the derivative is
/// positive everywhere and the cap is returned directly. Otherwise a
/// geometric grid locates the best bracket and golden-section search refines
/// inside it; `f` need not be unimodal, so the grid optimum is kept if the
/// refinement does not beat it.
pub fn solve_lambda(r: &[f64], params: &HyperParams) -> Result<f64> {
    if r.is_empty() {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    if let Some(k) = r.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "signal entry {k} is not finite ({})",
            r[k]
        )));
    }
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    let a1 = params.alpha_tilde - 1.0;
    if a1 >= 0.0 && a1 / params.lambda_cap + min > 0.0 {
        return Ok(params.lambda_cap);
    }
    let f = |l: f64| lambda_objective(l, r, params.alpha_tilde);
    let grid = params.lambda_grid();
    let (mut best_k, mut best_f) = (0, f64::NEG_INFINITY);
    for (k, &g) in grid.iter().enumerate() {
        let v = f(g);
        // ties resolve toward the larger lambda
        if v >= best_f {
            best_k = k;
            best_f = v;
        }
    }
    let lo = if best_k == 0 {
        params.lambda_floor
    } else {
        grid[best_k - 1]
    };
    let hi = grid[(best_k + 1).min(grid.len() - 1)];
    let (mut refined, mut refined_f) = golden_max(&f, lo, hi, params.refine_tol);
    if let Some(root) = derivative_root(r, a1, lo, hi) {
        let root_f = f(root);
        if root_f >= refined_f - 1e-15 * refined_f.abs().max(1.0) {
            refined = root;
            refined_f = root_f.max(refined_f);
        }
    }
    if refined_f >= best_f && refined > params.lambda_floor && refined <= params.lambda_cap {
        Ok(refined)
    } else {
        Ok(grid[best_k])
    }
}

fn lambda_slope(r: &[f64], a1: f64, lambda: f64) -> f64 {
    let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for &v in r {
        let e = (lambda * (v - m)).exp();
        num += e * v;
        den += e;
    }
    a1 / lambda + num / den
}

fn derivative_root(r: &[f64], a1: f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    if !(lambda_slope(r, a1, lo) > 0.0 && lambda_slope(r, a1, hi) < 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lambda_slope(r, a1, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= tol * b {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let m = 0.5 * (a + b);
    let fm = f(m);
    [(c, fc), (d, fd), (m, fm)]
        .into_iter()
        .fold((m, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc })
}

/// Chooses `lambda` under the configured rule.
pub fn select_lambda(r: &[f64], params: &HyperParams) -> Result<f64> {
    match params.lambda_rule {
        LambdaRule::Argmax => solve_lambda(r, params),
        LambdaRule::TwoCase => {
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max >= -params.beta * (r.len() as f64).ln() {
                Ok(params.eta)
            } else {
                solve_lambda(r, params)
            }
        }
    }
}

/// `<R, y> + alpha_tilde ln(sum y) - (1 / sum y) sum_k y[k] ln y[k]`.
pub fn lifted_objective(y: &[f64], r: &[f64], alpha_tilde: f64) -> Result<f64> {
    if y.len() != r.len() {
        return Err(Error::Shape(format!(
            "point has {} entries, signal has {}",
            y.len(),
            r.len()
        )));
    }
    if let Some(k) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "lifted point entry {k} is not positive ({})",
            y[k]
        )));
    }
    let mass: f64 = y.iter().sum();
    let linear: f64 = y.iter().zip(r).map(|(a, b)| a * b).sum();
    let ent: f64 = y.iter().map(|&v| v * v.ln()).sum();
    Ok(linear + alpha_tilde * mass.ln() - ent / mass)
}

/// `lambda <R, x> + (alpha_tilde - 1) ln(lambda) - sum_k x[k] ln x[k]`,
/// with `0 ln 0 = 0`.
pub fn split_objective(lambda: f64, x: &[f64], r: &[f64], alpha_tilde: f64) -> f64 {
    let linear: f64 = x.iter().zip(r).map(|(a, b)| a * b).sum();
    let ent: f64 = x
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum();
    lambda * linear + (alpha_tilde - 1.0) * lambda.ln() - ent
}

/// A lifted point that beats the learner's iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub candidate: Vec<f64>,
    pub candidate_value: f64,
    pub incumbent_value: f64,
}

/// Checks that `(lambda, x)` maximizes the lifted objective for signal `r`
/// against `samples` random points of `(0, 1] * simplex` and against
/// `lambda_g * softmax(lambda_g r)` for every grid `lambda_g`.
/// Returns the smallest observed margin `incumbent - candidate`.
pub fn check_lifted_argmax<R: Rng>(
    r: &[f64],
    lambda: f64,
    x: &[f64],
    params: &HyperParams,
    samples: usize,
    rng: &mut R,
) -> std::result::Result<f64, Counterexample> {
    const SLACK: f64 = 1e-8;
    let incumbent = split_objective(lambda, x, r, params.alpha_tilde);
    let mut worst = f64::INFINITY;
    let mut consider = |y: Vec<f64>| -> std::result::Result<(), Counterexample> {
        let Ok(value) = lifted_objective(&y, r, params.alpha_tilde) else {
            return Ok(());
        };
        worst = worst.min(incumbent - value);
        if value > incumbent + SLACK {
            return Err(Counterexample {
                candidate: y,
                candidate_value: value,
                incumbent_value: incumbent,
            });
        }
        Ok(())
    };
    for g in params.lambda_grid() {
        let p = softmax_policy(r, g);
        consider(p.iter().map(|v| g * v).collect())?;
    }
    let d = r.len();
    for _ in 0..samples {
        let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = e.iter().sum();
        let mass = 1.0 - rng.gen::<f64>();
        consider(e.iter().map(|v| mass * v / total).collect())?;
    }
    Ok(worst)
}

/// State of one `(player, stage, state)` learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    /// `U^(t) / w_t`
    scaled_dual: Vec<f64>,
    /// `u^(t-1) / w_{t-1}`
    scaled_correction: Vec<f64>,
    signal: Vec<f64>,
    lambda: f64,
    policy: Vec<f64>,
    round: usize,
    policy_ready: bool,
}

impl LearnerState {
    pub fn new(num_actions: usize, params: &HyperParams) -> Self {
        Self {
            scaled_dual: vec![0.0; num_actions],
            scaled_correction: vec![0.0; num_actions],
            signal: vec![0.0; num_actions],
            lambda: params.lambda_cap,
            policy: vec![1.0 / num_actions as f64; num_actions],
            round: 1,
            policy_ready: false,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.policy.len()
    }

    /// Round whose policy is (or is about to be) played.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn scaled_dual(&self) -> &[f64] {
        &self.scaled_dual
    }

    /// Most recent feedback signal divided by its utility weight.
    pub fn scaled_correction(&self) -> &[f64] {
        &self.scaled_correction
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn policy(&self) -> &[f64] {
        &self.policy
    }

    /// `y = lambda * x`.
    pub fn lifted_point(&self) -> Vec<f64> {
        self.policy.iter().map(|x| self.lambda * x).collect()
    }

    /// `eta * (U^(t) / w_t + u^(t-1) / w_{t-1})`.
    pub fn optimistic_signal(&self, eta: f64) -> Vec<f64> {
        self.scaled_dual
            .iter()
            .zip(&self.scaled_correction)
            .map(|(d, c)| eta * (d + c))
            .collect()
    }

    /// Computes the signal, learning rate and policy for the current round.
    pub fn begin_round(&mut self, params: &HyperParams) -> Result<()> {
        self.signal = self.optimistic_signal(params.eta);
        self.lambda = select_lambda(&self.signal, params)?;
        softmax_into(&self.signal, self.lambda, &mut self.policy);
        self.policy_ready = true;
        Ok(())
    }

    /// Folds the round's utility vector `nu` into the accumulators and
    /// advances to the next round. `v_value` is only read under
    /// [`Baseline::VValue`].
    pub fn commit_feedback(
        &mut self,
        nu: &[f64],
        v_value: f64,
        params: &HyperParams,
        schedule: &WeightSchedule,
    ) -> Result<()> {
        if nu.len() != self.policy.len() {
            return Err(Error::Shape(format!(
                "utility has {} entries, learner has {} actions",
                nu.len(),
                self.policy.len()
            )));
        }
        if !self.policy_ready {
            return Err(Error::InvalidInput(format!(
                "no policy computed for round {}",
                self.round
            )));
        }
        let b = match params.baseline {
            Baseline::ExpectedValue => nu.iter().zip(&self.policy).map(|(a, b)| a * b).sum(),
            Baseline::VValue => v_value,
        };
        let decay = schedule.w_decay(self.round);
        for k in 0..nu.len() {
            let c = nu[k] - b;
            self.scaled_correction[k] = c;
            self.scaled_dual[k] = decay * (self.scaled_dual[k] + c);
        }
        self.round += 1;
        self.policy_ready = false;
        Ok(())
    }

    /// Checks the current iterate with [`check_lifted_argmax`].
    pub fn verify_lifted_argmax<R: Rng>(
        &self,
        params: &HyperParams,
        samples: usize,
        rng: &mut R,
    ) -> std::result::Result<f64, Counterexample> {
        check_lifted_argmax(&self.signal, self.lambda, &self.policy, params, samples, rng)
    }

    #[cfg(test)]
    pub(crate) fn set_lambda_for_test(&mut self, lambda: f64) {
        self.lambda = lambda;
    }
}
