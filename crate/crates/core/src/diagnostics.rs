//! Runtime checks of the identities and inequalities the algorithm relies
//! on, evaluated on recorded runs. Every check reports its worst slack
//! (`bound - observed`, negative when violated).
//!
//! Quantities carrying a utility weight `w_t` are evaluated after dividing by
//! a common weight, so only ratios `w_t / w_T <= 1` ever appear.

use num_rational::Ratio;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dlrc::{check_lifted_argmax, lifted_objective, solve_lambda, split_objective, Baseline};
use crate::game::MarkovGame;
use crate::schedule::WeightSchedule;
use crate::trainer::{History, RunConfig, RunResult};
use crate::value::{q_backward_pass, v_backward_pass, PolicyProfile, QTables, ValueTables};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub cells_checked: usize,
    pub worst_slack: f64,
    pub pass: bool,
    /// Informational checks never fail a verification.
    pub hard: bool,
}

impl CheckReport {
    fn new(name: &str, cells: usize, worst_slack: f64, tolerance: f64, hard: bool) -> Self {
        let worst_slack = if cells == 0 { 0.0 } else { worst_slack };
        Self {
            check_name: name.to_string(),
            cells_checked: cells,
            worst_slack,
            pass: worst_slack >= -tolerance,
            hard,
        }
    }
}

/// True when every hard check passed.
pub fn all_hard_pass(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.pass || !r.hard)
}

fn slack_min(a: f64, b: f64) -> f64 {
    a.min(b)
}

fn sup_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Numeric checks of the averaging coefficients for each horizon and every
/// `t <= t_max`, evaluated by the product recursion.
pub fn weight_suite(horizons: &[usize], t_max: usize) -> Vec<CheckReport> {
    let mut sum_one = f64::INFINITY;
    let mut monotone = f64::INFINITY;
    let mut squares = f64::INFINITY;
    let mut decreasing_avg = f64::INFINITY;
    let mut first = f64::INFINITY;
    let mut harmonic = f64::INFINITY;
    let mut step_sq = f64::INFINITY;
    let mut ratio = f64::INFINITY;
    let mut exact = f64::INFINITY;
    let mut count = 0;
    let mut prof = Vec::with_capacity(t_max);
    for &h in horizons {
        let sched = WeightSchedule::new(h, 1.0).expect("positive horizon");
        let hf = h as f64;
        // running sum of alpha_j^2 for item 3
        let mut step_sq_sum = 0.0;
        let mut inv_sqrt_sum = 0.0;
        for t in 1..=t_max {
            count += 1;
            let tf = t as f64;
            let a_t = sched.step(t);
            step_sq_sum += a_t * a_t;
            inv_sqrt_sum += 1.0 / tf.sqrt();
            prof.clear();
            prof.resize(t, 0.0);
            let mut tail = 1.0;
            for j in (1..=t).rev() {
                let a = sched.step(j);
                prof[j - 1] = a * tail;
                tail *= 1.0 - a;
            }
            let (mut s, mut sq, mut avg, mut harm, mut st) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (k, &p) in prof.iter().enumerate() {
                let j = (k + 1) as f64;
                let a_j = sched.step(k + 1);
                s += p;
                sq += p * p;
                avg += p / j.sqrt();
                harm += p / j;
                st += p * a_j * a_j;
            }
            for w in prof.windows(2) {
                monotone = monotone.min(w[1] - w[0]);
            }
            sum_one = sum_one.min(1e-12 - (s - 1.0).abs());
            squares = squares.min((step_sq_sum - sq).min(hf + 2.0 - step_sq_sum));
            decreasing_avg = decreasing_avg.min(inv_sqrt_sum / tf - avg);
            first = first.min(1.0 / tf - prof[0]);
            harmonic = harmonic.min((1.0 + 1.0 / hf) / tf - harm);
            step_sq = step_sq.min(3.0 * hf / tf - st);
            if t <= 2000 {
                let r = prof[t - 1] / prof[0];
                ratio = ratio.min(1e-10 - (r / sched.w(t) - 1.0).abs());
            }
        }
        // w_t = alpha_t^t / alpha_t^1 in exact rationals against the binomial
        for t in 1..=t_max.min(50) {
            let alpha = |k: usize| Ratio::new((h + 1) as u128, (h + k) as u128);
            let mut a1 = alpha(1);
            for k in 2..=t {
                a1 *= Ratio::from_integer(1) - alpha(k);
            }
            let w = alpha(t) / a1;
            let ok = w.is_integer() && Some(w.to_integer()) == sched.w_exact(t);
            exact = exact.min(if ok { 0.0 } else { -1.0 });
        }
    }
    vec![
        CheckReport::new("weights.sum_to_one", count, sum_one, 0.0, true),
        CheckReport::new("weights.nondecreasing", count, monotone, 0.0, true),
        CheckReport::new("weights.sum_of_squares", count, squares, 0.0, true),
        CheckReport::new("weights.decreasing_sequence_average", count, decreasing_avg, 1e-15, true),
        CheckReport::new("weights.first_coefficient", count, first, 1e-15, true),
        CheckReport::new("weights.harmonic_sum", count, harmonic, 1e-15, true),
        CheckReport::new("weights.step_squared_sum", count, step_sq, 1e-15, true),
        CheckReport::new("weights.ratio_closed_form", count, ratio, 0.0, true),
        CheckReport::new("weights.exact_integer", count, exact, 0.0, true),
    ]
}

/// `|lifted(lambda x) - split(lambda, x)|` over random tuples; slack is
/// `1e-10` minus the worst difference.
pub fn lifted_identity_check<R: Rng>(tuples: usize, rng: &mut R) -> CheckReport {
    let mut worst: f64 = 0.0;
    for _ in 0..tuples {
        let d = rng.gen_range(2..=6);
        let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-9).collect();
        let total: f64 = e.iter().sum();
        let x: Vec<f64> = e.iter().map(|v| v / total).collect();
        let lambda = rng.gen_range(1e-3..=1.0);
        let r: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let alpha_tilde = rng.gen_range(2.0..200.0);
        let y: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        let lifted = lifted_objective(&y, &r, alpha_tilde).expect("positive point");
        let split = split_objective(lambda, &x, &r, alpha_tilde);
        worst = worst.max((lifted - split).abs());
    }
    CheckReport::new("lifted.identity", tuples, 1e-10 - worst, 0.0, true)
}

/// Re-checks the solved `(lambda, x)` of every cell in `rounds` randomly
/// chosen recorded rounds against `candidates` lifted points each.
pub fn lifted_argmax_check<R: Rng>(
    history: &History,
    config: &RunConfig,
    rounds: usize,
    candidates: usize,
    rng: &mut R,
) -> CheckReport {
    let total = history.rounds();
    let picked = sample(rng, total, rounds.min(total)).into_vec();
    let mut worst = f64::INFINITY;
    let mut cells = 0;
    for k in picked {
        let p = &history.profiles[k];
        for (c, (i, h, s)) in p.cells().enumerate() {
            cells += 1;
            let r = history.signals[k].get(i, h, s);
            let lambda = history.lambdas[k][c];
            let slack = match check_lifted_argmax(
                r,
                lambda,
                p.get(i, h, s),
                &config.hyperparams,
                candidates,
                rng,
            ) {
                Ok(margin) => margin,
                Err(ce) => ce.incumbent_value - ce.candidate_value,
            };
            worst = worst.min(slack);
        }
    }
    CheckReport::new("lifted.argmax", cells, worst, 1e-8, true)
}

/// Runs the V and Q passes on the same policy stream and returns
/// `max |Q^t(s, a) - r(s, a) - [P V^t_{h+1}](s, a)|` over every round and
/// cell.
pub fn qv_identity(
    game: &MarkovGame,
    profiles: &[PolicyProfile],
    schedule: &WeightSchedule,
) -> Result<f64> {
    let mut v = ValueTables::zeros(game);
    let mut q = QTables::zeros(game);
    let mut worst: f64 = 0.0;
    for (k, p) in profiles.iter().enumerate() {
        let a = schedule.alpha(k + 1)?;
        v = v_backward_pass(game, p, &v, a)?;
        q = q_backward_pass(game, p, &q, a)?;
        for i in 0..game.num_players() {
            for h in 0..game.horizon() {
                for s in 0..game.num_states() {
                    let rewards = game.reward_row(i, h, s);
                    let row = q.row(i, h, s);
                    for joint in 0..game.num_joint_actions() {
                        let expect = rewards[joint] + game.continuation(h, s, joint, v.stage(i, h + 1));
                        worst = worst.max((row[joint] - expect).abs());
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Slack of `|u_t - u_prev|_inf^2 <= 6 |nu_t - nu_prev|_inf^2 + 4 H^2 |x_t - x_prev|_1^2`
/// with `u` given divided by its utility weight.
pub fn gap_signal_deviation(
    u_t: &[f64],
    u_prev: &[f64],
    nu_t: &[f64],
    nu_prev: &[f64],
    x_t: &[f64],
    x_prev: &[f64],
    horizon: usize,
) -> f64 {
    let lhs = sup_norm(u_t.iter().zip(u_prev).map(|(a, b)| a - b)).powi(2);
    let dnu = sup_norm(nu_t.iter().zip(nu_prev).map(|(a, b)| a - b));
    let dx = l1_dist(x_t, x_prev);
    let h = horizon as f64;
    6.0 * dnu * dnu + 4.0 * h * h * dx * dx - lhs
}

/// Per-cell terms of the regret bound at the last recorded round `T`, all
/// divided by `w_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvuCell {
    pub player: usize,
    pub stage: usize,
    pub state: usize,
    pub lifted_regret: f64,
    /// `2 |u^(T)|_inf`
    pub term_a: f64,
    /// `max_t 2 |u^(t)|_inf`
    pub term_a_max: f64,
    /// `(alpha_tilde ln T + 2 ln A_max) / eta_{T+1}`
    pub term_b: f64,
    /// `sum_t eta_t |u^(t) - kappa_t u^(t-1)|_inf^2`
    pub term_c: f64,
    /// `(1/20) sum_{t<T} |x^(t+1) - x^(t)|_1^2 / eta_t`
    pub term_d: f64,
}

impl RvuCell {
    pub fn slack(&self) -> f64 {
        self.term_a + self.term_b + self.term_c - self.term_d - self.lifted_regret
    }

    pub fn slack_conservative(&self) -> f64 {
        self.term_a_max + self.term_b + self.term_c - self.term_d - self.lifted_regret
    }
}

fn check_history(game: &MarkovGame, history: &History) -> Result<usize> {
    let t = history.rounds();
    if t == 0 {
        return Err(Error::MissingHistory);
    }
    let n = [
        history.lambdas.len(),
        history.signals.len(),
        history.feedback.len(),
        history.utilities.len(),
    ];
    if n.iter().any(|&k| k != t) || history.profiles.iter().any(|p| !p.matches(game)) {
        return Err(Error::Shape("history tables disagree".into()));
    }
    Ok(t)
}

/// Builds the regret-bound ledger of every cell from a recorded history.
pub fn rvu_ledger(game: &MarkovGame, config: &RunConfig, history: &History) -> Result<Vec<RvuCell>> {
    let t_end = check_history(game, history)?;
    let params = &config.hyperparams;
    let sched = WeightSchedule::new(game.horizon(), params.eta)?;
    // ratio[t - 1] = w_t / w_T
    let mut ratio = vec![1.0; t_end];
    for t in (1..t_end).rev() {
        ratio[t - 1] = ratio[t] * sched.w_decay(t);
    }
    let tf = t_end as f64;
    let a_max = game.max_actions() as f64;
    // eta_{T+1} = eta / w_{T+1} and w_{T+1} / w_T = (H + T) / T
    let term_b = (params.alpha_tilde * tf.ln() + 2.0 * a_max.ln()) / params.eta
        * ((game.horizon() + t_end) as f64 / tf);
    let cells: Vec<_> = history.profiles[0].cells().collect();
    let mut out = Vec::with_capacity(cells.len());
    for (c, &(i, h, s)) in cells.iter().enumerate() {
        let d = game.action_counts()[i];
        let mut sum_u = vec![0.0; d];
        let mut played = 0.0;
        let mut term_a_max: f64 = 0.0;
        let mut term_c = 0.0;
        let mut term_d = 0.0;
        for k in 0..t_end {
            let r = ratio[k];
            let u = history.feedback[k].get(i, h, s);
            let x = history.profiles[k].get(i, h, s);
            let lambda = history.lambdas[k][c];
            for (acc, &v) in sum_u.iter_mut().zip(u) {
                *acc += r * v;
            }
            played += r * lambda * u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            term_a_max = term_a_max.max(2.0 * r * sup_norm(u.iter().copied()));
            let du = if k == 0 {
                sup_norm(u.iter().copied())
            } else {
                let prev = history.feedback[k - 1].get(i, h, s);
                sup_norm(u.iter().zip(prev).map(|(a, b)| a - b))
            };
            term_c += params.eta * r * du * du;
            if k + 1 < t_end {
                let dx = l1_dist(history.profiles[k + 1].get(i, h, s), x);
                term_d += r * dx * dx / (20.0 * params.eta);
            }
        }
        let best = sum_u.iter().copied().fold(0.0, f64::max);
        let last = history.feedback[t_end - 1].get(i, h, s);
        out.push(RvuCell {
            player: i,
            stage: h,
            state: s,
            lifted_regret: best - played,
            term_a: 2.0 * sup_norm(last.iter().copied()),
            term_a_max,
            term_b,
            term_c,
            term_d,
        });
    }
    Ok(out)
}

/// Checks the per-step signal bound at every recorded round and cell.
pub fn signal_deviation_check(game: &MarkovGame, history: &History, hard: bool) -> Result<CheckReport> {
    let t_end = check_history(game, history)?;
    let cells: Vec<_> = history.profiles[0].cells().collect();
    let mut worst = f64::INFINITY;
    for &(i, h, s) in &cells {
        let d = game.action_counts()[i];
        let zeros = vec![0.0; d];
        for k in 0..t_end {
            let (u_prev, nu_prev, x_prev) = if k == 0 {
                (&zeros[..], &zeros[..], history.profiles[0].get(i, h, s))
            } else {
                (
                    history.feedback[k - 1].get(i, h, s),
                    history.utilities[k - 1].get(i, h, s),
                    history.profiles[k - 1].get(i, h, s),
                )
            };
            let slack = gap_signal_deviation(
                history.feedback[k].get(i, h, s),
                u_prev,
                history.utilities[k].get(i, h, s),
                nu_prev,
                history.profiles[k].get(i, h, s),
                x_prev,
                game.horizon(),
            );
            worst = worst.min(slack);
        }
    }
    Ok(CheckReport::new("signal_deviation", cells.len() * t_end, worst, 1e-9, hard))
}

/// Lifted regret against its two other routes, on the scale of the
/// weighted regret `reg^T` (everything multiplied by `alpha_T^1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonnegativeRegret {
    /// `min alpha_T^1 * lifted regret`
    pub worst_nonnegative: f64,
    /// `min (alpha_T^1 * lifted - reg^T)`
    pub worst_dominance: f64,
    /// `max |alpha_T^1 * lifted - max(0, alpha_T^1 * Reg(T))|`
    pub worst_equality: f64,
    pub cells: usize,
}

pub fn nonnegative_regret(
    game: &MarkovGame,
    config: &RunConfig,
    history: &History,
    result: &RunResult,
) -> Result<NonnegativeRegret> {
    let t_end = check_history(game, history)?;
    let sched = WeightSchedule::new(game.horizon(), config.hyperparams.eta)?;
    let weights = sched.alpha_profile(t_end)?;
    let cells: Vec<_> = history.profiles[0].cells().collect();
    let mut out = NonnegativeRegret {
        worst_nonnegative: f64::INFINITY,
        worst_dominance: f64::INFINITY,
        worst_equality: 0.0,
        cells: cells.len(),
    };
    for (c, &(i, h, s)) in cells.iter().enumerate() {
        let d = game.action_counts()[i];
        let mut lifted_sum = vec![0.0; d];
        let mut played = 0.0;
        let mut external = vec![0.0; d];
        for (k, &a) in weights.iter().enumerate() {
            let u = history.feedback[k].get(i, h, s);
            let x = history.profiles[k].get(i, h, s);
            let nu = history.utilities[k].get(i, h, s);
            let lambda = history.lambdas[k][c];
            for (acc, &v) in lifted_sum.iter_mut().zip(u) {
                *acc += a * v;
            }
            played += a * lambda * u.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
            let mean: f64 = nu.iter().zip(x).map(|(p, q)| p * q).sum();
            for (acc, &v) in external.iter_mut().zip(nu) {
                *acc += a * (v - mean);
            }
        }
        let lifted = lifted_sum.iter().copied().fold(0.0, f64::max) - played;
        let reg_route = external.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let reg_state = result.regrets.regret(i, h, s);
        out.worst_nonnegative = out.worst_nonnegative.min(lifted);
        out.worst_dominance = out.worst_dominance.min(lifted - reg_state);
        out.worst_equality = out.worst_equality.max((lifted - reg_route.max(0.0)).abs());
    }
    Ok(out)
}

/// Solved-`lambda` ratio statistics under sup-norm perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityStats {
    pub samples: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl SensitivityStats {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.min_ratio >= lo && self.max_ratio <= hi
    }
}

/// `lambda(R) / lambda(R + delta)` for `perturbations` draws of `delta`
/// uniform on `[-radius, radius]^d`.
pub fn sensitivity_probe<R: Rng>(
    r: &[f64],
    params: &crate::dlrc::HyperParams,
    radius: f64,
    perturbations: usize,
    rng: &mut R,
) -> Result<SensitivityStats> {
    let base = solve_lambda(r, params)?;
    let mut stats = SensitivityStats {
        samples: perturbations,
        min_ratio: 1.0,
        max_ratio: 1.0,
    };
    let mut shifted = r.to_vec();
    for _ in 0..perturbations {
        for (v, &orig) in shifted.iter_mut().zip(r) {
            *v = orig + if radius > 0.0 { rng.gen_range(-radius..=radius) } else { 0.0 };
        }
        let ratio = base / solve_lambda(&shifted, params)?;
        stats.min_ratio = stats.min_ratio.min(ratio);
        stats.max_ratio = stats.max_ratio.max(ratio);
    }
    Ok(stats)
}

/// `min(H, 864 H^{7/2} N (alpha_tilde ln T + 2 ln A_max + 2) / T)`.
pub fn gap_envelope(game: &MarkovGame, alpha_tilde: f64, round: usize) -> f64 {
    let h = game.horizon() as f64;
    let t = round as f64;
    let rate = 864.0 * h.powf(3.5) * game.num_players() as f64
        * (alpha_tilde * t.ln() + 2.0 * (game.max_actions() as f64).ln() + 2.0)
        / t;
    h.min(rate)
}

/// Runs every check on a finished run with recorded history.
pub fn verify_run(
    game: &MarkovGame,
    config: &RunConfig,
    result: &RunResult,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    let history = result.history.as_ref().ok_or(Error::MissingHistory)?;
    let t_end = check_history(game, history)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let expected = config.hyperparams.baseline == Baseline::ExpectedValue;
    let sched = WeightSchedule::new(game.horizon(), config.hyperparams.eta)?;
    let mut reports = weight_suite(&[1, 2, 3, 5], 2000);
    reports.push(lifted_identity_check(1000, &mut rng));
    reports.push(lifted_argmax_check(history, config, 20, 100, &mut rng));

    let qv = qv_identity(game, &history.profiles, &sched)?;
    reports.push(CheckReport::new("qv_identity", t_end, 1e-9 - qv, 0.0, true));

    let cells = history.profiles[0].cells().count();
    let nn = nonnegative_regret(game, config, history, result)?;
    reports.push(CheckReport::new("regret.lifted_nonnegative", cells, nn.worst_nonnegative, 1e-9, expected));
    reports.push(CheckReport::new("regret.lifted_dominates", cells, nn.worst_dominance, 1e-6, expected));
    reports.push(CheckReport::new("regret.lifted_equals_clamped", cells, 1e-6 - nn.worst_equality, 0.0, expected));

    let ledger = rvu_ledger(game, config, history)?;
    let rvu = ledger.iter().map(RvuCell::slack).fold(f64::INFINITY, slack_min);
    let rvu_cons = ledger.iter().map(RvuCell::slack_conservative).fold(f64::INFINITY, slack_min);
    reports.push(CheckReport::new("rvu.final_round", ledger.len(), rvu, 1e-6, true));
    reports.push(CheckReport::new("rvu.max_over_rounds", ledger.len(), rvu_cons, 1e-6, true));
    reports.push(signal_deviation_check(game, history, expected)?);

    reports.push(CheckReport::new(
        "gap.recursion",
        result.recursion.checks(),
        result.recursion.worst_slack(),
        1e-9,
        true,
    ));
    let v = &result.values;
    let br = result.best_response.values();
    let mut dominance = f64::INFINITY;
    for i in 0..game.num_players() {
        for h in 0..game.horizon() {
            for s in 0..game.num_states() {
                dominance = dominance.min(br.get(i, h, s) - v.get(i, h, s));
            }
        }
    }
    reports.push(CheckReport::new("best_response.dominates", cells, dominance, 1e-9, true));
    let hz = game.horizon() as f64;
    let range = result
        .metrics
        .iter()
        .map(|m| m.gap_raw.min(hz - m.gap_raw))
        .fold(f64::INFINITY, slack_min);
    reports.push(CheckReport::new("gap.range", result.metrics.len(), range, 1e-9, true));
    let envelope = result
        .metrics
        .iter()
        .map(|m| gap_envelope(game, config.hyperparams.alpha_tilde, m.round) - m.gap_raw)
        .fold(f64::INFINITY, slack_min);
    reports.push(CheckReport::new("gap.envelope", result.metrics.len(), envelope, 0.0, true));

    let radius = 2.0 * hz * config.hyperparams.eta;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let picks = sample(&mut rng, t_end, t_end.min(10)).into_vec();
    let mut probed = 0;
    for k in picks {
        for (i, h, s) in history.profiles[k].cells() {
            let st = sensitivity_probe(history.signals[k].get(i, h, s), &config.hyperparams, radius, 10, &mut rng)?;
            lo = lo.min(st.min_ratio);
            hi = hi.max(st.max_ratio);
            probed += st.samples;
        }
    }
    // informational: distance to the [0.7, 1.4] band
    reports.push(CheckReport::new("sensitivity.lambda_ratio", probed, (lo - 0.7).min(1.4 - hi), 0.0, false));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlrc::HyperParams;
    use crate::game::{generate_dense_game, generate_random_game};
    use crate::trainer::{RunConfig, Trainer};

    fn recorded(cfg: RunConfig) -> (MarkovGame, RunConfig, RunResult) {
        let t = Trainer::new(RunConfig {
            record_history: true,
            ..cfg
        })
        .unwrap();
        let game = t.game().clone();
        let cfg = t.config().clone();
        (game, cfg, t.run().unwrap())
    }

    #[test]
    fn weight_suite_passes() {
        for r in weight_suite(&[1, 2, 3, 5], 300) {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn weight_suite_catches_wrong_closed_form() {
        let sched = WeightSchedule::new(2, 1.0).unwrap();
        // a closed form off by one in the horizon is detected by the ratio check
        let p = sched.alpha_profile(10).unwrap();
        let wrong = WeightSchedule::new(3, 1.0).unwrap().w(10);
        assert!((p[9] / p[0] / wrong - 1.0).abs() > 1e-3);
    }

    #[test]
    fn identical_rounds_give_zero_deviation() {
        let u = [0.2, -0.2];
        let nu = [0.7, 0.3];
        let x = [0.5, 0.5];
        assert_eq!(gap_signal_deviation(&u, &u, &nu, &nu, &x, &x, 2), 0.0);
    }

    #[test]
    fn first_round_deviation_convention() {
        let nu = [1.5, 0.25];
        let x = [0.4, 0.6];
        let mean = 1.5 * 0.4 + 0.25 * 0.6;
        let u = [1.5 - mean, 0.25 - mean];
        assert!(gap_signal_deviation(&u, &[0.0; 2], &nu, &[0.0; 2], &x, &x, 2) >= 0.0);
    }

    #[test]
    fn sensitivity_trivial_cases() {
        let params = HyperParams::theoretical(2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let st = sensitivity_probe(&[0.1, -0.3], &params, 0.0, 5, &mut rng).unwrap();
        assert_eq!((st.min_ratio, st.max_ratio), (1.0, 1.0));
        // zero signal perturbed upward keeps both solutions at the cap
        let radius = 2.0 * 2.0 * params.eta;
        let st = sensitivity_probe(&[radius, radius], &params, radius, 50, &mut rng).unwrap();
        assert_eq!((st.min_ratio, st.max_ratio), (1.0, 1.0));
    }

    #[test]
    fn qv_identity_on_random_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let game = generate_dense_game(1, &[2, 3, 2], 3, 3).unwrap();
        let sched = WeightSchedule::new(3, 1.0).unwrap();
        let profiles: Vec<_> = (0..60)
            .map(|_| {
                let mut p = PolicyProfile::uniform(&game);
                for (i, h, s) in p.cells().collect::<Vec<_>>() {
                    let v = p.get_mut(i, h, s);
                    v.iter_mut().for_each(|x| *x = rng.gen::<f64>());
                    let t: f64 = v.iter().sum();
                    v.iter_mut().for_each(|x| *x /= t);
                }
                p
            })
            .collect();
        assert!(qv_identity(&game, &profiles, &sched).unwrap() <= 1e-9);
    }

    #[test]
    fn single_round_bound() {
        let (game, cfg, res) = recorded(RunConfig::paper(0, 1));
        let ledger = rvu_ledger(&game, &cfg, res.history.as_ref().unwrap()).unwrap();
        for c in &ledger {
            // ln 1 = 0 leaves only the action term in term_b
            let expect = 2.0 * 2f64.ln() / cfg.hyperparams.eta * (game.horizon() + 1) as f64;
            assert!((c.term_b - expect).abs() < 1e-9 * expect);
            assert_eq!(c.term_d, 0.0);
            assert!(c.lifted_regret <= c.term_a + c.term_b);
        }
    }

    #[test]
    fn zero_reward_terms_vanish() {
        let g = generate_random_game(0, 2, 2, 2, 2, 0.8).unwrap();
        let game = MarkovGame::from_flat(
            &[2, 2],
            2,
            2,
            0,
            vec![0.0; g.rewards_flat().len()],
            g.transitions_flat().to_vec(),
        )
        .unwrap();
        let cfg = RunConfig {
            record_history: true,
            ..RunConfig::paper(0, 30)
        };
        let res = Trainer::with_game(game.clone(), cfg.clone()).unwrap().run().unwrap();
        for c in rvu_ledger(&game, &cfg, res.history.as_ref().unwrap()).unwrap() {
            assert_eq!((c.lifted_regret, c.term_a, c.term_c, c.term_d), (0.0, 0.0, 0.0, 0.0));
            assert!(c.slack() > 0.0);
        }
    }

    #[test]
    fn verify_passes_on_paper_preset() {
        let (game, cfg, res) = recorded(RunConfig::paper(1, 200));
        let reports = verify_run(&game, &cfg, &res, 0).unwrap();
        for r in &reports {
            assert!(r.pass || !r.hard, "{r:?}");
        }
        assert!(all_hard_pass(&reports));
    }

    #[test]
    fn verify_requires_history() {
        let t = Trainer::new(RunConfig::paper(1, 5)).unwrap();
        let game = t.game().clone();
        let cfg = t.config().clone();
        let res = t.run().unwrap();
        assert!(matches!(verify_run(&game, &cfg, &res, 0), Err(Error::MissingHistory)));
    }

    #[test]
    fn nonnegative_regret_routes_agree() {
        for seed in 0..3 {
            let (game, cfg, res) = recorded(RunConfig::paper(seed, 150));
            let nn = nonnegative_regret(&game, &cfg, res.history.as_ref().unwrap(), &res).unwrap();
            assert!(nn.worst_nonnegative >= -1e-9);
            assert!(nn.worst_dominance >= -1e-6);
            assert!(nn.worst_equality <= 1e-6);
        }
    }

    #[test]
    fn tampered_history_is_caught() {
        let (game, cfg, mut res) = recorded(RunConfig::paper(2, 50));
        let hist = res.history.as_mut().unwrap();
        // play a different policy than the one whose feedback was recorded
        hist.profiles[20].get_mut(0, 0, 0).copy_from_slice(&[1.0, 0.0]);
        hist.lambdas[20][0] = 1e-6;
        let nn = nonnegative_regret(&game, &cfg, res.history.as_ref().unwrap(), &res).unwrap();
        assert!(nn.worst_equality > 1e-6 || nn.worst_dominance < -1e-6);
    }
}
