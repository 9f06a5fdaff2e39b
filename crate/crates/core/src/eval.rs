//! Exact evaluation of the averaged policy.
//!
//! The averaged policy at round `t` draws `j` with probability `alpha_t^j`,
//! plays round `j`'s joint policy at the current stage and continues with the
//! averaged policy of round `j`. Its value equals the learner's averaged
//! `V^(t)`, and a unilateral deviator's best value follows the stagewise
//! recursion
//!
//! `V+^(t)_h(s) = max_{a_i} sum_j alpha_t^j <(r_h + P_h V+^(j)_{h+1})(s, a_i, .), pi^(j)_{-i,h}(.|s)>`,
//!
//! which has the same `(1 - alpha_t)` telescoping as the value update and is
//! maintained in O(1) per round and cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::game::MarkovGame;
use crate::schedule::WeightSchedule;
use crate::value::{CellVectors, PolicyProfile, ValueTables};
use crate::{Error, Result};

/// Best-response accumulators: `M[i][h][s][a_i]` and `V+ = max_a M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseState {
    accum: CellVectors,
    values: ValueTables,
}

impl BestResponseState {
    pub fn new(game: &MarkovGame) -> Self {
        Self {
            accum: CellVectors::zeros(game),
            values: ValueTables::zeros(game),
        }
    }

    pub fn values(&self) -> &ValueTables {
        &self.values
    }

    pub fn accumulators(&self) -> &CellVectors {
        &self.accum
    }

    /// Folds round `t`'s joint policy in with step `alpha = alpha_t`.
    pub fn round_update(
        &mut self,
        game: &MarkovGame,
        profile: &PolicyProfile,
        alpha: f64,
    ) -> Result<()> {
        if !profile.matches(game) || !self.values.matches(game) {
            return Err(Error::Shape("best-response state does not match the game".into()));
        }
        let mut buf = vec![0.0; game.max_actions()];
        for h in (0..game.horizon()).rev() {
            for s in 0..game.num_states() {
                let local = profile.at(h, s);
                for i in 0..game.num_players() {
                    let d = game.action_counts()[i];
                    let nu = &mut buf[..d];
                    game.marginal_utility_into(i, h, s, self.values.stage(i, h + 1), &local, nu);
                    let m = self.accum.get_mut(i, h, s);
                    let mut best = f64::NEG_INFINITY;
                    for (acc, &u) in m.iter_mut().zip(nu.iter()) {
                        *acc = (1.0 - alpha) * *acc + alpha * u;
                        best = best.max(*acc);
                    }
                    self.values.set(i, h, s, best);
                }
            }
        }
        Ok(())
    }
}

/// Weighted external regret accumulators `G[i][h][s][a_i]` and
/// `reg = max_a G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretState {
    accum: CellVectors,
    regrets: ValueTables,
}

impl RegretState {
    pub fn new(game: &MarkovGame) -> Self {
        Self {
            accum: CellVectors::zeros(game),
            regrets: ValueTables::zeros(game),
        }
    }

    /// `reg^t_{i,h}(s)`; may be negative.
    pub fn regret(&self, player: usize, stage: usize, state: usize) -> f64 {
        self.regrets.get(player, stage, state)
    }

    pub fn regrets(&self) -> &ValueTables {
        &self.regrets
    }

    pub fn accumulators(&self) -> &CellVectors {
        &self.accum
    }

    /// `G = (1 - alpha) G + alpha (nu - <nu, x> 1)`.
    pub fn round_update(&mut self, utilities: &CellVectors, profile: &PolicyProfile, alpha: f64) {
        let cells: Vec<_> = profile.cells().collect();
        for (i, h, s) in cells {
            let nu = utilities.get(i, h, s);
            let x = profile.get(i, h, s);
            let mean: f64 = nu.iter().zip(x).map(|(a, b)| a * b).sum();
            let g = self.accum.get_mut(i, h, s);
            let mut best = f64::NEG_INFINITY;
            for (acc, &u) in g.iter_mut().zip(nu) {
                *acc = (1.0 - alpha) * *acc + alpha * (u - mean);
                best = best.max(*acc);
            }
            self.regrets.set(i, h, s, best);
        }
    }

    /// `max_{i, s} reg^t_{i,h}(s)` for each stage.
    pub fn max_by_stage(&self) -> Vec<f64> {
        let (n, hz, ns) = (
            self.regrets.num_players(),
            self.regrets.horizon(),
            self.regrets.num_states(),
        );
        (0..hz)
            .map(|h| {
                (0..n)
                    .flat_map(|i| (0..ns).map(move |s| (i, s)))
                    .map(|(i, s)| self.regrets.get(i, h, s))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub raw: f64,
    pub clamped: f64,
}

/// `max_i V+_{i,1}(s_1) - V_{i,1}(s_1)`.
pub fn cce_gap(br: &BestResponseState, values: &ValueTables, initial_state: usize) -> GapReport {
    let raw = (0..values.num_players())
        .map(|i| br.values.get(i, 0, initial_state) - values.get(i, 0, initial_state))
        .fold(f64::NEG_INFINITY, f64::max);
    GapReport {
        raw,
        clamped: raw.max(0.0),
    }
}

/// `delta_h = max_{s, i} (V+_{i,h}(s) - V_{i,h}(s))` for stages `0..=H`; the
/// entry past the horizon is zero.
pub fn gap_stage_profile(br: &BestResponseState, values: &ValueTables) -> Vec<f64> {
    let (n, hz, ns) = (values.num_players(), values.horizon(), values.num_states());
    let mut out: Vec<f64> = (0..hz)
        .map(|h| {
            (0..n)
                .flat_map(|i| (0..ns).map(move |s| (i, s)))
                .map(|(i, s)| br.values.get(i, h, s) - values.get(i, h, s))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    out.push(0.0);
    out
}

/// Tracks `sum_j alpha_t^j delta^j_{h+1}` incrementally and checks
/// `delta^t_h <= sum_j alpha_t^j delta^j_{h+1} + max_{s,i} reg^t_{i,h}(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecursionMonitor {
    averaged_next: Vec<f64>,
    worst_slack: Option<f64>,
    checks: usize,
}

impl GapRecursionMonitor {
    pub fn new(horizon: usize) -> Self {
        Self {
            averaged_next: vec![0.0; horizon],
            worst_slack: None,
            checks: 0,
        }
    }

    /// `deltas` from [`gap_stage_profile`] (length `H + 1`) and
    /// `max_regret` from [`RegretState::max_by_stage`]. Returns the smallest
    /// slack of this round.
    pub fn observe(&mut self, deltas: &[f64], max_regret: &[f64], alpha: f64) -> f64 {
        let mut round_worst = f64::INFINITY;
        for h in 0..self.averaged_next.len() {
            let avg = &mut self.averaged_next[h];
            *avg = (1.0 - alpha) * *avg + alpha * deltas[h + 1];
            let slack = *avg + max_regret[h] - deltas[h];
            round_worst = round_worst.min(slack);
        }
        self.worst_slack = Some(self.worst_slack.map_or(round_worst, |w| w.min(round_worst)));
        self.checks += self.averaged_next.len();
        round_worst
    }

    /// Smallest slack seen so far; infinite before the first round.
    pub fn worst_slack(&self) -> f64 {
        self.worst_slack.unwrap_or(f64::INFINITY)
    }

    pub fn checks(&self) -> usize {
        self.checks
    }
}

/// One episode of the averaged policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub returns: Vec<f64>,
    pub states: Vec<usize>,
    pub joint_actions: Vec<usize>,
    /// Round index drawn at each stage (1-based).
    pub rounds: Vec<usize>,
}

fn sample_categorical(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap at the top; take the last supported entry
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// Plays one episode of the averaged policy over `history` (round `j` at
/// index `j - 1`). At the first stage a round is drawn from
/// `alpha_T^{1..T}`; at later stages from `alpha_b^{1..b}` where `b` is the
/// previously drawn round.
pub fn rollout_sample<R: Rng>(
    game: &MarkovGame,
    history: &[PolicyProfile],
    schedule: &WeightSchedule,
    rng: &mut R,
) -> Result<Episode> {
    if history.is_empty() {
        return Err(Error::MissingHistory);
    }
    if history.iter().any(|p| !p.matches(game)) {
        return Err(Error::Shape("history does not match the game".into()));
    }
    let n = game.num_players();
    let mut ep = Episode {
        returns: vec![0.0; n],
        states: Vec::with_capacity(game.horizon()),
        joint_actions: Vec::with_capacity(game.horizon()),
        rounds: Vec::with_capacity(game.horizon()),
    };
    let mut bound = history.len();
    let mut state = game.initial_state();
    let mut actions = vec![0; n];
    for h in 0..game.horizon() {
        let j = schedule.sample_index(bound, rng.gen::<f64>());
        let profile = &history[j - 1];
        for (i, a) in actions.iter_mut().enumerate() {
            *a = sample_categorical(profile.get(i, h, state), rng.gen::<f64>());
        }
        let joint = game.joint().encode(&actions)?;
        for (i, ret) in ep.returns.iter_mut().enumerate() {
            *ret += game.reward(i, h, state, joint);
        }
        ep.states.push(state);
        ep.joint_actions.push(joint);
        ep.rounds.push(j);
        state = sample_categorical(game.transition(h, state, joint), rng.gen::<f64>());
        bound = j;
    }
    Ok(ep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub episodes: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Monte-Carlo mean return per player with standard errors.
pub fn rollout_estimate<R: Rng>(
    game: &MarkovGame,
    history: &[PolicyProfile],
    schedule: &WeightSchedule,
    episodes: usize,
    rng: &mut R,
) -> Result<RolloutSummary> {
    if episodes == 0 {
        return Err(Error::InvalidInput("need at least one episode".into()));
    }
    let n = game.num_players();
    let mut count = 0.0;
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for _ in 0..episodes {
        let ep = rollout_sample(game, history, schedule, rng)?;
        count += 1.0;
        for i in 0..n {
            let d = ep.returns[i] - mean[i];
            mean[i] += d / count;
            m2[i] += d * (ep.returns[i] - mean[i]);
        }
    }
    let stderr = m2
        .iter()
        .map(|&q| {
            if episodes < 2 {
                return 0.0;
            }
            let var = (q / (count - 1.0)).max(0.0);
            (var / count).sqrt()
        })
        .collect();
    Ok(RolloutSummary {
        episodes,
        mean,
        stderr,
    })
}
