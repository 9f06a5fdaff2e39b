//! Backward value passes with exact expectations over joint actions.

use serde::{Deserialize, Serialize};

use crate::game::MarkovGame;
use crate::{Error, Result};

/// Per-`(player, stage, state)` vectors over the player's own actions, laid
/// out contiguously. Used for policies, utility vectors and accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVectors {
    horizon: usize,
    num_states: usize,
    action_counts: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl CellVectors {
    pub fn zeros(game: &MarkovGame) -> Self {
        Self::filled(game, |_| 0.0)
    }

    /// Uniform distribution in every cell.
    pub fn uniform(game: &MarkovGame) -> Self {
        Self::filled(game, |d| 1.0 / d as f64)
    }

    fn filled(game: &MarkovGame, value: impl Fn(usize) -> f64) -> Self {
        let (h, s) = (game.horizon(), game.num_states());
        let counts = game.action_counts().to_vec();
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        let mut data = Vec::new();
        for &d in &counts {
            offsets.push(data.len());
            data.extend(std::iter::repeat(value(d)).take(h * s * d));
        }
        offsets.push(data.len());
        Self {
            horizon: h,
            num_states: s,
            action_counts: counts,
            offsets,
            data,
        }
    }

    #[inline]
    fn offset(&self, player: usize, stage: usize, state: usize) -> usize {
        self.offsets[player]
            + (stage * self.num_states + state) * self.action_counts[player]
    }

    #[inline]
    pub fn get(&self, player: usize, stage: usize, state: usize) -> &[f64] {
        let o = self.offset(player, stage, state);
        &self.data[o..o + self.action_counts[player]]
    }

    #[inline]
    pub fn get_mut(&mut self, player: usize, stage: usize, state: usize) -> &mut [f64] {
        let o = self.offset(player, stage, state);
        let d = self.action_counts[player];
        &mut self.data[o..o + d]
    }

    /// Every player's vector at `(stage, state)`.
    pub fn at(&self, stage: usize, state: usize) -> Vec<&[f64]> {
        (0..self.action_counts.len())
            .map(|i| self.get(i, stage, state))
            .collect()
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn matches(&self, game: &MarkovGame) -> bool {
        self.horizon == game.horizon()
            && self.num_states == game.num_states()
            && self.action_counts == game.action_counts()
    }

    /// Iterates cells in storage order: player, then stage, then state.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (h, s) = (self.horizon, self.num_states);
        (0..self.num_players())
            .flat_map(move |i| (0..h).flat_map(move |hh| (0..s).map(move |ss| (i, hh, ss))))
    }
}

/// A joint Markov policy: one distribution per `(player, stage, state)`.
pub type PolicyProfile = CellVectors;

/// Per-`(player, stage, state)` scalars, with the stage after the horizon
/// implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    num_players: usize,
    horizon: usize,
    num_states: usize,
    /// `[player][stage][state]` for stages `0..=horizon`; the last stage is
    /// kept at zero so `next` can hand out a slice.
    data: Vec<f64>,
}

impl ValueTables {
    pub fn zeros(game: &MarkovGame) -> Self {
        let (n, h, s) = (game.num_players(), game.horizon(), game.num_states());
        Self {
            num_players: n,
            horizon: h,
            num_states: s,
            data: vec![0.0; n * (h + 1) * s],
        }
    }

    #[inline]
    fn offset(&self, player: usize, stage: usize) -> usize {
        (player * (self.horizon + 1) + stage) * self.num_states
    }

    #[inline]
    pub fn get(&self, player: usize, stage: usize, state: usize) -> f64 {
        self.data[self.offset(player, stage) + state]
    }

    #[inline]
    pub fn set(&mut self, player: usize, stage: usize, state: usize, value: f64) {
        debug_assert!(stage < self.horizon);
        let o = self.offset(player, stage) + state;
        self.data[o] = value;
    }

    /// Values of `player` at `stage` over all states; `stage == horizon`
    /// yields zeros.
    #[inline]
    pub fn stage(&self, player: usize, stage: usize) -> &[f64] {
        let o = self.offset(player, stage);
        &self.data[o..o + self.num_states]
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub(crate) fn matches(&self, game: &MarkovGame) -> bool {
        self.num_players == game.num_players()
            && self.horizon == game.horizon()
            && self.num_states == game.num_states()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Joint-action Q tables `[player][stage][state][joint]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTables {
    horizon: usize,
    num_states: usize,
    num_joint: usize,
    data: Vec<f64>,
}

impl QTables {
    pub fn zeros(game: &MarkovGame) -> Self {
        let (n, h, s, nj) = (
            game.num_players(),
            game.horizon(),
            game.num_states(),
            game.num_joint_actions(),
        );
        Self {
            horizon: h,
            num_states: s,
            num_joint: nj,
            data: vec![0.0; n * h * s * nj],
        }
    }

    #[inline]
    pub fn row(&self, player: usize, stage: usize, state: usize) -> &[f64] {
        let o = ((player * self.horizon + stage) * self.num_states + state) * self.num_joint;
        &self.data[o..o + self.num_joint]
    }

    #[inline]
    fn row_mut(&mut self, player: usize, stage: usize, state: usize) -> &mut [f64] {
        let o = ((player * self.horizon + stage) * self.num_states + state) * self.num_joint;
        &mut self.data[o..o + self.num_joint]
    }
}

fn check_profile(game: &MarkovGame, profile: &PolicyProfile) -> Result<()> {
    if profile.matches(game) {
        Ok(())
    } else {
        Err(Error::Shape("policy profile does not match the game".into()))
    }
}

/// `V^(t)_h(s) = (1 - alpha) V^(t-1)_h(s)
///   + alpha E_{a ~ pi_h(.|s)}[r_h(s, a) + (P_h V^(t)_{h+1})(s, a)]`
/// for `h` from the last stage down to the first.
pub fn v_backward_pass(
    game: &MarkovGame,
    profile: &PolicyProfile,
    prev: &ValueTables,
    alpha: f64,
) -> Result<ValueTables> {
    let mut out = ValueTables::zeros(game);
    v_backward_pass_into(game, profile, prev, alpha, &mut out)?;
    Ok(out)
}

/// [`v_backward_pass`] writing into an existing buffer.
pub fn v_backward_pass_into(
    game: &MarkovGame,
    profile: &PolicyProfile,
    prev: &ValueTables,
    alpha: f64,
    out: &mut ValueTables,
) -> Result<()> {
    check_profile(game, profile)?;
    if !prev.matches(game) || !out.matches(game) {
        return Err(Error::Shape("value tables do not match the game".into()));
    }
    let n = game.num_players();
    let mut weights = vec![0.0; game.num_joint_actions()];
    for h in (0..game.horizon()).rev() {
        for s in 0..game.num_states() {
            game.joint_weights_into(&profile.at(h, s), &mut weights);
            for i in 0..n {
                let rewards = game.reward_row(i, h, s);
                let v_next = out.stage(i, h + 1);
                let mut expect = 0.0;
                for (a, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        expect += w * (rewards[a] + game.continuation(h, s, a, v_next));
                    }
                }
                let v = (1.0 - alpha) * prev.get(i, h, s) + alpha * expect;
                out.set(i, h, s, v);
            }
        }
    }
    Ok(())
}

/// `Q^(t)_h(s, a) = (1 - alpha) Q^(t-1)_h(s, a)
///   + alpha [r_h + P_h [Q^(t)_{h+1} pi_{h+1}]](s, a)`.
pub fn q_backward_pass(
    game: &MarkovGame,
    profile: &PolicyProfile,
    prev: &QTables,
    alpha: f64,
) -> Result<QTables> {
    check_profile(game, profile)?;
    let (n, hz, ns, nj) = (
        game.num_players(),
        game.horizon(),
        game.num_states(),
        game.num_joint_actions(),
    );
    if prev.data.len() != n * hz * ns * nj {
        return Err(Error::Shape("Q tables do not match the game".into()));
    }
    let mut out = QTables::zeros(game);
    let mut weights = vec![0.0; nj];
    // [Q_{h+1} pi_{h+1}](s') per player, zero past the horizon
    let mut next_values = vec![vec![0.0; ns]; n];
    for h in (0..hz).rev() {
        for s in 0..ns {
            for i in 0..n {
                let prev_row = prev.row(i, h, s);
                let rewards = game.reward_row(i, h, s);
                let row = out.row_mut(i, h, s);
                for a in 0..nj {
                    let cont = game.continuation(h, s, a, &next_values[i]);
                    row[a] = (1.0 - alpha) * prev_row[a] + alpha * (rewards[a] + cont);
                }
            }
        }
        for s in 0..ns {
            game.joint_weights_into(&profile.at(h, s), &mut weights);
            for (i, nv) in next_values.iter_mut().enumerate() {
                nv[s] = out
                    .row(i, h, s)
                    .iter()
                    .zip(&weights)
                    .map(|(q, w)| q * w)
                    .sum();
            }
        }
    }
    Ok(out)
}

/// `nu^(t)_{i,h}(s, .) = [(r_{i,h} + P_h V^(t)_{i,h+1}) pi^(t)_{-i,h}](s, .)`
/// for every cell.
pub fn round_utilities(
    game: &MarkovGame,
    values: &ValueTables,
    profile: &PolicyProfile,
) -> Result<CellVectors> {
    check_profile(game, profile)?;
    if !values.matches(game) {
        return Err(Error::Shape("value tables do not match the game".into()));
    }
    let mut out = CellVectors::zeros(game);
    round_utilities_into(game, values, profile, &mut out);
    Ok(out)
}

pub(crate) fn round_utilities_into(
    game: &MarkovGame,
    values: &ValueTables,
    profile: &PolicyProfile,
    out: &mut CellVectors,
) {
    for h in 0..game.horizon() {
        for s in 0..game.num_states() {
            let local = profile.at(h, s);
            for i in 0..game.num_players() {
                let v_next = values.stage(i, h + 1);
                game.marginal_utility_into(i, h, s, v_next, &local, out.get_mut(i, h, s));
            }
        }
    }
}
