//! Tabular N-player episodic Markov games.
//!
//! Joint tables are stored flat. A joint action `(a_1, ..., a_N)` maps to a
//! single index by mixed-radix encoding with player 0 as the most significant
//! digit, so a two-player reward table reads like the usual row/column matrix.
//! Stages are 0-based internally: stage `h` runs over `0..horizon` and the
//! continuation after the last stage is identically zero.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use crate::{Error, Result};

/// Tolerance on transition row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Mixed-radix encoding between per-player actions and flat joint indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointActionIndex {
    counts: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl JointActionIndex {
    pub fn new(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() || counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidInput(format!(
                "action counts must be non-empty and positive, got {counts:?}"
            )));
        }
        let mut strides = vec![1; counts.len()];
        let mut size: usize = 1;
        for p in (0..counts.len()).rev() {
            strides[p] = size;
            size = size
                .checked_mul(counts[p])
                .ok_or_else(|| Error::InvalidInput("joint action space overflows usize".into()))?;
        }
        Ok(Self {
            counts: counts.to_vec(),
            strides,
            size,
        })
    }

    pub fn num_players(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Number of joint actions.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn encode(&self, actions: &[usize]) -> Result<usize> {
        if actions.len() != self.counts.len() {
            return Err(Error::Shape(format!(
                "joint action has {} entries, expected {}",
                actions.len(),
                self.counts.len()
            )));
        }
        let mut flat = 0;
        for (p, (&a, &c)) in actions.iter().zip(&self.counts).enumerate() {
            if a >= c {
                return Err(Error::InvalidInput(format!(
                    "action {a} out of range for player {p} with {c} actions"
                )));
            }
            flat += a * self.strides[p];
        }
        Ok(flat)
    }

    pub fn decode(&self, flat: usize) -> Result<Vec<usize>> {
        if flat >= self.size {
            return Err(Error::InvalidInput(format!(
                "joint index {flat} out of range (size {})",
                self.size
            )));
        }
        Ok((0..self.counts.len())
            .map(|p| self.action_of(flat, p))
            .collect())
    }

    /// Action of `player` inside the flat joint index.
    #[inline]
    pub fn action_of(&self, flat: usize, player: usize) -> usize {
        (flat / self.strides[player]) % self.counts[player]
    }
}

/// First constraint found violated by [`MarkovGame::validate`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("reward r[{player}][{stage}][{state}][{joint}] = {value} lies outside [0, 1]")]
    RewardOutOfRange {
        player: usize,
        stage: usize,
        state: usize,
        joint: usize,
        value: f64,
    },
    #[error("transition P[{stage}][{state}][{joint}][{next}] = {value} is negative or non-finite")]
    NegativeTransition {
        stage: usize,
        state: usize,
        joint: usize,
        next: usize,
        value: f64,
    },
    #[error("transition row P[{stage}][{state}][{joint}] sums to {sum}")]
    RowSum {
        stage: usize,
        state: usize,
        joint: usize,
        sum: f64,
    },
    #[error("initial state {initial} out of range for {num_states} states")]
    InitialState { initial: usize, num_states: usize },
}

/// An N-player general-sum episodic Markov game with tabular rewards and
/// stage-dependent transitions.
///
/// Construction checks shapes only; value constraints (rewards in `[0, 1]`,
/// stochastic transition rows) are reported by [`MarkovGame::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GameDocument", try_from = "GameDocument")]
pub struct MarkovGame {
    horizon: usize,
    num_states: usize,
    initial_state: usize,
    joint: JointActionIndex,
    /// `[player][stage][state][joint]`
    rewards: Vec<f64>,
    /// `[stage][state][joint][next_state]`
    transitions: Vec<f64>,
}

impl MarkovGame {
    /// Builds a game from flat tables laid out as documented on the fields.
    pub fn from_flat(
        action_counts: &[usize],
        horizon: usize,
        num_states: usize,
        initial_state: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        if horizon == 0 || num_states == 0 {
            return Err(Error::InvalidInput(format!(
                "horizon and state count must be positive (H={horizon}, S={num_states})"
            )));
        }
        let joint = JointActionIndex::new(action_counts)?;
        let n = joint.num_players();
        let expect_r = n * horizon * num_states * joint.size();
        let expect_p = horizon * num_states * joint.size() * num_states;
        if rewards.len() != expect_r {
            return Err(Error::Shape(format!(
                "reward table has {} entries, expected {expect_r}",
                rewards.len()
            )));
        }
        if transitions.len() != expect_p {
            return Err(Error::Shape(format!(
                "transition table has {} entries, expected {expect_p}",
                transitions.len()
            )));
        }
        Ok(Self {
            horizon,
            num_states,
            initial_state,
            joint,
            rewards,
            transitions,
        })
    }

    pub fn num_players(&self) -> usize {
        self.joint.num_players()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn action_counts(&self) -> &[usize] {
        self.joint.counts()
    }

    pub fn max_actions(&self) -> usize {
        self.joint.counts().iter().copied().max().unwrap_or(1)
    }

    pub fn joint(&self) -> &JointActionIndex {
        &self.joint
    }

    pub fn num_joint_actions(&self) -> usize {
        self.joint.size()
    }

    #[inline]
    fn reward_offset(&self, player: usize, stage: usize, state: usize) -> usize {
        ((player * self.horizon + stage) * self.num_states + state) * self.joint.size()
    }

    #[inline]
    fn transition_offset(&self, stage: usize, state: usize, joint: usize) -> usize {
        ((stage * self.num_states + state) * self.joint.size() + joint) * self.num_states
    }

    /// Rewards of `player` at `(stage, state)` indexed by flat joint action.
    #[inline]
    pub fn reward_row(&self, player: usize, stage: usize, state: usize) -> &[f64] {
        let o = self.reward_offset(player, stage, state);
        &self.rewards[o..o + self.joint.size()]
    }

    #[inline]
    pub fn reward(&self, player: usize, stage: usize, state: usize, joint: usize) -> f64 {
        self.rewards[self.reward_offset(player, stage, state) + joint]
    }

    /// Next-state distribution `P_h(. | s, a)`.
    #[inline]
    pub fn transition(&self, stage: usize, state: usize, joint: usize) -> &[f64] {
        let o = self.transition_offset(stage, state, joint);
        &self.transitions[o..o + self.num_states]
    }

    /// `[P_h V](s, a)`.
    #[inline]
    pub fn continuation(&self, stage: usize, state: usize, joint: usize, v_next: &[f64]) -> f64 {
        self.transition(stage, state, joint)
            .iter()
            .zip(v_next)
            .map(|(p, v)| p * v)
            .sum()
    }

    pub fn rewards_flat(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions_flat(&self) -> &[f64] {
        &self.transitions
    }

    /// Checks every value invariant and reports the first violation.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        if self.initial_state >= self.num_states {
            return Err(Violation::InitialState {
                initial: self.initial_state,
                num_states: self.num_states,
            });
        }
        let nj = self.joint.size();
        for player in 0..self.num_players() {
            for stage in 0..self.horizon {
                for state in 0..self.num_states {
                    for (joint, &value) in self.reward_row(player, stage, state).iter().enumerate() {
                        if !(0.0..=1.0).contains(&value) {
                            return Err(Violation::RewardOutOfRange {
                                player,
                                stage,
                                state,
                                joint,
                                value,
                            });
                        }
                    }
                }
            }
        }
        for stage in 0..self.horizon {
            for state in 0..self.num_states {
                for joint in 0..nj {
                    let row = self.transition(stage, state, joint);
                    if let Some((next, &value)) =
                        row.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && p.is_finite()))
                    {
                        return Err(Violation::NegativeTransition {
                            stage,
                            state,
                            joint,
                            next,
                            value,
                        });
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(Violation::RowSum {
                            stage,
                            state,
                            joint,
                            sum,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Expected utility of each of `player`'s actions at `(stage, state)`
    /// when the other players follow `profile` (entry `player` is ignored):
    /// `nu(a_i) = sum_{a_-i} prod_{k != i} pi_k(a_k) [r_i(s, a) + (P v_next)(s, a)]`.
    ///
    /// `profile[k]` is player k's distribution at this state; `v_next` is
    /// player i's value at the next stage (all zeros after the last stage).
    pub fn marginal_utility(
        &self,
        player: usize,
        stage: usize,
        state: usize,
        v_next: &[f64],
        profile: &[&[f64]],
    ) -> Result<Vec<f64>> {
        self.check_query(player, stage, state, v_next, profile)?;
        let mut out = vec![0.0; self.action_counts()[player]];
        self.marginal_utility_into(player, stage, state, v_next, profile, &mut out);
        Ok(out)
    }

    /// Unchecked form of [`MarkovGame::marginal_utility`] writing into `out`.
    pub(crate) fn marginal_utility_into(
        &self,
        player: usize,
        stage: usize,
        state: usize,
        v_next: &[f64],
        profile: &[&[f64]],
        out: &mut [f64],
    ) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let rewards = self.reward_row(player, stage, state);
        let n = self.num_players();
        for (joint, &r) in rewards.iter().enumerate() {
            let mut weight = 1.0;
            for (k, dist) in profile.iter().enumerate().take(n) {
                if k != player {
                    weight *= dist[self.joint.action_of(joint, k)];
                }
            }
            if weight == 0.0 {
                continue;
            }
            let q = r + self.continuation(stage, state, joint, v_next);
            out[self.joint.action_of(joint, player)] += weight * q;
        }
    }

    /// Probability of each joint action under the product of `profile`.
    pub(crate) fn joint_weights_into(&self, profile: &[&[f64]], out: &mut [f64]) {
        for (joint, w) in out.iter_mut().enumerate() {
            *w = profile
                .iter()
                .enumerate()
                .map(|(k, dist)| dist[self.joint.action_of(joint, k)])
                .product();
        }
    }

    fn check_query(
        &self,
        player: usize,
        stage: usize,
        state: usize,
        v_next: &[f64],
        profile: &[&[f64]],
    ) -> Result<()> {
        if player >= self.num_players() || stage >= self.horizon || state >= self.num_states {
            return Err(Error::InvalidInput(format!(
                "cell (player {player}, stage {stage}, state {state}) out of range"
            )));
        }
        if v_next.len() != self.num_states {
            return Err(Error::Shape(format!(
                "continuation has {} entries, expected {}",
                v_next.len(),
                self.num_states
            )));
        }
        if profile.len() != self.num_players() {
            return Err(Error::Shape(format!(
                "profile has {} players, expected {}",
                profile.len(),
                self.num_players()
            )));
        }
        for (k, dist) in profile.iter().enumerate() {
            if dist.len() != self.action_counts()[k] {
                return Err(Error::Shape(format!(
                    "player {k} distribution has {} entries, expected {}",
                    dist.len(),
                    self.action_counts()[k]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GameDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GameDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Loads a game file and validates it.
    pub fn load(path: &Path) -> Result<Self> {
        let game = Self::from_json(&fs::read_to_string(path)?)?;
        game.validate()?;
        Ok(game)
    }
}

/// Parameters of the sticky random-game generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub seed: u64,
    pub num_players: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub stay_prob: f64,
}

impl GeneratorParams {
    /// Two players, two states, two actions, horizon two, stay probability 0.8.
    pub fn paper(seed: u64) -> Self {
        Self {
            seed,
            num_players: 2,
            num_states: 2,
            num_actions: 2,
            horizon: 2,
            stay_prob: 0.8,
        }
    }

    pub fn generate(&self) -> Result<MarkovGame> {
        generate_random_game(
            self.seed,
            self.num_players,
            self.num_states,
            self.num_actions,
            self.horizon,
            self.stay_prob,
        )
    }
}

/// Random game with i.i.d. `U[0, 1]` rewards per `(player, stage, state,
/// joint action)` and action-independent sticky transitions: stay with
/// `stay_prob`, otherwise move uniformly to one of the other states.
///
/// With more than two states the leave mass is split evenly, which goes
/// beyond the two-state setup this generator was written for. Uses ChaCha8 so
/// a seed yields the same game on every platform.
pub fn generate_random_game(
    seed: u64,
    num_players: usize,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    stay_prob: f64,
) -> Result<MarkovGame> {
    if num_players == 0 || num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(Error::InvalidInput(format!(
            "dimensions must be positive (N={num_players}, S={num_states}, A={num_actions}, H={horizon})"
        )));
    }
    if !(0.0..=1.0).contains(&stay_prob) {
        return Err(Error::InvalidInput(format!(
            "stay probability {stay_prob} outside [0, 1]"
        )));
    }
    let counts = vec![num_actions; num_players];
    let joint = JointActionIndex::new(&counts)?;
    let nj = joint.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards: Vec<f64> = (0..num_players * horizon * num_states * nj)
        .map(|_| rng.gen::<f64>())
        .collect();

    let mut row = vec![0.0; num_states];
    let mut transitions = Vec::with_capacity(horizon * num_states * nj * num_states);
    for _stage in 0..horizon {
        for state in 0..num_states {
            if num_states == 1 {
                row[0] = 1.0;
            } else {
                let leave = (1.0 - stay_prob) / (num_states - 1) as f64;
                row.iter_mut().for_each(|p| *p = leave);
                row[state] = stay_prob;
            }
            for _ in 0..nj {
                transitions.extend_from_slice(&row);
            }
        }
    }
    MarkovGame::from_flat(&counts, horizon, num_states, 0, rewards, transitions)
}

/// Random game with action-dependent transitions: every row of `P_h(. | s, a)`
/// is an independent normalized draw of uniform weights.
pub fn generate_dense_game(
    seed: u64,
    action_counts: &[usize],
    num_states: usize,
    horizon: usize,
) -> Result<MarkovGame> {
    let joint = JointActionIndex::new(action_counts)?;
    if num_states == 0 || horizon == 0 {
        return Err(Error::InvalidInput("dimensions must be positive".into()));
    }
    let n = action_counts.len();
    let nj = joint.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards: Vec<f64> = (0..n * horizon * num_states * nj)
        .map(|_| rng.gen::<f64>())
        .collect();
    let mut transitions = Vec::with_capacity(horizon * num_states * nj * num_states);
    let mut row = vec![0.0; num_states];
    for _ in 0..horizon * num_states * nj {
        row.iter_mut().for_each(|p| *p = rng.gen::<f64>() + 1e-3);
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        transitions.extend_from_slice(&row);
    }
    MarkovGame::from_flat(action_counts, horizon, num_states, 0, rewards, transitions)
}

/// On-disk JSON layout of a game.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameDocument {
    pub num_players: usize,
    pub horizon: usize,
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    pub initial_state: usize,
    /// `[player][stage][state][flat_joint]`
    pub rewards: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[stage][state][flat_joint][next_state]`
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

impl From<&MarkovGame> for GameDocument {
    fn from(game: &MarkovGame) -> Self {
        let (n, h, s, nj) = (
            game.num_players(),
            game.horizon(),
            game.num_states(),
            game.num_joint_actions(),
        );
        let rewards = (0..n)
            .map(|i| {
                (0..h)
                    .map(|hh| (0..s).map(|ss| game.reward_row(i, hh, ss).to_vec()).collect())
                    .collect()
            })
            .collect();
        let transitions = (0..h)
            .map(|hh| {
                (0..s)
                    .map(|ss| (0..nj).map(|a| game.transition(hh, ss, a).to_vec()).collect())
                    .collect()
            })
            .collect();
        Self {
            num_players: n,
            horizon: h,
            num_states: s,
            action_counts: game.action_counts().to_vec(),
            initial_state: game.initial_state(),
            rewards,
            transitions,
        }
    }
}

impl From<MarkovGame> for GameDocument {
    fn from(game: MarkovGame) -> Self {
        Self::from(&game)
    }
}

impl TryFrom<GameDocument> for MarkovGame {
    type Error = Error;

    fn try_from(doc: GameDocument) -> Result<Self> {
        if doc.action_counts.len() != doc.num_players {
            return Err(Error::Shape(format!(
                "num_players = {} but {} action counts given",
                doc.num_players,
                doc.action_counts.len()
            )));
        }
        let flatten = |nested: Vec<Vec<Vec<Vec<f64>>>>, dims: [usize; 4], what: &str| {
            let mut flat = Vec::with_capacity(dims.iter().product());
            if nested.len() != dims[0] {
                return Err(Error::Shape(format!("{what}: outer length {}", nested.len())));
            }
            for a in nested {
                if a.len() != dims[1] {
                    return Err(Error::Shape(format!("{what}: level-2 length {}", a.len())));
                }
                for b in a {
                    if b.len() != dims[2] {
                        return Err(Error::Shape(format!("{what}: level-3 length {}", b.len())));
                    }
                    for c in b {
                        if c.len() != dims[3] {
                            return Err(Error::Shape(format!(
                                "{what}: level-4 length {}",
                                c.len()
                            )));
                        }
                        flat.extend(c);
                    }
                }
            }
            Ok(flat)
        };
        let nj = JointActionIndex::new(&doc.action_counts)?.size();
        let rewards = flatten(
            doc.rewards,
            [doc.num_players, doc.horizon, doc.num_states, nj],
            "rewards",
        )?;
        let transitions = flatten(
            doc.transitions,
            [doc.horizon, doc.num_states, nj, doc.num_states],
            "transitions",
        )?;
        MarkovGame::from_flat(
            &doc.action_counts,
            doc.horizon,
            doc.num_states,
            doc.initial_state,
            rewards,
            transitions,
        )
    }
}
