//! The self-play round loop.
//!
//! Round `t` runs in three phases:
//! - A: every learner computes its signal, learning rate and policy;
//! - B: the averaged values are updated backward over stages with `alpha_t`;
//! - C: utilities are formed from the new values, fed back to the learners,
//!   and the evaluator and metrics are updated.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dlrc::{HyperParams, LearnerState};
use crate::eval::{
    cce_gap, gap_stage_profile, BestResponseState, GapRecursionMonitor, RegretState,
};
use crate::game::{GeneratorParams, MarkovGame};
use crate::schedule::WeightSchedule;
use crate::value::{round_utilities_into, v_backward_pass_into, CellVectors, PolicyProfile, ValueTables};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "dlrc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    File(PathBuf),
    Generated(GeneratorParams),
}

impl GameSource {
    pub fn load(&self) -> Result<MarkovGame> {
        match self {
            GameSource::File(path) => MarkovGame::load(path),
            GameSource::Generated(params) => params.generate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub game: GameSource,
    pub rounds: usize,
    pub hyperparams: HyperParams,
    pub record_history: bool,
    pub metric_stride: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Two players, two states, two actions, `H = 2`, stay probability 0.8,
    /// theoretical hyperparameters.
    pub fn paper(seed: u64, rounds: usize) -> Self {
        let gen = GeneratorParams::paper(seed);
        Self {
            hyperparams: HyperParams::theoretical(gen.horizon, gen.num_players, gen.num_actions),
            game: GameSource::Generated(gen),
            rounds,
            record_history: false,
            metric_stride: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidInput("need at least one round".into()));
        }
        if self.metric_stride == 0 {
            return Err(Error::InvalidInput("metric stride must be positive".into()));
        }
        self.hyperparams.validate()
    }
}

/// Metrics of one recorded round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub gap_raw: f64,
    pub gap_clamped: f64,
    /// `delta_h` for stages `0..H`.
    pub deltas: Vec<f64>,
    pub max_reg: f64,
    pub lambda_min: f64,
    pub lambda_mean: f64,
    pub lambda_max: f64,
    /// Mean over cells of `|x^(t) - x^(t-1)|_1`.
    pub path_len_mean: f64,
}

/// Per-round records, index `t - 1` for round `t`. Cell-indexed scalars use
/// the `(player, stage, state)` order of [`CellVectors::cells`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub profiles: Vec<PolicyProfile>,
    pub lambdas: Vec<Vec<f64>>,
    pub signals: Vec<CellVectors>,
    /// `u^(t) / w_t`
    pub feedback: Vec<CellVectors>,
    /// `nu^(t)`
    pub utilities: Vec<CellVectors>,
}

impl History {
    pub fn rounds(&self) -> usize {
        self.profiles.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub metrics: Vec<RoundMetrics>,
    pub history: Option<History>,
    pub values: ValueTables,
    pub regrets: RegretState,
    pub best_response: BestResponseState,
    pub recursion: GapRecursionMonitor,
    /// Excluded from equality-sensitive outputs.
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainerState {
    round: usize,
    learners: Vec<LearnerState>,
    values: ValueTables,
    profile: PolicyProfile,
    prev_profile: PolicyProfile,
    best_response: BestResponseState,
    regrets: RegretState,
    recursion: GapRecursionMonitor,
    history: Option<History>,
    metrics: Vec<RoundMetrics>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: RunConfig,
    game: MarkovGame,
    state: TrainerState,
}

pub struct Trainer {
    game: MarkovGame,
    config: RunConfig,
    schedule: WeightSchedule,
    state: TrainerState,
    scratch_values: ValueTables,
    utilities: CellVectors,
}

impl Trainer {
    /// Loads the configured game, validates it and initializes every learner.
    pub fn new(config: RunConfig) -> Result<Self> {
        let game = config.game.load()?;
        Self::with_game(game, config)
    }

    pub fn with_game(game: MarkovGame, config: RunConfig) -> Result<Self> {
        config.validate()?;
        game.validate()?;
        let params = &config.hyperparams;
        let schedule = WeightSchedule::new(game.horizon(), params.eta)?;
        let profile = PolicyProfile::uniform(&game);
        let learners = profile
            .cells()
            .map(|(i, _, _)| LearnerState::new(game.action_counts()[i], params))
            .collect();
        let state = TrainerState {
            round: 1,
            learners,
            values: ValueTables::zeros(&game),
            prev_profile: profile.clone(),
            profile,
            best_response: BestResponseState::new(&game),
            regrets: RegretState::new(&game),
            recursion: GapRecursionMonitor::new(game.horizon()),
            history: config.record_history.then(History::default),
            metrics: Vec::new(),
        };
        Ok(Self {
            scratch_values: ValueTables::zeros(&game),
            utilities: CellVectors::zeros(&game),
            game,
            config,
            schedule,
            state,
        })
    }

    pub fn game(&self) -> &MarkovGame {
        &self.game
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn schedule(&self) -> &WeightSchedule {
        &self.schedule
    }

    /// Next round to be played.
    pub fn round(&self) -> usize {
        self.state.round
    }

    pub fn is_finished(&self) -> bool {
        self.state.round > self.config.rounds
    }

    pub fn values(&self) -> &ValueTables {
        &self.state.values
    }

    /// Policies of the most recently started round.
    pub fn profile(&self) -> &PolicyProfile {
        &self.state.profile
    }

    pub fn learners(&self) -> &[LearnerState] {
        &self.state.learners
    }

    pub fn metrics(&self) -> &[RoundMetrics] {
        &self.state.metrics
    }

    pub fn history(&self) -> Option<&History> {
        self.state.history.as_ref()
    }

    /// Phase A: signals, learning rates and policies for every cell.
    fn policy_phase(&mut self) -> Result<()> {
        let params = &self.config.hyperparams;
        let round = self.state.round;
        std::mem::swap(&mut self.state.prev_profile, &mut self.state.profile);
        let cells: Vec<_> = self.state.profile.cells().collect();
        for (learner, (i, h, s)) in self.state.learners.iter_mut().zip(cells) {
            learner.begin_round(params)?;
            let finite = learner.lambda().is_finite()
                && learner.signal().iter().chain(learner.policy()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite {
                    what: "policy",
                    player: i,
                    stage: h,
                    state: s,
                    round,
                });
            }
            self.state.profile.get_mut(i, h, s).copy_from_slice(learner.policy());
        }
        if round == 1 {
            self.state.prev_profile.clone_from(&self.state.profile);
        }
        Ok(())
    }

    /// Phase B: backward value pass.
    fn value_phase(&mut self, alpha: f64) -> Result<()> {
        v_backward_pass_into(
            &self.game,
            &self.state.profile,
            &self.state.values,
            alpha,
            &mut self.scratch_values,
        )?;
        std::mem::swap(&mut self.state.values, &mut self.scratch_values);
        for (i, h, s) in self.state.profile.cells() {
            if !self.state.values.get(i, h, s).is_finite() {
                return Err(Error::NonFinite {
                    what: "value",
                    player: i,
                    stage: h,
                    state: s,
                    round: self.state.round,
                });
            }
        }
        Ok(())
    }

    /// Phase C: feedback, evaluator, metrics.
    fn feedback_phase(&mut self, alpha: f64) -> Result<Option<RoundMetrics>> {
        let params = &self.config.hyperparams;
        let round = self.state.round;
        let st = &mut self.state;
        round_utilities_into(&self.game, &st.values, &st.profile, &mut self.utilities);
        let cells: Vec<_> = st.profile.cells().collect();
        let record = st.history.is_some();
        let mut feedback = record.then(|| CellVectors::zeros(&self.game));
        let mut signals = record.then(|| CellVectors::zeros(&self.game));
        let mut lambdas = Vec::with_capacity(if record { cells.len() } else { 0 });
        let (mut lmin, mut lmax, mut lsum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        let mut path = 0.0;
        for (learner, &(i, h, s)) in st.learners.iter_mut().zip(&cells) {
            let lambda = learner.lambda();
            lmin = lmin.min(lambda);
            lmax = lmax.max(lambda);
            lsum += lambda;
            path += st
                .profile
                .get(i, h, s)
                .iter()
                .zip(st.prev_profile.get(i, h, s))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            if let Some(sig) = signals.as_mut() {
                sig.get_mut(i, h, s).copy_from_slice(learner.signal());
                lambdas.push(lambda);
            }
            learner.commit_feedback(
                self.utilities.get(i, h, s),
                st.values.get(i, h, s),
                params,
                &self.schedule,
            )?;
            if learner.scaled_dual().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "accumulator",
                    player: i,
                    stage: h,
                    state: s,
                    round,
                });
            }
            if let Some(fb) = feedback.as_mut() {
                fb.get_mut(i, h, s).copy_from_slice(learner.scaled_correction());
            }
        }
        st.best_response.round_update(&self.game, &st.profile, alpha)?;
        st.regrets.round_update(&self.utilities, &st.profile, alpha);
        let deltas = gap_stage_profile(&st.best_response, &st.values);
        let max_reg_by_stage = st.regrets.max_by_stage();
        st.recursion.observe(&deltas, &max_reg_by_stage, alpha);
        if let Some(hist) = st.history.as_mut() {
            hist.profiles.push(st.profile.clone());
            hist.lambdas.push(lambdas);
            hist.signals.push(signals.expect("recorded"));
            hist.feedback.push(feedback.expect("recorded"));
            hist.utilities.push(self.utilities.clone());
        }
        let due = round % self.config.metric_stride == 0 || round == self.config.rounds;
        if !due {
            return Ok(None);
        }
        let gap = cce_gap(&st.best_response, &st.values, self.game.initial_state());
        let n_cells = cells.len() as f64;
        let mut deltas = deltas;
        deltas.pop();
        let m = RoundMetrics {
            round,
            gap_raw: gap.raw,
            gap_clamped: gap.clamped,
            deltas,
            max_reg: max_reg_by_stage.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            lambda_min: lmin,
            lambda_mean: lsum / n_cells,
            lambda_max: lmax,
            path_len_mean: path / n_cells,
        };
        st.metrics.push(m.clone());
        Ok(Some(m))
    }

    /// Plays one round. Returns the metrics if the round is recorded.
    pub fn step(&mut self) -> Result<Option<RoundMetrics>> {
        if self.is_finished() {
            return Err(Error::InvalidInput(format!(
                "all {} rounds already played",
                self.config.rounds
            )));
        }
        let alpha = self.schedule.step(self.state.round);
        self.policy_phase()?;
        self.value_phase(alpha)?;
        let m = self.feedback_phase(alpha)?;
        self.state.round += 1;
        Ok(m)
    }

    /// Plays the remaining rounds.
    pub fn run(mut self) -> Result<RunResult> {
        let start = Instant::now();
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.into_result(start.elapsed().as_secs_f64()))
    }

    fn into_result(self, wall_clock_secs: f64) -> RunResult {
        let st = self.state;
        RunResult {
            metrics: st.metrics,
            history: st.history,
            values: st.values,
            regrets: st.regrets,
            best_response: st.best_response,
            recursion: st.recursion,
            wall_clock_secs,
        }
    }

    /// Serializes the full run state at the current round boundary.
    pub fn checkpoint(&self) -> Result<String> {
        let ck = CheckpointRef {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            config: &self.config,
            game: &self.game,
            state: &self.state,
        };
        Ok(serde_json::to_string(&ck)?)
    }

    /// Restores a run from [`Trainer::checkpoint`] output. `rounds`, if
    /// given, replaces the configured total (it may not precede the
    /// checkpoint).
    pub fn restore(text: &str, rounds: Option<usize>) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("not valid JSON: {e}")))?;
        let format = raw.get("format").and_then(|v| v.as_str());
        if format != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint("missing or unknown format tag".into()));
        }
        match raw.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "version {v} is not supported (expected {CHECKPOINT_VERSION})"
                )))
            }
            None => return Err(Error::Checkpoint("missing version".into())),
        }
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("malformed state: {e}")))?;
        let mut config = ck.config;
        if let Some(r) = rounds {
            config.rounds = r;
        }
        let mut trainer = Self::with_game(ck.game, config)?;
        if ck.state.round > trainer.config.rounds + 1 {
            return Err(Error::Checkpoint(format!(
                "checkpoint is at round {} but the run ends at {}",
                ck.state.round - 1,
                trainer.config.rounds
            )));
        }
        let fresh = &trainer.state;
        let consistent = ck.state.learners.len() == fresh.learners.len()
            && ck
                .state
                .learners
                .iter()
                .zip(&fresh.learners)
                .all(|(a, b)| a.num_actions() == b.num_actions() && a.round() == ck.state.round)
            && ck.state.values.matches(&trainer.game)
            && ck.state.profile.matches(&trainer.game)
            && ck.state.prev_profile.matches(&trainer.game)
            && ck.state.history.is_some() == trainer.config.record_history;
        if !consistent {
            return Err(Error::Checkpoint("state does not match the game or config".into()));
        }
        trainer.state = ck.state;
        Ok(trainer)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: &'a str,
    version: u32,
    config: &'a RunConfig,
    game: &'a MarkovGame,
    state: &'a TrainerState,
}

/// Runs a configuration to completion.
pub fn run_self_play(config: RunConfig) -> Result<RunResult> {
    Trainer::new(config)?.run()
}
