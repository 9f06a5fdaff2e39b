//! Self-play learning of coarse correlated equilibria in N-player
//! general-sum episodic Markov games.
//!
//! Every player runs, at each `(stage, state)`, an optimistic multiplicative
//! weights learner whose learning rate is re-optimized every round, and keeps
//! an averaged state-value function that is updated backward over stages.
//! The averaged ("rolled-out") policy is evaluated exactly: the CCE-gap is
//! computed by a best-response recursion maintained alongside training.
//!
//! Layout:
//! - [`game`]: tabular games, validation, random instances, JSON files.
//! - [`schedule`]: step sizes `alpha_t`, averaging weights and `w_t`.
//! - [`dlrc`]: the per-cell learner and its learning-rate solver.
//! - [`value`]: backward V and Q passes and per-round utilities.
//! - [`eval`]: best responses, CCE-gap, weighted regrets and roll-outs.
//! - [`diagnostics`]: runtime checks of the algorithm's identities and bounds.
//! - [`trainer`]: the round loop, metrics, history and checkpoints.
//! - [`metrics_io`]: the versioned metrics CSV.

pub mod diagnostics;
pub mod dlrc;
pub mod eval;
pub mod game;
pub mod metrics_io;
pub mod schedule;
pub mod trainer;
pub mod value;

pub use dlrc::{Baseline, HyperParams, LambdaRule, LearnerState};
pub use eval::{BestResponseState, GapReport, RegretState};
pub use game::{GeneratorParams, JointActionIndex, MarkovGame, Violation};
pub use metrics_io::{parse_metrics_csv, write_metrics_csv, METRICS_HEADER};
pub use schedule::{theoretical_eta, WeightSchedule};
pub use trainer::{run_self_play, GameSource, History, RoundMetrics, RunConfig, RunResult, Trainer};
pub use value::{CellVectors, PolicyProfile, QTables, ValueTables};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid game: {0}")]
    Validation(#[from] Violation),
    #[error("non-finite value in {what} at player {player}, stage {stage}, state {state}, round {round}")]
    NonFinite {
        what: &'static str,
        player: usize,
        stage: usize,
        state: usize,
        round: usize,
    },
    #[error("history recording was not enabled for this run")]
    MissingHistory,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
