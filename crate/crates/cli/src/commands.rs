use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dlrc_core::diagnostics::{all_hard_pass, verify_run, CheckReport};
use dlrc_core::eval::rollout_estimate;
use dlrc_core::{
    parse_metrics_csv, write_metrics_csv, Baseline, GameSource, GeneratorParams, HyperParams, LambdaRule,
    MarkovGame, RunConfig, RunResult, Trainer, WeightSchedule,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::plot::{aggregate, render_svg, Axis};
use crate::settings::{merge, output_path, parse_seeds, per_seed};
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Two players, two states, two actions, horizon two, stay probability 0.8.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSetting {
    Value(f64),
    Named(String),
}

fn parse_eta(s: &str) -> Result<EtaSetting, String> {
    if s == "theoretical" {
        return Ok(EtaSetting::Named(s.into()));
    }
    s.parse::<f64>()
        .map(EtaSetting::Value)
        .map_err(|_| format!("expected `theoretical` or a number, got `{s}`"))
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineArg {
    ExpectedValue,
    VValue,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRuleArg {
    Argmax,
    TwoCase,
}

/// Generator dimensions shared by `generate` and `train`.
#[derive(Debug, Default, Args, Serialize, Deserialize)]
pub struct Dimensions {
    /// Number of players.
    #[arg(short = 'N', long)]
    pub players: Option<usize>,
    /// Number of states.
    #[arg(short = 'S', long)]
    pub states: Option<usize>,
    /// Actions per player.
    #[arg(short = 'A', long)]
    pub actions: Option<usize>,
    /// Horizon.
    #[arg(short = 'H', long)]
    pub horizon: Option<usize>,
    /// Probability of staying in the current state.
    #[arg(long)]
    pub stay: Option<f64>,
}

impl Dimensions {
    fn any(&self) -> bool {
        self.players.is_some()
            || self.states.is_some()
            || self.actions.is_some()
            || self.horizon.is_some()
            || self.stay.is_some()
    }

    fn generator(&self, preset: Option<Preset>, seed: u64) -> Result<GeneratorParams, Failure> {
        if preset.is_some() && self.any() {
            return Err(Failure::Usage("--preset paper fixes the game dimensions".into()));
        }
        let base = GeneratorParams::paper(seed);
        Ok(GeneratorParams {
            seed,
            num_players: self.players.unwrap_or(base.num_players),
            num_states: self.states.unwrap_or(base.num_states),
            num_actions: self.actions.unwrap_or(base.num_actions),
            horizon: self.horizon.unwrap_or(base.horizon),
            stay_prob: self.stay.unwrap_or(base.stay_prob),
        })
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub dims: Dimensions,
    /// Output game JSON.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// JSON file with defaults for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn generate(args: GenerateArgs, out_dir: Option<&Path>) -> Result<(), Failure> {
    let config = args.config.clone();
    let args = merge(args, config.as_deref())?;
    let out = output_path(args.output.as_deref(), out_dir)?;
    let game = args.dims.generator(args.preset, args.seed.unwrap_or(0))?.generate()?;
    game.save(&out)?;
    println!(
        "wrote {} ({} players, {} states, actions {:?}, horizon {})",
        out.display(),
        game.num_players(),
        game.num_states(),
        game.action_counts(),
        game.horizon()
    );
    Ok(())
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Game JSON to train on instead of a generated game.
    #[arg(long, conflicts_with = "preset")]
    pub game: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Several runs, e.g. `0-8` or `1,4,7`; outputs get a `_seed<n>` suffix.
    #[arg(long)]
    pub seeds: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub dims: Dimensions,
    /// Number of rounds [default: 1000].
    #[arg(short = 'T', long)]
    pub rounds: Option<usize>,
    /// `theoretical` or a positive number.
    #[arg(long, value_parser = parse_eta, allow_hyphen_values = true)]
    pub eta: Option<EtaSetting>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    #[arg(long, value_enum)]
    pub lambda_rule: Option<LambdaRuleArg>,
    /// Record metrics every this many rounds [default: 1].
    #[arg(long)]
    pub stride: Option<usize>,
    /// Also write the run archive (config, game, result with history).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Output metrics CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// `{config, game, result}` as written by `train --history`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Archive {
    pub config: RunConfig,
    pub game: MarkovGame,
    pub result: RunResult,
}

fn hyperparams(args: &TrainArgs, game: &MarkovGame) -> Result<HyperParams, Failure> {
    let mut p = HyperParams::theoretical(game.horizon(), game.num_players(), game.max_actions());
    if let Some(beta) = args.beta {
        p = HyperParams::new(beta, game.max_actions(), p.eta);
    }
    match &args.eta {
        None => {}
        Some(EtaSetting::Value(v)) => p.eta = *v,
        Some(EtaSetting::Named(n)) if n == "theoretical" => {}
        Some(EtaSetting::Named(n)) => {
            return Err(Failure::Usage(format!("eta must be `theoretical` or a number, got `{n}`")))
        }
    }
    if let Some(b) = args.baseline {
        p.baseline = match b {
            BaselineArg::ExpectedValue => Baseline::ExpectedValue,
            BaselineArg::VValue => Baseline::VValue,
        };
    }
    if let Some(r) = args.lambda_rule {
        p.lambda_rule = match r {
            LambdaRuleArg::Argmax => LambdaRule::Argmax,
            LambdaRuleArg::TwoCase => LambdaRule::TwoCase,
        };
    }
    Ok(p)
}

struct Job {
    seed: u64,
    csv: PathBuf,
    archive: Option<PathBuf>,
    game: MarkovGame,
    config: RunConfig,
}

fn run_job(job: Job) -> Result<String, Failure> {
    let trainer = Trainer::with_game(job.game.clone(), job.config.clone())?;
    let result = trainer.run()?;
    fs::write(&job.csv, write_metrics_csv(job.game.horizon(), &result.metrics)?)?;
    let last = result.metrics.last().map_or(f64::NAN, |m| m.gap_raw);
    let mut line = format!(
        "seed {}: {} rounds, final gap {last:.6} -> {}",
        job.seed,
        job.config.rounds,
        job.csv.display()
    );
    if let Some(path) = job.archive {
        let archive = Archive {
            config: job.config,
            game: job.game,
            result,
        };
        fs::write(&path, serde_json::to_string(&archive)?)?;
        line.push_str(&format!(", archive {}", path.display()));
    }
    Ok(line)
}

pub fn train(args: TrainArgs, out_dir: Option<&Path>) -> Result<(), Failure> {
    let config = args.config.clone();
    let args = merge(args, config.as_deref())?;
    let out = output_path(args.output.as_deref(), out_dir)?;
    let archive = args.history.as_deref().map(|p| output_path(Some(p), out_dir)).transpose()?;
    if args.game.is_some() && (args.preset.is_some() || args.dims.any()) {
        return Err(Failure::Usage("--game cannot be combined with a preset or generator options".into()));
    }
    let seeds = match (&args.seeds, args.seed) {
        (Some(_), Some(_)) => return Err(Failure::Usage("give either --seed or --seeds".into())),
        (Some(spec), None) => parse_seeds(spec)?,
        (None, Some(s)) => vec![s],
        (None, None) if args.preset.is_some() => (0..9).collect(),
        (None, None) => vec![0],
    };
    let many = seeds.len() > 1;
    let mut jobs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let (source, game) = match &args.game {
            Some(path) => (GameSource::File(path.clone()), MarkovGame::load(path)?),
            None => {
                let gen = args.dims.generator(args.preset, seed)?;
                let game = gen.generate()?;
                (GameSource::Generated(gen), game)
            }
        };
        let config = RunConfig {
            game: source,
            rounds: args.rounds.unwrap_or(1000),
            hyperparams: hyperparams(&args, &game)?,
            record_history: archive.is_some(),
            metric_stride: args.stride.unwrap_or(1),
            seed,
        };
        config.validate()?;
        let name = |p: &Path| if many { per_seed(p, seed) } else { p.to_path_buf() };
        jobs.push(Job {
            seed,
            csv: name(&out),
            archive: archive.as_deref().map(name),
            game,
            config,
        });
    }
    let lines: Vec<Result<String, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs.into_iter().map(|j| scope.spawn(move || run_job(j))).collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    for line in lines {
        println!("{}", line?);
    }
    Ok(())
}

fn load_archive(path: &Path) -> Result<Archive, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
    let archive: Archive = serde_json::from_str(&text)
        .map_err(|e| Failure::Validation(format!("{} is not a run archive: {e}", path.display())))?;
    archive.game.validate().map_err(dlrc_core::Error::from)?;
    Ok(archive)
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Run archive written by `train --history`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Seed of the randomized checks [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output report JSON.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    run: PathBuf,
    seed: u64,
    pass: bool,
    checks: Vec<CheckReport>,
}

pub fn verify(args: VerifyArgs, out_dir: Option<&Path>) -> Result<(), Failure> {
    let config = args.config.clone();
    let args = merge(args, config.as_deref())?;
    let run = args.run.ok_or_else(|| Failure::Usage("--run is required".into()))?;
    let out = output_path(args.output.as_deref(), out_dir)?;
    let archive = load_archive(&run)?;
    let seed = args.seed.unwrap_or(0);
    let checks = verify_run(&archive.game, &archive.config, &archive.result, seed)?;
    let pass = all_hard_pass(&checks);
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| c.hard && !c.pass)
        .map(|c| format!("{} (slack {:e})", c.check_name, c.worst_slack))
        .collect();
    let report = VerifyReport { run, seed, pass, checks };
    fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    println!("{} checks -> {}", report.checks.len(), out.display());
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct RolloutArgs {
    /// Run archive written by `train --history`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Number of episodes [default: 100000].
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Sampling seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output summary JSON.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PlayerRollout {
    player: usize,
    mean: f64,
    stderr: f64,
    value: f64,
    /// `|mean - value| / stderr`
    z: f64,
}

#[derive(Debug, Serialize)]
struct RolloutReport {
    run: PathBuf,
    episodes: usize,
    seed: u64,
    rounds: usize,
    players: Vec<PlayerRollout>,
}

pub fn rollout(args: RolloutArgs, out_dir: Option<&Path>) -> Result<(), Failure> {
    let config = args.config.clone();
    let args = merge(args, config.as_deref())?;
    let episodes = args.episodes.unwrap_or(100_000);
    if episodes == 0 {
        return Err(Failure::Usage("--episodes must be positive".into()));
    }
    let run = args.run.ok_or_else(|| Failure::Usage("--run is required".into()))?;
    let out = output_path(args.output.as_deref(), out_dir)?;
    let archive = load_archive(&run)?;
    let history = archive.result.history.as_ref().ok_or(dlrc_core::Error::MissingHistory)?;
    let game = &archive.game;
    let sched = WeightSchedule::new(game.horizon(), archive.config.hyperparams.eta)?;
    let seed = args.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let est = rollout_estimate(game, &history.profiles, &sched, episodes, &mut rng)?;
    let players = (0..game.num_players())
        .map(|i| {
            let value = archive.result.values.get(i, 0, game.initial_state());
            let diff = (est.mean[i] - value).abs();
            PlayerRollout {
                player: i,
                mean: est.mean[i],
                stderr: est.stderr[i],
                value,
                z: if est.stderr[i] > 0.0 { diff / est.stderr[i] } else if diff == 0.0 { 0.0 } else { f64::MAX },
            }
        })
        .collect();
    let report = RolloutReport {
        run,
        episodes,
        seed,
        rounds: history.rounds(),
        players,
    };
    fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    for p in &report.players {
        println!(
            "player {}: mean {:.6} +- {:.2e}, value {:.6} ({:.2} se)",
            p.player, p.mean, p.stderr, p.value, p.z
        );
    }
    Ok(())
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct PlotArgs {
    /// Metrics CSV files, one per run.
    pub inputs: Vec<PathBuf>,
    /// Linear round axis instead of logarithmic.
    #[arg(long)]
    pub linear: bool,
    #[arg(long)]
    pub title: Option<String>,
    /// Output SVG.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn plot(args: PlotArgs, out_dir: Option<&Path>) -> Result<(), Failure> {
    let config = args.config.clone();
    let args = merge(args, config.as_deref())?;
    if args.inputs.is_empty() {
        return Err(Failure::Usage("at least one CSV is required".into()));
    }
    let out = output_path(args.output.as_deref(), out_dir)?;
    let mut runs = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
        let metrics =
            parse_metrics_csv(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        if metrics.is_empty() {
            return Err(Failure::Validation(format!("{}: no metric rows", path.display())));
        }
        runs.push(metrics);
    }
    let series = aggregate(&runs).map_err(Failure::Validation)?;
    let axis = if args.linear { Axis::Linear } else { Axis::Log };
    let title = args.title.as_deref().unwrap_or("CCE-gap");
    fs::write(&out, render_svg(&series, axis, title))?;
    println!("{} runs, {} rounds -> {}", runs.len(), series.rounds.len(), out.display());
    Ok(())
}
