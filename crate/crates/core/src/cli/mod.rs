//! The `pnmcts` command line: generate, train, solve, evaluate, simulate
//! and report.
//!
//! Every command writes into its output directory together with a
//! `manifest.json` recording the arguments and a hash of the inputs. Errors
//! end the process with a nonzero code and a single line on stderr of the
//! form `error kind=<kind> message=<json string>`.

mod manifest;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

pub use manifest::{hash_inputs, RunManifest};

use crate::board::{Board, Status};
use crate::error::{Error, Result};
use crate::geometry::IntersectionLayout;
use crate::policynet::{load_checkpoint, NetConfig, NetParams};
use crate::scenario::ScenarioSet;
use crate::search::{play_episode, NetEvaluator, SearchConfig, UniformEvaluator};
use crate::simulator::{run_experiment, sweep_assignments, ControllerKind, ExperimentSpec, WorldConfig};
use crate::training::{
    busy_boards, evaluate_policy, fifo_schedule_with, generate_scenarios, run_curriculum, split_scenarios,
    CurriculumConfig, CurriculumState, EvalMode, MetricsWriter, Phase, ScenarioConfig,
};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "PNMCTS_OUT";

#[derive(Debug, Parser)]
#[command(name = "pnmcts", version, about = "Platoon scheduling with parallel neural MCTS")]
pub struct Cli {
    /// Root for default output directories.
    #[arg(long, env = OUT_ENV, default_value = "runs", global = true)]
    pub out_root: PathBuf,
    /// Intersection layout JSON; the bundled four-way layout by default.
    #[arg(long, global = true)]
    pub layout: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample conflicting scenarios and split them into train and test sets.
    Generate(GenerateArgs),
    /// Run the clear/busy curriculum.
    Train(TrainArgs),
    /// Solve one board and print the schedule.
    Solve(SolveArgs),
    /// Compare a policy with first-come-first-served on a board set.
    Evaluate(EvaluateArgs),
    /// Run the traffic simulator.
    Simulate(SimulateArgs),
    /// Summarize the CSV outputs of a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// ScenarioConfig JSON; defaults to up to eight platoons per board.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// At most four platoons per board.
    #[arg(long, conflicts_with = "config")]
    pub desk: bool,
    #[arg(long)]
    pub count: usize,
    /// `train:test`; defaults to an 80/20 split.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Clear,
    Busy,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NetArg {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training scenario set.
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long, value_enum, default_value = "full")]
    pub phase: PhaseArg,
    /// Iterations of the chosen phase; the clear phase under `full`.
    #[arg(long)]
    pub iters: u64,
    /// Busy iterations under `full`; defaults to `--iters`.
    #[arg(long)]
    pub busy_iters: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// CurriculumConfig JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "desk")]
    pub net: NetArg,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMode {
    NetOnly,
    ShortPathMcts,
    Mcts,
    Fifo,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Network checkpoint; uniform priors when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `mcts` uses the self-play search settings without noise.
    #[arg(long, value_enum, default_value = "short-path-mcts")]
    pub mode: SolveMode,
    #[arg(long)]
    pub simulations: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Fifo,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Policy checkpoint; without one only the baseline is reported.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub boards: PathBuf,
    #[arg(long, default_value = "short_path_mcts")]
    pub mode: EvalMode,
    #[arg(long, value_enum, default_value = "fifo")]
    pub baseline: Baseline,
    /// Overlay each board on a partly executed FIFO schedule of another.
    #[arg(long)]
    pub busy: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// SimulationFile JSON; a 3x3 fixed-time grid when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Run the six-step agent sweep instead of the spec's assignment.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long)]
    pub demand: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A directory written by train, evaluate or simulate.
    #[arg(long)]
    pub run: PathBuf,
}

/// Input of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationFile {
    #[serde(flatten)]
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub sweep: bool,
}

impl Default for SimulationFile {
    fn default() -> Self {
        Self {
            experiment: ExperimentSpec::new(WorldConfig::grid(3, 3, ControllerKind::FixedTime, 600.0, 0)),
            sweep: false,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let raw: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&raw) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!(
                "error kind=usage message={}",
                serde_json::to_string(first).expect("string")
            );
            return 2;
        }
    };
    let argv: Vec<String> = raw.iter().skip(1).map(|s| s.to_string_lossy().into_owned()).collect();
    match run(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "error kind={} message={}",
                e.kind(),
                serde_json::to_string(&e.to_string()).expect("string")
            );
            1
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    main_with_args(std::env::args_os())
}

pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    let layout = match &cli.layout {
        Some(p) => IntersectionLayout::load(p)?,
        None => IntersectionLayout::default_fourway(),
    };
    let layout_inputs: Vec<PathBuf> = cli.layout.iter().cloned().collect();
    let ctx = Ctx {
        out_root: cli.out_root.clone(),
        argv: argv.to_vec(),
        layout,
        layout_inputs,
    };
    match cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Solve(a) => cmd_solve(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Report(a) => cmd_report(a),
    }
}

struct Ctx {
    out_root: PathBuf,
    argv: Vec<String>,
    layout: IntersectionLayout,
    layout_inputs: Vec<PathBuf>,
}

impl Ctx {
    fn out_dir(&self, given: Option<PathBuf>, command: &str) -> Result<PathBuf> {
        let dir = given.unwrap_or_else(|| self.out_root.join(command));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn manifest(&self, command: &str, inputs: &[PathBuf], seed: u64, dir: &Path) -> Result<()> {
        let mut all = self.layout_inputs.clone();
        all.extend(inputs.iter().cloned());
        RunManifest::new(command, &self.argv, &all, seed, dir)?.write(dir)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn csv_row<I, T>(w: &mut csv::Writer<std::fs::File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row)
        .map_err(|e| Error::parse(path.display().to_string(), e))
}

fn parse_split(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("split {s:?} must look like train:test")))?;
    let num = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("split {s:?} must look like train:test")))
    };
    Ok((num(a)?, num(b)?))
}

fn cmd_generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    if a.count == 0 {
        return Err(Error::Config("--count must be at least 1".into()));
    }
    let mut cfg = match &a.config {
        Some(p) => read_json::<ScenarioConfig>(p)?,
        None if a.desk => ScenarioConfig::desk(0),
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let (train_n, test_n) = match &a.split {
        Some(s) => parse_split(s)?,
        None => {
            let train = (a.count * 4).div_ceil(5);
            (train, a.count - train)
        }
    };
    if train_n + test_n != a.count {
        return Err(Error::Config(format!(
            "split {train_n}:{test_n} does not add up to {}",
            a.count
        )));
    }
    let dir = ctx.out_dir(a.out, "generate")?;
    let reward = crate::board::RewardParams::default();
    let all = generate_scenarios(&cfg, &ctx.layout, &reward, a.count)?;
    let (train, test) = split_scenarios(&all, train_n, test_n)?;
    let set = |scenarios| ScenarioSet {
        layout: ctx.layout.id.clone(),
        seed: cfg.seed,
        scenarios,
    };
    set(all.clone()).save(dir.join("scenarios.json"))?;
    set(train.clone()).save(dir.join("train.json"))?;
    set(test.clone()).save(dir.join("test.json"))?;
    let split = serde_json::json!({
        "seed": cfg.seed,
        "config": cfg,
        "train": train.iter().map(|e| &e.fingerprint).collect::<Vec<_>>(),
        "test": test.iter().map(|e| &e.fingerprint).collect::<Vec<_>>(),
    });
    write_text(
        &dir.join("split.json"),
        &(serde_json::to_string_pretty(&split).expect("json") + "\n"),
    )?;
    ctx.manifest("generate", &a.config.into_iter().collect::<Vec<_>>(), cfg.seed, &dir)?;
    println!(
        "generated {} scenarios ({train_n} train, {test_n} test) in {}",
        a.count,
        dir.display()
    );
    Ok(())
}

fn load_boards(path: &Path, layout: &IntersectionLayout) -> Result<Vec<Board>> {
    let set = ScenarioSet::load(path)?;
    if set.scenarios.is_empty() {
        return Err(Error::Config(format!("{} holds no scenarios", path.display())));
    }
    set.boards(layout)
}

fn load_net(path: &Path, layout: &IntersectionLayout) -> Result<NetParams> {
    let (net, _, _) = load_checkpoint(path)?;
    let want = Board::feature_len(layout.num_areas());
    if net.config().input_dim != want {
        return Err(Error::Dimension(format!(
            "checkpoint expects {} inputs, layout {} encodes {want}",
            net.config().input_dim,
            layout.id
        )));
    }
    Ok(net)
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<CurriculumConfig>(p)?,
        None if a.net == NetArg::Desk => CurriculumConfig::desk(),
        None => CurriculumConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(k) = a.checkpoint_every {
        cfg.checkpoint_every = k;
    }
    cfg.validate()?;
    let boards = load_boards(&a.scenarios, &ctx.layout)?;
    let dir = ctx.out_dir(a.out, "train")?;

    let mut state = if a.resume {
        CurriculumState::load(&dir, &cfg.train)?
    } else {
        let mut net_cfg = match a.net {
            NetArg::Desk => NetConfig::desk(),
            NetArg::Paper => NetConfig::paper(),
        };
        net_cfg.input_dim = Board::feature_len(ctx.layout.num_areas());
        CurriculumState::new(NetParams::init(net_cfg, cfg.seed)?, &cfg.train)
    };
    let metrics_path = dir.join("metrics.csv");
    let mut metrics = MetricsWriter::create(&metrics_path, a.resume)?;
    let phases: Vec<(Phase, u64)> = match a.phase {
        PhaseArg::Clear => vec![(Phase::Clear, a.iters)],
        PhaseArg::Busy => vec![(Phase::Busy, a.iters)],
        PhaseArg::Full => vec![(Phase::Clear, a.iters), (Phase::Busy, a.busy_iters.unwrap_or(a.iters))],
    };
    for (phase, iters) in phases {
        if iters == 0 {
            continue;
        }
        run_curriculum(&mut state, &boards, &cfg, phase, iters, |m, s| {
            metrics.write(m)?;
            info!(
                "iteration {} {}: success {:.2}, reward {:.3}, loss {:.3}",
                m.iteration,
                m.phase.as_str(),
                m.success_rate,
                m.mean_reward,
                m.loss
            );
            if cfg.checkpoint_every > 0 && (m.iteration + 1) % cfg.checkpoint_every == 0 {
                s.save(&dir, &cfg.train, cfg.seed)?;
            }
            Ok(())
        })?;
    }
    state.save(&dir, &cfg.train, cfg.seed)?;
    let config_path = dir.join("curriculum_config.json");
    write_text(
        &config_path,
        &(serde_json::to_string_pretty(&cfg).expect("json") + "\n"),
    )?;
    let mut inputs = vec![a.scenarios.clone()];
    inputs.extend(a.config.iter().cloned());
    ctx.manifest("train", &inputs, cfg.seed, &dir)?;
    println!(
        "trained to iteration {} ({} archived solutions) in {}",
        state.iteration,
        state.archive.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_solve(ctx: &Ctx, a: SolveArgs) -> Result<()> {
    let boards = load_boards(&a.scenarios, &ctx.layout)?;
    let board = boards
        .get(a.index)
        .ok_or_else(|| Error::Config(format!("index {} outside 0..{}", a.index, boards.len())))?;
    let net = a.checkpoint.as_deref().map(|p| load_net(p, &ctx.layout)).transpose()?;
    let mut search = match a.mode {
        SolveMode::Mcts => SearchConfig {
            dirichlet_fraction: 0.0,
            temperature_moves: 0,
            ..SearchConfig::training()
        },
        _ => SearchConfig::short_path(),
    };
    if let Some(n) = a.simulations {
        search.simulations = n;
    }
    let reward = search.reward;
    let (last, outcome, actions) = match a.mode {
        SolveMode::Fifo => {
            let f = fifo_schedule_with(board, &reward);
            (f.board, f.outcome, Vec::new())
        }
        SolveMode::NetOnly => {
            let net = net
                .as_ref()
                .ok_or_else(|| Error::Config("net-only mode needs --checkpoint".into()))?;
            let (last, actions) = crate::training::greedy_rollout(net, board, &reward)?;
            let outcome = last.evaluate(&reward).unwrap_or_else(|| last.dead_end_outcome(&reward));
            (last, outcome, actions)
        }
        SolveMode::ShortPathMcts | SolveMode::Mcts => {
            let t = match &net {
                Some(n) => play_episode(board, &NetEvaluator::new(n, reward), &search, a.seed)?,
                None => play_episode(board, &UniformEvaluator::default(), &search, a.seed)?,
            };
            let (last, outcome) = t.schedule(&reward)?;
            if let Some(dir) = &a.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                write_text(&dir.join("trajectory.json"), &t.to_json())?;
            }
            (last, outcome, t.actions().collect())
        }
    };
    println!("{}", last.dump(Some(&ctx.layout)));
    let acts: Vec<String> = actions.iter().map(|x| format!("({},{})", x.row, x.moves)).collect();
    println!(
        "status={} t_cross={:.3} steps={} reward={:.6} actions=[{}]",
        outcome.status.as_str(),
        outcome.t_cross,
        outcome.steps,
        outcome.reward,
        acts.join(",")
    );
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut inputs = vec![a.scenarios.clone()];
        inputs.extend(a.checkpoint.iter().cloned());
        ctx.manifest("solve", &inputs, a.seed, dir)?;
    }
    Ok(())
}

/// Mean crossing-time reduction in percent over rows solved by both methods.
pub fn mean_reduction(pairs: &[(f64, f64)]) -> Option<f64> {
    let r: Vec<f64> = pairs.iter().map(|&(fifo, ours)| 100.0 * (fifo - ours) / fifo).collect();
    (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
}

fn cmd_evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let Baseline::Fifo = a.baseline;
    let mut boards = load_boards(&a.boards, &ctx.layout)?;
    let reward = crate::board::RewardParams::default();
    if a.busy {
        let resolved: Vec<Board> = boards.iter().map(|b| fifo_schedule_with(b, &reward).board).collect();
        boards = busy_boards(&resolved, &boards, (0.5, 0.9), a.seed);
    }
    let net = a.checkpoint.as_deref().map(|p| load_net(p, &ctx.layout)).transpose()?;
    let dir = ctx.out_dir(a.out, "evaluate")?;
    let fifo: Vec<_> = boards.iter().map(|b| fifo_schedule_with(b, &reward).outcome).collect();
    let report = net
        .as_ref()
        .map(|n| evaluate_policy(n, &boards, a.mode, &SearchConfig::short_path(), a.seed))
        .transpose()?;

    let path = dir.join("comparison.csv");
    let mut w = csv_writer(&path)?;
    if report.is_some() {
        csv_row(
            &mut w,
            &path,
            [
                "board",
                "fingerprint",
                "fifo_status",
                "fifo_t_cross",
                "pnmcts_status",
                "pnmcts_t_cross",
                "pnmcts_steps",
                "reduction_pct",
            ],
        )?;
    } else {
        csv_row(&mut w, &path, ["board", "fingerprint", "fifo_status", "fifo_t_cross"])?;
    }
    let mut pairs = Vec::new();
    for (i, (b, f)) in boards.iter().zip(&fifo).enumerate() {
        let mut row = vec![
            i.to_string(),
            b.fingerprint(),
            f.status.as_str().into(),
            format!("{:.3}", f.t_cross),
        ];
        if let Some(r) = &report {
            let p = &r.boards[i];
            let both = p.status == Status::Solved && f.status == Status::Solved;
            if both {
                pairs.push((f.t_cross, p.t_cross));
            }
            row.extend([
                p.status.as_str().to_string(),
                format!("{:.3}", p.t_cross),
                p.steps.to_string(),
                if both {
                    format!("{:.2}", 100.0 * (f.t_cross - p.t_cross) / f.t_cross)
                } else {
                    String::new()
                },
            ]);
        }
        csv_row(&mut w, &path, &row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let fifo_solved = fifo.iter().filter(|o| o.is_solved()).count();
    let summary = serde_json::json!({
        "boards": boards.len(),
        "busy": a.busy,
        "fifo_solved": fifo_solved,
        "mode": report.as_ref().map(|r| r.mode),
        "success_rate": report.as_ref().map(|r| r.success_rate),
        "mean_reward": report.as_ref().map(|r| r.mean_reward),
        "mean_solve_time_s": report.as_ref().map(|r| r.mean_solve_time_s),
        "median_solve_time_s": report.as_ref().map(|r| r.median_solve_time_s),
        "mean_reduction_pct": mean_reduction(&pairs),
    });
    write_text(
        &dir.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("json") + "\n"),
    )?;
    let mut inputs = vec![a.boards.clone()];
    inputs.extend(a.checkpoint.iter().cloned());
    ctx.manifest("evaluate", &inputs, a.seed, &dir)?;
    match &report {
        Some(r) => println!(
            "{} boards: policy solved {}, FIFO solved {fifo_solved}, mean reduction {}",
            boards.len(),
            r.solved(),
            mean_reduction(&pairs).map_or("n/a".into(), |x| format!("{x:.1}%"))
        ),
        None => println!("{} boards: FIFO solved {fifo_solved}", boards.len()),
    }
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let mut file = match &a.spec {
        Some(p) => read_json::<SimulationFile>(p)?,
        None => SimulationFile::default(),
    };
    if let Some(d) = a.demand {
        file.experiment.world.demand = d;
    }
    if let Some(h) = a.horizon {
        file.experiment.horizon = h;
    }
    if let Some(s) = a.seed {
        file.experiment.world.seed = s;
    }
    let net = a
        .checkpoint
        .as_deref()
        .map(|p| load_net(p, &ctx.layout))
        .transpose()?
        .map(Arc::new);
    let base = &file.experiment;
    let runs: Vec<(String, Vec<ControllerKind>)> = if a.sweep || file.sweep {
        sweep_assignments(base.world.rows, base.world.cols)
            .into_iter()
            .enumerate()
            .map(|(k, c)| (format!("scenario{}", k + 1), c))
            .collect()
    } else {
        vec![("run".into(), base.world.controllers.clone())]
    };
    let dir = ctx.out_dir(a.out, "simulate")?;
    let att_path = dir.join("att_tt.csv");
    let link_path = dir.join("links.csv");
    let mut att_w = csv_writer(&att_path)?;
    let mut link_w = csv_writer(&link_path)?;
    csv_row(
        &mut att_w,
        &att_path,
        [
            "run",
            "agents",
            "att_s",
            "tt",
            "injected",
            "exited",
            "in_network",
            "violations",
            "late_entries",
            "decisions",
            "fallbacks",
        ],
    )?;
    csv_row(
        &mut link_w,
        &link_path,
        [
            "run",
            "link",
            "intersection",
            "approach",
            "vehicles",
            "mean_travel_time_s",
        ],
    )?;
    for (name, controllers) in runs {
        let mut spec = base.clone();
        spec.world.controllers = controllers;
        let agents = spec
            .world
            .controllers
            .iter()
            .filter(|&&c| c == ControllerKind::PnmctsAgent)
            .count();
        let r = run_experiment(&spec, &ctx.layout, net.clone())?;
        let s = r.stats;
        csv_row(
            &mut att_w,
            &att_path,
            [
                name.clone(),
                agents.to_string(),
                r.att.map_or(String::new(), |x| format!("{x:.3}")),
                r.tt.to_string(),
                s.injected.to_string(),
                s.exited.to_string(),
                r.in_network.to_string(),
                s.violations.to_string(),
                s.late_entries.to_string(),
                s.decisions.to_string(),
                s.fallbacks.to_string(),
            ],
        )?;
        for l in &r.links {
            csv_row(
                &mut link_w,
                &link_path,
                [
                    name.clone(),
                    l.link.clone(),
                    l.intersection.to_string(),
                    l.approach.to_string(),
                    l.vehicles.to_string(),
                    l.mean_travel_time.map_or(String::new(), |x| format!("{x:.3}")),
                ],
            )?;
        }
        println!(
            "{name}: agents={agents} att={} tt={} violations={}",
            r.att.map_or("n/a".into(), |x| format!("{x:.2}")),
            r.tt,
            s.violations
        );
    }
    att_w.flush().map_err(|e| Error::io(&att_path, e))?;
    link_w.flush().map_err(|e| Error::io(&link_path, e))?;
    let mut inputs: Vec<PathBuf> = a.spec.iter().cloned().collect();
    inputs.extend(a.checkpoint.iter().cloned());
    ctx.manifest("simulate", &inputs, file.experiment.world.seed, &dir)?;
    write_text(
        &dir.join("simulation.json"),
        &(serde_json::to_string_pretty(&file).expect("json") + "\n"),
    )?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let header = r
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

fn mean_of(rows: &[Vec<String>], col: usize) -> Option<f64> {
    let xs: Vec<f64> = rows.iter().filter_map(|r| r.get(col)?.parse().ok()).collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Builds the markdown summary of a run directory.
pub fn report_text(dir: &Path) -> Result<String> {
    let mut out = format!("# Run {}\n", dir.display());
    let mut found = false;
    let metrics = dir.join("metrics.csv");
    if metrics.exists() {
        found = true;
        let (h, rows) = read_csv(&metrics)?;
        out.push_str(&format!("\n## Training\n\n{} iterations\n", rows.len()));
        if let (Some(p), Some(s)) = (column(&h, "phase"), column(&h, "success_rate")) {
            for phase in ["clear", "busy"] {
                let sel: Vec<Vec<String>> = rows.iter().filter(|r| r[p] == phase).cloned().collect();
                if sel.is_empty() {
                    continue;
                }
                let tail = &sel[sel.len().saturating_sub(20)..];
                out.push_str(&format!(
                    "- {phase}: {} iterations, success rate over the last {} = {:.3}\n",
                    sel.len(),
                    tail.len(),
                    mean_of(tail, s).unwrap_or(0.0)
                ));
            }
        }
    }
    let comparison = dir.join("comparison.csv");
    if comparison.exists() {
        found = true;
        let (h, rows) = read_csv(&comparison)?;
        out.push_str(&format!("\n## Evaluation\n\n{} boards\n", rows.len()));
        let solved = |name: &str| column(&h, name).map(|c| rows.iter().filter(|r| r[c] == "solved").count());
        if let Some(n) = solved("fifo_status") {
            out.push_str(&format!("- FIFO solved: {n}\n"));
        }
        if let Some(n) = solved("pnmcts_status") {
            out.push_str(&format!("- policy solved: {n}\n"));
        }
        if let Some(m) = column(&h, "reduction_pct").and_then(|c| mean_of(&rows, c)) {
            out.push_str(&format!("- mean crossing-time reduction: {m:.2}%\n"));
        }
    }
    let att = dir.join("att_tt.csv");
    if att.exists() {
        found = true;
        let (h, rows) = read_csv(&att)?;
        out.push_str("\n## Simulation\n\n| run | agents | ATT (s) | TT |\n|---|---|---|---|\n");
        let c = |n| column(&h, n).ok_or_else(|| Error::parse(att.display().to_string(), format!("missing column {n}")));
        let (run, agents, a, tt) = (c("run")?, c("agents")?, c("att_s")?, c("tt")?);
        for r in &rows {
            out.push_str(&format!("| {} | {} | {} | {} |\n", r[run], r[agents], r[a], r[tt]));
        }
    }
    if !found {
        return Err(Error::Config(format!(
            "{} has no metrics.csv, comparison.csv or att_tt.csv",
            dir.display()
        )));
    }
    Ok(out)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let text = report_text(&a.run)?;
    write_text(&a.run.join("report.md"), &text)?;
    print!("{text}");
    Ok(())
}
