use std::collections::{HashSet, VecDeque};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{busy_boards, fifo_schedule_with, new_row_count, permute_new_rows, BestSoFarArchive};
use crate::board::Board;
use crate::error::{Error, Result};
use crate::policynet::{
    load_checkpoint, loss, save_checkpoint, CheckpointMeta, Mode, NetParams, Optimizer, Sample, TrainConfig,
};
use crate::search::{board_seed, parallel_round, NetEvaluator, SearchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Fresh boards on an empty intersection.
    Clear,
    /// Fresh boards stacked on a schedule still being executed.
    Busy,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Clear => "clear",
            Phase::Busy => "busy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// Boards played per round.
    pub boards_per_round: usize,
    pub workers: usize,
    /// Probability of replaying the archived solution of a board that was
    /// just failed.
    pub resample_prob: f64,
    /// Samples kept for training; the oldest are dropped first.
    pub replay_capacity: usize,
    /// Optimizer steps after each round.
    pub updates_per_round: u32,
    /// Range of the fraction of a resolved schedule already executed when
    /// fresh platoons arrive on a busy board.
    pub busy_elapsed_fraction: (f64, f64),
    /// Busy boards built per training board.
    pub busy_per_board: usize,
    /// Entropy weight is halved every this many iterations.
    pub beta_halving_every: u64,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: u64,
    /// Extra copies of each sample with its new rows shuffled.
    #[serde(default)]
    pub row_permutations: usize,
    pub seed: u64,
    pub search: SearchConfig,
    pub train: TrainConfig,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            boards_per_round: 8,
            workers: 1,
            resample_prob: 0.25,
            replay_capacity: 8192,
            updates_per_round: 1,
            busy_elapsed_fraction: (0.5, 0.9),
            busy_per_board: 2,
            beta_halving_every: 300,
            checkpoint_every: 0,
            row_permutations: 0,
            seed: 0,
            search: SearchConfig::training(),
            train: TrainConfig::default(),
        }
    }
}

impl CurriculumConfig {
    /// Settings for the small network on boards of at most four platoons.
    pub fn desk() -> Self {
        Self {
            boards_per_round: 16,
            updates_per_round: 4,
            row_permutations: 3,
            search: SearchConfig {
                rollout_depth: 0,
                ..SearchConfig::training()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.resample_prob) {
            return Err(Error::Config(format!(
                "resample probability {} outside [0,1]",
                self.resample_prob
            )));
        }
        if self.boards_per_round == 0 || self.workers == 0 || self.replay_capacity < 2 {
            return Err(Error::Config(
                "boards per round, workers and replay capacity must be positive".into(),
            ));
        }
        let (lo, hi) = self.busy_elapsed_fraction;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(
                "busy elapsed fraction must be an ordered range in [0,1]".into(),
            ));
        }
        self.search.validate()?;
        self.train.validate()
    }
}

/// Per-iteration training record, one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: u64,
    pub phase: Phase,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_solve_time_s: f64,
    pub loss: f64,
    pub cross_entropy: f64,
    pub value_mse: f64,
    pub entropy: f64,
    pub archive_size: usize,
    pub resampled: usize,
}

/// Everything the curriculum carries from one iteration to the next.
#[derive(Debug, Clone)]
pub struct CurriculumState {
    pub net: NetParams,
    pub optimizer: Optimizer,
    pub archive: BestSoFarArchive,
    /// Conflict-free final boards of solved clear episodes.
    pub resolved: Vec<Board>,
    pub busy_pool: Vec<Board>,
    pub iteration: u64,
    pub phase: Phase,
    replay: VecDeque<Sample>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    iteration: u64,
    phase: Phase,
    archive: BestSoFarArchive,
    resolved: Vec<Board>,
    busy_pool: Vec<Board>,
}

const CHECKPOINT_FILE: &str = "net.ckpt";
const STATE_FILE: &str = "curriculum.json";

impl CurriculumState {
    pub fn new(net: NetParams, train: &TrainConfig) -> Self {
        let optimizer = Optimizer::new(&net, train);
        Self {
            net,
            optimizer,
            archive: BestSoFarArchive::new(),
            resolved: Vec::new(),
            busy_pool: Vec::new(),
            iteration: 0,
            phase: Phase::Clear,
            replay: VecDeque::new(),
        }
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    /// Writes the network, optimizer and curriculum bookkeeping to `dir`.
    /// The replay window is not saved; it restarts empty on resume.
    pub fn save(&self, dir: &Path, train: &TrainConfig, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = CheckpointMeta {
            iteration: self.iteration,
            phase: self.phase.as_str().into(),
            seed,
        };
        save_checkpoint(
            dir.join(CHECKPOINT_FILE),
            &self.net,
            &meta,
            Some((&self.optimizer, train)),
        )?;
        let file = StateFile {
            iteration: self.iteration,
            phase: self.phase,
            archive: self.archive.clone(),
            resolved: self.resolved.clone(),
            busy_pool: self.busy_pool.clone(),
        };
        let path = dir.join(STATE_FILE);
        let text = serde_json::to_string(&file).expect("state serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, train: &TrainConfig) -> Result<Self> {
        let (net, _, opt) = load_checkpoint(dir.join(CHECKPOINT_FILE))?;
        let optimizer = opt.map(|(o, _)| o).unwrap_or_else(|| Optimizer::new(&net, train));
        let path = dir.join(STATE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: StateFile = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        Ok(Self {
            net,
            optimizer,
            archive: file.archive,
            resolved: file.resolved,
            busy_pool: file.busy_pool,
            iteration: file.iteration,
            phase: file.phase,
            replay: VecDeque::new(),
        })
    }

    fn enter_phase(&mut self, phase: Phase, train_boards: &[Board], cfg: &CurriculumConfig) {
        if self.phase != phase {
            self.replay.clear();
            self.phase = phase;
        }
        if phase == Phase::Busy && self.busy_pool.is_empty() {
            self.busy_pool = build_busy_pool(&self.resolved, train_boards, cfg);
        }
    }
}

/// Busy training boards from the resolved pool, falling back to FIFO
/// schedules of the training boards when nothing has been resolved yet.
pub fn build_busy_pool(resolved: &[Board], train_boards: &[Board], cfg: &CurriculumConfig) -> Vec<Board> {
    let fallback: Vec<Board>;
    let residuals = if resolved.is_empty() {
        fallback = train_boards
            .iter()
            .map(|b| fifo_schedule_with(b, &cfg.search.reward).board)
            .collect();
        &fallback
    } else {
        resolved
    };
    let fresh: Vec<Board> = (0..cfg.busy_per_board.max(1))
        .flat_map(|_| train_boards.iter().cloned())
        .collect();
    busy_boards(residuals, &fresh, cfg.busy_elapsed_fraction, cfg.seed ^ 0xB05E)
}

/// Runs `iterations` rounds of the given phase on top of `state`.
///
/// Each round plays `boards_per_round` boards drawn from the phase's pool
/// with the current network, archives the solutions, mixes archived
/// solutions of failed boards back in with probability `resample_prob`, and
/// takes `updates_per_round` optimizer steps on the replay window.
pub fn run_curriculum(
    state: &mut CurriculumState,
    train_boards: &[Board],
    cfg: &CurriculumConfig,
    phase: Phase,
    iterations: u64,
    mut on_iteration: impl FnMut(&IterationMetrics, &CurriculumState) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    if train_boards.is_empty() {
        return Err(Error::Config("training pool is empty".into()));
    }
    state.enter_phase(phase, train_boards, cfg);
    let pool: Vec<Board> = match phase {
        Phase::Clear => train_boards.to_vec(),
        Phase::Busy => state.busy_pool.clone(),
    };
    if pool.is_empty() {
        return Err(Error::Config("no busy boards could be built".into()));
    }
    let mut resolved_seen: HashSet<String> = state.resolved.iter().map(Board::fingerprint).collect();

    for _ in 0..iterations {
        let it = state.iteration;
        let mut rng = ChaCha8Rng::seed_from_u64(board_seed(cfg.seed, it as usize));
        let boards: Vec<Board> = (0..cfg.boards_per_round)
            .map(|_| pool[rng.random_range(0..pool.len())].clone())
            .collect();

        let started = Instant::now();
        let evaluator = NetEvaluator::new(&state.net, cfg.search.reward);
        let trajectories = parallel_round(&boards, &evaluator, &cfg.search, cfg.workers, rng.random())?;
        let round_time = started.elapsed().as_secs_f64();

        let mut fresh = Vec::new();
        let mut resampled = 0;
        for t in &trajectories {
            if t.error.is_some() {
                continue;
            }
            fresh.extend(t.samples());
            if t.outcome.is_solved() {
                state.archive.offer(t);
                if phase == Phase::Clear {
                    let last = t.final_board()?;
                    if resolved_seen.insert(last.fingerprint()) {
                        state.resolved.push(last);
                    }
                }
            } else if let Some(best) = state.archive.get(&t.initial.fingerprint()) {
                if rng.random_bool(cfg.resample_prob) {
                    fresh.extend(best.samples());
                    resampled += 1;
                }
            }
        }
        let mut extra = Vec::new();
        for s in &fresh {
            let n = new_row_count(s);
            if n < 2 {
                continue;
            }
            for _ in 0..cfg.row_permutations {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                extra.push(permute_new_rows(s, &perm));
            }
        }
        for s in fresh.into_iter().chain(extra) {
            if state.replay.len() == cfg.replay_capacity {
                state.replay.pop_front();
            }
            state.replay.push_back(s);
        }

        let mut train = cfg.train;
        train.beta = match phase {
            Phase::Clear => 0.0,
            Phase::Busy => cfg.train.beta * 0.5f64.powi((it / cfg.beta_halving_every.max(1)) as i32),
        };
        let mut last_loss = Default::default();
        if state.replay.len() >= 2 {
            for _ in 0..cfg.updates_per_round {
                let mut grads = Vec::with_capacity(train.accumulation_steps);
                for _ in 0..train.accumulation_steps {
                    let n = train.batch_size.min(state.replay.len());
                    let batch: Vec<Sample> = (0..n)
                        .map(|_| state.replay[rng.random_range(0..state.replay.len())].clone())
                        .collect();
                    grads.push(loss(&state.net, &batch, &train, Mode::Train)?);
                }
                last_loss = grads.iter().fold(crate::policynet::LossBreakdown::default(), |acc, g| {
                    let k = grads.len() as f64;
                    crate::policynet::LossBreakdown {
                        total: acc.total + g.loss.total / k,
                        cross_entropy: acc.cross_entropy + g.loss.cross_entropy / k,
                        value_mse: acc.value_mse + g.loss.value_mse / k,
                        entropy: acc.entropy + g.loss.entropy / k,
                    }
                });
                state.optimizer.accumulate_and_step(&mut state.net, &grads);
            }
        }

        let n = trajectories.len() as f64;
        let metrics = IterationMetrics {
            iteration: it,
            phase,
            success_rate: trajectories.iter().filter(|t| t.outcome.is_solved()).count() as f64 / n,
            mean_reward: trajectories.iter().map(|t| t.outcome.reward).sum::<f64>() / n,
            mean_solve_time_s: round_time / n,
            loss: last_loss.total,
            cross_entropy: last_loss.cross_entropy,
            value_mse: last_loss.value_mse,
            entropy: last_loss.entropy,
            archive_size: state.archive.len(),
            resampled,
        };
        state.iteration += 1;
        on_iteration(&metrics, state)?;
    }
    Ok(())
}

/// Writes metrics rows to a CSV file with a header.
pub struct MetricsWriter {
    inner: csv::Writer<std::fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, append: bool) -> Result<Self> {
        let exists = append && path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let inner = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
        Ok(Self { inner })
    }

    pub fn write(&mut self, m: &IterationMetrics) -> Result<()> {
        self.inner
            .serialize(m)
            .and_then(|_| self.inner.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Config(format!("metrics csv: {e}")))
    }
}
