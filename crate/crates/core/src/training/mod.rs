//! Scenario generation, the clear-to-busy curriculum, evaluation and the
//! first-come-first-served baseline.

mod archive;
mod augment;
mod curriculum;
mod evaluate;
mod fifo;
mod scenarios;

pub use archive::BestSoFarArchive;
pub use augment::{new_row_count, permute_new_rows};
pub use curriculum::{
    build_busy_pool, run_curriculum, CurriculumConfig, CurriculumState, IterationMetrics, MetricsWriter, Phase,
};
pub use evaluate::{evaluate_policy, greedy_rollout, BoardReport, EvalMode, EvalReport};
pub use fifo::{fifo_schedule, fifo_schedule_with, FifoSchedule};
pub use scenarios::{busy_boards, generate_scenarios, sample_scenario, split_scenarios, ScenarioConfig};
