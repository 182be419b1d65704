//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL ...`
//! line to stderr (uncaptured) and then asserts.
//!
//! Criteria 7 to 9 share one trained desk network, built on first use.

use std::collections::HashSet;
use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnmcts::board::{Action, Board, Cell, RewardParams, Status, MAX_MOVES};
use pnmcts::geometry::IntersectionLayout;
use pnmcts::policynet::{loss, masked_softmax, Mode, NetConfig, NetParams, Sample, TrainConfig};
use pnmcts::scenario::Scenario;
use pnmcts::search::{board_seed, parallel_round, play_episode, NetEvaluator, SearchConfig, UniformEvaluator};
use pnmcts::simulator::{run_experiment, sweep_assignments, ControllerKind, ExperimentSpec, WorldConfig};
use pnmcts::training::{
    busy_boards, evaluate_policy, fifo_schedule, generate_scenarios, run_curriculum, sample_scenario, split_scenarios,
    CurriculumConfig, CurriculumState, EvalMode, Phase, ScenarioConfig,
};

fn report(n: u32, pass: bool, detail: &str, elapsed: Duration, budget: Duration) {
    let within = elapsed <= budget;
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(
        err,
        "criterion {n}: {verdict} {detail} ({:.1} s of {} s)",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
}

fn layout() -> IntersectionLayout {
    IntersectionLayout::default_fourway()
}

#[test]
fn criterion_01_transformation_fidelity() {
    let t0 = Instant::now();
    let layout = layout();
    let board = Scenario::demo().board(&layout).unwrap();
    let got: HashSet<(String, u32, u32)> = board
        .conflicts()
        .iter()
        .map(|c| {
            let (a, b) = (board.row_label(c.row_a), board.row_label(c.row_b));
            (layout.areas[c.area].id.clone(), a.min(b), a.max(b))
        })
        .collect();
    let want: HashSet<(String, u32, u32)> = [("A".to_string(), 1, 4), ("D".to_string(), 3, 4)].into_iter().collect();
    let pass = got == want;
    report(
        1,
        pass,
        &format!("conflicts {got:?}"),
        t0.elapsed(),
        Duration::from_secs(1),
    );
    assert_eq!(got, want);
    assert!(t0.elapsed() < Duration::from_secs(1));
}

/// Crossing time and conflict test from raw cells, written independently of
/// the board's own methods.
fn oracle_outcome(board: &Board, p: &RewardParams) -> Option<(Status, f64)> {
    let rows = board.occupied_rows();
    let cells: Vec<Vec<Cell>> = (0..rows).map(|r| board.row_cells(r)).collect();
    let mut t = 0.0f64;
    for row in &cells {
        for c in row {
            if let Some((_, exit)) = c.interval() {
                t = t.max(exit);
            }
        }
    }
    let mut conflict = false;
    for i in 0..rows {
        for j in i + 1..rows {
            for a in 0..board.num_areas() {
                if let (Some(x), Some(y)) = (cells[i][a].interval(), cells[j][a].interval()) {
                    if x.0.max(y.0) < x.1.min(y.1) - 1e-9 {
                        conflict = true;
                    }
                }
            }
        }
    }
    let s = board.step_count();
    if t > p.t_max + 1e-9 {
        Some((Status::FailTime, -1.0))
    } else if s > p.s_max {
        Some((Status::FailSteps, -1e-3))
    } else if !conflict {
        Some((Status::Solved, 0.5 * (1.0 - t / 30.0) + 0.5 * (1.0 - s as f64 / 20.0)))
    } else {
        None
    }
}

#[test]
fn criterion_02_reward_correctness() {
    let t0 = Instant::now();
    let layout = layout();
    let p = RewardParams::default();
    let cfg = ScenarioConfig::desk(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut statuses = HashSet::new();
    let mut count = 0;
    while count < 1000 {
        let mut board = sample_scenario(&cfg, &layout, &mut rng).board(&layout).unwrap();
        // Short delays tend to run out of steps, long ones out of time.
        let max_moves = [1, 3, MAX_MOVES][count % 3];
        loop {
            let oracle = oracle_outcome(&board, &p);
            match board.evaluate(&p) {
                Some(o) => {
                    let (status, reward) = oracle.expect("oracle agrees the board is terminal");
                    assert_eq!(o.status, status);
                    worst = worst.max((o.reward - reward).abs());
                    statuses.insert(status);
                    count += 1;
                    break;
                }
                None => assert!(oracle.is_none()),
            }
            let rows: Vec<usize> = (0..board.occupied_rows())
                .filter(|&r| board.row_max_exit(r).is_some())
                .collect();
            let row = rows[rng.random_range(0..rows.len())];
            board = board.apply(Action::new(row, rng.random_range(1..=max_moves))).unwrap();
        }
    }
    // Sentinels on hand-built boards.
    let base = Scenario::demo().board(&layout).unwrap();
    let mut many = base.clone();
    for _ in 0..21 {
        many = many.apply(Action::new(1, 1)).unwrap();
    }
    let steps = many.evaluate(&p).unwrap();
    let mut late = base.clone();
    for _ in 0..10 {
        late = late.apply(Action::new(0, 20)).unwrap();
    }
    let time = late.evaluate(&p).unwrap();
    let sentinels = steps.status == Status::FailSteps
        && steps.reward == -1e-3
        && time.status == Status::FailTime
        && time.reward == -1.0;
    let pass = worst < 1e-12 && sentinels && statuses.len() == 3;
    report(
        2,
        pass,
        &format!(
            "max |error| {worst:.2e} over {count} boards, statuses seen {}",
            statuses.len()
        ),
        t0.elapsed(),
        Duration::from_secs(5),
    );
    assert!(pass);
    assert!(t0.elapsed() < Duration::from_secs(5));
}

fn random_samples(cfg: &NetConfig, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let features = (0..cfg.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut mask: Vec<bool> = (0..cfg.action_dim).map(|_| rng.random_bool(0.3)).collect();
            mask[0] = true;
            let raw: Vec<f64> = mask
                .iter()
                .map(|&m| if m { rng.random::<f64>() } else { 0.0 })
                .collect();
            let sum: f64 = raw.iter().sum();
            Sample {
                features,
                mask,
                policy: raw.iter().map(|r| r / sum).collect(),
                value: rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

#[test]
fn criterion_03_gradient_oracle() {
    let t0 = Instant::now();
    let cfg = NetConfig {
        hidden_layers: 3,
        hidden_width: 8,
        ..NetConfig::desk()
    };
    let net = NetParams::init(cfg, 3).unwrap();
    let batch = random_samples(&cfg, 4, 3);
    let mut worst = 0.0f64;
    for beta in [0.0, 0.01] {
        let tc = TrainConfig {
            beta,
            ..TrainConfig::default()
        };
        let g = loss(&net, &batch, &tc, Mode::Train).unwrap();
        // Five-point stencil: truncation error O(h^4), roundoff ~ eps / h.
        let h = 1e-4;
        let mut probe = net.clone();
        for i in 0..net.num_params() {
            let orig = probe.theta()[i];
            let mut at = |x: f64| {
                probe.theta_mut()[i] = orig + x;
                loss(&probe, &batch, &tc, Mode::Train).unwrap().loss.total
            };
            let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            probe.theta_mut()[i] = orig;
            let rel = (numeric - g.theta[i]).abs() / numeric.abs().max(g.theta[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let pass = worst < 1e-4;
    report(
        3,
        pass,
        &format!("worst relative error {worst:.2e} over {} parameters", net.num_params()),
        t0.elapsed(),
        Duration::from_secs(30),
    );
    assert!(pass);
    assert!(t0.elapsed() < Duration::from_secs(30));
}

#[test]
fn criterion_04_mask_soundness() {
    let t0 = Instant::now();
    let layout = layout();
    let p = RewardParams::default();
    let net = NetParams::init(NetConfig::desk(), 4).unwrap();
    let cfg = ScenarioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut leaks, mut worst_sum) = (0usize, 0.0f64);
    let mut n = 0;
    while n < 10_000 {
        let mut board = sample_scenario(&cfg, &layout, &mut rng).board(&layout).unwrap();
        for _ in 0..rng.random_range(0..4) {
            let legal: Vec<usize> = board.legal_actions(&p).legal_indices().collect();
            if legal.is_empty() {
                break;
            }
            board = board
                .apply(Action::from_index(legal[rng.random_range(0..legal.len())]))
                .unwrap();
        }
        let mask = board.legal_actions(&p);
        if !mask.any() {
            continue;
        }
        let pred = net.forward(&board.encode(&p), mask.as_slice()).unwrap();
        leaks += pred
            .policy
            .iter()
            .zip(mask.as_slice())
            .filter(|&(&q, &m)| !m && q != 0.0)
            .count();
        let s: f64 = pred
            .policy
            .iter()
            .zip(mask.as_slice())
            .filter(|p| *p.1)
            .map(|p| *p.0)
            .sum();
        worst_sum = worst_sum.max((s - 1.0).abs());
        n += 1;
    }
    // The softmax itself, on extreme logits.
    let logits: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 800.0 } else { -800.0 }).collect();
    let m: Vec<bool> = (0..8).map(|i| i % 3 != 0).collect();
    let q = masked_softmax(&logits, &m).unwrap();
    leaks += q.iter().zip(&m).filter(|&(&q, &m)| !m && q != 0.0).count();
    let pass = leaks == 0 && worst_sum <= 1e-6;
    report(
        4,
        pass,
        &format!("{n} boards, masked mass leaks {leaks}, worst |sum - 1| {worst_sum:.2e}"),
        t0.elapsed(),
        Duration::from_secs(30),
    );
    assert!(pass);
    assert!(t0.elapsed() < Duration::from_secs(30));
}

/// Smallest crossing time over solved schedules of at most `depth` actions
/// with delays in 1..=5.
fn brute_force(board: &Board, p: &RewardParams, depth: u32) -> Option<f64> {
    if let Some(o) = board.evaluate(p) {
        return (o.status == Status::Solved).then_some(o.t_cross);
    }
    if depth == 0 {
        return None;
    }
    let mut best: Option<f64> = None;
    for i in board.legal_actions(p).restrict_moves(5).legal_indices() {
        let next = board.apply(Action::from_index(i)).unwrap();
        if let Some(t) = brute_force(&next, p, depth - 1) {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    }
    best
}

#[test]
fn criterion_05_search_matches_brute_force() {
    let t0 = Instant::now();
    let layout = layout();
    let p = RewardParams::default();
    let cfg = ScenarioConfig {
        platoons: (2, 2),
        ..ScenarioConfig::desk(5)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let search = SearchConfig {
        simulations: 10_000,
        rollout_depth: 0,
        restrict_moves: Some(5),
        ..SearchConfig::short_path()
    };
    let (mut boards, mut hits) = (0, 0);
    let mut misses = Vec::new();
    while boards < 100 {
        let board = sample_scenario(&cfg, &layout, &mut rng).board(&layout).unwrap();
        if !board.has_conflict() {
            continue;
        }
        let Some(opt) = brute_force(&board, &p, 3) else {
            continue;
        };
        let t = play_episode(&board, &UniformEvaluator::default(), &search, boards as u64).unwrap();
        if t.outcome.status == Status::Solved && t.outcome.t_cross <= opt + 0.1 + 1e-9 {
            hits += 1;
        } else {
            misses.push((boards, opt, t.outcome.t_cross, t.outcome.status));
        }
        boards += 1;
    }
    let pass = hits >= 95;
    report(
        5,
        pass,
        &format!("{hits}/100 within 0.1 s, misses {misses:?}"),
        t0.elapsed(),
        Duration::from_secs(300),
    );
    assert!(pass);
    assert!(t0.elapsed() < Duration::from_secs(300));
}

#[test]
fn criterion_06_parallel_determinism() {
    let t0 = Instant::now();
    let layout = layout();
    let p = RewardParams::default();
    let entries = generate_scenarios(&ScenarioConfig::desk(6), &layout, &p, 8).unwrap();
    let boards: Vec<Board> = entries.iter().map(|e| e.scenario.board(&layout).unwrap()).collect();
    let net = NetParams::init(NetConfig::desk(), 6).unwrap();
    let eval = NetEvaluator::new(&net, p);
    let cfg = SearchConfig {
        simulations: 100,
        ..SearchConfig::training()
    };
    let base = 0xD5EED;
    let sequential: Vec<_> = boards
        .iter()
        .enumerate()
        .map(|(i, b)| play_episode(b, &eval, &cfg, board_seed(base, i)).unwrap())
        .collect();
    let mut same = Vec::new();
    for workers in [1, 2, 8] {
        same.push(parallel_round(&boards, &eval, &cfg, workers, base).unwrap() == sequential);
    }
    let pass = same.iter().all(|&s| s);
    report(
        6,
        pass,
        &format!("identical for 1/2/8 workers: {same:?}"),
        t0.elapsed(),
        Duration::from_secs(120),
    );
    assert!(pass);
    assert!(t0.elapsed() < Duration::from_secs(120));
}

struct Desk {
    trained: NetParams,
    control: NetParams,
    clear_test: Vec<Board>,
    busy_test: Vec<Board>,
    train_time: Duration,
}

/// 50 training and 20 held-out boards of at most four platoons, 150 clear
/// and 50 busy iterations.
fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let t0 = Instant::now();
        let layout = layout();
        let reward = RewardParams::default();
        let entries = generate_scenarios(&ScenarioConfig::desk(11), &layout, &reward, 70).unwrap();
        let (tr, te) = split_scenarios(&entries, 50, 20).unwrap();
        let train: Vec<Board> = tr.iter().map(|e| e.scenario.board(&layout).unwrap()).collect();
        let clear_test: Vec<Board> = te.iter().map(|e| e.scenario.board(&layout).unwrap()).collect();
        let resolved: Vec<Board> = clear_test.iter().map(|b| fifo_schedule(b).board).collect();
        let busy_test = busy_boards(&resolved, &clear_test, (0.5, 0.9), 77);

        let control = NetParams::init(NetConfig::desk(), 1).unwrap();
        let cfg = CurriculumConfig::desk();
        let mut state = CurriculumState::new(control.clone(), &cfg.train);
        run_curriculum(&mut state, &train, &cfg, Phase::Clear, 150, |_, _| Ok(())).unwrap();
        run_curriculum(&mut state, &train, &cfg, Phase::Busy, 50, |_, _| Ok(())).unwrap();
        assert_eq!(state.iteration, 200);
        Desk {
            trained: state.net,
            control,
            clear_test,
            busy_test,
            train_time: t0.elapsed(),
        }
    })
}

#[test]
fn criterion_07_desk_curriculum() {
    let t0 = Instant::now();
    let d = desk();
    let sp = SearchConfig::short_path();
    let rate = |net: &NetParams, boards: &[Board]| {
        evaluate_policy(net, boards, EvalMode::ShortPathMcts, &sp, 0)
            .unwrap()
            .success_rate
    };
    let (tc, tb) = (rate(&d.trained, &d.clear_test), rate(&d.trained, &d.busy_test));
    let (cc, cb) = (rate(&d.control, &d.clear_test), rate(&d.control, &d.busy_test));
    let pass = tc >= 0.8 && tb >= 0.7 && tc > cc && tb > cb;
    let elapsed = t0.elapsed().max(d.train_time);
    report(
        7,
        pass,
        &format!(
            "clear {tc:.2} (control {cc:.2}), busy {tb:.2} (control {cb:.2}) over {}+{} boards, training {:.0} s",
            d.clear_test.len(),
            d.busy_test.len(),
            d.train_time.as_secs_f64()
        ),
        elapsed,
        Duration::from_secs(1800),
    );
    assert!(pass);
    assert!(elapsed < Duration::from_secs(1800));
}

#[test]
fn criterion_08_fifo_dominance() {
    let d = desk();
    let t0 = Instant::now();
    let sp = SearchConfig::short_path();
    let mut worse = Vec::new();
    let mut reductions = Vec::new();
    for (clear, boards) in [(true, &d.clear_test), (false, &d.busy_test)] {
        let r = evaluate_policy(&d.trained, boards, EvalMode::ShortPathMcts, &sp, 0).unwrap();
        for (b, rep) in boards.iter().zip(&r.boards) {
            if !rep.solved() {
                continue;
            }
            let fifo = fifo_schedule(b).outcome;
            if fifo.is_solved() && rep.t_cross > fifo.t_cross + 1e-9 {
                worse.push((rep.t_cross, fifo.t_cross));
            }
            if clear && fifo.is_solved() {
                reductions.push(100.0 * (fifo.t_cross - rep.t_cross) / fifo.t_cross);
            }
        }
    }
    let mean = reductions.iter().sum::<f64>() / reductions.len().max(1) as f64;
    let pass = worse.is_empty() && !reductions.is_empty() && mean >= 25.0;
    report(
        8,
        pass,
        &format!(
            "{} solved boards slower than FIFO {worse:?}, mean clear reduction {mean:.1}% over {}",
            worse.len(),
            reductions.len()
        ),
        t0.elapsed(),
        Duration::from_secs(300),
    );
    assert!(pass);
    assert!(t0.elapsed() < Duration::from_secs(300));
}

fn sweep() -> &'static (Vec<(usize, f64, usize)>, Duration) {
    static SWEEP: OnceLock<(Vec<(usize, f64, usize)>, Duration)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let net = Arc::new(desk().trained.clone());
        let t0 = Instant::now();
        let layout = layout();
        let rows = sweep_assignments(3, 3)
            .into_iter()
            .map(|controllers| {
                let mut world = WorldConfig::grid(3, 3, ControllerKind::FixedTime, 600.0, 42);
                world.controllers = controllers;
                let agents = world
                    .controllers
                    .iter()
                    .filter(|&&c| c == ControllerKind::PnmctsAgent)
                    .count();
                let spec = ExperimentSpec::new(world);
                let r = run_experiment(&spec, &layout, Some(net.clone())).unwrap();
                (agents, r.att.unwrap(), r.stats.violations)
            })
            .collect();
        (rows, t0.elapsed())
    })
}

#[test]
fn criterion_09_grid_trend() {
    let (rows, elapsed) = sweep();
    let fixed = rows[0].1;
    let all = rows[5].1;
    let single = rows[1].1;
    let a = all < 0.5 * fixed;
    let b = single >= fixed;
    let atts: Vec<String> = rows.iter().map(|r| format!("{}:{:.1}", r.0, r.1)).collect();
    report(
        9,
        a && b,
        &format!(
            "ATT by agent count [{}]; all-agent ratio {:.2} (a {a}), single centre >= fixed (b {b})",
            atts.join(", "),
            all / fixed
        ),
        *elapsed,
        Duration::from_secs(600),
    );
    assert!(a, "all-agent ATT {all} not below half of fixed-time {fixed}");
    assert!(b, "single-agent ATT {single} below fixed-time {fixed}");
    assert!(*elapsed < Duration::from_secs(600));
}

#[test]
fn criterion_10_safety_invariant() {
    let (rows, elapsed) = sweep();
    let violations: usize = rows.iter().map(|r| r.2).sum();
    report(
        10,
        violations == 0,
        &format!(
            "{violations} occupancy violations at agent intersections over {} runs",
            rows.len()
        ),
        *elapsed,
        Duration::from_secs(600),
    );
    assert_eq!(violations, 0);
}
