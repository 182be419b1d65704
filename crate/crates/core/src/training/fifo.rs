use crate::board::{moves_to_seconds, Board, EpisodeOutcome, RewardParams, RowKind, MAX_MOVES, MOVE_SECONDS};

/// A first-come-first-served schedule for a board.
#[derive(Debug, Clone, PartialEq)]
pub struct FifoSchedule {
    /// The board with every delay applied. Its step count is the number of
    /// actions needed to express the delays.
    pub board: Board,
    /// Added delay per row, in moves.
    pub delays: Vec<u32>,
    pub outcome: EpisodeOutcome,
}

/// [`fifo_schedule_with`] under the default reward parameters.
pub fn fifo_schedule(board: &Board) -> FifoSchedule {
    fifo_schedule_with(board, &RewardParams::default())
}

/// Grants the intersection in order of first arrival.
///
/// New rows are taken by earliest entry (row index on ties) and each is
/// delayed by the fewest 0.1 s moves that clear every row scheduled before
/// it. Residual rows are fixed, and when present every new row waits until
/// the residual schedule has finished.
pub fn fifo_schedule_with(board: &Board, reward: &RewardParams) -> FifoSchedule {
    let mut b = board.clone();
    let rows = b.occupied_rows();
    let mut scheduled: Vec<usize> = (0..rows)
        .filter(|&r| b.row_kind(r) == RowKind::Residual && b.row_max_exit(r).is_some())
        .collect();
    let residual_end = scheduled.iter().filter_map(|&r| b.row_max_exit(r)).reduce(f64::max);

    let mut order: Vec<(f64, usize)> = (0..rows)
        .filter(|&r| b.row_kind(r) == RowKind::New)
        .filter_map(|r| b.row_min_entry(r).map(|e| (e, r)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut delays = vec![0u32; rows];
    let mut steps = b.step_count();
    for (entry, r) in order {
        let base = b.row_delay(r);
        let mut k = match residual_end {
            Some(end) if end > entry => ((end - entry) / MOVE_SECONDS - 1e-6).ceil().max(0.0) as u32,
            _ => 0,
        };
        loop {
            b.set_row_delay(r, base + k);
            let after_residual = residual_end.map_or(true, |end| entry + moves_to_seconds(k) >= end - 1e-9);
            if after_residual && !scheduled.iter().any(|&s| b.rows_conflict(r, s)) {
                break;
            }
            k += 1;
        }
        delays[r] = k;
        steps += k.div_ceil(MAX_MOVES);
        scheduled.push(r);
    }
    b.set_step_count(steps);
    let outcome = b.evaluate(reward).expect("a FIFO schedule is conflict-free");
    FifoSchedule {
        board: b,
        delays,
        outcome,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{Cell, Status};
    use proptest::prelude::*;

    fn one_area(rows: &[(f64, f64)]) -> Board {
        let mut b = Board::empty(1);
        for (i, &(e, x)) in rows.iter().enumerate() {
            b.push_row(RowKind::New, i as u32, &[Cell::Interval { entry: e, exit: x }])
                .unwrap();
        }
        b
    }

    #[test]
    fn conflict_free_board_is_untouched() {
        let b = one_area(&[(0.0, 1.0), (1.0, 2.0)]);
        let s = fifo_schedule(&b);
        assert_eq!(s.delays, vec![0, 0]);
        assert_eq!(s.outcome.t_cross, 2.0);
        assert_eq!(s.outcome.steps, 0);
    }

    #[test]
    fn later_arrival_waits() {
        let b = one_area(&[(1.0, 5.0), (0.0, 4.0)]);
        let s = fifo_schedule(&b);
        assert_eq!(s.delays, vec![30, 0]);
        assert!((s.outcome.t_cross - 8.0).abs() < 1e-9);
        assert_eq!(s.outcome.steps, 2);
        assert_eq!(s.outcome.status, Status::Solved);
    }

    #[test]
    fn new_rows_wait_for_the_residual() {
        let mut b = Board::empty(2);
        b.push_row(
            RowKind::New,
            1,
            &[Cell::Absent, Cell::Interval { entry: 0.5, exit: 1.0 }],
        )
        .unwrap();
        b.push_row(
            RowKind::Residual,
            0,
            &[Cell::Interval { entry: 0.0, exit: 3.0 }, Cell::Absent],
        )
        .unwrap();
        let s = fifo_schedule(&b);
        // No shared area, yet the new row still starts after 3.0 s.
        assert_eq!(s.delays[0], 25);
        assert!((s.board.row_min_entry(0).unwrap() - 3.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn always_conflict_free(rows in proptest::collection::vec((0.0f64..10.0, 0.5f64..4.0), 1..8)) {
            let rows: Vec<(f64, f64)> = rows.into_iter().map(|(e, d)| (e, e + d)).collect();
            let s = fifo_schedule(&one_area(&rows));
            prop_assert!(!s.board.has_conflict());
        }
    }
}
