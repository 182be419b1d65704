use crate::board::{MAX_MOVES, MAX_ROWS};
use crate::policynet::Sample;

const NEW_ROW_FLAG: f64 = 0.5;

fn areas_of(sample: &Sample) -> usize {
    (sample.features.len() - MAX_ROWS) / (2 * MAX_ROWS)
}

/// Number of leading new rows in an encoded board.
pub fn new_row_count(sample: &Sample) -> usize {
    let base = 2 * MAX_ROWS * areas_of(sample);
    (0..MAX_ROWS)
        .take_while(|&r| sample.features[base + r] == NEW_ROW_FLAG)
        .count()
}

/// The same position with new row `i` moved to row `perm[i]`.
///
/// The platoons on a board carry no order, so the permuted sample is an
/// equally valid training target. Residual and empty rows stay in place.
pub fn permute_new_rows(sample: &Sample, perm: &[usize]) -> Sample {
    let areas = areas_of(sample);
    let width = 2 * areas;
    let moves = MAX_MOVES as usize;
    let mut out = sample.clone();
    for (from, &to) in perm.iter().enumerate() {
        out.features[to * width..(to + 1) * width].copy_from_slice(&sample.features[from * width..(from + 1) * width]);
        out.mask[to * moves..(to + 1) * moves].copy_from_slice(&sample.mask[from * moves..(from + 1) * moves]);
        out.policy[to * moves..(to + 1) * moves].copy_from_slice(&sample.policy[from * moves..(from + 1) * moves]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{Action, Board, Cell, RewardParams, RowKind};

    #[test]
    fn permuting_matches_a_reordered_board() {
        let reward = RewardParams::default();
        let rows = [(0.0, 2.0), (1.0, 3.0), (2.5, 4.0)];
        let build = |order: &[usize]| {
            let mut b = Board::empty(1);
            for &i in order {
                let (e, x) = rows[i];
                b.push_row(RowKind::New, i as u32, &[Cell::Interval { entry: e, exit: x }])
                    .unwrap();
            }
            b.push_row(RowKind::Residual, 9, &[Cell::Interval { entry: 5.0, exit: 6.0 }])
                .unwrap();
            b
        };
        let sample_of = |b: &Board, hot: Action| {
            let mask = b.legal_actions(&reward).as_slice().to_vec();
            let mut policy = vec![0.0; mask.len()];
            policy[hot.index()] = 1.0;
            Sample {
                features: b.encode(&reward),
                mask,
                policy,
                value: 0.3,
            }
        };
        let a = sample_of(&build(&[0, 1, 2]), Action::new(1, 7));
        assert_eq!(new_row_count(&a), 3);
        // Row 0 -> 2, 1 -> 0, 2 -> 1 gives board order [1, 2, 0].
        let p = permute_new_rows(&a, &[2, 0, 1]);
        let expected = sample_of(&build(&[1, 2, 0]), Action::new(0, 7));
        assert_eq!(p, expected);
    }
}
