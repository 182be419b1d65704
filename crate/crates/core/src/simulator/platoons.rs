use crate::geometry::{MovementId, Platoon};

/// A vehicle waiting on an approach lane, as seen by the platoon former.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueuedVehicle {
    pub movement: MovementId,
    /// Distance from the vehicle's front to the stop line, m.
    pub distance: f64,
    /// m/s
    pub speed: f64,
}

/// Groups a lane queue, front first, into platoons.
///
/// Consecutive vehicles on the same movement join the current platoon while
/// their time headway to the vehicle ahead is at most `headway` seconds and
/// the platoon has fewer than `max_size` vehicles. Speed and distance come
/// from the head vehicle.
pub fn form_platoons(queue: &[QueuedVehicle], max_size: u32, headway: f64) -> Vec<Platoon> {
    let mut out: Vec<Platoon> = Vec::new();
    let mut prev: Option<&QueuedVehicle> = None;
    for v in queue {
        let joins = match (out.last(), prev) {
            (Some(p), Some(ahead)) => {
                p.movement == v.movement
                    && p.vehicle_count < max_size.max(1)
                    && (v.distance - ahead.distance) / v.speed <= headway + 1e-9
            }
            _ => false,
        };
        if joins {
            out.last_mut().expect("checked above").vehicle_count += 1;
        } else {
            let id = out.len() as u32 + 1;
            out.push(Platoon::new(id, v.movement, v.speed, v.distance, 1));
        }
        prev = Some(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Approach, Turn};

    fn q(turn: Turn, distance: f64) -> QueuedVehicle {
        QueuedVehicle {
            movement: MovementId::new(Approach::N, turn),
            distance,
            speed: 5.0,
        }
    }

    #[test]
    fn five_bumper_to_bumper_split_four_and_one() {
        let queue: Vec<_> = (0..5).map(|i| q(Turn::Straight, 7.0 * i as f64)).collect();
        let p = form_platoons(&queue, 4, 2.0);
        assert_eq!(p.iter().map(|p| p.vehicle_count).collect::<Vec<_>>(), vec![4, 1]);
        assert_eq!(p[1].distance, 28.0);
        assert_eq!(p[0].speed, 5.0);
    }

    #[test]
    fn alternating_movements_are_singletons() {
        let queue: Vec<_> = (0..4)
            .map(|i| q(if i % 2 == 0 { Turn::Left } else { Turn::Straight }, 7.0 * i as f64))
            .collect();
        let p = form_platoons(&queue, 4, 2.0);
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|p| p.vehicle_count == 1));
    }

    #[test]
    fn long_headway_starts_a_new_platoon() {
        let p = form_platoons(&[q(Turn::Left, 0.0), q(Turn::Left, 10.0), q(Turn::Left, 20.5)], 4, 2.0);
        assert_eq!(p.iter().map(|p| p.vehicle_count).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn empty_queue() {
        assert!(form_platoons(&[], 4, 2.0).is_empty());
    }
}
