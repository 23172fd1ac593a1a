//! Sampled inequality and monotonicity tests with explicit slack.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Outcome of a sampled check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Satisfied,
    Inconclusive,
    Violated,
}

impl Status {
    /// The worse of two outcomes.
    pub fn and(self, other: Status) -> Status {
        self.max(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Smallest relative first difference in the required direction and the index
/// of the right endpoint where it occurs. Positive means strictly monotone.
pub fn mono_margin<T: Real>(vals: &[T], dir: Direction) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for i in 0..vals.len().saturating_sub(1) {
        let (a, b) = (vals[i].as_f64(), vals[i + 1].as_f64());
        let d = match dir {
            Direction::Increasing => b - a,
            Direction::Decreasing => a - b,
        };
        let scale = a.abs().max(b.abs()).max(1e-300);
        let m = if d.is_nan() { f64::NEG_INFINITY } else { d / scale };
        if m < best.0 {
            best = (m, i + 1);
        }
    }
    best
}

/// Strict condition `margin > 0`: inconclusive when within `slack` of zero.
pub fn strict_status(margin: f64, slack: f64) -> Status {
    if margin.is_nan() {
        Status::Inconclusive
    } else if margin > slack {
        Status::Satisfied
    } else if margin < -slack {
        Status::Violated
    } else {
        Status::Inconclusive
    }
}

/// Non-strict condition `margin ≥ 0`.
pub fn weak_status(margin: f64, slack: f64) -> Status {
    if margin.is_nan() {
        Status::Inconclusive
    } else if margin >= -slack {
        Status::Satisfied
    } else {
        Status::Violated
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margins_and_statuses() {
        let (m, i) = mono_margin(&[3.0, 2.0, 2.0, 1.0], Direction::Decreasing);
        assert_eq!((m, i), (0.0, 2));
        assert_eq!(strict_status(m, 1e-10), Status::Inconclusive);
        assert_eq!(weak_status(m, 1e-10), Status::Satisfied);
        let (m, _) = mono_margin(&[1.0, 2.0, 1.5], Direction::Increasing);
        assert!(m < 0.0);
        assert_eq!(strict_status(m, 1e-10), Status::Violated);
        assert_eq!(Status::Satisfied.and(Status::Inconclusive), Status::Inconclusive);
    }
}
