//! Three-band membership: a measured value is acceptable, tolerable, or
//! unacceptable relative to the two thresholds of a requirement. Values on
//! either threshold count as tolerable, whichever way the scale points.

use crate::context::QualityLevel;
use crate::model::{FuzzyMembership, Orientation};

/// Band of `value` under the membership function.
pub fn classify(m: &FuzzyMembership, value: f64) -> QualityLevel {
    let (x1, x2) = (m.x1, m.x2);
    match m.orientation {
        Orientation::LowerIsBetter => {
            if value < x1 {
                QualityLevel::Acceptable
            } else if value <= x2 {
                QualityLevel::Tolerable
            } else {
                QualityLevel::Unacceptable
            }
        }
        Orientation::HigherIsBetter => {
            if value > x2 {
                QualityLevel::Acceptable
            } else if value >= x1 {
                QualityLevel::Tolerable
            } else {
                QualityLevel::Unacceptable
            }
        }
    }
}

/// Degree of degradation in `[0, 1]`: 0 well inside the acceptable band,
/// 1 at or beyond the unacceptable threshold, linear in between. With
/// coinciding thresholds the ramp collapses to a step with 0.5 on the edge.
pub fn badness(m: &FuzzyMembership, value: f64) -> f64 {
    let (x1, x2) = (m.x1, m.x2);
    let raw = if x1 == x2 {
        match m.orientation {
            Orientation::LowerIsBetter => {
                if value < x1 {
                    0.0
                } else if value == x1 {
                    0.5
                } else {
                    1.0
                }
            }
            Orientation::HigherIsBetter => {
                if value > x1 {
                    0.0
                } else if value == x1 {
                    0.5
                } else {
                    1.0
                }
            }
        }
    } else {
        match m.orientation {
            Orientation::LowerIsBetter => (value - x1) / (x2 - x1),
            Orientation::HigherIsBetter => (x2 - value) / (x2 - x1),
        }
    };
    raw.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeInterval;

    fn lower(x1: f64, x2: f64) -> FuzzyMembership {
        FuzzyMembership {
            orientation: Orientation::LowerIsBetter,
            x1,
            x2,
            interval: TimeInterval::PerInstance,
        }
    }

    fn higher(x1: f64, x2: f64) -> FuzzyMembership {
        FuzzyMembership {
            orientation: Orientation::HigherIsBetter,
            x1,
            x2,
            interval: TimeInterval::PerInstance,
        }
    }

    #[test]
    fn lower_is_better_bands() {
        let m = lower(2000.0, 4000.0);
        assert_eq!(classify(&m, 1999.9), QualityLevel::Acceptable);
        assert_eq!(classify(&m, 2000.0), QualityLevel::Tolerable);
        assert_eq!(classify(&m, 3000.0), QualityLevel::Tolerable);
        assert_eq!(classify(&m, 4000.0), QualityLevel::Tolerable);
        assert_eq!(classify(&m, 4000.1), QualityLevel::Unacceptable);
    }

    #[test]
    fn higher_is_better_bands() {
        let m = higher(0.9, 0.95);
        assert_eq!(classify(&m, 0.96), QualityLevel::Acceptable);
        assert_eq!(classify(&m, 0.95), QualityLevel::Tolerable);
        assert_eq!(classify(&m, 0.9), QualityLevel::Tolerable);
        assert_eq!(classify(&m, 0.89), QualityLevel::Unacceptable);
    }

    #[test]
    fn badness_ramps_between_thresholds() {
        let m = lower(100.0, 200.0);
        assert_eq!(badness(&m, 50.0), 0.0);
        assert_eq!(badness(&m, 100.0), 0.0);
        assert_eq!(badness(&m, 150.0), 0.5);
        assert_eq!(badness(&m, 200.0), 1.0);
        assert_eq!(badness(&m, 500.0), 1.0);

        let m = higher(0.5, 1.0);
        assert_eq!(badness(&m, 1.0), 0.0);
        assert_eq!(badness(&m, 0.75), 0.5);
        assert_eq!(badness(&m, 0.5), 1.0);
        assert_eq!(badness(&m, 0.0), 1.0);
    }

    #[test]
    fn coinciding_thresholds_collapse_to_a_step() {
        let m = lower(300.0, 300.0);
        assert_eq!(classify(&m, 299.0), QualityLevel::Acceptable);
        assert_eq!(classify(&m, 300.0), QualityLevel::Tolerable);
        assert_eq!(classify(&m, 301.0), QualityLevel::Unacceptable);
        assert_eq!(badness(&m, 299.0), 0.0);
        assert_eq!(badness(&m, 300.0), 0.5);
        assert_eq!(badness(&m, 301.0), 1.0);
    }
}
