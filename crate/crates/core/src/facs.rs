//! Facial action units and the PSPI pain score.
//!
//! The Prkachin–Solomon Pain Intensity is a sum over six action units:
//!
//! ```text
//! PSPI = AU4 + max(AU6, AU7) + max(AU9, AU10) + AU43
//! ```
//!
//! AU4..AU10 are scored 0 (absent) to 5 (FACS A..E); AU43 is binary. The
//! score therefore ranges over 0..=16.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_PSPI: u8 = 16;
/// Number of distinct integer PSPI values (0..=16).
pub const PSPI_LEVELS: usize = MAX_PSPI as usize + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionUnit {
    Au4,
    Au6,
    Au7,
    Au9,
    Au10,
    Au43,
}

impl ActionUnit {
    pub const ALL: [ActionUnit; 6] = [
        ActionUnit::Au4,
        ActionUnit::Au6,
        ActionUnit::Au7,
        ActionUnit::Au9,
        ActionUnit::Au10,
        ActionUnit::Au43,
    ];

    pub fn code(self) -> u32 {
        match self {
            ActionUnit::Au4 => 4,
            ActionUnit::Au6 => 6,
            ActionUnit::Au7 => 7,
            ActionUnit::Au9 => 9,
            ActionUnit::Au10 => 10,
            ActionUnit::Au43 => 43,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        ActionUnit::ALL.into_iter().find(|au| au.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionUnit::Au4 => "AU4",
            ActionUnit::Au6 => "AU6",
            ActionUnit::Au7 => "AU7",
            ActionUnit::Au9 => "AU9",
            ActionUnit::Au10 => "AU10",
            ActionUnit::Au43 => "AU43",
        }
    }

    pub fn descriptor(self) -> &'static str {
        match self {
            ActionUnit::Au4 => "Brow Lowerer",
            ActionUnit::Au6 => "Cheek Raiser",
            ActionUnit::Au7 => "Lid Tightener",
            ActionUnit::Au9 => "Nose Wrinkler",
            ActionUnit::Au10 => "Upper Lip Raise",
            ActionUnit::Au43 => "Eyes Closed",
        }
    }

    pub fn max_intensity(self) -> u8 {
        match self {
            ActionUnit::Au43 => 1,
            _ => 5,
        }
    }
}

impl fmt::Display for ActionUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Intensities of the six action units that enter the PSPI sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionUnitVector {
    pub au4: u8,
    pub au6: u8,
    pub au7: u8,
    pub au9: u8,
    pub au10: u8,
    pub au43: u8,
}

impl ActionUnitVector {
    pub fn new(au4: u8, au6: u8, au7: u8, au9: u8, au10: u8, au43: u8) -> Result<Self> {
        let v = ActionUnitVector {
            au4,
            au6,
            au7,
            au9,
            au10,
            au43,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn get(&self, au: ActionUnit) -> u8 {
        match au {
            ActionUnit::Au4 => self.au4,
            ActionUnit::Au6 => self.au6,
            ActionUnit::Au7 => self.au7,
            ActionUnit::Au9 => self.au9,
            ActionUnit::Au10 => self.au10,
            ActionUnit::Au43 => self.au43,
        }
    }

    /// Sets an intensity given as a real number. Fractional or out-of-range
    /// values are rejected with an error naming the action unit.
    pub fn set(&mut self, au: ActionUnit, intensity: f64) -> Result<()> {
        let max = au.max_intensity();
        if !intensity.is_finite()
            || intensity.fract() != 0.0
            || intensity < 0.0
            || intensity > f64::from(max)
        {
            return Err(Error::InvalidActionUnit {
                au: au.name(),
                value: intensity,
                max,
            });
        }
        let v = intensity as u8;
        match au {
            ActionUnit::Au4 => self.au4 = v,
            ActionUnit::Au6 => self.au6 = v,
            ActionUnit::Au7 => self.au7 = v,
            ActionUnit::Au9 => self.au9 = v,
            ActionUnit::Au10 => self.au10 = v,
            ActionUnit::Au43 => self.au43 = v,
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for au in ActionUnit::ALL {
            let value = self.get(au);
            if value > au.max_intensity() {
                return Err(Error::InvalidActionUnit {
                    au: au.name(),
                    value: f64::from(value),
                    max: au.max_intensity(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PainScore(u8);

impl PainScore {
    pub fn new(value: u8) -> Result<Self> {
        if value > MAX_PSPI {
            return Err(Error::InvalidInput(format!(
                "PSPI {value} exceeds maximum {MAX_PSPI}"
            )));
        }
        Ok(PainScore(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Display for PainScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PainClass {
    pub index: usize,
    pub n_classes: usize,
}

/// PSPI score of a validated action unit vector.
pub fn compute_pspi(au: &ActionUnitVector) -> Result<PainScore> {
    au.validate()?;
    let value = au.au4 + au.au6.max(au.au7) + au.au9.max(au.au10) + au.au43;
    Ok(PainScore(value))
}

/// Maps a PSPI score onto one of `n_classes` contiguous bins over 0..=16.
///
/// With 17 classes this is the identity. Otherwise bin `b` covers scores in
/// `[b * 17 / n, (b + 1) * 17 / n)`.
pub fn quantize_pspi(score: PainScore, n_classes: usize) -> Result<PainClass> {
    if n_classes < 2 {
        return Err(Error::config(
            "n_classes",
            format!("must be at least 2, got {n_classes}"),
        ));
    }
    // floor(v * n / 17) in exact integer arithmetic
    let index = (usize::from(score.value()) * n_classes / PSPI_LEVELS).min(n_classes - 1);
    Ok(PainClass { index, n_classes })
}

/// Inclusive PSPI range `(lo, hi)` covered by class `index`, or `None` when the
/// bin contains no integer score (possible when `n_classes > 17`).
pub fn class_score_range(index: usize, n_classes: usize) -> Option<(u8, u8)> {
    let scores: Vec<u8> = (0..=MAX_PSPI)
        .filter(|&v| usize::from(v) * n_classes / PSPI_LEVELS == index)
        .collect();
    Some((*scores.first()?, *scores.last()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn au(v: [u8; 6]) -> ActionUnitVector {
        ActionUnitVector::new(v[0], v[1], v[2], v[3], v[4], v[5]).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(compute_pspi(&au([0, 0, 0, 0, 0, 0])).unwrap().value(), 0);
        assert_eq!(compute_pspi(&au([5, 5, 5, 5, 5, 1])).unwrap().value(), 16);
        assert_eq!(compute_pspi(&au([2, 1, 3, 0, 4, 1])).unwrap().value(), 10);
    }

    #[test]
    fn out_of_range_names_the_action_unit() {
        let err = ActionUnitVector::new(0, 6, 0, 0, 0, 0).unwrap_err();
        assert!(err.to_string().contains("AU6"), "{err}");
        let err = ActionUnitVector::new(0, 0, 0, 0, 0, 2).unwrap_err();
        assert!(err.to_string().contains("AU43"), "{err}");

        let raw = ActionUnitVector {
            au10: 9,
            ..Default::default()
        };
        let err = compute_pspi(&raw).unwrap_err();
        assert!(err.to_string().contains("AU10"), "{err}");
    }

    #[test]
    fn fractional_intensity_rejected() {
        let mut v = ActionUnitVector::default();
        let err = v.set(ActionUnit::Au7, 2.5).unwrap_err();
        assert!(err.to_string().contains("AU7"));
        v.set(ActionUnit::Au7, 3.0).unwrap();
        assert_eq!(v.au7, 3);
    }

    #[test]
    fn quantize_examples() {
        let q = |v, n| quantize_pspi(PainScore::new(v).unwrap(), n).unwrap().index;
        assert_eq!(q(16, 17), 16);
        assert_eq!(q(0, 4), 0);
        assert_eq!(q(9, 4), 2);
        // bin edges for 4 classes sit at 4.25, 8.5, 12.75
        assert_eq!(q(4, 4), 0);
        assert_eq!(q(5, 4), 1);
        assert_eq!(q(8, 4), 1);
        assert_eq!(q(12, 4), 2);
        assert_eq!(q(13, 4), 3);
        assert_eq!(q(16, 4), 3);
        assert!(quantize_pspi(PainScore::new(3).unwrap(), 1).is_err());
    }

    #[test]
    fn quantize_is_identity_at_17() {
        for v in 0..=MAX_PSPI {
            let c = quantize_pspi(PainScore::new(v).unwrap(), 17).unwrap();
            assert_eq!(c.index, usize::from(v));
        }
    }

    #[test]
    fn quantize_monotone_and_surjective() {
        for n in 2..=PSPI_LEVELS {
            let classes: Vec<usize> = (0..=MAX_PSPI)
                .map(|v| quantize_pspi(PainScore::new(v).unwrap(), n).unwrap().index)
                .collect();
            assert!(classes.windows(2).all(|w| w[0] <= w[1]), "n={n}");
            for c in 0..n {
                assert!(classes.contains(&c), "class {c} unreachable for n={n}");
            }
        }
    }

    #[test]
    fn class_ranges_for_three_bands() {
        assert_eq!(class_score_range(0, 3), Some((0, 5)));
        assert_eq!(class_score_range(1, 3), Some((6, 11)));
        assert_eq!(class_score_range(2, 3), Some((12, 16)));
    }

    #[test]
    fn monotone_in_each_action_unit() {
        // single-step increments from every valid vector
        for a4 in 0..=5u8 {
            for a6 in 0..=5u8 {
                for a7 in 0..=5u8 {
                    for a9 in 0..=5u8 {
                        for a10 in 0..=5u8 {
                            for a43 in 0..=1u8 {
                                let base = au([a4, a6, a7, a9, a10, a43]);
                                let p = compute_pspi(&base).unwrap();
                                for unit in ActionUnit::ALL {
                                    let cur = base.get(unit);
                                    if cur < unit.max_intensity() {
                                        let mut up = base;
                                        up.set(unit, f64::from(cur + 1)).unwrap();
                                        assert!(compute_pspi(&up).unwrap() >= p);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
