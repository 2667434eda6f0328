use serde::{Deserialize, Serialize};

use crate::chromanet::{KeyModeMatrix, Ksp, CHROMAS};
use crate::datasets::{KeyLabel, Mode};
use crate::error::{Result, StoneError};

/// Minimum `max - median` of a calibration profile.
pub const MIN_CALIBRATION_SPREAD: f64 = 0.05;

/// Raw output of a 12- or 24-class model for one clip.
#[derive(Debug, Clone, PartialEq)]
pub enum Scores {
    Ksp(Ksp),
    Structured(KeyModeMatrix),
}

impl Scores {
    /// The key-signature profile, marginalizing modes if needed.
    pub fn lambda(&self) -> Ksp {
        match self {
            Scores::Ksp(y) => *y,
            Scores::Structured(y) => crate::chromanet::lambda_of(y),
        }
    }

    pub fn is_structured(&self) -> bool {
        matches!(self, Scores::Structured(_))
    }
}

/// Absolute-pitch alignment of a relatively trained model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub q_cal: usize,
    /// Whether the two mode channels must be exchanged (24-class only).
    pub mode_swap: bool,
}

impl CalibrationState {
    pub fn identity() -> Self {
        CalibrationState::default()
    }
}

fn median(values: &[f64; CHROMAS]) -> f64 {
    let mut sorted = *values;
    sorted.sort_by(f64::total_cmp);
    0.5 * (sorted[CHROMAS / 2 - 1] + sorted[CHROMAS / 2])
}

/// Calibrate from the model's response to a C major recording.
pub fn calibrate(scores: &Scores) -> Result<CalibrationState> {
    let lambda = scores.lambda();
    let values = lambda.values();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = max - median(values);
    if spread < MIN_CALIBRATION_SPREAD {
        return Err(StoneError::CalibrationNotDiscriminative { spread });
    }
    let q_cal = lambda.argmax();
    let mode_swap = match scores {
        Scores::Ksp(_) => false,
        Scores::Structured(y) => {
            let aligned = y.roll_rows(-(q_cal as i64));
            // the calibration clip is major: its signature row must favour channel 0
            let row = aligned.rows()[0];
            row[1] > row[0]
        }
    };
    Ok(CalibrationState { q_cal, mode_swap })
}

/// Shift a profile so that chroma `q_cal` moves to 0: `h(y)[q] = y[(q + q_cal) mod 12]`.
pub fn realign(y: &Ksp, cal: &CalibrationState) -> Ksp {
    y.roll(-(cal.q_cal as i64))
}

pub fn realign_structured(y: &KeyModeMatrix, cal: &CalibrationState) -> KeyModeMatrix {
    let aligned = y.roll_rows(-(cal.q_cal as i64));
    if cal.mode_swap {
        aligned.swap_modes()
    } else {
        aligned
    }
}

/// A decoded key: signature chroma, mode when available, and the calibrated scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyPrediction {
    pub signature: usize,
    pub mode: Option<Mode>,
    /// 12 chroma scores, or 24 scores in `(q, mode)` row-major order.
    pub scores: Vec<f64>,
}

impl KeyPrediction {
    pub fn from_signature(signature: usize, scores: Vec<f64>) -> Self {
        KeyPrediction {
            signature,
            mode: None,
            scores,
        }
    }

    pub fn from_key(key: KeyLabel, scores: Vec<f64>) -> Self {
        KeyPrediction {
            signature: key.key_signature(),
            mode: Some(key.mode()),
            scores,
        }
    }

    pub fn key(&self) -> Option<KeyLabel> {
        self.mode
            .map(|m| KeyLabel::from_signature(self.signature, m))
    }
}

/// Calibrate and take the argmax (lowest index on ties).
pub fn decode_key(scores: &Scores, cal: &CalibrationState) -> KeyPrediction {
    match scores {
        Scores::Ksp(y) => {
            let aligned = realign(y, cal);
            KeyPrediction::from_signature(aligned.argmax(), aligned.values().to_vec())
        }
        Scores::Structured(y) => {
            let aligned = realign_structured(y, cal);
            let (q, m) = aligned.argmax();
            let flat = aligned
                .rows()
                .iter()
                .flat_map(|r| r.iter().copied())
                .collect();
            KeyPrediction::from_key(KeyLabel::from_signature(q, Mode::from_index(m)), flat)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realign_moves_the_calibration_peak_to_c() {
        for p in 0..12 {
            let y = Ksp::one_hot(p);
            for q_cal in 0..12 {
                let cal = CalibrationState {
                    q_cal,
                    mode_swap: false,
                };
                assert_eq!(realign(&y, &cal).argmax(), (p + 12 - q_cal) % 12);
            }
        }
        let cal = CalibrationState {
            q_cal: 3,
            mode_swap: false,
        };
        assert_eq!(realign(&Ksp::one_hot(3), &cal), Ksp::one_hot(0));
        assert_eq!(
            realign(&Ksp::one_hot(7), &CalibrationState::identity()),
            Ksp::one_hot(7)
        );
    }

    #[test]
    fn realign_is_a_group_action() {
        let y = Ksp::softmax(&(0..12).map(|i| (i * i % 7) as f64).collect::<Vec<_>>());
        for a in 0..12 {
            let ca = CalibrationState {
                q_cal: a,
                mode_swap: false,
            };
            let inverse = CalibrationState {
                q_cal: (12 - a) % 12,
                mode_swap: false,
            };
            assert_eq!(realign(&realign(&y, &ca), &inverse).argmax(), y.argmax());
            for b in 0..12 {
                let cb = CalibrationState {
                    q_cal: b,
                    mode_swap: false,
                };
                let cab = CalibrationState {
                    q_cal: (a + b) % 12,
                    mode_swap: false,
                };
                let lhs = realign(&realign(&y, &ca), &cb);
                let rhs = realign(&y, &cab);
                for q in 0..12 {
                    assert!((lhs.values()[q] - rhs.values()[q]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn calibration_examples() {
        let peaked = |q: usize| {
            let mut logits = vec![0.0; 12];
            logits[q] = 3.0;
            Scores::Ksp(Ksp::softmax(&logits))
        };
        assert_eq!(calibrate(&peaked(0)).unwrap(), CalibrationState::identity());
        assert_eq!(calibrate(&peaked(3)).unwrap().q_cal, 3);
        assert!(matches!(
            calibrate(&Scores::Ksp(Ksp::uniform())),
            Err(StoneError::CalibrationNotDiscriminative { .. })
        ));
        // major calibration clip answered on the minor channel
        let swapped = Scores::Structured(KeyModeMatrix::one_hot(4, 1));
        let cal = calibrate(&swapped).unwrap();
        assert_eq!(
            cal,
            CalibrationState {
                q_cal: 4,
                mode_swap: true
            }
        );
        assert_eq!(
            decode_key(&swapped, &cal).key().unwrap().to_string(),
            "C:maj"
        );
    }

    #[test]
    fn decode_examples() {
        let id = CalibrationState::identity();
        let major = decode_key(&Scores::Structured(KeyModeMatrix::one_hot(0, 0)), &id);
        assert_eq!(major.key().unwrap().to_string(), "C:maj");
        let minor = decode_key(&Scores::Structured(KeyModeMatrix::one_hot(0, 1)), &id);
        assert_eq!(minor.key().unwrap().to_string(), "A:min");
        assert_eq!(decode_key(&Scores::Ksp(Ksp::uniform()), &id).signature, 0);
        assert_eq!(
            decode_key(&Scores::Structured(KeyModeMatrix::uniform()), &id)
                .key()
                .unwrap()
                .to_string(),
            "C:maj"
        );
    }

    #[test]
    fn decode_is_equivariant_to_row_shifts() {
        let logits: Vec<f64> = (0..24).map(|i| ((i * 7) % 24) as f64 * 0.1).collect();
        let y = KeyModeMatrix::softmax(&logits);
        let base = decode_key(&Scores::Structured(y), &CalibrationState::identity());
        for k in 0..12i64 {
            let moved = decode_key(
                &Scores::Structured(y.roll_rows(k)),
                &CalibrationState::identity(),
            );
            assert_eq!(moved.signature, (base.signature + k as usize) % 12);
            assert_eq!(moved.mode, base.mode);
        }
    }
}
