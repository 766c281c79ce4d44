//! Reflection in Creative Experience (RiCE) questionnaire scoring.
//!
//! Nine Likert items in order: three on the current process (Cp), three on
//! self (Se), three through experimentation (Ex). The last Ex item is worded
//! negatively and is reverse-scored before averaging. The scale is a
//! parameter; the total is the mean of all nine adjusted items on that scale.

use serde::Serialize;
use thiserror::Error;

pub const ITEMS: usize = 9;
pub const REVERSED: usize = 8;
pub const DEFAULT_SCALE: (f64, f64) = (1.0, 7.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiceScores {
    pub total: f64,
    pub cp: f64,
    pub se: f64,
    pub ex: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiceError {
    #[error("expected {ITEMS} items, got {0}")]
    WrongArity(usize),
    #[error("item {index} = {value} is outside [{lo}, {hi}]")]
    OutOfRange { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("invalid scale [{0}, {1}]")]
    InvalidScale(f64, f64),
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn score(items: &[f64], (lo, hi): (f64, f64)) -> Result<RiceScores, RiceError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(RiceError::InvalidScale(lo, hi));
    }
    if items.len() != ITEMS {
        return Err(RiceError::WrongArity(items.len()));
    }
    let mut adjusted = [0.0; ITEMS];
    for (index, &value) in items.iter().enumerate() {
        if !(value >= lo && value <= hi) {
            return Err(RiceError::OutOfRange { index, value, lo, hi });
        }
        adjusted[index] = if index == REVERSED { lo + hi - value } else { value };
    }
    Ok(RiceScores {
        total: mean(&adjusted),
        cp: mean(&adjusted[0..3]),
        se: mean(&adjusted[3..6]),
        ex: mean(&adjusted[6..9]),
    })
}
