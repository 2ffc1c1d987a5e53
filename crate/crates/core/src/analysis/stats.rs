//! Descriptive statistics and Pearson correlation.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Mean and sample standard deviation of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd<T> {
    pub mean: T,
    pub std: T,
}

fn cast<T: Float>(n: usize) -> T {
    T::from(n).expect("count representable as float")
}

pub(crate) fn mean<T: Float>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, &v| acc + v) / cast(values.len())
}

/// Arithmetic mean and sample (n - 1) standard deviation; `std` is zero for a
/// single value.
pub fn mean_std<T: Float>(values: &[T]) -> Result<MeanStd<T>, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mu = mean(values);
    if values.len() == 1 {
        return Ok(MeanStd {
            mean: mu,
            std: T::zero(),
        });
    }
    let ss = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - mu) * (v - mu));
    Ok(MeanStd {
        mean: mu,
        std: (ss / cast(values.len() - 1)).sqrt(),
    })
}

/// Pearson product-moment correlation.
///
/// The result is clamped to `[-1, 1]`, and values within four ulps of ±1 are
/// snapped to ±1 so exact linear relationships report exactly ±1.
pub fn pearson<T: Float>(xs: &[T], ys: &[T]) -> Result<T, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooFewPoints {
            needed: 2,
            got: xs.len(),
        });
    }
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(AnalysisError::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    let one = T::one();
    let snap = T::epsilon() * cast(4);
    Ok(if one - r.abs() <= snap {
        one.copysign(r)
    } else {
        r
    })
}
