//! ThroughCut: slope-cone outlier detection on (inference time, response
//! length) scatter data.
//!
//! A central line through the origin is fitted to the cloud. Two angular steps
//! derived from the 95% upper bound of one axis open a cone around it:
//!
//! ```text
//! theta_central = atan(m_central)
//! theta_step    = to_radians((mu + 1.96 * sigma) * lambda)
//! theta_max     = theta_central + theta_step(lambda_max)
//! theta_min     = theta_central - theta_step(lambda_min)
//! m_max, m_min  = tan(theta_max), tan(theta_min)
//! ```
//!
//! `(mu + 1.96 * sigma) * lambda` is read as an angle in degrees. Points with
//! `y < m_min * x` (fewer words than the lower boundary allows for their time)
//! are throughput outliers. Points above the upper line are reported
//! separately and never flagged.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::stats::{mean, mean_std, pearson};
use super::AnalysisError;

/// z-score of the two-sided 95% interval.
const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint<T> {
    /// Inference time in seconds.
    pub x: T,
    /// Response length in words.
    pub y: T,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud<T> {
    pub cell_key: String,
    pub points: Vec<CloudPoint<T>>,
}

impl<T: Float> PointCloud<T> {
    /// Validates that every `x > 0` and every `y >= 0` (both finite).
    pub fn new(
        cell_key: impl Into<String>,
        points: Vec<CloudPoint<T>>,
    ) -> Result<Self, AnalysisError> {
        for p in &points {
            if !(p.x > T::zero() && p.x.is_finite() && p.y >= T::zero() && p.y.is_finite()) {
                return Err(AnalysisError::InvalidPoint(p.id.clone()));
            }
        }
        Ok(PointCloud {
            cell_key: cell_key.into(),
            points,
        })
    }

    pub fn xs(&self) -> Vec<T> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<T> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Which axis supplies `mu` and `sigma` for the angular step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSource {
    #[default]
    XValues,
    YValues,
}

/// How the origin-anchored central line is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralLine {
    /// Line from the origin through the centroid: `m = mean(y) / mean(x)`.
    #[default]
    Centroid,
    /// Least squares constrained through the origin: `m = Σxy / Σx²`.
    LeastSquaresOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughCutParams<T> {
    pub lambda_max: T,
    pub lambda_min: T,
    #[serde(default)]
    pub interval_source: IntervalSource,
    #[serde(default)]
    pub central: CentralLine,
}

impl<T: Float> ThroughCutParams<T> {
    pub fn new(lambda_max: T, lambda_min: T) -> Self {
        ThroughCutParams {
            lambda_max,
            lambda_min,
            interval_source: IntervalSource::default(),
            central: CentralLine::default(),
        }
    }

    /// Defaults for length-restricted prompting: λ_max = 0.005, λ_min = 0.5.
    pub fn restricted() -> Self {
        Self::new(lit(0.005), lit(0.5))
    }

    /// Defaults for unrestricted prompting, one tenth of the restricted ones.
    pub fn unrestricted() -> Self {
        Self::new(lit(0.0005), lit(0.05))
    }

    pub fn for_restriction(restricted: bool) -> Self {
        if restricted {
            Self::restricted()
        } else {
            Self::unrestricted()
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let ok = |l: T| l > T::zero() && l.is_finite();
        if ok(self.lambda_max) && ok(self.lambda_min) {
            Ok(())
        } else {
            Err(AnalysisError::InvalidParams(
                "lambda values must be finite and > 0".into(),
            ))
        }
    }
}

fn lit<T: Float>(v: f64) -> T {
    T::from(v).expect("literal representable")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughCutResult<T> {
    pub cell_key: String,
    pub m_central: T,
    pub m_max: T,
    pub m_min: T,
    pub theta_central: T,
    pub theta_max: T,
    pub theta_min: T,
    pub theta_step_max: T,
    pub theta_step_min: T,
    pub r: T,
    pub outlier_ids: Vec<String>,
    /// Points above the upper boundary. Diagnostic only.
    pub above_cone_ids: Vec<String>,
    pub n_points: usize,
}

/// Slope and angle of the central line, fitted through the centroid.
pub fn central_slope<T: Float>(cloud: &PointCloud<T>) -> Result<(T, T), AnalysisError> {
    central_slope_with(cloud, CentralLine::Centroid)
}

pub fn central_slope_with<T: Float>(
    cloud: &PointCloud<T>,
    method: CentralLine,
) -> Result<(T, T), AnalysisError> {
    if cloud.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let m = match method {
        CentralLine::Centroid => {
            let x_bar = mean(&cloud.xs());
            if x_bar <= T::zero() {
                return Err(AnalysisError::DegenerateCentroid);
            }
            mean(&cloud.ys()) / x_bar
        }
        CentralLine::LeastSquaresOrigin => {
            let (sxy, sxx) = cloud
                .points
                .iter()
                .fold((T::zero(), T::zero()), |(a, b), p| {
                    (a + p.x * p.y, b + p.x * p.x)
                });
            if sxx <= T::zero() {
                return Err(AnalysisError::DegenerateCentroid);
            }
            sxy / sxx
        }
    };
    Ok((m, m.atan()))
}

/// Angular step in radians: `(mu + 1.96 sigma) * lambda` degrees.
pub fn theta_step<T: Float>(
    cloud: &PointCloud<T>,
    lambda: T,
    source: IntervalSource,
) -> Result<T, AnalysisError> {
    if cloud.len() < 2 {
        return Err(AnalysisError::TooFewPoints {
            needed: 2,
            got: cloud.len(),
        });
    }
    let axis = match source {
        IntervalSource::XValues => cloud.xs(),
        IntervalSource::YValues => cloud.ys(),
    };
    let s = mean_std(&axis)?;
    Ok(((s.mean + lit::<T>(Z_95) * s.std) * lambda).to_radians())
}

/// Runs the full cone construction and flags points below the lower boundary.
pub fn throughcut<T: Float>(
    cloud: &PointCloud<T>,
    params: &ThroughCutParams<T>,
) -> Result<ThroughCutResult<T>, AnalysisError> {
    params.validate()?;
    if cloud.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: cloud.len(),
        });
    }
    let (m_central, theta_central) = central_slope_with(cloud, params.central)?;
    let theta_step_max = theta_step(cloud, params.lambda_max, params.interval_source)?;
    let theta_step_min = theta_step(cloud, params.lambda_min, params.interval_source)?;
    if !(theta_step_max > T::zero() && theta_step_min > T::zero()) {
        return Err(AnalysisError::InvalidParams(
            "angular step vanishes; cone has no width".into(),
        ));
    }
    let theta_max = theta_central + theta_step_max;
    let theta_min = theta_central - theta_step_min;
    if theta_max >= lit::<T>(std::f64::consts::FRAC_PI_2) {
        return Err(AnalysisError::ConeCrossesVertical);
    }
    if theta_min <= T::zero() {
        return Err(AnalysisError::ConeCrossesHorizontal);
    }
    let m_max = theta_max.tan();
    let m_min = theta_min.tan();
    let r = pearson(&cloud.xs(), &cloud.ys())?;

    let outlier_ids = cloud
        .points
        .iter()
        .filter(|p| p.y < m_min * p.x)
        .map(|p| p.id.clone())
        .collect();
    let above_cone_ids = cloud
        .points
        .iter()
        .filter(|p| p.y > m_max * p.x)
        .map(|p| p.id.clone())
        .collect();

    Ok(ThroughCutResult {
        cell_key: cloud.cell_key.clone(),
        m_central,
        m_max,
        m_min,
        theta_central,
        theta_max,
        theta_min,
        theta_step_max,
        theta_step_min,
        r,
        outlier_ids,
        above_cone_ids,
        n_points: cloud.len(),
    })
}
