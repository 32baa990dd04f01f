//! The JND-gated perceptual loss, its adjustor, and the combined objective.
//!
//! Only error that exceeds the visibility threshold should count as
//! distortion. For a source `x`, reconstruction `x̂`, and JND map `j`, the
//! per-sample loss is
//!
//! ```text
//! loss(h, w, c) = relu(|x - x̂| - α · j)²
//! ```
//!
//! and the scalar loss is the mean over all `h · w · c` samples. Error
//! within `α` thresholds of the source is free; beyond that it is penalized
//! quadratically.
//!
//! The adjustor `α` scales the gate to the amount of distortion actually
//! present. In [`AdjustorSpec::DistortionAware`] mode it is the ratio of
//! total absolute error to total threshold, clamped below at 1: when the
//! error budget exceeds what one JND can absorb, the gate widens so the
//! loss keeps steering *where* the error goes instead of saturating
//! everywhere. [`AdjustorSpec::Fixed`] pins `α` to a constant instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageRgb, CHANNELS};
use crate::jnd::JndMap;

// ---------------------------------------------------------------------------
// Adjustor
// ---------------------------------------------------------------------------

/// Policy for choosing the threshold scale `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdjustorSpec {
    /// `α = max(Σ|d| / Σj, 1)`, recomputed from the maps at hand.
    DistortionAware,
    /// `α` pinned to a constant (must be positive).
    Fixed(f64),
}

impl AdjustorSpec {
    pub fn validate(&self) -> Result<()> {
        if let AdjustorSpec::Fixed(v) = self {
            if !v.is_finite() || *v <= 0.0 {
                return Err(Error::Domain(format!(
                    "fixed adjustor must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A resolved adjustor: the `α` in effect plus the raw sum ratio it came
/// from. In `Fixed` mode the ratio is still reported for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustorValue {
    pub alpha: f64,
    pub ratio: f64,
}

/// Per-sample absolute difference `|x - x̂|`, row-major `(h, w, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl DiffMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        self.data[(h * self.width + w) * CHANNELS + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Computes `d(h, w, c) = |x(h, w, c) - x̂(h, w, c)|`.
pub fn absolute_diff(x: &ImageRgb, xhat: &ImageRgb) -> Result<DiffMap> {
    if !x.same_shape(xhat) {
        return Err(x.shape_mismatch(xhat));
    }
    let data = x
        .data()
        .iter()
        .zip(xhat.data())
        .map(|(&a, &b)| (a - b).abs())
        .collect();
    Ok(DiffMap {
        height: x.height(),
        width: x.width(),
        data,
    })
}

fn check_map_shape(d: &DiffMap, jnd: &JndMap) -> Result<()> {
    if d.height != jnd.height() || d.width != jnd.width() {
        return Err(Error::ShapeMismatch {
            expected_height: d.height,
            expected_width: d.width,
            height: jnd.height(),
            width: jnd.width(),
        });
    }
    Ok(())
}

/// Resolves the adjustor for a difference map against a JND map.
///
/// The ratio is `Σ d / Σ j` over every sample; sums are taken per image.
/// In distortion-aware mode `α` is the ratio when it exceeds 1, else 1.
pub fn compute_adjustor(d: &DiffMap, jnd: &JndMap, spec: AdjustorSpec) -> Result<AdjustorValue> {
    spec.validate()?;
    check_map_shape(d, jnd)?;
    let sum_d: f64 = d.data.iter().sum();
    let sum_j: f64 = jnd.data().iter().map(|&t| t as f64).sum();
    let ratio = sum_d / sum_j;
    let alpha = match spec {
        AdjustorSpec::DistortionAware => ratio.max(1.0),
        AdjustorSpec::Fixed(v) => v,
    };
    Ok(AdjustorValue { alpha, ratio })
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Result of one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    height: usize,
    width: usize,
    /// `relu(d - α·j)²` per sample, row-major `(h, w, c)`.
    pub per_pixel: Vec<f64>,
    /// Mean of `per_pixel` over all samples.
    pub total: f64,
    /// Analytic gradient of `total` with respect to the reconstruction.
    pub gradient: Vec<f64>,
    /// The adjustor used for this evaluation.
    pub alpha: AdjustorValue,
}

impl LossReport {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Scalar summary for JSON emission.
    pub fn summary(&self) -> LossSummary {
        LossSummary {
            total: self.total,
            alpha: self.alpha.alpha,
            ratio: self.alpha.ratio,
        }
    }

    /// Writes the per-sample loss map in the `.jndm` binary container.
    pub fn save_per_pixel_map(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::jnd::save_field_as_jndm(self.height, self.width, &self.per_pixel, path)
    }
}

/// The scalar part of a [`LossReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub total: f64,
    pub alpha: f64,
    pub ratio: f64,
}

/// Evaluates the JND-gated loss and its analytic gradient.
///
/// `total` is the mean of `relu(d - α·j)²` over all samples, with `α`
/// resolved by [`compute_adjustor`]. The gradient treats `α` as a constant:
/// it is re-derived from the maps whenever they change, but a single
/// evaluation does not differentiate through the sum that produced it.
///
/// ```text
/// ∂total/∂x̂(h,w,c) = (2 / (h·w·c)) · relu(d - α·j) · sign(x̂ - x)
/// ```
///
/// with `sign(0) = 0`, so the gradient vanishes exactly on samples whose
/// error sits at or below the gate.
pub fn jnd_loss(
    x: &ImageRgb,
    xhat: &ImageRgb,
    jnd: &JndMap,
    spec: AdjustorSpec,
) -> Result<LossReport> {
    let d = absolute_diff(x, xhat)?;
    let adjustor = compute_adjustor(&d, jnd, spec)?;
    let n = d.data.len();
    let inv_n = 1.0 / n as f64;
    let mut per_pixel = Vec::with_capacity(n);
    let mut gradient = Vec::with_capacity(n);
    let mut sum = 0.0;
    for i in 0..n {
        let excess = (d.data[i] - adjustor.alpha * jnd.data()[i] as f64).max(0.0);
        let value = excess * excess;
        per_pixel.push(value);
        sum += value;
        let sign = (xhat.data()[i] - x.data()[i]).signum();
        let sign = if xhat.data()[i] == x.data()[i] { 0.0 } else { sign };
        gradient.push(2.0 * inv_n * excess * sign);
    }
    Ok(LossReport {
        height: d.height,
        width: d.width,
        per_pixel,
        total: sum * inv_n,
        gradient,
        alpha: adjustor,
    })
}

/// Plain mean-squared-error objective, `mean((x - x̂)²)` over all samples.
pub fn mse_objective(x: &ImageRgb, xhat: &ImageRgb) -> Result<f64> {
    if !x.same_shape(xhat) {
        return Err(x.shape_mismatch(xhat));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(xhat.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

// ---------------------------------------------------------------------------
// Combined objective
// ---------------------------------------------------------------------------

/// A rate-distortion objective value, `total = rate + λ · distortion`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub rate: f64,
    pub lambda: f64,
    pub distortion: f64,
    pub total: f64,
}

/// Combines a caller-supplied rate term with a loss evaluation.
///
/// The rate is whatever proxy the caller has (true bitstream cost, file
/// size, an entropy estimate); this crate does not model it.
pub fn combined_objective(rate: f64, lambda: f64, loss: &LossReport) -> Result<ObjectiveValue> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !rate.is_finite() || rate < 0.0 {
        return Err(Error::Domain(format!("rate must be >= 0, got {rate}")));
    }
    Ok(ObjectiveValue {
        rate,
        lambda,
        distortion: loss.total,
        total: rate + lambda * loss.total,
    })
}
