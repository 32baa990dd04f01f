//! Pixel-space distortion assignment.
//!
//! These experiments demonstrate the guidance mechanism without any codec:
//! given a fixed distortion budget, gradient descent on the JND-gated loss
//! decides *where* the error goes, and the resulting error field should
//! concentrate in high-threshold (insensitive) regions and channels.
//!
//! The budget is enforced by sphere projection: after every step the error
//! field `e = x̂ - x` is rescaled so that `mean(e²)` equals the target MSE
//! exactly. Separating "how much distortion" (the projection) from "where
//! it goes" (the loss gradient) keeps the two questions independent.
//!
//! [`inject_jnd_noise`] is the companion experiment: perturb every sample
//! by `k` thresholds with random signs. For k well above 1 the PSNR drops
//! sharply while the gated loss at `α = k` stays zero — large error that
//! stays below the scaled visibility gate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageRgb, CHANNELS};
use crate::jnd::JndMap;
use crate::loss::AdjustorSpec;

/// Configuration for [`assign_distortion`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignConfig {
    /// Distortion budget: the optimizer holds `mean(e²)` at this value,
    /// in squared 8-bit units.
    pub target_mse: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Step scale for the per-sample gradient step. At the default 0.5 a
    /// step moves a violating sample exactly onto its gate.
    pub step_size: f64,
    /// Seed for the noise initialization.
    pub seed: u64,
    /// Adjustor policy, re-resolved every iteration.
    pub adjustor: AdjustorSpec,
}

impl AssignConfig {
    pub fn new(target_mse: f64) -> Self {
        Self {
            target_mse,
            max_iters: 500,
            step_size: 0.5,
            seed: 0,
            adjustor: AdjustorSpec::DistortionAware,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.target_mse.is_finite() || self.target_mse <= 0.0 {
            return Err(Error::Domain(format!(
                "target mse must be positive, got {}",
                self.target_mse
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be at least 1".into()));
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::Domain(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        self.adjustor.validate()
    }
}

/// One trajectory sample; iteration 0 is the state right after
/// initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub loss_total: f64,
    pub alpha: f64,
    pub mse: f64,
}

/// Where the error ended up, split by JND rank and by channel.
///
/// Quartiles are rank-based over all `(h, w, c)` samples sorted by
/// threshold, index 0 holding the least-maskable quarter and index 3 the
/// most-maskable one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    /// Mean `|d|` per JND quartile, ascending threshold order.
    pub quartile_mean_abs_err: [f64; 4],
    /// Mean `|d|` per channel (R, G, B).
    pub channel_mean_abs_err: [f64; 3],
    /// MSE per channel (R, G, B).
    pub channel_mse: [f64; 3],
    /// `quartile_mean_abs_err[3] / quartile_mean_abs_err[0]`.
    pub concentration_ratio: f64,
}

/// Output of [`assign_distortion`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssignReport {
    pub xhat: ImageRgb,
    pub trajectory: Vec<TrajectoryPoint>,
    pub region_stats: RegionStats,
}

const CONVERGENCE_EPS: f64 = 1e-9;
const CONVERGENCE_PATIENCE: usize = 20;
const BUDGET_TOLERANCE: f64 = 0.005;
const BUDGET_PATIENCE: usize = 50;
const MAX_BACKTRACKS: usize = 30;

struct Evaluation {
    loss_total: f64,
    alpha: f64,
    mse: f64,
}

/// Loss, adjustor, and budget state of an error field, without
/// materializing intermediate buffers.
fn evaluate(err: &[f64], jnd: &JndMap, spec: AdjustorSpec) -> Evaluation {
    let n = err.len();
    let mut sum_d = 0.0;
    let mut sum_sq = 0.0;
    for &e in err {
        sum_d += e.abs();
        sum_sq += e * e;
    }
    let sum_j: f64 = jnd.data().iter().map(|&t| t as f64).sum();
    let ratio = sum_d / sum_j;
    let alpha = match spec {
        AdjustorSpec::DistortionAware => ratio.max(1.0),
        AdjustorSpec::Fixed(v) => v,
    };
    let mut loss_sum = 0.0;
    for (i, &e) in err.iter().enumerate() {
        let excess = (e.abs() - alpha * jnd.data()[i] as f64).max(0.0);
        loss_sum += excess * excess;
    }
    Evaluation {
        loss_total: loss_sum / n as f64,
        alpha,
        mse: sum_sq / n as f64,
    }
}

/// Gradient step, sphere projection, clamp. Returns the candidate error
/// field (relative to `x`).
fn step_project_clamp(
    x: &[f64],
    err: &[f64],
    jnd: &JndMap,
    alpha: f64,
    step: f64,
    target_mse: f64,
) -> Vec<f64> {
    let n = err.len();
    let mut out = Vec::with_capacity(n);
    // Per-sample gradient of relu(|e| - α·j)² is 2·relu(|e| - α·j)·sign(e);
    // stepping with `step` scaled per sample (not by 1/N) keeps the default
    // step meaningful at any image size.
    for (i, &e) in err.iter().enumerate() {
        let excess = (e.abs() - alpha * jnd.data()[i] as f64).max(0.0);
        let sign = if e == 0.0 { 0.0 } else { e.signum() };
        out.push(e - step * 2.0 * excess * sign);
    }
    let mean_sq = out.iter().map(|&e| e * e).sum::<f64>() / n as f64;
    if mean_sq > 0.0 {
        let scale = (target_mse / mean_sq).sqrt();
        for e in &mut out {
            *e *= scale;
        }
    }
    for (i, e) in out.iter_mut().enumerate() {
        let v = (x[i] + *e).clamp(0.0, 255.0);
        *e = v - x[i];
    }
    out
}

/// Assigns a fixed distortion budget over an image by descending the
/// JND-gated loss on the budget sphere.
///
/// Per iteration: resolve the adjustor for the current error field, take a
/// gradient step on the gated loss, rescale the error to the budget, clamp
/// to `[0, 255]`. A step is only accepted if it does not increase the loss
/// (the step is halved otherwise), so the recorded trajectory is
/// non-increasing. The run stops at `max_iters`, or once improvement stays
/// below 1e-9 for 20 consecutive iterations while on budget.
///
/// Initialization adds seeded unit-variance noise rescaled to the budget;
/// starting from `x̂ = x` would start inside the gate where the gradient
/// vanishes.
///
/// Returns a domain error when clamping keeps the projection from reaching
/// the budget (within 0.5%) for 50 consecutive iterations — the budget is
/// infeasible for this image.
pub fn assign_distortion(x: &ImageRgb, jnd: &JndMap, cfg: &AssignConfig) -> Result<AssignReport> {
    cfg.validate()?;
    if x.height() != jnd.height() || x.width() != jnd.width() {
        return Err(Error::ShapeMismatch {
            expected_height: x.height(),
            expected_width: x.width(),
            height: jnd.height(),
            width: jnd.width(),
        });
    }
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut err: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mean_sq = err.iter().map(|&e| e * e).sum::<f64>() / n as f64;
    let scale = (cfg.target_mse / mean_sq).sqrt();
    for (i, e) in err.iter_mut().enumerate() {
        let v = (x.data()[i] + *e * scale).clamp(0.0, 255.0);
        *e = v - x.data()[i];
    }

    let mut eval = evaluate(&err, jnd, cfg.adjustor);
    let mut trajectory = Vec::with_capacity(cfg.max_iters + 1);
    trajectory.push(TrajectoryPoint {
        iteration: 0,
        loss_total: eval.loss_total,
        alpha: eval.alpha,
        mse: eval.mse,
    });

    let mut no_improve = 0usize;
    let mut off_budget = 0usize;
    for iteration in 1..=cfg.max_iters {
        let mut trial = cfg.step_size;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let cand = step_project_clamp(
                x.data(),
                &err,
                jnd,
                eval.alpha,
                trial,
                cfg.target_mse,
            );
            let cand_eval = evaluate(&cand, jnd, cfg.adjustor);
            if cand_eval.loss_total <= eval.loss_total {
                accepted = Some((cand, cand_eval));
                break;
            }
            trial *= 0.5;
        }

        let improvement = match accepted {
            Some((cand, cand_eval)) => {
                let improvement = eval.loss_total - cand_eval.loss_total;
                err = cand;
                eval = cand_eval;
                improvement
            }
            None => 0.0,
        };
        trajectory.push(TrajectoryPoint {
            iteration,
            loss_total: eval.loss_total,
            alpha: eval.alpha,
            mse: eval.mse,
        });

        let on_budget = (eval.mse / cfg.target_mse - 1.0).abs() <= BUDGET_TOLERANCE;
        if on_budget {
            off_budget = 0;
        } else {
            off_budget += 1;
            if off_budget >= BUDGET_PATIENCE {
                return Err(Error::Domain(format!(
                    "budget infeasible: mean(e²) stuck at {:.3} vs target {:.3} after clamping",
                    eval.mse, cfg.target_mse
                )));
            }
        }
        if improvement < CONVERGENCE_EPS && on_budget {
            no_improve += 1;
            if no_improve >= CONVERGENCE_PATIENCE {
                break;
            }
        } else if improvement >= CONVERGENCE_EPS {
            no_improve = 0;
        }
    }

    let xhat = ImageRgb::from_fn(x.height(), x.width(), |h, w, c| {
        let i = (h * x.width() + w) * CHANNELS + c;
        x.data()[i] + err[i]
    })?;
    let region_stats = compute_region_stats(x, &xhat, jnd)?;
    Ok(AssignReport {
        xhat,
        trajectory,
        region_stats,
    })
}

/// Splits the error field by JND rank and channel.
///
/// Samples are sorted by threshold (ties broken by index) and cut into
/// four equal-rank groups, so the partition is deterministic even on maps
/// with many equal thresholds.
pub fn compute_region_stats(x: &ImageRgb, xhat: &ImageRgb, jnd: &JndMap) -> Result<RegionStats> {
    if !x.same_shape(xhat) {
        return Err(x.shape_mismatch(xhat));
    }
    if x.height() != jnd.height() || x.width() != jnd.width() {
        return Err(Error::ShapeMismatch {
            expected_height: x.height(),
            expected_width: x.width(),
            height: jnd.height(),
            width: jnd.width(),
        });
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        jnd.data()[a]
            .partial_cmp(&jnd.data()[b])
            .expect("finite thresholds")
            .then(a.cmp(&b))
    });

    let mut quartile_sum = [0.0f64; 4];
    let mut quartile_count = [0usize; 4];
    for (rank, &i) in order.iter().enumerate() {
        let q = (rank * 4 / n).min(3);
        quartile_sum[q] += (x.data()[i] - xhat.data()[i]).abs();
        quartile_count[q] += 1;
    }
    let mut quartile_mean_abs_err = [0.0f64; 4];
    for q in 0..4 {
        quartile_mean_abs_err[q] = quartile_sum[q] / quartile_count[q].max(1) as f64;
    }

    let mut channel_abs = [0.0f64; 3];
    let mut channel_sq = [0.0f64; 3];
    for i in 0..n {
        let e = x.data()[i] - xhat.data()[i];
        channel_abs[i % CHANNELS] += e.abs();
        channel_sq[i % CHANNELS] += e * e;
    }
    let per_channel = (n / CHANNELS) as f64;
    let channel_mean_abs_err = channel_abs.map(|v| v / per_channel);
    let channel_mse = channel_sq.map(|v| v / per_channel);

    let concentration_ratio = quartile_mean_abs_err[3] / quartile_mean_abs_err[0].max(1e-12);
    Ok(RegionStats {
        quartile_mean_abs_err,
        channel_mean_abs_err,
        channel_mse,
        concentration_ratio,
    })
}

/// Perturbs every sample by `k` thresholds with a seeded ±1 sign field:
/// `x̂ = clamp(x + k · j · s)`.
///
/// The construction guarantees `|x̂ - x| <= k·j` sample-wise even after
/// floating-point rounding, so the gated loss at `Fixed(k)` is exactly
/// zero while the MSE grows like `k²·mean(j²)`.
pub fn inject_jnd_noise(x: &ImageRgb, jnd: &JndMap, k: f64, seed: u64) -> ImageRgb {
    assert!(k.is_finite() && k > 0.0, "k must be positive, got {k}");
    assert_eq!(x.height(), jnd.height());
    assert_eq!(x.width(), jnd.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageRgb::from_fn(x.height(), x.width(), |h, w, c| {
        let xv = x.get(h, w, c);
        let magnitude = k * jnd.get(h, w, c);
        let sign: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut v = (xv + magnitude * sign).clamp(0.0, 255.0);
        // Addition can round outward by an ulp; nudge back toward x so the
        // realized |x̂ - x| never exceeds k·j.
        while (v - xv).abs() > magnitude {
            v = if v > xv { v.next_down() } else { v.next_up() };
        }
        v
    })
    .expect("clamped values are in range")
}
