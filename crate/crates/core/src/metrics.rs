//! Objective evaluation: PSNR, PSPNR, bits per pixel, and RD-curve data.
//!
//! PSPNR is PSNR with the plain MSE replaced by the JND-gated loss, so it
//! only counts error the eye can see. Because the gated loss never exceeds
//! the MSE, PSPNR is always at least PSNR for the same pair.
//!
//! All dB values are capped at [`DB_CAP`] instead of going to infinity on
//! (near-)zero denominators, so CSV and JSON outputs stay plain numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageRgb, CHANNELS};
use crate::jnd::JndMap;
use crate::loss::{jnd_loss, AdjustorSpec};

/// Sentinel for "indistinguishable": returned when the denominator of a
/// dB ratio drops below `255² · 1e-10`.
pub const DB_CAP: f64 = 100.0;

/// Squared 8-bit peak, the numerator of every dB ratio here.
pub const PEAK_SQ: f64 = 255.0 * 255.0;

const CAP_THRESHOLD: f64 = PEAK_SQ * 1e-10;

/// Channel selector for [`psnr`] and [`mse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    All,
    R,
    G,
    B,
}

impl Channel {
    fn index(self) -> Option<usize> {
        match self {
            Channel::All => None,
            Channel::R => Some(0),
            Channel::G => Some(1),
            Channel::B => Some(2),
        }
    }
}

/// Mean squared error over the selected channel subset.
pub fn mse(x: &ImageRgb, xhat: &ImageRgb, channel: Channel) -> Result<f64> {
    if !x.same_shape(xhat) {
        return Err(x.shape_mismatch(xhat));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (&a, &b)) in x.data().iter().zip(xhat.data()).enumerate() {
        if let Some(c) = channel.index() {
            if i % CHANNELS != c {
                continue;
            }
        }
        sum += (a - b) * (a - b);
        count += 1;
    }
    Ok(sum / count as f64)
}

fn db_from(denominator: f64) -> f64 {
    if denominator < CAP_THRESHOLD {
        DB_CAP
    } else {
        10.0 * (PEAK_SQ / denominator).log10()
    }
}

/// Peak signal-to-noise ratio in dB over the selected channels,
/// `10·log10(255² / MSE)`, capped at [`DB_CAP`].
pub fn psnr(x: &ImageRgb, xhat: &ImageRgb, channel: Channel) -> Result<f64> {
    Ok(db_from(mse(x, xhat, channel)?))
}

/// Peak signal-to-perceptible-noise ratio in dB.
///
/// The denominator is the JND-gated loss of [`jnd_loss`] (same mean
/// reduction, same adjustor policy), so the metric cannot drift from the
/// training loss it evaluates.
pub fn pspnr(x: &ImageRgb, xhat: &ImageRgb, jnd: &JndMap, spec: AdjustorSpec) -> Result<f64> {
    let report = jnd_loss(x, xhat, jnd, spec)?;
    Ok(pspnr_from_loss(report.total))
}

/// The PSPNR formula applied to an already-computed loss value.
pub fn pspnr_from_loss(loss_total: f64) -> f64 {
    db_from(loss_total)
}

/// Bits per pixel of a compressed representation.
pub fn bpp(compressed_size_bytes: u64, height: usize, width: usize) -> Result<f64> {
    if height * width == 0 {
        return Err(Error::Domain("bpp of a zero-area image".into()));
    }
    Ok(8.0 * compressed_size_bytes as f64 / (height * width) as f64)
}

// ---------------------------------------------------------------------------
// Records and curves
// ---------------------------------------------------------------------------

/// One evaluated image pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub bpp: f64,
    pub psnr: f64,
    pub psnr_r: f64,
    pub psnr_g: f64,
    pub psnr_b: f64,
    pub pspnr: f64,
    pub loss_total: f64,
    pub alpha: f64,
}

impl MetricsRecord {
    /// Field-wise arithmetic mean, used for per-label summary rows.
    pub fn mean_of(records: &[MetricsRecord]) -> Option<MetricsRecord> {
        if records.is_empty() {
            return None;
        }
        let n = records.len() as f64;
        let mut acc = MetricsRecord {
            bpp: 0.0,
            psnr: 0.0,
            psnr_r: 0.0,
            psnr_g: 0.0,
            psnr_b: 0.0,
            pspnr: 0.0,
            loss_total: 0.0,
            alpha: 0.0,
        };
        for r in records {
            acc.bpp += r.bpp;
            acc.psnr += r.psnr;
            acc.psnr_r += r.psnr_r;
            acc.psnr_g += r.psnr_g;
            acc.psnr_b += r.psnr_b;
            acc.pspnr += r.pspnr;
            acc.loss_total += r.loss_total;
            acc.alpha += r.alpha;
        }
        acc.bpp /= n;
        acc.psnr /= n;
        acc.psnr_r /= n;
        acc.psnr_g /= n;
        acc.psnr_b /= n;
        acc.pspnr /= n;
        acc.loss_total /= n;
        acc.alpha /= n;
        Some(acc)
    }

    fn metric(&self, metric: CurveMetric) -> f64 {
        match metric {
            CurveMetric::Psnr => self.psnr,
            CurveMetric::PsnrR => self.psnr_r,
            CurveMetric::PsnrG => self.psnr_g,
            CurveMetric::PsnrB => self.psnr_b,
            CurveMetric::Pspnr => self.pspnr,
        }
    }
}

/// Which metric becomes the y axis of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMetric {
    Psnr,
    PsnrR,
    PsnrG,
    PsnrB,
    Pspnr,
}

/// Records for one label (one codec/configuration under comparison).
#[derive(Debug, Clone)]
pub struct RecordGroup {
    pub label: String,
    pub records: Vec<MetricsRecord>,
}

/// One rate-distortion curve: `(bpp, metric)` points, bpp strictly
/// increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSet {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Builds one curve per group: points sorted by bpp, records sharing a bpp
/// averaged into a single point.
///
/// The result is independent of record order within a group.
pub fn build_curves(groups: &[RecordGroup], metric: CurveMetric) -> Result<Vec<CurveSet>> {
    let mut curves = Vec::with_capacity(groups.len());
    for group in groups {
        if group.records.is_empty() {
            return Err(Error::EmptyGroup(group.label.clone()));
        }
        let mut pairs: Vec<(f64, f64)> = group
            .records
            .iter()
            .map(|r| (r.bpp, r.metric(metric)))
            .collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        let mut i = 0;
        while i < pairs.len() {
            let bpp = pairs[i].0;
            let mut values = Vec::new();
            while i < pairs.len() && pairs[i].0 == bpp {
                values.push(pairs[i].1);
                i += 1;
            }
            // Values arrive sorted (the pair sort above), so the mean is
            // identical no matter how the input records were ordered.
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            points.push((bpp, mean));
        }
        curves.push(CurveSet {
            label: group.label.clone(),
            points,
        });
    }
    Ok(curves)
}

// ---------------------------------------------------------------------------
// CSV schema
// ---------------------------------------------------------------------------

/// Header of the metrics CSV.
pub const CSV_HEADER: &str = "label,image,bpp,psnr,psnr_r,psnr_g,psnr_b,pspnr,loss_total,alpha";

/// Formats one CSV row with deterministic 6-decimal formatting.
pub fn csv_row(label: &str, image: &str, r: &MetricsRecord) -> String {
    format!(
        "{label},{image},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        r.bpp, r.psnr, r.psnr_r, r.psnr_g, r.psnr_b, r.pspnr, r.loss_total, r.alpha
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageRgb;
    use crate::jnd::JndMap;

    fn record_with(bpp: f64, pspnr: f64) -> MetricsRecord {
        MetricsRecord {
            bpp,
            psnr: 30.0,
            psnr_r: 30.0,
            psnr_g: 31.0,
            psnr_b: 29.0,
            pspnr,
            loss_total: 1.0,
            alpha: 1.0,
        }
    }

    fn pseudo(seed: u64, i: usize) -> f64 {
        let x = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(i as u64)
            .wrapping_mul(1442695040888963407);
        ((x >> 33) % 25500) as f64 / 100.0
    }

    #[test]
    fn pspnr_formula_hand_case() {
        // 255² · 1e-3 = 65.025 inverts to exactly 30 dB.
        assert!((pspnr_from_loss(65.025) - 30.0).abs() < 1e-9);
        assert_eq!(pspnr_from_loss(0.0), DB_CAP);
        assert_eq!(pspnr_from_loss(PEAK_SQ * 1e-11), DB_CAP);
    }

    #[test]
    fn pspnr_end_to_end_thirty_db() {
        let d0 = 2.0 + 65.025f64.sqrt();
        let x = ImageRgb::from_fn(2, 2, |_, _, _| 40.0).unwrap();
        let y = ImageRgb::from_fn(2, 2, |_, _, _| 40.0 + d0).unwrap();
        let jnd = JndMap::from_raw(2, 2, vec![2.0; 12], 0.1).unwrap();
        let v = pspnr(&x, &y, &jnd, AdjustorSpec::Fixed(1.0)).unwrap();
        assert!((v - 30.0).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn identical_images_cap_at_hundred() {
        let x = ImageRgb::from_fn(3, 3, |_, _, c| 10.0 * (c as f64 + 1.0)).unwrap();
        let jnd = JndMap::from_raw(3, 3, vec![1.0; 27], 0.1).unwrap();
        assert_eq!(psnr(&x, &x, Channel::All).unwrap(), DB_CAP);
        assert_eq!(
            pspnr(&x, &x, &jnd, AdjustorSpec::DistortionAware).unwrap(),
            DB_CAP
        );
    }

    #[test]
    fn psnr_uniform_sixteen_level_error() {
        let x = ImageRgb::from_fn(4, 4, |_, _, _| 100.0).unwrap();
        let y = ImageRgb::from_fn(4, 4, |_, _, _| 116.0).unwrap();
        let v = psnr(&x, &y, Channel::All).unwrap();
        let expect = 10.0 * (PEAK_SQ / 256.0).log10(); // ≈ 24.05 dB
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 24.0484).abs() < 1e-3);
    }

    #[test]
    fn channel_mse_partition_is_consistent() {
        let x = ImageRgb::from_fn(5, 3, |h, w, c| pseudo(1, (h * 3 + w) * 3 + c)).unwrap();
        let y = ImageRgb::from_fn(5, 3, |h, w, c| pseudo(2, (h * 3 + w) * 3 + c)).unwrap();
        let all = mse(&x, &y, Channel::All).unwrap();
        let r = mse(&x, &y, Channel::R).unwrap();
        let g = mse(&x, &y, Channel::G).unwrap();
        let b = mse(&x, &y, Channel::B).unwrap();
        assert!((all - (r + g + b) / 3.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_is_symmetric() {
        let x = ImageRgb::from_fn(4, 4, |h, w, c| pseudo(5, (h * 4 + w) * 3 + c)).unwrap();
        let y = ImageRgb::from_fn(4, 4, |h, w, c| pseudo(6, (h * 4 + w) * 3 + c)).unwrap();
        for ch in [Channel::All, Channel::R, Channel::G, Channel::B] {
            assert_eq!(psnr(&x, &y, ch).unwrap(), psnr(&y, &x, ch).unwrap());
        }
    }

    #[test]
    fn pspnr_dominates_psnr() {
        for seed in 0..50 {
            let x = ImageRgb::from_fn(4, 4, |h, w, c| pseudo(seed, (h * 4 + w) * 3 + c)).unwrap();
            let y =
                ImageRgb::from_fn(4, 4, |h, w, c| pseudo(seed + 999, (h * 4 + w) * 3 + c)).unwrap();
            let jnd =
                JndMap::from_raw(4, 4, vec![0.5 + (seed % 9) as f64; 48], 0.1).unwrap();
            let p = psnr(&x, &y, Channel::All).unwrap();
            let pp = pspnr(&x, &y, &jnd, AdjustorSpec::DistortionAware).unwrap();
            assert!(pp >= p, "seed {seed}: pspnr {pp} < psnr {p}");
            assert!(pp.is_finite() && p.is_finite());
        }
    }

    #[test]
    fn bpp_hand_cases() {
        assert_eq!(bpp(4608, 512, 768).unwrap(), 0.09375);
        assert_eq!(bpp(0, 100, 100).unwrap(), 0.0);
        assert!(matches!(bpp(10, 0, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn curves_single_record() {
        let groups = [RecordGroup {
            label: "base".into(),
            records: vec![record_with(0.25, 31.5)],
        }];
        let curves = build_curves(&groups, CurveMetric::Pspnr).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].points, vec![(0.25, 31.5)]);
    }

    #[test]
    fn curves_average_duplicate_bpp() {
        let groups = [RecordGroup {
            label: "base".into(),
            records: vec![record_with(0.25, 30.0), record_with(0.25, 32.0)],
        }];
        let curves = build_curves(&groups, CurveMetric::Pspnr).unwrap();
        assert_eq!(curves[0].points, vec![(0.25, 31.0)]);
    }

    #[test]
    fn curves_order_independent() {
        let records = vec![
            record_with(0.5, 33.0),
            record_with(0.1, 28.0),
            record_with(0.3, 30.0),
            record_with(0.3, 31.0),
            record_with(0.2, 29.0),
        ];
        let forward = build_curves(
            &[RecordGroup {
                label: "x".into(),
                records: records.clone(),
            }],
            CurveMetric::Pspnr,
        )
        .unwrap();
        let mut shuffled = records;
        shuffled.reverse();
        shuffled.swap(0, 2);
        let backward = build_curves(
            &[RecordGroup {
                label: "x".into(),
                records: shuffled,
            }],
            CurveMetric::Pspnr,
        )
        .unwrap();
        assert_eq!(forward, backward);
        let bpps: Vec<f64> = forward[0].points.iter().map(|p| p.0).collect();
        assert!(bpps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn curves_reject_empty_group() {
        let groups = [RecordGroup {
            label: "void".into(),
            records: vec![],
        }];
        assert!(matches!(
            build_curves(&groups, CurveMetric::Psnr),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn csv_row_formatting_is_fixed_width() {
        let r = record_with(0.09375, 35.0);
        let row = csv_row("base", "kodim01", &r);
        assert_eq!(
            row,
            "base,kodim01,0.093750,30.000000,30.000000,31.000000,29.000000,35.000000,1.000000,1.000000"
        );
    }

    #[test]
    fn record_mean() {
        let a = record_with(0.1, 30.0);
        let b = record_with(0.3, 34.0);
        let m = MetricsRecord::mean_of(&[a, b]).unwrap();
        assert_eq!(m.bpp, 0.2);
        assert_eq!(m.pspnr, 32.0);
        assert!(MetricsRecord::mean_of(&[]).is_none());
    }
}
