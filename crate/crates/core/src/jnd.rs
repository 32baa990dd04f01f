//! Just-noticeable-difference (JND) maps.
//!
//! A JND map holds, for every pixel and channel, the largest intensity
//! change the human visual system cannot perceive, in 8-bit units. Two
//! sources are supported:
//!
//! - [`classical_jnd`], a deterministic spatial-domain model built from
//!   luminance adaptation and texture masking, and
//! - [`load_jnd_map`], which reads an externally computed map (for example
//!   one produced by a learned predictor) from the `.jndm` container.
//!
//! Luminance-only models are expanded to three channels with
//! [`expand_to_channels`]: the green channel is where human vision is most
//! acute, so green gets the smallest thresholds and blue the largest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Default lower bound applied to every threshold.
///
/// A strictly positive floor keeps ratio computations over the map (the
/// distortion-aware adjustor divides by the threshold sum) well defined
/// even for maps loaded from files with zero entries.
pub const DEFAULT_T_FLOOR: f64 = 0.1;

/// Upper bound on thresholds produced by [`classical_jnd`].
///
/// Visibility thresholds beyond 25 gray levels are not plausible for
/// natural viewing; extreme synthetic edges can push the texture-masking
/// term past that, so the model output is capped here.
pub const CLASSICAL_T_CEILING: f64 = 25.0;

// ---------------------------------------------------------------------------
// JndMap
// ---------------------------------------------------------------------------

/// Per-pixel, per-channel visibility thresholds.
///
/// Shape always matches the associated image: `height x width x 3`,
/// row-major `(h, w, c)`. Thresholds are stored as `f32`, the same
/// precision as the on-disk format, so a save/load round trip is lossless.
/// Every threshold is at least the floor the map was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct JndMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl JndMap {
    /// Builds a map from raw thresholds, flooring each at `t_floor`.
    pub fn from_raw(height: usize, width: usize, data: Vec<f64>, t_floor: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Domain(format!(
                "map dimensions must be at least 1x1, got {height}x{width}"
            )));
        }
        if t_floor <= 0.0 || !t_floor.is_finite() {
            return Err(Error::Domain(format!(
                "threshold floor must be positive, got {t_floor}"
            )));
        }
        if data.len() != height * width * 3 {
            return Err(Error::Domain(format!(
                "data length {} does not match {height}x{width}x3",
                data.len()
            )));
        }
        let floor = t_floor as f32;
        let mut out = Vec::with_capacity(data.len());
        for &v in &data {
            let v = v as f32;
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite threshold {v}")));
            }
            out.push(v.max(floor));
        }
        Ok(Self {
            height,
            width,
            data: out,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Threshold at `(h, w, c)`, promoted to `f64` for loss arithmetic.
    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        self.data[(h * self.width + w) * 3 + c] as f64
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Total number of scalar thresholds (`height * width * 3`).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Channel weights
// ---------------------------------------------------------------------------

/// Positive scale factors that turn a luminance JND plane into per-channel
/// thresholds.
///
/// Green carries most of the luma signal, so the green weight must not
/// exceed the red or blue weight. The defaults reproduce the usual
/// sensitivity ordering: distortion hides best in blue, then red.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelWeights {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Default for ChannelWeights {
    fn default() -> Self {
        Self {
            r: 1.4,
            g: 1.0,
            b: 2.2,
        }
    }
}

impl ChannelWeights {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        let w = Self { r, g, b };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r", self.r), ("g", self.g), ("b", self.b)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!(
                    "channel weight {name} must be positive, got {v}"
                )));
            }
        }
        if self.g > self.r || self.g > self.b {
            return Err(Error::Domain(format!(
                "green must be the most sensitive channel: need g <= r and g <= b, got ({}, {}, {})",
                self.r, self.g, self.b
            )));
        }
        Ok(())
    }

    fn get(&self, c: usize) -> f64 {
        [self.r, self.g, self.b][c]
    }
}

// ---------------------------------------------------------------------------
// Classical spatial model
// ---------------------------------------------------------------------------

// 5x5 weighted low-pass kernel for background luminance; weights sum to 32.
const BG_KERNEL: [[f64; 5]; 5] = [
    [1.0, 1.0, 1.0, 1.0, 1.0],
    [1.0, 2.0, 2.0, 2.0, 1.0],
    [1.0, 2.0, 0.0, 2.0, 1.0],
    [1.0, 2.0, 2.0, 2.0, 1.0],
    [1.0, 1.0, 1.0, 1.0, 1.0],
];

// The four directional 5x5 gradient operators; responses are divided by 16.
const GRAD_KERNELS: [[[f64; 5]; 5]; 4] = [
    [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 3.0, 8.0, 3.0, 1.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [-1.0, -3.0, -8.0, -3.0, -1.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
    ],
    [
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 8.0, 3.0, 0.0, 0.0],
        [1.0, 3.0, 0.0, -3.0, -1.0],
        [0.0, 0.0, -3.0, -8.0, 0.0],
        [0.0, 0.0, -1.0, 0.0, 0.0],
    ],
    [
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 3.0, 8.0, 0.0],
        [-1.0, -3.0, 0.0, 3.0, 1.0],
        [0.0, -8.0, -3.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, 0.0, 0.0],
    ],
    [
        [0.0, 1.0, 0.0, -1.0, 0.0],
        [0.0, 3.0, 0.0, -3.0, 0.0],
        [0.0, 8.0, 0.0, -8.0, 0.0],
        [0.0, 3.0, 0.0, -3.0, 0.0],
        [0.0, 1.0, 0.0, -1.0, 0.0],
    ],
];

/// Luminance adaptation: visibility threshold as a function of background
/// luminance. Sensitivity peaks near mid-gray (threshold 3 at bg = 127) and
/// falls off toward dark (threshold 20 at bg = 0) and bright backgrounds.
fn luminance_adaptation(bg: f64) -> f64 {
    if bg <= 127.0 {
        17.0 * (1.0 - (bg / 127.0).sqrt()) + 3.0
    } else {
        3.0 / 128.0 * (bg - 127.0) + 3.0
    }
}

/// Texture masking: strong local gradients hide additional distortion.
fn texture_masking(mg: f64, bg: f64) -> f64 {
    mg * (0.0001 * bg + 0.115) + (0.5 - 0.01 * bg)
}

/// Computes the spatial JND plane of a luminance image.
///
/// For each pixel the model takes the larger of the luminance-adaptation
/// and texture-masking thresholds:
///
/// - background luminance `bg` is the 5x5 weighted mean (kernel weights sum
///   to 32, output divided by 32);
/// - `mg` is the maximum absolute response of four directional 5x5 gradient
///   operators, divided by 16;
/// - threshold = `max(LA(bg), TM(mg, bg))`, clamped to
///   `[t_floor, CLASSICAL_T_CEILING]`.
///
/// Pixels in the 2-pixel border, where the 5x5 window does not fit, take
/// the value of the nearest interior pixel. Inputs smaller than 5x5 have no
/// interior; there the window samples are clamped to the image instead.
pub fn classical_jnd(luma: &ImagePlane, t_floor: f64) -> Result<ImagePlane> {
    if t_floor <= 0.0 || !t_floor.is_finite() {
        return Err(Error::Domain(format!(
            "threshold floor must be positive, got {t_floor}"
        )));
    }
    let height = luma.height();
    let width = luma.width();
    let tiny = height < 5 || width < 5;

    let threshold_at = |h: usize, w: usize| -> f64 {
        let mut bg = 0.0;
        let mut responses = [0.0f64; 4];
        for (dy, bg_row) in BG_KERNEL.iter().enumerate() {
            for (dx, &bw) in bg_row.iter().enumerate() {
                let (sy, sx) = if tiny {
                    (
                        (h + dy).saturating_sub(2).min(height - 1),
                        (w + dx).saturating_sub(2).min(width - 1),
                    )
                } else {
                    (h + dy - 2, w + dx - 2)
                };
                let v = luma.get(sy, sx);
                bg += bw * v;
                for (k, kernel) in GRAD_KERNELS.iter().enumerate() {
                    responses[k] += kernel[dy][dx] * v;
                }
            }
        }
        let bg = bg / 32.0;
        let mg = responses
            .iter()
            .map(|r| r.abs() / 16.0)
            .fold(0.0f64, f64::max);
        luminance_adaptation(bg)
            .max(texture_masking(mg, bg))
            .clamp(t_floor, CLASSICAL_T_CEILING)
    };

    let mut data = vec![0.0f64; height * width];
    if tiny {
        for h in 0..height {
            for w in 0..width {
                data[h * width + w] = threshold_at(h, w);
            }
        }
    } else {
        for h in 2..height - 2 {
            for w in 2..width - 2 {
                data[h * width + w] = threshold_at(h, w);
            }
        }
        // Borders replicate the nearest interior value.
        for h in 0..height {
            for w in 0..width {
                if h < 2 || h >= height - 2 || w < 2 || w >= width - 2 {
                    let ih = h.clamp(2, height - 3);
                    let iw = w.clamp(2, width - 3);
                    data[h * width + w] = data[ih * width + iw];
                }
            }
        }
    }
    ImagePlane::from_vec(height, width, data)
}

/// Expands a luminance JND plane to per-channel thresholds,
/// `t(h, w, c) = max(weight_c * luma_jnd(h, w), t_floor)`.
pub fn expand_to_channels(
    luma_jnd: &ImagePlane,
    weights: &ChannelWeights,
    t_floor: f64,
) -> Result<JndMap> {
    weights.validate()?;
    let mut data = Vec::with_capacity(luma_jnd.height() * luma_jnd.width() * 3);
    for &v in luma_jnd.data() {
        for c in 0..3 {
            data.push(weights.get(c) * v);
        }
    }
    JndMap::from_raw(luma_jnd.height(), luma_jnd.width(), data, t_floor)
}

// ---------------------------------------------------------------------------
// The .jndm container
// ---------------------------------------------------------------------------
//
// 16-byte header: magic "JNDM", version u16 = 1, height u32, width u32,
// channels u16, all little-endian; then height*width*channels IEEE-754
// f32 thresholds, little-endian, row-major (h, w, c).

const JNDM_MAGIC: &[u8; 4] = b"JNDM";
const JNDM_VERSION: u16 = 1;

/// Writes a map in the `.jndm` binary format.
pub fn save_jnd_map(map: &JndMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + map.data.len() * 4);
    buf.extend_from_slice(JNDM_MAGIC);
    buf.extend_from_slice(&JNDM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(map.height as u32).to_le_bytes());
    buf.extend_from_slice(&(map.width as u32).to_le_bytes());
    buf.extend_from_slice(&3u16.to_le_bytes());
    for &v in &map.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Writes an arbitrary 3-channel field (for example a per-pixel loss map)
/// in the `.jndm` container. Values are stored as `f32`.
pub fn save_field_as_jndm(
    height: usize,
    width: usize,
    values: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    if values.len() != height * width * 3 {
        return Err(Error::Domain(format!(
            "field length {} does not match {height}x{width}x3",
            values.len()
        )));
    }
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + values.len() * 4);
    buf.extend_from_slice(JNDM_MAGIC);
    buf.extend_from_slice(&JNDM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(height as u32).to_le_bytes());
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    buf.extend_from_slice(&3u16.to_le_bytes());
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Loads a `.jndm` map, verifying its shape and flooring every threshold
/// at `t_floor`.
pub fn load_jnd_map(
    path: impl AsRef<Path>,
    expected_height: usize,
    expected_width: usize,
    t_floor: f64,
) -> Result<JndMap> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    if &header[0..4] != JNDM_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic, not a JND map",
            path.display()
        )));
    }
    let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
    if version != JNDM_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let height = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(header[10..14].try_into().unwrap()) as usize;
    let channels = u16::from_le_bytes(header[14..16].try_into().unwrap());
    if channels != 3 {
        return Err(Error::Format(format!(
            "{}: expected 3 channels, got {channels}",
            path.display()
        )));
    }
    if height != expected_height || width != expected_width {
        return Err(Error::ShapeMismatch {
            expected_height,
            expected_width,
            height,
            width,
        });
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)
        .map_err(|e| Error::io(path, e))?;
    let expected_bytes = height * width * 3 * 4;
    if payload.len() != expected_bytes {
        return Err(Error::Format(format!(
            "{}: payload is {} bytes, expected {expected_bytes}",
            path.display(),
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(height * width * 3);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if v.is_nan() || v.is_infinite() {
            return Err(Error::Format(format!(
                "{}: non-finite threshold in payload",
                path.display()
            )));
        }
        data.push(v as f64);
    }
    JndMap::from_raw(height, width, data, t_floor)
}
