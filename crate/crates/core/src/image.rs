//! Image buffers and lossless PNG ingestion/emission.
//!
//! Everything downstream works on real-valued pixels in the 8-bit range
//! `[0, 255]`. Keeping the 8-bit units end to end means thresholds, losses,
//! and the `255²` peak constant in the metrics all live in the same domain,
//! with no unit conversions inside formulas.

use std::path::Path;

use crate::error::{Error, Result};

/// A 3-channel image with real-valued pixels in `[0, 255]`.
///
/// Channel order is R, G, B; data is row-major `(h, w, c)`. Values are
/// stored as `f64` so optimizers can hold non-integer intermediates, but
/// every stored value is validated to be finite and inside `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// A single-channel plane with the same domain rules as [`ImageRgb`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Number of color channels in every [`ImageRgb`].
pub const CHANNELS: usize = 3;

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Domain(format!(
            "image dimensions must be at least 1x1, got {height}x{width}"
        )));
    }
    Ok(())
}

fn check_range(data: &[f64]) -> Result<()> {
    for &v in data {
        if !v.is_finite() || !(0.0..=255.0).contains(&v) {
            return Err(Error::Domain(format!(
                "pixel value {v} outside [0, 255]"
            )));
        }
    }
    Ok(())
}

impl ImageRgb {
    /// Builds an image from row-major `(h, w, c)` data.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * CHANNELS {
            return Err(Error::Domain(format!(
                "data length {} does not match {height}x{width}x{CHANNELS}",
                data.len()
            )));
        }
        check_range(&data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image by evaluating `f(h, w, c)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for h in 0..height {
            for w in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(h, w, c));
                }
            }
        }
        check_range(&data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Total number of scalar samples (`height * width * 3`).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        self.data[(h * self.width + w) * CHANNELS + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// True when both images have the same height and width.
    pub fn same_shape(&self, other: &ImageRgb) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn shape_mismatch(&self, other: &ImageRgb) -> Error {
        Error::ShapeMismatch {
            expected_height: self.height,
            expected_width: self.width,
            height: other.height,
            width: other.width,
        }
    }
}

impl ImagePlane {
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::Domain(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        check_range(&data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for h in 0..height {
            for w in 0..width {
                data.push(f(h, w));
            }
        }
        check_range(&data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, h: usize, w: usize) -> f64 {
        self.data[h * self.width + w]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Maps a real-valued sample to its stored 8-bit level: round half away
/// from zero, then clamp to `[0, 255]`.
///
/// `127.5` becomes `128`; an optimizer overshoot like `-0.4` becomes `0`.
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Loads an 8-bit RGB or grayscale PNG.
///
/// Grayscale input is replicated to three channels so downstream indexing
/// is uniformly `(h, w, c)`. Anything else (16-bit depth, alpha, non-PNG
/// bytes) is rejected; no color management is applied.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(image::ImageFormat::Png) {
        return Err(Error::Format(format!(
            "{} is not a PNG file",
            path.display()
        )));
    }
    let decoded = reader
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;

    let (width, height, data) = match decoded {
        image::DynamicImage::ImageRgb8(img) => {
            let (w, h) = img.dimensions();
            let data = img.into_raw().into_iter().map(f64::from).collect();
            (w as usize, h as usize, data)
        }
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            let mut data = Vec::with_capacity(w as usize * h as usize * CHANNELS);
            for v in img.into_raw() {
                let v = f64::from(v);
                data.extend_from_slice(&[v, v, v]);
            }
            (w as usize, h as usize, data)
        }
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported PNG color type {:?} (need 8-bit RGB or grayscale)",
                path.display(),
                other.color()
            )));
        }
    };
    ImageRgb::from_vec(height, width, data)
}

/// Writes `img` as a lossless 8-bit RGB PNG.
///
/// Values are quantized with [`quantize`] before encoding, so a save/load
/// round trip is bit-identical for integer-valued data.
pub fn save_png(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    let buffer =
        image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes).expect("sized data");
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other}", path.display())),
        })
}

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Projects an RGB image to its BT.601 luminance plane,
/// `Y = 0.299 R + 0.587 G + 0.114 B`.
pub fn to_luminance(img: &ImageRgb) -> ImagePlane {
    let mut data = Vec::with_capacity(img.height * img.width);
    for px in img.data.chunks_exact(CHANNELS) {
        let y = LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2];
        // The weights sum to 1 but the dot product can land an ulp outside.
        data.push(y.clamp(0.0, 255.0));
    }
    ImagePlane {
        height: img.height,
        width: img.width,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn quantize_rounds_half_away_from_zero_and_clamps() {
        assert_eq!(quantize(127.5), 128);
        assert_eq!(quantize(127.4), 127);
        assert_eq!(quantize(-0.4), 0);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(254.5), 255);
        assert_eq!(quantize(255.0), 255);
        assert_eq!(quantize(300.0), 255);
        assert_eq!(quantize(0.0), 0);
    }

    #[test]
    fn load_single_black_pixel() {
        let dir = tmpdir();
        let path = dir.path().join("black.png");
        let img = ImageRgb::from_vec(1, 1, vec![0.0, 0.0, 0.0]).unwrap();
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn load_single_pixel_exact_values() {
        let dir = tmpdir();
        let path = dir.path().join("px.png");
        let img = ImageRgb::from_vec(1, 1, vec![255.0, 128.0, 7.0]).unwrap();
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.data(), &[255.0, 128.0, 7.0]);
    }

    #[test]
    fn dimensions_match_independent_png_header() {
        // Kodak frames are 768x512; verify our loader against the IHDR
        // fields read straight out of the file.
        let dir = tmpdir();
        let path = dir.path().join("kodak_size.png");
        let img = ImageRgb::from_fn(512, 768, |h, w, c| {
            ((h * 3 + w * 7 + c * 11) % 256) as f64
        })
        .unwrap();
        save_png(&img, &path).unwrap();

        // PNG: 8-byte signature, 4-byte length, "IHDR", width u32 BE, height u32 BE.
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[12..16], b"IHDR");
        let header_w = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
        let header_h = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
        assert_eq!(header_w, 768);
        assert_eq!(header_h, 512);

        let back = load_png(&path).unwrap();
        assert_eq!(back.width(), 768);
        assert_eq!(back.height(), 512);
    }

    #[test]
    fn grayscale_png_replicates_to_three_channels() {
        let dir = tmpdir();
        let path = dir.path().join("gray.png");
        let buffer = image::GrayImage::from_fn(4, 2, |x, y| image::Luma([(x + y * 10) as u8]));
        buffer.save_with_format(&path, image::ImageFormat::Png).unwrap();
        let img = load_png(&path).unwrap();
        assert_eq!(img.height(), 2);
        assert_eq!(img.width(), 4);
        for h in 0..2 {
            for w in 0..4 {
                let v = (w + h * 10) as f64;
                assert_eq!(img.get(h, w, 0), v);
                assert_eq!(img.get(h, w, 1), v);
                assert_eq!(img.get(h, w, 2), v);
            }
        }
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("deep.png");
        let buffer = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_pixel(
            2,
            2,
            image::Luma([40000u16]),
        );
        image::DynamicImage::ImageLuma16(buffer)
            .save_with_format(&path, image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(load_png(&path), Err(Error::Format(_))));
    }

    #[test]
    fn alpha_png_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("rgba.png");
        let buffer = image::RgbaImage::from_pixel(2, 2, image::Rgba([1, 2, 3, 200]));
        buffer.save_with_format(&path, image::ImageFormat::Png).unwrap();
        assert!(matches!(load_png(&path), Err(Error::Format(_))));
    }

    #[test]
    fn non_png_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("fake.png");
        std::fs::write(&path, b"definitely not a png").unwrap();
        assert!(matches!(load_png(&path), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_png("/nonexistent/nowhere.png"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn out_of_range_data_rejected() {
        assert!(ImageRgb::from_vec(1, 1, vec![0.0, -1.0, 0.0]).is_err());
        assert!(ImageRgb::from_vec(1, 1, vec![0.0, 256.0, 0.0]).is_err());
        assert!(ImageRgb::from_vec(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(ImageRgb::from_vec(0, 1, vec![]).is_err());
    }

    #[test]
    fn luminance_of_gray_is_the_gray_level() {
        let img = ImageRgb::from_fn(3, 3, |_, _, _| 93.0).unwrap();
        let luma = to_luminance(&img);
        for &y in luma.data() {
            assert!((y - 93.0).abs() < 1e-10, "got {y}");
        }
    }

    #[test]
    fn luminance_of_pure_green() {
        let img = ImageRgb::from_vec(1, 1, vec![0.0, 255.0, 0.0]).unwrap();
        let luma = to_luminance(&img);
        assert!((luma.get(0, 0) - 149.685).abs() < 1e-9);
    }

    #[test]
    fn luminance_matches_per_pixel_dot_product() {
        let img = ImageRgb::from_fn(4, 4, |h, w, c| ((h * 53 + w * 31 + c * 17) % 256) as f64)
            .unwrap();
        let luma = to_luminance(&img);
        for h in 0..4 {
            for w in 0..4 {
                let expect =
                    0.299 * img.get(h, w, 0) + 0.587 * img.get(h, w, 1) + 0.114 * img.get(h, w, 2);
                assert!((luma.get(h, w) - expect).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn png_round_trip_is_identity_on_integer_images(
            height in 1usize..8,
            width in 1usize..8,
            seed in 0u64..1000,
        ) {
            let img = ImageRgb::from_fn(height, width, |h, w, c| {
                ((seed as usize).wrapping_mul(2654435761)
                    .wrapping_add(h * 97 + w * 131 + c * 151) % 256) as f64
            }).unwrap();
            let dir = tmpdir();
            let path = dir.path().join("rt.png");
            save_png(&img, &path).unwrap();
            let back = load_png(&path).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn luminance_is_linear_in_scale(
            scale in 0.0f64..=1.0,
            seed in 0u64..1000,
        ) {
            let img = ImageRgb::from_fn(3, 5, |h, w, c| {
                ((seed as usize).wrapping_add(h * 41 + w * 59 + c * 73) % 256) as f64
            }).unwrap();
            let scaled = ImageRgb::from_fn(3, 5, |h, w, c| scale * img.get(h, w, c)).unwrap();
            let a = to_luminance(&scaled);
            let b = to_luminance(&img);
            for h in 0..3 {
                for w in 0..5 {
                    prop_assert!((a.get(h, w) - scale * b.get(h, w)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn luminance_stays_in_range(seed in 0u64..1000) {
            let img = ImageRgb::from_fn(2, 2, |h, w, c| {
                ((seed as usize).wrapping_add(h + w * 3 + c * 5) % 256) as f64
            }).unwrap();
            for &y in to_luminance(&img).data() {
                prop_assert!((0.0..=255.0).contains(&y));
            }
        }
    }
}
