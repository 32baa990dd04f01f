//! JND-guided perceptual distortion modeling.
//!
//! Not all error is visible. Each pixel of an image has a just-noticeable
//! difference (JND): the largest intensity change the human visual system
//! cannot perceive there. This crate provides the machinery to exploit
//! that in rate-distortion work:
//!
//! - [`image`]: real-valued image buffers in 8-bit units, PNG in/out.
//! - [`jnd`]: JND map generation (a classical spatial model), per-channel
//!   expansion, and a binary map container for externally computed maps.
//! - [`loss`]: the JND-gated perceptual loss with a distortion-aware
//!   adjustor, its analytic gradient, and the combined rate-distortion
//!   objective.
//! - [`metrics`]: PSPNR, global and per-channel PSNR, bits per pixel, and
//!   RD-curve assembly with a fixed CSV schema.
//! - [`assign`]: a budget-constrained pixel-space optimizer that shows the
//!   mechanism end to end, plus the k-times-JND noise injection experiment.
//!
//! ```
//! use jndopt_core::image::ImageRgb;
//! use jndopt_core::jnd::JndMap;
//! use jndopt_core::loss::{jnd_loss, AdjustorSpec};
//!
//! let x = ImageRgb::from_fn(4, 4, |_, _, _| 100.0)?;
//! let xhat = ImageRgb::from_fn(4, 4, |_, _, _| 102.0)?;
//! let jnd = JndMap::from_raw(4, 4, vec![3.0; 48], 0.1)?;
//!
//! // Two levels of error under a three-level threshold: invisible.
//! let report = jnd_loss(&x, &xhat, &jnd, AdjustorSpec::DistortionAware)?;
//! assert_eq!(report.total, 0.0);
//! # Ok::<(), jndopt_core::Error>(())
//! ```

pub mod assign;
pub mod error;
pub mod image;
pub mod jnd;
pub mod loss;
pub mod metrics;

pub use error::{Error, Result};
