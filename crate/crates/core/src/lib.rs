//! Discrete Gabor analysis on finite lattices and the time-frequency
//! blurring operators built on it, plus the log-mel feature and augmentation
//! pipeline that uses them.
//!
//! Transform convention: frame `n` starts at sample `n * a`, the window origin
//! is its first sample, and channel `m` measures absolute-time frequency
//! `m / M`:
//!
//! ```text
//! V[n, m] = sum_t x(t) conj(w(t - n a)) exp(-2 pi i m t / M)
//! ```

pub mod augment;
pub mod error;
pub mod export;
pub mod features;
pub mod fft;
pub mod gabor;
pub mod kernels;
pub mod operators;
pub mod signal;
pub mod verify;

pub use augment::{AugmentConfig, RngStream};
pub use error::{Error, Result};
pub use features::{FeatureConfig, MelFilterbank, Scale, Spectrogram};
pub use gabor::{BoundaryMode, Lattice, TfMatrix, Window, WindowKind};
pub use kernels::{Kernel, KernelField, KernelSpec};
pub use operators::{BlurSpec, Synthesis};
pub use signal::Signal;
