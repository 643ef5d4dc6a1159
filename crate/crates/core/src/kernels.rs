//! Real 2D blurring kernels on the time-frequency grid and position-dependent
//! kernel fields.
//!
//! Axis 0 is time (frames), axis 1 is frequency (channels). Taps are indexed
//! so that the center tap is the anchor: tap `(i, j)` acts at offset
//! `(i - ci, j - cj)`.

use std::ops::{AddAssign, Mul};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft;
use crate::gabor::{Lattice, TfMatrix};

/// Default Gaussian truncation radius in units of sigma.
pub const DEFAULT_TRUNCATION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    taps: Array2<f64>,
    mass: f64,
}

impl Kernel {
    /// Wraps a tap grid. Both extents must be odd so the anchor is the center.
    pub fn new(taps: Array2<f64>) -> Result<Self> {
        let (t, f) = taps.dim();
        if t == 0 || f == 0 || t % 2 == 0 || f % 2 == 0 {
            return invalid(format!("kernel extents must be odd, got {t}x{f}"));
        }
        if taps.iter().any(|v| !v.is_finite()) {
            return invalid("kernel taps must be finite");
        }
        let mass = taps.sum();
        Ok(Self { taps, mass })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        let f = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != f) {
            return invalid("kernel rows differ in length");
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let taps = Array2::from_shape_vec((t, f), flat)
            .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        Self::new(taps)
    }

    pub fn taps(&self) -> &Array2<f64> {
        &self.taps
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `(time_taps, freq_taps)`.
    pub fn extents(&self) -> (usize, usize) {
        self.taps.dim()
    }

    pub fn anchor(&self) -> (usize, usize) {
        let (t, f) = self.extents();
        (t / 2, f / 2)
    }

    /// Time radius in frames.
    pub fn time_radius(&self) -> usize {
        self.extents().0 / 2
    }

    /// Sum of absolute taps, the total variation norm of the kernel measure.
    pub fn l1_norm(&self) -> f64 {
        self.taps.iter().map(|v| v.abs()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let taps = self.taps.mapv(|v| v * factor);
        let mass = taps.sum();
        Self { taps, mass }
    }

    /// Reflection through the anchor, `k(-i, -j)`.
    pub fn flipped(&self) -> Self {
        let (t, f) = self.extents();
        let taps = Array2::from_shape_fn((t, f), |(i, j)| self.taps[[t - 1 - i, f - 1 - j]]);
        Self {
            taps,
            mass: self.mass,
        }
    }
}

pub fn delta_kernel() -> Kernel {
    Kernel::new(Array2::from_elem((1, 1), 1.0)).expect("unit tap is a valid kernel")
}

fn gaussian_taps(sigma_t: f64, sigma_f: f64, truncation: f64) -> Result<Array2<f64>> {
    let valid = |s: f64| s.is_finite() && s >= 0.0;
    if !valid(sigma_t) || !valid(sigma_f) {
        return invalid("gaussian spreads must be finite and nonnegative");
    }
    if !truncation.is_finite() || truncation <= 0.0 {
        return invalid("truncation must be positive");
    }
    let radius = |s: f64| (truncation * s).ceil() as usize;
    let (rt, rf) = (radius(sigma_t), radius(sigma_f));
    let axis = |r: usize, s: f64| -> Vec<f64> {
        (0..2 * r + 1)
            .map(|i| {
                let d = i as f64 - r as f64;
                if s == 0.0 {
                    1.0
                } else {
                    (-d * d / (2.0 * s * s)).exp()
                }
            })
            .collect()
    };
    let (gt, gf) = (axis(rt, sigma_t), axis(rf, sigma_f));
    Ok(Array2::from_shape_fn((gt.len(), gf.len()), |(i, j)| {
        gt[i] * gf[j]
    }))
}

/// Truncated sampled Gaussian normalized to mass 1. A zero spread collapses
/// that axis to a single tap.
pub fn gaussian_kernel(sigma_t: f64, sigma_f: f64, truncation: f64) -> Result<Kernel> {
    let taps = gaussian_taps(sigma_t, sigma_f, truncation)?;
    let total = taps.sum();
    Kernel::new(taps.mapv(|v| v / total))
}

/// Same as [`gaussian_kernel`] but with peak tap 1 instead of unit mass.
pub fn gaussian_kernel_unnormalized(sigma_t: f64, sigma_f: f64, truncation: f64) -> Result<Kernel> {
    Kernel::new(gaussian_taps(sigma_t, sigma_f, truncation)?)
}

/// Full linear convolution of the two tap grids.
pub fn compose(k1: &Kernel, k2: &Kernel) -> Kernel {
    let (t1, f1) = k1.extents();
    let (t2, f2) = k2.extents();
    let mut taps = Array2::zeros((t1 + t2 - 1, f1 + f2 - 1));
    for ((i1, j1), &a) in k1.taps.indexed_iter() {
        if a == 0.0 {
            continue;
        }
        for ((i2, j2), &b) in k2.taps.indexed_iter() {
            taps[[i1 + i2, j1 + j2]] += a * b;
        }
    }
    Kernel::new(taps).expect("odd + odd - 1 extents stay odd")
}

fn embed_at_origin(kernel: &Kernel, frames: usize, channels: usize) -> Result<Array2<Complex64>> {
    let (t, f) = kernel.extents();
    if t > frames || f > channels {
        return invalid(format!(
            "kernel {t}x{f} does not fit in a {frames}x{channels} grid"
        ));
    }
    let (ci, cj) = kernel.anchor();
    let mut grid = Array2::zeros((frames, channels));
    for ((i, j), &v) in kernel.taps.indexed_iter() {
        let r = (i + frames - ci) % frames;
        let c = (j + channels - cj) % channels;
        grid[[r, c]] += Complex64::new(v, 0.0);
    }
    Ok(grid)
}

/// 2D DFT of the kernel placed anchor-at-origin on a circular
/// `frames x channels` grid.
pub fn kernel_dft(kernel: &Kernel, frames: usize, channels: usize) -> Result<Array2<Complex64>> {
    Ok(fft::dft2(&embed_at_origin(kernel, frames, channels)?))
}

/// Extremes of the kernel's circular DFT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpectrum {
    pub min_re: f64,
    pub max_abs_im: f64,
}

impl KernelSpectrum {
    /// Real and nonnegative up to `tol` times the kernel's l1 norm.
    pub fn is_nonnegative(&self, l1: f64, tol: f64) -> bool {
        self.min_re >= 0.0 && self.max_abs_im <= tol * l1.max(1.0)
    }
}

pub fn kernel_spectrum(kernel: &Kernel, frames: usize, channels: usize) -> Result<KernelSpectrum> {
    let spec = kernel_dft(kernel, frames, channels)?;
    let min_re = spec.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let max_abs_im = spec.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(KernelSpectrum { min_re, max_abs_im })
}

/// Minimum real part of the kernel's circular DFT.
pub fn kernel_dft_min(kernel: &Kernel, frames: usize, channels: usize) -> Result<f64> {
    Ok(kernel_spectrum(kernel, frames, channels)?.min_re)
}

/// Boundary rule along one axis of a grid convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisBoundary {
    Circular,
    Zero,
    /// Clamp to the nearest edge cell.
    Edge,
}

/// Time-axis handling for [`convolve_tf`]. The frequency axis is always
/// circular since DFT bins are cyclic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TfConvMode {
    Circular,
    ZeropadTime,
}

impl TfConvMode {
    fn time_boundary(self) -> AxisBoundary {
        match self {
            TfConvMode::Circular => AxisBoundary::Circular,
            TfConvMode::ZeropadTime => AxisBoundary::Zero,
        }
    }
}

#[inline]
fn resolve(idx: isize, len: usize, boundary: AxisBoundary) -> Option<usize> {
    let n = len as isize;
    match boundary {
        AxisBoundary::Circular => Some(idx.rem_euclid(n) as usize),
        AxisBoundary::Zero => (0..n).contains(&idx).then_some(idx as usize),
        AxisBoundary::Edge => Some(idx.clamp(0, n - 1) as usize),
    }
}

/// `out[n, m] = sum_{i,j} k[i, j] in[n - (i - ci), m - (j - cj)]`.
pub fn convolve_grid<T>(
    input: &Array2<T>,
    kernel: &Kernel,
    time: AxisBoundary,
    freq: AxisBoundary,
) -> Array2<T>
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
{
    let (rows, cols) = input.dim();
    let mut out = Array2::from_elem((rows, cols), T::default());
    if rows == 0 || cols == 0 {
        return out;
    }
    let (ci, cj) = kernel.anchor();
    let src = input.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("fresh array");
    for ((i, j), &k) in kernel.taps.indexed_iter() {
        if k == 0.0 {
            continue;
        }
        let di = i as isize - ci as isize;
        let dj = j as isize - cj as isize;
        // Column map for this tap, shared by every row.
        let col_map: Vec<Option<usize>> = (0..cols)
            .map(|m| resolve(m as isize - dj, cols, freq))
            .collect();
        for n in 0..rows {
            let Some(src_row) = resolve(n as isize - di, rows, time) else {
                continue;
            };
            let from = &src[src_row * cols..(src_row + 1) * cols];
            let to = &mut dst[n * cols..(n + 1) * cols];
            for (slot, src_col) in to.iter_mut().zip(&col_map) {
                if let Some(c) = *src_col {
                    *slot += from[c] * k;
                }
            }
        }
    }
    out
}

pub fn convolve_tf(tf: &TfMatrix, kernel: &Kernel, mode: TfConvMode) -> TfMatrix {
    let coeffs = convolve_grid(
        tf.coeffs(),
        kernel,
        mode.time_boundary(),
        AxisBoundary::Circular,
    );
    TfMatrix::from_parts(coeffs, *tf.lattice(), tf.sample_rate())
}

/// Position-dependent kernel map, one kernel per time-frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelField {
    /// One kernel broadcast over the grid.
    Constant {
        kernel: Kernel,
        shape: (usize, usize),
    },
    /// `scales[z] * kernel` at bin `z`.
    Scaled { kernel: Kernel, scales: Array2<f64> },
    /// Arbitrary kernel per bin.
    PerBin { kernels: Array2<Kernel> },
}

impl KernelField {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            KernelField::Constant { shape, .. } => *shape,
            KernelField::Scaled { scales, .. } => scales.dim(),
            KernelField::PerBin { kernels } => kernels.dim(),
        }
    }

    /// The kernel acting at bin `(n, m)`.
    pub fn kernel_at(&self, n: usize, m: usize) -> Kernel {
        match self {
            KernelField::Constant { kernel, .. } => kernel.clone(),
            KernelField::Scaled { kernel, scales } => kernel.scaled(scales[[n, m]]),
            KernelField::PerBin { kernels } => kernels[[n, m]].clone(),
        }
    }
}

pub fn constant_field(kernel: &Kernel, lattice: &Lattice) -> KernelField {
    KernelField::Constant {
        kernel: kernel.clone(),
        shape: lattice.shape(),
    }
}

/// `mask[z] * delta` at every bin.
pub fn mask_field(mask: &Array2<f64>, lattice: &Lattice) -> Result<KernelField> {
    if mask.dim() != lattice.shape() {
        return invalid(format!(
            "mask shape {:?} does not match lattice shape {:?}",
            mask.dim(),
            lattice.shape()
        ));
    }
    if mask.iter().any(|v| !v.is_finite()) {
        return invalid("mask values must be finite");
    }
    Ok(KernelField::Scaled {
        kernel: delta_kernel(),
        scales: mask.clone(),
    })
}

pub fn per_bin_field(kernels: Array2<Kernel>, lattice: &Lattice) -> Result<KernelField> {
    if kernels.dim() != lattice.shape() {
        return invalid(format!(
            "field shape {:?} does not match lattice shape {:?}",
            kernels.dim(),
            lattice.shape()
        ));
    }
    Ok(KernelField::PerBin { kernels })
}

/// Per-bin correlation `out[z] = sum_w mu_z(w) V[z - w]`. Reduces to
/// [`convolve_tf`] for a constant field.
pub fn apply_field(tf: &TfMatrix, field: &KernelField, mode: TfConvMode) -> Result<TfMatrix> {
    if field.shape() != tf.shape() {
        return invalid(format!(
            "field shape {:?} does not match coefficient shape {:?}",
            field.shape(),
            tf.shape()
        ));
    }
    let coeffs = match field {
        KernelField::Constant { kernel, .. } => return Ok(convolve_tf(tf, kernel, mode)),
        KernelField::Scaled { kernel, scales } => {
            let mut out = convolve_tf(tf, kernel, mode).into_coeffs();
            out.zip_mut_with(scales, |z, &s| *z *= s);
            out
        }
        KernelField::PerBin { kernels } => {
            let (rows, cols) = tf.shape();
            let input = tf.coeffs();
            let time = mode.time_boundary();
            Array2::from_shape_fn((rows, cols), |(n, m)| {
                let kernel = &kernels[[n, m]];
                let (ci, cj) = kernel.anchor();
                let mut acc = Complex64::default();
                for ((i, j), &k) in kernel.taps.indexed_iter() {
                    let src_n = resolve(n as isize - (i as isize - ci as isize), rows, time);
                    let src_m = resolve(
                        m as isize - (j as isize - cj as isize),
                        cols,
                        AxisBoundary::Circular,
                    );
                    if let (Some(r), Some(c)) = (src_n, src_m) {
                        acc += input[[r, c]] * k;
                    }
                }
                acc
            })
        }
    };
    tf.with_coeffs(coeffs)
}

/// Kernel literal as it appears in pipeline configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Gaussian {
        sigma_t: f64,
        sigma_f: f64,
        #[serde(default = "default_truncation")]
        truncation: f64,
    },
    Delta {},
    Custom {
        taps: Vec<Vec<f64>>,
    },
}

fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        match self {
            KernelSpec::Gaussian {
                sigma_t,
                sigma_f,
                truncation,
            } => gaussian_kernel(*sigma_t, *sigma_f, *truncation),
            KernelSpec::Delta {} => Ok(delta_kernel()),
            KernelSpec::Custom { taps } => Kernel::from_rows(taps),
        }
    }
}
