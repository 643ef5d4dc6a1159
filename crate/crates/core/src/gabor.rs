//! Discrete Gabor analysis on a separable lattice.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * frame `n` starts at sample `n * hop`; the window origin is its first
//!   sample (windows are not centered);
//! * the modulation uses absolute time, so
//!   `V[n, m] = sum_t x(t) conj(w(t - n hop)) exp(-2 pi i m t / M)`;
//! * all `M` DFT bins are kept, there is no half-spectrum shortcut in the
//!   operator path;
//! * `Circular` treats the signal as living on `Z_L`, so every identity below
//!   is exact; `Zeropad` zero-extends the signal past its end and keeps
//!   `ceil(L / hop)` frames.
//!
//! Only the painless regime `hop <= W <= M` is supported. There the frame
//! operator is the multiplication by `M * sum_n |w(t - n hop)|^2`, so dual and
//! tight windows are pointwise divisions.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Circular,
    Zeropad,
}

/// Sampling lattice for the time-frequency plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    len: usize,
    hop: usize,
    channels: usize,
    window_len: usize,
    mode: BoundaryMode,
}

impl Lattice {
    /// Validates `hop <= window_len <= channels <= len`. Circular lattices
    /// also need `hop | len` and `channels | len`, the latter so that the
    /// absolute-time modulation is well defined on `Z_L`.
    pub fn new(
        len: usize,
        hop: usize,
        channels: usize,
        window_len: usize,
        mode: BoundaryMode,
    ) -> Result<Self> {
        if len == 0 || hop == 0 || channels == 0 || window_len == 0 {
            return invalid("lattice parameters must be positive");
        }
        if window_len > channels {
            return invalid(format!(
                "window length {window_len} exceeds channel count {channels} (painless condition)"
            ));
        }
        if hop > window_len {
            return invalid(format!("hop {hop} exceeds window length {window_len}"));
        }
        if channels > len {
            return invalid(format!(
                "channel count {channels} exceeds signal length {len}"
            ));
        }
        if mode == BoundaryMode::Circular {
            if !len.is_multiple_of(hop) {
                return invalid(format!("hop {hop} does not divide length {len}"));
            }
            if !len.is_multiple_of(channels) {
                return invalid(format!(
                    "channel count {channels} does not divide length {len}"
                ));
            }
        }
        Ok(Self {
            len,
            hop,
            channels,
            window_len,
            mode,
        })
    }

    pub fn circular(len: usize, hop: usize, channels: usize, window_len: usize) -> Result<Self> {
        Self::new(len, hop, channels, window_len, BoundaryMode::Circular)
    }

    pub fn zeropad(len: usize, hop: usize, channels: usize, window_len: usize) -> Result<Self> {
        Self::new(len, hop, channels, window_len, BoundaryMode::Zeropad)
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn frames(&self) -> usize {
        match self.mode {
            BoundaryMode::Circular => self.len / self.hop,
            BoundaryMode::Zeropad => self.len.div_ceil(self.hop),
        }
    }

    /// `(frames, channels)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.frames(), self.channels)
    }

    /// Same hop, channels and window on a circular lattice of length `len`.
    pub fn with_circular_len(&self, len: usize) -> Result<Self> {
        Self::circular(len, self.hop, self.channels, self.window_len)
    }

    /// Lattice constant `M / hop` of the discrete Moyal identity.
    pub fn moyal_constant(&self) -> f64 {
        self.channels as f64 / self.hop as f64
    }

    pub(crate) fn require_circular(&self, what: &str) -> Result<()> {
        if self.mode != BoundaryMode::Circular {
            return Err(Error::Unsupported(format!(
                "{what} requires a circular lattice"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowKind {
    /// `exp(-pi ((t - (W - 1) / 2) / width)^2)`.
    Gaussian {
        width: f64,
    },
    /// Symmetric Hann, `0.5 (1 - cos(2 pi t / (W - 1)))`.
    Hann,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    values: Vec<Complex64>,
    kind: WindowKind,
}

impl Window {
    pub fn custom(values: Vec<Complex64>) -> Result<Self> {
        Self::with_kind(values, WindowKind::Custom)
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::custom(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    fn with_kind(values: Vec<Complex64>, kind: WindowKind) -> Result<Self> {
        if values.is_empty() {
            return invalid("window must have at least one sample");
        }
        if values
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return invalid("window contains non-finite values");
        }
        let w = Self { values, kind };
        if w.norm() == 0.0 {
            return invalid("window has zero norm");
        }
        Ok(w)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn kind(&self) -> &WindowKind {
        &self.kind
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Window) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * y.conj())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Window) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn check_lattice(&self, lattice: &Lattice) -> Result<()> {
        if self.len() != lattice.window_len() {
            return invalid(format!(
                "window length {} does not match lattice window length {}",
                self.len(),
                lattice.window_len()
            ));
        }
        Ok(())
    }
}

pub fn make_window(kind: &WindowKind, len: usize) -> Result<Window> {
    if len == 0 {
        return invalid("window length must be at least 1");
    }
    let values: Vec<f64> = match *kind {
        WindowKind::Gaussian { width } => {
            if !width.is_finite() || width <= 0.0 {
                return invalid("gaussian width must be positive");
            }
            let center = (len as f64 - 1.0) / 2.0;
            (0..len)
                .map(|t| {
                    let u = (t as f64 - center) / width;
                    (-PI * u * u).exp()
                })
                .collect()
        }
        WindowKind::Hann => {
            if len == 1 {
                vec![1.0]
            } else {
                let denom = (len - 1) as f64;
                (0..len)
                    .map(|t| 0.5 * (1.0 - (2.0 * PI * t as f64 / denom).cos()))
                    .collect()
            }
        }
        WindowKind::Custom => return invalid("custom windows are built from explicit values"),
    };
    Window::with_kind(
        values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        kind.clone(),
    )
}

/// Parses a window name as used on the command line.
pub fn window_kind_from_name(name: &str, gaussian_width: f64) -> Result<WindowKind> {
    match name {
        "hann" => Ok(WindowKind::Hann),
        "gaussian" => Ok(WindowKind::Gaussian {
            width: gaussian_width,
        }),
        other => invalid(format!("unknown window kind '{other}'")),
    }
}

/// Complex coefficient grid `V[n, m]`, frames along axis 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TfMatrix {
    coeffs: Array2<Complex64>,
    lattice: Lattice,
    sample_rate: u32,
}

impl TfMatrix {
    pub fn new(coeffs: Array2<Complex64>, lattice: Lattice, sample_rate: u32) -> Result<Self> {
        if coeffs.dim() != lattice.shape() {
            return invalid(format!(
                "coefficient shape {:?} does not match lattice shape {:?}",
                coeffs.dim(),
                lattice.shape()
            ));
        }
        if coeffs
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return invalid("coefficients contain non-finite values");
        }
        Ok(Self {
            coeffs,
            lattice,
            sample_rate,
        })
    }

    pub(crate) fn from_parts(
        coeffs: Array2<Complex64>,
        lattice: Lattice,
        sample_rate: u32,
    ) -> Self {
        debug_assert_eq!(coeffs.dim(), lattice.shape());
        Self {
            coeffs,
            lattice,
            sample_rate,
        }
    }

    pub fn zeros(lattice: Lattice, sample_rate: u32) -> Self {
        Self::from_parts(Array2::zeros(lattice.shape()), lattice, sample_rate)
    }

    pub fn coeffs(&self) -> &Array2<Complex64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Array2<Complex64> {
        self.coeffs
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs.dim()
    }

    pub fn with_coeffs(&self, coeffs: Array2<Complex64>) -> Result<Self> {
        Self::new(coeffs, self.lattice, self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    pub fn inner(&self, other: &TfMatrix) -> Complex64 {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(x, y)| x * y.conj())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &TfMatrix) -> f64 {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// `||self - other|| / ||other||`.
    pub fn relative_error(&self, reference: &TfMatrix) -> f64 {
        let diff = self
            .coeffs
            .iter()
            .zip(reference.coeffs.iter())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale = reference.norm();
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    }
}

/// `exp(sign * 2 pi i j / m)` for `j in 0..m`.
fn twiddles(m: usize, sign: f64) -> Vec<Complex64> {
    (0..m)
        .map(|j| Complex64::from_polar(1.0, sign * 2.0 * PI * j as f64 / m as f64))
        .collect()
}

fn check_signal(signal: &Signal, window: &Window, lattice: &Lattice) -> Result<()> {
    window.check_lattice(lattice)?;
    if signal.len() != lattice.len() {
        return invalid(format!(
            "signal length {} does not match lattice length {}",
            signal.len(),
            lattice.len()
        ));
    }
    Ok(())
}

pub fn stft(signal: &Signal, window: &Window, lattice: &Lattice) -> Result<TfMatrix> {
    check_signal(signal, window, lattice)?;
    let (frames, m) = lattice.shape();
    let len = lattice.len();
    let hop = lattice.hop();
    let x = signal.samples();
    let phase = twiddles(m, -1.0);
    let mut coeffs = Array2::zeros((frames, m));
    let mut buf = vec![Complex64::default(); m];
    for n in 0..frames {
        buf.fill(Complex64::default());
        let start = n * hop;
        for (k, w) in window.values().iter().enumerate() {
            let t = start + k;
            let sample = match lattice.mode() {
                BoundaryMode::Circular => x[t % len],
                BoundaryMode::Zeropad if t < len => x[t],
                BoundaryMode::Zeropad => continue,
            };
            buf[k] = sample * w.conj();
        }
        fft::forward_in_place(&mut buf);
        let shift = start % m;
        for (j, v) in buf.iter().enumerate() {
            coeffs[[n, j]] = v * phase[(j * shift) % m];
        }
    }
    Ok(TfMatrix::from_parts(coeffs, *lattice, signal.sample_rate()))
}

/// Adjoint of [`stft`]: `x(t) = sum_{n,m} F[n,m] w(t - n hop) exp(2 pi i m t / M)`.
pub fn synthesize(tf: &TfMatrix, window: &Window, lattice: &Lattice) -> Result<Signal> {
    window.check_lattice(lattice)?;
    if tf.lattice() != lattice {
        return invalid("coefficient lattice does not match synthesis lattice");
    }
    let (frames, m) = lattice.shape();
    let len = lattice.len();
    let hop = lattice.hop();
    let phase = twiddles(m, 1.0);
    let mut out = vec![Complex64::default(); len];
    let mut buf = vec![Complex64::default(); m];
    for n in 0..frames {
        let start = n * hop;
        let shift = start % m;
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = tf.coeffs[[n, j]] * phase[(j * shift) % m];
        }
        fft::inverse_in_place(&mut buf);
        for (k, w) in window.values().iter().enumerate() {
            let t = start + k;
            match lattice.mode() {
                BoundaryMode::Circular => out[t % len] += w * buf[k],
                BoundaryMode::Zeropad if t < len => out[t] += w * buf[k],
                BoundaryMode::Zeropad => {}
            }
        }
    }
    Ok(Signal::from_parts(out, tf.sample_rate(), true))
}

/// Hop-periodization `P(r) = sum_{i = r mod hop} |w(i)|^2` for `r in 0..hop`.
/// The frame operator of a painless lattice multiplies sample `t` by
/// `M * P(t mod hop)`.
pub fn window_periodization(window: &Window, lattice: &Lattice) -> Result<Vec<f64>> {
    window.check_lattice(lattice)?;
    let hop = lattice.hop();
    let mut p = vec![0.0; hop];
    for (i, w) in window.values().iter().enumerate() {
        p[i % hop] += w.norm_sqr();
    }
    Ok(p)
}

fn frame_diagonal(window: &Window, lattice: &Lattice) -> Result<Vec<f64>> {
    let m = lattice.channels() as f64;
    let diag: Vec<f64> = window_periodization(window, lattice)?
        .into_iter()
        .map(|p| m * p)
        .collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if let Some(r) = diag.iter().position(|&d| d.is_nan() || d <= max * 1e-14) {
        return Err(Error::NotAFrame(format!(
            "frame operator vanishes at residue {r} mod {}",
            lattice.hop()
        )));
    }
    Ok(diag)
}

/// Canonical dual `g(t) = w(t) / (M sum_n |w(t - n hop)|^2)`.
pub fn dual_window(window: &Window, lattice: &Lattice) -> Result<Window> {
    let diag = frame_diagonal(window, lattice)?;
    let hop = lattice.hop();
    let values = window
        .values()
        .iter()
        .enumerate()
        .map(|(i, w)| w / diag[i % hop])
        .collect();
    Ok(Window {
        values,
        kind: WindowKind::Custom,
    })
}

/// Canonical tight window `w(t) / sqrt(M sum_n |w(t - n hop)|^2)`.
pub fn tight_window(window: &Window, lattice: &Lattice) -> Result<Window> {
    let diag = frame_diagonal(window, lattice)?;
    let hop = lattice.hop();
    let values = window
        .values()
        .iter()
        .enumerate()
        .map(|(i, w)| w / diag[i % hop].sqrt())
        .collect();
    Ok(Window {
        values,
        kind: WindowKind::Custom,
    })
}

/// Whether `window` is self-dual on `lattice` to within `tol`.
pub fn is_tight(window: &Window, lattice: &Lattice, tol: f64) -> bool {
    let m = lattice.channels() as f64;
    match window_periodization(window, lattice) {
        Ok(p) => p.iter().all(|&v| (m * v - 1.0).abs() <= tol),
        Err(_) => false,
    }
}

/// `stft(synthesize(tf, dual), window)`: projection onto the range of the
/// analysis map. Orthogonal when `window` is tight.
pub fn gabor_project(tf: &TfMatrix, window: &Window, lattice: &Lattice) -> Result<TfMatrix> {
    let dual = dual_window(window, lattice)?;
    let signal = synthesize(tf, &dual, lattice)?;
    stft(&signal, window, lattice)
}

/// Relative residual of the lattice Moyal identity
/// `<V_{w1} x1, V_{w2} x2> = (M / hop) <x1, x2> conj(<w1, w2>)`.
///
/// The identity is exact for any windows when `hop == 1`. For `hop > 1` it
/// holds exactly when `sum_n conj(w1) w2 (t - n hop)` is constant in `t`,
/// which is the case for any window paired with a (scaled) dual.
pub fn moyal_check(
    x1: &Signal,
    x2: &Signal,
    w1: &Window,
    w2: &Window,
    lattice: &Lattice,
) -> Result<f64> {
    lattice.require_circular("the Moyal identity check")?;
    let v1 = stft(x1, w1, lattice)?;
    let v2 = stft(x2, w2, lattice)?;
    let lhs = v1.inner(&v2);
    let c = lattice.moyal_constant();
    let rhs = x1.inner(x2) * w1.inner(w2).conj() * c;
    let scale = c * x1.norm() * x2.norm() * w1.norm() * w2.norm();
    let diff = (lhs - rhs).norm();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Circular modulation `x(t) exp(2 pi i bins t / M)`: shifts the STFT by
/// `bins` channels.
pub fn modulate_bins(signal: &Signal, bins: usize, channels: usize) -> Signal {
    let phase = twiddles(channels, 1.0);
    let samples = signal
        .samples()
        .iter()
        .enumerate()
        .map(|(t, z)| z * phase[(bins * t) % channels])
        .collect();
    Signal::from_parts(samples, signal.sample_rate(), true)
}
