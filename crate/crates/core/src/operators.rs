//! Time-frequency blurring operators `x -> V_g^*(k * V_w x)` and relatives.
//!
//! Synthesis uses the canonical dual (or the tight window) so the delta
//! kernel gives back the input exactly. Blurring on a zero-padded lattice is
//! evaluated on a circular lattice long enough that nothing wraps around into
//! the cropped output; localization and position-dependent fields are tied to
//! the grid of their lattice and need a circular one.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::gabor::{
    dual_window, is_tight, stft, synthesize, tight_window, BoundaryMode, Lattice, Window,
};
use crate::kernels::{apply_field, convolve_tf, kernel_dft, Kernel, KernelField, TfConvMode};
use crate::signal::{random_complex, Signal};

/// Which window synthesizes after the convolution.
#[derive(Debug, Clone, PartialEq)]
pub enum Synthesis {
    /// Canonical dual of the analysis window.
    Dual,
    /// Analysis and synthesis both use the tight version of the window.
    Tight,
    Explicit(Window),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlurSpec {
    pub window: Window,
    pub synthesis: Synthesis,
    pub kernel: Kernel,
    pub lattice: Lattice,
    /// Rescale the output to the input's l2 norm.
    pub renormalize_energy: bool,
}

impl BlurSpec {
    pub fn new(window: Window, kernel: Kernel, lattice: Lattice) -> Self {
        Self {
            window,
            synthesis: Synthesis::Dual,
            kernel,
            lattice,
            renormalize_energy: false,
        }
    }

    pub fn with_synthesis(mut self, synthesis: Synthesis) -> Self {
        self.synthesis = synthesis;
        self
    }

    pub fn with_renormalize(mut self, on: bool) -> Self {
        self.renormalize_energy = on;
        self
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    /// `(analysis, synthesis)` windows on `lattice`.
    pub fn resolve_windows(&self, lattice: &Lattice) -> Result<(Window, Window)> {
        match &self.synthesis {
            Synthesis::Dual => Ok((self.window.clone(), dual_window(&self.window, lattice)?)),
            Synthesis::Tight => {
                let t = tight_window(&self.window, lattice)?;
                Ok((t.clone(), t))
            }
            Synthesis::Explicit(w) => Ok((self.window.clone(), w.clone())),
        }
    }
}

/// One `s_n * (analysis_n, synthesis_n)` term of a finite-rank operator window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTerm {
    pub weight: f64,
    pub analysis: Window,
    pub synthesis: Window,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorWindowSpec {
    pub terms: Vec<WindowTerm>,
}

fn check_len(signal: &Signal, lattice: &Lattice) -> Result<()> {
    if signal.len() != lattice.len() {
        return invalid(format!(
            "signal length {} does not match lattice length {}",
            signal.len(),
            lattice.len()
        ));
    }
    Ok(())
}

/// Marks an operator output real when the input was real and the imaginary
/// residue is at roundoff level.
fn finish(samples: Vec<Complex64>, input: &Signal) -> Signal {
    let peak = samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_im = samples.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let is_complex = input.is_complex() || max_im > 1e-9 * peak.max(f64::MIN_POSITIVE);
    Signal::from_parts(samples, input.sample_rate(), is_complex)
}

fn renormalize(out: Signal, input: &Signal) -> Signal {
    let (target, current) = (input.norm(), out.norm());
    if current > 0.0 {
        let is_complex = out.is_complex();
        let scaled = out.scaled(Complex64::new(target / current, 0.0));
        Signal::from_parts(scaled.into_samples(), input.sample_rate(), is_complex)
    } else {
        out
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Circular lattice holding a zero-padded signal of `lattice.len()` samples
/// with enough guard that a kernel of `time_radius` frames cannot wrap.
pub fn embedding_lattice(lattice: &Lattice, time_radius: usize) -> Result<Lattice> {
    let guard = lattice.window_len() + lattice.hop() * time_radius;
    let step = lcm(lattice.hop(), lattice.channels());
    let len = (lattice.len() + guard).div_ceil(step) * step;
    lattice.with_circular_len(len)
}

/// `V_synth^*(k * V_analysis x)` on a circular lattice.
fn blur_circular(
    signal: &Signal,
    analysis: &Window,
    synthesis: &Window,
    kernel: &Kernel,
    lattice: &Lattice,
) -> Result<Vec<Complex64>> {
    let tf = stft(signal, analysis, lattice)?;
    let blurred = convolve_tf(&tf, kernel, TfConvMode::Circular);
    Ok(synthesize(&blurred, synthesis, lattice)?.into_samples())
}

fn blur_windows(
    signal: &Signal,
    analysis: &Window,
    synthesis: &Window,
    kernel: &Kernel,
    lattice: &Lattice,
) -> Result<Vec<Complex64>> {
    check_len(signal, lattice)?;
    match lattice.mode() {
        BoundaryMode::Circular => blur_circular(signal, analysis, synthesis, kernel, lattice),
        BoundaryMode::Zeropad => {
            let ext = embedding_lattice(lattice, kernel.time_radius())?;
            let mut padded = signal.samples().to_vec();
            padded.resize(ext.len(), Complex64::default());
            let padded = Signal::from_parts(padded, signal.sample_rate(), signal.is_complex());
            let mut out = blur_circular(&padded, analysis, synthesis, kernel, &ext)?;
            out.truncate(lattice.len());
            Ok(out)
        }
    }
}

pub fn blur(signal: &Signal, spec: &BlurSpec) -> Result<Signal> {
    let (analysis, synthesis) = spec.resolve_windows(&spec.lattice)?;
    let out = blur_windows(signal, &analysis, &synthesis, &spec.kernel, &spec.lattice)?;
    let out = finish(out, signal);
    Ok(if spec.renormalize_energy {
        renormalize(out, signal)
    } else {
        out
    })
}

/// Adjoint of [`blur`] without renormalization, on a circular lattice.
pub fn blur_adjoint(signal: &Signal, spec: &BlurSpec) -> Result<Signal> {
    spec.lattice.require_circular("the blur adjoint")?;
    check_len(signal, &spec.lattice)?;
    let (analysis, synthesis) = spec.resolve_windows(&spec.lattice)?;
    let out = blur_circular(
        signal,
        &synthesis,
        &analysis,
        &spec.kernel.flipped(),
        &spec.lattice,
    )?;
    Ok(finish(out, signal))
}

/// Separate analysis and synthesis windows.
pub fn blur_two_window(
    signal: &Signal,
    analysis: &Window,
    synthesis: &Window,
    kernel: &Kernel,
    lattice: &Lattice,
) -> Result<Signal> {
    let out = blur_windows(signal, analysis, synthesis, kernel, lattice)?;
    Ok(finish(out, signal))
}

/// `sum_n s_n * blur_two_window(x, analysis_n, synthesis_n)`.
pub fn blur_multi_window(
    signal: &Signal,
    spec: &OperatorWindowSpec,
    kernel: &Kernel,
    lattice: &Lattice,
) -> Result<Signal> {
    if spec.terms.is_empty() {
        return invalid("operator window needs at least one term");
    }
    if spec.terms.iter().any(|t| !t.weight.is_finite()) {
        return invalid("operator window weights must be finite");
    }
    let mut acc = vec![Complex64::default(); signal.len()];
    for term in &spec.terms {
        let part = blur_windows(signal, &term.analysis, &term.synthesis, kernel, lattice)?;
        for (a, p) in acc.iter_mut().zip(part) {
            *a += p * term.weight;
        }
    }
    Ok(finish(acc, signal))
}

/// Localization operator `V_g^*(mask . V_w x)` with the canonical dual `g`.
pub fn localize(
    signal: &Signal,
    mask: &Array2<Complex64>,
    window: &Window,
    lattice: &Lattice,
) -> Result<Signal> {
    lattice.require_circular("localization")?;
    check_len(signal, lattice)?;
    if mask.dim() != lattice.shape() {
        return invalid(format!(
            "mask shape {:?} does not match lattice shape {:?}",
            mask.dim(),
            lattice.shape()
        ));
    }
    let dual = dual_window(window, lattice)?;
    let tf = stft(signal, window, lattice)?;
    let mut coeffs = tf.coeffs().clone();
    coeffs.zip_mut_with(mask, |z, m| *z *= m);
    let masked = tf.with_coeffs(coeffs)?;
    Ok(finish(
        synthesize(&masked, &dual, lattice)?.into_samples(),
        signal,
    ))
}

/// Real-mask convenience wrapper over [`localize`].
pub fn localize_real(
    signal: &Signal,
    mask: &Array2<f64>,
    window: &Window,
    lattice: &Lattice,
) -> Result<Signal> {
    localize(
        signal,
        &mask.mapv(|v| Complex64::new(v, 0.0)),
        window,
        lattice,
    )
}

pub fn blur_position_dependent(
    signal: &Signal,
    field: &KernelField,
    window: &Window,
    lattice: &Lattice,
) -> Result<Signal> {
    lattice.require_circular("position-dependent blurring")?;
    check_len(signal, lattice)?;
    let dual = dual_window(window, lattice)?;
    let tf = stft(signal, window, lattice)?;
    let blurred = apply_field(&tf, field, TfConvMode::Circular)?;
    Ok(finish(
        synthesize(&blurred, &dual, lattice)?.into_samples(),
        signal,
    ))
}

fn require_tight(window: &Window, lattice: &Lattice) -> Result<()> {
    if !is_tight(window, lattice, 1e-10) {
        return Err(Error::Unsupported(
            "weak action needs a tight window (same window for analysis and synthesis)".into(),
        ));
    }
    Ok(())
}

/// `<B x, x>` evaluated in the signal domain, with `window` as both analysis
/// and synthesis window.
pub fn weak_action(
    signal: &Signal,
    window: &Window,
    kernel: &Kernel,
    lattice: &Lattice,
) -> Result<Complex64> {
    lattice.require_circular("the weak action")?;
    require_tight(window, lattice)?;
    check_len(signal, lattice)?;
    let out = blur_circular(signal, window, window, kernel, lattice)?;
    let out = Signal::from_parts(out, signal.sample_rate(), true);
    Ok(out.inner(signal))
}

/// `<B x, x> = (1 / NM) sum mu_hat |DFT2(V_w x)|^2`.
pub fn weak_action_fourier(
    signal: &Signal,
    window: &Window,
    kernel: &Kernel,
    lattice: &Lattice,
) -> Result<Complex64> {
    lattice.require_circular("the weak action")?;
    require_tight(window, lattice)?;
    let tf = stft(signal, window, lattice)?;
    let (n, m) = tf.shape();
    let spectrum = fft::dft2(tf.coeffs());
    let mu_hat = kernel_dft(kernel, n, m)?;
    let total: Complex64 = mu_hat
        .iter()
        .zip(spectrum.iter())
        .map(|(k, v)| k * v.norm_sqr())
        .sum();
    Ok(total / (n * m) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate {
    /// Final estimate of the operator norm.
    pub value: f64,
    /// Estimate after each iteration; nondecreasing up to roundoff.
    pub history: Vec<f64>,
}

/// Power iteration on `B^* B` from a seeded complex Gaussian start.
pub fn operator_norm_estimate(
    spec: &BlurSpec,
    iterations: usize,
    seed: u64,
) -> Result<NormEstimate> {
    spec.lattice.require_circular("operator norm estimation")?;
    let len = spec.lattice.len();
    let (analysis, synthesis) = spec.resolve_windows(&spec.lattice)?;
    let forward = |x: &Signal| -> Result<Signal> {
        let out = blur_circular(x, &analysis, &synthesis, &spec.kernel, &spec.lattice)?;
        Ok(Signal::from_parts(out, x.sample_rate(), true))
    };
    let flipped = spec.kernel.flipped();
    let adjoint = |y: &Signal| -> Result<Signal> {
        let out = blur_circular(y, &synthesis, &analysis, &flipped, &spec.lattice)?;
        Ok(Signal::from_parts(out, y.sample_rate(), true))
    };

    let mut attempt = 0u64;
    let mut x = loop {
        let candidate = random_complex(len, 1, seed.wrapping_add(attempt));
        if candidate.norm() > 0.0 {
            break candidate;
        }
        attempt += 1;
    };
    x = x.scaled(Complex64::new(1.0 / x.norm(), 0.0));

    let mut history = Vec::with_capacity(iterations.max(1));
    for _ in 0..iterations.max(1) {
        let y = forward(&x)?;
        history.push(y.norm());
        let z = adjoint(&y)?;
        let zn = z.norm();
        if zn == 0.0 {
            break;
        }
        x = z.scaled(Complex64::new(1.0 / zn, 0.0));
    }
    let value = *history.last().expect("at least one iteration");
    Ok(NormEstimate { value, history })
}

/// Time-axis kernel whose DFT over `frames` vanishes on the bins
/// `center - half_width ..= center + half_width`, scaled to peak spectral
/// modulus at most 1.
pub fn band_nulling_kernel(frames: usize, center: usize, half_width: usize) -> Result<Kernel> {
    let zeros = 2 * half_width + 1;
    if frames < 2 * zeros + 2 {
        return invalid("grid too small for the requested null band");
    }
    // Coefficients of prod_k (1 - r_k x), r_k = exp(2 pi i k / frames).
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for offset in 0..zeros {
        let k = (center + frames + offset - half_width) % frames;
        let r = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / frames as f64);
        let mut next = vec![Complex64::default(); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        poly = next;
    }
    let scale = 2f64.powi(zeros as i32);
    let mut taps: Vec<f64> = poly.iter().map(|c| c.re / scale).collect();
    // Even tap count: append a zero so the anchor sits at the center.
    if taps.len().is_multiple_of(2) {
        taps.push(0.0);
    }
    let n = taps.len();
    Kernel::new(Array2::from_shape_vec((n, 1), taps).expect("column shape"))
}

/// Window with DFT supported on `|p| <= half_width`, built as a short sum of
/// positive-weight cosines.
pub fn band_limited_window(len: usize, half_width: usize) -> Result<Window> {
    let weight = |p: usize| {
        (PI * p as f64 / (2.0 * (half_width + 1) as f64))
            .cos()
            .powi(2)
    };
    let values: Vec<f64> = (0..len)
        .map(|t| {
            let mut v = weight(0);
            for p in 1..=half_width {
                v += 2.0 * weight(p) * (2.0 * PI * (p * t) as f64 / len as f64).cos();
            }
            v
        })
        .collect();
    Window::from_real(&values)
}

/// Largest `||B x|| / ||x||` over `trials` seeded inputs.
pub fn max_gain(spec: &BlurSpec, trials: usize, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..trials as u64 {
        let x = random_complex(spec.lattice.len(), 1, seed.wrapping_add(i));
        let y = blur(&x, spec)?;
        worst = worst.max(y.norm() / x.norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct ZeroOperatorDemo {
    pub window: Window,
    pub kernel: Kernel,
    /// Max of `||B x|| / ||x||` over 20 seeded inputs.
    pub residual: f64,
}

/// Window/kernel pair whose blurring operator vanishes: the window's DFT is
/// supported on a band of time-frequency bins where the kernel's time-axis DFT
/// is zero, so `k * V_w x` is identically zero. Needs the full lattice
/// (`hop == 1`, `M == W == L`).
pub fn zero_operator_demo(lattice: &Lattice) -> Result<ZeroOperatorDemo> {
    let (window, kernel) = zero_operator_pair(lattice)?;
    let spec =
        BlurSpec::new(window.clone(), kernel.clone(), *lattice).with_synthesis(Synthesis::Tight);
    let residual = max_gain(&spec, 20, 0x5eed)?;
    Ok(ZeroOperatorDemo {
        window,
        kernel,
        residual,
    })
}

pub fn zero_operator_pair(lattice: &Lattice) -> Result<(Window, Kernel)> {
    lattice.require_circular("the zero-operator construction")?;
    let len = lattice.len();
    if lattice.hop() != 1 || lattice.channels() != len || lattice.window_len() != len {
        return invalid("the zero-operator construction needs hop 1 and M = W = L");
    }
    if len < 16 {
        return invalid("lattice too small to separate window and kernel supports");
    }
    let half_width = (len / 64).max(1);
    let window = band_limited_window(len, half_width)?;
    let kernel = band_nulling_kernel(len, 0, half_width)?;
    Ok((window, kernel))
}

/// `||out||^2 / ||input||^2`.
pub fn energy_ratio(input: &Signal, output: &Signal) -> f64 {
    output.energy() / input.energy()
}
