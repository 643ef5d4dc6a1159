//! Property suites behind the `verify` command. Each suite runs at a fixed
//! small lattice and reports one residual against its tolerance.

use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gabor::{
    dual_window, gabor_project, make_window, modulate_bins, moyal_check, stft, synthesize,
    tight_window, Lattice, TfMatrix, Window, WindowKind,
};
use crate::kernels::{
    apply_field, compose, constant_field, delta_kernel, gaussian_kernel, kernel_spectrum,
    mask_field, TfConvMode,
};
use crate::operators::{
    band_nulling_kernel, blur, blur_position_dependent, energy_ratio, localize_real, max_gain,
    operator_norm_estimate, weak_action, weak_action_fourier, zero_operator_demo,
    zero_operator_pair, BlurSpec, Synthesis,
};
use crate::signal::{gen_signal, random_complex, Signal, SignalKind};

/// Minimum gap between sinusoid and white-noise energy retention under the
/// phase-contrast setup.
pub const PHASE_CONTRAST_MARGIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// Pass when `value <= tolerance`.
    AtMost,
    /// Pass when `value >= tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
}

impl SuiteResult {
    fn new(name: &'static str, value: f64, tolerance: f64, bound: Bound) -> Self {
        Self {
            name,
            value,
            tolerance,
            bound,
        }
    }

    pub fn pass(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.value <= self.tolerance,
            Bound::AtLeast => self.value >= self.tolerance,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        write!(
            f,
            "{} {:.3e} {op}{:.3e} {}",
            self.name,
            self.value,
            self.tolerance,
            if self.pass() { "pass" } else { "fail" }
        )
    }
}

type SuiteFn = fn(u64) -> Result<Vec<SuiteResult>>;

/// Suite names in run order.
pub const SUITES: &[(&str, SuiteFn)] = &[
    ("reconstruction", reconstruction),
    ("delta-identity", delta_identity),
    ("moyal", moyal),
    ("norm-bound", norm_bound),
    ("positivity", positivity),
    ("zero-op", zero_op),
    ("projection", projection),
    ("reduction", reduction),
    ("covariance", covariance),
    ("phase-contrast", phase_contrast),
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|(n, _)| *n).collect()
}

/// Runs `only` (or every suite) with `seed`.
pub fn run(only: Option<&str>, seed: u64) -> Result<Option<Vec<SuiteResult>>> {
    let mut out = Vec::new();
    let mut matched = false;
    for (name, suite) in SUITES {
        if only.is_some_and(|o| o != *name) {
            continue;
        }
        matched = true;
        out.extend(suite(seed)?);
    }
    Ok(matched.then_some(out))
}

fn hann(len: usize) -> Window {
    make_window(&WindowKind::Hann, len).expect("positive length")
}

fn real_noise(len: usize, seed: u64) -> Signal {
    gen_signal(&SignalKind::WhiteNoise, len, 16_000, seed).expect("valid noise")
}

/// Hann 1024 / hop 256 / 1024 channels on 16384 samples, circular.
pub fn reconstruction(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::circular(16384, 256, 1024, 1024)?;
    let w = hann(1024);
    let x = real_noise(16384, seed);
    let y = synthesize(
        &stft(&x, &w, &lattice)?,
        &dual_window(&w, &lattice)?,
        &lattice,
    )?;
    Ok(vec![SuiteResult::new(
        "reconstruction",
        y.relative_error(&x),
        1e-10,
        Bound::AtMost,
    )])
}

/// Delta-kernel blur on 20 seeded signals, zero-padded feature lattice.
pub fn delta_identity(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::zeropad(4000, 128, 512, 512)?;
    let spec = BlurSpec::new(hann(512), delta_kernel(), lattice);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let x = real_noise(4000, seed.wrapping_add(i));
        worst = worst.max(blur(&x, &spec)?.relative_error(&x));
    }
    Ok(vec![SuiteResult::new(
        "delta-identity",
        worst,
        1e-10,
        Bound::AtMost,
    )])
}

/// Window pair `(w1, w2)` with `sum_n conj(w1) w2 (t - n hop)` constant in
/// `t`: `w2` starts random and is rescaled per residue class mod hop.
pub fn moyal_window_pair<R: Rng>(lattice: &Lattice, rng: &mut R) -> Result<(Window, Window)> {
    let len = lattice.window_len();
    let hop = lattice.hop();
    let mut draw = || -> Vec<Complex64> {
        (0..len)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    };
    let w1 = draw();
    let mut w2 = draw();
    let mut sums = vec![Complex64::default(); hop];
    for i in 0..len {
        sums[i % hop] += w1[i].conj() * w2[i];
    }
    for (i, v) in w2.iter_mut().enumerate() {
        *v /= sums[i % hop];
    }
    Ok((Window::custom(w1)?, Window::custom(w2)?))
}

/// 50 seeded quadruples at L = 64, hop 4, 16 channels.
pub fn moyal(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::circular(64, 4, 16, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let (w1, w2) = moyal_window_pair(&lattice, &mut rng)?;
        let x1 = random_complex(64, 1, seed.wrapping_mul(1000).wrapping_add(2 * i));
        let x2 = random_complex(64, 1, seed.wrapping_mul(1000).wrapping_add(2 * i + 1));
        worst = worst.max(moyal_check(&x1, &x2, &w1, &w2, &lattice)?);
    }
    Ok(vec![SuiteResult::new("moyal", worst, 1e-12, Bound::AtMost)])
}

/// Tight Gaussian window, mass-1 Gaussian kernel: the estimate stays below 1
/// and scales linearly with the kernel.
pub fn norm_bound(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::circular(256, 8, 32, 32)?;
    let window = make_window(&WindowKind::Gaussian { width: 12.0 }, 32)?;
    let kernel = gaussian_kernel(1.5, 1.5, 4.0)?;
    let spec = BlurSpec::new(window, kernel.clone(), lattice).with_synthesis(Synthesis::Tight);
    let base = operator_norm_estimate(&spec, 200, seed)?.value;
    let s = 3.7;
    let scaled = operator_norm_estimate(&spec.with_kernel(kernel.scaled(s)), 200, seed)?.value;
    Ok(vec![
        SuiteResult::new("norm-bound", base, 1.0 + 1e-8, Bound::AtMost),
        SuiteResult::new(
            "norm-scaling",
            (scaled / base - s).abs() / s,
            1e-10,
            Bound::AtMost,
        ),
    ])
}

/// Kernel with nonnegative DFT (a Gaussian composed with itself), tight
/// window, 100 seeded inputs.
pub fn positivity(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::circular(128, 4, 32, 32)?;
    let window = tight_window(&hann(32), &lattice)?;
    let g = gaussian_kernel(1.0, 1.5, 3.0)?;
    let kernel = compose(&g, &g);
    let (n, m) = lattice.shape();
    let spectrum = kernel_spectrum(&kernel, n, m)?;
    let mut sign: f64 = 0.0;
    let mut agree: f64 = 0.0;
    for i in 0..100 {
        let x = random_complex(128, 1, seed.wrapping_add(i));
        let e = x.energy();
        let a = weak_action(&x, &window, &kernel, &lattice)?;
        let b = weak_action_fourier(&x, &window, &kernel, &lattice)?;
        sign = sign.max(-a.re / e).max(a.im.abs() / e);
        agree = agree.max((a - b).norm() / e);
    }
    Ok(vec![
        SuiteResult::new(
            "positivity-spectrum",
            -spectrum.min_re / kernel.l1_norm(),
            1e-12,
            Bound::AtMost,
        ),
        SuiteResult::new("positivity", sign, 1e-10, Bound::AtMost),
        SuiteResult::new("positivity-fourier", agree, 1e-10, Bound::AtMost),
    ])
}

/// Full lattice at L = 256: a band-limited window and a kernel nulling that
/// band give the zero operator; the delta kernel gives gain 1 and a kernel
/// nulling the opposite band gives a visible gain.
pub fn zero_op(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::circular(256, 1, 256, 256)?;
    let demo = zero_operator_demo(&lattice)?;
    let (window, _) = zero_operator_pair(&lattice)?;
    let delta =
        BlurSpec::new(window.clone(), delta_kernel(), lattice).with_synthesis(Synthesis::Tight);
    let delta_gain = max_gain(&delta, 5, seed)?;
    let shifted = delta.with_kernel(band_nulling_kernel(256, 128, 4)?);
    let shifted_gain = max_gain(&shifted, 5, seed)?;
    Ok(vec![
        SuiteResult::new("zero-op", demo.residual, 1e-8, Bound::AtMost),
        SuiteResult::new(
            "zero-op-delta",
            (delta_gain - 1.0).abs(),
            1e-10,
            Bound::AtMost,
        ),
        SuiteResult::new("zero-op-shifted", shifted_gain, 1e-2, Bound::AtLeast),
    ])
}

/// Re-analysis of a synthesized grid is idempotent.
pub fn projection(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::circular(64, 4, 16, 16)?;
    let w = hann(16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = Array2::from_shape_fn(lattice.shape(), |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let tf = TfMatrix::new(coeffs, lattice, 1)?;
    let p = gabor_project(&tf, &w, &lattice)?;
    let pp = gabor_project(&p, &w, &lattice)?;
    Ok(vec![SuiteResult::new(
        "projection",
        pp.relative_error(&p),
        1e-10,
        Bound::AtMost,
    )])
}

/// Constant field == blur, mask field == localization, all-ones mask ==
/// identity.
pub fn reduction(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::circular(128, 4, 32, 32)?;
    let w = hann(32);
    let kernel = gaussian_kernel(1.0, 2.0, 3.0)?;
    let x = random_complex(128, 1, seed);

    let field = constant_field(&kernel, &lattice);
    let by_field = blur_position_dependent(&x, &field, &w, &lattice)?;
    let by_blur = blur(&x, &BlurSpec::new(w.clone(), kernel, lattice))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61736b);
    let mask = Array2::from_shape_fn(lattice.shape(), |_| rng.random_range(0.0..1.0));
    let by_mask_field = blur_position_dependent(&x, &mask_field(&mask, &lattice)?, &w, &lattice)?;
    let by_localize = localize_real(&x, &mask, &w, &lattice)?;

    let ones = Array2::from_elem(lattice.shape(), 1.0);
    let identity = localize_real(&x, &ones, &w, &lattice)?;

    // apply_field on the grid itself must match the plain convolution too.
    let tf = stft(&x, &w, &lattice)?;
    let grid_gap = apply_field(&tf, &field, TfConvMode::Circular)?.relative_error(
        &crate::kernels::convolve_tf(&tf, field_kernel(&field), TfConvMode::Circular),
    );

    Ok(vec![
        SuiteResult::new(
            "reduction-constant",
            by_field.relative_error(&by_blur).max(grid_gap),
            1e-12,
            Bound::AtMost,
        ),
        SuiteResult::new(
            "reduction-mask",
            by_mask_field.relative_error(&by_localize),
            1e-12,
            Bound::AtMost,
        ),
        SuiteResult::new(
            "reduction-identity",
            identity.relative_error(&x),
            1e-10,
            Bound::AtMost,
        ),
    ])
}

fn field_kernel(field: &crate::kernels::KernelField) -> &crate::kernels::Kernel {
    match field {
        crate::kernels::KernelField::Constant { kernel, .. } => kernel,
        _ => unreachable!("constant field"),
    }
}

/// Modulating by a whole number of channels shifts the STFT along frequency
/// and leaves the blurred norm unchanged.
pub fn covariance(seed: u64) -> Result<Vec<SuiteResult>> {
    let lattice = Lattice::circular(128, 4, 32, 32)?;
    let w = hann(32);
    let x = random_complex(128, 1, seed);
    let bins = 5;
    let shifted_input = modulate_bins(&x, bins, 32);
    let v = stft(&x, &w, &lattice)?;
    let vm = stft(&shifted_input, &w, &lattice)?;
    let (n, m) = lattice.shape();
    let expected = Array2::from_shape_fn((n, m), |(i, j)| v.coeffs()[[i, (j + m - bins) % m]]);
    let tf_gap = vm.relative_error(&v.with_coeffs(expected)?);

    let spec = BlurSpec::new(w, gaussian_kernel(1.0, 2.0, 3.0)?, lattice);
    let a = blur(&x, &spec)?.norm();
    let b = blur(&shifted_input, &spec)?.norm();
    Ok(vec![
        SuiteResult::new("covariance", tf_gap, 1e-10, Bound::AtMost),
        SuiteResult::new("covariance-blur", (a - b).abs() / a, 1e-10, Bound::AtMost),
    ])
}

/// Energy kept by one Gaussian blur, on-bin cosine minus white noise. The
/// kernel is long in time and narrow in frequency, so the tone's coherent
/// phase survives the averaging while the noise's does not.
pub fn phase_contrast_gap(seed: u64) -> Result<f64> {
    let (len, channels) = (8192, 512);
    let lattice = Lattice::circular(len, 256, channels, 512)?;
    let spec = BlurSpec::new(hann(512), gaussian_kernel(4.0, 0.5, 4.0)?, lattice);
    let tone = on_bin_cosine(len, 37, channels);
    let noise = real_noise(len, seed);
    let kept_tone = energy_ratio(&tone, &blur(&tone, &spec)?);
    let kept_noise = energy_ratio(&noise, &blur(&noise, &spec)?);
    Ok(kept_tone - kept_noise)
}

/// `cos(2 pi bin t / channels)` at 16 kHz.
pub fn on_bin_cosine(len: usize, bin: usize, channels: usize) -> Signal {
    let samples = (0..len)
        .map(|t| {
            (2.0 * std::f64::consts::PI * ((bin * t) % channels) as f64 / channels as f64).cos()
        })
        .collect();
    Signal::from_real(samples, 16_000).expect("finite samples")
}

pub fn phase_contrast(seed: u64) -> Result<Vec<SuiteResult>> {
    Ok(vec![SuiteResult::new(
        "phase-contrast",
        phase_contrast_gap(seed)?,
        PHASE_CONTRAST_MARGIN,
        Bound::AtLeast,
    )])
}
