//! Spectrograms, HTK mel filterbanks, log-mel features, 0-1 normalization and
//! grid blurring of spectrograms.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gabor::{make_window, stft, Lattice, TfMatrix, WindowKind};
use crate::kernels::{convolve_grid, AxisBoundary, Kernel};
use crate::signal::{pad_to_length, Signal};

/// Power floor for the dB conversion.
pub const DEFAULT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Power,
    Db,
    /// Affinely mapped onto [0, 1].
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelMeta {
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub normalize_rows: bool,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramMeta {
    pub scale: Scale,
    pub sample_rate: u32,
    #[serde(default)]
    pub lattice: Option<Lattice>,
    #[serde(default)]
    pub mel: Option<MelMeta>,
    /// Power floor used for the dB conversion, if any.
    #[serde(default)]
    pub floor: Option<f64>,
}

/// Real grid, frames along axis 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Array2<f64>,
    meta: SpectrogramMeta,
}

impl Spectrogram {
    pub fn new(values: Array2<f64>, meta: SpectrogramMeta) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("spectrogram values must be finite");
        }
        if meta.scale == Scale::Power && values.iter().any(|&v| v < 0.0) {
            return invalid("power spectrogram values must be nonnegative");
        }
        Ok(Self { values, meta })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn meta(&self) -> &SpectrogramMeta {
        &self.meta
    }

    pub fn scale(&self) -> Scale {
        self.meta.scale
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    fn with_values(&self, values: Array2<f64>, scale: Scale) -> Self {
        Self {
            values,
            meta: SpectrogramMeta {
                scale,
                ..self.meta.clone()
            },
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }

    /// Relative Frobenius distance `||self - other|| / ||other||`.
    pub fn relative_distance(&self, other: &Spectrogram) -> f64 {
        let num: f64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = other.values.iter().map(|b| b * b).sum();
        (num / den).sqrt()
    }
}

/// `|V[n, m]|^2` over all `M` channels.
pub fn spectrogram(tf: &TfMatrix) -> Spectrogram {
    Spectrogram {
        values: tf.coeffs().mapv(|z| z.norm_sqr()),
        meta: SpectrogramMeta {
            scale: Scale::Power,
            sample_rate: tf.sample_rate(),
            lattice: Some(*tf.lattice()),
            mel: None,
            floor: None,
        },
    }
}

/// Channels `0..=M/2`, the non-redundant half for real input.
pub fn half_spectrum(spec: &Spectrogram) -> Spectrogram {
    let bins = spec.shape().1 / 2 + 1;
    let values = spec.values.slice(ndarray::s![.., ..bins]).to_owned();
    spec.with_values(values, spec.scale())
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the HTK mel axis, over the
/// `fft_len / 2 + 1` non-negative frequency bins. Rows are stored sparsely as
/// `(first_bin, weights)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    rows: Vec<(usize, Vec<f64>)>,
    sample_rate: u32,
    fft_len: usize,
    fmin: f64,
    fmax: f64,
    normalize_rows: bool,
}

impl MelFilterbank {
    pub fn new(
        sample_rate: u32,
        fft_len: usize,
        n_mels: usize,
        fmin: f64,
        fmax: f64,
        normalize_rows: bool,
    ) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if fmin.is_nan() || fmin < 0.0 || fmin >= fmax || fmax > nyquist || fmax.is_nan() {
            return invalid(format!(
                "mel band [{fmin}, {fmax}] must satisfy 0 <= fmin < fmax <= {nyquist}"
            ));
        }
        if n_mels == 0 {
            return invalid("n_mels must be at least 1");
        }
        if fft_len < 2 {
            return invalid("fft length must be at least 2");
        }
        let bins = fft_len / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| match i {
                0 => fmin,
                i if i == n_mels + 1 => fmax,
                i => mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64),
            })
            .collect();
        let bin_hz = sample_rate as f64 / fft_len as f64;
        let rows = (0..n_mels)
            .map(|i| {
                let (left, center, right) = (edges[i], edges[i + 1], edges[i + 2]);
                let weights: Vec<f64> = (0..bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let up = (f - left) / (center - left);
                        let down = (right - f) / (right - center);
                        up.min(down).max(0.0)
                    })
                    .collect();
                let first = weights.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = weights
                    .iter()
                    .rposition(|&w| w > 0.0)
                    .map_or(first, |l| l + 1);
                let mut row = weights[first..last].to_vec();
                if normalize_rows {
                    let total: f64 = row.iter().sum();
                    if total > 0.0 {
                        row.iter_mut().for_each(|w| *w /= total);
                    }
                }
                (first, row)
            })
            .collect();
        Ok(Self {
            rows,
            sample_rate,
            fft_len,
            fmin,
            fmax,
            normalize_rows,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.rows.len()
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn fmin(&self) -> f64 {
        self.fmin
    }

    pub fn fmax(&self) -> f64 {
        self.fmax
    }

    /// Sparse row `mel`: first bin and weights.
    pub fn row(&self, mel: usize) -> (usize, &[f64]) {
        let (first, w) = &self.rows[mel];
        (*first, w)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_mels(), self.n_bins()));
        for (i, (first, w)) in self.rows.iter().enumerate() {
            for (k, v) in w.iter().enumerate() {
                out[[i, first + k]] = *v;
            }
        }
        out
    }

    fn meta(&self) -> MelMeta {
        MelMeta {
            n_mels: self.n_mels(),
            fmin: self.fmin,
            fmax: self.fmax,
            normalize_rows: self.normalize_rows,
            formula: "htk".into(),
        }
    }
}

type FilterbankKey = (u32, usize, usize, u64, u64, bool);

/// Shared filterbank for a configuration, built once.
pub fn mel_filterbank(
    sample_rate: u32,
    fft_len: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
    normalize_rows: bool,
) -> Result<Arc<MelFilterbank>> {
    static CACHE: OnceLock<Mutex<HashMap<FilterbankKey, Arc<MelFilterbank>>>> = OnceLock::new();
    let key = (
        sample_rate,
        fft_len,
        n_mels,
        fmin.to_bits(),
        fmax.to_bits(),
        normalize_rows,
    );
    let cache = CACHE.get_or_init(Default::default);
    if let Some(fb) = cache.lock().expect("filterbank cache poisoned").get(&key) {
        return Ok(Arc::clone(fb));
    }
    let fb = Arc::new(MelFilterbank::new(
        sample_rate,
        fft_len,
        n_mels,
        fmin,
        fmax,
        normalize_rows,
    )?);
    cache
        .lock()
        .expect("filterbank cache poisoned")
        .entry(key)
        .or_insert_with(|| Arc::clone(&fb));
    Ok(fb)
}

/// `10 log10(max(fb . power, floor))` per frame. Accepts either the full
/// `M`-channel spectrogram or its half view.
pub fn log_mel(spec: &Spectrogram, fb: &MelFilterbank, floor: f64) -> Result<Spectrogram> {
    if spec.scale() != Scale::Power {
        return invalid("log-mel needs a power-scale spectrogram");
    }
    if floor.is_nan() || floor <= 0.0 {
        return invalid("dB floor must be positive");
    }
    let (frames, cols) = spec.shape();
    if cols != fb.n_bins() && cols != fb.fft_len {
        return invalid(format!(
            "spectrogram has {cols} channels, filterbank expects {} (or {})",
            fb.n_bins(),
            fb.fft_len
        ));
    }
    let mut out = Array2::zeros((frames, fb.n_mels()));
    for n in 0..frames {
        let power = spec.values.row(n);
        for (i, (first, w)) in fb.rows.iter().enumerate() {
            let e: f64 = w
                .iter()
                .enumerate()
                .map(|(k, v)| v * power[first + k])
                .sum();
            out[[n, i]] = 10.0 * e.max(floor).log10();
        }
    }
    Ok(Spectrogram {
        values: out,
        meta: SpectrogramMeta {
            scale: Scale::Db,
            sample_rate: spec.meta.sample_rate,
            lattice: spec.meta.lattice,
            mel: Some(fb.meta()),
            floor: Some(floor),
        },
    })
}

/// `10 log10(max(power, floor))` cell by cell.
pub fn power_to_db(spec: &Spectrogram, floor: f64) -> Result<Spectrogram> {
    if spec.scale() != Scale::Power {
        return invalid("dB conversion needs a power-scale spectrogram");
    }
    if floor.is_nan() || floor <= 0.0 {
        return invalid("dB floor must be positive");
    }
    let mut out = spec.with_values(spec.values.mapv(|p| 10.0 * p.max(floor).log10()), Scale::Db);
    out.meta.floor = Some(floor);
    Ok(out)
}

/// Affine map onto [0, 1]. A constant grid maps to all zeros.
pub fn normalize_01(spec: &Spectrogram) -> Spectrogram {
    let lo = spec.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = spec
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let values = if span > 0.0 {
        spec.values.mapv(|v| ((v - lo) / span).clamp(0.0, 1.0))
    } else {
        Array2::zeros(spec.values.dim())
    };
    spec.with_values(values, Scale::Unit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecBlurMode {
    Circular,
    /// Clamp to the nearest edge cell on both axes.
    #[default]
    Edge,
}

/// 2D convolution of the real grid.
pub fn spec_blur(spec: &Spectrogram, kernel: &Kernel, mode: SpecBlurMode) -> Spectrogram {
    let boundary = match mode {
        SpecBlurMode::Circular => AxisBoundary::Circular,
        SpecBlurMode::Edge => AxisBoundary::Edge,
    };
    let values = convolve_grid(&spec.values, kernel, boundary, boundary);
    spec.with_values(values, spec.scale())
}

/// Framing and mel parameters for the log-mel feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    /// Clips are zero-padded to this many samples.
    pub clip_len: usize,
    pub window: WindowKind,
    pub window_len: usize,
    pub hop: usize,
    pub channels: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// Defaults to Nyquist.
    pub fmax: Option<f64>,
    pub floor: f64,
    pub normalize_rows: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            clip_len: 16_000,
            window: WindowKind::Hann,
            window_len: 1024,
            hop: 256,
            channels: 1024,
            n_mels: 256,
            fmin: 0.0,
            fmax: None,
            floor: DEFAULT_FLOOR,
            normalize_rows: false,
        }
    }
}

impl FeatureConfig {
    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::zeropad(self.clip_len, self.hop, self.channels, self.window_len)
    }

    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn filterbank(&self) -> Result<Arc<MelFilterbank>> {
        mel_filterbank(
            self.sample_rate,
            self.channels,
            self.n_mels,
            self.fmin,
            self.fmax(),
            self.normalize_rows,
        )
    }

    /// Pads or rejects a clip so it fits the feature lattice.
    pub fn prepare(&self, signal: &Signal) -> Result<Signal> {
        if signal.sample_rate() != self.sample_rate {
            return invalid(format!(
                "sample rate {} does not match feature rate {}",
                signal.sample_rate(),
                self.sample_rate
            ));
        }
        pad_to_length(signal, self.clip_len)
    }

    /// Log-mel of an already prepared clip.
    pub fn log_mel(&self, signal: &Signal) -> Result<Spectrogram> {
        let window = make_window(&self.window, self.window_len)?;
        let tf = stft(signal, &window, &self.lattice()?)?;
        log_mel(
            &half_spectrum(&spectrogram(&tf)),
            &*self.filterbank()?,
            self.floor,
        )
    }

    pub fn extract(&self, signal: &Signal) -> Result<Spectrogram> {
        self.log_mel(&self.prepare(signal)?)
    }
}
