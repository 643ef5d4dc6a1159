//! Seeded augmentation pipeline: waveform noise and STFT blurring, then
//! log-mel extraction, then SpecAugment-style masking and spectrogram blur.
//!
//! Every random draw comes from a stream keyed by
//! `(master_seed, item_id, step_index, epoch)`, so batch order and worker
//! count cannot change any item's output.

use std::path::Path;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::features::{normalize_01, spec_blur, FeatureConfig, SpecBlurMode, Spectrogram};
use crate::gabor::make_window;
use crate::kernels::KernelSpec;
use crate::operators::{blur, BlurSpec, Synthesis};
use crate::signal::Signal;

pub const CONFIG_VERSION: u32 = 1;

/// Address of one random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub item_id: String,
    pub step_index: usize,
    pub epoch: Option<u64>,
}

impl RngStream {
    pub fn with_epoch(mut self, epoch: u64) -> Self {
        self.epoch = Some(epoch);
        self
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"tfblur-rng-v1");
        h.update(self.master_seed.to_le_bytes());
        h.update((self.item_id.len() as u64).to_le_bytes());
        h.update(self.item_id.as_bytes());
        h.update((self.step_index as u64).to_le_bytes());
        match self.epoch {
            Some(e) => {
                h.update([1]);
                h.update(e.to_le_bytes());
            }
            None => h.update([0]),
        }
        h.finalize().into()
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.seed_bytes())
    }
}

pub fn derive_rng(master_seed: u64, item_id: &str, step_index: usize) -> RngStream {
    RngStream {
        master_seed,
        item_id: item_id.to_owned(),
        step_index,
        epoch: None,
    }
}

/// Adds Gaussian noise scaled to exactly `snr_db`. `+inf` is the identity.
pub fn add_white_noise<R: Rng + ?Sized>(
    signal: &Signal,
    snr_db: f64,
    rng: &mut R,
) -> Result<Signal> {
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if !snr_db.is_finite() {
        return invalid(format!("SNR must be finite or +inf, got {snr_db}"));
    }
    let power = signal.energy();
    if power == 0.0 {
        return invalid("cannot set an SNR relative to an all-zero signal");
    }
    let complex = signal.is_complex();
    let noise: Vec<Complex64> = (0..signal.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = if complex {
                StandardNormal.sample(rng)
            } else {
                0.0
            };
            Complex64::new(re, im)
        })
        .collect();
    let noise_power: f64 = noise.iter().map(|z| z.norm_sqr()).sum();
    if noise_power == 0.0 {
        return invalid("signal too short to carry noise");
    }
    let gain = (power / noise_power / 10f64.powf(snr_db / 10.0)).sqrt();
    let samples = signal
        .samples()
        .iter()
        .zip(&noise)
        .map(|(x, n)| x + n * gain)
        .collect();
    Ok(Signal::from_parts(samples, signal.sample_rate(), complex))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskFill {
    /// Mean of the cells the mask covers, taken from the unmasked grid.
    #[default]
    Mean,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecAugmentParams {
    pub n_time_masks: usize,
    pub max_time_width: usize,
    pub n_freq_masks: usize,
    pub max_freq_width: usize,
    #[serde(default)]
    pub fill: MaskFill,
}

impl Default for SpecAugmentParams {
    fn default() -> Self {
        Self {
            n_time_masks: 2,
            max_time_width: 8,
            n_freq_masks: 2,
            max_freq_width: 24,
            fill: MaskFill::Mean,
        }
    }
}

/// Masked grid and the cells that were overwritten.
pub fn spec_augment_with_mask<R: Rng + ?Sized>(
    spec: &Spectrogram,
    params: &SpecAugmentParams,
    rng: &mut R,
) -> Result<(Spectrogram, Array2<bool>)> {
    let (frames, bins) = spec.shape();
    if params.max_time_width > frames || params.max_freq_width > bins {
        return invalid(format!(
            "mask widths ({}, {}) exceed grid {frames}x{bins}",
            params.max_time_width, params.max_freq_width
        ));
    }
    let original = spec.values();
    let mut values = original.clone();
    let mut mask = Array2::from_elem((frames, bins), false);
    let mut apply = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        let region = s![rows, cols];
        let fill = match params.fill {
            MaskFill::Mean => original.slice(region).mean().unwrap_or(0.0),
            MaskFill::Zero => 0.0,
        };
        values.slice_mut(region).fill(fill);
        mask.slice_mut(region).fill(true);
    };
    for _ in 0..params.n_time_masks {
        let width = rng.random_range(0..=params.max_time_width);
        let start = rng.random_range(0..=frames - width);
        apply(start..start + width, 0..bins);
    }
    for _ in 0..params.n_freq_masks {
        let width = rng.random_range(0..=params.max_freq_width);
        let start = rng.random_range(0..=bins - width);
        apply(0..frames, start..start + width);
    }
    Ok((Spectrogram::new(values, spec.meta().clone())?, mask))
}

pub fn spec_augment<R: Rng + ?Sized>(
    spec: &Spectrogram,
    params: &SpecAugmentParams,
    rng: &mut R,
) -> Result<Spectrogram> {
    spec_augment_with_mask(spec, params, rng).map(|(s, _)| s)
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisChoice {
    #[default]
    Dual,
    Tight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    WhiteNoise {
        snr_db: f64,
    },
    /// Blurring on the feature lattice (plain STFT, not mel).
    StftBlur {
        kernel: KernelSpec,
        #[serde(default = "default_true")]
        renormalize_energy: bool,
        #[serde(default)]
        synthesis: SynthesisChoice,
    },
    SpecAugment(SpecAugmentParams),
    SpecBlur {
        kernel: KernelSpec,
        #[serde(default)]
        mode: SpecBlurMode,
    },
}

impl Step {
    pub fn is_waveform(&self) -> bool {
        matches!(self, Step::WhiteNoise { .. } | Step::StftBlur { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub version: u32,
    pub master_seed: u64,
    /// Key random streams by epoch as well as item.
    #[serde(default)]
    pub per_epoch: bool,
    /// Apply 0-1 normalization to the final feature.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub steps: Vec<Step>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            master_seed: 0,
            per_epoch: false,
            normalize: false,
            features: FeatureConfig::default(),
            steps: Vec::new(),
        }
    }
}

impl AugmentConfig {
    /// All four augmentations with the documented default strengths.
    pub fn full() -> Self {
        Self {
            steps: vec![
                Step::WhiteNoise { snr_db: 20.0 },
                Step::StftBlur {
                    kernel: KernelSpec::Gaussian {
                        sigma_t: 2.0,
                        sigma_f: 4.0,
                        truncation: 4.0,
                    },
                    renormalize_energy: true,
                    synthesis: SynthesisChoice::Dual,
                },
                Step::SpecAugment(SpecAugmentParams::default()),
                Step::SpecBlur {
                    kernel: KernelSpec::Gaussian {
                        sigma_t: 1.0,
                        sigma_f: 2.0,
                        truncation: 4.0,
                    },
                    mode: SpecBlurMode::Edge,
                },
            ],
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let config_err = |msg: String| Err(Error::Config(msg));
        if self.version != CONFIG_VERSION {
            return config_err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if let Some(i) = self.steps.iter().position(|s| !s.is_waveform()) {
            if let Some(j) = self.steps[i..].iter().position(Step::is_waveform) {
                return config_err(format!(
                    "step {} acts on the waveform but follows feature step {i}",
                    i + j
                ));
            }
        }
        let lattice = self.features.lattice()?;
        self.features.filterbank()?;
        let (frames, mels) = (lattice.frames(), self.features.n_mels);
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                Step::WhiteNoise { snr_db } if snr_db.is_nan() || *snr_db == f64::NEG_INFINITY => {
                    return config_err(format!("step {i}: invalid SNR {snr_db}"));
                }
                Step::StftBlur { kernel, .. } | Step::SpecBlur { kernel, .. } => {
                    kernel.build()?;
                }
                Step::SpecAugment(p) if p.max_time_width > frames || p.max_freq_width > mels => {
                    return config_err(format!(
                        "step {i}: mask widths exceed the {frames}x{mels} feature grid"
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// [`run_pipeline_epoch`] outside any epoch.
pub fn run_pipeline(signal: &Signal, config: &AugmentConfig, item_id: &str) -> Result<Spectrogram> {
    run_steps(signal, config, item_id, None)
}

/// The epoch only enters the random streams when `config.per_epoch` is set.
pub fn run_pipeline_epoch(
    signal: &Signal,
    config: &AugmentConfig,
    item_id: &str,
    epoch: u64,
) -> Result<Spectrogram> {
    run_steps(signal, config, item_id, config.per_epoch.then_some(epoch))
}

fn run_steps(
    signal: &Signal,
    config: &AugmentConfig,
    item_id: &str,
    epoch: Option<u64>,
) -> Result<Spectrogram> {
    config.validate()?;
    let feat = &config.features;
    let stream = |i: usize| RngStream {
        epoch,
        ..derive_rng(config.master_seed, item_id, i)
    };

    let mut wave = feat.prepare(signal)?;
    let mut steps = config.steps.iter().enumerate().peekable();
    while let Some((i, step)) = steps.next_if(|(_, s)| s.is_waveform()) {
        wave = match step {
            Step::WhiteNoise { snr_db } => add_white_noise(&wave, *snr_db, &mut stream(i).rng())?,
            Step::StftBlur {
                kernel,
                renormalize_energy,
                synthesis,
            } => {
                let window = make_window(&feat.window, feat.window_len)?;
                let spec = BlurSpec::new(window, kernel.build()?, feat.lattice()?)
                    .with_renormalize(*renormalize_energy)
                    .with_synthesis(match synthesis {
                        SynthesisChoice::Dual => Synthesis::Dual,
                        SynthesisChoice::Tight => Synthesis::Tight,
                    });
                blur(&wave, &spec)?
            }
            _ => unreachable!("feature step in waveform stage"),
        };
    }

    let mut spec = feat.log_mel(&wave)?;
    for (i, step) in steps {
        spec = match step {
            Step::SpecAugment(params) => spec_augment(&spec, params, &mut stream(i).rng())?,
            Step::SpecBlur { kernel, mode } => spec_blur(&spec, &kernel.build()?, *mode),
            _ => unreachable!("validated step order"),
        };
    }
    Ok(if config.normalize {
        normalize_01(&spec)
    } else {
        spec
    })
}
