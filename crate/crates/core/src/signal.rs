//! Waveform container, WAV I/O, padding and deterministic test signals.

use std::f64::consts::PI;
use std::io::{Read, Seek};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::export::atomic_write;

/// Sample rate assumed for speech-command style clips.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// A finite sampled waveform.
///
/// Samples are stored as complex values so the same type flows through the
/// analysis/synthesis operators; `is_complex` records whether the imaginary
/// parts carry information.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<Complex64>,
    sample_rate: u32,
    is_complex: bool,
}

impl Signal {
    pub fn from_real(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::from_complex(
            samples
                .into_iter()
                .map(|x| Complex64::new(x, 0.0))
                .collect(),
            sample_rate,
        )
        .map(|mut s| {
            s.is_complex = false;
            s
        })
    }

    pub fn from_complex(samples: Vec<Complex64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return invalid("sample rate must be positive");
        }
        if samples
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return invalid("signal contains non-finite samples");
        }
        Ok(Self {
            samples,
            sample_rate,
            is_complex: true,
        })
    }

    /// Builds a signal without re-checking finiteness. Used by operators whose
    /// outputs are finite by construction.
    pub(crate) fn from_parts(samples: Vec<Complex64>, sample_rate: u32, is_complex: bool) -> Self {
        Self {
            samples,
            sample_rate,
            is_complex,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::from_parts(vec![Complex64::default(); len], sample_rate, false)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn is_complex(&self) -> bool {
        self.is_complex
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.re).collect()
    }

    /// Drops imaginary parts.
    pub fn into_real(self) -> Self {
        let samples = self
            .samples
            .into_iter()
            .map(|z| Complex64::new(z.re, 0.0))
            .collect();
        Self::from_parts(samples, self.sample_rate, false)
    }

    /// Squared l2 norm.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// `<self, other>` with conjugation on the second argument.
    pub fn inner(&self, other: &Signal) -> Complex64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| x * y.conj())
            .sum()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let samples = self.samples.iter().map(|z| z * factor).collect();
        Self::from_parts(
            samples,
            self.sample_rate,
            self.is_complex || factor.im != 0.0,
        )
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: Complex64, other: &Signal, beta: Complex64) -> Result<Self> {
        if self.len() != other.len() {
            return invalid("signals differ in length");
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        let is_complex = self.is_complex || other.is_complex || alpha.im != 0.0 || beta.im != 0.0;
        Ok(Self::from_parts(samples, self.sample_rate, is_complex))
    }

    /// Max absolute sample difference.
    pub fn max_abs_diff(&self, other: &Signal) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// `||self - other|| / ||other||`, or the absolute distance when `other`
    /// is zero.
    pub fn relative_error(&self, reference: &Signal) -> f64 {
        let diff: f64 = self
            .samples
            .iter()
            .zip(&reference.samples)
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

pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let reader = hound::WavReader::open(path.as_ref()).map_err(map_hound)?;
    decode_wav(reader)
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<Signal> {
    let reader = hound::WavReader::new(reader).map_err(map_hound)?;
    decode_wav(reader)
}

fn decode_wav<R: Read>(mut reader: hound::WavReader<R>) -> Result<Signal> {
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    if channels > 1 {
        log::warn!("{channels}-channel input, keeping channel 0");
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (format, bits) => {
            return Err(Error::Unsupported(format!(
                "{bits}-bit {format:?} WAV encoding"
            )))
        }
    };
    Signal::from_real(samples, spec.sample_rate)
        .map_err(|e| Error::Format(format!("decoded samples rejected: {e}")))
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Io(e),
        hound::Error::Unsupported => Error::Unsupported("WAV encoding".into()),
        other => Error::Format(other.to_string()),
    }
}

/// Writes a mono 32-bit float WAV. Complex signals are rejected.
pub fn write_wav(signal: &Signal, path: impl AsRef<Path>) -> Result<()> {
    check_writable(signal)?;
    atomic_write(path.as_ref(), |file| encode_wav(signal, file))
}

fn check_writable(signal: &Signal) -> Result<()> {
    if signal.is_complex() {
        return Err(Error::Unsupported(
            "cannot write a complex signal as WAV".into(),
        ));
    }
    if signal.samples().iter().any(|z| !z.re.is_finite()) {
        return invalid("signal contains non-finite samples");
    }
    Ok(())
}

pub fn encode_wav<W: std::io::Write + Seek>(signal: &Signal, sink: W) -> Result<()> {
    check_writable(signal)?;
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::new(sink, spec).map_err(map_hound)?;
    for z in signal.samples() {
        writer.write_sample(z.re as f32).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)
}

/// Zero-pads symmetrically to `target` samples, putting `floor(extra / 2)`
/// zeros in front.
pub fn pad_to_length(signal: &Signal, target: usize) -> Result<Signal> {
    let len = signal.len();
    if target < len {
        return invalid(format!(
            "target length {target} is shorter than signal ({len})"
        ));
    }
    let front = (target - len) / 2;
    let mut samples = vec![Complex64::default(); target];
    samples[front..front + len].copy_from_slice(signal.samples());
    Ok(Signal::from_parts(
        samples,
        signal.sample_rate(),
        signal.is_complex(),
    ))
}

/// Synthetic test signal families.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    /// `sin(2 pi f t / sr)`.
    Sinusoid {
        freq: f64,
    },
    /// Linear chirp sweeping `f0 -> f1` over the signal length.
    Chirp {
        f0: f64,
        f1: f64,
    },
    /// Unit-variance Gaussian noise.
    WhiteNoise,
    Impulse {
        at: usize,
    },
    /// Gaussian envelope `exp(-pi ((t - center) / width)^2)` on a cosine carrier.
    GaussianPulse {
        center: f64,
        width: f64,
        freq: f64,
    },
}

pub fn gen_signal(kind: &SignalKind, len: usize, sample_rate: u32, seed: u64) -> Result<Signal> {
    if sample_rate == 0 {
        return invalid("sample rate must be positive");
    }
    let sr = sample_rate as f64;
    let nyquist = sr / 2.0;
    let check_freq = |f: f64| -> Result<()> {
        if !f.is_finite() || f < 0.0 || f >= nyquist {
            invalid(format!("frequency {f} Hz outside [0, {nyquist})"))
        } else {
            Ok(())
        }
    };
    let samples: Vec<f64> = match *kind {
        SignalKind::Sinusoid { freq } => {
            check_freq(freq)?;
            (0..len)
                .map(|t| (2.0 * PI * freq * t as f64 / sr).sin())
                .collect()
        }
        SignalKind::Chirp { f0, f1 } => {
            check_freq(f0)?;
            check_freq(f1)?;
            let duration = len.max(1) as f64 / sr;
            (0..len)
                .map(|t| {
                    let s = t as f64 / sr;
                    (2.0 * PI * (f0 * s + 0.5 * (f1 - f0) * s * s / duration)).sin()
                })
                .collect()
        }
        SignalKind::WhiteNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
        SignalKind::Impulse { at } => {
            if at >= len {
                return invalid(format!(
                    "impulse position {at} outside signal of length {len}"
                ));
            }
            let mut v = vec![0.0; len];
            v[at] = 1.0;
            v
        }
        SignalKind::GaussianPulse {
            center,
            width,
            freq,
        } => {
            check_freq(freq)?;
            if width.is_nan() || width <= 0.0 {
                return invalid("pulse width must be positive");
            }
            (0..len)
                .map(|t| {
                    let u = (t as f64 - center) / width;
                    (-PI * u * u).exp() * (2.0 * PI * freq * (t as f64 - center) / sr).cos()
                })
                .collect()
        }
    };
    Signal::from_real(samples, sample_rate)
}

/// Seeded complex Gaussian vector with unit-variance real and imaginary parts.
pub fn random_complex(len: usize, sample_rate: u32, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| {
            Complex64::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            )
        })
        .collect();
    Signal::from_parts(samples, sample_rate, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn pcm16_bytes(values: &[i16], sample_rate: u32, channels: u16) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels,
            sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            for &v in values {
                w.write_sample(v).unwrap();
            }
            w.finalize().unwrap();
        }
        cursor.into_inner()
    }

    #[test]
    fn pcm16_max_amplitude_scaling() {
        let bytes = pcm16_bytes(&[32767], 16000, 1);
        let s = read_wav_from(Cursor::new(bytes)).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.samples()[0].re - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn one_second_file_has_header_length() {
        let bytes = pcm16_bytes(&vec![0; 16000], 16000, 1);
        let s = read_wav_from(Cursor::new(bytes)).unwrap();
        assert_eq!(s.len(), 16000);
        assert_eq!(s.sample_rate(), 16000);
    }

    #[test]
    fn multichannel_keeps_first_channel() {
        let bytes = pcm16_bytes(&[100, -5, 200, -6, 300, -7], 8000, 2);
        let s = read_wav_from(Cursor::new(bytes)).unwrap();
        let expect: Vec<f64> = [100.0, 200.0, 300.0].iter().map(|v| v / 32768.0).collect();
        assert_eq!(s.real_part(), expect);
    }

    #[test]
    fn malformed_header_is_format_error() {
        let err = read_wav_from(Cursor::new(b"RIFX0000WAVEjunk".to_vec())).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err:?}");
    }

    #[test]
    fn unsupported_encoding_rejected() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            w.write_sample(5i32).unwrap();
            w.finalize().unwrap();
        }
        let err = read_wav_from(Cursor::new(cursor.into_inner())).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "{err:?}");
    }

    #[test]
    fn float_round_trip_within_float32_precision() {
        let noise = gen_signal(&SignalKind::WhiteNoise, 4096, 16000, 3).unwrap();
        let peak = noise
            .samples()
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max);
        let scaled = noise.scaled(Complex64::new(1.0 / peak, 0.0));
        let mut cursor = Cursor::new(Vec::new());
        encode_wav(&scaled, &mut cursor).unwrap();
        let back = read_wav_from(Cursor::new(cursor.into_inner())).unwrap();
        assert!(back.max_abs_diff(&scaled) <= 2f64.powi(-23));

        // float32 input survives a second round trip bit-exactly.
        let mut cursor = Cursor::new(Vec::new());
        encode_wav(&back, &mut cursor).unwrap();
        let again = read_wav_from(Cursor::new(cursor.into_inner())).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn nan_sample_rejected_on_write() {
        let s = Signal::from_parts(vec![Complex64::new(f64::NAN, 0.0)], 16000, false);
        let mut cursor = Cursor::new(Vec::new());
        assert!(matches!(
            encode_wav(&s, &mut cursor),
            Err(Error::InvalidArgument(_))
        ));
        assert!(Signal::from_real(vec![f64::NAN], 16000).is_err());
    }

    #[test]
    fn empty_signal_writes_zero_frame_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        write_wav(&Signal::zeros(0, 16000), &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_wav(&Signal::zeros(4, 16000), "/nonexistent-dir/x/y.wav").unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err:?}");
    }

    #[test]
    fn padding_is_front_biased_and_energy_preserving() {
        let s = gen_signal(&SignalKind::WhiteNoise, 15000, 16000, 1).unwrap();
        let p = pad_to_length(&s, 16000).unwrap();
        assert_eq!(p.len(), 16000);
        assert!(p.samples()[..500]
            .iter()
            .all(|z| *z == Complex64::default()));
        assert!(p.samples()[15500..]
            .iter()
            .all(|z| *z == Complex64::default()));
        assert_eq!(&p.samples()[500..15500], s.samples());
        assert_eq!(p.energy(), s.energy());

        let odd = pad_to_length(&Signal::from_real(vec![1.0], 8).unwrap(), 4).unwrap();
        assert_eq!(odd.real_part(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn padding_to_same_length_is_identity() {
        let s = gen_signal(&SignalKind::WhiteNoise, 100, 16000, 1).unwrap();
        assert_eq!(pad_to_length(&s, 100).unwrap(), s);
        assert!(matches!(
            pad_to_length(&s, 99),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sinusoid_matches_definition() {
        let s = gen_signal(&SignalKind::Sinusoid { freq: 440.0 }, 16000, 16000, 0).unwrap();
        for (t, z) in s.samples().iter().enumerate() {
            assert_eq!(z.re, (2.0 * PI * 440.0 * t as f64 / 16000.0).sin());
        }
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let a = gen_signal(&SignalKind::WhiteNoise, 512, 16000, 9).unwrap();
        let b = gen_signal(&SignalKind::WhiteNoise, 512, 16000, 9).unwrap();
        let c = gen_signal(&SignalKind::WhiteNoise, 512, 16000, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn impulse_has_one_nonzero_sample() {
        let s = gen_signal(&SignalKind::Impulse { at: 17 }, 64, 16000, 0).unwrap();
        let nz: Vec<usize> = s
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nz, vec![17]);
    }

    #[test]
    fn frequency_at_nyquist_rejected() {
        let err = gen_signal(&SignalKind::Sinusoid { freq: 8000.0 }, 16, 16000, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert!(gen_signal(
            &SignalKind::Chirp {
                f0: 10.0,
                f1: 9000.0
            },
            16,
            16000,
            0
        )
        .is_err());
    }

    #[test]
    fn gaussian_pulse_peaks_at_one() {
        let s = gen_signal(
            &SignalKind::GaussianPulse {
                center: 50.0,
                width: 10.0,
                freq: 1000.0,
            },
            101,
            16000,
            0,
        )
        .unwrap();
        assert_eq!(s.samples()[50].re, 1.0);
        assert!(s.samples().iter().all(|z| z.re.abs() <= 1.0));
    }
}
