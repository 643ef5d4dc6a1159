//! On-disk formats: raw little-endian f32 grids with JSON sidecars, CSV and
//! 8-bit PGM previews. Every writer goes through [`atomic_write`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_01, Spectrogram, SpectrogramMeta};
use crate::gabor::{BoundaryMode, Lattice, TfMatrix};

/// Writes through `<path>.tmp` and renames over `path`, so readers never see
/// a partial file.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let tmp = temp_path(path);
    let result = (|| {
        let mut sink = BufWriter::new(File::create(&tmp)?);
        write(&mut sink)?;
        sink.flush()?;
        sink.get_ref().sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => fs::rename(&tmp, path).map_err(Error::from),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Sidecar path: `x.f32` -> `x.f32.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".json");
    path.with_file_name(name)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    atomic_write(path, |f| {
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfSidecar {
    #[serde(rename = "L")]
    pub len: usize,
    pub a: usize,
    #[serde(rename = "M")]
    pub channels: usize,
    #[serde(rename = "W")]
    pub window_len: usize,
    pub mode: BoundaryMode,
    pub sample_rate: u32,
}

/// Raw interleaved `(re, im)` f32, frames first, plus sidecar.
pub fn write_tf(tf: &TfMatrix, path: &Path) -> Result<()> {
    let lat = tf.lattice();
    atomic_write(path, |f| {
        for z in tf.coeffs().iter() {
            f.write_all(&(z.re as f32).to_le_bytes())?;
            f.write_all(&(z.im as f32).to_le_bytes())?;
        }
        Ok(())
    })?;
    write_json(
        &sidecar_path(path),
        &TfSidecar {
            len: lat.len(),
            a: lat.hop(),
            channels: lat.channels(),
            window_len: lat.window_len(),
            mode: lat.mode(),
            sample_rate: tf.sample_rate(),
        },
    )
}

fn read_f32s(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "{}: length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_tf(path: &Path) -> Result<TfMatrix> {
    let side: TfSidecar = read_json(&sidecar_path(path))?;
    let lattice = Lattice::new(side.len, side.a, side.channels, side.window_len, side.mode)?;
    let raw = read_f32s(path)?;
    let (n, m) = lattice.shape();
    if raw.len() != 2 * n * m {
        return Err(Error::Format(format!(
            "expected {} floats for a {n}x{m} grid, found {}",
            2 * n * m,
            raw.len()
        )));
    }
    let values: Vec<Complex64> = raw
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0] as f64, p[1] as f64))
        .collect();
    let coeffs = Array2::from_shape_vec((n, m), values).expect("length checked");
    TfMatrix::new(coeffs, lattice, side.sample_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub rows: usize,
    pub cols: usize,
    #[serde(flatten)]
    pub meta: SpectrogramMeta,
}

/// Raw row-major f32 plus sidecar.
pub fn write_features(spec: &Spectrogram, path: &Path) -> Result<()> {
    atomic_write(path, |f| {
        for v in spec.values().iter() {
            f.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    })?;
    let (rows, cols) = spec.shape();
    write_json(
        &sidecar_path(path),
        &FeatureSidecar {
            rows,
            cols,
            meta: spec.meta().clone(),
        },
    )
}

pub fn read_features(path: &Path) -> Result<Spectrogram> {
    let side: FeatureSidecar = read_json(&sidecar_path(path))?;
    let raw = read_f32s(path)?;
    if raw.len() != side.rows * side.cols {
        return Err(Error::Format(format!(
            "expected {} floats, found {}",
            side.rows * side.cols,
            raw.len()
        )));
    }
    let values = Array2::from_shape_vec(
        (side.rows, side.cols),
        raw.into_iter().map(f64::from).collect(),
    )
    .expect("length checked");
    Spectrogram::new(values, side.meta)
}

pub fn write_csv(spec: &Spectrogram, path: &Path) -> Result<()> {
    atomic_write(path, |f| {
        for row in spec.values().rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        Ok(())
    })
}

/// 8-bit binary PGM of the 0-1 normalized grid. Frequency runs upward, time
/// to the right.
pub fn write_pgm(spec: &Spectrogram, path: &Path) -> Result<()> {
    let norm = normalize_01(spec);
    let (frames, bins) = norm.shape();
    atomic_write(path, |f| {
        write!(f, "P5\n{frames} {bins}\n255\n")?;
        for m in (0..bins).rev() {
            let row: Vec<u8> = (0..frames)
                .map(|n| (norm.values()[[n, m]] * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect();
            f.write_all(&row)?;
        }
        Ok(())
    })
}
