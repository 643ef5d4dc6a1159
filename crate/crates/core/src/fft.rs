//! FFT plan cache and small 2D DFT helpers.
//!
//! Plans are shared across threads through a process-wide cache keyed by
//! length and direction. A plan is inserted fully built, so callers never
//! observe a partial plan.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

type PlanMap = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

fn cache() -> &'static Mutex<PlanMap> {
    static CACHE: OnceLock<Mutex<PlanMap>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Returns a cached plan for an unnormalized transform of `len` points.
pub fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let key = (len, direction == FftDirection::Forward);
    let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
    map.entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(len, direction))
        .clone()
}

pub fn forward_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    plan(buf.len(), FftDirection::Forward).process(buf);
}

/// Unnormalized inverse transform (no `1/len` factor).
pub fn inverse_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    plan(buf.len(), FftDirection::Inverse).process(buf);
}

/// Unnormalized forward 2D DFT over both axes.
pub fn dft2(grid: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = grid.clone();
    let (rows, cols) = out.dim();
    let mut row = vec![Complex64::default(); cols];
    for r in 0..rows {
        for c in 0..cols {
            row[c] = out[[r, c]];
        }
        forward_in_place(&mut row);
        for c in 0..cols {
            out[[r, c]] = row[c];
        }
    }
    let mut col = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = out[[r, c]];
        }
        forward_in_place(&mut col);
        for r in 0..rows {
            out[[r, c]] = col[r];
        }
    }
    out
}
