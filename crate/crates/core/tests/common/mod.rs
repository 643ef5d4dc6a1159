//! Direct-sum reference implementations. Deliberately naive: no FFTs, no
//! shared code with the library beyond the container types.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64 as C;

pub fn cis(x: f64) -> C {
    C::from_polar(1.0, x)
}

/// `V[n][m] = sum_t x(t) conj(w(t - n a)) exp(-2 pi i m t / M)`, with the
/// window wrapped mod `L` (circular) or cut at the signal end (zero padded).
pub fn stft(x: &[C], w: &[C], a: usize, m: usize, circular: bool) -> Vec<Vec<C>> {
    let len = x.len();
    let frames = if circular { len / a } else { len.div_ceil(a) };
    (0..frames)
        .map(|n| {
            (0..m)
                .map(|k| {
                    let mut acc = C::default();
                    for (j, wj) in w.iter().enumerate() {
                        let t = n * a + j;
                        if !circular && t >= len {
                            continue;
                        }
                        let t = t % len;
                        acc += x[t] * wj.conj() * cis(-2.0 * PI * ((k * t) % m) as f64 / m as f64);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn synth(v: &[Vec<C>], g: &[C], len: usize, a: usize, circular: bool) -> Vec<C> {
    let m = v[0].len();
    let mut out = vec![C::default(); len];
    for (n, row) in v.iter().enumerate() {
        for (j, gj) in g.iter().enumerate() {
            let t = n * a + j;
            if !circular && t >= len {
                continue;
            }
            let t = t % len;
            for (k, c) in row.iter().enumerate() {
                out[t] += c * gj * cis(2.0 * PI * ((k * t) % m) as f64 / m as f64);
            }
        }
    }
    out
}

/// Canonical dual by explicit frame-operator diagonal `M sum_n |w(t - n a)|^2`.
pub fn dual(w: &[C], a: usize, m: usize) -> Vec<C> {
    (0..w.len())
        .map(|i| {
            let d: f64 = (0..w.len())
                .filter(|j| j % a == i % a)
                .map(|j| w[j].norm_sqr())
                .sum();
            w[i] / (m as f64 * d)
        })
        .collect()
}

/// `out[n][m] = sum_{i,j} k[i][j] in[n - (i - ci)][m - (j - cj)]`, time axis
/// circular or zero outside, frequency axis circular.
pub fn conv(v: &[Vec<C>], k: &[Vec<f64>], circular_time: bool) -> Vec<Vec<C>> {
    let (rows, cols) = (v.len() as isize, v[0].len() as isize);
    let (ci, cj) = ((k.len() / 2) as isize, (k[0].len() / 2) as isize);
    let mut out = vec![vec![C::default(); cols as usize]; rows as usize];
    for n in 0..rows {
        for m in 0..cols {
            for (i, krow) in k.iter().enumerate() {
                let src = n - (i as isize - ci);
                if !circular_time && !(0..rows).contains(&src) {
                    continue;
                }
                let src = src.rem_euclid(rows) as usize;
                for (j, kv) in krow.iter().enumerate() {
                    let sc = (m - (j as isize - cj)).rem_euclid(cols) as usize;
                    out[n as usize][m as usize] += v[src][sc] * *kv;
                }
            }
        }
    }
    out
}

pub fn blur_circular(x: &[C], w: &[C], g: &[C], k: &[Vec<f64>], a: usize, m: usize) -> Vec<C> {
    let v = stft(x, w, a, m, true);
    synth(&conv(&v, k, true), g, x.len(), a, true)
}

/// Blur of `x` extended by zeros to all of the integers: every frame that
/// touches `[0, L)` or lies within the kernel's reach of one, output cut back
/// to `[0, L)`.
pub fn blur_on_integers(x: &[C], w: &[C], g: &[C], k: &[Vec<f64>], a: usize, m: usize) -> Vec<C> {
    let len = x.len() as isize;
    let (aw, wl) = (a as isize, w.len() as isize);
    let reach = (k.len() / 2) as isize;
    let n_lo = -(wl / aw + 1) - reach;
    let n_hi = len / aw + 1 + reach;
    let frames: Vec<isize> = (n_lo..=n_hi).collect();
    let coeff = |n: isize, q: usize| -> C {
        let mut acc = C::default();
        for (j, wj) in w.iter().enumerate() {
            let t = n * aw + j as isize;
            if (0..len).contains(&t) {
                let phase = ((q as isize * t).rem_euclid(m as isize)) as f64;
                acc += x[t as usize] * wj.conj() * cis(-2.0 * PI * phase / m as f64);
            }
        }
        acc
    };
    let v: Vec<Vec<C>> = frames
        .iter()
        .map(|&n| (0..m).map(|q| coeff(n, q)).collect())
        .collect();
    let u = conv(&v, k, false);
    let mut out = vec![C::default(); x.len()];
    for (idx, &n) in frames.iter().enumerate() {
        for (j, gj) in g.iter().enumerate() {
            let t = n * aw + j as isize;
            if !(0..len).contains(&t) {
                continue;
            }
            for (q, c) in u[idx].iter().enumerate() {
                let phase = ((q as isize * t).rem_euclid(m as isize)) as f64;
                out[t as usize] += c * gj * cis(2.0 * PI * phase / m as f64);
            }
        }
    }
    out
}

/// `mu_hat[p][q] = sum_{i,j} k[i][j] exp(-2 pi i (p di / N + q dj / M))`.
pub fn kernel_dft(k: &[Vec<f64>], frames: usize, channels: usize) -> Vec<Vec<C>> {
    let (ci, cj) = ((k.len() / 2) as isize, (k[0].len() / 2) as isize);
    (0..frames)
        .map(|p| {
            (0..channels)
                .map(|q| {
                    let mut acc = C::default();
                    for (i, row) in k.iter().enumerate() {
                        for (j, kv) in row.iter().enumerate() {
                            let di = i as isize - ci;
                            let dj = j as isize - cj;
                            let ph = p as f64 * di as f64 / frames as f64
                                + q as f64 * dj as f64 / channels as f64;
                            acc += *kv * cis(-2.0 * PI * ph);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn inner(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn grid_inner(a: &[Vec<C>], b: &[Vec<C>]) -> C {
    a.iter().zip(b).map(|(r, s)| inner(r, s)).sum()
}

pub fn norm(a: &[C]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[C], reference: &[C]) -> f64 {
    let diff: Vec<C> = a.iter().zip(reference).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(reference)
}

pub fn taps(k: &tfblur::Kernel) -> Vec<Vec<f64>> {
    k.taps().rows().into_iter().map(|r| r.to_vec()).collect()
}
