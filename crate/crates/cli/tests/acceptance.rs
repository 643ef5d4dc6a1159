//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always print; exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tfblur::gabor::{dual_window, make_window, stft, synthesize, Lattice, WindowKind};
use tfblur::kernels::delta_kernel;
use tfblur::operators::{blur, BlurSpec};
use tfblur::signal::{gen_signal, random_complex, write_wav, SignalKind};
use tfblur::verify::{self, SuiteResult, PHASE_CONTRAST_MARGIN};
use tfblur::FeatureConfig;

struct Line {
    name: &'static str,
    detail: String,
    pass: bool,
}

fn line(name: &'static str, pass: bool, detail: impl Into<String>) -> Line {
    Line {
        name,
        detail: detail.into(),
        pass,
    }
}

fn suite(name: &'static str, results: &[SuiteResult], which: &str) -> Line {
    let r = results
        .iter()
        .find(|r| r.name == which)
        .unwrap_or_else(|| panic!("suite result {which} missing"));
    line(name, r.pass(), r.to_string())
}

fn reconstruction() -> Vec<Line> {
    let lattice = Lattice::circular(16384, 256, 1024, 1024).unwrap();
    let w = make_window(&WindowKind::Hann, 1024).unwrap();
    let x = gen_signal(&SignalKind::WhiteNoise, 16384, 16000, 1).unwrap();
    let start = Instant::now();
    let gamma = dual_window(&w, &lattice).unwrap();
    let y = synthesize(&stft(&x, &w, &lattice).unwrap(), &gamma, &lattice).unwrap();
    let elapsed = start.elapsed();
    let err = y.relative_error(&x);
    vec![
        line(
            "reconstruction error",
            err <= 1e-10,
            format!("relative error {err:.3e} <= 1e-10"),
        ),
        line(
            "reconstruction runtime",
            elapsed < Duration::from_secs(1),
            format!("{:.1} ms < 1000 ms", elapsed.as_secs_f64() * 1e3),
        ),
    ]
}

fn delta_identity() -> Vec<Line> {
    let cfg = FeatureConfig::default();
    let spec = BlurSpec::new(
        make_window(&cfg.window, cfg.window_len).unwrap(),
        delta_kernel(),
        cfg.lattice().unwrap(),
    );
    let worst = (0..20)
        .map(|seed| {
            let x = gen_signal(&SignalKind::WhiteNoise, cfg.clip_len, 16000, seed).unwrap();
            blur(&x, &spec).unwrap().relative_error(&x)
        })
        .fold(0.0, f64::max);
    vec![line(
        "delta-kernel identity",
        worst <= 1e-10,
        format!("max relative error over 20 signals {worst:.3e} <= 1e-10"),
    )]
}

/// `<V_w1 x1, V_w2 x2> / (<x1, x2> conj(<w1, w2>))` by direct sums.
fn brute_moyal_constant(x1: &[C], x2: &[C], w1: &[C], w2: &[C], a: usize, m: usize) -> C {
    let len = x1.len();
    let coeff = |x: &[C], w: &[C], n: usize, q: usize| -> C {
        w.iter()
            .enumerate()
            .map(|(j, wj)| {
                let t = (n * a + j) % len;
                x[t] * wj.conj() * C::from_polar(1.0, -2.0 * PI * ((q * t) % m) as f64 / m as f64)
            })
            .sum()
    };
    let mut lhs = C::default();
    for n in 0..len / a {
        for q in 0..m {
            lhs += coeff(x1, w1, n, q) * coeff(x2, w2, n, q).conj();
        }
    }
    let dot = |u: &[C], v: &[C]| -> C { u.iter().zip(v).map(|(p, r)| p * r.conj()).sum() };
    lhs / (dot(x1, x2) * dot(w1, w2).conj())
}

fn moyal() -> Vec<Line> {
    let results = verify::moyal(0).unwrap();
    let lattice = Lattice::circular(64, 4, 16, 16).unwrap();
    let (w1, w2) = verify::moyal_window_pair(&lattice, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    let x1 = random_complex(64, 1, 5);
    let x2 = random_complex(64, 1, 6);
    let c = brute_moyal_constant(x1.samples(), x2.samples(), w1.values(), w2.values(), 4, 16);
    let expected = lattice.moyal_constant();
    let gap = (c - C::new(expected, 0.0)).norm();
    vec![
        suite("moyal residual (50 quadruples)", &results, "moyal"),
        line(
            "moyal constant c = M/a",
            gap < 1e-10 && expected == 4.0,
            format!("direct-sum c = {:.12} vs M/a = {expected}", c.re),
        ),
    ]
}

fn norm_bound() -> Vec<Line> {
    let r = verify::norm_bound(0).unwrap();
    vec![
        suite("norm bound", &r, "norm-bound"),
        suite("norm scaling", &r, "norm-scaling"),
    ]
}

fn positivity() -> Vec<Line> {
    let r = verify::positivity(0).unwrap();
    vec![
        suite("positivity kernel spectrum", &r, "positivity-spectrum"),
        suite("positivity (100 inputs)", &r, "positivity"),
        suite("positivity signal vs fourier", &r, "positivity-fourier"),
    ]
}

fn zero_operator() -> Vec<Line> {
    let r = verify::zero_op(0).unwrap();
    vec![
        suite("zero operator", &r, "zero-op"),
        suite("zero operator delta sanity", &r, "zero-op-delta"),
        suite("zero operator shifted band", &r, "zero-op-shifted"),
    ]
}

fn projection() -> Vec<Line> {
    let r = verify::projection(0).unwrap();
    vec![suite("projection idempotence", &r, "projection")]
}

fn reductions() -> Vec<Line> {
    let r = verify::reduction(0).unwrap();
    vec![
        suite("reduction constant field = blur", &r, "reduction-constant"),
        suite("reduction mask field = localize", &r, "reduction-mask"),
        suite(
            "reduction all-ones mask = identity",
            &r,
            "reduction-identity",
        ),
    ]
}

fn phase_contrast() -> Vec<Line> {
    let worst = (0..5)
        .map(|s| verify::phase_contrast_gap(s).unwrap())
        .fold(f64::INFINITY, f64::min);
    vec![line(
        "phase contrast",
        worst > PHASE_CONTRAST_MARGIN,
        format!("min retention gap over 5 seeds {worst:.4} > {PHASE_CONTRAST_MARGIN}"),
    )]
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tfblur"))
}

fn feature_shape(dir: &Path) -> Vec<Line> {
    let clip = gen_signal(&SignalKind::WhiteNoise, 16000, 16000, 3).unwrap();
    let lib_shape = FeatureConfig::default().extract(&clip).unwrap().shape();
    let wav = dir.join("clip.wav");
    write_wav(&clip, &wav).unwrap();
    let status = bin()
        .args(["spectrogram", "--out"])
        .arg(dir)
        .arg(&wav)
        .status()
        .unwrap();
    let side = fs::read_to_string(dir.join("clip.logmel.f32.json")).unwrap_or_default();
    let bytes = fs::metadata(dir.join("clip.logmel.f32")).map_or(0, |m| m.len());
    let cli_ok = status.success()
        && side.contains("\"rows\": 63")
        && side.contains("\"cols\": 256")
        && bytes == 63 * 256 * 4;
    vec![line(
        "feature shape 63x256",
        lib_shape == (63, 256) && cli_ok,
        format!("library {lib_shape:?}, cli file {bytes} bytes"),
    )]
}

fn augment_outputs(dir: &Path) -> Vec<Vec<u8>> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "f32" || e == "json"))
        .collect();
    names.sort();
    names.iter().map(|p| fs::read(p).unwrap()).collect()
}

fn determinism(dir: &Path) -> Vec<Line> {
    let data = dir.join("data");
    fs::create_dir_all(&data).unwrap();
    let mut manifest = String::new();
    for i in 0..6u64 {
        let name = format!("item{i}.wav");
        let x = gen_signal(&SignalKind::WhiteNoise, 12000 + 500 * i as usize, 16000, i).unwrap();
        write_wav(&x, data.join(&name)).unwrap();
        manifest.push_str(&name);
        manifest.push('\n');
    }
    fs::write(data.join("manifest.txt"), manifest).unwrap();
    let run = |jobs: &str, out: &str| {
        let out = dir.join(out);
        let ok = bin()
            .args(["--seed", "1234", "--out"])
            .arg(&out)
            .args(["augment", "--jobs", jobs])
            .arg(data.join("manifest.txt"))
            .status()
            .unwrap()
            .success();
        (ok, augment_outputs(&out))
    };
    let (ok1, serial) = run("1", "serial");
    let (ok2, parallel) = run("4", "parallel");
    let (ok3, again) = run("3", "serial");
    let same = serial.len() == 12 && serial == parallel && serial == again;
    vec![line(
        "augment determinism",
        ok1 && ok2 && ok3 && same,
        format!("{} files, jobs 1/4/3 byte-identical: {same}", serial.len()),
    )]
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let feature_dir = dir.path().join("features");
    let augment_dir = dir.path().join("augment");
    fs::create_dir_all(&feature_dir).unwrap();
    fs::create_dir_all(&augment_dir).unwrap();

    let lines: Vec<Line> = [
        reconstruction(),
        delta_identity(),
        moyal(),
        norm_bound(),
        positivity(),
        zero_operator(),
        projection(),
        reductions(),
        phase_contrast(),
        feature_shape(&feature_dir),
        determinism(&augment_dir),
    ]
    .into_iter()
    .flatten()
    .collect();

    for l in &lines {
        println!(
            "{} {}: {}",
            if l.pass { "PASS" } else { "FAIL" },
            l.name,
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("{} criteria, {failed} failed", lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
