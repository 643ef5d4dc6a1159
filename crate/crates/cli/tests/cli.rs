use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tfblur::kernels::gaussian_kernel;
use tfblur::signal::{gen_signal, read_wav, write_wav, SignalKind};

fn tfblur(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfblur"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn write_clip(dir: &Path, name: &str, seed: u64) -> String {
    let path = dir.join(name);
    let x = gen_signal(&SignalKind::WhiteNoise, 16000, 16000, seed).unwrap();
    write_wav(&x, &path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = tfblur(&["spectrogram", "nope.wav"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.wav"));
}

#[test]
fn bad_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        tfblur(&["blur", "--sigma-t", "x", "a.wav"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        tfblur(&["verify", "--suite", "nope"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn pgm_output_is_8_bit_image() {
    let dir = tempfile::tempdir().unwrap();
    let wav = write_clip(dir.path(), "a.wav", 1);
    let out = tfblur(&["spectrogram", "--format", "pgm,csv", &wav], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let pgm = fs::read(dir.path().join("a.logmel.pgm")).unwrap();
    let header = b"P5\n63 256\n255\n";
    assert!(pgm.starts_with(header));
    let pixels = &pgm[header.len()..];
    assert_eq!(pixels.len(), 63 * 256);
    assert_eq!(*pixels.iter().min().unwrap(), 0);
    assert_eq!(*pixels.iter().max().unwrap(), 255);
    let csv = fs::read_to_string(dir.path().join("a.logmel.csv")).unwrap();
    assert_eq!(csv.lines().count(), 63);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 256);
}

#[test]
fn delta_blur_round_trips_through_wav() {
    let dir = tempfile::tempdir().unwrap();
    let wav = write_clip(dir.path(), "d.wav", 2);
    let out = tfblur(&["blur", "--kernel", "delta", &wav], dir.path());
    assert!(out.status.success());
    let x = read_wav(&wav).unwrap();
    let y = read_wav(dir.path().join("d.blur.wav")).unwrap();
    assert!(y.max_abs_diff(&x) <= 1e-9);
}

/// With no time spread the blur multiplies the signal by
/// `K(t) = sum_j k_j cos(2 pi (j - c) t / M)`, so the per-sample energy
/// profile becomes `|x(t)|^2 K(t)^2` rather than staying unchanged.
#[test]
fn frequency_only_blur_matches_pointwise_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let wav = write_clip(dir.path(), "f.wav", 3);
    let args = [
        "blur",
        "--sigma-t",
        "0",
        "--sigma-f",
        "4",
        "--side-by-side",
        wav.as_str(),
    ];
    let out = tfblur(&args, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let first = fs::read(dir.path().join("f.blur.wav")).unwrap();
    assert!(dir.path().join("f.before.pgm").exists() && dir.path().join("f.after.pgm").exists());

    let x = read_wav(&wav).unwrap().real_part();
    let y = read_wav(dir.path().join("f.blur.wav")).unwrap().real_part();
    let taps = gaussian_kernel(0.0, 4.0, 4.0).unwrap();
    let row: Vec<f64> = taps.taps().row(0).to_vec();
    let c = (row.len() / 2) as f64;
    let gain = |t: usize| -> f64 {
        row.iter()
            .enumerate()
            .map(|(j, k)| k * (2.0 * PI * (j as f64 - c) * t as f64 / 1024.0).cos())
            .sum()
    };
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = (0..x.len())
        .map(|t| (y[t] - x[t] * gain(t)).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6 * peak, "{worst}");
    // The profile really does change: the gain dips far below 1 mid-period.
    assert!(gain(512).abs() < 1e-3 && (gain(0) - 1.0).abs() < 1e-12);

    let again = tfblur(&args, dir.path());
    assert!(again.status.success());
    assert_eq!(fs::read(dir.path().join("f.blur.wav")).unwrap(), first);
}

#[test]
fn augment_isolates_bad_items() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(data.join("sub")).unwrap();
    let mut manifest = String::new();
    for i in 0..9 {
        let name = if i % 3 == 0 {
            format!("sub/c{i}.wav")
        } else {
            format!("c{i}.wav")
        };
        write_clip(&data, &name, i);
        manifest += &format!("{name}\n");
    }
    fs::write(data.join("broken.wav"), b"not a wav").unwrap();
    manifest += "broken.wav\n";
    fs::write(data.join("list.txt"), &manifest).unwrap();

    let out_dir = dir.path().join("out");
    let list = data.join("list.txt");
    let out = tfblur(&["augment", list.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.wav"));
    let log = fs::read_to_string(out_dir.join("augment-errors.log")).unwrap();
    assert_eq!(log.lines().count(), 1);

    let mut produced = 0;
    for i in 0..9 {
        let name = if i % 3 == 0 {
            format!("sub/c{i}.f32")
        } else {
            format!("c{i}.f32")
        };
        let side = fs::read_to_string(out_dir.join(format!("{name}.json"))).unwrap();
        assert!(side.contains("\"rows\": 63") && side.contains("\"cols\": 256"));
        assert_eq!(
            fs::metadata(out_dir.join(&name)).unwrap().len(),
            63 * 256 * 4
        );
        produced += 1;
    }
    assert_eq!(produced, 9);

    // Rerunning overwrites identically.
    let before = fs::read(out_dir.join("c1.f32")).unwrap();
    tfblur(&["augment", list.to_str().unwrap()], &out_dir);
    assert_eq!(fs::read(out_dir.join("c1.f32")).unwrap(), before);
}

#[test]
fn augment_rejects_escaping_or_duplicate_items() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("list.txt");
    fs::write(&list, "../x.wav\n").unwrap();
    assert_eq!(
        tfblur(&["augment", list.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );
    fs::write(&list, "a.wav\na.wav\n").unwrap();
    assert_eq!(
        tfblur(&["augment", list.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn augment_config_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "version = 1\nmaster_seed = 3\nbogus = true\n").unwrap();
    let list = dir.path().join("list.txt");
    fs::write(&list, "").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tfblur"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .arg("augment")
        .arg(&list)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn verify_is_seeded_and_tolerance_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["--seed", "7", "verify", "--suite", "moyal"];
        args.extend_from_slice(extra);
        tfblur(&args, dir.path())
    };
    let a = run(&[]);
    let b = run(&[]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8_lossy(&a.stdout);
    assert!(text.starts_with("moyal ") && text.trim_end().ends_with("pass"));

    let strict = run(&["--tol", "0"]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("moyal"));
}

#[test]
fn verify_default_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = tfblur(&["verify"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    for suite in [
        "reconstruction",
        "moyal",
        "norm-bound",
        "positivity",
        "zero-op",
        "covariance",
        "phase-contrast",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(&format!("{suite} "))),
            "{suite} missing"
        );
    }
}

#[test]
fn gen_is_deterministic_and_specblur_runs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tfblur(
        &["--seed", "5", "gen", "noise", "--name", "n1.wav"],
        dir.path()
    )
    .status
    .success());
    assert!(tfblur(
        &["--seed", "5", "gen", "noise", "--name", "n2.wav"],
        dir.path()
    )
    .status
    .success());
    assert_eq!(
        fs::read(dir.path().join("n1.wav")).unwrap(),
        fs::read(dir.path().join("n2.wav")).unwrap()
    );
    assert_eq!(
        tfblur(&["gen", "sine", "--freq", "9000"], dir.path())
            .status
            .code(),
        Some(2)
    );

    let wav = dir.path().join("n1.wav");
    let out = tfblur(&["spectrogram", wav.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    let feat = dir.path().join("n1.logmel.f32");
    let out = tfblur(
        &[
            "specblur",
            "--sigma-t",
            "1",
            "--sigma-f",
            "2",
            feat.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let side = fs::read_to_string(dir.path().join("n1.logmel.specblur.f32.json")).unwrap();
    assert!(side.contains("\"rows\": 63"));
}
