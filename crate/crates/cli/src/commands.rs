use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use tfblur::augment::run_pipeline_epoch;
use tfblur::export::{atomic_write, read_features, write_csv, write_features, write_pgm};
use tfblur::features::{
    half_spectrum, normalize_01, power_to_db, spec_blur, spectrogram, SpecBlurMode,
};
use tfblur::gabor::{make_window, stft, Lattice, WindowKind};
use tfblur::kernels::{delta_kernel, gaussian_kernel};
use tfblur::operators::{blur, BlurSpec, Synthesis};
use tfblur::signal::{gen_signal, read_wav, write_wav, Signal, SignalKind};
use tfblur::{verify, AugmentConfig, FeatureConfig, Kernel, Spectrogram};

use crate::{
    AugmentArgs, BlurArgs, BoundaryName, Cli, Command, Format, GenArgs, GenKind, KernelArgs,
    KernelName, LatticeArgs, SpecKind, SpecblurArgs, SpectrogramArgs, SynthesisName, VerifyArgs,
    WindowName,
};

struct Ctx {
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: PathBuf,
}

impl Ctx {
    fn load_config(&self, fallback: AugmentConfig) -> Result<AugmentConfig> {
        let mut cfg = match &self.config {
            Some(path) => AugmentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => fallback,
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output directory {}", self.out.display()))?;
        Ok(&self.out)
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let ctx = Ctx {
        seed: cli.seed,
        config: cli.config,
        out: cli.out,
    };
    match cli.command {
        Command::Spectrogram(args) => cmd_spectrogram(&ctx, args),
        Command::Blur(args) => cmd_blur(&ctx, args),
        Command::Specblur(args) => cmd_specblur(&ctx, args),
        Command::Augment(args) => cmd_augment(&ctx, args),
        Command::Gen(args) => cmd_gen(&ctx, args),
        Command::Verify(args) => cmd_verify(&ctx, args),
    }
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| anyhow!("input path {} has no file name", path.display()))
}

fn load_wav(path: &Path) -> Result<Signal> {
    read_wav(path).with_context(|| format!("reading {}", path.display()))
}

fn window_kind(args: &LatticeArgs) -> WindowKind {
    match args.window {
        WindowName::Hann => WindowKind::Hann,
        WindowName::Gaussian => WindowKind::Gaussian {
            width: args.gaussian_width,
        },
    }
}

/// Feature settings for a single clip: the config's lattice adapted to the
/// clip's rate and length, then the command-line overrides.
fn clip_features(
    base: &FeatureConfig,
    signal: &Signal,
    lattice: Option<&LatticeArgs>,
) -> FeatureConfig {
    let mut feat = base.clone();
    feat.sample_rate = signal.sample_rate();
    feat.clip_len = feat.clip_len.max(signal.len());
    if let Some(l) = lattice {
        feat.window = window_kind(l);
        feat.window_len = l.window_len.unwrap_or(feat.window_len);
        feat.hop = l.hop.unwrap_or(feat.hop);
        feat.channels = l.channels.unwrap_or(feat.channels);
    }
    feat
}

fn write_outputs(spec: &Spectrogram, base: &Path, formats: &[Format]) -> Result<()> {
    for format in formats {
        let ext = match format {
            Format::Raw => "f32",
            Format::Csv => "csv",
            Format::Pgm => "pgm",
        };
        let mut name = base.as_os_str().to_owned();
        name.push(".");
        name.push(ext);
        let path = PathBuf::from(name);
        match format {
            Format::Raw => write_features(spec, &path),
            Format::Csv => write_csv(spec, &path),
            Format::Pgm => write_pgm(spec, &path),
        }
        .with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_spectrogram(ctx: &Ctx, args: SpectrogramArgs) -> Result<ExitCode> {
    let signal = load_wav(&args.input)?;
    let cfg = ctx.load_config(AugmentConfig::default())?;
    let mut feat = clip_features(&cfg.features, &signal, Some(&args.lattice));
    feat.n_mels = args.mels.unwrap_or(feat.n_mels);
    let prepared = feat.prepare(&signal)?;
    let mut spec = match args.kind {
        SpecKind::Logmel => feat.log_mel(&prepared)?,
        SpecKind::Power => {
            let window = make_window(&feat.window, feat.window_len)?;
            half_spectrum(&spectrogram(&stft(&prepared, &window, &feat.lattice()?)?))
        }
    };
    if args.normalize {
        spec = normalize_01(&spec);
    }
    let name = match args.kind {
        SpecKind::Logmel => "logmel",
        SpecKind::Power => "power",
    };
    let base = ctx
        .out_dir()?
        .join(format!("{}.{name}", stem(&args.input)?));
    write_outputs(&spec, &base, &args.format)?;
    Ok(ExitCode::SUCCESS)
}

fn build_kernel(args: &KernelArgs) -> Result<Kernel> {
    Ok(match args.kernel {
        KernelName::Delta => delta_kernel(),
        KernelName::Gaussian => gaussian_kernel(args.sigma_t, args.sigma_f, args.truncation)?,
    })
}

fn cmd_blur(ctx: &Ctx, args: BlurArgs) -> Result<ExitCode> {
    let signal = load_wav(&args.input)?;
    let cfg = ctx.load_config(AugmentConfig::default())?;
    let feat = clip_features(&cfg.features, &signal, Some(&args.lattice));
    let lattice = Lattice::zeropad(signal.len(), feat.hop, feat.channels, feat.window_len)?;
    let window = make_window(&feat.window, feat.window_len)?;
    let spec = BlurSpec::new(window.clone(), build_kernel(&args.kernel)?, lattice)
        .with_synthesis(match args.synthesis {
            SynthesisName::Dual => Synthesis::Dual,
            SynthesisName::Tight => Synthesis::Tight,
        })
        .with_renormalize(args.renormalize);
    let out = blur(&signal, &spec)?;

    let name = stem(&args.input)?;
    let dir = ctx.out_dir()?;
    let path = dir.join(format!("{name}.blur.wav"));
    write_wav(&out, &path).with_context(|| format!("writing {}", path.display()))?;
    if args.side_by_side {
        for (tag, x) in [("before", &signal), ("after", &out)] {
            let db = power_to_db(
                &half_spectrum(&spectrogram(&stft(x, &window, &lattice)?)),
                feat.floor,
            )?;
            write_pgm(&db, &dir.join(format!("{name}.{tag}.pgm")))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_specblur(ctx: &Ctx, args: SpecblurArgs) -> Result<ExitCode> {
    let is_wav = args
        .input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    let spec = if is_wav {
        let signal = load_wav(&args.input)?;
        let cfg = ctx.load_config(AugmentConfig::default())?;
        clip_features(&cfg.features, &signal, None).extract(&signal)?
    } else {
        read_features(&args.input).with_context(|| format!("reading {}", args.input.display()))?
    };
    let mode = match args.boundary {
        BoundaryName::Edge => SpecBlurMode::Edge,
        BoundaryName::Circular => SpecBlurMode::Circular,
    };
    let blurred = spec_blur(&spec, &build_kernel(&args.kernel)?, mode);
    let base = ctx
        .out_dir()?
        .join(format!("{}.specblur", stem(&args.input)?));
    write_outputs(&blurred, &base, &args.format)?;
    Ok(ExitCode::SUCCESS)
}

/// Item ids must stay inside the output directory.
fn check_item_id(id: &str) -> Result<()> {
    let path = Path::new(id);
    if path
        .components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
    {
        bail!("item {id:?} must be a relative path without '..'");
    }
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let items: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect();
    let mut seen = HashSet::new();
    for id in &items {
        check_item_id(id)?;
        if !seen.insert(id) {
            bail!("duplicate manifest item {id:?}");
        }
    }
    Ok(items)
}

fn cmd_augment(ctx: &Ctx, args: AugmentArgs) -> Result<ExitCode> {
    let cfg = ctx.load_config(AugmentConfig::full())?;
    cfg.validate()?;
    let items = read_manifest(&args.manifest)?;
    let root = args
        .manifest
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let out = ctx.out_dir()?.to_path_buf();

    let process = |id: &String| -> Result<()> {
        let signal = load_wav(&root.join(id))?;
        let features = run_pipeline_epoch(&signal, &cfg, id, args.epoch)?;
        let target = out.join(id).with_extension("f32");
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        write_features(&features, &target)?;
        Ok(())
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .context("starting worker pool")?;
    let results: Vec<Result<()>> = pool.install(|| items.par_iter().map(process).collect());

    let failures: Vec<String> = items
        .iter()
        .zip(&results)
        .filter_map(|(id, r)| r.as_ref().err().map(|e| format!("{id}: {e:#}")))
        .collect();
    let log_path = out.join("augment-errors.log");
    if failures.is_empty() {
        if log_path.exists() {
            fs::remove_file(&log_path)?;
        }
        log::info!("augmented {} items", items.len());
        return Ok(ExitCode::SUCCESS);
    }
    for line in &failures {
        eprintln!("failed: {line}");
    }
    atomic_write(&log_path, |f| {
        use std::io::Write;
        for line in &failures {
            writeln!(f, "{line}")?;
        }
        Ok(())
    })?;
    eprintln!("{} of {} items failed", failures.len(), items.len());
    Ok(ExitCode::from(1))
}

fn cmd_gen(ctx: &Ctx, args: GenArgs) -> Result<ExitCode> {
    let center = args.at.unwrap_or(args.len / 2);
    let (kind, default_name) = match args.kind {
        GenKind::Sine => (SignalKind::Sinusoid { freq: args.freq }, "sine"),
        GenKind::Chirp => (
            SignalKind::Chirp {
                f0: args.f0,
                f1: args.f1,
            },
            "chirp",
        ),
        GenKind::Noise => (SignalKind::WhiteNoise, "noise"),
        GenKind::Impulse => (SignalKind::Impulse { at: center }, "impulse"),
        GenKind::Pulse => (
            SignalKind::GaussianPulse {
                center: center as f64,
                width: args.width,
                freq: args.freq,
            },
            "pulse",
        ),
    };
    let signal = gen_signal(&kind, args.len, args.sample_rate, ctx.seed.unwrap_or(0))?;
    let name = args.name.unwrap_or_else(|| format!("{default_name}.wav"));
    check_item_id(&name)?;
    let path = ctx.out_dir()?.join(name);
    write_wav(&signal, &path).with_context(|| format!("writing {}", path.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(ctx: &Ctx, args: VerifyArgs) -> Result<ExitCode> {
    if args.list {
        for name in verify::suite_names() {
            println!("{name}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let seed = ctx.seed.unwrap_or(0);
    let Some(mut results) = verify::run(args.suite.as_deref(), seed)? else {
        bail!(
            "unknown suite {:?}; known: {}",
            args.suite.unwrap_or_default(),
            verify::suite_names().join(", ")
        );
    };
    if let Some(tol) = args.tol {
        results = results.into_iter().map(|r| r.with_tolerance(tol)).collect();
    }
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.pass())
        .map(|r| r.name)
        .collect();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failing suites: {}", failed.join(", "));
        Ok(ExitCode::from(1))
    }
}
