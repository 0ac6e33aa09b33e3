//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::data::{
    load_dataset, read_image, resize_to, synthesize_toy_dataset_with_channels, write_dataset, write_image,
    ArtifactFamily, SyntheticArtifactSpec,
};
use crate::error::{Error, Result};
use crate::eval::{run_scenario, DatasetRef, Scenario, SplitPart, SplitSelection};
use crate::frepgan::apply_perturbation;
use crate::spectral::{mean_radial_profile, mean_spectrum_2d, radial_power_spectrum_with, write_image_grids, RadialMode};
use crate::trainer::{load_checkpoint, save_checkpoint, split_for, train_on_split, TrainConfig, TrainOptions, TrainState};

/// Default output root for runs without `--out`.
pub const OUTPUT_ROOT_ENV: &str = "FREPGAN_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "frepgan", version, about = "Frequency-perturbation deepfake detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train G, D and C on a `root/{real,fake}` image folder.
    Train(TrainArgs),
    /// Score a checkpoint on an evaluation scenario.
    Evaluate(EvaluateArgs),
    /// Mean 1-D radial or 2-D log-magnitude spectrum of a folder of images.
    Spectrum(SpectrumArgs),
    /// Write an image, its perturbation map and their spectra.
    Perturb(PerturbArgs),
    /// Generate the synthetic artifact dataset.
    SynthData(SynthArgs),
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// TOML file with TrainConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set lr_discriminator=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Report file (one JSON line).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum SpectrumMode {
    #[value(name = "1d")]
    OneD,
    #[value(name = "2d")]
    TwoD,
}

#[derive(Debug, clap::Args)]
struct SpectrumArgs {
    /// Folder searched recursively for .png / .ppm files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: SpectrumMode,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Sum instead of average the power within each radius (1-D only).
    #[arg(long)]
    integrate: bool,
}

#[derive(Debug, clap::Args)]
struct PerturbArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    amplitude: f64,
    /// Images per class.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    size: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    period: usize,
    /// Ring band as `LO,HI` radii; defaults to 60-90% of the max radius.
    #[arg(long, value_parser = parse_band)]
    band: Option<(f64, f64)>,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long, default_value_t = 0)]
    base_texture_seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    None,
    Checkerboard,
    Grid,
    Ring,
}

impl From<FamilyArg> for ArtifactFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::None => ArtifactFamily::None,
            FamilyArg::Checkerboard => ArtifactFamily::Checkerboard,
            FamilyArg::Grid => ArtifactFamily::Grid,
            FamilyArg::Ring => ArtifactFamily::Ring,
        }
    }
}

fn parse_band(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo = lo.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = hi.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Perturb(args) => cmd_perturb(args),
        Command::SynthData(args) => cmd_synth(args),
    }
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("frepgan-out"), PathBuf::from)
}

fn out_or_default(out: Option<PathBuf>, default: &str) -> PathBuf {
    out.unwrap_or_else(|| output_root().join(default))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<C: Serialize> {
    command: &'static str,
    version: &'static str,
    seed: Option<u64>,
    config: C,
    inputs: Vec<FileHash>,
    artifacts: Vec<FileHash>,
}

/// Files under `root` (or `root` itself), sorted, skipping `exclude`.
fn hash_tree(root: &Path, exclude: &Path) -> Result<Vec<FileHash>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::InvalidInput(e.to_string()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path == exclude {
            continue;
        }
        let shown = path.strip_prefix(root).ok().filter(|p| !p.as_os_str().is_empty()).unwrap_or(path);
        out.push(FileHash { path: shown.display().to_string(), sha256: sha256_file(path)? });
    }
    Ok(out)
}

fn write_manifest<C: Serialize>(
    manifest_path: &Path,
    command: &'static str,
    seed: Option<u64>,
    config: C,
    inputs: &[&Path],
    artifacts_root: &Path,
) -> Result<()> {
    let inputs = inputs
        .iter()
        .filter(|p| p.is_file())
        .map(|p| Ok(FileHash { path: p.display().to_string(), sha256: sha256_file(p)? }))
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        inputs,
        artifacts: hash_tree(artifacts_root, manifest_path)?,
    };
    write_file(manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n")
}

/// Resolves the training config with precedence flags > file > defaults.
fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut table = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            text.parse::<toml::Table>().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for item in &args.overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {item:?} is not KEY=VALUE")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        table.insert(key.trim().to_string(), value);
    }
    let mut set = |key: &str, value: toml::Value| {
        table.insert(key.to_string(), value);
    };
    if let Some(v) = args.epochs {
        set("epochs", toml::Value::Integer(v as i64));
    }
    if let Some(v) = args.seed {
        set("seed", toml::Value::Integer(v as i64));
    }
    if let Some(v) = args.lambda {
        set("lambda", toml::Value::Float(v));
    }
    if let Some(v) = args.batch_size {
        set("batch_size", toml::Value::Integer(v as i64));
    }
    if let Some(v) = args.image_size {
        set("image_size", toml::Value::Integer(v as i64));
    }
    TrainConfig::from_toml(&toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = resolve_train_config(&args)?;
    let out = out_or_default(args.out.clone(), "train");
    create_dir(&out)?;
    write_file(&out.join("config.toml"), config.to_toml())?;

    let data_root = fs::canonicalize(&args.data).map_err(|e| Error::io(&args.data, e))?;
    let dataset = load_dataset(&data_root, Some(config.image_size), config.channels)?;
    let (train_set, holdout) = split_for(&config, dataset)?;
    let metrics_path = out.join("metrics.jsonl");
    if metrics_path.exists() {
        fs::remove_file(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    }
    let options = TrainOptions {
        checkpoint_dir: Some(out.join("checkpoints")),
        metrics_path: Some(metrics_path),
        max_steps: None,
    };
    let mut state = TrainState::new(config.clone())?;
    train_on_split(&mut state, &train_set, &holdout, &options)?;
    save_checkpoint(&state, &out.join("final.ckpt"))?;

    if config.holdout_fraction > 0.0 {
        let scenario = Scenario {
            id: "holdout".into(),
            dataset: DatasetRef::Directory { path: data_root.clone() },
            split: Some(SplitSelection { fraction: config.holdout_fraction, seed: config.seed, part: SplitPart::Holdout }),
            transforms: Vec::new(),
            family_filter: None,
        };
        write_file(&out.join("holdout.scenario.toml"), scenario.to_toml()?)?;
    }
    let inputs: Vec<&Path> = args.config.iter().map(PathBuf::as_path).collect();
    write_manifest(&out.join("manifest.json"), "train", Some(config.seed), &config, &inputs, &out)
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scenario).map_err(|e| Error::io(&args.scenario, e))?;
    let scenario = Scenario::from_toml(&text)?;
    let state = load_checkpoint(&args.checkpoint)?;
    let report = run_scenario(&state.generator, &state.classifier, &scenario)?;
    let out = out_or_default(args.out, "evaluate/report.jsonl");
    write_file(&out, serde_json::to_string(&report).expect("report serialises") + "\n")?;
    println!("{}", serde_json::to_string(&report).expect("report serialises"));
    write_manifest(
        &sibling_manifest(&out),
        "evaluate",
        Some(state.config.seed),
        &scenario,
        &[&args.checkpoint, &args.scenario],
        &out,
    )
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Layout(format!("{} is not a directory", dir.display())));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::InvalidInput(e.to_string()))?;
        let is_image = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("ppm"));
        if entry.file_type().is_file() && is_image {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

#[derive(Serialize)]
struct SpectrumConfig<'a> {
    input: &'a Path,
    mode: SpectrumMode,
    channels: usize,
    integrate: bool,
    images: usize,
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<()> {
    let files = image_files(&args.input)?;
    let images = files
        .iter()
        .map(|p| read_image(p, args.channels))
        .collect::<Result<Vec<_>>>()?;
    let out = out_or_default(
        args.out.clone(),
        match args.mode {
            SpectrumMode::OneD => "spectrum/profile.csv",
            SpectrumMode::TwoD => "spectrum/spectrum.grid",
        },
    );
    let mut buf = Vec::new();
    match args.mode {
        SpectrumMode::OneD => {
            let mode = if args.integrate { RadialMode::Integrate } else { RadialMode::Mean };
            mean_radial_profile(&images, mode)?.write_csv(&mut buf).map_err(|e| Error::io(&out, e))?;
        }
        SpectrumMode::TwoD => {
            mean_spectrum_2d(&images)?.write_grid(&mut buf).map_err(|e| Error::io(&out, e))?;
        }
    }
    write_file(&out, buf)?;
    let config = SpectrumConfig {
        input: &args.input,
        mode: args.mode,
        channels: args.channels,
        integrate: args.integrate,
        images: images.len(),
    };
    let inputs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    write_manifest(&sibling_manifest(&out), "spectrum", None, &config, &inputs, &out)
}

#[derive(Serialize)]
struct PerturbConfig<'a> {
    checkpoint: &'a Path,
    image: &'a Path,
    train_config: &'a TrainConfig,
}

fn cmd_perturb(args: PerturbArgs) -> Result<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let shape = state.generator.image_shape();
    let mut image = read_image(&args.image, shape.channels)?;
    if image.height() != shape.height || image.width() != shape.width {
        image = resize_to(&image, shape.height, shape.width)?;
    }
    let map = state.generator.generate(&image)?;
    let perturbed = apply_perturbation(&image, &map)?;
    let out = out_or_default(args.out.clone(), "perturb");
    create_dir(&out)?;
    write_image(&out.join("input.png"), &image)?;
    write_image(&out.join("perturbed.png"), &perturbed)?;
    let grid_path = out.join("perturbation.grid");
    let mut grid = Vec::new();
    write_image_grids(&mut grid, map.as_image()).map_err(|e| Error::io(&grid_path, e))?;
    write_file(&grid_path, grid)?;
    for (name, img) in [("profile_input.csv", &image), ("profile_perturbed.csv", &perturbed)] {
        let path = out.join(name);
        let mut csv = Vec::new();
        radial_power_spectrum_with(img, RadialMode::Mean).write_csv(&mut csv).map_err(|e| Error::io(&path, e))?;
        write_file(&path, csv)?;
    }
    let config = PerturbConfig { checkpoint: &args.checkpoint, image: &args.image, train_config: &state.config };
    write_manifest(
        &out.join("manifest.json"),
        "perturb",
        Some(state.config.seed),
        &config,
        &[&args.checkpoint, &args.image],
        &out,
    )
}

#[derive(Serialize)]
struct SynthConfig {
    spec_real: SyntheticArtifactSpec,
    spec_fake: SyntheticArtifactSpec,
    n_per_class: usize,
    size: usize,
    channels: usize,
    seed: u64,
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let family = ArtifactFamily::from(args.family);
    let spec_fake = SyntheticArtifactSpec {
        family,
        amplitude: args.amplitude,
        period: args.period,
        radial_band: if family == ArtifactFamily::Ring {
            args.band.unwrap_or_else(|| SyntheticArtifactSpec::default_ring_band(args.size))
        } else {
            args.band.unwrap_or((0.0, 0.0))
        },
        base_texture_seed: args.base_texture_seed,
    };
    let spec_real = SyntheticArtifactSpec::none().with_base_texture_seed(args.base_texture_seed);
    let samples =
        synthesize_toy_dataset_with_channels(&spec_real, &spec_fake, args.n, args.size, args.channels, args.seed)?;
    let out = out_or_default(args.out, "synth-data");
    create_dir(&out)?;
    write_dataset(&out, &samples)?;
    let config = SynthConfig {
        spec_real,
        spec_fake,
        n_per_class: args.n,
        size: args.size,
        channels: args.channels,
        seed: args.seed,
    };
    let manifest = out.join("manifest.json");
    write_manifest(&manifest, "synth-data", Some(args.seed), &config, &[], &out)
}
