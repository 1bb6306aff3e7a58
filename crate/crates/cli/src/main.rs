//! `fsi`: simulation, mortality pipeline and generic single index fits.

mod fit;
mod manifest;

use clap::{Args, Parser, Subcommand};
use fsi_core::fsi::{BandwidthGrid, FsiConfig, StartDesign};
use fsi_core::mortality::{
    generate_synthetic_mortality, run_mortality_pipeline, write_mortality_outputs, write_synthetic_mortality,
    MortalityConfig, Smoothing,
};
use fsi_core::sim::{
    generate_sphere_dataset, run_simulation, write_dataset_csv, write_replicates_csv, write_summary_csv, SimSetting,
    DEFAULT_SIM_GRID,
};
use fsi_core::{FsiError, IndexParam, Kernel};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use manifest::ManifestBuilder;

/// An error with its process exit code: 1 for bad input, 2 for numerical failure.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    pub fn internal(err: impl std::fmt::Display) -> Self {
        CliError { code: 1, message: err.to_string() }
    }
}

impl From<FsiError> for CliError {
    fn from(err: FsiError) -> Self {
        CliError { code: if err.is_numerical() { 2 } else { 1 }, message: err.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::input(err.to_string())
    }
}

#[derive(Parser)]
#[command(name = "fsi", version, about = "Fréchet single index regression for sphere and distribution responses")]
struct Cli {
    /// Worker threads (defaults to FSI_THREADS, then all cores).
    #[arg(long, global = true, env = "FSI_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sphere simulation over one or more settings.
    Simulate(SimulateArgs),
    /// Compare regression models on lifetable-derived distributions.
    Mortality(MortalityArgs),
    /// Fit a single index model to a CSV file.
    Fit(FitArgs),
    /// Write a synthetic lifetable dataset with a known index.
    SynthMortality(SynthArgs),
}

#[derive(Args)]
struct FsiOptions {
    /// Comma-separated bandwidths; an automatic grid is used when omitted.
    #[arg(long, value_delimiter = ',')]
    bandwidths: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    auto_bandwidths: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    kernel: KernelArg,
    /// Use a lattice of starts with this many points per angle instead of random starts.
    #[arg(long)]
    lattice: Option<usize>,
    #[arg(long)]
    num_starts: Option<usize>,
    #[arg(long)]
    num_retained: Option<usize>,
    /// Re-estimate the index for every held-out observation during bandwidth selection.
    #[arg(long)]
    loocv_refit_theta: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KernelArg {
    Gaussian,
    Epanechnikov,
}

impl FsiOptions {
    fn config(&self, seed: u64, default_starts: StartDesign) -> FsiConfig {
        FsiConfig {
            bandwidths: match &self.bandwidths {
                Some(grid) => BandwidthGrid::Explicit(grid.clone()),
                None => BandwidthGrid::Auto { count: self.auto_bandwidths },
            },
            starts: self.lattice.map(|k| StartDesign::Lattice { per_axis: k }).unwrap_or(default_starts),
            num_starts: self.num_starts,
            num_retained: self.num_retained,
            seed,
            kernel: match self.kernel {
                KernelArg::Gaussian => Kernel::Gaussian,
                KernelArg::Epanechnikov => Kernel::Epanechnikov,
            },
            loocv_refit_theta: self.loocv_refit_theta,
            ..FsiConfig::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with `settings` (and optionally `bandwidths` and `fsi`).
    #[arg(long)]
    settings: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated true index; defaults to (1, …, 1) normalized.
    #[arg(long, value_delimiter = ',')]
    theta0: Option<Vec<f64>>,
    /// Comma-separated bandwidth grid.
    #[arg(long, value_delimiter = ',')]
    bandwidths: Option<Vec<f64>>,
    /// Also write the first replicate of every setting as CSV.
    #[arg(long)]
    dump_data: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SimulateConfig {
    settings: Vec<SimSetting>,
    #[serde(default)]
    bandwidths: Option<Vec<f64>>,
    #[serde(default)]
    fsi: Option<FsiConfig>,
}

/// Setting as written in a settings file; `theta0` is optional there.
#[derive(Deserialize)]
struct SettingSpec {
    n: usize,
    p: usize,
    sigma2: f64,
    replicates: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    theta0: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct SettingsFile {
    settings: Vec<SettingSpec>,
    #[serde(default)]
    bandwidths: Option<Vec<f64>>,
    #[serde(default)]
    fsi: Option<FsiConfig>,
}

fn build_setting(n: usize, p: usize, sigma2: f64, replicates: usize, seed: u64, theta0: Option<&[f64]>) -> Result<SimSetting, CliError> {
    let mut setting = SimSetting::new(n, p, sigma2, replicates, seed)?;
    if let Some(t) = theta0 {
        if t.len() != p {
            return Err(CliError::input(format!("theta0 has {} entries, expected p = {p}", t.len())));
        }
        setting.theta0 = IndexParam::new(t)?;
        setting.validate()?;
    }
    Ok(setting)
}

fn simulate(args: &SimulateArgs, manifest: &mut ManifestBuilder) -> Result<(), CliError> {
    let config = match &args.settings {
        Some(path) => {
            manifest.inputs.push(path.clone());
            let text = fs::read_to_string(path)?;
            let file: SettingsFile =
                serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            let settings = file
                .settings
                .iter()
                .map(|s| build_setting(s.n, s.p, s.sigma2, s.replicates, s.seed, s.theta0.as_deref()))
                .collect::<Result<Vec<_>, _>>()?;
            SimulateConfig { settings, bandwidths: file.bandwidths.or(args.bandwidths.clone()), fsi: file.fsi }
        }
        None => {
            let (Some(n), Some(p), Some(sigma2)) = (args.n, args.p, args.sigma2) else {
                return Err(CliError::input("either --settings or all of --n, --p and --sigma2 are required"));
            };
            let setting = build_setting(n, p, sigma2, args.replicates, args.seed, args.theta0.as_deref())?;
            SimulateConfig { settings: vec![setting], bandwidths: args.bandwidths.clone(), fsi: None }
        }
    };
    let grid = config.bandwidths.clone().unwrap_or_else(|| DEFAULT_SIM_GRID.to_vec());
    let fsi = config.fsi.clone().unwrap_or_default();
    manifest.seed = config.settings.first().map(|s| s.seed);
    manifest.config = serde_json::json!({ "settings": config.settings, "bandwidths": grid, "fsi": fsi });

    fs::create_dir_all(&args.out)?;
    if args.dump_data {
        for (k, setting) in config.settings.iter().enumerate() {
            let path = args.out.join(format!("data_setting{k}.csv"));
            write_dataset_csv(&generate_sphere_dataset(setting, 0)?, fs::File::create(&path)?)?;
            manifest.outputs.push(path);
        }
    }
    let report = run_simulation(&config.settings, &grid, &fsi)?;
    let path = args.out.join("sim_replicates.csv");
    write_replicates_csv(&report, fs::File::create(&path)?)?;
    manifest.outputs.push(path);
    let path = args.out.join("sim_summary.csv");
    write_summary_csv(&report, fs::File::create(&path)?)?;
    manifest.outputs.push(path);

    let failures = report.total_failures();
    if failures > 0 {
        return Err(CliError { code: 2, message: format!("{failures} replicate fits failed; see sim_replicates.csv") });
    }
    Ok(())
}

#[derive(Args)]
struct MortalityArgs {
    #[arg(long)]
    lifetables: PathBuf,
    #[arg(long)]
    covariates: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    splits: usize,
    #[arg(long, default_value_t = 10)]
    test_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Density smoothing: `silverman`, `none`, or a bandwidth in years.
    #[arg(long, default_value = "silverman")]
    smoothing: String,
    #[arg(long, value_delimiter = ',')]
    covariate_names: Option<Vec<String>>,
    #[arg(long, default_value_t = 20.0)]
    age_min: f64,
    #[arg(long, default_value_t = 110.0)]
    age_max: f64,
    #[command(flatten)]
    fsi: FsiOptions,
}

fn parse_smoothing(s: &str) -> Result<Smoothing, CliError> {
    match s {
        "silverman" => Ok(Smoothing::Silverman),
        "none" => Ok(Smoothing::None),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|b| *b > 0.0)
            .map(Smoothing::Bandwidth)
            .ok_or_else(|| CliError::input(format!("--smoothing must be `silverman`, `none` or a positive number, got `{other}`"))),
    }
}

fn mortality(args: &MortalityArgs, manifest: &mut ManifestBuilder) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => {
            manifest.inputs.push(path.clone());
            serde_json::from_str::<MortalityConfig>(&fs::read_to_string(path)?)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        None => MortalityConfig {
            fsi: args.fsi.config(args.seed, StartDesign::Lattice { per_axis: 3 }),
            ..MortalityConfig::default()
        },
    };
    config.splits = args.splits;
    config.test_size = args.test_size;
    config.seed = args.seed;
    config.smoothing = parse_smoothing(&args.smoothing)?;
    config.age_range = (args.age_min, args.age_max);
    if let Some(names) = &args.covariate_names {
        config.covariates = names.clone();
    }
    manifest.seed = Some(args.seed);
    manifest.config = serde_json::to_value(&config).map_err(CliError::internal)?;

    if !args.covariates.is_file() {
        return Err(CliError::input(format!("covariates file {} not found", args.covariates.display())));
    }
    manifest.inputs.push(args.covariates.clone());
    if let Ok(entries) = fs::read_dir(&args.lifetables) {
        let mut files: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "csv")).collect();
        files.sort();
        manifest.inputs.extend(files);
    }
    let report = run_mortality_pipeline(&args.lifetables, &args.covariates, &config)?;
    manifest.outputs.extend(write_mortality_outputs(&report, &args.out)?);
    Ok(())
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    geometry: fit::Geometry,
    /// CSV with covariates `x1..xp` and responses `y` (euclidean), `y1,y2,y3` (sphere) or `q1..qM` (wasserstein).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON estimator config; replaces the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Center and scale covariates before fitting.
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    fsi: FsiOptions,
}

fn fit_command(args: &FitArgs, manifest: &mut ManifestBuilder) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => {
            manifest.inputs.push(path.clone());
            serde_json::from_str::<FsiConfig>(&fs::read_to_string(path)?)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        None => args.fsi.config(args.seed, StartDesign::Random),
    };
    manifest.seed = Some(config.seed);
    manifest.config = serde_json::json!({ "geometry": args.geometry, "standardize": args.standardize, "fsi": config });
    manifest.inputs.push(args.data.clone());
    let outcome = fit::run(args.geometry, &args.data, &config, args.standardize, &args.out)?;
    manifest.outputs.extend(outcome.outputs);
    Ok(())
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    units: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn synth(args: &SynthArgs, manifest: &mut ManifestBuilder) -> Result<(), CliError> {
    manifest.seed = Some(args.seed);
    manifest.config = serde_json::json!({ "units": args.units, "seed": args.seed });
    let data = generate_synthetic_mortality(args.units, args.seed)?;
    write_synthetic_mortality(&data, &args.out)?;
    manifest.outputs.push(args.out.join("covariates.csv"));
    manifest.outputs.push(args.out.join("truth.json"));
    Ok(())
}

fn finish(manifest: ManifestBuilder, out: &Path, result: Result<(), CliError>) -> ExitCode {
    let (code, message) = match result {
        Ok(()) => (0, None),
        Err(e) => (e.code, Some(e.message)),
    };
    if let Some(msg) = &message {
        eprintln!("error: {msg}");
    }
    if let Err(e) = manifest.write(out, i32::from(code), message) {
        eprintln!("error: could not write manifest: {e}");
        return ExitCode::from(code.max(1));
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match &cli.command {
        Command::Simulate(args) => {
            let mut m = ManifestBuilder::new("simulate");
            let r = simulate(args, &mut m);
            finish(m, &args.out, r)
        }
        Command::Mortality(args) => {
            let mut m = ManifestBuilder::new("mortality");
            let r = mortality(args, &mut m);
            finish(m, &args.out, r)
        }
        Command::Fit(args) => {
            let mut m = ManifestBuilder::new("fit");
            let r = fit_command(args, &mut m);
            finish(m, &args.out, r)
        }
        Command::SynthMortality(args) => {
            let mut m = ManifestBuilder::new("synth-mortality");
            let r = synth(args, &mut m);
            finish(m, &args.out, r)
        }
    }
}
