//! `lpf` command-line front end.
//!
//! Exit status: 0 on success, 1 on a usage or configuration error, 2 when
//! input data cannot be read or processed.

mod args;
mod settings;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use log::info;
use serde::Serialize;

use lpf_core::denoise::{denoise_with_dictionary, DenoiseConfig};
use lpf_core::geom::{synth_shape, PointCloud, ShapeKind};
use lpf_core::io::{load_snapshot, read_cloud, save_snapshot, write_atomic, write_cloud};
use lpf_core::metrics::{energy_csv, energy_report, nn_histogram, rmse, symmetric_rmse};
use lpf_core::resample::{resample, resample_state, ResampleConfig, ResampleOutput};
use lpf_core::sparse::{analyze, AnalysisState};
use lpf_core::LpfError;

use args::{Cli, Command, MetricsCommand, SynthArgs};
use settings::{apply_flags, FileConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<LpfError> for CliError {
    fn from(e: LpfError) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let seed = cli.global.seed;
    match cli.command {
        Command::Analyze(a) => {
            distinct(&a.input, &a.state)?;
            let mut config = file.analysis(&Default::default())?;
            apply_flags(&mut config, &a.analysis, seed)?;
            let cloud = load(&a.input)?;
            let state = analyze(&cloud, &config)?;
            log_state(&state);
            save_snapshot(&a.state, &state)?;
            info!("wrote {}", a.state.display());
        }
        Command::Resample(a) => {
            for input in a.input.iter().chain(&a.state) {
                distinct(input, &a.out)?;
            }
            let mut config = file.resample(&ResampleConfig::default())?;
            apply_flags(&mut config.analysis, &a.analysis, seed)?;
            if a.conflict_radius.is_some() {
                config.conflict_radius = a.conflict_radius;
            }
            if let Some(f) = a.conflict_factor {
                config.conflict_factor = f;
            }
            check_conflict(&config)?;
            let out = match (&a.input, &a.state) {
                (_, Some(state)) => {
                    let state = load_snapshot(state)?;
                    resample_state(state, &config)?
                }
                (Some(input), None) => resample(&load(input)?, &config)?,
                (None, None) => unreachable!("clap requires a source"),
            };
            log_resample(&out);
            write_cloud(&a.out, &out.consolidation.points)?;
            info!("wrote {} points to {}", out.consolidation.points.len(), a.out.display());
        }
        Command::Denoise(a) => {
            for input in std::iter::once(&a.input).chain(&a.state).chain(&a.reference) {
                distinct(input, &a.out)?;
            }
            let snapshot = a.state.as_deref().map(load_snapshot).transpose()?;
            let mut base = DenoiseConfig::default();
            if let Some(s) = &snapshot {
                let c = &s.config;
                base.analysis.radius = c.radius;
                base.analysis.pattern = c.pattern;
                base.analysis.atoms = c.atoms;
                base.analysis.lambda = c.lambda;
                base.analysis.target_radius_factor = c.target_radius_factor;
                base.analysis.seed = c.seed;
            }
            let mut config = file.denoise(&base)?;
            apply_flags(&mut config.analysis, &a.analysis, seed)?;
            if let Some(g) = a.gamma {
                config.gamma = g;
            }
            if let Some(k) = a.rounds {
                config.rounds = k;
            }
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let cloud = load(&a.input)?;
            let reference = a.reference.as_deref().map(load).transpose()?;
            let resolved = config.analysis.resolve(&cloud)?;
            log_json("resolved denoise config", &DenoiseConfig { analysis: resolved, ..config.clone() });
            let out = denoise_with_dictionary(&cloud, &config, reference.as_ref(), snapshot.map(|s| s.dictionary))?;
            for (i, r) in out.rounds.iter().enumerate() {
                info!(
                    "round {}: mean displacement {:.6e}, data term {:.6e}{}",
                    i + 1,
                    r.mean_displacement,
                    r.data_term,
                    r.rmse.map(|e| format!(", rmse {e:.6}")).unwrap_or_default()
                );
            }
            write_cloud(&a.out, &out.cloud)?;
            info!("wrote {}", a.out.display());
        }
        Command::Metrics(m) => metrics(m)?,
        Command::Synth(a) => synth(a, seed)?,
    }
    Ok(())
}

fn metrics(m: MetricsCommand) -> CliResult {
    match m {
        MetricsCommand::Rmse {
            input,
            reference,
            symmetric,
        } => {
            let test = load(&input)?;
            let reference = load(&reference)?;
            let value = if symmetric {
                symmetric_rmse(&test, &reference)?
            } else {
                rmse(&test, &reference)?
            };
            emit(None, &format!("{}\n{value}\n", if symmetric { "symmetric_rmse" } else { "rmse" }))
        }
        MetricsCommand::Hist { input, bins, out } => {
            if bins == 0 {
                return Err(CliError::Usage("--bins must be at least 1".into()));
            }
            let h = nn_histogram(&load(&input)?, bins)?;
            info!("nearest-neighbor distance mean {:.6}, median {:.6}", h.mean, h.median);
            emit(out.as_deref(), &h.to_csv())
        }
        MetricsCommand::Energy { state, per_atom, out } => {
            let rows = energy_report(&load_snapshot(&state)?, per_atom)?;
            emit(out.as_deref(), &energy_csv(&rows))
        }
    }
}

fn synth(a: SynthArgs, seed: Option<u64>) -> CliResult {
    let kind: ShapeKind = a.kind.parse().map_err(|e: LpfError| CliError::Usage(e.to_string()))?;
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(CliError::Usage(format!("invalid --noise {}", a.noise)));
    }
    if let Some(clean) = &a.clean {
        distinct(clean, &a.out)?;
    }
    let seed = seed.unwrap_or(lpf_core::rng::DEFAULT_SEED);
    let (noisy, clean) = synth_shape(kind, a.n, a.noise, seed)?;
    info!("{kind}: {} points, noise {}, seed {seed}, diagonal {:.4}", a.n, a.noise, clean.bbox_diagonal());
    write_cloud(&a.out, &noisy)?;
    if let Some(path) = &a.clean {
        write_cloud(path, &clean)?;
    }
    Ok(())
}

fn load(path: &Path) -> CliResult<PointCloud> {
    let cloud = read_cloud(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if cloud.is_empty() {
        return Err(CliError::Data(format!("{}: no points", path.display())));
    }
    info!("read {} points from {}", cloud.len(), path.display());
    Ok(cloud)
}

fn distinct(input: &Path, output: &Path) -> CliResult {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == output,
    };
    if same {
        return Err(CliError::Usage(format!("output {} would overwrite an input", output.display())));
    }
    Ok(())
}

fn check_conflict(c: &ResampleConfig) -> CliResult {
    let ok = c.conflict_radius.map_or(true, |r| r > 0.0 && r.is_finite()) && c.conflict_factor > 0.0 && c.conflict_factor.is_finite();
    if !ok {
        return Err(CliError::Usage("conflict radius and factor must be positive".into()));
    }
    Ok(())
}

/// CSV to a file (atomically) or stdout.
fn emit(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => write_atomic(p, |w| Ok(w.write_all(text.as_bytes())?))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(e.to_string()))?,
    }
    Ok(())
}

fn log_json<T: Serialize>(what: &str, value: &T) {
    info!("{what}: {}", serde_json::to_string(value).unwrap_or_default());
}

fn log_state(state: &AnalysisState) {
    log_json("resolved analysis config", &state.config);
    info!(
        "pattern M = {}, spacing {:.6}; {} fields; final energy {:.6e}",
        state.pattern.len(),
        state.pattern.spacing(),
        state.lpfs.len(),
        state.energy().total
    );
}

fn log_resample(out: &ResampleOutput) {
    log_state(&out.state);
    info!("conflict radius {:.6}", out.conflict_radius);
}

