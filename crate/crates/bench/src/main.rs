use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pathdisc_bench::compress::compress_file;
use pathdisc_bench::config::{Axis, AxisValue, Physics, RunConfig, SweepConfig};
use pathdisc_bench::emit::{emit, write_summary, Format};
use pathdisc_bench::run::{run, Derived, RunRecord};
use pathdisc_bench::sweep::sweep;
use pathdisc_bench::BenchError;
use pathdisc_core::basis::{BasisKind, FitMode, Selection};

/// Trajectory discretization and path compression experiments.
///
/// Exit codes: 0 success, 1 other failure, 2 configuration error,
/// 3 infeasible problem, 4 solver degradation (results still written).
#[derive(Debug, Parser)]
#[command(name = "pathdisc", version)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output` of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    NFpd,
    J,
    K,
    Scheme,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BasisArg {
    Fourier,
    ShiftedSine,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SelectionArg {
    Lowest,
    Highest,
    FirstK,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitArg {
    LeastSquares,
    Truncate,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve every repetition of the configured scheme.
    Run,
    /// Solve the configured scheme once per sweep value.
    Sweep {
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        /// Comma-separated values (counts, or scheme names td, cpd, fpd, fpd-pc).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
    },
    /// Print c1, c2, D_u, Delta_max and N_min of the physics block; the
    /// reference physics is used without `--config`.
    Bounds,
    /// Compress a trajectory CSV onto K basis paths.
    Compress {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "fourier")]
        basis: BasisArg,
        #[arg(long, value_enum)]
        selection: Option<SelectionArg>,
        #[arg(long, value_enum, default_value = "least-squares")]
        fit: FitArg,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, BenchError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| BenchError::Config("--config is required".into()))?;
    let mut config = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        config.output = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(cli: &Cli, config: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn format(cli: &Cli) -> Format {
    match cli.format {
        Some(FormatArg::Jsonl) => Format::Jsonl,
        _ => Format::Csv,
    }
}

fn print_record(r: &RunRecord) {
    match &r.solution {
        Some(s) => println!(
            "{}  {}  objective {:.6} bps/Hz  {} iterations  {:.1} ms  {}",
            r.run_id,
            s.scheme,
            s.objective,
            s.iterations,
            s.wall_time_s * 1e3,
            s.status
        ),
        None => println!("{}  failed: {}", r.run_id, r.error.as_deref().unwrap_or("")),
    }
}

/// First failure code, else 4 when any run degraded.
fn outcome<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> i32 {
    let mut degraded = false;
    for r in records {
        if let Some(code) = r.error_code {
            return code;
        }
        degraded |= r.degraded();
    }
    if degraded {
        4
    } else {
        0
    }
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
}

fn cmd_run(cli: &Cli) -> Result<i32, BenchError> {
    let config = load(cli)?;
    let records = run(&config)?;
    records.iter().for_each(print_record);
    let files = emit(&records, format(cli), &out_dir(cli, Some(&config)))?;
    report_files(&files);
    Ok(outcome(&records))
}

fn parse_value(axis: Axis, text: &str) -> Result<AxisValue, BenchError> {
    match axis {
        Axis::Scheme => Ok(AxisValue::Name(text.trim().to_string())),
        _ => text
            .trim()
            .parse()
            .map(AxisValue::Count)
            .map_err(|_| BenchError::Config(format!("sweep value `{text}` is not a count"))),
    }
}

fn cmd_sweep(cli: &Cli, axis: Option<AxisArg>, values: Option<&[String]>) -> Result<i32, BenchError> {
    let config = load(cli)?;
    let axis = match axis {
        Some(AxisArg::NFpd) => Some(Axis::NFpd),
        Some(AxisArg::J) => Some(Axis::J),
        Some(AxisArg::K) => Some(Axis::K),
        Some(AxisArg::Scheme) => Some(Axis::Scheme),
        None => None,
    };
    let spec = match (axis, values, &config.sweep) {
        (Some(axis), Some(values), _) => SweepConfig {
            axis,
            values: values
                .iter()
                .map(|v| parse_value(axis, v))
                .collect::<Result<_, _>>()?,
        },
        (None, None, Some(s)) => s.clone(),
        _ => {
            return Err(BenchError::Config(
                "give both --axis and --values, or a `sweep` block in the config".into(),
            ))
        }
    };
    let records = sweep(&config, &spec, cli.parallel)?;
    records.iter().for_each(|(_, r)| print_record(r));
    let dir = out_dir(cli, Some(&config));
    let axis_name = serde_json::to_value(spec.axis)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let summary = write_summary(&dir, &axis_name, &records)?;
    let plain: Vec<RunRecord> = records.iter().map(|(_, r)| r.clone()).collect();
    let mut files = emit(&plain, format(cli), &dir)?;
    files.push(summary);
    report_files(&files);
    Ok(outcome(&plain))
}

fn cmd_bounds(cli: &Cli) -> Result<i32, BenchError> {
    let physics = match &cli.config {
        Some(path) => physics_from(path)?,
        None => Physics::reference(),
    };
    let d = Derived::from_physics(&physics)?;
    match cli.format {
        Some(FormatArg::Jsonl) => {
            println!("{}", serde_json::to_string(&d).map_err(|e| BenchError::Json(e.to_string()))?)
        }
        _ => {
            println!("c1_m = {}", d.c1_m);
            println!("c2 = {}", d.c2);
            println!("d_u = {}", d.d_u);
            println!("delta_max_derived_m = {}", d.delta_max_derived_m);
            println!("delta_max_m = {}", d.delta_max_m);
            println!("n_min = {}", d.n_min);
            println!("td_dt_s = {}", d.dt_s);
            println!("td_m = {}", d.m);
        }
    }
    Ok(0)
}

/// The physics block of a full config, or a bare physics object.
fn physics_from(path: &Path) -> Result<Physics, BenchError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    let block = value.get("physics").cloned().unwrap_or(value);
    serde_path_to_error::deserialize(block).map_err(|e| {
        BenchError::Config(format!("{}: physics field `{}`: {}", path.display(), e.path(), e.inner()))
    })
}

fn cmd_compress(
    cli: &Cli,
    trajectory: &Path,
    k: usize,
    basis: BasisArg,
    selection: Option<SelectionArg>,
    fit: FitArg,
) -> Result<i32, BenchError> {
    let basis = match basis {
        BasisArg::Fourier => BasisKind::Fourier,
        BasisArg::ShiftedSine => BasisKind::ShiftedSine,
    };
    let selection = match (selection, basis) {
        (Some(SelectionArg::Lowest), _) => Selection::Lowest,
        (Some(SelectionArg::Highest), _) => Selection::Highest,
        (Some(SelectionArg::FirstK), _) => Selection::FirstK,
        (None, BasisKind::Fourier) => Selection::Lowest,
        (None, _) => Selection::FirstK,
    };
    let fit = match fit {
        FitArg::LeastSquares => FitMode::LeastSquares,
        FitArg::Truncate => FitMode::Truncate,
    };
    let report = compress_file(trajectory, k, basis, selection, fit, &out_dir(cli, None))?;
    println!("{}", serde_json::to_string(&report).map_err(|e| BenchError::Json(e.to_string()))?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run => cmd_run(&cli),
        Command::Sweep { axis, values } => cmd_sweep(&cli, *axis, values.as_deref()),
        Command::Bounds => cmd_bounds(&cli),
        Command::Compress {
            trajectory,
            k,
            basis,
            selection,
            fit,
        } => cmd_compress(&cli, trajectory, *k, *basis, *selection, *fit),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
