use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use iterproj::config::RunConfig;
use iterproj::driver::{
    cmd_run, cmd_spectrum, cmd_study_order, cmd_study_sweep, modes_csv, order_csv, spectrum_csv,
    sweep_csv,
};
use iterproj::output::write_atomic;
use iterproj::Error;

/// Incompressible-flow solver with an iterative pressure-projection scheme.
///
/// Configuration precedence, lowest to highest: built-in defaults, the
/// `--config` file, `ITERPROJ_*` environment variables, then `--set`
/// and the dedicated flags.
#[derive(Parser)]
#[command(name = "iterproj", version, arg_required_else_help = true)]
struct Cli {
    /// Configuration file of `key = value` lines (`#` comments).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides the configured one.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Force the bit-reproducible serial path. Runs are always serial and
    /// reproducible in this build, so the flag is accepted for script
    /// compatibility.
    #[arg(long, global = true)]
    serial: bool,

    /// What to do when a step violates the discrete energy inequality.
    #[arg(long, global = true, value_name = "MODE")]
    assert_energy: Option<EnergyFlag>,

    /// Extra `key=value` override, highest precedence; may be repeated.
    #[arg(long, global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnergyFlag {
    Warn,
    Abort,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyMode {
    /// Mesh-refinement study with observed convergence rates.
    Order,
    /// Iteration counts over an (alpha, rho/nu) grid.
    Sweep,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write per-step, per-pass, summary and VTK
    /// artifacts.
    Run,
    /// Convergence-order or parameter-sweep study.
    Study {
        #[arg(long, value_enum, default_value = "order")]
        mode: StudyMode,
        /// Mesh resolutions (cells per direction) for order mode.
        #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
        meshes: Vec<usize>,
        /// Pressure-update weights alpha for sweep mode.
        #[arg(long, value_delimiter = ',', default_value = "1.5,2.0,2.5")]
        alphas: Vec<f64>,
        /// Divergence weights as multiples of the viscosity, sweep mode.
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        rhos: Vec<f64>,
    },
    /// Tabulate the amplification constants of the pressure update over a
    /// parameter and frequency grid.
    Modes {
        #[arg(long, value_delimiter = ',', default_value = "0,1.5,2.5")]
        alphas: Vec<f64>,
        /// Divergence weights as multiples of the viscosity.
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
        rhos: Vec<f64>,
        /// Squared-frequency grid.
        #[arg(long, value_delimiter = ',', default_value = "1e-3,1,1e3,1e6")]
        xi_sq: Vec<f64>,
    },
    /// Dense eigenvalue analysis of the pressure iteration on a small mesh,
    /// cross-checked against a measured contraction rate.
    Spectrum {
        /// First pass of the rate-fit window.
        #[arg(long, default_value_t = 10)]
        fit_from: usize,
        /// One past the last pass of the rate-fit window.
        #[arg(long, default_value_t = 30)]
        fit_to: usize,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    for kv in &cli.set {
        let (key, value) = kv.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects KEY=VALUE, got '{kv}'"))
        })?;
        cfg.set(key.trim(), value)?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(mode) = cli.assert_energy {
        let name = match mode {
            EnergyFlag::Warn => "warn",
            EnergyFlag::Abort => "abort",
            EnergyFlag::Off => "off",
        };
        cfg.set("assert_energy", name)?;
    }
    Ok(cfg)
}

/// Writes a study table into the output directory and echoes it to stdout.
fn emit(cfg: &RunConfig, name: &str, table: &str) -> Result<(), Error> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(name);
    write_atomic(&path, table.as_bytes())?;
    print!("{table}");
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Run => {
            let art = cmd_run(&cfg)?;
            let steps = art.outcome.records.len();
            let total: usize = art.outcome.records.iter().map(|r| r.iterations).sum();
            let capped = art.outcome.records.iter().filter(|r| !r.converged).count();
            println!(
                "{} steps to t = {:.6}, {:.2} pressure passes/step average{}",
                steps,
                art.outcome.state.t,
                total as f64 / steps as f64,
                if capped > 0 {
                    format!(", {capped} step(s) hit the iteration cap")
                } else {
                    String::new()
                }
            );
            for f in &art.files {
                eprintln!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Study {
            mode,
            meshes,
            alphas,
            rhos,
        } => match mode {
            StudyMode::Order => {
                let study = cmd_study_order(&cfg, meshes)?;
                emit(&cfg, "order.csv", &order_csv(&study))
            }
            StudyMode::Sweep => {
                let study = cmd_study_sweep(&cfg, alphas, rhos)?;
                emit(&cfg, "sweep.csv", &sweep_csv(&study))
            }
        },
        Command::Modes {
            alphas,
            rhos,
            xi_sq,
        } => {
            let nu = cfg.resolved_nu()?;
            emit(
                &cfg,
                "modes.csv",
                &modes_csv(alphas, rhos, nu, cfg.k, xi_sq),
            )
        }
        Command::Spectrum { fit_from, fit_to } => {
            let art = cmd_spectrum(&cfg, (*fit_from, *fit_to))?;
            emit(&cfg, "spectrum.csv", &spectrum_csv(&art))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 1,
                Error::AssertionFailed(_) => 3,
                _ => 2,
            })
        }
    }
}
