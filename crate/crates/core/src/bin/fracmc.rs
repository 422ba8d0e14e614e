use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fracmc::grid::{
    build_periodic_medium, nonperiodic_medium, ContinuumMap, FineGrid, UnitPattern,
};
use fracmc::harness::{
    build_upscaled, continuum_average, run_experiment, run_reference, sweep, write_sweep_csv,
    ExperimentConfig, HarnessError, Setup, SweepAxis, VERSION,
};
use fracmc::mittag::{ml, MLParams};
use fracmc::upscale::write_coefficients;

#[derive(Parser)]
#[command(name = "fracmc", version = VERSION, about = "Multicontinuum upscaling for time-fractional diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full experiment: reference, upscaling, coarse methods, errors.
    Run {
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `time.alpha`.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Terminal errors along one axis, with observed rates.
    Sweep {
        config: PathBuf,
        #[arg(long, value_parser = ["tau", "h"])]
        axis: String,
        /// Step counts (tau) or blocks per side (h), comma separated.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fine reference only; writes per-block continuum averages.
    Reference {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cell problems and effective coefficients; writes the coefficient dump.
    Upscale {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prints E_{α,β}(z) with 17 significant digits, one line per z.
    MlEval {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(
            long,
            allow_hyphen_values = true,
            value_delimiter = ',',
            required = true
        )]
        z: Vec<f64>,
    },
    /// Medium files.
    Medium {
        #[command(subcommand)]
        action: MediumAction,
    },
}

#[derive(Subcommand)]
enum MediumAction {
    /// Writes a generated medium.
    Gen {
        #[arg(long, value_parser = ["periodic", "nonperiodic"])]
        kind: String,
        #[arg(long)]
        n: usize,
        /// Periods per side (periodic).
        #[arg(long, default_value_t = 10)]
        eps_inv: usize,
        /// Tile size in cells (nonperiodic).
        #[arg(long, default_value_t = 10)]
        tile: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints size, continuum fractions and a character map.
    Show { file: PathBuf },
}

fn out_dir(cfg: &ExperimentConfig, over: Option<PathBuf>) -> PathBuf {
    over.unwrap_or_else(|| cfg.output.dir.clone())
}

fn report_failure(dir: Option<&Path>, e: &HarnessError) {
    eprintln!("error [{}]: {e}", e.phase());
    if let Some(dir) = dir {
        let record = serde_json::json!({ "phase": e.phase(), "message": e.to_string(), "exit_code": e.exit_code() });
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), record.to_string() + "\n");
        }
    }
}

fn run(command: Command) -> Result<(), (HarnessError, Option<PathBuf>)> {
    let plain = |e: HarnessError| (e, None);
    match command {
        Command::Run { config, out, alpha } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(plain)?;
            if let Some(a) = alpha {
                cfg.time.alpha = a;
                cfg.validate().map_err(plain)?;
            }
            let dir = out_dir(&cfg, out);
            let report = run_experiment(&cfg, Some(&dir)).map_err(|e| (e, Some(dir.clone())))?;
            for m in &report.methods {
                let t = m.terminal();
                let nf = m
                    .first_nonfinite
                    .map_or(String::new(), |n| format!(" (non-finite from step {n})"));
                println!(
                    "{:<12} e0 = {:.4e}  e1 = {:.4e}  {}{nf}",
                    m.method.tag(),
                    t.e[0],
                    t.e[1],
                    t.flag().tag()
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config).map_err(plain)?;
            let axis = SweepAxis::from_tag(&axis).expect("clap restricts the axis");
            let dir = out_dir(&cfg, out);
            let pts = sweep(&cfg, axis, &values).map_err(|e| (e, Some(dir.clone())))?;
            std::fs::create_dir_all(&dir).map_err(|e| (e.into(), None))?;
            let path = dir.join(format!("sweep_{}.csv", axis.tag()));
            write_sweep_csv(axis, &pts, &path).map_err(plain)?;
            for p in pts.iter().filter(|p| p.failure.is_some()) {
                eprintln!(
                    "{} = {}: {}",
                    axis.tag(),
                    p.value,
                    p.failure.as_deref().unwrap_or("")
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Reference { config, out } => {
            let cfg = ExperimentConfig::load(&config).map_err(plain)?;
            let dir = out_dir(&cfg, out);
            let fail = |e| (e, Some(dir.clone()));
            let setup = Setup::new(&cfg).map_err(fail)?;
            let traj = run_reference(&cfg, &setup).map_err(fail)?;
            std::fs::create_dir_all(&dir).map_err(|e| fail(e.into()))?;
            let mut text = String::from("n,t,block,avg0,avg1\n");
            for (n, u) in traj.states.iter().enumerate() {
                let avg = continuum_average(u, &setup.grid, &setup.partition, &setup.map)
                    .map_err(fail)?;
                for b in 0..setup.partition.block_count() {
                    let v = |i: usize| {
                        if avg.present[i][b] {
                            format!("{:.10e}", avg.values[i][b])
                        } else {
                            "nan".into()
                        }
                    };
                    text += &format!("{n},{:.10e},{b},{},{}\n", traj.times[n], v(0), v(1));
                }
            }
            let path = dir.join("reference_averages.csv");
            std::fs::write(&path, text).map_err(|e| fail(e.into()))?;
            let energy =
                fracmc::fem::energy(&setup.grid, &setup.kappa, traj.last()).map_err(|e| {
                    fail(HarnessError::Numerical {
                        phase: "reference".into(),
                        message: e.to_string(),
                    })
                })?;
            println!("energy at T: {energy:.6e}");
            println!("wrote {}", path.display());
        }
        Command::Upscale { config, out } => {
            let cfg = ExperimentConfig::load(&config).map_err(plain)?;
            let dir = out_dir(&cfg, out);
            let fail = |e| (e, Some(dir.clone()));
            let setup = Setup::new(&cfg).map_err(fail)?;
            let up = build_upscaled(&cfg, &setup).map_err(fail)?;
            std::fs::create_dir_all(&dir).map_err(|e| fail(e.into()))?;
            let path = dir.join("coefficients.txt");
            write_coefficients(&up.blocks, &path).map_err(|e| {
                fail(HarnessError::Numerical {
                    phase: "upscale".into(),
                    message: e.to_string(),
                })
            })?;
            println!(
                "{} blocks, {} coarse unknowns ({} masked), max constraint residual {:.3e}",
                setup.partition.block_count(),
                up.model.dim(),
                up.model.masked_count(),
                up.max_residual()
            );
            println!("wrote {}", path.display());
        }
        Command::MlEval { alpha, beta, z } => {
            let p = MLParams::new(alpha, beta)
                .map_err(|e| plain(HarnessError::Config(e.to_string())))?;
            for zi in z {
                let v = ml(&p, zi).map_err(|e| {
                    plain(HarnessError::Numerical {
                        phase: "ml-eval".into(),
                        message: e.to_string(),
                    })
                })?;
                println!("{v:.16e}");
            }
        }
        Command::Medium { action } => medium(action).map_err(plain)?,
    }
    Ok(())
}

fn medium(action: MediumAction) -> Result<(), HarnessError> {
    match action {
        MediumAction::Gen {
            kind,
            n,
            eps_inv,
            tile,
            seed,
            out,
        } => {
            let grid = FineGrid::new(n)?;
            let map = if kind == "periodic" {
                if eps_inv == 0 || n % eps_inv != 0 {
                    return Err(HarnessError::Config(format!(
                        "--eps-inv {eps_inv} must divide --n {n}"
                    )));
                }
                build_periodic_medium(&grid, eps_inv, &UnitPattern::centered_square(n / eps_inv))?
            } else {
                nonperiodic_medium(&grid, tile, seed)?
            };
            map.save(&out)?;
            println!(
                "wrote {} (n = {n}, fraction of continuum 0: {:.4})",
                out.display(),
                map.fraction(0)
            );
        }
        MediumAction::Show { file } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", file.display())))?;
            let map = ContinuumMap::from_text(&text)?;
            let n = map.n();
            println!("n = {n}");
            println!(
                "continuum 0: {} cells ({:.4})",
                map.count(0),
                map.fraction(0)
            );
            println!(
                "continuum 1: {} cells ({:.4})",
                map.count(1),
                map.fraction(1)
            );
            // top row first, at most 80 characters wide
            let step = n.div_ceil(80);
            for j in (0..n).rev().step_by(step) {
                let row: String = (0..n)
                    .step_by(step)
                    .map(|i| if map.label(j * n + i) == 0 { '#' } else { '.' })
                    .collect();
                println!("{row}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((e, dir)) => {
            report_failure(dir.as_deref(), &e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
