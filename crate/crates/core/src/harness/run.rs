use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Map, Value};

use super::config::{ExperimentConfig, SourceKind};
use super::metrics::{continuum_average, relative_error, BlockAverages, StepError};
use super::{HarnessError, VERSION};
use crate::fem::{assemble_load, assemble_mass, assemble_stiffness, interpolate, SparseMatrix};
use crate::grid::{CoarsePartition, ContinuumMap, FineGrid, PermeabilityField};
use crate::timestep::{
    ei_solve, l1_explicit_solve, l1_implicit_solve, ConstantSource, L1Coeffs, Method,
    SemilinearSource, Source, Trajectory,
};
use crate::upscale::{
    assemble_coarse, assemble_coarse_load, downscale, effective_coeffs, solve_all_cell_problems,
    CellBasis, CoarseModel, EffectiveBlock,
};

/// Fine grid, medium and coarse partition of one experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: FineGrid,
    pub map: ContinuumMap,
    pub kappa: PermeabilityField<f64>,
    pub partition: CoarsePartition,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let grid = FineGrid::new(cfg.grid.n)?;
        let map = cfg.build_medium(&grid)?;
        let kappa = PermeabilityField::from_continuum(&map, cfg.medium.eps)?;
        let partition = CoarsePartition::new(&grid, cfg.grid.hinv, cfg.grid.k_os)?;
        Ok(Self {
            grid,
            map,
            kappa,
            partition,
        })
    }

    /// Same medium on another coarse partition.
    pub fn with_hinv(&self, hinv: usize, k_os: usize) -> Result<Self, HarnessError> {
        let partition = CoarsePartition::new(&self.grid, hinv, k_os)?;
        Ok(Self {
            partition,
            ..self.clone()
        })
    }
}

fn boxed_source(kind: SourceKind, f0: Vec<f64>, mass: &SparseMatrix<f64>) -> Box<dyn Source<f64>> {
    match kind {
        SourceKind::Semilinear => Box::new(SemilinearSource {
            f0,
            mass: mass.clone(),
            fixed: Vec::new(),
        }),
        _ => Box::new(ConstantSource(f0)),
    }
}

/// Fine finite element solution by implicit L1 with `fine_steps` uniform
/// steps on `[0, T]`; every state is kept and has full nodal length (zero
/// on the boundary).
pub fn reference_trajectory(
    cfg: &ExperimentConfig,
    setup: &Setup,
    fine_steps: usize,
) -> Result<Trajectory<f64>, HarnessError> {
    let phase = "reference";
    let grid = &setup.grid;
    let interior = grid.interior_nodes();
    let a =
        assemble_stiffness(grid, &setup.kappa).map_err(|e| HarnessError::numerical(phase, e))?;
    let m = assemble_mass::<f64>(grid, None).map_err(|e| HarnessError::numerical(phase, e))?;
    let a = a.principal_submatrix(&interior);
    let m = m.principal_submatrix(&interior);
    let g = cfg.source_fn();
    let load = assemble_load(grid, &g);
    let f0: Vec<f64> = interior.iter().map(|&p| load[p]).collect();
    let u0_full = interpolate(grid, cfg.initial_fn());
    let u0: Vec<f64> = interior.iter().map(|&p| u0_full[p]).collect();
    let source = boxed_source(cfg.source_kind()?, f0, &m);
    let coeffs = L1Coeffs::new(
        cfg.time.alpha,
        cfg.time.t_final / fine_steps as f64,
        fine_steps,
    )
    .map_err(|e| HarnessError::numerical(phase, e))?;
    let traj = l1_implicit_solve(&m, &a, source.as_ref(), &u0, &coeffs, cfg.picard())
        .map_err(|e| HarnessError::numerical(phase, e))?;
    if let Some(n) = traj.first_nonfinite() {
        return Err(HarnessError::numerical(
            phase,
            format!("non-finite reference at fine step {n}"),
        ));
    }
    let expand = |u: &Vec<f64>| {
        let mut full = vec![0.0; grid.node_count()];
        for (&p, &v) in interior.iter().zip(u) {
            full[p] = v;
        }
        full
    };
    let states = traj.states.iter().map(expand).collect();
    Ok(Trajectory { states, ..traj })
}

/// Reference trajectory at the `N + 1` coarse step times (`N̂ = factor · N`
/// fine steps, subsampled).
pub fn run_reference(
    cfg: &ExperimentConfig,
    setup: &Setup,
) -> Result<Trajectory<f64>, HarnessError> {
    let k = cfg.time.reference_factor;
    Ok(reference_trajectory(cfg, setup, cfg.time.steps * k)?.subsample(k))
}

/// Cell problems, effective coefficients and coarse matrices.
#[derive(Debug)]
pub struct Upscaled {
    pub bases: Vec<CellBasis<f64>>,
    pub blocks: Vec<EffectiveBlock<f64>>,
    pub model: CoarseModel<f64>,
}

impl Upscaled {
    pub fn max_residual(&self) -> f64 {
        self.bases.iter().fold(0.0, |a, b| a.max(b.residual))
    }
}

pub fn build_upscaled(cfg: &ExperimentConfig, setup: &Setup) -> Result<Upscaled, HarnessError> {
    let bases = solve_all_cell_problems(&setup.grid, &setup.partition, &setup.map, &setup.kappa)
        .map_err(|e| HarnessError::numerical("cell problems", e))?;
    let blocks: Vec<EffectiveBlock<f64>> = bases
        .iter()
        .map(|b| effective_coeffs(&setup.grid, b, &setup.kappa, cfg.medium.eps))
        .collect();
    let model = assemble_coarse(&setup.partition, &blocks)
        .map_err(|e| HarnessError::numerical("coarse model", e))?;
    Ok(Upscaled {
        bases,
        blocks,
        model,
    })
}

/// Coarse trajectory of one method; `U⁰` is the coarse projection of `u₀`.
pub fn run_coarse(
    cfg: &ExperimentConfig,
    setup: &Setup,
    up: &Upscaled,
    method: Method,
) -> Result<Trajectory<f64>, HarnessError> {
    let phase = format!("coarse {}", method.tag());
    let num = |e: &dyn std::fmt::Display| HarnessError::numerical(phase.clone(), e);
    let model = &up.model;
    let f0 = assemble_coarse_load(&setup.grid, model, &up.bases, cfg.source_fn())
        .map_err(|e| num(&e))?;
    let u0 = model
        .project(&setup.grid, &up.bases, cfg.initial_fn())
        .map_err(|e| num(&e))?;
    let source = boxed_source(cfg.source_kind()?, f0, &model.mass);
    let (alpha, tau, steps) = (cfg.time.alpha, cfg.tau(), cfg.time.steps);
    let traj = match method {
        Method::ExponentialIntegrator => {
            let eig = model.eigen().map_err(|e| num(&e))?;
            ei_solve(eig, source.as_ref(), &u0, alpha, tau, steps)
        }
        Method::L1Implicit => {
            let c = L1Coeffs::new(alpha, tau, steps).map_err(|e| num(&e))?;
            l1_implicit_solve(
                &model.mass,
                &model.stiffness,
                source.as_ref(),
                &u0,
                &c,
                cfg.picard(),
            )
        }
        Method::L1Explicit => {
            let c = L1Coeffs::new(alpha, tau, steps).map_err(|e| num(&e))?;
            l1_explicit_solve(&model.mass, &model.stiffness, source.as_ref(), &u0, &c)
        }
    };
    traj.map_err(|e| num(&e))
}

fn center_values(model: &CoarseModel<f64>, u: &[f64]) -> Result<[Vec<f64>; 2], HarnessError> {
    let c = model
        .block_center_values(u)
        .map_err(|e| HarnessError::numerical("errors", e))?;
    Ok(c.map(|v| v.into_iter().map(|(x, _)| x).collect()))
}

/// `e_i^n` of a coarse trajectory against reference block averages, one
/// per step. Once the trajectory is non-finite every later step is flagged.
pub fn error_series(
    reference: &[BlockAverages],
    model: &CoarseModel<f64>,
    traj: &Trajectory<f64>,
) -> Result<Vec<StepError>, HarnessError> {
    if reference.len() != traj.len() {
        return Err(HarnessError::Dimension {
            expected: reference.len(),
            got: traj.len(),
        });
    }
    reference
        .iter()
        .enumerate()
        .map(|(n, r)| {
            if !traj.finite[n] {
                return Ok(StepError::nonfinite());
            }
            relative_error(r, &center_values(model, &traj.states[n])?)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MethodReport {
    pub method: Method,
    pub errors: Vec<StepError>,
    pub first_nonfinite: Option<usize>,
    pub inner_iterations: usize,
    pub seconds: f64,
}

impl MethodReport {
    pub fn terminal(&self) -> StepError {
        *self.errors.last().expect("at least the initial step")
    }
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    pub methods: Vec<MethodReport>,
    /// Wall-clock seconds per phase, in execution order.
    pub timings: Vec<(String, f64)>,
    pub total_seconds: f64,
    pub coarse_dofs: usize,
    pub max_cell_residual: f64,
}

impl ErrorReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

fn fmt_e(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.10e}")
    } else {
        "nan".into()
    }
}

pub fn write_errors_csv(report: &ErrorReport, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "n,t,method,e0,e1,flag")?;
    for m in &report.methods {
        for (n, e) in m.errors.iter().enumerate() {
            writeln!(
                out,
                "{n},{},{},{},{},{}",
                fmt_e(report.times[n]),
                m.method.tag(),
                fmt_e(e.e[0]),
                fmt_e(e.e[1]),
                e.flag().tag()
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Clock {
    last: Instant,
    phases: Vec<(String, f64)>,
}

impl Clock {
    fn lap(&mut self, name: impl Into<String>) -> f64 {
        let now = Instant::now();
        let dt = (now - self.last).as_secs_f64();
        self.last = now;
        self.phases.push((name.into(), dt));
        dt
    }
}

/// Medium, reference, upscaling, every configured method and the error
/// series. With `out_dir`, artifacts are written there.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<ErrorReport, HarnessError> {
    let start = Instant::now();
    let mut clock = Clock {
        last: start,
        phases: Vec::new(),
    };
    let methods = cfg.parsed_methods()?;
    let setup = Setup::new(cfg)?;
    clock.lap("medium");

    let reference = run_reference(cfg, &setup)?;
    clock.lap("reference");
    let averages: Vec<BlockAverages> = reference
        .states
        .iter()
        .map(|u| continuum_average(u, &setup.grid, &setup.partition, &setup.map))
        .collect::<Result<_, _>>()?;
    clock.lap("reference averages");

    let up = build_upscaled(cfg, &setup)?;
    clock.lap("upscaling");

    let mut trajectories = Vec::new();
    let mut reports = Vec::new();
    for &method in &methods {
        let traj = run_coarse(cfg, &setup, &up, method)?;
        let seconds = clock.lap(format!("method {}", method.tag()));
        let errors = error_series(&averages, &up.model, &traj)?;
        clock.lap(format!("errors {}", method.tag()));
        reports.push(MethodReport {
            method,
            errors,
            first_nonfinite: traj.first_nonfinite(),
            inner_iterations: traj.total_inner_iterations(),
            seconds,
        });
        trajectories.push(traj);
    }
    let mut report = ErrorReport {
        times: reference.times.clone(),
        methods: reports,
        timings: Vec::new(),
        total_seconds: 0.0,
        coarse_dofs: up.model.dim(),
        max_cell_residual: up.max_residual(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_errors_csv(&report, dir.join("errors.csv"))?;
        if cfg.output.snapshots {
            write_snapshots(
                cfg,
                &setup,
                &up,
                &reference,
                &averages,
                &trajectories,
                &dir.join("snapshots"),
            )?;
        }
        clock.lap("output");
    }
    report.timings = clock.phases;
    report.total_seconds = start.elapsed().as_secs_f64();
    if let Some(dir) = out_dir {
        let text = serde_json::to_string_pretty(&summary_json(cfg, &setup, &up, &report))
            .map_err(std::io::Error::from)?;
        std::fs::write(dir.join("summary.json"), text + "\n")?;
    }
    Ok(report)
}

fn summary_json(
    cfg: &ExperimentConfig,
    setup: &Setup,
    up: &Upscaled,
    report: &ErrorReport,
) -> Value {
    let mut terminal = Map::new();
    let mut methods = Map::new();
    for m in &report.methods {
        let t = m.terminal();
        terminal.insert(
            m.method.tag().into(),
            json!({ "e0": t.e[0], "e1": t.e[1], "flag": t.flag().tag() }),
        );
        methods.insert(
            m.method.tag().into(),
            json!({
                "first_nonfinite": m.first_nonfinite,
                "inner_iterations": m.inner_iterations,
                "seconds": m.seconds,
            }),
        );
    }
    let timings: Map<String, Value> = report
        .timings
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    json!({
        "version": VERSION,
        "name": cfg.name,
        "terminal": terminal,
        "methods": methods,
        "timings": timings,
        "total_seconds": report.total_seconds,
        "coarse": {
            "blocks": setup.partition.block_count(),
            "dofs": up.model.dim(),
            "masked": up.model.masked_count(),
            "max_cell_residual": up.max_residual(),
        },
        "medium": {
            "fraction0": setup.map.fraction(0),
            "fraction1": setup.map.fraction(1),
        },
        "config": serde_json::to_value(cfg).unwrap_or(Value::Null),
    })
}

fn snapshot_steps(steps: usize) -> Vec<usize> {
    let mut s = vec![0, steps / 2, steps];
    s.dedup();
    s
}

fn write_snapshots(
    cfg: &ExperimentConfig,
    setup: &Setup,
    up: &Upscaled,
    reference: &Trajectory<f64>,
    averages: &[BlockAverages],
    trajectories: &[Trajectory<f64>],
    dir: &Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let grid = &setup.grid;
    let part = &setup.partition;
    for n in snapshot_steps(cfg.time.steps) {
        let fields: Vec<Vec<f64>> = trajectories
            .iter()
            .map(|t| {
                if t.finite[n] {
                    downscale(grid, &up.model, &up.bases, &t.states[n]).map(|d| d.nodal)
                } else {
                    Ok(vec![f64::NAN; grid.node_count()])
                }
            })
            .collect::<Result<_, _>>()
            .map_err(|e| HarnessError::numerical("snapshots", e))?;
        let mut out = BufWriter::new(File::create(dir.join(format!("fields_n{n:04}.csv")))?);
        write!(out, "i,j,x,y,reference")?;
        for t in trajectories {
            write!(out, ",{}", t.method.tag())?;
        }
        writeln!(out)?;
        for p in 0..grid.node_count() {
            let (i, j) = grid.node_ij(p);
            let [x, y] = grid.node_xy(p);
            write!(
                out,
                "{i},{j},{x:.6},{y:.6},{}",
                fmt_e(reference.states[n][p])
            )?;
            for f in &fields {
                write!(out, ",{}", fmt_e(f[p]))?;
            }
            writeln!(out)?;
        }
        out.flush()?;

        let mut out = BufWriter::new(File::create(dir.join(format!("blocks_n{n:04}.csv")))?);
        write!(out, "block,x,y,ref0,ref1")?;
        for t in trajectories {
            write!(out, ",{0}_0,{0}_1", t.method.tag())?;
        }
        writeln!(out)?;
        let centers: Vec<[Vec<f64>; 2]> = trajectories
            .iter()
            .map(|t| {
                if t.finite[n] {
                    center_values(&up.model, &t.states[n])
                } else {
                    Ok([
                        vec![f64::NAN; part.block_count()],
                        vec![f64::NAN; part.block_count()],
                    ])
                }
            })
            .collect::<Result<_, _>>()?;
        let r = &averages[n];
        for b in 0..part.block_count() {
            let [x, y] = part.block_center(b);
            let avg = |i: usize| {
                if r.present[i][b] {
                    r.values[i][b]
                } else {
                    f64::NAN
                }
            };
            write!(out, "{b},{x:.6},{y:.6},{},{}", fmt_e(avg(0)), fmt_e(avg(1)))?;
            for c in &centers {
                write!(out, ",{},{}", fmt_e(c[0][b]), fmt_e(c[1][b]))?;
            }
            writeln!(out)?;
        }
        out.flush()?;
    }
    Ok(())
}
