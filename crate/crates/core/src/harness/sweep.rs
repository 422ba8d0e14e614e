use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::config::ExperimentConfig;
use super::metrics::{continuum_average, BlockAverages, ErrorFlag};
use super::run::{build_upscaled, error_series, reference_trajectory, run_coarse, Setup};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Values are step counts `N` (`τ = T/N`).
    Tau,
    /// Values are coarse blocks per side (`H = 1/value`).
    H,
}

impl SweepAxis {
    pub fn tag(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::H => "h",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "tau" => Some(SweepAxis::Tau),
            "h" | "H" => Some(SweepAxis::H),
            _ => None,
        }
    }
}

/// Terminal errors of one method at one sweep value. `rate` is the
/// observed order against the previous value of the same method.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: usize,
    /// `τ` or `H`.
    pub param: f64,
    pub method: String,
    pub e: [f64; 2],
    pub flag: String,
    pub rate: [Option<f64>; 2],
    pub failure: Option<String>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Repeats the coarse part of an experiment along one axis against a single
/// fine reference. For the `τ` axis the reference uses `factor · lcm(N)`
/// steps so that every coarse step time is a reference step time. A
/// failing point is recorded and the sweep continues.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[usize],
) -> Result<Vec<SweepPoint>, HarnessError> {
    let mut points = Vec::new();
    if values.is_empty() {
        return Ok(points);
    }
    let methods = cfg.parsed_methods()?;
    let base = Setup::new(cfg)?;
    let fine_steps = match axis {
        SweepAxis::Tau => {
            if values.contains(&0) {
                return Err(HarnessError::Config(
                    "sweep: step counts must be positive".into(),
                ));
            }
            let l = values.iter().fold(1usize, |l, &v| l / gcd(l, v) * v);
            l * cfg.time.reference_factor
        }
        SweepAxis::H => cfg.time.steps * cfg.time.reference_factor,
    };
    if fine_steps > 100_000 {
        return Err(HarnessError::Config(format!(
            "sweep: reference would need {fine_steps} steps"
        )));
    }
    let reference = reference_trajectory(cfg, &base, fine_steps)?;

    for &value in values {
        let mut c = cfg.clone();
        let (param, stride) = match axis {
            SweepAxis::Tau => {
                c.time.steps = value;
                (cfg.time.t_final / value as f64, fine_steps / value.max(1))
            }
            SweepAxis::H => {
                c.grid.hinv = value;
                (1.0 / value as f64, cfg.time.reference_factor)
            }
        };
        let outcome = (|| -> Result<Vec<(String, [f64; 2], ErrorFlag)>, HarnessError> {
            c.validate()?;
            let setup = base.with_hinv(c.grid.hinv, c.grid.k_os)?;
            let sub = reference.subsample(stride);
            let averages: Vec<BlockAverages> = sub
                .states
                .iter()
                .map(|u| continuum_average(u, &setup.grid, &setup.partition, &setup.map))
                .collect::<Result<_, _>>()?;
            let up = build_upscaled(&c, &setup)?;
            let mut out = Vec::new();
            for &m in &methods {
                let traj = run_coarse(&c, &setup, &up, m)?;
                let errs = error_series(&averages, &up.model, &traj)?;
                let last = errs.last().copied().expect("initial step");
                out.push((m.tag().to_string(), last.e, last.flag()));
            }
            Ok(out)
        })();
        match outcome {
            Ok(rows) => {
                for (method, e, flag) in rows {
                    points.push(SweepPoint {
                        value,
                        param,
                        method,
                        e,
                        flag: flag.tag().into(),
                        rate: [None; 2],
                        failure: None,
                    })
                }
            }
            Err(err) => {
                for m in &methods {
                    points.push(SweepPoint {
                        value,
                        param,
                        method: m.tag().into(),
                        e: [f64::NAN; 2],
                        flag: "failed".into(),
                        rate: [None; 2],
                        failure: Some(err.to_string()),
                    });
                }
            }
        }
    }
    fill_rates(&mut points);
    Ok(points)
}

fn fill_rates(points: &mut [SweepPoint]) {
    for k in 0..points.len() {
        let prev = (0..k).rev().find(|&j| points[j].method == points[k].method);
        if let Some(j) = prev {
            let ratio = (points[j].param / points[k].param).ln();
            for i in 0..2 {
                let (a, b) = (points[j].e[i], points[k].e[i]);
                if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && ratio != 0.0 {
                    points[k].rate[i] = Some((a / b).ln() / ratio);
                }
            }
        }
    }
}

/// CSV `axis,value,param,method,e0,e1,flag,rate0,rate1`.
pub fn write_sweep_csv(
    axis: SweepAxis,
    points: &[SweepPoint],
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "axis,value,param,method,e0,e1,flag,rate0,rate1")?;
    let f = |v: f64| {
        if v.is_finite() {
            format!("{v:.10e}")
        } else {
            "nan".into()
        }
    };
    let r = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            axis.tag(),
            p.value,
            f(p.param),
            p.method,
            f(p.e[0]),
            f(p.e[1]),
            p.flag,
            r(p.rate[0]),
            r(p.rate[1])
        )?;
    }
    out.flush()?;
    Ok(())
}
