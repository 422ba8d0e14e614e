use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::grid::{build_periodic_medium, nonperiodic_medium, ContinuumMap, FineGrid, UnitPattern};
use crate::timestep::{Method, PicardOptions};

/// One experiment, read from TOML. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub medium: MediumSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub source: SourceSpec,
    pub initial: InitialSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    /// `periodic`, `nonperiodic`, `file` or `uniform`.
    pub kind: String,
    /// Microscale `ε` in `κ₀ = ε/10⁵`, `κ₁ = 1/(100ε)`.
    pub eps: f64,
    /// Periods per side for `periodic`; defaults to `round(1/ε)`.
    #[serde(default)]
    pub eps_inv: Option<usize>,
    /// Medium file for `file`, relative to the config file.
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Tile size in fine cells for `nonperiodic`.
    #[serde(default)]
    pub tile: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Continuum label for `uniform`.
    #[serde(default)]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Fine cells per side.
    pub n: usize,
    /// Coarse blocks per side.
    pub hinv: usize,
    #[serde(default = "default_k_os")]
    pub k_os: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub alpha: f64,
    pub t_final: f64,
    pub steps: usize,
    /// Reference steps per coarse step.
    #[serde(default = "default_reference_factor")]
    pub reference_factor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// `linear` (`f = g`), `semilinear` (`f = u − u³ + g`) or `zero`, with
    /// `g = amplitude · exp(−width |x − center|²)`.
    pub kind: String,
    #[serde(default = "default_center")]
    pub center: [f64; 2],
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// `sine` (`a sin(2πx) sin(πy)`), `bubble` (`a x(1−x)y(1−y)`) or `zero`.
    pub kind: String,
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Relative to the working directory.
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub snapshots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_methods() -> Vec<String> {
    vec!["ei".into(), "l1-implicit".into(), "l1-explicit".into()]
}
fn default_k_os() -> usize {
    1
}
fn default_reference_factor() -> usize {
    5
}
fn default_center() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_width() -> f64 {
    50.0
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_picard_tol() -> f64 {
    1e-10
}
fn default_picard_max() -> usize {
    50
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            snapshots: true,
        }
    }
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            picard_tol: default_picard_tol(),
            picard_max_iter: default_picard_max(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    Zero,
    Linear,
    Semilinear,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. A relative medium file path is
    /// resolved against the directory of the config.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(f) = cfg.medium.file.as_mut() {
            if f.is_relative() {
                *f = path.parent().unwrap_or(Path::new(".")).join(&*f);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let t = &self.time;
        if !(t.t_final > 0.0) || !t.t_final.is_finite() {
            return bad(format!("time.t_final = {} must be positive", t.t_final));
        }
        if t.steps == 0 {
            return bad("time.steps must be at least 1".into());
        }
        if !(t.alpha > 0.0 && t.alpha <= 1.0) {
            return bad(format!("time.alpha = {} outside (0, 1]", t.alpha));
        }
        if t.reference_factor == 0 {
            return bad("time.reference_factor must be at least 1".into());
        }
        let g = &self.grid;
        if g.n == 0 || g.hinv == 0 || g.n % g.hinv != 0 {
            return bad(format!(
                "grid.hinv = {} must divide grid.n = {}",
                g.hinv, g.n
            ));
        }
        let m = &self.medium;
        if !(m.eps > 0.0 && m.eps < 1.0) {
            return bad(format!("medium.eps = {} outside (0, 1)", m.eps));
        }
        match m.kind.as_str() {
            "periodic" => {
                let e = self.eps_inv();
                if e == 0 || g.n % e != 0 {
                    return bad(format!("medium.eps_inv = {e} must divide grid.n = {}", g.n));
                }
            }
            "nonperiodic" => {
                if m.tile.is_none() {
                    return bad("medium.tile is required for kind = \"nonperiodic\"".into());
                }
            }
            "file" => {
                if m.file.is_none() {
                    return bad("medium.file is required for kind = \"file\"".into());
                }
            }
            "uniform" => {
                if m.label.unwrap_or(1) > 1 {
                    return bad("medium.label must be 0 or 1".into());
                }
            }
            k => return bad(format!("unknown medium.kind {k:?}")),
        }
        self.source_kind()?;
        if !["sine", "bubble", "zero"].contains(&self.initial.kind.as_str()) {
            return bad(format!("unknown initial.kind {:?}", self.initial.kind));
        }
        self.parsed_methods()?;
        let s = &self.solver;
        if !(s.picard_tol > 0.0) || s.picard_max_iter == 0 {
            return bad("solver.picard_tol and solver.picard_max_iter must be positive".into());
        }
        Ok(())
    }

    pub fn eps_inv(&self) -> usize {
        self.medium
            .eps_inv
            .unwrap_or_else(|| (1.0 / self.medium.eps).round() as usize)
    }

    pub fn tau(&self) -> f64 {
        self.time.t_final / self.time.steps as f64
    }

    pub fn source_kind(&self) -> Result<SourceKind, HarnessError> {
        match self.source.kind.as_str() {
            "zero" => Ok(SourceKind::Zero),
            "linear" => Ok(SourceKind::Linear),
            "semilinear" => Ok(SourceKind::Semilinear),
            k => Err(HarnessError::Config(format!("unknown source.kind {k:?}"))),
        }
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>, HarnessError> {
        let mut out: Vec<Method> = Vec::new();
        for m in &self.methods {
            let method = Method::from_tag(m)
                .ok_or_else(|| HarnessError::Config(format!("unknown method {m:?}")))?;
            if out.contains(&method) {
                return Err(HarnessError::Config(format!("method {m:?} listed twice")));
            }
            out.push(method);
        }
        Ok(out)
    }

    pub fn picard(&self) -> PicardOptions {
        PicardOptions {
            tol: self.solver.picard_tol,
            max_iter: self.solver.picard_max_iter,
        }
    }

    /// The smooth part `g` of the source (zero for `kind = "zero"`).
    pub fn source_fn(&self) -> impl Fn(f64, f64) -> f64 + Sync + Clone {
        let s = self.source.clone();
        let on = s.kind != "zero";
        move |x: f64, y: f64| {
            if !on {
                return 0.0;
            }
            let dx = x - s.center[0];
            let dy = y - s.center[1];
            s.amplitude * (-s.width * (dx * dx + dy * dy)).exp()
        }
    }

    pub fn initial_fn(&self) -> impl Fn(f64, f64) -> f64 + Sync + Clone {
        let kind = self.initial.kind.clone();
        let a = self.initial.amplitude;
        move |x: f64, y: f64| match kind.as_str() {
            "sine" => a * (2.0 * std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin(),
            "bubble" => a * x * (1.0 - x) * y * (1.0 - y),
            _ => 0.0,
        }
    }

    /// Continuum map on the fine grid.
    pub fn build_medium(&self, grid: &FineGrid) -> Result<ContinuumMap, HarnessError> {
        let m = &self.medium;
        let map = match m.kind.as_str() {
            "periodic" => {
                let e = self.eps_inv();
                build_periodic_medium(grid, e, &UnitPattern::centered_square(grid.n() / e))?
            }
            "nonperiodic" => nonperiodic_medium(grid, m.tile.unwrap_or(10), m.seed.unwrap_or(0))?,
            "file" => {
                let path = m
                    .file
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("medium.file missing".into()))?;
                ContinuumMap::load(path, grid)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
            }
            _ => ContinuumMap::uniform(grid, m.label.unwrap_or(1))?,
        };
        Ok(map)
    }
}
