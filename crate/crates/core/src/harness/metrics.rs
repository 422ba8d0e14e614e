use serde::Serialize;

use super::HarnessError;
use crate::grid::{CoarsePartition, ContinuumMap, FineGrid};

/// Per block and continuum averages; `present[i][b]` is false where block
/// `b` has no cell of continuum `i` (the value is then 0 and ignored).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAverages {
    pub values: [Vec<f64>; 2],
    pub present: [Vec<bool>; 2],
}

/// `∫_{K∩Ω_i} v / |K∩Ω_i|` for every coarse block `K`, with the midpoint
/// rule on fine cells (the midpoint value of a bilinear field is the mean
/// of its four nodal values).
pub fn continuum_average(
    v: &[f64],
    grid: &FineGrid,
    partition: &CoarsePartition,
    map: &ContinuumMap,
) -> Result<BlockAverages, HarnessError> {
    if v.len() != grid.node_count() {
        return Err(HarnessError::Dimension {
            expected: grid.node_count(),
            got: v.len(),
        });
    }
    map.check_grid(grid)?;
    let nb = partition.block_count();
    let mut sum = [vec![0.0; nb], vec![0.0; nb]];
    let mut count = [vec![0usize; nb], vec![0usize; nb]];
    for b in 0..nb {
        for c in partition.block_rect(b).cells(grid) {
            let l = map.label(c) as usize;
            let mid: f64 = grid.cell_nodes(c).iter().map(|&p| v[p]).sum::<f64>() * 0.25;
            sum[l][b] += mid;
            count[l][b] += 1;
        }
    }
    let mut values = [vec![0.0; nb], vec![0.0; nb]];
    let mut present = [vec![false; nb], vec![false; nb]];
    for i in 0..2 {
        for b in 0..nb {
            if count[i][b] > 0 {
                values[i][b] = sum[i][b] / count[i][b] as f64;
                present[i][b] = true;
            }
        }
    }
    Ok(BlockAverages { values, present })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorFlag {
    Ok,
    /// Zero reference norm.
    Undefined,
    /// Non-finite solution or reference.
    NonFinite,
}

impl ErrorFlag {
    pub fn tag(self) -> &'static str {
        match self {
            ErrorFlag::Ok => "ok",
            ErrorFlag::Undefined => "undefined",
            ErrorFlag::NonFinite => "nonfinite",
        }
    }
}

/// `e_i = ‖Π_i u − U_i‖ / ‖Π_i u‖` over the blocks holding continuum `i`.
/// A flagged continuum has `e_i = NaN`; `flag` is the worst of the two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepError {
    pub e: [f64; 2],
    pub flags: [ErrorFlag; 2],
}

impl StepError {
    pub fn flag(&self) -> ErrorFlag {
        self.flags[0].max(self.flags[1])
    }

    pub fn nonfinite() -> Self {
        Self {
            e: [f64::NAN; 2],
            flags: [ErrorFlag::NonFinite; 2],
        }
    }
}

/// Relative error of coarse values `coarse[i][b]` (continuum `i` at the
/// center of block `b`) against reference block averages.
pub fn relative_error(
    reference: &BlockAverages,
    coarse: &[Vec<f64>; 2],
) -> Result<StepError, HarnessError> {
    let mut e = [f64::NAN; 2];
    let mut flags = [ErrorFlag::Ok; 2];
    for i in 0..2 {
        let nb = reference.values[i].len();
        if coarse[i].len() != nb {
            return Err(HarnessError::Dimension {
                expected: nb,
                got: coarse[i].len(),
            });
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for b in (0..nb).filter(|&b| reference.present[i][b]) {
            let r = reference.values[i][b];
            let d = r - coarse[i][b];
            num += d * d;
            den += r * r;
        }
        if !num.is_finite() || !den.is_finite() {
            flags[i] = ErrorFlag::NonFinite;
        } else if den == 0.0 {
            flags[i] = ErrorFlag::Undefined;
        } else {
            e[i] = (num / den).sqrt();
        }
    }
    Ok(StepError { e, flags })
}
