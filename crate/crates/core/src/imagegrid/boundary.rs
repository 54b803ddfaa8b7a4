use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DeblurError, Result};

/// How pixels outside the field of view are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Zero,
    Periodic,
    /// Half-sample mirror: `x[-1] = x[0]`, `x[-2] = x[1]`, ...
    #[default]
    Reflexive,
}

impl BoundaryCondition {
    /// Maps an extended index to the source index it reads from, or `None`
    /// when the extension is zero.
    pub(crate) fn source(self, idx: isize, len: usize) -> Option<usize> {
        let len_i = len as isize;
        match self {
            BoundaryCondition::Zero => (0..len_i).contains(&idx).then_some(idx as usize),
            BoundaryCondition::Periodic => Some(idx.rem_euclid(len_i) as usize),
            BoundaryCondition::Reflexive => {
                let t = idx.rem_euclid(2 * len_i);
                Some(if t < len_i { t } else { 2 * len_i - 1 - t } as usize)
            }
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::Zero => "zero",
            BoundaryCondition::Periodic => "periodic",
            BoundaryCondition::Reflexive => "reflexive",
        })
    }
}

impl FromStr for BoundaryCondition {
    type Err = DeblurError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(BoundaryCondition::Zero),
            "periodic" => Ok(BoundaryCondition::Periodic),
            "reflexive" => Ok(BoundaryCondition::Reflexive),
            other => Err(invalid(format!("unknown boundary condition '{other}'"))),
        }
    }
}

/// Extends `x` by `margin` pixels on every side according to `bc`.
pub fn pad(x: &DMatrix<f64>, bc: BoundaryCondition, margin: usize) -> Result<DMatrix<f64>> {
    let (m, n) = x.shape();
    if bc == BoundaryCondition::Reflexive && margin >= m.min(n) && margin > 0 {
        return Err(invalid(format!(
            "reflexive margin {margin} must be below min(m, n) = {}",
            m.min(n)
        )));
    }
    let r = margin as isize;
    Ok(DMatrix::from_fn(m + 2 * margin, n + 2 * margin, |i, j| {
        match (
            bc.source(i as isize - r, m),
            bc.source(j as isize - r, n),
        ) {
            (Some(si), Some(sj)) => x[(si, sj)],
            _ => 0.0,
        }
    }))
}
