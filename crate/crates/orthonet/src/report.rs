//! Residual reports: named sup/RMS norms of a residual field compared against
//! a tolerance.
//!
//! Every verification routine in this crate reduces to "evaluate an identity
//! pointwise, collect the absolute residual, compare against a tolerance".
//! Masked nodes (stored as NaN) are excluded from the norms and counted; an
//! optional boundary collar is excluded so that one-sided finite-difference
//! stencils do not dominate the sup norm.

use serde::{Deserialize, Serialize};

use crate::grid::{FdOrder, GridSpec, ScalarField};

/// Width (in nodes) of the default boundary collar excluded from
/// finite-difference residual norms.
pub const DEFAULT_COLLAR: usize = 2;

/// Relative threshold under which a divisor is masked out (NaN) instead of
/// producing a spuriously large quotient.
pub const MASK_REL: f64 = 1e-6;

/// Default tolerance for a finite-difference residual: truncation error of the
/// second-order stencils dominates, with a floor for exact-arithmetic checks.
pub fn default_tolerance(h_max: f64, scale: f64) -> f64 {
    (5.0 * h_max * h_max * scale).max(1e-8)
}

/// Options shared by the residual checks: stencil order, boundary collar
/// width, and an optional explicit tolerance overriding the grid-aware
/// default `max(5 h² · scale, 1e-8)`.
#[derive(Clone, Copy, Debug)]
pub struct CheckOpts {
    pub order: FdOrder,
    pub collar: usize,
    pub tolerance: Option<f64>,
}

impl Default for CheckOpts {
    fn default() -> Self {
        CheckOpts {
            order: FdOrder::Two,
            collar: DEFAULT_COLLAR,
            tolerance: None,
        }
    }
}

impl CheckOpts {
    /// Explicit tolerance if set, otherwise the grid default for `scale`.
    pub fn tolerance_for(&self, grid: &GridSpec, scale: f64) -> f64 {
        self.tolerance
            .unwrap_or_else(|| default_tolerance(grid.h_max(), scale))
    }
}

/// Shape summary of the grid a report was evaluated on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n: Vec<usize>,
    pub spacing: Vec<f64>,
}

/// Named residual norms with a pass/fail verdict.
///
/// `pass` holds exactly when `sup <= tolerance`. `masked_fraction` is the
/// fraction of evaluated nodes that were masked (NaN) and therefore excluded
/// from the norms; it serializes only when nonzero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub sup: f64,
    pub rms: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub grid: GridSummary,
    pub collar_excluded: bool,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub masked_fraction: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl ResidualReport {
    /// Collects sup/RMS of `|samples|` against `tolerance`.
    ///
    /// NaN samples count as masked. An empty or fully masked sample set yields
    /// sup = rms = 0 with `masked_fraction` reflecting the masking; callers
    /// that need to treat a vacuous pass specially inspect that field.
    pub fn from_samples(
        name: impl Into<String>,
        samples: impl Iterator<Item = f64>,
        tolerance: f64,
        grid: GridSummary,
        collar_excluded: bool,
    ) -> Self {
        let mut sup = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut kept = 0usize;
        let mut masked = 0usize;
        for v in samples {
            if v.is_nan() {
                masked += 1;
                continue;
            }
            kept += 1;
            sup = sup.max(v.abs());
            sum_sq += v * v;
        }
        let rms = if kept > 0 {
            (sum_sq / kept as f64).sqrt()
        } else {
            0.0
        };
        let total = kept + masked;
        let masked_fraction = if total > 0 {
            masked as f64 / total as f64
        } else {
            0.0
        };
        ResidualReport {
            name: name.into(),
            sup,
            rms,
            tolerance,
            pass: sup <= tolerance,
            grid,
            collar_excluded,
            masked_fraction,
        }
    }

    /// Collects the report of a residual field, excluding a boundary collar of
    /// the given width on every face.
    pub fn from_field(
        name: impl Into<String>,
        field: &ScalarField,
        tolerance: f64,
        collar: usize,
    ) -> Self {
        let grid = field.grid();
        Self::from_samples(
            name,
            field.interior_values(collar),
            tolerance,
            grid.summary(),
            collar > 0,
        )
    }

    /// Retags the report with a new name, keeping the norms.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Convenience: sup of |field| over the interior, ignoring masked nodes.
/// Used as the scale factor in default tolerances.
pub fn field_scale(fields: &[&ScalarField], collar: usize) -> f64 {
    let mut s = 0.0f64;
    for f in fields {
        for v in f.interior_values(collar) {
            if !v.is_nan() {
                s = s.max(v.abs());
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sup_rms_and_masking() {
        let grid = GridSummary {
            n: vec![2, 1, 1],
            spacing: vec![1.0, 1.0, 1.0],
        };
        let r = ResidualReport::from_samples(
            "demo",
            [3.0, -4.0, f64::NAN].into_iter(),
            5.0,
            grid,
            false,
        );
        assert_eq!(r.sup, 4.0);
        assert!((r.rms - (12.5f64).sqrt()).abs() < 1e-15);
        assert!(r.pass);
        assert!((r.masked_fraction - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn default_tolerance_has_floor() {
        assert_eq!(default_tolerance(1e-6, 1.0), 1e-8);
        let h = 0.03125;
        assert!((default_tolerance(h, 2.0) - 5.0 * h * h * 2.0).abs() < 1e-18);
    }

    #[test]
    fn json_shape_is_stable() {
        let r = ResidualReport {
            name: "x".into(),
            sup: 0.0,
            rms: 0.0,
            tolerance: 1e-8,
            pass: true,
            grid: GridSummary {
                n: vec![5, 5, 5],
                spacing: vec![0.25, 0.25, 0.25],
            },
            collar_excluded: true,
            masked_fraction: 0.0,
        };
        let s = serde_json::to_string(&r).unwrap();
        // masked_fraction is suppressed when zero so the schema keeps its
        // seven documented keys.
        assert!(!s.contains("masked_fraction"));
        assert!(s.starts_with("{\"name\""));
    }
}
