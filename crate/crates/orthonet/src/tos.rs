//! Core representation of a triply orthogonal system and the fundamental
//! residual checks: orthogonality, the frame system, Lamé's equations, point
//! equations, the Minkowski trace, inversion, and frame integration.
//!
//! A system is the sampled data of an immersion `f : U → ℝ³` with orthogonal
//! coordinate surfaces, carried by
//!
//! - signed Lamé coefficients `H_i` with `∂_i f = H_i N_i`,
//! - unit normals `N_i` of the three coordinate-surface families,
//! - rotational coefficients `β_ij = (1/H_i) ∂_i H_j` for `i ≠ j`,
//! - the fixed signature `ε = (1, 1, −1)` of the trace form
//!   `χ = H₁² + H₂² − H₃²`.
//!
//! Transforms may produce signed or vanishing `H_i`; degenerate families are
//! flagged rather than rejected, and all residual formulas are evaluated with
//! signed coefficients.

use crate::error::{Error, Result};
use crate::grid::{FdOrder, GridSpec, OneForm, ScalarField, VectorField};
use crate::numerics::{det3, dot3, integrate_linear, norm3, orthonormalize3};
use crate::report::{field_scale, CheckOpts, ResidualReport, MASK_REL};

/// Signature of the Minkowski-type trace form: `ε = (1, 1, −1)`.
pub const EPSILON: [f64; 3] = [1.0, 1.0, -1.0];

/// The two axes following `i` cyclically: `0 → (1,2), 1 → (2,0), 2 → (0,1)`.
#[inline]
pub(crate) fn cyclic(i: usize) -> (usize, usize) {
    ((i + 1) % 3, (i + 2) % 3)
}

/// The complement of axis `k` as a sorted pair.
#[inline]
pub(crate) fn complement(k: usize) -> (usize, usize) {
    match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// The six rotational coefficients `β_ij = (1/H_i) ∂_i H_j`, `i ≠ j`,
/// stored as scalar fields (diagonal slots unused and kept at zero).
#[derive(Clone, Debug)]
pub struct Rotations {
    grid: GridSpec,
    fields: [[ScalarField; 3]; 3],
}

impl Rotations {
    /// Computes `β_ij = ∂_i H_j / H_i` by finite differences, masking nodes
    /// where `|H_i|` falls below `MASK_REL` times its sup.
    pub fn from_lame(h: &[ScalarField; 3], order: FdOrder) -> Result<Rotations> {
        let grid = h[0].grid();
        let zero = ScalarField::zeros(grid);
        let mut fields: [[ScalarField; 3]; 3] =
            std::array::from_fn(|_| std::array::from_fn(|_| zero.clone()));
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    fields[i][j] = h[j].derivative(i, order)?.div_masked(&h[i]);
                }
            }
        }
        Ok(Rotations { grid, fields })
    }

    /// Builds the coefficients from a closed-form expression `β(i, j, x)`.
    pub fn from_fn(grid: GridSpec, beta: impl Fn(usize, usize, [f64; 3]) -> f64) -> Rotations {
        let zero = ScalarField::zeros(grid);
        let mut fields: [[ScalarField; 3]; 3] =
            std::array::from_fn(|_| std::array::from_fn(|_| zero.clone()));
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    fields[i][j] = ScalarField::from_fn(grid, |p| beta(i, j, p));
                }
            }
        }
        Rotations { grid, fields }
    }

    /// All rotational coefficients zero (flat systems).
    pub fn zeros(grid: GridSpec) -> Rotations {
        Self::from_fn(grid, |_, _, _| 0.0)
    }

    /// The field `β_ij`; requires `i ≠ j`.
    pub fn beta(&self, i: usize, j: usize) -> &ScalarField {
        assert!(i < 3 && j < 3 && i != j, "β_ij needs distinct axes, got ({i},{j})");
        &self.fields[i][j]
    }

    /// Replaces one coefficient field.
    pub fn set_beta(&mut self, i: usize, j: usize, field: ScalarField) {
        assert!(i < 3 && j < 3 && i != j, "β_ij needs distinct axes, got ({i},{j})");
        assert!(field.grid() == self.grid, "β field on a different grid");
        self.fields[i][j] = field;
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Sup of |β_ij| over all off-diagonal fields (masked nodes ignored).
    pub fn scale(&self) -> f64 {
        let mut s = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    s = s.max(self.fields[i][j].sup_abs());
                }
            }
        }
        s
    }
}

/// Integration anchor recording where a transformed immersion was seeded;
/// needed when a one-parameter family is re-integrated at another parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub node: [usize; 3],
    pub point: [f64; 3],
}

/// A sampled triply orthogonal system.
#[derive(Clone, Debug)]
pub struct OrthogonalSystem {
    pub grid: GridSpec,
    /// The immersion `f`.
    pub f: VectorField,
    /// Signed Lamé coefficients `(H₁, H₂, H₃)`.
    pub h: [ScalarField; 3],
    /// Unit normals `(N₁, N₂, N₃)` of the coordinate-surface families.
    pub n: [VectorField; 3],
    /// Rotational coefficients.
    pub beta: Rotations,
    /// `σ = sign det(N₁, N₂, N₃)`; `det(∂f) = σ·H₁H₂H₃`. Inversions flip it.
    pub orientation: f64,
    /// Chart name/parameters or transform lineage, for reports.
    pub provenance: String,
    /// `degenerate[i]` marks a family with `H_i ≡ 0` (a curve or point image).
    pub degenerate: [bool; 3],
    /// Where the immersion was anchored, when built by integration.
    pub anchor: Option<Anchor>,
}

/// Residuals of the first and second systems of Lamé's equations.
#[derive(Clone, Debug)]
pub struct LameReport {
    pub first: ResidualReport,
    pub second: ResidualReport,
}

impl LameReport {
    pub fn pass(&self) -> bool {
        self.first.pass && self.second.pass
    }
}

/// Outcome of the trace classification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SystemClass {
    /// `χ ≡ 0`.
    Guichard,
    /// `χ ≡ c` for the reported nonzero constant.
    ConstantChi(f64),
    /// `χ / |f|² ≡ α²` for the reported positive constant.
    AlphaSquared(f64),
    Other,
}

impl std::fmt::Display for SystemClass {
    fn fmt(&self, w: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemClass::Guichard => write!(w, "guichard"),
            SystemClass::ConstantChi(c) => write!(w, "constant_chi({c})"),
            SystemClass::AlphaSquared(a2) => write!(w, "alpha_squared({a2})"),
            SystemClass::Other => write!(w, "other"),
        }
    }
}

impl OrthogonalSystem {
    /// Assembles a system from its constituent fields, validating that all
    /// fields share one grid and recording orientation and degeneracy flags.
    pub fn assemble(
        f: VectorField,
        h: [ScalarField; 3],
        n: [VectorField; 3],
        beta: Rotations,
        provenance: impl Into<String>,
    ) -> Result<OrthogonalSystem> {
        let grid = f.grid();
        for field in &h {
            if field.grid() != grid {
                return Err(Error::GridMismatch("H field grid differs from f".into()));
            }
        }
        for field in &n {
            if field.grid() != grid {
                return Err(Error::GridMismatch("N field grid differs from f".into()));
            }
        }
        if beta.grid() != grid {
            return Err(Error::GridMismatch("β grid differs from f".into()));
        }
        let c = grid.center_node();
        let det = det3(&[n[0].at(c), n[1].at(c), n[2].at(c)]);
        let orientation = if det < 0.0 { -1.0 } else { 1.0 };
        let scale = h[0].sup_abs().max(h[1].sup_abs()).max(h[2].sup_abs());
        let degenerate = std::array::from_fn(|i| h[i].sup_abs() <= 1e-12 * scale);
        Ok(OrthogonalSystem {
            grid,
            f,
            h,
            n,
            beta,
            orientation,
            provenance: provenance.into(),
            degenerate,
            anchor: None,
        })
    }

    /// Recomputes `β_ij = (1/H_i) ∂_i H_j` from the stored Lamé coefficients
    /// (the stored `beta` may come from a closed form instead).
    pub fn rotational_coefficients(&self, order: FdOrder) -> Result<Rotations> {
        Rotations::from_lame(&self.h, order)
    }

    /// The trace field `χ = H₁² + H₂² − H₃²`.
    pub fn chi_trace(&self) -> ScalarField {
        let s0 = self.h[0].mul(&self.h[0]);
        let s1 = self.h[1].mul(&self.h[1]);
        let s2 = self.h[2].mul(&self.h[2]);
        s0.add(&s1).sub(&s2)
    }

    /// Classifies the system by its trace: Guichard (`χ ≡ 0`), constant-χ,
    /// `α²|f|²`-system (`χ/|f|²` a positive constant), or other. The fit
    /// tolerance follows the grid default unless overridden, since systems
    /// produced by numerical integration carry O(h²) errors in `χ`.
    pub fn classify(&self, opts: CheckOpts) -> SystemClass {
        let chi = self.chi_trace();
        let scale = self
            .h
            .iter()
            .fold(0.0f64, |m, f| m.max(f.sup_abs()))
            .powi(2);
        let tol = opts.tolerance_for(&self.grid, scale);
        if chi.sup_abs() <= tol {
            return SystemClass::Guichard;
        }
        let mean = chi.mean();
        if chi.map(|v| v - mean).sup_abs() <= tol {
            return SystemClass::ConstantChi(mean);
        }
        let fsq = self.f.norm_sq();
        let ratio = chi.div_masked(&fsq);
        let rm = ratio.mean();
        if rm.is_finite() {
            let fsq_min = fsq
                .values()
                .iter()
                .filter(|v| !v.is_nan())
                .fold(f64::INFINITY, |m, &v| m.min(v.abs()));
            let rtol = if fsq_min > 0.0 && fsq_min.is_finite() {
                tol / fsq_min
            } else {
                tol
            };
            if ratio.map(|v| v - rm).sup_abs() <= rtol && rm > 0.0 {
                return SystemClass::AlphaSquared(rm);
            }
        }
        SystemClass::Other
    }

    /// Residual of mutual orthonormality of the normals:
    /// pointwise max over `i ≤ j` of `|N_i·N_j − δ_ij|`.
    pub fn check_orthogonality(&self, opts: CheckOpts) -> ResidualReport {
        let mut worst = ScalarField::zeros(self.grid);
        for i in 0..3 {
            for j in i..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                let d = self.n[i].dot(&self.n[j]).map(|v| v - want);
                worst = worst.zip(&d, |m, v| m.max(v.abs()));
            }
        }
        let tol = opts.tolerance_for(&self.grid, 1.0);
        ResidualReport::from_field("orthogonality", &worst, tol, opts.collar)
    }

    /// Residual of the defining relation `∂_i f = H_i N_i`, max over axes
    /// and components.
    pub fn check_parametrization(&self, opts: CheckOpts) -> Result<ResidualReport> {
        let mut worst = ScalarField::zeros(self.grid);
        for i in 0..3 {
            let d = self.f.derivative(i, opts.order)?;
            let expected = VectorField::zeros(self.grid).add_scaled(&self.h[i], &self.n[i]);
            let r = d.sub(&expected);
            for c in 0..3 {
                worst = worst.zip(&r.component(c), |m, v| m.max(v.abs()));
            }
        }
        let scale = field_scale(&[&self.h[0], &self.h[1], &self.h[2]], opts.collar);
        let tol = opts.tolerance_for(&self.grid, scale);
        Ok(ResidualReport::from_field(
            "parametrization",
            &worst,
            tol,
            opts.collar,
        ))
    }

    /// Residual of the frame system
    /// `∂_j N_i = β_ij N_j (i ≠ j)` and `∂_i N_i = −β_ji N_j − β_ki N_k`,
    /// max over equations and components.
    pub fn check_frame(&self, opts: CheckOpts) -> Result<ResidualReport> {
        let mut worst = ScalarField::zeros(self.grid);
        for i in 0..3 {
            for j in 0..3 {
                let d = self.n[i].derivative(j, opts.order)?;
                let r = if i != j {
                    d.sub(&VectorField::zeros(self.grid).add_scaled(self.beta.beta(i, j), &self.n[j]))
                } else {
                    let (a, b) = complement(i);
                    d.add(&VectorField::zeros(self.grid).add_scaled(self.beta.beta(a, i), &self.n[a]))
                        .add(&VectorField::zeros(self.grid).add_scaled(self.beta.beta(b, i), &self.n[b]))
                };
                for c in 0..3 {
                    worst = worst.zip(&r.component(c), |m, v| m.max(v.abs()));
                }
            }
        }
        let tol = opts.tolerance_for(&self.grid, self.beta.scale().max(1.0));
        Ok(ResidualReport::from_field("frame", &worst, tol, opts.collar))
    }

    /// Residual of `det(∂_1 f, ∂_2 f, ∂_3 f) = σ·H₁H₂H₃`, where `σ` is the
    /// stored frame orientation (−1 for systems obtained by an inversion).
    pub fn check_determinant(&self, opts: CheckOpts) -> Result<ResidualReport> {
        let d = [
            self.f.derivative(0, opts.order)?,
            self.f.derivative(1, opts.order)?,
            self.f.derivative(2, opts.order)?,
        ];
        let mut res = ScalarField::zeros(self.grid);
        let product = self.h[0].mul(&self.h[1]).mul(&self.h[2]);
        self.grid.for_each_node(|node, _| {
            let cols = [d[0].at(node), d[1].at(node), d[2].at(node)];
            let m = [
                [cols[0][0], cols[1][0], cols[2][0]],
                [cols[0][1], cols[1][1], cols[2][1]],
                [cols[0][2], cols[1][2], cols[2][2]],
            ];
            res.set(node, det3(&m) - self.orientation * product.at(node));
        });
        let tol = opts.tolerance_for(&self.grid, product.sup_abs());
        Ok(ResidualReport::from_field(
            "determinant",
            &res,
            tol,
            opts.collar,
        ))
    }

    /// Residuals of the first and second systems of Lamé's equations for the
    /// stored `H` fields.
    pub fn check_lame(&self, opts: CheckOpts) -> Result<LameReport> {
        check_lame_fields(&self.h, opts)
    }

    /// Residual of the point equation of the `(i,j)` surface family applied
    /// to the immersion components:
    /// `∂_i∂_j f = ∂_j ln H_i ∂_i f + ∂_i ln H_j ∂_j f`,
    /// evaluated in the multiplied-through form (no division by `H`).
    pub fn check_point_equation(&self, pair: (usize, usize), opts: CheckOpts) -> Result<ResidualReport> {
        let (i, j) = validate_pair(pair)?;
        let mut worst = ScalarField::zeros(self.grid);
        let mut scale = 0.0f64;
        for c in 0..3 {
            let (r, s) = point_equation_residual(&self.h, &self.f.component(c), i, j, opts)?;
            scale = scale.max(s);
            worst = worst.zip(&r, |m, v| m.max(v.abs()));
        }
        let tol = opts.tolerance_for(&self.grid, scale);
        let name = format!("point_equation_f_{}{}", i + 1, j + 1);
        Ok(ResidualReport::from_field(name, &worst, tol, opts.collar))
    }

    /// Same point equation applied to an arbitrary scalar solution candidate.
    pub fn check_point_equation_scalar(
        &self,
        theta: &ScalarField,
        pair: (usize, usize),
        opts: CheckOpts,
    ) -> Result<ResidualReport> {
        let (i, j) = validate_pair(pair)?;
        if theta.grid() != self.grid {
            return Err(Error::GridMismatch("θ grid differs from system".into()));
        }
        let (r, scale) = point_equation_residual(&self.h, theta, i, j, opts)?;
        let tol = opts.tolerance_for(&self.grid, scale);
        let name = format!("point_equation_theta_{}{}", i + 1, j + 1);
        Ok(ResidualReport::from_field(name, &r, tol, opts.collar))
    }

    /// Inversion `f ↦ f/|f|²`: Lamé coefficients scale by `1/|f|²` (signs
    /// kept), normals reflect in the radial direction, and the rotational
    /// coefficients pick up `−2H_j(f·N_i)/|f|²`. All pointwise and exactly
    /// involutive; requires `|f|` bounded away from zero.
    pub fn invert(&self) -> Result<OrthogonalSystem> {
        let fsq = self.f.norm_sq();
        let floor = MASK_REL * fsq.sup_abs();
        let mut bad: Option<([usize; 3], f64)> = None;
        self.grid.for_each_node(|node, _| {
            let v = fsq.at(node);
            if v < floor && bad.is_none() {
                bad = Some((node, v));
            }
        });
        if let Some((node, value)) = bad {
            return Err(Error::SmallDivisor {
                what: "|f|² (inversion center meets the image)",
                node,
                value,
            });
        }
        let inv = fsq.map(|v| 1.0 / v);
        let f_new = VectorField::zeros(self.grid).add_scaled(&inv, &self.f);
        let h_new: [ScalarField; 3] = std::array::from_fn(|i| self.h[i].mul(&inv));
        let mut radial: [Option<ScalarField>; 3] = [None, None, None];
        let n_new: [VectorField; 3] = std::array::from_fn(|i| {
            let t = self.n[i].dot(&self.f);
            let coef = t.mul(&inv).scale(-2.0);
            let reflected = self.n[i].add_scaled(&coef, &self.f);
            radial[i] = Some(t);
            reflected
        });
        let mut beta_new = Rotations::zeros(self.grid);
        for i in 0..3 {
            let t_i = radial[i].as_ref().expect("filled above");
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let shift = h_new[j].mul(t_i).scale(2.0);
                beta_new.set_beta(i, j, self.beta.beta(i, j).sub(&shift));
            }
        }
        let mut out = OrthogonalSystem::assemble(
            f_new,
            h_new,
            n_new,
            beta_new,
            format!("invert({})", self.provenance),
        )?;
        out.orientation = -self.orientation;
        out.degenerate = self.degenerate;
        Ok(out)
    }
}

fn validate_pair(pair: (usize, usize)) -> Result<(usize, usize)> {
    let (i, j) = pair;
    if i < 3 && j < 3 && i != j {
        Ok((i, j))
    } else {
        Err(Error::Precondition(format!(
            "point equation needs two distinct axes < 3, got ({i},{j})"
        )))
    }
}

/// Multiplied-through point-equation residual
/// `H_iH_j ∂_i∂_jθ − H_j(∂_jH_i)(∂_iθ) − H_i(∂_iH_j)(∂_jθ)` with the scale of
/// its largest term (for tolerance selection).
fn point_equation_residual(
    h: &[ScalarField; 3],
    theta: &ScalarField,
    i: usize,
    j: usize,
    opts: CheckOpts,
) -> Result<(ScalarField, f64)> {
    let dti = theta.derivative(i, opts.order)?;
    let dtj = theta.derivative(j, opts.order)?;
    let mixed = dti.derivative(j, opts.order)?;
    let t1 = h[i].mul(&h[j]).mul(&mixed);
    let t2 = h[j].mul(&h[i].derivative(j, opts.order)?).mul(&dti);
    let t3 = h[i].mul(&h[j].derivative(i, opts.order)?).mul(&dtj);
    let scale = field_scale(&[&t1, &t2, &t3], opts.collar);
    Ok((t1.sub(&t2).sub(&t3), scale))
}

/// Residuals of Lamé's equations for a coefficient triple, independent of any
/// assembled system.
///
/// First system, for each cycle `(i,j,k)` (multiplied through by `H_iH_j`):
/// `H_iH_j ∂_i∂_j H_k − H_j(∂_jH_i)(∂_iH_k) − H_i(∂_iH_j)(∂_jH_k)`.
/// Second system, for each pair `(i,j)` with complement `k` (as stated, with
/// small-`|H|` nodes masked):
/// `(1/H_k²)(∂_kH_i)(∂_kH_j) + ∂_j{(1/H_j)∂_jH_i} + ∂_i{(1/H_i)∂_iH_j}`.
pub fn check_lame_fields(h: &[ScalarField; 3], opts: CheckOpts) -> Result<LameReport> {
    let grid = h[0].grid();
    let mut first = ScalarField::zeros(grid);
    let mut first_scale = 0.0f64;
    for k in 0..3 {
        let (i, j) = complement(k);
        let mixed = h[k].derivative(i, opts.order)?.derivative(j, opts.order)?;
        let t1 = h[i].mul(&h[j]).mul(&mixed);
        let t2 = h[j]
            .mul(&h[i].derivative(j, opts.order)?)
            .mul(&h[k].derivative(i, opts.order)?);
        let t3 = h[i]
            .mul(&h[j].derivative(i, opts.order)?)
            .mul(&h[k].derivative(j, opts.order)?);
        first_scale = first_scale.max(field_scale(&[&t1, &t2, &t3], opts.collar));
        let r = t1.sub(&t2).sub(&t3);
        first = first.zip(&r, |m, v| m.max(v.abs()));
    }
    let mut second = ScalarField::zeros(grid);
    let mut second_scale = 0.0f64;
    for k in 0..3 {
        let (i, j) = complement(k);
        let hk_sq = h[k].mul(&h[k]);
        // 1/H_k² is a factor of the residual and multiplies its truncation
        // error, so it joins the tolerance scale alongside the terms.
        let inv = ScalarField::constant(grid, 1.0).div_masked(&hk_sq);
        let t1 = h[i]
            .derivative(k, opts.order)?
            .mul(&h[j].derivative(k, opts.order)?)
            .mul(&inv);
        let t2 = h[i]
            .derivative(j, opts.order)?
            .div_masked(&h[j])
            .derivative(j, opts.order)?;
        let t3 = h[j]
            .derivative(i, opts.order)?
            .div_masked(&h[i])
            .derivative(i, opts.order)?;
        second_scale = second_scale.max(field_scale(&[&t1, &t2, &t3, &inv], opts.collar));
        let r = t1.add(&t2).add(&t3);
        second = second.zip(&r, |m, v| m.max(v.abs()));
    }
    let first_tol = opts.tolerance_for(&grid, first_scale);
    let second_tol = opts.tolerance_for(&grid, second_scale);
    Ok(LameReport {
        first: ResidualReport::from_field("lame_first", &first, first_tol, opts.collar),
        second: ResidualReport::from_field("lame_second", &second, second_tol, opts.collar),
    })
}

/// Builds a system from an immersion alone: `H_i := |∂_i f| > 0`,
/// `N_i := ∂_i f / H_i`, `β` recomputed from the resulting `H`.
///
/// Fails on any node where the finite-difference Jacobian degenerates; the
/// attached orthogonality report is a warning channel, not a failure.
pub fn build_from_parametrization(
    f: &VectorField,
    opts: CheckOpts,
) -> Result<(OrthogonalSystem, ResidualReport)> {
    let grid = f.grid();
    let d = [
        f.derivative(0, opts.order)?,
        f.derivative(1, opts.order)?,
        f.derivative(2, opts.order)?,
    ];
    let mut det_min: Option<([usize; 3], f64)> = None;
    let mut det_sup = 0.0f64;
    grid.for_each_node(|node, _| {
        let m = [d[0].at(node), d[1].at(node), d[2].at(node)];
        let det = det3(&m).abs();
        det_sup = det_sup.max(det);
        if det_min.is_none_or(|(_, v)| det < v) {
            det_min = Some((node, det));
        }
    });
    if let Some((node, det)) = det_min {
        // Absolute floor so an identically singular map (det_sup = 0) is
        // still rejected rather than slipping past the relative test.
        if det < (MASK_REL * det_sup).max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateJacobian { node, det });
        }
    }
    let mut h: [ScalarField; 3] = std::array::from_fn(|_| ScalarField::zeros(grid));
    let mut n: [VectorField; 3] = std::array::from_fn(|_| VectorField::zeros(grid));
    for i in 0..3 {
        let mut hi = ScalarField::zeros(grid);
        let mut ni = VectorField::zeros(grid);
        grid.for_each_node(|node, _| {
            let v = d[i].at(node);
            let len = norm3(v);
            hi.set(node, len);
            ni.set(node, [v[0] / len, v[1] / len, v[2] / len]);
        });
        h[i] = hi;
        n[i] = ni;
    }
    let beta = Rotations::from_lame(&h, opts.order)?;
    let system = OrthogonalSystem::assemble(f.clone(), h, n, beta, "parametrization")?;
    let orthogonality = system.check_orthogonality(opts);
    Ok((system, orthogonality))
}

/// Result of [`integrate_frame`]: the reconstructed system plus the
/// diagnostics that separate integrator drift from genuine data defects.
#[derive(Clone, Debug)]
pub struct FrameIntegration {
    pub system: OrthogonalSystem,
    /// Orthonormality defect of the *unprojected* frame march; large values
    /// mean the integrator step is too coarse for the coefficients.
    pub orthonormality: ResidualReport,
    /// Node where the unprojected defect peaks.
    pub worst_defect_node: [usize; 3],
    /// Mismatch between sweeping axes in order (1,2,3) and (3,2,1); residual
    /// above tolerance signals that the `H` fields violate Lamé's equations
    /// (the frame system is then not integrable).
    pub path_dependence: ResidualReport,
}

/// Recovers a system from Lamé coefficients alone: solves the linear frame
/// system `∂_j N_i = β_ij N_j`, `∂_i N_i = −β_ji N_j − β_ki N_k` by a
/// fourth-order march from an orthonormal seed frame at `base_node`
/// (re-orthonormalizing after every step), then integrates
/// `df = Σ H_a N_a dx_a` componentwise with `f(base_node) = 0`.
///
/// The construction determines the system up to a Euclidean motion, so
/// comparisons against a source system should use the induced metric.
pub fn integrate_frame(
    h: &[ScalarField; 3],
    seed_frame: [[f64; 3]; 3],
    base_node: [usize; 3],
    opts: CheckOpts,
) -> Result<FrameIntegration> {
    let grid = h[0].grid();
    if h[1].grid() != grid || h[2].grid() != grid {
        return Err(Error::GridMismatch("H fields on different grids".into()));
    }
    grid.check_node(base_node)?;
    for r in 0..3 {
        for s in 0..3 {
            let want = if r == s { 1.0 } else { 0.0 };
            if (dot3(seed_frame[r], seed_frame[s]) - want).abs() > 1e-8 {
                return Err(Error::Precondition(
                    "seed frame is not orthonormal".into(),
                ));
            }
        }
    }
    let beta = Rotations::from_lame(h, opts.order)?;
    let matrix = |axis: usize, node: [usize; 3]| -> [[f64; 9]; 9] {
        let mut coeff = [[0.0f64; 3]; 3];
        for m in 0..3 {
            if m != axis {
                coeff[axis][m] = -beta.beta(m, axis).at(node);
                coeff[m][axis] = beta.beta(m, axis).at(node);
            }
        }
        let mut a = [[0.0; 9]; 9];
        for i in 0..3 {
            for m in 0..3 {
                let v = coeff[i][m];
                if v != 0.0 {
                    for c in 0..3 {
                        a[3 * i + c][3 * m + c] = v;
                    }
                }
            }
        }
        a
    };
    let seed: [f64; 9] = std::array::from_fn(|t| seed_frame[t / 3][t % 3]);
    let mut renormalize = |y: &mut [f64; 9]| {
        let mut q = to_frame(y);
        orthonormalize3(&mut q);
        for i in 0..3 {
            for c in 0..3 {
                y[3 * i + c] = q[i][c];
            }
        }
    };
    let frames = integrate_linear(grid, base_node, seed, &matrix, &mut renormalize, [0, 1, 2])?;
    let raw = integrate_linear(grid, base_node, seed, &matrix, &mut |_| {}, [0, 1, 2])?;
    let alt = integrate_linear(grid, base_node, seed, &matrix, &mut renormalize, [2, 1, 0])?;

    let mut defect = ScalarField::zeros(grid);
    let mut worst_defect_node = base_node;
    let mut worst = -1.0f64;
    grid.for_each_node(|node, _| {
        let q = to_frame(&raw[grid.idx(node[0], node[1], node[2])]);
        let mut e = 0.0f64;
        for r in 0..3 {
            for s in 0..3 {
                let want = if r == s { 1.0 } else { 0.0 };
                e = e.max((dot3(q[r], q[s]) - want).abs());
            }
        }
        defect.set(node, e);
        if e > worst {
            worst = e;
            worst_defect_node = node;
        }
    });
    let mut mismatch = ScalarField::zeros(grid);
    grid.for_each_node(|node, _| {
        let idx = grid.idx(node[0], node[1], node[2]);
        let mut e = 0.0f64;
        for t in 0..9 {
            e = e.max((frames[idx][t] - alt[idx][t]).abs());
        }
        mismatch.set(node, e);
    });
    let tol = opts.tolerance_for(&grid, 1.0);
    let orthonormality = ResidualReport::from_field("frame_orthonormality", &defect, tol, 0);
    let path_dependence = ResidualReport::from_field("frame_path_dependence", &mismatch, tol, 0);

    let mut n: [VectorField; 3] = std::array::from_fn(|_| VectorField::zeros(grid));
    grid.for_each_node(|node, _| {
        let y = &frames[grid.idx(node[0], node[1], node[2])];
        for i in 0..3 {
            n[i].set(node, [y[3 * i], y[3 * i + 1], y[3 * i + 2]]);
        }
    });
    let mut components: Vec<ScalarField> = Vec::with_capacity(3);
    for c in 0..3 {
        let omega = OneForm::new(std::array::from_fn(|a| h[a].mul(&n[a].component(c))));
        components.push(omega.integrate(base_node, 0.0)?);
    }
    let f = VectorField::from_components([&components[0], &components[1], &components[2]]);
    let mut system = OrthogonalSystem::assemble(f, h.clone(), n, beta, "integrate_frame")?;
    system.anchor = Some(Anchor {
        node: base_node,
        point: [0.0; 3],
    });
    Ok(FrameIntegration {
        system,
        orthonormality,
        worst_defect_node,
        path_dependence,
    })
}

fn to_frame(y: &[f64; 9]) -> [[f64; 3]; 3] {
    [
        [y[0], y[1], y[2]],
        [y[3], y[4], y[5]],
        [y[6], y[7], y[8]],
    ]
}
