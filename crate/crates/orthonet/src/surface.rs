//! Coordinate-surface geometry: slices of a triply orthogonal system analyzed
//! as surfaces in curvature-line coordinates.
//!
//! By Dupin's theorem the coordinate surfaces of a triply orthogonal system
//! intersect each other along curvature lines, so a slice `x_i = const`
//! inherits curvature-line coordinates `(u, v)` from the two remaining axes,
//! with induced metric `I = H_u² du² + H_v² dv²`, unit normal `N_i`, and
//! principal curvatures `κ_u = −β_iu/H_u`, `κ_v = −β_iv/H_v`.
//!
//! The surface-level transformation theory mirrors the system level:
//! - a scalar θ solves the slice's point equation
//!   `∂_u∂_vθ = (∂_v ln H_u)∂_uθ + (∂_u ln H_v)∂_vθ` exactly when it extends
//!   the conjugate net (each component of `f` does, and on a Guichard-net
//!   slice so does `θ = √(H_v² + ε̃H_u²) = |H_i|`),
//! - a multiplier pair `(h, l)` with `∂_vh = (l−h)∂_v ln H_u` and
//!   `∂_ul = (h−l)∂_u ln H_v` defines a Combescure transform of the slice
//!   with curvatures `κ̂_u = δκ_u/h`, `κ̂_v = δκ_v/l`,
//! - the slice is a *G-surface* for `(ε, c)` when
//!   `c·H_u²H_v²(h−l)² = H_v² + εH_u²`; every coordinate surface of a
//!   Guichard net is one, with ε induced by the trace signature
//!   (`ε = ε_u ε_v`) and `c = 1`,
//! - a G-pair dualizes to `(h*, l*) = δ̃(−h² + 1/H_u², −l² + ε/H_v²)`, tied to
//!   the base pair by `h* + l* + 2δ̃hl = 0` — the multiplier form of the
//!   curvature relation `1/(κ_uκ*_v) + 1/(κ_vκ*_u) = −2/(κ̂_uκ̂_v)`,
//! - the Demoulin identity `(1/κ_u − 1/κ_v)(1/κ*_u − 1/κ*_v) =
//!   1/(κ_u²H_u²) + ε/(κ_v²H_v²) − (1/κ̂_u − 1/κ̂_v)²` couples a pair with its
//!   dual; the dual is an Ω-type dual exactly when `lκ_u − hκ_v = 0`.
//!
//! [`analyze_family`] classifies a whole coordinate-surface family as parallel
//! (`β_ji = β_ki = 0`), totally umbilic (`κ_ij ≡ κ_ik`), or cyclic
//! (`∂_iκ_ji = ∂_iκ_ki = 0`), and computes the torsion of the coordinate
//! curves in the pole-free β-form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{effective_collar, line_derivative, FdOrder, ScalarField};
use crate::numerics::solve_dense;
use crate::report::{default_tolerance, CheckOpts, GridSummary, ResidualReport, MASK_REL};
use crate::tos::{complement, OrthogonalSystem, EPSILON};

/// A rectilinear 2-D grid: the parameter domain of a coordinate-surface
/// slice, with `u` the slower (first) index and `v` the faster one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2 {
    pub n: [usize; 2],
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
}

impl Grid2 {
    /// Builds a grid from per-axis sample counts and the bounding rectangle.
    pub fn new(n: [usize; 2], bounds: [[f64; 2]; 2]) -> Result<Self> {
        let mut origin = [0.0; 2];
        let mut spacing = [0.0; 2];
        for a in 0..2 {
            let [lo, hi] = bounds[a];
            if n[a] < 5 {
                return Err(Error::InvalidGrid(format!(
                    "slice axis {a}: n = {} < 5",
                    n[a]
                )));
            }
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!(
                    "slice axis {a}: invalid interval [{lo}, {hi}]"
                )));
            }
            origin[a] = lo;
            spacing[a] = (hi - lo) / (n[a] - 1) as f64;
        }
        Ok(Grid2 { n, origin, spacing })
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    /// True when the grid holds no nodes (never, for a valid grid).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of node `(a, b)`.
    #[inline]
    pub fn idx(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < self.n[0] && b < self.n[1]);
        a * self.n[1] + b
    }

    /// Coordinates of node `(a, b)`.
    #[inline]
    pub fn coord(&self, node: [usize; 2]) -> [f64; 2] {
        [
            self.origin[0] + node[0] as f64 * self.spacing[0],
            self.origin[1] + node[1] as f64 * self.spacing[1],
        ]
    }

    /// Largest spacing, the `h` entering default tolerances.
    pub fn h_max(&self) -> f64 {
        self.spacing[0].max(self.spacing[1])
    }

    /// Node closest to the rectangle center.
    pub fn center_node(&self) -> [usize; 2] {
        [self.n[0] / 2, self.n[1] / 2]
    }

    /// Calls `f` for every node with its index pair and coordinates.
    pub fn for_each_node(&self, mut f: impl FnMut([usize; 2], [f64; 2])) {
        for a in 0..self.n[0] {
            let u = self.origin[0] + a as f64 * self.spacing[0];
            for b in 0..self.n[1] {
                let v = self.origin[1] + b as f64 * self.spacing[1];
                f([a, b], [u, v]);
            }
        }
    }

    /// Report-facing shape summary (two entries).
    pub fn summary(&self) -> GridSummary {
        GridSummary {
            n: self.n.to_vec(),
            spacing: self.spacing.to_vec(),
        }
    }

    fn check_axis(axis: usize) -> Result<()> {
        if axis < 2 {
            Ok(())
        } else {
            Err(Error::AxisOutOfRange(axis))
        }
    }
}

/// A scalar field sampled on a [`Grid2`]. Masked values are NaN, as in the
/// 3-D [`ScalarField`].
#[derive(Clone, Debug)]
pub struct Field2 {
    grid: Grid2,
    data: Vec<f64>,
}

impl Field2 {
    /// Samples `f(u, v)` on the grid.
    pub fn from_fn(grid: Grid2, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        grid.for_each_node(|_, p| data.push(f(p)));
        Field2 { grid, data }
    }

    /// Constant field.
    pub fn constant(grid: Grid2, value: f64) -> Self {
        Field2 {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// All-zero field.
    pub fn zeros(grid: Grid2) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    /// Raw values in row-major node order.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, node: [usize; 2]) -> f64 {
        self.data[self.grid.idx(node[0], node[1])]
    }

    #[inline]
    pub fn set(&mut self, node: [usize; 2], value: f64) {
        let idx = self.grid.idx(node[0], node[1]);
        self.data[idx] = value;
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Field2 {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip(&self, other: &Field2, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip of fields on different grids");
        Field2 {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Field2) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field2) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field2) -> Self {
        self.zip(other, |a, b| a * b)
    }

    /// Pointwise quotient with masking: nodes where
    /// `|denominator| < MASK_REL · sup|denominator|` become NaN.
    pub fn div_masked(&self, den: &Field2) -> Self {
        let floor = MASK_REL * den.sup_abs();
        self.zip(den, |a, b| if b.abs() < floor { f64::NAN } else { a / b })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        self.map(|v| v + s)
    }

    /// Sup of |values| ignoring NaN.
    pub fn sup_abs(&self) -> f64 {
        self.data
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Values at nodes at least `collar` nodes away from every edge.
    pub fn interior_values(&self, collar: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.grid.n;
        let c = [
            effective_collar(n[0], collar),
            effective_collar(n[1], collar),
        ];
        let grid = self.grid;
        (c[0]..n[0] - c[0])
            .flat_map(move |a| (c[1]..n[1] - c[1]).map(move |b| self.data[grid.idx(a, b)]))
    }

    /// Partial derivative along `axis` (0 = u, 1 = v) with the given order.
    pub fn derivative(&self, axis: usize, order: FdOrder) -> Result<Field2> {
        Grid2::check_axis(axis)?;
        let grid = self.grid;
        let n_axis = grid.n[axis];
        let h = grid.spacing[axis];
        let stride = if axis == 0 { grid.n[1] } else { 1 };
        let mut out = vec![0.0; grid.len()];
        let line_starts: Vec<usize> = if axis == 0 {
            (0..grid.n[1]).collect()
        } else {
            (0..grid.n[0]).map(|a| a * grid.n[1]).collect()
        };
        for start in line_starts {
            line_derivative(
                n_axis,
                h,
                order,
                |t| self.data[start + t * stride],
                |t, w| out[start + t * stride] = w,
            );
        }
        Ok(Field2 { grid, data: out })
    }
}

/// Sup of |values| over the interior of several fields, skipping masks; the
/// scale factor entering 2-D default tolerances.
fn field_scale2(fields: &[&Field2], collar: usize) -> f64 {
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

/// Explicit tolerance if set, otherwise the 2-D grid default for `scale`.
fn tolerance2(opts: &CheckOpts, grid: Grid2, scale: f64) -> f64 {
    opts.tolerance
        .unwrap_or_else(|| default_tolerance(grid.h_max(), scale))
}

/// An ℝ³-valued function sampled on a [`Grid2`]: slice restrictions of the
/// position field and the unit normal.
#[derive(Clone, Debug)]
pub struct VecField2 {
    grid: Grid2,
    data: Vec<[f64; 3]>,
}

impl VecField2 {
    pub fn from_fn(grid: Grid2, f: impl Fn([f64; 2]) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        grid.for_each_node(|_, p| data.push(f(p)));
        VecField2 { grid, data }
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.data
    }

    #[inline]
    pub fn at(&self, node: [usize; 2]) -> [f64; 3] {
        self.data[self.grid.idx(node[0], node[1])]
    }

    /// Extracts one Cartesian component as a scalar field.
    pub fn component(&self, c: usize) -> Field2 {
        assert!(c < 3);
        Field2 {
            grid: self.grid,
            data: self.data.iter().map(|v| v[c]).collect(),
        }
    }
}

/// A 1-form `ω = g_u du + g_v dv` on a slice, integrable by trapezoid
/// accumulation when closed.
#[derive(Clone, Debug)]
pub struct OneForm2 {
    g: [Field2; 2],
}

impl OneForm2 {
    pub fn new(g: [Field2; 2]) -> Self {
        assert_eq!(
            g[0].grid(),
            g[1].grid(),
            "1-form coefficients on different grids"
        );
        OneForm2 { g }
    }

    pub fn coefficient(&self, axis: usize) -> &Field2 {
        &self.g[axis]
    }

    pub fn grid(&self) -> Grid2 {
        self.g[0].grid()
    }

    /// The antisymmetrized mixed partial `∂_u g_v − ∂_v g_u`; zero (to
    /// truncation error) exactly when the form is closed.
    pub fn closedness_field(&self) -> Field2 {
        let dgv = self.g[1].derivative(0, FdOrder::Two).expect("axis valid");
        let dgu = self.g[0].derivative(1, FdOrder::Two).expect("axis valid");
        dgv.sub(&dgu)
    }

    /// Sup of the coefficients, for tolerance selection.
    pub fn scale(&self) -> f64 {
        self.g[0].sup_abs().max(self.g[1].sup_abs())
    }

    /// Sup of the two cross-derivative fields `∂_u g_v`, `∂_v g_u` over the
    /// interior; together with [`Self::scale`] this sets the closedness
    /// tolerance scale (both regimes: small coefficients with large curvature
    /// and large coefficients with vanishing true cross-derivatives).
    pub fn closedness_scale(&self, collar: usize) -> f64 {
        let dgv = self.g[1].derivative(0, FdOrder::Two).expect("axis valid");
        let dgu = self.g[0].derivative(1, FdOrder::Two).expect("axis valid");
        field_scale2(&[&dgv, &dgu], collar)
    }

    /// Potential by trapezoid-rule accumulation: the u-line through the base
    /// node first, then v-lines through each of its nodes. Second-order
    /// accurate and path-independent (up to truncation) for closed forms.
    pub fn integrate(&self, base_node: [usize; 2], base_value: f64) -> Result<Field2> {
        let grid = self.grid();
        if base_node[0] >= grid.n[0] || base_node[1] >= grid.n[1] {
            return Err(Error::NodeOutOfRange {
                node: [base_node[0], base_node[1], 0],
                n: [grid.n[0], grid.n[1], 1],
            });
        }
        let mut out = Field2::zeros(grid);
        out.set(base_node, base_value);
        self.sweep_line(&mut out, base_node, 0);
        let mut start = base_node;
        for a in 0..grid.n[0] {
            start[0] = a;
            self.sweep_line(&mut out, start, 1);
        }
        Ok(out)
    }

    /// Trapezoid accumulation along the `axis` line through `from`, both
    /// directions, assuming `out[from]` already holds the potential there.
    fn sweep_line(&self, out: &mut Field2, from: [usize; 2], axis: usize) {
        let grid = self.grid();
        let h = grid.spacing[axis];
        let g = &self.g[axis];
        let mut node = from;
        for t in from[axis] + 1..grid.n[axis] {
            let mut prev = node;
            prev[axis] = t - 1;
            node[axis] = t;
            let step = 0.5 * h * (g.at(prev) + g.at(node));
            let v = out.at(prev) + step;
            out.set(node, v);
        }
        let mut node = from;
        for t in (0..from[axis]).rev() {
            let mut next = node;
            next[axis] = t + 1;
            node[axis] = t;
            let step = 0.5 * h * (g.at(node) + g.at(next));
            let v = out.at(next) - step;
            out.set(node, v);
        }
    }
}

/// A coordinate surface `x_axis = const` of a triply orthogonal system,
/// restricted to its two in-slice axes `(u_axis, v_axis)` (the sorted
/// complement of `axis`).
///
/// The slice carries the induced metric `I = H_u²du² + H_v²dv²`, the parent
/// normal `N_axis` as its unit normal, and the principal curvatures
/// `κ_u = −β_{axis,u}/H_u`, `κ_v = −β_{axis,v}/H_v` along the two curvature
/// directions. `epsilon` is the signature-induced sign `ε_u·ε_v`, the ε for
/// which the slice of a Guichard net satisfies the G-condition with `c = 1`
/// (equivalently: `H_v² + ε·H_u² = H_axis²` on a Guichard net).
#[derive(Clone, Debug)]
pub struct SurfaceSlice {
    pub axis: usize,
    pub index: usize,
    pub u_axis: usize,
    pub v_axis: usize,
    pub grid: Grid2,
    /// Restriction of the position field.
    pub f: VecField2,
    /// Restriction of the parent normal `N_axis`.
    pub normal: VecField2,
    /// Restriction of the (signed) Lamé coefficient along `u_axis`.
    pub h_u: Field2,
    /// Restriction of the (signed) Lamé coefficient along `v_axis`.
    pub h_v: Field2,
    /// Principal curvature `−β_{axis,u}/H_u` (masked where `H_u ≈ 0`).
    pub kappa_u: Field2,
    /// Principal curvature `−β_{axis,v}/H_v` (masked where `H_v ≈ 0`).
    pub kappa_v: Field2,
    /// Signature-induced ε of the slice.
    pub epsilon: f64,
    /// True when `κ_u ≡ κ_v` within tolerance (totally umbilic slice).
    pub umbilic: bool,
    /// Sup of the multiplied umbilicity deviation `β_{iu}H_v − β_{iv}H_u`.
    pub umbilic_deviation: f64,
    /// Provenance of the parent system.
    pub parent: String,
}

impl SurfaceSlice {
    /// The scalar `√(H_v² + εH_u²)` with the slice's signature-induced ε; on
    /// a Guichard-net slice this equals `|H_axis|` and solves the slice's
    /// point equation.
    pub fn guichard_theta(&self) -> Field2 {
        let sq = self
            .h_v
            .mul(&self.h_v)
            .add(&self.h_u.mul(&self.h_u).scale(self.epsilon));
        sq.map(|s| if s >= 0.0 { s.sqrt() } else { f64::NAN })
    }
}

/// Restricts a 3-D scalar field to the slice `node[axis] = index`.
fn restrict_scalar(
    field: &ScalarField,
    grid2: Grid2,
    axis: usize,
    index: usize,
    u_axis: usize,
    v_axis: usize,
) -> Field2 {
    let mut data = Vec::with_capacity(grid2.len());
    for a in 0..grid2.n[0] {
        for b in 0..grid2.n[1] {
            let mut node = [0usize; 3];
            node[axis] = index;
            node[u_axis] = a;
            node[v_axis] = b;
            data.push(field.at(node));
        }
    }
    Field2 { grid: grid2, data }
}

/// Extracts the coordinate surface `x_axis = index·h` of a system as a
/// [`SurfaceSlice`], with curvatures computed from the parent's rotational
/// coefficients and an umbilicity flag from the multiplied detector
/// `β_{iu}H_v − β_{iv}H_u ≡ 0`.
pub fn extract_slice(
    system: &OrthogonalSystem,
    axis: usize,
    index: usize,
) -> Result<SurfaceSlice> {
    if axis >= 3 {
        return Err(Error::AxisOutOfRange(axis));
    }
    if index >= system.grid.n[axis] {
        return Err(Error::NodeOutOfRange {
            node: {
                let mut n = [0; 3];
                n[axis] = index;
                n
            },
            n: system.grid.n,
        });
    }
    let (u_axis, v_axis) = complement(axis);
    let g3 = system.grid;
    let grid2 = Grid2 {
        n: [g3.n[u_axis], g3.n[v_axis]],
        origin: [g3.origin[u_axis], g3.origin[v_axis]],
        spacing: [g3.spacing[u_axis], g3.spacing[v_axis]],
    };

    let h_u = restrict_scalar(&system.h[u_axis], grid2, axis, index, u_axis, v_axis);
    let h_v = restrict_scalar(&system.h[v_axis], grid2, axis, index, u_axis, v_axis);
    let beta_u = restrict_scalar(system.beta.beta(axis, u_axis), grid2, axis, index, u_axis, v_axis);
    let beta_v = restrict_scalar(system.beta.beta(axis, v_axis), grid2, axis, index, u_axis, v_axis);
    let kappa_u = beta_u.scale(-1.0).div_masked(&h_u);
    let kappa_v = beta_v.scale(-1.0).div_masked(&h_v);

    // Umbilicity in the multiplied form β_iu·H_v = β_iv·H_u, free of the
    // κ-quotient poles where a transformed Lamé coefficient crosses zero.
    let t_u = beta_u.mul(&h_v);
    let t_v = beta_v.mul(&h_u);
    let deviation = t_u.sub(&t_v).sup_abs();
    let scale = t_u.sup_abs().max(t_v.sup_abs());
    let umbilic = deviation <= default_tolerance(grid2.h_max(), scale);

    let mut f_data = Vec::with_capacity(grid2.len());
    let mut n_data = Vec::with_capacity(grid2.len());
    for a in 0..grid2.n[0] {
        for b in 0..grid2.n[1] {
            let mut node = [0usize; 3];
            node[axis] = index;
            node[u_axis] = a;
            node[v_axis] = b;
            f_data.push(system.f.at(node));
            n_data.push(system.n[axis].at(node));
        }
    }

    Ok(SurfaceSlice {
        axis,
        index,
        u_axis,
        v_axis,
        grid: grid2,
        f: VecField2 {
            grid: grid2,
            data: f_data,
        },
        normal: VecField2 {
            grid: grid2,
            data: n_data,
        },
        h_u,
        h_v,
        kappa_u,
        kappa_v,
        epsilon: EPSILON[u_axis] * EPSILON[v_axis],
        umbilic,
        umbilic_deviation: deviation,
        parent: system.provenance.clone(),
    })
}

/// Residual of the slice's point equation for a scalar θ, in the multiplied
/// polynomial form `H_uH_v ∂_u∂_vθ − H_v(∂_vH_u)(∂_uθ) − H_u(∂_uH_v)(∂_vθ)`.
pub fn check_surface_point_solution(
    slice: &SurfaceSlice,
    theta: &Field2,
    opts: CheckOpts,
) -> Result<ResidualReport> {
    let du = theta.derivative(0, opts.order)?;
    let dv = theta.derivative(1, opts.order)?;
    let duv = du.derivative(1, opts.order)?;
    let dhu = slice.h_u.derivative(1, opts.order)?;
    let dhv = slice.h_v.derivative(0, opts.order)?;

    let t0 = slice.h_u.mul(&slice.h_v).mul(&duv);
    let t1 = slice.h_v.mul(&dhu).mul(&du);
    let t2 = slice.h_u.mul(&dhv).mul(&dv);
    let residual = t0.sub(&t1).sub(&t2);
    let scale = field_scale2(&[&t0, &t1, &t2], opts.collar);
    let tol = tolerance2(&opts, slice.grid, scale);
    Ok(ResidualReport::from_samples(
        "surface_point_equation",
        residual.interior_values(opts.collar),
        tol,
        slice.grid.summary(),
        opts.collar > 0,
    ))
}

/// A Combescure transform of a coordinate surface, described by the
/// multiplier pair `(h, l)` in `df̂ = h ∂_uf du + l ∂_vf dv`.
///
/// `delta ∈ {±1}` is the orientation sign entering the transformed
/// curvatures `κ̂_u = δκ_u/h`, `κ̂_v = δκ_v/l`.
#[derive(Clone, Debug)]
pub struct SurfaceCombescurePair {
    pub h: Field2,
    pub l: Field2,
    pub delta: f64,
}

impl SurfaceCombescurePair {
    /// Builds a pair, choosing δ as the sign of `h·l` at the first node where
    /// the product is unambiguous (+1 when it never is).
    pub fn new(h: Field2, l: Field2) -> Self {
        assert_eq!(h.grid(), l.grid(), "pair multipliers on different grids");
        let product = h.mul(&l);
        let floor = MASK_REL * product.sup_abs();
        let delta = product
            .values()
            .iter()
            .find(|p| p.is_finite() && p.abs() > floor && p.abs() > 0.0)
            .map_or(1.0, |p| p.signum());
        SurfaceCombescurePair { h, l, delta }
    }

    /// Constant pair `(h0, l0)` on `grid`.
    pub fn constant(grid: Grid2, h0: f64, l0: f64) -> Self {
        Self::new(Field2::constant(grid, h0), Field2::constant(grid, l0))
    }

    /// Same multipliers with an explicitly chosen orientation sign.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// The 1-parameter family member `(h + c, l + c)`.
    pub fn shifted(&self, c: f64) -> Self {
        Self::new(self.h.add_scalar(c), self.l.add_scalar(c))
    }

    /// Transformed principal curvature `κ̂_u = δκ_u/h` (masked at `h ≈ 0`).
    pub fn kappa_hat_u(&self, slice: &SurfaceSlice) -> Field2 {
        slice.kappa_u.scale(self.delta).div_masked(&self.h)
    }

    /// Transformed principal curvature `κ̂_v = δκ_v/l` (masked at `l ≈ 0`).
    pub fn kappa_hat_v(&self, slice: &SurfaceSlice) -> Field2 {
        slice.kappa_v.scale(self.delta).div_masked(&self.l)
    }
}

/// Residual of the pair's Combescure compatibility, multiplied through:
/// `H_u∂_vh − (l−h)∂_vH_u` and `H_v∂_ul − (h−l)∂_uH_v`, aggregated pointwise.
pub fn check_surface_pair(
    slice: &SurfaceSlice,
    pair: &SurfaceCombescurePair,
    opts: CheckOpts,
) -> Result<ResidualReport> {
    let dh = pair.h.derivative(1, opts.order)?;
    let dl = pair.l.derivative(0, opts.order)?;
    let dhu = slice.h_u.derivative(1, opts.order)?;
    let dhv = slice.h_v.derivative(0, opts.order)?;
    let diff = pair.l.sub(&pair.h);

    let a0 = slice.h_u.mul(&dh);
    let a1 = diff.mul(&dhu);
    let b0 = slice.h_v.mul(&dl);
    let b1 = diff.scale(-1.0).mul(&dhv);
    let r_u = a0.sub(&a1);
    let r_v = b0.sub(&b1);
    let residual = r_u.zip(&r_v, |x, y| x.abs().max(y.abs()));
    let scale = field_scale2(&[&a0, &a1, &b0, &b1], opts.collar);
    let tol = tolerance2(&opts, slice.grid, scale);
    Ok(ResidualReport::from_samples(
        "surface_combescure",
        residual.interior_values(opts.collar),
        tol,
        slice.grid.summary(),
        opts.collar > 0,
    ))
}

/// Verdict of the G-surface condition for one `(ε, c)` and one pair, in the
/// fixed-coordinate form and (when the fit succeeds) the reparametrized form
/// with per-line functions χ₁(u), χ₂(v).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GReport {
    pub epsilon: f64,
    pub c: f64,
    /// Residual of `c·H_u²H_v²(h−l)² − (H_v² + εH_u²)`.
    pub fixed: ResidualReport,
    /// Residual of the best fit `c·H_u²H_v²(h−l)² ≈ a(u)H_v² + b(v)H_u²`
    /// with `a = 1/χ₁²`, `b = ε/χ₂²`; absent when the fit is degenerate.
    pub reparametrized: Option<ResidualReport>,
    /// Fitted χ₁ per u-line (NaN where `a ≤ 0` or outside the fit collar).
    pub chi1: Option<Vec<f64>>,
    /// Fitted χ₂ per v-line (NaN where `ε/b ≤ 0`; absent for ε = 0).
    pub chi2: Option<Vec<f64>>,
    /// True when `sup|h−l|` exceeds tolerance: the pair is not a pure
    /// scaling family (for which the condition degenerates to 0 = 0).
    pub nontrivial: bool,
}

impl GReport {
    pub fn pass(&self) -> bool {
        self.fixed.pass
    }
}

/// Checks the G-surface condition `c·H_u²H_v²(h−l)² = H_v² + εH_u²` for a
/// compatible pair. `ε ∈ {0, ±1}` and `c ≠ 0` are the caller's structure
/// constants; the reparametrized form is fitted by linear least squares in
/// `a(u) = 1/χ₁²` and `b(v) = ε/χ₂²` (ridge-regularized when the normal
/// equations are singular, e.g. on isothermic slices where `H_u ∝ H_v`).
pub fn check_g_condition(
    slice: &SurfaceSlice,
    pair: &SurfaceCombescurePair,
    epsilon: f64,
    c: f64,
    opts: CheckOpts,
) -> Result<GReport> {
    if !(epsilon == 0.0 || epsilon == 1.0 || epsilon == -1.0) {
        return Err(Error::Domain(format!(
            "G-condition signature ε must be one of 0, ±1 (got {epsilon})"
        )));
    }
    if c == 0.0 || !c.is_finite() {
        return Err(Error::Domain(format!(
            "G-condition constant c must be nonzero and finite (got {c})"
        )));
    }
    let compat = check_surface_pair(slice, pair, opts)?;
    if !compat.pass {
        return Err(Error::Precondition(format!(
            "pair is not Combescure-compatible on the slice (residual {:.3e} > {:.3e})",
            compat.sup, compat.tolerance
        )));
    }

    let hu2 = slice.h_u.mul(&slice.h_u);
    let hv2 = slice.h_v.mul(&slice.h_v);
    let diff = pair.h.sub(&pair.l);
    let p = hu2.mul(&hv2).mul(&diff.mul(&diff)).scale(c);
    let s = hv2.add(&hu2.scale(epsilon));
    let residual = p.sub(&s);
    let scale = field_scale2(&[&p, &s], opts.collar);
    let tol = tolerance2(&opts, slice.grid, scale);
    let fixed = ResidualReport::from_samples(
        "g_condition",
        residual.interior_values(opts.collar),
        tol,
        slice.grid.summary(),
        opts.collar > 0,
    );

    let fit = fit_chi_functions(slice.grid, &p, &hu2, &hv2, epsilon, opts.collar);
    let (reparametrized, chi1, chi2) = match fit {
        Some((fit_residual, a, b)) => {
            let report = ResidualReport::from_samples(
                "g_condition_reparametrized",
                fit_residual.interior_values(opts.collar),
                tol,
                slice.grid.summary(),
                opts.collar > 0,
            );
            let chi1 = a
                .iter()
                .map(|&ai| if ai > 0.0 { ai.powf(-0.5) } else { f64::NAN })
                .collect();
            let chi2 = if epsilon == 0.0 {
                None
            } else {
                Some(
                    b.iter()
                        .map(|&bi| {
                            let q = epsilon / bi;
                            if q > 0.0 {
                                q.sqrt()
                            } else {
                                f64::NAN
                            }
                        })
                        .collect(),
                )
            };
            (Some(report), Some(chi1), chi2)
        }
        None => (None, None, None),
    };

    let diff_scale = field_scale2(&[&pair.h, &pair.l], opts.collar);
    let nontrivial = diff.sup_abs() > tolerance2(&opts, slice.grid, diff_scale);

    Ok(GReport {
        epsilon,
        c,
        fixed,
        reparametrized,
        chi1,
        chi2,
        nontrivial,
    })
}

/// Least-squares fit of `P(u,v) ≈ a(u)·H_v² + b(v)·H_u²` over the unmasked
/// interior. Returns the residual field and the per-line coefficient vectors
/// (full grid length, NaN outside the fitted collar); `None` when even the
/// ridge-regularized normal equations fail.
fn fit_chi_functions(
    grid: Grid2,
    p: &Field2,
    hu2: &Field2,
    hv2: &Field2,
    epsilon: f64,
    collar: usize,
) -> Option<(Field2, Vec<f64>, Vec<f64>)> {
    let [nu, nv] = grid.n;
    let cu = effective_collar(nu, collar);
    let cv = effective_collar(nv, collar);
    let mu = nu - 2 * cu;
    let mv = nv - 2 * cv;
    // For ε = 0 the reparametrized form has no χ₂ term; fit a(u) alone.
    let unknowns = if epsilon == 0.0 { mu } else { mu + mv };

    let mut mat = vec![vec![0.0f64; unknowns]; unknowns];
    let mut rhs = vec![0.0f64; unknowns];
    for a in cu..nu - cu {
        for b in cv..nv - cv {
            let node = [a, b];
            let pv = p.at(node);
            let q = hv2.at(node);
            let r = hu2.at(node);
            if pv.is_nan() || q.is_nan() || r.is_nan() {
                continue;
            }
            let ia = a - cu;
            mat[ia][ia] += q * q;
            rhs[ia] += pv * q;
            if epsilon != 0.0 {
                let ib = mu + (b - cv);
                mat[ia][ib] += q * r;
                mat[ib][ia] += q * r;
                mat[ib][ib] += r * r;
                rhs[ib] += pv * r;
            }
        }
    }

    let solution = solve_dense(mat.clone(), rhs.clone()).or_else(|| {
        // Ridge fallback for gauge-degenerate fits (a_u ↦ a_u + t,
        // b_v ↦ b_v − t·H_u²/H_v² on separable metrics).
        let diag_scale = (0..unknowns).fold(0.0f64, |m, i| m.max(mat[i][i])).max(1e-300);
        let mut ridged = mat;
        for (i, row) in ridged.iter_mut().enumerate() {
            row[i] += 1e-10 * diag_scale;
        }
        solve_dense(ridged, rhs)
    })?;

    let mut a_line = vec![f64::NAN; nu];
    let mut b_line = vec![f64::NAN; nv];
    for (i, slot) in a_line.iter_mut().enumerate().take(nu - cu).skip(cu) {
        *slot = solution[i - cu];
    }
    if epsilon != 0.0 {
        for (i, slot) in b_line.iter_mut().enumerate().take(nv - cv).skip(cv) {
            *slot = solution[mu + (i - cv)];
        }
    } else {
        for slot in b_line.iter_mut() {
            *slot = 0.0;
        }
    }

    let mut residual = Field2::constant(grid, f64::NAN);
    for a in cu..nu - cu {
        for b in cv..nv - cv {
            let node = [a, b];
            let pv = p.at(node);
            if pv.is_nan() {
                continue;
            }
            let bv = if epsilon == 0.0 { 0.0 } else { b_line[b] };
            residual.set(node, pv - a_line[a] * hv2.at(node) - bv * hu2.at(node));
        }
    }
    Some((residual, a_line, b_line))
}

/// Builds the dual pair `(h*, l*) = δ̃(−h² + 1/H_u², −l² + ε/H_v²)` of a
/// G-pair. The G-condition with the given ε and `c = 1` is the integrability
/// condition of the dual, so it is checked as a gate; pairs normalized to a
/// different c must be rescaled by the caller first.
pub fn surface_dual(
    slice: &SurfaceSlice,
    pair: &SurfaceCombescurePair,
    epsilon: f64,
    delta_tilde: f64,
    opts: CheckOpts,
) -> Result<SurfaceCombescurePair> {
    if delta_tilde != 1.0 && delta_tilde != -1.0 {
        return Err(Error::Domain(format!(
            "dual orientation δ̃ must be ±1 (got {delta_tilde})"
        )));
    }
    let g = check_g_condition(slice, pair, epsilon, 1.0, opts)?;
    if !g.fixed.pass {
        return Err(Error::Precondition(format!(
            "G-condition fails (residual {:.3e} > {:.3e}): the dual 1-form would not be integrable",
            g.fixed.sup, g.fixed.tolerance
        )));
    }

    let one = Field2::constant(slice.grid, 1.0);
    let h_star = one
        .div_masked(&slice.h_u.mul(&slice.h_u))
        .sub(&pair.h.mul(&pair.h))
        .scale(delta_tilde);
    let l_star = one
        .div_masked(&slice.h_v.mul(&slice.h_v))
        .scale(epsilon)
        .sub(&pair.l.mul(&pair.l))
        .scale(delta_tilde);
    Ok(SurfaceCombescurePair::new(h_star, l_star).with_delta(delta_tilde))
}

/// Verdict of the dual relation between a pair and its dual, with the
/// non-triviality of each curvature direction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualRelationReport {
    /// Residual of `h* + l* + 2δ̃hl = 0`, the multiplier form of
    /// `1/(κ_uκ*_v) + 1/(κ_vκ*_u) = −2/(κ̂_uκ̂_v)`.
    pub relation: ResidualReport,
    /// `κ_uκ*_u ≠ −κ̂_u²` somewhere, i.e. `sup|h* + δ̃h²| > τ`.
    pub nontrivial_u: bool,
    /// `κ_vκ*_v ≠ −κ̂_v²` somewhere, i.e. `sup|l* + δ̃l²| > τ`.
    pub nontrivial_v: bool,
}

impl DualRelationReport {
    pub fn pass(&self) -> bool {
        self.relation.pass
    }
}

/// Checks the dual relation `h* + l* + 2δ̃hl = 0` (δ̃ read from the star
/// pair's orientation). For the trivial scaling dual `(λf, −λ²f)` the
/// relation holds exactly and both non-triviality flags are false.
pub fn check_dual_relation(
    slice: &SurfaceSlice,
    pair: &SurfaceCombescurePair,
    star: &SurfaceCombescurePair,
    opts: CheckOpts,
) -> DualRelationReport {
    let cross = pair.h.mul(&pair.l).scale(2.0 * star.delta);
    let residual = star.h.add(&star.l).add(&cross);
    let scale = field_scale2(&[&star.h, &star.l, &cross], opts.collar);
    let tol = tolerance2(&opts, slice.grid, scale);
    let relation = ResidualReport::from_samples(
        "dual_relation",
        residual.interior_values(opts.collar),
        tol,
        slice.grid.summary(),
        opts.collar > 0,
    );

    let h_sq = pair.h.mul(&pair.h);
    let l_sq = pair.l.mul(&pair.l);
    let dev_u = star.h.add(&h_sq.scale(star.delta));
    let dev_v = star.l.add(&l_sq.scale(star.delta));
    let tol_u = tolerance2(&opts, slice.grid, field_scale2(&[&star.h, &h_sq], opts.collar));
    let tol_v = tolerance2(&opts, slice.grid, field_scale2(&[&star.l, &l_sq], opts.collar));
    DualRelationReport {
        relation,
        nontrivial_u: dev_u.sup_abs() > tol_u,
        nontrivial_v: dev_v.sup_abs() > tol_v,
    }
}

/// Verdict of the Demoulin identity for a pair and its dual on one slice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemoulinReport {
    /// Residual of `(1/κ_u − 1/κ_v)(1/κ*_u − 1/κ*_v) − 1/(κ_u²H_u²)
    /// − ε/(κ_v²H_v²) + (1/κ̂_u − 1/κ̂_v)²` in multiplier form.
    pub lemma: ResidualReport,
    /// Residual of the Ω-criterion `lκ_u − hκ_v = 0`.
    pub omega: ResidualReport,
    /// True when the Ω-criterion holds: the dual is an Ω-type dual (the
    /// associated surface is totally umbilic or degenerates to a point).
    pub omega_holds: bool,
    /// Set when every node is masked: "totally umbilic" when the umbilic
    /// detector dominates the mask, "curvatures vanish" otherwise.
    pub degenerate: Option<String>,
}

impl DemoulinReport {
    pub fn pass(&self) -> bool {
        self.lemma.pass
    }
}

/// Evaluates the Demoulin identity with `u = 1/κ_u`, `v = 1/κ_v`:
/// `(u − v)(h*u − l*v)/δ* = u²/H_u² + εv²/H_v² − (hu − lv)²`.
///
/// Curvature quotients are singular at umbilic and flat points, so nodes
/// where `|κ_u|`, `|κ_v|`, or `|κ_u − κ_v|` fall under the relative mask
/// threshold are excluded; a fully masked slice is reported as degenerate
/// rather than as a vacuous pass.
pub fn check_demoulin(
    slice: &SurfaceSlice,
    pair: &SurfaceCombescurePair,
    star: &SurfaceCombescurePair,
    epsilon: f64,
    opts: CheckOpts,
) -> DemoulinReport {
    let kscale = slice.kappa_u.sup_abs().max(slice.kappa_v.sup_abs());
    let threshold = (MASK_REL * kscale).max(f64::MIN_POSITIVE);

    let mut zero_masked = 0usize;
    let mut umbilic_masked = 0usize;
    let mask = slice.kappa_u.zip(&slice.kappa_v, |ku, kv| {
        if ku.is_nan() || kv.is_nan() || ku.abs() < threshold || kv.abs() < threshold {
            0.0
        } else if (ku - kv).abs() < threshold {
            1.0
        } else {
            2.0
        }
    });
    for &m in mask.values() {
        if m == 0.0 {
            zero_masked += 1;
        } else if m == 1.0 {
            umbilic_masked += 1;
        }
    }

    let inv_u = slice
        .kappa_u
        .zip(&mask, |k, m| if m == 2.0 { 1.0 / k } else { f64::NAN });
    let inv_v = slice
        .kappa_v
        .zip(&mask, |k, m| if m == 2.0 { 1.0 / k } else { f64::NAN });

    let hu2 = slice.h_u.mul(&slice.h_u);
    let hv2 = slice.h_v.mul(&slice.h_v);
    let lhs = inv_u
        .sub(&inv_v)
        .mul(&star.h.mul(&inv_u).sub(&star.l.mul(&inv_v)))
        .scale(star.delta);
    let t1 = inv_u.mul(&inv_u).div_masked(&hu2);
    let t2 = inv_v.mul(&inv_v).div_masked(&hv2).scale(epsilon);
    let hat = pair.h.mul(&inv_u).sub(&pair.l.mul(&inv_v));
    let t3 = hat.mul(&hat);
    let residual = lhs.sub(&t1).sub(&t2).add(&t3);
    let scale = field_scale2(&[&lhs, &t1, &t2, &t3], opts.collar);
    let tol = tolerance2(&opts, slice.grid, scale);
    let lemma = ResidualReport::from_samples(
        "demoulin_lemma",
        residual.interior_values(opts.collar),
        tol,
        slice.grid.summary(),
        opts.collar > 0,
    );

    let o0 = pair.l.mul(&slice.kappa_u);
    let o1 = pair.h.mul(&slice.kappa_v);
    let omega_res = o0.sub(&o1);
    let omega_tol = tolerance2(&opts, slice.grid, field_scale2(&[&o0, &o1], opts.collar));
    let omega = ResidualReport::from_samples(
        "demoulin_omega",
        omega_res.interior_values(opts.collar),
        omega_tol,
        slice.grid.summary(),
        opts.collar > 0,
    );
    let omega_holds = omega.pass;

    let degenerate = if lemma.masked_fraction >= 1.0 {
        if umbilic_masked >= zero_masked {
            Some("totally umbilic".to_string())
        } else {
            Some("curvatures vanish".to_string())
        }
    } else {
        None
    };

    DemoulinReport {
        lemma,
        omega,
        omega_holds,
        degenerate,
    }
}

/// Builds the 1-parameter family of Combescure pairs induced by a scalar
/// solution φ of the slice's adjoint point equation:
/// `∂_uh = φ∂_u ln(H_vφ)`, `∂_vh = −φ∂_v ln H_u`, `l = h − φ`, anchored to
/// `h = constant` at the grid corner.
///
/// The stated equation for φ,
/// `∂_u∂_vφ + (∂_v ln H_u)∂_uφ + (∂_u ln H_v)∂_vφ + φ∂_u∂_v ln(H_uH_v) = 0`,
/// is exactly the closedness of the h-gradient and is checked as a gate, as
/// is the numerical closedness of the assembled 1-form.
pub fn eisenhart_pair_from_phi(
    slice: &SurfaceSlice,
    phi: &Field2,
    constant: f64,
    opts: CheckOpts,
) -> Result<SurfaceCombescurePair> {
    let du_phi = phi.derivative(0, opts.order)?;
    let dv_phi = phi.derivative(1, opts.order)?;
    let dv_hu = slice.h_u.derivative(1, opts.order)?;
    let du_hv = slice.h_v.derivative(0, opts.order)?;

    // Validity gate, multiplied by H_uH_v. The mixed-logarithm term keeps its
    // quotient form because ∂_u∂_v ln H genuinely differentiates a quotient.
    let log_u = dv_hu.div_masked(&slice.h_u).derivative(0, opts.order)?;
    let log_v = du_hv.div_masked(&slice.h_v).derivative(1, opts.order)?;
    let huv = slice.h_u.mul(&slice.h_v);
    let t0 = huv.mul(&du_phi.derivative(1, opts.order)?);
    let t1 = slice.h_v.mul(&dv_hu).mul(&du_phi);
    let t2 = slice.h_u.mul(&du_hv).mul(&dv_phi);
    let t3 = phi.mul(&huv).mul(&log_u.add(&log_v));
    let residual = t0.add(&t1).add(&t2).add(&t3);
    let scale = field_scale2(&[&t0, &t1, &t2, &t3], opts.collar);
    let tol = tolerance2(&opts, slice.grid, scale);
    let validity = ResidualReport::from_samples(
        "eisenhart_phi_equation",
        residual.interior_values(opts.collar),
        tol,
        slice.grid.summary(),
        opts.collar > 0,
    );
    if !validity.pass {
        return Err(Error::Precondition(format!(
            "φ does not satisfy the surface point-equation condition \
             (residual {:.3e} > {:.3e})",
            validity.sup, validity.tolerance
        )));
    }

    // ∂_uh = φ·∂_uH_v/H_v + ∂_uφ,   ∂_vh = −φ·∂_vH_u/H_u.
    let g_u = phi.mul(&du_hv.div_masked(&slice.h_v)).add(&du_phi);
    let g_v = phi.mul(&dv_hu.div_masked(&slice.h_u)).scale(-1.0);
    let form = OneForm2::new([g_u, g_v]);
    let closed_scale = form.scale().max(form.closedness_scale(opts.collar));
    let closed_tol = tolerance2(&opts, slice.grid, closed_scale);
    let closedness = ResidualReport::from_samples(
        "eisenhart_h_closedness",
        form.closedness_field().interior_values(opts.collar),
        closed_tol,
        slice.grid.summary(),
        opts.collar > 0,
    );
    if !closedness.pass {
        return Err(Error::Precondition(format!(
            "h-gradient of the φ-induced pair is not closed \
             (residual {:.3e} > {:.3e})",
            closedness.sup, closedness.tolerance
        )));
    }

    let h = form.integrate([0, 0], constant)?;
    let l = h.sub(phi);
    Ok(SurfaceCombescurePair::new(h, l))
}

/// Classification of one family of coordinate surfaces `x_axis = const`.
#[derive(Clone, Debug)]
pub struct FamilyAnalysis {
    pub axis: usize,
    /// `β_ji = β_ki = 0`: all surfaces of the family are parallel.
    pub parallel: bool,
    /// `κ_ij ≡ κ_ik` (multiplied form): all surfaces are totally umbilic.
    pub totally_umbilic: bool,
    /// `∂_iκ_ji = ∂_iκ_ki = 0`: the orthogonal trajectories are circular
    /// arcs, i.e. the other two families consist of channel surfaces.
    pub cyclic: bool,
    pub parallel_residual: ResidualReport,
    pub umbilic_residual: ResidualReport,
    pub cyclic_residual: ResidualReport,
    /// Torsion of the coordinate curves along `axis` in the β-form
    /// `τ = (β_ji∂_iβ_ki − β_ki∂_iβ_ji)/(β_ji² + β_ki²)`, masked where the
    /// denominator vanishes (planar or straight curves).
    pub torsion: ScalarField,
}

/// Analyzes the family of coordinate surfaces orthogonal to `axis`:
/// parallelism, total umbilicity, cyclicity, and coordinate-curve torsion.
pub fn analyze_family(
    system: &OrthogonalSystem,
    axis: usize,
    opts: CheckOpts,
) -> Result<FamilyAnalysis> {
    if axis >= 3 {
        return Err(Error::AxisOutOfRange(axis));
    }
    let (j, k) = complement(axis);
    let grid = system.grid;

    // Parallel ⇔ the normal direction does not rotate along the surfaces:
    // β_ji = β_ki = 0. Scale against the system's overall rotation magnitude
    // so an exactly flat system passes on the absolute floor.
    let b_ji = system.beta.beta(j, axis);
    let b_ki = system.beta.beta(k, axis);
    let parallel_field = b_ji.zip(b_ki, |x, y| x.abs().max(y.abs()));
    let parallel_tol = opts.tolerance_for(&grid, system.beta.scale());
    let parallel_residual = ResidualReport::from_field(
        "family_parallel",
        &parallel_field,
        parallel_tol,
        opts.collar,
    );

    // Totally umbilic ⇔ κ_ij ≡ κ_ik, multiplied: β_ij H_k − β_ik H_j = 0.
    let t0 = system.beta.beta(axis, j).mul(&system.h[k]);
    let t1 = system.beta.beta(axis, k).mul(&system.h[j]);
    let umbilic_field = t0.sub(&t1);
    let umbilic_tol = opts.tolerance_for(
        &grid,
        crate::report::field_scale(&[&t0, &t1], opts.collar),
    );
    let umbilic_residual = ResidualReport::from_field(
        "family_umbilic",
        &umbilic_field,
        umbilic_tol,
        opts.collar,
    );

    // Cyclic ⇔ ∂_i(β_ji/H_i) = ∂_i(β_ki/H_i) = 0, multiplied by H_i²:
    // H_i∂_iβ_ji − β_ji∂_iH_i = 0 (and likewise for k).
    let dh = system.h[axis].derivative(axis, opts.order)?;
    let c_j = system.h[axis]
        .mul(&b_ji.derivative(axis, opts.order)?)
        .sub(&b_ji.mul(&dh));
    let c_k = system.h[axis]
        .mul(&b_ki.derivative(axis, opts.order)?)
        .sub(&b_ki.mul(&dh));
    let cyclic_field = c_j.zip(&c_k, |x, y| x.abs().max(y.abs()));
    let cyclic_scale =
        crate::report::field_scale(&[&system.h[axis], b_ji, b_ki, &dh], opts.collar).powi(2);
    let cyclic_tol = opts.tolerance_for(&grid, cyclic_scale);
    let cyclic_residual =
        ResidualReport::from_field("family_cyclic", &cyclic_field, cyclic_tol, opts.collar);

    let num = b_ji
        .mul(&b_ki.derivative(axis, opts.order)?)
        .sub(&b_ki.mul(&b_ji.derivative(axis, opts.order)?));
    let den = b_ji.mul(b_ji).add(&b_ki.mul(b_ki));
    let torsion = num.div_masked(&den);

    Ok(FamilyAnalysis {
        axis,
        parallel: parallel_residual.pass,
        totally_umbilic: umbilic_residual.pass,
        cyclic: cyclic_residual.pass,
        parallel_residual,
        umbilic_residual,
        cyclic_residual,
        torsion,
    })
}
