//! Rectilinear 3-D grids, sampled scalar/vector fields, finite-difference
//! derivatives, and path integration of 1-forms.
//!
//! Conventions used throughout the crate:
//! - axes are 0-based in code (`0 → x₁, 1 → x₂, 2 → x₃`); documentation uses
//!   the usual 1-based subscripts,
//! - nodes are indexed row-major in `(i₁, i₂, i₃)` with `i₃` fastest,
//! - masked values are stored as NaN and skipped by all norms.

use std::io::Write;

use crate::error::{Error, Result};
use crate::report::{GridSummary, ResidualReport};

/// Finite-difference stencil order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FdOrder {
    /// Second-order central differences, one-sided second-order at boundaries.
    #[default]
    Two,
    /// Fourth-order central differences where the stencil fits, falling back
    /// to the second-order stencils within two nodes of a boundary.
    Four,
}

impl FdOrder {
    /// Parses the numeric orders accepted by the CLI.
    pub fn from_u8(order: u8) -> Result<Self> {
        match order {
            2 => Ok(FdOrder::Two),
            4 => Ok(FdOrder::Four),
            o => Err(Error::InvalidGrid(format!(
                "unsupported derivative order {o} (expected 2 or 4)"
            ))),
        }
    }
}

/// A rectilinear grid on a box `[a₁,b₁]×[a₂,b₂]×[a₃,b₃]`.
///
/// `spacing[i] = (b_i − a_i)/(n_i − 1)`; each axis needs at least 5 samples so
/// that the interior fourth-order stencils fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl GridSpec {
    /// Builds a grid from per-axis sample counts and the bounding box.
    pub fn new(n: [usize; 3], bounds: [[f64; 2]; 3]) -> Result<Self> {
        let mut origin = [0.0; 3];
        let mut spacing = [0.0; 3];
        for a in 0..3 {
            let [lo, hi] = bounds[a];
            if n[a] < 5 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: n = {} < 5",
                    n[a]
                )));
            }
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: invalid interval [{lo}, {hi}]"
                )));
            }
            origin[a] = lo;
            spacing[a] = (hi - lo) / (n[a] - 1) as f64;
        }
        Ok(GridSpec { n, origin, spacing })
    }

    /// Uniform n on a cube `[lo, hi]³`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new([n, n, n], [[lo, hi]; 3])
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// True when the grid holds no nodes (never, for a valid grid).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of node `(i, j, k)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.n[0] && j < self.n[1] && k < self.n[2]);
        (i * self.n[1] + j) * self.n[2] + k
    }

    /// Flat stride of one step along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.n[1] * self.n[2],
            1 => self.n[2],
            _ => 1,
        }
    }

    /// Coordinates of node `(i, j, k)`.
    #[inline]
    pub fn coord(&self, node: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + node[0] as f64 * self.spacing[0],
            self.origin[1] + node[1] as f64 * self.spacing[1],
            self.origin[2] + node[2] as f64 * self.spacing[2],
        ]
    }

    /// Upper corner of the box.
    pub fn upper(&self) -> [f64; 3] {
        self.coord([self.n[0] - 1, self.n[1] - 1, self.n[2] - 1])
    }

    /// Largest spacing, the `h` entering default tolerances.
    pub fn h_max(&self) -> f64 {
        self.spacing[0].max(self.spacing[1]).max(self.spacing[2])
    }

    /// Checks that a node lies inside the grid.
    pub fn check_node(&self, node: [usize; 3]) -> Result<()> {
        if node[0] < self.n[0] && node[1] < self.n[1] && node[2] < self.n[2] {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node, n: self.n })
        }
    }

    /// Node closest to the box center (useful as an integration seed).
    pub fn center_node(&self) -> [usize; 3] {
        [self.n[0] / 2, self.n[1] / 2, self.n[2] / 2]
    }

    /// Calls `f` for every node with its index triple and coordinates.
    pub fn for_each_node(&self, mut f: impl FnMut([usize; 3], [f64; 3])) {
        for i in 0..self.n[0] {
            let x = self.origin[0] + i as f64 * self.spacing[0];
            for j in 0..self.n[1] {
                let y = self.origin[1] + j as f64 * self.spacing[1];
                for k in 0..self.n[2] {
                    let z = self.origin[2] + k as f64 * self.spacing[2];
                    f([i, j, k], [x, y, z]);
                }
            }
        }
    }

    /// Report-facing shape summary.
    pub fn summary(&self) -> GridSummary {
        GridSummary {
            n: self.n.to_vec(),
            spacing: self.spacing.to_vec(),
        }
    }

    fn check_axis(axis: usize) -> Result<()> {
        if axis < 3 {
            Ok(())
        } else {
            Err(Error::AxisOutOfRange(axis))
        }
    }
}

/// First derivative of a sampled line of `n` values with spacing `h`.
///
/// `get(t)` reads the t-th sample, `put(t, v)` stores the derivative. Interior
/// nodes use central stencils of the requested order; the outermost nodes use
/// one-sided second-order stencils, and `FdOrder::Four` falls back to the
/// second-order central stencil one node from the boundary.
pub(crate) fn line_derivative(
    n: usize,
    h: f64,
    order: FdOrder,
    get: impl Fn(usize) -> f64,
    mut put: impl FnMut(usize, f64),
) {
    debug_assert!(n >= 5);
    put(0, (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h));
    put(
        n - 1,
        (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) / (2.0 * h),
    );
    match order {
        FdOrder::Two => {
            for t in 1..n - 1 {
                put(t, (get(t + 1) - get(t - 1)) / (2.0 * h));
            }
        }
        FdOrder::Four => {
            put(1, (get(2) - get(0)) / (2.0 * h));
            put(n - 2, (get(n - 1) - get(n - 3)) / (2.0 * h));
            for t in 2..n - 2 {
                let v = (get(t - 2) - 8.0 * get(t - 1) + 8.0 * get(t + 1) - get(t + 2))
                    / (12.0 * h);
                put(t, v);
            }
        }
    }
}

/// A real-valued function sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    data: Vec<f64>,
}

impl ScalarField {
    /// Samples `f(x, y, z)` on the grid.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        grid.for_each_node(|_, p| data.push(f(p)));
        ScalarField { grid, data }
    }

    /// Constant field.
    pub fn constant(grid: GridSpec, value: f64) -> Self {
        ScalarField {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// All-zero field.
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Raw values in row-major node order.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, node: [usize; 3]) -> f64 {
        self.data[self.grid.idx(node[0], node[1], node[2])]
    }

    #[inline]
    pub fn set(&mut self, node: [usize; 3], value: f64) {
        let idx = self.grid.idx(node[0], node[1], node[2]);
        self.data[idx] = value;
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip of fields on different grids");
        ScalarField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a * b)
    }

    /// Pointwise quotient with masking: nodes where
    /// `|denominator| < MASK_REL · sup|denominator|` become NaN.
    pub fn div_masked(&self, den: &ScalarField) -> Self {
        let floor = crate::report::MASK_REL * den.sup_abs();
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

    /// Mean over unmasked values.
    pub fn mean(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &v in &self.data {
            if !v.is_nan() {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    }

    /// Values at nodes at least `collar` nodes away from every boundary face.
    /// A collar too wide for the grid yields the full grid (collar clamped).
    pub fn interior_values(&self, collar: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.grid.n;
        let c = [
            effective_collar(n[0], collar),
            effective_collar(n[1], collar),
            effective_collar(n[2], collar),
        ];
        let grid = self.grid;
        (c[0]..n[0] - c[0]).flat_map(move |i| {
            (c[1]..n[1] - c[1]).flat_map(move |j| {
                (c[2]..n[2] - c[2]).map(move |k| self.data[grid.idx(i, j, k)])
            })
        })
    }

    /// Partial derivative along `axis` with the given stencil order.
    pub fn derivative(&self, axis: usize, order: FdOrder) -> Result<ScalarField> {
        GridSpec::check_axis(axis)?;
        let grid = self.grid;
        let n_axis = grid.n[axis];
        let h = grid.spacing[axis];
        let stride = grid.stride(axis);
        let mut out = vec![0.0; grid.len()];
        for_each_line(grid, axis, |start| {
            line_derivative(
                n_axis,
                h,
                order,
                |t| self.data[start + t * stride],
                |t, v| out[start + t * stride] = v,
            );
        });
        Ok(ScalarField { grid, data: out })
    }

    /// Writes the field as CSV with header `i,j,k,x,y,z,value`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "i,j,k,x,y,z,value")?;
        let mut row = Ok(());
        self.grid.for_each_node(|node, p| {
            if row.is_ok() {
                row = writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    node[0],
                    node[1],
                    node[2],
                    p[0],
                    p[1],
                    p[2],
                    self.at(node)
                );
            }
        });
        row?;
        Ok(())
    }
}

pub(crate) fn effective_collar(n: usize, collar: usize) -> usize {
    if 2 * collar >= n {
        0
    } else {
        collar
    }
}

/// Calls `f` with the flat start index of every grid line along `axis`.
pub(crate) fn for_each_line(grid: GridSpec, axis: usize, mut f: impl FnMut(usize)) {
    let (b, c) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    for ib in 0..grid.n[b] {
        for ic in 0..grid.n[c] {
            let mut node = [0usize; 3];
            node[b] = ib;
            node[c] = ic;
            f(grid.idx(node[0], node[1], node[2]));
        }
    }
}

/// An ℝ³-valued function sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    data: Vec<[f64; 3]>,
}

impl VectorField {
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        grid.for_each_node(|_, p| data.push(f(p)));
        VectorField { grid, data }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        VectorField {
            grid,
            data: vec![[0.0; 3]; grid.len()],
        }
    }

    /// Assembles a vector field from three component fields on one grid.
    pub fn from_components(c: [&ScalarField; 3]) -> Self {
        let grid = c[0].grid();
        assert!(
            c[1].grid() == grid && c[2].grid() == grid,
            "components on different grids"
        );
        let n = grid.len();
        let mut data = Vec::with_capacity(n);
        for idx in 0..n {
            data.push([c[0].values()[idx], c[1].values()[idx], c[2].values()[idx]]);
        }
        VectorField { grid, data }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.data
    }

    #[inline]
    pub fn at(&self, node: [usize; 3]) -> [f64; 3] {
        self.data[self.grid.idx(node[0], node[1], node[2])]
    }

    #[inline]
    pub fn set(&mut self, node: [usize; 3], value: [f64; 3]) {
        let idx = self.grid.idx(node[0], node[1], node[2]);
        self.data[idx] = value;
    }

    /// Extracts one Cartesian component as a scalar field.
    pub fn component(&self, c: usize) -> ScalarField {
        assert!(c < 3);
        let mut out = ScalarField::zeros(self.grid);
        for (idx, v) in self.data.iter().enumerate() {
            // Row-major order matches ScalarField storage.
            outset(&mut out, idx, v[c]);
        }
        out
    }

    /// Pointwise map on vectors.
    pub fn map(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        VectorField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two vector fields.
    pub fn zip(&self, other: &VectorField, f: impl Fn([f64; 3], [f64; 3]) -> [f64; 3]) -> Self {
        assert_eq!(self.grid, other.grid, "zip of fields on different grids");
        VectorField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Pointwise dot product.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        assert_eq!(self.grid, other.grid, "dot of fields on different grids");
        let mut out = ScalarField::zeros(self.grid);
        for idx in 0..self.data.len() {
            let a = self.data[idx];
            let b = other.data[idx];
            outset(&mut out, idx, a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
        }
        out
    }

    /// Pointwise squared Euclidean norm.
    pub fn norm_sq(&self) -> ScalarField {
        self.dot(self)
    }

    pub fn add(&self, other: &VectorField) -> Self {
        self.zip(other, |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        self.zip(other, |a, b| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
    }

    /// Adds `s(x)·other(x)` pointwise, with a scalar field coefficient.
    pub fn add_scaled(&self, s: &ScalarField, other: &VectorField) -> Self {
        assert_eq!(self.grid, s.grid(), "coefficient on different grid");
        let mut out = self.clone();
        for idx in 0..out.data.len() {
            let c = s.values()[idx];
            for m in 0..3 {
                out.data[idx][m] += c * other.data[idx][m];
            }
        }
        out
    }

    /// Componentwise partial derivative.
    pub fn derivative(&self, axis: usize, order: FdOrder) -> Result<VectorField> {
        GridSpec::check_axis(axis)?;
        let grid = self.grid;
        let n_axis = grid.n[axis];
        let h = grid.spacing[axis];
        let stride = grid.stride(axis);
        let mut out = vec![[0.0; 3]; grid.len()];
        for c in 0..3 {
            for_each_line(grid, axis, |start| {
                line_derivative(
                    n_axis,
                    h,
                    order,
                    |t| self.data[start + t * stride][c],
                    |t, v| out[start + t * stride][c] = v,
                );
            });
        }
        Ok(VectorField { grid, data: out })
    }

    /// Sup over nodes of the max-norm of the vector values.
    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| {
            m.max(v[0].abs()).max(v[1].abs()).max(v[2].abs())
        })
    }
}

fn outset(field: &mut ScalarField, flat: usize, value: f64) {
    // Helper writing by flat index while keeping `data` private.
    field.data[flat] = value;
}

/// A 1-form `ω = g₁ dx₁ + g₂ dx₂ + g₃ dx₃` with sampled coefficients.
#[derive(Clone, Debug)]
pub struct OneForm {
    g: [ScalarField; 3],
}

impl OneForm {
    pub fn new(g: [ScalarField; 3]) -> Self {
        let grid = g[0].grid();
        assert!(
            g[1].grid() == grid && g[2].grid() == grid,
            "1-form coefficients on different grids"
        );
        OneForm { g }
    }

    pub fn coefficient(&self, axis: usize) -> &ScalarField {
        &self.g[axis]
    }

    pub fn grid(&self) -> GridSpec {
        self.g[0].grid()
    }

    /// Sup/RMS of the three antisymmetrized mixed partials
    /// `∂_i g_j − ∂_j g_i`, computed with second-order differences. Zero (to
    /// truncation error) exactly when the form is closed.
    pub fn closedness_residual(&self, name: &str, tolerance: f64, collar: usize) -> ResidualReport {
        let field = self.closedness_field();
        ResidualReport::from_field(name, &field, tolerance, collar)
    }

    /// Pointwise max over the three pairs of `|∂_i g_j − ∂_j g_i|`.
    pub fn closedness_field(&self) -> ScalarField {
        let grid = self.grid();
        let mut out = ScalarField::zeros(grid);
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let dgj = self.g[j].derivative(i, FdOrder::Two).expect("axis valid");
            let dgi = self.g[i].derivative(j, FdOrder::Two).expect("axis valid");
            let r = dgj.sub(&dgi);
            out = out.zip(&r, |m, v| m.max(v.abs()));
        }
        out
    }

    /// Scale of the coefficients, for tolerance selection.
    pub fn scale(&self) -> f64 {
        self.g[0]
            .sup_abs()
            .max(self.g[1].sup_abs())
            .max(self.g[2].sup_abs())
    }

    /// Sup of the six cross-derivative fields `∂_i g_j` (`i ≠ j`) over the
    /// interior, skipping masked nodes. These are the fields entering the
    /// closedness residual, so they set its tolerance scale.
    pub fn closedness_scale(&self, collar: usize) -> f64 {
        let mut s = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let d = self.g[j].derivative(i, FdOrder::Two).expect("axis valid");
                s = s.max(
                    d.interior_values(collar)
                        .fold(0.0f64, |m, v| if v.is_nan() { m } else { m.max(v.abs()) }),
                );
            }
        }
        s
    }

    /// Potential by trapezoid-rule accumulation along lattice paths, anchored
    /// to `base_value` at `base_node`. The sweep fills the axis-1 line through
    /// the base node, then axis-2 lines through that line, then axis-3 lines;
    /// for a closed form the result is second-order accurate and
    /// path-independent up to truncation error.
    pub fn integrate(&self, base_node: [usize; 3], base_value: f64) -> Result<ScalarField> {
        self.integrate_with_order(base_node, base_value, [0, 1, 2])
    }

    /// Same accumulation with a caller-chosen axis sweep order; comparing two
    /// orders measures path dependence (closedness failure) directly.
    pub fn integrate_with_order(
        &self,
        base_node: [usize; 3],
        base_value: f64,
        order: [usize; 3],
    ) -> Result<ScalarField> {
        let grid = self.grid();
        grid.check_node(base_node)?;
        {
            let mut sorted = order;
            sorted.sort_unstable();
            if sorted != [0, 1, 2] {
                return Err(Error::AxisOutOfRange(order[0].max(order[1]).max(order[2])));
            }
        }
        let mut out = ScalarField::zeros(grid);
        out.set(base_node, base_value);

        // Stage 0: one line; stage 1: a plane of lines; stage 2: the volume.
        let a0 = order[0];
        let a1 = order[1];
        let a2 = order[2];
        self.sweep_line(&mut out, base_node, a0);
        let mut start = base_node;
        for t0 in 0..grid.n[a0] {
            start[a0] = t0;
            self.sweep_line(&mut out, start, a1);
        }
        for t0 in 0..grid.n[a0] {
            start[a0] = t0;
            for t1 in 0..grid.n[a1] {
                start[a1] = t1;
                self.sweep_line(&mut out, start, a2);
            }
        }
        Ok(out)
    }

    /// Trapezoid accumulation along the `axis` line through `from`, both
    /// directions, assuming `out[from]` already holds the potential there.
    fn sweep_line(&self, out: &mut ScalarField, from: [usize; 3], axis: usize) {
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
