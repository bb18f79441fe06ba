//! Closed-form reference charts: exact Lamé coefficients, derivatives,
//! rotational coefficients, and normals for the systems used as ground truth
//! by the tests and the CLI.
//!
//! Five charts are provided:
//!
//! - `flat_guichard` — `f = (x, y, √2 z)`, `H = (1, 1, √2)`; a flat Guichard
//!   net on `[−1,1]³`.
//! - `six_sphere` — the inversion of the flat chart: `H = (1/D, 1/D, √2/D)`
//!   with `D = x² + y² + 2z²`, on `[0.5, 1.5]³` (singular only at the
//!   origin). A Guichard net.
//! - `six_sphere_associated(c)` — the associated (Combescure) systems of the
//!   six-sphere net: `Ĥ₁ = (c + √2(y²+z²))/D`, `Ĥ₂ = (c − √2(x²+z²))/D`,
//!   `Ĥ₃ = (√2c − x² + y²)/D`; constant trace `χ ≡ 1` (a 1-system).
//! - `six_sphere_dual(c)` — the dual Guichard nets
//!   `H*_i = h*_i H_i` with `h*_i = −(h_i⁰ + c)² + ε_i/H_i²`.
//! - `spherical_control` — ordinary spherical coordinates, `H = (1, r,
//!   r sin θ)`; a genuine orthogonal system that is *not* Guichard, used as a
//!   negative control.
//!
//! The associated and dual charts share the six-sphere normals and rotational
//! coefficients (they are Combescure transforms of it), so their `β` comes
//! from the base closed form; this avoids quotients through the interior
//! zeros of `Ĥ₃` and `H*`. Their immersions carry no closed form and are
//! recovered by integrating the exact one-form `Σ H_i N_i dx_i` in `sample`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, OneForm, ScalarField, VectorField};
use crate::tos::{Anchor, OrthogonalSystem, Rotations};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Flat,
    SixSphere,
    Associated,
    Dual,
    Spherical,
}

/// A reference chart with exact evaluators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticChart {
    kind: Kind,
    /// Family parameter of the associated/dual constructions; unused (0)
    /// for the other charts.
    c: f64,
}

/// Registry metadata for one chart, as listed by the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct ChartInfo {
    pub name: &'static str,
    pub takes_parameter: bool,
    pub classification: &'static str,
    pub recommended_box: [[f64; 2]; 3],
}

/// All chart names with their metadata.
pub fn registry() -> Vec<ChartInfo> {
    vec![
        ChartInfo {
            name: "flat_guichard",
            takes_parameter: false,
            classification: "guichard",
            recommended_box: AnalyticChart::flat_guichard().recommended_box(),
        },
        ChartInfo {
            name: "six_sphere",
            takes_parameter: false,
            classification: "guichard",
            recommended_box: AnalyticChart::six_sphere().recommended_box(),
        },
        ChartInfo {
            name: "six_sphere_associated",
            takes_parameter: true,
            classification: "one_system",
            recommended_box: AnalyticChart::six_sphere_associated(0.0).recommended_box(),
        },
        ChartInfo {
            name: "six_sphere_dual",
            takes_parameter: true,
            classification: "guichard",
            recommended_box: AnalyticChart::six_sphere_dual(0.0).recommended_box(),
        },
        ChartInfo {
            name: "spherical_control",
            takes_parameter: false,
            classification: "control",
            recommended_box: AnalyticChart::spherical_control().recommended_box(),
        },
    ]
}

#[inline]
fn d_of(p: [f64; 3]) -> f64 {
    p[0] * p[0] + p[1] * p[1] + 2.0 * p[2] * p[2]
}

#[inline]
fn grad_d(p: [f64; 3]) -> [f64; 3] {
    [2.0 * p[0], 2.0 * p[1], 4.0 * p[2]]
}

/// `u = (x, y, √2 z)`, the flat immersion whose inversion is the six-sphere
/// chart; `|u|² = D`.
#[inline]
fn u_of(p: [f64; 3]) -> [f64; 3] {
    [p[0], p[1], SQRT2 * p[2]]
}

/// Numerators `P_i` of the associated coefficients `Ĥ_i = P_i/D`.
#[inline]
fn assoc_p(c: f64, p: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = p;
    [
        c + SQRT2 * (y * y + z * z),
        c - SQRT2 * (x * x + z * z),
        SQRT2 * c - x * x + y * y,
    ]
}

#[inline]
fn assoc_dp(axis: usize, p: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = p;
    match axis {
        0 => [0.0, -2.0 * SQRT2 * x, -2.0 * x],
        1 => [2.0 * SQRT2 * y, 0.0, 2.0 * y],
        _ => [2.0 * SQRT2 * z, -2.0 * SQRT2 * z, 0.0],
    }
}

impl AnalyticChart {
    pub fn flat_guichard() -> Self {
        AnalyticChart { kind: Kind::Flat, c: 0.0 }
    }

    pub fn six_sphere() -> Self {
        AnalyticChart { kind: Kind::SixSphere, c: 0.0 }
    }

    pub fn six_sphere_associated(c: f64) -> Self {
        AnalyticChart { kind: Kind::Associated, c }
    }

    pub fn six_sphere_dual(c: f64) -> Self {
        AnalyticChart { kind: Kind::Dual, c }
    }

    pub fn spherical_control() -> Self {
        AnalyticChart { kind: Kind::Spherical, c: 0.0 }
    }

    /// Looks a chart up by registry name (hyphens and underscores are
    /// interchangeable); `c` is the family parameter where one is taken.
    pub fn instantiate(name: &str, c: Option<f64>) -> Result<AnalyticChart> {
        let key = name.replace('-', "_");
        let c = c.unwrap_or(0.0);
        match key.as_str() {
            "flat_guichard" => Ok(Self::flat_guichard()),
            "six_sphere" => Ok(Self::six_sphere()),
            "six_sphere_associated" => Ok(Self::six_sphere_associated(c)),
            "six_sphere_dual" => Ok(Self::six_sphere_dual(c)),
            "spherical_control" => Ok(Self::spherical_control()),
            _ => Err(Error::UnknownChart(name.into())),
        }
    }

    /// Chart name with its parameter, used as system provenance.
    pub fn name(&self) -> String {
        match self.kind {
            Kind::Flat => "flat_guichard".into(),
            Kind::SixSphere => "six_sphere".into(),
            Kind::Associated => format!("six_sphere_associated(c={})", self.c),
            Kind::Dual => format!("six_sphere_dual(c={})", self.c),
            Kind::Spherical => "spherical_control".into(),
        }
    }

    /// The family parameter (0 for non-parametric charts).
    pub fn parameter(&self) -> f64 {
        self.c
    }

    pub fn classification(&self) -> &'static str {
        match self.kind {
            Kind::Flat | Kind::SixSphere | Kind::Dual => "guichard",
            Kind::Associated => "one_system",
            Kind::Spherical => "control",
        }
    }

    /// Box on which the evaluators are smooth and the tests run.
    pub fn recommended_box(&self) -> [[f64; 2]; 3] {
        match self.kind {
            Kind::Flat => [[-1.0, 1.0]; 3],
            Kind::SixSphere | Kind::Associated | Kind::Dual => [[0.5, 1.5]; 3],
            Kind::Spherical => {
                let half = std::f64::consts::FRAC_PI_2;
                [[1.5, 2.5], [half - 0.5, half + 0.5], [0.3, 1.3]]
            }
        }
    }

    /// Uniform n×n×n grid on the recommended box.
    pub fn default_grid(&self, n: usize) -> Result<GridSpec> {
        GridSpec::new([n, n, n], self.recommended_box())
    }

    /// `σ = sign det(N₁,N₂,N₃)`: −1 for the six-sphere family (the inversion
    /// reflects the frame), +1 otherwise.
    pub fn orientation(&self) -> f64 {
        match self.kind {
            Kind::SixSphere | Kind::Associated | Kind::Dual => -1.0,
            _ => 1.0,
        }
    }

    /// Exact Lamé coefficients `(H₁, H₂, H₃)` at a point.
    pub fn lame_at(&self, p: [f64; 3]) -> [f64; 3] {
        match self.kind {
            Kind::Flat => [1.0, 1.0, SQRT2],
            Kind::SixSphere => {
                let d = d_of(p);
                [1.0 / d, 1.0 / d, SQRT2 / d]
            }
            Kind::Associated => {
                let d = d_of(p);
                let q = assoc_p(self.c, p);
                [q[0] / d, q[1] / d, q[2] / d]
            }
            Kind::Dual => {
                let d = d_of(p);
                let q = assoc_p(self.c, p);
                [
                    (d * d - q[0] * q[0]) / d,
                    (d * d - q[1] * q[1]) / d,
                    (-SQRT2 * d * d / 2.0 - q[2] * q[2] / SQRT2) / d,
                ]
            }
            Kind::Spherical => [1.0, p[0], p[0] * p[1].sin()],
        }
    }

    /// Exact partials `(∂_a H₁, ∂_a H₂, ∂_a H₃)` at a point.
    pub fn dlame_at(&self, axis: usize, p: [f64; 3]) -> [f64; 3] {
        match self.kind {
            Kind::Flat => [0.0; 3],
            Kind::SixSphere => {
                let d = d_of(p);
                let dd = grad_d(p)[axis];
                [-dd / (d * d), -dd / (d * d), -SQRT2 * dd / (d * d)]
            }
            Kind::Associated => {
                let d = d_of(p);
                let dd = grad_d(p)[axis];
                let q = assoc_p(self.c, p);
                let dq = assoc_dp(axis, p);
                std::array::from_fn(|j| (dq[j] * d - q[j] * dd) / (d * d))
            }
            Kind::Dual => {
                let d = d_of(p);
                let dd = grad_d(p)[axis];
                let q = assoc_p(self.c, p);
                let dq = assoc_dp(axis, p);
                let s = [
                    d * d - q[0] * q[0],
                    d * d - q[1] * q[1],
                    -SQRT2 * d * d / 2.0 - q[2] * q[2] / SQRT2,
                ];
                let ds = [
                    2.0 * d * dd - 2.0 * q[0] * dq[0],
                    2.0 * d * dd - 2.0 * q[1] * dq[1],
                    -SQRT2 * d * dd - SQRT2 * q[2] * dq[2],
                ];
                std::array::from_fn(|j| (ds[j] * d - s[j] * dd) / (d * d))
            }
            Kind::Spherical => match axis {
                0 => [0.0, 1.0, p[1].sin()],
                1 => [0.0, 0.0, p[0] * p[1].cos()],
                _ => [0.0; 3],
            },
        }
    }

    /// Exact rotational coefficient `β_ij` (`i ≠ j`) at a point. The
    /// six-sphere family shares the base chart's coefficients (Combescure
    /// transforms leave `β` unchanged).
    pub fn beta_at(&self, i: usize, j: usize, p: [f64; 3]) -> f64 {
        assert!(i < 3 && j < 3 && i != j);
        match self.kind {
            Kind::Flat => 0.0,
            Kind::SixSphere | Kind::Associated | Kind::Dual => {
                // β_ij = −2 c_j u_i / D with u = (x, y, √2 z), c = (1,1,√2).
                let cj = [1.0, 1.0, SQRT2][j];
                -2.0 * cj * u_of(p)[i] / d_of(p)
            }
            Kind::Spherical => match (i, j) {
                (0, 1) => 1.0,
                (0, 2) => p[1].sin(),
                (1, 2) => p[1].cos(),
                _ => 0.0,
            },
        }
    }

    /// Exact unit normal `N_i` at a point.
    pub fn normal_at(&self, i: usize, p: [f64; 3]) -> [f64; 3] {
        assert!(i < 3);
        match self.kind {
            Kind::Flat => {
                let mut e = [0.0; 3];
                e[i] = 1.0;
                e
            }
            Kind::SixSphere | Kind::Associated | Kind::Dual => {
                // Reflection of the flat frame in the radial direction.
                let u = u_of(p);
                let d = d_of(p);
                let mut n = [0.0; 3];
                n[i] = 1.0;
                for c in 0..3 {
                    n[c] -= 2.0 * u[i] * u[c] / d;
                }
                n
            }
            Kind::Spherical => {
                let (st, ct) = p[1].sin_cos();
                let (sp, cp) = p[2].sin_cos();
                match i {
                    0 => [st * cp, st * sp, ct],
                    1 => [ct * cp, ct * sp, -st],
                    _ => [-sp, cp, 0.0],
                }
            }
        }
    }

    /// Closed-form immersion, where one exists (`None` for the associated and
    /// dual charts, whose positions are recovered by integration).
    pub fn position_at(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        match self.kind {
            Kind::Flat => Some(u_of(p)),
            Kind::SixSphere => {
                let u = u_of(p);
                let d = d_of(p);
                Some([u[0] / d, u[1] / d, u[2] / d])
            }
            Kind::Associated | Kind::Dual => None,
            Kind::Spherical => {
                let (st, ct) = p[1].sin_cos();
                let (sp, cp) = p[2].sin_cos();
                Some([p[0] * st * cp, p[0] * st * sp, p[0] * ct])
            }
        }
    }

    /// Closed-form Combescure multipliers `h_i = h_i⁰ + c` of the associated
    /// family, for the charts whose associated systems have closed forms
    /// (`flat_guichard` and `six_sphere`).
    pub fn associated_multipliers_at(&self, c: f64, p: [f64; 3]) -> Option<[f64; 3]> {
        match self.kind {
            Kind::Flat => Some([1.0 / SQRT2 + c, -1.0 / SQRT2 + c, c]),
            Kind::SixSphere => {
                let [x, y, z] = p;
                Some([
                    SQRT2 * (y * y + z * z) + c,
                    -SQRT2 * (x * x + z * z) + c,
                    (y * y - x * x) / SQRT2 + c,
                ])
            }
            _ => None,
        }
    }

    /// Closed-form dual multipliers `h*_i = −(h_i⁰ + c)² + ε_i/H_i²` of the
    /// same charts.
    pub fn dual_multipliers_at(&self, c: f64, p: [f64; 3]) -> Option<[f64; 3]> {
        let h = self.associated_multipliers_at(c, p)?;
        let lame = self.lame_at(p);
        Some(std::array::from_fn(|i| {
            -h[i] * h[i] + crate::tos::EPSILON[i] / (lame[i] * lame[i])
        }))
    }

    fn check_grid(&self, grid: GridSpec) -> Result<()> {
        let bx = self.recommended_box();
        let hi = grid.upper();
        for a in 0..3 {
            let slack = 1e-9 * (bx[a][1] - bx[a][0]);
            if grid.origin[a] < bx[a][0] - slack || hi[a] > bx[a][1] + slack {
                return Err(Error::Domain(format!(
                    "grid axis {a} spans [{}, {}] outside the chart box [{}, {}]",
                    grid.origin[a], hi[a], bx[a][0], bx[a][1]
                )));
            }
        }
        Ok(())
    }

    /// Samples the chart on a grid inside its recommended box. `H`, `N`, and
    /// `β` come from the exact evaluators; the immersion comes from the
    /// closed form when there is one, otherwise from trapezoid integration of
    /// the exact one-form `Σ H_a N_a dx_a` anchored to 0 at the grid center.
    pub fn sample(&self, grid: GridSpec) -> Result<OrthogonalSystem> {
        self.check_grid(grid)?;
        let h: [ScalarField; 3] =
            std::array::from_fn(|i| ScalarField::from_fn(grid, |p| self.lame_at(p)[i]));
        let n: [VectorField; 3] =
            std::array::from_fn(|i| VectorField::from_fn(grid, |p| self.normal_at(i, p)));
        let beta = Rotations::from_fn(grid, |i, j, p| self.beta_at(i, j, p));
        let mut anchor = None;
        let f = if self.position_at(grid.origin).is_some() {
            VectorField::from_fn(grid, |p| self.position_at(p).expect("closed form"))
        } else {
            let base = grid.center_node();
            let mut parts = Vec::with_capacity(3);
            for c in 0..3 {
                let omega = OneForm::new(std::array::from_fn(|a| h[a].mul(&n[a].component(c))));
                parts.push(omega.integrate(base, 0.0)?);
            }
            anchor = Some(Anchor {
                node: base,
                point: [0.0; 3],
            });
            VectorField::from_components([&parts[0], &parts[1], &parts[2]])
        };
        let mut sys = OrthogonalSystem::assemble(f, h, n, beta, self.name())?;
        sys.anchor = anchor;
        debug_assert_eq!(sys.orientation, self.orientation());
        Ok(sys)
    }
}
