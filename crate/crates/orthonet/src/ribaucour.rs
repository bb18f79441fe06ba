//! Ribaucour transformations of triply orthogonal systems.
//!
//! A Ribaucour transform maps a system `f` to a second system `f′` whose
//! corresponding coordinate surfaces envelope a common sphere congruence.
//! It is described by four functions `(γ₁, γ₂, γ₃, φ)` satisfying
//!
//! `∂_i γ_j = β_ji γ_i  (i ≠ j)` and `∂_i φ = H_i γ_i`,
//!
//! and acts pointwise by `f′ = f − (2φ/A) Σ γ_m N_m` with
//! `A = γ₁² + γ₂² + γ₃²`, `H′_i = H_i − 2φθ_i/A` and
//! `β′_ij = β_ij − 2γ_iθ_j/A`, where `θ_i = ∂_iγ_i + β_jiγ_j + β_kiγ_k`.
//! The enveloped spheres have radii `R_i = −φ/γ_i`; the normals reflect in
//! `f̄ = Σ γ_m N_m`, so the orientation flips. Every transform factors as a
//! Combescure transform, an inversion, and another Combescure step: `f̄` is a
//! Combescure transform of `f` with Lamé coefficients `θ_i`, its inversion
//! `f̄′ = f̄/|f̄|²` satisfies `∂_j(θ_i/A) = β′_ji (θ_j/A)`, and
//! `f′ = f − 2φ f̄′`. Conversely a Combescure transform induces a
//! one-parameter family of Ribaucour transforms via `γ_i = f̄·N_i` and a
//! quadrature for `φ`.
//!
//! For Guichard nets (`ε = (1, 1, −1)`), the transforms respecting the class
//! come from Bianchi's linear system: a pair `(γ_i, γ̄_i)` with
//!
//! `∂_jγ_i = β_ij γ_j`, `θ_i = αγ̄_i`, `∂_jγ̄_i = β_ji γ̄_j`,
//! `ε_i∂_iγ̄_i + ε_jβ_ijγ̄_j + ε_kβ_ikγ̄_k = αγ_i`,
//!
//! constrained by `A = γ₁²+γ₂²+γ₃² = γ̄₁²+γ̄₂²−γ̄₃² = Ā`. The induced system
//! `f̄ = Σγ_iN_i` then satisfies the trace condition
//! `θ₁² + θ₂² − θ₃² = α²|f̄|²`. The Bäcklund-type transform
//! `R(f) = f − (2φ_λ/|f̄|²) f̄` with `φ = (1/α²)(H₁H̄₁ + H₂H̄₂ − H₃H̄₃)` and
//! `φ_λ = φ + λ` leaves the trace `4α²λφ_λ/|f̄|²`, hence is Guichard exactly
//! for `λ = 0`; with `λ = 0` the same formulas preserve every constant-trace
//! system. The transform commutes with the associated and dual
//! constructions: applying `R` (induced by one `f̄`) to an associated or dual
//! system of `f` yields an associated or dual system of `R(f)`, certified by
//! the relations `φH*_i + φ*H_i + 2φ̂Ĥ_i = (2/α²)H̄_i` and
//! `φφ* + φ̂² = |f̄|²/α²` together with the transformed G-system relation.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, OneForm, ScalarField, VectorField};
use crate::guichard::{check_gsystem_relation, check_guichard};
use crate::numerics::integrate_linear;
use crate::report::{field_scale, CheckOpts, ResidualReport, MASK_REL};
use crate::tos::{complement, Anchor, OrthogonalSystem, Rotations, EPSILON};

/// Ribaucour data `(γ₁, γ₂, γ₃, φ)` against a base system.
#[derive(Clone, Debug)]
pub struct RibaucourData {
    gamma: [ScalarField; 3],
    phi: ScalarField,
}

impl RibaucourData {
    /// Wraps the four fields, validating that they share one grid. The
    /// structure equations themselves are checked by
    /// [`check_ribaucour_data`].
    pub fn new(gamma: [ScalarField; 3], phi: ScalarField) -> Result<RibaucourData> {
        let grid = phi.grid();
        for g in &gamma {
            if g.grid() != grid {
                return Err(Error::GridMismatch(
                    "γ field grid differs from the φ grid".into(),
                ));
            }
        }
        Ok(RibaucourData { gamma, phi })
    }

    /// Builds the data from closed forms `γ(i, x)` and `φ(x)`.
    pub fn from_fn(
        grid: GridSpec,
        gamma: impl Fn(usize, [f64; 3]) -> f64,
        phi: impl Fn([f64; 3]) -> f64,
    ) -> RibaucourData {
        RibaucourData {
            gamma: std::array::from_fn(|i| ScalarField::from_fn(grid, |p| gamma(i, p))),
            phi: ScalarField::from_fn(grid, phi),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.phi.grid()
    }

    /// The field `γ_i`.
    pub fn gamma(&self, i: usize) -> &ScalarField {
        &self.gamma[i]
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    /// `A = γ₁² + γ₂² + γ₃²`, the squared length of `Σ γ_m N_m`.
    pub fn a_field(&self) -> ScalarField {
        let s0 = self.gamma[0].mul(&self.gamma[0]);
        let s1 = self.gamma[1].mul(&self.gamma[1]);
        let s2 = self.gamma[2].mul(&self.gamma[2]);
        s0.add(&s1).add(&s2)
    }

    /// `θ_i = ∂_iγ_i + β_jiγ_j + β_kiγ_k`: the Lamé coefficients of the
    /// Combescure factor `f̄ = Σ γ_m N_m`.
    pub fn theta(&self, system: &OrthogonalSystem, opts: CheckOpts) -> Result<[ScalarField; 3]> {
        if system.grid != self.grid() {
            return Err(Error::GridMismatch(
                "Ribaucour data grid differs from the system".into(),
            ));
        }
        let make = |i: usize| -> Result<ScalarField> {
            let (j, k) = complement(i);
            Ok(self.gamma[i]
                .derivative(i, opts.order)?
                .add(&system.beta.beta(j, i).mul(&self.gamma[j]))
                .add(&system.beta.beta(k, i).mul(&self.gamma[k])))
        };
        Ok([make(0)?, make(1)?, make(2)?])
    }

    /// Radii `R_i = −φ/γ_i` of the enveloped sphere congruences, masked (NaN)
    /// where `|γ_i|` falls below the relative threshold (the `i`-th family of
    /// spheres degenerates to planes there).
    pub fn radii(&self) -> [ScalarField; 3] {
        let scale = self.gamma.iter().fold(0.0f64, |m, g| m.max(g.sup_abs()));
        let floor = MASK_REL * scale;
        std::array::from_fn(|i| {
            self.phi.zip(&self.gamma[i], |p, g| {
                if g.abs() < floor {
                    f64::NAN
                } else {
                    -p / g
                }
            })
        })
    }
}

/// Residual of the Ribaucour structure equations
/// `∂_i γ_j = β_ji γ_i (i ≠ j)` and `∂_i φ = H_i γ_i`, aggregated pointwise
/// by maximum absolute value over all nine conditions.
pub fn check_ribaucour_data(
    system: &OrthogonalSystem,
    data: &RibaucourData,
    opts: CheckOpts,
) -> Result<ResidualReport> {
    if data.grid() != system.grid {
        return Err(Error::GridMismatch(
            "Ribaucour data grid differs from the system".into(),
        ));
    }
    let grid = system.grid;
    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let lhs = data.gamma[j].derivative(i, opts.order)?;
            let rhs = system.beta.beta(j, i).mul(&data.gamma[i]);
            scale = scale.max(field_scale(&[&lhs, &rhs], opts.collar));
            let r = lhs.sub(&rhs);
            worst = worst.zip(&r, |m, v| m.max(v.abs()));
        }
        let lhs = data.phi.derivative(i, opts.order)?;
        let rhs = system.h[i].mul(&data.gamma[i]);
        scale = scale.max(field_scale(&[&lhs, &rhs], opts.collar));
        let r = lhs.sub(&rhs);
        worst = worst.zip(&r, |m, v| m.max(v.abs()));
    }
    Ok(ResidualReport::from_field(
        "ribaucour_data",
        &worst,
        opts.tolerance_for(&grid, scale),
        opts.collar,
    ))
}

/// Errors with [`Error::SmallDivisor`] unless `|field|` stays above the
/// relative masking threshold everywhere (the transform is genuinely singular
/// where its sphere congruence passes through the base point).
fn guard_divisor(field: &ScalarField, what: &'static str) -> Result<()> {
    let sup = field.sup_abs();
    if sup == 0.0 {
        return Err(Error::SmallDivisor {
            what,
            node: field.grid().center_node(),
            value: 0.0,
        });
    }
    let floor = MASK_REL * sup;
    let mut bad: Option<([usize; 3], f64)> = None;
    field.grid().for_each_node(|node, _| {
        let v = field.at(node);
        if v.abs() < floor && bad.is_none() {
            bad = Some((node, v));
        }
    });
    match bad {
        Some((node, value)) => Err(Error::SmallDivisor { what, node, value }),
        None => Ok(()),
    }
}

/// The Combescure factor `f̄ = Σ γ_m N_m` of a data set, as a plain vector
/// field (no integration).
fn combescure_factor(system: &OrthogonalSystem, data: &RibaucourData) -> VectorField {
    VectorField::zeros(system.grid)
        .add_scaled(&data.gamma[0], &system.n[0])
        .add_scaled(&data.gamma[1], &system.n[1])
        .add_scaled(&data.gamma[2], &system.n[2])
}

/// Applies a Ribaucour transform. All fields are produced pointwise:
///
/// `f′ = f − (2φ/A) Σ γ_m N_m`, `H′_i = H_i − 2φθ_i/A`,
/// `N′_i = N_i − (2γ_i/A) Σ γ_m N_m`, `β′_ij = β_ij − 2γ_iθ_j/A`.
///
/// The normals reflect in the congruence direction, so the orientation `σ`
/// flips. Errors if the data fails [`check_ribaucour_data`] or `A` falls
/// below the masking threshold.
pub fn apply_ribaucour(
    system: &OrthogonalSystem,
    data: &RibaucourData,
    opts: CheckOpts,
) -> Result<OrthogonalSystem> {
    let report = check_ribaucour_data(system, data, opts)?;
    if !report.pass {
        return Err(Error::Precondition(format!(
            "Ribaucour data violates its structure equations (sup residual {:e} > {:e})",
            report.sup, report.tolerance
        )));
    }
    let a = data.a_field();
    guard_divisor(&a, "A = γ₁²+γ₂²+γ₃² (the Ribaucour spheres meet the base point)")?;
    let inv_a = a.map(|v| 1.0 / v);
    let theta = data.theta(system, opts)?;
    let f_bar = combescure_factor(system, data);
    let grid = system.grid;

    let two_phi = data.phi.mul(&inv_a).scale(2.0);
    let f_new = system.f.add_scaled(&two_phi.scale(-1.0), &f_bar);
    let h_new: [ScalarField; 3] = std::array::from_fn(|i| system.h[i].sub(&two_phi.mul(&theta[i])));
    let n_new: [VectorField; 3] = std::array::from_fn(|i| {
        let coef = data.gamma[i].mul(&inv_a).scale(-2.0);
        system.n[i].add_scaled(&coef, &f_bar)
    });
    let mut beta_new = Rotations::zeros(grid);
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let shift = data.gamma[i].mul(&theta[j]).mul(&inv_a).scale(2.0);
            beta_new.set_beta(i, j, system.beta.beta(i, j).sub(&shift));
        }
    }
    let mut out = OrthogonalSystem::assemble(
        f_new,
        h_new,
        n_new,
        beta_new,
        format!("ribaucour({})", system.provenance),
    )?;
    out.orientation = -system.orientation;
    Ok(out)
}

/// The factorization of a Ribaucour transform into
/// Combescure transform → inversion → Combescure transform.
#[derive(Clone, Debug)]
pub struct RibaucourDecomposition {
    /// `f̄ = Σ γ_m N_m` with Lamé coefficients `θ_i` and the base system's
    /// frame and rotational coefficients.
    pub f_bar: OrthogonalSystem,
    /// `f̄′ = f̄/|f̄|²` (carries the transformed coefficients `β′`).
    pub inverted: OrthogonalSystem,
    /// Residual of `∂_i f̄ = θ_i N_i`: the assembled factor really has Lamé
    /// coefficients `θ`.
    pub lame_match: ResidualReport,
    /// Residual of `∂_j(θ_i/A) = β′_ji (θ_j/A)` multiplied through by `A²`:
    /// the inverted factor is a Combescure transform of the Ribaucour image.
    pub combescure: ResidualReport,
    /// Pointwise residual of `f′ = f − 2φ f̄′` against [`apply_ribaucour`].
    pub reconstruction: ResidualReport,
}

impl RibaucourDecomposition {
    pub fn pass(&self) -> bool {
        self.lame_match.pass && self.combescure.pass && self.reconstruction.pass
    }
}

/// Decomposes a Ribaucour transform through its Combescure factor
/// `f̄ = Σ γ_m N_m`: assembles `f̄` pointwise with Lamé coefficients `θ_i`,
/// inverts it, checks the displayed Combescure relation of the inverted
/// factor, and verifies the reconstruction `f′ = f − 2φ f̄′` against the
/// direct transform. Preconditions are those of [`apply_ribaucour`]; the
/// inversion additionally requires `|f̄|²` bounded away from zero.
pub fn decompose_ribaucour(
    system: &OrthogonalSystem,
    data: &RibaucourData,
    opts: CheckOpts,
) -> Result<RibaucourDecomposition> {
    let grid = system.grid;
    let a = data.a_field();
    guard_divisor(&a, "|f̄|² = γ₁²+γ₂²+γ₃² (the inversion center meets the factor)")?;
    let theta = data.theta(system, opts)?;
    let f_bar = OrthogonalSystem::assemble(
        combescure_factor(system, data),
        theta.clone(),
        system.n.clone(),
        system.beta.clone(),
        format!("fbar({})", system.provenance),
    )?;
    let lame_match = f_bar.check_parametrization(opts)?.renamed("fbar_lame");
    let inverted = f_bar.invert()?;

    // A² ∂_j(θ_i/A) − A² β′_ji (θ_j/A)
    //   = A ∂_jθ_i − θ_i ∂_jA − A β_ji θ_j + 2 γ_j θ_i θ_j,  i ≠ j.
    let da: [ScalarField; 3] = [
        a.derivative(0, opts.order)?,
        a.derivative(1, opts.order)?,
        a.derivative(2, opts.order)?,
    ];
    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let t0 = a.mul(&theta[i].derivative(j, opts.order)?);
            let t1 = theta[i].mul(&da[j]);
            let t2 = a.mul(system.beta.beta(j, i)).mul(&theta[j]);
            let t3 = data.gamma[j].mul(&theta[i]).mul(&theta[j]).scale(2.0);
            scale = scale.max(field_scale(&[&t0, &t1, &t2, &t3], opts.collar));
            let r = t0.sub(&t1).sub(&t2).add(&t3);
            worst = worst.zip(&r, |m, v| m.max(v.abs()));
        }
    }
    let combescure = ResidualReport::from_field(
        "decomposition_combescure",
        &worst,
        opts.tolerance_for(&grid, scale),
        opts.collar,
    );

    let applied = apply_ribaucour(system, data, opts)?;
    let recon = system.f.add_scaled(&data.phi.scale(-2.0), &inverted.f);
    let mut diff = ScalarField::zeros(grid);
    let mut rec_scale = 0.0f64;
    for c in 0..3 {
        let d = recon.component(c).sub(&applied.f.component(c));
        rec_scale = rec_scale.max(applied.f.component(c).sup_abs());
        diff = diff.zip(&d, |m, v| m.max(v.abs()));
    }
    // Both routes are pure pointwise algebra on the same θ, so they agree to
    // rounding; the tolerance is a roundoff allowance, not a grid default.
    let reconstruction =
        ResidualReport::from_field("reconstruction", &diff, 1e-12 * rec_scale.max(1.0), 0);

    Ok(RibaucourDecomposition {
        f_bar,
        inverted,
        lame_match,
        combescure,
        reconstruction,
    })
}

/// Builds the Ribaucour data induced by a Combescure transform:
/// `γ_i = f̄·N_i` by pointwise projection and `φ` by a quadrature of the
/// closed one-form `H_iγ_i dx_i`, anchored as `φ(p₀) = λ` at the transform's
/// integration anchor (the grid center when none is recorded). Varying `λ`
/// sweeps the one-parameter family of transforms induced by `f̄`.
///
/// Errors if the systems are not Combescure-related (shared rotational
/// coefficients) or the `φ`-gradient fails its closedness check.
pub fn induce_ribaucour_family(
    system: &OrthogonalSystem,
    comb_system: &OrthogonalSystem,
    lambda: f64,
    opts: CheckOpts,
) -> Result<RibaucourData> {
    if comb_system.grid != system.grid {
        return Err(Error::GridMismatch(
            "Combescure system grid differs from the base system".into(),
        ));
    }
    let related = check_shared_rotations(system, comb_system, opts)?;
    if !related.pass {
        return Err(Error::Precondition(format!(
            "the inducing system is not Combescure-related to the base \
             (shared-rotation residual sup {:e} > {:e})",
            related.sup, related.tolerance
        )));
    }
    let grid = system.grid;
    let gamma: [ScalarField; 3] = std::array::from_fn(|i| comb_system.f.dot(&system.n[i]));
    let form = OneForm::new(std::array::from_fn(|i| system.h[i].mul(&gamma[i])));
    let scale = form.scale().max(form.closedness_scale(opts.collar));
    let closed = form.closedness_residual(
        "phi_gradient",
        opts.tolerance_for(&grid, scale),
        opts.collar,
    );
    if !closed.pass {
        return Err(Error::Precondition(format!(
            "the φ-gradient H_iγ_i is not closed (sup residual {:e} > {:e}); \
             the Combescure relation between the systems is broken",
            closed.sup, closed.tolerance
        )));
    }
    let node = comb_system
        .anchor
        .map(|a| a.node)
        .unwrap_or_else(|| grid.center_node());
    let phi = form.integrate(node, lambda)?;
    RibaucourData::new(gamma, phi)
}

/// Bianchi data for transforms of Guichard nets: a coupled pair
/// `(γ_i, γ̄_i)` with spectral constant `α ≠ 0`, related by `θ_i = αγ̄_i` and
/// `θ̄_i = αγ_i` and constrained by `A = Ā`.
#[derive(Clone, Debug)]
pub struct BianchiData {
    gamma: [ScalarField; 3],
    gammabar: [ScalarField; 3],
    alpha: f64,
}

impl BianchiData {
    /// Wraps the six fields, validating grids and `α ≠ 0`. The differential
    /// relations are checked by [`check_bianchi_data`].
    pub fn new(
        gamma: [ScalarField; 3],
        gammabar: [ScalarField; 3],
        alpha: f64,
    ) -> Result<BianchiData> {
        if alpha == 0.0 {
            return Err(Error::Domain("Bianchi data needs α ≠ 0".into()));
        }
        let grid = gamma[0].grid();
        for g in gamma.iter().chain(gammabar.iter()) {
            if g.grid() != grid {
                return Err(Error::GridMismatch(
                    "Bianchi fields on different grids".into(),
                ));
            }
        }
        Ok(BianchiData {
            gamma,
            gammabar,
            alpha,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.gamma[0].grid()
    }

    pub fn gamma(&self, i: usize) -> &ScalarField {
        &self.gamma[i]
    }

    pub fn gammabar(&self, i: usize) -> &ScalarField {
        &self.gammabar[i]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `θ_i = αγ̄_i`: the Lamé coefficients of the induced system `Σγ_iN_i`.
    pub fn theta(&self, i: usize) -> ScalarField {
        self.gammabar[i].scale(self.alpha)
    }

    /// `θ̄_i = αγ_i`.
    pub fn theta_bar(&self, i: usize) -> ScalarField {
        self.gamma[i].scale(self.alpha)
    }

    /// `A = γ₁² + γ₂² + γ₃²`.
    pub fn a_field(&self) -> ScalarField {
        let s0 = self.gamma[0].mul(&self.gamma[0]);
        let s1 = self.gamma[1].mul(&self.gamma[1]);
        let s2 = self.gamma[2].mul(&self.gamma[2]);
        s0.add(&s1).add(&s2)
    }

    /// `Ā = γ̄₁² + γ̄₂² − γ̄₃²` (the ε-weighted counterpart of `A`).
    pub fn a_bar_field(&self) -> ScalarField {
        let s0 = self.gammabar[0].mul(&self.gammabar[0]);
        let s1 = self.gammabar[1].mul(&self.gammabar[1]);
        let s2 = self.gammabar[2].mul(&self.gammabar[2]);
        s0.add(&s1).sub(&s2)
    }
}

/// Residuals of the Bianchi relations, one report per family.
#[derive(Clone, Debug)]
pub struct BianchiReport {
    /// `∂_jγ_i − β_ijγ_j` over `i ≠ j`.
    pub gamma: ResidualReport,
    /// `∂_jγ̄_i − β_jiγ̄_j` over `i ≠ j`.
    pub gammabar: ResidualReport,
    /// `∂_iγ_i + β_jiγ_j + β_kiγ_k − αγ̄_i` per axis.
    pub theta: ResidualReport,
    /// `ε_i∂_iγ̄_i + ε_jβ_ijγ̄_j + ε_kβ_ikγ̄_k − αγ_i` per axis.
    pub theta_bar: ResidualReport,
    /// `A − Ā` (conserved along every lattice line).
    pub conservation: ResidualReport,
}

impl BianchiReport {
    pub fn pass(&self) -> bool {
        self.gamma.pass
            && self.gammabar.pass
            && self.theta.pass
            && self.theta_bar.pass
            && self.conservation.pass
    }
}

/// Checks the full first-order Bianchi system and the `A = Ā` constraint for
/// a data pair against a base system.
pub fn check_bianchi_data(
    system: &OrthogonalSystem,
    data: &BianchiData,
    opts: CheckOpts,
) -> Result<BianchiReport> {
    if data.grid() != system.grid {
        return Err(Error::GridMismatch(
            "Bianchi data grid differs from the system".into(),
        ));
    }
    let grid = system.grid;
    let off_diagonal = |bar: bool| -> Result<ResidualReport> {
        let mut worst = ScalarField::zeros(grid);
        let mut scale = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let (lhs, rhs) = if bar {
                    (
                        data.gammabar[i].derivative(j, opts.order)?,
                        system.beta.beta(j, i).mul(&data.gammabar[j]),
                    )
                } else {
                    (
                        data.gamma[i].derivative(j, opts.order)?,
                        system.beta.beta(i, j).mul(&data.gamma[j]),
                    )
                };
                scale = scale.max(field_scale(&[&lhs, &rhs], opts.collar));
                let r = lhs.sub(&rhs);
                worst = worst.zip(&r, |m, v| m.max(v.abs()));
            }
        }
        let name = if bar { "bianchi_gammabar" } else { "bianchi_gamma" };
        Ok(ResidualReport::from_field(
            name,
            &worst,
            opts.tolerance_for(&grid, scale),
            opts.collar,
        ))
    };
    let gamma = off_diagonal(false)?;
    let gammabar = off_diagonal(true)?;

    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for i in 0..3 {
        let (j, k) = complement(i);
        let lhs = data.gamma[i]
            .derivative(i, opts.order)?
            .add(&system.beta.beta(j, i).mul(&data.gamma[j]))
            .add(&system.beta.beta(k, i).mul(&data.gamma[k]));
        let rhs = data.theta(i);
        scale = scale.max(field_scale(&[&lhs, &rhs], opts.collar));
        let r = lhs.sub(&rhs);
        worst = worst.zip(&r, |m, v| m.max(v.abs()));
    }
    let theta = ResidualReport::from_field(
        "bianchi_theta",
        &worst,
        opts.tolerance_for(&grid, scale),
        opts.collar,
    );

    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for i in 0..3 {
        let (j, k) = complement(i);
        let lhs = data.gammabar[i]
            .derivative(i, opts.order)?
            .scale(EPSILON[i])
            .add(&system.beta.beta(i, j).mul(&data.gammabar[j]).scale(EPSILON[j]))
            .add(&system.beta.beta(i, k).mul(&data.gammabar[k]).scale(EPSILON[k]));
        let rhs = data.theta_bar(i);
        scale = scale.max(field_scale(&[&lhs, &rhs], opts.collar));
        let r = lhs.sub(&rhs);
        worst = worst.zip(&r, |m, v| m.max(v.abs()));
    }
    let theta_bar = ResidualReport::from_field(
        "bianchi_theta_bar",
        &worst,
        opts.tolerance_for(&grid, scale),
        opts.collar,
    );

    let a = data.a_field();
    let a_bar = data.a_bar_field();
    let conservation = ResidualReport::from_field(
        "bianchi_conservation",
        &a.sub(&a_bar),
        opts.tolerance_for(&grid, field_scale(&[&a, &a_bar], opts.collar)),
        0,
    );

    Ok(BianchiReport {
        gamma,
        gammabar,
        theta,
        theta_bar,
        conservation,
    })
}

/// Result of [`integrate_bianchi`]: the data pair, the induced
/// `α²|f̄|²`-system, and the integration diagnostics.
#[derive(Clone, Debug)]
pub struct BianchiIntegration {
    pub data: BianchiData,
    /// `f̄ = Σ γ_m N_m` with Lamé coefficients `θ_i = αγ̄_i`, sharing the
    /// seed system's frame and rotational coefficients.
    pub f_bar: OrthogonalSystem,
    /// Mismatch between sweeping axes in order (x, y, z) and (z, y, x);
    /// residual above tolerance signals a non-Guichard input or a grid too
    /// coarse for the coefficients.
    pub path_dependence: ResidualReport,
    /// `A − Ā` drift (conserved along every lattice line in exact
    /// arithmetic, so this measures pure integrator error).
    pub conservation: ResidualReport,
    /// `θ₁² + θ₂² − θ₃² − α²|f̄|²`.
    pub trace: ResidualReport,
}

/// Pointwise residual `χ(f̄) − α²|f̄|²` of the trace condition that makes
/// `f̄` an `α²|f̄|²`-system.
fn alpha_trace_residual(f_bar: &OrthogonalSystem, alpha: f64, opts: CheckOpts) -> ResidualReport {
    let chi = f_bar.chi_trace();
    let want = f_bar.f.norm_sq().scale(alpha * alpha);
    let scale = field_scale(&[&chi, &want], opts.collar);
    ResidualReport::from_field(
        "alpha_squared_trace",
        &chi.sub(&want),
        opts.tolerance_for(&f_bar.grid, scale),
        0,
    )
}

/// Integrates Bianchi's linear system for a Guichard net: the six-component
/// state `(γ_i, γ̄_i)` obeys, along axis `a`,
///
/// `∂_aγ_i = β_ia γ_a`, `∂_aγ_a = αγ̄_a − Σ_{m≠a} β_ma γ_m`,
/// `∂_aγ̄_i = β_ai γ̄_a`, `∂_aγ̄_a = ε_a(αγ_a − Σ_{m≠a} ε_m β_am γ̄_m)`,
///
/// marched from the seed values at the grid center node by a fourth-order
/// single-step method, sweeping x-lines first, then y, then z. The reverse
/// sweep order measures path dependence. The seed must satisfy
/// `A(p₀) = Ā(p₀) > 0` (seeds are rejected, never projected) and the system
/// must pass its Guichard check — otherwise the linear system is not
/// integrable and the march would silently depend on the sweep order.
pub fn integrate_bianchi(
    system: &OrthogonalSystem,
    alpha: f64,
    seed_gamma: [f64; 3],
    seed_gammabar: [f64; 3],
    opts: CheckOpts,
) -> Result<BianchiIntegration> {
    if alpha == 0.0 {
        return Err(Error::Domain("Bianchi integration needs α ≠ 0".into()));
    }
    let a0: f64 = seed_gamma.iter().map(|g| g * g).sum();
    let abar0 = seed_gammabar[0] * seed_gammabar[0] + seed_gammabar[1] * seed_gammabar[1]
        - seed_gammabar[2] * seed_gammabar[2];
    if (a0 - abar0).abs() > 1e-12 * a0.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "Bianchi seed violates A = Ā at the anchor node (A = {a0}, Ā = {abar0})"
        )));
    }
    if a0 <= 1e-12 {
        return Err(Error::Precondition(format!(
            "Bianchi seed needs A > 0 at the anchor node (A = {a0})"
        )));
    }
    let guichard = check_guichard(system, opts)?;
    if !guichard.pass() {
        return Err(Error::Precondition(format!(
            "Bianchi integration needs a Guichard seed system \
             (trace sup {:e} > {:e}, differentiated sup {:e} > {:e})",
            guichard.trace.sup,
            guichard.trace.tolerance,
            guichard.differentiated.sup,
            guichard.differentiated.tolerance
        )));
    }

    let grid = system.grid;
    let p0 = grid.center_node();
    let beta = &system.beta;
    let matrix = |axis: usize, node: [usize; 3]| -> [[f64; 6]; 6] {
        let mut m = [[0.0f64; 6]; 6];
        let b = |i: usize, j: usize| beta.beta(i, j).at(node);
        for i in 0..3 {
            if i == axis {
                continue;
            }
            m[i][axis] = b(i, axis);
            m[3 + i][3 + axis] = b(axis, i);
            m[axis][i] = -b(i, axis);
            m[3 + axis][3 + i] = -EPSILON[axis] * EPSILON[i] * b(axis, i);
        }
        m[axis][3 + axis] = alpha;
        m[3 + axis][axis] = EPSILON[axis] * alpha;
        m
    };
    let seed: [f64; 6] = [
        seed_gamma[0],
        seed_gamma[1],
        seed_gamma[2],
        seed_gammabar[0],
        seed_gammabar[1],
        seed_gammabar[2],
    ];
    let forward = integrate_linear(grid, p0, seed, &matrix, &mut |_| {}, [0, 1, 2])?;
    let reverse = integrate_linear(grid, p0, seed, &matrix, &mut |_| {}, [2, 1, 0])?;

    let mut gamma: [ScalarField; 3] = std::array::from_fn(|_| ScalarField::zeros(grid));
    let mut gammabar: [ScalarField; 3] = std::array::from_fn(|_| ScalarField::zeros(grid));
    let mut mismatch = ScalarField::zeros(grid);
    grid.for_each_node(|node, _| {
        let idx = grid.idx(node[0], node[1], node[2]);
        let mut e = 0.0f64;
        for t in 0..6 {
            e = e.max((forward[idx][t] - reverse[idx][t]).abs());
        }
        mismatch.set(node, e);
        for m in 0..3 {
            gamma[m].set(node, forward[idx][m]);
            gammabar[m].set(node, forward[idx][3 + m]);
        }
    });
    let state_scale = gamma
        .iter()
        .chain(gammabar.iter())
        .fold(0.0f64, |m, g| m.max(g.sup_abs()));
    let path_dependence = ResidualReport::from_field(
        "bianchi_path_dependence",
        &mismatch,
        opts.tolerance_for(&grid, state_scale),
        0,
    );
    if !path_dependence.pass {
        return Err(Error::Precondition(format!(
            "Bianchi integration is path-dependent (sup {:e} > {:e}); \
             the coefficients do not close on this grid",
            path_dependence.sup, path_dependence.tolerance
        )));
    }

    let data = BianchiData::new(gamma, gammabar, alpha)?;
    let f_bar_vec = VectorField::zeros(grid)
        .add_scaled(&data.gamma[0], &system.n[0])
        .add_scaled(&data.gamma[1], &system.n[1])
        .add_scaled(&data.gamma[2], &system.n[2]);
    let h_bar: [ScalarField; 3] = std::array::from_fn(|i| data.theta(i));
    let mut f_bar = OrthogonalSystem::assemble(
        f_bar_vec,
        h_bar,
        system.n.clone(),
        system.beta.clone(),
        format!("bianchi({}, alpha={alpha})", system.provenance),
    )?;
    f_bar.anchor = Some(Anchor {
        node: p0,
        point: f_bar.f.at(p0),
    });

    let a = data.a_field();
    let a_bar = data.a_bar_field();
    let conservation = ResidualReport::from_field(
        "bianchi_conservation",
        &a.sub(&a_bar),
        opts.tolerance_for(&grid, field_scale(&[&a, &a_bar], opts.collar)),
        0,
    );
    let trace = alpha_trace_residual(&f_bar, alpha, opts);

    Ok(BianchiIntegration {
        data,
        f_bar,
        path_dependence,
        conservation,
        trace,
    })
}

/// Residual of the mutual Combescure relation of two systems on one grid:
/// `H_i ∂_i H̃_j − H̃_i ∂_i H_j` for `i ≠ j`, the multiplied-through form of
/// "the recomputed rotational coefficients agree". It stays finite across
/// zeros and degenerate axes of either system.
pub fn check_shared_rotations(
    system: &OrthogonalSystem,
    other: &OrthogonalSystem,
    opts: CheckOpts,
) -> Result<ResidualReport> {
    let (worst, scale) = shared_rotations_field(system, other, opts)?;
    Ok(ResidualReport::from_field(
        "shared_rotations",
        &worst,
        opts.tolerance_for(&system.grid, scale),
        opts.collar,
    ))
}

fn shared_rotations_field(
    system: &OrthogonalSystem,
    other: &OrthogonalSystem,
    opts: CheckOpts,
) -> Result<(ScalarField, f64)> {
    if other.grid != system.grid {
        return Err(Error::GridMismatch(
            "systems on different grids cannot share rotations".into(),
        ));
    }
    let mut worst = ScalarField::zeros(system.grid);
    let mut scale = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let lhs = system.h[i].mul(&other.h[j].derivative(i, opts.order)?);
            let rhs = other.h[i].mul(&system.h[j].derivative(i, opts.order)?);
            scale = scale.max(field_scale(&[&lhs, &rhs], opts.collar));
            let r = lhs.sub(&rhs);
            worst = worst.zip(&r, |m, v| m.max(v.abs()));
        }
    }
    Ok((worst, scale))
}

fn require_combescure_related(
    system: &OrthogonalSystem,
    f_bar: &OrthogonalSystem,
    what: &str,
    opts: CheckOpts,
) -> Result<()> {
    let related = check_shared_rotations(system, f_bar, opts)?;
    if related.pass {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "f̄ is not Combescure-related to {what} (shared-rotation residual sup {:e} > {:e})",
            related.sup, related.tolerance
        )))
    }
}

fn require_alpha_system(f_bar: &OrthogonalSystem, alpha: f64, opts: CheckOpts) -> Result<()> {
    if alpha == 0.0 {
        return Err(Error::Domain("the transform needs α ≠ 0".into()));
    }
    let trace = alpha_trace_residual(f_bar, alpha, opts);
    if trace.pass {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "f̄ is not an α²-system for α = {alpha} (trace residual sup {:e} > {:e})",
            trace.sup, trace.tolerance
        )))
    }
}

/// Shared body of the Bäcklund-type transforms:
/// `φ = (1/α²)(H₁H̄₁ + H₂H̄₂ − H₃H̄₃) + λ` and the Ribaucour formulas with
/// `γ_i = f̄·N_i`, `θ_i = H̄_i` — all pointwise, no quadrature.
fn backlund_core(
    seed: &OrthogonalSystem,
    f_bar: &OrthogonalSystem,
    alpha: f64,
    lambda: f64,
    provenance: String,
) -> Result<OrthogonalSystem> {
    let grid = seed.grid;
    let a = f_bar.f.norm_sq();
    guard_divisor(&a, "|f̄|² (the Ribaucour spheres meet the base point)")?;
    let inv_a = a.map(|v| 1.0 / v);
    let phi = seed.h[0]
        .mul(&f_bar.h[0])
        .add(&seed.h[1].mul(&f_bar.h[1]))
        .sub(&seed.h[2].mul(&f_bar.h[2]))
        .scale(1.0 / (alpha * alpha))
        .add_scalar(lambda);
    let coef = phi.mul(&inv_a).scale(2.0);
    let f_new = seed.f.add_scaled(&coef.scale(-1.0), &f_bar.f);
    let h_new: [ScalarField; 3] = std::array::from_fn(|i| seed.h[i].sub(&coef.mul(&f_bar.h[i])));
    let gamma: [ScalarField; 3] = std::array::from_fn(|i| f_bar.f.dot(&seed.n[i]));
    let n_new: [VectorField; 3] = std::array::from_fn(|i| {
        let c = gamma[i].mul(&inv_a).scale(-2.0);
        seed.n[i].add_scaled(&c, &f_bar.f)
    });
    let mut beta_new = Rotations::zeros(grid);
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let shift = gamma[i].mul(&f_bar.h[j]).mul(&inv_a).scale(2.0);
            beta_new.set_beta(i, j, seed.beta.beta(i, j).sub(&shift));
        }
    }
    let mut out = OrthogonalSystem::assemble(f_new, h_new, n_new, beta_new, provenance)?;
    out.orientation = -seed.orientation;
    Ok(out)
}

/// The Bäcklund-type transform of a Guichard net by an `α²|f̄|²`-system:
///
/// `R(f) = f − (2φ_λ/|f̄|²) f̄`, `R(H_i) = H_i − (2φ_λ/|f̄|²) H̄_i`,
/// `φ_λ = (1/α²)(H₁H̄₁ + H₂H̄₂ − H₃H̄₃) + λ`.
///
/// For `λ = 0` the image is again a Guichard net; otherwise its trace equals
/// `4α²λφ_λ/|f̄|²` pointwise. Preconditions: `f̄` Combescure-related to the
/// seed and satisfying the `α²`-trace condition.
pub fn backlund(
    system: &OrthogonalSystem,
    f_bar: &OrthogonalSystem,
    alpha: f64,
    lambda: f64,
    opts: CheckOpts,
) -> Result<OrthogonalSystem> {
    require_combescure_related(system, f_bar, "the seed system", opts)?;
    require_alpha_system(f_bar, alpha, opts)?;
    backlund_core(
        system,
        f_bar,
        alpha,
        lambda,
        format!("backlund({}, alpha={alpha}, lambda={lambda})", system.provenance),
    )
}

/// The Bäcklund-type transform for λ-systems (constant trace `χ ≡ λ`): the
/// `λ = 0` formulas of [`backlund`] preserve the trace constant. The seed
/// must be nondegenerate with constant trace; `f̄` as in [`backlund`].
pub fn backlund_lambda_system(
    system: &OrthogonalSystem,
    f_bar: &OrthogonalSystem,
    alpha: f64,
    opts: CheckOpts,
) -> Result<OrthogonalSystem> {
    if system.degenerate.iter().any(|&d| d) {
        return Err(Error::Precondition(
            "the seed system is degenerate (some H_i ≡ 0); its trace constant \
             does not describe a triply orthogonal system"
                .into(),
        ));
    }
    let chi = system.chi_trace();
    let mean = chi.mean();
    let scale = system
        .h
        .iter()
        .fold(0.0f64, |m, f| m.max(f.sup_abs()))
        .powi(2);
    let tol = opts.tolerance_for(&system.grid, scale);
    let drift = chi.map(|v| v - mean).sup_abs();
    if drift > tol {
        return Err(Error::Precondition(format!(
            "the seed trace is not constant (χ varies by {drift:e} > {tol:e} around {mean})"
        )));
    }
    require_combescure_related(system, f_bar, "the λ-system seed", opts)?;
    require_alpha_system(f_bar, alpha, opts)?;
    backlund_core(
        system,
        f_bar,
        alpha,
        0.0,
        format!("backlund({}, alpha={alpha})", system.provenance),
    )
}

/// Outcome of [`check_permutability`]: the three transformed systems and the
/// residuals certifying that the transform commutes with the associated and
/// dual constructions.
#[derive(Clone, Debug)]
pub struct PermutabilityReport {
    /// `R(f)` — Guichard again.
    pub r_seed: OrthogonalSystem,
    /// `R(f̂)` — an associated system of `R(f)`.
    pub r_assoc: OrthogonalSystem,
    /// `R(f*)` — a dual system of `R(f)`.
    pub r_dual: OrthogonalSystem,
    /// `φH*_i + φ*H_i + 2φ̂Ĥ_i − (2/α²)H̄_i` per axis.
    pub phi_relation: ResidualReport,
    /// `φφ* + φ̂² − |f̄|²/α²`.
    pub phi_product: ResidualReport,
    /// G-system relation of the transformed triple,
    /// `R(H_i)R(H*_j) + R(H_j)R(H*_i) + 2R(Ĥ_i)R(Ĥ_j)`.
    pub transformed_gsystem: ResidualReport,
    /// Mutual Combescure relation of the three outputs (they are induced by
    /// one `f̄`, hence share their rotational coefficients).
    pub mutual_combescure: ResidualReport,
}

impl PermutabilityReport {
    pub fn pass(&self) -> bool {
        self.phi_relation.pass
            && self.phi_product.pass
            && self.transformed_gsystem.pass
            && self.mutual_combescure.pass
    }
}

/// `(1/α²) Σ ε_m K_m H̄_m` — the transform potential of a system with Lamé
/// coefficients `K` under the inducing system `f̄`.
fn transform_potential(
    k: &[ScalarField; 3],
    f_bar: &OrthogonalSystem,
    alpha: f64,
) -> ScalarField {
    k[0].mul(&f_bar.h[0])
        .add(&k[1].mul(&f_bar.h[1]))
        .sub(&k[2].mul(&f_bar.h[2]))
        .scale(1.0 / (alpha * alpha))
}

/// Verifies the permutability scheme: for a Guichard net with an associated
/// and a dual system, the Ribaucour transforms of all three induced by one
/// `α²|f̄|²`-system again form a (seed, associated, dual) triple. Checks the
/// two φ-relations, the G-system relation of the transformed triple, and
/// their mutual Combescure relation. Preconditions (each itemized as an
/// error): the input triple passes its G-system relation, `f̄` passes the
/// `α²`-trace condition and is Combescure-related to all three.
pub fn check_permutability(
    seed: &OrthogonalSystem,
    assoc: &OrthogonalSystem,
    dual: &OrthogonalSystem,
    f_bar: &OrthogonalSystem,
    alpha: f64,
    opts: CheckOpts,
) -> Result<PermutabilityReport> {
    let grid = seed.grid;
    let gsys = check_gsystem_relation(seed, assoc, dual, opts)?;
    if !gsys.pass {
        return Err(Error::Precondition(format!(
            "(seed, associated, dual) fail the G-system relation \
             (sup residual {:e} > {:e})",
            gsys.sup, gsys.tolerance
        )));
    }
    require_combescure_related(seed, f_bar, "the seed system", opts)?;
    require_combescure_related(assoc, f_bar, "the associated system", opts)?;
    require_combescure_related(dual, f_bar, "the dual system", opts)?;
    require_alpha_system(f_bar, alpha, opts)?;

    let r_seed = backlund_core(
        seed,
        f_bar,
        alpha,
        0.0,
        format!("backlund({}, alpha={alpha})", seed.provenance),
    )?;
    let r_assoc = backlund_core(
        assoc,
        f_bar,
        alpha,
        0.0,
        format!("backlund({}, alpha={alpha})", assoc.provenance),
    )?;
    let r_dual = backlund_core(
        dual,
        f_bar,
        alpha,
        0.0,
        format!("backlund({}, alpha={alpha})", dual.provenance),
    )?;

    let phi = transform_potential(&seed.h, f_bar, alpha);
    let phi_hat = transform_potential(&assoc.h, f_bar, alpha);
    let phi_star = transform_potential(&dual.h, f_bar, alpha);

    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for i in 0..3 {
        let t0 = phi.mul(&dual.h[i]);
        let t1 = phi_star.mul(&seed.h[i]);
        let t2 = phi_hat.mul(&assoc.h[i]).scale(2.0);
        let t3 = f_bar.h[i].scale(2.0 / (alpha * alpha));
        scale = scale.max(field_scale(&[&t0, &t1, &t2, &t3], opts.collar));
        let r = t0.add(&t1).add(&t2).sub(&t3);
        worst = worst.zip(&r, |m, v| m.max(v.abs()));
    }
    let phi_relation = ResidualReport::from_field(
        "phi_relation",
        &worst,
        opts.tolerance_for(&grid, scale),
        0,
    );

    let t0 = phi.mul(&phi_star);
    let t1 = phi_hat.mul(&phi_hat);
    let t2 = f_bar.f.norm_sq().scale(1.0 / (alpha * alpha));
    let product_scale = field_scale(&[&t0, &t1, &t2], opts.collar);
    let phi_product = ResidualReport::from_field(
        "phi_product",
        &t0.add(&t1).sub(&t2),
        opts.tolerance_for(&grid, product_scale),
        0,
    );

    let transformed_gsystem =
        check_gsystem_relation(&r_seed, &r_assoc, &r_dual, opts)?.renamed("transformed_gsystem");

    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for (a, b) in [(&r_seed, &r_assoc), (&r_seed, &r_dual), (&r_assoc, &r_dual)] {
        let (field, s) = shared_rotations_field(a, b, opts)?;
        scale = scale.max(s);
        worst = worst.zip(&field, |m, v| m.max(v.abs()));
    }
    let mutual_combescure = ResidualReport::from_field(
        "mutual_combescure",
        &worst,
        opts.tolerance_for(&grid, scale),
        opts.collar,
    );

    Ok(PermutabilityReport {
        r_seed,
        r_assoc,
        r_dual,
        phi_relation,
        phi_product,
        transformed_gsystem,
        mutual_combescure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::AnalyticChart;
    use crate::guichard::{build_associated, build_dual};
    use crate::tos::SystemClass;
    use approx::assert_relative_eq;
    use std::f64::consts::SQRT_2;

    fn chart_system(name: &str, n: usize) -> OrthogonalSystem {
        let chart = AnalyticChart::instantiate(name, None).unwrap();
        chart.sample(chart.default_grid(n).unwrap()).unwrap()
    }

    /// `γ = (e^x, e^y, 0)`, `φ = e^x + e^y`: exact Ribaucour data for the
    /// flat chart (β ≡ 0).
    fn flat_exp_data(system: &OrthogonalSystem) -> RibaucourData {
        RibaucourData::from_fn(
            system.grid,
            |i, p| match i {
                0 => p[0].exp(),
                1 => p[1].exp(),
                _ => 0.0,
            },
            |p| p[0].exp() + p[1].exp(),
        )
    }

    /// `γ_i = f·N_i`, `φ = |f|²/2 + λ`: the data of a scaled inversion.
    fn inversion_data(system: &OrthogonalSystem, lambda: f64) -> RibaucourData {
        let gamma: [ScalarField; 3] = std::array::from_fn(|i| system.f.dot(&system.n[i]));
        let phi = system.f.norm_sq().scale(0.5).add_scalar(lambda);
        RibaucourData::new(gamma, phi).unwrap()
    }

    #[test]
    fn ribaucour_data_flat_closed_form() {
        let sys = chart_system("flat_guichard", 17);
        let data = flat_exp_data(&sys);
        let opts = CheckOpts::default();
        let report = check_ribaucour_data(&sys, &data, opts).unwrap();
        assert!(report.pass, "{report:?}");

        let center = sys.grid.center_node();
        let a = data.a_field();
        assert_relative_eq!(a.at(center), 2.0, max_relative = 1e-14);
        let theta = data.theta(&sys, opts).unwrap();
        assert_relative_eq!(theta[0].at(center), 1.0, max_relative = 1e-2);
        assert_relative_eq!(theta[1].at(center), 1.0, max_relative = 1e-2);
        assert_eq!(theta[2].at(center), 0.0);

        // Sphere radii: R₁ = −φ/γ₁ = −2 at the origin; the third congruence
        // consists of planes (γ₃ ≡ 0), so its radii are masked out.
        let radii = data.radii();
        assert_relative_eq!(radii[0].at(center), -2.0, max_relative = 1e-14);
        assert!(radii[2].at(center).is_nan());
    }

    #[test]
    fn ribaucour_data_inversion_form_passes_and_random_fails() {
        let sys = chart_system("six_sphere", 17);
        let opts = CheckOpts::default();
        let good = inversion_data(&sys, 1.0);
        let report = check_ribaucour_data(&sys, &good, opts).unwrap();
        assert!(report.pass, "{report:?}");

        let bad = RibaucourData::from_fn(
            sys.grid,
            |i, p| match i {
                0 => (p[0] + 2.0 * p[1]).sin(),
                1 => p[2].cos(),
                _ => 1.0 + p[0] * p[0],
            },
            |p| p[0],
        );
        let report = check_ribaucour_data(&sys, &bad, opts).unwrap();
        assert!(!report.pass);
        assert!(report.sup >= 0.5, "sup {}", report.sup);
    }

    #[test]
    fn apply_ribaucour_flat_spot_values() {
        let sys = chart_system("flat_guichard", 17);
        let data = flat_exp_data(&sys);
        let opts = CheckOpts::default();
        let out = apply_ribaucour(&sys, &data, opts).unwrap();
        let center = sys.grid.center_node();

        // f′(0) = 0 − (2·2/2)(1,1,0) = (−2,−2,0), exact arithmetic.
        let f = out.f.at(center);
        assert_relative_eq!(f[0], -2.0, max_relative = 1e-13);
        assert_relative_eq!(f[1], -2.0, max_relative = 1e-13);
        assert!(f[2].abs() <= 1e-13);

        // H′(0) = (1−2·2·1/2, 1−2·2·1/2, √2−0) = (−1, −1, √2) with the FD θ.
        assert_relative_eq!(out.h[0].at(center), -1.0, max_relative = 1e-2);
        assert_relative_eq!(out.h[1].at(center), -1.0, max_relative = 1e-2);
        assert_relative_eq!(out.h[2].at(center), SQRT_2, max_relative = 1e-13);
        assert_eq!(out.orientation, -sys.orientation);

        // β′₁₂(0) = −2γ₁θ₂/A = −1 on the flat seed (β ≡ 0).
        assert_relative_eq!(out.beta.beta(0, 1).at(center), -1.0, max_relative = 1e-2);

        // The output is a consistent system: ∂_i f′ = H′_i N′_i, and the
        // stored β′ match the coefficients recomputed from H′ (multiplied
        // form, H′₁ has a sign-change curve inside the box).
        assert!(out.check_parametrization(opts).unwrap().pass);
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let lhs = out.h[j].derivative(i, opts.order).unwrap();
                let rhs = out.beta.beta(i, j).mul(&out.h[i]);
                let scale = field_scale(&[&lhs, &rhs], opts.collar);
                let resid = ResidualReport::from_field(
                    "recomputed_rotations",
                    &lhs.sub(&rhs),
                    opts.tolerance_for(&sys.grid, scale),
                    opts.collar,
                );
                assert!(resid.pass, "β′_{i}{j}: {resid:?}");
            }
        }
    }

    #[test]
    fn apply_ribaucour_inversion_data_is_scaled_inversion() {
        let sys = chart_system("six_sphere", 17);
        let opts = CheckOpts::default();

        // γ_i = f·N_i, φ = |f|²/2 + λ  ⇒  f′ = −2λ f/|f|², pointwise exact.
        let out = apply_ribaucour(&sys, &inversion_data(&sys, 1.0), opts).unwrap();
        let want = {
            let inv = sys.f.norm_sq().map(|v| -2.0 / v);
            VectorField::zeros(sys.grid).add_scaled(&inv, &sys.f)
        };
        let mut worst = 0.0f64;
        for c in 0..3 {
            worst = worst.max(out.f.component(c).sub(&want.component(c)).sup_abs());
        }
        assert!(worst <= 1e-12, "sup {worst}");

        // λ = −1/2 reproduces the inversion f/|f|² — here the flat system
        // (x, y, √2 z), so H′ returns to the constants (1, 1, √2) up to the
        // FD error of θ (amplified by sup |1 − 2φ/A·…| ≈ 8 on this box).
        let out = apply_ribaucour(&sys, &inversion_data(&sys, -0.5), opts).unwrap();
        let inverted = sys.invert().unwrap();
        let mut worst = 0.0f64;
        for c in 0..3 {
            worst = worst.max(out.f.component(c).sub(&inverted.f.component(c)).sup_abs());
        }
        assert!(worst <= 1e-12, "sup {worst}");
        assert!(out.check_parametrization(opts).unwrap().pass);
        let tol = opts.tolerance_for(&sys.grid, 10.0);
        let h0_drift = out.h[0].add_scalar(-1.0).sup_abs();
        let h2_drift = out.h[2].add_scalar(-SQRT_2).sup_abs();
        assert!(h0_drift <= tol, "H′₁ drift {h0_drift} > {tol}");
        assert!(h2_drift <= tol, "H′₃ drift {h2_drift} > {tol}");

        // On the flat chart the same data has A = |f|² vanishing at the
        // origin: the sphere congruence passes through the base point.
        let flat = chart_system("flat_guichard", 9);
        let err = apply_ribaucour(&flat, &inversion_data(&flat, 1.0), opts).unwrap_err();
        assert!(matches!(err, Error::SmallDivisor { .. }), "{err:?}");
    }

    #[test]
    fn decompose_flat_matches_apply() {
        let sys = chart_system("flat_guichard", 17);
        let data = flat_exp_data(&sys);
        let opts = CheckOpts::default();
        let dec = decompose_ribaucour(&sys, &data, opts).unwrap();
        let center = sys.grid.center_node();

        // f̄(0) = (1,1,0); the inversion sends it to (0.5, 0.5, 0).
        let fb = dec.f_bar.f.at(center);
        assert_relative_eq!(fb[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(fb[1], 1.0, max_relative = 1e-14);
        assert_eq!(fb[2], 0.0);
        let fi = dec.inverted.f.at(center);
        assert_relative_eq!(fi[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(fi[1], 0.5, max_relative = 1e-14);

        assert!(dec.lame_match.pass, "{:?}", dec.lame_match);
        assert!(dec.combescure.pass, "{:?}", dec.combescure);
        assert!(dec.reconstruction.pass, "{:?}", dec.reconstruction);
        assert!(dec.pass());

        // The third factor family is flat (θ₃ ≡ 0): f̄ is a surface and its
        // degeneracy is flagged, not an error.
        assert!(dec.f_bar.degenerate[2]);
    }

    #[test]
    fn induced_families_share_rotations() {
        let sys = chart_system("six_sphere", 17);
        let opts = CheckOpts::default();
        let center = sys.grid.center_node();

        // Inducing by the system itself recovers the inversion data: γ = f·N
        // and φ = |f|²/2 up to the anchoring constant.
        let data = induce_ribaucour_family(&sys, &sys, 0.7, opts).unwrap();
        assert!(check_ribaucour_data(&sys, &data, opts).unwrap().pass);
        let fsq = sys.f.norm_sq().scale(0.5);
        let want = fsq.add_scalar(0.7 - fsq.at(center));
        let drift = data.phi().sub(&want).sup_abs();
        let tol = opts.tolerance_for(&sys.grid, fsq.sup_abs());
        assert!(drift <= tol, "φ drift {drift} > {tol}");

        // Two members of the family (λ = 0.3 and 0.7) share their transformed
        // rotational coefficients: bitwise for the constructed β′ (they only
        // differ through φ) and to O(h²) when recomputed from H′. The Lamé
        // quotient amplifies the FD noise by sup|H′_j|/inf|H′_i| per system.
        let out1 = apply_ribaucour(&sys, &induce_ribaucour_family(&sys, &sys, 0.3, opts).unwrap(), opts).unwrap();
        let out2 = apply_ribaucour(&sys, &data, opts).unwrap();
        let rot1 = out1.rotational_coefficients(opts.order).unwrap();
        let rot2 = out2.rotational_coefficients(opts.order).unwrap();
        let amp = |s: &OrthogonalSystem| -> f64 {
            let sup = s.h.iter().fold(0.0f64, |m, f| m.max(f.sup_abs()));
            let inv = s.h.iter().fold(0.0f64, |m, f| m.max(f.map(|v| 1.0 / v).sup_abs()));
            sup * inv
        };
        let tol = opts.tolerance_for(&sys.grid, 2.0 * (amp(&out1) + amp(&out2)));
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let stored = out1.beta.beta(i, j).sub(out2.beta.beta(i, j)).sup_abs();
                assert_eq!(stored, 0.0, "stored β′_{i}{j} differ");
                let recomputed = rot1.beta(i, j).sub(rot2.beta(i, j)).sup_abs();
                assert!(recomputed <= tol, "recomputed β′_{i}{j}: {recomputed} > {tol}");
            }
        }

        // A rescaled copy of the system induces the same transform once the
        // anchoring constant is rescaled along with it.
        let doubled = OrthogonalSystem::assemble(
            sys.f.map(|v| [2.0 * v[0], 2.0 * v[1], 2.0 * v[2]]),
            std::array::from_fn(|i| sys.h[i].scale(2.0)),
            sys.n.clone(),
            sys.beta.clone(),
            "doubled",
        )
        .unwrap();
        let data_scaled = induce_ribaucour_family(&sys, &doubled, 0.6, opts).unwrap();
        let out_scaled = apply_ribaucour(&sys, &data_scaled, opts).unwrap();
        let out_base = apply_ribaucour(
            &sys,
            &induce_ribaucour_family(&sys, &sys, 0.3, opts).unwrap(),
            opts,
        )
        .unwrap();
        let mut worst = 0.0f64;
        for c in 0..3 {
            worst = worst.max(
                out_scaled
                    .f
                    .component(c)
                    .sub(&out_base.f.component(c))
                    .sup_abs(),
            );
        }
        assert!(worst <= 1e-12, "sup {worst}");

        // A non-Combescure companion is rejected.
        let broken = OrthogonalSystem::assemble(
            sys.f.clone(),
            [
                sys.h[0].clone(),
                sys.h[1].mul(&ScalarField::from_fn(sys.grid, |p| 1.0 + 0.2 * p[1] * p[1])),
                sys.h[2].clone(),
            ],
            sys.n.clone(),
            sys.beta.clone(),
            "broken",
        )
        .unwrap();
        let err = induce_ribaucour_family(&sys, &broken, 0.0, opts).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err:?}");
    }

    #[test]
    fn bianchi_flat_closed_form() {
        let sys = chart_system("flat_guichard", 17);
        let opts = CheckOpts::default();
        let res = integrate_bianchi(&sys, 1.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts).unwrap();

        // β ≡ 0 decouples the system into ∂_xγ₁ = γ̄₁, ∂_xγ̄₁ = γ₁ (and the
        // same in y): γ₁ = γ̄₁ = e^x, γ₂ = γ̄₂ = e^y, γ₃ = γ̄₃ = 0.
        let want0 = ScalarField::from_fn(sys.grid, |p| p[0].exp());
        let want1 = ScalarField::from_fn(sys.grid, |p| p[1].exp());
        assert!(res.data.gamma(0).sub(&want0).sup_abs() <= 1e-5);
        assert!(res.data.gamma(1).sub(&want1).sup_abs() <= 1e-5);
        assert!(res.data.gammabar(0).sub(&want0).sup_abs() <= 1e-5);
        assert_eq!(res.data.gamma(2).sup_abs(), 0.0);
        assert_eq!(res.data.gammabar(2).sup_abs(), 0.0);

        // Conservation and path independence are exact here; the trace
        // condition holds to integrator accuracy.
        assert!(res.conservation.sup <= 1e-10, "{:?}", res.conservation);
        assert!(res.path_dependence.sup <= 1e-14, "{:?}", res.path_dependence);
        assert!(res.trace.pass, "{:?}", res.trace);
        let center = sys.grid.center_node();
        assert_relative_eq!(res.f_bar.chi_trace().at(center), 2.0, max_relative = 1e-6);
        assert_eq!(res.f_bar.anchor.unwrap().node, center);

        // f̄ is an α²|f̄|²-system with α = 1.
        match res.f_bar.classify(opts) {
            SystemClass::AlphaSquared(a2) => assert_relative_eq!(a2, 1.0, max_relative = 1e-4),
            other => panic!("expected an α²-system, got {other:?}"),
        }
        let report = check_bianchi_data(&sys, &res.data, opts).unwrap();
        assert!(report.pass(), "{report:?}");

        // Gates: seed constraint, Guichard seed, α ≠ 0.
        let err =
            integrate_bianchi(&sys, 1.0, [1.0, 1.0, 0.0], [2.0, 1.0, 0.0], opts).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err:?}");
        let control = chart_system("spherical_control", 9);
        let err =
            integrate_bianchi(&control, 1.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err:?}");
        let err =
            integrate_bianchi(&sys, 0.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err:?}");
    }

    #[test]
    fn bianchi_six_sphere_data_checks() {
        let sys = chart_system("six_sphere", 17);
        let opts = CheckOpts::default();
        let res = integrate_bianchi(&sys, 1.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts).unwrap();
        let report = check_bianchi_data(&sys, &res.data, opts).unwrap();
        assert!(report.pass(), "{report:?}");
        assert!(res.conservation.pass, "{:?}", res.conservation);
        assert!(res.trace.pass, "{:?}", res.trace);

        // The data drives a genuine Ribaucour transform: γ from the Bianchi
        // pair with φ from the trace potential passes the structure check.
        let f_bar = &res.f_bar;
        let gamma: [ScalarField; 3] = std::array::from_fn(|i| f_bar.f.dot(&sys.n[i]));
        let phi = transform_potential(&sys.h, f_bar, 1.0);
        let data = RibaucourData::new(gamma, phi).unwrap();
        let report = check_ribaucour_data(&sys, &data, opts).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn backlund_flat_spot_values_and_trace_formula() {
        let sys = chart_system("flat_guichard", 17);
        let opts = CheckOpts::default();
        let f_bar = integrate_bianchi(&sys, 1.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts)
            .unwrap()
            .f_bar;
        let center = sys.grid.center_node();

        // λ = 0: Guichard again, with exact spot values at the seed node
        // (the march is exact there): φ = 2, R(H) = (−1,−1,√2),
        // R(f) = (−2,−2,0).
        let out = backlund(&sys, &f_bar, 1.0, 0.0, opts).unwrap();
        assert!(check_guichard(&out, opts).unwrap().pass());
        assert_relative_eq!(out.h[0].at(center), -1.0, max_relative = 1e-12);
        assert_relative_eq!(out.h[1].at(center), -1.0, max_relative = 1e-12);
        assert_relative_eq!(out.h[2].at(center), SQRT_2, max_relative = 1e-12);
        let f = out.f.at(center);
        assert_relative_eq!(f[0], -2.0, max_relative = 1e-12);
        assert_relative_eq!(f[1], -2.0, max_relative = 1e-12);
        assert!(f[2].abs() <= 1e-12);
        assert_eq!(out.orientation, -sys.orientation);

        // λ = 1: trace 4α²λφ_λ/|f̄|² pointwise (= 6 at the origin where
        // φ_λ = 3 and |f̄|² = 2).
        let out = backlund(&sys, &f_bar, 1.0, 1.0, opts).unwrap();
        let chi = out.chi_trace();
        assert_relative_eq!(chi.at(center), 6.0, max_relative = 1e-12);
        let phi_l = transform_potential(&sys.h, &f_bar, 1.0).add_scalar(1.0);
        let want = phi_l.scale(4.0).div_masked(&f_bar.f.norm_sq());
        let resid = chi.sub(&want).sup_abs();
        assert!(
            resid <= 1e-10 * chi.sup_abs(),
            "trace formula residual {resid}"
        );

        // The same transform arises from the induced Ribaucour family when
        // the anchoring constant matches φ(p₀) = 2.
        let data = induce_ribaucour_family(&sys, &f_bar, 2.0, opts).unwrap();
        let via_data = apply_ribaucour(&sys, &data, opts).unwrap();
        let direct = backlund(&sys, &f_bar, 1.0, 0.0, opts).unwrap();
        let mut worst = 0.0f64;
        for c in 0..3 {
            worst = worst.max(
                via_data
                    .f
                    .component(c)
                    .sub(&direct.f.component(c))
                    .sup_abs(),
            );
        }
        let tol = opts.tolerance_for(&sys.grid, field_scale(&[&direct.f.component(0)], 0).max(1.0));
        assert!(worst <= tol, "routes disagree by {worst} > {tol}");
    }

    #[test]
    fn backlund_lambda_system_preserves_constant_trace() {
        let sys = chart_system("six_sphere", 17);
        let opts = CheckOpts::default();
        let center = sys.grid.center_node();
        let f_bar = integrate_bianchi(&sys, 1.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts)
            .unwrap()
            .f_bar;

        // A 1-system seed (an associated system of the six-sphere chart)
        // keeps its trace constant 1.
        let (_, assoc) = build_associated(&sys, 0.0, center, 0.0, opts).unwrap();
        let out = backlund_lambda_system(&assoc, &f_bar, 1.0, opts).unwrap();
        let chi = out.chi_trace();
        let scale = out.h.iter().fold(0.0f64, |m, f| m.max(f.sup_abs())).powi(2);
        let drift = chi.add_scalar(-1.0).sup_abs();
        let tol = opts.tolerance_for(&sys.grid, scale);
        assert!(drift <= tol, "trace drift {drift} > {tol}");

        // A Guichard seed reproduces backlund(λ = 0) exactly (same code
        // path, same floats).
        let a = backlund_lambda_system(&sys, &f_bar, 1.0, opts).unwrap();
        let b = backlund(&sys, &f_bar, 1.0, 0.0, opts).unwrap();
        for i in 0..3 {
            assert_eq!(a.h[i].sub(&b.h[i]).sup_abs(), 0.0);
        }

        // A degenerate constant-trace seed (H₃ ≡ 0) is rejected: it does not
        // describe a triply orthogonal system.
        let flat = chart_system("flat_guichard", 17);
        let flat_bar = integrate_bianchi(&flat, 1.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts)
            .unwrap()
            .f_bar;
        let degenerate = OrthogonalSystem::assemble(
            VectorField::from_fn(flat.grid, |p| [p[0], p[1], 0.0]),
            [
                ScalarField::constant(flat.grid, 1.0),
                ScalarField::constant(flat.grid, 1.0),
                ScalarField::zeros(flat.grid),
            ],
            [
                VectorField::from_fn(flat.grid, |_| [1.0, 0.0, 0.0]),
                VectorField::from_fn(flat.grid, |_| [0.0, 1.0, 0.0]),
                VectorField::from_fn(flat.grid, |_| [0.0, 0.0, 1.0]),
            ],
            Rotations::zeros(flat.grid),
            "degenerate control",
        )
        .unwrap();
        let err = backlund_lambda_system(&degenerate, &flat_bar, 1.0, opts).unwrap_err();
        match err {
            Error::Precondition(msg) => assert!(msg.contains("degenerate"), "{msg}"),
            other => panic!("expected a precondition failure, got {other:?}"),
        }
    }

    #[test]
    fn permutability_flat_pipeline() {
        let sys = chart_system("flat_guichard", 17);
        let opts = CheckOpts::default();
        let center = sys.grid.center_node();
        let f_bar = integrate_bianchi(&sys, 1.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts)
            .unwrap()
            .f_bar;

        for c in [0.0, 0.5] {
            let (family, assoc) = build_associated(&sys, c, center, 0.0, opts).unwrap();
            let dual = build_dual(&sys, &family, c, center, [0.0; 3], opts).unwrap();
            let rep = check_permutability(&sys, &assoc, &dual, &f_bar, 1.0, opts).unwrap();
            assert!(rep.pass(), "c = {c}: {:?}", (
                &rep.phi_relation,
                &rep.phi_product,
                &rep.transformed_gsystem,
                &rep.mutual_combescure
            ));
            // The φ-identities are algebraic; only the integrator error of f̄
            // enters, so the residuals sit far below the grid tolerance.
            assert!(rep.phi_relation.sup <= 1e-2, "{:?}", rep.phi_relation);
            assert!(rep.phi_product.sup <= 1e-2, "{:?}", rep.phi_product);
            // The transformed triple is again (Guichard, associated, dual).
            assert!(check_guichard(&rep.r_seed, opts).unwrap().pass());
            assert!(check_guichard(&rep.r_dual, opts).unwrap().pass());
            let chi_hat = rep.r_assoc.chi_trace();
            let scale = rep
                .r_assoc
                .h
                .iter()
                .fold(0.0f64, |m, f| m.max(f.sup_abs()))
                .powi(2);
            let drift = chi_hat.add_scalar(-1.0).sup_abs();
            assert!(drift <= opts.tolerance_for(&sys.grid, scale), "χ̂ drift {drift}");
        }

        // Negative controls: a rescaled Lamé triple breaks the α²-trace
        // precondition; mismatched family parameters break the G-system
        // relation of the inputs.
        let (family, assoc) = build_associated(&sys, 0.0, center, 0.0, opts).unwrap();
        let dual = build_dual(&sys, &family, 0.0, center, [0.0; 3], opts).unwrap();
        let bad_bar = OrthogonalSystem::assemble(
            f_bar.f.clone(),
            std::array::from_fn(|i| f_bar.h[i].scale(2.0)),
            f_bar.n.clone(),
            f_bar.beta.clone(),
            "scaled",
        )
        .unwrap();
        let err = check_permutability(&sys, &assoc, &dual, &bad_bar, 1.0, opts).unwrap_err();
        match err {
            Error::Precondition(msg) => assert!(msg.contains("α²-system"), "{msg}"),
            other => panic!("expected a precondition failure, got {other:?}"),
        }
        let dual_mismatched = build_dual(&sys, &family, 0.5, center, [0.0; 3], opts).unwrap();
        let err =
            check_permutability(&sys, &assoc, &dual_mismatched, &f_bar, 1.0, opts).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err:?}");
    }

    #[test]
    fn permutability_six_sphere_pipeline() {
        let sys = chart_system("six_sphere", 17);
        let opts = CheckOpts::default();
        let center = sys.grid.center_node();
        let f_bar = integrate_bianchi(&sys, 1.0, [1.0, 1.0, 0.0], [1.0, 1.0, 0.0], opts)
            .unwrap()
            .f_bar;
        let (family, assoc) = build_associated(&sys, 0.0, center, 0.0, opts).unwrap();
        let dual = build_dual(&sys, &family, 0.0, center, [0.0; 3], opts).unwrap();
        let rep = check_permutability(&sys, &assoc, &dual, &f_bar, 1.0, opts).unwrap();
        assert!(rep.pass(), "{:?}", (
            &rep.phi_relation,
            &rep.phi_product,
            &rep.transformed_gsystem,
            &rep.mutual_combescure
        ));
        assert!(check_guichard(&rep.r_seed, opts).unwrap().pass());
    }

    #[test]
    fn shared_rotations_detects_broken_transform() {
        let sys = chart_system("six_sphere", 17);
        let opts = CheckOpts::default();
        let same = check_shared_rotations(&sys, &sys, opts).unwrap();
        assert!(same.pass && same.sup == 0.0, "{same:?}");

        let broken = OrthogonalSystem::assemble(
            sys.f.clone(),
            [
                sys.h[0].mul(&ScalarField::from_fn(sys.grid, |p| 1.0 + 0.1 * p[1].sin())),
                sys.h[1].clone(),
                sys.h[2].clone(),
            ],
            sys.n.clone(),
            sys.beta.clone(),
            "broken",
        )
        .unwrap();
        let report = check_shared_rotations(&sys, &broken, opts).unwrap();
        assert!(!report.pass, "{report:?}");
    }
}
