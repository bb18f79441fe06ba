//! Guichard nets and their transformation theory.
//!
//! A Guichard net is an orthogonal system whose Lamé coefficients satisfy the
//! trace condition `H₁² + H₂² − H₃² = 0` (signature `ε = (1, 1, −1)`).
//! Differentiating the condition along axis `i` gives the equivalent
//! first-order relation `ε_i ∂_i H_i + ε_j H_j β_ij + ε_k H_k β_ik = 0`.
//!
//! Every Guichard net carries a one-parameter family of *associated* systems:
//! Combescure transforms with induced trace `Ĥ₁² + Ĥ₂² − Ĥ₃² ≡ 1`
//! (1-systems), with multipliers `h_{i,c} = h_i + c` obtained from one
//! quadrature for `h₃` and the algebraic differences
//! `h₁ = h₃ + H₂/(H₁H₃)`, `h₂ = h₃ − H₁/(H₂H₃)`. The pair `(H, Ĥ)` certifies
//! the Guichard property through the characterization identity
//! `H_i Ĥ_j − H_j Ĥ_i = ε_k H_k` (cyclic `(i,j,k)`).
//!
//! *Dual* Guichard nets arise from the star multipliers
//! `h*_{i,c} = −(h_i + c)² + ε_i / H_i²`; their Lamé coefficients satisfy the
//! G-system relation `H_i H*_j + H_j H*_i + 2 Ĥ_i Ĥ_j = 0` and the family
//! obeys the quadratic algebra `f*_c = f*₀ − 2c f̂₀ − c² f`.

use crate::combescure::{apply_combescure, CombescureTriple};
use crate::error::{Error, Result};
use crate::grid::{OneForm, ScalarField};
use crate::report::{field_scale, CheckOpts, ResidualReport};
use crate::tos::{cyclic, complement, OrthogonalSystem, EPSILON};

/// Residuals of the two forms of the Guichard condition.
#[derive(Clone, Debug)]
pub struct GuichardReport {
    /// The algebraic trace `H₁² + H₂² − H₃²`.
    pub trace: ResidualReport,
    /// The differentiated relation, multiplied through by `H_i`:
    /// `ε_i H_i ∂_i H_i + H_i (ε_j H_j β_ij + ε_k H_k β_ik)` per axis.
    pub differentiated: ResidualReport,
}

impl GuichardReport {
    pub fn pass(&self) -> bool {
        self.trace.pass && self.differentiated.pass
    }
}

/// The associated family of a Guichard net: the `c = 0` multiplier triple
/// plus the rule `h_{i,c} = h_i + c`.
#[derive(Clone, Debug)]
pub struct AssociatedFamily {
    base: CombescureTriple,
    seed: String,
    anchor_node: [usize; 3],
    h3_base_value: f64,
    /// Closedness residual of the `h₃` gradient; O(h²) on Guichard inputs.
    pub closedness: ResidualReport,
}

impl AssociatedFamily {
    /// The multiplier triple at family parameter `c`.
    pub fn triple_at(&self, c: f64) -> CombescureTriple {
        self.base.shifted(c)
    }

    /// The `c = 0` triple.
    pub fn base_triple(&self) -> &CombescureTriple {
        &self.base
    }

    pub fn seed(&self) -> &str {
        &self.seed
    }

    pub fn anchor_node(&self) -> [usize; 3] {
        self.anchor_node
    }

    pub fn h3_base_value(&self) -> f64 {
        self.h3_base_value
    }

    /// Residual of the algebraic difference identities
    /// `H₁H₃(h₁ − h₃) = H₂` and `H₂H₃(h₂ − h₃) = −H₁` (multiplied form).
    pub fn difference_residual(
        &self,
        seed: &OrthogonalSystem,
        opts: CheckOpts,
    ) -> Result<ResidualReport> {
        if self.base.grid() != seed.grid {
            return Err(Error::GridMismatch(
                "family grid differs from the seed system".into(),
            ));
        }
        let h = self.base.multipliers();
        let r1 = seed.h[0]
            .mul(&seed.h[2])
            .mul(&h[0].sub(&h[2]))
            .sub(&seed.h[1]);
        let r2 = seed.h[1]
            .mul(&seed.h[2])
            .mul(&h[1].sub(&h[2]))
            .add(&seed.h[0]);
        let scale = field_scale(&[&seed.h[0], &seed.h[1], &seed.h[2]], opts.collar);
        let worst = r1.zip(&r2, |a, b| a.abs().max(b.abs()));
        Ok(ResidualReport::from_field(
            "associated_differences",
            &worst,
            opts.tolerance_for(&seed.grid, scale),
            opts.collar,
        ))
    }
}

/// The star multiplier triple of a dual system at one family parameter.
#[derive(Clone, Debug)]
pub struct DualFamily {
    star: CombescureTriple,
    parameter: f64,
    seed: String,
}

impl DualFamily {
    pub fn star_triple(&self) -> &CombescureTriple {
        &self.star
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    pub fn seed(&self) -> &str {
        &self.seed
    }
}

/// Checks the Guichard condition in both forms: the algebraic trace
/// `χ = H₁² + H₂² − H₃²` and the differentiated relation per axis.
pub fn check_guichard(system: &OrthogonalSystem, opts: CheckOpts) -> Result<GuichardReport> {
    let grid = system.grid;
    let chi = system.chi_trace();
    let trace_scale = system
        .h
        .iter()
        .fold(0.0f64, |m, f| m.max(f.sup_abs()))
        .powi(2);
    let trace = ResidualReport::from_field(
        "guichard_trace",
        &chi,
        opts.tolerance_for(&grid, trace_scale),
        opts.collar,
    );

    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for i in 0..3 {
        let (j, k) = complement(i);
        let t0 = system.h[i]
            .derivative(i, opts.order)?
            .mul(&system.h[i])
            .scale(EPSILON[i]);
        let t1 = system.h[j]
            .mul(system.beta.beta(i, j))
            .mul(&system.h[i])
            .scale(EPSILON[j]);
        let t2 = system.h[k]
            .mul(system.beta.beta(i, k))
            .mul(&system.h[i])
            .scale(EPSILON[k]);
        scale = scale.max(field_scale(&[&t0, &t1, &t2], opts.collar));
        let r = t0.add(&t1).add(&t2);
        worst = worst.zip(&r, |m, v| m.max(v.abs()));
    }
    let differentiated = ResidualReport::from_field(
        "guichard_differentiated",
        &worst,
        opts.tolerance_for(&grid, scale),
        opts.collar,
    );
    Ok(GuichardReport {
        trace,
        differentiated,
    })
}

/// The gradient one-form of the associated multiplier `h₃`, written with the
/// principal curvatures `κ_ij = −β_ij/H_j` eliminated in favor of `β`:
///
/// `∂_x h₃ = H₂ β₁₃ / H₃²`, `∂_y h₃ = −H₁ β₂₃ / H₃²`,
/// `∂_z h₃ = (H₂ β₃₁ − H₁ β₃₂) / H₃²`.
pub fn associated_gradient_form(system: &OrthogonalSystem, _opts: CheckOpts) -> Result<OneForm> {
    let h3_sq = system.h[2].mul(&system.h[2]);
    if let Some((node, value)) = min_abs_node(&h3_sq) {
        if value < crate::report::MASK_REL * h3_sq.sup_abs() {
            return Err(Error::SmallDivisor {
                what: "H₃² in the associated gradient",
                node,
                value,
            });
        }
    }
    let g0 = system.h[1].mul(system.beta.beta(0, 2)).div_masked(&h3_sq);
    let g1 = system.h[0]
        .mul(system.beta.beta(1, 2))
        .div_masked(&h3_sq)
        .scale(-1.0);
    let g2 = system.h[1]
        .mul(system.beta.beta(2, 0))
        .sub(&system.h[0].mul(system.beta.beta(2, 1)))
        .div_masked(&h3_sq);
    Ok(OneForm::new([g0, g1, g2]))
}

fn min_abs_node(field: &ScalarField) -> Option<([usize; 3], f64)> {
    let mut best: Option<([usize; 3], f64)> = None;
    field.grid().for_each_node(|node, _| {
        let v = field.at(node).abs();
        if !v.is_nan() && best.is_none_or(|(_, b)| v < b) {
            best = Some((node, v));
        }
    });
    best
}

/// Builds the associated 1-system of a Guichard net at family parameter `c`,
/// anchoring the quadrature as `h₃(base_node) = h3_base_value` (which fixes
/// the `c = 0` member) and the transformed immersion as `f̂(base_node) = 0`.
///
/// A closedness failure of the `h₃` gradient signals a non-Guichard input
/// and is returned as an error.
pub fn build_associated(
    system: &OrthogonalSystem,
    c: f64,
    base_node: [usize; 3],
    h3_base_value: f64,
    opts: CheckOpts,
) -> Result<(AssociatedFamily, OrthogonalSystem)> {
    let grid = system.grid;
    grid.check_node(base_node)?;
    let form = associated_gradient_form(system, opts)?;
    let scale = form.scale().max(form.closedness_scale(opts.collar));
    let closedness = form.closedness_residual(
        "associated_gradient",
        opts.tolerance_for(&grid, scale),
        opts.collar,
    );
    if !closedness.pass {
        return Err(Error::Precondition(format!(
            "h₃ gradient is not closed (sup residual {:e} > {:e}); \
             the input does not satisfy the Guichard condition",
            closedness.sup, closedness.tolerance
        )));
    }
    let h3 = form.integrate(base_node, h3_base_value)?;
    let h1 = h3.add(&system.h[1].div_masked(&system.h[0].mul(&system.h[2])));
    let h2 = h3.sub(&system.h[0].div_masked(&system.h[1].mul(&system.h[2])));
    let base = CombescureTriple::new(system, [h1, h2, h3])?;
    let family = AssociatedFamily {
        base,
        seed: system.provenance.clone(),
        anchor_node: base_node,
        h3_base_value,
        closedness,
    };
    let mut out = apply_combescure(system, &family.triple_at(c), base_node, [0.0; 3], opts)?;
    out.provenance = format!("associated({}, c={})", system.provenance, c);
    Ok((family, out))
}

/// Checks the characterization identity `H_i Ĥ_j − H_j Ĥ_i = ε_k H_k` for the
/// three cyclic pairs, aggregated pointwise by maximum absolute value.
pub fn check_characterization(
    system: &OrthogonalSystem,
    comb: &OrthogonalSystem,
    opts: CheckOpts,
) -> Result<ResidualReport> {
    if comb.grid != system.grid {
        return Err(Error::GridMismatch(
            "Combescure system grid differs from the base".into(),
        ));
    }
    let grid = system.grid;
    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for i in 0..3 {
        let (j, k) = cyclic(i);
        let t0 = system.h[i].mul(&comb.h[j]);
        let t1 = system.h[j].mul(&comb.h[i]);
        scale = scale.max(field_scale(&[&t0, &t1, &system.h[k]], opts.collar));
        let r = t0.sub(&t1).sub(&system.h[k].scale(EPSILON[k]));
        worst = worst.zip(&r, |m, v| m.max(v.abs()));
    }
    Ok(ResidualReport::from_field(
        "characterization",
        &worst,
        opts.tolerance_for(&grid, scale),
        opts.collar,
    ))
}

/// Forms the star multiplier triple `h*_{i,c} = −(h_i + c)² + ε_i/H_i²` of
/// the dual system at family parameter `c`.
pub fn dual_family(
    system: &OrthogonalSystem,
    family: &AssociatedFamily,
    c: f64,
) -> Result<DualFamily> {
    if family.base.grid() != system.grid {
        return Err(Error::GridMismatch(
            "family grid differs from the seed system".into(),
        ));
    }
    let shifted = family.triple_at(c);
    let star: [ScalarField; 3] = std::array::from_fn(|i| {
        let sq = shifted.multiplier(i).mul(shifted.multiplier(i));
        let inv = ScalarField::constant(system.grid, EPSILON[i])
            .div_masked(&system.h[i].mul(&system.h[i]));
        inv.sub(&sq)
    });
    Ok(DualFamily {
        star: CombescureTriple::new(system, star)?,
        parameter: c,
        seed: system.provenance.clone(),
    })
}

/// Builds the dual Guichard net at family parameter `c` by applying the star
/// triple as a Combescure transform, anchored as `f*(base_node) = base_point`.
pub fn build_dual(
    system: &OrthogonalSystem,
    family: &AssociatedFamily,
    c: f64,
    base_node: [usize; 3],
    base_point: [f64; 3],
    opts: CheckOpts,
) -> Result<OrthogonalSystem> {
    let dual = dual_family(system, family, c)?;
    let mut out = apply_combescure(system, &dual.star, base_node, base_point, opts)?;
    out.provenance = format!("dual({}, c={})", system.provenance, c);
    Ok(out)
}

/// Evaluates the dual at another family parameter from the stored `c = 0`
/// dual by the quadratic family algebra
///
/// `H*_c = H*₀ − 2c Ĥ₀ − c² H`, `f*_c = f*₀ − 2c f̂₀ − c² f`,
///
/// with `f̂₀` re-integrated from the family at the `dual0` anchor node.
pub fn dual_at_parameter(
    system: &OrthogonalSystem,
    family: &AssociatedFamily,
    dual0: &OrthogonalSystem,
    c: f64,
    opts: CheckOpts,
) -> Result<OrthogonalSystem> {
    if dual0.grid != system.grid {
        return Err(Error::GridMismatch(
            "dual system grid differs from the seed".into(),
        ));
    }
    let anchor = dual0.anchor.ok_or_else(|| {
        Error::Precondition(
            "dual₀ carries no integration anchor; rebuild it with build_dual".into(),
        )
    })?;
    let assoc0 = apply_combescure(
        system,
        &family.triple_at(0.0),
        anchor.node,
        [0.0; 3],
        opts,
    )?;
    let h_star: [ScalarField; 3] = std::array::from_fn(|i| {
        dual0.h[i]
            .sub(&assoc0.h[i].scale(2.0 * c))
            .sub(&system.h[i].scale(c * c))
    });
    let f_star = dual0
        .f
        .zip(&assoc0.f, |a, b| {
            [
                a[0] - 2.0 * c * b[0],
                a[1] - 2.0 * c * b[1],
                a[2] - 2.0 * c * b[2],
            ]
        })
        .zip(&system.f, |a, b| {
            [a[0] - c * c * b[0], a[1] - c * c * b[1], a[2] - c * c * b[2]]
        });
    let mut out = OrthogonalSystem::assemble(
        f_star,
        h_star,
        dual0.n.clone(),
        dual0.beta.clone(),
        format!("dual({}, c={})", system.provenance, c),
    )?;
    out.anchor = dual0.anchor;
    Ok(out)
}

/// Checks the G-system relation `H_i H*_j + H_j H*_i + 2 Ĥ_i Ĥ_j = 0` for the
/// three unordered pairs, aggregated pointwise by maximum absolute value.
pub fn check_gsystem_relation(
    f_sys: &OrthogonalSystem,
    assoc_sys: &OrthogonalSystem,
    dual_sys: &OrthogonalSystem,
    opts: CheckOpts,
) -> Result<ResidualReport> {
    if assoc_sys.grid != f_sys.grid || dual_sys.grid != f_sys.grid {
        return Err(Error::GridMismatch(
            "G-system triple does not share one grid".into(),
        ));
    }
    let grid = f_sys.grid;
    let mut worst = ScalarField::zeros(grid);
    let mut scale = 0.0f64;
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let t0 = f_sys.h[i].mul(&dual_sys.h[j]);
        let t1 = f_sys.h[j].mul(&dual_sys.h[i]);
        let t2 = assoc_sys.h[i].mul(&assoc_sys.h[j]).scale(2.0);
        scale = scale.max(field_scale(&[&t0, &t1, &t2], opts.collar));
        let r = t0.add(&t1).add(&t2);
        worst = worst.zip(&r, |m, v| m.max(v.abs()));
    }
    Ok(ResidualReport::from_field(
        "gsystem_relation",
        &worst,
        opts.tolerance_for(&grid, scale),
        opts.collar,
    ))
}
