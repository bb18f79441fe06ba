//! Subcommand execution: sample a catalog chart, run the requested
//! construction and its checks, and assemble the versioned JSON report.
//!
//! Reports are deterministic by construction — field order is fixed by the
//! report struct, JSON object keys are sorted, and nothing
//! environment-dependent (timestamps, RNG, absolute paths the user did not
//! supply) enters the output — so identical run configurations produce
//! byte-identical reports.

use anyhow::{anyhow, bail, Result};
use orthonet::catalog::{registry, AnalyticChart};
use orthonet::guichard::{
    build_associated, build_dual, check_characterization, check_gsystem_relation, check_guichard,
};
use orthonet::ribaucour::{
    backlund, check_ribaucour_data, decompose_ribaucour, integrate_bianchi, RibaucourData,
};
use orthonet::surface::{analyze_family, check_surface_point_solution, extract_slice};
use orthonet::{CheckOpts, FdOrder, GridSpec, OrthogonalSystem, ResidualReport};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::export;

/// Report schema version tag.
pub const SCHEMA: &str = "orthonet/1";

/// Check names accepted by `verify`, in execution order.
pub const CHECK_NAMES: [&str; 7] = [
    "orthogonality",
    "parametrization",
    "frame",
    "determinant",
    "lame",
    "point",
    "guichard",
];

/// The versioned JSON run report.
#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: &'static str,
    pub chart: String,
    pub parameters: Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
    pub checks: Vec<ResidualReport>,
    pub pass: bool,
}

impl Report {
    fn assemble(
        command: &'static str,
        chart: String,
        parameters: Value,
        details: Value,
        checks: Vec<ResidualReport>,
    ) -> Report {
        let pass = checks.iter().all(|c| c.pass);
        Report {
            schema: SCHEMA,
            command,
            chart,
            parameters,
            details,
            checks,
            pass,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn render(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// The chart listing (not a run report, but the same schema tag).
pub fn list_charts() -> String {
    let listing = json!({ "schema": SCHEMA, "charts": registry() });
    let mut text = serde_json::to_string_pretty(&listing).expect("listing serializes");
    text.push('\n');
    text
}

/// Check options from the run configuration.
fn opts(cfg: &RunConfig) -> Result<CheckOpts> {
    let mut o = CheckOpts::default();
    if let Some(order) = cfg.order {
        o.order = FdOrder::from_u8(order)?;
    }
    if let Some(collar) = cfg.collar {
        o.collar = collar;
    }
    o.tolerance = cfg.tolerance;
    Ok(o)
}

/// Instantiates and samples the configured chart.
fn sampled(cfg: &RunConfig) -> Result<(AnalyticChart, OrthogonalSystem, CheckOpts)> {
    let chart = AnalyticChart::instantiate(cfg.chart_name()?, cfg.c)?;
    let n = cfg.resolution();
    let grid = match cfg.grid_bounds() {
        Some(bounds) => GridSpec::new([n; 3], bounds)?,
        None => chart.default_grid(n)?,
    };
    let system = chart.sample(grid)?;
    Ok((chart, system, opts(cfg)?))
}

/// Shared `parameters` keys; commands extend this object.
fn base_parameters(cfg: &RunConfig, o: CheckOpts) -> serde_json::Map<String, Value> {
    let order: u8 = match o.order {
        FdOrder::Two => 2,
        FdOrder::Four => 4,
    };
    let Value::Object(map) = json!({
        "c": cfg.c,
        "n": cfg.resolution(),
        "order": order,
        "collar": o.collar,
        "tolerance": cfg.tolerance,
    }) else {
        unreachable!("json! object literal");
    };
    map
}

/// Appends the reports of one named check of `verify`.
fn run_check(
    sys: &OrthogonalSystem,
    name: &str,
    o: CheckOpts,
    out: &mut Vec<ResidualReport>,
) -> Result<()> {
    match name {
        "orthogonality" => out.push(sys.check_orthogonality(o)),
        "parametrization" => out.push(sys.check_parametrization(o)?),
        "frame" => out.push(sys.check_frame(o)?),
        "determinant" => out.push(sys.check_determinant(o)?),
        "lame" => {
            let lame = sys.check_lame(o)?;
            out.push(lame.first);
            out.push(lame.second);
        }
        "point" => {
            for pair in [(0usize, 1usize), (0, 2), (1, 2)] {
                let name = format!("point_equation_{}{}", pair.0 + 1, pair.1 + 1);
                out.push(sys.check_point_equation(pair, o)?.renamed(name));
            }
        }
        "guichard" => {
            let g = check_guichard(sys, o)?;
            out.push(g.trace);
            out.push(g.differentiated);
        }
        other => bail!(
            "unknown check {other:?} (expected one of {})",
            CHECK_NAMES.join(", ")
        ),
    }
    Ok(())
}

/// `verify`: residual checks of a sampled chart.
pub fn verify(cfg: &RunConfig) -> Result<Report> {
    let (chart, sys, o) = sampled(cfg)?;
    let names = match &cfg.checks {
        Some(names) => names.clone(),
        None => CHECK_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let mut checks = Vec::new();
    for name in &names {
        run_check(&sys, name, o, &mut checks)?;
    }
    let mut parameters = base_parameters(cfg, o);
    parameters.insert("checks".into(), json!(names));
    let details = json!({ "classification": sys.classify(o).to_string() });
    Ok(Report::assemble(
        "verify",
        chart.name(),
        Value::Object(parameters),
        details,
        checks,
    ))
}

/// Residual of `χ̂ ≡ 1`, the trace constant of an associated 1-system.
fn chi_unit_residual(assoc: &OrthogonalSystem, o: CheckOpts) -> ResidualReport {
    let residual = assoc.chi_trace().map(|v| v - 1.0);
    let hsup = assoc.h.iter().fold(0.0f64, |m, h| m.max(h.sup_abs()));
    let tol = o.tolerance_for(&assoc.grid, (hsup * hsup).max(1.0));
    ResidualReport::from_field("associated_chi_unit", &residual, tol, o.collar)
}

/// `associate`: build the associated 1-system at family parameter `c`.
pub fn associate(cfg: &RunConfig) -> Result<Report> {
    let (chart, sys, o) = sampled(cfg)?;
    let c = cfg.c.unwrap_or(0.0);
    let base = sys.grid.center_node();
    let (family, assoc) = build_associated(&sys, c, base, 0.0, o)?;
    let checks = vec![
        family.closedness.clone(),
        family.difference_residual(&sys, o)?,
        check_characterization(&sys, &assoc, o)?,
        chi_unit_residual(&assoc, o),
    ];
    let mut parameters = base_parameters(cfg, o);
    parameters.insert("c".into(), json!(c));
    let details = json!({
        "classification": assoc.classify(o).to_string(),
        "anchor_node": base,
    });
    Ok(Report::assemble(
        "associate",
        chart.name(),
        Value::Object(parameters),
        details,
        checks,
    ))
}

/// `dualize`: build the dual Guichard net at family parameter `c`.
pub fn dualize(cfg: &RunConfig) -> Result<Report> {
    let (chart, sys, o) = sampled(cfg)?;
    let c = cfg.c.unwrap_or(0.0);
    let base = sys.grid.center_node();
    let (family, assoc) = build_associated(&sys, c, base, 0.0, o)?;
    let dual = build_dual(&sys, &family, c, base, [0.0; 3], o)?;
    let guichard = check_guichard(&dual, o)?;
    let checks = vec![
        check_gsystem_relation(&sys, &assoc, &dual, o)?,
        guichard.trace.renamed("dual_guichard_trace"),
        guichard.differentiated.renamed("dual_guichard_differentiated"),
    ];
    let mut parameters = base_parameters(cfg, o);
    parameters.insert("c".into(), json!(c));
    let details = json!({
        "classification": dual.classify(o).to_string(),
        "anchor_node": base,
    });
    Ok(Report::assemble(
        "dualize",
        chart.name(),
        Value::Object(parameters),
        details,
        checks,
    ))
}

/// `backlund`: integrate the Bianchi system from a center seed and apply
/// the Bäcklund transform at `(α, λ)`.
pub fn run_backlund(cfg: &RunConfig) -> Result<Report> {
    let (chart, sys, o) = sampled(cfg)?;
    let alpha = cfg.alpha.unwrap_or(1.0);
    let lambda = cfg.lambda.unwrap_or(0.0);
    let (gamma, gammabar) = cfg.bianchi_seed_values()?;
    let bianchi = integrate_bianchi(&sys, alpha, gamma, gammabar, o)?;
    let out = backlund(&sys, &bianchi.f_bar, alpha, lambda, o)?;

    // Trace identity of the image in multiplied form:
    // χ(R)·|f̄|² = 4α²λ(φ + λ) with φ = (H₁H̄₁ + H₂H̄₂ − H₃H̄₃)/α²;
    // for λ = 0 this is the Guichard condition of the image.
    let fsq = bianchi.f_bar.f.norm_sq();
    let phi = sys.h[0]
        .mul(&bianchi.f_bar.h[0])
        .add(&sys.h[1].mul(&bianchi.f_bar.h[1]))
        .sub(&sys.h[2].mul(&bianchi.f_bar.h[2]))
        .scale(1.0 / (alpha * alpha));
    let rhs = phi.map(|p| 4.0 * alpha * alpha * lambda * (p + lambda));
    let residual = out.chi_trace().mul(&fsq).sub(&rhs);
    let hsup = out.h.iter().fold(0.0f64, |m, h| m.max(h.sup_abs()));
    let scale = (hsup * hsup * fsq.sup_abs()).max(rhs.sup_abs());
    let trace_check = ResidualReport::from_field(
        "backlund_trace",
        &residual,
        o.tolerance_for(&sys.grid, scale),
        o.collar,
    );

    let checks = vec![
        bianchi.conservation.renamed("bianchi_conservation"),
        bianchi.path_dependence.renamed("bianchi_path_dependence"),
        bianchi.trace.renamed("factor_alpha_trace"),
        out.check_parametrization(o)?.renamed("backlund_parametrization"),
        trace_check,
    ];
    let mut parameters = base_parameters(cfg, o);
    parameters.insert("alpha".into(), json!(alpha));
    parameters.insert("lambda".into(), json!(lambda));
    parameters.insert(
        "seed".into(),
        json!({ "gamma": gamma, "gammabar": gammabar }),
    );
    let details = json!({ "classification": out.classify(o).to_string() });
    Ok(Report::assemble(
        "backlund",
        chart.name(),
        Value::Object(parameters),
        details,
        checks,
    ))
}

/// `decompose`: Ribaucour transform induced by the unit-sphere inversion at
/// congruence parameter λ (data `γ_i = f·N_i`, `φ = |f|²/2 + λ`), decomposed
/// through its Combescure factor.
pub fn decompose(cfg: &RunConfig) -> Result<Report> {
    let (chart, sys, o) = sampled(cfg)?;
    let lambda = cfg.lambda.unwrap_or(1.0);
    let gamma = std::array::from_fn(|i| sys.f.dot(&sys.n[i]));
    let phi = sys.f.norm_sq().map(|v| 0.5 * v + lambda);
    let data = RibaucourData::new(gamma, phi)?;
    let dec = decompose_ribaucour(&sys, &data, o)?;
    let checks = vec![
        check_ribaucour_data(&sys, &data, o)?,
        dec.lame_match,
        dec.combescure,
        dec.reconstruction,
    ];
    let mut parameters = base_parameters(cfg, o);
    parameters.insert("lambda".into(), json!(lambda));
    let details = json!({
        "factor_classification": dec.f_bar.classify(o).to_string(),
    });
    Ok(Report::assemble(
        "decompose",
        chart.name(),
        Value::Object(parameters),
        details,
        checks,
    ))
}

/// `analyze`: family classification per axis plus the mid-slice point
/// equation for the slice scalar `θ = √(H_v² + εH_u²)`.
pub fn analyze(cfg: &RunConfig) -> Result<Report> {
    let (chart, sys, o) = sampled(cfg)?;
    let mut checks = Vec::new();
    let mut families = Vec::new();
    for axis in 0..3 {
        let fam = analyze_family(&sys, axis, o)?;
        families.push(json!({
            "axis": fam.axis,
            "parallel": fam.parallel,
            "totally_umbilic": fam.totally_umbilic,
            "cyclic": fam.cyclic,
            "parallel_residual": fam.parallel_residual,
            "umbilic_residual": fam.umbilic_residual,
            "cyclic_residual": fam.cyclic_residual,
            "torsion_sup": fam.torsion.sup_abs(),
        }));
        let slice = extract_slice(&sys, axis, sys.grid.n[axis] / 2)?;
        let theta = slice.guichard_theta();
        let name = format!("surface_point_equation_axis{axis}");
        checks.push(check_surface_point_solution(&slice, &theta, o)?.renamed(name));
    }
    let parameters = base_parameters(cfg, o);
    let details = json!({
        "classification": sys.classify(o).to_string(),
        "families": families,
    });
    Ok(Report::assemble(
        "analyze",
        chart.name(),
        Value::Object(parameters),
        details,
        checks,
    ))
}

/// File-name slug of a chart (its provenance with punctuation mapped to `_`).
fn chart_slug(name: &str) -> String {
    name.chars()
        .map(|ch| {
            if ch.is_ascii_alphanumeric() || ch == '_' || ch == '-' || ch == '.' {
                ch
            } else {
                '_'
            }
        })
        .collect()
}

/// `export`: OBJ meshes of selected coordinate surfaces and/or one scalar
/// field as CSV.
pub fn run_export(cfg: &RunConfig) -> Result<Report> {
    let (chart, sys, o) = sampled(cfg)?;
    let selectors = cfg.slice_selectors()?;
    if selectors.is_empty() && cfg.csv.is_none() {
        bail!("nothing to export: give --slices with --obj-dir, and/or --csv");
    }

    let mut obj_written = Vec::new();
    if !selectors.is_empty() {
        let dir = cfg
            .obj_dir
            .as_ref()
            .ok_or_else(|| anyhow!("--slices needs --obj-dir"))?;
        let mut slices = Vec::with_capacity(selectors.len());
        for &(axis, index) in &selectors {
            slices.push(extract_slice(&sys, axis, index)?);
        }
        let paths = export::write_obj_slices(dir, &chart_slug(&chart.name()), &slices)?;
        obj_written = paths
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>();
    }

    let mut csv_detail = Value::Null;
    if let Some(path) = &cfg.csv {
        let field_name = cfg.csv_field.as_deref().unwrap_or("chi");
        let field = export::named_field(&sys, field_name)?;
        export::write_csv_field(path, &field)?;
        csv_detail = json!({
            "path": path.display().to_string(),
            "field": field_name,
        });
    }

    let mut parameters = base_parameters(cfg, o);
    parameters.insert(
        "slices".into(),
        json!(selectors
            .iter()
            .map(|(a, i)| format!("{a}:{i}"))
            .collect::<Vec<_>>()),
    );
    let details = json!({ "obj": obj_written, "csv": csv_detail });
    Ok(Report::assemble(
        "export",
        chart.name(),
        Value::Object(parameters),
        details,
        Vec::new(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(chart: &str, n: usize) -> RunConfig {
        RunConfig {
            chart: Some(chart.into()),
            n: Some(n),
            ..RunConfig::default()
        }
    }

    #[test]
    fn verify_six_sphere_passes_all_default_checks() {
        let report = verify(&cfg("six_sphere", 9)).unwrap();
        assert!(report.pass);
        // orthogonality, parametrization, frame, determinant, lame (2),
        // point (3), guichard (2).
        assert_eq!(report.checks.len(), 11);
        assert_eq!(report.schema, "orthonet/1");
    }

    #[test]
    fn verify_rejects_unknown_check_names() {
        let mut c = cfg("six_sphere", 9);
        c.checks = Some(vec!["curvature".into()]);
        let err = verify(&c).unwrap_err();
        assert!(err.to_string().contains("unknown check"));
    }

    #[test]
    fn verify_flags_the_control_chart() {
        let mut c = cfg("spherical_control", 9);
        c.checks = Some(vec!["guichard".into()]);
        let report = verify(&c).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn transform_commands_pass_on_the_six_sphere() {
        let mut c = cfg("six_sphere", 9);
        c.c = Some(0.2);
        assert!(associate(&c).unwrap().pass);
        assert!(dualize(&c).unwrap().pass);
        assert!(decompose(&cfg("six_sphere", 9)).unwrap().pass);
        assert!(analyze(&cfg("six_sphere", 9)).unwrap().pass);
    }

    #[test]
    fn backlund_runs_on_the_flat_chart_for_both_lambdas() {
        let mut c = cfg("flat_guichard", 9);
        let zero = run_backlund(&c).unwrap();
        assert!(zero.pass);
        assert_eq!(zero.details["classification"], "guichard");
        c.lambda = Some(1.0);
        assert!(run_backlund(&c).unwrap().pass);
    }

    #[test]
    fn reports_are_deterministic() {
        let a = verify(&cfg("six_sphere", 9)).unwrap().render();
        let b = verify(&cfg("six_sphere", 9)).unwrap().render();
        assert_eq!(a, b);
    }
}
