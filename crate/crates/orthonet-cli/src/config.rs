//! Run configuration: one schema shared by the CLI flags and the `--config`
//! JSON file.
//!
//! Flags mirror the fields one-to-one; a config file, when given, supersedes
//! the flags field-by-field so a committed JSON file reproduces a run exactly.
//! Unknown keys are rejected up front (schema validation) rather than being
//! silently ignored.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// Seed values of the Bianchi system at the anchor node.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BianchiSeed {
    pub gamma: [f64; 3],
    pub gammabar: [f64; 3],
}

/// Grid override: per-axis sample count (cube) and optional bounding box;
/// the box defaults to the chart's recommended domain.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Option<usize>,
    #[serde(rename = "box")]
    pub bounds: Option<[[f64; 2]; 3]>,
}

/// Union of every run parameter; each subcommand reads the fields it knows.
/// All fields are optional so flag and file sources merge cleanly.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog chart name (hyphens and underscores interchangeable).
    pub chart: Option<String>,
    /// Alias used by the Bäcklund run schema.
    pub seed_chart: Option<String>,
    /// Family parameter of parametric charts and constructions.
    pub c: Option<f64>,
    /// Grid points per axis (uniform cube grid).
    pub n: Option<usize>,
    /// Bounding box override for the grid.
    #[serde(rename = "box")]
    pub bounds: Option<[[f64; 2]; 3]>,
    /// Nested grid override (Bäcklund run schema).
    pub grid: Option<GridConfig>,
    /// Check names for `verify`.
    pub checks: Option<Vec<String>>,
    /// Finite-difference stencil order (2 or 4).
    pub order: Option<u8>,
    /// Boundary collar width excluded from residual norms.
    pub collar: Option<usize>,
    /// Explicit tolerance overriding the grid-aware default.
    pub tolerance: Option<f64>,
    /// Spectral parameter α of the Bäcklund transform.
    pub alpha: Option<f64>,
    /// Sphere-congruence parameter λ.
    pub lambda: Option<f64>,
    /// Bianchi seed `(γ, γ̄)` at the anchor node.
    pub bianchi_seed: Option<BianchiSeed>,
    /// Flat list `γ₁,γ₂,γ₃,γ̄₁,γ̄₂,γ̄₃` (flag-friendly seed form).
    pub seed: Option<Vec<f64>>,
    /// Slice selectors `axis:index` for `export`.
    pub slices: Option<Vec<String>>,
    /// Directory receiving one OBJ file per requested slice.
    pub obj_dir: Option<PathBuf>,
    /// Scalar field exported as CSV (h1|h2|h3|chi|fx|fy|fz).
    pub csv_field: Option<String>,
    /// CSV output path.
    pub csv: Option<PathBuf>,
    /// Report file path (the report always also goes to stdout).
    pub report: Option<PathBuf>,
}

impl RunConfig {
    /// Loads and schema-validates a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("config {} violates the run schema", path.display()))?;
        Ok(cfg)
    }

    /// Overlays `file` on `self`: file fields that are present win.
    pub fn superseded_by(mut self, file: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if file.$field.is_some() { self.$field = file.$field; })*
            };
        }
        take!(
            chart, seed_chart, c, n, bounds, grid, checks, order, collar, tolerance, alpha,
            lambda, bianchi_seed, seed, slices, obj_dir, csv_field, csv, report
        );
        self
    }

    /// Chart name, honoring the `seed_chart` alias.
    pub fn chart_name(&self) -> Result<&str> {
        self.chart
            .as_deref()
            .or(self.seed_chart.as_deref())
            .ok_or_else(|| anyhow::anyhow!("no chart given (use --chart or the config file)"))
    }

    /// Grid resolution: nested `grid.n`, then top-level `n`, then 17.
    pub fn resolution(&self) -> usize {
        self.grid
            .and_then(|g| g.n)
            .or(self.n)
            .unwrap_or(17)
    }

    /// Grid box override from either form.
    pub fn grid_bounds(&self) -> Option<[[f64; 2]; 3]> {
        self.grid.and_then(|g| g.bounds).or(self.bounds)
    }

    /// The Bianchi seed from either form, defaulting to `(1,1,0; 1,1,0)`.
    pub fn bianchi_seed_values(&self) -> Result<([f64; 3], [f64; 3])> {
        if let Some(seed) = &self.bianchi_seed {
            return Ok((seed.gamma, seed.gammabar));
        }
        if let Some(flat) = &self.seed {
            if flat.len() != 6 {
                bail!(
                    "--seed needs six values γ₁,γ₂,γ₃,γ̄₁,γ̄₂,γ̄₃ (got {})",
                    flat.len()
                );
            }
            return Ok((
                [flat[0], flat[1], flat[2]],
                [flat[3], flat[4], flat[5]],
            ));
        }
        Ok(([1.0, 1.0, 0.0], [1.0, 1.0, 0.0]))
    }

    /// Parses `axis:index` slice selectors.
    pub fn slice_selectors(&self) -> Result<Vec<(usize, usize)>> {
        let Some(specs) = &self.slices else {
            return Ok(Vec::new());
        };
        let mut out = Vec::with_capacity(specs.len());
        for spec in specs {
            let (axis, index) = spec
                .split_once(':')
                .with_context(|| format!("slice selector {spec:?} is not axis:index"))?;
            let axis: usize = axis
                .trim()
                .parse()
                .with_context(|| format!("slice axis in {spec:?}"))?;
            let index: usize = index
                .trim()
                .parse()
                .with_context(|| format!("slice index in {spec:?}"))?;
            if axis > 2 {
                bail!("slice axis {axis} out of range (expected 0, 1 or 2)");
            }
            out.push((axis, index));
        }
        Ok(out)
    }
}
