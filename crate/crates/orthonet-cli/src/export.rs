//! Mesh and table export: coordinate surfaces as Wavefront OBJ, scalar
//! fields as CSV.
//!
//! A coordinate surface `x_axis = const` of a sampled system is already a
//! structured quad grid in the two in-slice parameters, so the OBJ writer
//! emits the position samples as vertices in row-major order and splits each
//! parameter cell into two triangles with consistent winding. CSV rows carry
//! grid indices, world coordinates and the field value, one node per line.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use orthonet::surface::SurfaceSlice;
use orthonet::{OrthogonalSystem, ScalarField};

/// Renders a slice as an ASCII OBJ mesh (`v` lines, then `f` triangles with
/// 1-based vertex indices).
pub fn obj_mesh(slice: &SurfaceSlice) -> String {
    let [nu, nv] = slice.grid.n;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# coordinate surface axis={} index={} ({} x {})",
        slice.axis, slice.index, nu, nv
    );
    for a in 0..nu {
        for b in 0..nv {
            let p = slice.f.at([a, b]);
            let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
        }
    }
    let vertex = |a: usize, b: usize| a * nv + b + 1;
    for a in 0..nu - 1 {
        for b in 0..nv - 1 {
            let (v1, v2, v3, v4) = (
                vertex(a, b),
                vertex(a + 1, b),
                vertex(a + 1, b + 1),
                vertex(a, b + 1),
            );
            let _ = writeln!(out, "f {v1} {v2} {v3}");
            let _ = writeln!(out, "f {v1} {v3} {v4}");
        }
    }
    out
}

/// Writes one OBJ file per slice into `dir`, named
/// `<chart>_axis<axis>_idx<index>.obj`; returns the written paths.
pub fn write_obj_slices(
    dir: &Path,
    chart: &str,
    slices: &[SurfaceSlice],
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating OBJ directory {}", dir.display()))?;
    let mut written = Vec::with_capacity(slices.len());
    for slice in slices {
        let path = dir.join(format!(
            "{}_axis{}_idx{}.obj",
            chart, slice.axis, slice.index
        ));
        std::fs::write(&path, obj_mesh(slice))
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// Resolves an exportable scalar field of the system by name.
pub fn named_field(system: &OrthogonalSystem, name: &str) -> Result<ScalarField> {
    Ok(match name {
        "h1" => system.h[0].clone(),
        "h2" => system.h[1].clone(),
        "h3" => system.h[2].clone(),
        "chi" => system.chi_trace(),
        "fx" => system.f.component(0),
        "fy" => system.f.component(1),
        "fz" => system.f.component(2),
        other => bail!(
            "unknown CSV field {other:?} (expected h1, h2, h3, chi, fx, fy or fz)"
        ),
    })
}

/// Writes a scalar field as `i,j,k,x,y,z,value` CSV.
pub fn write_csv_field(path: &Path, field: &ScalarField) -> Result<()> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf)?;
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use orthonet::catalog::AnalyticChart;

    fn sampled(n: usize) -> OrthogonalSystem {
        let chart = AnalyticChart::instantiate("six_sphere", None).unwrap();
        chart.sample(chart.default_grid(n).unwrap()).unwrap()
    }

    #[test]
    fn obj_mesh_counts_vertices_and_faces() {
        let sys = sampled(5);
        let slice = orthonet::surface::extract_slice(&sys, 2, 2).unwrap();
        let obj = obj_mesh(&slice);
        let vertices = obj.lines().filter(|l| l.starts_with("v ")).count();
        let faces = obj.lines().filter(|l| l.starts_with("f ")).count();
        assert_eq!(vertices, 25);
        assert_eq!(faces, 2 * 4 * 4);
        // All face indices must reference existing vertices (1-based).
        for line in obj.lines().filter(|l| l.starts_with("f ")) {
            for idx in line.split_whitespace().skip(1) {
                let idx: usize = idx.parse().unwrap();
                assert!(idx >= 1 && idx <= vertices);
            }
        }
    }

    #[test]
    fn named_fields_resolve() {
        let sys = sampled(5);
        assert!(named_field(&sys, "chi").is_ok());
        assert!(named_field(&sys, "fz").is_ok());
        assert!(named_field(&sys, "curvature").is_err());
    }
}
