//! Small numerical kernels shared across modules: 3×3 linear algebra, a
//! fourth-order Runge–Kutta sweep for linear ODE systems posed on grid lines,
//! and a dense Gaussian solver for the least-squares fits.

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Determinant of a 3×3 matrix stored row-major.
pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Dot product in ℝ³.
#[inline]
pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Euclidean norm in ℝ³.
#[inline]
pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Re-orthonormalizes a nearly orthogonal 3×3 matrix (rows = frame vectors)
/// by the Newton iteration `Q ← ½(Q + Q⁻ᵀ)`, which converges quadratically to
/// the nearest orthogonal matrix and preserves the sign of the determinant.
pub(crate) fn orthonormalize3(q: &mut [[f64; 3]; 3]) {
    for _ in 0..25 {
        let d = det3(q);
        if d.abs() < 1e-12 {
            return; // degenerate input; leave untouched rather than blow up
        }
        // Q⁻ᵀ = adj(Q)ᵀ / det = cofactor matrix / det.
        let c = [
            [
                q[1][1] * q[2][2] - q[1][2] * q[2][1],
                q[1][2] * q[2][0] - q[1][0] * q[2][2],
                q[1][0] * q[2][1] - q[1][1] * q[2][0],
            ],
            [
                q[0][2] * q[2][1] - q[0][1] * q[2][2],
                q[0][0] * q[2][2] - q[0][2] * q[2][0],
                q[0][1] * q[2][0] - q[0][0] * q[2][1],
            ],
            [
                q[0][1] * q[1][2] - q[0][2] * q[1][1],
                q[0][2] * q[1][0] - q[0][0] * q[1][2],
                q[0][0] * q[1][1] - q[0][1] * q[1][0],
            ],
        ];
        let mut next = [[0.0; 3]; 3];
        let mut delta = 0.0f64;
        for r in 0..3 {
            for s in 0..3 {
                next[r][s] = 0.5 * (q[r][s] + c[r][s] / d);
                delta = delta.max((next[r][s] - q[r][s]).abs());
            }
        }
        *q = next;
        if delta < 1e-15 {
            return;
        }
    }
}

#[inline]
fn matvec<const D: usize>(a: &[[f64; D]; D], x: &[f64; D]) -> [f64; D] {
    let mut y = [0.0; D];
    for r in 0..D {
        let mut s = 0.0;
        for c in 0..D {
            s += a[r][c] * x[c];
        }
        y[r] = s;
    }
    y
}

/// Matrix value at the midpoint of segment `(t, t+1)` of a line of `n`
/// node samples, by centered quintic interpolation in the interior (cubic,
/// then quadratic near the ends). The interpolation error stays below the
/// RK4 truncation error, so the march remains genuinely fourth order
/// without evaluating the coefficients between nodes.
fn midpoint<const D: usize>(ms: &[[[f64; D]; D]], t: usize) -> [[f64; D]; D] {
    let n = ms.len();
    let mut out = [[0.0; D]; D];
    for r in 0..D {
        for c in 0..D {
            out[r][c] = if t >= 2 && t + 3 < n {
                (3.0 * ms[t - 2][r][c] - 25.0 * ms[t - 1][r][c]
                    + 150.0 * ms[t][r][c]
                    + 150.0 * ms[t + 1][r][c]
                    - 25.0 * ms[t + 2][r][c]
                    + 3.0 * ms[t + 3][r][c])
                    / 256.0
            } else if t >= 1 && t + 2 < n {
                (-ms[t - 1][r][c] + 9.0 * ms[t][r][c] + 9.0 * ms[t + 1][r][c]
                    - ms[t + 2][r][c])
                    / 16.0
            } else if t == 0 {
                (3.0 * ms[0][r][c] + 6.0 * ms[1][r][c] - ms[2][r][c]) / 8.0
            } else {
                (-ms[n - 3][r][c] + 6.0 * ms[n - 2][r][c] + 3.0 * ms[n - 1][r][c]) / 8.0
            };
        }
    }
    out
}

/// One RK4 step of `y' = A(t) y` from node `t` to node `t ± 1`.
fn rk4_step<const D: usize>(
    y: &[f64; D],
    h: f64,
    a_from: &[[f64; D]; D],
    a_mid: &[[f64; D]; D],
    a_to: &[[f64; D]; D],
) -> [f64; D] {
    let k1 = matvec(a_from, y);
    let mut y2 = *y;
    for r in 0..D {
        y2[r] += 0.5 * h * k1[r];
    }
    let k2 = matvec(a_mid, &y2);
    let mut y3 = *y;
    for r in 0..D {
        y3[r] += 0.5 * h * k2[r];
    }
    let k3 = matvec(a_mid, &y3);
    let mut y4 = *y;
    for r in 0..D {
        y4[r] += h * k3[r];
    }
    let k4 = matvec(a_to, &y4);
    let mut out = *y;
    for r in 0..D {
        out[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
    }
    out
}

/// Integrates the linear system `∂_a y = A_a(x) y` over the whole grid by an
/// RK4 march, seeding `y = seed` at `base_node` and sweeping lines in
/// `axis_order` (one line, then a plane of lines, then the volume — the same
/// pattern as 1-form integration). `matrix(axis, node)` supplies the
/// coefficient matrix of the marched axis at a node; `post_step` runs after
/// every accepted step (e.g. to re-orthonormalize a frame).
pub(crate) fn integrate_linear<const D: usize>(
    grid: GridSpec,
    base_node: [usize; 3],
    seed: [f64; D],
    matrix: &dyn Fn(usize, [usize; 3]) -> [[f64; D]; D],
    post_step: &mut dyn FnMut(&mut [f64; D]),
    axis_order: [usize; 3],
) -> Result<Vec<[f64; D]>> {
    grid.check_node(base_node)?;
    {
        let mut sorted = axis_order;
        sorted.sort_unstable();
        if sorted != [0, 1, 2] {
            return Err(Error::AxisOutOfRange(
                axis_order[0].max(axis_order[1]).max(axis_order[2]),
            ));
        }
    }
    let mut values = vec![[f64::NAN; D]; grid.len()];
    values[grid.idx(base_node[0], base_node[1], base_node[2])] = seed;

    let a0 = axis_order[0];
    let a1 = axis_order[1];
    let a2 = axis_order[2];
    march_line(grid, &mut values, base_node, a0, matrix, post_step);
    let mut start = base_node;
    for t0 in 0..grid.n[a0] {
        start[a0] = t0;
        march_line(grid, &mut values, start, a1, matrix, post_step);
    }
    for t0 in 0..grid.n[a0] {
        start[a0] = t0;
        for t1 in 0..grid.n[a1] {
            start[a1] = t1;
            march_line(grid, &mut values, start, a2, matrix, post_step);
        }
    }
    Ok(values)
}

/// Marches the line through `from` along `axis` in both directions, assuming
/// the state at `from` is already stored.
fn march_line<const D: usize>(
    grid: GridSpec,
    values: &mut [[f64; D]],
    from: [usize; 3],
    axis: usize,
    matrix: &dyn Fn(usize, [usize; 3]) -> [[f64; D]; D],
    post_step: &mut dyn FnMut(&mut [f64; D]),
) {
    let n = grid.n[axis];
    let h = grid.spacing[axis];
    // Gather the coefficient matrices for the whole line once.
    let mut ms = Vec::with_capacity(n);
    let mut node = from;
    for t in 0..n {
        node[axis] = t;
        ms.push(matrix(axis, node));
    }
    let flat_of = |t: usize| {
        let mut nd = from;
        nd[axis] = t;
        grid.idx(nd[0], nd[1], nd[2])
    };
    // Forward.
    for t in from[axis]..n - 1 {
        let y = values[flat_of(t)];
        let mid = midpoint(&ms, t);
        let mut next = rk4_step(&y, h, &ms[t], &mid, &ms[t + 1]);
        post_step(&mut next);
        values[flat_of(t + 1)] = next;
    }
    // Backward.
    for t in (1..=from[axis]).rev() {
        let y = values[flat_of(t)];
        let mid = midpoint(&ms, t - 1);
        let mut prev = rk4_step(&y, -h, &ms[t], &mid, &ms[t - 1]);
        post_step(&mut prev);
        values[flat_of(t - 1)] = prev;
    }
}

/// Solves the dense system `A x = b` in place by Gaussian elimination with
/// partial pivoting. Returns `None` when a pivot falls below `1e-12` times
/// the largest initial entry (caller may ridge-regularize and retry).
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pivot < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col][c] * x[c];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn det_and_orthonormalize() {
        let m = [[2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 4.0]];
        assert_relative_eq!(det3(&m), 24.0);
        // A slightly perturbed rotation snaps back to orthogonality.
        let c = 0.6f64;
        let s = 0.8f64;
        let mut q = [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]];
        q[0][0] += 1e-4;
        q[1][2] -= 2e-4;
        orthonormalize3(&mut q);
        for r in 0..3 {
            for t in 0..3 {
                let want = if r == t { 1.0 } else { 0.0 };
                assert_relative_eq!(dot3(q[r], q[t]), want, epsilon = 1e-12);
            }
        }
        assert!(det3(&q) > 0.0);
    }

    #[test]
    fn rk4_matches_exponential() {
        // y' = cos(x) y along the x-axis of a product field has solution
        // y = exp(sin x); the A matrix 1×1 case exercises the sweep.
        let run = |n: usize| -> f64 {
            let grid = GridSpec::cube(n, 0.0, 1.0).unwrap();
            let matrix = |axis: usize, node: [usize; 3]| -> [[f64; 1]; 1] {
                if axis == 0 {
                    [[grid.coord(node)[0].cos()]]
                } else {
                    [[0.0]]
                }
            };
            let values =
                integrate_linear(grid, [0, 0, 0], [1.0], &matrix, &mut |_| {}, [0, 1, 2])
                    .unwrap();
            let mut worst = 0.0f64;
            grid.for_each_node(|node, p| {
                let got = values[grid.idx(node[0], node[1], node[2])][0];
                worst = worst.max((got - p[0].sin().exp()).abs());
            });
            worst
        };
        let coarse = run(33);
        let fine = run(65);
        assert!(coarse < 1e-7, "coarse = {coarse}");
        // Halving h must shrink the error ~16×; demand at least 12×.
        assert!(fine < coarse / 12.0, "coarse = {coarse}, fine = {fine}");
    }

    #[test]
    fn rk4_backward_march_consistent() {
        // Seeding mid-grid must agree with seeding at the corner.
        let grid = GridSpec::cube(17, 0.0, 1.0).unwrap();
        let matrix = |axis: usize, node: [usize; 3]| -> [[f64; 1]; 1] {
            [[grid.coord(node)[axis]]]
        };
        let a = integrate_linear(grid, [0, 0, 0], [1.0], &matrix, &mut |_| {}, [0, 1, 2]).unwrap();
        let mid = grid.center_node();
        let seed = a[grid.idx(mid[0], mid[1], mid[2])];
        let b = integrate_linear(grid, mid, seed, &matrix, &mut |_| {}, [0, 1, 2]).unwrap();
        let mut worst = 0.0f64;
        for idx in 0..a.len() {
            worst = worst.max((a[idx][0] - b[idx][0]).abs());
        }
        // Both runs carry independent O(h⁴) truncation, so agreement is to
        // that order rather than machine precision.
        assert!(worst < 1e-8, "worst = {worst}");
    }

    #[test]
    fn dense_solve_and_singular_detection() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(a, vec![5.0, 10.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
        let singular = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_dense(singular, vec![1.0, 2.0]).is_none());
    }
}
