//! Exact solver for strictly convex QPs with a handful of inequality rows.
//!
//! ```text
//! min (u − u_ref)ᵀ P (u − u_ref)   s.t.   aᵢ·u ≥ bᵢ
//! ```
//!
//! Every subset of rows is tried as the active set, smallest first. For an
//! active set `S` the KKT system gives
//! `u = u_ref + P⁻¹ A_Sᵀ G⁻¹ (b_S − A_S u_ref)` with `G = A_S P⁻¹ A_Sᵀ`, and
//! multipliers `μ_S = 2 G⁻¹ (b_S − A_S u_ref)`. The first candidate that is
//! primal feasible with nonnegative multipliers is the optimum.

use nalgebra::{SMatrix, SVector};

pub(crate) const MAX_ROWS: usize = 3;

/// Relative pivot size below which an active set is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Solution<const N: usize> {
    pub u: SVector<f64, N>,
    pub multipliers: [f64; MAX_ROWS],
    pub active: [bool; MAX_ROWS],
}

/// Solve with `p_inv = P⁻¹`. Returns `None` when no active set is feasible.
pub(crate) fn solve_enumerated<const N: usize>(
    p_inv: &SMatrix<f64, N, N>,
    u_ref: &SVector<f64, N>,
    rows: &[SVector<f64, N>],
    b: &[f64],
) -> Option<Solution<N>> {
    let m = rows.len();
    assert!(m <= MAX_ROWS && b.len() == m);

    let scaled: [SVector<f64, N>; MAX_ROWS] = std::array::from_fn(|i| {
        if i < m {
            p_inv * rows[i]
        } else {
            SVector::zeros()
        }
    });
    let feas_tol = |i: usize| 1e-9 * (1.0 + b[i].abs() + rows[i].norm() * u_ref.norm());

    for size in 0..=m {
        for mask in (0u32..(1 << m)).filter(|s| s.count_ones() as usize == size) {
            let mut idx = [0usize; MAX_ROWS];
            let mut k = 0;
            for i in 0..m {
                if mask & (1 << i) != 0 {
                    idx[k] = i;
                    k += 1;
                }
            }
            let idx = &idx[..k];
            let Some((u, y)) = active_point(u_ref, rows, b, &scaled, idx) else {
                continue;
            };
            if y[..k].iter().any(|v| *v < -1e-12 * (1.0 + v.abs())) {
                continue;
            }
            let feasible = (0..m).all(|i| rows[i].dot(&u) >= b[i] - feas_tol(i));
            if !feasible {
                continue;
            }
            let mut multipliers = [0.0; MAX_ROWS];
            let mut active = [false; MAX_ROWS];
            for (r, &i) in idx.iter().enumerate() {
                multipliers[i] = (2.0 * y[r]).max(0.0);
                active[i] = true;
            }
            return Some(Solution {
                u,
                multipliers,
                active,
            });
        }
    }
    None
}

/// KKT point with the rows in `idx` held at equality. Two rounds of iterative
/// refinement drive the active-row residuals to rounding level, which matters
/// when the multipliers are large.
fn active_point<const N: usize>(
    u_ref: &SVector<f64, N>,
    rows: &[SVector<f64, N>],
    b: &[f64],
    scaled: &[SVector<f64, N>; MAX_ROWS],
    idx: &[usize],
) -> Option<(SVector<f64, N>, [f64; MAX_ROWS])> {
    let k = idx.len();
    let mut u = *u_ref;
    let mut y = [0.0; MAX_ROWS];
    for _ in 0..3 {
        let mut gram = [[0.0; MAX_ROWS]; MAX_ROWS];
        let mut rhs = [0.0; MAX_ROWS];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                gram[r][c] = rows[i].dot(&scaled[j]);
            }
            rhs[r] = b[i] - rows[i].dot(&u);
        }
        let dy = solve_dense(&mut gram, &mut rhs, k)?;
        for (r, &i) in idx.iter().enumerate() {
            u += scaled[i] * dy[r];
            y[r] += dy[r];
        }
    }
    Some((u, y))
}

/// Solve the leading `k × k` Gram system after scaling it to a unit
/// diagonal, so the pivots measure how far the rows are from linear dependence
/// (for two rows the second pivot is sin² of the angle between them).
fn solve_dense(
    a: &mut [[f64; MAX_ROWS]; MAX_ROWS],
    rhs: &mut [f64; MAX_ROWS],
    k: usize,
) -> Option<[f64; MAX_ROWS]> {
    let mut scale = [1.0; MAX_ROWS];
    for i in 0..k {
        if !(a[i][i] > 0.0) {
            return None;
        }
        scale[i] = 1.0 / a[i][i].sqrt();
    }
    for r in 0..k {
        for c in 0..k {
            a[r][c] *= scale[r] * scale[c];
        }
        rhs[r] *= scale[r];
    }
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        if a[col][col].abs() <= RANK_TOL {
            return None;
        }
        for r in (col + 1)..k {
            let f = a[r][col] / a[col][col];
            for c in col..k {
                a[r][c] -= f * a[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = [0.0; MAX_ROWS];
    for r in (0..k).rev() {
        let mut acc = rhs[r];
        for c in (r + 1)..k {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    for r in 0..k {
        x[r] *= scale[r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    #[test]
    fn interior_reference_is_returned() {
        let sol = solve_enumerated(
            &Matrix4::identity(),
            &Vector4::new(1.0, 2.0, 3.0, 4.0),
            &[Vector4::new(1.0, 0.0, 0.0, 0.0)],
            &[0.0],
        )
        .unwrap();
        assert_eq!(sol.u, Vector4::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!(sol.active, [false; 3]);
    }

    #[test]
    fn opposing_rows_are_infeasible() {
        let rows = [
            Vector4::new(0.0, 0.0, 0.0, -1.0),
            Vector4::new(0.0, 0.0, 0.0, 1.0),
        ];
        assert!(
            solve_enumerated(&Matrix4::identity(), &Vector4::zeros(), &rows, &[1.0, 1.0]).is_none()
        );
    }

    #[test]
    fn both_rows_active() {
        let rows = [
            Vector4::new(1.0, 1.0, 0.0, 0.0),
            Vector4::new(1.0, -1.0, 0.0, 0.0),
        ];
        let sol =
            solve_enumerated(&Matrix4::identity(), &Vector4::zeros(), &rows, &[2.0, 2.0]).unwrap();
        assert!((sol.u - Vector4::new(2.0, 0.0, 0.0, 0.0)).norm() < 1e-14);
        assert_eq!(&sol.active[..2], &[true, true]);
        // stationarity 2(u − u_ref) = Aᵀ μ
        let grad = 2.0 * sol.u - rows[0] * sol.multipliers[0] - rows[1] * sol.multipliers[1];
        assert!(grad.norm() < 1e-12);
    }
}
