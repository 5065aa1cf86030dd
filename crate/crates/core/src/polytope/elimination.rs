//! Predecessor sets by Fourier–Motzkin elimination of the inputs, with LP
//! redundancy pruning after every eliminated variable.

use nalgebra::{DMatrix, DVector};

use super::lp_geom;
use super::redundancy::prune_redundant;
use super::{HPolytope, EPS_REDUNDANT};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Default cap on the number of rows produced by one elimination step.
pub const DEFAULT_ROW_CAP: usize = 20_000;

/// `{x : ∃u ∈ U, A x + B u ∈ Ω}`. The result may be unbounded.
pub fn predecessor(
    omega: &HPolytope,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    u: &HPolytope,
) -> Result<HPolytope> {
    predecessor_with(omega, a, b, u, DEFAULT_ROW_CAP, Exec::default())
}

pub fn predecessor_with(
    omega: &HPolytope,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    u: &HPolytope,
    row_cap: usize,
    exec: Exec,
) -> Result<HPolytope> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || omega.dim() != n || u.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "predecessor: A {}x{}, B {}x{}, Ω dim {}, U dim {}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            omega.dim(),
            u.dim()
        )));
    }

    // Lifted system in (x, u).
    let mo = omega.num_rows();
    let mu = u.num_rows();
    let mut rows = DMatrix::zeros(mo + mu, n + m);
    let mut rhs = DVector::zeros(mo + mu);
    rows.view_mut((0, 0), (mo, n)).copy_from(&(omega.f() * a));
    rows.view_mut((0, n), (mo, m)).copy_from(&(omega.f() * b));
    rhs.rows_mut(0, mo).copy_from(omega.g());
    rows.view_mut((mo, n), (mu, m)).copy_from(u.f());
    rhs.rows_mut(mo, mu).copy_from(u.g());

    let (mut rows, mut rhs) = normalize_rows(rows, rhs)?;
    let lifted = HPolytope::from_normalized(rows.clone(), rhs.clone());
    if lp_geom::is_empty(&lifted)? {
        return Err(Error::EmptyPolytope);
    }
    (rows, rhs) = prune_redundant(&rows, &rhs, EPS_REDUNDANT, exec)?;

    // Eliminate input coordinates, cheapest column first.
    let mut remaining: Vec<usize> = (n..n + m).collect();
    while !remaining.is_empty() {
        let cost = |c: usize| {
            let col = rows.column(c);
            let pos = col.iter().filter(|&&v| v > ZERO).count();
            let neg = col.iter().filter(|&&v| v < -ZERO).count();
            pos * neg + (col.len() - pos - neg)
        };
        let (k, &col) = remaining
            .iter()
            .enumerate()
            .min_by_key(|&(_, &c)| cost(c))
            .expect("nonempty");
        let (r, h) = eliminate_column(&rows, &rhs, col, row_cap)?;
        let (r, h) = normalize_rows(r, h)?;
        remaining.remove(k);
        for c in remaining.iter_mut() {
            if *c > col {
                *c -= 1;
            }
        }
        (rows, rhs) = prune_redundant(&r, &h, EPS_REDUNDANT, exec)?;
    }
    debug_assert_eq!(rows.ncols(), n);
    Ok(HPolytope::from_normalized(rows, rhs).canonical())
}

const ZERO: f64 = 1e-12;

fn eliminate_column(
    rows: &DMatrix<f64>,
    rhs: &DVector<f64>,
    col: usize,
    cap: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (mr, nc) = rows.shape();
    let (mut pos, mut neg, mut zero) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..mr {
        let v = rows[(i, col)];
        if v > ZERO {
            pos.push(i);
        } else if v < -ZERO {
            neg.push(i);
        } else {
            zero.push(i);
        }
    }
    let count = zero.len() + pos.len() * neg.len();
    if count > cap {
        return Err(Error::EliminationBlowup { cap });
    }
    let keep_cols: Vec<usize> = (0..nc).filter(|&c| c != col).collect();
    let mut out = DMatrix::zeros(count, nc - 1);
    let mut h = DVector::zeros(count);
    let mut k = 0;
    for &i in &zero {
        for (jj, &j) in keep_cols.iter().enumerate() {
            out[(k, jj)] = rows[(i, j)];
        }
        h[k] = rhs[i];
        k += 1;
    }
    for &p in &pos {
        let ap = rows[(p, col)];
        for &q in &neg {
            let aq = -rows[(q, col)];
            for (jj, &j) in keep_cols.iter().enumerate() {
                out[(k, jj)] = aq * rows[(p, j)] + ap * rows[(q, j)];
            }
            h[k] = aq * rhs[p] + ap * rhs[q];
            k += 1;
        }
    }
    Ok((out, h))
}

/// Unit-normalizes rows; drops rows that reduce to `0 <= h` with `h >= 0`.
fn normalize_rows(rows: DMatrix<f64>, rhs: DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut keep = Vec::with_capacity(rows.nrows());
    let mut scale = Vec::with_capacity(rows.nrows());
    for i in 0..rows.nrows() {
        let nrm = rows.row(i).norm();
        if nrm < 1e-12 {
            if rhs[i] < -1e-9 {
                return Err(Error::EmptyPolytope);
            }
            continue;
        }
        keep.push(i);
        scale.push(1.0 / nrm);
    }
    let mut r = rows.select_rows(&keep);
    let mut h = rhs.select_rows(&keep);
    for (k, s) in scale.into_iter().enumerate() {
        r.row_mut(k).scale_mut(s);
        h[k] *= s;
    }
    Ok((r, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{is_subset, EPS_SET};

    #[test]
    fn identity_dynamics_without_input() {
        let omega = HPolytope::from_box(&[1.0, 2.0]).unwrap();
        let u = HPolytope::from_box(&[1.0]).unwrap();
        let pre = predecessor(&omega, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 1), &u).unwrap();
        assert!(is_subset(&pre, &omega, EPS_SET).unwrap());
        assert!(is_subset(&omega, &pre, EPS_SET).unwrap());
    }

    #[test]
    fn zero_dynamics_give_whole_space() {
        let omega = HPolytope::from_box(&[1.0, 1.0]).unwrap();
        let u = HPolytope::from_box(&[1.0]).unwrap();
        let b = DMatrix::from_column_slice(2, 1, &[0.3, 1.0]);
        let pre = predecessor(&omega, &DMatrix::zeros(2, 2), &b, &u).unwrap();
        assert_eq!(pre.num_rows(), 0);
        assert_eq!(pre.dim(), 2);
    }

    #[test]
    fn double_integrator_one_step() {
        // x+ = [[1,1],[0,1]] x + [0;1] u, |u| <= 1, Ω = unit box.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let omega = HPolytope::from_box(&[1.0, 1.0]).unwrap();
        let u = HPolytope::from_box(&[1.0]).unwrap();
        let pre = predecessor(&omega, &a, &b, &u).unwrap();
        // Membership agrees with the existential LP on a grid.
        for i in -20..=20 {
            for j in -20..=20 {
                let x = DVector::from_column_slice(&[i as f64 * 0.15, j as f64 * 0.15]);
                let exists = (x[0] + x[1]).abs() <= 1.0 && x[1].abs() <= 2.0;
                let inside = pre.margin(&x);
                if inside.abs() > 1e-9 {
                    assert_eq!(inside > 0.0, exists, "x = {x:?}");
                }
            }
        }
    }
}
