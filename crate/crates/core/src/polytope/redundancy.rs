use nalgebra::{DMatrix, DVector};

use super::lp_geom::{self, support_rows, Support};
use super::HPolytope;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Equivalent H-rep with unit rows, no redundant rows, canonical row order.
///
/// Row `i` is dropped when `max{F_i x : other rows} <= g_i + tol`. Sets that
/// are unbounded are accepted; rows whose support over the others is
/// unbounded are kept.
pub fn normalize_hrep(p: &HPolytope, tol: f64) -> Result<HPolytope> {
    normalize_hrep_with(p, tol, Exec::default())
}

pub fn normalize_hrep_with(p: &HPolytope, tol: f64, exec: Exec) -> Result<HPolytope> {
    if lp_geom::is_empty(p)? {
        return Err(Error::EmptyPolytope);
    }
    let (f, g) = prune_redundant(p.f(), p.g(), tol, exec)?;
    Ok(HPolytope::from_normalized(f, g).canonical())
}

/// Removes duplicate and redundant rows of `F x <= g` (rows must already be
/// unit norm). Assumes the set is nonempty.
pub(crate) fn prune_redundant(
    f: &DMatrix<f64>,
    g: &DVector<f64>,
    tol: f64,
    exec: Exec,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let unique = merge_parallel(f, g);
    let f = f.select_rows(&unique);
    let g = g.select_rows(&unique);
    let m = f.nrows();
    if m <= 1 {
        return Ok((f, g));
    }

    let redundant_given = |i: usize, fr: &DMatrix<f64>, gr: &DVector<f64>, skip: Option<usize>| -> Result<bool> {
        Ok(match support_rows(fr, gr, &f.row(i).transpose(), skip)? {
            Support::Bounded(v) => v <= g[i] + tol,
            Support::Unbounded => false,
            Support::Empty => true,
        })
    };

    // Pass 1: against all other rows. Rows that survive here are facets.
    let flagged = exec.try_map_indexed(m, |i| redundant_given(i, &f, &g, Some(i)))?;
    let kept: Vec<usize> = (0..m).filter(|&i| !flagged[i]).collect();
    let candidates: Vec<usize> = (0..m).filter(|&i| flagged[i]).collect();
    if candidates.is_empty() {
        return Ok((f, g));
    }

    // Pass 2: against the certain facets only; redundant here means redundant for good.
    let fk = f.select_rows(&kept);
    let gk = g.select_rows(&kept);
    let implied = exec.try_map_slice_result(&candidates, |&i| redundant_given(i, &fk, &gk, None))?;
    let mut undecided: Vec<usize> = candidates
        .iter()
        .zip(&implied)
        .filter(|(_, &r)| !r)
        .map(|(&i, _)| i)
        .collect();

    // Pass 3: sequential elimination among the remaining rows.
    let mut final_rows = kept.clone();
    while !undecided.is_empty() {
        let i = undecided.remove(0);
        let mut others: Vec<usize> = final_rows.clone();
        others.extend(undecided.iter().copied());
        let fo = f.select_rows(&others);
        let go = g.select_rows(&others);
        if !redundant_given(i, &fo, &go, None)? {
            final_rows.push(i);
        }
    }
    final_rows.sort_unstable();
    Ok((f.select_rows(&final_rows), g.select_rows(&final_rows)))
}

/// Indices of rows kept after merging (near-)identical normals, keeping the
/// smallest offset of each group.
fn merge_parallel(f: &DMatrix<f64>, g: &DVector<f64>) -> Vec<usize> {
    const TOL: f64 = 1e-10;
    let m = f.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        f[(a, 0)]
            .partial_cmp(&f[(b, 0)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(g[a].partial_cmp(&g[b]).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut removed = vec![false; m];
    for (pos, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        for &j in order[pos + 1..].iter() {
            if f[(j, 0)] - f[(i, 0)] > TOL {
                break;
            }
            if removed[j] {
                continue;
            }
            if (f.row(i) - f.row(j)).amax() <= TOL {
                if g[j] < g[i] {
                    removed[i] = true;
                    break;
                }
                removed[j] = true;
            }
        }
    }
    (0..m).filter(|&i| !removed[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(rows: &[&[f64]], g: &[f64]) -> HPolytope {
        let n = rows[0].len();
        let f = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        HPolytope::new(f, DVector::from_column_slice(g)).unwrap()
    }

    #[test]
    fn dominated_row_removed_1d() {
        let p = poly(&[&[1.0], &[1.0], &[-1.0]], &[1.0, 2.0, 1.0]);
        let q = normalize_hrep(&p, 1e-9).unwrap();
        assert_eq!(q, HPolytope::from_box(&[1.0]).unwrap());
    }

    #[test]
    fn duplicated_box_rows() {
        let b = HPolytope::from_box(&[1.0, 1.0]).unwrap();
        let doubled = b.stack(&b).unwrap();
        let q = normalize_hrep(&doubled, 1e-9).unwrap();
        assert_eq!(q.num_rows(), 4);
        assert_eq!(q, b);
    }

    #[test]
    fn near_parallel_pair_keeps_one() {
        let p = poly(
            &[&[1.0, 1e-9], &[1.0, -1e-9], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]],
            &[1.0, 1.0, 1.0, 1.0, 1.0],
        );
        let q = normalize_hrep(&p, 1e-7).unwrap();
        assert_eq!(q.num_rows(), 4);
    }

    #[test]
    fn weakly_redundant_corner_cut() {
        // x + y <= 2 touches the unit box only at (1, 1).
        let p = poly(
            &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0], &[1.0, 1.0]],
            &[1.0, 1.0, 1.0, 1.0, 2.0],
        );
        assert_eq!(normalize_hrep(&p, 1e-9).unwrap().num_rows(), 4);
    }

    #[test]
    fn unbounded_sets_are_kept() {
        let p = poly(&[&[1.0, 0.0], &[2.0, 0.0]], &[1.0, 4.0]);
        let q = normalize_hrep(&p, 1e-9).unwrap();
        assert_eq!(q.num_rows(), 1);
    }

    #[test]
    fn empty_rejected() {
        let p = poly(&[&[1.0], &[-1.0]], &[-1.0, 0.0]);
        assert!(matches!(normalize_hrep(&p, 1e-9), Err(Error::EmptyPolytope)));
    }

    #[test]
    fn idempotent_on_random_input() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|k| {
                let t = k as f64 * 0.7;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let g: Vec<f64> = (0..20).map(|k| 1.0 + 0.1 * (k % 3) as f64).collect();
        let p = poly(&refs, &g);
        let once = normalize_hrep(&p, 1e-9).unwrap();
        let twice = normalize_hrep(&once, 1e-9).unwrap();
        assert_eq!(once, twice);
    }
}
