//! Vertex enumeration and the inverse hull operation.

use nalgebra::{DMatrix, DVector};

use super::lp_geom::{chebyshev_radius, support, Support};
use super::redundancy::normalize_hrep;
use super::{dedup_points, HPolytope, VPolytope, EPS_REDUNDANT, EPS_VERT};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// All extreme points of a bounded, full-dimensional polytope.
pub fn vertices(p: &HPolytope) -> Result<VPolytope> {
    vertices_with(p, Exec::default())
}

pub fn vertices_with(p: &HPolytope, exec: Exec) -> Result<VPolytope> {
    let n = p.dim();
    let r = chebyshev_radius(p)?;
    if r < -1e-9 {
        return Err(Error::EmptyPolytope);
    }
    if r.is_infinite() {
        return Err(Error::UnboundedPolytope);
    }
    if r <= 1e-9 {
        return Err(Error::DegeneratePolytope);
    }
    check_bounded(p)?;
    let p = normalize_hrep(p, EPS_REDUNDANT)?;
    let pts = match n {
        1 => {
            let e = DVector::from_element(1, 1.0);
            let hi = support(&p, &e)?.value()?;
            let lo = -support(&p, &(-e))?.value()?;
            vec![DVector::from_element(1, lo), DVector::from_element(1, hi)]
        }
        2 => planar(&p).map_or_else(|| combinatorial(&p, exec), Ok)?,
        _ => combinatorial(&p, exec)?,
    };
    VPolytope::new(pts)
}

fn check_bounded(p: &HPolytope) -> Result<()> {
    let n = p.dim();
    for j in 0..n {
        for s in [1.0, -1.0] {
            let mut c = DVector::zeros(n);
            c[j] = s;
            if matches!(support(p, &c)?, Support::Unbounded) {
                return Err(Error::UnboundedPolytope);
            }
        }
    }
    Ok(())
}

fn feas_tol(p: &HPolytope) -> f64 {
    1e-9 * (1.0 + p.g().amax())
}

/// Consecutive facet intersections after sorting normals by angle.
/// Returns `None` if any intersection is singular or infeasible.
fn planar(p: &HPolytope) -> Option<Vec<DVector<f64>>> {
    let m = p.num_rows();
    if m < 3 {
        return None;
    }
    let mut order: Vec<usize> = (0..m).collect();
    let angle = |i: usize| p.f()[(i, 1)].atan2(p.f()[(i, 0)]);
    order.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
    let tol = feas_tol(p);
    let mut pts = Vec::with_capacity(m);
    for k in 0..m {
        let (i, j) = (order[k], order[(k + 1) % m]);
        let x = intersect_rows(p, &[i, j])?;
        if p.margin(&x) < -tol {
            return None;
        }
        pts.push(x);
    }
    Some(dedup_points(pts, EPS_VERT))
}

fn intersect_rows(p: &HPolytope, rows: &[usize]) -> Option<DVector<f64>> {
    let a = p.f().select_rows(rows);
    let b = p.g().select_rows(rows);
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return None;
    }
    a.lu().solve(&b)
}

/// Every n-subset of facets whose intersection point is feasible. A feasible
/// point that is the unique solution of n independent active constraints is
/// an extreme point, so no further certification is needed.
fn combinatorial(p: &HPolytope, exec: Exec) -> Result<Vec<DVector<f64>>> {
    let n = p.dim();
    let m = p.num_rows();
    if m < n + 1 {
        return Err(Error::UnboundedPolytope);
    }
    let tol = feas_tol(p);
    let per_first = exec.map_indexed(m, |first| {
        let mut found = Vec::new();
        let mut idx: Vec<usize> = (first..first + n).collect();
        if idx[n - 1] >= m {
            return found;
        }
        loop {
            if let Some(x) = intersect_rows(p, &idx) {
                if p.margin(&x) >= -tol {
                    found.push(x);
                }
            }
            // Advance the tail (positions 1..n), keeping idx[0] = first.
            let mut k = n - 1;
            loop {
                if k == 0 {
                    return found;
                }
                if idx[k] < m - (n - k) {
                    idx[k] += 1;
                    for t in k + 1..n {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
                k -= 1;
            }
        }
    });
    let all: Vec<DVector<f64>> = per_first.into_iter().flatten().collect();
    Ok(dedup_points(all, EPS_VERT))
}

/// H-representation of `conv(V)`, computed through the polar set. The origin
/// must lie strictly inside the hull.
pub fn hull(v: &VPolytope) -> Result<HPolytope> {
    let n = v.dim();
    if v.len() <= n {
        return Err(Error::OriginNotInterior);
    }
    let mut f = DMatrix::zeros(v.len(), n);
    for (i, p) in v.vertices().iter().enumerate() {
        f.row_mut(i).copy_from(&p.transpose());
    }
    let polar = match HPolytope::new(f, DVector::from_element(v.len(), 1.0)) {
        Ok(p) => p,
        // A zero vertex puts the origin on the boundary.
        Err(Error::InvalidInput(_)) => return Err(Error::OriginNotInterior),
        Err(e) => return Err(e),
    };
    let facets = match vertices(&polar) {
        Ok(p) => p,
        Err(Error::UnboundedPolytope | Error::DegeneratePolytope) => {
            return Err(Error::OriginNotInterior)
        }
        Err(e) => return Err(e),
    };
    let mut a = DMatrix::zeros(facets.len(), n);
    for (i, p) in facets.vertices().iter().enumerate() {
        a.row_mut(i).copy_from(&p.transpose());
    }
    let h = HPolytope::new(a, DVector::from_element(facets.len(), 1.0))?;
    normalize_hrep(&h, EPS_REDUNDANT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{set_equal, EPS_SET};

    fn poly(rows: &[&[f64]], g: &[f64]) -> HPolytope {
        let n = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        HPolytope::new(DMatrix::from_row_slice(rows.len(), n, &flat), DVector::from_column_slice(g)).unwrap()
    }

    #[test]
    fn square_vertices() {
        let v = vertices(&HPolytope::from_box(&[8.0, 8.0]).unwrap()).unwrap();
        assert_eq!(v.len(), 4);
        for p in v.vertices() {
            assert!((p[0].abs() - 8.0).abs() < 1e-12 && (p[1].abs() - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cube_vertices_and_hull_roundtrip() {
        let c = HPolytope::from_box(&[1.0, 2.0, 3.0]).unwrap();
        let v = vertices(&c).unwrap();
        assert_eq!(v.len(), 8);
        let h = hull(&v).unwrap();
        assert_eq!(h.num_rows(), 6);
        assert!(set_equal(&h, &c, EPS_SET).unwrap());
    }

    #[test]
    fn octahedron_has_degenerate_vertices() {
        // |x|+|y|+|z| <= 1: four facets meet at each vertex.
        let mut rows = Vec::new();
        for s in 0..8 {
            let r: Vec<f64> = (0..3).map(|k| if s >> k & 1 == 1 { -1.0 } else { 1.0 }).collect();
            rows.push(r);
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let p = poly(&refs, &[1.0; 8]);
        let v = vertices(&p).unwrap();
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn rejects_unbounded_and_flat() {
        let half = poly(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]], &[1.0, 1.0, 1.0]);
        assert!(matches!(vertices(&half), Err(Error::UnboundedPolytope)));
        let flat = poly(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]], &[0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(vertices(&flat), Err(Error::DegeneratePolytope)));
    }

    #[test]
    fn hull_requires_interior_origin() {
        let v = VPolytope::new(vec![
            DVector::from_column_slice(&[1.0, 1.0]),
            DVector::from_column_slice(&[2.0, 1.0]),
            DVector::from_column_slice(&[1.0, 2.0]),
        ])
        .unwrap();
        assert!(matches!(hull(&v), Err(Error::OriginNotInterior)));
    }

    #[test]
    fn hull_drops_interior_points() {
        let v = VPolytope::new(vec![
            DVector::from_column_slice(&[1.0, 0.0]),
            DVector::from_column_slice(&[0.0, 1.0]),
            DVector::from_column_slice(&[-1.0, 0.0]),
            DVector::from_column_slice(&[0.0, -1.0]),
            DVector::from_column_slice(&[0.1, 0.2]),
        ])
        .unwrap();
        let h = hull(&v).unwrap();
        assert_eq!(h.num_rows(), 4);
    }
}
