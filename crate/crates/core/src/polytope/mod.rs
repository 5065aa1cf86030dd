//! Polyhedral geometry in floating point: half-space and vertex
//! representations, support functions, redundancy removal, predecessor sets,
//! vertex/facet enumeration, boundary triangulation and volume estimates.
//!
//! Conventions:
//! - H-rep rows are unit-norm, `F x <= g`.
//! - Outputs are canonically ordered (rows and vertices sorted
//!   lexicographically) so results are reproducible run to run.

mod elimination;
mod lp_geom;
mod redundancy;
mod triangulation;
mod vertex_enum;
mod volume;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg;

pub use elimination::{predecessor, predecessor_with, DEFAULT_ROW_CAP};
pub use lp_geom::{chebyshev_radius, support, Support};
pub use redundancy::{normalize_hrep, normalize_hrep_with};
pub use triangulation::{boundary_triangulation, Simplex, SimplicialFan};
pub use vertex_enum::{hull, vertices, vertices_with};
pub use volume::{bounding_box, volume_estimate, volume_estimate_with};

/// Set-equality tolerance on support-function gaps.
pub const EPS_SET: f64 = 1e-7;
/// Vertex deduplication tolerance (absolute, ∞-norm).
pub const EPS_VERT: f64 = 1e-8;
/// Default redundancy tolerance used by normalization.
pub const EPS_REDUNDANT: f64 = 1e-9;

/// `{x : F x <= g}` with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    f: DMatrix<f64>,
    g: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct HPolytopeJson {
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl Serialize for HPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HPolytopeJson {
            f: linalg::to_rows(&self.f),
            g: self.g.as_slice().to_vec(),
            dim: (self.f.nrows() == 0).then_some(self.dim()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = HPolytopeJson::deserialize(d)?;
        let f = linalg::from_rows(&j.f).map_err(D::Error::custom)?;
        let f = if j.f.is_empty() {
            DMatrix::zeros(0, j.dim.unwrap_or(0))
        } else {
            f
        };
        HPolytope::new(f, DVector::from_vec(j.g)).map_err(D::Error::custom)
    }
}

impl HPolytope {
    /// Normalizes every row to unit norm. Rows with norm below `1e-12` are rejected.
    pub fn new(f: DMatrix<f64>, g: DVector<f64>) -> Result<Self> {
        if f.nrows() != g.len() {
            return Err(Error::DimensionMismatch(format!(
                "F has {} rows but g has {} entries",
                f.nrows(),
                g.len()
            )));
        }
        if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite polytope data".into()));
        }
        let mut f = f;
        let mut g = g;
        for i in 0..f.nrows() {
            let nrm = f.row(i).norm();
            if nrm < 1e-12 {
                return Err(Error::InvalidInput(format!("row {i} of F has (near) zero norm")));
            }
            f.row_mut(i).scale_mut(1.0 / nrm);
            g[i] /= nrm;
        }
        Ok(HPolytope { f, g })
    }

    /// The whole space `ℝⁿ` (no rows).
    pub fn universe(dim: usize) -> Self {
        HPolytope {
            f: DMatrix::zeros(0, dim),
            g: DVector::zeros(0),
        }
    }

    /// `{x : |x_i| <= h_i}`.
    pub fn from_box(half_widths: &[f64]) -> Result<Self> {
        let n = half_widths.len();
        if half_widths.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidInput("box half-widths must be positive".into()));
        }
        let mut f = DMatrix::zeros(2 * n, n);
        let mut g = DVector::zeros(2 * n);
        for (i, &h) in half_widths.iter().enumerate() {
            f[(2 * i, i)] = 1.0;
            f[(2 * i + 1, i)] = -1.0;
            g[2 * i] = h;
            g[2 * i + 1] = h;
        }
        Ok(HPolytope { f, g }.canonical())
    }

    pub(crate) fn from_normalized(f: DMatrix<f64>, g: DVector<f64>) -> Self {
        HPolytope { f, g }
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.f.nrows()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.f.row(i).transpose()
    }

    /// `min_i (g_i - F_i x)`; nonnegative iff `x` is in the set.
    pub fn margin(&self, x: &DVector<f64>) -> f64 {
        (&self.g - &self.f * x).iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.margin(x) >= -tol
    }

    /// Origin strictly inside: every offset is positive.
    pub fn is_cset(&self) -> bool {
        self.g.iter().all(|&v| v > 0.0)
    }

    /// Rows sorted lexicographically by `(F_i, g_i)`.
    pub fn canonical(self) -> Self {
        let m = self.f.nrows();
        let mut order: Vec<usize> = (0..m).collect();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut r: Vec<f64> = self.f.row(i).iter().copied().collect();
                r.push(self.g[i]);
                r
            })
            .collect();
        order.sort_by(|&a, &b| linalg::lex_cmp(&rows[a], &rows[b]));
        HPolytope {
            f: self.f.select_rows(&order),
            g: self.g.select_rows(&order),
        }
    }

    /// Stack the rows of two polytopes (no normalization).
    pub fn stack(&self, other: &HPolytope) -> Result<HPolytope> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let n = self.dim();
        let m = self.num_rows() + other.num_rows();
        let mut f = DMatrix::zeros(m, n);
        f.rows_mut(0, self.num_rows()).copy_from(&self.f);
        f.rows_mut(self.num_rows(), other.num_rows()).copy_from(&other.f);
        let mut g = DVector::zeros(m);
        g.rows_mut(0, self.num_rows()).copy_from(&self.g);
        g.rows_mut(self.num_rows(), other.num_rows()).copy_from(&other.g);
        Ok(HPolytope { f, g })
    }

    /// Preimage under a linear map: `{x : F (M x) <= g}`.
    pub fn preimage(&self, m: &DMatrix<f64>) -> Result<HPolytope> {
        if m.nrows() != self.dim() {
            return Err(Error::DimensionMismatch("preimage map has wrong row count".into()));
        }
        let fm = &self.f * m;
        let mut keep = Vec::new();
        for i in 0..fm.nrows() {
            if fm.row(i).norm() >= 1e-12 {
                keep.push(i);
            } else if self.g[i] < 0.0 {
                return Err(Error::EmptyPolytope);
            }
        }
        HPolytope::new(fm.select_rows(&keep), self.g.select_rows(&keep))
    }
}

/// Finite set of points; after `vertices()` every point is an extreme point.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    vertices: Vec<DVector<f64>>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct VPolytopeJson {
    vertices: Vec<Vec<f64>>,
}

impl Serialize for VPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VPolytopeJson {
            vertices: self.vertices.iter().map(|v| v.as_slice().to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for VPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = VPolytopeJson::deserialize(d)?;
        VPolytope::new(j.vertices.into_iter().map(DVector::from_vec).collect())
            .map_err(D::Error::custom)
    }
}

impl VPolytope {
    /// Deduplicates at [`EPS_VERT`] and sorts lexicographically.
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch("points of unequal dimension".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite vertex".into()));
        }
        Ok(VPolytope {
            vertices: dedup_points(points, EPS_VERT),
            dim,
        })
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One vertex per line, comma-separated coordinates.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let line: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Sorts lexicographically and merges points closer than `tol` in ∞-norm.
pub(crate) fn dedup_points(mut pts: Vec<DVector<f64>>, tol: f64) -> Vec<DVector<f64>> {
    pts.sort_by(|a, b| linalg::lex_cmp(a.as_slice(), b.as_slice()));
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        // Near-duplicates can be separated in lexicographic order only through
        // the first coordinate, so scan back while it is within tolerance.
        let dup = out
            .iter()
            .rev()
            .take_while(|q| (q[0] - p[0]).abs() <= tol)
            .any(|q| (q - &p).amax() <= tol);
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Stacks the rows of both polytopes and normalizes.
pub fn intersect(p1: &HPolytope, p2: &HPolytope) -> Result<HPolytope> {
    normalize_hrep(&p1.stack(p2)?, EPS_REDUNDANT)
}

/// `λ P = {x : F x <= λ g}` for a C-set `P`.
pub fn scale(p: &HPolytope, lambda: f64) -> Result<HPolytope> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidInput(format!("scale factor {lambda} not in (0, 1]")));
    }
    if !p.is_cset() {
        return Err(Error::NotCset);
    }
    Ok(HPolytope {
        f: p.f.clone(),
        g: &p.g * lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetReport {
    /// `max_i (h_{P1}(F2_i) - g2_i)`; `+∞` if some support is unbounded.
    pub max_gap: f64,
    /// `P1` is empty; the inclusion then holds vacuously.
    pub lhs_empty: bool,
}

impl SubsetReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs_empty || self.max_gap <= tol
    }
}

/// Support-function gaps of `p1` against every row of `p2`.
pub fn subset_report(p1: &HPolytope, p2: &HPolytope, exec: Exec) -> Result<SubsetReport> {
    if p1.dim() != p2.dim() {
        return Err(Error::DimensionMismatch("is_subset operands differ in dimension".into()));
    }
    if lp_geom::is_empty(p1)? {
        return Ok(SubsetReport {
            max_gap: f64::NEG_INFINITY,
            lhs_empty: true,
        });
    }
    let gaps = exec.try_map_indexed(p2.num_rows(), |i| -> Result<f64> {
        Ok(match support(p1, &p2.row(i))? {
            Support::Bounded(v) => v - p2.g[i],
            Support::Unbounded => f64::INFINITY,
            Support::Empty => f64::NEG_INFINITY,
        })
    })?;
    Ok(SubsetReport {
        max_gap: gaps.into_iter().fold(f64::NEG_INFINITY, f64::max),
        lhs_empty: false,
    })
}

/// `P1 ⊆ P2` up to `tol` on support gaps (one LP per row of `P2`).
/// An empty `P1` is a subset of anything.
pub fn is_subset(p1: &HPolytope, p2: &HPolytope, tol: f64) -> Result<bool> {
    Ok(subset_report(p1, p2, Exec::default())?.holds(tol))
}

/// Mutual inclusion at [`EPS_SET`].
pub fn set_equal(p1: &HPolytope, p2: &HPolytope, tol: f64) -> Result<bool> {
    Ok(is_subset(p1, p2, tol)? && is_subset(p2, p1, tol)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn rows_are_normalized() {
        let p = HPolytope::new(DMatrix::from_row_slice(1, 2, &[3.0, 4.0]), dv(&[10.0])).unwrap();
        assert!((p.f().row(0).norm() - 1.0).abs() < 1e-15);
        assert!((p.g()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_row_rejected() {
        assert!(HPolytope::new(DMatrix::zeros(1, 2), dv(&[1.0])).is_err());
    }

    #[test]
    fn scale_unit_box() {
        let b = HPolytope::from_box(&[1.0, 1.0]).unwrap();
        let h = scale(&b, 0.5).unwrap();
        assert_eq!(h, HPolytope::from_box(&[0.5, 0.5]).unwrap());
        assert_eq!(scale(&b, 1.0).unwrap(), b);
        assert!(scale(&b, 0.0).is_err());
    }

    #[test]
    fn scale_requires_cset() {
        let p = HPolytope::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), dv(&[1.0, 0.0])).unwrap();
        assert!(matches!(scale(&p, 0.5), Err(Error::NotCset)));
    }

    #[test]
    fn box_subsets() {
        let b1 = HPolytope::from_box(&[1.0, 1.0]).unwrap();
        let b2 = HPolytope::from_box(&[2.0, 2.0]).unwrap();
        assert!(is_subset(&b1, &b2, 1e-9).unwrap());
        assert!(!is_subset(&b2, &b1, 1e-9).unwrap());
    }

    #[test]
    fn empty_lhs_is_subset_with_flag() {
        let empty = HPolytope::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), dv(&[-1.0, -1.0])).unwrap();
        let b = HPolytope::from_box(&[1.0]).unwrap();
        let r = subset_report(&empty, &b, Exec::Sequential).unwrap();
        assert!(r.lhs_empty && r.holds(0.0));
    }

    #[test]
    fn nested_box_intersection() {
        let b8 = HPolytope::from_box(&[8.0, 8.0]).unwrap();
        let b5 = HPolytope::from_box(&[5.0, 5.0]).unwrap();
        assert_eq!(intersect(&b8, &b5).unwrap(), b5);
        assert_eq!(intersect(&b5, &b5).unwrap(), b5);
    }

    #[test]
    fn json_shape() {
        let b = HPolytope::from_box(&[1.0]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"F":[[-1.0],[1.0]],"g":[1.0,1.0]}"#);
        let back: HPolytope = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        let v = VPolytope::new(vec![dv(&[1.0, 2.0]), dv(&[0.0, 1.0])]).unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"vertices":[[0.0,1.0],[1.0,2.0]]}"#);
        assert_eq!(v.to_csv(), "0,1\n1,2\n");
    }

    #[test]
    fn dedup_merges_close_points() {
        let pts = vec![dv(&[1.0, 1.0]), dv(&[1.0 + 1e-10, 1.0]), dv(&[0.0, 0.0])];
        assert_eq!(dedup_points(pts, EPS_VERT).len(), 2);
    }
}
