//! Boundary triangulation of a C-set: one simplex per boundary facet piece,
//! each with the origin as apex.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::vertex_enum::hull;
use super::VPolytope;
use crate::error::{Error, Result};
use crate::linalg::{self, serde_mat};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Simplex {
    /// Indices into the parent's vertex list, increasing.
    pub index_set: Vec<usize>,
    /// Non-zero vertices as columns, in `index_set` order.
    #[serde(rename = "V", with = "serde_mat")]
    pub v: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimplicialFan {
    pub parent: VPolytope,
    pub simplices: Vec<Simplex>,
}

impl SimplicialFan {
    pub fn dim(&self) -> usize {
        self.parent.dim()
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }
}

/// Pulling triangulation of the boundary of `conv(V)`, coned to the origin.
/// Each face is split from its lowest-index vertex, so neighbouring facets
/// agree on their shared faces.
pub fn boundary_triangulation(v: &VPolytope) -> Result<SimplicialFan> {
    let n = v.dim();
    let h = hull(v)?;
    let pts = v.vertices();
    let scale = 1.0 + h.g().amax();
    let tol = 1e-7 * scale;

    let incidence: Vec<BTreeSet<usize>> = (0..h.num_rows())
        .map(|i| {
            let fi = h.f().row(i);
            (0..pts.len())
                .filter(|&j| (fi.dot(&pts[j].transpose()) - h.g()[i]).abs() <= tol)
                .collect()
        })
        .collect();

    let mut cells: BTreeSet<Vec<usize>> = BTreeSet::new();
    for face in &incidence {
        if affine_dim(pts, face) != n - 1 {
            return Err(Error::numerical("triangulation", "facet incidence has wrong dimension"));
        }
        for s in pull(pts, face, n - 1, &incidence) {
            cells.insert(s);
        }
    }

    let mut simplices = Vec::with_capacity(cells.len());
    for index_set in cells {
        let mut m = DMatrix::zeros(n, n);
        for (k, &i) in index_set.iter().enumerate() {
            m.set_column(k, &pts[i]);
        }
        if linalg::rank(&m, 1e-10) < n {
            return Err(Error::numerical("triangulation", "flat simplex"));
        }
        simplices.push(Simplex { index_set, v: m });
    }
    Ok(SimplicialFan { parent: v.clone(), simplices })
}

/// Triangulates a `d`-face given by its vertex set. Returns sorted index sets.
fn pull(
    pts: &[nalgebra::DVector<f64>],
    face: &BTreeSet<usize>,
    d: usize,
    facets: &[BTreeSet<usize>],
) -> Vec<Vec<usize>> {
    if face.len() == d + 1 {
        return vec![face.iter().copied().collect()];
    }
    let apex = *face.iter().next().expect("nonempty face");
    let mut subfaces: BTreeSet<Vec<usize>> = BTreeSet::new();
    for f in facets {
        let sub: BTreeSet<usize> = face.intersection(f).copied().collect();
        if sub.len() >= d && !sub.contains(&apex) && sub.len() < face.len() && affine_dim(pts, &sub) + 1 == d {
            subfaces.insert(sub.into_iter().collect());
        }
    }
    let mut out = Vec::new();
    for sub in subfaces {
        let sub: BTreeSet<usize> = sub.into_iter().collect();
        for mut s in pull(pts, &sub, d - 1, facets) {
            s.push(apex);
            s.sort_unstable();
            out.push(s);
        }
    }
    out
}

fn affine_dim(pts: &[nalgebra::DVector<f64>], set: &BTreeSet<usize>) -> usize {
    let idx: Vec<usize> = set.iter().copied().collect();
    if idx.len() <= 1 {
        return 0;
    }
    let n = pts[0].len();
    let mut m = DMatrix::zeros(n, idx.len() - 1);
    for (k, &i) in idx[1..].iter().enumerate() {
        m.set_column(k, &(&pts[i] - &pts[idx[0]]));
    }
    linalg::rank(&m, 1e-9)
}
