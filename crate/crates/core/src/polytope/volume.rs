//! Monte Carlo volume estimates.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lp_geom::{support, Support};
use super::HPolytope;
use crate::error::{Error, Result};
use crate::exec::Exec;

const CHUNK: usize = 1 << 15;

/// Axis-aligned bounding box `(lo, hi)` from `2n` support LPs.
pub fn bounding_box(p: &HPolytope) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = p.dim();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        hi[j] = bounded(support(p, &e)?)?;
        lo[j] = -bounded(support(p, &(-e))?)?;
    }
    Ok((lo, hi))
}

fn bounded(s: Support) -> Result<f64> {
    match s {
        Support::Bounded(v) => Ok(v),
        Support::Unbounded => Err(Error::UnboundedPolytope),
        Support::Empty => Err(Error::EmptyPolytope),
    }
}

pub fn volume_estimate(p: &HPolytope, n_samples: usize, seed: u64) -> Result<f64> {
    volume_estimate_with(p, n_samples, seed, Exec::default())
}

/// Hit ratio over the bounding box times the box volume. Samples are drawn in
/// fixed-size chunks, each from its own ChaCha stream, so the result does not
/// depend on the execution mode.
pub fn volume_estimate_with(p: &HPolytope, n_samples: usize, seed: u64, exec: Exec) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("volume_estimate needs at least one sample".into()));
    }
    let (lo, hi) = bounding_box(p)?;
    let width = &hi - &lo;
    let box_vol: f64 = width.iter().product();
    if box_vol <= 0.0 {
        return Ok(0.0);
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let hits = exec.map_indexed(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let count = CHUNK.min(n_samples - c * CHUNK);
        let mut x = DVector::zeros(lo.len());
        let mut hits = 0usize;
        for _ in 0..count {
            for j in 0..x.len() {
                x[j] = lo[j] + width[j] * rng.random::<f64>();
            }
            if p.margin(&x) >= 0.0 {
                hits += 1;
            }
        }
        hits
    });
    let total: usize = hits.into_iter().sum();
    Ok(box_vol * total as f64 / n_samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::scale;

    #[test]
    fn unit_square() {
        let p = HPolytope::from_box(&[1.0, 1.0]).unwrap();
        let v = volume_estimate(&p, 1_000_000, 7).unwrap();
        assert!((v - 4.0).abs() < 0.02);
    }

    #[test]
    fn scaled_ratio_and_mode_independence() {
        let p = HPolytope::from_box(&[1.0, 1.0]).unwrap();
        let tri = HPolytope::new(
            nalgebra::DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
            DVector::from_column_slice(&[1.0, 1.0, 1.0]),
        )
        .unwrap();
        let a = volume_estimate_with(&tri, 200_000, 3, Exec::Sequential).unwrap();
        let b = volume_estimate_with(&tri, 200_000, 3, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let half = scale(&p, 0.5).unwrap();
        let r = volume_estimate(&half, 400_000, 1).unwrap() / volume_estimate(&p, 400_000, 1).unwrap();
        assert!((r - 0.25).abs() < 0.01);
    }

    #[test]
    fn unbounded_rejected() {
        let p = HPolytope::new(nalgebra::DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_element(1, 1.0)).unwrap();
        assert!(matches!(volume_estimate(&p, 10, 0), Err(Error::UnboundedPolytope)));
    }
}
