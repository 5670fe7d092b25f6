use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use super::packet::CylinderPacket;
use crate::error::{Error, Result};
use crate::geometry::GrPlane;

/// A point of the putative manifold with its tangent plane.
#[derive(Clone, Debug)]
pub struct MputPoint {
    pub point: DVector<f64>,
    pub tangent: GrPlane,
    /// `|Π_hi ∇G|` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    /// Ratio of the Hessian eigenvalues of rank `n − d` and `n − d + 1`.
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RejectedSeed {
    pub seed: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    /// `(seed index, point)` for every converged seed.
    pub points: Vec<(usize, MputPoint)>,
    pub rejected: Vec<RejectedSeed>,
}

/// Top `k` eigenpairs of a symmetric matrix, largest first, and the next eigenvalue.
fn top_eigen(h: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DVector<f64>, f64, DMatrix<f64>) {
    let n = h.nrows();
    let e = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    let cols: Vec<DVector<f64>> = order[..k].iter().map(|&j| e.eigenvectors.column(j).into_owned()).collect();
    let rest: Vec<DVector<f64>> = order[k..].iter().map(|&j| e.eigenvectors.column(j).into_owned()).collect();
    let vals = DVector::from_iterator(k, order[..k].iter().map(|&j| e.eigenvalues[j]));
    let next = order.get(k).map_or(0.0, |&j| e.eigenvalues[j]);
    (DMatrix::from_columns(&cols), vals, next, DMatrix::from_columns(&rest))
}

impl CylinderPacket {
    /// Newton iteration on `z ↦ Π_hi(z)∇G(z)` from one seed.
    pub fn project_to_mput(&self, seed: &DVector<f64>) -> Result<MputPoint> {
        let cfg = self.config();
        let k = self.n() - self.d();
        let tol = cfg.newton_tol * cfg.delta0.max(1.0);
        let mut z = seed.clone();
        for it in 0..=cfg.newton_max_iter {
            let g = self.weighted_sq_dist(&z)?;
            let (v, lam, next, tangent) = top_eigen(&g.hessian, k);
            let r = v.tr_mul(&g.gradient);
            let gap = if next.abs() > 0.0 { lam[k - 1] / next.abs() } else { f64::INFINITY };
            if r.norm() <= tol {
                if gap < cfg.eigengap {
                    return Err(Error::Numerical(format!("degenerate geometry: Hessian eigengap {gap:.2}")));
                }
                return Ok(MputPoint {
                    point: z,
                    tangent: GrPlane::from_orthonormal(&tangent),
                    residual: r.norm(),
                    iterations: it,
                    gap,
                });
            }
            if lam[k - 1] <= 0.0 {
                return Err(Error::Numerical("Hessian is not positive across the normal directions".into()));
            }
            let step = &v * r.component_div(&lam);
            z -= step;
        }
        Err(Error::Numerical(format!("Newton did not converge in {} iterations", cfg.newton_max_iter)))
    }

    /// Projects every seed onto the putative manifold, in parallel.
    pub fn extract_mput(&self, seeds: &[DVector<f64>]) -> Extraction {
        let reach = self.config().c2 * self.config().delta0 / 2.0;
        let results: Vec<std::result::Result<MputPoint, String>> = seeds
            .par_iter()
            .map(|s| {
                let near = self.patches().iter().any(|p| {
                    let (x, y) = p.local(s);
                    x.norm() < 5.0 * self.config().delta0 && (y - p.graph.value(&x)).norm() < reach
                });
                if !near {
                    return Err(format!("seed is farther than {reach:.3e} from every patch graph"));
                }
                self.project_to_mput(s).map_err(|e| e.to_string())
            })
            .collect();
        let mut points = Vec::new();
        let mut rejected = Vec::new();
        for (seed, r) in results.into_iter().enumerate() {
            match r {
                Ok(p) => points.push((seed, p)),
                Err(reason) => rejected.push(RejectedSeed { seed, reason }),
            }
        }
        Extraction { points, rejected }
    }

    /// Foot point of `e` on the putative manifold: `e − x` is normal at `x`.
    pub fn closest_on_mput(&self, e: &DVector<f64>) -> Result<MputPoint> {
        let mut x = self.project_to_mput(e)?;
        for _ in 0..50 {
            let slide = x.tangent.projection() * (e - &x.point);
            if slide.norm() <= 1e-13 * e.norm().max(1.0) {
                return Ok(x);
            }
            x = self.project_to_mput(&(&x.point + slide))?;
        }
        Err(Error::Numerical("closest-point iteration did not settle".into()))
    }
}
