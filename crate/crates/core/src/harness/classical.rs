use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::bundles::{initial_bundle, SampledSet};
use crate::error::{Error, Result};
use crate::geometry::Frame;
use crate::refinement::{decide_nontrivial, refine_to_stable, RefinementConfig, StabilityReport};

/// Outcome of refining the bundle `{P : P(x) = f(x)}` of a sampled function.
#[derive(Clone, Debug, Serialize)]
pub struct ClassicalOutcome {
    pub nontrivial: bool,
    /// Samples with an EMPTY fiber.
    pub culprits: Vec<usize>,
    /// First refinement step after which every fiber was EMPTY.
    pub all_empty_after: Option<usize>,
    pub report: StabilityReport,
}

/// Glaeser refinement for `C^m(ℝᴺ, ℝᴰ)` on samples `f(xs[i]) = fs[i]`.
///
/// Clusters are drawn in `ℝᴺ` alone and jets live over the identity frame, so
/// jets of any steepness are admissible.
pub fn classical_mode(
    xs: &[DVector<f64>],
    fs: &[DVector<f64>],
    m: usize,
    config: &RefinementConfig,
) -> Result<ClassicalOutcome> {
    if xs.len() != fs.len() {
        return Err(Error::Input(format!("{} sites but {} values", xs.len(), fs.len())));
    }
    let big_n = xs.first().map_or(0, |x| x.len());
    let big_d = fs.first().map_or(0, |f| f.len());
    if big_n == 0 || big_d == 0 {
        return Err(Error::Input("classical mode needs at least one sample with nonempty site and value".into()));
    }
    let points: Vec<DVector<f64>> = xs
        .iter()
        .zip(fs)
        .map(|(x, f)| {
            if x.len() != big_n || f.len() != big_d {
                return Err(Error::Dimension("sites and values must have uniform lengths".into()));
            }
            Ok(DVector::from_iterator(big_n + big_d, x.iter().chain(f.iter()).copied()))
        })
        .collect::<Result<_>>()?;
    let set = Arc::new(SampledSet::with_metric_dims(points, big_n)?);
    let frame = Frame::identity(big_n + big_d, big_n)?;
    let bundle = initial_bundle(set, big_n, m, Some(vec![frame]))?;
    let config = RefinementConfig { max_slope: f64::MAX, ..config.clone() };
    let stable = refine_to_stable(&bundle, &config)?;
    let nt = decide_nontrivial(&stable.bundle);
    let total = bundle.len();
    let all_empty_after = stable
        .report
        .generations
        .iter()
        .position(|g| g.histogram.get("empty").copied() == Some(total));
    Ok(ClassicalOutcome { nontrivial: nt.nontrivial, culprits: nt.culprits, all_empty_after, report: stable.report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dirichlet;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn dirichlet_function_has_empty_fibers() {
        let (xs, fs): (Vec<_>, Vec<_>) = dirichlet(20).into_iter().map(|(x, y)| (scalar(x), scalar(y))).unzip();
        let out = classical_mode(&xs, &fs, 1, &RefinementConfig::default()).unwrap();
        assert!(!out.nontrivial);
        assert!(out.all_empty_after.unwrap() <= 2);
    }

    #[test]
    fn polynomial_restriction_survives() {
        let xs: Vec<DVector<f64>> = (0..30).map(|k| DVector::from_vec(vec![k as f64 / 29.0, (k % 5) as f64 / 4.0])).collect();
        let fs: Vec<DVector<f64>> = xs.iter().map(|x| scalar(1.0 + 2.0 * x[0] - x[1])).collect();
        let out = classical_mode(&xs, &fs, 1, &RefinementConfig::default()).unwrap();
        assert!(out.nontrivial);
        assert!(out.all_empty_after.is_none());
    }

    #[test]
    fn constant_on_two_points_survives() {
        let out = classical_mode(&[scalar(0.0), scalar(1.0)], &[scalar(3.0), scalar(3.0)], 2, &RefinementConfig::default())
            .unwrap();
        assert!(out.nontrivial);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(classical_mode(&[scalar(0.0)], &[], 1, &RefinementConfig::default()).is_err());
    }
}
