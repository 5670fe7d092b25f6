//! Glaeser refinement of M-bundles.
//!
//! The first step from the initial bundle pins every fiber to the affine set of
//! anchor jets that keep the cluster form small at the finest informative scale,
//! then works outward through coarser scales for directions still free. Later
//! steps only cull.

mod config;
mod engine;
mod qmin;

use std::collections::BTreeMap;

use serde::Serialize;

pub use config::RefinementConfig;
pub use engine::{refine_once, refine_once_detailed, QminReport, Refinement, ScaleReport, Verdict};
pub use qmin::{qmin, QminValue};

use crate::bundles::MBundle;
use crate::Result;

/// Tolerance for "same fiber" between consecutive generations.
pub const STABLE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct GenerationSummary {
    pub generation: usize,
    /// Fiber-dimension histogram; the key `"empty"` counts EMPTY fibers.
    pub histogram: BTreeMap<String, usize>,
    pub culled: usize,
    /// Fibers emptied because their anchor jet was too steep for the frame.
    pub steep: usize,
    pub vacuous: usize,
    /// Tested clusters per scale index, summed over all fibers.
    pub clusters_per_scale: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub kbar: usize,
    pub scales: Vec<f64>,
    pub generations: Vec<GenerationSummary>,
    pub stabilized: bool,
    pub diagnostic: Option<String>,
}

/// Result of [`refine_to_stable`].
#[derive(Clone, Debug)]
pub struct Stabilized {
    pub bundle: MBundle,
    pub report: StabilityReport,
    /// Limit-test reports of the last generation step.
    pub last_reports: Vec<QminReport>,
}

fn histogram(bundle: &MBundle) -> BTreeMap<String, usize> {
    bundle
        .dim_histogram()
        .into_iter()
        .map(|(k, v)| (k.map_or_else(|| "empty".to_string(), |d| d.to_string()), v))
        .collect()
}

fn summary(bundle: &MBundle, reports: &[QminReport], nscales: usize) -> GenerationSummary {
    let mut clusters_per_scale = vec![0; nscales];
    for r in reports {
        for (k, s) in r.scales.iter().enumerate() {
            clusters_per_scale[k] += s.clusters;
        }
    }
    GenerationSummary {
        generation: bundle.generation(),
        histogram: histogram(bundle),
        culled: reports.iter().filter(|r| r.verdict == Verdict::Culled).count(),
        steep: reports.iter().filter(|r| r.verdict == Verdict::Steep).count(),
        vacuous: reports.iter().filter(|r| r.verdict == Verdict::Vacuous).count(),
        clusters_per_scale,
    }
}

/// True when every fiber of `b` has the same dimension as in `a` and the same affine set.
pub fn same_fibers(a: &MBundle, b: &MBundle, tol: f64) -> bool {
    (0..a.len()).all(|i| {
        (0..a.frames().len()).all(|q| match (a.fiber(i, q).space(), b.fiber(i, q).space()) {
            (None, None) => true,
            (Some(x), Some(y)) => x.dim() == y.dim() && x.contains_space(y, tol) && y.contains_space(x, tol),
            _ => false,
        })
    })
}

/// Refines until two consecutive generations agree or `max_generations` steps were taken.
pub fn refine_to_stable(bundle: &MBundle, config: &RefinementConfig) -> Result<Stabilized> {
    config.validate()?;
    let scales = config.resolve_scales(bundle.set());
    let config = config.clone().with_scales(scales.clone());
    let mut generations = vec![GenerationSummary {
        generation: bundle.generation(),
        histogram: histogram(bundle),
        culled: 0,
        steep: 0,
        vacuous: 0,
        clusters_per_scale: vec![0; scales.len()],
    }];
    let mut current = bundle.clone();
    let mut last_reports = Vec::new();
    for _ in 0..config.max_generations {
        let step = refine_once_detailed(&current, &config)?;
        generations.push(summary(&step.bundle, &step.reports, scales.len()));
        let done = same_fibers(&current, &step.bundle, STABLE_TOL);
        current = step.bundle;
        last_reports = step.reports;
        if done {
            let report = StabilityReport { kbar: config.kbar, scales, generations, stabilized: true, diagnostic: None };
            return Ok(Stabilized { bundle: current, report, last_reports });
        }
    }
    let report = StabilityReport {
        kbar: config.kbar,
        scales,
        generations,
        stabilized: false,
        diagnostic: Some(format!("fibers still changing after {} generations", config.max_generations)),
    };
    Ok(Stabilized { bundle: current, report, last_reports })
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct Nontriviality {
    pub nontrivial: bool,
    /// Samples whose fibers are EMPTY in every frame.
    pub culprits: Vec<usize>,
}

pub fn decide_nontrivial(bundle: &MBundle) -> Nontriviality {
    let culprits: Vec<usize> = (0..bundle.len()).filter(|&i| !bundle.has_nonempty_fiber(i)).collect();
    Nontriviality { nontrivial: culprits.is_empty(), culprits }
}
