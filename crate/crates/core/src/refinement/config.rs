use serde::{Deserialize, Serialize};

use crate::bundles::SampledSet;
use crate::error::{Error, Result};

const MAX_AUTO_LEVELS: usize = 24;

/// Knobs of the refinement engine.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RefinementConfig {
    /// Cluster size, not counting the anchor.
    pub kbar: usize,
    /// Strictly decreasing radii. Empty means "derive from the sample spacing".
    pub scales: Vec<f64>,
    /// Levels and ratio used when `scales` is derived. Extra coarse levels are
    /// added until every sample has `kbar` neighbours within the coarsest radius.
    pub auto_levels: usize,
    pub auto_ratio: f64,
    /// Base radius of the derived schedule as a multiple of the 90th-percentile nearest-neighbour distance.
    pub auto_factor: f64,
    /// A fiber survives outright when its finest-scale 𝒬_min is below this.
    pub qmin_threshold: f64,
    /// Smooth data leaves `𝒬_min ≈ (κ·δ)²` at radius `δ`; values below that with
    /// `κ = curvature_allowance` also survive outright.
    pub curvature_allowance: f64,
    /// A fiber is culled outright when its finest-scale 𝒬_min is above this.
    pub qmin_cap: f64,
    /// Between the two cutoffs, survival needs a log-log decay slope of at least this.
    pub min_decay_slope: f64,
    /// Fibers whose selected jet has a gradient entry above this are dropped.
    /// Every plane is a graph with entries at most 1 over some coordinate frame.
    pub max_slope: f64,
    /// Relative singular-value cutoff for pinning a fiber direction.
    pub pin_tol: f64,
    /// Absolute singular-value floor for pinning.
    pub pin_floor: f64,
    pub max_generations: usize,
    pub cluster_budget: usize,
    pub seed: u64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            kbar: 2,
            scales: Vec::new(),
            auto_levels: 8,
            auto_ratio: 0.5,
            auto_factor: 3.0,
            qmin_threshold: 1e-4,
            curvature_allowance: 10.0,
            qmin_cap: 1.0,
            min_decay_slope: 1.0,
            max_slope: 2.0,
            pin_tol: 1e-3,
            pin_floor: 1e-9,
            max_generations: 12,
            cluster_budget: 24,
            seed: 0x5eed,
        }
    }
}

impl RefinementConfig {
    /// Geometric schedule `δ₀, δ₀·ratio, …` with `levels` entries.
    pub fn geometric(delta0: f64, levels: usize, ratio: f64) -> Vec<f64> {
        (0..levels).map(|k| delta0 * ratio.powi(k as i32)).collect()
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Self {
        self.scales = scales;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kbar == 0 {
            return Err(Error::Input("kbar must be at least 1".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Input("scales must be positive".into()));
        }
        if self.scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Input("scales must be strictly decreasing".into()));
        }
        let positive =
            [self.qmin_threshold, self.qmin_cap, self.pin_tol, self.pin_floor, self.auto_factor, self.max_slope];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Input("thresholds must be positive".into()));
        }
        if !(self.curvature_allowance.is_finite() && self.curvature_allowance >= 0.0) {
            return Err(Error::Input("curvature_allowance must be finite and nonnegative".into()));
        }
        if self.qmin_cap < self.qmin_threshold {
            return Err(Error::Input("qmin_cap must not be below qmin_threshold".into()));
        }
        if !(self.auto_ratio > 0.0 && self.auto_ratio < 1.0) || self.auto_levels == 0 {
            return Err(Error::Input("auto schedule needs 0 < ratio < 1 and at least one level".into()));
        }
        if self.cluster_budget == 0 || self.max_generations == 0 {
            return Err(Error::Input("cluster_budget and max_generations must be positive".into()));
        }
        Ok(())
    }

    /// The schedule actually used on `set`.
    pub fn resolve_scales(&self, set: &SampledSet) -> Vec<f64> {
        if !self.scales.is_empty() {
            return self.scales.clone();
        }
        let mut nn: Vec<f64> = set.nearest_distances().into_iter().filter(|v| v.is_finite()).collect();
        if nn.is_empty() {
            return Self::geometric(1.0, self.auto_levels, self.auto_ratio);
        }
        nn.sort_by(f64::total_cmp);
        let q90 = nn[((nn.len() - 1) as f64 * 0.9).round() as usize];
        let want = self.kbar.min(set.len() - 1);
        let short = |r: f64| (0..set.len()).any(|i| set.ball(i, r).len() < want);
        let mut top = self.auto_factor * q90;
        let mut levels = self.auto_levels;
        while levels < MAX_AUTO_LEVELS && short(top) {
            top /= self.auto_ratio;
            levels += 1;
        }
        Self::geometric(top, levels, self.auto_ratio)
    }
}
