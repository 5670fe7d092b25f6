use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::generators::GeneratorSpec;
use crate::bundles::{initial_bundle, SampledSet};
use crate::error::{Error, Result};
use crate::geometry::Frame;
use crate::refinement::{refine_to_stable, GenerationSummary, RefinementConfig};
use crate::topology::{decide, Caveat, LoopVerdict, ObstructionReport, TopologyConfig, Verdict};

pub const REPORT_SCHEMA: &str = "manifold-fit/decision";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything the decision pipeline can be tuned with.
#[derive(Clone, Debug, Default)]
pub struct PipelineConfig {
    pub refinement: RefinementConfig,
    pub topology: TopologyConfig,
    /// Frames for the initial bundle; `None` uses the coordinate frames.
    pub frames: Option<Vec<Frame>>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct InputDescriptor {
    /// `"generator"` or the path of the input cloud.
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub kbar: usize,
    pub scales: Vec<f64>,
    pub seed: u64,
    /// Frame matrices, row-major.
    pub frames: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrFiberSummary {
    pub singletons: usize,
    pub forced_dims: BTreeMap<String, usize>,
    pub diagnostics: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecisionReport {
    pub schema: String,
    pub version: u32,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub generated_unix: u64,
    pub input: InputDescriptor,
    pub config: ConfigEcho,
    pub generations: Vec<GenerationSummary>,
    pub stabilized: bool,
    pub grfibers: GrFiberSummary,
    pub loops: Vec<ObstructionReport>,
    pub verdict: Verdict,
    pub caveat: Caveat,
    /// Verdict with its qualification, as printed.
    pub headline: String,
    pub mechanism: Option<String>,
    pub culprits: Vec<usize>,
    pub diagnostic: Option<String>,
}

fn headline(verdict: Verdict, caveat: Caveat, mechanism: Option<&str>) -> String {
    match (verdict, caveat) {
        (Verdict::Yes, Caveat::Unconditional) => "YES (unconditional for curves)".into(),
        (Verdict::Yes, Caveat::NecessaryConditions) => "YES (necessary conditions only: every tested loop passes)".into(),
        (Verdict::Yes, _) => "YES (necessary conditions only: no loop was available to test)".into(),
        (Verdict::No, _) => format!("NO ({})", mechanism.unwrap_or("necessary condition fails")),
        (Verdict::Inconclusive, _) => "INCONCLUSIVE".into(),
    }
}

impl DecisionReport {
    /// Rejects reports whose verdict disagrees with the component reports.
    pub fn check_consistency(&self) -> Result<()> {
        let fail = |why: &str| Err(Error::Numerical(format!("inconsistent report: {why}")));
        let obstructed = self.loops.iter().any(|r| r.verdict == LoopVerdict::Obstructed);
        let inconclusive = self.loops.iter().any(|r| r.verdict == LoopVerdict::Inconclusive);
        match self.verdict {
            Verdict::No => {
                if self.mechanism.is_none() || self.caveat != Caveat::NoWithMechanism {
                    return fail("NO without mechanism");
                }
                if self.culprits.is_empty() && !obstructed {
                    return fail("NO without empty fibers or an obstructed loop");
                }
            }
            Verdict::Yes => {
                if !self.culprits.is_empty() || obstructed || inconclusive {
                    return fail("YES despite a failed check");
                }
                if self.input.d >= 2 && self.caveat == Caveat::Unconditional {
                    return fail("unconditional YES for d >= 2");
                }
                if self.input.d == 1 && self.caveat != Caveat::Unconditional {
                    return fail("conditional YES for a curve");
                }
            }
            Verdict::Inconclusive => {
                if self.stabilized && !inconclusive {
                    return fail("INCONCLUSIVE without an inconclusive loop");
                }
            }
        }
        if !self.stabilized && self.verdict != Verdict::Inconclusive {
            return fail("verdict on a bundle that did not stabilize");
        }
        Ok(())
    }

    /// 0 decided, 1 INCONCLUSIVE, 3 the pipeline itself failed to settle.
    pub fn exit_code(&self) -> i32 {
        match (self.stabilized, self.verdict) {
            (false, _) => 3,
            (true, Verdict::Inconclusive) => 1,
            (true, _) => 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Initial bundle, refinement to stability, then the topological decision.
pub fn run_pipeline(
    set: Arc<SampledSet>,
    input: InputDescriptor,
    config: &PipelineConfig,
    loops: &[Vec<usize>],
) -> Result<DecisionReport> {
    let bundle = initial_bundle(set, input.d, input.m, config.frames.clone())?;
    let stable = refine_to_stable(&bundle, &config.refinement)?;
    let echo = ConfigEcho {
        kbar: stable.report.kbar,
        scales: stable.report.scales.clone(),
        seed: config.refinement.seed,
        frames: bundle
            .frames()
            .iter()
            .map(|f| f.matrix().row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect(),
    };
    let decision = decide(&stable.bundle, &config.topology, loops)?;
    let (verdict, caveat, mechanism) = if stable.report.stabilized {
        (decision.verdict, decision.caveat, decision.mechanism)
    } else {
        (Verdict::Inconclusive, Caveat::Undecided, None)
    };
    let report = DecisionReport {
        schema: REPORT_SCHEMA.to_string(),
        version: REPORT_SCHEMA_VERSION,
        generated_unix: now_unix(),
        input,
        config: echo,
        generations: stable.report.generations,
        stabilized: stable.report.stabilized,
        grfibers: GrFiberSummary {
            singletons: decision.singleton_samples,
            forced_dims: decision.forced_dims,
            diagnostics: decision.grfiber_diagnostics,
        },
        loops: decision.loops,
        headline: headline(verdict, caveat, mechanism.as_deref()),
        verdict,
        caveat,
        mechanism,
        culprits: decision.culprits,
        diagnostic: stable.report.diagnostic,
    };
    report.check_consistency()?;
    Ok(report)
}

/// Runs the pipeline on a named generator, using its suggested dimension and scales unless overridden.
pub fn run_generator(
    spec: &GeneratorSpec,
    d: Option<usize>,
    m: usize,
    config: &PipelineConfig,
) -> Result<DecisionReport> {
    let set = Arc::new(super::generate(spec)?);
    let d = d
        .or_else(|| spec.default_d())
        .ok_or_else(|| Error::Input(format!("generator {} needs an explicit d", spec.name)))?;
    let mut config = config.clone();
    if config.refinement.scales.is_empty() {
        if let Some(s) = spec.suggested_scales() {
            config.refinement.scales = s;
        }
    }
    let input = InputDescriptor {
        source: "generator".into(),
        generator: Some(spec.clone()),
        n: set.ambient_dim(),
        d,
        m,
        samples: set.len(),
    };
    run_pipeline(set, input, &config, &[])
}
