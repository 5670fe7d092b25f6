//! Topological checks on the Gr-bundle: the curve shortcut and loop monodromy.

mod loops;
mod monodromy;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

pub use loops::{find_candidate_loops, LoopSearch};
pub use monodromy::{
    line_monodromy, loop_trace, write_trace_csv, LoopPath, LoopVerdict, Mechanism, ObstructionReport, TraceRow,
    COMMON_TOL, JUMP_TOL,
};

use crate::bundles::{gr_fiber, GrDiagnostic, GrFiber, GrFiberOptions, MBundle};
use crate::error::{Error, Result};
use crate::refinement::decide_nontrivial;

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Yes,
    No,
    Inconclusive,
}

/// How much a verdict is worth.
#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Caveat {
    /// Curves: nontriviality is necessary and sufficient.
    Unconditional,
    /// Every implemented necessary condition passed; section existence is not decided.
    NecessaryConditions,
    /// No loop could be tested; only nontriviality was checked.
    NecessaryConditionOnly,
    /// A necessary condition failed.
    NoWithMechanism,
    /// Some loop check could not be completed.
    Undecided,
}

#[derive(Clone, Debug)]
pub struct TopologyConfig {
    pub search: LoopSearch,
    pub grfiber: GrFiberOptions,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self { search: LoopSearch::default(), grfiber: GrFiberOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub caveat: Caveat,
    /// Why the verdict is NO, e.g. `"loop winding 1"`.
    pub mechanism: Option<String>,
    /// Samples whose fibers are EMPTY in every frame.
    pub culprits: Vec<usize>,
    pub loops: Vec<ObstructionReport>,
    pub singleton_samples: usize,
    /// Count of samples per forced dimension `l`; `"none"` counts samples without a Gr-fiber.
    pub forced_dims: BTreeMap<String, usize>,
    pub grfiber_diagnostics: usize,
}

impl Decision {
    fn empty_fibers(culprits: Vec<usize>) -> Self {
        Self {
            verdict: Verdict::No,
            caveat: Caveat::NoWithMechanism,
            mechanism: Some(format!("empty fibers at {} samples", culprits.len())),
            culprits,
            loops: Vec::new(),
            singleton_samples: 0,
            forced_dims: BTreeMap::new(),
            grfiber_diagnostics: 0,
        }
    }
}

/// Curves are decided by nontriviality alone.
pub fn d1_shortcut(bundle: &MBundle) -> Result<Decision> {
    if bundle.d() != 1 {
        return Err(Error::Input(format!("the curve shortcut needs d = 1, got d = {}", bundle.d())));
    }
    let nt = decide_nontrivial(bundle);
    if !nt.nontrivial {
        return Ok(Decision::empty_fibers(nt.culprits));
    }
    Ok(Decision {
        verdict: Verdict::Yes,
        caveat: Caveat::Unconditional,
        mechanism: None,
        culprits: Vec::new(),
        loops: Vec::new(),
        singleton_samples: 0,
        forced_dims: BTreeMap::new(),
        grfiber_diagnostics: 0,
    })
}

/// Gr-fibers of every sample, in parallel.
pub fn all_gr_fibers(bundle: &MBundle, opts: &GrFiberOptions) -> (Vec<Option<GrFiber>>, Vec<Vec<GrDiagnostic>>) {
    (0..bundle.len()).into_par_iter().map(|i| {
        let r = gr_fiber(bundle, i, opts);
        (r.fiber, r.diagnostics)
    }).unzip()
}

/// Checks one loop; resolution failures become INCONCLUSIVE reports.
pub fn check_loop(lp: &LoopPath) -> ObstructionReport {
    line_monodromy(lp).unwrap_or_else(|e| ObstructionReport::failed(lp, &e))
}

/// Composite verdict: nontriviality, then monodromy along detected and supplied loops.
pub fn decide(bundle: &MBundle, config: &TopologyConfig, extra_loops: &[Vec<usize>]) -> Result<Decision> {
    let nt = decide_nontrivial(bundle);
    if !nt.nontrivial {
        return Ok(Decision::empty_fibers(nt.culprits));
    }
    if bundle.d() == 1 {
        return d1_shortcut(bundle);
    }
    let (fibers, diagnostics) = all_gr_fibers(bundle, &config.grfiber);
    let mut paths = find_candidate_loops(bundle.set(), &fibers, &config.search);
    for (k, lp) in extra_loops.iter().enumerate() {
        let mut f = Vec::with_capacity(lp.len());
        for &i in lp {
            let fiber = fibers
                .get(i)
                .ok_or_else(|| Error::Input(format!("loop {k} refers to sample {i}, out of range")))?
                .clone()
                .ok_or_else(|| Error::Input(format!("loop {k} passes through sample {i} with no Gr-fiber")))?;
            f.push(fiber);
        }
        paths.push(LoopPath::new(lp.clone(), f)?);
    }
    let loops: Vec<ObstructionReport> = paths.par_iter().map(check_loop).collect();
    let singleton_samples = fibers.iter().flatten().filter(|f| f.is_singleton()).count();
    let mut forced_dims = BTreeMap::new();
    for f in &fibers {
        *forced_dims.entry(f.as_ref().map_or_else(|| "none".to_string(), |f| f.l().to_string())).or_insert(0) += 1;
    }
    let grfiber_diagnostics = diagnostics.iter().map(Vec::len).sum();

    let obstruction = loops.iter().find(|r| r.verdict == LoopVerdict::Obstructed);
    let (verdict, caveat, mechanism) = if let Some(r) = obstruction {
        let why = match r.mechanism {
            Mechanism::Winding { winding } => format!("loop winding {winding}"),
            Mechanism::Parity { sign } => format!("loop holonomy sign {sign}"),
            Mechanism::None => "loop obstruction".to_string(),
        };
        (Verdict::No, Caveat::NoWithMechanism, Some(why))
    } else if loops.iter().any(|r| r.verdict == LoopVerdict::Inconclusive) {
        (Verdict::Inconclusive, Caveat::Undecided, None)
    } else if loops.is_empty() {
        (Verdict::Yes, Caveat::NecessaryConditionOnly, None)
    } else {
        (Verdict::Yes, Caveat::NecessaryConditions, None)
    };
    Ok(Decision {
        verdict,
        caveat,
        mechanism,
        culprits: Vec::new(),
        loops,
        singleton_samples,
        forced_dims,
        grfiber_diagnostics,
    })
}

#[cfg(test)]
mod tests;
