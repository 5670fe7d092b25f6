//! Example generators, classical comparison mode, report assembly and the command line.

mod classical;
mod cli;
mod generators;
mod input;
mod patches;
mod report;

pub use classical::{classical_mode, ClassicalOutcome};
pub use cli::run_cli;
pub use generators::{
    boundary_loop, circle, dirichlet, farey, generate, generate_points, iota, strip_disk, sunflower, Analytic,
    GeneratorSpec, Twist, MIN_LOOP_SAMPLES,
};
pub use input::{CloudInput, CLOUD_SCHEMA, CLOUD_SCHEMA_VERSION};
pub use patches::{circle_arcs, fan_axis, paste_example, plane_fan, two_lines, PasteExample, PASTE_EXAMPLES};
pub use report::{
    run_generator, run_pipeline, ConfigEcho, DecisionReport, GrFiberSummary, InputDescriptor, PipelineConfig,
    REPORT_SCHEMA, REPORT_SCHEMA_VERSION,
};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "MANIFOLD_FIT_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`]; a no-op when unset or already initialized.
pub fn init_threads() -> crate::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| crate::Error::Input(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}
