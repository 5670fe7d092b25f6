use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::{
    generate, paste_example, run_pipeline, CloudInput, GeneratorSpec, InputDescriptor, PipelineConfig,
    CLOUD_SCHEMA_VERSION, REPORT_SCHEMA_VERSION,
};
use crate::bundles::{gr_fibers, initial_bundle, GrDiagnostic, GrFiberOptions, SampledSet};
use crate::error::{Error, Result};
use crate::pasting::PacketConfig;
use crate::refinement::{refine_to_stable, QminReport, RefinementConfig, StabilityReport, Stabilized};
use crate::topology::{all_gr_fibers, check_loop, loop_trace, LoopPath, LoopVerdict, ObstructionReport};

const REFINE_SCHEMA: &str = "manifold-fit/refinement";
const GRFIBER_SCHEMA: &str = "manifold-fit/grfibers";
const MONODROMY_SCHEMA: &str = "manifold-fit/monodromy";
const DOC_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "manifold-fit", version, about = "Decide whether a sampled set fits in a smooth d-manifold")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refine, extract Gr-fibers, test loops and print the verdict.
    Check(Common),
    /// Dump every generation of the refined bundle.
    Refine(Common),
    /// Dump the Gr-fiber of every sample.
    Grfibers(Common),
    /// Test the monodromy condition along supplied loops.
    Monodromy(MonodromyArgs),
    /// Glue the local patches of a pasting example.
    Paste(PasteArgs),
    /// Emit a sample cloud.
    Gen(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Named generator (E1, E2, iota_E1, iota_E2, dirichlet_graph, circle, graph_of:<name>).
    #[arg(long, required_unless_present = "input", conflicts_with = "input")]
    generator: Option<String>,
    /// JSON point cloud.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generator densities as `key=count`, comma separated.
    #[arg(long, value_delimiter = ',')]
    density: Vec<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    kbar: Option<usize>,
    /// Radii, comma separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    scales: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct MonodromyArgs {
    #[command(flatten)]
    common: Common,
    /// Loop as comma-separated sample indices; repeat for several loops.
    #[arg(long = "loop")]
    loops: Vec<String>,
}

#[derive(Args, Debug)]
struct PasteArgs {
    /// Pasting example: two_lines, circle or plane_fan.
    #[arg(long)]
    generator: String,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

struct Loaded {
    set: Arc<SampledSet>,
    input: InputDescriptor,
    loops: Vec<Vec<usize>>,
    spec: Option<GeneratorSpec>,
    config: RefinementConfig,
}

fn parse_density(spec: &mut GeneratorSpec, entries: &[String]) -> Result<()> {
    for e in entries {
        let (k, v) = e
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("density entry {e:?} is not key=count")))?;
        let v: usize = v.trim().parse().map_err(|_| Error::Input(format!("density {k} must be a count, got {v:?}")))?;
        spec.density.insert(k.trim().to_string(), v);
    }
    Ok(())
}

fn load(c: &Common) -> Result<Loaded> {
    let mut config = RefinementConfig::default();
    if let Some(k) = c.kbar {
        config.kbar = k;
    }
    if let Some(s) = c.seed {
        config.seed = s;
    }
    config.scales = c.scales.clone();
    let m = c.m;
    let (set, input, loops, spec) = match (&c.generator, &c.input) {
        (Some(name), _) => {
            let mut spec = GeneratorSpec::new(name);
            parse_density(&mut spec, &c.density)?;
            let set = generate(&spec)?;
            let d = c
                .d
                .or_else(|| spec.default_d())
                .ok_or_else(|| Error::Input(format!("generator {name} needs --d")))?;
            if config.scales.is_empty() {
                config.scales = spec.suggested_scales().unwrap_or_default();
            }
            let input = InputDescriptor {
                source: "generator".into(),
                generator: Some(spec.clone()),
                n: set.ambient_dim(),
                d,
                m: m.unwrap_or(1),
                samples: set.len(),
            };
            (set, input, Vec::new(), Some(spec))
        }
        (None, Some(path)) => {
            let cloud = CloudInput::read(path)?;
            let input = InputDescriptor {
                source: path.display().to_string(),
                generator: None,
                n: cloud.n,
                d: c.d.unwrap_or(cloud.d),
                m: m.unwrap_or(cloud.m),
                samples: cloud.points.len(),
            };
            (cloud.to_set()?, input, cloud.loops, None)
        }
        (None, None) => return Err(Error::Input("one of --generator or --input is required".into())),
    };
    if input.d == 0 || input.d >= input.n {
        return Err(Error::Input(format!("need 0 < d < n, got d = {}, n = {}", input.d, input.n)));
    }
    if input.m == 0 {
        return Err(Error::Input("m must be at least 1".into()));
    }
    config.validate()?;
    Ok(Loaded { set: Arc::new(set), input, loops, spec, config })
}

fn refine(l: &Loaded) -> Result<Stabilized> {
    let bundle = initial_bundle(l.set.clone(), l.input.d, l.input.m, None)?;
    refine_to_stable(&bundle, &l.config)
}

/// Writes `body` to `<out>/<name>` or to stdout.
fn emit(out: &Option<PathBuf>, name: &str, body: &[u8]) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, body)?;
            eprintln!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(body)?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn csv_body(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Numerical(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Numerical(e.to_string()))
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(" ")
}

fn cmd_check(c: &Common) -> Result<i32> {
    let l = load(c)?;
    let config = PipelineConfig { refinement: l.config.clone(), ..PipelineConfig::default() };
    let report = run_pipeline(l.set.clone(), l.input.clone(), &config, &l.loops)?;
    match c.format {
        Format::Json => emit(&c.out, "decision.json", &json(&report)?)?,
        Format::Csv => {
            let v = REPORT_SCHEMA_VERSION.to_string();
            let rows = report
                .loops
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    vec![
                        v.clone(),
                        k.to_string(),
                        format!("{:?}", r.verdict).to_uppercase(),
                        serde_json::to_string(&r.mechanism).unwrap_or_default(),
                        r.samples.len().to_string(),
                        r.quotient_dim.to_string(),
                        r.diagnostic.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            let header = ["schema_version", "loop", "verdict", "mechanism", "length", "quotient_dim", "diagnostic"];
            emit(&c.out, "loops.csv", &csv_body(&header, rows)?)?;
        }
    }
    if c.out.is_some() || c.format == Format::Csv {
        println!("{}", report.headline);
    }
    Ok(report.exit_code())
}

#[derive(Serialize)]
struct FiberRow {
    sample: usize,
    frame: usize,
    dim: Option<usize>,
    base: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct RefineDoc<'a> {
    schema: &'static str,
    version: u32,
    input: &'a InputDescriptor,
    report: &'a StabilityReport,
    fibers: Vec<FiberRow>,
    last_step: &'a [QminReport],
}

fn stability_code(s: &Stabilized) -> i32 {
    if s.report.stabilized {
        0
    } else {
        3
    }
}

fn cmd_refine(c: &Common) -> Result<i32> {
    let l = load(c)?;
    let s = refine(&l)?;
    let nframes = s.bundle.frames().len();
    let fibers: Vec<FiberRow> = (0..s.bundle.len())
        .flat_map(|i| (0..nframes).map(move |q| (i, q)))
        .map(|(i, q)| {
            let f = s.bundle.fiber(i, q);
            FiberRow { sample: i, frame: q, dim: f.dim(), base: f.space().map(|sp| sp.base.iter().copied().collect()) }
        })
        .collect();
    match c.format {
        Format::Json => {
            let doc = RefineDoc {
                schema: REFINE_SCHEMA,
                version: DOC_VERSION,
                input: &l.input,
                report: &s.report,
                fibers,
                last_step: &s.last_reports,
            };
            emit(&c.out, "refinement.json", &json(&doc)?)?;
        }
        Format::Csv => {
            let v = DOC_VERSION.to_string();
            let rows = fibers
                .iter()
                .zip(&s.last_reports)
                .map(|(f, r)| {
                    vec![
                        v.clone(),
                        f.sample.to_string(),
                        f.frame.to_string(),
                        f.dim.map_or_else(|| "empty".into(), |d| d.to_string()),
                        format!("{:?}", r.verdict).to_lowercase(),
                        f.base.as_deref().map(joined).unwrap_or_default(),
                    ]
                })
                .collect();
            emit(&c.out, "fibers.csv", &csv_body(&["schema_version", "sample", "frame", "dim", "verdict", "base"], rows)?)?;
        }
    }
    if let Some(why) = &s.report.diagnostic {
        eprintln!("{why}");
    }
    Ok(stability_code(&s))
}

#[derive(Serialize)]
struct GrRow {
    sample: usize,
    l: Option<usize>,
    witness_frame: Option<usize>,
    /// Forced vectors, one per entry.
    forced: Vec<Vec<f64>>,
    diagnostics: Vec<GrDiagnostic>,
}

#[derive(Serialize)]
struct GrDoc<'a> {
    schema: &'static str,
    version: u32,
    input: &'a InputDescriptor,
    stabilized: bool,
    fibers: Vec<GrRow>,
}

fn cmd_grfibers(c: &Common) -> Result<i32> {
    let l = load(c)?;
    let s = refine(&l)?;
    let rows: Vec<GrRow> = gr_fibers(&s.bundle, &GrFiberOptions::default())
        .into_iter()
        .enumerate()
        .map(|(i, r)| GrRow {
            sample: i,
            l: r.fiber.as_ref().map(|f| f.l()),
            witness_frame: r.fiber.as_ref().map(|f| f.witness_frame),
            forced: r
                .fiber
                .as_ref()
                .map(|f| f.forced.column_iter().map(|c| c.iter().copied().collect()).collect())
                .unwrap_or_default(),
            diagnostics: r.diagnostics,
        })
        .collect();
    match c.format {
        Format::Json => {
            let doc = GrDoc {
                schema: GRFIBER_SCHEMA,
                version: DOC_VERSION,
                input: &l.input,
                stabilized: s.report.stabilized,
                fibers: rows,
            };
            emit(&c.out, "grfibers.json", &json(&doc)?)?;
        }
        Format::Csv => {
            let v = DOC_VERSION.to_string();
            let body = rows
                .iter()
                .map(|r| {
                    vec![
                        v.clone(),
                        r.sample.to_string(),
                        r.l.map_or_else(|| "none".into(), |l| l.to_string()),
                        r.witness_frame.map(|q| q.to_string()).unwrap_or_default(),
                        r.forced.iter().map(|f| joined(f)).collect::<Vec<_>>().join(";"),
                        r.diagnostics.len().to_string(),
                    ]
                })
                .collect();
            let header = ["schema_version", "sample", "l", "witness_frame", "forced", "diagnostics"];
            emit(&c.out, "grfibers.csv", &csv_body(&header, body)?)?;
        }
    }
    Ok(stability_code(&s))
}

#[derive(Serialize)]
struct MonodromyDoc<'a> {
    schema: &'static str,
    version: u32,
    input: &'a InputDescriptor,
    stabilized: bool,
    loops: &'a [ObstructionReport],
}

fn parse_loops(raw: &[String]) -> Result<Vec<Vec<usize>>> {
    raw.iter()
        .map(|s| {
            s.split(|ch: char| ch == ',' || ch.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|_| Error::Input(format!("loop entry {t:?} is not a sample index"))))
                .collect()
        })
        .collect()
}

fn cmd_monodromy(a: &MonodromyArgs) -> Result<i32> {
    let c = &a.common;
    let l = load(c)?;
    let mut loops = parse_loops(&a.loops)?;
    loops.extend(l.loops.iter().cloned());
    if loops.is_empty() {
        loops.extend(l.spec.as_ref().and_then(GeneratorSpec::default_loop));
    }
    if loops.is_empty() {
        return Err(Error::Input("no loop supplied; pass --loop i,j,k,...".into()));
    }
    for lp in &loops {
        if lp.len() < 3 {
            return Err(Error::Input("a loop needs at least 3 samples".into()));
        }
        if let Some(&i) = lp.iter().find(|&&i| i >= l.set.len()) {
            return Err(Error::Input(format!("loop sample {i} is out of range")));
        }
    }
    let s = refine(&l)?;
    let (fibers, _) = all_gr_fibers(&s.bundle, &GrFiberOptions::default());
    let mut paths = Vec::new();
    for lp in &loops {
        let f = lp
            .iter()
            .map(|&i| fibers[i].clone().ok_or_else(|| Error::Input(format!("loop passes through sample {i} with no Gr-fiber"))))
            .collect::<Result<Vec<_>>>()?;
        paths.push(LoopPath::new(lp.clone(), f)?);
    }
    let reports: Vec<ObstructionReport> = paths.iter().map(check_loop).collect();
    match c.format {
        Format::Json => {
            let doc = MonodromyDoc {
                schema: MONODROMY_SCHEMA,
                version: DOC_VERSION,
                input: &l.input,
                stabilized: s.report.stabilized,
                loops: &reports,
            };
            emit(&c.out, "monodromy.json", &json(&doc)?)?;
        }
        Format::Csv => {
            let v = DOC_VERSION.to_string();
            let mut rows = Vec::new();
            for (k, p) in paths.iter().enumerate() {
                for t in loop_trace(p)? {
                    rows.push(vec![
                        v.clone(),
                        k.to_string(),
                        t.position.to_string(),
                        t.sample.to_string(),
                        t.step.to_string(),
                        t.angle.map(|a| a.to_string()).unwrap_or_default(),
                        t.line,
                    ]);
                }
            }
            let header = ["schema_version", "loop", "position", "sample", "step", "angle", "line"];
            emit(&c.out, "monodromy.csv", &csv_body(&header, rows)?)?;
        }
    }
    for (k, r) in reports.iter().enumerate() {
        println!("loop {k}: {:?} {}", r.verdict, serde_json::to_string(&r.mechanism)?);
    }
    Ok(if !s.report.stabilized {
        3
    } else if reports.iter().any(|r| r.verdict == LoopVerdict::Inconclusive) {
        1
    } else {
        0
    })
}

fn cmd_paste(a: &PasteArgs) -> Result<i32> {
    let cfg = PacketConfig { m: a.m, ..PacketConfig::default() };
    let ex = paste_example(&a.generator, &cfg)?;
    for w in ex.packet.warnings() {
        eprintln!("warning: {}", serde_json::to_string(w)?);
    }
    let extraction = ex.packet.extract_mput(&ex.seeds);
    let mput: Vec<_> = extraction.points.iter().map(|p| p.1.clone()).collect();
    let pasted = ex.packet.paste_sections(&mput)?;
    let export = pasted.export(&ex.packet, &extraction.rejected);
    match a.format {
        Format::Json => emit(&a.out, "pasted.json", &json(&export)?)?,
        Format::Csv => {
            let mut body = Vec::new();
            export.write_csv(&mut body)?;
            emit(&a.out, "pasted.csv", &body)?;
        }
    }
    eprintln!("{} points glued, {} seeds rejected, {} dropped", export.rows.len(), export.rejected.len(), export.dropped);
    Ok(if extraction.rejected.is_empty() { 0 } else { 3 })
}

fn cmd_gen(c: &Common) -> Result<i32> {
    let l = load(c)?;
    match c.format {
        Format::Json => {
            let mut cloud = CloudInput::new(l.set.points(), l.input.d, l.input.m);
            cloud.loops = l.loops.clone();
            emit(&c.out, "cloud.json", &json(&cloud)?)?;
        }
        Format::Csv => {
            let v = CLOUD_SCHEMA_VERSION.to_string();
            let header: Vec<String> =
                std::iter::once("schema_version".to_string()).chain((0..l.input.n).map(|k| format!("x{k}"))).collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = l
                .set
                .points()
                .iter()
                .map(|p| std::iter::once(v.clone()).chain(p.iter().map(|x| x.to_string())).collect())
                .collect();
            emit(&c.out, "cloud.csv", &csv_body(&header, rows)?)?;
        }
    }
    Ok(0)
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Input(_) | Error::Json(_) | Error::Dimension(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the process exit code:
/// 0 decided, 1 INCONCLUSIVE, 2 input error, 3 internal diagnostic.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = super::init_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    let result = match &cli.command {
        Command::Check(c) => cmd_check(c),
        Command::Refine(c) => cmd_refine(c),
        Command::Grfibers(c) => cmd_grfibers(c),
        Command::Monodromy(a) => cmd_monodromy(a),
        Command::Paste(a) => cmd_paste(a),
        Command::Gen(c) => cmd_gen(c),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    })
}
