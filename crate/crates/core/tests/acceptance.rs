use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, FileFailurePersistence, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use manifold_fit::bundles::{full_bundle, initial_bundle, AffineSpace, GrFiberOptions, MBundle, SampledSet};
use manifold_fit::geometry::{align_frames, grass_dist, Frame, GrPlane, ALIGN_EPS0};
use manifold_fit::harness::{
    classical_mode, dirichlet, generate, paste_example, run_generator, Analytic, GeneratorSpec, PipelineConfig,
};
use manifold_fit::jets::{compatible, realize_jet, Jet, JetPoly};
use manifold_fit::pasting::{CylinderPacket, GluedPoint, PacketConfig};
use manifold_fit::refinement::{
    decide_nontrivial, qmin, refine_once, refine_to_stable, RefinementConfig,
};
use manifold_fit::topology::{all_gr_fibers, decide, Caveat, LoopVerdict, Mechanism, TopologyConfig, Verdict};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

fn random_orthogonal(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    uniform(r, n, n).qr().q()
}

struct StripRun {
    decision: manifold_fit::topology::Decision,
    stable: manifold_fit::refinement::Stabilized,
    boundary: Vec<usize>,
    elapsed: Duration,
}

fn run_strip(name: &str) -> StripRun {
    let spec = GeneratorSpec::new(name).with("t", 128).with("s", 8).with("disk", 400);
    let start = Instant::now();
    let set = Arc::new(generate(&spec).unwrap());
    let bundle = initial_bundle(set, 3, 1, None).unwrap();
    let cfg = RefinementConfig::default().with_scales(spec.suggested_scales().unwrap());
    let stable = refine_to_stable(&bundle, &cfg).unwrap();
    let boundary = spec.default_loop().unwrap();
    let decision = decide(&stable.bundle, &TopologyConfig::default(), &[boundary.clone()]).unwrap();
    StripRun { decision, stable, boundary, elapsed: start.elapsed() }
}

fn boundary_report(run: &StripRun) -> &manifold_fit::topology::ObstructionReport {
    run.decision.loops.iter().find(|r| r.samples == run.boundary).expect("boundary loop was checked")
}

#[test]
fn e1_pipeline_forces_the_half_twist() {
    let run = run_strip("E1");
    assert!(run.stable.report.stabilized);
    let nt = decide_nontrivial(&run.stable.bundle);
    assert!(nt.nontrivial && nt.culprits.is_empty(), "empty fibers at {:?}", nt.culprits);

    let (fibers, _) = all_gr_fibers(&run.stable.bundle, &GrFiberOptions::default());
    let n = run.stable.bundle.n();
    let mut worst: f64 = 0.0;
    for (k, &i) in run.boundary.iter().enumerate() {
        let t = TAU * k as f64 / run.boundary.len() as f64;
        let mut want = DMatrix::zeros(n, 3);
        want[(0, 0)] = 1.0;
        want[(1, 1)] = 1.0;
        want[(2, 2)] = (t / 2.0).cos();
        want[(3, 2)] = (t / 2.0).sin();
        let want = GrPlane::from_basis(&want).unwrap();
        let f = fibers[i].as_ref().unwrap_or_else(|| panic!("no Gr-fiber at boundary sample {i}"));
        assert!(f.is_singleton(), "boundary sample {i} forces only {} dimensions", f.l());
        worst = worst.max(grass_dist(&f.plane().unwrap(), &want));
    }
    println!("E1 worst boundary distance {worst:.3e}, {:?}", run.elapsed);
    assert!(worst <= 1e-3, "{worst}");

    assert_eq!(boundary_report(&run).mechanism, Mechanism::Winding { winding: 1 });
    assert_eq!(run.decision.verdict, Verdict::No);
    assert!(run.elapsed <= Duration::from_secs(300), "{:?}", run.elapsed);
}

#[test]
fn strip_sets_have_exact_monodromy() {
    let e2 = run_strip("E2");
    assert_eq!(boundary_report(&e2).mechanism, Mechanism::Winding { winding: 2 });
    assert_eq!(e2.decision.verdict, Verdict::No);

    let lifted2 = run_strip("iota_E2");
    let r = boundary_report(&lifted2);
    assert_eq!(r.mechanism, Mechanism::Parity { sign: 1 });
    assert_eq!(r.verdict, LoopVerdict::Passes);
    assert_eq!(lifted2.decision.verdict, Verdict::Yes);
    assert_eq!(lifted2.decision.caveat, Caveat::NecessaryConditions);

    let lifted1 = run_strip("iota_E1");
    assert_eq!(boundary_report(&lifted1).mechanism, Mechanism::Parity { sign: -1 });
    assert_eq!(lifted1.decision.verdict, Verdict::No);
}

#[test]
fn dirichlet_contrast() {
    let (xs, fs): (Vec<_>, Vec<_>) = dirichlet(50)
        .into_iter()
        .map(|(x, y)| (DVector::from_element(1, x), DVector::from_element(1, y)))
        .unzip();
    let classical = classical_mode(&xs, &fs, 1, &RefinementConfig::default()).unwrap();
    assert!(!classical.nontrivial);
    assert_eq!(classical.culprits.len(), xs.len());
    let after = classical.all_empty_after.expect("every fiber ends EMPTY");
    assert!(after <= 2, "all EMPTY only after {after} steps");

    let spec = GeneratorSpec::new("dirichlet_graph").with("denominator", 50);
    let report = run_generator(&spec, Some(1), 1, &PipelineConfig::default()).unwrap();
    assert!(report.culprits.is_empty());
    assert_eq!(report.verdict, Verdict::Yes);
    assert_eq!(report.caveat, Caveat::Unconditional);
}

fn random_jet(r: &mut ChaCha8Rng, n: usize, d: usize, m: usize) -> Jet {
    let q = Frame::new(random_orthogonal(r, n), d).unwrap();
    let x = DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0));
    let (xq, xp) = q.split(&x);
    let terms = JetPoly::zeros(d, m, n - d, xq.clone()).coeffs().nrows();
    let mut coeffs = uniform(r, terms, n - d) * 0.5;
    coeffs.row_mut(0).copy_from(&xp.transpose());
    Jet::new(q, JetPoly::new(d, m, xq, coeffs).unwrap(), x).unwrap()
}

#[test]
fn jet_realization_round_trip() {
    let mut r = rng(7);
    let mut coeff_err: f64 = 0.0;
    let mut plane_err: f64 = 0.0;
    for &(n, d, m) in &[(2, 1, 1), (2, 1, 2), (3, 2, 1), (4, 3, 1)] {
        let mut done = 0;
        while done < 100 {
            let jet = random_jet(&mut r, n, d, m);
            let tilt = (DMatrix::identity(n, n) + uniform(&mut r, n, n) * 0.3).qr().q();
            let other = jet.frame.rotated(&tilt).unwrap();
            if compatible(&jet, &other).unwrap().normalized_det < 0.2 {
                continue;
            }
            let there = realize_jet(&jet, &other).unwrap();
            let back = realize_jet(&there, &jet.frame).unwrap();
            coeff_err = coeff_err.max((back.poly.coeffs() - jet.poly.coeffs()).amax());
            plane_err = plane_err.max(grass_dist(&jet.tangent_plane().unwrap(), &there.tangent_plane().unwrap()));
            done += 1;
        }
    }
    println!("round trip: coefficients {coeff_err:.2e}, tangent planes {plane_err:.2e}");
    assert!(coeff_err <= 1e-9, "{coeff_err}");
    assert!(plane_err <= 1e-8, "{plane_err}");
}

/// A small noisy curve or surface with one configuration of `(n, d, m)`.
#[derive(Clone, Debug)]
struct Cloud {
    points: Vec<Vec<f64>>,
    d: usize,
    m: usize,
}

impl Cloud {
    fn set(&self) -> Arc<SampledSet> {
        Arc::new(SampledSet::new(self.points.iter().map(|p| DVector::from_vec(p.clone())).collect()).unwrap())
    }

    fn bundle(&self) -> MBundle {
        initial_bundle(self.set(), self.d, self.m, None).unwrap()
    }
}

fn cloud() -> impl Strategy<Value = Cloud> {
    (0usize..3, 1usize..=2, 5usize..=12, any::<u64>()).prop_map(|(shape, m, count, seed)| {
        let mut r = rng(seed);
        let (n, d) = [(2, 1), (3, 1), (3, 2)][shape];
        let coef: Vec<f64> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
        let noise = if r.gen_bool(0.5) { 0.0 } else { 0.02 };
        let points = (0..count)
            .map(|_| {
                let u: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..1.0)).collect();
                let s: f64 = u.iter().sum();
                let mut p = u.clone();
                for l in 0..n - d {
                    p.push(coef[2 * l] * s + coef[2 * l + 1] * s * s + r.gen_range(-1.0..1.0) * noise);
                }
                p
            })
            .collect();
        Cloud { points, d, m }
    })
}

fn invariant_config() -> RefinementConfig {
    RefinementConfig::default().with_scales(RefinementConfig::geometric(0.5, 3, 0.5))
}

fn runner(seed: u8) -> TestRunner {
    let config = Config { cases: 1000, failure_persistence: Some(Box::new(FileFailurePersistence::Off)), ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn spaces_agree(a: Option<&AffineSpace>, b: Option<&AffineSpace>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => a.dim() == b.dim() && a.contains_space(b, 1e-9) && b.contains_space(a, 1e-9),
        _ => false,
    }
}

fn nested(outer: &MBundle, inner: &MBundle) -> Result<(), TestCaseError> {
    for i in 0..outer.len() {
        for q in 0..outer.frames().len() {
            let (o, n) = (outer.fiber(i, q), inner.fiber(i, q));
            match (o.space(), n.space()) {
                (_, None) => {}
                (None, Some(_)) => return Err(TestCaseError::fail(format!("fiber ({i},{q}) revived"))),
                (Some(a), Some(b)) => {
                    prop_assert!(a.contains_space(b, 1e-8), "fiber ({i},{q}) grew");
                    prop_assert!(b.dim() <= a.dim());
                }
            }
        }
    }
    Ok(())
}

#[test]
fn refinement_invariant_suite() {
    let cfg = invariant_config();

    runner(1)
        .run(&cloud(), |c| {
            let b0 = c.bundle();
            let b1 = refine_once(&b0, &cfg).unwrap();
            let b2 = refine_once(&b1, &cfg).unwrap();
            nested(&b0, &b1)?;
            nested(&b1, &b2)
        })
        .unwrap();

    runner(2)
        .run(&cloud(), |c| {
            let b0 = c.bundle();
            let b1 = refine_once(&b0, &cfg).unwrap();
            for i in 0..b0.len() {
                for q in 0..b0.frames().len() {
                    let before = b0.fiber(i, q).dim().map_or(-1, |v| v as i64);
                    let after = b1.fiber(i, q).dim().map_or(-1, |v| v as i64);
                    prop_assert!(after <= before);
                }
            }
            Ok(())
        })
        .unwrap();

    runner(3)
        .run(&cloud(), |c| {
            let b0 = c.bundle();
            let full = full_bundle(c.set(), c.d, c.m, b0.frames().to_vec()).unwrap();
            let next = refine_once(&full, &cfg).unwrap();
            for i in 0..full.len() {
                for q in 0..full.frames().len() {
                    prop_assert!(spaces_agree(full.fiber(i, q).space(), next.fiber(i, q).space()));
                }
            }
            Ok(())
        })
        .unwrap();

    let far = 2.0 * cfg.scales[0];
    runner(4)
        .run(&(cloud(), any::<u64>()), |(c, seed)| {
            let mut r = rng(seed);
            let x0 = DVector::from_vec(c.points[0].clone());
            let mut moved = c.clone();
            for p in moved.points.iter_mut().skip(1) {
                let v = DVector::from_vec(p.clone());
                if (&v - &x0).norm() <= far {
                    continue;
                }
                let mut w = &v + DVector::from_fn(v.len(), |_, _| r.gen_range(-0.5..0.5));
                let off = &w - &x0;
                if off.norm() <= far {
                    w = &x0 + off.normalize() * (far * 1.01);
                }
                *p = w.iter().copied().collect();
            }
            let a = refine_once(&c.bundle(), &cfg).unwrap();
            let b = refine_once(&moved.bundle(), &cfg).unwrap();
            for q in 0..a.frames().len() {
                prop_assert!(spaces_agree(a.fiber(0, q).space(), b.fiber(0, q).space()), "frame {q}");
            }
            Ok(())
        })
        .unwrap();

    runner(5)
        .run(&(cloud(), any::<u64>()), |(c, seed)| {
            let mut r = rng(seed);
            let b = c.bundle();
            let set = b.set().clone();
            let cluster: Vec<usize> = set.ball(0, 0.6).into_iter().map(|(j, _)| j).filter(|&j| j != 0).take(2).collect();
            prop_assume!(!cluster.is_empty());
            let mut shuffled = b.clone();
            for &i in std::iter::once(&0).chain(&cluster) {
                for q in 0..b.frames().len() {
                    let f = b.fiber(i, q);
                    let s = f.space().unwrap();
                    let k = s.dim();
                    let shift = &s.basis * DVector::from_fn(k, |_, _| r.gen_range(-1.0..1.0));
                    let space = AffineSpace { base: &s.base + shift, basis: &s.basis * random_orthogonal(&mut r, k) };
                    shuffled = shuffled.with_fiber(i, q, f.with_space(Some(space)));
                }
            }
            for q in 0..b.frames().len() {
                let f0 = b.fiber(0, q);
                let s0 = f0.space().unwrap();
                let p0 = f0.jet(&(&s0.base + &s0.basis * DVector::from_fn(s0.dim(), |_, _| r.gen_range(-1.0..1.0))));
                match (qmin(&b, q, 0, &p0, &cluster), qmin(&shuffled, q, 0, &p0, &cluster)) {
                    (Ok(u), Ok(v)) => prop_assert!(
                        (u.value - v.value).abs() <= 1e-8 * u.value.abs().max(1e-12),
                        "{} vs {}",
                        u.value,
                        v.value
                    ),
                    (Err(_), Err(_)) => {}
                    (u, v) => return Err(TestCaseError::fail(format!("{:?} vs {:?}", u.is_ok(), v.is_ok()))),
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn smooth_graph_oracle() {
    let cases: [(&str, usize); 5] =
        [("line", 2000), ("parabola_sheet", 60), ("helix", 2000), ("torus_patch", 60), ("rotated_plane", 30)];
    for (name, count) in cases {
        let g = Analytic::parse(name).unwrap();
        let (pts, params) = g.sample(&vec![count; g.d()]).unwrap();
        let set = Arc::new(SampledSet::new(pts).unwrap());
        let bundle = initial_bundle(set, g.d(), 2, None).unwrap();
        let stable = refine_to_stable(&bundle, &RefinementConfig::default()).unwrap();
        assert!(stable.report.stabilized, "{name} did not stabilize");
        let decision = decide(&stable.bundle, &TopologyConfig::default(), &[]).unwrap();
        assert_eq!(decision.verdict, Verdict::Yes, "{name}");
        let (fibers, _) = all_gr_fibers(&stable.bundle, &GrFiberOptions::default());
        let good = fibers
            .iter()
            .zip(&params)
            .filter(|(f, u)| {
                f.as_ref().and_then(|f| f.plane()).is_some_and(|p| grass_dist(&p, &g.tangent(u)) <= 1e-5)
            })
            .count();
        let share = good as f64 / params.len() as f64;
        println!("{name}: {good}/{} tangents within 1e-5", params.len());
        assert!(share >= 0.99, "{name}: {share}");
    }
}

#[test]
fn pasting_invariants() {
    let cfg = PacketConfig::default();
    let ex = paste_example("two_lines", &cfg).unwrap();
    let mut miss: f64 = 0.0;
    for e in &ex.samples {
        let g = ex.packet.glue_near(e).unwrap().expect("sample lies in the glued region");
        miss = miss.max((g.point() - e).norm());
    }
    assert!(miss <= 1e-6, "containment {miss:e}");

    let c0 = cfg.c0;
    let start = DVector::from_vec(vec![-4.0 * c0.cos(), -4.0 * c0.sin()]) * cfg.delta0;
    let curve = ex.packet.trace_curve(&start, 1e-3, 8000).unwrap();
    assert!(curve.len() > 7000);
    let pts: Vec<DVector<f64>> = curve.iter().map(GluedPoint::point).collect();
    let dirs: Vec<DVector<f64>> = pts.windows(2).map(|w| (&w[1] - &w[0]).normalize()).collect();
    let jump = dirs.windows(2).map(|w| (&w[1] - &w[0]).norm()).fold(0.0, f64::max);
    assert!(jump <= 1e-3, "tangent jump {jump:e}");

    let circle = paste_example("circle", &cfg).unwrap();
    let patch = circle.packet.patches()[4].clone();
    let single = CylinderPacket::new(vec![patch.clone()], cfg.clone()).unwrap();
    let mut drift: f64 = 0.0;
    for s in [-2.5, -1.0, 0.0, 0.7, 2.0] {
        let on = patch.graph_point(&DVector::from_element(1, s));
        drift = drift.max((single.glue_near(&on).unwrap().unwrap().point() - on).norm());
    }
    assert!(drift <= 1e-12, "idempotence {drift:e}");

    let fan = paste_example("plane_fan", &cfg).unwrap();
    let set = Arc::new(SampledSet::new(fan.samples.clone()).unwrap());
    let bundle = initial_bundle(set, 2, 1, None).unwrap();
    let stable = refine_to_stable(&bundle, &RefinementConfig::default()).unwrap();
    let mut residual: f64 = 0.0;
    let mut checked = 0;
    for (i, x) in fan.samples.iter().enumerate() {
        let base = fan.packet.project_to_mput(x).unwrap();
        for (q, frame) in stable.bundle.frames().iter().enumerate() {
            let fiber = stable.bundle.fiber(i, q);
            let Some(space) = fiber.space() else { continue };
            let Ok(jet) = fan.packet.glued_jet(&base, frame, 1e-4) else { continue };
            residual = residual.max(space.distance(&jet.recentered(fiber.center()).flat()));
            checked += 1;
        }
    }
    println!("fan membership residual {residual:.2e} over {checked} fibers");
    assert!(checked >= fan.samples.len());
    assert!(residual <= 1e-6, "{residual:e}");
}

#[test]
fn align_frames_is_lipschitz() {
    let mut r = rng(11);
    for n in 2..=6 {
        for d in 1..=3.min(n - 1) {
            let mut c: f64 = 0.0;
            let mut exact: f64 = 0.0;
            let mut pairs = 0;
            while pairs < 200 {
                let q = random_orthogonal(&mut r, n);
                let w = GrPlane::from_orthonormal(&q.columns(0, d).into_owned());
                let target = 0.3 * 10f64.powf(-r.gen_range(0.0..4.0));
                let tilt = uniform(&mut r, n - d, d);
                let tilt = &tilt * (target.asin().tan() / tilt.norm());
                let moved = q.columns(0, d) + q.columns(d, n - d) * tilt;
                let w2 = GrPlane::from_basis(&moved).unwrap();
                let dist = grass_dist(&w, &w2);
                if dist > 0.3 || dist == 0.0 {
                    continue;
                }
                let rot = align_frames(&w, &w2, ALIGN_EPS0).unwrap();
                let gap = (&rot - DMatrix::identity(n, n)).norm();
                c = c.max(gap / dist);
                let image = &rot * w2.projection() * rot.transpose();
                exact = exact.max((image - w.projection()).amax());
                pairs += 1;
            }
            println!("(n, d) = ({n}, {d}): C = {c:.3}, Q W' vs W {exact:.1e}");
            assert!(c <= 4.0, "({n},{d}) C = {c}");
            assert!(exact <= 1e-9, "({n},{d}) {exact:e}");
        }
    }
}
