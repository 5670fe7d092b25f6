use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::qmin::{assemble, reduce, Member, Reduced, COINCIDENT_TOL};
use super::RefinementConfig;
use crate::linalg::thin_svd;
use crate::bundles::{AffineJetFiber, AffineSpace, MBundle};

/// Outcome of the limit test at one `(sample, frame)`.
#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Survives,
    Culled,
    /// The selected jet is steeper than the slope limit; a better-conditioned frame exists.
    Steep,
    /// No neighbour at any scale; the fiber is kept as is.
    Vacuous,
    /// The fiber was already EMPTY.
    Empty,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleReport {
    pub radius: f64,
    pub clusters: usize,
    /// Largest `𝒬_min` over the clusters at this scale, at the selected anchor jet.
    pub qmin: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct QminReport {
    pub sample: usize,
    pub frame: usize,
    pub kbar: usize,
    pub scales: Vec<ScaleReport>,
    /// Log-log slope of `δ^{2(m-1)}·𝒬_min`, the quantity the verdict is judged on.
    pub decay_slope: Option<f64>,
    pub verdict: Verdict,
    /// Flat coefficients of the minimizing anchor jet, then of the worst finest-scale cluster's jets.
    pub witnesses: Vec<Vec<f64>>,
    pub dim_before: Option<usize>,
    pub dim_after: Option<usize>,
}

/// One generation step with per-fiber reports.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub bundle: MBundle,
    pub reports: Vec<QminReport>,
}

struct ScaleClusters {
    scale: usize,
    forms: Vec<Reduced>,
    members: Vec<Vec<usize>>,
    degenerate: bool,
    /// Some cluster holds a sample with no jet in any frame.
    blocked: bool,
}

/// One Glaeser refinement step.
pub fn refine_once(bundle: &MBundle, config: &RefinementConfig) -> crate::Result<MBundle> {
    Ok(refine_once_detailed(bundle, config)?.bundle)
}

/// [`refine_once`] keeping the limit-test report of every fiber.
pub fn refine_once_detailed(bundle: &MBundle, config: &RefinementConfig) -> crate::Result<Refinement> {
    config.validate()?;
    let scales = config.resolve_scales(bundle.set());
    let nframes = bundle.frames().len();
    let rows: Vec<(Vec<AffineJetFiber>, Vec<QminReport>)> = (0..bundle.len())
        .into_par_iter()
        .map(|i| {
            let neighbours = bundle.set().ball(i, scales[0]);
            (0..nframes).map(|q| refine_fiber(bundle, config, &scales, i, q, &neighbours)).unzip()
        })
        .collect();
    let mut fibers = Vec::with_capacity(rows.len());
    let mut reports = Vec::with_capacity(rows.len() * nframes);
    for (f, r) in rows {
        fibers.push(f);
        reports.extend(r);
    }
    Ok(Refinement { bundle: bundle.next_generation(fibers), reports })
}

fn refine_fiber(
    bundle: &MBundle,
    cfg: &RefinementConfig,
    scales: &[f64],
    i: usize,
    q: usize,
    neighbours: &[(usize, f64)],
) -> (AffineJetFiber, QminReport) {
    let fiber = bundle.fiber(i, q);
    let mut report = QminReport {
        sample: i,
        frame: q,
        kbar: cfg.kbar,
        scales: scales.iter().map(|&radius| ScaleReport { radius, clusters: 0, qmin: None }).collect(),
        decay_slope: None,
        verdict: Verdict::Empty,
        witnesses: Vec::new(),
        dim_before: fiber.dim(),
        dim_after: fiber.dim(),
    };
    let Some(space) = fiber.space() else {
        return (fiber.clone(), report);
    };
    let live: Vec<(usize, f64)> = neighbours.iter().copied().filter(|&(j, _)| !bundle.fiber(j, q).is_empty()).collect();
    let c0 = fiber.center();
    let coincident = live.iter().any(|&(j, _)| {
        let cj = bundle.fiber(j, q).center();
        (c0 - cj).norm() <= COINCIDENT_TOL * (1.0 + c0.norm().max(cj.norm()))
    });
    if coincident {
        report.verdict = Verdict::Culled;
        report.dim_after = None;
        return (fiber.with_space(None), report);
    }
    let (mut gathered, finest) = gather(bundle, cfg, scales, i, q, neighbours);
    for sc in &gathered {
        report.scales[sc.scale].clusters = sc.forms.len() + usize::from(sc.degenerate || sc.blocked);
    }
    if finest.is_none() || gathered.first().map(|sc| sc.scale) != finest {
        report.verdict = Verdict::Vacuous;
        return (fiber.clone(), report);
    }
    if gathered[0].blocked {
        report.scales[gathered[0].scale].qmin = Some(f64::INFINITY);
        report.verdict = Verdict::Culled;
        report.dim_after = None;
        return (fiber.with_space(None), report);
    }
    gathered.retain(|sc| sc.degenerate || !sc.forms.is_empty());
    if gathered.iter().any(|sc| sc.degenerate) {
        for sc in &gathered {
            report.scales[sc.scale].qmin = Some(f64::INFINITY);
        }
        report.verdict = Verdict::Culled;
        report.dim_after = None;
        return (fiber.with_space(None), report);
    }

    let shrink = bundle.generation() == 0;
    let terms = fiber.indices().len();
    let orders: Vec<i32> = (0..terms * fiber.codim()).map(|k| fiber.indices().order(k % terms) as i32).collect();
    let (a_star, free) = pin(&gathered, space, &orders, scales, cfg);
    let values: Vec<f64> = gathered
        .iter()
        .map(|sc| sc.forms.iter().map(|f| f.value(&a_star)).fold(0.0, f64::max))
        .collect();
    for (sc, &v) in gathered.iter().zip(&values) {
        report.scales[sc.scale].qmin = Some(v);
    }
    let radii: Vec<f64> = gathered.iter().map(|sc| scales[sc.scale]).collect();
    let power = 2 * (fiber.m() as i32 - 1);
    let scaled: Vec<f64> = values.iter().zip(&radii).map(|(v, r)| v * r.powi(power)).collect();
    report.decay_slope = decay_slope(&radii, &scaled);
    let survives = judge(&scaled, radii[0], report.decay_slope, cfg);

    let anchor_flat = space.at(&a_star);
    report.witnesses.push(anchor_flat.iter().copied().collect());
    if let Some(w) = finest_witnesses(bundle, q, i, &anchor_flat, &gathered[0], &a_star) {
        report.witnesses.extend(w);
    }

    if survives && max_gradient_entry(fiber, &anchor_flat) > cfg.max_slope {
        report.verdict = Verdict::Steep;
        report.dim_after = None;
        return (fiber.with_space(None), report);
    }
    if !survives {
        report.verdict = Verdict::Culled;
        report.dim_after = None;
        return (fiber.with_space(None), report);
    }
    report.verdict = Verdict::Survives;
    if !shrink {
        return (fiber.clone(), report);
    }
    let basis = &space.basis * &free;
    let new_space = AffineSpace { base: anchor_flat, basis };
    report.dim_after = Some(new_space.dim());
    (fiber.with_space(Some(new_space)), report)
}

fn max_gradient_entry(fiber: &AffineJetFiber, flat: &DVector<f64>) -> f64 {
    if fiber.m() == 0 {
        return 0.0;
    }
    let terms = fiber.indices().len();
    (0..fiber.codim())
        .flat_map(|l| (1..=fiber.d()).map(move |i| flat[l * terms + i].abs()))
        .fold(0.0, f64::max)
}

/// Reduced forms for every informative scale, finest first. Clusters are drawn from
/// the sample geometry alone, so they repeat across generations. A cluster with a
/// member that is EMPTY in every frame blocks its scale; one that is EMPTY only in
/// this frame is dropped. A scale is informative when its annulus is nonempty, its
/// ball holds a full cluster and at least one cluster is left or it is blocked.
/// Also returns the finest scale that would be informative with every neighbour present.
fn gather(
    bundle: &MBundle,
    cfg: &RefinementConfig,
    scales: &[f64],
    i: usize,
    q: usize,
    neighbours: &[(usize, f64)],
) -> (Vec<ScaleClusters>, Option<usize>) {
    let fiber = bundle.fiber(i, q);
    let space = fiber.space().expect("caller checked");
    let mut out = Vec::new();
    let mut finest = None;
    for s in (0..scales.len()).rev() {
        let outer = scales[s];
        let inner = scales.get(s + 1).copied().unwrap_or(0.0);
        let ball: Vec<usize> = neighbours.iter().take_while(|&&(_, r)| r <= outer).map(|&(j, _)| j).collect();
        let annulus: Vec<usize> = neighbours.iter().filter(|&&(_, r)| r > inner && r <= outer).map(|&(j, _)| j).collect();
        if annulus.is_empty() || ball.len() < cfg.kbar {
            continue;
        }
        finest.get_or_insert(s);
        let picks: Vec<usize> = if annulus.len() <= cfg.cluster_budget {
            annulus.clone()
        } else {
            (0..cfg.cluster_budget).map(|k| annulus[k * annulus.len() / cfg.cluster_budget]).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed(cfg.seed, i, q, s));
        let mut sc =
            ScaleClusters { scale: s, forms: Vec::new(), members: Vec::new(), degenerate: false, blocked: false };
        for (c, &p) in picks.iter().enumerate() {
            let pool: Vec<usize> = ball.iter().copied().filter(|&j| j != p).collect();
            let want = cfg.kbar - 1;
            let mut cluster = vec![p];
            if c == 0 {
                cluster.extend(pool.iter().take(want));
            } else {
                cluster.extend(sample_indices(&mut rng, pool.len(), want).into_iter().map(|k| pool[k]));
            }
            if cluster.iter().any(|&j| !bundle.has_nonempty_fiber(j)) {
                sc.blocked = true;
                continue;
            }
            if cluster.iter().any(|&j| bundle.fiber(j, q).is_empty()) {
                continue;
            }
            let mut members = vec![Member { t: fiber.center(), space }];
            for &j in &cluster {
                let fj = bundle.fiber(j, q);
                members.push(Member { t: fj.center(), space: fj.space().expect("checked nonempty") });
            }
            match assemble(fiber.indices(), fiber.codim(), &members) {
                Ok(asm) => {
                    sc.forms.push(reduce(&asm));
                    sc.members.push(cluster);
                }
                Err(_) => {
                    sc.degenerate = true;
                    break;
                }
            }
        }
        if sc.degenerate || sc.blocked || !sc.forms.is_empty() {
            out.push(sc);
        }
    }
    (out, finest)
}

/// Singular values below this multiple of a form's roundoff scale are treated as zero.
const ELIMINATION_NOISE: f64 = 1e-13;

/// Finest-first least squares for the anchor coordinates. Returns the solution
/// and an orthonormal basis of the directions no scale could pin. At radius `δ`
/// a coefficient of order `k` is measured in units of `δ^{1-k}` before the cutoff.

fn pin(
    gathered: &[ScaleClusters],
    space: &AffineSpace,
    orders: &[i32],
    scales: &[f64],
    cfg: &RefinementConfig,
) -> (DVector<f64>, DMatrix<f64>) {
    let r0 = space.dim();
    let mut a = DVector::zeros(r0);
    let mut free = DMatrix::identity(r0, r0);
    for sc in gathered {
        let width = free.ncols();
        if width == 0 {
            break;
        }
        let delta = scales[sc.scale];
        let mut natural = &space.basis * &free;
        for (mut row, &k) in natural.row_iter_mut().zip(orders) {
            row *= delta.powi(k - 1);
        }
        let Some(unwhiten) = natural.qr().r().try_inverse() else {
            continue;
        };
        let total: usize = sc.forms.iter().map(|f| f.k.nrows()).sum();
        let height = total.max(width);
        let mut lhs = DMatrix::zeros(height, width);
        let mut rhs = DVector::zeros(height);
        let mut row = 0;
        for f in &sc.forms {
            let rows = f.k.nrows();
            lhs.rows_mut(row, rows).copy_from(&(&f.k * &free * &unwhiten));
            rhs.rows_mut(row, rows).copy_from(&(-(&f.k * &a + &f.c)));
            row += rows;
        }
        let svd = thin_svd(&lhs);
        let (u, vt) = (&svd.u, &svd.vt);
        let smax = svd.max();
        let roundoff = sc.forms.iter().map(|f| f.scale).fold(0.0, f64::max) * (&free * &unwhiten).norm();
        let cut = (cfg.pin_tol * smax).max(cfg.pin_floor).max(ELIMINATION_NOISE * roundoff);
        let mut y = DVector::zeros(width);
        let mut keep = Vec::new();
        for (k, &s) in svd.s.iter().enumerate() {
            let v = vt.row(k).transpose();
            if s > cut {
                y += v * (u.column(k).dot(&rhs) / s);
            } else {
                keep.push(v);
            }
        }
        if keep.len() == width {
            continue;
        }
        a += &free * (&unwhiten * y);
        free = if keep.is_empty() {
            DMatrix::zeros(r0, 0)
        } else {
            (&free * &unwhiten * DMatrix::from_columns(&keep)).qr().q()
        };
    }
    (a, free)
}

fn judge(values: &[f64], finest_radius: f64, slope: Option<f64>, cfg: &RefinementConfig) -> bool {
    let finest = values[0];
    let smooth = (cfg.curvature_allowance * finest_radius).powi(2);
    if finest <= cfg.qmin_threshold.max(smooth) {
        return true;
    }
    if finest > cfg.qmin_cap {
        return false;
    }
    match slope {
        None => true,
        Some(s) => s >= cfg.min_decay_slope,
    }
}

/// Least-squares slope of `log v` against `log δ`; `None` with fewer than two scales.
fn decay_slope(radii: &[f64], values: &[f64]) -> Option<f64> {
    if radii.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.max(1e-30).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn finest_witnesses(
    bundle: &MBundle,
    q: usize,
    i: usize,
    anchor_flat: &DVector<f64>,
    sc: &ScaleClusters,
    a_star: &DVector<f64>,
) -> Option<Vec<Vec<f64>>> {
    let worst = (0..sc.forms.len()).max_by(|&x, &y| sc.forms[x].value(a_star).total_cmp(&sc.forms[y].value(a_star)))?;
    let p0 = bundle.fiber(i, q).jet(anchor_flat);
    let r = super::qmin(bundle, q, i, &p0, &sc.members[worst]).ok()?;
    Some(r.witnesses.iter().map(|w| w.flat().iter().copied().collect()).collect())
}

fn task_seed(seed: u64, i: usize, q: usize, s: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [i as u64, q as u64, s as u64] {
        h = splitmix(h ^ v);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
