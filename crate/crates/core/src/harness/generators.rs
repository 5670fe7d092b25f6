use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_integer::gcd;
use serde::{Deserialize, Serialize};

use crate::bundles::SampledSet;
use crate::error::{Error, Result};
use crate::geometry::GrPlane;

/// Named sample generator with per-parameter counts.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GeneratorSpec {
    pub name: String,
    #[serde(default)]
    pub density: BTreeMap<String, usize>,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), density: BTreeMap::new(), seed: 0 }
    }

    pub fn with(mut self, key: &str, count: usize) -> Self {
        self.density.insert(key.to_string(), count);
        self
    }

    fn count(&self, key: &str, default: usize) -> usize {
        self.density.get(key).copied().unwrap_or(default)
    }

    /// Manifold dimension the named set is usually tested against.
    pub fn default_d(&self) -> Option<usize> {
        match self.name.as_str() {
            "E1" | "E2" | "iota_E1" | "iota_E2" => Some(3),
            "dirichlet_graph" | "circle" => Some(1),
            other => Analytic::parse(other.strip_prefix("graph_of:").unwrap_or(other)).map(Analytic::d),
        }
    }

    /// Radius schedule matched to the strip's `s`-spacing; `None` leaves the choice to the engine.
    pub fn suggested_scales(&self) -> Option<Vec<f64>> {
        match self.name.as_str() {
            "E1" | "E2" | "iota_E1" | "iota_E2" => {
                let s = self.count("s", 8).max(2);
                Some(crate::refinement::RefinementConfig::geometric(1.05 / (s - 1) as f64, 8, 0.5))
            }
            _ => None,
        }
    }

    /// The boundary circle of a strip-disk set, as sample indices.
    pub fn default_loop(&self) -> Option<Vec<usize>> {
        match self.name.as_str() {
            "E1" | "E2" | "iota_E1" | "iota_E2" => Some(boundary_loop(self.count("t", 128), self.count("s", 8))),
            _ => None,
        }
    }
}

/// Loops need at least this many samples to resolve monodromy.
pub const MIN_LOOP_SAMPLES: usize = 64;

/// Which half-angle twist the Möbius-type strip carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Twist {
    Half,
    Full,
}

impl Twist {
    fn factor(self) -> f64 {
        match self {
            Twist::Half => 0.5,
            Twist::Full => 1.0,
        }
    }
}

/// Unit disk in the `x₁x₂`-plane plus a strip attached along its boundary circle.
pub fn strip_disk(twist: Twist, t_count: usize, s_count: usize, disk: usize, lift: bool) -> Result<Vec<DVector<f64>>> {
    if t_count < MIN_LOOP_SAMPLES {
        return Err(Error::Input(format!("t density must be at least {MIN_LOOP_SAMPLES}")));
    }
    if s_count < 2 {
        return Err(Error::Input("s density must be at least 2".into()));
    }
    let n = if lift { 5 } else { 4 };
    let w = twist.factor();
    let mut pts = Vec::with_capacity(t_count * s_count + disk);
    for k in 0..t_count {
        let t = TAU * k as f64 / t_count as f64;
        for j in 0..s_count {
            let s = j as f64 / (s_count - 1) as f64;
            let mut p = DVector::zeros(n);
            p[0] = t.cos();
            p[1] = t.sin();
            p[2] = s * (w * t).cos();
            p[3] = s * (w * t).sin();
            pts.push(p);
        }
    }
    for p in sunflower(disk) {
        let mut q = DVector::zeros(n);
        q[0] = p.0;
        q[1] = p.1;
        pts.push(q);
    }
    Ok(pts)
}

/// `count` points spread over the open unit disk.
pub fn sunflower(count: usize) -> Vec<(f64, f64)> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let r = ((k as f64 + 0.5) / count as f64).sqrt();
            let a = golden * k as f64;
            (r * a.cos(), r * a.sin())
        })
        .collect()
}

/// Samples of the boundary circle inside a strip-disk cloud, in angular order.
pub fn boundary_loop(t_count: usize, s_count: usize) -> Vec<usize> {
    (0..t_count).map(|k| k * s_count).collect()
}

/// Reduced fractions `p/q ∈ [0, 1]` with `q ≤ max_den`, ascending.
pub fn farey(max_den: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for q in 1..=max_den {
        for p in 0..=q {
            if gcd(p, q) == 1 {
                out.push(p as f64 / q as f64);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Dirichlet function samples `(x, f(x))`: Farey fractions map to 1, and the golden
/// section of every gap between consecutive fractions maps to 0.
pub fn dirichlet(max_den: usize) -> Vec<(f64, f64)> {
    let section = (3.0 - 5f64.sqrt()) / 2.0;
    let rationals = farey(max_den);
    let mut pts: Vec<(f64, f64)> = rationals.iter().map(|&x| (x, 1.0)).collect();
    pts.extend(rationals.windows(2).map(|w| (w[0] + section * (w[1] - w[0]), 0.0)));
    pts
}

/// Analytic embedded graphs with known tangent planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analytic {
    /// A line in ℝ³.
    Line,
    /// `z = u² + v²/2` over a square.
    ParabolaSheet,
    /// `(cos t, sin t, t/2)`.
    Helix,
    /// A patch of the torus with radii 2 and 1.
    TorusPatch,
    /// A 2-plane in ℝ⁴ in general position.
    RotatedPlane,
    /// The parabola `y = x²` in ℝ².
    Parabola,
}

impl Analytic {
    pub const ALL: [Analytic; 6] = [
        Analytic::Line,
        Analytic::ParabolaSheet,
        Analytic::Helix,
        Analytic::TorusPatch,
        Analytic::RotatedPlane,
        Analytic::Parabola,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Analytic::Line => "line",
            Analytic::ParabolaSheet => "parabola_sheet",
            Analytic::Helix => "helix",
            Analytic::TorusPatch => "torus_patch",
            Analytic::RotatedPlane => "rotated_plane",
            Analytic::Parabola => "parabola",
        }
    }

    pub fn n(self) -> usize {
        match self {
            Analytic::Line | Analytic::ParabolaSheet | Analytic::Helix | Analytic::TorusPatch => 3,
            Analytic::RotatedPlane => 4,
            Analytic::Parabola => 2,
        }
    }

    pub fn d(self) -> usize {
        match self {
            Analytic::Line | Analytic::Helix | Analytic::Parabola => 1,
            _ => 2,
        }
    }

    /// Parameter box `[lo, hi]` per parameter.
    pub fn domain(self) -> Vec<(f64, f64)> {
        match self {
            Analytic::Line => vec![(0.0, 1.0)],
            Analytic::ParabolaSheet => vec![(-0.4, 0.4), (-0.5, 0.5)],
            Analytic::Helix => vec![(0.0, 2.0 * PI)],
            Analytic::TorusPatch => vec![(0.0, PI / 48.0), (0.0, PI / 16.0)],
            Analytic::RotatedPlane => vec![(-0.5, 0.5), (-0.5, 0.5)],
            Analytic::Parabola => vec![(-1.0, 1.0)],
        }
    }

    pub fn point(self, u: &[f64]) -> DVector<f64> {
        match self {
            Analytic::Line => DVector::from_vec(vec![u[0], 0.5 * u[0] + 0.1, -0.3 * u[0]]),
            Analytic::ParabolaSheet => DVector::from_vec(vec![u[0], u[1], u[0] * u[0] + 0.5 * u[1] * u[1]]),
            Analytic::Helix => DVector::from_vec(vec![u[0].cos(), u[0].sin(), 0.5 * u[0]]),
            Analytic::TorusPatch => {
                let r = 2.0 + u[1].cos();
                DVector::from_vec(vec![r * u[0].cos(), r * u[0].sin(), u[1].sin()])
            }
            Analytic::RotatedPlane => rotated_plane_basis() * DVector::from_vec(vec![u[0], u[1]]),
            Analytic::Parabola => DVector::from_vec(vec![u[0], u[0] * u[0]]),
        }
    }

    /// Columns span the tangent plane at parameter `u`.
    pub fn tangent_basis(self, u: &[f64]) -> DMatrix<f64> {
        match self {
            Analytic::Line => DMatrix::from_column_slice(3, 1, &[1.0, 0.5, -0.3]),
            Analytic::ParabolaSheet => DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 2.0 * u[0], 0.0, 1.0, u[1]]),
            Analytic::Helix => DMatrix::from_column_slice(3, 1, &[-u[0].sin(), u[0].cos(), 0.5]),
            Analytic::TorusPatch => {
                let r = 2.0 + u[1].cos();
                DMatrix::from_column_slice(
                    3,
                    2,
                    &[-r * u[0].sin(), r * u[0].cos(), 0.0, -u[1].sin() * u[0].cos(), -u[1].sin() * u[0].sin(), u[1].cos()],
                )
            }
            Analytic::RotatedPlane => rotated_plane_basis(),
            Analytic::Parabola => DMatrix::from_column_slice(2, 1, &[1.0, 2.0 * u[0]]),
        }
    }

    pub fn tangent(self, u: &[f64]) -> GrPlane {
        GrPlane::from_basis(&self.tangent_basis(u)).expect("analytic tangent has full rank")
    }

    /// Tensor grid with `counts[i]` samples along parameter `i`; returns points and parameters.
    pub fn sample(self, counts: &[usize]) -> Result<(Vec<DVector<f64>>, Vec<Vec<f64>>)> {
        let dom = self.domain();
        if counts.len() != dom.len() || counts.iter().any(|&c| c < 2) {
            return Err(Error::Input(format!("{} needs {} counts of at least 2", self.name(), dom.len())));
        }
        let mut params = vec![Vec::new()];
        for (&(lo, hi), &c) in dom.iter().zip(counts) {
            let axis: Vec<f64> = (0..c).map(|k| lo + (hi - lo) * k as f64 / (c - 1) as f64).collect();
            params = params
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        let pts = params.iter().map(|u| self.point(u)).collect();
        Ok((pts, params))
    }
}

fn rotated_plane_basis() -> DMatrix<f64> {
    let raw = DMatrix::from_column_slice(4, 2, &[1.0, 0.4, -0.2, 0.3, 0.1, 1.0, 0.5, -0.4]);
    crate::geometry::gram_schmidt(&raw, 1e-12)
}

pub fn circle(count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let t = TAU * k as f64 / count as f64;
            DVector::from_vec(vec![t.cos(), t.sin()])
        })
        .collect()
}

/// Appends a zero coordinate.
pub fn iota(p: &DVector<f64>) -> DVector<f64> {
    let mut q = DVector::zeros(p.len() + 1);
    q.rows_mut(0, p.len()).copy_from(p);
    q
}

/// Points of the named set, before indexing.
pub fn generate_points(spec: &GeneratorSpec) -> Result<Vec<DVector<f64>>> {
    let strip = |twist, lift| {
        strip_disk(twist, spec.count("t", 128), spec.count("s", 8), spec.count("disk", 400), lift)
    };
    match spec.name.as_str() {
        "E1" => strip(Twist::Half, false),
        "E2" => strip(Twist::Full, false),
        "iota_E1" => strip(Twist::Half, true),
        "iota_E2" => strip(Twist::Full, true),
        "dirichlet_graph" => Ok(dirichlet(spec.count("denominator", 50))
            .into_iter()
            .map(|(x, y)| DVector::from_vec(vec![x, y]))
            .collect()),
        "circle" => {
            let count = spec.count("count", 100);
            if count < 3 {
                return Err(Error::Input("circle needs at least 3 samples".into()));
            }
            Ok(circle(count))
        }
        other => {
            let name = other.strip_prefix("graph_of:").unwrap_or(other);
            let g = Analytic::parse(name).ok_or_else(|| Error::Input(format!("unknown generator {other}")))?;
            let counts: Vec<usize> = (0..g.d()).map(|i| spec.count(&format!("u{i}"), 40)).collect();
            Ok(g.sample(&counts)?.0)
        }
    }
}

/// Indexed sample of the named set.
pub fn generate(spec: &GeneratorSpec) -> Result<SampledSet> {
    SampledSet::new(generate_points(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_points_satisfy_defining_equations() {
        let pts = strip_disk(Twist::Half, 64, 8, 200, false).unwrap();
        assert_eq!(pts.len(), 64 * 8 + 200);
        for p in &pts[..64 * 8] {
            let t = p[1].atan2(p[0]).rem_euclid(TAU);
            assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12);
            let s = (p[2] * p[2] + p[3] * p[3]).sqrt();
            assert!((p[2] - s * (t / 2.0).cos()).abs() < 1e-12 && (p[3] - s * (t / 2.0).sin()).abs() < 1e-12);
        }
        for p in &pts[64 * 8..] {
            assert!(p[0] * p[0] + p[1] * p[1] < 1.0 && p[2] == 0.0 && p[3] == 0.0);
        }
    }

    #[test]
    fn dirichlet_values_alternate_along_the_line() {
        let mut pts = dirichlet(12);
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(pts.len(), 2 * farey(12).len() - 1);
        assert!(pts.windows(2).all(|w| w[0].1 != w[1].1));
    }

    #[test]
    fn farey_counts() {
        assert_eq!(farey(1), vec![0.0, 1.0]);
        assert_eq!(farey(3).len(), 5);
    }

    #[test]
    fn unknown_generator_is_an_input_error() {
        assert!(matches!(generate(&GeneratorSpec::new("nope")), Err(Error::Input(_))));
    }

    #[test]
    fn analytic_points_match_tangents() {
        for g in Analytic::ALL {
            let u: Vec<f64> = g.domain().iter().map(|(lo, hi)| 0.3 * lo + 0.7 * hi).collect();
            let h = 1e-6;
            let tb = g.tangent_basis(&u);
            for i in 0..u.len() {
                let mut up = u.clone();
                up[i] += h;
                let fd = (g.point(&up) - g.point(&u)) / h;
                assert!((fd - tb.column(i)).norm() < 1e-5, "{}", g.name());
            }
        }
    }
}
