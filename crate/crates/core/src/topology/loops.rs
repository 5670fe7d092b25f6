use std::collections::{HashSet, VecDeque};

use crate::bundles::{GrFiber, SampledSet};
use crate::geometry::{grass_dist, GrPlane};

use super::monodromy::{LoopPath, JUMP_TOL};

/// Controls for [`find_candidate_loops`].
#[derive(Clone, Debug)]
pub struct LoopSearch {
    /// Edge radius of the neighbourhood graph; `None` uses `radius_factor` × the
    /// 90th-percentile nearest-neighbour distance.
    pub radius: Option<f64>,
    pub radius_factor: f64,
    pub max_loops: usize,
    pub min_len: usize,
    /// Cycles sharing at least this fraction of the shorter one collapse.
    pub overlap: f64,
}

impl Default for LoopSearch {
    fn default() -> Self {
        Self { radius: None, radius_factor: 1.5, max_loops: 16, min_len: 3, overlap: 0.8 }
    }
}

impl LoopSearch {
    pub fn graph_radius(&self, set: &SampledSet) -> f64 {
        if let Some(r) = self.radius {
            return r;
        }
        let mut nn: Vec<f64> = set.nearest_distances().into_iter().filter(|d| d.is_finite()).collect();
        if nn.is_empty() {
            return 0.0;
        }
        nn.sort_by(f64::total_cmp);
        let k = ((nn.len() as f64 * 0.9).ceil() as usize).clamp(1, nn.len()) - 1;
        self.radius_factor * nn[k]
    }
}

/// Cycles of the neighbourhood graph on singleton-fiber samples, longest first.
///
/// Edges join samples within the graph radius whose planes are closer than
/// [`JUMP_TOL`]. Cycles are the fundamental cycles of a breadth-first forest.
pub fn find_candidate_loops(set: &SampledSet, fibers: &[Option<GrFiber>], opts: &LoopSearch) -> Vec<LoopPath> {
    let planes: Vec<Option<GrPlane>> =
        fibers.iter().map(|f| f.as_ref().filter(|g| g.is_singleton()).and_then(GrFiber::plane)).collect();
    let radius = opts.graph_radius(set);
    let adj: Vec<Vec<usize>> = (0..set.len())
        .map(|i| {
            let Some(pi) = &planes[i] else { return Vec::new() };
            set.ball(i, radius)
                .into_iter()
                .map(|(j, _)| j)
                .filter(|&j| planes[j].as_ref().is_some_and(|pj| grass_dist(pi, pj) < JUMP_TOL))
                .collect()
        })
        .collect();

    let mut parent = vec![usize::MAX; set.len()];
    let mut depth = vec![0usize; set.len()];
    let mut seen = vec![false; set.len()];
    let mut cycles = Vec::new();
    for root in 0..set.len() {
        if seen[root] || planes[root].is_none() {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        let mut order = Vec::new();
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = u;
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for &u in &order {
            for &v in &adj[u] {
                if u < v && parent[v] != u && parent[u] != v {
                    let c = tree_cycle(u, v, &parent, &depth);
                    if c.len() >= opts.min_len {
                        cycles.push(canonical(c));
                    }
                }
            }
        }
    }
    cycles.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));

    let mut kept: Vec<(Vec<usize>, HashSet<usize>)> = Vec::new();
    for c in cycles {
        if kept.len() >= opts.max_loops {
            break;
        }
        let members: HashSet<usize> = c.iter().copied().collect();
        let duplicate = kept.iter().any(|(_, k)| {
            let shared = members.intersection(k).count() as f64;
            shared >= opts.overlap * members.len().min(k.len()) as f64
        });
        if !duplicate {
            kept.push((c, members));
        }
    }
    kept.into_iter()
        .filter_map(|(c, _)| {
            let f = c.iter().map(|&i| fibers[i].clone().expect("singleton")).collect();
            LoopPath::new(c, f).ok()
        })
        .collect()
}

fn tree_cycle(u: usize, v: usize, parent: &[usize], depth: &[usize]) -> Vec<usize> {
    let (mut a, mut b) = (u, v);
    let mut left = vec![a];
    let mut right = vec![b];
    while depth[a] > depth[b] {
        a = parent[a];
        left.push(a);
    }
    while depth[b] > depth[a] {
        b = parent[b];
        right.push(b);
    }
    while a != b {
        a = parent[a];
        b = parent[b];
        left.push(a);
        right.push(b);
    }
    right.pop();
    right.reverse();
    left.extend(right);
    left
}

/// Starts at the smallest index and heads towards its smaller loop neighbour.
fn canonical(mut c: Vec<usize>) -> Vec<usize> {
    let start = (0..c.len()).min_by_key(|&k| c[k]).unwrap_or(0);
    c.rotate_left(start);
    if c.len() > 2 && c[1] > c[c.len() - 1] {
        c[1..].reverse();
    }
    c
}
