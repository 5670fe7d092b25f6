use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DVector;

/// All multi-indices `α ∈ ℕ^d` with `|α| ≤ m`, in graded lexicographic order.
#[derive(Debug)]
pub struct MultiIndexSet {
    d: usize,
    m: usize,
    list: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    factorials: Vec<f64>,
    products: Vec<(usize, usize, usize)>,
}

impl MultiIndexSet {
    pub fn new(d: usize, m: usize) -> Self {
        let mut list = Vec::new();
        for deg in 0..=m {
            let mut cur = vec![0u8; d];
            push_degree(&mut list, &mut cur, 0, deg);
        }
        let lookup = list.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect::<HashMap<_, _>>();
        let factorials = list
            .iter()
            .map(|a| a.iter().map(|&k| factorial(k as usize)).product())
            .collect();
        let mut products = Vec::new();
        for (i, a) in list.iter().enumerate() {
            for (j, b) in list.iter().enumerate() {
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if let Some(&k) = lookup.get(&s) {
                    products.push((i, j, k));
                }
            }
        }
        Self { d, m, list, lookup, factorials, products }
    }

    /// Process-wide cached instance.
    pub fn shared(d: usize, m: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<MultiIndexSet>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("multi-index cache poisoned");
        guard.entry((d, m)).or_insert_with(|| Arc::new(Self::new(d, m))).clone()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.list.iter().map(|a| a.as_slice())
    }

    pub fn get(&self, i: usize) -> &[u8] {
        &self.list[i]
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    pub fn order(&self, i: usize) -> usize {
        self.list[i].iter().map(|&a| a as usize).sum()
    }

    /// `α!` for the `i`-th multi-index.
    pub fn factorial(&self, i: usize) -> f64 {
        self.factorials[i]
    }

    /// Triples `(i, j, k)` with `α_i + α_j = α_k`.
    pub fn products(&self) -> &[(usize, usize, usize)] {
        &self.products
    }

    /// Weights `w_β` with `∂^α (t−c)^β = w_β` at `h = t − c`.
    pub fn derivative_weights(&self, alpha: &[u8], h: &DVector<f64>) -> DVector<f64> {
        let mut w = DVector::zeros(self.len());
        for (k, beta) in self.list.iter().enumerate() {
            let mut val = 1.0;
            for i in 0..self.d {
                let (b, a) = (beta[i] as i32, alpha[i] as i32);
                if b < a {
                    val = 0.0;
                    break;
                }
                for f in (b - a + 1)..=b {
                    val *= f as f64;
                }
                val *= h[i].powi(b - a);
            }
            w[k] = val;
        }
        w
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, cur: &mut [u8], pos: usize, left: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = left as u8;
        out.push(cur.to_vec());
        return;
    }
    if cur.is_empty() {
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k as u8;
        push_degree(out, cur, pos + 1, left - k);
    }
    cur[pos] = 0;
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
