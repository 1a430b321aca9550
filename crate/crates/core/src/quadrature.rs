//! One-dimensional Gauss rules.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::poly::gamma_half;

/// Nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Maps the rule to [a, b].
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(t, w)| (mid + half * t, half * w))
    }
}

/// Gauss–Jacobi rule for the weight (1-t²)^a on [-1, 1] with `m` nodes,
/// via the Golub–Welsch eigenvalue problem. `2a` must be a non-negative
/// integer so the moment has a closed form.
pub fn gauss_gegenbauer(m: usize, two_a: u32) -> GaussRule {
    assert!(m >= 1);
    let a = f64::from(two_a) / 2.0;
    let ab = 2.0 * a;
    let mut j = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let k = k as f64;
        let num = 4.0 * k * (k + a) * (k + a) * (k + ab);
        let s = 2.0 * k + ab;
        let den = s * s * (s + 1.0) * (s - 1.0);
        let b = (num / den).sqrt();
        let i = k as usize;
        j[(i - 1, i)] = b;
        j[(i, i - 1)] = b;
    }
    // ∫(1-t²)^a dt = √π Γ(a+1)/Γ(a+3/2).
    let mu0 = std::f64::consts::PI.sqrt() * gamma_half(two_a + 2) / gamma_half(two_a + 3);
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Symmetrize to remove eigen-solver asymmetry.
    let sym: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let (t, w) = pairs[i];
            let (t2, w2) = pairs[m - 1 - i];
            (0.5 * (t - t2), 0.5 * (w + w2))
        })
        .collect();
    GaussRule {
        nodes: sym.iter().map(|p| p.0).collect(),
        weights: sym.iter().map(|p| p.1).collect(),
    }
}

type RuleCache = Mutex<HashMap<usize, Arc<GaussRule>>>;

/// Cached Gauss–Legendre rule with `m` nodes.
pub fn gauss_legendre(m: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().expect("cache lock").get(&m) {
        return r.clone();
    }
    let r = Arc::new(gauss_gegenbauer(m, 0));
    cache.lock().expect("cache lock").insert(m, r.clone());
    r
}
