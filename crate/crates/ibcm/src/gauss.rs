//! Gauss-Legendre rules on the unit interval, cached by point count.

use gauss_quad::legendre::GaussLegendre;
use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights on [0, 1].
#[derive(Debug, Clone)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule1d>>>> = OnceLock::new();

/// `n`-point rule, exact for polynomials of degree `2n - 1`.
pub fn rule(n: usize) -> Arc<Rule1d> {
    let n = n.max(1);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("gauss cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let gl = GaussLegendre::new(NonZeroUsize::new(n).unwrap());
            let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            Arc::new(Rule1d {
                nodes: pairs.iter().map(|p| 0.5 * (p.0 + 1.0)).collect(),
                weights: pairs.iter().map(|p| 0.5 * p.1).collect(),
            })
        })
        .clone()
}

/// Rule mapped to `[a, b]`.
pub fn on_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let r = rule(n);
    r.nodes
        .iter()
        .zip(&r.weights)
        .map(|(x, w)| (a + (b - a) * x, (b - a) * w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactness_on_unit_interval() {
        for n in 1..8 {
            let r = rule(n);
            let deg = 2 * n - 1;
            let s: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14);
        }
    }
}
