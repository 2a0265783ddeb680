//! Gauss-Legendre rules on [0, 1].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{cos, PI};

pub const DEFAULT_NQ: usize = 25;
pub const MAX_NQ: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// The `nq`-point Gauss-Legendre rule mapped to [0, 1].
pub fn gauss_legendre_01(nq: usize) -> Result<QuadratureRule> {
    if nq == 0 || nq > MAX_NQ {
        return Err(Error::domain("nq", nq as f64, "[1, 200]"));
    }
    let mut nodes = vec![0.0; nq];
    let mut weights = vec![0.0; nq];
    let n = nq as f64;
    let half = nq.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess for the i-th largest root
        let k = i as f64 + 1.0;
        let mut x = cos(PI * (k - 0.25) / (n + 0.5)) * (1.0 - (n - 1.0) / (8.0 * n * n * n));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(nq, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(nq, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // root x > 0 maps to the upper half of [0, 1]
        nodes[nq - 1 - i] = 0.5 + 0.5 * x;
        nodes[i] = 0.5 - 0.5 * x;
        weights[nq - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    if nq % 2 == 1 {
        nodes[nq / 2] = 0.5;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Pₙ(x) and P′ₙ(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}
