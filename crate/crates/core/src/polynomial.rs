//! Test functions on sampled distance and connection matrices.
//!
//! A monomial of degree `m` evaluates a distance factor (products of
//! `exp(-λ r_ij)`) times a connection factor (indicators φ_{A,B}: all pairs in
//! A connected, all pairs in B disconnected) on the matrices of an m-sample.

use serde::{Deserialize, Serialize};

use crate::error::{GraphemeError, Result};
use crate::genealogy::GenealogyForest;
use crate::state::{GraphemeState, SamplingWeights, TypeLabel, VertexId};

/// Pair of sample indices, `i < j`, zero based.
pub type Pair = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistanceFn {
    One,
    /// `exp(-λ Σ r_ij)` over the listed pairs (all pairs when `pairs` is
    /// `None`).
    Exp { lambda: f64, pairs: Option<Vec<Pair>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConnectionFn {
    One,
    /// Π_{A} h_ij · Π_{B} (1 − h_ij).
    Indicator { connected: Vec<Pair>, disconnected: Vec<Pair> },
}

impl ConnectionFn {
    /// All `m` sampled vertices pairwise connected.
    pub fn all_connected(m: usize) -> Self {
        ConnectionFn::Indicator { connected: all_pairs(m), disconnected: vec![] }
    }
}

pub fn all_pairs(m: usize) -> Vec<Pair> {
    (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityFunctionSpec {
    pub m: usize,
    pub distance: DistanceFn,
    pub connection: ConnectionFn,
}

impl DualityFunctionSpec {
    pub fn new(m: usize, distance: DistanceFn, connection: ConnectionFn) -> Result<Self> {
        let spec = DualityFunctionSpec { m, distance, connection };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.m == 0 {
            return Err(GraphemeError::InvalidParams("sample size must be positive".into()));
        }
        let ok = |p: &Pair| p.0 < p.1 && p.1 < self.m;
        let pairs: Vec<&Pair> = match (&self.distance, &self.connection) {
            (DistanceFn::Exp { pairs: Some(p), .. }, ConnectionFn::Indicator { connected, disconnected }) => {
                p.iter().chain(connected).chain(disconnected).collect()
            }
            (DistanceFn::Exp { pairs: Some(p), .. }, _) => p.iter().collect(),
            (_, ConnectionFn::Indicator { connected, disconnected }) => connected.iter().chain(disconnected).collect(),
            _ => vec![],
        };
        if let Some(p) = pairs.into_iter().find(|p| !ok(p)) {
            return Err(GraphemeError::InvalidParams(format!("pair {p:?} invalid for m = {}", self.m)));
        }
        if let DistanceFn::Exp { lambda, .. } = self.distance {
            if !(lambda >= 0.0) {
                return Err(GraphemeError::InvalidParams("λ must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Distance factor with entries supplied by `r(i, j)`.
    pub fn phi_r_with(&self, r: impl Fn(usize, usize) -> f64) -> f64 {
        match &self.distance {
            DistanceFn::One => 1.0,
            DistanceFn::Exp { lambda, pairs } => {
                let sum: f64 = match pairs {
                    Some(p) => p.iter().map(|&(i, j)| r(i, j)).sum(),
                    None => {
                        let mut acc = 0.0;
                        for i in 0..self.m {
                            for j in i + 1..self.m {
                                acc += r(i, j);
                            }
                        }
                        acc
                    }
                };
                (-lambda * sum).exp()
            }
        }
    }

    /// Connection factor with entries supplied by `h(i, j)`.
    pub fn phi_h_with(&self, h: impl Fn(usize, usize) -> bool) -> f64 {
        match &self.connection {
            ConnectionFn::One => 1.0,
            ConnectionFn::Indicator { connected, disconnected } => {
                let ok = connected.iter().all(|&(i, j)| h(i, j)) && disconnected.iter().all(|&(i, j)| !h(i, j));
                if ok {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eval_with(&self, r: impl Fn(usize, usize) -> f64, h: impl Fn(usize, usize) -> bool) -> f64 {
        let ph = self.phi_h_with(h);
        if ph == 0.0 {
            return 0.0;
        }
        ph * self.phi_r_with(r)
    }

    pub fn phi_r(&self, r: &[Vec<f64>]) -> f64 {
        self.phi_r_with(|i, j| r[i][j])
    }

    /// Sum over pairs i < j of ∂φ_r/∂r_ij (the distance-growth term uses it).
    pub fn phi_r_gradient_sum(&self, r: &[Vec<f64>]) -> f64 {
        match &self.distance {
            DistanceFn::One => 0.0,
            DistanceFn::Exp { lambda, pairs } => {
                let count = match pairs {
                    Some(p) => p.len(),
                    None => self.m * (self.m - 1) / 2,
                } as f64;
                -lambda * count * self.phi_r(r)
            }
        }
    }

    pub fn phi_h(&self, h: &[Vec<bool>]) -> f64 {
        self.phi_h_with(|i, j| h[i][j])
    }

    pub fn eval(&self, r: &[Vec<f64>], h: &[Vec<bool>]) -> f64 {
        self.eval_with(|i, j| r[i][j], |i, j| h[i][j])
    }

    pub fn uses_distances(&self) -> bool {
        !matches!(self.distance, DistanceFn::One)
    }
}

/// All pairwise distances, connections and types of a frozen state, for
/// exact evaluation of monomials.
#[derive(Debug, Clone)]
pub struct StateMatrices {
    pub n: usize,
    pub r: Vec<Vec<f64>>,
    pub h: Vec<Vec<bool>>,
    pub types: Vec<TypeLabel>,
    pub weights: Option<Vec<f64>>,
}

impl StateMatrices {
    /// Distances come from `forest` when given, otherwise they are all zero.
    pub fn new(state: &GraphemeState, forest: Option<&GenealogyForest>) -> Result<Self> {
        let n = state.num_vertices();
        let r = match forest {
            Some(f) => {
                let ids: Vec<VertexId> = state.vertex_ids().collect();
                f.distance_matrix(&ids)?
            }
            None => vec![vec![0.0; n]; n],
        };
        let h = (0..n).map(|i| (0..n).map(|j| state.connected(i, j)).collect()).collect();
        let types = (0..n).map(|i| state.type_label(i)).collect();
        let weights = match state.weights() {
            SamplingWeights::Uniform => None,
            SamplingWeights::Explicit(w) => Some(w.clone()),
        };
        Ok(StateMatrices { n, r, h, types, weights })
    }

    /// φ evaluated on the sample `tuple` (dense indices).
    pub fn eval(&self, spec: &DualityFunctionSpec, tuple: &[usize]) -> f64 {
        spec.eval_with(|i, j| self.r[tuple[i]][tuple[j]], |i, j| self.h[tuple[i]][tuple[j]])
    }

    /// Exact Φ = E[φ(m-sample without replacement)].
    pub fn monomial(&self, spec: &DualityFunctionSpec) -> f64 {
        ordered_tuple_expectation(self.n, self.weights.as_deref(), spec.m, |t| self.eval(spec, t))
    }
}

/// Number of ordered m-tuples of distinct elements of an n-set.
pub fn falling_factorial(n: usize, m: usize) -> f64 {
    (0..m).map(|k| n.saturating_sub(k) as f64).product()
}

/// Expectation of `f` over an ordered m-sample drawn sequentially without
/// replacement with the given weights (uniform when `weights` is `None`),
/// by enumerating all ordered tuples.
pub fn ordered_tuple_expectation(
    n: usize,
    weights: Option<&[f64]>,
    m: usize,
    mut f: impl FnMut(&[usize]) -> f64,
) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        n: usize,
        weights: Option<&[f64]>,
        m: usize,
        tuple: &mut Vec<usize>,
        used: &mut [bool],
        prob: f64,
        used_mass: f64,
        f: &mut dyn FnMut(&[usize]) -> f64,
    ) -> f64 {
        if tuple.len() == m {
            return prob * f(tuple);
        }
        let mut acc = 0.0;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let (p, w) = match weights {
                None => (1.0 / (n - tuple.len()) as f64, 0.0),
                Some(w) => (w[i] / (1.0 - used_mass), w[i]),
            };
            if p == 0.0 {
                continue;
            }
            used[i] = true;
            tuple.push(i);
            acc += rec(n, weights, m, tuple, used, prob * p, used_mass + w, f);
            tuple.pop();
            used[i] = false;
        }
        acc
    }
    if m > n {
        return f64::NAN;
    }
    let mut used = vec![false; n];
    rec(n, weights, m, &mut Vec::with_capacity(m), &mut used, 1.0, 0.0, &mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_and_exp() {
        let spec = DualityFunctionSpec::new(
            3,
            DistanceFn::Exp { lambda: 0.5, pairs: None },
            ConnectionFn::Indicator { connected: vec![(0, 1)], disconnected: vec![(1, 2)] },
        )
        .unwrap();
        let r = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0], vec![2.0, 3.0, 0.0]];
        let mut h = vec![vec![true, true, false], vec![true, true, false], vec![false, false, true]];
        assert!((spec.eval(&r, &h) - (-3.0f64).exp()).abs() < 1e-15);
        h[1][2] = true;
        assert_eq!(spec.eval(&r, &h), 0.0);
        assert!((spec.phi_r_gradient_sum(&r) + 1.5 * (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tuple_expectation_matches_counts() {
        // fraction of ordered pairs inside a block of 3 among 5 vertices
        let block = [0, 0, 0, 1, 2];
        let v = ordered_tuple_expectation(5, None, 2, |t| (block[t[0]] == block[t[1]]) as u8 as f64);
        assert!((v - 6.0 / 20.0).abs() < 1e-15);
        let w = [0.5, 0.25, 0.25];
        let total = ordered_tuple_expectation(3, Some(&w), 2, |_| 1.0);
        assert!((total - 1.0).abs() < 1e-15);
        let first = ordered_tuple_expectation(3, Some(&w), 2, |t| (t[0] == 0) as u8 as f64);
        assert!((first - 0.5).abs() < 1e-15);
        assert_eq!(falling_factorial(5, 3), 60.0);
    }

    #[test]
    fn rejects_bad_pairs() {
        assert!(DualityFunctionSpec::new(2, DistanceFn::One, ConnectionFn::all_connected(3)).is_err());
        assert!(DualityFunctionSpec::new(0, DistanceFn::One, ConnectionFn::One).is_err());
    }
}
