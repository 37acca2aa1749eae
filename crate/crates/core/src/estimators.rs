//! Sampling-based estimators, exact block densities, the cut norm on step
//! functions, and the statistical tests used to compare simulations with
//! reference laws.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{GraphemeError, Result};
use crate::genealogy::GenealogyForest;
use crate::graphon::{StepFunction, StepGraphon, SubgraphPattern};
use crate::polynomial::{falling_factorial, DualityFunctionSpec, StateMatrices};
use crate::state::{GraphemeState, VertexId};

/// Largest ordered-tuple count accepted for exhaustive evaluation.
pub const EXHAUSTIVE_LIMIT: f64 = 1e6;
/// Most cells accepted by [`cut_norm_step`].
pub const MAX_CUT_CELLS: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionMatrixSample {
    /// Symmetric 0/1 matrix with zero diagonal.
    pub matrix: Vec<Vec<u8>>,
    pub vertices: Vec<VertexId>,
}

impl ConnectionMatrixSample {
    pub fn is_transitive(&self) -> bool {
        let m = self.matrix.len();
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    if i != j && j != k && i != k && self.matrix[i][j] == 1 && self.matrix[j][k] == 1 && self.matrix[i][k] == 0 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Bit code of the upper triangle, row by row.
    pub fn code(&self) -> u64 {
        let m = self.matrix.len();
        let mut code = 0u64;
        let mut bit = 0;
        for i in 0..m {
            for j in i + 1..m {
                code |= (self.matrix[i][j] as u64) << bit;
                bit += 1;
            }
        }
        code
    }
}

/// Connection matrix of `m` vertices drawn by weight without replacement.
pub fn sample_connection_matrix<R: Rng + ?Sized>(
    state: &GraphemeState,
    m: usize,
    rng: &mut R,
) -> Result<ConnectionMatrixSample> {
    let idx = state.sample_distinct(m, rng)?;
    let matrix = idx
        .iter()
        .map(|&a| idx.iter().map(|&b| (a != b && state.connected(a, b)) as u8).collect())
        .collect();
    Ok(ConnectionMatrixSample { matrix, vertices: idx.iter().map(|&i| state.vertex_id(i)).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    /// Sum over every ordered tuple of distinct vertices.
    Exhaustive,
    /// Independent m-samples without replacement.
    WithoutReplacement,
    /// I.i.d. vertices (product measure).
    WithReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mode: EstimateMode,
    pub mean: f64,
    pub se: f64,
    pub num_samples: usize,
}

fn summarize(mode: EstimateMode, values: impl Iterator<Item = f64>) -> Estimate {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for x in values {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    let se = if n > 1 { (m2 / (n as f64 - 1.0) / n as f64).sqrt() } else { 0.0 };
    Estimate { mode, mean, se, num_samples: n }
}

/// Φ = E[φ_h(h̿)·φ_r(r̿)] over m-samples. Distances come from `forest`
/// (required when `spec` uses them).
pub fn estimate_monomial<R: Rng + ?Sized>(
    state: &GraphemeState,
    forest: Option<&GenealogyForest>,
    spec: &DualityFunctionSpec,
    mode: EstimateMode,
    num_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    spec.check()?;
    let n = state.num_vertices();
    if spec.m > n {
        return Err(GraphemeError::SampleTooLarge { requested: spec.m, available: n });
    }
    if spec.uses_distances() && forest.is_none() {
        return Err(GraphemeError::InvalidParams("distance test function needs a genealogy".into()));
    }
    match mode {
        EstimateMode::Exhaustive => {
            let count = falling_factorial(n, spec.m);
            if count > EXHAUSTIVE_LIMIT {
                return Err(GraphemeError::Infeasible(format!(
                    "exhaustive evaluation needs {count} tuples (limit {EXHAUSTIVE_LIMIT})"
                )));
            }
            let mats = StateMatrices::new(state, forest)?;
            Ok(Estimate { mode, mean: mats.monomial(spec), se: 0.0, num_samples: count as usize })
        }
        EstimateMode::WithoutReplacement | EstimateMode::WithReplacement => {
            if num_samples < 2 {
                return Err(GraphemeError::InvalidParams("need at least 2 samples".into()));
            }
            let mut values = Vec::with_capacity(num_samples);
            for _ in 0..num_samples {
                let idx = if mode == EstimateMode::WithoutReplacement {
                    state.sample_distinct(spec.m, rng)?
                } else {
                    state.sample_iid(spec.m, rng)
                };
                let r = match forest {
                    Some(f) if spec.uses_distances() => {
                        let ids: Vec<VertexId> = idx.iter().map(|&i| state.vertex_id(i)).collect();
                        f.distance_matrix(&ids)?
                    }
                    _ => vec![vec![0.0; spec.m]; spec.m],
                };
                values.push(spec.eval_with(|i, j| r[i][j], |i, j| state.connected(idx[i], idx[j])));
            }
            Ok(summarize(mode, values.into_iter()))
        }
    }
}

/// Homomorphism density of `pattern` with i.i.d. vertices drawn by weight;
/// a vertex counts as connected to itself.
pub fn subgraph_density<R: Rng + ?Sized>(
    state: &GraphemeState,
    pattern: &SubgraphPattern,
    num_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if pattern.vertex_count() > state.num_vertices() {
        return Err(GraphemeError::SampleTooLarge { requested: pattern.vertex_count(), available: state.num_vertices() });
    }
    if num_samples < 2 {
        return Err(GraphemeError::InvalidParams("need at least 2 samples".into()));
    }
    let values = (0..num_samples).map(|_| {
        let v = state.sample_iid(pattern.vertex_count(), rng);
        pattern.edges().iter().all(|&(a, b)| state.connected(v[a], v[b])) as u8 as f64
    });
    Ok(summarize(EstimateMode::WithReplacement, values.collect::<Vec<_>>().into_iter()))
}

/// Exact homomorphism density in a block graphon: product over the
/// pattern's connected components of Σᵢ wᵢ^v p^e (isolated vertices give 1).
pub fn exact_block_density(graphon: &StepGraphon, pattern: &SubgraphPattern) -> f64 {
    pattern
        .component_shapes()
        .into_iter()
        .map(|(v, e)| {
            if v == 1 {
                1.0
            } else {
                graphon.block_weights.iter().map(|w| w.powi(v as i32)).sum::<f64>()
                    * graphon.intra_block_intensity.powi(e as i32)
            }
        })
        .product()
}

/// Labeled cut norm ‖g1 − g2‖_□ of two step functions, after refinement to
/// a common partition of at most [`MAX_CUT_CELLS`] cells. For every subset
/// S of cells the best T is read off the column signs.
pub fn cut_norm_step(g1: &StepFunction, g2: &StepFunction) -> Result<f64> {
    let (a, b) = StepFunction::common_refinement(g1, g2);
    let k = a.widths.len();
    if k > MAX_CUT_CELLS {
        return Err(GraphemeError::Infeasible(format!("{k} cells exceed the limit of {MAX_CUT_CELLS}")));
    }
    let w = &a.widths;
    let m: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| (a.values[i][j] - b.values[i][j]) * w[i] * w[j]).collect()).collect();
    let mut best = 0.0f64;
    let mut col = vec![0.0; k];
    for s in 1u32..(1 << k) {
        col.iter_mut().for_each(|c| *c = 0.0);
        for (i, row) in m.iter().enumerate() {
            if s >> i & 1 == 1 {
                for (c, x) in col.iter_mut().zip(row) {
                    *c += x;
                }
            }
        }
        let pos: f64 = col.iter().filter(|c| **c > 0.0).sum();
        let neg: f64 = col.iter().filter(|c| **c < 0.0).sum();
        best = best.max(pos).max(-neg);
    }
    Ok(best)
}

/// Cut norm between two block graphons aligned by size order.
pub fn cut_norm_graphons(g1: &StepGraphon, g2: &StepGraphon) -> Result<f64> {
    cut_norm_step(&g1.to_step_function(), &g2.to_step_function())
}

/// Lower bound on the cut distance over rearrangements from the counting
/// lemma: |t(F, g1) − t(F, g2)| ≤ e(F)·δ_□ for F = edge, 2-path, triangle.
pub fn cut_distance_lower_bound(g1: &StepGraphon, g2: &StepGraphon) -> f64 {
    [SubgraphPattern::edge(), SubgraphPattern::path2(), SubgraphPattern::triangle()]
        .iter()
        .map(|f| (exact_block_density(g1, f) - exact_block_density(g2, f)).abs() / f.edges().len() as f64)
        .fold(0.0, f64::max)
}

/// Two-sided Kolmogorov–Smirnov statistic against `cdf` and its asymptotic
/// p-value (with the small-sample correction of Stephens).
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(GraphemeError::EmptySample);
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    Ok((d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)))
}

/// P(K > λ) for the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// χ² test of homogeneity for a table of counts (rows = samples, columns =
/// categories). Returns (statistic, degrees of freedom, p-value).
pub fn chi_square_homogeneity(table: &[Vec<u64>]) -> Result<(f64, f64, f64)> {
    let rows = table.len();
    if rows < 2 {
        return Err(GraphemeError::InvalidParams("need at least two rows".into()));
    }
    let cols = table[0].len();
    let col_tot: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j] as f64).sum()).collect();
    let used: Vec<usize> = (0..cols).filter(|&j| col_tot[j] > 0.0).collect();
    let total: f64 = col_tot.iter().sum();
    let mut stat = 0.0;
    for row in table {
        let row_tot: f64 = row.iter().map(|&x| x as f64).sum();
        for &j in &used {
            let e = row_tot * col_tot[j] / total;
            stat += (row[j] as f64 - e).powi(2) / e;
        }
    }
    let df = ((rows - 1) * used.len().saturating_sub(1)) as f64;
    if df == 0.0 {
        return Ok((stat, df, 1.0));
    }
    let p = 1.0 - ChiSquared::new(df).map_err(|e| GraphemeError::InvalidParams(e.to_string()))?.cdf(stat);
    Ok((stat, df, p))
}

/// χ² goodness of fit of observed counts against expected probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<(f64, f64, f64)> {
    let n: f64 = observed.iter().map(|&x| x as f64).sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p > 0.0 {
            let e = n * p;
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    let df = cells.saturating_sub(1) as f64;
    if df == 0.0 {
        return Ok((stat, df, 1.0));
    }
    let p = 1.0 - ChiSquared::new(df).map_err(|e| GraphemeError::InvalidParams(e.to_string()))?.cdf(stat);
    Ok((stat, df, p))
}

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// Maximum-likelihood Gamma fit, returned as (shape, rate).
pub fn fit_gamma(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.len() < 2 {
        return Err(GraphemeError::EmptySample);
    }
    if sample.iter().any(|x| !(*x > 0.0)) {
        return Err(GraphemeError::InvalidParams("gamma fit needs positive data".into()));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let mean_log = sample.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if !(s > 0.0) {
        return Err(GraphemeError::Infeasible("degenerate sample".into()));
    }
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..50 {
        let f = k.ln() - statrs::function::gamma::digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let step = f / df;
        k -= step;
        if k <= 0.0 {
            k = 1e-8;
        }
        if step.abs() < 1e-12 * k {
            break;
        }
    }
    Ok((k, k / mean))
}

/// Gamma(shape, rate) distribution function.
pub fn gamma_cdf(shape: f64, rate: f64) -> Result<impl Fn(f64) -> f64> {
    let g = statrs::distribution::Gamma::new(shape, rate).map_err(|e| GraphemeError::InvalidParams(e.to_string()))?;
    Ok(move |x: f64| if x <= 0.0 { 0.0 } else { g.cdf(x) })
}
