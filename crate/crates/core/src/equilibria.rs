//! Reference samplers and statistics for the equilibrium laws.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;

use crate::error::{GraphemeError, Result};
use crate::state::{ComponentId, GraphemeState};

/// Size-ordered weights with the mass not assigned to any listed weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub remainder: f64,
}

impl WeightVector {
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(GraphemeError::InvalidParams("weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum > 1.0 + 1e-12 {
            return Err(GraphemeError::InvalidParams(format!("weights sum to {sum} > 1")));
        }
        weights.sort_by(|a, b| b.total_cmp(a));
        Ok(WeightVector { weights, remainder: (1.0 - sum).max(0.0) })
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.first().copied().unwrap_or(0.0)
    }
}

/// Stick-breaking with `V ~ Beta(1, θ)`, truncated after `k` sticks and
/// sorted; the unbroken rest is the remainder.
pub fn gem_sample<R: Rng + ?Sized>(theta: f64, k: usize, rng: &mut R) -> Result<WeightVector> {
    if !(theta > 0.0) || k == 0 {
        return Err(GraphemeError::InvalidParams("need θ > 0 and k ≥ 1".into()));
    }
    let mut rest = 1.0f64;
    let mut weights = Vec::with_capacity(k);
    for _ in 0..k {
        // Beta(1, θ) = 1 - U^{1/θ}
        let u: f64 = 1.0 - rng.random::<f64>();
        let keep = (u.ln() / theta).exp();
        weights.push(rest * (1.0 - keep));
        rest *= keep;
    }
    weights.sort_by(|a, b| b.total_cmp(a));
    Ok(WeightVector { weights, remainder: rest })
}

/// Total mass `Gamma(shape = θ_total, rate = c/b)` and independent
/// Poisson–Dirichlet(θ_total) proportions (sorted GEM with `k` sticks).
pub fn moran_gamma_sample<R: Rng + ?Sized>(
    theta_total: f64,
    c_over_b: f64,
    k: usize,
    rng: &mut R,
) -> Result<(f64, WeightVector)> {
    if !(theta_total > 0.0 && c_over_b > 0.0) {
        return Err(GraphemeError::InvalidParams("need positive θ and c/b".into()));
    }
    let g = Gamma::new(theta_total, 1.0 / c_over_b).map_err(|e| GraphemeError::InvalidParams(e.to_string()))?;
    let total = g.sample(rng);
    let w = gem_sample(theta_total, k, rng)?;
    Ok((total, w))
}

/// Σ wᵢ²; the remainder is dust and carries no edges.
pub fn edge_density(w: &WeightVector) -> f64 {
    w.weights.iter().map(|x| x * x).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentAge {
    pub component: ComponentId,
    pub age: f64,
    pub mass: f64,
    pub size: usize,
}

/// Age (time since the founder entered) and mass of every component.
pub fn component_ages(state: &GraphemeState) -> Vec<ComponentAge> {
    let masses = state.component_masses();
    state
        .components()
        .zip(masses)
        .map(|((id, c), (_, mass))| ComponentAge { component: id, age: state.time() - c.founder_time(), mass, size: c.size() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionPath {
    pub dt: f64,
    /// Values at times 0, dt, 2dt, ... up to absorption or the horizon.
    pub path: Vec<f64>,
    pub hit_zero: Option<f64>,
    pub hit_one: Option<f64>,
}

/// Euler–Maruyama for the tagged-component frequency
/// `dX = -cX dt + sqrt(d X (1-X)) dW`, absorbed at 0 (and, if ever reached,
/// at 1).
pub fn frequency_diffusion<R: Rng + ?Sized>(
    c: f64,
    d: f64,
    x0: f64,
    dt: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<DiffusionPath> {
    if !(dt > 0.0) || !(horizon >= 0.0) || !(c >= 0.0) || !(d >= 0.0) {
        return Err(GraphemeError::InvalidParams("need dt > 0, horizon ≥ 0, c, d ≥ 0".into()));
    }
    if dt * (c + d) > 0.1 {
        return Err(GraphemeError::InvalidParams(format!("dt·(c+d) = {} exceeds 0.1", dt * (c + d))));
    }
    if !(0.0..=1.0).contains(&x0) {
        return Err(GraphemeError::InvalidParams("x0 must lie in [0, 1]".into()));
    }
    let steps = (horizon / dt).round() as usize;
    let mut path = Vec::with_capacity(steps + 1);
    let mut x = x0;
    path.push(x);
    let (mut hit_zero, mut hit_one) = (None, None);
    if x == 0.0 {
        hit_zero = Some(0.0);
    }
    let sq = dt.sqrt();
    for s in 1..=steps {
        if x <= 0.0 || x >= 1.0 {
            path.push(x);
            continue;
        }
        let z: f64 = StandardNormal.sample(rng);
        x += -c * x * dt + (d * x * (1.0 - x)).sqrt() * sq * z;
        if x <= 0.0 {
            x = 0.0;
            hit_zero = Some(s as f64 * dt);
        } else if x >= 1.0 {
            x = 1.0;
            hit_one = Some(s as f64 * dt);
        }
        path.push(x);
    }
    Ok(DiffusionPath { dt, path, hit_zero, hit_one })
}

/// Expected number of blocks of an Ewens(θ) partition of `n`.
pub fn ewens_expected_blocks(theta: f64, n: usize) -> f64 {
    (0..n).map(|k| theta / (theta + k as f64)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;

    #[test]
    fn edge_density_examples() {
        assert_eq!(edge_density(&WeightVector::new(vec![1.0]).unwrap()), 1.0);
        assert_eq!(edge_density(&WeightVector::new(vec![0.5, 0.5]).unwrap()), 0.5);
        assert!((edge_density(&WeightVector::new(vec![0.2, 0.5, 0.3]).unwrap()) - 0.38).abs() < 1e-15);
        assert!(WeightVector::new(vec![0.7, 0.7]).is_err());
    }

    #[test]
    fn gem_small_theta_takes_everything() {
        let mut rng = master_rng(0);
        let w = gem_sample(1e-3, 5, &mut rng).unwrap();
        assert!(w.max_weight() > 0.99);
        let s: f64 = w.weights.iter().sum::<f64>() + w.remainder;
        assert!((s - 1.0).abs() < 1e-12);
        assert!(w.weights.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn ages() {
        let mut s = GraphemeState::from_block_sizes(&[2, 1]);
        s.set_time(5.0);
        let ages = component_ages(&s);
        assert!(ages.iter().all(|a| a.age == 5.0));
        let l = s.fresh_label();
        let (_, idx) = s.add_vertex_new_component(l);
        let fresh = s.component_of(idx);
        let ages = component_ages(&s);
        assert_eq!(ages.iter().find(|a| a.component == fresh).unwrap().age, 0.0);
        assert!(ages.iter().all(|a| a.age <= s.time()));
    }

    #[test]
    fn diffusion_edge_cases() {
        let mut rng = master_rng(1);
        let p = frequency_diffusion(1.0, 1.0, 0.0, 0.01, 1.0, &mut rng).unwrap();
        assert!(p.path.iter().all(|&x| x == 0.0));
        assert!(frequency_diffusion(1.0, 1.0, 0.5, 0.1, 1.0, &mut rng).is_err());
        let p = frequency_diffusion(0.0, 1.0, 0.5, 0.01, 2.0, &mut rng).unwrap();
        assert_eq!(p.path.len(), 201);
    }

    #[test]
    fn ewens_blocks() {
        assert!((ewens_expected_blocks(1.0, 3) - (1.0 + 0.5 + 1.0 / 3.0)).abs() < 1e-15);
    }
}
