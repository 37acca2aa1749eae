//! Analytic finite-n generator applied to sampling monomials.
//!
//! For a fixed-size population with uniform sampling, the generator of a
//! monomial Φ splits into the distance growth term `2·E[Σ ∂φ/∂r_ij]`, the
//! resampling term `d/2 Σ_{k≠ℓ} (Φ∘θ_{k,ℓ} − Φ)` where θ_{k,ℓ} makes vertex k
//! a copy of vertex ℓ, the replacement term `c Σ_k (Φ_(k) − Φ)` where vertex
//! k is replaced by an immigrant drawn from θ, and the analogous mutation and
//! selection terms. Everything is evaluated exactly by enumerating ordered
//! sample tuples over the state's full distance and connection matrices.

use serde::Serialize;

use crate::dynamics::{DynamicsParams, MutationKernel, Simulation, SizeMode, ThetaSource};
use crate::error::{GraphemeError, Result};
use crate::polynomial::{ordered_tuple_expectation, DualityFunctionSpec, StateMatrices};
use crate::state::TypeLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorTerms {
    pub growth: f64,
    pub resampling: f64,
    pub immigration: f64,
    pub mutation: f64,
    pub selection: f64,
}

impl GeneratorTerms {
    pub fn total(&self) -> f64 {
        self.growth + self.resampling + self.immigration + self.mutation + self.selection
    }
}

/// Replacement of row/column `k` of the sampled matrices.
#[derive(Clone, Copy)]
enum Row {
    /// k becomes a copy of ℓ (distance 0, connected).
    CopyOf(usize),
    /// k keeps its distances but is connected exactly to vertices of `label`.
    Relabel(Option<TypeLabel>),
    /// k is unrelated (distance `r`) and connected to vertices of `label`.
    Newcomer(f64, Option<TypeLabel>),
}

struct View<'a> {
    mats: &'a StateMatrices,
    k: usize,
    row: Row,
}

impl View<'_> {
    fn r(&self, a: usize, b: usize) -> f64 {
        let m = self.mats;
        if a == b {
            return 0.0;
        }
        let (a, b) = match (a == self.k, b == self.k) {
            (true, _) => (a, b),
            (_, true) => (b, a),
            _ => return m.r[a][b],
        };
        match self.row {
            Row::CopyOf(l) => {
                if b == l {
                    0.0
                } else {
                    m.r[l][b]
                }
            }
            Row::Relabel(_) => m.r[a][b],
            Row::Newcomer(r, _) => r,
        }
    }

    fn h(&self, a: usize, b: usize) -> bool {
        let m = self.mats;
        if a == b {
            return true;
        }
        let (_, b) = match (a == self.k, b == self.k) {
            (true, _) => (a, b),
            (_, true) => (b, a),
            _ => return m.h[a][b],
        };
        match self.row {
            Row::CopyOf(l) => b == l || m.h[l][b],
            Row::Relabel(label) | Row::Newcomer(_, label) => label.is_some_and(|l| m.types[b] == l),
        }
    }
}

fn monomial_with(mats: &StateMatrices, spec: &DualityFunctionSpec, k: usize, row: Row) -> f64 {
    let view = View { mats, k, row };
    ordered_tuple_expectation(mats.n, None, spec.m, |t| {
        spec.eval_with(|i, j| view.r(t[i], t[j]), |i, j| view.h(t[i], t[j]))
    })
}

/// Generator of the monomial `spec` at a frozen state given by its full
/// matrices, at time `time` (immigrants are unrelated, at distance 2·time).
///
/// Supports the fixed-size pure regime with uniform sampling; the flip
/// regime, birth/death and variable size are rejected.
pub fn generator_terms(
    mats: &StateMatrices,
    time: f64,
    params: &DynamicsParams,
    spec: &DualityFunctionSpec,
) -> Result<GeneratorTerms> {
    params.validate()?;
    spec.check()?;
    if mats.weights.is_some() {
        return Err(GraphemeError::NotApplicable("generator needs uniform sampling".into()));
    }
    if params.b > 0.0 || params.size_mode != SizeMode::Fixed || params.flip_regime() {
        return Err(GraphemeError::NotApplicable("generator covers the fixed-size pure regime".into()));
    }
    let n = mats.n;
    if spec.m > n {
        return Err(GraphemeError::SampleTooLarge { requested: spec.m, available: n });
    }
    let base = mats.monomial(spec);

    let growth = if spec.uses_distances() {
        2.0 * ordered_tuple_expectation(n, None, spec.m, |t| {
            let r = |i: usize, j: usize| mats.r[t[i]][t[j]];
            let h = spec.phi_h_with(|i, j| mats.h[t[i]][t[j]]);
            if h == 0.0 {
                return 0.0;
            }
            let sub: Vec<Vec<f64>> = (0..spec.m).map(|i| (0..spec.m).map(|j| r(i, j)).collect()).collect();
            h * spec.phi_r_gradient_sum(&sub)
        })
    } else {
        0.0
    };

    let pair_term = |weight: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                if k == l {
                    continue;
                }
                let w = weight(k, l);
                if w > 0.0 {
                    acc += w * (monomial_with(mats, spec, k, Row::CopyOf(l)) - base);
                }
            }
        }
        acc
    };

    let resampling = if params.d > 0.0 { pair_term(&|_, _| params.d / 2.0) } else { 0.0 };

    let selection = if params.s_sel > 0.0 {
        let per_pair = params.s_sel / n as f64;
        pair_term(&|k, l| {
            let (fk, fl) = (params.fitness.of(mats.types[k]), params.fitness.of(mats.types[l]));
            per_pair * fl / (fk + fl)
        })
    } else {
        0.0
    };

    let label_mixture = |probs: &[f64], k: usize, make: &dyn Fn(Option<TypeLabel>) -> Row| -> f64 {
        let total: f64 = probs.iter().sum();
        probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(a, p)| p / total * monomial_with(mats, spec, k, make(Some(TypeLabel::Atom(a)))))
            .sum()
    };

    let immigration = if params.c > 0.0 {
        let unrelated = 2.0 * time;
        let mut acc = 0.0;
        for k in 0..n {
            let after = match &params.theta {
                ThetaSource::Atomless => monomial_with(mats, spec, k, Row::Newcomer(unrelated, None)),
                ThetaSource::Atomic(w) => label_mixture(w, k, &|l| Row::Newcomer(unrelated, l)),
            };
            acc += after - base;
        }
        params.c * acc
    } else {
        0.0
    };

    let mutation = if params.m_mut > 0.0 {
        let mut acc = 0.0;
        for k in 0..n {
            let after = match &params.mutation {
                MutationKernel::Atomless => monomial_with(mats, spec, k, Row::Relabel(None)),
                MutationKernel::Table(rows) => {
                    let row = match mats.types[k] {
                        TypeLabel::Atom(a) if a < rows.len() => a,
                        _ => 0,
                    };
                    label_mixture(&rows[row], k, &Row::Relabel)
                }
            };
            acc += after - base;
        }
        params.m_mut * acc
    } else {
        0.0
    };

    Ok(GeneratorTerms { growth, resampling, immigration, mutation, selection })
}

/// [`generator_terms`] at the current state and genealogy of a simulation.
pub fn generator_at(sim: &Simulation, spec: &DualityFunctionSpec) -> Result<GeneratorTerms> {
    let mats = StateMatrices::new(&sim.state, Some(&sim.forest))?;
    generator_terms(&mats, sim.time(), &sim.params, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Fitness, Transition};
    use crate::polynomial::{ConnectionFn, DistanceFn};
    use crate::rng::master_rng;
    use crate::state::GraphemeState;

    fn phi(sim: &Simulation, spec: &DualityFunctionSpec) -> f64 {
        StateMatrices::new(&sim.state, Some(&sim.forest)).unwrap().monomial(spec)
    }

    /// Brute force: apply every possible transition to a copy of the
    /// simulation and weight the change by its rate; growth by a difference
    /// quotient in time.
    fn brute_force(sim: &Simulation, spec: &DualityFunctionSpec) -> f64 {
        let mut rng = master_rng(99);
        let p = &sim.params;
        let t = sim.time();
        let base = phi(sim, spec);
        let n = sim.state.num_vertices();
        let ids: Vec<_> = sim.state.vertex_ids().collect();
        let mut total = 0.0;
        let mut apply = |tr: Transition, rate: f64, total: &mut f64| {
            let mut s = sim.clone();
            s.apply_at(tr, t, &mut rng).unwrap();
            *total += rate * (phi(&s, spec) - base);
        };
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                apply(Transition::FVResample { winner: ids[a], loser: ids[b] }, p.d / 2.0, &mut total);
                let (fa, fb) = (p.fitness.of(sim.state.type_label(a)), p.fitness.of(sim.state.type_label(b)));
                let sel = p.s_sel / n as f64 * fa / (fa + fb);
                if sel > 0.0 {
                    apply(Transition::SelectionResample { winner: ids[a], loser: ids[b] }, sel, &mut total);
                }
            }
            if p.c > 0.0 {
                match &p.theta {
                    ThetaSource::Atomless => {
                        let mut st = sim.state.clone();
                        let label = st.fresh_label();
                        apply(Transition::ImmigrationSwap { vertex: ids[a], label }, p.c, &mut total);
                    }
                    ThetaSource::Atomic(w) => {
                        let sum: f64 = w.iter().sum();
                        for (k, wk) in w.iter().enumerate() {
                            let tr = Transition::ImmigrationSwap { vertex: ids[a], label: TypeLabel::Atom(k) };
                            apply(tr, p.c * wk / sum, &mut total);
                        }
                    }
                }
            }
            if p.m_mut > 0.0 {
                let mut st = sim.state.clone();
                let label = st.fresh_label();
                apply(Transition::Mutation { vertex: ids[a], label }, p.m_mut, &mut total);
            }
        }
        if spec.uses_distances() {
            let eps = 1e-6;
            let mut s = sim.clone();
            s.forest.set_time(t + eps);
            total += (phi(&s, spec) - base) / eps;
        }
        total
    }

    fn evolved(params: DynamicsParams, n: usize, horizon: f64, seed: u64) -> Simulation {
        let mut rng = master_rng(seed);
        let mut sim = Simulation::new(GraphemeState::singletons(n), params, &mut rng).unwrap();
        sim.run_until(horizon, &mut rng).unwrap();
        sim
    }

    fn specs() -> Vec<DualityFunctionSpec> {
        vec![
            DualityFunctionSpec::new(2, DistanceFn::One, ConnectionFn::all_connected(2)).unwrap(),
            DualityFunctionSpec::new(2, DistanceFn::Exp { lambda: 0.7, pairs: None }, ConnectionFn::One).unwrap(),
            DualityFunctionSpec::new(
                3,
                DistanceFn::Exp { lambda: 0.3, pairs: Some(vec![(0, 2)]) },
                ConnectionFn::Indicator { connected: vec![(0, 1)], disconnected: vec![(1, 2)] },
            )
            .unwrap(),
        ]
    }

    #[test]
    fn matches_brute_force_transitions() {
        let cases = [
            DynamicsParams { c: 0.4, ..DynamicsParams::fleming_viot(1.0) },
            DynamicsParams {
                c: 0.5,
                theta: ThetaSource::Atomic(vec![0.3, 0.7]),
                ..DynamicsParams::fleming_viot(0.8)
            },
            DynamicsParams {
                m_mut: 0.3,
                s_sel: 1.5,
                fitness: Fitness { atoms: vec![], default: 1.0 },
                ..DynamicsParams::fleming_viot(1.0)
            },
        ];
        for (ci, params) in cases.into_iter().enumerate() {
            let sim = evolved(params, 7, 0.8, ci as u64);
            for spec in specs() {
                let g = generator_at(&sim, &spec).unwrap().total();
                let b = brute_force(&sim, &spec);
                assert!((g - b).abs() < 1e-4 * (1.0 + b.abs()), "case {ci}: {g} vs {b}");
            }
        }
    }

    #[test]
    fn pair_connection_under_pure_resampling() {
        // all singletons: only resampling can connect a pair, at rate d per pair
        let sim = evolved(DynamicsParams::fleming_viot(2.0), 6, 0.0, 0);
        let spec = &specs()[0];
        let g = generator_at(&sim, spec).unwrap();
        assert!((g.resampling - 2.0).abs() < 1e-12);
        assert_eq!(g.growth, 0.0);
    }

    #[test]
    fn rejects_variable_size() {
        let sim = evolved(DynamicsParams::fleming_viot(1.0), 4, 0.0, 0);
        let params = DynamicsParams { b: 1.0, d: 0.0, size_mode: SizeMode::Variable, ..sim.params.clone() };
        let mats = StateMatrices::new(&sim.state, None).unwrap();
        assert!(generator_terms(&mats, 0.0, &params, &specs()[0]).is_err());
    }
}
