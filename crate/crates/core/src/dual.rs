//! Kingman coalescent with cemetery, the duality function and dual-based
//! equilibrium samples.
//!
//! Active blocks merge pairwise at rate `d` and each active block jumps to
//! the cemetery at rate `c`, receiving a label drawn from θ. A pair of
//! indices merged at dual time `s` is at distance `2s`; pairs never merged
//! are at `2·time` plus their distance in the initial grapheme.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{EventKind, Simulation, SizeMode, ThetaSource};
use crate::error::{GraphemeError, Result};
use crate::polynomial::{falling_factorial, ordered_tuple_expectation, DualityFunctionSpec, StateMatrices};
use crate::record::CoalescentEventRecord;
use crate::rng::replica_rng;
use crate::state::{ComponentId, FounderRecord, GraphemeState, SamplingWeights, TypeLabel, VertexId, VertexRecord};

#[derive(Debug, Clone)]
struct DualBlock {
    members: Vec<usize>,
    cemetery: Option<TypeLabel>,
    live: bool,
}

#[derive(Debug, Clone)]
pub struct CoalescentState {
    n: usize,
    time: f64,
    block_of: Vec<usize>,
    blocks: Vec<DualBlock>,
    active: Vec<usize>,
    merge_time: Vec<f64>,
    /// (time, number of active blocks from then on)
    history: Vec<(f64, usize)>,
    log: Option<Vec<CoalescentEventRecord>>,
    next_fresh: u64,
}

impl CoalescentState {
    /// `n` singleton blocks at dual time 0.
    pub fn singletons(n: usize) -> Self {
        CoalescentState {
            n,
            time: 0.0,
            block_of: (0..n).collect(),
            blocks: (0..n).map(|i| DualBlock { members: vec![i], cemetery: None, live: true }).collect(),
            active: (0..n).collect(),
            merge_time: vec![f64::NAN; n * n],
            history: vec![(0.0, n)],
            log: None,
            next_fresh: 0,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn log(&self) -> &[CoalescentEventRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn num_active(&self) -> usize {
        self.active.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.live).count()
    }

    pub fn is_absorbed(&self) -> bool {
        self.active.is_empty()
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i]
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.block_of[i] == self.block_of[j]
    }

    pub fn cemetery_label(&self, i: usize) -> Option<TypeLabel> {
        self.blocks[self.block_of[i]].cemetery
    }

    /// Live blocks as (members, cemetery label).
    pub fn blocks(&self) -> impl Iterator<Item = (&[usize], Option<TypeLabel>)> + '_ {
        self.blocks.iter().filter(|b| b.live).map(|b| (b.members.as_slice(), b.cemetery))
    }

    /// Dual time at which `i` and `j` merged.
    pub fn merge_time(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(0.0);
        }
        let t = self.merge_time[i * self.n + j];
        (!t.is_nan()).then_some(t)
    }

    /// Dual distance: `2s` for pairs merged at `s`, `2·time` otherwise.
    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        match self.merge_time(i, j) {
            Some(s) => 2.0 * s,
            None => 2.0 * self.time,
        }
    }

    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.pair_distance(i, j)).collect()).collect()
    }

    fn set_active_history(&mut self) {
        self.history.push((self.time, self.active.len()));
    }

    /// Merges the active blocks at positions `x != y` of the active list.
    fn merge(&mut self, x: usize, y: usize) {
        let (a, b) = (self.active[x], self.active[y]);
        let moved = std::mem::take(&mut self.blocks[b].members);
        for &i in &self.blocks[a].members {
            for &j in &moved {
                self.merge_time[i * self.n + j] = self.time;
                self.merge_time[j * self.n + i] = self.time;
            }
        }
        for &j in &moved {
            self.block_of[j] = a;
        }
        self.blocks[a].members.extend(moved);
        self.blocks[b].live = false;
        self.active.swap_remove(y);
        if let Some(log) = &mut self.log {
            log.push(CoalescentEventRecord { time: self.time, action: "merge".into(), blocks: vec![a, b], label: None });
        }
        self.set_active_history();
    }

    fn bury(&mut self, x: usize, label: TypeLabel) {
        let a = self.active.swap_remove(x);
        self.blocks[a].cemetery = Some(label);
        if let Some(log) = &mut self.log {
            log.push(CoalescentEventRecord { time: self.time, action: "cemetery".into(), blocks: vec![a], label: Some(label) });
        }
        self.set_active_history();
    }

    fn draw_label<R: Rng + ?Sized>(&mut self, theta: &ThetaSource, rng: &mut R) -> TypeLabel {
        match theta {
            ThetaSource::Atomless => {
                self.next_fresh += 1;
                TypeLabel::Fresh(self.next_fresh - 1)
            }
            ThetaSource::Atomic(w) => TypeLabel::Atom(crate::state::weighted_index(w, rng)),
        }
    }

    /// One merge or cemetery jump if it happens before `limit`; returns false
    /// (with the clock at `limit`) otherwise.
    pub fn step_until<R: Rng + ?Sized>(
        &mut self,
        d: f64,
        c: f64,
        theta: &ThetaSource,
        limit: f64,
        rng: &mut R,
    ) -> bool {
        let k = self.active.len();
        let merge_rate = d * (k * k.saturating_sub(1)) as f64 / 2.0;
        let bury_rate = c * k as f64;
        let total = merge_rate + bury_rate;
        if !(total > 0.0) {
            if limit.is_finite() {
                self.time = limit;
            }
            return false;
        }
        let e: f64 = Exp1.sample(rng);
        let t = self.time + e / total;
        if t > limit {
            self.time = limit;
            return false;
        }
        self.time = t;
        if rng.random::<f64>() * total < merge_rate {
            let x = rng.random_range(0..k);
            let mut y = rng.random_range(0..k - 1);
            if y >= x {
                y += 1;
            }
            self.merge(x.min(y), x.max(y));
        } else {
            let x = rng.random_range(0..k);
            let label = self.draw_label(theta, rng);
            self.bury(x, label);
        }
        true
    }

    /// Runs until every block is in the cemetery.
    pub fn run_to_absorption<R: Rng + ?Sized>(
        &mut self,
        d: f64,
        c: f64,
        theta: &ThetaSource,
        max_events: u64,
        rng: &mut R,
    ) -> Result<()> {
        let mut events = 0u64;
        while !self.is_absorbed() {
            if !self.step_until(d, c, theta, f64::INFINITY, rng) {
                return Err(GraphemeError::NonTermination(events));
            }
            events += 1;
            if events > max_events {
                return Err(GraphemeError::NonTermination(events));
            }
        }
        Ok(())
    }

    /// Time-integral of the number of active block pairs over `[0, time]`.
    pub fn active_pair_integral(&self) -> f64 {
        let mut acc = 0.0;
        for (x, &(t0, k)) in self.history.iter().enumerate() {
            let t1 = self.history.get(x + 1).map(|h| h.0).unwrap_or(self.time).min(self.time);
            let pairs = (k * k.saturating_sub(1) / 2) as f64;
            acc += pairs * (t1 - t0).max(0.0);
        }
        acc
    }

    /// Freezes a block configuration for a duration (used by tests and the
    /// Feynman–Kac weight examples).
    pub fn advance_frozen(&mut self, dt: f64) {
        self.time += dt;
    }
}

/// Coalescent with cemetery of `n` singletons run for dual time `horizon`.
pub fn coalescent_run<R: Rng + ?Sized>(
    n: usize,
    d: f64,
    c: f64,
    theta: &ThetaSource,
    horizon: f64,
    rng: &mut R,
) -> Result<CoalescentState> {
    if n == 0 {
        return Err(GraphemeError::InvalidParams("coalescent needs n ≥ 1".into()));
    }
    if !(d >= 0.0 && c >= 0.0) || (d == 0.0 && c == 0.0) {
        return Err(GraphemeError::InvalidParams("need d > 0 or c > 0, both nonnegative".into()));
    }
    let mut st = CoalescentState::singletons(n);
    while st.step_until(d, c, theta, horizon, rng) {}
    Ok(st)
}

/// `exp(multiplier · ∫ #active pairs ds)` along the dual path.
pub fn fk_weight(dual: &CoalescentState, multiplier: f64) -> f64 {
    (multiplier * dual.active_pair_integral()).exp()
}

/// Sample matrices of `m` vertices of the initial grapheme.
#[derive(Debug, Clone)]
pub struct ForwardSample {
    pub r: Vec<Vec<f64>>,
    pub h: Vec<Vec<bool>>,
    pub types: Vec<TypeLabel>,
}

impl ForwardSample {
    pub fn from_tuple(mats: &StateMatrices, tuple: &[usize]) -> Self {
        ForwardSample {
            r: tuple.iter().map(|&i| tuple.iter().map(|&j| mats.r[i][j]).collect()).collect(),
            h: tuple.iter().map(|&i| tuple.iter().map(|&j| mats.h[i][j]).collect()).collect(),
            types: tuple.iter().map(|&i| mats.types[i]).collect(),
        }
    }
}

/// Value of the duality function. Sample index `i` is represented in the
/// initial grapheme by the sampled vertex of the smallest index in its dual
/// block; `unrelated` is the initial-grapheme distance used for pairs
/// involving a cemetery block (twice the initial time).
pub fn duality_h(
    sample: &ForwardSample,
    dual: &CoalescentState,
    spec: &DualityFunctionSpec,
    unrelated: f64,
) -> Result<f64> {
    let m = spec.m;
    for got in [sample.r.len(), sample.h.len(), sample.types.len(), dual.size()] {
        if got != m {
            return Err(GraphemeError::DimensionMismatch { expected: m, got });
        }
    }
    let rep: Vec<usize> = (0..m).map(|i| dual.blocks[dual.block_of(i)].members.iter().copied().min().unwrap()).collect();
    Ok(h_with(spec, dual, &rep, unrelated, |a, b| sample.r[a][b], |a, b| sample.h[a][b], |a| sample.types[a]))
}

fn h_with(
    spec: &DualityFunctionSpec,
    dual: &CoalescentState,
    rep: &[usize],
    unrelated: f64,
    r0: impl Fn(usize, usize) -> f64,
    h0: impl Fn(usize, usize) -> bool,
    type0: impl Fn(usize) -> TypeLabel,
) -> f64 {
    let grow = 2.0 * dual.time();
    spec.eval_with(
        |i, j| {
            if i == j {
                return 0.0;
            }
            if dual.same_block(i, j) {
                return dual.pair_distance(i, j);
            }
            match (dual.cemetery_label(i), dual.cemetery_label(j)) {
                (None, None) => r0(rep[i], rep[j]) + grow,
                _ => unrelated + grow,
            }
        },
        |i, j| {
            if i == j || dual.same_block(i, j) {
                return true;
            }
            match (dual.cemetery_label(i), dual.cemetery_label(j)) {
                (None, None) => h0(rep[i], rep[j]),
                (Some(a), Some(b)) => a == b,
                (Some(a), None) => a == type0(rep[j]),
                (None, Some(b)) => b == type0(rep[i]),
            }
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityReport {
    pub lhs: f64,
    pub se_lhs: f64,
    pub rhs: f64,
    pub se_rhs: f64,
    pub z: f64,
    pub replicas: usize,
}

pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Largest number of ordered tuples enumerated exactly per replica.
const EXACT_TUPLE_LIMIT: f64 = 1e5;
const MC_SAMPLES: usize = 2000;

fn monomial_estimate<R: Rng + ?Sized>(mats: &StateMatrices, state: &GraphemeState, spec: &DualityFunctionSpec, rng: &mut R) -> Result<f64> {
    if falling_factorial(mats.n, spec.m) <= EXACT_TUPLE_LIMIT {
        Ok(mats.monomial(spec))
    } else {
        let mut acc = 0.0;
        for _ in 0..MC_SAMPLES {
            let t = state.sample_distinct(spec.m, rng)?;
            acc += mats.eval(spec, &t);
        }
        Ok(acc / MC_SAMPLES as f64)
    }
}

/// Compares E[H(G_t, C_0)] from forward runs with E[H(G_0, C_t)] from dual
/// runs. `initial` holds G_0 (state, genealogy, resampling/immigration
/// parameters). Replica `r` uses streams `2r` (forward) and `2r + 1` (dual)
/// of `seed`.
pub fn check_duality(
    initial: &Simulation,
    spec: &DualityFunctionSpec,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<DualityReport> {
    spec.check()?;
    let p = &initial.params;
    if p.b > 0.0 || p.m_mut > 0.0 || p.s_sel > 0.0 || p.flip_regime() || p.size_mode != SizeMode::Fixed {
        return Err(GraphemeError::InvalidParams(
            "duality check needs fixed-size resampling/immigration dynamics".into(),
        ));
    }
    if replicas < 2 {
        return Err(GraphemeError::Infeasible("need at least 2 replicas for standard errors".into()));
    }
    if spec.m > initial.state.num_vertices() {
        return Err(GraphemeError::SampleTooLarge { requested: spec.m, available: initial.state.num_vertices() });
    }
    let t0 = initial.time();
    let g0 = StateMatrices::new(&initial.state, Some(&initial.forest))?;
    let unrelated = 2.0 * t0;

    let forward: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = replica_rng(seed, 2 * r as u64);
            let mut sim = initial.clone();
            sim.run_until(t0 + t, &mut rng)?;
            let mats = StateMatrices::new(&sim.state, Some(&sim.forest))?;
            monomial_estimate(&mats, &sim.state, spec, &mut rng)
        })
        .collect::<Result<_>>()?;

    let dual: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = replica_rng(seed, 2 * r as u64 + 1);
            let c = coalescent_run(spec.m, p.d, p.c, &p.theta, t, &mut rng)?;
            let rep: Vec<usize> = (0..spec.m).map(|i| c.blocks[c.block_of(i)].members.iter().copied().min().unwrap()).collect();
            // only the representatives' samples matter: enumerate m-tuples
            // when cheap, otherwise draw one sample
            let value = |tuple: &[usize]| {
                h_with(spec, &c, &rep, unrelated, |a, b| g0.r[tuple[a]][tuple[b]], |a, b| g0.h[tuple[a]][tuple[b]], |a| g0.types[tuple[a]])
            };
            if falling_factorial(g0.n, spec.m) <= EXACT_TUPLE_LIMIT / 10.0 {
                Ok(ordered_tuple_expectation(g0.n, g0.weights.as_deref(), spec.m, value))
            } else {
                let mut acc = 0.0;
                for _ in 0..16 {
                    let tuple = initial.state.sample_distinct(spec.m, &mut rng)?;
                    acc += value(&tuple);
                }
                Ok(acc / 16.0)
            }
        })
        .collect::<Result<_>>()?;

    let (lhs, se_lhs) = mean_se(&forward);
    let (rhs, se_rhs) = mean_se(&dual);
    let se = (se_lhs * se_lhs + se_rhs * se_rhs).sqrt();
    let z = if se > 0.0 { (lhs - rhs) / se } else if (lhs - rhs).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
    Ok(DualityReport { lhs, se_lhs, rhs, se_rhs, z, replicas })
}

/// Equilibrium grapheme of resampling plus immigration read off the dual:
/// `n` lineages are run until all have entered the cemetery; blocks sharing
/// an atomic label form one component, atomless labels give one component
/// per block. Weights are uniform.
pub fn equilibrium_dual_grapheme<R: Rng + ?Sized>(
    n: usize,
    d: f64,
    c: f64,
    theta: &ThetaSource,
    rng: &mut R,
) -> Result<GraphemeState> {
    if !(c > 0.0) {
        return Err(GraphemeError::InvalidParams("equilibrium dual requires c > 0".into()));
    }
    if n == 0 || !(d >= 0.0) {
        return Err(GraphemeError::InvalidParams("need n ≥ 1 and d ≥ 0".into()));
    }
    let mut st = CoalescentState::singletons(n);
    st.run_to_absorption(d, c, theta, 100 * n as u64 + 1000, rng)?;
    let mut comp_of_label: Vec<(TypeLabel, u64)> = Vec::new();
    let mut records = Vec::with_capacity(n);
    for (members, label) in st.blocks() {
        let label = label.expect("absorbed");
        let cid = match comp_of_label.iter().find(|(l, _)| *l == label) {
            Some(&(_, c)) => c,
            None => {
                comp_of_label.push((label, comp_of_label.len() as u64));
                comp_of_label.len() as u64 - 1
            }
        };
        for &i in members {
            records.push(VertexRecord { id: VertexId(i as u64), label, component: ComponentId(cid) });
        }
    }
    records.sort_by_key(|r| r.id);
    let founders: Vec<FounderRecord> =
        (0..comp_of_label.len() as u64).map(|c| FounderRecord { component: ComponentId(c), time: 0.0 }).collect();
    Ok(GraphemeState::from_parts(0.0, records, None, SamplingWeights::Uniform, &founders))
}

/// Population size path of a forward run with the genealogically relevant
/// events (resampling-type pair events and arrivals).
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationPath {
    pub start: f64,
    pub end: f64,
    pub initial_size: usize,
    /// (time, kind, size after the event)
    pub jumps: Vec<(f64, EventKind, usize)>,
}

impl PopulationPath {
    pub fn from_events(initial_size: usize, start: f64, end: f64, events: &[crate::dynamics::Event]) -> Self {
        let mut n = initial_size;
        let mut jumps = Vec::with_capacity(events.len());
        for e in events.iter().filter(|e| e.time <= end) {
            match e.kind {
                EventKind::Birth | EventKind::Immigration => n += 1,
                EventKind::Death | EventKind::Emigration => n -= 1,
                _ => {}
            }
            jumps.push((e.time, e.kind, n));
        }
        PopulationPath { start, end, initial_size, jumps }
    }

    /// Population size just after time `t`.
    pub fn size_at(&self, t: f64) -> usize {
        let k = self.jumps.partition_point(|j| j.0 <= t);
        if k == 0 {
            self.initial_size
        } else {
            self.jumps[k - 1].2
        }
    }
}

/// Genealogy of `m` individuals sampled at the end of a recorded path,
/// traced backwards through the recorded events: at a pair event (birth,
/// resampling, selection) with `N` individuals afterwards, a given pair of
/// tracked lineages is the parent/child pair with probability 1/C(N,2); at
/// an arrival, a tracked lineage is the newcomer with probability 1/N and
/// enters the cemetery. Exact given the path.
pub fn conditioned_dual_exact<R: Rng + ?Sized>(path: &PopulationPath, m: usize, rng: &mut R) -> Result<CoalescentState> {
    if m > path.size_at(path.end) {
        return Err(GraphemeError::SampleTooLarge { requested: m, available: path.size_at(path.end) });
    }
    let mut st = CoalescentState::singletons(m);
    for &(t, kind, n_after) in path.jumps.iter().rev() {
        if st.active.is_empty() {
            break;
        }
        st.time = path.end - t;
        let k = st.active.len();
        let nf = n_after as f64;
        match kind {
            EventKind::Birth | EventKind::FVResample | EventKind::SelectionResample => {
                let pairs_tracked = (k * (k - 1) / 2) as f64;
                let pairs_all = nf * (nf - 1.0) / 2.0;
                if pairs_all > 0.0 && rng.random::<f64>() * pairs_all < pairs_tracked {
                    let x = rng.random_range(0..k);
                    let mut y = rng.random_range(0..k - 1);
                    if y >= x {
                        y += 1;
                    }
                    st.merge(x.min(y), x.max(y));
                }
            }
            EventKind::Immigration | EventKind::ImmigrationSwap if rng.random::<f64>() * nf < k as f64 => {
                let x = rng.random_range(0..k);
                let label = st.draw_label(&ThetaSource::Atomless, rng);
                st.bury(x, label);
            }
            _ => {}
        }
    }
    st.time = path.end - path.start;
    Ok(st)
}

/// Diffusion-limit form of the conditioned dual: per-pair coalescence rate
/// `b / N(t)` and per-lineage cemetery rate `c·n_ref / N(t)` along the
/// recorded size path (backwards from its end), simulated by thinning.
pub fn conditioned_dual_thinned<R: Rng + ?Sized>(
    path: &PopulationPath,
    m: usize,
    b: f64,
    c: f64,
    n_ref: usize,
    rng: &mut R,
) -> Result<CoalescentState> {
    let n_min = path
        .jumps
        .iter()
        .map(|j| j.2)
        .chain([path.initial_size])
        .min()
        .unwrap_or(0);
    if n_min == 0 {
        return Err(GraphemeError::Infeasible("path hits extinction; conditioned dual undefined".into()));
    }
    let mut st = CoalescentState::singletons(m);
    let horizon = path.end - path.start;
    loop {
        let k = st.active.len();
        if k == 0 {
            break;
        }
        let pairs = (k * (k - 1) / 2) as f64;
        let bound = (pairs * b + k as f64 * c * n_ref as f64) / n_min as f64;
        if !(bound > 0.0) {
            break;
        }
        let e: f64 = Exp1.sample(rng);
        let s = st.time + e / bound;
        if s > horizon {
            break;
        }
        st.time = s;
        let n = path.size_at(path.end - s) as f64;
        let merge = pairs * b / n;
        let bury = k as f64 * c * n_ref as f64 / n;
        let u = rng.random::<f64>() * bound;
        if u < merge {
            let x = rng.random_range(0..k);
            let mut y = rng.random_range(0..k - 1);
            if y >= x {
                y += 1;
            }
            st.merge(x.min(y), x.max(y));
        } else if u < merge + bury {
            let x = rng.random_range(0..k);
            let label = st.draw_label(&ThetaSource::Atomless, rng);
            st.bury(x, label);
        }
    }
    st.time = horizon;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DynamicsParams;
    use crate::polynomial::{ConnectionFn, DistanceFn};
    use crate::rng::master_rng;

    #[test]
    fn single_block_has_no_events() {
        let mut rng = master_rng(0);
        let st = coalescent_run(1, 1.0, 0.0, &ThetaSource::Atomless, 10.0, &mut rng).unwrap();
        assert_eq!(st.num_blocks(), 1);
        assert!(st.log().is_empty());
        assert!(coalescent_run(3, 0.0, 0.0, &ThetaSource::Atomless, 1.0, &mut rng).is_err());
    }

    #[test]
    fn pair_merge_probability() {
        // oracle: merge time of two blocks is Exp(d)
        let mut rng = master_rng(1);
        let reps = 20_000;
        let hits = (0..reps)
            .filter(|_| coalescent_run(2, 1.0, 0.0, &ThetaSource::Atomless, 0.7, &mut rng).unwrap().num_blocks() == 1)
            .count();
        let p = hits as f64 / reps as f64;
        let want = 1.0 - (-0.7f64).exp();
        assert!((p - want).abs() < 3.5 * (want * (1.0 - want) / reps as f64).sqrt());
    }

    #[test]
    fn fk_weight_examples() {
        let mut st = CoalescentState::singletons(1);
        st.advance_frozen(2.0);
        assert_eq!(fk_weight(&st, 1.0), 1.0);
        let mut st = CoalescentState::singletons(3);
        st.advance_frozen(0.5);
        assert!((fk_weight(&st, 1.0) - (0.5f64 * 3.0).exp()).abs() < 1e-12);
        let mut st = CoalescentState::singletons(2);
        st.time = 0.8;
        st.merge(0, 1);
        st.advance_frozen(1.0);
        assert!((fk_weight(&st, 1.0) - 0.8f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn h_examples() {
        let s = GraphemeState::from_partition_literal("{0,1},{2}").unwrap();
        let mats = StateMatrices::new(&s, None).unwrap();
        let all = DualityFunctionSpec::new(2, DistanceFn::One, ConnectionFn::all_connected(2)).unwrap();
        let dual = CoalescentState::singletons(2);
        let connected = ForwardSample::from_tuple(&mats, &[0, 1]);
        let apart = ForwardSample::from_tuple(&mats, &[0, 2]);
        assert_eq!(duality_h(&connected, &dual, &all, 0.0).unwrap(), 1.0);
        assert_eq!(duality_h(&apart, &dual, &all, 0.0).unwrap(), 0.0);
        let mut merged = CoalescentState::singletons(2);
        merged.merge(0, 1);
        assert_eq!(duality_h(&apart, &merged, &all, 0.0).unwrap(), 1.0);
        let exp = DualityFunctionSpec::new(2, DistanceFn::Exp { lambda: 1.0, pairs: None }, ConnectionFn::One).unwrap();
        let mut sample = apart.clone();
        sample.r[0][1] = 1.3;
        sample.r[1][0] = 1.3;
        assert!((duality_h(&sample, &dual, &exp, 0.0).unwrap() - (-1.3f64).exp()).abs() < 1e-15);
        let three = DualityFunctionSpec::new(3, DistanceFn::One, ConnectionFn::One).unwrap();
        assert!(duality_h(&sample, &dual, &three, 0.0).is_err());
    }

    #[test]
    fn duality_at_time_zero_is_exact() {
        let mut rng = master_rng(3);
        let sim = Simulation::new(GraphemeState::from_block_sizes(&[3, 2, 1]), DynamicsParams::fleming_viot(1.0), &mut rng).unwrap();
        let spec = DualityFunctionSpec::new(2, DistanceFn::One, ConnectionFn::all_connected(2)).unwrap();
        let rep = check_duality(&sim, &spec, 0.0, 4, 9).unwrap();
        assert_eq!(rep.z, 0.0);
        assert!((rep.lhs - 8.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_dual_requires_immigration() {
        let mut rng = master_rng(4);
        assert!(equilibrium_dual_grapheme(10, 1.0, 0.0, &ThetaSource::Atomless, &mut rng).is_err());
        let g = equilibrium_dual_grapheme(50, 1.0, 1000.0, &ThetaSource::Atomless, &mut rng).unwrap();
        assert!(crate::state::validate(&g).is_empty());
        assert!(g.num_components() >= 45);
        let g = equilibrium_dual_grapheme(50, 1.0, 0.5, &ThetaSource::Atomic(vec![1.0, 1.0]), &mut rng).unwrap();
        assert!(g.num_components() <= 2);
        assert!(crate::state::validate(&g).is_empty());
    }
}
