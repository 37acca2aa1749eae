//! Exact event-driven simulation of the finite grapheme dynamics.
//!
//! Each step draws, in this order, the exponential holding time at the total
//! rate, the event category proportionally to its rate, and then the
//! participants. Forced transitions go through the same code path, which is
//! what replays and the generator oracle rely on.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{GraphemeError, Result};
use crate::genealogy::GenealogyForest;
use crate::record::{SnapshotStats, StateSnapshot, TrajectoryRecord};
use crate::state::{weighted_index, EdgeInit, GraphemeState, TypeLabel, VertexId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThetaSource {
    /// Every draw is a new label never seen before.
    Atomless,
    /// Finite weight table; draws are `Atom(k)` with probability ∝ weight k.
    Atomic(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MutationKernel {
    /// Mutants always receive a fresh label.
    Atomless,
    /// Row k gives the target distribution for a mutant currently of type
    /// `Atom(k)`. Vertices with fresh labels use row 0.
    Table(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeMode {
    Fixed,
    Variable,
}

/// How new within-component pairs are initialised in the edge-flip regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeInitMode {
    /// Present with probability a⁺/(a⁺+a⁻).
    Stationary,
    /// Always present.
    Complete,
}

/// Fitness table for selection; labels outside the table get `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub atoms: Vec<f64>,
    pub default: f64,
}

impl Default for Fitness {
    fn default() -> Self {
        Fitness { atoms: Vec::new(), default: 1.0 }
    }
}

impl Fitness {
    pub fn of(&self, label: TypeLabel) -> f64 {
        match label {
            TypeLabel::Atom(k) => self.atoms.get(k).copied().unwrap_or(self.default),
            TypeLabel::Fresh(_) => self.default,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Resampling rate per vertex pair.
    pub d: f64,
    /// Per-vertex rate of the birth/death coin.
    pub b: f64,
    /// Immigration/emigration rate per vertex.
    pub c: f64,
    pub theta: ThetaSource,
    pub m_mut: f64,
    pub mutation: MutationKernel,
    pub s_sel: f64,
    pub fitness: Fitness,
    pub a_plus: f64,
    pub a_minus: f64,
    pub size_mode: SizeMode,
    pub edge_init: EdgeInitMode,
    /// Reference size for variable-size immigration (total rate c·n_ref);
    /// defaults to the initial population size.
    pub n_ref: Option<usize>,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            d: 0.0,
            b: 0.0,
            c: 0.0,
            theta: ThetaSource::Atomless,
            m_mut: 0.0,
            mutation: MutationKernel::Atomless,
            s_sel: 0.0,
            fitness: Fitness::default(),
            a_plus: 0.0,
            a_minus: 0.0,
            size_mode: SizeMode::Fixed,
            edge_init: EdgeInitMode::Stationary,
            n_ref: None,
        }
    }
}

impl DynamicsParams {
    pub fn fleming_viot(d: f64) -> Self {
        DynamicsParams { d, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GraphemeError::InvalidParams(m));
        for (name, v) in [
            ("d", self.d),
            ("b", self.b),
            ("c", self.c),
            ("m_mut", self.m_mut),
            ("s_sel", self.s_sel),
            ("a_plus", self.a_plus),
            ("a_minus", self.a_minus),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("rate {name} = {v} must be finite and nonnegative"));
            }
        }
        if [self.d, self.b, self.c, self.m_mut, self.s_sel, self.a_plus, self.a_minus].iter().all(|&v| v == 0.0) {
            return bad("at least one rate must be positive".into());
        }
        if self.size_mode == SizeMode::Fixed && self.b > 0.0 {
            return bad("fixed size requires b = 0".into());
        }
        if let ThetaSource::Atomic(w) = &self.theta {
            if w.is_empty() || w.iter().any(|x| !(*x >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
                return bad("atomic theta needs nonnegative weights with positive sum".into());
            }
        }
        if let MutationKernel::Table(rows) = &self.mutation {
            let k = rows.len();
            if k == 0 || rows.iter().any(|r| r.len() != k || r.iter().any(|x| !(*x >= 0.0)) || !(r.iter().sum::<f64>() > 0.0)) {
                return bad("mutation table must be square with nonnegative rows of positive sum".into());
            }
        }
        if self.fitness.atoms.iter().chain([&self.fitness.default]).any(|&f| !(f > 0.0 && f <= 1.0)) {
            return bad("fitness values must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Diffusion scaling for a population of order `n0`: the birth/death coin
    /// runs at rate `b·n0` per vertex, so that total mass `N/n0` has an O(1)
    /// limit. Other rates are unchanged.
    pub fn diffusion_scaled(&self, n0: usize) -> Self {
        DynamicsParams { b: self.b * n0 as f64, ..self.clone() }
    }

    pub fn flip_regime(&self) -> bool {
        self.a_plus > 0.0 || self.a_minus > 0.0
    }

    pub fn edge_init(&self) -> EdgeInit {
        match self.edge_init {
            EdgeInitMode::Complete => EdgeInit::Complete,
            EdgeInitMode::Stationary => {
                let s = self.a_plus + self.a_minus;
                EdgeInit::Stationary(if s > 0.0 { self.a_plus / s } else { 1.0 })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    FVResample,
    Birth,
    Death,
    ImmigrationSwap,
    Immigration,
    Emigration,
    Mutation,
    SelectionResample,
    EdgeOn,
    EdgeOff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "event")]
    pub kind: EventKind,
    /// FV/selection: (winner, loser); birth: (parent, child); swap:
    /// (removed, newcomer); edge flips: the pair; otherwise the vertex.
    pub participants: Vec<VertexId>,
    pub time: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<TypeLabel>,
}

/// A fully specified transition, applied at a given time.
#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    FVResample { winner: VertexId, loser: VertexId },
    Birth { parent: VertexId },
    Death { vertex: VertexId },
    ImmigrationSwap { vertex: VertexId, label: TypeLabel },
    Immigration { label: TypeLabel },
    Emigration { vertex: VertexId },
    Mutation { vertex: VertexId, label: TypeLabel },
    SelectionResample { winner: VertexId, loser: VertexId },
    EdgeOn { a: VertexId, b: VertexId },
    EdgeOff { a: VertexId, b: VertexId },
}

/// Rates of the event categories in the fixed draw order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CategoryRates {
    pub fv: f64,
    pub birth: f64,
    pub death: f64,
    pub swap: f64,
    pub emigration: f64,
    pub immigration: f64,
    pub mutation: f64,
    pub selection: f64,
    pub edge_on: f64,
    pub edge_off: f64,
}

impl CategoryRates {
    fn as_array(&self) -> [(EventKind, f64); 10] {
        [
            (EventKind::FVResample, self.fv),
            (EventKind::Birth, self.birth),
            (EventKind::Death, self.death),
            (EventKind::ImmigrationSwap, self.swap),
            (EventKind::Emigration, self.emigration),
            (EventKind::Immigration, self.immigration),
            (EventKind::Mutation, self.mutation),
            (EventKind::SelectionResample, self.selection),
            (EventKind::EdgeOn, self.edge_on),
            (EventKind::EdgeOff, self.edge_off),
        ]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().map(|x| x.1).sum()
    }
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

pub fn category_rates(state: &GraphemeState, params: &DynamicsParams) -> CategoryRates {
    let n = state.num_vertices();
    let nf = n as f64;
    let mut r = CategoryRates { fv: params.d * choose2(n), ..Default::default() };
    r.birth = params.b / 2.0 * nf;
    r.death = params.b / 2.0 * nf;
    match params.size_mode {
        SizeMode::Fixed => r.swap = params.c * nf,
        SizeMode::Variable => {
            r.emigration = params.c * nf;
            r.immigration = params.c * params.n_ref.unwrap_or(n) as f64;
        }
    }
    r.mutation = params.m_mut * nf;
    if n >= 2 {
        r.selection = params.s_sel / nf * choose2(n);
    }
    if state.is_flip_regime() {
        let edges = state.edge_count();
        r.edge_on = params.a_plus * (state.within_component_pairs() - edges) as f64;
        r.edge_off = params.a_minus * edges as f64;
    }
    r
}

/// Total jump rate of the state.
pub fn total_rate(state: &GraphemeState, params: &DynamicsParams) -> f64 {
    category_rates(state, params).total()
}

pub fn draw_theta<R: Rng + ?Sized>(theta: &ThetaSource, state: &mut GraphemeState, rng: &mut R) -> TypeLabel {
    match theta {
        ThetaSource::Atomless => state.fresh_label(),
        ThetaSource::Atomic(w) => TypeLabel::Atom(weighted_index(w, rng)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Event(Event),
    /// The next event would fall after the limit; time was advanced to it.
    Reached,
    /// Total rate zero: no event can ever happen.
    Terminal,
}

/// A running trajectory: state, genealogy and parameters.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub state: GraphemeState,
    pub forest: GenealogyForest,
    pub params: DynamicsParams,
    events: u64,
}

impl Simulation {
    pub fn new<R: Rng + ?Sized>(mut state: GraphemeState, mut params: DynamicsParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        if params.n_ref.is_none() {
            params.n_ref = Some(state.num_vertices());
        }
        if params.flip_regime() {
            state.enable_flip_regime(params.edge_init(), rng);
        }
        let forest = GenealogyForest::for_state(&state);
        Ok(Simulation { state, forest, params, events: 0 })
    }

    /// Uses a prepared forest (e.g. with initial distances).
    pub fn with_forest<R: Rng + ?Sized>(
        mut state: GraphemeState,
        forest: GenealogyForest,
        mut params: DynamicsParams,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        if params.n_ref.is_none() {
            params.n_ref = Some(state.num_vertices());
        }
        if params.flip_regime() {
            state.enable_flip_regime(params.edge_init(), rng);
        }
        Ok(Simulation { state, forest, params, events: 0 })
    }

    pub fn time(&self) -> f64 {
        self.state.time()
    }

    pub fn events_applied(&self) -> u64 {
        self.events
    }

    pub fn rates(&self) -> CategoryRates {
        category_rates(&self.state, &self.params)
    }

    fn advance_to(&mut self, t: f64) {
        self.state.set_time(t);
        self.forest.set_time(t);
    }

    /// Copy with the clock moved to `t` and no events applied: the state the
    /// process occupies at `t` on the event that it does not jump.
    pub fn frozen_at(&self, t: f64) -> Result<Simulation> {
        if t < self.time() {
            return Err(GraphemeError::NotApplicable(format!("time {t} before current time {}", self.time())));
        }
        let mut s = self.clone();
        s.advance_to(t);
        Ok(s)
    }

    /// One event with no time limit.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepOutcome> {
        self.step_until(f64::INFINITY, rng)
    }

    /// One event if it happens no later than `limit`; otherwise the clock
    /// moves to `limit` (valid by memorylessness).
    pub fn step_until<R: Rng + ?Sized>(&mut self, limit: f64, rng: &mut R) -> Result<StepOutcome> {
        let rates = self.rates();
        let total = rates.total();
        if !(total > 0.0) {
            if limit.is_finite() {
                self.advance_to(limit.max(self.time()));
            }
            return Ok(StepOutcome::Terminal);
        }
        let e: f64 = Exp1.sample(rng);
        let t = self.time() + e / total;
        if t > limit {
            self.advance_to(limit);
            return Ok(StepOutcome::Reached);
        }
        let mut u = rng.random::<f64>() * total;
        let mut kind = EventKind::FVResample;
        for (k, r) in rates.as_array() {
            if r <= 0.0 {
                continue;
            }
            kind = k;
            if u < r {
                break;
            }
            u -= r;
        }
        let tr = self.draw_participants(kind, rng);
        self.apply_at(tr, t, rng).map(StepOutcome::Event)
    }

    /// Runs until `horizon` or a terminal state.
    pub fn run_until<R: Rng + ?Sized>(&mut self, horizon: f64, rng: &mut R) -> Result<()> {
        while self.time() < horizon {
            match self.step_until(horizon, rng)? {
                StepOutcome::Event(_) => {}
                StepOutcome::Reached | StepOutcome::Terminal => break,
            }
        }
        Ok(())
    }

    fn uniform_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let n = self.state.num_vertices();
        let x = rng.random_range(0..n);
        let mut y = rng.random_range(0..n - 1);
        if y >= x {
            y += 1;
        }
        (x, y)
    }

    fn random_vertex<R: Rng + ?Sized>(&self, rng: &mut R) -> VertexId {
        self.state.vertex_id(rng.random_range(0..self.state.num_vertices()))
    }

    fn draw_participants<R: Rng + ?Sized>(&mut self, kind: EventKind, rng: &mut R) -> Transition {
        let id = |s: &Self, i: usize| s.state.vertex_id(i);
        match kind {
            EventKind::FVResample => {
                // ordered uniform pair: the first is the winner (fair coin)
                let (x, y) = self.uniform_pair(rng);
                Transition::FVResample { winner: id(self, x), loser: id(self, y) }
            }
            EventKind::Birth => Transition::Birth { parent: self.random_vertex(rng) },
            EventKind::Death => Transition::Death { vertex: self.random_vertex(rng) },
            EventKind::ImmigrationSwap => {
                let vertex = self.random_vertex(rng);
                let label = draw_theta(&self.params.theta, &mut self.state, rng);
                Transition::ImmigrationSwap { vertex, label }
            }
            EventKind::Emigration => Transition::Emigration { vertex: self.random_vertex(rng) },
            EventKind::Immigration => {
                let label = draw_theta(&self.params.theta, &mut self.state, rng);
                Transition::Immigration { label }
            }
            EventKind::Mutation => {
                let vertex = self.random_vertex(rng);
                let label = match &self.params.mutation {
                    MutationKernel::Atomless => self.state.fresh_label(),
                    MutationKernel::Table(rows) => {
                        let cur = self.state.type_label(self.state.index_of(vertex).unwrap());
                        let row = match cur {
                            TypeLabel::Atom(k) if k < rows.len() => k,
                            _ => 0,
                        };
                        TypeLabel::Atom(weighted_index(&rows[row], rng))
                    }
                };
                Transition::Mutation { vertex, label }
            }
            EventKind::SelectionResample => {
                let (x, y) = self.uniform_pair(rng);
                let fx = self.params.fitness.of(self.state.type_label(x));
                let fy = self.params.fitness.of(self.state.type_label(y));
                if rng.random::<f64>() * (fx + fy) < fx {
                    Transition::SelectionResample { winner: id(self, x), loser: id(self, y) }
                } else {
                    Transition::SelectionResample { winner: id(self, y), loser: id(self, x) }
                }
            }
            EventKind::EdgeOn => {
                let s = &self.state;
                let total = (s.within_component_pairs() - s.edge_count()) as f64;
                let cid = s
                    .pick_component(total, |c| (c.pair_count() - c.edge_count() as u64) as f64, rng)
                    .expect("positive edge-on rate");
                let (a, b) = s.random_non_edge(cid, rng).expect("absent pair exists");
                Transition::EdgeOn { a: id(self, a), b: id(self, b) }
            }
            EventKind::EdgeOff => {
                let s = &self.state;
                let cid =
                    s.pick_component(s.edge_count() as f64, |c| c.edge_count() as f64, rng).expect("positive rate");
                let (a, b) = s.random_edge(cid, rng).expect("edge exists");
                Transition::EdgeOff { a: id(self, a), b: id(self, b) }
            }
        }
    }

    fn index(&self, v: VertexId) -> Result<usize> {
        self.state.index_of(v).ok_or(GraphemeError::UnknownVertex(v.0))
    }

    /// Applies a transition at time `t` (not earlier than the current time).
    pub fn apply_at<R: Rng + ?Sized>(&mut self, tr: Transition, t: f64, rng: &mut R) -> Result<Event> {
        if t < self.time() {
            return Err(GraphemeError::NotApplicable(format!("time {t} before current time {}", self.time())));
        }
        self.check(&tr)?;
        self.advance_to(t);
        let init = self.params.edge_init();
        let mut label = None;
        let (kind, participants) = match tr {
            Transition::FVResample { winner, loser } | Transition::SelectionResample { winner, loser } => {
                let kind = if matches!(tr, Transition::FVResample { .. }) {
                    EventKind::FVResample
                } else {
                    EventKind::SelectionResample
                };
                let (wi, li) = (self.index(winner)?, self.index(loser)?);
                let target = self.state.component_of(wi);
                self.state.move_vertex(li, target, init, rng);
                self.forest.replace_by_child(loser, winner, t);
                (kind, vec![winner, loser])
            }
            Transition::Birth { parent } => {
                let pi = self.index(parent)?;
                let cid = self.state.component_of(pi);
                let (child, _) = self.state.add_vertex_to_component(cid, init, rng);
                self.forest.birth(parent, child, t);
                (EventKind::Birth, vec![parent, child])
            }
            Transition::Death { vertex } => {
                let i = self.index(vertex)?;
                self.state.remove_vertex(i);
                self.forest.kill(vertex);
                (EventKind::Death, vec![vertex])
            }
            Transition::Emigration { vertex } => {
                let i = self.index(vertex)?;
                self.state.remove_vertex(i);
                self.forest.kill(vertex);
                (EventKind::Emigration, vec![vertex])
            }
            Transition::ImmigrationSwap { vertex, label: l } => {
                let i = self.index(vertex)?;
                let newcomer = self.state.swap_in(i, l, matches!(l, TypeLabel::Atom(_)), init, rng);
                self.forest.kill(vertex);
                self.forest.new_root(newcomer, t);
                label = Some(l);
                (EventKind::ImmigrationSwap, vec![vertex, newcomer])
            }
            Transition::Immigration { label: l } => {
                let (newcomer, _) = self.state.add_immigrant(l, matches!(l, TypeLabel::Atom(_)), init, rng);
                self.forest.new_root(newcomer, t);
                label = Some(l);
                (EventKind::Immigration, vec![newcomer])
            }
            Transition::Mutation { vertex, label: l } => {
                let i = self.index(vertex)?;
                match l {
                    TypeLabel::Fresh(_) => {
                        self.state.refound_vertex(i, l);
                    }
                    TypeLabel::Atom(_) => {
                        if self.state.type_label(i) != l {
                            match self.state.component_with_label(l) {
                                Some(cid) => self.state.move_vertex(i, cid, init, rng),
                                None => {
                                    self.state.refound_vertex(i, l);
                                }
                            }
                        }
                    }
                }
                label = Some(l);
                (EventKind::Mutation, vec![vertex])
            }
            Transition::EdgeOn { a, b } | Transition::EdgeOff { a, b } => {
                let on = matches!(tr, Transition::EdgeOn { .. });
                let (ia, ib) = (self.index(a)?, self.index(b)?);
                self.state.set_edge(ia, ib, on);
                (if on { EventKind::EdgeOn } else { EventKind::EdgeOff }, vec![a, b])
            }
        };
        self.forest.tick();
        self.events += 1;
        Ok(Event { kind, participants, time: t, label })
    }

    fn check(&self, tr: &Transition) -> Result<()> {
        let need = |v: &VertexId| self.index(*v).map(|_| ());
        match tr {
            Transition::FVResample { winner, loser } | Transition::SelectionResample { winner, loser } => {
                need(winner)?;
                need(loser)?;
                if winner == loser {
                    return Err(GraphemeError::NotApplicable("winner and loser coincide".into()));
                }
            }
            Transition::Birth { parent: v }
            | Transition::Death { vertex: v }
            | Transition::Emigration { vertex: v }
            | Transition::ImmigrationSwap { vertex: v, .. }
            | Transition::Mutation { vertex: v, .. } => need(v)?,
            Transition::Immigration { .. } => {}
            Transition::EdgeOn { a, b } | Transition::EdgeOff { a, b } => {
                let (ia, ib) = (self.index(*a)?, self.index(*b)?);
                if !self.state.is_flip_regime() {
                    return Err(GraphemeError::NotApplicable("edge flips need the flip regime".into()));
                }
                if ia == ib || self.state.component_of(ia) != self.state.component_of(ib) {
                    return Err(GraphemeError::NotApplicable("edge flip outside a component".into()));
                }
                let present = self.state.has_edge(ia, ib);
                if present == matches!(tr, Transition::EdgeOn { .. }) {
                    return Err(GraphemeError::NotApplicable("edge already in target state".into()));
                }
            }
        }
        Ok(())
    }
}

/// Options for [`run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub horizon: f64,
    pub snapshot_interval: f64,
    pub log_events: bool,
}

/// Simulates from `initial` until `horizon` (or absorption), taking snapshot
/// statistics at multiples of the interval and at the horizon.
pub fn run<R: Rng + ?Sized>(
    initial: GraphemeState,
    params: DynamicsParams,
    opts: RunOptions,
    rng: &mut R,
) -> Result<(TrajectoryRecord, Simulation)> {
    if !(opts.horizon > 0.0) {
        return Err(GraphemeError::InvalidParams("horizon must be positive".into()));
    }
    if !(opts.snapshot_interval > 0.0) {
        return Err(GraphemeError::InvalidParams("snapshot interval must be positive".into()));
    }
    let mut sim = Simulation::new(initial, params, rng)?;
    let mut rec = TrajectoryRecord::default();
    let start = sim.time();
    let mut k = 0u64;
    loop {
        let target = (start + k as f64 * opts.snapshot_interval).min(start + opts.horizon);
        loop {
            match sim.step_until(target, rng)? {
                StepOutcome::Event(e) => {
                    if opts.log_events {
                        rec.events.push(e);
                    }
                }
                StepOutcome::Reached => break,
                StepOutcome::Terminal => {
                    rec.terminal = true;
                    break;
                }
            }
        }
        rec.snapshots.push(SnapshotStats::of(&sim.state));
        if target >= start + opts.horizon {
            break;
        }
        k += 1;
    }
    rec.final_state = Some(StateSnapshot::of(&sim.state));
    Ok((rec, sim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;
    use crate::state::validate;

    #[test]
    fn total_rate_examples() {
        let s3 = GraphemeState::singletons(3);
        assert_eq!(total_rate(&s3, &DynamicsParams::fleming_viot(1.0)), 3.0);
        let s5 = GraphemeState::singletons(5);
        let p = DynamicsParams { c: 2.0, ..Default::default() };
        assert_eq!(total_rate(&s5, &p), 10.0);
        let empty = GraphemeState::singletons(0);
        let dw = DynamicsParams { b: 1.0, size_mode: SizeMode::Variable, ..Default::default() };
        assert_eq!(total_rate(&empty, &dw), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(DynamicsParams::default().validate().is_err());
        assert!(DynamicsParams { b: 1.0, ..Default::default() }.validate().is_err());
        assert!(DynamicsParams { d: -1.0, ..Default::default() }.validate().is_err());
        let mut p = DynamicsParams::fleming_viot(1.0);
        p.fitness.atoms = vec![1.5];
        assert!(p.validate().is_err());
    }

    #[test]
    fn forced_fv_merges_components() {
        let mut rng = master_rng(0);
        let mut sim = Simulation::new(GraphemeState::singletons(3), DynamicsParams::fleming_viot(1.0), &mut rng).unwrap();
        let ids: Vec<VertexId> = sim.state.vertex_ids().collect();
        let old = sim.forest.lineage_of(ids[1]).unwrap();
        sim.apply_at(Transition::FVResample { winner: ids[0], loser: ids[1] }, 0.5, &mut rng).unwrap();
        assert_eq!(sim.state.num_components(), 2);
        assert_eq!(sim.state.component_of(0), sim.state.component_of(1));
        let new = sim.forest.lineage_of(ids[1]).unwrap();
        assert_ne!(old, new);
        assert_eq!(sim.forest.parent(new).unwrap(), Some(sim.forest.lineage_of(ids[0]).unwrap()));
        assert_eq!(sim.state.type_label(1), sim.state.type_label(0));
        assert!(validate(&sim.state).is_empty());
    }

    #[test]
    fn death_of_last_member_drops_component() {
        let mut rng = master_rng(0);
        let p = DynamicsParams { b: 1.0, size_mode: SizeMode::Variable, ..Default::default() };
        let mut sim = Simulation::new(GraphemeState::singletons(2), p, &mut rng).unwrap();
        let v = sim.state.vertex_id(0);
        let cid = sim.state.component_of(0);
        sim.apply_at(Transition::Death { vertex: v }, 1.0, &mut rng).unwrap();
        assert!(sim.state.component(cid).is_none());
        assert!(sim.state.founder_time(cid).is_none());
    }

    #[test]
    fn extinction_is_terminal() {
        let mut rng = master_rng(11);
        let p = DynamicsParams { b: 2.0, size_mode: SizeMode::Variable, ..Default::default() };
        let mut sim = Simulation::new(GraphemeState::singletons(3), p, &mut rng).unwrap();
        let mut last = StepOutcome::Reached;
        for _ in 0..100_000 {
            last = sim.step(&mut rng).unwrap();
            if last == StepOutcome::Terminal {
                break;
            }
        }
        assert_eq!(last, StepOutcome::Terminal);
        assert_eq!(sim.state.num_vertices(), 0);
    }

    #[test]
    fn pure_regime_keeps_edges_implicit() {
        let mut rng = master_rng(2);
        let p = DynamicsParams { d: 1.0, c: 0.5, ..Default::default() };
        let mut sim = Simulation::new(GraphemeState::singletons(10), p, &mut rng).unwrap();
        sim.run_until(5.0, &mut rng).unwrap();
        assert!(!sim.state.is_flip_regime());
        assert!(sim.state.edges_present().is_empty());
    }

    #[test]
    fn step_until_stops_at_limit() {
        let mut rng = master_rng(4);
        let mut sim = Simulation::new(GraphemeState::singletons(2), DynamicsParams::fleming_viot(1e-9), &mut rng).unwrap();
        assert_eq!(sim.step_until(1.0, &mut rng).unwrap(), StepOutcome::Reached);
        assert_eq!(sim.time(), 1.0);
    }

    #[test]
    fn atomic_immigrants_join_their_type() {
        let mut rng = master_rng(9);
        let p = DynamicsParams { c: 1.0, theta: ThetaSource::Atomic(vec![1.0]), ..Default::default() };
        let mut sim = Simulation::new(GraphemeState::singletons(6), p, &mut rng).unwrap();
        sim.run_until(30.0, &mut rng).unwrap();
        assert_eq!(sim.state.num_components(), 1);
        assert_eq!(sim.state.type_label(0), TypeLabel::Atom(0));
        assert!(validate(&sim.state).is_empty());
    }

    #[test]
    fn run_snapshots_on_grid() {
        let mut rng = master_rng(5);
        let opts = RunOptions { horizon: 1.0, snapshot_interval: 0.3, log_events: true };
        let (rec, sim) = run(GraphemeState::singletons(5), DynamicsParams::fleming_viot(1.0), opts, &mut rng).unwrap();
        let times: Vec<f64> = rec.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times.len(), 5);
        assert!((times[3] - 0.9).abs() < 1e-12 && times[4] == 1.0);
        assert_eq!(sim.time(), 1.0);
        assert!(rec.events.windows(2).all(|w| w[0].time < w[1].time));
    }
}
