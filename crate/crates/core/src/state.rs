//! Finite grapheme states.
//!
//! A state stores the completely-connected-component partition explicitly
//! (the connection function is derived from it), type labels, the sampling
//! weights and, in the edge-flip regime, the set of present edges inside each
//! component. Vertices live in a dense vector; their stable [`VertexId`]s
//! survive births and deaths of other vertices.

use std::collections::HashMap;
use std::fmt;

use indexmap::{IndexMap, IndexSet};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GraphemeError, Result};

/// Tolerance for the sampling weights summing to one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// The mark of a vertex.
///
/// `Fresh` labels come from an atomless source and are never reused within a
/// run; `Atom` labels index a finite weight table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeLabel {
    Fresh(u64),
    Atom(usize),
}

/// Unordered vertex pair, stored with the smaller id first.
pub type EdgeKey = (VertexId, VertexId);

pub fn edge_key(a: VertexId, b: VertexId) -> EdgeKey {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// How the pairs formed when a vertex enters a component are initialised in
/// the edge-flip regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeInit {
    /// Each new pair is present independently with the given probability
    /// (the stationary law of the two-state flip chain).
    Stationary(f64),
    /// Every new pair starts present.
    Complete,
}

impl EdgeInit {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> bool {
        match self {
            EdgeInit::Complete => true,
            EdgeInit::Stationary(p) => p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SamplingWeights {
    Uniform,
    /// One weight per dense vertex index.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub(crate) struct Vertex {
    pub(crate) id: VertexId,
    pub(crate) label: TypeLabel,
    pub(crate) component: ComponentId,
    /// Position inside the component's member list.
    slot: usize,
    /// Present neighbours (edge-flip regime only).
    neighbors: IndexSet<VertexId>,
}

#[derive(Debug, Clone)]
pub struct Component {
    members: Vec<usize>,
    founder_time: f64,
    label: TypeLabel,
    edges: IndexSet<EdgeKey>,
}

impl Component {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn founder_time(&self) -> f64 {
        self.founder_time
    }

    pub fn label(&self) -> TypeLabel {
        self.label
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn pair_count(&self) -> u64 {
        pairs(self.members.len())
    }

    /// Dense indices of the members.
    pub fn members(&self) -> &[usize] {
        &self.members
    }
}

fn pairs(k: usize) -> u64 {
    let k = k as u64;
    k * k.saturating_sub(1) / 2
}

/// A finite grapheme at one time point.
#[derive(Debug, Clone)]
pub struct GraphemeState {
    time: f64,
    vertices: Vec<Vertex>,
    index_of: HashMap<VertexId, usize>,
    components: IndexMap<ComponentId, Component>,
    weights: SamplingWeights,
    flip_regime: bool,
    next_vertex: u64,
    next_component: u64,
    next_fresh: u64,
    within_pairs: u64,
    edge_total: u64,
}

/// Vertex description used to build states from external data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: VertexId,
    #[serde(rename = "type")]
    pub label: TypeLabel,
    pub component: ComponentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FounderRecord {
    pub component: ComponentId,
    pub time: f64,
}

impl GraphemeState {
    fn empty(time: f64) -> Self {
        GraphemeState {
            time,
            vertices: Vec::new(),
            index_of: HashMap::new(),
            components: IndexMap::new(),
            weights: SamplingWeights::Uniform,
            flip_regime: false,
            next_vertex: 0,
            next_component: 0,
            next_fresh: 0,
            within_pairs: 0,
            edge_total: 0,
        }
    }

    /// `n` singleton components with distinct fresh labels at time 0.
    pub fn singletons(n: usize) -> Self {
        let mut state = Self::empty(0.0);
        for _ in 0..n {
            let label = state.fresh_label();
            state.add_vertex_new_component(label);
        }
        state
    }

    /// Components given as block sizes, each block with its own fresh label.
    pub fn from_block_sizes(sizes: &[usize]) -> Self {
        let mut state = Self::empty(0.0);
        for &size in sizes {
            if size == 0 {
                continue;
            }
            let label = state.fresh_label();
            let (_, first) = state.add_vertex_new_component(label);
            let comp = state.vertices[first].component;
            for _ in 1..size {
                state.add_vertex_to_component(comp, EdgeInit::Complete, &mut NoRng);
            }
        }
        state
    }

    /// Parses a partition literal such as `{1,2},{3}` over vertex ids.
    /// Every listed id becomes a vertex; each block gets a fresh label.
    pub fn from_partition_literal(literal: &str) -> Result<Self> {
        let bad = |msg: &str| GraphemeError::Parse(format!("partition literal `{literal}`: {msg}"));
        let mut records = Vec::new();
        let mut rest = literal.trim();
        let mut comp = 0u64;
        let mut seen = std::collections::HashSet::new();
        while !rest.is_empty() {
            rest = rest.trim_start_matches(|c: char| c == ',' || c.is_whitespace());
            if rest.is_empty() {
                break;
            }
            if !rest.starts_with('{') {
                return Err(bad("expected `{`"));
            }
            let close = rest.find('}').ok_or_else(|| bad("unclosed block"))?;
            let body = &rest[1..close];
            let mut any = false;
            for tok in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let id: u64 = tok.parse().map_err(|_| bad(&format!("bad vertex id `{tok}`")))?;
                if !seen.insert(id) {
                    return Err(bad(&format!("vertex {id} listed twice")));
                }
                records.push(VertexRecord {
                    id: VertexId(id),
                    label: TypeLabel::Fresh(comp),
                    component: ComponentId(comp),
                });
                any = true;
            }
            if !any {
                return Err(bad("empty block"));
            }
            comp += 1;
            rest = &rest[close + 1..];
        }
        if records.is_empty() {
            return Err(bad("no vertices"));
        }
        Ok(Self::from_parts(0.0, records, None, SamplingWeights::Uniform, &[]))
    }

    /// Builds a state from raw parts without checking invariants; call
    /// [`validate`] afterwards. `edges = Some(..)` switches on the flip regime.
    pub fn from_parts(
        time: f64,
        vertices: Vec<VertexRecord>,
        edges: Option<Vec<EdgeKey>>,
        weights: SamplingWeights,
        founders: &[FounderRecord],
    ) -> Self {
        let mut state = Self::empty(time);
        let founder_of: HashMap<ComponentId, f64> =
            founders.iter().map(|f| (f.component, f.time)).collect();
        for rec in vertices {
            let idx = state.vertices.len();
            let comp = state.components.entry(rec.component).or_insert_with(|| Component {
                members: Vec::new(),
                founder_time: founder_of.get(&rec.component).copied().unwrap_or(0.0),
                label: rec.label,
                edges: IndexSet::new(),
            });
            let slot = comp.members.len();
            comp.members.push(idx);
            state.within_pairs += slot as u64;
            state.index_of.insert(rec.id, idx);
            state.vertices.push(Vertex {
                id: rec.id,
                label: rec.label,
                component: rec.component,
                slot,
                neighbors: IndexSet::new(),
            });
            state.next_vertex = state.next_vertex.max(rec.id.0 + 1);
            state.next_component = state.next_component.max(rec.component.0 + 1);
            if let TypeLabel::Fresh(f) = rec.label {
                state.next_fresh = state.next_fresh.max(f + 1);
            }
        }
        if let Some(edges) = edges {
            state.flip_regime = true;
            for (a, b) in edges {
                state.insert_edge_unchecked(a, b);
            }
        }
        state.weights = weights;
        state
    }

    // ---- accessors -------------------------------------------------------

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn is_flip_regime(&self) -> bool {
        self.flip_regime
    }

    pub fn vertex_id(&self, idx: usize) -> VertexId {
        self.vertices[idx].id
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().map(|v| v.id)
    }

    pub fn index_of(&self, id: VertexId) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    pub fn type_label(&self, idx: usize) -> TypeLabel {
        self.vertices[idx].label
    }

    pub fn component_of(&self, idx: usize) -> ComponentId {
        self.vertices[idx].component
    }

    pub fn component(&self, id: ComponentId) -> Option<&Component> {
        self.components.get(&id)
    }

    pub fn components(&self) -> impl Iterator<Item = (ComponentId, &Component)> + '_ {
        self.components.iter().map(|(k, v)| (*k, v))
    }

    pub fn founder_time(&self, id: ComponentId) -> Option<f64> {
        self.components.get(&id).map(|c| c.founder_time)
    }

    pub fn weights(&self) -> &SamplingWeights {
        &self.weights
    }

    pub fn weight(&self, idx: usize) -> f64 {
        match &self.weights {
            SamplingWeights::Uniform => 1.0 / self.vertices.len() as f64,
            SamplingWeights::Explicit(w) => w[idx],
        }
    }

    /// Sum of C(k,2) over components.
    pub fn within_component_pairs(&self) -> u64 {
        self.within_pairs
    }

    /// Number of present edges (flip regime); in the pure regime every
    /// within-component pair is an edge.
    pub fn edge_count(&self) -> u64 {
        if self.flip_regime {
            self.edge_total
        } else {
            self.within_pairs
        }
    }

    /// All present edges in the flip regime, in a deterministic order.
    pub fn edges_present(&self) -> Vec<EdgeKey> {
        let mut out: Vec<EdgeKey> = self.components.values().flat_map(|c| c.edges.iter().copied()).collect();
        out.sort_unstable();
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.vertices[a].neighbors.contains(&self.vertices[b].id)
    }

    /// Connection function on dense indices; reflexive.
    pub fn connected(&self, a: usize, b: usize) -> bool {
        if a == b {
            return true;
        }
        if self.vertices[a].component != self.vertices[b].component {
            return false;
        }
        !self.flip_regime || self.has_edge(a, b)
    }

    /// Mass of every component under the sampling weights, in storage order.
    pub fn component_masses(&self) -> Vec<(ComponentId, f64)> {
        self.components
            .iter()
            .map(|(id, c)| (*id, c.members.iter().map(|&i| self.weight(i)).sum()))
            .collect()
    }

    /// Component sizes sorted in decreasing order.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.components.values().map(|c| c.members.len()).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    // ---- mutation primitives used by the dynamics ------------------------

    pub(crate) fn fresh_label(&mut self) -> TypeLabel {
        let l = TypeLabel::Fresh(self.next_fresh);
        self.next_fresh += 1;
        l
    }

    /// Switches on edge tracking; existing within-component pairs are drawn
    /// from `init`.
    pub fn enable_flip_regime<R: Rng + ?Sized>(&mut self, init: EdgeInit, rng: &mut R) {
        if self.flip_regime {
            return;
        }
        self.flip_regime = true;
        let comps: Vec<ComponentId> = self.components.keys().copied().collect();
        for cid in comps {
            let members = self.components[&cid].members.clone();
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    if init.draw(rng) {
                        let (ia, ib) = (self.vertices[a].id, self.vertices[b].id);
                        self.insert_edge_unchecked(ia, ib);
                    }
                }
            }
        }
    }

    fn insert_edge_unchecked(&mut self, a: VertexId, b: VertexId) {
        let (Some(&ia), Some(&ib)) = (self.index_of.get(&a), self.index_of.get(&b)) else {
            return;
        };
        if ia == ib {
            return;
        }
        let key = edge_key(a, b);
        // an edge across components is stored in the first endpoint's component
        // so that validate can report it
        let cid = self.vertices[ia].component;
        if let Some(c) = self.components.get_mut(&cid) {
            if c.edges.insert(key) {
                self.edge_total += 1;
                self.vertices[ia].neighbors.insert(b);
                self.vertices[ib].neighbors.insert(a);
            }
        }
    }

    fn new_component(&mut self, label: TypeLabel) -> ComponentId {
        let cid = ComponentId(self.next_component);
        self.next_component += 1;
        self.components.insert(
            cid,
            Component { members: Vec::new(), founder_time: self.time, label, edges: IndexSet::new() },
        );
        cid
    }

    /// Component currently carrying `label`, if any.
    pub fn component_with_label(&self, label: TypeLabel) -> Option<ComponentId> {
        self.components.iter().find(|(_, c)| c.label == label).map(|(id, _)| *id)
    }

    /// Appends a vertex founding a new component (founder time = now).
    pub(crate) fn add_vertex_new_component(&mut self, label: TypeLabel) -> (VertexId, usize) {
        let cid = self.new_component(label);
        self.push_vertex(label, cid)
    }

    fn push_vertex(&mut self, label: TypeLabel, cid: ComponentId) -> (VertexId, usize) {
        let id = VertexId(self.next_vertex);
        self.next_vertex += 1;
        let idx = self.vertices.len();
        self.vertices.push(Vertex { id, label, component: cid, slot: 0, neighbors: IndexSet::new() });
        self.index_of.insert(id, idx);
        if let SamplingWeights::Explicit(w) = &mut self.weights {
            let n = (idx + 1) as f64;
            for x in w.iter_mut() {
                *x *= (n - 1.0) / n;
            }
            w.push(1.0 / n);
        }
        self.attach(idx, cid, EdgeInit::Complete, &mut NoRng);
        (id, idx)
    }

    /// Appends a vertex joining `cid` with its label.
    pub(crate) fn add_vertex_to_component<R: Rng + ?Sized>(
        &mut self,
        cid: ComponentId,
        init: EdgeInit,
        rng: &mut R,
    ) -> (VertexId, usize) {
        let label = self.components[&cid].label;
        let id = VertexId(self.next_vertex);
        self.next_vertex += 1;
        let idx = self.vertices.len();
        self.vertices.push(Vertex { id, label, component: cid, slot: 0, neighbors: IndexSet::new() });
        self.index_of.insert(id, idx);
        if let SamplingWeights::Explicit(w) = &mut self.weights {
            let n = (idx + 1) as f64;
            for x in w.iter_mut() {
                *x *= (n - 1.0) / n;
            }
            w.push(1.0 / n);
        }
        self.attach(idx, cid, init, rng);
        (id, idx)
    }

    /// Puts vertex `idx` into component `cid` (which must exist) and draws its
    /// new within-component pairs.
    fn attach<R: Rng + ?Sized>(&mut self, idx: usize, cid: ComponentId, init: EdgeInit, rng: &mut R) {
        let comp = self.components.get_mut(&cid).expect("attach to existing component");
        let slot = comp.members.len();
        self.within_pairs += slot as u64;
        if self.flip_regime {
            let me = self.vertices[idx].id;
            for pos in 0..slot {
                let other = comp.members[pos];
                if init.draw(rng) {
                    let oid = self.vertices[other].id;
                    comp.edges.insert(edge_key(me, oid));
                    self.vertices[other].neighbors.insert(me);
                    self.vertices[idx].neighbors.insert(oid);
                    self.edge_total += 1;
                }
            }
        }
        comp.members.push(idx);
        let label = comp.label;
        let v = &mut self.vertices[idx];
        v.component = cid;
        v.slot = slot;
        v.label = label;
    }

    /// Removes `idx` from its component, dropping its edges; deletes the
    /// component if it becomes empty.
    fn detach(&mut self, idx: usize) {
        let cid = self.vertices[idx].component;
        let slot = self.vertices[idx].slot;
        let me = self.vertices[idx].id;
        let neighbors = std::mem::take(&mut self.vertices[idx].neighbors);
        let comp = self.components.get_mut(&cid).expect("vertex component exists");
        for nb in &neighbors {
            if comp.edges.swap_remove(&edge_key(me, *nb)) {
                self.edge_total -= 1;
            }
            if let Some(&j) = self.index_of.get(nb) {
                self.vertices[j].neighbors.swap_remove(&me);
            }
        }
        comp.members.swap_remove(slot);
        if let Some(&moved) = comp.members.get(slot) {
            self.vertices[moved].slot = slot;
        }
        let remaining = comp.members.len();
        self.within_pairs -= remaining as u64;
        if remaining == 0 {
            self.components.swap_remove(&cid);
        }
    }

    /// Moves `idx` into `target` (FV loser, selection, atomic mutation).
    pub(crate) fn move_vertex<R: Rng + ?Sized>(
        &mut self,
        idx: usize,
        target: ComponentId,
        init: EdgeInit,
        rng: &mut R,
    ) {
        if self.vertices[idx].component == target {
            return;
        }
        self.detach(idx);
        self.attach(idx, target, init, rng);
    }

    /// Moves `idx` into a brand-new component with `label`.
    pub(crate) fn refound_vertex(&mut self, idx: usize, label: TypeLabel) -> ComponentId {
        self.detach(idx);
        let cid = self.new_component(label);
        self.attach(idx, cid, EdgeInit::Complete, &mut NoRng);
        cid
    }

    /// Deletes vertex `idx`. The last vertex takes its dense index.
    pub(crate) fn remove_vertex(&mut self, idx: usize) -> VertexId {
        self.detach(idx);
        let last = self.vertices.len() - 1;
        let removed = self.vertices.swap_remove(idx);
        self.index_of.remove(&removed.id);
        if idx != last {
            let moved = &self.vertices[idx];
            self.index_of.insert(moved.id, idx);
            let comp = self.components.get_mut(&moved.component).expect("component exists");
            comp.members[moved.slot] = idx;
        }
        if let SamplingWeights::Explicit(w) = &mut self.weights {
            let gone = w.swap_remove(idx);
            let rest = 1.0 - gone;
            if rest > 0.0 {
                for x in w.iter_mut() {
                    *x /= rest;
                }
            }
        }
        removed.id
    }

    /// Replaces vertex `idx` by a new vertex with `label` that joins the
    /// component of its label if one exists, otherwise founds one. Used for
    /// the fixed-size immigration swap; the newcomer inherits the dense slot
    /// and the sampling weight.
    pub(crate) fn swap_in<R: Rng + ?Sized>(
        &mut self,
        idx: usize,
        label: TypeLabel,
        join_existing: bool,
        init: EdgeInit,
        rng: &mut R,
    ) -> VertexId {
        self.detach(idx);
        let old = self.vertices[idx].id;
        self.index_of.remove(&old);
        let id = VertexId(self.next_vertex);
        self.next_vertex += 1;
        self.vertices[idx].id = id;
        self.vertices[idx].label = label;
        self.index_of.insert(id, idx);
        let target = if join_existing { self.component_with_label(label) } else { None };
        match target {
            Some(cid) => self.attach(idx, cid, init, rng),
            None => {
                let cid = self.new_component(label);
                self.attach(idx, cid, EdgeInit::Complete, &mut NoRng);
            }
        }
        id
    }

    /// Appends an immigrant with `label` (variable-size rule).
    pub(crate) fn add_immigrant<R: Rng + ?Sized>(
        &mut self,
        label: TypeLabel,
        join_existing: bool,
        init: EdgeInit,
        rng: &mut R,
    ) -> (VertexId, usize) {
        match if join_existing { self.component_with_label(label) } else { None } {
            Some(cid) => self.add_vertex_to_component(cid, init, rng),
            None => self.add_vertex_new_component(label),
        }
    }

    pub(crate) fn set_edge(&mut self, a: usize, b: usize, present: bool) -> bool {
        let (ia, ib) = (self.vertices[a].id, self.vertices[b].id);
        let cid = self.vertices[a].component;
        if cid != self.vertices[b].component || a == b {
            return false;
        }
        let comp = self.components.get_mut(&cid).expect("component exists");
        let key = edge_key(ia, ib);
        let changed = if present { comp.edges.insert(key) } else { comp.edges.swap_remove(&key) };
        if changed {
            if present {
                self.edge_total += 1;
                self.vertices[a].neighbors.insert(ib);
                self.vertices[b].neighbors.insert(ia);
            } else {
                self.edge_total -= 1;
                self.vertices[a].neighbors.swap_remove(&ib);
                self.vertices[b].neighbors.swap_remove(&ia);
            }
        }
        changed
    }

    /// Picks a component with probability proportional to `weight(c)`.
    pub(crate) fn pick_component<R: Rng + ?Sized>(
        &self,
        total: f64,
        weight: impl Fn(&Component) -> f64,
        rng: &mut R,
    ) -> Option<ComponentId> {
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for (id, c) in &self.components {
            let w = weight(c);
            if w <= 0.0 {
                continue;
            }
            last = Some(*id);
            if u < w {
                return Some(*id);
            }
            u -= w;
        }
        last
    }

    /// Uniformly chosen absent pair inside `cid`, as dense indices.
    pub(crate) fn random_non_edge<R: Rng + ?Sized>(&self, cid: ComponentId, rng: &mut R) -> Option<(usize, usize)> {
        let comp = &self.components[&cid];
        let k = comp.members.len();
        if comp.pair_count() as usize <= comp.edges.len() {
            return None;
        }
        for _ in 0..64 {
            let x = rng.random_range(0..k);
            let mut y = rng.random_range(0..k - 1);
            if y >= x {
                y += 1;
            }
            let (a, b) = (comp.members[x], comp.members[y]);
            if !self.has_edge(a, b) {
                return Some((a, b));
            }
        }
        // dense component: enumerate absent pairs
        let mut absent = Vec::new();
        for x in 0..k {
            for y in x + 1..k {
                let (a, b) = (comp.members[x], comp.members[y]);
                if !self.has_edge(a, b) {
                    absent.push((a, b));
                }
            }
        }
        if absent.is_empty() {
            None
        } else {
            Some(absent[rng.random_range(0..absent.len())])
        }
    }

    /// Uniformly chosen present edge inside `cid`, as dense indices.
    pub(crate) fn random_edge<R: Rng + ?Sized>(&self, cid: ComponentId, rng: &mut R) -> Option<(usize, usize)> {
        let comp = &self.components[&cid];
        if comp.edges.is_empty() {
            return None;
        }
        let (a, b) = *comp.edges.get_index(rng.random_range(0..comp.edges.len()))?;
        Some((self.index_of[&a], self.index_of[&b]))
    }

    // ---- sampling --------------------------------------------------------

    /// One vertex drawn from the sampling measure.
    pub fn sample_vertex<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.weights {
            SamplingWeights::Uniform => rng.random_range(0..self.vertices.len()),
            SamplingWeights::Explicit(w) => weighted_index(w, rng),
        }
    }

    /// `m` distinct vertices drawn sequentially by weight without
    /// replacement.
    pub fn sample_distinct<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>> {
        let n = self.vertices.len();
        if m > n {
            return Err(GraphemeError::SampleTooLarge { requested: m, available: n });
        }
        match &self.weights {
            SamplingWeights::Uniform => {
                // partial Fisher-Yates over a lazily materialised permutation
                let mut swapped: HashMap<usize, usize> = HashMap::new();
                let mut out = Vec::with_capacity(m);
                for i in 0..m {
                    let j = rng.random_range(i..n);
                    let vj = *swapped.get(&j).unwrap_or(&j);
                    let vi = *swapped.get(&i).unwrap_or(&i);
                    swapped.insert(j, vi);
                    out.push(vj);
                }
                Ok(out)
            }
            SamplingWeights::Explicit(w) => {
                let mut remaining = w.clone();
                let mut out = Vec::with_capacity(m);
                for _ in 0..m {
                    let i = weighted_index(&remaining, rng);
                    remaining[i] = 0.0;
                    out.push(i);
                }
                Ok(out)
            }
        }
    }

    /// `m` i.i.d. draws (with replacement).
    pub fn sample_iid<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<usize> {
        (0..m).map(|_| self.sample_vertex(rng)).collect()
    }

    pub fn vertex_records(&self) -> Vec<VertexRecord> {
        self.vertices
            .iter()
            .map(|v| VertexRecord { id: v.id, label: v.label, component: v.component })
            .collect()
    }

    pub fn founder_records(&self) -> Vec<FounderRecord> {
        self.components
            .iter()
            .map(|(id, c)| FounderRecord { component: *id, time: c.founder_time })
            .collect()
    }

    /// Sampling weights materialised per dense index.
    pub fn weight_vector(&self) -> Vec<f64> {
        (0..self.vertices.len()).map(|i| self.weight(i)).collect()
    }
}

/// Draws an index with probability proportional to `w`.
pub(crate) fn weighted_index<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &x) in w.iter().enumerate() {
        if x <= 0.0 {
            continue;
        }
        last = i;
        if u < x {
            return i;
        }
        u -= x;
    }
    last
}

/// An `Rng` that must never be consulted; used where edges are drawn with
/// [`EdgeInit::Complete`] or into singleton components.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("NoRng consulted")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("NoRng consulted")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("NoRng consulted")
    }
}

// ---- validation -------------------------------------------------------------

/// One broken invariant together with the vertices involved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub vertices: Vec<VertexId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)?;
        if !self.vertices.is_empty() {
            let ids: Vec<String> = self.vertices.iter().map(|v| v.to_string()).collect();
            write!(f, " [{}]", ids.join(", "))?;
        }
        Ok(())
    }
}

/// Checks every structural invariant; an empty list means the state is valid.
pub fn validate(state: &GraphemeState) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = state.vertices.len();

    if !(state.time >= 0.0) {
        out.push(Violation { invariant: "time", vertices: vec![], detail: format!("time {} is negative", state.time) });
    }

    if n > 0 {
        match &state.weights {
            SamplingWeights::Uniform => {}
            SamplingWeights::Explicit(w) => {
                if w.len() != n {
                    out.push(Violation {
                        invariant: "weights-length",
                        vertices: vec![],
                        detail: format!("{} weights for {} vertices", w.len(), n),
                    });
                } else {
                    let bad: Vec<VertexId> =
                        w.iter().zip(&state.vertices).filter(|(x, _)| !(**x > 0.0)).map(|(_, v)| v.id).collect();
                    if !bad.is_empty() {
                        out.push(Violation {
                            invariant: "weights-positive",
                            vertices: bad,
                            detail: "non-positive sampling weight".into(),
                        });
                    }
                    let sum: f64 = w.iter().sum();
                    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                        out.push(Violation {
                            invariant: "weights-sum",
                            vertices: vec![],
                            detail: format!("weights sum to {sum}"),
                        });
                    }
                }
            }
        }
    }

    // partition: each vertex listed exactly once, by its own component
    let mut listed = vec![0usize; n];
    for (cid, comp) in &state.components {
        if comp.members.is_empty() {
            out.push(Violation { invariant: "partition", vertices: vec![], detail: format!("component {cid} is empty") });
        }
        for &m in &comp.members {
            if m < n {
                listed[m] += 1;
                if state.vertices[m].component != *cid {
                    out.push(Violation {
                        invariant: "partition",
                        vertices: vec![state.vertices[m].id],
                        detail: format!("listed by {cid} but assigned to {}", state.vertices[m].component),
                    });
                }
            }
        }
    }
    let unlisted: Vec<VertexId> =
        listed.iter().zip(&state.vertices).filter(|(c, _)| **c != 1).map(|(_, v)| v.id).collect();
    if !unlisted.is_empty() {
        out.push(Violation {
            invariant: "partition",
            vertices: unlisted,
            detail: "vertex not in exactly one component".into(),
        });
    }

    let mut seen = std::collections::HashSet::new();
    let dups: Vec<VertexId> = state.vertices.iter().filter(|v| !seen.insert(v.id)).map(|v| v.id).collect();
    if !dups.is_empty() {
        out.push(Violation { invariant: "unique-ids", vertices: dups, detail: "duplicate vertex id".into() });
    }

    for (cid, comp) in &state.components {
        let labels: std::collections::BTreeSet<TypeLabel> =
            comp.members.iter().filter(|&&m| m < n).map(|&m| state.vertices[m].label).collect();
        if labels.len() > 1 {
            out.push(Violation {
                invariant: "type-coherence",
                vertices: comp.members.iter().filter(|&&m| m < n).map(|&m| state.vertices[m].id).collect(),
                detail: format!("component {cid} mixes {} type labels", labels.len()),
            });
        }
        if comp.founder_time < 0.0 || comp.founder_time > state.time + 1e-12 {
            out.push(Violation {
                invariant: "founder-time",
                vertices: vec![],
                detail: format!("component {cid} founded at {} outside [0, {}]", comp.founder_time, state.time),
            });
        }
        for &(a, b) in &comp.edges {
            let ca = state.index_of(a).map(|i| state.vertices[i].component);
            let cb = state.index_of(b).map(|i| state.vertices[i].component);
            if ca != Some(*cid) || cb != Some(*cid) {
                out.push(Violation {
                    invariant: "edges-within-component",
                    vertices: vec![a, b],
                    detail: "edge leaves its component".into(),
                });
            }
        }
    }
    if !state.flip_regime && state.edge_total > 0 {
        out.push(Violation {
            invariant: "pure-regime-edges",
            vertices: vec![],
            detail: "explicit edges stored outside the flip regime".into(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;

    fn names(v: &[Violation]) -> Vec<&'static str> {
        v.iter().map(|x| x.invariant).collect()
    }

    #[test]
    fn valid_three_vertex_state() {
        let s = GraphemeState::singletons(3);
        assert!(validate(&s).is_empty());
        let s = GraphemeState::from_partition_literal("{1,2},{3}").unwrap();
        assert!(validate(&s).is_empty());
        assert_eq!(s.num_components(), 2);
        assert!(s.connected(s.index_of(VertexId(1)).unwrap(), s.index_of(VertexId(2)).unwrap()));
    }

    #[test]
    fn weights_not_summing_to_one() {
        let recs = GraphemeState::singletons(3).vertex_records();
        let s = GraphemeState::from_parts(0.0, recs, None, SamplingWeights::Explicit(vec![0.3, 0.3, 0.3]), &[]);
        assert_eq!(names(&validate(&s)), vec!["weights-sum"]);
    }

    #[test]
    fn mixed_types_in_one_component() {
        let recs = vec![
            VertexRecord { id: VertexId(0), label: TypeLabel::Atom(0), component: ComponentId(0) },
            VertexRecord { id: VertexId(1), label: TypeLabel::Atom(1), component: ComponentId(0) },
        ];
        let s = GraphemeState::from_parts(0.0, recs, None, SamplingWeights::Uniform, &[]);
        let v = validate(&s);
        assert_eq!(names(&v), vec!["type-coherence"]);
        assert_eq!(v[0].vertices.len(), 2);
    }

    #[test]
    fn edge_across_components_is_reported() {
        let recs = GraphemeState::from_partition_literal("{0},{1}").unwrap().vertex_records();
        let s = GraphemeState::from_parts(
            0.0,
            recs,
            Some(vec![(VertexId(0), VertexId(1))]),
            SamplingWeights::Uniform,
            &[],
        );
        assert_eq!(names(&validate(&s)), vec!["edges-within-component"]);
    }

    #[test]
    fn partition_literal_errors() {
        assert!(GraphemeState::from_partition_literal("{1,2},{2}").is_err());
        assert!(GraphemeState::from_partition_literal("{}").is_err());
        assert!(GraphemeState::from_partition_literal("{1").is_err());
        assert!(GraphemeState::from_partition_literal("").is_err());
    }

    #[test]
    fn remove_and_move_keep_bookkeeping() {
        let mut rng = master_rng(1);
        let mut s = GraphemeState::from_block_sizes(&[3, 2, 1]);
        s.enable_flip_regime(EdgeInit::Complete, &mut rng);
        assert_eq!(s.edge_count(), 4);
        assert_eq!(s.within_component_pairs(), 4);
        let target = s.component_of(3);
        s.move_vertex(0, target, EdgeInit::Complete, &mut rng);
        assert!(validate(&s).is_empty());
        assert_eq!(s.within_component_pairs(), 1 + 3);
        assert_eq!(s.edge_count(), 4);
        s.remove_vertex(0);
        assert!(validate(&s).is_empty());
        assert_eq!(s.num_vertices(), 5);
        assert_eq!(s.edge_count(), 2);
        let single = (0..s.num_vertices()).find(|&i| s.component(s.component_of(i)).unwrap().size() == 1).unwrap();
        let cid = s.component_of(single);
        s.remove_vertex(single);
        assert!(s.component(cid).is_none());
        assert!(validate(&s).is_empty());
    }

    #[test]
    fn distinct_sampling_respects_bounds() {
        let mut rng = master_rng(3);
        let s = GraphemeState::singletons(5);
        let mut x = s.sample_distinct(5, &mut rng).unwrap();
        x.sort_unstable();
        assert_eq!(x, vec![0, 1, 2, 3, 4]);
        assert!(matches!(s.sample_distinct(6, &mut rng), Err(GraphemeError::SampleTooLarge { .. })));
    }

    #[test]
    fn explicit_weights_renormalise_on_growth_and_removal() {
        let mut rng = master_rng(5);
        let recs = GraphemeState::singletons(2).vertex_records();
        let mut s = GraphemeState::from_parts(0.0, recs, None, SamplingWeights::Explicit(vec![0.25, 0.75]), &[]);
        let cid = s.component_of(0);
        s.add_vertex_to_component(cid, EdgeInit::Complete, &mut rng);
        let w = s.weight_vector();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w[2] - 1.0 / 3.0).abs() < 1e-12);
        s.remove_vertex(1);
        assert!(validate(&s).is_empty());
    }
}
