//! Genealogy of all lineages and the induced ultrametric.
//!
//! Every vertex of a running state is carried by exactly one alive lineage.
//! A lineage node remembers the time it branched off its parent; two lineages
//! are at distance twice the time back to the point where their ancestral
//! lines split, or `2t` (plus an optional initial offset) when they descend
//! from different roots.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{GraphemeError, Result};
use crate::state::{GraphemeState, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LineageId(pub usize);

#[derive(Debug, Clone)]
struct Node {
    /// Time the node branched off its parent (its birth time).
    attach: f64,
    parent: Option<usize>,
    alive: bool,
    /// Row of the initial distance matrix for initial roots.
    root_key: Option<usize>,
}

pub const DEFAULT_SWEEP_INTERVAL: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct GenealogyForest {
    nodes: Vec<Option<Node>>,
    free: Vec<usize>,
    carrier: HashMap<VertexId, usize>,
    time: f64,
    initial_distances: Option<Vec<Vec<f64>>>,
    events_since_sweep: u64,
    sweep_interval: u64,
}

impl GenealogyForest {
    /// One root per vertex, born at the state's time; root keys follow the
    /// dense vertex order.
    pub fn for_state(state: &GraphemeState) -> Self {
        let mut forest = GenealogyForest {
            nodes: Vec::with_capacity(state.num_vertices()),
            free: Vec::new(),
            carrier: HashMap::with_capacity(state.num_vertices()),
            time: state.time(),
            initial_distances: None,
            events_since_sweep: 0,
            sweep_interval: DEFAULT_SWEEP_INTERVAL,
        };
        for idx in 0..state.num_vertices() {
            forest.insert_root(state.vertex_id(idx), state.time(), Some(idx));
        }
        forest
    }

    /// Like [`for_state`], with an initial distance matrix (indexed by dense
    /// vertex order) added to the distance of lineages from different roots.
    pub fn with_initial_distances(state: &GraphemeState, r0: Vec<Vec<f64>>) -> Result<Self> {
        let n = state.num_vertices();
        if r0.len() != n || r0.iter().any(|row| row.len() != n) {
            return Err(GraphemeError::DimensionMismatch { expected: n, got: r0.len() });
        }
        for (i, row) in r0.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x < 0.0 {
                    return Err(GraphemeError::NegativeDistance(x));
                }
                if (x - r0[j][i]).abs() > 1e-12 {
                    return Err(GraphemeError::InvalidParams("initial distances must be symmetric".into()));
                }
            }
        }
        let mut forest = Self::for_state(state);
        forest.initial_distances = Some(r0);
        Ok(forest)
    }

    pub fn set_sweep_interval(&mut self, events: u64) {
        self.sweep_interval = events.max(1);
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    fn alloc(&mut self, node: Node) -> usize {
        match self.free.pop() {
            Some(slot) => {
                self.nodes[slot] = Some(node);
                slot
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        }
    }

    fn node(&self, id: usize) -> Result<&Node> {
        self.nodes.get(id).and_then(Option::as_ref).ok_or(GraphemeError::UnknownLineage(id))
    }

    fn insert_root(&mut self, vertex: VertexId, time: f64, root_key: Option<usize>) -> LineageId {
        let id = self.alloc(Node { attach: time, parent: None, alive: true, root_key });
        self.carrier.insert(vertex, id);
        LineageId(id)
    }

    /// A new, unrelated lineage carrying `vertex` (immigrants).
    pub(crate) fn new_root(&mut self, vertex: VertexId, time: f64) -> LineageId {
        self.insert_root(vertex, time, None)
    }

    /// New lineage for `child`, branching off the lineage of `parent` now.
    pub(crate) fn birth(&mut self, parent: VertexId, child: VertexId, time: f64) -> LineageId {
        let p = self.carrier[&parent];
        let id = self.alloc(Node { attach: time, parent: Some(p), alive: true, root_key: None });
        self.carrier.insert(child, id);
        LineageId(id)
    }

    /// Ends the lineage carrying `vertex`.
    pub(crate) fn kill(&mut self, vertex: VertexId) {
        if let Some(id) = self.carrier.remove(&vertex) {
            if let Some(n) = self.nodes[id].as_mut() {
                n.alive = false;
            }
        }
    }

    /// Resampling: the lineage of `loser` ends and `loser` is re-carried by a
    /// fresh child of `winner`'s lineage.
    pub(crate) fn replace_by_child(&mut self, loser: VertexId, winner: VertexId, time: f64) -> LineageId {
        self.kill(loser);
        self.birth(winner, loser, time)
    }

    /// Called once per applied event; runs the sweep at the configured cadence.
    pub(crate) fn tick(&mut self) {
        self.events_since_sweep += 1;
        if self.events_since_sweep >= self.sweep_interval {
            self.sweep();
        }
    }

    pub fn lineage_of(&self, vertex: VertexId) -> Result<LineageId> {
        self.carrier.get(&vertex).map(|&i| LineageId(i)).ok_or(GraphemeError::UnknownVertex(vertex.0))
    }

    pub fn is_alive(&self, lineage: LineageId) -> bool {
        self.node(lineage.0).map(|n| n.alive).unwrap_or(false)
    }

    pub fn birth_time(&self, lineage: LineageId) -> Result<f64> {
        Ok(self.node(lineage.0)?.attach)
    }

    pub fn parent(&self, lineage: LineageId) -> Result<Option<LineageId>> {
        Ok(self.node(lineage.0)?.parent.map(LineageId))
    }

    /// Number of stored lineage nodes (alive and retained dead ones).
    pub fn stored_lineages(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    pub fn alive_lineages(&self) -> usize {
        self.carrier.len()
    }

    /// Removes lineages without living descendants and splices out dead
    /// nodes that have a single retained child.
    pub fn sweep(&mut self) {
        self.events_since_sweep = 0;
        let len = self.nodes.len();
        let mut marked = vec![false; len];
        let mut marked_children = vec![0u32; len];
        for &start in self.carrier.values() {
            let mut cur = Some(start);
            while let Some(id) = cur {
                if marked[id] {
                    break;
                }
                marked[id] = true;
                let parent = self.nodes[id].as_ref().unwrap().parent;
                if let Some(p) = parent {
                    marked_children[p] += 1;
                }
                cur = parent;
            }
        }
        for (id, node) in self.nodes.iter_mut().enumerate() {
            if node.is_some() && !marked[id] {
                *node = None;
                self.free.push(id);
            }
        }
        // splice: a dead node with exactly one retained child hands its
        // branching time and root key down to that child
        for id in 0..len {
            let Some(node) = self.nodes[id].as_ref() else { continue };
            let Some(p) = node.parent else { continue };
            let mut parent = p;
            let mut attach = node.attach;
            let mut root_key = None;
            let mut new_parent = Some(parent);
            loop {
                let pn = self.nodes[parent].as_ref().unwrap();
                if pn.alive || marked_children[parent] != 1 {
                    break;
                }
                attach = pn.attach;
                root_key = pn.root_key;
                new_parent = pn.parent;
                match pn.parent {
                    Some(gp) => parent = gp,
                    None => break,
                }
            }
            if new_parent != Some(p) {
                let n = self.nodes[id].as_mut().unwrap();
                n.attach = attach;
                n.parent = new_parent;
                if new_parent.is_none() {
                    n.root_key = root_key;
                }
            }
        }
        // spliced-out nodes are now unreachable from any alive lineage
        let mut reach = vec![false; len];
        for &start in self.carrier.values() {
            let mut cur = Some(start);
            while let Some(id) = cur {
                if reach[id] {
                    break;
                }
                reach[id] = true;
                cur = self.nodes[id].as_ref().unwrap().parent;
            }
        }
        for (id, node) in self.nodes.iter_mut().enumerate() {
            if node.is_some() && !reach[id] {
                *node = None;
                self.free.push(id);
            }
        }
    }

    /// Ancestor chain of `lineage` with the time its line leaves each
    /// ancestor (`t` for the lineage itself).
    fn chain(&self, lineage: usize, t: f64) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        let mut cur = lineage;
        let mut leave = t;
        loop {
            let node = self.node(cur)?;
            out.push((cur, leave));
            leave = node.attach;
            match node.parent {
                Some(p) => cur = p,
                None => return Ok(out),
            }
        }
    }

    fn distance_from_chains(&self, a: &[(usize, f64)], b: &[(usize, f64)], b_map: &HashMap<usize, f64>, t: f64) -> f64 {
        for &(node, leave_a) in a {
            if let Some(&leave_b) = b_map.get(&node) {
                return 2.0 * (t - leave_a.min(leave_b));
            }
        }
        2.0 * t + self.root_offset(a.last().map(|x| x.0), b.last().map(|x| x.0))
    }

    fn root_offset(&self, ra: Option<usize>, rb: Option<usize>) -> f64 {
        let (Some(r0), Some(ra), Some(rb)) = (&self.initial_distances, ra, rb) else {
            return 0.0;
        };
        let ka = self.nodes[ra].as_ref().and_then(|n| n.root_key);
        let kb = self.nodes[rb].as_ref().and_then(|n| n.root_key);
        match (ka, kb) {
            (Some(i), Some(j)) => r0[i][j],
            _ => 0.0,
        }
    }

    /// Ultrametric distance of two lineages at time `t`.
    pub fn distance(&self, a: LineageId, b: LineageId, t: f64) -> Result<f64> {
        let ca = self.chain(a.0, t)?;
        if a == b {
            return Ok(0.0);
        }
        let cb = self.chain(b.0, t)?;
        let map: HashMap<usize, f64> = cb.iter().copied().collect();
        Ok(self.distance_from_chains(&ca, &cb, &map, t))
    }

    /// Distance between the lineages carrying two vertices, at the forest's
    /// current time.
    pub fn vertex_distance(&self, a: VertexId, b: VertexId) -> Result<f64> {
        self.distance(self.lineage_of(a)?, self.lineage_of(b)?, self.time)
    }

    /// Pairwise distances among the given vertices at the current time.
    pub fn distance_matrix(&self, vertices: &[VertexId]) -> Result<Vec<Vec<f64>>> {
        let t = self.time;
        let chains: Vec<Vec<(usize, f64)>> =
            vertices.iter().map(|v| self.chain(self.lineage_of(*v)?.0, t)).collect::<Result<_>>()?;
        let maps: Vec<HashMap<usize, f64>> = chains.iter().map(|c| c.iter().copied().collect()).collect();
        let m = vertices.len();
        let mut out = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let d = if chains[i][0].0 == chains[j][0].0 {
                    0.0
                } else {
                    self.distance_from_chains(&chains[i], &chains[j], &maps[j], t)
                };
                out[i][j] = d;
                out[j][i] = d;
            }
        }
        Ok(out)
    }

    /// Parent-array text: one line per stored lineage `id parent birth_time`,
    /// with parent `-1` for roots.
    pub fn export_parent_array(&self) -> String {
        let mut s = String::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Some(n) = node {
                let parent = n.parent.map(|p| p as i64).unwrap_or(-1);
                let _ = writeln!(s, "{id} {parent} {}", n.attach);
            }
        }
        s
    }

    /// Checks parent links: acyclic, birth times nondecreasing down the tree,
    /// and every carried lineage alive.
    pub fn check_structure(&self) -> std::result::Result<(), String> {
        for (id, node) in self.nodes.iter().enumerate() {
            let Some(n) = node else { continue };
            let mut steps = 0usize;
            let mut cur = n.parent;
            let mut child_attach = n.attach;
            while let Some(p) = cur {
                let pn = self.nodes[p].as_ref().ok_or(format!("lineage {id}: dangling parent {p}"))?;
                if pn.attach > child_attach + 1e-12 {
                    return Err(format!("lineage {id}: ancestor {p} born after descendant"));
                }
                child_attach = pn.attach;
                steps += 1;
                if steps > self.nodes.len() {
                    return Err(format!("lineage {id}: cycle"));
                }
                cur = pn.parent;
            }
        }
        for (v, &l) in &self.carrier {
            if !self.nodes[l].as_ref().is_some_and(|n| n.alive) {
                return Err(format!("vertex {v} carried by a dead lineage"));
            }
        }
        Ok(())
    }
}

/// `1 - exp(-r)`, with infinity mapped to 1.
pub fn transformed_distance(r: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(GraphemeError::NegativeDistance(r));
    }
    if r.is_infinite() {
        return Ok(1.0);
    }
    Ok(-(-r).exp_m1())
}

/// Distance matrix of `m` vertices drawn by weight without replacement.
pub fn sample_distance_matrix<R: Rng + ?Sized>(
    state: &GraphemeState,
    forest: &GenealogyForest,
    m: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let idx = state.sample_distinct(m, rng)?;
    let ids: Vec<VertexId> = idx.iter().map(|&i| state.vertex_id(i)).collect();
    let mat = forest.distance_matrix(&ids)?;
    Ok((idx, mat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;

    #[test]
    fn self_distance_is_zero() {
        let s = GraphemeState::singletons(2);
        let f = GenealogyForest::for_state(&s);
        let l = f.lineage_of(s.vertex_id(0)).unwrap();
        assert_eq!(f.distance(l, l, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn child_and_parent() {
        let s = GraphemeState::singletons(1);
        let mut f = GenealogyForest::for_state(&s);
        let p = s.vertex_id(0);
        let c = f.birth(p, VertexId(99), 1.5);
        let pl = f.lineage_of(p).unwrap();
        // oracle: path trace, the child leaves the parent's line at 1.5
        assert!((f.distance(c, pl, 4.0).unwrap() - 2.0 * (4.0 - 1.5)).abs() < 1e-12);
        assert_eq!(f.distance(c, pl, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn distinct_roots() {
        let s = GraphemeState::singletons(2);
        let f = GenealogyForest::for_state(&s);
        let (a, b) = (f.lineage_of(s.vertex_id(0)).unwrap(), f.lineage_of(s.vertex_id(1)).unwrap());
        assert_eq!(f.distance(a, b, 3.0).unwrap(), 6.0);
        assert!(f.distance(LineageId(17), a, 3.0).is_err());
    }

    #[test]
    fn transformed_values() {
        assert_eq!(transformed_distance(0.0).unwrap(), 0.0);
        assert!((transformed_distance(1.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert_eq!(transformed_distance(f64::INFINITY).unwrap(), 1.0);
        assert!(transformed_distance(-1.0).is_err());
    }

    #[test]
    fn sampled_matrix_of_singletons() {
        let s = GraphemeState::singletons(5);
        let mut f = GenealogyForest::for_state(&s);
        f.set_time(2.0);
        let mut rng = master_rng(0);
        let (_, one) = sample_distance_matrix(&s, &f, 1, &mut rng).unwrap();
        assert_eq!(one, vec![vec![0.0]]);
        let (_, m) = sample_distance_matrix(&s, &f, 3, &mut rng).unwrap();
        for (i, row) in m.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x, if i == j { 0.0 } else { 4.0 });
            }
        }
        assert!(sample_distance_matrix(&s, &f, 6, &mut rng).is_err());
    }

    #[test]
    fn sweep_keeps_distances() {
        // chain of replacements leaves dead internal nodes behind
        let s = GraphemeState::singletons(4);
        let ids: Vec<VertexId> = s.vertex_ids().collect();
        let mut f = GenealogyForest::for_state(&s);
        let script = [(1, 0, 0.5), (2, 1, 1.0), (0, 3, 1.2), (3, 2, 2.0), (1, 2, 2.5)];
        for &(loser, winner, t) in &script {
            f.replace_by_child(ids[loser], ids[winner], t);
        }
        f.set_time(3.0);
        let before = f.distance_matrix(&ids).unwrap();
        let stored = f.stored_lineages();
        f.sweep();
        assert!(f.stored_lineages() < stored);
        assert_eq!(f.distance_matrix(&ids).unwrap(), before);
        f.check_structure().unwrap();
    }

    #[test]
    fn initial_offsets_are_added() {
        let s = GraphemeState::singletons(2);
        let f = GenealogyForest::with_initial_distances(&s, vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let ids: Vec<VertexId> = s.vertex_ids().collect();
        assert_eq!(f.distance_matrix(&ids).unwrap()[0][1], 1.0);
        assert!(GenealogyForest::with_initial_distances(&s, vec![vec![0.0]]).is_err());
    }

    #[test]
    fn parent_array_lists_roots() {
        let s = GraphemeState::singletons(2);
        let mut f = GenealogyForest::for_state(&s);
        f.birth(s.vertex_id(0), VertexId(7), 0.25);
        let text = f.export_parent_array();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("2 0 0.25"));
    }
}
