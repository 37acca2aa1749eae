//! Step graphons, subgraph patterns and the empirical graphon of a state.

use serde::{Deserialize, Serialize};

use crate::error::{GraphemeError, Result};
use crate::state::GraphemeState;

/// Block graphon: blocks of the given masses (largest first) laid out from
/// the left of [0,1], constant intensity inside each diagonal block, zero
/// between blocks and on the dust remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepGraphon {
    pub block_weights: Vec<f64>,
    pub intra_block_intensity: f64,
}

impl StepGraphon {
    /// Sorts the weights into nonincreasing order.
    pub fn new(mut block_weights: Vec<f64>, intra_block_intensity: f64) -> Result<Self> {
        if block_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(GraphemeError::InvalidParams("block weights must be positive".into()));
        }
        if block_weights.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(GraphemeError::InvalidParams("block weights exceed total mass 1".into()));
        }
        if !(0.0..=1.0).contains(&intra_block_intensity) {
            return Err(GraphemeError::InvalidParams("intensity outside [0,1]".into()));
        }
        block_weights.sort_by(|a, b| b.total_cmp(a));
        Ok(StepGraphon { block_weights, intra_block_intensity })
    }

    pub fn dust(&self) -> f64 {
        (1.0 - self.block_weights.iter().sum::<f64>()).max(0.0)
    }

    /// Cell representation: one cell per block plus a dust cell when the
    /// blocks do not cover [0,1].
    pub fn to_step_function(&self) -> StepFunction {
        let mut widths = self.block_weights.clone();
        let dust = self.dust();
        if dust > 1e-15 {
            widths.push(dust);
        }
        let k = widths.len();
        let mut values = vec![vec![0.0; k]; k];
        for (i, row) in values.iter_mut().enumerate().take(self.block_weights.len()) {
            row[i] = self.intra_block_intensity;
        }
        StepFunction { widths, values }
    }
}

/// Symmetric step function on a partition of [0,1] into consecutive cells.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub widths: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl StepFunction {
    pub fn constant(p: f64) -> Self {
        StepFunction { widths: vec![1.0], values: vec![vec![p]] }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for w in &self.widths {
            acc += w;
            out.push(acc);
        }
        out
    }

    fn cell_at(&self, x: f64) -> usize {
        let mut acc = 0.0;
        for (i, w) in self.widths.iter().enumerate() {
            acc += w;
            if x < acc {
                return i;
            }
        }
        self.widths.len() - 1
    }

    /// Refines both functions onto the union of their breakpoints.
    pub fn common_refinement(a: &StepFunction, b: &StepFunction) -> (StepFunction, StepFunction) {
        let mut cuts: Vec<f64> = a.breakpoints().into_iter().chain(b.breakpoints()).collect();
        cuts.sort_by(|x, y| x.total_cmp(y));
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        let widths: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).filter(|w| *w > 1e-12).collect();
        let mids: Vec<f64> = {
            let mut acc = 0.0;
            widths
                .iter()
                .map(|w| {
                    let m = acc + w / 2.0;
                    acc += w;
                    m
                })
                .collect()
        };
        let lift = |f: &StepFunction| {
            let cells: Vec<usize> = mids.iter().map(|&x| f.cell_at(x)).collect();
            let values = cells.iter().map(|&i| cells.iter().map(|&j| f.values[i][j]).collect()).collect();
            StepFunction { widths: widths.clone(), values }
        };
        (lift(a), lift(b))
    }
}

/// Small simple graph on `[0, vertex_count)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphPattern {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
}

impl SubgraphPattern {
    pub const MAX_VERTICES: usize = 8;

    pub fn new(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if vertex_count == 0 || vertex_count > Self::MAX_VERTICES {
            return Err(GraphemeError::InvalidParams(format!(
                "pattern needs 1..={} vertices",
                Self::MAX_VERTICES
            )));
        }
        let mut norm: Vec<(usize, usize)> = Vec::new();
        for &(a, b) in edges {
            if a == b {
                return Err(GraphemeError::InvalidParams(format!("self-loop at {a}")));
            }
            if a >= vertex_count || b >= vertex_count {
                return Err(GraphemeError::InvalidParams(format!("edge ({a},{b}) out of range")));
            }
            let e = (a.min(b), a.max(b));
            if !norm.contains(&e) {
                norm.push(e);
            }
        }
        norm.sort_unstable();
        Ok(SubgraphPattern { vertex_count, edges: norm })
    }

    pub fn edge() -> Self {
        Self::new(2, &[(0, 1)]).unwrap()
    }

    pub fn triangle() -> Self {
        Self::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    pub fn path2() -> Self {
        Self::new(3, &[(0, 1), (1, 2)]).unwrap()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Connected components as (vertex count, edge count).
    pub fn component_shapes(&self) -> Vec<(usize, usize)> {
        let mut parent: Vec<usize> = (0..self.vertex_count).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let mut shapes: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
        for v in 0..self.vertex_count {
            let r = find(&mut parent, v);
            shapes.entry(r).or_default().0 += 1;
        }
        for &(a, _) in &self.edges {
            let r = find(&mut parent, a);
            shapes.get_mut(&r).unwrap().1 += 1;
        }
        shapes.into_values().collect()
    }
}

/// Block masses of the components (size-ordered) and the present-edge
/// fraction among within-component pairs (1 outside the flip regime or when
/// there are no such pairs).
pub fn empirical_graphon(state: &GraphemeState) -> StepGraphon {
    let mut weights: Vec<f64> = state.component_masses().into_iter().map(|(_, w)| w).collect();
    weights.sort_by(|a, b| b.total_cmp(a));
    let pairs = state.within_component_pairs();
    let intensity = if state.is_flip_regime() && pairs > 0 {
        state.edge_count() as f64 / pairs as f64
    } else {
        1.0
    };
    StepGraphon { block_weights: weights, intra_block_intensity: intensity }
}
