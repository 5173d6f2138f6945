//! Grid graphs carrying the Lipschitz constraint, and the exact linear
//! program for the bounded-Lipschitz dual norm on them.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::{Error, Result};

/// Nodes of a tensor grid joined along each axis to their next neighbour.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricGraph {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl MetricGraph {
    /// Axis-aligned nearest-neighbour graph. Axes flagged in `wraps` also
    /// join their last node to their first.
    pub fn lattice(extents: &[usize], spacings: &[f64], wraps: &[bool]) -> Self {
        let nodes: usize = extents.iter().product();
        let mut edges = Vec::new();
        for axis in 0..extents.len() {
            let n = extents[axis];
            let stride: usize = extents[axis + 1..].iter().product();
            let closes = wraps[axis] && n > 2;
            for idx in 0..nodes {
                let pos = (idx / stride) % n;
                if pos + 1 < n {
                    edges.push((idx, idx + stride, spacings[axis]));
                } else if closes {
                    edges.push((idx, idx - pos * stride, spacings[axis]));
                }
            }
        }
        Self { nodes, edges }
    }

    /// Graph built from explicit weighted edges.
    pub fn from_edges(nodes: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if edges.iter().any(|&(i, j, l)| i >= nodes || j >= nodes || i == j || !(l > 0.0)) {
            return Err(Error::Parameter("invalid edge list".into()));
        }
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// `‖φ‖_∞ + max_e |φ_i - φ_j|/ℓ_e`.
    pub fn bl_norm(&self, phi: &[f64]) -> f64 {
        let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        sup + self.lipschitz(phi)
    }

    /// Largest difference quotient of `φ` along an edge.
    pub fn lipschitz(&self, phi: &[f64]) -> f64 {
        self.edges.iter().fold(0.0f64, |m, &(i, j, l)| m.max((phi[i] - phi[j]).abs() / l))
    }
}

/// `sup { Σ wᵢ φᵢ : ‖φ‖_∞ + Lip(φ) ≤ 1 }` solved exactly as a linear program
/// in `(φ, a)` with `|φᵢ| ≤ a` and `|φᵢ - φⱼ| ≤ (1 - a) ℓ_e`.
pub fn bl_lp(graph: &MetricGraph, w: &[f64]) -> Result<f64> {
    if w.len() != graph.nodes() {
        return Err(Error::Shape("weight vector does not match the graph".into()));
    }
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut pb = Problem::new(OptimizationDirection::Maximize);
    let a = pb.add_var(0.0, (0.0, 1.0));
    let phi: Vec<_> = w.iter().map(|&wi| pb.add_var(wi / scale, (-1.0, 1.0))).collect();
    for &p in &phi {
        pb.add_constraint([(p, 1.0), (a, -1.0)], ComparisonOp::Le, 0.0);
        pb.add_constraint([(p, -1.0), (a, -1.0)], ComparisonOp::Le, 0.0);
    }
    for &(i, j, l) in graph.edges() {
        pb.add_constraint([(phi[i], 1.0 / l), (phi[j], -1.0 / l), (a, 1.0)], ComparisonOp::Le, 1.0);
        pb.add_constraint([(phi[i], -1.0 / l), (phi[j], 1.0 / l), (a, 1.0)], ComparisonOp::Le, 1.0);
    }
    let sol = pb.solve().map_err(|e| Error::Lp(e.to_string()))?;
    Ok(sol.objective() * scale)
}
