//! Cluster-state semantics: preparation from a graph, adaptive measurement
//! with byproduct tracking, Z-deletion, and the final Pauli correction.
//!
//! A cluster state is defined by a graph: `|+⟩` per node, a CZ per edge.
//! Computation measures nodes layer by layer in the rotated bases
//! `H·Z_{±α}`; the `±` sign and the final Pauli correction `X^x Z^z` per
//! level are tracked classically in a [`PauliFrame`], updated after each
//! outcome `m` by
//!
//! ```text
//! x' = z + m (mod 2),    z' = x (mod 2).
//! ```
//!
//! Vertical "bridge" edges (the entangling-gate layer) add a cross-level
//! term: before the pair of bridge measurements, each level's `z` absorbs
//! the *other* level's pre-measurement `x`. This follows from propagating
//! byproducts through the bridge with the operator identity
//! `CZ·(X⊗I) = (X⊗Z)·CZ`, and is gated end to end by the compiler's
//! determinism suite and the block-identity checks — both fail if the rule
//! is wrong.
//!
//! Branches are tracked *exactly*, including the scalar phase each
//! measurement introduces (`e^{iβ}·(−1)^z` when the level's `x` bit is set,
//! with `β` the rotation angle actually used). [`ClusterRun`] accumulates
//! that phase so tests can assert per-branch amplitude equality rather than
//! mere fidelity.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{identity, kron, CMatrix};
use crate::simulator::{apply, gates, measure, StateVector, MAX_QUBITS};

pub type NodeId = usize;

/// What happens to a node during the computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeSpec {
    /// Measured in basis `H·Z_{±angle}`; adaptive nodes flip the sign when
    /// the level's frame `x` bit is 1.
    Measured { angle: f64, adaptive: bool },
    /// Never measured; carries the output.
    Output,
}

/// One cluster qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    /// Horizontal row: which simulated circuit qubit this belongs to.
    pub level: usize,
    /// Vertical slice: which simulated time step.
    pub layer: usize,
    pub spec: NodeSpec,
    /// Measurement-order label; nodes with equal labels may be measured in
    /// either order. `None` for output nodes.
    pub time_order: Option<u32>,
}

impl Node {
    pub fn measured(id: NodeId, level: usize, layer: usize, angle: f64, adaptive: bool) -> Self {
        Self {
            id,
            level,
            layer,
            spec: NodeSpec::Measured { angle, adaptive },
            time_order: Some(layer as u32),
        }
    }

    pub fn output(id: NodeId, level: usize, layer: usize) -> Self {
        Self { id, level, layer, spec: NodeSpec::Output, time_order: None }
    }

    pub fn is_output(&self) -> bool {
        matches!(self.spec, NodeSpec::Output)
    }
}

/// Cluster topology: nodes plus CZ edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterGraph {
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
}

impl ClusterGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        let mut g = Self { nodes: Vec::new(), edges: Vec::new() };
        for n in nodes {
            g.add_node(n)?;
        }
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, node: Node) -> Result<()> {
        if self.nodes.iter().any(|n| n.id == node.id) {
            return Err(Error::MalformedGraph(format!("duplicate node id {}", node.id)));
        }
        if node.is_output() {
            if node.time_order.is_some() {
                return Err(Error::MalformedGraph(format!(
                    "output node {} must not carry a time label",
                    node.id
                )));
            }
            if self.nodes.iter().any(|n| n.is_output() && n.level == node.level) {
                return Err(Error::MalformedGraph(format!(
                    "level {} already has an output node",
                    node.level
                )));
            }
        } else if node.time_order.is_none() {
            return Err(Error::MalformedGraph(format!(
                "measured node {} is missing a time label",
                node.id
            )));
        }
        self.nodes.push(node);
        Ok(())
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<()> {
        if a == b {
            return Err(Error::MalformedGraph(format!("self loop on node {a}")));
        }
        if self.node(a).is_none() || self.node(b).is_none() {
            return Err(Error::MalformedGraph(format!("edge ({a},{b}) references missing node")));
        }
        let key = (a.min(b), a.max(b));
        if self.edges.contains(&key) {
            return Err(Error::MalformedGraph(format!("duplicate edge ({a},{b})")));
        }
        self.edges.push(key);
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Position of a node in the register layout used by [`prepare`].
    pub fn qubit_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Number of levels (max level index + 1).
    pub fn n_levels(&self) -> usize {
        self.nodes.iter().map(|n| n.level + 1).max().unwrap_or(0)
    }

    pub fn max_layer(&self) -> usize {
        self.nodes.iter().map(|n| n.layer).max().unwrap_or(0)
    }

    /// The vertical bridge partner of a node: a neighbor in the same layer
    /// on a different level, if any.
    pub fn bridge_partner(&self, id: NodeId) -> Option<NodeId> {
        let node = self.node(id)?;
        self.neighbors(id).into_iter().find(|&u| {
            self.node(u).map(|n| n.layer == node.layer && n.level != node.level).unwrap_or(false)
        })
    }

    /// Remove a node and its incident edges.
    pub fn without_node(&self, id: NodeId) -> Result<Self> {
        if self.node(id).is_none() {
            return Err(Error::UnknownId { kind: "node", id });
        }
        Ok(Self {
            nodes: self.nodes.iter().filter(|n| n.id != id).cloned().collect(),
            edges: self.edges.iter().filter(|&&(a, b)| a != id && b != id).cloned().collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphRepr::from(self)).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: GraphRepr = serde_json::from_str(text)?;
        repr.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRepr {
    id: usize,
    level: usize,
    layer: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    angle: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    output: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    adaptive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    nodes: Vec<NodeRepr>,
    edges: Vec<(usize, usize)>,
}

impl From<&ClusterGraph> for GraphRepr {
    fn from(g: &ClusterGraph) -> Self {
        let nodes = g
            .nodes
            .iter()
            .map(|n| match n.spec {
                NodeSpec::Measured { angle, adaptive } => NodeRepr {
                    id: n.id,
                    level: n.level,
                    layer: n.layer,
                    angle: Some(angle),
                    output: false,
                    adaptive,
                    t: n.time_order,
                },
                NodeSpec::Output => NodeRepr {
                    id: n.id,
                    level: n.level,
                    layer: n.layer,
                    angle: None,
                    output: true,
                    adaptive: false,
                    t: None,
                },
            })
            .collect();
        GraphRepr { nodes, edges: g.edges.clone() }
    }
}

impl TryFrom<GraphRepr> for ClusterGraph {
    type Error = Error;

    fn try_from(repr: GraphRepr) -> Result<Self> {
        let mut nodes = Vec::with_capacity(repr.nodes.len());
        for n in repr.nodes {
            let spec = if n.output {
                NodeSpec::Output
            } else {
                let angle = n.angle.ok_or_else(|| {
                    Error::MalformedGraph(format!("node {} has neither angle nor output", n.id))
                })?;
                NodeSpec::Measured { angle, adaptive: n.adaptive }
            };
            nodes.push(Node {
                id: n.id,
                level: n.level,
                layer: n.layer,
                spec,
                time_order: if n.output { None } else { n.t.or(Some(n.layer as u32)) },
            });
        }
        ClusterGraph::new(nodes, repr.edges)
    }
}

/// Classical byproduct bits, one `(x, z)` pair per level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    x: Vec<u8>,
    z: Vec<u8>,
}

impl PauliFrame {
    pub fn new(n_levels: usize) -> Self {
        Self { x: vec![0; n_levels], z: vec![0; n_levels] }
    }

    pub fn n_levels(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self, level: usize) -> u8 {
        self.x[level]
    }

    pub fn z(&self, level: usize) -> u8 {
        self.z[level]
    }

    /// The defining update: `x' = z + m (mod 2)`, `z' = x (mod 2)`.
    pub fn update(&mut self, level: usize, m: u8) -> Result<()> {
        if level >= self.x.len() {
            return Err(Error::UnknownId { kind: "level", id: level });
        }
        let old_x = self.x[level];
        self.x[level] = (self.z[level] + (m & 1)) & 1;
        self.z[level] = old_x;
        Ok(())
    }

    /// Flip the `z` bit of a level (bridge cross-term).
    pub fn flip_z(&mut self, level: usize, bit: u8) {
        self.z[level] ^= bit & 1;
    }

    /// Overwrite a level's pair.
    pub fn set(&mut self, level: usize, x: u8, z: u8) {
        self.x[level] = x & 1;
        self.z[level] = z & 1;
    }

    /// `X^x` mask over levels: bit `ℓ` set when level `ℓ` needs an X flip.
    pub fn x_mask(&self) -> usize {
        self.x.iter().enumerate().fold(0, |m, (i, &b)| m | ((b as usize) << i))
    }
}

/// Standalone frame update, returning the new frame.
pub fn frame_update(frame: &PauliFrame, level: usize, m: u8) -> Result<PauliFrame> {
    let mut next = frame.clone();
    next.update(level, m)?;
    Ok(next)
}

/// The Pauli correction `σ = ⊗_levels X^{x_ℓ} Z^{z_ℓ}` (X leftmost per
/// level; level ℓ is qubit ℓ).
pub fn final_correction(frame: &PauliFrame) -> CMatrix {
    let mut acc = identity(1);
    for level in (0..frame.n_levels()).rev() {
        let mut op = identity(2);
        if frame.z(level) == 1 {
            op = gates::z() * op;
        }
        if frame.x(level) == 1 {
            op = gates::x() * op;
        }
        acc = kron(&acc, &op);
    }
    acc
}

/// Prepare the cluster state of a graph: `|+⟩` per node, CZ per edge.
/// Qubit `i` of the result is `graph.nodes()[i]`.
pub fn prepare(graph: &ClusterGraph) -> Result<StateVector> {
    let n = graph.nodes().len();
    if n > MAX_QUBITS {
        return Err(Error::RegisterTooLarge { requested: n, limit: MAX_QUBITS });
    }
    let mut state = StateVector::plus(n)?;
    let cz = gates::cz();
    for &(a, b) in graph.edges() {
        let qa = graph.qubit_of(a).expect("validated edge");
        let qb = graph.qubit_of(b).expect("validated edge");
        state = apply(&state, &cz, &[qa, qb])?;
    }
    Ok(state)
}

/// Computational-basis deletion of a node.
///
/// Measures the node in the computational basis, applies `Z^m` to every
/// neighbor, and removes the node from both the register and the graph.
/// For a freshly prepared cluster the posterior equals
/// `prepare(graph_without_node)` exactly, either branch.
pub fn z_delete(
    state: &StateVector,
    graph: &ClusterGraph,
    node: NodeId,
    forced: Option<u8>,
    rng: &mut ChaCha8Rng,
) -> Result<(u8, StateVector, ClusterGraph)> {
    let qubit = graph.qubit_of(node).ok_or(Error::UnknownId { kind: "node", id: node })?;
    let m = measure(state, qubit, &identity(2), forced, rng)?;
    let mut posterior = m.posterior;
    if m.outcome == 1 {
        let zg = gates::z();
        for nb in graph.neighbors(node) {
            let qn = graph.qubit_of(nb).expect("neighbor exists");
            posterior = apply(&posterior, &zg, &[qn])?;
        }
    }
    let posterior = posterior.drop_qubit(qubit, m.outcome)?;
    Ok((m.outcome, posterior, graph.without_node(node)?))
}

/// Record of one measurement inside a run.
#[derive(Debug, Clone, Copy)]
pub struct NodeOutcome {
    pub node: NodeId,
    pub outcome: u8,
    pub prob: f64,
}

/// Executor for cluster-state computations.
///
/// Owns the live graph, the register (one qubit per live node, in graph
/// order), the Pauli frame, and the exact branch phase. Measured nodes are
/// collapsed and dropped from the register, so the register stays small
/// even for long computations when nodes are adjoined incrementally via
/// [`ClusterRun::adjoin`].
#[derive(Debug, Clone)]
pub struct ClusterRun {
    graph: ClusterGraph,
    state: StateVector,
    frame: PauliFrame,
    phase: Complex64,
    measured: BTreeSet<NodeId>,
    bridge_flipped: BTreeSet<(NodeId, NodeId)>,
    outcomes: Vec<NodeOutcome>,
    /// Remaining unmeasured measured-spec nodes per time label.
    pending_labels: BTreeMap<u32, usize>,
    /// Auxiliary qubits (environments) at the low end of the register.
    aux_count: usize,
}

impl ClusterRun {
    /// Prepare the entire graph up front.
    pub fn new(graph: ClusterGraph) -> Result<Self> {
        let state = prepare(&graph)?;
        let n_levels = graph.n_levels();
        let mut pending_labels: BTreeMap<u32, usize> = BTreeMap::new();
        for n in graph.nodes() {
            if let Some(t) = n.time_order {
                *pending_labels.entry(t).or_insert(0) += 1;
            }
        }
        Ok(Self {
            graph,
            state,
            frame: PauliFrame::new(n_levels),
            phase: Complex64::ONE,
            measured: BTreeSet::new(),
            bridge_flipped: BTreeSet::new(),
            outcomes: Vec::new(),
            pending_labels,
            aux_count: 0,
        })
    }

    /// Start from an empty graph with a known number of levels, for
    /// incremental (scheduled) execution.
    pub fn empty(n_levels: usize) -> Self {
        Self::empty_with_aux(n_levels, 0)
    }

    /// Incremental run with `aux_count` auxiliary qubits (environments) at
    /// register slots `0..aux_count`, initialized to `|0⟩` and never
    /// dropped.
    pub fn empty_with_aux(n_levels: usize, aux_count: usize) -> Self {
        Self {
            graph: ClusterGraph::default(),
            state: StateVector::zero(aux_count).expect("aux register"),
            frame: PauliFrame::new(n_levels),
            phase: Complex64::ONE,
            measured: BTreeSet::new(),
            bridge_flipped: BTreeSet::new(),
            outcomes: Vec::new(),
            pending_labels: BTreeMap::new(),
            aux_count,
        }
    }

    pub fn aux_count(&self) -> usize {
        self.aux_count
    }

    pub fn graph(&self) -> &ClusterGraph {
        &self.graph
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn frame(&self) -> &PauliFrame {
        &self.frame
    }

    /// Exact accumulated branch phase.
    pub fn phase(&self) -> Complex64 {
        self.phase
    }

    pub fn outcomes(&self) -> &[NodeOutcome] {
        &self.outcomes
    }

    /// Register slot of a live node.
    pub fn slot(&self, node: NodeId) -> Option<usize> {
        self.graph.qubit_of(node).map(|q| q + self.aux_count)
    }

    /// Apply a gate to explicit register slots (auxiliary qubits included).
    pub fn apply_slots(&mut self, gate: &CMatrix, slots: &[usize]) -> Result<()> {
        self.state = apply(&self.state, gate, slots)?;
        Ok(())
    }

    /// Force-flip frame bits at a level (classical-noise demonstrations).
    pub fn flip_frame_bits(&mut self, level: usize, flip_x: bool, flip_z: bool) -> Result<()> {
        if level >= self.frame.n_levels() {
            return Err(Error::UnknownId { kind: "level", id: level });
        }
        if flip_x {
            let x = self.frame.x(level);
            let z = self.frame.z(level);
            // Re-derive the stored pair with x toggled.
            self.frame = {
                let mut f = self.frame.clone();
                f.set(level, x ^ 1, z);
                f
            };
        }
        if flip_z {
            self.frame.flip_z(level, 1);
        }
        Ok(())
    }

    /// Adjoin fresh `|+⟩` nodes and apply the listed CZ edges (each edge
    /// may connect two new nodes or a new node to a live one).
    pub fn adjoin(&mut self, nodes: Vec<Node>, edges: &[(NodeId, NodeId)]) -> Result<()> {
        for node in nodes {
            if let Some(t) = node.time_order {
                *self.pending_labels.entry(t).or_insert(0) += 1;
            }
            self.graph.add_node(node)?;
            self.state = self.state.tensor(&StateVector::plus(1)?)?;
        }
        for &(a, b) in edges {
            self.apply_cz(a, b)?;
        }
        Ok(())
    }

    /// Apply a CZ between two live nodes and record the edge.
    pub fn apply_cz(&mut self, a: NodeId, b: NodeId) -> Result<()> {
        self.graph.add_edge(a, b)?;
        let qa = self.slot(a).expect("edge endpoints are live");
        let qb = self.slot(b).expect("edge endpoints are live");
        self.state = apply(&self.state, &gates::cz(), &[qa, qb])?;
        Ok(())
    }

    /// Apply an arbitrary gate to live nodes (local corrections, noise).
    pub fn apply_gate_nodes(&mut self, gate: &CMatrix, nodes: &[NodeId]) -> Result<()> {
        let slots: Vec<usize> = nodes
            .iter()
            .map(|&n| self.slot(n).ok_or(Error::UnknownId { kind: "node", id: n }))
            .collect::<Result<_>>()?;
        self.state = apply(&self.state, gate, &slots)?;
        Ok(())
    }

    fn node_info(&self, node: NodeId) -> Result<Node> {
        self.graph.node(node).cloned().ok_or(Error::UnknownId { kind: "node", id: node })
    }

    /// Apply the bridge cross-flips for a vertical pair, once per pair:
    /// both levels' `z` bits absorb the other's pre-measurement `x`, and
    /// the branch phase picks up `(−1)^{x₁·x₂}`.
    fn bridge_preflip(&mut self, v: NodeId) -> Result<()> {
        let Some(partner) = self.graph.bridge_partner(v) else {
            return Ok(());
        };
        let key = (v.min(partner), v.max(partner));
        if self.bridge_flipped.contains(&key) {
            return Ok(());
        }
        let lv = self.node_info(v)?.level;
        let lu = self.node_info(partner)?.level;
        let xv = self.frame.x(lv);
        let xu = self.frame.x(lu);
        if xv & xu == 1 {
            self.phase = -self.phase;
        }
        self.frame.flip_z(lv, xu);
        self.frame.flip_z(lu, xv);
        self.bridge_flipped.insert(key);
        Ok(())
    }

    /// Measure a node in its adaptive basis and update the frame.
    ///
    /// The rotation is `H·Z_β` with `β = +α`, or `−α` when the node is
    /// adaptive and the level's `x` bit is set. Out-of-order measurements
    /// (an unmeasured node with a smaller time label still pending) are
    /// rejected.
    pub fn measure_node(
        &mut self,
        node: NodeId,
        forced: Option<u8>,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeOutcome> {
        if self.measured.contains(&node) {
            return Err(Error::MeasurementOrder(format!("node {node} already measured")));
        }
        let info = self.node_info(node)?;
        let NodeSpec::Measured { angle, adaptive } = info.spec else {
            return Err(Error::InvalidTarget(format!("node {node} is an output node")));
        };
        let label = info.time_order.expect("measured nodes carry labels");
        if let Some((&first, _)) = self.pending_labels.iter().find(|&(_, &c)| c > 0) {
            if first < label {
                return Err(Error::MeasurementOrder(format!(
                    "node {node} (label {label}) measured before label {first} finished"
                )));
            }
        }

        self.bridge_preflip(node)?;

        let x = self.frame.x(info.level);
        let z = self.frame.z(info.level);
        let beta = if adaptive && x == 1 { -angle } else { angle };
        let rot = gates::hz(beta);
        let qubit = self.slot(node).expect("node is live");
        let m = measure(&self.state, qubit, &rot, forced, rng)?;
        self.state = m.posterior.drop_qubit(qubit, m.outcome)?;
        self.graph = self.graph.without_node(node)?;
        self.measured.insert(node);
        if let Some(c) = self.pending_labels.get_mut(&label) {
            *c -= 1;
        }

        // Exact branch phase: with the level's x bit set, commuting the
        // byproduct through H·Z_β costs e^{iβ}·(−1)^z.
        if x == 1 {
            self.phase *= Complex64::new(0.0, beta).exp();
            if z == 1 {
                self.phase = -self.phase;
            }
        }
        self.frame.update(info.level, m.outcome)?;

        let rec = NodeOutcome { node, outcome: m.outcome, prob: m.prob };
        self.outcomes.push(rec);
        Ok(rec)
    }

    /// Z-deletion inside a run (no frame interaction).
    pub fn z_delete(&mut self, node: NodeId, forced: Option<u8>, rng: &mut ChaCha8Rng) -> Result<u8> {
        let info = self.node_info(node)?;
        let qubit = self.slot(node).ok_or(Error::UnknownId { kind: "node", id: node })?;
        let m = measure(&self.state, qubit, &identity(2), forced, rng)?;
        let mut posterior = m.posterior;
        if m.outcome == 1 {
            let zg = gates::z();
            for nb in self.graph.neighbors(node) {
                let qn = self.slot(nb).expect("neighbor exists");
                posterior = apply(&posterior, &zg, &[qn])?;
            }
        }
        self.state = posterior.drop_qubit(qubit, m.outcome)?;
        self.graph = self.graph.without_node(node)?;
        if let Some(t) = info.time_order {
            if let Some(c) = self.pending_labels.get_mut(&t) {
                *c = c.saturating_sub(1);
            }
        }
        Ok(m.outcome)
    }

    /// Register slots of the output nodes, in level order.
    pub fn output_slots(&self) -> Vec<usize> {
        let mut outputs: Vec<(usize, usize)> = self
            .graph
            .nodes()
            .iter()
            .filter(|n| n.is_output())
            .map(|n| (n.level, self.slot(n.id).expect("output is live")))
            .collect();
        outputs.sort();
        outputs.into_iter().map(|(_, s)| s).collect()
    }

    /// The output state with qubit `ℓ` = the output node of level `ℓ`.
    /// All measured-spec nodes must have been consumed; runs with
    /// auxiliary qubits expose [`Self::output_slots`] instead.
    pub fn output_state(&self) -> Result<StateVector> {
        if self.aux_count != 0 {
            return Err(Error::InvalidTarget(
                "output_state is register-exact; auxiliary qubits present".into(),
            ));
        }
        let mut outputs: Vec<(usize, usize)> = self
            .graph
            .nodes()
            .iter()
            .enumerate()
            .map(|(pos, n)| {
                if n.is_output() {
                    Ok((n.level, pos))
                } else {
                    Err(Error::MeasurementOrder(format!("node {} is still unmeasured", n.id)))
                }
            })
            .collect::<Result<_>>()?;
        outputs.sort();
        let perm: Vec<usize> = outputs.iter().map(|&(_, pos)| pos).collect();
        self.state.permuted(&perm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng_from_seed;
    use crate::simulator::distribution;
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn chain_graph(angles: &[f64]) -> ClusterGraph {
        let mut nodes = Vec::new();
        for (i, &a) in angles.iter().enumerate() {
            nodes.push(Node::measured(i, 0, i + 1, a, i > 0));
        }
        nodes.push(Node::output(angles.len(), 0, angles.len() + 1));
        let edges = (0..angles.len()).map(|i| (i, i + 1)).collect();
        ClusterGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn frame_update_table() {
        let mut f = PauliFrame::new(1);
        f.update(0, 1).unwrap();
        assert_eq!((f.x(0), f.z(0)), (1, 0));

        let mut f = PauliFrame::new(1);
        f.update(0, 0).unwrap();
        assert_eq!((f.x(0), f.z(0)), (0, 0));

        // From (x=1, z=1), m=1 → x' = z+m = 0, z' = x = 1.
        let mut f = PauliFrame::new(1);
        f.update(0, 1).unwrap(); // (1,0)
        f.update(0, 1).unwrap(); // (1,1)
        assert_eq!((f.x(0), f.z(0)), (1, 1));
        f.update(0, 1).unwrap();
        assert_eq!((f.x(0), f.z(0)), (0, 1));
    }

    #[test]
    fn frame_update_unknown_level() {
        let f = PauliFrame::new(1);
        assert!(frame_update(&f, 3, 0).is_err());
    }

    #[test]
    fn prepare_single_node_is_plus() {
        let g = ClusterGraph::new(vec![Node::output(0, 0, 0)], vec![]).unwrap();
        assert!(prepare(&g).unwrap().max_amp_diff(&StateVector::plus(1).unwrap()) < 1e-15);
    }

    #[test]
    fn prepare_two_nodes_one_edge() {
        let g = ClusterGraph::new(
            vec![Node::measured(0, 0, 1, 0.0, false), Node::output(1, 0, 2)],
            vec![(0, 1)],
        )
        .unwrap();
        let want = apply(&StateVector::plus(2).unwrap(), &gates::cz(), &[0, 1]).unwrap();
        assert!(prepare(&g).unwrap().max_amp_diff(&want) < 1e-15);
    }

    #[test]
    fn prepare_is_edge_order_invariant() {
        let mut rng = rng_from_seed(300);
        let nodes: Vec<Node> = (0..6).map(|i| Node::measured(i, 0, i, 0.0, false)).collect();
        let all_pairs: Vec<(usize, usize)> =
            (0..6).flat_map(|a| ((a + 1)..6).map(move |b| (a, b))).collect();
        let mut edges: Vec<(usize, usize)> =
            all_pairs.iter().filter(|_| rng.random::<f64>() < 0.5).cloned().collect();
        let g1 = ClusterGraph::new(nodes.clone(), edges.clone()).unwrap();
        edges.shuffle(&mut rng);
        let g2 = ClusterGraph::new(nodes, edges).unwrap();
        assert!(prepare(&g1).unwrap().max_amp_diff(&prepare(&g2).unwrap()) < 1e-12);
    }

    #[test]
    fn first_measurement_uses_plus_angle() {
        // On a fresh level x = 0, so the basis is H·Z_{+α} whether or not
        // the node is adaptive.
        let g = chain_graph(&[0.3]);
        for adaptive in [false, true] {
            let mut g2 = g.clone();
            let mut nodes = g2.nodes.clone();
            if let NodeSpec::Measured { angle, .. } = nodes[0].spec {
                nodes[0].spec = NodeSpec::Measured { angle, adaptive };
            }
            g2.nodes = nodes;
            let mut run = ClusterRun::new(g2).unwrap();
            let mut rng = rng_from_seed(1);
            run.measure_node(0, Some(0), &mut rng).unwrap();
            let expect = apply(&StateVector::plus(1).unwrap(), &gates::hz(0.3), &[0]).unwrap();
            assert!(run.output_state().unwrap().max_amp_diff(&expect) < 1e-12);
        }
    }

    #[test]
    fn angle_zero_ignores_frame_sign() {
        assert!((gates::hz(0.0) - gates::h()).norm() < 1e-15);
    }

    #[test]
    fn three_node_chain_matches_manual_simulation() {
        // Oracle: drive the raw simulator by hand (cluster prepare, rotated
        // measurements with a manually tracked frame), then compare the
        // formula output = phase · X^x Z^z · (HZ_{α₂} H Z_{α₁})|+⟩ and the
        // ClusterRun executor against it, on every forced branch.
        let (a1, a2) = (0.37, 1.13);
        for m1 in [0u8, 1] {
            for m2 in [0u8, 1] {
                // --- manual simulation ---
                let mut rng = rng_from_seed(2);
                let g = chain_graph(&[a1, a2]);
                let mut state = prepare(&g).unwrap();
                let meas1 = measure(&state, 0, &gates::hz(a1), Some(m1), &mut rng).unwrap();
                state = meas1.posterior;
                // manual frame: x = m1, z = 0; sign for node 1 flips iff x=1.
                let beta = if m1 == 1 { -a2 } else { a2 };
                let meas2 = measure(&state, 1, &gates::hz(beta), Some(m2), &mut rng).unwrap();
                state = meas2.posterior;
                let manual = state.drop_qubit(0, m1).unwrap().drop_qubit(0, m2).unwrap();

                // --- formula ---
                let ideal = {
                    let s = StateVector::plus(1).unwrap();
                    let s = apply(&s, &gates::hz(a1), &[0]).unwrap();
                    apply(&s, &gates::hz(a2), &[0]).unwrap()
                };
                // Final frame: x = m2, z = m1 by the update recursion.
                let mut frame = PauliFrame::new(1);
                frame.update(0, m1).unwrap();
                frame.update(0, m2).unwrap();
                assert_eq!((frame.x(0), frame.z(0)), (m2, m1));
                let sigma = final_correction(&frame);
                let mut expect = apply(&ideal, &sigma, &[0]).unwrap();
                // Phase: second measurement sees x = m1; contributes
                // e^{iβ}(−1)^z with z = 0.
                if m1 == 1 {
                    let ph = Complex64::new(0.0, beta).exp();
                    expect = StateVector::from_amplitudes(
                        expect.amplitudes().iter().map(|&v| v * ph).collect(),
                    )
                    .unwrap();
                }
                assert!(
                    manual.max_amp_diff(&expect) < 1e-12,
                    "formula mismatch at branch ({m1},{m2})"
                );

                // --- executor ---
                let mut rng = rng_from_seed(3);
                let mut run = ClusterRun::new(chain_graph(&[a1, a2])).unwrap();
                run.measure_node(0, Some(m1), &mut rng).unwrap();
                run.measure_node(1, Some(m2), &mut rng).unwrap();
                assert!(run.output_state().unwrap().max_amp_diff(&manual) < 1e-12);
                assert_eq!((run.frame().x(0), run.frame().z(0)), (m2, m1));
            }
        }
    }

    #[test]
    fn measurement_order_enforced() {
        let mut run = ClusterRun::new(chain_graph(&[0.1, 0.2])).unwrap();
        let mut rng = rng_from_seed(4);
        assert!(matches!(run.measure_node(1, Some(0), &mut rng), Err(Error::MeasurementOrder(_))));
        run.measure_node(0, Some(0), &mut rng).unwrap();
        assert!(run.measure_node(0, Some(0), &mut rng).is_err());
    }

    #[test]
    fn z_delete_isolated_node() {
        let g = ClusterGraph::new(
            vec![Node::measured(0, 0, 0, 0.0, false), Node::output(1, 1, 0)],
            vec![],
        )
        .unwrap();
        let state = prepare(&g).unwrap();
        for forced in [0u8, 1] {
            let mut rng = rng_from_seed(5);
            let (_, posterior, reduced) = z_delete(&state, &g, 0, Some(forced), &mut rng).unwrap();
            assert!(posterior.max_amp_diff(&prepare(&reduced).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn z_delete_two_node_edge() {
        let g = ClusterGraph::new(
            vec![Node::measured(0, 0, 0, 0.0, false), Node::output(1, 0, 1)],
            vec![(0, 1)],
        )
        .unwrap();
        let state = prepare(&g).unwrap();
        for forced in [0u8, 1] {
            let mut rng = rng_from_seed(6);
            let (_, posterior, _) = z_delete(&state, &g, 0, Some(forced), &mut rng).unwrap();
            assert!(posterior.max_amp_diff(&StateVector::plus(1).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn z_delete_random_graphs_both_branches() {
        let mut rng = rng_from_seed(301);
        for trial in 0..100 {
            let n = 4 + trial % 5; // 4..8 nodes
            let nodes: Vec<Node> = (0..n).map(|i| Node::measured(i, 0, i, 0.0, false)).collect();
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.random::<f64>() < 0.4 {
                        edges.push((a, b));
                    }
                }
            }
            let g = ClusterGraph::new(nodes, edges).unwrap();
            let state = prepare(&g).unwrap();
            let victim = trial % n;
            for forced in [0u8, 1] {
                let (_, posterior, reduced) =
                    z_delete(&state, &g, victim, Some(forced), &mut rng).unwrap();
                assert!(
                    posterior.max_amp_diff(&prepare(&reduced).unwrap()) < 1e-10,
                    "trial {trial} branch {forced}"
                );
            }
        }
    }

    #[test]
    fn z_delete_commutes_with_unrelated_measurement() {
        // Delete node 2 then measure non-adjacent node 0, versus the
        // reverse order; branch by branch the states agree.
        let nodes = vec![
            Node::measured(0, 0, 1, 0.4, false),
            Node::output(1, 0, 2),
            Node::measured(2, 1, 1, 0.0, false),
            Node::output(3, 1, 2),
        ];
        let edges = vec![(0, 1), (2, 3)];
        let g = ClusterGraph::new(nodes, edges).unwrap();
        for (ma, mb) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let mut rng = rng_from_seed(7);
            let mut run1 = ClusterRun::new(g.clone()).unwrap();
            run1.z_delete(2, Some(ma), &mut rng).unwrap();
            run1.measure_node(0, Some(mb), &mut rng).unwrap();

            let mut run2 = ClusterRun::new(g.clone()).unwrap();
            run2.measure_node(0, Some(mb), &mut rng).unwrap();
            run2.z_delete(2, Some(ma), &mut rng).unwrap();

            assert!(run1.state().max_amp_diff(run2.state()) < 1e-12);
        }
    }

    #[test]
    fn final_correction_builds_pauli_products() {
        let f = PauliFrame::new(2);
        assert!((final_correction(&f) - identity(4)).norm() < 1e-15);

        let mut f = PauliFrame::new(1);
        f.update(0, 1).unwrap(); // x=1, z=0
        assert!((final_correction(&f) - gates::x()).norm() < 1e-15);

        let mut f = PauliFrame::new(1);
        f.update(0, 1).unwrap();
        f.update(0, 1).unwrap(); // x=1, z=1
        assert!((final_correction(&f) - gates::x() * gates::z()).norm() < 1e-15);
    }

    #[test]
    fn incremental_adjoin_matches_full_prepare() {
        // Build a chain incrementally and compare the branch state with
        // the all-at-once preparation.
        let g = chain_graph(&[0.2, 0.9, 1.5]);
        let mut full = ClusterRun::new(g).unwrap();
        let mut inc = ClusterRun::empty(1);
        inc.adjoin(
            vec![Node::measured(0, 0, 1, 0.2, false), Node::measured(1, 0, 2, 0.9, true)],
            &[(0, 1)],
        )
        .unwrap();
        let mut rng = rng_from_seed(8);
        full.measure_node(0, Some(1), &mut rng).unwrap();
        inc.measure_node(0, Some(1), &mut rng).unwrap();
        inc.adjoin(vec![Node::measured(2, 0, 3, 1.5, true)], &[(1, 2)]).unwrap();
        full.measure_node(1, Some(0), &mut rng).unwrap();
        inc.measure_node(1, Some(0), &mut rng).unwrap();
        inc.adjoin(vec![Node::output(3, 0, 4)], &[(2, 3)]).unwrap();
        full.measure_node(2, Some(1), &mut rng).unwrap();
        inc.measure_node(2, Some(1), &mut rng).unwrap();
        assert!(full.output_state().unwrap().max_amp_diff(&inc.output_state().unwrap()) < 1e-12);
        assert_eq!(full.frame(), inc.frame());
        assert!((full.phase() - inc.phase()).norm() < 1e-12);
    }

    #[test]
    fn graph_json_round_trip() {
        let g = chain_graph(&[0.25, -1.0]);
        let text = g.to_json();
        let back = ClusterGraph::from_json(&text).unwrap();
        assert_eq!(g, back);
        assert!(text.contains("\"edges\""));
    }

    #[test]
    fn graph_rejects_malformed_input() {
        assert!(ClusterGraph::new(vec![Node::output(0, 0, 0)], vec![(0, 0)]).is_err());
        assert!(ClusterGraph::new(vec![Node::output(0, 0, 0)], vec![(0, 1)]).is_err());
        assert!(ClusterGraph::new(
            vec![Node::output(0, 0, 0), Node::output(1, 0, 1)],
            vec![]
        )
        .is_err());
    }

    #[test]
    fn output_distribution_of_trivial_chain() {
        // Two angle-0 gates compose to H·H = I; up to the byproduct the
        // output is |+⟩, whose distribution the X mask cannot change.
        let g = chain_graph(&[0.0, 0.0]);
        let mut rng = rng_from_seed(9);
        let mut run = ClusterRun::new(g).unwrap();
        run.measure_node(0, None, &mut rng).unwrap();
        run.measure_node(1, None, &mut rng).unwrap();
        let out = run.output_state().unwrap();
        let d = distribution(&out, &[0]).unwrap();
        assert_abs_diff_eq!(d.prob(0), 0.5, epsilon = 1e-10);
    }
}
