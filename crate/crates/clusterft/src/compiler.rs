//! Circuit canonicalization and compilation into cluster graphs and
//! measurement schedules.
//!
//! Circuits move through three gate sets:
//!
//! 1. input gates `{prep_plus, I, H, Z_θ, X_αZ_β, CZ}`;
//! 2. the intermediate set `{prep_plus, I, X_αZ_β, CZ}`;
//! 3. the canonical set `{prep_plus, HZ_α, (H⊗H)CZ}`.
//!
//! Stage two rewrites every intermediate gate into exactly two canonical
//! slots (`I → HZ₀·HZ₀`, `X_αZ_β → HZ_β then HZ_α`, `CZ → HH_CZ then
//! HZ₀⊗HZ₀`), so canonical output is rectangular: every active level holds
//! a gate in every slot, which is what the layered schedules assume. The
//! rewrites preserve the circuit unitary exactly, up to a global phase for
//! the `H` expansion.
//!
//! Compilation maps each `HZ_α` to one measured node, each `HH_CZ` to a
//! vertical bridge pair of angle-0 nodes, and terminates every level with
//! an output node. Layers are 1-indexed (slot `s` → layer `s+1`), which
//! puts canonical bridges at odd layers — exactly the restriction the
//! dangling-node implementation needs.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterGraph, ClusterRun, Node, NodeId};
use crate::error::{Error, Result};
use crate::linalg::{identity, op_dist, op_norm, CMatrix};
use crate::simulator::{apply, embed_gate, gates, StateVector};

/// One circuit gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum Gate {
    PrepPlus { q: usize },
    I { q: usize },
    H { q: usize },
    /// `Z_θ = diag(1, e^{iθ})`.
    Z { q: usize, theta: f64 },
    /// `X_α·Z_β` (the Z rotation acts first).
    Xz { q: usize, alpha: f64, beta: f64 },
    Cz { a: usize, b: usize },
    /// Canonical single-qubit gate `H·Z_α`.
    Hz { q: usize, alpha: f64 },
    /// Canonical entangling gate `(H⊗H)·CZ`.
    HhCz { a: usize, b: usize },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::PrepPlus { q } | Gate::I { q } | Gate::H { q } => vec![q],
            Gate::Z { q, .. } | Gate::Xz { q, .. } | Gate::Hz { q, .. } => vec![q],
            Gate::Cz { a, b } | Gate::HhCz { a, b } => vec![a, b],
        }
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self, Gate::PrepPlus { .. } | Gate::Hz { .. } | Gate::HhCz { .. })
    }

    /// The gate matrix on its own qubits (`None` for preparations).
    pub fn matrix(&self) -> Option<CMatrix> {
        match *self {
            Gate::PrepPlus { .. } => None,
            Gate::I { .. } => Some(identity(2)),
            Gate::H { .. } => Some(gates::h()),
            Gate::Z { theta, .. } => Some(gates::z_rot(theta)),
            Gate::Xz { alpha, beta, .. } => Some(gates::x_rot(alpha) * gates::z_rot(beta)),
            Gate::Cz { .. } => Some(gates::cz()),
            Gate::Hz { alpha, .. } => Some(gates::hz(alpha)),
            Gate::HhCz { .. } => Some(gates::hh_cz()),
        }
    }
}

/// A time-slotted circuit. Gates in the same slot act on disjoint qubits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    n_qubits: usize,
    steps: Vec<(usize, Gate)>,
}

#[derive(Serialize, Deserialize)]
struct StepRepr {
    t: usize,
    #[serde(flatten)]
    gate: Gate,
}

#[derive(Serialize, Deserialize)]
struct CircuitRepr {
    n: usize,
    steps: Vec<StepRepr>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, steps: Vec::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn steps(&self) -> &[(usize, Gate)] {
        &self.steps
    }

    pub fn n_slots(&self) -> usize {
        self.steps.iter().map(|&(t, _)| t + 1).max().unwrap_or(0)
    }

    /// Append a gate at time slot `t`; rejects qubit clashes in the slot.
    pub fn push(&mut self, t: usize, gate: Gate) -> Result<()> {
        for q in gate.qubits() {
            if q >= self.n_qubits {
                return Err(Error::InvalidTarget(format!(
                    "qubit {q} out of range for {}-qubit circuit",
                    self.n_qubits
                )));
            }
            if self
                .steps
                .iter()
                .any(|(s, g)| *s == t && g.qubits().contains(&q))
            {
                return Err(Error::InvalidTarget(format!(
                    "slot {t} already has a gate on qubit {q}"
                )));
            }
        }
        self.steps.push((t, gate));
        Ok(())
    }

    /// Gates grouped by slot, in slot order.
    pub fn slots(&self) -> Vec<Vec<Gate>> {
        let mut out = vec![Vec::new(); self.n_slots()];
        for (t, g) in &self.steps {
            out[*t].push(g.clone());
        }
        out
    }

    pub fn is_canonical(&self) -> bool {
        self.steps.iter().all(|(_, g)| g.is_canonical())
    }

    /// Composed unitary of all gate steps. Preparations are rejected: they
    /// are not unitary operations on the register.
    pub fn unitary(&self) -> Result<CMatrix> {
        let dim = 1usize << self.n_qubits;
        let mut u = identity(dim);
        for slot in self.slots() {
            for gate in slot {
                let Some(m) = gate.matrix() else {
                    return Err(Error::UnsupportedGate(
                        "unitary() does not cover preparation steps".into(),
                    ));
                };
                u = embed_gate(self.n_qubits, &m, &gate.qubits())? * u;
            }
        }
        Ok(u)
    }

    /// Run the circuit on `|+⟩^⊗n`.
    pub fn output_state(&self) -> Result<StateVector> {
        let mut state = StateVector::plus(self.n_qubits)?;
        for slot in self.slots() {
            for gate in slot {
                if let Some(m) = gate.matrix() {
                    state = apply(&state, &m, &gate.qubits())?;
                }
            }
        }
        Ok(state)
    }

    pub fn to_json(&self) -> String {
        let repr = CircuitRepr {
            n: self.n_qubits,
            steps: self.steps.iter().map(|(t, g)| StepRepr { t: *t, gate: g.clone() }).collect(),
        };
        serde_json::to_string_pretty(&repr).expect("circuit serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: CircuitRepr = serde_json::from_str(text)?;
        let mut c = Circuit::new(repr.n);
        for s in repr.steps {
            c.push(s.t, s.gate)?;
        }
        Ok(c)
    }
}

/// Operator-norm distance between unitaries up to global phase.
pub fn dist_up_to_phase(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let tr = (b.adjoint() * a).trace();
    if tr.norm() < 1e-12 {
        // No phase alignment possible from the trace; fall back to a scan.
        let mut best = f64::INFINITY;
        for k in 0..256 {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 256.0;
            let d = op_norm(&(a - b * Complex64::new(0.0, theta).exp()))?;
            best = best.min(d);
        }
        return Ok(best);
    }
    let phase = tr / tr.norm();
    op_dist(a, &(b * phase))
}

fn first_last_activity(c: &Circuit) -> Vec<Option<(usize, usize)>> {
    let mut spans: Vec<Option<(usize, usize)>> = vec![None; c.n_qubits()];
    for (t, g) in c.steps() {
        for q in g.qubits() {
            spans[q] = Some(match spans[q] {
                None => (*t, *t),
                Some((f, l)) => (f.min(*t), l.max(*t)),
            });
        }
    }
    spans
}

/// Rewrite a circuit into the canonical gate set `{prep_plus, HZ_α, HH_CZ}`.
///
/// Accepts the input set `{prep_plus, I, H, Z_θ, X_αZ_β, CZ}`; the action
/// is preserved exactly up to a global phase (one factor of `e^{iπ/4}` per
/// `H`). Idle slots inside a qubit's active span are filled with explicit
/// identities first, so the canonical output is rectangular over each
/// level's span.
pub fn canonicalize(c: &Circuit) -> Result<Circuit> {
    for (_, g) in c.steps() {
        if matches!(g, Gate::Hz { .. } | Gate::HhCz { .. }) {
            return Err(Error::UnsupportedGate(format!(
                "{g:?} is already canonical; canonicalize expects the input gate set"
            )));
        }
        if let Gate::PrepPlus { q } = g {
            let first = c
                .steps()
                .iter()
                .filter(|(_, h)| !matches!(h, Gate::PrepPlus { .. }) && h.qubits().contains(q))
                .map(|(t, _)| *t)
                .min();
            let prep_t = c.steps().iter().find(|(_, h)| h == g).map(|(t, _)| *t).unwrap_or(0);
            if let Some(f) = first {
                if prep_t >= f {
                    return Err(Error::UnsupportedGate(format!(
                        "prep_plus on qubit {q} must precede the qubit's gates"
                    )));
                }
            }
        }
    }

    let spans = first_last_activity(c);

    // Stage 1: rewrite to {prep_plus, I, X_αZ_β, CZ}, sub-slotting each
    // input slot so parallel expansions stay aligned.
    #[derive(Clone, Debug)]
    enum Mid {
        Prep(usize),
        I(usize),
        Xz(usize, f64, f64),
        Cz(usize, usize),
    }
    let mut mid: Vec<Vec<Mid>> = Vec::new();
    let half_pi = std::f64::consts::FRAC_PI_2;
    for (t, slot) in c.slots().iter().enumerate() {
        // Expansion per gate, plus explicit identities for idle-but-active.
        let mut lists: Vec<Vec<Mid>> = Vec::new();
        let mut preps: Vec<usize> = Vec::new();
        for g in slot {
            match *g {
                Gate::PrepPlus { q } => preps.push(q),
                Gate::I { q } => lists.push(vec![Mid::I(q)]),
                Gate::Z { q, theta } => lists.push(vec![Mid::Xz(q, 0.0, theta)]),
                Gate::H { q } => {
                    lists.push(vec![Mid::Xz(q, half_pi, half_pi), Mid::Xz(q, 0.0, half_pi)])
                }
                Gate::Xz { q, alpha, beta } => lists.push(vec![Mid::Xz(q, alpha, beta)]),
                Gate::Cz { a, b } => lists.push(vec![Mid::Cz(a, b)]),
                Gate::Hz { .. } | Gate::HhCz { .. } => unreachable!("rejected above"),
            }
        }
        for q in 0..c.n_qubits() {
            let busy = slot.iter().any(|g| g.qubits().contains(&q));
            let active = spans[q].map(|(f, l)| t >= f && t <= l).unwrap_or(false);
            if active && !busy {
                lists.push(vec![Mid::I(q)]);
            }
        }
        let width = lists.iter().map(Vec::len).max().unwrap_or(if preps.is_empty() { 0 } else { 1 });
        let width = width.max(usize::from(!preps.is_empty()));
        if width == 0 {
            continue;
        }
        for list in &mut lists {
            let q = match list[0] {
                Mid::Prep(q) | Mid::I(q) | Mid::Xz(q, _, _) => q,
                Mid::Cz(a, _) => a,
            };
            let _ = q;
            while list.len() < width {
                let fill = match list[0] {
                    Mid::I(q) | Mid::Xz(q, _, _) | Mid::Prep(q) => Mid::I(q),
                    Mid::Cz(a, b) => {
                        list.push(Mid::I(a));
                        Mid::I(b)
                    }
                };
                list.push(fill);
            }
        }
        let base = mid.len();
        mid.resize(base + width, Vec::new());
        for q in preps {
            mid[base].push(Mid::Prep(q));
        }
        for list in lists {
            // A CZ padded above pushed two fills; re-walk positionally.
            let mut pos = 0usize;
            for item in list {
                match item {
                    Mid::Cz(a, b) => {
                        mid[base + pos].push(Mid::Cz(a, b));
                        pos += 1;
                    }
                    other => {
                        mid[base + pos].push(other);
                        pos += 1;
                    }
                }
                if pos >= width {
                    break;
                }
            }
        }
    }

    // Stage 2: every intermediate gate becomes two canonical slots.
    let mut out = Circuit::new(c.n_qubits());
    for (s, slot) in mid.iter().enumerate() {
        let (t0, t1) = (2 * s, 2 * s + 1);
        for item in slot {
            match *item {
                Mid::Prep(q) => out.push(t0, Gate::PrepPlus { q })?,
                Mid::I(q) => {
                    out.push(t0, Gate::Hz { q, alpha: 0.0 })?;
                    out.push(t1, Gate::Hz { q, alpha: 0.0 })?;
                }
                Mid::Xz(q, alpha, beta) => {
                    out.push(t0, Gate::Hz { q, alpha: beta })?;
                    out.push(t1, Gate::Hz { q, alpha })?;
                }
                Mid::Cz(a, b) => {
                    out.push(t0, Gate::HhCz { a, b })?;
                    out.push(t1, Gate::Hz { q: a, alpha: 0.0 })?;
                    out.push(t1, Gate::Hz { q: b, alpha: 0.0 })?;
                }
            }
        }
    }
    Ok(out)
}

/// Compile a canonical circuit into a cluster graph.
///
/// One level per circuit qubit; one measured node per `HZ_α` (adaptive
/// after the first on its level); `HH_CZ` becomes two angle-0 nodes joined
/// by a vertical bridge edge; an output node terminates each level. Even
/// idle gaps inside a level's span are padded with angle-0 (`H`) pairs;
/// odd gaps cannot represent the identity and are rejected.
pub fn to_cluster(c: &Circuit) -> Result<ClusterGraph> {
    if !c.is_canonical() {
        return Err(Error::UnsupportedGate(
            "to_cluster expects a canonical circuit (prep_plus, hz, hh_cz)".into(),
        ));
    }
    // angle per (level, slot), bridge pairs, and level spans.
    let mut angle_at: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut bridges: Vec<(usize, usize, usize)> = Vec::new(); // (slot, level a, level b)
    for (t, g) in c.steps() {
        match *g {
            Gate::Hz { q, alpha } => {
                angle_at.insert((q, *t), alpha);
            }
            Gate::HhCz { a, b } => {
                angle_at.insert((a, *t), 0.0);
                angle_at.insert((b, *t), 0.0);
                bridges.push((*t, a, b));
            }
            Gate::PrepPlus { .. } => {}
            _ => unreachable!("canonical checked"),
        }
    }
    let spans = {
        let mut spans: Vec<Option<(usize, usize)>> = vec![None; c.n_qubits()];
        for &(q, t) in angle_at.keys() {
            spans[q] = Some(match spans[q] {
                None => (t, t),
                Some((f, l)) => (f.min(t), l.max(t)),
            });
        }
        spans
    };

    let mut graph = ClusterGraph::default();
    let mut id = 0usize;
    let mut node_at: BTreeMap<(usize, usize), NodeId> = BTreeMap::new(); // (level, layer)
    for level in 0..c.n_qubits() {
        let (first, last) = match spans[level] {
            Some(span) => span,
            None => {
                // Gate-free level: a bare output node.
                graph.add_node(Node::output(id, level, 1))?;
                id += 1;
                continue;
            }
        };
        // Validate idle gaps first: only even runs can be padded exactly.
        let mut s = first;
        while s <= last {
            if angle_at.contains_key(&(level, s)) {
                s += 1;
                continue;
            }
            let run = (s..=last).take_while(|k| !angle_at.contains_key(&(level, *k))).count();
            if run % 2 == 1 {
                return Err(Error::UnsupportedGate(format!(
                    "level {level} idles for {run} slot(s) starting at slot {s}; \
                     only even gaps can be padded with H pairs"
                )));
            }
            s += run;
        }
        let mut prev: Option<NodeId> = None;
        let mut slot = first;
        while slot <= last {
            let angle = angle_at.get(&(level, slot)).copied().unwrap_or(0.0);
            let layer = slot + 1;
            let adaptive = prev.is_some();
            graph.add_node(Node::measured(id, level, layer, angle, adaptive))?;
            node_at.insert((level, layer), id);
            if let Some(p) = prev {
                graph.add_edge(p, id)?;
            }
            prev = Some(id);
            id += 1;
            slot += 1;
        }
        let out_layer = last + 2;
        graph.add_node(Node::output(id, level, out_layer))?;
        node_at.insert((level, out_layer), id);
        graph.add_edge(prev.expect("span nonempty"), id)?;
        id += 1;
    }
    for (slot, a, b) in bridges {
        let layer = slot + 1;
        let na = node_at[&(a, layer)];
        let nb = node_at[&(b, layer)];
        graph.add_edge(na, nb)?;
    }
    Ok(graph)
}

/// One phase of an implementation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Adjoin the listed layers: prepare `|+⟩` nodes, then apply edges.
    Prepare { layers: Vec<usize>, nodes: Vec<NodeId>, edges: Vec<(NodeId, NodeId)> },
    /// Measure the listed nodes (in order).
    Measure { layers: Vec<usize>, nodes: Vec<NodeId> },
}

/// An ordered list of prepare/measure phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Schedule {
    pub phases: Vec<Phase>,
}

impl Schedule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// All measured nodes in schedule order.
    pub fn measured_nodes(&self) -> Vec<NodeId> {
        self.phases
            .iter()
            .filter_map(|p| match p {
                Phase::Measure { nodes, .. } => Some(nodes.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

/// Which implementation schedule to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    OneBuffered,
    TwoAtATime,
    /// Two-at-a-time phase structure with the dangling-node layer-parity
    /// restriction validated up front.
    Dangling,
}

fn sorted_layers(g: &ClusterGraph) -> Vec<usize> {
    let mut layers: Vec<usize> = g.nodes().iter().map(|n| n.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    layers
}

fn layer_nodes(g: &ClusterGraph, layer: usize) -> Vec<NodeId> {
    let mut v: Vec<(usize, NodeId)> = g
        .nodes()
        .iter()
        .filter(|n| n.layer == layer)
        .map(|n| (n.level, n.id))
        .collect();
    v.sort();
    v.into_iter().map(|(_, id)| id).collect()
}

fn measured_layer_nodes(g: &ClusterGraph, layer: usize) -> Vec<NodeId> {
    layer_nodes(g, layer)
        .into_iter()
        .filter(|&id| !g.node(id).unwrap().is_output())
        .collect()
}

/// Edges whose later endpoint lies in `prepared_now`, with the other
/// endpoint already available.
fn edges_for(g: &ClusterGraph, prepared_now: &[usize], available: &[usize]) -> Vec<(NodeId, NodeId)> {
    g.edges()
        .iter()
        .filter(|&&(a, b)| {
            let la = g.node(a).unwrap().layer;
            let lb = g.node(b).unwrap().layer;
            let later = la.max(lb);
            prepared_now.contains(&later)
                && [la, lb].iter().all(|l| available.contains(l) || prepared_now.contains(l))
        })
        .cloned()
        .collect()
}

fn chunked_schedule(g: &ClusterGraph, head: usize, stride: usize) -> Schedule {
    let layers = sorted_layers(g);
    let mut phases = Vec::new();
    let mut prepared: Vec<usize> = Vec::new();
    let mut measured_upto = 0usize; // index into `layers`
    let mut next = 0usize;

    // Initial block of `head` layers, then alternate: measure `stride`
    // layers, prepare the next `stride`.
    while next < layers.len() || measured_upto < layers.len() {
        let take = if next == 0 { head } else { stride };
        if next < layers.len() {
            let chunk: Vec<usize> = layers[next..layers.len().min(next + take)].to_vec();
            let nodes: Vec<NodeId> = chunk.iter().flat_map(|&l| layer_nodes(g, l)).collect();
            let edges = edges_for(g, &chunk, &prepared);
            prepared.extend(chunk.iter());
            phases.push(Phase::Prepare { layers: chunk, nodes, edges });
            next += take;
        }
        // Measure the oldest `stride` prepared-but-unmeasured layers,
        // keeping a buffer while more layers remain.
        let buffer = if next < layers.len() { stride } else { 0 };
        let target = prepared.len().saturating_sub(buffer);
        while measured_upto < target {
            let chunk: Vec<usize> =
                layers[measured_upto..target.min(measured_upto + stride)].to_vec();
            let nodes: Vec<NodeId> =
                chunk.iter().flat_map(|&l| measured_layer_nodes(g, l)).collect();
            if !nodes.is_empty() {
                phases.push(Phase::Measure { layers: chunk.clone(), nodes });
            }
            measured_upto += chunk.len();
        }
        if next >= layers.len() && measured_upto >= layers.len() {
            break;
        }
    }
    Schedule { phases }
}

/// One-buffered schedule: prepare layers 1–2, then alternate one layer of
/// measurements with one freshly prepared layer.
pub fn schedule_one_buffered(g: &ClusterGraph) -> Schedule {
    chunked_schedule(g, 2, 1)
}

/// Two-at-a-time schedule: prepare layers 1–4, then alternate two layers
/// of measurements with two freshly prepared layers.
pub fn schedule_two_at_a_time(g: &ClusterGraph) -> Schedule {
    chunked_schedule(g, 4, 2)
}

/// A bridge edge violating the dangling-node layer-parity restriction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DanglingViolation {
    pub edge: (NodeId, NodeId),
    pub layer: usize,
}

/// Check that every vertical bridge sits in an odd-numbered layer, as the
/// dangling-node implementation requires.
pub fn validate_dangling_restriction(g: &ClusterGraph) -> Vec<DanglingViolation> {
    g.edges()
        .iter()
        .filter_map(|&(a, b)| {
            let na = g.node(a)?;
            let nb = g.node(b)?;
            if na.layer == nb.layer && na.level != nb.level && na.layer % 2 == 0 {
                Some(DanglingViolation { edge: (a, b), layer: na.layer })
            } else {
                None
            }
        })
        .collect()
}

/// Build the schedule of the requested kind; `Dangling` validates the
/// bridge-parity restriction first.
pub fn schedule(g: &ClusterGraph, kind: ScheduleKind) -> Result<Schedule> {
    match kind {
        ScheduleKind::OneBuffered => Ok(schedule_one_buffered(g)),
        ScheduleKind::TwoAtATime => Ok(schedule_two_at_a_time(g)),
        ScheduleKind::Dangling => {
            let violations = validate_dangling_restriction(g);
            if violations.is_empty() {
                Ok(schedule_two_at_a_time(g))
            } else {
                Err(Error::InvalidConfig(format!(
                    "{} bridge(s) in even layers: {:?}",
                    violations.len(),
                    violations
                )))
            }
        }
    }
}

/// Execute a schedule noiselessly. `forced` pins measurement outcomes per
/// node; unforced nodes are sampled from `rng`.
pub fn execute_schedule(
    graph: &ClusterGraph,
    schedule: &Schedule,
    forced: Option<&BTreeMap<NodeId, u8>>,
    rng: &mut ChaCha8Rng,
) -> Result<ClusterRun> {
    let mut run = ClusterRun::empty(graph.n_levels());
    for phase in &schedule.phases {
        match phase {
            Phase::Prepare { nodes, edges, .. } => {
                let fresh: Vec<Node> = nodes
                    .iter()
                    .map(|&id| {
                        graph
                            .node(id)
                            .cloned()
                            .ok_or(Error::UnknownId { kind: "node", id })
                    })
                    .collect::<Result<_>>()?;
                run.adjoin(fresh, edges)?;
            }
            Phase::Measure { nodes, .. } => {
                for &id in nodes {
                    let pick = forced.and_then(|f| f.get(&id).copied());
                    run.measure_node(id, pick, rng)?;
                }
            }
        }
    }
    Ok(run)
}

/// Uniformly random canonical circuit: every slot fills every qubit with
/// either an `HZ_α` (random angle) or one side of an `HH_CZ` pairing.
///
/// Entangling gates are placed only at even slot indices (odd layers), the
/// same shape [`canonicalize`] produces, so the result also satisfies the
/// dangling-node restriction.
pub fn random_canonical_circuit(n_qubits: usize, n_slots: usize, rng: &mut ChaCha8Rng) -> Circuit {
    let mut c = Circuit::new(n_qubits);
    for t in 0..n_slots {
        let mut free: Vec<usize> = (0..n_qubits).collect();
        while let Some(q) = free.pop() {
            let pair =
                n_qubits >= 2 && !free.is_empty() && t % 2 == 0 && rng.random::<f64>() < 0.35;
            if pair {
                let idx = rng.random_range(0..free.len());
                let partner = free.remove(idx);
                c.push(t, Gate::HhCz { a: q, b: partner }).expect("fresh slot");
            } else {
                let alpha = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                c.push(t, Gate::Hz { q, alpha }).expect("fresh slot");
            }
        }
    }
    c
}

/// Validity report for a schedule against its graph.
#[derive(Debug, Clone, Default)]
pub struct ScheduleAudit {
    pub issues: Vec<String>,
    /// Largest number of distinct layers simultaneously holding live
    /// unmeasured (non-output) nodes.
    pub max_live_layers: usize,
}

/// Structural audit: every node prepared once, every edge applied once
/// after both endpoints exist, every measured node consumed exactly once
/// after its edges, outputs never measured.
pub fn audit_schedule(g: &ClusterGraph, s: &Schedule) -> ScheduleAudit {
    let mut audit = ScheduleAudit::default();
    let mut prepared: BTreeMap<NodeId, bool> = BTreeMap::new();
    let mut measured: BTreeMap<NodeId, bool> = BTreeMap::new();
    let mut edges_applied: Vec<(NodeId, NodeId)> = Vec::new();
    for phase in &s.phases {
        match phase {
            Phase::Prepare { nodes, edges, .. } => {
                for &n in nodes {
                    if prepared.insert(n, true).is_some() {
                        audit.issues.push(format!("node {n} prepared twice"));
                    }
                }
                for &(a, b) in edges {
                    let key = (a.min(b), a.max(b));
                    if edges_applied.contains(&key) {
                        audit.issues.push(format!("edge {key:?} applied twice"));
                    }
                    if !prepared.contains_key(&a) || !prepared.contains_key(&b) {
                        audit.issues.push(format!("edge {key:?} before endpoints prepared"));
                    }
                    edges_applied.push(key);
                }
            }
            Phase::Measure { nodes, .. } => {
                for &n in nodes {
                    if !prepared.contains_key(&n) {
                        audit.issues.push(format!("node {n} measured before preparation"));
                    }
                    if measured.insert(n, true).is_some() {
                        audit.issues.push(format!("node {n} measured twice"));
                    }
                    if g.node(n).map(|x| x.is_output()).unwrap_or(false) {
                        audit.issues.push(format!("output node {n} measured"));
                    }
                    for nb in g.neighbors(n) {
                        let key = (n.min(nb), n.max(nb));
                        if !edges_applied.contains(&key) {
                            audit.issues.push(format!(
                                "node {n} measured before incident edge {key:?}"
                            ));
                        }
                    }
                }
            }
        }
        let live_layers: std::collections::BTreeSet<usize> = g
            .nodes()
            .iter()
            .filter(|n| {
                !n.is_output()
                    && prepared.contains_key(&n.id)
                    && !measured.contains_key(&n.id)
            })
            .map(|n| n.layer)
            .collect();
        audit.max_live_layers = audit.max_live_layers.max(live_layers.len());
    }
    for n in g.nodes() {
        if !prepared.contains_key(&n.id) {
            audit.issues.push(format!("node {} never prepared", n.id));
        }
        if !n.is_output() && !measured.contains_key(&n.id) {
            audit.issues.push(format!("node {} never measured", n.id));
        }
    }
    for &(a, b) in g.edges() {
        if !edges_applied.contains(&(a.min(b), a.max(b))) {
            audit.issues.push(format!("edge ({a},{b}) never applied"));
        }
    }
    audit
}
