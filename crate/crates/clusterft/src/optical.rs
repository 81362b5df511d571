//! Dangling-node cluster growth with non-deterministic entangling gates,
//! postselected-gate analysis, and the optical threshold formulas.
//!
//! The growth model: a microcluster is a base node with `k` dangling
//! nodes. Extending the cluster means attempting non-deterministic CZ
//! gates between the cluster's dangling nodes and a fresh microcluster's
//! base. Each attempt succeeds with probability `1 − p_f`; a failure
//! performs computational-basis measurements of both qubits, which (by the
//! Z-deletion property) merely removes them from the cluster. Trying the
//! first `k−1` dangling nodes in sequence succeeds with probability
//! `1 − p_f^{k−1}`; a two-level extension needs both levels to succeed,
//! `(1 − p_f^{k−1})² = 1 − 2p_f^{k−1} + p_f^{2k−2}`.
//!
//! [`monte_carlo_growth`] estimates these probabilities by simulating the
//! attempt sequences; at `k ≤ 3` the protocol is additionally replayed on
//! full state vectors over every forced branch, checking that the
//! post-adjoin state equals `prepare()` of the intended graph exactly.
//!
//! [`postselect_analyze`] decides whether a unitary `U` on `A ⊗ B` has the
//! postselected-gate form `U|ψ⟩|β⟩ = √p·V|ψ⟩|β'⟩ + √(1−p)|ψ'⟩|β''⟩`, and
//! [`companion_w`] realizes the accompanying approximation lemma: with `W`
//! any unitary taking `β` to `β'`, the restriction of `U − V⊗W` to inputs
//! `|ψ⟩|β⟩` has operator norm exactly `√(2(1−√p))`.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::{ClusterGraph, ClusterRun, Node, NodeId};
use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigen, identity, op_norm, polar_unitary, svd, CMatrix, CVector,
};

/// Parameters of the microcluster growth protocol.
#[derive(Debug, Clone, Copy)]
pub struct GrowthParams {
    /// Dangling nodes per microcluster (≥ 2).
    pub k: usize,
    /// Per-attempt CZ failure probability.
    pub p_f: f64,
    /// Monte-Carlo trials.
    pub trials: usize,
    pub seed: u64,
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::OutOfRange(format!("k = {} < 2", self.k)));
        }
        if !(0.0..=1.0).contains(&self.p_f) {
            return Err(Error::OutOfRange(format!("p_f = {} outside [0,1]", self.p_f)));
        }
        if self.trials == 0 {
            return Err(Error::OutOfRange("trials must be positive".into()));
        }
        Ok(())
    }
}

/// Constants of the threshold formula. `eta_th` is the circuit-model
/// threshold, treated as an opaque input; `c1`, `c2` default to 50 and 5,
/// inside their stated order-of-magnitude ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub eta_th: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ThresholdParams {
    pub fn new(eta_th: f64) -> Self {
        Self { eta_th, c1: 50.0, c2: 5.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta_th <= 0.0 || self.c1 <= 0.0 || self.c2 <= 0.0 {
            return Err(Error::OutOfRange("threshold constants must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one non-deterministic CZ attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CzOutcome {
    Success,
    /// The gate failed: both qubits were measured with these outcomes.
    Failure { m_a: u8, m_b: u8 },
}

/// Attempt a non-deterministic CZ between two live nodes of a run.
///
/// With probability `1 − p_f` the CZ is applied (and the edge recorded);
/// otherwise both nodes are measured in the computational basis with
/// Z-corrections on their neighbors, removing them from the cluster.
pub fn nondet_cz(
    run: &mut ClusterRun,
    a: NodeId,
    b: NodeId,
    p_f: f64,
    forced: Option<CzOutcome>,
    rng: &mut ChaCha8Rng,
) -> Result<CzOutcome> {
    if !(0.0..=1.0).contains(&p_f) {
        return Err(Error::OutOfRange(format!("p_f = {p_f} outside [0,1]")));
    }
    for node in [a, b] {
        if run.slot(node).is_none() {
            return Err(Error::UnknownId { kind: "node", id: node });
        }
    }
    let fail = match forced {
        Some(CzOutcome::Success) => false,
        Some(CzOutcome::Failure { .. }) => true,
        None => rng.random::<f64>() < p_f,
    };
    if !fail {
        run.apply_cz(a, b)?;
        return Ok(CzOutcome::Success);
    }
    let (fa, fb) = match forced {
        Some(CzOutcome::Failure { m_a, m_b }) => (Some(m_a), Some(m_b)),
        _ => (None, None),
    };
    let m_a = run.z_delete(a, fa, rng)?;
    let m_b = run.z_delete(b, fb, rng)?;
    Ok(CzOutcome::Failure { m_a, m_b })
}

/// Closed-form probability of successfully adjoining a microcluster:
/// `1 − p_f^{k−1}` for one level, `1 − 2p_f^{k−1} + p_f^{2k−2}` for two.
pub fn adjoin_success_prob(k: usize, p_f: f64, levels: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::OutOfRange(format!("k = {k} < 2")));
    }
    if !(0.0..=1.0).contains(&p_f) {
        return Err(Error::OutOfRange(format!("p_f = {p_f} outside [0,1]")));
    }
    let q = p_f.powi(k as i32 - 1);
    match levels {
        1 => Ok(1.0 - q),
        2 => Ok(1.0 - 2.0 * q + q * q),
        _ => Err(Error::OutOfRange(format!("levels = {levels}, expected 1 or 2"))),
    }
}

/// Monte-Carlo estimate of the adjoin success probability.
#[derive(Debug, Clone, Copy)]
pub struct GrowthEstimate {
    pub p_hat: f64,
    /// Normal-approximation 95% confidence interval.
    pub ci95: (f64, f64),
    pub defect_rate: f64,
    pub closed_form: f64,
    /// Whether the state-vector cross-check ran (k ≤ 3) and passed.
    pub state_checked: bool,
}

/// Simulate the adjoin protocol: per level, sequential attempts on
/// dangling nodes `1..k−1`, stopping at the first success; a two-level
/// extension succeeds only if both levels do. At `k ≤ 3` the protocol is
/// also replayed on state vectors over every forced branch and compared
/// against `prepare()` of the target graphs.
pub fn monte_carlo_growth(params: &GrowthParams, levels: usize) -> Result<GrowthEstimate> {
    params.validate()?;
    if !(1..=2).contains(&levels) {
        return Err(Error::OutOfRange(format!("levels = {levels}, expected 1 or 2")));
    }
    let mut rng = crate::linalg::rng_from_seed(params.seed);
    let mut successes = 0usize;
    for _ in 0..params.trials {
        let mut all = true;
        for _ in 0..levels {
            let mut level_ok = false;
            for _ in 0..(params.k - 1) {
                if rng.random::<f64>() >= params.p_f {
                    level_ok = true;
                    break;
                }
            }
            all &= level_ok;
        }
        successes += usize::from(all);
    }
    let n = params.trials as f64;
    let p_hat = successes as f64 / n;
    let half = 1.96 * (p_hat * (1.0 - p_hat) / n).sqrt();
    let closed_form = adjoin_success_prob(params.k, params.p_f, levels)?;
    let state_checked = if params.k <= 3 {
        adjoin_state_check(params.k, levels)?;
        true
    } else {
        false
    };
    Ok(GrowthEstimate {
        p_hat,
        ci95: ((p_hat - half).max(0.0), (p_hat + half).min(1.0)),
        defect_rate: 1.0 - p_hat,
        closed_form,
        state_checked,
    })
}

/// Node-id scheme for the growth state check: attempt `i` (1-based) works
/// with a fresh microcluster whose ids start at `100·i` per level block.
fn micro_ids(attempt: usize, level: usize, k: usize) -> (NodeId, Vec<NodeId>) {
    let base = 1000 * attempt + 100 * level;
    (base, (1..=k).map(|j| base + j).collect())
}

fn star_nodes(base_id: NodeId, dangling: &[NodeId], level: usize, base_layer: usize) -> Vec<Node> {
    let mut nodes = vec![Node::measured(base_id, level, base_layer, 0.0, false)];
    for &d in dangling {
        nodes.push(Node::measured(d, level, base_layer + 1, 0.0, false));
    }
    nodes
}

fn star_edges(base_id: NodeId, dangling: &[NodeId]) -> Vec<(NodeId, NodeId)> {
    dangling.iter().map(|&d| (base_id, d)).collect()
}

/// Replay the adjoin protocol on state vectors for every forced branch and
/// verify that each final state equals `prepare()` of the intended graph.
///
/// The single-level protocol is checked over all success-position and
/// failure-outcome branches. The two-level protocol shares one two-level
/// microcluster per attempt round ("declare failure overall" when either
/// side fails), which exercises the mixed-outcome cleanup path.
pub fn adjoin_state_check(k: usize, levels: usize) -> Result<()> {
    if !(2..=3).contains(&k) {
        return Err(Error::OutOfRange(format!("state check supports k in 2..=3, got {k}")));
    }
    // Branch plans: which attempt succeeds (0-based), or None = all fail.
    let mut plans: Vec<Option<usize>> = (0..k - 1).map(Some).collect();
    plans.push(None);
    // Failure measurement patterns to force (both bits per failed CZ).
    let patterns: &[(u8, u8)] = &[(0, 0), (1, 0), (0, 1), (1, 1)];

    match levels {
        1 => {
            for &plan in &plans {
                for &(fa, fb) in patterns {
                    single_level_branch(k, plan, fa, fb)?;
                }
            }
            Ok(())
        }
        2 => {
            // Success at round i on both levels, or declared failure with
            // mixed per-level outcomes in the final round.
            for &plan in &plans {
                two_level_branch(k, plan, (1, 0))?;
                two_level_branch(k, plan, (0, 1))?;
            }
            Ok(())
        }
        _ => Err(Error::OutOfRange(format!("levels = {levels}"))),
    }
}

/// One forced branch of the single-level protocol.
fn single_level_branch(k: usize, success_at: Option<usize>, fa: u8, fb: u8) -> Result<()> {
    let mut rng = crate::linalg::rng_from_seed(0);
    let (b0, d0) = micro_ids(0, 0, k);
    let mut run = ClusterRun::empty(1);
    run.adjoin(star_nodes(b0, &d0, 0, 1), &star_edges(b0, &d0))?;

    let mut linked: Option<(NodeId, NodeId, Vec<NodeId>)> = None;
    for attempt in 0..(k - 1) {
        let (nb, nd) = micro_ids(attempt + 1, 0, k);
        run.adjoin(star_nodes(nb, &nd, 0, 3), &star_edges(nb, &nd))?;
        let forced = if success_at == Some(attempt) {
            CzOutcome::Success
        } else {
            CzOutcome::Failure { m_a: fa, m_b: fb }
        };
        let out = nondet_cz(&mut run, d0[attempt], nb, 1.0, Some(forced), &mut rng)?;
        match out {
            CzOutcome::Success => {
                linked = Some((d0[attempt], nb, nd));
                break;
            }
            CzOutcome::Failure { .. } => {
                // The fresh microcluster lost its base; discard its now
                // disconnected dangling nodes.
                for d in nd {
                    run.z_delete(d, Some(0), &mut rng)?;
                }
            }
        }
    }

    let expected = match linked {
        Some((link, nb, ref nd)) => {
            // Delete the unused original dangling nodes.
            for &d in &d0 {
                if d != link && run.slot(d).is_some() {
                    run.z_delete(d, Some(0), &mut rng)?;
                }
            }
            // Target: b0 — link — nb with nd dangling off nb.
            let mut nodes = vec![
                Node::measured(b0, 0, 1, 0.0, false),
                Node::measured(link, 0, 2, 0.0, false),
                Node::measured(nb, 0, 3, 0.0, false),
            ];
            let mut edges = vec![(b0, link), (link, nb)];
            for &d in nd {
                nodes.push(Node::measured(d, 0, 4, 0.0, false));
                edges.push((nb, d));
            }
            ClusterGraph::new(nodes, edges)?
        }
        None => {
            // All attempts failed: only the last dangling node survives.
            ClusterGraph::new(
                vec![
                    Node::measured(b0, 0, 1, 0.0, false),
                    Node::measured(d0[k - 1], 0, 2, 0.0, false),
                ],
                vec![(b0, d0[k - 1])],
            )?
        }
    };

    compare_with_prepare(&run, &expected)
}

/// One forced branch of the two-level protocol. `mixed` selects which
/// level's CZ succeeds inside otherwise-failed rounds, exercising the
/// cleanup of half-attached microclusters.
fn two_level_branch(k: usize, success_at: Option<usize>, mixed: (u8, u8)) -> Result<()> {
    let mut rng = crate::linalg::rng_from_seed(0);
    let mut run = ClusterRun::empty(2);
    let (b0a, d0a) = micro_ids(0, 0, k);
    let (b0b, d0b) = micro_ids(0, 1, k);
    run.adjoin(star_nodes(b0a, &d0a, 0, 1), &star_edges(b0a, &d0a))?;
    run.adjoin(star_nodes(b0b, &d0b, 1, 1), &star_edges(b0b, &d0b))?;
    run.apply_cz(b0a, b0b)?; // vertical connection of the seed

    type Link = (NodeId, NodeId, Vec<NodeId>);
    let mut linked: Option<(usize, Link, Link)> = None;
    for attempt in 0..(k - 1) {
        let (nba, nda) = micro_ids(attempt + 1, 0, k);
        let (nbb, ndb) = micro_ids(attempt + 1, 1, k);
        run.adjoin(star_nodes(nba, &nda, 0, 3), &star_edges(nba, &nda))?;
        run.adjoin(star_nodes(nbb, &ndb, 1, 3), &star_edges(nbb, &ndb))?;
        run.apply_cz(nba, nbb)?; // microcluster's own vertical edge

        let this_succeeds = success_at == Some(attempt);
        let (ok_a, ok_b) = if this_succeeds { (true, true) } else { (mixed.0 == 1, mixed.1 == 1) };
        // In declared-failure rounds at most one side may succeed.
        let forced_a = if ok_a {
            CzOutcome::Success
        } else {
            CzOutcome::Failure { m_a: 0, m_b: 1 }
        };
        let forced_b = if ok_b {
            CzOutcome::Success
        } else {
            CzOutcome::Failure { m_a: 1, m_b: 0 }
        };
        let ra = nondet_cz(&mut run, d0a[attempt], nba, 1.0, Some(forced_a), &mut rng)?;
        let rb = nondet_cz(&mut run, d0b[attempt], nbb, 1.0, Some(forced_b), &mut rng)?;
        let got_both =
            matches!(ra, CzOutcome::Success) && matches!(rb, CzOutcome::Success);
        if got_both {
            linked = Some((
                attempt,
                (d0a[attempt], nba, nda.clone()),
                (d0b[attempt], nbb, ndb.clone()),
            ));
            break;
        }
        // Declared failure: tear down whatever survived of this round.
        for node in [d0a[attempt], d0b[attempt], nba, nbb]
            .into_iter()
            .chain(nda.iter().copied())
            .chain(ndb.iter().copied())
        {
            if run.slot(node).is_some() {
                run.z_delete(node, Some(0), &mut rng)?;
            }
        }
    }

    let expected = match linked {
        Some((_, (la, nba, nda), (lb, nbb, ndb))) => {
            for &d in d0a.iter().chain(d0b.iter()) {
                if d != la && d != lb && run.slot(d).is_some() {
                    run.z_delete(d, Some(0), &mut rng)?;
                }
            }
            let mut nodes = vec![
                Node::measured(b0a, 0, 1, 0.0, false),
                Node::measured(b0b, 1, 1, 0.0, false),
                Node::measured(la, 0, 2, 0.0, false),
                Node::measured(lb, 1, 2, 0.0, false),
                Node::measured(nba, 0, 3, 0.0, false),
                Node::measured(nbb, 1, 3, 0.0, false),
            ];
            let mut edges = vec![
                (b0a, b0b),
                (nba, nbb),
                (b0a, la),
                (la, nba),
                (b0b, lb),
                (lb, nbb),
            ];
            for &d in &nda {
                nodes.push(Node::measured(d, 0, 4, 0.0, false));
                edges.push((nba, d));
            }
            for &d in &ndb {
                nodes.push(Node::measured(d, 1, 4, 0.0, false));
                edges.push((nbb, d));
            }
            ClusterGraph::new(nodes, edges)?
        }
        None => ClusterGraph::new(
            vec![
                Node::measured(b0a, 0, 1, 0.0, false),
                Node::measured(b0b, 1, 1, 0.0, false),
                Node::measured(d0a[k - 1], 0, 2, 0.0, false),
                Node::measured(d0b[k - 1], 1, 2, 0.0, false),
            ],
            vec![(b0a, b0b), (b0a, d0a[k - 1]), (b0b, d0b[k - 1])],
        )?,
    };

    compare_with_prepare(&run, &expected)
}

/// Assert a run's surviving register matches `prepare(expected)` exactly,
/// aligning by node id.
fn compare_with_prepare(run: &ClusterRun, expected: &ClusterGraph) -> Result<()> {
    let live = run.graph();
    let mut live_ids: Vec<NodeId> = live.nodes().iter().map(|n| n.id).collect();
    let mut want_ids: Vec<NodeId> = expected.nodes().iter().map(|n| n.id).collect();
    live_ids.sort_unstable();
    want_ids.sort_unstable();
    if live_ids != want_ids {
        return Err(Error::InvalidConfig(format!(
            "surviving nodes {live_ids:?} differ from target {want_ids:?}"
        )));
    }
    let mut live_edges: Vec<(NodeId, NodeId)> = live.edges().to_vec();
    let mut want_edges: Vec<(NodeId, NodeId)> = expected.edges().to_vec();
    live_edges.sort_unstable();
    want_edges.sort_unstable();
    if live_edges != want_edges {
        return Err(Error::InvalidConfig(format!(
            "surviving edges {live_edges:?} differ from target {want_edges:?}"
        )));
    }
    // Same topology: compare amplitudes after aligning register orders.
    let perm: Vec<usize> = expected
        .nodes()
        .iter()
        .map(|n| live.qubit_of(n.id).expect("ids match"))
        .collect();
    let state = run.state().permuted(&perm)?;
    let target = crate::cluster::prepare(expected)?;
    let diff = state.max_amp_diff(&target);
    if diff > 1e-10 {
        return Err(Error::InvalidConfig(format!("state deviates from prepare() by {diff:.3e}")));
    }
    Ok(())
}

/// Decomposition of a unitary postselected gate.
#[derive(Debug, Clone)]
pub struct PostselectAnalysis {
    /// Success probability.
    pub p: f64,
    /// The implemented unitary on the data register (up to global phase).
    pub v: CMatrix,
    pub beta_prime: CVector,
    pub beta_doubleprime: CVector,
    /// Operator-norm deviation of `U·(I⊗|β⟩)` from the postselected form.
    pub residual: f64,
}

/// `T = U·(I_A ⊗ |β⟩)` with `A` indexing high: the isometry describing
/// `U` on inputs with the ancilla pinned to `β`.
fn pinned_isometry(u: &CMatrix, beta: &CVector) -> CMatrix {
    let d_b = beta.len();
    let d_a = u.nrows() / d_b;
    let mut t = CMatrix::zeros(u.nrows(), d_a);
    for a_in in 0..d_a {
        for row in 0..u.nrows() {
            let mut acc = Complex64::ZERO;
            for b in 0..d_b {
                acc += u[(row, a_in * d_b + b)] * beta[b];
            }
            t[(row, a_in)] = acc;
        }
    }
    t
}

/// `A_v = (I_A ⊗ ⟨v|)·T`: the data-register operator conditioned on the
/// ancilla landing in `v`.
fn conditioned_operator(t: &CMatrix, v: &CVector) -> CMatrix {
    let d_b = v.len();
    let d_a = t.ncols();
    let mut a = CMatrix::zeros(d_a, d_a);
    for a_out in 0..d_a {
        for a_in in 0..d_a {
            let mut acc = Complex64::ZERO;
            for b in 0..d_b {
                acc += v[b].conj() * t[(a_out * d_b + b, a_in)];
            }
            a[(a_out, a_in)] = acc;
        }
    }
    a
}

/// How far `A` is from a scalar multiple of a unitary: `σ_max − σ_min`.
fn nonunitarity(a: &CMatrix) -> f64 {
    let f = svd(a).expect("finite");
    f.sigma_max() - f.sigma_min()
}

/// Decide whether `U` (on `A ⊗ B`, `A` high) is a unitary postselected
/// gate for the ancilla input `beta`, and extract `(p, V, β', β'')`.
///
/// The ancilla-side reduced operator of `U·(I⊗|β⟩)` must have rank ≤ 2;
/// within its top-2 eigenspace, the success direction `β'` is the one
/// whose conditioned data operator is proportional to a unitary. When a
/// gate has *both* branches of that kind (unitarity of `U` forces the
/// failure operator to be an isometry, so the decomposition is symmetric),
/// the convention is: `β'` is the candidate with the larger overlap
/// `|⟨β|·⟩|` with the ancilla input, ties broken toward the larger
/// success probability. The returned residual is `‖U·(I⊗|β⟩) − model‖`
/// for the reconstructed model; values below 1e-9 mean the form holds.
pub fn postselect_analyze(u: &CMatrix, beta: &CVector) -> Result<PostselectAnalysis> {
    let d_b = beta.len();
    if d_b == 0 || !u.nrows().is_multiple_of(d_b) || u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "operator {}×{} does not factor over an ancilla of dim {d_b}",
            u.nrows(),
            u.ncols()
        )));
    }
    crate::linalg::check_unitary(u, 1e-8)?;
    let norm = beta.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::OutOfRange(format!("ancilla state norm {norm}")));
    }
    let d_a = u.nrows() / d_b;
    let t = pinned_isometry(u, beta);

    // Ancilla-side reduced operator ρ_B = tr_A(T·T†)/d_A.
    let mut rho = CMatrix::zeros(d_b, d_b);
    for a_out in 0..d_a {
        for b1 in 0..d_b {
            for b2 in 0..d_b {
                for a_in in 0..d_a {
                    rho[(b1, b2)] +=
                        t[(a_out * d_b + b1, a_in)] * t[(a_out * d_b + b2, a_in)].conj();
                }
            }
        }
    }
    rho /= Complex64::new(d_a as f64, 0.0);
    let (evals, evecs) = hermitian_eigen(&rho)?;
    let mut order: Vec<usize> = (0..evals.len()).collect();
    order.sort_by(|&i, &j| evals[j].partial_cmp(&evals[i]).unwrap());
    let e1: CVector = evecs.column(order[0]).into();
    let lambda2 = if order.len() > 1 { evals[order[1]] } else { 0.0 };

    // Success direction search within the top-2 eigenspace.
    let (beta_prime, beta_doubleprime) = if lambda2 < 1e-12 {
        // Rank one: the success branch carries everything.
        let bp = e1.clone();
        (bp, orthonormal_complement_vector(&e1))
    } else {
        let e2: CVector = evecs.column(order[1]).into();
        // Two-parameter search for the combination with unitary action.
        let eval = |tphi: &[f64]| -> f64 {
            let (tt, phi) = (tphi[0], tphi[1]);
            let v = &e1 * Complex64::new(tt.cos(), 0.0)
                + &e2 * (Complex64::new(0.0, phi).exp() * tt.sin());
            nonunitarity(&conditioned_operator(&t, &v))
        };
        let mut best = (0.0f64, 0.0f64, f64::INFINITY);
        for i in 0..48 {
            for j in 0..48 {
                let tt = std::f64::consts::PI * i as f64 / 48.0;
                let phi = 2.0 * std::f64::consts::PI * j as f64 / 48.0;
                let val = eval(&[tt, phi]);
                if val < best.2 {
                    best = (tt, phi, val);
                }
            }
        }
        // Local refinement: restarted Nelder–Mead on the two parameters.
        let (mut tt, mut phi, mut best_val) = best;
        for radius in [0.1, 1e-2, 1e-3, 1e-5, 1e-7, 1e-9] {
            let mut f = |x: &[f64]| eval(x);
            let (x, val) =
                crate::error_strength::nelder_mead(&mut f, &[tt, phi], radius, 400, 1e-16);
            if val < best_val {
                tt = x[0];
                phi = x[1];
                best_val = val;
            }
        }
        let cand = &e1 * Complex64::new(tt.cos(), 0.0)
            + &e2 * (Complex64::new(0.0, phi).exp() * tt.sin());
        let comp = &e1 * Complex64::new(-tt.sin(), 0.0)
            + &e2 * (Complex64::new(0.0, phi).exp() * tt.cos());
        // Both directions may qualify (the failure operator is forced to
        // be an isometry too); disambiguate by herald overlap, then p.
        let nu_cand = nonunitarity(&conditioned_operator(&t, &cand));
        let nu_comp = nonunitarity(&conditioned_operator(&t, &comp));
        let pick_comp = if nu_comp < 1e-7 && nu_cand < 1e-7 {
            let ov_cand = (beta.adjoint() * &cand)[(0, 0)].norm();
            let ov_comp = (beta.adjoint() * &comp)[(0, 0)].norm();
            if (ov_cand - ov_comp).abs() > 1e-9 {
                ov_comp > ov_cand
            } else {
                let weight = |v: &CVector| {
                    let a = conditioned_operator(&t, v);
                    (a.adjoint() * &a).trace().re
                };
                weight(&comp) > weight(&cand)
            }
        } else {
            nu_comp < nu_cand
        };
        if pick_comp {
            (comp, cand)
        } else {
            (cand, comp)
        }
    };

    let a_success = conditioned_operator(&t, &beta_prime);
    let p = (a_success.adjoint() * &a_success).trace().re / d_a as f64;
    let p = p.clamp(0.0, 1.0);
    let v = polar_unitary(&a_success)?;
    let a_fail = conditioned_operator(&t, &beta_doubleprime);
    let r = if (1.0 - p).abs() > 1e-12 { polar_unitary(&a_fail)? } else { identity(d_a) };

    // Reconstruct the model and measure the deviation. The square root
    // amplifies rounding near p = 1, so a vanishing failure weight is
    // clamped to exactly zero.
    let mut model = CMatrix::zeros(d_a * d_b, d_a);
    let sp = Complex64::new(p.sqrt(), 0.0);
    let fail_weight = (1.0 - p).max(0.0);
    let sq = Complex64::new(if fail_weight < 1e-12 { 0.0 } else { fail_weight.sqrt() }, 0.0);
    for a_out in 0..d_a {
        for b in 0..d_b {
            for a_in in 0..d_a {
                model[(a_out * d_b + b, a_in)] = sp * v[(a_out, a_in)] * beta_prime[b]
                    + sq * r[(a_out, a_in)] * beta_doubleprime[b];
            }
        }
    }
    let residual = op_norm(&(&t - &model))?;
    Ok(PostselectAnalysis { p, v, beta_prime, beta_doubleprime, residual })
}

fn orthonormal_complement_vector(v: &CVector) -> CVector {
    let n = v.len();
    for k in 0..n {
        let mut c = CVector::zeros(n);
        c[k] = Complex64::ONE;
        let overlap = v.adjoint() * &c;
        c -= v * overlap[(0, 0)];
        let nn = c.norm();
        if nn > 0.5 {
            return c / Complex64::new(nn, 0.0);
        }
    }
    // v spans everything only in dimension 1; no complement exists.
    CVector::zeros(n)
}

/// Build a unitary taking `from` to `to` (completed arbitrarily on the
/// orthocomplement).
pub fn unitary_mapping(from: &CVector, to: &CVector) -> Result<CMatrix> {
    let n = from.len();
    if to.len() != n {
        return Err(Error::DimensionMismatch("vector lengths differ".into()));
    }
    let complete = |v: &CVector| -> CMatrix {
        let mut cols: Vec<CVector> = vec![v.clone()];
        for k in 0..n {
            if cols.len() == n {
                break;
            }
            let mut c = CVector::zeros(n);
            c[k] = Complex64::ONE;
            for existing in &cols {
                let overlap = existing.adjoint() * &c;
                c -= existing * overlap[(0, 0)];
            }
            let nn = c.norm();
            if nn > 1e-6 {
                cols.push(c / Complex64::new(nn, 0.0));
            }
        }
        CMatrix::from_columns(&cols.iter().map(|c| c.column(0)).collect::<Vec<_>>())
    };
    let bf = complete(from);
    let bt = complete(to);
    Ok(bt * bf.adjoint())
}

/// The unitary-approximation lemma, realized: a companion `W` on the
/// ancilla with `W·β = β'`, and the restricted distance
/// `‖(U − V⊗W)·(I⊗|β⟩)‖`, which equals `√(2(1−√p))` exactly.
pub fn companion_w(
    u: &CMatrix,
    analysis: &PostselectAnalysis,
    beta: &CVector,
) -> Result<(CMatrix, f64)> {
    if analysis.residual >= 1e-9 {
        return Err(Error::PreconditionViolated {
            context: "postselected form holds",
            residual: analysis.residual,
        });
    }
    let w = unitary_mapping(beta, &analysis.beta_prime)?;
    let t = pinned_isometry(u, beta);
    // (V ⊗ W)(I⊗β) = V ⊗ (Wβ) = V ⊗ β'.
    let d_a = analysis.v.nrows();
    let d_b = beta.len();
    let mut model = CMatrix::zeros(d_a * d_b, d_a);
    for a_out in 0..d_a {
        for b in 0..d_b {
            for a_in in 0..d_a {
                model[(a_out * d_b + b, a_in)] =
                    analysis.v[(a_out, a_in)] * analysis.beta_prime[b];
            }
        }
    }
    let achieved = op_norm(&(&t - &model))?;
    Ok((w, achieved))
}

/// Construct a unitary postselected gate from its defining branches:
/// `U(|ψ⟩|β⟩) = √p·V|ψ⟩|β'⟩ + √(1−p)·R|ψ⟩|β''⟩`, completed unitarily on
/// the remaining ancilla inputs. Useful as a test instance factory.
pub fn embed_postselected(
    v: &CMatrix,
    r: &CMatrix,
    beta: &CVector,
    beta_prime: &CVector,
    beta_doubleprime: &CVector,
    p: f64,
) -> Result<CMatrix> {
    let d_a = v.nrows();
    let d_b = beta.len();
    if r.nrows() != d_a {
        return Err(Error::DimensionMismatch("V and R sizes differ".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange(format!("p = {p}")));
    }
    let dim = d_a * d_b;
    let sp = Complex64::new(p.sqrt(), 0.0);
    let sq = Complex64::new((1.0 - p).sqrt(), 0.0);
    // Columns for inputs |a⟩|β⟩; remaining inputs completed orthonormally.
    let mut cols: Vec<CVector> = Vec::with_capacity(dim);
    for a_in in 0..d_a {
        let mut col = CVector::zeros(dim);
        for a_out in 0..d_a {
            for b in 0..d_b {
                col[a_out * d_b + b] = sp * v[(a_out, a_in)] * beta_prime[b]
                    + sq * r[(a_out, a_in)] * beta_doubleprime[b];
            }
        }
        cols.push(col);
    }
    // Gram-Schmidt completion over the standard basis.
    for k in 0..dim {
        if cols.len() == dim {
            break;
        }
        let mut c = CVector::zeros(dim);
        c[k] = Complex64::ONE;
        for existing in &cols {
            let overlap = existing.adjoint() * &c;
            c -= existing * overlap[(0, 0)];
        }
        let nn = c.norm();
        if nn > 1e-8 {
            cols.push(c / Complex64::new(nn, 0.0));
        }
    }
    if cols.len() != dim {
        return Err(Error::InvalidConfig("completion failed".into()));
    }
    // Columns built above are ordered: first the |a⟩|β⟩ inputs, then the
    // completion. Re-index so column (a·d_b + b) corresponds to |a⟩|b_k⟩
    // with b_0 = β: build an input-side basis change.
    let mut input_basis: Vec<CVector> = Vec::with_capacity(dim);
    for a_in in 0..d_a {
        let mut col = CVector::zeros(dim);
        for b in 0..d_b {
            col[a_in * d_b + b] = beta[b];
        }
        input_basis.push(col);
    }
    for k in 0..dim {
        if input_basis.len() == dim {
            break;
        }
        let mut c = CVector::zeros(dim);
        c[k] = Complex64::ONE;
        for existing in &input_basis {
            let overlap = existing.adjoint() * &c;
            c -= existing * overlap[(0, 0)];
        }
        let nn = c.norm();
        if nn > 1e-8 {
            input_basis.push(c / Complex64::new(nn, 0.0));
        }
    }
    let b_in =
        CMatrix::from_columns(&input_basis.iter().map(|c| c.column(0)).collect::<Vec<_>>());
    let out = CMatrix::from_columns(&cols.iter().map(|c| c.column(0)).collect::<Vec<_>>());
    // U maps b_in's columns to `out`'s columns: U = out · b_in†.
    Ok(out * b_in.adjoint())
}

/// Effective circuit-model noise of the dangling-node implementation:
/// `c₁k²η + c₂η + 2√(2(1−√p_s))` with `p_s` the two-level adjoin success.
pub fn effective_noise(eta: f64, k: usize, p_f: f64, tp: &ThresholdParams) -> Result<f64> {
    tp.validate()?;
    let p_s = adjoin_success_prob(k, p_f, 2)?;
    let gate_term = 2.0 * (2.0 * (1.0 - p_s.sqrt())).max(0.0).sqrt();
    Ok(tp.c1 * (k * k) as f64 * eta + tp.c2 * eta + gate_term)
}

/// The optical threshold at a given `k`:
/// `(η_th − 2√(2(1−√p_s))) / (c₁k² + c₂)`. May be ≤ 0 when `k` is too
/// small for the non-determinism term to fit under the circuit threshold.
pub fn ocs_threshold(tp: &ThresholdParams, p_f: f64, k: usize) -> Result<f64> {
    tp.validate()?;
    let p_s = adjoin_success_prob(k, p_f, 2)?;
    let gate_term = 2.0 * (2.0 * (1.0 - p_s.sqrt())).max(0.0).sqrt();
    Ok((tp.eta_th - gate_term) / (tp.c1 * (k * k) as f64 + tp.c2))
}

/// Scan `k ∈ [2, k_max]` and return the maximizer of [`ocs_threshold`].
pub fn optimize_k(tp: &ThresholdParams, p_f: f64, k_max: usize) -> Result<(usize, f64)> {
    if k_max < 2 {
        return Err(Error::OutOfRange("k_max must be at least 2".into()));
    }
    let mut best = (2usize, f64::NEG_INFINITY);
    for k in 2..=k_max {
        let v = ocs_threshold(tp, p_f, k)?;
        if v > best.1 {
            best = (k, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_unitary, haar_unitary_rng, rng_from_seed};
    use approx::assert_abs_diff_eq;

    fn two_node_run() -> ClusterRun {
        let mut run = ClusterRun::empty(1);
        run.adjoin(
            vec![Node::measured(0, 0, 1, 0.0, false), Node::measured(1, 0, 2, 0.0, false)],
            &[],
        )
        .unwrap();
        run
    }

    #[test]
    fn nondet_cz_deterministic_limits() {
        let mut rng = rng_from_seed(0);
        for _ in 0..20 {
            let mut run = two_node_run();
            assert!(matches!(
                nondet_cz(&mut run, 0, 1, 0.0, None, &mut rng).unwrap(),
                CzOutcome::Success
            ));
            let mut run = two_node_run();
            assert!(matches!(
                nondet_cz(&mut run, 0, 1, 1.0, None, &mut rng).unwrap(),
                CzOutcome::Failure { .. }
            ));
        }
    }

    #[test]
    fn nondet_cz_failure_fraction() {
        let mut rng = rng_from_seed(1);
        let trials = 10_000;
        let mut failures = 0;
        for _ in 0..trials {
            let mut run = two_node_run();
            if matches!(
                nondet_cz(&mut run, 0, 1, 0.25, None, &mut rng).unwrap(),
                CzOutcome::Failure { .. }
            ) {
                failures += 1;
            }
        }
        let frac = failures as f64 / trials as f64;
        assert!((frac - 0.25).abs() < 0.015, "failure fraction {frac}");
    }

    #[test]
    fn adjoin_probability_formulas() {
        assert_abs_diff_eq!(adjoin_success_prob(4, 0.0, 1).unwrap(), 1.0);
        assert_abs_diff_eq!(adjoin_success_prob(4, 0.0, 2).unwrap(), 1.0);
        assert_abs_diff_eq!(adjoin_success_prob(2, 0.3, 1).unwrap(), 0.7, epsilon = 1e-15);
        // The CZ_{4/9} gate fails with probability 5/9; k = 3, one level.
        let p = adjoin_success_prob(3, 5.0 / 9.0, 1).unwrap();
        assert_abs_diff_eq!(p, 56.0 / 81.0, epsilon = 1e-15);
        assert!(adjoin_success_prob(1, 0.5, 1).is_err());
        assert!(adjoin_success_prob(3, 1.5, 1).is_err());
        assert!(adjoin_success_prob(3, 0.5, 3).is_err());
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let params = GrowthParams { k: 4, p_f: 0.5, trials: 100_000, seed: 7 };
        let est = monte_carlo_growth(&params, 1).unwrap();
        assert_abs_diff_eq!(est.closed_form, 0.875, epsilon = 1e-12);
        assert!((est.p_hat - 0.875).abs() < 0.004, "p_hat {}", est.p_hat);

        let params = GrowthParams { k: 3, p_f: 5.0 / 9.0, trials: 100_000, seed: 8 };
        let est = monte_carlo_growth(&params, 2).unwrap();
        let expect = adjoin_success_prob(3, 5.0 / 9.0, 2).unwrap();
        assert_abs_diff_eq!(expect, 1.0 - 2.0 * (25.0 / 81.0) + (25.0f64 / 81.0).powi(2));
        assert!((est.p_hat - expect).abs() < 0.005, "p_hat {}", est.p_hat);
        assert!(est.state_checked);
    }

    #[test]
    fn monte_carlo_trivial_p_f_zero() {
        let params = GrowthParams { k: 2, p_f: 0.0, trials: 1000, seed: 9 };
        let est = monte_carlo_growth(&params, 1).unwrap();
        assert_eq!(est.p_hat, 1.0);
        assert_eq!(est.defect_rate, 0.0);
    }

    #[test]
    fn state_check_all_branches_k2_k3() {
        for k in [2, 3] {
            adjoin_state_check(k, 1).unwrap();
            adjoin_state_check(k, 2).unwrap();
        }
    }

    #[test]
    fn postselect_of_product_unitary() {
        let v0 = haar_unitary(4, 11);
        let w0 = haar_unitary(2, 12);
        let u = crate::linalg::kron(&v0, &w0);
        let beta = CVector::from_vec(vec![Complex64::ONE, Complex64::ZERO]);
        let analysis = postselect_analyze(&u, &beta).unwrap();
        assert!(analysis.residual < 1e-12, "residual {}", analysis.residual);
        assert_abs_diff_eq!(analysis.p, 1.0, epsilon = 1e-9);
        // V recovered up to phase.
        let overlap = (analysis.v.adjoint() * &v0).trace().norm() / 4.0;
        assert!((overlap - 1.0).abs() < 1e-9);
    }

    #[test]
    fn postselect_recovers_constructed_p() {
        // Success heralded by the ancilla staying in β, failure by the
        // orthogonal outcome — the physically natural herald layout.
        let mut rng = rng_from_seed(13);
        let v = haar_unitary_rng(4, &mut rng);
        let r = haar_unitary_rng(4, &mut rng);
        let beta = CVector::from_vec(vec![Complex64::ONE, Complex64::ZERO]);
        let beta_prime = beta.clone();
        let beta_dp = CVector::from_vec(vec![Complex64::ZERO, Complex64::ONE]);
        let u = embed_postselected(&v, &r, &beta, &beta_prime, &beta_dp, 0.25).unwrap();
        assert!(crate::linalg::unitarity_deviation(&u).unwrap() < 1e-10);
        let analysis = postselect_analyze(&u, &beta).unwrap();
        assert!(analysis.residual < 1e-9, "residual {}", analysis.residual);
        assert!((analysis.p - 0.25).abs() < 1e-9, "p {}", analysis.p);
    }

    #[test]
    fn random_unitary_is_not_postselected() {
        let mut hits = 0;
        for seed in 0..20u64 {
            let u = haar_unitary(8, 100 + seed);
            let beta = CVector::from_vec(vec![Complex64::ONE, Complex64::ZERO]);
            let analysis = postselect_analyze(&u, &beta).unwrap();
            if analysis.residual > 1e-6 {
                hits += 1;
            }
        }
        assert_eq!(hits, 20, "generic unitaries must fail the form");
    }

    #[test]
    fn companion_w_equality_across_p() {
        let mut rng = rng_from_seed(14);
        let beta = CVector::from_vec(vec![Complex64::ONE, Complex64::ZERO]);
        let beta_prime = beta.clone();
        let beta_dp = CVector::from_vec(vec![Complex64::ZERO, Complex64::ONE]);
        for &p in &[0.1, 0.25, 4.0 / 9.0, 0.9, 1.0] {
            let v = haar_unitary_rng(4, &mut rng);
            let r = haar_unitary_rng(4, &mut rng);
            let u = embed_postselected(&v, &r, &beta, &beta_prime, &beta_dp, p).unwrap();
            let analysis = postselect_analyze(&u, &beta).unwrap();
            assert!(analysis.residual < 1e-9, "p={p}: residual {}", analysis.residual);
            assert!((analysis.p - p).abs() < 1e-9, "p={p}: recovered {}", analysis.p);
            let (w, achieved) = companion_w(&u, &analysis, &beta).unwrap();
            // W really maps β to β'.
            let mapped = &w * &beta;
            let overlap = (analysis.beta_prime.adjoint() * &mapped)[(0, 0)].norm();
            assert!((overlap - 1.0).abs() < 1e-9);
            let expect = (2.0 * (1.0 - p.sqrt())).sqrt();
            assert!((achieved - expect).abs() < 1e-9, "p={p}: achieved {achieved} vs {expect}");
        }
    }

    #[test]
    fn companion_w_closed_form_values() {
        // p = 1 → 0; p = 1/4 → 1; p = 4/9 → √(2/3).
        assert_abs_diff_eq!((2.0 * (1.0 - 1.0f64.sqrt())).sqrt(), 0.0);
        assert_abs_diff_eq!((2.0 * (1.0 - 0.25f64.sqrt())).sqrt(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            (2.0 * (1.0 - (4.0f64 / 9.0).sqrt())).sqrt(),
            (2.0f64 / 3.0).sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn adjoin_gate_is_postselected_compositionally() {
        // Wrap the ideal two-layer adjoin unitary (CZ attachments of two
        // fresh |+⟩ layers) as the success branch of a postselected gate
        // with p_s from the growth formula, then re-extract everything.
        let mut rng = rng_from_seed(15);
        use crate::simulator::gates;
        let cz01 = crate::simulator::embed_gate(3, &gates::cz(), &[0, 1]).unwrap();
        let cz12 = crate::simulator::embed_gate(3, &gates::cz(), &[1, 2]).unwrap();
        let v_adjoin = cz12 * cz01;
        let r = haar_unitary_rng(8, &mut rng);
        let beta = CVector::from_vec(vec![
            Complex64::ONE,
            Complex64::ZERO,
            Complex64::ZERO,
            Complex64::ZERO,
        ]);
        let bp = beta.clone();
        let mut bdp = CVector::zeros(4);
        bdp[2] = Complex64::ONE;
        let p_s = adjoin_success_prob(3, 0.5, 1).unwrap();
        let g = embed_postselected(&v_adjoin, &r, &beta, &bp, &bdp, p_s).unwrap();
        let analysis = postselect_analyze(&g, &beta).unwrap();
        assert!(analysis.residual < 1e-9);
        assert!((analysis.p - p_s).abs() < 1e-9);
        let overlap = (analysis.v.adjoint() * &v_adjoin).trace().norm() / 8.0;
        assert!((overlap - 1.0).abs() < 1e-9, "recovered V mismatch: {overlap}");
        let (_, achieved) = companion_w(&g, &analysis, &beta).unwrap();
        assert!((achieved - (2.0 * (1.0 - p_s.sqrt())).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn effective_noise_values_and_monotonicity() {
        let tp = ThresholdParams::new(1e-3);
        assert_abs_diff_eq!(effective_noise(0.0, 5, 0.0, &tp).unwrap(), 0.0);
        // c₁k²η + c₂η with p_f = 0: 50·25·0.001 + 5·0.001 = 1.255.
        assert_abs_diff_eq!(effective_noise(0.001, 5, 0.0, &tp).unwrap(), 1.255, epsilon = 1e-12);
        // Monotone in η and p_f.
        let mut prev = 0.0;
        for i in 0..10 {
            let eta = 1e-4 * i as f64;
            let v = effective_noise(eta, 4, 0.3, &tp).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let mut prev = 0.0;
        for i in 0..10 {
            let p_f = 0.1 * i as f64;
            let v = effective_noise(1e-4, 4, p_f, &tp).unwrap();
            assert!(v >= prev - 1e-15, "p_f {p_f}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn threshold_p_f_zero_maximized_at_k2() {
        let tp = ThresholdParams::new(1e-3);
        let (k, v) = optimize_k(&tp, 0.0, 20).unwrap();
        assert_eq!(k, 2);
        assert_abs_diff_eq!(v, 1e-3 / (50.0 * 4.0 + 5.0), epsilon = 1e-15);
    }

    #[test]
    fn threshold_inverse_of_effective_noise() {
        let tp = ThresholdParams::new(1e-3);
        for k in [24, 26, 30, 40] {
            let thr = ocs_threshold(&tp, 0.5, k).unwrap();
            if thr > 0.0 {
                let back = effective_noise(thr, k, 0.5, &tp).unwrap();
                assert!((back - tp.eta_th).abs() < 1e-12, "k={k}: {back}");
            }
        }
    }

    #[test]
    fn optimize_k_scans_to_positive_threshold() {
        let tp = ThresholdParams::new(1e-3);
        let (k_star, value) = optimize_k(&tp, 0.5, 60).unwrap();
        assert!(value > 0.0, "no positive threshold up to k=60");
        // Smallest positive k from the scan agrees with the analytic
        // bound p_f^{k−1} ≲ (η_th/2)²/2 (within a step).
        let mut k_min_scan = None;
        for k in 2..=60 {
            if ocs_threshold(&tp, 0.5, k).unwrap() > 0.0 {
                k_min_scan = Some(k);
                break;
            }
        }
        let k_min_scan = k_min_scan.unwrap();
        // Analytic: need 2√(2(1−√p_s)) < η_th. With p_s ≈ 1 − 2 p_f^{k−1},
        // 1 − √p_s ≈ p_f^{k−1}, so p_f^{k−1} < η_th²/8.
        let bound = (tp.eta_th * tp.eta_th) / 8.0;
        let k_min_analytic = 1 + (bound.ln() / 0.5f64.ln()).ceil() as usize;
        assert!(
            k_min_scan.abs_diff(k_min_analytic) <= 1,
            "scan {k_min_scan} vs analytic {k_min_analytic}"
        );
        assert!(k_star >= k_min_scan);
    }
}
