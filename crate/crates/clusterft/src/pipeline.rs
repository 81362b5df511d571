//! End-to-end orchestration: circuit → canonical form → cluster →
//! scheduled noisy execution → distribution comparison.
//!
//! A pipeline run compiles the circuit, executes the chosen schedule with
//! strength-`η` noise injected after every physical operation (preparation
//! memory, CZ, pre-measurement memory), samples the measurement outcomes,
//! and compares the byproduct-corrected output distribution against the
//! noiseless circuit distribution with the Kolmogorov distance. Every
//! noisy operation is logged for the locality audit.
//!
//! The byproduct correction is applied in post-processing: the frame's
//! `X` bits relabel measurement outcomes (`Z` bits cannot affect
//! computational-basis statistics), so no fictitious perfect gates enter
//! the quantum execution.
//!
//! Reports are bit-exact reproducible: the same configuration and seeds
//! give byte-identical [`RunReport::to_json`] output (wall-clock timing is
//! deliberately excluded from serialization).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks;
use crate::cluster::ClusterRun;
use crate::compiler::{canonicalize, schedule, to_cluster, Circuit, Phase, Schedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::linalg::{derive_rng, identity, rng_from_seed};
use crate::noise::{locality_audit, perturb, EnvRegistry, NoiseLog, NoiseModel};
use crate::simulator::{distribution, gates, kolmogorov, Distribution};

/// Options of an end-to-end run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub schedule: ScheduleKind,
    /// Output-sampling shots per seed; 0 uses the exact branch
    /// distribution.
    pub shots: usize,
    /// One full noisy execution per seed.
    pub seeds: Vec<u64>,
    /// Probability of flipping each frame bit after an update — a
    /// demonstration of noise in the classical feedforward, not part of
    /// the quantum noise model.
    pub classical_flip_prob: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            schedule: ScheduleKind::OneBuffered,
            shots: 0,
            seeds: (0..10).collect(),
            classical_flip_prob: 0.0,
        }
    }
}

/// Everything a run reports. Serialization excludes wall-clock time, so
/// reports are byte-reproducible given configuration and seeds.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub per_seed: Vec<SeedResult>,
    pub median_distance: f64,
    pub quartiles: (f64, f64),
    pub max_distance: f64,
    pub locality_violations: Vec<String>,
    /// Noisy-capable gate counts of the feedforward blocks (the constants
    /// the noise-strength mapping multiplies η by).
    pub noisy_counts: NoisyCounts,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub n_qubits: usize,
    pub n_gates: usize,
    pub schedule: ScheduleKind,
    pub eta: f64,
    pub env_qubits_per_level: usize,
    pub noise_mode: String,
    pub shots: usize,
    pub seeds: Vec<u64>,
    pub classical_flip_prob: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Kolmogorov distance of the σ-corrected output distribution from
    /// the ideal circuit distribution.
    pub distance: f64,
    /// Sampled measurement record, one bit per measured node in schedule
    /// order.
    pub outcomes: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoisyCounts {
    pub qb: usize,
    pub qc: usize,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mode_name(model: &NoiseModel) -> String {
    match model.mode {
        crate::noise::NoiseMode::Off => "off".into(),
        crate::noise::NoiseMode::Random => "random".into(),
        crate::noise::NoiseMode::Adversarial(_) => "adversarial".into(),
    }
}

/// Execute one noisy scheduled run; returns the run, its log, and the
/// environment registry used.
pub fn execute_noisy_schedule(
    graph: &crate::cluster::ClusterGraph,
    plan: &Schedule,
    model: &NoiseModel,
    classical_flip_prob: f64,
    seed: u64,
) -> Result<(ClusterRun, NoiseLog)> {
    model.validate()?;
    let n_levels = graph.n_levels();
    let env_per_level = if model.is_off() { 0 } else { model.env_qubits_per_level };
    let envs = EnvRegistry::new(n_levels, env_per_level);
    let aux = n_levels * env_per_level;
    let mut run = ClusterRun::empty_with_aux(n_levels, aux);
    let mut log = NoiseLog::default();
    let mut rng = rng_from_seed(seed);
    let mut frame_rng = derive_rng(seed, 0xF11F);

    // Environment slots: level ℓ owns aux slots [ℓ·e, (ℓ+1)·e).
    let env_slots = |level: usize| -> Vec<usize> {
        (0..env_per_level).map(|k| level * env_per_level + k).collect()
    };
    let inject = |run: &mut ClusterRun,
                      log: &mut NoiseLog,
                      rng: &mut rand_chacha::ChaCha8Rng,
                      name: &str,
                      levels: &[usize],
                      system_slots: &[usize]|
     -> Result<()> {
        if model.is_off() {
            return Ok(());
        }
        let sys_dim = 1usize << system_slots.len();
        let pert = perturb(&identity(sys_dim), levels, model, &envs, rng, name)?;
        let mut targets: Vec<usize> = levels.iter().flat_map(|&l| env_slots(l)).collect();
        targets.extend_from_slice(system_slots);
        run.apply_slots(&pert.op, &targets)?;
        log.push(pert.record);
        Ok(())
    };

    for phase in &plan.phases {
        match phase {
            Phase::Prepare { nodes, edges, .. } => {
                for &id in nodes {
                    let node = graph
                        .node(id)
                        .cloned()
                        .ok_or(Error::UnknownId { kind: "node", id })?;
                    let level = node.level;
                    run.adjoin(vec![node], &[])?;
                    let slot = run.slot(id).expect("just adjoined");
                    inject(&mut run, &mut log, &mut rng, "prep_plus", &[level], &[slot])?;
                }
                for &(a, b) in edges {
                    run.apply_cz(a, b)?;
                    let la = graph.node(a).expect("edge endpoint").level;
                    let lb = graph.node(b).expect("edge endpoint").level;
                    let mut levels = vec![la];
                    if lb != la {
                        levels.push(lb);
                    }
                    let slots = [run.slot(a).unwrap(), run.slot(b).unwrap()];
                    inject(&mut run, &mut log, &mut rng, "cz", &levels, &slots)?;
                }
            }
            Phase::Measure { nodes, .. } => {
                for &id in nodes {
                    let level = graph.node(id).expect("scheduled node").level;
                    let slot = run.slot(id).ok_or(Error::UnknownId { kind: "node", id })?;
                    inject(&mut run, &mut log, &mut rng, "measure", &[level], &[slot])?;
                    run.measure_node(id, None, &mut rng)?;
                    if classical_flip_prob > 0.0 {
                        use rand::Rng;
                        let fx = frame_rng.random::<f64>() < classical_flip_prob;
                        let fz = frame_rng.random::<f64>() < classical_flip_prob;
                        run.flip_frame_bits(level, fx, fz)?;
                    }
                }
            }
        }
    }
    Ok((run, log))
}

/// The σ-corrected output distribution of a finished run: marginal over
/// the output nodes (environments traced out), outcomes relabeled by the
/// frame's X mask.
pub fn corrected_output_distribution(run: &ClusterRun) -> Result<Distribution> {
    let slots = run.output_slots();
    let raw = distribution(run.state(), &slots)?;
    Ok(raw.xor_relabel(run.frame().x_mask()))
}

/// Run the full pipeline: compile, execute every seed (in parallel),
/// compare distributions, audit locality.
pub fn run_end_to_end(
    circuit: &Circuit,
    model: &NoiseModel,
    opts: &RunOptions,
) -> Result<RunReport> {
    let start = std::time::Instant::now();
    model.validate()?;
    if !(0.0..=1.0).contains(&opts.classical_flip_prob) {
        return Err(Error::OutOfRange(format!(
            "classical_flip_prob = {}",
            opts.classical_flip_prob
        )));
    }
    let canonical =
        if circuit.is_canonical() { circuit.clone() } else { canonicalize(circuit)? };
    let graph = to_cluster(&canonical)?;
    let plan = schedule(&graph, opts.schedule)?;
    let ideal_state = canonical.output_state()?;
    let qubits: Vec<usize> = (0..canonical.n_qubits()).collect();
    let ideal = distribution(&ideal_state, &qubits)?;

    let envs_for_audit =
        EnvRegistry::new(graph.n_levels(), if model.is_off() { 0 } else { model.env_qubits_per_level });

    let results: Vec<Result<(SeedResult, NoiseLog)>> = opts
        .seeds
        .par_iter()
        .map(|&seed| {
            let (run, log) =
                execute_noisy_schedule(&graph, &plan, model, opts.classical_flip_prob, seed)?;
            let mut dist = corrected_output_distribution(&run)?;
            if opts.shots > 0 {
                let mut shot_rng = derive_rng(seed, 0x5407);
                dist = dist.resample(opts.shots, &mut shot_rng);
            }
            let distance = kolmogorov(&dist, &ideal);
            let outcomes = run.outcomes().iter().map(|o| o.outcome).collect();
            Ok((SeedResult { seed, distance, outcomes }, log))
        })
        .collect();

    let mut per_seed = Vec::with_capacity(results.len());
    let mut locality_violations = Vec::new();
    for r in results {
        let (sr, log) = r?;
        locality_violations.extend(locality_audit(&log, &envs_for_audit));
        per_seed.push(sr);
    }

    let mut sorted: Vec<f64> = per_seed.iter().map(|s| s.distance).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| -> f64 {
        if sorted.is_empty() {
            return 0.0;
        }
        let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
        sorted[idx]
    };

    Ok(RunReport {
        config: ConfigEcho {
            n_qubits: canonical.n_qubits(),
            n_gates: canonical.steps().len(),
            schedule: opts.schedule,
            eta: model.eta,
            env_qubits_per_level: model.env_qubits_per_level,
            noise_mode: mode_name(model),
            shots: opts.shots,
            seeds: opts.seeds.clone(),
            classical_flip_prob: opts.classical_flip_prob,
        },
        per_seed,
        median_distance: pick(0.5),
        quartiles: (pick(0.25), pick(0.75)),
        max_distance: sorted.last().copied().unwrap_or(0.0),
        locality_violations,
        noisy_counts: NoisyCounts { qb: blocks::qb(0.0).noisy_count(), qc: blocks::qc().noisy_count() },
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Identity-report entry for the CLI (`verify-identities`).
#[derive(Debug, Clone, Serialize)]
pub struct IdentityEntry {
    pub identity: String,
    pub residual: f64,
    pub pass: bool,
    pub expected_to_hold: bool,
}

/// Run the full identity suite: the single-qubit block against `H·Z_α`
/// over an angle sweep, the two-level block against `(H⊗H)·CZ`, the
/// coherent error-update truth table, and the exact matrix identities.
pub fn verify_identities(n_angles: usize) -> Result<Vec<IdentityEntry>> {
    let mut out = Vec::new();
    let plus = crate::simulator::StateVector::plus(1)?;

    // QEU truth table as a single pass/fail entry.
    let qeu_u = blocks::qeu().unitary()?;
    let mut qeu_residual = 0.0f64;
    for m in 0..2usize {
        for x in 0..2usize {
            for z in 0..2usize {
                let input = m | (x << 1) | (z << 2);
                let expect = m | (((z ^ m) & 1) << 1) | (x << 2);
                for row in 0..8 {
                    let want = if row == expect { 1.0 } else { 0.0 };
                    qeu_residual =
                        qeu_residual.max((qeu_u[(row, input)].re - want).abs().max(
                            qeu_u[(row, input)].im.abs(),
                        ));
                }
            }
        }
    }
    out.push(IdentityEntry {
        identity: "qeu_truth_table".into(),
        residual: qeu_residual,
        pass: qeu_residual < 1e-9,
        expected_to_hold: true,
    });

    for i in 0..n_angles.max(1) {
        let alpha = -std::f64::consts::PI
            + 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n_angles.max(1) as f64;
        let block = blocks::qb(alpha);
        let report =
            blocks::verify_identity(&block, &gates::hz(alpha), &[0], &[(1, plus.clone())])?;
        out.push(IdentityEntry {
            identity: format!("qb_alpha_{alpha:.4}_vs_hz"),
            residual: report.residual,
            pass: report.holds(),
            expected_to_hold: true,
        });
    }

    let qc_report = blocks::verify_identity(
        &blocks::qc(),
        &gates::hh_cz(),
        &[0, 4],
        &[(1, plus.clone()), (5, plus)],
    )?;
    out.push(IdentityEntry {
        identity: "qc_vs_hh_cz".into(),
        residual: qc_report.residual,
        pass: qc_report.holds(),
        expected_to_hold: true,
    });

    for check in blocks::appendix_identities() {
        out.push(IdentityEntry {
            identity: check.identity,
            residual: check.residual,
            pass: check.pass,
            expected_to_hold: check.expected_to_hold,
        });
    }
    Ok(out)
}
