//! Command-line interface: identity verification, extension and error
//! strength demos, schedule planning, noisy pipeline simulation, growth
//! statistics, and the optical threshold scan.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use clusterft::compiler::{schedule, to_cluster, Circuit, ScheduleKind};
use clusterft::error_strength::{delta, DeltaOptions, Partition};
use clusterft::linalg::{exp_i_hermitian, haar_unitary, identity, kron, random_hermitian_unit};
use clusterft::noise::{NoiseMode, NoiseModel};
use clusterft::optical::{
    adjoin_success_prob, monte_carlo_growth, ocs_threshold, optimize_k, GrowthParams,
    ThresholdParams,
};
use clusterft::pipeline::{run_end_to_end, verify_identities, RunOptions};
use clusterft::unitary_extension::{extend_first, extend_second};
use clusterft::SubspaceBasis;

#[derive(Parser)]
#[command(
    name = "clusterft",
    about = "Fault-tolerant cluster-state computation: simulation and verification",
    version
)]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write output to this file instead of stdout. Relative paths are
    /// resolved against $CLUSTERFT_OUT_DIR when that variable is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the feedforward-block circuit identities numerically.
    VerifyIdentities {
        /// Number of angles in the single-qubit block sweep.
        #[arg(long, default_value_t = 20)]
        angles: usize,
    },
    /// Run the unitary extension theorems on a random instance.
    Extend(ExtendArgs),
    /// Estimate the error strength of a calibrated noisy gate.
    Delta(DeltaArgs),
    /// Compile a circuit and emit its cluster graph and schedule.
    Plan(PlanArgs),
    /// Noisy end-to-end simulation of a circuit.
    Simulate(SimulateArgs),
    /// Monte-Carlo growth statistics for the dangling-node protocol.
    Growth(GrowthArgs),
    /// Optical threshold scan over the microcluster size k.
    Threshold(ThresholdArgs),
}

#[derive(Args)]
struct ExtendArgs {
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    subspace_dim: usize,
    /// Which theorem to run: first, second or both.
    #[arg(long, default_value = "both")]
    which: String,
}

#[derive(Args)]
struct DeltaArgs {
    #[arg(long, default_value_t = 2)]
    q_dim: usize,
    #[arg(long, default_value_t = 2)]
    e_dim: usize,
    /// Calibrated strength of the generated noisy gate.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    #[arg(long, default_value_t = 8)]
    multistarts: usize,
}

#[derive(Args)]
struct PlanArgs {
    /// Circuit JSON file ("-" for stdin).
    #[arg(long)]
    circuit: String,
    #[arg(long, value_enum, default_value_t = ScheduleArg::OneBuffered)]
    schedule: ScheduleArg,
    /// Canonicalize the circuit first.
    #[arg(long, default_value_t = false)]
    canonicalize: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Circuit JSON file ("-" for stdin).
    #[arg(long)]
    circuit: String,
    /// Optional JSON config; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    env_qubits: Option<usize>,
    /// off | random
    #[arg(long)]
    noise_mode: Option<String>,
    /// Number of seeds (seed, seed+1, ...).
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    classical_flip_prob: Option<f64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    OneBuffered,
    TwoAtATime,
    Dangling,
}

impl From<ScheduleArg> for ScheduleKind {
    fn from(value: ScheduleArg) -> Self {
        match value {
            ScheduleArg::OneBuffered => ScheduleKind::OneBuffered,
            ScheduleArg::TwoAtATime => ScheduleKind::TwoAtATime,
            ScheduleArg::Dangling => ScheduleKind::Dangling,
        }
    }
}

#[derive(Args)]
struct GrowthArgs {
    #[arg(long)]
    pf: f64,
    #[arg(long)]
    k: usize,
    /// 1 or 2.
    #[arg(long, default_value_t = 1)]
    levels: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    eta_th: f64,
    #[arg(long, default_value_t = 50.0)]
    c1: f64,
    #[arg(long, default_value_t = 5.0)]
    c2: f64,
    #[arg(long)]
    pf: f64,
    #[arg(long, default_value_t = 60)]
    k_max: usize,
}

/// Defaults file for `simulate`.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    eta: Option<f64>,
    env_qubits: Option<usize>,
    noise_mode: Option<String>,
    schedule: Option<String>,
    seeds: Option<usize>,
    shots: Option<usize>,
    classical_flip_prob: Option<f64>,
}

fn emit(cli_out: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match cli_out {
        None => {
            println!("{text}");
            Ok(())
        }
        Some(path) => {
            let resolved = if path.is_relative() {
                match std::env::var_os("CLUSTERFT_OUT_DIR") {
                    Some(dir) => PathBuf::from(dir).join(path),
                    None => path.clone(),
                }
            } else {
                path.clone()
            };
            if let Some(parent) = resolved.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(resolved, format!("{text}\n"))
        }
    }
}

fn read_circuit(source: &str) -> clusterft::Result<Circuit> {
    let text = if source == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        buf
    } else {
        std::fs::read_to_string(source)?
    };
    Circuit::from_json(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> clusterft::Result<ExitCode> {
    match &cli.command {
        Command::VerifyIdentities { angles } => {
            let entries = verify_identities(*angles)?;
            let all_ok = entries.iter().all(|e| e.pass == e.expected_to_hold);
            let text = match cli.format {
                Format::Json => serde_json::to_string_pretty(&entries)?,
                Format::Csv => {
                    let mut s = String::from("identity,residual,pass,expected_to_hold\n");
                    for e in &entries {
                        s.push_str(&format!(
                            "{},{:.3e},{},{}\n",
                            e.identity, e.residual, e.pass, e.expected_to_hold
                        ));
                    }
                    s.trim_end().to_string()
                }
            };
            emit(&cli.out, &text)?;
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Command::Extend(args) => {
            if args.subspace_dim == 0 || args.subspace_dim > args.dim {
                return Err(clusterft::Error::OutOfRange(format!(
                    "subspace dim {} for ambient dim {}",
                    args.subspace_dim, args.dim
                )));
            }
            if !["first", "second", "both"].contains(&args.which.as_str()) {
                return Err(clusterft::Error::InvalidConfig(format!(
                    "--which must be first, second or both, got {}",
                    args.which
                )));
            }
            let mut rng = clusterft::linalg::rng_from_seed(cli.seed);
            let u = clusterft::linalg::haar_unitary_rng(args.dim, &mut rng);
            let v = clusterft::linalg::haar_unitary_rng(args.dim, &mut rng);
            let s = SubspaceBasis::random(args.dim, args.subspace_dim, &mut rng);
            let mut report = serde_json::Map::new();
            report.insert("dim".into(), args.dim.into());
            report.insert("subspace_dim".into(), args.subspace_dim.into());
            report.insert("seed".into(), cli.seed.into());
            let digest = |c: &clusterft::unitary_extension::ExtensionCertificate| {
                serde_json::json!({
                    "restriction_residual": c.restriction_residual,
                    "bound_lhs": c.bound_lhs,
                    "bound_rhs": c.bound_rhs,
                    "bound_holds": c.bound_lhs <= c.bound_rhs + 1e-9,
                })
            };
            if args.which == "first" || args.which == "both" {
                // An operator agreeing with U on S: U·(P + B⊥ w B⊥†).
                let comp = s.complement();
                let u_tilde = if comp.ncols() == 0 {
                    u.clone()
                } else {
                    let w = clusterft::linalg::haar_unitary_rng(comp.ncols(), &mut rng);
                    &u * (s.projector() + &comp * w * comp.adjoint())
                };
                let cert = extend_first(&u, &u_tilde, &v, &s)?;
                report.insert("first".into(), digest(&cert));
            }
            if args.which == "second" || args.which == "both" {
                let cert = extend_second(&u, &v, &s)?;
                report.insert("second".into(), digest(&cert));
            }
            emit(&cli.out, &serde_json::to_string_pretty(&report)?)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Delta(args) => {
            let joint = args.q_dim * args.e_dim;
            let ideal = haar_unitary(args.q_dim, cli.seed);
            let h = random_hermitian_unit(joint, cli.seed ^ 0xABCD);
            let eps = 2.0 * (args.eta / 2.0).asin();
            let noisy = exp_i_hermitian(&h, eps)? * kron(&ideal, &identity(args.e_dim));
            let opts = DeltaOptions {
                multistarts: args.multistarts,
                ..DeltaOptions::with_seed(cli.seed)
            };
            let r = delta(&ideal, &noisy, Partition::new(args.q_dim, args.e_dim), &opts)?;
            let text = serde_json::to_string_pretty(&serde_json::json!({
                "q_dim": args.q_dim,
                "e_dim": args.e_dim,
                "calibrated_eta": args.eta,
                "upper_bound": r.upper_bound,
                "converged": r.converged,
                "bound_at_most_eta": r.upper_bound <= args.eta + 1e-9,
            }))?;
            emit(&cli.out, &text)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Plan(args) => {
            let mut circuit = read_circuit(&args.circuit)?;
            if args.canonicalize {
                circuit = clusterft::compiler::canonicalize(&circuit)?;
            }
            let graph = to_cluster(&circuit)?;
            let plan = schedule(&graph, args.schedule.into())?;
            let text = serde_json::to_string_pretty(&serde_json::json!({
                "graph": serde_json::from_str::<serde_json::Value>(&graph.to_json())?,
                "schedule": serde_json::from_str::<serde_json::Value>(&plan.to_json())?,
            }))?;
            emit(&cli.out, &text)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Simulate(args) => {
            let circuit = read_circuit(&args.circuit)?;
            let file_cfg: SimulateConfig = match &args.config {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => SimulateConfig::default(),
            };
            let eta = args.eta.or(file_cfg.eta).unwrap_or(0.0);
            let env_qubits = args.env_qubits.or(file_cfg.env_qubits).unwrap_or(1);
            let mode_name = args
                .noise_mode
                .clone()
                .or(file_cfg.noise_mode)
                .unwrap_or_else(|| if eta > 0.0 { "random".into() } else { "off".into() });
            let mode = match mode_name.as_str() {
                "off" => NoiseMode::Off,
                "random" => NoiseMode::Random,
                other => {
                    return Err(clusterft::Error::InvalidConfig(format!(
                        "noise mode {other} (expected off|random)"
                    )))
                }
            };
            let schedule_kind: ScheduleKind = match args.schedule {
                Some(s) => s.into(),
                None => match file_cfg.schedule.as_deref() {
                    None | Some("one-buffered") => ScheduleKind::OneBuffered,
                    Some("two-at-a-time") => ScheduleKind::TwoAtATime,
                    Some("dangling") => ScheduleKind::Dangling,
                    Some(other) => {
                        return Err(clusterft::Error::InvalidConfig(format!("schedule {other}")))
                    }
                },
            };
            let n_seeds = args.seeds.or(file_cfg.seeds).unwrap_or(10);
            let model = NoiseModel { eta, env_qubits_per_level: env_qubits, mode };
            let opts = RunOptions {
                schedule: schedule_kind,
                shots: args.shots.or(file_cfg.shots).unwrap_or(0),
                seeds: (cli.seed..cli.seed + n_seeds as u64).collect(),
                classical_flip_prob: args
                    .classical_flip_prob
                    .or(file_cfg.classical_flip_prob)
                    .unwrap_or(0.0),
            };
            let report = run_end_to_end(&circuit, &model, &opts)?;
            eprintln!("simulate: {:.1} ms", report.elapsed_ms);
            let text = match cli.format {
                Format::Json => report.to_json(),
                Format::Csv => {
                    let mut s = String::from("seed,distance\n");
                    for r in &report.per_seed {
                        s.push_str(&format!("{},{:.12e}\n", r.seed, r.distance));
                    }
                    s.push_str(&format!("median,{:.12e}", report.median_distance));
                    s
                }
            };
            emit(&cli.out, &text)?;
            Ok(if report.locality_violations.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }

        Command::Growth(args) => {
            let params =
                GrowthParams { k: args.k, p_f: args.pf, trials: args.trials, seed: cli.seed };
            let est = monte_carlo_growth(&params, args.levels)?;
            let text = match cli.format {
                Format::Csv => {
                    let mut s = String::from("p_f,k,levels,p_hat,ci_lo,ci_hi,closed_form\n");
                    s.push_str(&format!(
                        "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                        args.pf, args.k, args.levels, est.p_hat, est.ci95.0, est.ci95.1,
                        est.closed_form
                    ));
                    s
                }
                Format::Json => serde_json::to_string_pretty(&serde_json::json!({
                    "p_f": args.pf,
                    "k": args.k,
                    "levels": args.levels,
                    "trials": args.trials,
                    "p_hat": est.p_hat,
                    "ci95": [est.ci95.0, est.ci95.1],
                    "defect_rate": est.defect_rate,
                    "closed_form": est.closed_form,
                    "state_checked": est.state_checked,
                }))?,
            };
            emit(&cli.out, &text)?;
            let consistent = (est.p_hat - est.closed_form).abs()
                <= 4.0
                    * (est.closed_form * (1.0 - est.closed_form) / args.trials as f64)
                        .sqrt()
                        .max(1e-9);
            Ok(if consistent { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Command::Threshold(args) => {
            let tp = ThresholdParams { eta_th: args.eta_th, c1: args.c1, c2: args.c2 };
            let (k_star, best) = optimize_k(&tp, args.pf, args.k_max)?;
            let text = match cli.format {
                Format::Csv => {
                    let mut s = String::from("k,threshold_value,p_s\n");
                    for k in 2..=args.k_max {
                        let v = ocs_threshold(&tp, args.pf, k)?;
                        let p_s = adjoin_success_prob(k, args.pf, 2)?;
                        s.push_str(&format!("{k},{v:.6e},{p_s:.9}\n"));
                    }
                    s.push_str(&format!("argmax,{best:.6e},k={k_star}"));
                    s
                }
                Format::Json => {
                    let rows: Vec<serde_json::Value> = (2..=args.k_max)
                        .map(|k| {
                            serde_json::json!({
                                "k": k,
                                "threshold_value": ocs_threshold(&tp, args.pf, k).unwrap(),
                            })
                        })
                        .collect();
                    serde_json::to_string_pretty(&serde_json::json!({
                        "eta_th": args.eta_th,
                        "c1": args.c1,
                        "c2": args.c2,
                        "p_f": args.pf,
                        "rows": rows,
                        "best_k": k_star,
                        "best_value": best,
                    }))?
                }
            };
            emit(&cli.out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
