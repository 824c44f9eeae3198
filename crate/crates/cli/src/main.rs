//! `timerate` — computes inner bounds on the joint time-rate region of
//! discrete memoryless networks and validates rate points by seeded Monte
//! Carlo simulation of staged-decoding codes.
//!
//! One network-spec file drives all subcommands. Every run writes a
//! manifest with the resolved parameters next to its outputs, and repeated
//! runs with the same arguments produce byte-identical files.
//!
//! Exit codes: 0 success, 2 validation error, 3 unsupported structure,
//! 4 resource cap exceeded, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use timerate::bound::{
    inner_bound_frontier, max_weighted_rate, supported_constraints, BuiltinOracles,
    MaxRateOptions, OracleConfig,
};
use timerate::expansion::{expand, ExpandOptions, ExpandedProblem};
use timerate::model::{validate_problem, NetworkProblem, TimeConstraints};
use timerate::oracles::{classify_receiver, static_broadcast_max_rate, ReceiverClass};
use timerate::sim::{
    build_two_phase_erasure_scheme, simulate, verify_claim1_scaling, SimConfig,
    TwoPhaseSchemeSpec,
};
use timerate::specfile::{parse_network_spec, write_expanded, write_phase};
use timerate::{round_sig9, Error};

#[derive(Parser)]
#[command(name = "timerate", version, about = "Time-rate region toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a network spec into its sub-message and phase problems.
    Expand(ExpandArgs),
    /// Compute the achievable-rate frontier for the spec's deadlines.
    Region(RegionArgs),
    /// Monte Carlo simulation of a two-phase erasure-broadcast code.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ExpandArgs {
    /// Network-spec file.
    spec: PathBuf,
    /// Output directory (default: `<spec stem>.expand`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop schedules that deliver sub-messages to non-demanding nodes.
    #[arg(long)]
    no_overhearing: bool,
    /// Sub-message cap.
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
}

#[derive(Args)]
struct RegionArgs {
    /// Network-spec file.
    spec: PathBuf,
    /// Output directory (default: `<spec stem>.region`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated per-message weights for a single objective.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Number of objectives for the frontier sweep.
    #[arg(long, default_value_t = 17)]
    sweep: usize,
    /// Grid steps per simplex coordinate for region oracles.
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// Capacity-oracle tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Auxiliary-variable cardinality for the broadcast oracle.
    #[arg(long)]
    u_cardinality: Option<usize>,
    /// Compute the two-receiver static-broadcasting optimum instead of the
    /// time-expansion inner bound.
    #[arg(long)]
    static_bc: bool,
    /// Drop schedules that deliver sub-messages to non-demanding nodes.
    #[arg(long)]
    no_overhearing: bool,
    /// Worker threads for the frontier sweep.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Outer reference value; the summary reports the gap against it.
    #[arg(long)]
    reference: Option<f64>,
    /// Sub-message cap.
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Network-spec file.
    spec: PathBuf,
    /// Output directory (default: `<spec stem>.simulate`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated sub-message rates, in the expansion's sub-message
    /// order.
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Blocklength normalization unit.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Monte Carlo trials.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Seed for messages, channel noise, and the codebook.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also verify the blocklength/time rescaling by this factor.
    #[arg(long)]
    alpha: Option<f64>,
    /// Use an independent seed for the rescaled run instead of coupling.
    #[arg(long)]
    decouple_seed: Option<u64>,
    /// Worker threads for trial sharding.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Record per-demand maximum symbol reads.
    #[arg(long)]
    log_access: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Expand(args) => cmd_expand(args),
        Command::Region(args) => cmd_region(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Parse(_)
        | Error::Validation(_)
        | Error::Dimension(_)
        | Error::IndexMismatch(_)
        | Error::RateBudget(_)
        | Error::NonIntegralRescale(_)
        | Error::NoTrials => 2,
        Error::UnsupportedPhase { .. } | Error::UnsupportedChannel(_) => 3,
        Error::SubMessageCap { .. } | Error::GridCap { .. } => 4,
        Error::Internal(_) => 1,
    }
}

fn load_spec(path: &Path) -> Result<(NetworkProblem, TimeConstraints), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {}", path.display(), e)))?;
    let (problem, sigma) = parse_network_spec(&text)?;
    let report = validate_problem(&problem, &sigma);
    if !report.is_valid() {
        return Err(report.to_error());
    }
    Ok((problem, sigma))
}

fn out_dir(spec: &Path, explicit: Option<PathBuf>, command: &str) -> Result<PathBuf, Error> {
    let dir = explicit.unwrap_or_else(|| {
        let stem = spec
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        PathBuf::from(format!("{}.{}", stem, command))
    });
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::Parse(format!("cannot create {}: {}", dir.display(), e)))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Error> {
    std::fs::write(dir.join(name), contents)
        .map_err(|e| Error::Parse(format!("cannot write {}: {}", name, e)))
}

/// Writes the run manifest atomically (temp file + rename).
fn write_manifest(
    dir: &Path,
    command: &str,
    input: &Path,
    parameters: serde_json::Value,
    outputs: &[&str],
) -> Result<(), Error> {
    let manifest = json!({
        "tool": "timerate",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "input": input.to_string_lossy(),
        "parameters": parameters,
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let tmp = dir.join("manifest.json.tmp");
    std::fs::write(&tmp, &text)
        .map_err(|e| Error::Parse(format!("cannot write manifest: {}", e)))?;
    std::fs::rename(&tmp, dir.join("manifest.json"))
        .map_err(|e| Error::Parse(format!("cannot finalize manifest: {}", e)))?;
    Ok(())
}

fn cmd_expand(args: ExpandArgs) -> Result<(), Error> {
    let (problem, sigma) = load_spec(&args.spec)?;
    let opts = ExpandOptions {
        no_overhearing: args.no_overhearing,
        max_submessages: args.cap,
    };
    let expanded = expand(&problem, &sigma, &opts)?;
    let phases = expanded.phase_problems()?;
    let dir = out_dir(&args.spec, args.out, "expand")?;

    write_file(&dir, "expanded.toml", &write_expanded(&expanded))?;
    let mut outputs = vec!["expanded.toml".to_string()];
    for phase in &phases {
        let name = format!("phase-{}.toml", phase.phase);
        write_file(&dir, &name, &write_phase(&expanded, phase))?;
        outputs.push(name);
    }

    let mut summary = String::new();
    summary.push_str(&format!("sub-messages: {}\n", expanded.submessage_count()));
    summary.push_str(&format!("phases: {}\n", phases.len()));
    for phase in &phases {
        let demand_count: usize = phase
            .s
            .iter()
            .map(|row| row.iter().filter(|&&b| b).count())
            .sum();
        summary.push_str(&format!(
            "phase {}: duration {}, demand pairs {}\n",
            phase.phase,
            timerate::fmt_sig9(phase.duration),
            demand_count
        ));
    }
    for (idx, sub) in expanded.submessages.iter().enumerate() {
        let demanders: Vec<String> = expanded.s0[idx]
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(j, _)| format!("v{}", j + 1))
            .collect();
        summary.push_str(&format!("  {} -> {}\n", sub.id(), demanders.join(", ")));
    }
    write_file(&dir, "summary.txt", &summary)?;
    outputs.push("summary.txt".into());

    let refs: Vec<&str> = outputs.iter().map(|s| s.as_str()).collect();
    write_manifest(
        &dir,
        "expand",
        &args.spec,
        json!({ "no_overhearing": args.no_overhearing, "cap": args.cap }),
        &refs,
    )?;
    println!(
        "expanded {} message(s) into {} sub-message(s) over {} phase(s); outputs in {}",
        problem.message_count,
        expanded.submessage_count(),
        phases.len(),
        dir.display()
    );
    Ok(())
}

/// The two effective (non-holder) demanders of a single-message problem,
/// with their decoding times.
fn two_receivers(
    problem: &NetworkProblem,
    sigma: &TimeConstraints,
) -> Result<[(usize, f64); 2], Error> {
    if problem.message_count != 1 {
        return Err(Error::UnsupportedChannel(format!(
            "expected a single message, spec has {}",
            problem.message_count
        )));
    }
    let receivers: Vec<(usize, f64)> = (0..problem.node_count())
        .filter(|&j| problem.demanded(0, j) && !problem.holds(0, j))
        .map(|j| (j, sigma.get(0, j).expect("validated demand")))
        .collect();
    match <[(usize, f64); 2]>::try_from(receivers) {
        Ok(pair) => Ok(pair),
        Err(v) => Err(Error::UnsupportedChannel(format!(
            "expected exactly 2 receivers, spec has {}",
            v.len()
        ))),
    }
}

fn cmd_region(args: RegionArgs) -> Result<(), Error> {
    let (problem, sigma) = load_spec(&args.spec)?;
    let dir = out_dir(&args.spec, args.out, "region")?;

    if args.static_bc {
        let [(node1, s1), (node2, s2)] = two_receivers(&problem, &sigma)?;
        let w1 = problem.channel.receiver_marginal(node1);
        let w2 = problem.channel.receiver_marginal(node2);
        let value = static_broadcast_max_rate(&w1, &w2, s1, s2, args.grid)?;
        let summary = json!({
            "command": "region --static-bc",
            "max_rate": round_sig9(value),
            "receivers": [node1 + 1, node2 + 1],
            "sigma": [round_sig9(s1), round_sig9(s2)],
            "grid": args.grid,
        });
        write_file(&dir, "summary.json", &serde_json::to_string_pretty(&summary).unwrap())?;
        write_manifest(
            &dir,
            "region",
            &args.spec,
            json!({ "static_bc": true, "grid": args.grid }),
            &["summary.json"],
        )?;
        println!("static broadcasting optimum: {}", timerate::fmt_sig9(value));
        return Ok(());
    }

    let opts = ExpandOptions {
        no_overhearing: args.no_overhearing,
        max_submessages: args.cap,
    };
    let expanded = expand(&problem, &sigma, &opts)?;
    let phases = expanded.phase_problems()?;
    let provider = BuiltinOracles::new(OracleConfig {
        tol: args.tol,
        grid_steps: args.grid,
        u_cardinality: args.u_cardinality,
        ..OracleConfig::default()
    });
    let supported = supported_constraints(&expanded, &phases, &provider)?;
    let constraints = supported.constraints;
    let search = MaxRateOptions::default();

    let sum_weights = vec![1.0; problem.message_count];
    let max_sum = max_weighted_rate(&expanded, &constraints, &sum_weights, &search)?;
    let max_weighted = match &args.weights {
        Some(w) => Some(max_weighted_rate(&expanded, &constraints, w, &search)?),
        None => None,
    };
    let region = inner_bound_frontier(&expanded, &constraints, args.sweep, args.workers, &search)?;

    write_file(&dir, "frontier.csv", &region.to_csv(&expanded))?;
    let dropped: Vec<String> = supported
        .dropped_overhearing
        .iter()
        .map(|&s| expanded.submessages[s].id())
        .collect();
    let mut summary = json!({
        "command": "region",
        "max_sum_rate": round_sig9(max_sum.value),
        "max_sum_rates": max_sum.rates.iter().map(|&r| round_sig9(r)).collect::<Vec<_>>(),
        "allocation": max_sum.allocation.iter().map(|&a| round_sig9(a)).collect::<Vec<_>>(),
        "submessages": expanded.submessages.iter().map(|s| s.id()).collect::<Vec<_>>(),
        "frontier_samples": region.samples.len(),
        "dropped_overhearing": dropped,
        "grid": args.grid,
        "sweep": args.sweep,
        "tol": args.tol,
    });
    if let Some(point) = &max_weighted {
        summary["max_weighted_value"] = json!(round_sig9(point.value));
        summary["weights"] = json!(point.weights.iter().map(|&w| round_sig9(w)).collect::<Vec<_>>());
    }
    if let Some(reference) = args.reference {
        summary["reference"] = json!(round_sig9(reference));
        summary["gap"] = json!(round_sig9(reference - max_sum.value));
    }
    write_file(&dir, "summary.json", &serde_json::to_string_pretty(&summary).unwrap())?;
    write_manifest(
        &dir,
        "region",
        &args.spec,
        json!({
            "static_bc": false,
            "grid": args.grid,
            "sweep": args.sweep,
            "tol": args.tol,
            "weights": args.weights,
            "no_overhearing": args.no_overhearing,
            "workers": args.workers,
            "u_cardinality": args.u_cardinality,
            "reference": args.reference,
            "cap": args.cap,
        }),
        &["frontier.csv", "summary.json"],
    )?;
    println!(
        "max sum rate: {} ({} frontier sample(s)); outputs in {}",
        timerate::fmt_sig9(max_sum.value),
        region.samples.len(),
        dir.display()
    );
    Ok(())
}

/// Maps a validated single-message two-receiver erasure spec onto the
/// two-phase scheme geometry: identity receiver first, then the erasure
/// receiver, with rates in the expansion's sub-message order.
fn two_phase_geometry(
    problem: &NetworkProblem,
    sigma: &TimeConstraints,
    expanded: &ExpandedProblem,
    rates: &[f64],
) -> Result<(TwoPhaseSchemeSpec, [usize; 2]), Error> {
    let [(na, sa), (nb, sb)] = two_receivers(problem, sigma)?;
    // Strong receiver decodes first.
    let ((strong, s_strong), (weak, s_weak)) = if sa <= sb {
        ((na, sa), (nb, sb))
    } else {
        ((nb, sb), (na, sa))
    };
    let eps_strong = match classify_receiver(&problem.channel.receiver_marginal(strong)) {
        ReceiverClass::Identity { .. } => 0.0,
        ReceiverClass::Erasure { eps, .. } => eps,
        ReceiverClass::Other => {
            return Err(Error::UnsupportedChannel(format!(
                "receiver v{} is not an identity/erasure channel",
                strong + 1
            )));
        }
    };
    if eps_strong != 0.0 {
        return Err(Error::UnsupportedChannel(
            "the earlier-deadline receiver must see the channel noiselessly".into(),
        ));
    }
    let eps_weak = match classify_receiver(&problem.channel.receiver_marginal(weak)) {
        ReceiverClass::Identity { .. } => 0.0,
        ReceiverClass::Erasure { eps, .. } => eps,
        ReceiverClass::Other => {
            return Err(Error::UnsupportedChannel(format!(
                "receiver v{} is not an identity/erasure channel",
                weak + 1
            )));
        }
    };

    if rates.len() != expanded.submessage_count() {
        return Err(Error::IndexMismatch(format!(
            "{} rates for {} sub-messages ({})",
            rates.len(),
            expanded.submessage_count(),
            expanded
                .submessages
                .iter()
                .map(|s| s.id())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    if rates.iter().any(|&r| r < 0.0) {
        return Err(Error::Validation("rates must be nonnegative".into()));
    }
    // With two phases the lexicographically-first sub-message is the common
    // one (all deadlines in phase 1); with one phase there is only it.
    let (common_rate, private_rate) = match expanded.submessage_count() {
        1 => (rates[0], 0.0),
        2 => (rates[0], rates[1]),
        n => {
            return Err(Error::UnsupportedChannel(format!(
                "two-phase scheme expects at most 2 sub-messages, expansion has {}",
                n
            )));
        }
    };
    Ok((
        TwoPhaseSchemeSpec {
            common_rate,
            private_rate,
            sigma: (s_strong, s_weak),
            n: 0, // filled by the caller
            eps_weak,
            codebook_seed: 0,
        },
        [strong, weak],
    ))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let (problem, sigma) = load_spec(&args.spec)?;
    let expanded = expand(&problem, &sigma, &ExpandOptions::default())?;
    let (mut scheme_spec, receiver_nodes) =
        two_phase_geometry(&problem, &sigma, &expanded, &args.rates)?;
    scheme_spec.n = args.n;
    scheme_spec.codebook_seed = args.seed;
    let scheme = build_two_phase_erasure_scheme(&scheme_spec)?;
    let config = SimConfig {
        trials: args.trials,
        seed: args.seed,
        workers: args.workers,
        log_access: args.log_access,
    };
    let report = simulate(&scheme, &problem.channel, &receiver_nodes, &config)?;

    let dir = out_dir(&args.spec, args.out, "simulate")?;
    write_file(&dir, "report.json", &report.to_json())?;
    write_file(&dir, "report.csv", &report.to_csv())?;
    let mut outputs = vec!["report.json", "report.csv"];

    let scaling_json = match args.alpha {
        Some(alpha) => {
            let scaling = verify_claim1_scaling(
                &scheme,
                &problem.channel,
                &receiver_nodes,
                &config,
                alpha,
                args.decouple_seed,
            )?;
            let text = serde_json::to_string_pretty(&json!({
                "alpha": scaling.alpha,
                "trials": scaling.trials,
                "agreements": scaling.agreements,
                "agreement_rate": round_sig9(scaling.agreement_rate),
                "coupled_seeds": scaling.coupled_seeds,
                "base_joint_error": round_sig9(scaling.base.joint_error_rate),
                "rescaled_joint_error": round_sig9(scaling.rescaled.joint_error_rate),
                "rescaled_n": scaling.rescaled.n,
            }))
            .unwrap();
            Some(text)
        }
        None => None,
    };
    if let Some(text) = &scaling_json {
        write_file(&dir, "scaling.json", text)?;
        outputs.push("scaling.json");
    }
    write_manifest(
        &dir,
        "simulate",
        &args.spec,
        json!({
            "rates": args.rates,
            "n": args.n,
            "trials": args.trials,
            "seed": args.seed,
            "alpha": args.alpha,
            "decouple_seed": args.decouple_seed,
            "workers": args.workers,
            "log_access": args.log_access,
        }),
        &outputs,
    )?;
    println!(
        "joint error rate: {} over {} trials; outputs in {}",
        timerate::fmt_sig9(report.joint_error_rate),
        report.trials,
        dir.display()
    );
    Ok(())
}
