//! One function per subcommand; each returns a report.

use std::path::Path;

use linenet::alloc::{self, Method, Objective};
use linenet::emc::{self, build_emc_capped, ChainOptions};
use linenet::netcod::{self, FieldSpec};
use linenet::sim::{self, ContinuousSpec, SimConfig};
use linenet::{amc, dbie, delay, rbie, NetworkSpec};
use serde_json::json;

use crate::report::{num, opt, write_text, Report, Table};
use crate::{reproduce, Cli, CliError, Command, Estimate, MethodArg, ObjectiveArg, PrecisionArg};

const DEFAULT_EPOCHS: u64 = 1_000_000;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Reproduce { figure, state_cap } = &cli.command {
        return reproduce::run(cli, figure, *state_cap);
    }
    let report = match &cli.command {
        Command::Exact { state_cap, matrix_out } => cmd_exact(cli, *state_cap, matrix_out.as_deref())?,
        Command::Bounds { state_cap } => cmd_bounds(cli, *state_cap)?,
        Command::Rbie => cmd_rbie(cli)?,
        Command::Dbie { precision, no_perturb } => cmd_dbie(cli, *precision, *no_perturb)?,
        Command::Delay { estimate, include_source } => cmd_delay(cli, *estimate, *include_source)?,
        Command::Simulate { warmup, delay, trials } => cmd_simulate(cli, *warmup, *delay, *trials)?,
        Command::Netcod { q, warmup, transitions } => cmd_netcod(cli, q, *warmup, *transitions)?,
        Command::Continuous { lambdas, buffers, tau } => cmd_continuous(lambdas, buffers, tau)?,
        Command::Allocate { eps, budget, objective, floor, method } => {
            cmd_allocate(cli, eps.as_deref(), *budget, *objective, *floor, *method)?
        }
        Command::Reproduce { .. } => unreachable!("handled above"),
    };
    write_text(cli.out.as_deref(), &report.render(cli.format)?)
}

pub fn load_spec(arg: Option<&str>) -> Result<NetworkSpec, CliError> {
    let arg = arg.ok_or_else(|| CliError::Usage("--spec is required".into()))?;
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| CliError::Io { path: arg.into(), source: e })?
    };
    // Validation errors inside the spec surface as linenet errors.
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let eps: Vec<f64> = serde_json::from_value(value.get("eps").cloned().unwrap_or_default())
        .map_err(|_| CliError::Usage("spec needs an `eps` array".into()))?;
    let buffers: Vec<u32> = serde_json::from_value(value.get("buffers").cloned().unwrap_or_default())
        .map_err(|_| CliError::Usage("spec needs a `buffers` array of positive integers".into()))?;
    Ok(NetworkSpec::new(eps, buffers)?)
}

fn spec_json(s: &NetworkSpec) -> serde_json::Value {
    json!({ "eps": s.eps(), "buffers": s.buffers() })
}

fn positive_tol(t: f64) -> Result<f64, CliError> {
    if t > 0.0 && t.is_finite() {
        Ok(t)
    } else {
        Err(CliError::Usage(format!("--tol must be positive, got {t}")))
    }
}

fn chain_options(cli: &Cli, state_cap: Option<usize>) -> Result<ChainOptions, CliError> {
    let d = ChainOptions::default();
    Ok(ChainOptions {
        tol: positive_tol(cli.tol.unwrap_or(d.tol))?,
        max_iter: cli.max_iter.unwrap_or(d.max_iter),
        state_cap: state_cap.unwrap_or(d.state_cap),
    })
}

fn rbie_options(cli: &Cli) -> Result<rbie::RbieOptions, CliError> {
    let d = rbie::RbieOptions::default();
    Ok(rbie::RbieOptions { tol: positive_tol(cli.tol.unwrap_or(d.tol))?, max_iter: cli.max_iter.unwrap_or(d.max_iter), ..d })
}

fn dbie_options(cli: &Cli, precision: PrecisionArg, no_perturb: bool) -> Result<dbie::DbieOptions, CliError> {
    let d = dbie::DbieOptions::default();
    Ok(dbie::DbieOptions {
        tol: positive_tol(cli.tol.unwrap_or(d.tol))?,
        max_iter: cli.max_iter.unwrap_or(d.max_iter),
        precision: match precision {
            PrecisionArg::Double => dbie::Precision::Double,
            PrecisionArg::Extended => dbie::Precision::Extended,
        },
        perturbation: if no_perturb { None } else { d.perturbation },
        ..d
    })
}

fn cmd_exact(cli: &Cli, state_cap: Option<usize>, matrix_out: Option<&Path>) -> Result<Report, CliError> {
    let spec = load_spec(cli.spec.as_deref())?;
    let opts = chain_options(cli, state_cap)?;
    let sol = emc::solve_exact(&spec, &opts)?;
    if let Some(path) = matrix_out {
        let p = build_emc_capped(&spec, opts.state_cap)?;
        let mut t = Table::new(&["row", "col", "prob"]);
        for (r, c, v) in p.triplets() {
            t.push(vec![r.to_string(), c.to_string(), num(v)]);
        }
        write_text(Some(path), &t.to_csv(&[])?)?;
    }
    let h = spec.h();
    let interior = sol.link_rates.get(1..h - 1).map(<[f64]>::to_vec).unwrap_or_default();
    let mut t = Table::new(&["state", "occupancy", "probability"]);
    let mut s = vec![0u32; h - 1];
    for (k, p) in sol.stationary.pi.iter().enumerate() {
        linenet::model::state_at0(k, spec.buffers(), &mut s);
        let occ: Vec<String> = s.iter().map(u32::to_string).collect();
        t.push(vec![k.to_string(), occ.join(" "), num(*p)]);
    }
    let result = json!({
        "capacity": sol.capacity,
        "states": sol.states,
        "residual": sol.stationary.residual,
        "iterations": sol.stationary.iterations,
        "link_rates": sol.link_rates,
        "flow_crosscheck": interior,
        "min_cut": spec.min_cut(),
    });
    let config = json!({ "spec": spec_json(&spec), "options": opts });
    Ok(Report::new("exact", config, result)?.with_table(t))
}

fn cmd_bounds(cli: &Cli, state_cap: Option<usize>) -> Result<Report, CliError> {
    let spec = load_spec(cli.spec.as_deref())?;
    let opts = chain_options(cli, state_cap)?;
    let b = amc::bounds(&spec, &opts)?;
    let sandwiched = b.is_sandwiched(1e-9);
    let mut result = serde_json::to_value(&b)?;
    result["sandwiched"] = json!(sandwiched);
    result["upper_buffers"] = json!(spec.prefix_summed().buffers());
    let config = json!({ "spec": spec_json(&spec), "options": opts });
    Ok(Report::new("bounds", config, result)?)
}

fn rbie_table(sol: &rbie::RateSolution, little: &delay::LittleDelay) -> Table {
    let mut t = Table::new(&["node", "rate", "blocking", "mean_occupancy", "delay_contribution"]);
    let occ = sol.mean_occupancy();
    for i in 0..sol.r.len() {
        t.push(vec![
            (i + 1).to_string(),
            num(sol.r[i]),
            num(sol.pb[i]),
            occ.get(i).map(|v| num(*v)).unwrap_or_default(),
            little.per_node.get(i).map(|v| num(*v)).unwrap_or_default(),
        ]);
    }
    t
}

fn cmd_rbie(cli: &Cli) -> Result<Report, CliError> {
    let spec = load_spec(cli.spec.as_deref())?;
    let opts = rbie_options(cli)?;
    let sol = rbie::solve_with(&spec, &opts)?;
    let capacity = rbie::capacity(&sol)?;
    let little = delay::mean_delay_little(&sol, &spec);
    let result = json!({
        "capacity": capacity,
        "r": sol.r,
        "pb": sol.pb,
        "phi": sol.phi,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "flow_residual": sol.flow_residual(),
        "mean_delay_little": little.mean,
        "delay_per_node": little.per_node,
    });
    let config = json!({ "spec": spec_json(&spec), "options": opts });
    Ok(Report::new("rbie", config, result)?.with_table(rbie_table(&sol, &little)))
}

fn cmd_dbie(cli: &Cli, precision: PrecisionArg, no_perturb: bool) -> Result<Report, CliError> {
    let spec = load_spec(cli.spec.as_deref())?;
    let opts = dbie_options(cli, precision, no_perturb)?;
    let sol = dbie::solve_with(&spec, &opts)?;
    for n in &sol.notes {
        eprintln!("note: {n}");
    }
    let capacity = dbie::capacity(&sol)?;
    let mut t = Table::new(&["node", "blocking", "mean_interarrival", "alpha"]);
    for i in 0..sol.pb.len() {
        t.push(vec![
            (i + 1).to_string(),
            num(sol.pb[i]),
            sol.mean_interarrival.get(i).map(|v| num(*v)).unwrap_or_default(),
            sol.alpha.get(i).map(|v| num(*v)).unwrap_or_default(),
        ]);
    }
    let result = json!({
        "capacity": capacity,
        "pb": sol.pb,
        "alpha": sol.alpha,
        "mean_interarrival": sol.mean_interarrival,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "eps_used": sol.eps_used,
        "precision": sol.precision,
        "max_weight": sol.max_weight,
        "notes": sol.notes,
    });
    let config = json!({ "spec": spec_json(&spec), "options": opts });
    Ok(Report::new("dbie", config, result)?.with_table(t))
}

fn cmd_delay(cli: &Cli, estimate: Estimate, include_source: bool) -> Result<Report, CliError> {
    let spec = load_spec(cli.spec.as_deref())?;
    let rb = rbie::solve_with(&spec, &rbie_options(cli)?)?;
    let little = delay::mean_delay_little(&rb, &spec);
    let inputs = match estimate {
        Estimate::Rbie => delay::psi_rho_from_rbie(&rb, &spec)?,
        Estimate::Dbie => {
            let d = dbie::solve_with(&spec, &dbie_options(cli, PrecisionArg::Extended, false)?)?;
            delay::psi_rho_from_dbie(&d, &spec)?
        }
    };
    let p = delay::delay_profile(&spec, &inputs, include_source)?;
    let mut t = Table::new(&["delay_epochs", "probability", "cumulative"]);
    for (k, pr, c) in p.rows() {
        t.push(vec![k.to_string(), num(pr), num(c)]);
    }
    let result = json!({
        "mean": p.mean,
        "variance": p.variance,
        "tail_mass_dropped": p.tail_mass_dropped,
        "node_means": p.node_means,
        "mean_delay_little": little.mean,
        "rho": inputs.rho,
        "eps_eff": inputs.eps_eff,
        "pmf": p.pmf,
    });
    let config = json!({ "spec": spec_json(&spec), "estimate": estimate, "include_source": include_source });
    Ok(Report::new("delay", config, result)?.with_table(t))
}

fn cmd_simulate(cli: &Cli, warmup: Option<u64>, track_delay: bool, trials: u64) -> Result<Report, CliError> {
    let spec = load_spec(cli.spec.as_deref())?;
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let cfg = SimConfig {
        warmup,
        track_delay,
        state_sample_interval: None,
        ..SimConfig::new(cli.epochs.unwrap_or(DEFAULT_EPOCHS), cli.seed)
    };
    let runs = sim::simulate_trials(&spec, &cfg, trials)?;
    let mut t = Table::new(&["stream", "throughput", "stderr", "delay_mean", "delivered"]);
    for r in &runs {
        t.push(vec![
            r.stream.to_string(),
            num(r.throughput),
            num(r.throughput_stderr),
            opt(r.delay.as_ref().map(|d| d.mean)),
            r.packets_delivered.to_string(),
        ]);
    }
    let mean = runs.iter().map(|r| r.throughput).sum::<f64>() / runs.len() as f64;
    let result = json!({ "mean_throughput": mean, "runs": runs });
    let config = json!({
        "spec": spec_json(&spec),
        "epochs": cfg.epochs,
        "warmup": cfg.resolved_warmup(),
        "seed": cfg.seed,
        "trials": trials,
        "rng": "ChaCha8, stream = trial index",
        "track_delay": track_delay,
    });
    Ok(Report::new("simulate", config, result)?.with_table(t))
}

fn cmd_netcod(cli: &Cli, qs: &[u32], warmup: Option<u64>, transitions: bool) -> Result<Report, CliError> {
    let spec = load_spec(cli.spec.as_deref())?;
    let fields: Vec<FieldSpec> = qs.iter().map(|&q| FieldSpec::new(q)).collect::<Result<_, _>>()?;
    let epochs = cli.epochs.unwrap_or(DEFAULT_EPOCHS);
    let warmup = warmup.unwrap_or_else(|| (epochs / 100).clamp(1, 10_000));
    let stats = netcod::rate_vs_q(&spec, &fields, epochs, warmup, cli.seed)?;
    let exact = match emc::capacity_exact(&spec, 1e-12) {
        Ok(c) => Some(c),
        Err(linenet::Error::CapacityExceeded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let comparisons = if transitions {
        fields
            .iter()
            .map(|f| netcod::eta_transition_comparison(&spec, *f, epochs, cli.seed))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let mut t = Table::new(&["q", "rate", "stderr", "exact_feedback_capacity"]);
    for s in &stats {
        t.push(vec![s.q.to_string(), num(s.rate), num(s.rate_stderr), opt(exact)]);
    }
    let result = json!({ "exact_feedback_capacity": exact, "runs": stats, "transitions": comparisons });
    let config = json!({ "spec": spec_json(&spec), "q": qs, "epochs": epochs, "warmup": warmup, "seed": cli.seed });
    Ok(Report::new("netcod", config, result)?.with_table(t))
}

pub struct ContinuousRow {
    pub tau: f64,
    pub exact: Option<f64>,
    pub rbie: f64,
    pub dbie: Option<f64>,
}

pub fn continuous_row(lambdas: &[f64], buffers: &[u32], tau: f64, state_cap: usize) -> Result<ContinuousRow, CliError> {
    let c = ContinuousSpec { lambdas: lambdas.to_vec(), buffers: buffers.to_vec(), tau };
    let d = sim::discretize(&c)?;
    let opts = ChainOptions { state_cap, ..ChainOptions::default() };
    let exact = match emc::solve_exact(&d.spec, &opts) {
        Ok(s) => Some(s.capacity * d.rate_scale),
        Err(linenet::Error::CapacityExceeded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let rb = rbie::capacity(&rbie::solve_with(&d.spec, &rbie::RbieOptions::default())?)? * d.rate_scale;
    let db = dbie::solve_with(&d.spec, &dbie::DbieOptions::default())
        .and_then(|s| dbie::capacity(&s))
        .ok()
        .map(|v| v * d.rate_scale);
    Ok(ContinuousRow { tau, exact, rbie: rb, dbie: db })
}

fn cmd_continuous(lambdas: &[f64], buffers: &[u32], taus: &[f64]) -> Result<Report, CliError> {
    let cap = emc::DEFAULT_STATE_CAP;
    let mut t = Table::new(&["tau", "exact", "rbie", "dbie"]);
    let mut rows = Vec::new();
    for &tau in taus {
        let r = continuous_row(lambdas, buffers, tau, cap)?;
        t.push(vec![num(r.tau), opt(r.exact), num(r.rbie), opt(r.dbie)]);
        rows.push(json!({ "tau": r.tau, "exact": r.exact, "rbie": r.rbie, "dbie": r.dbie }));
    }
    let config = json!({ "lambdas": lambdas, "buffers": buffers, "tau": taus, "units": "packets/s" });
    Ok(Report::new("continuous", config, json!({ "rows": rows }))?.with_table(t))
}

fn cmd_allocate(
    cli: &Cli,
    eps: Option<&[f64]>,
    budget: u32,
    objective: ObjectiveArg,
    floor: Option<f64>,
    method: MethodArg,
) -> Result<Report, CliError> {
    let eps: Vec<f64> = match eps {
        Some(e) => e.to_vec(),
        None => load_spec(cli.spec.as_deref())?.eps().to_vec(),
    };
    let obj = match (objective, floor) {
        (ObjectiveArg::MaxThroughput, _) => Objective::MaxThroughput,
        (ObjectiveArg::MinDelay, Some(floor)) => Objective::MinDelay { floor },
        (ObjectiveArg::MinDelay, None) => return Err(CliError::Usage("--objective min-delay needs --floor".into())),
    };
    let method = match method {
        MethodArg::Auto => Method::Auto,
        MethodArg::Exhaustive => Method::Exhaustive,
        MethodArg::Neighborhood => Method::Neighborhood,
    };
    let r = alloc::allocate(&eps, budget, obj, method)?;
    let mut t = Table::new(&["rank", "buffers", "rbie_throughput", "little_delay", "dbie", "exact"]);
    for (k, c) in r.top.iter().enumerate() {
        let rs = r.rescored.iter().find(|x| x.buffers == c.buffers);
        let b: Vec<String> = c.buffers.iter().map(u32::to_string).collect();
        t.push(vec![
            (k + 1).to_string(),
            b.join(" "),
            num(c.throughput),
            num(c.delay),
            opt(rs.and_then(|x| x.dbie)),
            opt(rs.and_then(|x| x.exact)),
        ]);
    }
    let config = json!({ "eps": eps, "budget": budget, "objective": obj, "method": method });
    Ok(Report::new("allocate", config, &r)?.with_table(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_and_file_specs() {
        let s = load_spec(Some(r#"{"eps":[0.5,0.5],"buffers":[2]}"#)).unwrap();
        assert_eq!(s.buffers(), &[2]);
        let e = load_spec(Some(r#"{"eps":[0.5,1.5],"buffers":[2]}"#)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = load_spec(Some("/nonexistent/net.json")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = load_spec(Some("{not json")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(linenet::Error::CapacityExceeded { states: 10, cap: 1 }).exit_code(), 4);
        assert_eq!(CliError::from(linenet::Error::Convergence { iterations: 1, residual: 1.0 }).exit_code(), 3);
        assert_eq!(CliError::from(linenet::Error::StepTooCoarse(2.0)).exit_code(), 2);
    }

    #[test]
    fn continuous_row_scales() {
        let r = continuous_row(&[2.0, 3.0], &[2], 0.01, 1000).unwrap();
        // Two hops: all three agree, and the rate sits below the service rate.
        let e = r.exact.unwrap();
        assert!((r.rbie - e).abs() < 1e-6 && (r.dbie.unwrap() - e).abs() < 1e-6);
        assert!(e < 2.0 && e > 1.0);
    }
}
