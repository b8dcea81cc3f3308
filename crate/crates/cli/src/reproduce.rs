//! Plot-ready sweep datasets.

use std::path::PathBuf;

use linenet::emc::ChainOptions;
use linenet::sim::{self, SimConfig};
use linenet::{amc, dbie, delay, rbie, Error, NetworkSpec};
use rayon::prelude::*;
use serde_json::json;

use crate::commands::continuous_row;
use crate::report::{num, opt, write_text, Report, Table};
use crate::{Cli, CliError};

/// Chains larger than this are skipped (columns left empty).
pub const DEFAULT_STATE_CAP: usize = 2_000_000;
const DEFAULT_SIM_EPOCHS: u64 = 1_000_000;

pub const CATALOGUE: [&str; 7] = [
    "capacity-vs-hops",
    "capacity-vs-memory",
    "capacity-vs-eps",
    "delay-profiles",
    "buffer-sweep",
    "occupancy",
    "tau-sweep",
];

struct Ctx {
    dir: PathBuf,
    state_cap: usize,
    epochs: u64,
    seed: u64,
}

pub fn run(cli: &Cli, figure: &str, state_cap: usize) -> Result<(), CliError> {
    let ids: Vec<&str> = if figure == "all" {
        CATALOGUE.to_vec()
    } else if CATALOGUE.contains(&figure) {
        vec![figure]
    } else {
        return Err(CliError::Usage(format!("unknown figure `{figure}`; expected one of {CATALOGUE:?} or all")));
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io { path: dir.clone(), source: e })?;
    let ctx = Ctx { dir, state_cap, epochs: cli.epochs.unwrap_or(DEFAULT_SIM_EPOCHS), seed: cli.seed };
    let mut written = Vec::new();
    for id in &ids {
        let config = json!({ "figure": id, "state_cap": ctx.state_cap, "sim_epochs": ctx.epochs, "seed": ctx.seed });
        let files = match *id {
            "capacity-vs-hops" => capacity_vs_hops(&ctx, &config)?,
            "capacity-vs-memory" => capacity_vs_memory(&ctx, &config)?,
            "capacity-vs-eps" => capacity_vs_eps(&ctx, &config)?,
            "delay-profiles" => delay_profiles(&ctx, &config)?,
            "buffer-sweep" => buffer_sweep(&ctx, &config)?,
            "occupancy" => occupancy(&ctx, &config)?,
            _ => tau_sweep(&ctx, &config)?,
        };
        written.extend(files);
    }
    let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    let report = Report::new("reproduce", json!({ "figures": ids, "state_cap": state_cap, "sim_epochs": ctx.epochs, "seed": ctx.seed }), json!({ "files": files }))?;
    write_text(None, &report.render(crate::report::Format::Json)?)
}

fn save(ctx: &Ctx, name: &str, config: &serde_json::Value, t: &Table) -> Result<PathBuf, CliError> {
    let path = ctx.dir.join(format!("{name}.csv"));
    let r = Report::new("reproduce", config.clone(), json!(null))?;
    write_text(Some(&path), &t.to_csv(&r.preamble())?)?;
    Ok(path)
}

fn capped<T>(r: linenet::Result<T>) -> Result<Option<T>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::CapacityExceeded { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// One row of the five-curve comparison.
struct Curves {
    exact: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    rbie: f64,
    dbie: Option<f64>,
    sim: f64,
    sim_stderr: f64,
}

fn curves(ctx: &Ctx, spec: &NetworkSpec, stream: u64) -> Result<Curves, CliError> {
    let opts = ChainOptions { state_cap: ctx.state_cap, ..ChainOptions::default() };
    let (lower, upper, exact) = match capped(amc::bounds(spec, &opts))? {
        Some(b) => (Some(b.lower), b.upper, b.exact),
        None => (None, None, None),
    };
    let rbie = rbie::capacity(&rbie::solve_with(spec, &rbie::RbieOptions::default())?)?;
    let dbie = dbie::solve_with(spec, &dbie::DbieOptions::default()).and_then(|s| dbie::capacity(&s)).ok();
    let st = sim::simulate(spec, &SimConfig { stream, ..SimConfig::new(ctx.epochs, ctx.seed) })?;
    Ok(Curves { exact, lower, upper, rbie, dbie, sim: st.throughput, sim_stderr: st.throughput_stderr })
}

const CURVE_HEADERS: [&str; 7] = ["exact", "lower", "upper", "rbie", "dbie", "sim", "sim_stderr"];

fn curve_cells(c: &Curves) -> Vec<String> {
    vec![opt(c.exact), opt(c.lower), opt(c.upper), num(c.rbie), opt(c.dbie), num(c.sim), num(c.sim_stderr)]
}

fn sweep(ctx: &Ctx, specs: Vec<(Vec<String>, NetworkSpec)>, lead: &[&str], name: &str, config: &serde_json::Value) -> Result<Vec<PathBuf>, CliError> {
    let rows: Vec<Vec<String>> = specs
        .par_iter()
        .enumerate()
        .map(|(k, (cells, spec))| {
            let c = curves(ctx, spec, k as u64)?;
            let mut row = cells.clone();
            row.push(num(spec.min_cut()));
            row.extend(curve_cells(&c));
            Ok(row)
        })
        .collect::<Result<_, CliError>>()?;
    let mut headers: Vec<&str> = lead.to_vec();
    headers.push("min_cut");
    headers.extend(CURVE_HEADERS);
    let mut t = Table::new(&headers);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(vec![save(ctx, name, config, &t)?])
}

fn capacity_vs_hops(ctx: &Ctx, config: &serde_json::Value) -> Result<Vec<PathBuf>, CliError> {
    let mut specs = Vec::new();
    for eps in [0.25, 0.5] {
        for h in 2..=10usize {
            specs.push((vec![num(eps), h.to_string()], NetworkSpec::new(vec![eps; h], vec![5; h - 1])?));
        }
    }
    sweep(ctx, specs, &["eps", "h"], "capacity-vs-hops", config)
}

fn capacity_vs_memory(ctx: &Ctx, config: &serde_json::Value) -> Result<Vec<PathBuf>, CliError> {
    let mut specs = Vec::new();
    for eps in [0.25, 0.5] {
        for m in 1..=15u32 {
            specs.push((vec![num(eps), m.to_string()], NetworkSpec::new(vec![eps; 5], vec![m; 4])?));
        }
    }
    sweep(ctx, specs, &["eps", "m"], "capacity-vs-memory", config)
}

fn capacity_vs_eps(ctx: &Ctx, config: &serde_json::Value) -> Result<Vec<PathBuf>, CliError> {
    let specs = (1..=10)
        .map(|k| {
            let eps = k as f64 * 0.05;
            Ok((vec![num(eps)], NetworkSpec::new(vec![eps; 5], vec![5; 4])?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let files = sweep(ctx, specs, &["eps"], "capacity-vs-eps", config)?;
    // Loss relative to the min-cut, from the exact column.
    let mut t = Table::new(&["eps", "exact", "loss_percent"]);
    for k in 1..=10 {
        let eps = k as f64 * 0.05;
        let spec = NetworkSpec::new(vec![eps; 5], vec![5; 4])?;
        let c = linenet::emc::capacity_exact(&spec, 1e-12)?;
        t.push(vec![num(eps), num(c), num(100.0 * (1.0 - c / (1.0 - eps)))]);
    }
    let mut all = files;
    all.push(save(ctx, "capacity-vs-eps-loss", config, &t)?);
    Ok(all)
}

fn delay_profiles(ctx: &Ctx, config: &serde_json::Value) -> Result<Vec<PathBuf>, CliError> {
    let ms = [5u32, 10, 15];
    let results = ms
        .par_iter()
        .enumerate()
        .map(|(k, &m)| {
            let spec = NetworkSpec::new(vec![0.25; 8], vec![m; 7])?;
            let db = dbie::solve_with(&spec, &dbie::DbieOptions::default())?;
            let pd = delay::delay_profile(&spec, &delay::psi_rho_from_dbie(&db, &spec)?, false)?;
            let rb = rbie::solve_with(&spec, &rbie::RbieOptions::default())?;
            let pr = delay::delay_profile(&spec, &delay::psi_rho_from_rbie(&rb, &spec)?, false)?;
            let little = delay::mean_delay_little(&rb, &spec).mean;
            let st = sim::simulate(
                &spec,
                &SimConfig { track_delay: true, stream: k as u64, ..SimConfig::new(ctx.epochs, ctx.seed) },
            )?;
            Ok((m, pd, pr, little, st.delay.expect("tracked")))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut pmf = Table::new(&["m", "delay_epochs", "dbie_probability", "dbie_cumulative", "rbie_probability", "sim_probability"]);
    let mut summary = Table::new(&["m", "dbie_mean", "dbie_variance", "rbie_mean", "little_mean", "sim_mean", "sim_variance", "ks_sim_vs_dbie"]);
    for (m, pd, pr, little, sd) in &results {
        let n = sd.count.max(1) as f64;
        for (k, p, c) in pd.rows() {
            pmf.push(vec![
                m.to_string(),
                k.to_string(),
                num(p),
                num(c),
                num(*pr.pmf.get(k).unwrap_or(&0.0)),
                num(*sd.histogram.get(k).unwrap_or(&0) as f64 / n),
            ]);
        }
        summary.push(vec![
            m.to_string(),
            num(pd.mean),
            num(pd.variance),
            num(pr.mean),
            num(*little),
            num(sd.mean),
            num(sd.variance),
            num(sd.ks_distance(&pd.pmf)),
        ]);
    }
    Ok(vec![save(ctx, "delay-profiles", config, &pmf)?, save(ctx, "delay-summary", config, &summary)?])
}

const ALLOC_EPS: [f64; 4] = [0.3, 0.5, 0.5, 0.2];

fn buffer_sweep(ctx: &Ctx, config: &serde_json::Value) -> Result<Vec<PathBuf>, CliError> {
    let mut t = Table::new(&["node", "m", "throughput", "delay", "contribution_1", "contribution_2", "contribution_3"]);
    for node in 0..3 {
        for m in 1..=20u32 {
            let mut b = vec![20u32; 3];
            b[node] = m;
            let spec = NetworkSpec::new(ALLOC_EPS.to_vec(), b)?;
            let sol = rbie::solve_with(&spec, &rbie::RbieOptions::default())?;
            let l = delay::mean_delay_little(&sol, &spec);
            let mut row = vec![(node + 1).to_string(), m.to_string(), num(rbie::capacity(&sol)?), num(l.mean)];
            row.extend(l.per_node.iter().map(|v| num(*v)));
            t.push(row);
        }
    }
    Ok(vec![save(ctx, "buffer-sweep", config, &t)?])
}

fn occupancy(ctx: &Ctx, config: &serde_json::Value) -> Result<Vec<PathBuf>, CliError> {
    let mut t = Table::new(&["allocation", "node", "k", "probability"]);
    for b in [vec![5u32, 21, 4], vec![4, 20, 6], vec![15, 15, 15]] {
        let label: Vec<String> = b.iter().map(u32::to_string).collect();
        let spec = NetworkSpec::new(ALLOC_EPS.to_vec(), b.clone())?;
        let sol = rbie::solve_with(&spec, &rbie::RbieOptions::default())?;
        for (i, phi) in sol.phi.iter().enumerate() {
            for (k, p) in phi.iter().enumerate() {
                t.push(vec![label.join(" "), (i + 1).to_string(), k.to_string(), num(*p)]);
            }
        }
    }
    Ok(vec![save(ctx, "occupancy", config, &t)?])
}

fn tau_sweep(ctx: &Ctx, config: &serde_json::Value) -> Result<Vec<PathBuf>, CliError> {
    let lambdas = vec![2.0; 4];
    let mut jobs = Vec::new();
    for m in 1..=10u32 {
        for tau in [0.25, 0.125, 0.0625, 1.0 / 64.0] {
            jobs.push((m, tau));
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(m, tau)| {
            let r = continuous_row(&lambdas, &[m; 3], tau, ctx.state_cap)?;
            Ok(vec![m.to_string(), num(tau), opt(r.exact), num(r.rbie), opt(r.dbie)])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut t = Table::new(&["m", "tau", "exact", "rbie", "dbie"]);
    rows.into_iter().for_each(|r| t.push(r));
    let mut files = vec![save(ctx, "tau-sweep", config, &t)?];
    let lam = [10.0, 3.0, 2.99];
    let mut bridge = Table::new(&["tau", "exact", "rbie", "dbie"]);
    // Steps of 1/(k λmax); k = 100 is τ = 1 ms.
    for k in [4.0, 8.0, 16.0, 64.0, 100.0] {
        let tau = 1.0 / (k * 10.0);
        let r = continuous_row(&lam, &[3, 3], tau, ctx.state_cap)?;
        bridge.push(vec![num(tau), opt(r.exact), num(r.rbie), opt(r.dbie)]);
    }
    files.push(save(ctx, "tau-bridge", config, &bridge)?);
    Ok(files)
}
