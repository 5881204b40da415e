mod config;
mod record;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use endosaa::instance_gen::{generate_instance, load_cities};
use endosaa::ndfpp::{
    build_dep_selection, compute_eev, compute_vss, estimate_solution_value, scenario_count, solution_value, vss_ratio, Decision, EvOptions, NdfppInstance,
    NdfppSaa, Variant,
};
use endosaa::saa::{run_saa, SaaConfig};
use endosaa::solver::{backend_from_name, MilpSolver, SolveParams};
use endosaa::transforms::DEFAULT_EPSILON;

use config::FileConfig;
use record::{aggregate, write_record_csv, Method, SolveRecord};

#[derive(Parser, Debug)]
#[command(name = "endosaa", version, about = "SAA for two-stage stochastic MIPs with decision-dependent uncertainty")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate NDFPP instances from a cities CSV.
    Generate(GenerateArgs),
    /// Solve or evaluate an instance.
    Solve(SolveArgs),
    /// Aggregate solve records into a table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Cities CSV (columns city,state_id,lat,lng,population,home_value).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Keep the largest cities until this many nodes remain.
    #[arg(long, conflicts_with = "threshold")]
    nodes: Option<usize>,
    /// Population threshold (inclusive).
    #[arg(long)]
    threshold: Option<u64>,
    #[arg(long)]
    facilities: Option<usize>,
    /// Highest capacity level W.
    #[arg(long = "W")]
    levels: Option<u32>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed range such as `0..4` (inclusive) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Output file, or directory when several seeds are generated.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, default_value = "selection")]
    variant: Variant,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "Nprime")]
    n_prime: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds per MILP solve.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    mip_gap: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Use exact evaluation of v(x) when the support is enumerable.
    #[arg(long)]
    exact_eval: bool,
    /// Decision JSON for `evaluate`, or x̄ for `vss` (skips the SAA run).
    #[arg(long)]
    decision: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Solve records (JSON).
    #[arg(required = true)]
    records: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl clap::ValueEnum for Method {
    fn value_variants<'a>() -> &'a [Self] {
        &[Method::Saa, Method::Dep, Method::Ev, Method::Evaluate, Method::Vss]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Method::Saa => "saa",
            Method::Dep => "dep",
            Method::Ev => "ev",
            Method::Evaluate => "evaluate",
            Method::Vss => "vss",
        }))
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => cmd_generate(&cfg, a),
        Command::Solve(a) => cmd_solve(&cfg, a),
        Command::Report(a) => cmd_report(a),
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {spec}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().with_context(|| format!("bad seed `{s}`"))).collect()
}

fn cmd_generate(cfg: &FileConfig, a: GenerateArgs) -> Result<()> {
    let dataset = a.dataset.or_else(|| cfg.generate.dataset.clone()).ok_or_else(|| anyhow!("--dataset (or generate.dataset in the config) is required"))?;
    let mut gen = cfg.generate.params.clone();
    if let Some(f) = a.facilities {
        gen.facility_count = f;
    }
    if let Some(w) = a.levels {
        gen.levels = w;
    }
    let cities = load_cities(&dataset, &gen.states).with_context(|| format!("loading {}", dataset.display()))?;
    if let Some(t) = a.threshold {
        gen.population_threshold = t;
    }
    if let Some(n) = a.nodes {
        let mut pops: Vec<u64> = cities.iter().map(|c| c.population).collect();
        pops.sort_unstable_by(|x, y| y.cmp(x));
        gen.population_threshold = *pops.get(n.saturating_sub(1)).ok_or_else(|| anyhow!("dataset has only {} cities", pops.len()))?;
    }
    let seeds = match (a.seeds, a.seed) {
        (Some(s), _) => parse_seeds(&s)?,
        (None, Some(s)) => vec![s],
        (None, None) => vec![gen.seed],
    };
    let backend = backend_from_name(&cfg.backend())?;
    let many = seeds.len() > 1;
    if many {
        fs::create_dir_all(&a.out)?;
    }
    for seed in seeds {
        gen.seed = seed;
        let inst = generate_instance(&cities, &gen, backend.as_ref())?;
        let path = if many { a.out.join(format!("{}.json", inst.name)) } else { a.out.clone() };
        fs::write(&path, inst.to_json()).with_context(|| format!("writing {}", path.display()))?;
        info!("wrote {} ({} nodes, {} edges)", path.display(), inst.nodes.len(), inst.edges.len());
        println!("{}", path.display());
    }
    Ok(())
}

fn read_instance(path: &Path) -> Result<NdfppInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(NdfppInstance::from_json(&text)?)
}

fn read_decision(path: &Path, inst: &NdfppInstance) -> Result<Decision> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    // Accept a bare decision or any record carrying one.
    let candidate = ["x_bar", "decision", "x_hat"].iter().find_map(|k| v.get("result").and_then(|r| r.get(*k)).or_else(|| v.get(*k))).unwrap_or(&v);
    let d: Decision = serde_json::from_value(candidate.clone()).context("decision JSON needs `protection` and `open_edges`")?;
    if d.protection.len() != inst.num_facilities() || d.open_edges.len() != inst.edges.len() {
        bail!("decision does not match the instance dimensions");
    }
    Ok(d)
}

struct Settings {
    saa: SaaConfig,
    epsilon: f64,
    ev: EvOptions,
}

fn settings(cfg: &FileConfig, a: &SolveArgs) -> Result<Settings> {
    let s = &cfg.saa;
    let defaults = SaaConfig::default();
    let mut params = SolveParams::default();
    if let Some(t) = a.time_limit.or(cfg.solver.time_limit) {
        params.time_limit_s = t;
    }
    if let Some(g) = a.mip_gap.or(cfg.solver.mip_gap) {
        params.mip_gap_tol = g;
    }
    if let Some(t) = cfg.solver.threads {
        params.threads = t;
    }
    let saa = SaaConfig {
        m: a.m.or(s.m).unwrap_or(defaults.m),
        n: a.n.or(s.n).unwrap_or(defaults.n),
        n_prime: a.n_prime.or(s.n_prime).unwrap_or(defaults.n_prime),
        alpha: a.alpha.or(s.alpha).unwrap_or(defaults.alpha),
        base_seed: a.seed.or(s.seed).unwrap_or(defaults.base_seed),
        solve_params: params,
        jobs: a.jobs.or(s.jobs).unwrap_or(0),
        exact_eval: a.exact_eval || s.exact_eval.unwrap_or(false),
    };
    let ev = EvOptions { n_prime: saa.n_prime, seed: saa.base_seed, ..EvOptions::default() };
    Ok(Settings { epsilon: a.epsilon.or(s.epsilon).unwrap_or(DEFAULT_EPSILON), saa, ev })
}

fn cmd_solve(cfg: &FileConfig, a: SolveArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let st = settings(cfg, &a)?;
    let solver = backend_from_name(&cfg.backend())?;
    let start = Instant::now();
    let result = match a.method {
        Method::Saa => {
            let rep = solve_saa(&inst, a.variant, &st, solver.as_ref())?;
            let x_bar = Decision::from_assignment(&inst, &rep.x_bar)?;
            let mut v = serde_json::to_value(&rep)?;
            v["x_bar"] = serde_json::to_value(&x_bar)?;
            v
        }
        Method::Dep => {
            if a.variant != Variant::Selection {
                bail!("the deterministic equivalent is implemented for the selection variant only");
            }
            let b = build_dep_selection(&inst)?;
            let r = solver.solve(&b.model, &st.saa.solve_params)?;
            if !r.status.has_solution() {
                bail!("DEP solve ended with status {:?}", r.status);
            }
            let dec = Decision::from_assignment(&inst, &r.assignment.restrict(&b.first.all_vars(), true))?;
            json!({ "objective": r.objective, "bound": r.bound, "status": r.status, "decision": dec })
        }
        Method::Ev => {
            let ev = compute_eev(&inst, a.variant, solver.as_ref(), &st.saa.solve_params, &st.ev)?;
            serde_json::to_value(&ev)?
        }
        Method::Evaluate => {
            let path = a.decision.as_deref().ok_or_else(|| anyhow!("--decision is required for evaluate"))?;
            let dec = read_decision(path, &inst)?;
            let exact = a.variant.is_enumerable() && st.saa.exact_eval;
            let (value, var) = if exact { (solution_value(&inst, a.variant, &dec, &st.ev)?, 0.0) } else { estimate_solution_value(&inst, a.variant, &dec, st.ev.seed, st.ev.n_prime)? };
            json!({ "value": value, "variance_of_mean": var, "exact": exact, "decision": dec })
        }
        Method::Vss => {
            let (x_bar, saa) = match a.decision.as_deref() {
                Some(p) => (read_decision(p, &inst)?, serde_json::Value::Null),
                None => {
                    let rep = solve_saa(&inst, a.variant, &st, solver.as_ref())?;
                    (Decision::from_assignment(&inst, &rep.x_bar)?, json!({ "gap_percent": rep.gap_percent, "v_bar_nm": rep.v_bar_nm, "v_hat_nprime": rep.v_hat_nprime }))
                }
            };
            let ev = compute_eev(&inst, a.variant, solver.as_ref(), &st.saa.solve_params, &st.ev)?;
            let vss1 = compute_vss(&inst, a.variant, &ev.x_hat, &x_bar, &st.ev)?;
            let (eev2, _) = estimate_solution_value(&inst, a.variant, &ev.x_hat, st.ev.seed, st.ev.n_prime)?;
            let (v2, _) = estimate_solution_value(&inst, a.variant, &x_bar, st.ev.seed, st.ev.n_prime)?;
            json!({
                "eev": vss1.eev,
                "v_x_bar": vss1.v_x_bar,
                "vss1": vss1.vss,
                "eev_sampled": eev2,
                "v_x_bar_sampled": v2,
                "vss2": vss_ratio(eev2, v2),
                "ev_objective": ev.ev_objective,
                "x_hat": ev.x_hat,
                "x_bar": x_bar,
                "saa": saa,
            })
        }
    };
    let rec = SolveRecord {
        method: a.method,
        instance: inst.name.clone(),
        variant: a.variant.to_string(),
        seed: st.saa.base_seed,
        nodes: inst.nodes.len(),
        facilities: inst.num_facilities(),
        levels: inst.levels,
        scenario_count: Some(scenario_count(&inst) as f64).filter(|k| k.is_finite() && *k < u128::MAX as f64),
        wall_time_s: start.elapsed().as_secs_f64(),
        result,
    };
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    match a.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rec)?)?,
        Format::Csv => write_record_csv(out, &rec)?,
    }
    Ok(())
}

fn solve_saa(inst: &NdfppInstance, variant: Variant, st: &Settings, solver: &dyn MilpSolver) -> Result<endosaa::SaaReport> {
    let problem = NdfppSaa::new(inst, variant, st.epsilon);
    Ok(run_saa(&problem, solver, &st.saa)?)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let records = a
        .records
        .iter()
        .map(|p| -> Result<SolveRecord> {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("{} is not a solve record", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    match &a.out {
        Some(p) => aggregate(&records, fs::File::create(p)?),
        None => aggregate(&records, std::io::stdout().lock()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("0..4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seeds("3, 7").unwrap(), vec![3, 7]);
        assert!(parse_seeds("4..0").is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
