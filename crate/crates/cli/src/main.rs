use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use streamflow::cloud::CloudCatalog;
use streamflow::events::{Direction, Range};
use streamflow::experiment::{grid_csv, run_grid, ExperimentConfig, RepOutcome};
use streamflow::ga::GaError;
use streamflow::greedy::GreedyError;
use streamflow::problem::Problem;
use streamflow::scenario::{run_scenario, EventsConfig, ScenarioConfig, ScenarioError};
use streamflow::sim::report::{read_summary, write_report, write_timing, MeanReport};
use streamflow::sim::{SchedulerKind, SimError};
use streamflow::workflow::{generate, GeneratorParams, Size, Structure, StreamWorkflow};

const LOWER_BOUND_DIR: &str = "lower-bound";

#[derive(Parser)]
#[command(name = "streamflow", version, about = "Multi-cloud stream workflow scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a workflow file.
    Generate {
        structure: Structure,
        size: Size,
        #[arg(long, env = "STREAMFLOW_SEED", default_value_t = 0)]
        seed: u64,
        /// Catalog whose cloud ids the services are placed on.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Initial rate of every source, in units.
        #[arg(long)]
        source_units: Option<u64>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write per-rep and mean reports.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Also write wall-clock handler timings.
        #[arg(long)]
        timing: bool,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Put the mean totals of report directories side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
    },
    /// Run the generated-workflow grid and print one row per cell.
    Experiment {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a workflow (.json), catalog or scenario (.toml) file.
    Validate { path: PathBuf },
}

#[derive(Args)]
struct Overrides {
    #[arg(long, env = "STREAMFLOW_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// adaptive, ga-replan, baseline or all.
    #[arg(long)]
    scheduler: Option<String>,
    #[arg(long)]
    range: Option<Range>,
    #[arg(long)]
    direction: Option<Direction>,
}

impl Overrides {
    fn schedulers(&self) -> Result<Option<Vec<SchedulerKind>>, Failure> {
        match self.scheduler.as_deref() {
            None => Ok(None),
            Some("all") => Ok(Some(SchedulerKind::ALL.to_vec())),
            Some(s) => s
                .parse::<SchedulerKind>()
                .map(|k| Some(vec![k]))
                .map_err(|e| Failure::Config(anyhow!("--scheduler: {e}"))),
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Unschedulable(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Unschedulable(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Unschedulable(e) | Failure::Other(e) => e,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Ga(GaError::Unschedulable(_)) | SimError::Scheduler(GreedyError::Unschedulable(_)) => {
                Failure::Unschedulable(e.into())
            }
            SimError::Scheduler(GreedyError::Cost(streamflow::cost::CostError::OfferTooSmall { .. })) => {
                Failure::Unschedulable(e.into())
            }
            SimError::Plan(_) => Failure::Other(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

fn io(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Other(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            structure,
            size,
            seed,
            catalog,
            source_units,
            out,
        } => cmd_generate(structure, size, seed, catalog.as_deref(), source_units, out.as_deref()),
        Command::Simulate {
            scenario,
            overrides,
            timing,
            out,
        } => cmd_simulate(&scenario, &overrides, timing, &out),
        Command::Compare { dirs } => cmd_compare(&dirs),
        Command::Experiment {
            overrides,
            horizon,
            out,
        } => cmd_experiment(&overrides, horizon, out.as_deref()),
        Command::Validate { path } => cmd_validate(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn load_catalog(path: Option<&Path>) -> Result<CloudCatalog<f64>, Failure> {
    match path {
        Some(p) => CloudCatalog::load(p).map_err(|e| Failure::Config(e.into())),
        None => Ok(CloudCatalog::default_catalog()),
    }
}

fn cmd_generate(
    structure: Structure,
    size: Size,
    seed: u64,
    catalog: Option<&Path>,
    source_units: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let catalog = load_catalog(catalog)?;
    let mut params = GeneratorParams::default();
    if let Some(u) = source_units {
        params.source_rate_units = u;
    }
    let w: StreamWorkflow<f64> = generate(structure, size, &catalog.cloud_ids(), &params, seed);
    let text = w.to_json() + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(io)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn resolve_scenario(path: &Path, o: &Overrides) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(r) = o.reps {
        cfg.reps = r;
    }
    if let Some(k) = o.schedulers()? {
        cfg.schedulers = k;
    }
    if o.range.is_some() || o.direction.is_some() {
        let EventsConfig::Spec(spec) = &mut cfg.events else {
            return Err(Failure::Config(anyhow!(
                "--range and --direction apply to drawn events, not to an explicit event list"
            )));
        };
        if let Some(r) = o.range {
            spec.range = r;
        }
        if let Some(d) = o.direction {
            spec.direction = d;
        }
    }
    cfg.check()?;
    Ok(cfg)
}

fn cmd_simulate(path: &Path, o: &Overrides, timing: bool, out: &Path) -> Result<(), Failure> {
    let cfg = resolve_scenario(path, o)?;
    let catalog = cfg.load_catalog::<f64>()?;
    let w = cfg.load_workflow(&catalog)?;
    let p = Problem::new(&w, &catalog).map_err(|e| Failure::Config(e.into()))?;
    let outcomes = run_scenario(&p, &cfg)?;

    let scenario = serde_json::to_value(&cfg).map_err(io)?;
    let root = out.join(w.name());
    for kind in &cfg.schedulers {
        let dir = root.join(kind.as_str());
        let mut reports = Vec::new();
        for o in &outcomes {
            let r = &o.reports[kind];
            let prov = provenance(&scenario, w.name(), kind.as_str(), Some(o), &cfg);
            let rep_dir = dir.join(format!("rep_{:02}", o.rep));
            write_report(&rep_dir, r, &prov).map_err(io)?;
            if timing {
                write_timing(&rep_dir, r).map_err(io)?;
            }
            reports.push(r.clone());
        }
        let mean = MeanReport::from_reports(&reports);
        let prov = provenance(&scenario, w.name(), kind.as_str(), None, &cfg);
        mean.write(&dir.join("mean"), &prov).map_err(io)?;
        println!("{}/{}: mean total {:.6}", w.name(), kind.as_str(), mean.totals.total);
    }
    write_lower_bound(&root.join(LOWER_BOUND_DIR), &outcomes, &scenario, w.name(), &cfg)?;
    Ok(())
}

fn provenance(
    scenario: &Value,
    workflow: &str,
    scheduler: &str,
    rep: Option<&RepOutcome<f64>>,
    cfg: &ScenarioConfig,
) -> Value {
    let mut v = json!({
        "tool": concat!("streamflow ", env!("CARGO_PKG_VERSION")),
        "workflow": workflow,
        "scheduler": scheduler,
        "scenario": scenario,
    });
    match rep {
        Some(o) => {
            v["rep"] = json!(o.rep);
            v["rep_seed"] = json!(cfg.rep_seed(o.rep));
            if let Some(r) = o.reports.values().next() {
                v["events"] = serde_json::to_value(&r.config.events).unwrap_or(Value::Null);
            }
        }
        None => {
            v["rep_seeds"] = json!((0..cfg.reps).map(|r| cfg.rep_seed(r)).collect::<Vec<_>>());
        }
    }
    v
}

fn write_lower_bound(
    dir: &Path,
    outcomes: &[RepOutcome<f64>],
    scenario: &Value,
    workflow: &str,
    cfg: &ScenarioConfig,
) -> Result<(), Failure> {
    let header = streamflow::sim::report::SUMMARY_HEADER;
    let write = |d: &Path, prov: &Value, exec: f64, transfer: f64| -> Result<(), Failure> {
        fs::create_dir_all(d).map_err(io)?;
        let text = format!("# {prov}\n{header}\n{exec},{transfer},{}\n", exec + transfer);
        fs::write(d.join("summary.csv"), text).map_err(io)
    };
    let n = outcomes.len().max(1) as f64;
    let (mut exec, mut transfer) = (0.0, 0.0);
    for o in outcomes {
        let prov = provenance(scenario, workflow, LOWER_BOUND_DIR, Some(o), cfg);
        write(&dir.join(format!("rep_{:02}", o.rep)), &prov, o.lower_bound.exec, o.lower_bound.transfer)?;
        exec += o.lower_bound.exec / n;
        transfer += o.lower_bound.transfer / n;
    }
    let prov = provenance(scenario, workflow, LOWER_BOUND_DIR, None, cfg);
    write(&dir.join("mean"), &prov, exec, transfer)
}

/// `(workflow, scheduler) -> mean total` for every `mean/summary.csv` under
/// `root`.
fn collect_means(root: &Path) -> Result<BTreeMap<(String, String), f64>, Failure> {
    let mut found = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).with_context(|| format!("reading {}", d.display())).map_err(Failure::Config)?;
        for e in entries {
            let path = e.map_err(io)?.path();
            if !path.is_dir() {
                continue;
            }
            let summary = path.join("summary.csv");
            if path.file_name().is_some_and(|n| n == "mean") && summary.is_file() {
                let abs = fs::canonicalize(&path).map_err(io)?;
                let name = |p: Option<&Path>| {
                    p.and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
                };
                let scheduler = abs.parent();
                let workflow = scheduler.and_then(|s| s.parent());
                let totals = read_summary(&summary).map_err(|e| Failure::Config(e.into()))?;
                found.insert((name(workflow), name(scheduler)), totals.total);
            } else {
                stack.push(path);
            }
        }
    }
    if found.is_empty() {
        return Err(Failure::Config(anyhow!("{}: no mean/summary.csv found", root.display())));
    }
    Ok(found)
}

fn cmd_compare(dirs: &[PathBuf]) -> Result<(), Failure> {
    let sets = dirs.iter().map(|d| collect_means(d)).collect::<Result<Vec<_>, _>>()?;
    println!("workflow,scheduler,report_set,total,ratio_to_first,ratio_to_lower_bound");
    let fmt_ratio = |a: f64, b: Option<f64>| match b {
        Some(b) if b > 0.0 => format!("{:.6}", a / b),
        Some(_) if a == 0.0 => "1.000000".into(),
        _ => String::new(),
    };
    for ((wf, sched), &first) in &sets[0] {
        for (dir, set) in dirs.iter().zip(&sets) {
            let Some(&total) = set.get(&(wf.clone(), sched.clone())) else {
                continue;
            };
            let lb = set.get(&(wf.clone(), LOWER_BOUND_DIR.to_string())).copied();
            println!(
                "{wf},{sched},{},{total:.6},{},{}",
                dir.display(),
                fmt_ratio(total, Some(first)),
                fmt_ratio(total, lb)
            );
        }
    }
    for (k, set) in sets.iter().enumerate().skip(1) {
        for key in set.keys().filter(|key| !sets[0].contains_key(*key)) {
            eprintln!("warning: {}/{} only in {}", key.0, key.1, dirs[k].display());
        }
    }
    Ok(())
}

fn cmd_experiment(o: &Overrides, horizon: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::default();
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(r) = o.reps {
        cfg.reps = r;
    }
    if let Some(k) = o.schedulers()? {
        cfg.schedulers = k;
    }
    if let Some(r) = o.range {
        cfg.range = r;
    }
    if let Some(d) = o.direction {
        cfg.directions = vec![d];
    }
    if let Some(h) = horizon {
        cfg.horizon = h;
    }
    if cfg.reps == 0 || cfg.horizon == 0 {
        return Err(Failure::Config(anyhow!("reps and horizon must be positive")));
    }
    let catalog = CloudCatalog::<f64>::default_catalog();
    let cells = run_grid(&catalog, &cfg)?;
    let prov = serde_json::to_string(&json!({
        "tool": concat!("streamflow ", env!("CARGO_PKG_VERSION")),
        "experiment": cfg,
    }))
    .map_err(io)?;
    let text = format!("# {prov}\n{}", grid_csv(&cells));
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(io)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let kind = if path.extension().is_some_and(|e| e == "json") {
        let w = StreamWorkflow::<f64>::from_json(&text).map_err(|e| Failure::Config(e.into()))?;
        format!("workflow {} ({} services)", w.name(), w.service_count())
    } else if text.lines().any(|l| {
        let l = l.trim_start();
        l.starts_with("[[clouds") || l.starts_with("format_version")
    }) {
        let c = CloudCatalog::<f64>::from_toml(&text).map_err(|e| Failure::Config(e.into()))?;
        format!("catalog ({} clouds)", c.cloud_count())
    } else {
        let cfg = ScenarioConfig::load(path)?;
        let catalog = cfg.load_catalog::<f64>()?;
        let w = cfg.load_workflow(&catalog)?;
        Problem::new(&w, &catalog).map_err(|e| Failure::Config(e.into()))?;
        format!("scenario for {}", w.name())
    };
    println!("ok: {kind}");
    Ok(())
}
