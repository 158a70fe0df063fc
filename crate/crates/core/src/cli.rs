//! Command-line front end: ingest, generate, solve, validate, report.
//!
//! Settings resolve as command-line flag, then config file, then default.
//! Every solve echoes its effective settings into `run_manifest.toml`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveTime;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::energy::{check_energy, read_traces, route_draws, write_traces};
use crate::grid::{demand_with_draws, limit_violations, radial_sweep, write_snapshot};
use crate::instance::{
    build_instance, clusterize, generate_synthetic, location_map_from_trips, parse_trip_records, ClusterDefaults,
    DayWindow, ProblemInstance,
};
use crate::milp::{BnbOptions, SolveStatus};
use crate::model::{assemble, solve_instance, Mode};
use crate::report::{
    emissions_report, energy_used, read_routes, read_solution, read_summary, run_summary, summarize, svg_bar_chart,
    svg_energy_chart, write_emissions, write_routes, write_solution, write_summary, EmissionFactors,
};
use crate::stochastic::{empirical_violation_rate, rate_bound, visits_from_routes, write_violations, RiskSpec};
use crate::vrp::{validate_routes_buffered, ValidationReport, Violation};
use crate::{Error, Result};

/// Process exit status per outcome class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Input = 1,
    Infeasible = 2,
    Limit = 3,
    ValidationFailed = 4,
    Internal = 5,
}

impl ExitStatus {
    fn of_error(e: &Error) -> Self {
        match e {
            Error::Instance(_) | Error::Grid(_) | Error::Io(_) | Error::Csv(_) | Error::Config(_) => ExitStatus::Input,
            _ => ExitStatus::Internal,
        }
    }

    fn of_solve(status: SolveStatus) -> Self {
        match status {
            SolveStatus::Optimal => ExitStatus::Ok,
            SolveStatus::Infeasible => ExitStatus::Infeasible,
            SolveStatus::GapLimit | SolveStatus::TimeLimit => ExitStatus::Limit,
            SolveStatus::Unbounded => ExitStatus::Internal,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "evgrid", version, about = "Electric fleet routing coupled with feeder operation")]
pub struct Cli {
    /// TOML file with default settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Aggregate trip records into an instance file.
    Ingest(IngestArgs),
    /// Write a seeded synthetic instance.
    Generate(GenerateArgs),
    /// Solve an instance and write routes, traces, grid state and a summary.
    Solve(SolveArgs),
    /// Check a routes file against an instance.
    Validate(ValidateArgs),
    /// Combine run directories into summary, emissions and charts.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory; falls back to the config file, then `EVGRID_OUT`,
    /// then `evgrid-out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub trips: PathBuf,
    /// Time of day `HH:MM-HH:MM`; the whole day by default.
    #[arg(long)]
    pub window: Option<String>,
    /// Instance providing labels, travel times, fleet, stations and grid.
    /// Without it these come from a synthetic backbone.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub vehicles: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "instance.toml")]
    pub name: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub locations: usize,
    #[arg(long)]
    pub vehicles: usize,
    /// Expected passengers in total.
    #[arg(long)]
    pub scale: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "instance.toml")]
    pub name: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Det,
    Cc,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunFlags {
    #[arg(long, value_enum)]
    pub mode: Option<ModeKind>,
    /// Risk tolerance applied to every customer.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative optimality gap.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Monte-Carlo samples for violation rates.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub flags: RunFlags,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub routes: PathBuf,
    /// Full variable vector; when given every model row is checked too.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[command(flatten)]
    pub flags: RunFlags,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directories written by `solve`.
    #[arg(long, required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value = "fleet")]
    pub fleet: String,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Settings read from `--config`.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<ModeKind>,
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub epsilon_overrides: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub gap: Option<f64>,
    pub time_limit: Option<f64>,
    pub threads: Option<usize>,
    pub node_limit: Option<usize>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub emission_factors: Option<EmissionFactors>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Effective settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub instance: PathBuf,
    pub mode: ModeKind,
    pub epsilon: Option<f64>,
    pub epsilon_overrides: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub gap: f64,
    pub time_limit: f64,
    pub threads: usize,
    pub node_limit: Option<usize>,
    pub samples: usize,
    pub out: PathBuf,
}

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "EVGRID_OUT";

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| "evgrid-out".into())
}

impl RunConfig {
    pub fn resolve(
        command: &str,
        instance: &Path,
        flags: &RunFlags,
        out: Option<&Path>,
        file: &FileConfig,
    ) -> Result<Self> {
        let cfg = RunConfig {
            command: command.to_string(),
            instance: instance.to_path_buf(),
            mode: flags.mode.or(file.mode).unwrap_or(ModeKind::Det),
            epsilon: flags.epsilon.or(file.epsilon),
            epsilon_overrides: file.epsilon_overrides.clone(),
            seed: flags.seed.or(file.seed),
            gap: flags.gap.or(file.gap).unwrap_or(1e-4),
            time_limit: flags.time_limit.or(file.time_limit).unwrap_or(300.0),
            threads: flags.threads.or(file.threads).unwrap_or(1),
            node_limit: flags.node_limit.or(file.node_limit),
            samples: flags.samples.or(file.samples).unwrap_or(10_000),
            out: out.map(Path::to_path_buf).or_else(|| file.out.clone()).unwrap_or_else(default_out),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let eps_ok = |e: f64| e > 0.0 && e < 1.0;
        if let Some(e) = self.epsilon.filter(|&e| !eps_ok(e)) {
            return Err(Error::Config(format!("epsilon {e} not in (0, 1)")));
        }
        if let Some((k, e)) = self.epsilon_overrides.iter().find(|(_, &e)| !eps_ok(e)) {
            return Err(Error::Config(format!("epsilon override {k} = {e} not in (0, 1)")));
        }
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(Error::Config(format!("time limit {} must be positive", self.time_limit)));
        }
        if !(self.gap >= 0.0) {
            return Err(Error::Config(format!("gap {} must be nonnegative", self.gap)));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mode(&self, inst: &ProblemInstance) -> Result<Mode> {
        if self.mode == ModeKind::Det {
            return Ok(Mode::Deterministic);
        }
        let mut eps: Vec<f64> = match self.epsilon {
            Some(e) => vec![e; inst.num_customers()],
            None => inst.demand.nodes.iter().map(|d| d.risk_tolerance).collect(),
        };
        for (label, &e) in &self.epsilon_overrides {
            let j = (1..=inst.num_customers())
                .find(|&j| inst.label(j) == label)
                .ok_or_else(|| Error::Config(format!("epsilon override for unknown location '{label}'")))?;
            eps[j - 1] = e;
        }
        let sigma = inst.demand.nodes.iter().map(|d| d.net_demand_std).collect();
        Ok(Mode::ChanceConstrained(RiskSpec::new(eps, sigma)?))
    }

    pub fn bnb_options(&self) -> BnbOptions {
        BnbOptions {
            gap_tol: self.gap,
            time_limit: Duration::from_secs_f64(self.time_limit),
            node_limit: self.node_limit,
            threads: self.threads,
            ..Default::default()
        }
    }
}

/// Parses `HH:MM-HH:MM`.
pub fn parse_window(text: &str) -> Result<DayWindow> {
    let (a, b) = text.split_once('-').ok_or_else(|| Error::Config(format!("window '{text}' is not HH:MM-HH:MM")))?;
    let time = |s: &str| {
        NaiveTime::parse_from_str(s.trim(), "%H:%M").map_err(|e| Error::Config(format!("window time '{s}': {e}")))
    };
    Ok(DayWindow::new(time(a)?, time(b)?)?)
}

fn out_dir(out: &OutArgs, file: &FileConfig) -> PathBuf {
    out.out.clone().or_else(|| file.out.clone()).unwrap_or_else(default_out)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn cmd_ingest(args: &IngestArgs, file: &FileConfig) -> Result<PathBuf> {
    let trips = parse_trip_records(File::open(&args.trips)?)?;
    let window = args.window.as_deref().map(parse_window).transpose()?.unwrap_or_else(DayWindow::whole_day);
    let defaults = ClusterDefaults::for_window(&window);
    let inst = match &args.template {
        Some(path) => {
            let template = ProblemInstance::read(path)?;
            let mut map = BTreeMap::new();
            for j in 1..=template.num_customers() {
                for id in template.label(j).split('+') {
                    let id: u32 = id
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("template label '{id}' is not a location id")))?;
                    map.insert(id, j);
                }
            }
            let mut profile = clusterize(&trips, &window, &map, &defaults)?;
            profile.labels = template.demand.labels.clone();
            let horizon = template.horizon;
            let mut inst = build_instance(
                profile,
                template.vehicles,
                template.stations,
                template.grid,
                template.costs,
                template.travel_time,
            )?;
            inst.depot_label = template.depot_label;
            inst.depot_grid_node = template.depot_grid_node;
            inst.depot_power = template.depot_power;
            let horizon = inst.horizon.max(horizon);
            inst.with_horizon(horizon)?
        }
        None => {
            let map = location_map_from_trips(&trips);
            if map.is_empty() {
                return Err(Error::Config("trip file has no records".into()));
            }
            let profile = clusterize(&trips, &window, &map, &defaults)?;
            let seed = args.seed.or(file.seed).unwrap_or(1);
            backbone_instance(profile, args.vehicles, seed)?
        }
    };
    if inst.demand.nodes.iter().all(|d| d.mean_pickup == 0.0 && d.mean_dropoff == 0.0) {
        log::warn!("no trips fall in the window; the instance has zero demand");
    }
    let dir = out_dir(&args.out, file);
    fs::create_dir_all(&dir)?;
    let path = dir.join(&args.name);
    inst.write(&path)?;
    Ok(path)
}

/// Wraps ingested demand in a synthetic fleet, station set and feeder.
/// Capacity is raised so any single tour can carry all drop-offs and
/// pick-ups.
fn backbone_instance(profile: crate::instance::DemandProfile, vehicles: usize, seed: u64) -> Result<ProblemInstance> {
    let n = profile.len();
    let scale: f64 = profile.nodes.iter().map(|d| d.mean_pickup).sum::<f64>().max(1.0);
    let base = generate_synthetic(seed, n, vehicles.max(1), scale)?;
    let need: f64 = profile.nodes.iter().map(|d| d.mean_dropoff + d.mean_pickup + 3.0 * d.net_demand_std).sum();
    let mut fleet = base.vehicles.clone();
    for v in &mut fleet {
        v.capacity = v.capacity.max(need.ceil().max(1.0));
    }
    let mut inst = build_instance(profile, fleet, base.stations, base.grid, base.costs, base.travel_time)?;
    inst.depot_grid_node = base.depot_grid_node;
    inst.depot_power = base.depot_power;
    let horizon = inst.horizon.max(base.horizon);
    Ok(inst.with_horizon(horizon)?)
}

pub fn cmd_generate(args: &GenerateArgs, file: &FileConfig) -> Result<PathBuf> {
    let seed = args.seed.or(file.seed).unwrap_or(1);
    let inst = generate_synthetic(seed, args.locations, args.vehicles, args.scale)?;
    let dir = out_dir(&args.out, file);
    fs::create_dir_all(&dir)?;
    let path = dir.join(&args.name);
    inst.write(&path)?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct ResultFile<'a> {
    status: &'a str,
    objective: f64,
    bound: f64,
    gap: f64,
    nodes: usize,
    travel_cost: f64,
    energy_cost: f64,
    deployed: usize,
}

/// Solves and writes every artifact; returns the solver status.
pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveStatus> {
    let inst = ProblemInstance::read(&cfg.instance)?;
    let mode = cfg.mode(&inst)?;
    fs::create_dir_all(&cfg.out)?;
    let manifest = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(cfg.out.join("run_manifest.toml"), manifest)?;

    let outcome = solve_instance(&inst, mode.clone(), &cfg.bnb_options())?;
    let status = outcome.result.status;
    let sol = outcome.solution.as_ref();
    log::info!(
        "{}: objective {} bound {} after {} nodes",
        status.as_str(),
        outcome.result.objective,
        outcome.result.bound,
        outcome.result.node_count
    );
    let summary = run_summary(vec![summarize(&inst, &mode, status.as_str(), sol)]);
    write_summary(&summary, create(&cfg.out, "summary.csv")?)?;

    let breakdown = sol.map(|s| crate::report::objective_breakdown(&outcome.assembled, s, &inst)).unwrap_or_default();
    let result = ResultFile {
        status: status.as_str(),
        objective: outcome.result.objective,
        bound: outcome.result.bound,
        gap: outcome.result.gap,
        nodes: outcome.result.node_count,
        travel_cost: breakdown.travel_cost,
        energy_cost: breakdown.energy_cost,
        deployed: sol.map_or(0, |s| s.deployed()),
    };
    fs::write(cfg.out.join("result.toml"), toml::to_string(&result).map_err(|e| Error::Config(e.to_string()))?)?;

    if let Some(sol) = sol {
        write_routes(&outcome.assembled, sol, create(&cfg.out, "routes.csv")?)?;
        write_solution(&outcome.assembled, &sol.values, create(&cfg.out, "solution.csv")?)?;
        write_traces(&sol.traces, create(&cfg.out, "battery_traces.csv")?)?;
        write_snapshot(&inst.grid, &sol.grid, create(&cfg.out, "grid_snapshot.csv")?)?;
        if let (Mode::ChanceConstrained(risk), Some(seed)) = (&mode, cfg.seed) {
            let visits = outcome.assembled.planned_visits(&inst, sol);
            let rates = empirical_violation_rate(&visits, &inst, risk, cfg.samples, seed);
            write_violations(&rates, create(&cfg.out, "violations.csv")?)?;
        }
    }
    Ok(status)
}

/// Replays a routes file; with a solution file every model row is checked
/// as well.
pub fn cmd_validate(args: &ValidateArgs, cfg: &RunConfig) -> Result<ValidationReport> {
    const TOL: f64 = 1e-6;
    let inst = ProblemInstance::read(&args.instance)?;
    let mode = cfg.mode(&inst)?;
    if matches!(mode, Mode::ChanceConstrained(_)) && cfg.seed.is_none() {
        return Err(Error::Config("chance-constrained validation needs --seed".into()));
    }
    let routes = read_routes(File::open(&args.routes)?, inst.num_vehicles())?;
    let buffers = mode.buffers(&inst);
    let mut report = validate_routes_buffered(&routes, &inst, TOL, &buffers);
    if !report.of_family("RouteShape").any(|_| true) {
        for r in &routes {
            report.extend(check_energy(r, &inst, TOL));
        }
    }
    match radial_sweep(&inst.grid, &demand_with_draws(&inst.grid, &route_draws(&inst, &routes))) {
        Ok(state) => report.violations.extend(limit_violations(&inst.grid, &state, TOL)),
        Err(e) => return Err(e.into()),
    }
    if let (Mode::ChanceConstrained(risk), Some(seed)) = (&mode, cfg.seed) {
        let visits = visits_from_routes(&routes, &inst, &buffers);
        for rate in empirical_violation_rate(&visits, &inst, risk, cfg.samples, seed) {
            let bound = rate_bound(rate.epsilon, rate.samples);
            println!("violation rate node {} measured {:.4} bound {:.4}", rate.node, rate.rate, bound);
            if rate.rate > bound {
                report.violations.push(Violation {
                    family: "ViolationRate",
                    vehicle: None,
                    node: Some(rate.node),
                    slack: bound - rate.rate,
                });
            }
        }
    }
    if let Some(path) = &args.solution {
        let asm = assemble(&inst, mode)?;
        let values = read_solution(&asm, File::open(path)?)?;
        let sol = asm.decode(&inst, values)?;
        report.extend(asm.validate(&inst, &sol, TOL));
    }
    Ok(report)
}

pub fn cmd_report(args: &ReportArgs, file: &FileConfig) -> Result<PathBuf> {
    let factors = file.emission_factors.unwrap_or_default();
    let mut rows = Vec::new();
    let mut emissions = Vec::new();
    let dir = out_dir(&args.out, file);
    fs::create_dir_all(&dir)?;
    for run in &args.runs {
        let summary = read_summary(File::open(run.join("summary.csv"))?)?;
        let traces_path = run.join("battery_traces.csv");
        let traces = if traces_path.exists() { read_traces(File::open(traces_path)?)? } else { Vec::new() };
        let kwh = energy_used(&traces);
        for row in &summary {
            let fleet = format!("{} {}", args.fleet, row.code);
            emissions.extend(emissions_report(kwh, row.routes, row.expected_passengers, &factors, &fleet));
        }
        if let (Some(row), Some(cap)) = (summary.first(), traces.first().and_then(|t| t.entries.first())) {
            let top = traces.iter().flat_map(|t| &t.entries).map(|e| e.energy_kwh).fold(cap.energy_kwh, f64::max);
            let name = format!("energy_{}.svg", row.code);
            fs::write(dir.join(name), svg_energy_chart(&format!("Battery level, {}", row.code), &traces, top))?;
        }
        rows.extend(summary);
    }
    let rows = run_summary(rows);
    write_summary(&rows, create(&dir, "summary.csv")?)?;
    write_emissions(&emissions, create(&dir, "emissions.csv")?)?;
    let bars: Vec<(String, f64)> = rows.iter().map(|r| (r.code.clone(), r.objective)).collect();
    fs::write(dir.join("objective.svg"), svg_bar_chart("Objective", &bars))?;
    Ok(dir)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

/// Runs the parsed command and maps the outcome to an exit status.
pub fn execute(cli: &Cli) -> ExitStatus {
    init_logging(cli.verbose);
    let outcome = (|| -> Result<ExitStatus> {
        let file = match &cli.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        match &cli.command {
            Command::Ingest(a) => {
                println!("{}", cmd_ingest(a, &file)?.display());
                Ok(ExitStatus::Ok)
            }
            Command::Generate(a) => {
                println!("{}", cmd_generate(a, &file)?.display());
                Ok(ExitStatus::Ok)
            }
            Command::Solve(a) => {
                let cfg = RunConfig::resolve("solve", &a.instance, &a.flags, a.out.out.as_deref(), &file)?;
                let status = cmd_solve(&cfg)?;
                println!("{} {}", status.as_str(), cfg.out.display());
                Ok(ExitStatus::of_solve(status))
            }
            Command::Validate(a) => {
                let cfg = RunConfig::resolve("validate", &a.instance, &a.flags, None, &file)?;
                let report = cmd_validate(a, &cfg)?;
                print!("{report}");
                if report.is_ok() {
                    println!("all checks passed");
                    Ok(ExitStatus::Ok)
                } else {
                    Ok(ExitStatus::ValidationFailed)
                }
            }
            Command::Report(a) => {
                println!("{}", cmd_report(a, &file)?.display());
                Ok(ExitStatus::Ok)
            }
        }
    })();
    match outcome {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::of_error(&e)
        }
    }
}

/// Entry point for the binary.
pub fn run() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => execute(&cli) as i32,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                ExitStatus::Input as i32
            } else {
                ExitStatus::Ok as i32
            }
        }
    }
}
