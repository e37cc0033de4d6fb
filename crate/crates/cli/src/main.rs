use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use divcode::baselines::{aps_plan, working_plan, Scheme};
use divcode::exec::{with_jobs, Execution};
use divcode::formation::{build_formation_model, Backend, FormationConfig, FormationMode};
use divcode::gf2::{CodingGroup, IndirectRule};
use divcode::groups::{candidate_count, enumerate_candidate_groups, form_all};
use divcode::io::{read_candidates, read_plan, write_candidates, write_plan};
use divcode::milp::mps::{export_mps, import_mps};
use divcode::milp::{self, SolveStatus, SolverConfig};
use divcode::net::{
    gravity_traffic, parse_network, parse_traffic, uniform_traffic, GravityWeight, Network, NodeId, TrafficMatrix,
};
use divcode::placement::{solve_placement, PlacementError};
use divcode::report::{verify_plan, Planner, RunConfig};

const EXTERNAL_ENV: &str = "DIVCODE_EXTERNAL_SOLVER";

#[derive(Parser)]
#[command(name = "divcode", version, about = "Diversity-coding protection design")]
struct Cli {
    /// Log level filter, e.g. `info` or `debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverChoice {
    /// In-process layout search (default).
    Embedded,
    /// In-process branch and bound on the integer model.
    Milp,
    /// Solver process from `--external-cmd` or the environment.
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleChoice {
    Arrival,
    Demand,
}

#[derive(clap::Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "embedded")]
    solver: SolverChoice,
    /// Command template with `{mps}`, `{sol}` and optionally `{time}`.
    #[arg(long)]
    external_cmd: Option<String>,
    /// Per-solve time limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Worker threads; defaults to the rayon pool size.
    #[arg(long)]
    jobs: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// List the candidate coding groups of a destination.
    Enumerate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        dest: String,
    },
    /// Price every candidate group of a destination.
    Form {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        dest: String,
        #[arg(long, default_value = "nonsystematic")]
        mode: FormationMode,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Place coding groups of a candidate file over one destination's demand.
    Place {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        #[arg(long)]
        dest: String,
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Form, place and verify every destination with traffic.
    Run {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        #[arg(long, default_value = "nonsystematic")]
        mode: FormationMode,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a plan against every single-span failure.
    Verify {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
    },
    /// Write a traffic matrix.
    GenTraffic {
        #[arg(long)]
        network: PathBuf,
        /// `uniform:<units>` or `gravity:<scale>`.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gravity node weights: `degree` or `random:<min>:<max>`.
        #[arg(long, default_value = "degree")]
        weights: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cost of a reference scheme.
    Baseline {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        #[arg(long, value_enum, default_value = "aps")]
        scheme: SchemeChoice,
    },
    /// Write the formation model of one group as MPS.
    ExportMps {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        dest: String,
        /// Comma-separated source names.
        #[arg(long)]
        group: String,
        #[arg(long, default_value = "nonsystematic")]
        mode: FormationMode,
        #[arg(long, value_enum, default_value = "arrival")]
        rule: RuleChoice,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an MPS file with the built-in branch and bound and write a
    /// solution file in the external-solver format.
    #[command(hide = true)]
    SolveMps {
        mps: PathBuf,
        sol: PathBuf,
        #[arg(long, default_value_t = 0)]
        time: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeChoice {
    Aps,
    Working,
}

struct Failure {
    code: u8,
    message: String,
}

fn input(e: impl Display) -> Failure {
    Failure { code: 3, message: e.to_string() }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

type Outcome = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<Network, Failure> {
    parse_network(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_traffic(path: &Path, net: &Network) -> Result<TrafficMatrix, Failure> {
    parse_traffic(&read(path)?, net).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn node(net: &Network, name: &str) -> Result<NodeId, Failure> {
    net.node(name).map_err(input)
}

fn time_limit(secs: Option<f64>) -> Result<Option<Duration>, Failure> {
    secs.map(|s| Duration::try_from_secs_f64(s).map_err(|_| input(format!("bad timeout {s}")))).transpose()
}

impl SolverArgs {
    fn formation(&self) -> Result<FormationConfig, Failure> {
        let backend = match self.solver {
            SolverChoice::Embedded => Backend::Combinatorial,
            SolverChoice::Milp => Backend::EmbeddedMilp,
            SolverChoice::External => {
                let cmd = self.external_cmd.clone().or_else(|| std::env::var(EXTERNAL_ENV).ok());
                Backend::External(
                    cmd.ok_or_else(|| input(format!("--solver external needs --external-cmd or {EXTERNAL_ENV}")))?,
                )
            }
        };
        Ok(FormationConfig { backend, time_limit: time_limit(self.timeout)?, ..Default::default() })
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn enumerate(network: &Path, dest: &str) -> Outcome {
    let net = load_network(network)?;
    let d = node(&net, dest)?;
    let groups = enumerate_candidate_groups(&net, d).map_err(input)?;
    let nd = net.nodal_degree(d).map_err(input)?;
    println!(
        "{} candidate groups for {dest} (nodal degree {nd}, expected {})",
        groups.len(),
        candidate_count(net.node_count(), nd)
    );
    for g in &groups {
        println!("{}", g.label(&net));
    }
    Ok(0)
}

fn form(network: &Path, dest: &str, mode: FormationMode, solver: &SolverArgs, out: &Path) -> Outcome {
    let net = load_network(network)?;
    let d = node(&net, dest)?;
    let cfg = solver.formation()?;
    let list =
        with_jobs(solver.jobs, || form_all(&net, d, mode, &cfg, solver.exec())).map_err(|e| fail(1, e.to_string()))?;
    write(out, &write_candidates(&net, &list))?;
    let s = &list.summary;
    println!(
        "{dest} ({mode}): {} enumerated, {} priced, {} infeasible, {} unpriced in {:.2}s",
        s.enumerated,
        s.priced,
        s.infeasible,
        s.unpriced,
        list.elapsed.as_secs_f64()
    );
    Ok(if s.unpriced > 0 { 2 } else { 0 })
}

fn place(candidates: &Path, traffic: &Path, dest: &str, timeout: Option<f64>, out: &Path) -> Outcome {
    let (net, list) = read_candidates(&read(candidates)?).map_err(input)?;
    let d = node(&net, dest)?;
    if d != list.destination {
        return Err(input(format!("{} holds candidates for {}", candidates.display(), net.name(list.destination))));
    }
    let tm = load_traffic(traffic, &net)?;
    let demand = divcode::net::decompose_by_destination(&tm).remove(&d).unwrap_or_default();
    let cfg = SolverConfig { time_limit: time_limit(timeout)?, ..Default::default() };
    let plan = match solve_placement(&list.entries, &demand, &cfg) {
        Ok(p) => p,
        Err(PlacementError::Uncovered(s)) => {
            return Err(fail(1, format!("infeasible: no candidate covers {}", net.name(s))))
        }
        Err(PlacementError::Timeout) => return Err(fail(2, "placement timed out without a plan")),
        Err(e) => return Err(fail(1, e.to_string())),
    };
    write(out, &write_plan(&net, &plan))?;
    println!("{dest}: cost {} with {} groups", plan.total_cost, plan.selections.len());
    for s in &plan.selections {
        println!("  {} x{} (cost {})", net.name_list(&s.sources), s.units, list.entries[s.candidate].cost);
    }
    if !plan.is_optimal() {
        println!("  optimality gap {}", plan.gap);
        return Ok(2);
    }
    Ok(0)
}

trait NameList {
    fn name_list(&self, nodes: &[NodeId]) -> String;
}

impl NameList for Network {
    fn name_list(&self, nodes: &[NodeId]) -> String {
        nodes.iter().map(|&n| self.name(n)).collect::<Vec<_>>().join(",")
    }
}

fn run(network: &Path, traffic: &Path, mode: FormationMode, solver: &SolverArgs, out: &Path) -> Outcome {
    let net = load_network(network)?;
    let tm = load_traffic(traffic, &net)?;
    let cfg = RunConfig {
        formation: solver.formation()?,
        placement: SolverConfig { time_limit: time_limit(solver.timeout)?, ..Default::default() },
        exec: solver.exec(),
    };
    let mut planner = Planner::new(&net, mode, cfg);
    let report = with_jobs(solver.jobs, || planner.run(&tm)).map_err(|e| fail(1, e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| input(format!("{}: {e}", out.display())))?;
    write(&out.join("report.csv"), &report.to_csv(&net))?;
    let table = report.to_table(&net);
    write(&out.join("report.txt"), &table)?;
    for d in &report.destinations {
        let name = net.name(d.destination);
        if let Some(list) = planner.candidates(d.destination) {
            write(&out.join(format!("candidates-{name}.json")), &write_candidates(&net, list))?;
        }
        if let Some(plan) = report.plans.get(&d.destination) {
            write(&out.join(format!("plan-{name}.json")), &write_plan(&net, plan))?;
        }
    }
    print!("{table}");
    for v in &report.verdict.violations {
        eprintln!("violation: {v:?}");
    }
    if !report.all_planned() || !report.verdict.is_clean() {
        return Ok(1);
    }
    Ok(if report.any_timeout() { 2 } else { 0 })
}

fn verify(network: &Path, plan: &Path, candidates: &Path) -> Outcome {
    let net = load_network(network)?;
    let (embedded, list) = read_candidates(&read(candidates)?).map_err(input)?;
    if embedded.to_text() != net.to_text() {
        return Err(input(format!("{} was formed on a different network", candidates.display())));
    }
    let plan = read_plan(&net, &read(plan)?).map_err(input)?;
    let verdict = verify_plan(&net, &plan, &list.entries);
    for v in &verdict.violations {
        let span = v.span.map_or("-".to_string(), |s| {
            let sp = net.span(s);
            format!("{}-{}", net.name(sp.a), net.name(sp.b))
        });
        let group = v.candidate.and_then(|i| list.entries.get(i)).map_or("-".to_string(), |e| e.group.label(&net));
        println!("violation: span {span}, group {group}: {}", v.reason);
    }
    println!(
        "{} groups x {} spans checked, {} violations",
        verdict.groups_checked,
        net.span_count(),
        verdict.violations.len()
    );
    Ok(if verdict.is_clean() { 0 } else { 1 })
}

fn gen_traffic(network: &Path, model: &str, seed: u64, weights: &str, out: &Path) -> Outcome {
    let net = load_network(network)?;
    let tm = match model.split_once(':') {
        Some(("uniform", u)) => uniform_traffic(&net, u.parse().map_err(|_| input(format!("bad unit count `{u}`")))?),
        Some(("gravity", s)) => {
            let scale: f64 = s.parse().map_err(|_| input(format!("bad scale `{s}`")))?;
            let weight = match weights.split(':').collect::<Vec<_>>()[..] {
                ["degree"] => GravityWeight::NodalDegree,
                ["random", lo, hi] => {
                    GravityWeight::SeededUniform { min: lo.parse().map_err(input)?, max: hi.parse().map_err(input)? }
                }
                _ => return Err(input(format!("bad weights `{weights}`"))),
            };
            gravity_traffic(&net, scale, weight, seed).map_err(input)?
        }
        _ => return Err(input(format!("bad model `{model}` (uniform:<units> or gravity:<scale>)"))),
    };
    write(out, &tm.to_text(&net))?;
    println!("{} demands, {} units", tm.iter().filter(|(_, u)| *u > 0).count(), tm.total());
    Ok(0)
}

fn baseline(network: &Path, traffic: &Path, scheme: SchemeChoice) -> Outcome {
    let net = load_network(network)?;
    let tm = load_traffic(traffic, &net)?;
    let plan = match scheme {
        SchemeChoice::Aps => aps_plan(&net, &tm),
        SchemeChoice::Working => working_plan(&net, &tm),
    }
    .map_err(|e| fail(1, e.to_string()))?;
    let label = match plan.scheme {
        Scheme::Aps => "aps",
        Scheme::Working => "working",
    };
    for d in net.nodes() {
        let c = plan.cost_to(d);
        if c > 0 {
            println!("{} {c}", net.name(d));
        }
    }
    println!("{label} total {}", plan.total_cost);
    Ok(0)
}

fn export(network: &Path, dest: &str, group: &str, mode: FormationMode, rule: RuleChoice, out: &Path) -> Outcome {
    let net = load_network(network)?;
    let d = node(&net, dest)?;
    let sources = group.split(',').map(|s| node(&net, s.trim())).collect::<Result<Vec<_>, _>>()?;
    let group = CodingGroup::new(d, sources).map_err(input)?;
    let rule = match rule {
        RuleChoice::Arrival => IndirectRule::ArrivalTracking,
        RuleChoice::Demand => IndirectRule::DemandLevel,
    };
    let fm = build_formation_model(&net, &group, mode, rule);
    write(out, &export_mps(&fm.milp))?;
    println!("{} columns, {} rows", fm.milp.columns().len(), fm.milp.rows().len());
    Ok(0)
}

fn solve_mps(mps: &Path, sol: &Path, time: u64) -> Outcome {
    let model = import_mps(&read(mps)?).map_err(input)?;
    let cfg = SolverConfig { time_limit: (time > 0).then(|| Duration::from_secs(time)), ..Default::default() };
    let result = milp::solve(&model, &cfg).map_err(|e| fail(1, e.to_string()))?;
    let text = match (result.status, result.objective) {
        (SolveStatus::Optimal, Some(obj)) => {
            let mut s = format!("objective {obj}\n");
            for (c, &v) in model.columns().iter().zip(&result.assignment) {
                if v != 0 {
                    s += &format!("{} {v}\n", c.name);
                }
            }
            s
        }
        (SolveStatus::Infeasible, _) => "infeasible\n".to_string(),
        _ => "timeout\n".to_string(),
    };
    write(sol, &text)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let outcome = match &cli.command {
        Command::Enumerate { network, dest } => enumerate(network, dest),
        Command::Form { network, dest, mode, solver, out } => form(network, dest, *mode, solver, out),
        Command::Place { candidates, traffic, dest, timeout, out } => place(candidates, traffic, dest, *timeout, out),
        Command::Run { network, traffic, mode, solver, out } => run(network, traffic, *mode, solver, out),
        Command::Verify { network, plan, candidates } => verify(network, plan, candidates),
        Command::GenTraffic { network, model, seed, weights, out } => gen_traffic(network, model, *seed, weights, out),
        Command::Baseline { network, traffic, scheme } => baseline(network, traffic, *scheme),
        Command::ExportMps { network, dest, group, mode, rule, out } => export(network, dest, group, *mode, *rule, out),
        Command::SolveMps { mps, sol, time } => solve_mps(mps, sol, *time),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
