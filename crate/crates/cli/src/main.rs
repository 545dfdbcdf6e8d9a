use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use streamforge::cost::{cost_table_to_json, load_cost_table};
use streamforge::ga::{objective_names, optimize_allocation, GaConfig, GaOutcome, Objective};
use streamforge::partition::TileRequest;
use streamforge::report::{gantt_svg, memory_csv, metrics_json};
use streamforge::{parse_architecture, parse_workload, AcceleratorSpec, Allocation, Prepared, Priority, WorkloadGraph};

#[derive(Parser)]
#[command(name = "streamforge", version, about = "Layer-fused scheduling of DNN workloads on multi-core accelerators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition, allocate, schedule and write reports
    Run(RunArgs),
    /// Dump the CN dependency graph as JSON
    Depgraph(DumpArgs),
    /// Dump whole-layer costs per compatible core, in cost-table format
    Cost(DumpArgs),
    /// Run every mode x priority x architecture and write sweep.csv
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Fused,
    #[value(name = "layer_by_layer")]
    LayerByLayer,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Fused => "fused",
            Mode::LayerByLayer => "layer_by_layer",
        }
    }
}

#[derive(Args, Clone)]
struct Tiling {
    /// fused or layer_by_layer
    #[arg(long, value_enum, default_value = "fused")]
    mode: Mode,
    /// Output rows per CN in fused mode
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    tile_oy: u64,
    /// Output columns per CN in fused mode (default: whole rows)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    tile_ox: Option<u64>,
    /// JSON list of {layer, core, cycles, energy} overriding the analytical cost
    #[arg(long)]
    cost_table: Option<PathBuf>,
}

impl Tiling {
    fn request(&self, mode: Mode) -> TileRequest {
        match mode {
            Mode::Fused => TileRequest::Fused { tile_oy: self.tile_oy, tile_ox: self.tile_ox },
            Mode::LayerByLayer => TileRequest::LayerByLayer,
        }
    }
}

#[derive(Args, Clone)]
struct Search {
    #[arg(long, default_value = "latency", value_parser = parse_priority)]
    priority: Priority,
    /// Scalar objective used to pick the reported allocation: edp, latency or energy
    #[arg(long, default_value = "edp", value_parser = parse_objective)]
    objective: Objective,
    #[arg(long, default_value_t = 32)]
    ga_pop: usize,
    #[arg(long, default_value_t = 64)]
    ga_gens: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed allocation [[layer, core], ...]; skips the GA
    #[arg(long)]
    allocation: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    arch: PathBuf,
    #[command(flatten)]
    tiling: Tiling,
    #[command(flatten)]
    search: Search,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    arch: PathBuf,
    #[command(flatten)]
    tiling: Tiling,
    /// Write here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    workload: PathBuf,
    /// Repeat for each architecture
    #[arg(long, required = true)]
    arch: Vec<PathBuf>,
    #[command(flatten)]
    tiling: Tiling,
    #[command(flatten)]
    search: Search,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn parse_priority(s: &str) -> Result<Priority, String> {
    Priority::from_name(s).ok_or_else(|| format!("unknown priority '{s}' (latency, memory)"))
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    Objective::from_name(s).ok_or_else(|| format!("unknown objective '{s}' (edp, latency, energy)"))
}

enum Failure {
    Unschedulable(String),
    Other(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Unschedulable(m) => write!(f, "unschedulable: {m}"),
            Failure::Other(m) => f.write_str(m),
        }
    }
}

impl From<streamforge::Error> for Failure {
    fn from(e: streamforge::Error) -> Self {
        if e.is_unschedulable() {
            Failure::Unschedulable(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_workload(path: &Path) -> Result<WorkloadGraph, Failure> {
    parse_workload(&read(path)?).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn load_arch(path: &Path) -> Result<AcceleratorSpec, Failure> {
    parse_architecture(&read(path)?).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn prepare(w: &WorkloadGraph, a: &AcceleratorSpec, tiling: &Tiling, mode: Mode) -> Result<Prepared, Failure> {
    let overrides = match &tiling.cost_table {
        Some(p) => load_cost_table(&read(p)?).map_err(|e| Failure::Other(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    Ok(Prepared::new(w, a, tiling.request(mode), &overrides)?)
}

/// Allocation from file, or the GA's best together with its outcome.
fn allocate(p: &Prepared, search: &Search, priority: Priority) -> Result<(Allocation, Option<GaOutcome>), Failure> {
    if let Some(path) = &search.allocation {
        let alloc = Allocation::from_json(&read(path)?).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
        return Ok((alloc, None));
    }
    let cfg = GaConfig {
        population: search.ga_pop,
        generations: search.ga_gens,
        seed: search.seed,
        objective: search.objective,
        priority,
        ..GaConfig::default()
    };
    let out = optimize_allocation(&p.graph, &p.accel, &p.costs, &cfg).map_err(streamforge::Error::from)?;
    log::info!("GA: {} generations, {} evaluations, front of {}", out.generations_run, out.evaluations, out.front.len());
    Ok((out.best.allocation.clone(), Some(out)))
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let w = load_workload(&args.workload)?;
    let a = load_arch(&args.arch)?;
    let p = prepare(&w, &a, &args.tiling, args.tiling.mode)?;
    let priority = args.search.priority;
    let (alloc, ga) = allocate(&p, &args.search, priority)?;
    let r = p.schedule(&alloc, priority).map_err(streamforge::Error::from)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| Failure::Other(format!("{}: {e}", args.out_dir.display())))?;
    let dir = &args.out_dir;
    write(&dir.join("metrics.json"), &pretty(&metrics_json(&r, &alloc, &p.graph)))?;
    write(&dir.join("schedule.json"), &pretty(&r.to_json()))?;
    write(&dir.join("gantt.svg"), &gantt_svg(&r, &p.graph, &a))?;
    write(&dir.join("memory_trace.csv"), &memory_csv(&r))?;
    if let Some(out) = ga {
        write(&dir.join("front.json"), &pretty(&out.front_json(objective_names(priority))))?;
    }
    println!(
        "latency {} cc, energy {:.4e} pJ, EDP {:.4e}, peak memory {} B -> {}",
        r.latency,
        r.total_energy(),
        r.edp,
        r.peak_memory,
        dir.display()
    );
    Ok(())
}

fn dump(args: &DumpArgs, graph: bool) -> Result<(), Failure> {
    let w = load_workload(&args.workload)?;
    let a = load_arch(&args.arch)?;
    let p = prepare(&w, &a, &args.tiling, args.tiling.mode)?;
    let text = if graph {
        pretty(&p.graph.to_json())
    } else {
        let mut s = cost_table_to_json(&p.costs.layer_summary(&p.graph, &a));
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s
    };
    match &args.out {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

const SWEEP_HEADER: &str =
    "arch,mode,priority,status,latency,energy_compute,energy_bus,energy_dram,energy_total,edp,peak_memory";

fn sweep_row(arch: &str, w: &WorkloadGraph, a: &AcceleratorSpec, args: &SweepArgs, mode: Mode, prio: Priority) -> Result<String, Failure> {
    let key = format!("{arch},{},{}", mode.name(), prio.name());
    let result = prepare(w, a, &args.tiling, mode).and_then(|p| {
        let (alloc, _) = allocate(&p, &args.search, prio)?;
        Ok(p.schedule(&alloc, prio).map_err(streamforge::Error::from)?)
    });
    match result {
        Ok(r) => Ok(format!(
            "{key},ok,{},{},{},{},{},{},{}",
            r.latency,
            r.energy.compute,
            r.energy.bus,
            r.energy.dram,
            r.total_energy(),
            r.edp,
            r.peak_memory
        )),
        Err(Failure::Unschedulable(m)) => {
            log::warn!("{key}: {m}");
            Ok(format!("{key},unschedulable,,,,,,,"))
        }
        Err(e) => Err(Failure::Other(format!("{key}: {e}"))),
    }
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let w = load_workload(&args.workload)?;
    let archs: Vec<(String, AcceleratorSpec)> = args
        .arch
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            load_arch(p).map(|a| (name, a))
        })
        .collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for (name, a) in &archs {
        for mode in [Mode::Fused, Mode::LayerByLayer] {
            for prio in [Priority::Latency, Priority::Memory] {
                jobs.push((name.as_str(), a, mode, prio));
            }
        }
    }
    let rows: Vec<Result<String, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(name, a, mode, prio)| {
                let w = &w;
                s.spawn(move || sweep_row(name, w, a, args, mode, prio))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row?);
        csv.push('\n');
    }
    fs::create_dir_all(&args.out_dir).map_err(|e| Failure::Other(format!("{}: {e}", args.out_dir.display())))?;
    let path = args.out_dir.join("sweep.csv");
    write(&path, &csv)?;
    println!("{} configurations -> {}", jobs.len(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STREAMFORGE_LOG", "warn")).init();
    // usage errors exit 1; 2 is reserved for unschedulable configurations
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Depgraph(a) => dump(a, true),
        Command::Cost(a) => dump(a, false),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Failure::Unschedulable(_) => ExitCode::from(2),
                Failure::Other(_) => ExitCode::from(1),
            }
        }
    }
}
