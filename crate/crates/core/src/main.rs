use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use metastable_csma::harness::{
    self, io, ExperimentConfig, HarnessError, RegenRow, SampleRow, EXACT_HEADER, REGEN_HEADER, SAMPLE_HEADER,
};
use metastable_csma::rates::RateSchedule;
use metastable_csma::topology::GraphSpec;

#[derive(Parser)]
#[command(name = "metastable-csma", version, about = "Crossover times of random-access dynamics on bipartite graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicates.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (stdout when absent, where applicable).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Frozen-time oracle table at t = M·tau.
    Exact(Common),
    /// Crossover samples from u to v.
    Simulate(SimulateArgs),
    /// Predicted survival of T_v/M.
    Predict(Common),
    /// Simulation against prediction; exit 0 on pass, 1 on fail.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Only emit the energy-landscape report.
        #[arg(long)]
        landscape: bool,
    },
    /// Runs the config's sweep axis.
    Sweep(Common),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// complete:m,n | torus:m,n | file:PATH
    #[arg(long)]
    graph: Option<GraphSpec>,
    /// Schedule as inline JSON or a path to a JSON file.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// Also write every regeneration trial.
    #[arg(long = "regen-log")]
    regen_log: bool,
    /// CSV file, or a directory receiving samples.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let path = path.ok_or_else(|| HarnessError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Option<PathBuf> {
    common.out.clone().or_else(|| cfg.out_dir.clone())
}

/// Writes to stdout, treating a closed pipe as success.
fn stdout(text: &str) -> Result<(), HarnessError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(HarnessError::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn json_text<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit_csv<T: Serialize>(dir: Option<&Path>, name: &str, header: &[&str], rows: &[T]) -> Result<(), HarnessError> {
    match dir {
        Some(d) => io::write_csv(&d.join(name), header, rows),
        None => {
            let bytes = io::csv_bytes(rows)?;
            stdout(&String::from_utf8_lossy(&bytes))
        }
    }
}

fn parse_schedule(arg: &str) -> Result<RateSchedule, HarnessError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| HarnessError::Config(format!("{arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("schedule: {e}")))
}

fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<(), HarnessError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let graph = args.graph.clone().ok_or_else(|| HarnessError::Config("--graph or --config is required".into()))?;
            let sched = args
                .schedule
                .as_deref()
                .ok_or_else(|| HarnessError::Config("--schedule or --config is required".into()))?;
            ExperimentConfig::new(graph, parse_schedule(sched)?)
        }
    };
    if let Some(g) = &args.graph {
        cfg.graph = harness::GraphInput::Spec(g.clone());
    }
    if let (Some(s), Some(_)) = (&args.schedule, &args.config) {
        cfg.schedule = parse_schedule(s)?;
    }
    if let Some(n) = args.replicates {
        cfg.replicates = n;
    }
    if let Some(t) = args.t_max {
        cfg.t_max = Some(t);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let p = harness::prepare(&cfg)?;
    let samples = harness::simulate_samples(&p.graph, &cfg.schedule, cfg.replicates, cfg.seed, p.t_max, args.regen_log)?;
    let rows = SampleRow::from_samples(&samples);
    let regen = args.regen_log.then(|| RegenRow::from_samples(&samples));
    match &args.out {
        Some(out) => {
            let file = if out.extension().is_some_and(|e| e == "csv") { out.clone() } else { out.join("samples.csv") };
            io::write_csv(&file, &SAMPLE_HEADER, &rows)?;
            if let Some(regen) = regen {
                io::write_csv(&file.with_extension("regen.csv"), &REGEN_HEADER, &regen)?;
            }
        }
        None => {
            emit_csv(None, "", &SAMPLE_HEADER, &rows)?;
            if let Some(regen) = regen {
                stdout("\n")?;
                emit_csv(None, "", &REGEN_HEADER, &regen)?;
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, HarnessError> {
    match &cli.command {
        Command::Exact(c) => {
            let cfg = load(c.config.as_deref(), cli.seed)?;
            let rows = harness::exact_table(&cfg)?;
            emit_csv(out_dir(c, &cfg).as_deref(), "exact.csv", &EXACT_HEADER, &rows)?;
            Ok(true)
        }
        Command::Simulate(args) => simulate(args, cli.seed).map(|_| true),
        Command::Predict(c) => {
            let cfg = load(c.config.as_deref(), cli.seed)?;
            let rows = harness::predict(&cfg)?;
            emit_csv(out_dir(c, &cfg).as_deref(), "predict.csv", &["tau", "survival_predicted", "regime", "M", "nu0"], &rows)?;
            Ok(true)
        }
        Command::Verify { common, landscape: true } => {
            let cfg = load(common.config.as_deref(), cli.seed)?;
            let report = harness::landscape_report(&cfg)?;
            match out_dir(common, &cfg) {
                Some(d) => io::write_json(&d.join("landscape.json"), &report)?,
                None => stdout(&json_text(&report)?)?,
            }
            Ok(true)
        }
        Command::Verify { common, landscape: false } => {
            let cfg = load(common.config.as_deref(), cli.seed)?;
            let dir = out_dir(common, &cfg);
            match harness::run_experiment(&cfg) {
                Ok(out) => {
                    match &dir {
                        Some(d) => out.write(d)?,
                        None => stdout(&json_text(&out.report)?)?,
                    }
                    eprintln!(
                        "{}: sup distance {:.4} (tolerance {}), regime {}, M*nu0 = {:.4}",
                        if out.report.pass { "PASS" } else { "FAIL" },
                        out.report.sup_distance,
                        out.report.tolerance,
                        out.report.regime,
                        out.report.product
                    );
                    Ok(out.report.pass)
                }
                Err(e) => {
                    if let Some(d) = &dir {
                        let failure = serde_json::json!({ "pass": false, "error": e.to_string() });
                        io::write_json(&d.join("report.json"), &failure)?;
                    }
                    Err(e)
                }
            }
        }
        Command::Sweep(c) => {
            let cfg = load(c.config.as_deref(), cli.seed)?;
            let axis = cfg.sweep.clone().ok_or_else(|| HarnessError::Config("config has no sweep axis".into()))?;
            let points = harness::sweep(&cfg, &axis)?;
            match out_dir(c, &cfg) {
                Some(d) => harness::write_sweep(&points, &d)?,
                None => {
                    let rows: Vec<_> = points.iter().map(|p| &p.row).collect();
                    emit_csv(None, "", &harness::SWEEP_HEADER, &rows)?;
                }
            }
            Ok(points.iter().all(|p| p.row.pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
