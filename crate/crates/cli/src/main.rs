use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kquorum::harness::{
    bundled, bundled_names, bundled_source, check_requirements, run_scenario, ParamsSection, ScenarioConfig,
};
use kquorum::montecarlo::{estimate_all, to_csv, to_json, CorruptModel, PriorModel, TrialConfig};
use kquorum::params::{check_feasible_async, QuorumParams};
use kquorum::simnet::Trace;

/// Simulate and check k-quorum payments.
#[derive(Parser)]
#[command(name = "kquorum", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or bundled scenario name) and check the trace.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        step_cap: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Write the JSONL trace here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Re-check a JSONL trace.
    Check {
        trace: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Feasibility conditions and analytic bounds for a parameter file.
    Bounds {
        params: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo estimates for one or more parameter files.
    Montecarlo {
        #[arg(required = true)]
        params: Vec<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, value_enum, default_value_t = Prior::Disjoint)]
        prior: Prior,
        /// Leave every validator honest.
        #[arg(long)]
        no_corruption: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled scenarios, or print one.
    Scenarios { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prior {
    Disjoint,
    Independent,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type Result<T> = std::result::Result<T, String>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_scenario(arg: &str) -> Result<ScenarioConfig> {
    let path = Path::new(arg);
    if path.exists() {
        ScenarioConfig::from_toml(&read(path)?).map_err(|e| format!("{arg}: {e}"))
    } else {
        bundled(arg).ok_or_else(|| {
            let names: Vec<&str> = bundled_names().collect();
            format!("no file `{arg}` and no bundled scenario by that name (bundled: {})", names.join(", "))
        })
    }
}

/// Accepts a bare parameter table or a document with a `[params]` table.
fn load_params(path: &Path) -> Result<QuorumParams> {
    let text = read(path)?;
    let mut doc: toml::Table = text.parse().map_err(|e| format!("{}: {e}", path.display()))?;
    let table = match doc.remove("params") {
        Some(toml::Value::Table(t)) => t,
        _ => doc,
    };
    let section: ParamsSection = table.try_into().map_err(|e| format!("{}: {e}", path.display()))?;
    section.build().map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".into(), |v| format!("{v:.6}"))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { scenario, seed, step_cap, horizon, out, json } => {
            let mut cfg = load_scenario(&scenario)?;
            if let Some(s) = step_cap {
                cfg.sim.step_cap = s;
            }
            if let Some(h) = horizon {
                cfg.sim.horizon = h;
            }
            let outcome = run_scenario(&cfg, seed).map_err(|e| e.to_string())?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(path) = &out {
                let file = fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
                outcome.trace.write_jsonl(io::BufWriter::new(file)).map_err(|e| e.to_string())?;
            }
            let r = &outcome.report;
            if json {
                println!("{}", serde_json::to_string_pretty(r).expect("reports serialize"));
            } else {
                println!(
                    "scenario {} seed {} trace {}",
                    cfg.name,
                    seed.unwrap_or(cfg.seed),
                    outcome.trace.digest().short()
                );
                print!("{}", r.render());
            }
            Ok(r.exit_code() as u8)
        }
        Command::Check { trace, json } => {
            let file = fs::File::open(&trace).map_err(|e| format!("{}: {e}", trace.display()))?;
            let t = Trace::read_jsonl(BufReader::new(file)).map_err(|e| format!("{}: {e}", trace.display()))?;
            let r = check_requirements(&t).map_err(|e| e.to_string())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r).expect("reports serialize"));
            } else {
                print!("{}", r.render());
            }
            Ok(r.exit_code() as u8)
        }
        Command::Bounds { params, json } => {
            let p = load_params(&params)?;
            let report = check_feasible_async(&p);
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
                return Ok(0);
            }
            println!(
                "n={} f={} m={} k1={} k2={} alpha={:.4} beta={:.4} mu={}",
                p.n, p.f, p.m, p.k1, p.k2, p.alpha, p.beta, p.mu
            );
            for c in &report.conditions {
                println!("{:<5} {}: {}", if c.pass { "ok" } else { "FAIL" }, c.name, c.detail);
            }
            if !report.proven_regime {
                println!("note  alpha/beta differ from 1/3, 2/3; bounds are indicative only");
            }
            let b = &report.bounds;
            println!("p_f                     {:.6}", b.p_f);
            println!("validation slack        {:.6}", b.validation_slack);
            println!("k2'                     {}", b.k2_prime.map_or("undefined".into(), |k| k.to_string()));
            println!("payment fraction        {}", opt(b.spend_fraction));
            println!("non-intersection bound  {}", opt(b.eps_bound));
            println!("intersection bound sync {}", opt(b.delta_bound_sync));
            println!("intersection bound async {}", opt(b.delta_bound_async));
            println!("corrupt quorum bound    {:.6}", b.corrupt_quorum_bound);
            println!("reply threshold         {}", b.reply_threshold);
            println!("witness threshold       {}", b.witness_threshold);
            println!("feasible                {}", report.all_pass());
            Ok(0)
        }
        Command::Montecarlo { params, trials, seed, format, prior, no_corruption, out } => {
            let prior = match prior {
                Prior::Disjoint => PriorModel::Disjoint,
                Prior::Independent => PriorModel::Independent,
            };
            let corrupt = if no_corruption { CorruptModel::None } else { CorruptModel::RandomPrefix };
            let mut reports = Vec::new();
            for path in &params {
                let p = load_params(path)?;
                let cfg = TrialConfig { params: p, trials, seed, prior, corrupt };
                reports.push(estimate_all(&cfg).map_err(|e| format!("{}: {e}", path.display()))?);
            }
            let text = match format {
                Format::Csv => to_csv(&reports),
                Format::Json => to_json(&reports) + "\n",
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Scenarios { name } => {
            match name {
                Some(n) => print!("{}", bundled_source(&n).ok_or_else(|| format!("no bundled scenario `{n}`"))?),
                None => {
                    for n in bundled_names() {
                        println!("{n:<26} {}", bundled(n).expect("bundled").description);
                    }
                }
            }
            Ok(0)
        }
    }
}
