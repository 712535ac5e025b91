use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lorapro::harness::selfcheck::selfcheck;
use lorapro::harness::{compare, run, RunConfig};
use lorapro::optim::Method;
use lorapro::Error;

#[derive(Parser)]
#[command(name = "lorapro", version, about = "LoRA-Pro gradient adjustment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write metrics, summary and checkpoint.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train several methods from the same start and compare them.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, e.g. `lora,lora_pro_adamw,full_ft`.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

fn load(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = out {
        cfg.run.out_dir = out;
    }
    Ok(cfg)
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>, Error> {
    names
        .iter()
        .map(|n| {
            Method::parse(n.trim()).ok_or_else(|| Error::Config {
                key: "methods".into(),
                msg: format!(
                    "unknown method `{n}`; expected one of {}",
                    Method::ALL.map(Method::name).join(", ")
                ),
            })
        })
        .collect()
}

fn execute(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed, out)?;
            let outcome = run(&cfg)?;
            println!("final_loss {:e}", outcome.final_loss);
            println!("metrics    {}", outcome.metrics_path.display());
            println!("summary    {}", outcome.summary_path.display());
            println!("checkpoint {}", outcome.checkpoint_path.display());
            Ok(true)
        }
        Command::Compare {
            config,
            methods,
            seed,
            out,
        } => {
            let cfg = load(&config, seed, out)?;
            let methods = parse_methods(&methods)?;
            let outcome = compare(&cfg, &methods)?;
            for r in &outcome.results {
                println!(
                    "{:<16} final_loss {:.6e}  late_discrepancy {:.6e}",
                    r.label, r.final_loss, r.late_mean_discrepancy
                );
            }
            let v = &outcome.verdicts;
            println!("loss order        {}", v.final_loss_order.join(" < "));
            let show = |b: Option<bool>| b.map_or("n/a".to_string(), |b| b.to_string());
            println!("(a) discrepancy lora_pro < lora: {}", show(v.discrepancy_lora_pro_below_lora));
            println!("(b) final loss  lora_pro < lora: {}", show(v.final_loss_lora_pro_below_lora));
            println!("comparison        {}", outcome.summary_path.display());
            Ok(true)
        }
        Command::Selfcheck { seed, json } => {
            let report = selfcheck(seed);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
