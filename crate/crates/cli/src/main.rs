//! Command-line front end for the clusterfed simulator.
//!
//! Exit codes: 0 success, 1 config/validation error, 2 runtime error,
//! 3 theorem-check violation.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use clusterfed::config::{ExperimentConfig, RawConfig};
use clusterfed::engine::{self, ExperimentResult};
use clusterfed::error::{Error, Result};

#[derive(Parser)]
#[command(
    name = "clusterfed",
    about = "Clustered federated-learning simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run(CommonArgs),
    /// Run the config repeatedly, varying one dotted config key.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Config key to vary, e.g. strategy.k_clusters or run.seed_train.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Run with theorem checking forced on; exits 3 on a violation.
    CheckTheorems(CommonArgs),
    /// Report per-client and per-cluster class histograms of the partition.
    PartitionStats(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for result artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Apply `section.key=value` before validation; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for --override run.seed_data=N.
    #[arg(long)]
    seed_data: Option<u64>,
    /// Shorthand for --override run.seed_init=N.
    #[arg(long)]
    seed_init: Option<u64>,
    /// Shorthand for --override run.seed_train=N.
    #[arg(long)]
    seed_train: Option<u64>,
    /// Suppress per-round output.
    #[arg(long)]
    quiet: bool,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::TheoremViolation { .. } => 3,
        Error::Validation(_) | Error::Config { .. } | Error::UnknownKey(_) => 1,
        _ => 2,
    }
}

fn load_raw(args: &CommonArgs) -> Result<RawConfig> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Error::validation(format!(
            "cannot read config file {}: {e}",
            args.config.display()
        ))
    })?;
    let mut raw = RawConfig::parse(&text)?;
    for spec in &args.overrides {
        raw.apply_override(spec)?;
    }
    if let Some(seed) = args.seed_data {
        raw.set("run", "seed_data", &seed.to_string());
    }
    if let Some(seed) = args.seed_init {
        raw.set("run", "seed_init", &seed.to_string());
    }
    if let Some(seed) = args.seed_train {
        raw.set("run", "seed_train", &seed.to_string());
    }
    Ok(raw)
}

fn echo_effective_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("effective_config.txt"), cfg.to_raw().to_text())?;
    Ok(())
}

fn print_result(result: &ExperimentResult, quiet: bool) {
    if !quiet {
        for r in &result.records {
            println!(
                "round {:>4}: F_e={:.6} F_m={:.6} F_l={:.6} R={:.6} acc={:.2}% f1={:.4} ari={:.3}",
                r.round, r.f_after_e, r.f_after_m, r.f_after_l, r.r_value, r.micro_acc,
                r.macro_f1, r.ari_vs_truth
            );
        }
    }
    let s = &result.summary;
    println!(
        "summary: rounds={} window={} acc={:.2}%±{:.2} f1={:.4}±{:.4} F={:.6} R={:.6} ari={:.3}",
        s.rounds_run,
        s.window,
        s.micro_acc_mean,
        s.micro_acc_std,
        s.macro_f1_mean,
        s.macro_f1_std,
        s.final_f,
        s.final_r,
        s.final_ari
    );
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = ExperimentConfig::from_raw(&load_raw(&args)?)?;
            let mut result = engine::run_experiment(&cfg)?;
            engine::write_artifacts(&mut result, &args.out)?;
            echo_effective_config(&cfg, &args.out)?;
            print_result(&result, args.quiet);
            Ok(())
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let base = ExperimentConfig::from_raw(&load_raw(&common)?)?;
            let results = engine::sweep(&base, &axis, &values)?;
            echo_effective_config(&base, &common.out)?;
            let mut index = Vec::new();
            for (value, mut result) in values.iter().zip(results) {
                let slug: String = value
                    .chars()
                    .map(|c| if c.is_alphanumeric() { c } else { '_' })
                    .collect();
                let dir = common.out.join(format!("sweep_{slug}"));
                engine::write_artifacts(&mut result, &dir)?;
                if !common.quiet {
                    println!("--- {axis} = {value} ---");
                }
                print_result(&result, true);
                index.push(serde_json::json!({
                    "axis": axis,
                    "value": value,
                    "summary": result.summary,
                }));
            }
            let mut text = serde_json::to_string_pretty(&index)?;
            text.push('\n');
            std::fs::write(common.out.join("sweep_summary.json"), text)?;
            Ok(())
        }
        Command::CheckTheorems(args) => {
            let mut raw = load_raw(&args)?;
            raw.set("run", "theorem_check_mode", "true");
            let cfg = ExperimentConfig::from_raw(&raw)?;
            let mut result = engine::run_experiment(&cfg)?;
            engine::write_artifacts(&mut result, &args.out)?;
            echo_effective_config(&cfg, &args.out)?;
            print_result(&result, args.quiet);
            println!(
                "theorem checks passed: F non-increasing across E/M/L for {} rounds",
                result.records.len()
            );
            Ok(())
        }
        Command::PartitionStats(args) => {
            let cfg = ExperimentConfig::from_raw(&load_raw(&args)?)?;
            let (dataset, partition) = engine::build_data(&cfg)?;
            let stats = engine::partition_stats(&dataset, &partition);
            std::fs::create_dir_all(&args.out)?;
            std::fs::write(args.out.join("partition_stats.csv"), stats.to_csv())?;
            if !args.quiet {
                print!("{}", stats.to_csv());
            }
            println!(
                "intra-cluster client histogram L1 = {:.4}, inter-cluster histogram L1 = {:.4}",
                stats.intra_cluster_l1, stats.inter_cluster_l1
            );
            Ok(())
        }
    }
}
