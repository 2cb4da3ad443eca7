//! Command-line front end: train, fine-tune, evaluate, benchmark, and
//! oracle-check runs driven by one TOML config file. All logic lives in
//! the library; this binary only wires files to it.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use freqsched::agents::{Agent, AgentSpec, ProblemDims, Variant};
use freqsched::checkpoint;
use freqsched::config::{load_config, ExperimentConfig};
use freqsched::env::new_scenario_with_mcs;
use freqsched::error::Error;
use freqsched::eval::{
    bench_latency, cdf_csv, eval_summary_csv, evaluate, latency_csv, oracle_check, render_report,
    training_log_csv, write_text, EvalPolicy,
};
use freqsched::training::{fine_tune, train};

#[derive(Parser)]
#[command(name = "freqsched", about = "MU-MIMO sub-band scheduling laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seeds in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent from scratch and write a checkpoint plus log.
    Train(CommonArgs),
    /// Fine-tune a checkpoint on the configured environment.
    Finetune(CommonArgs),
    /// Evaluate policies against the traditional baseline.
    Eval(CommonArgs),
    /// Benchmark single-state greedy inference latency.
    Bench(CommonArgs),
    /// Evaluate policies against the exhaustive oracle.
    OracleCheck(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Finetune(args) => cmd_finetune(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn setup(args: &CommonArgs) -> freqsched::Result<ExperimentConfig> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.env.seed = seed;
        config.train.seed = seed;
    }
    std::fs::create_dir_all(&args.out)?;
    Ok(config)
}

fn scenario_of(config: &ExperimentConfig) -> freqsched::Result<freqsched::env::Scenario> {
    new_scenario_with_mcs(&config.env, config.env.seed, &config.mcs)
}

fn cmd_train(args: &CommonArgs) -> freqsched::Result<()> {
    let config = setup(args)?;
    let spec = config.require_agent()?.clone();
    let scenario = scenario_of(&config)?;
    let output = train(&scenario, &spec, &config.train, &config.mcs)?;
    write_run_outputs(&args.out, &config, &spec, &scenario, output)
}

fn cmd_finetune(args: &CommonArgs) -> freqsched::Result<()> {
    let config = setup(args)?;
    let source = config.finetune.checkpoint.as_ref().ok_or_else(|| {
        Error::Config("missing key `finetune.checkpoint` in the config".into())
    })?;
    let ckpt = checkpoint::load(source)?;
    let spec = ckpt.spec.clone();
    let scenario = scenario_of(&config)?;
    let output = fine_tune(&scenario, &spec, ckpt.params, &config.train, &config.mcs)?;
    write_run_outputs(&args.out, &config, &spec, &scenario, output)
}

fn write_run_outputs(
    out: &Path,
    config: &ExperimentConfig,
    spec: &AgentSpec,
    scenario: &freqsched::env::Scenario,
    output: freqsched::training::TrainOutput,
) -> freqsched::Result<()> {
    let dims = ProblemDims::from_env(&scenario.config)?;
    let digest = checkpoint::env_digest(&config.env);
    checkpoint::save(&out.join("checkpoint.ckpt"), spec, &dims, digest, &output.params)?;
    write_text(&out.join("training_log.csv"), &training_log_csv(&output.log))?;
    if let Some(last) = output.log.last() {
        println!(
            "finished {} iterations; final validation reward {:.4}",
            output.log.len(),
            last.mean_validation_reward
        );
    }
    println!("wrote {}", out.join("checkpoint.ckpt").display());
    Ok(())
}

fn checkpoint_policies(
    config: &ExperimentConfig,
    scenario: &freqsched::env::Scenario,
) -> freqsched::Result<Vec<EvalPolicy>> {
    config
        .eval
        .checkpoints
        .iter()
        .map(|path| {
            let ckpt = checkpoint::load(path)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "checkpoint".into());
            let name = format!("{}:{}", ckpt.spec.variant.name(), name);
            EvalPolicy::from_checkpoint(name, ckpt, scenario)
        })
        .collect()
}

fn cmd_eval(args: &CommonArgs) -> freqsched::Result<()> {
    let config = setup(args)?;
    let scenario = scenario_of(&config)?;
    let mut policies = Vec::new();
    if config.eval.include_random {
        policies.push(EvalPolicy::random());
    }
    if config.eval.include_oracle {
        policies.push(EvalPolicy::oracle());
    }
    policies.extend(checkpoint_policies(&config, &scenario)?);
    let report = evaluate(policies, &scenario, config.eval.n_states, &config.mcs)?;
    write_text(&args.out.join("eval_summary.csv"), &eval_summary_csv(&report))?;
    for policy in &report.policies {
        let file = format!("cdf_{}.csv", policy.name.replace([':', '/'], "_"));
        write_text(&args.out.join(file), &cdf_csv(policy))?;
    }
    let rendered = render_report(&report);
    write_text(&args.out.join("eval_report.txt"), &rendered)?;
    print!("{rendered}");
    Ok(())
}

fn cmd_bench(args: &CommonArgs) -> freqsched::Result<()> {
    let config = setup(args)?;
    let scenario = scenario_of(&config)?;
    let dims = ProblemDims::from_env(&scenario.config)?;
    let mut policies = checkpoint_policies(&config, &scenario)?;
    if policies.is_empty() {
        // No checkpoints: time freshly built networks of all three
        // architectures at the configured sizes.
        let base = config
            .agent
            .clone()
            .unwrap_or_else(|| AgentSpec::new(Variant::ActionBranching));
        for variant in [Variant::ActionBranching, Variant::Unibranch, Variant::Gnn] {
            let spec = AgentSpec { variant, ..base.clone() };
            let (agent, params) = Agent::build(&spec, &dims, config.env.seed)?;
            policies.push(EvalPolicy::learned(variant.name(), agent, params));
        }
    }
    for &n_iter in &config.bench.gnn_iteration_sweep {
        let base = config.agent.clone().unwrap_or_else(|| AgentSpec::new(Variant::Gnn));
        let spec = AgentSpec {
            variant: Variant::Gnn,
            gnn_iterations: n_iter,
            ..base
        };
        let (agent, params) = Agent::build(&spec, &dims, config.env.seed)?;
        policies.push(EvalPolicy::learned(format!("gnn_iters_{n_iter}"), agent, params));
    }
    let entries = bench_latency(&policies, &scenario, config.bench.n_runs, &config.mcs)?;
    write_text(&args.out.join("latency.csv"), &latency_csv(&entries))?;
    println!("{:<22} {:>14} {:>10}", "policy", "median (us)", "relative");
    for e in &entries {
        println!(
            "{:<22} {:>14.2} {:>10.2}",
            e.name,
            e.median_latency_s * 1e6,
            e.relative
        );
    }
    Ok(())
}

fn cmd_oracle_check(args: &CommonArgs) -> freqsched::Result<()> {
    let config = setup(args)?;
    let scenario = scenario_of(&config)?;
    let mut policies = vec![EvalPolicy::traditional()];
    if config.eval.include_random {
        policies.push(EvalPolicy::random());
    }
    policies.extend(checkpoint_policies(&config, &scenario)?);
    let report = oracle_check(policies, &scenario, config.eval.n_states, &config.mcs)?;
    write_text(&args.out.join("oracle_check.csv"), &eval_summary_csv(&report))?;
    let rendered = render_report(&report);
    write_text(&args.out.join("oracle_check.txt"), &rendered)?;
    print!("{rendered}");
    Ok(())
}
