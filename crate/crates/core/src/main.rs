use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scso::decompose::{build_junction_graph, newman_fast};
use scso::experiment::{
    read_sample, run_cycle_sweep, run_experiment, Algorithm, ExperimentSpec, PartitionSource,
    PreparedProblem,
};
use scso::network::load_scenario;
use scso::plan::SignalPlan;
use scso::sim::{simulate, SimConfig};
use scso::stats::wilcoxon_ranksum;

#[derive(Parser)]
#[command(name = "scso", version, about = "Cooperative surrogate-assisted signal plan optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a scenario over several seeds and write per-seed logs plus summary.csv.
    Run(RunArgs),
    /// Partition the junction graph with the greedy modularity algorithm.
    Decompose {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one plan and print the result as JSON.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        horizon: u32,
    },
    /// Statistical comparisons of two final-fitness samples.
    Stats {
        #[command(subcommand)]
        test: StatsCommand,
    },
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Two-sided Wilcoxon rank-sum test.
    Ranksum {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "scso")]
    algo: Algorithm,
    /// JSON file mapping junction ids to group labels.
    #[arg(long, conflicts_with = "decompose")]
    partition: Option<PathBuf>,
    #[arg(long, value_parser = ["newman"], default_value = "newman")]
    decompose: String,
    #[arg(long, default_value_t = 2)]
    cycles: usize,
    /// Run once per listed cycle count and write sweep.csv (scso only).
    #[arg(long, value_delimiter = ',', conflicts_with = "cycles")]
    sweep_cycles: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5000)]
    budget: usize,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Arrival seed of the simulator, shared by all runs.
    #[arg(long, default_value_t = 0)]
    sim_seed: u64,
    #[arg(long, default_value_t = 500)]
    horizon: u32,
}

fn run(args: RunArgs) -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ExperimentSpec::new(&args.scenario, args.algo, &args.out);
    spec.partition = match args.partition {
        Some(p) => PartitionSource::File(p),
        None => PartitionSource::Newman,
    };
    spec.cycles = args.cycles;
    spec.budget = args.budget;
    spec.seeds = args.seeds;
    spec.sim = SimConfig {
        seed: args.sim_seed,
        horizon: args.horizon,
        ..SimConfig::default()
    };
    if let Some(counts) = args.sweep_cycles {
        spec.validate()?;
        let problem = PreparedProblem::load(&spec.scenario, &spec.partition)?;
        let rows = run_cycle_sweep(&problem, &spec, &counts)?;
        for r in rows {
            println!("c={} median={:.4}", r.cycles, r.median_fitness);
        }
        return Ok(());
    }
    let report = run_experiment(&spec)?;
    for r in &report.rows {
        println!("seed={} final_fitness={:.4} sims={}", r.seed, r.final_fitness, r.sims_used);
    }
    println!("median={:.4}", report.median_fitness());
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Decompose { scenario, out } => {
            let scenario = load_scenario(&scenario)?;
            let partition = newman_fast(&build_junction_graph(&scenario)?)?;
            std::fs::write(&out, partition.to_json(&scenario))?;
            println!(
                "{} sub-networks, Q = {:.6}",
                partition.group_count(),
                partition.modularity()
            );
            Ok(())
        }
        Command::Simulate {
            scenario,
            plan,
            seed,
            horizon,
        } => {
            let scenario = load_scenario(&scenario)?;
            let plan: SignalPlan = serde_json::from_str(&std::fs::read_to_string(&plan)?)?;
            let config = SimConfig {
                seed,
                horizon,
                ..SimConfig::default()
            };
            let result = simulate(&scenario, &plan, config)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
        Command::Stats {
            test: StatsCommand::Ranksum { a, b },
        } => {
            let r = wilcoxon_ranksum(&read_sample(&a)?, &read_sample(&b)?)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
