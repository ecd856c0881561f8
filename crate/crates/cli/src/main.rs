//! `copra`: generate instances, solve them, run sweeps and check solutions.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use copra_core::greedy::greedy_schedule;
use copra_core::io::{instance_to_json, solution_to_json};
use copra_core::lda::{run_lda, trace_csv};
use copra_core::oracle::{solve_exact, OracleLimits};
use copra_core::{
    check_feasibility, generate_instance, read_instance, read_solution, results_csv,
    run_experiment, total_cost, GenConfig, Instance, LdaOptions, SolutionDoc, SweepSpec,
};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(
    name = "copra",
    version,
    about = "Joint caching, refresh and recommendation scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance from a generator config.
    Gen(GenArgs),
    /// Solve an instance and write the solution.
    Solve(SolveArgs),
    /// Run a parameter sweep and write a results table.
    Sweep(SweepArgs),
    /// Check a solution against an instance.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generator config (TOML or JSON); defaults apply to missing fields.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    contents: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    rec_limit: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Greedy,
    Lda,
    Oracle,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "lda")]
    algo: Algo,
    /// Solve with the recommendation limit forced to zero.
    #[arg(long)]
    no_recommendation: bool,
    #[arg(long)]
    lda_iters: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    /// Probability quantization of the pricing DP.
    #[arg(long)]
    quantization_m: Option<u32>,
    /// Write the per-iteration LDA trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Oracle size guard.
    #[arg(long, default_value_t = OracleLimits::default().max_states)]
    oracle_max_states: f64,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec (TOML or JSON).
    spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the instance seed of the sweep base config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lda_iters: Option<usize>,
    /// Leave wall times out so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    solution: PathBuf,
}

/// Exit status 1: bad input or infeasible solution; 2: solver failure.
enum Failure {
    Input(String),
    Solver(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    read_instance(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    let mut cfg: GenConfig = match &a.config {
        Some(path) => read_config(path)?,
        None => GenConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.contents {
        cfg.num_contents = v;
    }
    if let Some(v) = a.slots {
        cfg.num_slots = v;
    }
    if let Some(v) = a.rho {
        cfg.rho = v;
    }
    if let Some(v) = a.rec_limit {
        cfg.rec_limit = v;
    }
    let inst = generate_instance(&cfg).map_err(|e| Failure::Input(e.to_string()))?;
    emit(a.output.as_deref(), &instance_to_json(&inst))
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let mut inst = load_instance(&a.instance)?;
    if a.no_recommendation {
        inst = inst.without_recommendation();
    }
    let mut doc = match a.algo {
        Algo::Greedy => SolutionDoc::new(greedy_schedule(&inst)),
        Algo::Oracle => {
            let exact = solve_exact(
                &inst,
                &OracleLimits {
                    max_states: a.oracle_max_states,
                },
            )
            .map_err(|e| Failure::Input(e.to_string()))?;
            let mut doc = SolutionDoc::new(exact.solution);
            doc.lower_bound = Some(exact.cost);
            doc
        }
        Algo::Lda => {
            let defaults = LdaOptions::default();
            let options = LdaOptions {
                iterations: a.lda_iters.unwrap_or(defaults.iterations),
                eta: a.eta.unwrap_or(defaults.eta),
                quantization_m: a.quantization_m.unwrap_or(defaults.quantization_m),
            };
            let res =
                run_lda(&inst, &options.params()).map_err(|e| Failure::Solver(e.to_string()))?;
            if let Some(path) = &a.trace {
                fs::write(path, trace_csv(&res.trace))
                    .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            }
            let solution = res
                .incumbent
                .ok_or_else(|| Failure::Solver("no feasible solution was found".to_string()))?;
            let mut doc = SolutionDoc::new(solution);
            doc.lower_bound = Some(res.lower_bound);
            doc
        }
    };
    let cost = total_cost(&inst, &doc.solution).map_err(|e| Failure::Solver(e.to_string()))?;
    doc.algorithm = Some(
        match a.algo {
            Algo::Greedy => "greedy",
            Algo::Lda => "lda",
            Algo::Oracle => "oracle",
        }
        .to_string(),
    );
    doc.cost = Some(cost);
    emit(a.output.as_deref(), &solution_to_json(&doc))?;
    if a.output.is_some() {
        match doc.lower_bound {
            Some(lb) => println!("cost {cost} lower_bound {lb}"),
            None => println!("cost {cost}"),
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut spec: SweepSpec = read_config(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.base.seed = seed;
    }
    if let Some(k) = a.lda_iters {
        spec.lda.iterations = k;
    }
    spec.validate().map_err(|e| Failure::Input(e.to_string()))?;
    let rows =
        run_experiment(&spec, a.jobs, !a.no_timing).map_err(|e| Failure::Solver(e.to_string()))?;
    emit(a.output.as_deref(), &results_csv(&rows))
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let inst = load_instance(&a.instance)?;
    let doc = read_solution(&a.solution)
        .map_err(|e| Failure::Input(format!("{}: {e}", a.solution.display())))?;
    let violations = check_feasibility(&inst, &doc.solution);
    if !violations.is_empty() {
        println!("infeasible: {} violation(s)", violations.len());
        for v in &violations {
            println!("  {v}");
        }
        return Err(Failure::Input("solution is infeasible".to_string()));
    }
    let cost = total_cost(&inst, &doc.solution).map_err(|e| Failure::Input(e.to_string()))?;
    println!("feasible");
    println!("cost {cost}");
    if let Some(recorded) = doc.cost {
        if (recorded - cost).abs() > 1e-9 * cost.abs().max(1.0) {
            println!("recorded cost {recorded} differs");
            return Err(Failure::Input("recorded cost does not match".to_string()));
        }
    }
    Ok(())
}
