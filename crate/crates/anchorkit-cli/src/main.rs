//! `anchorkit` — scenario-driven UWB anchor mapping experiments.
//!
//! Exit codes: 0 success, 2 scenario validation failure, 3 pipeline stage
//! hard failure in every realization, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anchorkit::sim::{
    run_fusion_demo, run_pipeline, write_fusion_report, write_report, write_waypoints, RunReport,
    Scenario, Stage,
};
use anchorkit::waypoint::optimize_waypoints;
use anchorkit::Error;

#[derive(Parser)]
#[command(name = "anchorkit", version, about = "UWB anchor mapping: initialization pipeline, waypoint planning, and range-fusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the initialization pipeline once and print per-stage errors.
    Init(CommonArgs),
    /// Optimize waypoints for the scenario's anchors; writes waypoints.json.
    Plan(CommonArgs),
    /// One realization with detailed logs (trajectory.csv, ranges.csv, results.json).
    Simulate(CommonArgs),
    /// Full Monte-Carlo comparison; writes results.json and results.csv.
    Montecarlo(CommonArgs),
    /// Range-fusion dropout demo; writes fusion_report.json, rmse.csv, state_log.csv.
    Fuse(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Stage subset, e.g. --stages ls,nls (must respect stage dependencies).
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<String>>,
    /// Worker threads for Monte-Carlo realizations (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_stage(name: &str) -> Result<Stage, Error> {
    match name {
        "ls" => Ok(Stage::Ls),
        "nls" => Ok(Stage::Nls),
        "rnd_wps" => Ok(Stage::RndWps),
        "opt_wps" => Ok(Stage::OptWps),
        other => Err(Error::InvalidScenario(format!(
            "unknown stage '{other}' (expected ls, nls, rnd_wps, opt_wps)"
        ))),
    }
}

fn load_scenario(args: &CommonArgs) -> Result<Scenario, Error> {
    let mut scenario = Scenario::from_path(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.rng_seed = seed;
    }
    if let Some(stages) = &args.stages {
        scenario.stages = stages.iter().map(|s| parse_stage(s)).collect::<Result<_, _>>()?;
        scenario.validate()?;
    }
    Ok(scenario)
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::InvalidScenario(_) | Error::UnsupportedSchema { .. } | Error::InvalidConfig(_) => {
            ExitCode::from(2)
        }
        _ => ExitCode::FAILURE,
    }
}

fn print_aggregates(report: &RunReport) {
    println!("{:<8} {:>12} {:>12} {:>12} {:>6}", "stage", "mean_err_m", "std_err_m", "gamma_err_m", "n");
    for a in &report.aggregates {
        println!(
            "{:<8} {:>12.4} {:>12.4} {:>12.4} {:>6}",
            a.stage.as_str(),
            a.mean_position_error_m,
            a.std_position_error_m,
            a.mean_gamma_error_m,
            a.realizations
        );
    }
}

/// Every realization failed outright: nothing usable was produced.
fn all_realizations_failed(report: &RunReport) -> bool {
    report.realizations.iter().all(|r| r.results.is_empty())
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let args = match &cli.command {
        Command::Init(a) | Command::Plan(a) | Command::Simulate(a) | Command::Montecarlo(a) | Command::Fuse(a) => a,
    };
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let mut scenario = load_scenario(args)?;

    match cli.command {
        Command::Init(ref args) | Command::Simulate(ref args) => {
            scenario.realizations = 1;
            let report = run_pipeline(&scenario)?;
            let realization = &report.realizations[0];
            println!("{:<8} {:>7} {:>12} {:>12} {:>12}", "stage", "anchor", "pos_err_m", "beta_err", "gamma_err_m");
            for row in &realization.results {
                println!(
                    "{:<8} {:>7} {:>12.4} {:>12.4} {:>12.4}",
                    row.stage.as_str(),
                    row.anchor_id,
                    row.position_error_m,
                    row.beta_error,
                    row.gamma_error_m
                );
            }
            for f in &realization.failures {
                eprintln!("stage {} failed: {}", f.stage.as_str(), f.message);
            }
            if matches!(cli.command, Command::Simulate(_)) {
                let (json, csv) = write_report(&report, &args.out)?;
                write_simulation_logs(&scenario, &args.out)?;
                println!("wrote {} and {}", json.display(), csv.display());
            }
            if all_realizations_failed(&report) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Plan(ref args) => {
            let estimates: Vec<_> = scenario.anchors.iter().map(|a| a.position).collect();
            let mut evo = scenario.evo;
            evo.rng_seed = scenario.rng_seed;
            let plan = optimize_waypoints(&scenario.volume, &estimates, &scenario.volume.center, &evo)?;
            println!("optimized {} waypoints, mean GDOP {:.4} after {} generations", plan.waypoints.len(), plan.cost, plan.generations);
            let path = write_waypoints(&plan, &scenario.anchors, &args.out)?;
            println!("wrote {}", path.display());
        }
        Command::Montecarlo(ref args) => {
            let report = run_pipeline(&scenario)?;
            print_aggregates(&report);
            let (json, csv) = write_report(&report, &args.out)?;
            println!("wrote {} and {}", json.display(), csv.display());
            if all_realizations_failed(&report) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Fuse(ref args) => {
            let report = run_fusion_demo(&scenario)?;
            println!("rmse with ranges:    {:.4} m", report.rmse_on_m);
            println!("rmse without ranges: {:.4} m", report.rmse_off_m);
            if let (Some(pre), Some(post)) = (report.pre_dropout_rmse_on_m, report.post_dropout_rmse_on_m) {
                println!("pre-dropout rmse:    {pre:.4} m");
                println!("post-dropout rmse:   {post:.4} m");
            }
            println!("terminal error on/off: {:.4} / {:.4} m", report.terminal_error_on_m, report.terminal_error_off_m);
            write_fusion_report(&report, &args.out)?;
            println!("wrote reports to {}", args.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Extra per-sample logs for `simulate`: the survey trajectory and the raw
/// ranges, regenerated from the same seed streams the pipeline used.
fn write_simulation_logs(scenario: &Scenario, out: &std::path::Path) -> Result<(), Error> {
    use anchorkit::sim::{generate_random_trajectory, simulate_ranges, SeedTree, StreamKind};
    let tree = SeedTree::new(scenario.rng_seed);
    let trajectory = generate_random_trajectory(
        &scenario.volume,
        &scenario.trajectory,
        &mut tree.rng(0, StreamKind::InitTrajectory, 0),
    )?;
    let mut csv = String::from("t_s,x_m,y_m,z_m\n");
    for (t, p) in &trajectory {
        csv.push_str(&format!("{t},{},{},{}\n", p.x, p.y, p.z));
    }
    std::fs::write(out.join("trajectory.csv"), csv)
        .map_err(|source| Error::Io { path: out.join("trajectory.csv"), source })?;

    let ranges = simulate_ranges(&trajectory, &scenario.anchors, &scenario.noise, |i| {
        tree.rng(0, StreamKind::InitRanges, i as u32)
    });
    let mut csv = String::from("t_s,anchor_id,range_m,tag_x_m,tag_y_m,tag_z_m\n");
    for m in &ranges {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.timestamp, m.anchor_id, m.range, m.tag_position.x, m.tag_position.y, m.tag_position.z
        ));
    }
    std::fs::write(out.join("ranges.csv"), csv)
        .map_err(|source| Error::Io { path: out.join("ranges.csv"), source })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
