use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmd_planner::harness::{
    benchmark_cases, calibrate_scenario, empty_scenario, generate_square_street, one_wall_scenario,
    run_trial_with_bank, square_street_suite, BankSource, HarnessConfig, PlannerKind, Scenario,
    StreetLayout,
};
use mmd_planner::uncertainty::default_bank;
use mmd_planner::voxel::{query_bench, QueryBenchConfig};
use mmd_planner::Result;
use nalgebra::Vector3;

#[derive(Parser)]
#[command(
    name = "mmdplan",
    version,
    about = "Distribution-aware drone planning near uncertain facades"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file.
    Gen {
        #[arg(long, value_enum, default_value = "square-street")]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Fly one mission and write its trajectory and metrics.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "scp")]
        planner: Planner,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Compare planners over seeds. Without a scenario, runs one generated
    /// street layout per seed.
    Bench {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Restrict to one planner; all three by default.
        #[arg(long, value_enum)]
        planner: Option<Planner>,
        #[arg(long, default_value_t = 30)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Time analytic signed distance against a voxel distance field.
    QueryBench {
        /// Defaults to a compact generated street block.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        resolution: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate a facade error bank from simulated views of a scenario.
    Calibrate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Write the synthetic error bank.
    BankGen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        size: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Planner and execution settings replacing the scenario's own.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    SquareStreet,
    OneWall,
    Empty,
}

#[derive(Clone, Copy, ValueEnum)]
enum Planner {
    Cem,
    Scp,
    Det,
}

impl From<Planner> for PlannerKind {
    fn from(p: Planner) -> Self {
        match p {
            Planner::Cem => PlannerKind::Cem,
            Planner::Scp => PlannerKind::Scp,
            Planner::Det => PlannerKind::Det,
        }
    }
}

fn load_scenario(path: &Path, common: &Common) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let BankSource::File { path: bank } = &s.bank {
        if bank.is_relative() {
            let dir = path.parent().unwrap_or(Path::new("."));
            s.bank = BankSource::File {
                path: dir.join(bank),
            };
        }
    }
    apply_config(&mut s, common)?;
    Ok(s)
}

fn apply_config(s: &mut Scenario, common: &Common) -> Result<()> {
    if let Some(path) = &common.config {
        s.config = HarnessConfig::load(path)?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { kind, seed, common } => {
            let mut s = match kind {
                Kind::SquareStreet => generate_square_street(seed, &StreetLayout::default())?,
                Kind::OneWall => one_wall_scenario(seed)?,
                Kind::Empty => {
                    empty_scenario(Vector3::new(0.0, 0.0, 10.0), Vector3::new(60.0, 0.0, 10.0))?
                }
            };
            apply_config(&mut s, &common)?;
            write(&common.out, "scenario.json", &(s.to_json()? + "\n"))
        }
        Command::Plan {
            scenario,
            planner,
            seed,
            common,
        } => {
            let s = load_scenario(&scenario, &common)?;
            let bank = s.bank.load(None)?;
            let outcome = run_trial_with_bank(&s, planner.into(), seed, Some(&bank))?;
            outcome.save(&common.out)?;
            let m = &outcome.metrics;
            println!(
                "success={} clearance={:.3} length={:.1} replans={} compute={:.3}s{}",
                m.success,
                m.min_gt_clearance,
                m.traversed_length,
                m.replans,
                m.compute_seconds,
                m.failure
                    .as_deref()
                    .map(|f| format!(" failure={f}"))
                    .unwrap_or_default()
            );
            Ok(())
        }
        Command::Bench {
            scenario,
            planner,
            seeds,
            seed,
            common,
        } => {
            let seeds: Vec<u64> = (seed..seed + seeds).collect();
            let mut cases = match scenario {
                Some(path) => {
                    let s = load_scenario(&path, &common)?;
                    seeds.iter().map(|&k| (s.clone(), k)).collect()
                }
                None => square_street_suite(&seeds, &StreetLayout::default())?,
            };
            for (s, _) in &mut cases {
                apply_config(s, &common)?;
            }
            let planners: Vec<PlannerKind> = match planner {
                Some(p) => vec![p.into()],
                None => PlannerKind::ALL.to_vec(),
            };
            let report = benchmark_cases(&cases, &planners, |r| {
                eprintln!(
                    "{} {} seed {}: {}",
                    r.scenario,
                    r.planner,
                    r.seed,
                    if r.metrics.success { "ok" } else { "fail" }
                )
            })?;
            let table = report.to_table();
            print!("{table}");
            write(&common.out, "table.csv", &table)?;
            write(&common.out, "timing.csv", &report.timing_table())?;
            write(
                &common.out,
                "trials.json",
                &(serde_json::to_string_pretty(&report.trials)? + "\n"),
            )
        }
        Command::QueryBench {
            scenario,
            seed,
            resolution,
            common,
        } => {
            let world = match scenario {
                Some(path) => load_scenario(&path, &common)?.buildings,
                None => generate_square_street(seed, &StreetLayout::compact())?.buildings,
            };
            let cfg = QueryBenchConfig {
                resolution,
                rng_seed: seed,
                ..QueryBenchConfig::default()
            };
            let bench = query_bench(&world, &cfg)?;
            let table = bench.to_table();
            print!("{table}");
            println!(
                "build_s={:.3} max_discrepancy={:.4} resolution={}",
                bench.build_s, bench.max_discrepancy, bench.resolution
            );
            write(&common.out, "query_bench.csv", &table)
        }
        Command::Calibrate {
            scenario,
            seeds,
            seed,
            common,
        } => {
            let s = load_scenario(&scenario, &common)?;
            let seeds: Vec<u64> = (seed..seed + seeds).collect();
            let bank = calibrate_scenario(&s, &seeds)?;
            println!("{} facade pairs", bank.yaw_samples.len());
            write(
                &common.out,
                "bank.json",
                &(serde_json::to_string_pretty(&bank)? + "\n"),
            )
        }
        Command::BankGen { seed, size, common } => {
            let bank = default_bank(seed, size)?;
            write(
                &common.out,
                "bank.json",
                &(serde_json::to_string_pretty(&bank)? + "\n"),
            )
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
