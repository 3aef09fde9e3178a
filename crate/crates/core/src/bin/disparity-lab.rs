use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use disparity_lab::data::{self, io, RawTable, Schema};
use disparity_lab::experiment::{self, ExperimentConfig, Generator};
use disparity_lab::metrics::{self, EvalReport};
use disparity_lab::model::ModelParams;
use disparity_lab::theory::{self, GridSpec, OptimumReport, TheoremScenario};
use disparity_lab::Result;

#[derive(Parser)]
#[command(name = "disparity-lab", version, about = "Learn representational disparities between observed and desired decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenName {
    Thm42,
    Thm43,
}

#[derive(Clone, Copy, ValueEnum)]
enum Thm {
    #[value(name = "4.1")]
    Single,
    #[value(name = "4.2")]
    Multi,
    #[value(name = "4.3")]
    Branches,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as canonical CSV.
    Gen {
        #[arg(long, value_enum)]
        name: GenName,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn raw tabular files into a canonical binary CSV.
    Preprocess {
        /// Raw input file; repeat to concatenate several.
        #[arg(long, required = true)]
        raw: Vec<PathBuf>,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a configured experiment and write its report directory.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Override a config entry, `key=value`.
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Worker threads (0 uses all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print the optimum of a single-node setting.
    Theorem {
        #[arg(long, value_enum)]
        thm: Thm,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, default_value_t = 0.999)]
        a: f64,
        #[arg(long = "logit-o0", default_value_t = 0.0, allow_hyphen_values = true)]
        logit_o0: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        alpha: f64,
        /// Disparity nodes for 4.2.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Cross-check against a brute-force grid.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value_t = 151)]
        grid_points: usize,
    },
    /// Evaluate saved parameters on a canonical CSV.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "data")]
        name: String,
        #[arg(long, default_value = "-")]
        case: String,
    },
}

fn print_report(r: &OptimumReport) {
    println!("branch\t{}", r.branch);
    println!("l_min\t{}", r.l_min);
    if let Some(b) = r.b_opti {
        println!("b_opti\t{b}");
    }
    println!("w\t{}\nw_sr\t{}\nbias\t{}", r.weights.w, r.weights.w_sr, r.weights.bias);
    for m in &r.branches {
        print!("branch_min\t{}\t{}\t{}", m.branch, m.loss, m.b);
        if let Some((l, b)) = m.interior {
            print!("\tinterior\t{l}\t{b}");
        }
        println!();
    }
}

fn verify(sc: &TheoremScenario, expected: f64, points: usize) -> Result<bool> {
    let g = theory::grid_oracle(
        sc,
        &GridSpec {
            points,
            ..GridSpec::default()
        },
    )?;
    let gap = g.l_min - expected;
    let ok = gap.abs() <= g.resolution;
    println!("grid_l_min\t{}\ngrid_resolution\t{}", g.l_min, g.resolution);
    println!(
        "grid_weights\t{}\t{}\t{}",
        g.weights.w, g.weights.w_sr, g.weights.bias
    );
    println!("verify\t{}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

#[allow(clippy::too_many_arguments)]
fn theorem(thm: Thm, delta: f64, a: f64, logit_o0: f64, alpha: f64, k: usize, check: bool, points: usize) -> Result<bool> {
    let sc = TheoremScenario::new(delta, alpha, logit_o0, a)?;
    match thm {
        Thm::Single | Thm::Multi => {
            let r = theory::thm41_optimum(delta)?;
            if let Thm::Multi = thm {
                for sol in theory::thm42_optimum(delta, k)? {
                    let ws: Vec<String> = sol
                        .units
                        .iter()
                        .map(|u| format!("({}, {}, {})", u.w, u.w_sr, u.bias))
                        .collect();
                    println!("solution\t{}\t{}", sol.active, ws.join(" "));
                }
            }
            print_report(&r);
            // The closed form holds when the gap is closed exactly, so the
            // full loss at the optimum is the L1 cost alone.
            if check {
                return verify(&sc, (1.0 - a) * r.l_min, points);
            }
        }
        Thm::Branches => {
            let r = theory::thm43_optimum(&sc)?;
            print_report(&r);
            if check {
                return verify(&sc, r.l_min, points);
            }
        }
    }
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen { name, n, seed, out } => {
            let g = match name {
                GenName::Thm42 => Generator::Thm42,
                GenName::Thm43 => Generator::Thm43,
            };
            io::write_canonical(&out, &g.generate(n, seed)?, false)?;
            Ok(true)
        }
        Command::Preprocess { raw, schema, out } => {
            let schema = Schema::load(&schema)?;
            let paths: Vec<&Path> = raw.iter().map(PathBuf::as_path).collect();
            let d = data::preprocess(&RawTable::read(&paths, &schema)?, &schema)?;
            io::write_canonical(&out, &d, true)?;
            eprintln!("{} rows, {} features", d.len(), d.n_features());
            Ok(true)
        }
        Command::Experiment { config, overrides, jobs } => {
            #[cfg(feature = "parallel")]
            if jobs > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build_global()
                    .map_err(|e| disparity_lab::Error::Config(e.to_string()))?;
            }
            #[cfg(not(feature = "parallel"))]
            let _ = jobs;
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let out = experiment::run_experiment(&cfg)?;
            print!("{}", out.summary_csv);
            for (k, e) in &out.failures {
                eprintln!("split {k} failed: {e}");
            }
            Ok(out.success())
        }
        Command::Theorem {
            thm,
            delta,
            a,
            logit_o0,
            alpha,
            k,
            verify,
            grid_points,
        } => theorem(thm, delta, a, logit_o0, alpha, k, verify, grid_points),
        Command::Eval { params, data, name, case } => {
            let p = ModelParams::load(&params)?;
            let d = io::read_canonical(&data)?;
            let r = metrics::evaluate(&p, &d)?;
            println!("{}\n{}", EvalReport::CSV_HEADER, r.csv_row(&name, &case, 0)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
