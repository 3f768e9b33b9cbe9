//! Command-line surface: fit one dataset, compute oracle quantities, run
//! Monte Carlo experiments, calibrate constants, and verify the noise tail
//! condition. Exit codes: 0 success, 2 config/input error, 3 numeric or
//! calibration failure.

use clap::{Parser, Subcommand};
use std::fs;
use std::io::Read;
use std::path::PathBuf;

use qsparse::confidence::theory_constants;
use qsparse::error::{Error, Result};
use qsparse::experiments::{
    calibrate, run_estimation, run_rate_sweep, run_uq, CalibrationTarget, ConstantsChoice,
    ExperimentConfig,
};
use qsparse::loss::QuantileLevel;
use qsparse::noise::{subgaussian_c1_constants, verify_c1};
use qsparse::oracle::{ebr_assess, oracle, true_support};
use qsparse::selector::{estimate, SelectorConfig};

#[derive(Parser)]
#[command(name = "qsparse", version, about = "Sparse quantile-vector estimation with penalized pattern selection")]
struct Cli {
    /// Worker threads for replication-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one dataset: select the sparsity pattern and report the estimator.
    Fit {
        /// Input file of whitespace/comma-separated reals; stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Selection penalty multiplier; theory preset for the level when omitted.
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Oracle support, oracle rate, and EBR parameter of a known theta.
    Oracle {
        #[arg(long)]
        theta_file: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Oracle penalty multiplier; theory preset when omitted.
        #[arg(long)]
        varkappa: Option<f64>,
    },
    /// Coverage/size experiment over the EBR class.
    Uq {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimation experiment; writes the per-replication CSV report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional sparsity grid: run a rate sweep instead of a single setting.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
    },
    /// Binary-search one constant against a target frequency.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long)]
        which: String,
    },
    /// Empirical check of the noise tail condition on a size x M grid.
    VerifyC1 {
        #[arg(long)]
        config: PathBuf,
    },
}

fn read_numbers(path: Option<&PathBuf>) -> Result<Vec<f64>> {
    let text = match path {
        Some(p) => fs::read_to_string(p)?,
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    let mut values = Vec::new();
    for token in text.split(|c: char| c.is_whitespace() || c == ',') {
        if token.is_empty() {
            continue;
        }
        values.push(
            token
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("not a number: {token}")))?,
        );
    }
    if values.is_empty() {
        return Err(Error::InvalidInput("no numbers in input".into()));
    }
    Ok(values)
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

fn default_selector(level: QuantileLevel) -> Result<SelectorConfig> {
    let (m_xi, alpha_xi) = subgaussian_c1_constants(level);
    Ok(theory_constants(m_xi, alpha_xi, 2.0, level, 0.0)?.selector_config())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit { input, tau, kappa, json } => {
            let level = QuantileLevel::new(tau)?;
            let x = read_numbers(input.as_ref())?;
            let mut cfg = default_selector(level)?;
            if let Some(k) = kappa {
                cfg.kappa = k;
            }
            let (theta_hat, result) = estimate(&x, level, &cfg)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "tau": tau,
                        "kappa": cfg.kappa,
                        "support": result.support.indices(),
                        "criterion_value": result.criterion_value,
                        "theta_hat": theta_hat,
                    })
                );
            } else {
                println!("tau      = {tau}");
                println!("kappa    = {}", cfg.kappa);
                println!("support  = {:?} (1-based)", result.support.indices());
                println!("criterion = {}", result.criterion_value);
                println!("theta_hat = {theta_hat:?}");
            }
        }
        Command::Oracle { theta_file, tau, varkappa } => {
            let level = QuantileLevel::new(tau)?;
            let theta = read_numbers(Some(&theta_file))?;
            let mut cfg = default_selector(level)?;
            if let Some(vk) = varkappa {
                cfg.varkappa = vk;
            }
            let o = oracle(&theta, level, &cfg)?;
            let ebr = ebr_assess(&theta, level, &cfg, 1.0)?;
            println!(
                "{}",
                serde_json::json!({
                    "tau": tau,
                    "varkappa": cfg.varkappa,
                    "oracle_support": o.oracle_support.indices(),
                    "oracle_rate": o.oracle_rate,
                    "residual": o.residual,
                    "penalty_part": o.penalty_part,
                    "true_support": true_support(&theta).indices(),
                    "t_star": if ebr.t_star.is_finite() { serde_json::json!(ebr.t_star) } else { serde_json::json!("inf") },
                })
            );
        }
        Command::Uq { config } => {
            let config = load_config(&config)?;
            let report = run_uq(&config)?;
            println!("{}", serde_json::to_string_pretty(&report.aggregates).unwrap());
        }
        Command::Simulate { config, out, sweep } => {
            let config = load_config(&config)?;
            let mut file = fs::File::create(&out)?;
            match sweep {
                Some(grid) => {
                    let table = run_rate_sweep(&config, &grid)?;
                    table.write_csv(&mut file)?;
                    println!("{}", serde_json::to_string_pretty(&table.rows).unwrap());
                }
                None => {
                    let report = run_estimation(&config)?;
                    report.write_csv(&mut file)?;
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&report.aggregates).unwrap()
                    );
                }
            }
        }
        Command::Calibrate { config, target, which } => {
            let config = load_config(&config)?;
            let which: CalibrationTarget = which.parse()?;
            let outcome = calibrate(&config, target, which)?;
            println!("{}", serde_json::to_string_pretty(&outcome).unwrap());
        }
        Command::VerifyC1 { config } => {
            let config = load_config(&config)?;
            let level = config.level();
            // Explicit constants carry their own tail triple; otherwise the
            // sub-Gaussian derivation with H_xi = 2 applies.
            let (m_xi, alpha_xi, h_xi) = match &config.constants {
                ConstantsChoice::Explicit { set } => (set.m_xi, set.alpha_xi, set.h_xi),
                _ => {
                    let (m, a) = subgaussian_c1_constants(level);
                    (m, a, 2.0)
                }
            };
            let report = verify_c1(
                &config.noise,
                level,
                config.n,
                m_xi,
                alpha_xi,
                h_xi,
                config.reps,
                config.seed,
            )?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if !report.pass {
                std::process::exit(3);
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
