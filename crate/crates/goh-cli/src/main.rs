//! `goh` — simulate extended processes, check the five certificate
//! conditions, compute set-valued brackets, run variation convergence
//! oracles, and search for multipliers.

use goh_cli::files;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use goh_core::checker::{
    run_full_check, search_multipliers, CheckConfig, CheckError, SearchConfig,
};
use goh_core::genjac::{covector_interval, setvalued_bracket, ConvexHullSet, Method};
use goh_core::integrate::{solve_forward, StepConfig};
use goh_core::nsfield::{parse_expr, Env};
use goh_core::problem::{extend_process, RateProfile};
use goh_core::variations::qdq_oracle;

#[derive(Parser)]
#[command(
    name = "goh",
    version,
    about = "Nonsmooth higher-order maximum-principle toolkit"
)]
struct Cli {
    /// RNG seed (the GOH_SEED environment variable takes precedence).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the data-parallel lanes (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate an extended process and print the endpoint summary.
    Simulate {
        problem: PathBuf,
        process: PathBuf,
        /// Write per-sample rows `s, y0, x.., yl, beta` to a CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        step_rel: Option<f64>,
        #[arg(long)]
        step_abs: Option<f64>,
    },
    /// Check conditions i)–v) for a candidate process and multipliers.
    Check {
        problem: PathBuf,
        process: PathBuf,
        multipliers: PathBuf,
        /// Use the problem's variant fields for the bracket computations.
        #[arg(long)]
        paper_variant: bool,
        /// Midpoint-grid cells for the pointwise conditions.
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Bracket estimator: enumeration | sampling.
        #[arg(long, default_value = "enumeration")]
        method: String,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Set-valued bracket hull at a point, with optional covector interval.
    Bracket {
        problem: PathBuf,
        /// Evaluation point, comma-separated state coordinates.
        #[arg(long)]
        point: String,
        /// Field pair, one-based.
        #[arg(long, num_args = 2)]
        pair: Vec<usize>,
        /// enumeration | sampling | both.
        #[arg(long, default_value = "enumeration")]
        method: String,
        /// Covector components, comma-separated expressions in `s`.
        #[arg(long)]
        covector: Option<String>,
        /// Value of `s` at which covector expressions are evaluated.
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long)]
        paper_variant: bool,
    },
    /// Difference-quotient convergence report for control variations.
    Variations {
        problem: PathBuf,
        process: PathBuf,
        /// Variation spec file.
        spec: PathBuf,
        /// Comma-separated ε schedule, e.g. `1e-2,1e-3,1e-4`.
        #[arg(long)]
        eps_schedule: Option<String>,
        #[arg(long)]
        paper_variant: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mesh search for multipliers satisfying conditions i)–iv).
    Search {
        problem: PathBuf,
        process: PathBuf,
        /// Simplex mesh resolution for (λ, ξ).
        #[arg(long, default_value_t = 12)]
        resolution: usize,
        /// Grid cells for the screening Hamiltonian test.
        #[arg(long, default_value_t = 41)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reparametrize a strict-sense process into a canonical extended one.
    Extend {
        problem: PathBuf,
        /// Strict process file (pieces of duration, u, a).
        strict: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn effective_seed(flag: u64) -> u64 {
    std::env::var("GOH_SEED")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(flag)
}

/// Trim a fixed-precision rendering: `1.0000000` → `1`, `-0` → `0`.
fn fmt(x: f64) -> String {
    let s = format!("{x:.7}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" || s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn parse_method(text: &str) -> Result<Method> {
    Ok(match text {
        "enumeration" => Method::Enumeration,
        "sampling" => Method::Sampling,
        "mollified" => Method::Mollified,
        other => bail!("unknown method `{other}` (expected enumeration | sampling | mollified)"),
    })
}

fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("parsing `{t}`")))
        .collect()
}

fn write_or_print(json: &str, out: &Option<PathBuf>) -> Result<()> {
    println!("{json}");
    if let Some(path) = out {
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BracketOutput {
    pair: (usize, usize),
    point: Vec<f64>,
    variant: bool,
    hulls: Vec<ConvexHullSet>,
    hausdorff: Option<f64>,
    interval: Option<(f64, f64)>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let seed = effective_seed(cli.seed);
    match run(cli.command, seed) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command, seed: u64) -> Result<ExitCode> {
    match command {
        Command::Simulate {
            problem,
            process,
            csv,
            step_rel,
            step_abs,
        } => {
            let problem = files::load_problem(&problem)?;
            let (ep, _) = files::load_process(&process, &problem)?;
            let mut step = StepConfig::default();
            if let Some(h) = step_rel {
                step.h_rel = h;
            }
            if let Some(h) = step_abs {
                step.h_abs = h;
            }
            let integrated = solve_forward(&problem, &ep, None, &step)?;
            let tr = integrated.samples.as_ref().expect("samples recorded");
            let (y0, y, yl, beta) = tr.endpoint();
            let env = Env::state(y).with_t(y0);
            let final_cost = problem.psi.eval(&env)?;
            if let Some(path) = csv {
                let mut rows = String::new();
                rows.push_str("s,y0");
                for k in 0..problem.dims.n {
                    rows.push_str(&format!(",x{}", k + 1));
                }
                rows.push_str(",yl,beta\n");
                for k in 0..tr.s.len() {
                    rows.push_str(&format!("{},{}", tr.s[k], tr.y0[k]));
                    for v in &tr.y[k] {
                        rows.push_str(&format!(",{v}"));
                    }
                    rows.push_str(&format!(",{},{}\n", tr.yl[k], tr.beta[k]));
                }
                std::fs::write(&path, rows)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let coords: Vec<String> = std::iter::once(fmt(y0))
                .chain(y.iter().map(|v| fmt(*v)))
                .collect();
            println!(
                "endpoint ({}) cost {} beta {}",
                coords.join(", "),
                fmt(yl + final_cost),
                fmt(beta)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            problem,
            process,
            multipliers,
            paper_variant,
            grid,
            method,
            out,
        } => {
            let problem = files::load_problem(&problem)?;
            let (ep, target_override) = files::load_process(&process, &problem)?;
            let mult = files::load_multipliers(&multipliers, &problem)?;
            let mut cfg = CheckConfig::default().with_seed(seed);
            cfg.grid_n = grid;
            cfg.variant = paper_variant;
            cfg.bracket_method = parse_method(&method)?;
            let report = match run_full_check(&problem, &ep, &mult, target_override.as_ref(), &cfg)
            {
                Ok(r) => r,
                Err(CheckError::Infeasible(msg)) => bail!("candidate infeasible: {msg}"),
                Err(e) => return Err(e.into()),
            };
            let json = serde_json::to_string_pretty(&report)?;
            write_or_print(&json, &out)?;
            Ok(if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Bracket {
            problem,
            point,
            pair,
            method,
            covector,
            s,
            paper_variant,
        } => {
            let problem_data = files::load_problem(&problem)?;
            let point = parse_floats(&point)?;
            if point.len() != problem_data.dims.n {
                bail!(
                    "point needs {} coordinates, found {}",
                    problem_data.dims.n,
                    point.len()
                );
            }
            let [i, j] = pair[..] else {
                bail!("--pair needs exactly two indices");
            };
            if i == 0 || j == 0 || i > problem_data.m1 || j > problem_data.m1 || i == j {
                bail!(
                    "pair indices must be distinct and within 1..={}",
                    problem_data.m1
                );
            }
            let fields = problem_data.bracket_fields(paper_variant)?;
            let env = Env::state(&point);
            let cfg = goh_core::genjac::GenJacConfig::default().with_seed(seed);
            let methods: Vec<Method> = match method.as_str() {
                "both" => vec![Method::Enumeration, Method::Sampling],
                one => vec![parse_method(one)?],
            };
            let mut hulls = Vec::new();
            for m in &methods {
                hulls.push(setvalued_bracket(
                    &fields[i - 1],
                    &fields[j - 1],
                    &env,
                    *m,
                    &cfg,
                )?);
            }
            let hausdorff = (hulls.len() == 2).then(|| hulls[0].hausdorff(&hulls[1]));
            let interval = match &covector {
                Some(text) => {
                    let comps: Result<Vec<f64>> = text
                        .split(',')
                        .map(|t| {
                            let e = parse_expr(t.trim(), problem_data.dims)
                                .with_context(|| format!("covector component `{t}`"))?;
                            Ok(e.eval(&Env::default().with_s(s))?)
                        })
                        .collect();
                    let p = comps?;
                    let iv = covector_interval(&p, &hulls[0])?;
                    Some((iv.lo, iv.hi))
                }
                None => None,
            };
            let output = BracketOutput {
                pair: (i, j),
                point,
                variant: paper_variant,
                hulls,
                hausdorff,
                interval,
            };
            println!("{}", serde_json::to_string_pretty(&output)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Variations {
            problem,
            process,
            spec,
            eps_schedule,
            paper_variant,
            out,
        } => {
            let problem = files::load_problem(&problem)?;
            let (ep, _) = files::load_process(&process, &problem)?;
            let (variations, file_eps) = files::load_variations(&spec, &problem)?;
            let eps = match eps_schedule {
                Some(text) => parse_floats(&text)?,
                None => file_eps.unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]),
            };
            if eps.is_empty() || eps.iter().any(|e| *e <= 0.0) {
                bail!("the ε schedule must be positive");
            }
            let mut genjac = goh_core::genjac::GenJacConfig::default().with_seed(seed);
            genjac.seed = seed;
            let report = qdq_oracle(
                &problem,
                &ep,
                &variations,
                &eps,
                1e-4,
                paper_variant,
                &StepConfig::default(),
                &genjac,
            )?;
            let json = serde_json::to_string_pretty(&report)?;
            write_or_print(&json, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Search {
            problem,
            process,
            resolution,
            grid,
            out,
        } => {
            let problem = files::load_problem(&problem)?;
            let (ep, target_override) = files::load_process(&process, &problem)?;
            let cfg = CheckConfig::default().with_seed(seed);
            let mut search = SearchConfig::default();
            search.resolution = resolution;
            search.screen_grid_n = grid;
            let outcome =
                match search_multipliers(&problem, &ep, target_override.as_ref(), &cfg, &search) {
                    Ok(o) => o,
                    Err(CheckError::Infeasible(msg)) => bail!("candidate infeasible: {msg}"),
                    Err(CheckError::SearchCap(msg)) => bail!("search-space cap exceeded: {msg}"),
                    Err(e) => return Err(e.into()),
                };
            let json = serde_json::to_string_pretty(&outcome)?;
            write_or_print(&json, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Extend {
            problem,
            strict,
            out,
        } => {
            let problem = files::load_problem(&problem)?;
            let sp = files::load_strict_process(&strict, &problem)?;
            let ep = extend_process(&problem, &sp, RateProfile::Uniform)?;
            let text = files::write_process(&ep)?;
            match out {
                Some(path) => std::fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
