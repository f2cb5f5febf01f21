//! Command-line interface: model validation, chain and SDE simulation,
//! stationary-density evaluation and normalization, verification suites,
//! and interaction-graph export.
//!
//! All commands are deterministic for a fixed `--seed` (default 0); heavy
//! Monte Carlo work is parallelized with per-block generator streams, so
//! results do not depend on thread count.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use coupled_wf::chain::{chain_params_from_diffusion, simulate_chain};
use coupled_wf::diffusion::simulate_sde;
use coupled_wf::harness::{density_grid, moment_report, stationarity_test};
use coupled_wf::model::{
    interaction_graph, validate_model, FrequencyState, ModelSpec, OccupancyState, ValidatedModel,
};
use coupled_wf::seeds::stream_rng;
use coupled_wf::stationary::{
    flow_residual, normalizer_closed_2x2, normalizer_mc, normalizer_quadrature, NormalizerMethod,
    StationaryDensity,
};
use coupled_wf::trajectory::{format_f64, Trajectory};

#[derive(Parser)]
#[command(
    name = "coupled-wf",
    version,
    about = "Coupled multilocus Wright-Fisher toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Output {
    fn write(&self, text: &str) -> Result<()> {
        match &self.output {
            Some(path) => {
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
            }
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Closed,
    Quadrature,
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file against the standing assumptions and print a
    /// summary.
    Validate { model: PathBuf },
    /// Exact discrete-generation Markov chain; trajectory CSV in diffusion
    /// time n/N.
    SimulateChain {
        model: PathBuf,
        /// Population size N.
        #[arg(long)]
        n: u64,
        #[arg(long)]
        generations: u64,
        /// Record every this many generations.
        #[arg(long, default_value_t = 1)]
        thin: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial per-locus counts, e.g. "70,30;50,50" (default: even).
        #[arg(long)]
        init: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Euler-Maruyama integration of the limiting SDE; trajectory CSV.
    SimulateSde {
        model: PathBuf,
        #[arg(long, value_name = "T")]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Record every this many steps.
        #[arg(long, default_value_t = 1)]
        thin: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial per-locus frequencies, e.g. "0.5,0.5;0.3,0.7"
        /// (default: uniform).
        #[arg(long)]
        init: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Normalized stationary log-density over a midpoint grid of per-locus
    /// first coordinates (biallelic loci).
    DensityEval {
        model: PathBuf,
        /// Grid points per locus axis.
        #[arg(long, default_value_t = 30)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Monte Carlo samples when that route is used.
        #[arg(long, default_value_t = 1 << 20)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Stationary-density normalizer Z.
    Normalize {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        #[arg(long, default_value_t = 1 << 20)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Verify zero probability flow at random interior points; exits
    /// nonzero if any relative residual exceeds the tolerance.
    FlowCheck {
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact conditional moments against their diffusion limits over an N
    /// grid; CSV report.
    Moments {
        model: PathBuf,
        /// Comma-separated population sizes.
        #[arg(long, default_value = "100,1000,10000,100000")]
        n_grid: String,
        /// Evaluation point, e.g. "0.3,0.7;0.5,0.5" (default: uniform);
        /// snapped to each lattice.
        #[arg(long)]
        x: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Compare a recorded trajectory against the stationary density;
    /// JSON summary with TV, per-locus KS, and effective sample size.
    Stationarity {
        model: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        /// Drop this many leading records as burn-in.
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Interaction graph as Graphviz DOT.
    GraphExport {
        model: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

fn load_model(path: &PathBuf) -> Result<ValidatedModel> {
    let spec =
        ModelSpec::from_path(path).with_context(|| format!("reading model {}", path.display()))?;
    Ok(validate_model(&spec)?)
}

fn parse_per_locus<T: std::str::FromStr>(text: &str) -> Result<Vec<Vec<T>>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    text.split(';')
        .map(|locus| {
            locus
                .split(',')
                .map(|v| v.trim().parse::<T>().map_err(anyhow::Error::from))
                .collect()
        })
        .collect()
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Validate { model } => {
            let m = load_model(&model)?;
            let graph = interaction_graph(m.coupling_matrix());
            let edges: Vec<String> = graph
                .edges()
                .map(|(i, j)| format!("{}-{}", i + 1, j + 1))
                .collect();
            println!(
                "model OK: {} loci, alleles = {:?}, couplings = {}, edges = [{}]",
                m.num_loci(),
                m.shape(),
                m.couplings().len(),
                edges.join(", ")
            );
        }
        Command::SimulateChain {
            model,
            n,
            generations,
            thin,
            seed,
            init,
            output,
        } => {
            let m = load_model(&model)?;
            let params = chain_params_from_diffusion(&m, n)?;
            let start = match init {
                Some(text) => OccupancyState::new(parse_per_locus(&text)?, n)?,
                None => OccupancyState::even(m.shape(), n),
            };
            let mut rng = stream_rng(seed, 0);
            let traj = simulate_chain(&params, &start, generations, thin, &mut rng);
            output.write(&traj.to_csv_string())?;
        }
        Command::SimulateSde {
            model,
            t_end,
            dt,
            thin,
            seed,
            init,
            output,
        } => {
            let m = load_model(&model)?;
            if dt <= 0.0 {
                bail!("--dt must be positive");
            }
            let start = match init {
                Some(text) => FrequencyState::new(parse_per_locus(&text)?)?,
                None => FrequencyState::uniform(m.shape()),
            };
            let mut rng = stream_rng(seed, 0);
            let traj = simulate_sde(&m, &start, t_end, dt, thin, &mut rng)?;
            if traj.clamp_events > 0 {
                eprintln!(
                    "note: {} coordinate(s) clamped onto the simplex; consider a smaller --dt",
                    traj.clamp_events
                );
            }
            output.write(&traj.to_csv_string())?;
        }
        Command::DensityEval {
            model,
            grid,
            method,
            samples,
            seed,
            output,
        } => {
            let m = load_model(&model)?;
            let log_z = normalizer_for(&m, method, samples, seed)?.0;
            let rows = density_grid(&m, grid)?;
            let mut text = String::new();
            for i in 0..m.num_loci() {
                text.push_str(&format!("x{}_1,", i + 1));
            }
            text.push_str("log_density\n");
            for (coords, log_unnorm) in rows {
                for c in coords {
                    text.push_str(&format_f64(c));
                    text.push(',');
                }
                text.push_str(&format_f64(log_unnorm - log_z));
                text.push('\n');
            }
            output.write(&text)?;
        }
        Command::Normalize {
            model,
            method,
            samples,
            seed,
        } => {
            let m = load_model(&model)?;
            let (log_z, desc) = normalizer_for(&m, method, samples, seed)?;
            println!(
                "Z = {} (log Z = {}) method = {desc}",
                format_f64(log_z.exp()),
                format_f64(log_z)
            );
        }
        Command::FlowCheck {
            model,
            points,
            tolerance,
            seed,
        } => {
            let m = load_model(&model)?;
            let mut worst = 0.0f64;
            for p in 0..points {
                let mut rng = stream_rng(seed, p as u64);
                let x = random_interior(&mut rng, m.shape());
                let residual = flow_residual(&m, &x)?;
                for r in residual {
                    worst = worst.max(r.abs());
                }
            }
            println!(
                "max relative flow residual over {points} interior points: {}",
                format_f64(worst)
            );
            if worst > tolerance {
                bail!("flow residual {worst:e} exceeds tolerance {tolerance:e}");
            }
        }
        Command::Moments {
            model,
            n_grid,
            x,
            output,
        } => {
            let m = load_model(&model)?;
            let grid: Vec<u64> = n_grid
                .split(',')
                .map(|v| v.trim().parse::<u64>().map_err(anyhow::Error::from))
                .collect::<Result<_>>()?;
            let point = match x {
                Some(text) => FrequencyState::new(parse_per_locus(&text)?)?,
                None => FrequencyState::uniform(m.shape()),
            };
            let report = moment_report(&m, &point, &grid)?;
            for (n, dist) in &report.snaps {
                eprintln!("N = {n}: snapped to lattice, max coordinate shift {dist:.3e}");
            }
            output.write(&report.to_csv_string())?;
        }
        Command::Stationarity {
            model,
            trajectory,
            bins,
            burn_in,
            output,
        } => {
            let m = load_model(&model)?;
            let text = fs::read_to_string(&trajectory)
                .with_context(|| format!("reading trajectory {}", trajectory.display()))?;
            let traj = Trajectory::from_csv_str(&text)?;
            let states = traj
                .states
                .get(burn_in.min(traj.states.len())..)
                .unwrap_or(&[]);
            let report = stationarity_test(&m, states, bins)?;
            let json = serde_json::json!({
                "tv": report.tv,
                "ks": report.ks,
                "iat": report.iat,
                "ess": report.ess,
                "samples": report.samples,
                "bins": report.bins,
            });
            output.write(&format!("{}\n", serde_json::to_string_pretty(&json)?))?;
        }
        Command::GraphExport { model, output } => {
            let m = load_model(&model)?;
            let graph = interaction_graph(m.coupling_matrix());
            output.write(&graph.to_dot())?;
        }
    }
    Ok(())
}

/// Resolve the normalizer per the requested route. Returns (log Z, label).
fn normalizer_for(
    model: &ValidatedModel,
    method: Method,
    samples: u64,
    seed: u64,
) -> Result<(f64, String)> {
    Ok(match method {
        Method::Closed => {
            let z = normalizer_closed_2x2(model)?;
            (z.ln(), "closed-form".into())
        }
        Method::Quadrature => {
            let q = normalizer_quadrature(model)?;
            (
                q.z.ln(),
                format!("quadrature (refinement delta {:.1e})", q.refinement_delta),
            )
        }
        Method::Mc => {
            let mc = normalizer_mc(model, samples, seed)?;
            (
                mc.z.ln(),
                format!(
                    "monte-carlo (se {} over {} samples)",
                    format_f64(mc.standard_error),
                    mc.samples
                ),
            )
        }
        Method::Auto => {
            let density = StationaryDensity::new(model)?.with_mc_settings(samples, seed);
            let n = density.normalizer()?;
            let desc = match n.method {
                NormalizerMethod::ClosedForm => "closed-form".to_string(),
                NormalizerMethod::Quadrature { refinement_delta } => {
                    format!("quadrature (refinement delta {refinement_delta:.1e})")
                }
                NormalizerMethod::MonteCarlo {
                    standard_error,
                    samples,
                } => format!(
                    "monte-carlo (se {} over {samples} samples)",
                    format_f64(standard_error)
                ),
            };
            (n.log_z, desc)
        }
    })
}

fn random_interior(rng: &mut impl rand::Rng, shape: &[usize]) -> FrequencyState {
    let floor = 0.05;
    let per_locus = shape
        .iter()
        .map(|&m| {
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter()
                .map(|v| (1.0 - floor * m as f64) * v / sum + floor)
                .collect()
        })
        .collect();
    FrequencyState::new(per_locus).expect("mixture stays on the simplex")
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
