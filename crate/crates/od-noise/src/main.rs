use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use od_noise::experiment::{
    aggregate_and_score, empirical_points, run_sweep, ReferenceSource, Side, SweepConfig,
};
use od_noise::io;
use od_noise::matrix::{delta, error_summary, ErrorSummary};
use od_noise::noise::apply;
use od_noise::regress::{fit_lowess, infer_od_error, predict_ratio};
use od_noise::svg::render_report;
use od_noise::synth::generate_uniform;

/// Noise modeling and error-ratio analysis for stop-to-stop O-D share
/// matrices.
#[derive(Parser)]
#[command(name = "odnoise", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Boarding,
    Alighting,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Boarding => Side::Boarding,
            SideArg::Alighting => Side::Alighting,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic reference O-D share matrix.
    Generate {
        /// Number of stops (at least 2).
        #[arg(long)]
        n: usize,
        #[arg(long, env = "OD_NOISE_SEED")]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a noise spec to a reference matrix.
    Perturb {
        #[arg(long = "ref")]
        reference: PathBuf,
        /// JSON run configuration holding the noise spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed in the spec file.
        #[arg(long, env = "OD_NOISE_SEED")]
        seed: Option<u64>,
    },
    /// Error metrics and ratios for a reference/estimate pair.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Optional counts CSV; marginal errors are then computed against
        /// these counts instead of the reference matrix marginals.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Also write the metrics as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep of error ratios over N.
    Sweep {
        /// JSON run configuration (noise spec plus sweep settings).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "OD_NOISE_SEED")]
        seed: Option<u64>,
    },
    /// Fit a Lowess smoother to a sweep CSV.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        frac: f64,
        #[arg(long, value_enum, default_value = "boarding")]
        side: SideArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the O-D error from a count-based marginal error.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count_error: f64,
    },
    /// Aggregated O-D error after bundling stops of one side.
    Aggregate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Bundle size.
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        side: SideArg,
    },
    /// Plot-data CSV (and optional SVG) from a sweep and empirical points.
    Report {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        empirical: Option<PathBuf>,
        /// Plot-data CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Optional SVG scatter output.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Error ratios for reference/estimate pairs listed as CSV files.
    Empirical {
        /// Alternating reference and estimate paths.
        #[arg(long = "pair", num_args = 2, action = clap::ArgAction::Append, value_names = ["REF", "EST"])]
        pairs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_matrix(path: &PathBuf) -> Result<od_noise::ODShareMatrix> {
    let loaded = io::read_matrix(path)?;
    if loaded.normalized {
        eprintln!("warning: {} held raw counts; normalized to shares", path.display());
    }
    Ok(loaded.matrix)
}

fn print_summary(s: &ErrorSummary) {
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into());
    println!("err_od {}", s.err_od);
    println!("err_in {}", s.err_in);
    println!("err_out {}", s.err_out);
    println!("ratio_in {}", fmt(s.ratio_in));
    println!("ratio_out {}", fmt(s.ratio_out));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { n, seed, out } => {
            let matrix = generate_uniform(n, seed)?;
            io::write_matrix(&out, &matrix)?;
        }
        Command::Perturb { reference, spec, out, seed } => {
            let matrix = load_matrix(&reference)?;
            let config = io::read_run_config(&spec)?;
            let mut noise = config.noise;
            if let Some(seed) = seed {
                noise.seed = seed;
            }
            let (estimate, realization) = apply(&noise, &matrix)?;
            if realization.clamp_events > 0 {
                eprintln!("clamped {} cells", realization.clamp_events);
            }
            io::write_matrix(&out, &estimate)?;
        }
        Command::Metrics { reference, est, counts, out } => {
            let reference = load_matrix(&reference)?;
            let estimate = load_matrix(&est)?;
            let d = delta(&reference, &estimate)?;
            let mut summary = error_summary(&d)?;
            if let Some(counts_path) = counts {
                let counts = io::read_counts(&counts_path)?;
                if counts.boarding.len() != estimate.n_stops() {
                    bail!(
                        "counts file has {} stops, matrices have {}",
                        counts.boarding.len(),
                        estimate.n_stops()
                    );
                }
                let n = estimate.n_stops() as f64;
                let rms = |est: &[f64], base: &[f64]| {
                    (est.iter().zip(base).map(|(e, b)| (e - b) * (e - b)).sum::<f64>() / n).sqrt()
                };
                summary.err_in = rms(&estimate.boarding_marginal(), &counts.boarding);
                summary.err_out = rms(&estimate.alighting_marginal(), &counts.alighting);
                if summary.err_od > 0.0 {
                    summary.ratio_in = Some(summary.err_in / summary.err_od);
                    summary.ratio_out = Some(summary.err_out / summary.err_od);
                }
            }
            print_summary(&summary);
            if let Some(out) = out {
                let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let csv = format!(
                    "err_od,err_in,err_out,ratio_in,ratio_out\n{},{},{},{},{}\n",
                    summary.err_od,
                    summary.err_in,
                    summary.err_out,
                    fmt(summary.ratio_in),
                    fmt(summary.ratio_out)
                );
                io::write_atomic(&out, &csv)?;
            }
        }
        Command::Sweep { spec, out, seed } => {
            let config = io::read_run_config(&spec)?;
            let mut noise = config.noise;
            if let Some(seed) = seed {
                noise.seed = seed;
            }
            let settings = config.sweep.unwrap_or_default();
            let sweep_config = SweepConfig {
                n_values: settings.n_values,
                replicates: settings.replicates,
                spec: noise,
                reference_source: ReferenceSource::Synthetic { seed: settings.reference_seed },
                averaging: settings.averaging,
                fresh_reference_per_replicate: settings.fresh_reference_per_replicate,
            };
            let result = run_sweep(&sweep_config)?;
            io::write_sweep(&out, &result)?;
        }
        Command::Fit { input, frac, side, out } => {
            let points = io::read_sweep_points(&input)?;
            let series: Vec<(f64, f64)> = points
                .iter()
                .map(|p| {
                    let r = match side {
                        SideArg::Boarding => p.mean_ratio_in,
                        SideArg::Alighting => p.mean_ratio_out,
                    };
                    (p.n_stops as f64, r)
                })
                .collect();
            let model = fit_lowess(&series, frac, side.into())?;
            io::write_model(&out, &model)?;
        }
        Command::Infer { model, n, count_error } => {
            let model = io::read_model(&model)?;
            let ratio = predict_ratio(&model, n as f64)?;
            let err = infer_od_error(&model, n as f64, count_error)?;
            println!("ratio {ratio}");
            println!("err_od {err}");
        }
        Command::Aggregate { reference, est, n, side } => {
            let reference = load_matrix(&reference)?;
            let estimate = load_matrix(&est)?;
            let err = aggregate_and_score(&reference, &estimate, n, side.into())?;
            println!("err_od {err}");
        }
        Command::Report { sweep, empirical, out, svg } => {
            let points = io::read_sweep_points(&sweep)?;
            let crosses = match empirical {
                Some(path) => io::read_empirical(&path)?,
                None => Vec::new(),
            };
            let mut csv = String::from("n,series,value\n");
            for p in &points {
                csv.push_str(&format!("{},ratio_in,{}\n", p.n_stops, p.mean_ratio_in));
                csv.push_str(&format!("{},ratio_out,{}\n", p.n_stops, p.mean_ratio_out));
                csv.push_str(&format!("{},sqrt_n,{}\n", p.n_stops, (p.n_stops as f64).sqrt()));
            }
            for p in &crosses {
                if let Some(r) = p.ratio_in {
                    csv.push_str(&format!("{},empirical_in,{r}\n", p.n_stops));
                }
                if let Some(r) = p.ratio_out {
                    csv.push_str(&format!("{},empirical_out,{r}\n", p.n_stops));
                }
            }
            io::write_atomic(&out, &csv)?;
            if let Some(svg_path) = svg {
                io::write_atomic(&svg_path, &render_report(&points, &crosses))?;
            }
        }
        Command::Empirical { pairs, out } => {
            if pairs.is_empty() || pairs.len() % 2 != 0 {
                bail!("--pair takes reference and estimate paths, repeated");
            }
            let mut loaded = Vec::new();
            for chunk in pairs.chunks(2) {
                loaded.push((load_matrix(&chunk[0])?, load_matrix(&chunk[1])?));
            }
            let points = empirical_points(&loaded).context("computing empirical points")?;
            io::write_empirical(&out, &points)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
