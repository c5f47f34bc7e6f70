//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. CSV goes to
//! `--output` when given; an aligned table always goes to standard output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::output::{fmt_sig, render_table};
use crate::pipeline::{run_pipeline, write_fixture, DatasetSchema, PipelineParams};
use crate::qis::{default_grid, rate_report, BuiltinIntegrand, RateReport};
use crate::simulate::{
    first_k_intervals, interval_cells, run_simulation, Dgp, SimulationConfig, XiModel, INTERVAL_HEADER,
};
use crate::types::{EstimatorOptions, EstimatorTag, PredictionTerm, VarianceForm};

#[derive(Debug, Parser)]
#[command(name = "ppi-ipw", version, about = "Prediction-powered inference with inverse-probability-weighted rectifiers")]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Replicated simulation: bias, width, coverage per estimator
    Simulate(SimArgs),
    /// Per-replicate confidence intervals for the first k replicates
    Intervals {
        #[command(flatten)]
        sim: SimArgs,
        /// Number of replicates to list
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// MSE convergence rate of the QIS trapezoid and rectangle rules
    QisRate {
        /// Integrand: s2, exp, linear, const or sqrt
        #[arg(long = "fn", default_value = "s2")]
        integrand: BuiltinIntegrand,
        /// Comma-separated sample sizes (default 8,16,...,1024)
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
        /// Seeds per sample size
        #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Labeling, outcome model and estimator comparison on a CSV file
    Pipeline(PipelineArgs),
    /// Write the synthetic NHANES-like CSV
    Fixture {
        #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Write CSV output to this file
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DgpKind {
    BinaryLogit,
    Facet,
    Srs,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Population size (default 500, or 50000 for the facet design)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    replicates: u64,
    #[arg(long, value_enum, default_value = "binary-logit")]
    dgp: DgpKind,
    /// Mean labeling probability for the facet design
    #[arg(long, default_value_t = 0.01)]
    p_lab: f64,
    /// Constant labeling probability for the srs design
    #[arg(long, default_value_t = 0.1)]
    srs_prob: f64,
    /// true or estimated
    #[arg(long, default_value = "true")]
    xi: XiModel,
    /// Comma-separated estimator tags
    #[arg(long, value_delimiter = ',', default_value = "Classic,HT,Hajek,PPI,PPI_Hajek")]
    estimators: Vec<EstimatorTag>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// superpopulation or poisson
    #[arg(long, default_value = "superpopulation")]
    variance: VarianceForm,
    /// Add the sampling variance of the prediction mean
    #[arg(long)]
    sampled_predictions: bool,
    /// Folds for CrossPPI
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    folds: u64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "BMI")]
    outcome: String,
    /// Comma-separated covariate columns
    #[arg(long, default_value = "Age,Gender,Waist,Arm,Leg,Race")]
    covariates: String,
    /// Covariates to one-hot encode; empty for none
    #[arg(long, default_value = "Gender,Race")]
    categorical: String,
    #[arg(long, default_value = "Age")]
    labeling_covariate: String,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    intercept: f64,
    #[arg(long, default_value_t = -0.05, allow_negative_numbers = true)]
    slope: f64,
    #[arg(long, default_value = "true")]
    xi: XiModel,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// poisson or superpopulation
    #[arg(long, default_value = "poisson")]
    variance: VarianceForm,
    #[command(flatten)]
    common: CommonArgs,
}

/// A validated invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Simulate(SimulationConfig),
    Intervals { config: SimulationConfig, k: usize },
    QisRate { integrand: BuiltinIntegrand, grid: Vec<usize>, seeds: usize, seed: u64 },
    Pipeline { input: PathBuf, schema: DatasetSchema, params: PipelineParams },
    Fixture { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn usage(msg: impl std::fmt::Display) -> clap::Error {
    Cli::command().error(ErrorKind::ValueValidation, msg)
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

fn check_level(level: f64) -> std::result::Result<(), clap::Error> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("invalid value '{level}' for '--level': must be in (0, 1)")))
    }
}

fn simulation_config(a: &SimArgs) -> std::result::Result<SimulationConfig, clap::Error> {
    check_level(a.level)?;
    let (dgp, default_n) = match a.dgp {
        DgpKind::BinaryLogit => (Dgp::BinaryLogit, 500),
        DgpKind::Facet => {
            if !(a.p_lab > 0.0 && a.p_lab < 1.0) {
                return Err(usage(format!("invalid value '{}' for '--p-lab': must be in (0, 1)", a.p_lab)));
            }
            (Dgp::Facet { p_lab: a.p_lab }, 50_000)
        }
        DgpKind::Srs => {
            if !(a.srs_prob > 0.0 && a.srs_prob <= 1.0) {
                return Err(usage(format!("invalid value '{}' for '--srs-prob': must be in (0, 1]", a.srs_prob)));
            }
            (Dgp::Srs { prob: a.srs_prob }, 500)
        }
    };
    if a.estimators.is_empty() {
        return Err(usage("'--estimators' needs at least one tag"));
    }
    Ok(SimulationConfig {
        n_units: a.n.map_or(default_n, |n| n as usize),
        n_replicates: a.replicates as usize,
        dgp,
        xi_model: a.xi,
        estimators: a.estimators.clone(),
        ci_level: a.level,
        seed: a.seed,
        variance: a.variance,
        prediction_term: if a.sampled_predictions {
            PredictionTerm::Sampled
        } else {
            PredictionTerm::Fixed
        },
        cross_folds: a.folds as usize,
        ..SimulationConfig::default()
    })
}

fn with_common(command: Command, common: &CommonArgs) -> CliConfig {
    CliConfig {
        command,
        output: common.output.clone(),
        threads: common.threads.map(|t| t as usize),
    }
}

/// Parses `argv` (program name first). Help and version requests come back
/// as errors whose `exit_code()` is 0.
pub fn parse_args<I, T>(argv: I) -> std::result::Result<CliConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    Ok(match cli.command {
        CommandArgs::Simulate(a) => with_common(Command::Simulate(simulation_config(&a)?), &a.common),
        CommandArgs::Intervals { sim, k } => {
            let config = simulation_config(&sim)?;
            if k > config.n_replicates {
                return Err(usage(format!("'--k' ({k}) exceeds '--replicates' ({})", config.n_replicates)));
            }
            with_common(Command::Intervals { config, k }, &sim.common)
        }
        CommandArgs::QisRate {
            integrand,
            grid,
            seeds,
            seed,
            common,
        } => {
            let grid = if grid.is_empty() { default_grid() } else { grid };
            if grid.contains(&0) {
                return Err(usage("'--grid' sizes must be at least 1"));
            }
            with_common(
                Command::QisRate {
                    integrand,
                    grid,
                    seeds: seeds as usize,
                    seed,
                },
                &common,
            )
        }
        CommandArgs::Pipeline(a) => {
            check_level(a.level)?;
            let schema = DatasetSchema {
                outcome: a.outcome.clone(),
                covariates: split_list(&a.covariates),
                labeling_covariate: a.labeling_covariate.clone(),
                categorical: split_list(&a.categorical),
            };
            let params = PipelineParams {
                intercept: a.intercept,
                slope: a.slope,
                xi_model: a.xi,
                seed: a.seed,
                options: EstimatorOptions::default().with_level(a.level).with_variance(a.variance),
            };
            with_common(
                Command::Pipeline {
                    input: a.input.clone(),
                    schema,
                    params,
                },
                &a.common,
            )
        }
        CommandArgs::Fixture { n, seed, common } => {
            if common.output.is_none() {
                return Err(Cli::command().error(
                    ErrorKind::MissingRequiredArgument,
                    "'fixture' needs '--output <OUTPUT>'",
                ));
            }
            with_common(Command::Fixture { n: n as usize, seed }, &common)
        }
    })
}

fn open_output(path: &PathBuf) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::File {
        path: path.clone(),
        source,
    })
}

fn write_rows(path: &PathBuf, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(open_output(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn flush_file(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub const QIS_HEADER: [&str; 5] = ["n", "mse_qis", "mse_mc", "slope_qis", "slope_mc"];

fn qis_cells(report: &RateReport) -> Vec<Vec<String>> {
    let slope = |s: Option<f64>| s.map_or_else(|| "NA".to_string(), |v| fmt_sig(v, 6));
    report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt_sig(r.mse_qis, 6),
                fmt_sig(r.mse_mc, 6),
                slope(report.slope_qis),
                slope(report.slope_mc),
            ]
        })
        .collect()
}

fn execute(config: &CliConfig, stdout: &mut dyn Write) -> Result<()> {
    let out = config.output.as_ref();
    let print = |stdout: &mut dyn Write, text: &str| {
        stdout.write_all(text.as_bytes()).map_err(|source| Error::File {
            path: PathBuf::from("<stdout>"),
            source,
        })
    };
    match &config.command {
        Command::Simulate(sim) => {
            let report = run_simulation(sim)?;
            if let Some(path) = out {
                let mut w = open_output(path)?;
                report.write_csv(&mut w)?;
                flush_file(w, path)?;
            }
            print(stdout, &report.to_table())
        }
        Command::Intervals { config: sim, k } => {
            let rows = interval_cells(&first_k_intervals(sim, *k)?);
            if let Some(path) = out {
                write_rows(path, &INTERVAL_HEADER, &rows)?;
            }
            print(stdout, &render_table(&INTERVAL_HEADER, &rows))
        }
        Command::QisRate {
            integrand,
            grid,
            seeds,
            seed,
        } => {
            let report = rate_report(&integrand.problem(), grid, *seeds, *seed)?;
            let rows = qis_cells(&report);
            if let Some(path) = out {
                write_rows(path, &QIS_HEADER, &rows)?;
            }
            print(stdout, &render_table(&QIS_HEADER, &rows))
        }
        Command::Pipeline { input, schema, params } => {
            let report = run_pipeline(input, schema, params)?;
            if let Some(path) = out {
                let mut w = open_output(path)?;
                report.write_csv(&mut w)?;
                flush_file(w, path)?;
            }
            print(stdout, &report.to_table())
        }
        Command::Fixture { n, seed } => {
            let path = out.expect("validated by parse_args");
            let fixture = write_fixture(path, *n, *seed)?;
            print(
                stdout,
                &format!(
                    "wrote {} rows ({} complete) to {}\nBMI mean over complete rows: {}\n",
                    n,
                    fixture.complete_rows,
                    path.display(),
                    fmt_sig(fixture.truth, 10)
                ),
            )
        }
    }
}

/// Executes a parsed invocation and returns the process exit code.
pub fn run(config: &CliConfig) -> i32 {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let result = pool.install(|| execute(config, &mut io::stdout().lock()));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> std::result::Result<CliConfig, clap::Error> {
        parse_args(std::iter::once("ppi-ipw").chain(args.split_whitespace()))
    }

    #[test]
    fn simulate_overrides() {
        let c = parse("simulate --replicates 200 --seed 1").unwrap();
        let Command::Simulate(s) = c.command else { panic!() };
        assert_eq!(s, SimulationConfig { seed: 1, ..SimulationConfig::default() });
    }

    #[test]
    fn negative_replicates_rejected() {
        let e = parse("simulate --replicates -5").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(parse("simulate --replicates 0").is_err());
    }

    #[test]
    fn unknown_flag_rejected() {
        assert_eq!(parse("simulate --bogus 3").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn facet_defaults_to_large_population() {
        let Command::Simulate(s) = parse("simulate --dgp facet --p-lab 0.02").unwrap().command else { panic!() };
        assert_eq!(s.n_units, 50_000);
        assert_eq!(s.dgp, Dgp::Facet { p_lab: 0.02 });
        assert!(parse("simulate --dgp facet --p-lab 1.5").is_err());
    }

    #[test]
    fn pipeline_defaults() {
        let c = parse("pipeline --input data.csv --outcome BMI --labeling-covariate Age").unwrap();
        let Command::Pipeline { params, schema, .. } = c.command else { panic!() };
        assert_eq!((params.intercept, params.slope), (3.0, -0.05));
        assert_eq!(schema, DatasetSchema::nhanes());
    }

    #[test]
    fn qis_grid() {
        let c = parse("qis-rate --fn s2 --grid 16,64,256 --seeds 100").unwrap();
        assert_eq!(
            c.command,
            Command::QisRate {
                integrand: BuiltinIntegrand::Square,
                grid: vec![16, 64, 256],
                seeds: 100,
                seed: 1
            }
        );
        let Command::QisRate { grid, .. } = parse("qis-rate").unwrap().command else { panic!() };
        assert_eq!(grid, default_grid());
    }

    #[test]
    fn estimator_list() {
        let Command::Simulate(s) = parse("simulate --estimators ht,greg,crossppi").unwrap().command else { panic!() };
        assert_eq!(s.estimators, vec![EstimatorTag::HT, EstimatorTag::GREG, EstimatorTag::CrossPPI]);
        assert!(parse("simulate --estimators ht,nope").is_err());
    }

    #[test]
    fn intervals_k_bounded() {
        assert!(parse("intervals --replicates 5 --k 6").is_err());
        assert!(parse("intervals --replicates 5 --k 5").is_ok());
    }

    #[test]
    fn fixture_needs_output() {
        assert!(parse("fixture").is_err());
    }
}
