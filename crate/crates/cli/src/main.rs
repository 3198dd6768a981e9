use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use frdkit_core::dataio::{self, DatasetSchema, EstimateInputs};
use frdkit_core::localpoly::frd_parts;
use frdkit_core::simlab::{report, DgpSpec, MKind, PiKind, SimConfig, XLaw};
use frdkit_core::theorycheck::{self, ProbeSpec, TruncatedMultinomial, TruncatedMultinomialSpec};
use frdkit_core::{output, BandwidthRule, CiSpec, CritLaw, EstimatorSpec, FrdError, KernelKind, Result, VarianceFlavor};
use serde_json::json;

#[derive(Parser)]
#[command(name = "frdkit", version, about = "Fuzzy regression discontinuity estimation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate treatment effects from a CSV file over cutoffs and bandwidths.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo grid described by a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses all cores. Results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evaluate one of the theory checks and print JSON.
    Theory {
        #[command(subcommand)]
        check: TheoryCheck,
    },
    /// Sampling distributions and tail quantiles for a simulation config.
    SamplingDist {
        #[arg(long)]
        config: PathBuf,
        /// Write results.csv and results.json here instead of printing JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include every draw in the JSON output.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long)]
    d: String,
    /// Covariate columns to partial out.
    #[arg(long, value_delimiter = ',')]
    w: Vec<String>,
    /// Cluster id column for clustered standard errors.
    #[arg(long)]
    cluster: Option<String>,
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    cutoff: Vec<f64>,
    /// Numbers or `rot`.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    bandwidth: Vec<String>,
    #[arg(long, default_value = "standard,lambda4")]
    estimator: String,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value = "student_t")]
    crit_law: String,
    #[arg(long, default_value = "hc1")]
    variance: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TheoryCheck {
    /// Truncated multinomial law: normalizing constant, marginals, and
    /// optionally the mass at one cell pair or the full table.
    Multinomial {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        p1: f64,
        #[arg(long)]
        p2: f64,
        #[arg(long, allow_negative_numbers = true)]
        alpha1: i64,
        #[arg(long, allow_negative_numbers = true)]
        alpha2: i64,
        #[arg(long, requires = "n2")]
        n1: Option<u64>,
        #[arg(long, requires = "n1")]
        n2: Option<u64>,
        #[arg(long)]
        table: bool,
    },
    /// First-stage jump on a mirrored sample for every order and kernel.
    Symmetric {
        #[arg(long, required = true, value_delimiter = ',')]
        offsets: Vec<f64>,
        /// Treatment bits, one per offset.
        #[arg(long = "d", required = true, value_delimiter = ',')]
        d_pattern: Vec<u8>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x0: f64,
        /// Defaults to twice the largest offset.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Empirical P(|tau_d| < eps) under a simulation design.
    Probe {
        #[arg(long, default_value = "lee")]
        design: String,
        #[arg(long, default_value = "pi1")]
        pi_rule: String,
        #[arg(long)]
        pi_plus: f64,
        #[arg(long, default_value = "std_normal")]
        x_law: String,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value = "triangular")]
        kernel: String,
        #[arg(long, default_value = "rot")]
        bandwidth: String,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.25")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn parsed<T: std::str::FromStr>(s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| FrdError::InvalidInput(e.to_string()))
}

/// Write to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(FrdError::Io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| FrdError::Io(e.to_string()))?;
    emit(&(text + "\n"))
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let schema = DatasetSchema {
        covariates: a.w.clone(),
        cluster: a.cluster.clone(),
        ..DatasetSchema::new(&a.x, &a.y, &a.d)
    };
    let bandwidths = a
        .bandwidth
        .iter()
        .map(|b| BandwidthRule::parse(b))
        .collect::<Result<Vec<_>>>()?;
    let estimators = EstimatorSpec::parse_list(&a.estimator)?;
    let ci = CiSpec {
        level: a.ci_level,
        crit_law: parsed::<CritLaw>(&a.crit_law)?,
        variance: parsed::<VarianceFlavor>(&a.variance)?,
    };
    let loaded = dataio::load_csv(&a.data, &schema)?;
    let runs = dataio::run_cutoffs(
        &loaded.sample,
        loaded.clusters.as_deref(),
        &a.cutoff,
        &bandwidths,
        &estimators,
        &ci,
    )?;
    let inputs = EstimateInputs {
        data: a.data.display().to_string(),
        schema,
        rows_used: loaded.sample.len(),
        rows_dropped: loaded.dropped_count,
        cutoffs: a.cutoff.clone(),
        bandwidths: bandwidths.iter().map(|b| b.to_string()).collect(),
        estimators,
        ci,
    };
    output::write_pair(&a.out, &dataio::results_csv(&runs)?, &dataio::results_json(&inputs, &runs)?)?;
    let cells: usize = runs.iter().map(|r| r.results.len()).sum();
    let failed = runs.iter().flat_map(|r| &r.results).filter(|r| r.status != "ok").count();
    eprintln!(
        "frdkit: {cells} cells ({failed} with status other than ok), {} rows dropped; wrote {}",
        loaded.dropped_count,
        a.out.display()
    );
    Ok(())
}

fn load_config(path: &Path, threads: Option<usize>) -> Result<SimConfig> {
    let mut cfg = SimConfig::load(path)?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn theory(check: TheoryCheck) -> Result<()> {
    match check {
        TheoryCheck::Multinomial { n, p1, p2, alpha1, alpha2, n1, n2, table } => {
            let spec = TruncatedMultinomialSpec { n, p1, p2, alpha1, alpha2 };
            let law = TruncatedMultinomial::new(&spec)?;
            let marginal = |i: u8| -> Result<Vec<f64>> { (0..=n).map(|m| law.marginal(i, m)).collect() };
            let mut doc = json!({
                "check": "multinomial",
                "spec": spec,
                "kappa": law.kappa(),
                "marginal1": marginal(1)?,
                "marginal2": marginal(2)?,
            });
            if let (Some(n1), Some(n2)) = (n1, n2) {
                doc["pmf"] = json!({ "n1": n1, "n2": n2, "probability": law.pmf(n1, n2) });
            }
            if table {
                let rows: Vec<_> = law
                    .table()
                    .into_iter()
                    .map(|(n1, n2, p)| json!({ "n1": n1, "n2": n2, "probability": p }))
                    .collect();
                doc["table"] = json!(rows);
            }
            print_json(&doc)
        }
        TheoryCheck::Symmetric { offsets, d_pattern, x0, h } => {
            let sample = theorycheck::make_symmetric_sample(offsets.len(), &offsets, &d_pattern, x0)?;
            let h = h.unwrap_or_else(|| 2.0 * offsets.iter().cloned().fold(0.0, f64::max));
            let mut checks = Vec::new();
            let mut worst: f64 = 0.0;
            for p in 0..=2 {
                for kernel in KernelKind::ALL {
                    let row = match frd_parts(&sample, x0, h, p, kernel) {
                        Ok(fit) => {
                            worst = worst.max(fit.tau_d.abs());
                            json!({ "p": p, "kernel": kernel, "tau_d": fit.tau_d })
                        }
                        Err(e) => json!({ "p": p, "kernel": kernel, "error": e.category(), "message": e.to_string() }),
                    };
                    checks.push(row);
                }
            }
            print_json(&json!({
                "check": "symmetric",
                "x0": x0,
                "h": h,
                "x": sample.x(),
                "d": sample.d(),
                "results": checks,
                "max_abs_tau_d": worst,
            }))
        }
        TheoryCheck::Probe {
            design,
            pi_rule,
            pi_plus,
            x_law,
            n,
            reps,
            seed,
            p,
            kernel,
            bandwidth,
            eps,
            threads,
        } => {
            let mut dgp = DgpSpec::new(parsed::<MKind>(&design)?, parsed::<PiKind>(&pi_rule)?, pi_plus, n);
            dgp.x_law = parsed::<XLaw>(&x_law)?;
            let spec = ProbeSpec {
                dgp,
                p,
                kernel: parsed::<KernelKind>(&kernel)?,
                bandwidth: BandwidthRule::parse(&bandwidth)?,
                reps,
                seed,
                eps,
                threads,
            };
            let result = theorycheck::denominator_probe(&spec)?;
            print_json(&json!({
                "check": "probe",
                "metadata": output::Metadata::new("theory probe"),
                "dgp": spec.dgp,
                "p": spec.p,
                "kernel": spec.kernel,
                "bandwidth": spec.bandwidth.to_string(),
                "reps": spec.reps,
                "seed": spec.seed,
                "result": result,
            }))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate { config, out, threads } => {
            let cfg = load_config(&config, threads)?;
            let results = report::simulate_to_dir(&cfg, &out)?;
            eprintln!("frdkit: {} experiments; wrote {}", results.len(), out.display());
            Ok(())
        }
        Command::Theory { check } => theory(check),
        Command::SamplingDist { config, out, raw, threads } => {
            let cfg = load_config(&config, threads)?;
            let grid = report::sampling_grid(&cfg)?;
            let doc = report::sampling_json(&cfg, &grid, raw)?;
            match out {
                Some(dir) => output::write_pair(&dir, &report::sampling_csv(&grid)?, &doc),
                None => emit(&doc),
            }
        }
    }
}

fn fail(category: &str, message: &str, code: u8) -> ExitCode {
    let doc = json!({ "error": { "category": category, "message": message } });
    eprintln!("{doc}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.category(), &e.to_string(), 1),
    }
}
