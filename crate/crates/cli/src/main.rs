use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use microstein::harness::{
    self, calibration_entry, compare_edf, power_boundary, run_grid_with, sanov_table, GridControl, DESK_CALIB_REPS,
    DESK_EVAL_REPS,
};
use microstein::output::{self, fmt_exact, fmt_g6, PowerCsv};
use microstein::stein::run_test;
use microstein::{
    CompareSpec, CutoffSource, Error, FiniteNLaw, GridSpec, Hypothesis, JacobiBasis, Sample, Standardization,
    SteinTestConfig,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "microstein",
    version,
    about = "Stein/Jacobi goodness-of-fit toolkit for the finite-N velocity law"
)]
struct Cli {
    /// Worker threads for Monte Carlo work (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum HypothesisArg {
    H0,
    H1,
}

impl From<HypothesisArg> for Hypothesis {
    fn from(h: HypothesisArg) -> Self {
        match h {
            HypothesisArg::H0 => Hypothesis::H0,
            HypothesisArg::H1 => Hypothesis::H1,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StandardizeArg {
    None,
    LocationScale,
}

impl From<StandardizeArg> for Standardization {
    fn from(s: StandardizeArg) -> Self {
        match s {
            StandardizeArg::None => Standardization::None,
            StandardizeArg::LocationScale => Standardization::LocationScale,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample, one value per line.
    Sample {
        #[arg(long = "N")]
        n_particles: f64,
        #[arg(long = "n")]
        n: usize,
        #[arg(long, value_enum, default_value = "h0")]
        hypothesis: HypothesisArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Density and CDF at the given points.
    Density {
        #[arg(long = "N")]
        n_particles: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
    },
    /// Quantiles at the given probabilities.
    Quantile {
        #[arg(long = "N")]
        n_particles: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
    },
    /// Test a sample read from a file or standard input.
    Test(TestArgs),
    /// Normalisation constants σ_1..σ_m.
    SigmaTable {
        #[arg(long = "N")]
        n_particles: f64,
        #[arg(long, default_value_t = 10)]
        m: usize,
    },
    /// Monte Carlo critical values over N × n × m.
    Calibrate {
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n_particles: Vec<f64>,
        #[arg(long = "n", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "4")]
        m: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        #[arg(long, default_value_t = DESK_CALIB_REPS)]
        reps: usize,
        #[arg(long, value_enum, default_value = "none")]
        standardize: StandardizeArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Size and power over the (N, n, m) grid; rows are written as cells finish.
    Grid(GridArgs),
    /// Large-deviation power proxy 1 - exp(-n KL) over N × n.
    Sanov {
        #[arg(long = "N", value_delimiter = ',', default_value = "4,5,6,8,10,15,20")]
        n_particles: Vec<f64>,
        #[arg(
            long = "n",
            value_delimiter = ',',
            default_value = "10,50,100,200,400,600,800,1000,2000"
        )]
        n: Vec<u64>,
    },
    /// Smallest n reaching a target proxy power, per N.
    PowerBoundary {
        #[arg(long = "N", value_delimiter = ',', default_value = "4,5,6,8,10,15,20")]
        n_particles: Vec<f64>,
        #[arg(long, default_value_t = 0.8)]
        target: f64,
    },
    /// Kullback–Leibler divergence to the standard Gaussian.
    Kl {
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n_particles: Vec<f64>,
    },
    /// Calibrated power of the Stein test against KS, CvM and AD.
    Compare {
        #[arg(long = "N", default_value_t = 20.0)]
        n_particles: f64,
        #[arg(long = "n", value_delimiter = ',', default_value = "1000,2000,5000")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        #[arg(long, default_value_t = DESK_CALIB_REPS)]
        calib_reps: usize,
        #[arg(long, default_value_t = DESK_EVAL_REPS)]
        eval_reps: usize,
        #[arg(long, value_enum, default_value = "none")]
        standardize: StandardizeArg,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct TestArgs {
    #[arg(long = "N")]
    n_particles: f64,
    /// Input path, or "-" for standard input.
    #[arg(long, default_value = "-")]
    input: String,
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// "even" for {4, 6, …, m}, or a comma-separated list.
    #[arg(long, default_value = "even")]
    modes: String,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// "theoretical", "calibrated", or an explicit positive threshold.
    #[arg(long, default_value = "theoretical")]
    cutoff: String,
    /// Null replications when --cutoff calibrated.
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, value_enum, default_value = "location-scale")]
    standardize: StandardizeArg,
    /// Seed for calibration (only used with --cutoff calibrated).
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 1 when the null is rejected.
    #[arg(long)]
    fail_on_reject: bool,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long = "N", value_delimiter = ',')]
    n_particles: Option<Vec<f64>>,
    #[arg(long = "n", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// Use 50,000 calibration and 20,000 evaluation replications.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    calib_reps: Option<usize>,
    #[arg(long)]
    eval_reps: Option<usize>,
    #[arg(long, value_enum, default_value = "none")]
    standardize: StandardizeArg,
    /// Stop starting new cells after this many seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Also write the calibration table (CSV) here.
    #[arg(long)]
    calibration_output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Failure that ends the process with the given status.
struct Exit {
    code: u8,
    message: String,
}

impl From<Error> for Exit {
    fn from(e: Error) -> Self {
        Exit {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Exit {
    Exit {
        code: 2,
        message: message.into(),
    }
}

fn io_failure(e: io::Error) -> Exit {
    usage(format!("i/o error: {e}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(exit) => {
            if !exit.message.is_empty() {
                eprintln!("error: {}", exit.message);
            }
            ExitCode::from(exit.code)
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Exit> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes a fully rendered result in one go.
fn emit(path: &Option<PathBuf>, bytes: &[u8]) -> Result<(), Exit> {
    let mut w = open_output(path)?;
    w.write_all(bytes).map_err(io_failure)?;
    w.flush().map_err(io_failure)
}

fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialise");
    s.push('\n');
    s.into_bytes()
}

fn run(cli: Cli) -> Result<(), Exit> {
    let Cli {
        workers,
        format,
        output,
        command,
    } = cli;
    harness::with_workers(workers, move || dispatch(command, format, &output))?
}

fn dispatch(command: Command, format: Format, out: &Option<PathBuf>) -> Result<(), Exit> {
    match command {
        Command::Sample {
            n_particles,
            n,
            hypothesis,
            seed,
        } => {
            let law = FiniteNLaw::new(n_particles)?;
            let seed = resolve_seed(seed);
            let s = match Hypothesis::from(hypothesis) {
                Hypothesis::H0 => law.sample(n, seed)?,
                Hypothesis::H1 => law.sample_gaussian_alternative(n, seed)?,
            };
            let bytes = match format {
                Format::Csv => s
                    .values()
                    .iter()
                    .map(|v| format!("{}\n", fmt_exact(*v)))
                    .collect::<String>()
                    .into_bytes(),
                Format::Json => json_bytes(&json!(s.values())),
            };
            emit(out, &bytes)
        }
        Command::Density { n_particles, x } => {
            let law = FiniteNLaw::new(n_particles)?;
            let rows = x
                .iter()
                .map(|&x| Ok((x, law.density(x)?, law.cdf(x)?)))
                .collect::<Result<Vec<_>, Error>>()?;
            let bytes = match format {
                Format::Csv => {
                    let mut s = String::from("x,density,cdf\n");
                    for (x, d, c) in rows {
                        s += &format!("{},{},{}\n", fmt_exact(x), fmt_exact(d), fmt_exact(c));
                    }
                    s.into_bytes()
                }
                Format::Json => json_bytes(&json!(rows
                    .iter()
                    .map(|(x, d, c)| json!({"x": x, "density": d, "cdf": c}))
                    .collect::<Vec<_>>())),
            };
            emit(out, &bytes)
        }
        Command::Quantile { n_particles, p } => {
            let law = FiniteNLaw::new(n_particles)?;
            let rows = p
                .iter()
                .map(|&p| Ok((p, law.quantile(p)?)))
                .collect::<Result<Vec<_>, Error>>()?;
            let bytes = match format {
                Format::Csv => {
                    let mut s = String::from("p,x\n");
                    for (p, x) in rows {
                        s += &format!("{},{}\n", fmt_exact(p), fmt_exact(x));
                    }
                    s.into_bytes()
                }
                Format::Json => json_bytes(&json!(rows
                    .iter()
                    .map(|(p, x)| json!({"p": p, "x": x}))
                    .collect::<Vec<_>>())),
            };
            emit(out, &bytes)
        }
        Command::Test(args) => cmd_test(args, format, out),
        Command::SigmaTable { n_particles, m } => {
            let law = FiniteNLaw::new(n_particles)?;
            let basis = JacobiBasis::for_law(&law, m)?;
            let bytes = match format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    output::write_sigma_csv(&mut buf, n_particles, law.alpha(), basis.sigmas())?;
                    buf
                }
                Format::Json => json_bytes(&output::sigma_json(n_particles, law.alpha(), basis.sigmas())),
            };
            emit(out, &bytes)
        }
        Command::Calibrate {
            n_particles,
            n,
            m,
            level,
            reps,
            standardize,
            seed,
        } => {
            let seed = resolve_seed(seed);
            let mut entries = Vec::new();
            for &nn in &n_particles {
                for &size in &n {
                    for &order in &m {
                        let cfg = SteinTestConfig::new(nn)?
                            .with_max_order(order)?
                            .with_level(level)?
                            .with_standardization(standardize.into());
                        entries.push(calibration_entry(&cfg, size, reps, seed)?);
                    }
                }
            }
            let bytes = match format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    output::write_calibration_csv(&mut buf, &entries)?;
                    buf
                }
                Format::Json => json_bytes(&json!(entries.iter().map(output::calibration_json).collect::<Vec<_>>())),
            };
            emit(out, &bytes)
        }
        Command::Grid(args) => cmd_grid(args, format, out),
        Command::Sanov { n_particles, n } => {
            let table = sanov_table(&n_particles, &n)?;
            let bytes = match format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    output::write_sanov_csv(&mut buf, &table)?;
                    buf
                }
                Format::Json => json_bytes(&output::sanov_json(&table)),
            };
            emit(out, &bytes)
        }
        Command::PowerBoundary { n_particles, target } => {
            let rows = power_boundary(&n_particles, target)?;
            let bytes = match format {
                Format::Csv => {
                    let mut s = String::from("N,target,n_star\n");
                    for (nn, n) in &rows {
                        s += &format!("{},{},{n}\n", fmt_g6(*nn), fmt_g6(target));
                    }
                    s.into_bytes()
                }
                Format::Json => json_bytes(&json!(rows
                    .iter()
                    .map(|(nn, n)| json!({"N": nn, "target": target, "n_star": n}))
                    .collect::<Vec<_>>())),
            };
            emit(out, &bytes)
        }
        Command::Kl { n_particles } => {
            let rows = n_particles
                .iter()
                .map(|&nn| Ok((nn, FiniteNLaw::new(nn)?.kl_to_gaussian())))
                .collect::<Result<Vec<_>, Error>>()?;
            let bytes = match format {
                Format::Csv => {
                    let mut s = String::from("N,kl\n");
                    for (nn, kl) in rows {
                        s += &format!("{},{}\n", fmt_exact(nn), fmt_exact(kl));
                    }
                    s.into_bytes()
                }
                Format::Json => json_bytes(&json!(rows
                    .iter()
                    .map(|(nn, kl)| json!({"N": nn, "kl": kl}))
                    .collect::<Vec<_>>())),
            };
            emit(out, &bytes)
        }
        Command::Compare {
            n_particles,
            n,
            m,
            level,
            calib_reps,
            eval_reps,
            standardize,
            seed,
        } => {
            let spec = CompareSpec {
                n_particles,
                sample_sizes: n,
                max_order: m,
                level,
                calib_reps,
                eval_reps,
                master_seed: resolve_seed(seed),
                standardization: standardize.into(),
            };
            let rows = compare_edf(&spec)?;
            let bytes = match format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    output::write_compare_csv(&mut buf, n_particles, m, &rows)?;
                    buf
                }
                Format::Json => json_bytes(&output::compare_json(n_particles, m, &rows)),
            };
            emit(out, &bytes)
        }
    }
}

/// Whitespace-separated decimals; reports the first bad token with its line.
fn parse_values(text: &str) -> Result<Vec<f64>, Exit> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| usage(format!("line {}: not a number: '{tok}'", i + 1)))?;
            if !v.is_finite() {
                return Err(usage(format!("line {}: value must be finite: '{tok}'", i + 1)));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(usage("input contains no values"));
    }
    Ok(values)
}

fn read_input(path: &str) -> Result<String, Exit> {
    let mut text = String::new();
    if path == "-" {
        io::stdin().read_to_string(&mut text).map_err(io_failure)?;
    } else {
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| usage(format!("cannot read {path}: {e}")))?;
    }
    Ok(text)
}

fn cmd_test(args: TestArgs, format: Format, out: &Option<PathBuf>) -> Result<(), Exit> {
    let mut cfg = SteinTestConfig::new(args.n_particles)?
        .with_max_order(args.m)?
        .with_level(args.level)?
        .with_standardization(args.standardize.into());
    if args.modes != "even" {
        let modes = args
            .modes
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| usage(format!("invalid mode '{t}'")))
            })
            .collect::<Result<Vec<_>, Exit>>()?;
        cfg = cfg.with_modes(modes)?;
    }
    let sample = Sample::new(parse_values(&read_input(&args.input)?)?)?;
    let source = match args.cutoff.as_str() {
        "theoretical" => CutoffSource::TheoreticalChi2,
        "calibrated" => {
            let seed = resolve_seed(args.seed);
            CutoffSource::Calibrated(harness::calibrate(&cfg, sample.len(), args.reps, seed)?)
        }
        other => match other.parse::<f64>() {
            Ok(c) => CutoffSource::Calibrated(c),
            Err(_) => {
                return Err(usage(format!(
                    "invalid cutoff '{other}' (expected theoretical|calibrated|<value>)"
                )))
            }
        },
    };
    let cfg = cfg.with_cutoff(source)?;
    let report = run_test(&sample, &cfg, &cfg.basis()?)?;
    let bytes = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            output::write_report_csv(&mut buf, &report)?;
            buf
        }
        Format::Json => json_bytes(&serde_json::to_value(&report).expect("report serialises")),
    };
    emit(out, &bytes)?;
    if args.fail_on_reject && report.reject {
        return Err(Exit {
            code: 1,
            message: String::new(),
        });
    }
    Ok(())
}

fn cmd_grid(args: GridArgs, format: Format, out: &Option<PathBuf>) -> Result<(), Exit> {
    let base = if args.paper_scale {
        GridSpec::default()
    } else {
        GridSpec::desk_scale()
    };
    let spec = GridSpec {
        n_particles: args.n_particles.unwrap_or(base.n_particles),
        sample_sizes: args.n.unwrap_or(base.sample_sizes),
        orders: args.m.unwrap_or(base.orders),
        level: args.level,
        calib_reps: args.calib_reps.unwrap_or(base.calib_reps),
        eval_reps: args.eval_reps.unwrap_or(base.eval_reps),
        master_seed: resolve_seed(args.seed),
        standardization: args.standardize.into(),
    };
    spec.validate()?;
    let deadline = match args.time_limit {
        Some(t) if t.is_finite() && t >= 0.0 => Some(Instant::now() + Duration::from_secs_f64(t)),
        Some(t) => {
            return Err(usage(format!(
                "time limit must be a nonnegative number of seconds, got {t}"
            )))
        }
        None => None,
    };
    let control = GridControl { deadline, cancel: None };
    let total = spec.cell_count();
    let mut done = 0usize;
    let report = match format {
        Format::Csv => {
            let mut csv = PowerCsv::new(open_output(out)?)?;
            let report = run_grid_with(&spec, control, |_, rows| {
                done += 1;
                eprintln!("cell {done}/{total}");
                csv.write_rows(rows)
            })?;
            csv.finish(report.complete)?;
            report
        }
        Format::Json => {
            let report = run_grid_with(&spec, control, |_, _| {
                done += 1;
                eprintln!("cell {done}/{total}");
                Ok(())
            })?;
            emit(out, &json_bytes(&output::grid_json(&report)))?;
            report
        }
    };
    if let Some(path) = &args.calibration_output {
        let f = File::create(path).map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
        output::write_calibration_csv(BufWriter::new(f), &report.calibration.entries)?;
    }
    if !report.complete {
        eprintln!("stopped early after {done}/{total} cells");
    }
    Ok(())
}
