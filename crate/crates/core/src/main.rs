use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sthygarch::estimate::{fit, free_param_names, FitKind, FitOptions, FitResult};
use sthygarch::evaluation::{backtest, descriptive_stats, KurtosisKind, ModelSpec};
use sthygarch::experiments::{run_estimation_study, run_size_power_study, ExperimentConfig};
use sthygarch::io::{load_returns, num, text_table, write_csv, LoadOptions};
use sthygarch::model::{Theta, TransitionSpec, PARAM_NAMES};
use sthygarch::score_test::score_test;
use sthygarch::simulate::{simulate, SimConfig};
use sthygarch::stability::{check_stability, DEFAULT_TAIL_K_MAX};
use sthygarch::{Error, Result};

const EXIT_UNSTABLE: u8 = 2;

#[derive(Parser)]
#[command(name = "sthygarch", version, about = "Smooth-transition HYGARCH volatility model")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Global {
    /// RNG seed (master seed for studies)
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Truncation lag of the fractional filter
    #[arg(long, global = true, default_value_t = sthygarch::fracdiff::DEFAULT_K_MAX)]
    kmax: usize,
    /// Transition variable
    #[arg(long, global = true, value_enum, default_value_t = SpecArg::LaggedReturn)]
    spec: SpecArg,
    /// Lag of the transition variable
    #[arg(long, global = true, default_value_t = 1)]
    lag: usize,
    /// Percentile of squared returns for asym-avg
    #[arg(long, global = true, default_value_t = 0.95)]
    percentile: f64,
    /// Constant weight for fixed-w
    #[arg(long, global = true, default_value_t = 0.5)]
    w: f64,
    /// Output file (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Log progress and warnings to stderr
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecArg {
    LaggedReturn,
    LaggedVariance,
    AsymAvg,
    FixedW,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    St,
    Null,
    Hygarch,
}

impl From<KindArg> for FitKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::St => FitKind::FullST,
            KindArg::Null => FitKind::NullHalfWeight,
            KindArg::Hygarch => FitKind::FixedWeightHygarch,
        }
    }
}

#[derive(Args)]
struct Input {
    /// CSV file with a header row
    #[arg(long, short)]
    input: PathBuf,
    /// Column to read
    #[arg(long)]
    column: Option<String>,
    /// The column holds prices; convert to percent log returns
    #[arg(long)]
    prices: bool,
}

impl Input {
    fn load(&self) -> Result<Vec<f64>> {
        load_returns(&self.input, &LoadOptions { column: self.column.clone(), prices: self.prices })
    }
}

#[derive(Args)]
struct Estimation {
    /// Hold b2 at this value
    #[arg(long)]
    fixed_b2: Option<f64>,
    /// Starting points optimized per fit
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

impl Estimation {
    fn options(&self, k_max: usize) -> FitOptions {
        FitOptions { k_max, fixed_b2: self.fixed_b2, n_starts: self.starts, max_iter: self.max_iter, ..Default::default() }
    }
}

fn parse_theta(s: &str) -> std::result::Result<Theta, String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"))).collect::<std::result::Result<_, _>>()?;
    let arr: [f64; 8] = v.try_into().map_err(|v: Vec<f64>| format!("expected 8 values (a0,a1,a2,b0,b1,b2,d,gamma), got {}", v.len()))?;
    Ok(Theta::from_array(arr))
}

// Aliases keep clap from treating the list as a repeated flag.
type Sizes = Vec<usize>;
type Values = Vec<f64>;

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|p| p.trim().parse::<T>().map_err(|e| format!("'{p}': {e}"))).collect()
}

const PAPER_THETA: &str = "0.35,0.30,0.40,0.10,0.20,0,0.60,1.5";

#[derive(Subcommand)]
enum Command {
    /// Simulate a sample path; writes t,y,h,w
    Simulate {
        #[arg(long, value_parser = parse_theta, default_value = PAPER_THETA)]
        theta: Theta,
        #[arg(long, short, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        burn_in: usize,
    },
    /// Fit a model by maximum likelihood
    Fit {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = KindArg::St)]
        kind: KindArg,
        #[command(flatten)]
        est: Estimation,
    },
    /// Score test of gamma = 0 for the chosen transition variable
    ScoreTest {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        est: Estimation,
    },
    /// Second-moment condition; exit code 0 when met, 2 otherwise
    Stability {
        #[arg(long, value_parser = parse_theta, default_value = PAPER_THETA)]
        theta: Theta,
        #[arg(long, default_value_t = DEFAULT_TAIL_K_MAX)]
        tail_kmax: usize,
    },
    /// Fit on the first `split` returns and forecast the rest one step ahead
    Backtest {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        split: usize,
        #[command(flatten)]
        est: Estimation,
    },
    /// Monte Carlo studies
    Study {
        #[arg(value_enum)]
        table: TableArg,
        /// Replications per cell
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Run the full 1000 replications
        #[arg(long)]
        full: bool,
        #[arg(long, value_parser = parse_list::<usize>, default_value = "500,1000,2000")]
        n_values: Sizes,
        #[arg(long, value_parser = parse_list::<f64>, default_value = "0,0.4,2,7")]
        gammas: Values,
        #[arg(long, value_parser = parse_list::<f64>, default_value = "0.05,0.1")]
        levels: Values,
        #[arg(long, value_parser = parse_theta, default_value = PAPER_THETA)]
        theta: Theta,
        /// Starting points per fit (default 5 for table1, 2 for table2)
        #[arg(long)]
        starts: Option<usize>,
        /// Estimate b2 instead of holding it at 0
        #[arg(long)]
        free_b2: bool,
    },
    /// Descriptive statistics of a return series
    Stats {
        #[command(flatten)]
        input: Input,
        /// Report excess kurtosis instead of raw
        #[arg(long)]
        excess: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Table1,
    Table2,
}

impl Global {
    fn spec(&self) -> TransitionSpec {
        match self.spec {
            SpecArg::LaggedReturn => TransitionSpec::LaggedReturn { lag: self.lag },
            SpecArg::LaggedVariance => TransitionSpec::LaggedVariance { lag: self.lag },
            SpecArg::AsymAvg => TransitionSpec::AsymmetricAverage { percentile: self.percentile },
            SpecArg::FixedW => TransitionSpec::FixedWeight { w: self.w },
        }
    }

    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout())),
        })
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Config(format!("serialization failed: {e}")))
}

fn emit(g: &Global, meta: &[(String, String)], header: &[&str], rows: &[Vec<String>], json_body: impl FnOnce() -> Result<String>) -> Result<()> {
    let mut w = g.writer()?;
    match g.format {
        Format::Text => {
            for (k, v) in meta {
                writeln!(w, "{k}: {v}")?;
            }
            if !meta.is_empty() {
                writeln!(w)?;
            }
            write!(w, "{}", text_table(header, rows))?;
        }
        Format::Csv => write_csv(&mut w, meta, header, rows)?,
        Format::Json => writeln!(w, "{}", json_body()?)?,
    }
    w.flush()?;
    Ok(())
}

fn fit_rows(f: &FitResult) -> Vec<Vec<String>> {
    let th = f.theta_hat.to_array();
    let free = free_param_names(f.fit_kind, f.fixed_b2);
    let mut rows = Vec::new();
    for (i, name) in PARAM_NAMES.iter().enumerate() {
        if i == 7 {
            break;
        }
        let status = if free.contains(name) { "estimated" } else { "fixed" };
        rows.push(vec![name.to_string(), num(th[i]), status.to_string()]);
    }
    match f.fit_kind {
        FitKind::FullST => rows.push(vec!["gamma".into(), num(th[7]), "estimated".into()]),
        FitKind::NullHalfWeight => rows.push(vec!["gamma".into(), "0".into(), "fixed".into()]),
        FitKind::FixedWeightHygarch => rows.push(vec!["w".into(), num(f.weight().unwrap_or(f64::NAN)), "estimated".into()]),
    }
    rows
}

fn fit_meta(f: &FitResult) -> Vec<(String, String)> {
    vec![
        ("fit_kind".into(), format!("{:?}", f.fit_kind)),
        ("spec".into(), f.spec.label()),
        ("n_obs".into(), f.n_obs.to_string()),
        ("loglik".into(), num(f.loglik)),
        ("grad_norm".into(), format!("{:.3e}", f.grad_norm)),
        ("iterations".into(), f.n_iter.to_string()),
        ("converged".into(), f.converged.to_string()),
        ("mean_weight".into(), num(f.mean_weight)),
        ("at_boundary".into(), if f.at_boundary.is_empty() { "none".into() } else { f.at_boundary.join(";") }),
        ("k_max".into(), f.k_max.to_string()),
    ]
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    let spec = g.spec();
    spec.validate()?;
    match &cli.cmd {
        Command::Simulate { theta, n, burn_in } => {
            let cfg = SimConfig { theta: *theta, spec, n: *n, burn_in: *burn_in, seed: g.seed, k_max: g.kmax };
            let p = simulate(&cfg)?;
            let rows: Vec<Vec<String>> =
                (0..p.y.len()).map(|t| vec![(t + 1).to_string(), num(p.y[t]), num(p.h[t]), num(p.w[t])]).collect();
            let meta = vec![
                ("seed".into(), g.seed.to_string()),
                ("theta".into(), theta.to_array().map(num).join(";")),
                ("spec".into(), spec.label()),
                ("burn_in".into(), burn_in.to_string()),
                ("k_max".into(), g.kmax.to_string()),
            ];
            // a plain CSV is what `fit --input` reads back
            let mut w = g.writer()?;
            match g.format {
                Format::Json => writeln!(w, "{}", json(&p)?)?,
                Format::Csv => write_csv(&mut w, &meta, &["t", "y", "h", "w"], &rows)?,
                Format::Text => write_csv(&mut w, &[], &["t", "y", "h", "w"], &rows)?,
            }
            w.flush()?;
        }
        Command::Fit { input, kind, est } => {
            let y = input.load()?;
            let f = fit(&y, &spec, (*kind).into(), &est.options(g.kmax))?;
            emit(g, &fit_meta(&f), &["param", "estimate", "status"], &fit_rows(&f), || json(&f))?;
        }
        Command::ScoreTest { input, est } => {
            let y = input.load()?;
            let (null, res) = score_test(&y, &spec, &est.options(g.kmax))?;
            let mut meta = fit_meta(&null);
            meta.push(("psi_s".into(), num(res.psi_s)));
            meta.push(("p_value".into(), res.p_value.map_or("none".into(), num)));
            meta.push(("degenerate".into(), res.degenerate.to_string()));
            meta.push(("reject_5pct".into(), res.rejects(0.05).to_string()));
            meta.push(("S".into(), num(res.s)));
            meta.push(("kappa".into(), num(res.kappa)));
            meta.push(("Q".into(), num(res.q)));
            meta.push(("schur".into(), num(res.schur)));
            meta.push(("condition_J".into(), format!("{:.3e}", res.condition_j)));
            let rows: Vec<Vec<String>> =
                res.eta_names.iter().zip(&res.r).map(|(n, r)| vec![n.clone(), num(*r)]).collect();
            emit(g, &meta, &["eta", "R"], &rows, || json(&(null.clone(), res.clone())))?;
        }
        Command::Stability { theta, tail_kmax } => {
            let rep = check_stability(theta, *tail_kmax)?;
            let meta = vec![
                ("rho".into(), num(rep.rho)),
                ("stable".into(), rep.stable.to_string()),
                ("tau".into(), num(rep.tau)),
                ("tail_sum".into(), num(rep.tail_sum)),
                ("tail_sum_truncated".into(), num(rep.tail_sum_truncated)),
                ("tail_bound".into(), format!("{:.3e}", rep.tail_bound)),
                ("bound".into(), rep.bound.map_or("none".into(), |b| b.map(num).join(";"))),
            ];
            let rows: Vec<Vec<String>> = rep.c.iter().map(|r| r.iter().map(|v| num(*v)).collect()).collect();
            emit(g, &meta, &["c1", "c2", "c3", "c4"], &rows, || json(&rep))?;
            if !rep.stable {
                return Ok(ExitCode::from(EXIT_UNSTABLE));
            }
        }
        Command::Backtest { input, split, est } => {
            let y = input.load()?;
            let models = vec![
                ModelSpec::st("st-lagged-return", TransitionSpec::LaggedReturn { lag: g.lag }),
                ModelSpec::st("st-lagged-variance", TransitionSpec::LaggedVariance { lag: g.lag }),
                ModelSpec::st("st-asym-avg", TransitionSpec::AsymmetricAverage { percentile: g.percentile }),
                ModelSpec::hygarch("hygarch"),
            ];
            let reports = backtest(&y, *split, &models, &est.options(g.kmax))?;
            if g.format == Format::Json {
                let mut w = g.writer()?;
                writeln!(w, "{}", json(&reports)?)?;
                w.flush()?;
                return Ok(ExitCode::SUCCESS);
            }
            if g.format == Format::Csv {
                // per-t forecasts for plotting
                let mut header = vec!["t".to_string(), "y2".to_string()];
                for r in &reports {
                    header.push(format!("{}_h", r.model.label));
                    header.push(format!("{}_abs_err", r.model.label));
                }
                let rows: Vec<Vec<String>> = (*split..y.len())
                    .map(|t| {
                        let mut row = vec![(t + 1).to_string(), num(y[t] * y[t])];
                        for r in &reports {
                            match &r.metrics {
                                Some(m) => {
                                    let h = m.forecasts[t - split];
                                    row.push(num(h));
                                    row.push(num((h - y[t] * y[t]).abs()));
                                }
                                None => row.extend([String::new(), String::new()]),
                            }
                        }
                        row
                    })
                    .collect();
                let h: Vec<&str> = header.iter().map(String::as_str).collect();
                let mut w = g.writer()?;
                write_csv(&mut w, &[("split".into(), split.to_string())], &h, &rows)?;
                w.flush()?;
            }
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| match (&r.metrics, &r.fit) {
                    (Some(m), Some(f)) => vec![
                        r.model.label.clone(),
                        format!("{:.4}", m.rmse_in),
                        format!("{:.4}", m.rmse_out),
                        format!("{:.2}", m.llv_in),
                        format!("{:.2}", m.llv_out),
                        f.converged.to_string(),
                    ],
                    _ => vec![r.model.label.clone(), "-".into(), "-".into(), "-".into(), "-".into(), r.error.clone().unwrap_or_default()],
                })
                .collect();
            let table = text_table(&["model", "rmse_in", "rmse_out", "llv_in", "llv_out", "converged"], &rows);
            if g.format == Format::Csv && g.out.is_some() {
                eprint!("{table}");
            } else if g.format == Format::Text {
                let mut w = g.writer()?;
                writeln!(w, "split: {split} in-sample, {} out-of-sample\n", y.len() - split)?;
                write!(w, "{table}")?;
                w.flush()?;
            }
        }
        Command::Study { table, reps, full, n_values, gammas, levels, theta, starts, free_b2 } => {
            let mut cfg = match table {
                TableArg::Table1 => ExperimentConfig::estimation_study(),
                TableArg::Table2 => ExperimentConfig::size_power_study(),
            };
            cfg.replications = if *full { 1000 } else { *reps };
            cfg.n_values = n_values.clone();
            cfg.gamma_grid = gammas.clone();
            cfg.levels = levels.clone();
            cfg.theta = *theta;
            cfg.master_seed = g.seed;
            cfg.k_max = g.kmax;
            cfg.spec = spec;
            if let Some(s) = starts {
                cfg.n_starts = *s;
            }
            cfg.fixed_b2 = if *free_b2 { None } else { Some(0.0) };
            match table {
                TableArg::Table1 => {
                    let t = run_estimation_study(&cfg)?;
                    let h = t.header();
                    let h: Vec<&str> = h.iter().map(String::as_str).collect();
                    emit(g, &cfg.metadata(), &h, &t.rows(), || json(&t))?;
                }
                TableArg::Table2 => {
                    let t = run_size_power_study(&cfg)?;
                    let h = t.header();
                    let h: Vec<&str> = h.iter().map(String::as_str).collect();
                    emit(g, &cfg.metadata(), &h, &t.rows(), || json(&t))?;
                }
            }
        }
        Command::Stats { input, excess } => {
            let y = input.load()?;
            let kind = if *excess { KurtosisKind::Excess } else { KurtosisKind::Raw };
            let s = descriptive_stats(&y, kind)?;
            let opt = |v: Option<f64>| v.map_or("undefined".to_string(), num);
            let rows = vec![vec![
                s.n.to_string(),
                num(s.mean),
                num(s.std),
                num(s.min),
                num(s.max),
                opt(s.skewness),
                opt(s.kurtosis),
            ]];
            let kname = if *excess { "excess_kurtosis" } else { "kurtosis" };
            emit(g, &[], &["n", "mean", "std", "min", "max", "skewness", kname], &rows, || json(&s))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.global.verbose {
        env_logger::Builder::new().filter_level(log::LevelFilter::Info).init();
    } else {
        env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
