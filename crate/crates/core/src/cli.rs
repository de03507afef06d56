//! Command-line front end.
//!
//! Every command reads a TOML config (except `synth-data`), runs one
//! operation and writes CSV or JSON to `--out` or standard output.
//! Diagnostics go to standard error. Exit codes: 0 success, 1 invalid
//! input, 2 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dispatch::{optimal_dispatch, Regime};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::scenario::{
    load_config, run_sweep, synth_generate, write_aggregates, write_hourly, write_table, write_utility_params,
    LoadedConfig, Scenario, SweepConfig, SynthParams, UtilityParamRow,
};
use crate::sensitivity::{dg_dparam, fd_capacity, sign_table, Parameter};
use crate::sizing::{linear_grid, marginal_value_curve, solve_capacity, solve_capacity_with};
use crate::tariff::PeriodId;

/// Seed used when neither `--seed` nor the environment provides one.
const DEFAULT_SEED: u64 = 2018;
const SEED_ENV: &str = "NEM_SIZER_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "nem-sizer",
    version,
    about = "PV sizing and dispatch under net energy metering tariffs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Tariff and scenario TOML file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (standard output when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for synthetic data (falls back to NEM_SIZER_SEED)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for parallel grids
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a tariff and list its settlement periods
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Calibrate per-period utilities from the scenario data
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Also write the period aggregates CSV here
        #[arg(long)]
        aggregates_out: Option<PathBuf>,
    },
    /// Per-period dispatch at a given capacity
    Dispatch {
        #[command(flatten)]
        common: Common,
        /// Installed capacity in kW (defaults to the optimum)
        #[arg(long)]
        capacity: Option<f64>,
        /// Realized capacity factor applied to every generating period;
        /// expected quantities are reported when omitted
        #[arg(long)]
        psi: Option<f64>,
    },
    /// Optimal capacity
    Size {
        #[command(flatten)]
        common: Common,
        /// PV cost override, $/kW
        #[arg(long)]
        c_g: Option<f64>,
        /// Capacity limit override, kW
        #[arg(long)]
        g_max: Option<f64>,
    },
    /// Marginal value of capacity on a grid
    Curve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        gmin: f64,
        #[arg(long)]
        gmax: Option<f64>,
        /// Number of grid points
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Derivatives of the optimal capacity with finite-difference checks
    Sensitivity {
        #[command(flatten)]
        common: Common,
        /// Restrict price parameters to this period
        #[arg(long)]
        period: Option<usize>,
    },
    /// Empirical signs of the comparative statics by regime
    SignTable {
        #[command(flatten)]
        common: Common,
        /// Period whose prices are perturbed (defaults to the largest producer)
        #[arg(long)]
        period: Option<usize>,
    },
    /// Re-solve the capacity on a grid of uniform price shifts
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        dpi_plus_min: f64,
        #[arg(long, default_value_t = 0.15, allow_hyphen_values = true)]
        dpi_plus_max: f64,
        #[arg(long, default_value_t = -0.15, allow_hyphen_values = true)]
        dpi_minus_min: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        dpi_minus_max: f64,
        /// Skip the fixed-capacity columns
        #[arg(long)]
        no_fixed: bool,
    },
    /// Write a synthetic year of hourly demand and PV data
    SynthData {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Validate { common }
            | Command::Calibrate { common, .. }
            | Command::Dispatch { common, .. }
            | Command::Size { common, .. }
            | Command::Curve { common, .. }
            | Command::Sensitivity { common, .. }
            | Command::SignTable { common, .. }
            | Command::Sweep { common, .. }
            | Command::SynthData { common } => common,
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn seed(common: &Common) -> Result<Option<u64>> {
    if common.seed.is_some() {
        return Ok(common.seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid("seed", format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn config(common: &Common) -> Result<LoadedConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::invalid("config", "--config is required for this command"))?;
    load_config(path)
}

fn scenario(common: &Common) -> Result<Scenario> {
    config(common)?.build(seed(common)?)
}

fn output(common: &Common) -> Result<Box<dyn Write>> {
    match &common.out {
        Some(path) => {
            let file = File::create(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn io_err(path: Option<&Path>) -> impl Fn(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.map(Path::to_path_buf).unwrap_or_else(|| "<stdout>".into()),
        source,
    }
}

fn emit_json<T: Serialize>(common: &Common, value: &T) -> Result<()> {
    let mut w = output(common)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(format!("JSON output: {e}")))?;
    writeln!(w, "{text}").map_err(io_err(common.out.as_deref()))?;
    w.flush().map_err(io_err(common.out.as_deref()))
}

fn finish(common: &Common, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w = output(common)?;
    write(&mut w)?;
    w.flush().map_err(io_err(common.out.as_deref()))
}

fn install_jobs(common: &Common) {
    if let Some(jobs) = common.jobs {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
}

fn execute(command: &Command) -> Result<()> {
    let common = command.common();
    install_jobs(common);
    let format = common.format;
    match command {
        Command::Validate { .. } => {
            let cfg = config(common)?;
            if format == Some(Format::Json) {
                return emit_json(common, &cfg.schedule);
            }
            finish(common, |w| {
                writeln!(w, "period_id,period,import_price,export_price,repaired").map_err(io_err(None))?;
                for p in cfg.schedule.periods() {
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        p.id,
                        p.key,
                        sig9(p.price.import_price),
                        sig9(p.price.export_price),
                        p.repaired
                    )
                    .map_err(io_err(None))?;
                }
                Ok(())
            })
        }
        Command::Calibrate { aggregates_out, .. } => {
            let cfg = config(common)?;
            let seed = seed(common)?;
            let aggs = cfg.aggregates(seed)?;
            if let Some(path) = aggregates_out {
                let file = File::create(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                write_aggregates(BufWriter::new(file), &aggs)?;
            }
            let s = crate::scenario::build_scenario(&aggs, &cfg.schedule, &cfg.calibration()?)?;
            let rows = UtilityParamRow::from_scenario(&s);
            if format == Some(Format::Json) {
                return emit_json(common, &rows);
            }
            finish(common, |w| write_utility_params(w, &rows))
        }
        Command::Dispatch { capacity, psi, .. } => {
            let s = scenario(common)?;
            let g = match capacity {
                Some(g) if *g >= 0.0 => *g,
                Some(g) => return Err(Error::invalid("capacity", format!("must be non-negative, got {g}"))),
                None => solve_capacity(&s)?.g_star,
            };
            let rows = dispatch_rows(&s, g, *psi)?;
            if format == Some(Format::Json) {
                return emit_json(common, &rows);
            }
            finish(common, |w| {
                writeln!(
                    w,
                    "period_id,capacity,consumption,import,export,payment,p_import,p_net_zero,p_export"
                )
                .map_err(io_err(None))?;
                for r in &rows {
                    let cols = [
                        r.capacity,
                        r.consumption,
                        r.import,
                        r.export,
                        r.payment,
                        r.p_import,
                        r.p_net_zero,
                        r.p_export,
                    ];
                    let cols: Vec<String> = cols.iter().map(|x| sig9(*x)).collect();
                    writeln!(w, "{},{}", r.period_id, cols.join(",")).map_err(io_err(None))?;
                }
                Ok(())
            })
        }
        Command::Size { c_g, g_max, .. } => {
            let s = scenario(common)?;
            let r = solve_capacity_with(&s, c_g.unwrap_or(s.c_g), g_max.unwrap_or(s.g_max))?;
            if format == Some(Format::Csv) {
                return finish(common, |w| {
                    write_table(
                        w,
                        &[
                            "g_star",
                            "interval_lo",
                            "interval_hi",
                            "F_at_gstar",
                            "c_g",
                            "flat_bound",
                        ],
                        [vec![
                            r.g_star,
                            r.interval[0],
                            r.interval[1],
                            r.f_at_gstar,
                            r.c_g,
                            r.flat_bound,
                        ]],
                    )
                });
            }
            emit_json(common, &r)
        }
        Command::Curve { gmin, gmax, steps, .. } => {
            let s = scenario(common)?;
            let hi = gmax.unwrap_or(s.g_max);
            if !(*gmin >= 0.0 && hi >= *gmin) || *steps == 0 {
                return Err(Error::invalid("grid", "need 0 <= gmin <= gmax and at least one step"));
            }
            let grid = linear_grid(*gmin, hi, steps.saturating_sub(1));
            let curve = marginal_value_curve(&s, &grid)?;
            if format == Some(Format::Json) {
                return emit_json(common, &curve);
            }
            finish(common, |w| {
                write_table(w, &["g", "F"], curve.iter().map(|(g, f)| vec![*g, *f]))
            })
        }
        Command::Sensitivity { period, .. } => {
            let s = scenario(common)?;
            let r = solve_capacity(&s)?;
            let mut params = vec![Parameter::PvCost];
            let periods: Vec<usize> = match period {
                Some(t) if *t < s.len() => vec![*t],
                Some(t) => return Err(Error::invalid("period", format!("no period {t}"))),
                None => (0..s.len()).collect(),
            };
            for t in periods {
                params.push(Parameter::ImportPrice(PeriodId(t)));
                params.push(Parameter::ExportPrice(PeriodId(t)));
            }
            let rows = params
                .into_iter()
                .map(|p| {
                    let report = dg_dparam(&s, &r, p)?;
                    // a shift can invert a tight price pair; report no check then
                    let fd_check = fd_capacity(&s, p, p.step()).ok();
                    Ok(SensitivityRow {
                        parameter: p.to_string(),
                        case: format!("{:?}", report.case),
                        value: report.value,
                        left: report.left,
                        right: report.right,
                        infinite: report.infinite,
                        fd_check,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if format == Some(Format::Csv) {
                return finish(common, |w| {
                    writeln!(w, "parameter,case,value,left,right,fd_check").map_err(io_err(None))?;
                    let opt = |x: Option<f64>| x.map(sig9).unwrap_or_default();
                    for r in &rows {
                        writeln!(
                            w,
                            "{},{},{},{},{},{}",
                            r.parameter,
                            r.case,
                            opt(r.value),
                            sig9(r.left),
                            sig9(r.right),
                            opt(r.fd_check)
                        )
                        .map_err(io_err(None))?;
                    }
                    Ok(())
                });
            }
            emit_json(common, &rows)
        }
        Command::SignTable { period, .. } => {
            let s = scenario(common)?;
            let tau = match period {
                Some(t) if *t < s.len() => *t,
                Some(t) => return Err(Error::invalid("period", format!("no period {t}"))),
                None => largest_producer(&s),
            };
            let table = sign_table(&s, PeriodId(tau))?;
            if format == Some(Format::Json) {
                return emit_json(common, &table);
            }
            finish(common, |w| {
                writeln!(w, "variable,parameter,regime,expected,empirical,derivative,status").map_err(io_err(None))?;
                for c in &table.cells {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{:?}",
                        c.variable.label(),
                        c.parameter.label(),
                        c.regime.label(),
                        c.expected.map(|s| s.symbol()).unwrap_or(""),
                        c.empirical.map(|s| s.symbol()).unwrap_or(""),
                        c.derivative.map(sig9).unwrap_or_default(),
                        c.status
                    )
                    .map_err(io_err(None))?;
                }
                Ok(())
            })
        }
        Command::Sweep {
            grid,
            dpi_plus_min,
            dpi_plus_max,
            dpi_minus_min,
            dpi_minus_max,
            no_fixed,
            ..
        } => {
            let s = scenario(common)?;
            let cfg = SweepConfig {
                dpi_plus: (*dpi_plus_min, *dpi_plus_max),
                dpi_minus: (*dpi_minus_min, *dpi_minus_max),
                grid_n: *grid,
                fixed_capacity_baseline: !no_fixed,
                jobs: common.jobs,
            };
            let out = run_sweep(&s, &cfg)?;
            if format == Some(Format::Json) {
                return emit_json(common, &out);
            }
            finish(common, |w| out.write_csv(w))
        }
        Command::SynthData { .. } => {
            let seed = seed(common)?.unwrap_or(DEFAULT_SEED);
            let records = synth_generate(seed, &SynthParams::default());
            if format == Some(Format::Json) {
                return emit_json(common, &records);
            }
            finish(common, |w| write_hourly(w, &records))
        }
    }
}

#[derive(Serialize)]
struct SensitivityRow {
    parameter: String,
    case: String,
    value: Option<f64>,
    left: f64,
    right: f64,
    infinite: bool,
    fd_check: Option<f64>,
}

#[derive(Serialize)]
struct DispatchRow {
    period_id: usize,
    capacity: f64,
    consumption: f64,
    import: f64,
    export: f64,
    payment: f64,
    p_import: f64,
    p_net_zero: f64,
    p_export: f64,
}

fn dispatch_rows(s: &Scenario, g: f64, psi: Option<f64>) -> Result<Vec<DispatchRow>> {
    if let Some(psi) = psi {
        if !(0.0..=1.0).contains(&psi) {
            return Err(Error::invalid("psi", format!("must lie in [0, 1], got {psi}")));
        }
    }
    (0..s.len())
        .map(|t| {
            let p = &s.periods[t];
            let row = match psi {
                Some(psi) => {
                    let v = if p.is_generating() {
                        psi.min(p.dist.psi_max())
                    } else {
                        0.0
                    };
                    let d = optimal_dispatch(&p.utility, s.price(t), p.effective_capacity(g), v);
                    let one = |r: Regime| if d.regime == r { 1.0 } else { 0.0 };
                    DispatchRow {
                        period_id: t,
                        capacity: g,
                        consumption: d.consumption,
                        import: d.import,
                        export: d.export,
                        payment: d.period_payment,
                        p_import: one(Regime::Import),
                        p_net_zero: one(Regime::NetZero),
                        p_export: one(Regime::Export),
                    }
                }
                None => {
                    let q = s.expected_quantities_at(t, g)?;
                    let pr = p.dist.regime_probabilities(
                        p.effective_capacity(g),
                        s.thresholds(t),
                        crate::dispatch::Tie::Closed,
                    );
                    DispatchRow {
                        period_id: t,
                        capacity: g,
                        consumption: q.consumption,
                        import: q.import,
                        export: q.export,
                        payment: q.payment,
                        p_import: pr.import,
                        p_net_zero: pr.net_zero,
                        p_export: pr.export,
                    }
                }
            };
            Ok(row)
        })
        .collect()
}

/// Period with the largest expected generation per kW.
fn largest_producer(s: &Scenario) -> usize {
    (0..s.len())
        .max_by(|&a, &b| {
            let energy = |t: usize| {
                let p = &s.periods[t];
                match p.dist {
                    crate::stochastic::CapacityFactorDist::PointMass(v) => p.hours * v,
                    crate::stochastic::CapacityFactorDist::ClippedNormal { mu, .. } => p.hours * mu.max(0.0),
                }
            };
            energy(a).total_cmp(&energy(b)).then(b.cmp(&a))
        })
        .unwrap_or(0)
}
