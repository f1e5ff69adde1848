#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use config::{
    Command, ConfigError, Format, GridControls, NonlinearityName, NonlinearitySpec, OutputSpec, Profile, RunConfig,
    TierName,
};
use fracstab_core::extension::ExtensionField;
use fracstab_core::flux::{magic_constant_estimate, magic_constant_mc, FluxConstantQuery};
use fracstab_core::operator::assemble;
use fracstab_core::regimes::{classify, critical_s_gelfand, critical_s_radial, Threshold};
use fracstab_core::solver::{check_nonlinearity, continue_branch, Builtin, ContinuationControls};
use fracstab_core::verify::{Comparison, Verifier, VerifyOptions};
use fracstab_core::{FracError, Getoor, GridSpec, Params, RadialProfile, SmoothBump};
use output::{Cell, Table};

#[derive(Parser)]
#[command(name = "fracstab", version, about = "Experiments on stable solutions of (-Δ)^s u = λ f(u) in the unit ball")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (default: standard output).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Subcommand)]
enum Sub {
    /// Critical orders and regime classification per dimension.
    Regimes {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        n: Option<Vec<usize>>,
        /// Also classify `(n, s)`.
        #[arg(long)]
        s: Option<f64>,
    },
    /// The flux constant by quadrature, with a seeded Monte Carlo estimate.
    ConstantA {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        beta: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo samples per constant; 0 skips the estimate.
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Extension field of a test profile at sample points.
    Extend {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        rho: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        y: Option<Vec<f64>>,
    },
    /// Continues the solution branch from the trivial state.
    SolveBranch {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long, value_enum)]
        f: Option<NonlinearityName>,
        /// Exponent of the power nonlinearity.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        intervals: Option<usize>,
        #[arg(long, alias = "max-lambda")]
        lambda_max: Option<f64>,
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Runs the acceptance checks of a tier.
    Verify {
        #[arg(long, value_enum)]
        tier: Option<TierName>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        ds_scale: Option<f64>,
    },
}

enum Failure {
    Config(ConfigError),
    Domain(String),
    Accuracy(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<FracError> for Failure {
    fn from(e: FracError) -> Self {
        match e {
            FracError::Domain(_) => Failure::Domain(e.to_string()),
            _ => Failure::Accuracy(e.to_string()),
        }
    }
}

fn missing(field: &str) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: "required but not set".into(),
    }
}

fn domain(msg: impl Into<String>) -> Failure {
    Failure::Domain(msg.into())
}

/// Flags as a partial configuration, plus verify-only extras.
fn flags(cli: &Cli) -> (RunConfig, Option<f64>) {
    let mut c = RunConfig {
        output: OutputSpec {
            path: cli.output.clone(),
            format: cli.format,
        },
        ..RunConfig::default()
    };
    let mut ds_scale = None;
    match &cli.command {
        None => {}
        Some(Sub::Regimes { n, s }) => {
            c.command = Some(Command::Regimes);
            c.n = n.clone();
            c.s = *s;
        }
        Some(Sub::ConstantA { n, s, beta, seed, samples }) => {
            c.command = Some(Command::ConstantA);
            c.n = n.map(|n| vec![n]);
            c.s = *s;
            c.beta = beta.clone();
            c.seed = *seed;
            c.samples = *samples;
        }
        Some(Sub::Extend { n, s, profile, rho, y }) => {
            c.command = Some(Command::Extend);
            c.n = n.map(|n| vec![n]);
            c.s = *s;
            c.profile = *profile;
            c.rho = rho.clone();
            c.y = y.clone();
        }
        Some(Sub::SolveBranch { n, s, f, p, intervals, lambda_max, max_points }) => {
            c.command = Some(Command::SolveBranch);
            c.n = n.map(|n| vec![n]);
            c.s = *s;
            c.nonlinearity = f.map(|name| NonlinearitySpec { name, p: *p });
            c.grid = GridControls {
                intervals: *intervals,
                lambda_max: *lambda_max,
                max_points: *max_points,
            };
        }
        Some(Sub::Verify { tier, seed, ds_scale: d }) => {
            c.command = Some(Command::Verify);
            c.tier = *tier;
            c.seed = *seed;
            ds_scale = *d;
        }
    }
    (c, ds_scale)
}

/// A fully validated run.
enum Job {
    Regimes { ns: Vec<usize>, s: Option<f64> },
    ConstantA { queries: Vec<FluxConstantQuery>, seed: u64, samples: u64 },
    Extend { params: Params, profile: Profile, points: Vec<(f64, f64)> },
    SolveBranch { params: Params, f: Builtin, grid: Vec<f64>, controls: ContinuationControls },
    Verify(VerifyOptions),
}

fn single_n(c: &RunConfig) -> Result<usize, Failure> {
    match c.n.as_deref() {
        None => Err(missing("n").into()),
        Some([n]) => Ok(*n),
        Some(_) => Err(domain("this command takes a single n")),
    }
}

fn params(c: &RunConfig) -> Result<Params, Failure> {
    let s = c.s.ok_or_else(|| missing("s"))?;
    Ok(Params::new(single_n(c)?, s)?)
}

fn validate(c: &RunConfig, ds_scale: Option<f64>) -> Result<Job, Failure> {
    let command = c.command.ok_or_else(|| missing("command"))?;
    Ok(match command {
        Command::Regimes => {
            let ns = c.n.clone().unwrap_or_else(|| (2..=12).collect());
            for &n in &ns {
                if n == 0 {
                    return Err(domain("n must be at least 1"));
                }
                if let Some(s) = c.s {
                    Params::new(n, s)?;
                }
            }
            Job::Regimes { ns, s: c.s }
        }
        Command::ConstantA => {
            let p = params(c)?;
            let betas = c.beta.clone().ok_or_else(|| missing("beta"))?;
            let queries = betas
                .into_iter()
                .map(|b| FluxConstantQuery::new(p, b))
                .collect::<Result<Vec<_>, _>>()?;
            Job::ConstantA {
                queries,
                seed: c.seed.unwrap_or(42),
                samples: c.samples.unwrap_or(100_000),
            }
        }
        Command::Extend => {
            let params = params(c)?;
            let rho = c.rho.clone().unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75]);
            let y = c.y.clone().unwrap_or_else(|| vec![0.1]);
            if let Some(r) = rho.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
                return Err(domain(format!("rho = {r} must be finite and >= 0")));
            }
            if let Some(y) = y.iter().find(|y| !(y.is_finite() && **y > 0.0)) {
                return Err(domain(format!("y = {y} must be finite and > 0")));
            }
            let points = rho.iter().flat_map(|&r| y.iter().map(move |&y| (r, y))).collect();
            Job::Extend {
                params,
                profile: c.profile.unwrap_or_default(),
                points,
            }
        }
        Command::SolveBranch => {
            let s = c.s.ok_or_else(|| missing("s"))?;
            let params = Params::for_solver(single_n(c)?, s)?;
            let spec = c.nonlinearity.unwrap_or(NonlinearitySpec {
                name: NonlinearityName::Exp,
                p: None,
            });
            let f = spec.builtin().map_err(Failure::Domain)?;
            check_nonlinearity(&f)?;
            let grid = GridSpec::new(c.grid.intervals.unwrap_or(40)).build()?;
            let mut controls = ContinuationControls::default();
            if let Some(l) = c.grid.lambda_max {
                if !(l >= 0.0) {
                    return Err(domain(format!("lambda_max = {l} must be >= 0")));
                }
                controls.lambda_max = l;
            }
            if let Some(m) = c.grid.max_points {
                if m == 0 {
                    return Err(domain("max_points must be positive"));
                }
                controls.max_points = m;
            }
            Job::SolveBranch {
                params,
                f,
                grid,
                controls,
            }
        }
        Command::Verify => {
            let ds_scale = ds_scale.unwrap_or(1.0);
            if !(ds_scale.is_finite() && ds_scale > 0.0) {
                return Err(domain("ds-scale must be finite and positive"));
            }
            Job::Verify(VerifyOptions {
                tier: c.tier.unwrap_or(TierName::Fast).into(),
                seed: c.seed.unwrap_or(42),
                ds_scale,
            })
        }
    })
}

fn rows_label(k: usize) -> String {
    if k == 1 {
        "1 row".into()
    } else {
        format!("{k} rows")
    }
}

fn threshold_cells(t: Threshold) -> [Cell; 2] {
    match t {
        Threshold::AllS => ["all".into(), Cell::Empty],
        Threshold::NoS => ["none".into(), Cell::Empty],
        Threshold::Crossing(s) => ["crossing".into(), s.into()],
    }
}

/// Runs the job; the table, a one-line summary, and whether every check
/// passed.
fn execute(job: Job) -> Result<(Table, String, bool), Failure> {
    match job {
        Job::Regimes { ns, s } => {
            let mut cols = vec!["n", "radial_kind", "radial_critical_s", "gelfand_kind", "gelfand_critical_s"];
            if s.is_some() {
                cols.extend(["s", "radial_condition_holds", "mu_floor", "gelfand_condition_holds"]);
            }
            let mut table = Table::new(cols);
            let rows: Vec<Result<Vec<Cell>, FracError>> = ns
                .par_iter()
                .map(|&n| {
                    let mut row = vec![Cell::from(n)];
                    row.extend(threshold_cells(critical_s_radial(n)?));
                    row.extend(threshold_cells(critical_s_gelfand(n)?));
                    if let Some(s) = s {
                        let r = classify(&Params::new(n, s)?)?;
                        row.extend([
                            s.into(),
                            r.radial_condition_holds.into(),
                            r.mu_floor.into(),
                            r.gelfand_condition_holds.into(),
                        ]);
                    }
                    Ok(row)
                })
                .collect();
            for row in rows {
                table.push(row?);
            }
            let summary = format!("regimes: {}", rows_label(table.rows.len()));
            Ok((table, summary, true))
        }
        Job::ConstantA { queries, seed, samples } => {
            let mut table = Table::new(vec![
                "n",
                "s",
                "beta",
                "a",
                "quadrature_error",
                "mc_mean",
                "mc_std_error",
                "mc_samples",
            ]);
            let rows: Vec<Result<Vec<Cell>, FracError>> = queries
                .par_iter()
                .map(|q| {
                    let est = magic_constant_estimate(q)?;
                    let mc = if samples > 0 {
                        Some(magic_constant_mc(q, samples, seed)?)
                    } else {
                        None
                    };
                    Ok(vec![
                        q.params.n().into(),
                        q.params.s().into(),
                        q.beta.into(),
                        est.value.into(),
                        est.error.into(),
                        mc.map(|m| m.mean).into(),
                        mc.map(|m| m.std_error).into(),
                        mc.map_or(0, |m| m.samples).into(),
                    ])
                })
                .collect();
            for row in rows {
                table.push(row?);
            }
            table.meta.push(("seed", seed.into()));
            let summary = format!("constant-a: {} (seed {seed}, {samples} samples)", rows_label(table.rows.len()));
            Ok((table, summary, true))
        }
        Job::Extend { params, profile, points } => match profile {
            Profile::Getoor => extend(ExtensionField::new(Getoor { s: params.s() }, params), points),
            Profile::Bump => extend(ExtensionField::new(SmoothBump::default(), params), points),
        },
        Job::SolveBranch {
            params,
            f,
            grid,
            controls,
        } => {
            let op = assemble(&params, &grid)?;
            let branch = continue_branch(&op, &f, &controls)?;
            let mut table = Table::new(vec!["lambda", "sup_norm", "mu1", "boundary_exponent"]);
            for r in branch.records() {
                table.push(vec![r.lambda.into(), r.sup_norm.into(), r.mu1.into(), r.boundary_exponent.into()]);
            }
            table.meta.push(("n", params.n().into()));
            table.meta.push(("s", params.s().into()));
            table.meta.push(("fold_found", branch.fold_found.into()));
            table.meta.push(("lambda_star", branch.lambda_star.into()));
            let summary = match branch.lambda_star {
                Some(l) if branch.fold_found => {
                    format!("solve-branch: {}, fold at lambda* = {}", rows_label(table.rows.len()), output::format_sig(l, 10))
                }
                _ => format!("solve-branch: {}, no fold", rows_label(table.rows.len())),
            };
            Ok((table, summary, true))
        }
        Job::Verify(opts) => {
            let verifier = Verifier::new(opts);
            let mut table = Table::new(vec![
                "id",
                "check",
                "check_passed",
                "seconds",
                "label",
                "measured",
                "comparison",
                "required",
                "passed",
                "error",
            ]);
            let mut failed = Vec::new();
            let ids = opts.tier.criteria();
            for &id in &ids {
                let r = verifier.check(id);
                eprintln!("{}", r.summary());
                if !r.passed {
                    failed.push(r.name.clone());
                }
                let head = |label: Cell| {
                    vec![Cell::from(r.id), r.name.as_str().into(), r.passed.into(), r.seconds.into(), label]
                };
                if let Some(e) = &r.error {
                    let mut row = head(Cell::Empty);
                    row.extend([Cell::Empty, Cell::Empty, Cell::Empty, false.into(), e.as_str().into()]);
                    table.push(row);
                }
                for m in &r.measurements {
                    let mut row = head(m.label.as_str().into());
                    let cmp = match m.comparison {
                        Comparison::AtMost => "<=",
                        Comparison::AtLeast => ">=",
                    };
                    row.extend([m.measured.into(), cmp.into(), m.required.into(), m.passed.into(), Cell::Empty]);
                    table.push(row);
                }
            }
            let tier = match opts.tier {
                fracstab_core::verify::Tier::Fast => "fast",
                fracstab_core::verify::Tier::Full => "full",
            };
            table.meta.push(("tier", tier.into()));
            table.meta.push(("passed", failed.is_empty().into()));
            let summary = if failed.is_empty() {
                format!("verify ({tier}): all {} checks passed", ids.len())
            } else {
                format!("verify ({tier}): {} of {} checks failed: {}", failed.len(), ids.len(), failed.join("; "))
            };
            Ok((table, summary, failed.is_empty()))
        }
    }
}

fn extend<P: RadialProfile + Sync>(
    field: ExtensionField<P>,
    points: Vec<(f64, f64)>,
) -> Result<(Table, String, bool), Failure> {
    let mut table = Table::new(vec!["rho", "y", "v", "v_rho", "v_y", "weighted_flux"]);
    let rows: Vec<Result<Vec<Cell>, FracError>> = points
        .par_iter()
        .map(|&(rho, y)| {
            let v = field.extend(rho, y)?;
            let (vr, vy) = field.gradient(rho, y)?;
            let flux = field.weighted_flux(rho, y)?;
            Ok(vec![rho.into(), y.into(), v.into(), vr.into(), vy.into(), flux.into()])
        })
        .collect();
    for row in rows {
        table.push(row?);
    }
    let summary = format!("extend: {}", rows_label(table.rows.len()));
    Ok((table, summary, true))
}

fn init_threads() -> Result<(), ConfigError> {
    let Ok(value) = std::env::var("FRACSTAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().ok().filter(|&k| k > 0).ok_or_else(|| ConfigError {
        field: "FRACSTAB_THREADS".into(),
        message: format!("`{value}` is not a positive integer"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| ConfigError {
            field: "FRACSTAB_THREADS".into(),
            message: e.to_string(),
        })
}

fn run(cli: Cli) -> Result<bool, Failure> {
    init_threads()?;
    let (flag_cfg, ds_scale) = flags(&cli);
    let file_cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let cfg = file_cfg.merge(flag_cfg);
    let job = validate(&cfg, ds_scale)?;
    let command = cfg.command.expect("validated").name();
    let (table, summary, ok) = execute(job)?;
    let text = table.render(command, cfg.output.format.unwrap_or_default());
    match &cfg.output.path {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            println!("{summary}; wrote {}", path.display());
        }
        None => {
            print!("{text}");
            eprintln!("{summary}");
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: cannot write output: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Accuracy(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
