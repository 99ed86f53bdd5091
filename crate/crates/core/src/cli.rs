//! Command-line front end: `run`, `sweep`, `check` and `refine`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::diagnostics::{mean_deviation, odi_verify, OdiSample};
use crate::error::{Error, Result};
use crate::experiments::{mass_bound_transient, mu_sweep, refinement_study, scaling_fit, settle_time, SweepRow};
use crate::io::config::{read_config, RunConfig};
use crate::io::csv::write_timeseries_csv;
use crate::io::snapshot::write_field_snapshot;
use crate::io::write_atomic;
use crate::solver::{run, RunOptions, RunOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Per-step tolerance on energy increases.
const ENERGY_STEP_TOL: f64 = 1e-8;
const MASS_RESIDUAL_TOL: f64 = 1e-8;
const SPATIAL_ORDER: (f64, f64) = (1.7, 2.3);
const TEMPORAL_ORDER: (f64, f64) = (0.7, 1.3);

#[derive(Parser, Debug)]
#[command(name = "chemotaxis", version, about = "Chemotaxis-consumption simulator with logistic source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one configuration and write the time-series CSV.
    Run {
        config: PathBuf,
        /// Also write u, v (and w if evolved) at every record time.
        #[arg(long)]
        snapshots: bool,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the run over several μ and test the scaling claims.
    Sweep {
        config: PathBuf,
        /// Comma-separated, strictly increasing μ values (at least 4).
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run and test the mass law, positivity and energy decay.
    Check { config: PathBuf },
    /// Self-convergence study on successively halved grids.
    Refine {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run { config, snapshots, out } => load(&config).and_then(|c| cmd_run(&c, snapshots, out)),
        Command::Sweep { config, mu, out } => load(&config).and_then(|c| cmd_sweep(&c, &mu, out)),
        Command::Check { config } => load(&config).and_then(|c| cmd_check(&c)),
        Command::Refine { config, levels } => load(&config).and_then(|c| cmd_refine(&c, levels)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Input(_) | Error::Format { .. } | Error::Io { .. } => EXIT_USAGE,
                _ => {
                    println!("FAIL solver {} completed", error_kind(&e));
                    EXIT_FAIL
                }
            }
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Positivity { .. } => "positivity",
        Error::Divergence { .. } => "divergence",
        Error::Domain(_) => "domain",
        Error::Contract(_) => "contract",
        Error::Degenerate(_) => "degenerate",
        _ => "error",
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    let cfg = read_config(path)?;
    cfg.params.validate()?;
    cfg.ic.validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn simulate(cfg: &RunConfig, snapshots: bool) -> Result<RunOutput> {
    let opts = RunOptions {
        record_every: cfg.record_every,
        evolve_w: cfg.evolve_w,
        snapshots,
        upvq: cfg.upvq,
    };
    run(&cfg.ic, &cfg.grid, &cfg.params, &opts)
}

fn cmd_run(cfg: &RunConfig, snapshots: bool, out: Option<PathBuf>) -> Result<i32> {
    let dir = output_dir(cfg, out)?;
    let output = simulate(cfg, snapshots)?;
    let csv = dir.join("timeseries.csv");
    write_timeseries_csv(&output.records, &csv)?;
    for (k, snap) in output.snapshots.iter().enumerate() {
        write_field_snapshot(&snap.u, "u", snap.t, &dir.join(format!("u_{k:05}.field")))?;
        write_field_snapshot(&snap.v, "v", snap.t, &dir.join(format!("v_{k:05}.field")))?;
        if let Some(w) = &snap.w_evolved {
            write_field_snapshot(w, "w", snap.t, &dir.join(format!("w_{k:05}.field")))?;
        }
    }
    println!(
        "wrote {} records ({} steps) to {}",
        output.records.len(),
        output.steps,
        csv.display()
    );
    Ok(EXIT_OK)
}

const SWEEP_HEADER: &str = "mu,sup_linf_u,sup_l2_grad_w_sq,sup_l4_grad_w_4,sup_l2_U,sup_linf_grad_v_over_v,sup_u2_plus_grad_w4,transient_t,settle_t,fitted_decay_rate";

fn sweep_line(r: &SweepRow) -> String {
    let rate = r.fitted_decay_rate.map(|x| format!("{x:?}")).unwrap_or_default();
    format!(
        "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
        r.mu,
        r.sup_linf_u,
        r.sup_l2_grad_w_sq,
        r.sup_l4_grad_w_4,
        r.sup_l2_U,
        r.sup_linf_grad_v_over_v,
        r.sup_u2_plus_grad_w4,
        r.transient_t,
        r.settle_t,
        rate
    )
}

/// The scaling claims tested by `sweep`: id, metric, exponent.
pub fn scaling_claims() -> [(&'static str, fn(&SweepRow) -> f64, f64); 4] {
    [
        ("grad_w_l2_sq", |r| r.sup_l2_grad_w_sq, 1.0),
        ("u_linf", |r| r.sup_linf_u, 1.0),
        ("u_l2_sq_plus_grad_w_l4", |r| r.sup_u2_plus_grad_w4, 2.0),
        ("U_l2", |r| r.sup_l2_U, 1.5),
    ]
}

fn cmd_sweep(cfg: &RunConfig, mus: &[f64], out: Option<PathBuf>) -> Result<i32> {
    let entries = mu_sweep(cfg, mus)?;
    let dir = output_dir(cfg, out)?;
    let mut text = String::new();
    let _ = writeln!(text, "{SWEEP_HEADER}");
    let mut rows = Vec::new();
    let mut failed = false;
    for e in &entries {
        match &e.outcome {
            Ok(run) => {
                let _ = writeln!(text, "{}", sweep_line(&run.row));
                rows.push(run.row.clone());
            }
            Err(err) => {
                eprintln!("mu = {}: {err}", e.mu);
                println!("FAIL row_mu_{} failed succeeded", e.mu);
                failed = true;
            }
        }
    }
    write_atomic(&dir.join("sweep.csv"), &text)?;
    print!("{text}");
    if rows.len() >= 4 {
        for (id, metric, k) in scaling_claims() {
            let fit = scaling_fit(&rows, metric, k)?;
            let verdict = if fit.ratio_trend_ok() { "PASS" } else { "FAIL" };
            failed |= !fit.ratio_trend_ok();
            println!(
                "{verdict} {id} {:?} {:?} exponent={:?} r2={:?}",
                fit.ratio_slope,
                crate::experiments::ScalingFit::RATIO_SLOPE_LIMIT,
                fit.exponent,
                fit.r_squared
            );
        }
    } else {
        println!("FAIL scaling_rows {} 4", rows.len());
        failed = true;
    }
    Ok(if failed { EXIT_FAIL } else { EXIT_OK })
}

fn cmd_check(cfg: &RunConfig) -> Result<i32> {
    let p = &cfg.params;
    let out = simulate(cfg, false)?;
    let recs = &out.records;
    let mut failed = false;
    let mut verdict = |id: &str, ok: bool, observed: f64, threshold: f64| {
        println!("{} {id} {observed:?} {threshold:?}", if ok { "PASS" } else { "FAIL" });
        failed |= !ok;
    };

    let worst_mass = recs.iter().map(|r| r.mass_ode_residual).fold(0.0, f64::max);
    verdict("mass_ode_residual", worst_mass <= MASS_RESIDUAL_TOL, worst_mass, MASS_RESIDUAL_TOL);

    let min_u = recs.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min);
    verdict("u_nonnegative", min_u >= 0.0, min_u, 0.0);
    let min_v = recs.iter().map(|r| r.min_v).fold(f64::INFINITY, f64::min);
    verdict("v_positive", min_v > 0.0, min_v, 0.0);

    let area = cfg.grid.area();
    let transient = mass_bound_transient(recs, p.r, p.mu, area);
    verdict(
        "mass_bound_transient",
        transient.is_some(),
        transient.unwrap_or(f64::INFINITY),
        p.t_end,
    );

    let settle = transient.and_then(|t1| settle_time(recs, t1, p.r, p.mu, area));
    if transient.is_some() && settle.is_none() {
        println!("INFO energy_checks_skipped no settle time within t_end");
    }
    if let Some(settle) = settle {
        println!("INFO settle_time {settle:?}");
        let tail: Vec<usize> = (0..recs.len()).filter(|&k| recs[k].t >= settle).collect();
        if tail.len() >= 2 {
            let worst_rise = tail
                .windows(2)
                .map(|w| recs[w[1]].energy_F - recs[w[0]].energy_F)
                .fold(f64::NEG_INFINITY, f64::max);
            verdict("energy_nonincreasing", worst_rise <= ENERGY_STEP_TOL, worst_rise, ENERGY_STEP_TOL);

            let eta = recs.iter().map(|r| r.gn1_ratio).fold(0.0, f64::max);
            let samples: Vec<OdiSample> = tail
                .iter()
                .map(|&k| OdiSample {
                    t: recs[k].t,
                    y: recs[k].energy_F,
                    h: 0.5 * out.balances[k].laplacian_w_sq,
                    g: out.balances[k].dissipation_u,
                })
                .collect();
            if eta > 0.0 {
                let rep = odi_verify(&samples, 1.0, eta, ENERGY_STEP_TOL)?;
                println!(
                    "INFO odi_hypothesis {} y0={:?} threshold={:?}",
                    rep.hypothesis_ok, samples[0].y, rep.threshold
                );
                verdict("odi_monotone", rep.monotone_ok, rep.worst_violation, ENERGY_STEP_TOL);
                verdict("odi_budget", rep.budget_ok, rep.worst_violation, ENERGY_STEP_TOL);
            } else {
                println!("INFO odi_skipped gn1_ratio is zero on every record");
            }
        } else {
            println!("INFO energy_checks_skipped fewer than 2 records after t = {settle:?}");
        }
    }
    let dev = mean_deviation(&out.final_state.u);
    println!("INFO final_mean_deviation {dev:?}");
    Ok(if failed { EXIT_FAIL } else { EXIT_OK })
}

fn cmd_refine(cfg: &RunConfig, levels: usize) -> Result<i32> {
    let rep = refinement_study(cfg, levels)?;
    let fmt = |o: Option<f64>| o.map(|x| format!("{x:?}")).unwrap_or_else(|| "none".into());
    println!("levels {:?} t = {:?}", rep.levels, rep.t_final);
    println!("spatial_order_u {}", fmt(rep.spatial_order_u));
    println!("spatial_order_v {}", fmt(rep.spatial_order_v));
    println!("temporal_order_u {}", fmt(rep.temporal_order_u));
    println!("temporal_order_v {}", fmt(rep.temporal_order_v));
    if let Some(n) = &rep.notice {
        println!("NOTICE {n}");
    }
    let mut failed = false;
    let targets = [
        ("spatial_order_u", rep.spatial_order_u, SPATIAL_ORDER),
        ("spatial_order_v", rep.spatial_order_v, SPATIAL_ORDER),
        ("temporal_order_u", rep.temporal_order_u, TEMPORAL_ORDER),
        ("temporal_order_v", rep.temporal_order_v, TEMPORAL_ORDER),
    ];
    for (id, order, (lo, hi)) in targets {
        if let Some(x) = order {
            let ok = (lo..=hi).contains(&x);
            failed |= !ok;
            println!("{} {id} {x:?} [{lo:?},{hi:?}]", if ok { "PASS" } else { "FAIL" });
        }
    }
    Ok(if failed { EXIT_FAIL } else { EXIT_OK })
}
