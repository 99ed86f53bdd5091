//! Multi-run studies: μ sweeps with scaling fits, and grid/time refinement.

use rayon::prelude::*;

use crate::diagnostics::{energy_identity_residual, fit_decay_rate, transient_time, DiagnosticsRecord, EnergyBalance};
use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};
use crate::fit::linear_fit;
use crate::io::config::RunConfig;
use crate::model::{make_initial, State};
use crate::solver::{integrate_fixed_steps, run, stable_dt, step, RunOptions};

/// Records with linf_U below this are at the rounding floor and are left
/// out of decay fits.
pub const DECAY_FLOOR: f64 = 1e-12;

/// Suprema over the records after the settle time of one run.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub sup_linf_u: f64,
    pub sup_l2_grad_w_sq: f64,
    pub sup_l4_grad_w_4: f64,
    pub sup_l2_U: f64,
    pub sup_linf_grad_v_over_v: f64,
    /// sup of ∫u² + ∫|∇w|⁴.
    pub sup_u2_plus_grad_w4: f64,
    /// First record time after which ∫u <= 2|Ω|r/μ holds for good.
    pub transient_t: f64,
    /// See [`settle_time`]; suprema are taken from here on.
    pub settle_t: f64,
    pub fitted_decay_rate: Option<f64>,
}

/// A successful sweep run: its row plus the full trajectory.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub row: SweepRow,
    pub records: Vec<DiagnosticsRecord>,
    pub balances: Vec<EnergyBalance>,
}

#[derive(Debug)]
pub struct SweepEntry {
    pub mu: f64,
    pub outcome: Result<SweepRun>,
}

/// Runs `base` once per μ. Each run starts from u0 = (r/μ)(1 + perturbation)
/// with the perturbation, v0 and grid shared across the sweep.
pub fn mu_sweep(base: &RunConfig, mu_list: &[f64]) -> Result<Vec<SweepEntry>> {
    if mu_list.len() < 4 {
        return Err(Error::Input(format!("sweep needs at least 4 mu values, got {}", mu_list.len())));
    }
    if let Some(m) = mu_list.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::Input(format!("mu values must be > 0, got {m}")));
    }
    if mu_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Input("mu values must be strictly increasing".into()));
    }
    Ok(mu_list
        .par_iter()
        .map(|&mu| SweepEntry {
            mu,
            outcome: sweep_one(base, mu),
        })
        .collect())
}

fn sweep_one(base: &RunConfig, mu: f64) -> Result<SweepRun> {
    let p = base.params.with_mu(mu);
    let mut ic = base.ic.clone();
    ic.u_base = p.capacity();
    let opts = RunOptions {
        record_every: base.record_every,
        evolve_w: false,
        snapshots: false,
        upvq: None,
    };
    let out = run(&ic, &base.grid, &p, &opts)?;
    log::info!("sweep row mu = {mu} done after {} steps", out.steps);
    let row = summarize(mu, p.r, base.grid.area(), &out.records)?;
    Ok(SweepRun {
        row,
        records: out.records,
        balances: out.balances,
    })
}

/// First record time from which ∫u <= 2|Ω|r/μ holds for every later record.
pub fn mass_bound_transient(records: &[DiagnosticsRecord], r: f64, mu: f64, area: f64) -> Option<f64> {
    let bound = 2.0 * area * r / mu;
    transient_time(records, |rec| rec.mass_u <= bound)
}

/// First record time at or after `transient_t + 1/r` with
/// ∫u² <= 16|Ω|r²/μ² and ∫|∇w|² <= 16|Ω|r/μ. The energy functional is
/// nonincreasing from there on when μ is large enough.
pub fn settle_time(records: &[DiagnosticsRecord], transient_t: f64, r: f64, mu: f64, area: f64) -> Option<f64> {
    let u2_bound = 16.0 * area * r * r / (mu * mu);
    let gw_bound = 16.0 * area * r / mu;
    records
        .iter()
        .filter(|rec| rec.t >= transient_t + 1.0 / r)
        .find(|rec| rec.l2_u * rec.l2_u <= u2_bound && rec.l2_grad_w * rec.l2_grad_w <= gw_bound)
        .map(|rec| rec.t)
}

fn summarize(mu: f64, r: f64, area: f64, records: &[DiagnosticsRecord]) -> Result<SweepRow> {
    let transient_t = mass_bound_transient(records, r, mu, area)
        .ok_or_else(|| Error::Input(format!("mu = {mu}: mass bound never settles within t_end")))?;
    let settle_t = settle_time(records, transient_t, r, mu, area)
        .ok_or_else(|| Error::Input(format!("mu = {mu}: no settle time within t_end")))?;
    let tail: Vec<&DiagnosticsRecord> = records.iter().filter(|rec| rec.t >= settle_t).collect();
    if tail.is_empty() {
        return Err(Error::Input(format!(
            "mu = {mu}: no records after settle time {settle_t}; raise t_end"
        )));
    }
    let sup = |f: &dyn Fn(&DiagnosticsRecord) -> f64| tail.iter().map(|rec| f(rec)).fold(f64::NEG_INFINITY, f64::max);
    let series: Vec<(f64, f64)> = tail
        .iter()
        .filter(|rec| rec.linf_U > DECAY_FLOOR)
        .map(|rec| (rec.t, rec.linf_U))
        .collect();
    let fitted_decay_rate = fit_decay_rate(&series, (settle_t, f64::INFINITY)).ok().map(|f| f.rate);
    Ok(SweepRow {
        mu,
        sup_linf_u: sup(&|rec| rec.linf_u),
        sup_l2_grad_w_sq: sup(&|rec| rec.l2_grad_w * rec.l2_grad_w),
        sup_l4_grad_w_4: sup(&|rec| rec.l4_grad_w.powi(4)),
        sup_l2_U: sup(&|rec| rec.l2_U),
        sup_linf_grad_v_over_v: sup(&|rec| rec.linf_grad_v_over_v),
        sup_u2_plus_grad_w4: sup(&|rec| rec.l2_u * rec.l2_u + rec.l4_grad_w.powi(4)),
        transient_t,
        settle_t,
        fitted_decay_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    /// Slope of ln(metric) against ln(ln μ/μ).
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Slope of ln(metric/(ln μ/μ)^k) against ln μ.
    pub ratio_slope: f64,
    pub claimed_exponent: f64,
    pub rows_used: usize,
}

impl ScalingFit {
    /// Largest accepted trend of the log-ratio.
    pub const RATIO_SLOPE_LIMIT: f64 = 0.1;
    /// Accepted shortfall of the fitted exponent below the claim.
    pub const EXPONENT_SLACK: f64 = 0.25;

    pub fn ratio_trend_ok(&self) -> bool {
        self.ratio_slope <= Self::RATIO_SLOPE_LIMIT
    }

    pub fn passes(&self) -> bool {
        self.exponent >= self.claimed_exponent - Self::EXPONENT_SLACK || self.ratio_trend_ok()
    }
}

/// Fits `metric ≈ C·(ln μ/μ)^k` over the rows.
pub fn scaling_fit(rows: &[SweepRow], metric: impl Fn(&SweepRow) -> f64, claimed_exponent: f64) -> Result<ScalingFit> {
    if rows.len() < 4 {
        return Err(Error::Input(format!("scaling fit needs at least 4 rows, got {}", rows.len())));
    }
    let mut xs = Vec::with_capacity(rows.len());
    let mut log_mu = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    let mut ratios = Vec::with_capacity(rows.len());
    for row in rows {
        let m = metric(row);
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Domain(format!("metric must be > 0, got {m} at mu = {}", row.mu)));
        }
        if !(row.mu > 1.0) {
            return Err(Error::Domain(format!("ln mu / mu needs mu > 1, got {}", row.mu)));
        }
        let law = row.mu.ln() / row.mu;
        xs.push(law.ln());
        log_mu.push(row.mu.ln());
        ys.push(m.ln());
        ratios.push(m.ln() - claimed_exponent * law.ln());
    }
    let fit = linear_fit(&xs, &ys)?;
    let ratio = linear_fit(&log_mu, &ratios)?;
    Ok(ScalingFit {
        exponent: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        ratio_slope: ratio.slope,
        claimed_exponent,
        rows_used: rows.len(),
    })
}

/// Observed convergence orders from a three-level self-convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    /// Cells per direction, coarsest first.
    pub levels: Vec<usize>,
    pub t_final: f64,
    /// ‖u_h − R u_{h/2}‖₂ between consecutive levels.
    pub spatial_diffs_u: Vec<f64>,
    pub spatial_diffs_v: Vec<f64>,
    pub spatial_order_u: Option<f64>,
    pub spatial_order_v: Option<f64>,
    /// Differences between dt, dt/2 and dt/4 on the finest grid.
    pub temporal_diffs_u: Vec<f64>,
    pub temporal_diffs_v: Vec<f64>,
    pub temporal_order_u: Option<f64>,
    pub temporal_order_v: Option<f64>,
    /// Set when the differences sit at rounding level and no order exists.
    pub notice: Option<String>,
}

const MAX_CELLS_PER_SIDE: usize = 512;

/// Differences below this fraction of the solution scale count as rounding.
const ROUNDING_LEVEL: f64 = 1e-13;

/// Runs `base` to `base.params.t_end` on `levels` successively halved grids
/// with dt ∝ h², then repeats the finest grid with dt/2 and dt/4.
pub fn refinement_study(base: &RunConfig, levels: usize) -> Result<RefinementReport> {
    if levels < 3 {
        return Err(Error::Input(format!("refinement needs at least 3 levels, got {levels}")));
    }
    let factor = 1usize << (levels - 1);
    let finest = base.grid.nx().max(base.grid.ny()) * factor;
    if finest > MAX_CELLS_PER_SIDE {
        return Err(Error::Input(format!(
            "finest grid would have {finest} cells per side, limit {MAX_CELLS_PER_SIDE}"
        )));
    }
    let t_final = base.params.t_end;
    if !(t_final > 0.0) {
        return Err(Error::Input("refinement needs t_end > 0".into()));
    }
    let p = base.params;
    let grids: Vec<Grid2D> = (0..levels).map(|k| base.grid.refined(1 << k)).collect::<Result<_>>()?;

    // Half the stable step on the coarsest grid keeps every level inside
    // its own bound while the solution evolves.
    let s0 = make_initial(&base.ic, &grids[0], &p)?;
    let dt0 = 0.5 * stable_dt(&s0, &p)?;
    let n0 = (t_final / dt0).ceil().max(1.0) as usize;

    let solve = |g: &Grid2D, n: usize| -> Result<State> {
        let s = make_initial(&base.ic, g, &p)?;
        integrate_fixed_steps(s, &p, t_final, n)
    };
    let finals: Vec<State> = grids
        .par_iter()
        .enumerate()
        .map(|(k, g)| solve(g, n0 << (2 * k)))
        .collect::<Result<_>>()?;

    let n_fine = n0 << (2 * (levels - 1));
    let fine_g = grids[levels - 1];
    let temporal: Vec<State> = [2usize, 4]
        .par_iter()
        .map(|&m| solve(&fine_g, n_fine * m))
        .collect::<Result<_>>()?;

    let mut spatial_diffs_u = Vec::new();
    let mut spatial_diffs_v = Vec::new();
    for k in 0..levels - 1 {
        spatial_diffs_u.push(l2_distance(&finals[k].u, &finals[k + 1].u.restrict()?));
        spatial_diffs_v.push(l2_distance(&finals[k].v, &finals[k + 1].v.restrict()?));
    }
    let fine = &finals[levels - 1];
    let temporal_diffs_u = vec![l2_distance(&fine.u, &temporal[0].u), l2_distance(&temporal[0].u, &temporal[1].u)];
    let temporal_diffs_v = vec![l2_distance(&fine.v, &temporal[0].v), l2_distance(&temporal[0].v, &temporal[1].v)];

    let scale_u = fine.u.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let scale_v = fine.v.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let order = |d: &[f64], scale: f64| -> Option<f64> {
        let (a, b) = (d[d.len() - 2], d[d.len() - 1]);
        if a <= ROUNDING_LEVEL * scale || b <= ROUNDING_LEVEL * scale {
            None
        } else {
            Some((a / b).log2())
        }
    };
    let spatial_order_u = order(&spatial_diffs_u, scale_u);
    let spatial_order_v = order(&spatial_diffs_v, scale_v);
    let temporal_order_u = order(&temporal_diffs_u, scale_u);
    let temporal_order_v = order(&temporal_diffs_v, scale_v);
    let notice = [
        ("spatial u", spatial_order_u),
        ("spatial v", spatial_order_v),
        ("temporal u", temporal_order_u),
        ("temporal v", temporal_order_v),
    ]
    .iter()
    .filter(|(_, o)| o.is_none())
    .map(|(name, _)| *name)
    .collect::<Vec<_>>();
    let notice = (!notice.is_empty()).then(|| {
        format!(
            "degenerate case: {} differences are at rounding level, no order reported",
            notice.join(", ")
        )
    });

    Ok(RefinementReport {
        levels: grids.iter().map(|g| g.nx()).collect(),
        t_final,
        spatial_diffs_u,
        spatial_diffs_v,
        spatial_order_u,
        spatial_order_v,
        temporal_diffs_u,
        temporal_diffs_v,
        temporal_order_u,
        temporal_order_v,
        notice,
    })
}

/// Energy identity residual measured at `t_end` on each refined grid with
/// dt ∝ h². Returns (cells per side, residual) pairs, coarsest first.
pub fn identity_refinement(base: &RunConfig, levels: usize) -> Result<Vec<(usize, f64)>> {
    if levels < 2 {
        return Err(Error::Input(format!("need at least 2 levels, got {levels}")));
    }
    let p = base.params;
    let grids: Vec<Grid2D> = (0..levels).map(|k| base.grid.refined(1 << k)).collect::<Result<_>>()?;
    let s0 = make_initial(&base.ic, &grids[0], &p)?;
    let dt0 = 0.5 * stable_dt(&s0, &p)?;
    let t_final = p.t_end;
    let n0 = (t_final / dt0).ceil().max(1.0) as usize;
    grids
        .par_iter()
        .enumerate()
        .map(|(k, g)| {
            let s = make_initial(&base.ic, g, &p)?;
            let n = n0 << (2 * k);
            let dt = if t_final > 0.0 { t_final / n as f64 } else { dt0 / (1 << (2 * k)) as f64 };
            let s = if t_final > 0.0 { integrate_fixed_steps(s, &p, t_final, n)? } else { s };
            let (next, _) = step(&s, &p, dt)?;
            Ok((g.nx(), energy_identity_residual(&s, &next, &p)?.residual))
        })
        .collect()
}

fn l2_distance(a: &ScalarField, b: &ScalarField) -> f64 {
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    (s * a.grid().cell_area()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mu: f64, metric: f64) -> SweepRow {
        SweepRow {
            mu,
            sup_linf_u: metric,
            sup_l2_grad_w_sq: metric,
            sup_l4_grad_w_4: metric,
            sup_l2_U: metric,
            sup_linf_grad_v_over_v: metric,
            sup_u2_plus_grad_w4: metric,
            transient_t: 0.0,
            settle_t: 1.0,
            fitted_decay_rate: None,
        }
    }

    const MUS: [f64; 5] = [20.0, 50.0, 100.0, 200.0, 400.0];

    #[test]
    fn exact_law_gives_exact_exponent() {
        let rows: Vec<_> = MUS.iter().map(|&m| row(m, 3.0 * m.ln() / m)).collect();
        let f = scaling_fit(&rows, |r| r.sup_linf_u, 1.0).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.ratio_slope.abs() < 1e-12);
        assert!(f.passes());
    }

    #[test]
    fn constant_metric_fails_first_order_claim() {
        let rows: Vec<_> = MUS.iter().map(|&m| row(m, 0.7)).collect();
        let f = scaling_fit(&rows, |r| r.sup_linf_u, 1.0).unwrap();
        assert!(f.exponent.abs() < 1e-12);
        assert!(!f.ratio_trend_ok());
        assert!(!f.passes());
    }

    #[test]
    fn scaling_fit_preconditions() {
        let rows: Vec<_> = MUS[..3].iter().map(|&m| row(m, 1.0)).collect();
        assert!(scaling_fit(&rows, |r| r.sup_linf_u, 1.0).is_err());
        let mut rows: Vec<_> = MUS.iter().map(|&m| row(m, 1.0)).collect();
        rows[2].sup_linf_u = 0.0;
        assert!(matches!(scaling_fit(&rows, |r| r.sup_linf_u, 1.0), Err(Error::Domain(_))));
    }
}
