//! Per-record measurements: norms, the Lyapunov energy and its dissipation
//! identity, interpolation-inequality witnesses and convergence metrics.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::fit::linear_fit;
use crate::model::{Parameters, State};
use crate::ops::{
    cell_grad_sq, chemotaxis_velocity, dirichlet_energy, grad_norm_from_sq, integral, laplacian, max_value,
    min_value, norm_linf, norm_lp,
};
use crate::sensitivity::{big_g, big_g_increment_with, g_prime, Sensitivity};

/// Cells with u below this multiple of r/μ are left out of ∫|∇u|²/S(u).
pub const U_FLOOR_FACTOR: f64 = 1e-12;

/// One row of the time series.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub l2_u: f64,
    pub linf_u: f64,
    pub min_u: f64,
    pub mass_ode_residual: f64,
    pub linf_U: f64,
    pub l2_U: f64,
    pub linf_v: f64,
    pub min_v: f64,
    pub l2_grad_w: f64,
    pub l4_grad_w: f64,
    pub linf_grad_w: f64,
    pub linf_grad_v_over_v: f64,
    pub energy_F: f64,
    pub energy_identity_residual: f64,
    pub gn1_ratio: f64,
    pub gn2_ratio: f64,
    pub upvq: Option<f64>,
    pub dt_last: f64,
}

/// Terms of the energy dissipation identity over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBalance {
    pub dt: f64,
    /// (F(next) − F(prev))/dt.
    pub rate: f64,
    /// ∫|∇u|²/S(u) over cells above the floor.
    pub dissipation_u: f64,
    /// ∫|Δw|².
    pub laplacian_w_sq: f64,
    /// ∫Δw·|∇w|².
    pub cross_term: f64,
    /// μ∫u(u − r/μ)G'(u).
    pub logistic_term: f64,
    pub floored_cells: usize,
    pub residual: f64,
}

impl EnergyBalance {
    pub fn rhs(&self) -> f64 {
        -self.dissipation_u - self.laplacian_w_sq + self.cross_term - self.logistic_term
    }
}

/// w = −ln(v/v0_sup).
pub fn w_from_v(v: &ScalarField, v0_sup: f64) -> Result<ScalarField> {
    if !(v0_sup > 0.0 && v0_sup.is_finite()) {
        return Err(Error::Domain(format!("v0_sup must be > 0, got {v0_sup}")));
    }
    let lo = min_value(v);
    if !(lo > 0.0) {
        return Err(Error::Domain(format!("w needs v > 0, min v = {lo}")));
    }
    let hi = max_value(v);
    if hi > v0_sup {
        log::warn!("max v = {hi} exceeds v0_sup = {v0_sup}; w has negative cells");
    }
    Ok(v.map(|x| -(x / v0_sup).ln()))
}

/// ∫G(u) + ½∫|∇w|².
pub fn energy(s: &State, p: &Parameters) -> Result<f64> {
    let w = w_from_v(&s.v, s.v0_sup)?;
    Ok(potential_integral(&s.u, p)? + 0.5 * dirichlet_energy(&w))
}

fn potential_integral(u: &ScalarField, p: &Parameters) -> Result<f64> {
    let mut sum = 0.0;
    for &x in u.values() {
        sum += if x > 0.0 { big_g(x, p)? } else { big_g_at_zero(p)? };
    }
    Ok(sum * u.grid().cell_area())
}

/// G(0) as the limit s → 0⁺, which is finite: ∫_0^{a} σ/S(σ) dσ.
fn big_g_at_zero(p: &Parameters) -> Result<f64> {
    let exponent = 1.0 - p.beta;
    Ok(crate::quadrature::adaptive_simpson(
        |x| (x + 1.0).powf(exponent) / p.chi,
        0.0,
        p.capacity(),
        p.quad_tol,
    ))
}

/// Compares the one-step energy change with the dissipation identity
/// dF/dt = −∫|∇u|²/S − ∫|Δw|² + ∫Δw|∇w|² − μ∫u(u − r/μ)G'(u),
/// all right-hand terms evaluated at `prev`.
pub fn energy_identity_residual(prev: &State, next: &State, p: &Parameters) -> Result<EnergyBalance> {
    let dt = next.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::Input(format!(
            "energy identity needs next.t > prev.t, got {} and {}",
            prev.t, next.t
        )));
    }
    if prev.v0_sup != next.v0_sup {
        return Err(Error::Input("states carry different v0_sup".into()));
    }
    let g = *prev.grid();
    let area = g.cell_area();
    let a = p.capacity();
    let u_floor = U_FLOOR_FACTOR * a;
    let sens = Sensitivity::new(p);

    let w0 = w_from_v(&prev.v, prev.v0_sup)?;
    let w1 = w_from_v(&next.v, next.v0_sup)?;
    let grad_u_sq = cell_grad_sq(&prev.u);
    let lap_w = laplacian(&w0);
    let grad_w_sq = cell_grad_sq(&w0);

    let mut d_potential = 0.0;
    let mut dissipation_u = 0.0;
    let mut logistic_term = 0.0;
    let mut floored_cells = 0;
    for (c, (&u0, &u1)) in prev.u.values().iter().zip(next.u.values()).enumerate() {
        if u0 < u_floor || u1 <= 0.0 {
            floored_cells += 1;
            if u0 > 0.0 && u1 > 0.0 {
                let gp = g_prime(u0, p)?;
                d_potential += big_g_increment_with(u0, u1, gp, p)?;
                logistic_term += u0 * (u0 - a) * gp;
            } else {
                let g0 = if u0 > 0.0 { big_g(u0, p)? } else { big_g_at_zero(p)? };
                let g1 = if u1 > 0.0 { big_g(u1, p)? } else { big_g_at_zero(p)? };
                d_potential += g1 - g0;
            }
            continue;
        }
        let gp = g_prime(u0, p)?;
        d_potential += big_g_increment_with(u0, u1, gp, p)?;
        dissipation_u += grad_u_sq.values()[c] / sens.eval(u0);
        logistic_term += u0 * (u0 - a) * gp;
    }
    let lw = lap_w.values();
    let laplacian_w_sq: f64 = lw.iter().map(|x| x * x).sum::<f64>() * area;
    let cross_term: f64 = lw.iter().zip(grad_w_sq.values()).map(|(l, q)| l * q).sum::<f64>() * area;

    let df = area * d_potential + 0.5 * (dirichlet_energy(&w1) - dirichlet_energy(&w0));
    let mut bal = EnergyBalance {
        dt,
        rate: df / dt,
        dissipation_u: dissipation_u * area,
        laplacian_w_sq,
        cross_term,
        logistic_term: p.mu * logistic_term * area,
        floored_cells,
        residual: 0.0,
    };
    bal.residual = (bal.rate - bal.rhs()).abs();
    Ok(bal)
}

/// 2‖∇w‖₄⁴ / (‖Δw‖₂²‖∇w‖₂²).
pub fn gn1_ratio(w: &ScalarField) -> Result<f64> {
    let sq = cell_grad_sq(w);
    let area = w.grid().cell_area();
    let l4_4: f64 = sq.values().iter().map(|x| x * x).sum::<f64>() * area;
    let l2_2 = dirichlet_energy(w);
    let lap = laplacian(w);
    let lap_2: f64 = lap.values().iter().map(|x| x * x).sum::<f64>() * area;
    let den = lap_2 * l2_2;
    if !(den > 0.0) || !(l4_4 > 0.0) {
        return Err(Error::Degenerate("gn1 ratio undefined for a constant field".into()));
    }
    Ok(2.0 * l4_4 / den)
}

/// ‖f‖₃³ / (‖f‖²_{W^{1,2}}‖f‖₁ + ‖f‖₁³).
pub fn gn2_ratio(f: &ScalarField) -> Result<f64> {
    let area = f.grid().cell_area();
    let l1 = norm_lp(f, 1);
    if !(l1 > 0.0) {
        return Err(Error::Degenerate("gn2 ratio undefined for the zero field".into()));
    }
    let l3_3: f64 = f.values().iter().map(|x| x.abs().powi(3)).sum::<f64>() * area;
    let w12_sq = norm_lp(f, 2).powi(2) + dirichlet_energy(f);
    Ok(l3_3 / (w12_sq * l1 + l1 * l1 * l1))
}

/// max over cells of the cell-averaged |∇v|/v, from face gradients over
/// the arithmetic face mean of v.
pub fn linf_grad_v_over_v(v: &ScalarField) -> Result<f64> {
    let a = chemotaxis_velocity(v)?;
    let g = *v.grid();
    let mut sq = vec![0.0; g.cell_count()];
    crate::ops::cell_grad_sq_into(a.x_faces(), a.y_faces(), &g, &mut sq);
    Ok(sq.iter().fold(0.0_f64, |m, &x| m.max(x)).sqrt())
}

/// (‖u − r/μ‖∞, ‖v‖∞, max |∇v|/v).
pub fn convergence_metrics(s: &State, p: &Parameters) -> Result<(f64, f64, f64)> {
    let a = p.capacity();
    let lu = s.u.values().iter().fold(0.0_f64, |m, &x| m.max((x - a).abs()));
    Ok((lu, norm_linf(&s.v), linf_grad_v_over_v(&s.v)?))
}

/// ‖u − ū‖∞ with ū the spatial mean.
pub fn mean_deviation(u: &ScalarField) -> f64 {
    let mean = integral(u) / u.grid().area();
    u.values().iter().fold(0.0_f64, |m, &x| m.max((x - mean).abs()))
}

/// h²·Σ u^p v^(−q), for p > 1 and 0 < q < min(μp, p − 1).
pub fn upvq_integral(s: &State, p_exp: f64, q_exp: f64, p: &Parameters) -> Result<f64> {
    if !(p_exp > 1.0) {
        return Err(Error::Input(format!("upvq needs p > 1, got {p_exp}")));
    }
    let q_max = (p.mu * p_exp).min(p_exp - 1.0);
    if !(q_exp > 0.0 && q_exp < q_max) {
        return Err(Error::Input(format!(
            "upvq needs 0 < q < min(mu*p, p-1) = {q_max}, got q = {q_exp}"
        )));
    }
    if !(min_value(&s.v) > 0.0) {
        return Err(Error::Domain("upvq needs v > 0".into()));
    }
    let sum: f64 = s
        .u
        .values()
        .iter()
        .zip(s.v.values())
        .map(|(&u, &v)| u.max(0.0).powf(p_exp) * v.powf(-q_exp))
        .sum();
    Ok(sum * s.grid().cell_area())
}

/// Builds the record for `s`, using `probe` (one solver step ahead of `s`)
/// for the forward differences.
pub fn compute_record(
    s: &State,
    probe: &State,
    p: &Parameters,
    dt_last: f64,
    upvq: Option<(f64, f64)>,
) -> Result<(DiagnosticsRecord, EnergyBalance)> {
    let g = *s.grid();
    let area = g.cell_area();
    let a = p.capacity();
    let u = &s.u;

    let mass_u = integral(u);
    let l2_sq: f64 = u.values().iter().map(|x| x * x).sum::<f64>() * area;
    let dt_probe = probe.t - s.t;
    let mass_rate = (integral(&probe.u) - mass_u) / dt_probe;
    let law = p.r * mass_u - p.mu * l2_sq;
    let scale = p.r * mass_u + p.mu * l2_sq;
    let mass_ode_residual = if scale > 0.0 {
        (mass_rate - law).abs() / scale
    } else {
        (mass_rate - law).abs()
    };

    let (linf_big_u, linf_v, lgv) = convergence_metrics(s, p)?;
    let l2_big_u = (u.values().iter().map(|x| (x - a) * (x - a)).sum::<f64>() * area).sqrt();

    let w = w_from_v(&s.v, s.v0_sup)?;
    let w_sq = cell_grad_sq(&w);
    let l2_grad_w = dirichlet_energy(&w).sqrt();
    let l4_grad_w = grad_norm_from_sq(&w_sq, 4);
    let linf_grad_w = w_sq.values().iter().fold(0.0_f64, |m, &x| m.max(x)).sqrt();

    let energy_f = potential_integral(u, p)? + 0.5 * l2_grad_w * l2_grad_w;
    let balance = energy_identity_residual(s, probe, p)?;

    let gn1 = match gn1_ratio(&w) {
        Ok(x) => x,
        Err(Error::Degenerate(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let gn2 = match gn2_ratio(&w_sq) {
        Ok(x) => x,
        Err(Error::Degenerate(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let upvq = match upvq {
        Some((pe, qe)) => Some(upvq_integral(s, pe, qe, p)?),
        None => None,
    };

    let rec = DiagnosticsRecord {
        t: s.t,
        mass_u,
        l2_u: l2_sq.sqrt(),
        linf_u: norm_linf(u),
        min_u: min_value(u),
        mass_ode_residual,
        linf_U: linf_big_u,
        l2_U: l2_big_u,
        linf_v,
        min_v: min_value(&s.v),
        l2_grad_w,
        l4_grad_w,
        linf_grad_w,
        linf_grad_v_over_v: lgv,
        energy_F: energy_f,
        energy_identity_residual: balance.residual,
        gn1_ratio: gn1,
        gn2_ratio: gn2,
        upvq,
        dt_last,
    };
    Ok((rec, balance))
}

/// Earliest record time from which `pred` holds for every later record.
pub fn transient_time(records: &[DiagnosticsRecord], pred: impl Fn(&DiagnosticsRecord) -> bool) -> Option<f64> {
    let mut start = None;
    for r in records.iter().rev() {
        if pred(r) {
            start = Some(r.t);
        } else {
            break;
        }
    }
    start
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdiSample {
    pub t: f64,
    pub y: f64,
    pub h: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdiReport {
    pub hypothesis_ok: bool,
    pub monotone_ok: bool,
    pub budget_ok: bool,
    /// Largest signed excess over either the monotonicity or the budget
    /// bound; negative when both hold with room to spare.
    pub worst_violation: f64,
    pub threshold: f64,
}

/// Checks y' + (χ − ηy)h + g ≤ 0 along sampled data: the smallness
/// hypothesis at the first sample, monotonicity of y, and the integrated
/// budget y(t) + ½∫h + ∫g < y(t₀).
pub fn odi_verify(series: &[OdiSample], chi: f64, eta: f64, tol: f64) -> Result<OdiReport> {
    if series.is_empty() {
        return Err(Error::Input("odi series is empty".into()));
    }
    if !(chi > 0.0 && eta > 0.0) {
        return Err(Error::Input(format!("odi needs chi, eta > 0, got {chi}, {eta}")));
    }
    for (k, w) in series.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(Error::Input(format!("odi times not increasing at sample {}", k + 1)));
        }
    }
    if let Some(s) = series.iter().find(|s| !(s.h >= 0.0 && s.g >= 0.0)) {
        return Err(Error::Input(format!("odi needs h, g >= 0 (t = {})", s.t)));
    }
    let y0 = series[0].y;
    let threshold = chi / (2.0 * eta);
    let mut monotone_ok = true;
    let mut budget_ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut int_h = 0.0;
    let mut int_g = 0.0;
    for w in series.windows(2) {
        let dt = w[1].t - w[0].t;
        int_h += 0.5 * dt * (w[0].h + w[1].h);
        int_g += 0.5 * dt * (w[0].g + w[1].g);
        let rise = w[1].y - w[0].y;
        let excess = w[1].y + 0.5 * int_h + int_g - y0;
        monotone_ok &= rise <= tol;
        budget_ok &= excess < tol;
        worst = worst.max(rise).max(excess);
    }
    Ok(OdiReport {
        hypothesis_ok: y0 < threshold,
        monotone_ok,
        budget_ok,
        worst_violation: if worst.is_finite() { worst } else { 0.0 },
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares fit of ln y = ln C − rate·t over samples with t in `window`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let picked: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= lo && t <= hi).collect();
    if picked.len() < 5 {
        return Err(Error::Input(format!(
            "decay fit needs >= 5 samples in [{lo}, {hi}], got {}",
            picked.len()
        )));
    }
    if let Some(&(t, y)) = picked.iter().find(|&&(_, y)| !(y > 0.0)) {
        return Err(Error::Domain(format!("decay fit needs y > 0, got {y} at t = {t}")));
    }
    let ts: Vec<f64> = picked.iter().map(|s| s.0).collect();
    let ls: Vec<f64> = picked.iter().map(|s| s.1.ln()).collect();
    let line = linear_fit(&ts, &ls)?;
    Ok(DecayFit {
        rate: -line.slope,
        prefactor: line.intercept.exp(),
        r_squared: line.r_squared,
        samples: picked.len(),
    })
}
