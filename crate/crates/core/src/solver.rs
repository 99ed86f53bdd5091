//! Explicit Euler integration of the density/signal system with a CFL-type
//! step bound, plus the record loop that drives the diagnostics.

use crate::diagnostics::{compute_record, w_from_v, DiagnosticsRecord, EnergyBalance};
use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};
use crate::model::{make_initial, InitialCondition, Parameters, State};
use crate::ops::gradient_into;
use crate::sensitivity::Sensitivity;

/// Which term of [`stable_dt`] set the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CflBinding {
    Diffusion,
    Advection,
    Reaction,
    Absorption,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt_used: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub cfl_binding: CflBinding,
}

/// Largest admissible explicit step:
/// `cfl · min(h²/8, h/(4χ·max|a|), 1/(r + 2μ‖u‖∞), 1/(‖u‖∞ + 4/h²))`.
pub fn stable_dt(s: &State, p: &Parameters) -> Result<f64> {
    Ok(stable_dt_detail(s, p)?.0)
}

pub fn stable_dt_detail(s: &State, p: &Parameters) -> Result<(f64, CflBinding)> {
    let mut st = Stepper::new(*s.grid(), p);
    let bounds = st.prepare(s)?;
    Ok(st.dt_bound(&bounds))
}

/// One forward Euler step of size `dt`.
pub fn step(s: &State, p: &Parameters, dt: f64) -> Result<(State, StepReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("time step must be positive, got {dt}")));
    }
    let mut st = Stepper::new(*s.grid(), p);
    let bounds = st.prepare(s)?;
    let (_, binding) = st.dt_bound(&bounds);
    let mut next = s.clone();
    st.advance(&mut next, dt)?;
    next.t = s.t + dt;
    let max_u = next.u.values().iter().fold(0.0_f64, |m, &x| m.max(x));
    let min_v = next.v.values().iter().fold(f64::INFINITY, |m, &x| m.min(x));
    Ok((
        next,
        StepReport {
            dt_used: dt,
            max_u,
            min_v,
            cfl_binding: binding,
        },
    ))
}

/// Controls for [`run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub record_every: f64,
    /// Co-evolve w alongside v for cross-validation.
    pub evolve_w: bool,
    /// Keep copies of u and v at every record time.
    pub snapshots: bool,
    /// Exponents (p, q) of the tracked ∫uᵖv⁻q functional.
    pub upvq: Option<(f64, f64)>,
}

impl RunOptions {
    pub fn every(record_every: f64) -> Self {
        Self {
            record_every,
            evolve_w: false,
            snapshots: false,
            upvq: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub w_evolved: Option<ScalarField>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    /// Energy-balance terms, one per record.
    pub balances: Vec<EnergyBalance>,
    pub final_state: State,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
}

/// Integrates from t = 0 to `p.t_end`, recording every `record_every`.
pub fn run(ic: &InitialCondition, g: &Grid2D, p: &Parameters, opts: &RunOptions) -> Result<RunOutput> {
    p.validate()?;
    let mut s = make_initial(ic, g, p)?;
    if opts.evolve_w {
        s.w_evolved = Some(w_from_v(&s.v, s.v0_sup)?);
    }
    run_from(s, p, opts)
}

/// Same as [`run`] starting from an explicit state at `s.t`.
pub fn run_from(mut s: State, p: &Parameters, opts: &RunOptions) -> Result<RunOutput> {
    p.validate()?;
    s.validate()?;
    if !(opts.record_every > 0.0 && opts.record_every.is_finite()) {
        return Err(Error::Input(format!(
            "record_every must be > 0, got {}",
            opts.record_every
        )));
    }
    let t0 = s.t;
    let t_end = p.t_end.max(t0);
    let mut st = Stepper::new(*s.grid(), p);
    let mut out = RunOutput {
        records: Vec::new(),
        balances: Vec::new(),
        final_state: s.clone(),
        snapshots: Vec::new(),
        steps: 0,
    };

    let emit = |st: &mut Stepper, s: &State, dt_last: f64, out: &mut RunOutput| -> Result<()> {
        let mut probe = s.clone();
        let bounds = st.prepare(&probe)?;
        let (dt, _) = st.dt_bound(&bounds);
        st.advance(&mut probe, dt).map_err(|e| at_time(e, s.t))?;
        probe.t = s.t + dt;
        let (rec, bal) = compute_record(s, &probe, p, dt_last, opts.upvq)?;
        log::info!("t = {:.4} max u = {:.4e} min v = {:.4e} F = {:.4e}", rec.t, rec.linf_u, rec.min_v, rec.energy_F);
        out.records.push(rec);
        out.balances.push(bal);
        if opts.snapshots {
            out.snapshots.push(Snapshot {
                t: s.t,
                u: s.u.clone(),
                v: s.v.clone(),
                w_evolved: s.w_evolved.clone(),
            });
        }
        Ok(())
    };

    emit(&mut st, &s, 0.0, &mut out)?;
    let mut k: u64 = 1;
    let record_time = |k: u64| (t0 + k as f64 * opts.record_every).min(t_end);
    let mut target = record_time(k);
    while s.t < t_end {
        let bounds = st.prepare(&s).map_err(|e| at_time(e, s.t))?;
        let (dt_stable, _) = st.dt_bound(&bounds);
        let remaining = target - s.t;
        let hit = dt_stable >= remaining * (1.0 - 1e-12);
        let dt = if hit { remaining } else { dt_stable };
        st.advance(&mut s, dt).map_err(|e| at_time(e, s.t))?;
        s.t = if hit { target } else { s.t + dt };
        out.steps += 1;
        if hit {
            emit(&mut st, &s, dt, &mut out)?;
            k += 1;
            target = record_time(k);
        }
    }
    out.final_state = s;
    Ok(out)
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::Positivity { t: ft, detail } if ft.is_nan() => Error::Positivity { t, detail },
        Error::Divergence { t: ft, detail } if ft.is_nan() => Error::Divergence { t, detail },
        other => other,
    }
}

/// Integrates `s` to `t_final` with a fixed number of equal steps.
/// Fails if a step exceeds the stable bound of the state it starts from.
pub fn integrate_fixed_steps(mut s: State, p: &Parameters, t_final: f64, n_steps: usize) -> Result<State> {
    if n_steps == 0 {
        return Err(Error::Input("need at least one step".into()));
    }
    let t0 = s.t;
    let dt = (t_final - t0) / n_steps as f64;
    if !(dt > 0.0) {
        return Err(Error::Input(format!("t_final {t_final} is not after t = {t0}")));
    }
    let mut st = Stepper::new(*s.grid(), p);
    for n in 0..n_steps {
        let bounds = st.prepare(&s)?;
        let (dt_stable, _) = st.dt_bound(&bounds);
        if dt > dt_stable * (1.0 + 1e-9) {
            return Err(Error::Input(format!(
                "fixed step {dt} exceeds stable_dt = {dt_stable} at t = {}",
                s.t
            )));
        }
        st.advance(&mut s, dt).map_err(|e| at_time(e, s.t))?;
        s.t = t0 + (n + 1) as f64 * dt;
    }
    s.t = t_final;
    Ok(s)
}

struct Bounds {
    max_a: f64,
    max_u: f64,
}

/// Largest element, with independent lanes so the loop vectorises.
fn lane_max(x: &[f64], init: f64) -> f64 {
    let mut lanes = [init; 8];
    let chunks = x.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            lanes[k] = if c[k] > lanes[k] { c[k] } else { lanes[k] };
        }
    }
    let mut m = init;
    for &v in lanes.iter().chain(tail) {
        m = if v > m { v } else { m };
    }
    m
}

fn lane_max_abs(x: &[f64]) -> f64 {
    let mut lanes = [0.0_f64; 8];
    let chunks = x.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            let a = c[k].abs();
            lanes[k] = if a > lanes[k] { a } else { lanes[k] };
        }
    }
    let mut m = 0.0_f64;
    for &v in lanes.iter().chain(tail.iter().map(|t| t.abs()).collect::<Vec<_>>().iter()) {
        m = if v > m { v } else { m };
    }
    m
}

/// Scratch buffers for one grid; reused across steps.
///
/// [`Stepper::prepare`] builds every face quantity of the current state
/// (the total u flux ∇u − S(u_up)·a, the v gradient and the velocities);
/// [`Stepper::advance`] then only needs `dt`.
struct Stepper {
    g: Grid2D,
    p: Parameters,
    sens: Sensitivity,
    inv_h: f64,
    s_cell: Vec<f64>,
    /// Total u flux on x / y faces.
    fu_x: Vec<f64>,
    fu_y: Vec<f64>,
    gv_x: Vec<f64>,
    gv_y: Vec<f64>,
    ax: Vec<f64>,
    ay: Vec<f64>,
    gw_x: Vec<f64>,
    gw_y: Vec<f64>,
}

impl Stepper {
    fn new(g: Grid2D, p: &Parameters) -> Self {
        let (nxf, nyf, nc) = (g.x_face_count(), g.y_face_count(), g.cell_count());
        Self {
            g,
            p: *p,
            sens: Sensitivity::new(p),
            inv_h: 1.0 / g.h(),
            s_cell: vec![0.0; nc],
            fu_x: vec![0.0; nxf],
            fu_y: vec![0.0; nyf],
            gv_x: vec![0.0; nxf],
            gv_y: vec![0.0; nyf],
            ax: vec![0.0; nxf],
            ay: vec![0.0; nyf],
            gw_x: Vec::new(),
            gw_y: Vec::new(),
        }
    }

    /// Face quantities for the current state. Boundary faces stay 0.
    fn prepare(&mut self, s: &State) -> Result<Bounds> {
        let g = self.g;
        let (nx, ny) = (g.nx(), g.ny());
        let inv_h = self.inv_h;
        let u = s.u.values();
        let v = s.v.values();
        for (sc, &x) in self.s_cell.iter_mut().zip(u) {
            *sc = self.sens.eval(x);
        }
        let mut bad_face = false;

        let m = nx - 1;
        for j in 0..ny {
            let ur = &u[j * nx..][..nx];
            let vr = &v[j * nx..][..nx];
            let sr = &self.s_cell[j * nx..][..nx];
            let (ul, uh) = (&ur[..m], &ur[1..][..m]);
            let (vl, vh) = (&vr[..m], &vr[1..][..m]);
            let (sl, sh) = (&sr[..m], &sr[1..][..m]);
            let first = j * (nx + 1) + 1;
            let fu = &mut self.fu_x[first..][..m];
            let gv = &mut self.gv_x[first..][..m];
            let ax = &mut self.ax[first..][..m];
            for i in 0..m {
                let dv = (vh[i] - vl[i]) * inv_h;
                let vf = 0.5 * (vl[i] + vh[i]);
                bad_face |= !(vf > 0.0);
                let a = dv / vf;
                let s_up = if a > 0.0 { sl[i] } else { sh[i] };
                gv[i] = dv;
                ax[i] = a;
                fu[i] = (uh[i] - ul[i]) * inv_h - s_up * a;
            }
        }
        for j in 1..ny {
            let (lo, hi) = ((j - 1) * nx, j * nx);
            let (ul, uh) = (&u[lo..][..nx], &u[hi..][..nx]);
            let (vl, vh) = (&v[lo..][..nx], &v[hi..][..nx]);
            let (sl, sh) = (&self.s_cell[lo..][..nx], &self.s_cell[hi..][..nx]);
            let fu = &mut self.fu_y[hi..][..nx];
            let gv = &mut self.gv_y[hi..][..nx];
            let ay = &mut self.ay[hi..][..nx];
            for i in 0..nx {
                let dv = (vh[i] - vl[i]) * inv_h;
                let vf = 0.5 * (vl[i] + vh[i]);
                bad_face |= !(vf > 0.0);
                let a = dv / vf;
                let s_up = if a > 0.0 { sl[i] } else { sh[i] };
                gv[i] = dv;
                ay[i] = a;
                fu[i] = (uh[i] - ul[i]) * inv_h - s_up * a;
            }
        }
        if bad_face {
            let min_face = (0..g.x_face_count())
                .filter_map(|k| {
                    let (i, j) = (k % (nx + 1), k / (nx + 1));
                    (i > 0 && i < nx).then(|| 0.5 * (v[j * nx + i - 1] + v[j * nx + i]))
                })
                .chain((nx..nx * ny).map(|k| 0.5 * (v[k - nx] + v[k])))
                .fold(f64::INFINITY, f64::min);
            return Err(Error::Positivity {
                t: s.t,
                detail: format!("face value of v is {min_face} <= 0"),
            });
        }
        let max_a = lane_max_abs(&self.ax).max(lane_max_abs(&self.ay));
        let max_u = lane_max(u, 0.0);
        if !(max_a.is_finite() && max_u.is_finite()) {
            return Err(Error::Divergence {
                t: s.t,
                detail: "non-finite velocity or density".into(),
            });
        }
        Ok(Bounds { max_a, max_u })
    }

    fn dt_bound(&self, b: &Bounds) -> (f64, CflBinding) {
        let h = self.g.h();
        let p = &self.p;
        let candidates = [
            (h * h / 8.0, CflBinding::Diffusion),
            (
                if b.max_a > 0.0 {
                    h / (4.0 * p.chi * b.max_a)
                } else {
                    f64::INFINITY
                },
                CflBinding::Advection,
            ),
            (1.0 / (p.r + 2.0 * p.mu * b.max_u), CflBinding::Reaction),
            (1.0 / (b.max_u + 4.0 / (h * h)), CflBinding::Absorption),
        ];
        let (dt, which) = candidates
            .iter()
            .copied()
            .fold((f64::INFINITY, CflBinding::Diffusion), |acc, c| {
                if c.0 < acc.0 {
                    c
                } else {
                    acc
                }
            });
        (p.cfl_safety * dt, which)
    }

    /// Advances `s` in place by `dt` (time is left to the caller) using the
    /// face quantities from the preceding [`Stepper::prepare`] on the same state.
    fn advance(&mut self, s: &mut State, dt: f64) -> Result<()> {
        let g = self.g;
        let (nx, ny) = (g.nx(), g.ny());
        let (r, mu, inv_h) = (self.p.r, self.p.mu, self.inv_h);

        let mut bad_w = false;
        if let Some(w) = s.w_evolved.as_mut() {
            self.gw_x.resize(g.x_face_count(), 0.0);
            self.gw_y.resize(g.y_face_count(), 0.0);
            gradient_into(w.values(), &g, &mut self.gw_x, &mut self.gw_y);
            let u = s.u.values();
            let wv = w.values_mut();
            for j in 0..ny {
                let xr = &self.gw_x[j * (nx + 1)..][..nx + 1];
                let (xl, xh) = (&xr[..nx], &xr[1..][..nx]);
                let yb = &self.gw_y[j * nx..][..nx];
                let yt = &self.gw_y[(j + 1) * nx..][..nx];
                let ur = &u[j * nx..][..nx];
                let wr = &mut wv[j * nx..][..nx];
                for i in 0..nx {
                    let lap = ((xh[i] - xl[i]) + (yt[i] - yb[i])) * inv_h;
                    let sq = 0.5 * (xl[i] * xl[i] + xh[i] * xh[i]) + 0.5 * (yb[i] * yb[i] + yt[i] * yt[i]);
                    let wn = wr[i] + dt * (lap - sq + ur[i]);
                    bad_w |= !wn.is_finite();
                    wr[i] = wn;
                }
            }
        }

        let mut bad_u = false;
        let mut bad_v = false;
        {
            let u = s.u.values_mut();
            let v = s.v.values_mut();
            for j in 0..ny {
                let fx = &self.fu_x[j * (nx + 1)..][..nx + 1];
                let (fxl, fxh) = (&fx[..nx], &fx[1..][..nx]);
                let fyb = &self.fu_y[j * nx..][..nx];
                let fyt = &self.fu_y[(j + 1) * nx..][..nx];
                let gx = &self.gv_x[j * (nx + 1)..][..nx + 1];
                let (gxl, gxh) = (&gx[..nx], &gx[1..][..nx]);
                let gyb = &self.gv_y[j * nx..][..nx];
                let gyt = &self.gv_y[(j + 1) * nx..][..nx];
                let ur = &mut u[j * nx..][..nx];
                let vr = &mut v[j * nx..][..nx];
                for i in 0..nx {
                    let uo = ur[i];
                    let vo = vr[i];
                    let div_u = ((fxh[i] - fxl[i]) + (fyt[i] - fyb[i])) * inv_h;
                    let lap_v = ((gxh[i] - gxl[i]) + (gyt[i] - gyb[i])) * inv_h;
                    let un = uo + dt * (div_u + uo * (r - mu * uo));
                    let vn = vo + dt * (lap_v - uo * vo);
                    bad_u |= !(un >= 0.0 && un < f64::INFINITY);
                    bad_v |= !(vn > 0.0 && vn < f64::INFINITY);
                    ur[i] = un;
                    vr[i] = vn;
                }
            }
        }
        if bad_u || bad_v || bad_w {
            return Err(step_failure(s, dt));
        }
        Ok(())
    }
}

fn step_failure(s: &State, dt: f64) -> Error {
    let finite = s.u.is_finite() && s.v.is_finite() && s.w_evolved.as_ref().map_or(true, |w| w.is_finite());
    if !finite {
        return Error::Divergence {
            t: f64::NAN,
            detail: "non-finite value after step".into(),
        };
    }
    let min_u = s.u.values().iter().fold(f64::INFINITY, |m, &x| m.min(x));
    if min_u < 0.0 {
        return Error::Positivity {
            t: f64::NAN,
            detail: format!("u = {min_u} < 0 after step of {dt}"),
        };
    }
    let min_v = s.v.values().iter().fold(f64::INFINITY, |m, &x| m.min(x));
    Error::Positivity {
        t: f64::NAN,
        detail: format!("v = {min_v} <= 0 after step of {dt}"),
    }
}
