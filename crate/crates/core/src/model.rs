//! Model coefficients, initial data and the solution state.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};
use crate::io::snapshot::read_field_snapshot;

/// Model coefficients and numerical controls for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    /// Growth rate of the logistic source.
    pub r: f64,
    /// Logistic damping.
    pub mu: f64,
    /// Sensitivity exponent.
    pub beta: f64,
    /// Sensitivity amplitude.
    pub chi: f64,
    /// Fraction of the stable time step actually taken, in (0, 1].
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Relative tolerance of the G quadrature.
    pub quad_tol: f64,
}

impl Default for Parameters {
    fn default() -> Self {
        Self {
            r: 1.0,
            mu: 10.0,
            beta: 0.0,
            chi: 1.0,
            cfl_safety: 0.8,
            t_end: 1.0,
            quad_tol: 1e-8,
        }
    }
}

impl Parameters {
    /// Checks the invariants every run needs, including `beta < 1`.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Input(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("r", self.r)?;
        positive("mu", self.mu)?;
        positive("chi", self.chi)?;
        positive("quad_tol", self.quad_tol)?;
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Input(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::Input(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.beta.is_finite() && self.beta < 1.0) {
            return Err(Error::Input(format!("beta must be < 1, got {}", self.beta)));
        }
        Ok(())
    }

    /// Stricter regime `0 <= beta < 1` required by the energy and decay diagnostics.
    pub fn require_decay_regime(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Domain(format!(
                "diagnostic requires 0 <= beta < 1, got beta = {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Carrying capacity r/μ.
    #[inline]
    pub fn capacity(&self) -> f64 {
        self.r / self.mu
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }
}

/// Spatially homogeneous attractor `(r/μ, 0)` of the density and the signal.
pub fn steady_state(p: &Parameters) -> (f64, f64) {
    (p.r / p.mu, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum IcMode {
    Constant,
    /// Single cosine mode `cos(πx/lx)·cos(πy/ly)` on both fields.
    Bump,
    /// Seeded sum of Neumann cosine modes up to `modes_k` in each direction.
    RandomFourier,
    /// Fields read from snapshot files.
    File { u_path: PathBuf, v_path: PathBuf },
}

impl IcMode {
    pub fn name(&self) -> &'static str {
        match self {
            IcMode::Constant => "constant",
            IcMode::Bump => "bump",
            IcMode::RandomFourier => "random_fourier",
            IcMode::File { .. } => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub mode: IcMode,
    pub u_base: f64,
    pub v_base: f64,
    /// Relative perturbation, in [0, 1).
    pub amplitude: f64,
    pub modes_k: u32,
    pub seed: u64,
}

impl InitialCondition {
    pub fn constant(u_base: f64, v_base: f64) -> Self {
        Self {
            mode: IcMode::Constant,
            u_base,
            v_base,
            amplitude: 0.0,
            modes_k: 4,
            seed: 0,
        }
    }

    pub fn random_fourier(u_base: f64, v_base: f64, amplitude: f64, modes_k: u32, seed: u64) -> Self {
        Self {
            mode: IcMode::RandomFourier,
            u_base,
            v_base,
            amplitude,
            modes_k,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.mode, IcMode::File { .. }) {
            return Ok(());
        }
        if !(self.u_base.is_finite() && self.u_base > 0.0) {
            return Err(Error::Input(format!("u_base must be > 0, got {}", self.u_base)));
        }
        if !(self.v_base.is_finite() && self.v_base > 0.0) {
            return Err(Error::Input(format!("v_base must be > 0, got {}", self.v_base)));
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(Error::Input(format!(
                "amplitude must lie in [0, 1), got {} (v0 = v_base(1 - amplitude) must stay > 0)",
                self.amplitude
            )));
        }
        if self.mode == IcMode::RandomFourier && self.modes_k == 0 {
            return Err(Error::Input("modes_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Density, signal and (optionally) an independently evolved w at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub w_evolved: Option<ScalarField>,
    /// ‖v₀‖∞, the normalisation of w.
    pub v0_sup: f64,
}

impl State {
    pub fn grid(&self) -> &Grid2D {
        self.u.grid()
    }

    /// Checks `u >= 0`, `0 < v <= v0_sup` and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.u.grid() != self.v.grid() {
            return Err(Error::Input("u and v live on different grids".into()));
        }
        if !(self.u.is_finite() && self.v.is_finite()) {
            return Err(Error::Divergence {
                t: self.t,
                detail: "non-finite field value".into(),
            });
        }
        if let Some(m) = self.u.values().iter().copied().find(|&x| x < 0.0) {
            return Err(Error::Positivity {
                t: self.t,
                detail: format!("u = {m} < 0"),
            });
        }
        if let Some(m) = self.v.values().iter().copied().find(|&x| x <= 0.0) {
            return Err(Error::Positivity {
                t: self.t,
                detail: format!("v = {m} <= 0"),
            });
        }
        Ok(())
    }
}

/// Builds the initial state on `g`.
pub fn make_initial(ic: &InitialCondition, g: &Grid2D, _p: &Parameters) -> Result<State> {
    ic.validate()?;
    let (u, v) = match &ic.mode {
        IcMode::Constant => (
            ScalarField::constant(*g, ic.u_base),
            ScalarField::constant(*g, ic.v_base),
        ),
        IcMode::Bump => {
            let (lx, ly) = (g.lx(), g.ly());
            let a = ic.amplitude;
            let shape = move |x: f64, y: f64| {
                (std::f64::consts::PI * x / lx).cos() * (std::f64::consts::PI * y / ly).cos()
            };
            (
                ScalarField::from_fn(*g, |x, y| ic.u_base * (1.0 + a * shape(x, y))),
                ScalarField::from_fn(*g, |x, y| ic.v_base * (1.0 + a * shape(x, y))),
            )
        }
        IcMode::RandomFourier => {
            let mut rng = ChaCha8Rng::seed_from_u64(ic.seed);
            let pu = fourier_perturbation(g, ic.modes_k, &mut rng)?;
            let pv = fourier_perturbation(g, ic.modes_k, &mut rng)?;
            let a = ic.amplitude;
            (
                ScalarField::from_raw(*g, pu.iter().map(|p| ic.u_base * (1.0 + a * p)).collect()),
                ScalarField::from_raw(*g, pv.iter().map(|p| ic.v_base * (1.0 + a * p)).collect()),
            )
        }
        IcMode::File { u_path, v_path } => {
            let (u, _) = read_field_snapshot(u_path)?;
            let (v, _) = read_field_snapshot(v_path)?;
            if u.grid() != g || v.grid() != g {
                return Err(Error::Input(
                    "initial-condition files do not match the configured grid".into(),
                ));
            }
            (u, v)
        }
    };
    if u.values().iter().all(|&x| x == 0.0) {
        return Err(Error::Input("u0 must not vanish identically".into()));
    }
    let v0_sup = v.values().iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let s = State {
        t: 0.0,
        u,
        v,
        w_evolved: None,
        v0_sup,
    };
    s.validate()?;
    Ok(s)
}

/// Σ c_km cos(kπx/lx) cos(mπy/ly) over 0 <= k, m <= modes_k, (k, m) != (0, 0),
/// with c_km uniform in [-1, 1], divided by Σ|c_km| so that |P| <= 1.
fn fourier_perturbation(g: &Grid2D, modes_k: u32, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let kmax = modes_k as usize;
    let mut coeffs = vec![0.0; (kmax + 1) * (kmax + 1)];
    for (n, c) in coeffs.iter_mut().enumerate() {
        if n != 0 {
            *c = rng.gen_range(-1.0..=1.0);
        }
    }
    let cx: Vec<Vec<f64>> = (0..=kmax)
        .map(|k| {
            (0..g.nx())
                .map(|i| (k as f64 * std::f64::consts::PI * g.center(i, 0).0 / g.lx()).cos())
                .collect()
        })
        .collect();
    let cy: Vec<Vec<f64>> = (0..=kmax)
        .map(|m| {
            (0..g.ny())
                .map(|j| (m as f64 * std::f64::consts::PI * g.center(0, j).1 / g.ly()).cos())
                .collect()
        })
        .collect();
    let mut out = vec![0.0; g.cell_count()];
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let mut s = 0.0;
            for m in 0..=kmax {
                for k in 0..=kmax {
                    let c = coeffs[m * (kmax + 1) + k];
                    if c != 0.0 {
                        s += c * cx[k][i] * cy[m][j];
                    }
                }
            }
            out[g.idx(i, j)] = s;
        }
    }
    // Σ|c_km| bounds |P| everywhere and does not depend on the grid, so
    // refined runs start from the same continuous data.
    let sup: f64 = coeffs.iter().map(|c| c.abs()).sum();
    if sup == 0.0 {
        return Err(Error::Input("random perturbation vanished".into()));
    }
    for x in &mut out {
        *x /= sup;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2D {
        Grid2D::unit_square(16).unwrap()
    }

    #[test]
    fn steady_state_is_carrying_capacity() {
        let p = |r, mu| Parameters {
            r,
            mu,
            ..Parameters::default()
        };
        assert_eq!(steady_state(&p(1.0, 2.0)), (0.5, 0.0));
        assert_eq!(steady_state(&p(7.0, 7.0)), (1.0, 0.0));
        assert!((steady_state(&p(3.0, 10.0)).0 - 0.3).abs() < 1e-16);
    }

    #[test]
    fn parameter_invariants() {
        let ok = Parameters::default();
        assert!(ok.validate().is_ok());
        for bad in [
            Parameters { mu: -1.0, ..ok },
            Parameters { r: 0.0, ..ok },
            Parameters { chi: 0.0, ..ok },
            Parameters { cfl_safety: 2.0, ..ok },
            Parameters { cfl_safety: 0.0, ..ok },
            Parameters { quad_tol: 0.0, ..ok },
            Parameters { beta: 1.0, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(Parameters { beta: -0.5, ..ok }.validate().is_ok());
        assert!(Parameters { beta: -0.5, ..ok }.require_decay_regime().is_err());
    }

    #[test]
    fn constant_initial_state() {
        let s = make_initial(&InitialCondition::constant(0.1, 1.0), &grid(), &Parameters::default())
            .unwrap();
        assert!(s.u.values().iter().all(|&x| x == 0.1));
        assert!(s.v.values().iter().all(|&x| x == 1.0));
        assert_eq!(s.v0_sup, 1.0);
        assert_eq!(s.t, 0.0);
    }

    #[test]
    fn random_fourier_is_deterministic_and_normalised() {
        let ic = InitialCondition::random_fourier(0.2, 1.0, 0.5, 4, 7);
        let a = make_initial(&ic, &grid(), &Parameters::default()).unwrap();
        let b = make_initial(&ic, &grid(), &Parameters::default()).unwrap();
        assert_eq!(a, b);
        let dev = a
            .u
            .values()
            .iter()
            .fold(0.0_f64, |m, &x| m.max((x / 0.2 - 1.0).abs()));
        assert!(dev > 0.05 && dev <= 0.5, "{dev}");
        assert_eq!(a.v0_sup, a.v.values().iter().cloned().fold(0.0, f64::max));
        let other = make_initial(
            &InitialCondition { seed: 8, ..ic },
            &grid(),
            &Parameters::default(),
        )
        .unwrap();
        assert_ne!(a.u, other.u);
    }

    #[test]
    fn zero_amplitude_matches_constant_mode() {
        let ic = InitialCondition::random_fourier(0.2, 1.5, 0.0, 4, 3);
        let a = make_initial(&ic, &grid(), &Parameters::default()).unwrap();
        let b = make_initial(&InitialCondition::constant(0.2, 1.5), &grid(), &Parameters::default())
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_amplitude_that_would_zero_v() {
        let ic = InitialCondition::random_fourier(0.2, 1.0, 1.0, 4, 3);
        assert!(make_initial(&ic, &grid(), &Parameters::default()).is_err());
        let ic = InitialCondition::constant(0.0, 1.0);
        assert!(make_initial(&ic, &grid(), &Parameters::default()).is_err());
    }

    #[test]
    fn bump_samples_the_cosine_product() {
        let ic = InitialCondition {
            mode: IcMode::Bump,
            ..InitialCondition::random_fourier(1.0, 2.0, 0.3, 1, 0)
        };
        let s = make_initial(&ic, &grid(), &Parameters::default()).unwrap();
        let umax = s.u.values().iter().cloned().fold(0.0, f64::max);
        // The largest sample sits half a cell in from the corner.
        let peak = (std::f64::consts::PI / 32.0).cos().powi(2);
        assert!((umax - (1.0 + 0.3 * peak)).abs() < 1e-12);
        assert!((s.v0_sup - 2.0 * (1.0 + 0.3 * peak)).abs() < 1e-12);
    }
}
