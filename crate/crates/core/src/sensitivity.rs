//! The density sensitivity S(u) = χ·u·(u+1)^(β−1) and the potential
//! G(s) = ∫_{r/μ}^{s} ∫_{r/μ}^{ρ} dσ/S(σ) dρ built from it.
//!
//! Both G and G' are computed in the log variable σ = e^τ, where the
//! integrand (e^τ + 1)^(1−β)/χ is smooth and bounded on any finite
//! interval, so the 1/σ singularity of 1/S at the origin never enters the
//! quadrature. The double integral collapses to the single integral
//! G(s) = ∫_{r/μ}^{s} (s − σ)/S(σ) dσ.

use crate::error::{Error, Result};
use crate::model::Parameters;
use crate::quadrature::adaptive_simpson;

/// S(u) = χ·u·(u+1)^(β−1).
pub fn sensitivity_value(u: f64, p: &Parameters) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("sensitivity needs u >= 0, got {u}")));
    }
    Ok(Sensitivity::new(p).eval(u))
}

/// Unchecked evaluator for the hot loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sensitivity {
    chi: f64,
    exponent: f64,
    linear_rational: bool,
}

impl Sensitivity {
    pub(crate) fn new(p: &Parameters) -> Self {
        Self {
            chi: p.chi,
            exponent: p.beta - 1.0,
            linear_rational: p.beta == 0.0,
        }
    }

    #[inline]
    pub(crate) fn eval(&self, u: f64) -> f64 {
        if self.linear_rational {
            self.chi * u / (u + 1.0)
        } else {
            self.chi * u * (u + 1.0).powf(self.exponent)
        }
    }

    /// dσ/S(σ) expressed per unit τ = ln σ: (e^τ + 1)^(1−β)/χ.
    #[inline]
    fn log_weight(&self, sigma: f64) -> f64 {
        if self.linear_rational {
            (sigma + 1.0) / self.chi
        } else {
            (sigma + 1.0).powf(-self.exponent) / self.chi
        }
    }
}

fn check_positive(s: f64, what: &str) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} needs s > 0 (1/S is singular at 0), got {s}"
        )))
    }
}

/// G'(s) = ∫_{r/μ}^{s} dσ/S(σ).
pub fn g_prime(s: f64, p: &Parameters) -> Result<f64> {
    check_positive(s, "g_prime")?;
    let a = p.capacity();
    if s == a {
        return Ok(0.0);
    }
    let sens = Sensitivity::new(p);
    Ok(adaptive_simpson(
        |tau| sens.log_weight(tau.exp()),
        a.ln(),
        s.ln(),
        p.quad_tol,
    ))
}

/// G(s) = ∫_{r/μ}^{s} ∫_{r/μ}^{ρ} dσ/S(σ) dρ.
pub fn big_g(s: f64, p: &Parameters) -> Result<f64> {
    check_positive(s, "big_g")?;
    let a = p.capacity();
    if s == a {
        return Ok(0.0);
    }
    let sens = Sensitivity::new(p);
    let g = adaptive_simpson(
        |tau| {
            let sigma = tau.exp();
            (s - sigma) * sens.log_weight(sigma)
        },
        a.ln(),
        s.ln(),
        p.quad_tol,
    );
    // The integrand keeps one sign on the interval, so G >= 0 up to rounding.
    Ok(g.max(0.0))
}

/// G(s1) − G(s0), given G'(s0).
///
/// Uses G(s1) − G(s0) = G'(s0)(s1 − s0) + ∫_{s0}^{s1} (s1 − σ)/S(σ) dσ, which
/// stays accurate when `s1` is within one time step of `s0`.
pub(crate) fn big_g_increment_with(s0: f64, s1: f64, g_prime_s0: f64, p: &Parameters) -> Result<f64> {
    check_positive(s0, "big_g increment")?;
    check_positive(s1, "big_g increment")?;
    if s0 == s1 {
        return Ok(0.0);
    }
    let sens = Sensitivity::new(p);
    let tail = adaptive_simpson(|sigma| (s1 - sigma) / sens.eval(sigma), s0, s1, p.quad_tol);
    Ok(g_prime_s0 * (s1 - s0) + tail)
}

/// G(s1) − G(s0).
pub fn big_g_increment(s0: f64, s1: f64, p: &Parameters) -> Result<f64> {
    big_g_increment_with(s0, s1, g_prime(s0, p)?, p)
}
