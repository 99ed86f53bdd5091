//! Adaptive Simpson quadrature.

/// Recursion depth cap for [`adaptive_simpson`].
pub const MAX_DEPTH: u32 = 30;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// The tolerance is taken relative to a 16-panel composite Simpson estimate
/// of the whole integral, then split between halves on the way down. A
/// reversed interval (`b < a`) returns the negated integral over `[b, a]`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, rel_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    // Coarse pass to fix the magnitude the relative tolerance refers to.
    const PANELS: usize = 16;
    let width = (hi - lo) / PANELS as f64;
    let mut fx = [0.0; 2 * PANELS + 1];
    for (k, slot) in fx.iter_mut().enumerate() {
        *slot = f(lo + 0.5 * width * k as f64);
    }
    let mut scale = 0.0;
    for p in 0..PANELS {
        scale += simpson(width, fx[2 * p], fx[2 * p + 1], fx[2 * p + 2]);
    }
    let eps = (rel_tol * scale.abs()).max(f64::MIN_POSITIVE);
    let eps_panel = eps / PANELS as f64;

    let mut total = 0.0;
    for p in 0..PANELS {
        let a0 = lo + width * p as f64;
        let b0 = if p + 1 == PANELS { hi } else { a0 + width };
        let whole = simpson(b0 - a0, fx[2 * p], fx[2 * p + 1], fx[2 * p + 2]);
        total += recurse(
            &f,
            a0,
            b0,
            fx[2 * p],
            fx[2 * p + 1],
            fx[2 * p + 2],
            whole,
            eps_panel,
            MAX_DEPTH,
        );
    }
    sign * total
}

#[inline]
fn simpson(width: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    width / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(m - a, fa, flm, fm);
    let right = simpson(b - m, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = adaptive_simpson(|x| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 8.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_interval_flips_sign() {
        let v = adaptive_simpson(f64::exp, 1.0, 0.0, 1e-10);
        assert!((v + (1.0_f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn handles_peaked_integrand() {
        let v = adaptive_simpson(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10);
        let exact = 2.0 * (1.0 / 1e-2) * (1.0_f64 / 1e-2).atan();
        assert!(((v - exact) / exact).abs() < 1e-8);
    }

    #[test]
    fn zero_integrand_terminates() {
        assert_eq!(adaptive_simpson(|_| 0.0, 0.0, 5.0, 1e-8), 0.0);
    }
}
