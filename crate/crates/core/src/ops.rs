//! Finite-volume operators with homogeneous Neumann boundaries, and the
//! midpoint-rule integrals and norms used by the diagnostics.
//!
//! Boundary faces carry zero gradient and zero flux, which is what a ghost
//! cell mirroring its neighbour produces. The Laplacian is literally
//! `divergence(gradient_faces(f))`, so the two agree bit for bit.

use crate::error::{Error, Result};
use crate::field::{FaceField, Grid2D, ScalarField};
use crate::model::Parameters;
use crate::sensitivity::Sensitivity;

/// Normal gradient on every face; boundary faces are zero.
pub fn gradient_faces(f: &ScalarField) -> FaceField {
    let g = *f.grid();
    let mut out = FaceField::zeros(g);
    let (gx, gy) = out.faces_mut();
    gradient_into(f.values(), &g, gx, gy);
    out
}

pub(crate) fn gradient_into(f: &[f64], g: &Grid2D, gx: &mut [f64], gy: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let inv_h = 1.0 / g.h();
    for j in 0..ny {
        let row = &f[j * nx..(j + 1) * nx];
        let frow = &mut gx[j * (nx + 1)..(j + 1) * (nx + 1)];
        frow[0] = 0.0;
        frow[nx] = 0.0;
        for i in 1..nx {
            frow[i] = (row[i] - row[i - 1]) * inv_h;
        }
    }
    gy[..nx].fill(0.0);
    gy[ny * nx..].fill(0.0);
    for j in 1..ny {
        for i in 0..nx {
            gy[j * nx + i] = (f[j * nx + i] - f[(j - 1) * nx + i]) * inv_h;
        }
    }
}

/// Cellwise net outflow per unit area. Rejects fluxes with a nonzero boundary face.
pub fn divergence(flux: &FaceField) -> Result<ScalarField> {
    let b = flux.boundary_max_abs();
    if b != 0.0 {
        return Err(Error::Contract(format!(
            "flux through the boundary must vanish, found |F| = {b}"
        )));
    }
    Ok(divergence_unchecked(flux))
}

pub(crate) fn divergence_unchecked(flux: &FaceField) -> ScalarField {
    let g = *flux.grid();
    let mut out = vec![0.0; g.cell_count()];
    divergence_into(flux.x_faces(), flux.y_faces(), &g, &mut out);
    ScalarField::from_raw(g, out)
}

#[inline]
pub(crate) fn divergence_into(fx: &[f64], fy: &[f64], g: &Grid2D, out: &mut [f64]) {
    let nx = g.nx();
    let inv_h = 1.0 / g.h();
    for j in 0..g.ny() {
        let xrow = &fx[j * (nx + 1)..(j + 1) * (nx + 1)];
        let bottom = &fy[j * nx..(j + 1) * nx];
        let top = &fy[(j + 1) * nx..(j + 2) * nx];
        let orow = &mut out[j * nx..(j + 1) * nx];
        for i in 0..nx {
            orow[i] = ((xrow[i + 1] - xrow[i]) + (top[i] - bottom[i])) * inv_h;
        }
    }
}

/// Five-point Neumann Laplacian.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    divergence_unchecked(&gradient_faces(f))
}

/// Face velocity a = (∇v)_face / v_face with v_face the arithmetic mean.
pub fn chemotaxis_velocity(v: &ScalarField) -> Result<FaceField> {
    let g = *v.grid();
    let mut out = gradient_faces(v);
    let vals = v.values();
    let nx = g.nx();
    for j in 0..g.ny() {
        for i in 1..nx {
            let vf = 0.5 * (vals[j * nx + i - 1] + vals[j * nx + i]);
            if !(vf > 0.0) {
                return Err(face_positivity(vf));
            }
            out.x_faces_mut()[g.x_face(i, j)] /= vf;
        }
    }
    for j in 1..g.ny() {
        for i in 0..nx {
            let vf = 0.5 * (vals[(j - 1) * nx + i] + vals[j * nx + i]);
            if !(vf > 0.0) {
                return Err(face_positivity(vf));
            }
            out.y_faces_mut()[g.y_face(i, j)] /= vf;
        }
    }
    Ok(out)
}

fn face_positivity(vf: f64) -> Error {
    Error::Positivity {
        t: f64::NAN,
        detail: format!("face value of v is {vf} <= 0"),
    }
}

/// Chemotactic flux S(u_up)·a with donor-cell upwinding of u.
pub fn chemotaxis_flux(u: &ScalarField, v: &ScalarField, p: &Parameters) -> Result<FaceField> {
    if u.grid() != v.grid() {
        return Err(Error::Input("u and v live on different grids".into()));
    }
    let g = *u.grid();
    let sens = Sensitivity::new(p);
    let s_cell: Vec<f64> = u.values().iter().map(|&x| sens.eval(x)).collect();
    let mut flux = chemotaxis_velocity(v)?;
    let nx = g.nx();
    for j in 0..g.ny() {
        for i in 1..nx {
            let k = g.x_face(i, j);
            let a = flux.x_faces()[k];
            let up = if a > 0.0 { j * nx + i - 1 } else { j * nx + i };
            flux.x_faces_mut()[k] = s_cell[up] * a;
        }
    }
    for j in 1..g.ny() {
        for i in 0..nx {
            let k = g.y_face(i, j);
            let a = flux.y_faces()[k];
            let up = if a > 0.0 { (j - 1) * nx + i } else { j * nx + i };
            flux.y_faces_mut()[k] = s_cell[up] * a;
        }
    }
    Ok(flux)
}

/// |∇f|² per cell: mean of the squared x-face gradients on either side
/// plus the same for y.
pub fn cell_grad_sq(f: &ScalarField) -> ScalarField {
    let grad = gradient_faces(f);
    let g = *f.grid();
    let mut out = vec![0.0; g.cell_count()];
    cell_grad_sq_into(grad.x_faces(), grad.y_faces(), &g, &mut out);
    ScalarField::from_raw(g, out)
}

#[inline]
pub(crate) fn cell_grad_sq_into(gx: &[f64], gy: &[f64], g: &Grid2D, out: &mut [f64]) {
    let nx = g.nx();
    for j in 0..g.ny() {
        let xrow = &gx[j * (nx + 1)..(j + 1) * (nx + 1)];
        let bottom = &gy[j * nx..(j + 1) * nx];
        let top = &gy[(j + 1) * nx..(j + 2) * nx];
        let orow = &mut out[j * nx..(j + 1) * nx];
        for i in 0..nx {
            orow[i] = 0.5 * (xrow[i] * xrow[i] + xrow[i + 1] * xrow[i + 1])
                + 0.5 * (bottom[i] * bottom[i] + top[i] * top[i]);
        }
    }
}

/// Midpoint-rule integral h²·Σ f.
pub fn integral(f: &ScalarField) -> f64 {
    f.grid().cell_area() * f.values().iter().sum::<f64>()
}

/// (h²·Σ |f|^p)^(1/p) for integer `p >= 1`.
pub fn norm_lp(f: &ScalarField, p: u32) -> f64 {
    assert!(p >= 1, "norm_lp needs p >= 1");
    let s: f64 = match p {
        1 => f.values().iter().map(|x| x.abs()).sum(),
        2 => f.values().iter().map(|x| x * x).sum(),
        _ => f.values().iter().map(|x| x.abs().powi(p as i32)).sum(),
    };
    let s = s * f.grid().cell_area();
    match p {
        1 => s,
        2 => s.sqrt(),
        _ => s.powf(1.0 / p as f64),
    }
}

pub fn norm_linf(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn min_value(f: &ScalarField) -> f64 {
    f.values().iter().fold(f64::INFINITY, |m, &x| m.min(x))
}

pub fn max_value(f: &ScalarField) -> f64 {
    f.values().iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
}

/// ‖∇f‖_p for p in {2, 4}, from the cellwise |∇f|². For p = 2 this equals
/// the face sum h²·Σ_faces (∂f)², since each interior face is shared by two
/// cells with weight ½.
pub fn grad_norm_lp(f: &ScalarField, p: u32) -> f64 {
    let sq = cell_grad_sq(f);
    grad_norm_from_sq(&sq, p)
}

pub(crate) fn grad_norm_from_sq(sq: &ScalarField, p: u32) -> f64 {
    let a = sq.grid().cell_area();
    match p {
        2 => (a * sq.values().iter().sum::<f64>()).sqrt(),
        4 => (a * sq.values().iter().map(|x| x * x).sum::<f64>()).sqrt().sqrt(),
        _ => (a * sq.values().iter().map(|x| x.powf(p as f64 / 2.0)).sum::<f64>()).powf(1.0 / p as f64),
    }
}

/// h²·Σ_faces (∂f)², the discrete Dirichlet energy ∫|∇f|².
pub fn dirichlet_energy(f: &ScalarField) -> f64 {
    let grad = gradient_faces(f);
    let a = f.grid().cell_area();
    a * grad
        .x_faces()
        .iter()
        .chain(grad.y_faces().iter())
        .map(|x| x * x)
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn small_grid(n: usize, h: f64) -> Grid2D {
        Grid2D::new(n, n, n as f64 * h, n as f64 * h).unwrap()
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = Grid2D::unit_square(8).unwrap();
        let lap = laplacian(&ScalarField::constant(g, 3.7));
        assert!(lap.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_point_stencil_with_mirrored_ghosts() {
        // 4x4 with h = 1 and a unit spike at interior cell (1,1).
        let g = small_grid(4, 1.0);
        let mut vals = vec![0.0; 16];
        vals[g.idx(1, 1)] = 1.0;
        let lap = laplacian(&ScalarField::from_values(g, vals).unwrap());
        assert_eq!(lap.at(1, 1), -4.0);
        for (i, j) in [(0, 1), (2, 1), (1, 0), (1, 2)] {
            assert_eq!(lap.at(i, j), 1.0);
        }
        for (i, j) in [(0, 0), (2, 2), (0, 2), (2, 0), (3, 3)] {
            assert_eq!(lap.at(i, j), 0.0);
        }
        // A corner spike only sees two neighbours; the ghosts mirror it.
        let mut vals = vec![0.0; 16];
        vals[g.idx(0, 0)] = 1.0;
        let lap = laplacian(&ScalarField::from_values(g, vals).unwrap());
        assert_eq!(lap.at(0, 0), -2.0);
    }

    fn cosine_lap_error(n: usize) -> f64 {
        let g = Grid2D::unit_square(n).unwrap();
        let f = ScalarField::from_fn(g, |x, _| (PI * x).cos());
        let lap = laplacian(&f);
        lap.values()
            .iter()
            .zip(f.values())
            .fold(0.0_f64, |m, (l, v)| m.max((l + PI * PI * v).abs()))
    }

    #[test]
    fn laplacian_second_order_on_cosine() {
        let e64 = cosine_lap_error(64);
        let e128 = cosine_lap_error(128);
        assert!(e64 / e128 >= 3.8, "ratio {}", e64 / e128);
        assert!(e128 < 1e-3 * PI * PI);
    }

    #[test]
    fn gradient_of_linear_field() {
        let g = Grid2D::unit_square(8).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x);
        let grad = gradient_faces(&f);
        for j in 0..8 {
            assert_eq!(grad.x_faces()[g.x_face(0, j)], 0.0);
            assert_eq!(grad.x_faces()[g.x_face(8, j)], 0.0);
            for i in 1..8 {
                assert!((grad.x_faces()[g.x_face(i, j)] - 1.0).abs() < 1e-12);
            }
        }
        assert!(grad.y_faces().iter().all(|&y| y == 0.0));
        let sq = cell_grad_sq(&f);
        for j in 0..8 {
            for i in 1..7 {
                assert!((sq.at(i, j) - 1.0).abs() < 1e-12);
            }
        }
        assert!(gradient_faces(&ScalarField::constant(g, 2.0)).max_abs() == 0.0);
    }

    #[test]
    fn divergence_examples() {
        let g = small_grid(4, 0.5);
        assert!(divergence(&FaceField::zeros(g)).unwrap().values().iter().all(|&x| x == 0.0));
        let mut fx = vec![0.0; g.x_face_count()];
        for j in 0..4 {
            for i in 1..4 {
                fx[g.x_face(i, j)] = 1.0;
            }
        }
        let flux = FaceField::from_values(g, fx.clone(), vec![0.0; g.y_face_count()]).unwrap();
        let d = divergence(&flux).unwrap();
        for j in 0..4 {
            assert_eq!(d.at(0, j), 2.0);
            assert_eq!(d.at(1, j), 0.0);
            assert_eq!(d.at(2, j), 0.0);
            assert_eq!(d.at(3, j), -2.0);
        }
        fx[g.x_face(0, 2)] = 0.1;
        let bad = FaceField::from_values(g, fx, vec![0.0; g.y_face_count()]).unwrap();
        assert!(matches!(divergence(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn chemotaxis_flux_examples() {
        let g = small_grid(4, 1.0);
        let p = Parameters::default();
        let u = ScalarField::from_fn(g, |x, y| 1.0 + x * y);
        let flat = ScalarField::constant(g, 2.0);
        assert_eq!(chemotaxis_flux(&u, &flat, &p).unwrap().max_abs(), 0.0);
        let v = ScalarField::from_fn(g, |x, y| 1.0 + x + 0.3 * y);
        assert_eq!(chemotaxis_flux(&ScalarField::zeros(g), &v, &p).unwrap().max_abs(), 0.0);

        // Adjacent pair u = (1, 1), v = (1, 2) with h = 1, χ = 1, β = 0.
        let mut vv = vec![1.0; 16];
        for j in 0..4 {
            vv[g.idx(1, j)] = 2.0;
            vv[g.idx(2, j)] = 2.0;
            vv[g.idx(3, j)] = 2.0;
        }
        let v = ScalarField::from_values(g, vv).unwrap();
        let flux = chemotaxis_flux(&ScalarField::constant(g, 1.0), &v, &p).unwrap();
        assert!((flux.x_faces()[g.x_face(1, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(flux.x_faces()[g.x_face(2, 0)], 0.0);
    }

    #[test]
    fn chemotaxis_flux_upwinds_against_gradient() {
        let g = small_grid(4, 1.0);
        let p = Parameters::default();
        // v decreases to the right: velocity negative, donor is the right cell.
        let v = ScalarField::from_fn(g, |x, _| 10.0 - x);
        let u = ScalarField::from_fn(g, |x, _| x);
        let flux = chemotaxis_flux(&u, &v, &p).unwrap();
        let a = -1.0 / (10.0 - 1.0);
        let s_right = 1.5 / 2.5;
        assert!((flux.x_faces()[g.x_face(1, 0)] - s_right * a).abs() < 1e-15);
    }

    #[test]
    fn chemotaxis_flux_rejects_nonpositive_v() {
        let g = small_grid(4, 1.0);
        let mut vv = vec![1.0; 16];
        vv[0] = -1.0;
        let v = ScalarField::from_values(g, vv).unwrap();
        assert!(matches!(
            chemotaxis_flux(&ScalarField::constant(g, 1.0), &v, &Parameters::default()),
            Err(Error::Positivity { .. })
        ));
    }

    #[test]
    fn measurement_examples() {
        let g = Grid2D::new(8, 16, 1.0, 2.0).unwrap();
        let f = ScalarField::constant(g, -1.5);
        assert!((integral(&f) + 3.0).abs() < 1e-14);
        assert_eq!(norm_linf(&f), 1.5);
        assert_eq!(min_value(&f), -1.5);
        assert!((norm_lp(&f, 1) - 3.0).abs() < 1e-14);
        assert!((norm_lp(&f, 2) - (2.0 * 2.25_f64).sqrt()).abs() < 1e-14);
        assert!((norm_lp(&f, 3) - (2.0 * 1.5_f64.powi(3)).cbrt()).abs() < 1e-13);
    }

    fn cosine_energy_error(n: usize) -> (f64, f64) {
        let g = Grid2D::unit_square(n).unwrap();
        let f = ScalarField::from_fn(g, |x, _| (PI * x).cos());
        let de = grad_norm_lp(&f, 2).powi(2) - PI * PI / 2.0;
        let l2 = norm_lp(&f, 2).powi(2) - 0.5;
        (de.abs(), l2.abs())
    }

    #[test]
    fn cosine_norms_converge_at_second_order() {
        let (d32, _) = cosine_energy_error(32);
        let (d64, l64) = cosine_energy_error(64);
        let (d128, _) = cosine_energy_error(128);
        let r1 = d32 / d64;
        let r2 = d64 / d128;
        assert!((3.5..=4.5).contains(&r1) && (3.5..=4.5).contains(&r2), "{r1} {r2}");
        // Midpoint L2 of cos(πx) over full periods is exact.
        assert!(l64 < 1e-14);
    }

    #[test]
    fn grad_norm_matches_face_sum() {
        let g = Grid2D::unit_square(16).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() * (2.0 * y).cos() + x * y);
        let a = grad_norm_lp(&f, 2).powi(2);
        let b = dirichlet_energy(&f);
        assert!((a - b).abs() < 1e-12 * b);
    }

    fn random_field(g: Grid2D, vals: &[f64]) -> ScalarField {
        ScalarField::from_values(g, vals.to_vec()).unwrap()
    }

    proptest! {
        #[test]
        fn div_grad_is_laplacian(vals in proptest::collection::vec(-5.0..5.0f64, 64)) {
            let g = Grid2D::unit_square(8).unwrap();
            let f = random_field(g, &vals);
            let a = divergence(&gradient_faces(&f)).unwrap();
            prop_assert_eq!(a, laplacian(&f));
        }

        #[test]
        fn discrete_summation_by_parts(
            fv in proptest::collection::vec(-2.0..2.0f64, 64),
            gv in proptest::collection::vec(-2.0..2.0f64, 64),
        ) {
            let g = Grid2D::unit_square(8).unwrap();
            let f = random_field(g, &fv);
            let q = random_field(g, &gv);
            let lhs: f64 = f.values().iter().zip(laplacian(&q).values()).map(|(a, b)| a * b).sum::<f64>() * g.cell_area();
            let gf = gradient_faces(&f);
            let gq = gradient_faces(&q);
            let rhs: f64 = gf.x_faces().iter().zip(gq.x_faces()).chain(gf.y_faces().iter().zip(gq.y_faces()))
                .map(|(a, b)| a * b).sum::<f64>() * g.cell_area();
            prop_assert!((lhs + rhs).abs() <= 1e-11 * (1.0 + rhs.abs()));
        }

        #[test]
        fn spatial_operator_conserves_mass(
            uv in proptest::collection::vec(0.0..3.0f64, 64),
            vv in proptest::collection::vec(0.1..3.0f64, 64),
            beta in -1.0..0.99f64,
        ) {
            let g = Grid2D::unit_square(8).unwrap();
            let p = Parameters { beta, ..Parameters::default() };
            let u = random_field(g, &uv);
            let v = random_field(g, &vv);
            let flux = chemotaxis_flux(&u, &v, &p).unwrap();
            let div = divergence(&flux).unwrap();
            let lap = laplacian(&u);
            let total: f64 = lap.values().iter().zip(div.values()).map(|(l, d)| l - d).sum::<f64>() * g.cell_area();
            let scale = (norm_linf(&lap) + norm_linf(&div)) * g.area();
            prop_assert!(total.abs() <= 1e-12 * scale.max(1e-300));
            let bound = 1e-12 * flux.max_abs() * g.area() / g.h();
            prop_assert!(integral(&div).abs() <= bound.max(1e-300));
        }

        #[test]
        fn upwind_flux_step_keeps_u_nonnegative(
            uv in proptest::collection::vec(0.0..2.0f64, 64),
            vv in proptest::collection::vec(0.05..2.0f64, 64),
            beta in 0.0..0.99f64,
        ) {
            let g = Grid2D::unit_square(8).unwrap();
            let p = Parameters { beta, mu: 1.0, ..Parameters::default() };
            let u = random_field(g, &uv);
            let v = random_field(g, &vv);
            let a = chemotaxis_velocity(&v).unwrap().max_abs();
            let dt = p.cfl_safety * (g.h() / (4.0 * p.chi * a.max(1e-300))).min(g.h() * g.h() / 8.0);
            let div = divergence(&chemotaxis_flux(&u, &v, &p).unwrap()).unwrap();
            for (x, d) in u.values().iter().zip(div.values()) {
                prop_assert!(x - dt * d >= 0.0);
            }
        }
    }
}
