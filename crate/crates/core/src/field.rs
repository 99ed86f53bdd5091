//! Uniform cell-centred mesh and the cell / face storage built on it.
//!
//! Cells are indexed `(i, j)` with `i` along x and `j` along y; storage is
//! row-major starting from the y-min row, so cell `(i, j)` lives at
//! `j * nx + i`. Face arrays follow the same convention: x-face `(i, j)`
//! with `i in 0..=nx` sits at `j * (nx + 1) + i`, y-face `(i, j)` with
//! `j in 0..=ny` sits at `j * nx + i`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Rectangular domain `[0, lx] x [0, ly]` split into square cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    h: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::Input(format!(
                "grid needs at least 4 cells per direction, got {nx}x{ny}"
            )));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::Input(format!(
                "domain lengths must be positive and finite, got lx = {lx}, ly = {ly}"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx {
            return Err(Error::Input(format!(
                "cells must be square: lx/nx = {hx} but ly/ny = {hy}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            h: hx,
        })
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn lx(&self) -> f64 {
        self.lx
    }

    #[inline]
    pub fn ly(&self) -> f64 {
        self.ly
    }

    /// Cell width.
    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// |Ω|
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// First nonzero Neumann eigenvalue of −Δ on the rectangle.
    pub fn lambda1(&self) -> f64 {
        PI * PI * (1.0 / (self.lx * self.lx)).min(1.0 / (self.ly * self.ly))
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cell centre of `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn x_face_count(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn y_face_count(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Same domain with `factor` times as many cells per direction.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.nx * factor, self.ny * factor, self.lx, self.ly)
    }
}

/// One cell-centred unknown on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Input(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite value at cell index {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.cell_count()],
        }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    /// Wraps values without the finiteness scan. Used by operators whose
    /// output is finite whenever their input is.
    pub(crate) fn from_raw(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cell_count());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// 2x2 block average onto a grid with half the cells per direction.
    pub fn restrict(&self) -> Result<Self> {
        let g = &self.grid;
        if g.nx() % 2 != 0 || g.ny() % 2 != 0 {
            return Err(Error::Input(format!(
                "cannot restrict an odd grid {}x{}",
                g.nx(),
                g.ny()
            )));
        }
        let coarse = Grid2D::new(g.nx() / 2, g.ny() / 2, g.lx(), g.ly())?;
        let mut values = Vec::with_capacity(coarse.cell_count());
        for j in 0..coarse.ny() {
            for i in 0..coarse.nx() {
                let s = self.at(2 * i, 2 * j)
                    + self.at(2 * i + 1, 2 * j)
                    + self.at(2 * i, 2 * j + 1)
                    + self.at(2 * i + 1, 2 * j + 1);
                values.push(0.25 * s);
            }
        }
        Ok(Self::from_raw(coarse, values))
    }
}

/// Values on cell faces: normal gradients or normal fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid2D,
    x_faces: Vec<f64>,
    y_faces: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            x_faces: vec![0.0; grid.x_face_count()],
            y_faces: vec![0.0; grid.y_face_count()],
        }
    }

    pub fn from_values(grid: Grid2D, x_faces: Vec<f64>, y_faces: Vec<f64>) -> Result<Self> {
        if x_faces.len() != grid.x_face_count() || y_faces.len() != grid.y_face_count() {
            return Err(Error::Input(format!(
                "face arrays have lengths {}/{} but the grid needs {}/{}",
                x_faces.len(),
                y_faces.len(),
                grid.x_face_count(),
                grid.y_face_count()
            )));
        }
        Ok(Self {
            grid,
            x_faces,
            y_faces,
        })
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn x_faces(&self) -> &[f64] {
        &self.x_faces
    }

    #[inline]
    pub fn y_faces(&self) -> &[f64] {
        &self.y_faces
    }

    #[inline]
    pub(crate) fn x_faces_mut(&mut self) -> &mut [f64] {
        &mut self.x_faces
    }

    #[inline]
    pub(crate) fn y_faces_mut(&mut self) -> &mut [f64] {
        &mut self.y_faces
    }

    #[inline]
    pub(crate) fn faces_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.x_faces, &mut self.y_faces)
    }

    pub fn max_abs(&self) -> f64 {
        self.x_faces
            .iter()
            .chain(self.y_faces.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude found on a boundary face.
    pub fn boundary_max_abs(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0_f64;
        for j in 0..g.ny() {
            m = m.max(self.x_faces[g.x_face(0, j)].abs());
            m = m.max(self.x_faces[g.x_face(g.nx(), j)].abs());
        }
        for i in 0..g.nx() {
            m = m.max(self.y_faces[g.y_face(i, 0)].abs());
            m = m.max(self.y_faces[g.y_face(i, g.ny())].abs());
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_square_cells() {
        assert!(Grid2D::new(8, 8, 1.0, 2.0).is_err());
        assert!(Grid2D::new(8, 16, 1.0, 2.0).is_ok());
        assert!(Grid2D::new(3, 8, 1.0, 1.0).is_err());
    }

    #[test]
    fn lambda1_uses_longest_side() {
        let g = Grid2D::new(16, 8, 2.0, 1.0).unwrap();
        assert!((g.lambda1() - PI * PI / 4.0).abs() < 1e-15);
        assert_eq!(g.area(), 2.0);
    }

    #[test]
    fn restriction_preserves_integral() {
        let g = Grid2D::unit_square(8).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x * x + y);
        let c = f.restrict().unwrap();
        let fine: f64 = f.values().iter().sum::<f64>() * g.cell_area();
        let coarse: f64 = c.values().iter().sum::<f64>() * c.grid().cell_area();
        assert!((fine - coarse).abs() < 1e-14);
    }

    #[test]
    fn from_values_checks_length_and_finiteness() {
        let g = Grid2D::unit_square(4).unwrap();
        assert!(ScalarField::from_values(g, vec![0.0; 15]).is_err());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(ScalarField::from_values(g, v).is_err());
    }
}
