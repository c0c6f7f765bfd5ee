//! Periodic computational box and real scalar fields on it.
//!
//! The box is `[-Lx, Lx) x [-Ly, Ly)` sampled on a uniform `nx x ny` grid.
//! Mode frequencies are `xi_j = pi j / Lx` for `j in {-nx/2, ..., nx/2-1}`
//! (stored in FFT ordering) and analogously `eta_k` in `y`. Quadrature is
//! the plain rectangle rule, which is spectrally accurate for smooth
//! periodic integrands.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fraction of the half-length regarded as the "inner" part of the box when
/// measuring decay; the outer 20% is the border region.
const DECAY_INNER_FRACTION: f64 = 0.8;

/// Periodic box `[-Lx, Lx) x [-Ly, Ly)` with `nx x ny` uniform samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_length_x: f64,
    pub half_length_y: f64,
    pub nx: usize,
    pub ny: usize,
    pub cell_area: f64,
}

impl Grid {
    /// Builds a grid, rejecting odd or tiny mode counts and non-positive
    /// box half-lengths.
    pub fn new(half_length_x: f64, half_length_y: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(half_length_x.is_finite() && half_length_x > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half_length_x must be positive and finite, got {half_length_x}"
            )));
        }
        if !(half_length_y.is_finite() && half_length_y > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half_length_y must be positive and finite, got {half_length_y}"
            )));
        }
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 {
                return Err(Error::InvalidGrid(format!("{name} must be >= 8, got {n}")));
            }
            if n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} must be even, got {n}")));
            }
        }
        let hx = 2.0 * half_length_x / nx as f64;
        let hy = 2.0 * half_length_y / ny as f64;
        Ok(Grid {
            half_length_x,
            half_length_y,
            nx,
            ny,
            cell_area: hx * hy,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing in `x`.
    pub fn dx(&self) -> f64 {
        2.0 * self.half_length_x / self.nx as f64
    }

    /// Grid spacing in `y`.
    pub fn dy(&self) -> f64 {
        2.0 * self.half_length_y / self.ny as f64
    }

    /// Sample abscissae `x_i = -Lx + i dx`.
    pub fn xs(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx)
            .map(|i| -self.half_length_x + i as f64 * dx)
            .collect()
    }

    /// Sample ordinates `y_k = -Ly + k dy`.
    pub fn ys(&self) -> Vec<f64> {
        let dy = self.dy();
        (0..self.ny)
            .map(|k| -self.half_length_y + k as f64 * dy)
            .collect()
    }

    /// Mode frequencies in `x`, FFT ordering: index `i` carries
    /// `j = i` for `i < nx/2` and `j = i - nx` otherwise.
    pub fn freqs_x(&self) -> Vec<f64> {
        fft_freqs(self.nx, self.half_length_x)
    }

    /// Mode frequencies in `y`, FFT ordering.
    pub fn freqs_y(&self) -> Vec<f64> {
        fft_freqs(self.ny, self.half_length_y)
    }

    /// Row-major index of sample `(i, k)`; the `y` index is outer.
    #[inline]
    pub fn idx(&self, i: usize, k: usize) -> usize {
        k * self.nx + i
    }
}

fn fft_freqs(n: usize, half_length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let j = if i < n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            PI * j / half_length
        })
        .collect()
}

/// Real scalar function sampled on a [`Grid`], row-major with the `y` index
/// outer. Immutable after construction apart from crate-internal helpers.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    /// Wraps a sample vector, checking length and finiteness.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate(
                "field contains non-finite samples".into(),
            ));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f(x, y)` on the grid.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let xs = grid.xs();
        let ys = grid.ys();
        let mut values = Vec::with_capacity(grid.len());
        for &y in &ys {
            for &x in &xs {
                values.push(f(x, y));
            }
        }
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `cell_area * sum(u^2)` — the squared L² norm.
    pub fn mass(&self) -> f64 {
        self.grid.cell_area * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// `cell_area * sum(|u|^p)` for `p >= 1`.
    pub fn lp_integral(&self, p: f64) -> f64 {
        assert!(p >= 1.0, "lp_integral requires p >= 1, got {p}");
        self.grid.cell_area * self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()
    }

    /// `cell_area * sum(|u|^{r1} |v|^{r2})`; symmetric under swapping
    /// `(u, r1)` with `(v, r2)`.
    pub fn coupling_integral(&self, other: &Field, r1: f64, r2: f64) -> Result<f64> {
        assert!(
            r1 > 1.0 && r2 > 1.0,
            "coupling exponents must exceed 1, got ({r1}, {r2})"
        );
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| u.abs().powf(r1) * v.abs().powf(r2))
            .sum();
        Ok(self.grid.cell_area * sum)
    }

    /// Grid inner product `cell_area * sum(u v)`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| u * v)
            .sum();
        Ok(self.grid.cell_area * sum)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Ratio of the largest sample magnitude on the outer 20% border region
    /// to the global maximum; small values certify decay inside the box.
    pub fn decay_margin(&self) -> f64 {
        let max = self.linf();
        if max == 0.0 {
            return 0.0;
        }
        let xs = self.grid.xs();
        let ys = self.grid.ys();
        let x_cut = DECAY_INNER_FRACTION * self.grid.half_length_x;
        let y_cut = DECAY_INNER_FRACTION * self.grid.half_length_y;
        let mut border_max: f64 = 0.0;
        for (k, &y) in ys.iter().enumerate() {
            let y_outer = y.abs() > y_cut;
            for (i, &x) in xs.iter().enumerate() {
                if y_outer || x.abs() > x_cut {
                    border_max = border_max.max(self.values[self.grid.idx(i, k)].abs());
                }
            }
        }
        border_max / max
    }

    /// Returns `u` scaled so that `mass(u) = target`. Errors on a zero field.
    pub fn renormalized_to_mass(&self, target: f64) -> Result<Field> {
        assert!(target > 0.0, "target mass must be positive");
        let m = self.mass();
        if m <= 0.0 {
            return Err(Error::Degenerate(
                "cannot renormalize a zero field to positive mass".into(),
            ));
        }
        let c = (target / m).sqrt();
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        Ok(out)
    }

    pub(crate) fn scaled(&self, c: f64) -> Field {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub(crate) fn abs_in_place(&mut self) {
        self.values.iter_mut().for_each(|v| *v = v.abs());
    }

    pub(crate) fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// `self + c * other`, sharing the grid.
    pub(crate) fn axpy(&self, c: f64, other: &Field) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_box_has_integer_frequencies() {
        let g = Grid::new(PI, PI, 8, 8).unwrap();
        let fx = g.freqs_x();
        let expected = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0];
        for (a, b) in fx.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "freq {a} vs {b}");
        }
        let mut sorted = fx.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(PI, PI, 7, 8).is_err());
        assert!(Grid::new(PI, PI, 8, 6).is_err());
        assert!(Grid::new(0.0, PI, 8, 8).is_err());
        assert!(Grid::new(PI, -1.0, 8, 8).is_err());
    }

    #[test]
    fn cell_area_matches_arithmetic() {
        let g = Grid::new(10.0, 20.0, 128, 256).unwrap();
        assert!((g.cell_area - (20.0 / 128.0) * (40.0 / 256.0)).abs() < 1e-15);
    }

    #[test]
    fn mass_of_constant_and_cosine() {
        let g = Grid::new(PI, PI, 64, 64).unwrap();
        let one = Field::from_fn(&g, |_, _| 1.0);
        assert!((one.mass() - 4.0 * PI * PI).abs() < 1e-10);
        let cosx = Field::from_fn(&g, |x, _| x.cos());
        assert!((cosx.mass() - 2.0 * PI * PI).abs() < 1e-10);
        let zero = Field::zeros(&g);
        assert_eq!(zero.mass(), 0.0);
    }

    #[test]
    fn lp_integral_of_constant() {
        let g = Grid::new(PI, PI, 32, 32).unwrap();
        let one = Field::from_fn(&g, |_, _| 1.0);
        assert!((one.lp_integral(5.0) - 4.0 * PI * PI).abs() < 1e-10);
        assert_eq!(Field::zeros(&g).lp_integral(3.0), 0.0);
    }

    #[test]
    fn coupling_reduces_to_lp_and_is_symmetric() {
        let g = Grid::new(4.0, 4.0, 32, 32).unwrap();
        let u = Field::from_fn(&g, |x, y| (-(x * x + y * y)).exp());
        let same = u.coupling_integral(&u, 2.0, 2.0).unwrap();
        assert!((same - u.lp_integral(4.0)).abs() < 1e-12 * same);

        let v = Field::from_fn(&g, |x, y| (-(x * x / 2.0 + y * y)).exp() * 1.3);
        let a = u.coupling_integral(&v, 2.5, 3.0).unwrap();
        let b = v.coupling_integral(&u, 3.0, 2.5).unwrap();
        assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));

        let zero = Field::zeros(&g);
        assert_eq!(u.coupling_integral(&zero, 2.0, 2.0).unwrap(), 0.0);

        let g2 = Grid::new(4.0, 4.0, 16, 16).unwrap();
        let w = Field::zeros(&g2);
        assert!(matches!(
            u.coupling_integral(&w, 2.0, 2.0),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn decay_margin_flags_border_support() {
        let g = Grid::new(8.0, 8.0, 64, 64).unwrap();
        let bump = Field::from_fn(&g, |x, y| (-(x * x + y * y)).exp());
        assert!(bump.decay_margin() < 1e-8);
        let wide = Field::from_fn(&g, |x, y| (-(x * x + y * y) / 64.0).exp());
        assert!(wide.decay_margin() > 1e-3);
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = Grid::new(1.0, 1.0, 8, 8).unwrap();
        let mut vals = vec![0.0; g.len()];
        vals[3] = f64::NAN;
        assert!(Field::from_values(&g, vals).is_err());
    }
}
