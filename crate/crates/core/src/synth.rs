//! Synthetic fields: Gaussian bumps, seeded random smooth fields, and the
//! plateau/logarithmic trial profiles used by the coupling-threshold
//! diagnostics. Deterministic for a fixed seed.

use crate::grid::{Field, Grid};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Centered anisotropic Gaussian `amp * exp(-(x-cx)^2/(2 wx^2) - (y-cy)^2/(2 wy^2))`.
pub fn gaussian(grid: &Grid, amp: f64, cx: f64, cy: f64, wx: f64, wy: f64) -> Field {
    Field::from_fn(grid, |x, y| {
        let dx = x - cx;
        let dy = y - cy;
        amp * (-dx * dx / (2.0 * wx * wx) - dy * dy / (2.0 * wy * wy)).exp()
    })
}

/// Random smooth decaying field: a superposition of a handful of Gaussian
/// bumps with seeded centers, widths, and signed amplitudes, kept well
/// inside the box so the decay precondition holds.
pub fn random_smooth_field(grid: &Grid, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lx = grid.half_length_x;
    let ly = grid.half_length_y;
    let n_bumps = rng.gen_range(2..=4);
    let mut field = Field::zeros(grid);
    for _ in 0..n_bumps {
        let amp = rng.gen_range(0.3..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let cx = rng.gen_range(-0.25 * lx..0.25 * lx);
        let cy = rng.gen_range(-0.25 * ly..0.25 * ly);
        let wx = rng.gen_range(0.06 * lx..0.16 * lx);
        let wy = rng.gen_range(0.06 * ly..0.16 * ly);
        let bump = gaussian(grid, amp, cx, cy, wx, wy);
        field = field.axpy(1.0, &bump);
    }
    field
}

/// Like [`random_smooth_field`] but strictly positive (bump amplitudes all
/// positive), suitable as solver seeds and rearrangement inputs.
pub fn random_positive_field(grid: &Grid, seed: u64) -> Field {
    let mut f = random_smooth_field(grid, seed);
    f.abs_in_place();
    f
}

/// A pair of independent random smooth fields on the same grid.
pub fn random_smooth_pair(grid: &Grid, seed: u64) -> (Field, Field) {
    (
        random_smooth_field(grid, seed.wrapping_mul(2).wrapping_add(1)),
        random_smooth_field(grid, seed.wrapping_mul(2).wrapping_add(2)),
    )
}

/// Plateau-with-logarithmic-tail trial profile:
/// value `peak` on the central plateau `rho <= R e^{-peak}` (elliptical
/// radius normalised by the box), decaying like `log(R/rho)` outside and
/// vanishing at `rho = R`. Larger `peak` raises the sup while the
/// gradient-type energy grows only linearly in `peak`, which is the
/// mechanism that drives the coupling-threshold quotient down.
pub fn plateau_log_trial(grid: &Grid, peak: f64) -> Field {
    assert!(peak > 0.0, "plateau height must be positive");
    let outer = 0.75 * grid.half_length_x.min(grid.half_length_y);
    Field::from_fn(grid, |x, y| {
        let rho = (x * x + y * y).sqrt();
        if rho >= outer {
            0.0
        } else {
            (outer / rho.max(1e-300)).ln().min(peak)
        }
    })
}
