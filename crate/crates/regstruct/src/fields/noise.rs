//! Space-time white noise on the grid and parabolic mollification.

use super::fft::convolve_shifted;
use super::grid::{Field, TorusGrid};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// i.i.d. centred Gaussians with variance 1/(Δt·Δx^d) per cell, so that the
/// quadrature pairing ξ(φ) ≈ Σ ξ_i φ_i ΔtΔx^d has the L² covariance.
pub fn sample_white_noise(grid: TorusGrid, seed: u64) -> Field {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sigma = 1.0 / grid.cell_volume().sqrt();
    let mut f = Field::zeros(grid);
    for v in f.data.iter_mut() {
        let g: f64 = StandardNormal.sample(&mut rng);
        *v = sigma * g;
    }
    f
}

/// Parabolic mollifier ρ_ε(t,x) = ε^{-(2+d)} ρ(t/ε², x/ε) with a fixed
/// smooth product bump ρ supported inside the unit parabolic ball
/// (|t| ≤ 1/4, |x_i| ≤ 1/(2d)), normalised to unit mass.
#[derive(Clone, Copy, Debug)]
pub struct Mollifier {
    pub eps: f64,
}

fn bump(u: f64) -> f64 {
    let w = 1.0 - u * u;
    if w <= 0.0 {
        0.0
    } else {
        w.powi(4)
    }
}

impl Mollifier {
    pub fn new(eps: f64) -> Self {
        Mollifier { eps }
    }

    /// The unscaled profile at parabolic coordinates (t, x).
    pub fn profile(&self, d: usize, t: f64, x: &[f64]) -> f64 {
        let mut v = bump(4.0 * t);
        for &xi in x {
            v *= bump(2.0 * d as f64 * xi);
        }
        v
    }

    /// Sample ρ_ε on the grid as a convolution kernel: spatial offsets are
    /// wrapped, time offsets are shifted so slot 0 holds offset
    /// `-shift_back·Δt`. The discrete mass is normalised to exactly 1.
    pub fn kernel(&self, grid: TorusGrid) -> Result<(Field, usize)> {
        let e = self.eps;
        if e * e < 2.0 * grid.dt() || e < 2.0 * grid.dx() {
            return Err(Error::ScaleTooFine {
                scale: e,
                needed: (2.0 * grid.dt()).sqrt().max(2.0 * grid.dx()),
            });
        }
        let t_support = e * e / 4.0;
        let shift = (t_support / grid.dt()).ceil() as usize + 1;
        if 2 * shift >= grid.nt {
            return Err(Error::Config(format!(
                "mollifier time support {} exceeds the grid horizon",
                t_support
            )));
        }
        let d = grid.d;
        let mut f = Field::zeros(grid);
        let sp = grid.spatial_points();
        let mut x = vec![0.0; d];
        for it in 0..grid.nt {
            let t_off = (it as f64 - shift as f64) * grid.dt();
            for s in 0..sp {
                let ix = grid.spatial_coords(s);
                for (a, &i) in x.iter_mut().zip(&ix) {
                    *a = grid.wrapped_coord(i) / e;
                }
                f.data[it * sp + s] = self.profile(d, t_off / (e * e), &x);
            }
        }
        let mass = f.integral();
        if mass <= 0.0 {
            return Err(Error::ScaleTooFine {
                scale: e,
                needed: 2.0 * grid.dx(),
            });
        }
        Ok((f.scale(1.0 / mass), shift))
    }

    /// L² norm squared of ρ_ε by grid quadrature (the pointwise variance of
    /// mollified white noise).
    pub fn l2_sq(&self, grid: TorusGrid) -> Result<f64> {
        let (k, _) = self.kernel(grid)?;
        Ok(k.l2_sq())
    }
}

/// ξ_ε = ρ_ε ⋆ ξ.
pub fn mollify(xi: &Field, m: &Mollifier) -> Result<Field> {
    let (k, shift) = m.kernel(xi.grid)?;
    convolve_shifted(&k, xi, shift)
}
