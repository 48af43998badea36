//! Truncated heat-type kernels with vanishing moments and their dyadic
//! decomposition.
//!
//! The full kernel is K = χ·G + P: G is the order-β semigroup kernel on the
//! torus, χ a smooth radial cutoff in the parabolic distance, and P a smooth
//! compactly supported correction enforcing ∫K·Q = 0 for every parabolic
//! monomial Q of degree ≤ r. Time slot j holds the sample at the midpoint
//! (j+1/2)·Δt, which keeps the t→0 singularity quadrature-friendly.

use super::fft::fft_nd;
use super::grid::{Field, TorusGrid};
use crate::error::{Error, Result};
use rustfft::num_complex::Complex;

#[derive(Clone, Debug)]
pub struct KernelDecomposition {
    /// The full kernel K as a causal convolution kernel.
    pub full: Field,
    /// Dyadic pieces K_n, n = 0..=n_max; piece n is supported in the
    /// parabolic ball of radius 2^{-n}.
    pub pieces: Vec<Field>,
    /// Semigroup order β (2 for heat, 4 for biharmonic).
    pub beta: f64,
    /// Vanishing-moment degree r.
    pub moment_degree: u32,
    /// Cutoff radius of χ in parabolic distance.
    pub radius: f64,
}

/// C¹ cutoff profile: 1 for u ≤ 1/2, 0 for u ≥ 1, quintic smoothstep
/// in between.
pub fn cutoff(u: f64) -> f64 {
    if u <= 0.5 {
        1.0
    } else if u >= 1.0 {
        0.0
    } else {
        let s = (u - 0.5) * 2.0;
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Semigroup kernel slice G(t, ·) on the torus by spectral synthesis.
fn semigroup_slice(grid: TorusGrid, beta: f64, t: f64) -> Vec<f64> {
    let n = grid.n;
    let d = grid.d;
    let sp = grid.spatial_points();
    let mut buf = vec![Complex::new(0.0, 0.0); sp];
    let two_pi = 2.0 * std::f64::consts::PI;
    for s in 0..sp {
        let ix = grid.spatial_coords(s);
        let mut k_sq = 0.0;
        for &i in &ix {
            let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            let w = two_pi * k / grid.len;
            k_sq += w * w;
        }
        buf[s].re = (-k_sq.powf(beta / 2.0) * t).exp();
    }
    let shape: Vec<usize> = std::iter::repeat(n).take(d).collect();
    fft_nd(&mut buf, &shape, true);
    let norm = 1.0 / grid.len.powi(d as i32);
    buf.into_iter().map(|c| c.re * norm).collect()
}

/// Parabolic monomials t^p x^q with 2p + |q| ≤ r, as exponent vectors
/// (time first).
fn parabolic_monomials(d: usize, r: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![]];
    for _ in 0..=d {
        let mut next = Vec::new();
        for prefix in &stack {
            let used: u32 = prefix
                .iter()
                .enumerate()
                .map(|(i, &e): (usize, &u32)| if i == 0 { 2 * e } else { e })
                .sum();
            let weight = if prefix.is_empty() { 2 } else { 1 };
            let mut e = 0;
            while used + weight * e <= r {
                let mut v = prefix.clone();
                v.push(e);
                next.push(v);
                e += 1;
            }
        }
        stack = next;
    }
    for v in stack {
        if v.len() == d + 1 {
            out.push(v);
        }
    }
    out
}

/// Dense linear solve with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

struct KernelGeometry {
    grid: TorusGrid,
}

impl KernelGeometry {
    /// Parabolic distance of the sample point (midpoint time slot it,
    /// wrapped spatial index).
    fn rho(&self, it: usize, ix: &[usize]) -> f64 {
        let t = (it as f64 + 0.5) * self.grid.dt();
        let x: Vec<f64> = ix.iter().map(|&i| self.grid.wrapped_coord(i)).collect();
        t.powf(1.0 / self.grid.s0 as f64) + x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn for_each(&self, mut f: impl FnMut(usize, f64, &[f64], f64)) {
        let g = self.grid;
        let sp = g.spatial_points();
        for it in 0..g.nt {
            let t = (it as f64 + 0.5) * g.dt();
            for s in 0..sp {
                let ix = g.spatial_coords(s);
                let x: Vec<f64> = ix.iter().map(|&i| g.wrapped_coord(i)).collect();
                let rho = t.powf(1.0 / g.s0 as f64)
                    + x.iter().map(|v| v.abs()).sum::<f64>();
                f(it * sp + s, t, &x, rho);
            }
        }
    }
}

pub fn build_kernel(
    grid: TorusGrid,
    beta: f64,
    moment_degree: u32,
) -> Result<KernelDecomposition> {
    build_kernel_with_radius(grid, beta, moment_degree, 0.5)
}

/// The singular part χ·G alone: the order-β semigroup kernel under the
/// smooth parabolic cutoff, without the moment-kill correction. This is the
/// right object for the renormalisation-constant quadratures, where the
/// smooth correction would only add a finite scale-independent shift that
/// obscures the ε-scaling.
pub fn truncated_semigroup(grid: TorusGrid, beta: f64, radius: f64) -> Result<Field> {
    if beta != 2.0 && beta != 4.0 {
        return Err(Error::Config(format!("kernel order must be 2 or 4, got {beta}")));
    }
    let geom = KernelGeometry { grid };
    let sp = grid.spatial_points();
    let mut full = Field::zeros(grid);
    let t_max = radius.powi(grid.s0 as i32);
    for it in 0..grid.nt {
        let t = (it as f64 + 0.5) * grid.dt();
        if t >= t_max {
            break;
        }
        let slice = semigroup_slice(grid, beta, t);
        for s in 0..sp {
            let ix = grid.spatial_coords(s);
            let rho = geom.rho(it, &ix);
            let chi = cutoff(rho / radius);
            if chi > 0.0 {
                full.data[it * sp + s] = chi * slice[s];
            }
        }
    }
    Ok(full)
}

/// The torus semigroup kernel under a smooth cutoff in time only, supported
/// in t < t_cut. Spatial derivatives commute with the cutoff, so this
/// variant has no cutoff-gradient contribution in the x-direction — the
/// right truncation for the renormalisation-constant quadratures, where the
/// annulus term of a parabolic cutoff would add a scale-independent offset
/// that obscures the ε-scaling.
pub fn time_cutoff_semigroup(grid: TorusGrid, beta: f64, t_cut: f64) -> Result<Field> {
    if beta != 2.0 && beta != 4.0 {
        return Err(Error::Config(format!("kernel order must be 2 or 4, got {beta}")));
    }
    let sp = grid.spatial_points();
    let mut full = Field::zeros(grid);
    for it in 0..grid.nt {
        let t = (it as f64 + 0.5) * grid.dt();
        let psi = cutoff(t / t_cut);
        if psi == 0.0 {
            break;
        }
        let slice = semigroup_slice(grid, beta, t);
        for s in 0..sp {
            full.data[it * sp + s] = psi * slice[s];
        }
    }
    Ok(full)
}

pub fn build_kernel_with_radius(
    grid: TorusGrid,
    beta: f64,
    moment_degree: u32,
    radius: f64,
) -> Result<KernelDecomposition> {
    if moment_degree < 2 {
        return Err(Error::Config("moment degree must be at least 2".into()));
    }
    let geom = KernelGeometry { grid };
    let mut full = truncated_semigroup(grid, beta, radius)?;
    let t_max = radius.powi(grid.s0 as i32);

    // moment-kill correction P = sum c_a * B * m_a. B lives in the
    // outermost annulus (parabolic distance ≳ radius/2) so the correction
    // never contaminates the dyadic scaling of the inner pieces.
    // the bump is as fat as the outer region allows: a narrow support would
    // force large amplitudes to reproduce the kernel's higher moments, and a
    // large smooth correction pollutes every downstream estimate
    let monos = parabolic_monomials(grid.d, moment_degree);
    let t_c = 0.575 * t_max;
    let t_w = 0.325 * t_max;
    let x_w = 0.6 * radius / grid.d as f64;
    let bump = |u: f64| {
        let w = 1.0 - u * u;
        if w <= 0.0 {
            0.0
        } else {
            w.powi(4)
        }
    };
    // basis adapted to the support of B for conditioning; it spans the same
    // polynomial space as the raw monomials, so killing these moments kills
    // all of them
    let mono_val = |m: &[u32], t: f64, x: &[f64]| -> f64 {
        let mut v = ((t - t_c) / t_w).powi(m[0] as i32);
        for (i, &e) in m.iter().skip(1).enumerate() {
            v *= (x[i] / x_w).powi(e as i32);
        }
        v
    };
    let raw_val = |m: &[u32], t: f64, x: &[f64]| -> f64 {
        let mut v = t.powi(m[0] as i32);
        for (i, &e) in m.iter().skip(1).enumerate() {
            v *= x[i].powi(e as i32);
        }
        v
    };

    let nm = monos.len();
    let mut gram = vec![vec![0.0; nm]; nm];
    let mut rhs = vec![0.0; nm];
    let vol = grid.cell_volume();
    geom.for_each(|idx, t, x, _rho| {
        let mut b = bump((t - t_c) / t_w);
        for &xi in x {
            b *= bump(xi / x_w);
        }
        let k_val = full.data[idx];
        if b == 0.0 && k_val == 0.0 {
            return;
        }
        let mv: Vec<f64> = monos.iter().map(|m| mono_val(m, t, x)).collect();
        for a in 0..nm {
            if b != 0.0 {
                for c in 0..nm {
                    gram[a][c] += b * mv[a] * mv[c] * vol;
                }
            }
            rhs[a] -= k_val * mv[a] * vol;
        }
    });
    let coeffs = solve_dense(gram, rhs).ok_or(Error::MomentKillFailure(f64::NAN))?;
    geom.for_each(|idx, t, x, _rho| {
        let mut b = bump((t - t_c) / t_w);
        for &xi in x {
            b *= bump(xi / x_w);
        }
        if b == 0.0 {
            return;
        }
        let mut p = 0.0;
        for (a, m) in monos.iter().enumerate() {
            p += coeffs[a] * mono_val(m, t, x);
        }
        full.data[idx] += b * p;
    });

    // verify the raw moments actually vanish
    let mut worst: f64 = 0.0;
    for m in &monos {
        let mut acc = 0.0;
        geom.for_each(|idx, t, x, _| {
            acc += full.data[idx] * raw_val(m, t, x) * vol;
        });
        worst = worst.max(acc.abs());
    }
    if worst > 1e-8 {
        return Err(Error::MomentKillFailure(worst));
    }

    // dyadic annular pieces: K_n = K·(c_n - c_{n+1}); the outermost piece
    // takes 1 - c_1 and the innermost keeps the whole remaining core, so the
    // weights telescope to 1 everywhere and the sum reproduces K exactly
    let res_scale = 2.0 * (grid.dx() + grid.dt().powf(1.0 / grid.s0 as f64));
    let n_max = (1.0 / res_scale).log2().floor().max(1.0) as usize;
    let c = |n: usize, rho: f64| cutoff(rho * (1u64 << n) as f64);
    let mut pieces = Vec::new();
    for n in 0..=n_max {
        let mut piece = Field::zeros(grid);
        geom.for_each(|idx, _, _, rho| {
            let w = if n == 0 {
                1.0 - c(1, rho)
            } else if n == n_max {
                c(n, rho)
            } else {
                c(n, rho) - c(n + 1, rho)
            };
            if w != 0.0 {
                piece.data[idx] = full.data[idx] * w;
            }
        });
        pieces.push(piece);
    }

    Ok(KernelDecomposition {
        full,
        pieces,
        beta,
        moment_degree,
        radius,
    })
}

impl KernelDecomposition {
    /// Sup-norm of K - ΣK_n (partition-of-unity defect).
    pub fn partition_defect(&self) -> f64 {
        let mut sum = Field::zeros(self.full.grid);
        for p in &self.pieces {
            sum = sum.add(p).unwrap();
        }
        sum.sub(&self.full).unwrap().sup_norm()
    }

    /// Space-time moment ∫K·t^p x^q dz by midpoint quadrature.
    pub fn moment(&self, expo: &[u32]) -> f64 {
        let g = self.full.grid;
        let geom = KernelGeometry { grid: g };
        let vol = g.cell_volume();
        let mut acc = 0.0;
        geom.for_each(|idx, t, x, _| {
            let mut q = t.powi(expo[0] as i32);
            for (i, &e) in expo.iter().skip(1).enumerate() {
                q *= x[i].powi(e as i32);
            }
            acc += self.full.data[idx] * q * vol;
        });
        acc
    }

    /// Least-squares slope of log2 sup|D^k K_n| against n over the interior
    /// pieces; `deriv_axis = 0` means no derivative, `i >= 1` applies the
    /// spatial finite difference along axis i.
    pub fn sup_slope(&self, deriv_axis: usize) -> Result<f64> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (n, p) in self.pieces.iter().enumerate() {
            if n <= 1 || n + 1 == self.pieces.len() {
                // the two outermost pieces carry the cutoff and the moment
                // correction; the innermost one sees the grid scale
                continue;
            }
            let f = if deriv_axis == 0 {
                p.clone()
            } else {
                p.deriv_spatial(deriv_axis)
            };
            let s = f.sup_norm();
            if s > 0.0 {
                xs.push(n as f64);
                ys.push(s.log2());
            }
        }
        if xs.len() < 3 {
            return Err(Error::InsufficientRange {
                needed: 3,
                got: xs.len(),
            });
        }
        Ok(least_squares_slope(&xs, &ys).0)
    }
}

/// Least-squares slope and its standard error for y against x.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - my - slope * (x - mx);
            e * e
        })
        .sum();
    let dof = (xs.len().max(3) - 2) as f64;
    let se = (resid / dof / sxx).sqrt();
    (slope, se)
}

/// R² of the least-squares fit of y against x.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TorusGrid {
        TorusGrid::new(1, 256, 1.0, 512, 0.25).unwrap()
    }

    #[test]
    fn moments_vanish_after_kill() {
        let k = build_kernel(grid(), 2.0, 4).unwrap();
        assert!(k.moment(&[0, 0]).abs() < 1e-8, "mass {}", k.moment(&[0, 0]));
        assert!(k.moment(&[1, 0]).abs() < 1e-8);
        assert!(k.moment(&[0, 2]).abs() < 1e-8);
        assert!(k.moment(&[1, 2]).abs() < 1e-8);
    }

    #[test]
    fn partition_sums_to_kernel() {
        let k = build_kernel(grid(), 2.0, 4).unwrap();
        assert!(k.partition_defect() < 1e-8);
        assert!(k.pieces.len() >= 4);
    }

    #[test]
    fn dyadic_sup_slope_matches_order() {
        // finer time axis so that enough interior dyadic pieces exist
        let g = TorusGrid::new(1, 256, 1.0, 2048, 0.25).unwrap();
        let k = build_kernel(g, 2.0, 4).unwrap();
        // sup|K_n| ~ 2^{((d+2)-beta) n}; d = 1, beta = 2 gives slope 1
        let s = k.sup_slope(0).unwrap();
        assert!((s - 1.0).abs() < 0.3, "slope {s}");
        // one spatial derivative adds +1
        let s1 = k.sup_slope(1).unwrap();
        assert!((s1 - 2.0).abs() < 0.45, "derivative slope {s1}");
    }

    #[test]
    fn pieces_supported_in_shrinking_balls() {
        let k = build_kernel(grid(), 2.0, 4).unwrap();
        let g = grid();
        let geom = KernelGeometry { grid: g };
        for (n, p) in k.pieces.iter().enumerate() {
            let bound = 1.0 / (1u64 << n) as f64;
            let mut worst: f64 = 0.0;
            geom.for_each(|idx, _, _, rho| {
                if p.data[idx] != 0.0 {
                    worst = worst.max(rho);
                }
            });
            assert!(worst <= bound + 1e-12, "piece {n} reaches rho {worst}");
        }
    }

    #[test]
    fn near_origin_matches_free_heat_kernel() {
        // before the cutoff acts and away from wrap-around, K equals the
        // Gaussian heat kernel
        let g = grid();
        let k = build_kernel(g, 2.0, 4).unwrap();
        let it = 3;
        let t = (it as f64 + 0.5) * g.dt();
        for ix in [0usize, 2, 5] {
            let x = g.wrapped_coord(ix);
            let exact = (4.0 * std::f64::consts::PI * t).powf(-0.5)
                * (-x * x / (4.0 * t)).exp();
            let got = k.full.get(it, &[ix]);
            assert!(
                (got - exact).abs() < 1e-6 * exact.max(1.0),
                "K({t},{x}) = {got} vs heat {exact}"
            );
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(build_kernel(grid(), 3.0, 4).is_err());
        assert!(build_kernel(grid(), 2.0, 1).is_err());
    }

    #[test]
    fn monomial_enumeration() {
        // d=1, r=4: t^p x^q with 2p+q <= 4 gives 9 monomials
        assert_eq!(parabolic_monomials(1, 4).len(), 9);
        assert_eq!(parabolic_monomials(2, 2).len(), 7);
    }

    #[test]
    fn linear_fit_helpers() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.1, 4.0, 6.1, 8.0];
        let (s, se) = least_squares_slope(&xs, &ys);
        assert!((s - 1.98).abs() < 0.05);
        assert!(se < 0.1);
        assert!(r_squared(&xs, &ys) > 0.99);
    }
}
