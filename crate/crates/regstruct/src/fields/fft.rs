//! Fast periodic convolution: FFT along every spatial axis (periodic) and a
//! zero-padded FFT along time, so time behaves as convolution on the line
//! with fields supported in [0, T].

use super::grid::Field;
use crate::error::Result;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// In-place n-dimensional FFT over a row-major buffer with the given shape.
pub fn fft_nd(data: &mut [Complex<f64>], shape: &[usize], inverse: bool) {
    assert_eq!(data.len(), shape.iter().product::<usize>());
    let mut planner = FftPlanner::new();
    for (axis, &len) in shape.iter().enumerate() {
        if len == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let block = stride * len;
        let mut line = vec![Complex::new(0.0, 0.0); len];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * block + s;
                for j in 0..len {
                    line[j] = data[base + j * stride];
                }
                fft.process(&mut line);
                for j in 0..len {
                    data[base + j * stride] = line[j];
                }
            }
        }
    }
}

/// Space-time convolution `(K * f)(t,x) = ∫ K(s,y) f(t-s, x-y) dy ds` by
/// quadrature. The kernel's time index j represents the offset
/// `(j - shift_back)·Δt`, so causal kernels use `shift_back = 0` and kernels
/// centred in time store their negative-offset samples at the front with
/// `shift_back = half-width`. f is treated as zero outside [0, T].
pub fn convolve_shifted(kernel: &Field, f: &Field, shift_back: usize) -> Result<Field> {
    kernel.check_grid(f)?;
    let g = kernel.grid;
    let sp = g.spatial_points();
    let pt = 2 * g.nt; // padded time length: no circular wrap of the sum
    let mut shape = vec![pt];
    shape.extend(std::iter::repeat(g.n).take(g.d));
    let total = pt * sp;

    let mut kb = vec![Complex::new(0.0, 0.0); total];
    let mut fb = vec![Complex::new(0.0, 0.0); total];
    for it in 0..g.nt {
        for s in 0..sp {
            kb[it * sp + s].re = kernel.data[it * sp + s];
            fb[it * sp + s].re = f.data[it * sp + s];
        }
    }
    fft_nd(&mut kb, &shape, false);
    fft_nd(&mut fb, &shape, false);
    for (a, b) in kb.iter_mut().zip(&fb) {
        *a *= b;
    }
    fft_nd(&mut kb, &shape, true);

    let scale = g.cell_volume() / total as f64;
    let mut out = Field::zeros(g);
    for it in 0..g.nt {
        let src = it + shift_back; // undo the kernel's time shift
        if src >= pt {
            continue;
        }
        for s in 0..sp {
            out.data[it * sp + s] = kb[src * sp + s].re * scale;
        }
    }
    Ok(out)
}

/// Convolution with a causal kernel (supported in t >= 0).
pub fn convolve(kernel: &Field, f: &Field) -> Result<Field> {
    convolve_shifted(kernel, f, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::grid::TorusGrid;

    fn small_grid() -> TorusGrid {
        TorusGrid::new(1, 16, 1.0, 8, 0.5).unwrap()
    }

    /// Direct O(n^2) reference convolution for oracle purposes.
    fn direct(kernel: &Field, f: &Field, shift_back: usize) -> Field {
        let g = kernel.grid;
        let mut out = Field::zeros(g);
        for it in 0..g.nt {
            for ix in 0..g.n {
                let mut acc = 0.0;
                for js in 0..g.nt {
                    let s = js as isize - shift_back as isize;
                    let tt = it as isize - s;
                    if tt < 0 || tt >= g.nt as isize {
                        continue;
                    }
                    for jy in 0..g.n {
                        let xx = (ix + g.n - jy) % g.n;
                        acc += kernel.get(js, &[jy]) * f.get(tt as usize, &[xx]);
                    }
                }
                out.set(it, &[ix], acc * g.cell_volume());
            }
        }
        out
    }

    #[test]
    fn matches_direct_sum() {
        let g = small_grid();
        let mut rng_state = 1234u64;
        let mut rnd = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64 - 0.5
        };
        let k = Field::from_fn(g, |_, _| rnd());
        let f = Field::from_fn(g, |_, _| rnd());
        for shift in [0usize, 3] {
            let fast = convolve_shifted(&k, &f, shift).unwrap();
            let slow = direct(&k, &f, shift);
            assert!(fast.sub(&slow).unwrap().sup_norm() < 1e-12);
        }
    }

    #[test]
    fn delta_kernel_reproduces_field() {
        let g = small_grid();
        let mut k = Field::zeros(g);
        // delta at the origin with quadrature weight 1
        k.set(0, &[0], 1.0 / g.cell_volume());
        let f = Field::from_fn(g, |t, x| (t + x[0]).sin());
        let c = convolve(&k, &f).unwrap();
        assert!(c.sub(&f).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn convolution_with_zero() {
        let g = small_grid();
        let k = Field::from_fn(g, |t, x| t + x[0]);
        let z = Field::zeros(g);
        assert_eq!(convolve(&k, &z).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn derivative_commutes_with_convolution() {
        // spatial finite differences are translation combinations, so they
        // commute with the discrete convolution exactly
        let g = TorusGrid::new(1, 32, 1.0, 8, 0.5).unwrap();
        let tau = 0.07;
        let k = Field::from_fn(g, |t, x| {
            let w = if x[0] < 0.5 { x[0] } else { x[0] - 1.0 };
            (-t / tau).exp() * (-w * w / 0.01).exp()
        });
        let f = Field::from_fn(g, |t, x| (6.28 * x[0]).sin() * (1.0 + t));
        let a = convolve(&k, &f).unwrap().deriv_spatial(1);
        let b = convolve(&k, &f.deriv_spatial(1)).unwrap();
        assert!(a.sub(&b).unwrap().sup_norm() < 1e-10 * a.sup_norm().max(1.0));
    }

    #[test]
    fn fft_roundtrip() {
        let shape = [4usize, 8, 8];
        let n: usize = shape.iter().product();
        let mut data: Vec<Complex<f64>> =
            (0..n).map(|i| Complex::new((i % 17) as f64, 0.0)).collect();
        let orig = data.clone();
        fft_nd(&mut data, &shape, false);
        fft_nd(&mut data, &shape, true);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a.re / n as f64 - b.re).abs() < 1e-10);
            assert!((a.im / n as f64).abs() < 1e-10);
        }
    }
}
