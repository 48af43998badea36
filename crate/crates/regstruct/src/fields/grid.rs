//! Periodic space-time grids and sampled fields.

use crate::error::{Error, Result};
use serde::Serialize;

/// Uniform grid on [0,T] x (R/L Z)^d with parabolic scaling: the time
/// direction counts with exponent s0 (2 for heat-type scaling) in the
/// anisotropic distance |z| = |t|^{1/s0} + sum |x_i|.
#[derive(Clone, Copy, PartialEq, Debug, Serialize)]
pub struct TorusGrid {
    /// spatial dimension
    pub d: usize,
    /// points per spatial axis (power of two)
    pub n: usize,
    /// spatial period L
    pub len: f64,
    /// time steps (power of two)
    pub nt: usize,
    /// time horizon T
    pub t_horizon: f64,
    /// parabolic scaling exponent of the time direction
    pub s0: u32,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize, len: f64, nt: usize, t_horizon: f64) -> Result<Self> {
        if !n.is_power_of_two() || !nt.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid sizes must be powers of two, got n={n}, nt={nt}"
            )));
        }
        if d == 0 || len <= 0.0 || t_horizon <= 0.0 {
            return Err(Error::Config("degenerate grid geometry".into()));
        }
        Ok(TorusGrid {
            d,
            n,
            len,
            nt,
            t_horizon,
            s0: 2,
        })
    }

    pub fn dx(&self) -> f64 {
        self.len / self.n as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_horizon / self.nt as f64
    }

    /// Number of points in one time slice.
    pub fn spatial_points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn points(&self) -> usize {
        self.nt * self.spatial_points()
    }

    /// Volume of one space-time cell (quadrature weight).
    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.dx().powi(self.d as i32)
    }

    /// Anisotropic distance of an offset from the origin; spatial components
    /// are wrapped to the nearest periodic image.
    pub fn par_dist(&self, t_off: f64, x_off: &[f64]) -> f64 {
        let mut r = t_off.abs().powf(1.0 / self.s0 as f64);
        for &x in x_off {
            let mut w = x.abs() % self.len;
            if w > self.len / 2.0 {
                w = self.len - w;
            }
            r += w;
        }
        r
    }

    /// Flat index of (time, spatial multi-index), row-major with time
    /// slowest.
    pub fn index(&self, it: usize, ix: &[usize]) -> usize {
        debug_assert_eq!(ix.len(), self.d);
        let mut s = 0;
        for &i in ix {
            debug_assert!(i < self.n);
            s = s * self.n + i;
        }
        it * self.spatial_points() + s
    }

    /// Spatial multi-index of a flat spatial index.
    pub fn spatial_coords(&self, mut s: usize) -> Vec<usize> {
        let mut ix = vec![0; self.d];
        for i in (0..self.d).rev() {
            ix[i] = s % self.n;
            s /= self.n;
        }
        ix
    }

    /// Signed offset coordinate for a wrapped spatial index: index i maps to
    /// i*dx for i < n/2 and (i-n)*dx otherwise. Kernels are stored this way.
    pub fn wrapped_coord(&self, i: usize) -> f64 {
        if i < self.n / 2 {
            i as f64 * self.dx()
        } else {
            (i as f64 - self.n as f64) * self.dx()
        }
    }
}

/// Real field sampled on a TorusGrid, row-major with time slowest.
#[derive(Clone, PartialEq, Debug)]
pub struct Field {
    pub grid: TorusGrid,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: TorusGrid) -> Self {
        Field {
            grid,
            data: vec![0.0; grid.points()],
        }
    }

    /// Build from a function of (t, x...) evaluated at grid points.
    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(f64, &[f64]) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.points());
        let sp = grid.spatial_points();
        let mut x = vec![0.0; grid.d];
        for it in 0..grid.nt {
            let t = it as f64 * grid.dt();
            for s in 0..sp {
                let ix = grid.spatial_coords(s);
                for (a, &i) in x.iter_mut().zip(&ix) {
                    *a = i as f64 * grid.dx();
                }
                data.push(f(t, &x));
            }
        }
        Field { grid, data }
    }

    pub fn get(&self, it: usize, ix: &[usize]) -> f64 {
        self.data[self.grid.index(it, ix)]
    }

    pub fn set(&mut self, it: usize, ix: &[usize], v: f64) {
        let i = self.grid.index(it, ix);
        self.data[i] = v;
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_grid(other)?;
        Ok(Field {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Field {
        self.map(|v| k * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Space-time integral by the Riemann sum.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// L2 norm squared (quadrature).
    pub fn l2_sq(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// One time slice as a vector of spatial values.
    pub fn time_slice(&self, it: usize) -> &[f64] {
        let sp = self.grid.spatial_points();
        &self.data[it * sp..(it + 1) * sp]
    }

    /// 4th-order central finite difference in spatial direction `axis`
    /// (1-based over the spatial axes to match the symbol convention where
    /// direction 0 is time).
    pub fn deriv_spatial(&self, axis: usize) -> Field {
        assert!(axis >= 1 && axis <= self.grid.d, "spatial axis out of range");
        let a = axis - 1;
        let g = self.grid;
        let n = g.n;
        let sp = g.spatial_points();
        // stride of the axis within a time slice
        let stride = n.pow((g.d - 1 - a) as u32);
        let h = g.dx();
        let mut out = vec![0.0; self.data.len()];
        for it in 0..g.nt {
            let base = it * sp;
            for s in 0..sp {
                let i = (s / stride) % n;
                let line = s - i * stride;
                let at = |j: isize| {
                    let jj = (((i as isize + j) % n as isize) + n as isize) as usize % n;
                    self.data[base + line + jj * stride]
                };
                out[base + s] =
                    (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
            }
        }
        Field { grid: g, data: out }
    }
}
