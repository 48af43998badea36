//! Scaled test functions, the distributional pairing, and Hölder-exponent
//! estimation from the scaling of |⟨f, φ_z^λ⟩|.

use super::fft::convolve;
use super::grid::{Field, TorusGrid};
use super::kernel::{least_squares_slope, KernelDecomposition};
use super::noise::{mollify, sample_white_noise, Mollifier};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Anisotropically rescaled bump φ_z^λ with the parabolic prefactor
/// λ^{-d-2}; the base profile is the fixed polynomial bump (1-u²)⁴ per
/// direction, normalised to unit mass. With `moment_kill = Some(r)` the
/// profile is replaced on the grid by its projection annihilating all
/// sampled parabolic monomials of degree ≤ r (the Zygmund-type class used
/// for positive regularity).
#[derive(Clone, Debug)]
pub struct TestFunction {
    /// centre as (time index, spatial indices)
    pub centre: (usize, Vec<usize>),
    pub lambda: f64,
    pub moment_kill: Option<u32>,
}

fn bump(u: f64) -> f64 {
    let w = 1.0 - u * u;
    if w <= 0.0 {
        0.0
    } else {
        w.powi(4)
    }
}

/// 1D mass of the bump profile: ∫(1-u²)⁴ du = 256/315.
const BUMP_MASS: f64 = 256.0 / 315.0;

struct Window {
    /// time indices and spatial index offsets covered by the support
    t_range: (isize, isize),
    x_half: isize,
}

impl TestFunction {
    pub fn new(centre: (usize, Vec<usize>), lambda: f64) -> Self {
        TestFunction {
            centre,
            lambda,
            moment_kill: None,
        }
    }

    pub fn with_moment_kill(mut self, r: u32) -> Self {
        self.moment_kill = Some(r);
        self
    }

    fn window(&self, g: TorusGrid) -> Window {
        let l = self.lambda;
        let th = (l * l / g.dt()).ceil() as isize;
        let xh = (l / g.dx()).ceil() as isize;
        Window {
            t_range: (-th, th),
            x_half: xh,
        }
    }

    fn check_scale(&self, g: TorusGrid) -> Result<()> {
        if self.lambda < 2.0 * g.dx() || self.lambda * self.lambda < 2.0 * g.dt() {
            return Err(Error::ScaleTooFine {
                scale: self.lambda,
                needed: (2.0 * g.dx()).max((2.0 * g.dt()).sqrt()),
            });
        }
        Ok(())
    }

    /// Profile values and the grid offsets of the support, as parallel
    /// vectors: (time index, flat spatial index, value, scaled coords).
    fn samples(&self, g: TorusGrid) -> Result<Vec<(usize, usize, f64, Vec<f64>)>> {
        self.check_scale(g)?;
        let l = self.lambda;
        let w = self.window(g);
        let norm = l.powi(-(g.d as i32) - g.s0 as i32) / BUMP_MASS.powi(g.d as i32 + 1);
        let (it0, ix0) = (&self.centre.0, &self.centre.1);
        let mut out = Vec::new();
        let side = (2 * w.x_half + 1) as usize;
        let boxes = side.pow(g.d as u32);
        let mut offs = vec![0isize; g.d];
        for flat in 0..boxes {
            let mut rest = flat;
            for a in (0..g.d).rev() {
                offs[a] = (rest % side) as isize - w.x_half;
                rest /= side;
            }
            let mut vx = 1.0;
            for &o in &offs {
                vx *= bump(o as f64 * g.dx() / l);
            }
            if vx == 0.0 {
                continue;
            }
            let mut sflat = 0usize;
            for (a, &o) in offs.iter().enumerate() {
                let i =
                    ((ix0[a] as isize + o) % g.n as isize + g.n as isize) as usize % g.n;
                sflat = sflat * g.n + i;
            }
            for jt in w.t_range.0..=w.t_range.1 {
                let it = *it0 as isize + jt;
                if it < 0 || it >= g.nt as isize {
                    continue; // field is zero outside [0,T]
                }
                let ut = jt as f64 * g.dt() / (l * l);
                let vt = bump(ut);
                if vt == 0.0 {
                    continue;
                }
                let mut coords = Vec::with_capacity(g.d + 1);
                coords.push(ut);
                for &o in &offs {
                    coords.push(o as f64 * g.dx() / l);
                }
                out.push((it as usize, sflat, vt * vx * norm, coords));
            }
        }
        Ok(finish_moment_kill(self, g, out))
    }
}

/// Replace the bump profile b by b·(m* − p), where m* is a parabolic-degree
/// r+1 monomial and p its b-weighted projection onto degree ≤ r. The result
/// annihilates every sampled polynomial of parabolic degree ≤ r exactly on
/// the grid (discrete Gram–Schmidt against the quadrature inner product).
fn finish_moment_kill(
    tf: &TestFunction,
    g: TorusGrid,
    mut samples: Vec<(usize, usize, f64, Vec<f64>)>,
) -> Vec<(usize, usize, f64, Vec<f64>)> {
    let r = match tf.moment_kill {
        None => return samples,
        Some(r) => r,
    };
    // monomials in the scaled window coordinates, parabolic degree <= r
    let mut monos: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..=g.d {
        let mut next = Vec::new();
        for p in &monos {
            let used: u32 = p
                .iter()
                .enumerate()
                .map(|(i, &e)| if i == 0 { 2 * e } else { e })
                .sum();
            let wgt = if p.is_empty() { 2 } else { 1 };
            let mut e = 0;
            while used + wgt * e <= r {
                let mut v = p.clone();
                v.push(e);
                next.push(v);
                e += 1;
            }
        }
        monos = next;
    }
    monos.retain(|m| m.len() == g.d + 1);
    let nm = monos.len();
    let eval = |m: &[u32], c: &[f64]| -> f64 {
        m.iter()
            .zip(c)
            .map(|(&e, &u)| u.powi(e as i32))
            .product()
    };
    // target monomial of the next parabolic degree: x_1^{r+1}
    let mut target = vec![0u32; g.d + 1];
    target[1] = r + 1;
    let mut gram = vec![vec![0.0; nm]; nm];
    let mut mom = vec![0.0; nm];
    for (_, _, v, c) in &samples {
        let mv: Vec<f64> = monos.iter().map(|m| eval(m, c)).collect();
        let tv = eval(&target, c);
        for a in 0..nm {
            mom[a] += v * tv * mv[a];
            for b in 0..nm {
                gram[a][b] += v * mv[a] * mv[b];
            }
        }
    }
    if let Some(coef) = super::kernel_solve(gram, mom) {
        for (_, _, v, c) in samples.iter_mut() {
            let mut p = eval(&target, c);
            for (a, m) in monos.iter().enumerate() {
                p -= coef[a] * eval(m, c);
            }
            *v *= p;
        }
    }
    samples
}

/// Quadrature pairing ⟨f, φ_z^λ⟩.
pub fn pair(f: &Field, tf: &TestFunction) -> Result<f64> {
    let g = f.grid;
    let sp = g.spatial_points();
    let vol = g.cell_volume();
    let mut acc = 0.0;
    for (it, s, v, _) in tf.samples(g)? {
        acc += f.data[it * sp + s] * v;
    }
    Ok(acc * vol)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct HolderReport {
    pub lambdas: Vec<f64>,
    /// max over centres of |⟨f, φ_z^λ⟩| per λ
    pub stats: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
}

/// λ ladder between lo and hi: dyadic when that gives at least 4 scales,
/// √2-spaced otherwise.
pub fn lambda_ladder(lo: f64, hi: f64) -> Vec<f64> {
    let mut dyadic = Vec::new();
    let mut l = hi;
    while l >= lo * (1.0 - 1e-12) {
        dyadic.push(l);
        l /= 2.0;
    }
    if dyadic.len() >= 4 {
        return dyadic;
    }
    let mut out = Vec::new();
    let mut l = hi;
    while l >= lo * (1.0 - 1e-12) {
        out.push(l);
        l /= std::f64::consts::SQRT_2;
    }
    out
}

/// Random grid centres with the time coordinate at least `t_margin` away
/// from both time boundaries.
pub fn sample_centres(
    g: TorusGrid,
    num: usize,
    t_margin: f64,
    seed: u64,
) -> Result<Vec<(usize, Vec<usize>)>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let lo = (t_margin / g.dt()).ceil() as usize;
    let hi = g.nt - lo;
    if lo >= hi {
        return Err(Error::InsufficientRange { needed: 1, got: 0 });
    }
    let mut out = Vec::with_capacity(num);
    for _ in 0..num {
        let it = rng.gen_range(lo..hi);
        let ix: Vec<usize> = (0..g.d).map(|_| rng.gen_range(0..g.n)).collect();
        out.push((it, ix));
    }
    Ok(out)
}

/// Hölder-exponent estimate: the log-log slope of the max-over-centres
/// pairing statistic against λ.
pub fn holder_exponent(
    f: &Field,
    lambdas: &[f64],
    num_centres: usize,
    moment_kill: Option<u32>,
    seed: u64,
) -> Result<HolderReport> {
    if lambdas.len() < 4 {
        return Err(Error::InsufficientRange {
            needed: 4,
            got: lambdas.len(),
        });
    }
    let g = f.grid;
    let lmax = lambdas.iter().cloned().fold(0.0_f64, f64::max);
    let centres = sample_centres(g, num_centres, lmax * lmax, seed)?;
    let mut stats = Vec::new();
    for &l in lambdas {
        let mut m = 0.0_f64;
        for c in &centres {
            let mut tf = TestFunction::new(c.clone(), l);
            if let Some(r) = moment_kill {
                tf = tf.with_moment_kill(r);
            }
            m = m.max(pair(f, &tf)?.abs());
        }
        stats.push(m);
    }
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = stats.iter().map(|s| s.max(1e-300).ln()).collect();
    let (slope, stderr) = least_squares_slope(&xs, &ys);
    Ok(HolderReport {
        lambdas: lambdas.to_vec(),
        stats,
        slope,
        stderr,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct MultiplicationReport {
    pub alpha: f64,
    pub beta: f64,
    pub eps: Vec<f64>,
    /// estimator distance between consecutive products
    pub distances: Vec<f64>,
    /// pointwise variance proxy (spatial mean of the squared product)
    pub variances: Vec<f64>,
    pub cauchy: bool,
}

/// Products of mollified model fields along an ε ladder: Cauchy behaviour is
/// expected iff α + β > 0.
pub fn multiplication_demo(
    grid: TorusGrid,
    kernel: &KernelDecomposition,
    alpha: f64,
    beta: f64,
    eps_ladder: &[f64],
    seed: u64,
) -> Result<MultiplicationReport> {
    let xi = sample_white_noise(grid, seed);
    let realise = |target: f64, eps: f64| -> Result<Field> {
        let xe = mollify(&xi, &Mollifier::new(eps))?;
        if target > 0.0 {
            convolve(&kernel.full, &xe)
        } else {
            Ok(xe)
        }
    };
    let mut products = Vec::new();
    let mut variances = Vec::new();
    for &e in eps_ladder {
        let f = realise(alpha, e)?;
        let h = realise(beta, e)?;
        let p = f.mul(&h)?;
        let mean_sq = p.data.iter().map(|v| v * v).sum::<f64>() / p.data.len() as f64;
        variances.push(mean_sq);
        products.push(p);
    }
    let reg = alpha.min(beta);
    let lambdas = lambda_ladder(1.0 / 16.0, 0.25);
    let mut distances = Vec::new();
    for w in products.windows(2) {
        let diff = w[1].sub(&w[0])?;
        let rep = holder_exponent(&diff, &lambdas, 32, None, seed ^ 0x9e37)?;
        // estimator distance: worst lambda^{-reg}-weighted pairing
        let d = rep
            .lambdas
            .iter()
            .zip(&rep.stats)
            .map(|(l, s)| s / l.powf(reg))
            .fold(0.0_f64, f64::max);
        distances.push(d);
    }
    let cauchy = distances.windows(2).all(|w| w[1] <= w[0]);
    Ok(MultiplicationReport {
        alpha,
        beta,
        eps: eps_ladder.to_vec(),
        distances,
        variances,
        cauchy,
    })
}
