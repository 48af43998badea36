//! Canonical models from mollified noise: the global map Π over a generated
//! closure, recentring characters f_z, the structure maps Γ_{zz'}, analytic
//! bound checks, renormalised models, smooth-model reconstruction, and the
//! model metric.
//!
//! The realisation keeps one grid field per symbol. Integration symbols are
//! convolutions with the vanishing-moment kernel, derivative symbols are
//! 4th-order finite differences, and products are pointwise. Characters are
//! evaluated lazily per base point through the coproduct tables, so the
//! recentred model Π_z is always the Hopf action Π ∘ Γ̂_{f_z}; the direct
//! Taylor-subtraction route exists as an independent cross-check.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::coeff::q_to_f64;
use crate::error::{Error, Result};
use crate::fields::kernel::least_squares_slope;
use crate::fields::{convolve, pair, Field, KernelDecomposition, TestFunction, TorusGrid};
use crate::hopf::{Character, Gen, HopfAlgebra, TPlusMonomial};
use crate::lincomb::LinComb;
use crate::renorm::RenormMap;
use crate::rules::Closure;
use crate::symbols::{parabolic_degree, MultiIndex, Rat, Symbol};

/// Grid point as (time index, spatial indices).
pub type Point = (usize, Vec<usize>);

fn rat_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Relative admissibility tolerance enforced when a model is rebuilt after
/// renormalisation.
pub const ADMISSIBILITY_TOL: f64 = 1e-6;

/// A model realisation over a generated closure: every symbol carries a grid
/// field, and recentring characters are derived from those fields.
pub struct ModelRealization {
    pub hopf: Rc<HopfAlgebra>,
    pub grid: TorusGrid,
    pub kernel: Rc<KernelDecomposition>,
    /// Closure symbols in homogeneity order.
    pub symbols: Vec<Symbol>,
    xi: Rc<Field>,
    /// Group element composed into the canonical map (identity for the
    /// canonical model itself).
    map: RenormMap<f64>,
    /// Fields of the canonical (unrenormalised) map, extended on demand to
    /// polynomial charts and auxiliary symbols.
    canon: Rc<RefCell<BTreeMap<Symbol, Rc<Field>>>>,
    /// Fields of this model's map (canonical composed with `map`).
    pi_store: RefCell<BTreeMap<Symbol, Rc<Field>>>,
    /// Kernel convolutions K ⋆ Πσ per left-factor symbol.
    conv: RefCell<BTreeMap<Symbol, Rc<Field>>>,
    /// Fully evaluated characters per base point.
    chars: RefCell<BTreeMap<Point, Rc<Character<f64>>>>,
    /// Pairing cache ⟨Πσ, φ_z^λ⟩ keyed by (symbol, centre, λ bits).
    pairs: RefCell<HashMap<(Symbol, Point, u64), f64>>,
}

/// Build the canonical model for a mollified noise realisation.
///
/// The closure list must be homogeneity-sorted (it is, when produced by the
/// rule closure); fields are constructed recursively, so every dependency of
/// a symbol is realised before the symbol itself.
pub fn build_canonical(
    xi_eps: &Field,
    closure: Closure,
    kernel: KernelDecomposition,
) -> Result<ModelRealization> {
    xi_eps.check_grid(&kernel.full)?;
    let symbols = closure.all_symbols();
    let alpha = closure.rules.alpha;
    for w in symbols.windows(2) {
        if w[0].hom_value(alpha) > w[1].hom_value(alpha) {
            return Err(Error::UnresolvedDependency);
        }
    }
    let grid = xi_eps.grid;
    let m = ModelRealization {
        hopf: Rc::new(HopfAlgebra::new(closure)),
        grid,
        kernel: Rc::new(kernel),
        symbols,
        xi: Rc::new(xi_eps.clone()),
        map: RenormMap::identity(),
        canon: Rc::new(RefCell::new(BTreeMap::new())),
        pi_store: RefCell::new(BTreeMap::new()),
        conv: RefCell::new(BTreeMap::new()),
        chars: RefCell::new(BTreeMap::new()),
        pairs: RefCell::new(HashMap::new()),
    };
    m.materialise()?;
    Ok(m)
}

impl ModelRealization {
    fn materialise(&self) -> Result<()> {
        for s in &self.symbols {
            self.get_pi(s)?;
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        rat_f64(self.hopf.alpha())
    }

    pub fn hom(&self, s: &Symbol) -> f64 {
        rat_f64(s.hom_value(self.hopf.alpha()))
    }

    pub fn is_canonical(&self) -> bool {
        self.map.constants.iter().all(|c| *c == 0.0)
    }

    /// Field of the canonical map for an arbitrary symbol (recursive).
    fn canonical_field(&self, s: &Symbol) -> Result<Rc<Field>> {
        if let Some(f) = self.canon.borrow().get(s) {
            return Ok(f.clone());
        }
        let f = match s {
            Symbol::Zero => Field::zeros(self.grid),
            Symbol::One => Field::from_fn(self.grid, |_, _| 1.0),
            Symbol::Poly(k) => chart_field(self.grid, k, 0.0, &vec![0.0; self.grid.d]),
            Symbol::Xi => (*self.xi).clone(),
            Symbol::Integ(t) => {
                let pt = self.canonical_field(t)?;
                convolve(&self.kernel.full, &pt)?
            }
            Symbol::Deriv(i, t) => {
                if *i == 0 {
                    return Err(Error::Config(
                        "time-derivative symbols are not realised on the grid".into(),
                    ));
                }
                self.canonical_field(t)?.deriv_spatial(*i)
            }
            Symbol::Prod(fs) => {
                let mut acc = Field::from_fn(self.grid, |_, _| 1.0);
                for (fac, mult) in fs {
                    let ff = self.canonical_field(fac)?;
                    for _ in 0..*mult {
                        acc = acc.mul(&ff)?;
                    }
                }
                acc
            }
        };
        let rc = Rc::new(f);
        self.canon.borrow_mut().insert(s.clone(), rc.clone());
        Ok(rc)
    }

    /// Field Πσ of this model's map (canonical map composed with the group
    /// element).
    pub fn get_pi(&self, s: &Symbol) -> Result<Rc<Field>> {
        if let Some(f) = self.pi_store.borrow().get(s) {
            return Ok(f.clone());
        }
        let comb = self.map.apply_symbol(s);
        let mut acc = Field::zeros(self.grid);
        for (l, c) in comb.iter() {
            acc = acc.add(&self.canonical_field(l)?.scale(*c))?;
        }
        let rc = Rc::new(acc);
        self.pi_store.borrow_mut().insert(s.clone(), rc.clone());
        Ok(rc)
    }

    /// K ⋆ Πσ, cached.
    fn conv_field(&self, s: &Symbol) -> Result<Rc<Field>> {
        if let Some(f) = self.conv.borrow().get(s) {
            return Ok(f.clone());
        }
        let pi = self.get_pi(s)?;
        let f = convolve(&self.kernel.full, &pi)?;
        let rc = Rc::new(f);
        self.conv.borrow_mut().insert(s.clone(), rc.clone());
        Ok(rc)
    }

    pub fn coords(&self, z: &Point) -> (f64, Vec<f64>) {
        (
            z.0 as f64 * self.grid.dt(),
            z.1.iter().map(|&i| i as f64 * self.grid.dx()).collect(),
        )
    }

    // ----- characters -----

    fn gen_value(&self, z: &Point, g: &Gen, memo: &mut BTreeMap<Gen, f64>) -> Result<f64> {
        if let Some(v) = memo.get(g) {
            return Ok(*v);
        }
        let v = match g {
            Gen::Z(0) => z.0 as f64 * self.grid.dt(),
            Gen::Z(i) => z.1[i - 1] as f64 * self.grid.dx(),
            Gen::J(k, tau) => {
                // f_z(J_k τ) = (D^k K ⋆ Π_z τ)(z), expanded through Δτ.
                let cp = self.hopf.coproduct(tau)?;
                let mut acc = 0.0;
                for ((l, r), c) in cp.iter() {
                    let fr = self.monomial_value(z, r, memo)?;
                    if fr == 0.0 {
                        continue;
                    }
                    let kf = self.conv_field(l)?;
                    acc += q_to_f64(c) * fr * fd_point(&kf, k, z);
                }
                acc
            }
        };
        memo.insert(g.clone(), v);
        Ok(v)
    }

    fn monomial_value(
        &self,
        z: &Point,
        m: &TPlusMonomial,
        memo: &mut BTreeMap<Gen, f64>,
    ) -> Result<f64> {
        let mut acc = 1.0;
        for (g, p) in m.gens() {
            let v = self.gen_value(z, g, memo)?;
            acc *= v.powi(*p as i32);
        }
        Ok(acc)
    }

    /// Fully evaluated recentring character f_z over all supported
    /// generators, cached per base point.
    pub fn characters_at(&self, z: &Point) -> Result<Rc<Character<f64>>> {
        if let Some(c) = self.chars.borrow().get(z) {
            return Ok(c.clone());
        }
        let mut memo = BTreeMap::new();
        let mut ch = Character::counit();
        for g in self.hopf.generators() {
            let v = self.gen_value(z, &g, &mut memo)?;
            ch.set(g, v);
        }
        let rc = Rc::new(ch);
        self.chars.borrow_mut().insert(z.clone(), rc.clone());
        Ok(rc)
    }

    /// Coefficients of Π_zτ on the global fields: Γ̂_{f_z}τ.
    pub fn recenter_comb(&self, tau: &Symbol, z: &Point) -> Result<LinComb<f64>> {
        let cp = self.hopf.coproduct(tau)?;
        let mut memo = BTreeMap::new();
        let mut out = LinComb::zero();
        for ((l, r), c) in cp.iter() {
            let fr = self.monomial_value(z, r, &mut memo)?;
            out.add_term(l.clone(), q_to_f64(c) * fr);
        }
        Ok(out)
    }

    /// The recentred field Π_zτ.
    pub fn recenter(&self, tau: &Symbol, z: &Point) -> Result<Field> {
        let comb = self.recenter_comb(tau, z)?;
        let mut acc = Field::zeros(self.grid);
        for (l, c) in comb.iter() {
            if *c == 0.0 {
                continue;
            }
            acc = acc.add(&self.get_pi(l)?.scale(*c))?;
        }
        Ok(acc)
    }

    /// Evaluate (Π_z τ)(z') without materialising the field.
    pub fn recenter_eval(&self, tau: &Symbol, z: &Point, at: &Point) -> Result<f64> {
        let comb = self.recenter_comb(tau, z)?;
        let mut acc = 0.0;
        for (l, c) in comb.iter() {
            if *c == 0.0 {
                continue;
            }
            acc += *c * self.get_pi(l)?.get(at.0, &at.1);
        }
        Ok(acc)
    }

    /// Independent recentring route for τ = 𝓘(σ): K ⋆ Π_zσ minus its
    /// Taylor jet at z to parabolic order < |σ| + 2. Agreement with
    /// `recenter(𝓘(σ), z)` is the cross-check binding the coproduct
    /// recursion to the analytic definition.
    pub fn taylor_recentred(&self, sigma: &Symbol, z: &Point) -> Result<Field> {
        let pz = self.recenter(sigma, z)?;
        let conv = convolve(&self.kernel.full, &pz)?;
        let bound = self.hom(sigma) + 2.0;
        let (tz, xz) = self.coords(z);
        let mut out = conv.clone();
        for k in multiindices_below(self.grid.d + 1, bound) {
            let mut fact = 1.0;
            for &ki in &k {
                for j in 1..=ki {
                    fact *= j as f64;
                }
            }
            let coeff = fd_point(&conv, &k, z) / fact;
            if coeff == 0.0 {
                continue;
            }
            out = out.sub(&chart_field(self.grid, &k, tz, &xz).scale(coeff))?;
        }
        Ok(out)
    }

    /// The structure map Γ_{zz'} as a character: f_z^{-1} ∘ f_{z'}.
    pub fn gamma_between(&self, z: &Point, z2: &Point) -> Result<Character<f64>> {
        let fz = self.characters_at(z)?;
        let fz2 = self.characters_at(z2)?;
        let inv = self.hopf.char_inverse(&fz)?;
        self.hopf.char_product(&inv, &fz2)
    }

    /// Γ_{zz'}τ as a linear combination of closure symbols.
    pub fn gamma_action_between(
        &self,
        z: &Point,
        z2: &Point,
        tau: &Symbol,
    ) -> Result<LinComb<f64>> {
        let g = self.gamma_between(z, z2)?;
        self.hopf.gamma_action(&g, tau)
    }

    // ----- admissibility -----

    /// Maximum relative admissibility defect over the closure: polynomial
    /// charts, finite-difference derivatives, and kernel convolutions. The
    /// convolution identities are compared after the initial time layer of
    /// one kernel time-support, where the convolution window is complete;
    /// inside that layer the truncated window makes the identity between a
    /// renormalised map and its re-convolved fields meaningless.
    pub fn check_admissibility(&self) -> Result<f64> {
        let g = self.grid;
        let t_supp = self.kernel.radius.powi(g.s0 as i32);
        let it0 = ((t_supp / g.dt()).ceil() as usize).min(g.nt - 1);
        let sup_after = |f: &Field, it0: usize| -> f64 {
            let sp = g.spatial_points();
            f.data[it0 * sp..]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let mut worst = 0.0f64;
        for s in &self.symbols {
            let f = self.get_pi(s)?;
            let (reference, skip) = match s {
                Symbol::Poly(k) => {
                    (chart_field(self.grid, k, 0.0, &vec![0.0; self.grid.d]), 0)
                }
                Symbol::Integ(t) => {
                    let pt = self.get_pi(t)?;
                    (convolve(&self.kernel.full, &pt)?, it0)
                }
                Symbol::Deriv(i, t) if *i >= 1 => (self.get_pi(t)?.deriv_spatial(*i), 0),
                _ => continue,
            };
            let diff = sup_after(&f.sub(&reference)?, skip);
            let scale = sup_after(&f, skip).max(1e-12);
            worst = worst.max(diff / scale);
        }
        Ok(worst)
    }

    // ----- renormalisation -----

    /// Compose the canonical model with a renormalisation-group element and
    /// re-check admissibility of the resulting map.
    pub fn renormalise(&self, m: &RenormMap<f64>) -> Result<ModelRealization> {
        if !self.is_canonical() {
            return Err(Error::Config(
                "renormalise expects the canonical model as base".into(),
            ));
        }
        let new = ModelRealization {
            hopf: self.hopf.clone(),
            grid: self.grid,
            kernel: self.kernel.clone(),
            symbols: self.symbols.clone(),
            xi: self.xi.clone(),
            map: m.clone(),
            canon: self.canon.clone(),
            pi_store: RefCell::new(BTreeMap::new()),
            conv: RefCell::new(BTreeMap::new()),
            chars: RefCell::new(BTreeMap::new()),
            pairs: RefCell::new(HashMap::new()),
        };
        new.materialise()?;
        let defect = new.check_admissibility()?;
        if defect > ADMISSIBILITY_TOL {
            return Err(Error::AdmissibilityFailure(format!(
                "renormalised map defect {:.3e} exceeds {:.1e}",
                defect, ADMISSIBILITY_TOL
            )));
        }
        Ok(new)
    }

    /// Maximum relative defect of the pointwise identity
    /// (Π̂_zτ)(z) = (Π_z Mτ)(z) over the closure and the given points, where
    /// `base` is the canonical model this one was renormalised from.
    pub fn renorm_pointwise_identity(
        &self,
        base: &ModelRealization,
        centres: &[Point],
    ) -> Result<f64> {
        let mut worst = 0.0f64;
        for tau in &self.symbols {
            let mtau = self.map.apply_symbol(tau);
            for z in centres {
                let lhs = self.recenter_eval(tau, z, z)?;
                let mut rhs = 0.0;
                for (s, c) in mtau.iter() {
                    rhs += *c * base.recenter_eval(s, z, z)?;
                }
                let scale = lhs.abs().max(rhs.abs()).max(1.0);
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
        Ok(worst)
    }

    // ----- analytic bounds -----

    fn pair_cached(&self, l: &Symbol, centre: &Point, lambda: f64) -> Result<f64> {
        let key = (l.clone(), centre.clone(), lambda.to_bits());
        if let Some(v) = self.pairs.borrow().get(&key) {
            return Ok(*v);
        }
        let tf = TestFunction::new(centre.clone(), lambda);
        let pf = self.get_pi(l)?;
        let v = pair(&pf, &tf)?;
        self.pairs.borrow_mut().insert(key, v);
        Ok(v)
    }

    /// Test centres for one base point: the centred bump plus a
    /// half-width spatial shift and a half-width temporal shift, which keep
    /// the family inside a comparable parabolic ball while breaking the
    /// symmetry that would otherwise annihilate monomials.
    fn test_centres(&self, z: &Point, lambda: f64) -> Vec<Point> {
        let g = self.grid;
        let mut out = vec![z.clone()];
        let sx = ((lambda / (2.0 * g.dx())).round() as usize) % g.n;
        if sx > 0 {
            let mut ix = z.1.clone();
            ix[0] = (ix[0] + sx) % g.n;
            out.push((z.0, ix));
        }
        let st = (lambda * lambda / (2.0 * g.dt())).round() as usize;
        if st > 0 && z.0 + st < g.nt {
            out.push((z.0 + st, z.1.clone()));
        }
        out
    }

    /// Scaling statistic for one symbol: max over base points and the test
    /// family of |⟨Π_zτ, φ^λ⟩|.
    fn bound_stat(&self, tau: &Symbol, centres: &[Point], lambda: f64) -> Result<f64> {
        let cp = self.hopf.coproduct(tau)?;
        let mut best = 0.0f64;
        for z in centres {
            let mut memo = BTreeMap::new();
            for tc in self.test_centres(z, lambda) {
                let mut acc = 0.0;
                for ((l, r), c) in cp.iter() {
                    let fr = self.monomial_value(z, r, &mut memo)?;
                    if fr == 0.0 {
                        continue;
                    }
                    acc += q_to_f64(c) * fr * self.pair_cached(l, &tc, lambda)?;
                }
                best = best.max(acc.abs());
            }
        }
        Ok(best)
    }

    /// Per-symbol scaling report over a λ ladder: log–log slope of the
    /// pairing statistic, pass threshold slope ≥ |τ| − 0.2, plus the growth
    /// constant of ‖Γ_{zz'}τ‖_β over consecutive centre pairs.
    pub fn check_model_bounds(
        &self,
        lambdas: &[f64],
        centres: &[Point],
    ) -> Result<Vec<SymbolBound>> {
        if lambdas.len() < 4 {
            return Err(Error::InsufficientRange {
                needed: 4,
                got: lambdas.len(),
            });
        }
        let mut out = Vec::new();
        for tau in &self.symbols {
            let hom = self.hom(tau);
            let mut stats = Vec::new();
            for &l in lambdas {
                stats.push(self.bound_stat(tau, centres, l)?);
            }
            let floor = 1e-13;
            let (slope, pass) = if stats.iter().all(|s| *s < floor) {
                (f64::INFINITY, true)
            } else {
                let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
                let ys: Vec<f64> = stats.iter().map(|s| s.max(1e-300).ln()).collect();
                let (slope, _) = least_squares_slope(&xs, &ys);
                (slope, slope >= hom - 0.2)
            };
            // Γ growth over consecutive centre pairs.
            let mut gamma_const = 0.0f64;
            for w in centres.windows(2) {
                let (z, z2) = (&w[0], &w[1]);
                let dist = self.par_point_dist(z, z2);
                if dist <= 0.0 {
                    continue;
                }
                let comb = self.gamma_action_between(z, z2, tau)?;
                for (s, c) in comb.iter() {
                    let hs = self.hom(s);
                    if hs >= hom || *c == 0.0 {
                        continue;
                    }
                    gamma_const = gamma_const.max(c.abs() * dist.powf(hs - hom));
                }
            }
            out.push(SymbolBound {
                symbol: tau.canonical_string(),
                hom,
                lambdas: lambdas.to_vec(),
                stats,
                slope,
                pass,
                gamma_const,
            });
        }
        Ok(out)
    }

    /// Parabolic distance between two grid points with spatial wrap.
    pub fn par_point_dist(&self, a: &Point, b: &Point) -> f64 {
        let g = self.grid;
        let t_off = (a.0 as f64 - b.0 as f64) * g.dt();
        let x_off: Vec<f64> = a
            .1
            .iter()
            .zip(&b.1)
            .map(|(&i, &j)| {
                let mut d = (i as isize - j as isize).rem_euclid(g.n as isize) as f64;
                if d > g.n as f64 / 2.0 {
                    d -= g.n as f64;
                }
                d * g.dx()
            })
            .collect();
        g.par_dist(t_off, &x_off)
    }

    // ----- reconstruction -----

    /// Pointwise reconstruction of a modelled distribution over a smooth
    /// model: (ℛf)(z) = (Π_z f(z))(z).
    pub fn reconstruct_smooth(&self, f: &ModelledDistribution) -> Result<Field> {
        let mut tables: Vec<(&Field, Vec<(Rc<Field>, TPlusMonomial, f64)>)> = Vec::new();
        for (tau, coeff_field) in &f.coeffs {
            coeff_field.check_grid(&self.xi)?;
            let cp = self.hopf.coproduct(tau)?;
            let mut rows = Vec::new();
            for ((l, r), c) in cp.iter() {
                rows.push((self.get_pi(l)?, r.clone(), q_to_f64(c)));
            }
            tables.push((coeff_field, rows));
        }
        let g = self.grid;
        let sp = g.spatial_points();
        let mut out = Field::zeros(g);
        for it in 0..g.nt {
            for s in 0..sp {
                let ix = g.spatial_coords(s);
                let z = (it, ix);
                let mut memo = BTreeMap::new();
                let flat = it * sp + s;
                let mut val = 0.0;
                for (coeff_field, rows) in &tables {
                    let a = coeff_field.data[flat];
                    if a == 0.0 {
                        continue;
                    }
                    for (pf, r, c) in rows {
                        let fr = self.monomial_value(&z, r, &mut memo)?;
                        if fr == 0.0 {
                            continue;
                        }
                        val += a * c * fr * pf.data[flat];
                    }
                }
                out.data[flat] = val;
            }
        }
        Ok(out)
    }

    /// Scaling of the reconstruction defect |⟨ℛf − Π_zf(z), φ_z^λ⟩|:
    /// returns (λs, stats, slope). The expected lower bound on the slope is
    /// γ − 0.2.
    pub fn reconstruction_bound(
        &self,
        f: &ModelledDistribution,
        rf: &Field,
        lambdas: &[f64],
        centres: &[Point],
    ) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        if lambdas.len() < 4 {
            return Err(Error::InsufficientRange {
                needed: 4,
                got: lambdas.len(),
            });
        }
        let mut stats = Vec::new();
        for &l in lambdas {
            let mut best = 0.0f64;
            for z in centres {
                let mut memo = BTreeMap::new();
                for tc in self.test_centres(z, l) {
                    let tf = TestFunction::new(tc.clone(), l);
                    let mut acc = pair(rf, &tf)?;
                    for (tau, coeff_field) in &f.coeffs {
                        let a = coeff_field.get(z.0, &z.1);
                        if a == 0.0 {
                            continue;
                        }
                        let cp = self.hopf.coproduct(tau)?;
                        for ((lsym, r), c) in cp.iter() {
                            let fr = self.monomial_value(z, r, &mut memo)?;
                            if fr == 0.0 {
                                continue;
                            }
                            acc -= a * q_to_f64(c) * fr * self.pair_cached(lsym, &tc, l)?;
                        }
                    }
                    best = best.max(acc.abs());
                }
            }
            stats.push(best);
        }
        let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
        let ys: Vec<f64> = stats.iter().map(|s| s.max(1e-300).ln()).collect();
        let (slope, _) = least_squares_slope(&xs, &ys);
        Ok((lambdas.to_vec(), stats, slope))
    }

    /// The modelled distribution z ↦ Γ_{z z0} τ, a section whose
    /// reconstruction is Π_{z0}τ. Coefficients are evaluated with a
    /// restricted character composition, so the cost per grid point is
    /// proportional to the coproduct table of τ only.
    pub fn section_from_point(
        &self,
        tau: &Symbol,
        z0: &Point,
        gamma: f64,
    ) -> Result<ModelledDistribution> {
        let cp = self.hopf.coproduct(tau)?;
        // Pre-expand (f_z^{-1} ∘ f_{z0})(r) = Σ_{Δ+r} f_z(A l) · f_{z0}(r2)
        // into z-independent rows per distinct right monomial r.
        let mut rows: BTreeMap<TPlusMonomial, Vec<(crate::hopf::PlusComb, f64)>> =
            BTreeMap::new();
        let mut memo0 = BTreeMap::new();
        for ((_, r), _) in cp.iter() {
            if rows.contains_key(r) {
                continue;
            }
            let plus = self.hopf.coproduct_plus(r)?;
            let mut list = Vec::new();
            for ((l, r2), c) in plus.iter() {
                let mut anti = crate::hopf::PlusComb::unit();
                let mut first = true;
                for (g, p) in l.gens() {
                    for _ in 0..*p {
                        let a = self.hopf.antipode(&TPlusMonomial::from_gen(g.clone()))?;
                        anti = if first {
                            first = false;
                            a
                        } else {
                            anti.mul(&a)
                        };
                    }
                }
                let fz0 = self.monomial_value(z0, r2, &mut memo0)?;
                let w = q_to_f64(c) * fz0;
                if w != 0.0 {
                    list.push((anti, w));
                }
            }
            rows.insert(r.clone(), list);
        }
        let g = self.grid;
        let sp = g.spatial_points();
        let mut coeffs: BTreeMap<Symbol, Field> = BTreeMap::new();
        for (l, _) in cp.iter().map(|(lr, c)| (lr.0.clone(), c)) {
            if self.hom(&l) < gamma {
                coeffs.entry(l).or_insert_with(|| Field::zeros(g));
            }
        }
        for it in 0..g.nt {
            for s in 0..sp {
                let ix = g.spatial_coords(s);
                let z = (it, ix);
                let mut memo = BTreeMap::new();
                let flat = it * sp + s;
                for ((l, r), c) in cp.iter() {
                    let Some(cf) = coeffs.get_mut(l) else { continue };
                    let mut h = 0.0;
                    for (anti, w) in &rows[r] {
                        let mut av = 0.0;
                        for (m, q) in anti.iter() {
                            av += q_to_f64(q) * self.monomial_value(&z, m, &mut memo)?;
                        }
                        h += w * av;
                    }
                    cf.data[flat] += q_to_f64(c) * h;
                }
            }
        }
        Ok(ModelledDistribution { gamma, coeffs })
    }

    // ----- model metric -----

    /// Sampled model metric: the recentred-pairing supremum plus the
    /// structure-map supremum over consecutive centre pairs.
    pub fn model_distance(
        &self,
        other: &ModelRealization,
        lambdas: &[f64],
        centres: &[Point],
    ) -> Result<f64> {
        let syms = self.symbols.clone();
        self.model_distance_for(other, &syms, lambdas, centres)
    }

    /// The model metric restricted to a subset of symbols.
    pub fn model_distance_for(
        &self,
        other: &ModelRealization,
        symbols: &[Symbol],
        lambdas: &[f64],
        centres: &[Point],
    ) -> Result<f64> {
        if self.grid != other.grid || self.symbols != other.symbols {
            return Err(Error::GridMismatch(
                "model distance requires a common closure and grid".into(),
            ));
        }
        let mut pi_part = 0.0f64;
        for tau in symbols {
            let hom = self.hom(tau);
            let cp = self.hopf.coproduct(tau)?;
            for z in centres {
                let mut memo_a = BTreeMap::new();
                let mut memo_b = BTreeMap::new();
                for &l in lambdas {
                    for tc in self.test_centres(z, l) {
                        let mut diff = 0.0;
                        for ((lsym, r), c) in cp.iter() {
                            let cf = q_to_f64(c);
                            let fa = self.monomial_value(z, r, &mut memo_a)?;
                            if fa != 0.0 {
                                diff += cf * fa * self.pair_cached(lsym, &tc, l)?;
                            }
                            let fb = other.monomial_value(z, r, &mut memo_b)?;
                            if fb != 0.0 {
                                diff -= cf * fb * other.pair_cached(lsym, &tc, l)?;
                            }
                        }
                        pi_part = pi_part.max(diff.abs() * l.powf(-hom));
                    }
                }
            }
        }
        let mut gamma_part = 0.0f64;
        for tau in symbols {
            let hom = self.hom(tau);
            for w in centres.windows(2) {
                let (z, z2) = (&w[0], &w[1]);
                let dist = self.par_point_dist(z, z2);
                if dist <= 0.0 {
                    continue;
                }
                let ca = self.gamma_action_between(z, z2, tau)?;
                let cb = other.gamma_action_between(z, z2, tau)?;
                let d = ca.sub(&cb);
                for (s, c) in d.iter() {
                    let hs = self.hom(s);
                    if hs >= hom || *c == 0.0 {
                        continue;
                    }
                    gamma_part = gamma_part.max(c.abs() * dist.powf(hs - hom));
                }
            }
        }
        Ok(pi_part + gamma_part)
    }
}

/// A modelled distribution: a coefficient field per symbol of homogeneity
/// below γ.
pub struct ModelledDistribution {
    pub gamma: f64,
    pub coeffs: BTreeMap<Symbol, Field>,
}

impl ModelledDistribution {
    pub fn new(gamma: f64) -> Self {
        ModelledDistribution {
            gamma,
            coeffs: BTreeMap::new(),
        }
    }

    /// Sampled 𝒟^γ seminorm over consecutive centre pairs:
    /// max over β of ‖f(z) − Γ_{zz'}f(z')‖_β / |z−z'|^{γ−β}.
    pub fn seminorm(&self, m: &ModelRealization, centres: &[Point]) -> Result<f64> {
        let mut worst = 0.0f64;
        for w in centres.windows(2) {
            let (z, z2) = (&w[0], &w[1]);
            let dist = m.par_point_dist(z, z2);
            if dist <= 0.0 {
                continue;
            }
            let mut fz = LinComb::zero();
            let mut fz2 = LinComb::zero();
            for (tau, cf) in &self.coeffs {
                fz.add_term(tau.clone(), cf.get(z.0, &z.1));
                fz2.add_term(tau.clone(), cf.get(z2.0, &z2.1));
            }
            let g = m.gamma_between(z, z2)?;
            let mut transported = LinComb::zero();
            for (tau, c) in fz2.iter() {
                if *c == 0.0 {
                    continue;
                }
                transported = transported.add(&m.hopf.gamma_action(&g, tau)?.scale(c));
            }
            let d = fz.sub(&transported);
            for (s, c) in d.iter() {
                let hs = m.hom(s);
                if hs >= self.gamma || *c == 0.0 {
                    continue;
                }
                worst = worst.max(c.abs() / dist.powf(self.gamma - hs));
            }
        }
        Ok(worst)
    }
}

/// Per-symbol analytic-bound report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SymbolBound {
    pub symbol: String,
    pub hom: f64,
    pub lambdas: Vec<f64>,
    pub stats: Vec<f64>,
    pub slope: f64,
    pub pass: bool,
    /// Growth constant of ‖Γ_{zz'}τ‖_β against |z−z'|^{|τ|−β}.
    pub gamma_const: f64,
}

/// Centred monomial chart (t − t_z)^{k_0} Π_i (x_i − x_{z,i})^{k_i} in the
/// fixed global coordinates of the grid (no wrapping).
pub fn chart_field(grid: TorusGrid, k: &[u32], tz: f64, xz: &[f64]) -> Field {
    let k = k.to_vec();
    let xz = xz.to_vec();
    Field::from_fn(grid, move |t, x| {
        let mut v = (t - tz).powi(k[0] as i32);
        for (i, &xi) in x.iter().enumerate() {
            v *= (xi - xz[i]).powi(k[1 + i] as i32);
        }
        v
    })
}

/// All multiindices over `axes` axes with parabolic degree < `bound`.
pub fn multiindices_below(axes: usize, bound: f64) -> Vec<MultiIndex> {
    let mut out = vec![vec![0u32; axes]];
    let cap = bound.ceil() as i64;
    let mut frontier = out.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for k in &frontier {
            for a in 0..axes {
                let mut k2 = k.clone();
                k2[a] += 1;
                if (parabolic_degree(&k2) as f64) < bound
                    && (parabolic_degree(&k2) as i64) <= cap
                    && !out.contains(&k2)
                    && !next.contains(&k2)
                {
                    next.push(k2);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Mixed 4th-order central finite difference of a field at one grid point.
/// Time indices are clamped to the grid, so callers must keep two steps of
/// margin from the time boundary for time derivatives.
pub fn fd_point(f: &Field, k: &[u32], z: &Point) -> f64 {
    fd_point_inner(f, k, z.0 as isize, &z.1.iter().map(|&i| i as isize).collect::<Vec<_>>())
}

fn fd_point_inner(f: &Field, k: &[u32], it: isize, ix: &[isize]) -> f64 {
    let g = f.grid;
    let axis = k.iter().position(|&v| v > 0);
    match axis {
        None => {
            let itc = it.clamp(0, g.nt as isize - 1) as usize;
            let ixw: Vec<usize> = ix
                .iter()
                .map(|&i| i.rem_euclid(g.n as isize) as usize)
                .collect();
            f.get(itc, &ixw)
        }
        Some(a) => {
            let mut k2 = k.to_vec();
            k2[a] -= 1;
            let h = if a == 0 { g.dt() } else { g.dx() };
            let stencil: [(isize, f64); 4] = [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)];
            let mut acc = 0.0;
            for (o, c) in stencil {
                let (it2, ix2) = if a == 0 {
                    (it + o, ix.to_vec())
                } else {
                    let mut v = ix.to_vec();
                    v[a - 1] += o;
                    (it, v)
                };
                acc += c * fd_point_inner(f, &k2, it2, &ix2);
            }
            acc / (12.0 * h)
        }
    }
}

/// Random interior centres: time in [t_lo, t_hi], spatial fraction in
/// [x_lo, x_hi] of the torus length, seeded.
pub fn sample_interior_centres(
    g: TorusGrid,
    num: usize,
    t_lo: f64,
    t_hi: f64,
    x_lo: f64,
    x_hi: f64,
    seed: u64,
) -> Result<Vec<Point>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let lo = (t_lo / g.dt()).ceil() as usize;
    let hi = ((t_hi / g.dt()).floor() as usize).min(g.nt - 1);
    if lo >= hi {
        return Err(Error::InsufficientRange { needed: 1, got: 0 });
    }
    let xl = (x_lo * g.n as f64).ceil() as usize;
    let xh = ((x_hi * g.n as f64).floor() as usize).min(g.n - 1);
    let mut out = Vec::with_capacity(num);
    for _ in 0..num {
        let it = rng.gen_range(lo..=hi);
        let ix: Vec<usize> = (0..g.d).map(|_| rng.gen_range(xl..=xh)).collect();
        out.push((it, ix));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{
        build_kernel_with_radius, lambda_ladder, mollify, sample_white_noise, Mollifier,
    };
    use crate::kpz_symbols as ks;
    use crate::rules::{generate_closure, RuleSet};

    pub fn small_grid() -> TorusGrid {
        TorusGrid::new(1, 64, 1.0, 256, 0.25).unwrap()
    }

    pub fn build_small(seed: u64, eps: f64) -> ModelRealization {
        let g = small_grid();
        let kernel = build_kernel_with_radius(g, 2.0, 4, 0.25).unwrap();
        let xi = mollify(&sample_white_noise(g, seed), &Mollifier::new(eps)).unwrap();
        let closure = generate_closure(&RuleSet::kpz_default()).unwrap();
        build_canonical(&xi, closure, kernel).unwrap()
    }

    fn zero_model() -> ModelRealization {
        let g = small_grid();
        let kernel = build_kernel_with_radius(g, 2.0, 4, 0.25).unwrap();
        let closure = generate_closure(&RuleSet::kpz_default()).unwrap();
        build_canonical(&Field::zeros(g), closure, kernel).unwrap()
    }

    /// Sup over the interior comparison window: t >= t_lo, x fraction in
    /// [x_lo, x_hi].
    fn window_sup(f: &Field, t_lo: f64, x_lo: f64, x_hi: f64) -> f64 {
        let g = f.grid;
        let it0 = (t_lo / g.dt()).ceil() as usize;
        let (i0, i1) = (
            (x_lo * g.n as f64).ceil() as usize,
            (x_hi * g.n as f64).floor() as usize,
        );
        let mut m = 0.0f64;
        for it in it0..g.nt {
            for i in i0..=i1 {
                m = m.max(f.get(it, &[i]).abs());
            }
        }
        m
    }

    fn interior_mean(f: &Field, t_lo: f64) -> f64 {
        let g = f.grid;
        let it0 = (t_lo / g.dt()).ceil() as usize;
        let mut acc = 0.0;
        let mut n = 0usize;
        for it in it0..g.nt {
            for s in f.time_slice(it) {
                acc += s;
                n += 1;
            }
        }
        acc / n as f64
    }

    #[test]
    fn canonical_admissibility_and_products() {
        let m = build_small(11, 0.125);
        assert!(m.check_admissibility().unwrap() < 1e-12);
        // product symbol equals the pointwise square of the derivative field
        let conv = convolve(&m.kernel.full, &m.xi).unwrap();
        let d = conv.deriv_spatial(1);
        let sq = d.mul(&d).unwrap();
        let diff = m.get_pi(&ks::s2()).unwrap().sub(&sq).unwrap().sup_norm();
        assert!(diff < 1e-12, "product identity defect {diff}");
        // noise symbol is the mollified noise exactly
        let dxi = m.get_pi(&Symbol::Xi).unwrap().sub(&m.xi).unwrap().sup_norm();
        assert_eq!(dxi, 0.0);
    }

    #[test]
    fn zero_noise_trivial() {
        let m = zero_model();
        for s in &m.symbols {
            if s.is_polynomial() {
                continue;
            }
            assert_eq!(m.get_pi(s).unwrap().sup_norm(), 0.0, "{}", s.canonical_string());
        }
        let z = (128usize, vec![32usize]);
        let ch = m.characters_at(&z).unwrap();
        for (g, v) in ch.gens() {
            match g {
                Gen::Z(_) => {}
                Gen::J(_, _) => assert_eq!(*v, 0.0),
            }
        }
    }

    #[test]
    fn character_values() {
        let m = build_small(5, 0.125);
        let z = (150usize, vec![40usize]);
        let ch = m.characters_at(&z).unwrap();
        let g = m.grid;
        assert_eq!(ch.get(&Gen::Z(0)), 150.0 * g.dt());
        assert_eq!(ch.get(&Gen::Z(1)), 40.0 * g.dx());
        let conv = convolve(&m.kernel.full, &m.xi).unwrap();
        let j0 = ch.get(&Gen::J(vec![0, 0], Symbol::Xi));
        let want = conv.get(z.0, &z.1);
        assert!((j0 - want).abs() < 1e-12, "{j0} vs {want}");
    }

    #[test]
    fn recentred_fields_vanish_at_base_point() {
        let m = build_small(5, 0.125);
        let z = (150usize, vec![40usize]);
        let vx = m.recenter_eval(&Symbol::poly(vec![0, 1]), &z, &z).unwrap();
        assert!(vx.abs() < 1e-14);
        let vi = m.recenter_eval(&ks::i_xi(), &z, &z).unwrap();
        assert!(vi.abs() < 1e-10, "{vi}");
    }

    #[test]
    fn hopf_recentring_matches_taylor_subtraction() {
        let m = build_small(23, 0.125);
        let z = (180usize, vec![32usize]);
        for sigma in [Symbol::Xi, ks::s1(), ks::s2(), ks::s21()] {
            let tau = Symbol::integ(sigma.clone());
            let a = m.recenter(&tau, &z).unwrap();
            let b = m.taylor_recentred(&sigma, &z).unwrap();
            let diff = window_sup(&a.sub(&b).unwrap(), 0.08, 0.3, 0.7);
            let scale = window_sup(&a, 0.08, 0.3, 0.7).max(1e-12);
            assert!(
                diff / scale < 1e-6,
                "{}: rel defect {:.3e}",
                sigma.canonical_string(),
                diff / scale
            );
        }
    }

    #[test]
    fn algebraic_identities_on_sampled_pairs() {
        let m = build_small(31, 0.125);
        let g = m.grid;
        let centres =
            sample_interior_centres(g, 9, 0.08, 0.23, 0.3, 0.7, 404).unwrap();
        for w in centres.windows(3) {
            let (z, z2, z3) = (&w[0], &w[1], &w[2]);
            for tau in &m.symbols {
                // transport identity: recentring at z of the transported
                // symbol equals recentring at z'
                let gz = m.gamma_action_between(z, z2, tau).unwrap();
                let mut lhs = LinComb::zero();
                for (s, c) in gz.iter() {
                    lhs = lhs.add(&m.recenter_comb(s, z).unwrap().scale(c));
                }
                let rhs = m.recenter_comb(tau, z2).unwrap();
                let d = lhs.sub(&rhs);
                let scale = rhs.iter().map(|(_, c)| c.abs()).fold(1.0f64, f64::max);
                for (s, c) in d.iter() {
                    assert!(
                        c.abs() / scale < 1e-8,
                        "transport {} -> {}: {:.3e}",
                        tau.canonical_string(),
                        s.canonical_string(),
                        c.abs() / scale
                    );
                }
                // cocycle identity
                let g23 = m.gamma_action_between(z2, z3, tau).unwrap();
                let mut co = LinComb::zero();
                for (s, c) in g23.iter() {
                    co = co.add(&m.gamma_action_between(z, z2, s).unwrap().scale(c));
                }
                let direct = m.gamma_action_between(z, z3, tau).unwrap();
                let d2 = co.sub(&direct);
                let scale2 = direct.iter().map(|(_, c)| c.abs()).fold(1.0f64, f64::max);
                for (s, c) in d2.iter() {
                    assert!(
                        c.abs() / scale2 < 1e-8,
                        "cocycle {} -> {}: {:.3e}",
                        tau.canonical_string(),
                        s.canonical_string(),
                        c.abs() / scale2
                    );
                }
            }
        }
    }

    #[test]
    fn model_bound_slopes_small_grid() {
        let m = build_small(47, 0.125);
        let g = m.grid;
        let lambdas = lambda_ladder(0.0625, 0.25);
        assert!(lambdas.len() >= 4);
        let centres =
            sample_interior_centres(g, 12, 0.08, 0.17, 0.3, 0.6, 99).unwrap();
        let report = m.check_model_bounds(&lambdas, &centres).unwrap();
        let find = |name: &str| {
            report
                .iter()
                .find(|b| b.symbol == name)
                .unwrap_or_else(|| panic!("missing {name}"))
        };
        let one = find("1");
        assert!(one.pass, "unit symbol slope {}", one.slope);
        let x1 = find("X^(0,1)");
        assert!(x1.pass && (x1.slope - 1.0).abs() < 0.2, "X slope {}", x1.slope);
        let xt = find("X^(1,0)");
        assert!(xt.pass && (xt.slope - 2.0).abs() < 0.3, "t slope {}", xt.slope);
        let x2 = find("X^(0,2)");
        assert!(x2.pass && (x2.slope - 2.0).abs() < 0.3, "X^2 slope {}", x2.slope);
        // the mollification scale of this coarse fixture sits inside the λ
        // window, so slopes of noise-built symbols are crossover artifacts
        // here; the λ ≥ 4ε regime is exercised on the fine acceptance grid.
        for b in &report {
            assert!(b.gamma_const.is_finite());
            assert!(b.stats.iter().all(|s| s.is_finite()));
        }
        // too few scales is an error
        assert!(matches!(
            m.check_model_bounds(&lambdas[..3], &centres),
            Err(Error::InsufficientRange { .. })
        ));
    }

    #[test]
    fn renormalisation_identities() {
        let m = build_small(61, 0.125);
        // identity map leaves every field unchanged
        let id = m.renormalise(&RenormMap::identity()).unwrap();
        for s in &m.symbols {
            let d = m
                .get_pi(s)
                .unwrap()
                .sub(&id.get_pi(s).unwrap())
                .unwrap()
                .sup_norm();
            assert_eq!(d, 0.0);
        }
        // subtracting the empirical mean of the squared-slope symbol
        let c1 = interior_mean(&m.get_pi(&ks::s2()).unwrap(), 0.08);
        let mm = RenormMap::new([0.0, c1, 0.0, 0.0]);
        let r = m.renormalise(&mm).unwrap();
        let want = m.get_pi(&ks::s2()).unwrap().map(|v| v - c1);
        let d = r.get_pi(&ks::s2()).unwrap().sub(&want).unwrap().sup_norm();
        assert!(d < 1e-12);
        assert!(r.check_admissibility().unwrap() < ADMISSIBILITY_TOL);
        // pointwise renormalised-recentring identity
        let centres =
            sample_interior_centres(m.grid, 8, 0.08, 0.23, 0.3, 0.7, 7).unwrap();
        let defect = r.renorm_pointwise_identity(&m, &centres).unwrap();
        assert!(defect < 1e-8, "pointwise renorm defect {defect}");
    }

    #[test]
    fn reconstruction_of_polynomial_sections() {
        let m = build_small(71, 0.125);
        let g = m.grid;
        let g0 = Field::from_fn(g, |t, x| (2.0 * std::f64::consts::PI * x[0]).sin() * (-t).exp());
        let g1 = Field::from_fn(g, |t, x| t + x[0]);
        let mut f = ModelledDistribution::new(1.5);
        f.coeffs.insert(Symbol::One, g0.clone());
        f.coeffs.insert(Symbol::poly(vec![0, 1]), g1);
        let rf = m.reconstruct_smooth(&f).unwrap();
        // the centred monomial coefficient does not contribute at the base
        // point, so the reconstruction is the zeroth coefficient
        assert!(rf.sub(&g0).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn reconstruction_of_transported_symbol() {
        // fine grid with near-grid-scale mollification: the defect statistics
        // must be read at scales where the recentred field is still in its
        // power-law regime, well below the scale where its local growth
        // saturates at the global sup
        let g = TorusGrid::new(1, 128, 1.0, 4096, 0.25).unwrap();
        let kernel = build_kernel_with_radius(g, 2.0, 4, 0.25).unwrap();
        let white = sample_white_noise(g, 83);
        let xi = mollify(&white, &Mollifier::new(2.0 / 128.0)).unwrap();
        let closure = generate_closure(&RuleSet::kpz_default()).unwrap();
        let m = build_canonical(&xi, closure, kernel).unwrap();
        let z0 = (2720usize, vec![66usize]);
        // 𝓘(⟨1⟩) carries a first-order jet, so its transported section has a
        // genuine chart coefficient
        let tau = ks::i1();
        let f = m.section_from_point(&tau, &z0, 2.6).unwrap();
        assert!(f.coeffs.contains_key(&Symbol::poly(vec![0, 1])));
        let rf = m.reconstruct_smooth(&f).unwrap();
        let want = m.recenter(&tau, &z0).unwrap();
        let diff = rf.sub(&want).unwrap().sup_norm();
        let scale = want.sup_norm().max(1e-12);
        assert!(diff / scale < 1e-6, "rel defect {:.3e}", diff / scale);
        // truncating between the chart homogeneity (1) and the symbol
        // homogeneity (1.49) drops exactly the top coefficient, so the
        // reconstruction defect decays with the homogeneity of the dropped
        // symbol and in particular faster than the order-γ bound requires
        let ftr = m.section_from_point(&tau, &z0, 1.2).unwrap();
        assert!(ftr.coeffs.contains_key(&Symbol::poly(vec![0, 1])));
        assert!(!ftr.coeffs.contains_key(&tau));
        let rtr = m.reconstruct_smooth(&ftr).unwrap();
        let lambdas = lambda_ladder(0.022, 0.0625);
        let centres = sample_interior_centres(m.grid, 8, 0.08, 0.17, 0.3, 0.6, 12).unwrap();
        let (_, stats, slope) = m
            .reconstruction_bound(&ftr, &rtr, &lambdas, &centres)
            .unwrap();
        assert!(stats.iter().all(|s| *s > 1e-10));
        assert!(slope >= 1.0, "truncated-section defect slope {slope}");
    }

    #[test]
    fn model_distance_properties() {
        let m = build_small(91, 0.125);
        let lambdas = lambda_ladder(0.0625, 0.25);
        let centres =
            sample_interior_centres(m.grid, 6, 0.08, 0.17, 0.3, 0.6, 5).unwrap();
        let d0 = m.model_distance(&m, &lambdas, &centres).unwrap();
        assert_eq!(d0, 0.0);
        // grids must match
        let g2 = TorusGrid::new(1, 32, 1.0, 128, 0.25).unwrap();
        let kernel = build_kernel_with_radius(g2, 2.0, 4, 0.25).unwrap();
        let closure = generate_closure(&RuleSet::kpz_default()).unwrap();
        let other = build_canonical(&Field::zeros(g2), closure, kernel).unwrap();
        assert!(matches!(
            m.model_distance(&other, &lambdas, &centres),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn coupled_epsilon_ladder_distances() {
        // one master noise realisation, mollified at every rung
        let g = TorusGrid::new(1, 256, 1.0, 1024, 0.25).unwrap();
        let white = sample_white_noise(g, 2024);
        let build = |e: f64| {
            let xi = mollify(&white, &Mollifier::new(e)).unwrap();
            let closure = generate_closure(&RuleSet::kpz_default()).unwrap();
            let kernel = build_kernel_with_radius(g, 2.0, 4, 0.25).unwrap();
            build_canonical(&xi, closure, kernel).unwrap()
        };
        // test scales sit above every fine-ladder rung, and the centre window
        // keeps all test supports clear of the initial layer where the
        // truncated kernel convolution and the mollifier see the zero padding
        let lambdas = lambda_ladder(0.125, 0.25);
        let centres = sample_interior_centres(g, 6, 0.13, 0.15, 0.3, 0.6, 5).unwrap();
        let sym2 = vec![ks::s2()];
        // coarse rungs, where the divergent mean of the second-order symbol
        // is still in its 1/ε growth regime on this grid: unrenormalised
        // consecutive distances do not decrease
        let coarse: Vec<ModelRealization> = [0.5, 0.25, 0.125].iter().map(|&e| build(e)).collect();
        let d_unren: Vec<f64> = coarse
            .windows(2)
            .map(|w| {
                w[0].model_distance_for(&w[1], &sym2, &lambdas, &centres)
                    .unwrap()
            })
            .collect();
        // fine rungs below the test scales: renormalising with the per-scale
        // empirical constants makes consecutive distances shrink
        let fine: Vec<ModelRealization> = [0.125, 0.125 / std::f64::consts::SQRT_2, 0.0625]
            .iter()
            .map(|&e| build(e))
            .collect();
        let renormalise = |m: &ModelRealization| {
            let c0 = interior_mean(&m.get_pi(&ks::s11()).unwrap(), 0.08);
            let c1 = interior_mean(&m.get_pi(&ks::s2()).unwrap(), 0.08);
            let c2 = interior_mean(&m.get_pi(&ks::s40()).unwrap(), 0.08);
            let c3 = interior_mean(&m.get_pi(&ks::s211()).unwrap(), 0.08);
            m.renormalise(&RenormMap::new([c0, c1, c2, c3])).unwrap()
        };
        let ren: Vec<ModelRealization> = fine.iter().map(renormalise).collect();
        let d_fine_unren: Vec<f64> = fine
            .windows(2)
            .map(|w| {
                w[0].model_distance_for(&w[1], &sym2, &lambdas, &centres)
                    .unwrap()
            })
            .collect();
        let d_ren: Vec<f64> = ren
            .windows(2)
            .map(|w| {
                w[0].model_distance_for(&w[1], &sym2, &lambdas, &centres)
                    .unwrap()
            })
            .collect();
        println!("unrenormalised coarse-ladder distances: {d_unren:?}");
        println!("unrenormalised fine-ladder distances: {d_fine_unren:?}");
        println!("renormalised fine-ladder distances: {d_ren:?}");
        assert!(d_unren[1] >= d_unren[0], "{d_unren:?}");
        assert!(d_ren[1] < d_ren[0], "{d_ren:?}");
        assert!(d_ren[0] < d_fine_unren[0] && d_ren[1] < d_fine_unren[1]);
    }
}

