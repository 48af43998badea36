//! The renormalisation group: nilpotent contraction generators L0..L3 on the
//! KPZ symbol basis, exponentials M = exp(-Σ C_i L_i), the abstract
//! fixed-point expansion of the KPZ equation, and the mechanical derivation
//! of the renormalised equation's counterterms.

use crate::coeff::{q_int, Coeff, Q};
use crate::error::{Error, Result};
use crate::formal::{FormalPoly, VAR_C0, VAR_C1, VAR_C2, VAR_C3, VAR_H, VAR_HPRIME};
use crate::kpz_symbols as ks;
use crate::lincomb::LinComb;
use crate::rules::{generate_closure, RuleKind, RuleSet};
use crate::symbols::{Rat, Symbol};

/// The contraction table of generator `i` on the KPZ basis; zero on every
/// symbol not listed. Each generator strictly lowers the noise multiplicity,
/// which makes Σ C_i L_i nilpotent on the finite basis.
pub fn generator_table(i: usize) -> Vec<(Symbol, LinComb<Q>)> {
    let one = |s: Symbol| LinComb::single(s, q_int(1));
    let unit = LinComb::single(Symbol::One, q_int(1));
    match i {
        0 => vec![
            (ks::s11(), unit.clone()),
            (ks::s21(), LinComb::single(ks::s1(), q_int(2))),
            (ks::s211(), {
                let mut l = LinComb::single(ks::s11(), q_int(2));
                l.add_term(ks::s20(), q_int(1));
                l
            }),
            (ks::i21(), LinComb::single(ks::i1(), q_int(2))),
            (ks::s210(), LinComb::single(ks::s10(), q_int(2))),
        ],
        1 => vec![(ks::s2(), unit)],
        2 => vec![(ks::s40(), unit)],
        3 => vec![(ks::s211(), one(Symbol::One))],
        _ => vec![],
    }
}

/// Apply generator `i` to a symbol of the KPZ closure.
pub fn apply_generator(i: usize, t: &Symbol) -> Result<LinComb<Q>> {
    let closure = generate_closure(&RuleSet::kpz_default())?;
    if !closure.contains(t) {
        return Err(Error::UnknownSymbol(t.canonical_string()));
    }
    Ok(apply_generator_unchecked(i, t))
}

fn apply_generator_unchecked(i: usize, t: &Symbol) -> LinComb<Q> {
    for (src, out) in generator_table(i) {
        if &src == t {
            return out;
        }
    }
    LinComb::zero()
}

/// A renormalisation-group element with coefficients in any ring (reals for
/// the numeric pipeline, formal polynomials for the symbolic derivation).
#[derive(Clone, Debug)]
pub struct RenormMap<C: Coeff> {
    pub constants: [C; 4],
}

impl<C: Coeff> RenormMap<C> {
    pub fn new(constants: [C; 4]) -> Self {
        RenormMap { constants }
    }

    pub fn identity() -> Self {
        RenormMap {
            constants: [C::zero(), C::zero(), C::zero(), C::zero()],
        }
    }

    /// A = Σ C_i L_i applied to a linear combination.
    fn generator_sum(&self, l: &LinComb<C>) -> LinComb<C> {
        let mut out = LinComb::zero();
        for (s, c) in l.iter() {
            for i in 0..4 {
                if self.constants[i].is_zero() {
                    continue;
                }
                let li = apply_generator_unchecked(i, s);
                let contrib = li
                    .map_coeffs(|q| C::from_q(q))
                    .scale(&self.constants[i].mul(c));
                out = out.add(&contrib);
            }
        }
        out
    }

    /// M = exp(-A); the series terminates because the generators strictly
    /// lower homogeneity on the graded basis.
    pub fn apply(&self, l: &LinComb<C>) -> LinComb<C> {
        let mut out = l.clone();
        let mut power = l.clone();
        let mut n: i64 = 0;
        let mut factorial: i64 = 1;
        loop {
            power = self.generator_sum(&power);
            if power.is_empty() {
                break;
            }
            n += 1;
            factorial *= n;
            let sign = if n % 2 == 1 { -1 } else { 1 };
            let coeff = C::from_q(&(q_int(sign) / q_int(factorial)));
            out = out.add(&power.scale(&coeff));
            if n > 8 {
                // generators are nilpotent of low order; this cannot happen
                // unless the table is corrupted
                panic!("renormalisation generators failed to nilpotent-terminate");
            }
        }
        out
    }

    pub fn apply_symbol(&self, t: &Symbol) -> LinComb<C> {
        self.apply(&LinComb::from_symbol(t.clone()))
    }
}

/// Formal renormalisation map with constants C0..C3 as indeterminates.
pub fn formal_renorm_map() -> RenormMap<FormalPoly> {
    RenormMap::new([
        FormalPoly::var(VAR_C0),
        FormalPoly::var(VAR_C1),
        FormalPoly::var(VAR_C2),
        FormalPoly::var(VAR_C3),
    ])
}

/// The abstract fixed-point data: the jet expansion H, its derivative DH
/// and the equation's right-hand side truncated at homogeneity <= 0.
#[derive(Clone, Debug)]
pub struct FixedPointExpansion {
    pub h: LinComb<FormalPoly>,
    pub dh: LinComb<FormalPoly>,
    pub rhs: LinComb<FormalPoly>,
}

/// Iterate the abstract fixed-point map to its finite fixed point below the
/// truncation. For KPZ: H -> I((DH)^2 + Xi) + h*1 + h'*X_1; for the quartic
/// model: H -> I(-H^3 + Xi) + h*1.
pub fn expand_fixed_point(rules: &RuleSet) -> Result<FixedPointExpansion> {
    let alpha = rules.alpha;
    let cap = rules.gamma_cap;
    let h_var = FormalPoly::var(VAR_H);
    let hp_var = FormalPoly::var(VAR_HPRIME);
    let xi = LinComb::<FormalPoly>::from_symbol(Symbol::Xi);

    let mut h = LinComb::<FormalPoly>::zero();
    let depth_limit = 20;
    for _ in 0..depth_limit {
        let rhs_full = match rules.kind {
            RuleKind::Kpz => {
                let dh = h.deriv(1);
                dh.mul(&dh).add(&xi)
            }
            RuleKind::Phi4 | RuleKind::Generic => {
                let h3 = h.mul(&h).mul(&h);
                h3.neg().add(&xi)
            }
        };
        // only integrate terms that survive the truncation
        let integrable = rhs_full
            .filter(|s| s.hom_value(alpha) + Rat::from_integer(2) < cap);
        let mut next = integrable.integ();
        next.add_term(Symbol::One, h_var.clone());
        if rules.kind == RuleKind::Kpz {
            next.add_term(Symbol::x(1, rules.d), hp_var.clone());
        }
        let next = next.truncate_below(alpha, cap);
        if next == h {
            let dh = match rules.kind {
                RuleKind::Kpz => h.deriv(1),
                _ => h.clone(),
            };
            let rhs_exact = match rules.kind {
                RuleKind::Kpz => dh.mul(&dh).add(&xi),
                _ => h.mul(&h).mul(&h).neg().add(&xi),
            };
            let rhs = rhs_exact.truncate_at(alpha, Rat::from_integer(0));
            return Ok(FixedPointExpansion { h, dh, rhs });
        }
        h = next;
    }
    Err(Error::NonStabilising)
}

/// Result of rewriting the renormalised right-hand side in terms of
/// (M DH)^2, Xi, M DH and the unit symbol.
#[derive(Clone, Debug)]
pub struct Counterterms {
    /// Coefficient of the transport term M DH.
    pub gradient_coeff: FormalPoly,
    /// Additive constant (coefficient of the unit symbol).
    pub constant_coeff: FormalPoly,
    /// Terms not absorbed by the template (expected empty).
    pub residual: LinComb<FormalPoly>,
}

/// Apply the renormalisation map to the fixed-point right-hand side and
/// extract the renormalised equation's coefficients.
pub fn derive_counterterms(
    rules: &RuleSet,
    constants: [FormalPoly; 4],
) -> Result<Counterterms> {
    let exp = expand_fixed_point(rules)?;
    let alpha = rules.alpha;
    let zero = Rat::from_integer(0);
    let m = RenormMap::new(constants);

    let m_rhs = m.apply(&exp.rhs);
    let m_dh = m.apply(&exp.dh);
    let m_dh_sq = m_dh.mul(&m_dh).truncate_at(alpha, zero);
    let m_dh_trunc = m_dh.truncate_at(alpha, zero);

    let mut rem = m_rhs
        .sub(&m_dh_sq)
        .sub(&LinComb::from_symbol(Symbol::Xi));

    // The transport coefficient is read off the gradient symbol, whose
    // coefficient in M DH is exactly 1.
    let gradient_coeff = rem.coeff(&ks::s1());
    rem = rem.sub(&m_dh_trunc.scale(&gradient_coeff));
    let constant_coeff = rem.coeff(&Symbol::One);
    let residual = rem.sub(&LinComb::single(Symbol::One, constant_coeff.clone()));

    if residual.symbols().any(|s| s.hom_value(alpha) <= zero) && !residual.is_empty()
    {
        return Err(Error::TemplateMismatch(format!("{}", residual)));
    }
    Ok(Counterterms {
        gradient_coeff,
        constant_coeff,
        residual,
    })
}
