//! Formal symbols: the basis of the model space.
//!
//! A symbol is a decorated-tree expression built from polynomial symbols
//! `X^k`, the noise symbol `Xi`, integration `I(.)`, spatial/temporal
//! derivatives `D_i(.)` and commutative products. Canonical forms make
//! structural equality meaningful, and homogeneity is computed exactly as
//! `p + q*alpha` with `alpha` the homogeneity of the noise symbol.

use num::rational::Ratio;
use serde::Serialize;
use std::fmt;

/// Exact rational used for homogeneity arithmetic.
pub type Rat = Ratio<i64>;

/// Multiindex over the d+1 space-time coordinates; index 0 is time.
pub type MultiIndex = Vec<u32>;

/// Parabolic (anisotropic) degree of a multiindex: time counts double.
pub fn parabolic_degree(k: &[u32]) -> u32 {
    let mut deg = 0;
    for (i, &ki) in k.iter().enumerate() {
        deg += if i == 0 { 2 * ki } else { ki };
    }
    deg
}

/// Plain (isotropic) degree of a multiindex.
pub fn plain_degree(k: &[u32]) -> u32 {
    k.iter().sum()
}

/// A formal symbol. Construct freely, then call [`Symbol::canonical`].
///
/// `Zero` is the absorbing zero symbol (e.g. the result of integrating a
/// polynomial symbol); it never appears inside generated symbol sets.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Symbol {
    Zero,
    /// The empty product / polynomial symbol of degree zero.
    One,
    Poly(MultiIndex),
    Xi,
    Integ(Box<Symbol>),
    Deriv(usize, Box<Symbol>),
    /// Commutative product; factors with multiplicities, kept sorted by
    /// canonical string. Factors are never themselves `Prod`, `One` or
    /// degenerate.
    Prod(Vec<(Symbol, u32)>),
}

impl Symbol {
    /// `X^k`, collapsing the zero multiindex to `One`.
    pub fn poly(k: MultiIndex) -> Symbol {
        if k.iter().all(|&x| x == 0) {
            Symbol::One
        } else {
            Symbol::Poly(k)
        }
    }

    /// `X_i` in d+1 coordinates (i = 0 is time).
    pub fn x(i: usize, d: usize) -> Symbol {
        let mut k = vec![0u32; d + 1];
        k[i] = 1;
        Symbol::Poly(k)
    }

    pub fn integ(s: Symbol) -> Symbol {
        Symbol::Integ(Box::new(s)).canonical()
    }

    pub fn deriv(i: usize, s: Symbol) -> Symbol {
        Symbol::Deriv(i, Box::new(s)).canonical()
    }

    pub fn prod(factors: Vec<Symbol>) -> Symbol {
        Symbol::Prod(factors.into_iter().map(|f| (f, 1)).collect()).canonical()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Symbol::Zero)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Symbol::One)
    }

    /// True for `One` and `Poly` (purely polynomial content).
    pub fn is_polynomial(&self) -> bool {
        matches!(self, Symbol::One | Symbol::Poly(_))
    }

    /// The multiindex of a polynomial symbol, if it is one.
    pub fn poly_index(&self, d: usize) -> Option<MultiIndex> {
        match self {
            Symbol::One => Some(vec![0; d + 1]),
            Symbol::Poly(k) => Some(k.clone()),
            _ => None,
        }
    }

    /// Canonical form: nested products flattened, polynomial factors merged
    /// by adding multiindices, factors sorted by canonical string, single
    /// factors collapsed, `I(X^k) = 0`, `D_i` of polynomial symbols reduced.
    ///
    /// Note: canonicalisation is a map on symbols, not on linear
    /// combinations, so `D_i X^k` reduces to `X^(k - e_i)` *without* the
    /// combinatorial factor `k_i`; coefficient-correct differentiation lives
    /// on [`crate::lincomb::LinComb`].
    pub fn canonical(&self) -> Symbol {
        match self {
            Symbol::Zero => Symbol::Zero,
            Symbol::One => Symbol::One,
            Symbol::Xi => Symbol::Xi,
            Symbol::Poly(k) => Symbol::poly(k.clone()),
            Symbol::Integ(s) => {
                let s = s.canonical();
                if s.is_zero() || s.is_polynomial() {
                    // I(X^k) = 0: polynomial symbols need no new integral.
                    Symbol::Zero
                } else {
                    Symbol::Integ(Box::new(s))
                }
            }
            Symbol::Deriv(i, s) => {
                let s = s.canonical();
                match s {
                    Symbol::Zero => Symbol::Zero,
                    Symbol::One => Symbol::Zero,
                    Symbol::Poly(mut k) => {
                        if *i < k.len() && k[*i] > 0 {
                            k[*i] -= 1;
                            Symbol::poly(k)
                        } else {
                            Symbol::Zero
                        }
                    }
                    other => Symbol::Deriv(*i, Box::new(other)),
                }
            }
            Symbol::Prod(factors) => {
                let mut poly_acc: Option<MultiIndex> = None;
                let mut flat: Vec<(Symbol, u32)> = Vec::new();
                let mut stack: Vec<(Symbol, u32)> = factors
                    .iter()
                    .map(|(s, m)| (s.canonical(), *m))
                    .collect();
                while let Some((s, m)) = stack.pop() {
                    if m == 0 {
                        continue;
                    }
                    match s {
                        Symbol::Zero => return Symbol::Zero,
                        Symbol::One => {}
                        Symbol::Poly(k) => {
                            let acc = poly_acc.get_or_insert_with(|| vec![0; k.len()]);
                            if acc.len() < k.len() {
                                acc.resize(k.len(), 0);
                            }
                            for (i, &ki) in k.iter().enumerate() {
                                acc[i] += ki * m;
                            }
                        }
                        Symbol::Prod(inner) => {
                            for (f, n) in inner {
                                stack.push((f, n * m));
                            }
                        }
                        other => flat.push((other, m)),
                    }
                }
                if let Some(k) = poly_acc {
                    let p = Symbol::poly(k);
                    if !p.is_one() {
                        flat.push((p, 1));
                    }
                }
                // Merge equal factors, then sort by canonical string.
                flat.sort();
                let mut merged: Vec<(Symbol, u32)> = Vec::new();
                for (s, m) in flat {
                    match merged.last_mut() {
                        Some((prev, n)) if *prev == s => *n += m,
                        _ => merged.push((s, m)),
                    }
                }
                merged.sort_by(|a, b| {
                    a.0.canonical_string().cmp(&b.0.canonical_string())
                });
                match merged.len() {
                    0 => Symbol::One,
                    1 if merged[0].1 == 1 => merged.into_iter().next().unwrap().0,
                    _ => Symbol::Prod(merged),
                }
            }
        }
    }

    /// Exact homogeneity as (p, q) with value p + q*alpha.
    /// Returns `None` for the zero symbol.
    pub fn homogeneity(&self) -> Option<Homogeneity> {
        match self {
            Symbol::Zero => None,
            Symbol::One => Some(Homogeneity::new(Rat::from_integer(0), 0)),
            Symbol::Poly(k) => Some(Homogeneity::new(
                Rat::from_integer(parabolic_degree(k) as i64),
                0,
            )),
            Symbol::Xi => Some(Homogeneity::new(Rat::from_integer(0), 1)),
            Symbol::Integ(s) => {
                let h = s.homogeneity()?;
                Some(Homogeneity::new(h.p + Rat::from_integer(2), h.q))
            }
            Symbol::Deriv(i, s) => {
                let h = s.homogeneity()?;
                let dec = if *i == 0 { 2 } else { 1 };
                Some(Homogeneity::new(h.p - Rat::from_integer(dec), h.q))
            }
            Symbol::Prod(factors) => {
                let mut p = Rat::from_integer(0);
                let mut q = 0u32;
                for (s, m) in factors {
                    let h = s.homogeneity()?;
                    p += h.p * Rat::from_integer(*m as i64);
                    q += h.q * m;
                }
                Some(Homogeneity::new(p, q))
            }
        }
    }

    /// Homogeneity evaluated at a concrete rational alpha.
    pub fn hom_value(&self, alpha: Rat) -> Rat {
        self.homogeneity()
            .map(|h| h.eval(alpha))
            .expect("homogeneity of the zero symbol is undefined")
    }

    /// Stable string form, used for export and for the product factor order.
    ///
    /// Grammar: "Xi", "X^(k0,k1,...)", "I(t)", "D_i(t)", factors joined by
    /// "*" with repeated factors printed "t^n"; the unit is "1".
    pub fn canonical_string(&self) -> String {
        match self {
            Symbol::Zero => "0".to_string(),
            Symbol::One => "1".to_string(),
            Symbol::Xi => "Xi".to_string(),
            Symbol::Poly(k) => {
                let inner: Vec<String> = k.iter().map(|x| x.to_string()).collect();
                format!("X^({})", inner.join(","))
            }
            Symbol::Integ(s) => format!("I({})", s.canonical_string()),
            Symbol::Deriv(i, s) => format!("D_{}({})", i, s.canonical_string()),
            Symbol::Prod(factors) => {
                let parts: Vec<String> = factors
                    .iter()
                    .map(|(s, m)| {
                        let base = s.canonical_string();
                        if *m == 1 {
                            base
                        } else {
                            format!("{}^{}", base, m)
                        }
                    })
                    .collect();
                parts.join("*")
            }
        }
    }

    /// Check the derivative discipline: `D_i` applied only to `I(.)` or
    /// polynomial symbols (enforced for user-supplied symbols).
    pub fn deriv_discipline_ok(&self) -> bool {
        match self {
            Symbol::Deriv(_, s) => {
                matches!(**s, Symbol::Integ(_) | Symbol::Poly(_) | Symbol::One)
                    && s.deriv_discipline_ok()
            }
            Symbol::Integ(s) => s.deriv_discipline_ok(),
            Symbol::Prod(fs) => fs.iter().all(|(s, _)| s.deriv_discipline_ok()),
            _ => true,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical_string())
    }
}

/// Exact homogeneity p + q*alpha.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub struct Homogeneity {
    /// Polynomial part (exact rational).
    #[serde(serialize_with = "ser_rat")]
    pub p: Rat,
    /// Number of noise symbols.
    pub q: u32,
}

fn ser_rat<S: serde::Serializer>(r: &Rat, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(2))?;
    m.serialize_entry("num", r.numer())?;
    m.serialize_entry("den", r.denom())?;
    m.end()
}

impl Homogeneity {
    pub fn new(p: Rat, q: u32) -> Self {
        Homogeneity { p, q }
    }

    pub fn eval(&self, alpha: Rat) -> Rat {
        self.p + alpha * Rat::from_integer(self.q as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha_kpz() -> Rat {
        // alpha = -3/2 - 1/100
        Rat::new(-151, 100)
    }

    #[test]
    fn product_order_independence() {
        let a = Symbol::prod(vec![Symbol::Xi, Symbol::x(1, 1)]);
        let b = Symbol::prod(vec![Symbol::x(1, 1), Symbol::Xi]);
        assert_eq!(a, b);
        assert_eq!(a.canonical_string(), b.canonical_string());
    }

    #[test]
    fn integ_of_polynomial_is_zero() {
        let z = Symbol::integ(Symbol::poly(vec![1, 2]));
        assert!(z.is_zero());
        assert!(Symbol::integ(Symbol::One).is_zero());
    }

    #[test]
    fn nested_products_flatten() {
        let ab = Symbol::prod(vec![Symbol::Xi, Symbol::integ(Symbol::Xi)]);
        let abc = Symbol::prod(vec![ab.clone(), Symbol::x(1, 1)]);
        let flat = Symbol::prod(vec![
            Symbol::Xi,
            Symbol::integ(Symbol::Xi),
            Symbol::x(1, 1),
        ]);
        assert_eq!(abc, flat);
        // flattened: no Prod factor is itself a Prod
        if let Symbol::Prod(fs) = &abc {
            assert!(fs.iter().all(|(s, _)| !matches!(s, Symbol::Prod(_))));
        } else {
            panic!("expected product");
        }
    }

    #[test]
    fn canonicalize_idempotent() {
        let s = Symbol::prod(vec![
            Symbol::integ(Symbol::Xi),
            Symbol::integ(Symbol::Xi),
            Symbol::poly(vec![0, 1]),
            Symbol::poly(vec![1, 0]),
        ]);
        assert_eq!(s.canonical(), s);
    }

    #[test]
    fn poly_factors_merge() {
        let s = Symbol::prod(vec![Symbol::poly(vec![0, 1]), Symbol::poly(vec![1, 2])]);
        assert_eq!(s, Symbol::Poly(vec![1, 3]));
    }

    #[test]
    fn homogeneity_x_xi() {
        // |X_i Xi| = alpha + 1
        let s = Symbol::prod(vec![Symbol::x(1, 1), Symbol::Xi]);
        let h = s.homogeneity().unwrap();
        assert_eq!(h.p, Rat::from_integer(1));
        assert_eq!(h.q, 1);
        assert_eq!(s.hom_value(alpha_kpz()), Rat::new(-51, 100));
    }

    #[test]
    fn homogeneity_three_alpha_plus_eight() {
        // |I(Xi)^2 * I(X_i * D_j I(Xi))| = 3*alpha + 8
        let inner = Symbol::prod(vec![
            Symbol::x(1, 1),
            Symbol::deriv(1, Symbol::integ(Symbol::Xi)),
        ]);
        let s = Symbol::prod(vec![
            Symbol::integ(Symbol::Xi),
            Symbol::integ(Symbol::Xi),
            Symbol::integ(inner),
        ]);
        let h = s.homogeneity().unwrap();
        assert_eq!(h.p, Rat::from_integer(8));
        assert_eq!(h.q, 3);
    }

    #[test]
    fn homogeneity_of_noise_is_alpha() {
        let h = Symbol::Xi.homogeneity().unwrap();
        assert_eq!(h.p, Rat::from_integer(0));
        assert_eq!(h.q, 1);
    }

    #[test]
    fn homogeneity_additive_under_products() {
        let a = Symbol::integ(Symbol::Xi);
        let b = Symbol::deriv(1, Symbol::integ(Symbol::Xi));
        let ab = Symbol::prod(vec![a.clone(), b.clone()]);
        let ha = a.homogeneity().unwrap();
        let hb = b.homogeneity().unwrap();
        let hab = ab.homogeneity().unwrap();
        assert_eq!(hab.p, ha.p + hb.p);
        assert_eq!(hab.q, ha.q + hb.q);
    }

    #[test]
    fn deriv_of_time_coordinate_counts_double() {
        let xt = Symbol::x(0, 1); // X_0, parabolic degree 2
        assert_eq!(
            xt.homogeneity().unwrap().p,
            Rat::from_integer(2)
        );
        let d = Symbol::deriv(0, Symbol::integ(Symbol::Xi));
        assert_eq!(d.homogeneity().unwrap().p, Rat::from_integer(0));
    }

    #[test]
    fn deriv_of_poly_reduces() {
        let s = Symbol::deriv(1, Symbol::poly(vec![0, 2]));
        assert_eq!(s, Symbol::Poly(vec![0, 1]));
        assert!(Symbol::deriv(1, Symbol::poly(vec![1, 0])).is_zero());
    }

    #[test]
    fn repeated_factors_print_as_powers() {
        let s = Symbol::prod(vec![
            Symbol::integ(Symbol::Xi),
            Symbol::integ(Symbol::Xi),
        ]);
        assert_eq!(s.canonical_string(), "I(Xi)^2");
    }

    #[test]
    fn deriv_discipline() {
        assert!(Symbol::deriv(1, Symbol::integ(Symbol::Xi)).deriv_discipline_ok());
        let bad = Symbol::Deriv(1, Box::new(Symbol::Xi));
        assert!(!bad.deriv_discipline_ok());
    }
}
