//! Linear combinations of symbols over a generic coefficient ring.

use crate::coeff::Coeff;
use crate::symbols::{Rat, Symbol};
use std::collections::BTreeMap;
use std::fmt;

/// Finite linear combination of canonical symbols; zero coefficients are
/// never stored and the zero symbol is absorbed.
#[derive(Clone, PartialEq, Debug)]
pub struct LinComb<C: Coeff> {
    terms: BTreeMap<Symbol, C>,
}

impl<C: Coeff> Default for LinComb<C> {
    fn default() -> Self {
        LinComb {
            terms: BTreeMap::new(),
        }
    }
}

impl<C: Coeff> LinComb<C> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn single(s: Symbol, c: C) -> Self {
        let mut l = Self::zero();
        l.add_term(s, c);
        l
    }

    pub fn from_symbol(s: Symbol) -> Self {
        Self::single(s, C::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, &C)> {
        self.terms.iter()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &Symbol> {
        self.terms.keys()
    }

    pub fn coeff(&self, s: &Symbol) -> C {
        self.terms.get(s).cloned().unwrap_or_else(C::zero)
    }

    pub fn add_term(&mut self, s: Symbol, c: C) {
        let s = s.canonical();
        if s.is_zero() || c.is_zero() {
            return;
        }
        let entry = self.terms.entry(s.clone()).or_insert_with(C::zero);
        *entry = entry.add(&c);
        if entry.is_zero() {
            self.terms.remove(&s);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (s, c) in &other.terms {
            out.add_term(s.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = Self::zero();
        for (s, c) in &self.terms {
            out.add_term(s.clone(), c.neg());
        }
        out
    }

    pub fn scale(&self, k: &C) -> Self {
        let mut out = Self::zero();
        for (s, c) in &self.terms {
            out.add_term(s.clone(), c.mul(k));
        }
        out
    }

    /// Bilinear product; symbol products are canonicalised.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (s1, c1) in &self.terms {
            for (s2, c2) in &other.terms {
                let p = Symbol::prod(vec![s1.clone(), s2.clone()]);
                out.add_term(p, c1.mul(c2));
            }
        }
        out
    }

    /// Apply integration symbol-wise; polynomial symbols integrate to zero.
    pub fn integ(&self) -> Self {
        let mut out = Self::zero();
        for (s, c) in &self.terms {
            out.add_term(Symbol::integ(s.clone()), c.clone());
        }
        out
    }

    /// Coefficient-correct derivative in direction i (Leibniz on products,
    /// `d/dx_i X^k = k_i X^(k - e_i)`).
    pub fn deriv(&self, i: usize) -> Self {
        let mut out = Self::zero();
        for (s, c) in &self.terms {
            for (ds, factor) in symbol_deriv(s, i) {
                out.add_term(ds, c.mul(&C::from_int(factor)));
            }
        }
        out
    }

    /// Keep only terms with homogeneity strictly below `cap`.
    pub fn truncate_below(&self, alpha: Rat, cap: Rat) -> Self {
        self.filter(|s| s.hom_value(alpha) < cap)
    }

    /// Keep only terms with homogeneity <= `cap`.
    pub fn truncate_at(&self, alpha: Rat, cap: Rat) -> Self {
        self.filter(|s| s.hom_value(alpha) <= cap)
    }

    pub fn filter(&self, mut pred: impl FnMut(&Symbol) -> bool) -> Self {
        let mut out = Self::zero();
        for (s, c) in &self.terms {
            if pred(s) {
                out.add_term(s.clone(), c.clone());
            }
        }
        out
    }

    /// Apply a symbol-level linear map and collect the results.
    pub fn map_terms(&self, mut f: impl FnMut(&Symbol, &C) -> Self) -> Self {
        let mut out = Self::zero();
        for (s, c) in &self.terms {
            out = out.add(&f(s, c));
        }
        out
    }

    /// Convert the coefficient ring.
    pub fn map_coeffs<D: Coeff>(&self, mut f: impl FnMut(&C) -> D) -> LinComb<D> {
        let mut out = LinComb::zero();
        for (s, c) in &self.terms {
            out.add_term(s.clone(), f(c));
        }
        out
    }
}

/// Derivative of a single symbol as a list of (symbol, integer factor).
fn symbol_deriv(s: &Symbol, i: usize) -> Vec<(Symbol, i64)> {
    match s {
        Symbol::Zero | Symbol::One => vec![],
        Symbol::Poly(k) => {
            if i < k.len() && k[i] > 0 {
                let mut k2 = k.clone();
                k2[i] -= 1;
                vec![(Symbol::poly(k2), k[i] as i64)]
            } else {
                vec![]
            }
        }
        Symbol::Integ(_) => vec![(Symbol::deriv(i, s.clone()), 1)],
        // Derivatives of Xi or of iterated derivatives do not occur in the
        // generated sets; keep them as formal symbols for totality.
        Symbol::Xi | Symbol::Deriv(_, _) => {
            vec![(Symbol::Deriv(i, Box::new(s.clone())), 1)]
        }
        Symbol::Prod(factors) => {
            let mut out = Vec::new();
            for (j, (f, m)) in factors.iter().enumerate() {
                for (df, c) in symbol_deriv(f, i) {
                    let mut parts: Vec<(Symbol, u32)> = Vec::new();
                    for (jj, (g, n)) in factors.iter().enumerate() {
                        let n = if jj == j { n - 1 } else { *n };
                        if n > 0 {
                            parts.push((g.clone(), n));
                        }
                    }
                    parts.push((df, 1));
                    let sym = Symbol::Prod(parts).canonical();
                    out.push((sym, c * (*m as i64)));
                }
            }
            out
        }
    }
}

impl<C: Coeff> fmt::Display for LinComb<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (s, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:?})*{}", c, s)?;
        }
        Ok(())
    }
}
