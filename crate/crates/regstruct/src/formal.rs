//! Multivariate polynomials with exact rational coefficients in the formal
//! scalars that appear in the abstract fixed-point expansion and the
//! renormalisation map: h, h' and the constants C0..C3.

use crate::coeff::{q_int, Coeff, Q};
use num::One;
use std::collections::BTreeMap;
use std::fmt;

pub const NVARS: usize = 6;
pub const VAR_NAMES: [&str; NVARS] = ["h", "h'", "C0", "C1", "C2", "C3"];

pub const VAR_H: usize = 0;
pub const VAR_HPRIME: usize = 1;
pub const VAR_C0: usize = 2;
pub const VAR_C1: usize = 3;
pub const VAR_C2: usize = 4;
pub const VAR_C3: usize = 5;

/// Exponent vector for one monomial.
pub type Expo = [u8; NVARS];

/// Polynomial in (h, h', C0..C3) over the rationals.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct FormalPoly {
    terms: BTreeMap<Expo, Q>,
}

impl FormalPoly {
    pub fn constant(v: Q) -> Self {
        let mut p = FormalPoly::default();
        if !Coeff::is_zero(&v) {
            p.terms.insert([0; NVARS], v);
        }
        p
    }

    pub fn var(i: usize) -> Self {
        let mut e = [0u8; NVARS];
        e[i] = 1;
        let mut p = FormalPoly::default();
        p.terms.insert(e, <Q as One>::one());
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Expo, &Q)> {
        self.terms.iter()
    }

    /// Coefficient of a given monomial (zero if absent).
    pub fn coeff_of(&self, e: &Expo) -> Q {
        self.terms.get(e).cloned().unwrap_or_else(<Q as Coeff>::zero)
    }

    /// The constant term.
    pub fn constant_term(&self) -> Q {
        self.coeff_of(&[0; NVARS])
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&x| x == 0))
    }

    /// Substitute rational values for all variables.
    pub fn eval(&self, values: &[Q; NVARS]) -> Q {
        let mut acc = <Q as Coeff>::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (i, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    t = &t * &values[i];
                }
            }
            acc = &acc + &t;
        }
        acc
    }

    /// Substitute f64 values (for handing symbolic results to the solvers).
    pub fn eval_f64(&self, values: &[f64; NVARS]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut t = crate::coeff::q_to_f64(c);
            for (i, &p) in e.iter().enumerate() {
                t *= values[i].powi(p as i32);
            }
            acc += t;
        }
        acc
    }

    fn insert_term(&mut self, e: Expo, c: Q) {
        if Coeff::is_zero(&c) {
            return;
        }
        let entry = self.terms.entry(e).or_insert_with(<Q as Coeff>::zero);
        *entry = &*entry + &c;
        if Coeff::is_zero(entry) {
            self.terms.remove(&e);
        }
    }
}

impl Coeff for FormalPoly {
    fn zero() -> Self {
        FormalPoly::default()
    }
    fn one() -> Self {
        FormalPoly::constant(q_int(1))
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert_term(*e, c.clone());
        }
        out
    }
    fn neg(&self) -> Self {
        let mut out = FormalPoly::default();
        for (e, c) in &self.terms {
            out.terms.insert(*e, -c);
        }
        out
    }
    fn mul(&self, other: &Self) -> Self {
        let mut out = FormalPoly::default();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let mut e = [0u8; NVARS];
                for i in 0..NVARS {
                    e[i] = e1[i] + e2[i];
                }
                out.insert_term(e, c1 * c2);
            }
        }
        out
    }
    fn from_q(v: &Q) -> Self {
        FormalPoly::constant(v.clone())
    }
}

impl fmt::Display for FormalPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms.iter().rev() {
            let neg = c < &<Q as Coeff>::zero();
            let mag = if neg { -c } else { c.clone() };
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let is_const_monomial = e.iter().all(|&x| x == 0);
            let mut wrote = false;
            if !One::is_one(&mag) || is_const_monomial {
                write!(f, "{}", mag)?;
                wrote = true;
            }
            for (i, &p) in e.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                if wrote {
                    write!(f, "*")?;
                }
                write!(f, "{}", VAR_NAMES[i])?;
                if p > 1 {
                    write!(f, "^{}", p)?;
                }
                wrote = true;
            }
        }
        Ok(())
    }
}
