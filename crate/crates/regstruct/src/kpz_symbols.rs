//! Named constructors for the KPZ symbol zoo (d = 1).
//!
//! The naming follows the derivative/integration structure: `s1` is the
//! gradient of the integrated noise, `s2` its square, `i2` the integral of
//! that square, and so on. Digit strings record which squares/products were
//! taken; a trailing `i` prefix marks integration.

use crate::symbols::Symbol;

/// I(Xi): integrated noise.
pub fn i_xi() -> Symbol {
    Symbol::integ(Symbol::Xi)
}

/// D I(Xi): gradient of the integrated noise.
pub fn s1() -> Symbol {
    Symbol::deriv(1, i_xi())
}

/// (D I(Xi))^2.
pub fn s2() -> Symbol {
    Symbol::prod(vec![s1(), s1()])
}

/// I((D I(Xi))^2).
pub fn i2() -> Symbol {
    Symbol::integ(s2())
}

/// D I((D I(Xi))^2).
pub fn s20() -> Symbol {
    Symbol::deriv(1, i2())
}

/// D I(Xi) * D I((D I(Xi))^2).
pub fn s21() -> Symbol {
    Symbol::prod(vec![s1(), s20()])
}

/// I(D I(Xi) * D I((D I(Xi))^2)).
pub fn i21() -> Symbol {
    Symbol::integ(s21())
}

/// D I(D I(Xi) * D I((D I(Xi))^2)).
pub fn s210() -> Symbol {
    Symbol::deriv(1, i21())
}

/// I(D I(Xi)).
pub fn i1() -> Symbol {
    Symbol::integ(s1())
}

/// D I(D I(Xi)).
pub fn s10() -> Symbol {
    Symbol::deriv(1, i1())
}

/// D I(Xi) * D I(D I(Xi)).
pub fn s11() -> Symbol {
    Symbol::prod(vec![s1(), s10()])
}

/// (D I((D I(Xi))^2))^2.
pub fn s40() -> Symbol {
    Symbol::prod(vec![s20(), s20()])
}

/// D I(Xi) * D I(D I(Xi) * D I((D I(Xi))^2)).
pub fn s211() -> Symbol {
    Symbol::prod(vec![s1(), s210()])
}

/// X_1 (the spatial coordinate symbol in d = 1).
pub fn x1() -> Symbol {
    Symbol::x(1, 1)
}

/// The thirteen non-polynomial symbols appearing in the expansion of the
/// KPZ fixed point and its renormalisation.
pub fn all_graphical() -> Vec<Symbol> {
    vec![
        i_xi(),
        s1(),
        s2(),
        i2(),
        s20(),
        s21(),
        i21(),
        s210(),
        i1(),
        s10(),
        s11(),
        s40(),
        s211(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::Rat;

    #[test]
    fn homogeneities_match_hand_computation() {
        // alpha = -3/2 - 1/100; values are p + q*alpha
        let a = Rat::new(-151, 100);
        let cases: Vec<(Symbol, Rat)> = vec![
            (i_xi(), a + Rat::from_integer(2)),
            (s1(), a + Rat::from_integer(1)),
            (s2(), Rat::from_integer(2) * a + Rat::from_integer(2)),
            (i2(), Rat::from_integer(2) * a + Rat::from_integer(4)),
            (s20(), Rat::from_integer(2) * a + Rat::from_integer(3)),
            (s21(), Rat::from_integer(3) * a + Rat::from_integer(4)),
            (i21(), Rat::from_integer(3) * a + Rat::from_integer(6)),
            (s210(), Rat::from_integer(3) * a + Rat::from_integer(5)),
            (i1(), a + Rat::from_integer(3)),
            (s10(), a + Rat::from_integer(2)),
            (s11(), Rat::from_integer(2) * a + Rat::from_integer(3)),
            (s40(), Rat::from_integer(4) * a + Rat::from_integer(6)),
            (s211(), Rat::from_integer(4) * a + Rat::from_integer(6)),
        ];
        for (s, expect) in cases {
            assert_eq!(s.hom_value(a), expect, "symbol {}", s);
        }
    }

    #[test]
    fn distinct_canonical_strings() {
        let all = all_graphical();
        let mut strings: Vec<String> =
            all.iter().map(|s| s.canonical_string()).collect();
        strings.sort();
        strings.dedup();
        assert_eq!(strings.len(), all.len());
    }
}
