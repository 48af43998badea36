//! Rule sets and generation of the symbol sets U (integrated symbols +
//! polynomials) and V (right-hand-side symbols) as the least fixed point of
//! the equation-class templates, truncated by homogeneity.

use crate::error::{Error, Result};
use crate::symbols::{parabolic_degree, MultiIndex, Rat, Symbol};
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    /// V = {Xi} ∪ {t1*t2*t3 : ti in U}
    Phi4,
    /// V = {Xi} ∪ {D(t1)*D(t2) : ti in U}
    Kpz,
    /// V = {Xi*prod(ti)} ∪ {prod(ti)}
    Generic,
}

#[derive(Clone, Debug)]
pub struct RuleSet {
    pub kind: RuleKind,
    /// Spatial dimension (symbols carry d+1 multiindices).
    pub d: usize,
    /// Homogeneity of the noise symbol, exact.
    pub alpha: Rat,
    /// Truncation: generated non-polynomial symbols have homogeneity < gamma_cap.
    pub gamma_cap: Rat,
    /// Depth limit for the growth heuristic.
    pub depth_limit: usize,
    /// Hard cap on new symbols per generation; hitting it classifies the
    /// iteration as growing without materialising an explosion.
    pub per_depth_cap: usize,
}

/// kappa = 1/100, the default offset below the integer homogeneities.
pub fn kappa() -> Rat {
    Rat::new(1, 100)
}

impl RuleSet {
    /// KPZ in d = 1: alpha = -3/2 - kappa, gamma_cap = 3/2 + 2*kappa.
    pub fn kpz_default() -> Self {
        RuleSet {
            kind: RuleKind::Kpz,
            d: 1,
            alpha: Rat::new(-3, 2) - kappa(),
            gamma_cap: Rat::new(3, 2) + Rat::from_integer(2) * kappa(),
            depth_limit: 10,
            per_depth_cap: 2_000,
        }
    }

    /// Dynamic Phi^4 with alpha = -(d+2)/2 - kappa, gamma_cap = 1.
    pub fn phi4_default(d: usize) -> Self {
        RuleSet {
            kind: RuleKind::Phi4,
            d,
            alpha: Rat::new(-((d as i64) + 2), 2) - kappa(),
            gamma_cap: Rat::from_integer(1),
            depth_limit: 10,
            per_depth_cap: 2_000,
        }
    }

    pub fn generic_default(d: usize, alpha: Rat, gamma_cap: Rat) -> Self {
        RuleSet {
            kind: RuleKind::Generic,
            d,
            alpha,
            gamma_cap,
            depth_limit: 10,
            per_depth_cap: 2_000,
        }
    }

    pub fn with_alpha(mut self, alpha: Rat) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_gamma_cap(mut self, cap: Rat) -> Self {
        self.gamma_cap = cap;
        self
    }

    fn hom(&self, s: &Symbol) -> Rat {
        s.hom_value(self.alpha)
    }
}

/// Generated closure: U (integrated symbols + polynomials) and V
/// (template products + noise), each sorted by (homogeneity, string).
#[derive(Clone, Debug)]
pub struct Closure {
    pub rules: RuleSet,
    pub u: Vec<Symbol>,
    pub v: Vec<Symbol>,
}

impl Closure {
    /// All symbols of the closure (union of U and V), sorted by
    /// (homogeneity, canonical string), deduplicated.
    pub fn all_symbols(&self) -> Vec<Symbol> {
        let mut set: BTreeSet<Symbol> = self.u.iter().cloned().collect();
        set.extend(self.v.iter().cloned());
        let mut out: Vec<Symbol> = set.into_iter().collect();
        sort_by_hom(&mut out, self.rules.alpha);
        out
    }

    pub fn contains(&self, s: &Symbol) -> bool {
        self.u.contains(s) || self.v.contains(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SubcritReport {
    /// New symbols with homogeneity < gamma_cap found at each depth.
    pub counts: Vec<usize>,
    pub verdict: Verdict,
    /// True when a generation hit the materialisation cap.
    pub saturated: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stabilised,
    Growing,
}

fn sort_by_hom(symbols: &mut [Symbol], alpha: Rat) {
    symbols.sort_by(|a, b| {
        a.hom_value(alpha)
            .cmp(&b.hom_value(alpha))
            .then_with(|| a.canonical_string().cmp(&b.canonical_string()))
    });
}

/// Polynomial symbols up to parabolic degree ceil(gamma_cap) (always
/// including the unit).
fn polynomial_symbols(d: usize, gamma_cap: Rat) -> Vec<Symbol> {
    let max_deg = gamma_cap.ceil().to_integer().max(0) as u32;
    let mut out = vec![Symbol::One];
    let mut frontier: Vec<MultiIndex> = vec![vec![0; d + 1]];
    for _ in 0..max_deg {
        let mut next = Vec::new();
        for k in &frontier {
            for i in 0..=d {
                let mut k2 = k.clone();
                k2[i] += 1;
                if parabolic_degree(&k2) <= max_deg {
                    next.push(k2);
                }
            }
        }
        next.sort();
        next.dedup();
        for k in &next {
            out.push(Symbol::poly(k.clone()));
        }
        frontier = next;
    }
    out.sort();
    out.dedup();
    out
}

struct Generation {
    u_nonpoly: BTreeSet<Symbol>,
    v: BTreeSet<Symbol>,
    counts: Vec<usize>,
    saturated: bool,
}

/// Run the fixed-point iteration for up to `max_depth` generations.
fn run_generation(rules: &RuleSet, max_depth: usize) -> Generation {
    let polys = polynomial_symbols(rules.d, rules.gamma_cap);
    let mut u_nonpoly: BTreeSet<Symbol> = BTreeSet::new();
    let mut v: BTreeSet<Symbol> = BTreeSet::new();
    let mut counts = Vec::new();
    let mut saturated = false;

    for _depth in 0..max_depth {
        let mut u_all: Vec<Symbol> = polys.clone();
        u_all.extend(u_nonpoly.iter().cloned());

        let mut v_next: BTreeSet<Symbol> = BTreeSet::new();
        v_next.insert(Symbol::Xi);
        apply_templates(rules, &u_all, &mut v_next, rules.per_depth_cap);

        let mut u_next = u_nonpoly.clone();
        for t in &v_next {
            if t.is_polynomial() {
                continue;
            }
            let it = Symbol::integ(t.clone());
            if !it.is_zero() && rules.hom(&it) < rules.gamma_cap {
                u_next.insert(it);
            }
        }

        let new_count = u_next.difference(&u_nonpoly).count()
            + v_next.difference(&v).count();
        counts.push(new_count);
        let stable = new_count == 0;
        if v_next.len() >= rules.per_depth_cap {
            saturated = true;
        }
        u_nonpoly = u_next;
        v = v_next;
        if stable || saturated {
            break;
        }
    }

    Generation {
        u_nonpoly,
        v,
        counts,
        saturated,
    }
}

/// Apply the rule templates to the current U, inserting results with
/// homogeneity < gamma_cap (polynomial results are kept: the polynomial
/// sector is part of V).
fn apply_templates(rules: &RuleSet, u: &[Symbol], out: &mut BTreeSet<Symbol>, cap: usize) {
    match rules.kind {
        RuleKind::Phi4 => {
            for i in 0..u.len() {
                for j in i..u.len() {
                    for k in j..u.len() {
                        if out.len() >= cap {
                            return;
                        }
                        let p = Symbol::prod(vec![
                            u[i].clone(),
                            u[j].clone(),
                            u[k].clone(),
                        ]);
                        insert_if_below(rules, p, out);
                    }
                }
            }
        }
        RuleKind::Kpz => {
            let derivs: Vec<Symbol> = u
                .iter()
                .map(|s| Symbol::deriv(1, s.clone()))
                .filter(|s| !s.is_zero())
                .collect();
            let mut ds: Vec<Symbol> = derivs;
            ds.sort();
            ds.dedup();
            for i in 0..ds.len() {
                for j in i..ds.len() {
                    if out.len() >= cap {
                        return;
                    }
                    let p = Symbol::prod(vec![ds[i].clone(), ds[j].clone()]);
                    insert_if_below(rules, p, out);
                }
            }
        }
        RuleKind::Generic => {
            // Products of arbitrary arity, truncated by homogeneity only.
            // Enumerate multisets over the non-unit elements of U by DFS;
            // a Xi factor may additionally multiply any such product.
            let elems: Vec<Symbol> = u
                .iter()
                .filter(|s| !s.is_one())
                .cloned()
                .collect();
            let max_arity = 8;
            let mut stack: Vec<Symbol> = Vec::new();
            dfs_products(rules, &elems, 0, &mut stack, max_arity, out, cap);
        }
    }
}

fn dfs_products(
    rules: &RuleSet,
    elems: &[Symbol],
    start: usize,
    stack: &mut Vec<Symbol>,
    budget: usize,
    out: &mut BTreeSet<Symbol>,
    cap: usize,
) {
    if out.len() >= cap {
        return;
    }
    if !stack.is_empty() {
        let p = Symbol::prod(stack.clone());
        if !p.is_zero() {
            insert_if_below(rules, p.clone(), out);
            let with_noise = Symbol::prod(vec![p, Symbol::Xi]);
            insert_if_below(rules, with_noise, out);
        }
    }
    if budget == 0 {
        return;
    }
    for i in start..elems.len() {
        stack.push(elems[i].clone());
        // Prune: products only gain homogeneity when every factor has
        // positive homogeneity; otherwise rely on the arity budget.
        let total: Rat = stack.iter().map(|s| rules.hom(s)).sum();
        let all_positive = elems[i..]
            .iter()
            .all(|s| rules.hom(s) > Rat::from_integer(0));
        if !(all_positive && total >= rules.gamma_cap) {
            dfs_products(rules, elems, i, stack, budget - 1, out, cap);
        }
        stack.pop();
    }
}

fn insert_if_below(rules: &RuleSet, s: Symbol, out: &mut BTreeSet<Symbol>) {
    if s.is_zero() {
        return;
    }
    if s.is_polynomial() {
        // Polynomial sector: bounded by the degree cap instead.
        if parabolic_degree(&s.poly_index(rules.d).unwrap()) as i64
            <= rules.gamma_cap.ceil().to_integer().max(0)
        {
            out.insert(s);
        }
        return;
    }
    if rules.hom(&s) < rules.gamma_cap {
        out.insert(s);
    }
}

/// Generate the closed symbol sets (U, V) for a rule set.
pub fn generate_closure(rules: &RuleSet) -> Result<Closure> {
    let gen = run_generation(rules, rules.depth_limit + 1);
    let stabilised = gen.counts.last() == Some(&0);
    if !stabilised {
        let growing = gen.saturated
            || gen
                .counts
                .windows(2)
                .all(|w| w[1] >= w[0]);
        if growing || gen.counts.len() > rules.depth_limit {
            return Err(Error::SubcriticalityViolation {
                depth: gen.counts.len(),
                new_symbols: *gen.counts.last().unwrap_or(&0),
            });
        }
    }
    let polys = polynomial_symbols(rules.d, rules.gamma_cap);
    let mut u: Vec<Symbol> = polys.clone();
    u.extend(gen.u_nonpoly.iter().cloned());
    let mut v: Vec<Symbol> = gen.v.iter().cloned().collect();
    for p in &polys {
        if !v.contains(p) {
            v.push(p.clone());
        }
    }
    sort_by_hom(&mut u, rules.alpha);
    sort_by_hom(&mut v, rules.alpha);
    Ok(Closure {
        rules: rules.clone(),
        u,
        v,
    })
}

/// Diagnostic: per-depth counts of new symbols below gamma_cap, with a
/// stabilised/growing verdict. Never errors; generations that would explode
/// are capped and classified as growing.
pub fn check_subcritical(rules: &RuleSet, depth: usize) -> SubcritReport {
    let gen = run_generation(rules, depth.max(1));
    let stabilised = gen.counts.last() == Some(&0) && !gen.saturated;
    SubcritReport {
        counts: gen.counts,
        verdict: if stabilised {
            Verdict::Stabilised
        } else {
            Verdict::Growing
        },
        saturated: gen.saturated,
    }
}

#[derive(Serialize)]
pub struct SymbolEntry {
    pub canonical_string: String,
    pub homogeneity: HomExport,
}

#[derive(Serialize)]
pub struct HomExport {
    pub p_num: i64,
    pub p_den: i64,
    pub q: u32,
}

/// JSON-exportable listing, sorted by homogeneity then string.
pub fn export_symbols(symbols: &[Symbol], alpha: Rat) -> Vec<SymbolEntry> {
    let mut sorted = symbols.to_vec();
    sort_by_hom(&mut sorted, alpha);
    sorted
        .iter()
        .map(|s| {
            let h = s.homogeneity().expect("no zero symbols in exports");
            SymbolEntry {
                canonical_string: s.canonical_string(),
                homogeneity: HomExport {
                    p_num: *h.p.numer(),
                    p_den: *h.p.denom(),
                    q: h.q,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpz_symbols as ks;

    #[test]
    fn kpz_default_u_matches_expansion_symbols() {
        // At the default truncation the non-polynomial part of U is exactly
        // the four integrated symbols of the abstract expansion.
        let c = generate_closure(&RuleSet::kpz_default()).unwrap();
        let nonpoly: Vec<&Symbol> =
            c.u.iter().filter(|s| !s.is_polynomial()).collect();
        let expect = vec![ks::i_xi(), ks::i2(), ks::i21(), ks::i1()];
        assert_eq!(nonpoly.len(), 4);
        for e in &expect {
            assert!(nonpoly.contains(&e), "missing {}", e);
        }
    }

    #[test]
    fn kpz_cap2_contains_expansion_symbols() {
        let rules = RuleSet::kpz_default().with_gamma_cap(Rat::from_integer(2));
        let c = generate_closure(&rules).unwrap();
        for e in [ks::i_xi(), ks::i2(), ks::i21(), ks::i1()] {
            assert!(c.u.contains(&e), "missing {}", e);
        }
    }

    #[test]
    fn kpz_closure_contains_paper_symbols() {
        let c = generate_closure(&RuleSet::kpz_default()).unwrap();
        for s in ks::all_graphical() {
            assert!(c.contains(&s), "closure missing {}", s);
        }
    }

    #[test]
    fn phi4_cubes_but_no_fourth_power() {
        let mut rules = RuleSet::phi4_default(3);
        rules.alpha = Rat::new(-5, 2) - kappa();
        rules.gamma_cap = Rat::new(1, 10);
        let c = generate_closure(&rules).unwrap();
        let psi = Symbol::integ(Symbol::Xi);
        let cube = Symbol::prod(vec![psi.clone(), psi.clone(), psi.clone()]);
        let square = Symbol::prod(vec![psi.clone(), psi.clone()]);
        let fourth = Symbol::prod(vec![square.clone(), square.clone()]);
        assert!(c.v.contains(&cube));
        assert!(c.v.contains(&square));
        assert!(!c.v.contains(&fourth));
        assert!(!c.u.contains(&fourth));
    }

    #[test]
    fn tiny_gamma_cap_gives_polynomial_only_u() {
        let rules = RuleSet::kpz_default().with_gamma_cap(Rat::new(-2, 1));
        let c = generate_closure(&rules).unwrap();
        assert!(c.u.iter().all(|s| s.is_polynomial()));
    }

    #[test]
    fn closure_closed_under_rules() {
        let rules = RuleSet::kpz_default();
        let c = generate_closure(&rules).unwrap();
        for a in &c.u {
            for b in &c.u {
                let da = Symbol::deriv(1, a.clone());
                let db = Symbol::deriv(1, b.clone());
                if da.is_zero() || db.is_zero() {
                    continue;
                }
                let p = Symbol::prod(vec![da, db]);
                if p.is_zero() {
                    continue;
                }
                let below = p.hom_value(rules.alpha) < rules.gamma_cap;
                if below {
                    assert!(c.v.contains(&p), "template result {} missing", p);
                } else {
                    // above the cap: only polynomial symbols may appear
                    assert!(
                        !c.v.contains(&p) || p.is_polynomial(),
                        "template result {} unexpectedly kept",
                        p
                    );
                }
            }
        }
    }

    #[test]
    fn u_subset_relations() {
        let phi4 = generate_closure(&RuleSet::phi4_default(2)).unwrap();
        for s in &phi4.u {
            assert!(phi4.v.contains(s), "phi4 U element {} not in V", s);
        }
        let kpz = generate_closure(&RuleSet::kpz_default()).unwrap();
        assert!(kpz.u.iter().any(|s| !kpz.v.contains(s)));
    }

    #[test]
    fn subcritical_verdicts() {
        let r = check_subcritical(&RuleSet::kpz_default(), 10);
        assert_eq!(r.verdict, Verdict::Stabilised);

        let critical = RuleSet::kpz_default()
            .with_alpha(Rat::new(-2, 1) - kappa())
            .with_gamma_cap(Rat::from_integer(0));
        let r = check_subcritical(&critical, 8);
        assert_eq!(r.verdict, Verdict::Growing);
        // counts grow monotonically until saturation
        for w in r.counts.windows(2) {
            assert!(w[1] >= w[0]);
        }

        let phi4 = check_subcritical(
            &RuleSet::phi4_default(3)
                .with_alpha(Rat::new(-5, 2) - kappa())
                .with_gamma_cap(Rat::from_integer(0)),
            10,
        );
        assert_eq!(phi4.verdict, Verdict::Stabilised);
    }

    #[test]
    fn supercritical_generation_errors() {
        let rules = RuleSet::kpz_default()
            .with_alpha(Rat::new(-201, 100))
            .with_gamma_cap(Rat::from_integer(0));
        assert!(matches!(
            generate_closure(&rules),
            Err(crate::error::Error::SubcriticalityViolation { .. })
        ));
    }

    #[test]
    fn export_sorted_by_homogeneity() {
        let c = generate_closure(&RuleSet::kpz_default()).unwrap();
        let entries = export_symbols(&c.all_symbols(), c.rules.alpha);
        assert!(entries
            .iter()
            .any(|e| e.canonical_string == "I(Xi)"));
        let hom_vals: Vec<f64> = entries
            .iter()
            .map(|e| e.homogeneity.p_num as f64 / e.homogeneity.p_den as f64
                + e.homogeneity.q as f64 * (-1.51))
            .collect();
        for w in hom_vals.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
    }
}
