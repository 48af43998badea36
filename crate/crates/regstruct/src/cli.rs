//! Command-line front end: plain-text configuration, experiment
//! orchestration, and reproducible artifact emission.
//!
//! Every run resolves its parameters — command-line flags over config-file
//! entries over built-in defaults — into a flat `key = value` map, executes,
//! and writes its artifacts plus a `manifest.json` recording the tool
//! version, the fully resolved parameters, the named seed substreams, the
//! symbol-closure hash where applicable, and a SHA-256 per artifact.
//! `rerun` re-executes a manifest and verifies every hash, so each artifact
//! is reproducible from its manifest alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeff::Q;
use crate::error::{Error, Result};
use crate::fields::kernel::{least_squares_slope, r_squared};
use crate::fields::{
    build_kernel_with_radius, convolve, holder_exponent, lambda_ladder, mollify,
    sample_white_noise, Mollifier, TorusGrid,
};
use crate::formal::{FormalPoly, VAR_C0, VAR_C1, VAR_C2, VAR_C3};
use crate::hopf::{Character, HopfAlgebra, TPlusMonomial};
use crate::model::{build_canonical, sample_interior_centres, ModelRealization};
use crate::renorm::derive_counterterms;
use crate::rules::{check_subcritical, export_symbols, generate_closure, RuleSet, Verdict};
use crate::solvers::{
    convergence_study, phi4_scheme_variance, solve_kpz, solve_phi4_dpd, solve_she_cole_hopf,
    Equation, SolverConfig,
};
use crate::symbols::Rat;
use crate::wick::estimate_renorm_constants_kpz;

pub type Params = BTreeMap<String, String>;

// ----- parameter plumbing -----

/// Parse a plain-text `key = value` config file with optional `[section]`
/// headers. Sectioned keys are namespaced `section.key`; the executor later
/// selects the section matching the command.
pub fn parse_config_text(text: &str) -> Result<Params> {
    let mut out = Params::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(Error::Config(format!(
                    "config line {}: unterminated section header `{raw}`",
                    idx + 1
                )));
            }
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "config line {}: expected `key = value`, got `{raw}`",
                idx + 1
            )));
        };
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Select the entries applying to `command` from a parsed config: unsectioned
/// keys plus keys under a section equal to the command name (spaces replaced
/// by dots are also accepted, e.g. `[simulate.kpz]`). Entries under other
/// known command sections are ignored so one file can drive several runs.
fn select_for_command(cfg: &Params, command: &str) -> Params {
    let dotted = command.replace(' ', ".");
    let mut out = Params::new();
    for (k, v) in cfg {
        match k.rsplit_once('.') {
            None => {
                out.insert(k.clone(), v.clone());
            }
            Some((section, key)) => {
                if section == command || section == dotted {
                    out.insert(key.to_string(), v.clone());
                }
            }
        }
    }
    out
}

fn reject_unknown(params: &Params, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Config(format!(
                "unknown configuration key `{k}` (known keys: {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn get_str(p: &Params, key: &str, default: &str) -> String {
    p.get(key).cloned().unwrap_or_else(|| default.to_string())
}

fn get_f64(p: &Params, key: &str, default: f64) -> Result<f64> {
    match p.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number"))),
    }
}

fn get_usize(p: &Params, key: &str, default: usize) -> Result<usize> {
    match p.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not an integer"))),
    }
}

fn get_u64(p: &Params, key: &str, default: u64) -> Result<u64> {
    match p.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not an integer"))),
    }
}

fn get_bool(p: &Params, key: &str, default: bool) -> Result<bool> {
    match p.get(key).map(|s| s.as_str()) {
        None => Ok(default),
        Some("true") | Some("1") => Ok(true),
        Some("false") | Some("0") => Ok(false),
        Some(v) => Err(Error::Config(format!(
            "key `{key}`: `{v}` is not a boolean"
        ))),
    }
}

fn parse_rat(key: &str, v: &str) -> Result<Rat> {
    v.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a rational (p or p/q)")))
}

fn get_rat(p: &Params, key: &str) -> Result<Option<Rat>> {
    match p.get(key) {
        None => Ok(None),
        Some(v) => parse_rat(key, v).map(Some),
    }
}

fn get_f64_list(p: &Params, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    match p.get(key) {
        None => Ok(default.to_vec()),
        Some(v) => v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("key `{key}`: `{s}` is not a number")))
            })
            .collect(),
    }
}

fn get_u64_list(p: &Params, key: &str, default: &[u64]) -> Result<Vec<u64>> {
    match p.get(key) {
        None => Ok(default.to_vec()),
        Some(v) => v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("key `{key}`: `{s}` is not an integer")))
            })
            .collect(),
    }
}

/// Derive a named random substream from the master seed.
pub fn substream(master: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    master ^ u64::from_le_bytes(b)
}

fn grid_from(p: &Params, dn: usize, nn: usize, nnt: usize, dlen: f64, dt_h: f64) -> Result<TorusGrid> {
    TorusGrid::new(
        get_usize(p, "d", dn)?,
        get_usize(p, "n", nn)?,
        get_f64(p, "len", dlen)?,
        get_usize(p, "nt", nnt)?,
        get_f64(p, "t", dt_h)?,
    )
}

// ----- manifest -----

#[derive(Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    /// Fully resolved parameters; re-executing with exactly these reproduces
    /// every artifact bit-for-bit.
    pub params: Params,
    pub master_seed: Option<u64>,
    /// Named substreams derived from the master seed.
    pub substreams: BTreeMap<String, u64>,
    /// SHA-256 of the canonical symbol listing, when the command depends on
    /// a generated closure.
    pub closure_hash: Option<String>,
    pub artifacts: Vec<ArtifactRecord>,
}

fn sha_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn closure_hash_of(rules: &RuleSet) -> Result<String> {
    let closure = generate_closure(rules)?;
    let listing: Vec<String> = closure
        .all_symbols()
        .iter()
        .map(|s| s.canonical_string())
        .collect();
    Ok(sha_hex(listing.join("\n").as_bytes()))
}

/// In-memory result of one command execution.
#[derive(Debug)]
pub struct Execution {
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Value,
    pub substreams: BTreeMap<String, u64>,
    pub closure_hash: Option<String>,
    pub master_seed: Option<u64>,
    /// Human-readable descriptions of failed assertions (exit code 1).
    pub failures: Vec<String>,
}

impl Execution {
    fn new() -> Self {
        Execution {
            artifacts: Vec::new(),
            summary: serde_json::Value::Null,
            substreams: BTreeMap::new(),
            closure_hash: None,
            master_seed: None,
            failures: Vec::new(),
        }
    }

    fn push_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.artifacts.push((name.to_string(), bytes));
        Ok(())
    }

    fn push_text(&mut self, name: &str, text: String) {
        self.artifacts.push((name.to_string(), text.into_bytes()));
    }
}

// ----- command executors -----

fn rules_from(p: &Params) -> Result<RuleSet> {
    let d = get_usize(p, "d", 1)?;
    let mut rules = match get_str(p, "rules", "kpz").as_str() {
        "kpz" => RuleSet::kpz_default(),
        "phi4" => RuleSet::phi4_default(if p.contains_key("d") { d } else { 2 }),
        "generic" => {
            let alpha = get_rat(p, "alpha")?
                .ok_or_else(|| Error::Config("generic rules require alpha".into()))?;
            let gamma = get_rat(p, "gamma")?
                .ok_or_else(|| Error::Config("generic rules require gamma".into()))?;
            RuleSet::generic_default(d, alpha, gamma)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown rule set `{other}` (kpz, phi4, generic)"
            )))
        }
    };
    if let Some(a) = get_rat(p, "alpha")? {
        rules = rules.with_alpha(a);
    }
    if let Some(g) = get_rat(p, "gamma")? {
        rules = rules.with_gamma_cap(g);
    }
    Ok(rules)
}

fn symbols_generate(p: &Params) -> Result<Execution> {
    reject_unknown(p, &["rules", "alpha", "gamma", "d"])?;
    let rules = rules_from(p)?;
    let closure = generate_closure(&rules)?;
    let symbols = closure.all_symbols();
    let entries = export_symbols(&symbols, rules.alpha);
    let mut exec = Execution::new();
    exec.closure_hash = Some(closure_hash_of(&rules)?);
    let doc = serde_json::json!({
        "rules": get_str(p, "rules", "kpz"),
        "alpha": rules.alpha.to_string(),
        "count": entries.len(),
        "symbols": entries,
    });
    exec.push_json("symbols.json", &doc)?;
    exec.summary = serde_json::json!({
        "count": symbols.len(),
        "closure_hash": exec.closure_hash,
    });
    Ok(exec)
}

fn symbols_check_subcritical(p: &Params) -> Result<Execution> {
    reject_unknown(p, &["rules", "alpha", "gamma", "d", "depth", "expect"])?;
    let rules = rules_from(p)?;
    let depth = get_usize(p, "depth", 12)?;
    let report = check_subcritical(&rules, depth);
    let mut exec = Execution::new();
    let doc = serde_json::json!({
        "alpha": rules.alpha.to_string(),
        "depth": depth,
        "counts": report.counts,
        "verdict": report.verdict,
        "saturated": report.saturated,
    });
    exec.push_json("subcritical.json", &doc)?;
    let verdict = match report.verdict {
        Verdict::Stabilised => "finite",
        Verdict::Growing => "growing",
    };
    if let Some(expect) = p.get("expect") {
        let want = match expect.as_str() {
            "finite" | "stabilised" => "finite",
            "growing" => "growing",
            other => {
                return Err(Error::Config(format!(
                    "key `expect`: `{other}` is not finite|growing"
                )))
            }
        };
        if verdict != want {
            exec.failures
                .push(format!("expected {want} symbol set, generation is {verdict}"));
        }
    }
    exec.summary = serde_json::json!({ "verdict": verdict, "counts": report.counts });
    Ok(exec)
}

fn hopf_verify(p: &Params) -> Result<Execution> {
    reject_unknown(p, &["gamma", "chars", "seed"])?;
    let mut rules = RuleSet::kpz_default().with_gamma_cap(Rat::from_integer(2));
    if let Some(g) = get_rat(p, "gamma")? {
        rules = rules.with_gamma_cap(g);
    }
    let chars = get_usize(p, "chars", 100)?;
    let seed = get_u64(p, "seed", 17)?;
    let hopf = HopfAlgebra::new(generate_closure(&rules)?);
    let symbols = hopf.closure.all_symbols();

    let mut exec = Execution::new();
    exec.master_seed = Some(seed);
    exec.substreams.insert("characters".into(), seed);
    exec.closure_hash = Some(closure_hash_of(&rules)?);

    let mut checks = Vec::new();
    let mut record = |name: &str, cases: usize, failed: usize| {
        checks.push(serde_json::json!({
            "check": name, "cases": cases, "failed": failed,
        }));
        failed > 0
    };

    let mut failed = 0;
    for t in &symbols {
        if !hopf.comodule_identity_holds(t)? {
            failed += 1;
        }
    }
    let mut bad = record("comodule_identity", symbols.len(), failed);

    failed = 0;
    for t in &symbols {
        if !hopf.triangularity_holds(t)? {
            failed += 1;
        }
    }
    bad |= record("triangularity", symbols.len(), failed);

    let gens = hopf.generators();
    failed = 0;
    for g in &gens {
        let m = TPlusMonomial::from_gen(g.clone());
        if !hopf.coassociativity_holds(&m)? || !hopf.counit_holds(&m)? {
            failed += 1;
        }
    }
    bad |= record("coassociativity_and_counit", gens.len(), failed);

    failed = 0;
    for g in &gens {
        let m = TPlusMonomial::from_gen(g.clone());
        if !hopf.antipode_convolution_holds(&m)? {
            failed += 1;
        }
    }
    bad |= record("antipode_convolution", gens.len(), failed);

    // group law on random rational characters: consecutive pairs from a
    // seeded stream of `chars` characters
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut stream = Vec::with_capacity(chars);
    for _ in 0..chars {
        let mut f = Character::counit();
        for g in &gens {
            let num = rng.gen_range(-9i64..=9);
            let den = rng.gen_range(1i64..=4);
            f.set(g.clone(), crate::coeff::q(num, den));
        }
        stream.push(f);
    }
    failed = 0;
    for i in 0..stream.len() {
        let f = &stream[i];
        let g = &stream[(i + 1) % stream.len()];
        let fg = hopf.char_product::<Q>(f, g)?;
        for t in &symbols {
            let via_product = hopf.gamma_action(&fg, t)?;
            let inner = hopf.gamma_action(g, t)?;
            let composed = inner.map_terms(|s, c| hopf.gamma_action(f, s).unwrap().scale(c));
            if via_product != composed {
                failed += 1;
                break;
            }
        }
    }
    bad |= record("character_group_law", stream.len(), failed);

    let doc = serde_json::json!({
        "gamma": rules.gamma_cap.to_string(),
        "symbols": symbols.len(),
        "generators": gens.len(),
        "checks": checks,
    });
    exec.push_json("hopf_report.json", &doc)?;
    if bad {
        exec.failures.push("hopf identity suite failed".into());
    }
    exec.summary = doc;
    Ok(exec)
}

fn formal_or_const(key: &str, v: &str, var: usize) -> Result<FormalPoly> {
    if v == "formal" {
        return Ok(FormalPoly::var(var));
    }
    let r: Q = v
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not formal|rational")))?;
    Ok(FormalPoly::constant(r))
}

fn renorm_derive(p: &Params) -> Result<Execution> {
    reject_unknown(p, &["rules", "alpha", "gamma", "d", "c0", "c1", "c2", "c3"])?;
    if get_str(p, "rules", "kpz") != "kpz" {
        return Err(Error::Config(
            "counterterm derivation is implemented for the kpz rule set".into(),
        ));
    }
    let rules = rules_from(p)?;
    let constants = [
        formal_or_const("c0", &get_str(p, "c0", "formal"), VAR_C0)?,
        formal_or_const("c1", &get_str(p, "c1", "formal"), VAR_C1)?,
        formal_or_const("c2", &get_str(p, "c2", "formal"), VAR_C2)?,
        formal_or_const("c3", &get_str(p, "c3", "formal"), VAR_C3)?,
    ];
    let ct = derive_counterterms(&rules, constants)?;
    let residual_terms: Vec<String> = ct
        .residual
        .iter()
        .map(|(s, c)| format!("({}) {}", c, s.canonical_string()))
        .collect();
    let mut exec = Execution::new();
    exec.closure_hash = Some(closure_hash_of(&rules)?);
    let doc = serde_json::json!({
        "gradient_coeff": ct.gradient_coeff.to_string(),
        "constant_coeff": ct.constant_coeff.to_string(),
        "residual": residual_terms,
    });
    exec.push_json("counterterms.json", &doc)?;
    if !residual_terms.is_empty() {
        exec.failures
            .push("counterterm rewrite left unabsorbed terms".into());
    }
    exec.summary = doc;
    Ok(exec)
}

const MODEL_KEYS: &[&str] = &[
    "n", "nt", "len", "t", "eps", "seed", "radius", "levels", "beta", "gamma",
];

fn model_realisation(p: &Params) -> Result<(ModelRealization, u64)> {
    let g = grid_from(p, 1, 256, 1024, 1.0, 0.25)?;
    if g.d != 1 {
        return Err(Error::Config("model realisations require d = 1".into()));
    }
    let eps = get_f64(p, "eps", 0.125)?;
    let seed = get_u64(p, "seed", 1)?;
    let radius = get_f64(p, "radius", 0.25)?;
    let levels = get_usize(p, "levels", 4)? as u32;
    let beta = get_f64(p, "beta", 2.0)?;
    let mut rules = RuleSet::kpz_default();
    if let Some(gam) = get_rat(p, "gamma")? {
        rules = rules.with_gamma_cap(gam);
    }
    let white = sample_white_noise(g, substream(seed, "noise"));
    let xi = mollify(&white, &Mollifier::new(eps))?;
    let closure = generate_closure(&rules)?;
    let kernel = build_kernel_with_radius(g, beta, levels, radius)?;
    Ok((build_canonical(&xi, closure, kernel)?, seed))
}

fn model_build(p: &Params) -> Result<Execution> {
    reject_unknown(p, MODEL_KEYS)?;
    let (m, seed) = model_realisation(p)?;
    let mut exec = Execution::new();
    exec.master_seed = Some(seed);
    exec.substreams
        .insert("noise".into(), substream(seed, "noise"));
    exec.closure_hash = Some(closure_hash_of(&RuleSet::kpz_default())?);
    let mut csv = String::from("symbol,homogeneity,sup,mean\n");
    for tau in &m.symbols {
        let f = m.get_pi(tau)?;
        let mean = f.data.iter().sum::<f64>() / f.data.len() as f64;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            tau.canonical_string(),
            m.hom(tau),
            f.sup_norm(),
            mean
        ));
    }
    exec.push_text("model_summary.csv", csv);
    exec.summary = serde_json::json!({
        "symbols": m.symbols.len(),
        "eps": get_f64(p, "eps", 0.125)?,
    });
    Ok(exec)
}

fn model_check(p: &Params) -> Result<Execution> {
    let mut allowed: Vec<&str> = MODEL_KEYS.to_vec();
    allowed.extend_from_slice(&[
        "lambda_lo", "lambda_hi", "centres", "t_lo", "t_hi", "x_lo", "x_hi", "tol",
    ]);
    reject_unknown(p, &allowed)?;
    let (m, seed) = model_realisation(p)?;
    let tol = get_f64(p, "tol", crate::model::ADMISSIBILITY_TOL)?;
    let defect = m.check_admissibility()?;

    let lambdas = lambda_ladder(get_f64(p, "lambda_lo", 0.0625)?, get_f64(p, "lambda_hi", 0.25)?);
    let centres = sample_interior_centres(
        m.grid,
        get_usize(p, "centres", 12)?,
        get_f64(p, "t_lo", 0.08)?,
        get_f64(p, "t_hi", 0.17)?,
        get_f64(p, "x_lo", 0.3)?,
        get_f64(p, "x_hi", 0.6)?,
        substream(seed, "centres"),
    )?;
    let bounds = m.check_model_bounds(&lambdas, &centres)?;

    let mut exec = Execution::new();
    exec.master_seed = Some(seed);
    exec.substreams
        .insert("noise".into(), substream(seed, "noise"));
    exec.substreams
        .insert("centres".into(), substream(seed, "centres"));
    exec.closure_hash = Some(closure_hash_of(&RuleSet::kpz_default())?);

    let mut rows = Vec::new();
    for b in &bounds {
        rows.push(serde_json::json!({
            "symbol": b.symbol,
            "homogeneity": b.hom,
            "slope": b.slope,
            "pass": b.pass,
        }));
        if !b.stats.iter().all(|s| s.is_finite()) {
            exec.failures
                .push(format!("non-finite pairing statistics for {}", b.symbol));
        }
    }
    // polynomial symbols must meet their homogeneity slope at any scale;
    // noise-built symbols need λ ≥ 4ε and are reported without asserting
    for b in &bounds {
        let polynomial = b.symbol == "1" || b.symbol.starts_with("X^");
        if polynomial && !b.pass {
            exec.failures
                .push(format!("polynomial symbol {} slope {:.3}", b.symbol, b.slope));
        }
    }
    if defect > tol {
        exec.failures
            .push(format!("admissibility defect {defect:.3e} exceeds {tol:.1e}"));
    }
    let doc = serde_json::json!({
        "admissibility_defect": defect,
        "tolerance": tol,
        "lambdas": lambdas,
        "bounds": rows,
    });
    exec.push_json("model_check.json", &doc)?;
    exec.summary = serde_json::json!({
        "admissibility_defect": defect,
        "failures": exec.failures.len(),
    });
    Ok(exec)
}

fn estimate_holder(p: &Params) -> Result<Execution> {
    reject_unknown(
        p,
        &[
            "field", "n", "nt", "len", "t", "eps", "seed", "lambda_lo", "lambda_hi", "centres",
            "moment_kill", "radius", "levels", "beta",
        ],
    )?;
    let g = grid_from(p, 1, 512, 4096, 1.0, 0.25)?;
    let eps = get_f64(p, "eps", 0.03125)?;
    let seed = get_u64(p, "seed", 1)?;
    let white = sample_white_noise(g, substream(seed, "noise"));
    let xi = mollify(&white, &Mollifier::new(eps))?;
    let which = get_str(p, "field", "xi");
    let field = match which.as_str() {
        "xi" => xi,
        "kxi" => {
            let kernel = build_kernel_with_radius(
                g,
                get_f64(p, "beta", 2.0)?,
                get_usize(p, "levels", 4)? as u32,
                get_f64(p, "radius", 0.25)?,
            )?;
            convolve(&kernel.full, &xi)?
        }
        other => {
            return Err(Error::Config(format!(
                "key `field`: `{other}` is not xi|kxi"
            )))
        }
    };
    let lambdas = lambda_ladder(
        get_f64(p, "lambda_lo", 0.0625)?,
        get_f64(p, "lambda_hi", 0.25)?,
    );
    let kill = match get_usize(p, "moment_kill", usize::MAX)? {
        usize::MAX => None,
        k => Some(k as u32),
    };
    let rep = holder_exponent(
        &field,
        &lambdas,
        get_usize(p, "centres", 32)?,
        kill,
        substream(seed, "centres"),
    )?;
    let mut exec = Execution::new();
    exec.master_seed = Some(seed);
    exec.substreams
        .insert("noise".into(), substream(seed, "noise"));
    exec.substreams
        .insert("centres".into(), substream(seed, "centres"));
    let mut csv = String::from("lambda,stat\n");
    for (l, s) in rep.lambdas.iter().zip(&rep.stats) {
        csv.push_str(&format!("{l},{s}\n"));
    }
    exec.push_text("holder.csv", csv);
    let doc = serde_json::json!({
        "field": which,
        "eps": eps,
        "slope": rep.slope,
        "stderr": rep.stderr,
    });
    exec.push_json("holder.json", &doc)?;
    exec.summary = doc;
    Ok(exec)
}

fn estimate_constants(p: &Params) -> Result<Execution> {
    reject_unknown(p, &["n", "nt", "len", "t", "eps"])?;
    let g = grid_from(p, 1, 512, 8192, 1.0, 0.125)?;
    let default_ladder: Vec<f64> = (0..7).map(|i| 0.125 / 2f64.powf(i as f64 / 2.0)).collect();
    let ladder = get_f64_list(p, "eps", &default_ladder)?;
    let mut rows = Vec::new();
    let mut csv = String::from("eps,c0,c1,c2,c3,c0_err,c0_flagged\n");
    for &e in &ladder {
        let c = estimate_renorm_constants_kpz(g, e)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.eps, c.c0, c.c1, c.c2, c.c3, c.c0_err, c.c0_flagged
        ));
        rows.push(c);
    }
    let xs: Vec<f64> = rows.iter().map(|c| c.eps.ln()).collect();
    let y1: Vec<f64> = rows.iter().map(|c| c.c1.ln()).collect();
    let (c1_slope, _) = least_squares_slope(&xs, &y1);
    let y2: Vec<f64> = rows.iter().map(|c| c.c2).collect();
    let y3: Vec<f64> = rows.iter().map(|c| c.c3).collect();
    let (s2, _) = least_squares_slope(&xs, &y2);
    let (s3, _) = least_squares_slope(&xs, &y3);
    let mut exec = Execution::new();
    exec.push_text("constants.csv", csv);
    let doc = serde_json::json!({
        "c1_loglog_slope": c1_slope,
        "c1_r_squared": r_squared(&xs, &y1),
        "c2_log_slope": s2,
        "c3_log_slope": s3,
        "c2_c3_slope_ratio": s2 / s3,
    });
    exec.push_json("constants.json", &doc)?;
    exec.summary = doc;
    Ok(exec)
}

const SIM_KEYS: &[&str] = &[
    "n", "nt", "len", "t", "eps", "seed", "substeps", "noise_scale", "cap", "slices", "bin",
    "c0", "c1", "c2", "c3", "constants", "c_wick", "init",
];

fn simulate(equation: Equation, p: &Params) -> Result<Execution> {
    reject_unknown(p, SIM_KEYS)?;
    let g = match equation {
        Equation::Phi4_2d => grid_from(p, 2, 64, 64, 1.0, 0.25)?,
        _ => grid_from(p, 1, 256, 2048, 1.0, 0.25)?,
    };
    let eps = get_f64(p, "eps", 0.125)?;
    let seed = get_u64(p, "seed", 1)?;
    let mut cfg = SolverConfig::new(equation, g, eps, seed);
    cfg.noise_scale = get_f64(p, "noise_scale", 1.0)?;
    cfg.cap = get_f64(p, "cap", 1e3)?;
    cfg.substeps = get_usize(
        p,
        "substeps",
        match equation {
            Equation::Phi4_2d => (g.dt() / 2e-4).ceil() as usize,
            _ => 1,
        },
    )?;
    let mut exec = Execution::new();
    exec.master_seed = Some(seed);
    exec.substreams.insert("noise".into(), seed);
    match equation {
        Equation::Kpz1d => {
            exec.closure_hash = Some(closure_hash_of(&RuleSet::kpz_default())?);
            match get_str(p, "constants", "auto").as_str() {
                "auto" => cfg.constants = estimate_renorm_constants_kpz(g, eps)?,
                "zero" => {}
                other => {
                    return Err(Error::Config(format!(
                        "key `constants`: `{other}` is not auto|zero (or set c0..c3)"
                    )))
                }
            }
            cfg.constants.c0 = get_f64(p, "c0", cfg.constants.c0)?;
            cfg.constants.c1 = get_f64(p, "c1", cfg.constants.c1)?;
            cfg.constants.c2 = get_f64(p, "c2", cfg.constants.c2)?;
            cfg.constants.c3 = get_f64(p, "c3", cfg.constants.c3)?;
        }
        Equation::Phi4_2d => {
            cfg.c_wick = match get_str(p, "c_wick", "auto").as_str() {
                "auto" => phi4_scheme_variance(g, eps, cfg.substeps)?,
                v => v
                    .parse()
                    .map_err(|_| Error::Config(format!("key `c_wick`: `{v}` is not auto|number")))?,
            };
        }
        Equation::She1d => {
            let init = get_f64(p, "init", 1.0)?;
            cfg.initial = vec![init; g.spatial_points()];
        }
    }
    let field = match equation {
        Equation::Kpz1d => solve_kpz(&cfg)?,
        Equation::Phi4_2d => solve_phi4_dpd(&cfg)?,
        Equation::She1d => solve_she_cole_hopf(&cfg)?,
    };

    let sp = g.spatial_points();
    let slices = get_usize(p, "slices", 8)?.clamp(1, g.nt);
    let mut csv = String::new();
    if g.d == 1 {
        csv.push_str("t");
        for i in 0..g.n {
            csv.push_str(&format!(",x{i}"));
        }
        csv.push('\n');
        for j in 0..slices {
            let it = if slices == 1 { g.nt - 1 } else { j * (g.nt - 1) / (slices - 1) };
            csv.push_str(&format!("{}", it as f64 * g.dt()));
            for s in 0..sp {
                csv.push_str(&format!(",{}", field.data[it * sp + s]));
            }
            csv.push('\n');
        }
    } else {
        // final slice as a matrix
        for row in 0..g.n {
            let line: Vec<String> = (0..g.n)
                .map(|col| format!("{}", field.data[(g.nt - 1) * sp + row * g.n + col]))
                .collect();
            csv.push_str(&line.join(","));
            csv.push('\n');
        }
    }
    exec.push_text("solution.csv", csv);
    if get_bool(p, "bin", true)? {
        let mut bytes = Vec::with_capacity(field.data.len() * 8);
        for v in &field.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        exec.artifacts.push(("solution.bin".into(), bytes));
    }
    let fin = &field.data[(g.nt - 1) * sp..];
    let mean = fin.iter().sum::<f64>() / sp as f64;
    let var = fin.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / sp as f64;
    let doc = serde_json::json!({
        "equation": equation,
        "eps": eps,
        "dt": g.dt() / cfg.substeps as f64,
        "sup_norm": field.sup_norm(),
        "final_mean": mean,
        "final_variance": var,
        "constants": cfg.constants.as_array(),
        "c_wick": cfg.c_wick,
    });
    exec.push_json("run.json", &doc)?;
    exec.summary = doc;
    Ok(exec)
}

fn study_converge(p: &Params) -> Result<Execution> {
    reject_unknown(
        p,
        &["equation", "n", "nt", "len", "t", "eps", "seeds", "constants"],
    )?;
    let equation = match get_str(p, "equation", "").as_str() {
        "phi4" | "phi4_2d" => Equation::Phi4_2d,
        "kpz" | "kpz_1d" => Equation::Kpz1d,
        "she" | "she_1d" => Equation::She1d,
        other => {
            return Err(Error::Config(format!(
                "key `equation`: `{other}` is not phi4|kpz|she"
            )))
        }
    };
    let g = match equation {
        Equation::Phi4_2d => grid_from(p, 2, 64, 64, 1.0, 0.25)?,
        _ => grid_from(p, 1, 256, 2048, 1.0, 0.25)?,
    };
    let default_ladder: &[f64] = match equation {
        Equation::Phi4_2d => &[0.25, 0.125, 0.0625],
        _ => &[0.5, 0.1767767, 0.0625],
    };
    let ladder = get_f64_list(p, "eps", default_ladder)?;
    let seeds = get_u64_list(p, "seeds", &[1, 2, 3])?;
    let mode = get_str(p, "constants", "auto");
    let constants = |e: f64| -> Result<crate::wick::RenormConstants> {
        match (equation, mode.as_str()) {
            (Equation::Kpz1d, "auto") => estimate_renorm_constants_kpz(g, e),
            (_, "auto") | (_, "zero") => Ok(crate::wick::RenormConstants::zero(e)),
            (_, other) => Err(Error::Config(format!(
                "key `constants`: `{other}` is not auto|zero"
            ))),
        }
    };
    let report = convergence_study(equation, g, &ladder, &seeds, &constants)?;
    let mut exec = Execution::new();
    exec.substreams
        .extend(seeds.iter().map(|&s| (format!("seed_{s}"), s)));
    let mut csv = String::from("seed,eps_coarse,eps_fine,distance\n");
    for (si, seed) in seeds.iter().enumerate() {
        for (pair, d) in report.dists[si].iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                seed,
                ladder[pair],
                ladder[pair + 1],
                d
            ));
        }
    }
    exec.push_text("study.csv", csv);
    exec.push_json("study.json", &report)?;
    exec.summary = serde_json::json!({
        "rate": report.rate,
        "decreasing": report.decreasing,
        "errors": report.errors,
    });
    Ok(exec)
}

/// Dispatch a resolved command. This is the single entry point used both by
/// fresh runs and by `rerun`, which is what makes manifests reproducible.
pub fn execute(command: &str, params: &Params) -> Result<Execution> {
    match command {
        "symbols generate" => symbols_generate(params),
        "symbols check-subcritical" => symbols_check_subcritical(params),
        "hopf verify" => hopf_verify(params),
        "renorm derive" => renorm_derive(params),
        "model build" => model_build(params),
        "model check" => model_check(params),
        "estimate holder" => estimate_holder(params),
        "estimate constants" => estimate_constants(params),
        "simulate phi4" => simulate(Equation::Phi4_2d, params),
        "simulate kpz" => simulate(Equation::Kpz1d, params),
        "simulate she" => simulate(Equation::She1d, params),
        "study converge" => study_converge(params),
        other => Err(Error::Config(format!("unknown command `{other}`"))),
    }
}

/// Execute a command and write artifacts plus `manifest.json` into `outdir`.
pub fn run_to_dir(command: &str, params: &Params, outdir: &Path) -> Result<(Manifest, Execution)> {
    let exec = execute(command, params)?;
    fs::create_dir_all(outdir)?;
    let mut records = Vec::new();
    for (name, bytes) in &exec.artifacts {
        fs::write(outdir.join(name), bytes)?;
        records.push(ArtifactRecord {
            name: name.clone(),
            sha256: sha_hex(bytes),
            bytes: bytes.len(),
        });
    }
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        params: params.clone(),
        master_seed: exec.master_seed,
        substreams: exec.substreams.clone(),
        closure_hash: exec.closure_hash.clone(),
        artifacts: records,
    };
    let mut mbytes = serde_json::to_vec_pretty(&manifest)?;
    mbytes.push(b'\n');
    fs::write(outdir.join("manifest.json"), mbytes)?;
    Ok((manifest, exec))
}

/// Re-execute a stored manifest into `outdir` and verify that every artifact
/// hash matches. Returns the mismatched artifact names.
pub fn rerun_manifest(manifest_path: &Path, outdir: &Path) -> Result<(Manifest, Vec<String>)> {
    let text = fs::read_to_string(manifest_path)?;
    let stored: Manifest = serde_json::from_str(&text)?;
    let (fresh, _) = run_to_dir(&stored.command, &stored.params, outdir)?;
    let mut mismatched = Vec::new();
    let stored_map: BTreeMap<&str, &str> = stored
        .artifacts
        .iter()
        .map(|a| (a.name.as_str(), a.sha256.as_str()))
        .collect();
    for a in &fresh.artifacts {
        if stored_map.get(a.name.as_str()) != Some(&a.sha256.as_str()) {
            mismatched.push(a.name.clone());
        }
    }
    if fresh.artifacts.len() != stored.artifacts.len() {
        mismatched.push("(artifact list changed)".into());
    }
    Ok((fresh, mismatched))
}

// ----- argument parsing -----

#[derive(Parser)]
#[command(
    name = "regstruct",
    version,
    about = "Symbolic and numerical toolkit for singular SPDE models"
)]
struct Cli {
    /// Print the run manifest as JSON instead of a human summary.
    #[arg(long, global = true)]
    json: bool,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Plain-text `key = value` configuration file with optional sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct RuleFlags {
    /// Rule set: kpz, phi4 or generic.
    #[arg(long)]
    rules: Option<String>,
    /// Noise homogeneity as a rational, e.g. -151/100.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Homogeneity cap of the generated closure as a rational.
    #[arg(long)]
    gamma: Option<String>,
    /// Spatial dimension (rule-set dependent default).
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Args, Default)]
struct GridFlags {
    /// Spatial points per axis (power of two).
    #[arg(long)]
    n: Option<usize>,
    /// Time slots (power of two).
    #[arg(long)]
    nt: Option<usize>,
    /// Spatial period.
    #[arg(long)]
    len: Option<f64>,
    /// Time horizon.
    #[arg(long)]
    t: Option<f64>,
    /// Mollification scale.
    #[arg(long)]
    eps: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Symbol-set generation and subcriticality checks.
    Symbols {
        #[command(subcommand)]
        sub: SymbolsCmd,
    },
    /// Structure-group Hopf-algebra identity suite.
    Hopf {
        #[command(subcommand)]
        sub: HopfCmd,
    },
    /// Renormalised-equation derivation.
    Renorm {
        #[command(subcommand)]
        sub: RenormCmd,
    },
    /// Canonical-model construction and checks.
    Model {
        #[command(subcommand)]
        sub: ModelCmd,
    },
    /// Numerical estimators on noise realisations.
    Estimate {
        #[command(subcommand)]
        sub: EstimateCmd,
    },
    /// Run a renormalised solver.
    Simulate {
        #[command(subcommand)]
        sub: SimulateCmd,
    },
    /// Multi-seed, multi-scale convergence studies.
    Study {
        #[command(subcommand)]
        sub: StudyCmd,
    },
    /// Re-execute a manifest and verify artifact hashes.
    Rerun {
        /// Path to a manifest.json produced by an earlier run.
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Subcommand)]
enum SymbolsCmd {
    /// Generate the symbol closure and export it as JSON.
    Generate {
        #[command(flatten)]
        rules: RuleFlags,
    },
    /// Iterate symbol generation and report whether it stabilises.
    CheckSubcritical {
        #[command(flatten)]
        rules: RuleFlags,
        /// Generation depth to explore.
        #[arg(long)]
        depth: Option<usize>,
        /// Expected verdict: finite or growing (exit 1 on mismatch).
        #[arg(long)]
        expect: Option<String>,
    },
}

#[derive(Subcommand)]
enum HopfCmd {
    /// Run the exact-arithmetic identity suite.
    Verify {
        /// Homogeneity cap of the closure (rational).
        #[arg(long)]
        gamma: Option<String>,
        /// Number of random rational characters for the group-law check.
        #[arg(long)]
        chars: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum RenormCmd {
    /// Derive the renormalised equation's counterterm coefficients.
    Derive {
        #[command(flatten)]
        rules: RuleFlags,
        /// C0 as a rational, or `formal`.
        #[arg(long, allow_hyphen_values = true)]
        c0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        c1: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        c2: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        c3: Option<String>,
    },
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Build the canonical model and write per-symbol statistics.
    Build {
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Build the canonical model and run admissibility and scaling checks.
    Check {
        #[command(flatten)]
        grid: GridFlags,
    },
}

#[derive(Subcommand)]
enum EstimateCmd {
    /// Hölder exponent of a mollified-noise field (xi or kxi).
    Holder {
        #[command(flatten)]
        grid: GridFlags,
        /// Which field: xi (mollified noise) or kxi (kernel-smoothed).
        #[arg(long)]
        field: Option<String>,
    },
    /// Renormalisation constants over a mollification ladder.
    Constants {
        #[command(flatten)]
        grid: GridFlags,
    },
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// Dynamic Φ⁴ in two dimensions (remainder formulation).
    Phi4 {
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Renormalised KPZ in one dimension.
    Kpz {
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Multiplicative stochastic heat equation (log solution).
    She {
        #[command(flatten)]
        grid: GridFlags,
    },
}

#[derive(Subcommand)]
enum StudyCmd {
    /// Coupled-noise convergence study over a mollification ladder.
    Converge {
        /// Equation: phi4, kpz or she.
        #[arg(long)]
        equation: Option<String>,
        /// Grid flags; `--eps` takes a comma-separated mollification ladder.
        #[command(flatten)]
        grid: GridFlags,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
    },
}

fn put(params: &mut Params, key: &str, v: Option<String>) {
    if let Some(v) = v {
        params.insert(key.to_string(), v);
    }
}

impl RuleFlags {
    fn fill(self, params: &mut Params) {
        put(params, "rules", self.rules);
        put(params, "alpha", self.alpha);
        put(params, "gamma", self.gamma);
        put(params, "d", self.d.map(|v| v.to_string()));
    }
}

impl GridFlags {
    fn fill(self, params: &mut Params) {
        put(params, "n", self.n.map(|v| v.to_string()));
        put(params, "nt", self.nt.map(|v| v.to_string()));
        put(params, "len", self.len.map(|v| v.to_string()));
        put(params, "t", self.t.map(|v| v.to_string()));
        put(params, "eps", self.eps);
        put(params, "seed", self.seed.map(|v| v.to_string()));
    }
}

fn command_of(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Symbols { sub: SymbolsCmd::Generate { .. } } => "symbols generate",
        Cmd::Symbols { sub: SymbolsCmd::CheckSubcritical { .. } } => "symbols check-subcritical",
        Cmd::Hopf { .. } => "hopf verify",
        Cmd::Renorm { .. } => "renorm derive",
        Cmd::Model { sub: ModelCmd::Build { .. } } => "model build",
        Cmd::Model { sub: ModelCmd::Check { .. } } => "model check",
        Cmd::Estimate { sub: EstimateCmd::Holder { .. } } => "estimate holder",
        Cmd::Estimate { sub: EstimateCmd::Constants { .. } } => "estimate constants",
        Cmd::Simulate { sub: SimulateCmd::Phi4 { .. } } => "simulate phi4",
        Cmd::Simulate { sub: SimulateCmd::Kpz { .. } } => "simulate kpz",
        Cmd::Simulate { sub: SimulateCmd::She { .. } } => "simulate she",
        Cmd::Study { .. } => "study converge",
        Cmd::Rerun { .. } => "rerun",
    }
}

fn flags_into_params(cmd: Cmd, params: &mut Params) {
    match cmd {
        Cmd::Symbols { sub: SymbolsCmd::Generate { rules } } => rules.fill(params),
        Cmd::Symbols {
            sub: SymbolsCmd::CheckSubcritical { rules, depth, expect },
        } => {
            rules.fill(params);
            put(params, "depth", depth.map(|v| v.to_string()));
            put(params, "expect", expect);
        }
        Cmd::Hopf { sub: HopfCmd::Verify { gamma, chars, seed } } => {
            put(params, "gamma", gamma);
            put(params, "chars", chars.map(|v| v.to_string()));
            put(params, "seed", seed.map(|v| v.to_string()));
        }
        Cmd::Renorm { sub: RenormCmd::Derive { rules, c0, c1, c2, c3 } } => {
            rules.fill(params);
            put(params, "c0", c0);
            put(params, "c1", c1);
            put(params, "c2", c2);
            put(params, "c3", c3);
        }
        Cmd::Model { sub: ModelCmd::Build { grid } }
        | Cmd::Model { sub: ModelCmd::Check { grid } } => grid.fill(params),
        Cmd::Estimate { sub: EstimateCmd::Holder { grid, field } } => {
            grid.fill(params);
            put(params, "field", field);
        }
        Cmd::Estimate { sub: EstimateCmd::Constants { grid } } => grid.fill(params),
        Cmd::Simulate { sub } => match sub {
            SimulateCmd::Phi4 { grid } | SimulateCmd::Kpz { grid } | SimulateCmd::She { grid } => {
                grid.fill(params)
            }
        },
        Cmd::Study { sub: StudyCmd::Converge { equation, grid, seeds } } => {
            put(params, "equation", equation);
            grid.fill(params);
            put(params, "seeds", seeds);
        }
        Cmd::Rerun { .. } => {}
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Binary entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn run_cli(cli: Cli) -> Result<i32> {
    if let Cmd::Rerun { manifest } = &cli.cmd {
        let (fresh, mismatched) = rerun_manifest(manifest, &cli.out)?;
        if cli.json {
            println!("{}", serde_json::to_string_pretty(&fresh)?);
        } else if mismatched.is_empty() {
            println!(
                "regenerated {} artifacts in {} — all hashes match",
                fresh.artifacts.len(),
                cli.out.display()
            );
        }
        if !mismatched.is_empty() {
            eprintln!("artifact hash mismatch: {}", mismatched.join(", "));
            return Ok(1);
        }
        return Ok(0);
    }

    let command = command_of(&cli.cmd);
    let mut params = match &cli.config {
        Some(path) => select_for_command(&parse_config_text(&fs::read_to_string(path)?)?, command),
        None => Params::new(),
    };
    for kv in &cli.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(Error::Config(format!("--set expects key=value, got `{kv}`")));
        };
        params.insert(k.trim().to_string(), v.trim().to_string());
    }
    flags_into_params(cli.cmd, &mut params);

    let (manifest, exec) = run_to_dir(command, &params, &cli.out)?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&manifest)?);
    } else {
        println!(
            "{} — wrote {} artifacts to {}",
            command,
            manifest.artifacts.len(),
            cli.out.display()
        );
        if let Ok(s) = serde_json::to_string(&exec.summary) {
            println!("summary: {s}");
        }
    }
    if exec.failures.is_empty() {
        Ok(0)
    } else {
        for f in &exec.failures {
            eprintln!("check failed: {f}");
        }
        Ok(1)
    }
}
