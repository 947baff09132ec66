//! Verification pipeline and discovery.
//!
//! Exact mode derives one set of contiguous relations shared by every term,
//! enumerates the integer points `Pi_W` of the fundamental parallelepiped
//! of their `w` vectors, and compares closed-form coefficients at each
//! point. The relations then determine every other coefficient, so a zero
//! residual on `Pi_W` proves the identity.
//!
//! Series mode is the fallback when some term has dependent exponent
//! vectors. It compares truncated expansions on one representative per
//! class modulo `W` and never reports a proof.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeff::{cf_decide, cf_sum, cf_to_series, extract_exact, CoeffAtom, CoeffError, CoefficientForm, Verdict};
use crate::contiguous::{
    apply_shift, common_relation_system, first_term_system, ContiguousRelation, MismatchReport, RelationSystem,
};
use crate::linalg::{fmt_rat, int_rank, kernel_basis, parse_rat, primitive_integer_vector, rat, RatMatrix, Rational};
use crate::model::{exponent_space, same_span, validate_term, Identity, IntVector, PochQuotient, ThetaTerm, ValidationReport};
use crate::parallelepiped::{pi_points_limited, Decomposer, PiError, PiSet};
use crate::parser::{format_identity, format_int_vector, format_mono, format_rat_vector, format_term};
use crate::qseries::{expand_term, expand_term_at, series_denominator, term_denominator, LaurentMap, QSeries, SeriesError};

/// Largest `Pi_W` that exact mode will enumerate.
pub const MAX_PI_POINTS: usize = 1_000_000;
/// Largest number of classes series mode will check.
pub const MAX_SERIES_CLASSES: usize = 10_000;
/// Default truncation order for discovery.
pub const DISCOVERY_ORDER: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Series(i64),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Exact => f.write_str("Exact"),
            Mode::Series(n) => write!(f, "Series({n})"),
        }
    }
}

/// Which mode the caller asks for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ModeChoice {
    /// Exact when the soundness gate passes, series otherwise.
    #[default]
    Auto,
    Exact,
    Series,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Proved,
    VerifiedToOrder(i64),
    Failed(String),
    Unsupported(String),
}

impl Status {
    /// Name used in JSON output.
    pub fn label(&self) -> &'static str {
        match self {
            Status::Proved => "Proved",
            Status::VerifiedToOrder(_) => "VerifiedToOrder",
            Status::Failed(_) => "Failed",
            Status::Unsupported(_) => "Unsupported",
        }
    }

    /// Process exit code for this status.
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Proved => 0,
            Status::VerifiedToOrder(_) => 2,
            Status::Failed(_) | Status::Unsupported(_) => 1,
        }
    }
}

/// A shared relation and whether each term reproduces it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRecord {
    pub relation: ContiguousRelation,
    pub per_term_ok: Vec<bool>,
}

/// Coefficients of `a^beta` in every term and their sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub beta: IntVector,
    pub terms: Vec<CoefficientForm>,
    pub residual: CoefficientForm,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    /// Canonical identity text, `vars ...` on the first line.
    pub identity: String,
    pub mode: Mode,
    pub relations: Vec<RelationRecord>,
    pub w: Vec<IntVector>,
    pub pi: Vec<IntVector>,
    pub checks: Vec<Check>,
    pub status: Status,
}

impl Certificate {
    fn new(identity: &Identity) -> Self {
        Self {
            identity: format_identity(identity),
            mode: Mode::Exact,
            relations: Vec::new(),
            w: Vec::new(),
            pi: Vec::new(),
            checks: Vec::new(),
            status: Status::Unsupported(String::new()),
        }
    }

    /// Variable names from the identity text.
    pub fn vars(&self) -> Vec<String> {
        self.identity
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("vars"))
            .map(|rest| rest.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default()
    }

    /// First check whose verdict is `NonZero`.
    pub fn failing_check(&self) -> Option<&Check> {
        self.checks.iter().find(|c| c.verdict == Verdict::NonZero)
    }
}

/// Preconditions of the exact method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateReport {
    pub terms: Vec<ValidationReport>,
    /// First pair of terms whose exponent spaces differ.
    pub span_mismatch: Option<(usize, usize)>,
    /// Whether each prefactor exponent lies in the common exponent space.
    pub kappa_in_span: Vec<bool>,
    /// Whether the relations span the common exponent space.
    pub relations_cover_span: bool,
}

impl GateReport {
    pub fn passes(&self) -> bool {
        self.terms.iter().all(|t| t.exact_mode_eligible)
            && self.span_mismatch.is_none()
            && self.kappa_in_span.iter().all(|&k| k)
            && self.relations_cover_span
    }

    /// Human-readable reasons the gate fails; empty when it passes.
    pub fn reasons(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, t) in self.terms.iter().enumerate() {
            if !t.gammas_independent {
                out.push(format!("term {}: factor exponent vectors are dependent", i + 1));
            }
            if !t.m_in_range {
                out.push(format!("term {}: factor count outside 2..=r", i + 1));
            }
        }
        if let Some((i, j)) = self.span_mismatch {
            out.push(format!("terms {} and {} have different exponent spaces", i + 1, j + 1));
        }
        for (i, &k) in self.kappa_in_span.iter().enumerate() {
            if !k {
                out.push(format!("term {}: prefactor exponent outside the exponent space", i + 1));
            }
        }
        if !self.relations_cover_span {
            out.push("relations do not span the exponent space".to_string());
        }
        out
    }
}

/// Checks the hypotheses under which `Pi_W` bounds the dimension.
pub fn soundness_gate(identity: &Identity, relations: &RelationSystem) -> GateReport {
    let r = identity.num_vars();
    let terms: Vec<ValidationReport> = identity.terms.iter().map(|t| validate_term(t, r)).collect();
    let spaces: Vec<Vec<IntVector>> = identity.terms.iter().map(exponent_space).collect();
    let mut span_mismatch = None;
    'outer: for i in 0..spaces.len() {
        for j in i + 1..spaces.len() {
            if !same_span(&spaces[i], &spaces[j], r) {
                span_mismatch = Some((i, j));
                break 'outer;
            }
        }
    }
    let base: &[IntVector] = spaces.first().map(Vec::as_slice).unwrap_or(&[]);
    let dim = int_rank(base, r);
    let kappa_in_span = identity
        .terms
        .iter()
        .map(|t| {
            let mut v = base.to_vec();
            v.push(t.mono.aexp.clone());
            int_rank(&v, r) == dim
        })
        .collect();
    let w = relations.w_vectors();
    let mut joint = base.to_vec();
    joint.extend(w.iter().cloned());
    let relations_cover_span = w.len() == dim && int_rank(&w, r) == dim && int_rank(&joint, r) == dim;
    GateReport {
        terms,
        span_mismatch,
        kappa_in_span,
        relations_cover_span,
    }
}

fn records(identity: &Identity, system: &RelationSystem) -> Vec<RelationRecord> {
    system
        .relations
        .iter()
        .map(|rel| RelationRecord {
            relation: rel.clone(),
            per_term_ok: identity
                .terms
                .iter()
                .map(|t| matches!(apply_shift(t, &rel.alpha), Ok(g) if g.same_effect(rel)))
                .collect(),
        })
        .collect()
}

/// [`verify_with`] in automatic mode.
pub fn verify(identity: &Identity, shifts: Option<&[Vec<Rational>]>, n_order: i64) -> Certificate {
    verify_with(identity, shifts, n_order, ModeChoice::Auto)
}

/// Runs the full pipeline. Every outcome, including failure, is reported
/// in the certificate status.
pub fn verify_with(
    identity: &Identity,
    shifts: Option<&[Vec<Rational>]>,
    n_order: i64,
    choice: ModeChoice,
) -> Certificate {
    let mut cert = Certificate::new(identity);
    if identity.terms.len() < 2 {
        cert.status = Status::Unsupported("an identity needs at least two terms".into());
        return cert;
    }
    if n_order < 1 {
        cert.status = Status::Unsupported("the order must be positive".into());
        return cert;
    }
    let system = match common_relation_system(identity, shifts) {
        Ok(s) => s,
        Err(m) => {
            cert.status = mismatch_status(&m);
            if let Ok(first) = first_term_system(identity, shifts) {
                cert.relations = records(identity, &first);
                cert.w = first.w_vectors();
            }
            return cert;
        }
    };
    cert.relations = records(identity, &system);
    cert.w = system.w_vectors();
    let gate = soundness_gate(identity, &system);
    let exact = match choice {
        ModeChoice::Auto => gate.passes(),
        ModeChoice::Series => false,
        ModeChoice::Exact if gate.passes() => true,
        ModeChoice::Exact => {
            cert.status = Status::Unsupported(format!("exact mode unavailable: {}", gate.reasons().join("; ")));
            return cert;
        }
    };
    if exact {
        verify_exact(identity, n_order, &mut cert);
    } else {
        verify_series(identity, n_order, &mut cert);
    }
    cert
}

fn mismatch_status(m: &MismatchReport) -> Status {
    if m.relation == usize::MAX || m.term == 0 {
        Status::Unsupported(format!("no usable relations: {m}"))
    } else {
        Status::Failed(format!("relation mismatch: {m}"))
    }
}

fn verify_exact(identity: &Identity, n_order: i64, cert: &mut Certificate) {
    cert.mode = Mode::Exact;
    let pi = match pi_points_limited(&cert.w, MAX_PI_POINTS) {
        Ok(p) => p,
        Err(e) => {
            cert.status = Status::Unsupported(format!("parallelepiped: {e}"));
            return;
        }
    };
    cert.pi = pi.points.clone();
    let checks: Result<Vec<Check>, CoeffError> = pi
        .points
        .par_iter()
        .map(|beta| exact_check(identity, beta, n_order))
        .collect();
    match checks {
        Ok(checks) => cert.checks = checks,
        Err(e) => {
            cert.status = Status::Unsupported(format!("coefficient extraction: {e}"));
            return;
        }
    }
    cert.status = exact_status(&cert.checks);
}

fn exact_check(identity: &Identity, beta: &[i64], n_order: i64) -> Result<Check, CoeffError> {
    let terms = identity
        .terms
        .iter()
        .map(|t| extract_exact(t, beta))
        .collect::<Result<Vec<_>, _>>()?;
    let residual = cf_sum(&terms);
    let verdict = cf_decide(&residual, n_order, true);
    Ok(Check {
        beta: beta.to_vec(),
        terms,
        residual,
        verdict,
    })
}

fn exact_status(checks: &[Check]) -> Status {
    if let Some(c) = checks.iter().find(|c| c.verdict == Verdict::NonZero) {
        return Status::Failed(format!("nonzero residual at beta = {}", format_int_vector(&c.beta)));
    }
    let mut least: Option<i64> = None;
    for c in checks {
        if let Verdict::UnknownToOrder(n) = c.verdict {
            least = Some(least.map_or(n, |m| m.min(n)));
        }
    }
    match least {
        None => Status::Proved,
        Some(0) => Status::Unsupported("a residual could not be expanded as a series".into()),
        Some(n) => Status::VerifiedToOrder(n),
    }
}

/// A truncated series as a polynomial coefficient form.
fn series_form(s: &QSeries) -> CoefficientForm {
    let d = s.denom();
    CoefficientForm::from_atoms(
        s.iter()
            .map(|(k, c)| CoeffAtom {
                c: c.clone(),
                e: Rational::new(k.into(), d.into()),
                sig: PochQuotient::new(),
            })
            .collect(),
    )
}

fn verify_series(identity: &Identity, n_order: i64, cert: &mut Certificate) {
    cert.mode = Mode::Series(n_order);
    let d = series_denominator(identity, &[]);
    let maps: Result<Vec<LaurentMap>, SeriesError> =
        identity.terms.par_iter().map(|t| expand_term(t, n_order, d)).collect();
    let maps = match maps {
        Ok(m) => m,
        Err(e) => {
            cert.status = Status::Unsupported(format!("series expansion: {e}"));
            return;
        }
    };
    let mut classes: BTreeSet<IntVector> = BTreeSet::new();
    if let Ok(pi) = pi_points_limited(&cert.w, MAX_SERIES_CLASSES) {
        cert.pi = pi.points.clone();
        classes.extend(pi.points);
    }
    let decomposer = Decomposer::new(&cert.w).ok();
    for map in &maps {
        for (eta, _) in map.iter() {
            let rep = decomposer
                .as_ref()
                .and_then(|dec| dec.decompose(eta).ok())
                .map_or_else(|| eta.clone(), |(beta, _)| beta);
            classes.insert(rep);
        }
        if classes.len() > MAX_SERIES_CLASSES {
            cert.status = Status::Unsupported(format!("more than {MAX_SERIES_CLASSES} classes to check"));
            return;
        }
    }
    let checks: Result<Vec<Check>, SeriesError> = classes
        .par_iter()
        .map(|beta| {
            let mut total = QSeries::zero(d, n_order * d);
            let mut terms = Vec::with_capacity(maps.len());
            for map in &maps {
                let s = map.at(beta);
                total = total.add(&s)?;
                terms.push(series_form(&s));
            }
            let verdict = if total.is_zero() {
                Verdict::UnknownToOrder(n_order)
            } else {
                Verdict::NonZero
            };
            Ok(Check {
                beta: beta.clone(),
                terms,
                residual: series_form(&total),
                verdict,
            })
        })
        .collect();
    match checks {
        Ok(c) => cert.checks = c,
        Err(e) => {
            cert.status = Status::Unsupported(format!("series expansion: {e}"));
            return;
        }
    }
    cert.status = match cert.failing_check() {
        Some(c) => Status::Failed(format!("nonzero residual at beta = {}", format_int_vector(&c.beta))),
        None => Status::VerifiedToOrder(n_order),
    };
}

/// Coefficient at `beta + sum b_i w_i` obtained from the coefficient at
/// `beta` by iterating the relations in order. Each step uses
/// `h(eta + w) = (-1)^rho q^(s + alpha . eta) h(eta)`.
pub fn propagate(base: &CoefficientForm, beta: &[i64], b: &[i64], relations: &RelationSystem) -> CoefficientForm {
    let dot = |alpha: &[Rational], v: &[i64]| -> Rational {
        alpha.iter().zip(v).fold(Rational::zero(), |acc, (a, &x)| acc + a * rat(x))
    };
    let mut eta = beta.to_vec();
    let mut shift = Rational::zero();
    let mut parity = 0i64;
    for (rel, &bi) in relations.relations.iter().zip(b) {
        let aw = dot(&rel.alpha, &rel.w);
        let choose2 = rat(bi * (bi - 1) / 2);
        shift += rat(bi) * &rel.s + rat(bi) * dot(&rel.alpha, &eta) + choose2 * aw;
        parity += bi * rel.rho as i64;
        for (e, w) in eta.iter_mut().zip(&rel.w) {
            *e += bi * w;
        }
    }
    let sign = if parity.is_odd() { -Rational::one() } else { Rational::one() };
    CoefficientForm::from_atoms(
        base.atoms
            .iter()
            .map(|a| CoeffAtom {
                c: &a.c * &sign,
                e: &a.e + &shift,
                sig: a.sig.clone(),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub candidate: usize,
    pub reason: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "candidate {}: {}", self.candidate + 1, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiscoveryError {
    #[error("no candidates given")]
    NoCandidates,
    #[error("no candidates survive the relations: {}", list(.0))]
    NoCandidatesSurvive(Vec<Rejection>),
    #[error("relation {relation} has {found} entries, expected {expected}")]
    DimensionMismatch {
        relation: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Pi(#[from] PiError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

fn list(r: &[Rejection]) -> String {
    r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A verified linear dependency among the surviving candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dependency {
    /// Primitive integer coefficients, first nonzero entry positive.
    pub coefficients: Vec<Rational>,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscoveryResult {
    /// Candidates that satisfy every relation.
    pub candidates: Vec<ThetaTerm>,
    /// Input positions of `candidates`.
    pub kept: Vec<usize>,
    pub rejected: Vec<Rejection>,
    pub pi: PiSet,
    /// Truncation order of the final nullspace computation.
    pub order: i64,
    pub dependencies: Vec<Dependency>,
}

fn relation_rejection(term: &ThetaTerm, relations: &RelationSystem) -> Option<String> {
    for (j, rel) in relations.relations.iter().enumerate() {
        match apply_shift(term, &rel.alpha) {
            Ok(g) if g.same_effect(rel) => {}
            Ok(g) => {
                return Some(format!(
                    "relation {} gives rho={}, w={}, s={} instead of rho={}, w={}, s={}",
                    j + 1,
                    g.rho,
                    format_int_vector(&g.w),
                    fmt_rat(&g.s),
                    rel.rho,
                    format_int_vector(&rel.w),
                    fmt_rat(&rel.s)
                ))
            }
            Err(e) => return Some(format!("relation {}: {e}", j + 1)),
        }
    }
    None
}

/// Coefficient series of `a^beta` in one candidate.
fn candidate_series(term: &ThetaTerm, beta: &[i64], n_order: i64, d: i64) -> Result<QSeries, DiscoveryError> {
    if validate_term(term, term.num_vars()).gammas_independent {
        Ok(cf_to_series(&extract_exact(term, beta)?, n_order, d)?)
    } else {
        Ok(expand_term_at(term, beta, n_order, d)?)
    }
}

fn nullspace(terms: &[ThetaTerm], pi: &[IntVector], n_order: i64, d: i64) -> Result<Vec<Vec<Rational>>, DiscoveryError> {
    let mut rows: BTreeMap<(usize, i64), Vec<Rational>> = BTreeMap::new();
    for (j, term) in terms.iter().enumerate() {
        for (i, beta) in pi.iter().enumerate() {
            let s = candidate_series(term, beta, n_order, d)?;
            for (k, c) in s.iter() {
                rows.entry((i, k)).or_insert_with(|| vec![Rational::zero(); terms.len()])[j] = c.clone();
            }
        }
    }
    if rows.is_empty() {
        // Every column vanishes to this order; all directions survive.
        let id = RatMatrix::identity(terms.len());
        return Ok((0..terms.len()).map(|i| id.row(i).to_vec()).collect());
    }
    let data: Vec<Vec<Rational>> = rows.into_values().collect();
    Ok(kernel_basis(&RatMatrix::from_rows(&data, terms.len())))
}

/// Finds integer dependencies among candidate products that share the
/// given relations. Each reported dependency has been re-verified.
pub fn discover(
    vars: &[String],
    relations: &RelationSystem,
    candidates: &[ThetaTerm],
    n_order: i64,
) -> Result<DiscoveryResult, DiscoveryError> {
    if candidates.is_empty() {
        return Err(DiscoveryError::NoCandidates);
    }
    let r = vars.len();
    for (j, rel) in relations.relations.iter().enumerate() {
        if rel.alpha.len() != r || rel.w.len() != r {
            return Err(DiscoveryError::DimensionMismatch {
                relation: j,
                expected: r,
                found: rel.w.len().min(rel.alpha.len()),
            });
        }
    }
    let mut kept = Vec::new();
    let mut survivors = Vec::new();
    let mut rejected = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        match relation_rejection(c, relations) {
            None => {
                kept.push(i);
                survivors.push(c.clone());
            }
            Some(reason) => rejected.push(Rejection { candidate: i, reason }),
        }
    }
    if survivors.is_empty() {
        return Err(DiscoveryError::NoCandidatesSurvive(rejected));
    }
    let pi = pi_points_limited(&relations.w_vectors(), MAX_PI_POINTS)?;
    let d = survivors
        .iter()
        .map(term_denominator)
        .fold(1i64, |acc, x| acc.lcm(&x));
    let mut order = n_order.max(1);
    let mut basis = nullspace(&survivors, &pi.points, order, d)?;
    if !basis.is_empty() {
        order *= 2;
        basis = nullspace(&survivors, &pi.points, order, d)?;
    }
    let shifts: Vec<Vec<Rational>> = relations.relations.iter().map(|x| x.alpha.clone()).collect();
    let mut dependencies = Vec::new();
    for v in basis {
        let mut ints = primitive_integer_vector(&v);
        if ints.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative()) {
            ints.iter_mut().for_each(|x| *x = -x.clone());
        }
        let coefficients: Vec<Rational> = ints.into_iter().map(Rational::from_integer).collect();
        let terms: Vec<ThetaTerm> = survivors
            .iter()
            .zip(&coefficients)
            .filter(|(_, c)| !c.is_zero())
            .map(|(t, c)| {
                let mut t = t.clone();
                t.coeff *= c;
                t
            })
            .collect();
        let identity = Identity {
            vars: vars.to_vec(),
            terms,
        };
        let certificate = verify(&identity, Some(&shifts), order);
        if matches!(certificate.status, Status::Proved | Status::VerifiedToOrder(_)) {
            dependencies.push(Dependency {
                coefficients,
                certificate,
            });
        }
    }
    Ok(DiscoveryResult {
        candidates: survivors,
        kept,
        rejected,
        pi,
        order,
        dependencies,
    })
}

/// Human-readable proof transcript.
pub fn explain(cert: &Certificate) -> String {
    let vars = cert.vars();
    let mut out = String::new();
    let _ = writeln!(out, "Identity:");
    for line in cert.identity.lines() {
        let _ = writeln!(out, "  {line}");
    }
    let _ = match cert.mode {
        Mode::Exact => writeln!(out, "Mode: exact"),
        Mode::Series(n) => writeln!(out, "Mode: series to order {n}"),
    };
    if !cert.relations.is_empty() {
        let _ = writeln!(out, "Contiguous relations:");
        for (i, rec) in cert.relations.iter().enumerate() {
            let rel = &rec.relation;
            let ratio = if vars.len() == rel.w.len() {
                format_mono(&rel.ratio(), &vars)
            } else {
                format!("{:?}", rel.ratio())
            };
            let ok: Vec<&str> = rec.per_term_ok.iter().map(|&b| if b { "ok" } else { "FAIL" }).collect();
            let _ = writeln!(
                out,
                "  {}. shift {}: theta(a q^alpha)/theta(a) = {}  w = {}  [{}]",
                i + 1,
                format_rat_vector(&rel.alpha),
                ratio,
                format_int_vector(&rel.w),
                ok.join(" ")
            );
        }
    }
    if !cert.w.is_empty() {
        let ws: Vec<String> = cert.w.iter().map(|w| format_int_vector(w)).collect();
        let _ = writeln!(out, "W = {{{}}}", ws.join(", "));
    }
    if !cert.pi.is_empty() {
        let ps: Vec<String> = cert.pi.iter().map(|p| format_int_vector(p)).collect();
        let _ = writeln!(out, "Pi_W ({} points) = {{{}}}", cert.pi.len(), ps.join(", "));
    }
    if !cert.checks.is_empty() {
        let _ = writeln!(out, "Coefficients:");
    }
    for check in &cert.checks {
        let _ = writeln!(out, "  beta = {}", format_int_vector(&check.beta));
        for (k, f) in check.terms.iter().enumerate() {
            let _ = writeln!(out, "    term {}: {}", k + 1, f);
        }
        let verdict = match check.verdict {
            Verdict::Zero => "zero".to_string(),
            Verdict::NonZero => "NONZERO".to_string(),
            Verdict::UnknownToOrder(n) => format!("zero to order {n}"),
        };
        let _ = writeln!(out, "    residual: {}  ({verdict})", check.residual);
        if check.verdict == Verdict::NonZero {
            break;
        }
    }
    let status = match &cert.status {
        Status::Proved => "proved".to_string(),
        Status::VerifiedToOrder(n) => format!("verified to order {n}"),
        Status::Failed(why) if why.is_empty() => "failed".to_string(),
        Status::Failed(why) => format!("failed: {why}"),
        Status::Unsupported(why) if why.is_empty() => "unsupported".to_string(),
        Status::Unsupported(why) => format!("unsupported: {why}"),
    };
    let _ = writeln!(out, "Status: {status}");
    out
}

/// Text form of a discovery run, one line per dependency.
pub fn describe_discovery(result: &DiscoveryResult, vars: &[String]) -> String {
    let mut out = String::new();
    for rej in &result.rejected {
        let _ = writeln!(out, "rejected {rej}");
    }
    let _ = writeln!(
        out,
        "{} candidates, |Pi_W| = {}, order {}",
        result.candidates.len(),
        result.pi.points.len(),
        result.order
    );
    for (k, t) in result.candidates.iter().enumerate() {
        let _ = writeln!(out, "  c{} = {}", k + 1, format_term(t, vars));
    }
    if result.dependencies.is_empty() {
        let _ = writeln!(out, "no dependencies");
    }
    for dep in &result.dependencies {
        let _ = writeln!(
            out,
            "dependency {}: {}",
            format_rat_vector(&dep.coefficients),
            dep.certificate.status.label()
        );
    }
    out
}

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("malformed certificate JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed field {field}: {value}")]
    Field { field: &'static str, value: String },
}

#[derive(Serialize, Deserialize)]
struct SigJson {
    s: String,
    t: String,
    power: String,
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    constant: String,
    q_exponent: String,
    signature: Vec<SigJson>,
}

#[derive(Serialize, Deserialize)]
struct RelationJson {
    alpha: Vec<String>,
    rho: String,
    w: Vec<String>,
    s: String,
    per_term_ok: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct CheckJson {
    beta: Vec<String>,
    terms: Vec<Vec<AtomJson>>,
    residual: Vec<AtomJson>,
    verdict: String,
}

#[derive(Serialize, Deserialize)]
struct CertificateJson {
    identity: String,
    mode: String,
    relations: Vec<RelationJson>,
    #[serde(rename = "W")]
    w: Vec<Vec<String>>,
    pi: Vec<Vec<String>>,
    checks: Vec<CheckJson>,
    status: String,
}

fn ints_out(v: &[i64]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn form_out(f: &CoefficientForm) -> Vec<AtomJson> {
    f.atoms
        .iter()
        .map(|a| AtomJson {
            constant: fmt_rat(&a.c),
            q_exponent: fmt_rat(&a.e),
            signature: a
                .sig
                .iter()
                .map(|(s, t, e)| SigJson {
                    s: fmt_rat(s),
                    t: fmt_rat(t),
                    power: e.to_string(),
                })
                .collect(),
        })
        .collect()
}

fn bad(field: &'static str, value: &str) -> CertificateError {
    CertificateError::Field {
        field,
        value: value.to_string(),
    }
}

fn rat_in(field: &'static str, s: &str) -> Result<Rational, CertificateError> {
    parse_rat(s).ok_or_else(|| bad(field, s))
}

fn int_in(field: &'static str, s: &str) -> Result<i64, CertificateError> {
    s.parse().map_err(|_| bad(field, s))
}

fn ints_in(field: &'static str, v: &[String]) -> Result<IntVector, CertificateError> {
    v.iter().map(|x| int_in(field, x)).collect()
}

fn form_in(atoms: &[AtomJson]) -> Result<CoefficientForm, CertificateError> {
    let mut out = Vec::with_capacity(atoms.len());
    for a in atoms {
        let mut sig = PochQuotient::new();
        for p in &a.signature {
            sig.add(rat_in("s", &p.s)?, rat_in("t", &p.t)?, int_in("power", &p.power)?);
        }
        out.push(CoeffAtom {
            c: rat_in("constant", &a.constant)?,
            e: rat_in("q_exponent", &a.q_exponent)?,
            sig,
        });
    }
    Ok(CoefficientForm { atoms: out })
}

fn parse_order(field: &'static str, s: &str, prefix: &str) -> Result<i64, CertificateError> {
    s.strip_prefix(prefix)
        .and_then(|x| x.strip_suffix(')'))
        .and_then(|x| x.parse().ok())
        .ok_or_else(|| bad(field, s))
}

impl Certificate {
    /// Pretty JSON with a fixed key order; every number is an exact string.
    pub fn to_json(&self) -> String {
        let doc = CertificateJson {
            identity: self.identity.clone(),
            mode: self.mode.to_string(),
            relations: self
                .relations
                .iter()
                .map(|r| RelationJson {
                    alpha: r.relation.alpha.iter().map(fmt_rat).collect(),
                    rho: r.relation.rho.to_string(),
                    w: ints_out(&r.relation.w),
                    s: fmt_rat(&r.relation.s),
                    per_term_ok: r.per_term_ok.clone(),
                })
                .collect(),
            w: self.w.iter().map(|v| ints_out(v)).collect(),
            pi: self.pi.iter().map(|v| ints_out(v)).collect(),
            checks: self
                .checks
                .iter()
                .map(|c| CheckJson {
                    beta: ints_out(&c.beta),
                    terms: c.terms.iter().map(form_out).collect(),
                    residual: form_out(&c.residual),
                    verdict: c.verdict.to_string(),
                })
                .collect(),
            status: self.status.label().to_string(),
        };
        serde_json::to_string_pretty(&doc).expect("certificate serializes")
    }

    /// Inverse of [`Certificate::to_json`]. Failure and unsupported
    /// reasons are not part of the JSON and come back empty.
    pub fn from_json(text: &str) -> Result<Self, CertificateError> {
        let doc: CertificateJson = serde_json::from_str(text)?;
        let mode = if doc.mode == "Exact" {
            Mode::Exact
        } else {
            Mode::Series(parse_order("mode", &doc.mode, "Series(")?)
        };
        let mut relations = Vec::new();
        for r in &doc.relations {
            let rho = match r.rho.as_str() {
                "0" => 0,
                "1" => 1,
                other => return Err(bad("rho", other)),
            };
            relations.push(RelationRecord {
                relation: ContiguousRelation {
                    alpha: r.alpha.iter().map(|x| rat_in("alpha", x)).collect::<Result<_, _>>()?,
                    rho,
                    w: ints_in("w", &r.w)?,
                    s: rat_in("s", &r.s)?,
                },
                per_term_ok: r.per_term_ok.clone(),
            });
        }
        let mut checks = Vec::new();
        for c in &doc.checks {
            let verdict = match c.verdict.as_str() {
                "Zero" => Verdict::Zero,
                "NonZero" => Verdict::NonZero,
                other => Verdict::UnknownToOrder(parse_order("verdict", other, "UnknownToOrder(")?),
            };
            checks.push(Check {
                beta: ints_in("beta", &c.beta)?,
                terms: c.terms.iter().map(|f| form_in(f)).collect::<Result<_, _>>()?,
                residual: form_in(&c.residual)?,
                verdict,
            });
        }
        let status = match doc.status.as_str() {
            "Proved" => Status::Proved,
            "VerifiedToOrder" => Status::VerifiedToOrder(match mode {
                Mode::Series(n) => n,
                Mode::Exact => checks
                    .iter()
                    .filter_map(|c| match c.verdict {
                        Verdict::UnknownToOrder(n) => Some(n),
                        _ => None,
                    })
                    .min()
                    .unwrap_or(0),
            }),
            "Failed" => Status::Failed(String::new()),
            "Unsupported" => Status::Unsupported(String::new()),
            other => return Err(bad("status", other)),
        };
        Ok(Self {
            identity: doc.identity,
            mode,
            relations,
            w: doc.w.iter().map(|v| ints_in("W", v)).collect::<Result<_, _>>()?,
            pi: doc.pi.iter().map(|v| ints_in("pi", v)).collect::<Result<_, _>>()?,
            checks,
            status,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_identity, parse_shifts};

    const IDEAB: &str = "vars a b\n(a,-b,q/a,-q/b;q) + (-a,b,-q/a,q/b;q) = 2*(q;q^2)^-2*(a*b,q^2/(a*b),a*q/b,b*q/a;q^2)";
    const QUINTUPLE: &str =
        "vars z\n(q,-z,-q/z;q)*(q*z^2,q/z^2;q^2) = (q^3,q*z^3,q^2/z^3;q^3) + z*(q^3,q^2*z^3,q/z^3;q^3)";

    #[test]
    fn ideab_is_proved_with_auto_relations() {
        let id = parse_identity(IDEAB).unwrap();
        let cert = verify(&id, None, 50);
        assert_eq!(cert.status, Status::Proved, "{}", explain(&cert));
        let count = crate::parallelepiped::pi_count(&cert.w).unwrap();
        assert_eq!(num_bigint::BigInt::from(cert.pi.len()), count);
    }

    #[test]
    fn ideab_is_proved_with_paper_shifts() {
        let id = parse_identity(IDEAB).unwrap();
        let shifts = parse_shifts("(1,1)\n(0,2)").unwrap();
        let cert = verify(&id, Some(&shifts), 50);
        assert_eq!(cert.status, Status::Proved);
        assert_eq!(cert.w, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(cert.pi, vec![vec![0, 0], vec![0, 1]]);
    }

    #[test]
    fn flipped_sign_fails() {
        let text = IDEAB.replace(" + (-a", " - (-a");
        let cert = verify(&parse_identity(&text).unwrap(), None, 50);
        assert!(matches!(cert.status, Status::Failed(_)), "{:?}", cert.status);
        assert!(cert.failing_check().is_some());
    }

    #[test]
    fn quintuple_goes_to_series_mode() {
        let id = parse_identity(QUINTUPLE).unwrap();
        let cert = verify(&id, None, 40);
        assert_eq!(cert.mode, Mode::Series(40));
        assert_eq!(cert.status, Status::VerifiedToOrder(40));
        assert_eq!(cert.w, vec![vec![3]]);
        assert_eq!(cert.pi, vec![vec![0], vec![1], vec![2]]);
        assert!(explain(&cert).contains("verified to order 40"));
        assert!(!explain(&cert).contains("proved"));
    }

    #[test]
    fn forcing_exact_on_quintuple_is_unsupported() {
        let id = parse_identity(QUINTUPLE).unwrap();
        let cert = verify_with(&id, None, 20, ModeChoice::Exact);
        assert!(matches!(cert.status, Status::Unsupported(_)));
    }

    #[test]
    fn gate_names_terms_with_different_spans() {
        let id = parse_identity("vars a b\n[a;q] = [b;q]").unwrap();
        let gate = soundness_gate(&id, &RelationSystem::default());
        assert!(!gate.passes());
        assert_eq!(gate.span_mismatch, Some((0, 1)));
        assert!(gate.reasons().iter().any(|r| r.contains("terms 1 and 2")));
    }

    #[test]
    fn gate_flags_quintuple_dependence() {
        let id = parse_identity(QUINTUPLE).unwrap();
        let sys = common_relation_system(&id, None).unwrap();
        let gate = soundness_gate(&id, &sys);
        assert!(!gate.terms[0].gammas_independent);
        assert!(!gate.passes());
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let id = parse_identity(IDEAB).unwrap();
        for cert in [verify(&id, None, 30), verify(&parse_identity(QUINTUPLE).unwrap(), None, 15)] {
            let json = cert.to_json();
            let back = Certificate::from_json(&json).unwrap();
            assert_eq!(back.to_json(), json);
            assert_eq!(back.checks, cert.checks);
            assert_eq!(back.status.label(), cert.status.label());
        }
    }

    #[test]
    fn json_uses_fixed_field_names() {
        let cert = verify(&parse_identity(IDEAB).unwrap(), None, 30);
        let v: serde_json::Value = serde_json::from_str(&cert.to_json()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        for k in ["identity", "mode", "relations", "W", "pi", "checks", "status"] {
            assert!(keys.iter().any(|x| *x == k), "missing {k}");
        }
        assert_eq!(v["status"], "Proved");
        assert_eq!(v["mode"], "Exact");
        assert!(v["relations"][0]["s"].is_string());
    }

    #[test]
    fn propagation_matches_extraction_on_ideab() {
        let id = parse_identity(IDEAB).unwrap();
        let sys = common_relation_system(&id, None).unwrap();
        let dec = Decomposer::new(&sys.w_vectors()).unwrap();
        for term in &id.terms {
            for eta in [[3, -2], [-4, 1], [0, 5], [7, 7]] {
                let (beta, b) = dec.decompose(&eta).unwrap();
                let base = extract_exact(term, &beta).unwrap();
                assert_eq!(propagate(&base, &beta, &b, &sys), extract_exact(term, &eta).unwrap());
            }
        }
    }

    #[test]
    fn duplicate_candidates_give_difference() {
        let (vars, cands) = crate::parser::parse_candidates("vars a b\n[a*b,a/b;q]\n[a*b,a/b;q]").unwrap();
        let id = Identity {
            vars: vars.clone(),
            terms: vec![cands[0].clone(), cands[0].clone()],
        };
        let sys = first_term_system(&id, None).unwrap();
        let res = discover(&vars, &sys, &cands, 20).unwrap();
        assert_eq!(res.dependencies.len(), 1);
        assert_eq!(res.dependencies[0].coefficients, vec![rat(1), rat(-1)]);
        assert_eq!(res.dependencies[0].certificate.status, Status::Proved);
    }

    #[test]
    fn lone_candidate_has_no_dependency() {
        let (vars, cands) = crate::parser::parse_candidates("vars a\n[a;q]").unwrap();
        let sys = RelationSystem::new(vec![apply_shift(&cands[0], &[rat(1)]).unwrap()]).unwrap();
        let res = discover(&vars, &sys, &cands, 20).unwrap();
        assert!(res.dependencies.is_empty());
    }

    #[test]
    fn failing_candidates_are_named() {
        let (vars, cands) = crate::parser::parse_candidates("vars a\n[a;q]\n[a^2;q]").unwrap();
        let sys = RelationSystem::new(vec![apply_shift(&cands[0], &[rat(1)]).unwrap()]).unwrap();
        let (_, bad) = crate::parser::parse_candidates("vars a\n[a^2;q]\na*[a^2;q]").unwrap();
        let err = discover(&vars, &sys, &bad, 20).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("candidate 1") && msg.contains("candidate 2"), "{msg}");
    }
}
