//! Contiguous relations.
//!
//! A relation with shift `alpha` asserts
//! `theta(a q^alpha) * a^w * q^s * (-1)^rho = theta(a)`. For one bracket
//! `[x; q^t]` with `x = (-1)^delta a^gamma q^z`, a shift by `q^(u t)` with
//! integer `u` gives
//! `[x q^(u t)] = (-1)^((1+delta) u) a^(-u gamma) q^(-(u z + t C(u,2))) [x]`,
//! and the prefactor `a^kappa` contributes `q^(alpha . kappa)`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::linalg::{int_rank, particular_solution, rat, RatMatrix, Rational};
use crate::model::{validate_term, Identity, IntVector, QMonomial, ThetaTerm};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContiguousError {
    #[error("shift is not contiguous for factor {factor}: alpha.gamma/t is not an integer")]
    NotContiguous { factor: usize },
    #[error("shift is degenerate (zero shift or zero w)")]
    DegenerateShift,
    #[error("shift has {found} entries, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no relation with nonzero epsilon exists")]
    NoNonzeroEpsilon,
    #[error("the relation vectors w are linearly dependent")]
    DependentRelations,
    #[error("term is not eligible for automatic relations (needs independent exponent vectors and 1 < m <= r)")]
    NotEligible,
}

/// `theta(a q^alpha) * a^w * q^s * (-1)^rho = theta(a)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContiguousRelation {
    pub alpha: Vec<Rational>,
    pub rho: u8,
    pub w: IntVector,
    pub s: Rational,
}

impl ContiguousRelation {
    /// The ratio `theta(a q^alpha) / theta(a) = (-1)^rho a^-w q^-s`.
    pub fn ratio(&self) -> QMonomial {
        QMonomial {
            sign: if self.rho == 1 { -1 } else { 1 },
            qexp: -self.s.clone(),
            aexp: self.w.iter().map(|x| -x).collect(),
        }
    }

    /// Inverse of [`ContiguousRelation::ratio`].
    pub fn from_ratio(alpha: Vec<Rational>, ratio: &QMonomial) -> Self {
        Self {
            alpha,
            rho: if ratio.sign < 0 { 1 } else { 0 },
            w: ratio.aexp.iter().map(|x| -x).collect(),
            s: -ratio.qexp.clone(),
        }
    }

    pub fn has_integral_alpha(&self) -> bool {
        self.alpha.iter().all(|a| a.is_integer())
    }

    /// Same `(rho, w, s)`; shifts may differ.
    pub fn same_effect(&self, other: &ContiguousRelation) -> bool {
        self.rho == other.rho && self.w == other.w && self.s == other.s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationSystem {
    pub relations: Vec<ContiguousRelation>,
}

impl RelationSystem {
    /// Checks that the `w` vectors are linearly independent.
    pub fn new(relations: Vec<ContiguousRelation>) -> Result<Self, ContiguousError> {
        if let Some(first) = relations.first() {
            let r = first.w.len();
            let ws: Vec<IntVector> = relations.iter().map(|x| x.w.clone()).collect();
            if int_rank(&ws, r) != ws.len() {
                return Err(ContiguousError::DependentRelations);
            }
        }
        Ok(Self { relations })
    }

    pub fn w_vectors(&self) -> Vec<IntVector> {
        self.relations.iter().map(|x| x.w.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

fn binom2(u: i64) -> Rational {
    rat(u * (u - 1) / 2)
}

fn dot(alpha: &[Rational], v: &[i64]) -> Rational {
    alpha
        .iter()
        .zip(v)
        .fold(Rational::zero(), |acc, (a, &g)| acc + a * rat(g))
}

/// Relation obtained by shifting `a -> a q^alpha` in one term.
pub fn apply_shift(term: &ThetaTerm, alpha: &[Rational]) -> Result<ContiguousRelation, ContiguousError> {
    let r = term.num_vars();
    if alpha.len() != r {
        return Err(ContiguousError::DimensionMismatch {
            expected: r,
            found: alpha.len(),
        });
    }
    if alpha.iter().all(|a| a.is_zero()) {
        return Err(ContiguousError::DegenerateShift);
    }
    let mut w = vec![0i64; r];
    let mut s = Rational::zero();
    let mut parity = 0i64;
    for (i, f) in term.factors.iter().enumerate() {
        let u = dot(alpha, &f.gamma) / &f.t;
        if !u.is_integer() {
            return Err(ContiguousError::NotContiguous { factor: i });
        }
        let u = u
            .to_integer()
            .to_i64()
            .ok_or(ContiguousError::NotContiguous { factor: i })?;
        for (wj, g) in w.iter_mut().zip(&f.gamma) {
            *wj += u * g;
        }
        s += &f.z * rat(u) + binom2(u) * &f.t;
        parity += (1 + f.delta as i64) * u;
    }
    s -= dot(alpha, &term.mono.aexp);
    if w.iter().all(|&x| x == 0) {
        return Err(ContiguousError::DegenerateShift);
    }
    Ok(ContiguousRelation {
        alpha: alpha.to_vec(),
        rho: parity.rem_euclid(2) as u8,
        w,
        s,
    })
}

/// Least positive integer `L` such that `L * alpha` is contiguous for
/// every factor of every listed term.
fn contiguity_scale(alpha: &[Rational], terms: &[&ThetaTerm]) -> BigInt {
    let mut l = BigInt::one();
    for term in terms {
        for f in &term.factors {
            let u = dot(alpha, &f.gamma) / &f.t;
            l = l.lcm(u.denom());
        }
    }
    l
}

/// Relation from a combination `k` of the term's factors: solves
/// `x . gamma_i = k_i t_i`, then scales `x` by the least positive integer
/// that makes it contiguous for `term` and every term in `others`.
///
/// Only factors with `k_i` listed in `subset` (all factors when `None`)
/// are constrained, which handles dependent exponent vectors.
pub fn derive_relation_scoped(
    term: &ThetaTerm,
    k: &[Rational],
    subset: Option<&[usize]>,
    others: &[&ThetaTerm],
) -> Result<ContiguousRelation, ContiguousError> {
    let m = term.factors.len();
    if k.len() != m {
        return Err(ContiguousError::DimensionMismatch {
            expected: m,
            found: k.len(),
        });
    }
    if k.iter().all(|x| x.is_zero()) {
        return Err(ContiguousError::DegenerateShift);
    }
    let rows: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..m).collect(),
    };
    let r = term.num_vars();
    let a_rows: Vec<Vec<Rational>> = rows
        .iter()
        .map(|&i| term.factors[i].gamma.iter().map(|&g| rat(g)).collect())
        .collect();
    let b: Vec<Rational> = rows.iter().map(|&i| &k[i] * &term.factors[i].t).collect();
    let a = RatMatrix::from_rows(&a_rows, r);
    let x = particular_solution(&a, &b).ok_or(ContiguousError::NoNonzeroEpsilon)?;
    let mut scope: Vec<&ThetaTerm> = vec![term];
    scope.extend_from_slice(others);
    let l = Rational::from_integer(contiguity_scale(&x, &scope));
    let x: Vec<Rational> = x.into_iter().map(|v| v * &l).collect();
    apply_shift(term, &x)
}

/// Relation from `k` over all factors of one term.
pub fn derive_relation(term: &ThetaTerm, k: &[Rational]) -> Result<ContiguousRelation, ContiguousError> {
    derive_relation_scoped(term, k, None, &[])
}

/// Indices of a maximal independent subset of exponent vectors, chosen
/// greedily from the left.
pub fn independent_factor_subset(term: &ThetaTerm) -> Vec<usize> {
    let r = term.num_vars();
    let mut chosen: Vec<usize> = Vec::new();
    let mut vecs: Vec<IntVector> = Vec::new();
    for (i, f) in term.factors.iter().enumerate() {
        vecs.push(f.gamma.clone());
        if int_rank(&vecs, r) == vecs.len() {
            chosen.push(i);
        } else {
            vecs.pop();
        }
    }
    chosen
}

fn auto_relations(term: &ThetaTerm, others: &[&ThetaTerm]) -> Result<RelationSystem, ContiguousError> {
    let subset = independent_factor_subset(term);
    if subset.is_empty() {
        return Err(ContiguousError::NotEligible);
    }
    let m = term.factors.len();
    let mut rels = Vec::new();
    for &j in &subset {
        let mut k = vec![Rational::zero(); m];
        k[j] = Rational::one();
        rels.push(derive_relation_scoped(term, &k, Some(&subset), others)?);
    }
    RelationSystem::new(rels)
}

/// Relations of one term: from explicit shifts, or automatically from
/// `k = e_j` over a maximal independent subset of factors.
pub fn relation_basis(term: &ThetaTerm, shifts: Option<&[Vec<Rational>]>) -> Result<RelationSystem, ContiguousError> {
    match shifts {
        Some(list) => {
            let rels = list
                .iter()
                .map(|a| apply_shift(term, a))
                .collect::<Result<Vec<_>, _>>()?;
            RelationSystem::new(rels)
        }
        None => {
            if !validate_term(term, term.num_vars()).gammas_independent {
                return Err(ContiguousError::NotEligible);
            }
            auto_relations(term, &[])
        }
    }
}

/// Where two terms of an identity disagree on a relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MismatchReport {
    pub term: usize,
    pub relation: usize,
    pub expected: Option<ContiguousRelation>,
    pub found: Result<ContiguousRelation, ContiguousError>,
}

impl std::fmt::Display for MismatchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.expected, &self.found) {
            (_, Err(e)) if self.relation == usize::MAX => write!(f, "term {}: {e}", self.term + 1),
            (Some(exp), Ok(got)) => write!(
                f,
                "term {} disagrees on relation {}: expected rho={}, w={:?}, s={}; found rho={}, w={:?}, s={}",
                self.term + 1,
                self.relation + 1,
                exp.rho,
                exp.w,
                exp.s,
                got.rho,
                got.w,
                got.s
            ),
            (_, Err(e)) => write!(f, "term {} fails relation {}: {e}", self.term + 1, self.relation + 1),
            (None, Ok(_)) => write!(f, "term {} relation {}", self.term + 1, self.relation + 1),
        }
    }
}

/// Per-term outcome of checking a shared system.
pub fn term_agreement(term: &ThetaTerm, system: &RelationSystem) -> Vec<Result<ContiguousRelation, ContiguousError>> {
    system.relations.iter().map(|rel| apply_shift(term, &rel.alpha)).collect()
}

/// The relation system of the first term, before the other terms are
/// checked. Automatic shifts are scaled to be contiguous for every term.
pub fn first_term_system(
    identity: &Identity,
    shifts: Option<&[Vec<Rational>]>,
) -> Result<RelationSystem, MismatchReport> {
    let Some(first) = identity.terms.first() else {
        return Ok(RelationSystem::default());
    };
    let fail = |term: usize, relation: usize, e: ContiguousError| MismatchReport {
        term,
        relation,
        expected: None,
        found: Err(e),
    };
    let system = match shifts {
        Some(list) => {
            let mut rels = Vec::new();
            for (j, a) in list.iter().enumerate() {
                rels.push(apply_shift(first, a).map_err(|e| fail(0, j, e))?);
            }
            RelationSystem::new(rels).map_err(|e| fail(0, usize::MAX, e))?
        }
        None => {
            let others: Vec<&ThetaTerm> = identity.terms[1..].iter().collect();
            auto_relations(first, &others).map_err(|e| fail(0, usize::MAX, e))?
        }
    };
    Ok(system)
}

/// Relations shared by all terms: the first term's system, which every
/// other term must reproduce exactly in `(rho, w, s)`.
pub fn common_relation_system(
    identity: &Identity,
    shifts: Option<&[Vec<Rational>]>,
) -> Result<RelationSystem, MismatchReport> {
    let system = first_term_system(identity, shifts)?;
    for (i, term) in identity.terms.iter().enumerate().skip(1) {
        for (j, rel) in system.relations.iter().enumerate() {
            let got = apply_shift(term, &rel.alpha);
            let ok = matches!(&got, Ok(g) if g.same_effect(rel));
            if !ok {
                return Err(MismatchReport {
                    term: i,
                    relation: j,
                    expected: Some(rel.clone()),
                    found: got,
                });
            }
        }
    }
    Ok(system)
}

/// Smallest positive multiple of each `alpha` that is contiguous for all
/// terms; used when a candidate relation must apply to several terms.
pub fn scale_to_contiguous(alpha: &[Rational], terms: &[&ThetaTerm]) -> Vec<Rational> {
    let l = Rational::from_integer(contiguity_scale(alpha, terms));
    alpha.iter().map(|a| a * &l).collect()
}

/// True when some entry of `alpha` is negative; informational only.
pub fn has_negative_entry(alpha: &[Rational]) -> bool {
    alpha.iter().any(|a| a.is_negative())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frac;
    use crate::parser::parse_identity;

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| rat(x)).collect()
    }

    const IDEAB: &str =
        "vars a b\n(a,-b,q/a,-q/b;q) + (-a,b,-q/a,q/b;q) = 2*(q;q^2)^-2*(a*b,q^2/(a*b),a*q/b,b*q/a;q^2)";

    const BAILEY: &str = "vars a b d e f\n\
        (b/a,a*q/b,d*f/a,a*q/(d*f),e*f/a,a*q/(e*f),b*d*e/a,a*q/(b*d*e);q) \
        = (f/a,a*q/f,b*d/a,a*q/(b*d),b*e/a,a*q/(b*e),d*e*f/a,a*q/(d*e*f);q) \
        - b/a*(d,q/d,e,q/e,f/b,b*q/f,b*d*e*f/a^2,a^2*q/(b*d*e*f);q)";

    #[test]
    fn bailey_first_shift() {
        let id = parse_identity(BAILEY).unwrap();
        let rel = apply_shift(&id.terms[0], &ints(&[1, 0, 0, 0, 1])).unwrap();
        assert_eq!(rel.rho, 0);
        assert_eq!(rel.w, vec![2, -2, -1, -1, 0]);
        assert_eq!(rel.s, rat(2));
    }

    #[test]
    fn ideab_diagonal_shift() {
        let id = parse_identity(IDEAB).unwrap();
        for term in &id.terms {
            let rel = apply_shift(term, &ints(&[1, 1])).unwrap();
            assert_eq!((rel.rho, rel.w.clone(), rel.s.clone()), (1, vec![1, 1], rat(0)));
        }
    }

    #[test]
    fn zero_shift_is_degenerate() {
        let id = parse_identity(IDEAB).unwrap();
        assert_eq!(apply_shift(&id.terms[0], &ints(&[0, 0])), Err(ContiguousError::DegenerateShift));
    }

    #[test]
    fn half_shift_is_not_contiguous_for_modulus_one() {
        let id = parse_identity(IDEAB).unwrap();
        assert_eq!(
            apply_shift(&id.terms[0], &[frac(1, 2), rat(0)]),
            Err(ContiguousError::NotContiguous { factor: 0 })
        );
    }

    #[test]
    fn derive_on_ideab_left_term() {
        let id = parse_identity(IDEAB).unwrap();
        let rel = derive_relation(&id.terms[0], &ints(&[1, 1])).unwrap();
        assert_eq!(rel.w, vec![1, 1]);
        assert_eq!(rel.rho, 1);
        assert_eq!(rel.s, rat(0));
    }

    #[test]
    fn derive_riemann_pair() {
        let id = parse_identity(
            "vars x y u v\n[x*y,x/y,u*v,u/v;q] - [x*v,x/v,u*y,u/y;q] = u/y*[y*v,y/v,x*u,x/u;q]",
        )
        .unwrap();
        let rel = derive_relation(&id.terms[0], &ints(&[1, 1, 0, 0])).unwrap();
        assert_eq!(rel.w, vec![2, 0, 0, 0]);
        assert_eq!(rel.s, rat(0));
        assert_eq!(rel.rho, 0);
    }

    #[test]
    fn standard_k_gives_multiple_of_gamma() {
        let id = parse_identity(BAILEY).unwrap();
        let term = &id.terms[0];
        for j in 0..term.factors.len() {
            let mut k = vec![rat(0); term.factors.len()];
            k[j] = rat(1);
            let rel = derive_relation(term, &k).unwrap();
            let g = &term.factors[j].gamma;
            let scale = rel.w.iter().zip(g).find(|(_, &gi)| gi != 0).map(|(w, gi)| w / gi).unwrap();
            assert!(scale > 0);
            assert_eq!(rel.w, g.iter().map(|x| x * scale).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bailey_paper_shifts_are_common() {
        let id = parse_identity(BAILEY).unwrap();
        let shifts = vec![
            ints(&[1, 0, 0, 0, 1]),
            ints(&[1, 1, 1, 0, 0]),
            ints(&[1, 0, 1, 1, 0]),
            ints(&[1, 0, 1, 0, 1]),
        ];
        let sys = common_relation_system(&id, Some(&shifts)).unwrap();
        assert_eq!(
            sys.w_vectors(),
            vec![
                vec![2, -2, -1, -1, 0],
                vec![0, 1, 1, 0, -1],
                vec![0, 0, 1, 1, 0],
                vec![0, -1, 1, 0, 1],
            ]
        );
    }

    #[test]
    fn bailey_perturbed_prefactor_mismatches() {
        let bad = BAILEY.replace("- b/a*", "- b^2/a*");
        let id = parse_identity(&bad).unwrap();
        let shifts = vec![
            ints(&[1, 0, 0, 0, 1]),
            ints(&[1, 1, 1, 0, 0]),
            ints(&[1, 0, 1, 1, 0]),
            ints(&[1, 0, 1, 0, 1]),
        ];
        let rep = common_relation_system(&id, Some(&shifts)).unwrap_err();
        // The first shift has no b component, so it cannot see the change.
        assert_eq!((rep.term, rep.relation), (2, 1));
        let (exp, got) = (rep.expected.unwrap(), rep.found.unwrap());
        assert_eq!(got.s - exp.s, rat(-1));
    }

    #[test]
    fn ideab_auto_spans_expected_space() {
        let id = parse_identity(IDEAB).unwrap();
        let sys = common_relation_system(&id, None).unwrap();
        assert_eq!(sys.len(), 2);
        let ws = sys.w_vectors();
        assert!(crate::model::same_span(&ws, &[vec![1, 1], vec![0, 2]], 2));
    }

    #[test]
    fn dependent_shifts_rejected() {
        let id = parse_identity(IDEAB).unwrap();
        let shifts = vec![ints(&[1, 1]), ints(&[2, 2])];
        assert_eq!(
            relation_basis(&id.terms[0], Some(&shifts)),
            Err(ContiguousError::DependentRelations)
        );
    }

    #[test]
    fn ratio_round_trip() {
        let rel = ContiguousRelation {
            alpha: ints(&[1, 1, 1]),
            rho: 1,
            w: vec![1, 1, 1],
            s: rat(2),
        };
        assert_eq!(ContiguousRelation::from_ratio(rel.alpha.clone(), &rel.ratio()), rel);
    }
}
