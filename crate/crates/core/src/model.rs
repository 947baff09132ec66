//! Theta factors, terms and identities.
//!
//! A term is `coeff * (+-1) a^kappa q^sigma * P(q) * prod_i [x_i; q^t_i]`
//! where `P` is an a-free quotient of Pochhammer symbols and each bracket
//! `[x; q^t] = (x, q^t/x; q^t)_inf` has argument `x = (-1)^delta a^gamma q^z`.
//! An identity asserts that the sum of its terms vanishes.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::linalg::{fmt_rat, int_rank, rat, RatMatrix, Rational};

/// Integer exponent vector over the declared variables.
pub type IntVector = Vec<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("factor ({symbol}; q^{modulus}) has no partner q^{modulus}/x")]
    UnpairedVariableFactor { symbol: String, modulus: String },
    #[error("unsupported Pochhammer symbol ({symbol}; q^{modulus}): {reason}")]
    UnsupportedSymbol {
        symbol: String,
        modulus: String,
        reason: &'static str,
    },
}

/// Ordinal position of a variable in the declared variable list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarIndex(pub usize);

/// `sign * a^aexp * q^qexp`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QMonomial {
    pub sign: i8,
    pub qexp: Rational,
    pub aexp: IntVector,
}

impl QMonomial {
    pub fn one(r: usize) -> Self {
        Self {
            sign: 1,
            qexp: Rational::zero(),
            aexp: vec![0; r],
        }
    }

    pub fn is_a_free(&self) -> bool {
        self.aexp.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &QMonomial) -> QMonomial {
        QMonomial {
            sign: self.sign * other.sign,
            qexp: &self.qexp + &other.qexp,
            aexp: self.aexp.iter().zip(&other.aexp).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn inverse(&self) -> QMonomial {
        QMonomial {
            sign: self.sign,
            qexp: -self.qexp.clone(),
            aexp: self.aexp.iter().map(|e| -e).collect(),
        }
    }

    /// `q^t / self`.
    pub fn partner(&self, t: &Rational) -> QMonomial {
        let mut p = self.inverse();
        p.qexp += t;
        p
    }

    /// Compact debugging form such as `-a^1*b^-1*q^1/2`.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        for (j, e) in self.aexp.iter().enumerate() {
            if *e != 0 {
                parts.push(format!("a{}^{}", j + 1, e));
            }
        }
        if !self.qexp.is_zero() {
            parts.push(format!("q^{}", fmt_rat(&self.qexp)));
        }
        let body = if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        };
        if self.sign < 0 {
            format!("-{body}")
        } else {
            body
        }
    }
}

/// `[(-1)^delta a^gamma q^z ; q^t]_inf`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThetaFactor {
    pub delta: u8,
    pub gamma: IntVector,
    pub z: Rational,
    pub t: Rational,
}

impl ThetaFactor {
    pub fn new(delta: u8, gamma: IntVector, z: Rational, t: Rational) -> Self {
        assert!(t.is_positive(), "theta modulus must be positive");
        Self { delta, gamma, z, t }
    }

    /// The argument `x` of the bracket.
    pub fn argument(&self) -> QMonomial {
        QMonomial {
            sign: if self.delta == 1 { -1 } else { 1 },
            qexp: self.z.clone(),
            aexp: self.gamma.clone(),
        }
    }

    fn from_argument(x: &QMonomial, t: &Rational) -> Self {
        Self::new(
            if x.sign < 0 { 1 } else { 0 },
            x.aexp.clone(),
            x.qexp.clone(),
            t.clone(),
        )
    }
}

/// A-free product `prod (q^s; q^t)_inf^e`, keyed by `(s, t)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PochQuotient {
    entries: BTreeMap<(Rational, Rational), i64>,
}

impl PochQuotient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(s: Rational, t: Rational, e: i64) -> Self {
        let mut p = Self::new();
        p.add(s, t, e);
        p
    }

    pub fn add(&mut self, s: Rational, t: Rational, e: i64) {
        if e == 0 {
            return;
        }
        let key = (s, t);
        let v = self.entries.get(&key).copied().unwrap_or(0) + e;
        if v == 0 {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, v);
        }
    }

    pub fn merge(&mut self, other: &PochQuotient) {
        for ((s, t), e) in &other.entries {
            self.add(s.clone(), t.clone(), *e);
        }
    }

    pub fn pow(&self, k: i64) -> PochQuotient {
        let mut out = PochQuotient::new();
        for ((s, t), e) in &self.entries {
            out.add(s.clone(), t.clone(), e * k);
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Rational, &Rational, i64)> {
        self.entries.iter().map(|((s, t), e)| (s, t, *e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Syntax the factors of a term were written in; only affects formatting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum FactorStyle {
    #[default]
    Bracket,
    Pochhammer,
}

/// `coeff * mono * poch * prod(factors)`.
#[derive(Debug, Clone, Eq)]
pub struct ThetaTerm {
    pub coeff: Rational,
    pub mono: QMonomial,
    pub poch: PochQuotient,
    pub factors: Vec<ThetaFactor>,
    pub style: FactorStyle,
}

impl PartialEq for ThetaTerm {
    fn eq(&self, other: &Self) -> bool {
        self.coeff == other.coeff
            && self.mono == other.mono
            && self.poch == other.poch
            && self.factors == other.factors
    }
}

impl ThetaTerm {
    pub fn new(factors: Vec<ThetaFactor>, r: usize) -> Self {
        Self {
            coeff: Rational::one(),
            mono: QMonomial::one(r),
            poch: PochQuotient::new(),
            factors,
            style: FactorStyle::Bracket,
        }
    }

    pub fn gammas(&self) -> Vec<IntVector> {
        self.factors.iter().map(|f| f.gamma.clone()).collect()
    }

    pub fn num_vars(&self) -> usize {
        self.mono.aexp.len()
    }

    /// Overall constant including the prefactor sign.
    pub fn signed_coeff(&self) -> Rational {
        if self.mono.sign < 0 {
            -self.coeff.clone()
        } else {
            self.coeff.clone()
        }
    }
}

/// `sum(terms) = 0` over the variables `vars`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub vars: Vec<String>,
    pub terms: Vec<ThetaTerm>,
}

impl Identity {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }
}

/// Pairs `x` with `q^t/x` among the first arguments of `(.; q^t)_inf`
/// symbols. Unpaired a-free symbols become Pochhammer quotient entries.
pub fn pair_pochhammers(
    symbols: &[QMonomial],
    modulus: &Rational,
) -> Result<(Vec<ThetaFactor>, PochQuotient), ModelError> {
    let mut used = vec![false; symbols.len()];
    let mut factors = Vec::new();
    let mut poch = PochQuotient::new();
    for i in 0..symbols.len() {
        if used[i] || symbols[i].is_a_free() {
            continue;
        }
        used[i] = true;
        let partner = symbols[i].partner(modulus);
        let j = (0..symbols.len()).find(|&j| !used[j] && symbols[j] == partner);
        match j {
            Some(j) => {
                used[j] = true;
                factors.push(ThetaFactor::from_argument(&symbols[i], modulus));
            }
            None => {
                return Err(ModelError::UnpairedVariableFactor {
                    symbol: symbols[i].describe(),
                    modulus: fmt_rat(modulus),
                })
            }
        }
    }
    for (i, sym) in symbols.iter().enumerate() {
        if !used[i] {
            poch.merge(&a_free_symbol(sym, modulus)?);
        }
    }
    Ok((factors, poch))
}

/// `(+-q^s; q^t)_inf` as a quotient of positive-sign symbols, using
/// `(-x; q^t) = (x^2; q^2t) / (x; q^t)`.
fn a_free_symbol(sym: &QMonomial, t: &Rational) -> Result<PochQuotient, ModelError> {
    let err = |reason| ModelError::UnsupportedSymbol {
        symbol: sym.describe(),
        modulus: fmt_rat(t),
        reason,
    };
    if !sym.qexp.is_positive() {
        return Err(err("a-free argument needs a positive power of q"));
    }
    let s = sym.qexp.clone();
    if sym.sign > 0 {
        Ok(PochQuotient::single(s, t.clone(), 1))
    } else {
        let two = rat(2);
        let mut p = PochQuotient::single(&s * &two, t * &two, 1);
        p.add(s, t.clone(), -1);
        Ok(p)
    }
}

/// Basis of the span of the factor exponent vectors, as primitive integer
/// rows of the reduced echelon form.
pub fn exponent_space(term: &ThetaTerm) -> Vec<IntVector> {
    span_basis(&term.gammas(), term.num_vars())
}

pub(crate) fn span_basis(vectors: &[IntVector], dim: usize) -> Vec<IntVector> {
    let (red, pivots) = RatMatrix::from_int_rows(vectors, dim).rref();
    (0..pivots.len())
        .map(|i| {
            crate::linalg::primitive_integer_vector(red.row(i))
                .into_iter()
                .map(|x| i64::try_from(x).expect("basis entry exceeds i64"))
                .collect()
        })
        .collect()
}

/// True when the two integer vector lists span the same rational subspace.
pub fn same_span(a: &[IntVector], b: &[IntVector], dim: usize) -> bool {
    let ra = int_rank(a, dim);
    let rb = int_rank(b, dim);
    let both: Vec<IntVector> = a.iter().chain(b).cloned().collect();
    ra == rb && int_rank(&both, dim) == ra
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationReport {
    pub gammas_independent: bool,
    pub m_in_range: bool,
    pub exact_mode_eligible: bool,
}

/// Checks `1 < m <= r` and independence of the factor exponent vectors.
pub fn validate_term(term: &ThetaTerm, r: usize) -> ValidationReport {
    let m = term.factors.len();
    let gammas_independent = m > 0 && int_rank(&term.gammas(), r) == m;
    let m_in_range = 1 < m && m <= r;
    ValidationReport {
        gammas_independent,
        m_in_range,
        exact_mode_eligible: gammas_independent && m_in_range,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frac;

    fn mono(sign: i8, q: Rational, a: &[i64]) -> QMonomial {
        QMonomial {
            sign,
            qexp: q,
            aexp: a.to_vec(),
        }
    }

    #[test]
    fn pairs_bailey_bracket() {
        // (b/a, aq/b; q) over (a, b)
        let syms = [mono(1, rat(0), &[-1, 1]), mono(1, rat(1), &[1, -1])];
        let (f, p) = pair_pochhammers(&syms, &rat(1)).unwrap();
        assert_eq!(f, vec![ThetaFactor::new(0, vec![-1, 1], rat(0), rat(1))]);
        assert!(p.is_empty());
    }

    #[test]
    fn pairs_negative_argument() {
        let syms = [mono(-1, rat(0), &[1, 0]), mono(-1, rat(1), &[-1, 0])];
        let (f, _) = pair_pochhammers(&syms, &rat(1)).unwrap();
        assert_eq!(f, vec![ThetaFactor::new(1, vec![1, 0], rat(0), rat(1))]);
    }

    #[test]
    fn a_free_symbol_is_quotient_entry() {
        let (f, p) = pair_pochhammers(&[mono(1, rat(1), &[0])], &rat(1)).unwrap();
        assert!(f.is_empty());
        assert_eq!(p, PochQuotient::single(rat(1), rat(1), 1));
    }

    #[test]
    fn negative_a_free_symbol_splits() {
        let (_, p) = pair_pochhammers(&[mono(-1, rat(1), &[0])], &rat(1)).unwrap();
        let mut want = PochQuotient::single(rat(2), rat(2), 1);
        want.add(rat(1), rat(1), -1);
        assert_eq!(p, want);
    }

    #[test]
    fn unpaired_variable_symbol_is_error() {
        let err = pair_pochhammers(&[mono(1, rat(0), &[1])], &rat(1)).unwrap_err();
        assert!(matches!(err, ModelError::UnpairedVariableFactor { .. }));
    }

    #[test]
    fn poch_quotient_cancels_to_empty() {
        let mut p = PochQuotient::single(frac(1, 2), frac(1, 2), 4);
        p.add(frac(1, 2), frac(1, 2), -4);
        assert!(p.is_empty());
    }

    #[test]
    fn exponent_space_dimensions() {
        let one = ThetaTerm::new(vec![ThetaFactor::new(0, vec![1, 0], rat(0), rat(1))], 2);
        assert_eq!(exponent_space(&one), vec![vec![1, 0]]);
        let twice = ThetaTerm::new(
            vec![
                ThetaFactor::new(0, vec![1, 1], rat(0), rat(1)),
                ThetaFactor::new(1, vec![1, 1], rat(0), rat(2)),
            ],
            2,
        );
        assert_eq!(exponent_space(&twice).len(), 1);
    }

    #[test]
    fn validation_flags() {
        let single = ThetaTerm::new(vec![ThetaFactor::new(0, vec![1], rat(0), rat(1))], 1);
        let rep = validate_term(&single, 1);
        assert!(rep.gammas_independent);
        assert!(!rep.m_in_range);
        assert!(!rep.exact_mode_eligible);

        // quintuple left side: gammas 1 and 2 in one variable
        let quint = ThetaTerm::new(
            vec![
                ThetaFactor::new(1, vec![1], rat(0), rat(1)),
                ThetaFactor::new(0, vec![2], rat(1), rat(2)),
            ],
            1,
        );
        let rep = validate_term(&quint, 1);
        assert!(!rep.gammas_independent);
        assert!(!rep.exact_mode_eligible);
    }

    #[test]
    fn same_span_detects_difference() {
        assert!(same_span(&[vec![1, 1], vec![0, 2]], &[vec![1, 0], vec![0, 1]], 2));
        assert!(!same_span(&[vec![1, 0]], &[vec![0, 1]], 2));
    }
}
