//! Truncated series in `q^(1/D)` with exact rational coefficients, and the
//! brute-force multivariate expansion of theta terms by Jacobi's triple
//! product
//! `[x; q^t] = 1/(q^t;q^t) * sum_n (-1)^((1+delta) n) q^(t C(n,2) + z n) a^(gamma n)`.
//!
//! Exponents are stored scaled by `D`. A series with order `N` knows every
//! coefficient at scaled exponent `<= N*D`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::linalg::{denom_lcm, Rational};
use crate::model::{Identity, IntVector, PochQuotient, ThetaFactor, ThetaTerm};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("exponent {value} is not a multiple of 1/{denom}")]
    BadDenominator { value: String, denom: i64 },
    #[error("series has no invertible leading term")]
    NonUnitLeadingTerm,
    #[error("series use different denominators ({0} and {1})")]
    DenominatorMismatch(i64, i64),
    #[error("Pochhammer symbol (q^{s}; q^{t}) needs positive s and t")]
    NonPositivePochhammer { s: String, t: String },
}

fn scaled(value: &Rational, d: i64) -> Result<i64, SeriesError> {
    let v = value * Rational::from_integer(BigInt::from(d));
    if !v.is_integer() {
        return Err(SeriesError::BadDenominator {
            value: crate::linalg::fmt_rat(value),
            denom: d,
        });
    }
    v.to_integer().to_i64().ok_or(SeriesError::BadDenominator {
        value: crate::linalg::fmt_rat(value),
        denom: d,
    })
}

/// `sum c_k q^(k/D)` known for all `k <= order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QSeries {
    denom: i64,
    order: i64,
    coeffs: BTreeMap<i64, Rational>,
}

impl QSeries {
    /// Zero series known up to scaled exponent `order`.
    pub fn zero(denom: i64, order: i64) -> Self {
        assert!(denom > 0, "denominator must be positive");
        Self {
            denom,
            order,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn one(denom: i64, order: i64) -> Self {
        Self::monomial(denom, order, Rational::one(), 0)
    }

    /// `c q^(k/D)`.
    pub fn monomial(denom: i64, order: i64, c: Rational, k: i64) -> Self {
        let mut s = Self::zero(denom, order);
        s.add_coeff(k, c);
        s
    }

    /// Builds from `(scaled exponent, coefficient)` pairs, dropping zeros
    /// and anything above `order`.
    pub fn from_terms<I: IntoIterator<Item = (i64, Rational)>>(denom: i64, order: i64, terms: I) -> Self {
        let mut s = Self::zero(denom, order);
        for (k, c) in terms {
            s.add_coeff(k, c);
        }
        s
    }

    fn add_coeff(&mut self, k: i64, c: Rational) {
        if k > self.order || c.is_zero() {
            return;
        }
        let e = self.coeffs.entry(k).or_insert_with(Rational::zero);
        *e += c;
        if e.is_zero() {
            self.coeffs.remove(&k);
        }
    }

    pub fn denom(&self) -> i64 {
        self.denom
    }

    /// Scaled order `N*D`.
    pub fn order_scaled(&self) -> i64 {
        self.order
    }

    /// Order `N` as a q-exponent.
    pub fn order(&self) -> Rational {
        Rational::new(BigInt::from(self.order), BigInt::from(self.denom))
    }

    /// Coefficient at scaled exponent `k`.
    pub fn coeff(&self, k: i64) -> Rational {
        self.coeffs.get(&k).cloned().unwrap_or_else(Rational::zero)
    }

    /// Nonzero `(scaled exponent, coefficient)` pairs in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &Rational)> {
        self.coeffs.iter().map(|(k, c)| (*k, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Lowest scaled exponent with a nonzero coefficient.
    pub fn valuation(&self) -> Option<i64> {
        self.coeffs.keys().next().copied()
    }

    /// Lowest exponent that may be nonzero, counting unknown tails.
    fn lowest(&self) -> i64 {
        self.valuation().unwrap_or(self.order + 1)
    }

    pub fn truncate(&self, order: i64) -> Self {
        let order = order.min(self.order);
        Self {
            denom: self.denom,
            order,
            coeffs: self.coeffs.range(..=order).map(|(k, c)| (*k, c.clone())).collect(),
        }
    }

    /// The same series over denominator `denom`, a multiple of the current one.
    pub fn with_denom(&self, denom: i64) -> Self {
        assert!(denom % self.denom == 0, "new denominator must be a multiple");
        let f = denom / self.denom;
        Self {
            denom,
            order: self.order * f + (f - 1),
            coeffs: self.coeffs.iter().map(|(k, c)| (k * f, c.clone())).collect(),
        }
    }

    fn check(&self, other: &QSeries) -> Result<(), SeriesError> {
        if self.denom != other.denom {
            return Err(SeriesError::DenominatorMismatch(self.denom, other.denom));
        }
        Ok(())
    }

    pub fn add(&self, other: &QSeries) -> Result<QSeries, SeriesError> {
        self.check(other)?;
        let order = self.order.min(other.order);
        let mut out = self.truncate(order);
        for (k, c) in other.coeffs.range(..=order) {
            out.add_coeff(*k, c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> QSeries {
        Self {
            denom: self.denom,
            order: self.order,
            coeffs: self.coeffs.iter().map(|(k, c)| (*k, -c.clone())).collect(),
        }
    }

    pub fn sub(&self, other: &QSeries) -> Result<QSeries, SeriesError> {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rational) -> QSeries {
        if c.is_zero() {
            return Self::zero(self.denom, self.order);
        }
        Self {
            denom: self.denom,
            order: self.order,
            coeffs: self.coeffs.iter().map(|(k, x)| (*k, x * c)).collect(),
        }
    }

    /// Multiplies by `q^(k/D)`.
    pub fn shift(&self, k: i64) -> QSeries {
        Self {
            denom: self.denom,
            order: self.order + k,
            coeffs: self.coeffs.iter().map(|(e, c)| (e + k, c.clone())).collect(),
        }
    }

    /// Integer numerators over a common denominator, dense from `lo`.
    fn dense(&self, lo: i64, hi: i64) -> (Vec<BigInt>, BigInt) {
        let den = denom_lcm(self.coeffs.values());
        let mut v = vec![BigInt::zero(); (hi - lo + 1).max(0) as usize];
        for (k, c) in self.coeffs.range(lo..=hi) {
            let x = c * Rational::from_integer(den.clone());
            v[(k - lo) as usize] = x.to_integer();
        }
        (v, den)
    }

    /// Product; known up to `min(N_A + v_B, N_B + v_A)`.
    pub fn mul(&self, other: &QSeries) -> Result<QSeries, SeriesError> {
        self.check(other)?;
        let (va, vb) = (self.lowest(), other.lowest());
        let order = (self.order + vb).min(other.order + va);
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.denom, order));
        }
        let (a, da) = self.dense(va, self.order.min(order - vb));
        let (b, db) = other.dense(vb, other.order.min(order - va));
        let c = convolve(&a, &b, (order - va - vb + 1) as usize);
        let den = Rational::from_integer(da * db);
        Ok(Self::from_terms(
            self.denom,
            order,
            c.into_iter()
                .enumerate()
                .filter(|(_, x)| !x.is_zero())
                .map(|(i, x)| (va + vb + i as i64, Rational::from_integer(x) / &den)),
        ))
    }

    /// Multiplicative inverse; known up to `N - 2v` for valuation `v`.
    pub fn inv(&self) -> Result<QSeries, SeriesError> {
        let v = self.valuation().ok_or(SeriesError::NonUnitLeadingTerm)?;
        let lead = self.coeff(v);
        let order = self.order - 2 * v;
        let len = (self.order - v + 1) as usize;
        // Normalised f = 1 + g in powers q^(k/D), k >= 0.
        let f: Vec<Rational> = (0..len).map(|i| self.coeff(v + i as i64) / &lead).collect();
        let mut h: Vec<Rational> = vec![Rational::zero(); len];
        h[0] = Rational::one();
        for n in 1..len {
            let mut acc = Rational::zero();
            for k in 1..=n {
                if !f[k].is_zero() && !h[n - k].is_zero() {
                    acc -= &f[k] * &h[n - k];
                }
            }
            h[n] = acc;
        }
        let inv_lead = lead.recip();
        Ok(Self::from_terms(
            self.denom,
            order,
            h.into_iter()
                .enumerate()
                .map(|(i, c)| (i as i64 - v, c * &inv_lead)),
        ))
    }

    /// Text like `1 - q - q^2 + q^5 + O(q^13)`.
    pub fn display(&self) -> String {
        let mut out = String::new();
        for (i, (k, c)) in self.coeffs.iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let e = Rational::new(BigInt::from(*k), BigInt::from(self.denom));
            let qp = q_power(&e);
            if qp.is_empty() {
                out.push_str(&crate::linalg::fmt_rat(&abs));
            } else if abs.is_one() {
                out.push_str(&qp);
            } else {
                out.push_str(&format!("{}*{qp}", crate::linalg::fmt_rat(&abs)));
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        let next = Rational::new(BigInt::from(self.order + 1), BigInt::from(self.denom));
        let o = q_power(&next);
        out.push_str(&format!(" + O({})", if o.is_empty() { "1".into() } else { o }));
        out
    }
}

fn q_power(e: &Rational) -> String {
    if e.is_zero() {
        String::new()
    } else if e.is_one() {
        "q".into()
    } else if e.is_integer() {
        format!("q^{}", e.numer())
    } else {
        format!("q^({})", crate::linalg::fmt_rat(e))
    }
}

impl fmt::Display for QSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

fn convolve(a: &[BigInt], b: &[BigInt], len: usize) -> Vec<BigInt> {
    let mut c = vec![BigInt::zero(); len];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() || i >= len {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if i + j >= len {
                break;
            }
            if !y.is_zero() {
                c[i + j] += x * y;
            }
        }
    }
    c
}

/// Dense coefficients `0..len` of `prod (q^s;q^t)^e` at denominator `d`.
fn poch_dense(pq: &PochQuotient, d: i64, len: usize) -> Result<Vec<BigInt>, SeriesError> {
    let mut f = vec![BigInt::zero(); len];
    if len == 0 {
        return Ok(f);
    }
    f[0] = BigInt::one();
    for (s, t, e) in pq.iter() {
        if !s.is_positive() || !t.is_positive() {
            return Err(SeriesError::NonPositivePochhammer {
                s: crate::linalg::fmt_rat(s),
                t: crate::linalg::fmt_rat(t),
            });
        }
        let (ss, tt) = (scaled(s, d)?, scaled(t, d)?);
        let mut u = ss;
        while (u as usize) < len {
            let u_us = u as usize;
            for _ in 0..e.unsigned_abs() {
                if e > 0 {
                    // times (1 - q^u)
                    for j in (u_us..len).rev() {
                        let x = f[j - u_us].clone();
                        f[j] -= x;
                    }
                } else {
                    // divided by (1 - q^u)
                    for j in u_us..len {
                        let x = f[j - u_us].clone();
                        f[j] += x;
                    }
                }
            }
            u += tt;
        }
    }
    Ok(f)
}

/// `(q^s; q^t)_inf` truncated at order `n` over denominator `d`.
pub fn euler_expand(s: &Rational, t: &Rational, n: i64, d: i64) -> Result<QSeries, SeriesError> {
    poch_series(&PochQuotient::single(s.clone(), t.clone(), 1), n * d, d)
}

/// A Pochhammer quotient as a series known to scaled order `order`.
pub fn poch_series(pq: &PochQuotient, order: i64, d: i64) -> Result<QSeries, SeriesError> {
    let len = (order + 1).max(0) as usize;
    let f = poch_dense(pq, d, len)?;
    Ok(QSeries::from_terms(
        d,
        order,
        f.into_iter()
            .enumerate()
            .map(|(i, c)| (i as i64, Rational::from_integer(c))),
    ))
}

/// Sparse map from a-exponents to series, all at one denominator and order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaurentMap {
    denom: i64,
    order: i64,
    entries: BTreeMap<IntVector, QSeries>,
}

impl LaurentMap {
    pub fn new(denom: i64, order: i64) -> Self {
        Self {
            denom,
            order,
            entries: BTreeMap::new(),
        }
    }

    pub fn denom(&self) -> i64 {
        self.denom
    }

    pub fn order_scaled(&self) -> i64 {
        self.order
    }

    /// Adds `s` (truncated to the map's order) at `eta`.
    pub fn add_at(&mut self, eta: IntVector, s: &QSeries) -> Result<(), SeriesError> {
        if s.denom != self.denom {
            return Err(SeriesError::DenominatorMismatch(self.denom, s.denom));
        }
        let s = s.truncate(self.order);
        let merged = match self.entries.remove(&eta) {
            Some(old) => old.add(&s)?,
            None => s,
        };
        if !merged.is_zero() {
            let mut merged = merged;
            merged.order = self.order;
            self.entries.insert(eta, merged);
        }
        Ok(())
    }

    pub fn get(&self, eta: &[i64]) -> Option<&QSeries> {
        self.entries.get(eta)
    }

    /// Entry at `eta`, zero when absent.
    pub fn at(&self, eta: &[i64]) -> QSeries {
        self.entries
            .get(eta)
            .cloned()
            .unwrap_or_else(|| QSeries::zero(self.denom, self.order))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IntVector, &QSeries)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn add(&self, other: &LaurentMap) -> Result<LaurentMap, SeriesError> {
        let mut out = LaurentMap::new(self.denom, self.order.min(other.order));
        for (k, v) in self.entries.iter().chain(other.entries.iter()) {
            out.add_at(k.clone(), v)?;
        }
        Ok(out)
    }

    /// Naive convolution over a-exponents.
    pub fn mul(&self, other: &LaurentMap) -> Result<LaurentMap, SeriesError> {
        let mut out = LaurentMap::new(self.denom, self.order.min(other.order));
        for (ka, va) in &self.entries {
            for (kb, vb) in &other.entries {
                let eta: IntVector = ka.iter().zip(kb).map(|(x, y)| x + y).collect();
                out.add_at(eta, &va.mul(vb)?)?;
            }
        }
        Ok(out)
    }

    /// Every entry multiplied by one series.
    pub fn mul_series(&self, s: &QSeries) -> Result<LaurentMap, SeriesError> {
        let mut out = LaurentMap::new(self.denom, self.order.min(s.order));
        for (k, v) in &self.entries {
            out.add_at(k.clone(), &v.mul(s)?)?;
        }
        Ok(out)
    }
}

/// Common denominator for an identity: lcm of the denominators of every
/// `z_i`, `t_i`, prefactor exponent, Pochhammer entry and `extra` value.
pub fn series_denominator(identity: &Identity, extra: &[Rational]) -> i64 {
    let mut vals: Vec<Rational> = extra.to_vec();
    for term in &identity.terms {
        vals.extend(term_rationals(term));
    }
    denom_lcm(vals.iter()).to_i64().expect("denominator fits i64")
}

/// Denominator for a single term.
pub fn term_denominator(term: &ThetaTerm) -> i64 {
    denom_lcm(term_rationals(term).iter())
        .to_i64()
        .expect("denominator fits i64")
}

fn term_rationals(term: &ThetaTerm) -> Vec<Rational> {
    let mut vals = vec![term.mono.qexp.clone()];
    for f in &term.factors {
        vals.push(f.z.clone());
        vals.push(f.t.clone());
    }
    for (s, t, _) in term.poch.iter() {
        vals.push(s.clone());
        vals.push(t.clone());
    }
    vals
}

/// One factor in integer form: exponent `T n(n-1)/2 + Z n`.
struct ScaledFactor {
    t: i64,
    z: i64,
    sign_odd: bool,
    gamma: IntVector,
}

impl ScaledFactor {
    fn new(f: &ThetaFactor, d: i64) -> Result<Self, SeriesError> {
        Ok(Self {
            t: scaled(&f.t, d)?,
            z: scaled(&f.z, d)?,
            // (-1)^((1+delta) n) is (-1)^n for delta = 0 and 1 for delta = 1.
            sign_odd: f.delta == 0,
            gamma: f.gamma.clone(),
        })
    }

    fn exp(&self, n: i64) -> i64 {
        self.t * (n * (n - 1) / 2) + self.z * n
    }

    /// Integer minimiser of the convex exponent.
    fn argmin(&self) -> i64 {
        // Vertex at n = 1/2 - z/t.
        let c = Integer::div_floor(&(self.t - 2 * self.z), &(2 * self.t));
        let mut best = c;
        for n in [c - 1, c, c + 1, c + 2] {
            if self.exp(n) < self.exp(best) {
                best = n;
            }
        }
        best
    }

    fn min_exp(&self) -> i64 {
        self.exp(self.argmin())
    }

    /// All `n` with `exp(n) <= budget`, in increasing order.
    fn window(&self, budget: i64) -> Vec<i64> {
        let m = self.argmin();
        if self.exp(m) > budget {
            return Vec::new();
        }
        let mut lo = m;
        while self.exp(lo - 1) <= budget {
            lo -= 1;
        }
        let mut hi = m;
        while self.exp(hi + 1) <= budget {
            hi += 1;
        }
        (lo..=hi).collect()
    }
}

/// Visits every `(eta, scaled exponent, sign)` of the triple-product
/// numerator of `term` with exponent `<= max_exp`; `kappa` and `sigma` are
/// included.
fn for_each_numerator<F: FnMut(&[i64], i64, bool)>(
    term: &ThetaTerm,
    d: i64,
    max_exp: i64,
    mut visit: F,
) -> Result<(), SeriesError> {
    let fs: Vec<ScaledFactor> = term
        .factors
        .iter()
        .map(|f| ScaledFactor::new(f, d))
        .collect::<Result<_, _>>()?;
    let sigma = scaled(&term.mono.qexp, d)?;
    let mut suffix_min = vec![0i64; fs.len() + 1];
    for i in (0..fs.len()).rev() {
        suffix_min[i] = suffix_min[i + 1] + fs[i].min_exp();
    }
    let mut eta: IntVector = term.mono.aexp.clone();
    fn rec<F: FnMut(&[i64], i64, bool)>(
        fs: &[ScaledFactor],
        i: usize,
        suffix_min: &[i64],
        acc: i64,
        neg: bool,
        max_exp: i64,
        eta: &mut IntVector,
        visit: &mut F,
    ) {
        if i == fs.len() {
            visit(eta, acc, neg);
            return;
        }
        let f = &fs[i];
        let budget = max_exp - acc - suffix_min[i + 1];
        for n in f.window(budget) {
            for (e, g) in eta.iter_mut().zip(&f.gamma) {
                *e += n * g;
            }
            let flip = f.sign_odd && n.rem_euclid(2) == 1;
            rec(fs, i + 1, suffix_min, acc + f.exp(n), neg ^ flip, max_exp, eta, visit);
            for (e, g) in eta.iter_mut().zip(&f.gamma) {
                *e -= n * g;
            }
        }
    }
    rec(&fs, 0, &suffix_min, sigma, false, max_exp, &mut eta, &mut visit);
    Ok(())
}

/// `poch * prod (q^t_i; q^t_i)^-1`: the a-free part of a term.
pub fn term_signature(term: &ThetaTerm) -> PochQuotient {
    let mut g = term.poch.clone();
    for f in &term.factors {
        g.add(f.t.clone(), f.t.clone(), -1);
    }
    g
}

/// Sums of numerators keyed by eta, in integers scaled by a common
/// coefficient denominator.
type Numerators = HashMap<IntVector, BTreeMap<i64, BigInt>>;

struct Accumulator {
    d: i64,
    max_exp: i64,
    /// lcm of the term coefficient denominators.
    scale: BigInt,
    groups: Vec<(PochQuotient, Numerators)>,
}

impl Accumulator {
    fn new(d: i64, max_exp: i64, terms: &[&ThetaTerm]) -> Self {
        let scale = denom_lcm(terms.iter().map(|t| &t.coeff));
        Self {
            d,
            max_exp,
            scale,
            groups: Vec::new(),
        }
    }

    fn add_term(&mut self, term: &ThetaTerm, only: Option<&[i64]>) -> Result<(), SeriesError> {
        let c = term.signed_coeff() * Rational::from_integer(self.scale.clone());
        let c = c.to_integer();
        if c.is_zero() {
            return Ok(());
        }
        let g = term_signature(term);
        let idx = match self.groups.iter().position(|(k, _)| *k == g) {
            Some(i) => i,
            None => {
                self.groups.push((g, HashMap::new()));
                self.groups.len() - 1
            }
        };
        let nums = &mut self.groups[idx].1;
        for_each_numerator(term, self.d, self.max_exp, |eta, e, neg| {
            if let Some(target) = only {
                if eta != target {
                    return;
                }
            }
            let poly = nums.entry(eta.to_vec()).or_default();
            let slot = poly.entry(e).or_insert_with(BigInt::zero);
            if neg {
                *slot -= &c;
            } else {
                *slot += &c;
            }
        })
    }

    /// Multiplies each numerator by its group's series and sums per eta.
    fn finish(self) -> Result<LaurentMap, SeriesError> {
        let order = self.max_exp;
        let mut out = LaurentMap::new(self.d, order);
        let scale = Rational::from_integer(self.scale.clone());
        let mut totals: BTreeMap<IntVector, Vec<BigInt>> = BTreeMap::new();
        let mut lowest: BTreeMap<IntVector, i64> = BTreeMap::new();
        // Lowest numerator exponent over all groups per eta fixes the
        // common dense offset.
        for (_, nums) in &self.groups {
            for (eta, poly) in nums {
                if let Some((&lo, _)) = poly.iter().find(|(_, c)| !c.is_zero()) {
                    let e = lowest.entry(eta.clone()).or_insert(lo);
                    *e = (*e).min(lo);
                }
            }
        }
        let global_lo = lowest.values().copied().min().unwrap_or(0).min(0);
        for (g, nums) in &self.groups {
            let glen = (order - global_lo + 1).max(0) as usize;
            let gs = poch_dense(g, self.d, glen)?;
            for (eta, poly) in nums {
                let Some(&lo) = lowest.get(eta) else { continue };
                let len = (order - lo + 1) as usize;
                let acc = totals.entry(eta.clone()).or_insert_with(|| vec![BigInt::zero(); len]);
                for (&e, c) in poly {
                    if c.is_zero() {
                        continue;
                    }
                    let off = (e - lo) as usize;
                    for (j, gj) in gs.iter().enumerate() {
                        if off + j >= len {
                            break;
                        }
                        if !gj.is_zero() {
                            acc[off + j] += c * gj;
                        }
                    }
                }
            }
        }
        for (eta, acc) in totals {
            let lo = lowest[&eta];
            let s = QSeries::from_terms(
                self.d,
                order,
                acc.into_iter()
                    .enumerate()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(i, c)| (lo + i as i64, Rational::from_integer(c) / &scale)),
            );
            out.add_at(eta, &s)?;
        }
        Ok(out)
    }
}

/// `[x; q^t]` as a map from `eta = n gamma` to series, to order `n_order`.
pub fn jtp_expand(factor: &ThetaFactor, n_order: i64, d: i64) -> Result<LaurentMap, SeriesError> {
    let r = factor.gamma.len();
    let term = ThetaTerm::new(vec![factor.clone()], r);
    expand_term(&term, n_order, d)
}

/// Full expansion of one term to order `n_order`.
pub fn expand_term(term: &ThetaTerm, n_order: i64, d: i64) -> Result<LaurentMap, SeriesError> {
    let mut acc = Accumulator::new(d, n_order * d, &[term]);
    acc.add_term(term, None)?;
    acc.finish()
}

/// Coefficient of `a^eta` in one term, to order `n_order`.
pub fn expand_term_at(term: &ThetaTerm, eta: &[i64], n_order: i64, d: i64) -> Result<QSeries, SeriesError> {
    let mut acc = Accumulator::new(d, n_order * d, &[term]);
    acc.add_term(term, Some(eta))?;
    Ok(acc.finish()?.at(eta))
}

/// Sum of all term expansions; empty iff the identity holds to order
/// `n_order`.
pub fn expand_identity_residual(identity: &Identity, n_order: i64, d: i64) -> Result<LaurentMap, SeriesError> {
    let terms: Vec<&ThetaTerm> = identity.terms.iter().collect();
    let mut acc = Accumulator::new(d, n_order * d, &terms);
    for t in &terms {
        acc.add_term(t, None)?;
    }
    acc.finish()
}

/// Residual coefficient of `a^eta`, to order `n_order`.
pub fn residual_at(identity: &Identity, eta: &[i64], n_order: i64, d: i64) -> Result<QSeries, SeriesError> {
    let terms: Vec<&ThetaTerm> = identity.terms.iter().collect();
    let mut acc = Accumulator::new(d, n_order * d, &terms);
    for t in &terms {
        acc.add_term(t, Some(eta))?;
    }
    Ok(acc.finish()?.at(eta))
}
