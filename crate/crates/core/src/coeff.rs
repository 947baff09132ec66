//! Exact coefficients of single theta terms.
//!
//! When the exponent vectors of a term are independent, the coefficient of
//! `a^beta` comes from at most one index vector `n` of the triple-product
//! sum, so it is a single atom `c q^e prod (q^s;q^t)^k`. Sums of such atoms
//! are compared after splitting every Pochhammer symbol to one common
//! modulus.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::linalg::{denom_lcm, fmt_rat, rat, solve_exact, RatMatrix, Rational};
use crate::model::{validate_term, PochQuotient, ThetaTerm};
use crate::qseries::{poch_series, QSeries, SeriesError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoeffError {
    #[error("the factor exponent vectors are linearly dependent")]
    DependentGammas,
    #[error("a-exponent has {found} entries, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("signature entry (q^{s}; q^{t}) cannot be written at modulus q^{modulus}")]
    UnnormalizableSignature { s: String, t: String, modulus: String },
}

/// `c q^e sig`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoeffAtom {
    pub c: Rational,
    pub e: Rational,
    pub sig: PochQuotient,
}

/// Finite sum of atoms; the empty form is exactly zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CoefficientForm {
    pub atoms: Vec<CoeffAtom>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Zero,
    NonZero,
    UnknownToOrder(i64),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Zero => f.write_str("Zero"),
            Verdict::NonZero => f.write_str("NonZero"),
            Verdict::UnknownToOrder(n) => write!(f, "UnknownToOrder({n})"),
        }
    }
}

fn sig_key(sig: &PochQuotient) -> Vec<(Rational, Rational, i64)> {
    sig.iter().map(|(s, t, e)| (s.clone(), t.clone(), e)).collect()
}

fn atom_order(a: &CoeffAtom, b: &CoeffAtom) -> Ordering {
    sig_key(&a.sig).cmp(&sig_key(&b.sig)).then_with(|| a.e.cmp(&b.e))
}

impl CoefficientForm {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atom(c: Rational, e: Rational, sig: PochQuotient) -> Self {
        Self::from_atoms(vec![CoeffAtom { c, e, sig }])
    }

    /// Merges atoms with equal `(e, sig)` and drops zero constants.
    pub fn from_atoms(atoms: Vec<CoeffAtom>) -> Self {
        let mut out: Vec<CoeffAtom> = Vec::new();
        for a in atoms {
            if let Some(b) = out.iter_mut().find(|b| b.e == a.e && b.sig == a.sig) {
                b.c += a.c;
            } else {
                out.push(a);
            }
        }
        out.retain(|a| !a.c.is_zero());
        out.sort_by(atom_order);
        Self { atoms: out }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn neg(&self) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| CoeffAtom {
                    c: -a.c.clone(),
                    ..a.clone()
                })
                .collect(),
        }
    }

    pub fn scale(&self, k: &Rational) -> Self {
        Self::from_atoms(
            self.atoms
                .iter()
                .map(|a| CoeffAtom {
                    c: &a.c * k,
                    ..a.clone()
                })
                .collect(),
        )
    }

    /// Moduli appearing in the signatures.
    pub fn moduli(&self) -> Vec<Rational> {
        let mut out: Vec<Rational> = Vec::new();
        for a in &self.atoms {
            for (_, t, _) in a.sig.iter() {
                if !out.contains(t) {
                    out.push(t.clone());
                }
            }
        }
        out
    }
}

fn fmt_atom_body(a: &CoeffAtom) -> String {
    let mut num: Vec<String> = Vec::new();
    let mut den: Vec<String> = Vec::new();
    let q = |e: &Rational| -> String {
        if e.is_one() {
            "q".into()
        } else if e.is_integer() {
            format!("q^{}", e.numer())
        } else {
            format!("q^({})", fmt_rat(e))
        }
    };
    if a.e.is_positive() {
        num.push(q(&a.e));
    } else if a.e.is_negative() {
        den.push(q(&-a.e.clone()));
    }
    for (s, t, k) in a.sig.iter() {
        let base = format!("({};{})", q(s), q(t));
        let p = if k.abs() == 1 { base } else { format!("{base}^{}", k.abs()) };
        if k > 0 {
            num.push(p);
        } else {
            den.push(p);
        }
    }
    let c = a.c.abs();
    let mut n = num.join("*");
    if !c.is_one() || n.is_empty() {
        n = if n.is_empty() {
            fmt_rat(&c)
        } else {
            format!("{}*{n}", fmt_rat(&c))
        };
    }
    match den.len() {
        0 => n,
        1 => format!("{n}/{}", den[0]),
        _ => format!("{n}/({})", den.join("*")),
    }
}

impl fmt::Display for CoeffAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_negative() {
            f.write_str("-")?;
        }
        f.write_str(&fmt_atom_body(self))
    }
}

impl fmt::Display for CoefficientForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("0");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i == 0 {
                write!(f, "{a}")?;
            } else if a.c.is_negative() {
                write!(f, " - {}", fmt_atom_body(a))?;
            } else {
                write!(f, " + {}", fmt_atom_body(a))?;
            }
        }
        Ok(())
    }
}

/// Coefficient of `a^beta` in `term`, exactly.
pub fn extract_exact(term: &ThetaTerm, beta: &[i64]) -> Result<CoefficientForm, CoeffError> {
    let r = term.num_vars();
    if beta.len() != r {
        return Err(CoeffError::DimensionMismatch {
            expected: r,
            found: beta.len(),
        });
    }
    if !validate_term(term, r).gammas_independent {
        return Err(CoeffError::DependentGammas);
    }
    let m = term.factors.len();
    // r equations in the m unknowns n_i: sum n_i gamma_i = beta - kappa.
    let rows: Vec<Vec<Rational>> = (0..r)
        .map(|j| term.factors.iter().map(|f| rat(f.gamma[j])).collect())
        .collect();
    let rhs: Vec<Rational> = (0..r).map(|j| rat(beta[j] - term.mono.aexp[j])).collect();
    let a = RatMatrix::from_rows(&rows, m);
    let n = match solve_exact(&a, &rhs) {
        Ok(Some(n)) => n,
        Ok(None) => return Ok(CoefficientForm::zero()),
        Err(_) => return Err(CoeffError::DependentGammas),
    };
    if n.iter().any(|x| !x.is_integer()) {
        return Ok(CoefficientForm::zero());
    }
    let n: Vec<BigInt> = n.into_iter().map(|x| x.to_integer()).collect();
    let mut c = term.signed_coeff();
    let mut e = term.mono.qexp.clone();
    let mut parity = BigInt::zero();
    let mut sig = term.poch.clone();
    for (f, ni) in term.factors.iter().zip(&n) {
        let ni_r = Rational::from_integer(ni.clone());
        let choose2 = Rational::from_integer(ni * (ni - BigInt::one()) / BigInt::from(2));
        e += &f.t * choose2 + &f.z * &ni_r;
        parity += BigInt::from(1 + f.delta as i64) * ni;
        sig.add(f.t.clone(), f.t.clone(), -1);
    }
    if parity.is_odd() {
        c = -c;
    }
    Ok(CoefficientForm::atom(c, e, sig))
}

/// Least positive rational that is an integer multiple of every value.
pub fn rational_lcm<'a, I: IntoIterator<Item = &'a Rational>>(values: I) -> Option<Rational> {
    let mut num: Option<BigInt> = None;
    let mut den: Option<BigInt> = None;
    for v in values {
        let (n, d) = (v.numer().abs(), v.denom().clone());
        num = Some(match num {
            Some(x) => x.lcm(&n),
            None => n,
        });
        den = Some(match den {
            Some(x) => x.gcd(&d),
            None => d,
        });
    }
    Some(Rational::new(num?, den?))
}

/// Greatest positive rational dividing every value (as integer multiples).
fn rational_gcd<'a, I: IntoIterator<Item = &'a Rational>>(values: I) -> Option<Rational> {
    let mut num: Option<BigInt> = None;
    let mut den: Option<BigInt> = None;
    for v in values {
        let (n, d) = (v.numer().abs(), v.denom().clone());
        num = Some(match num {
            Some(x) => x.gcd(&n),
            None => n,
        });
        den = Some(match den {
            Some(x) => x.lcm(&d),
            None => d,
        });
    }
    Some(Rational::new(num?, den?))
}

/// Canonical form: every signature is split to the common modulus, atoms
/// are merged, and the survivors are rewritten at the coarsest modulus
/// they all admit. The result does not depend on how the atoms were
/// grouped before.
pub fn cf_canonicalize(form: &CoefficientForm) -> Result<CoefficientForm, CoeffError> {
    let Some(t) = rational_lcm(form.moduli().iter()) else {
        return Ok(CoefficientForm::from_atoms(form.atoms.clone()));
    };
    let split = cf_canonicalize_to(form, &t)?;
    Ok(coarsen(split, &t))
}

/// Rewrites a form whose signatures all live at modulus `t` at the
/// smallest modulus `t' = t/k` for which every signature is `t'`-periodic
/// in its residues, i.e. a split of a signature at `t'`.
fn coarsen(form: CoefficientForm, t: &Rational) -> CoefficientForm {
    let mut grid: Vec<Rational> = vec![t.clone()];
    for a in &form.atoms {
        grid.extend(a.sig.iter().map(|(s, _, _)| s.clone()));
    }
    let unit = rational_gcd(grid.iter()).expect("nonempty grid");
    let n = (t / &unit).to_integer().to_i64().expect("modulus ratio fits i64");
    let periodic = |m: i64| {
        let period = &unit * rat(m);
        form.atoms.iter().all(|a| {
            a.sig.iter().all(|(s, _, e)| {
                // Every residue s + j*period (mod t) carries exponent e.
                (1..n / m).all(|j| {
                    let mut r = s + &period * rat(j);
                    if &r > t {
                        r -= t;
                    }
                    a.sig.iter().any(|(s2, _, e2)| *s2 == r && e2 == e)
                })
            })
        })
    };
    let Some(m) = (1..=n).find(|m| n % m == 0 && periodic(*m)) else {
        return form;
    };
    if m == n {
        return form;
    }
    let coarse = &unit * rat(m);
    let atoms = form
        .atoms
        .into_iter()
        .map(|a| {
            let mut sig = PochQuotient::new();
            for (s, _, e) in a.sig.iter() {
                if s <= &coarse {
                    sig.add(s.clone(), coarse.clone(), e);
                }
            }
            CoeffAtom { sig, ..a }
        })
        .collect();
    CoefficientForm::from_atoms(atoms)
}

/// Splits `(q^s; q^t)` into `prod_{j < T/t} (q^(s + j t); q^T)`; every
/// modulus must divide `T`.
pub fn cf_canonicalize_to(form: &CoefficientForm, modulus: &Rational) -> Result<CoefficientForm, CoeffError> {
    let mut atoms = Vec::with_capacity(form.atoms.len());
    for a in &form.atoms {
        let mut sig = PochQuotient::new();
        for (s, t, k) in a.sig.iter() {
            let ratio = modulus / t;
            let bad = || CoeffError::UnnormalizableSignature {
                s: fmt_rat(s),
                t: fmt_rat(t),
                modulus: fmt_rat(modulus),
            };
            if !ratio.is_integer() || s > modulus {
                return Err(bad());
            }
            let parts = ratio.to_integer().to_i64().ok_or_else(bad)?;
            for j in 0..parts {
                sig.add(s + t * rat(j), modulus.clone(), k);
            }
        }
        atoms.push(CoeffAtom {
            c: a.c.clone(),
            e: a.e.clone(),
            sig,
        });
    }
    Ok(CoefficientForm::from_atoms(atoms))
}

/// Sum of forms, split jointly at one common modulus. When some entry
/// cannot be split, atoms are merged as given.
pub fn cf_sum(forms: &[CoefficientForm]) -> CoefficientForm {
    let all: Vec<CoeffAtom> = forms.iter().flat_map(|f| f.atoms.iter().cloned()).collect();
    let joined = CoefficientForm { atoms: all };
    cf_canonicalize(&joined).unwrap_or_else(|_| CoefficientForm::from_atoms(joined.atoms))
}

/// Denominator needed to expand a form as a series.
pub fn form_denominator(form: &CoefficientForm) -> i64 {
    let mut vals: Vec<Rational> = Vec::new();
    for a in &form.atoms {
        vals.push(a.e.clone());
        for (s, t, _) in a.sig.iter() {
            vals.push(s.clone());
            vals.push(t.clone());
        }
    }
    denom_lcm(vals.iter()).to_i64().expect("denominator fits i64")
}

/// `sum c q^e sig` as a series to order `n_order` at denominator `d`.
pub fn cf_to_series(form: &CoefficientForm, n_order: i64, d: i64) -> Result<QSeries, SeriesError> {
    let order = n_order * d;
    let mut acc = QSeries::zero(d, order);
    for a in &form.atoms {
        let e = a.e.clone() * rat(d);
        if !e.is_integer() {
            return Err(SeriesError::BadDenominator {
                value: fmt_rat(&a.e),
                denom: d,
            });
        }
        let e = e.to_integer().to_i64().expect("exponent fits i64");
        let s = poch_series(&a.sig, order - e, d)?.shift(e).scale(&a.c);
        acc = acc.add(&s)?;
    }
    Ok(acc)
}

/// Zero decision with optional canonicalisation. Series comparison is
/// the last resort and can only report `UnknownToOrder`.
pub fn cf_decide(form: &CoefficientForm, n_order: i64, canonicalize: bool) -> Verdict {
    let form = if canonicalize {
        cf_canonicalize(form).unwrap_or_else(|_| CoefficientForm::from_atoms(form.atoms.clone()))
    } else {
        CoefficientForm::from_atoms(form.atoms.clone())
    };
    if form.atoms.is_empty() {
        return Verdict::Zero;
    }
    let first = &form.atoms[0].sig;
    if form.atoms.iter().all(|a| &a.sig == first) {
        // Distinct exponents with nonzero constants: a nonzero polynomial
        // times a nonzero product.
        return Verdict::NonZero;
    }
    let d = form_denominator(&form);
    match cf_to_series(&form, n_order, d) {
        Ok(s) if s.is_zero() => Verdict::UnknownToOrder(n_order),
        Ok(_) => Verdict::NonZero,
        Err(_) => Verdict::UnknownToOrder(0),
    }
}

/// Default series order for the fallback zero test.
pub const DEFAULT_ZERO_ORDER: i64 = 100;

pub fn cf_is_zero(form: &CoefficientForm) -> Verdict {
    cf_decide(form, DEFAULT_ZERO_ORDER, true)
}
