//! Integer points of the half-open fundamental parallelepiped
//! `{ sum lambda_i w_i : 0 <= lambda_i < 1 } ∩ Z^r` and the unique
//! decomposition `gamma = beta + sum b_i w_i` of saturated lattice vectors.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::linalg::{denom_lcm, rat, rat_floor, snf, unimodular_inverse, IntMatrix, RatMatrix, Rational};
use crate::model::IntVector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PiError {
    #[error("the vectors W are linearly dependent")]
    DependentW,
    #[error("vector is not in the rational span of W")]
    NotInSpan,
    #[error("vector has {found} entries, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("parallelepiped has {count} points, above the limit {limit}")]
    TooLarge { count: BigInt, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiSet {
    pub w: Vec<IntVector>,
    /// Lexicographically sorted.
    pub points: Vec<IntVector>,
    pub saturation_index: usize,
}

/// Solves `lambda . W = p` through a fixed set of pivot columns.
struct Coords {
    w: Vec<IntVector>,
    pivots: Vec<usize>,
    /// Inverse of the `d x d` pivot block of `W`.
    inv: RatMatrix,
}

impl Coords {
    fn new(w: &[IntVector], r: usize) -> Result<Self, PiError> {
        let d = w.len();
        if let Some(bad) = w.iter().find(|v| v.len() != r) {
            return Err(PiError::DimensionMismatch {
                expected: r,
                found: bad.len(),
            });
        }
        // Pivot columns of W as a d x r matrix are the independent columns.
        let (_, pivots) = RatMatrix::from_int_rows(w, r).rref();
        if pivots.len() != d {
            return Err(PiError::DependentW);
        }
        let block: Vec<Vec<i64>> = w.iter().map(|row| pivots.iter().map(|&c| row[c]).collect()).collect();
        let inv = RatMatrix::from_int_rows(&block, d)
            .inverse()
            .map_err(|_| PiError::DependentW)?;
        Ok(Self {
            w: w.to_vec(),
            pivots,
            inv,
        })
    }

    /// `lambda` with `lambda . W = p`, or `None` when `p` is off the span.
    fn solve(&self, p: &[i64]) -> Option<Vec<Rational>> {
        let d = self.w.len();
        let lambda: Vec<Rational> = (0..d)
            .map(|i| {
                self.pivots
                    .iter()
                    .enumerate()
                    .fold(Rational::zero(), |acc, (k, &c)| acc + rat(p[c]) * self.inv.get(k, i))
            })
            .collect();
        for (j, &pj) in p.iter().enumerate() {
            let v = lambda
                .iter()
                .zip(&self.w)
                .fold(Rational::zero(), |acc, (l, row)| acc + l * rat(row[j]));
            if v != rat(pj) {
                return None;
            }
        }
        Some(lambda)
    }

    fn split(&self, p: &[i64]) -> Option<(IntVector, IntVector)> {
        let lambda = self.solve(p)?;
        let b: IntVector = lambda.iter().map(|l| rat_floor(l).to_i64().expect("coordinate fits i64")).collect();
        let mut beta = p.to_vec();
        for (bi, row) in b.iter().zip(&self.w) {
            for (x, wj) in beta.iter_mut().zip(row) {
                *x -= bi * wj;
            }
        }
        Some((beta, b))
    }
}

fn dimension(w: &[IntVector]) -> Result<usize, PiError> {
    match w.first() {
        Some(v) => Ok(v.len()),
        None => Ok(0),
    }
}

/// `|Pi_W|` without enumerating: the product of the SNF diagonal of `W`.
pub fn pi_count(w: &[IntVector]) -> Result<BigInt, PiError> {
    let r = dimension(w)?;
    Coords::new(w, r)?;
    if w.is_empty() {
        return Ok(BigInt::from(1));
    }
    let (s, _, _) = snf(&IntMatrix::from_rows(w, r));
    Ok((0..w.len()).fold(BigInt::from(1), |acc, i| acc * s.get(i, i)))
}

/// Enumerates `Pi_W` through the Smith form of `W`: with `S = U W V`, the
/// first `d` rows of `V^-1` are a basis of `span(W) ∩ Z^r`, the vectors
/// `c . V^-1` with `0 <= c_i < S_ii` represent every coset of `Z W`, and each
/// representative is reduced into the parallelepiped.
pub fn pi_points(w: &[IntVector]) -> Result<PiSet, PiError> {
    pi_points_limited(w, usize::MAX)
}

/// [`pi_points`] refusing sets with more than `limit` points.
pub fn pi_points_limited(w: &[IntVector], limit: usize) -> Result<PiSet, PiError> {
    let r = dimension(w)?;
    let coords = Coords::new(w, r)?;
    let d = w.len();
    if d == 0 {
        return Ok(PiSet {
            w: Vec::new(),
            points: vec![vec![0; r]],
            saturation_index: 1,
        });
    }
    let (s, _, v) = snf(&IntMatrix::from_rows(w, r));
    let diag: Vec<i64> = (0..d).map(|i| s.get(i, i).to_i64().expect("SNF entry fits i64")).collect();
    let count = diag.iter().fold(BigInt::from(1), |acc, &x| acc * x);
    let n = count
        .to_usize()
        .filter(|&n| n <= limit)
        .ok_or_else(|| PiError::TooLarge {
            count: count.clone(),
            limit,
        })?;
    let vinv = unimodular_inverse(&v).to_i64_rows();
    let basis = &vinv[..d];
    let mut points = Vec::with_capacity(n);
    let mut c = vec![0i64; d];
    loop {
        let mut p = vec![0i64; r];
        for (ci, row) in c.iter().zip(basis) {
            for (x, bj) in p.iter_mut().zip(row) {
                *x += ci * bj;
            }
        }
        let (beta, _) = coords.split(&p).expect("saturation vector lies in span(W)");
        points.push(beta);
        // Mixed-radix increment of c.
        let mut i = 0;
        loop {
            if i == d {
                points.sort();
                return Ok(PiSet {
                    w: w.to_vec(),
                    points,
                    saturation_index: n,
                });
            }
            c[i] += 1;
            if c[i] < diag[i] {
                break;
            }
            c[i] = 0;
            i += 1;
        }
    }
}

/// `gamma = beta + sum b_i w_i` with `beta` in `Pi_W` and integer `b`.
pub fn decompose(gamma: &[i64], w: &[IntVector]) -> Result<(IntVector, IntVector), PiError> {
    let r = gamma.len();
    if let Some(v) = w.first() {
        if v.len() != r {
            return Err(PiError::DimensionMismatch {
                expected: v.len(),
                found: r,
            });
        }
    }
    let coords = Coords::new(w, r)?;
    coords.split(gamma).ok_or(PiError::NotInSpan)
}

/// Reusable decomposer for many vectors against one `W`.
pub struct Decomposer {
    coords: Coords,
}

impl Decomposer {
    pub fn new(w: &[IntVector]) -> Result<Self, PiError> {
        let r = dimension(w)?;
        Ok(Self {
            coords: Coords::new(w, r)?,
        })
    }

    pub fn decompose(&self, gamma: &[i64]) -> Result<(IntVector, IntVector), PiError> {
        self.coords.split(gamma).ok_or(PiError::NotInSpan)
    }

    /// Coordinates of `gamma` in the basis `W`.
    pub fn coordinates(&self, gamma: &[i64]) -> Option<Vec<Rational>> {
        self.coords.solve(gamma)
    }
}

/// Independent slow enumeration of `Pi_W`, for cross-checking
/// [`pi_points`]: scans the integer bounding box of the `2^d` vertices and
/// keeps points whose coordinates lie in `[0, 1)`. Cost grows with the box
/// volume, so use it only on small inputs.
pub fn pi_points_box_oracle(w: &[IntVector]) -> Result<PiSet, PiError> {
    let r = dimension(w)?;
    let coords = Coords::new(w, r)?;
    let d = w.len();
    let mut lo = vec![0i64; r];
    let mut hi = vec![0i64; r];
    for j in 0..r {
        for row in w {
            if row[j] < 0 {
                lo[j] += row[j];
            } else {
                hi[j] += row[j];
            }
        }
    }
    // Integer form of the pivot-block inverse: lambda_i * den =
    // sum_k p[pivot_k] * inv_int[k][i].
    let den = denom_lcm((0..d).flat_map(|k| (0..d).map(move |i| (k, i))).map(|(k, i)| coords.inv.get(k, i)));
    let den_i = den.to_i64().expect("denominator fits i64");
    let scaled: Vec<Vec<i64>> = (0..d)
        .map(|k| {
            (0..d)
                .map(|i| {
                    (coords.inv.get(k, i) * Rational::from_integer(den.clone()))
                        .to_integer()
                        .to_i64()
                        .expect("scaled inverse fits i64")
                })
                .collect()
        })
        .collect();
    let mut points = Vec::new();
    let mut p = lo.clone();
    loop {
        let lam: Vec<i64> = (0..d)
            .map(|i| coords.pivots.iter().enumerate().map(|(k, &c)| p[c] * scaled[k][i]).sum())
            .collect();
        if lam.iter().all(|&l| 0 <= l && l < den_i) {
            let in_span = (0..r).all(|j| lam.iter().zip(w).map(|(l, row)| l * row[j]).sum::<i64>() == p[j] * den_i);
            if in_span {
                points.push(p.clone());
            }
        }
        let mut j = 0;
        loop {
            if j == r {
                points.sort();
                let n = points.len();
                return Ok(PiSet {
                    w: w.to_vec(),
                    points,
                    saturation_index: n,
                });
            }
            p[j] += 1;
            if p[j] <= hi[j] {
                break;
            }
            p[j] = lo[j];
            j += 1;
        }
    }
}
