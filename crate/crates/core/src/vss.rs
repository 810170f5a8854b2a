//! Pedersen verifiable secret sharing.
//!
//! A dealer shares a committed value `g^s h^o` by sampling two degree-`(t-1)` polynomials
//! `F` and `G` with `F(0) = s`, `G(0) = o`, publishing `E_j = g^{F_j} h^{G_j}` for every
//! coefficient and handing `(F(u), G(u))` to participant `u`. A share verifies iff
//! `g^{F(u)} h^{G(u)} = Π_j E_j^(u^j)`.

use rand_core::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::group::{commit, msm, random_scalar, Commitment, GroupElement, Scalar};

/// One participant's share `(s_u, o_u)` at index `u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SharePair {
    pub index: u32,
    pub s: Scalar,
    pub o: Scalar,
}

impl SharePair {
    pub fn new(index: u32, s: Scalar, o: Scalar) -> Self {
        Self { index, s, o }
    }

    /// The commitment `g^s h^o` this share opens.
    pub fn commitment(&self) -> Commitment {
        commit(&self.s, &self.o)
    }
}

impl std::ops::Add for SharePair {
    type Output = SharePair;

    /// Pointwise sum of two shares held at the same index.
    fn add(self, rhs: SharePair) -> SharePair {
        debug_assert_eq!(self.index, rhs.index);
        SharePair::new(self.index, self.s + rhs.s, self.o + rhs.o)
    }
}

/// Commitments `E_0, ..., E_{t-1}` to the sharing polynomials' coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoeffCommitments(pub Vec<Commitment>);

impl CoeffCommitments {
    pub fn threshold(&self) -> usize {
        self.0.len()
    }

    /// `E_0 = g^s h^o`, the commitment to the shared value itself.
    pub fn secret_commitment(&self) -> Commitment {
        self.0[0]
    }

    /// `Π_j E_j^(u^j)`, the commitment every honest share at index `u` must open.
    pub fn evaluate(&self, index: u32) -> GroupElement {
        let u = Scalar::from(index as u64);
        let mut power = Scalar::ONE;
        let mut exps = Vec::with_capacity(self.0.len());
        for _ in 0..self.0.len() {
            exps.push(power);
            power *= u;
        }
        let points: Vec<GroupElement> = self.0.iter().map(|c| c.0).collect();
        msm(&exps, &points).expect("lengths match by construction")
    }
}

fn evaluate_poly(coeffs: &[Scalar], x: &Scalar) -> Scalar {
    coeffs
        .iter()
        .rev()
        .fold(Scalar::ZERO, |acc, c| acc * x + c)
}

/// Shares `(s, o)` among `n` participants with reconstruction threshold `t`.
pub fn vss_gen<R: RngCore + CryptoRng>(
    s: Scalar,
    o: Scalar,
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<SharePair>, CoeffCommitments)> {
    if t == 0 || t > n {
        return Err(Error::InvalidThreshold { t, n });
    }
    let mut f = Vec::with_capacity(t);
    let mut g = Vec::with_capacity(t);
    f.push(s);
    g.push(o);
    for _ in 1..t {
        f.push(random_scalar(rng));
        g.push(random_scalar(rng));
    }
    vss_gen_from_coefficients(&f, &g, n)
}

/// Deterministic sharing from explicit coefficient vectors (`f[0] = s`, `g[0] = o`).
pub fn vss_gen_from_coefficients(
    f: &[Scalar],
    g: &[Scalar],
    n: usize,
) -> Result<(Vec<SharePair>, CoeffCommitments)> {
    let t = f.len();
    if g.len() != t {
        return Err(Error::LengthMismatch {
            expected: t,
            actual: g.len(),
        });
    }
    if t == 0 || t > n {
        return Err(Error::InvalidThreshold { t, n });
    }
    let comms = CoeffCommitments(f.iter().zip(g).map(|(a, b)| commit(a, b)).collect());
    let shares = (1..=n as u32)
        .map(|u| {
            let x = Scalar::from(u as u64);
            SharePair::new(u, evaluate_poly(f, &x), evaluate_poly(g, &x))
        })
        .collect();
    Ok((shares, comms))
}

/// Checks `g^{s_u} h^{o_u} = Π_j E_j^(u^j)`.
pub fn vss_verify_share(share: &SharePair, comms: &CoeffCommitments) -> bool {
    if share.index == 0 || comms.0.is_empty() {
        return false;
    }
    share.commitment().0 == comms.evaluate(share.index)
}

/// Lagrange coefficients at zero for the given distinct nonzero indices.
pub fn lagrange_at_zero(indices: &[u32]) -> Result<Vec<Scalar>> {
    for (i, &a) in indices.iter().enumerate() {
        if a == 0 {
            return Err(Error::ZeroIndex);
        }
        if indices[..i].contains(&a) {
            return Err(Error::DuplicateIndex(a));
        }
    }
    let xs: Vec<Scalar> = indices.iter().map(|&u| Scalar::from(u as u64)).collect();
    let mut numerators = Vec::with_capacity(xs.len());
    let mut denominators = Vec::with_capacity(xs.len());
    for (i, xi) in xs.iter().enumerate() {
        let mut num = Scalar::ONE;
        let mut den = Scalar::ONE;
        for (j, xj) in xs.iter().enumerate() {
            if i != j {
                num *= xj;
                den *= xj - xi;
            }
        }
        numerators.push(num);
        denominators.push(den);
    }
    Scalar::batch_invert(&mut denominators);
    Ok(numerators
        .into_iter()
        .zip(denominators)
        .map(|(n, d)| n * d)
        .collect())
}

/// Recovers `(s, o)` from at least `t` shares with distinct indices.
///
/// Only the first `t` shares are interpolated; callers pick the subset.
pub fn vss_reconstruct(shares: &[SharePair], t: usize) -> Result<(Scalar, Scalar)> {
    if t == 0 {
        return Err(Error::InvalidThreshold { t, n: shares.len() });
    }
    if shares.len() < t {
        return Err(Error::NotEnoughShares {
            needed: t,
            got: shares.len(),
        });
    }
    let indices: Vec<u32> = shares.iter().map(|s| s.index).collect();
    // duplicates anywhere in the input are a caller error, not only in the prefix
    lagrange_at_zero(&indices)?;
    let chosen = &shares[..t];
    let coeffs = lagrange_at_zero(&indices[..t])?;
    let (mut s, mut o) = (Scalar::ZERO, Scalar::ZERO);
    for (share, a) in chosen.iter().zip(&coeffs) {
        s += a * share.s;
        o += a * share.o;
    }
    Ok((s, o))
}

/// Pointwise product of coefficient commitments from several dealers.
pub fn comms_aggregate(inputs: &[&CoeffCommitments]) -> Result<CoeffCommitments> {
    let Some(first) = inputs.first() else {
        return Err(Error::LengthMismatch {
            expected: 1,
            actual: 0,
        });
    };
    let t = first.threshold();
    let mut acc = vec![Commitment::identity(); t];
    for comms in inputs {
        if comms.threshold() != t {
            return Err(Error::LengthMismatch {
                expected: t,
                actual: comms.threshold(),
            });
        }
        for (a, c) in acc.iter_mut().zip(&comms.0) {
            *a += *c;
        }
    }
    Ok(CoeffCommitments(acc))
}
