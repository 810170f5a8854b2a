//! Prime-order group arithmetic, Pedersen commitments and Fiat-Shamir transcripts.
//!
//! The group is Ristretto255. Both Pedersen generators are derived by hashing fixed
//! domain-separation strings to the group, so nobody knows `log_g(h)`.
//!
//! Wire encodings: group elements use the 32-byte compressed Ristretto encoding, scalars
//! the 32-byte little-endian canonical form.

use std::ops::{Add, AddAssign, Neg, Sub};
use std::sync::OnceLock;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoBasepointTable};
use curve25519_dalek::traits::{Identity, VartimeMultiscalarMul};
use rand_core::{CryptoRng, RngCore};
use sha2::Sha512;

use crate::error::{Error, Result};

pub use curve25519_dalek::ristretto::RistrettoPoint as GroupElement;
pub use curve25519_dalek::scalar::Scalar;
pub use merlin::Transcript;

/// Byte length of an encoded group element or scalar.
pub const ENCODED_LEN: usize = 32;

const G_LABEL: &[u8] = b"nov/g";
const H_LABEL: &[u8] = b"nov/h";

/// The fixed Pedersen generators `(g, h)` with precomputed multiplication tables.
pub struct PedersenGens {
    pub g: GroupElement,
    pub h: GroupElement,
    g_table: RistrettoBasepointTable,
    h_table: RistrettoBasepointTable,
}

impl PedersenGens {
    fn derive() -> Self {
        let g = GroupElement::hash_from_bytes::<Sha512>(G_LABEL);
        let h = GroupElement::hash_from_bytes::<Sha512>(H_LABEL);
        Self {
            g,
            h,
            g_table: RistrettoBasepointTable::create(&g),
            h_table: RistrettoBasepointTable::create(&h),
        }
    }

    /// `g^x`
    pub fn g_mul(&self, x: &Scalar) -> GroupElement {
        &self.g_table * x
    }

    /// `h^r`
    pub fn h_mul(&self, r: &Scalar) -> GroupElement {
        &self.h_table * r
    }

    /// `g^x h^r`
    pub fn commit(&self, x: &Scalar, r: &Scalar) -> Commitment {
        Commitment(self.g_mul(x) + self.h_mul(r))
    }
}

impl std::fmt::Debug for PedersenGens {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PedersenGens")
            .field("g", &self.g.compress())
            .field("h", &self.h.compress())
            .finish()
    }
}

/// Process-wide generators.
pub fn gens() -> &'static PedersenGens {
    static GENS: OnceLock<PedersenGens> = OnceLock::new();
    GENS.get_or_init(PedersenGens::derive)
}

/// A Pedersen commitment `g^x h^r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Commitment(pub GroupElement);

impl Commitment {
    pub fn identity() -> Self {
        Commitment(GroupElement::identity())
    }

    pub fn point(&self) -> &GroupElement {
        &self.0
    }

    /// `self^k`, i.e. a commitment to `k*x` under blinding `k*r`.
    pub fn scale(&self, k: &Scalar) -> Self {
        Commitment(self.0 * k)
    }

    pub fn to_bytes(&self) -> [u8; ENCODED_LEN] {
        point_to_bytes(&self.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        point_from_bytes(bytes).map(Commitment)
    }
}

impl Add for Commitment {
    type Output = Commitment;
    fn add(self, rhs: Commitment) -> Commitment {
        Commitment(self.0 + rhs.0)
    }
}

impl AddAssign for Commitment {
    fn add_assign(&mut self, rhs: Commitment) {
        self.0 += rhs.0;
    }
}

impl Sub for Commitment {
    type Output = Commitment;
    fn sub(self, rhs: Commitment) -> Commitment {
        Commitment(self.0 - rhs.0)
    }
}

impl Neg for Commitment {
    type Output = Commitment;
    fn neg(self) -> Commitment {
        Commitment(-self.0)
    }
}

impl std::iter::Sum for Commitment {
    fn sum<I: Iterator<Item = Commitment>>(iter: I) -> Self {
        iter.fold(Commitment::identity(), |acc, c| acc + c)
    }
}

/// `g^x h^r` over the process-wide generators.
pub fn commit(x: &Scalar, r: &Scalar) -> Commitment {
    gens().commit(x, r)
}

/// Multi-scalar multiplication `Π points_i ^ scalars_i`.
pub fn msm(scalars: &[Scalar], points: &[GroupElement]) -> Result<GroupElement> {
    if scalars.len() != points.len() {
        return Err(Error::LengthMismatch {
            expected: scalars.len(),
            actual: points.len(),
        });
    }
    Ok(GroupElement::vartime_multiscalar_mul(scalars, points))
}

pub fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    Scalar::random(rng)
}

pub fn random_nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    loop {
        let s = Scalar::random(rng);
        if s != Scalar::ZERO {
            return s;
        }
    }
}

pub fn point_to_bytes(p: &GroupElement) -> [u8; ENCODED_LEN] {
    p.compress().to_bytes()
}

pub fn point_from_bytes(bytes: &[u8]) -> Result<GroupElement> {
    CompressedRistretto::from_slice(bytes)
        .map_err(|_| Error::Malformed(format!("group element of {} bytes", bytes.len())))?
        .decompress()
        .ok_or_else(|| Error::Malformed("invalid group element encoding".into()))
}

pub fn scalar_to_bytes(s: &Scalar) -> [u8; ENCODED_LEN] {
    s.to_bytes()
}

/// Decodes a canonical little-endian scalar; non-reduced encodings are rejected.
pub fn scalar_from_bytes(bytes: &[u8]) -> Result<Scalar> {
    let arr: [u8; ENCODED_LEN] = bytes
        .try_into()
        .map_err(|_| Error::Malformed(format!("scalar of {} bytes", bytes.len())))?;
    Option::from(Scalar::from_canonical_bytes(arr))
        .ok_or_else(|| Error::Malformed("non-canonical scalar".into()))
}

/// Typed appends and challenges on top of a merlin transcript.
pub trait TranscriptProtocol {
    fn append_point(&mut self, label: &'static [u8], point: &GroupElement);
    fn append_commitment(&mut self, label: &'static [u8], c: &Commitment);
    fn append_scalar(&mut self, label: &'static [u8], s: &Scalar);
    fn challenge_scalar(&mut self, label: &'static [u8]) -> Scalar;
}

impl TranscriptProtocol for Transcript {
    fn append_point(&mut self, label: &'static [u8], point: &GroupElement) {
        self.append_message(label, &point_to_bytes(point));
    }

    fn append_commitment(&mut self, label: &'static [u8], c: &Commitment) {
        self.append_point(label, &c.0);
    }

    fn append_scalar(&mut self, label: &'static [u8], s: &Scalar) {
        self.append_message(label, s.as_bytes());
    }

    fn challenge_scalar(&mut self, label: &'static [u8]) -> Scalar {
        let mut buf = [0u8; 64];
        self.challenge_bytes(label, &mut buf);
        Scalar::from_bytes_mod_order_wide(&buf)
    }
}

/// Squeezes a challenge scalar out of `transcript` under `label`.
pub fn challenge(transcript: &mut Transcript, label: &'static [u8]) -> Scalar {
    transcript.challenge_scalar(label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    /// Left-to-right double-and-add over the scalar's bits, using only point addition.
    fn double_and_add(base: &GroupElement, k: &Scalar) -> GroupElement {
        let bytes = k.to_bytes();
        let mut acc = GroupElement::identity();
        for byte in bytes.iter().rev() {
            for bit in (0..8).rev() {
                acc = acc + acc;
                if (byte >> bit) & 1 == 1 {
                    acc = acc + base;
                }
            }
        }
        acc
    }

    #[test]
    fn generators_are_distinct_and_nontrivial() {
        let gens = gens();
        assert_ne!(gens.g, gens.h);
        assert_ne!(gens.g, GroupElement::identity());
        assert_ne!(gens.h, GroupElement::identity());
        assert_eq!(gens.g, GroupElement::hash_from_bytes::<Sha512>(b"nov/g"));
    }

    #[test]
    fn commit_zero_is_identity() {
        assert_eq!(commit(&Scalar::ZERO, &Scalar::ZERO), Commitment::identity());
    }

    #[test]
    fn commit_matches_double_and_add_oracle() {
        let gens = gens();
        let expected = double_and_add(&gens.g, &Scalar::from(3u64))
            + double_and_add(&gens.h, &Scalar::from(5u64));
        assert_eq!(commit(&Scalar::from(3u64), &Scalar::from(5u64)).0, expected);
        // and with full-width exponents
        let mut rng = rng();
        for _ in 0..8 {
            let x = random_scalar(&mut rng);
            let r = random_scalar(&mut rng);
            let expected = double_and_add(&gens.g, &x) + double_and_add(&gens.h, &r);
            assert_eq!(commit(&x, &r).0, expected);
        }
    }

    #[test]
    fn commit_is_additively_homomorphic() {
        let mut rng = rng();
        for _ in 0..1000 {
            let (x, y, r, s) = (
                random_scalar(&mut rng),
                random_scalar(&mut rng),
                random_scalar(&mut rng),
                random_scalar(&mut rng),
            );
            assert_eq!(commit(&x, &r) + commit(&y, &s), commit(&(x + y), &(r + s)));
        }
    }

    #[test]
    fn commitments_bind_over_small_range() {
        // Exhaustively commit to all (x, r) in [0, 2^5)^2 and look for collisions, plus
        // 2^10 values of x with r = 0.
        let mut seen = std::collections::HashSet::new();
        for x in 0u64..32 {
            for r in 0u64..32 {
                let c = commit(&Scalar::from(x), &Scalar::from(r)).to_bytes();
                assert!(seen.insert(c), "collision at ({x}, {r})");
            }
        }
        for x in 32u64..1024 {
            let c = commit(&Scalar::from(x), &Scalar::ZERO).to_bytes();
            assert!(seen.insert(c), "collision at ({x}, 0)");
        }
    }

    #[test]
    fn msm_edge_cases() {
        let mut rng = rng();
        assert_eq!(msm(&[], &[]).unwrap(), GroupElement::identity());
        let p = GroupElement::random(&mut rng);
        assert_eq!(msm(&[Scalar::ONE], &[p]).unwrap(), p);
        assert_eq!(
            msm(&[Scalar::ONE], &[]),
            Err(Error::LengthMismatch { expected: 1, actual: 0 })
        );
    }

    #[test]
    fn msm_matches_naive_loop() {
        let mut rng = rng();
        for len in [2usize, 3, 17, 64] {
            let scalars: Vec<Scalar> = (0..len).map(|_| random_scalar(&mut rng)).collect();
            let points: Vec<GroupElement> =
                (0..len).map(|_| GroupElement::random(&mut rng)).collect();
            let naive = scalars
                .iter()
                .zip(&points)
                .fold(GroupElement::identity(), |acc, (s, p)| acc + p * s);
            assert_eq!(msm(&scalars, &points).unwrap(), naive);
        }
    }

    #[test]
    fn transcript_challenge_is_deterministic() {
        let make = || {
            let mut t = Transcript::new(b"test");
            t.append_point(b"g", &gens().g);
            t.append_scalar(b"x", &Scalar::from(9u64));
            challenge(&mut t, b"e")
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn transcript_challenge_is_order_sensitive() {
        let mut a = Transcript::new(b"test");
        a.append_message(b"m", b"one");
        a.append_message(b"m", b"two");
        let mut b = Transcript::new(b"test");
        b.append_message(b"m", b"two");
        b.append_message(b"m", b"one");
        assert_ne!(challenge(&mut a, b"e"), challenge(&mut b, b"e"));
    }

    #[test]
    fn transcript_single_byte_perturbations_change_challenge() {
        use rand::Rng;
        let mut rng = rng();
        let mut msg = [0u8; 64];
        rng.fill(&mut msg[..]);
        let run = |m: &[u8]| {
            let mut t = Transcript::new(b"perturb");
            t.append_message(b"m", m);
            challenge(&mut t, b"e").to_bytes()
        };
        let mut seen = std::collections::HashSet::new();
        seen.insert(run(&msg));
        // 1000 pairwise-distinct single-byte perturbations
        for i in 0..1000usize {
            let mut perturbed = msg;
            perturbed[i % msg.len()] ^= (i / msg.len() + 1) as u8;
            assert!(seen.insert(run(&perturbed)), "collision at perturbation {i}");
        }
    }

    #[test]
    fn empty_transcript_golden_challenge() {
        let mut t = Transcript::new(b"nov/golden");
        let e = challenge(&mut t, b"challenge");
        assert_eq!(
            hex(&e.to_bytes()),
            "730cd4aba09682d74b8d4c2aa9702e053b9911f00bebef69a3f32644a6ef4d08"
        );
    }

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    #[test]
    fn encodings_roundtrip_and_reject_garbage() {
        let mut rng = rng();
        let p = GroupElement::random(&mut rng);
        assert_eq!(point_from_bytes(&point_to_bytes(&p)).unwrap(), p);
        let s = random_scalar(&mut rng);
        assert_eq!(scalar_from_bytes(&scalar_to_bytes(&s)).unwrap(), s);
        assert!(scalar_from_bytes(&[0xff; 32]).is_err());
        assert!(point_from_bytes(&[0xff; 32]).is_err());
        assert!(point_from_bytes(&[0u8; 31]).is_err());
    }
}
