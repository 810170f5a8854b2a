//! ElGamal encryption of share pairs and the proof of correct decryption.
//!
//! Ciphertexts have the form `(pk^r, g^r · m)`, so `c2 · m^{-1} = g^r` and `c1 = (g^r)^sk`.
//! Correct decryption is therefore the discrete-log equality
//! `log_g(pk) = log_{c2·m^{-1}}(c1)`, proven with a Chaum-Pedersen Σ-protocol:
//!
//! ```text
//! A = g^a,  B = (c2·m^{-1})^a,  e = H(g, pk, m, c1, c2, A, B),  z = sk·e + a
//! verify:  pk^e · A = g^z  and  c1^e · B = (c2·m^{-1})^z
//! ```
//!
//! Scalars travel as 16 chunks of 16 bits, chunk `k` encrypted as `g^{chunk_k}`, and are
//! decoded through a 2^16-entry discrete-log table.

use std::collections::HashMap;
use std::sync::OnceLock;

use curve25519_dalek::ristretto::RistrettoBasepointTable;
use curve25519_dalek::traits::{Identity, IsIdentity, VartimeMultiscalarMul};
use rand_core::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::group::{
    gens, random_nonzero_scalar, random_scalar, GroupElement, Scalar, Transcript,
    TranscriptProtocol,
};

/// Number of 16-bit chunks per scalar.
pub const CHUNKS: usize = 16;
const CHUNK_BITS: usize = 16;
const TABLE_SIZE: usize = 1 << CHUNK_BITS;

/// A decryption key together with its public key.
#[derive(Clone)]
pub struct Keypair {
    sk: Scalar,
    sk_inv: Scalar,
    pub pk: GroupElement,
}

impl std::fmt::Debug for Keypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keypair")
            .field("pk", &self.pk.compress())
            .finish_non_exhaustive()
    }
}

impl Keypair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::from_secret(random_nonzero_scalar(rng)).expect("nonzero by construction")
    }

    pub fn from_secret(sk: Scalar) -> Result<Self> {
        if sk == Scalar::ZERO {
            return Err(Error::Protocol("secret key must be nonzero".into()));
        }
        Ok(Self {
            sk,
            sk_inv: sk.invert(),
            pk: gens().g_mul(&sk),
        })
    }

    pub fn secret(&self) -> &Scalar {
        &self.sk
    }

    /// `c2 · c1^{-1/sk}`, with the inverse cached.
    pub fn decrypt(&self, c: &Ciphertext) -> GroupElement {
        c.c2 - c.c1 * self.sk_inv
    }
}

pub fn keygen<R: RngCore + CryptoRng>(rng: &mut R) -> Keypair {
    Keypair::generate(rng)
}

/// An ElGamal ciphertext `(pk^r, g^r · m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub c1: GroupElement,
    pub c2: GroupElement,
}

/// A public key with a precomputed multiplication table for bulk encryption.
pub struct EncryptionKey {
    pk: GroupElement,
    table: RistrettoBasepointTable,
}

impl EncryptionKey {
    pub fn new(pk: GroupElement) -> Result<Self> {
        if pk.is_identity() {
            return Err(Error::IdentityPublicKey);
        }
        Ok(Self {
            pk,
            table: RistrettoBasepointTable::create(&pk),
        })
    }

    pub fn point(&self) -> &GroupElement {
        &self.pk
    }

    pub fn encrypt_with_randomness(&self, m: &GroupElement, r: &Scalar) -> Ciphertext {
        Ciphertext {
            c1: &self.table * r,
            c2: gens().g_mul(r) + m,
        }
    }

    pub fn encrypt<R: RngCore + CryptoRng>(&self, m: &GroupElement, rng: &mut R) -> Ciphertext {
        self.encrypt_with_randomness(m, &random_scalar(rng))
    }

    /// Encrypts each 16-bit chunk of `s` under independent randomness.
    pub fn encrypt_scalar<R: RngCore + CryptoRng>(
        &self,
        s: &Scalar,
        rng: &mut R,
    ) -> [Ciphertext; CHUNKS] {
        let encoding = encode_scalar(s);
        encoding.chunks.map(|m| self.encrypt(&m, rng))
    }
}

/// `(pk^r, g^r · m)` for fresh `r`.
pub fn encrypt<R: RngCore + CryptoRng>(
    pk: &GroupElement,
    m: &GroupElement,
    rng: &mut R,
) -> Result<Ciphertext> {
    encrypt_with_randomness(pk, m, &random_scalar(rng))
}

pub fn encrypt_with_randomness(
    pk: &GroupElement,
    m: &GroupElement,
    r: &Scalar,
) -> Result<Ciphertext> {
    if pk.is_identity() {
        return Err(Error::IdentityPublicKey);
    }
    Ok(Ciphertext {
        c1: pk * r,
        c2: gens().g_mul(r) + m,
    })
}

/// `c2 · c1^{-1/sk}`. Panics on `sk = 0`, which [`Keypair`] never holds.
pub fn decrypt(sk: &Scalar, c: &Ciphertext) -> GroupElement {
    assert!(*sk != Scalar::ZERO, "secret key must be nonzero");
    c.c2 - c.c1 * sk.invert()
}

/// A scalar as 16 group elements `g^{chunk_k}`, little-endian chunk order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShareEncoding {
    pub chunks: [GroupElement; CHUNKS],
}

struct DlogTable {
    powers: Vec<GroupElement>,
    lookup: HashMap<[u8; 32], u16>,
}

impl DlogTable {
    fn build() -> Self {
        let g = gens().g;
        let mut powers = Vec::with_capacity(TABLE_SIZE);
        let mut acc = GroupElement::identity();
        for _ in 0..TABLE_SIZE {
            powers.push(acc);
            acc += g;
        }
        // compress(g^k) = double_and_compress((g/2)^k), batched
        let half_g = g * Scalar::from(2u64).invert();
        let mut halves = Vec::with_capacity(TABLE_SIZE);
        let mut acc = GroupElement::identity();
        for _ in 0..TABLE_SIZE {
            halves.push(acc);
            acc += half_g;
        }
        let compressed = GroupElement::double_and_compress_batch(&halves);
        let lookup = compressed
            .into_iter()
            .enumerate()
            .map(|(k, c)| (c.to_bytes(), k as u16))
            .collect();
        Self { powers, lookup }
    }
}

fn dlog_table() -> &'static DlogTable {
    static TABLE: OnceLock<DlogTable> = OnceLock::new();
    TABLE.get_or_init(DlogTable::build)
}

/// Forces construction of the discrete-log table (otherwise built on first use).
pub fn warm_up() {
    dlog_table();
}

/// Splits `s` into 16-bit little-endian chunks.
pub fn scalar_chunks(s: &Scalar) -> [u16; CHUNKS] {
    let bytes = s.to_bytes();
    std::array::from_fn(|k| u16::from_le_bytes([bytes[2 * k], bytes[2 * k + 1]]))
}

pub fn encode_scalar(s: &Scalar) -> ShareEncoding {
    let table = dlog_table();
    let chunks = scalar_chunks(s).map(|c| table.powers[c as usize]);
    ShareEncoding { chunks }
}

/// The 16-bit discrete log of `m`, if it has one.
pub fn decode_chunk(m: &GroupElement) -> Option<u16> {
    dlog_table().lookup.get(m.compress().as_bytes()).copied()
}

pub fn decode_chunk_values(values: &[u16; CHUNKS]) -> Result<Scalar> {
    let mut bytes = [0u8; 32];
    for (k, v) in values.iter().enumerate() {
        bytes[2 * k..2 * k + 2].copy_from_slice(&v.to_le_bytes());
    }
    Option::from(Scalar::from_canonical_bytes(bytes)).ok_or(Error::NonCanonicalScalar)
}

pub fn decode_scalar(e: &ShareEncoding) -> Result<Scalar> {
    let mut values = [0u16; CHUNKS];
    for (k, m) in e.chunks.iter().enumerate() {
        values[k] = decode_chunk(m).ok_or(Error::UndecodableChunk { chunk: k })?;
    }
    decode_chunk_values(&values)
}

/// Decrypts a chunked scalar; also returns the plaintext group elements for proofs.
pub fn decrypt_scalar(
    keypair: &Keypair,
    cts: &[Ciphertext; CHUNKS],
) -> (ShareEncoding, Result<Scalar>) {
    let encoding = ShareEncoding {
        chunks: cts.map(|c| keypair.decrypt(&c)),
    };
    let value = decode_scalar(&encoding);
    (encoding, value)
}

/// A proof `(m, A, B, z)` that `m` is the decryption of a ciphertext under `pk`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecryptionProof {
    pub m: GroupElement,
    pub a: GroupElement,
    pub b: GroupElement,
    pub z: Scalar,
}

fn decryption_transcript(
    transcript: &mut Transcript,
    pk: &GroupElement,
    m: &GroupElement,
    c: &Ciphertext,
    a: &GroupElement,
    b: &GroupElement,
) -> Scalar {
    transcript.append_message(b"dom-sep", b"nov/decryption");
    transcript.append_point(b"g", &gens().g);
    transcript.append_point(b"pk", pk);
    transcript.append_point(b"m", m);
    transcript.append_point(b"c1", &c.c1);
    transcript.append_point(b"c2", &c.c2);
    transcript.append_point(b"A", a);
    transcript.append_point(b"B", b);
    transcript.challenge_scalar(b"e")
}

/// Proves that `m` decrypts `c` under `keypair`.
pub fn prove_decryption<R: RngCore + CryptoRng>(
    keypair: &Keypair,
    m: &GroupElement,
    c: &Ciphertext,
    transcript: &mut Transcript,
    rng: &mut R,
) -> DecryptionProof {
    let nonce = random_scalar(rng);
    let a = gens().g_mul(&nonce);
    let b = (c.c2 - m) * nonce;
    let e = decryption_transcript(transcript, &keypair.pk, m, c, &a, &b);
    DecryptionProof {
        m: *m,
        a,
        b,
        z: keypair.sk * e + nonce,
    }
}

/// Checks `pk^e · A = g^z` and `c1^e · B = (c2·m^{-1})^z`.
pub fn verify_decryption(
    pk: &GroupElement,
    c: &Ciphertext,
    proof: &DecryptionProof,
    transcript: &mut Transcript,
) -> bool {
    let e = decryption_transcript(transcript, pk, &proof.m, c, &proof.a, &proof.b);
    let lhs1 = GroupElement::vartime_multiscalar_mul([e, Scalar::ONE], [*pk, proof.a]);
    if lhs1 != gens().g_mul(&proof.z) {
        return false;
    }
    let blinded = c.c2 - proof.m;
    let check = GroupElement::vartime_multiscalar_mul(
        [e, Scalar::ONE, -proof.z],
        [c.c1, proof.b, blinded],
    );
    check.is_identity()
}
