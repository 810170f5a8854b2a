//! Zero-knowledge model filter.
//!
//! A client commits to every quantized parameter `c_i = g^{x_i} h^{r_i}` and proves, without
//! revealing any `x_i`:
//!
//! * for each parameter, that `c'_i = c_i^{x_i} h^{r'_i - x_i r_i}` commits to `x_i²`
//!   ([`SquareLinkProof`]);
//! * that `T - Σ x_i²` lies in `[0, 2^{n_r})`, using `g^T · (Π c'_i)^{-1}` as the target;
//! * for each layer `l` it wants credit for, that `Σ_{i∈l} x_i y_i ≥ 0` against the public
//!   reference layer `y`, using `Π c_i^{y_i}` as the target.
//!
//! Layers whose inner product is negative get no proof at all, so the server learns only
//! how many layers pass. The server keeps every submission whose norm statement verifies and
//! ranks them by passing layer count.
//!
//! Range proofs decompose the value into bits: each bit commitment `B_j = g^{b_j} h^{s_j}`
//! carries a Chaum-Pedersen OR-proof that it opens to 0 or 1, and the bit blindings are
//! chosen so that `Π B_j^{2^j}` equals the target commitment exactly.

use std::collections::BTreeMap;

use curve25519_dalek::traits::VartimeMultiscalarMul;
use rand_core::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::fixed_point::{embed_signed, scalar_to_u64_bounded, QuantConfig, QuantizedUpdate};
use crate::group::{
    commit, gens, msm, random_scalar, Commitment, GroupElement, Scalar, Transcript,
    TranscriptProtocol,
};

/// OR-proof that a bit commitment opens to 0 or 1.
///
/// Branch `k ∈ {0, 1}` proves knowledge of `log_h(B · g^{-k})`; the branch challenges sum to
/// the transcript challenge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitProof {
    pub commitment: Commitment,
    pub e0: Scalar,
    pub e1: Scalar,
    pub z0: Scalar,
    pub z1: Scalar,
}

/// Proof that a commitment opens to a value in `[0, 2^{bits.len()})`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeProof {
    pub bits: Vec<BitProof>,
}

fn range_transcript_header(transcript: &mut Transcript, target: &Commitment, n_r: u32) {
    transcript.append_message(b"dom-sep", b"nov/range");
    transcript.append_u64(b"n_r", n_r as u64);
    transcript.append_commitment(b"target", target);
}

/// Proves that `target = commit(value, blinding)` holds a value in `[0, 2^{n_r})`.
pub fn range_prove<R: RngCore + CryptoRng>(
    value: &Scalar,
    blinding: &Scalar,
    target: &Commitment,
    n_r: u32,
    transcript: &mut Transcript,
    rng: &mut R,
) -> Result<RangeProof> {
    let v = scalar_to_u64_bounded(value, n_r).ok_or(Error::OutOfRange { bits: n_r })?;
    if n_r == 0 || n_r > 64 {
        return Err(Error::OutOfRange { bits: n_r });
    }
    let gens = gens();
    let n = n_r as usize;

    // s_0 absorbs the remainder so that Σ 2^j s_j = blinding
    let mut blinds = vec![Scalar::ZERO; n];
    let mut weighted = Scalar::ZERO;
    let mut power = Scalar::ONE;
    for b in blinds.iter_mut().skip(1) {
        power += power;
        *b = random_scalar(rng);
        weighted += power * *b;
    }
    blinds[0] = blinding - weighted;

    let bit_values: Vec<bool> = (0..n).map(|j| (v >> j) & 1 == 1).collect();
    let commitments: Vec<Commitment> = bit_values
        .iter()
        .zip(&blinds)
        .map(|(&b, s)| commit(&Scalar::from(b as u64), s))
        .collect();

    range_transcript_header(transcript, target, n_r);
    for c in &commitments {
        transcript.append_commitment(b"B", c);
    }

    // real branch: A = h^k; simulated branch: A = h^z · Y^{-e}
    struct Pending {
        nonce: Scalar,
        fake_e: Scalar,
        fake_z: Scalar,
    }
    let mut pending = Vec::with_capacity(n);
    for j in 0..n {
        let nonce = random_scalar(rng);
        let fake_e = random_scalar(rng);
        let fake_z = random_scalar(rng);
        let real = gens.h_mul(&nonce);
        let b = commitments[j].0;
        let (a0, a1) = if bit_values[j] {
            let y0 = b;
            let fake = GroupElement::vartime_multiscalar_mul([fake_z, -fake_e], [gens.h, y0]);
            (fake, real)
        } else {
            let y1 = b - gens.g;
            let fake = GroupElement::vartime_multiscalar_mul([fake_z, -fake_e], [gens.h, y1]);
            (real, fake)
        };
        transcript.append_point(b"A0", &a0);
        transcript.append_point(b"A1", &a1);
        pending.push(Pending {
            nonce,
            fake_e,
            fake_z,
        });
    }
    let e = transcript.challenge_scalar(b"e");

    let bits = pending
        .into_iter()
        .enumerate()
        .map(|(j, p)| {
            let real_e = e - p.fake_e;
            let real_z = p.nonce + real_e * blinds[j];
            let (e0, e1, z0, z1) = if bit_values[j] {
                (p.fake_e, real_e, p.fake_z, real_z)
            } else {
                (real_e, p.fake_e, real_z, p.fake_z)
            };
            BitProof {
                commitment: commitments[j],
                e0,
                e1,
                z0,
                z1,
            }
        })
        .collect();
    Ok(RangeProof { bits })
}

/// Checks that `target` commits to a value in `[0, 2^{n_r})`.
pub fn range_verify(
    target: &Commitment,
    proof: &RangeProof,
    n_r: u32,
    transcript: &mut Transcript,
) -> bool {
    let n = n_r as usize;
    if proof.bits.len() != n || n == 0 || n > 64 {
        return false;
    }
    let gens = gens();

    // Π B_j^{2^j} = target
    let mut powers = Vec::with_capacity(n);
    let mut power = Scalar::ONE;
    for _ in 0..n {
        powers.push(power);
        power += power;
    }
    let points: Vec<GroupElement> = proof.bits.iter().map(|b| b.commitment.0).collect();
    match msm(&powers, &points) {
        Ok(sum) if sum == target.0 => {}
        _ => return false,
    }

    range_transcript_header(transcript, target, n_r);
    for b in &proof.bits {
        transcript.append_commitment(b"B", &b.commitment);
    }
    for b in &proof.bits {
        let y0 = b.commitment.0;
        let y1 = y0 - gens.g;
        let a0 = GroupElement::vartime_multiscalar_mul([b.z0, -b.e0], [gens.h, y0]);
        let a1 = GroupElement::vartime_multiscalar_mul([b.z1, -b.e1], [gens.h, y1]);
        transcript.append_point(b"A0", &a0);
        transcript.append_point(b"A1", &a1);
    }
    let e = transcript.challenge_scalar(b"e");
    proof.bits.iter().all(|b| b.e0 + b.e1 == e)
}

/// Proof that `c_sq` commits to the square of the value committed in `c`.
///
/// Proves knowledge of `(x, r, ρ)` with `c = g^x h^r` and `c_sq = c^x h^ρ`, where
/// `ρ = r' - x·r`. Stored in challenge form `(e, z_x, z_r, z_ρ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SquareLinkProof {
    pub c_sq: Commitment,
    pub e: Scalar,
    pub z_x: Scalar,
    pub z_r: Scalar,
    pub z_rho: Scalar,
}

fn square_challenge(
    transcript: &mut Transcript,
    c: &Commitment,
    c_sq: &Commitment,
    t1: &GroupElement,
    t2: &GroupElement,
) -> Scalar {
    transcript.append_message(b"dom-sep", b"nov/square");
    transcript.append_commitment(b"c", c);
    transcript.append_commitment(b"c_sq", c_sq);
    transcript.append_point(b"t1", t1);
    transcript.append_point(b"t2", t2);
    transcript.challenge_scalar(b"e")
}

/// Commits to `x²` under fresh blinding `r'` and links it to `c = commit(x, r)`.
///
/// Returns the proof (which carries `c'`) and `r'`.
pub fn prove_square<R: RngCore + CryptoRng>(
    x: &Scalar,
    r: &Scalar,
    transcript: &mut Transcript,
    rng: &mut R,
) -> (SquareLinkProof, Scalar) {
    let gens = gens();
    let c = commit(x, r);
    let r_sq = random_scalar(rng);
    let c_sq = commit(&(x * x), &r_sq);
    let rho = r_sq - x * r;

    let (kx, kr, krho) = (random_scalar(rng), random_scalar(rng), random_scalar(rng));
    let t1 = gens.commit(&kx, &kr).0;
    let t2 = GroupElement::vartime_multiscalar_mul([kx, krho], [c.0, gens.h]);
    let e = square_challenge(transcript, &c, &c_sq, &t1, &t2);
    let proof = SquareLinkProof {
        c_sq,
        e,
        z_x: kx + e * x,
        z_r: kr + e * r,
        z_rho: krho + e * rho,
    };
    (proof, r_sq)
}

pub fn verify_square(c: &Commitment, proof: &SquareLinkProof, transcript: &mut Transcript) -> bool {
    let gens = gens();
    // t1 = g^{z_x} h^{z_r} c^{-e},  t2 = c^{z_x} h^{z_rho} c_sq^{-e}
    let t1 = GroupElement::vartime_multiscalar_mul(
        [proof.z_x, proof.z_r, -proof.e],
        [gens.g, gens.h, c.0],
    );
    let t2 = GroupElement::vartime_multiscalar_mul(
        [proof.z_x, proof.z_rho, -proof.e],
        [c.0, gens.h, proof.c_sq.0],
    );
    square_challenge(transcript, c, &proof.c_sq, &t1, &t2) == proof.e
}

/// What every filter proof of one submission is bound to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterContext {
    pub round: u64,
    pub client: u32,
}

impl FilterContext {
    fn transcript(&self, statement: &'static [u8], index: u64) -> Transcript {
        let mut t = Transcript::new(b"nov/filter");
        t.append_u64(b"round", self.round);
        t.append_u64(b"client", self.client as u64);
        t.append_message(b"statement", statement);
        t.append_u64(b"index", index);
        t
    }
}

/// Everything the server needs to filter one client's update.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FilterSubmission {
    pub param_comms: Vec<Commitment>,
    pub square_links: Vec<SquareLinkProof>,
    pub norm_proof: Option<RangeProof>,
    /// Layer index → sign proof, present only for layers whose inner product is ≥ 0.
    pub layer_proofs: BTreeMap<u32, RangeProof>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FilterVerdict {
    pub client: u32,
    pub norm_ok: bool,
    pub layer_pass_count: usize,
}

/// Client-side secrets for one update: embedded values and blindings, per parameter.
#[derive(Clone, Debug)]
pub struct CommittedUpdate {
    pub values: Vec<Scalar>,
    pub blindings: Vec<Scalar>,
    pub comms: Vec<Commitment>,
}

/// One commitment per parameter, with fresh blindings.
pub fn commit_update<R: RngCore + CryptoRng>(
    q: &QuantizedUpdate,
    rng: &mut R,
) -> CommittedUpdate {
    let values: Vec<Scalar> = q.flat().map(|v| embed_signed(v as i128)).collect();
    let blindings: Vec<Scalar> = values.iter().map(|_| random_scalar(rng)).collect();
    commit_update_with_blindings(values, blindings)
}

pub fn commit_update_with_blindings(values: Vec<Scalar>, blindings: Vec<Scalar>) -> CommittedUpdate {
    let comms = values
        .iter()
        .zip(&blindings)
        .map(|(x, r)| commit(x, r))
        .collect();
    CommittedUpdate {
        values,
        blindings,
        comms,
    }
}

/// Square-link proofs and the `r'` blindings, one per parameter.
pub fn prove_squares<R: RngCore + CryptoRng>(
    ctx: &FilterContext,
    committed: &CommittedUpdate,
    rng: &mut R,
) -> (Vec<SquareLinkProof>, Vec<Scalar>) {
    committed
        .values
        .iter()
        .zip(&committed.blindings)
        .enumerate()
        .map(|(i, (x, r))| prove_square(x, r, &mut ctx.transcript(b"square", i as u64), rng))
        .unzip()
}

/// `g^T · (Π c'_i)^{-1}`, the commitment to `T - Σ x_i²`.
pub fn norm_target(threshold: u64, square_comms: impl Iterator<Item = Commitment>) -> Commitment {
    let total: Commitment = square_comms.sum();
    Commitment(gens().g_mul(&Scalar::from(threshold))) - total
}

/// Range proof that `Σ x_i² ≤ T`. Refuses when the bound does not hold.
pub fn prove_norm_bound<R: RngCore + CryptoRng>(
    ctx: &FilterContext,
    committed: &CommittedUpdate,
    squares: &[SquareLinkProof],
    square_blindings: &[Scalar],
    threshold: u64,
    cfg: &QuantConfig,
    rng: &mut R,
) -> Result<RangeProof> {
    let sum_sq: Scalar = committed.values.iter().map(|x| x * x).sum();
    let value = Scalar::from(threshold) - sum_sq;
    let blinding = -square_blindings.iter().sum::<Scalar>();
    let target = norm_target(threshold, squares.iter().map(|s| s.c_sq));
    range_prove(
        &value,
        &blinding,
        &target,
        cfg.norm_bits,
        &mut ctx.transcript(b"norm", 0),
        rng,
    )
}

fn embedded_layer(layer: &[i64]) -> Vec<Scalar> {
    layer.iter().map(|&y| embed_signed(y as i128)).collect()
}

/// `Π c_i^{y_i}` over one layer.
pub fn layer_target(comms: &[Commitment], reference: &[i64]) -> Result<Commitment> {
    let points: Vec<GroupElement> = comms.iter().map(|c| c.0).collect();
    msm(&embedded_layer(reference), &points).map(Commitment)
}

/// Sign proof for one layer; `None` when the inner product with the reference is negative.
#[allow(clippy::too_many_arguments)]
pub fn prove_layer_sign<R: RngCore + CryptoRng>(
    ctx: &FilterContext,
    layer: u32,
    values: &[Scalar],
    blindings: &[Scalar],
    comms: &[Commitment],
    reference: &[i64],
    cfg: &QuantConfig,
    rng: &mut R,
) -> Result<Option<RangeProof>> {
    let ys = embedded_layer(reference);
    let dot: Scalar = values.iter().zip(&ys).map(|(x, y)| x * y).sum();
    if scalar_to_u64_bounded(&dot, cfg.norm_bits).is_none() {
        return Ok(None);
    }
    let blinding: Scalar = blindings.iter().zip(&ys).map(|(r, y)| r * y).sum();
    let target = layer_target(comms, reference)?;
    range_prove(
        &dot,
        &blinding,
        &target,
        cfg.norm_bits,
        &mut ctx.transcript(b"layer", layer as u64),
        rng,
    )
    .map(Some)
}

fn layer_bounds(shape: &[usize]) -> Vec<(usize, usize)> {
    let mut start = 0;
    shape
        .iter()
        .map(|&len| {
            let range = (start, start + len);
            start += len;
            range
        })
        .collect()
}

/// Builds a complete submission for an already-committed update.
///
/// The norm proof is omitted when `Σ x_i² > T` (no accepting proof exists), and layer proofs
/// are omitted for layers with negative inner product or an all-zero reference.
pub fn build_submission<R: RngCore + CryptoRng>(
    ctx: &FilterContext,
    committed: &CommittedUpdate,
    reference: &QuantizedUpdate,
    threshold: u64,
    cfg: &QuantConfig,
    rng: &mut R,
) -> Result<FilterSubmission> {
    let shape = reference.shape();
    if committed.values.len() != reference.num_params() {
        return Err(Error::LengthMismatch {
            expected: reference.num_params(),
            actual: committed.values.len(),
        });
    }
    let (square_links, square_blindings) = prove_squares(ctx, committed, rng);
    let norm_proof = match prove_norm_bound(
        ctx,
        committed,
        &square_links,
        &square_blindings,
        threshold,
        cfg,
        rng,
    ) {
        Ok(p) => Some(p),
        Err(Error::OutOfRange { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut layer_proofs = BTreeMap::new();
    for (l, (start, end)) in layer_bounds(&shape).into_iter().enumerate() {
        let y = &reference.layers[l];
        if y.iter().all(|&v| v == 0) {
            continue;
        }
        if let Some(proof) = prove_layer_sign(
            ctx,
            l as u32,
            &committed.values[start..end],
            &committed.blindings[start..end],
            &committed.comms[start..end],
            y,
            cfg,
            rng,
        )? {
            layer_proofs.insert(l as u32, proof);
        }
    }
    Ok(FilterSubmission {
        param_comms: committed.comms.clone(),
        square_links,
        norm_proof,
        layer_proofs,
    })
}

/// Server-side check of one submission; never sees parameter values.
pub fn verify_submission(
    ctx: &FilterContext,
    sub: &FilterSubmission,
    reference: &QuantizedUpdate,
    threshold: u64,
    cfg: &QuantConfig,
) -> FilterVerdict {
    let failed = FilterVerdict {
        client: ctx.client,
        norm_ok: false,
        layer_pass_count: 0,
    };
    let p = reference.num_params();
    if sub.param_comms.len() != p || sub.square_links.len() != p {
        return failed;
    }
    let squares_ok = sub
        .param_comms
        .iter()
        .zip(&sub.square_links)
        .enumerate()
        .all(|(i, (c, proof))| verify_square(c, proof, &mut ctx.transcript(b"square", i as u64)));
    let norm_ok = squares_ok
        && match &sub.norm_proof {
            Some(proof) => {
                let target = norm_target(threshold, sub.square_links.iter().map(|s| s.c_sq));
                range_verify(
                    &target,
                    proof,
                    cfg.norm_bits,
                    &mut ctx.transcript(b"norm", 0),
                )
            }
            None => false,
        };

    let shape = reference.shape();
    let mut layer_pass_count = 0;
    for (l, (start, end)) in layer_bounds(&shape).into_iter().enumerate() {
        let y = &reference.layers[l];
        if y.iter().all(|&v| v == 0) {
            layer_pass_count += 1;
            continue;
        }
        let Some(proof) = sub.layer_proofs.get(&(l as u32)) else {
            continue;
        };
        let Ok(target) = layer_target(&sub.param_comms[start..end], y) else {
            continue;
        };
        if range_verify(
            &target,
            proof,
            cfg.norm_bits,
            &mut ctx.transcript(b"layer", l as u64),
        ) {
            layer_pass_count += 1;
        }
    }
    FilterVerdict {
        client: ctx.client,
        norm_ok,
        layer_pass_count,
    }
}

/// `ceil(n · t_s)`, tolerant of binary rounding in `t_s` (e.g. `30 · 0.4`).
pub fn selection_size(n: usize, t_s: f64) -> usize {
    ((n as f64 * t_s) - 1e-9).ceil().max(0.0) as usize
}

/// Keeps norm-passing submissions, ranks them by passing layers (descending, ties by
/// ascending client index) and returns the top `ceil(n · t_s)` client indices.
pub fn select_clients(verdicts: &[FilterVerdict], t_s: f64) -> Result<Vec<u32>> {
    if !(t_s > 0.0 && t_s <= 1.0) {
        return Err(Error::InvalidConfig(format!("t_s = {t_s} not in (0, 1]")));
    }
    let keep = selection_size(verdicts.len(), t_s);
    let mut eligible: Vec<&FilterVerdict> = verdicts.iter().filter(|v| v.norm_ok).collect();
    eligible.sort_by(|a, b| {
        b.layer_pass_count
            .cmp(&a.layer_pass_count)
            .then(a.client.cmp(&b.client))
    });
    let selected: Vec<u32> = eligible.into_iter().take(keep).map(|v| v.client).collect();
    if selected.is_empty() {
        return Err(Error::EmptyBenignSet);
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::embed_signed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(31)
    }

    fn ctx() -> FilterContext {
        FilterContext {
            round: 1,
            client: 4,
        }
    }

    fn cfg() -> QuantConfig {
        QuantConfig::default()
    }

    fn prove_value(v: &Scalar, n_r: u32, rng: &mut ChaCha20Rng) -> Result<(Commitment, RangeProof)> {
        let r = random_scalar(rng);
        let target = commit(v, &r);
        range_prove(v, &r, &target, n_r, &mut Transcript::new(b"t"), rng).map(|p| (target, p))
    }

    fn verify_value(target: &Commitment, proof: &RangeProof, n_r: u32) -> bool {
        range_verify(target, proof, n_r, &mut Transcript::new(b"t"))
    }

    #[test]
    fn range_boundaries() {
        let mut rng = rng();
        for n_r in [8u32, 32, 64] {
            let zero = Scalar::ZERO;
            let (t, p) = prove_value(&zero, n_r, &mut rng).unwrap();
            assert!(verify_value(&t, &p, n_r));
            let top = if n_r == 64 {
                Scalar::from(u64::MAX)
            } else {
                Scalar::from((1u64 << n_r) - 1)
            };
            let (t, p) = prove_value(&top, n_r, &mut rng).unwrap();
            assert!(verify_value(&t, &p, n_r));
            let over = top + Scalar::ONE;
            assert_eq!(
                prove_value(&over, n_r, &mut rng).unwrap_err(),
                Error::OutOfRange { bits: n_r }
            );
            assert!(prove_value(&-Scalar::ONE, n_r, &mut rng).is_err());
        }
    }

    #[test]
    fn range_proof_rejects_wrong_target_and_width() {
        let mut rng = rng();
        let (t, p) = prove_value(&Scalar::from(77u64), 16, &mut rng).unwrap();
        assert!(!verify_value(&(t + commit(&Scalar::ONE, &Scalar::ZERO)), &p, 16));
        assert!(!verify_value(&t, &p, 15));
        assert!(!range_verify(&t, &p, 16, &mut Transcript::new(b"other")));
    }

    #[test]
    fn shifted_bit_commitments_do_not_verify() {
        // Moving weight between bit commitments keeps Π B_j^{2^j} but breaks the OR-proofs.
        let mut rng = rng();
        let (t, mut p) = prove_value(&Scalar::from(5u64), 8, &mut rng).unwrap();
        let g = Commitment(gens().g);
        p.bits[1].commitment = p.bits[1].commitment + g + g;
        p.bits[2].commitment = p.bits[2].commitment - g;
        assert!(!verify_value(&t, &p, 8));
    }

    #[test]
    fn squares_link() {
        let mut rng = rng();
        for v in [0i128, 5, -3, 1 << 20, -(1 << 23)] {
            let x = embed_signed(v);
            let r = random_scalar(&mut rng);
            let (proof, r_sq) = prove_square(&x, &r, &mut Transcript::new(b"sq"), &mut rng);
            assert_eq!(proof.c_sq, commit(&Scalar::from((v * v) as u128), &r_sq));
            assert!(verify_square(&commit(&x, &r), &proof, &mut Transcript::new(b"sq")));
        }
    }

    #[test]
    fn square_of_wrong_value_rejected() {
        let mut rng = rng();
        let x = Scalar::from(7u64);
        let r = random_scalar(&mut rng);
        let c = commit(&x, &r);
        let (proof, r_sq) = prove_square(&x, &r, &mut Transcript::new(b"sq"), &mut rng);
        // substitute a commitment to x² + 1 under the same blinding
        let mut forged = proof;
        forged.c_sq = commit(&Scalar::from(50u64), &r_sq);
        assert!(!verify_square(&c, &forged, &mut Transcript::new(b"sq")));
        let mut forged = proof;
        forged.z_x += Scalar::ONE;
        assert!(!verify_square(&c, &forged, &mut Transcript::new(b"sq")));
    }

    fn two_layer_reference() -> QuantizedUpdate {
        QuantizedUpdate {
            layers: vec![vec![100, -200, 300], vec![50, 50]],
        }
    }

    fn submit(update: &QuantizedUpdate, threshold: u64, rng: &mut ChaCha20Rng) -> FilterSubmission {
        let committed = commit_update(update, rng);
        build_submission(&ctx(), &committed, &two_layer_reference(), threshold, &cfg(), rng)
            .unwrap()
    }

    fn verdict(sub: &FilterSubmission, threshold: u64) -> FilterVerdict {
        verify_submission(&ctx(), sub, &two_layer_reference(), threshold, &cfg())
    }

    #[test]
    fn zero_update_commits_to_blindings_only() {
        let mut rng = rng();
        let zero = QuantizedUpdate::zeros(&[3, 2]);
        let committed = commit_update(&zero, &mut rng);
        for (c, r) in committed.comms.iter().zip(&committed.blindings) {
            assert_eq!(c.0, gens().h_mul(r));
        }
        let total: Commitment = committed.comms.iter().copied().sum();
        let r_total: Scalar = committed.blindings.iter().sum();
        assert_eq!(total, commit(&Scalar::ZERO, &r_total));
        let v = verdict(&submit(&zero, 1, &mut rng), 1);
        assert!(v.norm_ok);
        assert_eq!(v.layer_pass_count, 2);
    }

    #[test]
    fn commitment_regression_vector() {
        let values = vec![
            embed_signed(3),
            embed_signed(-1),
            embed_signed(0),
        ];
        let blindings = vec![Scalar::from(11u64), Scalar::from(12u64), Scalar::from(13u64)];
        let committed = commit_update_with_blindings(values, blindings);
        let g = gens().g;
        let h = gens().h;
        let expected = [
            g * Scalar::from(3u64) + h * Scalar::from(11u64),
            -g + h * Scalar::from(12u64),
            h * Scalar::from(13u64),
        ];
        for (c, e) in committed.comms.iter().zip(expected) {
            assert_eq!(c.0, e);
        }
    }

    #[test]
    fn norm_boundary() {
        let mut rng = rng();
        let update = QuantizedUpdate {
            layers: vec![vec![3, 4, 0], vec![12, 0]],
        };
        // Σ x² = 9 + 16 + 144 = 169
        assert_eq!(update.sum_squares(), 169);
        assert!(verdict(&submit(&update, 169, &mut rng), 169).norm_ok);
        let sub = submit(&update, 168, &mut rng);
        assert!(sub.norm_proof.is_none());
        assert!(!verdict(&sub, 168).norm_ok);
    }

    #[test]
    fn norm_proof_cannot_be_reused_for_smaller_threshold() {
        let mut rng = rng();
        let update = QuantizedUpdate {
            layers: vec![vec![3, 4, 0], vec![12, 0]],
        };
        let sub = submit(&update, 169, &mut rng);
        assert!(!verdict(&sub, 168).norm_ok);
    }

    #[test]
    fn layer_sign_symmetry() {
        let mut rng = rng();
        let reference = two_layer_reference();
        let pos = reference.clone();
        let v = verdict(&submit(&pos, u32::MAX as u64, &mut rng), u32::MAX as u64);
        assert_eq!(v.layer_pass_count, 2);
        let neg = QuantizedUpdate {
            layers: reference
                .layers
                .iter()
                .map(|l| l.iter().map(|x| -x).collect())
                .collect(),
        };
        let sub = submit(&neg, u32::MAX as u64, &mut rng);
        assert!(sub.layer_proofs.is_empty());
        let v = verdict(&sub, u32::MAX as u64);
        assert!(v.norm_ok);
        assert_eq!(v.layer_pass_count, 0);
    }

    #[test]
    fn corrupted_layer_proof_counts_one_less() {
        let mut rng = rng();
        let update = two_layer_reference();
        let mut sub = submit(&update, u32::MAX as u64, &mut rng);
        let proof = sub.layer_proofs.get_mut(&1).unwrap();
        proof.bits[3].z0 += Scalar::ONE;
        let v = verdict(&sub, u32::MAX as u64);
        assert!(v.norm_ok);
        assert_eq!(v.layer_pass_count, 1);
    }

    #[test]
    fn missing_norm_proof_or_wrong_shape_fails() {
        let mut rng = rng();
        let update = two_layer_reference();
        let mut sub = submit(&update, u32::MAX as u64, &mut rng);
        let honest = sub.clone();
        sub.norm_proof = None;
        assert!(!verdict(&sub, u32::MAX as u64).norm_ok);
        let mut short = honest.clone();
        short.param_comms.pop();
        assert_eq!(verdict(&short, u32::MAX as u64).layer_pass_count, 0);
        // a proof bound to another client does not transfer
        let other = FilterContext {
            round: 1,
            client: 5,
        };
        let v = verify_submission(&other, &honest, &two_layer_reference(), u32::MAX as u64, &cfg());
        assert!(!v.norm_ok);
        assert_eq!(v.layer_pass_count, 0);
    }

    #[test]
    fn all_zero_reference_layer_auto_passes() {
        let mut rng = rng();
        let reference = QuantizedUpdate {
            layers: vec![vec![0, 0, 0], vec![1, 1]],
        };
        let update = QuantizedUpdate {
            layers: vec![vec![-5, 5, -5], vec![-1, -1]],
        };
        let committed = commit_update(&update, &mut rng);
        let sub = build_submission(&ctx(), &committed, &reference, 1000, &cfg(), &mut rng).unwrap();
        let v = verify_submission(&ctx(), &sub, &reference, 1000, &cfg());
        assert_eq!(v.layer_pass_count, 1);
    }

    fn v(client: u32, norm_ok: bool, layers: usize) -> FilterVerdict {
        FilterVerdict {
            client,
            norm_ok,
            layer_pass_count: layers,
        }
    }

    #[test]
    fn selection_sizes() {
        assert_eq!(selection_size(30, 0.4), 12);
        assert_eq!(selection_size(30, 0.5), 15);
        assert_eq!(selection_size(10, 0.4), 4);
        assert_eq!(selection_size(10, 0.35), 4);
        assert_eq!(selection_size(7, 1.0), 7);
    }

    #[test]
    fn selection_ranks_and_breaks_ties() {
        let verdicts: Vec<FilterVerdict> = (1..=30).map(|c| v(c, true, 3)).collect();
        let chosen = select_clients(&verdicts, 0.4).unwrap();
        assert_eq!(chosen, (1..=12).collect::<Vec<_>>());

        let verdicts = vec![v(1, true, 1), v(2, false, 9), v(3, true, 3), v(4, true, 3)];
        assert_eq!(select_clients(&verdicts, 0.5).unwrap(), vec![3, 4]);
        assert_eq!(select_clients(&verdicts, 1.0).unwrap(), vec![3, 4, 1]);
    }

    #[test]
    fn selection_errors() {
        let verdicts = vec![v(1, false, 3)];
        assert_eq!(
            select_clients(&verdicts, 0.5).unwrap_err(),
            Error::EmptyBenignSet
        );
        assert!(select_clients(&verdicts, 0.0).is_err());
        assert!(select_clients(&verdicts, 1.5).is_err());
    }
}
