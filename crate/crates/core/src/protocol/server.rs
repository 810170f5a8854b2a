use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::client::{accusation_transcript, pair_chunks};
use super::config::RoundConfig;
use super::messages::{Accusation, Envelope, Message, RemovalReason, ShareBatch, SERVER};
use crate::elgamal::{decode_scalar, verify_decryption, ShareEncoding, CHUNKS};
use crate::error::{Error, Result};
use crate::filter::{select_clients, verify_submission, FilterContext, FilterSubmission, FilterVerdict};
use crate::fixed_point::QuantizedUpdate;
use crate::group::{commit, Commitment, GroupElement, Scalar};
use crate::vss::{comms_aggregate, lagrange_at_zero, vss_verify_share, CoeffCommitments, SharePair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Roster,
    Distribution,
    Reconstruction,
    Identification,
    Done,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipient {
    All,
    Client(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Recipient,
    pub env: Envelope,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckCount {
    pub passed: u64,
    pub failed: u64,
}

impl CheckCount {
    fn record(&mut self, ok: bool) -> bool {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        ok
    }
}

/// Pass and fail counts of the server-side checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckLog {
    /// Reconstructed sum against the product of parameter commitments.
    pub sum: CheckCount,
    /// Global share against the aggregated coefficient commitments.
    pub global_share: CheckCount,
    /// Revealed share against its dealer's coefficient commitments.
    pub share: CheckCount,
    /// Decryption proofs.
    pub decryption_proof: CheckCount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalRecord {
    pub client: u32,
    pub reason: RemovalReason,
    /// Identification pass (starting at 1) that removed the client.
    pub pass: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub phase: Phase,
    pub cause: String,
}

struct Distribution {
    shares: Vec<(u32, ShareBatch)>,
    coeff_comms: Arc<Vec<CoeffCommitments>>,
    filter: FilterSubmission,
}

/// Server side of one aggregation round.
///
/// Messages are buffered with [`Server::receive`]; [`Server::advance`] closes the current
/// phase (all expected messages arrived or the deadline passed) and returns what to send.
pub struct Server {
    cfg: RoundConfig,
    round: u64,
    reference: QuantizedUpdate,
    threshold: u64,
    phase: Phase,
    registrations: Vec<(u32, GroupElement)>,
    /// Client_1: index → public key.
    client1: BTreeMap<u32, GroupElement>,
    client2: BTreeSet<u32>,
    client3: BTreeSet<u32>,
    benign: Vec<u32>,
    distributions: BTreeMap<u32, Distribution>,
    coeff_comms: BTreeMap<u32, Arc<Vec<CoeffCommitments>>>,
    param_comms: BTreeMap<u32, Vec<Commitment>>,
    /// `(sender, receiver)` → encrypted shares.
    ciphertexts: BTreeMap<(u32, u32), ShareBatch>,
    rejected: BTreeMap<u32, String>,
    verdicts: Vec<FilterVerdict>,
    global_shares: BTreeMap<u32, Vec<(Scalar, Scalar)>>,
    accusations: BTreeMap<u32, Vec<Accusation>>,
    awaiting: BTreeSet<u32>,
    responses: BTreeMap<u32, Vec<Accusation>>,
    removals: Vec<RemovalRecord>,
    revealed: BTreeMap<(u32, u32), usize>,
    passes: usize,
    checks: CheckLog,
    result: Option<Vec<(Scalar, Scalar)>>,
    abort: Option<AbortInfo>,
}

impl Server {
    pub fn new(cfg: RoundConfig, round: u64, reference: QuantizedUpdate) -> Result<Self> {
        cfg.validate()?;
        if reference.shape() != cfg.shape {
            return Err(Error::InvalidConfig("reference shape mismatch".into()));
        }
        let threshold = cfg.norm_threshold()?;
        Ok(Self {
            cfg,
            round,
            reference,
            threshold,
            phase: Phase::Roster,
            registrations: Vec::new(),
            client1: BTreeMap::new(),
            client2: BTreeSet::new(),
            client3: BTreeSet::new(),
            benign: Vec::new(),
            distributions: BTreeMap::new(),
            coeff_comms: BTreeMap::new(),
            param_comms: BTreeMap::new(),
            ciphertexts: BTreeMap::new(),
            rejected: BTreeMap::new(),
            verdicts: Vec::new(),
            global_shares: BTreeMap::new(),
            accusations: BTreeMap::new(),
            awaiting: BTreeSet::new(),
            responses: BTreeMap::new(),
            removals: Vec::new(),
            revealed: BTreeMap::new(),
            passes: 0,
            checks: CheckLog::default(),
            result: None,
            abort: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn roster(&self) -> &BTreeMap<u32, GroupElement> {
        &self.client1
    }

    pub fn client1(&self) -> BTreeSet<u32> {
        self.client1.keys().copied().collect()
    }

    pub fn client2(&self) -> &BTreeSet<u32> {
        &self.client2
    }

    pub fn client3(&self) -> &BTreeSet<u32> {
        &self.client3
    }

    pub fn benign(&self) -> &[u32] {
        &self.benign
    }

    pub fn verdicts(&self) -> &[FilterVerdict] {
        &self.verdicts
    }

    /// Distributions dropped for structural defects, with the reason.
    pub fn rejected(&self) -> &BTreeMap<u32, String> {
        &self.rejected
    }

    pub fn removals(&self) -> &[RemovalRecord] {
        &self.removals
    }

    pub fn checks(&self) -> &CheckLog {
        &self.checks
    }

    pub fn result(&self) -> Option<&[(Scalar, Scalar)]> {
        self.result.as_deref()
    }

    pub fn abort_info(&self) -> Option<&AbortInfo> {
        self.abort.as_ref()
    }

    /// Number of identification passes run so far.
    pub fn identification_passes(&self) -> usize {
        self.passes
    }

    /// Largest number of share pairs of one dealer's parameter revealed to the server.
    pub fn max_revealed_shares(&self) -> usize {
        self.revealed.values().copied().max().unwrap_or(0)
    }

    /// Stored ciphertexts from `sender` to `receiver`.
    pub fn ciphertexts(&self, sender: u32, receiver: u32) -> Option<&ShareBatch> {
        self.ciphertexts.get(&(sender, receiver))
    }

    fn envelope(&self, body: Message) -> Envelope {
        Envelope::new(self.round, SERVER, body)
    }

    fn broadcast(&self, body: Message) -> Outgoing {
        Outgoing {
            to: Recipient::All,
            env: self.envelope(body),
        }
    }

    fn unicast(&self, to: u32, body: Message) -> Outgoing {
        Outgoing {
            to: Recipient::Client(to),
            env: self.envelope(body),
        }
    }

    fn fail(&mut self, cause: impl Into<String>) -> Vec<Outgoing> {
        self.abort = Some(AbortInfo {
            phase: self.phase,
            cause: cause.into(),
        });
        self.phase = Phase::Aborted;
        Vec::new()
    }

    /// Buffers a client message for the current phase. Returns whether it was accepted;
    /// wrong-round, out-of-phase, unknown-sender and repeated messages are dropped.
    pub fn receive(&mut self, env: Envelope) -> bool {
        if env.round != self.round {
            return false;
        }
        let sender = env.sender;
        match (self.phase, env.body) {
            (Phase::Roster, Message::RegisterKey { pk }) => {
                let dup = self
                    .registrations
                    .iter()
                    .any(|(party, key)| *party == sender || *key == pk);
                if dup {
                    return false;
                }
                self.registrations.push((sender, pk));
                true
            }
            (
                Phase::Distribution,
                Message::ShareDistribution {
                    shares,
                    coeff_comms,
                    filter,
                },
            ) => {
                if !self.client1.contains_key(&sender) || self.distributions.contains_key(&sender) {
                    return false;
                }
                self.distributions.insert(
                    sender,
                    Distribution {
                        shares,
                        coeff_comms,
                        filter,
                    },
                );
                true
            }
            (Phase::Reconstruction, Message::GlobalShare { shares }) => {
                if !self.client2.contains(&sender)
                    || self.global_shares.contains_key(&sender)
                    || shares.len() != self.cfg.num_params()
                {
                    return false;
                }
                self.global_shares.insert(sender, shares);
                true
            }
            (Phase::Reconstruction, Message::Accusation(a)) => {
                if !self.client2.contains(&sender) {
                    return false;
                }
                let list = self.accusations.entry(sender).or_default();
                if list.iter().any(|b| b.accused == a.accused) {
                    return false;
                }
                list.push(a);
                true
            }
            (Phase::Identification, Message::CommitmentListResponse { accusations }) => {
                if !self.awaiting.contains(&sender) || self.responses.contains_key(&sender) {
                    return false;
                }
                self.responses.insert(sender, accusations);
                true
            }
            _ => false,
        }
    }

    /// Closes the current phase.
    pub fn advance(&mut self) -> Vec<Outgoing> {
        match self.phase {
            Phase::Roster => self.close_roster(),
            Phase::Distribution => self.close_distribution(),
            Phase::Reconstruction => self.close_reconstruction(),
            Phase::Identification => self.close_identification(),
            Phase::Done | Phase::Aborted => Vec::new(),
        }
    }

    fn close_roster(&mut self) -> Vec<Outgoing> {
        if self.registrations.len() < self.cfg.t {
            let got = self.registrations.len();
            return self.fail(format!("{got} registrations, need {}", self.cfg.t));
        }
        self.client1 = self
            .registrations
            .iter()
            .enumerate()
            .map(|(i, (_, pk))| (i as u32 + 1, *pk))
            .collect();
        let entries = self.client1.iter().map(|(u, pk)| (*u, *pk)).collect();
        self.phase = Phase::Distribution;
        vec![self.broadcast(Message::Roster { entries })]
    }

    fn check_structure(&self, sender: u32, d: &Distribution) -> std::result::Result<(), String> {
        let p = self.cfg.num_params();
        let receivers: Vec<u32> = d.shares.iter().map(|(r, _)| *r).collect();
        let expected: Vec<u32> = self.client1.keys().copied().filter(|&u| u != sender).collect();
        if receivers != expected {
            return Err("share receivers do not match the roster".into());
        }
        if d.shares.iter().any(|(_, b)| b.len() != p) {
            return Err("share batch length".into());
        }
        if d.coeff_comms.len() != p || d.coeff_comms.iter().any(|c| c.threshold() != self.cfg.t) {
            return Err("coefficient commitment shape".into());
        }
        let consistent = d.filter.param_comms.len() == p
            && d
                .filter
                .param_comms
                .iter()
                .zip(d.coeff_comms.iter())
                .all(|(c, e)| *c == e.secret_commitment());
        if !consistent {
            return Err("filter commitments differ from sharing commitments".into());
        }
        Ok(())
    }

    fn close_distribution(&mut self) -> Vec<Outgoing> {
        let distributions = std::mem::take(&mut self.distributions);
        let mut accepted = BTreeMap::new();
        for (sender, d) in distributions {
            match self.check_structure(sender, &d) {
                Ok(()) => {
                    accepted.insert(sender, d);
                }
                Err(reason) => {
                    self.rejected.insert(sender, reason);
                }
            }
        }
        if accepted.len() < self.cfg.t {
            let got = accepted.len();
            return self.fail(format!("{got} valid distributions, need {}", self.cfg.t));
        }
        self.client2 = accepted.keys().copied().collect();

        for (&sender, d) in &accepted {
            let ctx = FilterContext {
                round: self.round,
                client: sender,
            };
            self.verdicts.push(verify_submission(
                &ctx,
                &d.filter,
                &self.reference,
                self.threshold,
                &self.cfg.quant,
            ));
        }
        let benign = match select_clients(&self.verdicts, self.cfg.t_s) {
            Ok(b) => b,
            Err(e) => return self.fail(e.to_string()),
        };
        if benign.len() < self.cfg.t {
            let got = benign.len();
            return self.fail(format!("benign list has {got} members, need {}", self.cfg.t));
        }
        self.benign = benign;

        let mut routed: BTreeMap<u32, Vec<(u32, ShareBatch)>> = BTreeMap::new();
        for (sender, d) in accepted {
            for (receiver, batch) in d.shares {
                if self.client2.contains(&receiver) {
                    routed.entry(receiver).or_default().push((sender, batch.clone()));
                    self.ciphertexts.insert((sender, receiver), batch);
                }
            }
            self.param_comms
                .insert(sender, d.filter.param_comms);
            self.coeff_comms.insert(sender, d.coeff_comms);
        }

        let mut out: Vec<Outgoing> = self
            .client2
            .iter()
            .map(|&r| {
                let shares = routed.remove(&r).unwrap_or_default();
                self.unicast(r, Message::RoutedShares { shares })
            })
            .collect();
        out.push(self.broadcast(Message::BenignList {
            members: self.benign.clone(),
        }));
        self.phase = Phase::Reconstruction;
        out
    }

    fn close_reconstruction(&mut self) -> Vec<Outgoing> {
        self.client3 = self.global_shares.keys().copied().collect();
        let pending = !self.accusations.is_empty();
        if self.client3.len() < self.cfg.t && !pending {
            let got = self.client3.len();
            return self.fail(format!("{got} global shares, need {}", self.cfg.t));
        }
        let mut sum_ok = false;
        let mut sums = Vec::new();
        if self.client3.len() >= self.cfg.t {
            match self.reconstruct() {
                Ok((ok, s)) => {
                    sum_ok = ok;
                    sums = s;
                }
                Err(e) => return self.fail(e.to_string()),
            }
        }
        if sum_ok && !pending {
            self.result = Some(sums.clone());
            self.phase = Phase::Done;
            return vec![self.broadcast(Message::RoundResult { sums })];
        }
        self.start_identification()
    }

    /// Interpolates `(X, R)` from the `t` lowest-indexed global shares and checks it
    /// against the benign parameter commitments.
    fn reconstruct(&mut self) -> Result<(bool, Vec<(Scalar, Scalar)>)> {
        let chosen: Vec<u32> = self.client3.iter().copied().take(self.cfg.t).collect();
        let coeffs = lagrange_at_zero(&chosen)?;
        let p = self.cfg.num_params();
        let mut sums = vec![(Scalar::ZERO, Scalar::ZERO); p];
        for (u, a) in chosen.iter().zip(&coeffs) {
            for (acc, (s, o)) in sums.iter_mut().zip(&self.global_shares[u]) {
                acc.0 += a * s;
                acc.1 += a * o;
            }
        }
        let mut all_ok = true;
        for (i, (x, r)) in sums.iter().enumerate() {
            let product: Commitment = self.benign.iter().map(|v| self.param_comms[v][i]).sum();
            all_ok &= self.checks.sum.record(product == commit(x, r));
        }
        Ok((all_ok, sums))
    }

    fn start_identification(&mut self) -> Vec<Outgoing> {
        self.passes += 1;
        let aggregated = match self.aggregated_comms() {
            Ok(a) => a,
            Err(e) => return self.fail(e.to_string()),
        };
        let mut failing = BTreeSet::new();
        for (&u, shares) in &self.global_shares {
            let ok = shares.iter().zip(&aggregated).all(|((s, o), comms)| {
                let share = SharePair::new(u, *s, *o);
                self.checks.global_share.record(vss_verify_share(&share, comms))
            });
            if !ok {
                failing.insert(u);
            }
        }
        if failing.is_empty() && self.accusations.is_empty() {
            return self.fail("reconstruction failed but every global share verifies");
        }
        let lists: Vec<(u32, Arc<Vec<CoeffCommitments>>)> = self
            .benign
            .iter()
            .map(|v| (*v, self.coeff_comms[v].clone()))
            .collect();
        self.awaiting = failing;
        self.responses.clear();
        if self.awaiting.is_empty() {
            return self.close_identification();
        }
        self.phase = Phase::Identification;
        self.awaiting
            .iter()
            .map(|&u| {
                self.unicast(
                    u,
                    Message::CommitmentListRequest {
                        lists: lists.clone(),
                    },
                )
            })
            .collect()
    }

    fn aggregated_comms(&self) -> Result<Vec<CoeffCommitments>> {
        (0..self.cfg.num_params())
            .map(|i| {
                let per_dealer: Vec<&CoeffCommitments> =
                    self.benign.iter().map(|v| &self.coeff_comms[v][i]).collect();
                comms_aggregate(&per_dealer)
            })
            .collect()
    }

    /// Who an accusation convicts: the accused, or the accuser with the reason.
    fn judge(&mut self, accuser: u32, a: &Accusation) -> (u32, RemovalReason) {
        let bad_proof = (accuser, RemovalReason::InvalidDecryptionProof);
        let Some(batch) = self.ciphertexts.get(&(a.accused, accuser)) else {
            return bad_proof;
        };
        let Some(pair) = batch.get(a.param as usize) else {
            return bad_proof;
        };
        if a.proofs.len() != 2 * CHUNKS {
            self.checks.decryption_proof.record(false);
            return bad_proof;
        }
        let pk = self.client1[&accuser];
        let mut transcript = accusation_transcript(self.round, accuser, a.accused, a.param);
        for (c, proof) in pair_chunks(pair).zip(&a.proofs) {
            if !self
                .checks
                .decryption_proof
                .record(verify_decryption(&pk, c, proof, &mut transcript))
            {
                return bad_proof;
            }
        }
        let chunks = |range: std::ops::Range<usize>| ShareEncoding {
            chunks: std::array::from_fn(|k| a.proofs[range.start + k].m),
        };
        let s = decode_scalar(&chunks(0..CHUNKS));
        let o = decode_scalar(&chunks(CHUNKS..2 * CHUNKS));
        let (Ok(s), Ok(o)) = (s, o) else {
            return (a.accused, RemovalReason::InvalidShare);
        };
        *self.revealed.entry((a.accused, a.param)).or_default() += 1;
        let share = SharePair::new(accuser, s, o);
        let comms = &self.coeff_comms[&a.accused][a.param as usize];
        if self.checks.share.record(vss_verify_share(&share, comms)) {
            (accuser, RemovalReason::FalseAccusation)
        } else {
            (a.accused, RemovalReason::InvalidShare)
        }
    }

    fn close_identification(&mut self) -> Vec<Outgoing> {
        let mut all: BTreeMap<u32, Vec<Accusation>> = std::mem::take(&mut self.accusations);
        for (u, list) in std::mem::take(&mut self.responses) {
            all.entry(u).or_default().extend(list);
        }
        let mut removed: BTreeMap<u32, RemovalReason> = BTreeMap::new();
        let mut justified = BTreeSet::new();
        for (accuser, list) in &all {
            for a in list {
                if removed.contains_key(accuser) {
                    break;
                }
                if !self.benign.contains(&a.accused) || a.accused == *accuser {
                    continue;
                }
                let (guilty, reason) = self.judge(*accuser, a);
                if guilty == a.accused {
                    justified.insert(*accuser);
                }
                removed.entry(guilty).or_insert(reason);
            }
        }
        for &u in &self.awaiting {
            if !justified.contains(&u) {
                removed.entry(u).or_insert(RemovalReason::NoJustification);
            }
        }
        self.awaiting.clear();
        if removed.is_empty() {
            return self.fail("identification removed nobody");
        }

        let mut out = Vec::new();
        for (&client, &reason) in &removed {
            self.removals.push(RemovalRecord {
                client,
                reason,
                pass: self.passes,
            });
            self.client1.remove(&client);
            self.client2.remove(&client);
            self.client3.remove(&client);
            self.benign.retain(|&v| v != client);
            out.push(self.broadcast(Message::Removal { client, reason }));
        }
        if self.benign.is_empty() {
            return self.fail("benign list emptied by removals");
        }
        self.global_shares.clear();
        self.phase = Phase::Reconstruction;
        out.push(self.broadcast(Message::BenignList {
            members: self.benign.clone(),
        }));
        out
    }
}
