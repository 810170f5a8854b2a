use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::config::RoundConfig;
use super::messages::{Accusation, EncryptedSharePair, Envelope, Message, ShareBatch, SERVER};
use crate::elgamal::{decrypt_scalar, Ciphertext, EncryptionKey, Keypair, CHUNKS};
use crate::error::{Error, Result};
use crate::filter::{build_submission, commit_update, CommittedUpdate, FilterContext};
use crate::fixed_point::QuantizedUpdate;
use crate::group::{GroupElement, Scalar, Transcript};
use crate::vss::{vss_gen, vss_verify_share, CoeffCommitments, SharePair};

/// Transcript shared by the 32 decryption proofs of one accusation.
pub(crate) fn accusation_transcript(round: u64, accuser: u32, accused: u32, param: u32) -> Transcript {
    let mut t = Transcript::new(b"nov/accusation");
    t.append_u64(b"round", round);
    t.append_u64(b"accuser", accuser as u64);
    t.append_u64(b"accused", accused as u64);
    t.append_u64(b"param", param as u64);
    t
}

/// The 32 chunk ciphertexts of a share pair, `s` first.
pub(crate) fn pair_chunks(pair: &EncryptedSharePair) -> impl Iterator<Item = &Ciphertext> {
    pair.s.iter().chain(pair.o.iter())
}

/// One honest participant.
///
/// Drives its side of the round by reacting to server envelopes in [`Client::handle`].
pub struct Client {
    party: u32,
    round: u64,
    cfg: RoundConfig,
    reference: QuantizedUpdate,
    update: QuantizedUpdate,
    keypair: Keypair,
    rng: ChaCha20Rng,
    index: Option<u32>,
    roster: BTreeMap<u32, GroupElement>,
    committed: Option<CommittedUpdate>,
    /// `shares[param][receiver - 1]`
    shares: Vec<Vec<SharePair>>,
    coeff_comms: Arc<Vec<CoeffCommitments>>,
    received: BTreeMap<u32, ShareBatch>,
    routed: bool,
    /// Decrypted shares per sender; `None` where a chunk did not decode.
    decrypted: BTreeMap<u32, Vec<Option<SharePair>>>,
    benign: Vec<u32>,
    removed: Vec<u32>,
    result: Option<Vec<(Scalar, Scalar)>>,
}

impl Client {
    /// `party` identifies the client before the server assigns an index.
    pub fn new(
        party: u32,
        round: u64,
        cfg: RoundConfig,
        reference: QuantizedUpdate,
        update: QuantizedUpdate,
        seed: [u8; 32],
    ) -> Result<Self> {
        cfg.validate()?;
        for q in [&reference, &update] {
            if q.shape() != cfg.shape {
                return Err(Error::InvalidConfig(format!(
                    "update shape {:?} does not match {:?}",
                    q.shape(),
                    cfg.shape
                )));
            }
        }
        let mut rng = ChaCha20Rng::from_seed(seed);
        let keypair = Keypair::generate(&mut rng);
        Ok(Self {
            party,
            round,
            cfg,
            reference,
            update,
            keypair,
            rng,
            index: None,
            roster: BTreeMap::new(),
            committed: None,
            shares: Vec::new(),
            coeff_comms: Arc::new(Vec::new()),
            received: BTreeMap::new(),
            routed: false,
            decrypted: BTreeMap::new(),
            benign: Vec::new(),
            removed: Vec::new(),
            result: None,
        })
    }

    pub fn party(&self) -> u32 {
        self.party
    }

    pub fn index(&self) -> Option<u32> {
        self.index
    }

    pub fn public_key(&self) -> GroupElement {
        self.keypair.pk
    }

    pub fn benign(&self) -> &[u32] {
        &self.benign
    }

    pub fn removed(&self) -> &[u32] {
        &self.removed
    }

    pub fn result(&self) -> Option<&[(Scalar, Scalar)]> {
        self.result.as_deref()
    }

    pub fn coeff_comms(&self) -> &Arc<Vec<CoeffCommitments>> {
        &self.coeff_comms
    }

    fn envelope(&self, body: Message) -> Envelope {
        Envelope::new(self.round, self.index.unwrap_or(self.party), body)
    }

    fn my_index(&self) -> Result<u32> {
        self.index
            .ok_or_else(|| Error::Protocol("no index assigned yet".into()))
    }

    pub fn register(&self) -> Envelope {
        Envelope::new(
            self.round,
            self.party,
            Message::RegisterKey {
                pk: self.keypair.pk,
            },
        )
    }

    /// Processes one server envelope and returns the replies.
    ///
    /// Envelopes from other rounds or senders are ignored.
    pub fn handle(&mut self, env: &Envelope) -> Result<Vec<Envelope>> {
        if env.round != self.round || env.sender != SERVER {
            return Ok(Vec::new());
        }
        match &env.body {
            Message::Roster { entries } => {
                self.receive_roster(entries)?;
                Ok(vec![self.share_distribution()?])
            }
            Message::RoutedShares { shares } => {
                self.receive_shares(shares)?;
                self.routed = true;
                Ok(Vec::new())
            }
            // clients left out of routing are no longer part of the round
            Message::BenignList { .. } if !self.routed => Ok(Vec::new()),
            Message::BenignList { members } => {
                self.benign = members.clone();
                self.global_share()
            }
            Message::CommitmentListRequest { lists } => {
                let accusations = self.respond_to_commitments(lists)?;
                Ok(vec![self.envelope(Message::CommitmentListResponse { accusations })])
            }
            Message::Removal { client, .. } => {
                if !self.removed.contains(client) {
                    self.removed.push(*client);
                }
                Ok(Vec::new())
            }
            Message::RoundResult { sums } => {
                self.result = Some(sums.clone());
                Ok(Vec::new())
            }
            _ => Ok(Vec::new()),
        }
    }

    fn receive_roster(&mut self, entries: &[(u32, GroupElement)]) -> Result<()> {
        if self.index.is_some() {
            return Err(Error::Protocol("roster received twice".into()));
        }
        let roster: BTreeMap<u32, GroupElement> = entries.iter().copied().collect();
        let contiguous = roster.keys().copied().eq(1..=roster.len() as u32);
        if roster.len() != entries.len() || !contiguous {
            return Err(Error::Malformed("roster indices must be 1..=n".into()));
        }
        let index = roster
            .iter()
            .find(|(_, pk)| **pk == self.keypair.pk)
            .map(|(u, _)| *u)
            .ok_or_else(|| Error::Protocol("own key missing from roster".into()))?;
        self.index = Some(index);
        self.roster = roster;
        Ok(())
    }

    /// Commits, proves the filter statements, shares every parameter and encrypts the share
    /// pairs to every other roster member.
    fn share_distribution(&mut self) -> Result<Envelope> {
        let index = self.my_index()?;
        let n = self.roster.len();
        if n < self.cfg.t {
            return Err(Error::InvalidThreshold { t: self.cfg.t, n });
        }
        let committed = commit_update(&self.update, &mut self.rng);
        let ctx = FilterContext {
            round: self.round,
            client: index,
        };
        let filter = build_submission(
            &ctx,
            &committed,
            &self.reference,
            self.cfg.norm_threshold()?,
            &self.cfg.quant,
            &mut self.rng,
        )?;

        let p = committed.values.len();
        let mut shares = Vec::with_capacity(p);
        let mut coeff_comms = Vec::with_capacity(p);
        for (x, r) in committed.values.iter().zip(&committed.blindings) {
            let (s, c) = vss_gen(*x, *r, self.cfg.t, n, &mut self.rng)?;
            shares.push(s);
            coeff_comms.push(c);
        }

        let mut out = Vec::with_capacity(n - 1);
        for (&receiver, pk) in &self.roster {
            if receiver == index {
                continue;
            }
            let key = EncryptionKey::new(*pk)?;
            let batch: Vec<EncryptedSharePair> = shares
                .iter()
                .map(|per_param| {
                    let share = &per_param[receiver as usize - 1];
                    EncryptedSharePair {
                        s: key.encrypt_scalar(&share.s, &mut self.rng),
                        o: key.encrypt_scalar(&share.o, &mut self.rng),
                    }
                })
                .collect();
            out.push((receiver, Arc::new(batch)));
        }

        self.committed = Some(committed);
        self.shares = shares;
        self.coeff_comms = Arc::new(coeff_comms);
        Ok(self.envelope(Message::ShareDistribution {
            shares: out,
            coeff_comms: self.coeff_comms.clone(),
            filter,
        }))
    }

    /// The plaintext share this client dealt to `receiver` for `param`.
    pub fn outgoing_share(&self, receiver: u32, param: usize) -> Option<SharePair> {
        self.shares
            .get(param)?
            .get((receiver as usize).checked_sub(1)?)
            .copied()
    }

    /// Encryption key of a roster member.
    pub fn encryption_key(&self, receiver: u32) -> Result<EncryptionKey> {
        let pk = self
            .roster
            .get(&receiver)
            .ok_or_else(|| Error::Protocol(format!("client {receiver} not on roster")))?;
        EncryptionKey::new(*pk)
    }

    fn receive_shares(&mut self, shares: &[(u32, ShareBatch)]) -> Result<()> {
        let p = self.cfg.num_params();
        for (sender, batch) in shares {
            if batch.len() != p {
                return Err(Error::LengthMismatch {
                    expected: p,
                    actual: batch.len(),
                });
            }
            self.received.entry(*sender).or_insert_with(|| batch.clone());
        }
        Ok(())
    }

    fn decrypted_from(&mut self, sender: u32) -> Result<&[Option<SharePair>]> {
        let index = self.my_index()?;
        if !self.decrypted.contains_key(&sender) {
            let batch = self
                .received
                .get(&sender)
                .ok_or_else(|| Error::Protocol(format!("no shares received from {sender}")))?;
            let pairs = batch
                .iter()
                .map(|pair| {
                    let (_, s) = decrypt_scalar(&self.keypair, &pair.s);
                    let (_, o) = decrypt_scalar(&self.keypair, &pair.o);
                    match (s, o) {
                        (Ok(s), Ok(o)) => Some(SharePair::new(index, s, o)),
                        _ => None,
                    }
                })
                .collect();
            self.decrypted.insert(sender, pairs);
        }
        Ok(&self.decrypted[&sender])
    }

    /// Share received from `dealer` (or kept for itself) for every parameter.
    fn shares_from(&mut self, dealer: u32) -> Result<Vec<Option<SharePair>>> {
        let index = self.my_index()?;
        if dealer == index {
            return Ok(self
                .shares
                .iter()
                .map(|per_param| Some(per_param[index as usize - 1]))
                .collect());
        }
        Ok(self.decrypted_from(dealer)?.to_vec())
    }

    /// Sums the shares dealt by the benign list. Undecodable shares turn into accusations
    /// instead of a global share.
    fn global_share(&mut self) -> Result<Vec<Envelope>> {
        let p = self.cfg.num_params();
        let mut sums = vec![(Scalar::ZERO, Scalar::ZERO); p];
        let mut accusations = Vec::new();
        for dealer in self.benign.clone() {
            let shares = self.shares_from(dealer)?;
            match shares.iter().position(Option::is_none) {
                Some(param) => accusations.push(self.build_accusation(dealer, param as u32)?),
                None => {
                    for (acc, share) in sums.iter_mut().zip(shares.iter().flatten()) {
                        acc.0 += share.s;
                        acc.1 += share.o;
                    }
                }
            }
        }
        if accusations.is_empty() {
            return Ok(vec![self.envelope(Message::GlobalShare { shares: sums })]);
        }
        Ok(accusations
            .into_iter()
            .map(|a| self.envelope(Message::Accusation(a)))
            .collect())
    }

    /// Checks every received share against its dealer's commitments and accuses each
    /// dealer on its first failing parameter.
    pub fn respond_to_commitments(
        &mut self,
        lists: &[(u32, Arc<Vec<CoeffCommitments>>)],
    ) -> Result<Vec<Accusation>> {
        let index = self.my_index()?;
        let mut accusations = Vec::new();
        for (dealer, comms) in lists {
            if *dealer == index || !self.benign.contains(dealer) {
                continue;
            }
            let shares = self.shares_from(*dealer)?;
            let bad = shares.iter().zip(comms.iter()).position(|(share, c)| match share {
                Some(share) => !vss_verify_share(share, c),
                None => true,
            });
            if let Some(param) = bad {
                accusations.push(self.build_accusation(*dealer, param as u32)?);
            }
        }
        Ok(accusations)
    }

    /// Decrypts the share `accused` sent for `param` and proves every chunk decryption.
    pub fn build_accusation(&mut self, accused: u32, param: u32) -> Result<Accusation> {
        let index = self.my_index()?;
        let pair = *self
            .received
            .get(&accused)
            .and_then(|b| b.get(param as usize))
            .ok_or_else(|| Error::Protocol(format!("no share from {accused} for {param}")))?;
        let mut transcript = accusation_transcript(self.round, index, accused, param);
        let mut proofs = Vec::with_capacity(2 * CHUNKS);
        for c in pair_chunks(&pair) {
            let m = self.keypair.decrypt(c);
            proofs.push(crate::elgamal::prove_decryption(
                &self.keypair,
                &m,
                c,
                &mut transcript,
                &mut self.rng,
            ));
        }
        Ok(Accusation {
            accused,
            param,
            proofs,
        })
    }
}
