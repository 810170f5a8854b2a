//! Protocol messages and their wire format.
//!
//! Every message is framed as
//!
//! ```text
//! u32  length of everything after this field
//! u8   type tag
//! u64  round id
//! u32  sender index (0 = server)
//! ...  payload
//! ```
//!
//! with all integers little-endian and payload fields in the canonical encodings of
//! [`crate::wire`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::elgamal::{Ciphertext, DecryptionProof, CHUNKS};
use crate::error::{Error, Result};
use crate::filter::FilterSubmission;
use crate::group::{GroupElement, Scalar};
use crate::vss::CoeffCommitments;
use crate::wire::{wire_struct, Reader, Wire};

/// Sender index used by the server.
pub const SERVER: u32 = 0;

/// Frame bytes preceding the payload: length, tag, round, sender.
pub const HEADER_LEN: usize = 4 + 1 + 8 + 4;

/// One share pair `(s, o)` as 32 chunk ciphertexts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncryptedSharePair {
    pub s: [Ciphertext; CHUNKS],
    pub o: [Ciphertext; CHUNKS],
}

wire_struct!(EncryptedSharePair { s, o });

/// One dealer's encrypted shares for one receiver, one entry per parameter.
pub type ShareBatch = Arc<Vec<EncryptedSharePair>>;

/// Claim that `accused` sent the accuser an invalid share for parameter `param`.
///
/// `proofs` holds 32 decryption proofs, the `s` chunks then the `o` chunks, all on one
/// transcript.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Accusation {
    pub accused: u32,
    pub param: u32,
    pub proofs: Vec<DecryptionProof>,
}

wire_struct!(Accusation {
    accused,
    param,
    proofs
});

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    /// A verified decryption revealed a share inconsistent with its dealer's commitments.
    InvalidShare,
    /// The accused share turned out to be valid.
    FalseAccusation,
    /// The accuser's decryption proof did not verify.
    InvalidDecryptionProof,
    /// Failed the global-share check and produced no accusation.
    NoJustification,
}

impl RemovalReason {
    fn code(self) -> u8 {
        match self {
            RemovalReason::InvalidShare => 1,
            RemovalReason::FalseAccusation => 2,
            RemovalReason::InvalidDecryptionProof => 3,
            RemovalReason::NoJustification => 4,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            1 => RemovalReason::InvalidShare,
            2 => RemovalReason::FalseAccusation,
            3 => RemovalReason::InvalidDecryptionProof,
            4 => RemovalReason::NoJustification,
            _ => return Err(Error::Malformed(format!("removal reason {code}"))),
        })
    }
}

impl Wire for RemovalReason {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(self.code());
    }
    fn encoded_len(&self) -> usize {
        1
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        RemovalReason::from_code(u8::decode(r)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    RegisterKey {
        pk: GroupElement,
    },
    Roster {
        entries: Vec<(u32, GroupElement)>,
    },
    ShareDistribution {
        /// `(receiver, per-parameter encrypted shares)`
        shares: Vec<(u32, ShareBatch)>,
        /// Per-parameter coefficient commitments.
        coeff_comms: Arc<Vec<CoeffCommitments>>,
        filter: FilterSubmission,
    },
    RoutedShares {
        /// `(sender, per-parameter encrypted shares)`
        shares: Vec<(u32, ShareBatch)>,
    },
    BenignList {
        members: Vec<u32>,
    },
    GlobalShare {
        /// Per-parameter `(S_u, O_u)`.
        shares: Vec<(Scalar, Scalar)>,
    },
    CommitmentListRequest {
        /// `(dealer, per-parameter coefficient commitments)` for every benign dealer.
        lists: Vec<(u32, Arc<Vec<CoeffCommitments>>)>,
    },
    CommitmentListResponse {
        accusations: Vec<Accusation>,
    },
    Accusation(Accusation),
    Removal {
        client: u32,
        reason: RemovalReason,
    },
    RoundResult {
        /// Per-parameter `(X, R)`.
        sums: Vec<(Scalar, Scalar)>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    RegisterKey,
    Roster,
    ShareDistribution,
    RoutedShares,
    BenignList,
    GlobalShare,
    CommitmentListRequest,
    CommitmentListResponse,
    Accusation,
    Removal,
    RoundResult,
}

impl MessageKind {
    pub fn tag(self) -> u8 {
        match self {
            MessageKind::RegisterKey => 1,
            MessageKind::Roster => 2,
            MessageKind::ShareDistribution => 3,
            MessageKind::RoutedShares => 4,
            MessageKind::BenignList => 5,
            MessageKind::GlobalShare => 6,
            MessageKind::CommitmentListRequest => 7,
            MessageKind::CommitmentListResponse => 8,
            MessageKind::Accusation => 9,
            MessageKind::Removal => 10,
            MessageKind::RoundResult => 11,
        }
    }
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::RegisterKey { .. } => MessageKind::RegisterKey,
            Message::Roster { .. } => MessageKind::Roster,
            Message::ShareDistribution { .. } => MessageKind::ShareDistribution,
            Message::RoutedShares { .. } => MessageKind::RoutedShares,
            Message::BenignList { .. } => MessageKind::BenignList,
            Message::GlobalShare { .. } => MessageKind::GlobalShare,
            Message::CommitmentListRequest { .. } => MessageKind::CommitmentListRequest,
            Message::CommitmentListResponse { .. } => MessageKind::CommitmentListResponse,
            Message::Accusation(_) => MessageKind::Accusation,
            Message::Removal { .. } => MessageKind::Removal,
            Message::RoundResult { .. } => MessageKind::RoundResult,
        }
    }

    fn encode_payload(&self, out: &mut Vec<u8>) {
        match self {
            Message::RegisterKey { pk } => pk.encode(out),
            Message::Roster { entries } => entries.encode(out),
            Message::ShareDistribution {
                shares,
                coeff_comms,
                filter,
            } => {
                shares.encode(out);
                coeff_comms.encode(out);
                filter.encode(out);
            }
            Message::RoutedShares { shares } => shares.encode(out),
            Message::BenignList { members } => members.encode(out),
            Message::GlobalShare { shares } => shares.encode(out),
            Message::CommitmentListRequest { lists } => lists.encode(out),
            Message::CommitmentListResponse { accusations } => accusations.encode(out),
            Message::Accusation(a) => a.encode(out),
            Message::Removal { client, reason } => {
                client.encode(out);
                reason.encode(out);
            }
            Message::RoundResult { sums } => sums.encode(out),
        }
    }

    fn payload_len(&self) -> usize {
        match self {
            Message::RegisterKey { pk } => pk.encoded_len(),
            Message::Roster { entries } => entries.encoded_len(),
            Message::ShareDistribution {
                shares,
                coeff_comms,
                filter,
            } => shares.encoded_len() + coeff_comms.encoded_len() + filter.encoded_len(),
            Message::RoutedShares { shares } => shares.encoded_len(),
            Message::BenignList { members } => members.encoded_len(),
            Message::GlobalShare { shares } => shares.encoded_len(),
            Message::CommitmentListRequest { lists } => lists.encoded_len(),
            Message::CommitmentListResponse { accusations } => accusations.encoded_len(),
            Message::Accusation(a) => a.encoded_len(),
            Message::Removal { .. } => 5,
            Message::RoundResult { sums } => sums.encoded_len(),
        }
    }

    fn decode_payload(tag: u8, r: &mut Reader<'_>) -> Result<Self> {
        Ok(match tag {
            1 => Message::RegisterKey {
                pk: Wire::decode(r)?,
            },
            2 => Message::Roster {
                entries: Wire::decode(r)?,
            },
            3 => Message::ShareDistribution {
                shares: Wire::decode(r)?,
                coeff_comms: Wire::decode(r)?,
                filter: Wire::decode(r)?,
            },
            4 => Message::RoutedShares {
                shares: Wire::decode(r)?,
            },
            5 => Message::BenignList {
                members: Wire::decode(r)?,
            },
            6 => Message::GlobalShare {
                shares: Wire::decode(r)?,
            },
            7 => Message::CommitmentListRequest {
                lists: Wire::decode(r)?,
            },
            8 => Message::CommitmentListResponse {
                accusations: Wire::decode(r)?,
            },
            9 => Message::Accusation(Wire::decode(r)?),
            10 => Message::Removal {
                client: Wire::decode(r)?,
                reason: Wire::decode(r)?,
            },
            11 => Message::RoundResult {
                sums: Wire::decode(r)?,
            },
            _ => return Err(Error::Malformed(format!("unknown message tag {tag}"))),
        })
    }
}

/// A framed message: round id, sender index and body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub round: u64,
    pub sender: u32,
    pub body: Message,
}

impl Envelope {
    pub fn new(round: u64, sender: u32, body: Message) -> Self {
        Self {
            round,
            sender,
            body,
        }
    }

    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }
}

impl Wire for Envelope {
    fn encode(&self, out: &mut Vec<u8>) {
        let rest = (self.encoded_len() - 4) as u32;
        rest.encode(out);
        out.push(self.body.kind().tag());
        self.round.encode(out);
        self.sender.encode(out);
        self.body.encode_payload(out);
    }

    fn encoded_len(&self) -> usize {
        HEADER_LEN + self.body.payload_len()
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let rest = u32::decode(r)? as usize;
        let mut frame = Reader::new(r.take(rest)?);
        let tag = u8::decode(&mut frame)?;
        let round = u64::decode(&mut frame)?;
        let sender = u32::decode(&mut frame)?;
        let body = Message::decode_payload(tag, &mut frame)?;
        frame.finish()?;
        Ok(Envelope {
            round,
            sender,
            body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{commit, random_scalar};
    use crate::wire::{from_bytes, to_bytes};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn header_layout() {
        let env = Envelope::new(
            0x0102030405060708,
            7,
            Message::Removal {
                client: 3,
                reason: RemovalReason::FalseAccusation,
            },
        );
        let bytes = to_bytes(&env);
        assert_eq!(bytes.len(), HEADER_LEN + 5);
        assert_eq!(&bytes[..4], &((bytes.len() - 4) as u32).to_le_bytes());
        assert_eq!(bytes[4], 10);
        assert_eq!(&bytes[5..13], &0x0102030405060708u64.to_le_bytes());
        assert_eq!(&bytes[13..17], &7u32.to_le_bytes());
        assert_eq!(&bytes[17..], &[3, 0, 0, 0, 2]);
        assert_eq!(from_bytes::<Envelope>(&bytes).unwrap(), env);
    }

    #[test]
    fn rejects_unknown_tag_and_bad_length() {
        let env = Envelope::new(1, 2, Message::BenignList { members: vec![1, 2] });
        let mut bytes = to_bytes(&env);
        bytes[4] = 99;
        assert!(from_bytes::<Envelope>(&bytes).is_err());
        let mut bytes = to_bytes(&env);
        bytes[0] += 1;
        assert!(from_bytes::<Envelope>(&bytes).is_err());
    }

    #[test]
    fn commitment_request_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let list = Arc::new(vec![CoeffCommitments(vec![
            commit(&random_scalar(&mut rng), &random_scalar(&mut rng)),
            commit(&random_scalar(&mut rng), &random_scalar(&mut rng)),
        ])]);
        let env = Envelope::new(
            5,
            SERVER,
            Message::CommitmentListRequest {
                lists: vec![(1, list.clone()), (4, list)],
            },
        );
        let bytes = to_bytes(&env);
        assert_eq!(bytes.len(), env.encoded_len());
        assert_eq!(from_bytes::<Envelope>(&bytes).unwrap(), env);
    }
}
