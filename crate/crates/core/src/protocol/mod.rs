//! The round state machines: roster, share distribution, aggregation and reconstruction,
//! and attacker identification with re-execution.

mod client;
mod config;
pub mod messages;
mod server;

pub use client::Client;
pub use config::RoundConfig;
pub use messages::{Accusation, EncryptedSharePair, Envelope, Message, MessageKind, RemovalReason};
pub use server::{AbortInfo, CheckCount, CheckLog, Outgoing, Phase, Recipient, RemovalRecord, Server};

use crate::error::{Error, Result};
use crate::fixed_point::{ceil_log2, unembed_bounded};
use crate::group::Scalar;

/// Adds the average of the reconstructed updates to `previous`.
///
/// `sums` holds the per-parameter `(X, R)` of the round and `members` the size of the benign
/// list whose updates were summed.
pub fn apply_global_update(
    previous: &[Vec<f64>],
    sums: &[(Scalar, Scalar)],
    members: usize,
    cfg: &RoundConfig,
) -> Result<Vec<Vec<f64>>> {
    if members == 0 {
        return Err(Error::EmptyBenignSet);
    }
    let shape: Vec<usize> = previous.iter().map(Vec::len).collect();
    let p: usize = shape.iter().sum();
    if sums.len() != p {
        return Err(Error::LengthMismatch {
            expected: p,
            actual: sums.len(),
        });
    }
    let bits = cfg.quant.value_bits + ceil_log2(members) + 1;
    let denom = cfg.quant.scale() * members as f64;
    let mut it = sums.iter();
    previous
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|m| {
                    let (x, _) = it.next().expect("length checked");
                    Ok(m + unembed_bounded(x, bits)? as f64 / denom)
                })
                .collect()
        })
        .collect()
}
