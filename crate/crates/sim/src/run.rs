//! Scenario execution over an in-process synchronous message bus.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use nov_core::elgamal::encode_scalar;
use nov_core::filter::FilterVerdict;
use nov_core::fixed_point::quantize;
use nov_core::group::Scalar;
use nov_core::protocol::{
    apply_global_update, AbortInfo, CheckLog, Client, Envelope, Message, Phase, Recipient,
    RemovalRecord, Server,
};
use nov_core::wire::Wire;
use nov_core::{Error, Result};

use crate::scenario::{AdversaryBehavior, ScenarioConfig, Stage};
use crate::synth::{flip_sign, oversize, projected_poison, reference_model, Model};

const ROUND: u64 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    /// Messages delivered.
    pub messages: u64,
    /// Encoded size of the delivered messages.
    pub bytes: u64,
    /// Messages suppressed by a dropout.
    pub dropped: u64,
    pub millis: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTable {
    pub registration: StageStats,
    pub distribution: StageStats,
    pub aggregation: StageStats,
    /// Attacker identification and every re-executed aggregation.
    pub identification: StageStats,
}

impl StageTable {
    pub fn get_mut(&mut self, stage: Stage) -> &mut StageStats {
        match stage {
            Stage::Registration => &mut self.registration,
            Stage::Distribution => &mut self.distribution,
            Stage::Aggregation => &mut self.aggregation,
            Stage::Identification => &mut self.identification,
        }
    }

    pub fn get(&self, stage: Stage) -> &StageStats {
        match stage {
            Stage::Registration => &self.registration,
            Stage::Distribution => &self.distribution,
            Stage::Aggregation => &self.aggregation,
            Stage::Identification => &self.identification,
        }
    }

    /// Everything but identification: the cost of an undisturbed round.
    pub fn base(&self) -> StageStats {
        let mut total = StageStats::default();
        for s in [Stage::Registration, Stage::Distribution, Stage::Aggregation] {
            let st = self.get(s);
            total.messages += st.messages;
            total.bytes += st.bytes;
            total.dropped += st.dropped;
            total.millis += st.millis;
        }
        total
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Completed,
    Aborted,
    /// Halted on request before the round finished.
    Stopped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub party: u32,
    pub index: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub schema: u32,
    pub status: RoundStatus,
    pub abort: Option<AbortInfo>,
    pub num_params: usize,
    pub roster: Vec<RosterEntry>,
    pub client2: Vec<u32>,
    pub client3: Vec<u32>,
    pub benign: Vec<u32>,
    pub verdicts: Vec<FilterVerdict>,
    pub rejected: BTreeMap<u32, String>,
    pub removals: Vec<RemovalRecord>,
    pub identification_passes: usize,
    /// Parameters clamped during quantization, per party.
    pub clamped: Vec<usize>,
    /// Largest number of one dealer's shares (for one parameter) the server saw in the clear.
    pub max_revealed_shares: usize,
    pub checks: CheckLog,
    /// Average of the benign updates as reconstructed.
    pub aggregate: Option<Model>,
    /// Reference model plus the aggregate.
    pub model: Option<Model>,
    /// Every client holds the same round result as the server.
    pub clients_agree: bool,
    pub stages: StageTable,
}

impl RoundReport {
    /// Index assigned to `party`, if it registered.
    pub fn index_of(&self, party: u32) -> Option<u32> {
        self.roster.iter().find(|e| e.party == party).map(|e| e.index)
    }

    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for s in Stage::ALL {
            r.stages.get_mut(s).millis = 0.0;
        }
        r
    }
}

/// Applies the update-level behaviors of the configured adversaries.
pub fn prepare_updates(cfg: &ScenarioConfig, updates: &[Model], reference: &Model) -> Vec<Model> {
    updates
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let party = i as u32 + 1;
            let behavior = cfg.behaviors_of(party).find(|b| b.alters_update());
            match behavior {
                Some(AdversaryBehavior::FlipSignUpdate) => flip_sign(u),
                Some(AdversaryBehavior::OversizedUpdate) => oversize(u, cfg.t_m),
                Some(AdversaryBehavior::ProjectedPoison) => projected_poison(u, reference, cfg.t_m),
                _ => u.clone(),
            }
        })
        .collect()
}

fn client_seed(seed: u64, party: u32) -> [u8; 32] {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1000 + party as u64);
    let mut out = [0u8; 32];
    rng.fill_bytes(&mut out);
    out
}

struct Participant {
    client: Client,
    behaviors: Vec<AdversaryBehavior>,
    rng: ChaCha20Rng,
    tampered_global: bool,
}

impl Participant {
    fn drops(&self, stage: Stage) -> bool {
        self.behaviors
            .iter()
            .any(|b| *b == AdversaryBehavior::Dropout { stage })
    }

    /// Rewrites an outgoing message according to the adversary behaviors.
    fn tamper(&mut self, env: &mut Envelope, index_of: &BTreeMap<u32, u32>) -> Result<()> {
        for b in self.behaviors.clone() {
            match (b, &mut env.body) {
                (
                    AdversaryBehavior::WrongShareToVictim { victim, chunk },
                    Message::ShareDistribution { shares, .. },
                ) => {
                    let Some(&victim) = index_of.get(&victim) else {
                        continue;
                    };
                    let share = self
                        .client
                        .outgoing_share(victim, 0)
                        .ok_or_else(|| Error::Protocol("victim share missing".into()))?;
                    let key = self.client.encryption_key(victim)?;
                    let value = nov_core::elgamal::scalar_chunks(&share.s)[chunk].wrapping_add(1);
                    let wrong = encode_scalar(&Scalar::from(value as u64)).chunks[0];
                    for (r, batch) in shares.iter_mut() {
                        if *r == victim {
                            Arc::make_mut(batch)[0].s[chunk] = key.encrypt(&wrong, &mut self.rng);
                        }
                    }
                }
                (
                    AdversaryBehavior::WrongGlobalShare | AdversaryBehavior::FalseAccusation { .. },
                    Message::GlobalShare { shares },
                ) if !self.tampered_global => {
                    shares[0].0 += Scalar::ONE;
                    self.tampered_global = true;
                }
                (
                    AdversaryBehavior::FalseAccusation { target },
                    Message::CommitmentListResponse { accusations },
                ) => {
                    if let Some(&target) = index_of.get(&target) {
                        *accusations = vec![self.client.build_accusation(target, 0)?];
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Stage of the messages the server emits when closing `phase`.
fn server_stage(phase: Phase, passes_after: usize) -> Stage {
    if passes_after > 0 {
        return Stage::Identification;
    }
    match phase {
        Phase::Roster => Stage::Registration,
        Phase::Distribution => Stage::Distribution,
        _ => Stage::Aggregation,
    }
}

/// Stage of the client replies to what the server just emitted.
fn reply_stage(phase_after: Phase, passes_after: usize) -> Stage {
    if passes_after > 0 {
        return Stage::Identification;
    }
    match phase_after {
        Phase::Distribution => Stage::Distribution,
        _ => Stage::Aggregation,
    }
}

fn record(stats: &mut StageStats, env: &Envelope) {
    stats.messages += 1;
    stats.bytes += env.encoded_len() as u64;
}

/// Runs one round: roster, distribution, aggregation and, when triggered, attacker
/// identification with re-execution.
pub fn run_scenario(cfg: &ScenarioConfig, updates: &[Model]) -> Result<RoundReport> {
    run_scenario_until(cfg, updates, Stage::Identification)
}

/// Like [`run_scenario`], but halts once the server has closed the phases of `last`;
/// nothing belonging to a later stage is delivered.
pub fn run_scenario_until(cfg: &ScenarioConfig, updates: &[Model], last: Stage) -> Result<RoundReport> {
    cfg.validate()?;
    if updates.len() != cfg.n {
        return Err(Error::InvalidConfig(format!(
            "{} updates for {} clients",
            updates.len(),
            cfg.n
        )));
    }
    for u in updates {
        if u.iter().map(Vec::len).collect::<Vec<_>>() != cfg.shape {
            return Err(Error::InvalidConfig("update shape mismatch".into()));
        }
    }
    let round_cfg = cfg.round_config();
    let reference = reference_model(cfg.seed, &cfg.shape);
    let q_ref = quantize(&reference, &cfg.quant).update;
    let submitted = prepare_updates(cfg, updates, &reference);

    let mut clamped = Vec::with_capacity(cfg.n);
    let mut parts = Vec::with_capacity(cfg.n);
    for (i, u) in submitted.iter().enumerate() {
        let party = i as u32 + 1;
        let q = quantize(u, &cfg.quant);
        clamped.push(q.clamped);
        let seed = client_seed(cfg.seed, party);
        parts.push(Participant {
            client: Client::new(party, ROUND, round_cfg.clone(), q_ref.clone(), q.update, seed)?,
            behaviors: cfg.behaviors_of(party).copied().collect(),
            rng: ChaCha20Rng::from_seed(seed),
            tampered_global: false,
        });
    }

    let mut server = Server::new(round_cfg, ROUND, q_ref)?;
    let mut stages = StageTable::default();

    let started = Instant::now();
    for p in &parts {
        let env = p.client.register();
        let st = stages.get_mut(Stage::Registration);
        if p.drops(Stage::Registration) {
            st.dropped += 1;
        } else {
            record(st, &env);
            server.receive(env);
        }
    }
    stages.registration.millis += started.elapsed().as_secs_f64() * 1e3;

    let mut index_of: BTreeMap<u32, u32> = BTreeMap::new();
    let mut removed: BTreeSet<u32> = BTreeSet::new();
    let mut stopped = false;
    // each pass removes someone, so the loop is bounded by the roster size
    for _ in 0..4 * cfg.n + 8 {
        if matches!(server.phase(), Phase::Done | Phase::Aborted) {
            break;
        }
        let closing = server.phase();
        let t0 = Instant::now();
        let out = server.advance();
        let out_stage = server_stage(closing, server.identification_passes());
        stages.get_mut(out_stage).millis += t0.elapsed().as_secs_f64() * 1e3;
        if closing == Phase::Roster {
            for (&u, pk) in server.roster() {
                if let Some(p) = parts.iter().find(|p| p.client.public_key() == *pk) {
                    index_of.insert(p.client.party(), u);
                }
            }
        }
        let in_stage = reply_stage(server.phase(), server.identification_passes());
        if in_stage > last && !matches!(server.phase(), Phase::Done | Phase::Aborted) {
            stopped = true;
            break;
        }

        let mut replies = Vec::new();
        for o in &out {
            if let Message::Removal { client, .. } = o.env.body {
                removed.insert(client);
            }
            for p in parts.iter_mut() {
                let Some(&idx) = index_of.get(&p.client.party()) else {
                    continue;
                };
                let addressed = match o.to {
                    Recipient::All => !removed.contains(&idx),
                    Recipient::Client(u) => u == idx,
                };
                if !addressed {
                    continue;
                }
                record(stages.get_mut(out_stage), &o.env);
                let t1 = Instant::now();
                let mut produced = p.client.handle(&o.env)?;
                for env in produced.iter_mut() {
                    p.tamper(env, &index_of)?;
                }
                stages.get_mut(in_stage).millis += t1.elapsed().as_secs_f64() * 1e3;
                for env in produced {
                    if p.drops(in_stage) {
                        stages.get_mut(in_stage).dropped += 1;
                    } else {
                        replies.push(env);
                    }
                }
            }
        }
        let t2 = Instant::now();
        for env in replies {
            record(stages.get_mut(in_stage), &env);
            server.receive(env);
        }
        stages.get_mut(in_stage).millis += t2.elapsed().as_secs_f64() * 1e3;
    }

    let completed = server.phase() == Phase::Done;
    let (aggregate, model) = match server.result() {
        Some(sums) => {
            let zero: Model = cfg.shape.iter().map(|&l| vec![0.0; l]).collect();
            let members = server.benign().len();
            let avg = apply_global_update(&zero, sums, members, &cfg.round_config())?;
            let model = apply_global_update(&reference, sums, members, &cfg.round_config())?;
            (Some(avg), Some(model))
        }
        None => (None, None),
    };
    let clients_agree = completed
        && parts
            .iter()
            .filter(|p| {
                index_of
                    .get(&p.client.party())
                    .is_some_and(|u| server.client2().contains(u))
            })
            .all(|p| p.client.result() == server.result());

    Ok(RoundReport {
        schema: crate::scenario::SCHEMA_VERSION,
        status: if completed {
            RoundStatus::Completed
        } else if stopped {
            RoundStatus::Stopped
        } else {
            RoundStatus::Aborted
        },
        abort: server.abort_info().cloned(),
        num_params: cfg.shape.iter().sum(),
        roster: index_of
            .iter()
            .map(|(&party, &index)| RosterEntry { party, index })
            .collect(),
        client2: server.client2().iter().copied().collect(),
        client3: server.client3().iter().copied().collect(),
        benign: server.benign().to_vec(),
        verdicts: server.verdicts().to_vec(),
        rejected: server.rejected().clone(),
        removals: server.removals().to_vec(),
        identification_passes: server.identification_passes(),
        clamped,
        max_revealed_shares: server.max_revealed_shares(),
        checks: *server.checks(),
        aggregate,
        model,
        clients_agree,
        stages,
    })
}
