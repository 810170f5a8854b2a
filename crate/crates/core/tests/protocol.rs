use std::collections::BTreeMap;

use nov_core::fixed_point::{embed_signed, quantize, QuantConfig, QuantizedUpdate};
use nov_core::group::{commit, Scalar};
use nov_core::protocol::{
    apply_global_update, Client, Envelope, Message, Phase, Recipient, RemovalReason, RoundConfig,
    Server,
};
use nov_core::wire::{from_bytes, to_bytes, Wire};

fn config(n: usize, t: usize, shape: Vec<usize>) -> RoundConfig {
    RoundConfig {
        n,
        t,
        t_m: 1.0,
        t_s: 1.0,
        quant: QuantConfig::default(),
        shape,
    }
}

fn reference(shape: &[usize]) -> QuantizedUpdate {
    QuantizedUpdate {
        layers: shape
            .iter()
            .map(|&len| (0..len).map(|i| 1000 + i as i64).collect())
            .collect(),
    }
}

/// Small positive update for client `c`.
fn update(shape: &[usize], c: u32) -> QuantizedUpdate {
    QuantizedUpdate {
        layers: shape
            .iter()
            .map(|&len| (0..len).map(|i| 100 * c as i64 + i as i64 + 1).collect())
            .collect(),
    }
}

fn seed(c: u32) -> [u8; 32] {
    let mut s = [7u8; 32];
    s[..4].copy_from_slice(&c.to_le_bytes());
    s
}

/// Runs a full round. `tamper` sees each client reply and may rewrite it; returning false
/// drops it.
fn run(
    cfg: &RoundConfig,
    updates: Vec<QuantizedUpdate>,
    tamper: &mut impl FnMut(&mut Client, &mut Envelope) -> bool,
) -> (Server, Vec<Client>) {
    let reference = reference(&cfg.shape);
    let mut server = Server::new(cfg.clone(), 1, reference.clone()).unwrap();
    let mut clients: Vec<Client> = updates
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            let party = i as u32 + 1;
            Client::new(party, 1, cfg.clone(), reference.clone(), u, seed(party)).unwrap()
        })
        .collect();
    for c in &clients {
        let env = c.register();
        // every message crosses the wire encoding
        server.receive(from_bytes(&to_bytes(&env)).unwrap());
    }
    let mut steps = 0;
    while !matches!(server.phase(), Phase::Done | Phase::Aborted) {
        steps += 1;
        assert!(steps < 20, "round did not terminate");
        let out = server.advance();
        let mut replies = Vec::new();
        for o in &out {
            let env: Envelope = from_bytes(&to_bytes(&o.env)).unwrap();
            for c in clients.iter_mut() {
                let Some(idx) = c.index().or(matches!(env.body, Message::Roster { .. }).then_some(0)) else {
                    continue;
                };
                let addressed = match o.to {
                    Recipient::All => true,
                    Recipient::Client(u) => u == idx,
                };
                if addressed {
                    for mut r in c.handle(&env).unwrap() {
                        if tamper(c, &mut r) {
                            replies.push(r);
                        }
                    }
                }
            }
        }
        for r in replies {
            server.receive(from_bytes(&to_bytes(&r)).unwrap());
        }
    }
    (server, clients)
}

fn honest(_: &mut Client, _: &mut Envelope) -> bool {
    true
}

fn assert_exact_sum(server: &Server, updates: &[QuantizedUpdate]) {
    let sums = server.result().expect("round result");
    let p = updates[0].num_params();
    for i in 0..p {
        let expected: Scalar = server
            .benign()
            .iter()
            .map(|&u| embed_signed(updates[u as usize - 1].flat().nth(i).unwrap() as i128))
            .sum();
        assert_eq!(sums[i].0, expected, "parameter {i}");
    }
}

#[test]
fn honest_round_reconstructs_exact_sum() {
    let cfg = config(5, 3, vec![4, 3]);
    let updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    let (server, clients) = run(&cfg, updates.clone(), &mut honest);
    assert_eq!(server.phase(), Phase::Done);
    assert_eq!(server.benign(), &[1, 2, 3, 4, 5]);
    assert!(server.removals().is_empty());
    assert_eq!(server.checks().sum.failed, 0);
    assert_eq!(server.checks().sum.passed, 7);
    assert_exact_sum(&server, &updates);
    for c in &clients {
        assert_eq!(c.result(), server.result());
    }
    // the blinding sums open the product of parameter commitments
    for (i, (x, r)) in server.result().unwrap().iter().enumerate() {
        let product = clients
            .iter()
            .map(|c| c.coeff_comms()[i].secret_commitment())
            .fold(commit(&Scalar::ZERO, &Scalar::ZERO), |a, b| a + b);
        assert_eq!(product, commit(x, r));
    }
}

#[test]
fn indices_follow_arrival_and_duplicates_are_ignored() {
    let cfg = config(3, 2, vec![2]);
    let reference = reference(&cfg.shape);
    let mut server = Server::new(cfg.clone(), 1, reference.clone()).unwrap();
    let clients: Vec<Client> = [9u32, 4, 6]
        .iter()
        .map(|&p| Client::new(p, 1, cfg.clone(), reference.clone(), update(&cfg.shape, 1), seed(p)).unwrap())
        .collect();
    for c in &clients {
        assert!(server.receive(c.register()));
    }
    assert!(!server.receive(clients[0].register()));
    let mut stale = clients[1].register();
    stale.round = 0;
    assert!(!server.receive(stale));
    let out = server.advance();
    let Message::Roster { entries } = &out[0].env.body else {
        panic!("expected roster");
    };
    let expected: Vec<_> = clients
        .iter()
        .enumerate()
        .map(|(i, c)| (i as u32 + 1, c.public_key()))
        .collect();
    assert_eq!(entries, &expected);
}

#[test]
fn too_few_registrations_abort() {
    let cfg = config(4, 3, vec![2]);
    let mut server = Server::new(cfg.clone(), 1, reference(&cfg.shape)).unwrap();
    let c = Client::new(1, 1, cfg.clone(), reference(&cfg.shape), update(&cfg.shape, 1), seed(1)).unwrap();
    server.receive(c.register());
    server.advance();
    assert_eq!(server.phase(), Phase::Aborted);
}

#[test]
fn exactly_t_registrations_suffice() {
    let cfg = config(3, 3, vec![2]);
    let updates: Vec<_> = (1..=3).map(|c| update(&cfg.shape, c)).collect();
    let (server, _) = run(&cfg, updates.clone(), &mut honest);
    assert_eq!(server.roster().len(), 3);
    assert_eq!(server.phase(), Phase::Done);
    assert_exact_sum(&server, &updates);
}

#[test]
fn routing_delivers_every_ciphertext_once() {
    let cfg = config(4, 2, vec![3]);
    let updates: Vec<_> = (1..=4).map(|c| update(&cfg.shape, c)).collect();
    let mut sent: BTreeMap<(u32, u32), Vec<u8>> = BTreeMap::new();
    let mut record = |c: &mut Client, env: &mut Envelope| {
        if let Message::ShareDistribution { shares, .. } = &env.body {
            for (r, b) in shares {
                sent.insert((c.index().unwrap(), *r), to_bytes(&**b));
            }
        }
        true
    };
    let (server, _) = run(&cfg, updates, &mut record);
    drop(record);
    assert_eq!(sent.len(), 12);
    for ((s, r), bytes) in &sent {
        assert_eq!(&to_bytes(&**server.ciphertexts(*s, *r).unwrap()), bytes);
    }
}

#[test]
fn failed_norm_proof_excludes_client() {
    let mut cfg = config(5, 2, vec![3]);
    cfg.t_s = 0.6;
    let mut updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    // norm well above t_m = 1.0
    updates[1] = QuantizedUpdate {
        layers: vec![vec![200_000, 1, 1]],
    };
    let (server, _) = run(&cfg, updates.clone(), &mut honest);
    assert!(!server.benign().contains(&2));
    assert_eq!(server.benign(), &[1, 3, 4]);
    assert!(!server.verdicts()[1].norm_ok);
    assert_exact_sum(&server, &updates);
}

#[test]
fn distribution_dropout_shrinks_client2() {
    let cfg = config(5, 3, vec![2]);
    let updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    let mut drop4 = |c: &mut Client, env: &mut Envelope| {
        !(c.index() == Some(4) && matches!(env.body, Message::ShareDistribution { .. }))
    };
    let (server, _) = run(&cfg, updates.clone(), &mut drop4);
    assert_eq!(server.phase(), Phase::Done);
    assert!(!server.client2().contains(&4));
    assert!(server.client2().is_subset(&server.client1()));
    assert_eq!(server.benign(), &[1, 2, 3, 5]);
    assert_exact_sum(&server, &updates);
}

#[test]
fn inconsistent_filter_commitments_are_rejected() {
    let cfg = config(4, 2, vec![2]);
    let updates: Vec<_> = (1..=4).map(|c| update(&cfg.shape, c)).collect();
    let mut swap = |c: &mut Client, env: &mut Envelope| {
        if c.index() == Some(2) {
            if let Message::ShareDistribution { filter, .. } = &mut env.body {
                filter.param_comms.swap(0, 1);
            }
        }
        true
    };
    let (server, _) = run(&cfg, updates.clone(), &mut swap);
    assert!(server.rejected().contains_key(&2));
    assert!(!server.benign().contains(&2));
    assert_eq!(server.phase(), Phase::Done);
    assert_exact_sum(&server, &updates);
}

fn perturb_global_share(env: &mut Envelope) {
    if let Message::GlobalShare { shares } = &mut env.body {
        shares[0].0 += Scalar::ONE;
    }
}

#[test]
fn wrong_global_share_is_removed_without_justification() {
    let cfg = config(5, 3, vec![2, 2]);
    let updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    let mut attack = |c: &mut Client, env: &mut Envelope| {
        if c.index() == Some(2) && c.removed().is_empty() {
            perturb_global_share(env);
        }
        true
    };
    let (server, _) = run(&cfg, updates.clone(), &mut attack);
    assert_eq!(server.phase(), Phase::Done);
    assert_eq!(server.removals().len(), 1);
    assert_eq!(server.removals()[0].client, 2);
    assert_eq!(server.removals()[0].reason, RemovalReason::NoJustification);
    assert!(server.checks().sum.failed > 0);
    assert_eq!(server.max_revealed_shares(), 0);
    assert_exact_sum(&server, &updates);
}

#[test]
fn wrong_global_share_outside_the_chosen_subset_is_harmless() {
    let cfg = config(5, 3, vec![2]);
    let updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    let mut attack = |c: &mut Client, env: &mut Envelope| {
        if c.index() == Some(5) {
            perturb_global_share(env);
        }
        true
    };
    let (server, _) = run(&cfg, updates.clone(), &mut attack);
    assert_eq!(server.phase(), Phase::Done);
    assert!(server.removals().is_empty());
    assert_exact_sum(&server, &updates);
}

fn corrupt_share_chunk(c: &mut Client, env: &mut Envelope, victim: u32, chunk: usize, delta: u16) {
    let Message::ShareDistribution { shares, .. } = &mut env.body else {
        return;
    };
    let share = c.outgoing_share(victim, 0).unwrap();
    let key = c.encryption_key(victim).unwrap();
    let mut bytes = share.s.to_bytes();
    let value = u16::from_le_bytes([bytes[2 * chunk], bytes[2 * chunk + 1]]).wrapping_add(delta);
    bytes[2 * chunk..2 * chunk + 2].copy_from_slice(&value.to_le_bytes());
    let wrong = nov_core::elgamal::encode_scalar(&Scalar::from_bytes_mod_order(bytes)).chunks[chunk];
    let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(3);
    for (r, batch) in shares.iter_mut() {
        if *r == victim {
            std::sync::Arc::make_mut(batch)[0].s[chunk] = key.encrypt(&wrong, &mut rng);
        }
    }
}

#[test]
fn wrong_share_to_victim_removes_dealer() {
    let cfg = config(5, 3, vec![3]);
    let updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    let mut attack = |c: &mut Client, env: &mut Envelope| {
        if c.index() == Some(3) {
            corrupt_share_chunk(c, env, 1, 0, 1);
        }
        true
    };
    let (server, clients) = run(&cfg, updates.clone(), &mut attack);
    assert_eq!(server.phase(), Phase::Done);
    assert_eq!(server.removals().len(), 1);
    assert_eq!(server.removals()[0].client, 3);
    assert_eq!(server.removals()[0].reason, RemovalReason::InvalidShare);
    assert_eq!(server.benign(), &[1, 2, 4, 5]);
    assert!(server.max_revealed_shares() < cfg.t);
    assert_eq!(server.checks().share.failed, 1);
    assert_eq!(server.checks().decryption_proof.failed, 0);
    assert_exact_sum(&server, &updates);
    assert_eq!(clients[0].removed(), &[3]);
}

#[test]
fn false_accusation_removes_accuser() {
    let cfg = config(5, 3, vec![2]);
    let updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    let mut attack = |c: &mut Client, env: &mut Envelope| {
        if c.index() == Some(1) {
            match &mut env.body {
                Message::GlobalShare { .. } => perturb_global_share(env),
                Message::CommitmentListResponse { accusations } => {
                    *accusations = vec![c.build_accusation(4, 1).unwrap()];
                }
                _ => {}
            }
        }
        true
    };
    let (server, _) = run(&cfg, updates.clone(), &mut attack);
    assert_eq!(server.phase(), Phase::Done);
    assert_eq!(server.removals().len(), 1);
    assert_eq!(server.removals()[0].client, 1);
    assert_eq!(server.removals()[0].reason, RemovalReason::FalseAccusation);
    assert_eq!(server.checks().share.passed, 1);
    assert_exact_sum(&server, &updates);
}

#[test]
fn forged_decryption_proof_removes_accuser() {
    let cfg = config(5, 3, vec![2]);
    let updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    let mut attack = |c: &mut Client, env: &mut Envelope| {
        if c.index() == Some(2) {
            match &mut env.body {
                Message::GlobalShare { .. } => perturb_global_share(env),
                Message::CommitmentListResponse { accusations } => {
                    let mut a = c.build_accusation(5, 0).unwrap();
                    a.proofs[3].z += Scalar::ONE;
                    *accusations = vec![a];
                }
                _ => {}
            }
        }
        true
    };
    let (server, _) = run(&cfg, updates.clone(), &mut attack);
    assert_eq!(server.removals()[0].client, 2);
    assert_eq!(server.removals()[0].reason, RemovalReason::InvalidDecryptionProof);
    assert_eq!(server.phase(), Phase::Done);
    assert_exact_sum(&server, &updates);
}

#[test]
fn undecodable_share_triggers_accusation_in_aggregation() {
    let cfg = config(5, 3, vec![2]);
    let updates: Vec<_> = (1..=5).map(|c| update(&cfg.shape, c)).collect();
    let mut attack = |c: &mut Client, env: &mut Envelope| {
        if c.index() == Some(4) {
            if let Message::ShareDistribution { shares, .. } = &mut env.body {
                let key = c.encryption_key(2).unwrap();
                let garbage = nov_core::group::gens().h;
                let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(9);
                for (r, batch) in shares.iter_mut() {
                    if *r == 2 {
                        std::sync::Arc::make_mut(batch)[1].o[5] = key.encrypt(&garbage, &mut rng);
                    }
                }
            }
        }
        true
    };
    let (server, _) = run(&cfg, updates.clone(), &mut attack);
    assert_eq!(server.phase(), Phase::Done);
    assert_eq!(server.removals().len(), 1);
    assert_eq!(server.removals()[0].client, 4);
    assert_eq!(server.removals()[0].reason, RemovalReason::InvalidShare);
    assert_exact_sum(&server, &updates);
}

#[test]
fn apply_update_matches_real_average() {
    let cfg = config(3, 2, vec![3]);
    let q = QuantConfig::default();
    let reals = [
        vec![vec![0.25, -0.125, 0.001]],
        vec![vec![0.5, 0.375, -0.002]],
        vec![vec![-0.1, 0.2, 0.003]],
    ];
    let updates: Vec<QuantizedUpdate> = reals.iter().map(|u| quantize(u, &q).update).collect();
    let (server, _) = run(&cfg, updates, &mut honest);
    let previous = vec![vec![1.0, 2.0, 3.0]];
    let model = apply_global_update(&previous, server.result().unwrap(), 3, &cfg).unwrap();
    for i in 0..3 {
        let oracle = previous[0][i] + reals.iter().map(|u| u[0][i]).sum::<f64>() / 3.0;
        assert!((model[0][i] - oracle).abs() <= q.scale().recip(), "param {i}");
    }
}

#[test]
fn apply_update_edge_cases() {
    let cfg = config(3, 2, vec![2]);
    let zero = vec![(Scalar::ZERO, Scalar::ZERO); 2];
    let prev = vec![vec![0.5, -0.5]];
    assert_eq!(apply_global_update(&prev, &zero, 4, &cfg).unwrap(), prev);
    let one = vec![(embed_signed(-65536), Scalar::ZERO), (embed_signed(32768), Scalar::ZERO)];
    assert_eq!(
        apply_global_update(&prev, &one, 1, &cfg).unwrap(),
        vec![vec![-0.5, 0.0]]
    );
    assert!(apply_global_update(&prev, &one, 0, &cfg).is_err());
    assert!(apply_global_update(&prev, &one[..1], 1, &cfg).is_err());
    let huge = vec![(-Scalar::ONE - Scalar::from(u64::MAX), Scalar::ZERO); 2];
    assert!(apply_global_update(&prev, &huge, 1, &cfg).is_err());
}

#[test]
fn distribution_size_is_linear_in_params_and_clients() {
    let size = |n: usize, p: usize| {
        let cfg = config(n, 2, vec![p]);
        let updates: Vec<_> = (1..=n as u32).map(|c| update(&cfg.shape, c)).collect();
        let mut len = 0;
        let mut measure = |c: &mut Client, env: &mut Envelope| {
            if c.index() == Some(1) && matches!(env.body, Message::ShareDistribution { .. }) {
                len = env.encoded_len();
            }
            true
        };
        run(&cfg, updates, &mut measure);
        drop(measure);
        len
    };
    let pair = 32 * 64;
    let a = size(5, 10);
    let b = size(5, 20);
    let c = size(10, 10);
    // the share part scales with p × (n − 1); filter and commitments with p
    // each receiver entry adds its index and a batch length
    assert_eq!(c - a, 5 * (10 * pair + 8));
    let per_param = (b - a) / 10;
    assert_eq!((b - a) % 10, 0);
    assert!(per_param > 4 * pair);
}
