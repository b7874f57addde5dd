use std::collections::HashMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use digmol::augment::{deleted_directions, make_pair, masked_rows, AugmentConfig};
use digmol::contrastive::nt_xent_value;
use digmol::encoder::{encode, EncoderConfig, EncoderKind, EncoderParams};
use digmol::graph::MolGraph;
use digmol::metrics::{mae, prc_auc, rmse, roc_auc};
use digmol::momentum::NetworkPair;
use digmol::smiles::{extract_scaffold, parse_smiles};
use digmol::split::{random_split, scaffold_split, Split};
use digmol::synth::{corpus, random_smiles};
use digmol::tensor::Tensor;
use digmol::trainer::{Checkpoint, PretrainConfig, Pretrainer};

fn molecule(seed: u64) -> MolGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    parse_smiles(&random_smiles(&mut rng)).expect("generated SMILES parse")
}

fn small_encoder(kind: EncoderKind) -> EncoderConfig {
    EncoderConfig {
        kind,
        layers: 2,
        hidden: 8,
        proj_hidden: 8,
        proj_dim: 4,
        ..EncoderConfig::default()
    }
}

fn fractions() -> impl Strategy<Value = [f64; 3]> {
    prop_oneof![
        Just([0.8, 0.1, 0.1]),
        Just([0.7, 0.15, 0.15]),
        Just([0.6, 0.2, 0.2]),
        Just([0.5, 0.25, 0.25]),
    ]
}

fn assert_partition(split: &Split, n: usize) {
    let mut seen = vec![0u8; n];
    for part in split.parts() {
        for &i in part {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1), "not a partition: {seen:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentation_counts_and_reverse_edges(
        mol in any::<u64>(),
        mask in 0.0f64..=1.0,
        unidir in 0.0f64..=1.0,
        seed in any::<u64>(),
        stream in 0u64..1000,
    ) {
        let g = molecule(mol);
        let cfg = AugmentConfig::new(mask, unidir, seed).unwrap();
        let (a, b) = make_pair(&g, &cfg, stream);
        for v in [&a, &b] {
            prop_assert_eq!(masked_rows(v).len(), (mask * g.n_nodes() as f64).floor() as usize);
            let deleted = deleted_directions(&g, v);
            prop_assert_eq!(deleted.len(), (unidir * g.bonds().len() as f64).floor() as usize);
            for (i, j) in deleted {
                prop_assert!(v.has_edge(j, i), "both directions of {}-{} gone", i, j);
            }
            prop_assert_eq!(v.atoms(), g.atoms());
        }
        prop_assert_eq!(make_pair(&g, &cfg, stream), (a, b));
    }

    #[test]
    fn transition_rows_are_stochastic_or_empty(mol in any::<u64>(), seed in any::<u64>()) {
        let g = molecule(mol);
        let cfg = AugmentConfig::new(0.25, 1.0, seed).unwrap();
        let (view, _) = make_pair(&g, &cfg, 0);
        for graph in [&g, &view] {
            let t = graph.transitions();
            for p in [&t.forward, &t.backward] {
                prop_assert!(p.data().iter().all(|&x| x >= 0.0));
                for &s in p.row_sums().data() {
                    prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12, "row sum {}", s);
                }
            }
        }
    }

    #[test]
    fn embeddings_ignore_atom_order(mol in any::<u64>(), init in any::<u64>(), gcn in any::<bool>()) {
        let g = molecule(mol);
        let kind = if gcn { EncoderKind::Gcn } else { EncoderKind::Diffusion };
        let mut rng = ChaCha8Rng::seed_from_u64(init);
        let params = EncoderParams::init(small_encoder(kind), &mut rng).unwrap();
        let mut perm: Vec<usize> = (0..g.n_nodes()).collect();
        perm.shuffle(&mut rng);
        let (h, z) = encode(&g, &params).unwrap();
        let (hp, zp) = encode(&g.permute(&perm).unwrap(), &params).unwrap();
        prop_assert!(h.max_abs_diff(&hp) < 1e-9);
        prop_assert!(z.max_abs_diff(&zp) < 1e-9);
    }

    #[test]
    fn metrics_stay_in_range(
        pairs in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..60),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let roc = roc_auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&roc));
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((roc + roc_auc(&negated, &labels).unwrap() - 1.0).abs() < 1e-12);
        let prc = prc_auc(&scores, &labels).unwrap();
        prop_assert!(prc > 0.0 && prc <= 1.0 + 1e-12);

        let truth: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
        let (r, m) = (rmse(&scores, &truth).unwrap(), mae(&scores, &truth).unwrap());
        prop_assert!(m >= 0.0 && r + 1e-12 >= m);
    }

    #[test]
    fn nt_xent_is_nonnegative_and_scale_free(
        seed in any::<u64>(),
        batch in 2usize..6,
        scale in 0.1f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            let data = (0..batch * 3).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            Tensor::from_vec(batch, 3, data).unwrap()
        };
        let (za, zb) = (draw(), draw());
        let loss = nt_xent_value(&za, &zb, 0.1).unwrap();
        prop_assert!(loss >= 0.0);
        let scaled = Tensor::from_vec(batch, 3, za.data().iter().map(|x| x * scale).collect()).unwrap();
        prop_assert!((nt_xent_value(&scaled, &zb, 0.1).unwrap() - loss).abs() < 1e-9);
    }

    #[test]
    fn scaffold_split_is_a_confined_partition(
        n in 12usize..120,
        seed in any::<u64>(),
        fractions in fractions(),
    ) {
        let keys: Vec<_> = corpus(n, seed)
            .iter()
            .map(|s| extract_scaffold(&parse_smiles(s).unwrap()))
            .collect();
        let split = match scaffold_split(&keys, fractions) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        assert_partition(&split, n);
        let mut home = HashMap::new();
        for (name, part) in ["train", "valid", "test"].into_iter().zip(split.parts()) {
            for &i in part {
                let prev = home.insert(&keys[i], name);
                prop_assert!(prev.is_none() || prev == Some(name), "scaffold {} in two splits", keys[i]);
            }
        }
    }

    #[test]
    fn random_split_is_a_seeded_partition(n in 3usize..500, seed in any::<u64>(), fractions in fractions()) {
        let split = random_split(n, fractions, seed).unwrap();
        assert_partition(&split, n);
        prop_assert_eq!(split.valid.len(), (fractions[1] * n as f64).floor() as usize);
        prop_assert_eq!(split.test.len(), (fractions[2] * n as f64).floor() as usize);
        prop_assert_eq!(random_split(n, fractions, seed).unwrap(), split);
    }

    #[test]
    fn momentum_contracts_the_gap(m in 0.0f64..=1.0, steps in 1usize..20, seed in any::<u64>()) {
        let mut pair = NetworkPair::init(small_encoder(EncoderKind::Diffusion), m, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        pair.online = EncoderParams::init(small_encoder(EncoderKind::Diffusion), &mut rng).unwrap();
        let start = pair.max_gap();
        for _ in 0..steps {
            pair.momentum_update().unwrap();
        }
        prop_assert!(pair.max_gap() <= m.powi(steps as i32) * start * (1.0 + 1e-12) + 1e-15);
        prop_assert_eq!(pair.step, steps as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn config_text_roundtrips(
        epochs in 1usize..500,
        batch in 2usize..256,
        lr in 1e-6f64..1.0,
        momentum in 0.0f64..=1.0,
        mask in 0.0f64..=1.0,
        seed in any::<u64>(),
        gcn in any::<bool>(),
    ) {
        let mut cfg = PretrainConfig {
            epochs,
            batch_size: batch,
            lr0: lr,
            momentum,
            seed,
            ..PretrainConfig::default()
        };
        cfg.augment.mask_ratio = mask;
        cfg.encoder.kind = if gcn { EncoderKind::Gcn } else { EncoderKind::Diffusion };
        let text = cfg.to_canonical_text();
        prop_assert_eq!(PretrainConfig::from_canonical_text(&text).unwrap(), cfg);
    }

    #[test]
    fn checkpoint_bytes_roundtrip(seed in any::<u64>(), epochs in 0usize..2) {
        let cfg = PretrainConfig {
            epochs: 2,
            batch_size: 4,
            encoder: small_encoder(EncoderKind::Diffusion),
            seed,
            ..PretrainConfig::default()
        };
        let data: Vec<MolGraph> = corpus(8, seed).iter().map(|s| parse_smiles(s).unwrap()).collect();
        let mut trainer = Pretrainer::new(cfg).unwrap();
        for _ in 0..epochs {
            trainer.run_epoch(&data).unwrap();
        }
        let ckpt = trainer.checkpoint();
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ckpt);
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

#[test]
fn pretraining_loss_trends_down() {
    let data: Vec<MolGraph> = corpus(64, 3).iter().map(|s| parse_smiles(s).unwrap()).collect();
    let cfg = PretrainConfig {
        epochs: 15,
        batch_size: 16,
        seed: 3,
        ..PretrainConfig::default()
    };
    let metrics = Pretrainer::new(cfg).unwrap().run(&data).unwrap();
    let joint: Vec<f64> = metrics.iter().map(|m| m.loss.joint).collect();
    let (first, last) = (median(&joint[..5]), median(&joint[joint.len() - 5..]));
    assert!(last < first, "median loss {first} -> {last}");
}
