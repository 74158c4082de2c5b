mod common;

use common::rng;
use proptest::prelude::*;
use zcnas::analysis::spearman;
use zcnas::bench::*;
use zcnas::engine::{GraphSpec, InitConfig, Network, Op};
use zcnas::proxy::{Metric, ScoreCache};
use zcnas::space::{self, Architecture, CellOp, ScaleConfig, SpaceSpec};

fn small_spec() -> DatasetSpec {
    DatasetSpec {
        train: 64,
        val: 32,
        test: 32,
        ..DatasetSpec::default()
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 32,
        ..TrainConfig::default()
    }
}

fn record(seed: u64, acc: f64) -> TrainRecord {
    TrainRecord {
        seed,
        val_acc: vec![acc],
        test_acc: acc,
        status: TrainStatus::Ok,
        epochs_completed: 1,
    }
}

#[test]
fn dataset_is_deterministic_and_balanced() {
    let a = gen_dataset(&DatasetSpec::default(), 3).unwrap();
    let b = gen_dataset(&DatasetSpec::default(), 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.train.images, gen_dataset(&DatasetSpec::default(), 4).unwrap().train.images);
    for split in [&a.train, &a.val, &a.test] {
        let mut counts = vec![0usize; 4];
        split.labels.iter().for_each(|&l| counts[l] += 1);
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }
    assert_eq!(a.train.images.shape(), &[512, 3, 8, 8]);
}

#[test]
fn dataset_rejects_more_classes_than_samples() {
    let spec = DatasetSpec {
        classes: 10,
        train: 4,
        val: 2,
        test: 2,
        ..DatasetSpec::default()
    };
    assert!(matches!(gen_dataset(&spec, 0), Err(BenchError::InvalidConfig(_))));
}

#[test]
fn noiseless_samples_are_templates() {
    let spec = DatasetSpec {
        noise: 0.0,
        ..small_spec()
    };
    let data = gen_dataset(&spec, 1).unwrap();
    let d = 3 * 8 * 8;
    let mut correct = 0;
    for (i, &l) in data.test.labels.iter().enumerate() {
        let x = &data.test.images.data()[i * d..(i + 1) * d];
        assert_eq!(x, data.templates[l].as_slice());
        let nearest = (0..spec.classes)
            .min_by(|&a, &b| {
                let da: f64 = x.iter().zip(&data.templates[a]).map(|(p, q)| (p - q).powi(2)).sum();
                let db: f64 = x.iter().zip(&data.templates[b]).map(|(p, q)| (p - q).powi(2)).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        correct += usize::from(nearest == l);
    }
    assert_eq!(correct, data.test.len());
}

fn linear_model(classes: usize) -> Network {
    let mut g = GraphSpec::new();
    let x = g.push("input", Op::Input { shape: vec![3, 8, 8] }, &[]);
    let f = g.push("flatten", Op::Flatten, &[x]);
    g.push(
        "classifier",
        Op::Linear {
            in_features: 192,
            out_features: classes,
            bias: true,
        },
        &[f],
    );
    Network::build(&g, &InitConfig::default()).unwrap()
}

#[test]
fn linear_model_beats_chance() {
    let data = gen_dataset(&DatasetSpec::default(), 0).unwrap();
    let mut net = linear_model(4);
    let rec = train(&mut net, &data, &TrainConfig::default()).unwrap();
    assert_eq!(rec.status, TrainStatus::Ok);
    assert_eq!(rec.val_acc.len(), 10);
    assert!(rec.test_acc > 0.25 + 0.1, "test accuracy {}", rec.test_acc);
}

#[test]
fn cosine_schedule_values() {
    assert_eq!(cosine_lr(0.1, 0, 40), 0.1);
    assert_eq!(cosine_lr(0.1, 20, 40), 0.05);
    assert_eq!(cosine_lr(0.1, 40, 40), 0.0);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let data = gen_dataset(&small_spec(), 0).unwrap();
    let space = SpaceSpec::mini();
    let arch = Architecture::uniform(&space, CellOp::Conv3x3).unwrap();
    let mut net = space::materialize(&space, &arch, &ScaleConfig::default(), &InitConfig::default()).unwrap();
    let before = net.param_set();
    let cfg = TrainConfig {
        lr: 0.0,
        ..quick_train()
    };
    let rec = train(&mut net, &data, &cfg).unwrap();
    assert_eq!(net.param_set(), before);
    assert!(rec.val_acc.iter().all(|&a| a == rec.val_acc[0]));
}

#[test]
fn overfits_small_training_set() {
    let spec = DatasetSpec {
        train: 32,
        val: 4,
        test: 4,
        ..DatasetSpec::default()
    };
    let data = gen_dataset(&spec, 5).unwrap();
    let space = SpaceSpec::mini();
    let arch = Architecture::uniform(&space, CellOp::Conv3x3).unwrap();
    let mut net = space::materialize(&space, &arch, &ScaleConfig::default(), &InitConfig::default()).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 8,
        flip: false,
        crop: false,
        ..TrainConfig::default()
    };
    train(&mut net, &data, &cfg).unwrap();
    let acc = evaluate(&mut net, &data.train, 32).unwrap();
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn training_is_deterministic() {
    let data = gen_dataset(&small_spec(), 0).unwrap();
    let space = SpaceSpec::mini();
    let arch = space.from_index(77);
    let run = || train_arch(&space, &arch, &ScaleConfig::default(), &data, &quick_train(), &InitConfig::default(), 4).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn divergence_marks_record_failed() {
    let data = gen_dataset(&small_spec(), 0).unwrap();
    let mut net = linear_model(4);
    let cfg = TrainConfig {
        lr: 1e300,
        momentum: 0.0,
        ..quick_train()
    };
    let rec = train(&mut net, &data, &cfg).unwrap();
    assert_eq!(rec.status, TrainStatus::Failed);
    assert_eq!(rec.val_acc.len(), 3);
    assert_eq!(rec.test_acc, 0.0);
    assert!(rec.epochs_completed < 3);
}

#[test]
fn augmentation_flip_and_crop() {
    let mut t = zcnas::engine::Tensor::new(vec![1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
    let original = t.clone();
    augment(&mut t, false, false, &mut rng(0));
    assert_eq!(t, original);
    // Over many draws a flip-only augmentation yields exactly the two images.
    let mut seen = std::collections::BTreeSet::new();
    let mut r = rng(1);
    for _ in 0..50 {
        let mut x = original.clone();
        augment(&mut x, true, false, &mut r);
        seen.insert(x.data().iter().map(|v| *v as i64).collect::<Vec<_>>());
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![vec![1, 2, 3, 4, 5, 6], vec![3, 2, 1, 6, 5, 4]]);
    // Crops keep values from the image or the zero padding.
    let mut x = original.clone();
    augment(&mut x, false, true, &mut rng(2));
    assert!(x.data().iter().all(|v| original.data().contains(v) || *v == 0.0));
}

fn two_arch_config() -> MinibenchConfig {
    MinibenchConfig {
        space: SpaceSpec::new(2, vec![CellOp::Skip, CellOp::Conv1x1]).unwrap(),
        dataset: small_spec(),
        train: quick_train(),
        seeds: vec![0, 1],
        ..MinibenchConfig::default()
    }
}

#[test]
fn two_arch_minibench() {
    let bench = build_minibench(&two_arch_config(), None, 1).unwrap();
    assert_eq!(bench.len(), 2);
    for (_, recs) in bench.iter() {
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.val_acc.len() == 3));
    }
}

#[test]
fn minibench_resumes_and_rebuilds_identically() {
    let cfg = two_arch_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.jsonl");
    let full = build_minibench(&cfg, Some(&path), 1).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(TabularBenchmark::parse(&text).unwrap(), full);

    // Keep the header and one record, marked so retraining would be visible,
    // and leave a torn partial line behind.
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let mut first: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    first["test_acc"] = serde_json::json!(0.123);
    std::fs::write(&path, format!("{header}\n{first}\n{{\"arch\":\"|ski")).unwrap();
    let resumed = build_minibench(&cfg, Some(&path), 2).unwrap();
    let arch = first["arch"].as_str().unwrap();
    let seed = first["seed"].as_u64().unwrap();
    let kept = resumed.records(arch).unwrap().iter().find(|r| r.seed == seed).unwrap();
    assert_eq!(kept.test_acc, 0.123);
    for (a, recs) in full.iter() {
        for r in recs {
            if !(a == arch && r.seed == seed) {
                assert!(resumed.records(a).unwrap().contains(r));
            }
        }
    }

    let again = build_minibench(&cfg, None, 1).unwrap();
    assert_eq!(again.render(), full.render());

    let other = MinibenchConfig { data_seed: 9, ..cfg };
    assert!(matches!(build_minibench(&other, Some(&path), 1), Err(BenchError::InvalidConfig(_))));
}

#[test]
fn query_semantics() {
    let space = SpaceSpec::mini();
    let mut bench = TabularBenchmark::new(space.clone());
    let a = space.from_index(5);
    let b = space.from_index(6);
    bench.insert(&space.to_string(&a), record(0, 0.5)).unwrap();
    for s in 0..3 {
        bench.insert(&space.to_string(&b), record(s, 0.1 * (s + 1) as f64)).unwrap();
    }
    let mut r = rng(0);
    assert!((0..100).all(|_| bench.query(&a, &mut r).unwrap() == 0.5));
    let mut counts = [0usize; 3];
    for _ in 0..10_000 {
        let v = bench.query(&b, &mut r).unwrap();
        counts[((v * 10.0).round() as usize) - 1] += 1;
    }
    // Chi-square with 2 degrees of freedom, 0.001 critical value 13.816.
    let chi: f64 = counts.iter().map(|&c| (c as f64 - 10_000.0 / 3.0).powi(2) / (10_000.0 / 3.0)).sum();
    assert!(chi < 13.816, "{counts:?}");
    assert!(matches!(bench.query(&space.from_index(7), &mut r), Err(BenchError::UnknownArch(_))));
}

#[test]
fn tabular_round_trip_and_validation() {
    let space = SpaceSpec::mini();
    let mut bench = TabularBenchmark::new(space.clone());
    let name = space.to_string(&space.from_index(3));
    bench.insert(&name, record(1, 0.25)).unwrap();
    bench
        .insert(
            &name,
            TrainRecord {
                seed: 2,
                val_acc: vec![0.5, 0.0],
                test_acc: 0.0,
                status: TrainStatus::Failed,
                epochs_completed: 1,
            },
        )
        .unwrap();
    let text = bench.render();
    assert!(text.lines().next().unwrap().contains("\"zcnas-tabular\""));
    assert_eq!(TabularBenchmark::parse(&text).unwrap(), bench);
    assert_eq!(bench.mean_accuracy(&name), Some(0.125));
    assert!(bench.insert(&name, record(3, 1.5)).is_err());
    assert!(TabularBenchmark::parse(&text.replace("zcnas-tabular", "other")).is_err());
    assert!(TabularBenchmark::parse(&text.replace(&name, "|bogus~0|")).is_err());
}

#[test]
fn identity_reduction_equals_training() {
    let data = gen_dataset(&small_spec(), 0).unwrap();
    let space = SpaceSpec::mini();
    let arch = space.from_index(88);
    let scale = ScaleConfig::default();
    let cfg = quick_train();
    let init = InitConfig::default();
    let id = ReducedTrainConfig::identity(&scale, &cfg);
    let reduced = reduced_training_proxy(&space, &arch, &scale, &id, &data, &cfg, &init, 3).unwrap();
    assert_eq!(reduced, train_arch(&space, &arch, &scale, &data, &cfg, &init, 3).unwrap());
    let too_big = ReducedTrainConfig { channels: 8, ..id };
    assert!(reduced_training_proxy(&space, &arch, &scale, &too_big, &data, &cfg, &init, 3).is_err());
}

#[test]
fn halved_resolution_and_channels_cost_a_sixteenth() {
    let space = SpaceSpec::nb201_like();
    let arch = Architecture::uniform(&space, CellOp::Conv3x3).unwrap();
    let base = ScaleConfig {
        resolution: 32,
        channels: 16,
        cells_per_stage: 5,
        ..ScaleConfig::default()
    };
    let half = ReducedTrainConfig {
        resolution: 16,
        channels: 8,
        epochs: 1,
    };
    let ratio = space::flops(&space, &arch, &half.scale(&base)).unwrap() as f64
        / space::flops(&space, &arch, &base).unwrap() as f64;
    assert!((ratio - 1.0 / 16.0).abs() <= 0.1 / 16.0, "ratio {ratio}");
}

#[test]
fn longer_schedule_is_not_a_prefix_extension() {
    let data = gen_dataset(&small_spec(), 0).unwrap();
    let space = SpaceSpec::mini();
    let arch = space.from_index(40);
    let scale = ScaleConfig::default();
    let base = quick_train();
    let run = |e| {
        let r = ReducedTrainConfig {
            epochs: e,
            ..ReducedTrainConfig::identity(&scale, &base)
        };
        reduced_training_proxy(&space, &arch, &scale, &r, &data, &base, &InitConfig::default(), 0).unwrap()
    };
    let (short, long) = (run(2), run(4));
    assert_eq!(short.val_acc.len(), 2);
    assert_eq!(long.val_acc.len(), 4);
    // Same first-epoch learning rate, different second-epoch rate.
    assert_eq!(cosine_lr(0.1, 0, 2), cosine_lr(0.1, 0, 4));
    assert_ne!(cosine_lr(0.1, 1, 2), cosine_lr(0.1, 1, 4));
    assert_eq!(short.val_acc[0], long.val_acc[0]);
    assert_ne!(short.val_acc, long.val_acc[..2].to_vec());
}

#[test]
fn synthetic_perfect_proxy() {
    let space = SpaceSpec::mini();
    let syn = gen_synthetic_tabular(&space, 1.0, &NoiseModel::default(), 0).unwrap();
    assert_eq!(syn.measured_rho, 1.0);
    assert_eq!(syn.bench.len(), 125);
    let mut pairs: Vec<(f64, f64)> = syn
        .proxy
        .iter()
        .map(|(a, &p)| (syn.bench.mean_accuracy(a).unwrap(), p))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    assert!(pairs.windows(2).all(|w| w[0].0 == w[1].0 || w[0].1 < w[1].1));
    let neg = gen_synthetic_tabular(&space, -1.0, &NoiseModel::default(), 0).unwrap();
    assert_eq!(neg.measured_rho, -1.0);
}

fn measured(syn: &SyntheticTabular) -> f64 {
    let (p, a): (Vec<f64>, Vec<f64>) = syn
        .proxy
        .iter()
        .map(|(arch, &v)| (v, syn.bench.mean_accuracy(arch).unwrap()))
        .unzip();
    spearman(&p, &a).unwrap()
}

#[test]
fn synthetic_calibration_on_full_space() {
    let space = SpaceSpec::nb201_like();
    let zero = gen_synthetic_tabular(&space, 0.0, &NoiseModel::default(), 1).unwrap();
    assert!(measured(&zero).abs() <= 0.05);
    let syn = gen_synthetic_tabular(&space, 0.76, &NoiseModel::default(), 1).unwrap();
    let rho = measured(&syn);
    assert!((0.74..=0.78).contains(&rho), "rho {rho}");
    assert_eq!(rho, syn.measured_rho);
    assert_eq!(syn.bench.len(), 15625);
    assert!(gen_synthetic_tabular(&space, 1.5, &NoiseModel::default(), 1).is_err());
}

#[test]
fn synthetic_proxy_file_round_trip() {
    let space = SpaceSpec::mini();
    let syn = gen_synthetic_tabular(&space, 0.5, &NoiseModel::default(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("proxy.jsonl");
    syn.save_proxy(&path, Metric::Synflow, 2).unwrap();
    let cache = ScoreCache::load(&path).unwrap();
    assert_eq!(cache.len(), 125);
    for e in cache.entries() {
        assert_eq!(e.value, Some(syn.proxy[&e.arch]));
    }
    let bench_path = dir.path().join("bench.jsonl");
    syn.bench.save(&bench_path).unwrap();
    assert_eq!(TabularBenchmark::load(&bench_path).unwrap(), syn.bench);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn queries_do_not_mutate(seed in 0u64..1000, seeds in 1usize..4) {
        let space = SpaceSpec::mini();
        let model = NoiseModel { seeds, seed_noise: 0.01, ..NoiseModel::default() };
        let syn = gen_synthetic_tabular(&space, 0.3, &model, seed).unwrap();
        let before = syn.bench.clone();
        let mut r = rng(seed);
        for i in 0..200 {
            let v = syn.bench.query(&space.from_index(i % 125), &mut r).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(&syn.bench, &before);
        for (_, recs) in syn.bench.iter() {
            prop_assert_eq!(recs.len(), seeds);
            prop_assert!(recs.iter().all(|r| r.val_acc.len() == r.epochs_completed));
        }
    }

    #[test]
    fn calibration_hits_target(target in -0.95f64..0.95, seed in 0u64..100) {
        let syn = gen_synthetic_tabular(&SpaceSpec::mini(), target, &NoiseModel::default(), seed).unwrap();
        prop_assert!((syn.measured_rho - target).abs() <= CALIBRATION_TOLERANCE);
    }
}
