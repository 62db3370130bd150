//! Cross-module invariants and properties.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use score_core::detection::{detect, ingest_selection, DetectionRun, Selection, SelectionSource, SpuriousPositiveSet};
use score_core::eval::{baseline_last_layer_retrain, group_balanced_subset};
use score_core::lrp::lrp_backward;
use score_core::metrics::evaluate;
use score_core::mitigation::{
    average_relevance, build_finetune_set, contribution_embedding, finetune_score, l1, regularizer_terms,
    FinetuneConfig, FinetuneSet, RegItem, RegMode, SpuriousRelevance,
};
use score_core::network::{build_patchnet, checkpoint_bytes, train_erm, LayerSpec, LayerStack, TrainConfig};
use score_core::synth::{generate, preset, GroupedDataset, Preset, Splits};
use score_core::tensor::{ops, Tensor};

fn small_splits(which: Preset, seed: u64, train: usize) -> Splits {
    let mut spec = preset(which, seed);
    spec.train.size = train;
    spec.val.size = 80;
    spec.test.size = 120;
    generate(&spec).unwrap()
}

fn trained(train: &GroupedDataset, epochs: usize) -> LayerStack<f32> {
    let mut model = build_patchnet::<f32>(2, 3).unwrap();
    let cfg = TrainConfig {
        epochs,
        seed: 3,
        ..TrainConfig::default()
    };
    train_erm(&mut model, train, &cfg).unwrap();
    model
}

fn top_positives(run: &DetectionRun, data: &GroupedDataset, n: usize) -> SpuriousPositiveSet {
    let selection = Selection {
        run_id: run.run_id.clone(),
        class_id: run.class_id,
        sample_ids: run.entries.iter().take(n).map(|e| e.sample_id).collect(),
        source: SelectionSource::File,
    };
    ingest_selection(run, data, &selection).unwrap()
}

fn finetune_fixture() -> (LayerStack<f32>, FinetuneSet, GroupedDataset) {
    let splits = small_splits(Preset::Wb100, 21, 240);
    let model = trained(&splits.train, 2);
    let run = detect(&model, &splits.train, 0, 40, 0.1, "inv").unwrap();
    let positives = top_positives(&run, &splits.train, 6);
    let set = build_finetune_set(&splits.train, &positives, 48, 5).unwrap();
    (model, set, splits.train)
}

#[test]
fn alpha_zero_matches_ce_only_finetuning() {
    let (model, set, _) = finetune_fixture();
    let base = FinetuneConfig {
        epochs: 2,
        seed: 4,
        ..FinetuneConfig::default()
    };
    let mut a = model.clone();
    let mut b = model.clone();
    let ca = finetune_score(
        &mut a,
        &set,
        &FinetuneConfig {
            alpha: 0.0,
            ..base.clone()
        },
        None,
    )
    .unwrap();
    let cb = finetune_score(
        &mut b,
        &set,
        &FinetuneConfig {
            mode: RegMode::None,
            ..base
        },
        None,
    )
    .unwrap();
    assert_eq!(checkpoint_bytes(&a).unwrap(), checkpoint_bytes(&b).unwrap());
    let ce_a: Vec<f64> = ca.curves.iter().map(|c| c.ce).collect();
    let ce_b: Vec<f64> = cb.curves.iter().map(|c| c.ce).collect();
    assert_eq!(ce_a, ce_b);
}

#[test]
fn gt_masks_equal_to_lrp_masks_give_identical_trajectory() {
    let (model, set, train) = finetune_fixture();
    let mut gt_train = train.clone();
    for (id, mask) in set.positives.sample_ids.iter().zip(&set.positives.masks) {
        let i = gt_train.samples.iter().position(|s| s.id == *id).unwrap();
        gt_train.samples[i].gt_mask = mask.clone();
    }
    let cfg = FinetuneConfig {
        epochs: 1,
        seed: 8,
        ..FinetuneConfig::default()
    };
    let mut a = model.clone();
    let mut b = model.clone();
    finetune_score(&mut a, &set, &cfg, None).unwrap();
    score_core::mitigation::finetune_with_gt_masks(&mut b, &set, &gt_train, &cfg, None).unwrap();
    assert_eq!(checkpoint_bytes(&a).unwrap(), checkpoint_bytes(&b).unwrap());
}

#[test]
fn finetuning_is_reproducible() {
    let (model, set, _) = finetune_fixture();
    let cfg = FinetuneConfig {
        epochs: 1,
        seed: 2,
        ..FinetuneConfig::default()
    };
    let mut a = model.clone();
    let mut b = model;
    let ca = finetune_score(&mut a, &set, &cfg, None).unwrap();
    let cb = finetune_score(&mut b, &set, &cfg, None).unwrap();
    assert_eq!(ca.curves, cb.curves);
    assert_eq!(checkpoint_bytes(&a).unwrap(), checkpoint_bytes(&b).unwrap());
}

#[test]
fn mean_relevance_matches_independent_mean() {
    let (model, set, _) = finetune_fixture();
    let layers = [6usize];
    let state = SpuriousRelevance::compute(&model, &set.positives, &layers, 1e-6).unwrap();
    let t = state.per_positive.len();
    for (l, mean) in state.mean.iter().enumerate() {
        for (j, &m) in mean.data().iter().enumerate() {
            let mut sum = 0.0f64;
            for p in &state.per_positive {
                sum += p[l].data()[j] as f64;
            }
            let expected = sum / t as f64;
            assert!(
                (m as f64 - expected).abs() <= 1e-5 * expected.abs().max(1.0),
                "{m} vs {expected}"
            );
        }
    }
}

#[test]
fn masked_inputs_regenerate_from_heatmaps() {
    let splits = small_splits(Preset::Wb100, 22, 160);
    let model = trained(&splits.train, 1);
    let run = detect(&model, &splits.train, 0, 20, 0.1, "regen").unwrap();
    let set = top_positives(&run, &splits.train, 10);
    for (i, &id) in set.sample_ids.iter().enumerate() {
        let entry = run.entry(id).unwrap();
        let image = &splits.train.by_id(id).unwrap().image;
        let (m, mask) = score_core::detection::build_masked_input(image, &entry.heatmap, run.mask_quantile).unwrap();
        assert_eq!(m, set.masked[i]);
        assert_eq!(mask, set.masks[i]);
    }
}

#[test]
fn zero_epoch_retrain_leaves_model_unchanged() {
    let splits = small_splits(Preset::Wb95, 23, 160);
    let model = trained(&splits.train, 1);
    let subset = group_balanced_subset(&splits.train, None, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = baseline_last_layer_retrain(&model, &subset, &cfg).unwrap();
    assert_eq!(checkpoint_bytes(&out).unwrap(), checkpoint_bytes(&model).unwrap());
}

#[test]
fn retrain_only_touches_the_head() {
    let splits = small_splits(Preset::Wb95, 24, 160);
    let model = trained(&splits.train, 1);
    let subset = group_balanced_subset(&splits.train, None, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let out = baseline_last_layer_retrain(&model, &subset, &cfg).unwrap();
    let last = model.layers.len() - 1;
    for i in 0..last {
        assert_eq!(out.layers[i], model.layers[i]);
    }
    assert_ne!(out.layers[last], model.layers[last]);
}

#[test]
fn wga_never_exceeds_avg_and_is_deterministic() {
    let splits = small_splits(Preset::Wb95, 25, 160);
    for epochs in 0..3 {
        let model = trained(&splits.train, epochs);
        let r = evaluate(&model, &splits.test).unwrap();
        assert!(r.wga <= r.avg + 1e-12);
        assert_eq!(r, evaluate(&model, &splits.test).unwrap());
    }
}

#[test]
fn patchnet_golden_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data: Vec<f64> = (0..3 * 32 * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor::new(vec![3, 32, 32], data).unwrap();
    let model = build_patchnet::<f64>(2, 42).unwrap();
    let logits = model.forward(&x).unwrap().logits().data().to_vec();
    let golden = [GOLDEN_0, GOLDEN_1];
    for (l, g) in logits.iter().zip(golden) {
        assert!((l - g).abs() <= 1e-12 * g.abs().max(1.0), "logits {logits:?}");
    }
}

// recorded from the reference path
const GOLDEN_0: f64 = -0.7145555361463101;
const GOLDEN_1: f64 = -0.09999267869921002;

fn dense_net(d: usize, h: usize, k: usize, seed: u64) -> LayerStack<f64> {
    let specs = vec![
        LayerSpec::Dense {
            inputs: d,
            outputs: h,
            bias: false,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            inputs: h,
            outputs: k,
            bias: false,
        },
    ];
    let mut model = LayerStack::from_specs(&[d], specs, 2).unwrap();
    model.init_kaiming(seed);
    model
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_is_positively_homogeneous(
        pairs in prop::collection::vec((-4.0f32..4.0, -4.0f32..4.0), 1..32),
        c in prop_oneof![Just(0.0f32), Just(0.5), Just(2.0), Just(4.0)],
    ) {
        let f = Tensor::from_vec(pairs.iter().map(|p| p.0).collect());
        let r = Tensor::from_vec(pairs.iter().map(|p| p.1).collect());
        let scaled = f.map(|v| v * c);
        let z = l1(&contribution_embedding(&f, &r).unwrap());
        let zc = l1(&contribution_embedding(&scaled, &r).unwrap());
        prop_assert_eq!(zc, c as f64 * z);
    }

    #[test]
    fn embedding_matches_scalar_loop(pairs in prop::collection::vec((-4.0f32..4.0, -4.0f32..4.0), 1..32)) {
        let f = Tensor::from_vec(pairs.iter().map(|p| p.0).collect());
        let r = Tensor::from_vec(pairs.iter().map(|p| p.1).collect());
        let z = contribution_embedding(&f, &r).unwrap();
        for (i, &(fv, rv)) in pairs.iter().enumerate() {
            let expected = if rv > 0.0 { fv * rv } else { 0.0 };
            prop_assert_eq!(z.data()[i], expected);
        }
    }

    #[test]
    fn mean_of_identical_vectors_is_that_vector(v in prop::collection::vec(-8.0f32..8.0, 1..16), t in 1usize..8) {
        let x = Tensor::from_vec(v);
        let refs: Vec<&Tensor<f32>> = std::iter::repeat_n(&x, t).collect();
        let mean = average_relevance(&refs).unwrap();
        for (m, a) in mean.data().iter().zip(x.data()) {
            prop_assert!((m - a).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn other_classes_never_contribute(seed in any::<u64>(), n in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = Tensor::from_vec((0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect());
        let mut state = SpuriousRelevance { class_id: 0, layers: vec![0], per_positive: vec![vec![r]], mean: vec![] };
        state.refresh_mean().unwrap();
        let acts: Vec<Vec<Tensor<f32>>> = (0..n)
            .map(|_| vec![Tensor::from_vec((0..6).map(|_| rng.random_range(0.0f32..1.0)).collect())])
            .collect();
        let items: Vec<RegItem<'_>> = acts.iter().map(|a| RegItem { y: 1, positive: None, activations: a }).collect();
        let terms = regularizer_terms(&items, &state).unwrap();
        prop_assert_eq!(terms.positive + terms.average, 0.0);
    }

    #[test]
    fn relevance_scales_linearly_with_logit(seed in any::<u64>(), c in 0.25f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = dense_net(4, 5, 2, seed);
        let x = Tensor::new(vec![4], (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut scaled = model.clone();
        let last = scaled.layers.len() - 1;
        scaled.layers[last].params[0].scale(c);
        let a = lrp_backward(&model, &model.forward(&x).unwrap(), 0, 0.0).unwrap();
        let b = lrp_backward(&scaled, &scaled.forward(&x).unwrap(), 0, 0.0).unwrap();
        for (ra, rb) in a[0].relevance.data().iter().zip(b[0].relevance.data()) {
            prop_assert!((ra * c - rb).abs() <= 1e-9 * (ra * c).abs().max(1.0));
        }
    }

    #[test]
    fn bias_free_dense_nets_conserve_relevance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = dense_net(5, 7, 3, seed);
        let x = Tensor::new(vec![5], (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let trace = model.forward(&x).unwrap();
        let maps = lrp_backward(&model, &trace, 1, 0.0).unwrap();
        let logit = trace.logits().data()[1];
        let dead = trace.layer_output(1).data().iter().all(|&v| v == 0.0);
        if !dead {
            for m in &maps {
                prop_assert!((m.relevance.sum() - logit).abs() <= 1e-9 * logit.abs().max(1.0));
            }
        }
    }

    #[test]
    fn forward_and_conv_are_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::new(vec![2, 6, 6], (0..72).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let k = Tensor::new(vec![3, 2, 3, 3], (0..54).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        prop_assert_eq!(ops::conv2d(&x, &k, 1).unwrap(), ops::conv2d(&x, &k, 1).unwrap());
    }
}
