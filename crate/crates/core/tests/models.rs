use hscls_core::corpus::{
    build_vocabulary, combined_text, encode_dataset, synthetic::generate, synthetic::SyntheticSpec, HsCode, StopWords,
    TokenSequence,
};
use hscls_core::models::{
    batch_of, build_dnn, build_text_cnn, dnn_layer_plan, load_weights, predict, save_weights, train, Architecture,
    DnnConfig, Model, ModelContext, ModelWeights, Network, TextCnnConfig, TrainConfig, TrainingMetadata,
};
use hscls_core::nn::{IdBatch, Optimizer, OptimizerSpec};
use hscls_core::{Error, Real};
use rand::Rng;

struct Toy {
    train: Vec<TokenSequence>,
    valid: Vec<TokenSequence>,
    vocab_size: usize,
    ctx: ModelContext,
}

fn toy(classes: usize, per_class: usize, max_len: usize) -> Toy {
    let spec = SyntheticSpec { classes, per_class, noise_fraction: 0.0, seed: 3, ..Default::default() };
    let data = generate(&spec).unwrap();
    let sw = StopWords::none();
    let texts: Vec<String> = data
        .records()
        .iter()
        .map(|r| combined_text(&r.short_description, &r.medium_description, r.etim.as_deref(), &sw))
        .collect();
    let vocab = build_vocabulary(&texts, 500).unwrap();
    let codes: Vec<HsCode> = data.classes();
    let seqs = encode_dataset(&data, &vocab, &codes, max_len, &sw).unwrap();
    let cut = seqs.len() * 4 / 5;
    Toy {
        train: seqs[..cut].to_vec(),
        valid: seqs[cut..].to_vec(),
        vocab_size: vocab.len(),
        ctx: ModelContext { vocab_hash: vocab.hash(), class_list: codes.iter().map(|c| c.to_string()).collect() },
    }
}

fn small_cnn() -> TextCnnConfig {
    TextCnnConfig { kernel_sizes: vec![2, 3], filters_per_kernel: 8, embedding_dim: 8, dropout: 0.0, n_conv_blocks: 1 }
}

fn small_dnn() -> DnnConfig {
    DnnConfig { initial_neurons: 16, neuron_pct: 0.005, neuron_shrink: 0.5, dropout: 0.0, embedding_dim: 8, n_layer_cap: 3 }
}

/// Counts parameters independently of the model code from the layer plan.
fn dnn_param_oracle(cfg: &DnnConfig, v: usize, c: usize, l: usize) -> usize {
    let mut total = v * cfg.embedding_dim;
    let mut fan_in = l * cfg.embedding_dim;
    for w in dnn_layer_plan(cfg) {
        total += fan_in * w + w;
        fan_in = w;
    }
    total + fan_in * c + c
}

fn cnn_param_oracle(cfg: &TextCnnConfig, v: usize, c: usize) -> usize {
    let d = cfg.embedding_dim;
    let f = cfg.filters_per_kernel;
    let conv: usize = cfg
        .kernel_sizes
        .iter()
        .map(|&h| (h * d * f + f) + (cfg.n_conv_blocks - 1) * (h * f * f + f))
        .sum();
    v * d + conv + cfg.kernel_sizes.len() * f * c + c
}

#[test]
fn parameter_counts_match_closed_form() {
    for cfg in [DnnConfig::paper_base(), DnnConfig::paper_upsampled(), small_dnn()] {
        let m: Model<f32> = build_dnn(&cfg, 200, 7, 12, 1).unwrap();
        assert_eq!(m.parameter_count(), dnn_param_oracle(&cfg, 200, 7, 12));
    }
    let mut deep = small_cnn();
    deep.n_conv_blocks = 3;
    for cfg in [TextCnnConfig::prose_345(), small_cnn(), deep] {
        let m: Model<f32> = build_text_cnn(&cfg, 200, 7, 12, 1).unwrap();
        assert_eq!(m.parameter_count(), cnn_param_oracle(&cfg, 200, 7));
    }
}

#[test]
fn prose_preset_concat_width_and_paper_final_runs() {
    match build_text_cnn::<f64>(&TextCnnConfig::prose_345(), 100, 4, 20, 0).unwrap() {
        Model::TextCnn(t) => assert_eq!(t.feature_width(), 384),
        _ => unreachable!(),
    }
    let m: Model<f64> = build_text_cnn(&TextCnnConfig::paper_final(), 100, 4, 20, 0).unwrap();
    let p = m.probabilities(&IdBatch::new(vec![3; 40], 2, 20).unwrap()).unwrap();
    assert_eq!(p.shape(), &[2, 4]);
}

#[test]
fn kernel_longer_than_sequence_rejected() {
    let cfg = TextCnnConfig { kernel_sizes: vec![6], ..small_cnn() };
    assert!(build_text_cnn::<f64>(&cfg, 10, 2, 5, 0).is_err());
    let cfg = TextCnnConfig { kernel_sizes: vec![5], ..small_cnn() };
    assert!(build_text_cnn::<f64>(&cfg, 10, 2, 5, 0).is_ok());
}

#[test]
fn smallest_dnn_builds() {
    let cfg = DnnConfig { initial_neurons: 1, neuron_pct: 0.0002, neuron_shrink: 0.5, dropout: 0.0, embedding_dim: 2, n_layer_cap: 1 };
    let m: Model<f64> = build_dnn(&cfg, 4, 3, 1, 0).unwrap();
    let p = m.probabilities(&IdBatch::new(vec![0, 1, 2], 3, 1).unwrap()).unwrap();
    assert_eq!(p.shape(), &[3, 3]);
}

#[test]
fn same_seed_gives_identical_initial_weights() {
    let a: Model<f64> = build_dnn(&small_dnn(), 30, 3, 6, 42).unwrap();
    let b: Model<f64> = build_dnn(&small_dnn(), 30, 3, 6, 42).unwrap();
    let c: Model<f64> = build_dnn(&small_dnn(), 30, 3, 6, 43).unwrap();
    let vals = |m: &Model<f64>| m.parameters().iter().flat_map(|p| p.value.data().to_vec()).collect::<Vec<_>>();
    assert_eq!(vals(&a), vals(&b));
    assert_ne!(vals(&a), vals(&c));
}

#[test]
fn toy_corpus_is_fit_perfectly() {
    let toy = toy(2, 40, 10);
    let cfg = TrainConfig { epochs: 10, batch_size: 8, seed: 1, optimizer: OptimizerSpec::adam(1e-2), ..Default::default() };
    for model in [
        build_text_cnn::<f64>(&small_cnn(), toy.vocab_size, 2, 10, 5).unwrap(),
        build_dnn::<f64>(&small_dnn(), toy.vocab_size, 2, 10, 5).unwrap(),
    ] {
        let arch = model.architecture();
        let (_, hist) = train(model, &toy.train, &toy.valid, &cfg, &toy.ctx).unwrap();
        let best = hist.epochs.iter().filter_map(|e| e.val_accuracy).fold(0.0, f64::max);
        assert_eq!(best, 1.0, "{arch}: {hist:?}");
    }
}

#[test]
fn training_is_deterministic() {
    let toy = toy(3, 20, 8);
    let cfg = TrainConfig { epochs: 3, batch_size: 5, seed: 9, ..Default::default() };
    let run = || {
        let m = build_text_cnn::<f64>(&small_cnn(), toy.vocab_size, 3, 8, 2).unwrap();
        let (w, h) = train(m, &toy.train, &toy.valid, &cfg, &toy.ctx).unwrap();
        (w.digest().unwrap(), h)
    };
    assert_eq!(run(), run());
}

#[test]
fn training_preconditions() {
    let toy = toy(2, 10, 6);
    let m = build_dnn::<f64>(&small_dnn(), toy.vocab_size, 2, 6, 0).unwrap();
    let cfg = TrainConfig { epochs: 0, ..Default::default() };
    assert!(matches!(train(m.clone(), &toy.train, &toy.valid, &cfg, &toy.ctx), Err(Error::InvalidArgument(_))));
    assert!(train(m, &[], &toy.valid, &TrainConfig::default(), &toy.ctx).is_err());
}

#[test]
fn full_batch_sgd_loss_is_non_increasing() {
    let toy = toy(2, 20, 8);
    let refs: Vec<&TokenSequence> = toy.train.iter().collect();
    let (ids, labels) = batch_of(&refs).unwrap();
    for mut model in [
        build_text_cnn::<f64>(&small_cnn(), toy.vocab_size, 2, 8, 7).unwrap(),
        build_dnn::<f64>(&small_dnn(), toy.vocab_size, 2, 8, 7).unwrap(),
    ] {
        let mut opt = Optimizer::new(OptimizerSpec::sgd(1e-3)).unwrap();
        let mut prev = model.loss(&ids, &labels).unwrap();
        for step in 0..50 {
            model.zero_grad();
            model.accumulate_gradients(&ids, &labels, None).unwrap();
            opt.step(&mut model.parameters_mut()).unwrap();
            let now = model.loss(&ids, &labels).unwrap();
            assert!(now <= prev, "{} step {step}: {now} > {prev}", model.architecture());
            prev = now;
        }
    }
}

fn trained_weights() -> (ModelWeights, Toy) {
    let toy = toy(3, 20, 8);
    let cfg = TrainConfig { epochs: 2, batch_size: 6, seed: 4, ..Default::default() };
    let m = build_text_cnn::<f64>(&small_cnn(), toy.vocab_size, 3, 8, 2).unwrap();
    (train(m, &toy.train, &toy.valid, &cfg, &toy.ctx).unwrap().0, toy)
}

#[test]
fn weights_round_trip_is_bit_exact() {
    let (w, _) = trained_weights();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    save_weights(&w, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back, w);
    assert_eq!(back.digest().unwrap(), w.digest().unwrap());
    assert_eq!(back.config.architecture(), Architecture::TextCnn);
}

#[test]
fn corrupted_files_fail_with_distinct_errors() {
    let (w, _) = trained_weights();
    let bytes = w.to_bytes().unwrap();

    let mut flipped = bytes.clone();
    let mid = bytes.len() - 40;
    flipped[mid] ^= 0x01;
    assert!(matches!(ModelWeights::from_bytes(&flipped), Err(Error::Checksum { .. })));

    assert!(matches!(ModelWeights::from_bytes(&bytes[..bytes.len() / 2]), Err(Error::Truncated(_))));
    assert!(matches!(ModelWeights::from_bytes(&bytes[..10]), Err(Error::Truncated(_))));

    // Rewrite the manifest with a future version and recompute the trailer.
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let manifest = std::str::from_utf8(&bytes[16..16 + len]).unwrap();
    let bumped = manifest.replacen("\"format_version\":1", "\"format_version\":9", 1);
    assert_ne!(bumped, manifest);
    let mut future = bytes[..16].to_vec();
    future.extend_from_slice(bumped.as_bytes());
    future.extend_from_slice(&bytes[16 + len..bytes.len() - 4]);
    let crc = crc32c::crc32c(&future);
    future.extend_from_slice(&crc.to_le_bytes());
    assert!(matches!(ModelWeights::from_bytes(&future), Err(Error::UnsupportedVersion { found: 9, .. })));
}

#[test]
fn prediction_rejects_foreign_vocabulary() {
    let (w, toy) = trained_weights();
    assert!(matches!(predict(&w, &toy.valid, "deadbeef"), Err(Error::VocabularyMismatch { .. })));
    let preds = predict(&w, &toy.valid, &w.vocab_hash).unwrap();
    for p in &preds {
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.confidence, p.probabilities[p.class_index]);
    }
    assert_eq!(preds, predict(&w, &toy.valid, &w.vocab_hash).unwrap());
}

#[test]
fn overfit_model_recalls_its_training_rows() {
    let toy = toy(3, 10, 8);
    let cfg = TrainConfig { epochs: 40, batch_size: 4, seed: 2, early_stop_patience: 40, ..Default::default() };
    let m = build_text_cnn::<f64>(&small_cnn(), toy.vocab_size, 3, 8, 3).unwrap();
    let (w, _) = train(m, &toy.train, &[], &cfg, &toy.ctx).unwrap();
    let preds = predict(&w, &toy.train, &w.vocab_hash).unwrap();
    for (p, s) in preds.iter().zip(&toy.train) {
        assert_eq!(p.class_index, s.label_id);
    }
}

#[test]
fn fresh_model_confidence_is_near_uniform() {
    let c = 4;
    let model: Model<Real> = build_dnn(&small_dnn(), 50, c, 10, 8).unwrap();
    let ctx = ModelContext { vocab_hash: "h".into(), class_list: (0..c).map(|i| format!("{i:06}")).collect() };
    let meta = TrainingMetadata {
        seed: 8,
        epochs_run: 0,
        best_epoch: 0,
        final_loss: 0.0,
        optimizer: OptimizerSpec::default(),
        batch_size: 1,
        initialization: "glorot_uniform".into(),
    };
    let w = ModelWeights::from_model(&model, &ctx, meta);
    let mut r = hscls_core::rng::seeded(1);
    let inputs: Vec<TokenSequence> = (0..1000)
        .map(|i| TokenSequence {
            ids: (0..10).map(|_| r.gen_range(0..50)).collect(),
            label_id: i % c,
            original_record_id: i.to_string(),
        })
        .collect();
    let conf: Vec<f64> = predict(&w, &inputs, "h").unwrap().iter().map(|p| p.confidence).collect();
    let n = conf.len() as f64;
    let mean = conf.iter().sum::<f64>() / n;
    let sd = (conf.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // The max of C near-equal probabilities sits just above 1/C.
    assert!(mean >= 1.0 / c as f64);
    assert!(mean - 1.0 / c as f64 <= 3.0 * sd.max(1e-3) + 0.1, "mean {mean} sd {sd}");
}
