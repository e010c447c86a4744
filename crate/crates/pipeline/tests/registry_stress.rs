use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::thread;

use hscls_core::corpus::build_vocabulary;
use hscls_core::models::{
    build_model, save_weights, ArchitectureConfig, DnnConfig, ModelContext, ModelWeights, TrainingMetadata,
};
use hscls_core::nn::OptimizerSpec;
use hscls_pipeline::fsutil;
use hscls_pipeline::registry::{EntryStatus, Provenance, RegisterRequest, Registry};

fn request(dir: &Path, seed: u64, run_id: Option<&str>) -> RegisterRequest {
    let vocab = build_vocabulary(&["pump valve seal"], 10).unwrap();
    let cfg = ArchitectureConfig::Dnn(DnnConfig { embedding_dim: 4, initial_neurons: 4, ..DnnConfig::paper_base() });
    let model = build_model::<f64>(&cfg, vocab.len(), 2, 4, seed).unwrap();
    let ctx = ModelContext { vocab_hash: vocab.hash(), class_list: vec!["111111".into(), "222222".into()] };
    let meta = TrainingMetadata {
        seed,
        epochs_run: 0,
        best_epoch: 0,
        final_loss: 0.0,
        optimizer: OptimizerSpec::adam(1e-3),
        batch_size: 1,
        initialization: "glorot_uniform".into(),
    };
    let w = ModelWeights::from_model(&model, &ctx, meta);
    let wp = dir.join(format!("w{seed}.bin"));
    save_weights(&w, &wp).unwrap();
    let vp = dir.join("vocab.txt");
    vocab.save(&vp).unwrap();
    RegisterRequest {
        weights: wp,
        vocab: vp,
        reference: None,
        reports: vec![],
        holdout_accuracy: Some(0.5),
        provenance: Provenance {
            run_id: run_id.map(String::from),
            data_sha256: None,
            data_path: None,
            seed,
            config_hash: "h".into(),
        },
    }
}

#[test]
fn readers_never_see_a_torn_promotion() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("registry");
    let reg = Registry::open(&root).unwrap();
    for seed in 1..=3 {
        reg.register(&request(dir.path(), seed, None)).unwrap();
    }
    reg.promote(1).unwrap();

    let stop = AtomicBool::new(false);
    let reads = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..3 {
            s.spawn(|| {
                let reg = Registry::open(&root).unwrap();
                while !stop.load(Ordering::SeqCst) {
                    let entry = reg.active().unwrap().expect("an active version at all times");
                    assert_eq!(entry.status, EntryStatus::Active);
                    let digest = fsutil::file_digest(&reg.weights_path(entry.version())).unwrap();
                    assert_eq!(digest, entry.manifest.weights_sha256);
                    let listed = reg.list().unwrap();
                    assert_eq!(listed.iter().filter(|e| e.status == EntryStatus::Active).count(), 1);
                    reads.fetch_add(1, Ordering::SeqCst);
                }
            });
        }
        let writer = Registry::open(&root).unwrap();
        for i in 0..100u32 {
            let v = 1 + (i + 1) % 3;
            assert_eq!(writer.promote(v).unwrap().status, EntryStatus::Active);
        }
        stop.store(true, Ordering::SeqCst);
    });
    assert!(reads.load(Ordering::SeqCst) > 0);
    assert_eq!(reg.active_version().unwrap(), Some(2));
    let log = std::fs::read_to_string(root.join("PROMOTIONS")).unwrap();
    assert_eq!(log.lines().count(), 101);
}

#[test]
fn concurrent_registrations_get_distinct_versions() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("registry");
    let reqs: Vec<RegisterRequest> = (1..=8).map(|s| request(dir.path(), s, Some(&format!("run-{s}")))).collect();
    let versions: Vec<u32> = thread::scope(|s| {
        let handles: Vec<_> = reqs
            .iter()
            .map(|r| {
                let root = &root;
                s.spawn(move || Registry::open(root).unwrap().register(r).unwrap().version())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let unique: BTreeSet<u32> = versions.iter().copied().collect();
    assert_eq!(unique, (1..=8).collect());
    let reg = Registry::open(&root).unwrap();
    // same run id again: the existing version comes back
    let again = reg.register(&reqs[3]).unwrap();
    assert_eq!(again.version(), versions[3]);
    assert_eq!(reg.versions().unwrap().len(), 8);
    assert!(!std::fs::read_dir(&root).unwrap().flatten().any(|e| e.file_name().to_string_lossy().starts_with(".staging")));
}
