mod support;

use lesionseg::dataset::synthetic::synthesize;
use lesionseg::dataset::LesionClass;
use lesionseg::model::{build_model, load_checkpoint};
use lesionseg::training::{
    evaluate_loss, read_epoch_log, train, InMemorySamples, TrainConfig, TrainOutputs,
};

fn samples(seeds: &[u64], side: usize) -> InMemorySamples {
    let mut s = InMemorySamples::new();
    for &seed in seeds {
        let syn = synthesize(side, seed);
        s.push(format!("s{seed}"), syn.image, syn.masks[LesionClass::EX.index()].clone()).unwrap();
    }
    s
}

fn config() -> TrainConfig {
    TrainConfig::load(&support::fixture_dir().join("tiny.toml")).unwrap()
}

#[test]
fn fixture_config_parses() {
    let cfg = config();
    assert_eq!((cfg.image_size, cfg.batch_size, cfg.max_epochs), (64, 2, 2));
    assert_eq!(cfg.model.aspp_rates, vec![6, 12, 18]);
    assert_eq!(TrainConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(TrainConfig::from_toml_str("image_size = 64\nlearnin_rate = 0.1\n").is_err());
}

#[test]
fn zero_learning_rate_leaves_trainable_weights_untouched() {
    let mut cfg = config();
    cfg.learning_rate = 0.0;
    let set = samples(&[1, 2], 64);
    let model = build_model(&cfg.model_config()).unwrap();
    let before = model.store().clone();
    let out = train(model, &set, &set, &cfg, &TrainOutputs::default()).unwrap();
    let after = out.model.store();
    for id in before.ids() {
        let p = before.param(id);
        if p.trainable {
            let same = p.value.data().iter().zip(after.param(id).value.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{} changed", p.name);
        }
    }
}

#[test]
fn best_epoch_parameters_are_restored_and_checkpointed() {
    let mut cfg = config();
    cfg.max_epochs = 4;
    cfg.learning_rate = 5e-3;
    let train_set = samples(&[3, 4, 5], 64);
    let val_set = samples(&[6], 64);
    let dir = tempfile::tempdir().unwrap();
    let outputs = TrainOutputs {
        checkpoint: Some(dir.path().join("m.ckpt")),
        log_jsonl: Some(dir.path().join("log.jsonl")),
        loss_curve_png: Some(dir.path().join("loss.png")),
        lesion: Some(LesionClass::EX),
    };
    let out = train(build_model(&cfg.model_config()).unwrap(), &train_set, &val_set, &cfg, &outputs).unwrap();
    let best = out.best_epoch().unwrap();
    let best_val = out.log[best - 1].val_loss;
    assert!(out.log.iter().all(|e| e.val_loss >= best_val));
    let restored = evaluate_loss(&out.model, &val_set, cfg.batch_size).unwrap();
    assert!((restored - best_val).abs() <= 1e-12, "{restored} vs {best_val}");

    let ckpt = load_checkpoint(&dir.path().join("m.ckpt")).unwrap();
    assert_eq!(ckpt.meta.epoch, Some(best));
    assert_eq!(ckpt.preprocess, cfg.preprocess());
    let reloaded = evaluate_loss(&ckpt.model, &val_set, cfg.batch_size).unwrap();
    assert_eq!(reloaded.to_bits(), restored.to_bits());

    assert_eq!(read_epoch_log(&dir.path().join("log.jsonl")).unwrap(), out.log);
    assert!(dir.path().join("loss.png").is_file());
}

#[test]
fn mismatched_image_size_is_an_error() {
    let cfg = config();
    let set = samples(&[1], 32);
    assert!(train(build_model(&cfg.model_config()).unwrap(), &set, &set, &cfg, &TrainOutputs::default()).is_err());
}
