use ircut::data::{cct_range, load_checkpoint, load_dataset, save_checkpoint, save_dataset, synth_tc_dataset, Checkpoint, SceneRecipe};
use ircut::model::{Architecture, InputNorm, SpectralNet};
use ircut::spectral::{BandGrid, SensorResponse};
use ircut::train::{split_dataset, train, TrainConfig};
use tempfile::TempDir;

fn recipes(n: u64, size: usize) -> Vec<SceneRecipe> {
    (0..n).map(|s| SceneRecipe::new(40 + s, BandGrid::input_default(), size)).collect()
}

fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        patch_size: 16,
        epochs: 2,
        steps_per_epoch: Some(3),
        input_norm: InputNorm::Global(4.0),
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn dataset_survives_disk() {
    let grid = BandGrid::input_default();
    let ccts = cct_range(4000.0, 6000.0, 1000.0).unwrap();
    let r = recipes(2, 16);
    let scenes = synth_tc_dataset(&r, &ccts, &grid).unwrap();
    let dir = TempDir::new().unwrap();
    save_dataset(dir.path(), 3, &r, &ccts, &scenes).unwrap();
    let (manifest, loaded) = load_dataset(dir.path()).unwrap();
    assert_eq!(manifest.scenes.len(), 6);
    assert_eq!(loaded.len(), 6);
    for (a, b) in scenes.iter().zip(&loaded) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.cct, b.cct);
        // Payload is f32.
        for (x, y) in a.radiance.values().iter().zip(b.radiance.values()) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-6));
        }
    }
}

#[test]
fn training_is_reproducible_and_checkpoints_restore() {
    let grid = BandGrid::input_default();
    let scenes = synth_tc_dataset(&recipes(3, 32), &[5000.0, 7000.0], &grid).unwrap();
    let refs: Vec<_> = scenes.iter().map(|s| &s.radiance).collect();
    let split = split_dataset(&refs, 16, 9).unwrap();
    assert_eq!(split, split_dataset(&refs, 16, 9).unwrap());
    let run = || {
        let net = SpectralNet::new(Architecture::compact(), SensorResponse::silicon_default(grid), 9).unwrap();
        train(net, &scenes, &split, &config(9)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.best.params(), b.best.params());
    assert_eq!(a.history, b.history);
    assert_eq!(a.rng_word_pos, b.rng_word_pos);
    assert_eq!(a.history.len(), 2);

    let dir = TempDir::new().unwrap();
    let path = dir.path().join("ck.json");
    save_checkpoint(&path, &Checkpoint { adam: Some(a.adam.clone()), ..Checkpoint::of(&a.best) }).unwrap();
    let restored = load_checkpoint(&path).unwrap().restore().unwrap();
    assert_eq!(restored.params(), a.best.params());
    let x = &scenes[0].radiance;
    assert_eq!(restored.reconstruct(x).unwrap().radiance, a.best.reconstruct(x).unwrap().radiance);
}

#[test]
fn empty_validation_falls_back_to_train_loss() {
    let grid = BandGrid::input_default();
    let scenes = synth_tc_dataset(&recipes(1, 16), &[6000.0], &grid).unwrap();
    let refs: Vec<_> = scenes.iter().map(|s| &s.radiance).collect();
    let split = split_dataset(&refs, 16, 1).unwrap();
    assert!(split.val.is_empty());
    let net = SpectralNet::new(Architecture::compact(), SensorResponse::silicon_default(grid), 1).unwrap();
    let out = train(net, &scenes, &split, &config(1)).unwrap();
    assert!(out.history.iter().all(|r| r.val_loss.is_none()));
    let best = out.history.iter().min_by(|a, b| a.train_loss.total_cmp(&b.train_loss)).unwrap();
    assert_eq!(best.epoch, out.best_epoch);
}
