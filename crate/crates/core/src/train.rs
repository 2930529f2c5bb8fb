//! Adam, patch tiling, dataset splits and the joint training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::Scene;
use crate::error::{Error, Result};
use crate::model::{cubes_to_tensor, tensor_to_cubes, Bound, InputNorm, Mode, ParamSet, SpectralNet};
use crate::objective::{loss_illum, loss_mse, loss_smooth, metric_rmse, LossWeights};
use crate::spectral::{BandGrid, SpectralCube, SpectralCurve};

/// Fraction of images held out for testing.
pub const TEST_FRACTION: f64 = 0.25;
/// Fraction of non-test patches used for validation.
pub const VAL_FRACTION: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub epochs: usize,
    /// Batches per epoch. `None` makes one pass over the training patches.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    pub input_norm: InputNorm,
    pub illumination: bool,
    pub weights: LossWeights,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            patch_size: 32,
            epochs: 10,
            steps_per_epoch: None,
            seed: 0,
            input_norm: InputNorm::None,
            illumination: true,
            weights: LossWeights::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::domain("batch and patch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::domain("Adam needs betas in [0, 1) and eps > 0"));
        }
        self.weights.validate()
    }
}

/// Adam moments for every tensor of a [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite or misshapen.
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((id, name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() || state.m[id.0].shape() != p.shape() {
            return Err(Error::Contract(format!("gradient shape {:?} for `{name}` {:?}", g.shape(), p.shape())));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of `{name}`")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for (id, g) in ids.into_iter().zip(grads) {
        let m = state.m[id.0].data_mut();
        let v = state.v[id.0].data_mut();
        let p = params.get_mut(id).data_mut();
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= lr * mh / (vh.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// A square crop of one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchRef {
    pub image: usize,
    pub y: usize,
    pub x: usize,
}

/// Offsets `0, stride, 2·stride, …` plus a final tile aligned to the end.
fn tile_offsets(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|o| o + patch <= dim).collect();
    if out.last().map_or(true, |&o| o + patch < dim) {
        out.push(dim - patch);
    }
    out
}

/// Tiles every image with `patch`-sized squares, row-major within an image.
pub fn extract_patches(images: &[&SpectralCube], patch: usize, stride: usize) -> Result<Vec<PatchRef>> {
    if patch == 0 || stride == 0 {
        return Err(Error::domain("patch and stride must be at least 1"));
    }
    let mut out = Vec::new();
    for (i, img) in images.iter().enumerate() {
        if patch > img.height() || patch > img.width() {
            return Err(Error::domain(format!(
                "patch {patch} larger than image {i} ({}x{})",
                img.height(),
                img.width()
            )));
        }
        for y in tile_offsets(img.height(), patch, stride) {
            for x in tile_offsets(img.width(), patch, stride) {
                out.push(PatchRef { image: i, y, x });
            }
        }
    }
    Ok(out)
}

/// Held-out test images plus train/validation patches from the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub patch_size: usize,
    pub train: Vec<PatchRef>,
    pub val: Vec<PatchRef>,
    pub test: Vec<usize>,
}

/// Seeded split: `round(25%)` of images go to test, the remaining images are
/// tiled and the shuffled patches split 85/15 into train and validation.
pub fn split_dataset(images: &[&SpectralCube], patch: usize, seed: u64) -> Result<DatasetSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut rng);
    let n_test = (images.len() as f64 * TEST_FRACTION).round() as usize;
    let mut test = order[..n_test].to_vec();
    test.sort_unstable();
    let mut keep: Vec<usize> = order[n_test..].to_vec();
    keep.sort_unstable();
    let kept: Vec<&SpectralCube> = keep.iter().map(|&i| images[i]).collect();
    let mut patches: Vec<PatchRef> = extract_patches(&kept, patch, patch)?
        .into_iter()
        .map(|p| PatchRef { image: keep[p.image], ..p })
        .collect();
    patches.shuffle(&mut rng);
    let n_val = (patches.len() as f64 * VAL_FRACTION).round() as usize;
    let val = patches.split_off(patches.len() - n_val);
    Ok(DatasetSplit {
        patch_size: patch,
        train: patches,
        val,
        test,
    })
}

/// Tensors for one optimization or evaluation step.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `(n, M_in, p, p)` scene radiance fed to the camera.
    pub radiance: Tensor,
    /// `(n, M_out, p, p)` reconstruction target.
    pub target: Tensor,
    /// Mean-normalized truth SPD on the output grid, per patch.
    pub illuminants: Option<Vec<SpectralCurve>>,
}

impl Batch {
    pub fn from_patches(scenes: &[Scene], patches: &[PatchRef], size: usize, output: &BandGrid) -> Result<Batch> {
        let mut crops = Vec::with_capacity(patches.len());
        let mut targets = Vec::with_capacity(patches.len());
        let mut illum = Vec::with_capacity(patches.len());
        for p in patches {
            let scene = scenes
                .get(p.image)
                .ok_or_else(|| Error::Contract(format!("patch refers to missing image {}", p.image)))?;
            let crop = scene.radiance.crop(p.y, p.x, size, size)?;
            targets.push(crop.select_bands(output)?);
            crops.push(crop);
            illum.push(match &scene.illuminant {
                Some(l) => Some(l.select_bands(output)?.mean_normalized()),
                None => None,
            });
        }
        let illuminants = illum.into_iter().collect::<Option<Vec<_>>>();
        Ok(Batch {
            radiance: cubes_to_tensor(&crops.iter().collect::<Vec<_>>())?,
            target: cubes_to_tensor(&targets.iter().collect::<Vec<_>>())?,
            illuminants,
        })
    }

    pub fn len(&self) -> usize {
        self.radiance.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss terms of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub total: f64,
    /// Plain reconstruction MSE, without weight decay.
    pub reconstruction: f64,
    pub smooth: f64,
    pub illumination: f64,
}

/// Failures of the training loop.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}, step {step}: {source}")]
    Diverged {
        epoch: usize,
        step: u64,
        source: Error,
        /// Parameters before the failing step.
        last_good: Box<SpectralNet>,
    },
    #[error(transparent)]
    Other(#[from] Error),
}

/// The full training objective on `batch`: reconstruction MSE with weight
/// decay, filter smoothness and, when the net predicts one, illumination
/// supervision.
pub fn build_loss(
    net: &SpectralNet,
    tape: &mut Tape,
    bound: &Bound,
    batch: &Batch,
    w: &LossWeights,
    mode: Mode,
) -> Result<(Var, StepLosses)> {
    let x = tape.constant(batch.radiance.clone());
    let target = tape.constant(batch.target.clone());
    let rgb = net.simulate_rgb(tape, bound, x)?;
    let pred = net.forward(tape, bound, rgb, mode)?;
    let plain = loss_mse(tape, pred.radiance, target, &[], w)?;
    let reconstruction = tape.value(plain).item().unwrap_or(f64::NAN);
    let decayed = net.decay_vars(tape, bound)?;
    let mut total = if w.alpha1 > 0.0 {
        loss_mse(tape, pred.radiance, target, &decayed, w)?
    } else {
        plain
    };
    let filter = net.filter_var(tape, bound)?;
    let smooth_var = loss_smooth(tape, filter, w)?;
    let smooth = tape.value(smooth_var).item().unwrap_or(f64::NAN);
    total = tape.add(total, smooth_var)?;
    let mut illumination = 0.0;
    if let (Some(l), Some(truth)) = (pred.illuminant, &batch.illuminants) {
        let li = loss_illum(tape, l, truth, w)?;
        illumination = tape.value(li).item().unwrap_or(f64::NAN);
        total = tape.add(total, li)?;
    }
    let value = tape.value(total).item().unwrap_or(f64::NAN);
    Ok((
        total,
        StepLosses {
            total: value,
            reconstruction,
            smooth,
            illumination,
        },
    ))
}

/// Owns a network and its optimizer state; advances one batch at a time.
#[derive(Clone, Debug)]
pub struct Trainer {
    net: SpectralNet,
    config: TrainConfig,
    adam: AdamState,
}

impl Trainer {
    pub fn new(mut net: SpectralNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.illumination != net.has_illumination_branch() {
            return Err(Error::Contract(format!(
                "config illumination flag {} but network {} an illumination branch",
                config.illumination,
                if net.has_illumination_branch() { "has" } else { "lacks" }
            )));
        }
        net.set_input_norm(config.input_norm);
        let adam = AdamState::new(net.params(), config.beta1, config.beta2, config.eps);
        Ok(Trainer { net, config, adam })
    }

    pub fn net(&self) -> &SpectralNet {
        &self.net
    }

    pub fn into_net(self) -> SpectralNet {
        self.net
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn losses(&self, tape: &mut Tape, batch: &Batch, mode: Mode, trainable: bool) -> Result<(Var, StepLosses, Bound)> {
        let bound = self.net.bind(tape, trainable);
        let (total, losses) = build_loss(&self.net, tape, &bound, batch, &self.config.weights, mode)?;
        if !losses.total.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        Ok((total, losses, bound))
    }

    /// One Adam step on `batch`, with dropout seeded by `dropout_seed`.
    pub fn step(&mut self, batch: &Batch, dropout_seed: u64) -> Result<StepLosses> {
        if self.config.illumination && batch.illuminants.is_none() {
            return Err(Error::Contract("illumination supervision needs a truth SPD for every scene".into()));
        }
        let mut tape = Tape::new();
        let (loss, losses, bound) = self.losses(&mut tape, batch, Mode::Train { seed: dropout_seed }, true)?;
        let mut grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = self
            .net
            .params()
            .iter()
            .map(|(id, _, t)| grads.take(bound.var(id)).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        let lr = self.config.learning_rate;
        adam_step(self.net.params_mut(), &grads, &mut self.adam, lr)?;
        Ok(losses)
    }

    /// Losses on `batch` in evaluation mode, without updating anything.
    pub fn evaluate(&self, batch: &Batch) -> Result<StepLosses> {
        let mut tape = Tape::new();
        self.losses(&mut tape, batch, Mode::Eval, false).map(|(_, l, _)| l)
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation set is empty.
    pub val_loss: Option<f64>,
    pub val_rmse: Option<f64>,
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Network at the epoch with the lowest validation MSE (training loss
    /// when there is no validation set).
    pub best: SpectralNet,
    pub best_epoch: usize,
    pub last: SpectralNet,
    pub history: Vec<EpochRecord>,
    pub adam: AdamState,
    /// Word position of the shuffling RNG after the last step.
    pub rng_word_pos: u128,
}

/// Validation MSE and mean per-patch RMSE (0–255 scale).
pub fn validate(
    trainer: &Trainer,
    scenes: &[Scene],
    patches: &[PatchRef],
    size: usize,
    batch_size: usize,
) -> Result<Option<(f64, f64)>> {
    if patches.is_empty() {
        return Ok(None);
    }
    let grid = *trainer.net().output_grid();
    let (mut sse, mut count, mut rmse_sum) = (0.0, 0usize, 0.0);
    for chunk in patches.chunks(batch_size.max(1)) {
        let batch = Batch::from_patches(scenes, chunk, size, &grid)?;
        let mut tape = Tape::new();
        let bound = trainer.net().bind(&mut tape, false);
        let x = tape.constant(batch.radiance.clone());
        let rgb = trainer.net().simulate_rgb(&mut tape, &bound, x)?;
        let pred = trainer.net().forward(&mut tape, &bound, rgb, Mode::Eval)?;
        let p = tape.value(pred.radiance);
        sse += p.data().iter().zip(batch.target.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += p.len();
        let clamped = Tensor::new(p.shape().to_vec(), p.data().iter().map(|v| v.max(0.0)).collect())?;
        let preds = tensor_to_cubes(&clamped, grid)?;
        let truths = tensor_to_cubes(&batch.target, grid)?;
        for (pc, tc) in preds.iter().zip(&truths) {
            rmse_sum += metric_rmse(pc, tc)?;
        }
    }
    Ok(Some((sse / count as f64, rmse_sum / patches.len() as f64)))
}

/// Trains `net` on the train patches of `split`, selecting the epoch with
/// the lowest validation MSE.
pub fn train(
    net: SpectralNet,
    scenes: &[Scene],
    split: &DatasetSplit,
    config: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainError> {
    if split.train.is_empty() {
        return Err(Error::domain("no training patches").into());
    }
    if split.patch_size != config.patch_size {
        return Err(Error::Contract(format!(
            "split tiled at {} but config patch size is {}",
            split.patch_size, config.patch_size
        ))
        .into());
    }
    for s in scenes {
        s.radiance.grid().ensure_same(net.input_grid())?;
        if config.illumination && s.illuminant.is_none() {
            return Err(Error::Contract(format!("scene `{}` has no illuminant", s.id)).into());
        }
    }
    let mut trainer = Trainer::new(net, config.clone())?;
    let output = *trainer.net().output_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, SpectralNet)> = None;
    let mut cursor = order.len();
    let bs = config.batch_size.min(order.len());

    for epoch in 1..=config.epochs {
        let batches: Vec<Vec<PatchRef>> = match config.steps_per_epoch {
            None => {
                order.shuffle(&mut rng);
                order.chunks(config.batch_size).map(<[PatchRef]>::to_vec).collect()
            }
            Some(k) => (0..k)
                .map(|_| {
                    let mut chunk = Vec::with_capacity(bs);
                    while chunk.len() < bs {
                        if cursor == order.len() {
                            order.shuffle(&mut rng);
                            cursor = 0;
                        }
                        chunk.push(order[cursor]);
                        cursor += 1;
                    }
                    chunk
                })
                .collect(),
        };
        let mut loss_sum = 0.0;
        for chunk in &batches {
            let batch = Batch::from_patches(scenes, chunk, config.patch_size, &output)?;
            let seed: u64 = rng.gen();
            let step = trainer.adam().step;
            match trainer.step(&batch, seed) {
                Ok(l) => loss_sum += l.total,
                Err(e @ Error::NonFinite(_)) => {
                    log::warn!("diverged at epoch {epoch}: {e}");
                    return Err(TrainError::Diverged {
                        epoch,
                        step,
                        source: e,
                        last_good: Box::new(trainer.into_net()),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
        let per_epoch = batches.len().max(1);
        let train_loss = loss_sum / per_epoch as f64;
        let val = validate(&trainer, scenes, &split.val, config.patch_size, config.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss: val.map(|v| v.0),
            val_rmse: val.map(|v| v.1),
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.6} val {:?} rmse {:?}",
            record.val_loss,
            record.val_rmse
        );
        history.push(record);
        let score = record.val_loss.unwrap_or(train_loss);
        if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
            best = Some((score, epoch, trainer.net().clone()));
        }
    }

    let (best_net, best_epoch) = match best {
        Some((_, e, n)) => (n, e),
        None => (trainer.net().clone(), 0),
    };
    Ok(TrainOutcome {
        best: best_net,
        best_epoch,
        adam: trainer.adam().clone(),
        last: trainer.into_net(),
        history,
        rng_word_pos: rng.get_word_pos(),
    })
}

/// Writes the history as CSV with columns `epoch,train_loss,val_loss,val_rmse`.
pub fn write_history_csv<W: std::io::Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "val_loss", "val_rmse"])
        .map_err(csv_io)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), opt(r.val_loss), opt(r.val_rmse)])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ReflectanceArch};
    use crate::spectral::SensorResponse;

    fn cube(h: usize, w: usize) -> SpectralCube {
        SpectralCube::zeros(BandGrid::input_default(), h, w)
    }

    #[test]
    fn exact_tiling() {
        let c = cube(64, 64);
        assert_eq!(extract_patches(&[&c], 32, 32).unwrap().len(), 4);
    }

    #[test]
    fn tail_aligned_tiling() {
        let c = cube(33, 33);
        let p = extract_patches(&[&c], 32, 32).unwrap();
        let offs: Vec<(usize, usize)> = p.iter().map(|p| (p.y, p.x)).collect();
        assert_eq!(offs, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert!(extract_patches(&[&c], 34, 34).is_err());
    }

    #[test]
    fn split_percentages() {
        let cubes: Vec<SpectralCube> = (0..100).map(|_| cube(64, 64)).collect();
        let refs: Vec<&SpectralCube> = cubes.iter().collect();
        let s = split_dataset(&refs, 32, 3).unwrap();
        assert_eq!(s.test.len(), 25);
        assert_eq!(s.train.len() + s.val.len(), 300);
        assert_eq!(s.val.len(), 45);
        assert!(s.train.iter().chain(&s.val).all(|p| !s.test.contains(&p.image)));
        assert_eq!(s, split_dataset(&refs, 32, 3).unwrap());
    }

    fn one_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::full(&[2], v));
        p
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = one_param(0.7);
        let mut s = AdamState::new(&p, 0.9, 0.999, 1e-8);
        for _ in 0..5 {
            adam_step(&mut p, &[Tensor::zeros(&[2])], &mut s, 1e-3).unwrap();
        }
        assert_eq!(p, one_param(0.7));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = one_param(0.0);
        let mut s = AdamState::new(&p, 0.9, 0.999, 1e-8);
        adam_step(&mut p, &[Tensor::full(&[2], 1.0)], &mut s, 1e-3).unwrap();
        let moved = p.iter().next().unwrap().2.data()[0];
        assert!((moved + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn adam_rejects_non_finite_and_names_param() {
        let mut p = one_param(0.0);
        let mut s = AdamState::new(&p, 0.9, 0.999, 1e-8);
        let err = adam_step(&mut p, &[Tensor::full(&[2], f64::NAN)], &mut s, 1e-3).unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(s.step, 0);
        assert_eq!(p, one_param(0.0));
    }

    #[test]
    fn history_csv_columns() {
        let h = [EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            val_loss: None,
            val_rmse: Some(2.0),
        }];
        let mut buf = Vec::new();
        write_history_csv(&h, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,val_loss,val_rmse\n1,0.5,,2\n");
    }

    #[test]
    fn config_flag_must_match_net() {
        let arch = Architecture {
            reflectance: ReflectanceArch {
                dense_blocks: 0,
                ..ReflectanceArch::default()
            },
            ..Architecture::compact().without_illumination()
        };
        let net = SpectralNet::new(arch, SensorResponse::silicon_default(BandGrid::input_default()), 0).unwrap();
        assert!(Trainer::new(net.clone(), TrainConfig::default()).is_err());
        let cfg = TrainConfig {
            illumination: false,
            ..TrainConfig::default()
        };
        assert!(Trainer::new(net, cfg).is_ok());
    }
}
