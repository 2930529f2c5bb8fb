use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ircut::data::{
    load_checkpoint, load_dataset, read_json, save_checkpoint, save_dataset, synth_tc_dataset, write_json,
    write_spectra_csv, Checkpoint, RngState, SceneRecipe, SPLIT_FILE,
};
use ircut::illuminant::{estimate_cct, white_world_spectrum};
use ircut::model::{Architecture, SpectralNet};
use ircut::objective::{image_metrics, metric_angular_error, normalized_spd_mse, ImageMetrics, LossWeights};
use ircut::plot::LineChart;
use ircut::spectral::{CurveKind, SensorResponse, SpectralCurve};
use ircut::train::{split_dataset, train as run_training, write_history_csv, DatasetSplit, TrainConfig, TrainError};

use crate::manifest::RunManifest;
use crate::{ArchChoice, CliError, EvalArgs, PlotArgs, PlotKind, Switch, SynthArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

/// `dir/name.ext` → `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    if a.scenes == 0 {
        return Err(CliError::Usage("--scenes must be at least 1".into()));
    }
    if a.patch == 0 || a.patch > a.size {
        return Err(CliError::Usage(format!("--patch {} must be in 1..={}", a.patch, a.size)));
    }
    if !(0.0..=1.0).contains(&a.red_edge) {
        return Err(CliError::Usage("--red-edge must be in [0, 1]".into()));
    }
    let mut run = RunManifest::new(
        "synth",
        a.seed,
        serde_json::json!({
            "scenes": a.scenes, "ccts": a.ccts.0, "size": a.size, "patch": a.patch,
            "red_edge": a.red_edge, "white_patch": !a.no_white_patch,
        }),
    );
    run.phase("generate");
    let grid = Architecture::default().input_grid;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let recipes: Vec<SceneRecipe> = (0..a.scenes)
        .map(|_| SceneRecipe {
            red_edge: a.red_edge,
            white_patch: !a.no_white_patch,
            ..SceneRecipe::new(rng.gen(), grid, a.size)
        })
        .collect();
    let scenes = synth_tc_dataset(&recipes, &a.ccts.0, &grid)?;
    run.phase("write");
    save_dataset(&a.out, a.seed, &recipes, &a.ccts.0, &scenes)?;
    let refs: Vec<_> = scenes.iter().map(|s| &s.radiance).collect();
    let split = split_dataset(&refs, a.patch, a.seed)?;
    write_json(a.out.join(SPLIT_FILE), &split)?;
    run.output(&a.out);
    log::info!("wrote {} cubes to {}", scenes.len(), a.out.display());
    run.write(&a.out.join("run.json"))?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    if a.epochs == 0 || a.batch == 0 || !(a.lr > 0.0) {
        return Err(CliError::Usage("--epochs, --batch and --lr must be positive".into()));
    }
    let weights = LossWeights {
        alpha2: a.alpha2,
        alpha3: a.alpha3,
        ..LossWeights::default()
    };
    weights.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (manifest, scenes) = load_dataset(&a.data)?;
    let split: DatasetSplit = read_json(a.data.join(SPLIT_FILE))?;
    let illumination = a.illum_branch == Switch::On;
    let mut arch = match a.arch {
        ArchChoice::Default => Architecture::default(),
        ArchChoice::Compact => Architecture::compact(),
    };
    if !illumination {
        arch = arch.without_illumination();
    }
    let sensor = SensorResponse::silicon_default(manifest.grid);
    let mut net = SpectralNet::new(arch, sensor, a.seed)?;
    if let Some(nm) = a.freeze_above_nm.0 {
        let n = net.freeze_bands(|w| w > nm, 0.0)?;
        log::info!("froze {n} filter bands above {nm}nm");
    }
    let config = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        patch_size: split.patch_size,
        epochs: a.epochs,
        steps_per_epoch: a.steps_per_epoch,
        seed: a.seed,
        input_norm: a.input_norm,
        illumination,
        weights,
        ..TrainConfig::default()
    };
    let mut run = RunManifest::new("train", a.seed, &config);
    run.input(&a.data);
    run.phase("train");
    let outcome = match run_training(net, &scenes, &split, &config) {
        Ok(o) => o,
        Err(TrainError::Diverged { epoch, step, source, last_good }) => {
            let path = sibling(&a.out, "last_good.json");
            save_checkpoint(&path, &Checkpoint::of(&last_good))?;
            return Err(CliError::Diverged(format!(
                "training diverged at epoch {epoch}, step {step}: {source}; last good state in {}",
                path.display()
            )));
        }
        Err(TrainError::Other(e)) => return Err(e.into()),
    };
    run.phase("write");
    let ckpt = Checkpoint {
        adam: Some(outcome.adam.clone()),
        rng: Some(RngState {
            seed: a.seed,
            word_pos: outcome.rng_word_pos,
        }),
        config: Some(config.clone()),
        split: Some(split),
        best_epoch: Some(outcome.best_epoch),
        ..Checkpoint::of(&outcome.best)
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_checkpoint(&a.out, &ckpt)?;
    let history = sibling(&a.out, "history.csv");
    write_history_csv(&outcome.history, fs::File::create(&history)?)?;
    let filter = sibling(&a.out, "filter.csv");
    write_spectra_csv(&filter, &outcome.best.export_filter(), "transmittance")?;
    for p in [&a.out, &history, &filter] {
        run.output(p);
    }
    run.write(&sibling(&a.out, "run.json"))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct IllumRow {
    image_id: String,
    truth_cct: f64,
    est_cct: Option<f64>,
    mse: f64,
    ae: f64,
    white_world_est_cct: Option<f64>,
    white_world_mse: f64,
    white_world_ae: f64,
}

#[derive(Debug, Serialize)]
struct CctRow {
    truth_cct: f64,
    images: usize,
    est_cct: Option<f64>,
    mse: f64,
    ae: f64,
    white_world_est_cct: Option<f64>,
    white_world_mse: f64,
    white_world_ae: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    images: usize,
    mean_rmse: f64,
    /// `null` when every image is reconstructed exactly.
    mean_psnr: f64,
    mean_ssim: f64,
    illumination: Vec<CctRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let all: Option<Vec<f64>> = v.collect();
    all.filter(|a| !a.is_empty()).map(|a| mean(a.into_iter()))
}

/// CCT estimate of a possibly negative prediction; `None` when undefined.
fn cct_of(curve: &SpectralCurve) -> Option<f64> {
    let clamped: Vec<f64> = curve.values().iter().map(|v| v.max(0.0)).collect();
    SpectralCurve::new(*curve.grid(), CurveKind::Spd, clamped)
        .ok()
        .and_then(|c| estimate_cct(&c).ok())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let net = ckpt.restore()?;
    let (manifest, scenes) = load_dataset(&a.data)?;
    manifest.grid.ensure_same(net.input_grid())?;
    let split: Option<DatasetSplit> = read_json(a.data.join(SPLIT_FILE)).ok();
    let images: Vec<usize> = match split {
        Some(s) if !a.all && !s.test.is_empty() => s.test,
        _ => (0..scenes.len()).collect(),
    };
    let mut run = RunManifest::new(
        "eval",
        a.seed,
        serde_json::json!({ "all": a.all, "truth_as_prediction": a.truth_as_prediction }),
    );
    run.input(&a.ckpt);
    run.input(&a.data);
    run.phase("evaluate");
    let out_grid = *net.output_grid();
    let mut metrics: Vec<(String, ImageMetrics)> = Vec::new();
    let mut illum: Vec<IllumRow> = Vec::new();
    // cct → (truth, predicted sum, white-world sum, count)
    let mut spectra: BTreeMap<i64, (Vec<f64>, Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for &i in &images {
        let scene = &scenes[i];
        let truth = scene.radiance.select_bands(&out_grid)?;
        let (pred, pred_l) = if a.truth_as_prediction {
            let l = scene.illuminant.as_ref().map(|l| l.select_bands(&out_grid)).transpose()?;
            (truth.clone(), l)
        } else {
            let rec = net.reconstruct(&scene.radiance)?;
            (rec.radiance, rec.illuminant)
        };
        metrics.push((scene.id.clone(), image_metrics(&pred, &truth)?));
        let (Some(truth_l), Some(cct)) = (&scene.illuminant, scene.cct) else { continue };
        let truth_l = truth_l.select_bands(&out_grid)?.mean_normalized();
        let ww = white_world_spectrum(&truth);
        let (mse, ae, est) = match &pred_l {
            Some(p) => {
                let clamped: Vec<f64> = p.values().iter().map(|v| v.max(0.0)).collect();
                (
                    normalized_spd_mse(&clamped, truth_l.values()).unwrap_or(f64::NAN),
                    metric_angular_error(p.values(), truth_l.values()).unwrap_or(f64::NAN),
                    cct_of(p),
                )
            }
            None => (f64::NAN, f64::NAN, None),
        };
        illum.push(IllumRow {
            image_id: scene.id.clone(),
            truth_cct: cct,
            est_cct: est,
            mse,
            ae,
            white_world_est_cct: cct_of(&ww),
            white_world_mse: normalized_spd_mse(ww.values(), truth_l.values())?,
            white_world_ae: metric_angular_error(ww.values(), truth_l.values())?,
        });
        let m = out_grid.count();
        let entry = spectra
            .entry(cct.round() as i64)
            .or_insert_with(|| (truth_l.values().to_vec(), vec![0.0; m], vec![0.0; m], 0));
        if let Some(p) = &pred_l {
            entry.1.iter_mut().zip(p.values()).for_each(|(s, v)| *s += v);
        }
        entry.2.iter_mut().zip(ww.values()).for_each(|(s, v)| *s += v);
        entry.3 += 1;
    }

    run.phase("write");
    fs::create_dir_all(&a.report)?;
    let mut w = csv::Writer::from_path(a.report.join("metrics.csv")).map_err(csv_err)?;
    w.write_record(["image_id", "rmse", "psnr", "ssim"]).map_err(csv_err)?;
    for (id, m) in &metrics {
        w.write_record([id.clone(), m.rmse.to_string(), m.psnr.to_string(), m.ssim.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;

    let mut by_cct: BTreeMap<i64, Vec<&IllumRow>> = BTreeMap::new();
    for r in &illum {
        by_cct.entry(r.truth_cct.round() as i64).or_default().push(r);
    }
    let table: Vec<CctRow> = by_cct
        .iter()
        .map(|(_, rows)| CctRow {
            truth_cct: rows[0].truth_cct,
            images: rows.len(),
            est_cct: mean_opt(rows.iter().map(|r| r.est_cct)),
            mse: mean(rows.iter().map(|r| r.mse)),
            ae: mean(rows.iter().map(|r| r.ae)),
            white_world_est_cct: mean_opt(rows.iter().map(|r| r.white_world_est_cct)),
            white_world_mse: mean(rows.iter().map(|r| r.white_world_mse)),
            white_world_ae: mean(rows.iter().map(|r| r.white_world_ae)),
        })
        .collect();
    if !illum.is_empty() {
        let mut w = csv::Writer::from_path(a.report.join("illumination.csv")).map_err(csv_err)?;
        for r in &illum {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(a.report.join("illum_spectra.csv")).map_err(csv_err)?;
        let mut header = vec!["wavelength_nm".to_string()];
        for cct in spectra.keys() {
            header.extend([format!("truth_{cct}K"), format!("predicted_{cct}K"), format!("white_world_{cct}K")]);
        }
        w.write_record(&header).map_err(csv_err)?;
        for (b, nm) in out_grid.wavelengths().enumerate() {
            let mut row = vec![nm.to_string()];
            for (truth, pred, ww, n) in spectra.values() {
                let n = *n as f64;
                row.extend([truth[b].to_string(), (pred[b] / n).to_string(), (ww[b] / n).to_string()]);
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let summary = Summary {
        images: metrics.len(),
        mean_rmse: mean(metrics.iter().map(|(_, m)| m.rmse)),
        mean_psnr: mean(metrics.iter().map(|(_, m)| m.psnr)),
        mean_ssim: mean(metrics.iter().map(|(_, m)| m.ssim)),
        illumination: table,
    };
    write_json(a.report.join("summary.json"), &summary)?;
    run.output(&a.report);
    run.write(&a.report.join("run.json"))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Data(ircut::Error::Io(std::io::Error::other(e)))
}

pub fn plot(a: PlotArgs) -> Result<()> {
    let input = fs::File::open(&a.input)?;
    let mut chart = match a.what {
        PlotKind::Filter => {
            let mut c = LineChart::new("Learned IR-cut filter", "wavelength (nm)", "transmittance");
            c.y_range = Some((0.0, 1.0));
            c.add_csv(input, None)?;
            c
        }
        PlotKind::Illum => {
            let mut c = LineChart::new("Illumination spectra", "wavelength (nm)", "relative power");
            c.add_csv(input, None)?;
            c
        }
        PlotKind::History => {
            let mut c = LineChart::new("Training history", "epoch", "loss");
            c.add_csv(input, Some(&["train_loss", "val_loss"]))?;
            c
        }
    };
    chart.series.retain(|s| !s.points.is_empty());
    let svg = chart.to_svg()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, svg)?;
    Ok(())
}
