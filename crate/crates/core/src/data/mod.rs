//! File formats, synthetic scenes, datasets and checkpoints.

mod cube_file;
mod spectra_csv;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cube_file::{decode_cube, encode_cube, read_cube, write_cube, CubeHeader, ValueKind, CUBE_MAGIC};
pub use spectra_csv::{parse_spectra_csv, read_spectra_csv, write_spectra, write_spectra_csv, VALUE_DECIMALS};
pub use synth::{cct_range, synth_reflectance, synth_tc_dataset, SceneRecipe, WHITE_PATCH, WHITE_REFLECTANCE};

use crate::error::{Error, Result};
use crate::model::{NetSnapshot, SpectralNet};
use crate::spectral::{BandGrid, CurveKind, SpectralCube, SpectralCurve};
use crate::train::{AdamState, DatasetSplit, TrainConfig};

/// A radiance cube with its optional ground-truth illuminant.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: String,
    pub radiance: SpectralCube,
    pub illuminant: Option<SpectralCurve>,
    pub cct: Option<f64>,
}

impl Scene {
    pub fn header(&self) -> CubeHeader {
        CubeHeader {
            illuminant_cct: self.cct,
            illuminant: self.illuminant.as_ref().map(|l| l.values().to_vec()),
            ..CubeHeader::for_cube(&self.radiance, ValueKind::Radiance, self.id.clone())
        }
    }

    pub fn from_file(header: CubeHeader, radiance: SpectralCube) -> Result<Scene> {
        let illuminant = match header.illuminant {
            Some(v) => Some(SpectralCurve::new(header.grid, CurveKind::Spd, v)?),
            None => None,
        };
        Ok(Scene {
            id: header.scene_id,
            radiance,
            illuminant,
            cct: header.illuminant_cct,
        })
    }
}

/// One cube file listed in a dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Path relative to the manifest's directory.
    pub file: String,
    pub recipe_seed: u64,
    pub cct: Option<f64>,
}

/// Index of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub grid: BandGrid,
    pub recipes: Vec<SceneRecipe>,
    pub ccts: Vec<f64>,
    pub scenes: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "dataset.json";
pub const SPLIT_FILE: &str = "split.json";

/// Writes `serde_json` pretty output followed by a newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Writes every scene as a cube file plus the manifest into `dir`.
pub fn save_dataset(dir: &Path, manifest_seed: u64, recipes: &[SceneRecipe], ccts: &[f64], scenes: &[Scene]) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let grid = *scenes
        .first()
        .ok_or_else(|| Error::Contract("no scenes to save".into()))?
        .radiance
        .grid();
    let per_recipe = ccts.len().max(1);
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, s) in scenes.iter().enumerate() {
        let file = format!("{}.hsc", s.id);
        write_cube(dir.join(&file), &s.header(), &s.radiance)?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            file,
            recipe_seed: recipes.get(i / per_recipe).map_or(0, |r| r.seed),
            cct: s.cct,
        });
    }
    let manifest = DatasetManifest {
        seed: manifest_seed,
        grid,
        recipes: recipes.to_vec(),
        ccts: ccts.to_vec(),
        scenes: entries,
    };
    write_json(dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads the manifest and every cube it lists, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<Scene>)> {
    let manifest: DatasetManifest = read_json(dir.join(MANIFEST_FILE))?;
    let scenes = manifest
        .scenes
        .iter()
        .map(|e| {
            let (header, cube) = read_cube(dir.join(&e.file))?;
            cube.grid().ensure_same(&manifest.grid)?;
            Scene::from_file(header, cube)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, scenes))
}

/// Position of the training shuffler, enough to rebuild it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

/// Everything needed to resume or evaluate a trained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub net: NetSnapshot,
    pub adam: Option<AdamState>,
    pub rng: Option<RngState>,
    pub config: Option<TrainConfig>,
    pub split: Option<DatasetSplit>,
    pub best_epoch: Option<usize>,
}

pub const CHECKPOINT_FORMAT: &str = "ircut-checkpoint-1";

impl Checkpoint {
    pub fn of(net: &SpectralNet) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            net: net.snapshot(),
            adam: None,
            rng: None,
            config: None,
            split: None,
            best_epoch: None,
        }
    }

    pub fn restore(&self) -> Result<SpectralNet> {
        SpectralNet::from_snapshot(self.net.clone())
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    write_json(path, ckpt)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let ckpt: Checkpoint = read_json(path)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Format {
            offset: 0,
            msg: format!("unknown checkpoint format `{}`", ckpt.format),
        });
    }
    Ok(ckpt)
}
