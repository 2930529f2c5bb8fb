//! Seeded synthetic reflectance scenes and daylight-lit datasets.
//!
//! A scene mixes a handful of materials with smooth spatial weights. Each
//! material spectrum is a base level plus two Gaussian bumps and, for about
//! half the materials, a red edge: a sigmoid rise past ~700nm like the one
//! vegetation shows. The red edge ties the near-infrared bands to the deep
//! red ones, which is what makes the NIR flank informative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{Error, Result};
use crate::illuminant::{cie_daylight, DAYLIGHT_CCT_RANGE};
use crate::spectral::{compose_irss, BandGrid, SpectralCube};

/// Reflectance of the guaranteed white patch.
pub const WHITE_REFLECTANCE: f64 = 0.97;
/// Side of the white patch in pixels.
pub const WHITE_PATCH: usize = 3;

/// Parameters of one synthetic scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub seed: u64,
    /// Number of spatial blobs, one material each.
    pub blobs: usize,
    /// Scale in `[0, 1]` of the deviation from a flat grey; 0 gives a
    /// constant scene.
    pub smoothness: f64,
    pub grid: BandGrid,
    pub height: usize,
    pub width: usize,
    /// Paint a white patch (only when `smoothness > 0`).
    pub white_patch: bool,
    /// Probability that a material carries a red edge.
    #[serde(default = "default_red_edge")]
    pub red_edge: f64,
}

fn default_red_edge() -> f64 {
    0.5
}

impl SceneRecipe {
    pub fn new(seed: u64, grid: BandGrid, size: usize) -> Self {
        SceneRecipe {
            seed,
            blobs: 5,
            smoothness: 1.0,
            grid,
            height: size,
            width: size,
            white_patch: true,
            red_edge: default_red_edge(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.smoothness) {
            return Err(Error::domain(format!("smoothness {} outside [0, 1]", self.smoothness)));
        }
        if !(0.0..=1.0).contains(&self.red_edge) {
            return Err(Error::domain(format!("red-edge probability {} outside [0, 1]", self.red_edge)));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::domain("scene must have at least one pixel"));
        }
        Ok(())
    }

    /// Upper bound on `Σ (r_i − r_{i−1})²` for every pixel spectrum.
    pub fn lag_bound(&self) -> f64 {
        let (_, materials) = self.materials();
        let worst = materials
            .iter()
            .map(|m| m.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        (self.smoothness * worst).powi(2)
    }

    /// Flat grey level and one spectrum per material, background first.
    fn materials(&self) -> (f64, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let grey = rng.gen_range(0.2..0.5);
        let (lo, hi) = (self.grid.start_nm(), self.grid.end_nm().max(self.grid.start_nm() + 1.0));
        let materials = (0..=self.blobs)
            .map(|_| {
                let base = rng.gen_range(0.05..0.45);
                let bumps: Vec<(f64, f64, f64)> = (0..2)
                    .map(|_| (rng.gen_range(-0.25..0.45), rng.gen_range(lo..hi), rng.gen_range(30.0..110.0)))
                    .collect();
                let edge = rng.gen_bool(self.red_edge.clamp(0.0, 1.0)).then(|| (rng.gen_range(0.2..0.5), rng.gen_range(690.0..720.0)));
                self.grid
                    .wavelengths()
                    .map(|nm| {
                        let mut v = base;
                        for &(a, c, w) in &bumps {
                            v += a * (-0.5 * ((nm - c) / w).powi(2)).exp();
                        }
                        if let Some((a, c)) = edge {
                            v += a / (1.0 + (-(nm - c) / 12.0).exp());
                        }
                        v.clamp(0.02, 0.92)
                    })
                    .collect()
            })
            .collect();
        (grey, materials)
    }
}

/// Deterministic reflectance cube with values in `[0, 1]`.
pub fn synth_reflectance(recipe: &SceneRecipe) -> Result<SpectralCube> {
    recipe.validate()?;
    let (h, w, m) = (recipe.height, recipe.width, recipe.grid.count());
    let (grey, materials) = recipe.materials();
    // Spatial layout draws from its own stream so it does not shift when the
    // material model changes.
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed ^ 0x5eed_b10b);
    let side = h.min(w) as f64;
    let blobs: Vec<(f64, f64, f64)> = (0..recipe.blobs)
        .map(|_| {
            (
                rng.gen_range(0.0..h as f64),
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.1..0.35) * side,
            )
        })
        .collect();
    let s = recipe.smoothness;
    let mut values = Vec::with_capacity(h * w * m);
    let mut weights = vec![0.0; recipe.blobs + 1];
    for y in 0..h {
        for x in 0..w {
            weights[0] = 0.15;
            for (k, &(cy, cx, r)) in blobs.iter().enumerate() {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                weights[k + 1] = (-0.5 * d2 / (r * r)).exp();
            }
            let total: f64 = weights.iter().sum();
            for b in 0..m {
                let mix: f64 = weights.iter().zip(&materials).map(|(wk, mk)| wk * mk[b]).sum::<f64>() / total;
                values.push((grey + s * (mix - grey)).clamp(0.0, 1.0));
            }
        }
    }
    if recipe.white_patch && s > 0.0 {
        let py = rng.gen_range(0..=h.saturating_sub(WHITE_PATCH));
        let px = rng.gen_range(0..=w.saturating_sub(WHITE_PATCH));
        for y in py..(py + WHITE_PATCH).min(h) {
            for x in px..(px + WHITE_PATCH).min(w) {
                let at = (y * w + x) * m;
                values[at..at + m].fill(WHITE_REFLECTANCE);
            }
        }
    }
    SpectralCube::new(recipe.grid, h, w, values)
}

/// Daylight CCTs `start, start+step, …` up to and including `end`.
pub fn cct_range(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || end < start {
        return Err(Error::domain(format!("invalid CCT range {start}:{end}:{step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    let ccts: Vec<f64> = (0..=n).map(|i| start + i as f64 * step).collect();
    let (lo, hi) = DAYLIGHT_CCT_RANGE;
    if ccts.iter().any(|c| !(lo..=hi).contains(c)) {
        return Err(Error::domain(format!("CCT range {start}:{end} leaves {lo}-{hi}K")));
    }
    Ok(ccts)
}

/// Every reflectance scene lit by every daylight CCT, scene-major. Scene `i`
/// under `cct` gets id `scene{i:03}_{cct}K`.
pub fn synth_tc_dataset(recipes: &[SceneRecipe], ccts: &[f64], grid: &BandGrid) -> Result<Vec<Scene>> {
    let lights = ccts
        .iter()
        .map(|&c| cie_daylight(c, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(recipes.len() * ccts.len());
    for (i, recipe) in recipes.iter().enumerate() {
        let recipe = SceneRecipe {
            grid: *grid,
            ..recipe.clone()
        };
        let reflectance = synth_reflectance(&recipe)?;
        for (light, &cct) in lights.iter().zip(ccts) {
            out.push(Scene {
                id: format!("scene{i:03}_{}K", cct.round() as i64),
                radiance: compose_irss(&reflectance, light.curve())?,
                illuminant: Some(light.curve().clone()),
                cct: Some(cct),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::decompose_irss_oracle;

    fn recipe(seed: u64) -> SceneRecipe {
        SceneRecipe::new(seed, BandGrid::input_default(), 24)
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_reflectance(&recipe(4)).unwrap(), synth_reflectance(&recipe(4)).unwrap());
        assert_ne!(synth_reflectance(&recipe(4)).unwrap(), synth_reflectance(&recipe(5)).unwrap());
    }

    #[test]
    fn values_in_unit_range_with_white_pixel() {
        let c = synth_reflectance(&recipe(1)).unwrap();
        assert!(c.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(c.spectra().any(|s| s.iter().all(|v| *v >= 0.95)));
    }

    #[test]
    fn zero_smoothness_is_constant() {
        let r = SceneRecipe {
            smoothness: 0.0,
            ..recipe(2)
        };
        let c = synth_reflectance(&r).unwrap();
        let first = c.values()[0];
        assert!(c.values().iter().all(|v| *v == first));
        assert_eq!(r.lag_bound(), 0.0);
    }

    #[test]
    fn lag_difference_below_bound() {
        for seed in 0..5 {
            let r = SceneRecipe {
                smoothness: 0.6,
                ..recipe(seed)
            };
            let c = synth_reflectance(&r).unwrap();
            let bound = r.lag_bound();
            for s in c.spectra() {
                let lag: f64 = s.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
                assert!(lag <= bound + 1e-12, "{lag} > {bound}");
            }
        }
    }

    #[test]
    fn five_ccts_per_scene() {
        let ccts = cct_range(4000.0, 8000.0, 1000.0).unwrap();
        assert_eq!(ccts, vec![4000.0, 5000.0, 6000.0, 7000.0, 8000.0]);
        let scenes = synth_tc_dataset(&[recipe(0), recipe(1)], &ccts, &BandGrid::input_default()).unwrap();
        assert_eq!(scenes.len(), 10);
        assert_eq!(scenes[6].id, "scene001_5000K");
        assert!(cct_range(3000.0, 8000.0, 1000.0).is_err());
        assert!(cct_range(8000.0, 4000.0, 1000.0).is_err());
    }

    #[test]
    fn flat_reflectance_gives_spd_everywhere() {
        let grid = BandGrid::input_default();
        let light = cie_daylight(6500.0, &grid).unwrap();
        let flat = SpectralCube::from_fn(grid, 2, 2, |_, _, _| 1.0).unwrap();
        let cube = compose_irss(&flat, light.curve()).unwrap();
        assert!(cube.spectra().all(|s| s == light.curve().values()));
    }

    #[test]
    fn oracle_recovers_spd_shape() {
        let ccts = [4000.0, 7000.0];
        let scenes = synth_tc_dataset(&[recipe(3)], &ccts, &BandGrid::input_default()).unwrap();
        for s in &scenes {
            let (_, l) = decompose_irss_oracle(&s.radiance);
            let truth = s.illuminant.as_ref().unwrap();
            let k = l.values()[0] / truth.values()[0];
            for (a, b) in l.values().iter().zip(truth.values()) {
                assert!((a - k * b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
