//! The learnable camera and reconstruction network.
//!
//! A [`SpectralNet`] bundles
//!
//! 1. the IR-cut filter, a per-band transmittance `C = sigmoid(raw)` with
//!    optionally frozen bands,
//! 2. the fixed sensor sensitivities,
//! 3. an optional illumination branch predicting one SPD `L̂` per image,
//! 4. a reflectance branch predicting a non-negative cube `R̂`.
//!
//! With the illumination branch present the reconstruction is
//! `D̂ = R̂ * L̂`, broadcast over the spatial axes; without it `D̂ = R̂`.

mod branches;
mod params;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use branches::{IlluminationArch, IlluminationBranch, Mode, ReflectanceArch, ReflectanceBranch};
pub use params::{Bound, ParamId, ParamSet};

use crate::autodiff::{sigmoid, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::spectral::{BandGrid, CurveKind, RgbImage, SensorResponse, SpectralCube, SpectralCurve};

/// How RGB input is scaled before entering the branches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum InputNorm {
    #[default]
    None,
    /// Divide each image by its largest channel value. The scale factor is
    /// treated as a constant by the gradient.
    PerImageMax,
    /// Multiply every image by a fixed constant.
    Global(f64),
}

/// Everything needed to rebuild a network's layer structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_grid: BandGrid,
    pub output_grid: BandGrid,
    pub illumination: Option<IlluminationArch>,
    pub reflectance: ReflectanceArch,
    #[serde(default)]
    pub input_norm: InputNorm,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_grid: BandGrid::input_default(),
            output_grid: BandGrid::output_default(),
            illumination: Some(IlluminationArch::default()),
            reflectance: ReflectanceArch::default(),
            input_norm: InputNorm::None,
        }
    }
}

impl Architecture {
    /// A narrow variant of the default layout for quick CPU experiments.
    pub fn compact() -> Self {
        Architecture {
            illumination: Some(IlluminationArch {
                stage_channels: vec![8, 16, 32],
                se_reduction: 4,
                transition_width: 32,
            }),
            reflectance: ReflectanceArch {
                starter_layers: 2,
                starter_width: 16,
                dense_blocks: 1,
                dense_layers: 2,
                growth: 8,
                dropout: 0.1,
            },
            ..Architecture::default()
        }
    }

    pub fn without_illumination(mut self) -> Self {
        self.illumination = None;
        self
    }
}

/// Filter bookkeeping next to the raw parameter stored in the [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    raw: ParamId,
    frozen_mask: Vec<bool>,
    frozen_value: Vec<f64>,
}

impl FilterParams {
    pub fn raw(&self) -> ParamId {
        self.raw
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen_mask
    }

    pub fn frozen_value(&self) -> &[f64] {
        &self.frozen_value
    }
}

/// Outputs of one forward pass, as tape variables.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    /// Reconstructed radiance `(n, bands, h, w)`.
    pub radiance: Var,
    /// Predicted illuminant `(n, bands, 1, 1)`, when the branch is on.
    pub illuminant: Option<Var>,
    /// Predicted reflectance `(n, bands, h, w)`.
    pub reflectance: Var,
}

/// Reconstruction of a single image, detached from any tape.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// `D̂` with negative entries clamped to zero.
    pub radiance: SpectralCube,
    pub illuminant: Option<SpectralCurve>,
    pub reflectance: SpectralCube,
}

/// The joint filter-plus-network model.
#[derive(Clone, Debug)]
pub struct SpectralNet {
    arch: Architecture,
    params: ParamSet,
    filter: FilterParams,
    sensor: SensorResponse,
    illumination: Option<IlluminationBranch>,
    reflectance: ReflectanceBranch,
}

/// Serializable form of a [`SpectralNet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSnapshot {
    pub architecture: Architecture,
    pub sensor: SensorResponse,
    pub frozen_mask: Vec<bool>,
    pub frozen_value: Vec<f64>,
    pub params: ParamSet,
}

impl SpectralNet {
    /// Builds a network and initializes every parameter from `seed`.
    pub fn new(arch: Architecture, sensor: SensorResponse, seed: u64) -> Result<Self> {
        sensor.grid().ensure_same(&arch.input_grid)?;
        arch.input_grid.sub_grid_offset(&arch.output_grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let m_in = arch.input_grid.count();
        let m_out = arch.output_grid.count();

        // C = sigmoid(raw) starts uniformly inside [0.25, 0.75].
        let lo = logit(0.25);
        let hi = logit(0.75);
        let raw = params.insert(
            "filter.raw",
            Tensor::from_fn(&[1, m_in, 1, 1], |_| rng.gen_range(lo..hi)),
        );
        let filter = FilterParams {
            raw,
            frozen_mask: vec![false; m_in],
            frozen_value: vec![0.0; m_in],
        };
        let illumination = match &arch.illumination {
            Some(a) => Some(IlluminationBranch::new(a, m_out, &mut params, &mut rng)?),
            None => None,
        };
        let reflectance = ReflectanceBranch::new(&arch.reflectance, m_out, &mut params, &mut rng)?;
        Ok(SpectralNet {
            arch,
            params,
            filter,
            sensor,
            illumination,
            reflectance,
        })
    }

    pub fn from_snapshot(snapshot: NetSnapshot) -> Result<Self> {
        let mut net = SpectralNet::new(snapshot.architecture, snapshot.sensor, 0)?;
        let m = net.arch.input_grid.count();
        if snapshot.frozen_mask.len() != m || snapshot.frozen_value.len() != m {
            return Err(Error::Contract("frozen filter bands do not match the input grid".into()));
        }
        if snapshot.frozen_value.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain("frozen transmittance outside [0, 1]"));
        }
        net.params.load_from(&snapshot.params)?;
        net.filter.frozen_mask = snapshot.frozen_mask;
        net.filter.frozen_value = snapshot.frozen_value;
        Ok(net)
    }

    pub fn snapshot(&self) -> NetSnapshot {
        NetSnapshot {
            architecture: self.arch.clone(),
            sensor: self.sensor.clone(),
            frozen_mask: self.filter.frozen_mask.clone(),
            frozen_value: self.filter.frozen_value.clone(),
            params: self.params.clone(),
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn set_input_norm(&mut self, norm: InputNorm) {
        self.arch.input_norm = norm;
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn filter(&self) -> &FilterParams {
        &self.filter
    }

    pub fn sensor(&self) -> &SensorResponse {
        &self.sensor
    }

    pub fn input_grid(&self) -> &BandGrid {
        &self.arch.input_grid
    }

    pub fn output_grid(&self) -> &BandGrid {
        &self.arch.output_grid
    }

    pub fn has_illumination_branch(&self) -> bool {
        self.illumination.is_some()
    }

    /// Smallest square input the network can process.
    pub fn min_input_size(&self) -> usize {
        self.illumination.as_ref().map_or(1, |b| b.min_input_size())
    }

    /// Tape values that weight decay applies to: every parameter except the
    /// filter, with the non-negative projection taken as its effective
    /// `softplus(raw)` weights rather than the raw values.
    pub fn decay_vars(&self, tape: &mut Tape, bound: &Bound) -> Result<Vec<Var>> {
        let head = self.reflectance.head;
        let mut vars: Vec<Var> = self
            .params
            .ids()
            .filter(|id| *id != self.filter.raw && *id != head)
            .map(|id| bound.var(id))
            .collect();
        vars.push(tape.softplus(bound.var(head))?);
        Ok(vars)
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        Bound::new(&self.params, tape, trainable)
    }

    /// Effective transmittance values, frozen bands included.
    pub fn effective_filter(&self) -> Vec<f64> {
        let raw = self.params.get(self.filter.raw).data();
        raw.iter()
            .zip(&self.filter.frozen_mask)
            .zip(&self.filter.frozen_value)
            .map(|((&r, &frozen), &v)| if frozen { v } else { sigmoid(r) })
            .collect()
    }

    /// The learned filter on the input grid.
    pub fn export_filter(&self) -> SpectralCurve {
        SpectralCurve::new(self.arch.input_grid, CurveKind::Transmittance, self.effective_filter())
            .expect("sigmoid and frozen values lie in [0, 1]")
    }

    /// Pins every band whose wavelength satisfies `predicate` to `value`.
    /// Returns the number of bands frozen by this call.
    pub fn freeze_bands(&mut self, predicate: impl Fn(f64) -> bool, value: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::domain(format!("frozen transmittance {value} outside [0, 1]")));
        }
        let mut count = 0;
        for (i, nm) in self.arch.input_grid.wavelengths().enumerate() {
            if predicate(nm) {
                self.filter.frozen_mask[i] = true;
                self.filter.frozen_value[i] = value;
                count += 1;
            }
        }
        Ok(count)
    }

    /// Effective filter as a `(1, bands, 1, 1)` tape variable.
    pub fn filter_var(&self, tape: &mut Tape, bound: &Bound) -> Result<Var> {
        let m = self.arch.input_grid.count();
        let raw = bound.var(self.filter.raw);
        let c = tape.sigmoid(raw)?;
        if !self.filter.frozen_mask.iter().any(|f| *f) {
            return Ok(c);
        }
        let free: Vec<f64> = self.filter.frozen_mask.iter().map(|&f| if f { 0.0 } else { 1.0 }).collect();
        let pinned: Vec<f64> = self
            .filter
            .frozen_mask
            .iter()
            .zip(&self.filter.frozen_value)
            .map(|(&f, &v)| if f { v } else { 0.0 })
            .collect();
        let free = tape.constant(Tensor::new(vec![1, m, 1, 1], free)?);
        let pinned = tape.constant(Tensor::new(vec![1, m, 1, 1], pinned)?);
        let c = tape.mul(c, free)?;
        tape.add(c, pinned)
    }

    /// Differentiable camera: `(n, M_in, h, w)` radiance → `(n, 3, h, w)` RGB.
    pub fn simulate_rgb(&self, tape: &mut Tape, bound: &Bound, cube: Var) -> Result<Var> {
        let m = self.arch.input_grid.count();
        let (_, c, _, _) = tape.value(cube).dims4("simulate_rgb")?;
        if c != m {
            return Err(Error::IncompatibleGrid {
                left: self.arch.input_grid,
                right: BandGrid::new(self.arch.input_grid.start_nm(), self.arch.input_grid.step_nm(), c.max(1))?,
            });
        }
        let filter = self.filter_var(tape, bound)?;
        let filtered = tape.mul(cube, filter)?;
        let k: Vec<f64> = self.sensor.channels().iter().flat_map(|c| c.iter().copied()).collect();
        let k = tape.constant(Tensor::new(vec![3, m, 1, 1], k)?);
        tape.conv2d_1x1(filtered, k)
    }

    fn normalize_input(&self, tape: &mut Tape, rgb: Var) -> Result<Var> {
        match self.arch.input_norm {
            InputNorm::None => Ok(rgb),
            InputNorm::Global(k) => tape.scale(rgb, k),
            InputNorm::PerImageMax => {
                let t = tape.value(rgb);
                let (n, _, _, _) = t.dims4("normalize_input")?;
                let per = t.len() / n.max(1);
                let scales: Vec<f64> = t
                    .data()
                    .chunks_exact(per.max(1))
                    .map(|img| {
                        let max = img.iter().copied().fold(0.0, f64::max);
                        if max > 0.0 { 1.0 / max } else { 1.0 }
                    })
                    .collect();
                let s = tape.constant(Tensor::new(vec![n, 1, 1, 1], scales)?);
                tape.mul(rgb, s)
            }
        }
    }

    /// Runs both branches on `(n, 3, h, w)` RGB.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, rgb: Var, mode: Mode) -> Result<Prediction> {
        let (_, c, h, w) = tape.value(rgb).dims4("forward")?;
        if c != 3 {
            return Err(Error::shape("forward", &[tape.shape(rgb)]));
        }
        let min = self.min_input_size();
        if h < min || w < min {
            return Err(Error::domain(format!("input {h}x{w} smaller than {min}x{min}")));
        }
        let x = self.normalize_input(tape, rgb)?;
        let reflectance = self.reflectance.forward(tape, bound, x, mode)?;
        let (radiance, illuminant) = match &self.illumination {
            Some(branch) => {
                let l = branch.forward(tape, bound, x)?;
                let d = tape.mul(reflectance, l).map_err(|e| e.in_layer("compose"))?;
                (d, Some(l))
            }
            None => (reflectance, None),
        };
        Ok(Prediction {
            radiance,
            illuminant,
            reflectance,
        })
    }

    /// Camera simulation of a single cube, outside any training graph.
    pub fn simulate_rgb_image(&self, cube: &SpectralCube) -> Result<RgbImage> {
        cube.grid().ensure_same(&self.arch.input_grid)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(cubes_to_tensor(&[cube])?);
        let rgb = self.simulate_rgb(&mut tape, &bound, x)?;
        rgb_from_tensor(tape.value(rgb))
    }

    /// Simulates the camera on `cube` and reconstructs it.
    pub fn reconstruct(&self, cube: &SpectralCube) -> Result<Reconstruction> {
        cube.grid().ensure_same(&self.arch.input_grid)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(cubes_to_tensor(&[cube])?);
        let rgb = self.simulate_rgb(&mut tape, &bound, x)?;
        let pred = self.forward(&mut tape, &bound, rgb, Mode::Eval)?;
        let grid = self.arch.output_grid;
        let clamp = |t: &Tensor| -> Result<SpectralCube> {
            let clamped = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v.max(0.0)).collect())?;
            Ok(tensor_to_cubes(&clamped, grid)?.remove(0))
        };
        let illuminant = match pred.illuminant {
            Some(l) => Some(SpectralCurve::new(grid, CurveKind::Unconstrained, tape.value(l).data().to_vec())?),
            None => None,
        };
        Ok(Reconstruction {
            radiance: clamp(tape.value(pred.radiance))?,
            illuminant,
            reflectance: clamp(tape.value(pred.reflectance))?,
        })
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Stacks band-last cubes into one `(n, bands, h, w)` tensor.
pub fn cubes_to_tensor(cubes: &[&SpectralCube]) -> Result<Tensor> {
    let first = cubes.first().ok_or_else(|| Error::Contract("no cubes to stack".into()))?;
    let (m, h, w) = (first.bands(), first.height(), first.width());
    let hw = h * w;
    let mut data = vec![0.0; cubes.len() * m * hw];
    for (n, cube) in cubes.iter().enumerate() {
        cube.grid().ensure_same(first.grid())?;
        if (cube.height(), cube.width()) != (h, w) {
            return Err(Error::domain("stacked cubes differ in size"));
        }
        let base = n * m * hw;
        for (p, spectrum) in cube.spectra().enumerate() {
            for (b, v) in spectrum.iter().enumerate() {
                data[base + b * hw + p] = *v;
            }
        }
    }
    Tensor::new(vec![cubes.len(), m, h, w], data)
}

/// Splits an `(n, bands, h, w)` tensor into band-last cubes on `grid`.
pub fn tensor_to_cubes(t: &Tensor, grid: BandGrid) -> Result<Vec<SpectralCube>> {
    let (n, m, h, w) = t.dims4("tensor_to_cubes")?;
    if m != grid.count() {
        return Err(Error::domain(format!("tensor has {m} bands, grid {grid}")));
    }
    let hw = h * w;
    (0..n)
        .map(|b| {
            let block = &t.data()[b * m * hw..(b + 1) * m * hw];
            SpectralCube::from_fn(grid, h, w, |y, x, band| block[band * hw + y * w + x])
        })
        .collect()
}

/// First image of an `(n, 3, h, w)` tensor as an [`RgbImage`].
pub fn rgb_from_tensor(t: &Tensor) -> Result<RgbImage> {
    let (_, c, h, w) = t.dims4("rgb_from_tensor")?;
    if c != 3 {
        return Err(Error::shape("rgb_from_tensor", &[t.shape()]));
    }
    let hw = h * w;
    let d = t.data();
    let values = (0..hw).flat_map(|p| (0..3).map(move |ch| d[ch * hw + p])).collect();
    RgbImage::new(h, w, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::forward_project;

    fn net(arch: Architecture) -> SpectralNet {
        SpectralNet::new(arch, SensorResponse::silicon_default(BandGrid::input_default()), 7).unwrap()
    }

    fn random_cube(seed: u64, h: usize, w: usize) -> SpectralCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralCube::from_fn(BandGrid::input_default(), h, w, |_, _, _| rng.gen_range(0.0..1.5)).unwrap()
    }

    #[test]
    fn fresh_filter_lies_in_init_band() {
        let n = net(Architecture::compact());
        assert!(n.effective_filter().iter().all(|c| (0.25..=0.75).contains(c)));
    }

    #[test]
    fn zero_raw_gives_flat_half() {
        let mut n = net(Architecture::compact());
        let raw = n.filter.raw;
        n.params_mut().get_mut(raw).data_mut().fill(0.0);
        let curve = n.export_filter();
        assert!(curve.values().iter().all(|c| *c == 0.5));
        assert_eq!(curve.kind(), CurveKind::Transmittance);
    }

    #[test]
    fn freeze_above_720_zeroes_nir() {
        let mut n = net(Architecture::compact());
        let frozen = n.freeze_bands(|nm| nm > 720.0, 0.0).unwrap();
        assert_eq!(frozen, 5);
        let c = n.export_filter();
        assert!(c.values()[31..].iter().all(|v| *v == 0.0));
        assert!(c.values()[..31].iter().all(|v| *v > 0.0));
        assert!(n.freeze_bands(|_| true, 1.5).is_err());
        assert_eq!(n.freeze_bands(|_| false, 0.0).unwrap(), 0);
    }

    #[test]
    fn transparent_filter_matches_bare_projection() {
        let mut n = net(Architecture::compact());
        n.freeze_bands(|_| true, 1.0).unwrap();
        let cube = random_cube(1, 3, 4);
        let ones = SpectralCurve::constant(BandGrid::input_default(), CurveKind::Transmittance, 1.0).unwrap();
        let expected = forward_project(&cube, &ones, n.sensor()).unwrap();
        let got = n.simulate_rgb_image(&cube).unwrap();
        for (a, b) in got.values().iter().zip(expected.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn frozen_band_gets_zero_gradient() {
        let mut n = net(Architecture::compact());
        n.freeze_bands(|nm| nm == 500.0, 0.0).unwrap();
        let mut tape = Tape::new();
        let bound = n.bind(&mut tape, true);
        let cube = tape.constant(cubes_to_tensor(&[&random_cube(2, 2, 2)]).unwrap());
        let rgb = n.simulate_rgb(&mut tape, &bound, cube).unwrap();
        let s = tape.sum(rgb).unwrap();
        let g = tape.backward(s).unwrap();
        let graw = g.get(bound.var(n.filter.raw)).unwrap().data();
        assert_eq!(graw[8], 0.0);
        assert!(graw.iter().enumerate().filter(|(i, _)| *i != 8).all(|(_, v)| *v > 0.0));
    }

    #[test]
    fn branch_off_returns_reflectance() {
        let n = net(Architecture::compact().without_illumination());
        let mut tape = Tape::new();
        let bound = n.bind(&mut tape, false);
        let rgb = tape.constant(Tensor::full(&[1, 3, 8, 8], 0.3));
        let p = n.forward(&mut tape, &bound, rgb, Mode::Eval).unwrap();
        assert!(p.illuminant.is_none());
        assert_eq!(p.radiance, p.reflectance);
    }

    #[test]
    fn output_shapes_for_64_patch() {
        let n = net(Architecture::default());
        let mut tape = Tape::new();
        let bound = n.bind(&mut tape, false);
        let rgb = tape.constant(Tensor::full(&[1, 3, 64, 64], 0.2));
        let p = n.forward(&mut tape, &bound, rgb, Mode::Eval).unwrap();
        assert_eq!(tape.shape(p.radiance), &[1, 31, 64, 64]);
        assert_eq!(tape.shape(p.illuminant.unwrap()), &[1, 31, 1, 1]);
    }

    #[test]
    fn zero_input_gives_non_negative_output() {
        let n = net(Architecture::compact());
        let mut tape = Tape::new();
        let bound = n.bind(&mut tape, false);
        let rgb = tape.constant(Tensor::zeros(&[2, 3, 16, 16]));
        let p = n.forward(&mut tape, &bound, rgb, Mode::Eval).unwrap();
        let d = tape.value(p.radiance).data();
        assert!(d.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn rejects_wrong_channel_count_and_tiny_inputs() {
        let n = net(Architecture::compact());
        let mut tape = Tape::new();
        let bound = n.bind(&mut tape, false);
        let four = tape.constant(Tensor::zeros(&[1, 4, 16, 16]));
        assert!(n.forward(&mut tape, &bound, four, Mode::Eval).is_err());
        let tiny = tape.constant(Tensor::zeros(&[1, 3, 4, 4]));
        assert!(n.forward(&mut tape, &bound, tiny, Mode::Eval).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut n = net(Architecture::compact());
        n.freeze_bands(|nm| nm > 720.0, 0.0).unwrap();
        let again = SpectralNet::from_snapshot(n.snapshot()).unwrap();
        assert_eq!(again.snapshot(), n.snapshot());
    }

    #[test]
    fn cube_tensor_layout_round_trip() {
        let cube = random_cube(5, 3, 2);
        let t = cubes_to_tensor(&[&cube, &cube]).unwrap();
        assert_eq!(t.shape(), &[2, 36, 3, 2]);
        assert_eq!(t.data()[1 * 6 + 2 * 2 + 1], cube.get(2, 1, 1));
        let back = tensor_to_cubes(&t, BandGrid::input_default()).unwrap();
        assert_eq!(back[1], cube);
    }
}
