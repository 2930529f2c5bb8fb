//! Wavelength grids, spectral containers and the linear camera model.
//!
//! A camera with an IR-cut filter records, per pixel and colour channel,
//!
//! ```text
//! Y_c = Σ_i D0(i) · C(i) · K_c(i)
//! ```
//!
//! where `D0` is the scene radiance sampled on a [`BandGrid`], `C` the filter
//! transmittance and `K_c` the bare sensor sensitivity. The sum is a plain dot
//! product; any `Δλ` factor is folded into the sensor normalization.
//!
//! Radiance is in turn a per-band product of surface reflectance and the
//! illuminant SPD, see [`compose_irss`] and [`decompose_irss_oracle`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wavelength tolerance used when matching sample positions, in nm.
const NM_EPS: f64 = 1e-9;

/// A uniformly spaced wavelength axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandGrid {
    start_nm: f64,
    step_nm: f64,
    count: usize,
}

impl BandGrid {
    pub fn new(start_nm: f64, step_nm: f64, count: usize) -> Result<Self> {
        if !(step_nm > 0.0) || !start_nm.is_finite() || !step_nm.is_finite() {
            return Err(Error::domain(format!(
                "band grid needs a positive finite step, got start {start_nm} step {step_nm}"
            )));
        }
        if count == 0 {
            return Err(Error::domain("band grid needs at least one band"));
        }
        Ok(BandGrid {
            start_nm,
            step_nm,
            count,
        })
    }

    /// Grid spanning `first_nm..=last_nm` inclusive.
    pub fn spanning(first_nm: f64, last_nm: f64, step_nm: f64) -> Result<Self> {
        let n = ((last_nm - first_nm) / step_nm).round();
        if !(n >= 0.0) {
            return Err(Error::domain(format!(
                "empty wavelength span {first_nm}..{last_nm}"
            )));
        }
        Self::new(first_nm, step_nm, n as usize + 1)
    }

    /// The 420–770 nm input grid at 10 nm (36 bands).
    pub fn input_default() -> Self {
        BandGrid {
            start_nm: 420.0,
            step_nm: 10.0,
            count: 36,
        }
    }

    /// The 420–720 nm reconstruction grid at 10 nm (31 bands).
    pub fn output_default() -> Self {
        BandGrid {
            start_nm: 420.0,
            step_nm: 10.0,
            count: 31,
        }
    }

    pub fn start_nm(&self) -> f64 {
        self.start_nm
    }

    pub fn step_nm(&self) -> f64 {
        self.step_nm
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn end_nm(&self) -> f64 {
        self.wavelength(self.count - 1)
    }

    pub fn wavelength(&self, i: usize) -> f64 {
        self.start_nm + i as f64 * self.step_nm
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.wavelength(i))
    }

    /// Index of the band sitting exactly at `nm`, if any.
    pub fn index_of(&self, nm: f64) -> Option<usize> {
        let pos = (nm - self.start_nm) / self.step_nm;
        let i = pos.round();
        if i < 0.0 || i as usize >= self.count || (pos - i).abs() * self.step_nm > 1e-6 {
            return None;
        }
        Some(i as usize)
    }

    pub fn ensure_same(&self, other: &BandGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::IncompatibleGrid {
                left: *self,
                right: *other,
            })
        }
    }

    /// Offset of `sub` inside `self` when `sub` is a contiguous run of bands.
    pub fn sub_grid_offset(&self, sub: &BandGrid) -> Result<usize> {
        let mismatch = || Error::IncompatibleGrid {
            left: *self,
            right: *sub,
        };
        if (self.step_nm - sub.step_nm).abs() > NM_EPS {
            return Err(mismatch());
        }
        let offset = self.index_of(sub.start_nm).ok_or_else(mismatch)?;
        if offset + sub.count > self.count {
            return Err(mismatch());
        }
        Ok(offset)
    }
}

impl fmt::Display for BandGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}nm @{}nm ({} bands)",
            self.start_nm,
            self.end_nm(),
            self.step_nm,
            self.count
        )
    }
}

fn check_values(what: &str, values: &[f64], lo: f64, hi: f64) -> Result<()> {
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < lo || **v > hi)
    {
        return Err(Error::domain(format!(
            "{what} value {v} at index {i} outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Scene radiance or reflectance on a (height × width × band) grid.
///
/// Storage is band-last: the spectrum of pixel `(y, x)` is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCube {
    grid: BandGrid,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SpectralCube {
    pub fn new(grid: BandGrid, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let expected = height * width * grid.count();
        if values.len() != expected {
            return Err(Error::domain(format!(
                "cube {height}x{width}x{} needs {expected} values, got {}",
                grid.count(),
                values.len()
            )));
        }
        check_values("cube", &values, 0.0, f64::INFINITY)?;
        Ok(SpectralCube {
            grid,
            height,
            width,
            values,
        })
    }

    pub fn zeros(grid: BandGrid, height: usize, width: usize) -> Self {
        SpectralCube {
            grid,
            height,
            width,
            values: vec![0.0; height * width * grid.count()],
        }
    }

    /// Builds a cube from `f(y, x, band)`.
    pub fn from_fn(
        grid: BandGrid,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width * grid.count());
        for y in 0..height {
            for x in 0..width {
                for b in 0..grid.count() {
                    values.push(f(y, x, b));
                }
            }
        }
        Self::new(grid, height, width, values)
    }

    pub fn grid(&self) -> &BandGrid {
        &self.grid
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.grid.count()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, y: usize, x: usize, band: usize) -> f64 {
        self.values[(y * self.width + x) * self.grid.count() + band]
    }

    pub fn spectrum(&self, y: usize, x: usize) -> &[f64] {
        let m = self.grid.count();
        let at = (y * self.width + x) * m;
        &self.values[at..at + m]
    }

    pub fn spectra(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.grid.count())
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Copies the bands of `target`, which must be a contiguous sub-grid.
    pub fn select_bands(&self, target: &BandGrid) -> Result<SpectralCube> {
        let offset = self.grid.sub_grid_offset(target)?;
        let n = target.count();
        let values = self
            .spectra()
            .flat_map(|s| s[offset..offset + n].iter().copied())
            .collect();
        Ok(SpectralCube {
            grid: *target,
            height: self.height,
            width: self.width,
            values,
        })
    }

    /// Spatial crop `[y, y+h) × [x, x+w)`.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<SpectralCube> {
        if y + h > self.height || x + w > self.width || h == 0 || w == 0 {
            return Err(Error::domain(format!(
                "crop {h}x{w} at ({y},{x}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let m = self.grid.count();
        let mut values = Vec::with_capacity(h * w * m);
        for yy in y..y + h {
            let at = (yy * self.width + x) * m;
            values.extend_from_slice(&self.values[at..at + w * m]);
        }
        Ok(SpectralCube {
            grid: self.grid,
            height: h,
            width: w,
            values,
        })
    }

    /// Elementwise `a·self + b·other` for non-negative weights.
    pub fn combine(&self, a: f64, other: &SpectralCube, b: f64) -> Result<SpectralCube> {
        self.grid.ensure_same(&other.grid)?;
        if self.height != other.height || self.width != other.width {
            return Err(Error::domain("cube spatial sizes differ"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        SpectralCube::new(self.grid, self.height, self.width, values)
    }
}

/// What a [`SpectralCurve`] represents; governs its admissible value range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    /// Filter transmittance, values in `[0, 1]`.
    Transmittance,
    /// Spectral power distribution, values `≥ 0`.
    Spd,
    /// Surface reflectance, values `≥ 0`.
    Reflectance,
    /// No range constraint, e.g. a raw network prediction.
    Unconstrained,
}

/// One value per band on a [`BandGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCurve {
    grid: BandGrid,
    kind: CurveKind,
    values: Vec<f64>,
}

impl SpectralCurve {
    pub fn new(grid: BandGrid, kind: CurveKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::domain(format!(
                "curve on {grid} needs {} values, got {}",
                grid.count(),
                values.len()
            )));
        }
        match kind {
            CurveKind::Transmittance => check_values("transmittance", &values, 0.0, 1.0)?,
            CurveKind::Spd | CurveKind::Reflectance => {
                check_values("spectral", &values, 0.0, f64::INFINITY)?
            }
            CurveKind::Unconstrained => {
                check_values("curve", &values, f64::NEG_INFINITY, f64::INFINITY)?
            }
        }
        Ok(SpectralCurve { grid, kind, values })
    }

    pub fn constant(grid: BandGrid, kind: CurveKind, value: f64) -> Result<Self> {
        Self::new(grid, kind, vec![value; grid.count()])
    }

    pub fn grid(&self) -> &BandGrid {
        &self.grid
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Rescaled so the mean over bands is 1. An all-zero curve stays zero.
    pub fn mean_normalized(&self) -> SpectralCurve {
        let mean = self.mean();
        let values = if mean > 0.0 {
            self.values.iter().map(|v| v / mean).collect()
        } else {
            self.values.clone()
        };
        SpectralCurve {
            grid: self.grid,
            kind: self.kind,
            values,
        }
    }

    pub fn with_kind(self, kind: CurveKind) -> Result<SpectralCurve> {
        SpectralCurve::new(self.grid, kind, self.values)
    }

    pub fn select_bands(&self, target: &BandGrid) -> Result<SpectralCurve> {
        let offset = self.grid.sub_grid_offset(target)?;
        Ok(SpectralCurve {
            grid: *target,
            kind: self.kind,
            values: self.values[offset..offset + target.count()].to_vec(),
        })
    }
}

/// Bare sensor sensitivities `K_c`, one column per R, G, B channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorResponse {
    grid: BandGrid,
    channels: [Vec<f64>; 3],
}

impl SensorResponse {
    pub fn new(grid: BandGrid, channels: [Vec<f64>; 3]) -> Result<Self> {
        for (c, col) in channels.iter().enumerate() {
            if col.len() != grid.count() {
                return Err(Error::domain(format!(
                    "sensor channel {c} has {} values for {} bands",
                    col.len(),
                    grid.count()
                )));
            }
            check_values("sensitivity", col, 0.0, f64::INFINITY)?;
        }
        Ok(SensorResponse { grid, channels })
    }

    /// Synthetic silicon sensor behind an RGB colour filter array with no
    /// IR-cut filter in place.
    ///
    /// Each channel has a Gaussian visible lobe plus a near-infrared shoulder
    /// where the dyes turn transparent (all three pass light past ~730 nm,
    /// as bare CFA sensors do). The red lobe has mostly decayed by 690 nm, so
    /// the far red end is weakly observed through the visible lobes alone.
    /// Columns are scaled so that a flat unit spectrum yields a maximum
    /// channel response of 1.
    pub fn silicon_default(grid: BandGrid) -> Self {
        const LOBES: [(f64, f64, f64); 3] = [(605.0, 32.0, 0.55), (535.0, 38.0, 0.35), (460.0, 30.0, 0.45)];
        let mut channels: [Vec<f64>; 3] = Default::default();
        for (col, &(peak, width, nir)) in channels.iter_mut().zip(&LOBES) {
            *col = grid
                .wavelengths()
                .map(|nm| {
                    let visible = (-0.5 * ((nm - peak) / width).powi(2)).exp();
                    let shoulder = nir / (1.0 + (-(nm - 735.0) / 8.0).exp());
                    visible + shoulder
                })
                .collect();
        }
        let scale = channels
            .iter()
            .map(|c| c.iter().sum::<f64>())
            .fold(0.0, f64::max);
        for col in &mut channels {
            col.iter_mut().for_each(|v| *v /= scale);
        }
        SensorResponse { grid, channels }
    }

    pub fn grid(&self) -> &BandGrid {
        &self.grid
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>; 3] {
        &self.channels
    }
}

/// Linear RGB observation, stored (y, x, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width * 3 {
            return Err(Error::domain(format!(
                "rgb image {height}x{width} needs {} values, got {}",
                height * width * 3,
                values.len()
            )));
        }
        Ok(RgbImage {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * 3 + c]
    }
}

/// Renders `cube` through `filter` and `sensor`.
pub fn forward_project(
    cube: &SpectralCube,
    filter: &SpectralCurve,
    sensor: &SensorResponse,
) -> Result<RgbImage> {
    cube.grid.ensure_same(&filter.grid)?;
    cube.grid.ensure_same(&sensor.grid)?;
    if let Some(v) = filter.values.iter().find(|v| **v < 0.0) {
        return Err(Error::domain(format!("negative filter transmittance {v}")));
    }
    // Fold the filter into the sensor once: K'_c(i) = C(i)·K_c(i).
    let effective: Vec<[f64; 3]> = (0..cube.bands())
        .map(|i| {
            let c = filter.values[i];
            [
                c * sensor.channels[0][i],
                c * sensor.channels[1][i],
                c * sensor.channels[2][i],
            ]
        })
        .collect();
    let mut values = Vec::with_capacity(cube.pixels() * 3);
    for spectrum in cube.spectra() {
        let mut rgb = [0.0; 3];
        for (d, k) in spectrum.iter().zip(&effective) {
            rgb[0] += d * k[0];
            rgb[1] += d * k[1];
            rgb[2] += d * k[2];
        }
        values.extend_from_slice(&rgb);
    }
    RgbImage::new(cube.height, cube.width, values)
}

/// Spectral resampling by bin means.
///
/// Each target band takes the mean of the source samples lying in the
/// closed bin `[λ − step/2, λ + step/2]`.
pub trait Resample: Sized {
    fn resample_to_grid(&self, target: &BandGrid) -> Result<Self>;
}

/// For each target band, the source indices falling into its bin.
fn bin_members(source: &BandGrid, target: &BandGrid) -> Result<Vec<Vec<usize>>> {
    if target.start_nm() < source.start_nm() - NM_EPS || target.end_nm() > source.end_nm() + NM_EPS
    {
        return Err(Error::OutOfRange(format!(
            "target {target} extends beyond source {source}"
        )));
    }
    let half = target.step_nm() / 2.0;
    let mut bins = Vec::with_capacity(target.count());
    for lambda in target.wavelengths() {
        let lo = lambda - half - NM_EPS;
        let hi = lambda + half + NM_EPS;
        let first = ((lo - source.start_nm()) / source.step_nm()).ceil().max(0.0) as usize;
        let members: Vec<usize> = (first..source.count())
            .take_while(|&i| source.wavelength(i) <= hi)
            .filter(|&i| source.wavelength(i) >= lo)
            .collect();
        if members.is_empty() {
            return Err(Error::OutOfRange(format!(
                "no source samples of {source} near {lambda}nm"
            )));
        }
        bins.push(members);
    }
    Ok(bins)
}

fn bin_mean(values: &[f64], members: &[usize]) -> f64 {
    members.iter().map(|&i| values[i]).sum::<f64>() / members.len() as f64
}

impl Resample for SpectralCurve {
    fn resample_to_grid(&self, target: &BandGrid) -> Result<Self> {
        let bins = bin_members(&self.grid, target)?;
        let values = bins.iter().map(|m| bin_mean(&self.values, m)).collect();
        SpectralCurve::new(*target, self.kind, values)
    }
}

impl Resample for SpectralCube {
    fn resample_to_grid(&self, target: &BandGrid) -> Result<Self> {
        let bins = bin_members(&self.grid, target)?;
        let mut values = Vec::with_capacity(self.pixels() * target.count());
        for spectrum in self.spectra() {
            values.extend(bins.iter().map(|m| bin_mean(spectrum, m)));
        }
        SpectralCube::new(*target, self.height, self.width, values)
    }
}

/// Radiance from reflectance and illuminant: `D(y,x,i) = R(y,x,i)·L(i)`.
pub fn compose_irss(reflectance: &SpectralCube, illum: &SpectralCurve) -> Result<SpectralCube> {
    reflectance.grid.ensure_same(&illum.grid)?;
    check_values("illuminant", &illum.values, 0.0, f64::INFINITY)?;
    let values = reflectance
        .spectra()
        .flat_map(|s| s.iter().zip(&illum.values).map(|(r, l)| r * l))
        .collect();
    SpectralCube::new(reflectance.grid, reflectance.height, reflectance.width, values)
}

/// Splits a radiance cube into reflectance and illuminant.
///
/// The factorization is only defined up to a per-band scale; this pins it by
/// taking `L(i)` as the band maximum over all pixels, so `R ∈ [0, 1]` and the
/// brightest pixel of each band has unit reflectance. Empty bands give
/// `L(i) = 0` and a zero reflectance band.
pub fn decompose_irss_oracle(cube: &SpectralCube) -> (SpectralCube, SpectralCurve) {
    let m = cube.bands();
    let mut illum = vec![0.0f64; m];
    for s in cube.spectra() {
        for (l, &d) in illum.iter_mut().zip(s) {
            *l = l.max(d);
        }
    }
    let values = cube
        .spectra()
        .flat_map(|s| {
            s.iter()
                .zip(&illum)
                .map(|(&d, &l)| if l > 0.0 { d / l } else { 0.0 })
                .collect::<Vec<_>>()
        })
        .collect();
    let reflectance = SpectralCube {
        grid: cube.grid,
        height: cube.height,
        width: cube.width,
        values,
    };
    let illum = SpectralCurve {
        grid: cube.grid,
        kind: CurveKind::Spd,
        values: illum,
    };
    (reflectance, illum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> BandGrid {
        BandGrid::new(420.0, 10.0, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(BandGrid::new(420.0, 0.0, 3).is_err());
        assert!(BandGrid::new(420.0, -10.0, 3).is_err());
        assert!(BandGrid::new(420.0, 10.0, 0).is_err());
        let g = BandGrid::spanning(420.0, 770.0, 10.0).unwrap();
        assert_eq!(g, BandGrid::input_default());
        assert_eq!(g.end_nm(), 770.0);
        assert_eq!(g.index_of(720.0), Some(30));
        assert_eq!(g.index_of(725.0), None);
    }

    #[test]
    fn cube_rejects_negative_values() {
        let err = SpectralCube::new(grid(2), 1, 1, vec![0.5, -0.1]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(SpectralCube::new(grid(2), 1, 1, vec![0.5]).is_err());
    }

    #[test]
    fn transmittance_range_enforced() {
        assert!(SpectralCurve::new(grid(2), CurveKind::Transmittance, vec![0.0, 1.1]).is_err());
        assert!(SpectralCurve::new(grid(2), CurveKind::Spd, vec![0.0, 1.1]).is_ok());
        assert!(SpectralCurve::new(grid(2), CurveKind::Spd, vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn projecting_zero_cube_gives_zero_rgb() {
        let g = grid(5);
        let cube = SpectralCube::zeros(g, 3, 2);
        let filter = SpectralCurve::constant(g, CurveKind::Transmittance, 0.7).unwrap();
        let rgb = forward_project(&cube, &filter, &SensorResponse::silicon_default(g)).unwrap();
        assert!(rgb.values().iter().all(|v| *v == 0.0));
        assert_eq!((rgb.height(), rgb.width()), (3, 2));
    }

    #[test]
    fn selector_sensor_reads_one_band() {
        let g = grid(4);
        let cube = SpectralCube::from_fn(g, 2, 3, |y, x, b| (y * 100 + x * 10 + b) as f64).unwrap();
        let filter = SpectralCurve::constant(g, CurveKind::Transmittance, 1.0).unwrap();
        let mut indicator = vec![0.0; 4];
        indicator[2] = 1.0;
        let sensor = SensorResponse::new(g, [indicator, vec![0.0; 4], vec![0.0; 4]]).unwrap();
        let rgb = forward_project(&cube, &filter, &sensor).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(rgb.get(y, x, 0), cube.get(y, x, 2));
            }
        }
    }

    #[test]
    fn projection_hand_value() {
        let g = grid(3);
        let cube = SpectralCube::new(g, 1, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let filter = SpectralCurve::new(g, CurveKind::Transmittance, vec![0.5, 1.0, 0.25]).unwrap();
        let sensor = SensorResponse::new(g, [vec![1.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        let rgb = forward_project(&cube, &filter, &sensor).unwrap();
        assert_eq!(rgb.get(0, 0, 0), 3.25);
    }

    #[test]
    fn projection_checks_grids_and_sign() {
        let cube = SpectralCube::zeros(grid(3), 1, 1);
        let filter = SpectralCurve::constant(grid(4), CurveKind::Transmittance, 1.0).unwrap();
        let sensor = SensorResponse::silicon_default(grid(3));
        assert!(matches!(
            forward_project(&cube, &filter, &sensor),
            Err(Error::IncompatibleGrid { .. })
        ));
        let negative = SpectralCurve::new(grid(3), CurveKind::Unconstrained, vec![1.0, -1.0, 0.0]).unwrap();
        assert!(matches!(
            forward_project(&cube, &negative, &sensor),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn resample_identity_and_constant() {
        let g = grid(6);
        let curve = SpectralCurve::new(g, CurveKind::Spd, vec![1.0, 3.0, 2.0, 5.0, 4.0, 0.5]).unwrap();
        assert_eq!(curve.resample_to_grid(&g).unwrap(), curve);

        let fine = BandGrid::spanning(400.0, 800.0, 1.5).unwrap();
        let flat = SpectralCurve::constant(fine, CurveKind::Spd, 7.0).unwrap();
        let coarse = flat.resample_to_grid(&BandGrid::input_default()).unwrap();
        assert!(coarse.values().iter().all(|v| (*v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn resample_bin_mean_worked_example() {
        let src = BandGrid::new(420.0, 5.0, 4).unwrap();
        let curve = SpectralCurve::new(src, CurveKind::Spd, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = curve
            .resample_to_grid(&BandGrid::new(420.0, 10.0, 1).unwrap())
            .unwrap();
        assert_eq!(out.values(), &[1.5]);
    }

    #[test]
    fn resample_out_of_range() {
        let src = BandGrid::new(420.0, 10.0, 5).unwrap();
        let curve = SpectralCurve::constant(src, CurveKind::Spd, 1.0).unwrap();
        let err = curve
            .resample_to_grid(&BandGrid::new(410.0, 10.0, 3).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::OutOfRange(_)));
    }

    #[test]
    fn compose_examples() {
        let g = grid(2);
        let refl = SpectralCube::new(g, 1, 1, vec![0.5, 0.5]).unwrap();
        let illum = SpectralCurve::new(g, CurveKind::Spd, vec![2.0, 4.0]).unwrap();
        assert_eq!(compose_irss(&refl, &illum).unwrap().values(), &[1.0, 2.0]);

        let ones = SpectralCurve::constant(g, CurveKind::Spd, 1.0).unwrap();
        let r = SpectralCube::from_fn(g, 2, 2, |y, x, b| 0.1 * (y + x + b) as f64).unwrap();
        assert_eq!(compose_irss(&r, &ones).unwrap(), r);

        let flat = SpectralCube::from_fn(g, 2, 2, |_, _, _| 1.0).unwrap();
        let d = compose_irss(&flat, &illum).unwrap();
        assert!(d.spectra().all(|s| s == illum.values()));
    }

    #[test]
    fn decompose_degenerate_cases() {
        let g = grid(3);
        let (r, l) = decompose_irss_oracle(&SpectralCube::zeros(g, 2, 2));
        assert!(r.values().iter().all(|v| *v == 0.0));
        assert!(l.values().iter().all(|v| *v == 0.0));

        let five = SpectralCube::from_fn(g, 2, 2, |_, _, _| 5.0).unwrap();
        let (r, l) = decompose_irss_oracle(&five);
        assert!(l.values().iter().all(|v| *v == 5.0));
        assert!(r.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn decompose_recovers_construction() {
        let g = grid(4);
        let illum = SpectralCurve::new(g, CurveKind::Spd, vec![0.8, 1.3, 0.9, 1.0]).unwrap();
        let refl = SpectralCube::from_fn(g, 3, 3, |y, x, b| {
            if y == 1 && x == 1 {
                1.0
            } else {
                0.1 + 0.05 * (y * 3 + x + b) as f64
            }
        })
        .unwrap();
        let (r, l) = decompose_irss_oracle(&compose_irss(&refl, &illum).unwrap());
        assert_eq!(l.values(), illum.values());
        for (a, b) in r.values().iter().zip(refl.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn select_bands_takes_prefix() {
        let cube = SpectralCube::from_fn(BandGrid::input_default(), 1, 2, |_, x, b| (x * 100 + b) as f64).unwrap();
        let out = cube.select_bands(&BandGrid::output_default()).unwrap();
        assert_eq!(out.bands(), 31);
        assert_eq!(out.spectrum(0, 1)[30], 130.0);
        assert!(cube.select_bands(&BandGrid::new(425.0, 10.0, 3).unwrap()).is_err());
    }

    #[test]
    fn default_sensor_is_normalized() {
        let s = SensorResponse::silicon_default(BandGrid::input_default());
        let sums: Vec<f64> = s.channels().iter().map(|c| c.iter().sum()).collect();
        let max = sums.iter().copied().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        // Red-end visibility is low in the visible lobes but high in the NIR.
        let red = s.channel(0);
        assert!(red[29] < 0.3 * red[18]);
        assert!(red[35] > red[29]);
    }
}
