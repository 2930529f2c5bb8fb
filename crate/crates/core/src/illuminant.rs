//! Daylight illuminants, colour temperature estimation and the white-world
//! baseline.
//!
//! Daylight SPDs follow the CIE D-series model: the chromaticity of the
//! daylight locus at a given colour temperature selects the weights of the
//! `S0 + M1·S1 + M2·S2` basis. Both the basis and the CIE 1931 2° colour
//! matching functions are embedded as 10 nm tables over 380–780 nm.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::spectral::{BandGrid, CurveKind, RgbImage, SpectralCube, SpectralCurve};

const CMF_CSV: &str = include_str!("../assets/cie1931_2deg_cmf.csv");
const DAYLIGHT_CSV: &str = include_str!("../assets/cie_daylight_basis.csv");

/// Lowest and highest colour temperature accepted by [`cie_daylight`].
pub const DAYLIGHT_CCT_RANGE: (f64, f64) = (4000.0, 25000.0);

/// A 10 nm table with three value columns.
struct Table {
    start_nm: f64,
    step_nm: f64,
    rows: Vec<[f64; 3]>,
}

impl Table {
    fn parse(src: &str) -> Table {
        let mut reader = csv::Reader::from_reader(src.as_bytes());
        let mut wavelengths = Vec::new();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.expect("embedded table is valid csv");
            let field = |i: usize| -> f64 { record[i].trim().parse().expect("numeric table cell") };
            wavelengths.push(field(0));
            rows.push([field(1), field(2), field(3)]);
        }
        Table {
            start_nm: wavelengths[0],
            step_nm: wavelengths[1] - wavelengths[0],
            rows,
        }
    }

    fn end_nm(&self) -> f64 {
        self.start_nm + (self.rows.len() - 1) as f64 * self.step_nm
    }

    fn wavelength(&self, i: usize) -> f64 {
        self.start_nm + i as f64 * self.step_nm
    }

    /// Linear interpolation inside the table range.
    fn at(&self, nm: f64) -> [f64; 3] {
        let pos = ((nm - self.start_nm) / self.step_nm).clamp(0.0, (self.rows.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.rows.len() - 2);
        let t = pos - i as f64;
        let (a, b) = (self.rows[i], self.rows[i + 1]);
        [0, 1, 2].map(|k| a[k] + t * (b[k] - a[k]))
    }
}

fn cmf() -> &'static Table {
    static CMF: OnceLock<Table> = OnceLock::new();
    CMF.get_or_init(|| Table::parse(CMF_CSV))
}

fn daylight_basis() -> &'static Table {
    static BASIS: OnceLock<Table> = OnceLock::new();
    BASIS.get_or_init(|| Table::parse(DAYLIGHT_CSV))
}

/// Wavelength range covered by the embedded tables.
pub fn table_coverage() -> (f64, f64) {
    let t = cmf();
    (t.start_nm, t.end_nm())
}

/// A relative SPD, normalized to mean 1 over its bands.
#[derive(Clone, Debug, PartialEq)]
pub struct Illuminant {
    curve: SpectralCurve,
    nominal_cct: Option<f64>,
}

impl Illuminant {
    pub fn new(curve: SpectralCurve, nominal_cct: Option<f64>) -> Result<Self> {
        let curve = curve.with_kind(CurveKind::Spd)?.mean_normalized();
        Ok(Illuminant { curve, nominal_cct })
    }

    pub fn curve(&self) -> &SpectralCurve {
        &self.curve
    }

    pub fn into_curve(self) -> SpectralCurve {
        self.curve
    }

    pub fn nominal_cct(&self) -> Option<f64> {
        self.nominal_cct
    }
}

/// Chromaticity `(x, y)` of the CIE daylight locus at `cct` kelvin.
pub fn daylight_chromaticity(cct: f64) -> (f64, f64) {
    let t = cct;
    let x = if t <= 7000.0 {
        -4.6070e9 / t.powi(3) + 2.9678e6 / t.powi(2) + 0.09911e3 / t + 0.244063
    } else {
        -2.0064e9 / t.powi(3) + 1.9018e6 / t.powi(2) + 0.24748e3 / t + 0.237040
    };
    let y = -3.0 * x * x + 2.870 * x - 0.275;
    (x, y)
}

/// CIE D-series daylight at `cct` kelvin sampled on `grid`.
pub fn cie_daylight(cct: f64, grid: &BandGrid) -> Result<Illuminant> {
    let (lo, hi) = DAYLIGHT_CCT_RANGE;
    if !(lo..=hi).contains(&cct) {
        return Err(Error::domain(format!(
            "daylight colour temperature {cct}K outside {lo}-{hi}K"
        )));
    }
    let basis = daylight_basis();
    if grid.start_nm() < basis.start_nm - 1e-9 || grid.end_nm() > basis.end_nm() + 1e-9 {
        return Err(Error::OutOfRange(format!(
            "grid {grid} outside daylight table {}-{}nm",
            basis.start_nm,
            basis.end_nm()
        )));
    }
    let (x, y) = daylight_chromaticity(cct);
    let m = 0.0241 + 0.2562 * x - 0.7341 * y;
    let m1 = (-1.3515 - 1.7703 * x + 5.9114 * y) / m;
    let m2 = (0.0300 - 31.4424 * x + 30.0717 * y) / m;
    let values = grid
        .wavelengths()
        .map(|nm| {
            let [s0, s1, s2] = basis.at(nm);
            (s0 + m1 * s1 + m2 * s2).max(0.0)
        })
        .collect();
    Illuminant::new(SpectralCurve::new(*grid, CurveKind::Spd, values)?, Some(cct))
}

/// CIE XYZ tristimulus values of `spd`.
///
/// The SPD is linearly interpolated at each 10 nm table row and held at its
/// end values outside its own grid, which folds the weights of truncated
/// table rows onto the terminal bands.
pub fn spd_to_xyz(spd: &SpectralCurve) -> Result<[f64; 3]> {
    let table = cmf();
    let grid = spd.grid();
    if grid.start_nm() < table.start_nm - 1e-9 || grid.end_nm() > table.end_nm() + 1e-9 {
        return Err(Error::OutOfRange(format!(
            "grid {grid} outside colour matching table {}-{}nm",
            table.start_nm,
            table.end_nm()
        )));
    }
    let values = spd.values();
    let sample = |nm: f64| -> f64 {
        if values.len() == 1 {
            return values[0];
        }
        let pos = ((nm - grid.start_nm()) / grid.step_nm()).clamp(0.0, (values.len() - 1) as f64);
        let i = (pos.floor() as usize).min(values.len() - 2);
        let t = pos - i as f64;
        values[i] + t * (values[i + 1] - values[i])
    };
    let mut xyz = [0.0; 3];
    for (i, row) in table.rows.iter().enumerate() {
        let p = sample(table.wavelength(i));
        for k in 0..3 {
            xyz[k] += p * row[k];
        }
    }
    Ok(xyz)
}

/// Correlated colour temperature of `spd`, in kelvin.
///
/// SPD → XYZ → xy chromaticity → McCamy's cubic approximation.
pub fn estimate_cct(spd: &SpectralCurve) -> Result<f64> {
    if spd.values().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::domain("SPD must be finite and non-negative"));
    }
    if spd.values().iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("all-zero SPD has no colour temperature".into()));
    }
    let [x, y, z] = spd_to_xyz(spd)?;
    let sum = x + y + z;
    if !(sum > 0.0) {
        return Err(Error::Degenerate("SPD has no visible power".into()));
    }
    let (cx, cy) = (x / sum, y / sum);
    let n = (cx - 0.3320) / (0.1858 - cy);
    let cct = 449.0 * n.powi(3) + 3525.0 * n.powi(2) + 6823.3 * n + 5520.33;
    if !(cct > 0.0) || !cct.is_finite() {
        return Err(Error::Degenerate(format!(
            "chromaticity ({cx:.4}, {cy:.4}) is too far from the Planckian locus"
        )));
    }
    Ok(cct)
}

/// White-patch illuminant estimate from a spectral cube: the per-band
/// maximum over all pixels, mean-normalized.
pub fn white_world_spectrum(cube: &SpectralCube) -> SpectralCurve {
    let mut max = vec![0.0f64; cube.bands()];
    for s in cube.spectra() {
        for (m, v) in max.iter_mut().zip(s) {
            *m = m.max(*v);
        }
    }
    SpectralCurve::new(*cube.grid(), CurveKind::Spd, max)
        .expect("maxima of a valid cube are non-negative")
        .mean_normalized()
}

/// White-patch estimate from an RGB image: per-channel maximum, normalized
/// to mean 1.
pub fn white_world_rgb(image: &RgbImage) -> [f64; 3] {
    let mut max = [0.0f64; 3];
    for px in image.values().chunks_exact(3) {
        for c in 0..3 {
            max[c] = max[c].max(px[c]);
        }
    }
    let mean = max.iter().sum::<f64>() / 3.0;
    if mean > 0.0 {
        max.map(|v| v / mean)
    } else {
        max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{compose_irss, Resample};

    fn grid() -> BandGrid {
        BandGrid::input_default()
    }

    #[test]
    fn tables_cover_380_to_780() {
        assert_eq!(table_coverage(), (380.0, 780.0));
        assert_eq!(daylight_basis().rows.len(), 41);
        // S0 at 560 nm is the normalization point of the basis.
        assert_eq!(daylight_basis().at(560.0)[0], 100.0);
    }

    #[test]
    fn d65_chromaticity() {
        let (x, y) = daylight_chromaticity(6504.0);
        assert!((x - 0.3127).abs() < 2e-4, "{x}");
        assert!((y - 0.3291).abs() < 2e-4, "{y}");
    }

    #[test]
    fn daylight_round_trip_6500() {
        let d = cie_daylight(6500.0, &grid()).unwrap();
        assert!((d.curve().mean() - 1.0).abs() < 1e-12);
        let cct = estimate_cct(d.curve()).unwrap();
        assert!((cct - 6500.0).abs() <= 150.0, "{cct}");
        assert_eq!(d.nominal_cct(), Some(6500.0));
    }

    #[test]
    fn warm_daylight_is_redder() {
        let g = grid();
        let ratio = |cct: f64| {
            let c = cie_daylight(cct, &g).unwrap();
            let v = c.curve().values();
            v[g.index_of(700.0).unwrap()] / v[g.index_of(450.0).unwrap()]
        };
        assert!(ratio(4000.0) > ratio(8000.0));
    }

    #[test]
    fn daylight_domain_errors() {
        assert!(matches!(cie_daylight(3000.0, &grid()), Err(Error::Domain(_))));
        assert!(matches!(cie_daylight(30000.0, &grid()), Err(Error::Domain(_))));
        let wide = BandGrid::new(400.0, 10.0, 50).unwrap();
        assert!(matches!(cie_daylight(5000.0, &wide), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn daylight_resample_consistency() {
        let g = grid();
        let direct = cie_daylight(5500.0, &g).unwrap();
        let again = cie_daylight(5500.0, &BandGrid::new(420.0, 10.0, 36).unwrap()).unwrap();
        let resampled = again.curve().resample_to_grid(&g).unwrap();
        for (a, b) in direct.curve().values().iter().zip(resampled.values()) {
            assert!((a - b).abs() < 1e-6);
        }
        // On a 5 nm grid the 10 nm knots carry the same relative power.
        let fine = cie_daylight(5500.0, &BandGrid::new(420.0, 5.0, 71).unwrap()).unwrap();
        let knots: Vec<f64> = fine.curve().values().iter().step_by(2).copied().collect();
        let k = direct.curve().values()[0] / knots[0];
        for (a, b) in direct.curve().values().iter().zip(&knots) {
            assert!((a - k * b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn cct_is_scale_invariant() {
        let d = cie_daylight(5000.0, &grid()).unwrap();
        let tripled = SpectralCurve::new(
            *d.curve().grid(),
            CurveKind::Spd,
            d.curve().values().iter().map(|v| 3.0 * v).collect(),
        )
        .unwrap();
        let a = estimate_cct(d.curve()).unwrap();
        let b = estimate_cct(&tripled).unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!((a - 5000.0).abs() <= 150.0);
    }

    #[test]
    fn cct_rejects_zero_spd() {
        let zero = SpectralCurve::constant(grid(), CurveKind::Spd, 0.0).unwrap();
        assert!(matches!(estimate_cct(&zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn white_world_examples() {
        let g = BandGrid::new(420.0, 10.0, 3).unwrap();
        let cube = SpectralCube::new(g, 1, 2, vec![1.0, 2.0, 4.0, 0.5, 1.0, 1.0]).unwrap();
        let ww = white_world_spectrum(&cube);
        let k = 3.0 / 7.0;
        for (a, b) in ww.values().iter().zip([k, 2.0 * k, 4.0 * k]) {
            assert!((a - b).abs() < 1e-12);
        }

        let flat = SpectralCube::from_fn(g, 2, 2, |_, _, _| 2.0).unwrap();
        assert!(white_world_spectrum(&flat).values().iter().all(|v| (*v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn white_world_finds_white_patch() {
        let g = grid();
        let illum = cie_daylight(4500.0, &g).unwrap();
        let refl = SpectralCube::from_fn(g, 4, 4, |y, x, b| {
            if (y, x) == (2, 1) {
                1.0
            } else {
                0.2 + 0.6 * (((y * 7 + x * 3 + b) % 5) as f64 / 5.0)
            }
        })
        .unwrap();
        let cube = compose_irss(&refl, illum.curve()).unwrap();
        let ww = white_world_spectrum(&cube);
        for (a, b) in ww.values().iter().zip(illum.curve().values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn white_world_rgb_normalizes() {
        let img = RgbImage::new(1, 2, vec![1.0, 2.0, 4.0, 0.0, 0.5, 0.5]).unwrap();
        let ww = white_world_rgb(&img);
        assert!((ww.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert!((ww[2] / ww[0] - 4.0).abs() < 1e-12);
    }
}
