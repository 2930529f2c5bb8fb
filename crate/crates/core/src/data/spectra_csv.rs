//! Two-column spectra CSV: `wavelength_nm,<value>` with a header row.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{BandGrid, CurveKind, SpectralCurve};
use crate::train::csv_io;

/// Decimal places written for values.
pub const VALUE_DECIMALS: usize = 9;

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        msg: msg.into(),
    }
}

/// Reads a curve. Wavelengths must increase strictly and evenly.
pub fn parse_spectra_csv<R: Read>(input: R, kind: CurveKind) -> Result<SpectralCurve> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(parse_err(1, "empty file")),
        Some(r) => r.map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?,
    };
    if header.len() != 2 || header.get(0).is_some_and(|f| f.parse::<f64>().is_ok()) {
        return Err(parse_err(1, "missing `wavelength_nm,value` header"));
    }
    let mut nm = Vec::new();
    let mut values = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let field = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or_default();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("`{s}` is not a number")))
        };
        let (w, v) = (field(0)?, field(1)?);
        if let Some(&prev) = nm.last() {
            if w <= prev {
                return Err(parse_err(line, format!("wavelength {w} does not increase after {prev}")));
            }
        }
        if nm.len() >= 2 {
            let step = nm[1] - nm[0];
            let expected = nm[0] + nm.len() as f64 * step;
            if (w - expected).abs() > 1e-6 {
                return Err(parse_err(line, format!("wavelength {w} breaks the {step}nm spacing")));
            }
        }
        nm.push(w);
        values.push(v);
    }
    if nm.is_empty() {
        return Err(parse_err(2, "no data rows"));
    }
    let step = if nm.len() > 1 { nm[1] - nm[0] } else { 1.0 };
    let grid = BandGrid::new(nm[0], step, nm.len())?;
    SpectralCurve::new(grid, kind, values).map_err(|e| parse_err(0, e.to_string()))
}

pub fn write_spectra<W: Write>(curve: &SpectralCurve, value_name: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["wavelength_nm", value_name]).map_err(csv_io)?;
    for (nm, v) in curve.grid().wavelengths().zip(curve.values()) {
        w.write_record([nm.to_string(), format!("{v:.VALUE_DECIMALS$}")])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectra_csv(path: impl AsRef<Path>, kind: CurveKind) -> Result<SpectralCurve> {
    parse_spectra_csv(std::fs::File::open(path)?, kind)
}

pub fn write_spectra_csv(path: impl AsRef<Path>, curve: &SpectralCurve, value_name: &str) -> Result<()> {
    let mut buf = Vec::new();
    write_spectra(curve, value_name, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SpectralCurve> {
        parse_spectra_csv(s.as_bytes(), CurveKind::Unconstrained)
    }

    #[test]
    fn round_trip_nine_decimals() {
        let grid = BandGrid::new(420.0, 10.0, 4).unwrap();
        let c = SpectralCurve::new(grid, CurveKind::Transmittance, vec![0.123456789012, 0.5, 1.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_spectra(&c, "transmittance", &mut buf).unwrap();
        let back = parse_spectra_csv(buf.as_slice(), CurveKind::Transmittance).unwrap();
        assert_eq!(back.grid(), c.grid());
        for (a, b) in back.values().iter().zip(c.values()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn empty_file() {
        assert!(matches!(parse(""), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_header() {
        assert!(matches!(parse("420,0.5\n430,0.6\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn out_of_order_names_line() {
        let err = parse("wavelength_nm,v\n420,1\n440,1\n430,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse("wavelength_nm,v\n420,1\n430,1\n430,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn uneven_spacing_and_garbage() {
        assert!(matches!(parse("wavelength_nm,v\n420,1\n430,1\n445,1\n"), Err(Error::Parse { line: 4, .. })));
        assert!(matches!(parse("wavelength_nm,v\n420,x\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("wavelength_nm,v\n"), Err(Error::Parse { .. })));
    }
}
