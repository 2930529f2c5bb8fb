//! Deterministic SVG line charts.
//!
//! Output depends only on the chart data: fixed canvas, fixed palette and
//! fixed number formatting, so the same input always renders the same bytes.

use std::fmt::Write as _;
use std::io::Read;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y extent; derived from the data when `None`.
    pub y_range: Option<(f64, f64)>,
}

impl LineChart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        LineChart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            y_range: None,
        }
    }

    /// Adds one series per selected column of a headed CSV whose first
    /// column is x. Empty cells are skipped. `columns = None` takes all.
    pub fn add_csv<R: Read>(&mut self, input: R, columns: Option<&[&str]>) -> Result<()> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = reader
            .headers()
            .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
            .clone();
        if header.len() < 2 {
            return Err(Error::Parse { line: 1, msg: "need an x column and at least one series".into() });
        }
        let picked: Vec<usize> = match columns {
            None => (1..header.len()).collect(),
            Some(names) => names
                .iter()
                .map(|n| {
                    header
                        .iter()
                        .position(|h| h == *n)
                        .filter(|&i| i > 0)
                        .ok_or_else(|| Error::Parse { line: 1, msg: format!("no column `{n}`") })
                })
                .collect::<Result<_>>()?,
        };
        let mut series: Vec<Series> = picked
            .iter()
            .map(|&i| Series { name: header[i].to_string(), points: Vec::new() })
            .collect();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse { line, msg: format!("`{s}` is not a number") })
            };
            let x = num(rec.get(0).unwrap_or_default())?;
            for (s, &i) in series.iter_mut().zip(&picked) {
                match rec.get(i) {
                    Some("") | None => {}
                    Some(v) => {
                        let y = num(v)?;
                        if y.is_finite() {
                            s.points.push((x, y));
                        }
                    }
                }
            }
        }
        self.series.extend(series);
        Ok(())
    }

    fn extent(&self) -> Option<((f64, f64), (f64, f64))> {
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return None;
        }
        if let Some(r) = self.y_range {
            (y0, y1) = r;
        }
        let widen = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, b + 0.5) };
        Some((widen(x0, x1), widen(y0, y1)))
    }

    pub fn to_svg(&self) -> Result<String> {
        let ((x0, x1), (y0, y1)) = self
            .extent()
            .ok_or_else(|| Error::Degenerate("chart has no points".into()))?;
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y.clamp(y0, y1) - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 19.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                py + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = TOP + 10.0 + 18.0 * k as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 20.0,
                lx + 25.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HISTORY: &str = "epoch,train_loss,val_loss,val_rmse\n1,0.5,0.6,20\n2,0.25,0.3,15\n3,0.2,,14\n";

    #[test]
    fn history_two_series() {
        let mut c = LineChart::new("loss", "epoch", "loss");
        c.add_csv(HISTORY.as_bytes(), Some(&["train_loss", "val_loss"])).unwrap();
        assert_eq!(c.series.len(), 2);
        assert_eq!(c.series[1].points.len(), 2);
        let svg = c.to_svg().unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg, c.to_svg().unwrap());
    }

    #[test]
    fn fixed_range_and_labels() {
        let mut c = LineChart::new("filter", "wavelength (nm)", "transmittance");
        c.y_range = Some((0.0, 1.0));
        c.add_csv("wavelength_nm,transmittance\n420,0.5\n430,0.75\n".as_bytes(), None).unwrap();
        let svg = c.to_svg().unwrap();
        assert!(svg.contains("wavelength (nm)"));
        assert!(svg.contains(">1.000<"));
    }

    #[test]
    fn errors() {
        let mut c = LineChart::new("", "", "");
        assert!(c.add_csv("x\n1\n".as_bytes(), None).is_err());
        assert!(c.add_csv("x,y\n1,z\n".as_bytes(), None).is_err());
        assert!(c.add_csv("x,y\n1,2\n".as_bytes(), Some(&["q"])).is_err());
        assert!(LineChart::new("", "", "").to_svg().is_err());
    }
}
