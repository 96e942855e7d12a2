//! CSV, JSON and SVG writers shared by the experiment drivers.

use std::fs;
use std::path::Path;

use plotters::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Writes `rows` under `header`; every row must match the header width.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return invalid(format!("csv row {i} has {} columns, header has {}", row.len(), header.len()));
        }
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip representation; non-finite values spelled out.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Curve {
    pub fn new(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Curve {
            label: label.to_string(),
            x,
            y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_scale: Scale,
    pub y_scale: Scale,
}

fn usable(v: f64, scale: Scale) -> bool {
    v.is_finite() && (scale == Scale::Linear || v > 0.0)
}

fn range(values: impl Iterator<Item = f64>, scale: Scale) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| usable(*v, scale)) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return match scale {
            Scale::Linear => (0.0, 1.0),
            Scale::Log => (0.1, 1.0),
        };
    }
    match scale {
        Scale::Linear if hi - lo <= f64::EPSILON * hi.abs().max(1.0) => (lo - 0.5, hi + 0.5),
        Scale::Linear => {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
        Scale::Log if hi / lo < 1.0 + 1e-9 => (lo / 2.0, hi * 2.0),
        Scale::Log => (lo / 1.2, hi * 1.2),
    }
}

const COLORS: [RGBColor; 2] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40)];

fn draw<X, Y>(
    root: &DrawingArea<SVGBackend<'_>, plotters::coord::Shift>,
    spec: &PlotSpec<'_>,
    curves: &[Curve],
    xr: X,
    yr: Y,
) -> std::result::Result<(), String>
where
    X: plotters::coord::ranged1d::AsRangedCoord<Value = f64>,
    Y: plotters::coord::ranged1d::AsRangedCoord<Value = f64>,
    X::CoordDescType: plotters::coord::ranged1d::ValueFormatter<f64>,
    Y::CoordDescType: plotters::coord::ranged1d::ValueFormatter<f64>,
{
    let mut chart = ChartBuilder::on(root)
        .caption(spec.title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(xr, yr)
        .map_err(|e| e.to_string())?;
    chart
        .configure_mesh()
        .x_desc(spec.x_label)
        .y_desc(spec.y_label)
        .draw()
        .map_err(|e| e.to_string())?;
    for (curve, color) in curves.iter().zip(COLORS) {
        let pts: Vec<(f64, f64)> = curve
            .x
            .iter()
            .zip(&curve.y)
            .filter(|(x, y)| usable(**x, spec.x_scale) && usable(**y, spec.y_scale))
            .map(|(x, y)| (*x, *y))
            .collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(|e| e.to_string())?
            .label(curve.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 2, color.filled())))
            .map_err(|e| e.to_string())?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| e.to_string())?;
    Ok(())
}

/// Static SVG line plot with at most two curves. Points that cannot be shown
/// on the requested scales (non-finite, or non-positive on a log axis) are
/// skipped.
pub fn line_plot(path: &Path, spec: &PlotSpec<'_>, curves: &[Curve]) -> Result<()> {
    if curves.is_empty() || curves.len() > 2 {
        return invalid("a plot holds one or two curves");
    }
    for c in curves {
        if c.x.len() != c.y.len() {
            return invalid(format!("curve '{}' has mismatched lengths", c.label));
        }
    }
    let xr = range(curves.iter().flat_map(|c| c.x.iter().copied()), spec.x_scale);
    let yr = range(curves.iter().flat_map(|c| c.y.iter().copied()), spec.y_scale);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| Error::Format(e.to_string()))?;
    let res = match (spec.x_scale, spec.y_scale) {
        (Scale::Linear, Scale::Linear) => draw(&root, spec, curves, xr.0..xr.1, yr.0..yr.1),
        (Scale::Linear, Scale::Log) => draw(&root, spec, curves, xr.0..xr.1, (yr.0..yr.1).log_scale()),
        (Scale::Log, Scale::Linear) => draw(&root, spec, curves, (xr.0..xr.1).log_scale(), yr.0..yr.1),
        (Scale::Log, Scale::Log) => draw(&root, spec, curves, (xr.0..xr.1).log_scale(), (yr.0..yr.1).log_scale()),
    };
    res.map_err(Error::Format)?;
    root.present().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}
