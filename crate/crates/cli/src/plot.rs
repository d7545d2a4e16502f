//! SVG line charts and PNG snapshot panels.

use std::path::Path;

use anyhow::{anyhow, Result};
use ensroll::GridField;
use image::{Rgb, RgbImage};
use plotters::prelude::*;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// One polyline per series with markers and a legend.
pub fn line_chart(path: &Path, title: &str, x_desc: &str, y_desc: &str, series: &[Series]) -> Result<()> {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() || !y1.is_finite() {
        return Err(anyhow!("nothing to plot for {}", path.display()));
    }
    let (x0, x1) = padded(x0, x1);
    let (_, y1) = padded(y0, y1);

    let root = SVGBackend::new(path, (760, 460)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(14)
        .x_label_area_size(42)
        .y_label_area_size(80)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .y_label_formatter(&|v| format!("{v:.3e}"))
        .draw()?;
    for (i, s) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))?
            .label(s.label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart.draw_series(s.points.iter().map(|&p| Circle::new(p, 3, color.filled())))?;
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

const GAP: u32 = 3;

fn paint(img: &mut RgbImage, field: &GridField, left: u32, top: u32, scale: u32, (lo, hi): (f64, f64), map: colorous::Gradient) {
    let span = if hi > lo { hi - lo } else { 1.0 };
    for iy in 0..field.ny() {
        for ix in 0..field.nx() {
            let t = ((field.get(ix, iy) - lo) / span).clamp(0.0, 1.0);
            let c = map.eval_continuous(t);
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel(left + ix as u32 * scale + dx, top + iy as u32 * scale + dy, Rgb([c.r, c.g, c.b]));
                }
            }
        }
    }
}

/// Three rows (prediction, truth, absolute error) with one column per
/// `(prediction, truth)` pair. Prediction and truth share a colour scale;
/// the error row has its own, starting at zero.
pub fn snapshot_panel(path: &Path, columns: &[(&GridField, &GridField)]) -> Result<()> {
    let (nx, ny) = columns.first().ok_or_else(|| anyhow!("no snapshot columns"))?.0.shape();
    let scale = (128 / nx.max(ny)).max(1) as u32;
    let (pw, ph) = (nx as u32 * scale, ny as u32 * scale);

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut errors = Vec::with_capacity(columns.len());
    let mut err_hi = 0.0f64;
    for (p, t) in columns {
        if p.shape() != (nx, ny) || t.shape() != (nx, ny) {
            return Err(anyhow!("snapshot fields differ in shape"));
        }
        for &v in p.values().iter().chain(t.values()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let e = GridField::new(nx, ny, p.values().iter().zip(t.values()).map(|(a, b)| (a - b).abs()).collect())?;
        err_hi = err_hi.max(e.values().iter().copied().fold(0.0, f64::max));
        errors.push(e);
    }

    let n = columns.len() as u32;
    let mut img = RgbImage::from_pixel(n * pw + (n + 1) * GAP, 3 * ph + 4 * GAP, Rgb([255, 255, 255]));
    for (c, ((p, t), e)) in columns.iter().zip(&errors).enumerate() {
        let left = GAP + c as u32 * (pw + GAP);
        paint(&mut img, p, left, GAP, scale, (lo, hi), colorous::VIRIDIS);
        paint(&mut img, t, left, 2 * GAP + ph, scale, (lo, hi), colorous::VIRIDIS);
        paint(&mut img, e, left, 3 * GAP + 2 * ph, scale, (0.0, err_hi), colorous::MAGMA);
    }
    img.save(path)?;
    Ok(())
}

/// 0-based frame indices for the snapshot columns: the first predicted step
/// and the steps at a quarter, half and all of the trajectory, counting
/// steps from 1 and never before the first prediction.
pub fn snapshot_steps(history: usize, n_t: usize) -> [usize; 4] {
    let first = history + 1;
    [first, (n_t / 4).max(first), (n_t / 2).max(first), n_t].map(|s| s - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_steps_cover_first_and_last_prediction() {
        assert_eq!(snapshot_steps(3, 100), [3, 24, 49, 99]);
        assert_eq!(snapshot_steps(10, 20), [10, 10, 10, 19]);
        assert_eq!(snapshot_steps(1, 2), [1, 1, 1, 1]);
    }

    #[test]
    fn panel_has_three_rows_and_one_column_per_pair() {
        let dir = tempfile::tempdir().unwrap();
        let a = GridField::from_fn(8, 4, |x, y| (x + y) as f64).unwrap();
        let b = GridField::from_fn(8, 4, |x, _| x as f64).unwrap();
        let path = dir.path().join("p.png");
        snapshot_panel(&path, &[(&a, &b), (&b, &b)]).unwrap();
        let img = image::open(&path).unwrap();
        let scale = 16;
        assert_eq!(img.width(), 2 * 8 * scale + 3 * GAP);
        assert_eq!(img.height(), 3 * 4 * scale + 4 * GAP);
    }

    #[test]
    fn chart_writes_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.svg");
        let s = [Series::new("a", vec![(1.0, 0.5), (2.0, 0.25)]), Series::new("b", vec![(1.0, 0.4)])];
        line_chart(&path, "t", "x", "y", &s).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg"));
        let has = |t: &str| svg.lines().any(|l| l.trim() == t);
        assert!(has("a") && has("b") && has("t"));
        assert!(line_chart(&path, "t", "x", "y", &[]).is_err());
    }
}
