//! Plot artifacts emitted as standalone SVG documents.

use crate::error::Result;
use base64::Engine;
use std::fmt::Write as _;
use std::path::Path;

const PALETTE: [&str; 11] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
    "#ccb974", "#64b5cd", "#5f9e6e",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    width: f64,
    height: f64,
    left: f64,
    top: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.left + (v - self.x_min) / (self.x_max - self.x_min).max(1e-12) * self.width
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.height
            - (v - self.y_min) / (self.y_max - self.y_min).max(1e-12) * self.height
    }
}

fn axes(svg: &mut String, frame: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let x0 = frame.left;
    let y0 = frame.top + frame.height;
    let x1 = frame.left + frame.width;
    let _ = write!(
        svg,
        r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333"/>
<line x1="{x0}" y1="{}" x2="{x0}" y2="{y0}" stroke="#333"/>
<text x="{}" y="18" text-anchor="middle" font-size="14" font-family="sans-serif">{title}</text>
<text x="{}" y="{}" text-anchor="middle" font-size="11" font-family="sans-serif">{xlabel}</text>
<text x="14" y="{}" text-anchor="middle" font-size="11" font-family="sans-serif" transform="rotate(-90 14 {})">{ylabel}</text>
"##,
        frame.top,
        frame.left + frame.width / 2.0,
        frame.left + frame.width / 2.0,
        y0 + 32.0,
        frame.top + frame.height / 2.0,
        frame.top + frame.height / 2.0,
    );
    // Horizontal grid with value labels.
    for i in 0..=4 {
        let v = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let y = frame.y(v);
        let _ = write!(
            svg,
            r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd" stroke-dasharray="3,3"/>
<text x="{}" y="{}" text-anchor="end" font-size="10" font-family="sans-serif">{v:.1}</text>
"##,
            x0 - 4.0,
            y + 3.0,
        );
    }
}

/// Multi-series line chart with point markers and a legend.
pub fn svg_line_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    path: impl AsRef<Path>,
) -> Result<()> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_min, x_max) = bounds(all.iter().map(|p| p.0), 0.0, 1.0);
    let (mut y_min, mut y_max) = bounds(all.iter().map(|p| p.1), 0.0, 1.0);
    let pad = (y_max - y_min).max(1e-9) * 0.08;
    y_min -= pad;
    y_max += pad;
    let frame = Frame {
        width: 420.0,
        height: 260.0,
        left: 60.0,
        top: 30.0,
        x_min,
        x_max,
        y_min,
        y_max,
    };
    let mut svg = svg_open(540.0, 360.0);
    axes(&mut svg, &frame, title, xlabel, ylabel);
    for (si, s) in series.iter().enumerate() {
        let col = color(si);
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.x(x), frame.y(y)))
            .collect();
        let _ = write!(
            svg,
            r##"<polyline fill="none" stroke="{col}" stroke-width="2" points="{}"/>
"##,
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = write!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3.2" fill="{col}"/>
"##,
                frame.x(x),
                frame.y(y)
            );
        }
        let ly = 40.0 + 16.0 * si as f64;
        let _ = write!(
            svg,
            r##"<rect x="488" y="{}" width="12" height="12" fill="{col}"/>
<text x="504" y="{}" font-size="10" font-family="sans-serif">{}</text>
"##,
            ly,
            ly + 10.0,
            escape(&s.label)
        );
    }
    finish(svg, path)
}

/// One bar per class position: a solid labeled-count segment and an
/// optional hatched unlabeled segment stacked above it, colored by task.
#[derive(Debug, Clone)]
pub struct ClassBar {
    pub solid: f64,
    pub hatched: f64,
    pub group: usize,
}

pub fn svg_class_bars(
    title: &str,
    bars: &[ClassBar],
    group_names: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let y_max = bars
        .iter()
        .map(|b| b.solid + b.hatched)
        .fold(1f64, f64::max);
    let frame = Frame {
        width: 520.0,
        height: 260.0,
        left: 60.0,
        top: 30.0,
        x_min: 0.0,
        x_max: bars.len() as f64,
        y_min: 0.0,
        y_max,
    };
    let mut svg = svg_open(700.0, 360.0);
    let _ = write!(
        svg,
        r##"<defs><pattern id="hatch" patternUnits="userSpaceOnUse" width="5" height="5" patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="5" stroke="#333" stroke-width="1.2"/></pattern></defs>
"##
    );
    axes(&mut svg, &frame, title, "class (stream order)", "samples");
    let bar_w = (frame.width / bars.len() as f64).min(14.0);
    for (i, bar) in bars.iter().enumerate() {
        let x = frame.x(i as f64);
        let col = color(bar.group);
        let y_solid = frame.y(bar.solid);
        let base = frame.y(0.0);
        if bar.solid > 0.0 {
            let _ = write!(
                svg,
                r##"<rect x="{x:.2}" y="{y_solid:.2}" width="{bar_w:.2}" height="{:.2}" fill="{col}"/>
"##,
                base - y_solid
            );
        }
        if bar.hatched > 0.0 {
            let y_top = frame.y(bar.solid + bar.hatched);
            let _ = write!(
                svg,
                r##"<rect x="{x:.2}" y="{y_top:.2}" width="{bar_w:.2}" height="{:.2}" fill="{col}" fill-opacity="0.35"/>
<rect x="{x:.2}" y="{y_top:.2}" width="{bar_w:.2}" height="{:.2}" fill="url(#hatch)"/>
"##,
                y_solid - y_top,
                y_solid - y_top
            );
        }
    }
    for (gi, name) in group_names.iter().enumerate() {
        let ly = 40.0 + 16.0 * gi as f64;
        let _ = write!(
            svg,
            r##"<rect x="600" y="{}" width="12" height="12" fill="{}"/>
<text x="616" y="{}" font-size="10" font-family="sans-serif">{}</text>
"##,
            ly,
            color(gi),
            ly + 10.0,
            escape(name)
        );
    }
    finish(svg, path)
}

/// A captioned panel inside an image grid.
pub struct GridPanel {
    pub image: image::RgbImage,
    pub caption: String,
}

/// Lays out one or more labeled rows of panels, embedding each panel as a
/// base64 PNG.
pub fn svg_image_grid(
    title: &str,
    rows: &[(String, Vec<GridPanel>)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let cell = 128.0;
    let gap = 12.0;
    let row_h = cell + 46.0;
    let cols = rows.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    let width = 90.0 + gap + cols as f64 * (cell + gap);
    let height = 28.0 + rows.len() as f64 * row_h;
    let mut svg = svg_open(width, height);
    let _ = write!(
        svg,
        r##"<text x="{}" y="18" text-anchor="middle" font-size="13" font-family="sans-serif">{}</text>
"##,
        width / 2.0,
        escape(title)
    );
    for (ri, (row_label, panels)) in rows.iter().enumerate() {
        let y = 28.0 + ri as f64 * row_h;
        let _ = write!(
            svg,
            r##"<text x="8" y="{:.1}" font-size="11" font-family="sans-serif">{}</text>
"##,
            y + cell / 2.0,
            escape(row_label)
        );
        for (i, panel) in panels.iter().enumerate() {
            let x = 90.0 + gap + i as f64 * (cell + gap);
            let mut png = Vec::new();
            image::DynamicImage::ImageRgb8(panel.image.clone())
                .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
                .map_err(|e| crate::Error::Serde(e.to_string()))?;
            let b64 = base64::engine::general_purpose::STANDARD.encode(&png);
            let _ = write!(
                svg,
                r##"<image x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" preserveAspectRatio="none" image-rendering="pixelated" href="data:image/png;base64,{b64}"/>
<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10" font-family="sans-serif">{}</text>
"##,
                x + cell / 2.0,
                y + cell + 16.0,
                escape(&panel.caption)
            );
        }
    }
    finish(svg, path)
}

fn bounds(values: impl Iterator<Item = f64>, lo: f64, hi: f64) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        (lo, hi)
    } else if (max - min).abs() < 1e-12 {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    }
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">
<rect width="100%" height="100%" fill="white"/>
"##
    )
}

fn finish(mut svg: String, path: impl AsRef<Path>) -> Result<()> {
    svg.push_str("</svg>\n");
    std::fs::write(path.as_ref(), svg)?;
    Ok(())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_contains_series_and_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chart.svg");
        let series = vec![Series {
            label: "acc".into(),
            points: vec![(1.0, 93.3), (2.0, 94.7), (4.0, 95.8)],
        }];
        svg_line_chart("t", "x", "y", &series, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("<polyline"));
        assert_eq!(text.matches("<circle").count(), 3);
    }

    #[test]
    fn class_bars_emit_hatched_segments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bars.svg");
        let bars = vec![
            ClassBar { solid: 10.0, hatched: 0.0, group: 0 },
            ClassBar { solid: 5.0, hatched: 5.0, group: 1 },
        ];
        svg_class_bars("d", &bars, &["task 0".into(), "task 1".into()], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("url(#hatch)"));
    }

    #[test]
    fn image_grid_embeds_one_png_per_panel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.svg");
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([10, 200, 30]));
        let panels: Vec<GridPanel> = (0..3)
            .map(|i| GridPanel {
                image: img.clone(),
                caption: format!("p{i}"),
            })
            .collect();
        svg_image_grid("grid", &[("model".into(), panels)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<image ").count(), 3);
        assert!(text.contains("base64"));
    }
}
