//! File emission: CSV matrices, JSON records and SVG heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::analysis::ConsistencyDistribution;
use crate::error::{Error, Result};

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    Ok(())
}

/// Writes through a temporary sibling and renames, so a failed task never
/// leaves a truncated file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

/// Square (or rectangular) labelled matrix as CSV: a header row with the
/// column ids, then one row per row id.
pub fn matrix_csv(corner: &str, rows: &[String], cols: &[String], values: &Array2<f64>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    let mut header = vec![corner.to_string()];
    header.extend(cols.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, id) in rows.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))
}

pub fn write_matrix_csv(path: &Path, corner: &str, rows: &[String], cols: &[String], values: &Array2<f64>) -> Result<()> {
    write_atomic(path, &matrix_csv(corner, rows, cols, values)?)
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|source| Error::Json {
        context: "serializing report".into(),
        source,
    })?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value)?)
}

/// Decreasing median; ties by set ids so the order is total.
pub fn sort_distributions(d: &mut [ConsistencyDistribution]) {
    d.sort_by(|a, b| {
        b.summary
            .median
            .total_cmp(&a.summary.median)
            .then_with(|| a.theta_set.cmp(&b.theta_set))
            .then_with(|| a.phi_set.cmp(&b.phi_set))
    });
}

/// Fixed color scale of a heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorScale {
    /// `[0, 1]`, white to dark blue.
    Unit,
    /// `[-1, 1]`, blue through white to red.
    Signed,
}

impl ColorScale {
    pub fn range(self) -> (f64, f64) {
        match self {
            ColorScale::Unit => (0.0, 1.0),
            ColorScale::Signed => (-1.0, 1.0),
        }
    }

    /// Hex color of `v`; values outside the range are clamped, NaN is grey.
    pub fn color(self, v: f64) -> String {
        if v.is_nan() {
            return "#999999".into();
        }
        let lerp = |a: [f64; 3], b: [f64; 3], t: f64| -> String {
            let c: Vec<u8> = (0..3).map(|i| (a[i] + (b[i] - a[i]) * t).round() as u8).collect();
            format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
        };
        const WHITE: [f64; 3] = [255.0, 255.0, 255.0];
        const BLUE: [f64; 3] = [8.0, 48.0, 107.0];
        const RED: [f64; 3] = [103.0, 0.0, 13.0];
        match self {
            ColorScale::Unit => lerp(WHITE, BLUE, v.clamp(0.0, 1.0)),
            ColorScale::Signed => {
                let v = v.clamp(-1.0, 1.0);
                if v < 0.0 {
                    lerp(WHITE, BLUE, -v)
                } else {
                    lerp(WHITE, RED, v)
                }
            }
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Heatmap of a labelled square matrix.
pub fn heatmap_svg(title: &str, labels: &[String], values: &Array2<f64>, scale: ColorScale) -> String {
    const CELL: usize = 14;
    const MARGIN: usize = 160;
    let m = labels.len();
    let size = MARGIN + m * CELL + 80;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="4" y="14" font-size="12">{}</text>"#, escape(title));
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN + i * CELL + CELL - 3;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, MARGIN - 4, escape(label));
        let x = MARGIN + i * CELL + CELL - 3;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-90 {x} {})">{}</text>"#,
            MARGIN - 4,
            MARGIN - 4,
            escape(label)
        );
    }
    for i in 0..m {
        for j in 0..m {
            let v = values[[i, j]];
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"><title>{} / {}: {v}</title></rect>"#,
                MARGIN + j * CELL,
                MARGIN + i * CELL,
                scale.color(v),
                escape(&labels[i]),
                escape(&labels[j]),
            );
        }
    }
    // color bar
    let (lo, hi) = scale.range();
    let bar_x = MARGIN + m * CELL + 20;
    for k in 0..=20 {
        let v = hi - (hi - lo) * k as f64 / 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{bar_x}" y="{}" width="12" height="6" fill="{}"/>"#,
            MARGIN + k * 6,
            scale.color(v)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">{hi}</text>"#, bar_x + 16, MARGIN + 6);
    let _ = writeln!(s, r#"<text x="{}" y="{}">{lo}</text>"#, bar_x + 16, MARGIN + 126);
    s.push_str("</svg>\n");
    s
}

pub fn write_heatmap(path: &Path, title: &str, labels: &[String], values: &Array2<f64>, scale: ColorScale) -> Result<()> {
    write_atomic(path, heatmap_svg(title, labels, values, scale).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Summary;
    use crate::math::Measure;
    use ndarray::array;

    #[test]
    fn csv_layout() {
        let ids = vec!["a".to_string(), "b,c".to_string()];
        let out = matrix_csv("model", &ids, &ids, &array![[1.0, 0.25], [0.25, 1.0]]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "model,a,\"b,c\"\na,1,0.25\n\"b,c\",0.25,1\n"
        );
    }

    #[test]
    fn diagonal_renders_at_scale_max() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let svg = heatmap_svg("t", &ids, &array![[1.0, 0.3], [0.3, 1.0]], ColorScale::Unit);
        let max = ColorScale::Unit.color(1.0);
        assert_eq!(max, "#08306b");
        assert_eq!(svg.matches(&format!("fill=\"{max}\"><title>")).count(), 2);
        assert_eq!(ColorScale::Signed.color(0.0), "#ffffff");
        assert_eq!(ColorScale::Signed.color(1.0), "#67000d");
        assert_eq!(ColorScale::Unit.color(2.0), max);
    }

    fn dist(theta: &str, median: f64) -> ConsistencyDistribution {
        ConsistencyDistribution {
            theta_set: theta.into(),
            phi_set: "x".into(),
            measure: Measure::CkaLinear,
            dataset_pairs: vec![],
            samples: vec![median],
            summary: Summary::of(&[median]).unwrap(),
        }
    }

    #[test]
    fn distributions_sorted_by_decreasing_median() {
        let mut d = vec![dist("a", 0.2), dist("b", 0.9), dist("c", 0.5), dist("d", 0.9)];
        sort_distributions(&mut d);
        let order: Vec<_> = d.iter().map(|x| x.theta_set.as_str()).collect();
        assert_eq!(order, ["b", "d", "c", "a"]);
        let json = to_json(&d).unwrap();
        let back: Vec<ConsistencyDistribution> = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn atomic_write_creates_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b/c.json");
        write_json(&p, &[1, 2]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "[\n  1,\n  2\n]\n");
        assert!(!p.with_extension("tmp").exists());
    }
}
