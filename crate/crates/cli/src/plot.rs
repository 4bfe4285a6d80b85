//! SVG charts drawn from the CSV tables alone, so a chart can always be
//! regenerated from the table it was made from.

use std::fmt::Write;

use crate::error::{CliError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
    color: &'static str,
    dashed: bool,
    markers: bool,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

/// Truth and per-estimator mean curves from an `x,truth,<estimator>...` table.
pub fn overlay_svg(curves_csv: &str) -> Result<String> {
    let mut reader = csv::Reader::from_reader(curves_csv.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[0] != "x" {
        return Err(CliError::Table("expected columns x,truth,...".into()));
    }
    let mut columns: Vec<Vec<(f64, f64)>> = vec![Vec::new(); header.len() - 1];
    for record in reader.records() {
        let record = record?;
        let x = parse(&record[0])?;
        for (c, field) in record.iter().skip(1).enumerate() {
            if !field.is_empty() {
                columns[c].push((x, parse(field)?));
            }
        }
    }
    let series = header[1..]
        .iter()
        .zip(columns)
        .enumerate()
        .map(|(i, (name, points))| Series {
            name: name.clone(),
            points,
            color: if i == 0 {
                "#000000"
            } else {
                PALETTE[(i - 1) % PALETTE.len()]
            },
            dashed: i > 0,
            markers: false,
        })
        .collect();
    Chart {
        title: "true density and mean estimates".into(),
        x_label: "x".into(),
        y_label: "density".into(),
        series,
    }
    .render()
}

/// One line per estimator of `column` against the sample count, from an
/// `estimator,m,tv_mean,...` table.
pub fn metric_svg(metrics_csv: &str, column: &str) -> Result<String> {
    let mut reader = csv::Reader::from_reader(metrics_csv.as_bytes());
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Table(format!("no column {name:?}")))
    };
    let (est, m, value) = (find("estimator")?, find("m")?, find(column)?);
    let mut series: Vec<Series> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let point = (parse(&record[m])?, parse(&record[value])?);
        match series.iter_mut().find(|s| s.name == record[est]) {
            Some(s) => s.points.push(point),
            None => series.push(Series {
                name: record[est].to_string(),
                points: vec![point],
                color: PALETTE[series.len() % PALETTE.len()],
                dashed: false,
                markers: true,
            }),
        }
    }
    Chart {
        title: format!("{column} against the number of samples"),
        x_label: "number of samples".into(),
        y_label: column.into(),
        series,
    }
    .render()
}

fn parse(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| CliError::Table(format!("not a number: {field:?}")))
}

impl Chart {
    fn render(&self) -> Result<String> {
        let finite = || {
            self.series
                .iter()
                .flat_map(|s| &s.points)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
        };
        let (x_lo, x_hi) = span(finite().map(|p| p.0));
        let (y_lo, y_hi) = span(finite().map(|p| p.1).chain([0.0]));
        let x_ticks = ticks(x_lo, x_hi);
        let y_ticks = ticks(y_lo, y_hi);
        let (x_lo, x_hi) = (x_ticks[0].min(x_lo), x_ticks[x_ticks.len() - 1].max(x_hi));
        let (y_lo, y_hi) = (y_ticks[0].min(y_lo), y_ticks[y_ticks.len() - 1].max(y_hi));
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = |y: f64| TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

        let mut s = String::new();
        let w = &mut s;
        // writing to a String cannot fail
        let _ = writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        for &t in &x_ticks {
            let _ = writeln!(
                w,
                r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{b:.1}" stroke="#e0e0e0"/><text x="{x:.1}" y="{ty:.1}" text-anchor="middle">{}</text>"##,
                label(t),
                x = sx(t),
                b = TOP + plot_h,
                ty = TOP + plot_h + 16.0
            );
        }
        for &t in &y_ticks {
            let _ = writeln!(
                w,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{r:.1}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{tx:.1}" y="{ty:.1}" text-anchor="end">{}</text>"##,
                label(t),
                y = sy(t),
                r = LEFT + plot_w,
                tx = LEFT - 6.0,
                ty = sy(t) + 4.0
            );
        }
        let _ = writeln!(
            w,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            w,
            r#"<text x="16" y="{y:.1}" text-anchor="middle" transform="rotate(-90 16 {y:.1})">{}</text>"#,
            escape(&self.y_label),
            y = TOP + plot_h / 2.0
        );
        for (i, series) in self.series.iter().enumerate() {
            let path: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let dash = if series.dashed {
                r#" stroke-dasharray="6 3""#
            } else {
                ""
            };
            if !path.is_empty() {
                let _ = writeln!(
                    w,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                    series.color,
                    path.join(" ")
                );
            }
            if series.markers {
                for p in &path {
                    let (cx, cy) = p.split_once(',').unwrap_or_default();
                    let _ = writeln!(
                        w,
                        r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{}"/>"#,
                        series.color
                    );
                }
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + plot_w + 12.0;
            let _ = writeln!(
                w,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="1.5"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 24.0,
                series.color,
                lx + 30.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        let _ = writeln!(w, "</svg>");
        Ok(s)
    }
}

/// Smallest and largest value, widened when degenerate.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// About five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let magnitude = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|f| f * magnitude)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * magnitude);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover() {
        assert_eq!(
            ticks(0.0, 1.0),
            vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]
        );
        let t = ticks(50.0, 400.0);
        assert!(t[0] <= 50.0 && *t.last().unwrap() >= 400.0);
        assert_eq!(label(0.30000000000000004), "0.3");
        assert_eq!(label(-0.0), "0");
    }

    #[test]
    fn overlay_lists_every_column() {
        let svg = overlay_svg("x,truth,dpmsh,kde\n0.0,0.4,0.3,0.35\n1.0,0.2,0.25,\n").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains(">dpmsh<") && svg.contains(">kde<"));
    }

    #[test]
    fn metric_chart_groups_by_estimator() {
        let csv = "estimator,m,tv_mean,tv_std,kl_mean,kl_std\n\
                   dpmsh,50,0.1,0,0.2,0\ndpmsh,100,0.05,0,0.1,0\ngmm,50,0.2,0,0.3,0\n";
        let svg = metric_svg(csv, "tv_mean").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(metric_svg(csv, "nope").is_err());
    }
}
