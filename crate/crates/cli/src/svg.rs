//! Minimal SVG line charts for diagram and history CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    markers: Vec<(f64, f64)>,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    log_y: bool,
    series: Vec<Series>,
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 * (1.0 + hi.abs()) {
        return Some((lo - 0.5, hi + 0.5));
    }
    let pad = 0.05 * (hi - lo);
    Some((lo - pad, hi + pad))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn render(&self) -> String {
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let usable = |p: &&(f64, f64)| p.0.is_finite() && ty(p.1).is_finite();
        let all = || {
            self.series
                .iter()
                .flat_map(|s| s.points.iter().chain(&s.markers))
                .filter(usable)
        };
        let (x0, x1) = bounds(all().map(|p| p.0)).unwrap_or((0.0, 1.0));
        let (y0, y1) = bounds(all().map(|p| ty(p.1))).unwrap_or((0.0, 1.0));
        let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| HEIGHT - MARGIN - (ty(y) - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (MARGIN + f * pw, HEIGHT - MARGIN - f * ph);
            let ylab = if self.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
            let _ = writeln!(
                s,
                r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#,
                HEIGHT - MARGIN + 18.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#,
                MARGIN - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            esc(&self.y_label)
        );

        for (i, ser) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = ser
                .points
                .iter()
                .filter(usable)
                .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
                .collect();
            if !pts.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
                    pts.join(" "),
                    esc(&ser.label)
                );
            }
            for m in ser.markers.iter().filter(usable) {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    sx(m.0),
                    sy(m.1)
                );
            }
            let ly = MARGIN + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
                WIDTH - MARGIN - 8.0,
                esc(&ser.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, String> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| format!("csv has no column {name:?}"))
}

fn num(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64, String> {
    rec.get(i)
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| format!("line {line}: column {} is not a number", i + 1))
}

fn diagram_chart(mut r: csv::Reader<&[u8]>) -> Result<Chart, String> {
    let h = r.headers().map_err(|e| e.to_string())?.clone();
    let (ib, il, id, iff) = (
        column(&h, "branch_id")?,
        column(&h, "lambda")?,
        column(&h, "diagnostic")?,
        column(&h, "is_fold")?,
    );
    let mut branches: BTreeMap<u64, Series> = BTreeMap::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = k + 2;
        let id_val: u64 = rec
            .get(ib)
            .unwrap_or("")
            .parse()
            .map_err(|_| format!("line {line}: bad branch_id"))?;
        let p = (num(&rec, il, line)?, num(&rec, id, line)?);
        let s = branches.entry(id_val).or_insert_with(|| Series {
            label: format!("branch {id_val}"),
            points: Vec::new(),
            markers: Vec::new(),
        });
        s.points.push(p);
        if rec.get(iff) == Some("true") {
            s.markers.push(p);
        }
    }
    Ok(Chart {
        title: "Bifurcation diagram".into(),
        x_label: "lambda".into(),
        y_label: "diagnostic".into(),
        log_y: false,
        series: branches.into_values().collect(),
    })
}

fn history_chart(mut r: csv::Reader<&[u8]>) -> Result<Chart, String> {
    let h = r.headers().map_err(|e| e.to_string())?.clone();
    let (ii, io, ia) = (column(&h, "iteration")?, column(&h, "objective")?, column(&h, "accepted")?);
    let mut accepted = Series {
        label: "accepted".into(),
        points: Vec::new(),
        markers: Vec::new(),
    };
    let mut rejected = Series {
        label: "rejected".into(),
        points: Vec::new(),
        markers: Vec::new(),
    };
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = k + 2;
        let p = (num(&rec, ii, line)?, num(&rec, io, line)?);
        if rec.get(ia) == Some("true") {
            accepted.points.push(p);
        } else {
            rejected.markers.push(p);
        }
    }
    Ok(Chart {
        title: "Optimization history".into(),
        x_label: "iteration".into(),
        y_label: "objective (log scale)".into(),
        log_y: true,
        series: vec![accepted, rejected],
    })
}

/// Renders a diagram CSV or an optimization history CSV, detected by header.
pub fn render_csv(text: &str) -> Result<String, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let has = |n: &str| headers.iter().any(|h| h == n);
    let chart = if has("branch_id") {
        diagram_chart(r)?
    } else if has("objective") {
        history_chart(r)?
    } else {
        return Err("csv is neither a diagram nor an optimization history".into());
    };
    Ok(chart.render())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagram_has_one_polyline_per_branch_and_fold_markers() {
        let csv = "branch_id,lambda,diagnostic,is_fold\n0,0,0,false\n0,1,0,false\n1,1.2,1,true\n1,1.5,2,false\n";
        let svg = render_csv(csv).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn history_skips_nonpositive_objectives() {
        let csv = "iteration,objective,step,accepted,reason\n1,1.0,1,true,\n2,NaN,0.5,false,tangled\n3,0,1,true,\n";
        let svg = render_csv(csv).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("log scale"));
    }

    #[test]
    fn unknown_layout_is_rejected() {
        assert!(render_csv("a,b\n1,2\n").is_err());
        assert!(render_csv("branch_id,lambda,diagnostic,is_fold\nx,1,2,false\n").is_err());
    }
}
