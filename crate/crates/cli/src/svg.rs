//! Static SVG line charts, one panel per group, with optional shaded bands.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 270.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 42.0;
const HEADER: f64 = 34.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Default)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// `(x, low, high)` triples drawn as a translucent band.
    pub band: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub panels: Vec<Panel>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.0 {
        2.0
    } else if f < 7.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Tick positions covering `[lo, hi]`, and the widened range they span.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64, f64) {
    let (lo, hi) = if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 0.5 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    };
    let step = nice_step(hi - lo);
    let start = (lo / step).floor() * step;
    let end = (hi / step).ceil() * step;
    let n = ((end - start) / step).round() as usize;
    let t = (0..=n).map(|i| start + i as f64 * step).collect();
    (t, start, end)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let n = self.panels.len().max(1);
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let width = cols as f64 * PANEL_W;
        let height = HEADER + rows as f64 * PANEL_H;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            width / 2.0,
            escape(&self.title)
        );
        for (i, panel) in self.panels.iter().enumerate() {
            let ox = (i % cols) as f64 * PANEL_W;
            let oy = HEADER + (i / cols) as f64 * PANEL_H;
            self.draw_panel(&mut out, panel, ox, oy);
        }
        out.push_str("</svg>\n");
        out
    }

    fn draw_panel(&self, out: &mut String, panel: &Panel, ox: f64, oy: f64) {
        let xs = panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let ys = panel
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1).chain(s.band.iter().flat_map(|b| [b.1, b.2])));
        let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let (ymin, ymax) = ys
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        let (xmin, xmax) = if xmin.is_finite() { (xmin, xmax) } else { (0.0, 1.0) };
        let (ymin, ymax) = if ymin.is_finite() { (ymin, ymax) } else { (0.0, 1.0) };
        let (xt, x0, x1) = ticks(xmin, xmax);
        let (yt, y0, y1) = ticks(ymin, ymax);

        let pw = PANEL_W - MARGIN_L - MARGIN_R;
        let ph = PANEL_H - MARGIN_T - MARGIN_B;
        let left = ox + MARGIN_L;
        let top = oy + MARGIN_T;
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            left + pw / 2.0,
            oy + 18.0,
            escape(&panel.title)
        );
        for &t in &yt {
            let y = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                left + pw,
                left - 5.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        for &t in &xt {
            let x = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#f0f0f0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                top + ph,
                top + ph + 15.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            out,
            r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            top + ph + 32.0,
            escape(&self.x_label)
        );
        let (lx, ly) = (ox + 14.0, top + ph / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{lx}" y="{ly}" text-anchor="middle" transform="rotate(-90 {lx} {ly})">{}</text>"#,
            escape(&self.y_label)
        );

        for (k, s) in panel.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            if !s.band.is_empty() {
                let mut pts: Vec<String> = s.band.iter().map(|b| format!("{:.2},{:.2}", sx(b.0), sy(b.2))).collect();
                pts.extend(s.band.iter().rev().map(|b| format!("{:.2},{:.2}", sx(b.0), sy(b.1))));
                let _ = writeln!(
                    out,
                    r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                    pts.join(" ")
                );
            }
            let pts: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
                pts.join(" ")
            );
            let ky = top + 12.0 + 14.0 * k as f64;
            let kx = left + pw - 70.0;
            let _ = writeln!(
                out,
                r#"<line x1="{kx}" y1="{ky}" x2="{}" y2="{ky}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                kx + 16.0,
                kx + 20.0,
                ky + 4.0,
                escape(&s.label)
            );
        }
    }
}

/// How to map CSV columns onto a chart.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    /// Column holding a half-width drawn as a band around `y`.
    pub band: Option<String>,
    pub series: Option<String>,
    pub panels: Vec<String>,
    /// Keep only rows where `column == value`.
    pub filters: Vec<(String, String)>,
    pub title: String,
}

impl PlotSpec {
    /// Defaults for the curve files written by `distill compare`.
    pub fn curves(header: &[String], title: &str) -> Self {
        let has = |c: &str| header.iter().any(|h| h == c);
        Self {
            x: "epoch".into(),
            y: "mean".into(),
            band: has("std").then(|| "std".into()),
            series: has("framework").then(|| "framework".into()),
            panels: ["mode", "quantity"].iter().filter(|c| has(c)).map(|c| c.to_string()).collect(),
            filters: Vec::new(),
            title: title.into(),
        }
    }
}

pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn chart_from_table(header: &[String], rows: &[Vec<String>], spec: &PlotSpec) -> Result<Chart> {
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column {name:?} not found in {header:?}"))
    };
    let xi = col(&spec.x)?;
    let yi = col(&spec.y)?;
    let bi = spec.band.as_deref().map(col).transpose()?;
    let si = spec.series.as_deref().map(col).transpose()?;
    let pis: Vec<usize> = spec.panels.iter().map(|p| col(p)).collect::<Result<_>>()?;
    let fis: Vec<(usize, &str)> = spec
        .filters
        .iter()
        .map(|(c, v)| Ok((col(c)?, v.as_str())))
        .collect::<Result<_>>()?;

    // insertion order keeps panels and series in file order
    let mut panels: Vec<(String, Vec<(String, Series)>)> = Vec::new();
    for row in rows {
        if fis.iter().any(|&(i, v)| row[i] != v) {
            continue;
        }
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .with_context(|| format!("non-numeric {:?} in column {:?}", row[i], header[i]))
        };
        let (x, y) = (num(xi)?, num(yi)?);
        let ptitle = pis.iter().map(|&i| row[i].as_str()).collect::<Vec<_>>().join(" / ");
        let slabel = si.map_or_else(|| spec.y.clone(), |i| row[i].clone());
        let p = match panels.iter().position(|p| p.0 == ptitle) {
            Some(k) => k,
            None => {
                panels.push((ptitle, Vec::new()));
                panels.len() - 1
            }
        };
        let series = &mut panels[p].1;
        let k = match series.iter().position(|s| s.0 == slabel) {
            Some(k) => k,
            None => {
                series.push((
                    slabel.clone(),
                    Series {
                        label: slabel,
                        ..Default::default()
                    },
                ));
                series.len() - 1
            }
        };
        let s = &mut series[k].1;
        s.points.push((x, y));
        if let Some(b) = bi {
            let w = num(b)?;
            s.band.push((x, y - w, y + w));
        }
    }
    if panels.is_empty() {
        bail!("no rows left to plot");
    }
    let mut chart = Chart {
        title: spec.title.clone(),
        x_label: spec.x.clone(),
        y_label: spec.y.clone(),
        panels: Vec::new(),
    };
    for (title, series) in panels {
        let mut series: Vec<Series> = series.into_iter().map(|s| s.1).collect();
        for s in &mut series {
            let mut order: Vec<usize> = (0..s.points.len()).collect();
            order.sort_by(|&a, &b| s.points[a].0.total_cmp(&s.points[b].0));
            s.points = order.iter().map(|&i| s.points[i]).collect();
            if !s.band.is_empty() {
                s.band = order.iter().map(|&i| s.band[i]).collect();
            }
        }
        chart.panels.push(Panel { title, series });
    }
    Ok(chart)
}

/// Groups of rows by a key column, for callers that split one file into several charts.
pub fn distinct_values(header: &[String], rows: &[Vec<String>], column: &str) -> Vec<String> {
    let Some(i) = header.iter().position(|h| h == column) else {
        return Vec::new();
    };
    let mut seen = BTreeMap::new();
    for (k, r) in rows.iter().enumerate() {
        seen.entry(r[i].clone()).or_insert(k);
    }
    let mut v: Vec<(String, usize)> = seen.into_iter().collect();
    v.sort_by_key(|p| p.1);
    v.into_iter().map(|p| p.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_ranges() {
        let (t, lo, hi) = ticks(0.03, 0.97);
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0).abs() < 1e-12);
        assert_eq!(t.len(), 6);
        let (t, _, _) = ticks(2.0, 2.0);
        assert!(t.len() >= 2);
    }

    #[test]
    fn chart_groups_rows() {
        let text = "mode,framework,epoch,quantity,mean,std,n\n\
                    trained,RID,2,test_acc,0.6,0.1,3\n\
                    trained,RID,1,test_acc,0.5,0.1,3\n\
                    trained,BAS,1,test_acc,0.4,0.0,3\n\
                    untrained,RID,1,test_acc,0.3,0.0,3\n";
        let (h, rows) = read_table(text).unwrap();
        let chart = chart_from_table(&h, &rows, &PlotSpec::curves(&h, "acc")).unwrap();
        assert_eq!(chart.panels.len(), 2);
        assert_eq!(chart.panels[0].title, "trained / test_acc");
        assert_eq!(chart.panels[0].series.len(), 2);
        assert_eq!(chart.panels[0].series[0].points, vec![(1.0, 0.5), (2.0, 0.6)]);
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn filters_and_missing_columns() {
        let text = "mode,framework,epoch,quantity,mean,std,n\ntrained,RID,1,red,0.5,0,1\ntrained,RID,1,syn,0.1,0,1\n";
        let (h, rows) = read_table(text).unwrap();
        let mut spec = PlotSpec::curves(&h, "pid");
        spec.filters.push(("quantity".into(), "red".into()));
        assert_eq!(chart_from_table(&h, &rows, &spec).unwrap().panels.len(), 1);
        spec.y = "nope".into();
        assert!(chart_from_table(&h, &rows, &spec).is_err());
    }
}
