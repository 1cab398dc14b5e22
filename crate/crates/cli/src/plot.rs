//! Static SVG charts. Charts are built from CSV tables only, so re-rendering
//! a run directory reproduces the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// A CSV file read into named numeric columns. Unparsable cells become NaN.
#[derive(Clone, Debug)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let headers = reader.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            rows.push(record?.iter().map(|c| c.trim().parse().unwrap_or(f64::NAN)).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> anyhow::Result<Vec<f64>> {
        let i = self.headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("missing column {name}"))?;
        Ok(self.rows.iter().map(|r| r.get(i).copied().unwrap_or(f64::NAN)).collect())
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
    Steps,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Symmetric error bars, drawn for marker series.
    pub err: Option<Vec<f64>>,
    pub style: Style,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>, style: Style) -> Self {
        Self { name: name.into(), x, y, err: None, style }
    }

    pub fn with_errors(mut self, err: Vec<f64>) -> Self {
        self.err = Some(err);
        self
    }
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let t = if log { v.log10() } else { v };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            (lo, hi) = (lo - pad, hi + pad);
        }
        let pad = 0.04 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad, log }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let t = if self.log { v.log10() } else { v };
        Some(from + (t - self.lo) / (self.hi - self.lo) * (to - from))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 6).max(1);
            return (a..=b).step_by(step as usize).map(|e| (10f64.powi(e), format!("1e{e}"))).collect();
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let (first, last) = ((self.lo / step).ceil() as i64, (self.hi / step + 1e-9).floor() as i64);
        (first..=last)
            .map(|k| {
                let v = if k == 0 { 0.0 } else { k as f64 * step };
                (v, fmt_tick(v))
            })
            .collect()
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn render(&self) -> String {
        let all_x = self.series.iter().flat_map(|s| s.x.iter().copied());
        let all_y = self.series.iter().flat_map(|s| {
            let errs = s.err.clone().unwrap_or_else(|| vec![0.0; s.y.len()]);
            s.y.iter().zip(errs).flat_map(|(&y, e)| [y - e, y + e]).collect::<Vec<_>>()
        });
        let (ax, ay) = (Axis::fit(all_x, self.log_x), Axis::fit(all_y, self.log_y));
        let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (x0 + x1) / 2.0, escape(&self.title));
        let _ = writeln!(svg, r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);

        for (v, label) in ax.ticks() {
            if let Some(px) = ax.map(v, x0, x1) {
                let _ = writeln!(svg, r##"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"##, y0 + 5.0);
                let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, y0 + 18.0);
            }
        }
        for (v, label) in ay.ticks() {
            if let Some(py) = ay.map(v, y0, y1) {
                let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
                let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, x0 - 8.0, py + 4.0);
            }
        }
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, escape(&self.x_label));
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            let points: Vec<(usize, f64, f64)> = s
                .x
                .iter()
                .zip(&s.y)
                .enumerate()
                .filter_map(|(k, (&x, &y))| Some((k, ax.map(x, x0, x1)?, ay.map(y, y0, y1)?)))
                .collect();
            match s.style {
                Style::Line | Style::Steps if points.len() > 1 => {
                    let mut path = String::new();
                    for (n, &(_, px, py)) in points.iter().enumerate() {
                        if n == 0 {
                            let _ = write!(path, "M{px:.2},{py:.2}");
                        } else if s.style == Style::Steps {
                            let _ = write!(path, " V{py:.2} H{px:.2}");
                        } else {
                            let _ = write!(path, " L{px:.2},{py:.2}");
                        }
                    }
                    let _ = writeln!(svg, r#"<path d="{path}" fill="none" stroke="{colour}" stroke-width="1.6"/>"#);
                }
                _ => {
                    for &(k, px, py) in &points {
                        if let Some(e) = s.err.as_ref().map(|e| e[k]).filter(|e| e.is_finite() && *e > 0.0) {
                            let lo = ay.map(s.y[k] - e, y0, y1).unwrap_or(y0);
                            let hi = ay.map(s.y[k] + e, y0, y1).unwrap_or(y1);
                            let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}" stroke="{colour}"/>"#);
                        }
                        let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{colour}"/>"#);
                    }
                }
            }
            let ly = MARGIN_TOP + 16.0 + 18.0 * i as f64;
            let _ = writeln!(svg, r#"<rect x="{:.1}" y="{:.1}" width="12" height="4" fill="{colour}"/>"#, x1 + 12.0, ly - 6.0);
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, x1 + 30.0, escape(&s.name));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Flow chart: `g_j` against `j` on log-log axes with the `1/(β_∞ j)` guide
/// computed from the `beta_j` column.
pub fn flow_chart(table: &Table) -> anyhow::Result<Chart> {
    let j = table.column("j")?;
    let g = table.column("g")?;
    let beta = table.column("beta_j")?;
    let beta_inf = beta.iter().rev().copied().find(|b| b.is_finite()).unwrap_or(f64::NAN);
    let (x, y): (Vec<f64>, Vec<f64>) = j.iter().zip(&g).filter(|(j, _)| **j >= 1.0).map(|(&j, &g)| (j, g)).unzip();
    let guide: Vec<f64> = x.iter().map(|j| 1.0 / (beta_inf * j)).collect();
    Ok(Chart {
        title: "Quartic coupling flow".into(),
        x_label: "scale j".into(),
        y_label: "g_j".into(),
        log_x: true,
        log_y: true,
        series: vec![Series::new("g_j", x.clone(), y, Style::Line), Series::new("1/(beta_inf j)", x, guide, Style::Line)],
    })
}

/// Susceptibility against volume on log-log axes: one line per predicted
/// column and a reference slope anchored at the first zero-mode value.
pub fn chi_chart(table: &Table) -> anyhow::Result<Chart> {
    let volume = table.column("volume")?;
    let exponent = table.column("chi_exponent")?.first().copied().unwrap_or(0.5);
    let mut series = Vec::new();
    for h in table.headers.iter().filter(|h| h.starts_with("chi_")) {
        if h == "chi_exponent" {
            continue;
        }
        series.push(Series::new(h.clone(), volume.clone(), table.column(h)?, Style::Markers));
    }
    if let (Some(&v0), Ok(c0)) = (volume.first(), table.column("chi_0")) {
        let slope = volume.iter().map(|v| c0[0] * (v / v0).powf(exponent)).collect();
        series.push(Series::new(format!("|Lambda|^{exponent}"), volume.clone(), slope, Style::Line));
    }
    Ok(Chart {
        title: "Susceptibility scaling".into(),
        x_label: "volume |Lambda|".into(),
        y_label: "chi".into(),
        log_x: true,
        log_y: true,
        series,
    })
}

/// Two-point function with error bars and the predicted plateau line.
pub fn two_point_chart(table: &Table) -> anyhow::Result<Chart> {
    let r = table.column("r")?;
    let mut series = vec![Series::new("G(r)", r.clone(), table.column("mean")?, Style::Markers).with_errors(table.column("error")?)];
    if table.has("plateau") {
        series.push(Series::new("plateau", r, table.column("plateau")?, Style::Line));
    }
    Ok(Chart {
        title: "Two-point function along the axes".into(),
        x_label: "r".into(),
        y_label: "G(r)".into(),
        log_x: false,
        log_y: true,
        series,
    })
}

/// Zero-mode histogram against the quartic marginal density.
pub fn histogram_chart(table: &Table) -> anyhow::Result<Chart> {
    let lo = table.column("lo")?;
    let hi = table.column("hi")?;
    let centre: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(Chart {
        title: "Rescaled zero mode".into(),
        x_label: "Phi / b_N".into(),
        y_label: "density".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series::new("measured", centre.clone(), table.column("density")?, Style::Steps),
            Series::new("quartic", centre, table.column("quartic")?, Style::Line),
        ],
    })
}

/// Binder ratio against `ν`, one series per lattice side.
pub fn scan_chart(table: &Table) -> anyhow::Result<Chart> {
    let side = table.column("side")?;
    let nu = table.column("nu")?;
    let binder = table.column("binder")?;
    let err = table.column("binder_error")?;
    let mut sides: Vec<f64> = side.clone();
    sides.dedup();
    sides.sort_by(f64::total_cmp);
    sides.dedup();
    let series = sides
        .iter()
        .map(|&s| {
            let pick = |v: &[f64]| v.iter().zip(&side).filter(|(_, t)| **t == s).map(|(x, _)| *x).collect::<Vec<_>>();
            Series::new(format!("side {s}"), pick(&nu), pick(&binder), Style::Markers).with_errors(pick(&err))
        })
        .collect();
    Ok(Chart {
        title: "Binder ratio scan".into(),
        x_label: "nu".into(),
        y_label: "E[m^4]/E[m^2]^2".into(),
        log_x: false,
        log_y: false,
        series,
    })
}

/// CSV inputs recognised in a run directory and the SVG each produces.
pub const RENDERINGS: [(&str, &str); 5] = [
    ("trajectory.csv", "flow.svg"),
    ("predictions.csv", "chi_vs_volume.svg"),
    ("two_point.csv", "two_point.svg"),
    ("histogram.csv", "histogram.svg"),
    ("scan.csv", "binder_scan.svg"),
];

/// Renders `dir/csv_name` into `dir/svg_name`.
pub fn render_one(dir: &Path, csv_name: &str, svg_name: &str) -> anyhow::Result<()> {
    let table = Table::read(&dir.join(csv_name))?;
    let chart = match csv_name {
        "trajectory.csv" => flow_chart(&table)?,
        "predictions.csv" => chi_chart(&table)?,
        "two_point.csv" => two_point_chart(&table)?,
        "histogram.csv" => histogram_chart(&table)?,
        "scan.csv" => scan_chart(&table)?,
        other => return Err(anyhow!("no chart is defined for {other}")),
    };
    std::fs::write(dir.join(svg_name), chart.render())?;
    Ok(())
}

/// Renders every recognised CSV in `dir`; returns the SVG file names written.
pub fn render_dir(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut written = Vec::new();
    for (csv_name, svg_name) in RENDERINGS {
        if dir.join(csv_name).exists() {
            render_one(dir, csv_name, svg_name)?;
            written.push(svg_name.to_owned());
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_axis_drops_nonpositive_points() {
        let chart = Chart {
            title: "t <1>".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            series: vec![Series::new("s", vec![0.0, 1.0, 10.0, 100.0], vec![1.0, 2.0, -1.0, 4.0], Style::Markers)],
        };
        let svg = chart.render();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn linear_ticks_are_round() {
        let axis = Axis::fit([0.0, 0.93].into_iter(), false);
        let ticks = axis.ticks();
        assert!(ticks.iter().any(|(v, l)| *v == 0.0 && l == "0"));
        assert!(ticks.iter().any(|(_, l)| l == "0.5"));
        let fine = Axis::fit([0.0, 0.7].into_iter(), false).ticks();
        assert!(fine.iter().any(|(_, l)| l == "0.6"), "{fine:?}");
    }

    #[test]
    fn rendering_is_a_pure_function_of_the_csv() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("two_point.csv"), "r,mean,error,plateau\n0,2.0,0.1,0.5\n1,1.0,0.05,0.5\n2,0.7,0.05,0.5\n").unwrap();
        assert_eq!(render_dir(dir.path()).unwrap(), vec!["two_point.svg"]);
        let first = std::fs::read(dir.path().join("two_point.svg")).unwrap();
        render_dir(dir.path()).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("two_point.svg")).unwrap());
    }
}
