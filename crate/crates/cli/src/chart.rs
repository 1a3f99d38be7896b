//! Self-contained SVG charts rendered from CSV text only.

use std::fmt::Write;

use crate::error::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf"];
const FLAG: &str = "#d62728";
const AXIS: &str = "#444444";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dots,
    LineDots,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    pub color: &'static str,
}

/// A filled rectangle in data coordinates, for region maps.
#[derive(Debug, Clone)]
pub struct Cell {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub color: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub cells: Vec<Cell>,
    /// Legend entries for cell colors.
    pub cell_legend: Vec<(String, &'static str)>,
}

/// Header and rows of a CSV document.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(chart_err)?.iter().map(str::to_owned).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(chart_err)?;
        Ok(Table { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| CliError::Chart(format!("missing column {name:?}")))
    }

    /// Numeric value, or `None` for empty and non-finite cells.
    pub fn number(&self, row: usize, col: usize) -> Option<f64> {
        self.rows[row].get(col).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite())
    }

    pub fn text(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).map(String::as_str).unwrap_or("")
    }

    fn pairs(&self, x: usize, y: usize) -> Vec<(f64, f64)> {
        (0..self.rows.len()).filter_map(|r| Some((self.number(r, x)?, self.number(r, y)?))).collect()
    }
}

fn chart_err(e: csv::Error) -> CliError {
    CliError::Chart(e.to_string())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        return format!("1e{}", v.round() as i64);
    }
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        format!("{v:.2e}")
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.04 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

impl Chart {
    fn transformed(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            Some(y)
        }
    }

    pub fn render(&self) -> Result<String, CliError> {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if let Some(ty) = self.transformed(y) {
                    xs.push(x);
                    ys.push(ty);
                }
            }
        }
        for c in &self.cells {
            xs.extend(c.x);
            ys.extend(c.y);
        }
        if xs.is_empty() {
            return Err(CliError::Chart(format!("no finite data for chart {:?}", self.title)));
        }
        let fold = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let (x0, x1) = if self.cells.is_empty() { padded(fold(&xs).0, fold(&xs).1) } else { fold(&xs) };
        let (y0, y1) = if self.cells.is_empty() { padded(fold(&ys).0, fold(&ys).1) } else { fold(&ys) };
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        for c in &self.cells {
            let (left, right) = (sx(c.x[0]), sx(c.x[1]));
            let (top, bottom) = (sy(c.y[1]), sy(c.y[0]));
            let _ = writeln!(
                svg,
                r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                right - left,
                bottom - top,
                c.color
            );
        }

        let _ = writeln!(
            svg,
            r#"<g stroke="{AXIS}" stroke-width="1" fill="none"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></g>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                svg,
                r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="{AXIS}"/>"#,
                TOP + ph,
                TOP + ph + 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 18.0,
                tick_label(xv, false)
            );
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="{AXIS}"/>"#,
                LEFT - 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 8.0,
                py + 4.0,
                tick_label(yv, self.log_y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for s in &self.series {
            let pts: Vec<(f64, f64)> =
                s.points.iter().filter_map(|&(x, y)| self.transformed(y).map(|ty| (sx(x), sy(ty)))).collect();
            if matches!(s.mark, Mark::Line | Mark::LineDots) && pts.len() > 1 {
                let mut path = String::new();
                for (x, y) in &pts {
                    let _ = write!(path, "{x:.2},{y:.2} ");
                }
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                    path.trim_end(),
                    s.color
                );
            }
            if matches!(s.mark, Mark::Dots | Mark::LineDots) || pts.len() == 1 {
                for (x, y) in &pts {
                    let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}"/>"#, s.color);
                }
            }
        }

        let legend: Vec<(&str, &str)> = self
            .series
            .iter()
            .map(|s| (s.name.as_str(), s.color))
            .chain(self.cell_legend.iter().map(|(n, c)| (n.as_str(), *c)))
            .collect();
        for (i, (name, color)) in legend.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = WIDTH - RIGHT + 12.0;
            let _ = writeln!(svg, r#"<rect x="{x}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, y - 10.0);
            let _ = writeln!(svg, r#"<text x="{}" y="{y:.2}">{}</text>"#, x + 18.0, escape(name));
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

fn series(name: &str, points: Vec<(f64, f64)>, mark: Mark, i: usize) -> Series {
    Series { name: name.to_owned(), points, mark, color: PALETTE[i % PALETTE.len()] }
}

/// One polyline per state column of a `t,x1,...` table.
pub fn trajectory_chart(csv_text: &str) -> Result<String, CliError> {
    let t = Table::parse(csv_text)?;
    let tc = t.column("t")?;
    let series = (0..t.headers.len())
        .filter(|&c| c != tc)
        .enumerate()
        .map(|(i, c)| series(&t.headers[c], t.pairs(tc, c), Mark::Line, i))
        .collect();
    Chart {
        title: "Trajectory".into(),
        x_label: "t (time units)".into(),
        y_label: "state (armament units)".into(),
        series,
        ..Default::default()
    }
    .render()
}

/// Ladder delays by index and branch; resonant points drawn in red.
pub fn ladder_chart(csv_text: &str) -> Result<String, CliError> {
    let t = Table::parse(csv_text)?;
    let (n, br, tau, res) = (t.column("n")?, t.column("branch")?, t.column("tau")?, t.column("resonant")?);
    let mut out = Vec::new();
    for (i, branch) in ["minus", "plus"].into_iter().enumerate() {
        let pts = (0..t.rows.len())
            .filter(|&r| t.text(r, br) == branch && t.text(r, res) != "true")
            .filter_map(|r| Some((t.number(r, n)?, t.number(r, tau)?)))
            .collect();
        out.push(series(branch, pts, Mark::Dots, i));
    }
    let resonant = (0..t.rows.len())
        .filter(|&r| t.text(r, res) == "true")
        .filter_map(|r| Some((t.number(r, n)?, t.number(r, tau)?)))
        .collect();
    out.push(Series { name: "resonant".into(), points: resonant, mark: Mark::Dots, color: FLAG });
    Chart {
        title: "Bifurcation ladder".into(),
        x_label: "ladder index n".into(),
        y_label: "delay tau (time units)".into(),
        series: out,
        ..Default::default()
    }
    .render()
}

/// Predicted and simulated amplitudes against `√μ`.
pub fn hopf_chart(csv_text: &str) -> Result<String, CliError> {
    let t = Table::parse(csv_text)?;
    let x = t.column("sqrt_mu")?;
    let predicted = series("predicted", t.pairs(x, t.column("predicted_amplitude")?), Mark::LineDots, 0);
    let simulated = series("simulated", t.pairs(x, t.column("simulated_amplitude")?), Mark::Dots, 1);
    Chart {
        title: "Hopf amplitude".into(),
        x_label: "sqrt(mu) (sqrt time units)".into(),
        y_label: "x amplitude (armament units)".into(),
        series: vec![predicted, simulated],
        ..Default::default()
    }
    .render()
}

/// Series term norms against the majorant on a log scale.
pub fn series_chart(csv_text: &str) -> Result<String, CliError> {
    let t = Table::parse(csv_text)?;
    let n = t.column("n")?;
    Chart {
        title: "Special-solution series terms".into(),
        x_label: "term index n".into(),
        y_label: "norm (1/time units)".into(),
        log_y: true,
        series: vec![
            series("norm M_n", t.pairs(n, t.column("norm_Mn")?), Mark::LineDots, 0),
            series("majorant", t.pairs(n, t.column("bound")?), Mark::Line, 1),
        ],
        ..Default::default()
    }
    .render()
}

/// Coefficient signals over the audit window.
pub fn coefficient_chart(csv_text: &str) -> Result<String, CliError> {
    let t = Table::parse(csv_text)?;
    let tc = t.column("t")?;
    let series = ["a", "b", "k", "l"]
        .iter()
        .enumerate()
        .map(|(i, name)| Ok(series(name, t.pairs(tc, t.column(name)?), Mark::Line, i)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Chart {
        title: "Coefficients".into(),
        x_label: "t (time units)".into(),
        y_label: "coefficient (1/time units)".into(),
        series,
        ..Default::default()
    }
    .render()
}

fn verdict_color(v: &str) -> &'static str {
    match v {
        "EAS" => "#9fd89f",
        "marginal" => "#f2d16b",
        "unstable" => "#f09a9a",
        _ => "#cccccc",
    }
}

fn edges(values: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(values.len() + 1);
    e.push(values[0] - 0.5 * (values[1] - values[0]));
    for w in values.windows(2) {
        e.push(0.5 * (w[0] + w[1]));
    }
    let n = values.len();
    e.push(values[n - 1] + 0.5 * (values[n - 1] - values[n - 2]));
    e
}

/// Stability region over `(k, τ)` when several `k` values are present,
/// otherwise the dominant root's real part along the delay grid.
pub fn sweep_chart(csv_text: &str) -> Result<String, CliError> {
    let t = Table::parse(csv_text)?;
    let (kc, tc, vc, rc) = (t.column("k")?, t.column("tau")?, t.column("verdict")?, t.column("dominant_re")?);
    let mut ks: Vec<f64> = (0..t.rows.len()).filter_map(|r| t.number(r, kc)).collect();
    let mut taus: Vec<f64> = (0..t.rows.len()).filter_map(|r| t.number(r, tc)).collect();
    for v in [&mut ks, &mut taus] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    if ks.len() >= 2 && taus.len() >= 2 {
        let (ke, te) = (edges(&ks), edges(&taus));
        let cells = (0..t.rows.len())
            .filter_map(|r| {
                let i = ks.iter().position(|&k| Some(k) == t.number(r, kc))?;
                let j = taus.iter().position(|&x| Some(x) == t.number(r, tc))?;
                Some(Cell { x: [ke[i], ke[i + 1]], y: [te[j], te[j + 1]], color: verdict_color(t.text(r, vc)) })
            })
            .collect();
        let cell_legend =
            ["EAS", "marginal", "unstable", "inapplicable"].iter().map(|v| (v.to_string(), verdict_color(v))).collect();
        return Chart {
            title: "Stability region".into(),
            x_label: "threat coefficient k (1/time units)".into(),
            y_label: "delay tau (time units)".into(),
            cells,
            cell_legend,
            ..Default::default()
        }
        .render();
    }
    let mut out = vec![series("dominant root", t.pairs(tc, rc), Mark::LineDots, 0)];
    let unstable = (0..t.rows.len())
        .filter(|&r| t.text(r, vc) != "EAS")
        .filter_map(|r| Some((t.number(r, tc)?, t.number(r, rc)?)))
        .collect();
    out.push(Series { name: "not EAS".into(), points: unstable, mark: Mark::Dots, color: FLAG });
    Chart {
        title: "Dominant characteristic root".into(),
        x_label: "delay tau (time units)".into(),
        y_label: "Re lambda (1/time units)".into(),
        series: out,
        ..Default::default()
    }
    .render()
}
