//! Tables, CSV encoding and minimal SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

use pcwqed::spectrum::{Spectrum, SpectrumSample};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Flag(bool),
    Empty,
}

impl Cell {
    /// Shortest round-trip decimal; never locale dependent.
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Flag(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Num(v) => Some(v),
            Cell::Flag(b) => Some(if b { 1.0 } else { 0.0 }),
            Cell::Empty => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Flag(b)
    }
}

/// A named CSV table with unit-suffixed column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    /// Column values, `None` for empty cells. Panics on an unknown column.
    pub fn column(&self, column: &str) -> Vec<Option<f64>> {
        let i = self.index(column).unwrap_or_else(|| panic!("no column {column} in {}", self.name));
        self.rows.iter().map(|r| r[i].as_f64()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

pub fn spectrum_table(name: &str, s: &Spectrum) -> Table {
    let mut t = Table::new(name, &["detuning_MHz", "T_over_T0", "sigma"]);
    for smp in s.samples() {
        t.push(vec![smp.detuning_mhz.into(), smp.value.into(), smp.sigma.into()]);
    }
    t
}

/// Reads a spectrum CSV with columns detuning_MHz, T_over_T0 and an
/// optional sigma. Errors carry the 1-based line number.
pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_spectrum_csv(&text, &path.display().to_string())
}

pub fn parse_spectrum_csv(text: &str, origin: &str) -> Result<Spectrum, CliError> {
    let err = |line: u64, msg: String| CliError::Csv { path: origin.to_string(), line, msg };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let d_col = col("detuning_MHz").ok_or_else(|| err(1, "missing column detuning_MHz".into()))?;
    let v_col = col("T_over_T0").ok_or_else(|| err(1, "missing column T_over_T0".into()))?;
    let s_col = col("sigma");
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize, what: &str| -> Result<f64, CliError> {
            let f = rec.get(i).unwrap_or("");
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("{what}: not a finite number: {f:?}")))
        };
        let sigma = match s_col {
            Some(i) if !rec.get(i).unwrap_or("").is_empty() => num(i, "sigma")?,
            _ => 0.0,
        };
        samples.push((line, SpectrumSample { detuning_mhz: num(d_col, "detuning_MHz")?, value: num(v_col, "T_over_T0")?, sigma }));
    }
    if let Some(w) = samples.windows(2).find(|w| w[1].1.detuning_mhz <= w[0].1.detuning_mhz) {
        return Err(err(w[1].0, "detunings must be strictly increasing".into()));
    }
    if let Some((line, _)) = samples.iter().find(|s| s.1.sigma < 0.0) {
        return Err(err(*line, "sigma must be >= 0".into()));
    }
    Spectrum::new(samples.into_iter().map(|s| s.1).collect()).map_err(|e| err(0, e.to_string()))
}

/// Columns of `data` to draw against `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x: String,
    pub ys: Vec<String>,
    pub data: Table,
}

impl Plot {
    pub fn new(name: &str, title: &str, data: &Table, x: &str, ys: &[&str]) -> Self {
        Plot {
            name: name.into(),
            title: title.into(),
            x: x.into(),
            ys: ys.iter().map(|y| y.to_string()).collect(),
            data: data.clone(),
        }
    }
}

const COLOURS: [&str; 5] = ["#1b9e77", "#3060c0", "#d95f02", "#7570b3", "#444444"];

/// Static line chart; empty cells break a line.
pub fn render_svg(plot: &Plot) -> String {
    let table = &plot.data;
    let (w, h) = (640.0, 400.0);
    let (l, r, t, b) = (70.0, 20.0, 30.0, 50.0);
    let xs = table.column(&plot.x);
    let series: Vec<Vec<Option<(f64, f64)>>> = plot
        .ys
        .iter()
        .map(|y| xs.iter().zip(table.column(y)).map(|(x, y)| x.zip(y).filter(|p| p.1.is_finite())).collect())
        .collect();
    let pts = series.iter().flatten().flatten();
    let (x0, x1) = bounds(pts.clone().map(|p| p.0));
    let (y0, y1) = bounds(pts.map(|p| p.1));
    let sx = |x: f64| l + (x - x0) / (x1 - x0) * (w - l - r);
    let sy = |y: f64| h - b - (y - y0) / (y1 - y0) * (h - t - b);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(&plot.title));
    let _ = writeln!(
        s,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - l - r,
        h - t - b
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, sx(xv), h - b + 16.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, l - 6.0, sy(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, escape(&plot.x));
    for (i, (name, pts)) in plot.ys.iter().zip(&series).enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        for run in pts.split(|p| p.is_none()).filter(|run| !run.is_empty()) {
            let coords: Vec<String> = run.iter().flatten().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{colour}">{}</text>"#,
            l + 8.0,
            t + 16.0 + 14.0 * i as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) { format!("{v:.2e}") } else { format!("{v:.3}") }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
