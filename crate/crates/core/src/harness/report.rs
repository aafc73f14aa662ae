//! CSV and SVG artifacts. Both are pure functions of the records so reruns
//! produce identical bytes.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::harness::config::Axis;
use crate::harness::sweep::BerRecord;
use crate::signal::theoretical_qpsk_ber;

pub const CSV_HEADER: &str = "scenario,es_n0_db,sir_db,method,trials,bits,bit_errors,ber,rmse,seed";

fn row_order(a: &BerRecord, b: &BerRecord) -> Ordering {
    a.scenario
        .cmp(&b.scenario)
        .then_with(|| a.method.cmp(&b.method))
        .then_with(|| a.es_n0_db.total_cmp(&b.es_n0_db))
        .then_with(|| a.sir_db.total_cmp(&b.sir_db))
}

/// Rows sorted by (scenario, method, es_n0_db, sir_db); BER in scientific
/// notation with 6 significant digits, RMSE with 6 decimals.
pub fn to_csv(records: &[BerRecord]) -> Result<String> {
    if records.is_empty() {
        return invalid("no records to write");
    }
    let mut rows: Vec<&BerRecord> = records.iter().collect();
    rows.sort_by(|a, b| row_order(a, b));
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{:.5e},{:.6},{}",
            r.scenario, r.es_n0_db, r.sir_db, r.method, r.trials, r.bits, r.bit_errors, r.ber, r.rmse, r.seed
        );
    }
    Ok(s)
}

pub fn write_csv(records: &[BerRecord], path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(records)?)?;
    Ok(())
}

/// Reads rows written by [`to_csv`]. The BER column is rounded on output, so
/// it is recomputed from the exact counts.
pub fn parse_csv(text: &str) -> Result<Vec<BerRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Config { line: 1, msg: format!("expected header `{CSV_HEADER}`") }),
    }
    let mut out = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| Error::Config { line: i + 1, msg: format!("bad {what}") };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return Err(bad("column count"));
        }
        let num = |k: usize, what: &str| f[k].parse::<f64>().map_err(|_| bad(what));
        let int = |k: usize, what: &str| f[k].parse::<u64>().map_err(|_| bad(what));
        let (bits, bit_errors) = (int(5, "bits")?, int(6, "bit_errors")?);
        if bits == 0 || bit_errors > bits {
            return Err(bad("bit counts"));
        }
        out.push(BerRecord {
            scenario: f[0].to_string(),
            es_n0_db: num(1, "es_n0_db")?,
            sir_db: num(2, "sir_db")?,
            method: f[3].to_string(),
            trials: int(4, "trials")? as usize,
            bits,
            bit_errors,
            ber: bit_errors as f64 / bits as f64,
            rmse: num(8, "rmse")?,
            seed: int(9, "seed")?,
        });
    }
    if out.is_empty() {
        return invalid("csv has no records");
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<BerRecord>> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// Plotted BER of a cell; zero-error cells sit at `1 / (2 bits)`.
pub fn plotted_ber(r: &BerRecord) -> f64 {
    if r.bit_errors == 0 {
        1.0 / (2.0 * r.bits as f64)
    } else {
        r.ber
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One polyline and marker set per method on a log-BER axis. The theory
/// overlay is the closed-form QPSK curve and only applies to Es/N0 plots.
pub fn svg_plot(records: &[BerRecord], axis: Axis, theory: bool) -> Result<String> {
    let first = records.first().ok_or_else(|| crate::error::Error::InvalidArgument("no records to plot".into()))?;
    if records.iter().any(|r| r.scenario != first.scenario) {
        return invalid("records span more than one scenario");
    }
    let (x_of, other_of): (fn(&BerRecord) -> f64, fn(&BerRecord) -> f64) = match axis {
        Axis::EsN0 => (|r| r.es_n0_db, |r| r.sir_db),
        Axis::Sir => (|r| r.sir_db, |r| r.es_n0_db),
    };
    if records.iter().any(|r| other_of(r).to_bits() != other_of(first).to_bits()) {
        return invalid(format!("records vary along the axis other than {}", axis.name()));
    }
    if records.iter().any(|r| !x_of(r).is_finite()) {
        return invalid(format!("non-finite {} values cannot be plotted", axis.name()));
    }

    let mut methods: Vec<&str> = records.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let (mut x0, mut x1) = records.iter().map(x_of).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if x1 - x0 < 1e-9 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let with_theory = theory && axis == Axis::EsN0;
    let samples = 64;
    let theory_pts: Vec<(f64, f64)> = if with_theory {
        (0..=samples)
            .map(|i| {
                let x = x0 + (x1 - x0) * i as f64 / samples as f64;
                (x, theoretical_qpsk_ber(x))
            })
            .collect()
    } else {
        Vec::new()
    };
    let ys = records.iter().map(plotted_ber).chain(theory_pts.iter().map(|p| p.1));
    let (ymin, ymax) = ys.fold((f64::INFINITY, 0.0f64), |(a, b), y| (a.min(y), b.max(y)));
    let mut d0 = ymin.log10().floor();
    let d1 = ymax.log10().ceil().min(0.0);
    if d1 - d0 < 1.0 {
        d0 = d1 - 1.0;
    }

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (d1 - y.log10().clamp(d0, d1)) / (d1 - d0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let title = match axis {
        Axis::EsN0 => format!("{}: BER vs Es/N0 (SIR {} dB)", first.scenario, other_of(first)),
        Axis::Sir => format!("{}: BER vs SIR (Es/N0 {} dB)", first.scenario, other_of(first)),
    };
    let _ = writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&title));
    // decade grid
    for d in (d0 as i32)..=(d1 as i32) {
        let y = TOP + (d1 - d as f64) / (d1 - d0) * ph;
        let _ = writeln!(s, r##"<line class="grid" x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let n_ticks = 5;
    for i in 0..=n_ticks {
        let x = x0 + (x1 - x0) * i as f64 / n_ticks as f64;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.1}</text>"#, px(x), TOP + ph + 18.0, x);
    }
    let _ = writeln!(s, r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#);
    let xlabel = match axis {
        Axis::EsN0 => "Es/N0 (dB)",
        Axis::Sir => "SIR (dB)",
    };
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">BER</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    if with_theory {
        let pts: Vec<String> = theory_pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline class="theory" points="{}" fill="none" stroke="black" stroke-dasharray="5,4"/>"#, pts.join(" "));
    }
    for (k, m) in methods.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = records.iter().filter(|r| r.method == *m).map(|r| (x_of(r), plotted_ber(r))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let line: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        for &(x, y) in &pts {
            let _ = writeln!(s, r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
    }
    // legend
    let lx = LEFT + pw + 12.0;
    let mut entries: Vec<(String, &str, bool)> =
        methods.iter().enumerate().map(|(k, m)| (m.to_string(), PALETTE[k % PALETTE.len()], false)).collect();
    if with_theory {
        entries.push(("theory".into(), "black", true));
    }
    for (k, (name, color, dashed)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        let dash = if *dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line class="legend" x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, y + 4.0, escape(name));
    }
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="{:.2}" font-size="10" fill="#555555">zero-error cells at 1/(2 bits)</text>"##,
        LEFT + 4.0,
        TOP + ph - 6.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_svg_plot(records: &[BerRecord], axis: Axis, theory: bool, path: &Path) -> Result<()> {
    std::fs::write(path, svg_plot(records, axis, theory)?)?;
    Ok(())
}
