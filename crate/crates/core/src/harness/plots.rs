//! SVG figures written next to the CSV files they are drawn from.
//!
//! Every marker carries the plotted values verbatim in `data-*` attributes,
//! formatted exactly as in the CSV, so figures can be checked against data.

use super::experiment::HarnessError;
use crate::dynamics::ParticleState;
use crate::io::{read_positions_csv, write_state_csv};
use crate::optimize::{read_history_csv, write_history_csv, IterationRecord};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

const SIZE: f64 = 480.0;
const PAD: f64 = 40.0;

type Series = (&'static str, &'static str, fn(&IterationRecord) -> f64);

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{title}</text>"#, w / 2.0);
}

/// Final positions (red) over the desired pattern (black) on the unit torus.
pub fn scatter_svg(desired: &ParticleState, reached: &ParticleState) -> String {
    let side = SIZE - 2.0 * PAD;
    let mut out = String::new();
    header(&mut out, SIZE, SIZE, "final (red) vs desired (black)");
    let _ = writeln!(out, r#"<rect x="{PAD}" y="{PAD}" width="{side}" height="{side}" fill="none" stroke="gray"/>"#);
    for (set, colour, state) in [("desired", "black", desired), ("final", "red", reached)] {
        let _ = writeln!(out, r#"<g class="{set}" fill="{colour}">"#);
        for (i, p) in state.positions().iter().enumerate() {
            let cx = PAD + p.x * side;
            let cy = PAD + (1.0 - p.y) * side;
            let _ = writeln!(
                out,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="1.6" data-id="{i}" data-x="{}" data-y="{}"/>"#,
                p.x, p.y
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Cost terms against iteration on a log10 axis. Non-positive values are
/// drawn at the bottom of the axis.
pub fn cost_svg(history: &[IterationRecord]) -> String {
    let (w, h) = (640.0, 400.0);
    let mut out = String::new();
    header(&mut out, w, h, "cost history (log10)");
    let series: [Series; 4] = [
        ("total", "black", |r| r.cost.total),
        ("j1", "blue", |r| r.cost.j1),
        ("j2", "green", |r| r.cost.j2),
        ("j3", "orange", |r| r.cost.j3),
    ];
    let logs: Vec<f64> = history
        .iter()
        .flat_map(|r| series.iter().map(move |s| (s.2)(r)))
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(f64::log10)
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (-1.0, 1.0) };
    let last = history.last().map_or(1, |r| r.iter.max(1)) as f64;
    let sx = |it: usize| PAD + (w - 2.0 * PAD) * it as f64 / last;
    let sy = |v: f64| {
        let l = if v > 0.0 && v.is_finite() { v.log10().clamp(lo, hi) } else { lo };
        h - PAD - (h - 2.0 * PAD) * (l - lo) / (hi - lo)
    };
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
        w - 2.0 * PAD,
        h - 2.0 * PAD
    );
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="11">1e{hi}</text>"#, PAD + 4.0);
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="11">1e{lo}</text>"#, h - PAD);
    for (k, (name, colour, get)) in series.iter().enumerate() {
        let pts: Vec<String> = history.iter().map(|r| format!("{:.2},{:.2}", sx(r.iter), sy(get(r)))).collect();
        let _ = writeln!(out, r#"<g class="{name}">"#);
        let _ =
            writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        for r in history {
            let v = get(r);
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{colour}" data-iter="{}" data-value="{v}"/>"#,
                sx(r.iter),
                sy(v),
                r.iter
            );
        }
        out.push_str("</g>\n");
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{name}</text>"#,
            w - PAD - 50.0,
            PAD + 14.0 * (k as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `positions_desired.csv`, `positions_final.csv`, `cost_history.csv`,
/// `scatter.svg` and `cost.svg` into `dir`.
pub fn emit_plots(
    dir: &Path,
    desired: &ParticleState,
    reached: &ParticleState,
    history: &[IterationRecord],
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_state_csv(BufWriter::new(File::create(dir.join("positions_desired.csv"))?), desired)?;
    write_state_csv(BufWriter::new(File::create(dir.join("positions_final.csv"))?), reached)?;
    write_history_csv(BufWriter::new(File::create(dir.join("cost_history.csv"))?), history)?;
    fs::write(dir.join("scatter.svg"), scatter_svg(desired, reached))?;
    fs::write(dir.join("cost.svg"), cost_svg(history))?;
    Ok(())
}

/// Redraws the figures of an existing output directory from its CSV files.
pub fn plot_from_dir(dir: &Path) -> Result<(), HarnessError> {
    let bad = |e: String| HarnessError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e));
    let desired = read_positions_csv(File::open(dir.join("positions_desired.csv"))?).map_err(|e| bad(e.to_string()))?;
    let reached = read_positions_csv(File::open(dir.join("positions_final.csv"))?).map_err(|e| bad(e.to_string()))?;
    let history = read_history_csv(File::open(dir.join("cost_history.csv"))?).map_err(bad)?;
    fs::write(dir.join("scatter.svg"), scatter_svg(&desired, &reached))?;
    fs::write(dir.join("cost.svg"), cost_svg(&history))?;
    Ok(())
}
