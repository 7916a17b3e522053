//! Collects stage summaries into one table, a markdown page and two SVG plots.

use std::fmt::Write as _;

use crate::artifacts::{Artifacts, Summary};
use crate::error::{CliError, CliResult};

/// Stages in pipeline order with the directory holding their summary.
const STAGES: [&str; 7] = [
    "scene",
    "cluster",
    "classifier",
    "scr",
    "localize",
    "localize_oracle",
    "fuse",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 40.0;

pub fn write(art: &Artifacts, config_hash: &str) -> CliResult<()> {
    let mut found: Vec<(&str, Summary)> = Vec::new();
    for stage in STAGES {
        let rel = format!("{stage}/summary.csv");
        if art.exists(&rel) {
            found.push((stage, art.checked_summary(&rel, config_hash)?));
        }
    }
    if found.is_empty() {
        return Err(CliError::MissingArtifact(art.path("scene/summary.csv")));
    }

    let mut table = String::from("stage,metric,value,config_hash\n");
    let mut md = format!("# Run report\n\nConfig hash `{config_hash}`.\n");
    for (stage, summary) in &found {
        write!(md, "\n## {stage}\n\n| metric | value |\n|---|---|\n").expect("writing to a String");
        for (metric, value) in summary.rows().iter().skip(1) {
            writeln!(table, "{stage},{metric},{value},{config_hash}").expect("writing to a String");
            writeln!(md, "| {metric} | {value} |").expect("writing to a String");
        }
    }

    if art.exists("scr/loss.csv") {
        let rows = read_numeric_csv(art, "scr/loss.csv")?;
        let loss: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
        art.write("report/loss.svg", line_chart("training loss per epoch", &[("#1f77b4", &loss)], false).as_bytes())?;
        md.push_str("\n![training loss](loss.svg)\n");
    }
    if art.exists("fuse/trajectory.csv") {
        let rows = read_numeric_csv(art, "fuse/trajectory.csv")?;
        let pick = |x: usize| -> Vec<(f64, f64)> { rows.iter().map(|r| (r[x], r[x + 1])).collect() };
        let series = [("#000000", &pick(1)[..]), ("#d62728", &pick(4)[..]), ("#1f77b4", &pick(7)[..])];
        art.write(
            "report/trajectory.svg",
            line_chart("drive: ground truth (black), odometry (red), fused (blue)", &series, true).as_bytes(),
        )?;
        md.push_str("\n![trajectory](trajectory.svg)\n");
    }

    art.write("report/summary.csv", table.as_bytes())?;
    art.write("report/report.md", md.as_bytes())
}

fn read_numeric_csv(art: &Artifacts, rel: &str) -> CliResult<Vec<Vec<f64>>> {
    art.read_text(rel)?
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().map_err(|e| art.malformed(rel, format!("{v:?}: {e}"))))
                .collect()
        })
        .collect()
}

/// Polylines on shared axes. `equal` keeps one unit the same length on both axes.
pub fn line_chart(title: &str, series: &[(&str, &[(f64, f64)])], equal: bool) -> String {
    let pts = series.iter().flat_map(|(_, s)| s.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let (mut sx, mut sy) = (w / span(x0, x1), h / span(y0, y1));
    if equal {
        let s = sx.min(sy);
        (sx, sy) = (s, s);
    }
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{title}</text>\n\
         <text x=\"{MARGIN}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">x [{x0:.3}, {x1:.3}]  y [{y0:.3}, {y1:.3}]</text>\n",
        HEIGHT - 10.0
    );
    for (color, s) in series {
        let coords: Vec<String> = s
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", MARGIN + (x - x0) * sx, HEIGHT - MARGIN - (y - y0) * sy))
            .collect();
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>",
            coords.join(" ")
        )
        .expect("writing to a String");
    }
    svg.push_str("</svg>\n");
    svg
}
