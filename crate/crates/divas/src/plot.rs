//! Plain SVG renderings of the diagnostics in a report: angle panels,
//! ENC/ECT strips and Q-Q curves. Everything is drawn from `ReportFile`
//! so existing reports can be re-rendered.

use crate::error::{CliError, Result};
use crate::output::ReportFile;
use divas_core::diagnostics::QqBlock;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const CELL_W: f64 = 180.0;
const ROW_H: f64 = 26.0;
const LABEL_W: f64 = 110.0;
const TOP: f64 = 40.0;

fn doc(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn text(s: &mut String, x: f64, y: f64, anchor: &str, t: &str) {
    let _ = writeln!(s, "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\">{t}</text>");
}

fn vline(s: &mut String, x: f64, y0: f64, y1: f64, color: &str, dash: &str) {
    let _ = writeln!(
        s,
        "<line x1=\"{x:.1}\" y1=\"{y0:.1}\" x2=\"{x:.1}\" y2=\"{y1:.1}\" stroke=\"{color}\" stroke-dasharray=\"{dash}\"/>"
    );
}

fn cross(s: &mut String, x: f64, y: f64, color: &str) {
    let r = 4.0;
    let _ = writeln!(
        s,
        "<path d=\"M{:.1} {:.1}L{:.1} {:.1}M{:.1} {:.1}L{:.1} {:.1}\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
        x - r,
        y - r,
        x + r,
        y + r,
        x - r,
        y + r,
        x + r,
        y - r
    );
}

fn dot(s: &mut String, x: f64, y: f64, filled: bool) {
    let fill = if filled { "black" } else { "white" };
    let _ = writeln!(s, "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3.5\" fill=\"{fill}\" stroke=\"black\"/>");
}

/// One angle record placed in a panel cell.
struct Mark {
    angle: f64,
    upper: f64,
    bound: f64,
    theta0: f64,
    filled: bool,
}

/// Grid of panels, one row per direction and one column per block. Each
/// cell spans 0–90°: a dot at the angle, a cross at its upper bound, a
/// dashed line at the perturbation bound and a dot-dash line at the
/// random-direction bound.
fn angle_grid(title: &str, rows: &[(String, Vec<Option<Mark>>)], blocks: usize) -> String {
    let width = LABEL_W + CELL_W * blocks as f64 + 20.0;
    let height = TOP + ROW_H * rows.len().max(1) as f64 + 30.0;
    let mut s = String::new();
    text(&mut s, width / 2.0, 16.0, "middle", title);
    for k in 0..blocks {
        let x0 = LABEL_W + CELL_W * k as f64;
        text(&mut s, x0 + CELL_W / 2.0, TOP - 8.0, "middle", &format!("block {}", k + 1));
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{TOP:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#999\"/>",
            x0 + 5.0,
            CELL_W - 10.0,
            ROW_H * rows.len().max(1) as f64
        );
        let y_axis = TOP + ROW_H * rows.len().max(1) as f64 + 12.0;
        text(&mut s, x0 + 5.0, y_axis, "start", "0");
        text(&mut s, x0 + CELL_W - 5.0, y_axis, "end", "90");
    }
    let xpos = |k: usize, deg: f64| LABEL_W + CELL_W * k as f64 + 5.0 + (CELL_W - 10.0) * deg.clamp(0.0, 90.0) / 90.0;
    for (i, (label, marks)) in rows.iter().enumerate() {
        let y = TOP + ROW_H * (i as f64 + 0.5);
        text(&mut s, LABEL_W - 6.0, y + 4.0, "end", label);
        for (k, m) in marks.iter().enumerate() {
            let Some(m) = m else { continue };
            let (y0, y1) = (y - ROW_H / 2.0 + 2.0, y + ROW_H / 2.0 - 2.0);
            vline(&mut s, xpos(k, m.bound), y0, y1, "#1f77b4", "4 3");
            vline(&mut s, xpos(k, m.theta0), y0, y1, "#d62728", "6 3 1 3");
            cross(&mut s, xpos(k, m.upper), y, "#555");
            dot(&mut s, xpos(k, m.angle), y, m.filled);
        }
    }
    doc(width, height, &s)
}

pub fn trait_angle_svg(report: &ReportFile) -> String {
    let blocks = report.blocks.len();
    let rows: Vec<(String, Vec<Option<Mark>>)> = report
        .directions
        .iter()
        .map(|d| {
            let mut marks: Vec<Option<Mark>> = (0..blocks).map(|_| None).collect();
            for t in &d.trait_space {
                marks[t.block - 1] = Some(Mark {
                    angle: t.angle,
                    upper: t.upper_bound,
                    bound: t.phi_hat,
                    theta0: t.theta0,
                    filled: t.included,
                });
            }
            (format!("{} #{}", d.collection, d.mode), marks)
        })
        .collect();
    angle_grid("score (trait-space) angles", &rows, blocks)
}

pub fn object_angle_svg(report: &ReportFile) -> String {
    let blocks = report.blocks.len();
    let rows: Vec<(String, Vec<Option<Mark>>)> = report
        .directions
        .iter()
        .map(|d| {
            let mut marks: Vec<Option<Mark>> = (0..blocks).map(|_| None).collect();
            for o in &d.object_space {
                marks[o.block - 1] = Some(Mark {
                    angle: o.angle,
                    upper: o.upper_bound,
                    bound: o.psi_hat,
                    theta0: o.theta0,
                    filled: true,
                });
            }
            (format!("{} #{}", d.collection, d.mode), marks)
        })
        .collect();
    angle_grid("loadings (object-space) angles", &rows, blocks)
}

/// ENC as a fraction of the object count, then ECT per block, as bars.
pub fn enc_ect_svg(report: &ReportFile) -> String {
    let blocks = report.blocks.len();
    let n = report.blocks.first().map(|b| b.objects).unwrap_or(1).max(1) as f64;
    let cols = blocks + 1;
    let width = LABEL_W + CELL_W * cols as f64 + 20.0;
    let height = TOP + ROW_H * report.directions.len().max(1) as f64 + 30.0;
    let mut s = String::new();
    text(&mut s, width / 2.0, 16.0, "middle", "ENC / n and ECT (%)");
    text(&mut s, LABEL_W + CELL_W / 2.0, TOP - 8.0, "middle", "ENC");
    for k in 0..blocks {
        text(&mut s, LABEL_W + CELL_W * (k as f64 + 1.5), TOP - 8.0, "middle", &format!("ECT block {}", k + 1));
    }
    let bar = |s: &mut String, col: usize, y: f64, frac: f64, label: &str| {
        let x0 = LABEL_W + CELL_W * col as f64 + 5.0;
        let w = (CELL_W - 60.0) * frac.clamp(0.0, 1.0);
        let _ = writeln!(
            s,
            "<rect x=\"{x0:.1}\" y=\"{:.1}\" width=\"{w:.1}\" height=\"{:.1}\" fill=\"#7f7f7f\"/>",
            y - ROW_H / 2.0 + 5.0,
            ROW_H - 10.0
        );
        text(s, x0 + w + 4.0, y + 4.0, "start", label);
    };
    for (i, d) in report.directions.iter().enumerate() {
        let y = TOP + ROW_H * (i as f64 + 0.5);
        text(&mut s, LABEL_W - 6.0, y + 4.0, "end", &format!("{} #{}", d.collection, d.mode));
        bar(&mut s, 0, y, d.enc / n, &format!("{:.0}", d.enc));
        for o in &d.object_space {
            bar(&mut s, o.block, y, o.ect / 100.0, &format!("{:.0}%", o.ect));
        }
    }
    doc(width, height, &s)
}

/// Observed against theoretical eigenvalue quantiles with the simulated
/// envelope and the identity line.
pub fn qq_svg(qq: &QqBlock) -> String {
    let (w, h, pad) = (420.0, 420.0, 40.0);
    let mut s = String::new();
    text(&mut s, w / 2.0, 18.0, "middle", &format!("block {} eigenvalue Q-Q", qq.block));
    if qq.rows.is_empty() {
        return doc(w, h, &s);
    }
    let hi = qq
        .rows
        .iter()
        .flat_map(|r| [r.theoretical, r.env_max, r.observed.min(3.0 * r.env_max.max(r.theoretical))])
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let px = |v: f64| pad + (w - 2.0 * pad) * (v / hi).clamp(0.0, 1.0);
    let py = |v: f64| h - pad - (h - 2.0 * pad) * (v / hi).clamp(0.0, 1.0);
    let _ = writeln!(
        s,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#bbb\"/>",
        px(0.0),
        py(0.0),
        px(hi),
        py(hi)
    );
    for (pick, color) in [(0, "#2ca02c"), (1, "#2ca02c")] {
        let pts: Vec<String> = qq
            .rows
            .iter()
            .map(|r| format!("{:.1},{:.1}", px(r.theoretical), py(if pick == 0 { r.env_min } else { r.env_max })))
            .collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\"/>", pts.join(" "));
    }
    for r in &qq.rows {
        let _ = writeln!(s, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.8\" fill=\"black\"/>", px(r.theoretical), py(r.observed));
    }
    text(&mut s, w / 2.0, h - 8.0, "middle", "theoretical");
    let _ = writeln!(s, "<text x=\"12\" y=\"{:.1}\" transform=\"rotate(-90 12 {:.1})\" text-anchor=\"middle\">observed</text>", h / 2.0, h / 2.0);
    doc(w, h, &s)
}

/// Write every panel into `dir`; returns the files written.
pub fn write_plots(dir: &Path, report: &ReportFile) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir.display(), e))?;
    let mut files = vec![
        (dir.join("trait_angles.svg"), trait_angle_svg(report)),
        (dir.join("object_angles.svg"), object_angle_svg(report)),
        (dir.join("enc_ect.svg"), enc_ect_svg(report)),
    ];
    for q in &report.qq {
        files.push((dir.join(format!("qq_block{}.svg", q.block)), qq_svg(q)));
    }
    let mut out = Vec::with_capacity(files.len());
    for (path, body) in files {
        std::fs::write(&path, body).map_err(|e| CliError::output(path.display(), e))?;
        out.push(path);
    }
    Ok(out)
}
