use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use base64::Engine;

use crate::analysis::{median, rank_descending, DimensionScoreboard, KdeCurve};
use crate::error::{Error, Result};
use crate::runstore::{layout, RunManifest, VerdictRecord};

/// Everything the report needs; evidence files are read from `run_dir`.
pub struct ReportInput<'a> {
    pub run_dir: &'a Path,
    pub manifest: &'a RunManifest,
    pub scoreboard: &'a DimensionScoreboard,
    /// Active verdict per 0-based dimension.
    pub verdicts: &'a BTreeMap<usize, VerdictRecord>,
    pub k: usize,
    /// A candidate is "above threshold" when its MPWD exceeds this multiple of the median MPWD.
    pub outlier_factor: f64,
    pub attack: Option<&'a serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub html: String,
    pub markdown: String,
}

/// Union of the top-`k` dimensions (0-based) by MPWD and by predictiveness,
/// in MPWD order followed by the predictiveness-only additions.
pub fn report_candidates(board: &DimensionScoreboard, k: usize) -> Vec<usize> {
    let k = k.min(board.dim());
    let mut out: Vec<usize> = rank_descending(&board.mpwd()).into_iter().take(k).collect();
    if let Some(p) = board.predictiveness() {
        for j in rank_descending(&p).into_iter().take(k) {
            if !out.contains(&j) {
                out.push(j);
            }
        }
    }
    out
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn fmt_rank(v: Option<usize>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

const CURVE_COLORS: [&str; 8] =
    ["#d62728", "#2ca02c", "#1f77b4", "#bcbd22", "#17becf", "#9467bd", "#ff7f0e", "#7f7f7f"];

fn kde_svg(curves: &[KdeCurve], class_names: &[String]) -> String {
    let (w, h, pad) = (480.0, 160.0, 4.0);
    let lo = curves.iter().flat_map(|c| c.grid.first()).copied().fold(f64::INFINITY, f64::min);
    let hi = curves.iter().flat_map(|c| c.grid.last()).copied().fold(f64::NEG_INFINITY, f64::max);
    let top = curves.iter().flat_map(|c| c.density.iter()).copied().fold(0.0, f64::max).max(1e-12);
    let span = (hi - lo).max(1e-12);
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    svg.push_str(r##"<rect width="100%" height="100%" fill="#fff" stroke="#ccc"/>"##);
    for c in curves {
        let color = CURVE_COLORS[c.class % CURVE_COLORS.len()];
        let pts: Vec<String> = c
            .grid
            .iter()
            .zip(&c.density)
            .map(|(x, y)| {
                let px = pad + (x - lo) / span * (w - 2.0 * pad);
                let py = h - pad - y / top * (h - 2.0 * pad);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let name = class_names.get(c.class.saturating_sub(1)).map(String::as_str).unwrap_or("?");
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            esc(name)
        );
    }
    let _ = write!(
        svg,
        r##"<text x="{pad}" y="12" font-size="10" fill="#555">{lo:.3}</text><text x="{}" y="12" font-size="10" fill="#555" text-anchor="end">{hi:.3}</text></svg>"##,
        w - pad
    );
    svg
}

struct Evidence {
    traversal: Vec<u8>,
    min: Vec<u8>,
    max: Vec<u8>,
    kde: Vec<KdeCurve>,
}

fn load_evidence(run_dir: &Path, j: usize) -> Result<Evidence> {
    let read = |rel: String| {
        std::fs::read(run_dir.join(&rel))
            .map_err(|e| Error::Assembly { dim: j + 1, message: format!("missing evidence {rel}: {e}") })
    };
    let kde_bytes = read(layout::kde(j))?;
    let kde = serde_json::from_slice(&kde_bytes)
        .map_err(|e| Error::Assembly { dim: j + 1, message: format!("bad density data: {e}") })?;
    Ok(Evidence {
        traversal: read(layout::traversal(j))?,
        min: read(layout::extremes_min(j))?,
        max: read(layout::extremes_max(j))?,
        kde,
    })
}

fn data_uri(png: &[u8]) -> String {
    format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png))
}

/// Render the run report. Output depends only on the inputs (no clock), so
/// regenerating without new verdicts yields identical bytes.
pub fn assemble_report(input: &ReportInput) -> Result<Report> {
    let m = input.manifest;
    let board = input.scoreboard;
    let candidates = report_candidates(board, input.k);
    let mpwd = board.mpwd();
    let med = if mpwd.is_empty() { 0.0 } else { median(&mpwd) };
    let threshold = input.outlier_factor * med;
    let above: Vec<usize> = candidates.iter().copied().filter(|j| mpwd[*j] > threshold).collect();
    let evidence: Vec<Evidence> = candidates.iter().map(|j| load_evidence(input.run_dir, *j)).collect::<Result<_>>()?;

    let verdict_text = |j: usize| -> (String, String) {
        match input.verdicts.get(&j) {
            Some(v) => (v.verdict.as_str().to_string(), format!("{} ({}, {})", v.notes, v.judge, v.timestamp)),
            None => ("pending".to_string(), String::new()),
        }
    };
    let above_text = if above.is_empty() {
        "none".to_string()
    } else {
        above.iter().map(|j| format!("dim {}", j + 1)).collect::<Vec<_>>().join(", ")
    };
    let config = serde_json::to_string_pretty(&m.config)?;
    let mut provenance: Vec<(String, String)> = vec![("dataset".into(), m.dataset.content_hash.clone())];
    provenance.extend(m.artifacts.iter().map(|(k, v)| (k.clone(), v.clone())));

    // Markdown
    let mut md = String::new();
    let _ = writeln!(md, "# Shortcut report: run {}\n", m.run_id);
    let _ = writeln!(
        md,
        "Dataset: {} samples, {} classes ({}), {}×{}×{}. Latent dimensions: {}. β = {}.\n",
        m.dataset.n_samples,
        m.dataset.class_names.len(),
        m.dataset.class_names.join(", "),
        m.dataset.height,
        m.dataset.width,
        m.dataset.channels,
        m.latent_dim(),
        m.train_config.beta
    );
    let _ = writeln!(
        md,
        "Candidates: union of the top {} dimensions by MPWD and by predictiveness.\n\nCandidates above threshold (MPWD > {} × median MPWD = {:.4}): {}\n",
        input.k, input.outlier_factor, threshold, above_text
    );
    let _ = writeln!(md, "## Scoreboard\n\n| dim | MPWD | MPWD rank | predictiveness | pred. rank | variance |\n|---|---|---|---|---|---|");
    for r in &board.records {
        let _ = writeln!(
            md,
            "| {} | {:.4} | {} | {} | {} | {:.4} |",
            r.dim,
            r.mpwd,
            r.mpwd_rank,
            fmt_opt(r.predictiveness),
            fmt_rank(r.pred_rank),
            r.variance
        );
    }
    md.push('\n');
    for &j in &candidates {
        let r = &board.records[j];
        let (v, notes) = verdict_text(j);
        let _ = writeln!(md, "## Dimension {}\n", j + 1);
        let _ = writeln!(
            md,
            "- MPWD {:.4} (rank {}), predictiveness {} (rank {}), variance {:.4}\n- Above threshold: {}\n- Verdict: **{}**{}\n",
            r.mpwd,
            r.mpwd_rank,
            fmt_opt(r.predictiveness),
            fmt_rank(r.pred_rank),
            r.variance,
            if mpwd[j] > threshold { "yes" } else { "no" },
            v,
            if notes.is_empty() { String::new() } else { format!(" ({notes})") }
        );
        let _ = writeln!(
            md,
            "Traversal: ![traversal]({})\n\nLowest values: ![min]({})\n\nHighest values: ![max]({})\n\nDensities: `{}`\n",
            layout::traversal(j),
            layout::extremes_min(j),
            layout::extremes_max(j),
            layout::kde(j)
        );
    }
    if let Some(a) = input.attack {
        let _ = writeln!(md, "## Shortcut attack\n\n```json\n{}\n```\n", serde_json::to_string_pretty(a)?);
    }
    let _ = writeln!(md, "## Configuration\n\n```json\n{config}\n```\n\n## Provenance\n");
    for (k, v) in &provenance {
        let _ = writeln!(md, "- {k}: `{v}`");
    }

    // HTML
    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Shortcut report {id}</title>\n<style>\nbody{{font-family:sans-serif;max-width:1100px;margin:2em auto;color:#222}}\ntable{{border-collapse:collapse}}td,th{{border:1px solid #ccc;padding:2px 8px;text-align:right}}\nimg{{image-rendering:pixelated;max-width:100%}}.pending{{color:#888}}.above{{color:#b00;font-weight:bold}}\nsection{{border-top:1px solid #ddd;margin-top:1.5em}}\n</style>\n</head>\n<body>\n<h1>Shortcut report: run {id}</h1>\n",
        id = esc(&m.run_id)
    );
    let _ = writeln!(
        html,
        "<p>Dataset: {} samples, {} classes ({}), {}×{}×{}. Latent dimensions: {}. β = {}.</p>",
        m.dataset.n_samples,
        m.dataset.class_names.len(),
        esc(&m.dataset.class_names.join(", ")),
        m.dataset.height,
        m.dataset.width,
        m.dataset.channels,
        m.latent_dim(),
        m.train_config.beta
    );
    let _ = writeln!(
        html,
        "<p>Candidates: union of the top {} dimensions by MPWD and by predictiveness.</p>\n<p id=\"threshold\">Candidates above threshold (MPWD &gt; {} × median MPWD = {:.4}): {}</p>",
        input.k,
        input.outlier_factor,
        threshold,
        esc(&above_text)
    );
    html.push_str("<h2>Scoreboard</h2>\n<table>\n<tr><th>dim</th><th>MPWD</th><th>MPWD rank</th><th>predictiveness</th><th>pred. rank</th><th>variance</th></tr>\n");
    for r in &board.records {
        let _ = writeln!(
            html,
            "<tr><td>{}</td><td>{:.4}</td><td>{}</td><td>{}</td><td>{}</td><td>{:.4}</td></tr>",
            r.dim,
            r.mpwd,
            r.mpwd_rank,
            fmt_opt(r.predictiveness),
            fmt_rank(r.pred_rank),
            r.variance
        );
    }
    html.push_str("</table>\n");
    for (&j, ev) in candidates.iter().zip(&evidence) {
        let r = &board.records[j];
        let (v, notes) = verdict_text(j);
        let is_above = mpwd[j] > threshold;
        let _ = writeln!(
            html,
            "<section id=\"dim-{d}\">\n<h2>Dimension {d}</h2>\n<p>MPWD {:.4} (rank {}), predictiveness {} (rank {}), variance {:.4}. Above threshold: <span class=\"{}\">{}</span>.</p>\n<p>Verdict: <strong class=\"{}\">{}</strong> {}</p>",
            r.mpwd,
            r.mpwd_rank,
            fmt_opt(r.predictiveness),
            fmt_rank(r.pred_rank),
            r.variance,
            if is_above { "above" } else { "" },
            if is_above { "yes" } else { "no" },
            if v == "pending" { "pending" } else { "" },
            esc(&v),
            esc(&notes),
            d = j + 1
        );
        let _ = writeln!(
            html,
            "<h3>Traversal</h3>\n<img alt=\"traversal of dimension {d}\" src=\"{}\">\n<h3>Lowest values</h3>\n<img alt=\"lowest values of dimension {d}\" src=\"{}\">\n<h3>Highest values</h3>\n<img alt=\"highest values of dimension {d}\" src=\"{}\">\n<h3>Class densities</h3>\n{}\n</section>",
            data_uri(&ev.traversal),
            data_uri(&ev.min),
            data_uri(&ev.max),
            kde_svg(&ev.kde, &m.dataset.class_names),
            d = j + 1
        );
    }
    if let Some(a) = input.attack {
        let _ = writeln!(html, "<h2>Shortcut attack</h2>\n<pre>{}</pre>", esc(&serde_json::to_string_pretty(a)?));
    }
    let _ = writeln!(html, "<h2>Configuration</h2>\n<pre>{}</pre>\n<h2>Provenance</h2>\n<ul>", esc(&config));
    for (k, v) in &provenance {
        let _ = writeln!(html, "<li>{}: <code>{}</code></li>", esc(k), esc(v));
    }
    html.push_str("</ul>\n</body>\n</html>\n");
    Ok(Report { html, markdown: md })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates_are_the_union_of_both_rankings() {
        let b =
            DimensionScoreboard::new(&[0.9, 0.8, 0.1, 0.7, 0.0, 0.0], &[1.0; 6], Some(&[0.0, 0.1, 5.0, 4.0, 3.0, 0.0]))
                .unwrap();
        assert_eq!(report_candidates(&b, 3), vec![0, 1, 3, 2, 4]);
        let only_mpwd = DimensionScoreboard::new(&[0.1, 0.3, 0.2], &[1.0; 3], None).unwrap();
        assert_eq!(report_candidates(&only_mpwd, 2), vec![1, 2]);
    }

    #[test]
    fn escaping() {
        assert_eq!(esc("<a href=\"x\">&</a>"), "&lt;a href=&quot;x&quot;&gt;&amp;&lt;/a&gt;");
    }
}
