//! CSV, SVG and provenance writers. Reals are written in shortest
//! round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{ExperimentConfig, ExperimentResult};
use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// SHA-256 of the canonical JSON form of `config`, ignoring `output_dir`.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canonical = config.clone();
    canonical.output_dir = PathBuf::new();
    let json = serde_json::to_string(&canonical).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn provenance_json(config: &ExperimentConfig, overrides: &[String]) -> String {
    let mut echo = config.clone();
    echo.output_dir = PathBuf::new();
    let value = serde_json::json!({
        "artifact": "structens",
        "version": crate::VERSION,
        "config_id": config.config_id,
        "config_hash": config_hash(config),
        "base_seed": config.base_seed,
        "overrides": overrides,
        "config": echo,
    });
    let mut s = serde_json::to_string_pretty(&value).expect("provenance serializes");
    s.push('\n');
    s
}

pub(crate) fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("config_id,scheme,replicate,test_mse,ise,weights_json\n");
    for rep in &result.replicates {
        for (summary, outcome) in result.schemes.iter().zip(&rep.schemes) {
            let weights = serde_json::to_string(&outcome.weights).expect("weights serialize");
            let _ = writeln!(
                out,
                "{},{},{},{},{},\"{}\"",
                result.config_id,
                summary.label,
                rep.replicate,
                fmt_real(outcome.test_mse),
                fmt_real(outcome.ise),
                weights
            );
        }
    }
    out
}

pub(crate) fn aggregate_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("config_id,scheme,mse_mean,mse_se,ise_mean,ise_se,sign_test_vs_uniform_p\n");
    for s in &result.schemes {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            result.config_id,
            s.label,
            fmt_real(s.mse_mean),
            opt_real(s.mse_se),
            fmt_real(s.ise_mean),
            opt_real(s.ise_se),
            opt_real(s.sign_test_vs_uniform.map(|t| t.p_value))
        );
    }
    out
}

pub(crate) fn figure_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("x,truth");
    for s in &result.schemes {
        let _ = write!(out, ",pred_{}", s.label);
    }
    out.push('\n');
    for (i, x) in result.eval_grid.iter().enumerate() {
        let _ = write!(out, "{},{}", fmt_real(*x), fmt_real(result.truth[i]));
        for s in &result.schemes {
            let _ = write!(out, ",{}", fmt_real(s.figure_prediction[i]));
        }
        out.push('\n');
    }
    out
}

pub(crate) fn training_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in result.figure_train.0.iter().zip(&result.figure_train.1) {
        let _ = writeln!(out, "{},{}", fmt_real(*x), fmt_real(*y));
    }
    out
}

/// Pointwise curves; `variance_unbiased` uses divisor `R − 1` (empty when
/// `R = 1`), `variance_mle` and `mse` use divisor `R`.
pub(crate) fn bias_variance_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("x");
    for s in &result.schemes {
        for col in ["bias_sq", "variance_unbiased", "variance_mle", "mse"] {
            let _ = write!(out, ",{col}_{}", s.label);
        }
    }
    out.push('\n');
    for (i, x) in result.eval_grid.iter().enumerate() {
        out.push_str(&fmt_real(*x));
        for s in &result.schemes {
            let bv = &s.bias_variance;
            let unbiased = bv.variance_unbiased.as_ref().map(|v| v[i]);
            let _ = write!(
                out,
                ",{},{},{},{}",
                fmt_real(bv.bias_sq[i]),
                opt_real(unbiased),
                fmt_real(bv.variance_mle[i]),
                fmt_real(bv.mse[i])
            );
        }
        out.push('\n');
    }
    out
}

pub(crate) fn bias_variance_summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "config_id,scheme,integrated_bias_sq,integrated_variance_unbiased,integrated_variance_mle,integrated_mse,max_identity_residual\n",
    );
    for s in &result.schemes {
        let bv = &s.bias_variance;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            result.config_id,
            s.label,
            fmt_real(bv.integrated_bias_sq),
            opt_real(bv.integrated_variance_unbiased),
            fmt_real(bv.integrated_variance_mle),
            fmt_real(bv.integrated_mse),
            fmt_real(bv.max_identity_residual)
        );
    }
    out
}

pub(crate) fn claims_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("config_id,claim,wins,losses,ties,p_value,direction_observed\n");
    for c in &result.claims {
        let t = c.test;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            result.config_id,
            c.claim,
            t.wins,
            t.losses,
            t.ties,
            fmt_real(t.p_value),
            t.wins > t.losses
        );
    }
    out
}

pub(crate) fn objectives_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("config_id,replicate,scheme,risk_objective\n");
    for rep in &result.replicates {
        for (summary, outcome) in result.schemes.iter().zip(&rep.schemes) {
            if let Some(obj) = outcome.risk_objective {
                let _ = writeln!(out, "{},{},{},{}", result.config_id, rep.replicate, summary.label, fmt_real(obj));
            }
        }
    }
    out
}

/// File-name fragment naming the set of schemes shown in a figure.
pub fn scheme_set_name(labels: &[String]) -> String {
    labels
        .iter()
        .map(|l| l.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("+")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart of the truth, one replicate's training sample and each
/// scheme's prediction.
pub(crate) fn figure_svg(result: &ExperimentResult) -> String {
    let (w, h, pad) = (720.0, 480.0, 48.0);
    let xs = &result.eval_grid;
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let mut ys: Vec<f64> = result.truth.clone();
    ys.extend(result.figure_train.1.iter().copied());
    for s in &result.schemes {
        ys.extend(s.figure_prediction.iter().copied());
    }
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - lo) / (hi - lo) * (h - 2.0 * pad);
    let polyline = |values: &[f64], color: &str, width: f64, dash: &str| {
        let pts: Vec<String> = xs.iter().zip(values).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash} points=\"{}\"/>\n",
            pts.join(" ")
        )
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>", w / 2.0, result.config_id);
    for (x, y) in result.figure_train.0.iter().zip(&result.figure_train.1) {
        let _ = writeln!(svg, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"#999\" fill-opacity=\"0.6\"/>", px(*x), py(*y));
    }
    svg.push_str(&polyline(&result.truth, "#000", 2.0, " stroke-dasharray=\"6 3\""));
    for (i, s) in result.schemes.iter().enumerate() {
        svg.push_str(&polyline(&s.figure_prediction, PALETTE[i % PALETTE.len()], 1.6, ""));
    }
    let mut legend = vec![("truth".to_string(), "#000")];
    legend.extend(result.schemes.iter().enumerate().map(|(i, s)| (s.label.clone(), PALETTE[i % PALETTE.len()])));
    for (i, (name, color)) in legend.iter().enumerate() {
        let y = pad + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\">{name}</text>",
            w - pad - 150.0,
            w - pad - 130.0,
            w - pad - 124.0,
            y + 4.0
        );
    }
    let _ = writeln!(svg, "<text x=\"{pad}\" y=\"{}\">{}</text>", h - pad + 16.0, fmt_axis(x0));
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", w - pad, h - pad + 16.0, fmt_axis(x1));
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", pad - 4.0, h - pad, fmt_axis(lo));
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", pad - 4.0, pad + 4.0, fmt_axis(hi));
    svg.push_str("</svg>\n");
    svg
}

fn fmt_axis(v: f64) -> String {
    format!("{v:.2}")
}

/// Writes every output of `result` into `dir`, returning the paths written.
pub(crate) fn write_all(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let id = &result.config_id;
    let labels: Vec<String> = result.schemes.iter().map(|s| s.label.clone()).collect();
    let files = [
        (format!("{id}_summary.csv"), summary_csv(result)),
        (format!("{id}_aggregate.csv"), aggregate_csv(result)),
        (format!("{id}_figure.csv"), figure_csv(result)),
        (format!("{id}_train.csv"), training_csv(result)),
        (format!("{id}_bias_variance.csv"), bias_variance_csv(result)),
        (format!("{id}_bias_variance_summary.csv"), bias_variance_summary_csv(result)),
        (format!("{id}_claims.csv"), claims_csv(result)),
        (format!("{id}_objectives.csv"), objectives_csv(result)),
        (format!("{id}_{}.svg", scheme_set_name(&labels)), figure_svg(result)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        write_file(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}
