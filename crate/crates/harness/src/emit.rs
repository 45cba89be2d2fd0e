//! CSV, SVG and manifest output.
//!
//! Floats are written as `{:.16e}` so every value round-trips, lines end in
//! `\n`, and nothing time-dependent is written, so two runs of the same
//! config produce identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use raas_core::baselines::IterRecord;
use raas_core::TrialRecord;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::aggregate::{aggregate, AggregateSeries};
use crate::config::ResolvedMethod;
use crate::error::HarnessError;
use crate::experiment::{ExperimentResult, MethodTrace, RunTrace};

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn opt_flag(b: Option<bool>) -> String {
    b.map(flag).unwrap_or_default()
}

pub const RAAS_COLUMNS: [&str; 39] = [
    "t",
    "accepted",
    "check1",
    "check2",
    "gamma_hat",
    "gamma_prev",
    "gamma",
    "alpha_prev",
    "alpha_hat",
    "alpha",
    "beta_hat",
    "rho_hat",
    "gamma_prime",
    "theta",
    "vartheta",
    "w",
    "d",
    "error_x",
    "error_y",
    "error_x_next",
    "eps_f",
    "eps_g",
    "reliable",
    "gamma_bar",
    "large_step",
    "lyapunov",
    "lyapunov_next",
    "gap",
    "gap_next",
    "y_gap",
    "trial_gap",
    "grad_norm",
    "y_dist_sq",
    "grad_error_inner",
    "extrapolation_norm",
    "truncation_bracket",
    "z_dist",
    "y_z_dist",
    "seed",
];

pub const FIRST_ORDER_COLUMNS: [&str; 8] = ["t", "gap", "gap_next", "y_gap", "grad_norm", "w", "clipped", "seed"];

fn raas_row(r: &TrialRecord, seed: u64) -> Vec<String> {
    vec![
        r.t.to_string(),
        flag(r.accepted),
        flag(r.check1),
        opt_flag(r.check2),
        float(r.gamma_hat),
        float(r.gamma_prev),
        float(r.gamma),
        float(r.alpha_prev),
        float(r.alpha_hat),
        float(r.alpha),
        float(r.beta_hat),
        float(r.rho_hat),
        opt_float(r.gamma_prime),
        float(r.theta),
        float(r.vartheta),
        float(r.w),
        float(r.d),
        float(r.errors[0]),
        float(r.errors[1]),
        float(r.errors[2]),
        float(r.eps_f),
        float(r.eps_g),
        flag(r.reliable),
        opt_float(r.gamma_bar),
        opt_flag(r.large_step),
        opt_float(r.lyapunov),
        opt_float(r.lyapunov_next),
        float(r.gap),
        float(r.gap_next),
        float(r.y_gap),
        float(r.trial_gap),
        float(r.grad_norm),
        float(r.y_dist_sq),
        float(r.grad_error_inner),
        float(r.extrapolation_norm),
        opt_float(r.truncation_bracket),
        opt_float(r.z_dist),
        opt_float(r.y_z_dist),
        seed.to_string(),
    ]
}

fn first_order_row(r: &IterRecord, seed: u64) -> Vec<String> {
    vec![
        r.t.to_string(),
        float(r.gap),
        float(r.gap_next),
        float(r.y_gap),
        float(r.grad_norm),
        float(r.w),
        flag(r.clipped),
        seed.to_string(),
    ]
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// One row per trial with every logged field.
pub fn write_run_csv(path: &Path, run: &RunTrace) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    match &run.trace {
        MethodTrace::Raas { trace, .. } => {
            w.write_record(RAAS_COLUMNS)?;
            for r in &trace.records {
                w.write_record(raas_row(r, run.seed))?;
            }
        }
        MethodTrace::FirstOrder { trace, .. } => {
            w.write_record(FIRST_ORDER_COLUMNS)?;
            for r in &trace.records {
                w.write_record(first_order_row(r, run.seed))?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_aggregate_csv(path: &Path, series: &AggregateSeries) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["t", "mean_gap", "std_gap"])?;
    for (i, (m, s)) in series.mean.iter().zip(&series.std).enumerate() {
        w.write_record([(i + 1).to_string(), float(*m), float(*s)])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Mean gap against trial on a log axis, with a ±std band per method.
pub fn render_svg(title: &str, series: &[AggregateSeries]) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let n = series.iter().map(|s| s.len()).max().unwrap_or(1).max(2);
    let positive = |v: f64| v.is_finite() && v > 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for (m, sd) in s.mean.iter().zip(&s.std) {
            for v in [*m, m + sd, m - sd] {
                if positive(v) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
    }
    if !lo.is_finite() {
        lo = 1e-3;
        hi = 1.0;
    }
    let (dlo, dhi) = (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0));
    let sx = |t: usize| left + pw * (t as f64 - 1.0) / (n as f64 - 1.0);
    let sy = |v: f64| {
        let v = v.max(10f64.powf(dlo));
        top + ph * (dhi - v.log10()) / (dhi - dlo)
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    for e in dlo as i32..=dhi as i32 {
        let y = sy(10f64.powi(e));
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            left + pw
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            left - 6.0,
            y + 4.0
        );
    }
    let ticks = 5;
    for k in 0..=ticks {
        let t = 1 + (n - 1) * k / ticks;
        let x = sx(t);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">trial</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">optimality gap</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.is_empty() {
            continue;
        }
        let upper: Vec<String> = (0..s.len())
            .map(|k| format!("{:.2},{:.2}", sx(k + 1), sy(s.mean[k] + s.std[k])))
            .collect();
        let lower: Vec<String> = (0..s.len())
            .rev()
            .map(|k| format!("{:.2},{:.2}", sx(k + 1), sy(s.mean[k] - s.std[k])))
            .collect();
        let _ = writeln!(
            out,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = (0..s.len())
            .map(|k| format!("{:.2},{:.2}", sx(k + 1), sy(s.mean[k])))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 16.0 + 20.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn resolved_json(r: &ResolvedMethod) -> serde_json::Value {
    match r {
        ResolvedMethod::Raas(p) => json!({ "engine": "raas", "params": p }),
        ResolvedMethod::FirstOrder(p) => json!({ "engine": "first_order", "params": p }),
    }
}

pub fn config_fingerprint(result: &ExperimentResult) -> String {
    hex::encode(Sha256::digest(result.config.canonical().as_bytes()))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Files written by [`emit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emitted {
    pub files: Vec<PathBuf>,
}

/// Writes every artifact of an experiment into `dir`.
pub fn emit(result: &ExperimentResult, dir: &Path) -> Result<Emitted, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let cfg = &result.config;
    let mut files = Vec::new();
    let mut run_entries = Vec::new();
    let mut series = Vec::new();
    for label in result.labels() {
        let runs: Vec<&RunTrace> = result.runs_for(label).collect();
        for r in &runs {
            let name = format!("{label}_seed{}.csv", r.seed);
            if cfg.wants("csv") {
                let p = dir.join(&name);
                write_run_csv(&p, r)?;
                files.push(p);
            }
            let gaps = r.trace.gaps();
            run_entries.push(json!({
                "label": label,
                "method": r.method.tag(),
                "seed": r.seed,
                "fingerprint": r.fingerprint,
                "trials": r.trace.len(),
                "stopping_time": r.stopping_time,
                "final_gap": gaps.last().map(|g| float(*g)),
                "csv": cfg.wants("csv").then_some(name),
            }));
        }
        if runs.is_empty() {
            continue;
        }
        let agg = aggregate(label, runs.iter().copied());
        if cfg.wants("csv") {
            let p = dir.join(format!("{label}_aggregate.csv"));
            write_aggregate_csv(&p, &agg)?;
            files.push(p);
        }
        series.push(agg);
    }
    if cfg.wants("svg") {
        let p = dir.join("gaps.svg");
        let title = if cfg.name.is_empty() {
            "optimality gap"
        } else {
            &cfg.name
        };
        write_text(&p, &render_svg(title, &series))?;
        files.push(p);
    }
    let failures = dir.join("failures.json");
    write_text(
        &failures,
        &(serde_json::to_string_pretty(&result.failures).expect("serializes") + "\n"),
    )?;
    files.push(failures);

    let resolved: serde_json::Map<String, serde_json::Value> = result
        .resolved
        .iter()
        .map(|(k, v)| (k.clone(), resolved_json(v)))
        .collect();
    let manifest = json!({
        "name": cfg.name,
        "fingerprint": config_fingerprint(result),
        "config": cfg.content(),
        "problem": {
            "dimension": result.problem.dimension(),
            "mu": result.problem.mu(),
            "L": result.problem.l(),
            "phi_star": float(result.problem.phi_star()),
        },
        "resolved": resolved,
        "runs": run_entries,
        "failures": result.failures.len(),
    });
    let p = dir.join("manifest.json");
    write_text(
        &p,
        &(serde_json::to_string_pretty(&manifest).expect("serializes") + "\n"),
    )?;
    files.push(p);
    Ok(Emitted { files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 12345.678, -2.5e10] {
            let s = float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn svg_handles_empty_and_zero_series() {
        let s = AggregateSeries {
            label: "a<b".into(),
            runs: 1,
            mean: vec![1.0, 0.0, 0.1],
            std: vec![0.0; 3],
        };
        let svg = render_svg("t", &[s]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
