//! Aggregates prior run artifacts from an output directory into one
//! human-readable summary plus a machine summary, referencing every input
//! file by its SHA-256 hash.

use anyhow::{bail, Context, Result};
use serde_json::json;
use std::path::Path;

use scale_calculus::solver::{fit_decay, SolveStatus, SolverTrace, TraceRow};

use crate::config::{file_hash, write_output};

/// Rebuilds a trace from its CSV rendering (header `r,t_r,x_norm_0..`).
fn parse_trace(csv: &str) -> Result<SolverTrace> {
    let mut lines = csv.lines();
    let header = lines.next().context("empty trace CSV")?;
    let columns: Vec<&str> = header.split(',').collect();
    let levels = columns
        .iter()
        .filter(|c| c.starts_with("x_norm_"))
        .count()
        .saturating_sub(1);
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>().context("numeric field"))
            .collect::<Result<_>>()?;
        let k = levels + 1;
        rows.push(TraceRow {
            iter: fields[0] as usize,
            t: fields[1],
            x_norms: fields[2..2 + k].to_vec(),
            z_norms: fields[2 + k..2 + 2 * k].to_vec(),
            dx_norms: fields[2 + 2 * k..2 + 3 * k].to_vec(),
        });
    }
    Ok(SolverTrace {
        levels,
        status: SolveStatus::Converged,
        rows,
    })
}

pub fn cmd_report(out_dir: &Path) -> Result<i32> {
    let mut inputs: Vec<(String, String)> = Vec::new();
    let mut sections: Vec<serde_json::Value> = Vec::new();
    let mut text = String::from("experiment summary\n==================\n");

    let mut entries: Vec<_> = std::fs::read_dir(out_dir)
        .with_context(|| format!("reading {}", out_dir.display()))?
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.file_name());

    for entry in &entries {
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "summary.json" || name == "summary.txt" {
            continue;
        }
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
            continue;
        };
        if ext != "json" && ext != "csv" {
            continue;
        }
        inputs.push((name.clone(), file_hash(&path)?));

        match name.as_str() {
            "smoothing_report.json" => {
                let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                text.push_str(&format!(
                    "\n[smoothing] pass={} worst1={} worst2={}\n",
                    v["pass"], v["worst_ratio_ineq1"], v["worst_ratio_ineq2"]
                ));
                sections.push(json!({"section": "smoothing", "data": v}));
            }
            "solve_trace.csv" => {
                let trace = parse_trace(&std::fs::read_to_string(&path)?)?;
                let slope = fit_decay(&trace, 0)
                    .map(|f| json!({"slope": f.slope, "r_squared": f.r_squared}))
                    .unwrap_or(json!(null));
                text.push_str(&format!(
                    "\n[solve] rows={} final_residual={:?} slope={}\n",
                    trace.rows.len(),
                    trace.final_residual0(),
                    slope["slope"]
                ));
                sections.push(json!({
                    "section": "solve",
                    "rows": trace.rows.len(),
                    "final_residual0": trace.final_residual0(),
                    "decay_fit": slope,
                }));
            }
            "fredholm_summary.csv" => {
                let body = std::fs::read_to_string(&path)?;
                text.push_str("\n[fredholm]\n");
                text.push_str(&body);
                sections.push(json!({"section": "fredholm", "csv": body}));
            }
            "tame_constants.csv" => {
                let body = std::fs::read_to_string(&path)?;
                text.push_str("\n[tame constants]\n");
                text.push_str(&body);
                sections.push(json!({"section": "tame", "csv": body}));
            }
            "reparam_verdict.json" => {
                let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                text.push_str(&format!("\n[reparametrisation] {v}\n"));
                sections.push(json!({"section": "reparam", "data": v}));
            }
            "reduction_report.json" => {
                let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                text.push_str(&format!(
                    "\n[reduction] dim_ker={} off_complement={}\n",
                    v["dim_ker"], v["max_off_complement_residual"]
                ));
                sections.push(json!({"section": "reduction", "data": v}));
            }
            _ => {}
        }
    }

    if inputs.is_empty() {
        bail!("no artifacts found in {}", out_dir.display());
    }

    text.push_str("\ninputs\n------\n");
    for (name, hash) in &inputs {
        text.push_str(&format!("{hash}  {name}\n"));
    }
    let summary = json!({
        "inputs": inputs.iter().map(|(n, h)| json!({"file": n, "sha256": h})).collect::<Vec<_>>(),
        "sections": sections,
    });
    write_output(out_dir, "summary.txt", &text)?;
    write_output(
        out_dir,
        "summary.json",
        &format!("{}\n", serde_json::to_string_pretty(&summary)?),
    )?;
    print!("{text}");
    Ok(0)
}
