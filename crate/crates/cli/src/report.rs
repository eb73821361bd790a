//! Consolidated tables from run reports.

use std::fs;
use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::{emit, Ctx, Fail, Output, ReportArgs};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub source: String,
    pub kind: String,
    pub p: String,
    pub size: u64,
    pub ln_size: f64,
    pub value: Option<f64>,
    pub error_bound: Option<f64>,
    pub certified_bound: Option<f64>,
    pub lower_bound: Option<f64>,
}

fn f(v: &Value, path: &[&str]) -> Option<f64> {
    path.iter().try_fold(v, |v, k| v.get(k)).and_then(Value::as_f64)
}

/// One row per norm or certificate report; other kinds are skipped.
pub fn row_of(source: &str, report: &Value) -> Option<Row> {
    let out = report.get("output")?;
    let kind = out.get("kind")?.as_str()?.to_string();
    let size = out.get("size").and_then(Value::as_u64)?;
    let base = Row {
        source: source.to_string(),
        kind: kind.clone(),
        p: "1".into(),
        size,
        ln_size: (size as f64).ln(),
        value: None,
        error_bound: None,
        certified_bound: None,
        lower_bound: None,
    };
    match kind.as_str() {
        "norm" => Some(Row {
            p: out.get("p")?.as_str()?.to_string(),
            value: f(out, &["value"]),
            error_bound: f(out, &["error_bound"]),
            ..base
        }),
        "bound2d" | "bound3d" => {
            let cert = &out["report"]["certificate"];
            let certified = f(cert, &["certified_bound"])?;
            let budget = f(cert, &["budget"])?;
            Some(Row {
                certified_bound: Some(certified),
                lower_bound: Some(certified - budget),
                ..base
            })
        }
        _ => None,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_report(args: ReportArgs, ctx: &Ctx) -> Result<(), Fail> {
    let mut rows = Vec::new();
    for path in &args.paths {
        let value: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        if let Some(row) = row_of(&path.display().to_string(), &value) {
            rows.push(row);
        }
    }
    let mut buf = Vec::new();
    if args.json {
        buf = serde_json::to_vec_pretty(&rows)?;
        buf.push(b'\n');
    } else {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "source",
            "kind",
            "p",
            "size",
            "ln_size",
            "value",
            "error_bound",
            "certified_bound",
            "lower_bound",
        ])
        .map_err(llab::Error::from)?;
        for r in &rows {
            w.write_record([
                r.source.clone(),
                r.kind.clone(),
                r.p.clone(),
                r.size.to_string(),
                r.ln_size.to_string(),
                opt(r.value),
                opt(r.error_bound),
                opt(r.certified_bound),
                opt(r.lower_bound),
            ])
            .map_err(llab::Error::from)?;
        }
        w.flush()?;
    }
    match &args.out {
        Some(p) => {
            fs::write(p, &buf)?;
            let digest = crate::digest(&args.paths.iter().map(|p| p.as_path()).collect::<Vec<_>>())?;
            emit(&ctx.report(Some(digest), Vec::new(), Output::Report { rows: rows.len() }), None)
        }
        None => {
            std::io::stdout().write_all(&buf)?;
            Ok(())
        }
    }
}
