use serde::Serialize;

use super::args::Format;
use super::{AngleTable, CompareReport};
use crate::diagnostics::{write_csv, AttentionTrace, CoverageReport};
use crate::error::{Result, RopeError};
use crate::scaling::ScalingReport;

pub(super) type Rendered = String;

fn json<T: Serialize>(value: &T) -> Result<Rendered> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| RopeError::config(format!("json encoding failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Left-aligned columns separated by two spaces.
fn table(header: &[&str], rows: &[Vec<String>]) -> Rendered {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.0}")
    } else if x.abs() < 1e-3 {
        format!("{x:.6e}")
    } else {
        let s = format!("{x:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn flags(f: &[bool]) -> String {
    f.iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub(super) fn report(r: &ScalingReport, format: Format) -> Result<Rendered> {
    if format == Format::Json {
        return json(r);
    }
    let p = r.pivots.as_array();
    let pairs: Vec<(&str, String)> = vec![
        ("head_dim", r.config.head_dim.to_string()),
        ("base", num(r.config.base)),
        ("train_len", r.config.train_len.to_string()),
        ("tune_len", r.config.tune_len().to_string()),
        ("critical_dim", r.critical_dim.to_string()),
        ("critical_dim_updated", r.critical_dim_updated.to_string()),
        ("critical_base", num(r.critical_base)),
        ("beta1", num(p[0])),
        ("beta2", num(p[1])),
        ("beta3", num(p[2])),
        (
            "pivots_rounded",
            r.pivots_rounded
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(" "),
        ),
        ("extrapolation_bound", num(r.extrapolation_bound)),
        ("branch", r.branch.to_string()),
        ("pivot_flags", flags(&r.pivot_flags)),
    ];
    match format {
        Format::Csv => write_csv(pairs.iter().map(|(k, v)| KeyValue { key: k, value: v })),
        _ => Ok(table(
            &["quantity", "value"],
            &pairs
                .into_iter()
                .map(|(k, v)| vec![k.to_string(), v])
                .collect::<Vec<_>>(),
        )),
    }
}

#[derive(Serialize)]
struct KeyValue<'a> {
    key: &'a str,
    value: &'a str,
}

pub(super) fn angles(t: &AngleTable, format: Format) -> Result<Rendered> {
    match format {
        Format::Json => json(t),
        Format::Csv => write_csv(&t.rows),
        Format::Table => Ok(table(
            &["n", "theta", "period", "covered"],
            &t.rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        num(r.theta),
                        num(r.period),
                        r.covered.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        )),
    }
}

pub(super) fn coverage(r: &CoverageReport, format: Format) -> Result<Rendered> {
    match format {
        Format::Json => json(r),
        Format::Csv => r.to_csv(),
        Format::Table => {
            let mut out = table(
                &["pair", "theta", "period", "class", "unseen"],
                &r.rows()
                    .iter()
                    .map(|row| {
                        vec![
                            row.pair.to_string(),
                            num(row.theta),
                            num(row.period),
                            row.class.name().to_string(),
                            row.unseen.to_string(),
                        ]
                    })
                    .collect::<Vec<_>>(),
            );
            let first = r
                .first_uncovered_pair
                .map_or("none".to_string(), |n| n.to_string());
            out.push_str(&format!(
                "covered features: {}, first uncovered pair: {first}\n",
                r.covered_count
            ));
            Ok(out)
        }
    }
}

pub(super) fn trace(t: &AttentionTrace, format: Format) -> Result<Rendered> {
    match format {
        Format::Json => json(t),
        Format::Csv => t.to_csv(),
        Format::Table => Ok(table(
            &["rel", "reliable_mean", "ood_mean", "total_mean"],
            &t.rows()
                .iter()
                .map(|r| {
                    vec![
                        r.rel.to_string(),
                        num(r.reliable_mean),
                        num(r.ood_mean),
                        num(r.total_mean),
                    ]
                })
                .collect::<Vec<_>>(),
        )),
    }
}

#[derive(Serialize)]
struct CompareCsvRow<'a> {
    variant: &'a str,
    length: u64,
    t_extra: Option<f64>,
    verdict: &'a str,
}

pub(super) fn compare(r: &CompareReport, format: Format) -> Result<Rendered> {
    match format {
        Format::Json => json(r),
        Format::Csv => write_csv(r.rows.iter().flat_map(|row| {
            r.lengths
                .iter()
                .zip(&row.verdicts)
                .map(move |(&length, v)| CompareCsvRow {
                    variant: &row.variant,
                    length,
                    t_extra: row.t_extra,
                    verdict: v.label(),
                })
        })),
        Format::Table => {
            let lengths: Vec<String> = r.lengths.iter().map(u64::to_string).collect();
            let mut header = vec!["variant", "t_extra"];
            header.extend(lengths.iter().map(String::as_str));
            let rows: Vec<Vec<String>> = r
                .rows
                .iter()
                .map(|row| {
                    let mut cells = vec![
                        row.variant.clone(),
                        row.t_extra.map_or("-".to_string(), num),
                    ];
                    cells.extend(row.verdicts.iter().map(|v| v.label().to_string()));
                    cells
                })
                .collect();
            Ok(table(&header, &rows))
        }
    }
}
