use std::fmt::Write as _;

use foliamod::gallery::ExampleDescriptor;
use foliamod::modulus::ModulusReport;
use foliamod::verify::{tolerances, Status, SuiteReport};
use serde::Serialize;

use crate::config::Format;

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn grid_label(grid: &[usize]) -> String {
    grid.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn catalog(entries: &[ExampleDescriptor], format: Format) -> String {
    match format {
        Format::Json => json(&entries),
        Format::Csv => {
            let mut out = String::from("example,param,default,range\n");
            for e in entries {
                for p in &e.params {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        e.name,
                        p.name,
                        p.default,
                        csv_escape(p.range)
                    );
                }
            }
            out
        }
        Format::Text => {
            let mut out = String::new();
            for e in entries {
                let _ = writeln!(out, "{}: {}", e.name, e.summary);
                for p in &e.params {
                    let _ = writeln!(
                        out,
                        "    {:<10} default {:<8} range {}",
                        p.name, p.default, p.range
                    );
                }
                let _ = writeln!(out, "    extremal   {}", e.extremal);
                let _ = writeln!(out, "    modulus    {}", e.modulus);
            }
            out
        }
    }
}

#[derive(Serialize)]
struct ReportTolerances {
    closed_vs_direct: f64,
    cross_route: f64,
    normalization: f64,
    integral_formula: f64,
}

#[derive(Serialize)]
struct ComputeDocument<'a> {
    #[serde(flatten)]
    report: &'a ModulusReport,
    cross_route_gap: f64,
    tolerances: ReportTolerances,
    pass: bool,
}

pub fn report(report: &ModulusReport, pass: bool, format: Format) -> String {
    let doc = ComputeDocument {
        report,
        cross_route_gap: report.cross_route_gap(),
        tolerances: ReportTolerances {
            closed_vs_direct: tolerances::CLOSED_VS_DIRECT,
            cross_route: tolerances::CROSS_ROUTE,
            normalization: tolerances::NORMALIZATION,
            integral_formula: tolerances::INTEGRAL_FORMULA,
        },
        pass,
    };
    let max_if = report
        .intformula_residuals
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let rows: Vec<(&str, String)> = vec![
        ("chart", report.chart.clone()),
        ("grid", grid_label(&report.grid)),
        ("p", report.p.to_string()),
        ("q", report.q.to_string()),
        ("mod_closed", format!("{:.15e}", report.mod_closed)),
        ("mod_direct", format!("{:.15e}", report.mod_direct)),
        (
            "mod_opt",
            report
                .mod_opt
                .map(|v| format!("{v:.15e}"))
                .unwrap_or_default(),
        ),
        ("cross_route_gap", format!("{:e}", doc.cross_route_gap)),
        ("norm_residual", format!("{:e}", report.norm_residual)),
        ("norm_residual_opt", opt_num(report.norm_residual_opt)),
        ("min_f0", format!("{:e}", report.min_f0)),
        ("coarea_residual", format!("{:e}", report.coarea_residual)),
        ("intformula_max", format!("{max_if:e}")),
        ("pass", pass.to_string()),
    ];
    let timing_rows: Vec<(&str, String)> = report
        .timings
        .as_ref()
        .map(|t| {
            vec![
                ("time_densities_s", format!("{:.6}", t.densities)),
                ("time_closed_form_s", format!("{:.6}", t.closed_form)),
                ("time_optimizer_s", format!("{:.6}", t.optimizer)),
            ]
        })
        .unwrap_or_default();
    match format {
        Format::Json => json(&doc),
        Format::Csv => {
            let all: Vec<_> = rows.iter().chain(&timing_rows).collect();
            let header: Vec<&str> = all.iter().map(|(k, _)| *k).collect();
            let values: Vec<String> = all.iter().map(|(_, v)| csv_escape(v)).collect();
            format!("{}\n{}\n", header.join(","), values.join(","))
        }
        Format::Text => rows
            .iter()
            .chain(&timing_rows)
            .map(|(k, v)| format!("{k:<20} {v}\n"))
            .collect(),
    }
}

fn status_label(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "FAIL",
        Status::Skipped => "skipped",
    }
}

pub fn suite(report: &SuiteReport, format: Format) -> String {
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                #[serde(flatten)]
                report: &'a SuiteReport,
                pass: bool,
            }
            json(&Doc {
                report,
                pass: report.passed(),
            })
        }
        Format::Csv => {
            let mut out = String::from("check,status,value,tolerance,detail\n");
            for c in &report.checks {
                let _ = writeln!(
                    out,
                    "{},{},{},{:e},{}",
                    c.name,
                    status_label(c.status),
                    opt_num(c.value),
                    c.tolerance,
                    csv_escape(&c.detail)
                );
            }
            out
        }
        Format::Text => {
            let mut out = format!(
                "chart {} grid {} p {} seed {} suite {}\n",
                report.chart,
                grid_label(&report.grid),
                report.p,
                report.seed,
                report.suite
            );
            let _ = writeln!(
                out,
                "{:<20} {:<8} {:>12} {:>10}  detail",
                "check", "status", "value", "tolerance"
            );
            for c in &report.checks {
                let value = c
                    .value
                    .map(|v| format!("{v:.3e}"))
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "{:<20} {:<8} {:>12} {:>10.1e}  {}",
                    c.name,
                    status_label(c.status),
                    value,
                    c.tolerance,
                    c.detail
                );
            }
            let failed = report.failures().count();
            let _ = writeln!(out, "{} of {} checks failed", failed, report.checks.len());
            out
        }
    }
}

/// Per-node table: coordinates followed by one or more value columns.
#[derive(Debug, Serialize)]
pub struct FieldTable {
    pub field: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn field_table(table: &FieldTable, format: Format) -> String {
    match format {
        Format::Json => json(table),
        Format::Csv | Format::Text => {
            let sep = if format == Format::Csv { "," } else { " " };
            let mut out = table.columns.join(sep);
            out.push('\n');
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                out.push_str(&cells.join(sep));
                out.push('\n');
            }
            out
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub mod_closed: f64,
    pub mod_direct: f64,
    pub mod_opt: f64,
    pub cross_route_gap: f64,
    pub pass: bool,
    /// Change of the modulus relative to the previous row, for documentation.
    pub delta_prev: Option<f64>,
    pub runtime_s: f64,
}

pub fn sweep(rows: &[SweepRow], format: Format) -> String {
    match format {
        Format::Json => json(&rows),
        Format::Csv | Format::Text => {
            let sep = if format == Format::Csv { "," } else { " " };
            let header = [
                "p",
                "mod_closed",
                "mod_direct",
                "mod_opt",
                "cross_route_gap",
                "pass",
                "delta_prev",
                "runtime_s",
            ];
            let mut out = header.join(sep);
            out.push('\n');
            for r in rows {
                let cells = [
                    r.p.to_string(),
                    format!("{:.15e}", r.mod_closed),
                    format!("{:.15e}", r.mod_direct),
                    format!("{:.15e}", r.mod_opt),
                    format!("{:e}", r.cross_route_gap),
                    r.pass.to_string(),
                    opt_num(r.delta_prev),
                    format!("{:.6}", r.runtime_s),
                ];
                out.push_str(&cells.join(sep));
                out.push('\n');
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_escape("plain"), "plain");
        assert_eq!(csv_escape("a, b"), "\"a, b\"");
        assert_eq!(csv_escape("say \"x\""), "\"say \"\"x\"\"\"");
    }

    #[test]
    fn empty_sweep_has_header_only() {
        let s = sweep(&[], Format::Csv);
        assert_eq!(s.lines().count(), 1);
        assert!(s.starts_with("p,mod_closed"));
    }
}
