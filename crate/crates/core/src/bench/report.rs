//! CSV and JSON report emission with a byte-stable column order.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::bench::metrics::{aggregate, Aggregate, FrameMetrics};
use crate::bench::BenchReport;
use crate::error::Result;
use crate::proxy::UpdatePolicy;

/// Fixed CSV column order; documented in the README.
pub const CSV_COLUMNS: &[&str] = &[
    "seed",
    "frame",
    "scenario",
    "operator",
    "policy",
    "frame_time_s",
    "update_time_s",
    "connectivity_time_s",
    "finalize_time_s",
    "solve_time_s",
    "cg_iterations",
    "cg_relative_residual",
    "cg_converged",
    "active_tets",
    "delta_size",
    "edges_visited",
    "entries_mutated",
    "tets_scanned",
    "parity_mismatch_count",
    "parity_max_abs_diff",
    "connectivity_mismatch_rate",
    "state_bytes",
];

fn csv_row(r: &FrameMetrics) -> String {
    let opt_u64 = |v: Option<u64>| v.map_or(String::new(), |x| x.to_string());
    let opt_f64 = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.17e}"));
    format!(
        "{},{},{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},{:.9e},{},{},{},{},{},{},{},{},{:.9e},{}",
        r.seed,
        r.frame,
        r.scenario,
        r.operator,
        r.policy.tag(),
        r.frame_time_s,
        r.update_time_s,
        r.connectivity_time_s,
        r.finalize_time_s,
        r.solve_time_s,
        r.cg_iterations,
        r.cg_relative_residual,
        r.cg_converged,
        r.active_tets,
        r.delta_size,
        r.edges_visited,
        r.entries_mutated,
        r.tets_scanned,
        opt_u64(r.parity_mismatch_count),
        opt_f64(r.parity_max_abs_diff),
        r.connectivity_mismatch_rate,
        r.state_bytes,
    )
}

/// Renders all rows (one per seed and frame) in the fixed column order.
pub fn render_csv(report: &BenchReport) -> String {
    let mut out = String::new();
    writeln!(out, "{}", CSV_COLUMNS.join(",")).unwrap();
    for row in &report.rows {
        writeln!(out, "{}", csv_row(row)).unwrap();
    }
    out
}

pub fn write_csv(report: &BenchReport, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(report))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct GroupSummary {
    scenario: String,
    operator: String,
    policy: String,
    /// Aggregates over every CSV row of the group (identical to CSV column
    /// means by construction).
    all_frames: SummaryBlock,
    /// Aggregates excluding the warm-up frame 0; timing comparisons use
    /// these.
    steady_state: SummaryBlock,
    parity_mismatch_total: u64,
    parity_max_abs_diff: f64,
    connectivity_mismatch_max: f64,
}

#[derive(Debug, Serialize)]
struct SummaryBlock {
    frame_time_s: Aggregate,
    update_time_s: Aggregate,
    connectivity_time_s: Aggregate,
    finalize_time_s: Aggregate,
    solve_time_s: Aggregate,
    cg_iterations: Aggregate,
}

#[derive(Debug, Serialize)]
struct JsonSummary {
    groups: Vec<GroupSummary>,
    failures: Vec<crate::bench::metrics::FailureRow>,
    note: &'static str,
}

fn block<'a>(rows: impl Iterator<Item = &'a FrameMetrics> + Clone) -> SummaryBlock {
    SummaryBlock {
        frame_time_s: aggregate(rows.clone().map(|r| r.frame_time_s)),
        update_time_s: aggregate(rows.clone().map(|r| r.update_time_s)),
        connectivity_time_s: aggregate(rows.clone().map(|r| r.connectivity_time_s)),
        finalize_time_s: aggregate(rows.clone().map(|r| r.finalize_time_s)),
        solve_time_s: aggregate(rows.clone().map(|r| r.solve_time_s)),
        cg_iterations: aggregate(rows.map(|r| r.cg_iterations as f64)),
    }
}

/// Per-(scenario, operator, policy) aggregates as JSON.
pub fn render_json_summary(report: &BenchReport) -> Result<String> {
    let mut keys: Vec<(String, String, UpdatePolicy)> = report
        .rows
        .iter()
        .map(|r| (r.scenario.to_string(), r.operator.to_string(), r.policy))
        .collect();
    keys.sort_by(|a, b| (&a.0, &a.1, a.2.tag()).cmp(&(&b.0, &b.1, b.2.tag())));
    keys.dedup();

    let mut groups = Vec::with_capacity(keys.len());
    for (scenario, operator, policy) in keys {
        let rows = || {
            report.rows.iter().filter(|r| {
                r.scenario.to_string() == scenario
                    && r.operator.to_string() == operator
                    && r.policy == policy
            })
        };
        groups.push(GroupSummary {
            scenario: scenario.clone(),
            operator: operator.clone(),
            policy: policy.to_string(),
            all_frames: block(rows()),
            steady_state: block(rows().filter(|r| r.frame > 0)),
            parity_mismatch_total: rows().filter_map(|r| r.parity_mismatch_count).sum(),
            parity_max_abs_diff: rows()
                .filter_map(|r| r.parity_max_abs_diff)
                .fold(0.0, f64::max),
            connectivity_mismatch_max: rows()
                .map(|r| r.connectivity_mismatch_rate)
                .fold(0.0, f64::max),
        });
    }
    let summary = JsonSummary {
        groups,
        failures: report.failures.clone(),
        note: "steady_state excludes warm-up frame 0; all_frames matches the CSV rows",
    };
    Ok(serde_json::to_string_pretty(&summary)?)
}

pub fn write_json_summary(report: &BenchReport, path: &Path) -> Result<()> {
    std::fs::write(path, render_json_summary(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::metrics::OperatorKind;
    use crate::edits::Scenario;

    fn row(seed: u64, frame: usize, ft: f64) -> FrameMetrics {
        FrameMetrics {
            seed,
            frame,
            scenario: Scenario::Fracture,
            operator: OperatorKind::Proxy,
            policy: UpdatePolicy::StreamingUpdate,
            frame_time_s: ft,
            update_time_s: ft / 10.0,
            connectivity_time_s: 0.0,
            finalize_time_s: 0.0,
            solve_time_s: ft / 2.0,
            cg_iterations: 7,
            cg_relative_residual: 1e-9,
            cg_converged: true,
            active_tets: 100,
            delta_size: 4,
            edges_visited: 24,
            entries_mutated: 8,
            tets_scanned: 4,
            parity_mismatch_count: Some(0),
            parity_max_abs_diff: Some(0.0),
            connectivity_mismatch_rate: 0.0,
            state_bytes: 1024,
        }
    }

    #[test]
    fn csv_row_count_and_header() {
        let report = BenchReport {
            rows: vec![row(0, 0, 1.0), row(0, 1, 2.0), row(1, 0, 3.0)],
            failures: vec![],
        };
        let csv = render_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 3);
        assert_eq!(lines[0].split(',').count(), CSV_COLUMNS.len());
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), CSV_COLUMNS.len());
        }
    }

    #[test]
    fn json_means_match_csv_means() {
        let report = BenchReport {
            rows: vec![row(0, 0, 1.5), row(0, 1, 2.5), row(1, 0, 4.0), row(1, 1, 8.0)],
            failures: vec![],
        };
        let csv = render_csv(&report);
        let col = CSV_COLUMNS.iter().position(|&c| c == "frame_time_s").unwrap();
        let values: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
            .collect();
        let csv_mean = values.iter().sum::<f64>() / values.len() as f64;

        let json: serde_json::Value =
            serde_json::from_str(&render_json_summary(&report).unwrap()).unwrap();
        let json_mean = json["groups"][0]["all_frames"]["frame_time_s"]["mean"]
            .as_f64()
            .unwrap();
        assert!((csv_mean - json_mean).abs() <= crate::tolerances::REPORT_MEAN_ABS);
    }

    #[test]
    fn rerender_is_byte_stable() {
        let report = BenchReport {
            rows: vec![row(2, 0, 0.25)],
            failures: vec![],
        };
        assert_eq!(render_csv(&report), render_csv(&report));
        assert_eq!(
            render_json_summary(&report).unwrap(),
            render_json_summary(&report).unwrap()
        );
    }
}
