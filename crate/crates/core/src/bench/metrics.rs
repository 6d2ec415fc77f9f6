//! Per-frame measurement rows and the small statistics used by reports.

use serde::Serialize;

use crate::edits::Scenario;
use crate::proxy::{UpdatePolicy, WorkCounters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Proxy,
    Elasticity,
    Dynamics,
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OperatorKind::Proxy => "proxy",
            OperatorKind::Elasticity => "elasticity",
            OperatorKind::Dynamics => "dynamics",
        };
        f.write_str(s)
    }
}

/// One row per (seed, frame).
#[derive(Debug, Clone, Serialize)]
pub struct FrameMetrics {
    pub seed: u64,
    pub frame: usize,
    pub scenario: Scenario,
    pub operator: OperatorKind,
    pub policy: UpdatePolicy,
    pub frame_time_s: f64,
    pub update_time_s: f64,
    pub connectivity_time_s: f64,
    pub finalize_time_s: f64,
    pub solve_time_s: f64,
    pub cg_iterations: usize,
    pub cg_relative_residual: f64,
    pub cg_converged: bool,
    pub active_tets: usize,
    pub delta_size: usize,
    pub edges_visited: u64,
    pub entries_mutated: u64,
    pub tets_scanned: u64,
    /// Present only when parity checking is on.
    pub parity_mismatch_count: Option<u64>,
    pub parity_max_abs_diff: Option<f64>,
    pub connectivity_mismatch_rate: f64,
    pub state_bytes: usize,
}

impl FrameMetrics {
    pub fn counters(&self) -> WorkCounters {
        WorkCounters {
            edges_visited: self.edges_visited,
            entries_mutated: self.entries_mutated,
            tets_scanned: self.tets_scanned,
        }
    }
}

/// A run that aborted, recorded so partial reports are explicit.
#[derive(Debug, Clone, Serialize)]
pub struct FailureRow {
    pub seed: u64,
    pub policy: UpdatePolicy,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub fn aggregate(values: impl IntoIterator<Item = f64>) -> Aggregate {
    let values: Vec<f64> = values.into_iter().collect();
    if values.is_empty() {
        return Aggregate::default();
    }
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    let min = values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    Aggregate {
        mean,
        std: var.sqrt(),
        min,
        max,
        count,
    }
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average rank across the tie group (1-based ranks).
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Least-squares line fit returning the coefficient of determination.
pub fn linear_r_squared(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if syy == 0.0 {
        return 1.0;
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    1.0 - ss_res / syy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_basics() {
        let a = aggregate([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.mean, 2.5);
        assert_eq!(a.min, 1.0);
        assert_eq!(a.max, 4.0);
        assert_eq!(a.count, 4);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn spearman_detects_monotonicity() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let inc = [0.1, 0.2, 0.5, 0.9];
        let dec = [0.9, 0.5, 0.2, 0.1];
        assert!((spearman(&x, &inc) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &dec) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn r_squared_is_one_on_a_line() {
        let x = [1.0, 2.0, 3.0];
        let y = [2.0, 4.0, 6.0];
        assert!((linear_r_squared(&x, &y) - 1.0).abs() < 1e-12);
    }
}
