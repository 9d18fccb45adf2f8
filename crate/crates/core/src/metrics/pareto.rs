use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{avg_loss, avg_score, BenchmarkRow};
use crate::accounting::size_reduction;
use crate::error::{Error, Result};

/// One scheme placed in the compression/quality plane.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParetoPoint {
    pub scheme: String,
    /// Size reduction against the baseline, percent.
    pub reduction: f64,
    /// Average-score loss against the baseline, percent.
    pub avg_loss: f64,
    pub on_frontier: bool,
    /// Schemes that dominate this one, in input order.
    pub dominated_by: Vec<String>,
}

fn dominates(q: (f64, f64), p: (f64, f64)) -> bool {
    q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1)
}

/// Indices (ascending) of the points `(reduction, avg_loss)` that no other
/// point dominates. `q` dominates `p` when it reduces at least as much with
/// no more loss and is strictly better in one of the two. Exact duplicates
/// do not dominate each other, so they share the frontier. Points with a
/// NaN coordinate are never on the frontier and dominate nothing.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len())
        .filter(|&i| !points[i].0.is_nan() && !points[i].1.is_nan())
        .collect();
    // descending reduction, then ascending loss
    order.sort_by(|&a, &b| {
        points[b].0.total_cmp(&points[a].0).then(points[a].1.total_cmp(&points[b].1))
    });
    let mut frontier = Vec::new();
    // lowest loss among points with strictly greater reduction
    let mut best_greater = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let r = points[order[i]].0;
        let group_min = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == r {
            let p = order[j];
            if points[p].1 == group_min && group_min < best_greater {
                frontier.push(p);
            }
            j += 1;
        }
        best_greater = best_greater.min(group_min);
        i = j;
    }
    frontier.sort_unstable();
    frontier
}

/// Places every non-baseline row relative to `baseline`, which must have a
/// size and all five headline scores, as must every other row.
pub fn pareto_points(rows: &[BenchmarkRow], baseline: &str) -> Result<Vec<ParetoPoint>> {
    let base = rows
        .iter()
        .find(|r| r.scheme == baseline)
        .ok_or_else(|| Error::MissingBaseline(baseline.into()))?;
    let size = |r: &BenchmarkRow| {
        r.size_mib.ok_or_else(|| Error::MissingField {
            scheme: r.scheme.clone(),
            field: "size_mib",
        })
    };
    let base_size = size(base)?;
    let base_avg = avg_score(base)?;
    let mut points = Vec::new();
    let mut names = Vec::new();
    for r in rows.iter().filter(|r| r.scheme != baseline) {
        let reduction = size_reduction(size(r)?, base_size)?;
        let loss = avg_loss(avg_score(r)?, base_avg)?;
        points.push((reduction, loss));
        names.push(r.scheme.clone());
    }
    let frontier = pareto_frontier(&points);
    let mut on = vec![false; points.len()];
    for &i in &frontier {
        on[i] = true;
    }
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, &p)| ParetoPoint {
            scheme: names[i].clone(),
            reduction: p.0,
            avg_loss: p.1,
            on_frontier: on[i],
            dominated_by: points
                .iter()
                .enumerate()
                .filter(|&(j, &q)| j != i && dominates(q, p))
                .map(|(j, _)| names[j].clone())
                .collect(),
        })
        .collect())
}
