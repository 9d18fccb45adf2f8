use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{avg_score, BenchmarkRow};
use crate::accounting::size_reduction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Objective {
    MinSize,
    MaxAvg,
    MaxTg,
    MinPpl,
}

/// Hard limits plus an optional ranking objective. Without an objective the
/// feasible schemes are ranked by Avg.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Constraints {
    pub max_size_mib: Option<f64>,
    /// Minimum size reduction against the baseline, percent.
    pub min_reduction: Option<f64>,
    pub min_avg: Option<f64>,
    pub max_ppl: Option<f64>,
    pub objective: Option<Objective>,
}

impl Constraints {
    fn is_empty(&self) -> bool {
        self.max_size_mib.is_none()
            && self.min_reduction.is_none()
            && self.min_avg.is_none()
            && self.max_ppl.is_none()
            && self.objective.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ranked {
    pub scheme: String,
    pub size_mib: Option<f64>,
    pub reduction: Option<f64>,
    pub avg: Option<f64>,
    pub ppl: Option<f64>,
    pub tg128: Option<f64>,
}

/// How one hard limit acted on the candidate rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BindingConstraint {
    pub constraint: &'static str,
    pub limit: f64,
    /// Rows this limit rejects on its own, including rows lacking the field.
    pub rejected: usize,
    /// Most favorable value of the constrained quantity among all rows.
    pub best_available: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Recommendation {
    /// Feasible schemes, best first. Empty when nothing satisfies every limit.
    pub ranked: Vec<Ranked>,
    /// Limits that reject at least one row.
    pub binding: Vec<BindingConstraint>,
}

struct Limit {
    name: &'static str,
    limit: f64,
    value: fn(&Ranked) -> Option<f64>,
    upper: bool,
}

impl Limit {
    fn admits(&self, r: &Ranked) -> bool {
        match (self.value)(r) {
            Some(v) if self.upper => v <= self.limit,
            Some(v) => v >= self.limit,
            None => false,
        }
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>, higher_first: bool) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) if higher_first => b.total_cmp(&a),
        (Some(a), Some(b)) => a.total_cmp(&b),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Filters `rows` by the hard limits in `c` and ranks the survivors by the
/// objective, breaking ties by higher Avg, then smaller size, then scheme
/// name. `baseline` names the row that reductions are measured against; it
/// is only needed when `min_reduction` is set.
pub fn recommend(rows: &[BenchmarkRow], baseline: &str, c: &Constraints) -> Result<Recommendation> {
    if c.is_empty() {
        return Err(Error::NoConstraints);
    }
    let base_size = match c.min_reduction {
        Some(_) => Some(
            rows.iter()
                .find(|r| r.scheme == baseline)
                .ok_or_else(|| Error::MissingBaseline(baseline.into()))?
                .size_mib
                .ok_or_else(|| Error::MissingField {
                    scheme: baseline.into(),
                    field: "size_mib",
                })?,
        ),
        None => None,
    };
    let cands: Vec<Ranked> = rows
        .iter()
        .map(|r| Ranked {
            scheme: r.scheme.clone(),
            size_mib: r.size_mib,
            reduction: match (r.size_mib, base_size) {
                (Some(s), Some(b)) => size_reduction(s, b).ok(),
                _ => None,
            },
            avg: avg_score(r).ok(),
            ppl: r.ppl,
            tg128: r.tg128.map(|t| t.mean),
        })
        .collect();

    let mut limits = Vec::new();
    let mut add = |limit: Option<f64>, name, value, upper| {
        if let Some(limit) = limit {
            limits.push(Limit { name, limit, value, upper });
        }
    };
    add(c.max_size_mib, "max_size_mib", |r: &Ranked| r.size_mib, true);
    add(c.min_reduction, "min_reduction", |r: &Ranked| r.reduction, false);
    add(c.min_avg, "min_avg", |r: &Ranked| r.avg, false);
    add(c.max_ppl, "max_ppl", |r: &Ranked| r.ppl, true);

    let binding = limits
        .iter()
        .filter_map(|l| {
            let rejected = cands.iter().filter(|r| !l.admits(r)).count();
            let values = cands.iter().filter_map(|r| (l.value)(r));
            let best = if l.upper {
                values.min_by(f64::total_cmp)
            } else {
                values.max_by(f64::total_cmp)
            };
            (rejected > 0).then_some(BindingConstraint {
                constraint: l.name,
                limit: l.limit,
                rejected,
                best_available: best,
            })
        })
        .collect();

    let mut ranked: Vec<Ranked> = cands
        .into_iter()
        .filter(|r| limits.iter().all(|l| l.admits(r)))
        .filter(|r| match c.objective {
            Some(Objective::MinSize) => r.size_mib.is_some(),
            Some(Objective::MaxAvg) | None => r.avg.is_some(),
            Some(Objective::MaxTg) => r.tg128.is_some(),
            Some(Objective::MinPpl) => r.ppl.is_some(),
        })
        .collect();
    ranked.sort_by(|a, b| {
        let primary = match c.objective {
            Some(Objective::MinSize) => cmp_opt(a.size_mib, b.size_mib, false),
            Some(Objective::MaxAvg) | None => Ordering::Equal,
            Some(Objective::MaxTg) => cmp_opt(a.tg128, b.tg128, true),
            Some(Objective::MinPpl) => cmp_opt(a.ppl, b.ppl, false),
        };
        primary
            .then(cmp_opt(a.avg, b.avg, true))
            .then(cmp_opt(a.size_mib, b.size_mib, false))
            .then(a.scheme.cmp(&b.scheme))
    });
    Ok(Recommendation { ranked, binding })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, size: f64, score: f64, ppl: f64) -> BenchmarkRow {
        let mut r = BenchmarkRow::new(s);
        r.size_mib = Some(size);
        (r.gsm8k, r.hellaswag, r.ifeval, r.mmlu, r.truthfulqa_mc2) =
            (Some(score), Some(score), Some(score), Some(score), Some(score));
        r.ppl = Some(ppl);
        r
    }

    #[test]
    fn ranking_and_ties() {
        let rows = [row("a", 10.0, 50.0, 8.0), row("b", 5.0, 50.0, 8.0), row("c", 2.0, 40.0, 9.0)];
        let c = Constraints {
            objective: Some(Objective::MinPpl),
            ..Default::default()
        };
        let r = recommend(&rows, "a", &c).unwrap();
        let names: Vec<_> = r.ranked.iter().map(|r| r.scheme.as_str()).collect();
        assert_eq!(names, ["b", "a", "c"]);
        assert!(r.binding.is_empty());
    }

    #[test]
    fn infeasible_reports_limits() {
        let rows = [row("a", 10.0, 50.0, 8.0), row("b", 5.0, 45.0, 8.5)];
        let c = Constraints {
            max_size_mib: Some(4.0),
            min_avg: Some(49.0),
            ..Default::default()
        };
        let r = recommend(&rows, "a", &c).unwrap();
        assert!(r.ranked.is_empty());
        assert_eq!(r.binding.len(), 2);
        assert_eq!(r.binding[0].constraint, "max_size_mib");
        assert_eq!(r.binding[0].rejected, 2);
        assert_eq!(r.binding[0].best_available, Some(5.0));
        assert_eq!(r.binding[1].rejected, 1);
    }

    #[test]
    fn needs_something() {
        assert_eq!(recommend(&[], "x", &Constraints::default()), Err(Error::NoConstraints));
    }
}
