//! Scores, perplexity and the comparisons built on them.

mod pareto;
mod recommend;
mod report;
mod rows;

use alloc::string::String;
use alloc::vec::Vec;

pub use pareto::{pareto_frontier, pareto_points, ParetoPoint};
pub use recommend::{recommend, BindingConstraint, Constraints, Objective, Ranked, Recommendation};
pub use report::{emit_report, Report};
pub use rows::{BenchmarkRow, Throughput};

use crate::error::{Error, Result};

/// `exp(-mean(logprobs))` over natural-log next-token probabilities.
///
/// The mean is taken over the sorted stream with compensated summation, so
/// any permutation of the input gives a bitwise-identical result. The
/// exponent is evaluated in base 2, which is exact for power-of-two
/// vocabularies.
pub fn perplexity(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::EmptyStream);
    }
    if let Some(i) = logprobs.iter().position(|&l| !l.is_finite() || l > 0.0) {
        return Err(Error::InvalidLogProb(i));
    }
    let mut sorted: Vec<f64> = logprobs.into();
    sorted.sort_by(f64::total_cmp);
    let mean = neumaier_sum(&sorted) / sorted.len() as f64;
    Ok(libm::exp2(-mean / core::f64::consts::LN_2))
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let (mut sum, mut c) = (0f64, 0f64);
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn check_percent(field: &'static str, value: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&value) {
        return Err(Error::PercentRange { field, value });
    }
    Ok(())
}

/// Unweighted mean of the four IFEval accuracies (instruction/prompt level,
/// loose/strict).
pub fn ifeval_aggregate(accuracies: &[f64]) -> Result<f64> {
    if accuracies.len() != 4 {
        return Err(Error::IfevalCount(accuracies.len()));
    }
    for &a in accuracies {
        check_percent("ifeval", a)?;
    }
    Ok(accuracies.iter().sum::<f64>() / 4.0)
}

/// Unweighted mean of the five headline benchmark scores; perplexity is not
/// part of it.
pub fn avg_score(row: &BenchmarkRow) -> Result<f64> {
    let scores = row.headline_scores()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Relative loss of `avg` against `baseline`, in percent. Negative when the
/// quantized model scores higher.
pub fn avg_loss(avg: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::NonPositive("baseline average"));
    }
    Ok(100.0 * (baseline - avg) / baseline)
}

/// Rounds to two decimals, half away from zero, on the value's shortest
/// decimal representation, so `69.465` becomes `69.47` even though the
/// nearest double lies just below it.
pub fn round_2dp(x: f64) -> f64 {
    fmt_2dp(x).parse().unwrap_or(x)
}

/// [`round_2dp`] rendered with exactly two decimals.
pub fn fmt_2dp(x: f64) -> String {
    use core::fmt::Write;

    if !x.is_finite() {
        let mut s = String::new();
        let _ = write!(s, "{x}");
        return s;
    }
    let mut repr = String::new();
    let _ = write!(repr, "{}", x.abs());
    let (int, frac) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int.bytes().chain(frac.bytes().chain(*b"00").take(2)).map(|b| b - b'0').collect();
    if frac.as_bytes().get(2).is_some_and(|&d| d >= b'5') {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let mut out = String::new();
    if x < 0.0 && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    let split = digits.len() - 2;
    for (i, d) in digits.iter().enumerate() {
        if i == split {
            out.push('.');
        }
        out.push((b'0' + d) as char);
    }
    out
}
