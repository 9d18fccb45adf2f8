use alloc::collections::BTreeMap;
use alloc::string::String;

use super::{check_percent, ifeval_aggregate};
use crate::error::{Error, Result};

/// Mean and standard deviation of a throughput measurement, tokens/second.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Throughput {
    pub mean: f64,
    pub std: f64,
}

/// Evaluation results for one scheme. Every measurement is optional so that
/// partial result files can be ingested; operations that need a field report
/// its absence.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkRow {
    pub scheme: String,
    pub gsm8k: Option<f64>,
    pub hellaswag: Option<f64>,
    pub ifeval: Option<f64>,
    /// Instruction-loose, instruction-strict, prompt-loose, prompt-strict.
    pub ifeval_sub: Option<[f64; 4]>,
    pub mmlu: Option<f64>,
    pub truthfulqa_mc2: Option<f64>,
    pub ppl: Option<f64>,
    pub size_mib: Option<f64>,
    pub pp512: Option<Throughput>,
    pub tg128: Option<Throughput>,
    pub quant_seconds: Option<f64>,
    /// Further ingested columns, shown but never derived.
    pub extra: BTreeMap<String, f64>,
}

/// Allowed gap between a reported IFEval score and its recomputation from
/// sub-scores that were themselves rounded to two decimals.
const IFEVAL_SLACK: f64 = 0.006;

impl BenchmarkRow {
    pub fn new(scheme: impl Into<String>) -> Self {
        BenchmarkRow {
            scheme: scheme.into(),
            ..Default::default()
        }
    }

    /// The five headline scores in table order.
    pub fn headline_scores(&self) -> Result<[f64; 5]> {
        let get = |v: Option<f64>, name| v.ok_or(Error::MissingScore(name));
        Ok([
            get(self.gsm8k, "gsm8k")?,
            get(self.hellaswag, "hellaswag")?,
            get(self.ifeval_score(), "ifeval")?,
            get(self.mmlu, "mmlu")?,
            get(self.truthfulqa_mc2, "truthfulqa_mc2")?,
        ])
    }

    /// The reported IFEval score, or the aggregate of its sub-scores.
    pub fn ifeval_score(&self) -> Option<f64> {
        self.ifeval
            .or_else(|| self.ifeval_sub.and_then(|s| ifeval_aggregate(&s).ok()))
    }

    /// Checks ranges: percentages within `[0, 100]`, perplexity at least 1,
    /// positive sizes, and agreement between IFEval and its sub-scores.
    pub fn validate(&self) -> Result<()> {
        let percents = [
            ("gsm8k", self.gsm8k),
            ("hellaswag", self.hellaswag),
            ("ifeval", self.ifeval),
            ("mmlu", self.mmlu),
            ("truthfulqa_mc2", self.truthfulqa_mc2),
        ];
        for (field, v) in percents {
            if let Some(v) = v {
                check_percent(field, v)?;
            }
        }
        if let Some(sub) = self.ifeval_sub {
            let mean = ifeval_aggregate(&sub)?;
            if let Some(reported) = self.ifeval {
                if (reported - mean).abs() > IFEVAL_SLACK {
                    return Err(Error::IfevalMismatch { reported, mean });
                }
            }
        }
        if let Some(p) = self.ppl {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::PerplexityRange(p));
            }
        }
        let positive = [("size_mib", self.size_mib), ("quant_seconds", self.quant_seconds)];
        for (field, v) in positive {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::NonFiniteField(field));
                }
                if v <= 0.0 {
                    return Err(Error::NonPositive(field));
                }
            }
        }
        for (field, t) in [("pp512", self.pp512), ("tg128", self.tg128)] {
            if let Some(t) = t {
                if !t.mean.is_finite() || !t.std.is_finite() {
                    return Err(Error::NonFiniteField(field));
                }
                if t.mean <= 0.0 || t.std < 0.0 {
                    return Err(Error::NonPositive(field));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ifeval_from_subscores() {
        let mut r = BenchmarkRow::new("x");
        r.ifeval_sub = Some([80.0, 70.0, 60.0, 50.0]);
        assert_eq!(r.ifeval_score(), Some(65.0));
        r.ifeval = Some(65.004);
        assert!(r.validate().is_ok());
        r.ifeval = Some(66.0);
        assert!(matches!(r.validate(), Err(Error::IfevalMismatch { .. })));
    }

    #[test]
    fn ranges() {
        let mut r = BenchmarkRow::new("x");
        r.mmlu = Some(100.5);
        assert!(matches!(r.validate(), Err(Error::PercentRange { field: "mmlu", .. })));
        let mut r = BenchmarkRow::new("x");
        r.ppl = Some(0.9);
        assert_eq!(r.validate(), Err(Error::PerplexityRange(0.9)));
        let mut r = BenchmarkRow::new("x");
        r.size_mib = Some(0.0);
        assert_eq!(r.validate(), Err(Error::NonPositive("size_mib")));
    }

    #[test]
    fn missing_score() {
        let mut r = BenchmarkRow::new("x");
        r.gsm8k = Some(1.0);
        assert_eq!(r.headline_scores(), Err(Error::MissingScore("hellaswag")));
    }
}
