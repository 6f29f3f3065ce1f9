//! Temporal-overlap precision, recall and F-measure, multi-user aggregation,
//! and the attention-pattern benchmark.

pub mod bench;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bench::{bench, bench_pattern, BenchConfig, BenchReport};

/// Overlap scores of one generated summary against one reference.
/// Precision and recall are fractions; `f_measure` is in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Precision `|gen ∩ gt| / |gen|`, recall `|gen ∩ gt| / |gt|` and their
/// harmonic mean in percent. An empty side has precision (or recall) 0, and
/// F is 0 whenever both are 0.
pub fn f_measure(gen: &[bool], gt: &[bool]) -> Result<Prf> {
    if gen.len() != gt.len() {
        return Err(Error::Precondition(format!(
            "summary length {} vs reference length {}",
            gen.len(),
            gt.len()
        )));
    }
    let overlap = gen.iter().zip(gt).filter(|(a, b)| **a && **b).count() as f64;
    let n_gen = gen.iter().filter(|&&b| b).count() as f64;
    let n_gt = gt.iter().filter(|&&b| b).count() as f64;
    let precision = if n_gen > 0.0 { overlap / n_gen } else { 0.0 };
    let recall = if n_gt > 0.0 { overlap / n_gt } else { 0.0 };
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall) * 100.0
    } else {
        0.0
    };
    Ok(Prf { precision, recall, f_measure: f })
}

/// How per-user scores are folded into one number per video.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserAggregation {
    /// Best-matching user (key-shot annotations).
    Max,
    /// Average over users (frame-score annotations).
    #[default]
    Mean,
}

impl std::str::FromStr for UserAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(UserAggregation::Max),
            "mean" => Ok(UserAggregation::Mean),
            other => Err(Error::Config(format!("unknown aggregation `{other}` (expected max or mean)"))),
        }
    }
}

/// Evaluation of one video against every user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEval {
    pub id: String,
    pub per_user: Vec<Prf>,
    /// Aggregate over users; under `Max` this is the best user's triple.
    pub aggregate: Prf,
}

pub fn evaluate_multi_user(gen: &[bool], user_masks: &[Vec<bool>], mode: UserAggregation) -> Result<VideoEval> {
    if user_masks.is_empty() {
        return Err(Error::Precondition("no user summaries".into()));
    }
    let per_user = user_masks.iter().map(|u| f_measure(gen, u)).collect::<Result<Vec<_>>>()?;
    let aggregate = match mode {
        UserAggregation::Max => *per_user
            .iter()
            .reduce(|best, p| if p.f_measure > best.f_measure { p } else { best })
            .expect("non-empty"),
        UserAggregation::Mean => {
            let n = per_user.len() as f64;
            Prf {
                precision: per_user.iter().map(|p| p.precision).sum::<f64>() / n,
                recall: per_user.iter().map(|p| p.recall).sum::<f64>() / n,
                f_measure: per_user.iter().map(|p| p.f_measure).sum::<f64>() / n,
            }
        }
    };
    Ok(VideoEval { id: String::new(), per_user, aggregate })
}

/// Per-video results plus their mean.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub videos: Vec<VideoEval>,
}

impl EvalReport {
    pub fn mean(&self) -> Prf {
        let n = self.videos.len().max(1) as f64;
        let sum = |f: fn(&Prf) -> f64| self.videos.iter().map(|v| f(&v.aggregate)).sum::<f64>() / n;
        Prf {
            precision: sum(|p| p.precision),
            recall: sum(|p| p.recall),
            f_measure: sum(|p| p.f_measure),
        }
    }

    pub fn mean_f(&self) -> f64 {
        self.mean().f_measure
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("video,precision,recall,f_measure,users\n");
        for v in &self.videos {
            let a = v.aggregate;
            let _ = writeln!(out, "{},{:.6},{:.6},{:.4},{}", v.id, a.precision, a.recall, a.f_measure, v.per_user.len());
        }
        let m = self.mean();
        let _ = writeln!(out, "mean,{:.6},{:.6},{:.4},", m.precision, m.recall, m.f_measure);
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.videos.iter().map(|v| v.id.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<width$}  {:>9}  {:>9}  {:>9}\n", "video", "P (%)", "R (%)", "F (%)");
        let line = |out: &mut String, id: &str, p: &Prf| {
            let _ = writeln!(
                out,
                "{id:<width$}  {:>9.2}  {:>9.2}  {:>9.2}",
                p.precision * 100.0,
                p.recall * 100.0,
                p.f_measure
            );
        };
        for v in &self.videos {
            line(&mut out, &v.id, &v.aggregate);
        }
        out.push_str(&"-".repeat(width + 33));
        out.push('\n');
        line(&mut out, "mean", &self.mean());
        out
    }
}
