//! Agreement statistics between human annotations and model outputs along
//! the three supervisor axes: plan depth (d1), clip verification (d2), and
//! evolution-suggestion quality (d3).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::types::ContractViolation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    D1,
    D2,
    D3,
}

/// One annotated item. `human` and `model` are axis-dependent: step counts
/// for d1, "accept"/"reject" for d2, ratings 1-3 for d3. Model outputs may
/// be unparseable; that is data, not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub axis: Axis,
    pub human: Value,
    pub model: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub records: Vec<AnnotationRecord>,
}

impl AnnotationSet {
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, ContractViolation> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ContractViolation(format!("annotation read: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AnnotationRecord = serde_json::from_str(&line)
                .map_err(|e| ContractViolation(format!("bad annotation at line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn axis(&self, axis: Axis) -> impl Iterator<Item = &AnnotationRecord> {
        self.records.iter().filter(move |r| r.axis == axis)
    }
}

fn parse_count(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Plan-depth agreement: exact-match over every record (unparseable model
/// outputs count as mismatches) and mean absolute error over the parseable
/// subset only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D1Report {
    pub n: usize,
    pub parseable: usize,
    pub exact_match: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
}

pub fn agreement_d1(set: &AnnotationSet) -> Result<D1Report, ContractViolation> {
    let mut n = 0usize;
    let mut matches = 0usize;
    let mut parseable = 0usize;
    let mut abs_err = 0.0f64;
    for rec in set.axis(Axis::D1) {
        let human = parse_count(&rec.human).ok_or_else(|| {
            ContractViolation(format!("d1 record {} has non-integer human label", rec.item_id))
        })?;
        n += 1;
        if let Some(model) = parse_count(&rec.model) {
            parseable += 1;
            abs_err += (human - model).abs() as f64;
            if human == model {
                matches += 1;
            }
        }
    }
    if n == 0 {
        return Err(ContractViolation("no d1 records".into()));
    }
    Ok(D1Report {
        n,
        parseable,
        exact_match: matches as f64 / n as f64,
        mae: (parseable > 0).then(|| abs_err / parseable as f64),
    })
}

/// Binary verification agreement. The confusion matrix is indexed
/// `[model][human]` with 0 = accept and 1 = reject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2Report {
    pub n: u64,
    pub confusion: [[u64; 2]; 2],
    pub accuracy: f64,
    pub accept_recall: f64,
    pub reject_recall: f64,
    pub f1_accept: f64,
    /// Undefined (not zero) when expected agreement is 1, i.e. both sides
    /// use a single class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohen_kappa: Option<f64>,
    pub gwet_ac1: f64,
}

fn parse_verdict_label(v: &Value, item: &str) -> Result<usize, ContractViolation> {
    match v.as_str() {
        Some("accept") => Ok(0),
        Some("reject") => Ok(1),
        _ => Err(ContractViolation(format!("d2 record {item} has non-binary label {v}"))),
    }
}

pub fn agreement_d2(set: &AnnotationSet) -> Result<D2Report, ContractViolation> {
    let mut confusion = [[0u64; 2]; 2];
    for rec in set.axis(Axis::D2) {
        let human = parse_verdict_label(&rec.human, &rec.item_id)?;
        let model = parse_verdict_label(&rec.model, &rec.item_id)?;
        confusion[model][human] += 1;
    }
    agreement_d2_from_confusion(confusion)
}

/// Compute the d2 report straight from a `[model][human]` confusion matrix.
pub fn agreement_d2_from_confusion(confusion: [[u64; 2]; 2]) -> Result<D2Report, ContractViolation> {
    let n: u64 = confusion.iter().flatten().sum();
    if n == 0 {
        return Err(ContractViolation("no d2 records".into()));
    }
    let nf = n as f64;
    let tp = confusion[0][0] as f64; // model accept, human accept
    let fp = confusion[0][1] as f64; // model accept, human reject
    let fn_ = confusion[1][0] as f64; // model reject, human accept
    let tn = confusion[1][1] as f64;

    let human_accept = tp + fn_;
    let human_reject = fp + tn;
    let model_accept = tp + fp;
    let model_reject = fn_ + tn;

    let accuracy = (tp + tn) / nf;
    let accept_recall = if human_accept > 0.0 { tp / human_accept } else { 0.0 };
    let reject_recall = if human_reject > 0.0 { tn / human_reject } else { 0.0 };
    let f1_accept =
        if 2.0 * tp + fp + fn_ > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };

    // Chance agreement from marginal products.
    let p_e = (model_accept * human_accept + model_reject * human_reject) / (nf * nf);
    let cohen_kappa = ((1.0 - p_e).abs() > 1e-12).then(|| (accuracy - p_e) / (1.0 - p_e));

    // Two-category closed form: chance term from the pooled accept share.
    let pi = (human_accept + model_accept) / (2.0 * nf);
    let p_gamma = 2.0 * pi * (1.0 - pi);
    let gwet_ac1 = (accuracy - p_gamma) / (1.0 - p_gamma);

    Ok(D2Report {
        n,
        confusion,
        accuracy,
        accept_recall,
        reject_recall,
        f1_accept,
        cohen_kappa,
        gwet_ac1,
    })
}

/// Evolution-suggestion quality: distribution of 1-3 human ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D3Report {
    pub n: usize,
    pub mean_rating: f64,
    pub share_ge2: f64,
    pub share_eq3: f64,
}

pub fn agreement_d3(set: &AnnotationSet) -> Result<D3Report, ContractViolation> {
    let mut n = 0usize;
    let mut sum = 0i64;
    let mut ge2 = 0usize;
    let mut eq3 = 0usize;
    for rec in set.axis(Axis::D3) {
        let rating = parse_count(&rec.human).filter(|r| (1..=3).contains(r)).ok_or_else(|| {
            ContractViolation(format!("d3 record {} rating outside 1..=3", rec.item_id))
        })?;
        n += 1;
        sum += rating;
        if rating >= 2 {
            ge2 += 1;
        }
        if rating == 3 {
            eq3 += 1;
        }
    }
    if n == 0 {
        return Err(ContractViolation("no d3 records".into()));
    }
    Ok(D3Report {
        n,
        mean_rating: sum as f64 / n as f64,
        share_ge2: ge2 as f64 / n as f64,
        share_eq3: eq3 as f64 / n as f64,
    })
}
