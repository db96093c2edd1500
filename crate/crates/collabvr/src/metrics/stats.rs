//! Pipeline statistics over a run-trace corpus: per-sample step, clip,
//! regeneration, and VLM-call summaries plus their distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trace::{payload, EventKind, RunTrace};
use crate::types::ContractViolation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator), 0 for a single run.
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
        };
        Self { mean, std, median, min: sorted[0], max: *sorted.last().unwrap() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub runs: usize,
    pub steps: SummaryStats,
    pub regenerations: SummaryStats,
    pub clips: SummaryStats,
    pub vlm_calls: SummaryStats,
    /// Share of runs per step count taken.
    pub step_count_shares: BTreeMap<u32, f64>,
    /// Share of runs per total regeneration count.
    pub regen_histogram: BTreeMap<u32, f64>,
}

/// Summarize a trace corpus. Regenerations follow the clip accounting
/// identity: regenerations = clips - steps per run.
pub fn pipeline_stats(traces: &[RunTrace]) -> Result<PipelineStats, ContractViolation> {
    if traces.is_empty() {
        return Err(ContractViolation("pipeline_stats requires at least one trace".into()));
    }
    let mut steps_v = Vec::with_capacity(traces.len());
    let mut regen_v = Vec::with_capacity(traces.len());
    let mut clips_v = Vec::with_capacity(traces.len());
    let mut vlm_v = Vec::with_capacity(traces.len());
    let mut step_counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut regen_counts: BTreeMap<u32, usize> = BTreeMap::new();

    for t in traces {
        let mut steps = 0u32;
        let mut clips = 0u32;
        let mut vlm = 0u32;
        for e in t.events() {
            match e.event_kind {
                EventKind::PlannerCall => {
                    vlm += 1;
                    if e.payload[payload::EXECUTED].as_bool() == Some(true) {
                        steps += 1;
                    }
                }
                EventKind::VerifierCall | EventKind::RouterCall => vlm += 1,
                EventKind::GeneratorCall => clips += 1,
                _ => {}
            }
        }
        let regens = clips.saturating_sub(steps);
        steps_v.push(steps as f64);
        clips_v.push(clips as f64);
        vlm_v.push(vlm as f64);
        regen_v.push(regens as f64);
        *step_counts.entry(steps).or_default() += 1;
        *regen_counts.entry(regens).or_default() += 1;
    }

    let n = traces.len() as f64;
    Ok(PipelineStats {
        runs: traces.len(),
        steps: SummaryStats::from_values(&steps_v),
        regenerations: SummaryStats::from_values(&regen_v),
        clips: SummaryStats::from_values(&clips_v),
        vlm_calls: SummaryStats::from_values(&vlm_v),
        step_count_shares: step_counts.into_iter().map(|(k, v)| (k, v as f64 / n)).collect(),
        regen_histogram: regen_counts.into_iter().map(|(k, v)| (k, v as f64 / n)).collect(),
    })
}
