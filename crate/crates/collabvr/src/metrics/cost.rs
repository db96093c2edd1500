//! Cost accounting over run traces: generation seconds, VLM tokens, and
//! their dollar decomposition.

use serde::{Deserialize, Serialize};

use crate::trace::{EventKind, RunTrace};

/// Dollar rates for generation seconds and VLM tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingModel {
    /// Dollars per second of generated video.
    pub vgm_dollars_per_second: f64,
    /// Dollars per million input tokens.
    pub vlm_input_dollars_per_mtok: f64,
    /// Dollars per million output tokens.
    pub vlm_output_dollars_per_mtok: f64,
}

impl Default for PricingModel {
    fn default() -> Self {
        Self {
            vgm_dollars_per_second: 0.15,
            vlm_input_dollars_per_mtok: 1.25,
            vlm_output_dollars_per_mtok: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub vgm_seconds: f64,
    pub vgm_dollars: f64,
    pub vlm_calls: u64,
    pub vlm_input_tokens: u64,
    pub vlm_output_tokens: u64,
    pub vlm_dollars: f64,
    pub total_dollars: f64,
    /// Fraction of total dollars spent on generation; shares sum to 1.
    pub vgm_share: f64,
    pub vlm_share: f64,
    /// Generation-to-supervision dollar ratio, absent when no VLM spend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vgm_vlm_ratio: Option<f64>,
    /// False when the trace has no terminate event (partial report).
    pub complete: bool,
}

/// Sum per-call costs over one trace.
pub fn cost_report(trace: &RunTrace, pricing: &PricingModel) -> CostReport {
    let mut vgm_seconds = 0.0f64;
    let mut input_tokens = 0u64;
    let mut output_tokens = 0u64;
    let mut vlm_calls = 0u64;
    for e in trace.events() {
        match e.event_kind {
            EventKind::GeneratorCall => vgm_seconds += e.vgm_seconds,
            EventKind::PlannerCall | EventKind::VerifierCall | EventKind::RouterCall => {
                vlm_calls += 1;
                input_tokens += e.input_tokens;
                output_tokens += e.output_tokens;
            }
            _ => {}
        }
    }
    build_report(
        vgm_seconds,
        vlm_calls,
        input_tokens,
        output_tokens,
        pricing,
        trace.is_terminated(),
    )
}

/// Total cost over a run corpus plus the per-sample mean.
pub fn aggregate_cost(traces: &[RunTrace], pricing: &PricingModel) -> (CostReport, CostReport) {
    let mut vgm_seconds = 0.0f64;
    let mut input_tokens = 0u64;
    let mut output_tokens = 0u64;
    let mut vlm_calls = 0u64;
    let mut complete = true;
    for t in traces {
        let r = cost_report(t, pricing);
        vgm_seconds += r.vgm_seconds;
        input_tokens += r.vlm_input_tokens;
        output_tokens += r.vlm_output_tokens;
        vlm_calls += r.vlm_calls;
        complete &= r.complete;
    }
    let total = build_report(vgm_seconds, vlm_calls, input_tokens, output_tokens, pricing, complete);
    let n = traces.len().max(1) as f64;
    let mean = CostReport {
        vgm_seconds: total.vgm_seconds / n,
        vgm_dollars: total.vgm_dollars / n,
        vlm_calls: total.vlm_calls,
        vlm_input_tokens: total.vlm_input_tokens,
        vlm_output_tokens: total.vlm_output_tokens,
        vlm_dollars: total.vlm_dollars / n,
        total_dollars: total.total_dollars / n,
        vgm_share: total.vgm_share,
        vlm_share: total.vlm_share,
        vgm_vlm_ratio: total.vgm_vlm_ratio,
        complete,
    };
    (total, mean)
}

fn build_report(
    vgm_seconds: f64,
    vlm_calls: u64,
    input_tokens: u64,
    output_tokens: u64,
    pricing: &PricingModel,
    complete: bool,
) -> CostReport {
    let vgm_dollars = vgm_seconds * pricing.vgm_dollars_per_second;
    let vlm_dollars = input_tokens as f64 * pricing.vlm_input_dollars_per_mtok / 1e6
        + output_tokens as f64 * pricing.vlm_output_dollars_per_mtok / 1e6;
    let total_dollars = vgm_dollars + vlm_dollars;
    let (vgm_share, vlm_share) = if total_dollars > 0.0 {
        (vgm_dollars / total_dollars, vlm_dollars / total_dollars)
    } else {
        (0.0, 0.0)
    };
    CostReport {
        vgm_seconds,
        vgm_dollars,
        vlm_calls,
        vlm_input_tokens: input_tokens,
        vlm_output_tokens: output_tokens,
        vlm_dollars,
        total_dollars,
        vgm_share,
        vlm_share,
        vgm_vlm_ratio: (vlm_dollars > 0.0).then(|| vgm_dollars / vlm_dollars),
        complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{payload, RunHeader, TraceEvent};
    use serde_json::json;

    fn trace_with(events: Vec<TraceEvent>, terminated: bool) -> RunTrace {
        let mut t = RunTrace::new(RunHeader {
            task_id: "t".into(),
            config_hash: "h".into(),
            rng_seed: 0,
            started_at: 0,
        });
        for e in events {
            t.append(e).unwrap();
        }
        if terminated {
            t.append(TraceEvent::new(
                EventKind::Terminate,
                1_000_000,
                0,
                0,
                json!({ payload::REASON: payload::REASON_BUDGET_EXHAUSTED }),
            ))
            .unwrap();
        }
        t
    }

    fn gen_event(ts: i64, seconds: f64) -> TraceEvent {
        TraceEvent::new(EventKind::GeneratorCall, ts, 1, 1, json!({})).with_vgm_seconds(seconds)
    }

    fn vlm_event(kind: EventKind, ts: i64, input: u64, output: u64) -> TraceEvent {
        TraceEvent::new(kind, ts, 1, 1, json!({})).with_tokens(input, output)
    }

    #[test]
    fn vgm_dollars_at_published_rate() {
        // 21.4 s at $0.15/s is $3.210.
        let t = trace_with(vec![gen_event(0, 21.4)], true);
        let r = cost_report(&t, &PricingModel::default());
        assert!((r.vgm_dollars - 3.21).abs() < 1e-9, "got {}", r.vgm_dollars);
        assert!(r.complete);
        assert!((r.vgm_share + r.vlm_share - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_generator_calls_cost_nothing() {
        let t = trace_with(vec![], true);
        let r = cost_report(&t, &PricingModel::default());
        assert_eq!(r.vgm_dollars, 0.0);
        assert_eq!(r.vlm_dollars, 0.0);
        assert_eq!(r.total_dollars, 0.0);
        assert!(r.vgm_vlm_ratio.is_none());
    }

    #[test]
    fn vlm_dollars_from_call_profiles() {
        // 256 planner calls (800/186) plus 401 verifier calls (2724/117)
        // over a 100-sample corpus: per-sample 12,971.24 input tokens and
        // 945.33 output tokens, $0.026 at the published token rates.
        let mut events = Vec::new();
        for i in 0..256 {
            events.push(vlm_event(EventKind::PlannerCall, i, 800, 186));
        }
        for i in 0..401 {
            events.push(vlm_event(EventKind::VerifierCall, 256 + i, 2724, 117));
        }
        let t = trace_with(events, true);
        let r = cost_report(&t, &PricingModel::default());
        assert_eq!(r.vlm_input_tokens, 256 * 800 + 401 * 2724);
        assert_eq!(r.vlm_output_tokens, 256 * 186 + 401 * 117);
        let per_sample = r.vlm_dollars / 100.0;
        assert!((per_sample - 0.026).abs() <= 0.001, "got {per_sample}");
    }

    #[test]
    fn missing_terminate_is_flagged_partial() {
        let t = trace_with(vec![gen_event(0, 6.0)], false);
        let r = cost_report(&t, &PricingModel::default());
        assert!(!r.complete);
        assert_eq!(r.vgm_seconds, 6.0);
    }

    #[test]
    fn aggregate_mean_divides_by_runs() {
        let a = trace_with(vec![gen_event(0, 6.0)], true);
        let b = trace_with(vec![gen_event(0, 12.0)], true);
        let (total, mean) = aggregate_cost(&[a, b], &PricingModel::default());
        assert!((total.vgm_seconds - 18.0).abs() < 1e-12);
        assert!((mean.vgm_seconds - 9.0).abs() < 1e-12);
    }
}
