//! Run analytics: cost accounting, pipeline statistics over traces,
//! agreement metrics for supervisor-reliability analysis, and the SSIM
//! first-frame fidelity gate.

mod agreement;
mod cost;
mod ssim;
mod stats;

pub use agreement::{
    agreement_d1, agreement_d2, agreement_d2_from_confusion, agreement_d3, AnnotationRecord,
    AnnotationSet, Axis, D1Report, D2Report, D3Report,
};
pub use cost::{aggregate_cost, cost_report, CostReport, PricingModel};
pub use ssim::{first_frame_gate, gate_decision, ssim, GateResult, DEFAULT_SSIM_GATE_THRESHOLD};
pub use stats::{pipeline_stats, PipelineStats, SummaryStats};
