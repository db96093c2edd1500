//! Structural similarity between frames and the first-frame fidelity gate.
//!
//! Global single-window SSIM: one mean/variance/covariance over the whole
//! frame with the standard stabilizers C1=(0.01 L)^2 and C2=(0.03 L)^2 at
//! dynamic range L=1. Deterministic and parameter-light, which is what the
//! gate needs; no sliding window.

use serde::{Deserialize, Serialize};

use crate::types::{Clip, ContractViolation, Frame};

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub const DEFAULT_SSIM_GATE_THRESHOLD: f64 = 0.95;

/// Global SSIM over two equally sized frames, in `[-1, 1]`, symmetric in its
/// arguments, and exactly 1 for identical frames.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64, ContractViolation> {
    if a.width != b.width || a.height != b.height {
        return Err(ContractViolation(format!(
            "ssim dimension mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let n = a.pixels.len() as f64;
    let mu_a = a.pixels.iter().sum::<f64>() / n;
    let mu_b = b.pixels.iter().sum::<f64>() / n;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
        let da = pa - mu_a;
        let db = pb - mu_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    Ok(((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2))
        / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)))
}

/// Threshold comparator used by the gate; split out so synthetic scores can
/// be checked directly.
pub fn gate_decision(ssim_value: f64, threshold: f64) -> bool {
    ssim_value >= threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub pass: bool,
    pub ssim_value: f64,
}

/// First-frame fidelity gate: a clip may only resume a trajectory if its
/// first frame matches the conditioning frame closely enough.
pub fn first_frame_gate(
    clip: &Clip,
    conditioning: &Frame,
    threshold: f64,
) -> Result<GateResult, ContractViolation> {
    let value = ssim(clip.first_frame(), conditioning)?;
    Ok(GateResult { pass: gate_decision(value, threshold), ssim_value: value })
}
