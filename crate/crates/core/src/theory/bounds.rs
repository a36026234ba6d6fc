use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LeakageSeries;
use crate::error::{Error, Result};

/// One point of a bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub t: usize,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Measured quantity against its theoretical bound.
///
/// For upper bounds `pass ⇔ measured ≤ bound + slack` and
/// `margin = bound − measured`; coverage reports use the lower-bound sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub margin: f64,
    pub pass: bool,
    pub inputs: BTreeMap<String, f64>,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn upper(name: &str, measured: f64, bound: f64, slack: f64, inputs: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            measured,
            bound,
            slack,
            margin: bound - measured,
            pass: measured <= bound + slack,
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            checks: Vec::new(),
        }
    }

    /// One-line summary: `name  measured  bound  margin  PASS|FAIL`.
    pub fn summary_line(&self) -> String {
        format!(
            "{:<28} measured={:.6} bound={:.6} slack={:.6} margin={:+.6} {}",
            self.name,
            self.measured,
            self.bound,
            self.slack,
            self.margin,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Unrolled suppression bound after `t` outer iterations:
/// `(1−α)^t (1−ηε)^t p₀ + [1 − (1−α)^t] p_base`.
pub fn suppression_bound(t: usize, alpha: f64, eta: f64, eps: f64, p0: f64, p_base: f64) -> f64 {
    let keep = (1.0 - alpha).powi(t as i32);
    keep * (1.0 - eta * eps).powi(t as i32) * p0 + (1.0 - keep) * p_base
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuppressionInputs {
    pub alpha: f64,
    pub step_size: f64,
    pub clip_epsilon: f64,
    /// Base-policy leakage and its standard error. `None` uses the series'
    /// first point, which is the base policy itself.
    pub p_base: Option<(f64, f64)>,
    /// Optional ceiling for the final leakage.
    pub floor: Option<f64>,
}

/// Checks every point of a leakage series against the unrolled bound.
///
/// The slack at `t` is three standard errors of `p̂_t − bound_t`, treating
/// the measurements as independent except that `p̂₀` and the base leakage
/// coincide when `p_base` is `None`.
pub fn verify_suppression(series: &LeakageSeries, inputs: &SuppressionInputs) -> Result<BoundReport> {
    let pts = &series.points;
    if pts.len() < 2 {
        return Err(Error::InvalidInput("suppression needs at least two points".into()));
    }
    if let Some((t, e)) = pts.iter().find(|(_, e)| !(0.0..=1.0).contains(&e.p)) {
        return Err(Error::InvalidInput(format!("leakage {} at t = {t} outside [0, 1]", e.p)));
    }
    let SuppressionInputs { alpha, step_size: eta, clip_epsilon: eps, p_base, floor } = *inputs;
    if !(0.0..=1.0).contains(&alpha) || !(eta * eps >= 0.0 && eta * eps <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "need α ∈ [0, 1] and ηε ∈ [0, 1], got α = {alpha}, ηε = {}",
            eta * eps
        )));
    }
    let (p0, se0) = (pts[0].1.p, pts[0].1.se);
    let mut checks = Vec::with_capacity(pts.len());
    for &(t, est) in pts {
        let keep = (1.0 - alpha).powi(t as i32);
        let c = keep * (1.0 - eta * eps).powi(t as i32);
        let (bound, bound_var) = match p_base {
            Some((pb, pb_se)) => (c * p0 + (1.0 - keep) * pb, (c * se0).powi(2) + ((1.0 - keep) * pb_se).powi(2)),
            None => (c * p0 + (1.0 - keep) * p0, ((c + 1.0 - keep) * se0).powi(2)),
        };
        let slack = if t == 0 { 0.0 } else { 3.0 * (est.se.powi(2) + bound_var).sqrt() };
        checks.push(BoundCheck { t, measured: est.p, bound, slack, pass: est.p <= bound + slack });
    }
    let last = checks.last().expect("non-empty").clone();
    let mut pass = checks.iter().all(|c| c.pass);
    let final_se = pts.last().expect("non-empty").1.se;
    if let Some(f) = floor {
        pass &= last.measured <= f + 3.0 * final_se;
    }
    let name = if alpha == 0.0 { "suppression (alpha = 0)" } else { "suppression (mixing)" };
    let mut inputs_map = vec![
        ("alpha", alpha),
        ("eta", eta),
        ("epsilon", eps),
        ("p0", p0),
        ("p_base", p_base.map_or(p0, |b| b.0)),
        ("T", last.t as f64),
    ];
    if let Some(f) = floor {
        inputs_map.push(("floor", f));
    }
    let mut report = BoundReport::upper(name, last.measured, last.bound, last.slack, &inputs_map);
    report.margin = checks
        .iter()
        .filter(|c| c.t > 0)
        .map(|c| c.bound - c.measured)
        .fold(f64::INFINITY, f64::min);
    report.pass = pass;
    report.checks = checks;
    Ok(report)
}

/// `sqrt(KL / 2)`.
pub fn pinsker_bound(kl: f64) -> f64 {
    (kl.max(0.0) / 2.0).sqrt()
}

/// Checks `Δ_u ≤ sqrt(KL / 2)`. The slack is three standard errors of `Δ_u`
/// plus the growth of the bound when KL moves up by three of its own.
pub fn verify_pinsker(delta_u: f64, delta_se: f64, kl: f64, kl_se: f64) -> Result<BoundReport> {
    if !(0.0..=1.0).contains(&delta_u) || !(kl >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need Δ_u ∈ [0, 1] and KL ≥ 0, got Δ_u = {delta_u}, KL = {kl}"
        )));
    }
    let bound = pinsker_bound(kl);
    let slack = 3.0 * delta_se + (pinsker_bound(kl + 3.0 * kl_se) - bound);
    Ok(BoundReport::upper(
        "pinsker",
        delta_u,
        bound,
        slack,
        &[("kl", kl), ("kl_se", kl_se), ("delta_u_se", delta_se)],
    ))
}

/// Two-sided Hoeffding radius for a mean of `n` values in [0, 1] holding
/// for two such means at once with probability `1 − δ`: `sqrt(ln(4/δ) / (2n))`.
pub fn hoeffding_bound(n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("δ must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    Ok(((4.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}
