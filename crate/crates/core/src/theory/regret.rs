use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::grpo::{purge_train, Observer, StepRecord, StepSchedule, TrainConfig};
use crate::matcher::PhraseAutomaton;
use crate::policy::{train_mle, Example, Objective, Policy, SequenceNll};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainConfig {
    pub epochs: usize,
    pub step: f64,
    /// Retraining counts as converged when its last epoch lowers the NLL by less than this.
    pub tolerance: f64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self { epochs: 3000, step: 1.5, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretConfig {
    /// The unlearning run; should use the inverse-square-root schedule and a
    /// positive retain weight.
    pub train: TrainConfig,
    pub retrain: RetrainConfig,
    /// Horizons `T` at which the average gap is evaluated.
    pub t_grid: Vec<usize>,
    /// Largest accepted log-log slope.
    pub slope_threshold: f64,
}

impl Default for RegretConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                schedule: StepSchedule::InvSqrt,
                step_size: 2.0,
                retain_weight: 2000.0,
                leakage_samples: 0,
                ..Default::default()
            },
            retrain: RetrainConfig::default(),
            t_grid: vec![8, 16, 32, 64, 128, 256, 512, 960],
            slope_threshold: -0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// Least-squares slope of `ln G(T)` against `ln T`.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    /// `(T, G(T))` with `G(T)` the mean gap over updates `1..=T`.
    pub grid: Vec<(usize, f64)>,
    /// Per-update gap `L_R(θ_t) − L_R(θ^r)`.
    pub gaps: Vec<f64>,
    pub retain_loss_start: f64,
    pub retain_loss_retrained: f64,
    pub retrain_converged: bool,
    /// Set when the fit is meaningless (non-converged retraining or a non-positive average gap).
    pub inconclusive: bool,
    pub pass: bool,
}

/// Least-squares fit of `ln y = a + b ln x`; returns `(b, a, rms residual)`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidInput("log-log fit needs two or more positive points".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((slope, intercept, rms))
}

struct RetainLoss<'a> {
    nll: &'a SequenceNll,
    losses: Vec<f64>,
}

impl Observer for RetainLoss<'_> {
    fn on_step(&mut self, _record: &StepRecord, policy: &Policy) -> Result<()> {
        self.losses.push(self.nll.value(policy)?);
        Ok(())
    }
}

/// Compares unlearning against retraining from scratch on the retain set.
///
/// Retrains `θ^r` by maximum likelihood on `retain` from an empty policy,
/// runs PURGE from `base` while recording the retain loss `L_R` (mean token
/// NLL with `<eos>`) after every update, and fits the decay of the running
/// average gap `G(T) = (1/T) Σ_{t ≤ T} (L_R(θ_t) − L_R(θ^r))`.
pub fn regret_vs_retrain(
    base: &Policy,
    retain: &[Example],
    automaton: &PhraseAutomaton,
    queries: &[Vec<TokenId>],
    cfg: &RegretConfig,
) -> Result<RegretReport> {
    if retain.is_empty() {
        return Err(Error::InvalidInput("empty retain set".into()));
    }
    let t_max = cfg.t_grid.iter().copied().max().unwrap_or(0);
    if t_max == 0 {
        return Err(Error::InvalidConfig("empty horizon grid".into()));
    }
    let mut retrained = base.empty_like();
    let report = train_mle(&mut retrained, retain, cfg.retrain.epochs, cfg.retrain.step)?;
    let converged = match report.nll.as_slice() {
        [.., a, b] => (a - b).abs() < cfg.retrain.tolerance,
        _ => false,
    };
    let nll = SequenceNll::new(base, retain, true);
    let retrained_loss = nll.value(&retrained)?;
    let start_loss = nll.value(base)?;
    let mut observer = RetainLoss { nll: &nll, losses: Vec::new() };
    purge_train(base, automaton, queries, retain, &cfg.train, &mut observer)?;
    if observer.losses.len() < t_max {
        return Err(Error::InvalidConfig(format!(
            "the run made {} updates, fewer than the largest horizon {t_max}",
            observer.losses.len()
        )));
    }
    let gaps: Vec<f64> = observer.losses.iter().map(|l| l - retrained_loss).collect();
    let mut prefix = Vec::with_capacity(gaps.len());
    let mut acc = 0.0;
    for g in &gaps {
        acc += g;
        prefix.push(acc);
    }
    let grid: Vec<(usize, f64)> = cfg.t_grid.iter().map(|&t| (t, prefix[t - 1] / t as f64)).collect();
    let fit = fit_loglog(&grid.iter().map(|&(t, g)| (t as f64, g)).collect::<Vec<_>>());
    let (slope, intercept, residual, positive) = match fit {
        Ok((s, i, r)) => (s, i, r, true),
        Err(_) => (f64::NAN, f64::NAN, f64::NAN, false),
    };
    let inconclusive = !converged || !positive;
    Ok(RegretReport {
        slope,
        intercept,
        residual,
        grid,
        gaps,
        retain_loss_start: start_loss,
        retain_loss_retrained: retrained_loss,
        retrain_converged: converged,
        inconclusive,
        pass: !inconclusive && slope <= cfg.slope_threshold,
    })
}
