use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hoeffding_bound, BoundReport};
use crate::error::{Error, Result};
use crate::policy::{Example, Policy};
use crate::seed::stream_rng;

/// Per-example loss bounded in [0, 1]: `1 − exp(−mean token NLL)` of the
/// answer and its `<eos>`.
pub fn bounded_loss(policy: &Policy, example: &Example) -> f64 {
    let positions = policy.positions(&example.prompt, &example.answer, true);
    let nll: f64 = positions
        .iter()
        .map(|(ctx, tok)| -policy.token_logprob(ctx, *tok))
        .sum::<f64>()
        / positions.len() as f64;
    -(-nll).exp_m1()
}

/// `n` examples whose answers are sampled from `policy`, cycling through
/// `queries`; example `j` uses stream `j` of `seed`.
pub fn sample_population(
    policy: &Policy,
    queries: &[Vec<crate::corpus::TokenId>],
    n: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Example>> {
    if queries.is_empty() {
        return Err(Error::InvalidInput("no queries to sample a population from".into()));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|j| {
            let prompt = queries[j % queries.len()].clone();
            let answer = policy.sample_with(&prompt, 1.0, max_len, &mut stream_rng(seed, j as u64)).tokens;
            Example { prompt, answer }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub n_retain: usize,
    pub n_test: usize,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    /// Multiplier on the Hoeffding radius (1 for the proposition as stated).
    pub slack_scale: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self { n_retain: 1000, n_test: 1000, delta: 0.05, trials: 1000, seed: 0, slack_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub retain: BoundReport,
    pub test: BoundReport,
    pub radius_retain: f64,
    pub radius_test: f64,
    /// Population-level risk gap `R(θ′) − R(θ*)`.
    pub true_gap: f64,
}

/// Resamples disjoint retain/test splits from `population` `trials` times and
/// counts how often `|true gap| ≤ |empirical gap| + 2B` holds on each split.
///
/// The true gap is the population mean of `ℓ(θ′) − ℓ(θ*)`; splits are drawn
/// without replacement, for which Hoeffding's inequality still holds.
/// Coverage passes when it is at least `1 − δ − 3σ` with `σ` the binomial
/// standard deviation of a `1 − δ` coverage over `trials` trials.
pub fn verify_proxy_coverage(
    prime: &Policy,
    star: &Policy,
    population: &[Example],
    cfg: &CoverageConfig,
) -> Result<CoverageReport> {
    if population.len() < cfg.n_retain + cfg.n_test {
        return Err(Error::InvalidInput(format!(
            "population of {} cannot hold disjoint splits of {} and {}",
            population.len(),
            cfg.n_retain,
            cfg.n_test
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let b_r = hoeffding_bound(cfg.n_retain, cfg.delta)?;
    let b_t = hoeffding_bound(cfg.n_test, cfg.delta)?;
    let diffs: Vec<f64> = population
        .par_iter()
        .map(|ex| bounded_loss(prime, ex) - bounded_loss(star, ex))
        .collect();
    let true_gap = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let covered: Vec<(bool, bool)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(cfg.seed, trial as u64);
            let mut idx: Vec<usize> = (0..diffs.len()).collect();
            let need = cfg.n_retain + cfg.n_test;
            for i in 0..need {
                let j = rng.random_range(i..idx.len());
                idx.swap(i, j);
            }
            let gap = |ids: &[usize]| ids.iter().map(|&i| diffs[i]).sum::<f64>() / ids.len() as f64;
            let emp_r = gap(&idx[..cfg.n_retain]);
            let emp_t = gap(&idx[cfg.n_retain..need]);
            (
                true_gap.abs() <= emp_r.abs() + 2.0 * b_r * cfg.slack_scale,
                true_gap.abs() <= emp_t.abs() + 2.0 * b_t * cfg.slack_scale,
            )
        })
        .collect();
    let n = cfg.trials as f64;
    let sigma = (cfg.delta * (1.0 - cfg.delta) / n).sqrt();
    let target = 1.0 - cfg.delta;
    let report = |name: &str, hits: usize, radius: f64, size: usize| {
        let coverage = hits as f64 / n;
        BoundReport {
            name: name.to_string(),
            measured: coverage,
            bound: target,
            slack: 3.0 * sigma,
            margin: coverage - target,
            pass: coverage >= target - 3.0 * sigma,
            inputs: [
                ("delta", cfg.delta),
                ("N", size as f64),
                ("B", radius),
                ("trials", n),
                ("true_gap", true_gap),
            ]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
            checks: Vec::new(),
        }
    };
    Ok(CoverageReport {
        retain: report("hoeffding coverage (retain)", covered.iter().filter(|c| c.0).count(), b_r, cfg.n_retain),
        test: report("hoeffding coverage (test)", covered.iter().filter(|c| c.1).count(), b_t, cfg.n_test),
        radius_retain: b_r,
        radius_test: b_t,
        true_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    fn setup() -> (Policy, Policy, Vec<Example>) {
        let v = Vocabulary::build(&["a b c d e"]).unwrap();
        let star = Policy::new(&v, 1);
        let mut prime = star.clone();
        prime.fallback_mut()[2] = 1.5;
        let population: Vec<Example> = (0..300)
            .map(|i| Example { prompt: vec![(i % 5) as u32], answer: vec![(i % 3) as u32, (i % 4) as u32] })
            .collect();
        (prime, star, population)
    }

    #[test]
    fn bounded_loss_is_in_unit_interval() {
        let (prime, star, population) = setup();
        for ex in &population {
            for p in [&prime, &star] {
                let l = bounded_loss(p, ex);
                assert!((0.0..=1.0).contains(&l));
            }
        }
    }

    #[test]
    fn identical_policies_are_always_covered() {
        let (_, star, population) = setup();
        let cfg = CoverageConfig { n_retain: 100, n_test: 100, trials: 200, ..Default::default() };
        let r = verify_proxy_coverage(&star, &star, &population, &cfg).unwrap();
        assert_eq!(r.true_gap, 0.0);
        assert_eq!(r.retain.measured, 1.0);
        assert_eq!(r.test.measured, 1.0);
    }

    #[test]
    fn coverage_grows_with_slack() {
        let (prime, star, population) = setup();
        let base = CoverageConfig { n_retain: 100, n_test: 100, trials: 400, slack_scale: 0.0, ..Default::default() };
        let tight = verify_proxy_coverage(&prime, &star, &population, &base).unwrap();
        let loose = verify_proxy_coverage(&prime, &star, &population, &CoverageConfig { slack_scale: 0.05, ..base }).unwrap();
        assert!(tight.retain.measured < 1.0, "{}", tight.retain.measured);
        assert!(loose.retain.measured >= tight.retain.measured);
        let full = verify_proxy_coverage(&prime, &star, &population, &CoverageConfig { slack_scale: 1.0, ..base }).unwrap();
        assert!(full.retain.pass && full.test.pass);
    }

    #[test]
    fn population_must_hold_both_splits() {
        let (prime, star, population) = setup();
        let cfg = CoverageConfig { n_retain: 200, n_test: 200, ..Default::default() };
        assert!(verify_proxy_coverage(&prime, &star, &population, &cfg).is_err());
    }
}
