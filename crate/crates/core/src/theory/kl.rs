use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::grpo::kl_estimate;
use crate::policy::{log_softmax, Policy};
use crate::seed::stream_rng;

/// `Σ p log(p / q)` over the support of `p`.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlConfig {
    pub samples: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self { samples: 2000, max_len: 12, seed: 0 }
    }
}

/// Sequence-level `KL(π′ ‖ π*)` averaged over queries, two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    /// Exact per-step categorical KL summed along sampled answers.
    pub kl: f64,
    pub se: f64,
    /// Sum of single-sample k3 estimates along the same answers.
    pub k3: f64,
    pub k3_se: f64,
    pub n: usize,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Estimates `E_q KL(π′(·|q) ‖ π*(·|q))` over whole answers (the `<eos>`
/// decision included) by sampling answers from `prime`.
///
/// Each sampled answer contributes the exact per-step KL between the two
/// next-token distributions at every visited context, which has much lower
/// variance than the single-sample k3 sum reported alongside it.
pub fn measure_policy_kl(
    prime: &Policy,
    star: &Policy,
    queries: &[Vec<TokenId>],
    cfg: &KlConfig,
) -> Result<KlEstimate> {
    if cfg.samples < 100 {
        return Err(Error::InvalidInput(format!("KL needs at least 100 samples, got {}", cfg.samples)));
    }
    if queries.is_empty() {
        return Err(Error::InvalidInput("no queries".into()));
    }
    let per_sample: Vec<(f64, f64)> = (0..cfg.samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, j as u64);
            let q = &queries[j % queries.len()];
            let mut tokens = Vec::new();
            let (mut exact, mut k3) = (0.0, 0.0);
            while tokens.len() < cfg.max_len {
                let ctx = prime.context(q, &tokens);
                let lp = log_softmax(prime.logits(&ctx));
                let lq = log_softmax(star.logits(&ctx));
                let p: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
                exact += p.iter().zip(lp.iter().zip(&lq)).map(|(pi, (a, b))| pi * (a - b)).sum::<f64>();
                let tok = crate::policy::draw(&p, &mut rng);
                k3 += kl_estimate(lq[tok as usize], lp[tok as usize]);
                if tok == prime.eos() {
                    break;
                }
                tokens.push(tok);
            }
            (exact, k3)
        })
        .collect();
    let exact: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
    let k3: Vec<f64> = per_sample.iter().map(|s| s.1).collect();
    let (kl, se) = mean_se(&exact);
    let (k3m, k3_se) = mean_se(&k3);
    Ok(KlEstimate { kl, se, k3: k3m, k3_se, n: cfg.samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    #[test]
    fn three_symbol_closed_form() {
        let p = [0.5, 0.3, 0.2];
        let q = [0.2, 0.5, 0.3];
        let hand = 0.5 * (0.5f64 / 0.2).ln() + 0.3 * (0.3f64 / 0.5).ln() + 0.2 * (0.2f64 / 0.3).ln();
        assert!((categorical_kl(&p, &q) - hand).abs() < 1e-15);
        assert_eq!(categorical_kl(&p, &p), 0.0);
    }

    #[test]
    fn identical_policies_have_zero_kl() {
        let v = Vocabulary::build(&["a b c"]).unwrap();
        let mut p = Policy::new(&v, 2);
        p.fallback_mut()[1] = 2.0;
        let e = measure_policy_kl(&p, &p, &[vec![0]], &KlConfig { samples: 200, ..Default::default() }).unwrap();
        assert_eq!(e.kl, 0.0);
        assert_eq!(e.k3, 0.0);
    }

    #[test]
    fn exact_and_k3_agree() {
        let v = Vocabulary::build(&["a b c"]).unwrap();
        let mut p = Policy::new(&v, 1);
        p.fallback_mut()[0] = 1.0;
        p.fallback_mut()[v.eos() as usize] = 0.5;
        let mut q = Policy::new(&v, 1);
        q.fallback_mut()[2] = 0.7;
        let cfg = KlConfig { samples: 40_000, max_len: 3, seed: 5 };
        let e = measure_policy_kl(&p, &q, &[vec![0]], &cfg).unwrap();
        assert!(e.kl > 0.0);
        let se = (e.se.powi(2) + e.k3_se.powi(2)).sqrt();
        assert!((e.kl - e.k3).abs() < 3.0 * se, "{e:?}");
    }

    /// With a single shared row the answer length is geometric, so the
    /// sequence KL has a closed form: `E[#decisions] · KL(p ‖ q)`.
    #[test]
    fn matches_enumeration() {
        let v = Vocabulary::build(&["a b"]).unwrap();
        let mut p = Policy::new(&v, 1);
        p.fallback_mut()[v.eos() as usize] = 1.0;
        let mut q = Policy::new(&v, 1);
        q.fallback_mut()[0] = 0.5;
        let pd = p.next_token_distribution(&p.context(&[], &[]));
        let qd = q.next_token_distribution(&q.context(&[], &[]));
        let step = categorical_kl(&pd, &qd);
        let stop = pd[v.eos() as usize];
        let max_len = 4;
        // decisions made: min(stopping index, max_len) + (1 if stopped within max_len)
        let mut expected_decisions = 0.0;
        for k in 0..max_len {
            expected_decisions += (1.0 - stop).powi(k as i32);
        }
        let exact = expected_decisions * step;
        let e = measure_policy_kl(&p, &q, &[vec![]], &KlConfig { samples: 50_000, max_len, seed: 1 }).unwrap();
        assert!((e.kl - exact).abs() < 3.0 * e.se + 1e-12, "{} vs {exact}", e.kl);
    }
}
