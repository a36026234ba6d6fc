use serde::{Deserialize, Serialize};

use super::{TokenId, Vocabulary};
use crate::error::Result;
use crate::policy::Policy;
use crate::seed::stream_rng;

/// A probe query and the answer the model gave to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub query: Vec<TokenId>,
    pub answer: Vec<TokenId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub temperature: f64,
    pub max_len: usize,
    pub seed: u64,
    /// Reject prompts containing unknown words instead of mapping them to `<unk>`.
    pub strict: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_len: 12,
            seed: 0,
            strict: true,
        }
    }
}

/// Runs the model on every prompt, one sampled answer each. The i-th answer
/// uses stream `i` of `cfg.seed`.
pub fn collect_probes<S: AsRef<str>>(
    policy: &Policy,
    vocab: &Vocabulary,
    prompts: &[S],
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeRecord>> {
    prompts
        .iter()
        .enumerate()
        .map(|(i, prompt)| {
            let query = if cfg.strict {
                vocab.encode_strict(prompt.as_ref())?
            } else {
                vocab.encode(prompt.as_ref())
            };
            let mut rng = stream_rng(cfg.seed, i as u64);
            let answer = policy
                .sample_with(&query, cfg.temperature, cfg.max_len, &mut rng)
                .tokens;
            Ok(ProbeRecord { query, answer })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn deterministic_under_seed() {
        let v = Vocabulary::build(&["a b c d"]).unwrap();
        let mut p = Policy::new(&v, 2);
        p.fallback_mut()[0] = 1.0;
        let prompts: Vec<String> = (0..10).map(|i| ["a", "b c", "d a"][i % 3].to_string()).collect();
        let cfg = ProbeConfig {
            seed: 7,
            ..Default::default()
        };
        let a = collect_probes(&p, &v, &prompts, &cfg).unwrap();
        let b = collect_probes(&p, &v, &prompts, &cfg).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
    }

    #[test]
    fn eos_policy_gives_empty_answers() {
        let v = Vocabulary::build(&["a b"]).unwrap();
        let mut p = Policy::new(&v, 2);
        p.fallback_mut()[v.eos() as usize] = 800.0;
        let probes = collect_probes(&p, &v, &["a", "b"], &ProbeConfig::default()).unwrap();
        assert!(probes.iter().all(|r| r.answer.is_empty()));
    }

    #[test]
    fn strict_mode_rejects_unknown_words() {
        let v = Vocabulary::build(&["a b"]).unwrap();
        let p = Policy::new(&v, 2);
        let err = collect_probes(&p, &v, &["a zebra"], &ProbeConfig::default());
        assert!(matches!(err, Err(Error::OutOfVocabulary(_))));
        let lenient = ProbeConfig {
            strict: false,
            ..Default::default()
        };
        let ok = collect_probes(&p, &v, &["a zebra"], &lenient).unwrap();
        assert_eq!(ok[0].query, vec![0, v.unk()]);
    }
}
