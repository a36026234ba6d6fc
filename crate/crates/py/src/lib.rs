//! Python module `purge_lab`: the standard toy world, PURGE and baseline
//! unlearning, evaluation, and the bound verifiers.
//!
//! Configurations go in and reports come out as plain dicts.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use purge_core::baselines::{self, BaselineConfig, CollapseMonitor, LeakageProbe};
use purge_core::corpus::Vocabulary as CoreVocabulary;
use purge_core::eval::{self, AttackSet, EvalConfig};
use purge_core::grpo::{self as grpo, NoopObserver, TrainConfig, TrainTrace};
use purge_core::matcher::{MatchMode, PhraseAutomaton as CoreAutomaton};
use purge_core::pipeline::{Lab as CoreLab, LabConfig};
use purge_core::policy::{Checkpoint, CheckpointMeta, Example, Policy as CorePolicy};
use purge_core::theory::{self, LeakageConfig, Mixture};
use purge_core::{Error, ErrorClass};

create_exception!(purge_lab, PurgeError, PyException);

fn err(e: Error) -> PyErr {
    match e.class() {
        ErrorClass::Config => PyValueError::new_err(e.to_string()),
        _ => PurgeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned + Default>(py: Python<'_>, value: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    match value {
        None => Ok(T::default()),
        Some(d) => {
            let text: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
        }
    }
}

/// Word-level vocabulary.
#[pyclass(frozen, skip_from_py_object, module = "purge_lab")]
#[derive(Clone)]
struct Vocabulary {
    inner: CoreVocabulary,
}

#[pymethods]
impl Vocabulary {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Token ids of `text`; unknown words map to `<unk>`.
    fn encode(&self, text: &str) -> Vec<u32> {
        self.inner.encode(text)
    }

    fn decode(&self, ids: Vec<u32>) -> String {
        self.inner.decode(&ids)
    }
}

/// An order-k logit-table language model.
#[pyclass(frozen, skip_from_py_object, module = "purge_lab")]
#[derive(Clone)]
struct Policy {
    inner: CorePolicy,
    vocab: CoreVocabulary,
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(path).map_err(err)?;
        Ok(Self { inner: ckpt.policy, vocab: ckpt.vocab })
    }

    #[pyo3(signature = (path, step = 0, seed = 0, config_hash = String::new()))]
    fn save(&self, path: &str, step: u64, seed: u64, config_hash: String) -> PyResult<()> {
        Checkpoint {
            vocab: self.vocab.clone(),
            policy: self.inner.clone(),
            meta: CheckpointMeta { step, seed, config_hash },
        }
        .save(path)
        .map_err(err)
    }

    #[getter]
    fn vocabulary(&self) -> Vocabulary {
        Vocabulary { inner: self.vocab.clone() }
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    /// Greedy answer to `prompt`.
    #[pyo3(signature = (prompt, max_len = 12))]
    fn greedy(&self, prompt: &str, max_len: usize) -> String {
        self.vocab.decode(&self.inner.greedy(&self.vocab.encode(prompt), max_len))
    }

    /// A sampled answer to `prompt`, reproducible from `seed`.
    #[pyo3(signature = (prompt, temperature = 1.0, max_len = 12, seed = 0))]
    fn sample(&self, prompt: &str, temperature: f64, max_len: usize, seed: u64) -> String {
        let mut rng = purge_core::seed::stream_rng(seed, 0);
        let c = self.inner.sample_with(&self.vocab.encode(prompt), temperature, max_len, &mut rng);
        self.vocab.decode(&c.tokens)
    }

    /// Log-probability of `answer` after `prompt`, `<eos>` included when `terminated`.
    #[pyo3(signature = (prompt, answer, terminated = true))]
    fn log_prob(&self, prompt: &str, answer: &str, terminated: bool) -> f64 {
        self.inner.sequence_logprob(&self.vocab.encode(prompt), &self.vocab.encode(answer), terminated)
    }
}

/// Forbidden-phrase matcher and binary reward.
#[pyclass(frozen, module = "purge_lab")]
struct PhraseAutomaton {
    inner: CoreAutomaton,
    vocab: CoreVocabulary,
}

#[pymethods]
impl PhraseAutomaton {
    /// Compiles `phrases` over `vocabulary`; `mode` is "contiguous" or "bag".
    #[new]
    #[pyo3(signature = (vocabulary, phrases, mode = "contiguous"))]
    fn new(vocabulary: &Vocabulary, phrases: Vec<String>, mode: &str) -> PyResult<Self> {
        let mode = match mode {
            "contiguous" => MatchMode::Contiguous,
            "bag" => MatchMode::Bag,
            other => return Err(PyValueError::new_err(format!("unknown match mode {other:?}"))),
        };
        let vocab = vocabulary.inner.clone();
        let ids: Vec<Vec<u32>> = phrases.iter().map(|p| vocab.encode(p)).collect();
        let inner = CoreAutomaton::compile(&ids, mode, vocab.unk()).map_err(err)?;
        Ok(Self { inner, vocab })
    }

    fn contains_forbidden(&self, text: &str) -> bool {
        self.inner.contains_forbidden(&self.vocab.encode(text))
    }

    /// 1.0 when `text` is free of forbidden phrases, else 0.0.
    fn reward(&self, text: &str) -> f64 {
        self.inner.reward(&self.vocab.encode(text))
    }

    /// `(start, end, phrase index)` of the leftmost-longest match, if any.
    fn find(&self, text: &str) -> Option<(usize, usize, usize)> {
        self.inner.find_forbidden(&self.vocab.encode(text)).map(|m| (m.start, m.end, m.phrase))
    }
}

/// The standard toy world with its base model, forget corpus and splits.
#[pyclass(frozen, module = "purge_lab")]
struct Lab {
    inner: CoreLab,
}

impl Lab {
    fn policy(&self, p: &CorePolicy) -> Policy {
        Policy { inner: p.clone(), vocab: self.inner.vocab.clone() }
    }

    fn trace_out(&self, py: Python<'_>, policy: CorePolicy, trace: &TrainTrace) -> PyResult<(Policy, Py<PyAny>)> {
        Ok((self.policy(&policy), to_py(py, trace)?))
    }
}

#[pymethods]
impl Lab {
    /// Builds the lab; `config` overrides fields of the base-model and forget-corpus settings.
    #[new]
    #[pyo3(signature = (seed = 0, config = None))]
    fn new(py: Python<'_>, seed: u64, config: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg: LabConfig = from_py(py, config)?;
        cfg.seed = seed;
        let inner = py
            .detach(|| CoreLab::build(purge_core::fixture::ToyWorld::standard(), cfg))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.world.target.name.clone()
    }

    #[getter]
    fn vocabulary(&self) -> Vocabulary {
        Vocabulary { inner: self.inner.vocab.clone() }
    }

    #[getter]
    fn base(&self) -> Policy {
        self.policy(&self.inner.base)
    }

    #[getter]
    fn forget_phrases(&self) -> Vec<String> {
        self.inner.corpus.surfaces(&self.inner.vocab)
    }

    #[getter]
    fn queries(&self) -> Vec<String> {
        self.inner.queries.iter().map(|q| self.inner.vocab.decode(q)).collect()
    }

    #[getter]
    fn automaton(&self) -> PhraseAutomaton {
        PhraseAutomaton { inner: self.inner.automaton.clone(), vocab: self.inner.vocab.clone() }
    }

    /// Fraction of sampled answers to the target queries that leak, for
    /// `(1 − alpha) policy + alpha base` (`policy` defaults to the base model).
    #[pyo3(signature = (policy = None, alpha = 0.0, samples = 2000, seed = 0))]
    fn leakage(&self, py: Python<'_>, policy: Option<&Policy>, alpha: f64, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let current = policy.map_or(&self.inner.base, |p| &p.inner);
        let mixture = Mixture { current, base: &self.inner.base, alpha };
        let cfg = LeakageConfig { samples, seed, ..Default::default() };
        let est = py
            .detach(|| theory::estimate_leakage(&mixture, &self.inner.queries, &self.inner.automaton, &cfg))
            .map_err(err)?;
        to_py(py, &est)
    }

    /// Runs PURGE from the base model; returns `(policy, trace)`.
    #[pyo3(signature = (config = None))]
    fn purge(&self, py: Python<'_>, config: Option<&Bound<'_, PyDict>>) -> PyResult<(Policy, Py<PyAny>)> {
        let cfg: TrainConfig = from_py(py, config)?;
        let lab = &self.inner;
        let run = py
            .detach(|| grpo::purge_train(&lab.base, &lab.automaton, &lab.queries, &lab.retain, &cfg, &mut NoopObserver))
            .map_err(|f| err(f.error))?;
        self.trace_out(py, run.policy, &run.trace)
    }

    /// Runs a baseline ("ga", "dpo", "npo" or "rt"); returns `(policy, trace, collapsed)`.
    #[pyo3(signature = (method, config = None))]
    fn baseline(&self, py: Python<'_>, method: &str, config: Option<&Bound<'_, PyDict>>) -> PyResult<(Policy, Py<PyAny>, bool)> {
        let cfg: BaselineConfig = from_py(py, config)?;
        let lab = &self.inner;
        let run = py
            .detach(|| {
                let utility: Vec<Example> = lab.splits.neighbor.iter().chain(&lab.splits.retain).cloned().collect();
                let monitor = CollapseMonitor::new(&lab.base, &lab.splits.forget, &utility, cfg.collapse)?;
                let probe = Some(LeakageProbe { queries: &lab.queries, automaton: &lab.automaton });
                match method {
                    "ga" => baselines::ga_unlearn(&lab.base, &lab.splits.forget, &monitor, &cfg, probe),
                    "dpo" => {
                        let pairs = baselines::build_preference_pairs(&lab.splits.forget, &lab.automaton, &lab.vocab, cfg.seed)?;
                        baselines::dpo_unlearn(&lab.base, &pairs, &monitor, &cfg, probe)
                    }
                    "npo" => baselines::npo_unlearn(&lab.base, &lab.splits.forget, &monitor, &cfg, probe),
                    "rt" => {
                        let rejections = baselines::rejection_examples(&lab.vocab, &lab.splits.forget);
                        baselines::rt_unlearn(&lab.base, &rejections, &monitor, &cfg, probe)
                    }
                    other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
                }
            })
            .map_err(err)?;
        let (policy, trace) = self.trace_out(py, run.policy, &run.trace)?;
        Ok((policy, trace, run.collapsed))
    }

    /// Scores `policy` against the base model on every split.
    #[pyo3(signature = (policy, name = "checkpoint", config = None))]
    fn evaluate(&self, py: Python<'_>, policy: &Policy, name: &str, config: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
        let cfg: EvalConfig = from_py(py, config)?;
        let lab = &self.inner;
        let attacks = AttackSet::standard(&lab.vocab);
        let report = py
            .detach(|| eval::evaluate(&policy.inner, &lab.base, &lab.splits, &attacks, &cfg, name))
            .map_err(err)?;
        to_py(py, &report)
    }

    /// Checks a PURGE trace's leakage series against the suppression bound.
    #[pyo3(signature = (trace, alpha, step_size, clip_epsilon, floor = None))]
    fn verify_suppression(
        &self,
        py: Python<'_>,
        trace: &Bound<'_, PyDict>,
        alpha: f64,
        step_size: f64,
        clip_epsilon: f64,
        floor: Option<f64>,
    ) -> PyResult<Py<PyAny>> {
        let trace: TrainTrace = from_py(py, Some(trace))?;
        let inputs = theory::SuppressionInputs { alpha, step_size, clip_epsilon, p_base: None, floor };
        to_py(py, &theory::verify_suppression(&trace.leakage, &inputs).map_err(err)?)
    }

    /// Checks `Δu ≤ sqrt(KL / 2)` for `policy` against the base model on retain queries.
    #[pyo3(signature = (policy, samples = 2000, seed = 0))]
    fn verify_pinsker(&self, py: Python<'_>, policy: &Policy, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let lab = &self.inner;
        let report = py
            .detach(|| {
                let settings = eval::SampleSettings { samples, seed, ..Default::default() };
                let du = eval::delta_u(&policy.inner, &lab.base, &lab.splits.retain, &settings)?;
                let queries: Vec<Vec<u32>> = lab.splits.retain.iter().map(|e| e.prompt.clone()).collect();
                let kl_cfg = theory::KlConfig { samples, seed, ..Default::default() };
                let kl = theory::measure_policy_kl(&policy.inner, &lab.base, &queries, &kl_cfg)?;
                theory::verify_pinsker(du.value, du.se, kl.kl, kl.se)
            })
            .map_err(err)?;
        to_py(py, &report)
    }
}

/// Unrolled suppression bound after `t` outer iterations.
#[pyfunction]
fn suppression_bound(t: usize, alpha: f64, eta: f64, eps: f64, p0: f64, p_base: f64) -> f64 {
    theory::suppression_bound(t, alpha, eta, eps, p0, p_base)
}

/// `sqrt(KL / 2)`.
#[pyfunction]
fn pinsker_bound(kl: f64) -> f64 {
    theory::pinsker_bound(kl)
}

/// `sqrt(ln(4/δ) / (2n))`.
#[pyfunction]
fn hoeffding_bound(n: usize, delta: f64) -> PyResult<f64> {
    theory::hoeffding_bound(n, delta).map_err(err)
}

/// Group-normalized advantages of `rewards`.
#[pyfunction]
#[pyo3(signature = (rewards, adv_epsilon = 1e-8))]
fn compute_advantages(rewards: Vec<f64>, adv_epsilon: f64) -> Vec<f64> {
    grpo::compute_advantages(&rewards, adv_epsilon)
}

/// ROUGE-L recall of `candidate` against `reference`, both token-id lists.
#[pyfunction]
fn rouge_l_recall(reference: Vec<u32>, candidate: Vec<u32>) -> PyResult<f64> {
    eval::rouge_l_recall(&reference, &candidate).map_err(err)
}

#[pymodule]
fn purge_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PurgeError", m.py().get_type::<PurgeError>())?;
    m.add_class::<Vocabulary>()?;
    m.add_class::<Policy>()?;
    m.add_class::<PhraseAutomaton>()?;
    m.add_class::<Lab>()?;
    m.add_function(wrap_pyfunction!(suppression_bound, m)?)?;
    m.add_function(wrap_pyfunction!(pinsker_bound, m)?)?;
    m.add_function(wrap_pyfunction!(hoeffding_bound, m)?)?;
    m.add_function(wrap_pyfunction!(compute_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l_recall, m)?)?;
    Ok(())
}
