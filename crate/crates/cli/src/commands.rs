//! Subcommand implementations. Every artifact records the configuration
//! hash and root seed of the run that produced it.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use purge_core::baselines::{
    build_preference_pairs, dpo_unlearn, ga_unlearn, icu_wrap, npo_unlearn, rejection_examples, rt_unlearn,
    BaselineRun, CollapseMonitor, LeakageProbe,
};
use purge_core::corpus::{
    read_dataset, read_forget_corpus, write_dataset, write_forget_corpus, DatasetRecord, EvalSplits, TokenId,
    Vocabulary,
};
use purge_core::eval::{comparison_table, delta_u, evaluate, AttackSet, EvalReport, SampleSettings};
use purge_core::fixture::ToyWorld;
use purge_core::grpo::{purge_train, read_trace, write_trace, Observer, TrainTrace};
use purge_core::matcher::PhraseAutomaton;
use purge_core::pipeline::{self, target_queries, target_spec};
use purge_core::policy::{Checkpoint, CheckpointMeta, Example, Policy};
use purge_core::seed::derive_seed;
use purge_core::theory::{
    measure_policy_kl, regret_vs_retrain, sample_population, verify_pinsker, verify_proxy_coverage,
    verify_suppression, BoundReport, CoverageConfig, KlConfig, SuppressionInputs,
};
use purge_core::Error;

use crate::config::RunConfig;
use crate::{CliError, Method};

const BASE_CKPT: &str = "base.ckpt";
const FORGET_FILE: &str = "forget.json";

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(Error::from)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(Error::from)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

fn header(kind: &str, cfg: &RunConfig, hash: &str) -> serde_json::Value {
    json!({ "kind": "header", "format": kind, "config_hash": hash, "seed": cfg.seed })
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| match e {
        Error::Io(io) => CliError::Core(Error::InvalidInput(format!("cannot read checkpoint {}: {io}", path.display()))),
        other => CliError::Core(Error::Format(format!("{}: {other}", path.display()))),
    })
}

fn load_records(cfg: &RunConfig) -> Result<Vec<DatasetRecord>, CliError> {
    let path = &cfg.paths.dataset;
    read_dataset(path).map_err(|e| match e {
        Error::Io(io) => CliError::Core(Error::InvalidInput(format!("cannot read dataset {}: {io}", path.display()))),
        other => CliError::Core(other),
    })
}

fn save(cfg: &RunConfig, path: &Path, vocab: &Vocabulary, policy: &Policy, step: usize) -> Result<(), CliError> {
    let ckpt = Checkpoint {
        vocab: vocab.clone(),
        policy: policy.clone(),
        meta: CheckpointMeta { step: step as u64, seed: cfg.seed, config_hash: cfg.pipeline_hash() },
    };
    ckpt.save(path)?;
    Ok(())
}

fn checkpoint_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Everything downstream of the base model and forget corpus.
struct Context {
    records: Vec<DatasetRecord>,
    vocab: Vocabulary,
    base: Policy,
    splits: EvalSplits,
    automaton: PhraseAutomaton,
    queries: Vec<Vec<TokenId>>,
    retain: Vec<Example>,
}

impl Context {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let records = load_records(cfg)?;
        let ckpt = load_checkpoint(&cfg.out(BASE_CKPT))?;
        let vocab = ckpt.vocab;
        let forget_path = cfg.out(FORGET_FILE);
        let corpus = read_forget_corpus(&forget_path, &vocab).map_err(|e| match e {
            Error::Io(io) => {
                CliError::Core(Error::InvalidInput(format!("cannot read forget corpus {}: {io}", forget_path.display())))
            }
            other => CliError::Core(other),
        })?;
        let automaton = PhraseAutomaton::from_corpus(&corpus, &vocab, cfg.forget.match_mode)?;
        let queries = target_queries(&records, &vocab, &corpus.target);
        if queries.is_empty() {
            return Err(Error::InvalidInput(format!("dataset has no forget queries for {:?}", corpus.target)).into());
        }
        let splits = EvalSplits::from_records(&records, &vocab);
        let retain = pipeline::retain_examples(&records, &vocab);
        Ok(Self { records, vocab, base: ckpt.policy, splits, automaton, queries, retain })
    }

    fn checkpoint(&self, path: &Path) -> Result<Policy, CliError> {
        let ckpt = load_checkpoint(path)?;
        if ckpt.vocab != self.vocab {
            return Err(Error::InvalidInput(format!("{} uses a different vocabulary", path.display())).into());
        }
        Ok(ckpt.policy)
    }
}

pub fn make_fixture(cfg: &RunConfig) -> Result<(), CliError> {
    let records = ToyWorld::standard().records();
    if let Some(dir) = cfg.paths.dataset.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    write_dataset(&cfg.paths.dataset, &records, &cfg.pipeline_hash(), cfg.seed)?;
    println!("wrote {} records to {}", records.len(), cfg.paths.dataset.display());
    Ok(())
}

pub fn build_base(cfg: &RunConfig) -> Result<(), CliError> {
    let records = load_records(cfg)?;
    let texts = pipeline::dataset_texts(&records);
    let (vocab, policy, report) = pipeline::build_base(&records, &texts, &cfg.base)?;
    let path = cfg.out(BASE_CKPT);
    save(cfg, &path, &vocab, &policy, cfg.base.epochs)?;
    let nll = report.nll.last().copied().unwrap_or(f64::NAN);
    println!(
        "base model: V = {}, {} contexts, train NLL {nll:.4} (perplexity {:.3}) -> {}",
        vocab.len(),
        policy.rows().len(),
        nll.exp(),
        path.display()
    );
    Ok(())
}

pub fn build_forget(cfg: &RunConfig) -> Result<(), CliError> {
    let records = load_records(cfg)?;
    let ckpt = load_checkpoint(&cfg.out(BASE_CKPT))?;
    let spec = target_spec(&records, &cfg.target);
    let corpus = pipeline::build_forget(&ckpt.policy, &ckpt.vocab, &records, &spec, &cfg.forget, cfg.seed)?;
    let path = cfg.out(FORGET_FILE);
    write_forget_corpus(&path, &corpus, &ckpt.vocab, &cfg.pipeline_hash(), cfg.seed)?;
    println!("forget corpus for {:?}: {} phrases -> {}", corpus.target, corpus.len(), path.display());
    for s in corpus.surfaces(&ckpt.vocab) {
        println!("  {s}");
    }
    Ok(())
}

struct IterationSaver<'a> {
    cfg: &'a RunConfig,
    vocab: &'a Vocabulary,
    steps: usize,
}

impl Observer for IterationSaver<'_> {
    fn on_step(&mut self, _record: &purge_core::grpo::StepRecord, _policy: &Policy) -> purge_core::Result<()> {
        self.steps += 1;
        Ok(())
    }

    fn on_iteration(&mut self, t: usize, policy: &Policy) -> purge_core::Result<()> {
        save(self.cfg, &self.cfg.out(&format!("purge.t{t}.ckpt")), self.vocab, policy, self.steps)
            .map_err(|e| match e {
                CliError::Core(e) => e,
                other => Error::InvalidInput(other.to_string()),
            })
    }
}

fn stamp(cfg: &RunConfig, mut trace: TrainTrace) -> TrainTrace {
    trace.config_hash = cfg.pipeline_hash();
    trace.seed = cfg.seed;
    trace
}

pub fn unlearn(cfg: &RunConfig, method: Method) -> Result<(), CliError> {
    let ctx = Context::load(cfg)?;
    let name = method.name();
    let trace_path = cfg.out(&format!("{name}.trace.jsonl"));
    let (policy, trace, collapse) = match method {
        Method::Purge => {
            let mut saver = IterationSaver { cfg, vocab: &ctx.vocab, steps: 0 };
            match purge_train(&ctx.base, &ctx.automaton, &ctx.queries, &ctx.retain, &cfg.train, &mut saver) {
                Ok(run) => (run.policy, run.trace, None),
                Err(failure) => {
                    write_trace(&trace_path, &stamp(cfg, failure.trace))?;
                    return Err(failure.error.into());
                }
            }
        }
        _ => {
            let utility: Vec<Example> = ctx.splits.neighbor.iter().chain(&ctx.splits.retain).cloned().collect();
            let monitor = CollapseMonitor::new(&ctx.base, &ctx.splits.forget, &utility, cfg.baseline.collapse)?;
            let probe = Some(LeakageProbe { queries: &ctx.queries, automaton: &ctx.automaton });
            let b = &cfg.baseline;
            let run: BaselineRun = match method {
                Method::Ga => ga_unlearn(&ctx.base, &ctx.splits.forget, &monitor, b, probe)?,
                Method::Dpo => {
                    let pairs = build_preference_pairs(
                        &ctx.splits.forget,
                        &ctx.automaton,
                        &ctx.vocab,
                        derive_seed(b.seed, "pairs"),
                    )?;
                    dpo_unlearn(&ctx.base, &pairs, &monitor, b, probe)?
                }
                Method::Npo => npo_unlearn(&ctx.base, &ctx.splits.forget, &monitor, b, probe)?,
                Method::Rt => {
                    rt_unlearn(&ctx.base, &rejection_examples(&ctx.vocab, &ctx.splits.forget), &monitor, b, probe)?
                }
                Method::Purge => unreachable!("handled above"),
            };
            (run.policy, run.trace, Some((run.collapsed, run.status)))
        }
    };
    let trace = stamp(cfg, trace);
    write_trace(&trace_path, &trace)?;
    let ckpt_path = cfg.out(&format!("{name}.ckpt"));
    save(cfg, &ckpt_path, &ctx.vocab, &policy, trace.steps.len())?;
    let leakage: Vec<(usize, f64)> = trace.leakage.points.iter().map(|(t, e)| (*t, e.p)).collect();
    let rewards = trace.rewards();
    let summary = json!({
        "method": name,
        "config_hash": trace.config_hash,
        "seed": cfg.seed,
        "steps": trace.steps.len(),
        "leakage": leakage,
        "reward_first": rewards.first(),
        "reward_last": rewards.last(),
        "collapsed": collapse.map(|c| c.0),
        "forget_nll": collapse.map(|c| c.1.forget_nll),
        "utility_nll": collapse.map(|c| c.1.utility_nll),
    });
    write_json(&cfg.out(&format!("{name}.summary.json")), &summary)?;
    print!("{name}: {} updates", trace.steps.len());
    if let (Some(first), Some(last)) = (leakage.first(), leakage.last()) {
        print!(", leakage {:.4} -> {:.4}", first.1, last.1);
    }
    if let Some((collapsed, status)) = collapse {
        print!(", forget NLL {:.3}, collapsed {collapsed}", status.forget_nll);
    }
    println!(" -> {}", ckpt_path.display());
    Ok(())
}

fn icu_splits(vocab: &Vocabulary, splits: &EvalSplits, target: &str) -> Result<EvalSplits, CliError> {
    let wrap = |xs: &[Example]| -> Result<Vec<Example>, CliError> {
        xs.iter()
            .map(|e| Ok(Example { prompt: icu_wrap(vocab, &e.prompt, target)?, answer: e.answer.clone() }))
            .collect()
    };
    Ok(EvalSplits {
        forget: wrap(&splits.forget)?,
        neighbor: wrap(&splits.neighbor)?,
        retain: wrap(&splits.retain)?,
        test: wrap(&splits.test)?,
        members: wrap(&splits.members)?,
        nonmembers: wrap(&splits.nonmembers)?,
    })
}

pub fn evaluate_cmd(cfg: &RunConfig, checkpoints: &[PathBuf], icu: bool) -> Result<(), CliError> {
    let ctx = Context::load(cfg)?;
    let policies: Vec<(String, Policy)> = checkpoints
        .iter()
        .map(|p| Ok((checkpoint_name(p), ctx.checkpoint(p)?)))
        .collect::<Result<_, CliError>>()?;
    let attacks = AttackSet::standard(&ctx.vocab);
    let mut reports: Vec<EvalReport> = policies
        .iter()
        .map(|(name, policy)| evaluate(policy, &ctx.base, &ctx.splits, &attacks, &cfg.eval, name))
        .collect::<purge_core::Result<_>>()?;
    if icu {
        let wrapped = icu_splits(&ctx.vocab, &ctx.splits, &cfg.target)?;
        reports.push(evaluate(&ctx.base, &ctx.base, &wrapped, &attacks, &cfg.eval, "icu")?);
    }
    let hash = cfg.hash();
    let mut lines = vec![header("purge.eval.v1", cfg, &hash)];
    for r in &reports {
        let mut v = serde_json::to_value(r).map_err(Error::from)?;
        v["kind"] = json!("report");
        lines.push(v);
    }
    write_lines(&cfg.out("eval.jsonl"), &lines)?;
    let table = format!("# config {hash} seed {}\n{}", cfg.seed, comparison_table(&reports));
    std::fs::write(cfg.out("eval.txt"), &table).map_err(Error::from)?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct VerifyLine<'a> {
    kind: &'static str,
    checkpoint: Option<&'a str>,
    #[serde(flatten)]
    report: &'a BoundReport,
}

pub fn verify(cfg: &RunConfig, trace_path: &Path, checkpoints: &[PathBuf], regret: bool) -> Result<(), CliError> {
    let ctx = Context::load(cfg)?;
    let trace = read_trace(trace_path)?;
    let mut failures = Vec::new();
    let expected = cfg.pipeline_hash();
    if trace.config_hash != expected {
        failures.push(format!(
            "trace config hash {} does not match the configuration ({expected})",
            trace.config_hash
        ));
    }
    let mut results: Vec<(Option<String>, BoundReport)> = Vec::new();
    if trace.method == "purge" && trace.leakage.points.len() >= 2 {
        let inputs = SuppressionInputs {
            alpha: cfg.train.mix_alpha,
            step_size: cfg.train.step_size,
            clip_epsilon: cfg.train.clip_epsilon,
            p_base: None,
            floor: cfg.verify.suppression_floor,
        };
        let report = verify_suppression(&trace.leakage, &inputs)?;
        results.push((None, report));
    }
    let settings = SampleSettings {
        samples: cfg.verify.samples,
        max_len: cfg.eval.max_len,
        temperature: 1.0,
        seed: derive_seed(cfg.seed, "verify/delta_u"),
    };
    let kl_cfg = KlConfig {
        samples: cfg.verify.samples,
        max_len: cfg.eval.max_len,
        seed: derive_seed(cfg.seed, "verify/kl"),
    };
    let retain_queries: Vec<Vec<TokenId>> = ctx.splits.retain.iter().map(|e| e.prompt.clone()).collect();
    let mut last = None;
    for path in checkpoints {
        let policy = ctx.checkpoint(path)?;
        let du = delta_u(&policy, &ctx.base, &ctx.splits.retain, &settings)?;
        let kl = measure_policy_kl(&policy, &ctx.base, &retain_queries, &kl_cfg)?;
        let report = verify_pinsker(du.value, du.se, kl.kl, kl.se)?;
        results.push((Some(checkpoint_name(path)), report));
        last = Some((checkpoint_name(path), policy));
    }
    if let Some((name, prime)) = &last {
        let mixed: Vec<Vec<TokenId>> = ctx.queries.iter().chain(&retain_queries).cloned().collect();
        let population = sample_population(
            &ctx.base,
            &mixed,
            cfg.verify.population,
            cfg.eval.max_len,
            derive_seed(cfg.seed, "verify/population"),
        )?;
        for &delta in &cfg.verify.deltas {
            let cov_cfg = CoverageConfig { delta, ..cfg.verify.coverage };
            let report = verify_proxy_coverage(prime, &ctx.base, &population, &cov_cfg)?;
            results.push((Some(name.clone()), report.retain));
            results.push((Some(name.clone()), report.test));
        }
    }
    let hash = cfg.hash();
    let mut lines = vec![header("purge.verify.v1", cfg, &hash)];
    let mut text = format!("# config {hash} seed {}\n", cfg.seed);
    for (ckpt, report) in &results {
        lines.push(serde_json::to_value(VerifyLine { kind: "bound", checkpoint: ckpt.as_deref(), report }).map_err(Error::from)?);
        let line = match ckpt {
            Some(c) => format!("[{c}] {}", report.summary_line()),
            None => report.summary_line(),
        };
        text.push_str(&line);
        text.push('\n');
        if !report.pass {
            failures.push(line);
        }
    }
    if regret {
        let mut base_cfg = cfg.base.clone();
        base_cfg.epochs = cfg.verify.regret_base_epochs;
        let texts = pipeline::dataset_texts(&ctx.records);
        let (vocab, start, _) = pipeline::build_base(&ctx.records, &texts, &base_cfg)?;
        if vocab != ctx.vocab {
            return Err(Error::InvalidInput("regret base model has a different vocabulary".into()).into());
        }
        let report = regret_vs_retrain(&start, &ctx.retain, &ctx.automaton, &ctx.queries, &cfg.verify.regret)?;
        let mut v = serde_json::to_value(&report).map_err(Error::from)?;
        v["kind"] = json!("regret");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("gaps");
        }
        lines.push(v);
        let line = format!(
            "{} regret: log-log slope {:.4} (threshold {}), retrain converged {}",
            if report.pass { "PASS" } else { "FAIL" },
            report.slope,
            cfg.verify.regret.slope_threshold,
            report.retrain_converged
        );
        text.push_str(&line);
        text.push('\n');
        if !report.pass {
            failures.push(line);
        }
    }
    for f in &failures {
        if f.starts_with("trace config hash") {
            text.push_str(&format!("FAIL {f}\n"));
        }
    }
    write_lines(&cfg.out("verify.jsonl"), &lines)?;
    std::fs::write(cfg.out("verify.txt"), &text).map_err(Error::from)?;
    std::io::stdout().write_all(text.as_bytes()).map_err(Error::from)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} check(s) failed", failures.len())))
    }
}
