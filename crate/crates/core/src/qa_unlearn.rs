//! Tabular question answering and partial-collapse unlearning.
//!
//! Each question owns a small answer vocabulary whose first entry is the
//! ground truth. A [`TabularQaModel`] holds one categorical per question.
//! [`pmc_unlearn_step`] refits forget conditionals on curated self-samples
//! rewarded by `1 - ROUGE-L` against the ground truth, and pulls retain
//! conditionals toward their ground truth with weight `λ·η`.
//!
//! Dataset files are TOML:
//!
//! ```toml
//! [[question]]
//! id = "f1"
//! set = "forget"            # retain | forget | heldout
//! answer = "the ground truth"
//! distractors = ["one", "two", "three"]
//!
//! [[paraphrase]]
//! id = "p1"
//! aliases = "f1"            # a forget question id
//! reference = "a rewording of the ground truth"
//! ```

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curation::{apply_hn_update, curated_refit_step, reward_moments, CuratedUpdate, Selector};
use crate::distributions::Categorical;
use crate::error::{invalid, Result};
use crate::rng::stream_rng;
use crate::table::{fmt_real, Table};
use crate::textreward::{rouge_l_recall, unlearn_reward, TokenSequence};

/// Distractors required per question by [`init_memorized_model`].
pub const MIN_DISTRACTORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaSet {
    Retain,
    Forget,
    Heldout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestion {
    id: String,
    set: QaSet,
    answer: String,
    #[serde(default)]
    distractors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParaphrase {
    id: String,
    aliases: String,
    reference: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    #[serde(default)]
    question: Vec<RawQuestion>,
    #[serde(default)]
    paraphrase: Vec<RawParaphrase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaQuestion {
    pub id: String,
    pub set: QaSet,
    /// Ground truth first, then distractors.
    pub vocab: Vec<TokenSequence>,
    texts: Vec<String>,
}

impl QaQuestion {
    pub fn ground_truth(&self) -> &TokenSequence {
        &self.vocab[0]
    }

    /// `1 - ROUGE-L(answer, ground truth)` for every vocabulary entry.
    pub fn unlearn_rewards(&self) -> Result<Vec<f64>> {
        self.vocab.iter().map(|a| unlearn_reward(a, self.ground_truth())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paraphrase {
    pub id: String,
    /// Index of the aliased forget question.
    pub question: usize,
    pub reference: TokenSequence,
    text: String,
}

/// Questions of every set plus paraphrased forget references.
#[derive(Debug, Clone, PartialEq)]
pub struct QaDataset {
    questions: Vec<QaQuestion>,
    paraphrases: Vec<Paraphrase>,
}

impl QaDataset {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawDataset = toml::from_str(text).map_err(|e| invalid(format!("dataset: {e}")))?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read dataset {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawDataset {
            question: self
                .questions
                .iter()
                .map(|q| RawQuestion {
                    id: q.id.clone(),
                    set: q.set,
                    answer: q.texts[0].clone(),
                    distractors: q.texts[1..].to_vec(),
                })
                .collect(),
            paraphrase: self
                .paraphrases
                .iter()
                .map(|p| RawParaphrase {
                    id: p.id.clone(),
                    aliases: self.questions[p.question].id.clone(),
                    reference: p.text.clone(),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("dataset serializes")
    }

    fn from_raw(raw: RawDataset) -> Result<Self> {
        let mut problems = Vec::new();
        let mut seen = HashSet::new();
        for id in raw.question.iter().map(|q| &q.id).chain(raw.paraphrase.iter().map(|p| &p.id)) {
            if !seen.insert(id.as_str()) {
                problems.push(format!("duplicate id {id:?}"));
            }
        }
        let mut questions = Vec::with_capacity(raw.question.len());
        for q in raw.question {
            let texts: Vec<String> = std::iter::once(q.answer).chain(q.distractors).collect();
            let vocab: Vec<TokenSequence> = texts.iter().map(|t| TokenSequence::tokenize(t)).collect();
            if vocab[0].is_empty() {
                problems.push(format!("question {:?} has an empty ground truth", q.id));
            }
            questions.push(QaQuestion { id: q.id, set: q.set, vocab, texts });
        }
        let index: HashMap<&str, usize> = questions.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
        let mut paraphrases = Vec::with_capacity(raw.paraphrase.len());
        for p in raw.paraphrase {
            let reference = TokenSequence::tokenize(&p.reference);
            if reference.is_empty() {
                problems.push(format!("paraphrase {:?} has an empty reference", p.id));
            }
            match index.get(p.aliases.as_str()) {
                Some(&i) if questions[i].set == QaSet::Forget => {
                    paraphrases.push(Paraphrase { id: p.id, question: i, reference, text: p.reference })
                }
                Some(_) => problems.push(format!("paraphrase {:?} aliases non-forget question {:?}", p.id, p.aliases)),
                None => problems.push(format!("paraphrase {:?} aliases unknown question {:?}", p.id, p.aliases)),
            }
        }
        if !problems.is_empty() {
            return Err(invalid(problems.join("; ")));
        }
        Ok(Self { questions, paraphrases })
    }

    pub fn questions(&self) -> &[QaQuestion] {
        &self.questions
    }

    pub fn paraphrases(&self) -> &[Paraphrase] {
        &self.paraphrases
    }

    pub fn in_set(&self, set: QaSet) -> impl Iterator<Item = (usize, &QaQuestion)> {
        self.questions.iter().enumerate().filter(move |(_, q)| q.set == set)
    }

    pub fn count(&self, set: QaSet) -> usize {
        self.in_set(set).count()
    }
}

/// Shape of a generated toy dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticQaSpec {
    pub forget: usize,
    pub retain: usize,
    pub heldout: usize,
    pub distractors: usize,
    pub answer_len: usize,
}

impl Default for SyntheticQaSpec {
    fn default() -> Self {
        Self { forget: 20, retain: 40, heldout: 10, distractors: 7, answer_len: 6 }
    }
}

/// Dataset of token-disjoint questions.
///
/// Distractor `d` keeps `min(d, answer_len - 1)` tokens of the ground truth
/// in order and replaces the rest, so rewards are spread across the
/// vocabulary and exactly one distractor shares nothing. Every forget
/// question gets one paraphrase that swaps two tokens of the ground truth
/// for fresh ones and adds a fresh lead token.
pub fn synthetic_dataset<R: Rng + ?Sized>(spec: &SyntheticQaSpec, rng: &mut R) -> Result<QaDataset> {
    if spec.answer_len < 3 {
        return Err(invalid("synthetic answers need at least 3 tokens"));
    }
    if spec.forget == 0 {
        return Err(invalid("synthetic dataset needs at least one forget question"));
    }
    let mut next = 0usize;
    let mut fresh = || {
        next += 1;
        format!("w{next}")
    };
    let mut raw = RawDataset::default();
    let sets = [(QaSet::Forget, spec.forget, "f"), (QaSet::Retain, spec.retain, "r"), (QaSet::Heldout, spec.heldout, "h")];
    for (set, count, prefix) in sets {
        for i in 0..count {
            let truth: Vec<String> = (0..spec.answer_len).map(|_| fresh()).collect();
            let mut distractors: Vec<String> = (0..spec.distractors)
                .map(|d| {
                    let keep = d.min(spec.answer_len - 1);
                    let mut kept: Vec<usize> = (0..spec.answer_len).collect();
                    kept.shuffle(rng);
                    kept.truncate(keep);
                    (0..spec.answer_len)
                        .map(|t| if kept.contains(&t) { truth[t].clone() } else { fresh() })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            distractors.shuffle(rng);
            let id = format!("{prefix}{i}");
            if set == QaSet::Forget {
                let mut para = truth.clone();
                let mut slots: Vec<usize> = (0..spec.answer_len).collect();
                slots.shuffle(rng);
                for &s in &slots[..2] {
                    para[s] = fresh();
                }
                para.insert(0, fresh());
                raw.paraphrase.push(RawParaphrase {
                    id: format!("p{i}"),
                    aliases: id.clone(),
                    reference: para.join(" "),
                });
            }
            raw.question.push(RawQuestion { id, set, answer: truth.join(" "), distractors });
        }
    }
    QaDataset::from_raw(raw)
}

/// Per-question answer distributions over each question's vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQaModel {
    vocab: Vec<Vec<TokenSequence>>,
    conditionals: Vec<Categorical>,
    index: HashMap<String, usize>,
}

impl TabularQaModel {
    /// Model over `dataset` with explicit conditionals, in question order.
    pub fn new(dataset: &QaDataset, conditionals: Vec<Categorical>) -> Result<Self> {
        if conditionals.len() != dataset.questions.len() {
            return Err(invalid(format!(
                "{} conditionals for {} questions",
                conditionals.len(),
                dataset.questions.len()
            )));
        }
        for (q, c) in dataset.questions.iter().zip(&conditionals) {
            if c.k() != q.vocab.len() {
                return Err(invalid(format!("conditional for {:?} has {} entries, vocabulary has {}", q.id, c.k(), q.vocab.len())));
            }
        }
        let mut index: HashMap<String, usize> =
            dataset.questions.iter().enumerate().map(|(i, q)| (q.id.clone(), i)).collect();
        index.extend(dataset.paraphrases.iter().map(|p| (p.id.clone(), p.question)));
        Ok(Self { vocab: dataset.questions.iter().map(|q| q.vocab.clone()).collect(), conditionals, index })
    }

    pub fn conditionals(&self) -> &[Categorical] {
        &self.conditionals
    }

    /// Conditional for a question id; paraphrase ids resolve to their forget question.
    pub fn conditional(&self, id: &str) -> Result<&Categorical> {
        Ok(&self.conditionals[self.resolve(id)?])
    }

    fn resolve(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| invalid(format!("unknown question id {id:?}")))
    }
}

/// Mass `1 - noise` on each ground truth, `noise` spread evenly over distractors.
pub fn init_memorized_model(dataset: &QaDataset, noise: f64) -> Result<TabularQaModel> {
    if !(0.0..1.0).contains(&noise) {
        return Err(invalid(format!("noise must lie in [0, 1), got {noise}")));
    }
    let conditionals = dataset
        .questions
        .iter()
        .map(|q| {
            let d = q.vocab.len() - 1;
            if d < MIN_DISTRACTORS {
                return Err(invalid(format!(
                    "question {:?} has {d} distractors, at least {MIN_DISTRACTORS} are required",
                    q.id
                )));
            }
            let mut p = vec![noise / d as f64; d + 1];
            p[0] = 1.0 - noise;
            Categorical::new(p)
        })
        .collect::<Result<Vec<_>>>()?;
    TabularQaModel::new(dataset, conditionals)
}

/// How forget conditionals are refit each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgetUpdate {
    /// `m_curated` sampled best-of-n selections.
    #[default]
    Sampled,
    /// Exact `p·Hⁿ`; requires the BT selector.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmcConfig {
    pub lambda: f64,
    pub n_samples: usize,
    pub m_curated: u64,
    pub selector: Selector,
    pub iterations: usize,
    pub eta: f64,
    pub forget_update: ForgetUpdate,
}

impl Default for PmcConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            n_samples: 10,
            m_curated: 10_000,
            selector: Selector::Argmax,
            iterations: 30,
            eta: 1.0,
            forget_update: ForgetUpdate::Sampled,
        }
    }
}

impl PmcConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            problems.push(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.n_samples == 0 {
            problems.push("n_samples must be at least 1".to_string());
        }
        if self.m_curated == 0 {
            problems.push("m_curated must be at least 1".to_string());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            problems.push(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        match self.selector {
            Selector::Bt { tau } if !(tau > 0.0 && tau.is_finite()) => {
                problems.push(format!("tau must be positive and finite, got {tau}"))
            }
            Selector::Argmax if self.forget_update == ForgetUpdate::Analytic => {
                problems.push("the analytic forget update needs the bt selector".to_string())
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(invalid(problems.join("; ")))
        }
    }
}

fn mix(current: &Categorical, target: &[f64], w: f64) -> Result<Categorical> {
    let p: Vec<f64> = current.probs().iter().zip(target).map(|(c, t)| (1.0 - w) * c + w * t).collect();
    Categorical::from_weights(&p)
}

/// One unlearning iteration. Every candidate is drawn from the incoming
/// model; updates land together at the end.
pub fn pmc_unlearn_step<R: Rng + ?Sized>(
    model: &TabularQaModel,
    dataset: &QaDataset,
    config: &PmcConfig,
    rng: &mut R,
) -> Result<TabularQaModel> {
    config.validate()?;
    if model.conditionals.len() != dataset.questions.len() {
        return Err(invalid("model and dataset disagree on the question list"));
    }
    let seed: u64 = rng.random();
    let snapshot = &model.conditionals;
    let forget: Vec<usize> = dataset.in_set(QaSet::Forget).map(|(i, _)| i).collect();
    let refits = forget
        .par_iter()
        .map(|&i| {
            let q = &dataset.questions[i];
            let rewards = q.unlearn_rewards()?;
            let e_q = match (config.forget_update, config.selector) {
                (ForgetUpdate::Analytic, Selector::Bt { tau }) => {
                    apply_hn_update(&CuratedUpdate::new(snapshot[i].clone(), rewards, config.n_samples, tau)?)?
                }
                _ => {
                    let mut qrng = stream_rng(seed, i as u64);
                    curated_refit_step(&snapshot[i], &rewards, config.n_samples, config.m_curated, config.selector, &mut qrng)?
                }
            };
            let next = if config.eta == 1.0 { e_q } else { mix(&snapshot[i], e_q.probs(), config.eta)? };
            Ok((i, next))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut next = model.clone();
    for (i, c) in refits {
        next.conditionals[i] = c;
    }
    let w = (config.lambda * config.eta).min(1.0);
    if w > 0.0 {
        for (i, q) in dataset.in_set(QaSet::Retain) {
            let mut target = vec![0.0; q.vocab.len()];
            target[0] = 1.0;
            next.conditionals[i] = mix(&snapshot[i], &target, w)?;
        }
    }
    Ok(next)
}

/// Argmax answer, lowest index on ties.
pub fn greedy_answer<'m>(model: &'m TabularQaModel, id: &str) -> Result<&'m TokenSequence> {
    let i = model.resolve(id)?;
    Ok(&model.vocab[i][model.conditionals[i].argmax()])
}

/// Per-set mean ROUGE-L recall of greedy answers and the two summaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QaMetrics {
    pub forget: f64,
    pub paraphrased: f64,
    pub retain: f64,
    pub heldout: f64,
    /// `2 - (forget + paraphrased)`.
    pub unlearn_quality: f64,
    /// `retain + heldout`.
    pub utility: f64,
}

pub fn evaluate_metrics(model: &TabularQaModel, dataset: &QaDataset) -> Result<QaMetrics> {
    let set_score = |set: QaSet| -> Result<f64> {
        let scores = dataset
            .in_set(set)
            .map(|(i, q)| rouge_l_recall(&model.vocab[i][model.conditionals[i].argmax()], q.ground_truth()))
            .collect::<Result<Vec<_>>>()?;
        if scores.is_empty() {
            return Err(invalid(format!("evaluation set {set:?} is empty")));
        }
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    };
    let (forget, retain, heldout) = (set_score(QaSet::Forget)?, set_score(QaSet::Retain)?, set_score(QaSet::Heldout)?);
    if dataset.paraphrases.is_empty() {
        return Err(invalid("evaluation set Paraphrased is empty"));
    }
    let para: f64 = dataset
        .paraphrases
        .iter()
        .map(|p| {
            let i = p.question;
            rouge_l_recall(&model.vocab[i][model.conditionals[i].argmax()], &p.reference)
        })
        .sum::<Result<f64>>()?;
    let paraphrased = para / dataset.paraphrases.len() as f64;
    Ok(QaMetrics {
        forget,
        paraphrased,
        retain,
        heldout,
        unlearn_quality: 2.0 - (forget + paraphrased),
        utility: retain + heldout,
    })
}

/// Metrics and forget-side diagnostics after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct QaTraceRow {
    pub iteration: usize,
    pub metrics: QaMetrics,
    /// Mean ground-truth probability over forget questions.
    pub forget_truth_mass: f64,
    /// Mean over forget questions of `E[e^r]` and `Var[e^r]`.
    pub forget_reward_mean: f64,
    pub forget_reward_var: f64,
}

fn trace_row(iteration: usize, model: &TabularQaModel, dataset: &QaDataset) -> Result<QaTraceRow> {
    let metrics = evaluate_metrics(model, dataset)?;
    let (mut mass, mut mean, mut var) = (0.0, 0.0, 0.0);
    let forget: Vec<_> = dataset.in_set(QaSet::Forget).collect();
    for &(i, q) in &forget {
        let c = &model.conditionals[i];
        mass += c.probs()[0];
        let (m, v) = reward_moments(c, &q.unlearn_rewards()?)?;
        mean += m;
        var += v;
    }
    let f = forget.len() as f64;
    Ok(QaTraceRow {
        iteration,
        metrics,
        forget_truth_mass: mass / f,
        forget_reward_mean: mean / f,
        forget_reward_var: var / f,
    })
}

/// Unlearning loop; row 0 is the model before any update.
pub fn run_pmc<R: Rng + ?Sized>(
    initial: &TabularQaModel,
    dataset: &QaDataset,
    config: &PmcConfig,
    rng: &mut R,
) -> Result<(TabularQaModel, Vec<QaTraceRow>)> {
    config.validate()?;
    let mut model = initial.clone();
    let mut rows = vec![trace_row(0, &model, dataset)?];
    for t in 1..=config.iterations {
        model = pmc_unlearn_step(&model, dataset, config, rng)?;
        rows.push(trace_row(t, &model, dataset)?);
    }
    Ok((model, rows))
}

/// Trace rows as a CSV table.
pub fn qa_trace_table(rows: &[QaTraceRow], seed: u64) -> Table {
    let mut t = Table::new([
        "seed",
        "iteration",
        "forget",
        "paraphrased",
        "retain",
        "heldout",
        "unlearn_quality",
        "utility",
        "forget_truth_mass",
        "forget_reward_mean",
        "forget_reward_var",
    ]);
    for r in rows {
        let m = &r.metrics;
        t.push(vec![
            seed.to_string(),
            r.iteration.to_string(),
            fmt_real(m.forget),
            fmt_real(m.paraphrased),
            fmt_real(m.retain),
            fmt_real(m.heldout),
            fmt_real(m.unlearn_quality),
            fmt_real(m.utility),
            fmt_real(r.forget_truth_mass),
            fmt_real(r.forget_reward_mean),
            fmt_real(r.forget_reward_var),
        ]);
    }
    t
}
