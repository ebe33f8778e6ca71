//! Multiple-choice benchmark for design-space reasoning: bottleneck analysis,
//! metric prediction and constrained tuning. Every answer key is backed by
//! model evaluations recorded with the question, and [`verify`] re-derives
//! it from scratch.

mod agents;
mod generate;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{DesignPoint, SpaceSpec};
use crate::lumina::{Metric, Move};
use crate::perf_model::{Evaluator, StallShares};
use crate::workload::{GemmDims, OperatorSpec, Phase, PhaseGraph};

pub use agents::{Agent, HeuristicAgent, LlmAgent, OracleAgent, RandomAgent};
pub use generate::{
    bottleneck_question, fmt_sig, gen_bottleneck, gen_prediction, gen_tuning, prediction_question, round_sig,
    tuning_question, DISTRACTOR_MULTIPLIERS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("degenerate draw: {0}")]
    DegenerateDraw(String),
    #[error("gave up after {attempts} degenerate draws for a {task} question")]
    RetriesExhausted { task: Task, attempts: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Why a question failed re-verification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("question {id}: keyed option {keyed} but option {best} is best")]
    WrongKey { id: usize, keyed: usize, best: usize },
    #[error("question {id}: options {a} and {b} tie")]
    Tie { id: usize, a: usize, b: usize },
    #[error("question {id}: {reason}")]
    Malformed { id: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("agent failed: {0}")]
pub struct AgentError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Bottleneck,
    Prediction,
    Tuning,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Bottleneck, Task::Prediction, Task::Tuning];

    pub fn name(self) -> &'static str {
        match self {
            Task::Bottleneck => "bottleneck",
            Task::Prediction => "prediction",
            Task::Tuning => "tuning",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether the corrective rules are prepended to the system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rules {
    #[default]
    Original,
    Enhanced,
}

impl std::str::FromStr for Rules {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" | "off" => Ok(Rules::Original),
            "enhanced" | "on" => Ok(Rules::Enhanced),
            other => Err(format!("unknown rules mode `{other}` (expected original or enhanced)")),
        }
    }
}

impl fmt::Display for Rules {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rules::Original => "original",
            Rules::Enhanced => "enhanced",
        })
    }
}

/// The workload a question is about: a whole layer or one operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Application {
    Layer,
    Matmul { m: u64, k: u64, n: u64 },
    Layernorm { rows: u64, width: u64 },
}

impl Application {
    /// Evaluator for this application, sharing the calibration and reference
    /// of `base`. Operator targets report the operator's latency as both
    /// phases.
    pub fn evaluator(&self, base: &Evaluator) -> Evaluator {
        let eb = base.elem_bytes as u64;
        let op = match *self {
            Application::Layer => return base.clone(),
            Application::Matmul { m, k, n } => OperatorSpec::matmul("matmul", GemmDims { m, k, n, count: 1 }, eb, true),
            Application::Layernorm { rows, width } => OperatorSpec::layernorm("layernorm", rows, width, eb),
        };
        Evaluator::new(
            PhaseGraph::single(Phase::Prefill, op.clone()),
            PhaseGraph::single(Phase::Decode, op),
            base.consts.clone(),
            base.elem_bytes,
            base.reference,
        )
    }

    pub fn is_layer(&self) -> bool {
        matches!(self, Application::Layer)
    }

    pub fn describe(&self) -> String {
        match self {
            Application::Layer => {
                "one GPT-3 decoder layer, batch 8, 2048-token prompt, 8-way tensor parallel, FP16".to_string()
            }
            Application::Matmul { m, k, n } => format!("a single FP16 matmul with M={m}, K={k}, N={n} (weights in DRAM)"),
            Application::Layernorm { rows, width } => format!("a single FP16 layernorm over {rows} rows of width {width}"),
        }
    }

    /// Human name of a latency metric for this application.
    pub fn metric_label(&self, m: Metric) -> &'static str {
        match (self.is_layer(), m) {
            (_, Metric::Area) => "area",
            (true, Metric::Tpot) => "TPOT (decode latency per token)",
            (true, _) => "TTFT (prefill latency)",
            (false, _) => "operator latency",
        }
    }
}

/// A design with one observed metric value, as shown in a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub design: DesignPoint,
    pub value: f64,
}

/// One visited design in a tuning question's history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningStep {
    pub design: DesignPoint,
    pub goal_value: f64,
    pub area_n: f64,
}

/// The structured content behind a question's prompt, in option order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Details {
    Bottleneck {
        design: DesignPoint,
        /// Normalized latency to minimize.
        goal: Metric,
        goal_value: f64,
        stalls: StallShares,
        moves: Vec<Move>,
    },
    Prediction {
        metric: Metric,
        /// Values in the units the prompt uses (mm^2 or ms), four significant digits.
        exemplars: Vec<Exemplar>,
        held_out: DesignPoint,
        values: Vec<f64>,
    },
    Tuning {
        initial: DesignPoint,
        goal: Metric,
        area_bound: f64,
        history: Vec<TuningStep>,
        designs: Vec<DesignPoint>,
    },
}

/// How the key was established.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub stream: u64,
    /// Draws needed, counting degenerate ones.
    pub attempts: usize,
    /// Objective of the unchanged design, where there is one.
    pub base_value: Option<f64>,
    /// Oracle value of every option, in option order.
    pub option_values: Vec<f64>,
    /// Area feasibility of every option (tuning only).
    pub feasible: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkQuestion {
    pub id: usize,
    pub task: Task,
    pub application: Application,
    pub prompt: String,
    pub options: Vec<String>,
    pub answer_index: usize,
    pub details: Details,
    pub provenance: Provenance,
}

impl BenchmarkQuestion {
    /// The prompt without the shared system preamble.
    pub fn problem(&self) -> &str {
        self.prompt
            .strip_prefix(crate::llm::prompts::BENCH_SYSTEM)
            .unwrap_or(&self.prompt)
            .trim_start()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteCounts {
    pub bottleneck: usize,
    pub prediction: usize,
    pub tuning: usize,
}

impl Default for SuiteCounts {
    fn default() -> Self {
        SuiteCounts { bottleneck: 308, prediction: 127, tuning: 30 }
    }
}

impl SuiteCounts {
    pub fn get(&self, t: Task) -> usize {
        match t {
            Task::Bottleneck => self.bottleneck,
            Task::Prediction => self.prediction,
            Task::Tuning => self.tuning,
        }
    }

    pub fn total(&self) -> usize {
        self.bottleneck + self.prediction + self.tuning
    }

    /// Splits `n` in the default proportions.
    pub fn mixed(n: usize) -> Self {
        let d = SuiteCounts::default();
        let bottleneck = n * d.bottleneck / d.total();
        let prediction = n * d.prediction / d.total();
        SuiteCounts { bottleneck, prediction, tuning: n - bottleneck - prediction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Exemplars shown in a prediction question.
    pub k_examples: usize,
    /// Degenerate draws tolerated per question.
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { k_examples: 4, max_retries: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSuite {
    pub seed: u64,
    pub counts: SuiteCounts,
    pub questions: Vec<BenchmarkQuestion>,
}

impl BenchmarkSuite {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn count(&self, t: Task) -> usize {
        self.questions.iter().filter(|q| q.task == t).count()
    }
}

/// Draws one question, resampling degenerate draws. The RNG is stream
/// `stream` of `seed`, so each question is reproducible on its own.
pub fn draw_question(
    task: Task,
    ev: &Evaluator,
    space: &SpaceSpec,
    cfg: &GenConfig,
    seed: u64,
    stream: u64,
) -> Result<BenchmarkQuestion, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    for attempt in 1..=cfg.max_retries.max(1) {
        let drawn = match task {
            Task::Bottleneck => gen_bottleneck(&mut rng, ev, space),
            Task::Prediction => gen_prediction(&mut rng, ev, space, cfg.k_examples),
            Task::Tuning => gen_tuning(&mut rng, ev, space),
        };
        match drawn {
            Ok(mut q) => {
                q.provenance.seed = seed;
                q.provenance.stream = stream;
                q.provenance.attempts = attempt;
                return Ok(q);
            }
            Err(BenchError::DegenerateDraw(why)) => log::debug!("resampling {task} question: {why}"),
            Err(e) => return Err(e),
        }
    }
    Err(BenchError::RetriesExhausted { task, attempts: cfg.max_retries.max(1) })
}

/// Generates a suite. Questions are drawn in parallel from independent
/// streams, so the result does not depend on thread count.
pub fn generate_suite(
    ev: &Evaluator,
    space: &SpaceSpec,
    counts: SuiteCounts,
    cfg: &GenConfig,
    seed: u64,
) -> Result<BenchmarkSuite, BenchError> {
    let plan: Vec<Task> = Task::ALL.iter().flat_map(|&t| std::iter::repeat(t).take(counts.get(t))).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(plan.len().max(1));
    let chunk = plan.len().div_ceil(threads).max(1);
    let drawn: Vec<Result<BenchmarkQuestion, BenchError>> = std::thread::scope(|s| {
        let handles: Vec<_> = plan
            .chunks(chunk)
            .enumerate()
            .map(|(c, tasks)| {
                s.spawn(move || {
                    tasks
                        .iter()
                        .enumerate()
                        .map(|(i, &t)| draw_question(t, ev, space, cfg, seed, (c * chunk + i) as u64))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("generator thread panicked")).collect()
    });
    let mut questions = Vec::with_capacity(drawn.len());
    for (id, q) in drawn.into_iter().enumerate() {
        let mut q = q?;
        q.id = id;
        questions.push(q);
    }
    Ok(BenchmarkSuite { seed, counts, questions })
}

/// Recomputes every option's value from the question's details and returns
/// the index of the uniquely best option.
pub fn oracle_answer(q: &BenchmarkQuestion, ev: &Evaluator) -> Result<usize, VerifyError> {
    let id = q.id;
    let malformed = |reason: String| VerifyError::Malformed { id, reason };
    if q.options.len() != 4 {
        return Err(malformed(format!("{} options", q.options.len())));
    }
    let app_ev = q.application.evaluator(ev);
    let space = SpaceSpec::default_lattice();
    // lower is better; infeasible options score infinity
    let scores: Vec<f64> = match &q.details {
        Details::Bottleneck { design, goal, moves, .. } => {
            if moves.len() != 4 {
                return Err(malformed("bottleneck question needs four moves".into()));
            }
            moves
                .iter()
                .map(|mv| {
                    let d = space
                        .step_neighbor(design, mv.param, mv.steps)
                        .map_err(|e| malformed(e.to_string()))?;
                    Ok(goal_value(&app_ev, &d, *goal))
                })
                .collect::<Result<_, VerifyError>>()?
        }
        Details::Prediction { metric, held_out, values, .. } => {
            if values.len() != 4 {
                return Err(malformed("prediction question needs four values".into()));
            }
            let truth = round_sig(display_value(&app_ev, held_out, *metric), 3);
            values.iter().map(|v| if (*v - truth).abs() <= 1e-9 * truth.abs() { 0.0 } else { 1.0 }).collect()
        }
        Details::Tuning { goal, area_bound, designs, .. } => {
            if designs.len() != 4 {
                return Err(malformed("tuning question needs four designs".into()));
            }
            designs
                .iter()
                .map(|d| {
                    let m = app_ev.metrics(d);
                    if m.area_n <= *area_bound {
                        goal_value(&app_ev, d, *goal)
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        }
    };
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (best, second) = (order[0], order[1]);
    if !scores[best].is_finite() {
        return Err(malformed("no feasible option".into()));
    }
    if !distinct(scores[best], scores[second]) {
        return Err(VerifyError::Tie { id, a: best.min(second), b: best.max(second) });
    }
    Ok(best)
}

/// Confirms the recorded key is the unique oracle answer.
pub fn verify(q: &BenchmarkQuestion, ev: &Evaluator) -> Result<(), VerifyError> {
    let best = oracle_answer(q, ev)?;
    if best != q.answer_index {
        return Err(VerifyError::WrongKey { id: q.id, keyed: q.answer_index, best });
    }
    Ok(())
}

/// Relative gap below which two option values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-6;

pub(crate) fn distinct(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a != b;
    }
    (a - b).abs() > TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Normalized value of a latency or area objective.
pub(crate) fn goal_value(ev: &Evaluator, d: &DesignPoint, goal: Metric) -> f64 {
    let m = ev.metrics(d);
    match goal {
        Metric::Tpot => m.tpot_n,
        Metric::Area => m.area_n,
        _ => m.ttft_n,
    }
}

/// Raw value in prompt units: mm^2 for area, milliseconds for latencies.
pub(crate) fn display_value(ev: &Evaluator, d: &DesignPoint, metric: Metric) -> f64 {
    let m = ev.metrics(d);
    match metric {
        Metric::Area => m.area_mm2,
        Metric::Tpot => m.tpot_s * 1e3,
        _ => m.ttft_s * 1e3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAccuracy {
    pub task: Task,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: usize,
    pub task: Task,
    pub answer_index: usize,
    pub chosen: Option<usize>,
    pub correct: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub agent: String,
    pub rules: Rules,
    pub tasks: Vec<TaskAccuracy>,
    pub questions: Vec<QuestionResult>,
}

impl AccuracyReport {
    pub fn accuracy(&self, t: Task) -> Option<f64> {
        self.tasks.iter().find(|a| a.task == t).map(|a| a.accuracy)
    }

    /// Correct answers over all questions.
    pub fn overall(&self) -> f64 {
        let total = self.questions.len();
        if total == 0 {
            return 0.0;
        }
        self.questions.iter().filter(|q| q.correct).count() as f64 / total as f64
    }

    /// One line per question: id, task, key, chosen option, correctness.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,task,answer_index,chosen,correct,error\n");
        for q in &self.questions {
            let chosen = q.chosen.map(|c| c.to_string()).unwrap_or_default();
            let error = q.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            out.push_str(&format!("{},{},{},{},{},\"{}\"\n", q.id, q.task, q.answer_index, chosen, q.correct, error));
        }
        out
    }
}

/// Asks `agent` every question in order. A failed answer counts as wrong.
pub fn score(suite: &BenchmarkSuite, agent: &mut dyn Agent, rules: Rules) -> AccuracyReport {
    let mut questions = Vec::with_capacity(suite.questions.len());
    for q in &suite.questions {
        let (chosen, error) = match agent.answer(q, rules) {
            Ok(c) if c < q.options.len() => (Some(c), None),
            Ok(c) => (None, Some(format!("option index {c} out of range"))),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(e) = &error {
            log::warn!("question {}: {e}", q.id);
        }
        questions.push(QuestionResult {
            id: q.id,
            task: q.task,
            answer_index: q.answer_index,
            chosen,
            correct: chosen == Some(q.answer_index),
            error,
        });
    }
    let tasks = Task::ALL
        .iter()
        .filter_map(|&task| {
            let rows: Vec<_> = questions.iter().filter(|r| r.task == task).collect();
            if rows.is_empty() {
                return None;
            }
            let correct = rows.iter().filter(|r| r.correct).count();
            Some(TaskAccuracy { task, correct, total: rows.len(), accuracy: correct as f64 / rows.len() as f64 })
        })
        .collect();
    AccuracyReport { agent: agent.name(), rules, tasks, questions }
}
