use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{oracle_answer, AgentError, Application, BenchmarkQuestion, Details, Rules};
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::llm::{prompts, ChatRequest, Gateway};
use crate::lumina::{quane_sensitivity, resource_levers, InfluenceMap, Metric, Sign};
use crate::perf_model::{Evaluator, PpaMetrics};

/// Answers benchmark questions with an option index.
pub trait Agent {
    fn name(&self) -> String;
    fn answer(&mut self, q: &BenchmarkQuestion, rules: Rules) -> Result<usize, AgentError>;
}

/// Re-evaluates every option with the model.
pub struct OracleAgent {
    ev: Evaluator,
}

impl OracleAgent {
    pub fn new(ev: Evaluator) -> Self {
        OracleAgent { ev }
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn answer(&mut self, q: &BenchmarkQuestion, _: Rules) -> Result<usize, AgentError> {
        oracle_answer(q, &self.ev).map_err(|e| AgentError(e.to_string()))
    }
}

/// Picks uniformly at random.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn answer(&mut self, q: &BenchmarkQuestion, _: Rules) -> Result<usize, AgentError> {
        Ok(self.rng.gen_range(0..q.options.len()))
    }
}

/// Scripted reasoning from what the prompt shows plus per-step sensitivities
/// measured around the reference design.
///
/// With the enhanced rules it works only on the dominant resource, estimates
/// every quantity as a delta from a known reference point, and trades only
/// the least critical parameter. Without them it falls back to rules of
/// thumb: the largest relative hardware increase wins, and estimates are
/// read off the nearest known value.
pub struct HeuristicAgent {
    base: Evaluator,
    space: SpaceSpec,
    sensitivities: HashMap<Application, (InfluenceMap, PpaMetrics)>,
}

impl HeuristicAgent {
    pub fn new(base: Evaluator, space: SpaceSpec) -> Self {
        HeuristicAgent { base, space, sensitivities: HashMap::new() }
    }

    /// Per-step change of `metric` as a fraction of its reference value.
    fn rel_slope(&mut self, app: Application, p: Param, metric: Metric) -> f64 {
        let (base, space) = (&self.base, &self.space);
        let (map, at) = self.sensitivities.entry(app).or_insert_with(|| {
            let ev = app.evaluator(base);
            let (map, reference) = quane_sensitivity(&InfluenceMap::structural(), space, &ev, &ev.reference);
            (map, reference.metrics)
        });
        let scale = match metric {
            Metric::Area => at.area_mm2,
            Metric::Tpot => at.tpot_s,
            _ => at.ttft_s,
        };
        map.magnitude(p, metric) / scale
    }

    fn steps_between(&self, from: &DesignPoint, to: &DesignPoint) -> Vec<(Param, i64)> {
        let (Some(a), Some(b)) = (self.space.positions(from), self.space.positions(to)) else {
            return Vec::new();
        };
        Param::ALL
            .iter()
            .filter_map(|&p| {
                let s = b[p.index()] as i64 - a[p.index()] as i64;
                (s != 0).then_some((p, s))
            })
            .collect()
    }

    /// Relative change of `metric` predicted from reference sensitivities.
    fn predict_rel(&mut self, app: Application, from: &DesignPoint, to: &DesignPoint, metric: Metric) -> f64 {
        self.steps_between(from, to)
            .into_iter()
            .map(|(p, s)| s as f64 * self.rel_slope(app, p, metric))
            .sum()
    }

    fn bottleneck(&mut self, q: &BenchmarkQuestion, rules: Rules) -> usize {
        let Details::Bottleneck { design, goal, stalls, moves, .. } = &q.details else { unreachable!() };
        let app = q.application;
        if rules == Rules::Original {
            // the biggest relative jump in any hardware resource
            let gain = |i: usize| {
                let mv = moves[i];
                let to = self.space.step_neighbor(design, mv.param, mv.steps).map(|d| d.get(mv.param)).unwrap_or(0);
                if mv.steps > 0 {
                    to as f64 / design.get(mv.param) as f64
                } else {
                    0.0
                }
            };
            return (0..moves.len()).max_by(|&a, &b| gain(a).total_cmp(&gain(b)).then(b.cmp(&a))).unwrap_or(0);
        }
        let levers = resource_levers(stalls.dominant());
        let focused: Vec<usize> =
            (0..moves.len()).filter(|&i| moves[i].steps > 0 && levers.contains(&moves[i].param)).collect();
        let pool: Vec<usize> = if focused.is_empty() { (0..moves.len()).collect() } else { focused };
        let mut best = pool[0];
        let mut best_est = f64::INFINITY;
        for &i in &pool {
            let est = moves[i].steps as f64 * self.rel_slope(app, moves[i].param, *goal);
            if est < best_est {
                best_est = est;
                best = i;
            }
        }
        best
    }

    fn prediction(&mut self, q: &BenchmarkQuestion, rules: Rules) -> usize {
        let Details::Prediction { metric, exemplars, held_out, values } = &q.details else { unreachable!() };
        let estimate = if rules == Rules::Original {
            // the closest observed design's value, as is
            exemplars
                .iter()
                .min_by_key(|e| self.steps_between(&e.design, held_out).iter().map(|(_, s)| s.abs()).sum::<i64>())
                .map_or(0.0, |e| e.value)
        } else {
            // the first exemplar is the reference; single-parameter variants
            // give slopes in parameter units
            let reference = exemplars[0];
            let mut est = reference.value;
            for p in held_out.diff(&reference.design) {
                let dx = held_out.get(p) as f64 - reference.design.get(p) as f64;
                let slope = exemplars[1..].iter().find(|e| e.design.diff(&reference.design) == vec![p]).map(|e| {
                    (e.value - reference.value) / (e.design.get(p) as f64 - reference.design.get(p) as f64)
                });
                est += match slope {
                    Some(s) => s * dx,
                    None => {
                        let steps = self.steps_between(&reference.design, held_out);
                        let s = steps.iter().find(|(q, _)| *q == p).map_or(0, |(_, s)| *s);
                        reference.value * s as f64 * self.rel_slope(q.application, p, *metric)
                    }
                };
            }
            est
        };
        closest(values, estimate)
    }

    fn tuning(&mut self, q: &BenchmarkQuestion, rules: Rules) -> usize {
        let Details::Tuning { initial, goal, area_bound, designs, .. } = &q.details else { unreachable!() };
        let app = q.application;
        let ev = app.evaluator(&self.base);
        let m0 = ev.metrics(initial);
        let (g0, a0) = (if *goal == Metric::Tpot { m0.tpot_n } else { m0.ttft_n }, m0.area_n);
        let mut scored: Vec<(f64, f64)> = Vec::with_capacity(designs.len());
        for d in designs {
            let (g, a) = if rules == Rules::Enhanced {
                (
                    g0 * (1.0 + self.predict_rel(app, initial, d, *goal)),
                    a0 * (1.0 + self.predict_rel(app, initial, d, Metric::Area)),
                )
            } else {
                // every parameter counts equally, in proportion to its value
                let structural = InfluenceMap::structural();
                let mut g = 0.0;
                let mut a = 0.0;
                for p in d.diff(initial) {
                    let ratio = d.get(p) as f64 / initial.get(p) as f64 - 1.0;
                    if structural.get(p, *goal).sign == Sign::Minus {
                        g -= ratio;
                    }
                    a += ratio / Param::ALL.len() as f64;
                }
                (g0 * (1.0 + g), a0 * (1.0 + a))
            };
            scored.push((g, a));
        }
        let feasible: Vec<usize> = (0..scored.len()).filter(|&i| scored[i].1 <= *area_bound).collect();
        let pick = |pool: &[usize], key: &dyn Fn(usize) -> f64| {
            pool.iter().copied().min_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b))).unwrap_or(0)
        };
        if feasible.is_empty() {
            pick(&(0..scored.len()).collect::<Vec<_>>(), &|i| scored[i].1)
        } else {
            pick(&feasible, &|i| scored[i].0)
        }
    }
}

fn closest(values: &[f64], estimate: f64) -> usize {
    let gap = |v: f64| if v > 0.0 && estimate > 0.0 { (v / estimate).ln().abs() } else { (v - estimate).abs() };
    (0..values.len()).min_by(|&a, &b| gap(values[a]).total_cmp(&gap(values[b]))).unwrap_or(0)
}

impl Agent for HeuristicAgent {
    fn name(&self) -> String {
        "heuristic".into()
    }

    fn answer(&mut self, q: &BenchmarkQuestion, rules: Rules) -> Result<usize, AgentError> {
        Ok(match q.details {
            Details::Bottleneck { .. } => self.bottleneck(q, rules),
            Details::Prediction { .. } => self.prediction(q, rules),
            Details::Tuning { .. } => self.tuning(q, rules),
        })
    }
}

/// Sends each question to a chat model and reads the option letter.
pub struct LlmAgent {
    gateway: Gateway,
}

impl LlmAgent {
    pub fn new(gateway: Gateway) -> Self {
        LlmAgent { gateway }
    }
}

/// Reads "Answer: X" (last occurrence) or a reply that is a bare letter.
pub fn parse_choice(reply: &str) -> Option<usize> {
    let letter = |c: char| "ABCD".find(c.to_ascii_uppercase());
    if let Some(i) = reply.rfind("Answer:").or_else(|| reply.to_ascii_lowercase().rfind("answer:")) {
        return reply[i + "answer:".len()..].trim_start().chars().next().and_then(letter);
    }
    let t = reply.trim().trim_end_matches(['.', ')']);
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => letter(c),
        _ => None,
    }
}

impl Agent for LlmAgent {
    fn name(&self) -> String {
        format!("llm:{}", self.gateway.model_name())
    }

    fn answer(&mut self, q: &BenchmarkQuestion, rules: Rules) -> Result<usize, AgentError> {
        let system = match rules {
            Rules::Original => prompts::BENCH_SYSTEM.to_string(),
            Rules::Enhanced => format!("{}\n{}", prompts::ENHANCED_RULES, prompts::BENCH_SYSTEM),
        };
        let req = ChatRequest::new(self.gateway.model_name(), system, q.problem());
        let reply = self.gateway.complete(&req).map_err(|e| AgentError(e.to_string()))?;
        parse_choice(&reply.text).ok_or_else(|| AgentError(format!("no option letter in reply: {:.80}", reply.text)))
    }
}
