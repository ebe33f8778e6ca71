use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    display_value, distinct, goal_value, Application, BenchError, BenchmarkQuestion, Details, Exemplar, Provenance,
    Task, TuningStep,
};
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::llm::prompts;
use crate::lumina::{resource_levers, Metric, Move};
use crate::perf_model::{Evaluator, Resource};

/// Wrong answers of a prediction question, as multiples of the key.
pub const DISTRACTOR_MULTIPLIERS: [f64; 3] = [0.7, 1.2, 1.5];

/// Rounds to `sig` significant digits.
pub fn round_sig(x: f64, sig: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(sig - 1 - mag);
    (x * scale).round() / scale
}

/// Formats with `sig` significant digits and no exponent.
pub fn fmt_sig(x: f64, sig: i32) -> String {
    let r = round_sig(x, sig);
    if r == 0.0 {
        return "0".into();
    }
    let mag = r.abs().log10().floor() as i32;
    let decimals = (sig - 1 - mag).max(0) as usize;
    format!("{r:.decimals$}")
}

fn degenerate(why: impl Into<String>) -> BenchError {
    BenchError::DegenerateDraw(why.into())
}

fn random_application<R: Rng + ?Sized>(rng: &mut R) -> Application {
    match rng.gen_range(0..10) {
        0..=4 => Application::Layer,
        5..=7 => Application::Matmul {
            m: *[8, 64, 512, 2048, 16384].choose(rng).unwrap(),
            k: *[1536, 3072, 6144, 12288].choose(rng).unwrap(),
            n: *[1536, 3072, 6144, 12288].choose(rng).unwrap(),
        },
        _ => Application::Layernorm {
            rows: *[8, 2048, 16384].choose(rng).unwrap(),
            width: *[1536, 12288].choose(rng).unwrap(),
        },
    }
}

fn random_goal<R: Rng + ?Sized>(rng: &mut R, app: &Application) -> Metric {
    if app.is_layer() && rng.gen_bool(0.5) {
        Metric::Tpot
    } else {
        Metric::Ttft
    }
}

/// Shuffles the options; returns them with the new key index.
fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: Vec<T>, key: usize) -> (Vec<T>, usize, Vec<usize>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(rng);
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let shuffled = order.iter().map(|&i| slots[i].take().expect("each index once")).collect();
    let answer = order.iter().position(|&i| i == key).expect("key is among the options");
    (shuffled, answer, order)
}

const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

fn assemble(application: &Application, body: &str, options: &[String]) -> String {
    let mut out = format!(
        "{}\nApplication: {}\nDesign tuple order: ({}).\n\n{body}\n",
        prompts::BENCH_SYSTEM,
        application.describe(),
        Param::ALL.map(|p| p.name()).join(", ")
    );
    for (l, o) in LETTERS.iter().zip(options) {
        out.push_str(&format!("{l}. {o}\n"));
    }
    out
}

fn describe_move(space: &SpaceSpec, d: &DesignPoint, mv: &Move) -> String {
    let to = space.step_neighbor(d, mv.param, mv.steps).map(|n| n.get(mv.param)).unwrap_or(0);
    let verb = if mv.steps > 0 { "increase" } else { "decrease" };
    format!("{verb} {} by one step ({} -> {to})", mv.param, d.get(mv.param))
}

fn question(
    task: Task,
    application: Application,
    prompt: String,
    options: Vec<String>,
    answer_index: usize,
    details: Details,
    provenance: Provenance,
) -> BenchmarkQuestion {
    BenchmarkQuestion { id: 0, task, application, prompt, options, answer_index, details, provenance }
}

fn provenance(base_value: Option<f64>, option_values: Vec<f64>, feasible: Option<Vec<bool>>) -> Provenance {
    Provenance { seed: 0, stream: 0, attempts: 1, base_value, option_values, feasible }
}

/// Single-step moves that stay on the lattice.
fn legal_moves(space: &SpaceSpec, d: &DesignPoint) -> Vec<Move> {
    Param::ALL
        .iter()
        .flat_map(|&param| [1, -1].map(|steps| Move { param, steps }))
        .filter(|m| space.step_neighbor(d, m.param, m.steps).is_ok())
        .collect()
}

/// One bottleneck question on a random design. Exactly one option raises a
/// lever of the dominant resource; the key is whichever option the model
/// says helps most.
pub fn gen_bottleneck<R: Rng + ?Sized>(
    rng: &mut R,
    ev: &Evaluator,
    space: &SpaceSpec,
) -> Result<BenchmarkQuestion, BenchError> {
    let app = random_application(rng);
    let design = space.random_design_with(rng);
    let goal = random_goal(rng, &app);
    let (_, report) = app.evaluator(ev).evaluate(&design);
    let dominant = if goal == Metric::Tpot { report.decode.dominant_resource } else { report.prefill.dominant_resource };
    let levers = resource_levers(dominant);
    let (lead, others): (Vec<Move>, Vec<Move>) =
        legal_moves(space, &design).into_iter().partition(|m| m.steps > 0 && levers.contains(&m.param));
    let Some(&first) = lead.choose(rng) else {
        return Err(degenerate(format!("no lever of {dominant} can increase")));
    };
    if others.len() < 3 {
        return Err(degenerate("too few distractor moves"));
    }
    let mut moves = vec![first];
    moves.extend(others.choose_multiple(rng, 3).copied());
    bottleneck_question(rng, ev, space, app, design, goal, &moves)
}

/// Builds a bottleneck question from explicit moves (in any order).
pub fn bottleneck_question<R: Rng + ?Sized>(
    rng: &mut R,
    ev: &Evaluator,
    space: &SpaceSpec,
    app: Application,
    design: DesignPoint,
    goal: Metric,
    moves: &[Move],
) -> Result<BenchmarkQuestion, BenchError> {
    if moves.len() != 4 {
        return Err(BenchError::InvalidArgument("a bottleneck question needs four moves".into()));
    }
    let app_ev = app.evaluator(ev);
    let (metrics, report) = app_ev.evaluate(&design);
    let base = goal_value(&app_ev, &design, goal);
    let mut values = Vec::with_capacity(4);
    for mv in moves {
        let d = space
            .step_neighbor(&design, mv.param, mv.steps)
            .map_err(|e| BenchError::InvalidArgument(e.to_string()))?;
        values.push(goal_value(&app_ev, &d, goal));
    }
    let changed = values.iter().filter(|&&v| distinct(v, base)).count();
    if changed < 2 {
        return Err(degenerate(format!("only {changed} options change {goal}")));
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    if !(values[order[0]] < base && distinct(values[order[0]], base)) {
        return Err(degenerate("no option improves the objective"));
    }
    if !distinct(values[order[0]], values[order[1]]) {
        return Err(degenerate("two options tie for best"));
    }

    let paired: Vec<(Move, f64)> = moves.iter().copied().zip(values).collect();
    let (paired, answer, _) = shuffle(rng, paired, order[0]);
    let (moves, values): (Vec<Move>, Vec<f64>) = paired.into_iter().unzip();
    let options: Vec<String> = moves.iter().map(|m| describe_move(space, &design, m)).collect();
    let phase = if goal == Metric::Tpot { &report.decode } else { &report.prefill };
    let stalls = Resource::ALL
        .iter()
        .map(|&r| format!("{r}={:.3}", phase.stall_share.get(r)))
        .collect::<Vec<_>>()
        .join(", ");
    let body = format!(
        "Design: {design}\nNormalized metrics (ttft, tpot, area): ({:.4}, {:.4}, {:.4})\n\
         Objective: minimize {} (normalized value {:.4}).\n\
         Performance counters, stall share per resource: {stalls}\n\n\
         Which single-step adjustment improves the objective the most?",
        metrics.ttft_n,
        metrics.tpot_n,
        metrics.area_n,
        app.metric_label(goal),
        base
    );
    let prompt = assemble(&app, &body, &options);
    let details = Details::Bottleneck { design, goal, goal_value: base, stalls: phase.stall_share, moves };
    Ok(question(Task::Bottleneck, app, prompt, options, answer, details, provenance(Some(base), values, None)))
}

/// One prediction question: `k_examples` observed designs around a random
/// base (the base plus single-parameter variants) and a held-out design
/// that moves one or two of the varied parameters.
pub fn gen_prediction<R: Rng + ?Sized>(
    rng: &mut R,
    ev: &Evaluator,
    space: &SpaceSpec,
    k_examples: usize,
) -> Result<BenchmarkQuestion, BenchError> {
    if k_examples < 2 {
        return Err(BenchError::InvalidArgument(format!("need at least 2 exemplars, got {k_examples}")));
    }
    let app = random_application(rng);
    let metric = match rng.gen_range(0..if app.is_layer() { 3 } else { 2 }) {
        0 => Metric::Area,
        1 => Metric::Ttft,
        _ => Metric::Tpot,
    };
    let base = space.random_design_with(rng);
    let movable: Vec<Param> = Param::ALL.iter().copied().filter(|&p| space.values(p).len() > 1).collect();
    let varied: Vec<Param> = movable.choose_multiple(rng, (k_examples - 1).min(movable.len())).copied().collect();
    let mut exemplars = vec![base];
    for &p in &varied {
        let steps = if rng.gen_bool(0.5) { 1 } else { -1 };
        let d = space.step_neighbor(&base, p, steps).or_else(|_| space.step_neighbor(&base, p, -steps));
        exemplars.push(d.map_err(|e| degenerate(e.to_string()))?);
    }

    let n_changed = rng.gen_range(1..=2.min(varied.len()));
    let mut held_out = base;
    for &p in varied.choose_multiple(rng, n_changed) {
        let steps = *[-2, -1, 1, 2].choose(rng).unwrap();
        held_out = space.step_neighbor(&held_out, p, steps).map_err(|e| degenerate(e.to_string()))?;
    }
    if exemplars.contains(&held_out) {
        return Err(degenerate("held-out design repeats an exemplar"));
    }
    prediction_question(rng, ev, app, metric, &exemplars, held_out)
}

/// Builds a prediction question; the key is the model's value for
/// `held_out`, to three significant digits.
pub fn prediction_question<R: Rng + ?Sized>(
    rng: &mut R,
    ev: &Evaluator,
    app: Application,
    metric: Metric,
    exemplars: &[DesignPoint],
    held_out: DesignPoint,
) -> Result<BenchmarkQuestion, BenchError> {
    let app_ev = app.evaluator(ev);
    let shown: Vec<Exemplar> = exemplars
        .iter()
        .map(|&design| Exemplar { design, value: round_sig(display_value(&app_ev, &design, metric), 4) })
        .collect();
    let key = round_sig(display_value(&app_ev, &held_out, metric), 3);
    let mut values = vec![key];
    values.extend(DISTRACTOR_MULTIPLIERS.iter().map(|m| round_sig(key * m, 3)));
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if !distinct(values[i], values[j]) {
                return Err(degenerate(format!("options {} and {} collide after rounding", values[i], values[j])));
            }
        }
    }
    let (values, answer, _) = shuffle(rng, values, 0);
    let unit = if metric == Metric::Area { "mm^2" } else { "ms" };
    let options: Vec<String> = values.iter().map(|v| format!("{} {unit}", fmt_sig(*v, 3))).collect();
    let label = app.metric_label(metric);
    let mut body = format!("Model of the hardware:\n{}\nObserved {label} ({unit}):\n", prompts::MODEL_DESCRIPTION);
    for e in &shown {
        body.push_str(&format!("  {} -> {}\n", e.design, fmt_sig(e.value, 4)));
    }
    body.push_str(&format!("\nWhat is the {label} of {held_out}?"));
    let prompt = assemble(&app, &body, &options);
    let details = Details::Prediction { metric, exemplars: shown, held_out, values: values.clone() };
    Ok(question(Task::Prediction, app, prompt, options, answer, details, provenance(None, values, None)))
}

/// Random design within two steps of `initial` in every parameter,
/// reached by one to three unit moves.
fn nearby<R: Rng + ?Sized>(rng: &mut R, space: &SpaceSpec, initial: &DesignPoint) -> Option<DesignPoint> {
    let home = space.positions(initial)?;
    let mut d = *initial;
    for _ in 0..rng.gen_range(1..=3) {
        let moves = legal_moves(space, &d);
        let mv = moves.choose(rng)?;
        let next = space.step_neighbor(&d, mv.param, mv.steps).ok()?;
        let pos = space.positions(&next)?;
        if pos[mv.param.index()].abs_diff(home[mv.param.index()]) <= 2 {
            d = next;
        }
    }
    (d != *initial).then_some(d)
}

/// One tuning question: four candidate designs near a random start, an
/// area budget that at least one of them breaks, and a latency goal.
pub fn gen_tuning<R: Rng + ?Sized>(
    rng: &mut R,
    ev: &Evaluator,
    space: &SpaceSpec,
) -> Result<BenchmarkQuestion, BenchError> {
    let app = random_application(rng);
    let goal = random_goal(rng, &app);
    let initial = space.random_design_with(rng);
    let app_ev = app.evaluator(ev);
    let m0 = app_ev.metrics(&initial);
    let area_bound = (m0.area_n * rng.gen_range(0.97..1.08) * 1000.0).round() / 1000.0;

    let mut history = Vec::new();
    for _ in 0..3 {
        if let Some(d) = nearby(rng, space, &initial) {
            let m = app_ev.metrics(&d);
            history.push(TuningStep { design: d, goal_value: goal_value(&app_ev, &d, goal), area_n: m.area_n });
        }
    }
    let mut designs = Vec::with_capacity(4);
    if rng.gen_bool(0.25) {
        designs.push(initial);
    }
    let mut tries = 0;
    while designs.len() < 4 && tries < 100 {
        tries += 1;
        if let Some(d) = nearby(rng, space, &initial) {
            if !designs.contains(&d) {
                designs.push(d);
            }
        }
    }
    if designs.len() < 4 {
        return Err(degenerate("could not find four distinct nearby designs"));
    }
    tuning_question(rng, ev, app, goal, initial, area_bound, history, designs)
}

/// Builds a tuning question. The key is the fastest design that meets the
/// area budget.
#[allow(clippy::too_many_arguments)]
pub fn tuning_question<R: Rng + ?Sized>(
    rng: &mut R,
    ev: &Evaluator,
    app: Application,
    goal: Metric,
    initial: DesignPoint,
    area_bound: f64,
    history: Vec<TuningStep>,
    designs: Vec<DesignPoint>,
) -> Result<BenchmarkQuestion, BenchError> {
    if designs.len() != 4 {
        return Err(BenchError::InvalidArgument("a tuning question needs four designs".into()));
    }
    let app_ev = app.evaluator(ev);
    let values: Vec<f64> = designs.iter().map(|d| goal_value(&app_ev, d, goal)).collect();
    let feasible: Vec<bool> = designs.iter().map(|d| app_ev.metrics(d).area_n <= area_bound).collect();
    if feasible.iter().all(|&f| f) {
        return Err(degenerate("every option meets the area budget"));
    }
    let mut ok: Vec<usize> = (0..4).filter(|&i| feasible[i]).collect();
    if ok.is_empty() {
        return Err(degenerate("no option meets the area budget"));
    }
    ok.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    if ok.len() > 1 && !distinct(values[ok[0]], values[ok[1]]) {
        return Err(degenerate("two feasible options tie"));
    }

    let rows: Vec<(DesignPoint, f64, bool)> = (0..4).map(|i| (designs[i], values[i], feasible[i])).collect();
    let (rows, answer, _) = shuffle(rng, rows, ok[0]);
    let options: Vec<String> = rows
        .iter()
        .map(|(d, _, _)| {
            if *d == initial {
                format!("keep the initial design {d}")
            } else {
                let changes: Vec<String> = d
                    .diff(&initial)
                    .iter()
                    .map(|&p| format!("{p} {} -> {}", initial.get(p), d.get(p)))
                    .collect();
                format!("{d} ({})", changes.join(", "))
            }
        })
        .collect();
    let m0 = app_ev.metrics(&initial);
    let label = app.metric_label(goal);
    let mut body = format!(
        "Initial design: {initial}\nNormalized {label}: {:.4}; normalized area: {:.4}\n\
         Goal: minimize normalized {label} subject to normalized area <= {area_bound:.3}.\n\
         Designs explored so far (design -> {label}, area):\n",
        goal_value(&app_ev, &initial, goal),
        m0.area_n
    );
    for h in &history {
        body.push_str(&format!("  {} -> {:.4}, {:.4}\n", h.design, h.goal_value, h.area_n));
    }
    body.push_str("\nWhich option best achieves the goal while meeting the constraint?");
    let prompt = assemble(&app, &body, &options);
    let designs: Vec<DesignPoint> = rows.iter().map(|r| r.0).collect();
    let option_values: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let feasible: Vec<bool> = rows.iter().map(|r| r.2).collect();
    let details = Details::Tuning { initial, goal, area_bound, history, designs };
    Ok(question(Task::Tuning, app, prompt, options, answer, details, provenance(None, option_values, Some(feasible))))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::bench::verify;
    use crate::design_space::A100;

    #[test]
    fn significant_digits() {
        assert_eq!(round_sig(826.0, 3), 826.0);
        let d: Vec<f64> = DISTRACTOR_MULTIPLIERS.iter().map(|m| round_sig(826.0 * m, 3)).collect();
        assert_eq!(d, vec![578.0, 991.0, 1240.0]);
        assert_eq!(fmt_sig(1239.0, 3), "1240");
        assert_eq!(fmt_sig(0.012345, 3), "0.0123");
        assert_eq!(fmt_sig(5.0, 3), "5.00");
    }

    #[test]
    fn one_channel_decode_question_keys_more_channels() {
        let ev = Evaluator::gpt3_default();
        let space = SpaceSpec::default_lattice();
        let design = A100.with(Param::GlobalBufferMb, 32).with(Param::MemChannels, 1);
        let moves = [
            Move { param: Param::SystolicDim, steps: 1 },
            Move { param: Param::MemChannels, steps: 1 },
            Move { param: Param::VectorWidth, steps: 1 },
            Move { param: Param::LinkCount, steps: -1 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = bottleneck_question(&mut rng, &ev, &space, Application::Layer, design, Metric::Tpot, &moves).unwrap();
        let Details::Bottleneck { moves, .. } = &q.details else { panic!() };
        assert_eq!(moves[q.answer_index], Move { param: Param::MemChannels, steps: 1 });
        verify(&q, &ev).unwrap();
    }

    #[test]
    fn infeasible_option_is_never_the_key() {
        let ev = Evaluator::gpt3_default();
        let base = A100.with(Param::GlobalBufferMb, 32);
        let fast = base.with(Param::MemChannels, 8).with(Param::SramKb, 256);
        let designs = vec![
            base.with(Param::MemChannels, 6).with(Param::CoreCount, 96),
            fast,
            base.with(Param::VectorWidth, 16),
            base.with(Param::SublaneCount, 2),
        ];
        assert!(ev.metrics(&fast).area_n > 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = tuning_question(&mut rng, &ev, Application::Layer, Metric::Tpot, base, 1.0, vec![], designs).unwrap();
        let Details::Tuning { designs, .. } = &q.details else { panic!() };
        assert_ne!(designs[q.answer_index], fast);
        assert_eq!(designs[q.answer_index], base.with(Param::MemChannels, 6).with(Param::CoreCount, 96));
        verify(&q, &ev).unwrap();
    }

    #[test]
    fn linear_area_extrapolates_exactly() {
        let ev = Evaluator::gpt3_default();
        let base = A100.with(Param::GlobalBufferMb, 32);
        let ex = vec![base, base.with(Param::MemChannels, 6)];
        let held = base.with(Param::MemChannels, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = prediction_question(&mut rng, &ev, Application::Layer, Metric::Area, &ex, held).unwrap();
        let Details::Prediction { exemplars, values, .. } = &q.details else { panic!() };
        let slope = exemplars[1].value - exemplars[0].value;
        let guess = exemplars[0].value + 3.0 * slope;
        assert_eq!(round_sig(guess, 3), values[q.answer_index]);
    }

    #[test]
    fn held_out_equal_to_exemplar_keys_its_value() {
        let ev = Evaluator::gpt3_default();
        let base = A100.with(Param::GlobalBufferMb, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = prediction_question(&mut rng, &ev, Application::Layer, Metric::Tpot, &[base, base.with(Param::LinkCount, 18)], base)
            .unwrap();
        let Details::Prediction { exemplars, values, .. } = &q.details else { panic!() };
        assert_eq!(values[q.answer_index], round_sig(exemplars[0].value, 3));
    }

    #[test]
    fn generated_questions_verify() {
        let ev = Evaluator::gpt3_default();
        let space = SpaceSpec::default_lattice();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut made = 0;
        for _ in 0..300 {
            for q in [gen_bottleneck(&mut rng, &ev, &space), gen_prediction(&mut rng, &ev, &space, 4), gen_tuning(&mut rng, &ev, &space)]
                .into_iter()
                .flatten()
            {
                verify(&q, &ev).unwrap();
                made += 1;
            }
        }
        assert!(made > 300, "only {made} non-degenerate draws");
    }

    #[test]
    fn two_exemplars_minimum() {
        let ev = Evaluator::gpt3_default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            gen_prediction(&mut rng, &ev, &SpaceSpec::default_lattice(), 1),
            Err(BenchError::InvalidArgument(_))
        ));
    }
}
