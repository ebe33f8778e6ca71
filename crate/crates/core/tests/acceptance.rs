//! Acceptance suite. Each test prints one line,
//! `criterion N [PASS|FAIL] <name>: <detail> (<elapsed> / <limit>)`,
//! then asserts. Tolerances and limits are the constants below.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lumina::bench::{
    generate_suite, score, Details, GenConfig, HeuristicAgent, OracleAgent, RandomAgent, Rules, SuiteCounts, Task,
};
use lumina::config::RunConfig;
use lumina::design_space::{DesignPoint, Param, SpaceSpec, A100};
use lumina::lumina::{is_hard_zero, run_rule, InfluenceMap, LuminaConfig, Metric, Sign};
use lumina::optimizers::Method;
use lumina::pareto::{hypervolume, ObjectiveVector, ParetoArchive};
use lumina::perf_model::Evaluator;
use lumina::store::{self, ExploreMethod, RunSpec};

const PEAK_TENSOR_A100: f64 = 3.118e14;
const PEAK_TOL: f64 = 0.005;
const CARDINALITY: u64 = 4_741_632;
const HV_EXACT_TOL: f64 = 1e-12;
const HV_MC_TOL: f64 = 0.01;
const MC_DRAWS: usize = 1_000_000;
const RANDOM_BAND: (f64, f64) = (0.20, 0.30);

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn check(n: u32, name: &str, pass: bool, detail: String, started: Instant, limit: Duration) {
    let elapsed = started.elapsed();
    let ok = pass && elapsed < limit;
    println!(
        "criterion {n} [{}] {name}: {detail} ({:.2}s / {}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(elapsed < limit, "criterion {n} over time: {elapsed:?} >= {limit:?}");
}

#[test]
fn criterion_01_calibration_anchor() {
    let t = Instant::now();
    let ev = Evaluator::gpt3_default();
    let peak = ev.hardware(&A100).peak_tensor_flops;
    let m = ev.metrics(&A100);
    let peak_ok = (peak / PEAK_TENSOR_A100 - 1.0).abs() <= PEAK_TOL;
    let unit = m.normalized() == [1.0, 1.0, 1.0];
    check(
        1,
        "calibration anchor",
        peak_ok && unit,
        format!("peak tensor {peak:.4e} FLOP/s, normalized {:?}", m.normalized()),
        t,
        secs(1),
    );
}

#[test]
fn criterion_02_cardinality() {
    let t = Instant::now();
    let n = SpaceSpec::default_lattice().cardinality();
    check(2, "cardinality", n == CARDINALITY, format!("{n} designs"), t, secs(1));
}

/// Volume of the union of boxes by inclusion-exclusion over all subsets.
fn inclusion_exclusion(front: &[ObjectiveVector], r: &ObjectiveVector) -> f64 {
    let n = front.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut corner = [f64::MIN; 3];
        for (i, p) in front.iter().enumerate() {
            if mask & (1 << i) != 0 {
                for k in 0..3 {
                    corner[k] = corner[k].max(p.0[k]);
                }
            }
        }
        let vol: f64 = (0..3).map(|k| (r.0[k] - corner[k]).max(0.0)).product();
        total += if mask.count_ones() % 2 == 1 { vol } else { -vol };
    }
    total
}

fn monte_carlo(front: &[ObjectiveVector], r: &ObjectiveVector, draws: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut hit = 0usize;
    for _ in 0..draws {
        let x = [rng.gen::<f64>() * r.0[0], rng.gen::<f64>() * r.0[1], rng.gen::<f64>() * r.0[2]];
        if front.iter().any(|p| (0..3).all(|k| p.0[k] <= x[k])) {
            hit += 1;
        }
    }
    hit as f64 / draws as f64 * r.0.iter().product::<f64>()
}

fn random_front(rng: &mut ChaCha8Rng, max: usize) -> Vec<ObjectiveVector> {
    let n = rng.gen_range(1..=max);
    (0..n).map(|_| ObjectiveVector::new(rng.gen(), rng.gen(), rng.gen())).collect()
}

#[test]
fn criterion_03_hypervolume() {
    let t = Instant::now();
    let r = ObjectiveVector::REFERENCE;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_exact = 0.0f64;
    for _ in 0..200 {
        let f = random_front(&mut rng, 8);
        worst_exact = worst_exact.max((hypervolume(&f, &r) - inclusion_exclusion(&f, &r)).abs());
    }
    let mut worst_mc = 0.0f64;
    for _ in 0..20 {
        let f = random_front(&mut rng, 64);
        worst_mc = worst_mc.max((hypervolume(&f, &r) - monte_carlo(&f, &r, MC_DRAWS, &mut rng)).abs());
    }
    check(
        3,
        "hypervolume correctness",
        worst_exact <= HV_EXACT_TOL && worst_mc <= HV_MC_TOL,
        format!("max |exact - incl/excl| = {worst_exact:.2e}, max |exact - MC| = {worst_mc:.4}"),
        t,
        secs(30),
    );
}

/// Points no other point dominates, by pairwise comparison.
fn brute_force_front(points: &[ObjectiveVector]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !(0..points.len()).any(|j| {
                let (a, b) = (points[j].0, points[i].0);
                (0..3).all(|k| a[k] <= b[k]) && (0..3).any(|k| a[k] < b[k])
            })
        })
        .collect()
}

#[test]
fn criterion_04_archive_matches_brute_force() {
    let t = Instant::now();
    let space = SpaceSpec::default_lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut all_match = true;
    let mut sizes = Vec::new();
    // continuous draws, then a coarse grid full of ties and repeats
    for grid in [None, Some(6u32)] {
        let points: Vec<ObjectiveVector> = (0..1000)
            .map(|_| {
                let mut v = [rng.gen::<f64>(), rng.gen(), rng.gen()];
                if let Some(g) = grid {
                    v = v.map(|x| (x * g as f64).floor() / g as f64);
                }
                ObjectiveVector(v)
            })
            .collect();
        let mut archive = ParetoArchive::default();
        for (i, p) in points.iter().enumerate() {
            archive.insert(space.design_at(i as u64 * 4099).unwrap(), *p, i);
        }
        let mut got: Vec<usize> = archive.entries.iter().map(|e| e.step).collect();
        got.sort();
        let want = brute_force_front(&points);
        sizes.push(want.len());
        all_match &= got == want;
    }
    check(4, "archive vs brute-force filter", all_match, format!("front sizes {sizes:?}"), t, secs(5));
}

#[test]
fn criterion_05_design_a_b_directions() {
    let t = Instant::now();
    let ev = Evaluator::gpt3_default();
    let a = ev.metrics(&DesignPoint::from_array([24, 64, 4, 32, 16, 128, 40, 6]));
    let b = ev.metrics(&DesignPoint::from_array([18, 96, 4, 32, 16, 128, 40, 6]));
    let pass = a.area_n < 1.0 && a.ttft_n < 1.0 && a.tpot_n < 1.0 && b.ttft_n < 1.0;
    check(
        5,
        "design A/B directions",
        pass,
        format!(
            "A (ttft {:.3}, tpot {:.3}, area {:.3}); B (ttft {:.3}, tpot {:.3}, area {:.3})",
            a.ttft_n, a.tpot_n, a.area_n, b.ttft_n, b.tpot_n, b.area_n
        ),
        t,
        secs(1),
    );
}

#[test]
fn criterion_06_twenty_sample_discovery() {
    let t = Instant::now();
    let space = SpaceSpec::default_lattice();
    let ev = Evaluator::gpt3_default();
    let cfg = LuminaConfig::default();
    let mut found = Vec::new();
    for seed in 1..=5 {
        let run = run_rule(&space, &ev, &cfg, 20, seed).unwrap();
        assert_eq!(run.trajectory[0].design, space.reference());
        let r = ObjectiveVector::REFERENCE;
        found.push(run.trajectory.iter().filter(|s| s.objectives().strictly_better(&r)).count());
    }
    check(
        6,
        "twenty-sample discovery",
        found.iter().all(|&n| n >= 1),
        format!("designs beating the reference per seed 1..5: {found:?}"),
        t,
        secs(10),
    );
}

#[test]
fn criterion_07_ordinal_comparison_from_stored_runs() {
    let t = Instant::now();
    let root = tempfile::tempdir().unwrap();
    for method in [ExploreMethod::Lumina, ExploreMethod::Baseline(Method::RandomWalk), ExploreMethod::Baseline(Method::Grid)] {
        for seed in 1..=5 {
            let spec = RunSpec { method, backend: Default::default(), seed, budget: 1000, config: RunConfig::default() };
            store::run_explore(&spec, root.path(), None).unwrap();
        }
    }
    let report = store::report(&[root.path().to_path_buf()]).unwrap();
    let get = |label: &str| report.method(label).unwrap().clone();
    let (l, rw, gs) = (get("lumina-rule"), get("random_walk"), get("grid"));
    assert!(l.runs == 5 && rw.runs == 5 && gs.runs == 5);
    let pass = l.mean_phv > rw.mean_phv && l.mean_phv > gs.mean_phv && l.mean_se > rw.mean_se && l.mean_se > gs.mean_se;
    check(
        7,
        "ordinal method comparison",
        pass,
        format!(
            "mean PHV lumina {:.4} / rw {:.4} / gs {:.4}; mean SE {:.4} / {:.4} / {:.4}",
            l.mean_phv, rw.mean_phv, gs.mean_phv, l.mean_se, rw.mean_se, gs.mean_se
        ),
        t,
        secs(300),
    );
}

/// Re-scores a question from scratch; returns the uniquely best option.
fn reverify(q: &lumina::bench::BenchmarkQuestion, base: &Evaluator, space: &SpaceSpec) -> Option<usize> {
    let ev = q.application.evaluator(base);
    let objective = |d: &DesignPoint, goal: Metric| {
        let m = ev.metrics(d);
        if goal == Metric::Tpot {
            m.tpot_n
        } else {
            m.ttft_n
        }
    };
    let unique_min = |scores: &[f64]| {
        let best = (0..scores.len()).min_by(|&a, &b| scores[a].total_cmp(&scores[b]))?;
        let clear = (0..scores.len()).all(|i| i == best || scores[i] > scores[best] * (1.0 + 1e-9));
        (clear && scores[best].is_finite()).then_some(best)
    };
    match &q.details {
        Details::Bottleneck { design, goal, moves, .. } => {
            let scores: Vec<f64> = moves
                .iter()
                .map(|mv| space.step_neighbor(design, mv.param, mv.steps).map_or(f64::NAN, |d| objective(&d, *goal)))
                .collect();
            unique_min(&scores)
        }
        Details::Prediction { metric, held_out, values, .. } => {
            let m = ev.metrics(held_out);
            let truth = match metric {
                Metric::Area => m.area_mm2,
                Metric::Tpot => m.tpot_s * 1e3,
                _ => m.ttft_s * 1e3,
            };
            // the key carries three significant digits; everything else is far off
            let gaps: Vec<f64> = values.iter().map(|v| (v / truth - 1.0).abs()).collect();
            let best = (0..4).min_by(|&a, &b| gaps[a].total_cmp(&gaps[b]))?;
            let ok = gaps[best] <= 0.005 && (0..4).all(|i| i == best || gaps[i] > 0.05);
            ok.then_some(best)
        }
        Details::Tuning { goal, area_bound, designs, .. } => {
            let scores: Vec<f64> = designs
                .iter()
                .map(|d| if ev.metrics(d).area_n <= *area_bound { objective(d, *goal) } else { f64::INFINITY })
                .collect();
            unique_min(&scores)
        }
    }
}

#[test]
fn criterion_08_benchmark_key_soundness() {
    let t = Instant::now();
    let ev = Evaluator::gpt3_default();
    let space = SpaceSpec::default_lattice();
    let suite = generate_suite(&ev, &space, SuiteCounts::default(), &GenConfig::default(), 8).unwrap();
    let counts = (suite.count(Task::Bottleneck), suite.count(Task::Prediction), suite.count(Task::Tuning));
    let bad = suite.questions.iter().filter(|q| reverify(q, &ev, &space) != Some(q.answer_index)).count();
    let oracle = score(&suite, &mut OracleAgent::new(ev.clone()), Rules::Enhanced);
    let oracle_ok = Task::ALL.iter().all(|&k| oracle.accuracy(k) == Some(1.0));

    let big = generate_suite(
        &ev,
        &space,
        SuiteCounts { bottleneck: 300, prediction: 300, tuning: 300 },
        &GenConfig::default(),
        88,
    )
    .unwrap();
    let random = score(&big, &mut RandomAgent::new(9), Rules::Original);
    let acc: Vec<f64> = Task::ALL.iter().map(|&k| random.accuracy(k).unwrap()).collect();
    let random_ok = acc.iter().all(|a| (RANDOM_BAND.0..=RANDOM_BAND.1).contains(a));
    check(
        8,
        "benchmark key soundness",
        counts == (308, 127, 30) && bad == 0 && oracle_ok && random_ok,
        format!("{counts:?} questions, {bad} failed re-verification, oracle {:.3}, random per task {acc:.3?}", oracle.overall()),
        t,
        secs(120),
    );
}

#[test]
fn criterion_09_enhanced_rules_help() {
    let t = Instant::now();
    let ev = Evaluator::gpt3_default();
    let space = SpaceSpec::default_lattice();
    let mut pairs = Vec::new();
    for seed in 1..=3 {
        let suite = generate_suite(&ev, &space, SuiteCounts::mixed(100), &GenConfig::default(), seed).unwrap();
        assert_eq!(suite.questions.len(), 100);
        let mut agent = HeuristicAgent::new(ev.clone(), space.clone());
        let with = score(&suite, &mut agent, Rules::Enhanced).overall();
        let without = score(&suite, &mut agent, Rules::Original).overall();
        pairs.push((with, without));
    }
    check(
        9,
        "rule alignment",
        pairs.iter().all(|(w, wo)| w > wo),
        format!("(enhanced, original) accuracy per seed: {pairs:.2?}"),
        t,
        secs(60),
    );
}

#[test]
fn criterion_10_reproducibility() {
    let t = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let replays = tempfile::tempdir().unwrap();
    let mut identical = Vec::new();
    for (seed, budget) in [(1u64, 20usize), (2, 200)] {
        let spec = RunSpec {
            method: ExploreMethod::Lumina,
            backend: Default::default(),
            seed,
            budget,
            config: RunConfig::default(),
        };
        let dir = store::run_explore(&spec, root.path(), None).unwrap();
        let replay = store::replay(&dir, replays.path(), None).unwrap();
        let a = std::fs::read(dir.join(store::TRAJECTORY)).unwrap();
        let b = std::fs::read(replay.dir.join(store::TRAJECTORY)).unwrap();
        identical.push(replay.identical && a == b && !a.is_empty());
    }
    let map = InfluenceMap::structural();
    let hard_zero = is_hard_zero(Param::SystolicDim, Metric::PeakVector)
        && map.get(Param::SystolicDim, Metric::PeakVector).sign == Sign::Zero;
    check(
        10,
        "reproducibility",
        identical.iter().all(|&x| x) && hard_zero,
        format!("byte-identical replays {identical:?}, systolic_dim -> peak_vector hard zero: {hard_zero}"),
        t,
        secs(10),
    );
}
