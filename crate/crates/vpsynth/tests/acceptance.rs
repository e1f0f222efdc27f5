//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (bypassing output capture) and then asserts.
//!
//! The learned-model criteria share one seeded 200-spec dataset and three
//! trained model pairs per domain, built lazily by whichever test needs them
//! first.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng as _;

use vpsynth::pipeline::{self, OracleCache, Outcome, TrainSettings, Trained};
use vpsynth_core::codegen::{decisions_for, generate_code, sample_masked, UniformCode};
use vpsynth_core::dataset::{
    self, oracle_spec, reference_targets, structure_sketch, task_oracle, DatasetConfig,
    SpecDataset, SpecEntry,
};
use vpsynth_core::dsl::{Ast, Domain};
use vpsynth_core::emulator::{execute, solves, DEFAULT_STEP_LIMIT};
use vpsynth_core::evaluation::{
    check_objectives, synthesize, Models, ObjectiveConfig, SuccessMetricConfig, SynthConfig,
    Variant,
};
use vpsynth_core::fixtures::{hoc_example, karel_example, real_world_specs};
use vpsynth_core::policies::{gradient_check, random_episodes};
use vpsynth_core::rng;
use vpsynth_core::scoring::score;
use vpsynth_core::symexec::{SymState, NDECISIONS};
use vpsynth_core::world::{Grid, Puzzle, Task, TaskSpec};

fn report(n: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr().lock(),
        "criterion {n}: {verdict} {title} :: {detail}"
    );
}

// ------------------------------------------------------------------ 1

#[test]
fn criterion_1_worked_example_objectives() {
    let t = Instant::now();
    let mut mismatches = Vec::new();
    let mut rows = 0;
    for ex in [hoc_example(), karel_example()] {
        for o in &ex.outputs {
            let r = check_objectives(
                &ex.spec,
                &o.task,
                Some(&o.code),
                &ObjectiveConfig::default(),
            );
            rows += 1;
            if r.row() != o.expected {
                mismatches.push(format!(
                    "{}/{} got {:?} want {:?}",
                    ex.name,
                    o.technique,
                    r.row(),
                    o.expected
                ));
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = mismatches.is_empty() && elapsed < Duration::from_secs(300);
    report(
        1,
        "worked-example objective tables",
        pass,
        &format!(
            "{rows} rows, {} mismatches, {elapsed:.1?}",
            mismatches.len()
        ),
    );
    assert!(pass, "{mismatches:?} in {elapsed:?}");
}

// ------------------------------------------------------------------ 2

fn random_spec(domain: Domain, r: &mut rng::Rng) -> TaskSpec {
    let buckets: Vec<(u32, u32)> = reference_targets(domain).into_iter().map(|b| b.0).collect();
    loop {
        let b = buckets[r.gen_range(0..buckets.len())];
        let shapes = dataset::structures(domain, b);
        if shapes.is_empty() {
            continue;
        }
        let s = &shapes[r.gen_range(0..shapes.len())];
        let sketch = structure_sketch(domain, s);
        let size = r.gen_range(1..=dataset::MAX_SPEC_SIZE);
        let mut spec = TaskSpec::new(sketch, size);
        // smaller grids exercise walls and edges more often
        let side = [6, 8, 12, 16][r.gen_range(0..4)];
        spec.puzzle = Grid::unknown(side, side);
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

#[test]
fn criterion_2_symbolic_execution_soundness() {
    const PAIRS: usize = 10_000;
    let mut details = Vec::new();
    let mut violations = 0;
    for domain in Domain::ALL {
        let mut r = rng::seeded(0x5e_c0de ^ domain as u64);
        let (mut generated, mut puzzles) = (0, 0);
        for _ in 0..PAIRS {
            let spec = random_spec(domain, &mut r);
            let Ok(g) = generate_code(&spec, &mut UniformCode, &mut r) else {
                continue;
            };
            generated += 1;
            let mut state = SymState::new(&g.code, &spec);
            while state.pending.is_some() {
                let d = sample_masked(&[0.0; NDECISIONS], &state.legal(), &mut r)
                    .expect("legal decision");
                state.apply(d).expect("legal decisions apply");
            }
            let Some(puzzle) = state.puzzle() else {
                continue;
            };
            puzzles += 1;
            let run = execute(&g.code, &puzzle, DEFAULT_STEP_LIMIT);
            if !run.solved || run.state.trace != state.trace() {
                violations += 1;
            }
        }
        details.push(format!(
            "{}: {generated} codes, {puzzles} puzzles",
            domain.name()
        ));
        assert_eq!(generated, PAIRS, "code generation never dead-ends");
    }
    let pass = violations == 0;
    report(
        2,
        "symbolic execution soundness",
        pass,
        &format!("{}; {violations} violations", details.join("; ")),
    );
    assert!(pass);
}

// ------------------------------------------------------------------ 3

struct ScoreFixture {
    name: &'static str,
    task: Task,
    code: &'static str,
    /// Hand-derived total.
    total: f64,
    /// Hand-derived component values that explain the total: (name, value).
    parts: Vec<(&'static str, f64)>,
}

fn maze(g: &str, size: u32) -> Task {
    Task {
        puzzle: Puzzle::Maze(Grid::parse(g).unwrap()),
        store: Domain::HocMaze.block_kinds(),
        size,
    }
}

fn karel(pre: &str, post: &str, size: u32) -> Task {
    let puzzle = Puzzle::Karel {
        pre: Grid::parse(pre).unwrap(),
        post: Grid::parse(post).unwrap(),
    };
    Task {
        puzzle,
        store: Domain::Karel.block_kinds(),
        size,
    }
}

// qual(moves, turns, segments, long segments, turn segments; n)
//   = 3/4 * 1/4 * (min(m/2n,1) + min(t/n,1) + min(s/(n/2),1) + min(l/(n/3),1))
//     + 1/4 * (1 - min(ts/(n/2),1))
// HoC total = (cov + qual) / 2, Karel total = (cov + qual + cutqual) / 3, when
// every gate holds (cov = sol = nocross = nocut = notred = 1), else 0.
fn score_fixtures() -> Vec<ScoreFixture> {
    vec![
        // 4 moves, one run of 4 (a segment), n = 5: qual = 0.1875 * (0.4 + 0.4) + 0.25
        ScoreFixture {
            name: "hoc corridor",
            task: maze(">...x\n", 5),
            code: "def Run(){RepeatUntil(goal){move}}",
            total: 0.5 * 1.0 + 0.5 * 0.4,
            parts: vec![("cov", 1.0), ("qual", 0.4), ("nocross", 1.0)],
        },
        // move move turnLeft move move, n = 5: qual = 0.1875 * (0.4 + 0.2) + 0.25 = 0.3625
        ScoreFixture {
            name: "hoc corner",
            task: maze("#####\n#x..#\n###.#\n###^#\n#####\n", 6),
            code: "def Run(){RepeatUntil(goal){If(pathAhead){move} Else{turnLeft}}}",
            total: 0.5 + 0.5 * 0.3625,
            parts: vec![("cov", 1.0), ("qual", 0.3625)],
        },
        // 7 moves in one run (segment and long segment), n = 8:
        // qual = 0.1875 * (7/16 + 1/4 + 3/8) + 0.25 = 0.44921875
        ScoreFixture {
            name: "hoc long corridor",
            task: maze(">......x\n", 5),
            code: "def Run(){RepeatUntil(goal){move}}",
            total: 0.5 + 0.5 * 0.44921875,
            parts: vec![("qual", 0.44921875)],
        },
        // the Else branch never runs: 4 of 5 blocks executed
        ScoreFixture {
            name: "hoc uncovered branch",
            task: maze(">...x\n", 6),
            code: "def Run(){RepeatUntil(goal){If(pathAhead){move} Else{turnLeft}}}",
            total: 0.0,
            parts: vec![("cov", 0.8), ("sol", 1.0), ("qual", 0.4)],
        },
        // loops the ring and re-enters the start cell: 8 of 9 visited cells once
        ScoreFixture {
            name: "hoc crossing",
            task: maze("#####\n#...#\n#.#.#\n#.>.#\n##x##\n", 15),
            code: "def Run(){move; turnLeft; move; move; turnLeft; move; move; turnLeft; move; move; turnLeft; \
                   move; turnRight; move}",
            total: 0.0,
            parts: vec![("nocross", 8.0 / 9.0), ("sol", 1.0), ("cov", 1.0)],
        },
        // turnLeft; move (2 actions) fits under the 5-block code: a shortcut.
        // n = 2: qual = 0.1875 * (1/4 + 1/2) + 0.25 = 0.390625
        ScoreFixture {
            name: "hoc shortcut",
            task: maze("x.\n>#\n", 6),
            code: "def Run(){RepeatUntil(goal){If(pathAhead){move} Else{turnLeft}}}",
            total: 0.0,
            parts: vec![("nocut", 0.0), ("cov", 1.0), ("sol", 1.0), ("qual", 0.390625)],
        },
        ScoreFixture {
            name: "hoc stops short",
            task: maze(">.x\n", 5),
            code: "def Run(){move}",
            total: 0.0,
            parts: vec![("sol", 0.0), ("cov", 1.0)],
        },
        // 3 moves then a pick; n = 5: qual = cutqual = 0.1875 * 0.3 + 0.25 = 0.30625
        ScoreFixture {
            name: "karel fetch",
            task: karel(">..1.\n", ".....\n", 6),
            code: "def Run(){While(no-markerPresent){move}; pickMarker}",
            total: (1.0 + 0.30625 + 0.30625) / 3.0,
            parts: vec![("qual", 0.30625), ("cutqual", 0.30625)],
        },
        // trace: 4 moves (qual 0.325); shortest basic path: 4 puts, 3 moves (cutqual 0.30625)
        ScoreFixture {
            name: "karel plant",
            task: karel(">....\n", "1111.\n", 6),
            code: "def Run(){Repeat(4){putMarker; move}}",
            total: (1.0 + 0.325 + 0.30625) / 3.0,
            parts: vec![("qual", 0.325), ("cutqual", 0.30625)],
        },
        // 7 moves in one run then a pick, n = 8: qual = cutqual = 0.44921875
        ScoreFixture {
            name: "karel long run",
            task: karel(">......1\n", "........\n", 6),
            code: "def Run(){While(pathAhead){move}; pickMarker}",
            total: (1.0 + 2.0 * 0.44921875) / 3.0,
            parts: vec![("qual", 0.44921875), ("cutqual", 0.44921875)],
        },
        // move move turnRight move move pick, n = 3: qual = 0.1875 * (4/6 + 1/3) + 0.25 = 0.4375
        ScoreFixture {
            name: "karel corner",
            task: karel(">..\n##.\n##1\n", "...\n##.\n##.\n", 8),
            code: "def Run(){While(pathAhead){move}; turnRight; While(pathAhead){move}; pickMarker}",
            total: (1.0 + 0.4375 + 0.4375) / 3.0,
            parts: vec![("qual", 0.4375), ("cutqual", 0.4375)],
        },
        // the If body never runs: 4 of 5 blocks executed
        ScoreFixture {
            name: "karel uncovered branch",
            task: karel(">....\n", ".....\n", 6),
            code: "def Run(){While(pathAhead){If(markerPresent){pickMarker}; move}}",
            total: 0.0,
            parts: vec![("cov", 0.8), ("sol", 1.0)],
        },
        // move; pickMarker is a 2-action shortcut for a 4-block code.
        // n = 4: cutqual = 0.1875 * 1/8 + 0.25 = 0.2734375
        ScoreFixture {
            name: "karel shortcut",
            task: karel(">1..\n", "....\n", 6),
            code: "def Run(){While(no-markerPresent){move}; pickMarker}",
            total: 0.0,
            parts: vec![("nocut", 0.0), ("sol", 1.0), ("cutqual", 0.2734375)],
        },
    ]
}

#[test]
fn criterion_3_scoring_golden_fixtures() {
    let mut failures = Vec::new();
    let fixtures = score_fixtures();
    for f in &fixtures {
        let code = Ast::parse(f.code, f.task.domain()).unwrap();
        let r = score(&f.task, &code);
        let mut check = |what: &str, got: f64, want: f64| {
            if (got - want).abs() > 1e-12 {
                failures.push(format!("{}: {what} = {got}, expected {want}", f.name));
            }
        };
        check("total", r.total, f.total);
        for &(part, want) in &f.parts {
            let got = match part {
                "cov" => r.cov,
                "sol" => r.sol,
                "nocross" => r.nocross,
                "nocut" => r.nocut,
                "notred" => r.notred,
                "qual" => r.qual,
                "cutqual" => r.cutqual,
                _ => unreachable!(),
            };
            check(part, got, want);
        }
        // any failing gate zeroes the total; all gates passing gives the weighted sum
        let gates = [r.cov, r.sol, r.nocross, r.nocut, r.notred];
        if gates.iter().any(|&g| g < 1.0) != (r.total == 0.0)
            || r.indicator_passed == (r.total == 0.0)
        {
            failures.push(format!("{}: gate semantics violated ({r:?})", f.name));
        }
    }
    let per_domain: Vec<usize> = Domain::ALL
        .iter()
        .map(|d| fixtures.iter().filter(|f| f.task.domain() == *d).count())
        .collect();
    let pass = failures.is_empty() && per_domain.iter().all(|&n| n >= 5);
    report(
        3,
        "scoring golden fixtures",
        pass,
        &format!(
            "{per_domain:?} fixtures per domain, {} failures",
            failures.len()
        ),
    );
    assert!(pass, "{failures:#?}");
}

// ------------------------------------------------------------------ 4

#[test]
fn criterion_4_gradient_correctness() {
    const POINTS: u64 = 100;
    let cases = [
        (
            Domain::HocMaze,
            "def Run(){move; RepeatUntil(goal){If(pathLeft){turnLeft}; move}}",
            "def Run(){a; RepeatUntil(goal){a; If(b){a}; a}; a}",
        ),
        (
            Domain::Karel,
            "def Run(){While(pathAhead){If(markerPresent){pickMarker}; move}; putMarker}",
            "def Run(){a; While(b){a; If(b){a}; a}; a}",
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for (domain, code, sketch) in cases {
        let code = Ast::parse(code, domain).unwrap();
        let spec = TaskSpec::new(
            vpsynth_core::dsl::Sketch::parse(sketch, domain).unwrap(),
            10,
        );
        let decisions = decisions_for(&spec, &code).unwrap();
        let mut small = spec.clone();
        small.puzzle = Grid::unknown(8, 8);
        // the loss is evaluated at a fresh random parameter point for every seed
        for seed in 0..POINTS / 2 {
            let episodes = random_episodes(&code, &small, 2, seed);
            let g = gradient_check(&decisions, &episodes, domain, 1000 + seed, 1e-6);
            worst = worst.max(g.max());
            // a NaN counts as a failure
            let ok = g.max() < 1e-4;
            bad += usize::from(!ok);
        }
    }
    let pass = bad == 0;
    report(
        4,
        "gradient correctness",
        pass,
        &format!("{POINTS} points, worst relative error {worst:.2e}"),
    );
    assert!(pass);
}

// ------------------------------------------------------------------ 5, 6, 8

const MINI_SPECS: usize = 200;
const MINI_ROLLOUTS: usize = 300;
const SEEDS: [u64; 3] = [0, 1, 2];

struct Desk {
    ds: SpecDataset,
    trained: Vec<Trained>,
    build: Duration,
    train: Duration,
}

fn build_desk(domain: Domain) -> Desk {
    let pool = pipeline::pool(0);
    let t = Instant::now();
    let cfg = DatasetConfig {
        oracle_rollouts: MINI_ROLLOUTS,
        seed: 0,
        ..DatasetConfig::default()
    };
    let ds = pipeline::build_dataset(
        domain,
        &pipeline::scaled_targets(domain, MINI_SPECS),
        &cfg,
        &pool,
    )
    .unwrap();
    let build = t.elapsed();
    let t = Instant::now();
    let train_set = ds.part(&ds.split.train);
    let trained = SEEDS
        .iter()
        .map(|&s| pipeline::train(&train_set, &TrainSettings::desk(s)).unwrap())
        .collect();
    Desk {
        ds,
        trained,
        build,
        train: t.elapsed(),
    }
}

fn desk(domain: Domain) -> &'static Desk {
    static HOC: OnceLock<Desk> = OnceLock::new();
    static KAREL: OnceLock<Desk> = OnceLock::new();
    match domain {
        Domain::HocMaze => HOC.get_or_init(|| build_desk(domain)),
        Domain::Karel => KAREL.get_or_init(|| build_desk(domain)),
    }
}

fn held_out(ds: &SpecDataset) -> Vec<(usize, &SpecEntry)> {
    ds.split
        .val
        .iter()
        .chain(&ds.split.test)
        .map(|&i| (i, &ds.specs[i]))
        .collect()
}

fn metric() -> SuccessMetricConfig {
    SuccessMetricConfig {
        oracle_rollouts: MINI_ROLLOUTS,
        ..SuccessMetricConfig::default()
    }
}

fn run_variant(
    desk: &Desk,
    k: usize,
    variant: Variant,
    c: usize,
    p: usize,
    cache: &OracleCache,
) -> Vec<Outcome> {
    let t = &desk.trained[k];
    let models = Models {
        code: Some(&t.code),
        puzzle: Some(&t.puzzle),
    };
    let synth = SynthConfig {
        c,
        p,
        oracle_rollouts: MINI_ROLLOUTS,
        seed: SEEDS[k],
        ..SynthConfig::default()
    };
    let pool = pipeline::pool(0);
    pipeline::evaluate(
        &held_out(&desk.ds),
        variant,
        &models,
        &synth,
        &metric(),
        cache,
        &pool,
    )
    .unwrap()
}

#[test]
fn criterion_5_learned_beats_base() {
    let mut lines = Vec::new();
    let mut pass = true;
    for domain in Domain::ALL {
        let d = desk(domain);
        let cache = OracleCache::default();
        let mut neur = Vec::new();
        let mut base = Vec::new();
        for k in 0..SEEDS.len() {
            neur.push(pipeline::success_rate(&run_variant(
                d,
                k,
                Variant::NeurTaskSyn,
                5,
                10,
                &cache,
            )));
            base.push(pipeline::success_rate(&run_variant(
                d,
                k,
                Variant::BaseTaskSyn,
                5,
                10,
                &cache,
            )));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (n, b) = (mean(&neur), mean(&base));
        let ok = n > b && n - b >= 0.15;
        pass &= ok;
        lines.push(format!(
            "{}: neur {n:.3} {neur:?} vs base {b:.3} {base:?} on {} held-out specs (dataset {:.0?}, training {:.0?})",
            domain.name(),
            held_out(&d.ds).len(),
            d.build,
            d.train
        ));
    }
    report(5, "learned vs base at desk scale", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_6_rollout_monotonicity() {
    let mut lines = Vec::new();
    let mut pass = true;
    for domain in Domain::ALL {
        let d = desk(domain);
        let cache = OracleCache::default();
        for variant in [Variant::NeurTaskSyn, Variant::BaseTaskSyn] {
            for k in 0..SEEDS.len() {
                let rates: Vec<f64> = [1, 5, 10, 100]
                    .iter()
                    .map(|&p| pipeline::success_rate(&run_variant(d, k, variant, 5, p, &cache)))
                    .collect();
                let ok = rates.windows(2).all(|w| w[1] >= w[0]);
                pass &= ok;
                lines.push(format!(
                    "{} {} seed {k}: {rates:?}",
                    domain.name(),
                    variant.name()
                ));
            }
        }
    }
    report(6, "success nondecreasing in p", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_8_real_world_specs() {
    let specs = real_world_specs();
    let mut per_seed = Vec::new();
    let mut pass = true;
    for (k, &seed) in SEEDS.iter().enumerate() {
        let mut solved = 0;
        for s in &specs {
            let d = desk(s.spec.domain);
            let t = &d.trained[k];
            let models = Models {
                code: Some(&t.code),
                puzzle: Some(&t.puzzle),
            };
            let cfg = SynthConfig {
                c: 10,
                p: 100,
                seed,
                ..SynthConfig::default()
            };
            let out = synthesize(&s.spec, Variant::NeurTaskSyn, &models, None, &cfg).unwrap();
            if out
                .task
                .as_ref()
                .is_some_and(|task| solves(&out.code, task))
            {
                solved += 1;
            }
        }
        pass &= solved >= 9;
        per_seed.push(solved);
    }
    let mean = per_seed.iter().sum::<usize>() as f64 / (10.0 * per_seed.len() as f64);
    report(
        8,
        "real-world specifications",
        pass,
        &format!("solved per seed {per_seed:?} of 10, mean {mean:.2}"),
    );
    assert!(pass);
}

// ------------------------------------------------------------------ 7

/// Oracle rollouts per candidate for the full-size build.
const FULL_ROLLOUTS: usize = 100;

#[test]
fn criterion_7_full_dataset_builder() {
    let mut lines = Vec::new();
    let mut pass = true;
    let pool = pipeline::pool(0);
    for (domain, expected) in [(Domain::HocMaze, 1016), (Domain::Karel, 1027)] {
        let targets = reference_targets(domain);
        let cfg = DatasetConfig {
            oracle_rollouts: FULL_ROLLOUTS,
            seed: 0,
            ..DatasetConfig::default()
        };
        let t = Instant::now();
        let ds = pipeline::build_dataset(domain, &targets, &cfg, &pool).unwrap();
        let elapsed = t.elapsed();
        let n = ds.specs.len();
        let mut problems = Vec::new();
        if n != expected {
            problems.push(format!("{n} specs"));
        }
        for &(b, want) in &targets {
            let got = ds.specs.iter().filter(|e| e.bucket == b).count();
            if got != want {
                problems.push(format!("bucket {b:?}: {got} != {want}"));
            }
        }
        let sp = &ds.split;
        for (part, share) in [(&sp.train, 0.8), (&sp.val, 0.1), (&sp.test, 0.1)] {
            if (part.len() as f64 - share * n as f64).abs() >= 1.0 {
                problems.push(format!("split part of {} for share {share}", part.len()));
            }
        }
        let mut all: Vec<usize> = sp
            .train
            .iter()
            .chain(&sp.val)
            .chain(&sp.test)
            .copied()
            .collect();
        all.sort_unstable();
        if all != (0..n).collect::<Vec<_>>() {
            problems.push("split is not a partition".into());
        }
        for (i, e) in ds.specs.iter().enumerate() {
            // re-derive the oracle score from the exemplar alone
            let o = task_oracle(
                &e.exemplar,
                &oracle_spec(&e.exemplar),
                FULL_ROLLOUTS,
                cfg.seed,
            );
            let solved = o.task.as_ref().is_some_and(|t| solves(&e.exemplar, t));
            let fits =
                e.exemplar.nblock() <= e.spec.size && decisions_for(&e.spec, &e.exemplar).is_ok();
            if !(o.score > 0.0 && o.score == e.oracle_score && solved && fits) {
                problems.push(format!(
                    "spec {i}: oracle {} vs recorded {}",
                    o.score, e.oracle_score
                ));
            }
        }
        pass &= problems.is_empty();
        lines.push(format!(
            "{}: {n} specs, split {}/{}/{}, built in {elapsed:.1?} at {FULL_ROLLOUTS} oracle rollouts{}",
            domain.name(),
            sp.train.len(),
            sp.val.len(),
            sp.test.len(),
            if problems.is_empty() { String::new() } else { format!(", problems: {problems:?}") }
        ));
    }
    report(7, "full-size dataset builder", pass, &lines.join("; "));
    assert!(pass);
}
