use proptest::prelude::*;

use vpsynth_core::codegen::{decisions_for, generate_code, UniformCode};
use vpsynth_core::dataset::{reference_targets, structure_sketch, structures};
use vpsynth_core::dsl::{Ast, Domain};
use vpsynth_core::emulator::{execute, solves, DEFAULT_STEP_LIMIT};
use vpsynth_core::evaluation::validity;
use vpsynth_core::rng;
use vpsynth_core::scoring::score;
use vpsynth_core::symexec::{generate_puzzle, UniformPuzzle};
use vpsynth_core::world::{Grid, TaskSpec};

use rand::Rng;

/// A spec drawn from the dataset structures of `domain`, with a small grid.
fn spec_from(domain: Domain, seed: u64) -> TaskSpec {
    let mut r = rng::seeded(seed);
    let buckets: Vec<(u32, u32)> = reference_targets(domain)
        .into_iter()
        .filter(|b| b.1 > 0)
        .map(|b| b.0)
        .collect();
    loop {
        let shapes = structures(domain, buckets[r.gen_range(0..buckets.len())]);
        let s = &shapes[r.gen_range(0..shapes.len())];
        let mut spec = TaskSpec::new(structure_sketch(domain, s), r.gen_range(1..=17));
        spec.puzzle = Grid::unknown(8, 8);
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

fn domain() -> impl Strategy<Value = Domain> {
    prop_oneof![Just(Domain::HocMaze), Just(Domain::Karel)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_codes_complete_their_sketch(d in domain(), seed in any::<u64>()) {
        let spec = spec_from(d, seed);
        let g = generate_code(&spec, &mut UniformCode, &mut rng::seeded(seed ^ 1)).unwrap();
        prop_assert!(g.code.validate().is_ok());
        prop_assert!(g.code.nblock() <= spec.size);
        prop_assert!(spec.sketch.respects(&g.code, &spec.delta));
        prop_assert_eq!(g.code.structure(), spec.sketch.structure());
        // the teacher-forcing decisions replay the same choices
        let replay = decisions_for(&spec, &g.code).unwrap();
        prop_assert_eq!(replay.len(), g.decisions.len());
    }

    #[test]
    fn code_text_round_trips(d in domain(), seed in any::<u64>()) {
        let spec = spec_from(d, seed);
        let code = generate_code(&spec, &mut UniformCode, &mut rng::seeded(seed)).unwrap().code;
        prop_assert_eq!(&Ast::parse(&code.to_text(), d).unwrap(), &code);
        prop_assert_eq!(&Ast::parse(&code.to_compact(), d).unwrap(), &code);
        let json = serde_json::to_string(&code).unwrap();
        prop_assert_eq!(&serde_json::from_str::<Ast>(&json).unwrap(), &code);
    }

    #[test]
    fn generated_tasks_honour_the_spec(d in domain(), seed in any::<u64>()) {
        let spec = spec_from(d, seed);
        let mut r = rng::seeded(seed ^ 2);
        let code = generate_code(&spec, &mut UniformCode, &mut r).unwrap().code;
        let ep = generate_puzzle(&code, &spec, &mut UniformPuzzle, &mut r);
        if let Some(task) = ep.task {
            prop_assert!(task.validate().is_ok());
            prop_assert!(validity(&spec, &task));
            prop_assert!(solves(&code, &task));
            let s = score(&task, &code);
            prop_assert_eq!(s.total, ep.reward);
        } else {
            prop_assert_eq!(ep.reward, 0.0);
        }
    }

    #[test]
    fn scores_are_bounded_and_gated(d in domain(), seed in any::<u64>()) {
        let spec = spec_from(d, seed);
        let mut r = rng::seeded(seed ^ 3);
        let code = generate_code(&spec, &mut UniformCode, &mut r).unwrap().code;
        if let Some(task) = generate_puzzle(&code, &spec, &mut UniformPuzzle, &mut r).task {
            let s = score(&task, &code);
            for v in [s.cov, s.sol, s.nocross, s.nocut, s.notred, s.qual, s.cutqual, s.total] {
                prop_assert!((0.0..=1.0).contains(&v), "{v} out of range in {s:?}");
            }
            let gates = s.cov == 1.0 && s.sol == 1.0 && s.nocross == 1.0 && s.nocut == 1.0 && s.notred == 1.0;
            prop_assert_eq!(gates, s.indicator_passed);
            prop_assert_eq!(s.total > 0.0, s.indicator_passed);
        }
    }

    #[test]
    fn execution_is_deterministic(d in domain(), seed in any::<u64>()) {
        let spec = spec_from(d, seed);
        let mut r = rng::seeded(seed ^ 4);
        let code = generate_code(&spec, &mut UniformCode, &mut r).unwrap().code;
        if let Some(p) = generate_puzzle(&code, &spec, &mut UniformPuzzle, &mut r).puzzle {
            let a = execute(&code, &p, DEFAULT_STEP_LIMIT);
            let b = execute(&code, &p, DEFAULT_STEP_LIMIT);
            prop_assert_eq!(a.state.trace, b.state.trace);
            prop_assert_eq!(a.solved, b.solved);
        }
    }
}
