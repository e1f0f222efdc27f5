//! Worked examples and real-world specifications used by tests and the CLI.
//!
//! The two worked examples pair a specification with the outputs of four
//! techniques and the expected objective values of each output. The grids are
//! reconstructions: hand-drawn 12x12 puzzles on which the listed codes behave
//! as the expected values require.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::structure_sketch;
use crate::dsl::{Action, Ast, BlockKind, Cond, Delta, Domain, Sketch, Structure};
use crate::world::{Grid, Puzzle, Task, TaskSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureOutput {
    pub technique: &'static str,
    pub task: Task,
    pub code: Ast,
    /// `[o1, o2, o3, o4, o5, code solves task]`.
    pub expected: [u8; 6],
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkedExample {
    pub name: &'static str,
    pub spec: TaskSpec,
    pub outputs: Vec<FixtureOutput>,
}

fn grid(text: &str) -> Grid {
    Grid::parse(text).expect("fixture grids parse")
}

fn code(text: &str, domain: Domain) -> Ast {
    Ast::parse(text, domain).expect("fixture codes parse")
}

fn hoc_store() -> alloc::collections::BTreeSet<BlockKind> {
    use BlockKind::*;
    [Move, TurnLeft, TurnRight, RepeatUntil, IfElse]
        .into_iter()
        .collect()
}

fn karel_store() -> alloc::collections::BTreeSet<BlockKind> {
    use BlockKind::*;
    [Move, TurnLeft, TurnRight, PutMarker, PickMarker, While, If]
        .into_iter()
        .collect()
}

const HOC_SPEC: &str = "\
????????####
????????#..#
????????#..#
????????####
????????????
????????????
????????????
????????????
####????????
#..#????????
#..#????????
####????????
";

const HOC_GPT4: &str = "\
############
#########..#
##.x#####..#
##.#########
##.........#
####.#####.#
####.#####.#
####..>....#
####.#####.#
#..#.#####.#
#..#.#####.#
####.......#
";

const HOC_BASE: &str = "\
############
#########..#
#########..#
############
############
############
#x........>#
############
############
#..#########
#..#########
############
";

const HOC_NEUR: &str = "\
############
#########..#
#########..#
############
#######.x###
#######.####
v..###..####
##...#.#####
####...#####
#..#########
#..#########
############
";

const HOC_TUTOR: &str = "\
############
#########..#
#########..#
############
############
######.....#
######.###.#
######x###.#
##########.#
#..#######.#
#..##>.....#
############
";

/// The HoCMaze worked example.
pub fn hoc_example() -> WorkedExample {
    let d = Domain::HocMaze;
    let sketch = Sketch::parse("def Run(){a; RepeatUntil(goal){a; If(b){a} Else{a}; a}}", d)
        .expect("sketch");
    let spec = TaskSpec {
        domain: d,
        puzzle: grid(HOC_SPEC),
        sketch,
        delta: Delta {
            actions: [Action::Move, Action::TurnLeft, Action::TurnRight]
                .into_iter()
                .collect(),
            conds: [Cond::PathAhead, Cond::PathLeft, Cond::PathRight]
                .into_iter()
                .collect(),
            iters: Delta::full(d).iters,
        },
        size: 7,
    };
    let task = |g: &str, size| Task {
        puzzle: Puzzle::Maze(grid(g)),
        store: hoc_store(),
        size,
    };
    let outputs = alloc::vec![
        FixtureOutput {
            technique: "GPT4TaskSyn",
            task: task(HOC_GPT4, 7),
            code: code(
                "def Run(){RepeatUntil(goal){If(pathLeft){turnLeft; move} Else{move}}}",
                d
            ),
            expected: [1, 1, 0, 0, 0, 0],
        },
        FixtureOutput {
            technique: "BaseTaskSyn",
            task: task(HOC_BASE, 7),
            code: code(
                "def Run(){turnLeft; turnLeft; RepeatUntil(goal){If(pathRight){move} Else{move}}}",
                d
            ),
            expected: [1, 1, 0, 0, 0, 1],
        },
        FixtureOutput {
            technique: "NeurTaskSyn",
            task: task(HOC_NEUR, 7),
            code: code(
                "def Run(){RepeatUntil(goal){If(pathRight){turnRight} Else{turnLeft; move}; move}}",
                d
            ),
            expected: [1, 1, 1, 1, 1, 1],
        },
        FixtureOutput {
            technique: "Tutor",
            task: task(HOC_TUTOR, 5),
            code: code(
                "def Run(){RepeatUntil(goal){If(pathAhead){move} Else{turnLeft}}}",
                d
            ),
            expected: [1, 1, 1, 1, 1, 1],
        },
    ];
    WorkedExample {
        name: "hoc-maze",
        spec,
        outputs,
    }
}

fn karel(pre: &str, post: &str) -> Puzzle {
    Puzzle::Karel {
        pre: grid(pre),
        post: grid(post),
    }
}

const KAREL_GPT4_PRE: &str = "\
............
............
>..1.1..1...
............
............
............
............
............
........###.
........#.#.
........###.
............
";

const KAREL_GPT4_POST: &str = "\
............
............
............
............
............
............
............
............
........###.
........#1#.
........###.
............
";

const KAREL_BASE_PRE: &str = "\
############
############
############
############
############
####.1######
####.1A#####
######.#####
############
############
############
############
@A > 1
";

const KAREL_BASE_POST: &str = "\
############
############
############
############
############
####..######
####...#####
######.#####
############
############
############
############
";

const KAREL_NEUR_PRE: &str = "\
############
############
############
############
############
###..###.###
#A1111111.##
############
############
############
############
############
@A > 1
";

const KAREL_NEUR_POST: &str = "\
############
############
############
############
############
###..###.###
#..11...1.##
############
############
############
############
############
";

const KAREL_TUTOR_PRE: &str = "\
############
############
############
############
############
#####...####
####..######
###.1#######
##..########
#.1#########
#A##########
############
@A > 1
";

const KAREL_TUTOR_POST: &str = "\
############
############
############
############
############
#####...####
####..######
###..#######
##..########
#..#########
#.##########
############
";

/// The Karel worked example.
pub fn karel_example() -> WorkedExample {
    let d = Domain::Karel;
    let sketch = Sketch::parse("def Run(){a; While(b){a; If(b){a}; a}; a}", d).expect("sketch");
    let spec = TaskSpec {
        domain: d,
        puzzle: Grid::unknown(12, 12),
        sketch,
        delta: Delta::full(d),
        size: 10,
    };
    let task = |p: Puzzle, size| Task {
        puzzle: p,
        store: karel_store(),
        size,
    };
    let outputs = alloc::vec![
        FixtureOutput {
            technique: "GPT4TaskSyn",
            task: task(karel(KAREL_GPT4_PRE, KAREL_GPT4_POST), 10),
            code: code("def Run(){While(pathAhead){If(markerPresent){pickMarker}; move}}", d),
            expected: [1, 0, 0, 0, 0, 0],
        },
        FixtureOutput {
            technique: "BaseTaskSyn",
            task: task(karel(KAREL_BASE_PRE, KAREL_BASE_POST), 10),
            code: code(
                "def Run(){While(no-pathAhead){If(pathRight){pickMarker}; turnRight; turnRight; move; turnLeft}; \
                 pickMarker; move}",
                d,
            ),
            expected: [1, 1, 0, 1, 1, 1],
        },
        FixtureOutput {
            technique: "NeurTaskSyn",
            task: task(karel(KAREL_NEUR_PRE, KAREL_NEUR_POST), 7),
            code: code("def Run(){While(pathAhead){pickMarker; If(pathLeft){putMarker}; move}; turnRight}", d),
            expected: [1, 1, 1, 1, 1, 1],
        },
        FixtureOutput {
            technique: "Tutor",
            task: task(karel(KAREL_TUTOR_PRE, KAREL_TUTOR_POST), 8),
            code: code(
                "def Run(){While(no-pathAhead){If(markerPresent){pickMarker}; turnLeft; move; turnRight; move}}",
                d,
            ),
            expected: [1, 1, 1, 1, 1, 1],
        },
    ];
    WorkedExample {
        name: "karel",
        spec,
        outputs,
    }
}

/// A real-world specification: structure, domain and source task name.
#[derive(Clone, Debug, PartialEq)]
pub struct RealWorldSpec {
    pub name: String,
    pub source: &'static str,
    pub spec: TaskSpec,
}

/// The ten real-world specifications: empty 16x16 grid, all fills, at most 10 blocks.
pub fn real_world_specs() -> Vec<RealWorldSpec> {
    let rows: [(&str, Domain, &str); 10] = [
        ("{Run{Repeat}}", Domain::HocMaze, "HoC:Maze9"),
        ("{Run{RepeatUntil}}", Domain::HocMaze, "HoC:Maze13"),
        ("{Run{Repeat;Repeat}}", Domain::HocMaze, "HoC:Maze8"),
        ("{Run{RepeatUntil{IfElse}}}", Domain::HocMaze, "HoC:Maze18"),
        ("{Run{RepeatUntil{If;If}}}", Domain::HocMaze, "HoC:Maze20"),
        ("{Run}", Domain::Karel, "Karel:OurFirst"),
        ("{Run{While}}", Domain::Karel, "Karel:Diagonal"),
        ("{Run{While;While}}", Domain::Karel, "Karel:RowBack"),
        ("{Run{While{If}}}", Domain::Karel, "Karel:Stairway"),
        ("{Run{While{Repeat}}}", Domain::Karel, "Karel:CleanAll"),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(s, d, source))| {
            let structure = Structure::parse(s).expect("structure");
            RealWorldSpec {
                name: alloc::format!("psi{i}"),
                source,
                spec: TaskSpec::new(structure_sketch(d, &structure), 10),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::solves;

    #[test]
    fn fixtures_are_well_formed() {
        for ex in [hoc_example(), karel_example()] {
            assert!(ex.spec.validate().is_ok());
            for o in &ex.outputs {
                assert!(o.task.validate().is_ok(), "{} {}", ex.name, o.technique);
                assert!(o.code.validate().is_ok());
                assert_eq!(o.task.puzzle.start().rows, 12);
                assert_eq!(
                    solves(&o.code, &o.task),
                    o.expected[5] == 1,
                    "{} {}",
                    ex.name,
                    o.technique
                );
            }
        }
    }

    #[test]
    fn real_world_specs_are_valid() {
        let specs = real_world_specs();
        assert_eq!(specs.len(), 10);
        for s in &specs {
            assert!(s.spec.validate().is_ok(), "{}", s.name);
            assert_eq!(s.spec.puzzle.rows, 16);
        }
        assert_eq!(
            specs[3].spec.sketch.to_text(),
            "def Run(){a; RepeatUntil(goal){a; If(b){a} Else{a}; a}}"
        );
    }
}
