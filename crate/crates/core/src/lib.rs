//! Neuro-symbolic synthesis of grid-world programming tasks.
//!
//! Given a task specification (a partially initialised grid, a code sketch with
//! typed holes, fill constraints and a size bound) the engine first completes the
//! sketch into a concrete code and then symbolically executes that code over the
//! partial grid to instantiate a puzzle the code solves. Both stages are driven by
//! a decision policy, either uniform (the base symbolic engines) or learned.
//!
//! The crate is `no_std` with `alloc`; file formats, checkpoints and the command
//! line live in the companion `vpsynth` crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod codegen;
pub mod dataset;
pub mod dsl;
pub mod emulator;
pub mod evaluation;
pub mod fixtures;
pub mod math;
pub mod nn;
pub mod policies;
pub mod rng;
pub mod scoring;
pub mod search;
pub mod symexec;
pub mod world;

pub use dsl::{Action, Ast, Block, BlockKind, CodeAttributes, Cond, Delta, Domain, Sketch};
pub use emulator::{execute, solves, RunResult, Status};
pub use scoring::{score, ScoreReport};
pub use world::{Cell, Dir, Grid, Pose, Puzzle, Task, TaskSpec};
