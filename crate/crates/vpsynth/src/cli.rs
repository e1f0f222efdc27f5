//! The `vpsynth` command line.
//!
//! Exit codes: 0 success, 1 synthesis or generation failed, 2 usage error,
//! 3 unreadable or malformed input and failed writes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use vpsynth_core::dataset::{self, DatasetConfig, DatasetError};
use vpsynth_core::dsl::{Ast, Domain};
use vpsynth_core::evaluation::{
    self, Models, SuccessMetricConfig, SynthConfig, SynthError, Variant,
};
use vpsynth_core::policies::{
    self, CodeModelConfig, PuzzleModelConfig, PuzzleTrainItem, TrainConfig, TrainError,
};
use vpsynth_core::rng;
use vpsynth_core::symexec::generate_puzzle;
use vpsynth_core::world::{Task, TaskSpec};

use crate::checkpoint::{self, CheckpointError};
use crate::io::{self, GridFile, IoError};
use crate::pipeline::{self, OracleCache, TrainSettings};
use crate::tables::{self, CurveRow};
use crate::{datadir, render};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn ckpt_err(path: &Path) -> impl Fn(CheckpointError) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Codegen(_) => CliError::Failed(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Io(format!("training data unusable: {e}"))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Failed(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "vpsynth",
    version,
    about = "Task synthesis for grid-world visual programming domains"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Domain for text-form codes and new datasets (hoc or karel).
    #[arg(long, global = true, value_parser = parse_domain)]
    pub domain: Option<Domain>,
    /// Seed for every random choice; equal seeds give identical outputs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

fn parse_domain(s: &str) -> Result<Domain, String> {
    Domain::from_name(s).ok_or_else(|| format!("unknown domain `{s}` (expected hoc or karel)"))
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
        format!(
            "unknown variant `{s}` (expected neur, base or one of {})",
            names.join(", ")
        )
    })
}

/// Bucket targets given on the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketList(pub Vec<((u32, u32), usize)>);

fn parse_bucket_list(s: &str) -> Result<BucketList, String> {
    s.split(',')
        .map(|item| {
            let bad = || format!("bad bucket `{item}` (expected K-D=COUNT, e.g. 2-1=30)");
            let (b, n) = item.trim().split_once('=').ok_or_else(bad)?;
            let (k, d) = b.split_once('-').ok_or_else(bad)?;
            Ok((
                (k.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?),
                n.parse().map_err(|_| bad())?,
            ))
        })
        .collect::<Result<_, _>>()
        .map(BucketList)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Part {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize one task and solution code for a specification.
    Synthesize {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "neur", value_parser = parse_variant)]
        variant: Variant,
        /// Code rollouts.
        #[arg(short = 'c', default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        c: u64,
        /// Puzzle rollouts per code.
        #[arg(short = 'p', default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        p: u64,
        #[arg(long)]
        code_model: Option<PathBuf>,
        #[arg(long)]
        puzzle_model: Option<PathBuf>,
        /// Fixed solution code for the puzzle-only variants.
        #[arg(long)]
        code: Option<PathBuf>,
        /// Puzzle rollouts of the oracle behind the code-only variants.
        #[arg(long, default_value_t = 10_000)]
        oracle_rollouts: usize,
    },
    /// Imitation-train the code model on a dataset directory.
    TrainCode {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        no_augment: bool,
    },
    /// Train the puzzle model with reinforcement learning on a dataset directory.
    TrainPuzzle {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Build a specification dataset.
    Dataset {
        /// Bucket targets as K-D=COUNT pairs, e.g. `1-0=20,2-1=30`.
        #[arg(long, value_parser = parse_bucket_list, conflicts_with = "size")]
        buckets: Option<BucketList>,
        /// Total specs, spread over buckets like the reference dataset.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        rollouts: usize,
        #[arg(long, default_value_t = 0.3)]
        min_qual: f64,
        #[arg(long, default_value_t = 12)]
        max_code_size: u32,
        #[arg(long, default_value_t = 200)]
        attempts: usize,
    },
    /// Best-of-p uniform puzzle rollouts for a code.
    Oracle {
        #[arg(long)]
        code: PathBuf,
        /// Specification to respect; defaults to the code's own sketch and size.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(short = 'p', default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        p: u64,
    },
    /// Run variants over a dataset and write the results table.
    Evaluate {
        #[arg(long)]
        specs: PathBuf,
        /// Directories holding `code.ckpt` and `puzzle.ckpt`, one per training seed.
        #[arg(long, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        /// Comma-separated variants; all six by default, the baselines without checkpoints.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
        variants: Vec<Variant>,
        /// Runs without checkpoints (baselines only) when no checkpoint is given.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, value_enum, default_value_t = Part::Test)]
        split: Part,
        #[arg(short = 'c', default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        c: u64,
        #[arg(short = 'p', default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        p: u64,
        #[arg(long, default_value_t = 10_000)]
        oracle_rollouts: usize,
    },
    /// Draw a task, puzzle, spec or grid file as monospace text or SVG.
    Render {
        file: PathBuf,
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl TrainArgs {
    fn apply(&self, mut cfg: TrainConfig, seed: u64) -> Result<TrainConfig, CliError> {
        cfg.seed = seed;
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(CliError::Usage(format!("--lr must be positive, got {lr}")));
            }
            cfg.lr = lr;
        }
        if let Some(b) = self.batch_size {
            if b == 0 {
                return Err(CliError::Usage("--batch-size must be at least 1".into()));
            }
            cfg.batch_size = b;
        }
        Ok(cfg)
    }
}

/// Record written by `synthesize`.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SynthesisRecord<'a> {
    variant: &'static str,
    seed: u64,
    c: usize,
    p: usize,
    spec: &'a TaskSpec,
    task: Option<&'a Task>,
    code: &'a Ast,
    code_text: String,
    score: Option<&'a vpsynth_core::scoring::ScoreReport>,
    total: f64,
    no_candidate: bool,
    code_rollout: usize,
    puzzle_rollout: usize,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
                return EXIT_OK;
            }
            let _ = write!(stderr, "{text}");
            return EXIT_USAGE;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(io::write_text(p, text)?),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn rollouts(n: u64) -> usize {
    usize::try_from(n).unwrap_or(usize::MAX)
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let g = &cli.common;
    match &cli.command {
        Command::Synthesize {
            spec,
            variant,
            c,
            p,
            code_model,
            puzzle_model,
            code,
            oracle_rollouts,
        } => {
            let spec = io::read_spec(spec)?;
            let code_m = code_model
                .as_deref()
                .map(|p| checkpoint::load_code(p).map_err(ckpt_err(p)))
                .transpose()?;
            let puzzle_m = puzzle_model
                .as_deref()
                .map(|p| checkpoint::load_puzzle(p).map_err(ckpt_err(p)))
                .transpose()?;
            let fixed = code
                .as_deref()
                .map(|p| io::read_code(p, Some(spec.domain)))
                .transpose()?;
            let cfg = SynthConfig {
                c: rollouts(*c),
                p: rollouts(*p),
                oracle_rollouts: *oracle_rollouts,
                seed: g.seed,
                ..SynthConfig::default()
            };
            let models = Models {
                code: code_m.as_ref(),
                puzzle: puzzle_m.as_ref(),
            };
            let s = evaluation::synthesize(&spec, *variant, &models, fixed.as_ref(), &cfg)?;
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let record = SynthesisRecord {
                variant: variant.name(),
                seed: g.seed,
                c: cfg.c,
                p: cfg.p,
                spec: &spec,
                task: s.task.as_ref(),
                code: &s.code,
                code_text: s.code.to_text(),
                score: s.score.as_ref(),
                total: s.total,
                no_candidate: s.no_candidate,
                code_rollout: s.code_rollout,
                puzzle_rollout: s.puzzle_rollout,
            };
            io::write_json(&dir.join("synthesis.json"), &record)?;
            io::write_text(&dir.join("code.txt"), &(s.code.to_text() + "\n"))?;
            if let Some(t) = &s.task {
                io::write_json(&dir.join("task.json"), t)?;
                let file = GridFile::Task(t.clone());
                io::write_text(&dir.join("task.txt"), &render::text(&file))?;
                io::write_text(&dir.join("task.svg"), &render::svg(&file))?;
            }
            let _ = writeln!(stdout, "{}\nscore {:.4}", s.code.to_text(), s.total);
            if s.task.is_none() || s.no_candidate {
                return Err(CliError::Failed(
                    "no candidate scored above zero; best effort written".into(),
                ));
            }
            Ok(())
        }
        Command::TrainCode {
            data,
            train,
            no_augment,
        } => {
            let (_, ds) = datadir::read(data)?;
            let cfg = train.apply(
                TrainConfig {
                    augment: !no_augment,
                    ..TrainSettings::desk(g.seed).code
                },
                g.seed,
            )?;
            let pairs = |ids: &[usize]| -> Vec<(TaskSpec, Ast)> {
                ds.part(ids)
                    .iter()
                    .map(|e| (e.spec.clone(), e.exemplar.clone()))
                    .collect()
            };
            let (train_set, val_set) = (pairs(&ds.split.train), pairs(&ds.split.val));
            let mut curve = Vec::new();
            let model = policies::train_code_policy(
                &train_set,
                CodeModelConfig::default(),
                &cfg,
                &mut |s, m| {
                    let val = (!val_set.is_empty())
                        .then(|| policies::code_accuracy(m, &val_set).unwrap_or(0.0));
                    let _ = writeln!(
                        stderr,
                        "epoch {} loss {:.4} acc {:.4} val {:?}",
                        s.epoch, s.loss, s.metric, val
                    );
                    curve.push(CurveRow::new(s, val));
                },
            )?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("code.ckpt"));
            write_model(&out, &checkpoint::code_to_bytes(&model), &curve)
        }
        Command::TrainPuzzle { data, train } => {
            let (_, ds) = datadir::read(data)?;
            let cfg = train.apply(TrainSettings::desk(g.seed).puzzle, g.seed)?;
            let items = |ids: &[usize]| -> Vec<PuzzleTrainItem> {
                ds.part(ids)
                    .iter()
                    .map(|e| PuzzleTrainItem {
                        code: e.exemplar.clone(),
                        spec: e.spec.clone(),
                        oracle_score: e.oracle_score,
                    })
                    .collect()
            };
            let (train_set, val_set) = (items(&ds.split.train), items(&ds.split.val));
            let mut curve = Vec::new();
            let seed = g.seed;
            let model = policies::train_puzzle_policy(
                &train_set,
                PuzzleModelConfig::default(),
                &cfg,
                &mut |s, m| {
                    let val = (!val_set.is_empty()).then(|| {
                        let mut policy = m.policy(1.0);
                        let total: f64 = val_set
                            .iter()
                            .enumerate()
                            .map(|(i, it)| {
                                let mut r = rng::stream(seed, 0x7a1, i as u64);
                                generate_puzzle(&it.code, &it.spec, &mut policy, &mut r).reward
                            })
                            .sum();
                        total / val_set.len() as f64
                    });
                    let _ = writeln!(
                        stderr,
                        "epoch {} loss {:.4} reward {:.4} val {:?}",
                        s.epoch, s.loss, s.metric, val
                    );
                    curve.push(CurveRow::new(s, val));
                },
            )?;
            let out = g
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("puzzle.ckpt"));
            write_model(&out, &checkpoint::puzzle_to_bytes(&model), &curve)
        }
        Command::Dataset {
            buckets,
            size,
            rollouts,
            min_qual,
            max_code_size,
            attempts,
        } => {
            let domain = g
                .domain
                .ok_or_else(|| CliError::Usage("dataset needs --domain".into()))?;
            let targets = match (buckets, size) {
                (Some(b), _) => b.0.clone(),
                (None, Some(n)) => pipeline::scaled_targets(domain, *n),
                (None, None) => dataset::reference_targets(domain),
            };
            if !(0.0..=1.0).contains(min_qual) {
                return Err(CliError::Usage(format!(
                    "--min-qual must lie in [0, 1], got {min_qual}"
                )));
            }
            let cfg = DatasetConfig {
                oracle_rollouts: *rollouts,
                min_qual: *min_qual,
                max_code_size: *max_code_size,
                attempts_per_spec: *attempts,
                seed: g.seed,
            };
            let pool = pipeline::pool(g.jobs);
            let ds = pipeline::build_dataset(domain, &targets, &cfg, &pool)?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("dataset"));
            datadir::write(&out, &ds, &targets, &cfg)?;
            let _ = writeln!(
                stdout,
                "{} specs written to {}",
                ds.specs.len(),
                out.display()
            );
            Ok(())
        }
        Command::Oracle { code, spec, p } => {
            let code = io::read_code(code, g.domain)?;
            let spec = match spec {
                Some(path) => io::read_spec(path)?,
                None => dataset::oracle_spec(&code),
            };
            if spec.domain != code.domain {
                return Err(CliError::Usage(
                    "code and spec are for different domains".into(),
                ));
            }
            let r = dataset::task_oracle(&code, &spec, rollouts(*p), g.seed);
            let text = serde_json::to_string_pretty(&r).expect("results serialize") + "\n";
            emit(g.out.as_deref(), &text, stdout)
        }
        Command::Evaluate {
            specs,
            checkpoints,
            variants,
            runs,
            split,
            c,
            p,
            oracle_rollouts,
        } => {
            let (_, ds) = datadir::read(specs)?;
            let ids: Vec<usize> = match split {
                Part::Train => ds.split.train.clone(),
                Part::Val => ds.split.val.clone(),
                Part::Test => ds.split.test.clone(),
                Part::All => (0..ds.specs.len()).collect(),
            };
            let mut models = Vec::new();
            for dir in checkpoints {
                let cp = dir.join("code.ckpt");
                let pp = dir.join("puzzle.ckpt");
                let cm = checkpoint::load_code(&cp).map_err(ckpt_err(&cp))?;
                let pm = checkpoint::load_puzzle(&pp).map_err(ckpt_err(&pp))?;
                if cm.domain != ds.domain || pm.domain != ds.domain {
                    return Err(CliError::Usage(format!(
                        "{}: checkpoints are for another domain",
                        dir.display()
                    )));
                }
                models.push((cm, pm));
            }
            let variants = match (variants.is_empty(), models.is_empty()) {
                (false, _) => variants.clone(),
                (true, false) => Variant::ALL.to_vec(),
                (true, true) => vec![
                    Variant::BaseTaskSyn,
                    Variant::BaseCodeGen,
                    Variant::BasePuzzleGen,
                ],
            };
            let n_runs = if models.is_empty() {
                (*runs).max(1)
            } else {
                models.len()
            };
            let entries: Vec<_> = ids.iter().map(|&i| (i, &ds.specs[i])).collect();
            let metric = SuccessMetricConfig {
                oracle_rollouts: *oracle_rollouts,
                seed: g.seed,
                ..SuccessMetricConfig::default()
            };
            let cache = OracleCache::default();
            let pool = pipeline::pool(g.jobs);
            let mut results = Vec::new();
            for k in 0..n_runs {
                let m = models.get(k).map_or(Models::default(), |(c, p)| Models {
                    code: Some(c),
                    puzzle: Some(p),
                });
                let synth = SynthConfig {
                    c: rollouts(*c),
                    p: rollouts(*p),
                    oracle_rollouts: *oracle_rollouts,
                    seed: g.seed.wrapping_add(k as u64),
                    ..SynthConfig::default()
                };
                for &v in &variants {
                    let outs = pipeline::evaluate(&entries, v, &m, &synth, &metric, &cache, &pool)?;
                    let _ = writeln!(
                        stderr,
                        "run {k} {} success {:.3}",
                        v.name(),
                        pipeline::success_rate(&outs)
                    );
                    results.push((v, synth.seed, outs));
                }
            }
            let rows = tables::summarize(&results);
            let out = g
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("results.csv"));
            tables::write_csv(&out, &rows)?;
            for r in rows.iter().filter(|r| r.bucket == "all") {
                let _ = writeln!(stdout, "{:<14} {:.3} ({:.3})", r.variant, r.mean, r.stderr);
            }
            Ok(())
        }
        Command::Render { file, svg } => {
            let f = io::read_grid_file(file)?;
            let text = if *svg {
                render::svg(&f)
            } else {
                render::text(&f)
            };
            emit(g.out.as_deref(), &text, stdout)
        }
    }
}

fn write_model(out: &Path, bytes: &[u8], curve: &[CurveRow]) -> Result<(), CliError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(out, bytes).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok(tables::write_csv(&out.with_extension("csv"), curve)?)
}
