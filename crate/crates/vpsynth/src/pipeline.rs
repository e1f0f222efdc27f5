//! Dataset, training and evaluation runs at desk scale.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use vpsynth_core::dataset::{self, DatasetConfig, DatasetError, SpecDataset, SpecEntry};
use vpsynth_core::dsl::{Ast, Domain};
use vpsynth_core::evaluation::{
    self, metric_m_given, Models, SuccessMetricConfig, SynthConfig, SynthError, Variant,
};
use vpsynth_core::policies::{
    self, CodeModel, CodeModelConfig, EpochStats, PuzzleModel, PuzzleModelConfig, PuzzleTrainItem,
    TrainConfig, TrainError,
};
use vpsynth_core::world::TaskSpec;

/// Bucket targets summing to `total`, proportional to the reference targets
/// (largest remainder, ties to the earlier bucket).
pub fn scaled_targets(domain: Domain, total: usize) -> Vec<((u32, u32), usize)> {
    let base = dataset::reference_targets(domain);
    let sum: usize = base.iter().map(|b| b.1).sum();
    let mut out: Vec<((u32, u32), usize)> =
        base.iter().map(|&(k, n)| (k, n * total / sum)).collect();
    let mut rest: Vec<(usize, usize)> = base
        .iter()
        .enumerate()
        .map(|(i, &(_, n))| (n * total % sum, i))
        .collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = total - out.iter().map(|o| o.1).sum::<usize>();
    for &(_, i) in rest.iter().take(missing) {
        out[i].1 += 1;
    }
    out
}

/// A thread pool with `jobs` workers; `0` means one per available core.
pub fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}

/// Builds a dataset, evaluating candidate batches on `pool`.
pub fn build_dataset(
    domain: Domain,
    targets: &[((u32, u32), usize)],
    cfg: &DatasetConfig,
    pool: &rayon::ThreadPool,
) -> Result<SpecDataset, DatasetError> {
    let batch = |range: Range<usize>, f: &(dyn Fn(usize) -> Option<SpecEntry> + Sync)| {
        pool.install(|| range.into_par_iter().map(f).collect::<Vec<_>>())
    };
    dataset::build_dataset_with(domain, targets, cfg, &batch)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainSettings {
    pub code_model: CodeModelConfig,
    pub puzzle_model: PuzzleModelConfig,
    pub code: TrainConfig,
    pub puzzle: TrainConfig,
}

impl TrainSettings {
    /// Settings sized for a few hundred specs on one core.
    pub fn desk(seed: u64) -> TrainSettings {
        TrainSettings {
            code_model: CodeModelConfig::default(),
            puzzle_model: PuzzleModelConfig::default(),
            code: TrainConfig {
                epochs: 30,
                lr: 3e-3,
                batch_size: 16,
                augment: true,
                seed,
                ..TrainConfig::default()
            },
            puzzle: TrainConfig {
                epochs: 10,
                lr: 1e-3,
                batch_size: 16,
                seed,
                ..TrainConfig::default()
            },
        }
    }
}

pub struct Trained {
    pub code: CodeModel,
    pub puzzle: PuzzleModel,
    pub code_curve: Vec<EpochStats>,
    pub puzzle_curve: Vec<EpochStats>,
}

pub fn train_code(
    entries: &[&SpecEntry],
    settings: &TrainSettings,
    on_epoch: &mut dyn FnMut(&EpochStats, &CodeModel),
) -> Result<CodeModel, TrainError> {
    let data: Vec<(TaskSpec, Ast)> = entries
        .iter()
        .map(|e| (e.spec.clone(), e.exemplar.clone()))
        .collect();
    policies::train_code_policy(&data, settings.code_model, &settings.code, on_epoch)
}

pub fn train_puzzle(
    entries: &[&SpecEntry],
    settings: &TrainSettings,
    on_epoch: &mut dyn FnMut(&EpochStats, &PuzzleModel),
) -> Result<PuzzleModel, TrainError> {
    let items: Vec<PuzzleTrainItem> = entries
        .iter()
        .map(|e| PuzzleTrainItem {
            code: e.exemplar.clone(),
            spec: e.spec.clone(),
            oracle_score: e.oracle_score,
        })
        .collect();
    policies::train_puzzle_policy(
        &items,
        settings.puzzle_model.clone(),
        &settings.puzzle,
        on_epoch,
    )
}

/// Trains both models on the given entries.
pub fn train(entries: &[&SpecEntry], settings: &TrainSettings) -> Result<Trained, TrainError> {
    let mut code_curve = Vec::new();
    let code = train_code(entries, settings, &mut |s, _| code_curve.push(s.clone()))?;
    let mut puzzle_curve = Vec::new();
    let puzzle = train_puzzle(entries, settings, &mut |s, _| puzzle_curve.push(s.clone()))?;
    Ok(Trained {
        code,
        puzzle,
        code_curve,
        puzzle_curve,
    })
}

/// Oracle scores keyed by spec and code text, shared across variants.
#[derive(Default)]
pub struct OracleCache {
    scores: Mutex<HashMap<(String, String), f64>>,
}

impl OracleCache {
    pub fn score(&self, spec: &TaskSpec, code: &Ast, cfg: &SuccessMetricConfig) -> f64 {
        let key = (
            serde_json::to_string(spec).expect("specs serialize"),
            code.to_compact(),
        );
        if let Some(&s) = self.scores.lock().expect("cache lock").get(&key) {
            return s;
        }
        let s = evaluation::task_oracle_score(code, spec, cfg);
        self.scores.lock().expect("cache lock").insert(key, s);
        s
    }
}

/// Outcome of one synthesis run on one spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Outcome {
    pub spec: usize,
    pub bucket: (u32, u32),
    pub success: bool,
    pub total: f64,
    pub oracle: f64,
}

/// Runs `variant` on every spec and applies metric M to each output.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    entries: &[(usize, &SpecEntry)],
    variant: Variant,
    models: &Models<'_>,
    synth: &SynthConfig,
    metric: &SuccessMetricConfig,
    cache: &OracleCache,
    pool: &rayon::ThreadPool,
) -> Result<Vec<Outcome>, SynthError> {
    pool.install(|| {
        entries
            .par_iter()
            .map(|&(id, e)| {
                let fixed = Some(&e.exemplar);
                let s = evaluation::synthesize(&e.spec, variant, models, fixed, synth)?;
                let oracle = cache.score(&e.spec, &s.code, metric);
                let success = metric_m_given(&e.spec, s.task.as_ref(), &s.code, oracle, metric);
                Ok(Outcome {
                    spec: id,
                    bucket: e.bucket,
                    success,
                    total: s.total,
                    oracle,
                })
            })
            .collect()
    })
}

pub fn success_rate(outcomes: &[Outcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_targets_sum_and_keep_empty_buckets() {
        for d in Domain::ALL {
            for total in [1, 10, 200, 1016] {
                let t = scaled_targets(d, total);
                assert_eq!(t.iter().map(|x| x.1).sum::<usize>(), total);
            }
        }
        assert_eq!(scaled_targets(Domain::Karel, 200)[4].1, 0);
        assert_eq!(
            scaled_targets(Domain::HocMaze, 1016),
            dataset::reference_targets(Domain::HocMaze)
        );
    }
}
