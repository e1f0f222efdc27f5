//! On-disk layout of a specification dataset.
//!
//! ```text
//! DIR/manifest.json        domain, seed, bucket counts, split, per-spec bucket and oracle score
//! DIR/specs/NNNN.json      one task specification per file
//! DIR/exemplars/NNNN.code  the exemplar code of the same spec, text form
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vpsynth_core::dataset::{DatasetConfig, SpecDataset, SpecEntry, Split};
use vpsynth_core::dsl::Domain;

use crate::io::{self, IoError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestEntry {
    pub id: usize,
    pub bucket: (u32, u32),
    pub oracle_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub domain: Domain,
    pub seed: u64,
    /// Requested bucket targets.
    pub targets: Vec<((u32, u32), usize)>,
    /// Buckets actually filled.
    pub buckets: Vec<((u32, u32), usize)>,
    pub split: Split,
    pub config: DatasetConfig,
    pub entries: Vec<ManifestEntry>,
}

fn spec_path(dir: &Path, id: usize) -> PathBuf {
    dir.join("specs").join(format!("{id:04}.json"))
}

fn code_path(dir: &Path, id: usize) -> PathBuf {
    dir.join("exemplars").join(format!("{id:04}.code"))
}

pub fn write(
    dir: &Path,
    ds: &SpecDataset,
    targets: &[((u32, u32), usize)],
    config: &DatasetConfig,
) -> Result<(), IoError> {
    for (id, e) in ds.specs.iter().enumerate() {
        io::write_json(&spec_path(dir, id), &e.spec)?;
        io::write_text(&code_path(dir, id), &(e.exemplar.to_text() + "\n"))?;
    }
    let manifest = Manifest {
        domain: ds.domain,
        seed: ds.seed,
        targets: targets.to_vec(),
        buckets: ds.buckets.clone(),
        split: ds.split.clone(),
        config: config.clone(),
        entries: ds
            .specs
            .iter()
            .enumerate()
            .map(|(id, e)| ManifestEntry {
                id,
                bucket: e.bucket,
                oracle_score: e.oracle_score,
            })
            .collect(),
    };
    io::write_json(&dir.join("manifest.json"), &manifest)
}

pub fn read(dir: &Path) -> Result<(Manifest, SpecDataset), IoError> {
    let mpath = dir.join("manifest.json");
    let manifest: Manifest = io::read_json(&mpath)?;
    let n = manifest.entries.len();
    let mut specs = Vec::with_capacity(n);
    for (i, m) in manifest.entries.iter().enumerate() {
        if m.id != i {
            return Err(IoError::format(
                &mpath,
                format!("entry {i} has id {}", m.id),
            ));
        }
        let spec = io::read_spec(&spec_path(dir, i))?;
        if spec.domain != manifest.domain {
            return Err(IoError::format(
                &spec_path(dir, i),
                "spec domain differs from the manifest",
            ));
        }
        let exemplar = io::read_code(&code_path(dir, i), Some(manifest.domain))?;
        specs.push(SpecEntry {
            spec,
            exemplar,
            oracle_score: m.oracle_score,
            bucket: m.bucket,
        });
    }
    let s = &manifest.split;
    if s.train.iter().chain(&s.val).chain(&s.test).any(|&i| i >= n) {
        return Err(IoError::format(&mpath, "split refers to a missing spec"));
    }
    let ds = SpecDataset {
        domain: manifest.domain,
        seed: manifest.seed,
        specs,
        split: manifest.split.clone(),
        buckets: manifest.buckets.clone(),
    };
    Ok((manifest, ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vpsynth_core::dataset::split;
    use vpsynth_core::dsl::Ast;

    fn tiny() -> SpecDataset {
        let d = Domain::HocMaze;
        let specs: Vec<SpecEntry> = [
            "def Run(){move; turnLeft; move}",
            "def Run(){RepeatUntil(goal){move}}",
        ]
        .iter()
        .map(|t| {
            let exemplar = Ast::parse(t, d).unwrap();
            let spec = vpsynth_core::dataset::oracle_spec(&exemplar);
            SpecEntry {
                spec,
                exemplar,
                oracle_score: 0.5,
                bucket: (1, 0),
            }
        })
        .collect();
        SpecDataset {
            domain: d,
            seed: 3,
            split: split(specs.len(), 3),
            specs,
            buckets: vec![((1, 0), 2)],
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        write(dir.path(), &ds, &[((1, 0), 2)], &DatasetConfig::default()).unwrap();
        let (m, back) = read(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(m.entries.len(), 2);
        assert!(dir.path().join("exemplars/0001.code").exists());
    }

    #[test]
    fn missing_spec_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), &tiny(), &[], &DatasetConfig::default()).unwrap();
        std::fs::remove_file(dir.path().join("specs/0001.json")).unwrap();
        assert!(matches!(read(dir.path()), Err(IoError::Io { .. })));
    }
}
