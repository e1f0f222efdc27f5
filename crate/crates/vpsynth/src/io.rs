//! Reading and writing the JSON and text files the tools exchange.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use vpsynth_core::dsl::{Ast, Domain};
use vpsynth_core::world::{Grid, Puzzle, Task, TaskSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl IoError {
    pub fn format(path: &Path, msg: impl std::fmt::Display) -> IoError {
        IoError::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `text`, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let io = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, text).map_err(io)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).expect("values serialize");
    write_text(path, &(text + "\n"))
}

/// A code file: the JSON node form, or the text form for the given domain.
pub fn read_code(path: &Path, domain: Option<Domain>) -> Result<Ast, IoError> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(&text).map_err(|source| IoError::Json {
            path: path.to_path_buf(),
            source,
        });
    }
    let domain =
        domain.ok_or_else(|| IoError::format(path, "text codes need a domain (use --domain)"))?;
    Ast::parse(&text, domain).map_err(|e| IoError::format(path, e))
}

pub fn read_spec(path: &Path) -> Result<TaskSpec, IoError> {
    let spec: TaskSpec = read_json(path)?;
    spec.validate().map_err(|e| IoError::format(path, e))?;
    Ok(spec)
}

pub fn read_task(path: &Path) -> Result<Task, IoError> {
    let task: Task = read_json(path)?;
    task.validate().map_err(|e| IoError::format(path, e))?;
    Ok(task)
}

/// Anything with a grid in it, as found on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum GridFile {
    Task(Task),
    Spec(TaskSpec),
    Puzzle(Puzzle),
    Grid(Grid),
}

/// Reads a task, spec or puzzle JSON file, or a grid in the text format.
pub fn read_grid_file(path: &Path) -> Result<GridFile, IoError> {
    let text = read_text(path)?;
    if !text.trim_start().starts_with('{') {
        return Grid::parse(&text)
            .map(GridFile::Grid)
            .map_err(|e| IoError::format(path, e));
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let json = |source| IoError::Json {
        path: path.to_path_buf(),
        source,
    };
    let obj = value
        .as_object()
        .ok_or_else(|| IoError::format(path, "expected a JSON object"))?;
    if obj.contains_key("store") {
        let task: Task = serde_json::from_value(value).map_err(json)?;
        task.validate().map_err(|e| IoError::format(path, e))?;
        Ok(GridFile::Task(task))
    } else if obj.contains_key("sketch") {
        Ok(GridFile::Spec(serde_json::from_value(value).map_err(json)?))
    } else if obj.contains_key("task") {
        // a synthesis record
        let task: Option<Task> = serde_json::from_value(obj["task"].clone()).map_err(json)?;
        task.map(GridFile::Task)
            .ok_or_else(|| IoError::format(path, "synthesis record holds no task"))
    } else {
        Ok(GridFile::Puzzle(
            serde_json::from_value(value).map_err(json)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_load_from_text_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let code = Ast::parse("def Run(){RepeatUntil(goal){move}}", Domain::HocMaze).unwrap();
        let text = dir.path().join("a.code");
        write_text(&text, &code.to_text()).unwrap();
        assert_eq!(read_code(&text, Some(Domain::HocMaze)).unwrap(), code);
        assert!(matches!(
            read_code(&text, None),
            Err(IoError::Format { .. })
        ));
        let json = dir.path().join("a.json");
        write_json(&json, &code).unwrap();
        assert_eq!(read_code(&json, None).unwrap(), code);
    }

    #[test]
    fn malformed_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        write_text(&p, "{\"domain\": \"HoCMaze\", ").unwrap();
        assert!(matches!(read_spec(&p), Err(IoError::Json { .. })));
        assert!(matches!(
            read_task(&dir.path().join("missing.json")),
            Err(IoError::Io { .. })
        ));
        write_text(&p, "..\n.Q\n").unwrap();
        assert!(matches!(read_grid_file(&p), Err(IoError::Format { .. })));
    }
}
