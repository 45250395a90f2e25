use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

type Writer = Box<dyn FnOnce(&Path) -> dynloc::Result<()> + Send>;

/// A file produced by a pipeline step, written only when the run completes.
pub struct Artifact {
    pub name: PathBuf,
    write: Writer,
}

impl Artifact {
    pub fn json<T: Serialize>(name: impl Into<PathBuf>, value: &T) -> Result<Artifact> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Artifact {
            name: name.into(),
            write: Box::new(move |p| Ok(std::fs::write(p, bytes)?)),
        })
    }

    pub fn with(
        name: impl Into<PathBuf>,
        write: impl FnOnce(&Path) -> dynloc::Result<()> + Send + 'static,
    ) -> Artifact {
        Artifact {
            name: name.into(),
            write: Box::new(write),
        }
    }
}

/// Writes every artifact under `dir`: each goes to a temporary sibling
/// first and is renamed into place.
pub fn commit(dir: &Path, artifacts: Vec<Artifact>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let target = dir.join(&a.name);
        let parent = target.parent().unwrap_or(dir);
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
        let file = target.file_name().unwrap().to_string_lossy();
        let tmp = parent.join(format!(".{file}.{}.tmp", std::process::id()));
        (a.write)(&tmp).with_context(|| format!("writing {}", target.display()))?;
        std::fs::rename(&tmp, &target)
            .with_context(|| format!("moving {} into place", target.display()))?;
        written.push(target);
    }
    Ok(written)
}

#[derive(Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub threads: usize,
    pub started: String,
    pub finished: String,
}
