//! Dataset manifests: CSV files `id,label,path` with image paths stored
//! relative to the manifest's directory.

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Option<String>,
    /// Resolved (absolute or cwd-relative) image path.
    pub path: PathBuf,
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = String::from("id,label,path\n");
    for entry in entries {
        let rel = entry.path.strip_prefix(base).unwrap_or(&entry.path);
        out.push_str(&format!(
            "{},{},{}\n",
            entry.id,
            entry.label.as_deref().unwrap_or(""),
            rel.display()
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(format!("writing {path:?}"), e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading manifest {path:?}"), e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut lines = text.lines();
    match lines.next() {
        Some("id,label,path") => {}
        other => {
            return Err(CliError::config(format!(
                "manifest {path:?} has header {other:?}, expected id,label,path"
            )))
        }
    }
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (id, label, rel) = match (parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(label), Some(rel)) if !id.is_empty() && !rel.is_empty() => {
                (id, label, rel)
            }
            _ => {
                return Err(CliError::config(format!(
                    "manifest {path:?} line {}: expected id,label,path",
                    lineno + 2
                )))
            }
        };
        let rel_path = Path::new(rel);
        entries.push(ManifestEntry {
            id: id.to_string(),
            label: (!label.is_empty()).then(|| label.to_string()),
            path: if rel_path.is_absolute() {
                rel_path.to_path_buf()
            } else {
                base.join(rel_path)
            },
        });
    }
    Ok(entries)
}
