use std::path::{Component, Path, PathBuf};

use crate::error::{AgentError, Result};

/// Resolves `.` and `..` without touching the filesystem. A `..` that cannot
/// pop a normal component is kept, so relative paths may still start with it.
pub fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => match out.components().next_back() {
                Some(Component::Normal(_)) => {
                    out.pop();
                }
                Some(Component::RootDir | Component::Prefix(_)) => {}
                _ => out.push(".."),
            },
            other => out.push(other.as_os_str()),
        }
    }
    out
}

/// Joins `requested` onto `root` and rejects anything that lands outside it.
/// The check is lexical: `..` may not climb above the root and absolute
/// paths must already lie under it.
pub fn resolve_within(root: &Path, requested: &Path) -> Result<PathBuf> {
    let root = normalize(root);
    let out = normalize(&root.join(requested));
    if out.starts_with(&root) {
        Ok(out)
    } else {
        Err(AgentError::PathEscape(requested.display().to_string()))
    }
}
