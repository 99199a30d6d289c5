//! Output locations.

use std::path::{Path, PathBuf};

/// Environment variable that relocates every relative output path.
pub const OUTPUT_ROOT_VAR: &str = "KDPID_OUTPUT_ROOT";

/// Joins a relative `path` onto the output root when one is set.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
