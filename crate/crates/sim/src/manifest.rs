//! Line-delimited corpus manifests: `utt_id  wav_path  fs` per line.

use std::path::{Path, PathBuf};

use crate::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub path: PathBuf,
    pub fs: u32,
}

/// Parses a manifest. Blank lines and `#` comments are skipped. Relative
/// paths are resolved against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(SimError::Manifest {
                line: i + 1,
                msg: format!("expected `utt_id path fs`, got {} fields", fields.len()),
            });
        }
        let fs: u32 = fields[2].parse().map_err(|_| SimError::Manifest {
            line: i + 1,
            msg: format!("bad sampling rate `{}`", fields[2]),
        })?;
        let p = PathBuf::from(fields[1]);
        let p = if p.is_absolute() { p } else { base.join(p) };
        entries.push(ManifestEntry {
            utt_id: fields[0].to_string(),
            path: p,
            fs,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_relative_paths() {
        let dir = std::env::temp_dir().join("trident_sim_manifest");
        std::fs::create_dir_all(&dir).unwrap();
        let mpath = dir.join("list.tsv");
        std::fs::write(&mpath, "# comment\nutt1 a/b.wav 16000\n\nutt2 /abs/c.wav 48000\n").unwrap();
        let m = read_manifest(&mpath).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].utt_id, "utt1");
        assert_eq!(m[0].path, dir.join("a/b.wav"));
        assert_eq!(m[1].path, PathBuf::from("/abs/c.wav"));
        assert_eq!(m[1].fs, 48000);
    }

    #[test]
    fn rejects_malformed_lines() {
        let dir = std::env::temp_dir().join("trident_sim_manifest");
        std::fs::create_dir_all(&dir).unwrap();
        let mpath = dir.join("bad.tsv");
        std::fs::write(&mpath, "utt1 a.wav\n").unwrap();
        assert!(matches!(
            read_manifest(&mpath),
            Err(SimError::Manifest { line: 1, .. })
        ));
    }
}
