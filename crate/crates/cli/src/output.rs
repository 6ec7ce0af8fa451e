use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Files staged next to their destinations and renamed into place only
/// after every one of them was written, so a failed run leaves nothing
/// behind.
#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, PathBuf)>,
}

impl Staged {
    pub fn add(&mut self, dest: &Path, bytes: &[u8]) -> anyhow::Result<()> {
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp = tempfile::Builder::new()
            .prefix(".coral-")
            .tempfile_in(&dir)
            .with_context(|| format!("staging {}", dest.display()))?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        let (_, path) = tmp.keep().context("keeping staged file")?;
        self.files.push((path, dest.to_path_buf()));
        Ok(())
    }

    pub fn commit(mut self) -> anyhow::Result<()> {
        for (tmp, dest) in std::mem::take(&mut self.files) {
            std::fs::rename(&tmp, &dest).with_context(|| format!("writing {}", dest.display()))?;
        }
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.files {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

pub fn write_one(dest: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut s = Staged::default();
    s.add(dest, bytes)?;
    s.commit()
}
