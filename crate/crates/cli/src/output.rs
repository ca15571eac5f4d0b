use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use obsum::raster::{payload_path, write_raster};
use obsum::Raster;

/// Files written by one command. Unless [`Outputs::commit`] is called, every
/// tracked file is removed on drop, so a failing command leaves nothing behind.
#[derive(Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
    payloads: Vec<PathBuf>,
    committed: bool,
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

impl Outputs {
    pub fn raster(&mut self, raster: &Raster, path: &Path) -> Result<()> {
        write_raster(raster, path)?;
        self.payloads.push(payload_path(path));
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn bytes(&mut self, path: &Path, contents: &[u8]) -> Result<()> {
        let tmp = temp_path(path);
        fs::write(&tmp, contents)
            .and_then(|_| fs::rename(&tmp, path))
            .inspect_err(|_e| {
                let _ = fs::remove_file(&tmp);
            })
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Writes through `f` into a temporary file, then renames it into place.
    pub fn with_temp(&mut self, path: &Path, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let tmp = temp_path(path);
        let result = f(&tmp).and_then(|_| {
            fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
        });
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Marks the outputs as final and returns the headers and files written.
    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in self.written.iter().chain(&self.payloads) {
                let _ = fs::remove_file(p);
            }
        }
    }
}
