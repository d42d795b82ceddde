//! On-disk cache of intersection tables, keyed by datum fingerprint.

use std::io::Write;
use std::path::{Path, PathBuf};

use tropgamma::lattice_polytope::{intersection_table, IntersectionTable, MirrorDatum};

use crate::CliError;

pub const CACHE_ENV: &str = "TROPGAMMA_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    Disabled,
}

pub fn default_dir() -> PathBuf {
    std::env::temp_dir().join("tropgamma-cache")
}

fn entry(dir: &Path, fingerprint: &str) -> PathBuf {
    dir.join(format!("intersections-{fingerprint}.json"))
}

/// Loads the table for `datum`, computing and storing it on a miss.
/// Unreadable or mismatched entries are recomputed and overwritten.
pub fn table_for(datum: &MirrorDatum, dir: Option<&Path>) -> Result<(IntersectionTable, CacheStatus), CliError> {
    let compute = || intersection_table(datum).map_err(|e| CliError::Validation(e.to_string()));
    let Some(dir) = dir else {
        return Ok((compute()?, CacheStatus::Disabled));
    };
    let fp = datum.fingerprint();
    let path = entry(dir, &fp);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(table) = serde_json::from_str::<IntersectionTable>(&text) {
            if table.fingerprint == fp {
                return Ok((table, CacheStatus::Hit));
            }
        }
    }
    let table = compute()?;
    // a failed write only costs a recomputation next time
    let _ = store(dir, &path, &table);
    Ok((table, CacheStatus::Miss))
}

fn store(dir: &Path, path: &Path, table: &IntersectionTable) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(serde_json::to_string_pretty(table)?.as_bytes())?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
