//! Metadata sidecars: every CSV ships with a `<name>.meta.txt` recording the
//! plan, the seeds and the conventions baked into the numbers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

pub fn host_parallelism() -> usize {
    std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
}

/// Writes `key = value` lines next to a CSV. Keys keep insertion order so
/// diffs stay readable.
pub fn write_sidecar(csv_path: &Path, entries: &[(String, String)]) -> Result<()> {
    let path = csv_path.with_extension("meta.txt");
    let file = File::create(&path)
        .with_context(|| format!("creating sidecar {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "tool = asyflexa-bench {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "host_parallelism = {}", host_parallelism())?;
    for (k, v) in entries {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}
