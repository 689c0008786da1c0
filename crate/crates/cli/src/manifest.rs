//! Run manifests: a key=value record written atomically next to every
//! output artifact, capturing the command, its resolved inputs, the code
//! version, and wall-clock timing.

use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use distsum_core::error::Result;

pub struct Stopwatch {
    wall_clock_unix: u64,
    started: Instant,
}

impl Stopwatch {
    pub fn start() -> Stopwatch {
        Stopwatch {
            wall_clock_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            started: Instant::now(),
        }
    }
}

pub fn write(path: &Path, command: &str, fields: &[(&str, String)], watch: Stopwatch) -> Result<()> {
    write_owned(
        path,
        command,
        fields.iter().map(|(k, v)| (*k, v.clone())).collect(),
        watch,
    )
}

pub fn write_owned(
    path: &Path,
    command: &str,
    fields: Vec<(&str, String)>,
    watch: Stopwatch,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("command={command}\n"));
    for (k, v) in fields {
        out.push_str(&format!("{k}={v}\n"));
    }
    out.push_str(&format!("code_version={}\n", crate::VERSION));
    out.push_str(&format!("wall_clock_unix={}\n", watch.wall_clock_unix));
    out.push_str(&format!(
        "duration_ms={}\n",
        watch.started.elapsed().as_millis()
    ));
    let tmp = path.with_extension("manifest.tmp");
    fs::write(&tmp, &out)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
