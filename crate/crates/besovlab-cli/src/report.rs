//! Report assembly and artifact writers. `report.json` is bitwise
//! reproducible for a fixed config and seed: wall-clock numbers live in a
//! `timings.json` sidecar, never in the report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::{CliError, CliResult, OutDir};

/// Everything a run leaves behind, minus timing.
#[derive(Debug, Serialize)]
pub struct Report {
    /// Build version the numbers came from.
    pub version: String,
    pub command: String,
    /// Seed echoed for provenance (library paths are deterministic; the seed
    /// participates only where an operation documents it).
    pub seed: u64,
    pub tolerance_profile: String,
    /// Verbatim config echo, sorted by key.
    pub config: BTreeMap<String, String>,
    /// What the field resolved to, when the command loads one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Per-operation results, in execution order.
    pub results: serde_json::Value,
    /// Artifact files written next to the report, by role.
    pub artifacts: BTreeMap<String, String>,
}

impl Report {
    pub fn new(command: &str, seed: u64, profile: &str, config: BTreeMap<String, String>) -> Report {
        Report {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            tolerance_profile: profile.to_string(),
            config,
            field: None,
            results: serde_json::Value::Null,
            artifacts: BTreeMap::new(),
        }
    }

    pub fn set_results<T: Serialize>(&mut self, results: &T) -> CliResult<()> {
        self.results = serde_json::to_value(results)
            .map_err(|e| CliError::Io(format!("serializing results: {e}")))?;
        Ok(())
    }
}

/// Stage stopwatch feeding the sidecar.
pub struct Timings {
    t0: Instant,
    stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn start() -> Timings {
        Timings { t0: Instant::now(), stages: Vec::new() }
    }

    /// Records the time since the previous mark under `stage`.
    pub fn mark(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages
            .push((stage.to_string(), now.duration_since(self.t0).as_secs_f64()));
        self.t0 = now;
    }
}

pub fn write_report(out: &OutDir, report: &Report, timings: &Timings) -> CliResult<()> {
    let path = out.file("report.json");
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
    std::fs::write(&path, json.as_bytes())
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        wall_clock_seconds: Vec<(&'a str, f64)>,
    }
    let sidecar = Sidecar {
        wall_clock_seconds: timings.stages.iter().map(|(s, t)| (s.as_str(), *t)).collect(),
    };
    let tp = out.file("timings.json");
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CliError::Io(format!("serializing timings: {e}")))?;
    std::fs::write(&tp, json.as_bytes())
        .map_err(|e| CliError::Io(format!("writing {}: {e}", tp.display())))?;
    Ok(())
}

/// Plain-text plot data: `#`-prefixed header naming the columns, then one
/// row per record, space-separated, shortest round-trip decimals.
pub fn write_columns(
    path: &Path,
    header: &str,
    rows: &[Vec<f64>],
) -> CliResult<()> {
    let mut buf = String::new();
    buf.push_str("# ");
    buf.push_str(header);
    buf.push('\n');
    for row in rows {
        let parts: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        buf.push_str(&parts.join(" "));
        buf.push('\n');
    }
    std::fs::write(path, buf.as_bytes())
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

/// Interface geometry as readable text: one element per line.
pub fn write_interface(
    path: &Path,
    elements: &[besovlab::jumps::JumpElement],
    dim: usize,
) -> CliResult<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?,
    );
    let mut emit = || -> std::io::Result<()> {
        writeln!(f, "# anchor[{dim}] nu[{dim}] height measure classical residual")?;
        for e in elements {
            let anchor: Vec<String> = e.anchor[..dim].iter().map(|v| format!("{v}")).collect();
            let nu: Vec<String> = e.nu[..dim].iter().map(|v| format!("{v}")).collect();
            writeln!(
                f,
                "{} {} {} {} {} {}",
                anchor.join(" "),
                nu.join(" "),
                e.height(),
                e.measure,
                e.classical,
                e.residual
            )?;
        }
        Ok(())
    };
    emit().map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}
