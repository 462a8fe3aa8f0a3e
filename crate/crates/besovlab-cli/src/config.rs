//! Experiment configuration: flat dotted-key text (schema 1) or an
//! equivalent flat JSON object. Parsing keeps line numbers so every
//! diagnostic names the offending key and where it came from; validation
//! (unknown keys, types, resolution guards) happens before any artifact is
//! written.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use besovlab::fields::{gallery, import, Field, GalleryField, GalleryRequest};
use besovlab::functionals::EpsilonSchedule;
use besovlab::oscillation::Thresholds;

/// Classified failure: the process exit code is derived from the variant.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed, or self-inconsistent configuration. Exit 2.
    Config(String),
    /// A resolution or validity guard rejected the run before it started;
    /// the message carries a remediation hint. Exit 3.
    Guard(String),
    /// A requested verdict came back negative. Exit 4.
    Verdict(String),
    /// Filesystem trouble while writing artifacts. Exit 1.
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Guard(m) => write!(f, "guard violation: {m}"),
            CliError::Verdict(m) => write!(f, "verdict failure: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Verdict(_) => 4,
        }
    }
}

/// Maps library errors: resolution/validity guards keep their remediation
/// value, everything else is a configuration problem.
pub fn lift(err: besovlab::Error) -> CliError {
    use besovlab::Error::*;
    match err {
        ResolutionTooCoarse { quantity, needed, got } => CliError::Guard(format!(
            "{quantity} = {got} is below the grid floor {needed}; increase the radius, \
             shrink the schedule tail, or refine the grid"
        )),
        EmptyStencil { x, y, z, rho } => CliError::Guard(format!(
            "no unmasked cells inside radius {rho} of ({x}, {y}, {z}); move the probe \
             point or enlarge the radius"
        )),
        CostCapExceeded { pairs, cap } => CliError::Guard(format!(
            "the run would visit {pairs} cell pairs (cap {cap}); coarsen the grid or \
             shrink the radius"
        )),
        Io(e) => CliError::Io(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub type CliResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------------------
// Raw key/value layer

#[derive(Debug, Clone)]
struct RawEntry {
    value: String,
    line: usize,
    used: std::cell::Cell<bool>,
}

/// Flat key -> value map with provenance. Values are kept as the literal
/// text; typed access happens through the getters below.
#[derive(Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, RawEntry>,
    source: String,
}

pub const SCHEMA_VERSION: i64 = 1;

impl RawConfig {
    /// No config file given: every getter falls through to its default.
    pub fn empty() -> RawConfig {
        RawConfig { entries: BTreeMap::new(), source: "(defaults)".into() }
    }

    pub fn parse_file(path: &Path) -> CliResult<RawConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let source = path.display().to_string();
        if text.trim_start().starts_with('{') {
            RawConfig::parse_json(&text, &source)
        } else {
            RawConfig::parse_text(&text, &source)
        }
    }

    /// `key = value` lines; `#` starts a comment; blank lines ignored.
    pub fn parse_text(text: &str, source: &str) -> CliResult<RawConfig> {
        let mut entries = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{source}:{line_no}: expected `key = value`, got `{line}`"
                )));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("{source}:{line_no}: empty key")));
            }
            if entries
                .insert(
                    key.clone(),
                    RawEntry {
                        value: value.trim().to_string(),
                        line: line_no,
                        used: std::cell::Cell::new(false),
                    },
                )
                .is_some()
            {
                return Err(CliError::Config(format!(
                    "{source}:{line_no}: duplicate key '{key}'"
                )));
            }
        }
        Ok(RawConfig { entries, source: source.to_string() })
    }

    /// Flat JSON object with the same dotted keys; scalars and flat arrays
    /// (joined with commas) are accepted.
    pub fn parse_json(text: &str, source: &str) -> CliResult<RawConfig> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{source}: invalid JSON: {e}")))?;
        let serde_json::Value::Object(map) = value else {
            return Err(CliError::Config(format!(
                "{source}: top level must be a JSON object of dotted keys"
            )));
        };
        let mut entries = BTreeMap::new();
        for (key, v) in map {
            let rendered = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Array(items) => {
                    let mut parts = Vec::with_capacity(items.len());
                    for item in items {
                        match item {
                            serde_json::Value::String(s) => parts.push(s),
                            serde_json::Value::Number(n) => parts.push(n.to_string()),
                            other => {
                                return Err(CliError::Config(format!(
                                    "{source}: key '{key}': array elements must be scalars, got {other}"
                                )))
                            }
                        }
                    }
                    parts.join(",")
                }
                other => {
                    return Err(CliError::Config(format!(
                        "{source}: key '{key}': expected scalar or array, got {other}"
                    )))
                }
            };
            entries.insert(
                key,
                RawEntry { value: rendered, line: 0, used: std::cell::Cell::new(false) },
            );
        }
        Ok(RawConfig { entries, source: source.to_string() })
    }

    fn locate(&self, key: &str) -> String {
        match self.entries.get(key) {
            Some(e) if e.line > 0 => format!("{}:{}: key '{key}'", self.source, e.line),
            _ => format!("{}: key '{key}'", self.source),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| {
            e.used.set(true);
            e.value.as_str()
        })
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }

    pub fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<f64>().map(Some).map_err(|_| {
                CliError::Config(format!("{}: expected a number, got '{v}'", self.locate(key)))
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<usize>().map(Some).map_err(|_| {
                CliError::Config(format!(
                    "{}: expected a non-negative integer, got '{v}'",
                    self.locate(key)
                ))
            }),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.usize(key)?.unwrap_or(default))
    }

    pub fn f64_list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| {
                    CliError::Config(format!(
                        "{}: expected a comma-separated number list, got '{v}'",
                        self.locate(key)
                    ))
                }),
        }
    }

    pub fn usize_list(&self, key: &str) -> CliResult<Option<Vec<usize>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| {
                    CliError::Config(format!(
                        "{}: expected a comma-separated integer list, got '{v}'",
                        self.locate(key)
                    ))
                }),
        }
    }

    pub fn require<T>(&self, key: &str, got: Option<T>) -> CliResult<T> {
        got.ok_or_else(|| {
            CliError::Config(format!("{}: missing required key '{key}'", self.source))
        })
    }

    /// Schema check: the version stamp parses and every provided key is
    /// recognized by the subcommand. Unknown keys are errors, not warnings —
    /// a typo must not silently change an experiment.
    pub fn validate_keys(&self, allowed: &[&str]) -> CliResult<()> {
        let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
        if let Some(v) = self.raw("schema") {
            let parsed: i64 = v.parse().map_err(|_| {
                CliError::Config(format!("{}: schema must be an integer", self.locate("schema")))
            })?;
            if parsed != SCHEMA_VERSION {
                return Err(CliError::Config(format!(
                    "{}: schema {parsed} is not supported (this build speaks {SCHEMA_VERSION})",
                    self.locate("schema")
                )));
            }
        }
        for key in self.entries.keys() {
            if key == "schema" {
                continue;
            }
            if !allowed.contains(key.as_str()) {
                let mut hint = String::new();
                if let Some(near) = closest(key, &allowed) {
                    hint = format!(" (did you mean '{near}'?)");
                }
                return Err(CliError::Config(format!(
                    "{}: unknown key{hint}",
                    self.locate(key)
                )));
            }
        }
        Ok(())
    }

    /// Echo for the report: every key/value pair, sorted.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }
}

/// Nearest allowed key by edit distance, for typo hints. Only offered when
/// the distance is small relative to the key length.
fn closest<'a>(key: &str, allowed: &BTreeSet<&'a str>) -> Option<&'a str> {
    let mut best: Option<(usize, &str)> = None;
    for cand in allowed {
        let d = edit_distance(key, cand);
        if best.map(|(b, _)| d < b).unwrap_or(true) {
            best = Some((d, cand));
        }
    }
    best.and_then(|(d, c)| (d <= 2.max(key.len() / 4)).then_some(c))
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut prev = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = if ca == cb { prev } else { prev + 1 };
            prev = row[j + 1];
            row[j + 1] = cost.min(row[j] + 1).min(prev + 1);
        }
    }
    row[b.len()]
}

// ---------------------------------------------------------------------------
// Typed experiment pieces

pub const FIELD_KEYS: &[&str] = &[
    "field.gallery",
    "field.import",
    "field.dim",
    "field.cells",
    "field.lower",
    "field.upper",
    "field.p",
    "field.axis",
    "field.position",
    "field.jump",
    "field.base",
];

pub const THRESHOLD_KEYS: &[&str] = &[
    "thresholds.theta_abs",
    "thresholds.theta_rel",
    "thresholds.jump_scale",
    "thresholds.window",
    "thresholds.spread_tol",
    "thresholds.slope_min",
    "thresholds.ratio_max",
    "thresholds.wiggle",
    "thresholds.resid_rel",
    "thresholds.tier2_rel",
    "thresholds.ratio_tol",
];

pub const SCHEDULE_KEYS: &[&str] =
    &["schedule.top", "schedule.ratio", "schedule.count", "schedule.window"];

/// The field named by the config: a gallery entry (with its probe metadata)
/// or an imported file (no metadata).
pub struct FieldSource {
    pub field: Field,
    pub gallery: Option<GalleryField>,
    pub describe: String,
}

pub fn load_field(cfg: &RawConfig) -> CliResult<FieldSource> {
    match (cfg.string("field.gallery"), cfg.string("field.import")) {
        (Some(_), Some(_)) => Err(CliError::Config(
            "field.gallery and field.import are mutually exclusive".into(),
        )),
        (None, None) => Err(CliError::Config(
            "a field is required: set field.gallery = <name> or field.import = <path>".into(),
        )),
        (Some(name), None) => {
            let mut req = GalleryRequest::named(&name);
            req.dim = cfg.usize("field.dim")?;
            req.cells = cfg.usize_list("field.cells")?;
            req.lower = cfg.f64_list("field.lower")?;
            req.upper = cfg.f64_list("field.upper")?;
            req.p = cfg.usize("field.p")?;
            req.axis = cfg.usize("field.axis")?;
            req.position = cfg.f64_or("field.position", req.position)?;
            req.jump = cfg.f64_or("field.jump", req.jump)?;
            req.base = cfg.f64_or("field.base", req.base)?;
            let g = gallery(&req).map_err(lift)?;
            let describe = format!(
                "gallery '{}', dim {}, cells {:?}",
                name,
                g.field.domain().dim(),
                &g.field.domain().cells()[..g.field.domain().dim()]
            );
            Ok(FieldSource { field: g.field.clone(), gallery: Some(g), describe })
        }
        (None, Some(path)) => {
            let field = import(Path::new(&path)).map_err(lift)?;
            let describe = format!(
                "import '{}', dim {}, cells {:?}",
                path,
                field.domain().dim(),
                &field.domain().cells()[..field.domain().dim()]
            );
            Ok(FieldSource { field, gallery: None, describe })
        }
    }
}

/// Thresholds: the named profile, then any per-field overrides.
pub fn load_thresholds(cfg: &RawConfig, profile: &str) -> CliResult<Thresholds> {
    let mut th = match profile {
        "default" => Thresholds::default_profile(),
        "strict" => Thresholds::strict_profile(),
        other => {
            return Err(CliError::Config(format!(
                "unknown tolerance profile '{other}' (choose: default, strict)"
            )))
        }
    };
    th.theta_abs = cfg.f64_or("thresholds.theta_abs", th.theta_abs)?;
    th.theta_rel = cfg.f64_or("thresholds.theta_rel", th.theta_rel)?;
    th.jump_scale = cfg.f64_or("thresholds.jump_scale", th.jump_scale)?;
    th.window = cfg.usize_or("thresholds.window", th.window)?;
    th.spread_tol = cfg.f64_or("thresholds.spread_tol", th.spread_tol)?;
    th.slope_min = cfg.f64_or("thresholds.slope_min", th.slope_min)?;
    th.ratio_max = cfg.f64_or("thresholds.ratio_max", th.ratio_max)?;
    th.wiggle = cfg.f64_or("thresholds.wiggle", th.wiggle)?;
    th.resid_rel = cfg.f64_or("thresholds.resid_rel", th.resid_rel)?;
    th.tier2_rel = cfg.f64_or("thresholds.tier2_rel", th.tier2_rel)?;
    th.ratio_tol = cfg.f64_or("thresholds.ratio_tol", th.ratio_tol)?;
    Ok(th)
}

/// Radius schedule from `schedule.*` keys with the given defaults, pre-flight
/// checked against the grid floor (`floor_cells` cell widths: 8 for pair
/// radii, 2 for ball radii).
pub fn load_schedule(
    cfg: &RawConfig,
    field: &Field,
    defaults: (f64, f64, usize),
    floor_cells: f64,
    floor_name: &str,
) -> CliResult<EpsilonSchedule> {
    let top = cfg.f64_or("schedule.top", defaults.0)?;
    let ratio = cfg.f64_or("schedule.ratio", defaults.1)?;
    let count = cfg.usize_or("schedule.count", defaults.2)?;
    let window = cfg.usize_or("schedule.window", 3)?;
    let sched = EpsilonSchedule::new(top, ratio, count, window).map_err(lift)?;
    let floor = floor_cells * field.domain().max_spacing();
    let tail = *sched.values().last().unwrap();
    if tail < floor {
        return Err(CliError::Guard(format!(
            "schedule tail {tail:.6} is below the {floor_name} floor {floor:.6} \
             ({floor_cells:.0} cell widths); raise schedule.top, lower schedule.count, \
             or refine the grid"
        )));
    }
    Ok(sched)
}

/// Probe point (defaults to the origin), checked to lie inside the box.
pub fn load_point(cfg: &RawConfig, field: &Field) -> CliResult<[f64; 3]> {
    let mut point = [0.0; 3];
    if let Some(coords) = cfg.f64_list("point")? {
        if coords.len() != field.domain().dim() {
            return Err(CliError::Config(format!(
                "point has {} coordinates, the field is {}-dimensional",
                coords.len(),
                field.domain().dim()
            )));
        }
        point[..coords.len()].copy_from_slice(&coords);
    }
    if !field.domain().contains(&point) {
        return Err(CliError::Guard(format!(
            "probe point {:?} lies outside the box; move `point` inside the domain",
            &point[..field.domain().dim()]
        )));
    }
    Ok(point)
}

/// Output directory handling: nothing is created until validation is done.
pub struct OutDir {
    pub path: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path) -> CliResult<OutDir> {
        std::fs::create_dir_all(path)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        Ok(OutDir { path: path.to_path_buf() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }
}
