//! Command-line front end: wires configs to library runs and writes
//! deterministic reports. Orchestration is single-threaded; parallelism
//! lives in the library (rayon), sized by --threads.
//!
//! Exit codes: 0 ok, 1 i/o, 2 config error, 3 guard violation, 4 verdict
//! failure.

mod config;
mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use besovlab::fields::{export, gallery_list, import, PayloadFormat};
use besovlab::functionals::{besov_constants, double_average, gagliardo_seminorm};
use besovlab::jumps::{detect_jumps, q_jump_variation, verify_jump_inequality, JumpSource};
use besovlab::lusin::{build_filtration, holder_constant_on, holder_extend, select_compact};
use besovlab::oscillation::{classify_point, inf_const_oscillation};
use besovlab::quadrature::{c_dimensional, gamma_lower, pair_integral, CMethod};

use config::{
    lift, load_field, load_point, load_schedule, load_thresholds, CliError, CliResult, OutDir,
    RawConfig, FIELD_KEYS, SCHEDULE_KEYS, THRESHOLD_KEYS,
};
use report::{write_columns, write_interface, write_report, Report, Timings};

#[derive(Parser)]
#[command(
    name = "besovlab",
    version,
    about = "Nonlocal functionals, jump detection, and Holder approximation on sampled boxes"
)]
struct Cli {
    /// Experiment configuration: dotted-key text or a flat JSON object.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for report.json, timings.json, and data artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for the library's parallel kernels (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Seed recorded in the report; overrides the config `seed` key.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Threshold baseline before per-key overrides: default or strict.
    #[arg(long, global = true, value_name = "PROFILE", default_value = "default")]
    tolerance_profile: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dimensional constants: closed form vs sphere/ball quadrature, with the
    /// weaker lower constant.
    Constants,
    /// Nonlocal pair functional along a radius schedule and the Besov
    /// constants it brackets.
    Besov,
    /// Ball-average oscillation profile and point classification at a probe
    /// point.
    Oscillation,
    /// Detect the approximate jump interface and its q-variation.
    Jumps,
    /// Check the jump inequality (exit 4 when the verdict is negative).
    Verify,
    /// Good-set filtration, compact selection, and a certified Holder
    /// extension.
    Lusin,
    /// Print the field gallery catalog.
    GalleryList,
    /// Read a field file and summarize it.
    Import {
        /// Field file; alternative to the `field.import` config key.
        path: Option<PathBuf>,
    },
    /// Write the configured field to a field file.
    Export,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("besovlab: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let cfg = match &cli.config {
        Some(p) => RawConfig::parse_file(p)?,
        None => RawConfig::empty(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => cfg.string("seed").map(|v| {
            v.parse::<u64>().map_err(|_| {
                CliError::Config(format!("key 'seed': expected an unsigned integer, got '{v}'"))
            })
        }).transpose()?.unwrap_or(0),
    };
    let profile = cli.tolerance_profile.as_str();
    let out = cli.out.as_deref();

    match cli.command {
        Command::Constants => run_constants(&cfg, out, seed, profile),
        Command::Besov => run_besov(&cfg, out, seed, profile),
        Command::Oscillation => run_oscillation(&cfg, out, seed, profile),
        Command::Jumps => run_jumps(&cfg, out, seed, profile),
        Command::Verify => run_verify(&cfg, out, seed, profile),
        Command::Lusin => run_lusin(&cfg, out, seed, profile),
        Command::GalleryList => run_gallery_list(&cfg, out, seed, profile),
        Command::Import { path } => run_import(&cfg, path.as_deref(), out, seed, profile),
        Command::Export => run_export(&cfg, out, seed, profile),
    }
}

/// The field-selecting commands refuse to run on defaults alone.
fn need_config(cfg: &RawConfig, command: &str) -> CliResult<()> {
    if cfg.is_empty() {
        return Err(CliError::Config(format!(
            "`{command}` needs --config with at least a field.gallery or field.import key"
        )));
    }
    Ok(())
}

fn keys(groups: &[&'static [&'static str]], extra: &[&'static str]) -> Vec<&'static str> {
    let mut v: Vec<&'static str> = Vec::new();
    for g in groups {
        v.extend_from_slice(g);
    }
    v.extend_from_slice(extra);
    v
}

// ---------------------------------------------------------------------------
// constants

#[derive(Serialize)]
struct ConstantsRow {
    n: usize,
    closed_form: f64,
    sphere: Option<f64>,
    ball: Option<f64>,
    gamma_weak: Option<f64>,
}

fn run_constants(cfg: &RawConfig, out: Option<&Path>, seed: u64, profile: &str) -> CliResult<()> {
    cfg.validate_keys(&keys(&[], &["n.max", "seed"]))?;
    let n_max = cfg.usize_or("n.max", 5)?;
    if n_max == 0 {
        return Err(CliError::Config("n.max must be at least 1".into()));
    }
    let mut timings = Timings::start();
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        rows.push(ConstantsRow {
            n,
            closed_form: c_dimensional(n, CMethod::ClosedForm).map_err(lift)?,
            sphere: c_dimensional(n, CMethod::SphereQuadrature).ok(),
            ball: c_dimensional(n, CMethod::BallQuadrature).ok(),
            gamma_weak: gamma_lower(n).ok(),
        });
    }
    timings.mark("constants");

    println!("{:>3}  {:>18}  {:>18}  {:>18}  {:>18}", "N", "closed", "sphere", "ball", "gamma");
    for r in &rows {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.12}"));
        println!(
            "{:>3}  {:>18.12}  {:>18}  {:>18}  {:>18}",
            r.n,
            r.closed_form,
            opt(r.sphere),
            opt(r.ball),
            opt(r.gamma_weak)
        );
    }

    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("constants", seed, profile, cfg.echo());
        rep.set_results(&rows)?;
        let table: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.n as f64,
                    r.closed_form,
                    r.sphere.unwrap_or(f64::NAN),
                    r.ball.unwrap_or(f64::NAN),
                    r.gamma_weak.unwrap_or(f64::NAN),
                ]
            })
            .collect();
        write_columns(&dir.file("constants.csv"), "N closed sphere ball gamma", &table)?;
        rep.artifacts.insert("constants".into(), "constants.csv".into());
        write_report(&dir, &rep, &timings)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// besov

fn run_besov(cfg: &RawConfig, out: Option<&Path>, seed: u64, profile: &str) -> CliResult<()> {
    need_config(cfg, "besov")?;
    cfg.validate_keys(&keys(
        &[FIELD_KEYS, SCHEDULE_KEYS, THRESHOLD_KEYS],
        &["q", "gagliardo.r", "seed"],
    ))?;
    let src = load_field(cfg)?;
    let th = load_thresholds(cfg, profile)?;
    let q = cfg.f64_or("q", 2.0)?;
    if q < 1.0 {
        return Err(CliError::Config(format!("q must be at least 1; got {q}")));
    }
    let sched = load_schedule(cfg, &src.field, (0.12, 0.8, 6), 8.0, "pair-radius")?;
    let gag_r = cfg.f64("gagliardo.r")?;

    let mut timings = Timings::start();
    let mut entries: Vec<Vec<f64>> = Vec::new();
    for eps in sched.values() {
        let f = pair_integral(&src.field, eps, q, 1.0).map_err(lift)?;
        entries.push(vec![eps, f]);
    }
    timings.mark("pair functional");
    let constants = besov_constants(&src.field, q, &sched, th.spread_tol).map_err(lift)?;
    timings.mark("besov constants");
    let gagliardo = match gag_r {
        Some(r) => {
            let v = gagliardo_seminorm(&src.field, q, r).map_err(lift)?;
            timings.mark("gagliardo seminorm");
            Some((r, v))
        }
        None => None,
    };

    println!("field: {}", src.describe);
    println!(
        "besov: hat {:.6}  limsup {:.6}  liminf {:.6}  spread {:.4}  converged {}",
        constants.hat,
        constants.estimate.limsup,
        constants.estimate.liminf,
        constants.estimate.spread,
        constants.estimate.converged
    );
    if let Some((r, v)) = gagliardo {
        println!("gagliardo seminorm (q {q}, r {r}): {v:.6}");
    }

    #[derive(Serialize)]
    struct BesovResults<'a> {
        q: f64,
        constants: &'a besovlab::functionals::BesovConstants,
        gagliardo: Option<(f64, f64)>,
    }
    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("besov", seed, profile, cfg.echo());
        rep.field = Some(src.describe.clone());
        rep.set_results(&BesovResults { q, constants: &constants, gagliardo })?;
        write_columns(&dir.file("besov_entries.csv"), "eps F", &entries)?;
        rep.artifacts.insert("functional".into(), "besov_entries.csv".into());
        write_report(&dir, &rep, &timings)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// oscillation

fn run_oscillation(cfg: &RawConfig, out: Option<&Path>, seed: u64, profile: &str) -> CliResult<()> {
    need_config(cfg, "oscillation")?;
    cfg.validate_keys(&keys(
        &[FIELD_KEYS, SCHEDULE_KEYS, THRESHOLD_KEYS],
        &["q", "point", "double_avg", "seed"],
    ))?;
    let src = load_field(cfg)?;
    let th = load_thresholds(cfg, profile)?;
    let q = cfg.f64_or("q", 2.0)?;
    let point = load_point(cfg, &src.field)?;
    // Ball radii: the stencil guard needs two cell widths, not the pair floor.
    let sched = load_schedule(cfg, &src.field, (0.12, 0.75, 6), 2.0, "ball-radius")?;
    // Pairwise averages are quadratic in the stencil; off unless asked for.
    let want_double = match cfg.string("double_avg").as_deref() {
        None | Some("false") => false,
        Some("true") => true,
        Some(other) => {
            return Err(CliError::Config(format!(
                "double_avg must be 'true' or 'false'; got '{other}'"
            )))
        }
    };

    let mut timings = Timings::start();
    let classification = classify_point(&src.field, &point, &sched, &th).map_err(lift)?;
    timings.mark("classification");
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, &rho) in sched.values().iter().enumerate() {
        let mut row = vec![rho, classification.mean_osc[i].1, classification.inf_osc[i].1];
        if want_double {
            row.push(double_average(&src.field, &point, rho, q).map_err(lift)?);
        }
        rows.push(row);
    }
    timings.mark("ball profile");
    let rho_min = *sched.values().last().unwrap();
    let inf_const = inf_const_oscillation(&src.field, &point, rho_min, q).map_err(lift)?;
    timings.mark("inf-const oscillation");

    println!("field: {}", src.describe);
    println!("point: {:?}", &point[..src.field.domain().dim()]);
    println!(
        "classification: S {}  S' {}  S'' {}  (theta {:.6}, cauchy gap {:.6})",
        classification.in_s,
        classification.in_sprime,
        classification.in_sdoubleprime,
        classification.theta,
        classification.cauchy_gap
    );
    for note in &classification.notes {
        println!("  note: {note}");
    }
    println!(
        "inf-const oscillation at rho {:.6}: {:.6} (stencil {})",
        rho_min, inf_const.value, inf_const.stencil_size
    );

    #[derive(Serialize)]
    struct OscResults<'a> {
        q: f64,
        point: Vec<f64>,
        classification: &'a besovlab::oscillation::PointClassification,
        inf_const: &'a besovlab::oscillation::InfConstOscillation,
    }
    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("oscillation", seed, profile, cfg.echo());
        rep.field = Some(src.describe.clone());
        rep.set_results(&OscResults {
            q,
            point: point[..src.field.domain().dim()].to_vec(),
            classification: &classification,
            inf_const: &inf_const,
        })?;
        let header = if want_double {
            "rho mean_osc inf_osc double_avg"
        } else {
            "rho mean_osc inf_osc"
        };
        write_columns(&dir.file("oscillation.csv"), header, &rows)?;
        rep.artifacts.insert("profile".into(), "oscillation.csv".into());
        write_report(&dir, &rep, &timings)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// jumps

fn run_jumps(cfg: &RawConfig, out: Option<&Path>, seed: u64, profile: &str) -> CliResult<()> {
    need_config(cfg, "jumps")?;
    cfg.validate_keys(&keys(&[FIELD_KEYS, THRESHOLD_KEYS], &["q", "rho", "seed"]))?;
    let src = load_field(cfg)?;
    let th = load_thresholds(cfg, profile)?;
    let q = cfg.f64_or("q", 2.0)?;
    let h = src.field.domain().max_spacing();
    let rho = cfg.f64_or("rho", 5.0 * h)?;
    if rho < 4.0 * h {
        return Err(CliError::Guard(format!(
            "detection radius {rho:.6} is below the blow-up floor {:.6} (4 cell widths); \
             raise `rho` or refine the grid",
            4.0 * h
        )));
    }

    let mut timings = Timings::start();
    let detected = detect_jumps(&src.field, rho, &th).map_err(lift)?;
    timings.mark("detection");
    let variation = q_jump_variation(JumpSource::Detected(&detected), q);
    let spec_variation = src
        .gallery
        .as_ref()
        .and_then(|g| g.interface.as_ref())
        .map(|spec| q_jump_variation(JumpSource::Spec(spec), q));
    timings.mark("variation");

    println!("field: {}", src.describe);
    println!(
        "detection at rho {:.6}: {} elements, measure {:.6} (screened {}, tier-1 {}, tier-2 {})",
        rho,
        detected.elements.len(),
        detected.total_measure,
        detected.cells_screened,
        detected.cells_retained,
        detected.cells_classical
    );
    println!("q-jump variation (q {q}): {variation:.6}");
    if let Some(sv) = spec_variation {
        println!("q-jump variation of the declared interface: {sv:.6}");
    }

    #[derive(Serialize)]
    struct JumpResults<'a> {
        q: f64,
        rho: f64,
        detected: &'a besovlab::jumps::DetectedJumps,
        variation: f64,
        spec_variation: Option<f64>,
    }
    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("jumps", seed, profile, cfg.echo());
        rep.field = Some(src.describe.clone());
        rep.set_results(&JumpResults {
            q,
            rho,
            detected: &detected,
            variation,
            spec_variation,
        })?;
        write_interface(
            &dir.file("interface.txt"),
            &detected.elements,
            src.field.domain().dim(),
        )?;
        rep.artifacts.insert("interface".into(), "interface.txt".into());
        write_report(&dir, &rep, &timings)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

fn run_verify(cfg: &RawConfig, out: Option<&Path>, seed: u64, profile: &str) -> CliResult<()> {
    need_config(cfg, "verify")?;
    cfg.validate_keys(&keys(
        &[FIELD_KEYS, SCHEDULE_KEYS, THRESHOLD_KEYS],
        &["q", "rho", "source", "seed"],
    ))?;
    let src = load_field(cfg)?;
    let th = load_thresholds(cfg, profile)?;
    let q = cfg.f64_or("q", 2.0)?;
    if q < 1.0 {
        return Err(CliError::Config(format!("q must be at least 1; got {q}")));
    }
    let sched = load_schedule(cfg, &src.field, (0.12, 0.8, 6), 8.0, "pair-radius")?;
    let has_spec = src.gallery.as_ref().map_or(false, |g| g.interface.is_some());
    let source_kind = match cfg.string("source") {
        Some(s) if s == "spec" || s == "detected" => s,
        Some(other) => {
            return Err(CliError::Config(format!(
                "source must be 'spec' or 'detected'; got '{other}'"
            )))
        }
        None => if has_spec { "spec".into() } else { "detected".into() },
    };
    if source_kind == "spec" && !has_spec {
        return Err(CliError::Config(
            "source = spec needs a gallery field with a declared interface".into(),
        ));
    }
    let h = src.field.domain().max_spacing();
    let rho = cfg.f64_or("rho", 5.0 * h)?;
    if source_kind == "detected" && rho < 4.0 * h {
        return Err(CliError::Guard(format!(
            "detection radius {rho:.6} is below the blow-up floor {:.6} (4 cell widths); \
             raise `rho` or refine the grid",
            4.0 * h
        )));
    }

    let mut timings = Timings::start();
    let detected; // keeps the detection alive for the verdict's borrow
    let source = if source_kind == "spec" {
        JumpSource::Spec(src.gallery.as_ref().unwrap().interface.as_ref().unwrap())
    } else {
        detected = detect_jumps(&src.field, rho, &th).map_err(lift)?;
        timings.mark("detection");
        JumpSource::Detected(&detected)
    };
    let verdict = verify_jump_inequality(&src.field, q, &sched, source, &th).map_err(lift)?;
    timings.mark("verdict");

    println!("field: {}", src.describe);
    println!(
        "jump inequality (q {q}, source {source_kind}): lhs {:.6}  rhs {:.6}  ratio {:.6}",
        verdict.lhs, verdict.rhs, verdict.ratio
    );
    println!(
        "pass {} (tolerance {:.3})  weak-constant check {}  equality gap {:.6}",
        verdict.pass, verdict.tolerance, verdict.gamma_check, verdict.equality_gap
    );

    #[derive(Serialize)]
    struct VerifyResults<'a> {
        q: f64,
        source: &'a str,
        verdict: &'a besovlab::jumps::InequalityVerdict,
    }
    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("verify", seed, profile, cfg.echo());
        rep.field = Some(src.describe.clone());
        rep.set_results(&VerifyResults { q, source: &source_kind, verdict: &verdict })?;
        write_report(&dir, &rep, &timings)?;
    }
    if !verdict.pass {
        return Err(CliError::Verdict(format!(
            "jump inequality fails: lhs {:.6} exceeds rhs {:.6} by ratio {:.4} \
             (tolerance {:.3})",
            verdict.lhs, verdict.rhs, verdict.ratio, verdict.tolerance
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// lusin

const LUSIN_KEYS: &[&str] = &[
    "r",
    "q",
    "lusin.k.lower",
    "lusin.k.upper",
    "lusin.levels",
    "lusin.delta.top",
    "lusin.delta.ratio",
    "lusin.delta.count",
    "lusin.eps",
    "lusin.h",
    "export.path",
    "export.format",
    "seed",
];

fn run_lusin(cfg: &RawConfig, out: Option<&Path>, seed: u64, profile: &str) -> CliResult<()> {
    need_config(cfg, "lusin")?;
    cfg.validate_keys(&keys(&[FIELD_KEYS], LUSIN_KEYS))?;
    let src = load_field(cfg)?;
    let dim = src.field.domain().dim();
    let r = cfg.f64_or("r", 0.5)?;
    let q = cfg.f64_or("q", 2.0)?;
    let k_lower = cfg.require("lusin.k.lower", cfg.f64_list("lusin.k.lower")?)?;
    let k_upper = cfg.require("lusin.k.upper", cfg.f64_list("lusin.k.upper")?)?;
    if k_lower.len() != dim || k_upper.len() != dim {
        return Err(CliError::Config(format!(
            "lusin.k.lower/upper need {dim} coordinates for this field"
        )));
    }
    let levels = cfg
        .f64_list("lusin.levels")?
        .unwrap_or_else(|| vec![4.0, 8.0, 16.0, 32.0, 64.0]);
    let top = cfg.f64_or("lusin.delta.top", 0.09)?;
    let ratio = cfg.f64_or("lusin.delta.ratio", 0.75)?;
    let count = cfg.usize_or("lusin.delta.count", 13)?;
    if !(top > 0.0 && ratio > 0.0 && ratio < 1.0 && count > 0) {
        return Err(CliError::Config(
            "lusin.delta.* must satisfy top > 0, 0 < ratio < 1, count > 0".into(),
        ));
    }
    let deltas: Vec<f64> = (0..count).map(|k| top * ratio.powi(k as i32)).collect();
    let floor = 4.0 * src.field.domain().max_spacing();
    if let Some(&bad) = deltas.iter().find(|&&d| d < floor) {
        return Err(CliError::Guard(format!(
            "oscillation radius {bad:.6} is below the grid floor {floor:.6} (4 cell \
             widths); raise lusin.delta.top, lower lusin.delta.count, or refine the grid"
        )));
    }
    let eps_measure = cfg.f64_or("lusin.eps", 0.01)?;
    let h_override = cfg.f64_or("lusin.h", 0.0)?;

    let mut timings = Timings::start();
    let filt = build_filtration(&src.field, &k_lower, &k_upper, r, q, &levels, &deltas)
        .map_err(lift)?;
    timings.mark("filtration");
    let compact = select_compact(&filt, eps_measure).map_err(lift)?;
    timings.mark("compact selection");
    let holder = holder_constant_on(&src.field, &compact.cells, r).map_err(lift)?;
    timings.mark("holder constant");
    let h_used = holder.combined.max(h_override);
    let cert = holder_extend(&src.field, &compact.cells, r, h_used).map_err(lift)?;
    timings.mark("extension");

    let export_path = cfg.string("export.path");
    let export_format = parse_format(cfg)?;

    println!("field: {}", src.describe);
    for lv in &filt.levels {
        println!(
            "level n {:>8.1}: kept {} cells, removed measure {:.6}",
            lv.n, lv.kept_cells, lv.removed_measure
        );
    }
    for w in &filt.warnings {
        println!("  warning: {w}");
    }
    println!(
        "compact good set: level n {:.1}, {} cells, removed measure {:.6}",
        compact.n0,
        compact.cells.len(),
        compact.removed_measure
    );
    println!(
        "holder constant on the good set (r {r}): {:.6} ({} pairs{})",
        holder.combined,
        holder.pairs_used,
        if holder.exhaustive { "" } else { ", sampled" }
    );
    println!(
        "extension: h {:.6}, certified bound {:.6}, audit ratio {:.6} over {} pairs, \
         agreement exact {}",
        cert.h_used, cert.certified_bound, cert.audit_ratio, cert.audit_pairs,
        cert.agreement_exact
    );

    #[derive(Serialize)]
    struct LevelRow {
        n: f64,
        kept_cells: usize,
        removed_measure: f64,
        deltas_used: usize,
    }
    #[derive(Serialize)]
    struct LusinResults<'a> {
        r: f64,
        q: f64,
        k_lower: &'a [f64],
        k_upper: &'a [f64],
        levels: Vec<LevelRow>,
        warnings: &'a [String],
        chebyshev: &'a Option<besovlab::lusin::ChebyshevReport>,
        compact: &'a besovlab::lusin::CompactGoodSet,
        holder: &'a besovlab::lusin::HolderConstant,
        certificate: &'a besovlab::lusin::HolderCertificate,
    }
    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("lusin", seed, profile, cfg.echo());
        rep.field = Some(src.describe.clone());
        let level_rows: Vec<LevelRow> = filt
            .levels
            .iter()
            .map(|lv| LevelRow {
                n: lv.n,
                kept_cells: lv.kept_cells,
                removed_measure: lv.removed_measure,
                deltas_used: lv.deltas.len(),
            })
            .collect();
        rep.set_results(&LusinResults {
            r,
            q,
            k_lower: &k_lower,
            k_upper: &k_upper,
            levels: level_rows,
            warnings: &filt.warnings,
            chebyshev: &filt.chebyshev,
            compact: &compact,
            holder: &holder,
            certificate: &cert,
        })?;
        let table: Vec<Vec<f64>> = filt
            .levels
            .iter()
            .map(|lv| vec![lv.n, lv.kept_cells as f64, lv.removed_measure])
            .collect();
        write_columns(&dir.file("lusin_levels.csv"), "n kept_cells removed_measure", &table)?;
        rep.artifacts.insert("levels".into(), "lusin_levels.csv".into());
        if let Some(path) = &export_path {
            export(&cert.extension, Path::new(path), export_format).map_err(lift)?;
            rep.artifacts.insert("extension".into(), path.clone());
        }
        write_report(&dir, &rep, &timings)?;
    } else if let Some(path) = &export_path {
        export(&cert.extension, Path::new(path), export_format).map_err(lift)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gallery-list

fn run_gallery_list(cfg: &RawConfig, out: Option<&Path>, seed: u64, profile: &str) -> CliResult<()> {
    cfg.validate_keys(&["seed"])?;
    let rows = gallery_list();
    let mut text = String::new();
    for row in &rows {
        text.push_str(&format!(
            "{}\n  parameters: {}\n  validity:   {}\n  expected:   {}\n",
            row.name, row.params, row.validity, row.expected
        ));
    }
    print!("{text}");
    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("gallery-list", seed, profile, cfg.echo());
        rep.set_results(&rows)?;
        std::fs::write(dir.file("gallery.txt"), &text)
            .map_err(|e| CliError::Io(format!("cannot write gallery.txt: {e}")))?;
        rep.artifacts.insert("catalog".into(), "gallery.txt".into());
        write_report(&dir, &rep, &Timings::start())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// import / export

fn run_import(
    cfg: &RawConfig,
    path: Option<&Path>,
    out: Option<&Path>,
    seed: u64,
    profile: &str,
) -> CliResult<()> {
    cfg.validate_keys(&["field.import", "seed"])?;
    let path: PathBuf = match (path, cfg.string("field.import")) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(k)) => PathBuf::from(k),
        (None, None) => {
            return Err(CliError::Config(
                "import needs a field file: positional PATH or field.import key".into(),
            ))
        }
    };
    let mut timings = Timings::start();
    let field = import(&path).map_err(lift)?;
    timings.mark("import");
    let dom = field.domain();
    let dim = dom.dim();
    let n_cells: usize = dom.cells()[..dim].iter().product();
    let masked = (0..n_cells).filter(|&c| field.is_masked(c)).count();

    println!("file: {}", path.display());
    println!("dim {dim}, cells {:?}", &dom.cells()[..dim]);
    println!("box {:?} .. {:?}", &dom.lower()[..dim], &dom.upper()[..dim]);
    println!(
        "codomain dim {}, masked cells {masked}, oscillation scale {:.6}",
        field.codomain_dim(),
        field.osc_scale()
    );

    #[derive(Serialize)]
    struct ImportResults {
        path: String,
        dim: usize,
        cells: Vec<usize>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        codomain_dim: usize,
        masked_cells: usize,
        osc_scale: f64,
    }
    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("import", seed, profile, cfg.echo());
        rep.set_results(&ImportResults {
            path: path.display().to_string(),
            dim,
            cells: dom.cells()[..dim].to_vec(),
            lower: dom.lower()[..dim].to_vec(),
            upper: dom.upper()[..dim].to_vec(),
            codomain_dim: field.codomain_dim(),
            masked_cells: masked,
            osc_scale: field.osc_scale(),
        })?;
        write_report(&dir, &rep, &timings)?;
    }
    Ok(())
}

fn parse_format(cfg: &RawConfig) -> CliResult<PayloadFormat> {
    match cfg.string("export.format").as_deref() {
        None | Some("csv") => Ok(PayloadFormat::Csv),
        Some("binary") => Ok(PayloadFormat::BinaryLe),
        Some(other) => Err(CliError::Config(format!(
            "export.format must be 'csv' or 'binary'; got '{other}'"
        ))),
    }
}

fn run_export(cfg: &RawConfig, out: Option<&Path>, seed: u64, profile: &str) -> CliResult<()> {
    need_config(cfg, "export")?;
    cfg.validate_keys(&keys(&[FIELD_KEYS], &["export.path", "export.format", "seed"]))?;
    let src = load_field(cfg)?;
    let path = cfg.require("export.path", cfg.string("export.path"))?;
    let format = parse_format(cfg)?;

    let mut timings = Timings::start();
    export(&src.field, Path::new(&path), format).map_err(lift)?;
    timings.mark("export");
    // Round-trip audit: the written file must reproduce the samples bitwise.
    let back = import(Path::new(&path)).map_err(lift)?;
    let dim = src.field.domain().dim();
    let n_cells: usize = src.field.domain().cells()[..dim].iter().product();
    let exact = back.domain().dim() == dim
        && back.codomain_dim() == src.field.codomain_dim()
        && (0..n_cells).all(|c| {
            back.is_masked(c) == src.field.is_masked(c)
                && src
                    .field
                    .value(c)
                    .iter()
                    .zip(back.value(c))
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        });
    timings.mark("round-trip audit");
    if !exact {
        return Err(CliError::Io(format!(
            "round-trip audit failed: {path} does not reproduce the field bitwise"
        )));
    }

    println!("field: {}", src.describe);
    println!("wrote {path} ({:?}), round-trip exact", format);

    #[derive(Serialize)]
    struct ExportResults {
        path: String,
        format: String,
        cells: usize,
        round_trip_exact: bool,
    }
    if let Some(dir) = out {
        let dir = OutDir::create(dir)?;
        let mut rep = Report::new("export", seed, profile, cfg.echo());
        rep.field = Some(src.describe.clone());
        rep.set_results(&ExportResults {
            path: path.clone(),
            format: format!("{format:?}"),
            cells: n_cells,
            round_trip_exact: exact,
        })?;
        rep.artifacts.insert("field".into(), path);
        write_report(&dir, &rep, &timings)?;
    }
    Ok(())
}
