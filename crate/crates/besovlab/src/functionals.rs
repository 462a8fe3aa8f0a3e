//! Epsilon-family functionals and their window-limited estimates: the Besov
//! constants of the pair energy, translation seminorms under zero extension,
//! the Gagliardo seminorm, the pointwise supremal oscillation integral, and
//! local double averages.
//!
//! A "limit" in a radius is always proxied the same way: evaluate along a
//! geometric schedule, then read the trailing window. The window maximum and
//! minimum bracket every subsequential limit the data can support; the limit
//! is declared to exist only when their relative spread is small.

use crate::error::{Error, Result};
use crate::fields::Field;
use crate::kahan::{kahan_sum, par_chunk_sum, KahanSum};
use crate::quadrature::{ball_stencil, pair_integral, QKind};
use serde::{Deserialize, Serialize};

/// Ordered-pair budget for the quadratic-cost operations (Gagliardo seminorm,
/// sandwich bounds, Holder-constant audits, double averages).
pub const PAIR_COST_CAP: u128 = 1_000_000_000;

// ---------------------------------------------------------------------------
// Schedules and limit estimates
// ---------------------------------------------------------------------------

/// Geometric radius schedule eps_max * ratio^n, n = 0..count, with a trailing
/// window used for limit statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub eps_max: f64,
    pub ratio: f64,
    pub count: usize,
    pub window: usize,
}

impl EpsilonSchedule {
    pub fn new(eps_max: f64, ratio: f64, count: usize, window: usize) -> Result<EpsilonSchedule> {
        if !(eps_max > 0.0) || !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParams(format!(
                "schedule needs eps_max > 0 and ratio in (0,1); got {eps_max}, {ratio}"
            )));
        }
        if window < 2 || count < window {
            return Err(Error::InvalidParams(format!(
                "schedule needs count >= window >= 2; got count={count}, window={window}"
            )));
        }
        Ok(EpsilonSchedule { eps_max, ratio, count, window })
    }

    /// Default trailing window of 3.
    pub fn geometric(eps_max: f64, ratio: f64, count: usize) -> Result<EpsilonSchedule> {
        Self::new(eps_max, ratio, count, 3)
    }

    /// The radii, largest first.
    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|n| self.eps_max * self.ratio.powi(n as i32)).collect()
    }

    pub fn smallest(&self) -> f64 {
        self.eps_max * self.ratio.powi(self.count as i32 - 1)
    }
}

/// Trailing-window statistics of a radius-indexed family of values.
#[derive(Debug, Clone, Serialize)]
pub struct LimitEstimate {
    /// (radius, value), radius descending.
    pub entries: Vec<(f64, f64)>,
    pub window: usize,
    /// Maximum over the trailing window: upper bracket of every subsequential limit.
    pub limsup: f64,
    /// Minimum over the trailing window.
    pub liminf: f64,
    /// (limsup - liminf) / |limsup|, or 0 when limsup = 0.
    pub spread: f64,
    /// Whether the window spread is below the tolerance the estimate was built with.
    pub converged: bool,
    /// Log-log least-squares slope of value against radius over the window
    /// (NaN when a window value is not positive).
    pub slope: f64,
}

impl LimitEstimate {
    /// `entries` must be radius-descending; `window` trailing entries are read.
    pub fn from_entries(entries: Vec<(f64, f64)>, window: usize, spread_tol: f64) -> LimitEstimate {
        assert!(window >= 1 && window <= entries.len(), "window must fit the entries");
        let tail = &entries[entries.len() - window..];
        let limsup = tail.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let liminf = tail.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let spread = if limsup != 0.0 { (limsup - liminf) / limsup.abs() } else { 0.0 };
        let slope = if tail.iter().all(|e| e.1 > 0.0 && e.0 > 0.0) {
            let n = tail.len() as f64;
            let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
            for (r, v) in tail {
                let (x, y) = (r.ln(), v.ln());
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
            }
            (n * sxy - sx * sy) / (n * sxx - sx * sx)
        } else {
            f64::NAN
        };
        LimitEstimate {
            entries,
            window,
            limsup,
            liminf,
            spread,
            converged: spread < spread_tol,
            slope,
        }
    }
}

// ---------------------------------------------------------------------------
// Besov constants of the pair energy
// ---------------------------------------------------------------------------

/// The three window statistics of F(u, eps) along a schedule (kernel exponent
/// s = 1, the jump-normalized member of the family).
#[derive(Debug, Clone, Serialize)]
pub struct BesovConstants {
    /// Max of F over every schedule radius below 1 (the "hat" constant).
    pub hat: f64,
    /// Window statistics; `limsup` and `liminf` are the upper and lower constants.
    pub estimate: LimitEstimate,
}

/// Evaluate F(u, eps) along the schedule and read off the constants.
/// The window spread below `spread_tol` (0.05 for the default profile) is what
/// `estimate.converged` reports as "the limit exists".
pub fn besov_constants(
    field: &Field,
    q: f64,
    schedule: &EpsilonSchedule,
    spread_tol: f64,
) -> Result<BesovConstants> {
    let values = schedule.values();
    if !values.iter().any(|&e| e < 1.0) {
        return Err(Error::InvalidParams(
            "besov constants need at least one schedule radius below 1".into(),
        ));
    }
    let mut entries = Vec::with_capacity(values.len());
    for &eps in &values {
        entries.push((eps, pair_integral(field, eps, q, 1.0)?));
    }
    let hat = entries
        .iter()
        .filter(|e| e.0 < 1.0)
        .map(|e| e.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let estimate = LimitEstimate::from_entries(entries, schedule.window, spread_tol);
    Ok(BesovConstants { hat, estimate })
}

// ---------------------------------------------------------------------------
// Translation seminorm under zero extension
// ---------------------------------------------------------------------------

/// One sampled lattice shift of the translation seminorm.
#[derive(Debug, Clone, Serialize)]
pub struct TranslationSample {
    /// Direction in cell steps per axis.
    pub dir: [i32; 3],
    /// Number of lattice steps taken.
    pub steps: usize,
    /// Euclidean length of the realized shift.
    pub shift_len: f64,
    /// int |u(x+h) - u(x)|^q dx / |h|^{s q}.
    pub ratio: f64,
}

/// Max of the shift ratios over the sampled direction/magnitude grid.
#[derive(Debug, Clone, Serialize)]
pub struct TranslationSeminorm {
    pub value: f64,
    pub samples: Vec<TranslationSample>,
}

/// Axis directions plus the in-plane diagonals, first nonzero component positive.
/// Negated shifts give identical integrals under zero extension, so only one
/// sign class is sampled.
fn shift_directions(dim: usize) -> Vec<[i32; 3]> {
    match dim {
        1 => vec![[1, 0, 0]],
        2 => vec![[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, -1, 0]],
        _ => vec![
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [1, 1, 0],
            [1, -1, 0],
            [1, 0, 1],
            [1, 0, -1],
            [0, 1, 1],
            [0, 1, -1],
        ],
    }
}

/// Translation seminorm sup_h int_{R^N} |u(x+h) - u(x)|^q dx / |h|^{s q},
/// sampled over lattice-aligned shifts of magnitudes near rho, rho/2, rho/4.
/// The field is extended by zero, which requires the compact-support flag and
/// an unmasked field.
pub fn translation_seminorm(
    field: &Field,
    q: f64,
    s_exponent: f64,
    rho: f64,
) -> Result<TranslationSeminorm> {
    if !field.compact_support() {
        return Err(Error::NotCompactSupport);
    }
    if field.mask().is_some() {
        return Err(Error::MaskedUnsupported("translation seminorm"));
    }
    if q < 1.0 || !(s_exponent > 0.0) || !(rho > 0.0) {
        return Err(Error::InvalidParams(format!(
            "translation seminorm needs q >= 1, s > 0, rho > 0; got q={q}, s={s_exponent}, rho={rho}"
        )));
    }
    let domain = field.domain();
    let dim = domain.dim();
    let h = domain.spacing();
    let qk = QKind::of(q);
    let cellvol = domain.cell_volume();
    let d = field.codomain_dim();
    let values = field.values();
    let [nx, ny, nz] = domain.cells();
    let mut samples = Vec::new();
    for dir in shift_directions(dim) {
        let step_len = {
            let mut s2 = 0.0;
            for a in 0..dim {
                let t = dir[a] as f64 * h[a];
                s2 += t * t;
            }
            s2.sqrt()
        };
        for mag in [rho, rho / 2.0, rho / 4.0] {
            let steps = (mag / step_len).floor() as usize;
            if steps == 0 {
                return Err(Error::ResolutionTooCoarse {
                    quantity: "translation magnitude",
                    needed: step_len,
                    got: mag,
                });
            }
            let v = [
                dir[0] * steps as i32,
                dir[1] * steps as i32,
                dir[2] * steps as i32,
            ];
            // in-domain pairs |u(x+v) - u(x)|^q plus two one-sided strips |u|^q
            // where the partner leaves the box (zero extension on both sides)
            let in_range = |c: i64, n: usize| c >= 0 && c < n as i64;
            let mut acc = KahanSum::new();
            for iz in 0..nz as i64 {
                for iy in 0..ny as i64 {
                    for ix in 0..nx as i64 {
                        let i = (ix + nx as i64 * (iy + ny as i64 * iz)) as usize;
                        let (jx, jy, jz) = (ix + v[0] as i64, iy + v[1] as i64, iz + v[2] as i64);
                        let vi = &values[i * d..(i + 1) * d];
                        if in_range(jx, nx) && in_range(jy, ny) && in_range(jz, nz) {
                            let j = (jx + nx as i64 * (jy + ny as i64 * jz)) as usize;
                            let vj = &values[j * d..(j + 1) * d];
                            let mut n2 = 0.0;
                            for (a, b) in vi.iter().zip(vj) {
                                let t = a - b;
                                n2 += t * t;
                            }
                            acc.add(qk.of_norm2(n2));
                        } else {
                            // partner ahead is outside: |0 - u(x)|^q
                            let n2: f64 = vi.iter().map(|a| a * a).sum();
                            acc.add(qk.of_norm2(n2));
                        }
                        let (kx, ky, kz) = (ix - v[0] as i64, iy - v[1] as i64, iz - v[2] as i64);
                        if !(in_range(kx, nx) && in_range(ky, ny) && in_range(kz, nz)) {
                            // partner behind is outside: x+v lands here from the void
                            let n2: f64 = vi.iter().map(|a| a * a).sum();
                            acc.add(qk.of_norm2(n2));
                        }
                    }
                }
            }
            let shift_len = steps as f64 * step_len;
            let ratio = acc.value() * cellvol / shift_len.powf(s_exponent * q);
            samples.push(TranslationSample { dir, steps, shift_len, ratio });
        }
    }
    let value = samples.iter().map(|s| s.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(TranslationSeminorm { value, samples })
}

// ---------------------------------------------------------------------------
// Gagliardo seminorm
// ---------------------------------------------------------------------------

/// [u]^q over Omega x Omega with kernel |x-y|^{-(N + r q)}, midpoint pairs,
/// diagonal omitted. Errors beyond the ordered-pair cost cap.
pub fn gagliardo_seminorm(field: &Field, q: f64, r: f64) -> Result<f64> {
    if q < 1.0 || !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParams(format!(
            "gagliardo seminorm needs q >= 1 and r in (0,1); got q={q}, r={r}"
        )));
    }
    let domain = field.domain();
    let n = domain.n_cells();
    let pairs = n as u128 * (n as u128 - 1) / 2;
    if pairs > PAIR_COST_CAP {
        return Err(Error::CostCapExceeded { pairs, cap: PAIR_COST_CAP });
    }
    let dim = domain.dim();
    let exponent = -(dim as f64 + r * q) / 2.0; // applied to squared distance
    let qk = QKind::of(q);
    let d = field.codomain_dim();
    let values = field.values();
    let mask = field.mask();
    let centers: Vec<[f64; 3]> = (0..n).map(|i| domain.center_of(i)).collect();
    // upper-triangle pairs, doubled at the end; outer index parallel, inner serial
    let sum = par_chunk_sum(n, |i| {
        if mask.is_some_and(|m| m[i]) {
            return 0.0;
        }
        let ci = centers[i];
        let vi = &values[i * d..(i + 1) * d];
        let mut acc = 0.0;
        for j in (i + 1)..n {
            if mask.is_some_and(|m| m[j]) {
                continue;
            }
            let cj = centers[j];
            let dx = ci[0] - cj[0];
            let dy = ci[1] - cj[1];
            let dz = ci[2] - cj[2];
            let r2 = dx * dx + dy * dy + dz * dz;
            let mut n2 = 0.0;
            for (a, b) in vi.iter().zip(&values[j * d..(j + 1) * d]) {
                let t = a - b;
                n2 += t * t;
            }
            acc += qk.of_norm2(n2) * r2.powf(exponent);
        }
        acc
    });
    Ok(2.0 * sum * domain.cell_volume().powi(2))
}

// ---------------------------------------------------------------------------
// Pointwise supremal oscillation integral
// ---------------------------------------------------------------------------

/// The supremal oscillation quantity: per point,
///   A(x) = max over schedule radii of delta^{-(N + r q)} int_{B_delta(x) ∩ O} |u(y) - u(x)|^q dy,
/// and its integral over the box.
#[derive(Debug, Clone)]
pub struct SupremalOscillation {
    /// Per-cell A(x); masked cells hold 0 and are excluded from the total.
    pub per_point: Vec<f64>,
    /// int A(x) dx over unmasked cells.
    pub total: f64,
    /// The radii actually used, largest first.
    pub radii: Vec<f64>,
}

pub fn supremal_oscillation(
    field: &Field,
    q: f64,
    r: f64,
    radii: &[f64],
) -> Result<SupremalOscillation> {
    if q < 1.0 || !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "supremal oscillation needs q >= 1, r in (0,1]; got q={q}, r={r}"
        )));
    }
    let domain = field.domain();
    let needed = 2.0 * domain.max_spacing();
    for &delta in radii {
        if delta < needed {
            return Err(Error::ResolutionTooCoarse {
                quantity: "oscillation radius delta",
                needed,
                got: delta,
            });
        }
    }
    if radii.is_empty() {
        return Err(Error::InvalidParams("supremal oscillation needs radii".into()));
    }
    let dim = domain.dim();
    let h = domain.spacing();
    let [nx, ny, nz] = domain.cells();
    let qk = QKind::of(q);
    let d = field.codomain_dim();
    let values = field.values();
    let mask = field.mask();
    let cellvol = domain.cell_volume();
    let n = domain.n_cells();
    let mut per_point = vec![0.0; n];
    for &delta in radii {
        // offsets with |d| strictly inside the ball; k = 0 contributes nothing
        let kmax = |a: usize| -> i64 {
            if a < dim {
                (delta / h[a]).ceil() as i64
            } else {
                0
            }
        };
        let (kx, ky, kz) = (kmax(0), kmax(1), kmax(2));
        let mut offsets: Vec<(i64, i64, i64)> = Vec::new();
        for dz in -kz..=kz {
            for dy in -ky..=ky {
                for dx in -kx..=kx {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let dist2 = (dx as f64 * h[0]).powi(2)
                        + (dy as f64 * h[1]).powi(2)
                        + (dz as f64 * h[2]).powi(2);
                    if dist2 < delta * delta {
                        offsets.push((dx, dy, dz));
                    }
                }
            }
        }
        let scale = cellvol * delta.powf(-(dim as f64 + r * q));
        let stage: Vec<f64> = (0..n)
            .map(|i| {
                if mask.is_some_and(|m| m[i]) {
                    return 0.0;
                }
                let [ix, iy, iz] = domain.coords(i);
                let vi = &values[i * d..(i + 1) * d];
                let mut acc = 0.0;
                for &(dx, dy, dz) in &offsets {
                    let jx = ix as i64 + dx;
                    let jy = iy as i64 + dy;
                    let jz = iz as i64 + dz;
                    if jx < 0
                        || jx >= nx as i64
                        || jy < 0
                        || jy >= ny as i64
                        || jz < 0
                        || jz >= nz as i64
                    {
                        continue;
                    }
                    let j = (jx + nx as i64 * (jy + ny as i64 * jz)) as usize;
                    if mask.is_some_and(|m| m[j]) {
                        continue;
                    }
                    let mut n2 = 0.0;
                    for (a, b) in vi.iter().zip(&values[j * d..(j + 1) * d]) {
                        let t = a - b;
                        n2 += t * t;
                    }
                    acc += qk.of_norm2(n2);
                }
                acc * scale
            })
            .collect();
        for (p, s) in per_point.iter_mut().zip(stage) {
            *p = f64::max(*p, s);
        }
    }
    let total = kahan_sum(
        per_point
            .iter()
            .enumerate()
            .filter(|(i, _)| !mask.is_some_and(|m| m[*i]))
            .map(|(_, v)| v * cellvol),
    );
    Ok(SupremalOscillation { per_point, total, radii: radii.to_vec() })
}

// ---------------------------------------------------------------------------
// Local double averages and mean oscillation
// ---------------------------------------------------------------------------

/// Double average over the ball: (1/m^2) sum over ordered stencil pairs
/// of |u(x') - u(y')|^q (diagonal zeros included in the denominator).
pub fn double_average(field: &Field, x: &[f64; 3], rho: f64, q: f64) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::InvalidParams(format!("double average needs q >= 1, got {q}")));
    }
    let stencil = ball_stencil(field, x, rho)?;
    let cells = stencil.cells();
    let m = cells.len() as u128;
    if m * m > PAIR_COST_CAP {
        return Err(Error::CostCapExceeded { pairs: m * m, cap: PAIR_COST_CAP });
    }
    let qk = QKind::of(q);
    let d = field.codomain_dim();
    let values = field.values();
    let mut acc = KahanSum::new();
    for (a, &i) in cells.iter().enumerate() {
        let vi = &values[i * d..(i + 1) * d];
        let mut row = 0.0;
        for &j in &cells[a + 1..] {
            let mut n2 = 0.0;
            for (p, qv) in vi.iter().zip(&values[j * d..(j + 1) * d]) {
                let t = p - qv;
                n2 += t * t;
            }
            row += qk.of_norm2(n2);
        }
        acc.add(row);
    }
    Ok(2.0 * acc.value() / (m * m) as f64)
}

/// Mean q-oscillation around the ball mean: avg over B_rho(x) of |u - u_B|^q.
pub fn mean_q_oscillation(field: &Field, x: &[f64; 3], rho: f64, q: f64) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::InvalidParams(format!("mean oscillation needs q >= 1, got {q}")));
    }
    let stencil = ball_stencil(field, x, rho)?;
    let mean = stencil.mean(field);
    Ok(stencil.mean_q_dev(field, q, &mean))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gallery, make_domain, Field, GalleryRequest};
    use approx::assert_relative_eq;

    fn indicator_strip() -> Field {
        // chi of (0.25, 0.75) inside (0,1), compactly supported
        let domain = make_domain(1, &[0.0], &[1.0], &[1024]).unwrap();
        Field::from_fn(domain, 1, |p, out| {
            out[0] = if p[0] > 0.25 && p[0] < 0.75 { 1.0 } else { 0.0 };
            true
        })
        .with_compact_support(true)
    }

    #[test]
    fn schedule_values_and_guards() {
        let s = EpsilonSchedule::geometric(0.2, 0.7, 9).unwrap();
        let v = s.values();
        assert_eq!(v.len(), 9);
        assert_relative_eq!(v[0], 0.2);
        assert_relative_eq!(v[8], 0.2 * 0.7f64.powi(8), max_relative = 1e-12);
        assert_relative_eq!(s.smallest(), v[8], max_relative = 1e-12);
        assert!(EpsilonSchedule::new(0.2, 1.1, 5, 3).is_err());
        assert!(EpsilonSchedule::new(0.2, 0.5, 2, 3).is_err());
    }

    #[test]
    fn limit_estimate_windows_and_spread() {
        let entries = vec![(0.4, 5.0), (0.2, 2.0), (0.1, 2.01), (0.05, 1.99)];
        let est = LimitEstimate::from_entries(entries, 3, 0.05);
        assert_relative_eq!(est.limsup, 2.01);
        assert_relative_eq!(est.liminf, 1.99);
        assert!(est.converged);
        let diverging = vec![(0.4, 1.0), (0.2, 2.0), (0.1, 4.0), (0.05, 8.0)];
        let est2 = LimitEstimate::from_entries(diverging, 3, 0.05);
        assert!(!est2.converged);
        assert!(est2.slope < -0.9, "doubling per halving means slope near -1");
    }

    #[test]
    fn besov_constants_of_the_unit_step() {
        let mut req = GalleryRequest::named("step1d");
        req.cells = Some(vec![1024]);
        let f = gallery(&req).unwrap().field;
        let schedule = EpsilonSchedule::geometric(0.2, 0.7, 9).unwrap();
        let bc = besov_constants(&f, 1.0, &schedule, 0.05).unwrap();
        // continuum value is exactly 2 at every radius
        assert!(
            bc.estimate.liminf > 1.96 && bc.estimate.limsup < 2.04,
            "window [{}, {}]",
            bc.estimate.liminf,
            bc.estimate.limsup
        );
        assert!(bc.hat >= bc.estimate.limsup);
        assert!(bc.estimate.converged);
    }

    #[test]
    fn translation_seminorm_of_an_indicator_is_two() {
        // int |chi(x+h) - chi(x)|^2 dx = 2|h|, so the s = 1/2, q = 2 ratio is 2.
        let f = indicator_strip();
        let t = translation_seminorm(&f, 2.0, 0.5, 0.04).unwrap();
        assert_relative_eq!(t.value, 2.0, max_relative = 1e-12);
        for s in &t.samples {
            assert_relative_eq!(s.ratio, 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn translation_seminorm_requires_compact_support() {
        let f = indicator_strip().with_compact_support(false);
        assert!(matches!(
            translation_seminorm(&f, 2.0, 0.5, 0.04),
            Err(Error::NotCompactSupport)
        ));
    }

    #[test]
    fn gagliardo_linear_field_oracles() {
        // u = x on (0,1): r=1/2, q=2 gives int int 1 = 1 (minus the h-wide diagonal);
        // r=1/4, q=2 gives int int |x-y|^{1/2} = 8/15.
        let domain = make_domain(1, &[0.0], &[1.0], &[1024]).unwrap();
        let f = Field::from_fn(domain, 1, |p, out| {
            out[0] = p[0];
            true
        });
        let g_half = gagliardo_seminorm(&f, 2.0, 0.5).unwrap();
        assert_relative_eq!(g_half, 1.0, max_relative = 0.02);
        let g_quarter = gagliardo_seminorm(&f, 2.0, 0.25).unwrap();
        assert_relative_eq!(g_quarter, 8.0 / 15.0, max_relative = 0.02);
    }

    #[test]
    fn gagliardo_respects_the_cost_cap() {
        let domain = make_domain(2, &[0.0; 2], &[1.0; 2], &[256, 256]).unwrap();
        let f = Field::from_samples(domain, 1, vec![0.0; 65536], None).unwrap();
        assert!(matches!(
            gagliardo_seminorm(&f, 2.0, 0.5),
            Err(Error::CostCapExceeded { .. })
        ));
    }

    #[test]
    fn supremal_oscillation_of_the_step() {
        // For x at distance t from the jump, sup over delta of (delta - t)/delta^2
        // is 1/(4t), attained at delta = 2t. With t = 0.1 the schedule hits the
        // optimum exactly at delta = 0.2.
        let mut req = GalleryRequest::named("step1d");
        req.cells = Some(vec![1024]);
        let f = gallery(&req).unwrap().field;
        let radii: Vec<f64> = (0..6).map(|k| 0.2 * 0.7f64.powi(k)).collect();
        let a = supremal_oscillation(&f, 2.0, 0.5, &radii).unwrap();
        let cell = ((-0.1 - (-0.5)) / f.domain().spacing()[0]).floor() as usize;
        let t = -f.domain().center_of(cell)[0];
        assert_relative_eq!(a.per_point[cell], 0.25 / t, max_relative = 0.03);
        assert!(a.total > 0.0);
    }

    #[test]
    fn double_average_at_the_step_is_half() {
        let f = gallery(&GalleryRequest::named("step1d")).unwrap().field;
        let da = double_average(&f, &[0.0, 0.0, 0.0], 0.05, 1.0).unwrap();
        assert_relative_eq!(da, 0.5, max_relative = 1e-12);
        let da2 = double_average(&f, &[0.0, 0.0, 0.0], 0.05, 2.0).unwrap();
        assert_relative_eq!(da2, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn mean_q_oscillation_at_the_step_is_quarter() {
        let f = gallery(&GalleryRequest::named("step1d")).unwrap().field;
        let v = mean_q_oscillation(&f, &[0.0, 0.0, 0.0], 0.05, 2.0).unwrap();
        assert_relative_eq!(v, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn jensen_mean_oscillation_below_double_average() {
        // |u - mean|^q averaged is at most the double average, by convexity.
        let domain = make_domain(1, &[0.0], &[1.0], &[512]).unwrap();
        let f = Field::from_fn(domain, 1, |p, out| {
            out[0] = (17.0 * p[0]).sin() + 0.3 * (51.0 * p[0]).cos();
            true
        });
        for rho in [0.05, 0.1] {
            let osc = mean_q_oscillation(&f, &[0.4, 0.0, 0.0], rho, 2.0).unwrap();
            let da = double_average(&f, &[0.4, 0.0, 0.0], rho, 2.0).unwrap();
            assert!(osc <= da + 1e-12, "rho={rho}: {osc} > {da}");
        }
    }
}
