//! Oscillation blow-up machinery: thresholds, best-constant oscillation,
//! blow-up step fits over normal grids, the point classifier for the
//! singular-set hierarchy S'' ⊆ S' ⊆ S, and the two-tier jump probe.
//!
//! Tier 1 (generalized jump): the blow-up of u near x is step-like up to an
//! additive drift — the best two-sided constant fit has small residual.
//! Tier 2 (classical jump): on top of tier 1, one-sided ball averages actually
//! settle at the fitted levels at two radii. Fields whose oscillation rides a
//! slowly-varying unbounded drift pass tier 1 and fail tier 2; that gap is the
//! whole point of the distinction.

use crate::error::{Error, Result};
use crate::fields::Field;
use crate::functionals::{double_average, EpsilonSchedule, LimitEstimate};
use crate::quadrature::{ball_stencil, halfball_averages, BallStencil};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Thresholds
// ---------------------------------------------------------------------------

/// Every cutoff the classifiers and verdicts use, in one place. The default
/// profile is calibrated for desk-scale grids; the strict profile halves the
/// slack for clean analytic fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thresholds {
    /// Absolute floor of the smallness threshold theta.
    pub theta_abs: f64,
    /// Relative part of theta, in units of the field's oscillation scale.
    pub theta_rel: f64,
    /// Jump-height floor, in units of theta.
    pub jump_scale: f64,
    /// Trailing-window length for limit reads.
    pub window: usize,
    /// Window spread below which a limit is declared to exist.
    pub spread_tol: f64,
    /// Minimum fitted log-log decay slope for a "passes to zero" verdict.
    pub slope_min: f64,
    /// Maximum last/first value ratio for a decay verdict.
    pub ratio_max: f64,
    /// Per-step non-monotonicity slack in the decay test.
    pub wiggle: f64,
    /// Step-fit residual acceptance, relative to the fitted height (tier 1).
    pub resid_rel: f64,
    /// Half-ball average deviation acceptance, relative to the height (tier 2).
    pub tier2_rel: f64,
    /// Slack on inequality verdicts: pass iff lhs <= rhs * (1 + ratio_tol).
    pub ratio_tol: f64,
}

impl Thresholds {
    pub fn default_profile() -> Thresholds {
        Thresholds {
            theta_abs: 1e-3,
            theta_rel: 1e-2,
            jump_scale: 10.0,
            window: 3,
            spread_tol: 0.05,
            slope_min: 0.05,
            ratio_max: 0.7,
            wiggle: 0.02,
            resid_rel: 0.45,
            tier2_rel: 0.1,
            ratio_tol: 0.05,
        }
    }

    /// Tightened profile for clean analytic fixtures.
    pub fn strict_profile() -> Thresholds {
        Thresholds {
            theta_abs: 1e-4,
            theta_rel: 1e-3,
            jump_scale: 10.0,
            window: 3,
            spread_tol: 0.02,
            slope_min: 0.1,
            ratio_max: 0.6,
            wiggle: 0.01,
            resid_rel: 0.35,
            tier2_rel: 0.05,
            ratio_tol: 0.02,
        }
    }

    /// Smallness threshold for this field: theta_abs + theta_rel * oscillation scale.
    pub fn theta_for(&self, field: &Field) -> f64 {
        self.theta_abs + self.theta_rel * field.osc_scale()
    }

    /// Minimum credible jump height for this field.
    pub fn jump_threshold(&self, field: &Field) -> f64 {
        self.jump_scale * self.theta_for(field)
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::default_profile()
    }
}

// ---------------------------------------------------------------------------
// Best-constant oscillation
// ---------------------------------------------------------------------------

/// Lower-middle median: for even counts the smaller of the two middle values.
/// Deterministic under ties.
fn median_lower(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

/// Minimizer of sum_i |p_i - c| over c (Euclidean norm on the codomain).
/// Scalars get the exact median; vectors start at the coordinate medians and
/// are polished by a deterministic compass search.
fn geometric_median(points: &[f64], d: usize) -> Vec<f64> {
    let m = points.len() / d;
    assert!(m > 0);
    let mut sorted = vec![0.0; m];
    let mut c = vec![0.0; d];
    let mut spread = 0.0f64;
    for k in 0..d {
        for (i, s) in sorted.iter_mut().enumerate() {
            *s = points[i * d + k];
        }
        sorted.sort_by(f64::total_cmp);
        c[k] = median_lower(&sorted);
        spread = spread.max(sorted[m - 1] - sorted[0]);
    }
    if d == 1 || spread == 0.0 {
        return c;
    }
    let obj = |c: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..m {
            let mut n2 = 0.0;
            for k in 0..d {
                let t = points[i * d + k] - c[k];
                n2 += t * t;
            }
            s += n2.sqrt();
        }
        s
    };
    let mut best = obj(&c);
    let mut step = spread / 4.0;
    let floor = 1e-8 * spread;
    let mut iter = 0;
    while step > floor && iter < 200 {
        iter += 1;
        let mut improved = false;
        for k in 0..d {
            for sgn in [1.0, -1.0] {
                let mut cand = c.clone();
                cand[k] += sgn * step;
                let v = obj(&cand);
                if v < best {
                    best = v;
                    c = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    c
}

/// Best-constant q-oscillation on a ball: value and minimizer of
/// avg over B_rho(x) of |u - c|^q. q = 1 uses the exact median machinery;
/// q = 2 the mean; other q a compass descent on the convex objective.
#[derive(Debug, Clone, Serialize)]
pub struct InfConstOscillation {
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub stencil_size: usize,
}

pub fn inf_const_oscillation(
    field: &Field,
    x: &[f64; 3],
    rho: f64,
    q: f64,
) -> Result<InfConstOscillation> {
    let stencil = ball_stencil(field, x, rho)?;
    Ok(stencil_inf_const_osc(field, &stencil, q))
}

pub(crate) fn stencil_inf_const_osc(
    field: &Field,
    stencil: &BallStencil,
    q: f64,
) -> InfConstOscillation {
    let d = field.codomain_dim();
    let cells = stencil.cells();
    let m = cells.len();
    let mut pts = Vec::with_capacity(m * d);
    for &c in cells {
        pts.extend_from_slice(field.value(c));
    }
    let minimizer = if q == 1.0 {
        geometric_median(&pts, d)
    } else if q == 2.0 {
        let mut mean = vec![0.0; d];
        for i in 0..m {
            for k in 0..d {
                mean[k] += pts[i * d + k];
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        mean
    } else {
        // convex objective; start at the mean and compass-descend
        let mut c = vec![0.0; d];
        for i in 0..m {
            for k in 0..d {
                c[k] += pts[i * d + k];
            }
        }
        c.iter_mut().for_each(|v| *v /= m as f64);
        let obj = |c: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..m {
                let mut n2 = 0.0;
                for k in 0..d {
                    let t = pts[i * d + k] - c[k];
                    n2 += t * t;
                }
                s += n2.powf(q / 2.0);
            }
            s
        };
        let mut spread = 0.0f64;
        for k in 0..d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..m {
                lo = lo.min(pts[i * d + k]);
                hi = hi.max(pts[i * d + k]);
            }
            spread = spread.max(hi - lo);
        }
        let mut best = obj(&c);
        let mut step = spread / 4.0;
        let mut iter = 0;
        while step > 1e-8 * spread.max(1e-300) && iter < 200 {
            iter += 1;
            let mut improved = false;
            for k in 0..d {
                for sgn in [1.0, -1.0] {
                    let mut cand = c.clone();
                    cand[k] += sgn * step;
                    let v = obj(&cand);
                    if v < best {
                        best = v;
                        c = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        c
    };
    let value = stencil.mean_q_dev(field, q, &minimizer);
    InfConstOscillation { value, minimizer, stencil_size: m }
}

// ---------------------------------------------------------------------------
// Normal grids
// ---------------------------------------------------------------------------

/// Normalize and snap sub-noise components to exact zero: grid directions
/// must classify on-plane lattice rows as on-plane (strict dot = 0), not by
/// the sign of a 1e-17 rounding residue.
fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let mut out = [v[0] / n, v[1] / n, v[2] / n];
    for t in &mut out {
        if t.abs() < 1e-12 {
            *t = 0.0;
        }
    }
    out
}

/// Quantized key for deduplication and stable ordering of unit vectors.
fn vec_key(v: &[f64; 3]) -> [i64; 3] {
    [
        (v[0] * 1e9).round() as i64,
        (v[1] * 1e9).round() as i64,
        (v[2] * 1e9).round() as i64,
    ]
}

const ICOSA_FACES: [[usize; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

fn icosa_vertices() -> Vec<[f64; 3]> {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize3)
    .collect()
}

/// Lattice point (i, j) of face (a, b, c) at frequency f, projected to the sphere.
fn face_point(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3], i: usize, j: usize, f: usize) -> [f64; 3] {
    let (wi, wj) = (i as f64 / f as f64, j as f64 / f as f64);
    let wa = 1.0 - wi - wj;
    normalize3([
        wa * a[0] + wi * b[0] + wj * c[0],
        wa * a[1] + wi * b[1] + wj * c[1],
        wa * a[2] + wi * b[2] + wj * c[2],
    ])
}

fn icosphere_vertices(f: usize) -> Vec<[f64; 3]> {
    let base = icosa_vertices();
    let mut seen = std::collections::BTreeMap::new();
    for face in &ICOSA_FACES {
        let (a, b, c) = (&base[face[0]], &base[face[1]], &base[face[2]]);
        for i in 0..=f {
            for j in 0..=(f - i) {
                let p = face_point(a, b, c, i, j, f);
                seen.entry(vec_key(&p)).or_insert(p);
            }
        }
    }
    seen.into_values().collect()
}

fn icosphere_face_centroids(f: usize) -> Vec<[f64; 3]> {
    let base = icosa_vertices();
    let mut out = std::collections::BTreeMap::new();
    for face in &ICOSA_FACES {
        let (a, b, c) = (&base[face[0]], &base[face[1]], &base[face[2]]);
        let mut push = |p1: [f64; 3], p2: [f64; 3], p3: [f64; 3]| {
            let centroid = normalize3([
                (p1[0] + p2[0] + p3[0]) / 3.0,
                (p1[1] + p2[1] + p3[1]) / 3.0,
                (p1[2] + p2[2] + p3[2]) / 3.0,
            ]);
            out.entry(vec_key(&centroid)).or_insert(centroid);
        };
        for i in 0..f {
            for j in 0..(f - i) {
                // upward sub-triangle
                push(
                    face_point(a, b, c, i, j, f),
                    face_point(a, b, c, i + 1, j, f),
                    face_point(a, b, c, i, j + 1, f),
                );
                // downward sub-triangle
                if i + j + 2 <= f {
                    push(
                        face_point(a, b, c, i + 1, j, f),
                        face_point(a, b, c, i + 1, j + 1, f),
                        face_point(a, b, c, i, j + 1, f),
                    );
                }
            }
        }
    }
    out.into_values().collect()
}

/// Candidate unit normals for blow-up fits: {+e1} and {-e1} in 1D, 64 equal
/// angles in 2D, and in 3D the 162 vertices of a frequency-4 geodesic
/// icosahedron together with the 80 projected face centroids of the
/// frequency-2 one (242 directions, antipodally symmetric).
pub fn normal_grid(dim: usize) -> Vec<[f64; 3]> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => (0..64)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                normalize3([a.cos(), a.sin(), 0.0])
            })
            .collect(),
        3 => {
            let mut v = icosphere_vertices(4);
            let mut c = icosphere_face_centroids(2);
            debug_assert_eq!(v.len(), 162);
            debug_assert_eq!(c.len(), 80);
            v.append(&mut c);
            v
        }
        _ => panic!("normal grids exist for dimensions 1..=3"),
    }
}

// ---------------------------------------------------------------------------
// Blow-up step fit
// ---------------------------------------------------------------------------

/// Best two-sided constant fit of u on B_rho(x): u ~ c + h * chi_{(y-x).nu > 0}.
/// `residual` is the sum of the two side-mean absolute deviations; the sign
/// convention makes the first nonzero component of h positive (flipping
/// (h, nu, c) to (-h, -nu, c + h) as needed).
#[derive(Debug, Clone, Serialize)]
pub struct StepFit {
    pub nu: [f64; 3],
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Euclidean length of h.
    pub height: f64,
    /// mean_plus |u - (c+h)| + mean_minus |u - c|.
    pub residual: f64,
    pub rho: f64,
    pub n_plus: usize,
    pub n_minus: usize,
}

/// Fit over every grid direction; ties resolve to the earliest grid entry.
pub fn blowup_step_fit(
    field: &Field,
    x: &[f64; 3],
    rho: f64,
    grid: &[[f64; 3]],
) -> Result<StepFit> {
    let stencil = ball_stencil(field, x, rho)?;
    let d = field.codomain_dim();
    let domain = field.domain();
    let cells = stencil.cells();
    // (fit, side imbalance): residual decides, the more balanced split breaks
    // ties — at clipped stencils several normals can classify every sample
    // correctly, and only the balanced one matches the blow-up model
    let mut best: Option<(StepFit, usize)> = None;
    let mut plus_pts: Vec<f64> = Vec::new();
    let mut minus_pts: Vec<f64> = Vec::new();
    for nu in grid {
        plus_pts.clear();
        minus_pts.clear();
        let mut n_plus = 0usize;
        let mut n_minus = 0usize;
        for &cell in cells {
            let c = domain.center_of(cell);
            let dot = (c[0] - x[0]) * nu[0] + (c[1] - x[1]) * nu[1] + (c[2] - x[2]) * nu[2];
            if dot > 0.0 {
                n_plus += 1;
                plus_pts.extend_from_slice(field.value(cell));
            } else if dot < 0.0 {
                n_minus += 1;
                minus_pts.extend_from_slice(field.value(cell));
            }
        }
        if n_plus == 0 || n_minus == 0 {
            continue;
        }
        let a = geometric_median(&plus_pts, d);
        let b = geometric_median(&minus_pts, d);
        let mean_dev = |pts: &[f64], c: &[f64]| -> f64 {
            let m = pts.len() / d;
            let mut s = 0.0;
            for i in 0..m {
                let mut n2 = 0.0;
                for k in 0..d {
                    let t = pts[i * d + k] - c[k];
                    n2 += t * t;
                }
                s += n2.sqrt();
            }
            s / m as f64
        };
        let residual = mean_dev(&plus_pts, &a) + mean_dev(&minus_pts, &b);
        let imbalance = n_plus.abs_diff(n_minus);
        let improves = match &best {
            None => true,
            Some((f, bal)) => {
                let eps = 1e-12 * (1.0 + f.residual);
                residual < f.residual - eps
                    || ((residual - f.residual).abs() <= eps && imbalance < *bal)
            }
        };
        if improves {
            let h: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let height = h.iter().map(|t| t * t).sum::<f64>().sqrt();
            let fit = StepFit {
                nu: *nu,
                h,
                c: b,
                height,
                residual,
                rho,
                n_plus,
                n_minus,
            };
            best = Some((fit, imbalance));
        }
    }
    let mut fit = best.map(|b| b.0).ok_or(Error::DegenerateHalfBall(x[0], x[1], x[2]))?;
    // sign convention: first component of h exceeding noise must be positive
    let flip = fit
        .h
        .iter()
        .find(|&&t| t.abs() > 1e-14 * fit.height.max(1e-300))
        .is_some_and(|&t| t < 0.0);
    if flip {
        for (c, h) in fit.c.iter_mut().zip(&fit.h) {
            *c += h;
        }
        fit.h.iter_mut().for_each(|t| *t = -*t);
        fit.nu = [-fit.nu[0], -fit.nu[1], -fit.nu[2]];
        std::mem::swap(&mut fit.n_plus, &mut fit.n_minus);
    }
    Ok(fit)
}

// ---------------------------------------------------------------------------
// Decay verdicts and the point classifier
// ---------------------------------------------------------------------------

/// Outcome of the "passes to zero" test on a radius-descending value family.
#[derive(Debug, Clone, Serialize)]
pub struct DecayVerdict {
    pub passes: bool,
    /// Which branch decided: "below-threshold", "decays", or "fails".
    pub branch: &'static str,
    pub window_max: f64,
    pub window_min: f64,
}

/// A family passes to zero if its trailing window already sits below theta, or
/// if it decays: non-increasing up to the wiggle slack, with a positive fitted
/// log-log slope and an overall drop below the ratio cap.
pub fn passes_to_zero(values: &[(f64, f64)], theta: f64, th: &Thresholds) -> DecayVerdict {
    assert!(values.len() >= th.window, "need at least a window of values");
    let tail = &values[values.len() - th.window..];
    let window_max = tail.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let window_min = tail.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    if window_max < theta {
        return DecayVerdict { passes: true, branch: "below-threshold", window_max, window_min };
    }
    let monotone = values
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + th.wiggle));
    let first = values[0].1;
    let last = values[values.len() - 1].1;
    let ratio_ok = first > 0.0 && last / first <= th.ratio_max;
    let slope = {
        if values.iter().all(|v| v.0 > 0.0 && v.1 > 0.0) {
            let n = values.len() as f64;
            let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
            for (r, v) in values {
                let (x, y) = (r.ln(), v.ln());
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
            }
            (n * sxy - sx * sy) / (n * sxx - sx * sx)
        } else {
            f64::NAN
        }
    };
    let passes = monotone && ratio_ok && slope >= th.slope_min;
    DecayVerdict {
        passes,
        branch: if passes { "decays" } else { "fails" },
        window_max,
        window_min,
    }
}

/// Classification of one point against the singular-set hierarchy.
#[derive(Debug, Clone, Serialize)]
pub struct PointClassification {
    pub in_s: bool,
    pub in_sprime: bool,
    pub in_sdoubleprime: bool,
    /// Max successive ball-average gap over the trailing window.
    pub cauchy_gap: f64,
    /// (rho, mean |u - u_B|) along the schedule.
    pub mean_osc: Vec<(f64, f64)>,
    /// (rho, best-constant oscillation) along the schedule.
    pub inf_osc: Vec<(f64, f64)>,
    pub theta: f64,
    /// Human-readable decision trail.
    pub notes: Vec<String>,
}

/// Classify a point: S collects points whose ball averages fail to settle or
/// whose mean oscillation fails to vanish; S' those whose best-constant
/// oscillation fails to pass to zero; S'' relaxes S' along subsequences
/// (window minimum). The inclusions S'' ⊆ S' ⊆ S are enforced by construction.
pub fn classify_point(
    field: &Field,
    x: &[f64; 3],
    schedule: &EpsilonSchedule,
    th: &Thresholds,
) -> Result<PointClassification> {
    let radii = schedule.values();
    let theta = th.theta_for(field);
    let d = field.codomain_dim();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(radii.len());
    let mut mean_osc = Vec::with_capacity(radii.len());
    let mut inf_osc = Vec::with_capacity(radii.len());
    for &rho in &radii {
        let stencil = ball_stencil(field, x, rho)?;
        let mean = stencil.mean(field);
        let osc = stencil.mean_q_dev(field, 1.0, &mean);
        let info = stencil_inf_const_osc(field, &stencil, 1.0);
        means.push(mean);
        mean_osc.push((rho, osc));
        inf_osc.push((rho, info.value));
    }
    let mut notes = Vec::new();

    // S: ball averages Cauchy along the window AND mean oscillation passes to zero
    let w = th.window.min(means.len() - 1);
    let cauchy_gap = means[means.len() - 1 - w..]
        .windows(2)
        .map(|p| {
            let mut n2 = 0.0;
            for k in 0..d {
                let t = p[1][k] - p[0][k];
                n2 += t * t;
            }
            n2.sqrt()
        })
        .fold(0.0f64, f64::max);
    let cauchy = cauchy_gap < theta;
    let osc_verdict = passes_to_zero(&mean_osc, theta, th);
    let raw_s = !(cauchy && osc_verdict.passes);
    notes.push(format!(
        "ball averages {} (max window gap {:.3e} vs theta {:.3e}); mean oscillation {}",
        if cauchy { "settle" } else { "drift" },
        cauchy_gap,
        theta,
        osc_verdict.branch
    ));

    // S': best-constant oscillation passes to zero
    let inf_verdict = passes_to_zero(&inf_osc, theta, th);
    let raw_sprime = !inf_verdict.passes;
    notes.push(format!("best-constant oscillation {}", inf_verdict.branch));

    // S'': also allow vanishing along a subsequence (window minimum below theta)
    let raw_sdouble = !(inf_verdict.passes || inf_verdict.window_min < theta);
    if inf_verdict.window_min < theta && !inf_verdict.passes {
        notes.push("a subsequence of best-constant oscillations reaches theta".into());
    }

    // enforce the inclusions
    let in_sdoubleprime = raw_sdouble;
    let in_sprime = raw_sprime || in_sdoubleprime;
    let in_s = raw_s || in_sprime;
    Ok(PointClassification {
        in_s,
        in_sprime,
        in_sdoubleprime,
        cauchy_gap,
        mean_osc,
        inf_osc,
        theta,
        notes,
    })
}

// ---------------------------------------------------------------------------
// Two-tier jump probe
// ---------------------------------------------------------------------------

/// Outcome of probing one point for a jump.
#[derive(Debug, Clone, Serialize)]
pub struct JumpProbe {
    pub fit: StepFit,
    /// Step-like blow-up: credible height and small fit residual.
    pub tier1: bool,
    /// One-sided ball averages confirm the fitted levels at rho and rho/2.
    pub tier2: bool,
    /// Max half-ball deviation from the fitted levels, relative to the height.
    pub tier2_deviation: f64,
}

/// Probe a point with the blow-up fit at `rho` and validate half-ball averages
/// at rho and rho/2.
pub fn probe_jump_tiers(
    field: &Field,
    x: &[f64; 3],
    rho: f64,
    th: &Thresholds,
    grid: &[[f64; 3]],
) -> Result<JumpProbe> {
    let fit = blowup_step_fit(field, x, rho, grid)?;
    let floor = th.jump_threshold(field);
    let tier1 = fit.height > floor && fit.residual < th.resid_rel * fit.height;
    let mut tier2 = tier1;
    let mut tier2_deviation = 0.0f64;
    if tier1 {
        let plus_level: Vec<f64> = fit.c.iter().zip(&fit.h).map(|(c, h)| c + h).collect();
        for radius in [rho, rho / 2.0] {
            match halfball_averages(field, x, &fit.nu, radius) {
                Ok(hb) => {
                    let dev = |got: &[f64], want: &[f64]| -> f64 {
                        let mut n2 = 0.0;
                        for (g, w) in got.iter().zip(want) {
                            let t = g - w;
                            n2 += t * t;
                        }
                        n2.sqrt()
                    };
                    let dp = dev(&hb.plus, &plus_level);
                    let dm = dev(&hb.minus, &fit.c);
                    tier2_deviation = tier2_deviation.max(dp.max(dm) / fit.height);
                    if dp > th.tier2_rel * fit.height || dm > th.tier2_rel * fit.height {
                        tier2 = false;
                    }
                }
                Err(_) => {
                    tier2 = false;
                }
            }
        }
    }
    Ok(JumpProbe { fit, tier1, tier2, tier2_deviation })
}

/// Window-limited lower bound of the rescaled pair functional at a jump point:
/// per schedule radius eps, the double average over B_{eps/2} maximized over a
/// five-point transversal scan along nu (the reconstruction anchor may sit up
/// to a grid cell off the true interface). The `liminf` of the returned
/// estimate is the certified lower bound; a genuine jump of height |h| keeps
/// it near |h|^q / 2.
pub fn rescaled_pair_lower_bound(
    field: &Field,
    anchor: &[f64; 3],
    nu: &[f64; 3],
    schedule: &EpsilonSchedule,
    q: f64,
) -> Result<LimitEstimate> {
    let hbar = field.domain().max_spacing();
    let mut entries = Vec::new();
    for eps in schedule.values() {
        let mut best = f64::NEG_INFINITY;
        for step in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let p = [
                anchor[0] + step * hbar * nu[0],
                anchor[1] + step * hbar * nu[1],
                anchor[2] + step * hbar * nu[2],
            ];
            if !field.domain().contains(&p) {
                continue;
            }
            if let Ok(v) = double_average(field, &p, eps / 2.0, q) {
                best = best.max(v);
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(Error::EmptyStencil {
                x: anchor[0],
                y: anchor[1],
                z: anchor[2],
                rho: eps / 2.0,
            });
        }
        entries.push((eps, best));
    }
    Ok(LimitEstimate::from_entries(entries, schedule.window, 0.05))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gallery, make_domain, Field, GalleryRequest};
    use approx::assert_relative_eq;

    #[test]
    fn normal_grid_sizes_and_symmetry() {
        assert_eq!(normal_grid(1).len(), 2);
        assert_eq!(normal_grid(2).len(), 64);
        let g3 = normal_grid(3);
        assert_eq!(g3.len(), 242);
        let keys: std::collections::BTreeSet<[i64; 3]> = g3.iter().map(vec_key).collect();
        assert_eq!(keys.len(), 242, "grid directions must be distinct");
        for v in &g3 {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert_relative_eq!(n, 1.0, max_relative = 1e-12);
            let anti = vec_key(&[-v[0], -v[1], -v[2]]);
            assert!(keys.contains(&anti), "grid must be antipodally symmetric");
        }
    }

    #[test]
    fn inf_const_oscillation_of_step_is_half() {
        let f = gallery(&GalleryRequest::named("step1d")).unwrap().field;
        for rho in [0.1, 0.05, 0.02] {
            let o = inf_const_oscillation(&f, &[0.0, 0.0, 0.0], rho, 1.0).unwrap();
            assert_relative_eq!(o.value, 0.5, max_relative = 1e-12);
            // lower-middle median picks the low level on a balanced ball
            assert_relative_eq!(o.minimizer[0], 0.0);
        }
    }

    #[test]
    fn step_fit_recovers_the_unit_step() {
        let f = gallery(&GalleryRequest::named("step1d")).unwrap().field;
        let fit = blowup_step_fit(&f, &[0.0, 0.0, 0.0], 0.05, &normal_grid(1)).unwrap();
        assert_eq!(fit.nu, [1.0, 0.0, 0.0]);
        assert_relative_eq!(fit.h[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.c[0], 0.0);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn step_fit_sign_normalizes_a_down_step() {
        // u = 1 - chi_{x>0}: the jump vector flips to +1 with nu = -e1, c = 0.
        let domain = make_domain(1, &[-0.5], &[0.5], &[1024]).unwrap();
        let f = Field::from_fn(domain, 1, |p, out| {
            out[0] = if p[0] > 0.0 { 0.0 } else { 1.0 };
            true
        });
        let fit = blowup_step_fit(&f, &[0.0, 0.0, 0.0], 0.05, &normal_grid(1)).unwrap();
        assert_eq!(fit.nu, [-1.0, 0.0, 0.0]);
        assert_relative_eq!(fit.h[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.c[0], 0.0);
    }

    #[test]
    fn step_fit_residual_of_a_ramp_is_half_height() {
        // u = x on a ball: best split fits levels +-rho/2 with residual rho/2,
        // exactly half the fitted height.
        let domain = make_domain(1, &[-0.5], &[0.5], &[2048]).unwrap();
        let f = Field::from_fn(domain, 1, |p, out| {
            out[0] = p[0];
            true
        });
        let fit = blowup_step_fit(&f, &[0.0, 0.0, 0.0], 0.1, &normal_grid(1)).unwrap();
        assert_relative_eq!(fit.residual / fit.height, 0.5, max_relative = 0.02);
    }

    #[test]
    fn probe_tiers_separate_step_from_ramp() {
        let th = Thresholds::default_profile();
        let step = gallery(&GalleryRequest::named("step1d")).unwrap().field;
        let p = probe_jump_tiers(&step, &[0.0, 0.0, 0.0], 0.02, &th, &normal_grid(1)).unwrap();
        assert!(p.tier1 && p.tier2, "clean step passes both tiers: {p:?}");

        let domain = make_domain(1, &[-0.5], &[0.5], &[2048]).unwrap();
        let ramp = Field::from_fn(domain, 1, |p, out| {
            out[0] = p[0];
            true
        });
        let p2 = probe_jump_tiers(&ramp, &[0.0, 0.0, 0.0], 0.02, &th, &normal_grid(1)).unwrap();
        assert!(!p2.tier1, "a ramp is not a jump: {p2:?}");
    }

    #[test]
    fn h_combo_is_tier1_but_not_tier2() {
        let th = Thresholds::default_profile();
        let g = gallery(&GalleryRequest::named("h_combo")).unwrap();
        let p = probe_jump_tiers(&g.field, &[0.0, 0.0, 0.0], 0.02, &th, &normal_grid(1)).unwrap();
        assert!(p.tier1, "the additive-drift jump still fits a step: {p:?}");
        assert!(!p.tier2, "one-sided averages drift, tier 2 must fail: {p:?}");
    }

    #[test]
    fn decay_verdicts_separate_the_three_shapes() {
        let th = Thresholds::default_profile();
        let theta = 0.01;
        // 1/|log rho| decays slowly but passes
        let decaying: Vec<(f64, f64)> = (0..7)
            .map(|n| {
                let rho = 0.1 * 0.6f64.powi(n);
                (rho, 1.0 / (-rho.ln()))
            })
            .collect();
        assert!(passes_to_zero(&decaying, theta, &th).passes);
        // a constant fails on the slope gate
        let constant: Vec<(f64, f64)> = (0..7)
            .map(|n| (0.1 * 0.6f64.powi(n), 0.5))
            .collect();
        assert!(!passes_to_zero(&constant, theta, &th).passes);
        // 0.5 + 1/|log rho| fails on the ratio cap
        let offset: Vec<(f64, f64)> = (0..7)
            .map(|n| {
                let rho = 0.1 * 0.6f64.powi(n);
                (rho, 0.5 + 1.0 / (-rho.ln()))
            })
            .collect();
        assert!(!passes_to_zero(&offset, theta, &th).passes);
    }

    #[test]
    fn classify_step_and_smooth_points() {
        let th = Thresholds::default_profile();
        let f = gallery(&GalleryRequest::named("step1d")).unwrap().field;
        let schedule = EpsilonSchedule::geometric(0.1, 0.6, 7).unwrap();
        let at_jump = classify_point(&f, &[0.0, 0.0, 0.0], &schedule, &th).unwrap();
        assert!(at_jump.in_s && at_jump.in_sprime && at_jump.in_sdoubleprime, "{at_jump:?}");
        let away = classify_point(&f, &[0.25, 0.0, 0.0], &schedule, &th).unwrap();
        assert!(!away.in_s && !away.in_sprime && !away.in_sdoubleprime, "{away:?}");
    }

    #[test]
    fn classify_loglog_singularity_s_not_sprime() {
        let th = Thresholds::default_profile();
        let g = gallery(&GalleryRequest::named("loglog_trace1d")).unwrap();
        let schedule = EpsilonSchedule::geometric(0.08, 0.6, 7).unwrap();
        let at0 = classify_point(&g.field, &[0.0, 0.0, 0.0], &schedule, &th).unwrap();
        assert!(at0.in_s, "ball averages diverge at the singularity: {at0:?}");
        assert!(!at0.in_sprime, "best-constant oscillation still vanishes: {at0:?}");
        let smooth = classify_point(&g.field, &[0.125, 0.0, 0.0], &schedule, &th).unwrap();
        assert!(!smooth.in_s, "{smooth:?}");
    }

    #[test]
    fn rescaled_lower_bound_at_a_clean_step() {
        let f = gallery(&GalleryRequest::named("step1d")).unwrap().field;
        let schedule = EpsilonSchedule::geometric(0.1, 0.7, 6).unwrap();
        let est =
            rescaled_pair_lower_bound(&f, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &schedule, 1.0)
                .unwrap();
        // jump height 1: the bound sits at 1/2 (the scan catches the interface)
        assert!(est.liminf >= 0.5 * 0.95, "liminf = {}", est.liminf);
    }
}
