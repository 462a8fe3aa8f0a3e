//! Dimensional constants, the gamma function, ball stencils, and the pair
//! quadrature behind every nonlocal double integral.
//!
//! The pair quadrature discretizes
//!   F(u, eps) = int_O int_{O ∩ B_eps(x)} eps^{-N} |u(x)-u(y)|^q / |x-y|^s dy dx
//! by cell-center offsets. Two corrections keep step fields honest at desk
//! resolutions:
//!  * a rim partial-volume factor: pairs whose offset length straddles eps get
//!    the fraction of cell-pair volume that actually lies inside the ball
//!    (linearized; exact to first order in the cell size), instead of an
//!    all-or-nothing cut;
//!  * near-field kernel averaging: for offsets within a few cells and kernels
//!    with s < N + 1/2, the factor |x-y|^{-s} is replaced by its exact average
//!    over the two cells (computed by composite Gauss rules over the
//!    difference variable, whose triangular weight removes the singularity).
//! Far pairs use the midpoint value, which is already accurate there.
//!
//! Determinism: per-offset sums run serially in row order; offsets are
//! combined in a fixed order whatever the thread count.

use crate::error::{Error, Result};
use crate::fields::{Domain, Field};
use crate::kahan::{kahan_sum, KahanSum};
use rayon::prelude::*;

// ---------------------------------------------------------------------------
// Gamma and the dimensional constants
// ---------------------------------------------------------------------------

// Lanczos approximation, g = 7, 9 coefficients; |relative error| < 1e-13 on
// the positive axis, reflection below 1/2.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

/// Gamma function on the real line (poles at non-positive integers return NaN
/// or infinities through the reflection formula; callers stay on s > 0).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Volume of the unit ball in (real) dimension s: alpha(s) = pi^{s/2} / Gamma(s/2 + 1).
pub fn alpha(s: f64) -> f64 {
    std::f64::consts::PI.powf(s / 2.0) / gamma(s / 2.0 + 1.0)
}

/// How to evaluate the jump constant C_N = int_{B_1} |z_1|/|z| dz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CMethod {
    /// C_N = (2/N) alpha(N-1).
    ClosedForm,
    /// Polar reduction (1/N) int_{S^{N-1}} |omega_1| dH^{N-1}, midpoint panels. N <= 3.
    SphereQuadrature,
    /// Direct midpoint grid over the ball with rim partial volumes. N <= 3.
    BallQuadrature,
}

/// The jump constant C_N.
pub fn c_dimensional(n: usize, method: CMethod) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParams("C_N needs N >= 1".into()));
    }
    match method {
        CMethod::ClosedForm => Ok(2.0 / n as f64 * alpha(n as f64 - 1.0)),
        CMethod::SphereQuadrature => match n {
            1 => {
                // S^0 = {+1, -1} with counting measure; |omega_1| = 1 at both.
                Ok((1.0f64 + 1.0) / 1.0)
            }
            2 => {
                let m = 4096;
                let dth = 2.0 * std::f64::consts::PI / m as f64;
                let s = kahan_sum((0..m).map(|j| {
                    let th = (j as f64 + 0.5) * dth;
                    th.cos().abs() * dth
                }));
                Ok(s / 2.0)
            }
            3 => {
                let (mt, mp) = (512, 1024);
                let dth = std::f64::consts::PI / mt as f64;
                let dph = 2.0 * std::f64::consts::PI / mp as f64;
                let s = kahan_sum((0..mt).map(|i| {
                    let th = (i as f64 + 0.5) * dth;
                    // integrand |omega_3| = |cos th| with surface element sin th dth dph
                    th.cos().abs() * th.sin() * dth * (mp as f64) * dph
                }));
                Ok(s / 3.0)
            }
            _ => Err(Error::InvalidParams(format!(
                "sphere quadrature for C_N implemented for N <= 3, got {n}"
            ))),
        },
        CMethod::BallQuadrature => match n {
            1..=3 => Ok(ball_quadrature_c(n)),
            _ => Err(Error::InvalidParams(format!(
                "ball quadrature for C_N implemented for N <= 3, got {n}"
            ))),
        },
    }
}

/// Midpoint grid on [-1,1]^N restricted to the unit ball, with the same rim
/// partial-volume ramp the pair quadrature uses.
fn ball_quadrature_c(n: usize) -> f64 {
    let k: usize = match n {
        1 => 4096,
        2 => 2048,
        _ => 256,
    };
    let h = 2.0 / k as f64;
    let cellvol = h.powi(n as i32);
    let center = |i: usize| -1.0 + (i as f64 + 0.5) * h;
    let mut acc = KahanSum::new();
    let mut idx = [0usize; 3];
    let counts = [k, if n >= 2 { k } else { 1 }, if n >= 3 { k } else { 1 }];
    loop {
        let mut z = [0.0; 3];
        for a in 0..n {
            z[a] = center(idx[a]);
        }
        let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        if r > 0.0 {
            // rim ramp width: projection of the cell extents on the radial direction
            let w: f64 = (0..n).map(|a| h * z[a].abs() / r).sum();
            let f = (0.5 + (1.0 - r) / w).clamp(0.0, 1.0);
            if f > 0.0 {
                acc.add(cellvol * f * z[0].abs() / r);
            }
        }
        // odd-k grids would put a center at 0; the k choices above are even
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == 3 {
                return acc.value();
            }
        }
    }
}

/// Lower constant gamma(N) = alpha(N)^2 / (5^{N-1} 2^{2N+1} alpha(N-1)).
pub fn gamma_lower(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParams("gamma(N) needs N >= 1".into()));
    }
    let nf = n as f64;
    Ok(alpha(nf).powi(2) / (5.0f64.powf(nf - 1.0) * 2.0f64.powf(2.0 * nf + 1.0) * alpha(nf - 1.0)))
}

/// Oscillation-route constant beta(N; r, q) = alpha(N) / (5^{N-rq} 2^{2N} alpha(N-rq)),
/// defined for r q <= N.
pub fn beta_const(n: usize, r: f64, q: f64) -> Result<f64> {
    if n == 0 || !(0.0..=1.0).contains(&r) || r == 0.0 || q < 1.0 {
        return Err(Error::InvalidParams(format!(
            "beta needs N >= 1, r in (0,1], q >= 1; got N={n}, r={r}, q={q}"
        )));
    }
    let nf = n as f64;
    let rq = r * q;
    if rq > nf {
        return Err(Error::InvalidParams(format!(
            "beta needs r q <= N, got r q = {rq} > {nf}"
        )));
    }
    Ok(alpha(nf) / (5.0f64.powf(nf - rq) * 2.0f64.powf(2.0 * nf) * alpha(nf - rq)))
}

// ---------------------------------------------------------------------------
// Ball stencils and half-ball averages
// ---------------------------------------------------------------------------

/// Cells whose centers lie strictly inside B_rho(x), in-domain and unmasked,
/// in linear-index order.
#[derive(Debug, Clone)]
pub struct BallStencil {
    pub center: [f64; 3],
    pub rho: f64,
    cells: Vec<usize>,
}

impl BallStencil {
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Mean of the field over the stencil, per component.
    pub fn mean(&self, field: &Field) -> Vec<f64> {
        let d = field.codomain_dim();
        let mut out = vec![0.0; d];
        for &c in &self.cells {
            for (o, v) in out.iter_mut().zip(field.value(c)) {
                *o += v;
            }
        }
        let n = self.cells.len().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Mean of |u - reference|^q over the stencil (Euclidean norm on the codomain).
    pub fn mean_q_dev(&self, field: &Field, q: f64, reference: &[f64]) -> f64 {
        assert_eq!(reference.len(), field.codomain_dim());
        let qk = QKind::of(q);
        let s = kahan_sum(self.cells.iter().map(|&c| {
            let mut n2 = 0.0;
            for (v, r) in field.value(c).iter().zip(reference) {
                let d = v - r;
                n2 += d * d;
            }
            qk.of_norm2(n2)
        }));
        s / self.cells.len().max(1) as f64
    }
}

/// Index window per axis covering centers within (x - rho, x + rho).
fn axis_window(domain: &Domain, axis: usize, x: f64, rho: f64) -> (usize, usize) {
    let lo = domain.lower()[axis];
    let h = domain.spacing()[axis];
    let n = domain.cells()[axis];
    let a = ((x - rho - lo) / h - 0.5).ceil().max(0.0) as usize;
    let b = ((x + rho - lo) / h - 0.5).floor().min((n - 1) as f64);
    if b < 0.0 {
        (1, 0) // empty
    } else {
        (a.min(n - 1), b as usize)
    }
}

/// Build the stencil of B_rho(x). Requires rho >= 2 * max spacing.
pub fn ball_stencil(field: &Field, x: &[f64; 3], rho: f64) -> Result<BallStencil> {
    let domain = field.domain();
    let needed = 2.0 * domain.max_spacing();
    if !(rho >= needed) {
        return Err(Error::ResolutionTooCoarse { quantity: "ball radius", needed, got: rho });
    }
    let dim = domain.dim();
    let mut wins = [(0usize, 0usize); 3];
    for a in 0..3 {
        wins[a] = if a < dim { axis_window(domain, a, x[a], rho) } else { (0, 0) };
    }
    let r2 = rho * rho;
    let mut cells = Vec::new();
    for iz in wins[2].0..=wins[2].1.max(wins[2].0).min(domain.cells()[2] - 1) {
        for iy in wins[1].0..=wins[1].1.max(wins[1].0).min(domain.cells()[1] - 1) {
            for ix in wins[0].0..=wins[0].1.max(wins[0].0).min(domain.cells()[0] - 1) {
                // ranges may be empty; the distance test rejects everything then
                let idx = domain.index([ix, iy, iz]);
                let c = domain.center([ix, iy, iz]);
                let d2 = (c[0] - x[0]).powi(2) + (c[1] - x[1]).powi(2) + (c[2] - x[2]).powi(2);
                if d2 < r2 && !field.is_masked(idx) {
                    cells.push(idx);
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyStencil { x: x[0], y: x[1], z: x[2], rho });
    }
    Ok(BallStencil { center: *x, rho, cells })
}

/// Convenience: mean of u over B_rho(x).
pub fn ball_average(field: &Field, x: &[f64; 3], rho: f64) -> Result<Vec<f64>> {
    Ok(ball_stencil(field, x, rho)?.mean(field))
}

/// Means over the two strict open half-balls split by the plane through x with
/// normal nu. Cells whose centers land exactly on the plane count for neither.
#[derive(Debug, Clone)]
pub struct HalfBallAverages {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub n_plus: usize,
    pub n_minus: usize,
}

pub fn halfball_averages(
    field: &Field,
    x: &[f64; 3],
    nu: &[f64; 3],
    rho: f64,
) -> Result<HalfBallAverages> {
    let stencil = ball_stencil(field, x, rho)?;
    let d = field.codomain_dim();
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    let (mut np, mut nm) = (0usize, 0usize);
    let domain = field.domain();
    for &cell in stencil.cells() {
        let c = domain.center_of(cell);
        let dot = (c[0] - x[0]) * nu[0] + (c[1] - x[1]) * nu[1] + (c[2] - x[2]) * nu[2];
        if dot > 0.0 {
            np += 1;
            for (o, v) in plus.iter_mut().zip(field.value(cell)) {
                *o += v;
            }
        } else if dot < 0.0 {
            nm += 1;
            for (o, v) in minus.iter_mut().zip(field.value(cell)) {
                *o += v;
            }
        }
    }
    if np == 0 || nm == 0 {
        return Err(Error::DegenerateHalfBall(x[0], x[1], x[2]));
    }
    plus.iter_mut().for_each(|v| *v /= np as f64);
    minus.iter_mut().for_each(|v| *v /= nm as f64);
    Ok(HalfBallAverages { plus, minus, n_plus: np, n_minus: nm })
}

// ---------------------------------------------------------------------------
// Pair quadrature
// ---------------------------------------------------------------------------

/// q-power dispatch, resolved once per call.
#[derive(Clone, Copy)]
pub(crate) enum QKind {
    One,
    Two,
    Pow(f64),
}

impl QKind {
    pub(crate) fn of(q: f64) -> QKind {
        if q == 1.0 {
            QKind::One
        } else if q == 2.0 {
            QKind::Two
        } else {
            QKind::Pow(q)
        }
    }
    /// |v|^q given the squared Euclidean norm of v.
    #[inline]
    pub(crate) fn of_norm2(self, n2: f64) -> f64 {
        match self {
            QKind::One => n2.sqrt(),
            QKind::Two => n2,
            QKind::Pow(q) => n2.powf(q / 2.0),
        }
    }
}

// 8-point Gauss-Legendre on [-1, 1].
const GL8_X: [f64; 8] = [
    -0.9602898564975363,
    -0.7966664774136267,
    -0.5255324099163290,
    -0.1834346424956498,
    0.1834346424956498,
    0.5255324099163290,
    0.7966664774136267,
    0.9602898564975363,
];
const GL8_W: [f64; 8] = [
    0.1012285362903763,
    0.2223810344533745,
    0.3137066458778873,
    0.3626837833783620,
    0.3626837833783620,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

/// Per-axis nodes for the difference variable t = y - x within a cell pair:
/// t has the triangular density (h - |t|)/h^2 on [-h, h]. Each half is covered
/// by `panels` Gauss panels; the triangular weight vanishes linearly at the
/// singular end, which makes touching-cell kernels integrable and smooth.
fn diff_axis_nodes(h: f64, panels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(2 * panels * GL8_X.len());
    for half in [-1.0f64, 1.0] {
        for p in 0..panels {
            let a = h * p as f64 / panels as f64;
            let b = h * (p + 1) as f64 / panels as f64;
            let (mid, rad) = (0.5 * (a + b), 0.5 * (b - a));
            for (xg, wg) in GL8_X.iter().zip(GL8_W) {
                let t = half * (mid + rad * xg);
                let tri = (h - t.abs()) / (h * h);
                out.push((t, wg * rad * tri));
            }
        }
    }
    out
}

/// Exact mean of |x - y|^{-s} over a pair of cells at offset d (x in the cell
/// at 0, y in the cell at d), by tensor quadrature over the difference variable.
fn kernel_mean(dim: usize, h: &[f64; 3], d: &[f64; 3], touching: bool, s: f64) -> f64 {
    let panels = if touching { 4 } else { 1 };
    let axes: Vec<Vec<(f64, f64)>> =
        (0..dim).map(|a| diff_axis_nodes(h[a], panels)).collect();
    let p = -s / 2.0;
    let mut acc = KahanSum::new();
    // up to three nested axes; flatten the recursion by explicit loops
    match dim {
        1 => {
            for &(t0, w0) in &axes[0] {
                let r2 = (d[0] + t0) * (d[0] + t0);
                acc.add(w0 * r2.powf(p));
            }
        }
        2 => {
            for &(t1, w1) in &axes[1] {
                let z1 = d[1] + t1;
                for &(t0, w0) in &axes[0] {
                    let z0 = d[0] + t0;
                    let r2 = z0 * z0 + z1 * z1;
                    acc.add(w0 * w1 * r2.powf(p));
                }
            }
        }
        _ => {
            for &(t2, w2) in &axes[2] {
                let z2 = d[2] + t2;
                for &(t1, w1) in &axes[1] {
                    let z1 = d[1] + t1;
                    let w12 = w1 * w2;
                    for &(t0, w0) in &axes[0] {
                        let z0 = d[0] + t0;
                        let r2 = z0 * z0 + z1 * z1 + z2 * z2;
                        acc.add(w0 * w12 * r2.powf(p));
                    }
                }
            }
        }
    }
    acc.value()
}

struct OffsetW {
    dx: i32,
    dy: i32,
    dz: i32,
    w: f64,
}

/// Half-space offset list (lexicographically positive in (dz, dy, dx)) with
/// kernel-times-rim weights.
fn pair_offsets(domain: &Domain, eps: f64, s: f64) -> Vec<OffsetW> {
    let dim = domain.dim();
    let h = domain.spacing();
    let hbar = domain.max_spacing();
    let reach = eps + hbar * (dim as f64).sqrt();
    let kmax = |a: usize| -> i32 {
        if a < dim {
            (reach / h[a]).ceil() as i32 + 1
        } else {
            0
        }
    };
    let (kx, ky, kz) = (kmax(0), kmax(1), kmax(2));
    let near = 4.5 * hbar;
    let average_near = s < dim as f64 + 0.5;
    let mut out = Vec::new();
    for dz in 0..=kz {
        let y_lo = if dz > 0 { -ky } else { 0 };
        for dy in y_lo..=ky {
            let x_lo = if dz > 0 || dy > 0 { -kx } else { 1 };
            for dx in x_lo..=kx {
                let d = [dx as f64 * h[0], dy as f64 * h[1], dz as f64 * h[2]];
                let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let w_rad: f64 = (0..dim).map(|a| h[a] * d[a].abs() / dist).sum();
                let f = (0.5 + (eps - dist) / w_rad).clamp(0.0, 1.0);
                if f <= 0.0 {
                    continue;
                }
                let kernel = if average_near && dist <= near {
                    let touching = dx.abs() <= 1 && dy.abs() <= 1 && dz.abs() <= 1;
                    kernel_mean(dim, &h, &d, touching, s)
                } else {
                    dist.powf(-s)
                };
                out.push(OffsetW { dx, dy, dz, w: kernel * f });
            }
        }
    }
    out
}

/// Sum of |u(i) - u(i + offset)|^q over all in-range cells for one offset.
/// Serial and row-ordered: the result does not depend on the thread count.
fn offset_sum(field: &Field, o: &OffsetW, qk: QKind) -> f64 {
    let domain = field.domain();
    let [nx, ny, nz] = domain.cells();
    let (nxi, nyi, nzi) = (nx as i32, ny as i32, nz as i32);
    let x_range = (-o.dx).max(0)..(nxi - o.dx.max(0));
    let y_range = (-o.dy).max(0)..(nyi - o.dy.max(0));
    let z_range = (-o.dz).max(0)..(nzi - o.dz.max(0));
    if x_range.is_empty() || y_range.is_empty() || z_range.is_empty() {
        return 0.0;
    }
    let flat = o.dx as isize + nxi as isize * (o.dy as isize + nyi as isize * o.dz as isize);
    let d = field.codomain_dim();
    let values = field.values();
    let mask = field.mask();
    let mut acc = KahanSum::new();
    for iz in z_range {
        for iy in y_range.clone() {
            let row = (iy as usize + ny * iz as usize) * nx;
            let lo = row + x_range.start as usize;
            let hi = row + x_range.end as usize;
            let mut row_sum = 0.0;
            match (mask, d) {
                (None, 1) => {
                    // contiguous fast path
                    let a = &values[lo..hi];
                    let b = &values[(lo as isize + flat) as usize
                        ..(hi as isize + flat) as usize];
                    match qk {
                        QKind::One => {
                            for (x, y) in a.iter().zip(b) {
                                row_sum += (x - y).abs();
                            }
                        }
                        QKind::Two => {
                            for (x, y) in a.iter().zip(b) {
                                let t = x - y;
                                row_sum += t * t;
                            }
                        }
                        QKind::Pow(q) => {
                            for (x, y) in a.iter().zip(b) {
                                row_sum += (x - y).abs().powf(q);
                            }
                        }
                    }
                }
                _ => {
                    for i in lo..hi {
                        let j = (i as isize + flat) as usize;
                        if let Some(m) = mask {
                            if m[i] || m[j] {
                                continue;
                            }
                        }
                        let mut n2 = 0.0;
                        for (x, y) in values[i * d..(i + 1) * d]
                            .iter()
                            .zip(&values[j * d..(j + 1) * d])
                        {
                            let t = x - y;
                            n2 += t * t;
                        }
                        row_sum += qk.of_norm2(n2);
                    }
                }
            }
            acc.add(row_sum);
        }
    }
    acc.value()
}

/// The nonlocal pair functional F(u, eps) with kernel |x-y|^{-s} and the
/// eps^{-N} normalization. Requires eps >= 8 * max spacing.
pub fn pair_integral(field: &Field, eps: f64, q: f64, s: f64) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
    }
    if q < 1.0 {
        return Err(Error::InvalidParams(format!("q must be >= 1, got {q}")));
    }
    if s < 0.0 {
        return Err(Error::InvalidParams(format!("s must be >= 0, got {s}")));
    }
    let domain = field.domain();
    let needed = 8.0 * domain.max_spacing();
    if eps < needed {
        return Err(Error::ResolutionTooCoarse { quantity: "pair radius eps", needed, got: eps });
    }
    let offsets = pair_offsets(domain, eps, s);
    let qk = QKind::of(q);
    let per: Vec<f64> = offsets
        .par_iter()
        .map(|o| offset_sum(field, o, qk) * o.w)
        .collect();
    let sum = kahan_sum(per);
    let dim = domain.dim() as i32;
    // ordered pairs: the half-space offset list covers each unordered pair once
    Ok(2.0 * domain.cell_volume().powi(2) * eps.powi(-dim) * sum)
}

// ---------------------------------------------------------------------------
