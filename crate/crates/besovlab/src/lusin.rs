//! Good-set filtrations and Holder machinery: carve out a compact set where
//! the rescaled q-oscillation stays below a level n, measure the Holder
//! constant of the restriction, and extend it to the whole box with an
//! explicit inf-convolution formula and a certified global constant.

use crate::error::{Error, Result};
use crate::fields::{Domain, Field};
use crate::kahan::kahan_sum;
use crate::quadrature::ball_stencil;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Pair budget for exhaustive Holder-constant scans.
const HOLDER_PAIR_CAP: u128 = 100_000_000;
/// Budget for the near-pair scan on the capped path.
const NEAR_SCAN_CAP: u128 = 1_000_000_000;
/// Random pairs drawn on the capped path and in extension audits.
const SAMPLE_PAIRS: u64 = 1_000_000;
const HOLDER_SAMPLE_SEED: u64 = 0x4c55_5349_4e31;
const AUDIT_SEED: u64 = 0x4155_4449_5431;

/// Axis-aligned compact sub-box K of the ambient domain, resolved to the
/// cells whose centers lie inside it.  `margin` is the distance from K to
/// the boundary of the ambient box; radii below it keep every ball
/// B_delta(x), x in K, inside the domain.
#[derive(Debug, Clone, Serialize)]
pub struct SubBox {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    /// Inclusive cell-index ranges per axis.
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub margin: f64,
}

impl SubBox {
    pub fn resolve(domain: &Domain, lower: &[f64], upper: &[f64]) -> Result<SubBox> {
        let dim = domain.dim();
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::InvalidParams(format!(
                "sub-box bounds need {dim} coordinates; got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let (dlo, dup, h) = (domain.lower(), domain.upper(), domain.spacing());
        let mut klo = [0.0; 3];
        let mut kup = [0.0; 3];
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut margin = f64::INFINITY;
        for a in 0..dim {
            if !(lower[a] < upper[a]) {
                return Err(Error::InvalidParams(format!(
                    "sub-box axis {a} is empty: [{}, {}]",
                    lower[a], upper[a]
                )));
            }
            let gap = (lower[a] - dlo[a]).min(dup[a] - upper[a]);
            if gap <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "sub-box must sit strictly inside the domain; axis {a} touches the boundary"
                )));
            }
            margin = margin.min(gap);
            // First/last cell whose center lies in [lower, upper].
            let first = ((lower[a] - dlo[a]) / h[a] - 0.5).ceil().max(0.0) as usize;
            let last = ((upper[a] - dlo[a]) / h[a] - 0.5).floor() as usize;
            let last = last.min(domain.cells()[a] - 1);
            if first > last {
                return Err(Error::InvalidParams(format!(
                    "sub-box axis {a} contains no cell centers"
                )));
            }
            klo[a] = lower[a];
            kup[a] = upper[a];
            lo[a] = first;
            hi[a] = last;
        }
        Ok(SubBox { lower: klo, upper: kup, lo, hi, margin })
    }

    pub fn cell_count(&self, dim: usize) -> usize {
        (0..dim).map(|a| self.hi[a] - self.lo[a] + 1).product()
    }

    /// Global cell indices in ascending order (x fastest).
    pub fn global_cells(&self, domain: &Domain) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cell_count(domain.dim()));
        for k in self.lo[2]..=self.hi[2] {
            for j in self.lo[1]..=self.hi[1] {
                for i in self.lo[0]..=self.hi[0] {
                    out.push(domain.index([i, j, k]));
                }
            }
        }
        out
    }
}

/// One level of the filtration: the cells of K where the rescaled
/// q-oscillation stays <= n for every admissible radius.
#[derive(Debug, Clone, Serialize)]
pub struct LevelSet {
    pub n: f64,
    /// Kept flags in K iteration order (x fastest).
    pub kept: Vec<bool>,
    pub kept_cells: usize,
    pub removed_measure: f64,
    /// Schedule radii the membership test actually used (delta < I(n)).
    pub deltas: Vec<f64>,
}

/// Exhaustion check at the deepest level: the removed mass must sit below
/// the Chebyshev bound (2^q / n) * total supremal oscillation over K.
#[derive(Debug, Clone, Serialize)]
pub struct ChebyshevReport {
    pub level: f64,
    pub bound: f64,
    /// Removed measure among unmasked K cells (masks count separately).
    pub removed: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodSetFiltration {
    pub k: SubBox,
    pub r: f64,
    pub q: f64,
    /// Levels in ascending n, skipped entries omitted.
    pub levels: Vec<LevelSet>,
    pub warnings: Vec<String>,
    pub chebyshev: Option<ChebyshevReport>,
    pub cell_volume: f64,
    #[serde(skip)]
    k_cells: Vec<usize>,
}

impl GoodSetFiltration {
    /// Global cell indices of B_n for `levels[level]`, ascending.
    pub fn cells_at(&self, level: usize) -> Vec<usize> {
        self.levels[level]
            .kept
            .iter()
            .zip(&self.k_cells)
            .filter_map(|(&keep, &c)| keep.then_some(c))
            .collect()
    }
}

/// Builds the good-set filtration over K: a cell x belongs to B_n when
/// integral_{B_delta(x)} |u - u_{B_delta(x)}|^q dy / delta^(N + r q) <= n
/// for every schedule radius delta with 4 h <= delta < I(n),
/// I(n) = min(1/n, margin of K).  Levels whose admissible schedule is empty
/// are skipped with a warning.  B_n subset B_{n+1} is asserted.
pub fn build_filtration(
    field: &Field,
    k_lower: &[f64],
    k_upper: &[f64],
    r: f64,
    q: f64,
    n_list: &[f64],
    delta_schedule: &[f64],
) -> Result<GoodSetFiltration> {
    if q < 1.0 || !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "filtration needs q >= 1, r in (0,1]; got q={q}, r={r}"
        )));
    }
    if n_list.is_empty() {
        return Err(Error::InvalidParams("level list is empty".into()));
    }
    for w in n_list.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidParams(
                "level list must be strictly increasing".into(),
            ));
        }
    }
    if !(n_list[0] > 0.0) || !n_list.iter().all(|n| n.is_finite()) {
        return Err(Error::InvalidParams("levels must be finite and positive".into()));
    }
    let domain = field.domain();
    let dim = domain.dim();
    let k = SubBox::resolve(domain, k_lower, k_upper)?;
    let min_delta = 4.0 * domain.max_spacing();

    let mut warnings = Vec::new();
    let mut schedule: Vec<f64> = delta_schedule
        .iter()
        .copied()
        .filter(|d| d.is_finite() && *d > 0.0)
        .collect();
    schedule.sort_by(|a, b| a.partial_cmp(b).unwrap());
    schedule.dedup();
    let dropped = schedule.len();
    schedule.retain(|&d| d >= min_delta);
    let dropped = dropped - schedule.len();
    if dropped > 0 {
        warnings.push(format!(
            "{dropped} schedule radii below the resolution floor 4h = {min_delta:.3e} were dropped"
        ));
    }
    if schedule.is_empty() {
        return Err(Error::ResolutionTooCoarse {
            quantity: "filtration radius delta",
            needed: min_delta,
            got: delta_schedule.iter().copied().fold(0.0, f64::max),
        });
    }

    let k_cells = k.global_cells(domain);
    let cell_volume = domain.cell_volume();
    let exponent = dim as f64 + r * q;

    // Rescaled oscillation per (radius, K-cell); masked centers get +inf so
    // they are never kept.
    let q_table: Vec<Vec<f64>> = schedule
        .iter()
        .map(|&delta| {
            let scale = cell_volume / delta.powf(exponent);
            k_cells
                .par_iter()
                .map(|&c| {
                    if field.is_masked(c) {
                        return f64::INFINITY;
                    }
                    let x = domain.center_of(c);
                    let st = ball_stencil(field, &x, delta)
                        .expect("K margin keeps every admissible ball inside the domain");
                    let mean = st.mean(field);
                    st.mean_q_dev(field, q, &mean) * st.len() as f64 * scale
                })
                .collect()
        })
        .collect();

    let masked_in_k = k_cells.iter().filter(|&&c| field.is_masked(c)).count();
    if masked_in_k > 0 {
        warnings.push(format!(
            "{masked_in_k} masked cells inside K are counted as removed at every level"
        ));
    }

    let mut levels: Vec<LevelSet> = Vec::new();
    for &n in n_list {
        let cap = (1.0 / n).min(k.margin);
        let admissible: Vec<usize> =
            (0..schedule.len()).filter(|&i| schedule[i] < cap).collect();
        if admissible.is_empty() {
            warnings.push(format!(
                "level n = {n}: no admissible radii (need 4h = {min_delta:.3e} <= delta < I(n) = {cap:.3e}); skipped"
            ));
            continue;
        }
        let kept: Vec<bool> = (0..k_cells.len())
            .map(|i| admissible.iter().all(|&d| q_table[d][i] <= n))
            .collect();
        if let Some(prev) = levels.last() {
            for (i, (&was, &is)) in prev.kept.iter().zip(&kept).enumerate() {
                assert!(
                    !was || is,
                    "filtration is not monotone: cell {} kept at n = {} but dropped at n = {}",
                    k_cells[i],
                    prev.n,
                    n
                );
            }
        }
        let kept_cells = kept.iter().filter(|&&b| b).count();
        let removed_measure = (k_cells.len() - kept_cells) as f64 * cell_volume;
        levels.push(LevelSet {
            n,
            kept,
            kept_cells,
            removed_measure,
            deltas: admissible.iter().map(|&i| schedule[i]).collect(),
        });
    }

    // Chebyshev exhaustion check at the deepest retained level, against the
    // point-centred supremal oscillation over the same admissible radii.
    let chebyshev = match levels.last() {
        Some(last) => {
            let sup = crate::functionals::supremal_oscillation(field, q, r, &last.deltas)?;
            let total_k = kahan_sum(k_cells.iter().filter_map(|&c| {
                (!field.is_masked(c)).then(|| sup.per_point[c] * cell_volume)
            }));
            let bound = 2f64.powf(q) / last.n * total_k;
            let removed = kahan_sum(last.kept.iter().zip(&k_cells).filter_map(
                |(&keep, &c)| (!keep && !field.is_masked(c)).then_some(cell_volume),
            ));
            let consistent = removed <= bound * (1.0 + 1e-9);
            Some(ChebyshevReport { level: last.n, bound, removed, consistent })
        }
        None => None,
    };

    Ok(GoodSetFiltration {
        k,
        r,
        q,
        levels,
        warnings,
        chebyshev,
        cell_volume,
        k_cells,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompactGoodSet {
    pub n0: f64,
    /// Global cell indices, ascending.
    pub cells: Vec<usize>,
    pub removed_measure: f64,
    pub warning: Option<String>,
}

/// Picks the smallest level whose removed measure is below `eps_measure`.
pub fn select_compact(
    filtration: &GoodSetFiltration,
    eps_measure: f64,
) -> Result<CompactGoodSet> {
    if !(eps_measure > 0.0) {
        return Err(Error::InvalidParams(format!(
            "measure budget must be positive; got {eps_measure}"
        )));
    }
    let warning = (eps_measure < filtration.cell_volume).then(|| {
        format!(
            "measure budget {eps_measure:.3e} is below one cell volume {:.3e}; the grid cannot resolve it",
            filtration.cell_volume
        )
    });
    let mut best = f64::INFINITY;
    for (i, level) in filtration.levels.iter().enumerate() {
        best = best.min(level.removed_measure);
        if level.removed_measure < eps_measure {
            return Ok(CompactGoodSet {
                n0: level.n,
                cells: filtration.cells_at(i),
                removed_measure: level.removed_measure,
                warning,
            });
        }
    }
    Err(Error::NoAdmissibleLevel { target: eps_measure, best })
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderConstant {
    /// sup over pairs of |u(x)-u(y)| / |x-y|^r (Euclidean norm over components).
    pub combined: f64,
    pub per_component: Vec<f64>,
    /// Pairs whose ratio was actually evaluated.
    pub pairs_used: u128,
    pub exhaustive: bool,
    /// Seed of the random pair sample on the capped path.
    pub seed: Option<u64>,
}

struct CellTable {
    pos: Vec<[f64; 3]>,
    /// Flattened values, `dim` per cell.
    val: Vec<f64>,
    dim: usize,
}

fn cell_table(field: &Field, cells: &[usize]) -> Result<CellTable> {
    if cells.is_empty() {
        return Err(Error::InvalidParams("cell set is empty".into()));
    }
    let domain = field.domain();
    let n = domain.n_cells();
    let dim = field.codomain_dim();
    assert!(dim <= 8, "codomain dimension capped at 8");
    let mut pos = Vec::with_capacity(cells.len());
    let mut val = Vec::with_capacity(cells.len() * dim);
    let mut prev = None;
    for &c in cells {
        if c >= n {
            return Err(Error::InvalidParams(format!("cell index {c} out of range")));
        }
        if let Some(p) = prev {
            if c <= p {
                return Err(Error::InvalidParams(
                    "cell set must be strictly ascending".into(),
                ));
            }
        }
        prev = Some(c);
        if field.is_masked(c) {
            return Err(Error::InvalidParams(format!("cell {c} is masked")));
        }
        pos.push(domain.center_of(c));
        val.extend_from_slice(field.value(c));
    }
    Ok(CellTable { pos, val, dim })
}

#[derive(Clone, Copy)]
struct RatioMax {
    per_comp: [f64; 8],
    combined: f64,
}

impl RatioMax {
    fn new() -> Self {
        RatioMax { per_comp: [0.0; 8], combined: 0.0 }
    }
    fn merge(mut self, o: RatioMax) -> Self {
        for a in 0..8 {
            self.per_comp[a] = self.per_comp[a].max(o.per_comp[a]);
        }
        self.combined = self.combined.max(o.combined);
        self
    }
    /// Accumulates the squared ratio of the pair (i, j).
    fn eval(&mut self, t: &CellTable, i: usize, j: usize, r: f64) {
        let (a, b) = (&t.pos[i], &t.pos[j]);
        let d2 = (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum::<f64>();
        if d2 == 0.0 {
            return;
        }
        let scale = d2.powf(r); // |x-y|^(2r)
        let mut n2 = 0.0;
        for k in 0..t.dim {
            let du = t.val[i * t.dim + k] - t.val[j * t.dim + k];
            let rq = du * du / scale;
            n2 += du * du;
            if rq > self.per_comp[k] {
                self.per_comp[k] = rq;
            }
        }
        let rq = n2 / scale;
        if rq > self.combined {
            self.combined = rq;
        }
    }
}

/// Largest Holder-r difference quotient of `field` over `cells`.
/// Exhaustive when the pair count fits the budget; otherwise scans every
/// pair within half the diameter (decimating sources if even that blows the
/// budget) plus a fixed-seed random sample, which makes the result a
/// deterministic lower estimate of the true constant.
pub fn holder_constant_on(field: &Field, cells: &[usize], r: f64) -> Result<HolderConstant> {
    holder_constant_capped(field, cells, r, HOLDER_PAIR_CAP)
}

fn holder_constant_capped(
    field: &Field,
    cells: &[usize],
    r: f64,
    cap: u128,
) -> Result<HolderConstant> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidParams(format!("Holder exponent r must be in (0,1]; got {r}")));
    }
    let t = cell_table(field, cells)?;
    let m = t.pos.len();
    let pairs = (m as u128) * (m as u128 - 1) / 2;

    let finish = |acc: RatioMax, used: u128, exhaustive: bool, seed: Option<u64>| {
        HolderConstant {
            combined: acc.combined.sqrt(),
            per_component: acc.per_comp[..t.dim].iter().map(|v| v.sqrt()).collect(),
            pairs_used: used,
            exhaustive,
            seed,
        }
    };

    if pairs <= cap {
        let acc = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut acc = RatioMax::new();
                for j in i + 1..m {
                    acc.eval(&t, i, j, r);
                }
                acc
            })
            .reduce(RatioMax::new, RatioMax::merge);
        return Ok(finish(acc, pairs, true, None));
    }

    // Capped path: near pairs carry the sup for rough fields, the sample
    // audits the far range.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &t.pos {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let diam2 = (0..3).map(|a| (hi[a] - lo[a]) * (hi[a] - lo[a])).sum::<f64>();
    let t2 = diam2 / 4.0;
    let stride = (pairs / NEAR_SCAN_CAP + 1) as usize;
    let sources: Vec<usize> = (0..m).step_by(stride).collect();
    let (acc, near_used) = sources
        .par_iter()
        .map(|&i| {
            let mut acc = RatioMax::new();
            let mut used = 0u128;
            for j in i + 1..m {
                let (a, b) = (&t.pos[i], &t.pos[j]);
                let d2 = (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum::<f64>();
                if d2 <= t2 {
                    acc.eval(&t, i, j, r);
                    used += 1;
                }
            }
            (acc, used)
        })
        .reduce(
            || (RatioMax::new(), 0u128),
            |x, y| (x.0.merge(y.0), x.1 + y.1),
        );
    let mut acc = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(HOLDER_SAMPLE_SEED);
    let mut sampled = 0u128;
    while sampled < SAMPLE_PAIRS as u128 {
        let i = rng.gen_range(0..m);
        let j = rng.gen_range(0..m);
        if i == j {
            continue;
        }
        acc.eval(&t, i.min(j), i.max(j), r);
        sampled += 1;
    }
    Ok(finish(acc, near_used + sampled, false, Some(HOLDER_SAMPLE_SEED)))
}

/// Certificate for an inf-convolution Holder extension.
#[derive(Debug, Clone, Serialize)]
pub struct HolderCertificate {
    #[serde(skip)]
    pub extension: Field,
    pub h_used: f64,
    pub h_measured: HolderConstant,
    /// Certified global constant: codomain_dim * h_used.
    pub certified_bound: f64,
    /// Largest combined ratio seen by the fixed-seed global audit.
    pub audit_ratio: f64,
    pub audit_pairs: u64,
    pub audit_seed: u64,
    pub audit_ok: bool,
    /// Bitwise agreement with `field` on the given cells (verified).
    pub agreement_exact: bool,
    pub b_cells: usize,
}

/// Per-component chunk of B with a bounding box and value minima, for
/// triangle-inequality pruning of the extension scan.
struct Chunk {
    lo: [f64; 3],
    hi: [f64; 3],
    min_u: [f64; 8],
    start: usize,
    end: usize,
}

const CHUNK: usize = 512;

/// Extends `field` restricted to `cells` to the whole box via
/// f_j(xi) = min over x in B of u_j(x) + H |x - xi|^r.
/// On B the minimum is attained by the zero term, so the extension agrees
/// with the field bitwise there; globally each component is H-Holder, and a
/// fixed-seed audit checks the combined ratio against codomain_dim * H.
pub fn holder_extend(
    field: &Field,
    cells: &[usize],
    r: f64,
    h_const: f64,
) -> Result<HolderCertificate> {
    if !(h_const.is_finite() && h_const >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "Holder constant must be finite and nonnegative; got {h_const}"
        )));
    }
    let h_measured = holder_constant_on(field, cells, r)?;
    if h_const < h_measured.combined {
        return Err(Error::HolderConstantTooSmall {
            given: h_const,
            measured: h_measured.combined,
        });
    }
    let t = cell_table(field, cells)?;
    let domain = field.domain();
    let n = domain.n_cells();
    let dim = t.dim;
    let m = t.pos.len();

    let mut in_b = vec![false; n];
    let mut row_of = vec![usize::MAX; n];
    for (row, &c) in cells.iter().enumerate() {
        in_b[c] = true;
        row_of[c] = row;
    }

    let mut chunks = Vec::with_capacity(m.div_ceil(CHUNK));
    let mut global_min = [f64::INFINITY; 8];
    for start in (0..m).step_by(CHUNK) {
        let end = (start + CHUNK).min(m);
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut min_u = [f64::INFINITY; 8];
        for i in start..end {
            for a in 0..3 {
                lo[a] = lo[a].min(t.pos[i][a]);
                hi[a] = hi[a].max(t.pos[i][a]);
            }
            for k in 0..dim {
                min_u[k] = min_u[k].min(t.val[i * dim + k]);
            }
        }
        for k in 0..dim {
            global_min[k] = global_min[k].min(min_u[k]);
        }
        chunks.push(Chunk { lo, hi, min_u, start, end });
    }

    let rh = r / 2.0; // d^r = (d^2)^(r/2)
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|c| {
            if in_b[c] {
                // The zero term wins exactly; copy preserves the bits.
                return field.value(c).to_vec();
            }
            let xi = domain.center_of(c);
            let mut order: Vec<(f64, usize)> = chunks
                .iter()
                .enumerate()
                .map(|(ci, ch)| {
                    let mut d2 = 0.0;
                    for a in 0..3 {
                        let g = (ch.lo[a] - xi[a]).max(0.0).max(xi[a] - ch.hi[a]);
                        d2 += g * g;
                    }
                    (d2, ci)
                })
                .collect();
            order.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut best = [f64::INFINITY; 8];
            for &(d2_lb, ci) in &order {
                let base = h_const * d2_lb.powf(rh);
                if (0..dim).all(|k| global_min[k] + base >= best[k]) {
                    break; // every later chunk is at least this far away
                }
                let ch = &chunks[ci];
                if (0..dim).all(|k| ch.min_u[k] + base >= best[k]) {
                    continue;
                }
                for i in ch.start..ch.end {
                    let p = &t.pos[i];
                    let d2 = (0..3).map(|a| (p[a] - xi[a]) * (p[a] - xi[a])).sum::<f64>();
                    let pen = h_const * d2.powf(rh);
                    for k in 0..dim {
                        let cand = t.val[i * dim + k] + pen;
                        if cand < best[k] {
                            best[k] = cand;
                        }
                    }
                }
            }
            best[..dim].to_vec()
        })
        .collect();

    let mut values = Vec::with_capacity(n * dim);
    for row in rows {
        values.extend_from_slice(&row);
    }
    let extension = Field::from_samples(domain.clone(), dim, values, None)?;

    let agreement_exact = cells.iter().all(|&c| {
        extension
            .value(c)
            .iter()
            .zip(field.value(c))
            .all(|(a, b)| a.to_bits() == b.to_bits())
    });

    // Global audit: combined Holder ratio of the extension over random cell
    // pairs, against the certified bound.
    let certified_bound = dim as f64 * h_const;
    let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED);
    let mut audit_ratio2 = 0.0f64;
    let mut audit_pairs = 0u64;
    while audit_pairs < SAMPLE_PAIRS {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        let (a, b) = (domain.center_of(i), domain.center_of(j));
        let d2 = (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum::<f64>();
        let mut n2 = 0.0;
        for (va, vb) in extension.value(i).iter().zip(extension.value(j)) {
            n2 += (va - vb) * (va - vb);
        }
        audit_ratio2 = audit_ratio2.max(n2 / d2.powf(r));
        audit_pairs += 1;
    }
    let audit_ratio = audit_ratio2.sqrt();
    let audit_ok = audit_ratio <= certified_bound * (1.0 + 1e-9);

    Ok(HolderCertificate {
        extension,
        h_used: h_const,
        h_measured,
        certified_bound,
        audit_ratio,
        audit_pairs,
        audit_seed: AUDIT_SEED,
        audit_ok,
        agreement_exact,
        b_cells: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_domain, Field};
    use approx::assert_relative_eq;

    fn step1d(cells: usize) -> Field {
        let domain = make_domain(1, &[-0.5], &[0.5], &[cells]).unwrap();
        Field::from_fn(domain, 1, |x, out| {
            out[0] = if x[0] > 0.0 { 1.0 } else { 0.0 };
            true
        })
    }

    #[test]
    fn constant_field_keeps_every_cell() {
        let domain = make_domain(1, &[0.0], &[1.0], &[256]).unwrap();
        let u = Field::from_fn(domain, 1, |_, out| {
            out[0] = 3.25;
            true
        });
        let f = build_filtration(&u, &[0.2], &[0.8], 0.5, 2.0, &[1.0, 2.0, 4.0], &[0.05, 0.025])
            .unwrap();
        let k_count = f.k.cell_count(1);
        assert_eq!(f.levels.len(), 3);
        for level in &f.levels {
            assert_eq!(level.kept_cells, k_count);
            assert_eq!(level.removed_measure, 0.0);
        }
        let cheb = f.chebyshev.unwrap();
        assert!(cheb.consistent);
        assert_eq!(cheb.removed, 0.0);
    }

    #[test]
    fn step_filtration_matches_the_analytic_removed_mass() {
        // For the unit step with r = 1/2, q = 2 the rescaled oscillation is
        // (delta^2 - t^2) / (2 delta^3) at distance t, with supremum
        // 1/(3 sqrt(3) t); the removed set at level n is then an interval of
        // length 2/(3 sqrt(3) n) ~ 0.385/n.
        let u = step1d(4096);
        let schedule: Vec<f64> = (0..13).map(|k| 0.09 * 0.75f64.powi(k)).collect();
        let f = build_filtration(&u, &[-0.4], &[0.4], 0.5, 2.0, &[4.0, 8.0, 16.0, 32.0], &schedule)
            .unwrap();
        assert_eq!(f.levels.len(), 4);
        let expected = 2.0 / (3.0 * 3f64.sqrt());
        for level in &f.levels {
            let ratio = level.removed_measure / (expected / level.n);
            assert!(
                (0.85..=1.02).contains(&ratio),
                "removed mass at n = {}: {} vs analytic {}",
                level.n,
                level.removed_measure,
                expected / level.n
            );
        }
        for w in f.levels.windows(2) {
            assert!(w[1].removed_measure <= w[0].removed_measure);
        }
        let cheb = f.chebyshev.unwrap();
        assert!(cheb.consistent, "removed {} > bound {}", cheb.removed, cheb.bound);
    }

    #[test]
    fn coarse_schedules_skip_levels_with_a_warning() {
        // At 128 cells 4h = 1/32, so I(1000) = 1e-3 leaves no admissible radii.
        let u = step1d(128);
        let f = build_filtration(&u, &[-0.4], &[0.4], 0.5, 2.0, &[4.0, 1000.0], &[0.05, 0.09])
            .unwrap();
        assert_eq!(f.levels.len(), 1);
        assert_eq!(f.levels[0].n, 4.0);
        assert!(f.warnings.iter().any(|w| w.contains("n = 1000")), "{:?}", f.warnings);
    }

    #[test]
    fn select_compact_picks_the_smallest_adequate_level() {
        let u = step1d(4096);
        let schedule: Vec<f64> = (0..13).map(|k| 0.09 * 0.75f64.powi(k)).collect();
        let f = build_filtration(&u, &[-0.4], &[0.4], 0.5, 2.0, &[4.0, 8.0, 16.0, 32.0], &schedule)
            .unwrap();
        // 0.385/n drops below 0.02 only at n = 32.
        let c = select_compact(&f, 0.02).unwrap();
        assert_eq!(c.n0, 32.0);
        assert!(c.warning.is_none());
        assert!(c.removed_measure < 0.02);
        assert!(!c.cells.is_empty());
        assert!(c.cells.windows(2).all(|w| w[0] < w[1]));

        let err = select_compact(&f, 1e-9).unwrap_err();
        match err {
            Error::NoAdmissibleLevel { target, best } => {
                assert_eq!(target, 1e-9);
                assert_relative_eq!(best, f.levels[3].removed_measure);
            }
            e => panic!("unexpected error {e}"),
        }

        let tight = select_compact(&f, 0.5 * f.cell_volume);
        assert!(matches!(tight, Err(Error::NoAdmissibleLevel { .. })) || {
            tight.unwrap().warning.is_some()
        });
    }

    #[test]
    fn holder_constant_of_sqrt_is_one() {
        // 1001 cells on [-1,1] place a center exactly at 0; the pair (0, y)
        // attains |sqrt|y|| / |y|^(1/2) = 1.
        let domain = make_domain(1, &[-1.0], &[1.0], &[1001]).unwrap();
        let u = Field::from_fn(domain, 1, |x, out| {
            out[0] = x[0].abs().sqrt();
            true
        });
        let cells: Vec<usize> = (0..1001).collect();
        let h = holder_constant_on(&u, &cells, 0.5).unwrap();
        assert!(h.exhaustive);
        assert_relative_eq!(h.combined, 1.0, max_relative = 1e-6);
        assert_eq!(h.per_component.len(), 1);
        assert_relative_eq!(h.per_component[0], h.combined);
    }

    #[test]
    fn holder_constant_of_a_linear_field_is_its_slope() {
        let domain = make_domain(1, &[0.0], &[1.0], &[512]).unwrap();
        let u = Field::from_fn(domain, 1, |x, out| {
            out[0] = 3.0 * x[0];
            true
        });
        let cells: Vec<usize> = (0..512).collect();
        let h = holder_constant_on(&u, &cells, 1.0).unwrap();
        assert_relative_eq!(h.combined, 3.0, max_relative = 1e-9);
    }

    #[test]
    fn capped_scan_matches_brute_force_on_a_smooth_field() {
        let domain = make_domain(1, &[0.0], &[1.0], &[4096]).unwrap();
        let u = Field::from_fn(domain, 1, |x, out| {
            out[0] = (2.0 * std::f64::consts::PI * x[0]).sin();
            true
        });
        let cells: Vec<usize> = (0..4096).collect();
        let full = holder_constant_capped(&u, &cells, 1.0, u128::MAX).unwrap();
        let capped = holder_constant_capped(&u, &cells, 1.0, 1_000).unwrap();
        assert!(full.exhaustive);
        assert!(!capped.exhaustive);
        assert_eq!(capped.seed, Some(HOLDER_SAMPLE_SEED));
        assert!(capped.combined <= full.combined * (1.0 + 1e-12));
        assert!(capped.combined >= 0.99 * full.combined);
    }

    #[test]
    fn extension_bridges_a_gap_with_the_cone_profile() {
        // Remove (-0.1, 0.1) around the step; the extension climbs from the
        // left plateau as H (x - xL)^(1/2) until it meets the right value.
        let u = step1d(1024);
        let domain = u.domain().clone();
        let cells: Vec<usize> = (0..1024)
            .filter(|&c| domain.center_of(c)[0].abs() >= 0.1)
            .collect();
        let measured = holder_constant_on(&u, &cells, 0.5).unwrap();
        let x_l = cells
            .iter()
            .map(|&c| domain.center_of(c)[0])
            .filter(|&x| x < 0.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let x_r = cells
            .iter()
            .map(|&c| domain.center_of(c)[0])
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(measured.combined, 1.0 / (x_r - x_l).sqrt(), max_relative = 1e-12);

        let cert = holder_extend(&u, &cells, 0.5, measured.combined).unwrap();
        assert!(cert.agreement_exact);
        assert!(cert.audit_ok, "audit ratio {} > bound {}", cert.audit_ratio, cert.certified_bound);
        assert_relative_eq!(cert.certified_bound, measured.combined);
        for c in 0..1024 {
            let x = domain.center_of(c)[0];
            if x.abs() < 0.1 {
                let h = measured.combined;
                let expect = (h * (x - x_l).sqrt()).min(1.0 + h * (x_r - x).sqrt());
                assert_relative_eq!(cert.extension.scalar(c), expect, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn extension_is_idempotent_bitwise() {
        let u = step1d(256);
        let domain = u.domain().clone();
        let cells: Vec<usize> = (0..256)
            .filter(|&c| domain.center_of(c)[0].abs() >= 0.15)
            .collect();
        let h = holder_constant_on(&u, &cells, 0.5).unwrap().combined;
        let once = holder_extend(&u, &cells, 0.5, h).unwrap();
        let twice = holder_extend(&once.extension, &cells, 0.5, h).unwrap();
        for c in 0..256 {
            assert_eq!(
                once.extension.scalar(c).to_bits(),
                twice.extension.scalar(c).to_bits(),
                "extension not idempotent at cell {c}"
            );
        }
    }

    #[test]
    fn undersized_holder_constant_is_rejected() {
        let u = step1d(256);
        let domain = u.domain().clone();
        let cells: Vec<usize> = (0..256)
            .filter(|&c| domain.center_of(c)[0].abs() >= 0.15)
            .collect();
        let measured = holder_constant_on(&u, &cells, 0.5).unwrap().combined;
        let err = holder_extend(&u, &cells, 0.5, 0.5 * measured).unwrap_err();
        match err {
            Error::HolderConstantTooSmall { given, measured: m } => {
                assert_relative_eq!(given, 0.5 * measured);
                assert_relative_eq!(m, measured);
            }
            e => panic!("unexpected error {e}"),
        }
    }
}
