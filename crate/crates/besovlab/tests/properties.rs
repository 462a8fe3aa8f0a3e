//! Cross-module invariants checked on randomized inputs: homogeneity and
//! translation invariance of the pair functional, exact symmetries of the
//! half-ball split, window bracket ordering, Jensen dominations, classifier
//! inclusions, filtration monotonicity, extension idempotence, additivity of
//! the jump variation, and bitwise export round-trips.

use besovlab::fields::{
    export, import, make_domain, Field, InterfacePiece, InterfaceSpec, JumpProfile,
    PayloadFormat, PieceGeometry,
};
use besovlab::functionals::{double_average, EpsilonSchedule, LimitEstimate};
use besovlab::jumps::{q_jump_variation, JumpSource};
use besovlab::lusin::{build_filtration, holder_constant_on, holder_extend};
use besovlab::oscillation::{classify_point, inf_const_oscillation, Thresholds};
use besovlab::quadrature::{ball_stencil, halfball_averages, pair_integral};
use proptest::prelude::*;

/// Truncated Fourier sum on [0,1]^dim; smooth and deterministic in its
/// coefficients.
fn fourier_field(dim: usize, cells: usize, modes: &[(f64, f64, f64)]) -> Field {
    let domain = make_domain(dim, &vec![0.0; dim], &vec![1.0; dim], &vec![cells; dim]).unwrap();
    let modes = modes.to_vec();
    Field::from_fn(domain, 1, move |x, out| {
        let arg: f64 = x[..dim].iter().sum();
        out[0] = modes
            .iter()
            .map(|&(a, k, phi)| a * (2.0 * std::f64::consts::PI * k * arg + phi).sin())
            .sum();
        true
    })
}

fn mode_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec(
        (-2.0..2.0f64, (1u32..4).prop_map(|k| k as f64), 0.0..std::f64::consts::TAU),
        1..4,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pair_functional_is_homogeneous_of_degree_q(
        modes in mode_strategy(),
        lambda in 0.1..10.0f64,
        qi in 0usize..3,
    ) {
        let q = [1.0, 2.0, 3.0][qi];
        let u = fourier_field(1, 128, &modes);
        let scaled = u.affine(lambda, &[0.0]);
        let f = pair_integral(&u, 0.1, q, 1.0).unwrap();
        let g = pair_integral(&scaled, 0.1, q, 1.0).unwrap();
        let expect = lambda.powf(q) * f;
        prop_assert!(
            (g - expect).abs() <= 1e-10 * (1.0 + expect.abs()),
            "homogeneity broken: got {g}, expected {expect}"
        );
    }

    #[test]
    fn pair_functional_ignores_whole_cell_translations(
        center in 0.38..0.52f64,
        shift_cells in 1usize..8,
        qi in 0usize..2,
    ) {
        // A bump supported well inside the box, moved by whole cells: every
        // differing pair has both values zero, so the sums agree.
        let q = [1.0, 2.0][qi];
        let cells = 256;
        let h = 1.0 / cells as f64;
        let bump = |c: f64| {
            let domain = make_domain(1, &[0.0], &[1.0], &[cells]).unwrap();
            Field::from_fn(domain, 1, move |x, out| {
                let t = (x[0] - c) / 0.08;
                out[0] = if t.abs() < 1.0 { (1.0 - t * t).powi(2) } else { 0.0 };
                true
            })
        };
        let f = pair_integral(&bump(center), 0.05, q, 1.0).unwrap();
        let g = pair_integral(&bump(center + shift_cells as f64 * h), 0.05, q, 1.0).unwrap();
        prop_assert!(
            (f - g).abs() <= 1e-12 * (1.0 + f.abs()),
            "translation broke the functional: {f} vs {g}"
        );
    }

    #[test]
    fn halfball_swaps_exactly_when_nu_flips(
        modes in mode_strategy(),
        cx in 0.3..0.7f64,
        cy in 0.3..0.7f64,
        angle in 0.0..std::f64::consts::TAU,
        rho in 0.1..0.25f64,
    ) {
        let u = fourier_field(2, 48, &modes);
        let x = [cx, cy, 0.0];
        let nu = [angle.cos(), angle.sin(), 0.0];
        let neg = [-nu[0], -nu[1], -0.0];
        let a = halfball_averages(&u, &x, &nu, rho).unwrap();
        let b = halfball_averages(&u, &x, &neg, rho).unwrap();
        prop_assert_eq!(a.n_plus, b.n_minus);
        prop_assert_eq!(a.n_minus, b.n_plus);
        for (p, m) in a.plus.iter().zip(&b.minus) {
            prop_assert_eq!(p.to_bits(), m.to_bits());
        }
        for (m, p) in a.minus.iter().zip(&b.plus) {
            prop_assert_eq!(m.to_bits(), p.to_bits());
        }
    }

    #[test]
    fn jensen_dominations_hold_on_ball_stencils(
        modes in mode_strategy(),
        cx in 0.3..0.7f64,
        cy in 0.3..0.7f64,
        rho in 0.07..0.25f64,
        qi in 0usize..3,
    ) {
        let q = [1.0, 2.0, 2.7][qi];
        let u = fourier_field(2, 48, &modes);
        let x = [cx, cy, 0.0];
        let st = ball_stencil(&u, &x, rho).unwrap();
        let mean = st.mean(&u);
        let dev = st.mean_q_dev(&u, q, &mean);
        let da = double_average(&u, &x, rho, q).unwrap();
        prop_assert!(
            dev <= da * (1.0 + 1e-12) + 1e-300,
            "mean deviation {dev} exceeds the double average {da}"
        );
        if q <= 2.0 {
            let inf = inf_const_oscillation(&u, &x, rho, q).unwrap();
            prop_assert!(
                inf.value <= dev * (1.0 + 1e-9) + 1e-300,
                "inf-const oscillation {} exceeds the mean deviation {dev}",
                inf.value
            );
        }
    }

    #[test]
    fn classifier_inclusions_are_nested(
        modes in mode_strategy(),
        cx in 0.25..0.75f64,
        top in 0.1..0.2f64,
    ) {
        let u = fourier_field(1, 128, &modes);
        let schedule = EpsilonSchedule::geometric(top, 0.7, 4).unwrap();
        let th = Thresholds::default_profile();
        let c = classify_point(&u, &[cx, 0.0, 0.0], &schedule, &th).unwrap();
        prop_assert!(!c.in_sdoubleprime || c.in_sprime, "S'' must sit inside S'");
        prop_assert!(!c.in_sprime || c.in_s, "S' must sit inside S");
    }

    #[test]
    fn filtration_removed_mass_decreases_in_n(
        modes in mode_strategy(),
    ) {
        let u = fourier_field(1, 256, &modes);
        let f = build_filtration(&u, &[0.2], &[0.8], 0.5, 2.0, &[1.0, 2.0, 4.0, 8.0], &[0.05, 0.03])
            .unwrap();
        for w in f.levels.windows(2) {
            prop_assert!(w[1].removed_measure <= w[0].removed_measure);
        }
    }

    #[test]
    fn extension_is_idempotent_and_lipschitz_in_h(
        modes in mode_strategy(),
        stride in 1usize..4,
        offset in 0usize..3,
        slack in 0.0..1.0f64,
        bump in 0.01..1.0f64,
    ) {
        let u = fourier_field(1, 48, &modes);
        let cells: Vec<usize> = (offset.min(stride - 1)..48).step_by(stride).collect();
        let measured = holder_constant_on(&u, &cells, 0.5).unwrap().combined;
        let h1 = measured * (1.0 + slack);
        let once = holder_extend(&u, &cells, 0.5, h1).unwrap();
        prop_assert!(once.agreement_exact);
        let twice = holder_extend(&once.extension, &cells, 0.5, h1).unwrap();
        for c in 0..48 {
            prop_assert_eq!(
                once.extension.scalar(c).to_bits(),
                twice.extension.scalar(c).to_bits(),
                "idempotence broken at cell {}", c
            );
        }
        // Raising H can only raise the extension, by at most (H2-H1) diam^r.
        let h2 = h1 + bump;
        let bigger = holder_extend(&u, &cells, 0.5, h2).unwrap();
        let diam_r = 1.0f64.sqrt(); // domain [0,1], r = 1/2
        for c in 0..48 {
            let lo = once.extension.scalar(c);
            let hi = bigger.extension.scalar(c);
            prop_assert!(hi >= lo - 1e-12, "extension decreased in H at cell {c}");
            prop_assert!(
                hi - lo <= (h2 - h1) * diam_r * (1.0 + 1e-9) + 1e-12,
                "extension moved faster than the H increment at cell {c}: {} vs {}",
                hi - lo,
                (h2 - h1) * diam_r
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trailing_window_brackets_are_ordered(
        values in prop::collection::vec(0.0..10.0f64, 4..12),
    ) {
        let entries: Vec<(f64, f64)> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (0.5 * 0.8f64.powi(i as i32), v))
            .collect();
        let e3 = LimitEstimate::from_entries(entries.clone(), 3, 0.05);
        let e4 = LimitEstimate::from_entries(entries, 4, 0.05);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(e3.limsup >= e3.liminf);
        prop_assert!(e3.limsup <= max && e3.liminf >= min);
        // Widening the trailing window can only widen the bracket.
        prop_assert!(e4.limsup >= e3.limsup);
        prop_assert!(e4.liminf <= e3.liminf);
    }

    #[test]
    fn jump_variation_is_additive_over_pieces(
        segs in prop::collection::vec(
            (-0.4..0.4f64, -0.4..0.4f64, -0.4..0.4f64, -0.4..0.4f64, 0.1..3.0f64, prop::bool::ANY),
            1..5,
        ),
        qi in 0usize..2,
    ) {
        let q = [1.0, 2.5][qi];
        let pieces: Vec<InterfacePiece> = segs
            .iter()
            .filter(|(ax, ay, bx, by, _, _)| {
                let d2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay);
                d2 > 1e-6
            })
            .map(|&(ax, ay, bx, by, jump, affine)| InterfacePiece {
                geometry: PieceGeometry::Segment { a: [ax, ay, 0.0], b: [bx, by, 0.0] },
                nu: [1.0, 0.0, 0.0],
                u_minus: 0.0,
                jump: if affine {
                    JumpProfile::Affine { start: jump, end: 2.0 * jump }
                } else {
                    JumpProfile::Const(jump)
                },
                classical: true,
            })
            .collect();
        prop_assume!(!pieces.is_empty());
        let whole = InterfaceSpec { pieces: pieces.clone() };
        let total = q_jump_variation(JumpSource::Spec(&whole), q);
        let mut sum = 0.0f64;
        for p in pieces {
            let single = InterfaceSpec { pieces: vec![p] };
            sum += q_jump_variation(JumpSource::Spec(&single), q);
        }
        prop_assert!(
            (total - sum).abs() <= 1e-12 * (1.0 + sum.abs()),
            "variation not additive: {total} vs {sum}"
        );
    }

    #[test]
    fn export_import_round_trips_bitwise(
        values in prop::collection::vec(-1e6..1e6f64, 16),
        mask_bits in prop::collection::vec(prop::bool::ANY, 16),
        binary in prop::bool::ANY,
    ) {
        let domain = make_domain(1, &[-0.5], &[0.5], &[16]).unwrap();
        let mut mask = mask_bits;
        mask[0] = false; // keep at least one live cell
        let field = Field::from_samples(domain, 1, values, Some(mask.clone())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.dat");
        let format = if binary { PayloadFormat::BinaryLe } else { PayloadFormat::Csv };
        export(&field, &path, format).unwrap();
        let back = import(&path).unwrap();
        prop_assert_eq!(back.domain().cells(), field.domain().cells());
        for c in 0..16 {
            prop_assert_eq!(back.scalar(c).to_bits(), field.scalar(c).to_bits());
            prop_assert_eq!(back.is_masked(c), field.is_masked(c));
        }
    }
}
