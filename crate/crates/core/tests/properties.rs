mod common;

use boundstate::classify::{classify, find_kth_bound_state, intersection_scan, uniqueness_sweep, Decision, Membership};
use boundstate::functionals::{
    branch_inverse, eval_functional, monotonicity_monitor, trace, what_gap, BranchDirection, Functional,
};
use boundstate::model::{audit, check_f_hypotheses, weight_constants, CheckerOptions, RadialGrid, Status, Weight, WeightSpec};
use boundstate::shoot::{extract_markers, integrate, EventKind, ShootOptions, StopReason};
use boundstate::variation::{integrate_variation, interlacing};
use common::{cubic, power_model, Rk4};
use proptest::prelude::*;

fn opts(tol: f64) -> ShootOptions {
    ShootOptions { tol, ..Default::default() }
}

fn small_grid() -> RadialGrid {
    RadialGrid { points: 400, ..Default::default() }
}

fn tabulated_r2() -> WeightSpec<f64> {
    let r: Vec<f64> = (1..=4000).map(|i| i as f64 * 0.01).collect();
    let q = r.iter().map(|x| x * x).collect();
    let dq = r.iter().map(|x| 2.0 * x).collect();
    WeightSpec::Tabulated { r, q, q_prime: dq }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn power_weight_closed_forms(theta in 1.05f64..6.0, lr in -3.0f64..3.0) {
        let w = Weight::new(WeightSpec::Power { theta }).unwrap();
        let r = 10f64.powf(lr);
        prop_assert!((w.big_h(r).unwrap() - 1.0 / (theta + 1.0)).abs() <= 1e-9);
        prop_assert!((w.h_prime(r).unwrap() - 1.0 / (theta - 1.0)).abs() <= 1e-9);
        prop_assert!((w.g(r).unwrap() - (theta - 1.0) / 2.0).abs() <= 1e-9);
    }

    #[test]
    fn h_prime_relation_on_all_families(theta in 1.5f64..4.0, c in 0.2f64..5.0, lr in -2.0f64..1.5) {
        let r = 10f64.powf(lr);
        for spec in [
            WeightSpec::Power { theta },
            WeightSpec::PowerSum { theta, c },
            WeightSpec::piecewise_log_default(theta),
            tabulated_r2(),
        ] {
            let w = Weight::new(spec.clone()).unwrap();
            let h = w.h(r).unwrap();
            let rel = h * w.q_prime(r) / w.q(r) - 1.0;
            prop_assert!((w.h_prime(r).unwrap() - rel).abs() <= 1e-9 * rel.abs().max(1.0), "{spec:?} at {r}");
            // Independent check of h' itself.
            let fd = common::richardson_diff(|x| w.h(x).unwrap(), r, 1e-3 * r);
            prop_assert!((fd - rel).abs() <= 1e-6 * rel.abs().max(1.0), "{spec:?} at {r}: {fd} vs {rel}");
        }
    }

    #[test]
    fn limit_identity_when_converged(theta in 1.5f64..4.0, c in 0.5f64..3.0) {
        let w = Weight::new(WeightSpec::PowerSum { theta, c }).unwrap();
        let k = weight_constants(&w, &small_grid()).unwrap();
        if let (Some(hh), Some(l)) = (k.h_inf, k.ell_inf) {
            prop_assert!((hh - l / (1.0 + 2.0 * l)).abs() <= 1e-6);
        }
    }

    #[test]
    fn f4_implies_monotone_ratio(p in 1.3f64..6.0) {
        let m = power_model(2.0, p);
        let k = weight_constants(&m.weight, &small_grid()).unwrap();
        let opts = CheckerOptions { f_points: 400, ..Default::default() };
        let f = check_f_hypotheses(&m.nl, &k, &opts).unwrap();
        if f["f4"].status == Status::Satisfied {
            let (b, s_max) = (m.nl.b, opts.s_max_factor * m.nl.beta);
            let ratio = |s: f64| s * m.nl.df(s) / m.nl.f(s);
            let pts: Vec<f64> = (0..400).map(|i| b * (1.0 + 1e-6) * (s_max / b).powf(i as f64 / 399.0)).collect();
            for w in pts.windows(2) {
                prop_assert!(ratio(w[1]) <= ratio(w[0]) * (1.0 + 1e-12), "p = {p} at {}", w[1]);
            }
        }
    }
}

#[test]
fn checker_known_negatives() {
    let c = CheckerOptions { grid: small_grid(), f_points: 400, ..Default::default() };
    let m4 = cubic(4.0);
    let rep = audit(&m4.weight, &m4.nl, &c).unwrap();
    assert!(rep.constants.g_bar.unwrap() > 1.0);
    assert!(rep.constants.c_q7.is_none());
    assert!(!rep.certificate("theorem_4").unwrap().certified);
    let m2 = cubic(2.0);
    let rep = audit(&m2.weight, &m2.nl, &c).unwrap();
    assert_eq!(rep.status("f6"), Some(Status::Violated));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_dissipated(alpha in 1.5f64..20.0, theta in 1.2f64..4.0) {
        let m = cubic(theta);
        let tol = 1e-10;
        let t = integrate(&m, alpha, &opts(tol)).unwrap();
        let i0 = m.energy(alpha, 0.0);
        prop_assert!(t.max_energy_increase() <= 10.0 * tol * i0.max(1.0));
    }

    #[test]
    fn markers_alternate(alpha in 1.5f64..30.0, theta in 1.2f64..3.0) {
        let m = cubic(theta);
        let t = integrate(&m, alpha, &opts(1e-10)).unwrap();
        let turning: Vec<_> = t.events.iter().filter(|e| matches!(e.kind, EventKind::UZero | EventKind::UprimeZero)).collect();
        for w in turning.windows(2) {
            prop_assert!(w[0].r < w[1].r);
        }
        let mk = extract_markers(&m, &t, 50);
        for (j, z) in mk.zeros.iter().enumerate() {
            if let Some(tk) = mk.extrema.get(j) {
                prop_assert!(z.0 < tk.0);
            }
            if let Some(next) = mk.zeros.get(j + 1) {
                prop_assert!(mk.extrema[j].0 < next.0);
                // Slopes at consecutive zeros have opposite signs, so u alternates in sign.
                prop_assert!(z.1 * next.1 < 0.0);
            }
        }
    }

    #[test]
    fn halving_tol_is_self_consistent(alpha in 1.5f64..8.0, theta in 1.5f64..3.0) {
        let m = cubic(theta);
        let tol = 1e-9;
        let horizon = ShootOptions { tol, r_max: Some(8.0), ..Default::default() };
        let a = integrate(&m, alpha, &horizon).unwrap();
        let b = integrate(&m, alpha, &ShootOptions { tol: tol / 2.0, ..horizon }).unwrap();
        for i in 1..=16 {
            let r = 0.5 * i as f64;
            if r > a.r_end() || r > b.r_end() {
                break;
            }
            let d = (a.u(r).unwrap() - b.u(r).unwrap()).abs();
            prop_assert!(d <= 5.0 * tol * alpha.max(1.0), "r = {r}: {d:e}");
        }
    }

    #[test]
    fn energy_shortcut_for_negative_primitive(x in 0.0f64..1.0) {
        let m = cubic(2.0);
        let (b, beta) = (m.nl.b, m.nl.beta);
        let alpha = b + (beta - b) * (1e-6 + x * (1.0 - 2e-6));
        let c = classify(&m, alpha, 3, &opts(1e-10)).unwrap();
        prop_assert_eq!(c.codes(), vec!["P1".to_string()]);
        prop_assert_eq!(c.terminal().decided_by, Decision::EnergyShortcut);
    }

    #[test]
    fn energy_functional_identity(alpha in 1.6f64..12.0, x in 0.0f64..1.0) {
        let m = cubic(2.0);
        let t = integrate(&m, alpha, &opts(1e-11)).unwrap();
        let inv = branch_inverse(&t, 1, BranchDirection::Down).unwrap();
        let s = inv.s_lo + (inv.s_hi - inv.s_lo) * (0.001 + 0.998 * x);
        let r = inv.r_of(s).unwrap();
        let up = t.uprime(r).unwrap();
        // W̃ is defined only where I ≥ 0.
        prop_assume!(m.energy(s, up) > 0.0);
        let wt = eval_functional(&m, Functional::Wtilde, &inv, None, s).unwrap().value;
        let q2i = m.weight.q(r).powi(2) * m.energy(s, up);
        prop_assert!((wt * wt - q2i).abs() <= 1e-9 * q2i.abs().max(1e-300), "s = {s}");
    }

    #[test]
    fn s12_positive_and_vanishes_at_top(a1 in 1.6f64..8.0, gap in 0.05f64..2.0) {
        let m = cubic(2.0);
        let o = opts(1e-11);
        let (t1, t2) = (integrate(&m, a1, &o).unwrap(), integrate(&m, a1 + gap, &o).unwrap());
        let i1 = branch_inverse(&t1, 1, BranchDirection::Down).unwrap();
        let i2 = branch_inverse(&t2, 1, BranchDirection::Down).unwrap();
        let top = eval_functional(&m, Functional::S12, &i1, Some(&i2), a1).unwrap().value;
        prop_assert!(top.abs() <= 1e-12);
        let lo = i1.s_lo.max(i2.s_lo);
        let tr = trace(&m, Functional::S12, &i1, Some(&i2), 64, Some((lo, a1))).unwrap();
        for x in tr.samples.iter().filter(|x| x.s < a1 * (1.0 - 1e-9)) {
            prop_assert!(x.value > 0.0, "s = {}: {}", x.s, x.value);
        }
    }
}

/// Every down-branch of a `θ = 2` trajectory (certified by the ground-state theorems) has `dP/ds ≥ −tol` on `|s| ≥ β`.
#[test]
fn p_monotone_on_certified_instance() {
    let m = cubic(2.0);
    for alpha in [1.6, 2.5, 4.0, 4.3373, 4.3375, 6.0, 12.0, 25.0] {
        let t = integrate(&m, alpha, &opts(1e-12)).unwrap();
        let mut i = 1;
        while let Ok(inv) = branch_inverse(&t, i, BranchDirection::Down) {
            let tr = trace(&m, Functional::P, &inv, None, 256, None).unwrap();
            let mon = monotonicity_monitor(&m, &tr, true);
            assert!(mon.holds, "alpha = {alpha}, branch {i}: {mon:?}");
            i += 2;
        }
    }
}

#[test]
fn double_zero_absorbs() {
    let m = cubic(2.0);
    let o = opts(1e-12);
    let absorbed = |t: &boundstate::shoot::Trajectory<f64>| {
        let r0 = t.zero_extension_from.unwrap();
        assert!(t.events.iter().all(|e| e.r <= r0));
        assert_eq!(t.u(r0 + 1.0).unwrap(), 0.0);
        assert_eq!(t.uprime(r0 + 5.0).unwrap(), 0.0);
    };
    // A start inside the tolerance box is a double zero at once.
    let t = integrate(&m, 5e-10, &o).unwrap();
    assert_eq!(t.stop, StopReason::DoubleZero);
    absorbed(&t);
    // For u³ − u the decaying and growing modes near 0 separate like e^{∓r}, so a
    // double zero near the ground state needs |α − α*| near machine precision; when
    // one is hit, nothing may be recorded past it.
    let b = find_kth_bound_state(&m, 1, 4.0, 5.0, 1e-13, &o).unwrap();
    for alpha in [b.lo, b.alpha_star, b.hi] {
        let t = integrate(&m, alpha, &o).unwrap();
        if t.stop == StopReason::DoubleZero {
            absorbed(&t);
        }
    }
}

#[test]
fn dense_output_matches_fixed_step_reference() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let theta: f64 = rng.gen_range(1.5..3.0);
        let alpha: f64 = rng.gen_range(1.5..6.0);
        let m = cubic(theta);
        let t = integrate(&m, alpha, &ShootOptions { tol: 1e-11, r_max: Some(10.0), ..Default::default() }).unwrap();
        let reference = Rk4::new(theta, 3.0);
        let radii: Vec<f64> = (1..=20).map(|i| reference.r0 + 500.0 * i as f64 * reference.h).collect();
        let radii: Vec<f64> = radii.into_iter().filter(|&r| r < t.r_end()).collect();
        for (r, y) in radii.iter().zip(reference.sample(alpha, &radii)) {
            let u = t.u(*r).unwrap();
            assert!((u - y[0]).abs() <= 1e-6 * y[0].abs().max(1.0), "theta {theta} alpha {alpha} r {r}: {u} vs {}", y[0]);
        }
    }
}

#[test]
fn variation_start_matches_series() {
    let m = cubic(2.0);
    for alpha in [1.5, 3.0, 8.0] {
        let vt = integrate_variation(&m, alpha, &opts(1e-12)).unwrap();
        let r = 2.0 * vt.r_start;
        let series = 1.0 - m.nl.df(alpha) * r * r / 6.0;
        assert!((vt.phi(r).unwrap() - series).abs() <= 1e-10, "alpha = {alpha}");
    }
}

#[test]
fn interlacing_on_bound_states() {
    for (theta, k_max, hi) in [(2.0, 1, 20.0), (1.4, 3, 12.0)] {
        let m = cubic(theta);
        let o = opts(1e-11);
        let sw = uniqueness_sweep(&m, k_max, m.nl.b, hi, 0.05, 1e-10, &o).unwrap();
        assert_eq!(sw.brackets.len(), k_max);
        for b in &sw.brackets {
            let vt = integrate_variation(&m, b.n_side(), &o).unwrap();
            assert!(!vt.extrema.is_empty());
            assert!(interlacing(&vt), "theta {theta} k {}", b.k);
        }
    }
}

#[test]
fn sweep_shows_single_transition_under_certificate() {
    let m = cubic(2.0);
    let sw = uniqueness_sweep(&m, 1, m.nl.b, 20.0, 0.05, 1e-10, &opts(1e-10)).unwrap();
    let codes: Vec<&str> = sw.samples.iter().map(|s| s.membership_code.as_str()).collect();
    let first_n = codes.iter().position(|c| *c == "N1").unwrap();
    assert!(codes[..first_n].iter().all(|c| *c == "P1" || *c == "G1"));
    assert!(codes[first_n..].iter().all(|c| *c == "N1"));
    assert_eq!(sw.transitions.len(), 1);
}

#[test]
fn bracket_stable_under_halved_tolerance() {
    let m = cubic(2.0);
    let tol = 1e-10;
    let a = find_kth_bound_state(&m, 1, 4.0, 5.0, tol, &opts(1e-10)).unwrap();
    let b = find_kth_bound_state(&m, 1, 4.0, 5.0, tol, &opts(5e-11)).unwrap();
    assert!((a.alpha_star - b.alpha_star).abs() < 10.0 * tol, "{} vs {}", a.alpha_star, b.alpha_star);
}

#[test]
fn extrema_beyond_beta_near_higher_bound_states() {
    let m = cubic(1.4);
    let o = opts(1e-11);
    let beta = m.nl.beta;
    for (k, lo, hi) in [(2, 4.0, 7.0), (3, 6.5, 9.0)] {
        let b = find_kth_bound_state(&m, k, lo, hi, 1e-10, &o).unwrap();
        for d in [-1e-4, -1e-6, 1e-6, 1e-4] {
            let t = integrate(&m, b.alpha_star + d, &o).unwrap();
            let mk = extract_markers(&m, &t, k);
            // The extrema T_1 … T_{k−1} between the first k zeros.
            for (j, &(_, u)) in mk.extrema.iter().take(k - 1).enumerate() {
                assert!(u.abs() > beta, "k {k}, d {d}, T_{}: u = {u}", j + 1);
                assert_eq!(u < 0.0, j % 2 == 0);
            }
        }
    }
}

/// Near a higher bound state the first descent passes below −β; along it, for
/// `α₁ < α₂`, `Ŵ₁ < Ŵ₂` from `min(U_I, β)` down to −β.
#[test]
fn what_ordering_near_higher_bound_states() {
    let m = cubic(1.4);
    let o = opts(1e-12);
    let beta = m.nl.beta;
    for (k, lo, hi) in [(2, 4.0, 7.0), (3, 6.5, 9.0)] {
        let b = find_kth_bound_state(&m, k, lo, hi, 1e-10, &o).unwrap();
        for (d1, d2) in [(-6e-4, -2e-4), (2e-4, 6e-4), (-3e-4, 4e-4), (1e-4, 9e-4)] {
            let (a1, a2) = (b.alpha_star + d1, b.alpha_star + d2);
            let (t1, t2) = (integrate(&m, a1, &o).unwrap(), integrate(&m, a2, &o).unwrap());
            let hits = intersection_scan(&t1, &t2, 1e-6, 30.0, 6000).unwrap();
            let top = hits.first().map_or(beta, |h| h.1.min(beta));
            let i1 = branch_inverse(&t1, 1, BranchDirection::Down).unwrap();
            let i2 = branch_inverse(&t2, 1, BranchDirection::Down).unwrap();
            assert!(i1.s_lo < -beta && i2.s_lo < -beta);
            assert!(top > -beta);
            let gap = what_gap(&m, &i1, &i2, -beta, top, 100).unwrap();
            for (s, g) in gap {
                assert!(g > 0.0, "k {k}, pair ({a1}, {a2}) at s = {s}: {g}");
            }
        }
    }
}

#[test]
fn membership_codes_cover_levels() {
    let m = cubic(1.4);
    let c = classify(&m, 20.0, 3, &opts(1e-10)).unwrap();
    assert_eq!(c.terminal_k(), 3);
    assert!(c.levels.iter().take(2).all(|l| l.membership == Membership::N));
}
