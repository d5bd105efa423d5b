//! Randomized property tests for the closed-form trajectory composition and
//! the perturbative engine.

use ccr_core::flowers::{
    compose_schedule, make_flower_schedule, make_flower_schedule_allow_p2, trace_flower,
    FlipSemantics, ScheduleStyle,
};
use ccr_core::hilbert::hermitian_eigen_sorted;
use ccr_core::perturbation::{order_fit, random_problem, schrieffer_wolff};
use ccr_core::phasespace::{BranchHamiltonian, BranchLabel};
use ccr_core::C64;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;

fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

fn bh(eps: f64, x: f64, m: f64) -> BranchHamiltonian {
    BranchHamiltonian { eps_eff: eps * (1.0 + x), eps_bare: eps, m_coeff: m, mode_id: 0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Z-flip flowers close for every even P >= 4 and any |x| <= 0.3.
    #[test]
    fn zflip_always_closes(
        p in prop::sample::select(vec![4u32, 6, 8]),
        x in -0.3f64..0.3,
        m in 0.05f64..0.6,
        eps in 0.4f64..2.0,
    ) {
        let sched = make_flower_schedule(p, eps, ScheduleStyle::Original, 0).unwrap();
        let (s, _) = compose_schedule(&bh(eps, x, m), &sched, FlipSemantics::ZFlip).unwrap();
        prop_assert!(s.norm() < 1e-10, "P={p} x={x}: residual {}", s.norm());
    }

    /// Rabi-sign-flip end displacement follows the geometric-series closed
    /// form; it vanishes exactly when (P+2) x is an even integer.
    #[test]
    fn omega_flip_residual_formula(
        p in prop::sample::select(vec![4u32, 6, 8]),
        x in -0.3f64..0.3,
        m in 0.05f64..0.6,
        eps in 0.4f64..2.0,
    ) {
        let u = (1.0 + x) * (PI + 2.0 * PI / p as f64);
        let e_iu = C64::from_polar(1.0, u);
        // the closed form has a removable structure change at e^{iu} = -1
        prop_assume!((C64::new(1.0, 0.0) + e_iu).norm() > 0.05);
        let predicted = (m / (eps * (1.0 + x))
            * ((C64::new(1.0, 0.0) - e_iu)
                * (C64::new(1.0, 0.0) - C64::from_polar(1.0, p as f64 * u))
                / (C64::new(1.0, 0.0) + e_iu))
            .norm())
        .abs();
        let sched = make_flower_schedule(p, eps, ScheduleStyle::Original, 0).unwrap();
        let (s, _) =
            compose_schedule(&bh(eps, x, m), &sched, FlipSemantics::OmegaSignFlip).unwrap();
        prop_assert!(
            (s.norm() - predicted).abs() < 1e-9 * (1.0 + predicted),
            "P={p} x={x}: got {} predicted {predicted}",
            s.norm()
        );
        // even-integer (P+2) x closes; e.g. P=8, x=0.2
        let frac = ((p + 2) as f64 * x / 2.0).fract().abs();
        if frac < 1e-12 {
            prop_assert!(s.norm() < 1e-9);
        }
    }

    /// Two pulses cannot close an x != 0 trajectory; the residual is at
    /// least |M/eps| |x|.
    #[test]
    fn p2_never_closes(
        x in prop::sample::select(vec![0.02f64, -0.05, 0.1, -0.15, 0.2, 0.3]),
        m in 0.05f64..0.6,
        eps in 0.4f64..2.0,
    ) {
        let sched = make_flower_schedule_allow_p2(2, eps, ScheduleStyle::Original, 0).unwrap();
        let (s, _) = compose_schedule(&bh(eps, x, m), &sched, FlipSemantics::ZFlip).unwrap();
        prop_assert!(
            s.norm() > (m / eps).abs() * x.abs(),
            "x={x}: residual {} below |M/eps||x|",
            s.norm()
        );
    }

    /// The accumulated phase equals twice the signed enclosed area.
    #[test]
    fn phase_is_twice_area(
        p in prop::sample::select(vec![4u32, 6, 8]),
        x in -0.3f64..0.3,
        m in 0.05f64..0.6,
    ) {
        let eps = 1.0;
        let sched = make_flower_schedule(p, eps, ScheduleStyle::Original, 0).unwrap();
        let branches = vec![(BranchLabel(vec![1]), vec![bh(eps, x, m)])];
        let trace = trace_flower(&branches, &sched, FlipSemantics::ZFlip).unwrap();
        let area: f64 = trace.trajectories.iter().map(|t| t.area).sum();
        let phase = trace.phases[0].1;
        prop_assert!(
            (phase - 2.0 * area).abs() < 1e-6 * phase.abs().max(1.0),
            "P={p} x={x}: phase {phase} vs 2*area {}",
            2.0 * area
        );
    }

    /// The flower phase is even in x: the two petal families swap roles.
    #[test]
    fn phase_even_in_x(
        p in prop::sample::select(vec![4u32, 6, 8]),
        x in 0.0f64..0.3,
        m in 0.05f64..0.6,
    ) {
        let eps = 1.0;
        let sched = make_flower_schedule(p, eps, ScheduleStyle::Original, 0).unwrap();
        let (_, ph_pos) =
            compose_schedule(&bh(eps, x, m), &sched, FlipSemantics::ZFlip).unwrap();
        let (_, ph_neg) =
            compose_schedule(&bh(eps, -x, m), &sched, FlipSemantics::ZFlip).unwrap();
        prop_assert!(
            (ph_pos - ph_neg).abs() < 1e-9 * ph_pos.abs().max(1.0),
            "x={x}: {ph_pos} vs {ph_neg}"
        );
    }

    /// Shifting the first pulse rigidly rotates/translates the trajectory:
    /// B(t) = a A((t + tau - tau~) mod P tau) + c with |a| = 1.
    #[test]
    fn cpmg_shift_is_rigid_motion(
        x in -0.3f64..0.3,
        m in 0.05f64..0.6,
        shift_num in 1u32..4,
    ) {
        let (p, eps) = (4u32, 1.0);
        let tau = PI / eps + 2.0 * PI / (p as f64 * eps);
        let tilde = tau * shift_num as f64 / 4.0;
        let orig = make_flower_schedule(p, eps, ScheduleStyle::Original, 0).unwrap();
        let shifted =
            make_flower_schedule(p, eps, ScheduleStyle::CpmgShifted(tilde), 0).unwrap();
        let b = bh(eps, x, m);
        let branches = vec![(BranchLabel(vec![1]), vec![b])];
        let ta = trace_flower(&branches, &orig, FlipSemantics::ZFlip).unwrap();
        let tb = trace_flower(&branches, &shifted, FlipSemantics::ZFlip).unwrap();
        let sa = &ta.trajectories[0].samples;
        let sb = &tb.trajectories[0].samples;
        prop_assert!(sa.len() == sb.len());
        let n = sa.len() - 1; // last sample repeats t = 0 of the next period
        let total = orig.total_time;
        // aligned index offset: t -> t + tau - tau~ (mod total)
        let offset = ((tau - tilde) / total * n as f64).round() as usize;
        let a_at = |j: usize| sa[(j + offset) % n].1;
        // estimate the rigid motion from two well-separated samples
        let (j0, j1) = (0usize, n / 3);
        let denom = a_at(j1) - a_at(j0);
        prop_assume!(denom.norm() > 1e-6);
        let a = (sb[j1].1 - sb[j0].1) / denom;
        let c = sb[j0].1 - a * a_at(j0);
        prop_assert!((a.norm() - 1.0).abs() < 1e-9, "|a| = {}", a.norm());
        for j in (0..n).step_by(97) {
            let pred = a * a_at(j) + c;
            prop_assert!(
                (sb[j].1 - pred).norm() < 1e-9 * (1.0 + m / eps),
                "sample {j}: {} vs {}",
                sb[j].1,
                pred
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The effective Hamiltonian stays symmetric and its eigenvalue error
    /// shrinks at least one order faster than the requested order.
    #[test]
    fn sw_hermitian_and_order_scaling(
        seed in 0u64..64,
        order in prop::sample::select(vec![2usize, 4, 6]),
    ) {
        let p = random_problem(seed);
        let r = schrieffer_wolff(&p.rescaled(0.04), order).unwrap();
        let sym_dev = (&r.effective - r.effective.transpose()).amax();
        prop_assert!(sym_dev < 1e-10, "asymmetry {sym_dev}");
        prop_assert!(r.per_order.len() > order);
        let l = p.low_dim();
        let scales = [1.0, 0.5, 0.25];
        let mut residuals = Vec::new();
        for &sc in &scales {
            let pt = p.rescaled(0.04 * sc);
            let rt = schrieffer_wolff(&pt, order).unwrap();
            let (vals, _) = hermitian_eigen_sorted(&complexify(&rt.effective));
            let mut approx: Vec<f64> = vals.iter().cloned().collect();
            approx.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // exact low-lying levels: full-problem eigenpairs with the
            // largest weight on the low subspace
            let (fvals, fvecs) = hermitian_eigen_sorted(&complexify(&pt.full_matrix(1.0)));
            let mut weighted: Vec<(f64, f64)> = (0..fvals.len())
                .map(|j| {
                    let w: f64 = (0..l).map(|i| fvecs[(i, j)].norm_sqr()).sum();
                    (w, fvals[j])
                })
                .collect();
            weighted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let mut exact: Vec<f64> = weighted.iter().take(l).map(|&(_, v)| v).collect();
            exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let res = approx
                .iter()
                .zip(exact.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            residuals.push(res);
        }
        let slope = order_fit(&scales, &residuals);
        prop_assert!(
            slope >= order as f64 + 1.0 - 0.3,
            "seed {seed} order {order}: slope {slope} residuals {residuals:?}"
        );
    }
}
