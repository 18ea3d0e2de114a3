use proptest::prelude::*;

use symplectic::catalog::MethodCatalog;
use symplectic::coefficients::{
    complete_symmetric, default_tolerance, free_counts, validate, DecompositionMode, SchemeTag,
    SplittingCoefficients,
};
use symplectic::engine::{step, step_reverse, Integrator, PhaseState, StepPlan};
use symplectic::optimizer::{campaign, SearchSpec};
use symplectic::precision::BigScalar;
use symplectic::sho::{
    decompose, decompose_recurrence, kappa_spectrum, verify_order, DecompositionSetting,
};
use symplectic::systems::{system_by_name, Sho};

const P: usize = 256;

fn tiny() -> BigScalar {
    BigScalar::parse("1e-70", P).unwrap()
}

/// A random symmetric set: scheme, stage count and free parameters in (−1, 1).
fn any_set() -> impl Strategy<Value = SplittingCoefficients> {
    (any::<bool>(), 1usize..=9)
        .prop_flat_map(|(aba, stages)| {
            let scheme = if aba { SchemeTag::Aba } else { SchemeTag::Bab };
            let (nd, nc) = free_counts(scheme, stages);
            (
                Just(scheme),
                Just(stages),
                prop::collection::vec(-1.0f64..1.0, nd),
                prop::collection::vec(-1.0f64..1.0, nc),
            )
        })
        .prop_map(|(scheme, stages, d, c)| {
            let b = |v: Vec<f64>| v.into_iter().map(|x| BigScalar::from_f64(x, P)).collect::<Vec<_>>();
            complete_symmetric(&b(d), &b(c), scheme, stages, P).unwrap()
        })
}

fn native_mode(set: &SplittingCoefficients) -> DecompositionMode {
    match set.scheme {
        SchemeTag::Aba => DecompositionMode::AbaNative,
        SchemeTag::Bab => DecompositionMode::BabNative,
    }
}

fn catalog_plans() -> Vec<StepPlan> {
    MethodCatalog::standard(128).iter().map(StepPlan::new).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn completed_sets_validate(set in any_set()) {
        let rep = validate(&set, &default_tolerance(P));
        prop_assert!(rep.passed(), "{}", rep);
        let low = set.with_precision(128);
        prop_assert!(validate(&low, &default_tolerance(128)).passed());
    }

    #[test]
    fn sum_constraints_give_first_order(set in any_set()) {
        let mode = native_mode(&set);
        let k = kappa_spectrum(&set, &DecompositionSetting::new(mode, 2 * set.stages + 2), 1);
        prop_assert!(k.kappa[1] < tiny());
    }

    #[test]
    fn second_coefficient_has_its_closed_form(set in any_set()) {
        // from q = 1, p = −1 the τ² term is −Σ_i a_i Σ_{kicks b_j before drift i} b_j
        let (outer, inner) = (set.outer(), set.inner());
        for mode in [DecompositionMode::AbaNative, DecompositionMode::BabNative] {
            let z = decompose(&set, &DecompositionSetting::new(mode, 4)).zeta;
            let mut want = BigScalar::zero(P);
            let mut kicks = BigScalar::zero(P);
            for i in 0..outer.len() {
                match mode {
                    DecompositionMode::AbaNative => {
                        want = &want - &(&outer[i] * &kicks);
                        if let Some(b) = inner.get(i) {
                            kicks = &kicks + b;
                        }
                    }
                    _ => {
                        kicks = &kicks + &outer[i];
                        if let Some(a) = inner.get(i) {
                            want = &want - &(a * &kicks);
                        }
                    }
                }
            }
            prop_assert!((&z[2] - &want).abs() < tiny(), "{:?}", mode);
            prop_assert!((&z[2] + &BigScalar::from_ratio(1, 2, P)).abs() < tiny());
        }
    }

    #[test]
    fn series_matches_the_binary64_step(set in any_set(), den in prop::sample::select(vec![8i64, 16, 32])) {
        let sho = Sho::unit();
        let z = decompose(&set, &DecompositionSetting::new(native_mode(&set), 2 * set.stages + 2));
        let tau = BigScalar::from_ratio(1, den, P);
        let s = step(&sho, &PhaseState::new(vec![1.0], vec![-1.0]), tau.to_f64(), &StepPlan::new(&set)).unwrap();
        prop_assert!((z.position_at(&tau).to_f64() - s.q_value()[0]).abs() < 1e-12);
        prop_assert!((z.momentum_at(&tau).to_f64() - s.p_value()[0]).abs() < 1e-12);
    }

    #[test]
    fn recurrence_agrees_with_series(set in any_set()) {
        for mode in [DecompositionMode::AbaNative, DecompositionMode::BabNative, DecompositionMode::BabPrime] {
            let setting = DecompositionSetting::new(mode, 2 * set.stages + 2);
            if let Ok(t) = decompose_recurrence(&set, &setting) {
                let z = decompose(&set, &setting).zeta;
                for (a, b) in t.final_row().coeffs().iter().zip(&z) {
                    prop_assert!((a - b).abs() < tiny());
                }
            }
        }
    }

    #[test]
    fn mirrored_order_gives_the_same_spectrum(set in any_set()) {
        let k = set.k();
        let mut m = set.clone();
        m.c = set.c.iter().rev().cloned().collect();
        m.d = set.d.iter().rev().cloned().collect();
        // keep the structural zero last
        match set.scheme {
            SchemeTag::Aba => m.d = set.d[..k - 1].iter().rev().chain(&set.d[k - 1..]).cloned().collect(),
            SchemeTag::Bab => m.c = set.c[..k - 1].iter().rev().chain(&set.c[k - 1..]).cloned().collect(),
        }
        let s = DecompositionSetting::new(native_mode(&set), 2 * set.stages + 2);
        let a = kappa_spectrum(&set, &s, set.stages + 1).max_over(1, set.stages + 1);
        let b = kappa_spectrum(&m, &s, set.stages + 1).max_over(1, set.stages + 1);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_then_reverse_is_identity(
        method in 0usize..17,
        sys in prop::sample::select(vec!["sho", "henon-heiles", "henon-heiles-y", "sun-mercury"]),
        jitter in prop::collection::vec(-0.05f64..0.05, 4),
        frac in 0.02f64..0.1,
    ) {
        let plan = catalog_plans().swap_remove(method);
        let sys = system_by_name(sys).unwrap();
        let (mut q, mut p) = sys.initial_state();
        let n = q.len();
        let (sq, sp) = (q.iter().fold(0.0f64, |m, x| m.max(x.abs())), p.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        let (sq, sp) = (if sq > 0.0 { sq } else { sp }, if sp > 0.0 { sp } else { sq });
        for i in 0..n {
            q[i] += jitter[i] * sq;
            p[i] += jitter[n + i] * sp;
        }
        let tau = if sys.label() == "sun-mercury" { 1.5e4 * frac / 0.1 } else { frac } * plan.stages as f64;
        let s0 = PhaseState::new(q, p);
        let back = step_reverse(sys.as_ref(), &step(sys.as_ref(), &s0, tau, &plan).unwrap(), tau, &plan).unwrap();
        for i in 0..n {
            prop_assert!((back.q_value()[i] - s0.q[i]).abs() <= 1e-12 * sq.max(s0.q[i].abs()));
            prop_assert!((back.p_value()[i] - s0.p[i]).abs() <= 1e-12 * sp.max(s0.p[i].abs()));
        }
    }

    #[test]
    fn fsal_changes_cost_not_trajectory(method in 0usize..17, steps in 1usize..40) {
        let plan = catalog_plans().swap_remove(method);
        let sys = system_by_name("henon-heiles").unwrap();
        let fused = plan.clone().with_fsal(true);
        let plain = plan.clone().with_fsal(false);
        let (mut a, mut b) = (PhaseState::from_system(sys.as_ref()), PhaseState::from_system(sys.as_ref()));
        let mut ia = Integrator::new(sys.as_ref(), &fused);
        let mut ib = Integrator::new(sys.as_ref(), &plain);
        for _ in 0..steps {
            ia.step(&mut a, 0.05 * plan.stages as f64).unwrap();
            ib.step(&mut b, 0.05 * plan.stages as f64).unwrap();
            for i in 0..2 {
                prop_assert!((a.q_value()[i] - b.q_value()[i]).abs() < 1e-15);
                prop_assert!((a.p_value()[i] - b.p_value()[i]).abs() < 1e-15);
            }
        }
        let c = ia.counts();
        let fused_evals = c.dt_dp + c.dv_dq;
        if plan.stages > 1 {
            prop_assert_eq!(fused_evals, (steps * 2 * plan.stages + 1) as u64);
        }
    }
}

#[test]
fn campaigns_are_reproducible_and_valid() {
    let spec = SearchSpec::new(SchemeTag::Aba, 3, 4).with_seed(7);
    let a = campaign(&spec, 24);
    let b = campaign(&spec, 24);
    assert_eq!(a, b);
    assert!(!a.is_empty());
    for r in &a {
        assert!(validate(&r.coeffs, &default_tolerance(P)).passed());
        let (order, _) = verify_order(&r.coeffs, &DecompositionSetting::native(&r.coeffs));
        assert!(order as usize >= spec.lambda_h, "order {order}");
    }
}
