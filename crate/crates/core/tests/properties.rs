use proptest::prelude::*;
use sdar_core::chain::{assemble_tpm, QVector};
use sdar_core::saturation::{attempt_prob, AttemptProfile};
use sdar_core::solver::ModelInputs;
use sdar_core::{analyze, AttemptModel, Buffer, MacParams, Scenario};

fn model() -> impl Strategy<Value = AttemptModel> {
    prop_oneof![Just(AttemptModel::FiniteRetry), Just(AttemptModel::Bianchi)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reduced_rows_are_stochastic(m in 1usize..8, k in 1usize..8, lambda in 0.1f64..1500.0, q in 0.01f64..=1.0) {
        let p = AttemptProfile::compute(m, &MacParams::ieee80211b(), AttemptModel::FiniteRetry).unwrap();
        let slots = Scenario::homogeneous(m, lambda, Buffer::Finite(k)).slot_durations();
        let inputs = ModelInputs::build(m, k, lambda, &p, &slots);
        let tpm = assemble_tpm(&inputs.blocks, &QVector::uniform(m, q), k).unwrap();
        prop_assert!(tpm.max_row_deviation() < 1e-12);
        prop_assert!(tpm.matrix().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn attempt_probability_decreases_with_collisions(g1 in 0.0f64..0.99, g2 in 0.0f64..0.99, model in model()) {
        let mac = MacParams::ieee80211b();
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let (b_lo, b_hi) = (attempt_prob(lo, &mac, model), attempt_prob(hi, &mac, model));
        prop_assert!(b_hi <= b_lo + 1e-15);
        prop_assert!(b_hi > 0.0 && b_lo <= 1.0);
    }

    #[test]
    fn solved_model_is_consistent(m in 1usize..7, k in 1usize..6, lambda in 1.0f64..900.0) {
        let s = Scenario::homogeneous(m, lambda, Buffer::Finite(k));
        let a = analyze(&s, AttemptModel::FiniteRetry).unwrap();
        prop_assert!(a.solution.q.as_slice().iter().all(|&q| q > 0.0 && q <= 1.0));
        let r = &a.report;
        prop_assert!((r.p_n.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((r.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(r.theta_node <= lambda * (1.0 + 1e-9));
        prop_assert!((0.0..=1.0).contains(&r.block_prob));
        prop_assert!((0.0..1.0).contains(&r.gamma));
        // Little's law on accepted traffic
        prop_assert!((r.w_bar * r.theta_node - r.q_bar).abs() <= 1e-9 * r.q_bar.max(1.0));
        // accepted traffic equals carried traffic
        prop_assert!((lambda * (1.0 - r.block_prob) - r.theta_node).abs() <= 1e-6 * lambda);
    }
}

#[test]
fn throughput_grows_then_levels_off() {
    let thetas: Vec<f64> = [10.0, 40.0, 60.0, 100.0, 200.0]
        .iter()
        .map(|&l| {
            let s = Scenario::homogeneous(10, l, Buffer::Finite(5));
            analyze(&s, AttemptModel::FiniteRetry).unwrap().report.theta_node
        })
        .collect();
    assert!(thetas.windows(2).all(|w| w[1] > w[0] * 0.98));
    assert!(thetas[4] < 70.0);
}
