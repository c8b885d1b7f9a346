use proptest::prelude::*;
use qam_core::memory::{
    apply_memory_operator_to_zero, dual_memory_overlap, dual_state, dual_state_circuit, memory_operator_gate_count,
    memory_state_analytic, memory_with_utility, store_sequential, MemoryModel, MemoryOperator, Pattern,
};
use qam_core::qsim::{distance_up_to_phase, inner_product_raw, RegisterLayout, StateVector, C64};

fn arb_model(max_n: usize, max_p: usize) -> impl Strategy<Value = MemoryModel> {
    (1..=max_n).prop_flat_map(move |n| {
        let cap = (1usize << n).min(max_p);
        prop::sample::subsequence((0..1usize << n).collect::<Vec<_>>(), 1..=cap)
            .prop_shuffle()
            .prop_map(move |vals| MemoryModel::new(vals.into_iter().map(|v| Pattern::from_index(v, n)).collect()).unwrap())
    })
}

fn arb_state(q: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << q).prop_map(|raw| {
        let mut v: Vec<C64> = raw.into_iter().map(|(r, i)| C64::new(r, i)).collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt().max(1e-3);
        v.iter_mut().for_each(|a| *a /= norm);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn three_storage_routes_agree(model in arb_model(6, 64)) {
        let analytic = memory_with_utility(&model).unwrap();
        let seq = store_sequential(&model).unwrap();
        let op = apply_memory_operator_to_zero(&model).unwrap();
        prop_assert!(distance_up_to_phase(analytic.amplitudes(), seq.state.amplitudes()) < 1e-10);
        prop_assert!(distance_up_to_phase(analytic.amplitudes(), op.state.amplitudes()) < 1e-10);
    }

    #[test]
    fn memory_support_is_the_stored_set(model in arb_model(8, 40)) {
        let m = memory_state_analytic(&model).unwrap();
        let p = model.p() as f64;
        let mut support = 0;
        for (idx, a) in m.amplitudes().iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                support += 1;
                prop_assert!(model.contains(&Pattern::from_index(idx, model.n())));
                prop_assert!((a.norm_sqr() - 1.0 / p).abs() < 1e-12);
            }
        }
        prop_assert_eq!(support, model.p());
    }

    #[test]
    fn memory_operator_is_unitary(
        (model, amps) in arb_model(4, 10).prop_flat_map(|m| { let q = m.n() + 2; (Just(m), arb_state(q)) })
    ) {
        let layout = RegisterLayout::new([("m", model.n()), ("u", 2)]).unwrap();
        let start = StateVector::from_amplitudes(layout, amps).unwrap();
        let op = MemoryOperator::standard(&model);
        let mut s = start.clone();
        op.apply(&mut s).unwrap();
        op.apply_inverse(&mut s).unwrap();
        for (x, y) in s.amplitudes().iter().zip(start.amplitudes()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
        // M^-1 first, then M
        let mut s = start.clone();
        op.apply_inverse(&mut s).unwrap();
        op.apply(&mut s).unwrap();
        for (x, y) in s.amplitudes().iter().zip(start.amplitudes()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn dual_overlap_matches_parity(model in arb_model(6, 64)) {
        let p = model.p();
        let want = if p % 2 == 0 { 0.0 } else { 1.0 / p as f64 };
        prop_assert_eq!(dual_memory_overlap(&model), want);
        let d = dual_state(&model).unwrap();
        let m = memory_state_analytic(&model).unwrap();
        let ov = inner_product_raw(d.amplitudes(), m.amplitudes()).unwrap();
        prop_assert!((ov - C64::new(want, 0.0)).norm() < 1e-14);
        // circuit-written dual state agrees with the closed form
        let dc = dual_state_circuit(&model).unwrap();
        let u = StateVector::zero_state(RegisterLayout::new([("u", 2)]).unwrap()).unwrap();
        let expected = d.tensor(&u).unwrap();
        prop_assert!(distance_up_to_phase(expected.amplitudes(), dc.state.amplitudes()) < 1e-10);
    }
}

#[test]
fn operator_gate_count_formula_exhaustive() {
    for n in 1..=8usize {
        for p in 1..=16usize.min(1 << n) {
            let model = MemoryModel::new((0..p).map(|v| Pattern::from_index(v, n)).collect()).unwrap();
            let run = apply_memory_operator_to_zero(&model).unwrap();
            let want = (p * (2 * n + 3) + 1) as u64;
            assert_eq!(run.record.total(), want, "n={n} p={p}");
            assert_eq!(memory_operator_gate_count(n, p), want);
        }
    }
}

#[test]
fn three_four_bit_patterns() {
    let model = MemoryModel::parse("0000\n0011\n1111\n").unwrap();
    let op = apply_memory_operator_to_zero(&model).unwrap();
    assert_eq!(op.record.total(), 34);
    let nonzero: Vec<f64> = op.state.amplitudes().iter().map(|a| a.norm_sqr()).filter(|&w| w > 1e-20).collect();
    assert_eq!(nonzero.len(), 3);
    assert!(nonzero.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12));
}
