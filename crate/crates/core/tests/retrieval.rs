use std::f64::consts::PI;

use proptest::prelude::*;
use qam_core::memory::{MemoryModel, Pattern};
use qam_core::recall::{
    amplification_trajectory, amplified_success_probability, limiting_output, recall, retrieval_distribution,
    CircuitMode, KnownMask, PreparedRecall, RetrievalOutcome, RetrievalParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_instance(max_n: usize, max_p: usize) -> impl Strategy<Value = (MemoryModel, Pattern)> {
    (1..=max_n).prop_flat_map(move |n| {
        let cap = (1usize << n).min(max_p);
        (
            prop::sample::subsequence((0..1usize << n).collect::<Vec<_>>(), 1..=cap).prop_shuffle(),
            0..1usize << n,
        )
            .prop_map(move |(vals, input)| {
                let model = MemoryModel::new(vals.into_iter().map(|v| Pattern::from_index(v, n)).collect()).unwrap();
                (model, Pattern::from_index(input, n))
            })
    })
}

/// Oracle weight `cos^{2b}(pi d / 2n)` from a bit-by-bit distance over `known`.
fn oracle_weights(model: &MemoryModel, input: &Pattern, b: f64, known: &[usize]) -> Vec<f64> {
    let n = model.n();
    let iv = input.to_index();
    model
        .patterns()
        .iter()
        .map(|p| {
            let pv = p.to_index();
            let d = known.iter().filter(|&&j| (pv >> (n - 1 - j)) & 1 != (iv >> (n - 1 - j)) & 1).count();
            (PI * d as f64 / (2.0 * n as f64)).cos().powf(2.0 * b)
        })
        .collect()
}

fn nearest_unique(model: &MemoryModel, input: &Pattern) -> Option<usize> {
    let d: Vec<u32> = model.patterns().iter().map(|p| (p.to_index() ^ input.to_index()).count_ones()).collect();
    let min = *d.iter().min()?;
    let hits: Vec<usize> = (0..d.len()).filter(|&k| d[k] == min).collect();
    (hits.len() == 1).then(|| hits[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn post_selected_state_matches_oracle(
        (model, input) in arb_instance(4, 8),
        b in 1usize..=4,
        aux in any::<bool>(),
    ) {
        let n = model.n();
        let all: Vec<usize> = (0..n).collect();
        let w = oracle_weights(&model, &input, b as f64, &all);
        let z: f64 = w.iter().sum();
        prop_assume!(z > 1e-12);
        let mut params = RetrievalParams::measured(input.clone(), b, 1);
        if aux {
            params.circuit = CircuitMode::AuxRegister;
        }
        let prepared = PreparedRecall::new(&model, &params).unwrap();
        prop_assert!((prepared.zero_control_probability() - z / model.p() as f64).abs() < 1e-10);
        let cond = prepared.conditional_distribution();
        prop_assert_eq!(cond.len(), 1 << n);
        let total: f64 = cond.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        for (v, &pv) in cond.iter().enumerate() {
            match model.patterns().iter().position(|p| p.to_index() == v) {
                Some(k) => prop_assert!((pv - w[k] / z).abs() < 1e-10, "pattern {v}: {pv} vs {}", w[k] / z),
                // no spurious memories
                None => prop_assert!(pv < 1e-20, "non-stored {v} has {pv}"),
            }
        }
        let dist = retrieval_distribution(&model, &input, b as f64, None).unwrap();
        for (k, &pk) in dist.probabilities.iter().enumerate() {
            prop_assert!((pk - w[k] / z).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_distribution_uses_known_bits_only(
        (model, input) in arb_instance(5, 10),
        b in 1usize..=3,
        mask_bits in 1u32..32,
    ) {
        let n = model.n();
        let known: Vec<usize> = (0..n).filter(|&j| mask_bits >> j & 1 == 1).collect();
        prop_assume!(!known.is_empty());
        let mask = KnownMask::new(known.clone(), n).unwrap();
        let w = oracle_weights(&model, &input, b as f64, &known);
        let z: f64 = w.iter().sum();
        prop_assume!(z > 1e-12);
        let params = RetrievalParams::measured(input.clone(), b, 1).with_mask(mask.clone());
        let prepared = PreparedRecall::new(&model, &params).unwrap();
        prop_assert!((prepared.zero_control_probability() - z / model.p() as f64).abs() < 1e-10);
        let dist = retrieval_distribution(&model, &input, b as f64, Some(&mask)).unwrap();
        for (k, p) in model.patterns().iter().enumerate() {
            prop_assert!((prepared.conditional_distribution()[p.to_index()] - w[k] / z).abs() < 1e-10);
            prop_assert!((dist.probabilities[k] - w[k] / z).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_sharpens_onto_nearest_pattern((model, input) in arb_instance(6, 20)) {
        let Some(best) = nearest_unique(&model, &input) else { return Ok(()) };
        let d_best = (model.patterns()[best].to_index() ^ input.to_index()).count_ones() as usize;
        prop_assume!(d_best < model.n());
        let mut prev = 0.0;
        for b in [1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0] {
            let dist = retrieval_distribution(&model, &input, b, None).unwrap();
            let pk = dist.probabilities[best];
            prop_assert!(pk >= prev - 1e-12, "b={b}: {pk} < {prev}");
            let argmax = (0..dist.probabilities.len())
                .max_by(|&a, &c| dist.probabilities[a].total_cmp(&dist.probabilities[c]))
                .unwrap();
            prop_assert_eq!(argmax, best);
            prev = pk;
        }
        prop_assert_eq!(&limiting_output(&model, &input, None).unwrap(), &model.patterns()[best]);
    }

    #[test]
    fn amplification_follows_rotation_law((model, input) in arb_instance(3, 4), b in 1usize..=2) {
        let all: Vec<usize> = (0..model.n()).collect();
        let p_rec = oracle_weights(&model, &input, b as f64, &all).iter().sum::<f64>() / model.p() as f64;
        prop_assume!(p_rec > 1e-9);
        let traj = amplification_trajectory(&model, &input, b, None, 4).unwrap();
        for (k, &pk) in traj.iter().enumerate() {
            let theta = p_rec.sqrt().asin();
            let want = ((2 * k + 1) as f64 * theta).sin().powi(2);
            prop_assert!((pk - want).abs() < 1e-9, "k={k}: {pk} vs {want}");
            prop_assert!((amplified_success_probability(p_rec, k) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn outcome_json_round_trips((model, input) in arb_instance(4, 6), seed in any::<u64>(), t in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match recall(&model, &RetrievalParams::measured(input, 2, t), &mut rng) {
            Ok(out) => {
                let back: RetrievalOutcome = serde_json::from_str(&out.to_json()).unwrap();
                prop_assert_eq!(back, out);
            }
            // every stored pattern at distance n: nothing to recognise
            Err(e) => prop_assert!(e.to_string().contains("degenerate") || e.to_string().contains("zero"), "{e}"),
        }
    }
}

#[test]
fn full_pattern_set_recognition_probability() {
    // complete set: P_rec = 2^-n sum_d C(n,d) cos^{2b}(pi d / 2n), independent of input
    for n in 1..=5usize {
        let model = MemoryModel::new((0..1usize << n).map(|v| Pattern::from_index(v, n)).collect()).unwrap();
        for b in 1..=4usize {
            let mut binom = 1.0f64;
            let mut want = 0.0;
            for d in 0..=n {
                want += binom * (PI * d as f64 / (2.0 * n as f64)).cos().powi(2 * b as i32);
                binom = binom * (n - d) as f64 / (d + 1) as f64;
            }
            want /= (1usize << n) as f64;
            for input in 0..1usize << n {
                let params = RetrievalParams::measured(Pattern::from_index(input, n), b, 1);
                let got = PreparedRecall::new(&model, &params).unwrap().zero_control_probability();
                assert!((got - want).abs() < 1e-10, "n={n} b={b} input={input}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn exact_stored_input_is_returned() {
    let model = MemoryModel::parse("0000\n0111\n1011\n").unwrap();
    let input = "0111".parse::<Pattern>().unwrap();
    let dist = retrieval_distribution(&model, &input, 1e6, None).unwrap();
    assert!((dist.probabilities[1] - 1.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let out = recall(&model, &RetrievalParams::measured(input.clone(), 8, 50), &mut rng).unwrap();
    assert!(out.recognized);
    assert_eq!(out.output, Some(input));
}
