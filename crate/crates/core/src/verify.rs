//! Named invariant checks across all modules, run from a single seed.
//!
//! The report lists one line per invariant and never includes timings, so the
//! same level and seed always produce byte-identical output.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::memory::{
    apply_memory_operator_to_zero, cloning_bound, dual_memory_overlap, memory_operator_gate_count,
    memory_with_utility, store_sequential, MemoryModel, MemoryOperator, Pattern,
};
use crate::qsim::{
    distance_up_to_phase, split_matrix, Control, Gate, GateKind, RegisterLayout, StateVector, C64,
};
use crate::recall::{
    amplification_trajectory, amplified_success_probability, build_final_state, complexity_estimate,
    hamming_distance, retrieval_distribution, round_gate_count, run_trials, CircuitMode, CostInputs,
    RetrievalMode, RetrievalParams,
};
use crate::thermo::{high_temp_limit, ising_energy, log_grid, potentials, AverageMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Deliberate defects used to confirm that the suite detects failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Adds 1e-6 to the top-left entry of `S^2`.
    PerturbS2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub level: Level,
    pub seed: u64,
    pub results: Vec<InvariantResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verify level={:?} seed={}", self.level, self.seed)?;
        for r in &self.results {
            writeln!(f, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
        }
        let failed = self.failures().count();
        write!(f, "{} invariants, {} failed", self.results.len(), failed)
    }
}

struct Sizes {
    models: usize,
    max_n: usize,
    retrieval_cases: usize,
    trials: u64,
    ising_max_n: usize,
    thermo_points: usize,
}

impl Level {
    fn sizes(self) -> Sizes {
        match self {
            Level::Quick => Sizes {
                models: 25,
                max_n: 4,
                retrieval_cases: 40,
                trials: 20_000,
                ising_max_n: 8,
                thermo_points: 37,
            },
            Level::Full => Sizes {
                models: 120,
                max_n: 6,
                retrieval_cases: 250,
                trials: 100_000,
                ising_max_n: 12,
                thermo_points: 181,
            },
        }
    }
}

/// Random model with `1 <= n <= max_n` and `1 <= p <= min(2^n, max_p)`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, max_n: usize, max_p: usize) -> MemoryModel {
    let n = rng.gen_range(1..=max_n);
    let p = rng.gen_range(1..=(1usize << n).min(max_p));
    let mut values: Vec<usize> = (0..1usize << n).collect();
    values.shuffle(rng);
    let patterns = values[..p].iter().map(|&v| Pattern::from_index(v, n)).collect();
    MemoryModel::new(patterns).expect("distinct values give a valid model")
}

fn random_state<R: Rng + ?Sized>(rng: &mut R, layout: RegisterLayout) -> StateVector {
    let dim = 1usize << layout.num_qubits();
    let mut amps: Vec<C64> = (0..dim).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    StateVector::from_amplitudes(layout, amps).expect("normalized by construction")
}

fn check(name: &'static str, body: impl FnOnce() -> Result<String, String>) -> InvariantResult {
    match body() {
        Ok(detail) => InvariantResult { name, passed: true, detail },
        Err(detail) => InvariantResult { name, passed: false, detail },
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn run_verification(level: Level, seed: u64, fault: Option<Fault>) -> VerifyReport {
    let sizes = level.sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();

    results.push(check("gate_unitarity", || {
        let mut checked = 0;
        for i in 1..=64 {
            let mut m = split_matrix(i).map_err(err)?;
            if i == 2 && fault == Some(Fault::PerturbS2) {
                m[0][0] += C64::new(1e-6, 0.0);
            }
            Gate::new(m, GateKind::Split).map_err(|e| format!("S^{i}: {e}"))?;
            checked += 1;
        }
        for g in [Gate::hadamard(), Gate::not(), Gate::phase_u(7), Gate::phase_u_inv2(7), Gate::pattern_bit(1), Gate::input_bit(0)] {
            Gate::new(*g.matrix(), g.kind()).map_err(err)?;
            checked += 1;
        }
        Ok(format!("{checked} gate matrices unitary within 1e-12"))
    }));

    results.push(check("norm_preservation", || {
        let layout = RegisterLayout::new([("q", 6)]).map_err(err)?;
        let mut worst: f64 = 0.0;
        for _ in 0..sizes.models {
            let mut s = random_state(&mut rng, layout.clone());
            for _ in 0..40 {
                let target = rng.gen_range(0..6);
                let gate = match rng.gen_range(0..5) {
                    0 => Gate::hadamard(),
                    1 => Gate::not(),
                    2 => Gate::split(rng.gen_range(1..10)).map_err(err)?,
                    3 => Gate::phase_u(rng.gen_range(1..8)),
                    _ => Gate::input_bit(0),
                };
                let mut controls: Vec<Control> = Vec::new();
                for q in 0..6 {
                    if q != target && rng.gen_bool(0.2) {
                        controls.push(Control { qubit: q, value: rng.gen_bool(0.5) });
                    }
                }
                s.apply_controlled(&gate, &controls, target).map_err(err)?;
            }
            worst = worst.max((s.norm_sqr() - 1.0).abs());
        }
        ensure(worst < 1e-10, || format!("norm drift {worst:.3e}"))?;
        Ok(format!("max norm drift {worst:.1e}"))
    }));

    results.push(check("storage_equivalence", || {
        for _ in 0..sizes.models {
            let model = random_model(&mut rng, sizes.max_n, usize::MAX);
            let analytic = memory_with_utility(&model).map_err(err)?;
            let seq = store_sequential(&model).map_err(err)?;
            let op = apply_memory_operator_to_zero(&model).map_err(err)?;
            let d1 = distance_up_to_phase(analytic.amplitudes(), seq.state.amplitudes());
            let d2 = distance_up_to_phase(analytic.amplitudes(), op.state.amplitudes());
            ensure(d1 < 1e-10 && d2 < 1e-10, || format!("n={} p={}: {d1:.2e}, {d2:.2e}", model.n(), model.p()))?;
            let expected = memory_operator_gate_count(model.n(), model.p());
            ensure(op.record.total() == expected, || format!("operator gates {} != {expected}", op.record.total()))?;
        }
        Ok(format!("{} models agree within 1e-10; operator gate count p(2n+3)+1", sizes.models))
    }));

    results.push(check("memory_operator_inverse", || {
        for _ in 0..sizes.models / 2 + 1 {
            let model = random_model(&mut rng, sizes.max_n.min(4), 8);
            let n = model.n();
            let layout = RegisterLayout::new([("m", n), ("u", 2)]).map_err(err)?;
            let start = random_state(&mut rng, layout);
            let mut s = start.clone();
            let op = MemoryOperator::standard(&model);
            op.apply(&mut s).map_err(err)?;
            op.apply_inverse(&mut s).map_err(err)?;
            let d = distance_up_to_phase(start.amplitudes(), s.amplitudes());
            ensure(d < 1e-10, || format!("M^-1 M deviates by {d:.2e}"))?;
        }
        Ok("M^-1 M = 1 on random states".into())
    }));

    results.push(check("retrieval_amplitudes", || {
        for _ in 0..sizes.retrieval_cases {
            let model = random_model(&mut rng, sizes.max_n.min(5), 6);
            let n = model.n();
            let b = rng.gen_range(1..=4);
            let input = Pattern::from_index(rng.gen_range(0..1usize << n), n);
            let fs = build_final_state(&model, &input, b, CircuitMode::Operator, None).map_err(err)?;
            let mut expected = vec![C64::new(0.0, 0.0); fs.state.dim()];
            for pk in model.patterns() {
                let phi = PI * hamming_distance(&input, pk, None).map_err(err)? as f64 / (2.0 * n as f64);
                for c in 0..1usize << b {
                    let l = c.count_ones() as i32;
                    expected[(pk.to_index() << b) | c] = C64::new(0.0, 1.0).powi(l)
                        * phi.cos().powi(b as i32 - l)
                        * phi.sin().powi(l)
                        / (model.p() as f64).sqrt();
                }
            }
            let worst = fs.state.amplitudes().iter().zip(&expected).map(|(a, e)| (a - e).norm()).fold(0.0, f64::max);
            ensure(worst < 1e-10, || format!("n={n} p={} b={b}: deviation {worst:.2e}", model.p()))?;
        }
        Ok(format!("{} cases match (1/sqrt p) cos^(b-l) (i sin)^l", sizes.retrieval_cases))
    }));

    results.push(check("distribution_normalization", || {
        for _ in 0..sizes.retrieval_cases {
            let model = random_model(&mut rng, 8, 40);
            let n = model.n();
            let input = Pattern::from_index(rng.gen_range(0..1usize << n), n);
            let b = rng.gen_range(0.1..20.0);
            match retrieval_distribution(&model, &input, b, None) {
                Ok(d) => {
                    let s: f64 = d.probabilities.iter().sum();
                    ensure((s - 1.0).abs() < 1e-12, || format!("sum {s}"))?;
                    ensure((0.0..=1.0).contains(&d.p_rec), || format!("p_rec {}", d.p_rec))?;
                }
                Err(crate::QamError::DegenerateDistribution) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
        Ok("output distributions sum to 1 within 1e-12".into())
    }));

    results.push(check("sampling_consistency", || {
        let model = MemoryModel::parse("0000\n0111\n").map_err(err)?;
        let input: Pattern = "0001".parse().map_err(err)?;
        let params = RetrievalParams::measured(input.clone(), 1, 64);
        let summary = run_trials(&model, &params, sizes.trials, seed).map_err(err)?;
        let dist = retrieval_distribution(&model, &input, 1.0, None).map_err(err)?;
        let n = summary.recognized as f64;
        let mut stored = 0;
        for (k, pk) in model.patterns().iter().enumerate() {
            let c = summary.counts[pk.to_index()] as f64;
            stored += summary.counts[pk.to_index()];
            let p = dist.probabilities[k];
            let sigma = (n * p * (1.0 - p)).sqrt();
            ensure((c - n * p).abs() <= 4.0 * sigma, || format!("{pk}: {c} vs {:.1} +- {sigma:.1}", n * p))?;
        }
        ensure(stored == summary.recognized, || "output outside the stored set".into())?;
        Ok(format!("{} trials within 4 sigma, no spurious outputs", sizes.trials))
    }));

    results.push(check("amplitude_amplification", || {
        let cases = [("00\n11\n", "01", 2usize, 0.25), ("000\n001\n010\n011\n100\n101\n110\n111\n", "000", 1, 0.5), ("0000\n0111\n", "0001", 1, 0.676_776_695_296_636_9)];
        for (text, inp, b, p_rec) in cases {
            let model = MemoryModel::parse(text).map_err(err)?;
            let input: Pattern = inp.parse().map_err(err)?;
            let traj = amplification_trajectory(&model, &input, b, None, 8).map_err(err)?;
            for (k, s) in traj.iter().enumerate() {
                let a = amplified_success_probability(p_rec, k);
                ensure((s - a).abs() < 1e-9, || format!("P_rec={p_rec} k={k}: {s} vs {a}"))?;
            }
        }
        Ok("success after k <= 8 iterations follows sin^2((2k+1) theta)".into())
    }));

    results.push(check("gate_counts", || {
        for n in 1..=sizes.max_n {
            let model = MemoryModel::new(vec![Pattern::from_index(0, n)]).map_err(err)?;
            let input = Pattern::from_index(0, n);
            for circuit in [CircuitMode::Operator, CircuitMode::AuxRegister] {
                let fs = build_final_state(&model, &input, 1, circuit, None).map_err(err)?;
                let want = round_gate_count(n, circuit);
                ensure(fs.record.total() == want, || format!("n={n} {circuit:?}: {} != {want}", fs.record.total()))?;
            }
        }
        let c = complexity_estimate(4, 3, 2, 5, RetrievalMode::Amplified, CircuitMode::Operator, CostInputs::default())
            .map_err(err)?;
        ensure(c.total == 770, || format!("complexity {} != 770", c.total))?;
        Ok("rounds cost 4n+2 / 6n+2; complexity(4,3,2,5) = 770".into())
    }));

    results.push(check("cloning_overlap", || {
        for _ in 0..sizes.models {
            let model = random_model(&mut rng, 6, 64);
            let p = model.p();
            let want = if p % 2 == 0 { 0.0 } else { 1.0 / p as f64 };
            let got = dual_memory_overlap(&model);
            ensure(got == want, || format!("p={p}: {got} != {want}"))?;
            ensure(p % 2 == 1 || cloning_bound(&model) == 2.0, || "bound != 2 for even p".into())?;
        }
        Ok("<d|m> = 0 (p even), 1/p (p odd)".into())
    }));

    results.push(check("thermodynamic_identities", || {
        let grid = log_grid(1e-3, 1e6, sizes.thermo_points).map_err(err)?;
        for &(n, d) in &[(100_000u64, 1_000u64), (100_000, 0)] {
            let mut prev_d = f64::INFINITY;
            for &b in &grid {
                let p = potentials(n, d, b, AverageMode::Integral).map_err(err)?;
                let rel = (p.F - (p.U - p.S / b)).abs() / p.F.abs().max(1e-300);
                ensure(rel < 1e-4, || format!("F != U - S/b at b={b}"))?;
                ensure(p.S <= 1e-9, || format!("S = {} > 0 at b={b}", p.S))?;
                ensure(p.D <= prev_d + 1e-12, || format!("D increases at b={b}"))?;
                let back = b * 2.0 * (0.5 * PI * p.D).cos().ln();
                let ln_z = p.z_ratio.ln();
                ensure((back - ln_z).abs() <= 1e-9 * ln_z.abs().max(1.0), || format!("cos^2b(pi D/2) != z at b={b}"))?;
                prev_d = p.D;
            }
        }
        Ok("F = U - S/b, S <= 0, D non-increasing, cos^2b(pi D/2) = z".into())
    }));

    results.push(check("high_temperature_limit", || {
        let (f, d) = high_temp_limit(0.0).map_err(err)?;
        ensure((f - 2.0 * LN_2).abs() < 1e-8, || format!("F_inf(0) = {f}"))?;
        ensure((d - 2.0 / 3.0).abs() < 1e-8, || format!("D_inf(0) = {d}"))?;
        Ok(format!("F_inf(0) = {f:.12}"))
    }));

    results.push(check("ising_energy", || {
        for n in 1..=sizes.ising_max_n {
            for mask in 0..1usize << n {
                let spins: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 0.5 } else { -0.5 }).collect();
                let k = mask.count_ones() as f64;
                let e = ising_energy(&spins).map_err(err)?;
                let want = PI * PI / 4.0 * (k / n as f64).powi(2);
                ensure((e - want).abs() < 1e-12, || format!("n={n} mask={mask:b}: {e} vs {want}"))?;
            }
        }
        Ok(format!("E = (pi^2/4)(k/n)^2 for all configurations up to n={}", sizes.ising_max_n))
    }));

    VerifyReport { level, seed, results }
}
