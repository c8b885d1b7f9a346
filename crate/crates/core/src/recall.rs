//! Retrieval from the memory.
//!
//! Each of the `b` control qubits receives one round `H, mark, phase, unmark,
//! H`, after which the branch with every control at 0 carries the memory
//! amplitudes reweighted by `cos^b(pi d_H / 2n)`. The branch is obtained
//! either by repeating and measuring until the controls read all zeros (at
//! most `T` times) or by `T` steps of amplitude amplification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QamError, Result};
use crate::memory::{memory_operator_gate_count, memory_state_analytic, MemoryModel, MemoryOperator, Pattern};
use crate::qsim::{Control, Gate, GateRecord, RegisterLayout, StateVector};

use std::f64::consts::PI;

/// How the input enters the retrieval circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CircuitMode {
    /// Input rotation `I` applied directly to the memory register.
    #[default]
    Operator,
    /// Input held in its own register, compared with XOR/NOT.
    AuxRegister,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMode {
    #[default]
    Measured,
    Amplified,
}

/// Treatment of the unknown bits of a partial input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MissingBits {
    /// Distances and phases use the known bits only.
    #[default]
    Masked,
    /// Unknown bits are filled at random and the input is treated as noisy.
    RandomFill,
}

/// Sorted, distinct indices of the known input bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnownMask {
    indices: Vec<usize>,
}

impl KnownMask {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(QamError::InvalidMask("mask must name at least one known bit".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(QamError::InvalidMask("repeated index".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(QamError::InvalidMask(format!("index {bad} out of range for width {n}")));
        }
        Ok(Self { indices })
    }

    /// Comma-separated list such as `0,1,5`.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let indices = text
            .split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| QamError::InvalidMask(format!("'{t}' is not an index")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalParams {
    pub input: Pattern,
    pub b: usize,
    /// Repetition threshold `T` (measured) or iteration count (amplified).
    pub threshold: usize,
    pub mask: Option<KnownMask>,
    pub missing: MissingBits,
    pub mode: RetrievalMode,
    pub circuit: CircuitMode,
}

impl RetrievalParams {
    pub fn measured(input: Pattern, b: usize, threshold: usize) -> Self {
        Self {
            input,
            b,
            threshold,
            mask: None,
            missing: MissingBits::Masked,
            mode: RetrievalMode::Measured,
            circuit: CircuitMode::Operator,
        }
    }

    pub fn amplified(input: Pattern, b: usize, iterations: usize) -> Self {
        Self {
            mode: RetrievalMode::Amplified,
            ..Self::measured(input, b, iterations)
        }
    }

    pub fn with_mask(mut self, mask: KnownMask) -> Self {
        self.mask = Some(mask);
        self
    }

    fn validate(&self, model: &MemoryModel) -> Result<()> {
        if self.input.width() != model.n() {
            return Err(QamError::WidthMismatch {
                expected: model.n(),
                found: self.input.width(),
            });
        }
        if self.b == 0 {
            return Err(QamError::InvalidParameter("b must be at least 1".into()));
        }
        if self.mode == RetrievalMode::Measured && self.threshold == 0 {
            return Err(QamError::InvalidParameter("threshold T must be at least 1".into()));
        }
        if let Some(mask) = &self.mask {
            if let Some(&bad) = mask.indices().iter().find(|&&i| i >= model.n()) {
                return Err(QamError::InvalidMask(format!("index {bad} out of range")));
            }
        }
        if self.mode == RetrievalMode::Amplified && self.circuit == CircuitMode::AuxRegister {
            return Err(QamError::InvalidParameter(
                "amplified recall uses the operator form of the input".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionEntry {
    pub pattern: Pattern,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub recognized: bool,
    pub output: Option<Pattern>,
    pub repetitions_used: usize,
    pub gate_count: u64,
    /// Probability that the controls read all zeros in one shot.
    pub p_rec: f64,
    /// Analytic probability that this recall succeeds within its budget.
    pub success_probability: f64,
    pub distribution: Vec<DistributionEntry>,
}

impl RetrievalOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outcome serialization cannot fail")
    }
}

pub fn hamming_distance(a: &Pattern, b: &Pattern, mask: Option<&KnownMask>) -> Result<usize> {
    if a.width() != b.width() {
        return Err(QamError::WidthMismatch {
            expected: a.width(),
            found: b.width(),
        });
    }
    match mask {
        None => Ok(a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count()),
        Some(mask) => {
            if let Some(&bad) = mask.indices().iter().find(|&&i| i >= a.width()) {
                return Err(QamError::InvalidMask(format!("index {bad} out of range")));
            }
            Ok(mask.indices().iter().filter(|&&i| a.bit(i) != b.bit(i)).count())
        }
    }
}

fn distances(model: &MemoryModel, input: &Pattern, mask: Option<&KnownMask>) -> Result<Vec<usize>> {
    model
        .patterns()
        .iter()
        .map(|p| hamming_distance(input, p, mask))
        .collect()
}

/// `cos(pi d / 2n)`, exactly zero at `d = n`.
fn cos_half_angle(d: usize, n: usize) -> f64 {
    if d == n {
        0.0
    } else {
        (PI * d as f64 / (2.0 * n as f64)).cos()
    }
}

/// `E^k = -2 ln cos(pi d_H / 2n)` per stored pattern; `+inf` at `d_H = n`.
/// A mask restricts `d_H` to the known bits while `n` stays the full width.
pub fn energy_levels(model: &MemoryModel, input: &Pattern, mask: Option<&KnownMask>) -> Result<Vec<f64>> {
    let n = model.n();
    Ok(distances(model, input, mask)?
        .into_iter()
        .map(|d| {
            let c = cos_half_angle(d, n);
            if c == 0.0 {
                f64::INFINITY
            } else {
                -2.0 * c.ln()
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalDistribution {
    /// Recognition probability `(1/p) sum_k cos^{2b}`.
    pub p_rec: f64,
    /// Partition function `Z = p * p_rec`.
    pub z: f64,
    /// Output probability of each stored pattern, in model order.
    pub probabilities: Vec<f64>,
}

fn weights(model: &MemoryModel, input: &Pattern, b: f64, mask: Option<&KnownMask>) -> Result<Vec<f64>> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(QamError::InvalidParameter(format!("b must be positive, got {b}")));
    }
    if input.width() != model.n() {
        return Err(QamError::WidthMismatch {
            expected: model.n(),
            found: input.width(),
        });
    }
    let n = model.n();
    Ok(distances(model, input, mask)?
        .into_iter()
        .map(|d| cos_half_angle(d, n).powf(2.0 * b))
        .collect())
}

/// `P_rec` alone; zero (not an error) when every pattern is at distance `n`.
pub fn recognition_probability(model: &MemoryModel, input: &Pattern, b: f64, mask: Option<&KnownMask>) -> Result<f64> {
    let w = weights(model, input, b, mask)?;
    Ok(w.iter().sum::<f64>() / model.p() as f64)
}

/// Recognition probability and the Boltzmann-like output distribution over
/// stored patterns. Non-stored patterns have probability zero.
pub fn retrieval_distribution(
    model: &MemoryModel,
    input: &Pattern,
    b: f64,
    mask: Option<&KnownMask>,
) -> Result<RetrievalDistribution> {
    let w = weights(model, input, b, mask)?;
    let z: f64 = w.iter().sum();
    if z <= 0.0 {
        return Err(QamError::DegenerateDistribution);
    }
    Ok(RetrievalDistribution {
        p_rec: z / model.p() as f64,
        z,
        probabilities: w.iter().map(|x| x / z).collect(),
    })
}

/// The stored pattern selected as `b -> inf`: the unique nearest one.
pub fn limiting_output(model: &MemoryModel, input: &Pattern, mask: Option<&KnownMask>) -> Result<Pattern> {
    let d = distances(model, input, mask)?;
    let min = *d.iter().min().ok_or(QamError::EmptyModel)?;
    let candidates: Vec<usize> = (0..d.len()).filter(|&k| d[k] == min).collect();
    if candidates.len() > 1 {
        return Err(QamError::AmbiguousMinimum {
            distance: min,
            candidates: candidates.len(),
        });
    }
    Ok(model.patterns()[candidates[0]].clone())
}


/// Input-dependent rotation `R(i)`: one round per control qubit.
#[derive(Clone, Debug)]
pub struct RetrievalOperator {
    /// Input bits at the active positions.
    bits: Vec<u8>,
    /// Memory qubits that take part (all, or the known ones under a mask).
    active: Vec<usize>,
    /// Input-register qubits paired with `active`, auxiliary form only.
    input_qubits: Option<Vec<usize>>,
    controls: Vec<usize>,
    /// Angular scale `n` of the phase `exp(i pi d / 2n)`.
    scale: usize,
}

impl RetrievalOperator {
    /// Operator form: the input enters as single-qubit rotations `I`.
    pub fn new(input: &Pattern, memory: &[usize], controls: &[usize], mask: Option<&KnownMask>) -> Result<Self> {
        if memory.len() != input.width() {
            return Err(QamError::WidthMismatch {
                expected: input.width(),
                found: memory.len(),
            });
        }
        let positions: Vec<usize> = match mask {
            None => (0..input.width()).collect(),
            Some(m) => {
                if let Some(&bad) = m.indices().iter().find(|&&i| i >= input.width()) {
                    return Err(QamError::InvalidMask(format!("index {bad} out of range")));
                }
                m.indices().to_vec()
            }
        };
        Ok(Self {
            bits: positions.iter().map(|&j| input.bit(j)).collect(),
            active: positions.iter().map(|&j| memory[j]).collect(),
            input_qubits: None,
            controls: controls.to_vec(),
            scale: input.width(),
        })
    }

    /// Auxiliary form: the input is already loaded into `input_reg`.
    pub fn with_input_register(
        input: &Pattern,
        input_reg: &[usize],
        memory: &[usize],
        controls: &[usize],
        mask: Option<&KnownMask>,
    ) -> Result<Self> {
        if input_reg.len() != input.width() {
            return Err(QamError::WidthMismatch {
                expected: input.width(),
                found: input_reg.len(),
            });
        }
        let mut op = Self::new(input, memory, controls, mask)?;
        op.input_qubits = Some(match mask {
            None => input_reg.to_vec(),
            Some(m) => m.indices().iter().map(|&j| input_reg[j]).collect(),
        });
        Ok(op)
    }

    pub fn controls(&self) -> &[usize] {
        &self.controls
    }

    /// Leaves each active memory qubit at 1 exactly where it agrees with the input.
    fn mark(&self, state: &mut StateVector) -> Result<()> {
        let not = Gate::not();
        for (k, &q) in self.active.iter().enumerate() {
            match &self.input_qubits {
                Some(iq) => {
                    state.apply_controlled(&not, &[Control::on(iq[k])], q)?;
                    state.apply_1q(&not, q)?;
                }
                None => state.apply_1q(&Gate::input_bit(self.bits[k]), q)?,
            }
        }
        Ok(())
    }

    fn unmark(&self, state: &mut StateVector) -> Result<()> {
        let not = Gate::not();
        for (k, &q) in self.active.iter().enumerate().rev() {
            match &self.input_qubits {
                Some(iq) => {
                    state.apply_1q(&not, q)?;
                    state.apply_controlled(&not, &[Control::on(iq[k])], q)?;
                }
                None => state.apply_1q(&Gate::input_bit(self.bits[k]).adjoint(), q)?,
            }
        }
        Ok(())
    }

    /// One round on control qubit `c`: `H, mark, phase, unmark, H`.
    pub fn apply_round(&self, state: &mut StateVector, c: usize) -> Result<()> {
        let h = Gate::hadamard();
        state.apply_1q(&h, c)?;
        self.mark(state)?;
        state.apply_hamming_phase(&self.active, c, self.scale)?;
        self.unmark(state)?;
        state.apply_1q(&h, c)
    }

    pub fn apply_round_inverse(&self, state: &mut StateVector, c: usize) -> Result<()> {
        let h = Gate::hadamard();
        state.apply_1q(&h, c)?;
        self.mark(state)?;
        state.apply_hamming_phase_inverse(&self.active, c, self.scale)?;
        self.unmark(state)?;
        state.apply_1q(&h, c)
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        for &c in &self.controls {
            self.apply_round(state, c)?;
        }
        Ok(())
    }

    pub fn apply_inverse(&self, state: &mut StateVector) -> Result<()> {
        for &c in self.controls.iter().rev() {
            self.apply_round_inverse(state, c)?;
        }
        Ok(())
    }
}

/// Gates in one retrieval round over an unmasked input of width `n`.
pub fn round_gate_count(n: usize, circuit: CircuitMode) -> u64 {
    let n = n as u64;
    match circuit {
        CircuitMode::Operator => 4 * n + 2,
        CircuitMode::AuxRegister => 6 * n + 2,
    }
}

/// State after all `b` retrieval rounds, with its qubit roles.
#[derive(Clone, Debug)]
pub struct FinalState {
    pub state: StateVector,
    pub memory: Vec<usize>,
    pub controls: Vec<usize>,
    /// Gates spent by the rounds alone; preparation is not counted.
    pub record: GateRecord,
}

/// Prepares `|m>|0_c>` (or `|i>|m>|0_c>`) and applies `R(i)`.
///
/// Layouts are `[m:n, c:b]` and `[i:n, m:n, c:b]`.
pub fn build_final_state(
    model: &MemoryModel,
    input: &Pattern,
    b: usize,
    circuit: CircuitMode,
    mask: Option<&KnownMask>,
) -> Result<FinalState> {
    let n = model.n();
    if input.width() != n {
        return Err(QamError::WidthMismatch { expected: n, found: input.width() });
    }
    if b == 0 {
        return Err(QamError::InvalidParameter("b must be at least 1".into()));
    }
    let memory_state = memory_state_analytic(model)?;
    let controls_state = StateVector::zero_state(RegisterLayout::new([("c", b)])?)?;
    let (mut state, input_reg) = match circuit {
        CircuitMode::Operator => (memory_state.tensor(&controls_state)?, None),
        CircuitMode::AuxRegister => {
            let mut amps = vec![crate::qsim::C64::new(0.0, 0.0); 1 << n];
            amps[input.to_index()] = crate::qsim::C64::new(1.0, 0.0);
            let input_state = StateVector::from_amplitudes(RegisterLayout::new([("i", n)])?, amps)?;
            (
                input_state.tensor(&memory_state)?.tensor(&controls_state)?,
                Some((0..n).collect::<Vec<_>>()),
            )
        }
    };
    let memory = state.layout().qubits("m")?.collect::<Vec<_>>();
    let controls = state.layout().qubits("c")?.collect::<Vec<_>>();
    state.take_record();
    let op = match &input_reg {
        None => RetrievalOperator::new(input, &memory, &controls, mask)?,
        Some(iq) => RetrievalOperator::with_input_register(input, iq, &memory, &controls, mask)?,
    };
    op.apply(&mut state)?;
    let record = state.take_record();
    Ok(FinalState { state, memory, controls, record })
}

/// Replaces the unknown bits of `input` with uniform random bits.
pub fn fill_missing<R: Rng + ?Sized>(input: &Pattern, mask: &KnownMask, rng: &mut R) -> Pattern {
    let bits = (0..input.width())
        .map(|j| {
            if mask.indices().binary_search(&j).is_ok() {
                input.bit(j)
            } else {
                rng.gen_range(0..2u8)
            }
        })
        .collect();
    Pattern::new(bits).expect("filled pattern is binary")
}

/// A recall whose state has been simulated; shots are then drawn from it.
#[derive(Clone, Debug)]
pub struct PreparedRecall {
    mode: RetrievalMode,
    n: usize,
    threshold: usize,
    /// Born probability of reading every control qubit as 0.
    p_zero: f64,
    /// Memory-register distribution conditioned on the controls reading 0.
    conditional: Vec<f64>,
    /// Gates per measured shot, or the whole amplified circuit.
    gates: u64,
    p_rec: f64,
    success_probability: f64,
    distribution: Vec<DistributionEntry>,
}

impl PreparedRecall {
    /// Simulates the circuit for `params`. With `MissingBits::RandomFill`
    /// the caller must have already filled the input.
    pub fn new(model: &MemoryModel, params: &RetrievalParams) -> Result<Self> {
        params.validate(model)?;
        let mask = match params.missing {
            MissingBits::Masked => params.mask.as_ref(),
            MissingBits::RandomFill => None,
        };
        let analytic = match retrieval_distribution(model, &params.input, params.b as f64, mask) {
            Ok(d) => Some(d),
            Err(QamError::DegenerateDistribution) => None,
            Err(e) => return Err(e),
        };
        let p_rec = analytic.as_ref().map_or(0.0, |d| d.p_rec);
        let distribution = analytic
            .as_ref()
            .map(|d| {
                model
                    .patterns()
                    .iter()
                    .zip(&d.probabilities)
                    .map(|(p, &prob)| DistributionEntry { pattern: p.clone(), prob })
                    .collect()
            })
            .unwrap_or_default();

        let (state, memory, controls, gates, success_probability) = match params.mode {
            RetrievalMode::Measured => {
                let fs = build_final_state(model, &params.input, params.b, params.circuit, mask)?;
                let success = 1.0 - (1.0 - p_rec).powi(params.threshold as i32);
                (fs.state, fs.memory, fs.controls, fs.record.total(), success)
            }
            RetrievalMode::Amplified => {
                let amp = amplify(model, &params.input, params.b, mask, params.threshold)?;
                let success = amplified_success_probability(p_rec, params.threshold);
                (amp.state, amp.memory, amp.controls, amp.record.total(), success)
            }
        };
        let zero_controls = |idx: usize| controls.iter().all(|&c| state.bit_of(idx, c) == 0);
        let mut conditional = vec![0.0; 1 << memory.len()];
        let mut p_zero = 0.0;
        for (idx, a) in state.amplitudes().iter().enumerate() {
            if zero_controls(idx) {
                let w = a.norm_sqr();
                p_zero += w;
                conditional[state.extract(idx, &memory)] += w;
            }
        }
        if p_zero > 0.0 {
            conditional.iter_mut().for_each(|w| *w /= p_zero);
        }
        Ok(Self {
            mode: params.mode,
            n: model.n(),
            threshold: params.threshold,
            p_zero,
            conditional,
            gates,
            p_rec,
            success_probability,
            distribution,
        })
    }

    /// Born probability that one measurement of the controls reads all zeros.
    pub fn zero_control_probability(&self) -> f64 {
        self.p_zero
    }

    /// Memory distribution given that the controls read all zeros.
    pub fn conditional_distribution(&self) -> &[f64] {
        &self.conditional
    }

    fn sample_memory<R: Rng + ?Sized>(&self, rng: &mut R) -> Pattern {
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (v, &w) in self.conditional.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = v;
                if r < acc {
                    return Pattern::from_index(v, self.n);
                }
            }
        }
        Pattern::from_index(last, self.n)
    }

    /// Runs one recall. Measured mode draws up to `T` shots; amplified mode
    /// measures the amplified state once.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> RetrievalOutcome {
        let shots = match self.mode {
            RetrievalMode::Measured => self.threshold,
            RetrievalMode::Amplified => 1,
        };
        let mut output = None;
        let mut used = 0;
        if self.p_zero > 0.0 {
            for shot in 1..=shots {
                used = shot;
                if rng.gen::<f64>() < self.p_zero {
                    output = Some(self.sample_memory(rng));
                    break;
                }
            }
        } else {
            used = shots;
        }
        let (repetitions_used, gate_count) = match self.mode {
            RetrievalMode::Measured => (used, self.gates * used as u64),
            RetrievalMode::Amplified => (self.threshold, self.gates),
        };
        RetrievalOutcome {
            recognized: output.is_some(),
            output,
            repetitions_used,
            gate_count,
            p_rec: self.p_rec,
            success_probability: self.success_probability,
            distribution: self.distribution.clone(),
        }
    }
}

fn resolve<R: Rng + ?Sized>(params: &RetrievalParams, rng: &mut R) -> RetrievalParams {
    match (&params.mask, params.missing) {
        (Some(mask), MissingBits::RandomFill) => RetrievalParams {
            input: fill_missing(&params.input, mask, rng),
            mask: None,
            ..params.clone()
        },
        _ => params.clone(),
    }
}

/// Repeat-until-success recall with at most `T` shots.
pub fn recall_measured<R: Rng + ?Sized>(model: &MemoryModel, params: &RetrievalParams, rng: &mut R) -> Result<RetrievalOutcome> {
    if params.mode != RetrievalMode::Measured {
        return Err(QamError::InvalidParameter("expected measured mode".into()));
    }
    recall(model, params, rng)
}

/// Recall after `T` amplitude-amplification iterations.
pub fn recall_amplified<R: Rng + ?Sized>(model: &MemoryModel, params: &RetrievalParams, rng: &mut R) -> Result<RetrievalOutcome> {
    if params.mode != RetrievalMode::Amplified {
        return Err(QamError::InvalidParameter("expected amplified mode".into()));
    }
    recall(model, params, rng)
}

pub fn recall<R: Rng + ?Sized>(model: &MemoryModel, params: &RetrievalParams, rng: &mut R) -> Result<RetrievalOutcome> {
    params.validate(model)?;
    let resolved = resolve(params, rng);
    Ok(PreparedRecall::new(model, &resolved)?.run(rng))
}

/// Aggregate of many independent recalls.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSummary {
    pub trials: u64,
    pub recognized: u64,
    /// Output counts indexed by pattern value.
    pub counts: Vec<u64>,
    pub total_repetitions: u64,
}

/// Runs `trials` recalls; trial `t` uses stream `t` of a ChaCha8 generator
/// seeded with `seed`, so the result does not depend on thread scheduling.
pub fn run_trials(model: &MemoryModel, params: &RetrievalParams, trials: u64, seed: u64) -> Result<TrialSummary> {
    params.validate(model)?;
    let shared = match params.missing {
        MissingBits::RandomFill if params.mask.is_some() => None,
        _ => Some(PreparedRecall::new(model, params)?),
    };
    let width = 1usize << model.n();
    let one = |t: u64| -> Result<RetrievalOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t);
        match &shared {
            Some(prep) => Ok(prep.run(&mut rng)),
            None => recall(model, params, &mut rng),
        }
    };
    let fold = (0..trials)
        .into_par_iter()
        .map(one)
        .try_fold(
            || (0u64, vec![0u64; width], 0u64),
            |(mut rec, mut counts, mut reps), outcome| {
                let o = outcome?;
                reps += o.repetitions_used as u64;
                if let Some(p) = o.output {
                    rec += 1;
                    counts[p.to_index()] += 1;
                }
                Ok::<_, QamError>((rec, counts, reps))
            },
        )
        .try_reduce(
            || (0u64, vec![0u64; width], 0u64),
            |(r1, mut c1, p1), (r2, c2, p2)| {
                c1.iter_mut().zip(&c2).for_each(|(a, b)| *a += b);
                Ok((r1 + r2, c1, p1 + p2))
            },
        )?;
    Ok(TrialSummary {
        trials,
        recognized: fold.0,
        counts: fold.1,
        total_repetitions: fold.2,
    })
}

/// `sin^2((2k+1) theta)` with `sin^2 theta = P_rec`.
pub fn amplified_success_probability(p_rec: f64, iterations: usize) -> f64 {
    let theta = p_rec.clamp(0.0, 1.0).sqrt().asin();
    ((2 * iterations + 1) as f64 * theta).sin().powi(2)
}

/// Amplitude-amplification state over `[m:n, c:b, u:2]`.
#[derive(Clone, Debug)]
pub struct AmplifiedState {
    pub state: StateVector,
    pub memory: Vec<usize>,
    pub controls: Vec<usize>,
    /// Preparation `A = R M` plus every `Q`; oracle calls are tallied apart.
    pub record: GateRecord,
}

/// Amplitude amplification driver with `A = R(i) M` and
/// `Q = -A S0 A^-1 S`, where `S` flips the all-zero-control branch and `S0`
/// flips `|0...0>`.
pub struct Amplifier<'a> {
    memory_op: MemoryOperator<'a>,
    retrieval: RetrievalOperator,
    memory: Vec<usize>,
    controls: Vec<usize>,
    state: StateVector,
}

impl<'a> Amplifier<'a> {
    pub fn new(model: &'a MemoryModel, input: &Pattern, b: usize, mask: Option<&KnownMask>) -> Result<Self> {
        let n = model.n();
        if b == 0 {
            return Err(QamError::InvalidParameter("b must be at least 1".into()));
        }
        let layout = RegisterLayout::new([("m", n), ("c", b), ("u", 2)])?;
        let memory: Vec<usize> = (0..n).collect();
        let controls: Vec<usize> = (n..n + b).collect();
        let memory_op = MemoryOperator::new(model, memory.clone(), n + b, n + b + 1)?;
        let retrieval = RetrievalOperator::new(input, &memory, &controls, mask)?;
        let mut state = StateVector::zero_state(layout)?;
        memory_op.apply(&mut state)?;
        retrieval.apply(&mut state)?;
        Ok(Self { memory_op, retrieval, memory, controls, state })
    }

    fn apply_a_inverse(&mut self) -> Result<()> {
        self.retrieval.apply_inverse(&mut self.state)?;
        self.memory_op.apply_inverse(&mut self.state)
    }

    fn apply_a(&mut self) -> Result<()> {
        self.memory_op.apply(&mut self.state)?;
        self.retrieval.apply(&mut self.state)
    }

    /// One application of `Q`.
    pub fn iterate(&mut self) -> Result<()> {
        let mask: usize = self.controls.iter().map(|&c| 1usize << (self.state.num_qubits() - 1 - c)).sum();
        self.state.apply_sign_oracle(|idx| idx & mask == 0);
        self.apply_a_inverse()?;
        self.state.apply_sign_oracle(|idx| idx == 0);
        self.apply_a()?;
        self.state.scale(crate::qsim::C64::new(-1.0, 0.0));
        Ok(())
    }

    /// Probability that the controls read all zeros in the current state.
    pub fn success_probability(&self) -> f64 {
        let mask: usize = self.controls.iter().map(|&c| 1usize << (self.state.num_qubits() - 1 - c)).sum();
        self.state
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn into_state(self) -> AmplifiedState {
        let record = self.state.record().clone();
        AmplifiedState {
            state: self.state,
            memory: self.memory,
            controls: self.controls,
            record,
        }
    }
}

/// Runs `iterations` steps of amplitude amplification from `A|0>`.
pub fn amplify(
    model: &MemoryModel,
    input: &Pattern,
    b: usize,
    mask: Option<&KnownMask>,
    iterations: usize,
) -> Result<AmplifiedState> {
    let mut amp = Amplifier::new(model, input, b, mask)?;
    for _ in 0..iterations {
        amp.iterate()?;
    }
    Ok(amp.into_state())
}

/// Simulated success probability after `0..=k_max` iterations.
pub fn amplification_trajectory(
    model: &MemoryModel,
    input: &Pattern,
    b: usize,
    mask: Option<&KnownMask>,
    k_max: usize,
) -> Result<Vec<f64>> {
    let mut amp = Amplifier::new(model, input, b, mask)?;
    let mut out = vec![amp.success_probability()];
    for _ in 0..k_max {
        amp.iterate()?;
        out.push(amp.success_probability());
    }
    Ok(out)
}

/// Gate-count breakdown of a retrieval run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub round_gates: u64,
    /// `b` rounds.
    pub retrieval_gates: u64,
    /// `p(2n+3)+1`.
    pub storage_gates: u64,
    /// Gates per `Q` step, amplified mode only.
    pub per_iteration: Option<u64>,
    pub total: u64,
    /// False when the oracle costs `C_S`, `C_S0` were left at zero.
    pub oracle_costs_included: bool,
}

/// Oracle and cloning costs that enter the totals symbolically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostInputs {
    pub c_s: Option<u64>,
    pub c_s0: Option<u64>,
    /// Multiplier for preparing each fresh copy of the memory.
    pub c_clon: u64,
}

impl Default for CostInputs {
    fn default() -> Self {
        Self { c_s: None, c_s0: None, c_clon: 1 }
    }
}

/// Measured mode: `T b (round) C_clon`, which is the `T b (6n+2) C_clon`
/// bound for the auxiliary circuit. Amplified mode:
/// `T [p(4n+6) + b(8n+4) + 2 + C_S + C_S0] + p(2n+3) + b(4n+2) + 1`.
pub fn complexity_estimate(
    n: usize,
    p: usize,
    b: usize,
    t: usize,
    mode: RetrievalMode,
    circuit: CircuitMode,
    costs: CostInputs,
) -> Result<ComplexityEstimate> {
    if n == 0 || p == 0 || b == 0 {
        return Err(QamError::InvalidParameter("n, p and b must be positive".into()));
    }
    let (nn, pp, bb, tt) = (n as u64, p as u64, b as u64, t as u64);
    let storage_gates = memory_operator_gate_count(n, p);
    Ok(match mode {
        RetrievalMode::Measured => {
            let round_gates = round_gate_count(n, circuit);
            ComplexityEstimate {
                round_gates,
                retrieval_gates: bb * round_gates,
                storage_gates,
                per_iteration: None,
                total: tt * bb * round_gates * costs.c_clon,
                oracle_costs_included: true,
            }
        }
        RetrievalMode::Amplified => {
            let round_gates = round_gate_count(n, CircuitMode::Operator);
            let oracle = costs.c_s.unwrap_or(0) + costs.c_s0.unwrap_or(0);
            let per_iteration = pp * (4 * nn + 6) + bb * (8 * nn + 4) + 2 + oracle;
            ComplexityEstimate {
                round_gates,
                retrieval_gates: bb * round_gates,
                storage_gates,
                per_iteration: Some(per_iteration),
                total: tt * per_iteration + storage_gates + bb * round_gates,
                oracle_costs_included: costs.c_s.is_some() && costs.c_s0.is_some(),
            }
        }
    })
}
