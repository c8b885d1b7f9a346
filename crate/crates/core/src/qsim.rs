//! Dense state-vector simulator.
//!
//! Supports exactly the gate families the memory circuits need: arbitrary
//! single-qubit unitaries, the same gates with any number of (value-)controls,
//! the Hamming-distance phase built from `U` and `CU^-2`, and diagonal sign
//! oracles. Every applied gate is tallied in a [`GateRecord`].
//!
//! Basis indices are big-endian over the layout: qubit 0 is the most
//! significant bit, so a register holding the bit string `b_0 b_1 ... b_{k-1}`
//! reads the same way as its basis label.

use std::fmt;
use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QamError, Result};

pub type C64 = Complex64;

pub const DEFAULT_QUBIT_CAP: usize = 26;
pub const UNITARITY_TOL: f64 = 1e-12;
/// Allowed drift of the squared norm.
pub const NORM_TOL: f64 = 1e-10;

const PAR_THRESHOLD: usize = 1 << 14;

/// Qubit cap for dense states; `QAM_QUBIT_CAP` overrides the default of 26.
pub fn qubit_cap() -> usize {
    std::env::var("QAM_QUBIT_CAP")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_QUBIT_CAP)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl Register {
    pub fn qubits(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Named, contiguous, disjoint qubit ranges covering `0..q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Register>", into = "Vec<Register>")]
pub struct RegisterLayout {
    registers: Vec<Register>,
}

impl RegisterLayout {
    /// Lays the registers out in the given order.
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut start = 0;
        let mut registers = Vec::new();
        for (name, len) in entries {
            registers.push(Register {
                name: name.into(),
                start,
                len,
            });
            start += len;
        }
        Self::try_from(registers)
    }

    pub fn num_qubits(&self) -> usize {
        self.registers.iter().map(|r| r.len).sum()
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn register(&self, name: &str) -> Option<&Register> {
        self.registers.iter().find(|r| r.name == name)
    }

    pub fn qubits(&self, name: &str) -> Result<Range<usize>> {
        self.register(name)
            .map(Register::qubits)
            .ok_or_else(|| QamError::Layout(format!("no register named '{name}'")))
    }
}

impl TryFrom<Vec<Register>> for RegisterLayout {
    type Error = QamError;

    fn try_from(registers: Vec<Register>) -> Result<Self> {
        if registers.is_empty() {
            return Err(QamError::Layout("layout has no registers".into()));
        }
        let mut next = 0;
        for (i, r) in registers.iter().enumerate() {
            if r.len == 0 {
                return Err(QamError::Layout(format!("register '{}' is empty", r.name)));
            }
            if r.start != next {
                return Err(QamError::Layout(format!(
                    "register '{}' starts at {} but previous ranges end at {}",
                    r.name, r.start, next
                )));
            }
            if registers[..i].iter().any(|o| o.name == r.name) {
                return Err(QamError::Layout(format!("duplicate register '{}'", r.name)));
            }
            next += r.len;
        }
        Ok(Self { registers })
    }
}

impl From<RegisterLayout> for Vec<Register> {
    fn from(layout: RegisterLayout) -> Self {
        layout.registers
    }
}

/// Gate classes counted separately by [`GateRecord`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateClass {
    OneQubit,
    TwoQubit,
    Toffoli,
    NXor,
    ControlledS,
    ControlledUInv2,
    Hadamard,
    PhaseU,
}

impl GateClass {
    pub const ALL: [GateClass; 8] = [
        GateClass::OneQubit,
        GateClass::TwoQubit,
        GateClass::Toffoli,
        GateClass::NXor,
        GateClass::ControlledS,
        GateClass::ControlledUInv2,
        GateClass::Hadamard,
        GateClass::PhaseU,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

/// Per-class gate tallies. Oracle invocations are tracked apart from the
/// elementary total.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GateRecord {
    counts: [u64; 8],
    oracle_calls: u64,
}

impl GateRecord {
    pub fn count(&self, class: GateClass) -> u64 {
        self.counts[class.slot()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn oracle_calls(&self) -> u64 {
        self.oracle_calls
    }

    pub fn add(&mut self, class: GateClass) {
        self.counts[class.slot()] += 1;
    }

    pub fn merge(&mut self, other: &GateRecord) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        self.oracle_calls += other.oracle_calls;
    }
}

impl fmt::Display for GateRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "total={}", self.total())?;
        for class in GateClass::ALL {
            let c = self.count(class);
            if c > 0 {
                write!(f, " {:?}={}", class, c)?;
            }
        }
        if self.oracle_calls > 0 {
            write!(f, " oracle={}", self.oracle_calls)?;
        }
        Ok(())
    }
}

/// What a gate is, for bookkeeping purposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    Generic,
    Not,
    Hadamard,
    /// Diagonal `U = diag(e^{i pi/2n}, 1)` of the Hamming phase.
    PhaseU,
    /// Storage splitting rotation `S^i` (or its inverse).
    Split,
    /// `U^-2` correction of the Hamming phase.
    PhaseCorrection,
}

/// Validated 2x2 unitary.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    matrix: [[C64; 2]; 2],
    kind: GateKind,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

impl Gate {
    pub fn new(matrix: [[C64; 2]; 2], kind: GateKind) -> Result<Self> {
        let deviation = unitarity_deviation(&matrix);
        if !(deviation <= UNITARITY_TOL) {
            return Err(QamError::NonUnitary { deviation });
        }
        Ok(Self { matrix, kind })
    }

    fn trusted(matrix: [[C64; 2]; 2], kind: GateKind) -> Self {
        debug_assert!(unitarity_deviation(&matrix) <= UNITARITY_TOL);
        Self { matrix, kind }
    }

    pub fn matrix(&self) -> &[[C64; 2]; 2] {
        &self.matrix
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn identity() -> Self {
        Self::trusted([[c(1.0), c(0.0)], [c(0.0), c(1.0)]], GateKind::Generic)
    }

    /// `sigma_1`.
    pub fn not() -> Self {
        Self::trusted([[c(0.0), c(1.0)], [c(1.0), c(0.0)]], GateKind::Not)
    }

    pub fn hadamard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::trusted([[c(h), c(h)], [c(h), c(-h)]], GateKind::Hadamard)
    }

    pub fn pauli_y() -> Self {
        Self::trusted(
            [[c(0.0), C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), c(0.0)]],
            GateKind::Generic,
        )
    }

    /// Splitting rotation `S^i = [[sqrt((i-1)/i), 1/sqrt(i)], [-1/sqrt(i), sqrt((i-1)/i)]]`.
    pub fn split(i: usize) -> Result<Self> {
        let m = split_matrix(i)?;
        Self::new(m, GateKind::Split)
    }

    /// Pattern-loading rotation for one bit: identity for 0, a bit flip
    /// `|0> -> |1>`, `|1> -> -|0>` for 1.
    pub fn pattern_bit(bit: u8) -> Self {
        if bit == 0 {
            Self::identity()
        } else {
            Self::trusted([[c(0.0), c(-1.0)], [c(1.0), c(0.0)]], GateKind::Generic)
        }
    }

    /// Input rotation `U_j = sin(pi i_j/2) 1 + i cos(pi i_j/2) sigma_2`: identity
    /// for input bit 1, `i sigma_2` for input bit 0.
    pub fn input_bit(bit: u8) -> Self {
        if bit == 1 {
            Self::identity()
        } else {
            Self::trusted([[c(0.0), c(1.0)], [c(-1.0), c(0.0)]], GateKind::Generic)
        }
    }

    /// `U = diag(e^{i pi / 2 scale}, 1)`.
    pub fn phase_u(scale: usize) -> Self {
        let theta = std::f64::consts::PI / (2.0 * scale as f64);
        Self::trusted(
            [[C64::from_polar(1.0, theta), c(0.0)], [c(0.0), c(1.0)]],
            GateKind::PhaseU,
        )
    }

    /// `U^-2 = diag(e^{-i pi / scale}, 1)`.
    pub fn phase_u_inv2(scale: usize) -> Self {
        let theta = -std::f64::consts::PI / scale as f64;
        Self::trusted(
            [[C64::from_polar(1.0, theta), c(0.0)], [c(0.0), c(1.0)]],
            GateKind::PhaseCorrection,
        )
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.matrix;
        Self {
            matrix: [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]],
            kind: self.kind,
        }
    }

    fn class_for(&self, controls: usize) -> GateClass {
        match (controls, self.kind) {
            (0, GateKind::Hadamard) => GateClass::Hadamard,
            (0, GateKind::PhaseU) => GateClass::PhaseU,
            (0, _) => GateClass::OneQubit,
            (1, GateKind::Split) => GateClass::ControlledS,
            (1, GateKind::PhaseCorrection) => GateClass::ControlledUInv2,
            (1, _) => GateClass::TwoQubit,
            (2, _) => GateClass::Toffoli,
            _ => GateClass::NXor,
        }
    }
}

/// Raw `S^i` matrix, `i >= 1`.
pub fn split_matrix(i: usize) -> Result<[[C64; 2]; 2]> {
    if i == 0 {
        return Err(QamError::InvalidParameter("S^i needs i >= 1".into()));
    }
    let i = i as f64;
    let diag = ((i - 1.0) / i).sqrt();
    let off = 1.0 / i.sqrt();
    Ok([[c(diag), c(off)], [c(-off), c(diag)]])
}

/// Largest entry of `|M M^dagger - 1|`.
pub fn unitarity_deviation(m: &[[C64; 2]; 2]) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..2 {
        for col in 0..2 {
            let v = m[r][0] * m[col][0].conj() + m[r][1] * m[col][1].conj();
            let target = if r == col { 1.0 } else { 0.0 };
            let d = (v - c(target)).norm();
            // NaN entries must fail the check.
            if d.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(d);
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Control {
    pub qubit: usize,
    pub value: bool,
}

impl Control {
    pub fn on(qubit: usize) -> Self {
        Self { qubit, value: true }
    }

    pub fn off(qubit: usize) -> Self {
        Self { qubit, value: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    /// Outcome bits in the order of the measured qubits.
    pub bits: Vec<u8>,
    /// Outcome as a big-endian integer over the measured qubits.
    pub value: usize,
    /// Marginal probability of the outcome before collapse.
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct StateVector {
    layout: RegisterLayout,
    amplitudes: Vec<C64>,
    record: GateRecord,
}

impl PartialEq for StateVector {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.amplitudes == other.amplitudes
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    num_qubits: usize,
    layout: RegisterLayout,
    amplitudes: Vec<[f64; 2]>,
}

impl StateVector {
    pub fn zero_state(layout: RegisterLayout) -> Result<Self> {
        Self::zero_state_with_cap(layout, qubit_cap())
    }

    pub fn zero_state_with_cap(layout: RegisterLayout, cap: usize) -> Result<Self> {
        let q = layout.num_qubits();
        if q > cap || q >= usize::BITS as usize {
            return Err(QamError::Capacity { requested: q, cap });
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1usize << q];
        amplitudes[0] = c(1.0);
        Ok(Self {
            layout,
            amplitudes,
            record: GateRecord::default(),
        })
    }

    /// Wraps explicit amplitudes; they must be normalized.
    pub fn from_amplitudes(layout: RegisterLayout, amplitudes: Vec<C64>) -> Result<Self> {
        let q = layout.num_qubits();
        let cap = qubit_cap();
        if q > cap {
            return Err(QamError::Capacity { requested: q, cap });
        }
        if amplitudes.len() != 1usize << q {
            return Err(QamError::DimensionMismatch {
                left: amplitudes.len(),
                right: 1usize << q,
            });
        }
        let state = Self {
            layout,
            amplitudes,
            record: GateRecord::default(),
        };
        let drift = (state.norm_sqr() - 1.0).abs();
        if !(drift < NORM_TOL) {
            return Err(QamError::InvalidParameter(format!(
                "amplitudes are not normalized (|norm^2 - 1| = {drift:.3e})"
            )));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.layout.num_qubits()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amplitudes[index]
    }

    pub fn record(&self) -> &GateRecord {
        &self.record
    }

    /// Returns the tally so far and starts a fresh one.
    pub fn take_record(&mut self) -> GateRecord {
        std::mem::take(&mut self.record)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn bit_mask(&self, qubit: usize) -> usize {
        1usize << (self.num_qubits() - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits() {
            return Err(QamError::InvalidQubit {
                index: qubit,
                num_qubits: self.num_qubits(),
            });
        }
        Ok(())
    }

    /// Basis index of the state whose listed qubits carry the given bits and
    /// all other qubits are 0.
    pub fn basis_index(&self, assignments: &[(usize, u8)]) -> Result<usize> {
        let mut idx = 0;
        for &(q, bit) in assignments {
            self.check_qubit(q)?;
            if bit == 1 {
                idx |= self.bit_mask(q);
            }
        }
        Ok(idx)
    }

    /// Value of `qubit` in basis state `index`.
    pub fn bit_of(&self, index: usize, qubit: usize) -> u8 {
        u8::from(index & self.bit_mask(qubit) != 0)
    }

    /// Big-endian value of the listed qubits in basis state `index`.
    pub fn extract(&self, index: usize, qubits: &[usize]) -> usize {
        qubits
            .iter()
            .fold(0, |acc, &q| (acc << 1) | usize::from(self.bit_of(index, q)))
    }

    pub fn apply_1q(&mut self, gate: &Gate, target: usize) -> Result<()> {
        self.apply_controlled(gate, &[], target)
    }

    /// Applies `gate` to `target` on every basis state whose control qubits
    /// match their control values.
    pub fn apply_controlled(&mut self, gate: &Gate, controls: &[Control], target: usize) -> Result<()> {
        self.check_qubit(target)?;
        let mut ctrl_mask = 0usize;
        let mut ctrl_val = 0usize;
        for ctl in controls {
            self.check_qubit(ctl.qubit)?;
            if ctl.qubit == target {
                return Err(QamError::OverlappingQubits(target));
            }
            let bit = self.bit_mask(ctl.qubit);
            if ctrl_mask & bit != 0 {
                return Err(QamError::OverlappingQubits(ctl.qubit));
            }
            ctrl_mask |= bit;
            if ctl.value {
                ctrl_val |= bit;
            }
        }
        let step = self.bit_mask(target);
        let m = gate.matrix;
        let kernel = |base: usize, chunk: &mut [C64]| {
            let (lo, hi) = chunk.split_at_mut(step);
            for k in 0..step {
                if (base + k) & ctrl_mask != ctrl_val {
                    continue;
                }
                let a = lo[k];
                let b = hi[k];
                lo[k] = m[0][0] * a + m[0][1] * b;
                hi[k] = m[1][0] * a + m[1][1] * b;
            }
        };
        if self.amplitudes.len() >= PAR_THRESHOLD {
            self.amplitudes
                .par_chunks_mut(2 * step)
                .enumerate()
                .for_each(|(i, chunk)| kernel(i * 2 * step, chunk));
        } else {
            self.amplitudes
                .chunks_mut(2 * step)
                .enumerate()
                .for_each(|(i, chunk)| kernel(i * 2 * step, chunk));
        }
        self.record.add(gate.class_for(controls.len()));
        Ok(())
    }

    /// `exp(+-i pi z / 2 scale)` where `z` counts zeros among `memory` and the
    /// sign is `-` when `control` is 1. Built from one `U` per memory qubit
    /// followed by one `CU^-2` per memory qubit.
    pub fn apply_hamming_phase(&mut self, memory: &[usize], control: usize, scale: usize) -> Result<()> {
        if memory.contains(&control) {
            return Err(QamError::OverlappingQubits(control));
        }
        if scale == 0 {
            return Err(QamError::InvalidParameter("phase scale must be positive".into()));
        }
        let u = Gate::phase_u(scale);
        let u_inv2 = Gate::phase_u_inv2(scale);
        for &q in memory {
            self.apply_1q(&u, q)?;
        }
        for &q in memory {
            self.apply_controlled(&u_inv2, &[Control::on(control)], q)?;
        }
        Ok(())
    }

    /// Adjoint of [`StateVector::apply_hamming_phase`], gate by gate.
    pub fn apply_hamming_phase_inverse(&mut self, memory: &[usize], control: usize, scale: usize) -> Result<()> {
        if memory.contains(&control) {
            return Err(QamError::OverlappingQubits(control));
        }
        if scale == 0 {
            return Err(QamError::InvalidParameter("phase scale must be positive".into()));
        }
        let u = Gate::phase_u(scale).adjoint();
        let u_inv2 = Gate::phase_u_inv2(scale).adjoint();
        for &q in memory.iter().rev() {
            self.apply_controlled(&u_inv2, &[Control::on(control)], q)?;
        }
        for &q in memory.iter().rev() {
            self.apply_1q(&u, q)?;
        }
        Ok(())
    }

    /// Flips the sign of every basis amplitude selected by `marked`. Counted
    /// as one oracle call, not as elementary gates.
    pub fn apply_sign_oracle(&mut self, marked: impl Fn(usize) -> bool + Sync) {
        let flip = |(i, a): (usize, &mut C64)| {
            if marked(i) {
                *a = -*a;
            }
        };
        if self.amplitudes.len() >= PAR_THRESHOLD {
            self.amplitudes.par_iter_mut().enumerate().for_each(flip);
        } else {
            self.amplitudes.iter_mut().enumerate().for_each(flip);
        }
        self.record.oracle_calls += 1;
    }

    /// Multiplies every amplitude by `factor` (a global phase, not a gate).
    pub fn scale(&mut self, factor: C64) {
        self.amplitudes.iter_mut().for_each(|a| *a *= factor);
    }

    fn check_qubit_set(&self, qubits: &[usize]) -> Result<()> {
        for (i, &q) in qubits.iter().enumerate() {
            self.check_qubit(q)?;
            if qubits[..i].contains(&q) {
                return Err(QamError::OverlappingQubits(q));
            }
        }
        Ok(())
    }

    /// Exact marginal probabilities of the listed qubits, indexed by the
    /// big-endian outcome value.
    pub fn marginal_distribution(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        self.check_qubit_set(qubits)?;
        if qubits.len() > self.num_qubits() {
            return Err(QamError::InvalidParameter("too many qubits".into()));
        }
        let mut probs = vec![0.0; 1usize << qubits.len()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p != 0.0 {
                probs[self.extract(i, qubits)] += p;
            }
        }
        Ok(probs)
    }

    /// Samples the listed qubits and collapses the state onto the outcome.
    pub fn measure<R: Rng + ?Sized>(&mut self, qubits: &[usize], rng: &mut R) -> Result<Measurement> {
        let probs = self.marginal_distribution(qubits)?;
        let total: f64 = probs.iter().sum();
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut value = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (v, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc && p > 0.0 {
                value = v;
                break;
            }
        }
        let probability = self.project(qubits, value)?;
        Ok(Measurement {
            bits: value_bits(value, qubits.len()),
            value,
            probability,
        })
    }

    /// Forced-outcome projection: keeps the branch where `qubits` read
    /// `outcome`, renormalizes, and returns that branch's prior probability.
    pub fn project(&mut self, qubits: &[usize], outcome: usize) -> Result<f64> {
        self.check_qubit_set(qubits)?;
        if qubits.len() < usize::BITS as usize && outcome >> qubits.len() != 0 {
            return Err(QamError::InvalidParameter(format!(
                "outcome {outcome} does not fit in {} qubits",
                qubits.len()
            )));
        }
        let mut mask = 0usize;
        let mut want = 0usize;
        for (k, &q) in qubits.iter().enumerate() {
            let bit = self.bit_mask(q);
            mask |= bit;
            if (outcome >> (qubits.len() - 1 - k)) & 1 == 1 {
                want |= bit;
            }
        }
        let prob: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if prob <= 0.0 {
            return Err(QamError::ZeroProbabilityOutcome);
        }
        let inv = 1.0 / prob.sqrt();
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == want {
                *a *= inv;
            } else {
                *a = C64::new(0.0, 0.0);
            }
        }
        Ok(prob)
    }

    /// Tensor product `self ⊗ other`; `self`'s registers become the leading
    /// (most significant) qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let offset = self.num_qubits();
        let mut registers = self.layout.registers.clone();
        registers.extend(other.layout.registers.iter().map(|r| Register {
            name: r.name.clone(),
            start: r.start + offset,
            len: r.len,
        }));
        let layout = RegisterLayout::try_from(registers)?;
        let cap = qubit_cap();
        if layout.num_qubits() > cap {
            return Err(QamError::Capacity {
                requested: layout.num_qubits(),
                cap,
            });
        }
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Ok(StateVector {
            layout,
            amplitudes,
            record: GateRecord::default(),
        })
    }

    pub fn to_json(&self) -> String {
        let doc = StateJson {
            num_qubits: self.num_qubits(),
            layout: self.layout.clone(),
            amplitudes: self.amplitudes.iter().map(|a| [a.re, a.im]).collect(),
        };
        serde_json::to_string(&doc).expect("state serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StateJson = serde_json::from_str(text)
            .map_err(|e| QamError::InvalidParameter(format!("state JSON: {e}")))?;
        if doc.num_qubits != doc.layout.num_qubits() {
            return Err(QamError::DimensionMismatch {
                left: doc.num_qubits,
                right: doc.layout.num_qubits(),
            });
        }
        let amps = doc.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        Self::from_amplitudes(doc.layout, amps)
    }
}

/// `<a|b>`, conjugate-linear in `a`.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    inner_product_raw(a.amplitudes(), b.amplitudes())
}

pub fn inner_product_raw(a: &[C64], b: &[C64]) -> Result<C64> {
    if a.len() != b.len() {
        return Err(QamError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.conj() * y).sum())
}

pub fn value_bits(value: usize, width: usize) -> Vec<u8> {
    (0..width).map(|k| ((value >> (width - 1 - k)) & 1) as u8).collect()
}

/// Rotates the global phase so the largest-magnitude amplitude (first one on
/// ties) is real and positive.
pub fn align_global_phase(amps: &[C64]) -> Vec<C64> {
    let mut best = 0;
    for (i, a) in amps.iter().enumerate() {
        if a.norm() > amps[best].norm() + 1e-14 {
            best = i;
        }
    }
    let pivot = amps.get(best).copied().unwrap_or_default();
    if pivot.norm() == 0.0 {
        return amps.to_vec();
    }
    let rot = pivot.conj() / pivot.norm();
    amps.iter().map(|a| a * rot).collect()
}

/// Max componentwise distance after aligning both vectors' global phase.
pub fn distance_up_to_phase(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    // Align `a` to `b` via their overlap so near-ties in magnitude cannot
    // pick different pivots.
    let overlap: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let rot = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x * rot - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(q: usize) -> RegisterLayout {
        RegisterLayout::new([("q", q)]).unwrap()
    }

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn zero_state_basics() {
        let s = StateVector::zero_state(layout(1)).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0), c(0.0)]);
        let s = StateVector::zero_state(layout(2)).unwrap();
        assert_eq!(s.amplitudes(), &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        let err = StateVector::zero_state_with_cap(layout(27), 26).unwrap_err();
        assert_eq!(err, QamError::Capacity { requested: 27, cap: 26 });
    }

    #[test]
    fn layout_rejects_gaps_and_duplicates() {
        let bad = vec![
            Register { name: "a".into(), start: 0, len: 2 },
            Register { name: "b".into(), start: 3, len: 1 },
        ];
        assert!(RegisterLayout::try_from(bad).is_err());
        assert!(RegisterLayout::new([("a", 1), ("a", 1)]).is_err());
        assert!(RegisterLayout::new([("a", 0)]).is_err());
        let l = RegisterLayout::new([("m", 3), ("u", 2)]).unwrap();
        assert_eq!(l.qubits("u").unwrap(), 3..5);
    }

    #[test]
    fn hadamard_and_not() {
        let mut s = StateVector::zero_state(layout(1)).unwrap();
        s.apply_1q(&Gate::hadamard(), 0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(s.amplitude(0), c(h)) && close(s.amplitude(1), c(h)));

        let mut s = StateVector::zero_state(layout(1)).unwrap();
        s.apply_1q(&Gate::not(), 0).unwrap();
        assert!(close(s.amplitude(1), c(1.0)));
        assert_eq!(s.record().count(GateClass::OneQubit), 1);
    }

    #[test]
    fn pattern_rotation_loads_pattern() {
        let pattern = [1u8, 0, 1];
        let mut s = StateVector::zero_state(layout(3)).unwrap();
        for (j, &bit) in pattern.iter().enumerate() {
            s.apply_1q(&Gate::pattern_bit(bit), j).unwrap();
        }
        assert!(close(s.amplitude(0b101), c(1.0)));
    }

    #[test]
    fn non_unitary_gate_rejected() {
        let m = [[c(1.0), c(0.1)], [c(0.0), c(1.0)]];
        assert!(matches!(Gate::new(m, GateKind::Generic), Err(QamError::NonUnitary { .. })));
        let nan = [[c(f64::NAN), c(0.0)], [c(0.0), c(1.0)]];
        assert!(Gate::new(nan, GateKind::Generic).is_err());
    }

    #[test]
    fn split_gates_are_unitary() {
        for i in 1..=64 {
            Gate::split(i).unwrap();
        }
        assert!(Gate::split(0).is_err());
    }

    #[test]
    fn controlled_truth_tables() {
        // XOR on |10> -> |11>
        let mut s = StateVector::zero_state(layout(2)).unwrap();
        s.apply_1q(&Gate::not(), 0).unwrap();
        s.apply_controlled(&Gate::not(), &[Control::on(0)], 1).unwrap();
        assert!(close(s.amplitude(0b11), c(1.0)));

        // CS^1 on |1>|0> -> -|1>|1>
        let mut s = StateVector::zero_state(layout(2)).unwrap();
        s.apply_1q(&Gate::not(), 0).unwrap();
        s.apply_controlled(&Gate::split(1).unwrap(), &[Control::on(0)], 1).unwrap();
        assert!(close(s.amplitude(0b11), c(-1.0)));
        assert_eq!(s.record().count(GateClass::ControlledS), 1);

        // Toffoli on |110> -> |111>
        let mut s = StateVector::zero_state(layout(3)).unwrap();
        s.apply_1q(&Gate::not(), 0).unwrap();
        s.apply_1q(&Gate::not(), 1).unwrap();
        s.apply_controlled(&Gate::not(), &[Control::on(0), Control::on(1)], 2).unwrap();
        assert!(close(s.amplitude(0b111), c(1.0)));
        assert_eq!(s.record().count(GateClass::Toffoli), 1);
    }

    #[test]
    fn controlled_rejects_overlap() {
        let mut s = StateVector::zero_state(layout(2)).unwrap();
        let err = s.apply_controlled(&Gate::not(), &[Control::on(1)], 1).unwrap_err();
        assert_eq!(err, QamError::OverlappingQubits(1));
        assert!(s.apply_1q(&Gate::not(), 2).is_err());
    }

    #[test]
    fn hamming_phase_examples() {
        // n = 2, memory 00, control 0 -> i
        let mut s = StateVector::zero_state(layout(3)).unwrap();
        s.apply_hamming_phase(&[0, 1], 2, 2).unwrap();
        assert!(close(s.amplitude(0), C64::new(0.0, 1.0)));
        assert_eq!(s.record().total(), 4);

        // control 1 -> -i
        let mut s = StateVector::zero_state(layout(3)).unwrap();
        s.apply_1q(&Gate::not(), 2).unwrap();
        s.apply_hamming_phase(&[0, 1], 2, 2).unwrap();
        assert!(close(s.amplitude(0b001), C64::new(0.0, -1.0)));

        // memory all ones -> no phase
        let mut s = StateVector::zero_state(layout(3)).unwrap();
        s.apply_1q(&Gate::not(), 0).unwrap();
        s.apply_1q(&Gate::not(), 1).unwrap();
        s.apply_hamming_phase(&[0, 1], 2, 2).unwrap();
        assert!(close(s.amplitude(0b110), c(1.0)));
    }

    #[test]
    fn measurement_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = StateVector::zero_state(layout(2)).unwrap();
        s.apply_1q(&Gate::not(), 1).unwrap();
        let m = s.measure(&[0, 1], &mut rng).unwrap();
        assert_eq!(m.bits, vec![0, 1]);
        assert!((m.probability - 1.0).abs() < 1e-12);

        let mut bell = StateVector::zero_state(layout(2)).unwrap();
        bell.apply_1q(&Gate::hadamard(), 0).unwrap();
        bell.apply_controlled(&Gate::not(), &[Control::on(0)], 1).unwrap();
        let mut seen = [false; 2];
        for seed in 0..32 {
            let mut b = bell.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = b.measure(&[0], &mut rng).unwrap();
            assert!((m.probability - 0.5).abs() < 1e-12);
            let expect = if m.value == 0 { 0b00 } else { 0b11 };
            assert!(close(b.amplitude(expect), c(1.0)));
            seen[m.value] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn measurement_is_deterministic_under_seed() {
        let mut s = StateVector::zero_state(layout(3)).unwrap();
        for q in 0..3 {
            s.apply_1q(&Gate::hadamard(), q).unwrap();
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| s.clone().measure(&[0, 1, 2], &mut rng).unwrap().value)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn forced_projection_on_zero_branch_fails() {
        let mut s = StateVector::zero_state(layout(2)).unwrap();
        assert_eq!(s.project(&[0], 1).unwrap_err(), QamError::ZeroProbabilityOutcome);
    }

    #[test]
    fn marginals() {
        let s = StateVector::zero_state(layout(1)).unwrap();
        assert_eq!(s.marginal_distribution(&[0]).unwrap(), vec![1.0, 0.0]);
        let mut s = StateVector::zero_state(layout(1)).unwrap();
        s.apply_1q(&Gate::hadamard(), 0).unwrap();
        let m = s.marginal_distribution(&[0]).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inner_products() {
        let zero = StateVector::zero_state(layout(1)).unwrap();
        let mut one = zero.clone();
        one.apply_1q(&Gate::not(), 0).unwrap();
        assert!(close(inner_product(&zero, &one).unwrap(), c(0.0)));
        assert!(close(inner_product(&one, &one).unwrap(), c(1.0)));
        let two = StateVector::zero_state(layout(2)).unwrap();
        assert!(inner_product(&zero, &two).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut s = StateVector::zero_state(RegisterLayout::new([("m", 2), ("u", 1)]).unwrap()).unwrap();
        s.apply_1q(&Gate::hadamard(), 0).unwrap();
        s.apply_hamming_phase(&[0, 1], 2, 3).unwrap();
        let back = StateVector::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn phase_alignment() {
        let amps = vec![C64::new(0.0, 0.6), C64::new(0.0, -0.8)];
        let aligned = align_global_phase(&amps);
        assert!(close(aligned[1], c(0.8)));
        let other: Vec<C64> = amps.iter().map(|a| a * C64::from_polar(1.0, 1.234)).collect();
        assert!(distance_up_to_phase(&amps, &other) < 1e-12);
    }
}
