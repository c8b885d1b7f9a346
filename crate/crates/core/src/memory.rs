//! Building the memory superposition `|m> = p^{-1/2} sum_i |p^i>`.
//!
//! Three independent routes produce the same state: the closed form, the
//! sequential storage circuit (pattern register, two utility qubits, memory
//! register) and the memory operator `M` acting on `|0...0;00>`. The dual
//! state with alternating signs and the probabilistic-cloning bound derived
//! from its overlap with `|m>` live here as well.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{QamError, Result};
use crate::qsim::{Control, Gate, GateRecord, RegisterLayout, StateVector, C64};

/// Largest pattern width the full-register storage circuit accepts.
pub const FULL_REGISTER_MAX_N: usize = 8;

/// Fixed-width binary string.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Pattern {
    bits: Vec<u8>,
}

impl Pattern {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(QamError::InvalidPattern("pattern must have at least one bit".into()));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(QamError::InvalidPattern(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Self { bits })
    }

    /// Pattern whose big-endian value is `value`.
    pub fn from_index(value: usize, width: usize) -> Self {
        Self {
            bits: crate::qsim::value_bits(value, width),
        }
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, j: usize) -> u8 {
        self.bits[j]
    }

    /// Big-endian value, i.e. the basis index of `|pattern>` in an n-qubit register.
    pub fn to_index(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

impl FromStr for Pattern {
    type Err = QamError;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(QamError::InvalidPattern(format!("unexpected character '{other}' in '{s}'"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Pattern::new(bits)
    }
}

impl TryFrom<String> for Pattern {
    type Error = QamError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Pattern> for String {
    fn from(p: Pattern) -> Self {
        p.to_string()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// An ordered set of distinct, equal-width patterns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryModel {
    n: usize,
    patterns: Vec<Pattern>,
}

impl MemoryModel {
    pub fn new(patterns: Vec<Pattern>) -> Result<Self> {
        let first = patterns.first().ok_or(QamError::EmptyModel)?;
        let n = first.width();
        let mut seen = HashSet::with_capacity(patterns.len());
        for (index, p) in patterns.iter().enumerate() {
            if p.width() != n {
                return Err(QamError::WidthMismatch {
                    expected: n,
                    found: p.width(),
                });
            }
            if !seen.insert(p) {
                return Err(QamError::DuplicatePattern {
                    index,
                    pattern: p.to_string(),
                });
            }
        }
        Ok(Self { n, patterns })
    }

    /// Parses the pattern file format: one pattern of '0'/'1' per line, blank
    /// lines and '#' comments ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let patterns = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim())
            .filter(|line| !line.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Pattern>>>()?;
        Self::new(patterns)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.patterns.len()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn contains(&self, pattern: &Pattern) -> bool {
        self.patterns.contains(pattern)
    }

    pub fn to_file_string(&self) -> String {
        self.patterns.iter().map(|p| format!("{p}\n")).collect()
    }
}

/// Which superposition a storage circuit writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoredSigns {
    /// `|m>`: every pattern with amplitude `+1/sqrt(p)`.
    Memory,
    /// `|d>`: pattern `i` (1-based) with amplitude `(-1)^{i+1}/sqrt(p)`.
    Dual,
}

/// Output of a storage circuit.
#[derive(Clone, Debug)]
pub struct Stored {
    pub state: StateVector,
    pub record: GateRecord,
}

fn memory_layout(n: usize) -> Result<RegisterLayout> {
    RegisterLayout::new([("m", n)])
}

fn storage_layout(n: usize) -> Result<RegisterLayout> {
    RegisterLayout::new([("m", n), ("u", 2)])
}

fn signed_state(model: &MemoryModel, signs: StoredSigns) -> Result<StateVector> {
    let n = model.n();
    let mut amps = vec![C64::new(0.0, 0.0); 1usize << n];
    let a = 1.0 / (model.p() as f64).sqrt();
    for (i, p) in model.patterns().iter().enumerate() {
        let sign = match signs {
            StoredSigns::Dual if i % 2 == 1 => -1.0,
            _ => 1.0,
        };
        amps[p.to_index()] = C64::new(sign * a, 0.0);
    }
    StateVector::from_amplitudes(memory_layout(n)?, amps)
}

/// Closed-form `|m>` over an n-qubit register named `m`.
pub fn memory_state_analytic(model: &MemoryModel) -> Result<StateVector> {
    signed_state(model, StoredSigns::Memory)
}

/// Closed-form `|d> = p^{-1/2} sum_i (-1)^{i+1} |p^i>`.
pub fn dual_state(model: &MemoryModel) -> Result<StateVector> {
    signed_state(model, StoredSigns::Dual)
}

/// `|m> ⊗ |00>_u`, the expected output of the storage circuits.
pub fn memory_with_utility(model: &MemoryModel) -> Result<StateVector> {
    let u = StateVector::zero_state(RegisterLayout::new([("u", 2)])?)?;
    memory_state_analytic(model)?.tensor(&u)
}

fn split_gate(k: usize, round: usize, signs: StoredSigns) -> Result<Gate> {
    let s = Gate::split(k)?;
    Ok(match signs {
        StoredSigns::Dual if round.is_multiple_of(2) => s.adjoint(),
        _ => s,
    })
}

/// Sequential storage with the pattern register compiled to classical
/// control, over layout `[m:n, u:2]`. Ends in `|m;00>` (or `|d;00>`).
pub fn store_sequential(model: &MemoryModel) -> Result<Stored> {
    sequential_classical(model, StoredSigns::Memory, None)
}

/// Like [`store_sequential`] but also returns the state after each pattern's
/// splitting round, just before the processing term's memory is cleared.
pub fn store_sequential_traced(model: &MemoryModel) -> Result<(Stored, Vec<StateVector>)> {
    let mut trace = Vec::with_capacity(model.p());
    let stored = sequential_classical(model, StoredSigns::Memory, Some(&mut trace))?;
    Ok((stored, trace))
}

/// Dual state written by the storage circuit, alternating `S^k` and `(S^k)^-1`.
pub fn dual_state_circuit(model: &MemoryModel) -> Result<Stored> {
    sequential_classical(model, StoredSigns::Dual, None)
}

fn sequential_classical(
    model: &MemoryModel,
    signs: StoredSigns,
    mut trace: Option<&mut Vec<StateVector>>,
) -> Result<Stored> {
    let n = model.n();
    let p = model.p();
    let (u1, u2) = (n, n + 1);
    let mem: Vec<usize> = (0..n).collect();
    let mut state = StateVector::zero_state(storage_layout(n)?)?;
    let not = Gate::not();

    // utility register starts in |01>
    state.apply_1q(&not, u2)?;
    for (idx, pattern) in model.patterns().iter().enumerate() {
        let round = idx + 1;
        let bits = pattern.bits();
        // copy the pattern into the processing term
        for (j, &bit) in bits.iter().enumerate() {
            if bit == 1 {
                state.apply_controlled(&not, &[Control::on(u2)], j)?;
            }
        }
        // m_j <- NOT(m_j XOR p_j): all ones exactly on the processing term
        for (j, &bit) in bits.iter().enumerate() {
            if bit == 0 {
                state.apply_1q(&not, j)?;
            }
        }
        let all_ones: Vec<Control> = mem.iter().map(|&q| Control::on(q)).collect();
        state.apply_controlled(&not, &all_ones, u1)?;
        state.apply_controlled(&split_gate(p + 1 - round, round, signs)?, &[Control::on(u1)], u2)?;
        state.apply_controlled(&not, &all_ones, u1)?;
        for j in (0..n).rev() {
            if bits[j] == 0 {
                state.apply_1q(&not, j)?;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(state.clone());
        }
        // clear the processing term's memory register
        for j in (0..n).rev() {
            if bits[j] == 1 {
                state.apply_controlled(&not, &[Control::on(u2)], j)?;
            }
        }
    }
    let record = state.take_record();
    Ok(Stored { state, record })
}

/// Literal sequential circuit with a quantum pattern register, layout
/// `[p:n, u:2, m:n]`. Returns the full `2n+2` qubit state, which ends as
/// `|p^last; 00; m>`. Limited to `n <= 8`.
pub fn store_sequential_full_register(model: &MemoryModel) -> Result<Stored> {
    let n = model.n();
    if n > FULL_REGISTER_MAX_N {
        return Err(QamError::InvalidParameter(format!(
            "full-register storage supports n <= {FULL_REGISTER_MAX_N}, got {n}"
        )));
    }
    let p = model.p();
    let layout = RegisterLayout::new([("p", n), ("u", 2), ("m", n)])?;
    let mut state = StateVector::zero_state(layout)?;
    let (u1, u2) = (n, n + 1);
    let preg = |j: usize| j;
    let mreg = |j: usize| n + 2 + j;
    let not = Gate::not();
    let mem_controls: Vec<Control> = (0..n).map(|j| Control::on(mreg(j))).collect();

    state.apply_1q(&not, u2)?;
    let mut loaded = vec![0u8; n];
    for (idx, pattern) in model.patterns().iter().enumerate() {
        let round = idx + 1;
        // load the next classical pattern into register p
        for (j, &have) in loaded.iter().enumerate() {
            if have != pattern.bit(j) {
                state.apply_1q(&not, preg(j))?;
            }
        }
        loaded.copy_from_slice(pattern.bits());

        for j in 0..n {
            state.apply_controlled(&not, &[Control::on(preg(j)), Control::on(u2)], mreg(j))?;
        }
        for j in 0..n {
            state.apply_controlled(&not, &[Control::on(preg(j))], mreg(j))?;
            state.apply_1q(&not, mreg(j))?;
        }
        state.apply_controlled(&not, &mem_controls, u1)?;
        state.apply_controlled(&Gate::split(p + 1 - round)?, &[Control::on(u1)], u2)?;
        state.apply_controlled(&not, &mem_controls, u1)?;
        for j in (0..n).rev() {
            state.apply_1q(&not, mreg(j))?;
            state.apply_controlled(&not, &[Control::on(preg(j))], mreg(j))?;
        }
        for j in (0..n).rev() {
            state.apply_controlled(&not, &[Control::on(preg(j)), Control::on(u2)], mreg(j))?;
        }
    }
    let record = state.take_record();
    Ok(Stored { state, record })
}

/// Number of elementary gates in `M`: `p(2n+3) + 1`.
pub fn memory_operator_gate_count(n: usize, p: usize) -> u64 {
    (p * (2 * n + 3) + 1) as u64
}

/// The memory operator `M` with `M |0...0;00> = |m;00>`, acting on chosen
/// memory and utility qubits of a larger state.
///
/// Per pattern `i` (in order): `CP^i` controlled on `u2`, `XOR(u2 -> u1)`,
/// `CS^{p+1-i}(u1 -> u2)`, a flip of `u1` conditioned on the memory register
/// holding `p^i`, and `(CP^i)^-1` controlled on `u2`. A single `NOT(u2)`
/// opens the processing branch before the first pattern.
#[derive(Clone, Debug)]
pub struct MemoryOperator<'a> {
    model: &'a MemoryModel,
    memory: Vec<usize>,
    u1: usize,
    u2: usize,
}

impl<'a> MemoryOperator<'a> {
    pub fn new(model: &'a MemoryModel, memory: Vec<usize>, u1: usize, u2: usize) -> Result<Self> {
        if memory.len() != model.n() {
            return Err(QamError::WidthMismatch {
                expected: model.n(),
                found: memory.len(),
            });
        }
        Ok(Self { model, memory, u1, u2 })
    }

    /// Operator on the standard `[m:n, u:2]` layout.
    pub fn standard(model: &'a MemoryModel) -> Self {
        let n = model.n();
        Self {
            model,
            memory: (0..n).collect(),
            u1: n,
            u2: n + 1,
        }
    }

    fn load(&self, state: &mut StateVector, pattern: &Pattern, inverse: bool) -> Result<()> {
        for (j, &q) in self.memory.iter().enumerate() {
            let g = Gate::pattern_bit(pattern.bit(j));
            let g = if inverse { g.adjoint() } else { g };
            state.apply_controlled(&g, &[Control::on(self.u2)], q)?;
        }
        Ok(())
    }

    fn match_controls(&self, pattern: &Pattern) -> Vec<Control> {
        self.memory
            .iter()
            .zip(pattern.bits())
            .map(|(&q, &b)| Control { qubit: q, value: b == 1 })
            .collect()
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        let p = self.model.p();
        let not = Gate::not();
        state.apply_1q(&not, self.u2)?;
        for (idx, pattern) in self.model.patterns().iter().enumerate() {
            let k = p - idx;
            self.load(state, pattern, false)?;
            state.apply_controlled(&not, &[Control::on(self.u2)], self.u1)?;
            state.apply_controlled(&Gate::split(k)?, &[Control::on(self.u1)], self.u2)?;
            state.apply_controlled(&not, &self.match_controls(pattern), self.u1)?;
            self.load(state, pattern, true)?;
        }
        Ok(())
    }

    /// `M^-1`: the gate sequence reversed with every gate adjointed.
    pub fn apply_inverse(&self, state: &mut StateVector) -> Result<()> {
        let p = self.model.p();
        let not = Gate::not();
        for (idx, pattern) in self.model.patterns().iter().enumerate().rev() {
            let k = p - idx;
            self.load(state, pattern, false)?;
            state.apply_controlled(&not, &self.match_controls(pattern), self.u1)?;
            state.apply_controlled(&Gate::split(k)?.adjoint(), &[Control::on(self.u1)], self.u2)?;
            state.apply_controlled(&not, &[Control::on(self.u2)], self.u1)?;
            self.load(state, pattern, true)?;
        }
        state.apply_1q(&not, self.u2)?;
        Ok(())
    }
}

/// `M |0...0;00>` over `[m:n, u:2]`.
pub fn apply_memory_operator_to_zero(model: &MemoryModel) -> Result<Stored> {
    let mut state = StateVector::zero_state(storage_layout(model.n())?)?;
    MemoryOperator::standard(model).apply(&mut state)?;
    let record = state.take_record();
    Ok(Stored { state, record })
}

/// Applies `M` to an arbitrary state over `[m:n, u:2]`.
pub fn apply_memory_operator(model: &MemoryModel, state: &mut StateVector) -> Result<()> {
    let expected = 1usize << (model.n() + 2);
    if state.dim() != expected {
        return Err(QamError::DimensionMismatch {
            left: state.dim(),
            right: expected,
        });
    }
    MemoryOperator::standard(model).apply(state)
}

/// Exact `<d|m>`: `0` for even `p`, `1/p` for odd `p`.
pub fn dual_memory_overlap(model: &MemoryModel) -> f64 {
    let p = model.p();
    let signed: i64 = (0..p).map(|i| if i % 2 == 0 { 1 } else { -1 }).sum();
    signed as f64 / p as f64
}

/// Upper bound `2 / (1 + <d|m>)` on the sum of the two cloning efficiencies.
pub fn cloning_bound(model: &MemoryModel) -> f64 {
    2.0 / (1.0 + dual_memory_overlap(model))
}
