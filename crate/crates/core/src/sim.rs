//! Sparse statevector simulation with mid-circuit measurement and classical control.

use crate::model::{Circuit, Gate, GateKind, QubitId};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;
use thiserror::Error;

pub const DEFAULT_CAP: usize = 1 << 16;
const PRUNE: f64 = 1e-24;

type Key = Box<[u64]>;
type Amps = HashMap<Key, Complex64, BuildHasherDefault<DefaultHasher>>;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("forced outcome for record slot {slot} has zero probability")]
    ImpossibleOutcome { slot: usize },
    #[error("{count} nonzero amplitudes exceed the cap of {cap}")]
    SparsityExceeded { count: usize, cap: usize },
    #[error("remaining qubits are entangled with the compared subset")]
    NotSeparable,
    #[error("layer {layer} is conditioned on a bit measured in the same or a later layer")]
    ConditionOrder { layer: usize },
    #[error("forced outcome vector has {got} bits, circuit records {expected}")]
    ForcedLength { expected: usize, got: usize },
    #[error("qubit {0} is not in |0> and cannot be prepared")]
    NotFresh(QubitId),
    #[error("reference state must have {expected} amplitudes")]
    ReferenceShape { expected: usize },
}

/// How measurement outcomes are chosen.
#[derive(Clone, Debug)]
pub enum Outcomes {
    Seed(u64),
    /// One bit per record slot.
    Forced(Vec<bool>),
}

#[derive(Clone, Debug)]
pub struct SimState {
    width: usize,
    amps: Amps,
    pub record: Vec<bool>,
    cap: usize,
}

fn get(k: &[u64], q: usize) -> bool {
    (k[q / 64] >> (q % 64)) & 1 == 1
}

fn flip(k: &mut [u64], q: usize) {
    k[q / 64] ^= 1 << (q % 64);
}

impl SimState {
    /// All qubits in |0>.
    pub fn zero(width: usize) -> SimState {
        let mut amps = Amps::default();
        amps.insert(vec![0u64; width.div_ceil(64).max(1)].into_boxed_slice(), Complex64::new(1.0, 0.0));
        SimState { width, amps, record: Vec::new(), cap: DEFAULT_CAP }
    }

    pub fn with_cap(mut self, cap: usize) -> SimState {
        self.cap = cap;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of nonzero amplitudes.
    pub fn support(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Sets a qubit currently in |0> to a basis value.
    pub fn set_basis(&mut self, q: QubitId, bit: bool) -> Result<(), SimError> {
        if self.bit(q) != Some(false) {
            return Err(SimError::NotFresh(q));
        }
        if bit {
            self.remap(|k| flip(k, q));
        }
        Ok(())
    }

    /// Sets a qubit currently in |0> to alpha|0> + beta|1>.
    pub fn prepare(&mut self, q: QubitId, alpha: Complex64, beta: Complex64) -> Result<(), SimError> {
        if self.bit(q) != Some(false) {
            return Err(SimError::NotFresh(q));
        }
        let mut next = Amps::default();
        for (k, a) in self.amps.drain() {
            let mut k1 = k.clone();
            flip(&mut k1, q);
            if (a * alpha).norm_sqr() > PRUNE {
                next.insert(k, a * alpha);
            }
            if (a * beta).norm_sqr() > PRUNE {
                next.insert(k1, a * beta);
            }
        }
        self.amps = next;
        self.check_cap()
    }

    /// The value of `q` if every basis state agrees on it.
    pub fn bit(&self, q: QubitId) -> Option<bool> {
        let mut it = self.amps.keys().map(|k| get(k, q));
        let first = it.next()?;
        it.all(|b| b == first).then_some(first)
    }

    /// Amplitudes as (basis bits of `qubits`, amplitude), for inspection.
    pub fn amplitudes(&self, qubits: &[QubitId]) -> Vec<(Vec<bool>, Complex64)> {
        let mut out: Vec<_> =
            self.amps.iter().map(|(k, a)| (qubits.iter().map(|&q| get(k, q)).collect::<Vec<_>>(), *a)).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    fn remap(&mut self, f: impl Fn(&mut [u64])) {
        let old = std::mem::take(&mut self.amps);
        for (mut k, a) in old {
            f(&mut k);
            self.amps.insert(k, a);
        }
    }

    fn phase(&mut self, q: QubitId, p: Complex64) {
        for (k, a) in self.amps.iter_mut() {
            if get(k, q) {
                *a *= p;
            }
        }
    }

    fn check_cap(&self) -> Result<(), SimError> {
        if self.amps.len() > self.cap {
            return Err(SimError::SparsityExceeded { count: self.amps.len(), cap: self.cap });
        }
        Ok(())
    }

    fn hadamard(&mut self, q: QubitId) -> Result<(), SimError> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut next = Amps::default();
        for (k, a) in self.amps.drain() {
            let one = get(&k, q);
            let mut k0 = k.clone();
            if one {
                flip(&mut k0, q);
            }
            let mut k1 = k0.clone();
            flip(&mut k1, q);
            *next.entry(k0).or_default() += a * s;
            *next.entry(k1).or_default() += if one { -a * s } else { a * s };
        }
        next.retain(|_, a| a.norm_sqr() > PRUNE);
        self.amps = next;
        self.check_cap()
    }

    fn measure(&mut self, q: QubitId, slot: usize, choose: &mut Chooser) -> Result<bool, SimError> {
        let p1: f64 = self.amps.iter().filter(|(k, _)| get(k, q)).map(|(_, a)| a.norm_sqr()).sum();
        let total = self.norm();
        let p1 = (p1 / total).clamp(0.0, 1.0);
        let bit = match choose {
            Chooser::Rng(r) => r.gen::<f64>() < p1,
            Chooser::Forced(v) => v[slot],
        };
        let p = if bit { p1 } else { 1.0 - p1 };
        if p < 1e-12 {
            return Err(SimError::ImpossibleOutcome { slot });
        }
        self.amps.retain(|k, _| get(k, q) == bit);
        let scale = 1.0 / (p * total).sqrt();
        for a in self.amps.values_mut() {
            *a *= scale;
        }
        Ok(bit)
    }

    fn apply(&mut self, g: &Gate, choose: &mut Chooser) -> Result<(), SimError> {
        if g.kind.is_unitary() && !g.cond.eval(&self.record) {
            return Ok(());
        }
        let q = g.qubits[0];
        let w = std::f64::consts::FRAC_1_SQRT_2;
        match g.kind {
            GateKind::X => self.remap(|k| flip(k, q)),
            GateKind::Z => self.phase(q, Complex64::new(-1.0, 0.0)),
            GateKind::T => self.phase(q, Complex64::new(w, w)),
            GateKind::Tdg => self.phase(q, Complex64::new(w, -w)),
            GateKind::H => self.hadamard(q)?,
            GateKind::CNOT => {
                let t = g.qubits[1];
                self.remap(|k| {
                    if get(k, q) {
                        flip(k, t)
                    }
                })
            }
            GateKind::Teleport => {
                let t = g.qubits[1];
                self.remap(|k| {
                    if get(k, q) != get(k, t) {
                        flip(k, q);
                        flip(k, t);
                    }
                })
            }
            GateKind::MeasureZ => {
                let slot = g.slot.expect("measurement has a slot");
                let bit = self.measure(q, slot, choose)?;
                if self.record.len() <= slot {
                    self.record.resize(slot + 1, false);
                }
                self.record[slot] = bit;
            }
        }
        Ok(())
    }

    /// |<ref|psi_subset>|^2 where basis index bit i is the value of `subset[i]`.
    /// Fails unless the rest of the register factors out.
    pub fn fidelity(&self, subset: &[QubitId], reference: &[Complex64]) -> Result<f64, SimError> {
        let dim = 1usize << subset.len();
        if reference.len() != dim {
            return Err(SimError::ReferenceShape { expected: dim });
        }
        let mut rows: HashMap<Key, Vec<Complex64>, BuildHasherDefault<DefaultHasher>> = HashMap::default();
        for (k, a) in &self.amps {
            let mut rest = k.clone();
            let mut idx = 0usize;
            for (i, &q) in subset.iter().enumerate() {
                if get(k, q) {
                    idx |= 1 << i;
                    flip(&mut rest, q);
                }
            }
            rows.entry(rest).or_insert_with(|| vec![Complex64::default(); dim])[idx] += a;
        }
        let norm = |v: &[Complex64]| v.iter().map(|a| a.norm_sqr()).sum::<f64>();
        let pivot = rows
            .values()
            .max_by(|a, b| norm(a).partial_cmp(&norm(b)).expect("finite"))
            .expect("nonempty state")
            .clone();
        let pn = norm(&pivot);
        for row in rows.values() {
            let c: Complex64 = pivot.iter().zip(row).map(|(p, r)| p.conj() * r).sum::<Complex64>() / pn;
            let resid: f64 = pivot.iter().zip(row).map(|(p, r)| (r - c * p).norm_sqr()).sum();
            if resid > 1e-18 * pn.max(1.0) {
                return Err(SimError::NotSeparable);
            }
        }
        let rn = norm(reference);
        let overlap: Complex64 = reference.iter().zip(&pivot).map(|(r, p)| r.conj() * p).sum();
        Ok(overlap.norm_sqr() / (rn * pn))
    }
}

enum Chooser {
    Rng(ChaCha8Rng),
    Forced(Vec<bool>),
}

/// Runs `c` from all-|0> with the given basis inputs.
pub fn run(c: &Circuit, initial: &[(QubitId, bool)], outcomes: Outcomes) -> Result<SimState, SimError> {
    let mut s = SimState::zero(c.qubits.len());
    for &(q, b) in initial {
        s.set_basis(q, b)?;
    }
    run_from(c, s, outcomes)
}

/// Runs `c` on a prepared state.
pub fn run_from(c: &Circuit, mut s: SimState, outcomes: Outcomes) -> Result<SimState, SimError> {
    let mut choose = match outcomes {
        Outcomes::Seed(seed) => Chooser::Rng(ChaCha8Rng::seed_from_u64(seed)),
        Outcomes::Forced(v) => {
            if v.len() != c.record_size {
                return Err(SimError::ForcedLength { expected: c.record_size, got: v.len() });
            }
            Chooser::Forced(v)
        }
    };
    let written = c.slot_layers();
    s.record.resize(c.record_size.max(s.record.len()), false);
    for (li, layer) in c.layers.iter().enumerate() {
        for g in &layer.gates {
            if g.cond.bits.iter().any(|&b| written[b] >= li) {
                return Err(SimError::ConditionOrder { layer: li });
            }
        }
        for g in &layer.gates {
            s.apply(g, &mut choose)?;
        }
        debug_assert!((s.norm() - 1.0).abs() < 1e-9, "norm drift in layer {li}");
    }
    Ok(s)
}

/// Every outcome vector over `slots` measurement bits, for exhaustive branch checks.
pub fn all_outcomes(slots: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..(1u64 << slots)).map(move |m| (0..slots).map(|i| (m >> i) & 1 == 1).collect())
}

#[derive(Debug, Error)]
pub enum SemanticError {
    #[error("block {0} has no classical semantics")]
    Unregistered(String),
    #[error("expected {expected} input values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error(transparent)]
    Mult(#[from] crate::mult::MultError),
}

/// Evaluates a block on classical basis values; teleports are value-preserving
/// moves. Adders take (a, b, c) and multipliers (x, y) or (x.u, x.v, y.u, y.v),
/// both returning (u, v). Addition trees take their numbers and return (u, v).
/// Modular exponentiation takes the packed control bits and returns a^x mod m.
pub fn run_semantic(h: &crate::hier::HierCircuit, inputs: &[u128]) -> Result<Vec<u128>, SemanticError> {
    use crate::arith::CarrySaveNumber;
    use crate::hier::Semantic;
    let arity = |expected: usize| {
        if inputs.len() == expected {
            Ok(())
        } else {
            Err(SemanticError::Arity { expected, got: inputs.len() })
        }
    };
    match h.semantic.clone().ok_or_else(|| SemanticError::Unregistered(h.name.clone()))? {
        Semantic::Adder { n, m } => {
            arity(3)?;
            let r = crate::oracle::oracle_modular_adder(inputs[0], inputs[1], inputs[2], n, m);
            Ok(vec![r.u_value(), r.v_value()])
        }
        Semantic::Multiplier { n, m } => {
            let (x, y) = match inputs.len() {
                2 => (CarrySaveNumber { u: inputs[0], v: 0 }, CarrySaveNumber { u: inputs[1], v: 0 }),
                _ => {
                    arity(4)?;
                    (CarrySaveNumber { u: inputs[0], v: inputs[1] }, CarrySaveNumber { u: inputs[2], v: inputs[3] })
                }
            };
            let r = crate::mult::semantic_multiply(&x, &y, n, m)?;
            Ok(vec![r.u, r.v])
        }
        Semantic::Mma { n, m, count } => {
            arity(count)?;
            let r = crate::mult::MmaPlan::new(count)?.evaluate(inputs, n, m);
            Ok(vec![r.u, r.v])
        }
        Semantic::ModExp { n, m, a, t } => {
            arity(1)?;
            let plan = crate::modexp::ModExpPlan::new(n, m, a, t)?;
            Ok(vec![crate::modexp::semantic_modexp(&plan, inputs[0])? as u128])
        }
    }
}
