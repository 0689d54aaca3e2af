//! Layered circuit representation for the 2D CCNTC/CCNTCM models.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// Current circuit file format version. Loaders accept any minor of this major.
pub const SCHEMA_VERSION: &str = "1.0";

pub type QubitId = usize;
pub type ModuleId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    X,
    Z,
    H,
    T,
    Tdg,
    CNOT,
    MeasureZ,
    Teleport,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::CNOT | GateKind::Teleport => 2,
            _ => 1,
        }
    }

    pub fn dagger(self) -> GateKind {
        match self {
            GateKind::T => GateKind::Tdg,
            GateKind::Tdg => GateKind::T,
            k => k,
        }
    }

    pub fn is_unitary(self) -> bool {
        !matches!(self, GateKind::MeasureZ | GateKind::Teleport)
    }
}

/// XOR of measurement record bits plus a constant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParityExpr {
    pub bits: Vec<usize>,
    #[serde(rename = "const")]
    pub constant: bool,
}

impl Default for ParityExpr {
    fn default() -> Self {
        ParityExpr::always()
    }
}

impl ParityExpr {
    pub fn always() -> Self {
        ParityExpr { bits: Vec::new(), constant: true }
    }

    pub fn never() -> Self {
        ParityExpr { bits: Vec::new(), constant: false }
    }

    pub fn bit(b: usize) -> Self {
        ParityExpr { bits: vec![b], constant: false }
    }

    /// Parity of the given bits; repeated bits cancel.
    pub fn of<I: IntoIterator<Item = usize>>(bits: I) -> Self {
        let mut p = ParityExpr::never();
        for b in bits {
            p.toggle(b);
        }
        p
    }

    pub fn toggle(&mut self, b: usize) {
        match self.bits.binary_search(&b) {
            Ok(i) => {
                self.bits.remove(i);
            }
            Err(i) => self.bits.insert(i, b),
        }
    }

    pub fn xor(&self, other: &ParityExpr) -> ParityExpr {
        let mut p = self.clone();
        for &b in &other.bits {
            p.toggle(b);
        }
        p.constant ^= other.constant;
        p
    }

    pub fn eval(&self, record: &[bool]) -> bool {
        self.bits.iter().fold(self.constant, |acc, &b| acc ^ record[b])
    }

    pub fn is_always(&self) -> bool {
        self.bits.is_empty() && self.constant
    }

    pub fn is_never(&self) -> bool {
        self.bits.is_empty() && !self.constant
    }

    pub fn max_bit(&self) -> Option<usize> {
        self.bits.last().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<QubitId>,
    #[serde(default)]
    pub cond: ParityExpr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[QubitId]) -> Gate {
        Gate { kind, qubits: qubits.to_vec(), cond: ParityExpr::always(), slot: None }
    }

    pub fn when(mut self, cond: ParityExpr) -> Gate {
        self.cond = cond;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Intra,
    Teleport,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub gates: Vec<Gate>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Module {
    pub id: ModuleId,
    pub extent: [i32; 2],
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qubit {
    pub module: ModuleId,
    pub index: usize,
    pub coord: [i32; 2],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("gates in layer {layer} overlap on qubit {qubit}")]
    ConcurrencyViolation { layer: usize, qubit: QubitId },
    #[error("layer {layer} mixes teleport and intra-module gates")]
    TimestepKindViolation { layer: usize },
    #[error("{kind:?} expects {expected} qubits, got {got}")]
    Arity { kind: GateKind, expected: usize, got: usize },
    #[error("qubit {0} is not declared")]
    UnknownQubit(QubitId),
    #[error("module {0} is not declared")]
    UnknownModule(ModuleId),
    #[error("coordinate {coord:?} already occupied in module {module}")]
    CoordinateTaken { module: ModuleId, coord: [i32; 2] },
    #[error("condition references record bit {bit} not yet measured")]
    ConditionNotReady { bit: usize },
    #[error("unsupported schema version {0}")]
    SchemaVersion(String),
    #[error("malformed circuit file: {0}")]
    Malformed(String),
}

/// The six counted resources.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    #[serde(rename = "D")]
    pub depth: u64,
    #[serde(rename = "S")]
    pub size: u64,
    #[serde(rename = "W")]
    pub width: u64,
    #[serde(rename = "Dbar")]
    pub module_depth: u64,
    #[serde(rename = "Sbar")]
    pub module_size: u64,
    #[serde(rename = "Wbar")]
    pub module_width: u64,
}

impl ResourceReport {
    pub fn dsw(depth: u64, size: u64, width: u64) -> Self {
        ResourceReport { depth, size, width, ..Default::default() }
    }

    pub fn with_modules(mut self, module_depth: u64, module_size: u64, module_width: u64) -> Self {
        self.module_depth = module_depth;
        self.module_size = module_size;
        self.module_width = module_width;
        self
    }

    /// D ≤ S ≤ D·W.
    pub fn is_consistent(&self) -> bool {
        self.depth <= self.size && self.size <= self.depth * self.width
    }

    pub fn metrics(&self) -> [(&'static str, u64); 6] {
        [
            ("D", self.depth),
            ("S", self.size),
            ("W", self.width),
            ("Dbar", self.module_depth),
            ("Sbar", self.module_size),
            ("Wbar", self.module_width),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub version: String,
    pub modules: Vec<Module>,
    pub qubits: Vec<Qubit>,
    pub layers: Vec<Layer>,
    pub record_size: usize,
}

impl Default for Circuit {
    fn default() -> Self {
        Circuit::new()
    }
}

impl Circuit {
    pub fn new() -> Circuit {
        Circuit {
            version: SCHEMA_VERSION.to_string(),
            modules: Vec::new(),
            qubits: Vec::new(),
            layers: Vec::new(),
            record_size: 0,
        }
    }

    pub fn add_module(&mut self, label: &str) -> ModuleId {
        let id = self.modules.len();
        self.modules.push(Module { id, extent: [0, 0], label: label.to_string() });
        id
    }

    pub fn add_qubit(&mut self, module: ModuleId, coord: [i32; 2]) -> Result<QubitId, ModelError> {
        if module >= self.modules.len() {
            return Err(ModelError::UnknownModule(module));
        }
        if self.qubits.iter().any(|q| q.module == module && q.coord == coord) {
            return Err(ModelError::CoordinateTaken { module, coord });
        }
        Ok(self.push_qubit(module, coord))
    }

    fn push_qubit(&mut self, module: ModuleId, coord: [i32; 2]) -> QubitId {
        let index = match self.qubits.last() {
            Some(q) if q.module == module => q.index + 1,
            _ => self.qubits.iter().filter(|q| q.module == module).count(),
        };
        self.qubits.push(Qubit { module, index, coord });
        let ext = &mut self.modules[module].extent;
        ext[0] = ext[0].max(coord[0] + 1);
        ext[1] = ext[1].max(coord[1] + 1);
        self.qubits.len() - 1
    }

    fn check_gate(&self, g: &Gate) -> Result<(), ModelError> {
        let expected = g.kind.arity();
        if g.qubits.len() != expected {
            return Err(ModelError::Arity { kind: g.kind, expected, got: g.qubits.len() });
        }
        if g.kind == GateKind::CNOT && g.qubits[0] == g.qubits[1] {
            return Err(ModelError::Arity { kind: g.kind, expected, got: 1 });
        }
        for &q in &g.qubits {
            if q >= self.qubits.len() {
                return Err(ModelError::UnknownQubit(q));
            }
        }
        Ok(())
    }

    /// Appends one concurrent timestep. Measurement slots are assigned in gate order.
    pub fn append_layer(&mut self, gates: Vec<Gate>) -> Result<Vec<Option<usize>>, ModelError> {
        let layer = self.layers.len();
        let teleports = gates.iter().filter(|g| g.kind == GateKind::Teleport).count();
        if teleports != 0 && teleports != gates.len() {
            return Err(ModelError::TimestepKindViolation { layer });
        }
        let mut seen = BTreeSet::new();
        for g in &gates {
            self.check_gate(g)?;
            for &q in &g.qubits {
                if !seen.insert(q) {
                    return Err(ModelError::ConcurrencyViolation { layer, qubit: q });
                }
            }
            if let Some(b) = g.cond.max_bit() {
                if b >= self.record_size {
                    return Err(ModelError::ConditionNotReady { bit: b });
                }
            }
        }
        let kind = if teleports > 0 { LayerKind::Teleport } else { LayerKind::Intra };
        let mut slots = Vec::with_capacity(gates.len());
        let mut placed = Vec::with_capacity(gates.len());
        for mut g in gates {
            if g.kind == GateKind::MeasureZ {
                g.slot = Some(self.record_size);
                self.record_size += 1;
            } else {
                g.slot = None;
            }
            slots.push(g.slot);
            placed.push(g);
        }
        self.layers.push(Layer { kind, gates: placed });
        Ok(slots)
    }

    /// Qubits acted on by at least one gate, as a mask over `qubits`.
    pub fn touched(&self) -> Vec<bool> {
        let mut t = vec![false; self.qubits.len()];
        for l in &self.layers {
            for g in &l.gates {
                for &q in &g.qubits {
                    t[q] = true;
                }
            }
        }
        t
    }

    pub fn count_resources(&self) -> ResourceReport {
        let mut r = ResourceReport::default();
        for l in &self.layers {
            match l.kind {
                LayerKind::Intra => {
                    r.depth += 1;
                    r.size += l.gates.len() as u64;
                }
                LayerKind::Teleport => {
                    r.module_depth += 1;
                    r.module_size += l.gates.len() as u64;
                }
            }
        }
        let touched = self.touched();
        let mut mods = BTreeSet::new();
        for (q, &t) in touched.iter().enumerate() {
            if t {
                r.width += 1;
                mods.insert(self.qubits[q].module);
            }
        }
        r.module_width = mods.len() as u64;
        r
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(|l| l.gates.len()).sum()
    }

    /// Layer index at which each record slot is written.
    pub fn slot_layers(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.record_size];
        for (i, l) in self.layers.iter().enumerate() {
            for g in &l.gates {
                if let Some(s) = g.slot {
                    out[s] = i;
                }
            }
        }
        out
    }

    /// Renumbers record slots so they increase with layer (then gate) order and
    /// rewrites conditions to match. Returns the old-to-new slot map.
    pub fn renumber_slots(&mut self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.record_size];
        let mut next = 0;
        for l in &self.layers {
            for g in &l.gates {
                if let Some(s) = g.slot {
                    map[s] = next;
                    next += 1;
                }
            }
        }
        for l in &mut self.layers {
            for g in &mut l.gates {
                if let Some(s) = g.slot.as_mut() {
                    *s = map[*s];
                }
                if !g.cond.bits.is_empty() {
                    g.cond = ParityExpr { bits: Vec::new(), constant: g.cond.constant }
                        .xor(&ParityExpr::of(g.cond.bits.iter().map(|&b| map[b])));
                }
            }
        }
        self.record_size = next;
        map
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("circuit serializes")
    }

    pub fn from_json(text: &str) -> Result<Circuit, ModelError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        let version = v.get("version").and_then(|x| x.as_str()).unwrap_or("").to_string();
        let major = |s: &str| s.split('.').next().unwrap_or("").to_string();
        if major(&version) != major(SCHEMA_VERSION) {
            return Err(ModelError::SchemaVersion(version));
        }
        let c: Circuit = serde_json::from_value(v).map_err(|e| ModelError::Malformed(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Structural checks applied to loaded files.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut rebuilt = Circuit::new();
        rebuilt.modules = self.modules.clone();
        rebuilt.qubits = self.qubits.clone();
        for q in &self.qubits {
            if q.module >= self.modules.len() {
                return Err(ModelError::UnknownModule(q.module));
            }
        }
        for l in &self.layers {
            let mut gates = l.gates.clone();
            for g in &mut gates {
                g.slot = None;
            }
            rebuilt.append_layer(gates)?;
            let last = rebuilt.layers.last().expect("just appended");
            if !l.gates.is_empty() && last.kind != l.kind {
                return Err(ModelError::TimestepKindViolation { layer: rebuilt.layers.len() - 1 });
            }
            for (a, b) in last.gates.iter().zip(&l.gates) {
                if a.slot != b.slot {
                    return Err(ModelError::Malformed(format!(
                        "record slot mismatch in layer {}",
                        rebuilt.layers.len() - 1
                    )));
                }
            }
        }
        if rebuilt.record_size != self.record_size {
            return Err(ModelError::Malformed("record_size mismatch".into()));
        }
        Ok(())
    }
}

/// A built circuit with named qubit groups (inputs, outputs, ancillae).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub circuit: Circuit,
    pub ports: std::collections::BTreeMap<String, Vec<QubitId>>,
}

impl Block {
    pub fn new(circuit: Circuit) -> Block {
        Block { circuit, ports: Default::default() }
    }

    pub fn with_port(mut self, name: &str, qubits: Vec<QubitId>) -> Block {
        self.ports.insert(name.to_string(), qubits);
        self
    }

    /// Panics on an unknown port name; ports are fixed by each builder.
    pub fn port(&self, name: &str) -> &[QubitId] {
        self.ports.get(name).unwrap_or_else(|| panic!("no port {name}"))
    }

    pub fn resources(&self) -> ResourceReport {
        self.circuit.count_resources()
    }
}

/// Chebyshev distance 1.
pub fn adjacent(a: [i32; 2], b: [i32; 2]) -> bool {
    a != b && (a[0] - b[0]).abs() <= 1 && (a[1] - b[1]).abs() <= 1
}

/// Incremental builder that places each gate in the earliest timestep its qubits,
/// its classical condition and the current barrier allow.
#[derive(Clone, Debug, Default)]
pub struct CircuitBuilder {
    circ: Circuit,
    frontier: Vec<usize>,
    floor: usize,
    slot_layer: Vec<usize>,
    coords: HashMap<(ModuleId, [i32; 2]), QubitId>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        CircuitBuilder::default()
    }

    pub fn module(&mut self, label: &str) -> ModuleId {
        self.circ.add_module(label)
    }

    /// An empty builder declaring the same modules and qubits as `c`, so qubit ids
    /// carry over.
    pub fn like(c: &Circuit) -> Self {
        let mut b = CircuitBuilder::new();
        for m in &c.modules {
            b.module(&m.label);
        }
        for q in &c.qubits {
            b.at(q.module, q.coord[0], q.coord[1]);
        }
        b
    }

    /// The qubit at `coord` in `module`, declared on first use.
    pub fn at(&mut self, module: ModuleId, x: i32, y: i32) -> QubitId {
        if let Some(&q) = self.coords.get(&(module, [x, y])) {
            return q;
        }
        let q = self.circ.push_qubit(module, [x, y]);
        self.coords.insert((module, [x, y]), q);
        self.frontier.push(0);
        q
    }

    pub fn qubit(&self, q: QubitId) -> &Qubit {
        &self.circ.qubits[q]
    }

    pub fn depth(&self) -> usize {
        self.circ.layers.len()
    }

    /// Forces every later gate to start after all gates placed so far.
    pub fn barrier(&mut self) {
        self.floor = self.circ.layers.len();
    }

    /// Places a gate; returns the record slot for measurements. Gates whose
    /// condition can never fire are dropped.
    pub fn apply(&mut self, kind: GateKind, qubits: &[QubitId], cond: ParityExpr) -> Option<usize> {
        assert_eq!(qubits.len(), kind.arity(), "{kind:?} arity");
        if cond.is_never() {
            return None;
        }
        let mut at = self.floor;
        for &q in qubits {
            at = at.max(self.frontier[q]);
        }
        for &b in &cond.bits {
            at = at.max(self.slot_layer[b] + 1);
        }
        let want = if kind == GateKind::Teleport { LayerKind::Teleport } else { LayerKind::Intra };
        while at < self.circ.layers.len() && self.circ.layers[at].kind != want {
            at += 1;
        }
        if at == self.circ.layers.len() {
            self.circ.layers.push(Layer { kind: want, gates: Vec::new() });
        }
        let slot = if kind == GateKind::MeasureZ {
            let s = self.circ.record_size;
            self.circ.record_size += 1;
            self.slot_layer.push(at);
            Some(s)
        } else {
            None
        };
        for &q in qubits {
            self.frontier[q] = at + 1;
        }
        self.circ.layers[at].gates.push(Gate { kind, qubits: qubits.to_vec(), cond, slot });
        slot
    }

    pub fn x(&mut self, q: QubitId) {
        self.apply(GateKind::X, &[q], ParityExpr::always());
    }
    pub fn z(&mut self, q: QubitId) {
        self.apply(GateKind::Z, &[q], ParityExpr::always());
    }
    pub fn h(&mut self, q: QubitId) {
        self.apply(GateKind::H, &[q], ParityExpr::always());
    }
    pub fn t(&mut self, q: QubitId) {
        self.apply(GateKind::T, &[q], ParityExpr::always());
    }
    pub fn tdg(&mut self, q: QubitId) {
        self.apply(GateKind::Tdg, &[q], ParityExpr::always());
    }
    pub fn cnot(&mut self, c: QubitId, t: QubitId) {
        self.apply(GateKind::CNOT, &[c, t], ParityExpr::always());
    }
    pub fn measure(&mut self, q: QubitId) -> usize {
        self.apply(GateKind::MeasureZ, &[q], ParityExpr::always()).expect("measure slot")
    }
    pub fn x_if(&mut self, q: QubitId, cond: ParityExpr) {
        self.apply(GateKind::X, &[q], cond);
    }
    pub fn z_if(&mut self, q: QubitId, cond: ParityExpr) {
        self.apply(GateKind::Z, &[q], cond);
    }
    pub fn teleport(&mut self, from: QubitId, to: QubitId) {
        self.apply(GateKind::Teleport, &[from, to], ParityExpr::always());
    }
    /// Three CNOTs.
    pub fn swap(&mut self, a: QubitId, b: QubitId) {
        self.cnot(a, b);
        self.cnot(b, a);
        self.cnot(a, b);
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circ
    }

    /// The circuit with record slots renumbered into layer order.
    pub fn finish(mut self) -> Circuit {
        self.circ.renumber_slots();
        self.circ
    }
}

/// Replaces runs of conditioned X (resp. Z) gates on one qubit, with nothing else
/// touching that qubit in between, by a single gate with the XOR-merged condition.
pub fn merge_corrections(c: &Circuit) -> Circuit {
    let mut out = c.clone();
    // (layer, gate) of the pending Pauli per qubit
    let mut pending: Vec<Option<(usize, usize)>> = vec![None; c.qubits.len()];
    let mut dead: Vec<Vec<bool>> = c.layers.iter().map(|l| vec![false; l.gates.len()]).collect();
    for li in 0..out.layers.len() {
        for gi in 0..out.layers[li].gates.len() {
            let g = out.layers[li].gates[gi].clone();
            let pauli = matches!(g.kind, GateKind::X | GateKind::Z);
            for &q in &g.qubits {
                let prev = pending[q];
                pending[q] = None;
                if let (true, Some((pl, pg))) = (pauli, prev) {
                    let p = out.layers[pl].gates[pg].clone();
                    if p.kind == g.kind {
                        out.layers[li].gates[gi].cond = p.cond.xor(&g.cond);
                        dead[pl][pg] = true;
                    }
                }
            }
            if pauli {
                pending[g.qubits[0]] = Some((li, gi));
            }
        }
    }
    for (li, l) in out.layers.iter_mut().enumerate() {
        let mut i = 0;
        l.gates.retain(|g| {
            let keep = !dead[li][i] && !(g.kind.is_unitary() && g.cond.is_never());
            i += 1;
            keep
        });
    }
    out.layers.retain(|l| !l.gates.is_empty());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_qubits() -> Circuit {
        let mut c = Circuit::new();
        let m = c.add_module("m");
        c.add_qubit(m, [0, 0]).unwrap();
        c.add_qubit(m, [1, 0]).unwrap();
        c
    }

    #[test]
    fn append_parallel_hadamards() {
        let mut c = two_qubits();
        c.append_layer(vec![Gate::new(GateKind::H, &[0]), Gate::new(GateKind::H, &[1])]).unwrap();
        assert_eq!(c.count_resources(), ResourceReport::dsw(1, 2, 2).with_modules(0, 0, 1));
    }

    #[test]
    fn overlapping_support_rejected() {
        let mut c = two_qubits();
        let e = c.append_layer(vec![Gate::new(GateKind::CNOT, &[0, 1]), Gate::new(GateKind::X, &[1])]).unwrap_err();
        assert_eq!(e, ModelError::ConcurrencyViolation { layer: 0, qubit: 1 });
    }

    #[test]
    fn mixed_kinds_rejected() {
        let mut c = Circuit::new();
        let a = c.add_module("a");
        let b = c.add_module("b");
        let q0 = c.add_qubit(a, [0, 0]).unwrap();
        let r0 = c.add_qubit(b, [0, 0]).unwrap();
        let q2 = c.add_qubit(a, [1, 0]).unwrap();
        let e =
            c.append_layer(vec![Gate::new(GateKind::Teleport, &[q0, r0]), Gate::new(GateKind::X, &[q2])]).unwrap_err();
        assert_eq!(e, ModelError::TimestepKindViolation { layer: 0 });
    }

    #[test]
    fn empty_circuit_counts_zero() {
        assert_eq!(Circuit::new().count_resources(), ResourceReport::default());
    }

    #[test]
    fn builder_schedules_asap() {
        let mut b = CircuitBuilder::new();
        let m = b.module("m");
        let (q0, q1, q2) = (b.at(m, 0, 0), b.at(m, 1, 0), b.at(m, 2, 0));
        b.h(q0);
        b.h(q2);
        b.cnot(q0, q1);
        let s = b.measure(q2);
        b.x_if(q1, ParityExpr::bit(s));
        let c = b.finish();
        assert_eq!(c.layers.len(), 3);
        assert_eq!(c.layers[1].gates.len(), 2);
        assert_eq!(c.count_resources().size, 5);
    }

    #[test]
    fn parity_algebra() {
        let p = ParityExpr::of([3, 1, 3, 2]);
        assert_eq!(p.bits, vec![1, 2]);
        let q = p.xor(&ParityExpr::bit(2));
        assert_eq!(q.bits, vec![1]);
        assert!(ParityExpr::always().eval(&[]));
        assert!(ParityExpr::of([0, 1]).eval(&[true, false]));
    }

    #[test]
    fn merge_collapses_pauli_runs() {
        let mut b = CircuitBuilder::new();
        let m = b.module("m");
        let (q0, q1, q2) = (b.at(m, 0, 0), b.at(m, 1, 0), b.at(m, 2, 0));
        let k1 = b.measure(q0);
        let k2 = b.measure(q1);
        b.x_if(q2, ParityExpr::bit(k1));
        b.x_if(q2, ParityExpr::bit(k2));
        let c = merge_corrections(&b.finish());
        let xs: Vec<_> = c.layers.iter().flat_map(|l| &l.gates).filter(|g| g.kind == GateKind::X).collect();
        assert_eq!(xs.len(), 1);
        assert_eq!(xs[0].cond.bits, vec![k1, k2]);
    }

    #[test]
    fn json_round_trip_and_version_gate() {
        let mut c = two_qubits();
        c.append_layer(vec![Gate::new(GateKind::MeasureZ, &[0])]).unwrap();
        c.append_layer(vec![Gate::new(GateKind::X, &[1]).when(ParityExpr::bit(0))]).unwrap();
        let text = c.to_json();
        assert_eq!(Circuit::from_json(&text).unwrap(), c);
        let bumped = text.replace("\"version\":\"1.0\"", "\"version\":\"2.0\"");
        assert!(matches!(Circuit::from_json(&bumped), Err(ModelError::SchemaVersion(_))));
    }
}
