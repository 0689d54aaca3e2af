//! Constant-depth communication: Bell measurement, teleportation chains, fanout
//! and unfanout, plus replayable step programs built from them.

use crate::model::{adjacent, Block, CircuitBuilder, GateKind, ParityExpr, QubitId};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommError {
    #[error("qubits at {0:?} and {1:?} are not adjacent")]
    NotAdjacent([i32; 2], [i32; 2]),
    #[error("teleport chains need an odd length of at least 3, got {0}")]
    UnsupportedLength(usize),
    #[error("at least {min} qubits required, got {got}")]
    TooSmall { min: usize, got: usize },
}

/// Pauli corrections applied to one qubit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Correction {
    pub target: QubitId,
    pub x: ParityExpr,
    pub z: ParityExpr,
}

/// At most one X and one Z per target.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorrectionPlan {
    pub entries: Vec<Correction>,
}

impl CorrectionPlan {
    pub fn for_qubit(&self, q: QubitId) -> Option<&Correction> {
        self.entries.iter().find(|c| c.target == q)
    }

    fn add(&mut self, target: QubitId, x: ParityExpr, z: ParityExpr) {
        match self.entries.iter_mut().find(|c| c.target == target) {
            Some(c) => {
                c.x = c.x.xor(&x);
                c.z = c.z.xor(&z);
            }
            None => self.entries.push(Correction { target, x, z }),
        }
    }

    fn emit(&self, b: &mut CircuitBuilder) {
        for c in &self.entries {
            b.x_if(c.target, c.x.clone());
        }
        for c in &self.entries {
            b.z_if(c.target, c.z.clone());
        }
    }
}

fn reset(b: &mut CircuitBuilder, q: QubitId, slot: usize, on: bool) {
    if on {
        b.x_if(q, ParityExpr::bit(slot));
    }
}

/// Bell-basis measurement; returns the (j, k) record slots.
pub fn emit_bell(b: &mut CircuitBuilder, q1: QubitId, q2: QubitId) -> (usize, usize) {
    b.cnot(q1, q2);
    b.h(q1);
    let j = b.measure(q1);
    let k = b.measure(q2);
    (j, k)
}

/// Bell measurement on two adjacent qubits; `j` lands in slot 0 and `k` in slot 1.
pub fn build_bell_measure(c1: [i32; 2], c2: [i32; 2]) -> Result<Block, CommError> {
    if !adjacent(c1, c2) {
        return Err(CommError::NotAdjacent(c1, c2));
    }
    let mut b = CircuitBuilder::new();
    let m = b.module("bell");
    let q1 = b.at(m, c1[0], c1[1]);
    let q2 = b.at(m, c2[0], c2[1]);
    emit_bell(&mut b, q1, q2);
    Ok(Block::new(b.finish()).with_port("q1", vec![q1]).with_port("q2", vec![q2]))
}

/// Moves the state of `path[0]` to the last element of `path`.
pub fn emit_teleport_path(b: &mut CircuitBuilder, path: &[QubitId], resets: bool) -> Result<CorrectionPlan, CommError> {
    let n = path.len();
    if n < 3 || n % 2 == 0 {
        return Err(CommError::UnsupportedLength(n));
    }
    for i in (1..n).step_by(2) {
        b.h(path[i]);
        b.cnot(path[i], path[i + 1]);
    }
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    let mut measured = Vec::new();
    for i in (0..n - 1).step_by(2) {
        let (j, k) = emit_bell(b, path[i], path[i + 1]);
        zs.push(j);
        xs.push(k);
        measured.push((path[i], j));
        measured.push((path[i + 1], k));
    }
    let mut plan = CorrectionPlan::default();
    plan.add(path[n - 1], ParityExpr::of(xs), ParityExpr::of(zs));
    plan.emit(b);
    for (q, s) in measured {
        reset(b, q, s, resets);
    }
    Ok(plan)
}

/// Teleportation along a line of `n` qubits (source plus (n-1)/2 Bell pairs).
pub fn build_teleport(n: usize) -> Result<Block, CommError> {
    build_teleport_with(n, false)
}

pub fn build_teleport_with(n: usize, resets: bool) -> Result<Block, CommError> {
    if n < 3 || n % 2 == 0 {
        return Err(CommError::UnsupportedLength(n));
    }
    let mut b = CircuitBuilder::new();
    let m = b.module("teleport");
    let path: Vec<_> = (0..n as i32).map(|x| b.at(m, x, 0)).collect();
    emit_teleport_path(&mut b, &path, resets)?;
    Ok(Block::new(b.finish())
        .with_port("source", vec![path[0]])
        .with_port("target", vec![path[n - 1]])
        .with_port("path", path))
}

/// Role of a qubit in a cat segment after its head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Member {
    /// Receives a copy of the source.
    Copy(QubitId),
    /// Path filler measured out in the X basis.
    Dummy(QubitId),
    /// Tail fused with the next segment's head.
    Link(QubitId),
}

impl Member {
    pub fn qubit(self) -> QubitId {
        match self {
            Member::Copy(q) | Member::Dummy(q) | Member::Link(q) => q,
        }
    }
}

/// A GHZ segment: `head` and its CNOT chain of members, consecutive ones adjacent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub head: QubitId,
    pub members: Vec<Member>,
}

/// Fanout of `source` into the `Copy` members of a chain of segments.
/// The first head is adjacent to the source; every segment but the last ends in a
/// `Link` adjacent to the next head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatPlan {
    pub source: QubitId,
    pub segments: Vec<Segment>,
    /// Measure the source out (the plain fanout) instead of keeping it as a copy.
    pub consume_source: bool,
    pub resets: bool,
}

impl CatPlan {
    pub fn copies(&self) -> Vec<QubitId> {
        self.segments
            .iter()
            .flat_map(|s| s.members.iter())
            .filter_map(|m| if let Member::Copy(q) = m { Some(*q) } else { None })
            .collect()
    }

    /// Every qubit the fanout touches.
    pub fn footprint(&self) -> Vec<QubitId> {
        let mut v = vec![self.source];
        for s in &self.segments {
            v.push(s.head);
            v.extend(s.members.iter().map(|m| m.qubit()));
        }
        v
    }
}

/// Emits the fanout; returns the merged corrections it applied.
pub fn emit_fanout(b: &mut CircuitBuilder, plan: &CatPlan) -> CorrectionPlan {
    let segs = &plan.segments;
    for s in segs {
        b.h(s.head);
    }
    for s in segs {
        let mut prev = s.head;
        for m in &s.members {
            b.cnot(prev, m.qubit());
            prev = m.qubit();
        }
    }
    let mut measured = Vec::new();
    b.cnot(plan.source, segs[0].head);
    let j_src = if plan.consume_source {
        b.h(plan.source);
        let j = b.measure(plan.source);
        measured.push((plan.source, j));
        Some(j)
    } else {
        None
    };
    let k0 = b.measure(segs[0].head);
    measured.push((segs[0].head, k0));
    let mut ks = vec![k0];
    let mut js = vec![j_src];
    for i in 1..segs.len() {
        let link = match segs[i - 1].members.last() {
            Some(Member::Link(q)) => *q,
            _ => panic!("segment {} must end in a link", i - 1),
        };
        let (j, k) = emit_bell(b, link, segs[i].head);
        measured.push((link, j));
        measured.push((segs[i].head, k));
        ks.push(k);
        js.push(Some(j));
    }
    let mut dummies = Vec::new();
    for s in segs {
        for m in &s.members {
            if let Member::Dummy(q) = m {
                b.h(*q);
                let d = b.measure(*q);
                measured.push((*q, d));
                dummies.push(d);
            }
        }
    }
    let mut plan_out = CorrectionPlan::default();
    let mut xpar = ParityExpr::never();
    let mut free_z = ParityExpr::of(dummies);
    let first_copy = plan.copies().first().copied();
    for (i, s) in segs.iter().enumerate() {
        xpar = xpar.xor(&ParityExpr::bit(ks[i]));
        let mut zpar = js[i].map(ParityExpr::bit).unwrap_or_else(ParityExpr::never);
        for m in &s.members {
            if let Member::Copy(q) = m {
                plan_out.add(*q, xpar.clone(), std::mem::replace(&mut zpar, ParityExpr::never()));
            }
        }
        // no copy in this segment: any cat member absorbs the phase
        free_z = free_z.xor(&zpar);
    }
    let z_home = if plan.consume_source { first_copy.expect("fanout with no copies") } else { plan.source };
    plan_out.add(z_home, ParityExpr::never(), free_z);
    plan_out.entries.retain(|c| !(c.x.is_never() && c.z.is_never()));
    plan_out.emit(b);
    for (q, s) in measured {
        reset(b, q, s, plan.resets);
    }
    plan_out
}

/// Disentangles the copies of a kept-source fanout back onto the source.
pub fn emit_release(b: &mut CircuitBuilder, plan: &CatPlan) {
    assert!(!plan.consume_source, "release needs the source");
    let mut rs = Vec::new();
    for q in plan.copies() {
        b.h(q);
        let r = b.measure(q);
        rs.push((q, r));
    }
    b.z_if(plan.source, ParityExpr::of(rs.iter().map(|x| x.1)));
    for (q, s) in rs {
        reset(b, q, s, plan.resets);
    }
}

/// Straight-line plan: source, then segments (a, l, b) and a final (a, l, l').
pub fn line_fanout_plan(path: &[QubitId], consume_source: bool, resets: bool) -> CatPlan {
    let n = (path.len() + 1) / 3;
    assert_eq!(path.len(), 3 * n - 1, "fanout path length");
    let mut segments = Vec::new();
    for i in 0..n - 1 {
        let base = 1 + 3 * i;
        let tail = if i == n - 2 { Member::Copy(path[base + 2]) } else { Member::Link(path[base + 2]) };
        segments.push(Segment { head: path[base], members: vec![Member::Copy(path[base + 1]), tail] });
    }
    CatPlan { source: path[0], segments, consume_source, resets }
}

/// Fanout of one qubit into `n` copies along a line of 3n-1 qubits.
pub fn build_fanout(n: usize) -> Result<Block, CommError> {
    build_fanout_with(n, false)
}

pub fn build_fanout_with(n: usize, resets: bool) -> Result<Block, CommError> {
    if n < 2 {
        return Err(CommError::TooSmall { min: 2, got: n });
    }
    let mut b = CircuitBuilder::new();
    let m = b.module("fanout");
    let path: Vec<_> = (0..(3 * n - 1) as i32).map(|x| b.at(m, x, 0)).collect();
    let plan = line_fanout_plan(&path, true, resets);
    emit_fanout(&mut b, &plan);
    Ok(Block::new(b.finish())
        .with_port("source", vec![path[0]])
        .with_port("copies", plan.copies())
        .with_port("path", path))
}

/// Returns the correction plan of an `n`-copy line fanout (slots as emitted).
pub fn fanout_corrections(n: usize) -> CorrectionPlan {
    let mut b = CircuitBuilder::new();
    let m = b.module("fanout");
    let path: Vec<_> = (0..(3 * n - 1) as i32).map(|x| b.at(m, x, 0)).collect();
    emit_fanout(&mut b, &line_fanout_plan(&path, true, false))
}

/// Collapses an n-qubit cat-like register onto its last qubit; the others end in a
/// measured basis state, or |0> when `resets` is set.
pub fn emit_unfanout(b: &mut CircuitBuilder, qs: &[QubitId], resets: bool) -> Result<(), CommError> {
    let n = qs.len();
    if n < 2 {
        return Err(CommError::TooSmall { min: 2, got: n });
    }
    let qs = if n % 2 == 0 {
        b.cnot(qs[1], qs[0]);
        &qs[1..]
    } else {
        qs
    };
    let n = qs.len();
    if n == 1 {
        return Ok(());
    }
    for &q in qs {
        b.h(q);
    }
    for i in (0..n - 1).step_by(2) {
        b.cnot(qs[i], qs[i + 1]);
    }
    for i in (1..n - 1).step_by(2) {
        b.cnot(qs[i], qs[i + 1]);
    }
    let mut slots = Vec::new();
    for &q in &qs[..n - 1] {
        slots.push(b.measure(q));
    }
    b.h(qs[n - 1]);
    let parity = ParityExpr::of((1..n.saturating_sub(2)).step_by(2).map(|i| slots[i]));
    b.z_if(qs[n - 1], parity);
    for (i, &q) in qs[..n - 1].iter().enumerate() {
        reset(b, q, slots[i], resets);
    }
    Ok(())
}

pub fn build_unfanout(n: usize) -> Result<Block, CommError> {
    build_unfanout_with(n, false)
}

pub fn build_unfanout_with(n: usize, resets: bool) -> Result<Block, CommError> {
    if n < 2 {
        return Err(CommError::TooSmall { min: 2, got: n });
    }
    let mut b = CircuitBuilder::new();
    let m = b.module("unfanout");
    let qs: Vec<_> = (0..n as i32).map(|x| b.at(m, x, 0)).collect();
    emit_unfanout(&mut b, &qs, resets)?;
    Ok(Block::new(b.finish()).with_port("target", vec![qs[n - 1]]).with_port("register", qs))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("classical replay failed at step {step}: {what}")]
pub struct ReplayError {
    pub step: usize,
    pub what: &'static str,
}

/// Undoes a teleported copy without moving anything back: measure `dst` in the
/// X basis, fix the phase on `src`, reset `dst`.
pub fn emit_unsend(b: &mut CircuitBuilder, src: QubitId, dst: QubitId) {
    b.h(dst);
    let r = b.measure(dst);
    b.z_if(src, ParityExpr::bit(r));
    b.x_if(dst, ParityExpr::bit(r));
}

/// One replayable operation. Measurement-based steps always reset their ancillae so
/// that the reversed program finds them in |0>.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Gate(GateKind, Vec<QubitId>),
    Fanout(Arc<CatPlan>),
    Release(Arc<CatPlan>),
    /// Teleport along an odd-length path.
    Move(Vec<QubitId>),
    /// Clifford+T Toffoli (controls, target) on mutually adjacent qubits.
    Toffoli([QubitId; 3]),
    /// Copy `src` into the adjacent `anc`, then teleport `anc` to `dst` in
    /// another module.
    Send {
        src: QubitId,
        anc: QubitId,
        dst: QubitId,
    },
    /// Inverse of `Send`: X-basis measurement of `dst`, Z on `src`, reset `dst`.
    Unsend {
        src: QubitId,
        anc: QubitId,
        dst: QubitId,
    },
    Barrier,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub steps: Vec<Step>,
}

impl Program {
    pub fn new() -> Program {
        Program::default()
    }

    pub fn gate(&mut self, kind: GateKind, qs: &[QubitId]) {
        assert!(kind.is_unitary());
        self.steps.push(Step::Gate(kind, qs.to_vec()));
    }

    pub fn cnot(&mut self, c: QubitId, t: QubitId) {
        self.gate(GateKind::CNOT, &[c, t]);
    }

    pub fn swap(&mut self, a: QubitId, b: QubitId) {
        self.cnot(a, b);
        self.cnot(b, a);
        self.cnot(a, b);
    }

    pub fn fanout(&mut self, plan: CatPlan) -> Arc<CatPlan> {
        assert!(!plan.consume_source && plan.resets);
        let p = Arc::new(plan);
        self.steps.push(Step::Fanout(p.clone()));
        p
    }

    pub fn release(&mut self, plan: Arc<CatPlan>) {
        self.steps.push(Step::Release(plan));
    }

    pub fn mv(&mut self, path: Vec<QubitId>) {
        assert!(path.len() >= 3 && path.len() % 2 == 1, "move path length");
        self.steps.push(Step::Move(path));
    }

    pub fn toffoli(&mut self, c0: QubitId, c1: QubitId, t: QubitId) {
        self.steps.push(Step::Toffoli([c0, c1, t]));
    }

    pub fn send(&mut self, src: QubitId, anc: QubitId, dst: QubitId) {
        self.steps.push(Step::Send { src, anc, dst });
    }

    pub fn barrier(&mut self) {
        self.steps.push(Step::Barrier);
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn extend(&mut self, other: &Program) {
        self.steps.extend(other.steps.iter().cloned());
    }

    pub fn emit(&self, b: &mut CircuitBuilder) {
        self.emit_inner(b, None);
    }

    /// Emits only intra-module gates. Each `Send` contributes its CNOT half here,
    /// and the returned (anc, dst) pairs are left for a separate teleport timestep.
    pub fn emit_local(&self, b: &mut CircuitBuilder) -> Vec<(QubitId, QubitId)> {
        let mut out = Vec::new();
        self.emit_inner(b, Some(&mut out));
        out
    }

    fn emit_inner(&self, b: &mut CircuitBuilder, mut split: Option<&mut Vec<(QubitId, QubitId)>>) {
        for s in &self.steps {
            match s {
                Step::Gate(k, qs) => {
                    b.apply(*k, qs, ParityExpr::always());
                }
                Step::Fanout(p) => {
                    emit_fanout(b, p);
                }
                Step::Release(p) => emit_release(b, p),
                Step::Move(path) => {
                    emit_teleport_path(b, path, true).expect("validated path");
                }
                Step::Toffoli([c0, c1, t]) => crate::arith::emit_toffoli(b, *c0, *c1, *t),
                Step::Send { src, anc, dst } => {
                    b.cnot(*src, *anc);
                    match split.as_deref_mut() {
                        Some(v) => v.push((*anc, *dst)),
                        None => b.teleport(*anc, *dst),
                    }
                }
                Step::Unsend { src, dst, .. } => emit_unsend(b, *src, *dst),
                Step::Barrier => b.barrier(),
            }
        }
    }

    /// Classical replay on a basis state. Fails on steps that would leave the
    /// computational basis or on ancillae that are not where the program expects.
    pub fn replay(&self, bits: &mut [bool]) -> Result<(), ReplayError> {
        for (i, s) in self.steps.iter().enumerate() {
            let fail = |what: &'static str| ReplayError { step: i, what };
            match s {
                Step::Gate(k, qs) => match k {
                    GateKind::X => bits[qs[0]] ^= true,
                    GateKind::CNOT => bits[qs[1]] ^= bits[qs[0]],
                    GateKind::Z | GateKind::T | GateKind::Tdg => {}
                    _ => return Err(fail("non-classical gate")),
                },
                Step::Toffoli([c0, c1, t]) => bits[*t] ^= bits[*c0] & bits[*c1],
                Step::Fanout(p) => {
                    for q in p.copies() {
                        if bits[q] {
                            return Err(fail("fanout copy not clear"));
                        }
                        bits[q] = bits[p.source];
                    }
                }
                Step::Release(p) => {
                    for q in p.copies() {
                        if bits[q] != bits[p.source] {
                            return Err(fail("released copy differs from source"));
                        }
                        bits[q] = false;
                    }
                }
                Step::Move(path) => {
                    let last = *path.last().unwrap();
                    if path[1..].iter().any(|&q| bits[q]) {
                        return Err(fail("move path not clear"));
                    }
                    bits[last] = std::mem::take(&mut bits[path[0]]);
                }
                Step::Send { src, anc, dst } => {
                    if bits[*anc] || bits[*dst] {
                        return Err(fail("send target not clear"));
                    }
                    bits[*dst] = bits[*src];
                }
                Step::Unsend { src, dst, .. } => {
                    if bits[*dst] != bits[*src] {
                        return Err(fail("unsent copy differs from source"));
                    }
                    bits[*dst] = false;
                }
                Step::Barrier => {}
            }
        }
        Ok(())
    }

    /// Reversed program with T and T† exchanged and fanouts swapped for releases.
    pub fn inverse(&self) -> Program {
        let steps = self
            .steps
            .iter()
            .rev()
            .map(|s| match s {
                Step::Gate(k, qs) => Step::Gate(k.dagger(), qs.clone()),
                Step::Fanout(p) => Step::Release(p.clone()),
                Step::Release(p) => Step::Fanout(p.clone()),
                Step::Move(path) => Step::Move(path.iter().rev().copied().collect()),
                Step::Toffoli(q) => Step::Toffoli(*q),
                Step::Send { src, anc, dst } => Step::Unsend { src: *src, anc: *anc, dst: *dst },
                Step::Unsend { src, anc, dst } => Step::Send { src: *src, anc: *anc, dst: *dst },
                Step::Barrier => Step::Barrier,
            })
            .collect();
        Program { steps }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_rejects_distant_qubits() {
        assert!(build_bell_measure([0, 0], [2, 0]).is_err());
        assert_eq!(build_bell_measure([0, 0], [1, 1]).unwrap().resources().size, 4);
    }

    #[test]
    fn teleport_length_rules() {
        assert_eq!(build_teleport(4).unwrap_err(), CommError::UnsupportedLength(4));
        assert!(build_teleport(1).is_err());
        let r = build_teleport(5).unwrap().resources();
        assert!(r.depth <= 7 && r.size <= 19 && r.width <= 6);
    }

    #[test]
    fn fanout_four_correction_pattern() {
        let plan = fanout_corrections(4);
        // path: psi, a1, l1, b2, a2, l2, b3, a3, l3, l4 on x = 0..9
        let l = [2usize, 5, 8, 9];
        let xs: Vec<_> = l.iter().map(|&q| plan.for_qubit(q).unwrap().x.bits.len()).collect();
        assert_eq!(xs, vec![1, 2, 3, 3]);
        assert!(plan.for_qubit(9).unwrap().z.is_never());
        for &q in &l[..3] {
            assert_eq!(plan.for_qubit(q).unwrap().z.bits.len(), 1);
        }
        assert_eq!(plan.for_qubit(9).unwrap().x, plan.for_qubit(8).unwrap().x);
    }

    #[test]
    fn inverse_swaps_fanout_and_release() {
        let plan = CatPlan {
            source: 0,
            segments: vec![Segment { head: 1, members: vec![Member::Copy(2)] }],
            consume_source: false,
            resets: true,
        };
        let mut p = Program::new();
        p.gate(GateKind::T, &[0]);
        let h = p.fanout(plan);
        let inv = p.inverse();
        assert_eq!(inv.steps[0], Step::Release(h));
        assert_eq!(inv.steps[1], Step::Gate(GateKind::Tdg, vec![0]));
    }
}
