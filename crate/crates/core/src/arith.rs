//! Carry-save arithmetic blocks: the Toffoli, 3-2 and 2-2 cells, and the
//! four-layer modular adder tile.

use crate::comm::{CatPlan, Member, Program, Segment};
use crate::model::{Block, Circuit, CircuitBuilder, ModuleId, QubitId};
use crate::oracle::{adder_plan, bits_value, AdderLayer, CellKind};
pub use crate::oracle::{oracle_csa_bit, oracle_modular_adder, AdderReplay};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArithError {
    #[error("modulus {m} must be odd with 3 <= m < 2^{n}")]
    Modulus { n: usize, m: u64 },
    #[error("register width {0} unsupported (need 2 <= n <= 60)")]
    Width(usize),
    #[error("value {value} does not fit in {bits} bits")]
    Overflow { value: u128, bits: usize },
}

/// A number held as u + v; bit 0 of v is always clear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CarrySaveNumber {
    pub u: u128,
    pub v: u128,
}

impl CarrySaveNumber {
    pub fn encode(x: u128) -> Self {
        CarrySaveNumber { u: x, v: 0 }
    }

    pub fn from_bits(u: &[bool], v: &[bool]) -> Self {
        let v = bits_value(v);
        assert_eq!(v & 1, 0, "carry vector has a bit at significance 0");
        CarrySaveNumber { u: bits_value(u), v }
    }

    pub fn decode(&self) -> u128 {
        self.u + self.v
    }

    pub fn decode_mod(&self, m: u64) -> u128 {
        self.decode() % m as u128
    }
}

/// Residues added back after truncating the top carry-save bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ResidueTable {
    pub n: usize,
    pub m: u64,
    /// 2^{n+1} mod m, paired with v_{n+1}.
    pub r1: u64,
    /// 2^{n+1} mod m, paired with u_{n+1}.
    pub r2: u64,
    /// 2^{n+2} mod m, paired with v_{n+2}.
    pub r3: u64,
}

impl ResidueTable {
    pub fn new(n: usize, m: u64) -> Result<Self, ArithError> {
        check_params(n, m)?;
        let r1 = ((1u128 << (n + 1)) % m as u128) as u64;
        let r3 = ((1u128 << (n + 2)) % m as u128) as u64;
        Ok(ResidueTable { n, m, r1, r2: r1, r3 })
    }
}

pub fn check_params(n: usize, m: u64) -> Result<(), ArithError> {
    if !(2..=60).contains(&n) {
        return Err(ArithError::Width(n));
    }
    if m < 3 || m % 2 == 0 || (m as u128) >= 1u128 << n {
        return Err(ArithError::Modulus { n, m });
    }
    Ok(())
}

/// Clifford+T Toffoli on three mutually adjacent qubits, 15 gates in 8 timesteps.
pub fn emit_toffoli(b: &mut CircuitBuilder, c0: QubitId, c1: QubitId, t: QubitId) {
    b.tdg(c0);
    b.tdg(c1);
    b.h(t);
    b.cnot(t, c0);
    b.t(c0);
    b.cnot(c1, t);
    b.cnot(c1, c0);
    b.t(t);
    b.tdg(c0);
    b.cnot(c1, t);
    b.cnot(t, c0);
    b.t(c0);
    b.tdg(t);
    b.cnot(c1, c0);
    b.h(t);
}

pub fn toffoli(p: &mut Program, c0: QubitId, c1: QubitId, t: QubitId) {
    p.toffoli(c0, c1, t);
}

/// 3-2 cell: leaves a ⊕ b ⊕ c in `q0`, maj(a, b, c) in `q4`, clears `a`.
pub fn full_cell(p: &mut Program, a: QubitId, b: QubitId, c: QubitId, q0: QubitId, q4: QubitId) {
    toffoli(p, b, c, q4);
    p.cnot(c, b);
    toffoli(p, a, b, q0);
    p.cnot(q4, q0);
    p.cnot(b, a);
    p.cnot(c, b);
    toffoli(p, b, c, q4);
    p.swap(q0, q4);
    p.swap(q0, a);
}

/// 2-2 cell on the b and c slots.
pub fn half_cell_bc(p: &mut Program, b: QubitId, c: QubitId, q0: QubitId, q4: QubitId) {
    toffoli(p, b, c, q4);
    p.cnot(c, b);
    p.cnot(b, q0);
    p.cnot(c, b);
}

/// 2-2 cell on the a and b slots.
pub fn half_cell_ab(p: &mut Program, a: QubitId, b: QubitId, q0: QubitId, q4: QubitId) {
    toffoli(p, a, b, q0);
    p.cnot(q0, q4);
    p.cnot(q4, q0);
    p.cnot(a, q0);
    p.cnot(b, q0);
}

fn program_block(
    build: impl FnOnce(&mut CircuitBuilder, ModuleId) -> (Program, Vec<(&'static str, Vec<QubitId>)>),
) -> Block {
    let mut b = CircuitBuilder::new();
    let m = b.module("arith");
    let (p, ports) = build(&mut b, m);
    p.emit(&mut b);
    ports.into_iter().fold(Block::new(b.finish()), |blk, (name, qs)| blk.with_port(name, qs))
}

pub fn build_toffoli() -> Block {
    program_block(|b, m| {
        let q = [b.at(m, 0, 0), b.at(m, 1, 0), b.at(m, 1, 1)];
        let mut p = Program::new();
        toffoli(&mut p, q[0], q[1], q[2]);
        (p, vec![("controls", q[..2].to_vec()), ("target", vec![q[2]])])
    })
}

pub fn build_single_bit_csa() -> Block {
    program_block(|b, m| {
        let [a, bb, c, q0, q4] = [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)].map(|(x, y)| b.at(m, x, y));
        let mut p = Program::new();
        full_cell(&mut p, a, bb, c, q0, q4);
        (p, vec![("inputs", vec![a, bb, c]), ("u", vec![q0]), ("v", vec![q4])])
    })
}

/// The (a, b) flavour of the 2-2 cell on four qubits.
pub fn build_two_two_adder() -> Block {
    program_block(|b, m| {
        let [a, bb, q0, q4] = [(0, 0), (1, 0), (1, 1), (2, 1)].map(|(x, y)| b.at(m, x, y));
        let mut p = Program::new();
        half_cell_ab(&mut p, a, bb, q0, q4);
        (p, vec![("inputs", vec![a, bb]), ("u", vec![q0]), ("v", vec![q4])])
    })
}

/// `width` 3-2 cells side by side: three `width`-bit inputs to a carry-save pair.
pub fn build_csa_layer(width: usize) -> Block {
    program_block(|b, m| {
        let mut p = Program::new();
        let (mut ins, mut us, mut vs) = (vec![], vec![], vec![]);
        for i in 0..width as i32 {
            let [a, bb, c, q0, q4] = [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)].map(|(x, y)| b.at(m, 3 * i + x, y));
            full_cell(&mut p, a, bb, c, q0, q4);
            ins.extend([a, bb, c]);
            us.push(q0);
            vs.push(q4);
        }
        (p, vec![("inputs", ins), ("u", us), ("v", vs)])
    })
}

/// Qubits of an adder tile. Inputs are indexed by significance 0..=n+1; `v[i]` holds
/// the carry of significance i (None at 0 and wherever no carry is produced).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilePorts {
    pub a: Vec<QubitId>,
    pub b: Vec<QubitId>,
    pub c: Vec<QubitId>,
    pub u: Vec<QubitId>,
    pub v: Vec<Option<QubitId>>,
    /// Homes of v_{n+1}, u_{n+1}, v_{n+2} when they drive the residue rails.
    pub controls: [QubitId; 3],
}

impl TilePorts {
    pub fn inputs(&self, which: usize) -> &[QubitId] {
        [&self.a, &self.b, &self.c][which]
    }

    pub fn outputs(&self) -> Vec<QubitId> {
        self.u.iter().copied().chain(self.v.iter().flatten().copied()).collect()
    }
}

/// Writes the forward adder program for a tile whose lower-left corner sits at
/// `origin` in `module`. Uncomputation is the program's inverse.
pub fn tile_program(
    bld: &mut CircuitBuilder,
    module: ModuleId,
    origin: [i32; 2],
    n: usize,
    m: u64,
) -> Result<(Program, TilePorts), ArithError> {
    check_params(n, m)?;
    let plan = adder_plan(n, m);
    let top = n + 1;
    let mut q = |x: usize, y: usize| bld.at(module, origin[0] + x as i32, origin[1] + y as i32);
    let mut p = Program::new();
    let a: Vec<_> = (0..=top).map(|i| q(3 * i, 0)).collect();
    let b: Vec<_> = (0..=top).map(|i| q(3 * i + 1, 0)).collect();
    let c: Vec<_> = (0..=top).map(|i| q(3 * i + 2, 0)).collect();
    let mut u: Vec<Option<QubitId>> = vec![None; top + 2];
    let mut v: Vec<Option<QubitId>> = vec![None; top + 2];
    for i in 0..=top {
        let (q0, q4) = (q(3 * i + 1, 1), q(3 * i + 2, 1));
        full_cell(&mut p, a[i], b[i], c[i], q0, q4);
        u[i] = Some(q0);
        v[i + 1] = Some(q4);
    }
    let ctl0 = v[top].take().unwrap();
    let mut ctl1 = u[top].take().unwrap();
    let mut ctl2 = v[top + 1].take().unwrap();
    let x = 3 * n;
    let d = q(x + 4, 2);
    p.swap(ctl1, d);
    ctl1 = d;
    for (xx, yy) in [(x + 5, 2), (x + 5, 3), (x + 4, 4)] {
        let d = q(xx, yy);
        p.swap(ctl2, d);
        ctl2 = d;
    }
    let sources = [ctl0, ctl1, ctl2];
    for (k, layer) in plan[1..].iter().enumerate() {
        let l = k + 2;
        let r = l - 1;
        // keeps the rails from overlapping the previous layer's Toffolis
        p.barrier();
        for i in 1..=top {
            if let Some(vq) = v[i] {
                let slot = q(3 * i, r);
                p.swap(vq, slot);
                v[i] = Some(slot);
            }
        }
        let mut segments =
            vec![Segment { head: q(x + 3, l), members: vec![Member::Dummy(q(x + 2, l)), Member::Link(q(x + 1, l))] }];
        let mut cbit: Vec<QubitId> = Vec::new();
        for j in (0..n).rev() {
            let cq = q(3 * j + 2, r);
            let mut members = vec![if (layer.residue >> j) & 1 == 1 { Member::Copy(cq) } else { Member::Dummy(cq) }];
            members.push(Member::Dummy(q(3 * j + 2, l)));
            if j > 0 {
                members.push(Member::Link(q(3 * j + 1, l)));
            }
            segments.push(Segment { head: q(3 * j + 3, l), members });
            cbit.push(cq);
        }
        cbit.reverse();
        p.fanout(CatPlan { source: sources[k], segments, consume_source: false, resets: true });
        let mut nu: Vec<Option<QubitId>> = vec![None; top + 2];
        let mut nv: Vec<Option<QubitId>> = vec![None; top + 2];
        for (i, cell) in layer.cells.iter().enumerate() {
            let Some(kind) = cell else { continue };
            let (q0, q4) = (q(3 * i + 1, l), q(3 * i + 2, l));
            match kind {
                CellKind::Full => {
                    let a = v[i].unwrap_or_else(|| q(3 * i, r));
                    full_cell(&mut p, a, u[i].unwrap(), cbit[i], q0, q4);
                }
                CellKind::HalfUv => half_cell_ab(&mut p, v[i].unwrap(), u[i].unwrap(), q0, q4),
                CellKind::PassV => p.swap(v[i].unwrap(), q0),
                CellKind::Xor => {
                    p.cnot(v[i].unwrap(), u[i].unwrap());
                    nu[i] = u[i];
                    continue;
                }
            }
            nu[i] = Some(q0);
            if matches!(kind, CellKind::Full | CellKind::HalfUv) {
                nv[i + 1] = Some(q4);
            }
        }
        u = nu;
        v = nv;
    }
    let ports = TilePorts {
        a,
        b,
        c,
        u: u[..=top].iter().map(|x| x.expect("every significance has a sum bit")).collect(),
        v: v[..=top].to_vec(),
        controls: sources,
    };
    Ok((p, ports))
}

/// A standalone modular adder tile.
#[derive(Clone, Debug)]
pub struct AdderTile {
    pub n: usize,
    pub m: u64,
    pub residues: ResidueTable,
    pub plan: Vec<AdderLayer>,
    pub program: Program,
    pub ports: TilePorts,
    /// The forward computation.
    pub circuit: Circuit,
}

impl AdderTile {
    pub fn block(&self) -> Block {
        Block::new(self.circuit.clone())
            .with_port("a", self.ports.a.clone())
            .with_port("b", self.ports.b.clone())
            .with_port("c", self.ports.c.clone())
            .with_port("u", self.ports.u.clone())
            .with_port("v", self.ports.v.iter().flatten().copied().collect())
    }

    pub fn hier(&self) -> crate::hier::HierCircuit {
        crate::hier::HierCircuit::leaf("adder", self.circuit.clone())
            .with_semantic(crate::hier::Semantic::Adder { n: self.n, m: self.m })
    }

    /// The uncompute half on the same qubits.
    pub fn mirror(&self) -> Circuit {
        let mut b = CircuitBuilder::like(&self.circuit);
        self.program.inverse().emit(&mut b);
        b.finish()
    }

    /// Forward then mirror; restores every qubit.
    pub fn round_trip(&self) -> Circuit {
        let mut b = CircuitBuilder::like(&self.circuit);
        self.program.emit(&mut b);
        b.barrier();
        self.program.inverse().emit(&mut b);
        b.finish()
    }
}

pub fn build_modular_adder(n: usize, m: u64) -> Result<AdderTile, ArithError> {
    let residues = ResidueTable::new(n, m)?;
    let mut b = CircuitBuilder::new();
    let module = b.module("adder");
    let (program, ports) = tile_program(&mut b, module, [0, 0], n, m)?;
    program.emit(&mut b);
    Ok(AdderTile { n, m, residues, plan: adder_plan(n, m), program, ports, circuit: b.finish() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residues_are_nonzero() {
        for n in 2..=8 {
            for m in ((1u64 << (n - 1)) + 1..1u64 << n).step_by(2) {
                let r = ResidueTable::new(n, m).unwrap();
                assert!(r.r1 > 0 && r.r3 > 0 && r.r1 < m);
            }
        }
        assert!(ResidueTable::new(3, 8).is_err());
        assert!(ResidueTable::new(3, 9).is_err());
    }

    #[test]
    fn carry_save_round_trip() {
        let x = CarrySaveNumber::encode(41);
        assert_eq!(x.decode(), 41);
        let y = CarrySaveNumber::from_bits(&[true, false, true], &[false, true, true]);
        assert_eq!(y.decode(), 5 + 6);
    }

    #[test]
    fn cell_resources() {
        let r = build_toffoli().resources();
        assert_eq!((r.depth, r.size, r.width), (8, 15, 3));
        let r = build_single_bit_csa().resources();
        assert!(r.depth <= 33);
        assert_eq!((r.size, r.width), (55, 5));
        let r = build_two_two_adder().resources();
        assert!(r.depth <= 33 && r.size <= 55 && r.width == 4);
        let r = build_csa_layer(4).resources();
        assert!(r.depth <= 33);
        assert_eq!((r.size, r.width), (220, 20));
    }
}
