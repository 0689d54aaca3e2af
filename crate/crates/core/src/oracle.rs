//! Classical reference arithmetic used as ground truth by the tests and the
//! semantic simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Parity and majority of three bits.
pub fn oracle_csa_bit(a: bool, b: bool, c: bool) -> (bool, bool) {
    (a ^ b ^ c, (a & b) | (a & c) | (b & c))
}

pub fn oracle_modmul(x: u128, y: u128, m: u128) -> u128 {
    assert!(m >= 2);
    ((x % m) * (y % m)) % m
}

pub fn oracle_modexp(a: u128, mut x: u128, m: u128) -> u128 {
    assert!(m >= 2);
    let mut base = a % m;
    let mut acc = 1 % m;
    while x > 0 {
        if x & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        x >>= 1;
    }
    acc
}

/// What happens at one significance within one adder layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CellKind {
    /// 3-2 adder; absent inputs are zero.
    Full,
    /// Sum bit and carry bit only.
    HalfUv,
    /// A lone carry bit moved into the sum position.
    PassV,
    /// Two bits at the top significance; the carry is provably zero.
    Xor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AdderLayer {
    /// Residue added in this layer (zero for the first layer).
    pub residue: u64,
    /// Cell per significance 0..=n+1; None where no bit is present.
    pub cells: Vec<Option<CellKind>>,
}

/// Cell placement of the four-layer modular adder. The structure depends only on
/// n: residue bits that are zero still get a cell, fed by a zero ancilla.
pub fn adder_plan(n: usize, m: u64) -> Vec<AdderLayer> {
    let top = n + 1;
    let r1 = ((1u128 << (n + 1)) % m as u128) as u64;
    let r3 = ((1u128 << (n + 2)) % m as u128) as u64;
    let mut layers = vec![AdderLayer { residue: 0, cells: vec![Some(CellKind::Full); top + 1] }];
    for (k, r) in [r1, r1, r3].into_iter().enumerate() {
        let mut cells = vec![Some(CellKind::Full); n];
        cells.push(Some(CellKind::HalfUv));
        cells.push([None, Some(CellKind::PassV), Some(CellKind::Xor)][k]);
        layers.push(AdderLayer { residue: r, cells });
    }
    layers
}

/// Bit-exact classical replay of the tile on basis inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AdderReplay {
    /// u‴ bits, significance 0..=n+1.
    pub u: Vec<bool>,
    /// v‴ bits indexed by significance 0..=n+1 (index 0 always false).
    pub v: Vec<bool>,
    /// The would-be carry into significance n+2 (always false).
    pub overflow: bool,
    /// Truncated control bits v_{n+1}, u_{n+1}, v_{n+2}.
    pub controls: [bool; 3],
}

impl AdderReplay {
    pub fn u_value(&self) -> u128 {
        bits_value(&self.u)
    }

    pub fn v_value(&self) -> u128 {
        bits_value(&self.v)
    }

    pub fn value(&self) -> u128 {
        self.u_value() + self.v_value()
    }
}

pub fn bits_value(bits: &[bool]) -> u128 {
    bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | ((b as u128) << i))
}

pub fn value_bits(x: u128, width: usize) -> Vec<bool> {
    (0..width).map(|i| (x >> i) & 1 == 1).collect()
}

/// Replays the four adder layers on (n+2)-bit inputs.
pub fn oracle_modular_adder(a: u128, b: u128, c: u128, n: usize, m: u64) -> AdderReplay {
    let top = n + 1;
    let w = n + 2;
    assert!(a >> w == 0 && b >> w == 0 && c >> w == 0, "inputs exceed {w} bits");
    let plan = adder_plan(n, m);
    let (a, b, c) = (value_bits(a, w), value_bits(b, w), value_bits(c, w));
    let mut u = vec![false; top + 2];
    let mut v = vec![false; top + 2];
    for i in 0..=top {
        let (s, cy) = oracle_csa_bit(a[i], b[i], c[i]);
        u[i] = s;
        v[i + 1] = cy;
    }
    let controls = [v[top], u[top], v[top + 1]];
    u[top] = false;
    v[top] = false;
    v[top + 1] = false;
    let mut overflow = false;
    for (layer, ctl) in plan[1..].iter().zip(controls) {
        let mut nu = vec![false; top + 2];
        let mut nv = vec![false; top + 2];
        for (i, cell) in layer.cells.iter().enumerate() {
            let Some(kind) = cell else { continue };
            let cbit = ctl && (layer.residue >> i) & 1 == 1;
            match kind {
                CellKind::Full | CellKind::HalfUv => {
                    let (s, cy) = oracle_csa_bit(u[i], v[i], cbit);
                    nu[i] = s;
                    nv[i + 1] = cy;
                }
                CellKind::PassV => nu[i] = v[i],
                CellKind::Xor => {
                    nu[i] = u[i] ^ v[i];
                    overflow |= u[i] & v[i];
                }
            }
        }
        u = nu;
        v = nv;
    }
    u.truncate(top + 1);
    v.truncate(top + 1);
    AdderReplay { u, v, overflow, controls }
}

/// A named set of input tuples with expected results.
#[derive(Clone, Debug, Serialize)]
pub struct TestVectorSet {
    pub name: String,
    pub params: Vec<u64>,
    pub vectors: Vec<(Vec<u128>, u128)>,
}

/// Adder vectors: corners first, then seeded random fill up to `budget`.
pub fn make_adder_vectors(n: usize, m: u64, budget: usize, seed: u64) -> TestVectorSet {
    let max = (1u128 << (n + 2)) - 1;
    let mut ins: Vec<[u128; 3]> = vec![[0, 0, 0], [max, max, max], [max, 0, 0], [0, max, 0], [0, 0, max]];
    let mm = m as u128;
    for x in [mm - 1, mm, mm + 1] {
        if x <= max {
            ins.push([x, x, x]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while ins.len() < budget {
        ins.push([rng.gen_range(0..=max), rng.gen_range(0..=max), rng.gen_range(0..=max)]);
    }
    ins.truncate(budget.max(5));
    TestVectorSet {
        name: "modular_adder".into(),
        params: vec![n as u64, m],
        vectors: ins.into_iter().map(|[a, b, c]| (vec![a, b, c], (a + b + c) % mm)).collect(),
    }
}

/// All (x, y) pairs below 2^n.
pub fn make_multiplier_vectors(n: usize, m: u64) -> TestVectorSet {
    let lim = 1u128 << n;
    let mm = m as u128;
    let vectors = (0..lim).flat_map(|x| (0..lim).map(move |y| (vec![x, y], oracle_modmul(x, y, mm)))).collect();
    TestVectorSet { name: "multiplier".into(), params: vec![n as u64, m], vectors }
}

/// All 2^t control assignments for base `a`: expected a^x mod m.
pub fn make_modexp_vectors(a: u64, m: u64, t: usize) -> TestVectorSet {
    let vectors = (0..1u128 << t).map(|x| (vec![x], oracle_modexp(a as u128, x, m as u128))).collect();
    TestVectorSet { name: "modexp".into(), params: vec![a, m, t as u64], vectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csa_truth_table() {
        assert_eq!(oracle_csa_bit(false, false, false), (false, false));
        assert_eq!(oracle_csa_bit(true, true, true), (true, true));
        for i in 0..8u8 {
            let (a, b, c) = (i & 1 == 1, i & 2 == 2, i & 4 == 4);
            let ones = i.count_ones();
            assert_eq!(oracle_csa_bit(a, b, c), (ones % 2 == 1, ones >= 2));
        }
    }

    #[test]
    fn modular_helpers() {
        assert_eq!(oracle_modmul(5, 6, 7), 2);
        assert_eq!(oracle_modmul(9, 1, 7), 2);
        assert_eq!(oracle_modexp(3, 5, 7), 5);
        assert_eq!(oracle_modexp(3, 0, 7), 1);
    }

    #[test]
    fn n3_layers_truncate_and_add_back() {
        // m = 5: r1 = 16 mod 5 = 1, r3 = 32 mod 5 = 2
        let plan = adder_plan(3, 5);
        assert_eq!(plan.len(), 4);
        assert_eq!(plan[1].residue, 1);
        assert_eq!(plan[2].residue, 1);
        assert_eq!(plan[3].residue, 2);
        assert_eq!(plan[1].cells[0], Some(CellKind::Full));
        assert_eq!(plan[1].cells[3], Some(CellKind::HalfUv));
        assert_eq!(plan[1].cells[4], None);
        assert_eq!(plan[2].cells[4], Some(CellKind::PassV));
        assert_eq!(plan[3].cells[4], Some(CellKind::Xor));
    }

    #[test]
    fn exhaustive_congruence_and_no_overflow() {
        for (n, ms) in [(2usize, vec![3u64]), (3, vec![5, 7])] {
            let lim = 1u128 << (n + 2);
            for m in ms {
                for a in 0..lim {
                    for b in 0..lim {
                        for c in 0..lim {
                            let r = oracle_modular_adder(a, b, c, n, m);
                            assert!(!r.overflow);
                            assert_eq!(r.value() % m as u128, (a + b + c) % m as u128);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn vector_generators() {
        let v = make_adder_vectors(2, 3, 200, 1);
        assert_eq!(v.vectors.len(), 200);
        assert!(v.vectors.iter().any(|(x, _)| x == &vec![0, 0, 0]));
        assert!(v.vectors.iter().any(|(x, _)| x == &vec![15, 15, 15]));
        assert_eq!(make_multiplier_vectors(3, 7).vectors.len(), 64);
        assert_eq!(make_modexp_vectors(3, 7, 3).vectors.len(), 8);
    }
}
