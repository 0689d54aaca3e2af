//! Modular multiplier: partial products on a routing lattice, residue fanout at
//! z-sites, and a tree of adder tiles that reduces the partial products mod m.

use crate::arith::{check_params, tile_program, ArithError, CarrySaveNumber, TilePorts};
use crate::comm::{CatPlan, Member, Program, ReplayError, Segment};
use crate::formulas::ppc_rounds;
use crate::hier::{HierCircuit, HierError, Instance, Placement, Semantic, Stage};
use crate::model::{Circuit, CircuitBuilder, ModuleId, QubitId};
use crate::oracle::oracle_modular_adder;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MultError {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Hier(#[from] HierError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("the serial variant needs a classical base")]
    MissingBase,
    #[error("carry-save input ({u}, {v}) out of range for n={n}")]
    InputRange { u: u128, v: u128, n: usize },
    #[error("at least one number is needed")]
    NoNumbers,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// Both operands quantum: one z-site per high-significance bit pair.
    Parallel,
    /// Classical base a times a quantum x: one z-site per bit of x.
    Serial,
}

/// Width of a multiplier operand: u bits 0..=n+1 then v bits 1..=n+1.
pub fn operand_bits(n: usize) -> usize {
    2 * n + 3
}

/// Significance of operand bit k.
pub fn operand_sig(n: usize, k: usize) -> usize {
    if k < n + 2 {
        k
    } else {
        k - (n + 1)
    }
}

pub fn operand_bit(x: &CarrySaveNumber, n: usize, k: usize) -> bool {
    if k < n + 2 {
        (x.u >> k) & 1 == 1
    } else {
        (x.v >> (k - (n + 1))) & 1 == 1
    }
}

fn check_operand(x: &CarrySaveNumber, n: usize) -> Result<(), MultError> {
    let lim = 1u128 << (n + 2);
    if x.u >= lim || x.v >= lim || x.v & 1 == 1 {
        return Err(MultError::InputRange { u: x.u, v: x.v, n });
    }
    Ok(())
}

/// One partial-product bit: x_i·y_j (parallel) or x_i (serial).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Product {
    pub i: usize,
    pub j: Option<usize>,
    pub sig: usize,
}

/// A partial product materialised as an n-bit residue times one control bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ZSite {
    pub product: Product,
    pub residue: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartialProductPlan {
    pub n: usize,
    pub m: u64,
    pub variant: Variant,
    pub base: Option<u64>,
    pub z_sites: Vec<ZSite>,
    /// Low-significance products packed into n-bit numbers.
    pub single_bit_groups: Vec<Vec<Product>>,
}

impl PartialProductPlan {
    /// Numbers handed to the addition tree: groups first, then z-sites.
    pub fn t_prime(&self) -> usize {
        self.single_bit_groups.len() + self.z_sites.len()
    }

    pub fn products(&self) -> usize {
        self.z_sites.len() + self.single_bit_groups.iter().map(|g| g.len()).sum::<usize>()
    }

    /// Values of the t′ numbers for given control bits.
    fn number_values(&self, bit: impl Fn(&Product) -> bool) -> Vec<u128> {
        let groups = self.single_bit_groups.iter().map(|g| g.iter().filter(|p| bit(p)).map(|p| 1u128 << p.sig).sum());
        let zs = self.z_sites.iter().map(|z| if bit(&z.product) { z.residue as u128 } else { 0 });
        groups.chain(zs).collect()
    }
}

/// Partial-product plan. Residues are precomputed classically; low products are
/// packed first-fit in ascending significance.
pub fn plan_partial_products(
    n: usize,
    m: u64,
    variant: Variant,
    base: Option<u64>,
) -> Result<PartialProductPlan, MultError> {
    check_params(n, m)?;
    let mut z_sites = Vec::new();
    let mut singles = Vec::new();
    match variant {
        Variant::Parallel => {
            let w = operand_bits(n);
            for i in 0..w {
                for j in 0..w {
                    let sig = operand_sig(n, i) + operand_sig(n, j);
                    let product = Product { i, j: Some(j), sig };
                    if sig < n {
                        singles.push(product);
                    } else {
                        let residue = ((1u128 << sig) % m as u128) as u64;
                        z_sites.push(ZSite { product, residue });
                    }
                }
            }
        }
        Variant::Serial => {
            let a = base.ok_or(MultError::MissingBase)? % m;
            for i in 0..n {
                let residue = ((a as u128) << i) % m as u128;
                if residue != 0 {
                    z_sites.push(ZSite { product: Product { i, j: None, sig: i }, residue: residue as u64 });
                }
            }
        }
    }
    singles.sort_by_key(|p| p.sig);
    let mut groups: Vec<Vec<Product>> = Vec::new();
    for p in singles {
        match groups.iter_mut().find(|g| g.iter().all(|q| q.sig != p.sig)) {
            Some(g) => g.push(p),
            None => groups.push(vec![p]),
        }
    }
    Ok(PartialProductPlan { n, m, variant, base, z_sites, single_bit_groups: groups })
}

/// A number flowing through the addition tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum NumRef {
    Input(usize),
    /// Padding when fewer than three inputs exist.
    Zero,
    U(usize),
    V(usize),
}

/// Tiles per stage of the modular-multiple-addition tree. Each stage takes whole
/// triples from the front of the pool; leftovers move forward ahead of the new
/// tile outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MmaPlan {
    pub inputs: usize,
    /// Input triples per tile, tiles numbered consecutively across stages.
    pub stages: Vec<Vec<[NumRef; 3]>>,
}

impl MmaPlan {
    pub fn new(inputs: usize) -> Result<MmaPlan, MultError> {
        if inputs == 0 {
            return Err(MultError::NoNumbers);
        }
        let mut pool: Vec<NumRef> = (0..inputs).map(NumRef::Input).collect();
        while pool.len() < 3 {
            pool.push(NumRef::Zero);
        }
        let mut stages = Vec::new();
        let mut next_tile = 0;
        while pool.len() > 2 {
            let k = pool.len() / 3;
            let tiles: Vec<[NumRef; 3]> = pool[..3 * k].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            let mut next: Vec<NumRef> = pool[3 * k..].to_vec();
            for t in next_tile..next_tile + k {
                next.push(NumRef::U(t));
                next.push(NumRef::V(t));
            }
            next_tile += k;
            stages.push(tiles);
            pool = next;
        }
        Ok(MmaPlan { inputs, stages })
    }

    pub fn tile_count(&self) -> usize {
        self.stages.iter().map(|s| s.len()).sum()
    }

    /// (stage, tile id, inputs) in execution order.
    pub fn tiles(&self) -> Vec<(usize, usize, [NumRef; 3])> {
        let mut out = Vec::new();
        for (s, st) in self.stages.iter().enumerate() {
            for t in st {
                out.push((s, out.len(), *t));
            }
        }
        out
    }

    pub fn final_tile(&self) -> usize {
        self.tile_count() - 1
    }

    /// Classical evaluation with the bit-exact tile oracle.
    pub fn evaluate(&self, values: &[u128], n: usize, m: u64) -> CarrySaveNumber {
        let mut outs: Vec<(u128, u128)> = Vec::with_capacity(self.tile_count());
        let get = |r: &NumRef, outs: &Vec<(u128, u128)>| match *r {
            NumRef::Input(k) => values[k],
            NumRef::Zero => 0,
            NumRef::U(t) => outs[t].0,
            NumRef::V(t) => outs[t].1,
        };
        for (_, _, ins) in self.tiles() {
            let r = oracle_modular_adder(get(&ins[0], &outs), get(&ins[1], &outs), get(&ins[2], &outs), n, m);
            outs.push((r.u_value(), r.v_value()));
        }
        let (u, v) = outs[self.final_tile()];
        CarrySaveNumber { u, v }
    }
}

pub fn mma_stage_count(t: usize) -> usize {
    MmaPlan::new(t).map(|p| p.stages.len()).unwrap_or(0)
}

/// Classical multiplication through the plan and tree; output is congruent to
/// x·y mod m.
pub fn semantic_multiply(
    x: &CarrySaveNumber,
    y: &CarrySaveNumber,
    n: usize,
    m: u64,
) -> Result<CarrySaveNumber, MultError> {
    check_operand(x, n)?;
    check_operand(y, n)?;
    let plan = plan_partial_products(n, m, Variant::Parallel, None)?;
    let mma = MmaPlan::new(plan.t_prime())?;
    let vals = plan.number_values(|p| operand_bit(x, n, p.i) && operand_bit(y, n, p.j.unwrap()));
    Ok(mma.evaluate(&vals, n, m))
}

/// Classical a·x mod m through the serial plan.
pub fn semantic_multiply_serial(x: u128, a: u64, n: usize, m: u64) -> Result<CarrySaveNumber, MultError> {
    if x >> n != 0 {
        return Err(MultError::InputRange { u: x, v: 0, n });
    }
    let plan = plan_partial_products(n, m, Variant::Serial, Some(a))?;
    let mma = MmaPlan::new(plan.t_prime().max(1))?;
    let mut vals = plan.number_values(|p| (x >> p.i) & 1 == 1);
    if vals.is_empty() {
        vals.push(0);
    }
    Ok(mma.evaluate(&vals, n, m))
}

/// Where a tile runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TileHome {
    Fresh,
    /// Hosted next to the z-site with this index.
    ZSite(usize),
}

/// First-stage tiles get their own modules. Later tiles move into unused z-site
/// modules that hold none of their inputs, so every hop is a real teleport.
pub fn assign_tile_homes(plan: &PartialProductPlan, mma: &MmaPlan) -> Vec<TileHome> {
    let groups = plan.single_bit_groups.len();
    let mut homes: Vec<TileHome> = Vec::new();
    let mut used = vec![false; plan.z_sites.len()];
    for (stage, _, ins) in mma.tiles() {
        if stage == 0 {
            homes.push(TileHome::Fresh);
            continue;
        }
        let source_z = |r: &NumRef| match *r {
            NumRef::Input(k) if k >= groups => Some(k - groups),
            NumRef::U(t) | NumRef::V(t) => match homes[t] {
                TileHome::ZSite(z) => Some(z),
                TileHome::Fresh => None,
            },
            _ => None,
        };
        let busy: Vec<usize> = ins.iter().filter_map(source_z).collect();
        match (0..used.len()).find(|&z| !used[z] && !busy.contains(&z)) {
            Some(z) => {
                used[z] = true;
                homes.push(TileHome::ZSite(z));
            }
            None => homes.push(TileHome::Fresh),
        }
    }
    homes
}

/// One output bit with the ancilla it is copied into before leaving its module.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct OutBit {
    sig: usize,
    src: QubitId,
    anc: QubitId,
}

const TILE_HOST_ORIGIN: [i32; 2] = [0, 3];

/// Adder tile plus send ancillae next to each output.
fn tile_with_outputs(
    g: &mut CircuitBuilder,
    module: ModuleId,
    origin: [i32; 2],
    n: usize,
    m: u64,
) -> Result<(Program, TilePorts, Vec<OutBit>, Vec<OutBit>), ArithError> {
    let (core, ports) = tile_program(g, module, origin, n, m)?;
    let anc_of = |g: &mut CircuitBuilder, q: QubitId| {
        let c = g.qubit(q).coord;
        let (x, y) = if c[1] - origin[1] == 4 { (c[0], c[1] + 1) } else { (c[0] + 1, c[1] + 1) };
        g.at(module, x, y)
    };
    let mut us = Vec::new();
    for (sig, &q) in ports.u.iter().enumerate() {
        us.push(OutBit { sig, src: q, anc: anc_of(g, q) });
    }
    let mut vs = Vec::new();
    for (sig, q) in ports.v.iter().enumerate() {
        if let Some(q) = *q {
            vs.push(OutBit { sig, src: q, anc: anc_of(g, q) });
        }
    }
    Ok((core, ports, us, vs))
}

/// z-site: a line fanout of the product bit p to one copy per set bit of the
/// residue, each copy with a send ancilla below it.
fn zsite_program(g: &mut CircuitBuilder, module: ModuleId, residue: u64) -> (Program, QubitId, Vec<OutBit>) {
    let top = 63 - residue.leading_zeros() as usize;
    let p = g.at(module, 0, 0);
    let mut segments = Vec::new();
    let mut outs = Vec::new();
    for s in 0..=top {
        let x = 3 * s as i32;
        let member = g.at(module, x + 2, 0);
        let mut members = vec![if (residue >> s) & 1 == 1 { Member::Copy(member) } else { Member::Dummy(member) }];
        if (residue >> s) & 1 == 1 {
            outs.push(OutBit { sig: s, src: member, anc: g.at(module, x + 2, 1) });
        }
        if s < top {
            members.push(Member::Link(g.at(module, x + 3, 0)));
        }
        segments.push(Segment { head: g.at(module, x + 1, 0), members });
    }
    let mut prog = Program::new();
    prog.fanout(CatPlan { source: p, segments, consume_source: false, resets: true });
    (prog, p, outs)
}

/// Qubits of the routing lattice.
struct Lattice {
    x: Vec<QubitId>,
    y: Vec<QubitId>,
    /// Product bit and its send ancilla per (i, j).
    t: Vec<Vec<(QubitId, QubitId)>>,
}

/// Routing lattice, one module per block row j. Block (i, j) sits in columns
/// 3i..3i+2 of row module j: row 0 is the y corridor, row 1 holds Y and the
/// product's send ancilla, row 2 holds the x helper, X and the product T.
fn lattice_program(g: &mut CircuitBuilder, rows: &[ModuleId], n: usize) -> (Program, Lattice) {
    let w = operand_bits(n);
    let k_rounds = ppc_rounds(n as u64) as usize;
    let at = |g: &mut CircuitBuilder, j: usize, x: usize, y: usize| g.at(rows[j], x as i32, y as i32);
    let mut p = Program::new();
    for r in 0..k_rounds {
        let h = 1usize << (k_rounds - r - 1);
        for j in (0..w).step_by(2 * h).filter(|j| j + h < w) {
            for i in 0..w {
                let (src, help, dst) = (at(g, j, 3 * i + 1, 2), at(g, j, 3 * i, 2), at(g, j + h, 3 * i + 1, 2));
                p.send(src, help, dst);
            }
        }
        for i in (0..w).step_by(2 * h).filter(|i| i + h < w) {
            for j in 0..w {
                let y = at(g, j, 3 * i + 1, 1);
                let help = at(g, j, 3 * i + 2, 0);
                p.cnot(y, help);
                let end = if h % 2 == 1 { 3 * (i + h) } else { 3 * (i + h) + 1 };
                let mut path: Vec<QubitId> = (3 * i + 2..=end).map(|x| at(g, j, x, 0)).collect();
                path.push(at(g, j, 3 * (i + h) + 1, 1));
                p.mv(path);
            }
        }
    }
    let mut t = vec![Vec::with_capacity(w); w];
    for (i, ti) in t.iter_mut().enumerate() {
        for j in 0..w {
            let (xq, yq, tq) = (at(g, j, 3 * i + 1, 2), at(g, j, 3 * i + 1, 1), at(g, j, 3 * i + 2, 2));
            p.toffoli(xq, yq, tq);
            ti.push((tq, at(g, j, 3 * i + 2, 1)));
        }
    }
    let x = (0..w).map(|i| at(g, 0, 3 * i + 1, 2)).collect();
    let y = (0..w).map(|j| at(g, j, 1, 1)).collect();
    (p, Lattice { x, y, t })
}

/// Serial operand: x_i at (2i, 0) with its send ancilla at (2i, 1).
fn serial_inputs(g: &mut CircuitBuilder, module: ModuleId, n: usize) -> Vec<(QubitId, QubitId)> {
    (0..n as i32).map(|i| (g.at(module, 2 * i, 0), g.at(module, 2 * i, 1))).collect()
}

/// Identifies one leaf of the multiplier hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum LeafKey {
    PpcFwd,
    PpcMirror,
    ZFwd(usize),
    ZMirror(usize),
    TileFwd(usize),
    TileMirror(usize),
}

trait LeafSource {
    fn leaf(&mut self, key: LeafKey) -> Result<Arc<HierCircuit>, MultError>;
    /// The teleport timestep that follows the given forward leaves.
    fn teleports(&mut self, keys: &[LeafKey]) -> Option<Stage>;
}

fn compute_stage(src: &mut dyn LeafSource, keys: &[(LeafKey, Placement)]) -> Result<Stage, MultError> {
    let mut insts: Vec<Instance> = Vec::new();
    for &(k, pl) in keys {
        let leaf = src.leaf(k)?;
        match insts.iter_mut().find(|i| i.placement == pl && Arc::ptr_eq(&i.child, &leaf)) {
            Some(i) => i.count += 1,
            None => insts.push(Instance::new(leaf, 1, pl)),
        }
    }
    Ok(Stage::Compute(insts))
}

fn assemble(
    z_count: usize,
    mma: Option<(&MmaPlan, &[TileHome])>,
    src: &mut dyn LeafSource,
) -> Result<Vec<Stage>, MultError> {
    let mut stages = vec![compute_stage(src, &[(LeafKey::PpcFwd, Placement::Fresh)])?];
    stages.extend(src.teleports(&[LeafKey::PpcFwd]));
    let zkeys: Vec<LeafKey> = (0..z_count).map(LeafKey::ZFwd).collect();
    if z_count > 0 {
        let ks: Vec<_> = zkeys.iter().map(|&k| (k, Placement::Fresh)).collect();
        stages.push(compute_stage(src, &ks)?);
        stages.extend(src.teleports(&zkeys));
    }
    let tiles = mma.map(|(p, _)| p.tiles()).unwrap_or_default();
    let n_stages = mma.map_or(0, |(p, _)| p.stages.len());
    for s in 0..n_stages {
        let homes = mma.unwrap().1;
        let ks: Vec<(LeafKey, Placement)> = tiles
            .iter()
            .filter(|t| t.0 == s)
            .map(|t| {
                let pl = if homes[t.1] == TileHome::Fresh { Placement::Fresh } else { Placement::Host };
                (LeafKey::TileFwd(t.1), pl)
            })
            .collect();
        stages.push(compute_stage(src, &ks)?);
        if s + 1 < n_stages {
            let keys: Vec<LeafKey> = ks.iter().map(|k| k.0).collect();
            stages.extend(src.teleports(&keys));
        }
    }
    for s in (0..n_stages).rev() {
        let ks: Vec<_> =
            tiles.iter().filter(|t| t.0 == s).map(|t| (LeafKey::TileMirror(t.1), Placement::Reuse)).collect();
        stages.push(compute_stage(src, &ks)?);
    }
    if z_count > 0 {
        let ks: Vec<_> = (0..z_count).map(|z| (LeafKey::ZMirror(z), Placement::Reuse)).collect();
        stages.push(compute_stage(src, &ks)?);
    }
    stages.push(compute_stage(src, &[(LeafKey::PpcMirror, Placement::Reuse)])?);
    Ok(stages)
}

/// A block's forward program and the sends (or copy-out) that follow it.
#[derive(Clone, Debug, Default)]
struct Part {
    core: Program,
    sends: Program,
    /// Mirror the sends too; false for the final copy-out.
    mirror_sends: bool,
}

impl Part {
    fn forward(&self, decl: &Circuit) -> (Circuit, Vec<(QubitId, QubitId)>) {
        let mut b = CircuitBuilder::like(decl);
        self.core.emit(&mut b);
        let pairs = self.sends.emit_local(&mut b);
        (b.finish(), pairs)
    }

    fn mirror(&self, decl: &Circuit) -> Circuit {
        let mut b = CircuitBuilder::like(decl);
        if self.mirror_sends {
            self.sends.inverse().emit(&mut b);
        }
        self.core.inverse().emit(&mut b);
        b.finish()
    }
}

/// Leaves built on one shared declaration of every qubit.
struct Concrete {
    decl: Arc<Circuit>,
    ppc: Part,
    z: Vec<Part>,
    tiles: Vec<Part>,
    pairs: HashMap<LeafKey, Vec<(QubitId, QubitId)>>,
}

impl Concrete {
    fn part(&self, key: LeafKey) -> &Part {
        match key {
            LeafKey::PpcFwd | LeafKey::PpcMirror => &self.ppc,
            LeafKey::ZFwd(z) | LeafKey::ZMirror(z) => &self.z[z],
            LeafKey::TileFwd(t) | LeafKey::TileMirror(t) => &self.tiles[t],
        }
    }
}

fn key_name(key: LeafKey) -> String {
    match key {
        LeafKey::PpcFwd => "ppc".into(),
        LeafKey::PpcMirror => "ppc-mirror".into(),
        LeafKey::ZFwd(z) => format!("zsite{z}"),
        LeafKey::ZMirror(z) => format!("zsite{z}-mirror"),
        LeafKey::TileFwd(t) => format!("tile{t}"),
        LeafKey::TileMirror(t) => format!("tile{t}-mirror"),
    }
}

impl LeafSource for Concrete {
    fn leaf(&mut self, key: LeafKey) -> Result<Arc<HierCircuit>, MultError> {
        let c = match key {
            LeafKey::PpcFwd | LeafKey::ZFwd(_) | LeafKey::TileFwd(_) => {
                let (c, pairs) = self.part(key).forward(&self.decl);
                self.pairs.insert(key, pairs);
                c
            }
            _ => self.part(key).mirror(&self.decl),
        };
        Ok(Arc::new(HierCircuit::leaf(&key_name(key), c)))
    }

    fn teleports(&mut self, keys: &[LeafKey]) -> Option<Stage> {
        let pairs: Vec<_> = keys.iter().flat_map(|k| self.pairs.get(k).cloned().unwrap_or_default()).collect();
        (!pairs.is_empty()).then_some(Stage::Teleport(pairs))
    }
}

/// A fully placed multiplier on one qubit declaration.
#[derive(Clone, Debug)]
pub struct Multiplier {
    pub n: usize,
    pub m: u64,
    pub plan: PartialProductPlan,
    pub mma: MmaPlan,
    pub homes: Vec<TileHome>,
    pub hier: HierCircuit,
    pub decl: Arc<Circuit>,
    /// Operand qubits by bit index (y is empty for the serial variant).
    pub x_in: Vec<QubitId>,
    pub y_in: Vec<QubitId>,
    /// Result register: u by significance 0..=n+1, v by significance 1..=n+1.
    pub out_u: Vec<QubitId>,
    pub out_v: Vec<QubitId>,
    /// (source significance, destination significance) of every send into a tile.
    pub alignment: Vec<(usize, usize)>,
    schedule: Vec<Program>,
}

/// Result of a classical replay of the whole multiplier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub result: CarrySaveNumber,
    /// Every qubit other than the operands and the result register ended in 0,
    /// and the operands were restored.
    pub clean: bool,
}

impl Multiplier {
    /// The whole multiplier as one circuit.
    pub fn flatten(&self) -> Result<Circuit, MultError> {
        Ok(self.hier.flatten()?)
    }

    /// Runs every program on basis values (teleports as moves, fanouts as copies).
    pub fn replay(&self, x: &CarrySaveNumber, y: &CarrySaveNumber) -> Result<ReplayOutcome, MultError> {
        let mut bits = vec![false; self.decl.qubits.len()];
        let mut inputs = Vec::new();
        match self.plan.variant {
            Variant::Parallel => {
                check_operand(x, self.n)?;
                check_operand(y, self.n)?;
                for (k, &q) in self.x_in.iter().enumerate() {
                    inputs.push((q, operand_bit(x, self.n, k)));
                }
                for (k, &q) in self.y_in.iter().enumerate() {
                    inputs.push((q, operand_bit(y, self.n, k)));
                }
            }
            Variant::Serial => {
                for (k, &q) in self.x_in.iter().enumerate() {
                    inputs.push((q, (x.u >> k) & 1 == 1));
                }
            }
        }
        for &(q, b) in &inputs {
            bits[q] = b;
        }
        for p in &self.schedule {
            p.replay(&mut bits)?;
        }
        let u = self.out_u.iter().enumerate().map(|(s, &q)| (bits[q] as u128) << s).sum();
        let v = self.out_v.iter().enumerate().map(|(s, &q)| (bits[q] as u128) << (s + 1)).sum();
        let mut expect = vec![false; bits.len()];
        for &(q, b) in &inputs {
            expect[q] = b;
        }
        for &q in self.out_u.iter().chain(&self.out_v) {
            expect[q] = bits[q];
        }
        Ok(ReplayOutcome { result: CarrySaveNumber { u, v }, clean: expect == bits })
    }
}

/// Where each of the t′ numbers' bits live before they are sent.
enum NumberSource {
    Group(usize),
    Z(usize),
}

/// Operand lattice program, x and y qubits, and (product, send ancilla) by (i, j).
type Operands = (Program, Vec<QubitId>, Vec<QubitId>, Vec<Vec<(QubitId, QubitId)>>);

/// Builds the multiplier on one declaration: lattice (or serial input module),
/// z-sites, adder tiles, sends between them, copy-out, and the mirrored uncompute.
pub fn build_modular_multiplier(
    n: usize,
    m: u64,
    variant: Variant,
    base: Option<u64>,
) -> Result<Multiplier, MultError> {
    let plan = plan_partial_products(n, m, variant, base)?;
    let mma = MmaPlan::new(plan.t_prime().max(1))?;
    let homes = assign_tile_homes(&plan, &mma);
    let mut g = CircuitBuilder::new();

    // operands and product bits
    let (ppc_core, x_in, y_in, product_bits): Operands = match variant {
        Variant::Parallel => {
            let rows: Vec<ModuleId> = (0..operand_bits(n)).map(|j| g.module(&format!("ppc{j}"))).collect();
            let (p, lat) = lattice_program(&mut g, &rows, n);
            (p, lat.x, lat.y, lat.t)
        }
        Variant::Serial => {
            let md = g.module("x");
            let ins = serial_inputs(&mut g, md, n);
            let xs = ins.iter().map(|b| b.0).collect();
            (Program::new(), xs, Vec::new(), ins.into_iter().map(|b| vec![b]).collect())
        }
    };
    let product_bit = |p: &Product| match p.j {
        Some(j) => product_bits[p.i][j],
        None => product_bits[p.i][0],
    };

    let mut zmods = Vec::new();
    let mut z_parts = Vec::new();
    let mut z_p = Vec::new();
    let mut z_outs = Vec::new();
    for (k, z) in plan.z_sites.iter().enumerate() {
        let md = g.module(&format!("z{k}"));
        let (prog, p, outs) = zsite_program(&mut g, md, z.residue);
        zmods.push(md);
        z_parts.push(Part { core: prog, sends: Program::new(), mirror_sends: true });
        z_p.push(p);
        z_outs.push(outs);
    }

    let mut tile_parts = Vec::new();
    let mut tile_ports = Vec::new();
    let mut tile_outs = Vec::new();
    for (t, home) in homes.iter().enumerate() {
        let (md, origin) = match *home {
            TileHome::Fresh => (g.module(&format!("tile{t}")), [0, 0]),
            TileHome::ZSite(z) => (zmods[z], TILE_HOST_ORIGIN),
        };
        let (core, ports, us, vs) = tile_with_outputs(&mut g, md, origin, n, m)?;
        tile_parts.push(Part { core, sends: Program::new(), mirror_sends: true });
        tile_ports.push(ports);
        tile_outs.push((us, vs));
    }

    let mut ppc = Part { core: ppc_core, sends: Program::new(), mirror_sends: true };
    for (k, z) in plan.z_sites.iter().enumerate() {
        let (src, anc) = product_bit(&z.product);
        ppc.sends.send(src, anc, z_p[k]);
    }
    let groups = plan.single_bit_groups.len();
    let source_of = |k: usize| if k < groups { NumberSource::Group(k) } else { NumberSource::Z(k - groups) };
    let mut alignment = Vec::new();
    for (_, t, ins) in mma.tiles() {
        for (pos, r) in ins.iter().enumerate() {
            let dst = tile_ports[t].inputs(pos).to_vec();
            let (bits, prog): (Vec<OutBit>, &mut Program) = match *r {
                NumRef::Zero => continue,
                NumRef::Input(k) => match source_of(k) {
                    NumberSource::Group(gi) => {
                        let bits = plan.single_bit_groups[gi]
                            .iter()
                            .map(|p| {
                                let (src, anc) = product_bit(p);
                                OutBit { sig: p.sig, src, anc }
                            })
                            .collect();
                        (bits, &mut ppc.sends)
                    }
                    NumberSource::Z(z) => (z_outs[z].clone(), &mut z_parts[z].sends),
                },
                NumRef::U(s) => (tile_outs[s].0.clone(), &mut tile_parts[s].sends),
                NumRef::V(s) => (tile_outs[s].1.clone(), &mut tile_parts[s].sends),
            };
            for b in bits {
                prog.send(b.src, b.anc, dst[b.sig]);
                alignment.push((b.sig, tile_ports[t].inputs(pos).iter().position(|&q| q == dst[b.sig]).unwrap()));
            }
        }
    }
    let last = mma.final_tile();
    let (us, vs) = tile_outs[last].clone();
    tile_parts[last].mirror_sends = false;
    for b in us.iter().chain(&vs) {
        tile_parts[last].sends.cnot(b.src, b.anc);
    }
    let out_u = us.iter().map(|b| b.anc).collect();
    let out_v = vs.iter().map(|b| b.anc).collect();

    let mut schedule = vec![ppc.core.clone(), ppc.sends.clone()];
    for z in &z_parts {
        schedule.push(z.core.clone());
        schedule.push(z.sends.clone());
    }
    for t in &tile_parts {
        schedule.push(t.core.clone());
        schedule.push(t.sends.clone());
    }
    for (s, st) in mma.stages.iter().enumerate().rev() {
        let first: usize = mma.stages[..s].iter().map(|x| x.len()).sum();
        for t in &tile_parts[first..first + st.len()] {
            if t.mirror_sends {
                schedule.push(t.sends.inverse());
            }
            schedule.push(t.core.inverse());
        }
    }
    for z in &z_parts {
        schedule.push(z.sends.inverse());
        schedule.push(z.core.inverse());
    }
    schedule.push(ppc.sends.inverse());
    schedule.push(ppc.core.inverse());

    let decl = Arc::new(g.finish());
    let mut src = Concrete { decl: decl.clone(), ppc, z: z_parts, tiles: tile_parts, pairs: HashMap::new() };
    let stages = assemble(plan.z_sites.len(), Some((&mma, &homes)), &mut src)?;
    let hier = HierCircuit::compose("multiplier", stages)?
        .with_decl(decl.clone())
        .with_semantic(Semantic::Multiplier { n, m });
    Ok(Multiplier { n, m, plan, mma, homes, hier, decl, x_in, y_in, out_u, out_v, alignment, schedule })
}

/// Partial-product creation alone: lattice, product sends, z-site fanouts, and
/// their uncompute.
pub fn build_partial_products(plan: &PartialProductPlan) -> Result<HierCircuit, MultError> {
    let n = plan.n;
    let mut g = CircuitBuilder::new();
    let rows: Vec<ModuleId> = (0..operand_bits(n)).map(|j| g.module(&format!("ppc{j}"))).collect();
    let (core, lat) = lattice_program(&mut g, &rows, n);
    let mut ppc = Part { core, sends: Program::new(), mirror_sends: true };
    let mut z = Vec::new();
    for (k, site) in plan.z_sites.iter().enumerate() {
        let md = g.module(&format!("z{k}"));
        let (prog, p, _) = zsite_program(&mut g, md, site.residue);
        let (src, anc) = lat.t[site.product.i][site.product.j.expect("parallel plan")];
        ppc.sends.send(src, anc, p);
        z.push(Part { core: prog, sends: Program::new(), mirror_sends: true });
    }
    let decl = Arc::new(g.finish());
    let mut src = Concrete { decl: decl.clone(), ppc, z, tiles: Vec::new(), pairs: HashMap::new() };
    let stages = assemble(plan.z_sites.len(), None, &mut src)?;
    Ok(HierCircuit::compose("ppc", stages)?.with_decl(decl))
}

/// Blocks built standalone (sends go to a sink module), measured once and
/// reused by count.
struct Symbolic {
    n: usize,
    m: u64,
    residues: Vec<u64>,
    final_tile: usize,
    cache: HashMap<(u8, u64, bool), Arc<HierCircuit>>,
    sends: HashMap<(u8, u64), u64>,
}

const PPC: u8 = 0;
const ZSITE: u8 = 1;
const TILE: u8 = 2;

impl Symbolic {
    fn shape(&self, key: LeafKey) -> (u8, u64, bool) {
        match key {
            LeafKey::PpcFwd => (PPC, 0, true),
            LeafKey::PpcMirror => (PPC, 0, false),
            LeafKey::ZFwd(z) => (ZSITE, self.residues[z], true),
            LeafKey::ZMirror(z) => (ZSITE, self.residues[z], false),
            LeafKey::TileFwd(t) => (TILE, (t == self.final_tile) as u64, true),
            LeafKey::TileMirror(t) => (TILE, (t == self.final_tile) as u64, false),
        }
    }

    fn standalone(&self, kind: u8, arg: u64) -> Result<(Circuit, Part), MultError> {
        let mut g = CircuitBuilder::new();
        let mut part = Part { mirror_sends: true, ..Default::default() };
        let sink_module = |g: &mut CircuitBuilder| g.module("sink");
        let mut dsts = Vec::new();
        match kind {
            PPC => {
                let rows: Vec<ModuleId> = (0..operand_bits(self.n)).map(|j| g.module(&format!("ppc{j}"))).collect();
                let (core, lat) = lattice_program(&mut g, &rows, self.n);
                part.core = core;
                dsts.extend(lat.t.into_iter().flatten().map(|(src, anc)| OutBit { sig: 0, src, anc }));
            }
            ZSITE => {
                let md = g.module("z");
                let (core, _, outs) = zsite_program(&mut g, md, arg);
                part.core = core;
                dsts = outs;
            }
            _ => {
                let md = g.module("tile");
                let (core, _, us, vs) = tile_with_outputs(&mut g, md, [0, 0], self.n, self.m)?;
                part.core = core;
                let outs: Vec<OutBit> = us.into_iter().chain(vs).collect();
                if arg == 1 {
                    for b in &outs {
                        part.sends.cnot(b.src, b.anc);
                    }
                    part.mirror_sends = false;
                } else {
                    dsts = outs;
                }
            }
        }
        if !dsts.is_empty() {
            let sk = sink_module(&mut g);
            for (k, b) in dsts.iter().enumerate() {
                let d = g.at(sk, k as i32, 0);
                part.sends.send(b.src, b.anc, d);
            }
        }
        Ok((g.finish(), part))
    }
}

impl LeafSource for Symbolic {
    fn leaf(&mut self, key: LeafKey) -> Result<Arc<HierCircuit>, MultError> {
        let shape = self.shape(key);
        if let Some(h) = self.cache.get(&shape) {
            return Ok(h.clone());
        }
        let (decl, part) = self.standalone(shape.0, shape.1)?;
        let name = match shape.0 {
            PPC => "ppc".to_string(),
            ZSITE => format!("zsite-r{}", shape.1),
            _ if shape.1 == 1 => "tile-final".to_string(),
            _ => "tile".to_string(),
        };
        let (fwd, pairs) = part.forward(&decl);
        self.sends.insert((shape.0, shape.1), pairs.len() as u64);
        let f = Arc::new(HierCircuit::leaf(&name, fwd));
        let r = Arc::new(HierCircuit::leaf(&format!("{name}-mirror"), part.mirror(&decl)));
        self.cache.insert((shape.0, shape.1, true), f);
        self.cache.insert((shape.0, shape.1, false), r);
        Ok(self.cache[&shape].clone())
    }

    fn teleports(&mut self, keys: &[LeafKey]) -> Option<Stage> {
        let qubits: u64 = keys
            .iter()
            .map(|&k| {
                let s = self.shape(k);
                self.sends.get(&(s.0, s.1)).copied().unwrap_or(0)
            })
            .sum();
        (qubits > 0).then_some(Stage::Transfer { layers: 1, qubits })
    }
}

/// Parallel multiplier from standalone blocks. Cheap for any n; its roll-up
/// matches the fully placed build.
pub fn build_multiplier_symbolic(n: usize, m: u64) -> Result<HierCircuit, MultError> {
    let plan = plan_partial_products(n, m, Variant::Parallel, None)?;
    let mma = MmaPlan::new(plan.t_prime())?;
    let homes = assign_tile_homes(&plan, &mma);
    let mut src = Symbolic {
        n,
        m,
        residues: plan.z_sites.iter().map(|z| z.residue).collect(),
        final_tile: mma.final_tile(),
        cache: HashMap::new(),
        sends: HashMap::new(),
    };
    let stages = assemble(plan.z_sites.len(), Some((&mma, &homes)), &mut src)?;
    Ok(HierCircuit::compose("multiplier", stages)?.with_semantic(Semantic::Multiplier { n, m }))
}

/// Addition tree alone over t′ numbers: stages of fresh tiles with their outputs
/// teleported forward, then the mirrored uncompute of every non-final tile.
pub fn build_mma_tree(t: usize, n: usize, m: u64) -> Result<HierCircuit, MultError> {
    check_params(n, m)?;
    if t < 3 {
        return Err(MultError::NoNumbers);
    }
    let mma = MmaPlan::new(t)?;
    let mut src = Symbolic {
        n,
        m,
        residues: Vec::new(),
        final_tile: mma.final_tile(),
        cache: HashMap::new(),
        sends: HashMap::new(),
    };
    let tiles = mma.tiles();
    let last = mma.stages.len() - 1;
    let mut stages = Vec::new();
    for s in 0..=last {
        let ks: Vec<_> = tiles.iter().filter(|x| x.0 == s).map(|x| (LeafKey::TileFwd(x.1), Placement::Fresh)).collect();
        stages.push(compute_stage(&mut src, &ks)?);
        if s < last {
            let keys: Vec<LeafKey> = ks.iter().map(|k| k.0).collect();
            stages.extend(src.teleports(&keys));
        }
    }
    for s in (0..=last).rev() {
        let ks: Vec<_> =
            tiles.iter().filter(|x| x.0 == s).map(|x| (LeafKey::TileMirror(x.1), Placement::Reuse)).collect();
        stages.push(compute_stage(&mut src, &ks)?);
    }
    Ok(HierCircuit::compose("mma", stages)?.with_semantic(Semantic::Mma { n, m, count: t }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_fit_groups_have_distinct_significances() {
        let p = plan_partial_products(3, 7, Variant::Parallel, None).unwrap();
        for g in &p.single_bit_groups {
            let mut s: Vec<_> = g.iter().map(|p| p.sig).collect();
            s.dedup();
            assert_eq!(s.len(), g.len());
        }
        assert!(p.single_bit_groups.len() <= operand_bits(3));
        assert_eq!(p.products(), 81);
    }

    #[test]
    fn serial_residues() {
        let p = plan_partial_products(3, 7, Variant::Serial, Some(5)).unwrap();
        let r: Vec<u64> = p.z_sites.iter().map(|z| z.residue).collect();
        assert_eq!(r, vec![5, 3, 6]);
    }

    #[test]
    fn mma_plan_shapes() {
        let p = MmaPlan::new(18).unwrap();
        assert_eq!(p.stages.len(), 6);
        assert_eq!(p.tile_count(), 16);
        assert_eq!(MmaPlan::new(2).unwrap().tile_count(), 1);
        assert_eq!(MmaPlan::new(10).unwrap().stages.len(), 5);
    }
}
