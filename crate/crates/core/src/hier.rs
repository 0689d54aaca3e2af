//! Hierarchical circuits: named blocks composed in stages, with multiplicities and
//! inter-module teleports. Resources roll up without flattening.

use crate::model::{Circuit, Layer, LayerKind, ModelError, ParityExpr, QubitId, ResourceReport};
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

/// How an instance's qubits relate to qubits already counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Placement {
    /// New qubits in new modules.
    Fresh,
    /// New qubits inside modules counted elsewhere.
    Host,
    /// Qubits counted by an earlier stage, e.g. an uncompute pass.
    Reuse,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub child: Arc<HierCircuit>,
    pub count: u64,
    pub placement: Placement,
}

impl Instance {
    pub fn new(child: Arc<HierCircuit>, count: u64, placement: Placement) -> Instance {
        Instance { child, count, placement }
    }

    pub fn fresh(child: Arc<HierCircuit>) -> Instance {
        Instance::new(child, 1, Placement::Fresh)
    }
}

#[derive(Clone, Debug)]
pub enum Stage {
    /// Children running side by side.
    Compute(Vec<Instance>),
    /// One teleport timestep, as (from, to) qubit pairs.
    Teleport(Vec<(QubitId, QubitId)>),
    /// Teleport timesteps known only by their totals.
    Transfer { layers: u64, qubits: u64 },
}

#[derive(Clone, Debug)]
pub enum Body {
    Leaf(Arc<Circuit>),
    /// Resources without a circuit (formula-level or cached blocks).
    Symbolic(ResourceReport),
    Node(Vec<Stage>),
}

/// Classical behaviour attached to a block, used by `sim::run_semantic`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Semantic {
    /// Inputs a, b, c; outputs u, v.
    Adder { n: usize, m: u64 },
    /// Inputs x, y (conventional) or x.u, x.v, y.u, y.v; outputs u, v.
    Multiplier { n: usize, m: u64 },
    /// `count` numbers in; u, v out.
    Mma { n: usize, m: u64, count: usize },
    /// Control bits packed into one integer; output a^x mod m.
    ModExp { n: usize, m: u64, a: u64, t: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierError {
    #[error("stage {0} is empty")]
    EmptyStage(usize),
    #[error("block {0} has no circuit to flatten")]
    Symbolic(String),
    #[error("cannot flatten {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug)]
pub struct HierCircuit {
    pub name: String,
    pub body: Body,
    pub semantic: Option<Semantic>,
    /// Shared qubit declaration of every leaf, when the tree was built on one.
    pub decl: Option<Arc<Circuit>>,
    rollup: ResourceReport,
}

impl HierCircuit {
    pub fn leaf(name: &str, circuit: Circuit) -> HierCircuit {
        let rollup = circuit.count_resources();
        HierCircuit { name: name.into(), body: Body::Leaf(Arc::new(circuit)), semantic: None, decl: None, rollup }
    }

    pub fn symbolic(name: &str, r: ResourceReport) -> HierCircuit {
        HierCircuit { name: name.into(), body: Body::Symbolic(r), semantic: None, decl: None, rollup: r }
    }

    /// Sequential stages. Fails on an empty stage.
    pub fn compose(name: &str, stages: Vec<Stage>) -> Result<HierCircuit, HierError> {
        for (i, s) in stages.iter().enumerate() {
            let empty = match s {
                Stage::Compute(v) => v.iter().all(|x| x.count == 0),
                Stage::Teleport(v) => v.is_empty(),
                Stage::Transfer { layers, .. } => *layers == 0,
            };
            if empty {
                return Err(HierError::EmptyStage(i));
            }
        }
        let rollup = roll_up(&stages);
        Ok(HierCircuit { name: name.into(), body: Body::Node(stages), semantic: None, decl: None, rollup })
    }

    pub fn with_semantic(mut self, s: Semantic) -> Self {
        self.semantic = Some(s);
        self
    }

    pub fn with_decl(mut self, decl: Arc<Circuit>) -> Self {
        self.decl = Some(decl);
        self
    }

    /// Rolled-up resources (cached at construction).
    pub fn resources(&self) -> ResourceReport {
        self.rollup
    }

    pub fn stages(&self) -> &[Stage] {
        match &self.body {
            Body::Node(s) => s,
            _ => &[],
        }
    }

    /// Leaves in stage order, with their multiplicity along the path from the root.
    pub fn leaves(&self) -> Vec<(&HierCircuit, u64)> {
        let mut out = Vec::new();
        collect_leaves(self, 1, &mut out);
        out
    }

    /// Expands the tree into one circuit. Trees built on a shared declaration keep
    /// their qubit ids; otherwise every fresh instance is relocated into new modules.
    pub fn flatten(&self) -> Result<Circuit, HierError> {
        let mut ctx = match &self.decl {
            Some(d) => Flatten::shared(d),
            None => Flatten::relocating(),
        };
        let frag = ctx.lower(self, false)?;
        let mut out = ctx.base;
        out.layers = frag.layers;
        out.record_size = frag.record_size;
        out.renumber_slots();
        out.validate()?;
        Ok(out)
    }
}

fn collect_leaves<'a>(h: &'a HierCircuit, mult: u64, out: &mut Vec<(&'a HierCircuit, u64)>) {
    match &h.body {
        Body::Node(stages) => {
            for s in stages {
                if let Stage::Compute(insts) = s {
                    for i in insts {
                        collect_leaves(&i.child, mult * i.count, out);
                    }
                }
            }
        }
        _ => out.push((h, mult)),
    }
}

fn roll_up(stages: &[Stage]) -> ResourceReport {
    let mut r = ResourceReport::default();
    for s in stages {
        match s {
            Stage::Compute(insts) => {
                let mut d = 0;
                let mut db = 0;
                for i in insts {
                    let c = i.child.resources();
                    d = d.max(c.depth);
                    db = db.max(c.module_depth);
                    r.size += i.count * c.size;
                    r.module_size += i.count * c.module_size;
                    if i.placement != Placement::Reuse {
                        r.width += i.count * c.width;
                    }
                    if i.placement == Placement::Fresh {
                        r.module_width += i.count * c.module_width;
                    }
                }
                r.depth += d;
                r.module_depth += db;
            }
            Stage::Teleport(pairs) => {
                r.module_depth += 1;
                r.module_size += pairs.len() as u64;
            }
            Stage::Transfer { layers, qubits } => {
                r.module_depth += layers;
                r.module_size += qubits;
            }
        }
    }
    r
}

/// Layers in the output id space with local record slots.
struct Fragment {
    layers: Vec<Layer>,
    record_size: usize,
}

struct Flatten {
    base: Circuit,
    shared: bool,
    /// Latest relocation of each leaf circuit, keyed by address.
    maps: HashMap<usize, Vec<QubitId>>,
}

impl Flatten {
    fn shared(decl: &Circuit) -> Flatten {
        let mut base = decl.clone();
        base.layers.clear();
        base.record_size = 0;
        Flatten { base, shared: true, maps: HashMap::new() }
    }

    fn relocating() -> Flatten {
        Flatten { base: Circuit::new(), shared: false, maps: HashMap::new() }
    }

    fn leaf_map(&mut self, c: &Arc<Circuit>, reuse: bool, placement: Placement) -> Result<Vec<QubitId>, HierError> {
        if self.shared {
            if c.qubits.len() != self.base.qubits.len() {
                return Err(HierError::Unsupported("leaf built on a different declaration".into()));
            }
            return Ok((0..c.qubits.len()).collect());
        }
        let key = Arc::as_ptr(c) as usize;
        if reuse || placement == Placement::Reuse {
            return self
                .maps
                .get(&key)
                .cloned()
                .ok_or_else(|| HierError::Unsupported("reuse of a block never placed".into()));
        }
        if placement == Placement::Host {
            return Err(HierError::Unsupported("hosted block outside a shared declaration".into()));
        }
        let first = self.base.modules.len();
        for m in &c.modules {
            self.base.add_module(&m.label);
        }
        let map =
            c.qubits.iter().map(|q| self.base.add_qubit(first + q.module, q.coord)).collect::<Result<Vec<_>, _>>()?;
        self.maps.insert(key, map.clone());
        Ok(map)
    }

    fn lower(&mut self, h: &HierCircuit, reuse: bool) -> Result<Fragment, HierError> {
        self.lower_as(h, reuse, Placement::Fresh)
    }

    fn lower_as(&mut self, h: &HierCircuit, reuse: bool, placement: Placement) -> Result<Fragment, HierError> {
        match &h.body {
            Body::Symbolic(_) => Err(HierError::Symbolic(h.name.clone())),
            Body::Leaf(c) => {
                let map = self.leaf_map(c, reuse, placement)?;
                let layers = c
                    .layers
                    .iter()
                    .map(|l| Layer {
                        kind: l.kind,
                        gates: l
                            .gates
                            .iter()
                            .map(|g| {
                                let mut g = g.clone();
                                for q in &mut g.qubits {
                                    *q = map[*q];
                                }
                                g
                            })
                            .collect(),
                    })
                    .collect();
                Ok(Fragment { layers, record_size: c.record_size })
            }
            Body::Node(stages) => {
                let mut out = Fragment { layers: Vec::new(), record_size: 0 };
                for s in stages {
                    let floor = out.layers.len();
                    match s {
                        Stage::Compute(insts) => {
                            for i in insts {
                                if self.shared && i.count != 1 {
                                    return Err(HierError::Unsupported(format!(
                                        "{} copies of {} on a shared declaration",
                                        i.count, i.child.name
                                    )));
                                }
                                for _ in 0..i.count {
                                    let f =
                                        self.lower_as(&i.child, reuse || i.placement == Placement::Reuse, i.placement)?;
                                    merge(&mut out, f, floor)?;
                                }
                            }
                        }
                        Stage::Teleport(pairs) => {
                            if !self.shared {
                                return Err(HierError::Unsupported(
                                    "teleport stage without a shared declaration".into(),
                                ));
                            }
                            let gates = pairs
                                .iter()
                                .map(|&(a, b)| crate::model::Gate::new(crate::model::GateKind::Teleport, &[a, b]))
                                .collect();
                            out.layers.push(Layer { kind: LayerKind::Teleport, gates });
                        }
                        Stage::Transfer { .. } => return Err(HierError::Symbolic(h.name.clone())),
                    }
                }
                Ok(out)
            }
        }
    }
}

fn merge(out: &mut Fragment, f: Fragment, floor: usize) -> Result<(), HierError> {
    let off = out.record_size;
    for (i, l) in f.layers.into_iter().enumerate() {
        let at = floor + i;
        if at == out.layers.len() {
            out.layers.push(Layer { kind: l.kind, gates: Vec::new() });
        }
        let dst = &mut out.layers[at];
        if dst.gates.is_empty() {
            dst.kind = l.kind;
        } else if dst.kind != l.kind {
            return Err(ModelError::TimestepKindViolation { layer: at }.into());
        }
        for mut g in l.gates {
            g.slot = g.slot.map(|s| s + off);
            if !g.cond.bits.is_empty() {
                g.cond = ParityExpr { bits: g.cond.bits.iter().map(|b| b + off).collect(), constant: g.cond.constant };
            }
            dst.gates.push(g);
        }
    }
    out.record_size += f.record_size;
    Ok(())
}
