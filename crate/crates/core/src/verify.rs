//! Architectural rule checks for the 2D CCNTC/CCNTCM models.

use crate::hier::HierCircuit;
use crate::model::{adjacent, Circuit, GateKind, LayerKind, ResourceReport};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ArchitectureRules {
    pub max_degree: usize,
    /// Qubits per module may not exceed `c * n`.
    pub c: f64,
}

impl Default for ArchitectureRules {
    fn default() -> Self {
        ArchitectureRules { max_degree: 6, c: 40.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Adjacency,
    Degree,
    Concurrency,
    Homogeneity,
    TeleportLocal,
    ModuleSize,
    WidthRatio,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub layer: Option<usize>,
    pub gate: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
    /// Counted or rolled-up resources of the checked circuit, when known.
    pub resources: Option<ResourceReport>,
    /// Largest per-module qubit count, when known.
    pub max_module_load: Option<u64>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }

    pub fn merge(&mut self, other: ViolationReport) {
        self.violations.extend(other.violations);
        self.resources = self.resources.or(other.resources);
        self.max_module_load = self.max_module_load.or(other.max_module_load);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "no violations")?;
        }
        for v in &self.violations {
            let at = match (v.layer, v.gate) {
                (Some(l), Some(g)) => format!(" layer {l} gate {g}"),
                (Some(l), None) => format!(" layer {l}"),
                _ => String::new(),
            };
            writeln!(f, "{:?}{at}: {}", v.rule, v.detail)?;
        }
        if let Some(r) = self.resources {
            writeln!(
                f,
                "D={} S={} W={} Dbar={} Sbar={} Wbar={}",
                r.depth, r.size, r.width, r.module_depth, r.module_size, r.module_width
            )?;
        }
        Ok(())
    }
}

fn layer_violations(c: &Circuit, li: usize) -> Vec<Violation> {
    let l = &c.layers[li];
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let v = |rule, gi, detail: String| Violation { rule, layer: Some(li), gate: Some(gi), detail };
    for (gi, g) in l.gates.iter().enumerate() {
        for &q in &g.qubits {
            if !seen.insert(q) {
                out.push(v(Rule::Concurrency, gi, format!("qubit {q} used twice")));
            }
        }
        let tele = g.kind == GateKind::Teleport;
        if tele != (l.kind == LayerKind::Teleport) {
            out.push(v(Rule::Homogeneity, gi, format!("{:?} in {:?} layer", g.kind, l.kind)));
        }
        if g.qubits.len() == 2 {
            let (a, b) = (&c.qubits[g.qubits[0]], &c.qubits[g.qubits[1]]);
            if tele {
                if a.module == b.module {
                    out.push(v(Rule::TeleportLocal, gi, format!("teleport inside module {}", a.module)));
                }
            } else if a.module != b.module || !adjacent(a.coord, b.coord) {
                out.push(v(
                    Rule::Adjacency,
                    gi,
                    format!("{:?} between {}:{:?} and {}:{:?}", g.kind, a.module, a.coord, b.module, b.coord),
                ));
            }
        }
    }
    out
}

/// Adjacency, degree, concurrency, timestep homogeneity and teleport locality.
/// Degree counts distinct intra-module two-qubit partners; teleports are module
/// links and are not counted.
pub fn verify_architecture(c: &Circuit, rules: &ArchitectureRules) -> ViolationReport {
    let mut violations: Vec<Violation> =
        (0..c.layers.len()).into_par_iter().flat_map_iter(|li| layer_violations(c, li)).collect();
    let mut partners: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for l in &c.layers {
        for g in &l.gates {
            if g.kind == GateKind::CNOT {
                partners.entry(g.qubits[0]).or_default().insert(g.qubits[1]);
                partners.entry(g.qubits[1]).or_default().insert(g.qubits[0]);
            }
        }
    }
    for (q, p) in partners {
        if p.len() > rules.max_degree {
            let qb = &c.qubits[q];
            violations.push(Violation {
                rule: Rule::Degree,
                layer: None,
                gate: None,
                detail: format!("qubit {q} ({}:{:?}) has {} partners", qb.module, qb.coord, p.len()),
            });
        }
    }
    ViolationReport { violations, resources: Some(c.count_resources()), max_module_load: None }
}

/// Touched qubits per module.
pub fn module_loads(c: &Circuit) -> Vec<u64> {
    let mut loads = vec![0u64; c.modules.len()];
    for (q, t) in c.touched().into_iter().enumerate() {
        if t {
            loads[c.qubits[q].module] += 1;
        }
    }
    loads
}

fn width_check(r: &ResourceReport, n: usize, rules: &ArchitectureRules) -> Option<Violation> {
    let cap = rules.c * n as f64 * r.module_width as f64;
    (r.width as f64 > cap).then(|| Violation {
        rule: Rule::WidthRatio,
        layer: None,
        gate: None,
        detail: format!("W={} exceeds c*n*Wbar={cap}", r.width),
    })
}

/// Per-module qubit counts against `c * n`, and W against `c * n * Wbar`.
pub fn verify_modules_flat(c: &Circuit, n: usize, rules: &ArchitectureRules) -> ViolationReport {
    let cap = rules.c * n as f64;
    let loads = module_loads(c);
    let mut violations: Vec<Violation> = loads
        .iter()
        .enumerate()
        .filter(|(_, &l)| l as f64 > cap)
        .map(|(m, &l)| Violation {
            rule: Rule::ModuleSize,
            layer: None,
            gate: None,
            detail: format!("module {m} ({}) holds {l} qubits, limit {cap}", c.modules[m].label),
        })
        .collect();
    let r = c.count_resources();
    violations.extend(width_check(&r, n, rules));
    ViolationReport { violations, resources: Some(r), max_module_load: loads.iter().copied().max() }
}

/// Module checks on a hierarchical circuit. Per-module loads are exact when the
/// tree can be flattened; otherwise only the width ratio is checked.
pub fn verify_modules(h: &HierCircuit, n: usize, rules: &ArchitectureRules) -> ViolationReport {
    let r = h.resources();
    match h.flatten() {
        Ok(c) => {
            let mut rep = verify_modules_flat(&c, n, rules);
            rep.violations.retain(|v| v.rule != Rule::WidthRatio);
            rep.violations.extend(width_check(&r, n, rules));
            rep.resources = Some(r);
            rep
        }
        Err(_) => ViolationReport {
            violations: width_check(&r, n, rules).into_iter().collect(),
            resources: Some(r),
            max_module_load: None,
        },
    }
}
