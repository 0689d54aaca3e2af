//! Modular exponentiation as a binary tree of multipliers, plus the final
//! carry-save to conventional conversion, at module-level granularity.

use crate::arith::{check_params, CarrySaveNumber};
use crate::formulas::{self, FormulaId};
use crate::hier::{HierCircuit, Instance, Placement, Semantic, Stage};
use crate::model::ResourceReport;
use crate::mult::{build_multiplier_symbolic, operand_bits, semantic_multiply, MultError};
use serde::Serialize;

pub use crate::formulas::ksv_t;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModExpPlan {
    pub n: usize,
    pub m: u64,
    pub a: u64,
    pub t: usize,
    /// a^(2^j) mod m for each leaf j.
    pub residues: Vec<u64>,
}

impl ModExpPlan {
    pub fn new(n: usize, m: u64, a: u64, t: usize) -> Result<ModExpPlan, MultError> {
        check_params(n, m)?;
        if t == 0 {
            return Err(MultError::NoNumbers);
        }
        let mut residues = Vec::with_capacity(t);
        let mut r = a % m;
        for _ in 0..t {
            residues.push(r);
            r = ((r as u128 * r as u128) % m as u128) as u64;
        }
        Ok(ModExpPlan { n, m, a, t, residues })
    }

    /// Multipliers per tree level; an odd node is carried up unchanged.
    pub fn levels(&self) -> Vec<usize> {
        tree_levels(self.t)
    }
}

pub fn tree_levels(t: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = t;
    while k > 1 {
        out.push(k / 2);
        k = k / 2 + k % 2;
    }
    out
}

/// A multiplier counted as one module: its internal teleports stay inside the
/// node, so it contributes D, S and W but no module-level depth or size.
fn node_report(r: ResourceReport) -> ResourceReport {
    ResourceReport { module_depth: 0, module_size: 0, module_width: 1, ..r }
}

/// The conversion adder from its closed forms, as a one-module block.
pub fn qcla_conversion_resources(n: usize) -> ResourceReport {
    let f = formulas::eval(FormulaId::Qcla, n as u64).ok().and_then(|v| v.report()).expect("n >= 2");
    let up = |x: Option<f64>| x.map_or(0, |v| v.ceil().max(0.0) as u64);
    ResourceReport {
        depth: up(f.depth()),
        size: up(f.size()),
        width: up(f.width()),
        module_depth: 0,
        module_size: 0,
        module_width: 1,
    }
}

/// Tree of t−1 multipliers. The first level runs in fresh modules; each later
/// multiplier reuses the cleaned scratch of its left child after teleporting in
/// the right operand. The result is then teleported to the conversion adder.
pub fn build_modexp_tree(plan: &ModExpPlan) -> Result<HierCircuit, MultError> {
    let (n, m) = (plan.n, plan.m);
    let mm = build_multiplier_symbolic(n, m)?.resources();
    let node = std::sync::Arc::new(HierCircuit::symbolic("multiplier", node_report(mm)));
    let qcla = std::sync::Arc::new(HierCircuit::symbolic("qcla", qcla_conversion_resources(n)));
    let width = operand_bits(n) as u64;
    let mut stages = Vec::new();
    for (l, &k) in plan.levels().iter().enumerate() {
        let placement = if l == 0 {
            Placement::Fresh
        } else {
            stages.push(Stage::Transfer { layers: 1, qubits: k as u64 * width });
            Placement::Reuse
        };
        stages.push(Stage::Compute(vec![Instance::new(node.clone(), k as u64, placement)]));
    }
    stages.push(Stage::Transfer { layers: 1, qubits: width });
    stages.push(Stage::Compute(vec![Instance::fresh(qcla)]));
    Ok(HierCircuit::compose("modexp", stages)?.with_semantic(Semantic::ModExp { n, m, a: plan.a, t: plan.t }))
}

/// The printed closed forms.
pub fn estimate_modexp(n: usize) -> Result<formulas::FormulaReport, formulas::FormulaError> {
    Ok(formulas::eval(FormulaId::Modexp, n as u64)?.report().expect("modexp is a report"))
}

/// Modulus used for constructed estimates: the largest odd n-bit value.
pub fn estimate_modulus(n: usize) -> u64 {
    (1u64 << n) - 1
}

/// Roll-up of the constructed tree with t leaves.
pub fn estimate_modexp_constructed(n: usize, t: usize) -> Result<ResourceReport, MultError> {
    let plan = ModExpPlan::new(n, estimate_modulus(n), 2, t)?;
    Ok(build_modexp_tree(&plan)?.resources())
}

/// Classical evaluation: leaf j holds a^(2^j) if control bit j is set, else 1;
/// leaves are multiplied pairwise level by level and the result decoded mod m.
pub fn semantic_modexp(plan: &ModExpPlan, controls: u128) -> Result<u64, MultError> {
    let mut level: Vec<CarrySaveNumber> = plan
        .residues
        .iter()
        .enumerate()
        .map(|(j, &r)| CarrySaveNumber {
            u: if (controls >> j) & 1 == 1 { r as u128 } else { 1 % plan.m as u128 },
            v: 0,
        })
        .collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len() / 2 + 1);
        for pair in level.chunks(2) {
            next.push(match pair {
                [x, y] => semantic_multiply(x, y, plan.n, plan.m)?,
                [x] => *x,
                _ => unreachable!(),
            });
        }
        level = next;
    }
    Ok((level[0].decode() % plan.m as u128) as u64)
}

/// Third-order divided differences of f against log2 n.
pub fn third_differences(points: &[(usize, f64)]) -> Vec<f64> {
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).log2()).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    for order in 1..=3 {
        ys = (0..ys.len() - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + order] - xs[i])).collect();
    }
    ys
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_leaves_two_levels() {
        assert_eq!(tree_levels(4), vec![2, 1]);
        assert_eq!(tree_levels(3), vec![1, 1]);
        assert_eq!(tree_levels(5), vec![2, 1, 1]);
    }

    #[test]
    fn residues_square() {
        let p = ModExpPlan::new(3, 7, 3, 3).unwrap();
        assert_eq!(p.residues, vec![3, 2, 4]);
        assert_eq!(semantic_modexp(&p, 0b101).unwrap(), 5);
        assert_eq!(semantic_modexp(&p, 0b011).unwrap(), 6);
        assert_eq!(semantic_modexp(&p, 0).unwrap(), 1);
    }
}
