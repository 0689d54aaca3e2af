//! Static renderings: module graph as DOT, module/qubit layout as SVG, gate and
//! bound tables as CSV.

use crate::formulas::BoundCheck;
use crate::model::{Circuit, GateKind};
use std::collections::BTreeMap;
use std::fmt::Write;

/// Teleport counts between module pairs, smaller id first.
pub fn module_links(c: &Circuit) -> BTreeMap<(usize, usize), usize> {
    let mut links = BTreeMap::new();
    for l in &c.layers {
        for g in l.gates.iter().filter(|g| g.kind == GateKind::Teleport) {
            let (a, b) = (c.qubits[g.qubits[0]].module, c.qubits[g.qubits[1]].module);
            *links.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    links
}

fn label(c: &Circuit, m: usize) -> String {
    let l = &c.modules[m].label;
    if l.is_empty() {
        format!("m{m}")
    } else {
        l.clone()
    }
}

/// Modules as nodes (with touched-qubit counts), teleport links as weighted edges.
pub fn to_dot(c: &Circuit) -> String {
    let loads = crate::verify::module_loads(c);
    let mut s = String::from("graph modules {\n  node [shape=box];\n");
    for (m, load) in loads.iter().enumerate() {
        let _ = writeln!(s, "  m{m} [label=\"{}\\n{load} qubits\"];", label(c, m));
    }
    for ((a, b), k) in module_links(c) {
        let _ = writeln!(s, "  m{a} -- m{b} [label=\"{k}\"];");
    }
    s.push_str("}\n");
    s
}

const CELL: i32 = 12;
const GAP: i32 = 40;
const ROW_WIDTH: i32 = 1200;

/// Modules as boxes with their qubit grids, wrapped into rows; touched qubits
/// are filled and teleport links are drawn as arrows between box centres.
pub fn to_svg(c: &Circuit) -> String {
    let touched = c.touched();
    let mut extent = vec![[1, 1]; c.modules.len()];
    for q in &c.qubits {
        let e = &mut extent[q.module];
        e[0] = e[0].max(q.coord[0] + 1);
        e[1] = e[1].max(q.coord[1] + 1);
    }
    for (m, e) in extent.iter_mut().enumerate() {
        e[0] = e[0].max(c.modules[m].extent[0]);
        e[1] = e[1].max(c.modules[m].extent[1]);
    }
    let (mut x, mut y, mut row_h) = (GAP, GAP, 0);
    let mut origin = Vec::with_capacity(extent.len());
    for e in &extent {
        let (w, h) = (e[0] * CELL, e[1] * CELL);
        if x + w > ROW_WIDTH && x > GAP {
            x = GAP;
            y += row_h + GAP;
            row_h = 0;
        }
        origin.push([x, y]);
        x += w + GAP;
        row_h = row_h.max(h);
    }
    let width = origin.iter().zip(&extent).map(|(o, e)| o[0] + e[0] * CELL).max().unwrap_or(0) + GAP;
    let height = y + row_h + GAP;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"monospace\" font-size=\"10\">"
    );
    s.push_str("<defs><marker id=\"arrow\" markerWidth=\"8\" markerHeight=\"8\" refX=\"6\" refY=\"3\" orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"#c33\"/></marker></defs>\n");
    for (m, (o, e)) in origin.iter().zip(&extent).enumerate() {
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/><text x=\"{}\" y=\"{}\">{}</text>",
            o[0] - 2,
            o[1] - 2,
            e[0] * CELL + 4,
            e[1] * CELL + 4,
            o[0],
            o[1] - 5,
            label(c, m)
        );
    }
    for (q, qb) in c.qubits.iter().enumerate() {
        let o = origin[qb.module];
        let fill = if touched[q] { "#246" } else { "#ccc" };
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{fill}\"/>",
            o[0] + qb.coord[0] * CELL + CELL / 2,
            o[1] + qb.coord[1] * CELL + CELL / 2
        );
    }
    let centre = |m: usize| {
        let (o, e) = (origin[m], extent[m]);
        (o[0] + e[0] * CELL / 2, o[1] + e[1] * CELL / 2)
    };
    for (a, b) in module_links(c).into_keys() {
        let ((x1, y1), (x2, y2)) = (centre(a), centre(b));
        let _ = writeln!(
            s,
            "<line x1=\"{x1}\" y1=\"{y1}\" x2=\"{x2}\" y2=\"{y2}\" stroke=\"#c33\" stroke-opacity=\"0.5\" marker-end=\"url(#arrow)\"/>"
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One row per gate: layer, layer kind, gate kind, qubits, condition, record slot.
pub fn gates_csv(c: &Circuit) -> String {
    let mut s = String::from("layer,layer_kind,gate,qubits,cond,slot\n");
    for (li, l) in c.layers.iter().enumerate() {
        for g in &l.gates {
            let qs: Vec<String> = g.qubits.iter().map(|q| q.to_string()).collect();
            let mut cond: Vec<String> = g.cond.bits.iter().map(|b| format!("r{b}")).collect();
            if g.cond.constant {
                cond.push("1".into());
            }
            let slot = g.slot.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{li},{:?},{:?},{},{},{slot}", l.kind, g.kind, qs.join(" "), cond.join("^"));
        }
    }
    s
}

pub const BOUNDS_CSV_HEADER: &str = "block,n,metric,formula,constructed,pass";

/// Bound-check rows in `block,n,metric,formula,constructed,pass` form, no header.
pub fn bounds_csv(check: &BoundCheck) -> String {
    let mut s = String::new();
    for r in &check.rows {
        let f = r.formula.map(|v| v.to_string()).unwrap_or_default();
        let p = r.pass.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{f},{},{p}", check.id.name(), check.n, r.metric, r.constructed);
    }
    s
}
