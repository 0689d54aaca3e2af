use csa_forge::formulas::{check_bounds, eval, ksv_t, FormulaId};
use csa_forge::hier::{Placement, Stage};
use csa_forge::modexp::*;
use csa_forge::sim::run_semantic;

fn modpow(a: u64, e: u64, m: u64) -> u64 {
    (0..e).fold(1 % m, |acc, _| acc * a % m)
}

#[test]
fn ksv_constant() {
    assert_eq!(ksv_t(1), 2867);
    assert_eq!(ksv_t(2048), 5_871_616);
}

#[test]
fn tree_has_ceil_log2_levels() {
    for t in 2..=40usize {
        let levels = tree_levels(t).len();
        assert_eq!(levels, (t as f64).log2().ceil() as usize, "t={t}");
        assert_eq!(tree_levels(t).iter().sum::<usize>(), t - 1);
    }
    let h = build_modexp_tree(&ModExpPlan::new(2, 3, 2, 4).unwrap()).unwrap();
    let computes: Vec<_> = h.stages().iter().filter(|s| matches!(s, Stage::Compute(_))).collect();
    // two multiplier levels, then the conversion
    assert_eq!(computes.len(), 3);
    if let Stage::Compute(i) = computes[1] {
        assert_eq!(i[0].placement, Placement::Reuse);
    }
}

#[test]
fn semantic_matches_modpow_for_every_control_assignment() {
    let plan = ModExpPlan::new(3, 7, 3, 3).unwrap();
    let h = build_modexp_tree(&plan).unwrap();
    for p in 0..8u128 {
        assert_eq!(semantic_modexp(&plan, p).unwrap(), modpow(3, p as u64, 7));
        assert_eq!(run_semantic(&h, &[p]).unwrap(), vec![modpow(3, p as u64, 7) as u128]);
    }
    assert_eq!(semantic_modexp(&plan, 0b011).unwrap(), 6);
}

#[test]
fn constructed_tree_within_printed_bounds() {
    for n in 2..=4usize {
        let r = estimate_modexp_constructed(n, ksv_t(n as u64) as usize).unwrap();
        let c = check_bounds(&r, FormulaId::Modexp, n as u64).unwrap();
        assert!(c.pass(), "{}", c.to_json());
        assert_eq!(r.module_width, ksv_t(n as u64) / 2 + 1);
    }
}

#[test]
fn qcla_formulas() {
    assert_eq!(qcla_conversion_resources(4).depth, 140);
    assert_eq!(qcla_conversion_resources(2).depth, 84);
    assert_eq!(qcla_conversion_resources(4).width, 380);
}

#[test]
fn printed_modexp_values() {
    let r2 = eval(FormulaId::Modexp, 2).unwrap().report().unwrap();
    assert_eq!(r2.depth(), Some(71731.0));
    assert_eq!(r2.module_width(), Some(2868.0));
    let r4 = eval(FormulaId::Modexp, 4).unwrap().report().unwrap();
    assert_eq!(r4.module_depth(), Some(30.0));
    let mut prev = estimate_modexp(2).unwrap();
    for n in 3..=32 {
        let cur = estimate_modexp(n).unwrap();
        for (a, b) in prev.values.iter().zip(cur.values) {
            assert!(b.unwrap() >= a.unwrap(), "n={n}");
        }
        prev = cur;
    }
}
