use csa_forge::arith::CarrySaveNumber;
use csa_forge::formulas::{check_bounds, FormulaId};
use csa_forge::mult::*;
use csa_forge::sim::run_semantic;
use csa_forge::verify::{verify_architecture, verify_modules, ArchitectureRules};

fn cse(u: u128, v: u128) -> CarrySaveNumber {
    CarrySaveNumber { u, v }
}

/// Every carry-save operand of width n+2 whose value stays below 2^(n+2).
fn operands(n: usize) -> Vec<CarrySaveNumber> {
    let lim = 1u128 << (n + 2);
    let mut out = Vec::new();
    for u in 0..lim {
        for v in (0..lim).step_by(2) {
            if u + v < lim {
                out.push(cse(u, v));
            }
        }
    }
    out
}

#[test]
fn placed_multiplier_replays_to_the_product_and_cleans_up() {
    let mm = build_modular_multiplier(2, 3, Variant::Parallel, None).unwrap();
    let ops = operands(2);
    for (i, x) in ops.iter().enumerate().step_by(7) {
        let y = &ops[(i * 31 + 5) % ops.len()];
        let out = mm.replay(x, y).unwrap();
        assert!(out.clean, "dirty ancillae for {x:?} {y:?}");
        assert_eq!(out.result.decode() % 3, x.decode() * y.decode() % 3);
        assert_eq!(out.result, semantic_multiply(x, y, 2, 3).unwrap());
    }
}

#[test]
fn roll_up_matches_flattened_and_symbolic_counts() {
    let mm = build_modular_multiplier(2, 3, Variant::Parallel, None).unwrap();
    let flat = mm.flatten().unwrap();
    let r = mm.hier.resources();
    assert_eq!(flat.count_resources(), r);
    assert_eq!(build_multiplier_symbolic(2, 3).unwrap().resources(), r);
    flat.validate().unwrap();
}

#[test]
fn n2_multiplier_passes_the_checkers_and_bounds() {
    let mm = build_modular_multiplier(2, 3, Variant::Parallel, None).unwrap();
    let rules = ArchitectureRules::default();
    let flat = mm.flatten().unwrap();
    assert!(verify_architecture(&flat, &rules).is_empty());
    let rep = verify_modules(&mm.hier, 2, &rules);
    assert!(rep.is_empty(), "{rep}");
    assert!(rep.max_module_load.unwrap() <= 80);
    let check = check_bounds(&mm.hier.resources(), FormulaId::Mm, 2).unwrap();
    assert!(check.pass(), "{}", check.to_json());
}

#[test]
fn sends_keep_significance() {
    let mm = build_modular_multiplier(2, 3, Variant::Parallel, None).unwrap();
    assert!(!mm.alignment.is_empty());
    assert!(mm.alignment.iter().all(|(a, b)| a == b));
}

#[test]
fn serial_multiplier_multiplies_by_the_base() {
    let mm = build_modular_multiplier(3, 7, Variant::Serial, Some(5)).unwrap();
    assert_eq!(mm.plan.z_sites.len(), 3);
    for x in 0..8u128 {
        let out = mm.replay(&cse(x, 0), &cse(0, 0)).unwrap();
        assert!(out.clean);
        assert_eq!(out.result.decode() % 7, 5 * x % 7);
        assert_eq!(out.result, semantic_multiply_serial(x, 5, 3, 7).unwrap());
    }
}

#[test]
fn semantic_examples() {
    let r = semantic_multiply(&cse(1, 0), &cse(5, 0), 3, 7).unwrap();
    assert_eq!(r.decode() % 7, 5);
    for y in 0..8 {
        assert_eq!(semantic_multiply(&cse(0, 0), &cse(y, 0), 3, 7).unwrap().decode() % 7, 0);
    }
    let h = build_multiplier_symbolic(2, 3).unwrap();
    let out = run_semantic(&h, &[2, 2]).unwrap();
    assert_eq!((out[0] + out[1]) % 3, 1);
}

#[test]
fn semantic_multiply_is_exhaustively_congruent_at_n2() {
    let ops = operands(2);
    for x in &ops {
        for y in &ops {
            let r = semantic_multiply(x, y, 2, 3).unwrap();
            assert_eq!(r.decode() % 3, x.decode() * y.decode() % 3);
            assert!(r.u >> 4 == 0 && r.v >> 4 == 0 && r.v & 1 == 0);
        }
    }
}

#[test]
fn out_of_range_operands_are_rejected() {
    assert!(matches!(semantic_multiply(&cse(16, 0), &cse(0, 0), 2, 3), Err(MultError::InputRange { .. })));
    assert!(matches!(semantic_multiply(&cse(0, 1), &cse(0, 0), 2, 3), Err(MultError::InputRange { .. })));
    assert!(matches!(plan_partial_products(3, 7, Variant::Serial, None), Err(MultError::MissingBase)));
}

#[test]
fn partial_product_values_sum_to_the_product() {
    let plan = plan_partial_products(2, 3, Variant::Parallel, None).unwrap();
    assert_eq!(plan.products(), 49);
    // x=2, y=3 as plain operands
    let (x, y) = (cse(2, 0), cse(3, 0));
    let mma = MmaPlan::new(plan.t_prime()).unwrap();
    assert_eq!(mma.evaluate(&vec![0; plan.t_prime()], 2, 3), cse(0, 0));
    assert_eq!(semantic_multiply(&x, &y, 2, 3).unwrap().decode() % 3, 0);
}

#[test]
fn mma_tree_examples() {
    assert_eq!(MmaPlan::new(18).unwrap().stages.len(), 6);
    assert_eq!(MmaPlan::new(18).unwrap().tile_count(), 16);
    assert_eq!(MmaPlan::new(3).unwrap().stages.len(), 1);
    assert!(build_mma_tree(2, 2, 3).is_err());
    let h = build_mma_tree(6, 2, 3).unwrap();
    assert_eq!(run_semantic(&h, &[0; 6]).unwrap(), vec![0, 0]);
    let out = run_semantic(&h, &[1, 2, 3, 4, 5, 6]).unwrap();
    assert_eq!((out[0] + out[1]) % 3, 21 % 3);
}

#[test]
fn partial_products_alone_meet_depth_bounds() {
    let plan = plan_partial_products(2, 3, Variant::Parallel, None).unwrap();
    let h = build_partial_products(&plan).unwrap();
    let r = h.resources();
    assert_eq!(h.flatten().unwrap().count_resources(), r);
    let check = check_bounds(&r, FormulaId::Ppc, 2).unwrap();
    // the lattice alone holds 9(2n+3)^2 qubits, more than the printed width bound
    assert_eq!(check.failures(), vec!["S", "W", "Wbar"]);
}
