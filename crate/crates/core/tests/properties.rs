use csa_forge::arith::{build_modular_adder, CarrySaveNumber};
use csa_forge::model::{Circuit, GateKind};
use csa_forge::mult::{semantic_multiply, MmaPlan, NumRef};
use csa_forge::verify::{verify_architecture, ArchitectureRules, Rule};
use proptest::prelude::*;
use std::collections::HashSet;

fn modulus(n: usize) -> impl Strategy<Value = u64> {
    ((1u64 << (n - 1)) / 2..(1u64 << n) / 2).prop_map(|k| 2 * k + 1).prop_filter("m >= 3", |m| *m >= 3)
}

fn operand(n: usize) -> impl Strategy<Value = CarrySaveNumber> {
    let lim = 1u128 << (n + 2);
    (0..lim, 0..lim / 2).prop_map(|(u, h)| CarrySaveNumber { u, v: 2 * h })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_decode_round_trip(x in 0u128..1 << 100) {
        prop_assert_eq!(CarrySaveNumber::encode(x).decode(), x);
    }

    #[test]
    fn multiply_is_congruent((n, m, x, y) in (3usize..=6).prop_flat_map(|n| (Just(n), modulus(n), operand(n), operand(n)))) {
        let r = semantic_multiply(&x, &y, n, m).unwrap();
        prop_assert_eq!(r.decode() % m as u128, x.decode() * y.decode() % m as u128);
    }

    #[test]
    fn mma_consumes_every_number_once(t in 1usize..200) {
        let p = MmaPlan::new(t).unwrap();
        prop_assert_eq!(p.tile_count(), t.max(3) - 2);
        prop_assert_eq!(p.stages.last().unwrap().len(), 1);
        let mut seen = HashSet::new();
        for (_, _, ins) in p.tiles() {
            for r in ins {
                if r != NumRef::Zero {
                    prop_assert!(seen.insert(r), "{:?} used twice", r);
                }
            }
        }
        let last = p.final_tile();
        let outputs = 2 * p.tile_count() - 2;
        prop_assert_eq!(seen.len(), t + outputs);
        prop_assert!(!seen.contains(&NumRef::U(last)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn adder_json_round_trip((n, m) in (2usize..=4).prop_flat_map(|n| (Just(n), modulus(n)))) {
        let c = build_modular_adder(n, m).unwrap().circuit;
        let back = Circuit::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back.count_resources(), c.count_resources());
        prop_assert_eq!(back, c);
    }

    /// Stretching any CNOT to a distant qubit must be caught.
    #[test]
    fn displaced_cnot_is_flagged(pick in any::<prop::sample::Index>()) {
        let mut c = build_modular_adder(2, 3).unwrap().circuit;
        let sites: Vec<(usize, usize)> = c.layers.iter().enumerate()
            .flat_map(|(li, l)| l.gates.iter().enumerate().filter(|g| g.1.kind == GateKind::CNOT).map(move |(gi, _)| (li, gi)))
            .collect();
        let (li, gi) = sites[pick.index(sites.len())];
        let ctrl = c.layers[li].gates[gi].qubits[0];
        let busy: HashSet<usize> = c.layers[li].gates.iter().flat_map(|g| g.qubits.clone()).collect();
        let at = c.qubits[ctrl].coord;
        let far = (0..c.qubits.len()).find(|&q| {
            let d = c.qubits[q].coord;
            !busy.contains(&q) && ((d[0] - at[0]).abs() > 1 || (d[1] - at[1]).abs() > 1)
        });
        prop_assume!(far.is_some());
        c.layers[li].gates[gi].qubits[1] = far.unwrap();
        let r = verify_architecture(&c, &ArchitectureRules::default());
        prop_assert!(r.count(Rule::Adjacency) >= 1);
    }
}
