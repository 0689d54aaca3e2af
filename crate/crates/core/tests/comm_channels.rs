use csa_forge::comm::*;
use csa_forge::model::{CircuitBuilder, QubitId};
use csa_forge::sim::{all_outcomes, run_from, Outcomes, SimState};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_states(count: usize, seed: u64) -> Vec<(Complex64, Complex64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
            (a / n, b / n)
        })
        .collect()
}

fn cat_reference(n: usize, a: Complex64, b: Complex64) -> Vec<Complex64> {
    let mut v = vec![Complex64::default(); 1 << n];
    v[0] = a;
    v[(1 << n) - 1] = b;
    v
}

fn outcome_modes(record: usize) -> Vec<Outcomes> {
    let mut v: Vec<_> = (0..3).map(Outcomes::Seed).collect();
    if record <= 6 {
        v.extend(all_outcomes(record).map(Outcomes::Forced));
    }
    v
}

fn check(block: &csa_forge::model::Block, src: QubitId, out: &[QubitId], a: Complex64, b: Complex64) {
    let reference = cat_reference(out.len(), a, b);
    for mode in outcome_modes(block.circuit.record_size) {
        let mut s = SimState::zero(block.circuit.qubits.len());
        s.prepare(src, a, b).unwrap();
        let s = match run_from(&block.circuit, s, mode.clone()) {
            Ok(s) => s,
            Err(csa_forge::sim::SimError::ImpossibleOutcome { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        assert!((s.norm() - 1.0).abs() < 1e-9);
        let f = s.fidelity(out, &reference).unwrap();
        assert!((f - 1.0).abs() < 1e-9, "fidelity {f} under {mode:?}");
    }
}

#[test]
fn teleport_is_identity_channel() {
    for n in [3, 5, 7, 9] {
        let blk = build_teleport(n).unwrap();
        for (a, b) in random_states(20, n as u64) {
            check(&blk, blk.port("source")[0], blk.port("target"), a, b);
        }
    }
}

#[test]
fn teleport_one_and_plus() {
    let blk = build_teleport_with(7, true).unwrap();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::default();
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    check(&blk, blk.port("source")[0], blk.port("target"), zero, one);
    check(&blk, blk.port("source")[0], blk.port("target"), h, h);
    // with resets every other qubit returns to |0>
    let mut s = SimState::zero(blk.circuit.qubits.len());
    s.prepare(0, h, h).unwrap();
    let s = run_from(&blk.circuit, s, Outcomes::Seed(9)).unwrap();
    for &q in &blk.port("path")[..6] {
        assert_eq!(s.bit(q), Some(false));
    }
}

#[test]
fn fanout_extends_cat_state() {
    for n in 2..=6 {
        let blk = build_fanout(n).unwrap();
        for (a, b) in random_states(20, 100 + n as u64) {
            check(&blk, blk.port("source")[0], blk.port("copies"), a, b);
        }
    }
    let blk = build_fanout(3).unwrap();
    check(&blk, blk.port("source")[0], blk.port("copies"), Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0));
}

#[test]
fn fanout_of_zero_copies_zero() {
    let blk = build_fanout(5).unwrap();
    for seed in 0..5 {
        let s = run_from(&blk.circuit, SimState::zero(blk.circuit.qubits.len()), Outcomes::Seed(seed)).unwrap();
        for &q in blk.port("copies") {
            assert_eq!(s.bit(q), Some(false));
        }
    }
}

#[test]
fn forced_all_zero_fanout_three() {
    let blk = build_fanout(3).unwrap();
    let mut s = SimState::zero(blk.circuit.qubits.len());
    s.prepare(0, Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0)).unwrap();
    let s = run_from(&blk.circuit, s, Outcomes::Forced(vec![false; blk.circuit.record_size])).unwrap();
    let amps = s.amplitudes(blk.port("copies"));
    assert_eq!(amps.len(), 2);
    assert!((amps[0].1.re.abs() - 0.6).abs() < 1e-12 && (amps[1].1.re.abs() - 0.8).abs() < 1e-12);
    assert!(
        s.fidelity(blk.port("copies"), &cat_reference(3, Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0))).unwrap()
            > 1.0 - 1e-9
    );
}

fn cat_then_unfanout(n: usize, resets: bool) -> (csa_forge::model::Circuit, Vec<QubitId>) {
    let mut b = CircuitBuilder::new();
    let m = b.module("u");
    let qs: Vec<_> = (0..n as i32).map(|x| b.at(m, x, 0)).collect();
    for w in qs.windows(2) {
        b.cnot(w[0], w[1]);
    }
    b.barrier();
    emit_unfanout(&mut b, &qs, resets).unwrap();
    (b.finish(), qs)
}

#[test]
fn unfanout_collapses_onto_target() {
    for n in 2..=9 {
        let (c, qs) = cat_then_unfanout(n, true);
        for (a, bb) in random_states(20, 200 + n as u64) {
            for mode in outcome_modes(c.record_size) {
                let mut s = SimState::zero(c.qubits.len());
                s.prepare(qs[0], a, bb).unwrap();
                let s = run_from(&c, s, mode).unwrap();
                let f = s.fidelity(&qs[n - 1..], &[a, bb]).unwrap();
                assert!((f - 1.0).abs() < 1e-9, "n={n} fidelity {f}");
                for &q in &qs[..n - 1] {
                    assert_eq!(s.bit(q), Some(false));
                }
            }
        }
    }
}

#[test]
fn unfanout_seven_resources() {
    let r = build_unfanout(7).unwrap().resources();
    assert!(r.depth <= 6 && r.size <= 23);
    assert_eq!(r.width, 7);
}

#[test]
fn fanout_then_unfanout_is_identity() {
    for n in 2..=6 {
        let mut b = CircuitBuilder::new();
        let m = b.module("f");
        let path: Vec<_> = (0..(3 * n - 1) as i32).map(|x| b.at(m, x, 0)).collect();
        let plan = line_fanout_plan(&path, true, false);
        emit_fanout(&mut b, &plan);
        b.barrier();
        let copies = plan.copies();
        emit_unfanout(&mut b, &copies, false).unwrap();
        let c = b.finish();
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        for (a, bb) in random_states(5, 300 + n as u64).into_iter().chain([(h, h)]) {
            for seed in 0..3 {
                let mut s = SimState::zero(c.qubits.len());
                s.prepare(path[0], a, bb).unwrap();
                let s = run_from(&c, s, Outcomes::Seed(seed)).unwrap();
                let f = s.fidelity(&copies[n - 1..], &[a, bb]).unwrap();
                assert!((f - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn keep_source_fanout_and_release_round_trip() {
    let mut b = CircuitBuilder::new();
    let m = b.module("k");
    let path: Vec<_> = (0..8).map(|x| b.at(m, x, 0)).collect();
    let plan = CatPlan {
        source: path[0],
        segments: vec![
            Segment { head: path[1], members: vec![Member::Copy(path[2]), Member::Link(path[3])] },
            Segment { head: path[4], members: vec![Member::Dummy(path[5]), Member::Link(path[6])] },
            Segment { head: path[7], members: vec![] },
        ],
        consume_source: false,
        resets: true,
    };
    let mut plan = plan;
    let last = b.at(m, 8, 0);
    plan.segments[2].members.push(Member::Copy(last));
    emit_fanout(&mut b, &plan);
    b.barrier();
    let mid = b.depth();
    emit_release(&mut b, &plan);
    let c = b.finish();
    let (a, bb) = (Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
    for mode in outcome_modes(c.record_size).into_iter().take(40) {
        let mut s = SimState::zero(c.qubits.len());
        s.prepare(path[0], a, bb).unwrap();
        let s = run_from(&c, s, mode).unwrap();
        assert!((s.fidelity(&[path[0]], &[a, bb]).unwrap() - 1.0).abs() < 1e-9);
        for q in 1..c.qubits.len() {
            assert_eq!(s.bit(q), Some(false));
        }
    }
    // the fanout half alone produces the three-qubit cat
    let mut half = c.clone();
    half.layers.truncate(mid);
    half.record_size = half.slot_layers().iter().filter(|&&l| l < mid).count();
    let mut s = SimState::zero(c.qubits.len());
    s.prepare(path[0], a, bb).unwrap();
    let s = run_from(&half, s, Outcomes::Seed(4)).unwrap();
    assert!((s.fidelity(&[path[0], path[2], last], &cat_reference(3, a, bb)).unwrap() - 1.0).abs() < 1e-9);
}
