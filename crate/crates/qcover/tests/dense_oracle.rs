// Bit-mask kernels vs explicit dense-matrix construction for N <= 3.

mod common;

use common::*;
use qcover::circuits::{self, ArchitectureSpec};
use qcover::statevector::{Axis, Statevector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

fn random_state(n_qubits: usize, rng: &mut ChaCha8Rng) -> (Statevector, Vec<Cpx>) {
    let dim = 1 << n_qubits;
    let mut amps: Vec<Cpx> = (0..dim)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|&(r, i)| r * r + i * i).sum::<f64>().sqrt();
    for a in &mut amps {
        a.0 /= norm;
        a.1 /= norm;
    }
    let mut sv = Statevector::zero_state(n_qubits).unwrap();
    sv.set_amplitudes(&amps);
    (sv, amps)
}

fn assert_states_close(sv: &Statevector, dense: &[Cpx], ctx: &str) {
    for (j, (&(dr, di), (sr, si))) in dense.iter().zip(sv.amplitudes()).enumerate() {
        assert!(
            (dr - sr).abs() < TOL && (di - si).abs() < TOL,
            "{ctx}: amplitude {j} differs: dense ({dr}, {di}) vs kernel ({sr}, {si})"
        );
    }
}

#[test]
fn single_qubit_rotations_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=3 {
        for q in 1..=n {
            for (axis, ch) in [(Axis::X, 'x'), (Axis::Y, 'y'), (Axis::Z, 'z')] {
                let theta = rng.gen_range(-7.0..7.0);
                let (mut sv, amps) = random_state(n, &mut rng);
                sv.apply_rot(axis, q, theta).unwrap();
                let dense = dense_rot(ch, q, theta, n).matvec(&amps);
                assert_states_close(&sv, &dense, &format!("R{ch} q{q} n{n}"));
            }
        }
    }
}

#[test]
fn two_pauli_rotations_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 2..=3 {
        for q1 in 1..=n {
            for q2 in 1..=n {
                if q1 == q2 {
                    continue;
                }
                for (axis, ch) in [(Axis::X, 'x'), (Axis::Y, 'y'), (Axis::Z, 'z')] {
                    let theta = rng.gen_range(-7.0..7.0);
                    let (mut sv, amps) = random_state(n, &mut rng);
                    sv.apply_two_pauli_rot(axis, q1, q2, theta).unwrap();
                    let dense = dense_two_pauli(ch, q1, q2, theta, n).matvec(&amps);
                    assert_states_close(&sv, &dense, &format!("R{ch}{ch} q{q1},{q2} n{n}"));
                }
            }
        }
    }
}

#[test]
fn cnot_and_hadamard_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in 2..=3 {
        for c in 1..=n {
            for t in 1..=n {
                if c == t {
                    continue;
                }
                let (mut sv, amps) = random_state(n, &mut rng);
                sv.apply_cnot(c, t).unwrap();
                let dense = dense_cnot(c, t, n).matvec(&amps);
                assert_states_close(&sv, &dense, &format!("CNOT {c}->{t} n{n}"));
            }
        }
        for q in 1..=n {
            let (mut sv, amps) = random_state(n, &mut rng);
            sv.apply_hadamard(q).unwrap();
            let dense = dense_hadamard(q, n).matvec(&amps);
            assert_states_close(&sv, &dense, &format!("H q{q} n{n}"));
        }
    }
}

#[test]
fn pauli_gates_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for n in 1..=3 {
        for q in 1..=n {
            for (axis, ch) in [(Axis::X, 'x'), (Axis::Y, 'y'), (Axis::Z, 'z')] {
                let (mut sv, amps) = random_state(n, &mut rng);
                sv.apply_pauli(axis, q).unwrap();
                let dense = embed1(&pauli(ch), q, n).matvec(&amps);
                assert_states_close(&sv, &dense, &format!("{ch} q{q} n{n}"));
            }
        }
    }
}

#[test]
fn ions_coupling_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for n in 2..=3 {
        let theta = rng.gen_range(-7.0..7.0);
        let (mut sv, amps) = random_state(n, &mut rng);
        sv.apply_ions_coupling(theta).unwrap();
        let dense = dense_ions(theta, n).matvec(&amps);
        assert_states_close(&sv, &dense, &format!("ions n{n}"));
    }
}

#[test]
fn full_forward_matches_dense_all_kinds() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    use qcover::circuits::ArchitectureKind;
    for kind in ALL_KINDS {
        // HONE second-order encoding is only defined for the CNOT kinds.
        let hone_options: &[bool] =
            if matches!(kind, ArchitectureKind::CnotPbc | ArchitectureKind::CnotNn) {
                &[false, true]
            } else {
                &[false]
            };
        for n in 2..=3 {
            for &hone in hone_options {
                let spec = ArchitectureSpec::new(kind, n, 2, 2)
                    .unwrap()
                    .with_hone(hone)
                    .unwrap();
                for rep in 0..3 {
                    let params = circuits::init_params(&spec, rng.gen()).unwrap();
                    let x: Vec<f64> =
                        (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::PI)).collect();
                    let fast = circuits::forward(&spec, &params, &x).unwrap();
                    let dense = dense_forward(&spec, &params, &x);
                    assert!(
                        (fast - dense).abs() < TOL,
                        "{kind:?} n{n} hone={hone} rep{rep}: {fast} vs {dense}"
                    );
                }
            }
        }
    }
}

#[test]
fn expectation_values_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in 1..=3 {
        let (sv, amps) = random_state(n, &mut rng);
        for q in 1..=n {
            let fast = sv.expectation_z(q).unwrap();
            let dense = dense_expectation_z(&amps, q, n);
            assert!((fast - dense).abs() < TOL, "<Z_{q}> n{n}: {fast} vs {dense}");
        }
    }
}

#[test]
fn weighted_readout_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let n = 3;
    let (sv, amps) = random_state(n, &mut rng);
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fast = sv.expectation_weighted_z(&weights);
    let dense: f64 = weights
        .iter()
        .enumerate()
        .map(|(q, w)| w * dense_expectation_z(&amps, q + 1, n))
        .sum();
    assert!((fast - dense).abs() < TOL);
}
