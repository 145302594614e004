// Shared test support: a dense complex-matrix re-implementation of the
// circuit semantics (Kronecker products over explicit 2^n x 2^n matrices)
// plus dataset helpers. Deliberately naive -- it is the oracle the fast
// bit-mask kernels are checked against, so it must not share code with them.
#![allow(dead_code)]

use qcover::circuits::{ArchitectureKind, ArchitectureSpec, ParameterSet};
use qcover::datapipe::{self, FeatureSet, Sample, TransformSpec};

pub type Cpx = (f64, f64);

fn cadd(a: Cpx, b: Cpx) -> Cpx {
    (a.0 + b.0, a.1 + b.1)
}

fn cmul(a: Cpx, b: Cpx) -> Cpx {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// Dense complex matrix, row-major.
#[derive(Clone)]
pub struct CMat {
    pub n: usize,
    pub data: Vec<Cpx>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { n, data: vec![(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = (1.0, 0.0);
        }
        m
    }

    pub fn at(&self, r: usize, c: usize) -> Cpx {
        self.data[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Cpx) {
        self.data[r * self.n + c] = v;
    }

    pub fn mul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = CMat::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.at(r, k);
                if a == (0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] = cadd(out.data[r * n + c], cmul(a, rhs.at(k, c)));
                }
            }
        }
        out
    }

    pub fn kron(&self, rhs: &CMat) -> CMat {
        let (a, b) = (self.n, rhs.n);
        let mut out = CMat::zeros(a * b);
        for r1 in 0..a {
            for c1 in 0..a {
                let v = self.at(r1, c1);
                for r2 in 0..b {
                    for c2 in 0..b {
                        out.set(r1 * b + r2, c1 * b + c2, cmul(v, rhs.at(r2, c2)));
                    }
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Cpx]) -> Vec<Cpx> {
        let n = self.n;
        assert_eq!(v.len(), n);
        let mut out = vec![(0.0, 0.0); n];
        for r in 0..n {
            let mut acc = (0.0, 0.0);
            for c in 0..n {
                acc = cadd(acc, cmul(self.at(r, c), v[c]));
            }
            out[r] = acc;
        }
        out
    }

    /// cos(t/2) I - i sin(t/2) P, valid for any P with P^2 = I.
    pub fn pauli_exp(p: &CMat, theta: f64) -> CMat {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let n = p.n;
        let mut out = CMat::zeros(n);
        for r in 0..n {
            for col in 0..n {
                let pv = p.at(r, col);
                let mut v = cmul((0.0, -s), pv);
                if r == col {
                    v = cadd(v, (c, 0.0));
                }
                out.set(r, col, v);
            }
        }
        out
    }
}

pub fn pauli_x() -> CMat {
    CMat { n: 2, data: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)] }
}

pub fn pauli_y() -> CMat {
    CMat { n: 2, data: vec![(0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (0.0, 0.0)] }
}

pub fn pauli_z() -> CMat {
    CMat { n: 2, data: vec![(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)] }
}

pub fn hadamard2() -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMat { n: 2, data: vec![(h, 0.0), (h, 0.0), (h, 0.0), (-h, 0.0)] }
}

pub fn pauli(axis: char) -> CMat {
    match axis {
        'x' => pauli_x(),
        'y' => pauli_y(),
        'z' => pauli_z(),
        _ => panic!("bad axis {axis}"),
    }
}

/// Embed a 2x2 matrix at 1-based `qubit` (qubit 1 = most significant bit).
pub fn embed1(u: &CMat, qubit: usize, n_qubits: usize) -> CMat {
    let mut out = CMat::identity(1);
    for q in 1..=n_qubits {
        let factor = if q == qubit { u.clone() } else { CMat::identity(2) };
        out = out.kron(&factor);
    }
    out
}

/// exp(-i theta/2 A_q) for single-qubit Pauli A.
pub fn dense_rot(axis: char, qubit: usize, theta: f64, n_qubits: usize) -> CMat {
    CMat::pauli_exp(&embed1(&pauli(axis), qubit, n_qubits), theta)
}

/// exp(-i theta/2 A_q1 A_q2).
pub fn dense_two_pauli(axis: char, q1: usize, q2: usize, theta: f64, n_qubits: usize) -> CMat {
    let p = embed1(&pauli(axis), q1, n_qubits).mul(&embed1(&pauli(axis), q2, n_qubits));
    CMat::pauli_exp(&p, theta)
}

pub fn dense_cnot(control: usize, target: usize, n_qubits: usize) -> CMat {
    let dim = 1 << n_qubits;
    let cmask = 1usize << (n_qubits - control);
    let tmask = 1usize << (n_qubits - target);
    let mut out = CMat::zeros(dim);
    for j in 0..dim {
        let dst = if j & cmask != 0 { j ^ tmask } else { j };
        out.set(dst, j, (1.0, 0.0));
    }
    out
}

pub fn dense_hadamard(qubit: usize, n_qubits: usize) -> CMat {
    embed1(&hadamard2(), qubit, n_qubits)
}

/// Collective coupling: product over ordered pairs a < b of
/// exp(-i theta/(2(b-a)) X_a X_b).
pub fn dense_ions(theta: f64, n_qubits: usize) -> CMat {
    let mut out = CMat::identity(1 << n_qubits);
    for a in 1..n_qubits {
        for b in (a + 1)..=n_qubits {
            let g = dense_two_pauli('x', a, b, theta / (b - a) as f64, n_qubits);
            out = g.mul(&out);
        }
    }
    out
}

fn dense_pauli_chain(axis: char, n: usize, angle: impl Fn(usize) -> f64) -> CMat {
    let mut out = CMat::identity(1 << n);
    for q in 1..n {
        out = dense_two_pauli(axis, q, q + 1, angle(q - 1), n).mul(&out);
    }
    out
}

fn dense_rot_layer(axis: char, n: usize, angle: impl Fn(usize) -> f64) -> CMat {
    let mut out = CMat::identity(1 << n);
    for q in 1..=n {
        out = dense_rot(axis, q, angle(q - 1), n).mul(&out);
    }
    out
}

fn dense_cnot_layer(n: usize, ring: bool) -> CMat {
    let mut out = CMat::identity(1 << n);
    // Written CNOT_{N,1} prod_{q=1}^{N-1} CNOT_{q,q+1}: rightmost acts first.
    for q in (1..n).rev() {
        out = dense_cnot(q, q + 1, n).mul(&out);
    }
    if ring {
        out = dense_cnot(n, 1, n).mul(&out);
    }
    out
}

/// Full circuit unitary from dense matrices. Mirrors the published block
/// layouts directly; shares nothing with the bit-mask kernels.
pub fn dense_circuit(spec: &ArchitectureSpec, params: &ParameterSet, x: &[f64]) -> CMat {
    let n = spec.n_qubits;
    let ang = |i: usize| params.circuit_angle(spec, i);
    let mut u = CMat::identity(1 << n);
    if spec.kind == ArchitectureKind::Ions {
        for q in 1..=n {
            u = dense_hadamard(q, n).mul(&u);
        }
    }
    let enc_axis = if spec.kind == ArchitectureKind::Ions { 'z' } else { 'x' };
    let v = spec.v_block_len();
    for k in 0..spec.n_enc {
        u = dense_rot_layer(enc_axis, n, |q| x[q]).mul(&u);
        if spec.hone {
            for m in 1..n {
                let x2 = x[m - 1] * x[m] / (2.0 * std::f64::consts::PI);
                u = dense_rot('x', m, x2, n).mul(&u);
            }
        }
        u = dense_v_block(spec, k * v, &ang).mul(&u);
    }
    let w = spec.w_block_len();
    for l in 0..spec.n_var {
        u = dense_w_block(spec, spec.n_enc * v + l * w, &ang).mul(&u);
    }
    u
}

fn dense_v_block(spec: &ArchitectureSpec, base: usize, ang: &impl Fn(usize) -> f64) -> CMat {
    let n = spec.n_qubits;
    match spec.kind {
        ArchitectureKind::Xyz => {
            let mut u = dense_pauli_chain('z', n, |i| ang(base + i));
            u = dense_pauli_chain('x', n, |i| ang(base + (n - 1) + i)).mul(&u);
            dense_pauli_chain('y', n, |i| ang(base + 2 * (n - 1) + i)).mul(&u)
        }
        ArchitectureKind::Zzxy => {
            let u = dense_pauli_chain('z', n, |i| ang(base + i));
            dense_rot_layer('y', n, |i| ang(base + (n - 1) + i)).mul(&u)
        }
        ArchitectureKind::CnotPbc | ArchitectureKind::CnotNn => {
            let mut u = dense_cnot_layer(n, spec.kind == ArchitectureKind::CnotPbc);
            u = dense_rot_layer('y', n, |i| ang(base + i)).mul(&u);
            dense_rot_layer('z', n, |i| ang(base + n + i)).mul(&u)
        }
        ArchitectureKind::Ions => {
            let u = dense_ions(ang(base), n);
            dense_rot_layer('y', n, |i| ang(base + 1 + i)).mul(&u)
        }
    }
}

fn dense_w_block(spec: &ArchitectureSpec, base: usize, ang: &impl Fn(usize) -> f64) -> CMat {
    let n = spec.n_qubits;
    match spec.kind {
        ArchitectureKind::Xyz => {
            let mut u = dense_pauli_chain('z', n, |i| ang(base + i));
            u = dense_pauli_chain('x', n, |i| ang(base + (n - 1) + i)).mul(&u);
            u = dense_pauli_chain('y', n, |i| ang(base + 2 * (n - 1) + i)).mul(&u);
            dense_rot_layer('x', n, |i| ang(base + 3 * (n - 1) + i)).mul(&u)
        }
        ArchitectureKind::Zzxy => {
            let mut u = dense_rot_layer('x', n, |i| ang(base + i));
            u = dense_pauli_chain('z', n, |i| ang(base + n + i)).mul(&u);
            dense_rot_layer('y', n, |i| ang(base + n + (n - 1) + i)).mul(&u)
        }
        ArchitectureKind::CnotPbc | ArchitectureKind::CnotNn => {
            let mut u = dense_cnot_layer(n, spec.kind == ArchitectureKind::CnotPbc);
            u = dense_rot_layer('y', n, |i| ang(base + i)).mul(&u);
            u = dense_rot_layer('z', n, |i| ang(base + n + i)).mul(&u);
            dense_rot_layer('x', n, |i| ang(base + 2 * n + i)).mul(&u)
        }
        ArchitectureKind::Ions => {
            let mut u = dense_rot_layer('x', n, |i| ang(base + i));
            u = dense_rot_layer('z', n, |i| ang(base + n + i)).mul(&u);
            u = dense_ions(ang(base + 2 * n), n).mul(&u);
            dense_rot_layer('y', n, |i| ang(base + 2 * n + 1 + i)).mul(&u)
        }
    }
}

/// <Z_q> (1-based qubit, MSB convention) from dense amplitudes.
pub fn dense_expectation_z(amps: &[Cpx], qubit: usize, n_qubits: usize) -> f64 {
    let mask = 1usize << (n_qubits - qubit);
    amps.iter()
        .enumerate()
        .map(|(j, &(re, im))| {
            let p = re * re + im * im;
            if j & mask == 0 { p } else { -p }
        })
        .sum()
}

pub fn dense_forward(spec: &ArchitectureSpec, params: &ParameterSet, x: &[f64]) -> f64 {
    let dim = 1 << spec.n_qubits;
    let mut psi = vec![(0.0, 0.0); dim];
    psi[0] = (1.0, 0.0);
    let out = dense_circuit(spec, params, x).matvec(&psi);
    let mut f = params.bias;
    for (q, &w) in params.weights.iter().enumerate() {
        f += w * dense_expectation_z(&out, q + 1, spec.n_qubits);
    }
    f
}

pub const ALL_KINDS: [ArchitectureKind; 5] = [
    ArchitectureKind::Xyz,
    ArchitectureKind::Zzxy,
    ArchitectureKind::CnotPbc,
    ArchitectureKind::CnotNn,
    ArchitectureKind::Ions,
];

/// Transformed synthetic dataset: noiseless planted targets by default.
pub fn make_samples(n: usize, seed: u64, noise_sigma: f64, feature_set: FeatureSet) -> Vec<Sample> {
    let raws = datapipe::filter_condensate(datapipe::generate_synthetic(n, seed, noise_sigma));
    datapipe::build_dataset(&raws, &TransformSpec::defaults(feature_set))
}

/// Same, but keeping only the first `k` features (small-circuit experiments).
pub fn make_samples_truncated(n: usize, seed: u64, noise_sigma: f64, k: usize) -> Vec<Sample> {
    let mut samples = make_samples(n, seed, noise_sigma, FeatureSet::Six);
    for s in &mut samples {
        s.x.truncate(k);
    }
    samples
}
