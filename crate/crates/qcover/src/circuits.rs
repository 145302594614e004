//! Circuit architectures and the forward pass of the data re-uploading
//! regressors.
//!
//! A circuit is n_enc repetitions of [encoding layer S(x), encoding block
//! V(theta_k)], followed by n_var variational blocks W(phi_l). Operator
//! products in block definitions are applied right-to-left (rightmost factor
//! acts first). The readout is f(x) = bias + sum_n w_n <sigma^z_n>.
//!
//! Flat circuit-angle indexing, used by gradients and serialization alike:
//! encoding blocks in order (block 0 first), then variational blocks; inside
//! a block, the parameter slice order of the architecture definition.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statevector::{Axis, SimError, Statevector, MAX_QUBITS};

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("invalid architecture spec: {0}")]
    InvalidSpec(String),
    #[error("feature vector has {got} entries, spec expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter block sizes do not match the architecture: {0}")]
    BlockSizeMismatch(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Circuit family. The HONE flag (higher-order angle encoding) lives on the
/// spec and is only valid for the CNOT kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArchitectureKind {
    Xyz,
    Zzxy,
    CnotPbc,
    CnotNn,
    Ions,
}

impl ArchitectureKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Xyz => "XYZ",
            Self::Zzxy => "ZZXY",
            Self::CnotPbc => "CNOT_PBC",
            Self::CnotNn => "CNOT_NN",
            Self::Ions => "IONS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    /// Number of qubits = number of input features.
    pub n_qubits: usize,
    pub n_enc: usize,
    pub n_var: usize,
    #[serde(default)]
    pub hone: bool,
}

impl ArchitectureSpec {
    pub fn new(kind: ArchitectureKind, n_qubits: usize, n_enc: usize, n_var: usize) -> Result<Self, CircuitError> {
        let spec = Self { kind, n_qubits, n_enc, n_var, hone: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_hone(mut self, hone: bool) -> Result<Self, CircuitError> {
        self.hone = hone;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.n_qubits < 2 || self.n_qubits > MAX_QUBITS {
            return Err(CircuitError::InvalidSpec(format!(
                "n_qubits must be in 2..={MAX_QUBITS}, got {}",
                self.n_qubits
            )));
        }
        if self.n_enc < 1 {
            return Err(CircuitError::InvalidSpec("n_enc must be >= 1".into()));
        }
        if self.hone && !matches!(self.kind, ArchitectureKind::CnotPbc | ArchitectureKind::CnotNn) {
            return Err(CircuitError::InvalidSpec(format!(
                "HONE encoding is only defined for the CNOT kinds, got {}",
                self.kind.label()
            )));
        }
        Ok(())
    }

    /// Size of one encoding block V.
    pub fn v_block_len(&self) -> usize {
        let n = self.n_qubits;
        match self.kind {
            ArchitectureKind::Xyz => 3 * n - 3,
            ArchitectureKind::Zzxy => 2 * n - 1,
            ArchitectureKind::CnotPbc | ArchitectureKind::CnotNn => 2 * n,
            ArchitectureKind::Ions => n + 1,
        }
    }

    /// Size of one variational block W.
    pub fn w_block_len(&self) -> usize {
        let n = self.n_qubits;
        match self.kind {
            ArchitectureKind::Xyz => 4 * n - 3,
            ArchitectureKind::Zzxy => 3 * n - 1,
            ArchitectureKind::CnotPbc | ArchitectureKind::CnotNn => 3 * n,
            ArchitectureKind::Ions => 3 * n + 1,
        }
    }

    pub fn n_circuit_angles(&self) -> usize {
        self.n_enc * self.v_block_len() + self.n_var * self.w_block_len()
    }

    /// Total trainable parameter count D = n_enc|V| + n_var|W| + N + 1.
    pub fn param_count(&self) -> usize {
        self.n_circuit_angles() + self.n_qubits + 1
    }
}

/// Full trainable set: encoding-block angles, variational-block angles,
/// readout weights, bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub enc_blocks: Vec<Vec<f64>>,
    pub var_blocks: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ParameterSet {
    pub fn zeros(spec: &ArchitectureSpec) -> Self {
        Self {
            enc_blocks: vec![vec![0.0; spec.v_block_len()]; spec.n_enc],
            var_blocks: vec![vec![0.0; spec.w_block_len()]; spec.n_var],
            weights: vec![0.0; spec.n_qubits],
            bias: 0.0,
        }
    }

    pub fn check_shapes(&self, spec: &ArchitectureSpec) -> Result<(), CircuitError> {
        let v = spec.v_block_len();
        let w = spec.w_block_len();
        if self.enc_blocks.len() != spec.n_enc
            || self.var_blocks.len() != spec.n_var
            || self.enc_blocks.iter().any(|b| b.len() != v)
            || self.var_blocks.iter().any(|b| b.len() != w)
            || self.weights.len() != spec.n_qubits
        {
            return Err(CircuitError::BlockSizeMismatch(format!(
                "expected {} enc blocks of {v}, {} var blocks of {w}, {} weights",
                spec.n_enc, spec.n_var, spec.n_qubits
            )));
        }
        Ok(())
    }

    /// Circuit angle by flat index (enc blocks first, then var blocks).
    pub fn circuit_angle(&self, spec: &ArchitectureSpec, idx: usize) -> f64 {
        let v = spec.v_block_len();
        let enc_total = spec.n_enc * v;
        if idx < enc_total {
            self.enc_blocks[idx / v][idx % v]
        } else {
            let w = spec.w_block_len();
            let j = idx - enc_total;
            self.var_blocks[j / w][j % w]
        }
    }

    pub fn set_circuit_angle(&mut self, spec: &ArchitectureSpec, idx: usize, value: f64) {
        let v = spec.v_block_len();
        let enc_total = spec.n_enc * v;
        if idx < enc_total {
            self.enc_blocks[idx / v][idx % v] = value;
        } else {
            let w = spec.w_block_len();
            let j = idx - enc_total;
            self.var_blocks[j / w][j % w] = value;
        }
    }

    /// Full flat parameter vector: circuit angles, then weights, then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .enc_blocks
            .iter()
            .chain(&self.var_blocks)
            .flatten()
            .copied()
            .collect();
        out.extend_from_slice(&self.weights);
        out.push(self.bias);
        out
    }

    pub fn from_flat(spec: &ArchitectureSpec, flat: &[f64]) -> Result<Self, CircuitError> {
        if flat.len() != spec.param_count() {
            return Err(CircuitError::BlockSizeMismatch(format!(
                "flat vector of {} vs D={}",
                flat.len(),
                spec.param_count()
            )));
        }
        let mut ps = Self::zeros(spec);
        let mut it = flat.iter().copied();
        for b in ps.enc_blocks.iter_mut().chain(ps.var_blocks.iter_mut()) {
            for x in b.iter_mut() {
                *x = it.next().unwrap();
            }
        }
        for w in ps.weights.iter_mut() {
            *w = it.next().unwrap();
        }
        ps.bias = it.next().unwrap();
        Ok(ps)
    }
}

/// QNN model bundle used for (de)serialization: spec plus parameters in one
/// flat JSON object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QnnModel {
    pub kind: ArchitectureKind,
    #[serde(rename = "N")]
    pub n_qubits: usize,
    pub n_enc: usize,
    pub n_var: usize,
    #[serde(default)]
    pub hone: bool,
    pub enc_blocks: Vec<Vec<f64>>,
    pub var_blocks: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl QnnModel {
    pub fn pack(spec: &ArchitectureSpec, params: &ParameterSet) -> Self {
        Self {
            kind: spec.kind,
            n_qubits: spec.n_qubits,
            n_enc: spec.n_enc,
            n_var: spec.n_var,
            hone: spec.hone,
            enc_blocks: params.enc_blocks.clone(),
            var_blocks: params.var_blocks.clone(),
            weights: params.weights.clone(),
            bias: params.bias,
        }
    }

    pub fn unpack(self) -> Result<(ArchitectureSpec, ParameterSet), CircuitError> {
        let spec = ArchitectureSpec::new(self.kind, self.n_qubits, self.n_enc, self.n_var)?
            .with_hone(self.hone)?;
        let params = ParameterSet {
            enc_blocks: self.enc_blocks,
            var_blocks: self.var_blocks,
            weights: self.weights,
            bias: self.bias,
        };
        params.check_shapes(&spec)?;
        Ok((spec, params))
    }
}

/// One gate of the lowered circuit. `Param` angles refer to the flat
/// circuit-angle index; `Fixed` angles come from the encoded features.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Gate {
    Rot { axis: Axis, qubit: usize, angle: AngleRef },
    TwoPauli { axis: Axis, q1: usize, q2: usize, angle: AngleRef },
    Cnot { control: usize, target: usize },
    Hadamard { qubit: usize },
    /// Collective coupling exp(-i t/2 sum_{n<m} X_n X_m/(m-n)).
    Ions { angle: AngleRef },
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum AngleRef {
    Fixed(f64),
    Param(usize),
}

/// An additive shift applied to one circuit angle during evaluation. For the
/// IONS collective angle, `ions_pair` selects a single commuting factor
/// (0-based pair counter in (n,m) order, n outer) whose local angle is
/// shifted instead.
#[derive(Debug, Clone, Copy)]
pub struct AngleShift {
    pub flat_index: usize,
    pub delta: f64,
    pub ions_pair: Option<usize>,
}

static ENCODE_RANGE_WARNED: AtomicBool = AtomicBool::new(false);

/// Lower the circuit for input `x` into a gate list.
pub(crate) fn build_gates(spec: &ArchitectureSpec, x: &[f64]) -> Result<Vec<Gate>, CircuitError> {
    spec.validate()?;
    let n = spec.n_qubits;
    if x.len() != n {
        return Err(CircuitError::DimensionMismatch { expected: n, got: x.len() });
    }
    if x.iter().any(|&v| !(0.0..=std::f64::consts::PI).contains(&v))
        && !ENCODE_RANGE_WARNED.swap(true, Ordering::Relaxed)
    {
        eprintln!("warning: input feature outside [0, pi]; proceeding (min-max scaling was fit on training data)");
    }
    let mut gates = Vec::new();
    if spec.kind == ArchitectureKind::Ions {
        for q in 1..=n {
            gates.push(Gate::Hadamard { qubit: q });
        }
    }
    let v = spec.v_block_len();
    for k in 0..spec.n_enc {
        push_encoding_layer(&mut gates, spec, x);
        push_v_block(&mut gates, spec, k * v);
    }
    let enc_total = spec.n_enc * v;
    let w = spec.w_block_len();
    for l in 0..spec.n_var {
        push_w_block(&mut gates, spec, enc_total + l * w);
    }
    Ok(gates)
}

fn push_encoding_layer(gates: &mut Vec<Gate>, spec: &ArchitectureSpec, x: &[f64]) {
    let n = spec.n_qubits;
    let axis = if spec.kind == ArchitectureKind::Ions { Axis::Z } else { Axis::X };
    for q in 1..=n {
        gates.push(Gate::Rot { axis, qubit: q, angle: AngleRef::Fixed(x[q - 1]) });
    }
    if spec.hone {
        // Second-order layer: x2_m = x_m x_{m+1} / (2 pi) uploaded on qubit m.
        for m in 1..n {
            let x2 = x[m - 1] * x[m] / (2.0 * std::f64::consts::PI);
            gates.push(Gate::Rot { axis: Axis::X, qubit: m, angle: AngleRef::Fixed(x2) });
        }
    }
}

/// Pauli-rotation chain R_aa: factors exp(-i theta_n/2 s^a_n s^a_{n+1}),
/// n = 1..N-1. The factors commute, applied in ascending n.
fn push_pauli_chain(gates: &mut Vec<Gate>, axis: Axis, n: usize, base: usize) {
    for q in 1..n {
        gates.push(Gate::TwoPauli { axis, q1: q, q2: q + 1, angle: AngleRef::Param(base + q - 1) });
    }
}

fn push_rot_layer(gates: &mut Vec<Gate>, axis: Axis, n: usize, base: usize) {
    for q in 1..=n {
        gates.push(Gate::Rot { axis, qubit: q, angle: AngleRef::Param(base + q - 1) });
    }
}

fn push_cnot_layer(gates: &mut Vec<Gate>, n: usize, ring: bool) {
    // Written CNOT_{N,1} prod_{n=1}^{N-1} CNOT_{n,n+1}: rightmost acts first.
    for q in (1..n).rev() {
        gates.push(Gate::Cnot { control: q, target: q + 1 });
    }
    if ring {
        gates.push(Gate::Cnot { control: n, target: 1 });
    }
}

fn push_v_block(gates: &mut Vec<Gate>, spec: &ArchitectureSpec, base: usize) {
    let n = spec.n_qubits;
    match spec.kind {
        ArchitectureKind::Xyz => {
            push_pauli_chain(gates, Axis::Z, n, base);
            push_pauli_chain(gates, Axis::X, n, base + (n - 1));
            push_pauli_chain(gates, Axis::Y, n, base + 2 * (n - 1));
        }
        ArchitectureKind::Zzxy => {
            push_pauli_chain(gates, Axis::Z, n, base);
            push_rot_layer(gates, Axis::Y, n, base + (n - 1));
        }
        ArchitectureKind::CnotPbc | ArchitectureKind::CnotNn => {
            push_cnot_layer(gates, n, spec.kind == ArchitectureKind::CnotPbc);
            push_rot_layer(gates, Axis::Y, n, base);
            push_rot_layer(gates, Axis::Z, n, base + n);
        }
        ArchitectureKind::Ions => {
            gates.push(Gate::Ions { angle: AngleRef::Param(base) });
            push_rot_layer(gates, Axis::Y, n, base + 1);
        }
    }
}

fn push_w_block(gates: &mut Vec<Gate>, spec: &ArchitectureSpec, base: usize) {
    let n = spec.n_qubits;
    match spec.kind {
        ArchitectureKind::Xyz => {
            push_pauli_chain(gates, Axis::Z, n, base);
            push_pauli_chain(gates, Axis::X, n, base + (n - 1));
            push_pauli_chain(gates, Axis::Y, n, base + 2 * (n - 1));
            push_rot_layer(gates, Axis::X, n, base + 3 * (n - 1));
        }
        ArchitectureKind::Zzxy => {
            push_rot_layer(gates, Axis::X, n, base);
            push_pauli_chain(gates, Axis::Z, n, base + n);
            push_rot_layer(gates, Axis::Y, n, base + n + (n - 1));
        }
        ArchitectureKind::CnotPbc | ArchitectureKind::CnotNn => {
            push_cnot_layer(gates, n, spec.kind == ArchitectureKind::CnotPbc);
            push_rot_layer(gates, Axis::Y, n, base);
            push_rot_layer(gates, Axis::Z, n, base + n);
            push_rot_layer(gates, Axis::X, n, base + 2 * n);
        }
        ArchitectureKind::Ions => {
            push_rot_layer(gates, Axis::X, n, base);
            push_rot_layer(gates, Axis::Z, n, base + n);
            gates.push(Gate::Ions { angle: AngleRef::Param(base + 2 * n) });
            push_rot_layer(gates, Axis::Y, n, base + 2 * n + 1);
        }
    }
}

pub(crate) fn resolve_angle(angle: AngleRef, spec: &ArchitectureSpec, params: &ParameterSet) -> f64 {
    match angle {
        AngleRef::Fixed(a) => a,
        AngleRef::Param(i) => params.circuit_angle(spec, i),
    }
}

pub(crate) fn apply_gate(
    state: &mut Statevector,
    gate: &Gate,
    spec: &ArchitectureSpec,
    params: &ParameterSet,
    shift: Option<&AngleShift>,
) -> Result<(), SimError> {
    let shifted = |angle: AngleRef| -> f64 {
        let mut a = resolve_angle(angle, spec, params);
        if let (AngleRef::Param(i), Some(s)) = (angle, shift) {
            if s.flat_index == i && s.ions_pair.is_none() {
                a += s.delta;
            }
        }
        a
    };
    match *gate {
        Gate::Rot { axis, qubit, angle } => state.apply_rot(axis, qubit, shifted(angle)),
        Gate::TwoPauli { axis, q1, q2, angle } => state.apply_two_pauli_rot(axis, q1, q2, shifted(angle)),
        Gate::Cnot { control, target } => state.apply_cnot(control, target),
        Gate::Hadamard { qubit } => state.apply_hadamard(qubit),
        Gate::Ions { angle } => {
            let t = resolve_angle(angle, spec, params);
            let n = state.n_qubits();
            let mut pair = 0usize;
            for a in 1..n {
                for b in (a + 1)..=n {
                    let mut local = t / (b - a) as f64;
                    if let (AngleRef::Param(i), Some(s)) = (angle, shift) {
                        if s.flat_index == i {
                            match s.ions_pair {
                                Some(p) if p == pair => local += s.delta,
                                // A plain shift on the collective angle shifts t itself.
                                None => local += s.delta / (b - a) as f64,
                                _ => {}
                            }
                        }
                    }
                    state.apply_two_pauli_rot(Axis::X, a, b, local)?;
                    pair += 1;
                }
            }
            Ok(())
        }
    }
}

/// Run the full circuit on |0...0> for input `x`, optionally with one angle
/// shifted, and return the output state.
pub fn run_circuit(
    spec: &ArchitectureSpec,
    params: &ParameterSet,
    x: &[f64],
    shift: Option<&AngleShift>,
) -> Result<Statevector, CircuitError> {
    params.check_shapes(spec)?;
    let gates = build_gates(spec, x)?;
    let mut state = Statevector::zero_state(spec.n_qubits)?;
    for g in &gates {
        apply_gate(&mut state, g, spec, params, shift)?;
    }
    Ok(state)
}

/// Apply one encoding layer S(x) to an existing state.
pub fn encode_layer(state: &mut Statevector, spec: &ArchitectureSpec, x: &[f64]) -> Result<(), CircuitError> {
    spec.validate()?;
    if x.len() != spec.n_qubits {
        return Err(CircuitError::DimensionMismatch { expected: spec.n_qubits, got: x.len() });
    }
    let mut gates = Vec::new();
    push_encoding_layer(&mut gates, spec, x);
    let params = ParameterSet::zeros(spec);
    for g in &gates {
        apply_gate(state, g, spec, &params, None)?;
    }
    Ok(())
}

/// Exact (infinite-shot) prediction f(x) = b + sum_n w_n <sigma^z_n>.
pub fn forward(spec: &ArchitectureSpec, params: &ParameterSet, x: &[f64]) -> Result<f64, CircuitError> {
    let state = run_circuit(spec, params, x, None)?;
    let z = state.all_expectation_z();
    Ok(params.bias + dot(&params.weights, &z))
}

/// Finite-shot prediction. All per-qubit estimators come from the same shot
/// set (one measurement yields all bits). Returns the estimate and the
/// per-qubit z estimates.
pub fn forward_sampled(
    spec: &ArchitectureSpec,
    params: &ParameterSet,
    x: &[f64],
    n_shots: usize,
    rng_seed: u64,
) -> Result<(f64, Vec<f64>), CircuitError> {
    if n_shots == 0 {
        return Err(CircuitError::Sim(SimError::ZeroShots));
    }
    let state = run_circuit(spec, params, x, None)?;
    let (z, _) = state.sampled_z_zz(n_shots, rng_seed, false);
    Ok((params.bias + dot(&params.weights, &z), z))
}

/// Random initialization: angles ~ U[0, 2pi), weights ~ U[-1/N, 1/N],
/// bias = 0.5. Deterministic per seed.
pub fn init_params(spec: &ArchitectureSpec, rng_seed: u64) -> Result<ParameterSet, CircuitError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut ps = ParameterSet::zeros(spec);
    for block in ps.enc_blocks.iter_mut().chain(ps.var_blocks.iter_mut()) {
        for a in block.iter_mut() {
            *a = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        }
    }
    let bound = 1.0 / spec.n_qubits as f64;
    for w in ps.weights.iter_mut() {
        *w = rng.gen_range(-bound..bound);
    }
    ps.bias = 0.5;
    Ok(ps)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Number of ordered (n,m) pairs, n<m, in the IONS coupling.
pub fn ions_pair_count(n_qubits: usize) -> usize {
    n_qubits * (n_qubits - 1) / 2
}

/// Per-pair coupling strengths c_{nm} = 1/(m-n) in pair-counter order.
pub fn ions_pair_couplings(n_qubits: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(ions_pair_count(n_qubits));
    for a in 1..n_qubits {
        for b in (a + 1)..=n_qubits {
            out.push(1.0 / (b - a) as f64);
        }
    }
    out
}
