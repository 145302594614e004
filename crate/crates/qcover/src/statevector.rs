//! Dense state-vector simulator for the gate set used by the circuit ansatzes.
//!
//! Amplitudes are stored split into real and imaginary parts so the gate
//! kernels autovectorize. Basis ordering convention (fixed, documented here
//! and nowhere else): qubit 1 is the most significant bit of the basis index,
//! qubit `n_qubits` the least significant. All public qubit indices are
//! 1-based, matching the subscripts used throughout the crate. The bit mask
//! of qubit `q` is therefore `1 << (n_qubits - q)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Hard cap on register size: 2^20 amplitudes = 16 MiB of doubles.
pub const MAX_QUBITS: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("qubit count {0} outside supported range 1..={MAX_QUBITS}")]
    QubitCountOutOfRange(usize),
    #[error("qubit index {index} out of range for {n_qubits} qubits (indices are 1-based)")]
    QubitIndexOutOfRange { index: usize, n_qubits: usize },
    #[error("two-qubit gate requires distinct qubits, got {0} twice")]
    DuplicateQubits(usize),
    #[error("rotation angle must be finite")]
    NonFiniteAngle,
    #[error("sampling requires at least one shot")]
    ZeroShots,
    #[error("collective coupling requires at least 2 qubits")]
    TooFewQubits,
}

/// Rotation axis of a single- or two-qubit Pauli rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Measurement outcomes of one shot: sigma^z eigenvalue (+1 or -1) per qubit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString {
    pub bits: Vec<i8>,
}

/// Normalized complex amplitude array over the 2^n computational basis states.
#[derive(Debug, Clone)]
pub struct Statevector {
    n_qubits: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Statevector {
    /// |0...0> on `n_qubits` qubits.
    pub fn zero_state(n_qubits: usize) -> Result<Self, SimError> {
        if n_qubits < 1 || n_qubits > MAX_QUBITS {
            return Err(SimError::QubitCountOutOfRange(n_qubits));
        }
        let len = 1usize << n_qubits;
        let mut re = vec![0.0; len];
        let im = vec![0.0; len];
        re[0] = 1.0;
        Ok(Self { n_qubits, re, im })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Amplitudes as (re, im) pairs in basis order.
    pub fn amplitudes(&self) -> Vec<(f64, f64)> {
        self.re.iter().copied().zip(self.im.iter().copied()).collect()
    }

    /// Overwrite the amplitudes; for test oracles. Panics on length mismatch.
    pub fn set_amplitudes(&mut self, amps: &[(f64, f64)]) {
        assert_eq!(amps.len(), self.re.len());
        for (k, &(r, i)) in amps.iter().enumerate() {
            self.re[k] = r;
            self.im[k] = i;
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }

    fn mask(&self, qubit: usize) -> Result<usize, SimError> {
        if qubit < 1 || qubit > self.n_qubits {
            return Err(SimError::QubitIndexOutOfRange {
                index: qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(1usize << (self.n_qubits - qubit))
    }

    /// Single-qubit rotation exp(-i*angle/2 * sigma^axis) on `qubit` (1-based).
    pub fn apply_rot(&mut self, axis: Axis, qubit: usize, angle: f64) -> Result<(), SimError> {
        if !angle.is_finite() {
            return Err(SimError::NonFiniteAngle);
        }
        let mask = self.mask(qubit)?;
        let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
        match axis {
            Axis::X => kernel_rx(&mut self.re, &mut self.im, mask, c, s),
            Axis::Y => kernel_ry(&mut self.re, &mut self.im, mask, c, s),
            Axis::Z => kernel_rz(&mut self.re, &mut self.im, mask, c, s),
        }
        Ok(())
    }

    /// Im<self|other>; building block of the gradient inner products.
    pub(crate) fn inner_im(&self, other: &Statevector) -> f64 {
        debug_assert_eq!(self.re.len(), other.re.len());
        let mut acc = 0.0;
        for k in 0..self.re.len() {
            acc += self.re[k] * other.im[k] - self.im[k] * other.re[k];
        }
        acc
    }

    /// Overwrite this state with a copy of `other` (no reallocation).
    pub(crate) fn copy_from(&mut self, other: &Statevector) {
        debug_assert_eq!(self.re.len(), other.re.len());
        self.re.copy_from_slice(&other.re);
        self.im.copy_from_slice(&other.im);
    }

    /// (sum_n w_n sigma^z_n) |self>; diagonal, returns a new (unnormalized)
    /// vector.
    pub(crate) fn weighted_z_applied(&self, weights: &[f64]) -> Statevector {
        debug_assert_eq!(weights.len(), self.n_qubits);
        let mut out = self.clone();
        for (b, (r, i)) in out.re.iter_mut().zip(out.im.iter_mut()).enumerate() {
            let mut d = 0.0;
            for (q, &w) in weights.iter().enumerate() {
                let mask = 1usize << (self.n_qubits - 1 - q);
                d += if b & mask == 0 { w } else { -w };
            }
            *r *= d;
            *i *= d;
        }
        out
    }

    /// Rotation kernel with precomputed bit mask and half-angle cosine/sine;
    /// hot path for the gradient sweep, which replays each gate across many
    /// tangent states.
    pub(crate) fn apply_rot_cs(&mut self, axis: Axis, mask: usize, c: f64, s: f64) {
        debug_assert!(mask > 0 && mask < self.re.len());
        match axis {
            Axis::X => kernel_rx(&mut self.re, &mut self.im, mask, c, s),
            Axis::Y => kernel_ry(&mut self.re, &mut self.im, mask, c, s),
            Axis::Z => kernel_rz(&mut self.re, &mut self.im, mask, c, s),
        }
    }

    /// Two-qubit rotation kernel with precomputed masks and half-angle
    /// cosine/sine.
    pub(crate) fn apply_two_pauli_cs(&mut self, axis: Axis, m1: usize, m2: usize, c: f64, s: f64) {
        debug_assert!(m1 != m2);
        match axis {
            Axis::X => kernel_rxx(&mut self.re, &mut self.im, m1, m2, c, s),
            Axis::Y => kernel_ryy(&mut self.re, &mut self.im, m1, m2, c, s),
            Axis::Z => kernel_rzz(&mut self.re, &mut self.im, m1, m2, c, s),
        }
    }

    /// Two-qubit rotation exp(-i*angle/2 * sigma^axis_q1 sigma^axis_q2).
    pub fn apply_two_pauli_rot(
        &mut self,
        axis: Axis,
        q1: usize,
        q2: usize,
        angle: f64,
    ) -> Result<(), SimError> {
        if !angle.is_finite() {
            return Err(SimError::NonFiniteAngle);
        }
        if q1 == q2 {
            return Err(SimError::DuplicateQubits(q1));
        }
        let m1 = self.mask(q1)?;
        let m2 = self.mask(q2)?;
        let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
        match axis {
            Axis::X => kernel_rxx(&mut self.re, &mut self.im, m1, m2, c, s),
            Axis::Y => kernel_ryy(&mut self.re, &mut self.im, m1, m2, c, s),
            Axis::Z => kernel_rzz(&mut self.re, &mut self.im, m1, m2, c, s),
        }
        Ok(())
    }

    /// Apply a bare Pauli operator (unitary and hermitian) to one qubit.
    /// Used by the fused form of the shift rule, where the generator is
    /// inserted into the circuit.
    pub fn apply_pauli(&mut self, axis: Axis, qubit: usize) -> Result<(), SimError> {
        let mask = self.mask(qubit)?;
        match axis {
            Axis::X => for_each_pair(&mut self.re, &mut self.im, mask, |r0, i0, r1, i1| {
                std::mem::swap(r0, r1);
                std::mem::swap(i0, i1);
            }),
            Axis::Y => for_each_pair(&mut self.re, &mut self.im, mask, |r0, i0, r1, i1| {
                // Y|0> = i|1>, Y|1> = -i|0>
                let (a, b, d, e) = (*r0, *i0, *r1, *i1);
                *r0 = e;
                *i0 = -d;
                *r1 = -b;
                *i1 = a;
            }),
            Axis::Z => for_each_pair(&mut self.re, &mut self.im, mask, |_r0, _i0, r1, i1| {
                *r1 = -*r1;
                *i1 = -*i1;
            }),
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<(), SimError> {
        if control == target {
            return Err(SimError::DuplicateQubits(control));
        }
        let cm = self.mask(control)?;
        let tm = self.mask(target)?;
        let len = self.re.len();
        // Swap |c=1,t=0> with |c=1,t=1>.
        let mut b = 0usize;
        while b < len {
            if b & cm != 0 && b & tm == 0 {
                let p = b | tm;
                self.re.swap(b, p);
                self.im.swap(b, p);
            }
            b += 1;
        }
        Ok(())
    }

    pub fn apply_hadamard(&mut self, qubit: usize) -> Result<(), SimError> {
        let mask = self.mask(qubit)?;
        kernel_h(&mut self.re, &mut self.im, mask);
        Ok(())
    }

    /// Collective coupling exp(-i*angle/2 * sum_{n<m} sigma^x_n sigma^x_m / (m-n)).
    ///
    /// All terms commute, so the exponential factorizes exactly into the
    /// ordered product of two-qubit x-rotations with per-pair angle
    /// angle/(m-n).
    pub fn apply_ions_coupling(&mut self, angle: f64) -> Result<(), SimError> {
        if self.n_qubits < 2 {
            return Err(SimError::TooFewQubits);
        }
        for n in 1..self.n_qubits {
            for m in (n + 1)..=self.n_qubits {
                self.apply_two_pauli_rot(Axis::X, n, m, angle / (m - n) as f64)?;
            }
        }
        Ok(())
    }

    /// <sigma^z_qubit> = sum_b |amp_b|^2 * (+1 if bit is 0 else -1).
    pub fn expectation_z(&self, qubit: usize) -> Result<f64, SimError> {
        let mask = self.mask(qubit)?;
        let mut acc = 0.0;
        for b in 0..self.re.len() {
            let p = self.re[b] * self.re[b] + self.im[b] * self.im[b];
            acc += if b & mask == 0 { p } else { -p };
        }
        Ok(acc)
    }

    /// <sigma^z_q1 sigma^z_q2>. For q1 == q2 this is exactly 1; covariance
    /// diagonals must use 1 - <sigma^z>^2 instead.
    pub fn expectation_zz(&self, q1: usize, q2: usize) -> Result<f64, SimError> {
        let m1 = self.mask(q1)?;
        let m2 = self.mask(q2)?;
        if q1 == q2 {
            return Ok(1.0);
        }
        let mut acc = 0.0;
        for b in 0..self.re.len() {
            let p = self.re[b] * self.re[b] + self.im[b] * self.im[b];
            let same = (b & m1 == 0) == (b & m2 == 0);
            acc += if same { p } else { -p };
        }
        Ok(acc)
    }

    /// Expectation of the diagonal observable sum_n w_n sigma^z_n.
    ///
    /// Weighted single pass over the amplitudes; used by the gradient hot path.
    pub fn expectation_weighted_z(&self, weights: &[f64]) -> f64 {
        assert_eq!(weights.len(), self.n_qubits);
        let mut acc = 0.0;
        for b in 0..self.re.len() {
            let p = self.re[b] * self.re[b] + self.im[b] * self.im[b];
            acc += p * diag_weighted_z(b, self.n_qubits, weights);
        }
        acc
    }

    /// Im <self | O | other> for the diagonal observable O = sum_n w_n sigma^z_n.
    /// Both states must have the same size.
    pub fn weighted_z_cross_im(&self, other: &Statevector, weights: &[f64]) -> f64 {
        assert_eq!(self.re.len(), other.re.len());
        assert_eq!(weights.len(), self.n_qubits);
        let mut acc = 0.0;
        for b in 0..self.re.len() {
            // Im(conj(a) * b) = a_re*b_im - a_im*b_re
            let cross = self.re[b] * other.im[b] - self.im[b] * other.re[b];
            acc += cross * diag_weighted_z(b, self.n_qubits, weights);
        }
        acc
    }

    /// Im <self | other> per diagonal z and zz observables, returned as the
    /// vector of per-qubit Im<a|Z_n|b> and the strictly-upper zz entries
    /// Im<a|Z_m Z_n|b> (row-major m<n). Used by the variance-regularizer
    /// gradient where every z and zz derivative is needed at once.
    pub fn z_zz_cross_im(&self, other: &Statevector) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_qubits;
        let mut z = vec![0.0; n];
        let mut zz = vec![0.0; n * (n - 1) / 2];
        for b in 0..self.re.len() {
            let cross = self.re[b] * other.im[b] - self.im[b] * other.re[b];
            if cross == 0.0 {
                continue;
            }
            accumulate_z_zz(b, n, cross, &mut z, &mut zz);
        }
        (z, zz)
    }

    /// Per-qubit <sigma^z_n> and strictly-upper <sigma^z_m sigma^z_n> (m<n) in one pass.
    pub fn z_zz_expectations(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_qubits;
        let mut z = vec![0.0; n];
        let mut zz = vec![0.0; n * (n - 1) / 2];
        for b in 0..self.re.len() {
            let p = self.re[b] * self.re[b] + self.im[b] * self.im[b];
            accumulate_z_zz(b, n, p, &mut z, &mut zz);
        }
        (z, zz)
    }

    /// All per-qubit <sigma^z_n> as a vector (1-based qubit n at index n-1).
    pub fn all_expectation_z(&self) -> Vec<f64> {
        let n = self.n_qubits;
        let mut z = vec![0.0; n];
        for b in 0..self.re.len() {
            let p = self.re[b] * self.re[b] + self.im[b] * self.im[b];
            for q in 0..n {
                let mask = 1usize << (n - 1 - q);
                z[q] += if b & mask == 0 { p } else { -p };
            }
        }
        z
    }

    /// Draw `n_shots` i.i.d. bit-strings from the Born distribution.
    /// Deterministic for a given seed.
    pub fn sample_bitstrings(&self, n_shots: usize, rng_seed: u64) -> Result<Vec<BitString>, SimError> {
        if n_shots == 0 {
            return Err(SimError::ZeroShots);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let indices = self.sample_indices(n_shots, &mut rng);
        let n = self.n_qubits;
        Ok(indices
            .into_iter()
            .map(|b| BitString {
                bits: (1..=n)
                    .map(|q| if b & (1usize << (n - q)) == 0 { 1i8 } else { -1i8 })
                    .collect(),
            })
            .collect())
    }

    /// Sample basis-state indices; shared by `sample_bitstrings` and the
    /// shot-mode estimator which only needs per-qubit sums.
    pub fn sample_indices(&self, n_shots: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let len = self.re.len();
        let mut cdf = Vec::with_capacity(len);
        let mut acc = 0.0;
        for b in 0..len {
            acc += self.re[b] * self.re[b] + self.im[b] * self.im[b];
            cdf.push(acc);
        }
        let total = acc;
        (0..n_shots)
            .map(|_| {
                let u: f64 = rng.gen::<f64>() * total;
                match cdf.binary_search_by(|probe| probe.partial_cmp(&u).unwrap()) {
                    Ok(i) | Err(i) => i.min(len - 1),
                }
            })
            .collect()
    }

    /// Per-qubit shot-averaged z estimates and (optionally) the strictly-upper
    /// zz estimates, all from the same `n_shots` samples.
    pub fn sampled_z_zz(
        &self,
        n_shots: usize,
        seed: u64,
        want_zz: bool,
    ) -> (Vec<f64>, Option<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices = self.sample_indices(n_shots, &mut rng);
        let n = self.n_qubits;
        let mut z = vec![0.0; n];
        let mut zz = if want_zz {
            vec![0.0; n * (n - 1) / 2]
        } else {
            Vec::new()
        };
        for &b in &indices {
            if want_zz {
                accumulate_z_zz(b, n, 1.0, &mut z, &mut zz);
            } else {
                for q in 0..n {
                    let mask = 1usize << (n - 1 - q);
                    z[q] += if b & mask == 0 { 1.0 } else { -1.0 };
                }
            }
        }
        let inv = 1.0 / n_shots as f64;
        for v in &mut z {
            *v *= inv;
        }
        if want_zz {
            for v in &mut zz {
                *v *= inv;
            }
            (z, Some(zz))
        } else {
            (z, None)
        }
    }
}

/// sum_n w_n z_n(b) with z_n(b) = +1 if bit of qubit n is 0 else -1.
#[inline]
fn diag_weighted_z(b: usize, n: usize, weights: &[f64]) -> f64 {
    let mut acc = 0.0;
    for q in 0..n {
        let mask = 1usize << (n - 1 - q);
        acc += if b & mask == 0 { weights[q] } else { -weights[q] };
    }
    acc
}

/// Accumulate weight into per-qubit z sums and strictly-upper zz sums for basis index b.
#[inline]
fn accumulate_z_zz(b: usize, n: usize, weight: f64, z: &mut [f64], zz: &mut [f64]) {
    let mut signs = [0.0f64; MAX_QUBITS];
    for q in 0..n {
        let mask = 1usize << (n - 1 - q);
        let s = if b & mask == 0 { 1.0 } else { -1.0 };
        signs[q] = s;
        z[q] += weight * s;
    }
    let mut k = 0;
    for m in 0..n {
        for q in (m + 1)..n {
            zz[k] += weight * signs[m] * signs[q];
            k += 1;
        }
    }
}

/// Index of the strictly-upper (m,q) pair (0-based, m<q) in row-major packing.
pub fn upper_pair_index(m: usize, q: usize, n: usize) -> usize {
    debug_assert!(m < q && q < n);
    m * n - m * (m + 1) / 2 + (q - m - 1)
}

#[inline]
fn for_each_pair(re: &mut [f64], im: &mut [f64], mask: usize, mut f: impl FnMut(&mut f64, &mut f64, &mut f64, &mut f64)) {
    let len = re.len();
    let stride = mask << 1;
    let mut g = 0;
    while g < len {
        let (ra, rb) = re[g..g + stride].split_at_mut(mask);
        let (ia, ib) = im[g..g + stride].split_at_mut(mask);
        for k in 0..mask {
            f(&mut ra[k], &mut ia[k], &mut rb[k], &mut ib[k]);
        }
        g += stride;
    }
}

fn kernel_rx(re: &mut [f64], im: &mut [f64], mask: usize, c: f64, s: f64) {
    for_each_pair(re, im, mask, |r0, i0, r1, i1| {
        let (a, b, d, e) = (*r0, *i0, *r1, *i1);
        *r0 = c * a + s * e;
        *i0 = c * b - s * d;
        *r1 = c * d + s * b;
        *i1 = c * e - s * a;
    });
}

fn kernel_ry(re: &mut [f64], im: &mut [f64], mask: usize, c: f64, s: f64) {
    for_each_pair(re, im, mask, |r0, i0, r1, i1| {
        let (a, b, d, e) = (*r0, *i0, *r1, *i1);
        *r0 = c * a - s * d;
        *i0 = c * b - s * e;
        *r1 = s * a + c * d;
        *i1 = s * b + c * e;
    });
}

fn kernel_rz(re: &mut [f64], im: &mut [f64], mask: usize, c: f64, s: f64) {
    // |0> picks up e^{-i angle/2}, |1> picks up e^{+i angle/2}.
    for_each_pair(re, im, mask, |r0, i0, r1, i1| {
        let (a, b, d, e) = (*r0, *i0, *r1, *i1);
        *r0 = c * a + s * b;
        *i0 = c * b - s * a;
        *r1 = c * d - s * e;
        *i1 = c * e + s * d;
    });
}

fn kernel_h(re: &mut [f64], im: &mut [f64], mask: usize) {
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    for_each_pair(re, im, mask, |r0, i0, r1, i1| {
        let (a, b, d, e) = (*r0, *i0, *r1, *i1);
        *r0 = inv * (a + d);
        *i0 = inv * (b + e);
        *r1 = inv * (a - d);
        *i1 = inv * (b - e);
    });
}

fn kernel_rzz(re: &mut [f64], im: &mut [f64], m1: usize, m2: usize, c: f64, s: f64) {
    for b in 0..re.len() {
        let same = (b & m1 == 0) == (b & m2 == 0);
        // eigenvalue +1 -> e^{-i angle/2}; eigenvalue -1 -> e^{+i angle/2}
        let sg = if same { s } else { -s };
        let (a, i) = (re[b], im[b]);
        re[b] = c * a + sg * i;
        im[b] = c * i - sg * a;
    }
}

fn kernel_rxx(re: &mut [f64], im: &mut [f64], m1: usize, m2: usize, c: f64, s: f64) {
    let m12 = m1 | m2;
    let hi = m1.max(m2);
    let len = re.len();
    let stride = hi << 1;
    let mut g = 0;
    while g < len {
        for k in g..g + hi {
            let b = k;
            let p = b ^ m12;
            let (a0, i0, a1, i1) = (re[b], im[b], re[p], im[p]);
            re[b] = c * a0 + s * i1;
            im[b] = c * i0 - s * a1;
            re[p] = c * a1 + s * i0;
            im[p] = c * i1 - s * a0;
        }
        g += stride;
    }
}

fn kernel_ryy(re: &mut [f64], im: &mut [f64], m1: usize, m2: usize, c: f64, s: f64) {
    let m12 = m1 | m2;
    let hi = m1.max(m2);
    let lo = m1.min(m2);
    let len = re.len();
    let stride = hi << 1;
    let mut g = 0;
    while g < len {
        for k in g..g + hi {
            let b = k;
            let p = b ^ m12;
            // (YY)_{b,p} = -1 if the two bits of b agree, +1 otherwise.
            let sign = if (b & lo == 0) == (b & hi == 0) { -s } else { s };
            let (a0, i0, a1, i1) = (re[b], im[b], re[p], im[p]);
            re[b] = c * a0 + sign * i1;
            im[b] = c * i0 - sign * a1;
            re[p] = c * a1 + sign * i0;
            im[p] = c * i1 - sign * a0;
        }
        g += stride;
    }
}
