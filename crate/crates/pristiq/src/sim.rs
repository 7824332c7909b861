//! Dense statevector simulation and small-circuit unitary extraction.
//!
//! Basis-state indexing follows the circuit convention: qubit 0 is the most
//! significant bit, so the bit of qubit `q` in index `i` of an `n`-qubit
//! state is `(i >> (n - 1 - q)) & 1`.

use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{Error, Result};
use crate::tolerance::{STATE_TOL, UNITARY_QUBIT_CAP};
use num_complex::Complex64;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Complex amplitude vector of length 2^n, unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// |0…0⟩.
    pub fn zero(n_qubits: usize) -> StateVector {
        StateVector::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> StateVector {
        assert!(n_qubits >= 1 && index < (1 << n_qubits));
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[index] = ONE;
        StateVector { n_qubits, amps }
    }

    pub fn from_amps(n_qubits: usize, amps: Vec<C64>) -> Result<StateVector> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::Argument(format!(
                "expected 2^{} amplitudes, got {}",
                n_qubits,
                amps.len()
            )));
        }
        let s = StateVector { n_qubits, amps };
        if (s.norm() - 1.0).abs() > STATE_TOL {
            return Err(Error::Argument(format!(
                "state norm {} not 1 within {STATE_TOL}",
                s.norm()
            )));
        }
        Ok(s)
    }

    /// Real non-negative amplitude vector (the image-encoding case).
    pub fn from_real(amps: &[f64]) -> Result<StateVector> {
        let n = amps.len();
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Argument(format!(
                "amplitude length {n} is not a power of two"
            )));
        }
        StateVector::from_amps(
            n.trailing_zeros() as usize,
            amps.iter().map(|&a| C64::new(a, 0.0)).collect(),
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// One amplitude per line, `<re> <im>`, for debugging dumps.
    pub fn to_text(&self) -> String {
        let mut out = format!("qubits {}\n", self.n_qubits);
        for a in &self.amps {
            out.push_str(&format!("{:.17e} {:.17e}\n", a.re, a.im));
        }
        out
    }

    fn bit(&self, index: usize, qubit: usize) -> usize {
        (index >> (self.n_qubits - 1 - qubit)) & 1
    }

    fn apply_single(&mut self, q: usize, m: &[[C64; 2]; 2]) {
        let shift = self.n_qubits - 1 - q;
        let stride = 1usize << shift;
        let dim = self.amps.len();
        let mut i = 0;
        while i < dim {
            for j in i..i + stride {
                let a0 = self.amps[j];
                let a1 = self.amps[j + stride];
                self.amps[j] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[j + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
            i += stride * 2;
        }
    }

    fn apply_controlled(&mut self, control: usize, target: usize, m: &[[C64; 2]; 2]) {
        let tshift = self.n_qubits - 1 - target;
        let tstride = 1usize << tshift;
        let dim = self.amps.len();
        let mut i = 0;
        while i < dim {
            for j in i..i + tstride {
                if self.bit(j, control) == 1 {
                    let a0 = self.amps[j];
                    let a1 = self.amps[j + tstride];
                    self.amps[j] = m[0][0] * a0 + m[0][1] * a1;
                    self.amps[j + tstride] = m[1][0] * a0 + m[1][1] * a1;
                }
            }
            i += tstride * 2;
        }
    }

    fn apply_cz(&mut self, a: usize, b: usize) {
        for i in 0..self.amps.len() {
            if self.bit(i, a) == 1 && self.bit(i, b) == 1 {
                self.amps[i] = -self.amps[i];
            }
        }
    }
}

fn rx_matrix(t: f64) -> [[C64; 2]; 2] {
    let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
    [
        [C64::new(c, 0.0), C64::new(0.0, -s)],
        [C64::new(0.0, -s), C64::new(c, 0.0)],
    ]
}

fn ry_matrix(t: f64) -> [[C64; 2]; 2] {
    let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
    [
        [C64::new(c, 0.0), C64::new(-s, 0.0)],
        [C64::new(s, 0.0), C64::new(c, 0.0)],
    ]
}

fn rz_matrix(t: f64) -> [[C64; 2]; 2] {
    [
        [C64::from_polar(1.0, -t / 2.0), ZERO],
        [ZERO, C64::from_polar(1.0, t / 2.0)],
    ]
}

const X_MATRIX: [[C64; 2]; 2] = [[ZERO, ONE], [ONE, ZERO]];

fn h_matrix() -> [[C64; 2]; 2] {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

fn apply_gate(state: &mut StateVector, gate: &Gate) -> Result<()> {
    match gate.kind {
        GateKind::Barrier => {}
        GateKind::Rx => state.apply_single(gate.qubits[0], &rx_matrix(gate.angle.unwrap())),
        GateKind::Ry => state.apply_single(gate.qubits[0], &ry_matrix(gate.angle.unwrap())),
        GateKind::Rz => state.apply_single(gate.qubits[0], &rz_matrix(gate.angle.unwrap())),
        GateKind::X => state.apply_single(gate.qubits[0], &X_MATRIX),
        GateKind::H => state.apply_single(gate.qubits[0], &h_matrix()),
        GateKind::Cnot => state.apply_controlled(gate.qubits[0], gate.qubits[1], &X_MATRIX),
        GateKind::Crx => state.apply_controlled(
            gate.qubits[0],
            gate.qubits[1],
            &rx_matrix(gate.angle.unwrap()),
        ),
        GateKind::Cz => state.apply_cz(gate.qubits[0], gate.qubits[1]),
    }
    Ok(())
}

/// Apply a circuit to an initial state.
pub fn simulate(c: &Circuit, init: &StateVector) -> Result<StateVector> {
    if c.n_qubits() != init.n_qubits() {
        return Err(Error::QubitMismatch {
            left: c.n_qubits(),
            right: init.n_qubits(),
        });
    }
    let mut state = init.clone();
    for g in c.gates() {
        apply_gate(&mut state, g)?;
    }
    Ok(state)
}

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    dim: usize,
    entries: Vec<C64>,
}

impl UnitaryMatrix {
    pub fn identity(dim: usize) -> UnitaryMatrix {
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = ONE;
        }
        UnitaryMatrix { dim, entries }
    }

    pub fn from_entries(dim: usize, entries: Vec<C64>) -> Result<UnitaryMatrix> {
        if entries.len() != dim * dim {
            return Err(Error::Argument(format!(
                "expected {}x{} entries, got {}",
                dim,
                dim,
                entries.len()
            )));
        }
        Ok(UnitaryMatrix { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: C64) {
        self.entries[row * self.dim + col] = v;
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn mul(&self, rhs: &UnitaryMatrix) -> UnitaryMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * rhs.entries[k * n + j];
                }
            }
        }
        UnitaryMatrix {
            dim: n,
            entries: out,
        }
    }

    pub fn adjoint(&self) -> UnitaryMatrix {
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.entries[i * n + j].conj();
            }
        }
        UnitaryMatrix {
            dim: n,
            entries: out,
        }
    }

    /// max |U†U − I|.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().mul(self);
        let id = UnitaryMatrix::identity(self.dim);
        p.max_abs_diff(&id)
    }

    pub fn max_abs_diff(&self, other: &UnitaryMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max entrywise |self − e^{iφ}·other| with φ taken from the
    /// largest-magnitude entry of `other`.
    pub fn max_abs_diff_up_to_phase(&self, other: &UnitaryMatrix) -> f64 {
        let (mut best, mut idx) = (0.0, 0);
        for (i, e) in other.entries.iter().enumerate() {
            if e.norm() > best {
                best = e.norm();
                idx = i;
            }
        }
        if best == 0.0 {
            return self.max_abs_diff(other);
        }
        let phase = self.entries[idx] / other.entries[idx];
        let phase = if phase.norm() == 0.0 {
            ONE
        } else {
            phase / phase.norm()
        };
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - phase * b).norm())
            .fold(0.0, f64::max)
    }
}

/// Full unitary of a circuit: column k is `simulate(c, |k⟩)`.
pub fn unitary_of(c: &Circuit) -> Result<UnitaryMatrix> {
    unitary_of_capped(c, UNITARY_QUBIT_CAP)
}

pub fn unitary_of_capped(c: &Circuit, cap: usize) -> Result<UnitaryMatrix> {
    if c.n_qubits() > cap {
        return Err(Error::Resource(format!(
            "unitary extraction capped at {cap} qubits, circuit has {}",
            c.n_qubits()
        )));
    }
    let dim = 1usize << c.n_qubits();
    let mut m = UnitaryMatrix::identity(dim);
    for k in 0..dim {
        let col = simulate(c, &StateVector::basis(c.n_qubits(), k))?;
        for (r, a) in col.amps().iter().enumerate() {
            m.set(r, k, *a);
        }
    }
    Ok(m)
}

/// Per-qubit Z expectations: entry j is Σ_i ±|amps_i|², positive when the
/// qubit reads 0 in basis index i.
pub fn z_expectations(s: &StateVector, qubits: &[usize]) -> Vec<f64> {
    qubits
        .iter()
        .map(|&q| {
            let mut e = 0.0;
            for (i, a) in s.amps().iter().enumerate() {
                let p = a.norm_sqr();
                if s.bit(i, q) == 0 {
                    e += p;
                } else {
                    e -= p;
                }
            }
            e
        })
        .collect()
}

/// Probabilities over the kept qubits (first listed qubit = most significant
/// bit of the outcome index), discarded qubits summed out.
pub fn marginal_probabilities(s: &StateVector, keep: &[usize]) -> Result<Vec<f64>> {
    if keep.is_empty() {
        return Err(Error::Argument("keep set must be nonempty".into()));
    }
    for (i, &q) in keep.iter().enumerate() {
        if q >= s.n_qubits() {
            return Err(Error::Argument(format!("qubit {q} out of range")));
        }
        if keep[..i].contains(&q) {
            return Err(Error::Argument(format!("duplicate qubit {q} in keep set")));
        }
    }
    let k = keep.len();
    let mut probs = vec![0.0; 1 << k];
    for (i, a) in s.amps().iter().enumerate() {
        let mut out = 0usize;
        for (pos, &q) in keep.iter().enumerate() {
            out |= s.bit(i, q) << (k - 1 - pos);
        }
        probs[out] += a.norm_sqr();
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;
    use rand::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_circuit(rng: &mut impl Rng, n: usize, len: usize) -> Circuit {
        let mut c = Circuit::new(n).unwrap();
        for _ in 0..len {
            match rng.gen_range(0..8) {
                0 => c.push(Gate::rx(rng.gen_range(0..n), rng.gen_range(-3.0..3.0))),
                1 => c.push(Gate::ry(rng.gen_range(0..n), rng.gen_range(-3.0..3.0))),
                2 => c.push(Gate::rz(rng.gen_range(0..n), rng.gen_range(-3.0..3.0))),
                3 => c.push(Gate::x(rng.gen_range(0..n))),
                4 => c.push(Gate::h(rng.gen_range(0..n))),
                _ if n >= 2 => {
                    let a = rng.gen_range(0..n);
                    let b = (a + rng.gen_range(1..n)) % n;
                    match rng.gen_range(0..3) {
                        0 => c.push(Gate::cnot(a, b).unwrap()),
                        1 => c.push(Gate::cz(a, b).unwrap()),
                        _ => c.push(Gate::crx(a, b, rng.gen_range(-3.0..3.0)).unwrap()),
                    }
                }
                _ => c.push(Gate::h(rng.gen_range(0..n))),
            }
            .unwrap();
        }
        c
    }

    pub(crate) fn random_state(rng: &mut impl Rng, n: usize) -> StateVector {
        let mut amps: Vec<C64> = (0..1 << n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        StateVector::from_amps(n, amps).unwrap()
    }

    #[test]
    fn empty_circuit_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = random_state(&mut rng, 3);
        let c = Circuit::new(3).unwrap();
        assert_eq!(simulate(&c, &s).unwrap(), s);
    }

    #[test]
    fn ry_half_pi_on_zero() {
        let c = Circuit::with_gates(1, vec![Gate::ry(0, FRAC_PI_2)]).unwrap();
        let s = simulate(&c, &StateVector::zero(1)).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amps()[0].re - r).abs() < 1e-12);
        assert!((s.amps()[1].re - r).abs() < 1e-12);
    }

    #[test]
    fn gate_matrices_match_definitions_on_basis_states() {
        // each 1q kind against its 2x2 matrix, each 2q kind against its 4x4
        let kinds: Vec<(Gate, Vec<Vec<C64>>)> = vec![
            (
                Gate::x(0),
                vec![vec![ZERO, ONE], vec![ONE, ZERO]],
            ),
            (
                Gate::h(0),
                vec![
                    vec![C64::new(1.0 / 2f64.sqrt(), 0.0); 2],
                    vec![
                        C64::new(1.0 / 2f64.sqrt(), 0.0),
                        C64::new(-1.0 / 2f64.sqrt(), 0.0),
                    ],
                ],
            ),
            (
                Gate::rx(0, 0.7),
                vec![
                    vec![C64::new((0.35f64).cos(), 0.0), C64::new(0.0, -(0.35f64).sin())],
                    vec![C64::new(0.0, -(0.35f64).sin()), C64::new((0.35f64).cos(), 0.0)],
                ],
            ),
        ];
        for (g, m) in kinds {
            let c = Circuit::with_gates(1, vec![g]).unwrap();
            let u = unitary_of(&c).unwrap();
            for r in 0..2 {
                for cidx in 0..2 {
                    assert!((u.get(r, cidx) - m[r][cidx]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cnot_unitary_is_expected_permutation() {
        // q0 most significant: flips index 2 <-> 3
        let c = Circuit::with_gates(2, vec![Gate::cnot(0, 1).unwrap()]).unwrap();
        let u = unitary_of(&c).unwrap();
        let expect = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]];
        for r in 0..4 {
            for cidx in 0..4 {
                assert!((u.get(r, cidx).re - expect[r][cidx] as f64).abs() < 1e-12);
                assert!(u.get(r, cidx).im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_of_empty_is_identity() {
        let c = Circuit::new(1).unwrap();
        assert!(unitary_of(&c)
            .unwrap()
            .max_abs_diff(&UnitaryMatrix::identity(2))
            < 1e-15);
    }

    #[test]
    fn unitary_cap_enforced() {
        let c = Circuit::new(11).unwrap();
        assert!(matches!(unitary_of(&c), Err(Error::Resource(_))));
    }

    #[test]
    fn norm_preserved_over_random_circuits() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=5);
            let len = rng.gen_range(0..=40);
            let c = random_circuit(&mut rng, n, len);
            let s = random_state(&mut rng, n);
            let out = simulate(&c, &s).unwrap();
            assert!((out.norm() - 1.0).abs() < STATE_TOL);
        }
    }

    #[test]
    fn barrier_is_neutral() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n = rng.gen_range(1..=5);
            let base = random_circuit(&mut rng, n, 15);
            let mut with_barriers = Circuit::new(n).unwrap();
            for (i, g) in base.gates().iter().enumerate() {
                with_barriers.push(g.clone()).unwrap();
                if i % 3 == 0 {
                    with_barriers.push(Gate::barrier(n)).unwrap();
                }
            }
            let ua = unitary_of(&base).unwrap();
            let ub = unitary_of(&with_barriers).unwrap();
            assert!(ua.max_abs_diff(&ub) < 1e-12);
        }
    }

    #[test]
    fn compose_unitary_is_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(1..=4);
            let a = random_circuit(&mut rng, n, 10);
            let b = random_circuit(&mut rng, n, 10);
            let ab = Circuit::compose(&a, &b).unwrap();
            let prod = unitary_of(&b).unwrap().mul(&unitary_of(&a).unwrap());
            assert!(unitary_of(&ab).unwrap().max_abs_diff(&prod) < 1e-8);
        }
    }

    #[test]
    fn compose_is_associative_in_unitary_and_metrics() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let a = random_circuit(&mut rng, 3, 8);
        let b = random_circuit(&mut rng, 3, 8);
        let c = random_circuit(&mut rng, 3, 8);
        let left = Circuit::compose(&Circuit::compose(&a, &b).unwrap(), &c).unwrap();
        let right = Circuit::compose(&a, &Circuit::compose(&b, &c).unwrap()).unwrap();
        assert_eq!(left.metrics(), right.metrics());
        assert!(unitary_of(&left)
            .unwrap()
            .max_abs_diff(&unitary_of(&right).unwrap())
            < 1e-12);
    }

    #[test]
    fn unitary_matches_kronecker_oracle() {
        // oracle: accumulate per-gate matrices embedded by explicit kronecker products
        fn kron(a: &Vec<Vec<C64>>, b: &Vec<Vec<C64>>) -> Vec<Vec<C64>> {
            let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
            let mut out = vec![vec![ZERO; ca * cb]; ra * rb];
            for i in 0..ra {
                for j in 0..ca {
                    for k in 0..rb {
                        for l in 0..cb {
                            out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                        }
                    }
                }
            }
            out
        }
        fn matmul(a: &Vec<Vec<C64>>, b: &Vec<Vec<C64>>) -> Vec<Vec<C64>> {
            let n = a.len();
            let mut out = vec![vec![ZERO; n]; n];
            for i in 0..n {
                for k in 0..n {
                    for j in 0..n {
                        out[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            out
        }
        let eye = |d: usize| {
            let mut m = vec![vec![ZERO; d]; d];
            for i in 0..d {
                m[i][i] = ONE;
            }
            m
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let n = 3;
            let c = random_circuit(&mut rng, n, 12);
            let mut acc = eye(1 << n);
            for g in c.gates() {
                let full: Vec<Vec<C64>> = match g.kind {
                    GateKind::Barrier => continue,
                    GateKind::Cnot | GateKind::Cz | GateKind::Crx => {
                        // embed 4x4 two-qubit matrix via projectors
                        let (ctrl, tgt) = (g.qubits[0], g.qubits[1]);
                        let m2: Vec<Vec<C64>> = match g.kind {
                            GateKind::Cnot => vec![vec![ZERO, ONE], vec![ONE, ZERO]],
                            GateKind::Cz => vec![vec![ONE, ZERO], vec![ZERO, -ONE]],
                            GateKind::Crx => {
                                let t = g.angle.unwrap();
                                vec![
                                    vec![
                                        C64::new((t / 2.0).cos(), 0.0),
                                        C64::new(0.0, -(t / 2.0).sin()),
                                    ],
                                    vec![
                                        C64::new(0.0, -(t / 2.0).sin()),
                                        C64::new((t / 2.0).cos(), 0.0),
                                    ],
                                ]
                            }
                            _ => unreachable!(),
                        };
                        let p0 = vec![vec![ONE, ZERO], vec![ZERO, ZERO]];
                        let p1 = vec![vec![ZERO, ZERO], vec![ZERO, ONE]];
                        // control part: P0 ⊗ I + P1 ⊗ m2, each factor placed at its qubit
                        let place = |q: usize, m: &Vec<Vec<C64>>| {
                            let mut acc = eye(1);
                            for i in 0..n {
                                let f = if i == q { m.clone() } else { eye(2) };
                                acc = kron(&acc, &f);
                            }
                            acc
                        };
                        let a = matmul(&place(ctrl, &p0), &eye(1 << n));
                        let b = matmul(&place(ctrl, &p1), &place(tgt, &m2));
                        let mut out = a;
                        for i in 0..1 << n {
                            for j in 0..1 << n {
                                out[i][j] += b[i][j];
                            }
                        }
                        out
                    }
                    _ => {
                        let q = g.qubits[0];
                        let m2: Vec<Vec<C64>> = {
                            let u = unitary_of(
                                &Circuit::with_gates(
                                    1,
                                    vec![Gate::new(g.kind, vec![0], g.angle, None).unwrap()],
                                )
                                .unwrap(),
                            )
                            .unwrap();
                            vec![
                                vec![u.get(0, 0), u.get(0, 1)],
                                vec![u.get(1, 0), u.get(1, 1)],
                            ]
                        };
                        let mut accm = eye(1);
                        for i in 0..n {
                            let f = if i == q { m2.clone() } else { eye(2) };
                            accm = kron(&accm, &f);
                        }
                        accm
                    }
                };
                acc = matmul(&full, &acc);
            }
            let u = unitary_of(&c).unwrap();
            for i in 0..1 << n {
                for j in 0..1 << n {
                    assert!((u.get(i, j) - acc[i][j]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn z_expectation_examples() {
        let s = StateVector::zero(1);
        assert!((z_expectations(&s, &[0])[0] - 1.0).abs() < 1e-12);

        let c = Circuit::with_gates(1, vec![Gate::ry(0, FRAC_PI_2)]).unwrap();
        let s = simulate(&c, &StateVector::zero(1)).unwrap();
        assert!(z_expectations(&s, &[0])[0].abs() < 1e-12);

        let c = Circuit::with_gates(1, vec![Gate::ry(0, PI)]).unwrap();
        let s = simulate(&c, &StateVector::zero(1)).unwrap();
        assert!((z_expectations(&s, &[0])[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn z_expectation_matches_density_matrix_trace() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let n = rng.gen_range(1..=4);
            let s = random_state(&mut rng, n);
            let q = rng.gen_range(0..n);
            // oracle: Tr(ρ·Z_q) with dense matrices
            let dim = 1usize << n;
            let mut tr = C64::new(0.0, 0.0);
            for i in 0..dim {
                let z = if (i >> (n - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
                tr += s.amps()[i] * s.amps()[i].conj() * z;
            }
            assert!((z_expectations(&s, &[q])[0] - tr.re).abs() < 1e-10);
        }
    }

    #[test]
    fn marginal_of_product_state() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let a = random_state(&mut rng, 2);
        let b = random_state(&mut rng, 2);
        let mut amps = vec![ZERO; 16];
        for i in 0..4 {
            for j in 0..4 {
                amps[i * 4 + j] = a.amps()[i] * b.amps()[j];
            }
        }
        let s = StateVector::from_amps(4, amps).unwrap();
        let p = marginal_probabilities(&s, &[0, 1]).unwrap();
        for i in 0..4 {
            assert!((p[i] - a.amps()[i].norm_sqr()).abs() < 1e-10);
        }
    }

    #[test]
    fn marginal_keep_all_is_probabilities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        let s = random_state(&mut rng, 3);
        let p = marginal_probabilities(&s, &[0, 1, 2]).unwrap();
        for i in 0..8 {
            assert!((p[i] - s.amps()[i].norm_sqr()).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < STATE_TOL);
    }

    #[test]
    fn marginal_matches_partial_trace_diagonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let s = random_state(&mut rng, 4);
        let p = marginal_probabilities(&s, &[0, 1]).unwrap();
        // oracle: dense partial trace over qubits 2,3
        let mut diag = vec![0.0; 4];
        for keep in 0..4usize {
            for rest in 0..4usize {
                let idx = keep * 4 + rest;
                diag[keep] += s.amps()[idx].norm_sqr();
            }
        }
        for i in 0..4 {
            assert!((p[i] - diag[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_rejects_empty_keep() {
        let s = StateVector::zero(2);
        assert!(marginal_probabilities(&s, &[]).is_err());
    }
}
