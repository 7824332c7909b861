//! Security keys and the encryption subcircuit.
//!
//! A key holds M random angles δ (one per secure qubit) and a random CNOT
//! permutation over the full N+M register. Encrypting an N-qubit data state
//! x appends |Q⟩ = ⊗ₖ[cos(δₖ/2), sin(δₖ/2)] on the secure qubits and then
//! permutes the basis: S₃ = P · (x ⊗ Q). A closed-form reference path
//! mirrors the circuit path for validation.

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const DELTA_MIN: f64 = std::f64::consts::PI / 8.0;
pub const DELTA_MAX: f64 = 7.0 * std::f64::consts::PI / 8.0;

/// Secret encryption key: rotation angles plus a basis permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityKey {
    pub n_data_qubits: usize,
    pub n_secure_qubits: usize,
    /// One angle per secure qubit, each in [π/8, 7π/8).
    pub delta: Vec<f64>,
    /// (control, target) CNOT pairs over the N+M register, applied in order.
    pub perm_gates: Vec<(usize, usize)>,
    /// Qubits carrying an X gate after the CNOTs (affine permutations).
    pub x_gates: Vec<usize>,
    pub seed: u64,
    pub fingerprint: String,
}

fn fingerprint_of(
    n: usize,
    m: usize,
    delta: &[f64],
    perm: &[(usize, usize)],
    xs: &[usize],
    seed: u64,
) -> String {
    let mut h = Sha256::new();
    h.update(n.to_le_bytes());
    h.update(m.to_le_bytes());
    for d in delta {
        h.update(d.to_le_bytes());
    }
    for (c, t) in perm {
        h.update(c.to_le_bytes());
        h.update(t.to_le_bytes());
    }
    for x in xs {
        h.update(x.to_le_bytes());
    }
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Sample a key. Deterministic in (n, m, n_perm_gates, allow_x, seed).
pub fn generate_key(
    n_data_qubits: usize,
    n_secure_qubits: usize,
    n_perm_gates: usize,
    allow_x: bool,
    seed: u64,
) -> Result<SecurityKey> {
    if n_data_qubits == 0 {
        return Err(Error::Argument("need at least one data qubit".into()));
    }
    if n_secure_qubits == 0 {
        return Err(Error::Argument(
            "need at least one secure qubit to encrypt".into(),
        ));
    }
    let total = n_data_qubits + n_secure_qubits;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta: Vec<f64> = (0..n_secure_qubits)
        .map(|_| rng.gen_range(DELTA_MIN..DELTA_MAX))
        .collect();
    let perm_gates: Vec<(usize, usize)> = (0..n_perm_gates)
        .map(|_| {
            let c = rng.gen_range(0..total);
            let t = (c + rng.gen_range(1..total)) % total;
            (c, t)
        })
        .collect();
    let x_gates: Vec<usize> = if allow_x {
        (0..total).filter(|_| rng.gen_bool(0.5)).collect()
    } else {
        Vec::new()
    };
    let fingerprint = fingerprint_of(
        n_data_qubits,
        n_secure_qubits,
        &delta,
        &perm_gates,
        &x_gates,
        seed,
    );
    Ok(SecurityKey {
        n_data_qubits,
        n_secure_qubits,
        delta,
        perm_gates,
        x_gates,
        seed,
        fingerprint,
    })
}

/// Default permutation budget: 2·(N+M) CNOTs.
pub fn default_perm_gates(n_data_qubits: usize, n_secure_qubits: usize) -> usize {
    2 * (n_data_qubits + n_secure_qubits)
}

impl SecurityKey {
    pub fn n_total_qubits(&self) -> usize {
        self.n_data_qubits + self.n_secure_qubits
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_data_qubits == 0 || self.n_secure_qubits == 0 {
            return Err(Error::Config("key has empty register".into()));
        }
        if self.delta.len() != self.n_secure_qubits {
            return Err(Error::Config(format!(
                "{} angles for {} secure qubits",
                self.delta.len(),
                self.n_secure_qubits
            )));
        }
        for &d in &self.delta {
            if !(DELTA_MIN..DELTA_MAX).contains(&d) {
                return Err(Error::Config(format!("angle {d} outside [π/8, 7π/8)")));
            }
        }
        let total = self.n_total_qubits();
        for &(c, t) in &self.perm_gates {
            if c == t || c >= total || t >= total {
                return Err(Error::Config(format!("bad permutation gate ({c}, {t})")));
            }
        }
        for &q in &self.x_gates {
            if q >= total {
                return Err(Error::Config(format!("x gate on out-of-range qubit {q}")));
            }
        }
        let expect = fingerprint_of(
            self.n_data_qubits,
            self.n_secure_qubits,
            &self.delta,
            &self.perm_gates,
            &self.x_gates,
            self.seed,
        );
        if expect != self.fingerprint {
            return Err(Error::Config("key fingerprint does not match fields".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SecurityKey> {
        let text = std::fs::read_to_string(path)?;
        let key: SecurityKey = serde_json::from_str(&text)?;
        key.validate()?;
        Ok(key)
    }
}

/// |Q⟩ = ⊗ₖ [cos(δₖ/2), sin(δₖ/2)], length 2^M, unit norm.
pub fn scaling_vector(delta: &[f64]) -> Vec<f64> {
    let mut q = vec![1.0];
    for &d in delta {
        let (c, s) = ((d / 2.0).cos(), (d / 2.0).sin());
        let mut next = Vec::with_capacity(q.len() * 2);
        for &v in &q {
            next.push(v * c);
            next.push(v * s);
        }
        q = next;
    }
    q
}

/// Encryption subcircuit on N+M qubits: Ry(δₖ) on each secure qubit
/// (indices N..N+M−1), then the permutation CNOTs and any X gates.
pub fn build_encryption_circuit(key: &SecurityKey) -> Result<Circuit> {
    key.validate()?;
    let mut c = Circuit::new(key.n_total_qubits())?;
    for (k, &d) in key.delta.iter().enumerate() {
        c.push(Gate::ry(key.n_data_qubits + k, d))?;
    }
    for &(ctrl, tgt) in &key.perm_gates {
        c.push(Gate::cnot(ctrl, tgt)?)?;
    }
    for &q in &key.x_gates {
        c.push(Gate::x(q))?;
    }
    Ok(c)
}

/// Basis-index image under the key's permutation: CNOT(c,t) maps index i to
/// i with the t-bit xored by the c-bit; X(q) flips the q-bit. Qubit 0 is the
/// most significant bit.
fn permute_index(key: &SecurityKey, mut i: usize) -> usize {
    let n = key.n_total_qubits();
    let bit = |i: usize, q: usize| (i >> (n - 1 - q)) & 1;
    for &(c, t) in &key.perm_gates {
        if bit(i, c) == 1 {
            i ^= 1 << (n - 1 - t);
        }
    }
    for &q in &key.x_gates {
        i ^= 1 << (n - 1 - q);
    }
    i
}

/// Closed-form encryption: S₂ = x ⊗ Q laid out with qubit 0 most
/// significant, then the basis permutation. Mirrors the circuit path.
pub fn encrypt_reference(x: &[f64], key: &SecurityKey) -> Result<Vec<f64>> {
    key.validate()?;
    if x.len() != 1 << key.n_data_qubits {
        return Err(Error::Argument(format!(
            "expected 2^{} features, got {}",
            key.n_data_qubits,
            x.len()
        )));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("input norm {norm} is not 1")));
    }
    let q = scaling_vector(&key.delta);
    let qdim = q.len();
    let mut s3 = vec![0.0; x.len() * qdim];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            s3[permute_index(key, i * qdim + j)] = xi * qj;
        }
    }
    Ok(s3)
}

/// Encrypt every sample of a dataset, widening the register by M qubits.
pub fn encrypt_dataset(
    ds: &crate::data::Dataset,
    key: &SecurityKey,
) -> Result<crate::data::Dataset> {
    if ds.n_qubits != key.n_data_qubits {
        return Err(Error::QubitMismatch {
            left: ds.n_qubits,
            right: key.n_data_qubits,
        });
    }
    if ds.encrypted_with.is_some() {
        return Err(Error::Argument("dataset is already encrypted".into()));
    }
    let mut out = crate::data::Dataset::new(key.n_total_qubits(), ds.n_classes);
    out.encrypted_with = Some(key.fingerprint.clone());
    for s in &ds.samples {
        out.push(encrypt_reference(&s.features, key)?, s.label)?;
    }
    Ok(out)
}

/// True when every row and column of the circuit's unitary holds exactly one
/// entry of modulus 1 (within tol) and zeros elsewhere.
pub fn is_permutation_matrix(u: &crate::sim::UnitaryMatrix, tol: f64) -> bool {
    let n = u.dim();
    let mut col_hits = vec![0usize; n];
    for r in 0..n {
        let mut row_hits = 0;
        for c in 0..n {
            let v: Complex64 = u.get(r, c);
            if (v.norm() - 1.0).abs() < tol {
                row_hits += 1;
                col_hits[c] += 1;
            } else if v.norm() > tol {
                return false;
            }
        }
        if row_hits != 1 {
            return false;
        }
    }
    col_hits.iter().all(|&h| h == 1)
}
