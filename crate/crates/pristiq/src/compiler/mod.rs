//! Obfuscating compiler passes.
//!
//! The pipeline hides where the data-encoding circuit ends and the
//! encryption circuit begins: each secure-qubit rotation is split into two
//! random halves wrapped around a dummy CNOT pair (with a barrier stopping
//! cancellation), then every barrier-delimited segment is partitioned into
//! one/two-qubit blocks whose unitaries are re-synthesized from scratch over
//! {CNOT, Ry, Rz}.

pub mod kak;
pub mod zyz;

use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{Error, Result};
use crate::sim::{unitary_of, UnitaryMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub use kak::{cnot_count, kak as kak_decompose, synthesize_two_qubit, KakDecomposition};
pub use zyz::{zyz_angles, zyz_gates};

/// Options for the obfuscation pipeline.
#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    /// Maximum qubits per consolidated block (2 supported).
    pub block_size: usize,
    /// Dummy CNOT pairs inserted per secure qubit.
    pub dummy_pairs: usize,
}

impl Default for CompileOptions {
    fn default() -> CompileOptions {
        CompileOptions {
            block_size: 2,
            dummy_pairs: 1,
        }
    }
}

/// Split each secure qubit's single Ry(δ) into Ry(α)…Ry(δ−α) around dummy
/// CNOT pairs onto random data qubits, a barrier between each pair. The
/// overall unitary is unchanged.
pub fn insert_dummies(
    c: &Circuit,
    secure_qubits: &[usize],
    seed: u64,
    dummy_pairs: usize,
) -> Result<Circuit> {
    let n = c.n_qubits();
    for &s in secure_qubits {
        if s >= n {
            return Err(Error::Pass(format!("secure qubit {s} out of range")));
        }
        let ry_count = c
            .gates()
            .iter()
            .filter(|g| g.kind == GateKind::Ry && g.qubits[0] == s)
            .count();
        if ry_count != 1 {
            return Err(Error::Pass(format!(
                "secure qubit {s} carries {ry_count} Ry gates, expected exactly 1"
            )));
        }
    }
    let data_qubits: Vec<usize> = (0..n).filter(|q| !secure_qubits.contains(q)).collect();
    if data_qubits.is_empty() {
        return Err(Error::Pass("no data qubits to target dummies at".into()));
    }
    if dummy_pairs == 0 {
        return Err(Error::Pass("dummy pair count must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Circuit::new(n)?;
    for g in c.gates() {
        let is_secure_ry =
            g.kind == GateKind::Ry && secure_qubits.contains(&g.qubits[0]);
        if !is_secure_ry {
            out.push(g.clone())?;
            continue;
        }
        let s = g.qubits[0];
        let delta = g.angle.unwrap();
        let alpha = if delta.abs() > 0.0 {
            rng.gen_range(0.0..delta.abs()) * delta.signum()
        } else {
            0.0
        };
        if alpha.abs() > 1e-15 {
            out.push(Gate::ry(s, alpha))?;
        }
        for _ in 0..dummy_pairs {
            let target = data_qubits[rng.gen_range(0..data_qubits.len())];
            out.push(Gate::cnot(s, target)?)?;
            out.push(Gate::barrier(n))?;
            out.push(Gate::cnot(s, target)?)?;
        }
        if (delta - alpha).abs() > 1e-15 {
            out.push(Gate::ry(s, delta - alpha))?;
        }
    }
    Ok(out)
}

/// A maximal run of gates confined to a small qubit set.
#[derive(Debug, Clone)]
pub struct Block {
    /// Ascending global qubit indices; the first is the block-local
    /// most-significant qubit.
    pub qubits: Vec<usize>,
    pub gates: Vec<Gate>,
}

impl Block {
    /// Unitary of the block over its own (sorted) qubits.
    pub fn unitary(&self) -> Result<UnitaryMatrix> {
        let mut local = Circuit::new(self.qubits.len())?;
        for g in &self.gates {
            let qubits: Vec<usize> = g
                .qubits
                .iter()
                .map(|q| self.qubits.iter().position(|b| b == q).unwrap())
                .collect();
            local.push(Gate::new(g.kind, qubits, g.angle, g.param_id)?)?;
        }
        unitary_of(&local)
    }
}

/// Greedily group each barrier-delimited segment into connected blocks of at
/// most `block_size` qubits. Blocks are emitted in close order, which only
/// reorders gates on disjoint qubits, so concatenating all blocks of a
/// segment reproduces the segment's unitary.
pub fn partition(c: &Circuit, block_size: usize) -> Result<Vec<Vec<Block>>> {
    if block_size != 2 {
        return Err(Error::Pass(format!(
            "block size {block_size} not supported (only 2)"
        )));
    }
    let mut segments = Vec::new();
    let mut open: Vec<Block> = Vec::new();
    let mut closed: Vec<Block> = Vec::new();

    let flush =
        |open: &mut Vec<Block>, closed: &mut Vec<Block>, segments: &mut Vec<Vec<Block>>| {
            closed.append(open);
            segments.push(std::mem::take(closed));
        };

    for g in c.gates() {
        if g.kind == GateKind::Barrier {
            flush(&mut open, &mut closed, &mut segments);
            continue;
        }
        if g.qubits.len() > block_size {
            return Err(Error::Pass(format!(
                "{}-qubit gate exceeds block size {block_size}",
                g.qubits.len()
            )));
        }
        let hits: Vec<usize> = (0..open.len())
            .filter(|&i| open[i].qubits.iter().any(|q| g.qubits.contains(q)))
            .collect();
        let mut union: Vec<usize> = g.qubits.clone();
        for &i in &hits {
            for &q in &open[i].qubits {
                if !union.contains(&q) {
                    union.push(q);
                }
            }
        }
        if union.len() <= block_size {
            // merge all touched blocks (they are disjoint from each other)
            union.sort_unstable();
            let mut gates = Vec::new();
            for &i in &hits {
                gates.append(&mut open[i].gates);
            }
            gates.push(g.clone());
            for &i in hits.iter().rev() {
                open.remove(i);
            }
            open.push(Block {
                qubits: union,
                gates,
            });
        } else {
            // close the conflicting blocks, then start fresh with this gate
            for &i in hits.iter().rev() {
                closed.push(open.remove(i));
            }
            let mut qubits = g.qubits.clone();
            qubits.sort_unstable();
            open.push(Block {
                qubits,
                gates: vec![g.clone()],
            });
        }
    }
    flush(&mut open, &mut closed, &mut segments);
    Ok(segments)
}

/// Re-synthesize a 2x2 or 4x4 unitary over {CNOT, Ry, Rz}.
pub fn decompose_block(u: &UnitaryMatrix) -> Result<Circuit> {
    match u.dim() {
        2 => Circuit::with_gates(1, zyz_gates(u, 0)?),
        4 => synthesize_two_qubit(u),
        d => Err(Error::Decomposition(format!(
            "no decomposition for dimension {d}"
        ))),
    }
}

/// Remove adjacent identical CNOT pairs until none remain.
pub fn cancel_adjacent_cnots(c: &Circuit) -> Result<Circuit> {
    let mut gates: Vec<Gate> = Vec::with_capacity(c.gates().len());
    for g in c.gates() {
        if g.kind == GateKind::Cnot {
            if let Some(last) = gates.last() {
                if last.kind == GateKind::Cnot && last.qubits == g.qubits {
                    gates.pop();
                    continue;
                }
            }
        }
        gates.push(g.clone());
    }
    Circuit::with_gates(c.n_qubits(), gates)
}

/// Secure qubits of an encryption circuit: the qubits its Ry gates act on.
pub fn secure_qubits_of(enc_circuit: &Circuit) -> Vec<usize> {
    let mut out: Vec<usize> = enc_circuit
        .gates()
        .iter()
        .filter(|g| g.kind == GateKind::Ry)
        .map(|g| g.qubits[0])
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Full obfuscation pipeline over the merged circuit E·D: dummy insertion,
/// partition, per-block resynthesis, CNOT-pair cleanup. Barriers stay in the
/// output between segments. The result is unitarily equal to the input
/// composition up to global phase.
pub fn obfuscate(
    data_circuit: &Circuit,
    enc_circuit: &Circuit,
    seed: u64,
    opts: CompileOptions,
) -> Result<Circuit> {
    let n = enc_circuit.n_qubits();
    if data_circuit.n_qubits() > n {
        return Err(Error::QubitMismatch {
            left: data_circuit.n_qubits(),
            right: n,
        });
    }
    let merged = Circuit::compose(&data_circuit.widened(n)?, enc_circuit)?;
    let secure = secure_qubits_of(enc_circuit);
    if secure.is_empty() {
        return Err(Error::Pass(
            "encryption circuit has no secure-qubit rotations".into(),
        ));
    }
    let dressed = insert_dummies(&merged, &secure, seed, opts.dummy_pairs)?;
    let segments = partition(&dressed, opts.block_size)?;

    let mut out = Circuit::new(n)?;
    for (i, segment) in segments.iter().enumerate() {
        if i > 0 {
            out.push(Gate::barrier(n))?;
        }
        for block in segment {
            let resynth = decompose_block(&block.unitary()?)?;
            for g in resynth.gates() {
                let qubits: Vec<usize> = g.qubits.iter().map(|&q| block.qubits[q]).collect();
                out.push(Gate::new(g.kind, qubits, g.angle, g.param_id)?)?;
            }
        }
    }
    cancel_adjacent_cnots(&out)
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::sim::UnitaryMatrix;
    use num_complex::Complex64;
    use rand::prelude::*;
    use rand_distr::StandardNormal;

    /// Haar-ish random unitary via Gram-Schmidt on a complex Gaussian.
    pub(crate) fn random_unitary(rng: &mut impl Rng, dim: usize) -> UnitaryMatrix {
        let mut cols: Vec<Vec<Complex64>> = (0..dim)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                    })
                    .collect()
            })
            .collect();
        for i in 0..dim {
            for j in 0..i {
                let dot: Complex64 = (0..dim).map(|k| cols[j][k].conj() * cols[i][k]).sum();
                for k in 0..dim {
                    let s = dot * cols[j][k];
                    cols[i][k] -= s;
                }
            }
            let norm = cols[i].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            for k in 0..dim {
                cols[i][k] /= norm;
            }
        }
        let mut m = UnitaryMatrix::identity(dim);
        for c in 0..dim {
            for r in 0..dim {
                m.set(r, c, cols[c][r]);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthesize_encoding;
    use crate::pricircuit::{
        build_encryption_circuit, default_perm_gates, encrypt_reference, generate_key,
    };
    use crate::sim::{simulate, StateVector};

    fn random_amps(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..1usize << n).map(|_| rng.gen::<f64>()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        v
    }

    #[test]
    fn dummy_insertion_shape_and_semantics() {
        let key = generate_key(2, 1, 0, false, 3).unwrap();
        let enc = build_encryption_circuit(&key).unwrap();
        let out = insert_dummies(&enc, &[2], 9, 1).unwrap();

        // expected shape: Ry(alpha), CNOT(2, d), barrier, CNOT(2, d), Ry(delta-alpha)
        let kinds: Vec<GateKind> = out.gates().iter().map(|g| g.kind).collect();
        assert_eq!(
            kinds,
            vec![
                GateKind::Ry,
                GateKind::Cnot,
                GateKind::Barrier,
                GateKind::Cnot,
                GateKind::Ry
            ]
        );
        assert_eq!(out.gates()[1].qubits, out.gates()[3].qubits);
        assert_eq!(out.gates()[1].qubits[0], 2);
        assert!(out.gates()[1].qubits[1] < 2);
        let total = out.gates()[0].angle.unwrap() + out.gates()[4].angle.unwrap();
        assert!((total - key.delta[0]).abs() < 1e-12);

        let ua = unitary_of(&enc).unwrap();
        let ub = unitary_of(&out).unwrap();
        assert!(ua.max_abs_diff_up_to_phase(&ub) < 1e-10);
    }

    #[test]
    fn dummy_insertion_preserves_unitary_randomly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        for trial in 0..20u64 {
            let n = 2 + (trial % 3) as usize;
            let m = 1 + (trial % 2) as usize;
            let key = generate_key(n, m, default_perm_gates(n, m), false, trial).unwrap();
            let enc = build_encryption_circuit(&key).unwrap();
            let x = random_amps(&mut rng, n);
            let d = synthesize_encoding(&x).unwrap().widened(n + m).unwrap();
            let merged = Circuit::compose(&d, &enc).unwrap();
            let secure: Vec<usize> = (n..n + m).collect();
            let pairs = 1 + (trial % 2) as usize;
            let out = insert_dummies(&merged, &secure, trial * 7, pairs).unwrap();
            let ua = unitary_of(&merged).unwrap();
            let ub = unitary_of(&out).unwrap();
            assert!(ua.max_abs_diff_up_to_phase(&ub) < 1e-9, "trial {trial}");
        }
    }

    #[test]
    fn dummy_insertion_rejects_bad_preconditions() {
        let mut c = Circuit::new(3).unwrap();
        c.push(Gate::ry(2, 1.0)).unwrap();
        c.push(Gate::ry(2, 0.5)).unwrap();
        assert!(insert_dummies(&c, &[2], 0, 1).is_err()); // two Ry on secure qubit

        let mut c = Circuit::new(3).unwrap();
        c.push(Gate::h(2)).unwrap();
        assert!(insert_dummies(&c, &[2], 0, 1).is_err()); // no Ry at all
    }

    #[test]
    fn partition_groups_connected_gates() {
        // single-qubit gates only: one block per touched qubit
        let c = Circuit::with_gates(3, vec![Gate::ry(0, 0.1), Gate::h(1), Gate::rz(2, 0.2)])
            .unwrap();
        let segs = partition(&c, 2).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 3);

        // connectivity pulls everything into one 2-qubit block
        let c = Circuit::with_gates(
            2,
            vec![Gate::ry(0, 0.1), Gate::cnot(0, 1).unwrap(), Gate::ry(1, 0.2)],
        )
        .unwrap();
        let segs = partition(&c, 2).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 1);
        assert_eq!(segs[0][0].qubits, vec![0, 1]);
        assert_eq!(segs[0][0].gates.len(), 3);
    }

    #[test]
    fn partition_respects_barriers_and_preserves_unitary() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(73);
        for _ in 0..30 {
            let n = rng.gen_range(2..=4);
            let mut c = Circuit::new(n).unwrap();
            for _ in 0..25 {
                match rng.gen_range(0..4) {
                    0 => c.push(Gate::ry(rng.gen_range(0..n), rng.gen_range(-2.0..2.0))),
                    1 => c.push(Gate::rz(rng.gen_range(0..n), rng.gen_range(-2.0..2.0))),
                    2 => {
                        let a = rng.gen_range(0..n);
                        let b = (a + rng.gen_range(1..n)) % n;
                        c.push(Gate::cnot(a, b).unwrap())
                    }
                    _ => c.push(Gate::barrier(n)),
                }
                .unwrap();
            }
            let segs = partition(&c, 2).unwrap();
            // rebuild: concatenate blocks segment by segment
            let mut rebuilt = Circuit::new(n).unwrap();
            for seg in &segs {
                for block in seg {
                    for g in &block.gates {
                        rebuilt.push(g.clone()).unwrap();
                    }
                    // every gate stays inside the block's qubit set
                    for g in &block.gates {
                        assert!(g.qubits.iter().all(|q| block.qubits.contains(q)));
                    }
                    assert!(block.qubits.len() <= 2);
                }
            }
            let ua = unitary_of(&c).unwrap();
            let ub = unitary_of(&rebuilt).unwrap();
            assert!(ua.max_abs_diff(&ub) < 1e-9);
        }
    }

    #[test]
    fn block_unitary_matches_direct_simulation() {
        let block = Block {
            qubits: vec![1, 3],
            gates: vec![
                Gate::ry(1, 0.7),
                Gate::cnot(3, 1).unwrap(),
                Gate::rz(3, -0.2),
            ],
        };
        let u = block.unitary().unwrap();
        // same gates mapped onto a fresh 2-qubit register (1 -> 0, 3 -> 1)
        let direct = unitary_of(
            &Circuit::with_gates(
                2,
                vec![
                    Gate::ry(0, 0.7),
                    Gate::cnot(1, 0).unwrap(),
                    Gate::rz(1, -0.2),
                ],
            )
            .unwrap(),
        )
        .unwrap();
        assert!(u.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn cancel_pass_removes_adjacent_pairs_only() {
        let c = Circuit::with_gates(
            2,
            vec![
                Gate::cnot(0, 1).unwrap(),
                Gate::cnot(0, 1).unwrap(),
                Gate::cnot(1, 0).unwrap(),
                Gate::ry(0, 0.3),
                Gate::cnot(1, 0).unwrap(),
            ],
        )
        .unwrap();
        let out = cancel_adjacent_cnots(&c).unwrap();
        assert_eq!(out.gates().len(), 3);
        assert!(unitary_of(&c)
            .unwrap()
            .max_abs_diff(&unitary_of(&out).unwrap())
            < 1e-12);
        // cascading cancellation
        let c = Circuit::with_gates(
            2,
            vec![
                Gate::cnot(0, 1).unwrap(),
                Gate::cnot(1, 0).unwrap(),
                Gate::cnot(1, 0).unwrap(),
                Gate::cnot(0, 1).unwrap(),
            ],
        )
        .unwrap();
        assert!(cancel_adjacent_cnots(&c).unwrap().is_empty());
    }

    fn obfuscation_predicates(out: &Circuit, secure: &[usize]) {
        for &s in secure {
            let two_qubit_touches = out
                .gates()
                .iter()
                .filter(|g| g.kind.is_two_qubit() && g.qubits.contains(&s))
                .count();
            assert!(two_qubit_touches >= 2, "secure qubit {s} underdressed");
        }
        for pair in out.gates().windows(2) {
            assert!(
                !(pair[0].kind == GateKind::Cnot
                    && pair[1].kind == GateKind::Cnot
                    && pair[0].qubits == pair[1].qubits),
                "adjacent canceling CNOT pair survived"
            );
        }
    }

    #[test]
    fn obfuscate_preserves_semantics_100_runs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for trial in 0..100u64 {
            let n = 2 + (trial % 3) as usize; // N <= 4
            let m = 1 + (trial % 2) as usize; // M <= 2
            let key = generate_key(n, m, default_perm_gates(n, m), false, trial).unwrap();
            let enc = build_encryption_circuit(&key).unwrap();
            let x = random_amps(&mut rng, n);
            let d = synthesize_encoding(&x).unwrap();
            let out = obfuscate(&d, &enc, trial * 13 + 1, CompileOptions::default()).unwrap();

            let merged = Circuit::compose(&d.widened(n + m).unwrap(), &enc).unwrap();
            let ua = unitary_of(&merged).unwrap();
            let ub = unitary_of(&out).unwrap();
            let err = ua.max_abs_diff_up_to_phase(&ub);
            assert!(err < 1e-8, "trial {trial}: residual {err}");

            let secure: Vec<usize> = (n..n + m).collect();
            obfuscation_predicates(&out, &secure);

            // end-to-end: obfuscated circuit still encrypts correctly
            let s = simulate(&out, &StateVector::zero(n + m)).unwrap();
            let reference = encrypt_reference(&x, &key).unwrap();
            // compare modulo global phase via the largest reference entry
            let pivot = reference
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .unwrap()
                .0;
            let phase = s.amps()[pivot] / reference[pivot];
            for (a, r) in s.amps().iter().zip(&reference) {
                assert!((a - phase * r).norm() < 1e-8, "trial {trial}");
            }
        }
    }

    #[test]
    fn obfuscate_differs_across_seeds_with_same_unitary() {
        let key = generate_key(2, 1, 6, false, 5).unwrap();
        let enc = build_encryption_circuit(&key).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(79);
        let x = random_amps(&mut rng, 2);
        let d = synthesize_encoding(&x).unwrap();
        let a = obfuscate(&d, &enc, 1, CompileOptions::default()).unwrap();
        let b = obfuscate(&d, &enc, 2, CompileOptions::default()).unwrap();
        assert_ne!(a.serialize(), b.serialize());
        let ua = unitary_of(&a).unwrap();
        let ub = unitary_of(&b).unwrap();
        assert!(ua.max_abs_diff_up_to_phase(&ub) < 1e-8);
    }

    #[test]
    fn obfuscate_trivial_data_circuit_still_dresses_secure_qubit() {
        let key = generate_key(2, 1, 4, false, 21).unwrap();
        let enc = build_encryption_circuit(&key).unwrap();
        let d = Circuit::new(2).unwrap();
        let out = obfuscate(&d, &enc, 3, CompileOptions::default()).unwrap();
        obfuscation_predicates(&out, &[2]);
    }

    #[test]
    fn obfuscate_is_deterministic() {
        let key = generate_key(3, 1, 8, false, 2).unwrap();
        let enc = build_encryption_circuit(&key).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(83);
        let x = random_amps(&mut rng, 3);
        let d = synthesize_encoding(&x).unwrap();
        let a = obfuscate(&d, &enc, 17, CompileOptions::default()).unwrap();
        let b = obfuscate(&d, &enc, 17, CompileOptions::default()).unwrap();
        assert_eq!(a.serialize(), b.serialize());
    }
}
