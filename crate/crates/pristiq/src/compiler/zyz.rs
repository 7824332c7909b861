//! Single-qubit Euler decomposition into Rz·Ry·Rz.

use crate::circuit::Gate;
use crate::error::{Error, Result};
use crate::sim::UnitaryMatrix;
use crate::tolerance::UNITARY_INPUT_TOL;
use num_complex::Complex64;

/// Angle below which an emitted rotation is dropped entirely.
pub(crate) const ELIDE_TOL: f64 = 1e-11;

/// Euler angles (alpha, beta, gamma) with U ≅ Rz(alpha)·Ry(beta)·Rz(gamma)
/// up to global phase.
pub fn zyz_angles(u: &UnitaryMatrix) -> Result<(f64, f64, f64)> {
    if u.dim() != 2 {
        return Err(Error::Decomposition(format!(
            "zyz expects a 2x2 matrix, got {}x{}",
            u.dim(),
            u.dim()
        )));
    }
    if u.unitarity_defect() > UNITARY_INPUT_TOL {
        return Err(Error::Decomposition(format!(
            "input is not unitary (defect {})",
            u.unitarity_defect()
        )));
    }
    let det = u.get(0, 0) * u.get(1, 1) - u.get(0, 1) * u.get(1, 0);
    let root = Complex64::from_polar(det.norm().sqrt(), det.arg() / 2.0);
    let v00 = u.get(0, 0) / root;
    let v10 = u.get(1, 0) / root;
    let v11 = u.get(1, 1) / root;

    let beta = 2.0 * v10.norm().atan2(v00.norm());
    if v10.norm() < 1e-13 {
        // diagonal: only alpha+gamma matters
        return Ok((2.0 * v11.arg(), 0.0, 0.0));
    }
    if v00.norm() < 1e-13 {
        // anti-diagonal: only alpha-gamma matters
        return Ok((2.0 * v10.arg(), beta, 0.0));
    }
    let alpha = v11.arg() + v10.arg();
    let gamma = v11.arg() - v10.arg();
    Ok((alpha, beta, gamma))
}

/// Gate list (time order) realizing U up to global phase; near-zero
/// rotations are elided.
pub fn zyz_gates(u: &UnitaryMatrix, qubit: usize) -> Result<Vec<Gate>> {
    let (alpha, beta, gamma) = zyz_angles(u)?;
    let mut gates = Vec::new();
    for (kind, angle) in [("rz", gamma), ("ry", beta), ("rz", alpha)] {
        let g = match kind {
            "rz" => Gate::rz(qubit, angle),
            _ => Gate::ry(qubit, angle),
        };
        if g.angle.unwrap().abs() > ELIDE_TOL {
            gates.push(g);
        }
    }
    Ok(gates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use crate::sim::unitary_of;
    use crate::compiler::testutil::random_unitary;
    use num_complex::Complex64;
    use rand::prelude::*;

    fn reconstruct(gates: &[Gate]) -> UnitaryMatrix {
        let c = Circuit::with_gates(1, gates.to_vec()).unwrap();
        unitary_of(&c).unwrap()
    }

    #[test]
    fn identity_gives_empty_gate_list() {
        let gates = zyz_gates(&UnitaryMatrix::identity(2), 0).unwrap();
        assert!(gates.is_empty());
    }

    #[test]
    fn known_rotations_round_trip() {
        for g in [Gate::ry(0, 1.3), Gate::rz(0, -0.4), Gate::rx(0, 2.2), Gate::h(0), Gate::x(0)] {
            let u = unitary_of(&Circuit::with_gates(1, vec![g]).unwrap()).unwrap();
            let back = reconstruct(&zyz_gates(&u, 0).unwrap());
            assert!(back.max_abs_diff_up_to_phase(&u) < 1e-10);
        }
    }

    #[test]
    fn random_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(101);
        for trial in 0..500 {
            let u = random_unitary(&mut rng, 2);
            let back = reconstruct(&zyz_gates(&u, 0).unwrap());
            assert!(
                back.max_abs_diff_up_to_phase(&u) < 1e-8,
                "trial {trial}: {}",
                back.max_abs_diff_up_to_phase(&u)
            );
        }
    }

    #[test]
    fn rejects_non_unitary() {
        let mut m = UnitaryMatrix::identity(2);
        m.set(0, 0, Complex64::new(2.0, 0.0));
        assert!(zyz_angles(&m).is_err());
    }
}
