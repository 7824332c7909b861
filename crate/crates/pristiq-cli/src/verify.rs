//! Built-in invariant suites: quick seeded self-checks over the core
//! numerical properties, printing one pass/fail line per suite.

use pristiq::compiler::{cnot_count, obfuscate, synthesize_two_qubit, CompileOptions};
use pristiq::data::synthesize_encoding;
use pristiq::pricircuit::{
    build_encryption_circuit, default_perm_gates, encrypt_reference, generate_key,
};
use pristiq::qnn::{build_ansatz, cross_entropy, forward, parameter_shift_gradients, N_DESIGNS};
use pristiq::sim::{simulate, unitary_of, StateVector, UnitaryMatrix};
use pristiq::threat::{attacker_reconstruct, psnr, PSNR_CAP_DB};
use pristiq::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_amps(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..1usize << n).map(|_| rng.gen::<f64>()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

fn suite_encryption(rng: &mut ChaCha8Rng) -> Result<()> {
    for _ in 0..20 {
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(1..=2);
        let key = generate_key(n, m, default_perm_gates(n, m), rng.gen(), rng.gen())?;
        let x = random_amps(rng, n);
        let reference = encrypt_reference(&x, &key)?;
        let circuit = pristiq::Circuit::compose(
            &synthesize_encoding(&x)?.widened(n + m)?,
            &build_encryption_circuit(&key)?,
        )?;
        let state = simulate(&circuit, &StateVector::zero(n + m))?;
        for (i, r) in reference.iter().enumerate() {
            let a = state.amps()[i];
            if (a.re - r).abs() > 1e-9 || a.im.abs() > 1e-9 {
                return Err(Error::Scenario(format!(
                    "circuit path deviates from reference at index {i}"
                )));
            }
        }
    }
    Ok(())
}

fn suite_decomposition(rng: &mut ChaCha8Rng) -> Result<()> {
    for _ in 0..20 {
        // random 4x4 unitary via Gram-Schmidt on Gaussian-ish columns
        let mut u = UnitaryMatrix::identity(4);
        for c in 0..4 {
            let mut col: Vec<num_complex::Complex64> = (0..4)
                .map(|_| {
                    num_complex::Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                })
                .collect();
            for prev in 0..c {
                let dot: num_complex::Complex64 = (0..4)
                    .map(|r| u.get(r, prev).conj() * col[r])
                    .sum();
                for r in 0..4 {
                    let s = u.get(r, prev);
                    col[r] -= dot * s;
                }
            }
            let norm: f64 = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for r in 0..4 {
                u.set(r, c, col[r] / norm);
            }
        }
        let circuit = synthesize_two_qubit(&u)?;
        let rebuilt = unitary_of(&circuit)?;
        if rebuilt.max_abs_diff_up_to_phase(&u) > 1e-8 {
            return Err(Error::Scenario("round-trip residual above 1e-8".into()));
        }
        if cnot_count(&circuit) > 3 {
            return Err(Error::Scenario("more than 3 entangling gates".into()));
        }
    }
    Ok(())
}

fn suite_obfuscation(rng: &mut ChaCha8Rng) -> Result<()> {
    for _ in 0..5 {
        let n = rng.gen_range(2..=3);
        let m = rng.gen_range(1..=2);
        let key = generate_key(n, m, default_perm_gates(n, m), false, rng.gen())?;
        let x = random_amps(rng, n);
        let data = synthesize_encoding(&x)?;
        let enc = build_encryption_circuit(&key)?;
        let merged = obfuscate(&data, &enc, rng.gen(), CompileOptions::default())?;
        let direct = unitary_of(&pristiq::Circuit::compose(&data.widened(n + m)?, &enc)?)?;
        let obf = unitary_of(&merged)?;
        if obf.max_abs_diff_up_to_phase(&direct) > 1e-8 {
            return Err(Error::Scenario("obfuscation changed the unitary".into()));
        }
    }
    Ok(())
}

fn suite_gradients(rng: &mut ChaCha8Rng) -> Result<()> {
    for _ in 0..3 {
        let n = rng.gen_range(2..=3);
        let choices: Vec<usize> = (0..2).map(|_| rng.gen_range(0..N_DESIGNS)).collect();
        let mut pc = build_ansatz(&choices, n, rng.gen())?;
        if pc.n_params() == 0 {
            continue;
        }
        for t in &mut pc.theta {
            *t = rng.gen_range(-1.0..1.0);
        }
        let batch: Vec<(Vec<f64>, usize)> = (0..2)
            .map(|_| (random_amps(rng, n), rng.gen_range(0..2)))
            .collect();
        let (_, grad) = parameter_shift_gradients(&pc, &batch, 2)?;
        let h = 1e-5;
        for j in 0..pc.n_params() {
            let mut plus = pc.theta.clone();
            plus[j] += h;
            let mut minus = pc.theta.clone();
            minus[j] -= h;
            let loss = |theta: &[f64]| -> Result<f64> {
                let bound = pc.bound_with(theta)?;
                let mut acc = 0.0;
                for (f, l) in &batch {
                    acc += cross_entropy(&forward(&bound, &StateVector::from_real(f)?, 2)?, *l);
                }
                Ok(acc / batch.len() as f64)
            };
            let fd = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
            if (fd - grad[j]).abs() > 1e-6 {
                return Err(Error::Scenario(format!(
                    "gradient mismatch at parameter {j}: {fd} vs {}",
                    grad[j]
                )));
            }
        }
    }
    Ok(())
}

fn suite_reconstruction(rng: &mut ChaCha8Rng) -> Result<()> {
    let x = random_amps(rng, 3);
    if psnr(&x, &attacker_reconstruct(&x, 3)?)? != PSNR_CAP_DB {
        return Err(Error::Scenario("exact reconstruction missed the cap".into()));
    }
    let key = generate_key(3, 2, default_perm_gates(3, 2), false, rng.gen())?;
    let enc = encrypt_reference(&x, &key)?;
    let degraded = psnr(&x, &attacker_reconstruct(&enc, 3)?)?;
    if degraded >= PSNR_CAP_DB {
        return Err(Error::Scenario("encryption did not degrade PSNR".into()));
    }
    Ok(())
}

pub fn run(seed: u64) -> Result<()> {
    let suites: &[(&str, fn(&mut ChaCha8Rng) -> Result<()>)] = &[
        ("encryption dual-path", suite_encryption),
        ("two-qubit decomposition", suite_decomposition),
        ("obfuscation semantics", suite_obfuscation),
        ("parameter-shift gradients", suite_gradients),
        ("reconstruction metric", suite_reconstruction),
    ];
    let mut failed = 0;
    for (i, (name, f)) in suites.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        match f(&mut rng) {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Error::Scenario(format!("{failed} invariant suite(s) failed")));
    }
    println!("all invariant suites passed");
    Ok(())
}
