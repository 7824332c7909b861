//! Parameterized ansatz construction, exact-expectation forward passes,
//! parameter-shift gradients, and Adam training.
//!
//! Controlled-Rx rotations mix two generator frequencies, so their gradient
//! needs the four-term shift rule; plain rotations use the familiar ±π/2
//! two-term rule.

use crate::circuit::{Circuit, Gate, GateKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sim::{simulate, z_expectations, StateVector};
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

/// Size of the layer design pool (ids 0..5, id 5 = identity).
pub const N_DESIGNS: usize = 6;

/// Gate template for one layer. Returns the gates and the number of fresh
/// parameter slots consumed starting at `param_offset`.
pub fn design_gates(id: usize, n_qubits: usize, param_offset: usize) -> Result<(Vec<Gate>, usize)> {
    let n = n_qubits;
    let mut gates = Vec::new();
    let mut p = param_offset;
    let param_ry = |q: usize, p: &mut usize| {
        let g = Gate::ry(q, 0.0).with_param(*p);
        *p += 1;
        g
    };
    match id {
        0 => {
            // Ry per qubit + CNOT ring
            for q in 0..n {
                gates.push(param_ry(q, &mut p));
            }
            if n >= 2 {
                for q in 0..n {
                    gates.push(Gate::cnot(q, (q + 1) % n)?);
                }
            }
        }
        1 => {
            // Ry+Rz per qubit + CZ ring
            for q in 0..n {
                gates.push(param_ry(q, &mut p));
                gates.push(Gate::rz(q, 0.0).with_param(p));
                p += 1;
            }
            if n >= 2 {
                for q in 0..n {
                    gates.push(Gate::cz(q, (q + 1) % n)?);
                }
            }
        }
        2 => {
            // Ry per qubit + parameterized CRX ring
            for q in 0..n {
                gates.push(param_ry(q, &mut p));
            }
            if n >= 2 {
                for q in 0..n {
                    gates.push(Gate::crx(q, (q + 1) % n, 0.0)?.with_param(p));
                    p += 1;
                }
            }
        }
        3 => {
            // H + Rz per qubit + CNOT chain
            for q in 0..n {
                gates.push(Gate::h(q));
                gates.push(Gate::rz(q, 0.0).with_param(p));
                p += 1;
            }
            for q in 0..n.saturating_sub(1) {
                gates.push(Gate::cnot(q, q + 1)?);
            }
        }
        4 => {
            // Ry per qubit + full pairwise CZ
            for q in 0..n {
                gates.push(param_ry(q, &mut p));
            }
            for a in 0..n {
                for b in a + 1..n {
                    gates.push(Gate::cz(a, b)?);
                }
            }
        }
        5 => {}
        _ => {
            return Err(Error::Argument(format!(
                "design id {id} outside the pool 0..{}",
                N_DESIGNS - 1
            )))
        }
    }
    Ok((gates, p - param_offset))
}

/// Ansatz circuit with trainable angles held separately from the structure.
#[derive(Debug, Clone)]
pub struct ParamCircuit {
    pub circuit: Circuit,
    pub theta: Vec<f64>,
    pub choices: Vec<usize>,
    pub seed: u64,
}

/// Concatenate the chosen layer designs and initialize theta uniformly in
/// [-0.1, 0.1] from the seed.
pub fn build_ansatz(choices: &[usize], n_qubits: usize, seed: u64) -> Result<ParamCircuit> {
    let mut circuit = Circuit::new(n_qubits)?;
    let mut n_params = 0;
    for &id in choices {
        let (gates, used) = design_gates(id, n_qubits, n_params)?;
        for g in gates {
            circuit.push(g)?;
        }
        n_params += used;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..n_params).map(|_| rng.gen_range(-0.1..0.1)).collect();
    Ok(ParamCircuit {
        circuit,
        theta,
        choices: choices.to_vec(),
        seed,
    })
}

impl ParamCircuit {
    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    /// Concrete circuit with the current angles bound.
    pub fn bound(&self) -> Result<Circuit> {
        self.bound_with(&self.theta)
    }

    pub fn bound_with(&self, theta: &[f64]) -> Result<Circuit> {
        if theta.len() != self.theta.len() {
            return Err(Error::Argument(format!(
                "{} angles for {} parameters",
                theta.len(),
                self.theta.len()
            )));
        }
        let gates = self
            .circuit
            .gates()
            .iter()
            .map(|g| match g.param_id {
                Some(p) => Gate::new(g.kind, g.qubits.clone(), Some(theta[p]), Some(p)),
                None => Ok(g.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Circuit::with_gates(self.circuit.n_qubits(), gates)
    }
}

/// Z expectations of the first `n_classes` qubits after running the model.
pub fn forward(bound: &Circuit, state: &StateVector, n_classes: usize) -> Result<Vec<f64>> {
    if n_classes == 0 || n_classes > bound.n_qubits() {
        return Err(Error::Argument(format!(
            "{n_classes} classes on a {}-qubit model",
            bound.n_qubits()
        )));
    }
    let out = simulate(bound, state)?;
    Ok(z_expectations(&out, &(0..n_classes).collect::<Vec<_>>()))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    -softmax(logits)[label].ln()
}

/// Loss plus its gradient w.r.t. the logits (softmax − one-hot).
pub fn loss_and_grad_logits(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = -p[label].ln();
    let grad = p
        .iter()
        .enumerate()
        .map(|(c, &pc)| pc - if c == label { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

/// One evaluation point of the shift rule: run `circuit`, scale the logits
/// by `coeff`, accumulate into parameter `param`'s gradient row.
struct ShiftTerm {
    param: usize,
    coeff: f64,
    circuit: Circuit,
}

/// Exact shift coefficients: single-frequency rotations use ±π/2 with ±1/2;
/// controlled rotations carry frequencies {1/2, 1} and need the four-term
/// rule with shifts ±π/2, ±3π/2.
fn build_shift_plan(pc: &ParamCircuit) -> Result<Vec<ShiftTerm>> {
    const CRX_A: f64 = 0.25 + 0.25 / std::f64::consts::SQRT_2;
    const CRX_B: f64 = 0.25 / std::f64::consts::SQRT_2 - 0.25;
    let mut plan = Vec::new();
    for (idx, g) in pc.circuit.gates().iter().enumerate() {
        let Some(param) = g.param_id else { continue };
        let shifts: Vec<(f64, f64)> = match g.kind {
            GateKind::Ry | GateKind::Rz | GateKind::Rx => {
                vec![(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)]
            }
            GateKind::Crx => vec![
                (FRAC_PI_2, CRX_A),
                (-FRAC_PI_2, -CRX_A),
                (3.0 * FRAC_PI_2, CRX_B),
                (-3.0 * FRAC_PI_2, -CRX_B),
            ],
            _ => {
                return Err(Error::Argument(format!(
                    "parameter on non-rotation gate {}",
                    g.kind.name()
                )))
            }
        };
        for (shift, coeff) in shifts {
            let mut gates: Vec<Gate> = pc
                .circuit
                .gates()
                .iter()
                .map(|h| match h.param_id {
                    Some(p) => Gate::new(h.kind, h.qubits.clone(), Some(pc.theta[p]), Some(p)),
                    None => Ok(h.clone()),
                })
                .collect::<Result<Vec<_>>>()?;
            gates[idx] = Gate::new(
                g.kind,
                g.qubits.clone(),
                Some(pc.theta[param] + shift),
                Some(param),
            )?;
            plan.push(ShiftTerm {
                param,
                coeff,
                circuit: Circuit::with_gates(pc.circuit.n_qubits(), gates)?,
            });
        }
    }
    Ok(plan)
}

/// d(logit_c)/d(theta_j) for one input state, exact via parameter shifts.
pub fn logit_jacobian(
    pc: &ParamCircuit,
    state: &StateVector,
    n_classes: usize,
) -> Result<Vec<Vec<f64>>> {
    let plan = build_shift_plan(pc)?;
    let mut jac = vec![vec![0.0; n_classes]; pc.n_params()];
    for term in &plan {
        let logits = forward(&term.circuit, state, n_classes)?;
        for c in 0..n_classes {
            jac[term.param][c] += term.coeff * logits[c];
        }
    }
    Ok(jac)
}

/// Mean loss and mean loss-gradient over a batch of samples.
pub fn parameter_shift_gradients(
    pc: &ParamCircuit,
    samples: &[(Vec<f64>, usize)],
    n_classes: usize,
) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let plan = build_shift_plan(pc)?;
    let base = pc.bound()?;
    let per_sample: Vec<Result<(f64, Vec<f64>)>> = samples
        .par_iter()
        .map(|(features, label)| {
            let state = StateVector::from_real(features)?;
            let logits = forward(&base, &state, n_classes)?;
            let (loss, grad_logits) = loss_and_grad_logits(&logits, *label);
            let mut grad = vec![0.0; pc.n_params()];
            for term in &plan {
                let shifted = forward(&term.circuit, &state, n_classes)?;
                let mut dot = 0.0;
                for c in 0..n_classes {
                    dot += grad_logits[c] * shifted[c];
                }
                grad[term.param] += term.coeff * dot;
            }
            Ok((loss, grad))
        })
        .collect();

    let mut loss_sum = 0.0;
    let mut grad_sum = vec![0.0; pc.n_params()];
    for r in per_sample {
        let (l, g) = r?;
        loss_sum += l;
        for (a, b) in grad_sum.iter_mut().zip(g) {
            *a += b;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    for g in &mut grad_sum {
        *g *= inv;
    }
    Ok((loss_sum * inv, grad_sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 64,
            epochs: 20,
            learning_rate: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.epochs == 0
            || self.learning_rate < 0.0
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || self.adam_eps <= 0.0
        {
            return Err(Error::Config("invalid training hyperparameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,train_acc,test_acc\n");
    for h in history {
        let test = h
            .test_acc
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.9e},{:.6},{}\n",
            h.epoch, h.loss, h.train_acc, test
        ));
    }
    out
}

/// Adam training loop with seeded shuffling; fully deterministic.
pub fn train(
    pc: &mut ParamCircuit,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if train_ds.samples.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let n_classes = train_ds.n_classes;
    if n_classes > pc.circuit.n_qubits() {
        return Err(Error::Argument(format!(
            "{n_classes} classes exceed the {}-qubit model",
            pc.circuit.n_qubits()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut m = vec![0.0; pc.n_params()];
    let mut v = vec![0.0; pc.n_params()];
    let mut t = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);

    let mut order: Vec<usize> = (0..train_ds.samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<f64>, usize)> = chunk
                .iter()
                .map(|&i| {
                    let s = &train_ds.samples[i];
                    (s.features.clone(), s.label)
                })
                .collect();
            let (loss, grad) = parameter_shift_gradients(pc, &batch, n_classes)?;
            epoch_loss += loss;
            batches += 1;
            t += 1;
            let b1t = 1.0 - cfg.adam_beta1.powi(t as i32);
            let b2t = 1.0 - cfg.adam_beta2.powi(t as i32);
            for j in 0..pc.n_params() {
                m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * grad[j];
                v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * grad[j] * grad[j];
                let mhat = m[j] / b1t;
                let vhat = v[j] / b2t;
                pc.theta[j] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
            }
        }
        history.push(EpochStats {
            epoch,
            loss: epoch_loss / batches as f64,
            train_acc: evaluate_accuracy(pc, train_ds)?,
            test_acc: test_ds.map(|d| evaluate_accuracy(pc, d)).transpose()?,
        });
    }
    Ok(history)
}

/// Fraction of samples whose argmax logit matches the label; ties go to the
/// lowest class index. The model is widened when the dataset register is
/// larger (encrypted data under an unencrypted model).
pub fn evaluate_accuracy(pc: &ParamCircuit, ds: &Dataset) -> Result<f64> {
    if ds.samples.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    let bound = if ds.n_qubits > pc.circuit.n_qubits() {
        pc.bound()?.widened(ds.n_qubits)?
    } else {
        pc.bound()?
    };
    let n_classes = ds.n_classes;
    let hits: Vec<Result<bool>> = ds
        .samples
        .par_iter()
        .map(|s| {
            let state = StateVector::from_real(&s.features)?;
            let logits = forward(&bound, &state, n_classes)?;
            let mut best = 0;
            for c in 1..n_classes {
                if logits[c] > logits[best] {
                    best = c;
                }
            }
            Ok(best == s.label)
        })
        .collect();
    let mut correct = 0usize;
    for h in hits {
        if h? {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.samples.len() as f64)
}

/// On-disk model: structure, seed, angles, and the exact training config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub choices: Vec<usize>,
    pub n_qubits: usize,
    pub seed: u64,
    pub theta: Vec<f64>,
    pub config: Option<TrainConfig>,
}

impl ModelFile {
    pub fn from_model(pc: &ParamCircuit, config: Option<TrainConfig>) -> ModelFile {
        ModelFile {
            choices: pc.choices.clone(),
            n_qubits: pc.circuit.n_qubits(),
            seed: pc.seed,
            theta: pc.theta.clone(),
            config,
        }
    }

    pub fn to_model(&self) -> Result<ParamCircuit> {
        let mut pc = build_ansatz(&self.choices, self.n_qubits, self.seed)?;
        if self.theta.len() != pc.theta.len() {
            return Err(Error::Format(format!(
                "model file has {} angles, structure needs {}",
                self.theta.len(),
                pc.theta.len()
            )));
        }
        pc.theta = self.theta.clone();
        Ok(pc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// A fixed fallback architecture: 4 layers of design 0.
pub fn vanilla_choices(n_layers: usize) -> Vec<usize> {
    vec![0; n_layers]
}
