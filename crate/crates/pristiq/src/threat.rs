//! Threat evaluation: image-recovery quality for an eavesdropper who sees
//! only encrypted amplitude vectors, and classification accuracy for models
//! trained with and without the key.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::pricircuit::{default_perm_gates, encrypt_dataset, generate_key};
use crate::qnn::{build_ansatz, evaluate_accuracy, train, vanilla_choices, TrainConfig};
use crate::search::{search, SearchConfig};
use crate::sim::{marginal_probabilities, StateVector};
use serde::{Deserialize, Serialize};

/// Upper cap applied when the reconstruction is exact (zero mean-square
/// error would otherwise send the ratio to infinity).
pub const PSNR_CAP_DB: f64 = 100.0;

/// Peak signal-to-noise ratio in dB between a reference signal and a
/// candidate reconstruction. The peak is the largest reference value; an
/// all-zero reference has no meaningful peak and is rejected.
pub fn psnr(reference: &[f64], candidate: &[f64]) -> Result<f64> {
    if reference.len() != candidate.len() || reference.is_empty() {
        return Err(Error::Metric(format!(
            "signal lengths {} and {} differ or are empty",
            reference.len(),
            candidate.len()
        )));
    }
    let max = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::Metric("reference signal is all zero".into()));
    }
    let mse = reference
        .iter()
        .zip(candidate)
        .map(|(r, c)| (r - c) * (r - c))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (max * max / mse).log10()).min(PSNR_CAP_DB))
}

/// Best reconstruction available without the key: the square root of the
/// probability marginal over the first `n_data_qubits` qubits. On an
/// unencrypted product state this recovers the data amplitudes exactly; the
/// key's entangling permutation scrambles it.
pub fn attacker_reconstruct(features: &[f64], n_data_qubits: usize) -> Result<Vec<f64>> {
    let state = StateVector::from_real(features)?;
    if n_data_qubits == 0 || n_data_qubits > state.n_qubits() {
        return Err(Error::Argument(format!(
            "{n_data_qubits} data qubits in a {}-qubit state",
            state.n_qubits()
        )));
    }
    let keep: Vec<usize> = (0..n_data_qubits).collect();
    Ok(marginal_probabilities(&state, &keep)?
        .into_iter()
        .map(f64::sqrt)
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_secure_qubits: usize,
    /// None = default of 2*(data+secure) permutation gates.
    pub n_perm_gates: Option<usize>,
    pub allow_x: bool,
    /// One full evaluation per key seed; spread quantifies key sensitivity.
    pub key_seeds: Vec<u64>,
    /// Layers in the key holder's classifier.
    pub n_layers: usize,
    /// Layers in the attacker's classifier (fixed small capacity: the
    /// attacker has no key and trains blind on scrambled states).
    pub attacker_layers: usize,
    pub train: TrainConfig,
    /// When set, also run architecture search on the encrypted data.
    pub searched: Option<SearchConfig>,
    /// Cap on how many test images enter the PSNR averages.
    pub max_psnr_samples: usize,
}

impl Default for ScenarioConfig {
    fn default() -> ScenarioConfig {
        ScenarioConfig {
            n_secure_qubits: 2,
            n_perm_gates: None,
            allow_x: false,
            key_seeds: vec![0, 1, 2],
            n_layers: 4,
            attacker_layers: 4,
            train: TrainConfig::default(),
            searched: None,
            max_psnr_samples: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyOutcome {
    pub key_seed: u64,
    pub key_fingerprint: String,
    /// Key holder's model on plain data.
    pub user_plain_acc: f64,
    /// The attacker's own (plain-trained) model applied to the encrypted
    /// states it intercepts.
    pub attacker_acc: f64,
    /// Stronger attacker variant: the same architecture retrained from
    /// scratch on labeled encrypted data.
    pub attacker_retrained_acc: f64,
    /// The plain-trained model applied to encrypted data.
    pub vanilla_encrypted_acc: f64,
    pub searched_acc: Option<f64>,
    /// Reconstruction quality without encryption (exact, hits the cap).
    pub plain_psnr: f64,
    /// Reconstruction quality from encrypted states.
    pub encrypted_psnr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub outcomes: Vec<KeyOutcome>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ScenarioReport {
    fn metric_columns(&self) -> Vec<(&'static str, Vec<f64>)> {
        let mut cols = vec![
            (
                "user_plain_acc",
                self.outcomes.iter().map(|o| o.user_plain_acc).collect::<Vec<_>>(),
            ),
            (
                "attacker_acc",
                self.outcomes.iter().map(|o| o.attacker_acc).collect(),
            ),
            (
                "attacker_retrained_acc",
                self.outcomes.iter().map(|o| o.attacker_retrained_acc).collect(),
            ),
            (
                "vanilla_encrypted_acc",
                self.outcomes.iter().map(|o| o.vanilla_encrypted_acc).collect(),
            ),
            (
                "plain_psnr",
                self.outcomes.iter().map(|o| o.plain_psnr).collect(),
            ),
            (
                "encrypted_psnr",
                self.outcomes.iter().map(|o| o.encrypted_psnr).collect(),
            ),
        ];
        if self.outcomes.iter().all(|o| o.searched_acc.is_some()) {
            cols.push((
                "searched_acc",
                self.outcomes
                    .iter()
                    .map(|o| o.searched_acc.unwrap())
                    .collect(),
            ));
        }
        cols
    }

    /// Per-key rows, one metric per column.
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "key_seed,key_fingerprint,user_plain_acc,attacker_acc,attacker_retrained_acc,vanilla_encrypted_acc,searched_acc,plain_psnr,encrypted_psnr\n",
        );
        for o in &self.outcomes {
            let searched = o
                .searched_acc
                .map(|a| format!("{a:.6}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{},{:.4},{:.4}\n",
                o.key_seed,
                o.key_fingerprint,
                o.user_plain_acc,
                o.attacker_acc,
                o.attacker_retrained_acc,
                o.vanilla_encrypted_acc,
                searched,
                o.plain_psnr,
                o.encrypted_psnr,
            ));
        }
        out
    }

    /// Human-readable summary: mean and population spread across keys.
    pub fn table(&self) -> String {
        let mut out = format!(
            "threat evaluation over {} key(s), {} secure qubit(s)\n",
            self.outcomes.len(),
            self.config.n_secure_qubits
        );
        out.push_str(&format!("{:<24} {:>10} {:>10}\n", "metric", "mean", "std"));
        for (name, values) in self.metric_columns() {
            let (mean, std) = mean_std(&values);
            out.push_str(&format!("{name:<24} {mean:>10.4} {std:>10.4}\n"));
        }
        out
    }

    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        self.metric_columns()
            .into_iter()
            .find(|(n, _)| *n == metric)
            .map(|(_, v)| mean_std(&v).0)
    }
}

/// Run the full comparison for every key seed. The PSNR reference is each
/// test sample's plain amplitude vector (unit-norm, all entries known to the
/// data owner), so an exact recovery scores the cap.
pub fn run_scenario(
    train_plain: &Dataset,
    test_plain: &Dataset,
    cfg: &ScenarioConfig,
) -> Result<ScenarioReport> {
    if cfg.key_seeds.is_empty() {
        return Err(Error::Scenario("no key seeds given".into()));
    }
    if test_plain.samples.is_empty() || train_plain.samples.is_empty() {
        return Err(Error::Scenario("empty train or test set".into()));
    }
    if train_plain.encrypted_with.is_some() || test_plain.encrypted_with.is_some() {
        return Err(Error::Scenario(
            "scenario inputs must be unencrypted; keys are generated per seed".into(),
        ));
    }
    cfg.train.validate()?;
    let n = train_plain.n_qubits;
    let m = cfg.n_secure_qubits;
    let n_perm = cfg.n_perm_gates.unwrap_or_else(|| default_perm_gates(n, m));

    // Neither plain-trained model depends on the key; train each once. The
    // attacker's own classifier is trained on the plain distribution it saw
    // before encryption was turned on.
    let mut user = build_ansatz(&vanilla_choices(cfg.n_layers), n, cfg.train.seed)?;
    train(&mut user, train_plain, None, &cfg.train)?;
    let user_plain_acc = evaluate_accuracy(&user, test_plain)?;

    let mut attacker = build_ansatz(
        &vanilla_choices(cfg.attacker_layers),
        n,
        cfg.train.seed.wrapping_add(0xa77ac),
    )?;
    let attacker_cfg = TrainConfig {
        seed: cfg.train.seed.wrapping_add(0xa77ac),
        ..cfg.train
    };
    train(&mut attacker, train_plain, None, &attacker_cfg)?;

    let psnr_count = cfg.max_psnr_samples.min(test_plain.samples.len());
    let plain_psnrs: Vec<f64> = (0..psnr_count)
        .map(|i| {
            let reference = &test_plain.samples[i].features;
            let recon = attacker_reconstruct(reference, n)?;
            psnr(reference, &recon)
        })
        .collect::<Result<_>>()?;
    let (plain_psnr, _) = mean_std(&plain_psnrs);

    let mut outcomes = Vec::with_capacity(cfg.key_seeds.len());
    for &seed in &cfg.key_seeds {
        let key = generate_key(n, m, n_perm, cfg.allow_x, seed)?;
        let enc_train = encrypt_dataset(train_plain, &key)?;
        let enc_test = encrypt_dataset(test_plain, &key)?;

        let attacker_acc = evaluate_accuracy(&attacker, &enc_test)?;

        let mut retrained = build_ansatz(
            &vanilla_choices(cfg.attacker_layers),
            n + m,
            cfg.train.seed.wrapping_add(seed).wrapping_add(1),
        )?;
        let retrained_cfg = TrainConfig {
            seed: cfg.train.seed.wrapping_add(seed),
            ..cfg.train
        };
        train(&mut retrained, &enc_train, None, &retrained_cfg)?;
        let attacker_retrained_acc = evaluate_accuracy(&retrained, &enc_test)?;

        let vanilla_encrypted_acc = evaluate_accuracy(&user, &enc_test)?;

        let searched_acc = match &cfg.searched {
            Some(scfg) => {
                let scfg = SearchConfig {
                    seed: scfg.seed.wrapping_add(seed),
                    ..scfg.clone()
                };
                Some(search(&enc_train, &enc_test, &scfg)?.best_record.accuracy)
            }
            None => None,
        };

        let enc_psnrs: Vec<f64> = (0..psnr_count)
            .map(|i| {
                let recon = attacker_reconstruct(&enc_test.samples[i].features, n)?;
                psnr(&test_plain.samples[i].features, &recon)
            })
            .collect::<Result<_>>()?;
        let (encrypted_psnr, _) = mean_std(&enc_psnrs);

        outcomes.push(KeyOutcome {
            key_seed: seed,
            key_fingerprint: key.fingerprint.clone(),
            user_plain_acc,
            attacker_acc,
            attacker_retrained_acc,
            vanilla_encrypted_acc,
            searched_acc,
            plain_psnr,
            encrypted_psnr,
        });
    }
    Ok(ScenarioReport {
        config: cfg.clone(),
        outcomes,
    })
}
