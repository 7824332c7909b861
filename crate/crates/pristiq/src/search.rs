//! Policy-gradient architecture search: a small recurrent controller samples
//! layer designs, each candidate is trained and scored, and the controller is
//! nudged toward high-accuracy, low-cost architectures.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::qnn::{build_ansatz, evaluate_accuracy, train, ParamCircuit, TrainConfig, N_DESIGNS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Recurrent stochastic policy over layer-design sequences.
///
/// One tanh recurrence per position; the previous draw (or a start token)
/// feeds the next step through a learned embedding, and a linear head
/// produces a softmax over the design pool. All parameters live in one flat
/// vector so the REINFORCE update and its finite-difference oracle can treat
/// them uniformly.
#[derive(Debug, Clone)]
pub struct ControllerPolicy {
    pub hidden: usize,
    pub params: Vec<f64>,
}

const START_TOKEN: usize = N_DESIGNS;

impl ControllerPolicy {
    fn off_wh(&self) -> usize {
        0
    }
    fn off_bh(&self) -> usize {
        self.hidden * self.hidden
    }
    fn off_embed(&self) -> usize {
        self.off_bh() + self.hidden
    }
    fn off_wo(&self) -> usize {
        self.off_embed() + (N_DESIGNS + 1) * self.hidden
    }
    fn off_bo(&self) -> usize {
        self.off_wo() + N_DESIGNS * self.hidden
    }
    pub fn n_params(&self) -> usize {
        self.off_bo() + N_DESIGNS
    }

    pub fn new(hidden: usize, seed: u64) -> ControllerPolicy {
        let mut pol = ControllerPolicy {
            hidden,
            params: Vec::new(),
        };
        let n = pol.n_params();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pol.params = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
        pol
    }

    /// One recurrence step: new hidden state and next-design probabilities.
    fn step(&self, h_prev: &[f64], token: usize) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let p = &self.params;
        let mut h = vec![0.0; hd];
        for i in 0..hd {
            let mut pre = p[self.off_bh() + i] + p[self.off_embed() + token * hd + i];
            for (j, &hp) in h_prev.iter().enumerate() {
                pre += p[self.off_wh() + i * hd + j] * hp;
            }
            h[i] = pre.tanh();
        }
        let mut logits = vec![0.0; N_DESIGNS];
        for (k, l) in logits.iter_mut().enumerate() {
            *l = p[self.off_bo() + k];
            for (i, &hi) in h.iter().enumerate() {
                *l += p[self.off_wo() + k * hd + i] * hi;
            }
        }
        (h, crate::qnn::softmax(&logits))
    }

    /// Probabilities for the next draw after an already-chosen prefix.
    pub fn step_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut h = vec![0.0; self.hidden];
        let mut token = START_TOKEN;
        for &c in prefix {
            if c >= N_DESIGNS {
                return Err(Error::Argument(format!("design id {c} out of range")));
            }
            let (hn, _) = self.step(&h, token);
            h = hn;
            token = c;
        }
        let (_, probs) = self.step(&h, token);
        Ok(probs)
    }

    /// Draw a sequence of `n_layers` design ids.
    pub fn sample_architecture(&self, n_layers: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut h = vec![0.0; self.hidden];
        let mut token = START_TOKEN;
        let mut out = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (hn, probs) = self.step(&h, token);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = N_DESIGNS - 1;
            for (k, &pk) in probs.iter().enumerate() {
                acc += pk;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            out.push(pick);
            h = hn;
            token = pick;
        }
        out
    }

    /// Log-likelihood of a sequence and its gradient w.r.t. every parameter
    /// (backpropagation through time, derived by hand for the tanh cell).
    pub fn log_prob_and_grad(&self, choices: &[usize]) -> Result<(f64, Vec<f64>)> {
        let hd = self.hidden;
        let t_max = choices.len();
        // forward pass, keeping hidden states, tokens, and probabilities
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(t_max + 1);
        hs.push(vec![0.0; hd]);
        let mut tokens = Vec::with_capacity(t_max);
        let mut probs_all = Vec::with_capacity(t_max);
        let mut token = START_TOKEN;
        let mut logp = 0.0;
        for &c in choices {
            if c >= N_DESIGNS {
                return Err(Error::Argument(format!("design id {c} out of range")));
            }
            let (h, probs) = self.step(hs.last().unwrap(), token);
            logp += probs[c].ln();
            tokens.push(token);
            probs_all.push(probs);
            hs.push(h);
            token = c;
        }

        let p = &self.params;
        let mut grad = vec![0.0; self.n_params()];
        let mut dh_next = vec![0.0; hd]; // gradient flowing into h_t from step t+1
        for t in (0..t_max).rev() {
            let h = &hs[t + 1];
            let h_prev = &hs[t];
            let probs = &probs_all[t];
            // d logp / d logits_t = onehot(choice) - probs
            let mut dh = dh_next.clone();
            for k in 0..N_DESIGNS {
                let dlogit = if k == choices[t] { 1.0 } else { 0.0 } - probs[k];
                grad[self.off_bo() + k] += dlogit;
                for i in 0..hd {
                    grad[self.off_wo() + k * hd + i] += dlogit * h[i];
                    dh[i] += dlogit * p[self.off_wo() + k * hd + i];
                }
            }
            // through the tanh and the recurrence
            let mut dh_prev = vec![0.0; hd];
            for i in 0..hd {
                let dpre = dh[i] * (1.0 - h[i] * h[i]);
                grad[self.off_bh() + i] += dpre;
                grad[self.off_embed() + tokens[t] * hd + i] += dpre;
                for j in 0..hd {
                    grad[self.off_wh() + i * hd + j] += dpre * h_prev[j];
                    dh_prev[j] += dpre * p[self.off_wh() + i * hd + j];
                }
            }
            dh_next = dh_prev;
        }
        Ok((logp, grad))
    }

    /// REINFORCE ascent step: params += lr * reward * grad(log-likelihood).
    pub fn update(&mut self, choices: &[usize], reward: f64, lr: f64) -> Result<()> {
        if reward == 0.0 || lr == 0.0 {
            return Ok(());
        }
        let (_, grad) = self.log_prob_and_grad(choices)?;
        for (w, g) in self.params.iter_mut().zip(grad) {
            *w += lr * reward * g;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_layers: usize,
    pub n_episodes: usize,
    pub controller_lr: f64,
    pub complexity_weight: f64,
    pub baseline_decay: f64,
    pub hidden: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig {
            n_layers: 4,
            n_episodes: 50,
            controller_lr: 0.05,
            complexity_weight: 0.1,
            baseline_decay: 0.9,
            hidden: 32,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0
            || self.n_episodes == 0
            || self.hidden == 0
            || self.controller_lr < 0.0
            || self.complexity_weight < 0.0
            || !(0.0..1.0).contains(&self.baseline_decay)
        {
            return Err(Error::Config("invalid search hyperparameters".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub choices: Vec<usize>,
    pub accuracy: f64,
    pub complexity: usize,
    pub baseline: f64,
    pub reward: f64,
}

/// Reward: accuracy over a moving baseline, penalized by circuit size
/// relative to a fixed reference size.
pub fn compute_reward(
    accuracy: f64,
    baseline: f64,
    complexity_weight: f64,
    complexity: usize,
    complexity_base: usize,
) -> f64 {
    accuracy - baseline - complexity_weight * complexity as f64 / complexity_base.max(1) as f64
}

/// Barrier-free gate count of the ansatz an id sequence would build.
pub fn complexity_of(choices: &[usize], n_qubits: usize) -> Result<usize> {
    Ok(build_ansatz(choices, n_qubits, 0)?.circuit.metrics().gate_count)
}

pub struct SearchOutcome {
    pub best_model: ParamCircuit,
    pub best_record: EpisodeRecord,
    pub episodes: Vec<EpisodeRecord>,
}

pub fn episodes_csv(records: &[EpisodeRecord]) -> String {
    let mut out = String::from("episode,choices,accuracy,complexity,baseline,reward\n");
    for r in records {
        let choices = r
            .choices
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("-");
        out.push_str(&format!(
            "{},{},{:.6},{},{:.6},{:.6}\n",
            r.episode, choices, r.accuracy, r.complexity, r.baseline, r.reward
        ));
    }
    out
}

/// Run the full search: sample, train, score, update; keep the most accurate
/// model (smaller circuit wins ties).
pub fn search(train_ds: &Dataset, test_ds: &Dataset, cfg: &SearchConfig) -> Result<SearchOutcome> {
    cfg.validate()?;
    if train_ds.n_qubits != test_ds.n_qubits || train_ds.n_classes != test_ds.n_classes {
        return Err(Error::Config(
            "train and test sets disagree on register size or classes".into(),
        ));
    }
    if train_ds.encrypted_with != test_ds.encrypted_with {
        return Err(Error::Config(
            "train and test sets were encrypted with different keys".into(),
        ));
    }
    let n_qubits = train_ds.n_qubits;
    let complexity_base = complexity_of(&vec![0; cfg.n_layers], n_qubits)?;

    let mut policy = ControllerPolicy::new(cfg.hidden, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5ea7c4));
    let mut baseline = 0.0;
    let mut episodes = Vec::with_capacity(cfg.n_episodes);
    let mut best: Option<(ParamCircuit, EpisodeRecord)> = None;

    for episode in 1..=cfg.n_episodes {
        let choices = policy.sample_architecture(cfg.n_layers, &mut rng);
        let model_seed = cfg.seed.wrapping_add(episode as u64);
        let mut pc = build_ansatz(&choices, n_qubits, model_seed)?;
        let train_cfg = TrainConfig {
            seed: cfg.train.seed.wrapping_add(episode as u64),
            ..cfg.train
        };
        if pc.n_params() > 0 {
            train(&mut pc, train_ds, None, &train_cfg)?;
        }
        let accuracy = evaluate_accuracy(&pc, test_ds)?;
        let complexity = pc.circuit.metrics().gate_count;
        if episode == 1 {
            baseline = accuracy;
        }
        let reward = compute_reward(
            accuracy,
            baseline,
            cfg.complexity_weight,
            complexity,
            complexity_base,
        );
        policy.update(&choices, reward, cfg.controller_lr)?;
        baseline = cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * accuracy;

        let record = EpisodeRecord {
            episode,
            choices,
            accuracy,
            complexity,
            baseline,
            reward,
        };
        let better = match &best {
            None => true,
            Some((_, b)) => {
                accuracy > b.accuracy || (accuracy == b.accuracy && complexity < b.complexity)
            }
        };
        if better {
            best = Some((pc, record.clone()));
        }
        episodes.push(record);
    }
    let (best_model, best_record) = best.unwrap();
    Ok(SearchOutcome {
        best_model,
        best_record,
        episodes,
    })
}
