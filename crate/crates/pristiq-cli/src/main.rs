//! Command-line entry point: one verb per pipeline stage, explicit seeds,
//! and a JSON manifest written next to every output so any run can be
//! reproduced bit-identically. No subcommand touches the network.

mod manifest;
mod verify;

use clap::{Parser, Subcommand};
use pristiq::compiler::{obfuscate, CompileOptions};
use pristiq::data::{prepare_dataset, synthesize_encoding, Dataset};
use pristiq::pricircuit::{
    build_encryption_circuit, default_perm_gates, encrypt_dataset, generate_key, SecurityKey,
};
use pristiq::qnn::{
    build_ansatz, evaluate_accuracy, history_csv, train, ModelFile, TrainConfig,
};
use pristiq::search::{episodes_csv, search, SearchConfig};
use pristiq::threat::{run_scenario, ScenarioConfig};
use pristiq::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

use manifest::{warn_if_world_readable, ManifestBuilder};

#[derive(Parser)]
#[command(
    name = "pristiq",
    version,
    about = "Encrypted amplitude encoding, boundary-obfuscating compilation, and security-aware QNN workflows",
    after_help = "All randomness flows from explicit --seed flags. Every output gets a \
                  <output>.manifest.json sufficient to reproduce it byte-identically."
)]
struct Cli {
    /// Bound worker-thread parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a security key (secure-qubit angles + permutation circuit).
    Keygen {
        /// Data qubits the key encrypts (register size of plain datasets).
        #[arg(long)]
        data_qubits: usize,
        /// Extra secure qubits introduced by encryption.
        #[arg(long)]
        secure_qubits: usize,
        /// Permutation CNOT count (default: 2*(data+secure)).
        #[arg(long)]
        perm_gates: Option<usize>,
        /// Also draw random X gates into the permutation stage.
        #[arg(long)]
        allow_x: bool,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Pool IDX image/label files into an amplitude-encoded dataset cache.
    PrepareData {
        /// IDX image file (e.g. train-images-idx3-ubyte).
        #[arg(long)]
        images: PathBuf,
        /// IDX label file (e.g. train-labels-idx1-ubyte).
        #[arg(long)]
        labels: PathBuf,
        /// Comma-separated class labels to keep, e.g. "6,7". Relabeled 0..k.
        #[arg(long)]
        classes: String,
        /// Keep at most this many samples (0 = all).
        #[arg(long, default_value_t = 2000)]
        limit: usize,
        /// Pooled height; height*width must be a power of two.
        #[arg(long, default_value_t = 4)]
        height: usize,
        #[arg(long, default_value_t = 4)]
        width: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encrypt a dataset cache with a key (deterministic).
    Encrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Emit the obfuscated encoding+encryption circuit for one sample.
    Obfuscate {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Sample index within the dataset.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Dummy-gate pairs inserted per secure qubit.
        #[arg(long, default_value_t = 1)]
        dummy_pairs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a model on a dataset cache.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Optional held-out set for per-epoch accuracy.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Comma-separated layer design ids, e.g. "0,0,0,0".
        #[arg(long, default_value = "0,0,0,0,0,0,0,0")]
        arch: String,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Per-epoch loss/accuracy CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Architecture search over layer designs with a policy-gradient controller.
    Search {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 8)]
        layers: usize,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Per-episode log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a trained model on a dataset cache.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the full multi-key security scenario from a JSON config.
    Report {
        /// JSON file: {"train_dataset", "test_dataset", "scenario": {...}}.
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        output_dir: PathBuf,
    },
    /// Run the built-in invariant suites (quick self-test).
    Verify {
        #[arg(long)]
        seed: u64,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap renders help/version on stdout with success status
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            std::process::exit(1);
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| Error::Argument(format!("invalid {what} entry {p:?}")))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportSpec {
    train_dataset: PathBuf,
    test_dataset: PathBuf,
    scenario: ScenarioConfig,
}

#[derive(Debug, Serialize)]
struct EvalResult {
    model: PathBuf,
    dataset: PathBuf,
    samples: usize,
    accuracy: f64,
}

fn run(cmd: Command) -> Result<()> {
    let started = Instant::now();
    match cmd {
        Command::Keygen {
            data_qubits,
            secure_qubits,
            perm_gates,
            allow_x,
            seed,
            output,
        } => {
            let n_perm =
                perm_gates.unwrap_or_else(|| default_perm_gates(data_qubits, secure_qubits));
            let key = generate_key(data_qubits, secure_qubits, n_perm, allow_x, seed)?;
            key.save(&output)?;
            warn_if_world_readable(&output);
            println!("wrote key {} (fingerprint {})", output.display(), key.fingerprint);
            ManifestBuilder::new("keygen", started)
                .seed("seed", seed)
                .config(serde_json::json!({
                    "data_qubits": data_qubits,
                    "secure_qubits": secure_qubits,
                    "perm_gates": n_perm,
                    "allow_x": allow_x,
                }))
                .artifact(&output)?
                .write(&output)
        }
        Command::PrepareData {
            images,
            labels,
            classes,
            limit,
            height,
            width,
            output,
        } => {
            let class_list: Vec<u8> = parse_list(&classes, "class")?;
            if class_list.is_empty() {
                return Err(Error::Argument("no classes given".into()));
            }
            let (ds, _) = prepare_dataset(&images, &labels, &class_list, limit, height, width)?;
            ds.save(&output)?;
            println!(
                "wrote {} samples ({} classes, {} qubits) to {}",
                ds.samples.len(),
                ds.n_classes,
                ds.n_qubits,
                output.display()
            );
            ManifestBuilder::new("prepare-data", started)
                .config(serde_json::json!({
                    "images": images, "labels": labels, "classes": class_list,
                    "limit": limit, "height": height, "width": width,
                }))
                .input(&images)?
                .input(&labels)?
                .artifact(&output)?
                .write(&output)
        }
        Command::Encrypt { key, dataset, output } => {
            let k = SecurityKey::load(&key)?;
            let ds = Dataset::load(&dataset)?;
            let enc = encrypt_dataset(&ds, &k)?;
            enc.save(&output)?;
            println!(
                "encrypted {} samples with key {} -> {}",
                enc.samples.len(),
                k.fingerprint,
                output.display()
            );
            ManifestBuilder::new("encrypt", started)
                .config(serde_json::json!({ "key": key, "dataset": dataset }))
                .input(&key)?
                .input(&dataset)?
                .artifact(&output)?
                .write(&output)
        }
        Command::Obfuscate {
            key,
            dataset,
            index,
            dummy_pairs,
            seed,
            output,
        } => {
            let k = SecurityKey::load(&key)?;
            let ds = Dataset::load(&dataset)?;
            if ds.encrypted_with.is_some() {
                return Err(Error::Argument(
                    "dataset is already encrypted; obfuscate takes plain data".into(),
                ));
            }
            let sample = ds
                .samples
                .get(index)
                .ok_or_else(|| Error::Argument(format!("sample index {index} out of range")))?;
            let data_circuit = synthesize_encoding(&sample.features)?;
            let enc_circuit = build_encryption_circuit(&k)?;
            let opts = CompileOptions {
                dummy_pairs,
                ..CompileOptions::default()
            };
            let merged = obfuscate(&data_circuit, &enc_circuit, seed, opts)?;
            std::fs::write(&output, merged.serialize())?;
            let m = merged.metrics();
            println!(
                "wrote obfuscated circuit: {} gates, depth {} -> {}",
                m.gate_count,
                m.depth,
                output.display()
            );
            ManifestBuilder::new("obfuscate", started)
                .seed("seed", seed)
                .config(serde_json::json!({
                    "key": key, "dataset": dataset, "index": index,
                    "dummy_pairs": dummy_pairs,
                }))
                .input(&key)?
                .input(&dataset)?
                .artifact(&output)?
                .write(&output)
        }
        Command::Train {
            dataset,
            test,
            arch,
            epochs,
            batch_size,
            learning_rate,
            seed,
            output,
            history,
        } => {
            let train_ds = Dataset::load(&dataset)?;
            let test_ds = test.as_ref().map(|p| Dataset::load(p)).transpose()?;
            let choices: Vec<usize> = parse_list(&arch, "architecture")?;
            let cfg = TrainConfig {
                batch_size,
                epochs,
                learning_rate,
                seed,
                ..TrainConfig::default()
            };
            let mut pc = build_ansatz(&choices, train_ds.n_qubits, seed)?;
            let hist = train(&mut pc, &train_ds, test_ds.as_ref(), &cfg)?;
            ModelFile::from_model(&pc, Some(cfg)).save(&output)?;
            let last = hist.last().expect("at least one epoch");
            println!(
                "trained {:?} ({} params): final loss {:.4}, train acc {:.4}{}",
                choices,
                pc.n_params(),
                last.loss,
                last.train_acc,
                last.test_acc
                    .map(|a| format!(", test acc {a:.4}"))
                    .unwrap_or_default()
            );
            let mut mb = ManifestBuilder::new("train", started)
                .seed("seed", seed)
                .config(serde_json::json!({
                    "dataset": dataset, "test": test, "arch": choices,
                    "train": cfg,
                }))
                .input(&dataset)?
                .artifact(&output)?;
            if let Some(hpath) = &history {
                std::fs::write(hpath, history_csv(&hist))?;
                mb = mb.artifact(hpath)?;
            }
            mb.write(&output)
        }
        Command::Search {
            dataset,
            test,
            layers,
            episodes,
            epochs,
            batch_size,
            learning_rate,
            seed,
            output,
            log,
        } => {
            let train_ds = Dataset::load(&dataset)?;
            let test_ds = Dataset::load(&test)?;
            let cfg = SearchConfig {
                n_layers: layers,
                n_episodes: episodes,
                seed,
                train: TrainConfig {
                    batch_size,
                    epochs,
                    learning_rate,
                    seed,
                    ..TrainConfig::default()
                },
                ..SearchConfig::default()
            };
            let outcome = search(&train_ds, &test_ds, &cfg)?;
            ModelFile::from_model(&outcome.best_model, Some(cfg.train)).save(&output)?;
            println!(
                "best architecture {:?}: accuracy {:.4} ({} gates) after {} episodes",
                outcome.best_record.choices,
                outcome.best_record.accuracy,
                outcome.best_record.complexity,
                episodes
            );
            let mut mb = ManifestBuilder::new("search", started)
                .seed("seed", seed)
                .config(serde_json::to_value(&cfg)?)
                .input(&dataset)?
                .input(&test)?
                .artifact(&output)?;
            if let Some(lpath) = &log {
                std::fs::write(lpath, episodes_csv(&outcome.episodes))?;
                mb = mb.artifact(lpath)?;
            }
            mb.write(&output)
        }
        Command::Evaluate {
            model,
            dataset,
            output,
        } => {
            let mf = ModelFile::load(&model)?;
            let pc = mf.to_model()?;
            let ds = Dataset::load(&dataset)?;
            let accuracy = evaluate_accuracy(&pc, &ds)?;
            let result = EvalResult {
                model: model.clone(),
                dataset: dataset.clone(),
                samples: ds.samples.len(),
                accuracy,
            };
            std::fs::write(&output, serde_json::to_string_pretty(&result)? + "\n")?;
            println!("accuracy {accuracy:.4} on {} samples", ds.samples.len());
            ManifestBuilder::new("evaluate", started)
                .config(serde_json::json!({ "model": model, "dataset": dataset }))
                .input(&model)?
                .input(&dataset)?
                .artifact(&output)?
                .write(&output)
        }
        Command::Report { config, output_dir } => {
            let spec: ReportSpec = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            let train_ds = Dataset::load(&spec.train_dataset)?;
            let test_ds = Dataset::load(&spec.test_dataset)?;
            let report = run_scenario(&train_ds, &test_ds, &spec.scenario)?;
            std::fs::create_dir_all(&output_dir)?;
            let csv_path = output_dir.join("report.csv");
            let table_path = output_dir.join("report.txt");
            let json_path = output_dir.join("report.json");
            std::fs::write(&csv_path, report.csv())?;
            std::fs::write(&table_path, report.table())?;
            std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
            print!("{}", report.table());
            ManifestBuilder::new("report", started)
                .seeds(
                    report
                        .config
                        .key_seeds
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| (format!("key_seed_{i}"), s)),
                )
                .seed("train_seed", report.config.train.seed)
                .config(serde_json::to_value(&spec)?)
                .input(&spec.train_dataset)?
                .input(&spec.test_dataset)?
                .artifact(&csv_path)?
                .artifact(&table_path)?
                .artifact(&json_path)?
                .write(&json_path)
        }
        Command::Verify { seed } => verify::run(seed),
    }
}
