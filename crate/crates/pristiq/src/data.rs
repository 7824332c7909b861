//! Image ingestion and amplitude encoding.
//!
//! IDX image/label files are filtered by class, downsampled by average
//! pooling, normalized into unit amplitude vectors, and turned into
//! Ry+CNOT state-preparation circuits.

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
const CACHE_MAGIC: &[u8; 4] = b"PQDS";
const CACHE_VERSION: u32 = 1;

/// A grayscale image with pixel values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    /// Row-major pixels.
    pub pixels: Vec<f64>,
}

/// One training example: unit-norm non-negative amplitude vector plus label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A set of amplitude-encoded samples over a fixed register width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_qubits: usize,
    pub n_classes: usize,
    pub samples: Vec<Sample>,
    /// Key fingerprint when the features have been encrypted.
    pub encrypted_with: Option<String>,
}

fn read_u32_be(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

/// Load IDX image/label files, keeping only `classes` (relabeled to their
/// position in the list) and at most `limit` samples.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    classes: &[u8],
    limit: usize,
) -> Result<Vec<(Image, usize)>> {
    if classes.is_empty() {
        return Err(Error::Argument("class list must be nonempty".into()));
    }
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(Error::Argument(format!("duplicate class {c}")));
        }
    }

    let mut imgf = std::io::BufReader::new(std::fs::File::open(images_path)?);
    let magic = read_u32_be(&mut imgf)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "bad image magic {magic:#010x} in {}",
            images_path.display()
        )));
    }
    let count = read_u32_be(&mut imgf)? as usize;
    let height = read_u32_be(&mut imgf)? as usize;
    let width = read_u32_be(&mut imgf)? as usize;
    if height == 0 || width == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }

    let mut lblf = std::io::BufReader::new(std::fs::File::open(labels_path)?);
    let magic = read_u32_be(&mut lblf)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!(
            "bad label magic {magic:#010x} in {}",
            labels_path.display()
        )));
    }
    let lcount = read_u32_be(&mut lblf)? as usize;
    if lcount != count {
        return Err(Error::Format(format!(
            "image/label count mismatch: {count} vs {lcount}"
        )));
    }
    let mut labels = vec![0u8; count];
    lblf.read_exact(&mut labels)?;

    let mut out = Vec::new();
    let mut raw = vec![0u8; height * width];
    for lbl in labels.iter().take(count) {
        imgf.read_exact(&mut raw)?;
        if out.len() >= limit {
            continue;
        }
        if let Some(new_label) = classes.iter().position(|c| c == lbl) {
            out.push((
                Image {
                    height,
                    width,
                    pixels: raw.iter().map(|&p| p as f64 / 255.0).collect(),
                },
                new_label,
            ));
        }
    }
    Ok(out)
}

/// Average-pool an image onto an `out_h` x `out_w` grid of disjoint blocks.
pub fn downsample(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 || img.height % out_h != 0 || img.width % out_w != 0 {
        return Err(Error::Argument(format!(
            "cannot pool {}x{} onto {}x{}",
            img.height, img.width, out_h, out_w
        )));
    }
    let (bh, bw) = (img.height / out_h, img.width / out_w);
    let mut pixels = vec![0.0; out_h * out_w];
    for r in 0..out_h {
        for c in 0..out_w {
            let mut sum = 0.0;
            for i in 0..bh {
                for j in 0..bw {
                    sum += img.pixels[(r * bh + i) * img.width + c * bw + j];
                }
            }
            pixels[r * out_w + c] = sum / (bh * bw) as f64;
        }
    }
    Ok(Image {
        height: out_h,
        width: out_w,
        pixels,
    })
}

/// Flatten an image into a unit amplitude vector. All-zero images become the
/// uniform vector so they remain encodable.
pub fn to_amplitudes(img: &Image) -> Result<Vec<f64>> {
    let n = img.pixels.len();
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::Argument(format!(
            "{}x{} image does not flatten to a power-of-two length",
            img.height, img.width
        )));
    }
    let norm = img.pixels.iter().map(|p| p * p).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(vec![1.0 / (n as f64).sqrt(); n]);
    }
    Ok(img.pixels.iter().map(|p| p / norm).collect())
}

/// Build a state-preparation circuit for a non-negative unit vector:
/// one multiplexed Ry per qubit level, expanded into Ry + CNOT.
pub fn synthesize_encoding(amps: &[f64]) -> Result<Circuit> {
    let len = amps.len();
    if !len.is_power_of_two() || len < 2 {
        return Err(Error::Argument(format!(
            "amplitude length {len} is not a power of two"
        )));
    }
    if let Some(a) = amps.iter().find(|&&a| a < 0.0) {
        return Err(Error::Argument(format!("negative amplitude {a}")));
    }
    let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("amplitude norm {norm} is not 1")));
    }
    let n = len.trailing_zeros() as usize;
    let mut circuit = Circuit::new(n)?;

    // subtree norms: node (level l, prefix j) spans amps[j·2^(n−l) .. (j+1)·2^(n−l))
    for level in 0..n {
        let span = 1usize << (n - level);
        let angles: Vec<f64> = (0..1usize << level)
            .map(|j| {
                let base = j * span;
                let left: f64 = amps[base..base + span / 2]
                    .iter()
                    .map(|a| a * a)
                    .sum::<f64>()
                    .sqrt();
                let right: f64 = amps[base + span / 2..base + span]
                    .iter()
                    .map(|a| a * a)
                    .sum::<f64>()
                    .sqrt();
                if left == 0.0 && right == 0.0 {
                    0.0
                } else {
                    2.0 * right.atan2(left)
                }
            })
            .collect();
        let controls: Vec<usize> = (0..level).collect();
        emit_multiplexed_ry(&mut circuit, &controls, level, &angles)?;
    }
    Ok(circuit)
}

/// Ry(angles[j]) on `target` selected by the controls' basis state j
/// (first control = most significant bit of j), via the standard
/// angle-halving recursion:
///   Ry(u)·C·Ry(v)·C with u=(α₀+α₁)/2, v=(α₀−α₁)/2 splits off one control.
fn emit_multiplexed_ry(
    circuit: &mut Circuit,
    controls: &[usize],
    target: usize,
    angles: &[f64],
) -> Result<()> {
    assert_eq!(angles.len(), 1 << controls.len());
    if angles.iter().all(|a| a.abs() < 1e-14) {
        return Ok(());
    }
    if controls.is_empty() {
        return circuit.push(Gate::ry(target, angles[0]));
    }
    let half = angles.len() / 2;
    let u: Vec<f64> = (0..half).map(|j| (angles[j] + angles[j + half]) / 2.0).collect();
    let v: Vec<f64> = (0..half).map(|j| (angles[j] - angles[j + half]) / 2.0).collect();
    let top = controls[0];
    circuit.push(Gate::cnot(top, target)?)?;
    emit_multiplexed_ry(circuit, &controls[1..], target, &v)?;
    circuit.push(Gate::cnot(top, target)?)?;
    emit_multiplexed_ry(circuit, &controls[1..], target, &u)?;
    Ok(())
}

impl Dataset {
    pub fn new(n_qubits: usize, n_classes: usize) -> Dataset {
        Dataset {
            n_qubits,
            n_classes,
            samples: Vec::new(),
            encrypted_with: None,
        }
    }

    pub fn push(&mut self, features: Vec<f64>, label: usize) -> Result<()> {
        if features.len() != 1 << self.n_qubits {
            return Err(Error::Argument(format!(
                "feature length {} for a {}-qubit dataset",
                features.len(),
                self.n_qubits
            )));
        }
        if label >= self.n_classes {
            return Err(Error::Argument(format!(
                "label {label} with {} classes",
                self.n_classes
            )));
        }
        self.samples.push(Sample { features, label });
        Ok(())
    }

    /// Binary cache: magic, version, qubits, classes, count, fingerprint,
    /// then per sample a label and little-endian f64 amplitudes.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_qubits as u32).to_le_bytes())?;
        w.write_all(&(self.n_classes as u32).to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        let fp = self.encrypted_with.as_deref().unwrap_or("");
        w.write_all(&(fp.len() as u32).to_le_bytes())?;
        w.write_all(fp.as_bytes())?;
        for s in &self.samples {
            w.write_all(&(s.label as u32).to_le_bytes())?;
            for f in &s.features {
                w.write_all(&f.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format(format!(
                "{} is not a dataset cache",
                path.display()
            )));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CACHE_VERSION {
            return Err(Error::Format(format!("unsupported cache version {version}")));
        }
        r.read_exact(&mut b4)?;
        let n_qubits = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let n_classes = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b4)?;
        let fp_len = u32::from_le_bytes(b4) as usize;
        let mut fp = vec![0u8; fp_len];
        r.read_exact(&mut fp)?;
        let fp = String::from_utf8(fp).map_err(|_| Error::Format("bad fingerprint".into()))?;
        if n_qubits == 0 || n_qubits > 24 {
            return Err(Error::Format(format!("implausible qubit count {n_qubits}")));
        }
        let mut ds = Dataset::new(n_qubits, n_classes);
        ds.encrypted_with = if fp.is_empty() { None } else { Some(fp) };
        let dim = 1usize << n_qubits;
        for _ in 0..count {
            r.read_exact(&mut b4)?;
            let label = u32::from_le_bytes(b4) as usize;
            let mut features = Vec::with_capacity(dim);
            for _ in 0..dim {
                r.read_exact(&mut b8)?;
                features.push(f64::from_le_bytes(b8));
            }
            ds.push(features, label)?;
        }
        Ok(ds)
    }
}

/// Full ingestion path: IDX files -> pooled images -> amplitude dataset.
/// Also returns the pooled [0,1] images (PSNR references downstream).
pub fn prepare_dataset(
    images_path: &Path,
    labels_path: &Path,
    classes: &[u8],
    limit: usize,
    out_h: usize,
    out_w: usize,
) -> Result<(Dataset, Vec<Image>)> {
    let raw = load_idx(images_path, labels_path, classes, limit)?;
    let dim = out_h * out_w;
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::Argument(format!(
            "{out_h}x{out_w} target is not a power-of-two pixel count"
        )));
    }
    let n_qubits = dim.trailing_zeros() as usize;
    let mut ds = Dataset::new(n_qubits, classes.len());
    let mut pooled = Vec::with_capacity(raw.len());
    for (img, label) in raw {
        let small = downsample(&img, out_h, out_w)?;
        ds.push(to_amplitudes(&small)?, label)?;
        pooled.push(small);
    }
    Ok((ds, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, StateVector};
    use rand::prelude::*;

    fn write_idx_pair(
        dir: &Path,
        images: &[Vec<u8>],
        labels: &[u8],
        h: usize,
        w: usize,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("imgs.idx");
        let lp = dir.join("lbls.idx");
        let mut ib = Vec::new();
        ib.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        ib.extend_from_slice(&(images.len() as u32).to_be_bytes());
        ib.extend_from_slice(&(h as u32).to_be_bytes());
        ib.extend_from_slice(&(w as u32).to_be_bytes());
        for img in images {
            ib.extend_from_slice(img);
        }
        std::fs::write(&ip, ib).unwrap();
        let mut lb = Vec::new();
        lb.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        lb.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lb.extend_from_slice(labels);
        std::fs::write(&lp, lb).unwrap();
        (ip, lp)
    }

    #[test]
    fn load_idx_filters_relabels_limits() {
        let dir = tempfile::tempdir().unwrap();
        let images: Vec<Vec<u8>> = (0..6).map(|i| vec![i as u8 * 10; 4]).collect();
        let labels = vec![0u8, 7, 3, 7, 3, 1];
        let (ip, lp) = write_idx_pair(dir.path(), &images, &labels, 2, 2);

        let got = load_idx(&ip, &lp, &[7, 3], 10).unwrap();
        assert_eq!(got.len(), 4);
        // 7 -> 0, 3 -> 1 in list order
        assert_eq!(
            got.iter().map(|(_, l)| *l).collect::<Vec<_>>(),
            vec![0, 1, 0, 1]
        );
        assert!((got[0].0.pixels[0] - 10.0 / 255.0).abs() < 1e-12);

        let got = load_idx(&ip, &lp, &[7, 3], 3).unwrap();
        assert_eq!(got.len(), 3);

        // absent class: empty, not an error
        let got = load_idx(&ip, &lp, &[9], 10).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn load_idx_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("bad.idx");
        std::fs::write(&ip, [0u8, 0, 8, 4, 0, 0, 0, 0]).unwrap();
        let lp = dir.path().join("bad2.idx");
        std::fs::write(&lp, [0u8, 0, 8, 1, 0, 0, 0, 0]).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp, &[0], 1),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn downsample_constant_and_identity() {
        let img = Image {
            height: 28,
            width: 28,
            pixels: vec![0.37; 28 * 28],
        };
        let out = downsample(&img, 4, 4).unwrap();
        assert!(out.pixels.iter().all(|&p| (p - 0.37).abs() < 1e-12));
        let same = downsample(&img, 28, 28).unwrap();
        assert_eq!(same, img);
        assert!(downsample(&img, 5, 4).is_err());
    }

    #[test]
    fn downsample_checkerboard_halves() {
        let mut pixels = vec![0.0; 28 * 28];
        for r in 0..28 {
            for c in 0..28 {
                pixels[r * 28 + c] = ((r + c) % 2) as f64;
            }
        }
        let img = Image {
            height: 28,
            width: 28,
            pixels,
        };
        // even 2x2 blocks average to exactly 1/2
        let out = downsample(&img, 14, 14).unwrap();
        assert!(out.pixels.iter().all(|&p| (p - 0.5).abs() < 1e-12));
        // odd 7x7 blocks hold 25 or 24 ones
        let out = downsample(&img, 4, 4).unwrap();
        assert!(out
            .pixels
            .iter()
            .all(|&p| (p - 25.0 / 49.0).abs() < 1e-12 || (p - 24.0 / 49.0).abs() < 1e-12));
    }

    #[test]
    fn downsample_preserves_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let img = Image {
                height: 28,
                width: 28,
                pixels: (0..28 * 28).map(|_| rng.gen::<f64>()).collect(),
            };
            let out = downsample(&img, 4, 4).unwrap();
            let mean_in = img.pixels.iter().sum::<f64>() / img.pixels.len() as f64;
            let mean_out = out.pixels.iter().sum::<f64>() / out.pixels.len() as f64;
            assert!((mean_in - mean_out).abs() < 1e-12);
        }
    }

    #[test]
    fn to_amplitudes_cases() {
        let img = Image {
            height: 2,
            width: 2,
            pixels: vec![3.0, 4.0, 0.0, 0.0],
        };
        let a = to_amplitudes(&img).unwrap();
        assert_eq!(a, vec![0.6, 0.8, 0.0, 0.0]);

        let zero = Image {
            height: 4,
            width: 4,
            pixels: vec![0.0; 16],
        };
        let a = to_amplitudes(&zero).unwrap();
        assert!(a.iter().all(|&x| (x - 0.25).abs() < 1e-15));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let img = Image {
            height: 4,
            width: 4,
            pixels: (0..16).map(|_| rng.gen::<f64>()).collect(),
        };
        let a = to_amplitudes(&img).unwrap();
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encoding_trivial_cases() {
        let mut amps = vec![0.0; 8];
        amps[0] = 1.0;
        let c = synthesize_encoding(&amps).unwrap();
        assert_eq!(c.metrics().gate_count, 0);

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let c = synthesize_encoding(&[r, r]).unwrap();
        assert_eq!(c.gates().len(), 1);
        assert_eq!(c.gates()[0].kind, crate::circuit::GateKind::Ry);
        assert!((c.gates()[0].angle.unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn encoding_rejects_bad_input() {
        assert!(synthesize_encoding(&[1.0, 0.0, 0.0]).is_err());
        assert!(synthesize_encoding(&[-0.6, 0.8]).is_err());
        assert!(synthesize_encoding(&[0.9, 0.1]).is_err());
    }

    #[test]
    fn encoding_matches_simulation_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for trial in 0..200 {
            let n = 1 + trial % 4;
            let dim = 1usize << n;
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            // sprinkle exact zeros to hit degenerate subtrees
            if trial % 5 == 0 {
                for i in (0..dim).step_by(3) {
                    v[i] = 0.0;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= norm;
            }
            let c = synthesize_encoding(&v).unwrap();
            let s = simulate(&c, &StateVector::zero(n)).unwrap();
            for (a, want) in s.amps().iter().zip(&v) {
                assert!(
                    (a.re - want).abs() < 1e-8 && a.im.abs() < 1e-12,
                    "n={n} trial={trial}"
                );
            }
        }
    }

    #[test]
    fn dataset_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let mut ds = Dataset::new(3, 2);
        ds.encrypted_with = Some("abc123".into());
        for i in 0..7 {
            let mut v: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= norm;
            }
            ds.push(v, i % 2).unwrap();
        }
        let path = dir.path().join("cache.bin");
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn dataset_bytes_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let images: Vec<Vec<u8>> = (0..5).map(|i| vec![(i * 31) as u8; 28 * 28]).collect();
        let labels = vec![0u8, 1, 0, 1, 1];
        let (ip, lp) = write_idx_pair(dir.path(), &images, &labels, 28, 28);
        let (a, _) = prepare_dataset(&ip, &lp, &[0, 1], 100, 4, 4).unwrap();
        let (b, _) = prepare_dataset(&ip, &lp, &[0, 1], 100, 4, 4).unwrap();
        let (pa, pb) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
        a.save(&pa).unwrap();
        b.save(&pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }
}
