//! EEG datasets, the `EEGR` file format, synthetic data and split protocols.
//!
//! `EEGR` layout, little-endian:
//!
//! ```text
//! "EEGR"  u32 version = 1  u32 n_samples  u32 channels  u32 timesteps
//! f32 signals[n_samples][channels][timesteps]
//! f32 labels[n_samples][2]                  (x, y)
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"EEGR";
pub const VERSION: u32 = 1;

/// Label range of the synthetic generator, matching an 800 × 600 screen.
pub const SCREEN_WIDTH: f64 = 800.0;
pub const SCREEN_HEIGHT: f64 = 600.0;

/// Seed of the label-to-signal encoding shared by all synthetic datasets, so
/// sets generated with different sample seeds encode gaze the same way.
pub const DEFAULT_ENCODING_SEED: u64 = 0x6a7e_0001;

/// Scale of the encoded component of synthetic signals.
pub const SIGNAL_AMPLITUDE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic { seed: u64, noise_sigma: f64 },
    File(PathBuf),
}

/// `N` EEG windows of `channels × timesteps` with their gaze labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EegDataset {
    /// `[N, channels, timesteps, 1]`
    pub signals: Tensor<f32>,
    /// `[N, 2]`, gaze x and y
    pub labels: Tensor<f32>,
    pub provenance: Provenance,
}

impl EegDataset {
    pub fn new(signals: Tensor<f32>, labels: Tensor<f32>, provenance: Provenance) -> Result<Self> {
        let n = match *signals.dims() {
            [n, _, _, 1] => n,
            _ => {
                return Err(Error::ShapeMismatch { op: "dataset signals", left: vec![0, 0, 0, 1], right: signals.dims().to_vec() })
            }
        };
        if labels.dims() != [n, 2] {
            return Err(Error::ShapeMismatch { op: "dataset labels", left: vec![n, 2], right: labels.dims().to_vec() });
        }
        labels.check_finite("dataset labels")?;
        Ok(EegDataset { signals, labels, provenance })
    }

    pub fn len(&self) -> usize {
        self.signals.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.signals.dims()[1]
    }

    pub fn timesteps(&self) -> usize {
        self.signals.dims()[2]
    }

    pub fn sample_len(&self) -> usize {
        self.channels() * self.timesteps()
    }

    pub fn signal(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.signals.values()[i * n..][..n]
    }

    pub fn label(&self, i: usize) -> [f32; 2] {
        let l = self.labels.values();
        [l[2 * i], l[2 * i + 1]]
    }

    /// Copies the given samples into a `[B, channels, timesteps, 1]` batch and
    /// a `[B, 2]` label tensor.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!("sample index {bad} out of range for {} samples", self.len())));
        }
        let mut x = Vec::with_capacity(indices.len() * self.sample_len());
        let mut y = Vec::with_capacity(indices.len() * 2);
        for &i in indices {
            x.extend_from_slice(self.signal(i));
            y.extend_from_slice(&self.label(i));
        }
        Ok((
            Tensor::from_vec(&[indices.len(), self.channels(), self.timesteps(), 1], x)?,
            Tensor::from_vec(&[indices.len(), 2], y)?,
        ))
    }

    /// Standardizes every channel to zero mean and unit variance over all
    /// samples and timesteps, in place. Returns the `(mean, std)` per channel.
    /// Off by default; datasets are used as stored.
    pub fn standardize_channels(&mut self) -> Vec<(f64, f64)> {
        let (n, c, t) = (self.len(), self.channels(), self.timesteps());
        let vals = self.signals.values_mut();
        (0..c)
            .map(|ci| {
                let rows = (0..n).map(|i| (i * c + ci) * t);
                let count = (n * t) as f64;
                let mean = rows.clone().flat_map(|r| &vals[r..r + t]).map(|&v| v as f64).sum::<f64>() / count;
                let var =
                    rows.clone().flat_map(|r| &vals[r..r + t]).map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / count;
                let std = var.sqrt().max(1e-12);
                for r in rows {
                    for v in &mut vals[r..r + t] {
                        *v = ((*v as f64 - mean) / std) as f32;
                    }
                }
                (mean, std)
            })
            .collect()
    }
}

/// The fixed linear map from gaze to per-channel signal amplitude and the
/// per-channel temporal profile used by the synthetic generator.
///
/// For normalized gaze `u = x/800 - 0.5`, `v = y/600 - 0.5`, channel `c` at
/// time `t` carries
///
/// `A · (a_c·u + b_c·v + d_c) · (1 + 0.5·sin(2π f_c t / T + φ_c)) + σ·ε`
///
/// with `a_c, b_c, d_c ~ N(0, 1)`, `f_c ~ U[1, 4)` cycles per window,
/// `φ_c ~ U[0, 2π)` and `ε ~ N(0, 1)` i.i.d.
#[derive(Debug, Clone)]
pub struct SyntheticEncoding {
    pub gain_x: Vec<f64>,
    pub gain_y: Vec<f64>,
    pub offset: Vec<f64>,
    pub freq: Vec<f64>,
    pub phase: Vec<f64>,
}

impl SyntheticEncoding {
    pub fn new(channels: usize, encoding_seed: u64) -> Self {
        let mut rng = stream_rng(encoding_seed, Stream::Synthetic, 0);
        let mut normal = |_| rng.sample::<f64, _>(StandardNormal);
        let gain_x = (0..channels).map(&mut normal).collect();
        let gain_y = (0..channels).map(&mut normal).collect();
        let offset = (0..channels).map(&mut normal).collect();
        let mut rng = stream_rng(encoding_seed, Stream::Synthetic, 1);
        let freq = (0..channels).map(|_| rng.random_range(1.0..4.0)).collect();
        let phase = (0..channels).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        SyntheticEncoding { gain_x, gain_y, offset, freq, phase }
    }

    pub fn amplitude(&self, c: usize, x: f64, y: f64) -> f64 {
        let (u, v) = (x / SCREEN_WIDTH - 0.5, y / SCREEN_HEIGHT - 0.5);
        SIGNAL_AMPLITUDE * (self.gain_x[c] * u + self.gain_y[c] * v + self.offset[c])
    }

    pub fn profile(&self, c: usize, t: usize, timesteps: usize) -> f64 {
        1.0 + 0.5 * (2.0 * PI * self.freq[c] * t as f64 / timesteps as f64 + self.phase[c]).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub channels: usize,
    pub timesteps: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub encoding_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { samples: 1000, channels: 129, timesteps: 500, seed: 0, noise_sigma: 0.0, encoding_seed: DEFAULT_ENCODING_SEED }
    }
}

/// Synthetic dataset with labels uniform on `[0, 800) × [0, 600)` encoded
/// into the signals by [`SyntheticEncoding`].
pub fn generate_synthetic(n: usize, channels: usize, timesteps: usize, seed: u64, noise_sigma: f64) -> Result<EegDataset> {
    generate(&SyntheticSpec { samples: n, channels, timesteps, seed, noise_sigma, ..SyntheticSpec::default() })
}

pub fn generate(spec: &SyntheticSpec) -> Result<EegDataset> {
    if spec.samples == 0 || spec.channels == 0 || spec.timesteps == 0 {
        return Err(Error::InvalidArgument(format!("synthetic dataset dimensions must be positive: {spec:?}")));
    }
    if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise_sigma must be >= 0, got {}", spec.noise_sigma)));
    }
    let enc = SyntheticEncoding::new(spec.channels, spec.encoding_seed);
    let (c_n, t_n) = (spec.channels, spec.timesteps);
    let profiles: Vec<f64> = (0..c_n).flat_map(|c| (0..t_n).map(move |t| (c, t))).map(|(c, t)| enc.profile(c, t, t_n)).collect();

    let mut label_rng = stream_rng(spec.seed, Stream::Synthetic, 2);
    let mut noise_rng = stream_rng(spec.seed, Stream::Synthetic, 3);
    let mut signals = Vec::with_capacity(spec.samples * c_n * t_n);
    let mut labels = Vec::with_capacity(spec.samples * 2);
    for _ in 0..spec.samples {
        let x = label_rng.random_range(0.0..SCREEN_WIDTH);
        let y = label_rng.random_range(0.0..SCREEN_HEIGHT);
        labels.extend([x as f32, y as f32]);
        for c in 0..c_n {
            // encode the stored (f32) label so the signal is an exact function of it
            let amp = enc.amplitude(c, x as f32 as f64, y as f32 as f64);
            for &p in &profiles[c * t_n..][..t_n] {
                let noise = if spec.noise_sigma > 0.0 {
                    spec.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                signals.push((amp * p + noise) as f32);
            }
        }
    }
    EegDataset::new(
        Tensor::from_vec(&[spec.samples, c_n, t_n, 1], signals)?,
        Tensor::from_vec(&[spec.samples, 2], labels)?,
        Provenance::Synthetic { seed: spec.seed, noise_sigma: spec.noise_sigma },
    )
}

pub fn to_bytes(ds: &EegDataset) -> Result<Vec<u8>> {
    let word = |v: usize, field| {
        u32::try_from(v).map_err(|_| Error::from(FormatError::Header { field, reason: format!("{v} exceeds u32") }))
    };
    let mut w = Writer::new();
    w.bytes(&MAGIC);
    w.u32(VERSION);
    w.u32(word(ds.len(), "n_samples")?);
    w.u32(word(ds.channels(), "channels")?);
    w.u32(word(ds.timesteps(), "timesteps")?);
    w.f32s(ds.signals.values());
    w.f32s(ds.labels.values());
    Ok(w.buf)
}

pub fn from_bytes(bytes: &[u8], provenance: Provenance) -> Result<EegDataset> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::Version { expected: VERSION, found: version }.into());
    }
    let n = r.u32()? as usize;
    let c = r.u32()? as usize;
    let t = r.u32()? as usize;
    for (field, v) in [("n_samples", n), ("channels", c), ("timesteps", t)] {
        if v == 0 {
            return Err(FormatError::Header { field, reason: "must be positive".into() }.into());
        }
    }
    let payload = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(t))
        .and_then(|v| v.checked_add(2 * n))
        .and_then(|v| v.checked_mul(4))
        .ok_or(FormatError::Header { field: "n_samples", reason: "payload size overflows".into() })?;
    match payload.cmp(&r.remaining()) {
        std::cmp::Ordering::Greater => {
            return Err(FormatError::Truncated { offset: bytes.len(), needed: payload - r.remaining() }.into())
        }
        std::cmp::Ordering::Less => return Err(FormatError::TrailingBytes { extra: r.remaining() - payload }.into()),
        std::cmp::Ordering::Equal => {}
    }
    let signals = r.f32s(n * c * t)?;
    let labels = r.f32s(2 * n)?;
    r.finish()?;
    EegDataset::new(Tensor::from_vec(&[n, c, t, 1], signals)?, Tensor::from_vec(&[n, 2], labels)?, provenance)
}

pub fn save(ds: &EegDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(ds)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<EegDataset> {
    let path = path.as_ref();
    from_bytes(&fs::read(path)?, Provenance::File(path.to_path_buf()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// One train/val/test partition for the whole run.
    Fixed,
    /// Fixed test set; train and val re-drawn from the remaining samples every epoch.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { mode: SplitMode::Fixed, train: 0.7, val: 0.15, test: 0.15, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Partition sizes for `n` samples: `floor(train·n)`, `floor(val·n)`, the
    /// rest to test. A 1e-9 slack absorbs products like `0.29 * 100 = 28.999…`.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        let fracs = [self.train, self.val, self.test];
        if fracs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must lie in (0, 1) and sum to 1, got {fracs:?}"
            )));
        }
        let n_train = (self.train * n as f64 + 1e-9).floor() as usize;
        let n_val = (self.val * n as f64 + 1e-9).floor() as usize;
        let n_test = n.saturating_sub(n_train + n_val);
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::InvalidArgument(format!(
                "split of {n} samples leaves an empty partition ({n_train}/{n_val}/{n_test})"
            )));
        }
        Ok((n_train, n_val, n_test))
    }
}

/// Train/val/test indices for one epoch (1-based).
///
/// The test set depends only on `(seed, fractions)` and is the same in both
/// modes. In per-epoch mode the remaining samples are reshuffled with
/// `(seed, epoch)` before being cut into train and val.
pub fn split(n: usize, spec: &SplitSpec, epoch: usize) -> Result<Partition> {
    let (n_train, _, n_test) = spec.sizes(n)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(spec.seed, Stream::Split, 0));
    let test = perm.split_off(n - n_test);
    let mut pool = perm;
    if spec.mode == SplitMode::PerEpoch {
        pool.shuffle(&mut stream_rng(spec.seed, Stream::Split, epoch as u64 + 1));
    }
    let val = pool.split_off(n_train);
    Ok(Partition { train: pool, val, test })
}

/// Shuffles `indices` with `(seed, epoch)` and cuts them into batches; the
/// last batch keeps the remainder.
pub fn batches(indices: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let mut order = indices.to_vec();
    order.shuffle(&mut stream_rng(seed, Stream::Batches, epoch as u64));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = generate_synthetic(20, 5, 12, 3, 0.5).unwrap();
        let b = generate_synthetic(20, 5, 12, 3, 0.5).unwrap();
        assert!(a.signals.values().iter().zip(b.signals.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.labels, b.labels);
        for i in 0..a.len() {
            let [x, y] = a.label(i);
            assert!((0.0..=800.0).contains(&x) && (0.0..=600.0).contains(&y));
        }
        assert_ne!(generate_synthetic(20, 5, 12, 4, 0.5).unwrap().labels, a.labels);
    }

    #[test]
    fn generator_rejects_bad_args() {
        assert!(generate_synthetic(0, 5, 12, 3, 0.0).is_err());
        assert!(generate_synthetic(3, 5, 12, 3, -1.0).is_err());
    }

    #[test]
    fn encoding_shared_across_sample_seeds() {
        let a = generate_synthetic(1, 3, 4, 1, 0.0).unwrap();
        let b = generate_synthetic(1, 3, 4, 2, 0.0).unwrap();
        let enc = SyntheticEncoding::new(3, DEFAULT_ENCODING_SEED);
        for ds in [a, b] {
            let [x, y] = ds.label(0);
            let expected = enc.amplitude(2, x as f64, y as f64) * enc.profile(2, 1, 4);
            assert!((ds.signal(0)[2 * 4 + 1] as f64 - expected).abs() < 1e-4);
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let ds = generate_synthetic(7, 3, 5, 11, 1.0).unwrap();
        let bytes = to_bytes(&ds).unwrap();
        assert_eq!(bytes.len(), 20 + 4 * (7 * 3 * 5 + 14));
        let back = from_bytes(&bytes, Provenance::File("x".into())).unwrap();
        assert_eq!(to_bytes(&back).unwrap(), bytes);

        let err = |b: &[u8]| from_bytes(b, Provenance::File("x".into())).unwrap_err();
        assert!(matches!(err(&[]), Error::Format(FormatError::BadMagic { .. })));
        assert!(matches!(err(&bytes[..bytes.len() - 1]), Error::Format(FormatError::Truncated { .. })));
        let mut more = bytes.clone();
        more[8] = 8; // header claims 8 samples
        assert!(matches!(err(&more), Error::Format(FormatError::Truncated { .. })));
        let mut fewer = bytes.clone();
        fewer[8] = 6;
        assert!(matches!(err(&fewer), Error::Format(FormatError::TrailingBytes { .. })));
        let mut ver = bytes.clone();
        ver[4] = 9;
        assert!(matches!(err(&ver), Error::Format(FormatError::Version { found: 9, .. })));
        let mut zero = bytes;
        zero[8] = 0;
        assert!(matches!(err(&zero), Error::Format(FormatError::Header { field: "n_samples", .. })));
    }

    #[test]
    fn gather_batches_rows() {
        let ds = generate_synthetic(4, 2, 3, 0, 0.0).unwrap();
        let (x, y) = ds.gather(&[2, 0]).unwrap();
        assert_eq!(x.dims(), &[2, 2, 3, 1]);
        assert_eq!(&x.values()[..6], ds.signal(2));
        assert_eq!(y.values()[2..], ds.label(0));
        assert!(ds.gather(&[4]).is_err());
    }

    #[test]
    fn standardize() {
        let mut ds = generate_synthetic(10, 3, 8, 0, 1.0).unwrap();
        let stats = ds.standardize_channels();
        assert_eq!(stats.len(), 3);
        let again = ds.standardize_channels();
        for (m, s) in again {
            assert!(m.abs() < 1e-5 && (s - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn split_sizes() {
        let p = split(100, &SplitSpec::default(), 1).unwrap();
        assert_eq!((p.train.len(), p.val.len(), p.test.len()), (70, 15, 15));
        let bad = SplitSpec { train: 0.9, val: 0.1, test: 0.0, ..SplitSpec::default() };
        assert!(split(100, &bad, 1).is_err());
        assert!(split(3, &SplitSpec::default(), 1).is_err());
    }

    #[test]
    fn fixed_split_ignores_epoch() {
        let spec = SplitSpec::default();
        assert_eq!(split(100, &spec, 1).unwrap(), split(100, &spec, 2).unwrap());
    }

    #[test]
    fn per_epoch_split_keeps_test() {
        let spec = SplitSpec { mode: SplitMode::PerEpoch, ..SplitSpec::default() };
        let (a, b) = (split(100, &spec, 1).unwrap(), split(100, &spec, 2).unwrap());
        assert_eq!(a.test, b.test);
        assert_ne!(a.train, b.train);
        let fixed = split(100, &SplitSpec::default(), 5).unwrap();
        assert_eq!(fixed.test, a.test);
    }

    #[test]
    fn batch_sizes() {
        let idx: Vec<usize> = (0..130).collect();
        let b = batches(&idx, 64, 1, 1).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), [64, 64, 2]);
        assert_eq!(b, batches(&idx, 64, 1, 1).unwrap());
        assert_ne!(b, batches(&idx, 64, 1, 2).unwrap());
        assert!(batches(&idx, 0, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_exhaustive(n in 20usize..400, seed in any::<u64>(), epoch in 1usize..50, per_epoch in any::<bool>()) {
            let mode = if per_epoch { SplitMode::PerEpoch } else { SplitMode::Fixed };
            let p = split(n, &SplitSpec { mode, seed, ..SplitSpec::default() }, epoch).unwrap();
            let mut all: Vec<usize> = p.train.iter().chain(&p.val).chain(&p.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn batches_cover_indices_once(idx in prop::collection::vec(0usize..1000, 0..300), bs in 1usize..100, seed in any::<u64>()) {
            let mut flat: Vec<usize> = batches(&idx, bs, seed, 3).unwrap().concat();
            let mut want = idx.clone();
            flat.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(flat, want);
        }
    }
}
