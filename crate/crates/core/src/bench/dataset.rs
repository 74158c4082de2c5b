use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::engine::Tensor;
use crate::proxy::Batch;

/// Generation parameters for a synthetic image classification task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: usize,
    pub resolution: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Per-pixel Gaussian noise added to the class template.
    pub noise: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: 4,
            resolution: 8,
            train: 512,
            val: 256,
            test: 256,
            noise: 2.0,
        }
    }
}

/// Images `[N, 3, r, r]` with labels in `0..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn sample_len(&self) -> usize {
        self.images.len() / self.len().max(1)
    }

    /// Samples `idx` as a batch.
    pub fn gather(&self, idx: &[usize]) -> Batch {
        let d = self.sample_len();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&self.images.data()[i * d..(i + 1) * d]);
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = idx.len();
        Batch {
            inputs: Tensor::new(shape, data).expect("gathered shape"),
            targets: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// `n` distinct samples chosen by `seed` (all of them when `n` exceeds
    /// the split), e.g. the real minibatch of a proxy request.
    pub fn sample_batch(&self, n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = rand::seq::index::sample(&mut rng, self.len(), n.min(self.len())).into_vec();
        self.gather(&idx)
    }

    /// Box-filter (or nearest-pixel, when `r` does not divide the source
    /// resolution) resize to `r × r`.
    pub fn resized(&self, r: usize) -> Split {
        let shape = self.images.shape();
        let (n, c, src) = (shape[0], shape[1], shape[2]);
        if r == src {
            return self.clone();
        }
        let mut out = Vec::with_capacity(n * c * r * r);
        let img = self.images.data();
        for plane in img.chunks(src * src) {
            for y in 0..r {
                for x in 0..r {
                    let v = if src % r == 0 {
                        let f = src / r;
                        let mut s = 0.0;
                        for dy in 0..f {
                            for dx in 0..f {
                                s += plane[(y * f + dy) * src + x * f + dx];
                            }
                        }
                        s / (f * f) as f64
                    } else {
                        plane[(y * src / r) * src + x * src / r]
                    };
                    out.push(v);
                }
            }
        }
        Split {
            images: Tensor::new(vec![n, c, r, r], out).expect("resized shape"),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub spec: DatasetSpec,
    pub seed: u64,
    /// One `[3, r, r]` pattern per class, flattened.
    pub templates: Vec<Vec<f64>>,
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

impl SyntheticDataset {
    pub fn resized(&self, r: usize) -> SyntheticDataset {
        let mut out = self.clone();
        out.spec.resolution = r;
        out.train = self.train.resized(r);
        out.val = self.val.resized(r);
        out.test = self.test.resized(r);
        out
    }
}

/// Class templates are smooth random patterns (sums of low-frequency
/// cosines, normalized to unit variance); samples are a template plus
/// Gaussian noise. Labels within each split are balanced to ±1.
pub fn gen_dataset(spec: &DatasetSpec, seed: u64) -> Result<SyntheticDataset, BenchError> {
    let total = spec.train + spec.val + spec.test;
    if spec.classes == 0 || spec.classes > total {
        return Err(BenchError::InvalidConfig(format!(
            "{} classes for {total} samples",
            spec.classes
        )));
    }
    if spec.resolution == 0 || !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(BenchError::InvalidConfig("resolution must be positive and noise finite".into()));
    }
    let r = spec.resolution;
    let d = 3 * r * r;
    let mut trng = ChaCha8Rng::seed_from_u64(seed);
    trng.set_stream(0);
    let templates: Vec<Vec<f64>> = (0..spec.classes).map(|_| template(&mut trng, r)).collect();

    let mut srng = ChaCha8Rng::seed_from_u64(seed);
    srng.set_stream(1);
    let noise = Normal::new(0.0, spec.noise).expect("finite noise");
    let mut split = |n: usize| {
        let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
        labels.shuffle(&mut srng);
        let mut data = Vec::with_capacity(n * d);
        for &l in &labels {
            data.extend(templates[l].iter().map(|t| t + noise.sample(&mut srng)));
        }
        Split {
            images: Tensor::new(vec![n, 3, r, r], data).expect("split shape"),
            labels,
        }
    };
    let train = split(spec.train);
    let val = split(spec.val);
    let test = split(spec.test);
    Ok(SyntheticDataset {
        spec: *spec,
        seed,
        templates,
        train,
        val,
        test,
    })
}

fn template(rng: &mut ChaCha8Rng, r: usize) -> Vec<f64> {
    let mut t = vec![0.0; 3 * r * r];
    for c in 0..3 {
        for _ in 0..3 {
            let fx = rng.random_range(0..3) as f64;
            let fy = rng.random_range(0..3) as f64;
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp: f64 = rng.random_range(-1.0..1.0);
            for y in 0..r {
                for x in 0..r {
                    let arg = 2.0 * PI * (fx * x as f64 + fy * y as f64) / r as f64 + phase;
                    t[(c * r + y) * r + x] += amp * arg.cos();
                }
            }
        }
    }
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let sd = (t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t.len() as f64).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    t.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    t
}
