use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use half::{bf16, f16};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StructureError;
use crate::packaging::{Dtype, SafetensorsHeader, TensorInfo};

const READ_CHUNK: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsStatus {
    Computed,
    /// Zero elements, or no finite element: mean and variance are undefined.
    Undefined,
    /// Integer or 8-bit float dtype; not decoded.
    DtypeUnchecked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMethod {
    /// Every element compared in a second pass.
    Exact,
    /// Count extrapolated from a seeded reservoir sample.
    Reservoir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorStats {
    pub name: String,
    pub dtype: Dtype,
    pub count: u64,
    pub status: StatsStatus,
    /// Mean and population variance over finite elements.
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub nan_count: u64,
    pub inf_count: u64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub outlier_count: u64,
    pub outlier_method: OutlierMethod,
    /// Set when the tensor holds NaN or Inf values.
    pub non_finite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsSettings {
    pub z_threshold: f64,
    pub sample_budget: usize,
    pub seed: u64,
}

impl Default for StatsSettings {
    fn default() -> Self {
        StatsSettings {
            z_threshold: 6.0,
            sample_budget: 1_000_000,
            seed: 0,
        }
    }
}

/// Decodes little-endian F32/F16/BF16 bytes, widening to f64.
pub fn decode_values(dtype: Dtype, bytes: &[u8], out: &mut Vec<f64>) -> Result<(), StructureError> {
    out.clear();
    match dtype {
        Dtype::F32 => out.extend(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64),
        ),
        Dtype::F16 => out.extend(
            bytes
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f64()),
        ),
        Dtype::BF16 => out.extend(
            bytes
                .chunks_exact(2)
                .map(|c| bf16::from_le_bytes([c[0], c[1]]).to_f64()),
        ),
        other => return Err(StructureError::DtypeUnsupported(other.to_string())),
    }
    Ok(())
}

fn decodable(dtype: Dtype) -> bool {
    matches!(dtype, Dtype::F32 | Dtype::F16 | Dtype::BF16)
}

/// Welford accumulator over finite values plus NaN/Inf tallies.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    pub finite: u64,
    mean: f64,
    m2: f64,
    pub nan: u64,
    pub inf: u64,
    min: f64,
    max: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        if x.is_nan() {
            self.nan += 1;
            return;
        }
        if x.is_infinite() {
            self.inf += 1;
            return;
        }
        if self.finite == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.finite += 1;
        let delta = x - self.mean;
        self.mean += delta / self.finite as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> Option<f64> {
        (self.finite > 0).then_some(self.mean)
    }

    pub fn variance(&self) -> Option<f64> {
        (self.finite > 0).then(|| (self.m2 / self.finite as f64).max(0.0))
    }

    pub fn min(&self) -> Option<f64> {
        (self.finite > 0).then_some(self.min)
    }

    pub fn max(&self) -> Option<f64> {
        (self.finite > 0).then_some(self.max)
    }
}

/// Uniform fixed-size sample of finite values (Algorithm R).
struct Reservoir {
    items: Vec<f64>,
    seen: u64,
    cap: usize,
    rng: ChaCha8Rng,
}

impl Reservoir {
    fn new(cap: usize, seed: u64) -> Self {
        Reservoir {
            items: Vec::with_capacity(cap.min(1 << 20)),
            seen: 0,
            cap,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn push(&mut self, x: f64) {
        self.seen += 1;
        if self.items.len() < self.cap {
            self.items.push(x);
        } else {
            let j = self.rng.random_range(0..self.seen);
            if (j as usize) < self.cap {
                self.items[j as usize] = x;
            }
        }
    }
}

fn for_each_chunk(
    file: &mut BufReader<File>,
    start: u64,
    len: u64,
    dtype: Dtype,
    mut f: impl FnMut(&[f64]),
) -> std::io::Result<()> {
    file.seek(SeekFrom::Start(start))?;
    let width = dtype.width() as usize;
    let chunk = READ_CHUNK - READ_CHUNK % width;
    let mut buf = vec![0u8; chunk];
    let mut values = Vec::with_capacity(chunk / width);
    let mut left = len;
    while left > 0 {
        let n = (left as usize).min(chunk);
        file.read_exact(&mut buf[..n])?;
        decode_values(dtype, &buf[..n], &mut values).expect("caller checked dtype");
        f(&values);
        left -= n as u64;
    }
    Ok(())
}

fn outside(x: f64, mean: f64, sd: f64, z: f64) -> bool {
    x.is_finite() && ((x - mean) / sd).abs() > z
}

/// Statistics for one tensor. The data region must already be validated.
pub fn stats_for_tensor(
    path: &Path,
    header: &SafetensorsHeader,
    name: &str,
    info: &TensorInfo,
    settings: &StatsSettings,
) -> Result<TensorStats, StructureError> {
    let count = info.element_count().unwrap_or(0);
    let mut stats = TensorStats {
        name: name.to_string(),
        dtype: info.dtype,
        count,
        status: StatsStatus::DtypeUnchecked,
        mean: None,
        variance: None,
        nan_count: 0,
        inf_count: 0,
        min: None,
        max: None,
        outlier_count: 0,
        outlier_method: OutlierMethod::Exact,
        non_finite: false,
    };
    if !decodable(info.dtype) {
        return Ok(stats);
    }
    let io = |e| StructureError::io(path, e);
    let mut file = BufReader::with_capacity(READ_CHUNK, File::open(path).map_err(io)?);
    let start = header.data_start() + info.data_offsets[0];
    let len = info.byte_len();
    let sampled = count as usize > settings.sample_budget;
    let mut acc = Accumulator::default();
    let mut reservoir = sampled.then(|| Reservoir::new(settings.sample_budget, settings.seed));
    for_each_chunk(&mut file, start, len, info.dtype, |vals| {
        for &x in vals {
            acc.push(x);
            if let Some(r) = reservoir.as_mut().filter(|_| x.is_finite()) {
                r.push(x);
            }
        }
    })
    .map_err(io)?;

    stats.nan_count = acc.nan;
    stats.inf_count = acc.inf;
    stats.non_finite = acc.nan + acc.inf > 0;
    stats.mean = acc.mean();
    stats.variance = acc.variance();
    stats.min = acc.min();
    stats.max = acc.max();
    stats.status = if acc.finite == 0 {
        StatsStatus::Undefined
    } else {
        StatsStatus::Computed
    };

    if let (Some(mean), Some(var)) = (stats.mean, stats.variance) {
        let sd = var.sqrt();
        if sd > 0.0 {
            let z = settings.z_threshold;
            match reservoir {
                Some(r) => {
                    let hits = r.items.iter().filter(|&&x| outside(x, mean, sd, z)).count() as f64;
                    stats.outlier_count =
                        (hits * acc.finite as f64 / r.items.len() as f64).round() as u64;
                    stats.outlier_method = OutlierMethod::Reservoir;
                }
                None => {
                    let mut n = 0u64;
                    for_each_chunk(&mut file, start, len, info.dtype, |vals| {
                        n += vals.iter().filter(|&&x| outside(x, mean, sd, z)).count() as u64;
                    })
                    .map_err(io)?;
                    stats.outlier_count = n;
                }
            }
        }
    }
    Ok(stats)
}

/// Per-tensor statistics for every tensor in a validated safetensors file,
/// ordered by tensor name. Non-float dtypes are listed as unchecked.
pub fn tensor_stats(
    path: &Path,
    header: &SafetensorsHeader,
    settings: &StatsSettings,
) -> Result<Vec<TensorStats>, StructureError> {
    header
        .tensors
        .par_iter()
        .map(|(name, info)| stats_for_tensor(path, header, name, info, settings))
        .collect()
}
