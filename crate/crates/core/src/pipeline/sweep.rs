//! Grid sweeps over the similarity threshold and the noise rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, BitextCorpus, Side};
use crate::error::{Error, Result};
use crate::noising::{training_examples, NoiseConfig, NoiseCounts};
use crate::simjoin::{edit_distance, join, JoinConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    /// Empty skips the noise statistics.
    pub betas: Vec<f64>,
    pub join: JoinConfig,
    pub noise: NoiseConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gammas: grid(0.0, 0.7, 0.2).expect("valid grid"),
            betas: grid(0.0, 0.7, 0.2).expect("valid grid"),
            join: JoinConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPoint {
    pub gamma: f64,
    pub candidates: usize,
    pub verified: usize,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub beta: f64,
    pub counts: NoiseCounts,
    pub rate: f64,
    pub insert_share: f64,
    pub remove_share: f64,
    pub substitute_share: f64,
    /// Mean token edit distance between clean and noised targets.
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub gamma: Vec<GammaPoint>,
    pub beta: Vec<BetaPoint>,
}

/// `start, start + step, ...` up to and including `stop` (within 1e-9).
/// Points are computed by multiplication so they do not drift.
pub fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!("invalid grid {start}..{stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

fn share(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

/// Extraction counts per threshold and noise statistics per rate, the
/// latter measured on the target side of `right`.
pub fn sweep(left: &BitextCorpus, right: &BitextCorpus, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.gammas.is_empty() {
        return Err(Error::Config("sweep needs at least one gamma".into()));
    }
    let gamma = cfg
        .gammas
        .iter()
        .map(|&g| {
            let out = join(left, right, &JoinConfig { gamma: g, ..cfg.join.clone() })?;
            Ok(GammaPoint {
                gamma: g,
                candidates: out.stats.candidates,
                verified: out.stats.verified,
                mean_distance: out.stats.mean_distance,
            })
        })
        .collect::<Result<_>>()?;

    let mut beta = Vec::with_capacity(cfg.betas.len());
    if !cfg.betas.is_empty() {
        let vocab = build_vocabulary(right, Side::Other)?;
        for &b in &cfg.betas {
            let noise = NoiseConfig { beta: b, ..cfg.noise.clone() };
            let (examples, counts) = training_examples(right, &noise, &vocab)?;
            let total: usize = examples
                .par_iter()
                .map(|ex| edit_distance(&ex.target, ex.noised_target()))
                .sum();
            let noised = counts.noised();
            beta.push(BetaPoint {
                beta: b,
                counts,
                rate: counts.rate(),
                insert_share: share(counts.inserts, noised),
                remove_share: share(counts.removes, noised),
                substitute_share: share(counts.substitutes, noised),
                mean_distance: if examples.is_empty() { 0.0 } else { total as f64 / examples.len() as f64 },
            });
        }
    }
    Ok(SweepReport { gamma, beta })
}
