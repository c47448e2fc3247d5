//! Temperature-based mixture planning and language tokens.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LanguageTag;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub temperature: f64,
    pub total: u64,
    /// Sampling probability per key before clamping to availability.
    pub probabilities: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
}

/// `n_i^(1/T) / sum_j n_j^(1/T)` for every key.
pub fn temperature_probabilities(available: &BTreeMap<String, u64>, temperature: f64) -> BTreeMap<String, f64> {
    let weights: BTreeMap<&String, f64> = available
        .iter()
        .map(|(k, &n)| (k, if n == 0 { 0.0 } else { (n as f64).powf(1.0 / temperature) }))
        .collect();
    let sum: f64 = weights.values().sum();
    weights
        .into_iter()
        .map(|(k, w)| (k.clone(), if sum > 0.0 { w / sum } else { 0.0 }))
        .collect()
}

/// Rounds `shares` (summing to `total`) to integers with the same sum.
/// Remainders are handed out largest first, ties to the earlier key.
fn largest_remainder(shares: &[(usize, f64)], total: u64) -> Vec<(usize, u64)> {
    let mut out: Vec<(usize, u64)> = shares.iter().map(|&(i, s)| (i, s.floor() as u64)).collect();
    let assigned: u64 = out.iter().map(|(_, c)| c).sum();
    let mut left = total.saturating_sub(assigned) as usize;
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a].1 - shares[a].1.floor();
        let rb = shares[b].1 - shares[b].1.floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut k = 0;
    while left > 0 && !order.is_empty() {
        out[order[k % order.len()]].1 += 1;
        left -= 1;
        k += 1;
    }
    out
}

/// Splits `total` examples over the keys of `available` by temperature
/// sampling. Keys whose share exceeds availability are clamped and the
/// surplus is spread over the rest by the same rule.
pub fn temperature_sample(available: &BTreeMap<String, u64>, temperature: f64, total: u64) -> Result<MixturePlan> {
    if !(temperature >= 1.0) {
        return Err(Error::Config(format!("temperature must be >= 1, got {temperature}")));
    }
    let supply: u64 = available.values().sum();
    if total > supply {
        return Err(Error::Data(format!("requested {total} examples but only {supply} are available")));
    }
    let probabilities = temperature_probabilities(available, temperature);
    let keys: Vec<&String> = available.keys().collect();
    let avail: Vec<u64> = available.values().copied().collect();

    let mut counts = vec![0u64; keys.len()];
    let mut active: Vec<usize> = (0..keys.len()).filter(|&i| avail[i] > 0).collect();
    let mut remaining = total;
    loop {
        let weights: Vec<f64> = active
            .iter()
            .map(|&i| (avail[i] as f64).powf(1.0 / temperature))
            .collect();
        let sum: f64 = weights.iter().sum();
        let shares: Vec<(usize, f64)> = active
            .iter()
            .zip(&weights)
            .map(|(&i, w)| (i, if sum > 0.0 { remaining as f64 * w / sum } else { 0.0 }))
            .collect();
        let over: Vec<usize> = shares
            .iter()
            .filter(|&&(i, s)| s > avail[i] as f64)
            .map(|&(i, _)| i)
            .collect();
        if over.is_empty() {
            for (i, c) in largest_remainder(&shares, remaining) {
                counts[i] = c;
            }
            break;
        }
        for i in over {
            counts[i] = avail[i];
            remaining -= avail[i];
            active.retain(|&k| k != i);
        }
    }

    Ok(MixturePlan {
        temperature,
        total,
        probabilities,
        counts: keys.into_iter().cloned().zip(counts).collect(),
    })
}

/// `<2xx>` for target language `xx`.
pub fn language_token(lang: &LanguageTag) -> String {
    format!("<2{lang}>")
}

pub fn prepend_language_token(source: &str, target_lang: &LanguageTag) -> String {
    format!("{} {source}", language_token(target_lang))
}

/// Language code of a `<2xx>` token.
pub fn parse_language_token(field: &str) -> Option<&str> {
    let code = field.strip_prefix("<2")?.strip_suffix('>')?;
    (!code.is_empty() && !code.contains(char::is_whitespace)).then_some(code)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixInput {
    pub name: String,
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    pub target_lang: LanguageTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSummary {
    pub plan: MixturePlan,
    pub lines: u64,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Samples a tagged training mixture from parallel text files. Lines are
/// drawn without replacement and written grouped by input, in file order.
pub fn write_mixture(
    inputs: &[MixInput],
    temperature: f64,
    total: u64,
    seed: u64,
    source_out: &Path,
    target_out: &Path,
) -> Result<MixSummary> {
    let mut data = Vec::with_capacity(inputs.len());
    let mut available = BTreeMap::new();
    for input in inputs {
        let src = read_lines(&input.source_path)?;
        let tgt = read_lines(&input.target_path)?;
        if src.len() != tgt.len() {
            return Err(Error::LineCountMismatch {
                pivot_path: input.source_path.clone(),
                pivot_lines: src.len(),
                other_path: input.target_path.clone(),
                other_lines: tgt.len(),
            });
        }
        if available.insert(input.name.clone(), src.len() as u64).is_some() {
            return Err(Error::Config(format!("mixture input {} listed twice", input.name)));
        }
        data.push((input, src, tgt));
    }
    let plan = temperature_sample(&available, temperature, total)?;

    let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
    let (mut src_w, mut tgt_w) = (open(source_out)?, open(target_out)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = 0;
    for (input, src, tgt) in &data {
        let take = plan.counts[&input.name] as usize;
        let mut picked = rand::seq::index::sample(&mut rng, src.len(), take).into_vec();
        picked.sort_unstable();
        for i in picked {
            writeln!(src_w, "{}", prepend_language_token(&src[i], &input.target_lang))
                .map_err(|e| Error::io(source_out, e))?;
            writeln!(tgt_w, "{}", tgt[i]).map_err(|e| Error::io(target_out, e))?;
            lines += 1;
        }
    }
    src_w.flush().map_err(|e| Error::io(source_out, e))?;
    tgt_w.flush().map_err(|e| Error::io(target_out, e))?;
    Ok(MixSummary { plan, lines })
}
