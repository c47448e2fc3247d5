//! Language-by-language example counts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::LanguageTag;
use crate::error::{Error, Result};

/// Symmetric count matrix with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub languages: Vec<LanguageTag>,
    pub counts: Vec<Vec<u64>>,
}

/// Number of examples available for one language pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub a: LanguageTag,
    pub b: LanguageTag,
    pub count: u64,
}

impl CorpusStats {
    pub fn get(&self, a: &LanguageTag, b: &LanguageTag) -> Option<u64> {
        let i = self.languages.iter().position(|l| l == a)?;
        let j = self.languages.iter().position(|l| l == b)?;
        Some(self.counts[i][j])
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.languages.len();
        (0..n).all(|i| self.counts[i][i] == 0 && (0..n).all(|j| self.counts[i][j] == self.counts[j][i]))
    }

    /// Fixed-width text table; the diagonal renders as `-`.
    pub fn render_table(&self) -> String {
        let cell = |i: usize, j: usize| {
            if i == j {
                "-".to_owned()
            } else {
                self.counts[i][j].to_string()
            }
        };
        let n = self.languages.len();
        let mut width = self.languages.iter().map(|l| l.as_str().len()).max().unwrap_or(1);
        for i in 0..n {
            for j in 0..n {
                width = width.max(cell(i, j).len());
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:>width$}", "");
        for lang in &self.languages {
            let _ = write!(out, " {:>width$}", lang.as_str());
        }
        out.push('\n');
        for i in 0..n {
            let _ = write!(out, "{:>width$}", self.languages[i].as_str());
            for j in 0..n {
                let _ = write!(out, " {:>width$}", cell(i, j));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

/// Fills the matrix from original and constructed pair counts. Languages
/// are listed in `languages` order; counts for the same pair add up.
pub fn stats_matrix(languages: &[LanguageTag], pairs: &[PairCount]) -> Result<CorpusStats> {
    let n = languages.len();
    let mut counts = vec![vec![0u64; n]; n];
    let index = |l: &LanguageTag| {
        languages
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::Data(format!("language {l} is not part of the matrix")))
    };
    for p in pairs {
        let (i, j) = (index(&p.a)?, index(&p.b)?);
        if i == j {
            return Err(Error::Data(format!("pair {}-{} joins a language with itself", p.a, p.b)));
        }
        counts[i][j] += p.count;
        counts[j][i] += p.count;
    }
    Ok(CorpusStats {
        languages: languages.to_vec(),
        counts,
    })
}
