use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::enumerate::{enumerate, fit_decay, GapReport, Scored, SearchConfig, Verdict};
use super::family::{MatrixFamily, Word};
use crate::error::{Error, Result};

/// Thresholds turning a gap table into a verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationConfig {
    pub search: SearchConfig,
    /// Fraction of the longest lengths used by the decay fit.
    pub tail_fraction: f64,
    /// The fitted `log_tau` must lie below `-slope_margin`.
    pub slope_margin: f64,
    /// Upper bound on the fit's RMS residual.
    pub residual_bound: f64,
    /// Per-length slack added to `log_tau` in the envelope check.
    pub margin_slack: f64,
    /// A periodic witness keeps its gap ratio at or above this floor.
    pub ratio_floor: f64,
}

impl Default for DominationConfig {
    fn default() -> Self {
        DominationConfig {
            search: SearchConfig::default(),
            tail_fraction: 0.5,
            slope_margin: 0.01,
            residual_bound: 0.05,
            margin_slack: 0.02,
            ratio_floor: 0.5,
        }
    }
}

/// Minimum over `k` with `|w| k <= max_len` of `log gap(w^k)`, stopping early
/// once it drops below `floor`.
fn power_floor(family: &MatrixFamily, seed: &Scored, i: usize, max_len: usize, floor: f64) -> Result<f64> {
    let mut acc = seed.acc.clone();
    let mut worst = seed.log_gap;
    let len = seed.word.len();
    let mut total = len;
    while total + len <= max_len && worst >= floor {
        for &k in seed.word.iter().rev() {
            acc.left_multiply(family.matrix(k))?;
        }
        total += len;
        worst = worst.min(acc.svd()?.log_gap(i));
    }
    Ok(worst)
}

/// Whether `word` keeps `gap(word^k) >= ratio_floor` for every `k` with `|word| k <= max_len`.
pub fn periodic_witness_floor(
    family: &MatrixFamily,
    word: &Word,
    i: usize,
    max_len: usize,
) -> Result<f64> {
    let acc = word.product(family)?;
    let log_gap = acc.svd()?.log_gap(i);
    let seed = Scored {
        log_gap,
        word: word.letters().to_vec(),
        acc,
    };
    power_floor(family, &seed, i, max_len, f64::NEG_INFINITY)
}

/// Decide domination of index `i` from the worst gap ratios of word products.
pub fn is_dominated(family: &MatrixFamily, i: usize, cfg: &DominationConfig) -> Result<GapReport> {
    let search = &cfg.search;
    let run = enumerate(family, i, search)?;
    let floor = cfg.ratio_floor.ln();

    // Shortest words first, then worst ratio; the first surviving candidate wins.
    for level in run.worst.iter().take(search.max_len / 2) {
        for cand in level.iter().filter(|s| s.log_gap >= floor) {
            let min = power_floor(family, cand, i, search.max_len, floor)?;
            if min >= floor {
                let witness = Word::from_indices(cand.word.clone());
                let mut report = fit_decay(&run.report, cfg.tail_fraction)?;
                report.verdict = Some(Verdict::NotDominated {
                    witness_labels: witness.labels(family),
                    witness,
                    min_log_ratio: min,
                });
                return Ok(report);
            }
        }
    }

    let mut report = fit_decay(&run.report, cfg.tail_fraction)?;
    let fit = report.fit.clone().expect("fit just computed");
    let verdict = if fit.log_tau >= -cfg.slope_margin {
        Verdict::Inconclusive {
            reason: format!(
                "fitted log tau {:.4} is not below -{} and no periodic witness was found",
                fit.log_tau, cfg.slope_margin
            ),
        }
    } else if fit.residual >= cfg.residual_bound {
        Verdict::Inconclusive {
            reason: format!(
                "decay fit residual {:.4} exceeds {}",
                fit.residual, cfg.residual_bound
            ),
        }
    } else if let Some(s) = report.per_length.iter().find(|s| {
        s.max_log_ratio > fit.log_c + s.n as f64 * (fit.log_tau + cfg.margin_slack)
    }) {
        Verdict::Inconclusive {
            reason: format!(
                "length {} has log ratio {:.4} above the fitted envelope",
                s.n, s.max_log_ratio
            ),
        }
    } else {
        Verdict::Dominated
    };
    report.verdict = Some(verdict);
    Ok(report)
}

/// Per-step log growth rates of the singular values of `product(word)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponents: Vec<f64>,
    pub word_length: usize,
}

pub fn lyapunov_estimates(family: &MatrixFamily, word: &Word) -> Result<LyapunovEstimate> {
    let n = word.len() as f64;
    let svd = word.product(family)?.svd()?;
    Ok(LyapunovEstimate {
        exponents: svd.log_values.iter().map(|v| v / n).collect(),
        word_length: word.len(),
    })
}

/// `(1/N) log(|P f| / |P e|)` for `P = product(word)`.
pub fn birkhoff_gap(
    family: &MatrixFamily,
    word: &Word,
    e: &DVector<f64>,
    f: &DVector<f64>,
) -> Result<f64> {
    let push = |v: &DVector<f64>| -> Result<f64> {
        let n = v.norm();
        if n == 0.0 || v.len() != family.dim() {
            return Err(Error::arg("vectors must be non-zero and match the family dimension"));
        }
        let mut x = v / n;
        let mut log = 0.0;
        for &k in word.letters().iter().rev() {
            x = family.matrix(k).as_matrix() * x;
            let s = x.norm();
            log += s.ln();
            x /= s;
        }
        Ok(log)
    };
    let lf = push(f)? + f.norm().ln();
    let le = push(e)? + e.norm().ln();
    Ok((lf - le) / word.len() as f64)
}
