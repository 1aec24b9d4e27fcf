use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{MatrixFamily, Word};
use crate::error::{Error, Result};
use crate::product::ProductAccumulator;

/// Limits of the word search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Longest word length examined.
    pub max_len: usize,
    /// Lengths with at most this many words are enumerated exhaustively.
    pub budget: u64,
    /// Words kept per length once exhaustive enumeration stops.
    pub beam_width: usize,
    /// Worst words remembered per length as periodic-witness candidates.
    pub witnesses_per_length: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_len: 24,
            budget: 1_000_000,
            beam_width: 1024,
            witnesses_per_length: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStat {
    #[serde(rename = "N")]
    pub n: usize,
    pub max_log_ratio: f64,
    pub words_examined: u64,
    pub exact: bool,
}

/// Decay line `log_c + N log_tau`: least-squares slope over the tail, with
/// the intercept raised until the line bounds every fitted point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub log_c: f64,
    pub log_tau: f64,
    /// Root-mean-square of the least-squares deviations relative to the
    /// fitted decay `N |log_tau|`.
    pub residual: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Dominated,
    NotDominated {
        witness: Word,
        witness_labels: Vec<String>,
        /// Smallest log gap ratio over the examined powers of the witness.
        min_log_ratio: f64,
    },
    Inconclusive {
        reason: String,
    },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Dominated => "dominated",
            Verdict::NotDominated { .. } => "not_dominated",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub index_i: usize,
    pub per_length: Vec<LengthStat>,
    pub fit: Option<DecayFit>,
    pub verdict: Option<Verdict>,
}

impl GapReport {
    /// Columns `N, max_log_ratio, words_examined, exact`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.per_length {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A scored word with its accumulated product.
#[derive(Clone)]
pub(crate) struct Scored {
    pub log_gap: f64,
    pub word: Vec<usize>,
    pub acc: ProductAccumulator,
}

/// Worst first; ties broken by the word so results never depend on scheduling.
fn worst_first(a: &Scored, b: &Scored) -> Ordering {
    b.log_gap
        .total_cmp(&a.log_gap)
        .then_with(|| a.word.cmp(&b.word))
}

/// Keeps the `cap` worst entries.
struct TopK {
    cap: usize,
    items: Vec<Scored>,
}

impl TopK {
    fn new(cap: usize) -> Self {
        TopK {
            cap,
            items: Vec::new(),
        }
    }

    fn push(&mut self, s: Scored) {
        if self.cap == 0 {
            return;
        }
        self.items.push(s);
        if self.items.len() >= 2 * self.cap.max(8) {
            self.compact();
        }
    }

    fn compact(&mut self) {
        self.items.sort_by(worst_first);
        self.items.truncate(self.cap);
    }

    fn merge(&mut self, other: TopK) {
        self.items.extend(other.items);
        self.compact();
    }

    fn finish(mut self) -> Vec<Scored> {
        self.compact();
        self.items
    }
}

struct Level {
    max: f64,
    count: u64,
    worst: TopK,
}

struct Partial {
    levels: Vec<Level>,
    seeds: TopK,
}

impl Partial {
    fn new(depth: usize, witnesses: usize, beam: usize) -> Self {
        Partial {
            levels: (0..depth)
                .map(|_| Level {
                    max: f64::NEG_INFINITY,
                    count: 0,
                    worst: TopK::new(witnesses),
                })
                .collect(),
            seeds: TopK::new(beam),
        }
    }

    fn merge(&mut self, other: Partial) {
        for (a, b) in self.levels.iter_mut().zip(other.levels) {
            a.max = a.max.max(b.max);
            a.count += b.count;
            a.worst.merge(b.worst);
        }
        self.seeds.merge(other.seeds);
    }
}

/// Search output: the per-length table plus the worst words of each length.
pub(crate) struct Enumeration {
    pub report: GapReport,
    pub worst: Vec<Vec<Scored>>,
}

fn score(acc: &ProductAccumulator, i: usize) -> Result<f64> {
    Ok(acc.svd()?.log_gap(i))
}

fn extend(
    family: &MatrixFamily,
    parent: &ProductAccumulator,
    word: &[usize],
    letter: usize,
    i: usize,
) -> Result<Scored> {
    let mut acc = parent.clone();
    acc.left_multiply(family.matrix(letter))
        .map_err(|e| e.labeled(family.label(letter)))?;
    let mut w = Vec::with_capacity(word.len() + 1);
    w.push(letter);
    w.extend_from_slice(word);
    let log_gap = score(&acc, i).map_err(|e| e.labeled(family.label(letter)))?;
    Ok(Scored { log_gap, word: w, acc })
}

fn explore(
    family: &MatrixFamily,
    i: usize,
    node: Scored,
    depth: usize,
    exact_depth: usize,
    out: &mut Partial,
) -> Result<()> {
    let level = &mut out.levels[depth - 1];
    level.max = level.max.max(node.log_gap);
    level.count += 1;
    if depth == exact_depth {
        level.worst.push(node.clone());
        out.seeds.push(node);
        return Ok(());
    }
    for letter in 0..family.len() {
        let child = extend(family, &node.acc, &node.word, letter, i)?;
        explore(family, i, child, depth + 1, exact_depth, out)?;
    }
    out.levels[depth - 1].worst.push(node);
    Ok(())
}

pub(crate) fn enumerate(family: &MatrixFamily, i: usize, cfg: &SearchConfig) -> Result<Enumeration> {
    let d = family.dim();
    if i == 0 || i >= d {
        return Err(Error::arg(format!("index {i} outside 1..{}", d.saturating_sub(1))));
    }
    if cfg.max_len < 2 {
        return Err(Error::arg("max_len must be at least 2"));
    }
    let letters = family.len() as u64;
    if cfg.budget < letters {
        return Err(Error::arg(format!(
            "budget {} is below the alphabet size {letters}",
            cfg.budget
        )));
    }
    if cfg.beam_width == 0 {
        return Err(Error::arg("beam width must be positive"));
    }
    let mut exact_depth = 1;
    let mut words = letters;
    while exact_depth < cfg.max_len {
        match words.checked_mul(letters) {
            Some(next) if next <= cfg.budget => {
                words = next;
                exact_depth += 1;
            }
            _ => break,
        }
    }

    let root = ProductAccumulator::identity(d);
    let partials: Vec<Partial> = (0..family.len())
        .into_par_iter()
        .map(|letter| {
            let mut part = Partial::new(exact_depth, cfg.witnesses_per_length, cfg.beam_width);
            let node = extend(family, &root, &[], letter, i)?;
            explore(family, i, node, 1, exact_depth, &mut part)?;
            Ok(part)
        })
        .collect::<Result<_>>()?;
    let mut total = Partial::new(exact_depth, cfg.witnesses_per_length, cfg.beam_width);
    for p in partials {
        total.merge(p);
    }

    let mut per_length = Vec::with_capacity(cfg.max_len);
    let mut worst = Vec::with_capacity(cfg.max_len);
    for (k, level) in total.levels.into_iter().enumerate() {
        per_length.push(LengthStat {
            n: k + 1,
            max_log_ratio: level.max,
            words_examined: level.count,
            exact: true,
        });
        worst.push(level.worst.finish());
    }

    let mut beam = total.seeds.finish();
    for n in exact_depth + 1..=cfg.max_len {
        let mut candidates: Vec<Scored> = beam
            .par_iter()
            .flat_map_iter(|s| (0..family.len()).map(move |letter| (s, letter)))
            .map(|(s, letter)| extend(family, &s.acc, &s.word, letter, i))
            .collect::<Result<_>>()?;
        let examined = candidates.len() as u64;
        candidates.sort_by(worst_first);
        candidates.truncate(cfg.beam_width);
        per_length.push(LengthStat {
            n,
            max_log_ratio: candidates[0].log_gap,
            words_examined: examined,
            exact: false,
        });
        worst.push(
            candidates
                .iter()
                .take(cfg.witnesses_per_length)
                .cloned()
                .collect(),
        );
        beam = candidates;
    }

    Ok(Enumeration {
        report: GapReport {
            index_i: i,
            per_length,
            fit: None,
            verdict: None,
        },
        worst,
    })
}

/// Per-length maxima of `log(sigma_{i+1}/sigma_i)` over words of length `1..=max_len`.
///
/// Lengths whose word count fits in the budget are exhaustive; beyond that a
/// beam of the worst words is extended one letter at a time.
pub fn enumerate_gaps(family: &MatrixFamily, i: usize, cfg: &SearchConfig) -> Result<GapReport> {
    Ok(enumerate(family, i, cfg)?.report)
}

/// Fit the decay line over the final `tail_fraction` of lengths.
pub fn fit_decay(report: &GapReport, tail_fraction: f64) -> Result<GapReport> {
    let n = report.per_length.len();
    if n < 4 {
        return Err(Error::arg(format!(
            "need at least 4 lengths to fit a decay, got {n}"
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::arg("tail fraction must lie in (0, 1]"));
    }
    let take = ((tail_fraction * n as f64).ceil() as usize).clamp(3, n);
    let pts: Vec<(f64, f64)> = report.per_length[n - take..]
        .iter()
        .map(|s| (s.n as f64, s.max_log_ratio))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let log_tau = sxy / sxx;
    let intercept = my - log_tau * mx;
    let scale = log_tau.abs().max(f64::EPSILON);
    let residual = (pts
        .iter()
        .map(|p| ((p.1 - intercept - log_tau * p.0) / (p.0 * scale)).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    // smallest intercept putting every fitted point on or below the line
    let log_c = pts
        .iter()
        .map(|p| p.1 - log_tau * p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = report.clone();
    out.fit = Some(DecayFit {
        log_c,
        log_tau,
        residual,
        points: pts.len(),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SquareMatrix;
    use std::f64::consts::{LN_2, PI};

    fn cfg(max_len: usize) -> SearchConfig {
        SearchConfig {
            max_len,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn single_diagonal_is_exact_line() {
        let fam = MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[2.0, 1.0])]).unwrap();
        let r = enumerate_gaps(&fam, 1, &cfg(10)).unwrap();
        assert_eq!(r.per_length.len(), 10);
        for s in &r.per_length {
            assert!(s.exact);
            assert!((s.max_log_ratio + s.n as f64 * LN_2).abs() < 1e-12);
        }
        let f = fit_decay(&r, 0.5).unwrap().fit.unwrap();
        assert!((f.log_tau + LN_2).abs() < 1e-9);
        assert!(f.log_c.abs() < 1e-9);
    }

    #[test]
    fn isometries_have_flat_gaps() {
        let fam = MatrixFamily::explicit(vec![SquareMatrix::rotation2(1.0)]).unwrap();
        let r = enumerate_gaps(&fam, 1, &cfg(12)).unwrap();
        assert!(r.per_length.iter().all(|s| s.max_log_ratio.abs() < 1e-12));
        let f = fit_decay(&r, 0.5).unwrap().fit.unwrap();
        assert!(f.log_tau.abs() < 1e-9);
    }

    #[test]
    fn alternating_word_reaches_ratio_one() {
        let fam = MatrixFamily::explicit(vec![
            SquareMatrix::diagonal(&[2.0, 1.0]),
            SquareMatrix::rotation2(PI / 2.0),
        ])
        .unwrap();
        let r = enumerate_gaps(&fam, 1, &cfg(4)).unwrap();
        assert_eq!(r.per_length[3].words_examined, 16);
        assert!(r.per_length[3].max_log_ratio.abs() < 1e-12);
    }

    #[test]
    fn beam_takes_over_past_budget() {
        let fam = MatrixFamily::explicit(vec![
            SquareMatrix::diagonal(&[2.0, 1.0]),
            SquareMatrix::diagonal(&[3.0, 1.0]),
        ])
        .unwrap();
        let c = SearchConfig {
            max_len: 8,
            budget: 16,
            beam_width: 3,
            witnesses_per_length: 2,
        };
        let r = enumerate_gaps(&fam, 1, &c).unwrap();
        assert!(r.per_length[3].exact && !r.per_length[4].exact);
        assert_eq!(r.per_length[4].words_examined, 6);
        for s in &r.per_length {
            assert!((s.max_log_ratio + s.n as f64 * LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn argument_errors() {
        let fam = MatrixFamily::explicit(vec![
            SquareMatrix::diagonal(&[2.0, 1.0]),
            SquareMatrix::identity(2),
        ])
        .unwrap();
        let mut c = cfg(4);
        c.budget = 1;
        assert!(matches!(enumerate_gaps(&fam, 1, &c), Err(Error::Argument(_))));
        assert!(enumerate_gaps(&fam, 2, &cfg(4)).is_err());
        assert!(enumerate_gaps(&fam, 1, &cfg(1)).is_err());
        let r = enumerate_gaps(&fam, 1, &cfg(3)).unwrap();
        assert!(fit_decay(&r, 0.5).is_err());
    }

    #[test]
    fn csv_columns() {
        let fam = MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[2.0, 1.0])]).unwrap();
        let r = enumerate_gaps(&fam, 1, &cfg(2)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,max_log_ratio,words_examined,exact\n1,"));
    }
}
