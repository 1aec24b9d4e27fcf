//! Finite-window estimates of the invariant splitting `E + F` along an
//! itinerary, and direct checks of the domination inequality.
//!
//! Windows are chronological: `past = (x_{-m}, ..., x_{-1})` and
//! `future = (x_0, ..., x_{n-1})`. The cocycle over a window applies its first
//! letter first, so it equals the word product of the reversed window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{grass_distance, transverse, Plane, TRANSVERSALITY_TOL};
use crate::linalg::principal_angles;
use crate::product::{ProductAccumulator, ProductSvd};
use crate::words::{MatrixFamily, Word};

const DEGENERATE_GAP: f64 = 1e-12;
/// A pushed stable plane is replaced by its window re-estimate when the two
/// agree to this distance.
const SNAP_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingEstimate {
    pub e: Plane,
    pub f: Plane,
    pub window_past: Word,
    pub window_future: Word,
    /// Smallest principal angle between `e` and `f`.
    pub angle: f64,
    /// Largest distance to the estimates from windows one letter shorter;
    /// absent when a window has a single letter.
    pub convergence_indicator: Option<f64>,
}

/// Cocycle over chronological `letters`: the last letter is applied last.
pub fn cocycle(family: &MatrixFamily, letters: &[usize]) -> Result<ProductAccumulator> {
    let mut acc = ProductAccumulator::identity(family.dim());
    for &k in letters {
        acc.left_multiply(family.matrix(k))
            .map_err(|e| e.labeled(family.label(k)))?;
    }
    Ok(acc)
}

fn checked_svd(family: &MatrixFamily, letters: &[usize], i: usize, which: &str) -> Result<ProductSvd> {
    let svd = cocycle(family, letters)?.svd()?;
    if svd.log_gap(i) >= (1.0 - DEGENERATE_GAP).ln() {
        return Err(Error::IllDefinedSplitting(format!(
            "{which} window has sigma_{} = sigma_{} to relative precision",
            i,
            i + 1
        )));
    }
    Ok(svd)
}

/// Least expanded `(d - i)`-plane of the cocycle over `future`.
pub fn stable_plane(family: &MatrixFamily, future: &[usize], i: usize) -> Result<Plane> {
    let d = family.dim();
    let svd = checked_svd(family, future, i, "future")?;
    Ok(Plane::from_orthonormal(svd.bottom_right(d - i)))
}

/// Most expanded `i`-plane of the cocycle over `past`.
pub fn unstable_plane(family: &MatrixFamily, past: &[usize], i: usize) -> Result<Plane> {
    let svd = checked_svd(family, past, i, "past")?;
    Ok(Plane::from_orthonormal(svd.top_left(i)))
}

pub fn splitting_from_window(
    family: &MatrixFamily,
    past: &Word,
    future: &Word,
    i: usize,
) -> Result<SplittingEstimate> {
    let d = family.dim();
    if i == 0 || i >= d {
        return Err(Error::arg(format!("index {i} outside 1..{}", d - 1)));
    }
    if past.is_empty() || future.is_empty() {
        return Err(Error::arg("splitting windows must be non-empty"));
    }
    let e = unstable_plane(family, past.letters(), i)?;
    let f = stable_plane(family, future.letters(), i)?;
    let t = transverse(&e, &f)?;
    if !t.transverse {
        return Err(Error::IllDefinedSplitting(format!(
            "estimated planes are not transverse (margin {:e})",
            t.margin
        )));
    }
    let angle = principal_angles(&e, &f)[0];
    let convergence_indicator = if past.len() > 1 && future.len() > 1 {
        let e_short = unstable_plane(family, &past.letters()[1..], i)?;
        let f_short = stable_plane(family, &future.letters()[..future.len() - 1], i)?;
        Some(grass_distance(&e, &e_short)?.max(grass_distance(&f, &f_short)?))
    } else {
        None
    };
    Ok(SplittingEstimate {
        e,
        f,
        window_past: past.clone(),
        window_future: future.clone(),
        angle,
        convergence_indicator,
    })
}

/// Shortest window length, capped at `cap`, whose cocycle gap ratio along
/// `letters` falls below `1e-8`.
pub fn saturating_window(family: &MatrixFamily, letters: &[usize], i: usize, cap: usize) -> Result<usize> {
    let mut acc = ProductAccumulator::identity(family.dim());
    let target = 1e-8f64.ln();
    for (n, &k) in letters.iter().take(cap).enumerate() {
        acc.left_multiply(family.matrix(k))?;
        if acc.svd()?.log_gap(i) < target {
            return Ok(n + 1);
        }
    }
    Ok(letters.len().min(cap))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// The fitted slope of `log ratio` must lie below `-slope_margin`.
    pub slope_margin: f64,
    /// Allowed excursion, in nats, of `log ratio` above the fitted line when
    /// `E` and `F` stay orthogonal; smaller angles add `2 ln(1 / sin angle)`.
    pub line_margin: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            slope_margin: 0.01,
            line_margin: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationCheck {
    /// `log(|A^n restricted to F| / m(A^n restricted to E))` for `n = 0..=N`.
    pub log_ratio_curve: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Largest excursion of the curve above the fitted line.
    pub excursion: f64,
    /// Smallest angle between the pushed planes along the word.
    pub min_angle: f64,
    /// Excursion bound `line_margin + 2 ln(1 / sin min_angle)`.
    pub allowance: f64,
    pub passes: bool,
}

impl DominationCheck {
    pub fn ratio_curve(&self) -> Vec<f64> {
        self.log_ratio_curve.iter().map(|x| x.exp()).collect()
    }
}

/// Restricted block of `m` from `frame` to the orthonormalized image frame.
fn push(m: &nalgebra::DMatrix<f64>, frame: &Plane) -> Result<(Plane, nalgebra::DMatrix<f64>)> {
    let image = m * frame.frame();
    let next = Plane::from_spanning(image.clone())?;
    let block = next.frame().transpose() * image;
    Ok((next, block))
}

/// Check `|A^n|F| / m(A^n|E) < C tau^n` along `word`, which starts at the
/// estimate's base point.
pub fn verify_domination(
    family: &MatrixFamily,
    est: &SplittingEstimate,
    word: &Word,
    cfg: &VerifyConfig,
) -> Result<DominationCheck> {
    let i = est.e.dim();
    let d = family.dim();
    let letters = word.letters();
    let mut e = est.e.clone();
    let mut f = est.f.clone();
    let mut on_e = ProductAccumulator::identity(i);
    let mut on_f = ProductAccumulator::identity(d - i);
    let mut curve = vec![0.0];
    let mut min_angle = principal_angles(&e, &f)[0];
    for (k, &letter) in letters.iter().enumerate() {
        let m = family.matrix(letter).as_matrix();
        let (e_next, ce) = push(m, &e)?;
        let (mut f_next, bf) = push(m, &f)?;
        on_e.left_multiply_raw(&ce)?;
        on_f.left_multiply_raw(&bf)?;
        if k + 1 < letters.len() {
            if let Ok(refit) = stable_plane(family, &letters[k + 1..], i) {
                if grass_distance(&refit, &f_next)? <= SNAP_TOL {
                    f_next = refit;
                }
            }
        }
        let se = on_e.svd()?;
        let sf = on_f.svd()?;
        curve.push(sf.log_values[0] - se.log_values[i - 1]);
        e = e_next;
        f = f_next;
        min_angle = min_angle.min(principal_angles(&e, &f)[0]);
    }
    let n = curve.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = curve.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (k, y) in curve.iter().enumerate() {
        sxx += (k as f64 - mx).powi(2);
        sxy += (k as f64 - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let excursion = curve
        .iter()
        .enumerate()
        .map(|(k, y)| y - intercept - slope * k as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let allowance = cfg.line_margin - 2.0 * min_angle.sin().ln();
    let passes = slope < -cfg.slope_margin && excursion <= allowance;
    Ok(DominationCheck {
        log_ratio_curve: curve,
        slope,
        intercept,
        excursion,
        min_angle,
        allowance,
        passes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleStep {
    pub n: usize,
    /// `sin` of the distance between consecutive stable estimates.
    pub lhs: f64,
    pub rhs: f64,
    /// Set when the gap is degenerate at `n` and the entry carries no bound.
    pub skipped: bool,
}

/// Consecutive stable-plane estimates along `word` against the bound
/// `max |M| sigma_{i+1}(A^n) / sigma_i(A^{n+1})`.
pub fn angle_decay_check(family: &MatrixFamily, word: &Word, i: usize) -> Result<Vec<AngleStep>> {
    let d = family.dim();
    if word.len() < 2 {
        return Err(Error::arg("angle checks need words of length at least 2"));
    }
    if i == 0 || i >= d {
        return Err(Error::arg(format!("index {i} outside 1..{}", d - 1)));
    }
    let norm = family.max_norm()?;
    let mut acc = ProductAccumulator::identity(d);
    let mut svds = Vec::with_capacity(word.len());
    for &k in word.letters() {
        acc.left_multiply(family.matrix(k))?;
        svds.push(acc.svd()?);
    }
    let degenerate = |s: &ProductSvd| s.log_gap(i) >= (1.0 - DEGENERATE_GAP).ln();
    let mut out = Vec::with_capacity(word.len() - 1);
    for n in 1..word.len() {
        let (a, b) = (&svds[n - 1], &svds[n]);
        if degenerate(a) || degenerate(b) {
            out.push(AngleStep {
                n,
                lhs: f64::NAN,
                rhs: f64::NAN,
                skipped: true,
            });
            continue;
        }
        let s_n = Plane::from_orthonormal(a.bottom_right(d - i));
        let s_next = Plane::from_orthonormal(b.bottom_right(d - i));
        let lhs = grass_distance(&s_n, &s_next)?.sin();
        let rhs = norm * (a.log_values[i] - b.log_values[i - 1]).exp();
        out.push(AngleStep {
            n,
            lhs,
            rhs,
            skipped: false,
        });
    }
    Ok(out)
}

/// Whether `e` and `f` are complementary and transverse.
pub fn is_transverse_pair(e: &Plane, f: &Plane) -> bool {
    transverse(e, f).is_ok_and(|t| t.margin > TRANSVERSALITY_TOL)
}
