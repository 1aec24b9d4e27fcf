//! Invariant multicones: cone iteration, attractor sampling, the adapted
//! metric, epsilon-neighborhood construction and semiconvexity audits.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian, singular_values};
use crate::grassmann::{
    act, largest_angle, line_trace, projectivize, transverse, ConeSample, LineTrace, Plane,
    ProjectiveLine,
};
use crate::product::ProductAccumulator;
use crate::words::{is_dominated, DominationConfig, FamilySource, MatrixFamily, Verdict};

/// Nearest-neighbor lookup in a Grassmannian point set.
///
/// Points are sorted by a fixed linear functional of their projector; since
/// `|<P_E - P_F, K>| <= |P_E - P_F|_F <= sqrt(2k) sin(angle)` with
/// `k = min(i, d - i)`, the scan stops once the key gap rules out improvement.
pub struct PlaneIndex {
    points: Vec<Plane>,
    keys: Vec<f64>,
    order: Vec<usize>,
    weight: DMatrix<f64>,
    bound: f64,
}

fn key_weight(d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b65_7973);
    let mut k = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    k = &k + k.transpose();
    let n = k.norm();
    k / n
}

impl PlaneIndex {
    pub fn new(ambient_dim: usize, grass_index: usize) -> Self {
        PlaneIndex {
            points: Vec::new(),
            keys: Vec::new(),
            order: Vec::new(),
            weight: key_weight(ambient_dim),
            bound: (2.0 * grass_index.min(ambient_dim - grass_index).max(1) as f64).sqrt(),
        }
    }

    pub fn from_points(points: &[Plane]) -> Self {
        let first = &points[0];
        let mut idx = PlaneIndex::new(first.ambient_dim(), first.dim());
        for p in points {
            idx.insert(p.clone());
        }
        idx
    }

    fn key(&self, p: &Plane) -> f64 {
        p.canonical().dot(&self.weight)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Plane] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Plane> {
        self.points
    }

    pub fn insert(&mut self, p: Plane) {
        let k = self.key(&p);
        let pos = self.order.partition_point(|&j| self.keys[j] < k);
        self.order.insert(pos, self.points.len());
        self.keys.push(k);
        self.points.push(p);
    }

    /// Index and distance of the closest point.
    pub fn nearest(&self, e: &Plane) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let k = self.key(e);
        let start = self.order.partition_point(|&j| self.keys[j] < k);
        let mut best = (usize::MAX, f64::INFINITY);
        let consider = |j: usize, best: &mut (usize, f64)| {
            let dist = largest_angle(&self.points[j], e);
            if dist < best.1 || (dist == best.1 && j < best.0) {
                *best = (j, dist);
            }
        };
        let (mut lo, mut hi) = (start, start);
        let n = self.order.len();
        loop {
            let reach = if best.1 >= PI / 2.0 {
                f64::INFINITY
            } else {
                self.bound * best.1.sin()
            };
            let up = hi < n && (self.keys[self.order[hi]] - k) <= reach;
            let down = lo > 0 && (k - self.keys[self.order[lo - 1]]) <= reach;
            if !up && !down {
                break;
            }
            if up {
                consider(self.order[hi], &mut best);
                hi += 1;
            }
            if down {
                lo -= 1;
                consider(self.order[lo], &mut best);
            }
        }
        Some(best)
    }
}

/// Greedy thinning: keep a point unless it lies within `tol` of one already kept.
pub fn thin(points: Vec<Plane>, tol: f64) -> Vec<Plane> {
    let Some(first) = points.first() else {
        return points;
    };
    let mut idx = PlaneIndex::new(first.ambient_dim(), first.dim());
    for p in points {
        let keep = idx.nearest(&p).is_none_or(|(_, dist)| dist > tol);
        if keep {
            idx.insert(p);
        }
    }
    idx.into_points()
}

fn check_dims(family: &MatrixFamily, c: &ConeSample) -> Result<()> {
    if let Some(d) = c.ambient_dim() {
        if d != family.dim() {
            return Err(Error::arg(format!(
                "cone lives in R^{d} but the family acts on R^{}",
                family.dim()
            )));
        }
    }
    Ok(())
}

/// `{ act(M, E) }` over members (outer) and points (inner), thinned at
/// `dedup_tol`; a negative tolerance keeps every image.
pub fn iterate_cone(family: &MatrixFamily, c: &ConeSample, dedup_tol: f64) -> Result<ConeSample> {
    check_dims(family, c)?;
    let images: Vec<Plane> = family
        .matrices()
        .flat_map(|m| c.points.iter().map(move |e| (m, e)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(m, e)| act(m, e))
        .collect::<Result<_>>()?;
    let points = if dedup_tol >= 0.0 {
        thin(images, dedup_tol)
    } else {
        images
    };
    ConeSample::new(c.grass_index, points, 0.0)
}

/// Reference planes used by the full-cover rule.
fn reference_planes(d: usize, i: usize, count: usize, seed: u64) -> Vec<Plane> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let g = DMatrix::from_fn(d, i, |_, _| gaussian(&mut rng));
            if let Ok(p) = Plane::from_spanning(g) {
                break p;
            }
        })
        .collect()
}

const REFERENCE_PLANES: usize = 256;
const REFERENCE_SEED: u64 = 0x0063_6f76_6572;

/// One-step image of the closed ball of radius `eps` around a sample point `E`
/// under a member `M`.
///
/// In orthonormal bases `(E, E^perp) -> (ME, (ME)^perp)` the member is block
/// upper triangular `[[A, B], [0, D]]`. A plane at distance `eps` from `E` is
/// the graph of some `L: E -> E^perp` with `|L| = tan(eps)`, and its image is
/// the graph of `D L (A + B L)^{-1}` over `ME`; to first order in `L` the
/// image ball has `tan(radius) = |D| |A^{-1}| tan(eps)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct BallImage {
    /// Distance from `act(M, E)` to the nearest sample point.
    nearest: f64,
    /// `|D| / m(A)`.
    stretch: f64,
}

impl BallImage {
    fn compute(m: &DMatrix<f64>, e: &Plane, e_perp: &Plane, nearest: f64) -> Result<Self> {
        let image = Plane::from_spanning(m * e.frame())?;
        let image_perp = image.complement();
        let on_e = image.frame().transpose() * (m * e.frame());
        let on_perp = image_perp.frame().transpose() * (m * e_perp.frame());
        let conorm = *singular_values(&on_e)?.last().expect("non-empty");
        Ok(BallImage {
            nearest,
            stretch: singular_values(&on_perp)?[0] / conorm,
        })
    }

    fn radius(&self, eps: f64) -> f64 {
        if eps >= PI / 2.0 {
            return PI / 2.0;
        }
        (self.stretch * eps.tan()).atan()
    }
}

/// Geometry of a point set under a family; radius-dependent quantities are
/// evaluated on demand.
#[derive(Clone, Debug)]
pub struct InvarianceProfile {
    images: Vec<BallImage>,
    /// Largest distance from an image `act(M, E)` to the nearest sample point.
    pub max_image_distance: f64,
    /// Largest action discrepancy between adjacent samples of a sampled curve.
    pub spread: f64,
    /// Largest distance from a reference plane to the sample; a radius at or
    /// above it covers the whole sampled Grassmannian.
    pub cover_radius: f64,
}

/// An [`InvarianceProfile`] evaluated at one radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceSummary {
    pub radius: f64,
    pub max_image_distance: f64,
    /// Largest distance from a sample point to the images of the radius ball
    /// around any sample point.
    pub image_reach: f64,
    pub spread: f64,
    pub cover_radius: f64,
    /// `radius - image_reach - spread`.
    pub margin: f64,
}

impl InvarianceProfile {
    pub fn compute(family: &MatrixFamily, points: &[Plane]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::arg("invariance needs a non-empty cone"))?;
        if first.ambient_dim() != family.dim() {
            return Err(Error::arg("cone and family dimensions differ"));
        }
        let idx = PlaneIndex::from_points(points);
        let perps: Vec<Plane> = points.par_iter().map(Plane::complement).collect();
        let pairs: Vec<(usize, usize)> = (0..family.len())
            .flat_map(|m| (0..points.len()).map(move |e| (m, e)))
            .collect();
        let images = pairs
            .par_iter()
            .map(|&(m, e)| {
                let mat = family.matrix(m);
                let img = act(mat, &points[e])?;
                let nearest = idx.nearest(&img).map_or(f64::INFINITY, |(_, dist)| dist);
                BallImage::compute(mat.as_matrix(), &points[e], &perps[e], nearest)
            })
            .collect::<Result<Vec<BallImage>>>()?;
        let max_image_distance = images.iter().map(|b| b.nearest).fold(0.0, f64::max);
        let spread = match family.source() {
            FamilySource::SampledCurve { .. } if family.len() > 1 => (0..family.len() - 1)
                .into_par_iter()
                .map(|k| {
                    points.iter().try_fold(0.0_f64, |acc, e| {
                        let a = act(family.matrix(k), e)?;
                        let b = act(family.matrix(k + 1), e)?;
                        Ok(acc.max(largest_angle(&a, &b)))
                    })
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max),
            _ => 0.0,
        };
        let cover_radius = reference_planes(
            first.ambient_dim(),
            first.dim(),
            REFERENCE_PLANES,
            REFERENCE_SEED,
        )
        .iter()
        .map(|r| idx.nearest(r).map_or(f64::INFINITY, |(_, dist)| dist))
        .fold(0.0, f64::max);
        Ok(InvarianceProfile {
            images,
            max_image_distance,
            spread,
            cover_radius,
        })
    }

    /// Largest distance from the sample to an image of a closed `radius` ball.
    pub fn image_reach(&self, radius: f64) -> f64 {
        self.images
            .iter()
            .map(|b| b.nearest + b.radius(radius))
            .fold(0.0, f64::max)
    }

    pub fn margin(&self, radius: f64) -> f64 {
        radius - self.image_reach(radius) - self.spread
    }

    pub fn check(&self, radius: f64) -> InvarianceCheck {
        let full_cover = radius >= self.cover_radius;
        let margin = self.margin(radius);
        InvarianceCheck {
            invariant: margin > 0.0 && !full_cover,
            margin,
            full_cover,
        }
    }

    pub fn summary(&self, radius: f64) -> InvarianceSummary {
        let image_reach = self.image_reach(radius);
        InvarianceSummary {
            radius,
            max_image_distance: self.max_image_distance,
            image_reach,
            spread: self.spread,
            cover_radius: self.cover_radius,
            margin: radius - image_reach - self.spread,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub invariant: bool,
    pub margin: f64,
    /// The sample covers every reference plane, so no transverse plane remains.
    pub full_cover: bool,
}

/// Strict invariance of `c` under the family, with a numeric margin.
pub fn strictly_invariant(family: &MatrixFamily, c: &ConeSample) -> Result<InvarianceCheck> {
    check_dims(family, c)?;
    Ok(InvarianceProfile::compute(family, &c.points)?.check(c.radius))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractorConfig {
    /// Length of every sampled word.
    pub word_len: usize,
    /// Prefixes of length `p` are enumerated exhaustively for the largest `p`
    /// with `|family|^p <= max_prefixes` (at least 1).
    pub max_prefixes: usize,
    /// Random completions drawn per prefix.
    pub tails_per_prefix: usize,
    pub seed: u64,
    /// Sample points closer than this are merged.
    pub dedup_tol: f64,
    /// Products whose gap ratio exceeds `1 - gap_tol` are skipped with a warning.
    pub gap_tol: f64,
}

impl Default for AttractorConfig {
    fn default() -> Self {
        AttractorConfig {
            word_len: 40,
            max_prefixes: 4096,
            tails_per_prefix: 1,
            seed: 1,
            dedup_tol: 2e-3,
            gap_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attractor {
    pub cone: ConeSample,
    pub words_sampled: usize,
    pub warnings: Vec<String>,
}

/// Most expanded `i`-planes of sampled long products, approximating the
/// unstable attractor. The stable one is obtained from the inverse family
/// with index `d - i`.
pub fn attractor(family: &MatrixFamily, i: usize, cfg: &AttractorConfig) -> Result<Attractor> {
    let d = family.dim();
    if i == 0 || i >= d {
        return Err(Error::arg(format!("index {i} outside 1..{}", d - 1)));
    }
    if cfg.word_len == 0 {
        return Err(Error::arg("attractor words need at least one letter"));
    }
    let letters = family.len();
    let mut p = 1;
    while p < cfg.word_len && letters.pow(p as u32 + 1) <= cfg.max_prefixes {
        p += 1;
    }
    let prefixes = letters.pow(p as u32);
    let tails = cfg.tails_per_prefix.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words: Vec<Vec<usize>> = (0..prefixes * tails)
        .map(|n| {
            let mut code = n / tails;
            let mut w = vec![0; cfg.word_len];
            for slot in w.iter_mut().take(p).rev() {
                *slot = code % letters;
                code /= letters;
            }
            for slot in w.iter_mut().skip(p) {
                *slot = rng.random_range(0..letters);
            }
            w
        })
        .collect();
    let frames: Vec<std::result::Result<Plane, String>> = words
        .par_iter()
        .map(|w| {
            let mut acc = ProductAccumulator::identity(d);
            for &k in w.iter().rev() {
                acc.left_multiply(family.matrix(k))?;
            }
            let svd = acc.svd()?;
            if svd.log_gap(i) >= (1.0 - cfg.gap_tol).ln() {
                return Ok(Err(format!(
                    "singular directions ill-defined for word starting {:?}",
                    &w[..p]
                )));
            }
            Ok(Ok(Plane::from_orthonormal(svd.top_left(i))))
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let mut planes = Vec::with_capacity(frames.len());
    for f in frames {
        match f {
            Ok(p) => planes.push(p),
            Err(w) => warnings.push(w),
        }
    }
    if planes.is_empty() {
        return Err(Error::Construction {
            reason: "every sampled product has a degenerate gap".into(),
            table: Vec::new(),
        });
    }
    Ok(Attractor {
        cone: ConeSample::new(i, thin(planes, cfg.dedup_tol), 0.0)?,
        words_sampled: words.len(),
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedMetric {
    pub value: f64,
    /// `d_n` for `n = 0..=n_trunc`.
    pub terms: Vec<f64>,
    /// Final term, a truncation indicator.
    pub last_term: f64,
}

/// `sum_{n <= n_trunc} max_{|w| = n} d(A_w E, A_w F)`, the supremum over words
/// of each length taken over a beam of the `beam` most distant image pairs.
pub fn adapted_metric(
    family: &MatrixFamily,
    e: &Plane,
    f: &Plane,
    n_trunc: usize,
    stable: &ConeSample,
    beam: usize,
) -> Result<AdaptedMetric> {
    if e.dim() != f.dim() || e.ambient_dim() != family.dim() || f.ambient_dim() != family.dim() {
        return Err(Error::arg("planes must share dimension with each other and the family"));
    }
    for s in &stable.points {
        for p in [e, f] {
            let t = transverse(p, s)?;
            if !t.transverse {
                return Err(Error::arg(format!(
                    "plane is not transverse to the stable sample (margin {:e})",
                    t.margin
                )));
            }
        }
    }
    let beam = beam.max(1);
    let mut level = vec![(largest_angle(e, f), e.clone(), f.clone())];
    let mut terms = vec![level[0].0];
    for _ in 0..n_trunc {
        let mut next: Vec<(f64, Plane, Plane)> = level
            .par_iter()
            .flat_map_iter(|(_, a, b)| family.matrices().map(move |m| (m, a, b)))
            .map(|(m, a, b)| {
                let ia = act(m, a)?;
                let ib = act(m, b)?;
                Ok((largest_angle(&ia, &ib), ia, ib))
            })
            .collect::<Result<_>>()?;
        next.sort_by(|x, y| y.0.total_cmp(&x.0));
        next.truncate(beam);
        terms.push(next[0].0);
        level = next;
    }
    Ok(AdaptedMetric {
        value: terms.iter().sum(),
        last_term: *terms.last().unwrap(),
        terms,
    })
}

/// How the domination precondition of a multicone construction is met.
#[derive(Clone, Debug)]
pub enum Gate {
    /// Run the word-product detector first.
    Check(DominationConfig),
    /// Use a verdict computed elsewhere.
    Verdict(Verdict),
    /// Skip the precondition.
    Override,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticoneConfig {
    pub attractor: AttractorConfig,
    pub eps_min: f64,
    pub eps_max: f64,
    /// Ratio between consecutive radii of the scan.
    pub eps_ratio: f64,
    /// Component counts must agree on `[eps, plateau_factor * eps]`.
    pub plateau_factor: f64,
}

impl Default for MulticoneConfig {
    fn default() -> Self {
        MulticoneConfig {
            attractor: AttractorConfig::default(),
            eps_min: 1e-4,
            eps_max: 1.0,
            eps_ratio: 2f64.powf(0.125),
            plateau_factor: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub eps: f64,
    pub components: usize,
    pub plateau: bool,
    pub margin: f64,
    pub full_cover: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multicone {
    pub cone: ConeSample,
    /// Indices into `cone.points`, one group per component.
    pub components: Vec<Vec<usize>>,
    pub invariance_margin: f64,
    /// Smallest distance between points of different components minus twice
    /// the radius; absent for a single component.
    pub component_gap: Option<f64>,
    pub profile: InvarianceSummary,
    pub scan: Vec<EpsilonRow>,
    pub attractor_warnings: Vec<String>,
}

impl Multicone {
    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn component_sample(&self, k: usize) -> ConeSample {
        ConeSample {
            grass_index: self.cone.grass_index,
            points: self.components[k]
                .iter()
                .map(|&j| self.cone.points[j].clone())
                .collect(),
            radius: self.cone.radius,
        }
    }

    /// Component whose neighborhood contains `e`, if any.
    pub fn component_of(&self, e: &Plane) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, comp) in self.components.iter().enumerate() {
            for &j in comp {
                let dist = largest_angle(&self.cone.points[j], e);
                if best.is_none_or(|(_, b)| dist < b) {
                    best = Some((k, dist));
                }
            }
        }
        best.filter(|&(_, dist)| dist <= self.cone.radius).map(|(k, _)| k)
    }

    pub fn contains(&self, e: &Plane) -> bool {
        self.component_of(e).is_some()
    }
}

/// Minimum spanning tree edges `(weight, a, b)` of the complete distance graph.
fn spanning_tree(points: &[Plane]) -> Vec<(f64, usize, usize)> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![(f64::INFINITY, 0usize); n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let updates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&j| !in_tree[j])
            .map(|j| (j, largest_angle(&points[current], &points[j])))
            .collect();
        for (j, dist) in updates {
            if dist < best[j].0 {
                best[j] = (dist, current);
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&a, &b| best[a].0.total_cmp(&best[b].0).then(a.cmp(&b)))
            .expect("vertices remain");
        in_tree[next] = true;
        edges.push((best[next].0, best[next].1, next));
        current = next;
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    edges
}

fn components_at(n: usize, edges: &[(f64, usize, usize)], link: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(w, a, b) in edges {
        if w > link {
            break;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for x in 0..n {
        let r = find(&mut parent, x);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(x);
    }
    groups
}

fn count_at(n: usize, edges: &[(f64, usize, usize)], link: f64) -> usize {
    n - edges.iter().take_while(|e| e.0 <= link).count()
}

/// Build a strictly invariant multicone of index `i` from the unstable
/// attractor and a plateau of the component count over neighborhood radii.
pub fn build_multicone(
    family: &MatrixFamily,
    i: usize,
    cfg: &MulticoneConfig,
    gate: &Gate,
) -> Result<Multicone> {
    let verdict = match gate {
        Gate::Check(dc) => is_dominated(family, i, dc)?.verdict,
        Gate::Verdict(v) => Some(v.clone()),
        Gate::Override => None,
    };
    if let Some(v) = &verdict {
        if *v != Verdict::Dominated {
            return Err(Error::Construction {
                reason: format!("family is not certified dominated (verdict {})", v.name()),
                table: Vec::new(),
            });
        }
    }
    if !(cfg.eps_ratio > 1.0 && cfg.eps_min > 0.0 && cfg.eps_max >= cfg.eps_min) {
        return Err(Error::arg("radius scan needs 0 < eps_min <= eps_max and ratio > 1"));
    }
    let att = attractor(family, i, &cfg.attractor)?;
    let points = att.cone.points;
    let n = points.len();
    let profile = InvarianceProfile::compute(family, &points)?;
    let edges = spanning_tree(&points);

    let mut scan = Vec::new();
    let mut eps = cfg.eps_min;
    let mut chosen = None;
    while eps <= cfg.eps_max * (1.0 + 1e-12) {
        let count = count_at(n, &edges, 2.0 * eps);
        let plateau = count == count_at(n, &edges, 2.0 * cfg.plateau_factor * eps);
        let check = profile.check(eps);
        scan.push(EpsilonRow {
            eps,
            components: count,
            plateau,
            margin: check.margin,
            full_cover: check.full_cover,
        });
        if chosen.is_none() && plateau && check.invariant {
            chosen = Some((eps, check.margin));
        }
        eps *= cfg.eps_ratio;
    }
    let Some((eps, margin)) = chosen else {
        return Err(Error::Construction {
            reason: "no radius on a component-count plateau is strictly invariant".into(),
            table: scan.iter().map(|r| (r.eps, r.components)).collect(),
        });
    };
    let components = components_at(n, &edges, 2.0 * eps);
    let component_gap = edges
        .iter()
        .find(|e| e.0 > 2.0 * eps)
        .map(|e| e.0 - 2.0 * eps);
    Ok(Multicone {
        cone: ConeSample::new(i, points, eps)?,
        components,
        invariance_margin: margin,
        component_gap,
        profile: profile.summary(eps),
        scan,
        attractor_warnings: att.warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub component: usize,
    pub line: usize,
    pub arc_count: usize,
    pub trace: LineTrace,
}

/// Trace every component's projectivization on every line; more than one
/// arc on a line witnesses a failure of semiconvexity for that component.
pub fn semiconvexity_audit(
    mc: &Multicone,
    lines: &[ProjectiveLine],
    arc_resolution: usize,
    plane_resolution: usize,
) -> Result<Vec<AuditEntry>> {
    let mut out = Vec::new();
    for k in 0..mc.component_count() {
        let directions = projectivize(&mc.component_sample(k), plane_resolution);
        for (l, line) in lines.iter().enumerate() {
            let trace = line_trace(line, &directions, arc_resolution)?;
            out.push(AuditEntry {
                component: k,
                line: l,
                arc_count: trace.arc_count(),
                trace,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SquareMatrix;
    use nalgebra::DVector;

    fn dir2(theta: f64) -> Plane {
        Plane::direction(&DVector::from_vec(vec![theta.cos(), theta.sin()])).unwrap()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = reference_planes(4, 2, 300, 11);
        let idx = PlaneIndex::from_points(&pts);
        for _ in 0..50 {
            let g = DMatrix::from_fn(4, 2, |_, _| gaussian(&mut rng));
            let q = Plane::from_spanning(g).unwrap();
            let (_, got) = idx.nearest(&q).unwrap();
            let want = pts.iter().map(|p| largest_angle(p, &q)).fold(f64::INFINITY, f64::min);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn iterate_examples() {
        let fam = MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[2.0, 1.0])]).unwrap();
        let c = ConeSample::new(1, vec![Plane::coordinate(2, &[0])], 0.0).unwrap();
        let img = iterate_cone(&fam, &c, 1e-12).unwrap();
        assert_eq!(img.points.len(), 1);
        assert!(largest_angle(&img.points[0], &Plane::coordinate(2, &[0])) < 1e-15);

        let pts: Vec<Plane> = [0.1, 0.5, 1.2].iter().map(|&t| dir2(t)).collect();
        let c = ConeSample::new(1, pts.clone(), 0.0).unwrap();
        let id = MatrixFamily::explicit(vec![SquareMatrix::identity(2)]).unwrap();
        let img = iterate_cone(&id, &c, 1e-12).unwrap();
        assert_eq!(img.points.len(), 3);
        let two = MatrixFamily::explicit(vec![
            SquareMatrix::diagonal(&[2.0, 1.0]),
            SquareMatrix::rotation2(0.3),
        ])
        .unwrap();
        assert_eq!(iterate_cone(&two, &c, -1.0).unwrap().points.len(), 6);
    }

    #[test]
    fn invariance_examples() {
        let fam = MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[2.0, 1.0])]).unwrap();
        let ball: Vec<Plane> = (-30..=30).map(|k| dir2(k as f64 * 0.01)).collect();
        let c = ConeSample::new(1, ball.clone(), 0.3).unwrap();
        let check = strictly_invariant(&fam, &c).unwrap();
        assert!(check.invariant, "{check:?}");

        // a single center: the image ball has radius atan(tan(0.3) / 2)
        let c = ConeSample::new(1, vec![dir2(0.0)], 0.3).unwrap();
        let check = strictly_invariant(&fam, &c).unwrap();
        assert!((check.margin - (0.3 - (0.3f64.tan() / 2.0).atan())).abs() < 1e-12);
        // isometries never pull a ball strictly inside itself
        let id = MatrixFamily::explicit(vec![SquareMatrix::identity(2)]).unwrap();
        assert!(strictly_invariant(&id, &c).unwrap().margin.abs() < 1e-12);

        let rot = MatrixFamily::explicit(vec![SquareMatrix::rotation2(1.0)]).unwrap();
        let c = ConeSample::new(1, ball, 0.01).unwrap();
        assert!(!strictly_invariant(&rot, &c).unwrap().invariant);

        let everything: Vec<Plane> = (0..360).map(|k| dir2(k as f64 * PI / 360.0)).collect();
        let c = ConeSample::new(1, everything, 0.05).unwrap();
        let check = strictly_invariant(&fam, &c).unwrap();
        assert!(check.full_cover && !check.invariant);
    }

    #[test]
    fn attractor_of_diagonal() {
        let fam = MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[2.0, 1.0])]).unwrap();
        let cfg = AttractorConfig {
            word_len: 5,
            ..AttractorConfig::default()
        };
        let att = attractor(&fam, 1, &cfg).unwrap();
        assert_eq!(att.cone.points.len(), 1);
        assert!(largest_angle(&att.cone.points[0], &Plane::coordinate(2, &[0])) < 1e-15);
    }

    #[test]
    fn attractor_of_conjugated_diagonal() {
        let r = {
            let a = SquareMatrix::rotation2(0.7).into_inner();
            let mut m = DMatrix::identity(4, 4);
            m.view_mut((1, 1), (2, 2)).copy_from(&a);
            SquareMatrix::new(m).unwrap()
        };
        let d = SquareMatrix::diagonal(&[2.0, 1.0, 0.5, 0.25]);
        let m = &(&r * &d) * &r.inverse().unwrap();
        let fam = MatrixFamily::explicit(vec![m]).unwrap();
        let att = attractor(&fam, 2, &AttractorConfig::default()).unwrap();
        let want = act(&r, &Plane::coordinate(4, &[0, 1])).unwrap();
        assert_eq!(att.cone.points.len(), 1);
        assert!(largest_angle(&att.cone.points[0], &want) < 1e-12);
    }

    #[test]
    fn adapted_metric_on_diagonal() {
        let fam = MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[2.0, 1.0])]).unwrap();
        let stable = ConeSample::new(1, vec![Plane::coordinate(2, &[1])], 0.0).unwrap();
        let e = Plane::coordinate(2, &[0]);
        assert_eq!(adapted_metric(&fam, &e, &e, 10, &stable, 8).unwrap().value, 0.0);
        let f = dir2(1e-3);
        let m = adapted_metric(&fam, &e, &f, 10, &stable, 8).unwrap();
        for w in m.terms.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 1e-5);
        }
        assert!(adapted_metric(&fam, &Plane::coordinate(2, &[1]), &f, 10, &stable, 8).is_err());
    }

    #[test]
    fn diagonal_multicone_has_one_component() {
        let a = SquareMatrix::diagonal(&[2.0, 1.0]);
        let neg = SquareMatrix::diagonal(&[-2.0, -1.0]);
        for fam in [
            MatrixFamily::explicit(vec![a.clone()]).unwrap(),
            MatrixFamily::explicit(vec![a.clone(), neg]).unwrap(),
        ] {
            let mc = build_multicone(&fam, 1, &MulticoneConfig::default(), &Gate::Override).unwrap();
            assert_eq!(mc.component_count(), 1);
            assert!(mc.contains(&Plane::coordinate(2, &[0])));
            assert!(mc.invariance_margin > 0.0);
            assert_eq!(mc.component_gap, None);
        }
    }

    #[test]
    fn gate_refuses_non_dominated() {
        let fam = MatrixFamily::explicit(vec![SquareMatrix::rotation2(1.0)]).unwrap();
        let mut dc = DominationConfig::default();
        dc.search.max_len = 8;
        assert!(matches!(
            build_multicone(&fam, 1, &MulticoneConfig::default(), &Gate::Check(dc)),
            Err(Error::Construction { .. })
        ));
    }
}
