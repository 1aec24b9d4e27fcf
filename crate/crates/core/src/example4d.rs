//! A four-dimensional dominated family with no locally semiconvex multicone.
//!
//! Two planar curves `gamma_1, gamma_2` carry ruled families of skew lines in
//! `R^3`. Lifting each line to the plane of its homogeneous coordinates gives
//! two curves `D_1(t), D_2(t)` of transverse planes in `G(2, 4)`, and `A(t, l)`
//! acts as `l` on `D_1(t)` and as `1/l` on `D_2(t)`. The lifted x-axis `P`
//! carries four directions `a, b, c, d` in alternating cyclic order: the
//! unstable multicone reaches `a, c` but not `b, d`, so its trace on `P` has
//! at least two arcs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{largest_angle, Plane, ProjectiveLine};
use crate::linalg::{singular_values, SquareMatrix};
use crate::multicone::{build_multicone, semiconvexity_audit, Gate, InvarianceProfile, Multicone, MulticoneConfig};
use crate::words::{is_dominated, DominationConfig, FamilySource, GapReport, MatrixFamily, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    First,
    Second,
}

/// `gamma_1(t) = (t - sin t, sin t / 2, 0)`, `gamma_2(t) = (3pi/2 - t + sin t, -sin t / 2, 0)`.
pub fn gamma(which: Which, t: f64) -> Vector3<f64> {
    let s = t.sin();
    match which {
        Which::First => Vector3::new(t - s, 0.5 * s, 0.0),
        Which::Second => Vector3::new(1.5 * PI - t + s, -0.5 * s, 0.0),
    }
}

pub fn tangent(which: Which, t: f64) -> Vector3<f64> {
    let c = t.cos();
    match which {
        Which::First => Vector3::new(1.0 - c, 0.5 * c, 0.0),
        Which::Second => Vector3::new(-1.0 + c, -0.5 * c, 0.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line3 {
    pub base: Vector3<f64>,
    /// Unit direction.
    pub dir: Vector3<f64>,
}

/// The line through `gamma(t)` along the unit tangent plus `e_z`.
pub fn line(which: Which, t: f64) -> Result<Line3> {
    let v = tangent(which, t);
    let n = v.norm();
    if n < 1e-12 {
        return Err(Error::arg(format!("curve tangent vanishes at t = {t}")));
    }
    let dir = v / n + Vector3::z();
    Ok(Line3 {
        base: gamma(which, t),
        dir: dir.normalize(),
    })
}

/// Distance between two lines; zero when they meet.
pub fn line_distance(a: &Line3, b: &Line3) -> f64 {
    let cross = a.dir.cross(&b.dir);
    let n = cross.norm();
    let delta = b.base - a.base;
    if n < 1e-15 {
        return delta.cross(&a.dir).norm();
    }
    delta.dot(&cross).abs() / n
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewnessMargin {
    pub min_distance: f64,
    pub min_parallelism_defect: f64,
    /// Parameters `(t, s)` realizing the minimal distance.
    pub argmin: (f64, f64),
}

/// `n` equispaced parameters on `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

fn skewness_of(first: &[(f64, Line3)], second: &[(f64, Line3)]) -> SkewnessMargin {
    first
        .par_iter()
        .map(|(t, l1)| {
            second.iter().fold(
                SkewnessMargin {
                    min_distance: f64::INFINITY,
                    min_parallelism_defect: f64::INFINITY,
                    argmin: (0.0, 0.0),
                },
                |mut acc, (s, l2)| {
                    let dist = line_distance(l1, l2);
                    if dist < acc.min_distance {
                        acc.min_distance = dist;
                        acc.argmin = (*t, *s);
                    }
                    acc.min_parallelism_defect =
                        acc.min_parallelism_defect.min(l1.dir.cross(&l2.dir).norm());
                    acc
                },
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(
            SkewnessMargin {
                min_distance: f64::INFINITY,
                min_parallelism_defect: f64::INFINITY,
                argmin: (0.0, 0.0),
            },
            |a, b| SkewnessMargin {
                min_distance: a.min_distance.min(b.min_distance),
                min_parallelism_defect: a.min_parallelism_defect.min(b.min_parallelism_defect),
                argmin: if b.min_distance < a.min_distance {
                    b.argmin
                } else {
                    a.argmin
                },
            },
        )
}

fn sampled_lines(which: Which, ts: &[f64]) -> Result<Vec<(f64, Line3)>> {
    ts.iter().map(|&t| Ok((t, line(which, t)?))).collect()
}

/// Minimal distance and direction cross product between `L_1(t)` and `L_2(s)`
/// over a `grid_n x grid_n` grid on `[lo, hi]^2`.
pub fn skewness_margin(grid_n: usize, lo: f64, hi: f64) -> Result<SkewnessMargin> {
    if grid_n < 2 {
        return Err(Error::arg("skewness grids need at least 2 points per axis"));
    }
    let ts = grid(lo, hi, grid_n);
    Ok(skewness_of(
        &sampled_lines(Which::First, &ts)?,
        &sampled_lines(Which::Second, &ts)?,
    ))
}

/// As [`skewness_margin`] with base points displaced by uniform noise in
/// `[-noise, noise]^3`.
pub fn perturbed_skewness_margin(grid_n: usize, lo: f64, hi: f64, noise: f64, seed: u64) -> Result<SkewnessMargin> {
    let ts = grid(lo, hi, grid_n.max(2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |lines: Vec<(f64, Line3)>| -> Vec<(f64, Line3)> {
        lines
            .into_iter()
            .map(|(t, mut l)| {
                l.base += Vector3::from_fn(|_, _| rng.random_range(-noise..=noise));
                (t, l)
            })
            .collect()
    };
    let first = jitter(sampled_lines(Which::First, &ts)?);
    let second = jitter(sampled_lines(Which::Second, &ts)?);
    Ok(skewness_of(&first, &second))
}

/// The plane of homogeneous lifts `[x : 1]` of points on the line.
pub fn lift_to_plane(l: &Line3) -> Result<Plane> {
    let m = DMatrix::from_column_slice(
        4,
        2,
        &[l.base.x, l.base.y, l.base.z, 1.0, l.dir.x, l.dir.y, l.dir.z, 0.0],
    );
    Plane::from_spanning(m)
}

/// `D_1(t)` or `D_2(t)`.
pub fn lifted(which: Which, t: f64) -> Result<Plane> {
    lift_to_plane(&line(which, t)?)
}

/// Homogeneous lift of `(x, 0, 0)`.
pub fn x_axis_point(x: f64) -> DVector<f64> {
    DVector::from_vec(vec![x, 0.0, 0.0, 1.0])
}

/// Lift of the x-axis, `span(e_1, e_4)`.
pub fn lifted_x_axis() -> ProjectiveLine {
    ProjectiveLine::new(Plane::coordinate(4, &[0, 3])).expect("two-dimensional")
}

/// Endpoints `a, b, c, d` on the x-axis.
pub fn endpoints() -> [(char, Vector3<f64>); 4] {
    [
        ('a', gamma(Which::First, 0.0)),
        ('b', gamma(Which::Second, PI)),
        ('c', gamma(Which::First, PI)),
        ('d', gamma(Which::Second, 0.0)),
    ]
}

/// Matrix equal to `lambda` on `D_1(t)` and `1/lambda` on `D_2(t)`.
pub fn family_a(t: f64, lambda: f64) -> Result<SquareMatrix> {
    if !(lambda > 1.0) {
        return Err(Error::arg("lambda must exceed 1"));
    }
    let d1 = lifted(Which::First, t)?;
    let d2 = lifted(Which::Second, t)?;
    let mut basis = DMatrix::zeros(4, 4);
    basis.columns_mut(0, 2).copy_from(d1.frame());
    basis.columns_mut(2, 2).copy_from(d2.frame());
    let margin = *singular_values(&basis)?.last().unwrap();
    if margin < 1e-8 {
        return Err(Error::Conditioning { t, lambda, margin });
    }
    let inv = basis
        .clone()
        .try_inverse()
        .ok_or(Error::Conditioning { t, lambda, margin })?;
    let scale = DMatrix::from_diagonal(&DVector::from_vec(vec![
        lambda,
        lambda,
        1.0 / lambda,
        1.0 / lambda,
    ]));
    SquareMatrix::new(basis * scale * inv)
}

/// Parameters of the sampled family on `[-ext, pi + ext]`.
pub fn sample_parameters(samples: usize, ext: f64) -> Vec<f64> {
    grid(-ext, PI + ext, samples)
}

/// `{ A(t_k, lambda) }` over `samples` equispaced parameters, in curve order.
pub fn sampled_family(lambda: f64, samples: usize, ext: f64) -> Result<MatrixFamily> {
    let ts = sample_parameters(samples, ext);
    let members = ts
        .iter()
        .enumerate()
        .map(|(k, &t)| Ok((format!("A{k:03}"), family_a(t, lambda)?)))
        .collect::<Result<Vec<_>>>()?;
    MatrixFamily::new(
        members,
        FamilySource::SampledCurve {
            description: format!("A(t, {lambda}) for t in [{:.4}, {:.4}]", -ext, PI + ext),
            sample_count: samples,
        },
    )
}

/// Lifted planes of one ruled family at the sample parameters.
pub fn sampled_planes(which: Which, samples: usize, ext: f64) -> Result<Vec<Plane>> {
    sample_parameters(samples, ext)
        .iter()
        .map(|&t| lifted(which, t))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodCheck {
    pub max_image_distance: f64,
    /// Largest distance from the sample to an image of a radius ball.
    pub image_reach: f64,
    pub spread: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaScanRow {
    pub lambda: f64,
    /// Radius of both neighborhoods.
    pub radius: f64,
    /// Neighborhood of the `D_1` samples under the family.
    pub c1: NeighborhoodCheck,
    /// Neighborhood of the `D_2` samples under the inverse family.
    pub c2: NeighborhoodCheck,
    pub passes: bool,
}

/// Smallest distance between the two sampled plane sets.
pub fn separation(first: &[Plane], second: &[Plane]) -> f64 {
    first
        .par_iter()
        .map(|a| second.iter().map(|b| largest_angle(a, b)).fold(f64::INFINITY, f64::min))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

fn neighborhood(family: &MatrixFamily, points: &[Plane], radius: f64) -> Result<NeighborhoodCheck> {
    let p = InvarianceProfile::compute(family, points)?;
    Ok(NeighborhoodCheck {
        max_image_distance: p.max_image_distance,
        image_reach: p.image_reach(radius),
        spread: p.spread,
        margin: p.margin(radius),
    })
}

/// Strict invariance of the neighborhoods of radius one third of the
/// separation of the sampled `D_1` and `D_2` sets.
pub fn lambda_scan(lambdas: &[f64], samples: usize, ext: f64) -> Result<Vec<LambdaScanRow>> {
    let d1 = sampled_planes(Which::First, samples, ext)?;
    let d2 = sampled_planes(Which::Second, samples, ext)?;
    let radius = separation(&d1, &d2) / 3.0;
    lambdas
        .iter()
        .map(|&lambda| {
            let fam = sampled_family(lambda, samples, ext)?;
            let c1 = neighborhood(&fam, &d1, radius)?;
            let c2 = neighborhood(&fam.inverse()?, &d2, radius)?;
            Ok(LambdaScanRow {
                lambda,
                radius,
                passes: c1.margin > 0.0 && c2.margin > 0.0,
                c1,
                c2,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Config {
    pub grid: usize,
    pub lambdas: Vec<f64>,
    pub ext: f64,
    pub domination: DominationConfig,
    pub multicone: MulticoneConfig,
    pub arc_resolution: usize,
    pub plane_resolution: usize,
    /// Entry-wise uniform noise for the perturbation rerun; zero skips it.
    pub perturbation: f64,
    pub perturbation_seed: u64,
}

impl Default for Theorem3Config {
    fn default() -> Self {
        Theorem3Config {
            grid: 64,
            lambdas: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            ext: 0.05,
            domination: DominationConfig::default(),
            multicone: MulticoneConfig::default(),
            arc_resolution: 2880,
            plane_resolution: 128,
            perturbation: 1e-3,
            perturbation_seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDirection {
    pub name: char,
    pub x: f64,
    /// Chart angle on the lifted x-axis.
    pub angle: f64,
    pub occupied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiconvexityWitness {
    pub component: usize,
    pub arc_count: usize,
    pub directions: Vec<TraceDirection>,
    /// The four chart angles are in the cyclic order `a, b, c, d`.
    pub cyclic_order: bool,
    /// Occupied and empty directions alternate around the line.
    pub alternating: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticoneSummary {
    pub eps: f64,
    pub points: usize,
    pub components: usize,
    pub invariance_margin: f64,
    pub component_gap: Option<f64>,
    /// Component holding every sample of the attracting plane curve, if one does.
    pub relevant_component: Option<usize>,
    pub contains_all_attracting: bool,
    pub excludes_all_repelling: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// `forward` for the family at index 2, `backward` for its inverse.
    pub direction: String,
    pub gap: GapReport,
    pub dominated: bool,
    pub multicone: Option<MulticoneSummary>,
    pub witness: Option<SemiconvexityWitness>,
    pub failure: Option<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub forward: StageReport,
    pub backward: StageReport,
}

impl PairReport {
    pub fn passed(&self) -> bool {
        self.forward.passed && self.backward.passed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Report {
    pub grid: usize,
    pub ext: f64,
    pub skewness: SkewnessMargin,
    pub scan: Vec<LambdaScanRow>,
    pub lambda: Option<f64>,
    pub nominal: Option<PairReport>,
    pub perturbed: Option<PairReport>,
    /// First failing stage, if any.
    pub failed_stage: Option<String>,
    pub passed: bool,
}

fn trace_directions() -> Vec<(char, f64, DVector<f64>)> {
    endpoints()
        .iter()
        .map(|(name, p)| (*name, p.x, x_axis_point(p.x)))
        .collect()
}

/// Whether the angles, taken in the listed order, wind once around the circle.
fn in_cyclic_order(angles: &[f64]) -> bool {
    let n = angles.len();
    let ascending = (0..n).filter(|&k| angles[(k + 1) % n] > angles[k]).count();
    // a cyclic rotation of a sorted list has exactly one descent
    ascending == n - 1 || ascending == 1
}

fn run_stage(
    family: &MatrixFamily,
    attracting: &[Plane],
    repelling: &[Plane],
    occupied_names: [char; 2],
    direction: &str,
    cfg: &Theorem3Config,
) -> Result<StageReport> {
    let gap = is_dominated(family, 2, &cfg.domination)?;
    let mut stage = StageReport {
        direction: direction.to_string(),
        dominated: gap.verdict == Some(Verdict::Dominated),
        gap,
        multicone: None,
        witness: None,
        failure: None,
        passed: false,
    };
    if !stage.dominated {
        stage.failure = Some("domination".into());
        return Ok(stage);
    }
    let mc = match build_multicone(family, 2, &cfg.multicone, &Gate::Verdict(Verdict::Dominated)) {
        Ok(mc) => mc,
        Err(Error::Construction { reason, .. }) => {
            stage.failure = Some(format!("multicone: {reason}"));
            return Ok(stage);
        }
        Err(e) => return Err(e),
    };
    let summary = summarize(&mc, attracting, repelling);
    let relevant = summary.relevant_component;
    let ok_cone = summary.contains_all_attracting && summary.excludes_all_repelling;
    stage.multicone = Some(summary);
    if !ok_cone {
        stage.failure = Some("multicone containment".into());
        return Ok(stage);
    }
    let component = relevant.expect("containment implies a relevant component");
    let line = lifted_x_axis();
    let audit = semiconvexity_audit(&mc, std::slice::from_ref(&line), cfg.arc_resolution, cfg.plane_resolution)?;
    let entry = audit
        .into_iter()
        .find(|e| e.component == component)
        .expect("every component is audited");
    let directions: Vec<TraceDirection> = trace_directions()
        .into_iter()
        .map(|(name, x, v)| {
            let angle = line.angle_of(&v);
            TraceDirection {
                name,
                x,
                angle,
                occupied: entry.trace.is_occupied(angle),
            }
        })
        .collect();
    let angles: Vec<f64> = directions.iter().map(|d| d.angle).collect();
    let cyclic_order = in_cyclic_order(&angles);
    let alternating = directions
        .iter()
        .all(|d| d.occupied == occupied_names.contains(&d.name));
    let witness = SemiconvexityWitness {
        component,
        arc_count: entry.arc_count,
        directions,
        cyclic_order,
        alternating,
    };
    stage.passed = witness.arc_count >= 2 && cyclic_order && alternating;
    if !stage.passed {
        stage.failure = Some("semiconvexity witness".into());
    }
    stage.witness = Some(witness);
    Ok(stage)
}

fn summarize(mc: &Multicone, attracting: &[Plane], repelling: &[Plane]) -> MulticoneSummary {
    let homes: Vec<Option<usize>> = attracting.iter().map(|p| mc.component_of(p)).collect();
    let contains_all = homes.iter().all(Option::is_some);
    let relevant = match homes.first() {
        Some(Some(k)) if homes.iter().all(|h| *h == Some(*k)) => Some(*k),
        _ => None,
    };
    MulticoneSummary {
        eps: mc.cone.radius,
        points: mc.cone.points.len(),
        components: mc.component_count(),
        invariance_margin: mc.invariance_margin,
        component_gap: mc.component_gap,
        relevant_component: relevant,
        contains_all_attracting: contains_all && relevant.is_some(),
        excludes_all_repelling: repelling.iter().all(|p| !mc.contains(p)),
    }
}

/// Domination, multicone and semiconvexity witness for a family and its inverse.
pub fn verify_pair(family: &MatrixFamily, cfg: &Theorem3Config) -> Result<PairReport> {
    let d1 = sampled_planes(Which::First, cfg.grid, cfg.ext)?;
    let d2 = sampled_planes(Which::Second, cfg.grid, cfg.ext)?;
    let forward = run_stage(family, &d1, &d2, ['a', 'c'], "forward", cfg)?;
    let backward = run_stage(&family.inverse()?, &d2, &d1, ['b', 'd'], "backward", cfg)?;
    Ok(PairReport { forward, backward })
}

/// Run the whole pipeline: skewness, lambda scan, then both stages for the
/// nominal family and for an entry-wise perturbation of it.
pub fn verify_theorem3(cfg: &Theorem3Config) -> Result<Theorem3Report> {
    if cfg.grid < 2 {
        return Err(Error::arg("the parameter grid needs at least 2 samples"));
    }
    let skewness = skewness_margin(cfg.grid.max(101), -cfg.ext, PI + cfg.ext)?;
    let scan = lambda_scan(&cfg.lambdas, cfg.grid, cfg.ext)?;
    let lambda = scan.iter().find(|r| r.passes).map(|r| r.lambda);
    let mut report = Theorem3Report {
        grid: cfg.grid,
        ext: cfg.ext,
        skewness,
        scan,
        lambda,
        nominal: None,
        perturbed: None,
        failed_stage: None,
        passed: false,
    };
    if !(skewness.min_distance > 0.0) {
        report.failed_stage = Some("skewness".into());
        return Ok(report);
    }
    let Some(lambda) = lambda else {
        report.failed_stage = Some("lambda_scan".into());
        return Ok(report);
    };
    let family = sampled_family(lambda, cfg.grid, cfg.ext)?;
    let nominal = verify_pair(&family, cfg)?;
    if !nominal.passed() {
        report.failed_stage = Some(stage_failure("nominal", &nominal));
        report.nominal = Some(nominal);
        return Ok(report);
    }
    report.nominal = Some(nominal);
    if cfg.perturbation > 0.0 {
        let noisy = family.perturbed(cfg.perturbation, cfg.perturbation_seed)?;
        let perturbed = verify_pair(&noisy, cfg)?;
        if !perturbed.passed() {
            report.failed_stage = Some(stage_failure("perturbed", &perturbed));
        }
        report.perturbed = Some(perturbed);
    }
    report.passed = report.failed_stage.is_none();
    Ok(report)
}

fn stage_failure(run: &str, pair: &PairReport) -> String {
    let stage = if pair.forward.passed { &pair.backward } else { &pair.forward };
    format!(
        "{run} {}: {}",
        stage.direction,
        stage.failure.as_deref().unwrap_or("unknown")
    )
}

/// Rows `t, x, y, z, dx, dy, dz` of curve samples and line directions.
pub fn write_curve_csv<W: std::io::Write>(which: Which, ts: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "x", "y", "z", "dx", "dy", "dz"])?;
    for &t in ts {
        let l = line(which, t)?;
        let row = [t, l.base.x, l.base.y, l.base.z, l.dir.x, l.dir.y, l.dir.z];
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `t, s, x, y, z` of points `base + s dir` on the ruled surface.
pub fn write_ruled_surface_csv<W: std::io::Write>(which: Which, ts: &[f64], ss: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "s", "x", "y", "z"])?;
    for &t in ts {
        let l = line(which, t)?;
        for &s in ss {
            let p = l.base + l.dir * s;
            w.write_record([t, s, p.x, p.y, p.z].iter().map(|v| format!("{v:e}")))?;
        }
    }
    w.flush()?;
    Ok(())
}
