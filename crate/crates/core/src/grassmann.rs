//! Planes in the Grassmannian `G(i, d)`, the linear action on them, the
//! largest-principal-angle metric, transversality, projectivization and
//! traces of direction clouds on projective lines.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, SquareMatrix};

/// Pairs with margin at or below this value are not transverse.
pub const TRANSVERSALITY_TOL: f64 = 1e-8;

const RANK_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-10;

/// An `i`-dimensional linear subspace of `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    frame: DMatrix<f64>,
    canonical: DMatrix<f64>,
}

impl Plane {
    /// Orthonormalize the columns of `spanning`; fails if they are not independent.
    pub fn from_spanning(spanning: DMatrix<f64>) -> Result<Plane> {
        let (d, i) = spanning.shape();
        if i == 0 || i > d {
            return Err(Error::arg(format!("cannot span a {i}-plane in R^{d}")));
        }
        if spanning.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg("plane frame has non-finite entries"));
        }
        let qr = spanning.qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..i).map(|k| r[(k, k)].abs()).collect();
        let top = diag.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 || diag.iter().any(|&x| x <= RANK_TOL * top) {
            return Err(Error::Internal(format!(
                "spanning set of a {i}-plane has lower rank"
            )));
        }
        Ok(Plane::from_orthonormal(qr.q()))
    }

    pub(crate) fn from_orthonormal(frame: DMatrix<f64>) -> Plane {
        let canonical = &frame * frame.transpose();
        Plane { frame, canonical }
    }

    /// Span of the listed standard basis vectors.
    pub fn coordinate(ambient_dim: usize, axes: &[usize]) -> Plane {
        let mut frame = DMatrix::zeros(ambient_dim, axes.len());
        for (c, &a) in axes.iter().enumerate() {
            frame[(a, c)] = 1.0;
        }
        Plane::from_orthonormal(frame)
    }

    /// The line through a non-zero vector.
    pub fn direction(v: &DVector<f64>) -> Result<Plane> {
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::arg("direction must be a finite non-zero vector"));
        }
        Ok(Plane::from_orthonormal(DMatrix::from_column_slice(
            v.len(),
            1,
            (v / n).as_slice(),
        )))
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    /// Orthonormal basis as columns.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Orthogonal projector onto the plane.
    pub fn canonical(&self) -> &DMatrix<f64> {
        &self.canonical
    }

    /// Orthogonal complement.
    pub fn complement(&self) -> Plane {
        let d = self.ambient_dim();
        let svd = self.canonical.clone().svd(true, false);
        let u = svd.u.expect("left vectors requested");
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let k = d - self.dim();
        let frame = DMatrix::from_fn(d, k, |r, c| u[(r, order[c])]);
        Plane::from_orthonormal(frame)
    }
}

#[derive(Serialize, Deserialize)]
struct PlaneRepr {
    ambient_dim: usize,
    dim: usize,
    /// Frame columns, each of length `ambient_dim`.
    frame: Vec<Vec<f64>>,
}

impl Serialize for Plane {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PlaneRepr {
            ambient_dim: self.ambient_dim(),
            dim: self.dim(),
            frame: self
                .frame
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Plane {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PlaneRepr::deserialize(d)?;
        if repr.frame.len() != repr.dim
            || repr.frame.iter().any(|c| c.len() != repr.ambient_dim)
            || repr.dim == 0
        {
            return Err(D::Error::custom("plane frame has inconsistent shape"));
        }
        let frame = DMatrix::from_fn(repr.ambient_dim, repr.dim, |r, c| repr.frame[c][r]);
        let gram = frame.transpose() * &frame;
        if (gram - DMatrix::identity(repr.dim, repr.dim)).amax() > ORTHONORMAL_TOL {
            return Err(D::Error::custom("plane frame is not orthonormal"));
        }
        Ok(Plane::from_orthonormal(frame))
    }
}

/// A two-dimensional plane viewed as a line of `P(R^d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectiveLine(Plane);

impl ProjectiveLine {
    pub fn new(plane: Plane) -> Result<Self> {
        if plane.dim() != 2 {
            return Err(Error::arg(format!(
                "a projective line needs a 2-plane, got dimension {}",
                plane.dim()
            )));
        }
        Ok(ProjectiveLine(plane))
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    /// Direction at angle `theta` in the line's own chart.
    pub fn point(&self, theta: f64) -> DVector<f64> {
        let f = &self.0.frame;
        f.column(0) * theta.cos() + f.column(1) * theta.sin()
    }

    /// Chart angle in `[0, pi)` of the orthogonal projection of `v` onto the line.
    pub fn angle_of(&self, v: &DVector<f64>) -> f64 {
        let f = &self.0.frame;
        let a = f.column(0).dot(v);
        let b = f.column(1).dot(v);
        b.atan2(a).rem_euclid(PI)
    }
}

/// A finite sample of planes of a common dimension with a radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSample {
    pub grass_index: usize,
    pub points: Vec<Plane>,
    pub radius: f64,
}

impl ConeSample {
    pub fn new(grass_index: usize, points: Vec<Plane>, radius: f64) -> Result<Self> {
        if let Some(first) = points.first() {
            let d = first.ambient_dim();
            if points
                .iter()
                .any(|p| p.dim() != grass_index || p.ambient_dim() != d)
            {
                return Err(Error::arg("cone sample points must share dimensions"));
            }
        }
        if !(radius >= 0.0) {
            return Err(Error::arg("cone radius must be non-negative"));
        }
        Ok(ConeSample {
            grass_index,
            points,
            radius,
        })
    }

    pub fn ambient_dim(&self) -> Option<usize> {
        self.points.first().map(Plane::ambient_dim)
    }

    /// Whether `e` lies within `radius` of some sample point.
    pub fn contains(&self, e: &Plane) -> bool {
        nearest_distance(&self.points, e).is_some_and(|(_, dist)| dist <= self.radius)
    }

    /// Point cloud rows `point, column, x_0, ..., x_{d-1}` for plotting.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let d = self.ambient_dim().unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["point".to_string(), "column".to_string()];
        header.extend((0..d).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (p, plane) in self.points.iter().enumerate() {
            for (c, col) in plane.frame().column_iter().enumerate() {
                let mut rec = vec![p.to_string(), c.to_string()];
                rec.extend(col.iter().map(|x| format!("{x:e}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_same_grass(e: &Plane, f: &Plane) -> Result<()> {
    if e.ambient_dim() != f.ambient_dim() || e.dim() != f.dim() {
        return Err(Error::arg(format!(
            "planes live in different Grassmannians: G({}, {}) vs G({}, {})",
            e.dim(),
            e.ambient_dim(),
            f.dim(),
            f.ambient_dim()
        )));
    }
    Ok(())
}

/// Image of `e` under `m`, re-orthonormalized.
pub fn act(m: &SquareMatrix, e: &Plane) -> Result<Plane> {
    if m.dim() != e.ambient_dim() {
        return Err(Error::arg(format!(
            "cannot act by a {}x{} matrix on R^{}",
            m.dim(),
            m.dim(),
            e.ambient_dim()
        )));
    }
    Plane::from_spanning(m.as_matrix() * e.frame())
}

/// Largest principal angle, in `[0, pi/2]`.
pub fn grass_distance(e: &Plane, f: &Plane) -> Result<f64> {
    check_same_grass(e, f)?;
    Ok(largest_angle(e, f))
}

pub(crate) fn largest_angle(e: &Plane, f: &Plane) -> f64 {
    let cross = e.frame().transpose() * f.frame();
    let residual = f.frame() - e.frame() * &cross;
    let (sin, cos) = match e.dim() {
        1 => (residual.norm(), cross[(0, 0)].abs()),
        2 => {
            let (_, sin2) = sym2_eigen(&(residual.transpose() * &residual));
            let (cos2, _) = sym2_eigen(&(cross.transpose() * &cross));
            (sin2.max(0.0).sqrt(), cos2.max(0.0).sqrt())
        }
        _ => (
            singular_values(&residual).map(|v| v[0]).unwrap_or(1.0),
            singular_values(&cross)
                .map(|v| *v.last().unwrap())
                .unwrap_or(0.0),
        ),
    };
    sin.atan2(cos).clamp(0.0, PI / 2.0)
}

/// Eigenvalues `(min, max)` of a symmetric 2x2 matrix.
fn sym2_eigen(m: &DMatrix<f64>) -> (f64, f64) {
    let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    (mean - r, mean + r)
}

/// Index and distance of the sample point closest to `e`.
pub fn nearest_distance(points: &[Plane], e: &Plane) -> Option<(usize, f64)> {
    points
        .iter()
        .enumerate()
        .map(|(k, p)| (k, largest_angle(p, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transversality {
    pub transverse: bool,
    pub margin: f64,
}

/// Smallest singular value of the concatenated frames of complementary planes.
pub fn transverse(e: &Plane, f: &Plane) -> Result<Transversality> {
    let d = e.ambient_dim();
    if f.ambient_dim() != d || e.dim() + f.dim() != d {
        return Err(Error::arg(format!(
            "planes of dimensions {} and {} are not complementary in R^{d}",
            e.dim(),
            f.dim()
        )));
    }
    let mut joined = DMatrix::zeros(d, d);
    joined.columns_mut(0, e.dim()).copy_from(e.frame());
    joined.columns_mut(e.dim(), f.dim()).copy_from(f.frame());
    let margin = *singular_values(&joined)?.last().unwrap();
    Ok(Transversality {
        transverse: margin > TRANSVERSALITY_TOL,
        margin,
    })
}

/// Radical-inverse van der Corput sequence in base `b`.
fn radical_inverse(mut n: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut x = 0.0;
    let mut f = inv;
    while n > 0 {
        x += (n % b) as f64 * f;
        n /= b;
        f *= inv;
    }
    x
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Deterministic, roughly uniform unit vectors of `R^k` (k >= 3).
fn sphere_points(k: usize, count: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut n = 1u64;
    while out.len() < count {
        let mut v = DVector::zeros(k);
        for pair in 0..k.div_ceil(2) {
            let u1 = radical_inverse(n, PRIMES[(2 * pair) % PRIMES.len()]).max(1e-12);
            let u2 = radical_inverse(n, PRIMES[(2 * pair + 1) % PRIMES.len()]);
            let r = (-2.0 * u1.ln()).sqrt();
            v[2 * pair] = r * (2.0 * PI * u2).cos();
            if 2 * pair + 1 < k {
                v[2 * pair + 1] = r * (2.0 * PI * u2).sin();
            }
        }
        n += 1;
        let norm = v.norm();
        if norm > 1e-9 {
            out.push(v / norm);
        }
    }
    out
}

/// Directions contained in the planes of `c`, `resolution` per plane; the
/// radius is carried over unchanged.
pub fn projectivize(c: &ConeSample, resolution: usize) -> ConeSample {
    let i = c.grass_index;
    let coefficients: Vec<DVector<f64>> = match i {
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..resolution.max(1))
            .map(|k| {
                let t = PI * k as f64 / resolution.max(1) as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        _ => sphere_points(i, resolution.max(1)),
    };
    let points = c
        .points
        .iter()
        .flat_map(|p| {
            coefficients
                .iter()
                .map(move |a| Plane::direction(&(p.frame() * a)).expect("unit combination"))
        })
        .collect();
    ConeSample {
        grass_index: 1,
        points,
        radius: c.radius,
    }
}

/// Membership test for `{ v = v_E + v_F : |v_F| <= eps |v_E| }`.
#[derive(Clone, Debug)]
pub struct ConeAround {
    e_dim: usize,
    coords: DMatrix<f64>,
    e_frame: DMatrix<f64>,
    f_frame: DMatrix<f64>,
    eps: f64,
}

impl ConeAround {
    pub fn contains(&self, v: &DVector<f64>) -> bool {
        let norm = v.norm();
        if norm == 0.0 || v.len() != self.coords.nrows() {
            return false;
        }
        let c = &self.coords * v;
        let k = self.e_dim;
        let d = c.len();
        let ve = &self.e_frame * c.rows(0, k);
        let vf = &self.f_frame * c.rows(k, d - k);
        vf.norm() <= self.eps * ve.norm() + 1e-12 * norm
    }
}

pub fn cone_around(e: &Plane, f: &Plane, eps: f64) -> Result<ConeAround> {
    let t = transverse(e, f)?;
    if !t.transverse {
        return Err(Error::arg(format!(
            "cone axis and complement are not transverse (margin {:e})",
            t.margin
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::arg("cone aperture must be non-negative"));
    }
    let d = e.ambient_dim();
    let mut joined = DMatrix::zeros(d, d);
    joined.columns_mut(0, e.dim()).copy_from(e.frame());
    joined.columns_mut(e.dim(), f.dim()).copy_from(f.frame());
    let coords = joined
        .try_inverse()
        .ok_or_else(|| Error::Internal("transverse frames failed to invert".into()))?;
    Ok(ConeAround {
        e_dim: e.dim(),
        coords,
        e_frame: e.frame().clone(),
        f_frame: f.frame().clone(),
        eps,
    })
}

/// A maximal run of occupied cells, as chart angles `[start, end)` mod `pi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub end: f64,
    pub cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineTrace {
    pub resolution: usize,
    pub tolerance: f64,
    pub occupied: Vec<bool>,
    pub arcs: Vec<Arc>,
}

impl LineTrace {
    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// Whether the cell containing chart angle `theta` is occupied.
    pub fn is_occupied(&self, theta: f64) -> bool {
        let n = self.resolution;
        let k = ((theta.rem_euclid(PI) / PI) * n as f64).floor() as usize;
        self.occupied[k.min(n - 1)]
    }
}

/// Occupied arcs of the projective line `delta` under the direction cloud `c`.
///
/// A cell is occupied when some direction of `c` lies within `c.radius` plus
/// two cell widths of a direction in the cell.
pub fn line_trace(delta: &ProjectiveLine, c: &ConeSample, arc_resolution: usize) -> Result<LineTrace> {
    if c.grass_index != 1 && !c.points.is_empty() {
        return Err(Error::arg("line traces need a sample of directions"));
    }
    let n = arc_resolution.max(1);
    let cell = PI / n as f64;
    let tolerance = c.radius + 2.0 * cell;
    let mut occupied = vec![false; n];
    let f = delta.plane().frame();
    for p in &c.points {
        let v = p.frame().column(0);
        let a = f.column(0).dot(&v);
        let b = f.column(1).dot(&v);
        let rho = a.hypot(b);
        if tolerance >= PI / 2.0 {
            occupied.iter_mut().for_each(|o| *o = true);
            break;
        }
        let ratio = tolerance.cos() / rho;
        if rho == 0.0 || ratio > 1.0 {
            continue;
        }
        let half = ratio.acos();
        let phi = b.atan2(a).rem_euclid(PI);
        if half >= PI / 2.0 {
            occupied.iter_mut().for_each(|o| *o = true);
            continue;
        }
        // Cells meeting [phi - half, phi + half] taken mod pi.
        let lo = ((phi - half) / cell).floor() as i64;
        let hi = ((phi + half) / cell).floor() as i64;
        for k in lo..=hi {
            occupied[k.rem_euclid(n as i64) as usize] = true;
        }
    }
    let arcs = runs(&occupied, cell);
    Ok(LineTrace {
        resolution: n,
        tolerance,
        occupied,
        arcs,
    })
}

fn runs(occupied: &[bool], cell: f64) -> Vec<Arc> {
    let n = occupied.len();
    if occupied.iter().all(|&o| o) {
        return vec![Arc {
            start: 0.0,
            end: PI,
            cells: n,
        }];
    }
    let Some(gap) = occupied.iter().position(|&o| !o) else {
        return Vec::new();
    };
    // Start scanning right after an empty cell so runs never straddle the seam.
    let mut arcs = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for step in 1..=n {
        let k = (gap + step) % n;
        if occupied[k] {
            current = Some(match current {
                Some((s, len)) => (s, len + 1),
                None => (k, 1),
            });
        } else if let Some((s, len)) = current.take() {
            arcs.push(Arc {
                start: s as f64 * cell,
                end: ((s + len) % n) as f64 * cell,
                cells: len,
            });
        }
    }
    arcs.sort_by(|a, b| a.start.total_cmp(&b.start));
    arcs
}
