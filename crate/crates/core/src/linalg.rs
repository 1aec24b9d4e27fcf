//! Dense linear-algebra primitives on small square matrices.
//!
//! Singular values, norm and co-norm, gap ratios, exterior-power norms,
//! cross-ratios of points on a projective line, and principal angles.

use std::fmt;
use std::ops::Mul;

use nalgebra::{DMatrix, DVector, SVD};
use rand::distr::StandardUniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grassmann::Plane;

/// A matrix is accepted as invertible iff `sigma_d > INVERTIBILITY_TOL * sigma_1`.
pub const INVERTIBILITY_TOL: f64 = 1e-12;

const SVD_MAX_ITER: usize = 10_000;

/// A finite real `d x d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix(DMatrix<f64>);

impl SquareMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::arg(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg("matrix has non-finite entries"));
        }
        Ok(SquareMatrix(m))
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::arg(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        SquareMatrix(DMatrix::identity(dim, dim))
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        SquareMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    /// Planar rotation by `angle` radians.
    pub fn rotation2(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        SquareMatrix(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        SquareMatrix(self.0.transpose())
    }

    /// Row-major entries.
    pub fn row_major(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| self.0[(r, c)])
            .collect()
    }

    /// Fails unless `sigma_d > INVERTIBILITY_TOL * sigma_1`.
    pub fn check_invertible(&self) -> Result<()> {
        let values = singular_values(&self.0)?;
        let top = values[0];
        let bottom = *values.last().unwrap();
        let ratio = if top > 0.0 { bottom / top } else { 0.0 };
        if ratio > INVERTIBILITY_TOL {
            Ok(())
        } else {
            Err(Error::NotInvertible {
                label: String::new(),
                ratio,
            })
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        self.check_invertible()?;
        self.0
            .clone()
            .try_inverse()
            .map(SquareMatrix)
            .ok_or(Error::NotInvertible {
                label: String::new(),
                ratio: 0.0,
            })
    }

    pub fn operator_norm(&self) -> Result<f64> {
        Ok(singular_values(&self.0)?[0])
    }

    /// Haar-distributed orthogonal matrix drawn from a seeded generator.
    pub fn random_orthogonal(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(dim, dim, |_, _| gaussian(&mut rng));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for k in 0..dim {
            if r[(k, k)] < 0.0 {
                q.column_mut(k).neg_mut();
            }
        }
        SquareMatrix(q)
    }
}

/// Standard normal sample by the Box-Muller transform.
pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.sample::<f64, _>(StandardUniform).max(1e-300);
    let u2: f64 = rng.sample(StandardUniform);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl Mul for &SquareMatrix {
    type Output = SquareMatrix;

    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        SquareMatrix(&self.0 * &rhs.0)
    }
}

impl fmt::Display for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    entries: Vec<f64>,
}

impl Serialize for SquareMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            dim: self.dim(),
            entries: self.row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SquareMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        SquareMatrix::from_row_slice(repr.dim, &repr.entries).map_err(serde::de::Error::custom)
    }
}

/// Singular values with left and right singular frames, sorted non-increasing.
#[derive(Clone, Debug)]
pub struct SingularSpectrum {
    pub values: Vec<f64>,
    /// Columns are left singular vectors.
    pub left: DMatrix<f64>,
    /// Columns are right singular vectors.
    pub right: DMatrix<f64>,
}

impl SingularSpectrum {
    /// `left * diag(values) * right^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        &self.left * sigma * self.right.transpose()
    }
}

fn svd(m: &DMatrix<f64>, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m.clone(), vectors, vectors, f64::EPSILON, SVD_MAX_ITER).ok_or(
        Error::NumericalFailure {
            label: String::new(),
        },
    )
}

/// Singular values of an arbitrary (possibly rectangular) matrix, non-increasing.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure {
            label: String::new(),
        });
    }
    let mut values: Vec<f64> = svd(m, false)?.singular_values.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

pub fn singular_spectrum(m: &SquareMatrix) -> Result<SingularSpectrum> {
    let d = m.dim();
    let dec = svd(&m.0, true)?;
    let u = dec.u.expect("left vectors requested");
    let vt = dec.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let values = order.iter().map(|&k| dec.singular_values[k]).collect();
    let left = DMatrix::from_fn(d, d, |r, c| u[(r, order[c])]);
    let right = DMatrix::from_fn(d, d, |r, c| vt[(order[c], r)]);
    Ok(SingularSpectrum {
        values,
        left,
        right,
    })
}

/// Smallest singular value, `inf |Mv|` over unit `v`.
pub fn conorm(m: &SquareMatrix) -> Result<f64> {
    m.check_invertible()?;
    Ok(*singular_values(&m.0)?.last().unwrap())
}

/// `sigma_{i+1} / sigma_i` with 1-based `i` in `1..d`.
pub fn gap_ratio(m: &SquareMatrix, i: usize) -> Result<f64> {
    let d = m.dim();
    if i == 0 || i >= d {
        return Err(Error::arg(format!("index {i} outside 1..{}", d - 1)));
    }
    let values = singular_values(&m.0)?;
    if values[i - 1] <= 0.0 {
        return Err(Error::arg(format!("sigma_{i} vanishes")));
    }
    Ok(values[i] / values[i - 1])
}

/// Operator norm of the k-th exterior power, `sigma_1 * ... * sigma_k`.
pub fn exterior_norm(m: &SquareMatrix, k: usize) -> Result<f64> {
    let d = m.dim();
    if k == 0 || k > d {
        return Err(Error::arg(format!("exterior degree {k} outside 1..={d}")));
    }
    Ok(singular_values(&m.0)?[..k].iter().product())
}

/// A point of the extended real line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinity,
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        if x.is_infinite() {
            ExtReal::Infinity
        } else {
            ExtReal::Finite(x)
        }
    }
}

impl ExtReal {
    /// Homogeneous coordinates `(x, 1)` or `(1, 0)`.
    fn homogeneous(self) -> [f64; 2] {
        match self {
            ExtReal::Finite(x) => [x, 1.0],
            ExtReal::Infinity => [1.0, 0.0],
        }
    }
}

fn det2(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

/// Cross-ratio in homogeneous coordinates; each point appears once in the
/// numerator and once in the denominator, so representatives may be rescaled.
fn homogeneous_cross_ratio(p: [[f64; 2]; 4]) -> Result<f64> {
    let [a, b, c, d] = p;
    let ba = det2(b, a);
    let dc = det2(d, c);
    if ba == 0.0 || dc == 0.0 || det2(c, a) == 0.0 || det2(d, b) == 0.0 {
        return Err(Error::arg("cross-ratio needs four distinct points"));
    }
    Ok((det2(c, a) / ba) * (det2(d, b) / dc))
}

/// `[a,b,c,d] = (c-a)/(b-a) * (d-b)/(d-c)` on `R ∪ {∞}`.
pub fn cross_ratio(a: ExtReal, b: ExtReal, c: ExtReal, d: ExtReal) -> Result<f64> {
    let pts = [a, b, c, d];
    for x in 0..4 {
        for y in x + 1..4 {
            if pts[x] == pts[y] {
                return Err(Error::arg("cross-ratio needs four distinct points"));
            }
        }
    }
    homogeneous_cross_ratio(pts.map(ExtReal::homogeneous))
}

/// Cross-ratio of four distinct directions spanning a projective line of `R^d`.
///
/// The chart keeps the coordinate pair whose 2x2 minors over the quadruple
/// have the largest total magnitude.
pub fn projective_cross_ratio(points: [&DVector<f64>; 4]) -> Result<f64> {
    let d = points[0].len();
    if d < 2 || points.iter().any(|p| p.len() != d) {
        return Err(Error::arg("directions must share an ambient dimension >= 2"));
    }
    let span = DMatrix::from_columns(&points.map(|p| p.clone()));
    let values = singular_values(&span)?;
    if values.len() > 2 && values[2] > 1e-9 * values[0] {
        return Err(Error::arg("directions do not lie on a common projective line"));
    }
    let mut best = (0, 1, -1.0);
    for j in 0..d {
        for k in j + 1..d {
            let mut score = 0.0;
            for m in 0..4 {
                for n in m + 1..4 {
                    let (u, v) = (points[m], points[n]);
                    score += (u[j] * v[k] - u[k] * v[j]).abs();
                }
            }
            if score > best.2 {
                best = (j, k, score);
            }
        }
    }
    let (j, k, _) = best;
    let chart = points.map(|p| [p[j], p[k]]);
    // Near-parallel representatives count as repeated points.
    for m in 0..4 {
        for n in m + 1..4 {
            let (u, v) = (chart[m], chart[n]);
            let scale = (u[0].hypot(u[1])) * (v[0].hypot(v[1]));
            if det2(u, v).abs() <= 1e-14 * scale {
                return Err(Error::arg("cross-ratio needs four distinct directions"));
            }
        }
    }
    homogeneous_cross_ratio(chart)
}

/// Principal angles between two subspaces, sorted non-decreasing.
pub fn principal_angles(e: &Plane, f: &Plane) -> Vec<f64> {
    let cross = e.frame().transpose() * f.frame();
    let mut cosines = match singular_values(&cross) {
        Ok(v) => v,
        Err(_) => return Vec::new(),
    };
    cosines.truncate(e.dim().min(f.dim()));
    cosines.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn spectrum_of_simple_matrices() {
        let s = singular_spectrum(&SquareMatrix::identity(3)).unwrap();
        assert!(s.values.iter().all(|&v| close(v, 1.0, 1e-15)));

        let s = singular_spectrum(&SquareMatrix::diagonal(&[4.0, 2.0, 1.0])).unwrap();
        assert_eq!(s.values.len(), 3);
        for (v, e) in s.values.iter().zip([4.0, 2.0, 1.0]) {
            assert!(close(*v, e, 1e-14));
        }

        let m = SquareMatrix::from_row_slice(2, &[0.0, 2.0, 1.0, 0.0]).unwrap();
        let s = singular_spectrum(&m).unwrap();
        assert!(close(s.values[0], 2.0, 1e-14) && close(s.values[1], 1.0, 1e-14));
        assert!((s.reconstruct() - m.as_matrix()).norm() < 1e-12);
    }

    #[test]
    fn spectrum_sorted_even_for_unsorted_diagonal() {
        let s = singular_spectrum(&SquareMatrix::diagonal(&[1.0, -5.0, 3.0])).unwrap();
        assert!(close(s.values[0], 5.0, 1e-14));
        assert!(close(s.values[2], 1.0, 1e-14));
        let m = SquareMatrix::diagonal(&[1.0, -5.0, 3.0]);
        assert!((s.reconstruct() - m.as_matrix()).norm() < 1e-12);
        let gram = s.left.transpose() * &s.left;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn conorm_and_gap_basics() {
        let m = SquareMatrix::diagonal(&[4.0, 2.0, 1.0]);
        assert!(close(conorm(&m).unwrap(), 1.0, 1e-14));
        assert!(close(conorm(&SquareMatrix::identity(4)).unwrap(), 1.0, 1e-14));
        assert!(close(gap_ratio(&m, 1).unwrap(), 0.5, 1e-14));
        assert!(close(gap_ratio(&m, 2).unwrap(), 0.5, 1e-14));
        assert!(close(
            gap_ratio(&SquareMatrix::rotation2(0.7), 1).unwrap(),
            1.0,
            1e-14
        ));
        assert!(matches!(gap_ratio(&m, 0), Err(Error::Argument(_))));
        assert!(matches!(gap_ratio(&m, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn singular_input_rejected() {
        let m = SquareMatrix::diagonal(&[1.0, 0.0]);
        assert!(matches!(conorm(&m), Err(Error::NotInvertible { .. })));
        let tiny = SquareMatrix::diagonal(&[1.0, 1e-13]);
        assert!(tiny.check_invertible().is_err());
        assert!(SquareMatrix::diagonal(&[1.0, 1e-11]).check_invertible().is_ok());
    }

    #[test]
    fn exterior_norm_is_product_of_top_values() {
        let m = SquareMatrix::diagonal(&[4.0, 2.0, 1.0]);
        assert!(close(exterior_norm(&m, 2).unwrap(), 8.0, 1e-14));
        assert!(close(exterior_norm(&m, 1).unwrap(), 4.0, 1e-14));
        assert!(close(exterior_norm(&m, 3).unwrap(), 8.0, 1e-14));
        assert!(exterior_norm(&m, 4).is_err());
        assert!(exterior_norm(&m, 0).is_err());
    }

    #[test]
    fn cross_ratio_values() {
        let r = cross_ratio(
            0.0.into(),
            (PI / 2.0).into(),
            PI.into(),
            (1.5 * PI).into(),
        )
        .unwrap();
        assert!((r - 4.0).abs() < 1e-12);
        let r = cross_ratio(0.0.into(), 1.0.into(), 3.0.into(), ExtReal::Infinity).unwrap();
        assert!((r - 3.0).abs() < 1e-15);
        // infinity in the other slots follows the limit convention
        let r = cross_ratio(ExtReal::Infinity, 1.0.into(), 3.0.into(), 7.0.into()).unwrap();
        assert!((r - 6.0 / 4.0).abs() < 1e-15);
        assert!(cross_ratio(1.0.into(), 1.0.into(), 2.0.into(), 3.0.into()).is_err());
    }

    #[test]
    fn projective_cross_ratio_matches_affine_chart() {
        let pts: Vec<DVector<f64>> = [0.0, PI / 2.0, PI, 1.5 * PI]
            .iter()
            .map(|&x| DVector::from_vec(vec![x, 0.0, 0.0, 1.0]))
            .collect();
        let r = projective_cross_ratio([&pts[0], &pts[1], &pts[2], &pts[3]]).unwrap();
        assert!((r - 4.0).abs() < 1e-12);
        let same = [&pts[0], &pts[0], &pts[2], &pts[3]];
        assert!(projective_cross_ratio(same).is_err());
    }

    #[test]
    fn principal_angles_of_coordinate_planes() {
        let e1 = Plane::coordinate(3, &[0]);
        let e2 = Plane::coordinate(3, &[1]);
        assert_eq!(principal_angles(&e1, &e1), vec![0.0]);
        assert!((principal_angles(&e1, &e2)[0] - PI / 2.0).abs() < 1e-15);
        let a = Plane::coordinate(3, &[0, 1]);
        let b = Plane::coordinate(3, &[1, 2]);
        let angles = principal_angles(&a, &b);
        assert!(angles[0].abs() < 1e-15 && (angles[1] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn serde_uses_row_major_entries() {
        let m = SquareMatrix::from_row_slice(2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"dim":2,"entries":[1.0,2.0,3.0,4.0]}"#);
        let back: SquareMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
