//! Long matrix products kept in factored, log-scaled form.
//!
//! A product `P` is stored as `Q * diag(exp(l)) * U` with `Q` orthogonal and
//! `U` upper triangular with rows of unit max-norm. Left multiplication
//! re-factors through a QR step, so magnitudes live in `l` and never overflow.
//! Singular values come from a one-sided Jacobi sweep on the graded
//! triangular factor, which keeps small singular values to high relative
//! accuracy even when the condition number exceeds `1e300`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 80;
/// Beyond this log-scale separation a Jacobi rotation reduces to a
/// Gram-Schmidt step of the weaker column against the stronger one.
const ASYMPTOTIC_SPLIT: f64 = 40.0;

#[derive(Clone, Debug)]
pub struct ProductAccumulator {
    q: DMatrix<f64>,
    logs: Vec<f64>,
    u: DMatrix<f64>,
    steps: usize,
}

/// Singular data of an accumulated product; values are stored as logarithms.
#[derive(Clone, Debug)]
pub struct ProductSvd {
    /// `log sigma_j`, non-increasing.
    pub log_values: Vec<f64>,
    /// Columns are left singular vectors.
    pub left: DMatrix<f64>,
    /// Columns are right singular vectors.
    pub right: DMatrix<f64>,
}

impl ProductSvd {
    /// `log(sigma_{i+1} / sigma_i)` for 1-based `i`.
    pub fn log_gap(&self, i: usize) -> f64 {
        self.log_values[i] - self.log_values[i - 1]
    }

    /// First `k` left singular vectors.
    pub fn top_left(&self, k: usize) -> DMatrix<f64> {
        self.left.columns(0, k).into_owned()
    }

    /// Last `k` right singular vectors.
    pub fn bottom_right(&self, k: usize) -> DMatrix<f64> {
        let d = self.right.ncols();
        self.right.columns(d - k, k).into_owned()
    }
}

impl ProductAccumulator {
    pub fn identity(dim: usize) -> Self {
        ProductAccumulator {
            q: DMatrix::identity(dim, dim),
            logs: vec![0.0; dim],
            u: DMatrix::identity(dim, dim),
            steps: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.logs.len()
    }

    /// Number of factors multiplied in so far.
    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// `P <- M * P`.
    pub fn left_multiply(&mut self, m: &SquareMatrix) -> Result<()> {
        self.left_multiply_raw(m.as_matrix())
    }

    pub(crate) fn left_multiply_raw(&mut self, m: &DMatrix<f64>) -> Result<()> {
        let d = self.dim();
        let qr = (m * &self.q).qr();
        let r = qr.r();
        let mut logs = vec![0.0; d];
        let mut u = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            let peak = (j..d)
                .filter(|&l| r[(j, l)] != 0.0)
                .map(|l| r[(j, l)].abs().ln() + self.logs[l])
                .fold(f64::NEG_INFINITY, f64::max);
            if !peak.is_finite() {
                return Err(Error::NumericalFailure {
                    label: String::new(),
                });
            }
            for l in j..d {
                if r[(j, l)] == 0.0 {
                    continue;
                }
                let w = r[(j, l)] * (self.logs[l] - peak).exp();
                for c in l..d {
                    u[(j, c)] += w * self.u[(l, c)];
                }
            }
            let norm = (j..d).map(|c| u[(j, c)].abs()).fold(0.0, f64::max);
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::NumericalFailure {
                    label: String::new(),
                });
            }
            for c in j..d {
                u[(j, c)] /= norm;
            }
            logs[j] = peak + norm.ln();
        }
        self.q = qr.q();
        self.logs = logs;
        self.u = u;
        self.steps += 1;
        Ok(())
    }

    /// The product as a plain matrix; only meaningful while it fits in `f64`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut t = self.u.clone();
        for j in 0..d {
            let s = self.logs[j].exp();
            t.row_mut(j).scale_mut(s);
        }
        &self.q * t
    }

    pub fn svd(&self) -> Result<ProductSvd> {
        let d = self.dim();
        // Columns of U^T scaled by exp(logs): kept as (log norm, unit vector).
        let mut scale = vec![0.0; d];
        let mut cols = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            let row = self.u.row(j).transpose();
            let n = row.norm();
            scale[j] = self.logs[j] + n.ln();
            cols.set_column(j, &(row / n));
        }
        let mut v = DMatrix::<f64>::identity(d, d);
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut rotated = false;
            for a in 0..d {
                for b in a + 1..d {
                    let gamma = cols.column(a).dot(&cols.column(b));
                    if gamma.abs() <= JACOBI_TOL {
                        continue;
                    }
                    rotated = true;
                    rotate_pair(&mut cols, &mut scale, &mut v, a, b, gamma);
                }
            }
            if !rotated {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NumericalFailure {
                label: String::new(),
            });
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&x, &y| scale[y].total_cmp(&scale[x]));
        let left_raw = &self.q * &v;
        Ok(ProductSvd {
            log_values: order.iter().map(|&k| scale[k]).collect(),
            left: DMatrix::from_fn(d, d, |r, c| left_raw[(r, order[c])]),
            right: DMatrix::from_fn(d, d, |r, c| cols[(r, order[c])]),
        })
    }
}

fn renormalize(cols: &mut DMatrix<f64>, scale: &mut [f64], k: usize) {
    let n = cols.column(k).norm();
    if n > 0.0 {
        cols.column_mut(k).scale_mut(1.0 / n);
        scale[k] += n.ln();
    } else {
        scale[k] = f64::NEG_INFINITY;
    }
}

/// Orthogonalize columns `a` and `b` by a plane rotation acting on the right.
fn rotate_pair(
    cols: &mut DMatrix<f64>,
    scale: &mut [f64],
    v: &mut DMatrix<f64>,
    a: usize,
    b: usize,
    gamma: f64,
) {
    let delta = scale[a] - scale[b];
    if delta.abs() > ASYMPTOTIC_SPLIT {
        let (strong, weak) = if delta > 0.0 { (a, b) } else { (b, a) };
        // Rotation angle is ~gamma * exp(-|delta|), invisible in V.
        let h = cols.column(strong).into_owned();
        let mut w = cols.column_mut(weak);
        w.axpy(-gamma, &h, 1.0);
        renormalize(cols, scale, weak);
        return;
    }
    // zeta = (|b|^2 - |a|^2) / (2 a.b) with the magnitudes factored out.
    let zeta = -delta.sinh() / gamma;
    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
    let cs = 1.0 / (1.0 + t * t).sqrt();
    let sn = cs * t;
    let top = scale[a].max(scale[b]);
    let ea = (scale[a] - top).exp();
    let eb = (scale[b] - top).exp();
    let ha = cols.column(a).into_owned();
    let hb = cols.column(b).into_owned();
    cols.set_column(a, &(&ha * (cs * ea) - &hb * (sn * eb)));
    cols.set_column(b, &(&ha * (sn * ea) + &hb * (cs * eb)));
    scale[a] = top;
    scale[b] = top;
    renormalize(cols, scale, a);
    renormalize(cols, scale, b);
    let va = v.column(a).into_owned();
    let vb = v.column(b).into_owned();
    v.set_column(a, &(&va * cs - &vb * sn));
    v.set_column(b, &(&va * sn + &vb * cs));
}

/// Accumulate `factors[0] * factors[1] * ... * factors[n-1]`.
pub fn product_of<'a, I>(dim: usize, factors: I) -> Result<ProductAccumulator>
where
    I: IntoIterator<Item = &'a SquareMatrix>,
    I::IntoIter: DoubleEndedIterator,
{
    let mut acc = ProductAccumulator::identity(dim);
    for m in factors.into_iter().rev() {
        acc.left_multiply(m)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_spectrum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> SquareMatrix {
        let entries: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        SquareMatrix::from_row_slice(d, &entries).unwrap()
    }

    #[test]
    fn short_products_match_direct_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 2..=5 {
            let ms: Vec<SquareMatrix> = (0..6).map(|_| random_matrix(&mut rng, d)).collect();
            let acc = product_of(d, ms.iter()).unwrap();
            let direct = ms[1..].iter().fold(ms[0].clone(), |p, m| &p * m);
            assert!((acc.to_matrix() - direct.as_matrix()).norm() < 1e-10 * direct.as_matrix().norm());
            let s = singular_spectrum(&direct).unwrap();
            let p = acc.svd().unwrap();
            for (lv, sv) in p.log_values.iter().zip(&s.values) {
                assert!((lv.exp() - sv).abs() < 1e-10 * s.values[0], "{lv} vs {sv}");
            }
            let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                d,
                p.log_values.iter().map(|x| x.exp()),
            ));
            let rebuilt = &p.left * sigma * p.right.transpose();
            assert!((rebuilt - direct.as_matrix()).norm() < 1e-10 * direct.as_matrix().norm());
        }
    }

    #[test]
    fn powers_of_diagonal_keep_tiny_singular_values() {
        let a = SquareMatrix::diagonal(&[16.0, 16.0, 1.0 / 16.0, 1.0 / 16.0]);
        let acc = product_of(4, std::iter::repeat_n(&a, 300)).unwrap();
        let p = acc.svd().unwrap();
        let l = 300.0 * 16f64.ln();
        for (k, expect) in [l, l, -l, -l].iter().enumerate() {
            assert!((p.log_values[k] - expect).abs() < 1e-9 * l);
        }
    }

    #[test]
    fn conjugated_power_is_accurate() {
        // N diag(8, 1/8) N^{-1} raised to a power far past f64 range.
        let n = SquareMatrix::from_row_slice(2, &[1.0, 0.3, -0.2, 1.0]).unwrap();
        let m = &(&n * &SquareMatrix::diagonal(&[8.0, 0.125])) * &n.inverse().unwrap();
        let acc = product_of(2, std::iter::repeat_n(&m, 400)).unwrap();
        let p = acc.svd().unwrap();
        let gap = p.log_gap(1);
        // the constant from conjugation is bounded by 2 log cond(N)
        assert!((gap + 800.0 * 8f64.ln()).abs() < 2.0);
        assert!((p.log_values[0] + p.log_values[1]).abs() < 1e-8 * 800.0);
    }
}
