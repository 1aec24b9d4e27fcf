//! Fixed family suite and random helpers shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use domsplit::linalg::SquareMatrix;
use domsplit::words::{MatrixFamily, Word};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SuiteFamily {
    pub name: &'static str,
    pub family: MatrixFamily,
    pub index: usize,
    pub dominated: bool,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    })
}

/// `Q diag(d_k) Q^T` for a shared seeded orthogonal `Q`, plus entry-wise noise.
fn conjugated(diagonals: &[&[f64]], seed: u64, noise: f64) -> MatrixFamily {
    let d = diagonals[0].len();
    let q = SquareMatrix::random_orthogonal(d, seed);
    let qt = q.transpose();
    let members = diagonals
        .iter()
        .map(|diag| &(&q * &SquareMatrix::diagonal(diag)) * &qt)
        .collect();
    let fam = MatrixFamily::explicit(members).unwrap();
    if noise > 0.0 {
        fam.perturbed(noise, seed + 1000).unwrap()
    } else {
        fam
    }
}

fn orthogonal(d: usize, seeds: &[u64]) -> MatrixFamily {
    MatrixFamily::explicit(seeds.iter().map(|&s| SquareMatrix::random_orthogonal(d, s)).collect()).unwrap()
}

/// Ten families dominated by construction and ten that are not.
pub fn suite() -> Vec<SuiteFamily> {
    let dom = |name, family, index| SuiteFamily {
        name,
        family,
        index,
        dominated: true,
    };
    let not = |name, family, index| SuiteFamily {
        name,
        family,
        index,
        dominated: false,
    };
    vec![
        dom("diag2", MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[2.0, 1.0])]).unwrap(), 1),
        dom("conj2a", conjugated(&[&[3.0, 1.0], &[2.0, 1.0]], 1, 0.05), 1),
        dom("conj2b", conjugated(&[&[2.0, 1.0], &[1.6, 0.8], &[1.2, 0.5]], 2, 0.02), 1),
        dom("conj3i1", conjugated(&[&[3.0, 1.0, 0.5], &[2.0, 1.2, 0.7]], 3, 0.03), 1),
        dom("conj3i2", conjugated(&[&[2.0, 1.8, 0.5], &[3.0, 2.0, 1.0]], 4, 0.05), 2),
        dom("conj4i2", conjugated(&[&[4.0, 3.0, 1.0, 0.5], &[2.0, 2.0, 1.0, 1.0], &[3.0, 1.5, 0.6, 0.4]], 5, 0.05), 2),
        dom("conj4i1", conjugated(&[&[3.0, 1.0, 0.8, 0.5], &[2.0, 1.2, 1.0, 0.3]], 6, 0.04), 1),
        dom("conj4i3", conjugated(&[&[2.0, 1.5, 1.0, 0.5], &[1.5, 1.4, 1.2, 0.6]], 7, 0.03), 3),
        dom("conj5i2", conjugated(&[&[3.0, 2.5, 1.0, 0.9, 0.8], &[2.0, 1.9, 1.0, 0.5, 0.4]], 8, 0.05), 2),
        dom("conj6i3", conjugated(&[&[4.0, 3.0, 2.0, 1.0, 0.8, 0.5], &[2.0, 2.0, 1.6, 0.8, 0.8, 0.7]], 9, 0.05), 3),
        not("rot1", MatrixFamily::explicit(vec![SquareMatrix::rotation2(1.0)]).unwrap(), 1),
        not(
            "rot_pair",
            MatrixFamily::explicit(vec![SquareMatrix::rotation2(0.3), SquareMatrix::rotation2(2.0)]).unwrap(),
            1,
        ),
        not(
            "diag_rot",
            MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[2.0, 1.0]), SquareMatrix::rotation2(PI / 2.0)]).unwrap(),
            1,
        ),
        not("identity3", MatrixFamily::explicit(vec![SquareMatrix::identity(3)]).unwrap(), 1),
        not("orth3", orthogonal(3, &[11, 12]), 1),
        not("orth4", orthogonal(4, &[13, 14]), 2),
        not(
            "cycle3",
            MatrixFamily::explicit(vec![SquareMatrix::from_row_slice(3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap()])
                .unwrap(),
            1,
        ),
        not("orth5", orthogonal(5, &[15, 16]), 2),
        not("reflection", MatrixFamily::explicit(vec![SquareMatrix::diagonal(&[1.0, -1.0])]).unwrap(), 1),
        not("orth6", orthogonal(6, &[17, 18]), 3),
    ]
}

pub fn random_word(rng: &mut ChaCha8Rng, family: &MatrixFamily, len: usize) -> Word {
    let letters = (0..len).map(|_| rng.random_range(0..family.len())).collect();
    Word::new(letters, family).unwrap()
}
