use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::product::ProductAccumulator;

/// How a family was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySource {
    ExplicitList,
    /// Consecutive members sample a continuous curve of matrices, in order.
    SampledCurve {
        description: String,
        sample_count: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub label: String,
    pub matrix: SquareMatrix,
}

/// A finite set of labeled invertible matrices of a common dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyRepr", into = "FamilyRepr")]
pub struct MatrixFamily {
    dim: usize,
    members: Vec<LabeledMatrix>,
    source: FamilySource,
}

#[derive(Clone, Serialize, Deserialize)]
struct FamilyRepr {
    dim: usize,
    members: Vec<LabeledMatrix>,
    source: FamilySource,
}

impl TryFrom<FamilyRepr> for MatrixFamily {
    type Error = Error;

    fn try_from(r: FamilyRepr) -> Result<Self> {
        let fam = MatrixFamily::new(
            r.members.into_iter().map(|m| (m.label, m.matrix)).collect(),
            r.source,
        )?;
        if fam.dim != r.dim {
            return Err(Error::arg(format!(
                "declared dimension {} does not match members of dimension {}",
                r.dim, fam.dim
            )));
        }
        Ok(fam)
    }
}

impl From<MatrixFamily> for FamilyRepr {
    fn from(f: MatrixFamily) -> Self {
        FamilyRepr {
            dim: f.dim,
            members: f.members,
            source: f.source,
        }
    }
}

impl MatrixFamily {
    pub fn new(members: Vec<(String, SquareMatrix)>, source: FamilySource) -> Result<Self> {
        let Some((_, first)) = members.first() else {
            return Err(Error::arg("a matrix family needs at least one member"));
        };
        let dim = first.dim();
        let mut seen = HashSet::new();
        for (label, m) in &members {
            if m.dim() != dim {
                return Err(Error::arg(format!(
                    "member {label} has dimension {}, expected {dim}",
                    m.dim()
                )));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::arg(format!("duplicate member label {label}")));
            }
            m.check_invertible().map_err(|e| e.labeled(label))?;
        }
        Ok(MatrixFamily {
            dim,
            members: members
                .into_iter()
                .map(|(label, matrix)| LabeledMatrix { label, matrix })
                .collect(),
            source,
        })
    }

    /// Members labelled `M0, M1, ...`.
    pub fn explicit(matrices: Vec<SquareMatrix>) -> Result<Self> {
        let members = matrices
            .into_iter()
            .enumerate()
            .map(|(k, m)| (format!("M{k}"), m))
            .collect();
        Self::new(members, FamilySource::ExplicitList)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn matrix(&self, k: usize) -> &SquareMatrix {
        &self.members[k].matrix
    }

    pub fn label(&self, k: usize) -> &str {
        &self.members[k].label
    }

    pub fn members(&self) -> &[LabeledMatrix] {
        &self.members
    }

    pub fn matrices(&self) -> impl Iterator<Item = &SquareMatrix> {
        self.members.iter().map(|m| &m.matrix)
    }

    pub fn source(&self) -> &FamilySource {
        &self.source
    }

    /// `{ M^{-1} }`, same order and source, labels suffixed `^-1`.
    pub fn inverse(&self) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|m| {
                m.matrix
                    .inverse()
                    .map(|inv| (format!("{}^-1", m.label), inv))
                    .map_err(|e| e.labeled(&m.label))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, self.source.clone())
    }

    /// `{ N M N^{-1} }`.
    pub fn conjugate(&self, n: &SquareMatrix) -> Result<Self> {
        let inv = n.inverse()?;
        let members = self
            .members
            .iter()
            .map(|m| (m.label.clone(), &(n * &m.matrix) * &inv))
            .collect();
        Self::new(members, self.source.clone())
    }

    /// Sub-family keeping the listed members in order, as an explicit list.
    pub fn subfamily(&self, keep: &[usize]) -> Result<Self> {
        let members = keep
            .iter()
            .map(|&k| {
                self.members
                    .get(k)
                    .map(|m| (m.label.clone(), m.matrix.clone()))
                    .ok_or_else(|| Error::arg(format!("member index {k} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, FamilySource::ExplicitList)
    }

    /// Every entry shifted by independent uniform noise in `[-noise, noise]`;
    /// labels and source are kept.
    pub fn perturbed(&self, noise: f64, seed: u64) -> Result<Self> {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::arg("noise must be finite and non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members = self
            .members
            .iter()
            .map(|m| {
                let d = self.dim;
                let shift = DMatrix::from_fn(d, d, |_, _| rng.random_range(-noise..=noise));
                Ok((m.label.clone(), SquareMatrix::new(m.matrix.as_matrix() + shift)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, self.source.clone())
    }

    pub fn max_norm(&self) -> Result<f64> {
        self.matrices()
            .map(|m| m.operator_norm())
            .try_fold(0.0_f64, |acc, n| n.map(|n| acc.max(n)))
    }
}

/// A finite sequence of member indices; `product(w) = M_{w_1} M_{w_2} ... M_{w_N}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(indices: Vec<usize>, family: &MatrixFamily) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::arg("words must have at least one letter"));
        }
        if let Some(&bad) = indices.iter().find(|&&k| k >= family.len()) {
            return Err(Error::arg(format!(
                "letter {bad} out of range for a family of {} members",
                family.len()
            )));
        }
        Ok(Word(indices))
    }

    pub(crate) fn from_indices(indices: Vec<usize>) -> Self {
        Word(indices)
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self, family: &MatrixFamily) -> Vec<String> {
        self.0.iter().map(|&k| family.label(k).to_string()).collect()
    }

    /// The word repeated `k` times.
    pub fn power(&self, k: usize) -> Word {
        Word(self.0.repeat(k))
    }

    /// Letters in reverse order.
    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// Letters `range` as a word.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Word {
        Word(self.0[range].to_vec())
    }

    pub fn concat(&self, other: &Word) -> Word {
        Word([self.0.as_slice(), other.0.as_slice()].concat())
    }

    /// `M_{w_1} ... M_{w_N}` in factored form.
    pub fn product(&self, family: &MatrixFamily) -> Result<ProductAccumulator> {
        let mut acc = ProductAccumulator::identity(family.dim());
        for &k in self.0.iter().rev() {
            acc.left_multiply(family.matrix(k))
                .map_err(|e| e.labeled(family.label(k)))?;
        }
        Ok(acc)
    }

    /// Plain product matrix; only for short words.
    pub fn product_matrix(&self, family: &MatrixFamily) -> SquareMatrix {
        self.0
            .iter()
            .fold(SquareMatrix::identity(family.dim()), |p, &k| {
                &p * family.matrix(k)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_validation() {
        let a = SquareMatrix::diagonal(&[2.0, 1.0]);
        assert!(MatrixFamily::new(vec![], FamilySource::ExplicitList).is_err());
        let dup = vec![("A".to_string(), a.clone()), ("A".to_string(), a.clone())];
        assert!(MatrixFamily::new(dup, FamilySource::ExplicitList).is_err());
        let sing = vec![("S".to_string(), SquareMatrix::diagonal(&[1.0, 0.0]))];
        match MatrixFamily::new(sing, FamilySource::ExplicitList) {
            Err(Error::NotInvertible { label, .. }) => assert_eq!(label, "S"),
            other => panic!("unexpected {other:?}"),
        }
        let mixed = vec![
            ("A".to_string(), a),
            ("B".to_string(), SquareMatrix::identity(3)),
        ];
        assert!(MatrixFamily::new(mixed, FamilySource::ExplicitList).is_err());
    }

    #[test]
    fn word_product_order() {
        let a = SquareMatrix::from_row_slice(2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        let b = SquareMatrix::from_row_slice(2, &[1.0, 0.0, 1.0, 1.0]).unwrap();
        let fam = MatrixFamily::explicit(vec![a.clone(), b.clone()]).unwrap();
        let w = Word::new(vec![0, 1], &fam).unwrap();
        let ab = &a * &b;
        assert!((w.product(&fam).unwrap().to_matrix() - ab.as_matrix()).norm() < 1e-14);
        assert_eq!(w.product_matrix(&fam), ab);
        assert!(Word::new(vec![], &fam).is_err());
        assert!(Word::new(vec![2], &fam).is_err());
    }

    #[test]
    fn family_json_round_trip() {
        let fam = MatrixFamily::explicit(vec![
            SquareMatrix::diagonal(&[2.0, 1.0]),
            SquareMatrix::rotation2(0.3),
        ])
        .unwrap();
        let s = serde_json::to_string(&fam).unwrap();
        let back: MatrixFamily = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fam);
    }
}
