//! Matrix families, words over them, and domination verdicts from the decay
//! of singular-value gaps of word products.

mod enumerate;
mod family;
mod verdict;

pub use enumerate::{enumerate_gaps, fit_decay, DecayFit, GapReport, LengthStat, SearchConfig, Verdict};
pub use family::{FamilySource, LabeledMatrix, MatrixFamily, Word};
pub use verdict::{
    birkhoff_gap, is_dominated, lyapunov_estimates, periodic_witness_floor, DominationConfig,
    LyapunovEstimate,
};
