//! Splitting the ensemble MSE into uncorrelated (diagonal) and correlated
//! (cross) member-error terms.
//!
//! With member errors `e_i = M_i - f`:
//!
//! ```text
//! total = E[(mean_i M_i - f)^2] = (1/N^2) sum_i E[e_i^2] + (1/N^2) sum_{i != j} E[e_i e_j]
//!                                 \______ diag_term ____/   \_______ cross_term _______/
//! ```
//!
//! Errors that are zero-mean and independent leave only the diagonal, giving
//! `mean(MSE_i) / N`; perfectly correlated errors give `mean(MSE_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseDecomposition {
    pub n_members: usize,
    pub n_points: usize,
    pub diag_term: f64,
    pub cross_term: f64,
    /// Computed directly from the averaged prediction, not as a sum of terms.
    pub total: f64,
    pub per_member_mse: Vec<f64>,
    /// `mean(per_member_mse) / N`.
    pub lower_bound: f64,
    /// `mean(per_member_mse)`.
    pub upper_bound: f64,
}

impl MseDecomposition {
    /// `|diag + cross - total| / max(|total|, tiny)`.
    pub fn identity_residual(&self) -> f64 {
        (self.diag_term + self.cross_term - self.total).abs() / self.total.abs().max(f64::MIN_POSITIVE)
    }
}

fn running_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (i, x) in xs.enumerate() {
        m += (x - m) / (i + 1) as f64;
    }
    m
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, f)| (p - f) * (p - f)).sum::<f64>() / truth.len() as f64
}

/// `members[i]` holds member `i`'s predictions at the same points as `truth`
/// (all samples, steps and grid points flattened).
pub fn mse_decomposition<M: AsRef<[f64]>>(members: &[M], truth: &[f64]) -> Result<MseDecomposition> {
    let n = members.len();
    if n == 0 {
        return Err(Error::Config("decomposition needs at least one member".into()));
    }
    let p = truth.len();
    if p == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(i) = members.iter().position(|m| m.as_ref().len() != p) {
        return Err(Error::Shape(format!(
            "member {i} has {} predictions for {p} points",
            members[i].as_ref().len()
        )));
    }

    let per_member_mse: Vec<f64> = members.iter().map(|m| mse(m.as_ref(), truth)).collect();
    let nn = (n * n) as f64;
    let diag_term = per_member_mse.iter().sum::<f64>() / nn;

    let mut cross = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (members[i].as_ref(), members[j].as_ref());
            let s: f64 = a.iter().zip(b).zip(truth).map(|((x, y), f)| (x - f) * (y - f)).sum();
            cross += 2.0 * s / p as f64;
        }
    }
    let cross_term = cross / nn;

    let mean_pred: Vec<f64> = (0..p).map(|k| running_mean(members.iter().map(|m| m.as_ref()[k]))).collect();
    let total = mse(&mean_pred, truth);

    let upper_bound = running_mean(per_member_mse.iter().copied());
    Ok(MseDecomposition {
        n_members: n,
        n_points: p,
        diag_term,
        cross_term,
        total,
        lower_bound: upper_bound / n as f64,
        upper_bound,
        per_member_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_members_hit_the_upper_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m: Vec<f64> = truth.iter().map(|t| t + rng.gen_range(-0.3..0.3)).collect();
        for n in [1, 2, 5, 8] {
            let d = mse_decomposition(&vec![m.clone(); n], &truth).unwrap();
            assert_eq!(d.total, d.upper_bound);
            let expect = (n - 1) as f64 / n as f64 * d.upper_bound;
            assert!((d.cross_term - expect).abs() <= 1e-12 * d.upper_bound);
        }
    }

    #[test]
    fn opposite_errors_cancel() {
        let truth = vec![1.0, 2.0, 3.0];
        let d = mse_decomposition(&[vec![1.5, 2.5, 2.0], vec![0.5, 1.5, 4.0]], &truth).unwrap();
        assert_eq!(d.total, 0.0);
        assert!((d.diag_term + d.cross_term).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(mse_decomposition::<Vec<f64>>(&[], &[1.0]).is_err());
        assert!(mse_decomposition(&[vec![1.0, 2.0]], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn diag_plus_cross_is_total(
            n in 1usize..6,
            p in 1usize..40,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth: Vec<f64> = (0..p).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let members: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect();
            let d = mse_decomposition(&members, &truth).unwrap();
            prop_assert!(d.identity_residual() < 1e-10);
            prop_assert!(d.lower_bound <= d.upper_bound);
        }
    }
}
