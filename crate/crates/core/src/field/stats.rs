use serde::{Deserialize, Serialize};

use super::{DatasetBundle, ForcingKind, ForcingSeries, GridField, Split};
use crate::error::{Error, Result};

/// Standard deviations below this are replaced by 1.0.
pub const STD_FLOOR: f64 = 1e-8;

/// Training-split statistics used to standardize fields and forcing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub field_mean: f64,
    pub field_std: f64,
    pub forcing_mean: Vec<f64>,
    pub forcing_std: Vec<f64>,
}

impl StandardizationStats {
    /// Stats that leave every value unchanged.
    pub fn identity(forcing_components: usize) -> Self {
        Self {
            field_mean: 0.0,
            field_std: 1.0,
            forcing_mean: vec![0.0; forcing_components],
            forcing_std: vec![1.0; forcing_components],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.field_mean.is_finite()
            && self.forcing_mean.iter().all(|v| v.is_finite())
            && self.forcing_std.iter().all(|v| v.is_finite());
        if !finite || !(self.field_std > 0.0) || self.forcing_std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("standardization stats must be finite with positive std".into()));
        }
        if self.forcing_mean.len() != self.forcing_std.len() {
            return Err(Error::Shape("forcing mean/std lengths differ".into()));
        }
        Ok(())
    }

    pub fn standardize_value(&self, v: f64) -> f64 {
        (v - self.field_mean) / self.field_std
    }

    pub fn destandardize_value(&self, v: f64) -> f64 {
        v * self.field_std + self.field_mean
    }

    pub fn standardize_field(&self, field: &GridField) -> Result<GridField> {
        field.map(|v| self.standardize_value(v))
    }

    pub fn destandardize_field(&self, field: &GridField) -> Result<GridField> {
        field.map(|v| self.destandardize_value(v))
    }

    pub fn standardize_forcing(&self, forcing: &ForcingSeries) -> Result<ForcingSeries> {
        self.map_forcing(forcing, |v, m, s| (v - m) / s)
    }

    pub fn destandardize_forcing(&self, forcing: &ForcingSeries) -> Result<ForcingSeries> {
        self.map_forcing(forcing, |v, m, s| v * s + m)
    }

    fn map_forcing(
        &self,
        forcing: &ForcingSeries,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<ForcingSeries> {
        let components = forcing.kind().stat_components(forcing.values().len());
        if components != self.forcing_mean.len() {
            return Err(Error::Shape(format!(
                "stats carry {} forcing components, series needs {components}",
                self.forcing_mean.len()
            )));
        }
        let values = forcing
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = match forcing.kind() {
                    ForcingKind::TimeVarying => 0,
                    _ => i,
                };
                f(v, self.forcing_mean[c], self.forcing_std[c])
            })
            .collect();
        Ok(forcing.with_values(values))
    }
}

fn mean_std(sum: f64, sum_sq_dev: f64, n: usize) -> (f64, f64) {
    let mean = sum / n as f64;
    let std = (sum_sq_dev / n as f64).sqrt();
    (mean, if std < STD_FLOOR { 1.0 } else { std })
}

/// Global mean/std over all frame values, plus per-component forcing stats.
/// Standard deviations are population (1/n) estimates.
pub fn compute_standardization(bundle: &DatasetBundle) -> Result<StandardizationStats> {
    if bundle.split() != Split::Train {
        return Err(Error::Config(
            "standardization statistics must come from the training split".into(),
        ));
    }
    if bundle.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let frames = || bundle.trajectories().iter().flat_map(|t| t.frames());
    let n: usize = frames().map(GridField::len).sum();
    let sum: f64 = frames().flat_map(|f| f.values()).sum();
    let mean = sum / n as f64;
    let dev: f64 = frames()
        .flat_map(|f| f.values())
        .map(|v| (v - mean) * (v - mean))
        .sum();
    let (field_mean, field_std) = mean_std(sum, dev, n);

    let kind = bundle.forcing_kind().unwrap_or(ForcingKind::None);
    let components = kind.stat_components(bundle.forcing_len());
    let mut forcing_mean = Vec::with_capacity(components);
    let mut forcing_std = Vec::with_capacity(components);
    for c in 0..components {
        let samples: Vec<f64> = bundle
            .trajectories()
            .iter()
            .flat_map(|t| {
                let v = t.forcing().values();
                match kind {
                    ForcingKind::TimeVarying => v.to_vec(),
                    _ => vec![v[c]],
                }
            })
            .collect();
        let s: f64 = samples.iter().sum();
        let m = s / samples.len() as f64;
        let d: f64 = samples.iter().map(|v| (v - m) * (v - m)).sum();
        let (m, sd) = mean_std(s, d, samples.len());
        forcing_mean.push(m);
        forcing_std.push(sd);
    }

    Ok(StandardizationStats {
        field_mean,
        field_std,
        forcing_mean,
        forcing_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Trajectory;
    use proptest::prelude::*;

    fn bundle_of(frames: Vec<GridField>, split: Split) -> DatasetBundle {
        let n = frames.len();
        let t = Trajectory::new("t0", "A", frames, ForcingSeries::unforced(n)).unwrap();
        DatasetBundle::new(vec![t], split).unwrap()
    }

    #[test]
    fn constant_field_uses_std_floor() {
        let b = bundle_of(vec![GridField::filled(3, 3, 5.0); 4], Split::Train);
        let s = compute_standardization(&b).unwrap();
        assert_eq!(s.field_mean, 5.0);
        assert_eq!(s.field_std, 1.0);
    }

    #[test]
    fn two_values_mean_and_std() {
        let f = GridField::new(2, 1, vec![0.0, 2.0]).unwrap();
        let s = compute_standardization(&bundle_of(vec![f.clone(), f], Split::Train)).unwrap();
        assert!((s.field_mean - 1.0).abs() < 1e-15);
        assert!((s.field_std - 1.0).abs() < 1e-15);
    }

    #[test]
    fn test_split_and_empty_rejected() {
        let b = bundle_of(vec![GridField::zeros(2, 2); 2], Split::Test);
        assert!(matches!(compute_standardization(&b), Err(Error::Config(_))));
        let empty = DatasetBundle::new(vec![], Split::Train).unwrap();
        assert!(matches!(compute_standardization(&empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn train_stats_apply_unchanged_to_test() {
        let train = bundle_of(
            vec![GridField::new(2, 1, vec![0.0, 2.0]).unwrap(); 2],
            Split::Train,
        );
        let stats = compute_standardization(&train).unwrap();
        let test = bundle_of(vec![GridField::filled(2, 1, 3.0); 2], Split::Test);
        let z = test.standardized(&stats).unwrap();
        assert_eq!(z.stats(), Some(&stats));
        assert!(z.trajectories()[0].frames()[0].values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn standardize_examples() {
        let s = StandardizationStats {
            field_mean: 2.5,
            field_std: 0.5,
            forcing_mean: vec![],
            forcing_std: vec![],
        };
        let at_mean = s.standardize_field(&GridField::filled(3, 2, 2.5)).unwrap();
        assert!(at_mean.values().iter().all(|&v| v == 0.0));
        let one = s.standardize_field(&GridField::filled(3, 2, 3.0)).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));
        let back = s.destandardize_field(&GridField::filled(2, 2, 0.0)).unwrap();
        assert!(back.values().iter().all(|&v| v == 2.5));
        let back = s.destandardize_field(&GridField::filled(2, 2, 1.0)).unwrap();
        assert!(back.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn forcing_standardization_per_component() {
        let s = StandardizationStats {
            field_mean: 0.0,
            field_std: 1.0,
            forcing_mean: vec![1.0, 10.0],
            forcing_std: vec![2.0, 5.0],
        };
        let f = ForcingSeries::constant(3, vec![3.0, 0.0]).unwrap();
        let z = s.standardize_forcing(&f).unwrap();
        assert_eq!(z.values(), &[1.0, -2.0]);
        assert_eq!(s.destandardize_forcing(&z).unwrap(), f);
        let wrong = ForcingSeries::constant(3, vec![1.0]).unwrap();
        assert!(s.standardize_forcing(&wrong).is_err());
    }

    proptest! {
        #[test]
        fn standardize_round_trip(
            mean in -1e3f64..1e3,
            std in 1e-3f64..1e3,
            values in prop::collection::vec(-1e4f64..1e4, 16),
        ) {
            let s = StandardizationStats { field_mean: mean, field_std: std, forcing_mean: vec![], forcing_std: vec![] };
            let f = GridField::new(4, 4, values).unwrap();
            let back = s.destandardize_field(&s.standardize_field(&f).unwrap()).unwrap();
            for (a, b) in f.values().iter().zip(back.values()) {
                let scale = a.abs().max(mean.abs()).max(std).max(1e-300);
                prop_assert!((a - b).abs() / scale <= 1e-12);
            }
        }
    }
}
