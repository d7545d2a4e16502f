//! Random monotone strain paths: a few sorted control points joined by a
//! monotone cubic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::interp::MonotoneCubic;
use crate::error::{Error, Result};
use crate::field::{ForcingKind, ForcingSeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadPathConfig {
    /// Number of discrete steps T.
    pub steps: usize,
    pub n_ctrl: usize,
    pub final_strain_low: f64,
    pub final_strain_high: f64,
    pub seed: u64,
}

impl Default for LoadPathConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            n_ctrl: 5,
            final_strain_low: 0.07,
            final_strain_high: 0.11,
            seed: 0,
        }
    }
}

impl LoadPathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ctrl < 2 {
            return Err(Error::Config("a load path needs at least 2 control points".into()));
        }
        if self.n_ctrl > self.steps {
            return Err(Error::Config(format!(
                "{} control points exceed {} steps",
                self.n_ctrl, self.steps
            )));
        }
        if !(self.final_strain_low < self.final_strain_high) || !self.final_strain_low.is_finite() || !self.final_strain_high.is_finite() {
            return Err(Error::Config("final strain range must satisfy low < high".into()));
        }
        Ok(())
    }
}

/// A sampled path together with the control points it interpolates.
#[derive(Clone, Debug)]
pub struct LoadPath {
    pub control_x: Vec<f64>,
    pub control_y: Vec<f64>,
    pub interpolant: MonotoneCubic,
    /// Strain at each of the `steps` discrete query points spanning `[0, T]`.
    pub values: Vec<f64>,
}

impl LoadPath {
    pub fn into_forcing(self) -> Result<ForcingSeries> {
        let ids = (0..self.values.len() as i64).collect();
        ForcingSeries::new(ids, self.values, ForcingKind::TimeVarying)
    }
}

pub fn sample_load_path(cfg: &LoadPathConfig) -> Result<LoadPath> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t_end = cfg.steps as f64;
    let final_strain = rng.gen_range(cfg.final_strain_low..cfg.final_strain_high);

    let mut control_x = vec![0.0];
    let mut control_y = vec![0.0];
    for _ in 1..cfg.n_ctrl - 1 {
        let prev_x = *control_x.last().unwrap();
        let prev_y = *control_y.last().unwrap();
        let y = rng.gen_range(prev_y..=final_strain);
        // Duplicate abscissae are possible in floating point; draw again.
        let x = loop {
            let x = rng.gen_range(prev_x..t_end);
            if x > prev_x && x < t_end {
                break x;
            }
        };
        control_x.push(x);
        control_y.push(y);
    }
    control_x.push(t_end);
    control_y.push(final_strain);

    let interpolant = MonotoneCubic::new(&control_x, &control_y)?;
    let denom = (cfg.steps - 1).max(1) as f64;
    let values = (0..cfg.steps)
        .map(|j| interpolant.eval(if j + 1 == cfg.steps { t_end } else { t_end * j as f64 / denom }))
        .collect::<Result<Vec<_>>>()?;

    Ok(LoadPath {
        control_x,
        control_y,
        interpolant,
        values,
    })
}

pub fn generate_load_path(cfg: &LoadPathConfig) -> Result<ForcingSeries> {
    sample_load_path(cfg)?.into_forcing()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_path_properties() {
        let f = generate_load_path(&LoadPathConfig::default()).unwrap();
        let v = f.values();
        assert_eq!(v.len(), 100);
        assert_eq!(v[0], 0.0);
        assert!((0.07..=0.11).contains(&v[99]));
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(f.kind(), ForcingKind::TimeVarying);
    }

    #[test]
    fn endpoints_and_controls() {
        for seed in 0..200 {
            let p = sample_load_path(&LoadPathConfig { seed, ..Default::default() }).unwrap();
            assert_eq!(p.control_x.len(), 5);
            assert_eq!(*p.values.last().unwrap(), *p.control_y.last().unwrap());
            for (x, y) in p.control_x.iter().zip(&p.control_y) {
                assert!((p.interpolant.eval(*x).unwrap() - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn two_control_points_is_linear() {
        let cfg = LoadPathConfig { steps: 11, n_ctrl: 2, ..Default::default() };
        let p = sample_load_path(&cfg).unwrap();
        let end = p.values[10];
        for (j, v) in p.values.iter().enumerate() {
            assert!((v - end * j as f64 / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let too_many = LoadPathConfig { steps: 4, n_ctrl: 5, ..Default::default() };
        assert!(matches!(generate_load_path(&too_many), Err(Error::Config(_))));
        let inverted = LoadPathConfig { final_strain_low: 0.2, ..Default::default() };
        assert!(generate_load_path(&inverted).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = LoadPathConfig { seed: 42, ..Default::default() };
        assert_eq!(generate_load_path(&cfg).unwrap(), generate_load_path(&cfg).unwrap());
    }
}
