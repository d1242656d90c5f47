use rand::Rng;

use super::Objective;
use crate::error::{Error, EvalError, Result};
use crate::rng;
use crate::space::{ConfigSpace, Configuration, ParamSpec, Value};

/// Binary dimensions `x_i` plus continuous dimensions `y_j` in [0, 1]; the
/// loss is `-(sum x_i + sum mean_b(Bernoulli(y_j)))`, where the budget `b` is
/// the number of Bernoulli samples per continuous dimension.
#[derive(Debug, Clone)]
pub struct CountingOnes {
    n_cat: usize,
    n_cont: usize,
    space: ConfigSpace,
}

impl CountingOnes {
    pub fn new(n_cat: usize, n_cont: usize) -> Result<Self> {
        if n_cat + n_cont == 0 {
            return Err(Error::InvalidArgument(
                "counting ones needs at least one dimension".into(),
            ));
        }
        let mut params = Vec::with_capacity(n_cat + n_cont);
        params.extend((0..n_cat).map(|i| ParamSpec::categorical(&format!("x{i}"), &["0", "1"])));
        params.extend((0..n_cont).map(|j| ParamSpec::continuous(&format!("y{j}"), 0.0, 1.0)));
        Ok(Self {
            n_cat,
            n_cont,
            space: ConfigSpace::new(params)?,
        })
    }

    pub fn n_cat(&self) -> usize {
        self.n_cat
    }

    pub fn n_cont(&self) -> usize {
        self.n_cont
    }

    /// Best achievable loss, `-(N_cat + N_cont)`.
    pub fn optimum(&self) -> f64 {
        -((self.n_cat + self.n_cont) as f64)
    }

    fn split<'a>(
        &self,
        cfg: &'a Configuration,
    ) -> (
        impl Iterator<Item = f64> + 'a,
        impl Iterator<Item = f64> + 'a,
    ) {
        let n_cat = self.n_cat;
        let xs = cfg.values()[..n_cat].iter().map(|v| match v {
            Value::Cat(k) => *k as f64,
            _ => 0.0,
        });
        let ys = cfg.values()[n_cat..].iter().map(|v| match v {
            Value::Float(y) => *y,
            _ => 0.0,
        });
        (xs, ys)
    }
}

impl Objective for CountingOnes {
    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn evaluate(&self, cfg: &Configuration, budget: u64, seed: u64) -> Result<f64, EvalError> {
        if budget < 1 {
            return Err(EvalError::InvalidBudget(budget));
        }
        if !self.space.validate(cfg).is_empty() {
            return Err(EvalError::Protocol(
                "configuration outside the counting ones space".into(),
            ));
        }
        let (xs, ys) = self.split(cfg);
        let mut total: f64 = xs.sum();
        for (j, y) in ys.enumerate() {
            // Draw t of dimension j is the t-th output of stream (seed, j).
            let mut stream = rng::stream(rng::derive(seed, &[j as u64]));
            let hits = (0..budget).filter(|_| stream.random::<f64>() < y).count();
            total += hits as f64 / budget as f64;
        }
        Ok(-total)
    }

    fn true_loss(&self, cfg: &Configuration) -> Option<f64> {
        let (xs, ys) = self.split(cfg);
        Some(-(xs.sum::<f64>() + ys.sum::<f64>()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_cat: usize, x: usize, ys: &[f64]) -> Configuration {
        let mut v: Vec<Value> = (0..n_cat).map(|_| Value::Cat(x)).collect();
        v.extend(ys.iter().map(|&y| Value::Float(y)));
        Configuration::new(v)
    }

    #[test]
    fn extremes_are_deterministic() {
        let f = CountingOnes::new(8, 8).unwrap();
        for b in [1, 9, 729] {
            assert_eq!(f.evaluate(&cfg(8, 1, &[1.0; 8]), b, 3).unwrap(), -16.0);
            assert_eq!(f.evaluate(&cfg(8, 0, &[0.0; 8]), b, 3).unwrap(), 0.0);
        }
        assert_eq!(f.optimum(), -16.0);
    }

    #[test]
    fn four_sample_support() {
        let f = CountingOnes::new(0, 1).unwrap();
        for seed in 0..50 {
            let l = f.evaluate(&cfg(0, 0, &[0.5]), 4, seed).unwrap();
            assert!([0.0, -0.25, -0.5, -0.75, -1.0].contains(&l), "{l}");
        }
    }

    #[test]
    fn true_loss_examples() {
        let f = CountingOnes::new(8, 8).unwrap();
        assert_eq!(f.true_loss(&cfg(8, 1, &[1.0; 8])), Some(-16.0));
        let mut v: Vec<Value> = (0..8).map(|i| Value::Cat(i % 2)).collect();
        v.extend([Value::Float(0.5); 8]);
        assert_eq!(f.true_loss(&Configuration::new(v)), Some(-8.0));
    }

    #[test]
    fn rejects_zero_budget() {
        let f = CountingOnes::new(1, 1).unwrap();
        assert_eq!(
            f.evaluate(&cfg(1, 1, &[0.5]), 0, 1),
            Err(EvalError::InvalidBudget(0))
        );
        assert!(CountingOnes::new(0, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let f = CountingOnes::new(2, 3).unwrap();
        let c = cfg(2, 1, &[0.3, 0.6, 0.9]);
        assert_eq!(
            f.evaluate(&c, 27, 5).unwrap(),
            f.evaluate(&c, 27, 5).unwrap()
        );
    }
}
