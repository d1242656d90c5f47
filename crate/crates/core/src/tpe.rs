//! Tree Parzen Estimator with one good/bad density pair over all fidelities.
//!
//! Continuous and integer dimensions use a Gaussian kernel on the encoded
//! value, categorical dimensions an Aitchison-Aitken kernel. Bandwidths
//! follow Scott's rule per dimension. Both densities hold at least `d+1`
//! points, and candidates are drawn from a widened good density.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::space::{ConfigSpace, Configuration, Domain};

pub const DEFAULT_GAMMA: f64 = 0.15;
/// Candidates drawn per proposal.
pub const N_CANDIDATES: usize = 64;
/// Floor added to the bad density before taking the ratio.
pub const RATIO_FLOOR: f64 = 1e-12;
/// Minimum spread of a Gaussian dimension, as a fraction of its domain width.
pub const MIN_SPREAD_FRACTION: f64 = 1e-3;
/// Minimum spread of a categorical dimension's indices, as a fraction of
/// `c-1`. Keeps a small mutation rate once all support points agree.
pub const MIN_CATEGORICAL_SPREAD_FRACTION: f64 = 0.05;
/// Gaussian kernels are widened by this factor when drawing candidates.
pub const SAMPLING_BANDWIDTH_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub config: Configuration,
    pub budget: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DimKernel {
    Gaussian { low: f64, high: f64 },
    Categorical { n: usize },
}

fn kernels_of(space: &ConfigSpace) -> Vec<DimKernel> {
    space
        .params()
        .iter()
        .map(|p| match &p.domain {
            Domain::Categorical { categories } => DimKernel::Categorical {
                n: categories.len(),
            },
            d => {
                let (low, high) = d.encoded_bounds();
                DimKernel::Gaussian { low, high }
            }
        })
        .collect()
}

/// Scott's rule factor `m^(-1/(d+4))`.
pub fn scott_factor(m: usize, d: usize) -> f64 {
    (m as f64).powf(-1.0 / (d as f64 + 4.0))
}

/// Gaussian bandwidth `sigma * m^(-1/(d+4))`.
pub fn scott_bandwidth(sigma: f64, m: usize, d: usize) -> f64 {
    sigma * scott_factor(m, d)
}

/// Aitchison-Aitken weight `sigma * m^(-1/(d+4))`, capped at the uniform
/// limit `(c-1)/c`. `sigma` is the spread of the category indices.
pub fn aitchison_aitken_weight(sigma: f64, c: usize, m: usize, d: usize) -> f64 {
    let cap = (c as f64 - 1.0) / c as f64;
    scott_bandwidth(sigma, m, d).min(cap)
}

/// Aitchison-Aitken kernel value: `1-h` on a match, `h/(c-1)` otherwise.
pub fn aitchison_aitken(h: f64, c: usize, matches: bool) -> f64 {
    if matches {
        1.0 - h
    } else {
        h / (c as f64 - 1.0)
    }
}

pub fn gaussian(x: f64, center: f64, h: f64) -> f64 {
    let z = (x - center) / h;
    (-0.5 * z * z).exp() / (h * (2.0 * PI).sqrt())
}

fn sample_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Product-kernel density estimator over encoded points.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    kernels: Vec<DimKernel>,
    /// Row-major, `m x d`.
    points: Vec<f64>,
    bandwidths: Vec<f64>,
    // Split layout for evaluation: Gaussian and categorical columns per point.
    gauss_dims: Vec<usize>,
    cat_dims: Vec<usize>,
    /// Gaussian coordinates pre-scaled by `1/h`.
    gauss_points: Vec<f64>,
    cat_points: Vec<f64>,
    inv_h: Vec<f64>,
    /// Per categorical dimension, `ln(match) - ln(mismatch)`.
    cat_gain: Vec<f64>,
    /// Log kernel of a point with zero Gaussian distance and no categorical match.
    base: f64,
}

impl Kde {
    fn fit(kernels: &[DimKernel], rows: &[&[f64]]) -> Self {
        let d = kernels.len();
        let m = rows.len();
        let mut points = Vec::with_capacity(m * d);
        for r in rows {
            points.extend_from_slice(r);
        }
        let mut bandwidths = Vec::with_capacity(d);
        let (mut gauss_dims, mut cat_dims) = (Vec::new(), Vec::new());
        let (mut inv_h, mut cat_gain) = (Vec::new(), Vec::new());
        let mut base = 0.0;
        for (j, k) in kernels.iter().enumerate() {
            let sigma = sample_std(rows.iter().map(|r| r[j]));
            match *k {
                DimKernel::Gaussian { low, high } => {
                    let width = if high > low { high - low } else { 1.0 };
                    let h = scott_bandwidth(sigma.max(MIN_SPREAD_FRACTION * width), m, d);
                    bandwidths.push(h);
                    gauss_dims.push(j);
                    inv_h.push(1.0 / h);
                    base -= (h * (2.0 * PI).sqrt()).ln();
                }
                DimKernel::Categorical { n } => {
                    let width = (n - 1) as f64;
                    let h = aitchison_aitken_weight(
                        sigma.max(MIN_CATEGORICAL_SPREAD_FRACTION * width),
                        n,
                        m,
                        d,
                    );
                    bandwidths.push(h);
                    cat_dims.push(j);
                    let (hit, miss) = (
                        aitchison_aitken(h, n, true).ln(),
                        aitchison_aitken(h, n, false).ln(),
                    );
                    cat_gain.push(hit - miss);
                    base += miss;
                }
            }
        }
        let gauss_points = rows
            .iter()
            .flat_map(|r| gauss_dims.iter().zip(&inv_h).map(|(&j, ih)| r[j] * ih))
            .collect();
        let cat_points = rows
            .iter()
            .flat_map(|r| cat_dims.iter().map(|&j| r[j]))
            .collect();
        Self {
            kernels: kernels.to_vec(),
            points,
            bandwidths,
            gauss_dims,
            cat_dims,
            gauss_points,
            cat_points,
            inv_h,
            cat_gain,
            base,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kernels.len()
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    /// Log of the mean product kernel at an encoded point.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let xg: Vec<f64> = self
            .gauss_dims
            .iter()
            .zip(&self.inv_h)
            .map(|(&j, ih)| x[j] * ih)
            .collect();
        let xc: Vec<f64> = self.cat_dims.iter().map(|&j| x[j]).collect();
        let (ng, nc) = (xg.len(), xc.len());
        // Streaming log-sum-exp over support points; terms more than
        // e^-60 below the running maximum are dropped.
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for i in 0..self.len() {
            let mut s = self.base;
            let cp = &self.cat_points[i * nc..(i + 1) * nc];
            for k in 0..nc {
                if cp[k] == xc[k] {
                    s += self.cat_gain[k];
                }
            }
            let gp = &self.gauss_points[i * ng..(i + 1) * ng];
            let mut q = 0.0;
            for k in 0..ng {
                let z = xg[k] - gp[k];
                q += z * z;
            }
            s -= 0.5 * q;
            if s > max {
                sum = sum * (max - s).exp() + 1.0;
                max = s;
            } else if s > max - 60.0 {
                sum += (s - max).exp();
            }
        }
        if !max.is_finite() {
            return f64::NEG_INFINITY;
        }
        max + sum.ln() - (self.len() as f64).ln()
    }

    pub fn density_encoded(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Density at a configuration of `space`.
    pub fn density(&self, space: &ConfigSpace, cfg: &Configuration) -> Result<f64> {
        Ok(self.density_encoded(&space.encode(cfg)?))
    }

    /// Draws from the kernel centred on support point `i`.
    fn perturb<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Vec<f64> {
        let center = self.point(i);
        self.kernels
            .iter()
            .enumerate()
            .map(|(j, k)| match *k {
                DimKernel::Gaussian { low, high } => {
                    let z: f64 = rng.sample(StandardNormal);
                    reflect(
                        center[j] + SAMPLING_BANDWIDTH_FACTOR * self.bandwidths[j] * z,
                        low,
                        high,
                    )
                }
                DimKernel::Categorical { n } => {
                    let h = self.bandwidths[j];
                    let keep = center[j] as usize;
                    if rng.random::<f64>() < 1.0 - h {
                        keep as f64
                    } else {
                        let k = rng.random_range(0..n - 1);
                        (if k >= keep { k + 1 } else { k }) as f64
                    }
                }
            })
            .collect()
    }
}

fn reflect(mut x: f64, low: f64, high: f64) -> f64 {
    if high <= low {
        return low;
    }
    let width = high - low;
    // Fold into [low, low + 2w), then mirror the upper half.
    x = (x - low).rem_euclid(2.0 * width);
    if x > width {
        x = 2.0 * width - x;
    }
    (low + x).clamp(low, high)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpeModel {
    pub gamma: f64,
    pub good: Kde,
    pub bad: Kde,
    /// Worst loss admitted to the good density.
    pub y_star: f64,
    /// Sizes of the loss split. The densities may hold more points.
    pub n_good: usize,
    pub n_bad: usize,
}

/// Number of best observations assigned to the good density.
pub fn n_good(gamma: f64, n: usize) -> usize {
    // Guard against `gamma * n` landing a rounding error above an integer.
    ((gamma * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// True once `n` observations can support a model in `dim` dimensions.
pub fn ready(n: usize, dim: usize, gamma: f64) -> bool {
    let g = n_good(gamma, n);
    n >= dim + 2 && g >= 1 && g < n
}

impl TpeModel {
    /// Fits on encoded points; `None` when below the readiness threshold.
    fn fit_encoded(space: &ConfigSpace, points: &[(&[f64], f64)], gamma: f64) -> Option<Self> {
        let n = points.len();
        if !ready(n, space.dim(), gamma) {
            return None;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| points[a].1.total_cmp(&points[b].1));
        let n_good = n_good(gamma, n);
        let kernels = kernels_of(space);
        // Each density keeps at least d+1 points, so with few observations
        // the two sets overlap.
        let min_points = space.dim() + 1;
        let ng = n_good.max(min_points).min(n);
        let nb = (n - n_good).max(min_points).min(n);
        let good_rows: Vec<&[f64]> = order[..ng].iter().map(|&i| points[i].0).collect();
        let bad_rows: Vec<&[f64]> = order[n - nb..].iter().map(|&i| points[i].0).collect();
        Some(Self {
            gamma,
            y_star: points[order[n_good - 1]].1,
            good: Kde::fit(&kernels, &good_rows),
            bad: Kde::fit(&kernels, &bad_rows),
            n_good,
            n_bad: n - n_good,
        })
    }

    /// Fits the density pair on all observations. Non-finite losses are
    /// skipped.
    pub fn fit(
        observations: &[Observation],
        space: &ConfigSpace,
        gamma: f64,
    ) -> Result<Option<Self>> {
        let encoded: Vec<(Vec<f64>, f64)> = observations
            .iter()
            .filter(|o| o.loss.is_finite())
            .map(|o| space.encode(&o.config).map(|e| (e, o.loss)))
            .collect::<Result<_>>()?;
        let refs: Vec<(&[f64], f64)> = encoded.iter().map(|(e, l)| (e.as_slice(), *l)).collect();
        Ok(Self::fit_encoded(space, &refs, gamma))
    }

    /// `ln l(x) - ln(g(x) + floor)`.
    pub fn log_ratio(&self, x: &[f64]) -> f64 {
        self.good.log_density(x) - log_add_exp(self.bad.log_density(x), RATIO_FLOOR.ln())
    }

    /// Samples candidates from the good density and returns the one with the
    /// largest good-to-bad density ratio.
    pub fn propose<R: Rng + ?Sized>(&self, space: &ConfigSpace, rng: &mut R) -> Configuration {
        let mut best: Option<(f64, Configuration)> = None;
        for _ in 0..N_CANDIDATES {
            let i = rng.random_range(0..self.good.len());
            let raw = self.good.perturb(i, rng);
            let cfg = space
                .decode(&raw)
                .expect("perturbed vector matches space dimension");
            let score = self.log_ratio(&space.encode_unchecked(&cfg));
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, cfg));
            }
        }
        best.expect("at least one candidate").1
    }
}

/// Incrementally grown observation set with the model refit on every ingest.
#[derive(Debug, Clone)]
pub struct TpeState {
    space: ConfigSpace,
    gamma: f64,
    encoded: Vec<(Vec<f64>, f64)>,
    model: Option<TpeModel>,
    fits: usize,
}

impl TpeState {
    pub fn new(space: ConfigSpace, gamma: f64) -> Self {
        Self {
            space,
            gamma,
            encoded: Vec::new(),
            model: None,
            fits: 0,
        }
    }

    /// Appends observations (failed ones are dropped) and refits.
    pub fn ingest(&mut self, observations: impl IntoIterator<Item = Observation>) -> Result<()> {
        for o in observations {
            if o.loss.is_finite() {
                let e = self.space.encode(&o.config)?;
                self.encoded.push((e, o.loss));
            }
        }
        self.refit();
        Ok(())
    }

    pub(crate) fn ingest_encoded(&mut self, points: impl IntoIterator<Item = (Vec<f64>, f64)>) {
        self.encoded
            .extend(points.into_iter().filter(|(_, l)| l.is_finite()));
        self.refit();
    }

    fn refit(&mut self) {
        let refs: Vec<(&[f64], f64)> = self
            .encoded
            .iter()
            .map(|(e, l)| (e.as_slice(), *l))
            .collect();
        self.model = TpeModel::fit_encoded(&self.space, &refs, self.gamma);
        self.fits += 1;
    }

    pub fn model(&self) -> Option<&TpeModel> {
        self.model.as_ref()
    }

    pub fn n_observations(&self) -> usize {
        self.encoded.len()
    }

    /// Number of ingest calls so far.
    pub fn fits(&self) -> usize {
        self.fits
    }
}
