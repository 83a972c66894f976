//! Distributions over nonnegative counts: Poisson pmfs, total variation
//! distance, empirical frequency tables, and the convergence experiment
//! that lines up pattern-count laws against their Poisson targets size
//! by size.

use rayon::prelude::*;

use crate::asymptotics::{stein_chen_rhs, Schedule};
use crate::error::{Error, Result};
use crate::gibbs_exact::{exact_law_pair, ExactLaw};
use crate::lattice::TorusLattice;
use crate::patterns::{maximality_probability, probability_gap_checked, LocalPattern};
use crate::sampler::{run_chain, ChainConfig};

/// Tail tolerance used for Poisson targets inside the convergence table.
pub const POISSON_TAIL_TOL: f64 = 1e-12;

/// Where a count distribution came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Exact,
    Poisson { lambda: f64 },
    Empirical { samples: u64 },
}

/// A probability mass function over nonnegative counts with provenance.
#[derive(Debug, Clone)]
pub struct CountDistribution {
    pmf: Vec<f64>,
    source: Source,
    mean: f64,
    variance: f64,
    /// Mass beyond the stored support (Poisson truncation); zero for
    /// exact and empirical distributions.
    truncated_mass: f64,
    /// Per-bin binomial standard errors, empirical distributions only.
    mc_stderr: Option<Vec<f64>>,
}

impl CountDistribution {
    /// Wrap an exact pmf. Entries must be nonnegative and sum to one
    /// within 1e-12.
    pub fn exact_from_pmf(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::EmptyInput("pmf".into()));
        }
        if pmf.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidParameter(
                "pmf entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "pmf sums to {total}, not 1"
            )));
        }
        let (mean, variance) = moments(&pmf);
        Ok(Self {
            pmf,
            source: Source::Exact,
            mean,
            variance,
            truncated_mass: 0.0,
            mc_stderr: None,
        })
    }

    pub fn from_exact_law(law: &ExactLaw) -> Self {
        let (mean, variance) = moments(&law.pmf);
        Self {
            pmf: law.pmf.clone(),
            source: Source::Exact,
            mean,
            variance,
            truncated_mass: 0.0,
            mc_stderr: None,
        }
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, count: usize) -> f64 {
        self.pmf.get(count).copied().unwrap_or(0.0)
    }

    pub fn support_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    pub fn mc_stderr(&self) -> Option<&[f64]> {
        self.mc_stderr.as_deref()
    }
}

fn moments(pmf: &[f64]) -> (f64, f64) {
    let mean: f64 = pmf.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
    let second: f64 = pmf
        .iter()
        .enumerate()
        .map(|(m, p)| (m * m) as f64 * p)
        .sum();
    (mean, second - mean * mean)
}

/// Poisson pmf by the log-space recurrence, truncated at the first point
/// where the remaining tail mass drops below `tail_tol`; the truncated
/// mass is recorded on the distribution.
pub fn poisson_pmf(lambda: f64, tail_tol: f64) -> Result<CountDistribution> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !(tail_tol > 0.0 && tail_tol <= 1e-6) {
        return Err(Error::InvalidParameter(format!(
            "tail tolerance must lie in (0, 1e-6], got {tail_tol}"
        )));
    }
    let log_lambda = lambda.ln();
    let mut log_p = -lambda;
    let mut pmf = vec![log_p.exp()];
    let mut cum = pmf[0];
    let mut k = 0u64;
    while 1.0 - cum >= tail_tol {
        k += 1;
        if k > 100_000_000 {
            return Err(Error::InvalidParameter(
                "Poisson support truncation did not converge".into(),
            ));
        }
        log_p += log_lambda - (k as f64).ln();
        let p = log_p.exp();
        pmf.push(p);
        cum += p;
    }
    let (mean, variance) = moments(&pmf);
    Ok(CountDistribution {
        pmf,
        source: Source::Poisson { lambda },
        mean,
        variance,
        truncated_mass: (1.0 - cum).max(0.0),
        mc_stderr: None,
    })
}

/// Total variation distance: half the L1 distance over the union
/// support, plus half the truncated masses as an error budget, clamped
/// to [0, 1].
pub fn tv_distance(p: &CountDistribution, q: &CountDistribution) -> f64 {
    let len = p.pmf.len().max(q.pmf.len());
    let mut acc = 0.0;
    for m in 0..len {
        acc += (p.prob(m) - q.prob(m)).abs();
    }
    ((acc + p.truncated_mass + q.truncated_mass) / 2.0).clamp(0.0, 1.0)
}

/// Frequency distribution of observed counts, with per-bin binomial
/// standard errors. Empirical total variation distances are biased
/// upward at small sample sizes; carry the sample count along.
pub fn empirical_distribution(samples: &[u64]) -> Result<CountDistribution> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("empirical sample set".into()));
    }
    let max = *samples.iter().max().unwrap() as usize;
    let n = samples.len() as f64;
    let mut counts = vec![0u64; max + 1];
    for &s in samples {
        counts[s as usize] += 1;
    }
    let pmf: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let stderr: Vec<f64> = pmf.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
    let (mean, variance) = moments(&pmf);
    Ok(CountDistribution {
        pmf,
        source: Source::Empirical {
            samples: samples.len() as u64,
        },
        mean,
        variance,
        truncated_mass: 0.0,
        mc_stderr: Some(stderr),
    })
}

/// Standard error of the sample mean by batch means: robust to the
/// autocorrelation of MCMC output. Needs at least `batches` samples.
pub fn batch_means_stderr(samples: &[u64], batches: usize) -> Option<f64> {
    if batches < 2 || samples.len() < batches {
        return None;
    }
    let per = samples.len() / batches;
    let used = per * batches;
    let grand: f64 = samples[..used].iter().map(|&x| x as f64).sum::<f64>() / used as f64;
    let mut var_of_means = 0.0;
    for b in 0..batches {
        let mean: f64 = samples[b * per..(b + 1) * per]
            .iter()
            .map(|&x| x as f64)
            .sum::<f64>()
            / per as f64;
        var_of_means += (mean - grand) * (mean - grand);
    }
    var_of_means /= (batches - 1) as f64;
    Some((var_of_means / batches as f64).sqrt())
}

/// Which engine produced a convergence row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Exact,
    Mcmc,
}

/// One size of the convergence experiment.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub theta: f64,
    pub m: f64,
    /// The calibration target lambda.
    pub lambda: f64,
    /// Mean of the upper count (exact, or empirical under MCMC).
    pub lambda_n: Option<f64>,
    /// Distance from the law of the exact count to Poisson(lambda).
    pub d_tv_x: f64,
    /// Distance from the law of the upper count to Poisson(lambda_n);
    /// exact engine only.
    pub d_tv_xbar: Option<f64>,
    /// Stein-Chen bound on `d_tv_xbar`; exact engine only.
    pub sc_bound: Option<f64>,
    pub engine: Engine,
}

/// Run the convergence experiment over an increasing size grid.
/// Out-of-regime sizes are skipped; an entirely out-of-regime grid is an
/// error. Rows are computed concurrently and emitted in increasing n.
pub fn convergence_table(
    schedule: &Schedule,
    pattern: &LocalPattern,
    n_grid: &[usize],
    engine: Engine,
    chain: Option<&ChainConfig>,
) -> Result<Vec<ConvergenceRow>> {
    if n_grid.is_empty() {
        return Err(Error::EmptyInput("size grid".into()));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "size grid must be strictly increasing".into(),
        ));
    }
    if engine == Engine::Mcmc && chain.is_none() {
        return Err(Error::InvalidChainConfig(
            "the MCMC engine needs a chain config".into(),
        ));
    }
    let mut in_regime = Vec::new();
    for &n in n_grid {
        let point = schedule.eval(n)?;
        if point.in_regime {
            in_regime.push(point);
        }
    }
    if in_regime.is_empty() {
        return Err(Error::EmptyRegime);
    }
    let rows: Result<Vec<ConvergenceRow>> = in_regime
        .par_iter()
        .map(|point| {
            let lattice = TorusLattice::new(point.n, pattern.dim(), pattern.norm(), pattern.rho())?;
            let pot = point.potentials()?;
            let delta = probability_gap_checked(pattern, &pot, &lattice)?.delta;
            let theta = maximality_probability(pattern, &pot, &lattice)?;
            let lambda = schedule.lambda();
            let target = poisson_pmf(lambda, POISSON_TAIL_TOL)?;
            let row = match engine {
                Engine::Exact => {
                    let (law_x, law_u) = exact_law_pair(&lattice, &pot, pattern)?;
                    let dist_x = CountDistribution::from_exact_law(&law_x);
                    let dist_u = CountDistribution::from_exact_law(&law_u);
                    let lambda_n = law_u.mean;
                    let d_tv_xbar = tv_distance(&dist_u, &poisson_pmf(lambda_n, POISSON_TAIL_TOL)?);
                    let sc =
                        stein_chen_rhs(lambda_n, law_u.variance, lattice.vertex_count() as f64)?;
                    ConvergenceRow {
                        n: point.n,
                        a: point.a,
                        b: point.b,
                        delta,
                        theta,
                        m: delta.max(theta),
                        lambda,
                        lambda_n: Some(lambda_n),
                        d_tv_x: tv_distance(&dist_x, &target),
                        d_tv_xbar: Some(d_tv_xbar),
                        sc_bound: Some(sc),
                        engine,
                    }
                }
                Engine::Mcmc => {
                    let cfg = chain.expect("checked above");
                    let samples = run_chain(&lattice, &pot, pattern, cfg)?;
                    let xs: Vec<u64> = samples.iter().map(|&(x, _)| x).collect();
                    let uppers: Vec<u64> = samples.iter().map(|&(_, u)| u).collect();
                    let dist_x = empirical_distribution(&xs)?;
                    let lambda_n =
                        uppers.iter().map(|&u| u as f64).sum::<f64>() / uppers.len() as f64;
                    ConvergenceRow {
                        n: point.n,
                        a: point.a,
                        b: point.b,
                        delta,
                        theta,
                        m: delta.max(theta),
                        lambda,
                        lambda_n: Some(lambda_n),
                        d_tv_x: tv_distance(&dist_x, &target),
                        d_tv_xbar: None,
                        sc_bound: None,
                        engine,
                    }
                }
            };
            Ok(row)
        })
        .collect();
    rows
}
