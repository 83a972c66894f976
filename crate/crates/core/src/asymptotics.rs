//! Potential schedules n -> (a(n), b(n)) pinned to the homogeneity
//! relation `d ln n + 2 a k - 2 b gamma = ln lambda`, the per-size
//! hypothesis report behind the Poisson limit (weight-domination margin,
//! divergence trend, probability gap and maximality probability), the
//! explicit counting constants, and the Stein-Chen bound evaluator.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::TorusLattice;
use crate::patterns::{maximality_probability, probability_gap_checked, LocalPattern, Potentials};

/// How the pair potential evolves with the lattice size.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// Both potentials diverge at a matched rate: `b(n) = -a(n) / (2V)`,
    /// which makes `a + 2Vb` vanish and `a + Vb = a/2`.
    MatchedDivergence,
    /// Constant pair potential b0 >= 0; the field does all the work.
    FixedB(f64),
    /// Explicit per-size pair potentials.
    CustomB(BTreeMap<usize, f64>),
}

/// Potentials at one size, with the regime flag (`a < 0`).
#[derive(Debug, Clone, Copy)]
pub struct SchedulePoint {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub in_regime: bool,
}

impl SchedulePoint {
    pub fn potentials(&self) -> Result<Potentials> {
        Potentials::new(self.a, self.b)
    }
}

/// A potential schedule calibrated so that the expected occurrence count
/// `n^d W(eta)` stays equal to lambda.
#[derive(Debug, Clone)]
pub struct Schedule {
    kind: ScheduleKind,
    lambda: f64,
    k: u64,
    gamma: u64,
    dim: usize,
    coordination: usize,
}

impl Schedule {
    /// Matched-divergence schedule:
    /// `a(n) = ln(lambda / n^d) / (2k + gamma/V)`, `b(n) = -a(n)/(2V)`.
    pub fn matched_divergence(
        k: u64,
        gamma: u64,
        coordination: usize,
        dim: usize,
        lambda: f64,
    ) -> Result<Self> {
        if k == 0 || gamma == 0 {
            return Err(Error::InvalidParameter(
                "matched-divergence schedule needs k >= 1 and gamma >= 1".into(),
            ));
        }
        Self::build(
            ScheduleKind::MatchedDivergence,
            k,
            gamma,
            coordination,
            dim,
            lambda,
        )
    }

    /// Fixed pair potential; the field solves the homogeneity relation:
    /// `a(n) = (ln(lambda / n^d) + 2 b gamma) / (2k)`.
    pub fn fixed_b(
        k: u64,
        gamma: u64,
        coordination: usize,
        dim: usize,
        lambda: f64,
        b: f64,
    ) -> Result<Self> {
        if b < 0.0 || !b.is_finite() {
            return Err(Error::NegativePairPotential(b));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("schedule needs k >= 1".into()));
        }
        Self::build(ScheduleKind::FixedB(b), k, gamma, coordination, dim, lambda)
    }

    /// Explicit pair-potential sequence; the field solves the
    /// homogeneity relation at each listed size.
    pub fn custom_b(
        k: u64,
        gamma: u64,
        coordination: usize,
        dim: usize,
        lambda: f64,
        b_by_n: BTreeMap<usize, f64>,
    ) -> Result<Self> {
        for (&n, &b) in &b_by_n {
            if b < 0.0 || !b.is_finite() {
                return Err(Error::NegativePairPotential(b));
            }
            if n < 2 {
                return Err(Error::InvalidParameter(format!(
                    "size {n} in custom schedule"
                )));
            }
        }
        if k == 0 {
            return Err(Error::InvalidParameter("schedule needs k >= 1".into()));
        }
        Self::build(
            ScheduleKind::CustomB(b_by_n),
            k,
            gamma,
            coordination,
            dim,
            lambda,
        )
    }

    fn build(
        kind: ScheduleKind,
        k: u64,
        gamma: u64,
        coordination: usize,
        dim: usize,
        lambda: f64,
    ) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if coordination == 0 || dim == 0 {
            return Err(Error::InvalidParameter(
                "coordination and dimension must be positive".into(),
            ));
        }
        Ok(Self {
            kind,
            lambda,
            k,
            gamma,
            dim,
            coordination,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn pattern_stats(&self) -> (u64, u64) {
        (self.k, self.gamma)
    }

    /// Potentials at size n. Out-of-regime points (a >= 0) are returned
    /// flagged, not rejected.
    pub fn eval(&self, n: usize) -> Result<SchedulePoint> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("size {n} too small")));
        }
        let v = self.coordination as f64;
        let k = self.k as f64;
        let gamma = self.gamma as f64;
        let log_ratio = self.lambda.ln() - self.dim as f64 * (n as f64).ln();
        let (a, b) = match &self.kind {
            ScheduleKind::MatchedDivergence => {
                let a = log_ratio / (2.0 * k + gamma / v);
                (a, -a / (2.0 * v))
            }
            ScheduleKind::FixedB(b) => ((log_ratio + 2.0 * b * gamma) / (2.0 * k), *b),
            ScheduleKind::CustomB(map) => {
                let b = *map.get(&n).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "custom schedule has no pair potential for n = {n}"
                    ))
                })?;
                ((log_ratio + 2.0 * b * gamma) / (2.0 * k), b)
            }
        };
        Ok(SchedulePoint {
            n,
            a,
            b,
            in_regime: a < 0.0,
        })
    }

    /// Residual of the homogeneity relation at a point; zero up to
    /// rounding by construction.
    pub fn homogeneity_residual(&self, point: &SchedulePoint) -> f64 {
        self.dim as f64 * (point.n as f64).ln() + 2.0 * point.a * self.k as f64
            - 2.0 * point.b * self.gamma as f64
            - self.lambda.ln()
    }
}

/// One row of the hypothesis report. Gap, maximality probability and
/// their maximum are present only in regime.
#[derive(Debug, Clone)]
pub struct HypothesisRow {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub a_plus_vb: f64,
    pub a_plus_2vb: f64,
    pub delta: Option<f64>,
    pub theta: Option<f64>,
    pub m: Option<f64>,
    /// Weight-domination condition `a + 2Vb <= 0`.
    pub h2: bool,
    pub in_regime: bool,
}

/// Per-size hypothesis rows plus the grid-level trend verdict.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub rows: Vec<HypothesisRow>,
    /// True when `a + Vb` and `max(delta, theta)` both strictly decrease
    /// along the in-regime part of the grid (at least two points). A
    /// finite grid can only certify a trend, never the limit itself.
    pub h1_trend: bool,
}

/// Evaluate the schedule over an increasing size grid and compute, per
/// size, the divergence margins and the two locality probabilities.
pub fn check_hypotheses(
    schedule: &Schedule,
    pattern: &LocalPattern,
    n_grid: &[usize],
) -> Result<HypothesisReport> {
    if n_grid.is_empty() {
        return Err(Error::EmptyInput("size grid".into()));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "size grid must be strictly increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let point = schedule.eval(n)?;
        let lattice = TorusLattice::new(n, pattern.dim(), pattern.norm(), pattern.rho())?;
        pattern.check_lattice(&lattice)?;
        let v = lattice.coordination() as f64;
        let a_plus_vb = point.a + v * point.b;
        let a_plus_2vb = point.a + 2.0 * v * point.b;
        let (delta, theta) = if point.in_regime {
            let pot = point.potentials()?;
            let gap = probability_gap_checked(pattern, &pot, &lattice)?;
            let theta = maximality_probability(pattern, &pot, &lattice)?;
            (Some(gap.delta), Some(theta))
        } else {
            (None, None)
        };
        let m = match (delta, theta) {
            (Some(d), Some(t)) => Some(d.max(t)),
            _ => None,
        };
        rows.push(HypothesisRow {
            n,
            a: point.a,
            b: point.b,
            a_plus_vb,
            a_plus_2vb,
            delta,
            theta,
            m,
            h2: a_plus_2vb <= 1e-12,
            in_regime: point.in_regime,
        });
    }
    let trend: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.in_regime)
        .map(|r| (r.a_plus_vb, r.m.unwrap_or(f64::NAN)))
        .collect();
    let h1_trend = trend.len() >= 2 && trend.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1);
    Ok(HypothesisReport { rows, h1_trend })
}

/// A positive constant carried as an exact power of two: `2^log2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pow2 {
    pub log2: u32,
}

impl Pow2 {
    /// Linear value when it fits a finite f64.
    pub fn linear(&self) -> Option<f64> {
        (self.log2 < 1024).then(|| (self.log2 as f64).exp2())
    }
}

/// The constant `2^|closure(V)|` that dominates the probability of any
/// fixed local configuration on the vertex set V by its weight, under
/// the margin condition `a + 2Vb <= 0`.
pub fn weight_domination_constant(set: &[usize], lattice: &TorusLattice) -> Result<Pow2> {
    for &x in set {
        if x >= lattice.vertex_count() {
            return Err(Error::InvalidParameter(format!("vertex {x} out of range")));
        }
    }
    let mut closure: Vec<usize> = set.to_vec();
    closure.sort_unstable();
    closure.dedup();
    let boundary = lattice.boundary_of(&closure);
    Ok(Pow2 {
        log2: (closure.len() + boundary.len()) as u32,
    })
}

/// A possibly astronomically large constant, carried in log2 with the
/// linear value attached when it is exactly representable.
#[derive(Debug, Clone, Copy)]
pub struct BoundConstant {
    pub log2: f64,
    pub linear: Option<f64>,
}

/// The explicit constant K controlling how far the upper-count mean can
/// drift from lambda: `lambda (1 - K M) <= mean <= lambda (1 + K M)`,
/// where M is the larger of the probability gap and the maximality
/// probability. Composed from the counting constants of the ball, its
/// boundary shell, and their closures.
pub fn mean_sandwich_constant(
    pattern: &LocalPattern,
    lattice: &TorusLattice,
) -> Result<BoundConstant> {
    pattern.check_lattice(lattice)?;
    let ball = lattice.ball(0, pattern.radius())?;
    let shell = lattice.ball_boundary(&ball);
    let beta = ball.members.len() as u32;
    let k = pattern.k() as u32;
    let nb = shell.len() as u32;
    let c_ball = weight_domination_constant(&ball.members, lattice)?.log2;
    let c_shell = weight_domination_constant(&shell, lattice)?.log2;

    // K = max(2^beta + 2^nb * C(shell), (2^(beta-k) - 1) * C(ball) + 2^nb * C(shell))
    let e_shared = nb + c_shell;
    let exponents = [beta, e_shared, beta - k, c_ball];
    if exponents.iter().all(|&e| e < 100) {
        let shared = 1u128 << e_shared;
        let t1 = (1u128 << beta) + shared;
        let t2 = ((1u128 << (beta - k)) - 1) * (1u128 << c_ball) + shared;
        let k_exact = t1.max(t2);
        Ok(BoundConstant {
            log2: (k_exact as f64).log2(),
            linear: Some(k_exact as f64),
        })
    } else {
        // log2 of each addend, then log2-sum-exp
        let log2_add = |x: f64, y: f64| -> f64 {
            let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
            hi + (1.0 + (lo - hi).exp2()).log2()
        };
        let star = if beta == k {
            f64::NEG_INFINITY
        } else {
            // log2(2^(beta-k) - 1)
            (beta - k) as f64 + (1.0 - 0.5f64.powi((beta - k) as i32)).log2()
        };
        let t1 = log2_add(beta as f64, e_shared as f64);
        let t2 = log2_add(star + c_ball as f64, e_shared as f64);
        Ok(BoundConstant {
            log2: t1.max(t2),
            linear: None,
        })
    }
}

/// Stein-Chen bound on the total variation distance between the law of a
/// sum of positively related indicators and the Poisson law with the
/// same mean: `(1 - e^{-mean})/mean * (variance - mean + 2 mean^2 / n_sites)`.
pub fn stein_chen_rhs(mean: f64, variance: f64, n_sites: f64) -> Result<f64> {
    if !mean.is_finite() || mean <= 0.0 {
        return Err(Error::NonPositiveMean(mean));
    }
    Ok((1.0 - (-mean).exp()) / mean * (variance - mean + 2.0 * mean * mean / n_sites))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Norm;

    #[test]
    fn matched_divergence_values_at_n8() {
        // d = 1, V = 2, k = 1, gamma = 2, lambda = 1
        let s = Schedule::matched_divergence(1, 2, 2, 1, 1.0).unwrap();
        let p = s.eval(8).unwrap();
        assert!((p.a + (8f64).ln() / 3.0).abs() < 1e-14);
        assert!((p.b - (8f64).ln() / 12.0).abs() < 1e-14);
        assert!(p.in_regime);
        assert!(s.homogeneity_residual(&p).abs() < 1e-12);
        // n W = 1
        let w = (2.0 * p.a - 2.0 * p.b * 2.0).exp();
        assert!((8.0 * w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matched_divergence_margin_identities() {
        let s = Schedule::matched_divergence(3, 7, 4, 2, 0.5).unwrap();
        for n in [4usize, 8, 32, 100] {
            let p = s.eval(n).unwrap();
            assert!((p.a + 8.0 * p.b).abs() < 1e-13, "a + 2Vb should vanish");
            assert!((p.a + 4.0 * p.b - p.a / 2.0).abs() < 1e-13, "a + Vb = a/2");
            assert!(s.homogeneity_residual(&p).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_regime_is_flagged_not_rejected() {
        let s = Schedule::matched_divergence(1, 2, 2, 1, 8.0).unwrap();
        let p = s.eval(8).unwrap(); // lambda = n^d: a = 0 exactly
        assert!(!p.in_regime);
        let p = s.eval(4).unwrap(); // lambda > n^d: a > 0
        assert!(!p.in_regime);
        assert!(s.eval(16).unwrap().in_regime);
    }

    #[test]
    fn fixed_b_solves_the_field() {
        // b = 0.1, d = 1, lambda = 1, k = 1, gamma = 2, n = 8
        let s = Schedule::fixed_b(1, 2, 2, 1, 1.0, 0.1).unwrap();
        let p = s.eval(8).unwrap();
        assert!((p.a - (-(8f64).ln() + 0.4) / 2.0).abs() < 1e-14);
        assert!((p.a + 0.839_720_770_839_917_9).abs() < 1e-12);
        assert!(s.homogeneity_residual(&p).abs() < 1e-12);

        // b = 0 is the pure-field regime
        let s = Schedule::fixed_b(2, 5, 4, 2, 1.0, 0.0).unwrap();
        let p = s.eval(10).unwrap();
        assert!((p.a - (1f64 / 100.0).ln() / 4.0).abs() < 1e-14);
    }

    #[test]
    fn custom_b_slow_growth_keeps_regime() {
        // b(n) ~ sqrt(ln n): diverges, but slower than |a(n)|
        let grid = [8usize, 16, 32, 64, 128];
        let map: BTreeMap<usize, f64> = grid
            .iter()
            .map(|&n| (n, 0.1 * (n as f64).ln().sqrt()))
            .collect();
        let s = Schedule::custom_b(1, 2, 2, 1, 1.0, map).unwrap();
        let mut last_ratio = f64::INFINITY;
        for &n in &grid {
            let p = s.eval(n).unwrap();
            assert!(p.in_regime);
            assert!(s.homogeneity_residual(&p).abs() < 1e-12);
            let ratio = p.b / p.a;
            assert!(ratio.abs() < last_ratio.abs() || last_ratio.is_infinite());
            last_ratio = ratio;
        }
        // b/a heads to zero from below
        assert!(last_ratio.abs() < 0.2);
        assert!(s.eval(9).is_err(), "size missing from the custom table");
    }

    #[test]
    fn schedule_rejects_bad_inputs() {
        assert!(Schedule::matched_divergence(0, 2, 2, 1, 1.0).is_err());
        assert!(Schedule::matched_divergence(1, 0, 2, 1, 1.0).is_err());
        assert!(Schedule::matched_divergence(1, 2, 2, 1, 0.0).is_err());
        assert!(Schedule::fixed_b(1, 2, 2, 1, 1.0, -0.1).is_err());
    }

    #[test]
    fn hypothesis_report_for_matched_schedule() {
        let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1).unwrap();
        let s = Schedule::matched_divergence(1, 2, 2, 1, 1.0).unwrap();
        let report = check_hypotheses(&s, &pattern, &[8, 12, 16, 20]).unwrap();
        assert!(report.h1_trend);
        for row in &report.rows {
            assert!(row.h2, "a + 2Vb = 0 satisfies the margin condition");
            assert!(row.in_regime);
            let (d, t) = (row.delta.unwrap(), row.theta.unwrap());
            // gap sandwich and maximality bound along the schedule
            assert!(d <= (2.0 * row.a).exp() + 1e-15);
            assert!(d >= (2.0 * row.a - 4.0 * row.b).exp() - 1e-15);
            assert!(t <= (2.0 * row.a + 4.0 * row.b).exp() + 1e-15);
        }
    }

    #[test]
    fn constant_schedule_breaks_homogeneity() {
        // a fixed pair (a, b) cannot satisfy the homogeneity relation on
        // a growing grid
        let s = Schedule::fixed_b(1, 2, 2, 1, 1.0, 0.0).unwrap();
        let p8 = s.eval(8).unwrap();
        let fake = SchedulePoint {
            n: 16,
            a: p8.a,
            b: p8.b,
            in_regime: true,
        };
        assert!(s.homogeneity_residual(&fake).abs() > 0.1);
    }

    #[test]
    fn domination_constant_examples() {
        // closure of the radius-1 ball on a line has 5 vertices
        let l = TorusLattice::new(9, 1, Norm::P(1), 1).unwrap();
        let ball = l.ball(0, 1).unwrap();
        let c = weight_domination_constant(&ball.members, &l).unwrap();
        assert_eq!(c.log2, 5);
        assert_eq!(c.linear(), Some(32.0));

        // singleton: closure = 1 + V
        let c = weight_domination_constant(&[0], &l).unwrap();
        assert_eq!(c.log2, 3);

        // radius-1 diamond: closure has beta(2) = 13 vertices
        let sq = TorusLattice::new(9, 2, Norm::P(1), 1).unwrap();
        let ball = sq.ball(0, 1).unwrap();
        let c = weight_domination_constant(&ball.members, &sq).unwrap();
        assert_eq!(c.log2, 13);
    }

    #[test]
    fn mean_sandwich_constant_on_a_line() {
        // beta = 3, k = 1, shell of 2, closures of 5 and 6 vertices:
        // K = max(8 + 4*64, 3*32 + 4*64) = 352
        let l = TorusLattice::new(9, 1, Norm::P(1), 1).unwrap();
        let p = LocalPattern::single_positive(1, Norm::P(1), 1, 1).unwrap();
        let k = mean_sandwich_constant(&p, &l).unwrap();
        assert_eq!(k.linear, Some(352.0));
        assert!((k.log2 - 352f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn sandwich_constant_grows_with_radius() {
        let l = TorusLattice::new(15, 1, Norm::P(1), 1).unwrap();
        let mut last = 0.0;
        for r in 1..=3usize {
            let p = LocalPattern::single_positive(1, Norm::P(1), 1, r).unwrap();
            let k = mean_sandwich_constant(&p, &l).unwrap();
            assert!(k.log2 > last);
            last = k.log2;
        }
    }

    #[test]
    fn stein_chen_bound_values() {
        let b = stein_chen_rhs(1.0, 1.0, 10.0).unwrap();
        assert!((b - (1.0 - (-1f64).exp()) * 0.2).abs() < 1e-12);
        assert!((b - 0.126_424_111_765_711_53).abs() < 1e-12);
        // Poisson-like family: variance = mean and many sites
        let b = stein_chen_rhs(2.0, 2.0, 1e12).unwrap();
        assert!(b < 1e-11);
        assert!(stein_chen_rhs(0.0, 1.0, 10.0).is_err());
    }
}
