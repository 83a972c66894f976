//! Built-in self-verification: every module's invariants exercised on
//! tiny instances with independent oracles. The quick level covers the
//! algebraic identities and spot checks; the full level adds the
//! exhaustive conditional sweeps, moment bounds, Poisson domination and
//! sampler-versus-oracle comparisons.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::asymptotics::{
    check_hypotheses, mean_sandwich_constant, stein_chen_rhs, weight_domination_constant, Schedule,
};
use crate::error::Result;
use crate::gibbs_exact::{
    exact_conditional_table, exact_law_pair, fkg_covariance, local_energy, state_log_weight,
    weight_ratio_conditional, SpinState,
};
use crate::lattice::{Norm, TorusLattice};
use crate::patterns::{
    connection, count_upper, log_weight, maximality_probability, probability_gap,
    probability_gap_bruteforce, LocalPattern, Potentials, SubConfig,
};
use crate::sampler::{heat_bath_probability, run_chain, ChainConfig};
use crate::stats::{
    batch_means_stderr, empirical_distribution, poisson_pmf, tv_distance, CountDistribution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: std::result::Result<String, String>) -> Check {
    match outcome {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        // NaN must fail the check, so match on the raw comparison
        match $cond {
            true => {}
            false => return Ok(Err(format!($($arg)*))),
        }
    };
}

fn run_checked(
    name: &'static str,
    body: impl FnOnce() -> Result<std::result::Result<String, String>>,
) -> Check {
    match body() {
        Ok(outcome) => check(name, outcome),
        Err(e) => check(name, Err(format!("errored: {e}"))),
    }
}

/// Run the selected level; quick checks always run first.
pub fn run(level: Level) -> Vec<Check> {
    let mut checks = vec![
        run_checked(
            "lattice: translation invariance and symmetry",
            lattice_translation,
        ),
        run_checked("lattice: ball nesting and boundary shells", ball_shells),
        run_checked(
            "lattice: ball constants uniform over centers and sizes",
            ball_constants,
        ),
        run_checked(
            "patterns: perimeter identity against edge scan",
            perimeter_identity,
        ),
        run_checked(
            "patterns: weight factorization through connections",
            weight_factorization,
        ),
        run_checked(
            "patterns: probability gap sandwich and weight domination",
            gap_sandwich,
        ),
        run_checked(
            "patterns: closed-form gap equals brute force",
            gap_closed_vs_brute,
        ),
        run_checked(
            "gibbs: conditional weight ratio matches full measure",
            conditional_ratio_spot,
        ),
        run_checked(
            "gibbs: conditional probability sandwich",
            conditional_sandwich_spot,
        ),
        run_checked(
            "gibbs: law normalization and moment consistency",
            law_normalization,
        ),
        run_checked(
            "gibbs: independent sites factorize without pair potential",
            independent_sites,
        ),
        run_checked(
            "gibbs: positive association of increasing indicators",
            fkg_spot,
        ),
        run_checked(
            "gibbs: local energy equals weight times boundary factor",
            local_energy_identity,
        ),
        run_checked("sampler: heat-bath detailed balance", detailed_balance),
        run_checked("sampler: bit-for-bit reproducibility", sampler_reproducible),
        run_checked(
            "asymptotics: homogeneity relation holds on the grid",
            schedule_homogeneity,
        ),
        run_checked(
            "asymptotics: bound chain along the matched schedule",
            bound_chain,
        ),
        run_checked(
            "stats: Poisson pmf and total variation basics",
            poisson_and_tv,
        ),
        run_checked("asymptotics: frozen constants", frozen_constants),
        run_checked(
            "gibbs: enumeration independent of worker count",
            thread_independence,
        ),
    ];
    if level == Level::Full {
        checks.extend([
            run_checked(
                "gibbs: exhaustive conditional sweep",
                conditional_sweep_full,
            ),
            run_checked(
                "gibbs: exhaustive conditional sandwich",
                conditional_sandwich_full,
            ),
            run_checked(
                "gibbs: Markov property of the boundary conditional",
                markov_property,
            ),
            run_checked(
                "asymptotics: upper-count mean sandwich",
                mean_sandwich_numeric,
            ),
            run_checked(
                "stats: count-to-upper-count distance bound",
                count_distance_bound,
            ),
            run_checked(
                "stats: Poisson domination by the Stein-Chen bound",
                poisson_domination,
            ),
            run_checked(
                "gibbs: factorial moment equals ordered pair expectation",
                second_moment_identity,
            ),
            run_checked(
                "stats: triangle assembly of the three distances",
                triangle_assembly,
            ),
            run_checked("sampler: agreement with the exact law", sampler_vs_exact),
            run_checked(
                "stats: empirical distribution recovers the truth",
                empirical_guard,
            ),
            run_checked("stats: occurrence threshold trend", threshold_trend),
            run_checked(
                "stats: convergence trend toward the Poisson target",
                convergence_trend,
            ),
        ]);
    }
    checks
}

fn line(n: usize) -> Result<TorusLattice> {
    TorusLattice::new(n, 1, Norm::P(1), 1)
}

fn square(n: usize) -> Result<TorusLattice> {
    TorusLattice::new(n, 2, Norm::P(1), 1)
}

fn pot(a: f64, b: f64) -> Result<Potentials> {
    Potentials::new(a, b)
}

fn random_pattern(
    rng: &mut ChaCha8Rng,
    lattice: &TorusLattice,
    radius: usize,
) -> Result<LocalPattern> {
    let ball = lattice.ball(0, radius)?;
    let positives: Vec<Vec<i64>> = ball
        .members
        .iter()
        .filter(|_| rng.random::<bool>())
        .map(|&m| lattice.canonical_offset(0, m))
        .collect();
    LocalPattern::new(
        lattice.dim(),
        lattice.norm(),
        lattice.rho(),
        radius,
        positives,
    )
}

fn grid_ab() -> Vec<(f64, f64)> {
    let mut g = Vec::new();
    for a in [-0.5, -1.0, -2.0] {
        for b in [0.0, 0.3, 1.0] {
            g.push((a, b));
        }
    }
    g
}

fn lattice_translation() -> Result<std::result::Result<String, String>> {
    let l = square(6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..40 {
        let x = rng.random_range(0..l.vertex_count());
        let y = rng.random_range(0..l.vertex_count());
        let shift = l.coords_of(y);
        let mut moved: Vec<usize> = l
            .neighbors(x)
            .iter()
            .map(|&z| l.translate(z, &shift))
            .collect();
        moved.sort_unstable();
        let mut direct = l.neighbors(l.translate(x, &shift));
        direct.sort_unstable();
        ensure!(
            moved == direct,
            "neighbors do not commute with translation at x={x}, y={y}"
        );
        for &z in &l.neighbors(x) {
            ensure!(
                l.neighbors(z).contains(&x),
                "adjacency is not symmetric at {x}, {z}"
            );
        }
    }
    Ok(Ok("40 random translations".into()))
}

fn ball_shells() -> Result<std::result::Result<String, String>> {
    let l = TorusLattice::new(11, 2, Norm::Infinity, 1)?;
    for r in 0..3usize {
        let inner = l.ball(17, r)?;
        let outer = l.ball(17, r + 1)?;
        let inner_set: std::collections::BTreeSet<usize> = inner.members.iter().copied().collect();
        let outer_set: std::collections::BTreeSet<usize> = outer.members.iter().copied().collect();
        ensure!(
            inner_set.is_subset(&outer_set),
            "radius {r} ball escapes radius {}",
            r + 1
        );
        let shell: std::collections::BTreeSet<usize> =
            l.ball_boundary(&inner).into_iter().collect();
        let diff: std::collections::BTreeSet<usize> =
            outer_set.difference(&inner_set).copied().collect();
        ensure!(
            shell == diff,
            "boundary of radius {r} is not the next shell"
        );
    }
    Ok(Ok("radii 0..=2 under the block norm".into()))
}

fn ball_constants() -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let small = square(9)?;
    let big = square(13)?;
    let reference = big.ball(0, 2)?;
    for _ in 0..10 {
        let x = rng.random_range(0..small.vertex_count());
        let b = small.ball(x, 2)?;
        ensure!(b.beta == reference.beta, "beta varies with center or size");
        ensure!(
            b.alpha == reference.alpha,
            "alpha varies with center or size"
        );
    }
    Ok(Ok(format!(
        "beta(2) = {}, alpha(2) = {}",
        reference.beta, reference.alpha
    )))
}

fn perimeter_identity() -> Result<std::result::Result<String, String>> {
    // 2 gamma = alpha - sum over internal edges of eta(y) eta(z)
    //         + sum over crossing edges from the ball of (1 + eta(y))
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = 0;
    for (lattice, radius) in [
        (square(9)?, 1usize),
        (line(9)?, 2),
        (TorusLattice::new(9, 2, Norm::Infinity, 1)?, 1),
    ] {
        for _ in 0..20 {
            let pattern = random_pattern(&mut rng, &lattice, radius)?;
            let (_, gamma) = pattern.stats(&lattice)?;
            let ball = lattice.ball(0, radius)?;
            let inside: std::collections::BTreeSet<usize> = ball.members.iter().copied().collect();
            let assignment = pattern.to_assignment(&lattice, 0)?;
            let sign = |v: usize| -> i64 {
                match assignment.sign(v) {
                    Some(true) => 1,
                    Some(false) => -1,
                    None => unreachable!("ball member unset"),
                }
            };
            let mut internal = 0i64;
            let mut crossing = 0i64;
            for &y in &ball.members {
                for z in lattice.neighbors(y) {
                    if inside.contains(&z) {
                        if y < z {
                            internal += sign(y) * sign(z);
                        }
                    } else {
                        crossing += 1 + sign(y);
                    }
                }
            }
            let rhs = ball.alpha as i64 - internal + crossing;
            ensure!(
                2 * gamma as i64 == rhs,
                "2*{gamma} != {rhs} for {pattern:?}"
            );
            cases += 1;
        }
    }
    Ok(Ok(format!("{cases} random patterns over three geometries")))
}

fn weight_factorization() -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for lattice in [line(12)?, square(6)?] {
        for _ in 0..200 {
            let nv = lattice.vertex_count();
            let mut verts: Vec<usize> = (0..nv).collect();
            // random disjoint supports
            for i in (1..nv).rev() {
                verts.swap(i, rng.random_range(0..=i));
            }
            let na = rng.random_range(1..=4usize);
            let nb = rng.random_range(1..=4usize);
            let za = SubConfig::new(verts[..na].iter().map(|&v| (v, rng.random())).collect())?;
            let zb = SubConfig::new(
                verts[na..na + nb]
                    .iter()
                    .map(|&v| (v, rng.random()))
                    .collect(),
            )?;
            let a = -3.0 * rng.random::<f64>();
            let b = 2.0 * rng.random::<f64>();
            let w = pot(a, b)?;
            let conn = connection(&za, &zb, &lattice)?;
            let joint = za.union(&zb)?;
            // k adds, gamma is subadditive
            ensure!(
                joint.positive_count() == za.positive_count() + zb.positive_count(),
                "positive count is not additive"
            );
            ensure!(
                joint.perimeter(&lattice) <= za.perimeter(&lattice) + zb.perimeter(&lattice),
                "perimeter is not subadditive"
            );
            let lhs = joint.log_weight(&w, &lattice);
            let rhs =
                za.log_weight(&w, &lattice) + zb.log_weight(&w, &lattice) + 4.0 * b * conn as f64;
            let err = (lhs - rhs).abs();
            worst = worst.max(err);
            ensure!(err <= 1e-12, "factorization off by {err}");
        }
    }
    Ok(Ok(format!(
        "400 random pairs, worst log-scale error {worst:.3e}"
    )))
}

fn gap_sandwich() -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lattice = square(9)?;
    let v = lattice.coordination() as f64;
    for _ in 0..25 {
        let pattern = random_pattern(&mut rng, &lattice, 1)?;
        for &(a, b) in &grid_ab() {
            let w = pot(a, b)?;
            let delta = probability_gap(&pattern, &w, &lattice)?;
            let lo = (2.0 * a - 2.0 * b * v).exp();
            let hi = (2.0 * a).exp();
            ensure!(
                delta >= lo - 1e-15 && delta <= hi + 1e-15,
                "gap {delta} escapes [{lo}, {hi}] for {pattern:?}"
            );
            // the weight of any nonnull pattern is dominated by the gap
            let probe = random_pattern(&mut rng, &lattice, 1)?;
            if !probe.is_null() {
                let (k, gamma) = probe.stats(&lattice)?;
                ensure!(
                    log_weight(k, gamma, &w) <= delta.ln() + 1e-12,
                    "weight above the gap for {probe:?}"
                );
            }
        }
    }
    Ok(Ok("25 random radius-1 patterns, 9 potential pairs".into()))
}

fn gap_closed_vs_brute() -> Result<std::result::Result<String, String>> {
    let w = pot(-1.0, 0.4)?;
    let mut cases = 0;
    // every pattern of the radius-1 ball, both geometries
    for lattice in [line(8)?, square(8)?] {
        let ball = lattice.ball(0, 1)?;
        for mask in 0..(1u32 << ball.members.len()) {
            let positives: Vec<Vec<i64>> = ball
                .members
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &m)| lattice.canonical_offset(0, m))
                .collect();
            let pattern =
                LocalPattern::new(lattice.dim(), lattice.norm(), lattice.rho(), 1, positives)?;
            let closed = probability_gap(&pattern, &w, &lattice)?;
            let brute = probability_gap_bruteforce(&pattern, &w, &lattice)?;
            let rel = (closed - brute).abs() / closed.max(brute).max(1e-300);
            ensure!(
                rel <= 1e-12,
                "closed {closed} vs brute {brute} for mask {mask}"
            );
            cases += 1;
        }
    }
    Ok(Ok(format!("{cases} patterns across two geometries")))
}

fn conditional_ratio_spot() -> Result<std::result::Result<String, String>> {
    let lattice = line(7)?;
    let w = pot(-1.0, 0.5)?;
    let table = exact_conditional_table(&lattice, &w, 0, 1)?;
    let mut worst: f64 = 0.0;
    for sigma in 0..table.prob.len() {
        let boundary: Vec<bool> = (0..table.boundary.len())
            .map(|j| sigma >> j & 1 == 1)
            .collect();
        for eta in 0..table.prob[sigma].len() {
            let positives: Vec<Vec<i64>> = table
                .ball
                .members
                .iter()
                .enumerate()
                .filter(|(i, _)| eta >> i & 1 == 1)
                .map(|(_, &m)| lattice.canonical_offset(0, m))
                .collect();
            let pattern = LocalPattern::new(1, Norm::P(1), 1, 1, positives)?;
            let ratio = weight_ratio_conditional(&pattern, &boundary, &w, &lattice)?;
            let full = table.prob[sigma][eta];
            let rel = (ratio - full).abs() / ratio.max(full).max(1e-300);
            worst = worst.max(rel);
            ensure!(rel <= 1e-10, "mismatch {rel} at sigma={sigma}, eta={eta}");
        }
    }
    Ok(Ok(format!(
        "32 conditionals, worst relative error {worst:.3e}"
    )))
}

fn conditional_sandwich_spot() -> Result<std::result::Result<String, String>> {
    conditional_sandwich_on(&line(7)?, 1, &[(-1.0, 0.5)])
}

fn conditional_sandwich_on(
    lattice: &TorusLattice,
    radius: usize,
    grid: &[(f64, f64)],
) -> Result<std::result::Result<String, String>> {
    let mut min_slack = f64::INFINITY;
    let mut cases = 0usize;
    for &(a, b) in grid {
        let w = pot(a, b)?;
        let table = exact_conditional_table(lattice, &w, 0, radius)?;
        let beta = table.ball.members.len();
        let cr = (1u64 << beta) as f64;
        for sigma in 0..table.prob.len() {
            let null_boundary = sigma == 0;
            let sigma_cfg = SubConfig::new(
                table
                    .boundary
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (v, sigma >> j & 1 == 1))
                    .collect(),
            )?;
            let w_sigma = sigma_cfg.log_weight(&w, lattice).exp();
            for eta in 0..table.prob[sigma].len() {
                let positives: Vec<Vec<i64>> = table
                    .ball
                    .members
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| eta >> i & 1 == 1)
                    .map(|(_, &m)| lattice.canonical_offset(0, m))
                    .collect();
                let pattern = LocalPattern::new(
                    lattice.dim(),
                    lattice.norm(),
                    lattice.rho(),
                    radius,
                    positives,
                )?;
                let (k, gamma) = pattern.stats(lattice)?;
                let weight = log_weight(k, gamma, &w).exp();
                let delta = probability_gap(&pattern, &w, lattice)?;
                let mu = table.prob[sigma][eta];
                let lower = if null_boundary {
                    weight * (1.0 - cr * delta)
                } else {
                    0.0
                };
                let upper = if null_boundary {
                    weight
                } else {
                    weight * (1.0 + delta / w_sigma)
                };
                ensure!(
                    mu >= lower - 1e-12 && mu <= upper * (1.0 + 1e-12) + 1e-300,
                    "conditional {mu} escapes [{lower}, {upper}] at sigma={sigma}, eta={eta}, a={a}, b={b}"
                );
                min_slack = min_slack.min(upper - mu);
                cases += 1;
            }
        }
    }
    Ok(Ok(format!(
        "{cases} conditionals, minimal upper slack {min_slack:.3e}"
    )))
}

fn law_normalization() -> Result<std::result::Result<String, String>> {
    let lattice = line(8)?;
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    for &(a, b) in &[(-1.0, 0.3), (0.7, 0.0), (0.0, 0.0)] {
        let w = pot(a, b)?;
        let (law_x, law_u) = exact_law_pair(&lattice, &w, &pattern)?;
        for law in [&law_x, &law_u] {
            let total: f64 = law.pmf.iter().sum();
            ensure!((total - 1.0).abs() <= 1e-12, "pmf sums to {total}");
            let mean: f64 = law.pmf.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
            ensure!((mean - law.mean).abs() <= 1e-10, "mean mismatch");
        }
        if a == 0.0 && b == 0.0 {
            let want = 8.0 * std::f64::consts::LN_2;
            ensure!(
                (law_x.log_z - want).abs() <= 1e-12,
                "uniform log Z is {}",
                law_x.log_z
            );
        }
    }
    Ok(Ok("three potential pairs on the 8-cycle".into()))
}

fn independent_sites() -> Result<std::result::Result<String, String>> {
    let lattice = line(8)?;
    let a = -0.7;
    let w = pot(a, 0.0)?;
    let p_plus = (2.0 * a).exp() / (1.0 + (2.0 * a).exp());
    let table = exact_conditional_table(&lattice, &w, 0, 1)?;
    for sigma in 0..table.prob.len() {
        for eta in 0..table.prob[sigma].len() {
            let k = (eta as u32).count_ones() as f64;
            let want = p_plus.powf(k) * (1.0 - p_plus).powf(3.0 - k);
            let got = table.prob[sigma][eta];
            ensure!(
                (got - want).abs() <= 1e-10,
                "no factorization: {got} vs {want}"
            );
        }
    }
    let f = |s: &SpinState| if s.is_positive(1) { 1.0 } else { 0.0 };
    let g = |s: &SpinState| if s.is_positive(5) { 1.0 } else { 0.0 };
    let cov = fkg_covariance(&lattice, &w, f, g)?;
    ensure!(cov.abs() <= 1e-12, "disjoint covariance {cov} at b = 0");
    Ok(Ok(
        "conditionals factorize and disjoint statistics decorrelate".into(),
    ))
}

fn fkg_spot() -> Result<std::result::Result<String, String>> {
    let lattice = line(8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut min_cov = f64::INFINITY;
    for &b in &[0.0, 0.5, 1.0] {
        let w = pot(-0.5, b)?;
        for _ in 0..20 {
            let mask_f: u64 = rng.random_range(1..256);
            let mask_g: u64 = rng.random_range(1..256);
            let f = move |s: &SpinState| {
                if (0..8).all(|i| mask_f >> i & 1 == 0 || s.is_positive(i)) {
                    1.0
                } else {
                    0.0
                }
            };
            let g = move |s: &SpinState| {
                if (0..8).all(|i| mask_g >> i & 1 == 0 || s.is_positive(i)) {
                    1.0
                } else {
                    0.0
                }
            };
            let cov = fkg_covariance(&lattice, &w, f, g)?;
            min_cov = min_cov.min(cov);
            ensure!(cov >= -1e-12, "negative covariance {cov} at b = {b}");
        }
    }
    Ok(Ok(format!(
        "60 indicator pairs, minimal covariance {min_cov:.3e}"
    )))
}

fn local_energy_identity() -> Result<std::result::Result<String, String>> {
    // exp(H(eta_x sigma)) = W(eta) * exp(-a beta + b (alpha + crossing))
    // with crossing = sum over ball-to-shell edges of 1 + eta(y)(1 + sigma(z))
    let lattice = square(9)?;
    let w = pot(-0.8, 0.6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ball = lattice.ball(0, 1)?;
    let shell = lattice.ball_boundary(&ball);
    let inside: std::collections::BTreeSet<usize> = ball.members.iter().copied().collect();
    for _ in 0..30 {
        let pattern = random_pattern(&mut rng, &lattice, 1)?;
        let eta = pattern.to_assignment(&lattice, 0)?;
        let sigma = SubConfig::new(shell.iter().map(|&v| (v, rng.random())).collect())?;
        let zeta = eta.union(&sigma)?;
        let h = local_energy(&ball.members, &zeta, &w, &lattice)?;
        let (k, gamma) = pattern.stats(&lattice)?;
        let mut crossing = 0.0;
        for &y in &ball.members {
            for z in lattice.neighbors(y) {
                if !inside.contains(&z) {
                    let ey = if eta.sign(y) == Some(true) { 1.0 } else { -1.0 };
                    let sz = if sigma.sign(z) == Some(true) {
                        1.0
                    } else {
                        -1.0
                    };
                    crossing += 1.0 + ey * (1.0 + sz);
                }
            }
        }
        let rhs = log_weight(k, gamma, &w) - w.a() * ball.beta as f64
            + w.b() * (ball.alpha as f64 + crossing);
        ensure!(
            (h - rhs).abs() <= 1e-10,
            "local energy {h} differs from {rhs}"
        );
    }
    Ok(Ok("30 random pattern/boundary pairs".into()))
}

fn detailed_balance() -> Result<std::result::Result<String, String>> {
    let lattice = square(4)?;
    let w = pot(-1.0, 0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let state = SpinState::from_fn(16, |_| rng.random());
        let x = rng.random_range(0..16);
        let mut flipped = state.clone();
        flipped.flip(x);
        let mut field = 0i64;
        for y in lattice.neighbors(x) {
            field += state.spin(y);
        }
        let p_plus = heat_bath_probability(field, &w);
        let (fwd, back) = if flipped.is_positive(x) {
            (p_plus, 1.0 - p_plus)
        } else {
            (1.0 - p_plus, p_plus)
        };
        let lhs = state_log_weight(&state, &lattice, &w)? + fwd.ln();
        let rhs = state_log_weight(&flipped, &lattice, &w)? + back.ln();
        worst = worst.max((lhs - rhs).abs());
        ensure!(
            (lhs - rhs).abs() <= 1e-10,
            "detailed balance off by {}",
            (lhs - rhs).abs()
        );
    }
    Ok(Ok(format!(
        "200 transitions, worst log-scale error {worst:.3e}"
    )))
}

fn sampler_reproducible() -> Result<std::result::Result<String, String>> {
    let lattice = line(10)?;
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let w = pot(-0.9, 0.2)?;
    let cfg = ChainConfig::new(150, 50, 2, 3, 0xc0ffee)?;
    let one = run_chain(&lattice, &w, &pattern, &cfg)?;
    let two = run_chain(&lattice, &w, &pattern, &cfg)?;
    ensure!(one == two, "identical seeds disagree");
    let other = ChainConfig { seed: 1, ..cfg };
    ensure!(
        run_chain(&lattice, &w, &pattern, &other)? != one,
        "distinct seeds coincide"
    );
    Ok(Ok(format!("{} retained samples", one.len())))
}

fn schedule_homogeneity() -> Result<std::result::Result<String, String>> {
    let matched = Schedule::matched_divergence(1, 2, 2, 1, 1.0)?;
    let fixed = Schedule::fixed_b(2, 5, 4, 2, 0.7, 0.25)?;
    let mut worst: f64 = 0.0;
    for n in [8usize, 16, 64, 256] {
        for s in [&matched, &fixed] {
            let p = s.eval(n)?;
            worst = worst.max(s.homogeneity_residual(&p).abs());
        }
        let p = matched.eval(n)?;
        ensure!((p.a + 4.0 * p.b).abs() <= 1e-12, "a + 2Vb should vanish");
        ensure!(
            (p.a + 2.0 * p.b - p.a / 2.0).abs() <= 1e-12,
            "a + Vb should be a/2"
        );
    }
    ensure!(worst <= 1e-12, "homogeneity residual {worst}");
    Ok(Ok(format!("worst residual {worst:.3e}")))
}

fn bound_chain() -> Result<std::result::Result<String, String>> {
    // lambda n^-d = W <= gap <= max(gap, theta), gap <= exp(2a),
    // theta <= exp(2a + 2Vb), and exp(2a - 2bV) <= W^(1/k)
    let pattern = LocalPattern::new(1, Norm::P(1), 1, 1, vec![vec![0], vec![1]])?;
    let lattice = line(9)?;
    let (k, gamma) = pattern.stats(&lattice)?;
    let schedule = Schedule::matched_divergence(k, gamma, 2, 1, 1.0)?;
    let report = check_hypotheses(&schedule, &pattern, &[9, 13, 17])?;
    ensure!(
        report.h1_trend,
        "matched schedule should show a decreasing trend"
    );
    for row in &report.rows {
        let w = log_weight(k, gamma, &pot(row.a, row.b)?).exp();
        let lambda_scaled = 1.0 / row.n as f64;
        ensure!(
            (w - lambda_scaled).abs() <= 1e-12 * lambda_scaled,
            "homogeneity broken in chain"
        );
        let delta = row.delta.unwrap();
        let theta = row.theta.unwrap();
        ensure!(w <= delta + 1e-15, "weight above gap");
        ensure!(delta <= row.m.unwrap() + 1e-15, "gap above max");
        ensure!(delta <= (2.0 * row.a).exp() + 1e-15, "gap above exp(2a)");
        ensure!(
            theta <= (2.0 * row.a + 4.0 * row.b).exp() + 1e-15,
            "theta above its bound"
        );
        let single_cost = (2.0 * row.a - 4.0 * row.b).exp();
        ensure!(
            single_cost <= w.powf(1.0 / k as f64) + 1e-15,
            "single-vertex cost above W^(1/k)"
        );
    }
    Ok(Ok("grid 9, 13, 17 on the two-positive pattern".into()))
}

fn poisson_and_tv() -> Result<std::result::Result<String, String>> {
    let p1 = poisson_pmf(1.0, 1e-12)?;
    ensure!(
        (p1.prob(0) - (-1f64).exp()).abs() <= 1e-15,
        "pmf(0) should be e^-1"
    );
    ensure!(
        (p1.prob(0) - p1.prob(1)).abs() <= 1e-15,
        "pmf(0) = pmf(1) at lambda 1"
    );
    let total: f64 = p1.pmf().iter().sum();
    ensure!(total >= 1.0 - 1e-12, "normalization lost");
    ensure!((p1.mean() - 1.0).abs() <= 1e-10, "mean drifted");
    ensure!(
        tv_distance(&p1, &p1) <= 2e-12,
        "self distance above the truncation budget"
    );
    let point = CountDistribution::exact_from_pmf(vec![1.0])?;
    let d = tv_distance(&point, &p1);
    ensure!(
        (d - (1.0 - (-1f64).exp())).abs() <= 1e-12,
        "point-mass distance {d}"
    );
    ensure!(
        (tv_distance(&p1, &point) - d).abs() <= 1e-15,
        "asymmetric distance"
    );
    Ok(Ok("pmf values, normalization, symmetry".into()))
}

fn frozen_constants() -> Result<std::result::Result<String, String>> {
    let b = stein_chen_rhs(1.0, 1.0, 10.0)?;
    ensure!(
        (b - 0.126_424_111_765_711_53).abs() <= 1e-12,
        "Stein-Chen value {b}"
    );
    let lattice = line(9)?;
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let k = mean_sandwich_constant(&pattern, &lattice)?;
    ensure!(k.linear == Some(352.0), "sandwich constant {:?}", k.linear);
    let ball = lattice.ball(0, 1)?;
    let c = weight_domination_constant(&ball.members, &lattice)?;
    ensure!(c.log2 == 5, "domination constant 2^{}", c.log2);
    Ok(Ok("Stein-Chen 0.12642…, K = 352, C(ball) = 32".into()))
}

fn thread_independence() -> Result<std::result::Result<String, String>> {
    let lattice = line(10)?;
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let w = pot(-1.0, 0.4)?;
    let mut results = Vec::new();
    for threads in [1usize, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::error::Error::InvalidParameter(e.to_string()))?;
        let (law_x, law_u) = pool.install(|| exact_law_pair(&lattice, &w, &pattern))?;
        results.push((
            law_x.log_z.to_bits(),
            law_x.pmf.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            law_u.mean.to_bits(),
        ));
    }
    ensure!(
        results[0] == results[1],
        "enumeration depends on worker count"
    );
    Ok(Ok("bit-identical laws with 1 and 4 workers".into()))
}

fn conditional_sweep_on(
    lattice: &TorusLattice,
    radius: usize,
    grid: &[(f64, f64)],
) -> Result<(usize, f64)> {
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for &(a, b) in grid {
        let w = pot(a, b)?;
        let table = exact_conditional_table(lattice, &w, 0, radius)?;
        for sigma in 0..table.prob.len() {
            let boundary: Vec<bool> = (0..table.boundary.len())
                .map(|j| sigma >> j & 1 == 1)
                .collect();
            for eta in 0..table.prob[sigma].len() {
                let positives: Vec<Vec<i64>> = table
                    .ball
                    .members
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| eta >> i & 1 == 1)
                    .map(|(_, &m)| lattice.canonical_offset(0, m))
                    .collect();
                let pattern = LocalPattern::new(
                    lattice.dim(),
                    lattice.norm(),
                    lattice.rho(),
                    radius,
                    positives,
                )?;
                let ratio = weight_ratio_conditional(&pattern, &boundary, &w, lattice)?;
                let full = table.prob[sigma][eta];
                let rel = (ratio - full).abs() / ratio.max(full).max(1e-300);
                worst = worst.max(rel);
                cases += 1;
            }
        }
    }
    Ok((cases, worst))
}

fn conditional_sweep_full() -> Result<std::result::Result<String, String>> {
    let (c1, w1) = conditional_sweep_on(&line(8)?, 1, &grid_ab())?;
    let (c2, w2) = conditional_sweep_on(&square(4)?, 1, &grid_ab())?;
    let worst = w1.max(w2);
    ensure!(worst <= 1e-10, "worst relative error {worst}");
    Ok(Ok(format!(
        "{} conditionals, worst relative error {worst:.3e}",
        c1 + c2
    )))
}

fn conditional_sandwich_full() -> Result<std::result::Result<String, String>> {
    match conditional_sandwich_on(&line(8)?, 1, &grid_ab())? {
        Err(e) => Ok(Err(e)),
        Ok(first) => match conditional_sandwich_on(&square(4)?, 1, &grid_ab())? {
            Err(e) => Ok(Err(e)),
            Ok(second) => Ok(Ok(format!("{first}; {second}"))),
        },
    }
}

fn markov_property() -> Result<std::result::Result<String, String>> {
    // conditioning beyond the boundary shell must not move the ball
    // conditional: test with an independent streaming enumerator
    let lattice = line(10)?;
    let w = pot(-0.9, 0.5)?;
    let ball = lattice.ball(0, 1)?;
    let shell = lattice.ball_boundary(&ball);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let conditional = |fixed: &[(usize, bool)]| -> Result<f64> {
        let mut num = f64::NEG_INFINITY;
        let mut den = f64::NEG_INFINITY;
        let logaddexp = |x: f64, y: f64| {
            if x == f64::NEG_INFINITY {
                y
            } else if y == f64::NEG_INFINITY {
                x
            } else {
                let m = x.max(y);
                m + ((x - m).exp() + (y - m).exp()).ln()
            }
        };
        for s in 0..(1u64 << 10) {
            let state = SpinState::from_counter(s, 10);
            if fixed.iter().any(|&(v, sign)| state.is_positive(v) != sign) {
                continue;
            }
            let lw = state_log_weight(&state, &lattice, &w)?;
            den = logaddexp(den, lw);
            let hit = ball
                .members
                .iter()
                .all(|&m| state.is_positive(m) == (lattice.canonical_offset(0, m) == vec![0]));
            if hit {
                num = logaddexp(num, lw);
            }
        }
        Ok((num - den).exp())
    };
    for _ in 0..8 {
        let boundary_signs: Vec<(usize, bool)> = shell.iter().map(|&v| (v, rng.random())).collect();
        let base = conditional(&boundary_signs)?;
        // add conditioning on vertices beyond the closure
        let mut extended = boundary_signs.clone();
        for v in [4usize, 5, 6] {
            extended.push((v, rng.random()));
        }
        let ext = conditional(&extended)?;
        ensure!(
            (base - ext).abs() <= 1e-10 * base.abs().max(1e-300).max(ext.abs()),
            "conditional moved from {base} to {ext}"
        );
    }
    Ok(Ok("8 random boundary extensions".into()))
}

fn mean_sandwich_numeric() -> Result<std::result::Result<String, String>> {
    let lattice = line(8)?;
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let schedule = Schedule::matched_divergence(1, 2, 2, 1, 1.0)?;
    let point = schedule.eval(8)?;
    let w = point.potentials()?;
    let (law_x, law_u) = exact_law_pair(&lattice, &w, &pattern)?;
    let lambda_n = law_u.mean;
    let ball = lattice.ball(0, 1)?;
    let c_ball = weight_domination_constant(&ball.members, &lattice)?
        .linear()
        .unwrap();
    let theta = maximality_probability(&pattern, &w, &lattice)?;
    let star = (1u64 << (ball.members.len() as u64 - pattern.k())) as f64 - 1.0;
    let lambda = 1.0;
    ensure!(
        law_x.mean <= lambda_n,
        "upper count mean below exact count mean"
    );
    let slack = star * lambda * c_ball * theta;
    ensure!(
        lambda_n <= law_x.mean + slack,
        "mean sandwich upper bound broken"
    );
    ensure!(
        lambda_n > law_x.mean && lambda_n < law_x.mean + slack,
        "sandwich not strict"
    );
    let k = mean_sandwich_constant(&pattern, &lattice)?.linear.unwrap();
    let m = probability_gap(&pattern, &w, &lattice)?.max(theta);
    ensure!(
        lambda * (1.0 - k * m) <= lambda_n && lambda_n <= lambda * (1.0 + k * m),
        "explicit-constant sandwich broken (KM = {})",
        k * m
    );
    Ok(Ok(format!(
        "lambda_n = {lambda_n:.6}, slack = {slack:.3}, KM = {:.3}",
        k * m
    )))
}

fn count_distance_bound() -> Result<std::result::Result<String, String>> {
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let schedule = Schedule::matched_divergence(1, 2, 2, 1, 1.0)?;
    let mut details = Vec::new();
    for n in [8usize, 10] {
        let lattice = line(n)?;
        let point = schedule.eval(n)?;
        let w = point.potentials()?;
        let (law_x, law_u) = exact_law_pair(&lattice, &w, &pattern)?;
        let d = tv_distance(
            &CountDistribution::from_exact_law(&law_x),
            &CountDistribution::from_exact_law(&law_u),
        );
        let ball = lattice.ball(0, 1)?;
        let c_ball = weight_domination_constant(&ball.members, &lattice)?
            .linear()
            .unwrap();
        let theta = maximality_probability(&pattern, &w, &lattice)?;
        let star = (1u64 << (ball.members.len() as u64 - pattern.k())) as f64 - 1.0;
        let bound = star * 1.0 * c_ball * theta;
        ensure!(d <= bound, "distance {d} above bound {bound} at n = {n}");
        details.push(format!("n={n}: {d:.4} <= {bound:.4}"));
    }
    Ok(Ok(details.join("; ")))
}

fn poisson_domination() -> Result<std::result::Result<String, String>> {
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let schedule = Schedule::matched_divergence(1, 2, 2, 1, 1.0)?;
    let mut details = Vec::new();
    for n in [8usize, 10, 12] {
        let lattice = line(n)?;
        let w = schedule.eval(n)?.potentials()?;
        let (_, law_u) = exact_law_pair(&lattice, &w, &pattern)?;
        let lambda_n = law_u.mean;
        let d = tv_distance(
            &CountDistribution::from_exact_law(&law_u),
            &poisson_pmf(lambda_n, 1e-12)?,
        );
        let bound = stein_chen_rhs(lambda_n, law_u.variance, n as f64)?;
        ensure!(
            d <= bound,
            "distance {d} above the bound {bound} at n = {n}"
        );
        details.push(format!("n={n}: {d:.5} <= {bound:.5}"));
    }
    Ok(Ok(details.join("; ")))
}

fn second_moment_identity() -> Result<std::result::Result<String, String>> {
    // E[X̄(X̄-1)] from the pmf equals the expected number of ordered
    // anchor pairs with both upper indicators on
    let lattice = line(8)?;
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let w = pot(-1.0, 0.4)?;
    let (_, law_u) = exact_law_pair(&lattice, &w, &pattern)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for s in 0..(1u64 << 8) {
        let state = SpinState::from_counter(s, 8);
        let lw = state_log_weight(&state, &lattice, &w)?;
        let weight = lw.exp();
        let upper = count_upper(&state, &pattern, &lattice)? as f64;
        num += weight * upper * (upper - 1.0);
        den += weight;
    }
    let direct = num / den;
    ensure!(
        (direct - law_u.second_factorial_moment).abs() <= 1e-10,
        "factorial moment {direct} vs {}",
        law_u.second_factorial_moment
    );
    Ok(Ok(format!("both routes give {direct:.8}")))
}

fn triangle_assembly() -> Result<std::result::Result<String, String>> {
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let schedule = Schedule::matched_divergence(1, 2, 2, 1, 1.0)?;
    let lattice = line(10)?;
    let w = schedule.eval(10)?.potentials()?;
    let (law_x, law_u) = exact_law_pair(&lattice, &w, &pattern)?;
    let dist_x = CountDistribution::from_exact_law(&law_x);
    let dist_u = CountDistribution::from_exact_law(&law_u);
    let lambda_n = law_u.mean;
    let target = poisson_pmf(1.0, 1e-12)?;
    let target_n = poisson_pmf(lambda_n, 1e-12)?;
    let lhs = tv_distance(&dist_x, &target);
    let rhs = tv_distance(&dist_x, &dist_u)
        + tv_distance(&dist_u, &target_n)
        + tv_distance(&target_n, &target);
    ensure!(lhs <= rhs + 1e-12, "triangle broken: {lhs} > {rhs}");
    Ok(Ok(format!("{lhs:.5} <= {rhs:.5}")))
}

fn sampler_vs_exact() -> Result<std::result::Result<String, String>> {
    let lattice = square(4)?;
    let pattern = LocalPattern::single_positive(2, Norm::P(1), 1, 1)?;
    let w = pot(-1.0, 0.3)?;
    let (law_x, _) = exact_law_pair(&lattice, &w, &pattern)?;
    let cfg = ChainConfig::new(1000 + 40_000, 1000, 2, 1, 2024)?;
    let samples = run_chain(&lattice, &w, &pattern, &cfg)?;
    let xs: Vec<u64> = samples.iter().map(|&(x, _)| x).collect();
    let emp = empirical_distribution(&xs)?;
    let d = tv_distance(&emp, &CountDistribution::from_exact_law(&law_x));
    ensure!(d <= 0.05, "empirical law is {d} away from exact");
    let se = batch_means_stderr(&xs, 100).unwrap();
    let drift = (emp.mean() - law_x.mean).abs();
    ensure!(
        drift <= 4.0 * se.max(1e-12),
        "mean drift {drift} above 4 se = {}",
        4.0 * se
    );
    Ok(Ok(format!("tv {d:.4}, mean drift {drift:.5} within 4 se")))
}

fn empirical_guard() -> Result<std::result::Result<String, String>> {
    let truth = poisson_pmf(2.0, 1e-12)?;
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    for &p in truth.pmf() {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let samples: Vec<u64> = (0..100_000)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.iter().position(|&c| u < c).unwrap_or(cdf.len()) as u64
        })
        .collect();
    let emp = empirical_distribution(&samples)?;
    let d = tv_distance(&emp, &truth);
    ensure!(d <= 0.01, "guard distance {d}");
    Ok(Ok(format!("1e5 draws, tv {d:.4}")))
}

fn threshold_trend() -> Result<std::result::Result<String, String>> {
    // expected count n^d W = n^(-1/2): occurrence probability falls;
    // n^d W = n^(1/2): it rises
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let grid = [8usize, 12, 16];
    let mut falling = Vec::new();
    let mut rising = Vec::new();
    for &n in &grid {
        for (lambda, out) in [
            ((n as f64).powf(-0.5), &mut falling),
            ((n as f64).powf(0.5), &mut rising),
        ] {
            let schedule = Schedule::matched_divergence(1, 2, 2, 1, lambda)?;
            let lattice = line(n)?;
            let w = schedule.eval(n)?.potentials()?;
            let (law_x, _) = exact_law_pair(&lattice, &w, &pattern)?;
            out.push(law_x.prob_positive());
        }
    }
    ensure!(
        falling.windows(2).all(|w| w[1] < w[0]),
        "occurrence probability not falling: {falling:?}"
    );
    ensure!(
        rising.windows(2).all(|w| w[1] > w[0]),
        "occurrence probability not rising: {rising:?}"
    );
    Ok(Ok(format!("falling {falling:?}, rising {rising:?}")))
}

fn convergence_trend() -> Result<std::result::Result<String, String>> {
    use crate::stats::{convergence_table, Engine};
    let pattern = LocalPattern::single_positive(1, Norm::P(1), 1, 1)?;
    let schedule = Schedule::matched_divergence(1, 2, 2, 1, 1.0)?;
    let rows = convergence_table(&schedule, &pattern, &[8, 12, 16], Engine::Exact, None)?;
    ensure!(
        rows.windows(2).all(|w| w[1].d_tv_x < w[0].d_tv_x),
        "distance not decreasing: {:?}",
        rows.iter().map(|r| r.d_tv_x).collect::<Vec<_>>()
    );
    let c0 = rows[0].d_tv_x / rows[0].m;
    for row in &rows[1..] {
        ensure!(
            row.d_tv_x / row.m <= c0 * (1.0 + 1e-12),
            "fitted constant exceeded"
        );
    }
    Ok(Ok(format!(
        "distances {:?}",
        rows.iter()
            .map(|r| format!("{:.4}", r.d_tv_x))
            .collect::<Vec<_>>()
    )))
}
