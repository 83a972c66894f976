//! Local spin patterns on graph-distance balls and their algebra: the
//! positive-vertex count k, the perimeter gamma, log weights, connections
//! between disjoint assignments, the probability gap, the maximality
//! probability, and occurrence counting in full spin states.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gibbs_exact::SpinState;
use crate::lattice::{BallGeometry, Norm, TorusLattice};

/// Hard guard on exhaustive enumerations of boundary / ball subsets.
pub const ENUM_GUARD_BITS: usize = 24;

/// Boundary sizes up to which the closed-form probability gap is
/// automatically cross-checked against brute force.
const GAP_AUTOCHECK_BITS: usize = 20;

/// The potential pair (a, b): magnetic field and pair potential.
///
/// The pair potential must be nonnegative (the ferromagnetic regime);
/// the field may have either sign here, and operations that need a < 0
/// say so in their contracts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potentials {
    a: f64,
    b: f64,
}

impl Potentials {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinitePotentials { a, b });
        }
        if b < 0.0 {
            return Err(Error::NegativePairPotential(b));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Log weight `2*a*k - 2*b*gamma` of a configuration with `k` positive
/// vertices and perimeter `gamma`. Kept in log scale throughout; callers
/// exponentiate at the final comparison.
pub fn log_weight(k: u64, gamma: u64, pot: &Potentials) -> f64 {
    2.0 * pot.a * k as f64 - 2.0 * pot.b * gamma as f64
}

/// A signed assignment on an arbitrary vertex subset of a lattice,
/// stored as parallel sorted vertex / sign vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubConfig {
    verts: Vec<usize>,
    signs: Vec<bool>,
}

impl SubConfig {
    pub fn new(mut pairs: Vec<(usize, bool)>) -> Result<Self> {
        pairs.sort_unstable_by_key(|&(v, _)| v);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidParameter(format!(
                    "vertex {} assigned twice",
                    w[0].0
                )));
            }
        }
        let (verts, signs) = pairs.into_iter().unzip();
        Ok(Self { verts, signs })
    }

    /// All-minus assignment on the given domain.
    pub fn null_on(mut verts: Vec<usize>) -> Result<Self> {
        verts.sort_unstable();
        if verts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate vertex in domain".into()));
        }
        let signs = vec![false; verts.len()];
        Ok(Self { verts, signs })
    }

    pub fn domain(&self) -> &[usize] {
        &self.verts
    }

    pub fn sign(&self, v: usize) -> Option<bool> {
        self.verts.binary_search(&v).ok().map(|i| self.signs[i])
    }

    pub fn positives(&self) -> Vec<usize> {
        self.verts
            .iter()
            .zip(&self.signs)
            .filter_map(|(&v, &s)| s.then_some(v))
            .collect()
    }

    /// k: the number of positive vertices.
    pub fn positive_count(&self) -> u64 {
        self.signs.iter().filter(|&&s| s).count() as u64
    }

    pub fn is_null(&self) -> bool {
        self.signs.iter().all(|&s| !s)
    }

    /// gamma: `V*k` minus twice the number of positive-positive adjacent
    /// pairs inside the support, counted on the torus.
    pub fn perimeter(&self, lattice: &TorusLattice) -> u64 {
        let pos = self.positives();
        let v = lattice.coordination() as u64;
        let k = pos.len() as u64;
        let mut pp = 0u64;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                if lattice.are_neighbors(pos[i], pos[j]) {
                    pp += 1;
                }
            }
        }
        v * k - 2 * pp
    }

    pub fn log_weight(&self, pot: &Potentials, lattice: &TorusLattice) -> f64 {
        log_weight(self.positive_count(), self.perimeter(lattice), pot)
    }

    /// The concatenated assignment on the disjoint union of domains.
    pub fn union(&self, other: &SubConfig) -> Result<SubConfig> {
        let mut pairs: Vec<(usize, bool)> = self
            .verts
            .iter()
            .zip(&self.signs)
            .map(|(&v, &s)| (v, s))
            .collect();
        for (&v, &s) in other.verts.iter().zip(&other.signs) {
            if self.verts.binary_search(&v).is_ok() {
                return Err(Error::OverlappingSupports { vertex: v });
            }
            pairs.push((v, s));
        }
        SubConfig::new(pairs)
    }
}

/// Number of edges joining positive vertices across two disjoint
/// supports. Controls how weights factorize: in log scale,
/// `log W(zz') = log W(z) + log W(z') + 4*b*conn(z, z')`.
pub fn connection(a: &SubConfig, b: &SubConfig, lattice: &TorusLattice) -> Result<u64> {
    for &v in a.domain() {
        if b.sign(v).is_some() {
            return Err(Error::OverlappingSupports { vertex: v });
        }
    }
    let pa = a.positives();
    let pb = b.positives();
    let mut conn = 0u64;
    for &y in &pa {
        for &z in &pb {
            if lattice.are_neighbors(y, z) {
                conn += 1;
            }
        }
    }
    Ok(conn)
}

/// A local pattern: the positive-offset set of a sign assignment on the
/// radius-r graph-distance ball around the origin, together with the
/// lattice parameters (d, p, rho) it was validated against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalPattern {
    dim: usize,
    norm: Norm,
    rho: usize,
    radius: usize,
    positives: Vec<Vec<i64>>,
}

impl LocalPattern {
    pub fn new(
        dim: usize,
        norm: Norm,
        rho: usize,
        radius: usize,
        mut positives: Vec<Vec<i64>>,
    ) -> Result<Self> {
        let geometry = BallGeometry::new(dim, norm, rho, radius)?;
        for off in &positives {
            if off.len() != dim {
                return Err(Error::InvalidParameter(format!(
                    "offset {off:?} has {} coordinates, expected {dim}",
                    off.len()
                )));
            }
            if !geometry.contains(off) {
                return Err(Error::OffsetOutsideBall {
                    offset: off.clone(),
                    radius,
                });
            }
        }
        positives.sort();
        for w in positives.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateOffset {
                    offset: w[0].clone(),
                });
            }
        }
        Ok(Self {
            dim,
            norm,
            rho,
            radius,
            positives,
        })
    }

    /// The null pattern: no positive vertex.
    pub fn null(dim: usize, norm: Norm, rho: usize, radius: usize) -> Result<Self> {
        Self::new(dim, norm, rho, radius, Vec::new())
    }

    /// A single positive vertex at the origin of the ball.
    pub fn single_positive(dim: usize, norm: Norm, rho: usize, radius: usize) -> Result<Self> {
        Self::new(dim, norm, rho, radius, vec![vec![0; dim]])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn positives(&self) -> &[Vec<i64>] {
        &self.positives
    }

    pub fn k(&self) -> u64 {
        self.positives.len() as u64
    }

    pub fn is_null(&self) -> bool {
        self.positives.is_empty()
    }

    /// Clean patterns keep their positives strictly inside the ball:
    /// every positive offset lies within graph distance r-1 of the
    /// origin, so an occurrence never touches the ball boundary.
    pub fn is_clean(&self) -> Result<bool> {
        if self.positives.is_empty() {
            return Ok(true);
        }
        if self.radius == 0 {
            return Ok(false);
        }
        let inner = BallGeometry::new(self.dim, self.norm, self.rho, self.radius - 1)?;
        Ok(self.positives.iter().all(|o| inner.contains(o)))
    }

    /// The pattern is usable on `lattice` when the parameters agree and
    /// the radius-r ball does not self-overlap.
    pub fn check_lattice(&self, lattice: &TorusLattice) -> Result<()> {
        if lattice.dim() != self.dim || lattice.norm() != self.norm || lattice.rho() != self.rho {
            return Err(Error::LatticeMismatch(format!(
                "pattern is for (d={}, p={}, rho={}), lattice is (d={}, p={}, rho={})",
                self.dim,
                self.norm,
                self.rho,
                lattice.dim(),
                lattice.norm(),
                lattice.rho()
            )));
        }
        if lattice.size() <= 2 * self.rho * self.radius {
            return Err(Error::BallTooLarge {
                n: lattice.size(),
                radius: self.radius,
                min: 2 * self.rho * self.radius,
            });
        }
        Ok(())
    }

    /// Vertices of `x + V_+`, the translated positive set.
    pub fn positives_at(&self, lattice: &TorusLattice, x: usize) -> Result<Vec<usize>> {
        self.check_lattice(lattice)?;
        Ok(self
            .positives
            .iter()
            .map(|o| lattice.translate(x, o))
            .collect())
    }

    /// The full sign assignment of the translated pattern on the ball
    /// `B(x, r)`.
    pub fn to_assignment(&self, lattice: &TorusLattice, x: usize) -> Result<SubConfig> {
        let tmpl = self.site_template(lattice)?;
        let pairs = tmpl
            .iter()
            .map(|(off, want)| (lattice.translate(x, off), *want))
            .collect();
        SubConfig::new(pairs)
    }

    /// (k, gamma) on the given lattice.
    pub fn stats(&self, lattice: &TorusLattice) -> Result<(u64, u64)> {
        let assignment = self.to_assignment(lattice, 0)?;
        Ok((assignment.positive_count(), assignment.perimeter(lattice)))
    }

    /// Ball member offsets paired with the wanted sign, in ball member
    /// order. The shared scan template for both counting modes.
    pub(crate) fn site_template(&self, lattice: &TorusLattice) -> Result<Vec<(Vec<i64>, bool)>> {
        self.check_lattice(lattice)?;
        let ball = lattice.ball(0, self.radius)?;
        Ok(ball
            .members
            .iter()
            .map(|&m| {
                let off = lattice.canonical_offset(0, m);
                let want = self.positives.binary_search(&off).is_ok();
                (off, want)
            })
            .collect())
    }

    /// Parse the line-oriented pattern file format: first data line is
    /// `d p rho r` (p an integer or `inf`), then one positive-vertex
    /// offset per line as d signed integers. `#` starts a comment and
    /// blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, Norm, usize, usize)> = None;
        let mut positives: Vec<Vec<i64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match header {
                None => {
                    if fields.len() != 4 {
                        return Err(Error::PatternFile(format!(
                            "line {}: header must be `d p rho r`, got `{line}`",
                            lineno + 1
                        )));
                    }
                    let d: usize = fields[0].parse().map_err(|_| {
                        Error::PatternFile(format!(
                            "line {}: bad dimension `{}`",
                            lineno + 1,
                            fields[0]
                        ))
                    })?;
                    let p = Norm::from_str(fields[1])
                        .map_err(|e| Error::PatternFile(format!("line {}: {e}", lineno + 1)))?;
                    let rho: usize = fields[2].parse().map_err(|_| {
                        Error::PatternFile(format!("line {}: bad rho `{}`", lineno + 1, fields[2]))
                    })?;
                    let r: usize = fields[3].parse().map_err(|_| {
                        Error::PatternFile(format!(
                            "line {}: bad radius `{}`",
                            lineno + 1,
                            fields[3]
                        ))
                    })?;
                    header = Some((d, p, rho, r));
                }
                Some((d, _, _, _)) => {
                    if fields.len() != d {
                        return Err(Error::PatternFile(format!(
                            "line {}: expected {d} coordinates, got {}",
                            lineno + 1,
                            fields.len()
                        )));
                    }
                    let mut off = Vec::with_capacity(d);
                    for f in fields {
                        off.push(f.parse::<i64>().map_err(|_| {
                            Error::PatternFile(format!("line {}: bad coordinate `{f}`", lineno + 1))
                        })?);
                    }
                    positives.push(off);
                }
            }
        }
        let (d, p, rho, r) =
            header.ok_or_else(|| Error::PatternFile("missing header line".into()))?;
        LocalPattern::new(d, p, rho, r, positives).map_err(|e| match e {
            Error::PatternFile(_) => e,
            other => Error::PatternFile(other.to_string()),
        })
    }
}

/// Closed-form probability gap: the largest weight ratio
/// `W(eta_x sigma) / W(eta)` over nonnull boundary configurations sigma is
/// attained at a single positive boundary vertex, giving
/// `exp(2a - 2b(V - 2c*))` with `c*` the maximal number of positive ball
/// vertices adjacent to one boundary vertex.
pub fn probability_gap(
    pattern: &LocalPattern,
    pot: &Potentials,
    lattice: &TorusLattice,
) -> Result<f64> {
    pattern.check_lattice(lattice)?;
    let ball = lattice.ball(0, pattern.radius())?;
    let shell = lattice.ball_boundary(&ball);
    if shell.is_empty() {
        return Err(Error::InvalidParameter(
            "ball has no boundary on this torus; the probability gap is undefined".into(),
        ));
    }
    let pos = pattern.positives_at(lattice, 0)?;
    let c_star = shell
        .iter()
        .map(|&z| {
            lattice
                .neighbors(z)
                .iter()
                .filter(|y| pos.contains(y))
                .count()
        })
        .max()
        .unwrap_or(0);
    let v = lattice.coordination() as f64;
    Ok((2.0 * pot.a() - 2.0 * pot.b() * (v - 2.0 * c_star as f64)).exp())
}

/// Exact probability gap by enumerating all nonnull boundary
/// configurations. The validation oracle for the closed form.
pub fn probability_gap_bruteforce(
    pattern: &LocalPattern,
    pot: &Potentials,
    lattice: &TorusLattice,
) -> Result<f64> {
    pattern.check_lattice(lattice)?;
    let ball = lattice.ball(0, pattern.radius())?;
    let shell = lattice.ball_boundary(&ball);
    if shell.is_empty() {
        return Err(Error::InvalidParameter(
            "ball has no boundary on this torus; the probability gap is undefined".into(),
        ));
    }
    let nb = shell.len();
    if nb > ENUM_GUARD_BITS {
        return Err(Error::EnumerationGuard {
            bits: nb,
            limit: ENUM_GUARD_BITS,
        });
    }
    let pos = pattern.positives_at(lattice, 0)?;
    // Per boundary vertex: contacts into the positive set, and adjacency
    // to lower-indexed boundary vertices.
    let contacts: Vec<u64> = shell
        .iter()
        .map(|&z| {
            lattice
                .neighbors(z)
                .iter()
                .filter(|y| pos.contains(y))
                .count() as u64
        })
        .collect();
    let mut adj_below = vec![0u64; nb];
    for i in 0..nb {
        for j in 0..i {
            if lattice.are_neighbors(shell[i], shell[j]) {
                adj_below[i] |= 1 << j;
            }
        }
    }
    let v = lattice.coordination() as u64;
    let (a, b) = (pot.a(), pot.b());
    let mut best = f64::NEG_INFINITY;
    for mask in 1u64..(1u64 << nb) {
        let k = mask.count_ones() as u64;
        let mut internal = 0u64;
        let mut conn = 0u64;
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            internal += (adj_below[i] & mask).count_ones() as u64;
            conn += contacts[i];
        }
        // log ratio: 2a*k(sigma) - 2b*(gamma(sigma) - 2*conn(eta, sigma))
        let gamma_sigma = (v * k - 2 * internal) as f64;
        let log_ratio = 2.0 * a * k as f64 - 2.0 * b * (gamma_sigma - 2.0 * conn as f64);
        if log_ratio > best {
            best = log_ratio;
        }
    }
    Ok(best.exp())
}

/// Result of the gap computation with its brute-force cross-check.
#[derive(Debug, Clone)]
pub struct GapCheck {
    /// The adjudicated gap: brute force wherever it disagrees with the
    /// closed form.
    pub delta: f64,
    pub closed_form: f64,
    pub brute_force: Option<f64>,
    pub consistent: bool,
}

/// Closed-form gap cross-checked against brute force whenever the
/// boundary is small enough to enumerate; on mismatch the enumerated
/// value wins and `consistent` is false.
pub fn probability_gap_checked(
    pattern: &LocalPattern,
    pot: &Potentials,
    lattice: &TorusLattice,
) -> Result<GapCheck> {
    let closed = probability_gap(pattern, pot, lattice)?;
    let ball = lattice.ball(0, pattern.radius())?;
    let shell_len = lattice.ball_boundary(&ball).len();
    if shell_len > GAP_AUTOCHECK_BITS {
        return Ok(GapCheck {
            delta: closed,
            closed_form: closed,
            brute_force: None,
            consistent: true,
        });
    }
    let brute = probability_gap_bruteforce(pattern, pot, lattice)?;
    let consistent = (closed - brute).abs() <= 1e-12 * closed.abs().max(brute.abs()).max(1e-300);
    Ok(GapCheck {
        delta: if consistent { closed } else { brute },
        closed_form: closed,
        brute_force: Some(brute),
        consistent,
    })
}

/// Maximality probability: the largest weight ratio `W(eta') / W(eta)`
/// over strict positive-supersets `eta'` of the pattern within its ball.
pub fn maximality_probability(
    pattern: &LocalPattern,
    pot: &Potentials,
    lattice: &TorusLattice,
) -> Result<f64> {
    pattern.check_lattice(lattice)?;
    let ball = lattice.ball(0, pattern.radius())?;
    let pos = pattern.positives_at(lattice, 0)?;
    let free: Vec<usize> = ball
        .members
        .iter()
        .copied()
        .filter(|m| !pos.contains(m))
        .collect();
    let m = free.len();
    if m == 0 {
        return Err(Error::FullBall);
    }
    if m > ENUM_GUARD_BITS {
        return Err(Error::EnumerationGuard {
            bits: m,
            limit: ENUM_GUARD_BITS,
        });
    }
    // Adding the subset S of free cells changes the exponent by
    // 2a*|S| - 2b*dgamma(S); for b >= 0 only the minimal perimeter
    // increase per |S| can attain the maximum.
    let contacts: Vec<u64> = free
        .iter()
        .map(|&z| {
            lattice
                .neighbors(z)
                .iter()
                .filter(|y| pos.contains(y))
                .count() as u64
        })
        .collect();
    let mut adj_below = vec![0u64; m];
    for i in 0..m {
        for j in 0..i {
            if lattice.are_neighbors(free[i], free[j]) {
                adj_below[i] |= 1 << j;
            }
        }
    }
    let v = lattice.coordination() as i64;
    let mut min_dgamma = vec![i64::MAX; m + 1];
    for mask in 1u64..(1u64 << m) {
        let dk = mask.count_ones() as i64;
        let mut added_edges = 0i64;
        let mut bits = mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            added_edges += (adj_below[i] & mask).count_ones() as i64 + contacts[i] as i64;
        }
        let dgamma = v * dk - 2 * added_edges;
        if dgamma < min_dgamma[dk as usize] {
            min_dgamma[dk as usize] = dgamma;
        }
    }
    let mut best = f64::NEG_INFINITY;
    for (dk, &dg) in min_dgamma.iter().enumerate().skip(1) {
        if dg == i64::MAX {
            continue;
        }
        let log_ratio = 2.0 * pot.a() * dk as f64 - 2.0 * pot.b() * dg as f64;
        if log_ratio > best {
            best = log_ratio;
        }
    }
    Ok(best.exp())
}

pub(crate) fn count_with_template(
    state: &SpinState,
    lattice: &TorusLattice,
    template: &[(Vec<i64>, bool)],
    exact_match: bool,
) -> u64 {
    let mut count = 0u64;
    for x in 0..lattice.vertex_count() {
        let hit = template.iter().all(|(off, want)| {
            if exact_match || *want {
                state.is_positive(lattice.translate(x, off)) == *want
            } else {
                true
            }
        });
        if hit {
            count += 1;
        }
    }
    count
}

/// Number of exact occurrences of the pattern in the state: anchors x
/// where the state restricted to `B(x, r)` equals the translated
/// pattern, positives and negatives alike. Occurrences may overlap.
pub fn count_occurrences(
    state: &SpinState,
    pattern: &LocalPattern,
    lattice: &TorusLattice,
) -> Result<u64> {
    check_state(state, lattice)?;
    let template = pattern.site_template(lattice)?;
    Ok(count_with_template(state, lattice, &template, true))
}

/// Number of upper occurrences: anchors x where every vertex of
/// `x + V_+` is positive, whatever the rest of the ball looks like.
/// Increasing in the state and always at least `count_occurrences`.
pub fn count_upper(
    state: &SpinState,
    pattern: &LocalPattern,
    lattice: &TorusLattice,
) -> Result<u64> {
    check_state(state, lattice)?;
    let template = pattern.site_template(lattice)?;
    Ok(count_with_template(state, lattice, &template, false))
}

fn check_state(state: &SpinState, lattice: &TorusLattice) -> Result<()> {
    if state.len() != lattice.vertex_count() {
        return Err(Error::InvalidParameter(format!(
            "state has {} sites, lattice has {}",
            state.len(),
            lattice.vertex_count()
        )));
    }
    Ok(())
}

/// Summary of a pattern under given potentials on a given lattice.
#[derive(Debug, Clone)]
pub struct PatternReport {
    pub k: u64,
    pub gamma: u64,
    pub log_weight: f64,
    pub delta: f64,
    /// None when the positives cover the whole ball.
    pub theta: Option<f64>,
    pub clean: bool,
    /// Present when the closed-form gap disagreed with brute force.
    pub gap_diagnostic: Option<String>,
}

impl PatternReport {
    pub fn compute(
        pattern: &LocalPattern,
        pot: &Potentials,
        lattice: &TorusLattice,
    ) -> Result<Self> {
        let (k, gamma) = pattern.stats(lattice)?;
        let gap = probability_gap_checked(pattern, pot, lattice)?;
        let theta = match maximality_probability(pattern, pot, lattice) {
            Ok(t) => Some(t),
            Err(Error::FullBall) => None,
            Err(e) => return Err(e),
        };
        let gap_diagnostic = if gap.consistent {
            None
        } else {
            Some(format!(
                "closed-form probability gap {:.17e} disagrees with brute force {:.17e}; using brute force",
                gap.closed_form,
                gap.brute_force.unwrap_or(f64::NAN)
            ))
        };
        Ok(Self {
            k,
            gamma,
            log_weight: log_weight(k, gamma, pot),
            delta: gap.delta,
            theta,
            clean: pattern.is_clean()?,
            gap_diagnostic,
        })
    }
}
