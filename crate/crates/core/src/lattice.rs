//! The lattice torus: vertices are `{0, …, n-1}^d` with arithmetic mod n,
//! and two vertices are adjacent when some representative of their
//! difference has L_p norm at most rho. Graph-distance balls, their
//! boundaries and the ball constants beta(r) / alpha(r) live here.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest exponent accepted for a finite L_p norm.
pub const MAX_NORM_EXPONENT: u32 = 32;

/// The norm selecting one-step adjacency: finite L_p or L_infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    P(u32),
    Infinity,
}

impl Norm {
    pub fn validate(&self) -> Result<()> {
        match self {
            Norm::P(0) => Err(Error::InvalidParameter("norm exponent p = 0".into())),
            Norm::P(p) if *p > MAX_NORM_EXPONENT => Err(Error::InvalidParameter(format!(
                "norm exponent p = {p} exceeds the supported maximum {MAX_NORM_EXPONENT}"
            ))),
            _ => Ok(()),
        }
    }

    /// Whether `offset` has norm at most `rho`, in exact integer arithmetic.
    pub fn within(&self, offset: &[i64], rho: usize) -> bool {
        let rho = rho as u128;
        match self {
            Norm::Infinity => offset.iter().all(|&c| c.unsigned_abs() as u128 <= rho),
            Norm::P(p) => {
                // Each |c| must be <= rho on its own, which also keeps the
                // power sum bounded by d * rho^p.
                if offset.iter().any(|&c| c.unsigned_abs() as u128 > rho) {
                    return false;
                }
                let budget = rho.pow(*p);
                let mut sum: u128 = 0;
                for &c in offset {
                    sum += (c.unsigned_abs() as u128).pow(*p);
                    if sum > budget {
                        return false;
                    }
                }
                true
            }
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "oo" => Ok(Norm::Infinity),
            t => {
                let p: u32 = t.parse().map_err(|_| {
                    Error::InvalidParameter(format!(
                        "norm must be a positive integer or `inf`, got `{t}`"
                    ))
                })?;
                let norm = Norm::P(p);
                norm.validate()?;
                Ok(norm)
            }
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::P(p) => write!(f, "{p}"),
            Norm::Infinity => write!(f, "inf"),
        }
    }
}

/// A graph-distance ball on the torus.
///
/// `members` are vertex indices ordered lexicographically by their offset
/// from the center; `beta` is the vertex count and `alpha` the number of
/// edges with both endpoints inside the ball.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: usize,
    pub radius: usize,
    pub members: Vec<usize>,
    pub beta: usize,
    pub alpha: usize,
}

impl Ball {
    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }
}

/// The torus graph: size n, dimension d, norm p and range rho.
///
/// Vertices are indexed row-major over coordinates in `{0, …, n-1}^d`
/// (last coordinate varies fastest). Immutable after construction and
/// safe to share across workers.
#[derive(Debug, Clone)]
pub struct TorusLattice {
    n: usize,
    dim: usize,
    norm: Norm,
    rho: usize,
    offsets: Vec<Vec<i64>>,
    strides: Vec<usize>,
    vertex_count: usize,
}

impl TorusLattice {
    pub fn new(n: usize, dim: usize, norm: Norm, rho: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "dimension d must be at least 1".into(),
            ));
        }
        if rho == 0 {
            return Err(Error::InvalidParameter(
                "range rho must be at least 1".into(),
            ));
        }
        norm.validate()?;
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "torus size n = {n} must be at least 2"
            )));
        }
        if n <= 2 * rho {
            return Err(Error::LatticeTooSmall { n, rho });
        }
        let mut vertex_count: usize = 1;
        for _ in 0..dim {
            vertex_count = vertex_count.checked_mul(n).ok_or_else(|| {
                Error::InvalidParameter(format!("n^d overflows for n = {n}, d = {dim}"))
            })?;
        }
        let mut strides = vec![1usize; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * n;
        }
        let offsets = neighbor_offsets(dim, norm, rho);
        Ok(Self {
            n,
            dim,
            norm,
            rho,
            offsets,
            strides,
            vertex_count,
        })
    }

    /// Smallest torus size on which all radius-`radius` local geometry
    /// (ball, boundary, second boundary) is free of wraparound effects.
    pub fn bulk_size(rho: usize, radius: usize) -> usize {
        rho * (2 * radius + 5) + 1
    }

    pub fn size(&self) -> usize {
        self.n
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

    /// The common neighbor count V.
    pub fn coordination(&self) -> usize {
        self.offsets.len()
    }

    pub fn neighbor_offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn coords_of(&self, v: usize) -> Vec<i64> {
        debug_assert!(v < self.vertex_count);
        (0..self.dim)
            .map(|i| ((v / self.strides[i]) % self.n) as i64)
            .collect()
    }

    pub fn index_of(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let n = self.n as i64;
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| (c.rem_euclid(n) as usize) * s)
            .sum()
    }

    /// Vertex reached from `v` by the displacement `offset`, mod n.
    pub fn translate(&self, v: usize, offset: &[i64]) -> usize {
        let n = self.n as i64;
        let mut idx = 0;
        for (&stride, &o) in self.strides.iter().zip(offset) {
            let c = ((v / stride) % self.n) as i64;
            idx += ((c + o).rem_euclid(n) as usize) * stride;
        }
        idx
    }

    /// The minimal-absolute-value representative of `to - from`, one
    /// coordinate at a time; ties at n/2 resolve to the positive side.
    pub fn canonical_offset(&self, from: usize, to: usize) -> Vec<i64> {
        let n = self.n as i64;
        (0..self.dim)
            .map(|i| {
                let cf = ((from / self.strides[i]) % self.n) as i64;
                let ct = ((to / self.strides[i]) % self.n) as i64;
                let m = (ct - cf).rem_euclid(n);
                if 2 * m <= n {
                    m
                } else {
                    m - n
                }
            })
            .collect()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.offsets.iter().map(|o| self.translate(v, o)).collect()
    }

    pub fn are_neighbors(&self, u: usize, v: usize) -> bool {
        if u == v {
            return false;
        }
        self.offsets.iter().any(|o| self.translate(u, o) == v)
    }

    /// Every edge exactly once, as ordered pairs (x, y) with x < y.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.vertex_count * self.offsets.len() / 2);
        for x in 0..self.vertex_count {
            for o in &self.offsets {
                let y = self.translate(x, o);
                if x < y {
                    edges.push((x, y));
                }
            }
        }
        edges.sort_unstable();
        edges
    }

    /// Graph-distance ball of the given center and radius.
    pub fn ball(&self, center: usize, radius: usize) -> Result<Ball> {
        if center >= self.vertex_count {
            return Err(Error::InvalidParameter(format!(
                "vertex {center} out of range"
            )));
        }
        if self.n <= 2 * self.rho * radius {
            return Err(Error::BallTooLarge {
                n: self.n,
                radius,
                min: 2 * self.rho * radius,
            });
        }
        let member_set = self.bfs(center, radius);
        let mut members: Vec<usize> = member_set.iter().copied().collect();
        members.sort_by_key(|&a| self.canonical_offset(center, a));
        let alpha = {
            let mut twice = 0usize;
            for &m in &members {
                twice += self
                    .neighbors(m)
                    .iter()
                    .filter(|z| member_set.contains(z))
                    .count();
            }
            debug_assert_eq!(twice % 2, 0);
            twice / 2
        };
        let beta = members.len();
        Ok(Ball {
            center,
            radius,
            members,
            beta,
            alpha,
        })
    }

    /// The boundary shell of a ball: vertices outside it that are adjacent
    /// to it, ordered lexicographically by offset from the center. Equals
    /// `ball(center, r+1) \ ball(center, r)`.
    pub fn ball_boundary(&self, ball: &Ball) -> Vec<usize> {
        let inside: BTreeSet<usize> = ball.members.iter().copied().collect();
        let mut shell = BTreeSet::new();
        for &m in &ball.members {
            for z in self.neighbors(m) {
                if !inside.contains(&z) {
                    shell.insert(z);
                }
            }
        }
        let mut out: Vec<usize> = shell.into_iter().collect();
        out.sort_by(|&a, &b| {
            self.canonical_offset(ball.center, a)
                .cmp(&self.canonical_offset(ball.center, b))
        });
        out
    }

    /// Generic vertex-set boundary: vertices outside `verts` adjacent to
    /// some vertex of `verts`, in increasing index order.
    pub fn boundary_of(&self, verts: &[usize]) -> Vec<usize> {
        let inside: BTreeSet<usize> = verts.iter().copied().collect();
        let mut out = BTreeSet::new();
        for &v in verts {
            for z in self.neighbors(v) {
                if !inside.contains(&z) {
                    out.insert(z);
                }
            }
        }
        out.into_iter().collect()
    }

    fn bfs(&self, center: usize, radius: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        seen.insert(center);
        let mut frontier = vec![center];
        for _ in 0..radius {
            let mut next = Vec::new();
            for &v in &frontier {
                for z in self.neighbors(v) {
                    if seen.insert(z) {
                        next.push(z);
                    }
                }
            }
            frontier = next;
        }
        seen
    }
}

/// All nonzero d-dimensional offsets with norm at most rho, in
/// lexicographic order. Closed under negation by symmetry of the norm.
pub fn neighbor_offsets(dim: usize, norm: Norm, rho: usize) -> Vec<Vec<i64>> {
    let r = rho as i64;
    let mut out = Vec::new();
    let mut cur = vec![-r; dim];
    loop {
        if cur.iter().any(|&c| c != 0) && norm.within(&cur, rho) {
            out.push(cur.clone());
        }
        // odometer increment
        let mut i = dim;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < r {
                cur[i] += 1;
                for c in cur.iter_mut().skip(i + 1) {
                    *c = -r;
                }
                break;
            }
        }
    }
}

/// Radius-r ball geometry around the origin of the infinite lattice Z^d:
/// the n-independent reference for pattern validation. `members` and
/// `boundary` are origin-relative offsets in lexicographic order.
#[derive(Debug, Clone)]
pub struct BallGeometry {
    pub dim: usize,
    pub norm: Norm,
    pub rho: usize,
    pub radius: usize,
    pub members: Vec<Vec<i64>>,
    pub boundary: Vec<Vec<i64>>,
    pub beta: usize,
    pub alpha: usize,
}

impl BallGeometry {
    pub fn new(dim: usize, norm: Norm, rho: usize, radius: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "dimension d must be at least 1".into(),
            ));
        }
        if rho == 0 {
            return Err(Error::InvalidParameter(
                "range rho must be at least 1".into(),
            ));
        }
        norm.validate()?;
        let steps = neighbor_offsets(dim, norm, rho);
        let mut members: BTreeSet<Vec<i64>> = BTreeSet::new();
        members.insert(vec![0; dim]);
        let mut frontier: Vec<Vec<i64>> = vec![vec![0; dim]];
        for _ in 0..radius {
            let mut next = Vec::new();
            for v in &frontier {
                for s in &steps {
                    let w: Vec<i64> = v.iter().zip(s).map(|(a, b)| a + b).collect();
                    if members.insert(w.clone()) {
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        let mut boundary: BTreeSet<Vec<i64>> = BTreeSet::new();
        for v in &members {
            for s in &steps {
                let w: Vec<i64> = v.iter().zip(s).map(|(a, b)| a + b).collect();
                if !members.contains(&w) {
                    boundary.insert(w);
                }
            }
        }
        let members: Vec<Vec<i64>> = members.into_iter().collect();
        let mut alpha = 0usize;
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let diff: Vec<i64> = members[j]
                    .iter()
                    .zip(&members[i])
                    .map(|(a, b)| a - b)
                    .collect();
                if norm.within(&diff, rho) {
                    alpha += 1;
                }
            }
        }
        let beta = members.len();
        Ok(Self {
            dim,
            norm,
            rho,
            radius,
            members,
            boundary: boundary.into_iter().collect(),
            beta,
            alpha,
        })
    }

    pub fn contains(&self, offset: &[i64]) -> bool {
        self.members
            .binary_search_by(|m| m.as_slice().cmp(offset))
            .is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> TorusLattice {
        TorusLattice::new(n, 2, Norm::P(1), 1).unwrap()
    }

    #[test]
    fn coordination_counts() {
        let l1 = TorusLattice::new(8, 1, Norm::P(1), 1).unwrap();
        assert_eq!(l1.coordination(), 2);
        assert_eq!(l1.neighbor_offsets(), &[vec![-1], vec![1]]);

        // square lattice: p = rho = 1
        assert_eq!(square(8).coordination(), 4);

        // the L_inf norm adds the diagonals
        let moore = TorusLattice::new(8, 2, Norm::Infinity, 1).unwrap();
        assert_eq!(moore.coordination(), 8);
    }

    #[test]
    fn neighbors_wrap_around() {
        let l = TorusLattice::new(8, 1, Norm::P(1), 1).unwrap();
        let mut nb = l.neighbors(0);
        nb.sort_unstable();
        assert_eq!(nb, vec![1, 7]);

        let sq = TorusLattice::new(4, 2, Norm::P(1), 1).unwrap();
        let mut nb = sq.neighbors(0);
        nb.sort_unstable();
        // (3,0), (1,0), (0,3), (0,1) row-major over n = 4
        assert_eq!(nb, vec![1, 3, 4, 12]);
    }

    #[test]
    fn moore_neighborhood_is_surrounding_block() {
        let l = TorusLattice::new(8, 2, Norm::Infinity, 1).unwrap();
        let x = l.index_of(&[3, 3]);
        let mut got = l.neighbors(x);
        got.sort_unstable();
        let mut want: Vec<usize> = Vec::new();
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                if dx != 0 || dy != 0 {
                    want.push(l.index_of(&[3 + dx, 3 + dy]));
                }
            }
        }
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TorusLattice::new(8, 0, Norm::P(1), 1).is_err());
        assert!(TorusLattice::new(8, 1, Norm::P(1), 0).is_err());
        assert!(TorusLattice::new(8, 1, Norm::P(0), 1).is_err());
        assert!(TorusLattice::new(1, 1, Norm::P(1), 1).is_err());
        // offsets +rho and -rho would collide mod n
        assert!(TorusLattice::new(2, 1, Norm::P(1), 1).is_err());
        assert!(TorusLattice::new(4, 1, Norm::P(2), 2).is_err());
    }

    #[test]
    fn path_ball_in_one_dimension() {
        let l = TorusLattice::new(8, 1, Norm::P(1), 1).unwrap();
        let ball = l.ball(0, 1).unwrap();
        assert_eq!(ball.members, vec![7, 0, 1]); // offsets -1, 0, 1
        assert_eq!(ball.beta, 3);
        assert_eq!(ball.alpha, 2);
        let shell = l.ball_boundary(&ball);
        assert_eq!(shell, vec![6, 2]); // offsets -2, +2
    }

    #[test]
    fn diamond_and_block_balls() {
        // radius-1 diamond under L1
        let ball = square(8).ball(0, 1).unwrap();
        assert_eq!(ball.beta, 5);
        assert_eq!(ball.alpha, 4);
        assert_eq!(square(8).ball_boundary(&ball).len(), 8); // beta(2) - beta(1) = 13 - 5

        // radius-1 block under L_inf: 3x3 with 20 internal adjacencies
        let l = TorusLattice::new(8, 2, Norm::Infinity, 1).unwrap();
        let ball = l.ball(0, 1).unwrap();
        assert_eq!(ball.beta, 9);
        assert_eq!(ball.alpha, 20);
    }

    #[test]
    fn boundary_of_singleton_is_its_neighborhood() {
        let l = square(8);
        let ball = l.ball(11, 0).unwrap();
        let shell = l.ball_boundary(&ball);
        let mut want = l.neighbors(11);
        want.sort_unstable();
        let mut got = shell.clone();
        got.sort_unstable();
        assert_eq!(got, want);
        assert_eq!(shell.len(), l.coordination());
    }

    #[test]
    fn ball_oversize_is_rejected() {
        let l = TorusLattice::new(8, 1, Norm::P(1), 1).unwrap();
        assert!(l.ball(0, 4).is_err());
        assert!(l.ball(0, 3).is_ok());
    }

    #[test]
    fn geometry_matches_lattice_ball() {
        for (dim, norm, rho, radius, n) in [
            (1usize, Norm::P(1), 1usize, 2usize, 11usize),
            (2, Norm::P(1), 1, 1, 9),
            (2, Norm::P(1), 1, 2, 13),
            (2, Norm::Infinity, 1, 1, 9),
            (2, Norm::P(2), 2, 1, 11),
        ] {
            let g = BallGeometry::new(dim, norm, rho, radius).unwrap();
            let l = TorusLattice::new(n, dim, norm, rho).unwrap();
            let b = l.ball(0, radius).unwrap();
            assert_eq!(
                g.beta, b.beta,
                "beta mismatch for {norm:?} rho={rho} r={radius}"
            );
            assert_eq!(
                g.alpha, b.alpha,
                "alpha mismatch for {norm:?} rho={rho} r={radius}"
            );
            assert_eq!(g.boundary.len(), l.ball_boundary(&b).len());
        }
    }

    #[test]
    fn translation_covariance_of_balls() {
        let l = square(9);
        let b0 = l.ball(0, 2).unwrap();
        for shift in [1usize, 17, 40] {
            let bx = l.ball(shift, 2).unwrap();
            let moved: Vec<usize> = b0
                .members
                .iter()
                .map(|&m| l.translate(m, &l.coords_of(shift)))
                .collect();
            let mut moved_sorted = moved.clone();
            moved_sorted.sort_unstable();
            let mut got = bx.members.clone();
            got.sort_unstable();
            assert_eq!(got, moved_sorted);
            assert_eq!(bx.beta, b0.beta);
            assert_eq!(bx.alpha, b0.alpha);
        }
    }

    #[test]
    fn norm_parsing() {
        assert_eq!("inf".parse::<Norm>().unwrap(), Norm::Infinity);
        assert_eq!("2".parse::<Norm>().unwrap(), Norm::P(2));
        assert!("0".parse::<Norm>().is_err());
        assert!("x".parse::<Norm>().is_err());
    }
}
