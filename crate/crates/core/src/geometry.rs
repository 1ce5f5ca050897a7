//! Cube geometry: dyadic cubes, enclosing cubes, relative distance,
//! eccentricity, lagom families and the cube parametrizations used when
//! summing over wavelet pairs.
//!
//! Everything here is exact (dyadic rationals for coordinates, rationals for
//! ratios) except the `lambda_2` companion cubes, whose side involves a
//! fractional power and is stored as `f64`.

use std::fmt;
use std::str::FromStr;

use crate::dyadic::{rational_to_f64, Dyadic, Rational};
use crate::error::{LagomError, Result};

/// Largest family any enumeration here will materialize.
pub const ENUMERATION_LIMIT: u128 = 100_000_000;

/// The dyadic cube `2^scale * prod [k_i, k_i + 1)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    scale: i32,
    corner: Vec<i64>,
}

impl DyadicCube {
    pub fn new(scale: i32, corner: Vec<i64>) -> Self {
        assert!(!corner.is_empty(), "cube dimension must be positive");
        DyadicCube { scale, corner }
    }

    pub fn unit(d: usize) -> Self {
        Self::new(0, vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn scale(&self) -> i32 {
        self.scale
    }

    pub fn corner(&self) -> &[i64] {
        &self.corner
    }

    pub fn side(&self) -> Dyadic {
        Dyadic::pow2(self.scale)
    }

    pub fn volume(&self) -> Dyadic {
        Dyadic::pow2(self.scale * self.dim() as i32)
    }

    pub fn lower(&self, axis: usize) -> Dyadic {
        Dyadic::new(self.corner[axis] as i128, self.scale)
    }

    pub fn upper(&self, axis: usize) -> Dyadic {
        Dyadic::new(self.corner[axis] as i128 + 1, self.scale)
    }

    /// Centre `2^j (k + 1/2)` in each coordinate.
    pub fn center(&self) -> Vec<Dyadic> {
        self.corner
            .iter()
            .map(|&k| Dyadic::new(2 * k as i128 + 1, self.scale - 1))
            .collect()
    }

    pub fn to_cube(&self) -> Cube {
        Cube {
            center: self.center(),
            side: self.side(),
        }
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            scale: self.scale + 1,
            corner: self.corner.iter().map(|k| k.div_euclid(2)).collect(),
        }
    }

    /// The `2^d` children, indexed by the bitmask of their offsets.
    pub fn children(&self) -> Vec<DyadicCube> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| DyadicCube {
                scale: self.scale - 1,
                corner: (0..d)
                    .map(|a| 2 * self.corner[a] + ((mask >> a) & 1) as i64)
                    .collect(),
            })
            .collect()
    }

    /// Whether `other` is contained in `self` (dyadic nesting).
    pub fn contains(&self, other: &DyadicCube) -> bool {
        if other.dim() != self.dim() || other.scale > self.scale {
            return false;
        }
        let sh = (self.scale - other.scale) as u32;
        self.corner
            .iter()
            .zip(&other.corner)
            .all(|(&k, &kk)| (kk >> sh) == k)
    }

    pub fn translate(&self, shift: &[i64]) -> DyadicCube {
        DyadicCube {
            scale: self.scale,
            corner: self.corner.iter().zip(shift).map(|(k, s)| k + s).collect(),
        }
    }

    pub fn is_lagom(&self, m: u32) -> bool {
        is_lagom(&self.to_cube(), m)
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ks: Vec<String> = self.corner.iter().map(|k| k.to_string()).collect();
        write!(f, "{}:{}:{}", self.dim(), self.scale, ks.join(","))
    }
}

impl FromStr for DyadicCube {
    type Err = LagomError;

    /// Parses `d:j:k1,...,kd`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || LagomError::Parse(format!("invalid dyadic cube `{s}`"));
        let mut parts = s.trim().split(':');
        let d: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let j: i32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let ks = parts.next().ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        let corner: Vec<i64> = ks
            .split(',')
            .map(|k| k.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if d == 0 || corner.len() != d {
            return Err(bad());
        }
        Ok(DyadicCube::new(j, corner))
    }
}

/// A general axis-parallel cube with dyadic-rational centre and side.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cube {
    center: Vec<Dyadic>,
    side: Dyadic,
}

impl Cube {
    pub fn new(center: Vec<Dyadic>, side: Dyadic) -> Result<Self> {
        if center.is_empty() {
            return Err(LagomError::InvalidParameter("cube dimension must be positive".into()));
        }
        if side <= Dyadic::ZERO {
            return Err(LagomError::InvalidParameter(format!("cube side {side} must be positive")));
        }
        Ok(Cube { center, side })
    }

    /// `B_lambda = (-lambda/2, lambda/2)^d`.
    pub fn ball(d: usize, lambda: Dyadic) -> Cube {
        Cube::new(vec![Dyadic::ZERO; d], lambda).expect("ball side must be positive")
    }

    /// `B = (-1/2, 1/2)^d`.
    pub fn unit_ball(d: usize) -> Cube {
        Self::ball(d, Dyadic::ONE)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn side(&self) -> Dyadic {
        self.side
    }

    pub fn center(&self) -> &[Dyadic] {
        &self.center
    }

    pub fn volume(&self) -> Dyadic {
        (1..self.dim()).fold(self.side, |v, _| v * self.side)
    }

    pub fn lower(&self, axis: usize) -> Dyadic {
        self.center[axis] - self.side.half()
    }

    pub fn upper(&self, axis: usize) -> Dyadic {
        self.center[axis] + self.side.half()
    }

    /// `lambda I`: same centre, side scaled by `lambda`.
    pub fn dilate(&self, lambda: Dyadic) -> Result<Cube> {
        Cube::new(self.center.clone(), self.side * lambda)
    }

    pub fn with_center(&self, center: Vec<Dyadic>) -> Result<Cube> {
        if center.len() != self.dim() {
            return Err(LagomError::DimensionMismatch(center.len(), self.dim()));
        }
        Cube::new(center, self.side)
    }

    /// `|c(I)|_inf`.
    pub fn center_norm_inf(&self) -> Dyadic {
        self.center.iter().fold(Dyadic::ZERO, |m, c| m.max(c.abs()))
    }

    /// Whether `other` is a subset of `self` (half-open cubes).
    pub fn contains_cube(&self, other: &Cube) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|a| self.lower(a) <= other.lower(a) && other.upper(a) <= self.upper(a))
    }

    /// Whether `p` lies in the half-open cube.
    pub fn contains_point(&self, p: &[Dyadic]) -> bool {
        p.len() == self.dim() && (0..self.dim()).all(|a| self.lower(a) <= p[a] && p[a] < self.upper(a))
    }

    /// The dyadic cube with these coordinates, if any.
    pub fn as_dyadic(&self) -> Option<DyadicCube> {
        let side = self.side;
        if side.mantissa() != 1 {
            return None;
        }
        let j = side.exponent();
        let corner = (0..self.dim())
            .map(|a| {
                let lo = self.lower(a).scale_pow2(-j);
                (lo.exponent() >= 0).then(|| lo.floor() as i64)
            })
            .collect::<Option<Vec<_>>>()?;
        Some(DyadicCube::new(j, corner))
    }

    pub fn to_float(&self) -> FloatCube {
        FloatCube {
            center: self.center.iter().map(|c| c.to_f64()).collect(),
            side: self.side.to_f64(),
        }
    }
}

impl From<&DyadicCube> for Cube {
    fn from(c: &DyadicCube) -> Self {
        c.to_cube()
    }
}

impl fmt::Display for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cs: Vec<String> = self.center.iter().map(|c| c.to_string()).collect();
        write!(f, "{}:{}:{}", self.dim(), cs.join(","), self.side)
    }
}

impl FromStr for Cube {
    type Err = LagomError;

    /// Parses `d:c1,...,cd:side` with entries written as `m*2^e`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || LagomError::Parse(format!("invalid cube `{s}`"));
        let mut parts = s.trim().split(':');
        let d: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let center: Vec<Dyadic> = parts
            .next()
            .ok_or_else(bad)?
            .split(',')
            .map(str::parse)
            .collect::<Result<_>>()?;
        let side: Dyadic = parts.next().ok_or_else(bad)?.parse()?;
        if parts.next().is_some() || center.len() != d {
            return Err(bad());
        }
        Cube::new(center, side)
    }
}

/// A cube whose side (and possibly centre) left exact arithmetic.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatCube {
    pub center: Vec<f64>,
    pub side: f64,
}

impl FloatCube {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Floating-point `rdist` against another float cube.
    pub fn rdist(&self, other: &FloatCube) -> f64 {
        let diam = (0..self.dim())
            .map(|a| {
                let lo = (self.center[a] - self.side / 2.0).min(other.center[a] - other.side / 2.0);
                let hi = (self.center[a] + self.side / 2.0).max(other.center[a] + other.side / 2.0);
                hi - lo
            })
            .fold(0.0, f64::max);
        diam / self.side.max(other.side)
    }

    /// Floating-point lagom test; agrees with [`is_lagom`] away from ties.
    pub fn is_lagom(&self, m: u32) -> bool {
        let big = 2f64.powi(m as i32);
        let ball = FloatCube {
            center: vec![0.0; self.dim()],
            side: big,
        };
        self.side >= 1.0 / big && self.side <= big && self.rdist(&ball) <= m as f64
    }
}

/// `diam`, `rdist`, `ecc` and the chosen enclosing cube `<I, J>` of a pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubePairGeometry {
    pub diam: Dyadic,
    pub rdist: Rational,
    pub ecc: Rational,
    pub enclosing: Cube,
}

fn check_dims(i: &Cube, j: &Cube) -> Result<()> {
    if i.dim() != j.dim() {
        return Err(LagomError::DimensionMismatch(i.dim(), j.dim()));
    }
    Ok(())
}

/// Smallest cube containing `I u J`, with the coordinatewise-minimal corner
/// when several exist, together with `diam`, `rdist` and `ecc`.
pub fn enclosing_cube(i: &Cube, j: &Cube) -> Result<CubePairGeometry> {
    check_dims(i, j)?;
    let d = i.dim();
    let mut diam = Dyadic::ZERO;
    let mut his = Vec::with_capacity(d);
    for a in 0..d {
        let lo = i.lower(a).min(j.lower(a));
        let hi = i.upper(a).max(j.upper(a));
        diam = diam.max(hi - lo);
        his.push(hi);
    }
    let center = his.into_iter().map(|hi| hi - diam.half()).collect();
    let enclosing = Cube::new(center, diam)?;
    let big = i.side().max(j.side());
    let (vi, vj) = (i.volume(), j.volume());
    Ok(CubePairGeometry {
        diam,
        rdist: diam.ratio(big),
        ecc: vi.min(vj).ratio(vi.max(vj)),
        enclosing,
    })
}

pub fn rdist(i: &Cube, j: &Cube) -> Result<Rational> {
    Ok(enclosing_cube(i, j)?.rdist)
}

pub fn ecc(i: &Cube, j: &Cube) -> Result<Rational> {
    Ok(enclosing_cube(i, j)?.ecc)
}

/// The two-sided estimate
/// `(1 + |c(I)-c(J)|/max l)/2 <= rdist(I,J) <= 1 + |c(I)-c(J)|/max l`.
pub fn rdist_bounds(i: &Cube, j: &Cube) -> Result<(Rational, Rational)> {
    check_dims(i, j)?;
    let dist = (0..i.dim()).fold(Dyadic::ZERO, |m, a| m.max((i.center[a] - j.center[a]).abs()));
    let t = dist.ratio(i.side().max(j.side()));
    let one = Rational::from_integer(1);
    Ok(((one + t) / 2, one + t))
}

/// Membership in `C_M`: `2^-M <= l(I) <= 2^M` and `rdist(I, B_{2^M}) <= M`.
pub fn is_lagom(i: &Cube, m: u32) -> bool {
    let m_i = m as i32;
    let side = i.side();
    if side < Dyadic::pow2(-m_i) || side > Dyadic::pow2(m_i) {
        return false;
    }
    let ball = Cube::ball(i.dim(), Dyadic::pow2(m_i));
    let r = rdist(i, &ball).expect("same dimension by construction");
    r <= Rational::from_integer(m as i128)
}

/// Half-width `(2M-1) 2^(M-1)` of the centred cube that contains every
/// member of `C_M`.
pub fn lagom_extent(m: u32) -> Dyadic {
    Dyadic::new(2 * m as i128 - 1, m as i32 - 1)
}

/// Corner range `k` at scale `j` such that `2^j [k, k+1)` fits in `[-w, w)`.
fn corner_window(w: Dyadic, j: i32) -> (i64, i64) {
    let scaled = w.scale_pow2(-j);
    let hi = scaled.floor() as i64 - 1;
    let lo = -(scaled.floor() as i64);
    (lo, hi)
}

fn for_each_corner(d: usize, lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    if lo.iter().zip(hi).any(|(l, h)| l > h) {
        return;
    }
    let mut k = lo.to_vec();
    loop {
        f(&k);
        let mut a = 0;
        loop {
            if a == d {
                return;
            }
            if k[a] < hi[a] {
                k[a] += 1;
                break;
            }
            k[a] = lo[a];
            a += 1;
        }
    }
}

/// Every dyadic cube in `D_M`, ordered by scale and then corner.
pub fn enumerate_lagom_dyadic(m: u32, d: usize) -> Result<Vec<DyadicCube>> {
    if m == 0 {
        return Err(LagomError::InvalidParameter("M must be at least 1".into()));
    }
    if d == 0 {
        return Err(LagomError::UnsupportedDimension(d));
    }
    let w = lagom_extent(m);
    let m_i = m as i32;
    let mut estimate: u128 = 0;
    for j in -m_i..=m_i {
        let (lo, hi) = corner_window(w, j);
        let per_axis = (hi - lo + 1).max(0) as u128;
        estimate = estimate.saturating_add(per_axis.saturating_pow(d as u32));
    }
    if estimate >= ENUMERATION_LIMIT {
        return Err(LagomError::EnumerationTooLarge(estimate));
    }
    let mut out = Vec::new();
    for j in -m_i..=m_i {
        let (lo, hi) = corner_window(w, j);
        let mut batch = Vec::new();
        for_each_corner(d, &vec![lo; d], &vec![hi; d], |k| {
            let cube = DyadicCube::new(j, k.to_vec());
            if cube.is_lagom(m) {
                batch.push(cube);
            }
        });
        batch.sort();
        out.extend(batch);
    }
    Ok(out)
}

/// `I_{k,m} = { J dyadic : l(I) = 2^k l(J), m <= rdist(I, J) < m + 1 }`.
pub fn family_ikm(i: &DyadicCube, k: i32, m: u32) -> Result<Vec<DyadicCube>> {
    if m == 0 {
        return Err(LagomError::InvalidParameter("m must be at least 1".into()));
    }
    let d = i.dim();
    let j_scale = i.scale() - k;
    let side_j = Dyadic::pow2(j_scale);
    let reach = i.side().max(side_j) * Dyadic::from_int(m as i64 + 1);
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for a in 0..d {
        // J must sit inside (upper(I) - reach, lower(I) + reach).
        lo.push((i.upper(a) - reach).scale_pow2(-j_scale).floor() as i64);
        hi.push((i.lower(a) + reach).scale_pow2(-j_scale).floor() as i64);
    }
    let count: u128 = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| (h - l + 1).max(0) as u128)
        .product();
    if count >= ENUMERATION_LIMIT {
        return Err(LagomError::EnumerationTooLarge(count));
    }
    let ic = i.to_cube();
    let lower = Rational::from_integer(m as i128);
    let upper = Rational::from_integer(m as i128 + 1);
    let mut out = Vec::new();
    for_each_corner(d, &lo, &hi, |kk| {
        let cand = DyadicCube::new(j_scale, kk.to_vec());
        let r = rdist(&ic, &cand.to_cube()).expect("same dimension");
        if r >= lower && r < upper {
            out.push(cand);
        }
    });
    out.sort();
    Ok(out)
}

/// The count `2^{max(k,0) d} 2d (2m)^{d-1}` quoted for `I_{k,m}`.
pub fn ikm_count_estimate(d: usize, k: i32, m: u32) -> f64 {
    2f64.powi(k.max(0) * d as i32) * 2.0 * d as f64 * (2.0 * m as f64).powi(d as i32 - 1)
}

/// The auxiliary cubes attached to a pair `(I, J)`.
#[derive(Clone, Debug)]
pub struct CompanionCubes {
    /// `<I, J>`.
    pub i3: Cube,
    /// `lambda_1 K~_max`.
    pub i4: Cube,
    /// `lambda_2 K~_max`.
    pub i5: FloatCube,
    /// `lambda_2 K_min`.
    pub i6: FloatCube,
    pub lambda1: Rational,
    pub lambda2: f64,
}

impl CompanionCubes {
    /// `(I, J, I3, I4, I5, I6)` as float cubes.
    pub fn six(&self, i: &Cube, j: &Cube) -> [FloatCube; 6] {
        [
            i.to_float(),
            j.to_float(),
            self.i3.to_float(),
            self.i4.to_float(),
            self.i5.clone(),
            self.i6.clone(),
        ]
    }
}

/// Companion cubes with `lambda_1 = diam / l(K_max)` and
/// `lambda_2 = l(K_min)^-theta diam^theta`.
pub fn companion_cubes(i: &Cube, j: &Cube, theta: f64) -> Result<CompanionCubes> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(LagomError::InvalidParameter(format!("theta = {theta} must lie in (0, 1)")));
    }
    let geo = enclosing_cube(i, j)?;
    let (kmin, kmax) = if j.side() <= i.side() { (j, i) } else { (i, j) };
    let kmax_moved = kmax.with_center(kmin.center.clone())?;
    let lambda1 = geo.diam.ratio(kmax.side());
    let i4 = Cube::new(kmin.center.clone(), geo.diam)?;
    let lambda2 = kmin.side().to_f64().powf(-theta) * geo.diam.to_f64().powf(theta);
    let mut i5 = kmax_moved.to_float();
    i5.side *= lambda2;
    let mut i6 = kmin.to_float();
    i6.side *= lambda2;
    Ok(CompanionCubes {
        i3: geo.enclosing,
        i4,
        i5,
        i6,
        lambda1,
        lambda2,
    })
}

/// Whether the open cube of radius `r` around `p` is covered by the union.
fn ball_covered(p: &[Dyadic], r: Dyadic, cubes: &[Cube]) -> bool {
    let d = p.len();
    let mut breaks: Vec<Vec<Dyadic>> = Vec::with_capacity(d);
    for a in 0..d {
        let (lo, hi) = (p[a] - r, p[a] + r);
        let mut b = vec![lo, hi];
        for c in cubes {
            for v in [c.lower(a), c.upper(a)] {
                if v > lo && v < hi {
                    b.push(v);
                }
            }
        }
        b.sort();
        b.dedup();
        breaks.push(b);
    }
    let lo = vec![0i64; d];
    let hi: Vec<i64> = breaks.iter().map(|b| b.len() as i64 - 2).collect();
    let mut covered = true;
    for_each_corner(d, &lo, &hi, |idx| {
        if !covered {
            return;
        }
        let mid: Vec<Dyadic> = (0..d)
            .map(|a| {
                let k = idx[a] as usize;
                (breaks[a][k] + breaks[a][k + 1]).half()
            })
            .collect();
        if !cubes.iter().any(|c| c.contains_point(&mid)) {
            covered = false;
        }
    });
    covered
}

/// Exact `sup_inf`-distance from `p` to the complement of the union of cubes.
pub fn distance_to_complement(p: &[Dyadic], cubes: &[Cube]) -> Result<Dyadic> {
    for c in cubes {
        if c.dim() != p.len() {
            return Err(LagomError::DimensionMismatch(c.dim(), p.len()));
        }
    }
    if !cubes.iter().any(|c| c.contains_point(p)) {
        return Ok(Dyadic::ZERO);
    }
    let mut cands: Vec<Dyadic> = cubes
        .iter()
        .flat_map(|c| (0..p.len()).flat_map(move |a| [c.lower(a), c.upper(a)].map(|v| (v - p[a]).abs())))
        .filter(|v| !v.is_zero())
        .collect();
    cands.sort();
    cands.dedup();
    // covering is monotone in r: binary search for the last covered radius
    let (mut lo, mut hi) = (0usize, cands.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if ball_covered(p, cands[mid], cubes) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    Ok(if lo == 0 { Dyadic::ZERO } else { cands[lo - 1] })
}

/// `w(E~^C, K) = 1 + dist(E~^C, c(K)) / l(K)` where `E~` is the union of
/// `region`.
pub fn w_weight(region: &[Cube], k: &Cube) -> Result<Rational> {
    let dist = distance_to_complement(k.center(), region)?;
    Ok(Rational::from_integer(1) + dist.ratio(k.side()))
}

pub fn w_weight_f64(region: &[Cube], k: &Cube) -> Result<f64> {
    w_weight(region, k).map(|r| rational_to_f64(&r))
}
