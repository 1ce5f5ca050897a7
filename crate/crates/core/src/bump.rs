//! Bump functions adapted to cubes, their adaptedness constants, and the
//! interaction sweeps between bumps of different scales and positions.
//!
//! A bump is `a * phi((x - c(I)) / l(I))` with `phi` one of two profiles.
//! The amplitude `a` comes from the grid norm of a copy centred at the
//! origin (shifted by whole cells), so translating the cube by whole cells
//! translates the grid samples exactly.

use std::io::Write;

use crate::dyadic::Dyadic;
use crate::error::{LagomError, Result};
use crate::geometry::{Cube, DyadicCube};
use crate::grid::{GridFunction, GridSpec};
use crate::stats::{fit_loglog, LineFit};
use crate::wavelet::haar_wavelet;

/// Highest derivative order with an analytic oracle.
pub const MAX_DERIVATIVE: usize = 2;

/// Shift of the two copies whose difference forms the mean-zero profile.
const MEANZERO_SHIFT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    /// `(1 + |y|_inf^2)^(-N/2)`.
    PolyDecay,
    /// `phi(y + e_0/4) - phi(y - e_0/4)` for the polydecay `phi`; odd in `y_0`.
    MeanZeroPolyDecay,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpProfile {
    pub kind: ProfileKind,
    pub order: u32,
    /// Normalization exponent, `f64::INFINITY` allowed.
    pub p: f64,
}

impl BumpProfile {
    pub fn new(kind: ProfileKind, order: u32, p: f64) -> Result<Self> {
        if order == 0 {
            return Err(LagomError::InvalidParameter("bump order must be at least 1".into()));
        }
        if !(p > 0.0) {
            return Err(LagomError::InvalidParameter(format!("p = {p} must be positive")));
        }
        Ok(BumpProfile { kind, order, p })
    }

    pub fn polydecay(order: u32, p: f64) -> Result<Self> {
        Self::new(ProfileKind::PolyDecay, order, p)
    }

    pub fn meanzero(order: u32, p: f64) -> Result<Self> {
        Self::new(ProfileKind::MeanZeroPolyDecay, order, p)
    }

    pub fn is_mean_zero(&self) -> bool {
        self.kind == ProfileKind::MeanZeroPolyDecay
    }

    /// `g(s) = (1+s^2)^(-N/2)` and its first two derivatives.
    fn radial(&self, s: f64, k: usize) -> f64 {
        let n = self.order as f64;
        let q = 1.0 + s * s;
        match k {
            0 => q.powf(-n / 2.0),
            1 => -n * s * q.powf(-n / 2.0 - 1.0),
            _ => -n * q.powf(-n / 2.0 - 1.0) + n * (n + 2.0) * s * s * q.powf(-n / 2.0 - 2.0),
        }
    }

    /// Derivatives of `g(|y|_inf)`, taken where the maximizing axis is
    /// unique (first axis on ties).
    fn base_derivative(&self, y: &[f64], alpha: &[usize]) -> f64 {
        let (star, s) = y
            .iter()
            .enumerate()
            .fold((0, -1.0), |(ba, bs), (a, v)| if v.abs() > bs { (a, v.abs()) } else { (ba, bs) });
        let total: usize = alpha.iter().sum();
        if alpha.iter().enumerate().any(|(a, &k)| k > 0 && a != star) {
            return 0.0;
        }
        match total {
            0 => self.radial(s, 0),
            1 => self.radial(s, 1) * y[star].signum(),
            _ => self.radial(s, 2),
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.derivative(y, &vec![0; y.len()]).expect("order 0 is always available")
    }

    /// `d^alpha phi (y)` for `|alpha| <= 2`.
    pub fn derivative(&self, y: &[f64], alpha: &[usize]) -> Result<f64> {
        if alpha.len() != y.len() {
            return Err(LagomError::DimensionMismatch(alpha.len(), y.len()));
        }
        if alpha.iter().sum::<usize>() > MAX_DERIVATIVE {
            return Err(LagomError::InvalidParameter(format!(
                "no derivative oracle beyond order {MAX_DERIVATIVE}"
            )));
        }
        Ok(match self.kind {
            ProfileKind::PolyDecay => self.base_derivative(y, alpha),
            ProfileKind::MeanZeroPolyDecay => {
                let mut a = y.to_vec();
                let mut b = y.to_vec();
                a[0] += MEANZERO_SHIFT;
                b[0] -= MEANZERO_SHIFT;
                self.base_derivative(&a, alpha) - self.base_derivative(&b, alpha)
            }
        })
    }
}

/// The analytic function `a * phi((x - c) / l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpShape {
    pub center: Vec<f64>,
    pub side: f64,
    pub amplitude: f64,
    pub profile: BumpProfile,
}

impl BumpShape {
    fn rel(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(x, c)| (x - c) / self.side).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.amplitude * self.profile.eval(&self.rel(x))
    }

    pub fn derivative(&self, x: &[f64], alpha: &[usize]) -> Result<f64> {
        let k: usize = alpha.iter().sum();
        Ok(self.amplitude * self.side.powi(-(k as i32)) * self.profile.derivative(&self.rel(x), alpha)?)
    }

    /// Same amplitude and centre, side multiplied by `factor`.
    pub fn dilated(&self, factor: f64) -> BumpShape {
        BumpShape {
            side: self.side * factor,
            ..self.clone()
        }
    }
}

/// A bump sampled on a grid together with its analytic shape.
#[derive(Clone, Debug)]
pub struct Bump {
    cube: Cube,
    shape: BumpShape,
    grid: GridFunction,
}

impl Bump {
    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn shape(&self) -> &BumpShape {
        &self.shape
    }

    pub fn grid(&self) -> &GridFunction {
        &self.grid
    }

    pub fn profile(&self) -> BumpProfile {
        self.shape.profile
    }
}

/// Unnormalized samples at cell centres. The mean-zero profile is made
/// exactly odd about `c_0`: cells whose mirror image leaves the box are
/// zeroed and mirror pairs get opposite values.
fn sample(center: &[Dyadic], side: Dyadic, profile: &BumpProfile, spec: &GridSpec) -> Result<Vec<f64>> {
    let c: Vec<f64> = center.iter().map(|v| v.to_f64()).collect();
    let l = side.to_f64();
    let n = spec.n();
    let mut out = vec![0.0; spec.cell_count()];
    if !profile.is_mean_zero() {
        for (i, v) in out.iter_mut().enumerate() {
            let y: Vec<f64> = spec.cell_center(i).iter().zip(&c).map(|(x, c)| (x - c) / l).collect();
            *v = profile.eval(&y);
        }
        return Ok(out);
    }
    // mirror of cell coordinate i0 about c_0 is k - i0
    let k2 = (center[0] + Dyadic::pow2(spec.box_exp() as i32)).scale_pow2(spec.res_exp() as i32 + 1);
    if k2.exponent() < 0 {
        return Err(LagomError::UnalignedCube(format!("centre {} off the half-cell lattice", center[0])));
    }
    let k = k2.floor() as i64 - 1;
    for i in 0..spec.cell_count() {
        let i0 = (i % n) as i64;
        let mirror = k - i0;
        if i0 >= mirror || mirror >= n as i64 {
            continue;
        }
        let y: Vec<f64> = spec.cell_center(i).iter().zip(&c).map(|(x, c)| (x - c) / l).collect();
        let v = profile.eval(&y);
        out[i] = v;
        out[(i as i64 + mirror - i0) as usize] = -v;
    }
    Ok(out)
}

fn lp_of(samples: &[f64], p: f64, vol: f64) -> f64 {
    if p.is_infinite() {
        samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        (crate::sum::sum(samples.iter().map(|v| v.abs().powf(p))) * vol).powf(1.0 / p)
    }
}

/// Samples the profile on `cube` and normalizes it in `L^p`.
pub fn make_bump(cube: &Cube, profile: BumpProfile, spec: GridSpec) -> Result<Bump> {
    if cube.dim() != spec.dim() {
        return Err(LagomError::DimensionMismatch(cube.dim(), spec.dim()));
    }
    if !spec.contains(cube) {
        return Err(LagomError::CubeOutsideBox(cube.to_string()));
    }
    let h = Dyadic::pow2(-(spec.res_exp() as i32));
    let ref_center: Vec<Dyadic> = cube
        .center()
        .iter()
        .map(|&c| {
            let cells = Dyadic::from_int(floor_div(c, h));
            c - cells * h
        })
        .collect();
    let reference = Cube::new(ref_center, cube.side())?;
    let base = if spec.contains(&reference) { &reference } else { cube };
    let norm = lp_of(&sample(base.center(), base.side(), &profile, &spec)?, profile.p, spec.cell_volume());
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(LagomError::NonFinite(format!("bump norm {norm} on {cube}")));
    }
    let amplitude = 1.0 / norm;
    let samples = sample(cube.center(), cube.side(), &profile, &spec)?;
    let grid = GridFunction::from_real(spec, samples.into_iter().map(|v| v * amplitude).collect())?;
    let shape = BumpShape {
        center: cube.center().iter().map(|c| c.to_f64()).collect(),
        side: cube.side().to_f64(),
        amplitude,
        profile,
    };
    Ok(Bump {
        cube: cube.clone(),
        shape,
        grid,
    })
}

/// `floor(c / h)` for a power of two `h`.
fn floor_div(c: Dyadic, h: Dyadic) -> i64 {
    c.scale_pow2(-h.exponent()).floor() as i64
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptednessReport {
    /// Smallest constant satisfying the adaptedness inequality on the
    /// sampled points and derivatives.
    pub constant: f64,
    pub points: usize,
    pub argmax: Vec<f64>,
    pub alpha: Vec<usize>,
}

/// Relative sample offsets `(x - c(I)) / l(I)` along each axis.
const OFFSETS: [f64; 29] = [
    -16.0, -12.0, -8.0, -6.0, -4.0, -3.0, -2.0, -1.5, -1.0, -0.75, -0.5, -0.375, -0.25, -0.125, 0.0,
    0.125, 0.25, 0.375, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0,
];

fn multi_indices(d: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; d]];
    for a in 0..d {
        let mut e = vec![0; d];
        e[a] = 1;
        if max >= 1 {
            out.push(e.clone());
        }
        if max >= 2 {
            for b in a..d {
                let mut f = e.clone();
                f[b] += 1;
                out.push(f);
            }
        }
    }
    out
}

/// `max |d^alpha f(x)| |I|^(1/p) l(I)^|alpha| (1 + |x - c(I)|_inf / l(I))^N`
/// over a fixed relative sample set and `|alpha| <= n_check`.
pub fn adaptedness_constant(
    shape: &BumpShape,
    cube: &Cube,
    p: f64,
    order: u32,
    n_check: usize,
) -> Result<AdaptednessReport> {
    if n_check > MAX_DERIVATIVE {
        return Err(LagomError::InvalidParameter(format!(
            "no derivative oracle beyond order {MAX_DERIVATIVE}"
        )));
    }
    let d = cube.dim();
    let l = cube.side().to_f64();
    let c: Vec<f64> = cube.center().iter().map(|v| v.to_f64()).collect();
    let vol_p = if p.is_infinite() { 1.0 } else { cube.volume().to_f64().powf(1.0 / p) };
    let alphas = multi_indices(d, n_check);
    let mut best = AdaptednessReport {
        constant: 0.0,
        points: 0,
        argmax: c.clone(),
        alpha: vec![0; d],
    };
    let mut idx = vec![0usize; d];
    loop {
        let y: Vec<f64> = idx.iter().map(|&i| OFFSETS[i]).collect();
        let x: Vec<f64> = y.iter().zip(&c).map(|(y, c)| c + l * y).collect();
        let weight = (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()))).powi(order as i32);
        for alpha in &alphas {
            let k: usize = alpha.iter().sum();
            let v = shape.derivative(&x, alpha)?.abs() * vol_p * l.powi(k as i32) * weight;
            if !v.is_finite() {
                return Err(LagomError::NonFinite(format!("derivative at {x:?}")));
            }
            if v > best.constant {
                best.constant = v;
                best.argmax = x.clone();
                best.alpha = alpha.clone();
            }
        }
        best.points += 1;
        let mut a = 0;
        loop {
            if a == d {
                return Ok(best);
            }
            idx[a] += 1;
            if idx[a] < OFFSETS.len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

fn adapted_constant(b: &Bump) -> Result<f64> {
    let prof = b.profile();
    Ok(adaptedness_constant(&b.shape, &b.cube, prof.p, prof.order, MAX_DERIVATIVE)?.constant)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

fn center_gap(a: &Cube, b: &Cube) -> f64 {
    (0..a.dim()).fold(Dyadic::ZERO, |m, i| m.max((a.center()[i] - b.center()[i]).abs())).to_f64()
}

/// `|<phi_I, psi_J>|` against
/// `C_I C_J (|J|/|I|)^(1/2) (1 + |c(I)-c(J)|/l(I))^-N`, or with exponents
/// `1/2 + 1/d` and `-N + d` when `psi_J` has mean zero.
pub fn check_interaction_bound(phi_i: &Bump, psi_j: &Bump, mean_zero: bool) -> Result<BoundCheck> {
    let (ci, cj) = (&phi_i.cube, &psi_j.cube);
    if cj.side() > ci.side() {
        return Err(LagomError::SizeOrdering(format!("l({cj}) > l({ci})")));
    }
    if mean_zero {
        let g = psi_j.grid();
        let mean = g.integral().norm();
        if mean >= 1e-10 * g.l1() {
            return Err(LagomError::AtomViolation(format!("integral {mean:e} is not zero")));
        }
    }
    let d = ci.dim() as f64;
    let lhs = phi_i.grid.inner_product(&psi_j.grid)?.norm();
    let c2 = adapted_constant(phi_i)? * adapted_constant(psi_j)?;
    let ecc = cj.volume().ratio(ci.volume());
    let ecc = *ecc.numer() as f64 / *ecc.denom() as f64;
    let n = phi_i.profile().order as f64;
    let (pe, de) = if mean_zero { (0.5 + 1.0 / d, -n + d) } else { (0.5, -n) };
    let sep = 1.0 + center_gap(ci, cj) / ci.side().to_f64();
    let rhs = c2 * ecc.powf(pe) * sep.powf(de);
    Ok(BoundCheck { lhs, rhs, ratio: lhs / rhs })
}

/// `|<f, phi_J>| |J|^(1/2)` against `C ||f||_1 (1 + gap/l(I))^-N` when
/// `l(J) <= l(I)`, else `C ||f||_1 (l(I)/l(J)) (1 + gap/l(J))^-N`, for `f`
/// supported in `support` with mean zero.
pub fn check_atom_bound(f: &GridFunction, support: &Cube, phi_j: &Bump) -> Result<BoundCheck> {
    let spec = f.spec();
    let inside = spec.cells_of(support)?;
    let mut mask = vec![false; spec.cell_count()];
    inside.iter().for_each(|&i| mask[i] = true);
    if f.values().iter().zip(&mask).any(|(v, &m)| !m && v.norm() != 0.0) {
        return Err(LagomError::AtomViolation(format!("support leaves {support}")));
    }
    let l1 = f.l1();
    if f.integral().norm() >= 1e-10 * l1 {
        return Err(LagomError::AtomViolation("mean is not zero".into()));
    }
    let cj = &phi_j.cube;
    let lhs = f.inner_product(&phi_j.grid)?.norm() * cj.volume().to_f64().sqrt();
    let c = adapted_constant(phi_j)?;
    let n = phi_j.profile().order as i32;
    let gap = center_gap(support, cj);
    let (li, lj) = (support.side().to_f64(), cj.side().to_f64());
    let rhs = if lj <= li {
        c * l1 * (1.0 + gap / li).powi(-n)
    } else {
        c * l1 * (li / lj) * (1.0 + gap / lj).powi(-n)
    };
    Ok(BoundCheck { lhs, rhs, ratio: lhs / rhs })
}

/// One line of a sweep CSV `lemma,d,k,m,e,lhs,rhs,ratio`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lemma: &'static str,
    pub d: usize,
    pub k: i32,
    pub m: u32,
    pub e: i32,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

pub const INTERACTION_ECC: &str = "interaction-ecc";
pub const INTERACTION_MZ_ECC: &str = "interaction-meanzero-ecc";
pub const INTERACTION_SEP: &str = "interaction-sep";
pub const INTERACTION_MZ_SEP: &str = "interaction-meanzero-sep";
pub const ATOM_NEAR: &str = "atom-near";
pub const ATOM_COARSE: &str = "atom-coarse";

/// Bump order used by the sweeps. The mean-zero moment argument needs the
/// first moment of `psi_J` to converge absolutely, i.e. `N > d + 1`.
pub const DEFAULT_SWEEP_ORDER: u32 = 4;

/// Largest `k` in the eccentricity sweeps (`ecc = 2^-2k`).
pub const SWEEP_K: i32 = 5;
/// Largest separation in the distance sweeps.
pub const SWEEP_M: u32 = 16;

fn check_sweep_dim(d: usize) -> Result<()> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(LagomError::UnsupportedDimension(d))
    }
}

fn cube(j: i32, corner: Vec<i64>) -> Cube {
    DyadicCube::new(j, corner).to_cube()
}

/// Bump interaction sweeps against `phi_I` on `I = [0,1)^d`.
///
/// Eccentricity `2^-2k`: `J` sits within `l(J)/2` of the point
/// `c(I) + e_0/sqrt(N+1)` where `|d_0 phi_I|` peaks, so the position drift
/// between scales is second order. Separation `m`: `l(J) = l(I)/2` and
/// `J = [m, m + 1/2) x [0, 1/2)^(d-1)`. Each is run with a polydecay and a
/// mean-zero `psi_J`.
pub fn sweep_interaction(d: usize, order: u32) -> Result<Vec<SweepRow>> {
    check_sweep_dim(d)?;
    let phi = BumpProfile::polydecay(order, 2.0)?;
    let mz = BumpProfile::meanzero(order, 2.0)?;
    let mut rows = Vec::new();
    let unit = cube(0, vec![0; d]);

    let finest = 2 * SWEEP_K / d as i32;
    let spec = GridSpec::new(d, 1, finest as u32 + 2)?;
    let phi_i = make_bump(&unit, phi, spec)?;
    for k in 1..=SWEEP_K {
        let scale = -2 * k / d as i32;
        let peak = 0.5 + 1.0 / (order as f64 + 1.0).sqrt();
        let mut corner = vec![1i64 << (-scale - 1); d];
        corner[0] = (peak * 2f64.powi(-scale)).floor() as i64;
        let j = cube(scale, corner);
        for (label, prof, mean_zero) in [(INTERACTION_ECC, phi, false), (INTERACTION_MZ_ECC, mz, true)] {
            let b = check_interaction_bound(&phi_i, &make_bump(&j, prof, spec)?, mean_zero)?;
            rows.push(SweepRow { lemma: label, d, k, m: 0, e: 0, lhs: b.lhs, rhs: b.rhs, ratio: b.ratio });
        }
    }

    let spec = GridSpec::new(d, 5, 3)?;
    let phi_i = make_bump(&unit, phi, spec)?;
    for m in 1..=SWEEP_M {
        let mut corner = vec![0; d];
        corner[0] = 2 * m as i64;
        let j = cube(-1, corner);
        for (label, prof, mean_zero) in [(INTERACTION_SEP, phi, false), (INTERACTION_MZ_SEP, mz, true)] {
            let b = check_interaction_bound(&phi_i, &make_bump(&j, prof, spec)?, mean_zero)?;
            rows.push(SweepRow { lemma: label, d, k: 1, m, e: 0, lhs: b.lhs, rhs: b.rhs, ratio: b.ratio });
        }
    }
    Ok(rows)
}

/// L1-normalized Haar atom on a dyadic cube.
fn haar_atom(c: &DyadicCube, spec: GridSpec) -> Result<GridFunction> {
    let h = haar_wavelet(c, 1, spec)?;
    let l1 = h.l1();
    Ok(h.scale(num_complex::Complex64::new(1.0 / l1, 0.0)))
}

/// Atom sweeps with `f` an L1-normalized Haar atom: `J = I + m e_0` for
/// `m = 0..=16` (`l(J) = l(I)`), and `I = [0, 2^-e)^d` in the corner of
/// `J = [0,1)^d` for `e = 0..=5`.
pub fn sweep_atom(d: usize, order: u32) -> Result<Vec<SweepRow>> {
    check_sweep_dim(d)?;
    let phi = BumpProfile::polydecay(order, 2.0)?;
    let mut rows = Vec::new();
    let unit_d = DyadicCube::new(0, vec![0; d]);

    let spec = GridSpec::new(d, 5, 3)?;
    let f = haar_atom(&unit_d, spec)?;
    for m in 0..=SWEEP_M {
        let mut corner = vec![0; d];
        corner[0] = m as i64;
        let b = check_atom_bound(&f, &unit_d.to_cube(), &make_bump(&cube(0, corner), phi, spec)?)?;
        rows.push(SweepRow { lemma: ATOM_NEAR, d, k: 0, m, e: 0, lhs: b.lhs, rhs: b.rhs, ratio: b.ratio });
    }

    let spec = GridSpec::new(d, 1, SWEEP_K as u32 + 2)?;
    let phi_j = make_bump(&unit_d.to_cube(), phi, spec)?;
    for e in 0..=SWEEP_K {
        let i = DyadicCube::new(-e, vec![0; d]);
        let b = check_atom_bound(&haar_atom(&i, spec)?, &i.to_cube(), &phi_j)?;
        rows.push(SweepRow { lemma: ATOM_COARSE, d, k: 0, m: 0, e, lhs: b.lhs, rhs: b.rhs, ratio: b.ratio });
    }
    Ok(rows)
}

/// Log-log fit of `lhs` against the swept quantity of a family: `ecc` for
/// the eccentricity families, `m` for separations, `2^e` for coarse atoms.
pub fn sweep_slope(rows: &[SweepRow], lemma: &str) -> Result<LineFit> {
    let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.lemma == lemma && r.lhs > 0.0).collect();
    let xs: Vec<f64> = sel
        .iter()
        .map(|r| match r.lemma {
            INTERACTION_ECC | INTERACTION_MZ_ECC => 2f64.powi(-2 * r.k),
            ATOM_COARSE => 2f64.powi(r.e),
            _ => r.m as f64,
        })
        .collect();
    let ys: Vec<f64> = sel.iter().map(|r| r.lhs).collect();
    fit_loglog(&xs, &ys)
}

pub fn write_sweep_csv(rows: &[SweepRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "lemma,d,k,m,e,lhs,rhs,ratio")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{:e},{:e},{:e}", r.lemma, r.d, r.k, r.m, r.e, r.lhs, r.rhs, r.ratio)?;
    }
    Ok(())
}
