//! Tensor Haar analysis on a grid, the lagom projections `P_M`,
//! `P_M^perp` and the CMO tail-energy defect.
//!
//! Coefficients live at scales `j = -R+1 ..= B`: every dyadic cube of side
//! `2^j` inside the box carries `2^d - 1` wavelets, type `i` having a sign
//! change along axis `a` iff bit `a` of `i` is set. The `2^d` orthant cubes
//! of side `2^B` additionally carry scaling coefficients. These are not in
//! any `D_M` and so belong to the complement projection.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::dyadic::Dyadic;
use crate::error::{LagomError, Result};
use crate::geometry::{is_lagom, lagom_extent, Cube, DyadicCube};
use crate::grid::{GridFunction, GridSpec};

trait Field: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

fn pow_usize(base: usize, e: usize) -> usize {
    base.pow(e as u32)
}

/// One scale of a transform: per coarse cube, `2^d - 1` detail slots.
fn level_cubes(spec: &GridSpec, j: i32) -> usize {
    pow_usize(1usize << (spec.box_exp() as i32 - j + 1), spec.dim())
}

fn coarse_to_fine_offsets(d: usize, m: usize) -> Vec<usize> {
    (0..1usize << d)
        .map(|mask| (0..d).filter(|a| mask >> a & 1 == 1).map(|a| pow_usize(m, a)).sum())
        .collect()
}

fn coarse_base(ci: usize, d: usize, half: usize, m: usize) -> usize {
    let mut rest = ci;
    let mut base = 0;
    for a in 0..d {
        base += 2 * (rest % half) * pow_usize(m, a);
        rest /= half;
    }
    base
}

/// `(lo + hi)/sqrt 2, (lo - hi)/sqrt 2` along every axis of a `2^d` block.
#[inline]
fn butterfly<T: Field>(v: &mut [T], d: usize) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..d {
        let bit = 1 << a;
        for mask in 0..v.len() {
            if mask & bit == 0 {
                let (lo, hi) = (v[mask], v[mask | bit]);
                v[mask] = (lo + hi) * s;
                v[mask | bit] = (lo - hi) * s;
            }
        }
    }
}

fn forward<T: Field>(spec: &GridSpec, values: &[T]) -> (Vec<Vec<T>>, Vec<T>) {
    let d = spec.dim();
    let k = (1usize << d) - 1;
    let norm = spec.cell_volume().sqrt();
    let mut s: Vec<T> = values.iter().map(|&v| v * norm).collect();
    let mut m = spec.n();
    let mut levels = Vec::with_capacity((spec.box_exp() + spec.res_exp()) as usize);
    let mut block = vec![T::zero(); 1 << d];
    while m > 2 {
        let half = m / 2;
        let offs = coarse_to_fine_offsets(d, m);
        let count = pow_usize(half, d);
        let mut coarse = vec![T::zero(); count];
        let mut det = vec![T::zero(); count * k];
        for ci in 0..count {
            let base = coarse_base(ci, d, half, m);
            for (mask, off) in offs.iter().enumerate() {
                block[mask] = s[base + off];
            }
            butterfly(&mut block, d);
            coarse[ci] = block[0];
            det[ci * k..(ci + 1) * k].copy_from_slice(&block[1..]);
        }
        levels.push(det);
        s = coarse;
        m = half;
    }
    (levels, s)
}

fn inverse<T: Field>(spec: &GridSpec, levels: &[Vec<T>], scaling: &[T]) -> Vec<T> {
    let d = spec.dim();
    let k = (1usize << d) - 1;
    let mut s = scaling.to_vec();
    let mut half = 2;
    let mut block = vec![T::zero(); 1 << d];
    for det in levels.iter().rev() {
        let m = half * 2;
        let offs = coarse_to_fine_offsets(d, m);
        let mut fine = vec![T::zero(); pow_usize(m, d)];
        for (ci, &c) in s.iter().enumerate() {
            block[0] = c;
            block[1..].copy_from_slice(&det[ci * k..(ci + 1) * k]);
            butterfly(&mut block, d);
            let base = coarse_base(ci, d, half, m);
            for (mask, off) in offs.iter().enumerate() {
                fine[base + off] = block[mask];
            }
        }
        s = fine;
        half = m;
    }
    let norm = 1.0 / spec.cell_volume().sqrt();
    s.into_iter().map(|v| v * norm).collect()
}

/// Haar coefficients of a grid function: detail coefficients per scale plus
/// the box-level scaling coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoefficients {
    spec: GridSpec,
    /// `levels[l]` holds scale `j = l - R + 1`.
    levels: Vec<Vec<Complex64>>,
    scaling: Vec<Complex64>,
}

impl HaarCoefficients {
    pub fn zeros(spec: GridSpec) -> Self {
        let k = (1usize << spec.dim()) - 1;
        let lo = -(spec.res_exp() as i32) + 1;
        let levels = (lo..=spec.box_exp() as i32)
            .map(|j| vec![Complex64::new(0.0, 0.0); level_cubes(&spec, j) * k])
            .collect();
        HaarCoefficients {
            spec,
            levels,
            scaling: vec![Complex64::new(0.0, 0.0); 1 << spec.dim()],
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn min_scale(&self) -> i32 {
        -(self.spec.res_exp() as i32) + 1
    }

    pub fn max_scale(&self) -> i32 {
        self.spec.box_exp() as i32
    }

    fn types(&self) -> usize {
        (1 << self.spec.dim()) - 1
    }

    /// Position of a cube at its level: `(level, cube index)`.
    fn slot(&self, cube: &DyadicCube) -> Result<(usize, usize)> {
        if cube.dim() != self.spec.dim() {
            return Err(LagomError::DimensionMismatch(cube.dim(), self.spec.dim()));
        }
        let j = cube.scale();
        if j < self.min_scale() || j > self.max_scale() {
            return Err(LagomError::CubeOutsideBox(cube.to_string()));
        }
        let per_axis = 1i64 << (self.max_scale() - j + 1);
        let off = per_axis / 2;
        let mut idx = 0usize;
        for &k in cube.corner().iter().rev() {
            let c = k + off;
            if !(0..per_axis).contains(&c) {
                return Err(LagomError::CubeOutsideBox(cube.to_string()));
            }
            idx = idx * per_axis as usize + c as usize;
        }
        Ok(((j - self.min_scale()) as usize, idx))
    }

    fn cube_at(&self, level: usize, idx: usize) -> DyadicCube {
        let j = level as i32 + self.min_scale();
        cube_at_scale(&self.spec, j, idx)
    }

    fn check_type(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.types() {
            return Err(LagomError::InvalidParameter(format!(
                "wavelet type {i} outside 1..={}",
                self.types()
            )));
        }
        Ok(())
    }

    /// `<f, psi_I^i>`.
    pub fn get(&self, cube: &DyadicCube, i: usize) -> Result<Complex64> {
        self.check_type(i)?;
        let (l, idx) = self.slot(cube)?;
        Ok(self.levels[l][idx * self.types() + i - 1])
    }

    pub fn set(&mut self, cube: &DyadicCube, i: usize, v: Complex64) -> Result<()> {
        self.check_type(i)?;
        let (l, idx) = self.slot(cube)?;
        let k = self.types();
        self.levels[l][idx * k + i - 1] = v;
        Ok(())
    }

    /// Scaling coefficients of the orthant cubes, indexed by orthant bitmask
    /// (bit `a` set for the positive half along axis `a`).
    pub fn scaling(&self) -> &[Complex64] {
        &self.scaling
    }

    pub fn scaling_mut(&mut self) -> &mut [Complex64] {
        &mut self.scaling
    }

    /// Nonzero wavelet entries `(cube, type, value)` sorted by scale, corner
    /// and type.
    pub fn entries(&self) -> Vec<(DyadicCube, usize, Complex64)> {
        let k = self.types();
        let mut out = Vec::new();
        for (l, lev) in self.levels.iter().enumerate() {
            for (pos, v) in lev.iter().enumerate() {
                if *v != Complex64::new(0.0, 0.0) {
                    out.push((self.cube_at(l, pos / k), pos % k + 1, *v));
                }
            }
        }
        out.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        out
    }

    /// `sum |<f, psi>|^2 + sum |scaling|^2`.
    pub fn energy(&self) -> f64 {
        let mut acc = crate::sum::NeumaierSum::new();
        self.levels.iter().flatten().chain(&self.scaling).for_each(|v| acc.add(v.norm_sqr()));
        acc.value()
    }

    /// Keep only wavelets on cubes with `keep(cube)`; scaling coefficients
    /// survive iff `keep_scaling`.
    pub fn filtered(&self, keep: impl Fn(&DyadicCube) -> bool, keep_scaling: bool) -> Self {
        let k = self.types();
        let mut out = self.clone();
        for (l, lev) in out.levels.iter_mut().enumerate() {
            for (idx, chunk) in lev.chunks_mut(k).enumerate() {
                if chunk.iter().any(|v| v.norm_sqr() > 0.0) && !keep(&self.cube_at(l, idx)) {
                    chunk.fill(Complex64::new(0.0, 0.0));
                }
            }
        }
        if !keep_scaling {
            out.scaling.fill(Complex64::new(0.0, 0.0));
        }
        out
    }

    /// CSV rows `j,k1..kd,i,re,im`, nonzero entries only, sorted. Scaling
    /// coefficients use type `0` at scale `B`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let d = self.spec.dim();
        let ks: Vec<String> = (1..=d).map(|a| format!("k{a}")).collect();
        writeln!(w, "j,{},i,re,im", ks.join(","))?;
        let mut rows: Vec<(DyadicCube, usize, Complex64)> = self.entries();
        for (mask, v) in self.scaling.iter().enumerate() {
            if *v != Complex64::new(0.0, 0.0) {
                rows.push((orthant_cube(&self.spec, mask), 0, *v));
            }
        }
        rows.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        for (c, i, v) in rows {
            let k: Vec<String> = c.corner().iter().map(|k| k.to_string()).collect();
            writeln!(w, "{},{},{},{:e},{:e}", c.scale(), k.join(","), i, v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_csv(spec: GridSpec, r: impl Read) -> Result<Self> {
        let mut text = String::new();
        { r }.read_to_string(&mut text)?;
        let d = spec.dim();
        let mut out = HaarCoefficients::zeros(spec);
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || LagomError::Parse(format!("line {}: `{line}`", ln + 1));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != d + 4 {
                return Err(bad());
            }
            let j: i32 = f[0].parse().map_err(|_| bad())?;
            let corner: Vec<i64> = f[1..=d].iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
            let i: usize = f[d + 1].parse().map_err(|_| bad())?;
            let v = Complex64::new(
                f[d + 2].parse().map_err(|_| bad())?,
                f[d + 3].parse().map_err(|_| bad())?,
            );
            let cube = DyadicCube::new(j, corner);
            if i == 0 {
                let mask = (0..1usize << d)
                    .find(|&m| orthant_cube(&spec, m) == cube)
                    .ok_or_else(|| LagomError::CubeOutsideBox(cube.to_string()))?;
                out.scaling[mask] = v;
            } else {
                out.set(&cube, i, v)?;
            }
        }
        Ok(out)
    }
}

fn cube_at_scale(spec: &GridSpec, j: i32, mut idx: usize) -> DyadicCube {
    let per_axis = 1usize << (spec.box_exp() as i32 - j + 1);
    let off = (per_axis / 2) as i64;
    let corner = (0..spec.dim())
        .map(|_| {
            let c = idx % per_axis;
            idx /= per_axis;
            c as i64 - off
        })
        .collect();
    DyadicCube::new(j, corner)
}

/// Orthant cube of side `2^B`; bit `a` of `mask` picks the positive half.
pub fn orthant_cube(spec: &GridSpec, mask: usize) -> DyadicCube {
    DyadicCube::new(
        spec.box_exp() as i32,
        (0..spec.dim()).map(|a| (mask >> a & 1) as i64 - 1).collect(),
    )
}

pub fn analyze(f: &GridFunction) -> HaarCoefficients {
    let spec = f.spec();
    let (levels, scaling) = forward(&spec, f.values());
    HaarCoefficients { spec, levels, scaling }
}

pub fn synthesize(c: &HaarCoefficients) -> GridFunction {
    let values = inverse(&c.spec, &c.levels, &c.scaling);
    GridFunction::from_values(c.spec, values).expect("finite coefficients give finite values")
}

/// `psi_I^i` built cell by cell, independently of the fast transform.
pub fn haar_wavelet(cube: &DyadicCube, i: usize, spec: GridSpec) -> Result<GridFunction> {
    let d = spec.dim();
    if i == 0 || i >= 1 << d {
        return Err(LagomError::InvalidParameter(format!("wavelet type {i}")));
    }
    if cube.scale() <= -(spec.res_exp() as i32) || !spec.contains(&cube.to_cube()) {
        return Err(LagomError::CubeOutsideBox(cube.to_string()));
    }
    let amp = cube.volume().to_f64().sqrt().recip();
    let mut g = GridFunction::zeros(spec);
    let cells = spec.cells_of(&cube.to_cube())?;
    let mid: Vec<Dyadic> = cube.center();
    for idx in cells {
        let cell = spec.cell_cube(idx);
        let mut sign = 1.0;
        for (a, m) in mid.iter().enumerate() {
            if i >> a & 1 == 1 && cell.lower(a) >= *m {
                sign = -sign;
            }
        }
        g.values_mut()[idx] = Complex64::new(sign * amp, 0.0);
    }
    Ok(g)
}

/// `P_M` and `P_M^perp` on a fixed grid, with the `D_M` membership of every
/// grid cube precomputed.
#[derive(Clone, Debug)]
pub struct LagomProjector {
    spec: GridSpec,
    m: u32,
    /// `keep[l][cube]`: whether the cube at level `l` is in `D_M`.
    keep: Vec<Vec<bool>>,
}

impl LagomProjector {
    /// Requires `B >= M`: then every member of `D_M` lies either inside the
    /// box or outside it, so truncation to the box commutes with `P_M`.
    pub fn new(spec: GridSpec, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(LagomError::InvalidParameter("M must be at least 1".into()));
        }
        if spec.box_exp() < m {
            return Err(LagomError::BoxTooSmall(format!("B = {} < M = {m}", spec.box_exp())));
        }
        let d = spec.dim();
        let lo = -(spec.res_exp() as i32) + 1;
        let extent = lagom_extent(m);
        let mut keep = Vec::new();
        for j in lo..=spec.box_exp() as i32 {
            let count = level_cubes(&spec, j);
            let mut mask = vec![false; count];
            if j.abs() <= m as i32 {
                let side = Dyadic::pow2(j);
                for (idx, slot) in mask.iter_mut().enumerate() {
                    let cube = cube_at_scale(&spec, j, idx);
                    let inside = (0..d).all(|a| cube.lower(a) >= -extent && cube.lower(a) + side <= extent);
                    *slot = inside && is_lagom(&cube.to_cube(), m);
                }
            }
            keep.push(mask);
        }
        Ok(LagomProjector { spec, m, keep })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Number of grid cubes in `D_M`.
    pub fn lagom_cube_count(&self) -> usize {
        self.keep.iter().flatten().filter(|&&k| k).count()
    }

    fn zero_where<T: Field>(&self, levels: &mut [Vec<T>], scaling: &mut [T], keep_lagom: bool) {
        let k = (1usize << self.spec.dim()) - 1;
        for (lev, mask) in levels.iter_mut().zip(&self.keep) {
            for (chunk, &lagom) in lev.chunks_mut(k).zip(mask) {
                if lagom != keep_lagom {
                    chunk.fill(T::zero());
                }
            }
        }
        if keep_lagom {
            scaling.fill(T::zero());
        }
    }

    fn apply<T: Field>(&self, values: &[T], keep_lagom: bool) -> Vec<T> {
        let (mut levels, mut scaling) = forward(&self.spec, values);
        self.zero_where(&mut levels, &mut scaling, keep_lagom);
        inverse(&self.spec, &levels, &scaling)
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.spec() != self.spec {
            return Err(LagomError::SpecMismatch);
        }
        Ok(())
    }

    pub fn project(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check(f)?;
        GridFunction::from_values(self.spec, self.apply(f.values(), true))
    }

    /// `f - P_M f`, computed from the complementary coefficients.
    pub fn complement(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check(f)?;
        GridFunction::from_values(self.spec, self.apply(f.values(), false))
    }

    pub fn project_real(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.spec.cell_count(), "length must match the grid");
        self.apply(v, true)
    }

    pub fn complement_real(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.spec.cell_count(), "length must match the grid");
        self.apply(v, false)
    }

    pub fn is_lagom_cube(&self, cube: &DyadicCube) -> bool {
        let c = HaarCoefficients::zeros(self.spec);
        match c.slot(cube) {
            Ok((l, idx)) => self.keep[l][idx],
            Err(_) => false,
        }
    }

    /// Coefficient-domain projection.
    pub fn project_coefficients(&self, c: &HaarCoefficients, complement: bool) -> Result<HaarCoefficients> {
        if c.spec != self.spec {
            return Err(LagomError::SpecMismatch);
        }
        let mut out = c.clone();
        self.zero_where(&mut out.levels, &mut out.scaling, !complement);
        Ok(out)
    }
}

pub fn project_lagom(f: &GridFunction, m: u32) -> Result<GridFunction> {
    LagomProjector::new(f.spec(), m)?.project(f)
}

pub fn project_lagom_complement(f: &GridFunction, m: u32) -> Result<GridFunction> {
    LagomProjector::new(f.spec(), m)?.complement(f)
}

/// `max_Omega (|Omega|^-1 sum_{I not in D_M, I in Omega} sum_i |<f,psi_I^i>|^2)^(1/2)`.
///
/// With `family = None` the maximum runs over every dyadic cube of the grid
/// (cells up to orthants), using a bottom-up energy pyramid.
pub fn cmo_defect(c: &HaarCoefficients, m: u32, family: Option<&[Cube]>) -> Result<f64> {
    let proj = LagomProjector::new(c.spec, m)?;
    let tail = proj.project_coefficients(c, true)?;
    let k = tail.types();
    let d = c.spec.dim();
    match family {
        Some([]) => Err(LagomError::EmptyFamily),
        Some(fam) => {
            let entries = tail.entries();
            let mut best: f64 = 0.0;
            for omega in fam {
                let e: f64 = crate::sum::sum(
                    entries
                        .iter()
                        .filter(|(cube, _, _)| omega.contains_cube(&cube.to_cube()))
                        .map(|(_, _, v)| v.norm_sqr()),
                );
                best = best.max((e / omega.volume().to_f64()).sqrt());
            }
            Ok(best)
        }
        None => {
            // cells carry no wavelets; start from level 0 with zero children
            let mut best: f64 = 0.0;
            let mut child: Option<Vec<f64>> = None;
            for (l, lev) in tail.levels.iter().enumerate() {
                let j = l as i32 + tail.min_scale();
                let count = lev.len() / k;
                let per_axis = 1usize << (c.spec.box_exp() as i32 - j + 1);
                let mut energy = vec![0.0; count];
                for (idx, e) in energy.iter_mut().enumerate() {
                    let mut acc = crate::sum::NeumaierSum::new();
                    lev[idx * k..(idx + 1) * k].iter().for_each(|v| acc.add(v.norm_sqr()));
                    if let Some(ch) = &child {
                        let fine = per_axis * 2;
                        let base = coarse_base(idx, d, per_axis, fine);
                        for off in coarse_to_fine_offsets(d, fine) {
                            acc.add(ch[base + off]);
                        }
                    }
                    *e = acc.value();
                }
                let vol = 2f64.powi(j * d as i32);
                for &e in &energy {
                    best = best.max((e / vol).sqrt());
                }
                child = Some(energy);
            }
            Ok(best)
        }
    }
}

/// Sparse view keyed by cube and type.
pub fn coefficient_map(c: &HaarCoefficients) -> BTreeMap<(DyadicCube, usize), Complex64> {
    c.entries().into_iter().map(|(cube, i, v)| ((cube, i), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::enumerate_lagom_dyadic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random(spec: GridSpec, rng: &mut ChaCha8Rng) -> GridFunction {
        let v = (0..spec.cell_count())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        GridFunction::from_values(spec, v).unwrap()
    }

    fn max_diff(a: &GridFunction, b: &GridFunction) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn haar_on_unit_interval_is_a_single_coefficient() {
        let spec = GridSpec::new(1, 2, 3).unwrap();
        let unit = DyadicCube::unit(1);
        let psi = haar_wavelet(&unit, 1, spec).unwrap();
        let coeffs = analyze(&psi);
        let e = coeffs.entries();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].0, unit);
        assert!((e[0].2 - c(1.0)).norm() < 1e-15);
        assert!(coeffs.scaling().iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn indicator_coefficients_on_growing_intervals() {
        let spec = GridSpec::new(1, 5, 2).unwrap();
        let f = GridFunction::indicator(&DyadicCube::unit(1).to_cube(), spec).unwrap();
        let coeffs = analyze(&f);
        for k in 1..=5 {
            let i = DyadicCube::new(k, vec![0]);
            let v = coeffs.get(&i, 1).unwrap();
            assert!((v.re - 2f64.powf(-k as f64 / 2.0)).abs() < 1e-15, "k={k}");
        }
        // cubes strictly containing [0,1) that are not of the form [0, 2^k)
        // do not exist on the dyadic lattice; neighbours get nothing
        assert_eq!(coeffs.get(&DyadicCube::new(1, vec![-1]), 1).unwrap(), c(0.0));
        assert!(coeffs.get(&DyadicCube::unit(1), 1).unwrap().norm() < 1e-15);
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (d, b, r) in [(1, 2, 3), (2, 1, 2), (3, 0, 1)] {
            let spec = GridSpec::new(d, b, r).unwrap();
            for _ in 0..10 {
                let f = random(spec, &mut rng);
                let co = analyze(&f);
                assert!(max_diff(&synthesize(&co), &f) < 1e-12);
                let n2 = f.l2().powi(2);
                assert!((co.energy() - n2).abs() <= 1e-10 * n2);
                assert_eq!(analyze(&synthesize(&co)).entries().len(), co.entries().len());
            }
        }
        let spec = GridSpec::new(1, 1, 1).unwrap();
        assert_eq!(synthesize(&HaarCoefficients::zeros(spec)), GridFunction::zeros(spec));
    }

    #[test]
    fn fast_synthesis_matches_direct_wavelets() {
        let spec = GridSpec::new(2, 1, 2).unwrap();
        let mut co = HaarCoefficients::zeros(spec);
        let cube = DyadicCube::new(-1, vec![1, -2]);
        for i in 1..4 {
            co.set(&cube, i, c(1.0)).unwrap();
            let fast = synthesize(&co);
            co.set(&cube, i, c(0.0)).unwrap();
            let direct = haar_wavelet(&cube, i, spec).unwrap();
            assert!(max_diff(&fast, &direct) < 1e-14);
            assert!((direct.l2() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn out_of_range_slots_are_rejected() {
        let spec = GridSpec::new(1, 1, 1).unwrap();
        let mut co = HaarCoefficients::zeros(spec);
        assert!(co.set(&DyadicCube::new(-1, vec![0]), 1, c(1.0)).is_err());
        assert!(co.set(&DyadicCube::new(2, vec![0]), 1, c(1.0)).is_err());
        assert!(co.set(&DyadicCube::new(0, vec![2]), 1, c(1.0)).is_err());
        assert!(co.set(&DyadicCube::new(0, vec![1]), 2, c(1.0)).is_err());
        assert!(co.set(&DyadicCube::new(0, vec![1]), 1, c(1.0)).is_ok());
    }

    #[test]
    fn projector_masks_match_enumeration() {
        for (d, b, r) in [(1, 4, 4), (2, 3, 3)] {
            let spec = GridSpec::new(d, b, r).unwrap();
            for m in 1..=3 {
                let p = LagomProjector::new(spec, m).unwrap();
                let expected: Vec<DyadicCube> = enumerate_lagom_dyadic(m, d)
                    .unwrap()
                    .into_iter()
                    .filter(|q| q.scale() > -(r as i32) && spec.contains(&q.to_cube()))
                    .collect();
                assert_eq!(p.lagom_cube_count(), expected.len(), "d={d} M={m}");
                assert!(expected.iter().all(|q| p.is_lagom_cube(q)));
            }
        }
    }

    #[test]
    fn projection_fixes_lagom_wavelets_and_kills_others() {
        let spec = GridSpec::new(1, 3, 3).unwrap();
        let p = LagomProjector::new(spec, 2).unwrap();
        let inside = DyadicCube::new(0, vec![1]);
        let outside = DyadicCube::new(-2, vec![24]);
        assert!(p.is_lagom_cube(&inside) && !p.is_lagom_cube(&outside));
        let psi = haar_wavelet(&inside, 1, spec).unwrap();
        assert!(max_diff(&p.project(&psi).unwrap(), &psi) < 1e-14);
        let far = haar_wavelet(&outside, 1, spec).unwrap();
        assert!(p.project(&far).unwrap().l2() < 1e-14);
    }

    #[test]
    fn box_guard() {
        let spec = GridSpec::new(1, 2, 2).unwrap();
        assert!(matches!(LagomProjector::new(spec, 3), Err(LagomError::BoxTooSmall(_))));
        assert!(LagomProjector::new(spec, 2).is_ok());
    }

    #[test]
    fn complement_of_indicator_closed_form() {
        // M >= 2: the cubes [0, 2^k) with k > M are exactly the non-lagom
        // ancestors of [0,1) inside the box
        for m in 2..=6u32 {
            let spec = GridSpec::new(1, m + 2, 4).unwrap();
            let f = GridFunction::indicator(&DyadicCube::unit(1).to_cube(), spec).unwrap();
            let g = project_lagom_complement(&f, m).unwrap();
            let side = Dyadic::pow2(m as i32);
            let target = GridFunction::indicator(&Cube::new(vec![side.half()], side).unwrap(), spec)
                .unwrap()
                .scale(c(2f64.powi(-(m as i32))));
            assert!(max_diff(&g, &target) < 1e-12, "M={m}");
        }
    }

    #[test]
    fn projection_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = GridSpec::new(2, 3, 1).unwrap();
        for m in 1..=3 {
            let p = LagomProjector::new(spec, m).unwrap();
            for _ in 0..5 {
                let f = random(spec, &mut rng);
                let g = random(spec, &mut rng);
                let pf = p.project(&f).unwrap();
                let qg = p.complement(&g).unwrap();
                assert!(max_diff(&p.project(&pf).unwrap(), &pf) < 1e-12);
                assert!(max_diff(&pf.add(&p.complement(&f).unwrap()).unwrap(), &f) < 1e-12);
                assert!(pf.inner_product(&qg).unwrap().norm() < 1e-12);
                let a = pf.inner_product(&g).unwrap();
                let b = f.inner_product(&p.project(&g).unwrap()).unwrap();
                assert!((a - b).norm() < 1e-12);
                assert!(pf.l2() <= f.l2() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn real_and_complex_paths_agree() {
        let spec = GridSpec::new(1, 3, 2).unwrap();
        let p = LagomProjector::new(spec, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..spec.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = GridFunction::from_real(spec, v.clone()).unwrap();
        assert_eq!(p.complement(&f).unwrap().real_parts(), p.complement_real(&v));
        assert_eq!(p.project(&f).unwrap().real_parts(), p.project_real(&v));
    }

    #[test]
    fn cmo_defect_cases() {
        let spec = GridSpec::new(1, 4, 2).unwrap();
        // b in D_1 has no tail at any M >= 1
        let mut b = HaarCoefficients::zeros(spec);
        b.set(&DyadicCube::new(0, vec![-1]), 1, c(2.0)).unwrap();
        b.set(&DyadicCube::new(-1, vec![-1]), 1, c(-1.0)).unwrap();
        for m in 1..=4 {
            assert_eq!(cmo_defect(&b, m, None).unwrap(), 0.0);
        }
        // a single far wavelet: the max sits at Omega = J
        for j in [-1, 0, 1] {
            let far = DyadicCube::new(j, vec![12 >> j.max(0) << (-j).max(0)]);
            let mut b = HaarCoefficients::zeros(spec);
            b.set(&far, 1, c(1.0)).unwrap();
            let got = cmo_defect(&b, 2, None).unwrap();
            let want = far.volume().to_f64().powf(-0.5);
            assert!((got - want).abs() < 1e-15, "j={j}");
            let fam = [far.to_cube(), far.parent().to_cube()];
            assert!((cmo_defect(&b, 2, Some(&fam)).unwrap() - want).abs() < 1e-15);
        }
        assert!(matches!(cmo_defect(&b, 2, Some(&[])), Err(LagomError::EmptyFamily)));
    }

    #[test]
    fn cmo_defect_nonincreasing_in_m() {
        let spec = GridSpec::new(1, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let b = analyze(&random(spec, &mut rng));
            let vals: Vec<f64> = (1..=4).map(|m| cmo_defect(&b, m, None).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{vals:?}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let spec = GridSpec::new(2, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let co = analyze(&random(spec, &mut rng));
        let mut buf = Vec::new();
        co.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("j,k1,k2,i,re,im\n"));
        let back = HaarCoefficients::read_csv(spec, &buf[..]).unwrap();
        assert_eq!(back, co);
    }
}
