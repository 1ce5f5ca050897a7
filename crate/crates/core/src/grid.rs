//! Piecewise-constant functions on the box `[-2^B, 2^B)^d` with cells of
//! side `2^-R`.
//!
//! Cells are indexed with axis 0 varying fastest. Integer cell coordinates
//! run over `0..n` with `n = 2^(B+R+1)`; cell `c` covers
//! `[-2^B + c 2^-R, -2^B + (c+1) 2^-R)` along each axis.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::dyadic::Dyadic;
use crate::error::{LagomError, Result};
use crate::geometry::{Cube, DyadicCube};
use crate::sum::{ComplexSum, NeumaierSum};

/// Cell counts at or above this are refused.
pub const CELL_LIMIT: u128 = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    d: usize,
    b: u32,
    r: u32,
}

impl GridSpec {
    pub fn new(d: usize, b: u32, r: u32) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(LagomError::UnsupportedDimension(d));
        }
        let bits = (b as u128 + r as u128 + 1) * d as u128;
        if bits >= 28 {
            let count = if bits < 127 { 1u128 << bits } else { u128::MAX };
            return Err(LagomError::GridTooLarge(count));
        }
        Ok(GridSpec { d, b, r })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn box_exp(&self) -> u32 {
        self.b
    }

    pub fn res_exp(&self) -> u32 {
        self.r
    }

    /// Cells per axis, `2^(B+R+1)`.
    pub fn n(&self) -> usize {
        1usize << (self.b + self.r + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.n().pow(self.d as u32)
    }

    pub fn cell_side(&self) -> f64 {
        2f64.powi(-(self.r as i32))
    }

    pub fn cell_volume(&self) -> f64 {
        2f64.powi(-(self.r as i32) * self.d as i32)
    }

    /// `2^B`, the half-width of the box.
    pub fn half_width(&self) -> f64 {
        2f64.powi(self.b as i32)
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let n = self.n();
        coords.iter().rev().fold(0, |acc, &c| acc * n + c)
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let n = self.n();
        (0..self.d)
            .map(|_| {
                let c = index % n;
                index /= n;
                c
            })
            .collect()
    }

    /// Centre of a cell in box coordinates.
    pub fn cell_center(&self, index: usize) -> Vec<f64> {
        let h = self.cell_side();
        let w = self.half_width();
        self.coords(index)
            .into_iter()
            .map(|c| -w + (c as f64 + 0.5) * h)
            .collect()
    }

    /// Integer cell coordinate of the point `x` along one axis (exact for
    /// dyadic `x`), unclipped.
    fn cell_coord(&self, x: Dyadic) -> Dyadic {
        (x + Dyadic::pow2(self.b as i32)).scale_pow2(self.r as i32)
    }

    /// Per-axis half-open cell ranges covered by `cube`, clipped to the box.
    /// `Ok(None)` when the cube misses the box.
    pub fn cube_cells(&self, cube: &Cube) -> Result<Option<Vec<(usize, usize)>>> {
        if cube.dim() != self.d {
            return Err(LagomError::DimensionMismatch(cube.dim(), self.d));
        }
        let n = self.n() as i128;
        let mut out = Vec::with_capacity(self.d);
        let mut empty = false;
        for a in 0..self.d {
            let lo = self.cell_coord(cube.lower(a));
            let hi = self.cell_coord(cube.upper(a));
            if lo.exponent() < 0 || hi.exponent() < 0 {
                return Err(LagomError::UnalignedCube(cube.to_string()));
            }
            let (lo, hi) = (lo.floor().clamp(0, n), hi.floor().clamp(0, n));
            if lo >= hi {
                empty = true;
            }
            out.push((lo as usize, hi as usize));
        }
        Ok(if empty { None } else { Some(out) })
    }

    /// Whether the cube lies inside the box.
    pub fn contains(&self, cube: &Cube) -> bool {
        let w = Dyadic::pow2(self.b as i32);
        cube.dim() == self.d && (0..self.d).all(|a| cube.lower(a) >= -w && cube.upper(a) <= w)
    }

    /// Cell indices of an aligned cube clipped to the box, in index order.
    pub fn cells_of(&self, cube: &Cube) -> Result<Vec<usize>> {
        let Some(ranges) = self.cube_cells(cube)? else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for_each_in_ranges(&ranges, |c| out.push(self.index(c)));
        out.sort_unstable();
        Ok(out)
    }

    /// The dyadic cube occupied by one cell.
    pub fn cell_cube(&self, index: usize) -> DyadicCube {
        let off = 1i64 << (self.b + self.r);
        DyadicCube::new(
            -(self.r as i32),
            self.coords(index).into_iter().map(|c| c as i64 - off).collect(),
        )
    }
}

/// Visit every integer point of a product of half-open ranges.
pub(crate) fn for_each_in_ranges(ranges: &[(usize, usize)], mut f: impl FnMut(&[usize])) {
    if ranges.iter().any(|(lo, hi)| lo >= hi) {
        return;
    }
    let mut c: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&c);
        let mut a = 0;
        loop {
            if a == ranges.len() {
                return;
            }
            c[a] += 1;
            if c[a] < ranges[a].1 {
                break;
            }
            c[a] = ranges[a].0;
            a += 1;
        }
    }
}

/// A complex-valued step function, one value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(spec: GridSpec) -> Self {
        GridFunction {
            spec,
            values: vec![Complex64::new(0.0, 0.0); spec.cell_count()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != spec.cell_count() {
            return Err(LagomError::SpecMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(LagomError::NonFinite(format!("cell {i}")));
        }
        Ok(GridFunction { spec, values })
    }

    pub fn from_real(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        Self::from_values(spec, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(&[f64]) -> Complex64) -> Result<Self> {
        let values = (0..spec.cell_count()).map(|i| f(&spec.cell_center(i))).collect();
        Self::from_values(spec, values)
    }

    /// `chi_I` for a grid-aligned cube; the part outside the box is dropped.
    pub fn indicator(cube: &Cube, spec: GridSpec) -> Result<Self> {
        let mut g = Self::zeros(spec);
        for i in spec.cells_of(cube)? {
            g.values[i] = Complex64::new(1.0, 0.0);
        }
        Ok(g)
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    fn check(&self, other: &GridFunction) -> Result<()> {
        if self.spec != other.spec {
            return Err(LagomError::SpecMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check(other)?;
        Ok(GridFunction {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check(other)?;
        Ok(GridFunction {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, s: Complex64) -> GridFunction {
        GridFunction {
            spec: self.spec,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: Complex64, other: &GridFunction) -> Result<GridFunction> {
        self.check(other)?;
        Ok(GridFunction {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
        })
    }

    /// `int f conj(g)`.
    pub fn inner_product(&self, other: &GridFunction) -> Result<Complex64> {
        self.check(other)?;
        let mut acc = ComplexSum::new();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc.add(a * b.conj());
        }
        Ok(acc.value() * self.spec.cell_volume())
    }

    pub fn integral(&self) -> Complex64 {
        let mut acc = ComplexSum::new();
        for v in &self.values {
            acc.add(*v);
        }
        acc.value() * self.spec.cell_volume()
    }

    /// `L^p` norm; `p = f64::INFINITY` gives the max.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(LagomError::InvalidParameter(format!("p = {p} must be at least 1")));
        }
        if p.is_infinite() {
            return Ok(self.linf());
        }
        let mut acc = NeumaierSum::new();
        if p == 1.0 {
            self.values.iter().for_each(|v| acc.add(v.norm()));
            return Ok(acc.value() * self.spec.cell_volume());
        }
        if p == 2.0 {
            self.values.iter().for_each(|v| acc.add(v.norm_sqr()));
            return Ok((acc.value() * self.spec.cell_volume()).sqrt());
        }
        self.values.iter().for_each(|v| acc.add(v.norm().powf(p)));
        Ok((acc.value() * self.spec.cell_volume()).powf(1.0 / p))
    }

    pub fn l1(&self) -> f64 {
        self.lp_norm(1.0).expect("p = 1 is valid")
    }

    pub fn l2(&self) -> f64 {
        self.lp_norm(2.0).expect("p = 2 is valid")
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `m({|f| > lambda})`.
    pub fn distribution_function(&self, lambda: f64) -> f64 {
        let count = self.values.iter().filter(|v| v.norm() > lambda).count();
        count as f64 * self.spec.cell_volume()
    }

    /// `sup_lambda lambda m({|f| > lambda})`, attained as `lambda` rises to
    /// one of the cell magnitudes.
    pub fn weak_l1_quasinorm(&self) -> f64 {
        let mut mags: Vec<f64> = self.values.iter().map(|v| v.norm()).filter(|&v| v > 0.0).collect();
        mags.sort_unstable_by(|a, b| b.total_cmp(a));
        let vol = self.spec.cell_volume();
        let mut best: f64 = 0.0;
        for (i, &v) in mags.iter().enumerate() {
            if i + 1 == mags.len() || mags[i + 1] != v {
                best = best.max(v * ((i + 1) as f64 * vol));
            }
        }
        best
    }

    /// Shift by whole cells; values moved outside the box are dropped.
    pub fn translate_cells(&self, shift: &[i64]) -> Result<GridFunction> {
        if shift.len() != self.spec.d {
            return Err(LagomError::DimensionMismatch(shift.len(), self.spec.d));
        }
        let n = self.spec.n() as i64;
        let mut out = GridFunction::zeros(self.spec);
        for (i, v) in self.values.iter().enumerate() {
            let c = self.spec.coords(i);
            let moved: Option<Vec<usize>> = c
                .iter()
                .zip(shift)
                .map(|(&c, &s)| {
                    let t = c as i64 + s;
                    (0..n).contains(&t).then_some(t as usize)
                })
                .collect();
            if let Some(m) = moved {
                out.values[self.spec.index(&m)] = *v;
            }
        }
        Ok(out)
    }

    /// Binary form: `d, B, R` as little-endian `u32`, then one little-endian
    /// `f64` per cell, or interleaved `re, im` pairs when any value is
    /// non-real. The payload length tells the two apart.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        for h in [self.spec.d as u32, self.spec.b, self.spec.r] {
            w.write_all(&h.to_le_bytes())?;
        }
        let real = self.is_real();
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            if !real {
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<GridFunction> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 12 {
            return Err(LagomError::Parse("grid file shorter than its header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        let spec = GridSpec::new(word(0) as usize, word(1), word(2))?;
        let payload = &bytes[12..];
        let doubles: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let n = spec.cell_count();
        let values = if payload.len() == 8 * n {
            doubles.into_iter().map(|v| Complex64::new(v, 0.0)).collect()
        } else if payload.len() == 16 * n {
            doubles.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
        } else {
            return Err(LagomError::Parse(format!(
                "payload of {} bytes does not match {n} cells",
                payload.len()
            )));
        };
        GridFunction::from_values(spec, values)
    }

    /// CSV with header `cell,value` (real) or `cell,re,im` (complex).
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let real = self.is_real();
        writeln!(w, "{}", if real { "cell,value" } else { "cell,re,im" })?;
        for (i, v) in self.values.iter().enumerate() {
            if real {
                writeln!(w, "{i},{:e}", v.re)?;
            } else {
                writeln!(w, "{i},{:e},{:e}", v.re, v.im)?;
            }
        }
        Ok(())
    }

    pub fn read_csv(spec: GridSpec, r: impl Read) -> Result<GridFunction> {
        let mut text = String::new();
        { r }.read_to_string(&mut text)?;
        let mut values = vec![Complex64::new(0.0, 0.0); spec.cell_count()];
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || LagomError::Parse(format!("line {}: `{line}`", ln + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let idx: usize = fields.first().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let re: f64 = fields.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let im: f64 = match fields.get(2) {
                Some(s) => s.parse().map_err(|_| bad())?,
                None => 0.0,
            };
            *values.get_mut(idx).ok_or_else(bad)? = Complex64::new(re, im);
        }
        GridFunction::from_values(spec, values)
    }
}
