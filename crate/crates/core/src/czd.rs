//! Calderón-Zygmund decomposition on the grid.
//!
//! Cubes are selected top-down from the `2^d` orthant cubes of side `2^B`;
//! those are treated as maximal, so thresholds below `||f||_1 / 2^(Bd)` can
//! select cubes whose parents (outside the grid) would also qualify.

use std::io::Write;

use num_complex::Complex64;

use crate::dyadic::Dyadic;
use crate::error::{LagomError, Result};
use crate::geometry::{Cube, DyadicCube};
use crate::grid::{for_each_in_ranges, GridFunction, GridSpec};
use crate::sum::ComplexSum;

#[derive(Clone, Debug)]
pub struct CZDecomposition {
    threshold: f64,
    /// Selected cubes, disjoint and sorted.
    cubes: Vec<DyadicCube>,
    /// Averages `m_I(f)`, parallel to `cubes`.
    means: Vec<Complex64>,
    good: GridFunction,
    /// `sum_I f_I`; the cubes are disjoint so each `f_I` is its restriction.
    bad: GridFunction,
}

/// Sums of `|f|` over every dyadic cube of the grid, finest level first.
/// Level `k` holds cubes of `2^k` cells per side, indexed like a grid of
/// `n / 2^k` cells per axis.
fn abs_pyramid(f: &GridFunction) -> Vec<Vec<f64>> {
    let spec = f.spec();
    let d = spec.dim();
    let mut levels = vec![f.values().iter().map(|z| z.norm()).collect::<Vec<f64>>()];
    let mut n = spec.n();
    while n > 1 {
        let half = n / 2;
        let prev = levels.last().unwrap();
        let mut next = vec![0.0; half.pow(d as u32)];
        for (idx, v) in next.iter_mut().enumerate() {
            let mut coarse = vec![0usize; d];
            let mut rest = idx;
            for c in coarse.iter_mut() {
                *c = rest % half;
                rest /= half;
            }
            // pairwise over children keeps the reduction tree fixed
            let mut parts: Vec<f64> = (0..1usize << d)
                .map(|mask| {
                    let mut fine = 0usize;
                    for a in (0..d).rev() {
                        fine = fine * n + 2 * coarse[a] + ((mask >> a) & 1);
                    }
                    prev[fine]
                })
                .collect();
            while parts.len() > 1 {
                parts = parts.chunks(2).map(|p| p.iter().sum()).collect();
            }
            *v = parts[0];
        }
        levels.push(next);
        n = half;
    }
    levels
}

/// Top-down selection of maximal dyadic cubes whose `|f|`-average strictly
/// exceeds `threshold`.
pub fn decompose(f: &GridFunction, threshold: f64) -> Result<CZDecomposition> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(LagomError::InvalidParameter(format!("threshold {threshold} must be positive")));
    }
    let spec = f.spec();
    let d = spec.dim();
    let pyramid = abs_pyramid(f);
    let res = spec.res_exp() as i32;
    let cell_vol = spec.cell_volume();
    let mut cubes = Vec::new();
    let top = pyramid.len() - 2; // level of the orthant cubes
    let mut stack: Vec<(usize, Vec<usize>)> = (0..1usize << d).map(|mask| (top, (0..d).map(|a| (mask >> a) & 1).collect())).collect();
    while let Some((level, coarse)) = stack.pop() {
        let per_axis = spec.n() >> level;
        let idx = coarse.iter().rev().fold(0usize, |acc, &c| acc * per_axis + c);
        let cells = (1usize << level).pow(d as u32) as f64;
        let avg = pyramid[level][idx] / cells;
        if avg > threshold {
            cubes.push(pyramid_cube(&spec, level, &coarse, res));
        } else if level > 0 {
            for mask in 0..1usize << d {
                stack.push((level - 1, coarse.iter().enumerate().map(|(a, &c)| 2 * c + ((mask >> a) & 1)).collect()));
            }
        }
    }
    cubes.sort();
    let mut good = f.clone();
    let mut bad = GridFunction::zeros(spec);
    let mut means = Vec::with_capacity(cubes.len());
    for cube in &cubes {
        let ranges = spec
            .cube_cells(&cube.to_cube())?
            .ok_or_else(|| LagomError::CubeOutsideBox(cube.to_string()))?;
        let mut acc = ComplexSum::new();
        for_each_in_ranges(&ranges, |c| acc.add(f.values()[spec.index(c)]));
        let mean = acc.value() * cell_vol / cube.volume().to_f64();
        means.push(mean);
        for_each_in_ranges(&ranges, |c| {
            let i = spec.index(c);
            bad.values_mut()[i] = f.values()[i] - mean;
            good.values_mut()[i] = mean;
        });
    }
    Ok(CZDecomposition {
        threshold,
        cubes,
        means,
        good,
        bad,
    })
}

fn pyramid_cube(spec: &GridSpec, level: usize, coarse: &[usize], res: i32) -> DyadicCube {
    let scale = level as i32 - res;
    let offset = 1i64 << (spec.box_exp() as i32 - scale);
    DyadicCube::new(scale, coarse.iter().map(|&c| c as i64 - offset).collect())
}

impl CZDecomposition {
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    /// `m_I(f)` per selected cube.
    pub fn means(&self) -> &[Complex64] {
        &self.means
    }

    /// `g~ = sum_I m_I(f) chi_I + f chi_{E^c}`.
    pub fn good(&self) -> &GridFunction {
        &self.good
    }

    /// `b~ = sum_I f_I`.
    pub fn bad(&self) -> &GridFunction {
        &self.bad
    }

    /// `f_I = (f - m_I(f)) chi_I` for a selected cube.
    pub fn bad_part(&self, cube: &DyadicCube) -> Result<GridFunction> {
        if self.cubes.binary_search(cube).is_err() {
            return Err(LagomError::InvalidParameter(format!("{cube} is not a selected cube")));
        }
        let spec = self.bad.spec();
        let mut out = GridFunction::zeros(spec);
        let ranges = spec.cube_cells(&cube.to_cube())?.expect("selected cubes lie in the grid");
        for_each_in_ranges(&ranges, |c| {
            let i = spec.index(c);
            out.values_mut()[i] = self.bad.values()[i];
        });
        Ok(out)
    }

    pub fn bad_parts(&self) -> Result<Vec<(DyadicCube, GridFunction)>> {
        self.cubes.iter().map(|c| Ok((c.clone(), self.bad_part(c)?))).collect()
    }

    /// `m(E)`, exact since the cubes are disjoint.
    pub fn measure_e(&self) -> f64 {
        self.cubes.iter().map(|c| c.volume().to_f64()).sum()
    }

    /// `m(E~ ∩ box)` with `E~` the union of `10 I`. Every `10 I` has corners
    /// on the half-cell lattice, so the union is counted on that lattice.
    pub fn measure_e_tilde(&self) -> f64 {
        let spec = self.good.spec();
        let d = spec.dim();
        let n2 = 2 * spec.n();
        let mut covered = vec![false; n2.pow(d as u32)];
        let half_cell = Dyadic::pow2(-(spec.res_exp() as i32) - 1);
        let lo = -Dyadic::pow2(spec.box_exp() as i32);
        for cube in &self.cubes {
            let big = cube.to_cube().dilate(Dyadic::from_int(10)).expect("positive dilation");
            let ranges: Vec<(usize, usize)> = (0..d)
                .map(|a| {
                    let to_idx = |v: Dyadic| ((v - lo).scale_pow2(-half_cell.exponent()).floor()).clamp(0, n2 as i128) as usize;
                    (to_idx(big.lower(a)), to_idx(big.upper(a)))
                })
                .collect();
            if ranges.iter().any(|(a, b)| a >= b) {
                continue;
            }
            for_each_in_ranges(&ranges, |c| {
                let idx = c.iter().rev().fold(0usize, |acc, &v| acc * n2 + v);
                covered[idx] = true;
            });
        }
        let count = covered.iter().filter(|&&c| c).count();
        count as f64 * (spec.cell_side() / 2.0).powi(d as i32)
    }

    /// Selected cubes as CSV rows `cube,mean_re,mean_im`.
    /// One row `j,k1,...,kd,mean_re,mean_im` per selected cube.
    pub fn write_cubes_csv(&self, mut w: impl Write) -> Result<()> {
        let ks: Vec<String> = (1..=self.good.spec().dim()).map(|a| format!("k{a}")).collect();
        writeln!(w, "j,{},mean_re,mean_im", ks.join(","))?;
        for (c, m) in self.cubes.iter().zip(&self.means) {
            let k: Vec<String> = c.corner().iter().map(|k| k.to_string()).collect();
            writeln!(w, "{},{},{:e},{:e}", c.scale(), k.join(","), m.re, m.im)?;
        }
        Ok(())
    }
}

/// `(m(E), m(E~))`.
pub fn exceptional_measures(dec: &CZDecomposition) -> (f64, f64) {
    (dec.measure_e(), dec.measure_e_tilde())
}

/// `10 I` for every selected cube, clipped by nothing.
pub fn dilated_cubes(dec: &CZDecomposition) -> Vec<Cube> {
    dec.cubes
        .iter()
        .map(|c| c.to_cube().dilate(Dyadic::from_int(10)).expect("positive dilation"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_indicator() {
        let spec = GridSpec::new(1, 3, 2).unwrap();
        let f = GridFunction::indicator(&DyadicCube::unit(1).to_cube(), spec).unwrap();
        let dec = decompose(&f, 0.5).unwrap();
        assert_eq!(dec.cubes(), &[DyadicCube::unit(1)]);
        assert_eq!(dec.good(), &f);
        assert_eq!(dec.bad().linf(), 0.0);
        // brute force over every dyadic cube in the grid
        for j in -2..=3 {
            let side = 2f64.powi(j);
            let count = (8.0 / side) as i64;
            for k in -count..count {
                let lo = k as f64 * side;
                let avg = ((lo + side).min(1.0) - lo.max(0.0)).max(0.0) / side;
                let (pl, ps) = (k.div_euclid(2) as f64 * 2.0 * side, 2.0 * side);
                let parent_avg = ((pl + ps).min(1.0) - pl.max(0.0)).max(0.0) / ps;
                let selected = dec.cubes().contains(&DyadicCube::new(j, vec![k]));
                assert_eq!(selected, avg > 0.5 && parent_avg <= 0.5, "j={j} k={k}");
            }
        }
    }

    #[test]
    fn high_threshold_selects_nothing() {
        let spec = GridSpec::new(2, 1, 2).unwrap();
        let f = GridFunction::from_fn(spec, |x| Complex64::new(x[0] + x[1], 0.0)).unwrap();
        let dec = decompose(&f, f.linf() * 1.01).unwrap();
        assert!(dec.cubes().is_empty());
        assert_eq!(dec.good(), &f);
        assert_eq!(exceptional_measures(&dec), (0.0, 0.0));
        assert!(decompose(&f, 0.0).is_err());
    }

    #[test]
    fn single_cube_measures() {
        let spec = GridSpec::new(1, 4, 2).unwrap();
        let f = GridFunction::indicator(&DyadicCube::new(-1, vec![0]).to_cube(), spec).unwrap();
        let dec = decompose(&f, 0.75).unwrap();
        assert_eq!(dec.cubes(), &[DyadicCube::new(-1, vec![0])]);
        assert_eq!(exceptional_measures(&dec), (0.5, 5.0));
        // near the box edge 10 I is clipped
        let edge = GridFunction::indicator(&DyadicCube::new(0, vec![15]).to_cube(), spec).unwrap();
        let dec = decompose(&edge, 0.75).unwrap();
        assert_eq!(exceptional_measures(&dec), (1.0, 5.5));
    }

    #[test]
    fn overlapping_dilates_match_cell_count() {
        let spec = GridSpec::new(1, 5, 1).unwrap();
        let mut vals = vec![0.0; spec.cell_count()];
        for i in [30, 33, 38, 50] {
            vals[i] = 8.0;
        }
        let f = GridFunction::from_real(spec, vals).unwrap();
        let dec = decompose(&f, 3.0).unwrap();
        // brute force on a fine lattice of points
        let pts = 64 * 64;
        let big = dilated_cubes(&dec);
        let hits = (0..pts)
            .filter(|p| {
                let x = -32.0 + (*p as f64 + 0.5) / 64.0;
                big.iter().any(|c| x >= c.lower(0).to_f64() && x < c.upper(0).to_f64())
            })
            .count();
        assert_eq!(dec.measure_e_tilde(), hits as f64 / 64.0);
    }

    #[test]
    fn cubes_csv_has_one_column_per_axis() {
        let spec = GridSpec::new(2, 1, 1).unwrap();
        let f = GridFunction::indicator(&DyadicCube::new(-1, vec![0, -1]).to_cube(), spec).unwrap();
        let dec = decompose(&f, 0.5).unwrap();
        let mut buf = Vec::new();
        dec.write_cubes_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "j,k1,k2,mean_re,mean_im\n-1,0,-1,1e0,0e0\n");
    }

    #[test]
    fn random_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let d = 1 + trial % 2;
            let spec = GridSpec::new(d, 2, 2).unwrap();
            // dyadic-valued samples keep every sum exact
            let vals: Vec<f64> = (0..spec.cell_count())
                .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0..256) as f64 / 16.0 } else { 0.0 })
                .collect();
            let f = GridFunction::from_real(spec, vals).unwrap();
            // above every orthant average, so selected cubes have parents in the grid
            let threshold = rng.gen_range(2.0..8.0f64).max(1.01 * f.l1() / 4f64.powi(d as i32));
            let dec = decompose(&f, threshold).unwrap();
            assert_eq!(&dec.good().add(dec.bad()).unwrap(), &f);
            assert!(dec.good().linf() <= 2f64.powi(d as i32) * threshold);
            assert!(dec.good().l1() <= f.l1());
            assert!(dec.measure_e() <= f.l1() / threshold);
            assert!(dec.measure_e_tilde() <= 10f64.powi(d as i32) * dec.measure_e());
            for (c, part) in dec.bad_parts().unwrap() {
                assert_eq!(part.integral().norm(), 0.0);
                let inside = spec.cells_of(&c.to_cube()).unwrap();
                for (i, v) in part.values().iter().enumerate() {
                    assert!(inside.contains(&i) || v.norm() == 0.0);
                }
            }
        }
    }
}
