//! Experiment drivers: `||P_M^perp T||` profiles over `M`, decay fits of
//! Haar pairings, and CSV/SVG output.

use std::io::{BufRead, Write};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::czd::decompose;
use crate::error::{LagomError, Result};
use crate::geometry::{ecc, rdist, DyadicCube};
use crate::grid::{GridFunction, GridSpec};
use crate::operator::GridOperator;
use crate::stats::{fit_loglog, LineFit};
use crate::wavelet::{haar_wavelet, LagomProjector};

pub const POWER_TOLERANCE: f64 = 1e-6;
pub const POWER_MAX_STEPS: usize = 10_000;

pub const LANCZOS_CALM_STEPS: usize = 3;

/// Bumped whenever [`default_test_family`] changes.
pub const TEST_FAMILY_VERSION: u32 = 1;

/// Values below this make a decay sweep degenerate.
pub const DEGENERATE_LEVEL: f64 = 1e-14;

/// Largest singular value estimate and the iterations it took.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub steps: usize,
}

/// Fixed start vector: a seeded pseudo-random real function.
fn start_vector(spec: GridSpec) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let v = (0..spec.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GridFunction::from_real(spec, v).expect("finite start vector")
}

fn normalized(f: GridFunction) -> (GridFunction, f64) {
    let n = f.l2();
    if n > 0.0 {
        (f.scale(Complex64::new(1.0 / n, 0.0)), n)
    } else {
        (f, 0.0)
    }
}

/// Power iteration on `A^* P A` with `P` the lagom complement at `M` (or the
/// identity when `m` is `None`). Stops once successive estimates of
/// `||P A||` agree to `tol` relative.
pub fn power_iteration(t: &dyn GridOperator, m: Option<u32>, tol: f64, max_steps: usize) -> Result<NormEstimate> {
    let spec = t.spec();
    let proj = m.map(|m| LagomProjector::new(spec, m)).transpose()?;
    let forward = |v: &GridFunction| -> Result<GridFunction> {
        let w = t.apply(v)?;
        match &proj {
            Some(p) => p.complement(&w),
            None => Ok(w),
        }
    };
    let (mut v, _) = normalized(start_vector(spec));
    let mut prev = f64::NAN;
    for step in 1..=max_steps {
        let w = forward(&v)?;
        let sigma = w.l2();
        if sigma == 0.0 {
            return Ok(NormEstimate { value: 0.0, steps: step });
        }
        if (sigma - prev).abs() <= tol * sigma {
            return Ok(NormEstimate { value: sigma, steps: step });
        }
        prev = sigma;
        let back = t.apply_adjoint(&w)?;
        v = normalized(back).0;
    }
    Err(LagomError::NonConvergence(max_steps))
}

/// `||P_M^perp T||_{2->2}` by Lanczos bidiagonalization with the standard
/// tolerance and step cap.
pub fn complement_opnorm(t: &dyn GridOperator, m: u32) -> Result<NormEstimate> {
    lanczos_norm(t, Some(m), POWER_TOLERANCE, POWER_MAX_STEPS)
}

/// Golub-Kahan-Lanczos bidiagonalization of `P A` from the same start
/// vector, with full reorthogonalization. The largest singular value of the
/// bidiagonal block is the estimate; stops once the relative criterion has
/// held for [`LANCZOS_CALM_STEPS`] consecutive steps, since Ritz values can
/// stall near an inner singular value before the top one emerges.
pub fn lanczos_norm(t: &dyn GridOperator, m: Option<u32>, tol: f64, max_steps: usize) -> Result<NormEstimate> {
    let spec = t.spec();
    let proj = m.map(|m| LagomProjector::new(spec, m)).transpose()?;
    let forward = |v: &GridFunction| -> Result<GridFunction> {
        let w = t.apply(v)?;
        match &proj {
            Some(p) => p.complement(&w),
            None => Ok(w),
        }
    };
    let (v0, _) = normalized(start_vector(spec));
    let mut vs = vec![v0];
    let mut us: Vec<GridFunction> = Vec::new();
    let (mut alphas, mut betas) = (Vec::new(), vec![0.0]);
    let mut prev = f64::NAN;
    let mut calm = 0;
    for step in 1..=max_steps {
        let v = vs.last().expect("nonempty basis");
        let mut u = forward(v)?;
        if let Some(last) = us.last() {
            u = u.axpy(Complex64::new(-betas[step - 1], 0.0), last)?;
        }
        u = orthogonalize(u, &us)?;
        let (u, alpha) = normalized(u);
        alphas.push(alpha);
        let sigma = bidiagonal_norm(&alphas, &betas);
        calm = if (sigma - prev).abs() <= tol * sigma { calm + 1 } else { 0 };
        if alpha <= f64::EPSILON * sigma.max(f64::MIN_POSITIVE) || calm >= LANCZOS_CALM_STEPS {
            return Ok(NormEstimate { value: sigma, steps: step });
        }
        prev = sigma;
        let mut w = t.apply_adjoint(&u)?.axpy(Complex64::new(-alpha, 0.0), v)?;
        w = orthogonalize(w, &vs)?;
        let (w, beta) = normalized(w);
        us.push(u);
        betas.push(beta);
        if beta <= f64::EPSILON * sigma {
            return Ok(NormEstimate {
                value: bidiagonal_norm(&alphas, &betas),
                steps: step,
            });
        }
        vs.push(w);
    }
    Err(LagomError::NonConvergence(max_steps))
}

/// Two passes of classical Gram-Schmidt against an orthonormal basis.
fn orthogonalize(mut f: GridFunction, basis: &[GridFunction]) -> Result<GridFunction> {
    for _ in 0..2 {
        for b in basis {
            let c = f.inner_product(b)?;
            f = f.axpy(-c, b)?;
        }
    }
    Ok(f)
}

/// Largest singular value of the upper bidiagonal matrix with diagonal
/// `alphas` and superdiagonal `betas[1..]`, via bisection on the Sturm
/// sequence of `B^T B`.
fn bidiagonal_norm(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    let diag: Vec<f64> = (0..k).map(|j| alphas[j].powi(2) + if j > 0 { betas[j].powi(2) } else { 0.0 }).collect();
    let off: Vec<f64> = (0..k.saturating_sub(1)).map(|j| alphas[j] * betas[j + 1]).collect();
    let mut hi: f64 = 0.0;
    for j in 0..k {
        let r = if j > 0 { off[j - 1].abs() } else { 0.0 } + if j + 1 < k { off[j].abs() } else { 0.0 };
        hi = hi.max(diag[j] + r);
    }
    let tiny = f64::EPSILON * hi.max(f64::MIN_POSITIVE);
    // eigenvalues above x
    let above = |x: f64| -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for j in 0..k {
            let o2 = if j > 0 { off[j - 1].powi(2) } else { 0.0 };
            q = diag[j] - x - if j > 0 { o2 / q } else { 0.0 };
            if q == 0.0 {
                q = -tiny;
            }
            if q > 0.0 {
                count += 1;
            }
        }
        count
    };
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) > 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi.sqrt()
}

/// The functions over which the weak-`L^1` sup of a profile runs, each of
/// unit `L^1` norm: Haar atoms `psi_I` (type 1) on `[0, 2^j)^d` for
/// `j = -2, 0, 2` and on the unit cube at `2^(B-1) e_0`, then the two
/// largest bad parts of the Calderón-Zygmund decomposition at height `0.6`
/// of seeded uniform noise on `[0, 1)^d`, for seeds 1 and 2. Cubes that do
/// not fit the grid and bad parts that vanish are skipped.
pub fn default_test_family(spec: GridSpec) -> Result<Vec<GridFunction>> {
    let d = spec.dim();
    let mut cubes: Vec<DyadicCube> = [-2, 0, 2]
        .iter()
        .map(|&j| DyadicCube::new(j, vec![0; d]))
        .collect();
    let mut far = vec![0; d];
    far[0] = 1i64 << spec.box_exp().saturating_sub(1);
    cubes.push(DyadicCube::new(0, far));
    let mut out = Vec::new();
    for c in cubes {
        if c.scale() <= -(spec.res_exp() as i32) || c.scale() > spec.box_exp() as i32 || !spec.contains(&c.to_cube()) {
            continue;
        }
        out.push(l1_normalized(haar_wavelet(&c, 1, spec)?));
    }
    let unit = DyadicCube::unit(d).to_cube();
    let cells = spec.cells_of(&unit)?;
    for seed in 1..=2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = GridFunction::zeros(spec);
        for &i in &cells {
            f.values_mut()[i] = Complex64::new(rng.gen_range(0.0..1.0), 0.0);
        }
        let dec = decompose(&f, 0.6)?;
        let mut parts: Vec<GridFunction> = dec.bad_parts()?.into_iter().map(|(_, g)| g).filter(|g| g.l1() > 0.0).collect();
        parts.sort_by(|a, b| b.l1().total_cmp(&a.l1()));
        out.extend(parts.into_iter().take(2).map(l1_normalized));
    }
    Ok(out)
}

fn l1_normalized(f: GridFunction) -> GridFunction {
    let n = f.l1();
    f.scale(Complex64::new(1.0 / n, 0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileRow {
    pub m: u32,
    pub l2_opnorm: f64,
    pub weak11_sup: f64,
    /// Wall time of the row; `0` unless timing was requested.
    pub runtime_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompactnessProfile {
    pub kernel: String,
    pub spec: GridSpec,
    pub family_version: u32,
    pub rows: Vec<ProfileRow>,
}

/// `||P_M^perp T||_{2->2}` and `max_f ||P_M^perp T f||_{L^{1,inf}}` over the
/// family for each `M` in `ms`, which must be strictly increasing.
pub fn compactness_profile(
    t: &dyn GridOperator,
    kernel: &str,
    ms: &[u32],
    family: &[GridFunction],
    timing: bool,
) -> Result<CompactnessProfile> {
    if ms.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LagomError::InvalidParameter(format!("M values {ms:?} must increase strictly")));
    }
    let spec = t.spec();
    if let Some(&top) = ms.last() {
        LagomProjector::new(spec, top)?;
    }
    let images: Vec<GridFunction> = family.iter().map(|f| t.apply(f)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(ms.len());
    for &m in ms {
        let start = timing.then(Instant::now);
        let l2_opnorm = complement_opnorm(t, m)?.value;
        let proj = LagomProjector::new(spec, m)?;
        let mut weak11_sup: f64 = 0.0;
        for img in &images {
            weak11_sup = weak11_sup.max(proj.complement(img)?.weak_l1_quasinorm());
        }
        rows.push(ProfileRow {
            m,
            l2_opnorm,
            weak11_sup,
            runtime_ms: start.map_or(0, |s| s.elapsed().as_millis() as u64),
        });
    }
    Ok(CompactnessProfile {
        kernel: kernel.to_string(),
        spec,
        family_version: TEST_FAMILY_VERSION,
        rows,
    })
}

pub const PROFILE_HEADER: &str = "M,l2_opnorm,weak11_sup,runtime_ms";

impl CompactnessProfile {
    /// Floats are written in shortest round-trip form.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{PROFILE_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.m, r.l2_opnorm, r.weak11_sup, r.runtime_ms)?;
        }
        Ok(())
    }

    /// `key=value` lines describing how the rows were produced.
    pub fn write_metadata(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "kernel={}", self.kernel)?;
        writeln!(w, "d={}", self.spec.dim())?;
        writeln!(w, "B={}", self.spec.box_exp())?;
        writeln!(w, "R={}", self.spec.res_exp())?;
        writeln!(w, "test_family_version={}", self.family_version)?;
        Ok(())
    }

    /// Log-scale polyline chart of both columns against `M`.
    pub fn write_svg(&self, mut w: impl Write) -> Result<()> {
        let (width, height, pad) = (480.0, 320.0, 40.0);
        writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#)?;
        writeln!(w, "<title>{} on d={} B={} R={}</title>", xml_escape(&self.kernel), self.spec.dim(), self.spec.box_exp(), self.spec.res_exp())?;
        let logs: Vec<f64> = self
            .rows
            .iter()
            .flat_map(|r| [r.l2_opnorm, r.weak11_sup])
            .filter(|v| *v > 0.0)
            .map(f64::log10)
            .collect();
        if let (Some(first), Some(last)) = (self.rows.first(), self.rows.last()) {
            let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if logs.is_empty() { (0.0, 1.0) } else if hi - lo < 1e-9 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
            let span_m = (last.m - first.m).max(1) as f64;
            let x = |m: u32| pad + (m - first.m) as f64 / span_m * (width - 2.0 * pad);
            let y = |v: f64| height - pad - (v.log10() - lo) / (hi - lo) * (height - 2.0 * pad);
            writeln!(w, r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#, width - 2.0 * pad, height - 2.0 * pad)?;
            for (color, pick) in [("steelblue", 0usize), ("darkorange", 1)] {
                let pts: Vec<String> = self
                    .rows
                    .iter()
                    .map(|r| (r.m, if pick == 0 { r.l2_opnorm } else { r.weak11_sup }))
                    .filter(|(_, v)| *v > 0.0)
                    .map(|(m, v)| format!("{:.2},{:.2}", x(m), y(v)))
                    .collect();
                writeln!(w, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, pts.join(" "))?;
            }
            for r in &self.rows {
                writeln!(w, r#"<text x="{:.2}" y="{}" font-size="10" text-anchor="middle">M={}</text>"#, x(r.m), height - pad / 2.0, r.m)?;
            }
        }
        writeln!(w, "</svg>")?;
        Ok(())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Rows of a profile CSV as written by [`CompactnessProfile::write_csv`].
pub fn read_profile_csv(r: impl BufRead) -> Result<Vec<ProfileRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(PROFILE_HEADER) {
        return Err(LagomError::Parse(format!("expected header `{PROFILE_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || LagomError::Parse(format!("profile line {}: `{line}`", ln + 2));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push(ProfileRow {
            m: f[0].parse().map_err(|_| bad())?,
            l2_opnorm: f[1].parse().map_err(|_| bad())?,
            weak11_sup: f[2].parse().map_err(|_| bad())?,
            runtime_ms: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Pairs `(I, J)` of dyadic cubes for a decay fit.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSweep {
    /// Fixed `rdist`, varying `ecc`.
    pub ecc_pairs: Vec<(DyadicCube, DyadicCube)>,
    /// Fixed `ecc`, varying `rdist`.
    pub rdist_pairs: Vec<(DyadicCube, DyadicCube)>,
}

/// Grid used by [`PairSweep::standard`].
pub const DECAY_GRID: (u32, u32) = (5, 6);

impl PairSweep {
    /// `I = [0,1)^d` against `J = [2 - 2^-k, 2) x [0, 2^-k)^(d-1)` for
    /// `k = 0..=4` (`rdist = 2`) and against `J = [m-1, m) x [0,1)^(d-1)`
    /// for `m = 2..=16` (`ecc = 1`).
    pub fn standard(d: usize) -> Self {
        let unit = DyadicCube::unit(d);
        let ecc_pairs = (0..=4)
            .map(|k: i32| {
                let mut c = vec![0i64; d];
                c[0] = (1i64 << (k + 1)) - 1;
                (unit.clone(), DyadicCube::new(-k, c))
            })
            .collect();
        let rdist_pairs = (2..=16)
            .map(|m: i64| {
                let mut c = vec![0i64; d];
                c[0] = m - 1;
                (unit.clone(), DyadicCube::new(0, c))
            })
            .collect();
        PairSweep { ecc_pairs, rdist_pairs }
    }

    pub fn describe(&self) -> String {
        let show = |p: &[(DyadicCube, DyadicCube)]| -> String {
            match (p.first(), p.last()) {
                (Some(a), Some(b)) => format!("{} pairs, J from {} to {}", p.len(), a.1, b.1),
                _ => "empty".into(),
            }
        };
        format!("ecc sweep: {}; rdist sweep: {}", show(&self.ecc_pairs), show(&self.rdist_pairs))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRow {
    pub ecc: f64,
    pub rdist: f64,
    /// `|<T psi_I, psi_J>|`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFitReport {
    /// `log value` against `log ecc`; decay as `ecc -> 0` means a positive slope.
    pub ecc_fit: LineFit,
    /// `log value` against `log rdist`.
    pub rdist_fit: LineFit,
    pub ecc_rows: Vec<DecayRow>,
    pub rdist_rows: Vec<DecayRow>,
    pub description: String,
}

impl DecayFitReport {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "ecc,rdist,value")?;
        for r in self.ecc_rows.iter().chain(&self.rdist_rows) {
            writeln!(w, "{},{},{}", r.ecc, r.rdist, r.value)?;
        }
        Ok(())
    }
}

/// Log-log fits of `|<T psi_I, psi_J>|` along both halves of the sweep,
/// with type-1 Haar functions on each cube.
pub fn decay_fit(t: &dyn GridOperator, sweep: &PairSweep) -> Result<DecayFitReport> {
    let spec = t.spec();
    let rows = |pairs: &[(DyadicCube, DyadicCube)]| -> Result<Vec<DecayRow>> {
        let mut out = Vec::with_capacity(pairs.len());
        let mut cached: Option<(DyadicCube, GridFunction)> = None;
        for (i, j) in pairs {
            let ti = match &cached {
                Some((c, v)) if c == i => v.clone(),
                _ => {
                    let v = t.apply(&haar_wavelet(i, 1, spec)?)?;
                    cached = Some((i.clone(), v.clone()));
                    v
                }
            };
            let value = ti.inner_product(&haar_wavelet(j, 1, spec)?)?.norm();
            let (ic, jc) = (i.to_cube(), j.to_cube());
            out.push(DecayRow {
                ecc: crate::dyadic::rational_to_f64(&ecc(&ic, &jc)?),
                rdist: crate::dyadic::rational_to_f64(&rdist(&ic, &jc)?),
                value,
            });
        }
        Ok(out)
    };
    let ecc_rows = rows(&sweep.ecc_pairs)?;
    let rdist_rows = rows(&sweep.rdist_pairs)?;
    if ecc_rows.iter().chain(&rdist_rows).all(|r| r.value < DEGENERATE_LEVEL) {
        return Err(LagomError::DegenerateSweep(DEGENERATE_LEVEL));
    }
    let fit = |rs: &[DecayRow], x: fn(&DecayRow) -> f64| -> Result<LineFit> {
        let xs: Vec<f64> = rs.iter().map(x).collect();
        let ys: Vec<f64> = rs.iter().map(|r| r.value).collect();
        fit_loglog(&xs, &ys)
    };
    Ok(DecayFitReport {
        ecc_fit: fit(&ecc_rows, |r| r.ecc)?,
        rdist_fit: fit(&rdist_rows, |r| r.rdist)?,
        ecc_rows,
        rdist_rows,
        description: sweep.describe(),
    })
}

/// The standard sweep on the standard decay grid.
pub fn standard_decay_grid(d: usize) -> Result<GridSpec> {
    GridSpec::new(d, DECAY_GRID.0, DECAY_GRID.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{compact_1d, compact_2d, control_1d, discretize, CompactCZKernel, DiagonalPolicy};
    use crate::operator::ZeroOperator;
    use crate::paraproduct::{counterexample_operator, Paraproduct, ParaproductSymbol};
    use crate::wavelet::analyze;

    /// Largest singular value of `P_M^perp A` from a dense SVD.
    fn dense_oracle(t: &dyn GridOperator, m: u32) -> f64 {
        let spec = t.spec();
        let c = spec.cell_count();
        let proj = LagomProjector::new(spec, m).unwrap();
        let mut mat = nalgebra::DMatrix::<f64>::zeros(c, c);
        for j in 0..c {
            let mut e = vec![0.0; c];
            e[j] = 1.0;
            let col = proj.complement(&t.apply(&GridFunction::from_real(spec, e).unwrap()).unwrap()).unwrap();
            for (i, v) in col.values().iter().enumerate() {
                mat[(i, j)] = v.re;
            }
        }
        mat.singular_values().max()
    }

    #[test]
    fn norm_estimates_match_dense_svd() {
        let cases: Vec<(CompactCZKernel, GridSpec)> = vec![
            (compact_1d(), GridSpec::new(1, 3, 4).unwrap()),
            (control_1d(), GridSpec::new(1, 3, 4).unwrap()),
            (compact_2d(), GridSpec::new(2, 2, 1).unwrap()),
        ];
        for (k, spec) in cases {
            let a = discretize(&k, spec, DiagonalPolicy::Zero).unwrap();
            for m in 1..=2 {
                let want = dense_oracle(&a, m);
                let lz = complement_opnorm(&a, m).unwrap().value;
                assert!((lz - want).abs() < 1e-4 * want, "{} M={m}: lanczos {lz} vs {want}", k.name);
                if k.name != control_1d().name {
                    let pw = power_iteration(&a, Some(m), POWER_TOLERANCE, POWER_MAX_STEPS).unwrap().value;
                    assert!((pw - want).abs() < 1e-4 * want, "{} M={m}: power {pw} vs {want}", k.name);
                }
            }
        }
    }

    #[test]
    fn zero_operator_profile_is_zero() {
        let spec = GridSpec::new(1, 3, 2).unwrap();
        let fam = default_test_family(spec).unwrap();
        let p = compactness_profile(&ZeroOperator(spec), "zero", &[1, 2, 3], &fam, false).unwrap();
        assert_eq!(p.rows.len(), 3);
        assert!(p.rows.iter().all(|r| r.l2_opnorm == 0.0 && r.weak11_sup == 0.0 && r.runtime_ms == 0));
    }

    #[test]
    fn profile_guards() {
        let spec = GridSpec::new(1, 2, 2).unwrap();
        let z = ZeroOperator(spec);
        assert!(matches!(
            compactness_profile(&z, "zero", &[2, 1], &[], false),
            Err(LagomError::InvalidParameter(_))
        ));
        assert!(matches!(
            compactness_profile(&z, "zero", &[1, 3], &[], false),
            Err(LagomError::BoxTooSmall(_))
        ));
    }

    #[test]
    fn counterexample_weak_norm_stays_above_one() {
        let spec = GridSpec::new(1, 6, 4).unwrap();
        let t = counterexample_operator(spec).unwrap();
        let fam = default_test_family(spec).unwrap();
        let p = compactness_profile(&t, "counterexample", &[1, 2, 3, 4], &fam, false).unwrap();
        for r in &p.rows {
            assert!(r.weak11_sup >= 1.0 - 1e-12, "{r:?}");
            // P_M^perp chi_[0,1) = 2^-M chi_[0,2^M) has L^2 norm 2^(-M/2)
            assert!((r.l2_opnorm - 2f64.powf(-(r.m as f64) / 2.0)).abs() < 1e-6 || r.m == 1, "{r:?}");
        }
    }

    #[test]
    fn test_family_is_l1_normalized() {
        for (spec, count) in [(GridSpec::new(1, 5, 6).unwrap(), 8), (GridSpec::new(2, 3, 2).unwrap(), 4)] {
            let fam = default_test_family(spec).unwrap();
            // single-cell bad parts vanish, so coarse grids keep only the atoms
            assert_eq!(fam.len(), count);
            for f in &fam {
                assert!((f.l1() - 1.0).abs() < 1e-12);
                assert!(f.integral().norm() < 1e-12, "family members are mean-zero");
            }
        }
    }

    fn sample_profile() -> CompactnessProfile {
        let spec = GridSpec::new(1, 4, 3).unwrap();
        let a = discretize(&compact_1d(), spec, DiagonalPolicy::Zero).unwrap();
        compactness_profile(&a, "compact-1d", &[1, 2, 3], &default_test_family(spec).unwrap(), false).unwrap()
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let p = sample_profile();
        let mut first = Vec::new();
        p.write_csv(&mut first).unwrap();
        let mut second = Vec::new();
        sample_profile().write_csv(&mut second).unwrap();
        assert_eq!(first, second);
        let text = String::from_utf8(first.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        let rows = read_profile_csv(first.as_slice()).unwrap();
        assert_eq!(rows, p.rows);
        let empty = CompactnessProfile { rows: vec![], ..p };
        let mut buf = Vec::new();
        empty.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{PROFILE_HEADER}\n"));
        assert!(read_profile_csv("M,x\n".as_bytes()).is_err());
    }

    #[test]
    fn svg_has_single_root() {
        for p in [sample_profile(), CompactnessProfile { rows: vec![], ..sample_profile() }] {
            let mut buf = Vec::new();
            p.write_svg(&mut buf).unwrap();
            let text = String::from_utf8(buf).unwrap();
            let body = text.trim();
            assert!(body.starts_with("<svg ") && body.ends_with("</svg>"));
            assert_eq!(body.matches("<svg").count(), 1);
            assert_eq!(body.matches("</svg>").count(), 1);
            assert_eq!(body.matches('<').count(), body.matches('>').count());
        }
    }

    #[test]
    fn decay_fit_zero_kernel_is_degenerate() {
        let spec = standard_decay_grid(1).unwrap();
        let z = discretize(&CompactCZKernel::zero(1), spec, DiagonalPolicy::Zero).unwrap();
        assert!(matches!(decay_fit(&z, &PairSweep::standard(1)), Err(LagomError::DegenerateSweep(_))));
    }

    #[test]
    fn decay_fit_slopes() {
        let spec = standard_decay_grid(1).unwrap();
        let sweep = PairSweep::standard(1);
        let c = decay_fit(&discretize(&compact_1d(), spec, DiagonalPolicy::Zero).unwrap(), &sweep).unwrap();
        assert_eq!((c.ecc_rows.len(), c.rdist_rows.len()), (5, 15));
        assert!(c.ecc_rows.iter().all(|r| r.rdist == 2.0));
        assert!(c.rdist_rows.iter().all(|r| r.ecc == 1.0));
        assert!(c.rdist_fit.slope <= -1.0 && c.ecc_fit.slope >= 0.5);
        assert!((c.rdist_fit.slope + 4.725371).abs() < 1e-5, "{:?}", c.rdist_fit);
        assert!((c.ecc_fit.slope - 2.154449).abs() < 1e-5, "{:?}", c.ecc_fit);
        let k = decay_fit(&discretize(&control_1d(), spec, DiagonalPolicy::Zero).unwrap(), &sweep).unwrap();
        assert!(k.rdist_fit.slope <= -1.0);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 21);
    }

    #[test]
    fn paraproduct_norm_against_carleson_constant() {
        let spec = GridSpec::new(1, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let v = (0..spec.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = analyze(&GridFunction::from_real(spec, v).unwrap());
            let sym = ParaproductSymbol::indicator(b);
            let carleson = sym.carleson_constant();
            let norm = lanczos_norm(&Paraproduct::new(sym).unwrap(), None, POWER_TOLERANCE, POWER_MAX_STEPS).unwrap().value;
            let ratio = norm / carleson;
            assert!(ratio.is_finite() && ratio > 0.0);
        }
    }
}
