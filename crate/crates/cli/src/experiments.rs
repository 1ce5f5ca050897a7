//! Experiment drivers shared by the `lagom` binary and the acceptance suite.
//! Each returns its data together with the checks it asserts.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::Rng;

use lagom::bump::{sweep_atom, sweep_interaction, sweep_slope, SweepRow, INTERACTION_MZ_ECC};
use lagom::czd::CZDecomposition;
use lagom::diagnostics::{
    compactness_profile, decay_fit, default_test_family, standard_decay_grid, CompactnessProfile, DecayFitReport,
    PairSweep,
};
use lagom::geometry::DyadicCube;
use lagom::grid::{GridFunction, GridSpec};
use lagom::kernel::{discretize, f_six_escape_sup, CompactCZKernel, DiagonalPolicy, Kernel};
use lagom::paraproduct::{counterexample_chain, CounterexampleRow};
use lagom::sum::sum;
use lagom::{LagomError, Result};

/// One asserted criterion of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// `a..b` and `a..=b` (both inclusive), `a,b,c`, or a single value.
pub fn parse_m_list(s: &str) -> Result<Vec<u32>> {
    let bad = || LagomError::Parse(format!("M list {s:?}: expected `a..b`, `a,b,c` or a single integer"));
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(num).collect()
}

/// Zero diagonal for antisymmetric kernels, one excluded ring otherwise.
pub fn default_policy(k: &CompactCZKernel) -> DiagonalPolicy {
    if k.is_antisymmetric() {
        DiagonalPolicy::Zero
    } else {
        DiagonalPolicy::ExcludeRing(1)
    }
}

#[derive(Clone, Debug)]
pub struct ProfileRun {
    pub kernel: CompactCZKernel,
    pub b: u32,
    pub r: u32,
    pub ms: Vec<u32>,
    pub policy: Option<DiagonalPolicy>,
    pub timing: bool,
}

pub fn run_profile(run: &ProfileRun) -> Result<CompactnessProfile> {
    let k = &run.kernel;
    let spec = GridSpec::new(k.dim, run.b, run.r)?;
    let op = discretize(k, spec, run.policy.unwrap_or_else(|| default_policy(k)))?;
    let family = default_test_family(spec)?;
    compactness_profile(&op, &k.name, &run.ms, &family, run.timing)
}

/// Finite nonnegative entries, and the endpoint trend: compact kernels
/// strictly decrease and end below half the first value, standard kernels
/// stay above half.
pub fn profile_checks(k: &CompactCZKernel, p: &CompactnessProfile) -> Vec<Check> {
    let mut out = Vec::new();
    let sane = p
        .rows
        .iter()
        .all(|r| r.l2_opnorm.is_finite() && r.l2_opnorm >= 0.0 && r.weak11_sup.is_finite() && r.weak11_sup >= 0.0);
    out.push(Check::new("profile-entries", sane, format!("{} rows, finite and nonnegative", p.rows.len())));
    let norms: Vec<f64> = p.rows.iter().map(|r| r.l2_opnorm).collect();
    if let (Some(first), Some(last), true) = (norms.first(), norms.last(), norms.len() >= 2) {
        let ratio = last / first;
        let ms = (p.rows[0].m, p.rows[p.rows.len() - 1].m);
        if k.standard_only {
            out.push(Check::new(
                "profile-standard-persists",
                ratio > 0.5,
                format!("||P^perp T|| at M={} over M={} is {ratio:.6}, needs > 0.5", ms.1, ms.0),
            ));
        } else {
            let decreasing = norms.windows(2).all(|w| w[1] < w[0]);
            out.push(Check::new(
                "profile-strictly-decreasing",
                decreasing,
                format!("l2 norms {}", fmt_list(&norms)),
            ));
            out.push(Check::new(
                "profile-halves",
                ratio < 0.5,
                format!("||P^perp T|| at M={} over M={} is {ratio:.6}, needs < 0.5", ms.1, ms.0),
            ));
        }
    }
    out
}

pub fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

/// A sparse dyadic-valued function on the `(d, 2, 2)` grid and a threshold
/// above every orthant average, so every sum is exact and no orthant cube
/// is selected.
pub fn random_czd_case(d: usize, rng: &mut impl Rng) -> Result<(GridFunction, f64)> {
    let spec = GridSpec::new(d, 2, 2)?;
    let vals: Vec<f64> = (0..spec.cell_count())
        .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0..256) as f64 / 16.0 } else { 0.0 })
        .collect();
    let f = GridFunction::from_real(spec, vals)?;
    let orthant = 2f64.powi((spec.box_exp() * d as u32) as i32);
    let threshold = rng.gen_range(2.0..8.0f64).max(1.01 * f.l1() / orthant);
    Ok((f, threshold))
}

/// Every cube of the grid from cell scale up to the orthant scale.
fn grid_cubes(spec: GridSpec) -> Vec<DyadicCube> {
    let d = spec.dim();
    let (b, r) = (spec.box_exp() as i32, spec.res_exp() as i32);
    let mut out = Vec::new();
    for j in -r..=b {
        let half = 1i64 << (b - j);
        let per_axis = 2 * half;
        let total = per_axis.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let corner = (0..d)
                .map(|_| {
                    let c = rem % per_axis - half;
                    rem /= per_axis;
                    c
                })
                .collect();
            out.push(DyadicCube::new(j, corner));
        }
    }
    out
}

/// Averages of `|f|` over every cube of the grid.
fn abs_averages(f: &GridFunction) -> Result<HashMap<DyadicCube, f64>> {
    let spec = f.spec();
    let vals = f.values();
    let mut out = HashMap::new();
    for c in grid_cubes(spec) {
        let cells = spec.cells_of(&c.to_cube())?;
        let total = sum(cells.iter().map(|&i| vals[i].norm())) * spec.cell_volume();
        out.insert(c.clone(), total / c.volume().to_f64());
    }
    Ok(out)
}

/// The decomposition invariants, with maximality and disjointness checked
/// against a brute-force scan of every dyadic cube in the grid.
pub fn czd_checks(f: &GridFunction, dec: &CZDecomposition) -> Result<Vec<Check>> {
    let spec = f.spec();
    let lambda = dec.threshold();
    let d = spec.dim() as i32;
    let l1 = f.l1();
    let mut out = Vec::new();

    let recon = dec.good().add(dec.bad())?;
    let err = recon.values().iter().zip(f.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    out.push(Check::new("czd-identity", err <= 1e-12 * f.linf().max(1.0), format!("max cell error {err:e}")));

    let g_inf = dec.good().linf();
    let cap = 2f64.powi(d) * lambda;
    out.push(Check::new("czd-good-bounded", g_inf <= cap, format!("||g||_inf = {g_inf} vs 2^d lambda = {cap}")));

    let g1 = dec.good().l1();
    out.push(Check::new("czd-good-l1", g1 <= l1 * (1.0 + 1e-12), format!("||g||_1 = {g1} vs ||f||_1 = {l1}")));

    let mut worst_mean: f64 = 0.0;
    let mut leaks = 0usize;
    for (c, part) in dec.bad_parts()? {
        worst_mean = worst_mean.max(part.integral().norm());
        let inside: HashSet<usize> = spec.cells_of(&c.to_cube())?.into_iter().collect();
        leaks += part.values().iter().enumerate().filter(|(i, v)| !inside.contains(i) && v.norm() != 0.0).count();
    }
    out.push(Check::new("czd-bad-mean-zero", worst_mean < 1e-12, format!("max |integral f_I| = {worst_mean:e}")));
    out.push(Check::new("czd-bad-support", leaks == 0, format!("{leaks} cells outside their cube")));

    let e = dec.measure_e();
    out.push(Check::new("czd-exceptional-measure", e <= l1 / lambda, format!("m(E) = {e} vs ||f||_1/lambda = {}", l1 / lambda)));

    let selected: HashSet<&DyadicCube> = dec.cubes().iter().collect();
    let top = spec.box_exp() as i32;
    let avg = abs_averages(f)?;
    let mut problems = Vec::new();
    for c in dec.cubes() {
        let a = avg.get(c).copied().unwrap_or(f64::NAN);
        if !(a > lambda) {
            problems.push(format!("{c} has average {a}"));
        }
        if c.scale() < top && avg[&c.parent()] > lambda {
            problems.push(format!("{c} has a parent above threshold"));
        }
        let mut p = c.clone();
        while p.scale() < top {
            p = p.parent();
            if selected.contains(&p) {
                problems.push(format!("{c} lies inside selected {p}"));
            }
        }
    }
    for (c, a) in &avg {
        if *a > lambda {
            let mut p = c.clone();
            while !selected.contains(&p) && p.scale() < top {
                p = p.parent();
            }
            if !selected.contains(&p) {
                problems.push(format!("{c} is above threshold but uncovered"));
            }
        }
    }
    problems.sort();
    out.push(Check::new(
        "czd-maximal-disjoint",
        problems.is_empty(),
        problems.first().cloned().unwrap_or_else(|| format!("{} cubes", dec.cubes().len())),
    ));
    Ok(out)
}

pub fn counterexample_checks(ms: &[u32]) -> Result<(Vec<CounterexampleRow>, Vec<Check>)> {
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &m in ms {
        let row = counterexample_chain(m)?;
        checks.push(Check::new(
            format!("counterexample-M{m}"),
            row.holds(1e-12),
            format!("max cell error {:e}, weak quasinorm {}", row.max_cell_error, row.weak_quasinorm),
        ));
        rows.push(row);
    }
    Ok((rows, checks))
}

/// Steps of the `F` escape sequence printed by `decayfit`.
pub const ESCAPE_REPORT_M: u32 = 6;

pub struct DecayRun {
    pub report: DecayFitReport,
    /// `sup F(I_1, ..., I_6; M)` over the escape family for `M = 1..=6`.
    pub escape_sup: Vec<f64>,
}

pub fn run_decayfit(k: &CompactCZKernel) -> Result<DecayRun> {
    let spec = standard_decay_grid(k.dim)?;
    let op = discretize(k, spec, default_policy(k))?;
    let report = decay_fit(&op, &PairSweep::standard(k.dim))?;
    let escape_sup = (1..=ESCAPE_REPORT_M)
        .map(|m| f_six_escape_sup(m, k.dim, 1, &k.triple, &k.triple))
        .collect::<Result<_>>()?;
    Ok(DecayRun { report, escape_sup })
}

/// Slope in `rdist` at most `-d` with residual RMS below `0.2`, slope in
/// `ecc` at least `1/2`.
pub fn decay_checks(d: usize, r: &DecayFitReport) -> Vec<Check> {
    let (rd, ec) = (r.rdist_fit, r.ecc_fit);
    vec![
        Check::new("decay-rdist-slope", rd.slope <= -(d as f64), format!("slope {:.6} vs -{d}", rd.slope)),
        Check::new("decay-rdist-rms", rd.rms < 0.2, format!("residual RMS {:.4} (natural log) vs 0.2", rd.rms)),
        Check::new("decay-ecc-slope", ec.slope >= 0.5, format!("slope {:.6} vs 0.5", ec.slope)),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Interaction,
    Atom,
}

/// Mean-zero interaction exponent target `1/2 + 1/d` and its tolerance.
pub fn interaction_target(d: usize) -> f64 {
    0.5 + 1.0 / d as f64
}
pub const INTERACTION_SLOPE_TOLERANCE: f64 = 0.1;

pub fn run_sweep(kind: SweepKind, d: usize, order: u32) -> Result<(Vec<SweepRow>, Vec<Check>)> {
    let rows = match kind {
        SweepKind::Interaction => sweep_interaction(d, order)?,
        SweepKind::Atom => sweep_atom(d, order)?,
    };
    let bad = rows.iter().filter(|r| !r.ratio.is_finite()).count();
    let mut checks = vec![Check::new("sweep-finite", bad == 0, format!("{} rows, {bad} non-finite ratios", rows.len()))];
    if kind == SweepKind::Interaction {
        let fit = sweep_slope(&rows, INTERACTION_MZ_ECC)?;
        let need = interaction_target(d) - INTERACTION_SLOPE_TOLERANCE;
        checks.push(Check::new(
            "sweep-meanzero-ecc-slope",
            fit.slope >= need,
            format!("slope {:.6} vs {need:.2}", fit.slope),
        ));
    }
    Ok((rows, checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lagom::czd::decompose;
    use lagom::kernel::{compact_1d, control_1d};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn m_lists() {
        assert_eq!(parse_m_list("1..6").unwrap(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(parse_m_list("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_m_list("1, 3,5").unwrap(), vec![1, 3, 5]);
        assert_eq!(parse_m_list("4").unwrap(), vec![4]);
        for bad in ["", "3..1", "a", "1..x"] {
            assert!(parse_m_list(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn policies() {
        assert_eq!(default_policy(&compact_1d()), DiagonalPolicy::Zero);
        assert_eq!(default_policy(&CompactCZKernel::constant_kernel(1, 1.0)), DiagonalPolicy::ExcludeRing(1));
    }

    #[test]
    fn grid_cube_count() {
        let spec = GridSpec::new(1, 1, 1).unwrap();
        // scales -1, 0, 1 with 8, 4, 2 cubes
        assert_eq!(grid_cubes(spec).len(), 14);
    }

    #[test]
    fn czd_checks_pass_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2] {
            let (f, t) = random_czd_case(d, &mut rng).unwrap();
            let checks = czd_checks(&f, &decompose(&f, t).unwrap()).unwrap();
            assert!(all_pass(&checks), "{checks:?}");
        }
    }

    #[test]
    fn czd_checks_catch_orthant_overflow() {
        // an orthant average above the threshold makes g unbounded
        let spec = GridSpec::new(1, 1, 1).unwrap();
        let f = GridFunction::from_real(spec, vec![9.0; 8]).unwrap();
        let checks = czd_checks(&f, &decompose(&f, 1.0).unwrap()).unwrap();
        let g = checks.iter().find(|c| c.name == "czd-good-bounded").unwrap();
        assert!(!g.pass);
    }

    #[test]
    fn control_profile_check_direction() {
        let run = ProfileRun { kernel: control_1d(), b: 3, r: 2, ms: vec![1, 2], policy: None, timing: false };
        let p = run_profile(&run).unwrap();
        let checks = profile_checks(&run.kernel, &p);
        assert_eq!(checks.len(), 2);
        assert_eq!(checks[1].name, "profile-standard-persists");
    }

    #[test]
    fn check_lines() {
        assert_eq!(Check::new("x", true, "ok").to_string(), "PASS x: ok");
        assert_eq!(Check::new("y", false, "bad").to_string(), "FAIL y: bad");
    }
}
