//! Dyadic paraproducts `T_b f = sum_J <b, psi_J> <f, phi_J> psi_J` over a
//! finite Haar symbol, their adjoints, and the rank-one operator
//! `f -> <f, psi_[0,1)> chi_[0,1)` whose lagom tails never shrink.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use num_complex::Complex64;

use crate::bump::{make_bump, BumpProfile};
use crate::dyadic::Dyadic;
use crate::error::{LagomError, Result};
use crate::geometry::{Cube, DyadicCube};
use crate::grid::{GridFunction, GridSpec};
use crate::operator::{check_spec, Adjoint, GridOperator};
use crate::sum::ComplexSum;
use crate::wavelet::{analyze, haar_wavelet, synthesize, HaarCoefficients, LagomProjector};

/// The smoothing family `phi_J`, always of unit integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {
    /// `|J|^-1 chi_J`.
    Indicator,
    /// A positive polydecay profile on `J`, normalized in `L^1`.
    Bump(BumpProfile),
}

impl Smoothing {
    pub fn bump(order: u32) -> Result<Self> {
        Ok(Smoothing::Bump(BumpProfile::polydecay(order, 1.0)?))
    }
}

/// A finite Haar symbol `b` together with the smoothing family. Scaling
/// coefficients of `b` are ignored: only wavelets enter the paraproduct.
#[derive(Clone, Debug)]
pub struct ParaproductSymbol {
    b: HaarCoefficients,
    smoothing: Smoothing,
}

impl ParaproductSymbol {
    pub fn new(b: HaarCoefficients, smoothing: Smoothing) -> Result<Self> {
        if let Smoothing::Bump(p) = smoothing {
            if p.is_mean_zero() || p.p != 1.0 {
                return Err(LagomError::InvalidParameter(
                    "paraproduct bumps must be positive and L^1-normalized".into(),
                ));
            }
        }
        Ok(ParaproductSymbol { b, smoothing })
    }

    pub fn indicator(b: HaarCoefficients) -> Self {
        ParaproductSymbol {
            b,
            smoothing: Smoothing::Indicator,
        }
    }

    pub fn b(&self) -> &HaarCoefficients {
        &self.b
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn spec(&self) -> GridSpec {
        self.b.spec()
    }

    /// Number of wavelet coefficients; bounds the rank of `T_b`.
    pub fn coefficient_count(&self) -> usize {
        self.b.entries().len()
    }

    /// `max_Omega (|Omega|^-1 sum_{J in Omega} |<b, psi_J>|^2)^(1/2)` over the
    /// dyadic cubes of the grid.
    pub fn carleson_constant(&self) -> f64 {
        let top = self.spec().box_exp() as i32;
        let mut energy: BTreeMap<DyadicCube, f64> = BTreeMap::new();
        for (cube, _, v) in self.b.entries() {
            let mut c = cube;
            loop {
                *energy.entry(c.clone()).or_insert(0.0) += v.norm_sqr();
                if c.scale() >= top {
                    break;
                }
                c = c.parent();
            }
        }
        energy
            .iter()
            .map(|(c, e)| (e / c.volume().to_f64()).sqrt())
            .fold(0.0, f64::max)
    }

    /// `b` with the wavelets of `D_M` removed.
    pub fn lagom_complement(&self, m: u32) -> Result<Self> {
        let proj = LagomProjector::new(self.spec(), m)?;
        Ok(ParaproductSymbol {
            b: proj.project_coefficients(&self.b, true)?,
            smoothing: self.smoothing,
        })
    }

    /// Same schema as [`HaarCoefficients::write_csv`].
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        self.b.write_csv(w)
    }

    pub fn read_csv(spec: GridSpec, r: impl Read, smoothing: Smoothing) -> Result<Self> {
        Self::new(HaarCoefficients::read_csv(spec, r)?, smoothing)
    }
}

/// `phi_J` for one cube.
#[derive(Clone, Debug)]
enum Phi {
    /// Cells of `J`; the weight is `1 / |J|`.
    Indicator(Vec<usize>, f64),
    Sampled(GridFunction),
}

impl Phi {
    /// `<f, phi_J>`.
    fn pair(&self, f: &GridFunction) -> Result<Complex64> {
        match self {
            Phi::Indicator(cells, w) => {
                let mut acc = ComplexSum::new();
                cells.iter().for_each(|&i| acc.add(f.values()[i]));
                Ok(acc.value() * (w * f.spec().cell_volume()))
            }
            Phi::Sampled(g) => f.inner_product(g),
        }
    }

    /// `out += w phi_J`.
    fn accumulate(&self, w: Complex64, out: &mut GridFunction) {
        match self {
            Phi::Indicator(cells, a) => {
                let v = w * a;
                cells.iter().for_each(|&i| out.values_mut()[i] += v);
            }
            Phi::Sampled(g) => {
                for (o, p) in out.values_mut().iter_mut().zip(g.values()) {
                    *o += w * p.re;
                }
            }
        }
    }
}

/// `T_b` with the smoothing functions precomputed per coefficient cube.
#[derive(Clone, Debug)]
pub struct Paraproduct {
    symbol: ParaproductSymbol,
    /// `(J, [(type, beta)], phi_J)` sorted by cube.
    terms: Vec<(DyadicCube, Vec<(usize, Complex64)>, Phi)>,
}

impl Paraproduct {
    pub fn new(symbol: ParaproductSymbol) -> Result<Self> {
        let spec = symbol.spec();
        let mut grouped: BTreeMap<DyadicCube, Vec<(usize, Complex64)>> = BTreeMap::new();
        for (cube, i, v) in symbol.b.entries() {
            grouped.entry(cube).or_default().push((i, v));
        }
        let mut terms = Vec::with_capacity(grouped.len());
        for (cube, betas) in grouped {
            let phi = phi_for(&cube.to_cube(), symbol.smoothing, spec)?;
            terms.push((cube, betas, phi));
        }
        Ok(Paraproduct { symbol, terms })
    }

    pub fn symbol(&self) -> &ParaproductSymbol {
        &self.symbol
    }
}

fn phi_for(cube: &Cube, smoothing: Smoothing, spec: GridSpec) -> Result<Phi> {
    match smoothing {
        Smoothing::Indicator => Ok(Phi::Indicator(spec.cells_of(cube)?, 1.0 / cube.volume().to_f64())),
        Smoothing::Bump(p) => Ok(Phi::Sampled(make_bump(cube, p, spec)?.grid().clone())),
    }
}

impl GridOperator for Paraproduct {
    fn spec(&self) -> GridSpec {
        self.symbol.spec()
    }

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        check_spec(self.spec(), f)?;
        let mut c = HaarCoefficients::zeros(self.spec());
        for (cube, betas, phi) in &self.terms {
            let avg = phi.pair(f)?;
            for &(i, beta) in betas {
                c.set(cube, i, beta * avg)?;
            }
        }
        Ok(synthesize(&c))
    }

    fn apply_adjoint(&self, f: &GridFunction) -> Result<GridFunction> {
        check_spec(self.spec(), f)?;
        let a = analyze(f);
        let mut out = GridFunction::zeros(self.spec());
        for (cube, betas, phi) in &self.terms {
            let mut w = ComplexSum::new();
            for &(i, beta) in betas {
                w.add(beta.conj() * a.get(cube, i)?);
            }
            phi.accumulate(w.value(), &mut out);
        }
        Ok(out)
    }
}

/// `||P_M^perp (T_b f) - T_{P_M^perp b} f||_2`.
pub fn lagom_commutation_check(sym: &ParaproductSymbol, m: u32, f: &GridFunction) -> Result<f64> {
    let proj = LagomProjector::new(sym.spec(), m)?;
    let lhs = proj.complement(&Paraproduct::new(sym.clone())?.apply(f)?)?;
    let rhs = Paraproduct::new(sym.lagom_complement(m)?)?.apply(f)?;
    Ok(lhs.sub(&rhs)?.l2())
}

/// The unit interval `[0, 1)` as a dyadic cube.
fn unit_interval() -> DyadicCube {
    DyadicCube::unit(1)
}

/// `T = T_b^*` with `b = psi_[0,1)` and indicator smoothing, so that
/// `T f = <f, psi_[0,1)> chi_[0,1)`. One-dimensional grids only.
pub fn counterexample_operator(spec: GridSpec) -> Result<Adjoint<Paraproduct>> {
    if spec.dim() != 1 {
        return Err(LagomError::DimensionMismatch(spec.dim(), 1));
    }
    let mut b = HaarCoefficients::zeros(spec);
    b.set(&unit_interval(), 1, Complex64::new(1.0, 0.0))?;
    Ok(Adjoint(Paraproduct::new(ParaproductSymbol::indicator(b))?))
}

/// Grid resolution of the counterexample chain.
pub const COUNTEREXAMPLE_RES: u32 = 4;

/// One `M` of the counterexample chain.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleRow {
    pub m: u32,
    /// `max_cells |P_M^perp T psi_[0,1) - 2^-M chi_[0,2^M)|`.
    pub max_cell_error: f64,
    /// Weak-`L^1` quasinorm of `P_M^perp T psi_[0,1)`.
    pub weak_quasinorm: f64,
}

impl CounterexampleRow {
    /// Cell-exact closed form and unit quasinorm, both within `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.max_cell_error < tol && (self.weak_quasinorm - 1.0).abs() < tol
    }
}

/// Runs analyze, lagom complement and synthesis on `T psi_[0,1)` over the
/// grid `d = 1, B = M + 2, R = 4` and compares with `2^-M chi_[0,2^M)`.
pub fn counterexample_chain(m: u32) -> Result<CounterexampleRow> {
    let spec = GridSpec::new(1, m + 2, COUNTEREXAMPLE_RES)?;
    let t = counterexample_operator(spec)?;
    let psi = haar_wavelet(&unit_interval(), 1, spec)?;
    let out = LagomProjector::new(spec, m)?.complement(&t.apply(&psi)?)?;
    let span = Dyadic::pow2(m as i32);
    let target_cube = Cube::new(vec![span.half()], span)?;
    let target = GridFunction::indicator(&target_cube, spec)?.scale(Complex64::new(2f64.powi(-(m as i32)), 0.0));
    let max_cell_error = out
        .values()
        .iter()
        .zip(target.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(CounterexampleRow {
        m,
        max_cell_error,
        weak_quasinorm: out.weak_l1_quasinorm(),
    })
}
