//! Browser entry points for the static demo page in `www/`. Every input is
//! a one-dimensional grid function given as text, one sample per cell.

use wasm_bindgen::prelude::*;

use lagom::czd::decompose;
use lagom::grid::{GridFunction, GridSpec};
use lagom::paraproduct::counterexample_chain;
use lagom::wavelet::LagomProjector;
use lagom::{LagomError, Result};

fn js(e: LagomError) -> JsError {
    JsError::new(&e.to_string())
}

/// Samples separated by commas or whitespace, checked against the cell
/// count of the `(1, b, r)` grid.
fn parse_samples(text: &str, b: u32, r: u32) -> Result<GridFunction> {
    let spec = GridSpec::new(1, b, r)?;
    let vals = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| LagomError::Parse(format!("sample `{t}`"))))
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != spec.cell_count() {
        return Err(LagomError::Parse(format!(
            "{} samples for a grid of {} cells",
            vals.len(),
            spec.cell_count()
        )));
    }
    GridFunction::from_real(spec, vals)
}

fn counterexample_csv(max_m: u32) -> Result<String> {
    let mut out = String::from("M,max_cell_error,weak_quasinorm\n");
    for m in 1..=max_m {
        let row = counterexample_chain(m)?;
        out.push_str(&format!("{},{:e},{}\n", row.m, row.max_cell_error, row.weak_quasinorm));
    }
    Ok(out)
}

fn czd_report(samples: &str, b: u32, r: u32, threshold: f64) -> Result<String> {
    let f = parse_samples(samples, b, r)?;
    let dec = decompose(&f, threshold)?;
    let mut csv = Vec::new();
    dec.write_cubes_csv(&mut csv)?;
    Ok(format!(
        "{} cubes, m(E) = {}, ||f||_1 / threshold = {}\n{}",
        dec.cubes().len(),
        dec.measure_e(),
        f.l1() / threshold,
        String::from_utf8_lossy(&csv)
    ))
}

fn split(samples: &str, b: u32, r: u32, m: u32) -> Result<Vec<f64>> {
    let f = parse_samples(samples, b, r)?;
    let p = LagomProjector::new(f.spec(), m)?;
    let mut out = p.project(&f)?.real_parts();
    out.extend(p.complement(&f)?.real_parts());
    Ok(out)
}

/// `M,max_cell_error,weak_quasinorm` for `M = 1..=max_m` of the projected
/// counterexample chain.
#[wasm_bindgen(js_name = counterexampleTable)]
pub fn counterexample_table(max_m: u32) -> std::result::Result<String, JsError> {
    counterexample_csv(max_m).map_err(js)
}

/// A summary line followed by the selected cubes as CSV.
#[wasm_bindgen(js_name = czDecompose)]
pub fn cz_decompose(samples: &str, b: u32, r: u32, threshold: f64) -> std::result::Result<String, JsError> {
    czd_report(samples, b, r, threshold).map_err(js)
}

/// `P_M f` followed by `P_M^perp f`, each one value per cell.
#[wasm_bindgen(js_name = lagomSplit)]
pub fn lagom_split(samples: &str, b: u32, r: u32, m: u32) -> std::result::Result<Vec<f64>, JsError> {
    split(samples, b, r, m).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_rows() {
        let csv = counterexample_csv(3).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(2).unwrap().starts_with("2,"));
    }

    #[test]
    fn split_adds_up() {
        // grid (1, 1, 1) has 8 cells
        let text = "0 1 2 3, 4,5,6,7";
        let out = split(text, 1, 1, 1).unwrap();
        for i in 0..8 {
            assert!((out[i] + out[8 + i] - i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_length_and_junk() {
        assert!(parse_samples("1 2 3", 1, 1).is_err());
        assert!(parse_samples("1 2 3 4 5 6 7 x", 1, 1).is_err());
    }

    #[test]
    fn czd_summary() {
        let text = "0 0 0 0 4 0 0 0";
        let report = czd_report(text, 1, 1, 1.0).unwrap();
        assert!(report.starts_with("1 cubes"), "{report}");
        assert!(report.contains("j,k1,mean_re,mean_im"));
    }
}
