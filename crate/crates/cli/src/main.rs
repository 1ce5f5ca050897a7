use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lagom::bump::{write_sweep_csv, DEFAULT_SWEEP_ORDER};
use lagom::config::{kernel_from_config, Config};
use lagom::czd::decompose;
use lagom::grid::GridFunction;
use lagom::kernel::DiagonalPolicy;
use lagom::Result;
use lagom_cli::experiments::{
    all_pass, counterexample_checks, czd_checks, decay_checks, fmt_list, parse_m_list, profile_checks,
    random_czd_case, run_decayfit, run_profile, run_sweep, Check, ProfileRun, SweepKind,
};

/// Lagom projections and compact Calderón-Zygmund operators on dyadic grids.
/// Every command exits with status 0 exactly when all of its checks pass.
#[derive(Parser)]
#[command(name = "lagom", version)]
struct Cli {
    /// `key=value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ||P_M^perp T|| and the weak-L1 sup over the test family for each M.
    Profile(ProfileArgs),
    /// Calderón-Zygmund decomposition of a stored or random grid function.
    Czd(CzdArgs),
    /// The projected counterexample chain against its closed form.
    Counterexample {
        /// `a..b`, `a,b,c` or one value.
        #[arg(long = "M", default_value = "1..6")]
        m: String,
    },
    /// Log-log decay fit of Haar pairings in ecc and rdist.
    Decayfit {
        #[arg(long)]
        kernel: Option<String>,
        /// Pairings as `ecc,rdist,value`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bump interaction bounds against eccentricity and separation.
    #[command(alias = "sweep-lemma31")]
    SweepInteraction(SweepArgs),
    /// Atom against bump bounds.
    #[command(alias = "sweep-lemma32")]
    SweepAtom(SweepArgs),
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long = "B")]
    b: Option<u32>,
    #[arg(long = "R")]
    r: Option<u32>,
    #[arg(long = "M")]
    m: Option<String>,
    /// CSV destination; stdout when absent. A `.meta` file is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// `zero` or `ring-<r>`; defaults by kernel symmetry.
    #[arg(long)]
    diagonal: Option<String>,
    /// Record wall time per row (makes the CSV nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct CzdArgs {
    /// Grid function in the binary format of `GridFunction::write_binary`.
    #[arg(long, conflicts_with = "random")]
    input: Option<PathBuf>,
    /// Seeded random sparse input on the `(d, 2, 2)` grid instead of a file.
    #[arg(long)]
    random: Option<u64>,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long)]
    threshold: Option<f64>,
    /// Selected cubes as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn missing(what: &str) -> lagom::LagomError {
    lagom::LagomError::InvalidParameter(format!("{what} is required (flag or config key)"))
}

fn profile(cfg: &mut Config, a: ProfileArgs) -> Result<Vec<Check>> {
    if let Some(k) = a.kernel {
        cfg.set("kernel.name", k);
    }
    let kernel = kernel_from_config(cfg)?;
    let b = a.b.map(Ok).or_else(|| cfg.parsed("grid.B").transpose()).ok_or_else(|| missing("--B"))??;
    let r = a.r.map(Ok).or_else(|| cfg.parsed("grid.R").transpose()).ok_or_else(|| missing("--R"))??;
    let ms = parse_m_list(a.m.as_deref().or(cfg.get("profile.M")).unwrap_or("1..6"))?;
    let policy = a
        .diagonal
        .as_deref()
        .or(cfg.get("profile.diagonal"))
        .map(str::parse::<DiagonalPolicy>)
        .transpose()?;
    let timing = a.timing || cfg.parsed::<bool>("profile.timing")?.unwrap_or(false);
    let out = a.out.or_else(|| cfg.get("profile.out").map(PathBuf::from));
    let svg = a.svg.or_else(|| cfg.get("profile.svg").map(PathBuf::from));

    let run = ProfileRun { kernel, b, r, ms, policy, timing };
    let p = run_profile(&run)?;
    match &out {
        Some(path) => {
            let mut w = create(path)?;
            p.write_csv(&mut w)?;
            w.flush()?;
            let mut m = create(&sidecar(path))?;
            p.write_metadata(&mut m)?;
            m.flush()?;
        }
        None => p.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = svg {
        let mut w = create(&path)?;
        p.write_svg(&mut w)?;
        w.flush()?;
    }
    Ok(profile_checks(&run.kernel, &p))
}

fn czd(cfg: &Config, a: CzdArgs) -> Result<Vec<Check>> {
    let input = a.input.or_else(|| cfg.get("czd.input").map(PathBuf::from));
    let threshold = match a.threshold {
        Some(t) => Some(t),
        None => cfg.parsed("czd.threshold")?,
    };
    let (f, threshold) = match (input, a.random) {
        (Some(path), _) => {
            let f = GridFunction::read_binary(BufReader::new(File::open(path)?))?;
            (f, threshold.ok_or_else(|| missing("--threshold"))?)
        }
        (None, Some(seed)) => {
            let (f, t) = random_czd_case(a.d, &mut ChaCha8Rng::seed_from_u64(seed))?;
            (f, threshold.unwrap_or(t))
        }
        (None, None) => return Err(missing("--input or --random")),
    };
    let dec = decompose(&f, threshold)?;
    println!(
        "threshold {threshold}: {} cubes, m(E) = {}, m(E~) = {}",
        dec.cubes().len(),
        dec.measure_e(),
        dec.measure_e_tilde()
    );
    if let Some(path) = a.out {
        let mut w = create(&path)?;
        dec.write_cubes_csv(&mut w)?;
        w.flush()?;
    }
    czd_checks(&f, &dec)
}

fn counterexample(m: &str) -> Result<Vec<Check>> {
    let (rows, checks) = counterexample_checks(&parse_m_list(m)?)?;
    println!("M,max_cell_error,weak_quasinorm");
    for r in rows {
        println!("{},{:e},{}", r.m, r.max_cell_error, r.weak_quasinorm);
    }
    Ok(checks)
}

fn decayfit(cfg: &mut Config, kernel: Option<String>, out: Option<PathBuf>) -> Result<Vec<Check>> {
    if let Some(k) = kernel {
        cfg.set("kernel.name", k);
    }
    let k = kernel_from_config(cfg)?;
    let run = run_decayfit(&k)?;
    let r = &run.report;
    println!("{}", r.description);
    println!("ecc fit: slope {:.6}, residual RMS {:.4}", r.ecc_fit.slope, r.ecc_fit.rms);
    println!("rdist fit: slope {:.6}, residual RMS {:.4}", r.rdist_fit.slope, r.rdist_fit.rms);
    println!("escape sup of F, M = 1..{}: {}", run.escape_sup.len(), fmt_list(&run.escape_sup));
    if let Some(path) = out.or_else(|| cfg.get("decayfit.out").map(PathBuf::from)) {
        let mut w = create(&path)?;
        r.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(decay_checks(k.dim, r))
}

fn sweep(cfg: &Config, kind: SweepKind, a: SweepArgs) -> Result<Vec<Check>> {
    let d = match a.d {
        Some(d) => d,
        None => cfg.parsed("sweep.d")?.unwrap_or(1),
    };
    let order = match a.order {
        Some(o) => o,
        None => cfg.parsed("sweep.order")?.unwrap_or(DEFAULT_SWEEP_ORDER),
    };
    let (rows, checks) = run_sweep(kind, d, order)?;
    match a.out.or_else(|| cfg.get("sweep.out").map(PathBuf::from)) {
        Some(path) => {
            let mut w = create(&path)?;
            write_sweep_csv(&rows, &mut w)?;
            w.flush()?;
        }
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(checks)
}

fn run(cli: Cli) -> Result<Vec<Check>> {
    let mut cfg = match &cli.config {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Profile(a) => profile(&mut cfg, a),
        Command::Czd(a) => czd(&cfg, a),
        Command::Counterexample { m } => counterexample(&m),
        Command::Decayfit { kernel, out } => decayfit(&mut cfg, kernel, out),
        Command::SweepInteraction(a) => sweep(&cfg, SweepKind::Interaction, a),
        Command::SweepAtom(a) => sweep(&cfg, SweepKind::Atom, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(checks) => {
            for c in &checks {
                eprintln!("{c}");
            }
            if all_pass(&checks) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
