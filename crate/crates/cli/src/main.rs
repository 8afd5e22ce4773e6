use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zipper_core::error::Error;
use zipper_core::io::{
    measure_from_json, measure_to_json, spectrum_to_doc, spectrum_to_json, to_json, zipper_from_json, zipper_to_json,
    SpectralPointDoc,
};
use zipper_core::matrix_core::{frobenius, identity, CMatrix};
use zipper_core::measures::{caratheodory, spectral_measure_finite, zipper_from_measure, StopReason};
use zipper_core::oscillation::{
    bands, default_grid, spectrum_by_oscillation_run, spectrum_periodic_run, OscillationRun, REFINE_TOL,
};
use zipper_core::verify::{run_suite, Fault, Module};
use zipper_core::weyl::{f_matrix, weyl_disc};
use zipper_core::zipper::{assemble_finite, assemble_periodic, dense_spectrum, Ensemble, Flavor, SpectrumResult, Zipper};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "zipper", version, about = "Block-CMV zipper operators: generation, spectra, Weyl discs, measures, bands")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for random instances and the verify suite.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Refinement / merge tolerance for phase-based spectra.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Grid size: phase grid for `spectrum`, k-grid for `bands`, angles per radius for `weyl`.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random zipper instance as JSON.
    Gen {
        #[arg(short = 'l', long = "l", default_value_t = 1)]
        l: usize,
        #[arg(short = 'n', long = "n", default_value_t = 4)]
        n: usize,
        #[arg(long, value_enum, default_value_t = FlavorArg::Finite)]
        flavor: FlavorArg,
        #[arg(long, value_enum, default_value_t = EnsembleArg::HaarGauge)]
        ensemble: EnsembleArg,
    },
    /// Eigenvalues by the oscillation count, the dense oracle, or both (with a comparison).
    Spectrum {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Oscillation)]
        method: Method,
    },
    /// Weyl-disc sweep over a polar z-grid.
    ///
    /// CSV columns: z_re, z_im, abs_z, n, radius_norm (‖R^z‖), bound (8/(N(1−|z|²)²)),
    /// radius_reflected_norm (‖R^{1/z̄}‖), diameter_sq, center_re, center_im (normalized trace of S^z).
    Weyl {
        input: PathBuf,
        /// Number of radii, evenly spaced in [r-min, r-max].
        #[arg(long, default_value_t = 5)]
        radii: usize,
        #[arg(long, default_value_t = 0.1)]
        r_min: f64,
        #[arg(long, default_value_t = 0.9)]
        r_max: f64,
    },
    /// Zipper ↔ matrix measure conversions.
    Measure {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Direction::Roundtrip)]
        direction: Direction,
        /// Gram–Schmidt steps for `to-zipper` (default: until the measure degenerates, at most 64).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Band structure of a periodic zipper on the Bloch grid.
    ///
    /// CSV columns: k, phase_1, …, phase_{NL} with eigenphases in [0, 2π) sorted ascending.
    Bands { input: PathBuf },
    /// Run the invariant suite.
    Verify {
        /// Restrict to one module (matrix_core, scattering, zipper, transfer, weyl, measures, oscillation, cli).
        #[arg(long)]
        module: Option<String>,
        /// Perturb one entry of every checked scattering block by this amount.
        #[arg(long)]
        inject_fault: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Finite,
    Periodic,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleArg {
    Cmv,
    HaarGauge,
    Free,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Oscillation,
    Dense,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    ToMeasure,
    ToZipper,
    Roundtrip,
}

enum Failure {
    Core(Error),
    Io(String),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: cannot configure {w} workers: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_VALIDATION })
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Verify(report)) => {
            print!("{report}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.output {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    let text = match &cli.command {
        Command::Gen { l, n, flavor, ensemble } => {
            let flavor = match flavor {
                FlavorArg::Finite => Flavor::Finite,
                FlavorArg::Periodic => Flavor::Periodic,
            };
            let ensemble = match ensemble {
                EnsembleArg::Cmv => Ensemble::Cmv,
                EnsembleArg::HaarGauge => Ensemble::HaarGauge,
                EnsembleArg::Free => Ensemble::Free,
            };
            zipper_to_json(&ensemble.zipper(*l, *n, flavor, common.seed)?)
        }
        Command::Spectrum { input, method } => spectrum(common, &zipper_from_json(&read(input)?)?, *method)?,
        Command::Weyl { input, radii, r_min, r_max } => {
            weyl(common, &zipper_from_json(&read(input)?)?, *radii, *r_min, *r_max)?
        }
        Command::Measure { input, direction, steps } => measure(&read(input)?, *direction, *steps)?,
        Command::Bands { input } => {
            let z = zipper_from_json(&read(input)?)?;
            bands(&z, common.grid.unwrap_or(32), common.tol.unwrap_or(REFINE_TOL))?.to_csv()
        }
        Command::Verify { module, inject_fault } => {
            let filter = match module.as_deref() {
                None | Some("all") => None,
                Some(name) => Some(
                    Module::parse(name)
                        .ok_or_else(|| Failure::Core(Error::InvalidInput(format!("unknown module {name:?}"))))?,
                ),
            };
            let report = run_suite(filter, common.seed, inject_fault.map(Fault::CorruptBlock));
            let text = format!("{report}\n");
            if !report.passed() {
                if let Some(p) = &common.output {
                    emit(common, &text)?;
                    eprintln!("verification failed; report written to {}", p.display());
                }
                return Err(Failure::Verify(text));
            }
            text
        }
    };
    emit(common, &text)
}

#[derive(Serialize)]
struct Comparison {
    oscillation: Vec<SpectralPointDoc>,
    dense: Vec<SpectralPointDoc>,
    max_discrepancy: f64,
    multiplicities_agree: bool,
    grid_attempts: Vec<(usize, usize)>,
}

fn oscillation_run(common: &Common, z: &Zipper) -> Result<OscillationRun, Error> {
    let grid = common.grid.unwrap_or_else(|| default_grid(z));
    let tol = common.tol.unwrap_or(REFINE_TOL);
    let run = match z.flavor() {
        Flavor::Periodic => spectrum_periodic_run(z, grid, tol),
        _ => spectrum_by_oscillation_run(z, grid, tol),
    }?;
    if run.attempts.len() > 1 {
        for (grid, found) in &run.attempts {
            eprintln!("oscillation grid {grid}: {found} crossings");
        }
    }
    Ok(run)
}

fn dense(z: &Zipper) -> Result<SpectrumResult, Error> {
    let op = match z.flavor() {
        Flavor::Periodic => assemble_periodic(z)?,
        _ => assemble_finite(z)?,
    };
    dense_spectrum(&op)
}

fn spectrum(common: &Common, z: &Zipper, method: Method) -> Result<String, Error> {
    Ok(match method {
        Method::Oscillation => spectrum_to_json(&oscillation_run(common, z)?.spectrum),
        Method::Dense => spectrum_to_json(&dense(z)?),
        Method::Both => {
            let run = oscillation_run(common, z)?;
            let d = dense(z)?;
            let (max_discrepancy, multiplicities_agree) = run.spectrum.compare(&d);
            to_json(&Comparison {
                oscillation: spectrum_to_doc(&run.spectrum),
                dense: spectrum_to_doc(&d),
                max_discrepancy,
                multiplicities_agree,
                grid_attempts: run.attempts,
            })
        }
    })
}

fn weyl(common: &Common, z: &Zipper, radii: usize, r_min: f64, r_max: f64) -> Result<String, Error> {
    if !(r_min > 0.0 && r_max < 1.0 && r_min <= r_max) {
        return Err(Error::OutsideDisc(Complex64::new(if r_min > 0.0 { r_max } else { r_min }, 0.0)));
    }
    let angles = common.grid.unwrap_or(8).max(1);
    let radii = radii.max(1);
    let points: Vec<Complex64> = (0..radii)
        .flat_map(|i| {
            let r = if radii == 1 { r_max } else { r_min + (r_max - r_min) * i as f64 / (radii - 1) as f64 };
            (0..angles).map(move |j| Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / angles as f64))
        })
        .collect();
    let l = z.l() as f64;
    let rows = points
        .par_iter()
        .map(|&w| {
            let d = weyl_disc(z, w)?;
            let c = d.center.trace() / l;
            Ok(format!(
                "{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                w.re,
                w.im,
                w.norm(),
                z.n(),
                zipper_core::matrix_core::op_norm(&d.radius_left),
                d.radius_bound(),
                zipper_core::matrix_core::op_norm(&d.radius_right),
                d.diameter_sq(),
                c.re,
                c.im
            ))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut out = String::from(
        "z_re,z_im,abs_z,n,radius_norm,bound,radius_reflected_norm,diameter_sq,center_re,center_im\n",
    );
    out.extend(rows);
    Ok(out)
}

#[derive(Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
enum StopDoc {
    Completed,
    DegenerateGram { step: usize },
}

impl From<StopReason> for StopDoc {
    fn from(s: StopReason) -> Self {
        match s {
            StopReason::Completed => StopDoc::Completed,
            StopReason::DegenerateGram { step } => StopDoc::DegenerateGram { step },
        }
    }
}

#[derive(Serialize)]
struct RoundtripReport {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "N")]
    n: usize,
    stop: StopDoc,
    /// max_n ‖α_n(recovered) − α_n(original)‖; meaningful in the CMV gauge.
    alpha_error: f64,
    /// Largest gap between singular values of recovered and original α_n; gauge independent.
    alpha_singular_value_error: f64,
    /// max over sample points of ‖F_rebuilt − F_original‖ / (1 + ‖F_original‖).
    f_match_error: f64,
    measure_f_match_error: f64,
    sample_points: usize,
    orthonormality_defect: f64,
    recursion_residual: f64,
}

fn sample_points() -> Vec<Complex64> {
    (0..10).map(|j| Complex64::from_polar(0.15 + 0.075 * j as f64, 2.399963229728653 * j as f64)).collect()
}

fn rel(a: &CMatrix, b: &CMatrix) -> f64 {
    frobenius(&(a - b)) / (1.0 + frobenius(b))
}

fn singular_gap(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut sa: Vec<f64> = a.singular_values().iter().copied().collect();
    let mut sb: Vec<f64> = b.singular_values().iter().copied().collect();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn measure(text: &str, direction: Direction, steps: Option<usize>) -> Result<String, Error> {
    match direction {
        Direction::ToMeasure => Ok(measure_to_json(&spectral_measure_finite(&zipper_from_json(text)?, None)?)),
        Direction::ToZipper => {
            let mu = measure_from_json(text)?;
            let rec = zipper_from_measure(&mu, &identity(mu.l()), steps.unwrap_or(64))?;
            if let StopReason::DegenerateGram { step } = rec.gram.stop {
                eprintln!("Gram–Schmidt stopped at step {step}");
            }
            match rec.finite() {
                Ok(z) => Ok(zipper_to_json(&z)),
                Err(_) => Ok(zipper_to_json(&rec.zipper)),
            }
        }
        Direction::Roundtrip => {
            let z = zipper_from_json(text)?;
            let v = z
                .boundary_v()
                .ok_or(Error::WrongFlavor { expected: "finite", found: z.flavor().name() })?
                .clone();
            let mu = spectral_measure_finite(&z, None)?;
            let u = z.boundary_u().expect("finite zipper has U").clone();
            let rec = zipper_from_measure(&mu, &u, z.n() + 1)?;
            let rebuilt = rec.finite()?;
            let mut alpha_error: f64 = 0.0;
            let mut sv_error: f64 = 0.0;
            for n in 2..=z.n() {
                let (a, b) = (z.block(n).expect("present").alpha(), rebuilt.block(n).expect("present").alpha());
                alpha_error = alpha_error.max(frobenius(&(a - b)));
                sv_error = sv_error.max(singular_gap(a, b));
            }
            let vr = rebuilt.boundary_v().expect("finite").clone();
            let mut f_err: f64 = 0.0;
            let mut mu_err: f64 = 0.0;
            for w in sample_points() {
                let f = f_matrix(&z, w, &v)?;
                f_err = f_err.max(rel(&f_matrix(&rebuilt, w, &vr)?, &f));
                mu_err = mu_err.max(rel(&caratheodory(&mu, w)?, &f));
            }
            Ok(to_json(&RoundtripReport {
                l: z.l(),
                n: z.n(),
                stop: rec.gram.stop.into(),
                alpha_error,
                alpha_singular_value_error: sv_error,
                f_match_error: f_err,
                measure_f_match_error: mu_err,
                sample_points: sample_points().len(),
                orthonormality_defect: rec.gram.orthonormality_defect,
                recursion_residual: rec.gram.recursion_residual,
            }))
        }
    }
}
