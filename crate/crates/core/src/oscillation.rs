//! Matrix Prüfer phases and eigenvalue counting by monotone phase rotation, for
//! finite zippers (W) and periodic ones through the checkerboard doubling (Ŵ),
//! plus Bloch band structures.

use crate::error::{Error, Result};
use crate::matrix_core::{
    block, hermitian_eigen, hermitian_part, identity, l_form, min_singular, op_norm, solve, unitary_eigen,
    zeros, CMatrix, I,
};
use crate::transfer::{propagate, TransferChain};
use crate::zipper::{normalize_phase, Flavor, SpectrumResult, Zipper};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Default bisection width in θ.
pub const REFINE_TOL: f64 = 1e-10;
/// θ shift applied once when φ_N (or the lower half of Ψ̂_N) is numerically singular.
pub const NUDGE: f64 = 1e-12;
/// Default Bloch-grid offset; staggers the two halves of symmetric bands.
pub const BAND_OFFSET: f64 = 0.75;
/// Retries double the grid up to this size. Eigenvectors localized far from site N make
/// W wind through a full turn within a window of width ~ e^{-2N/ξ}, which coarse grids skip.
pub const MAX_GRID: usize = 1 << 16;
const NEGATIVE_SLACK: f64 = 1e-8;
const SINGULAR_TOL: f64 = 1e-12;
/// Grid phase offset (in units of the grid step) keeping grid points off exact eigenvalues.
const GRID_SHIFT: f64 = 0.381_966_011_250_105_1;

/// A Prüfer unitary at z = e^{iθ}.
#[derive(Debug, Clone, PartialEq)]
pub struct PruferPhase {
    pub z: Complex64,
    pub w: CMatrix,
    /// Whether θ had to be nudged off a singular block.
    pub nudged: bool,
}

impl PruferPhase {
    /// Eigenphases in [0, 2π), ascending.
    pub fn phases(&self) -> Vec<f64> {
        sorted_phases(&self.w)
    }
}

fn sorted_phases(w: &CMatrix) -> Vec<f64> {
    let (values, _) = unitary_eigen(w);
    let mut p: Vec<f64> = values.iter().map(|v| normalize_phase(v.arg())).collect();
    p.sort_by(f64::total_cmp);
    p
}

/// π(Φ) = a b⁻¹ for Φ = (a; b).
pub fn stereographic(frame: &CMatrix) -> Result<CMatrix> {
    let m = frame.ncols();
    if frame.nrows() != 2 * m {
        return Err(Error::DimensionMismatch { expected: 2 * m, found: frame.nrows() });
    }
    let a = frame.rows(0, m).into_owned();
    let b = frame.rows(m, m).into_owned();
    // a b⁻¹ = (b*⁻¹ a*)*
    Ok(solve(&b.adjoint(), &a.adjoint())?.adjoint())
}

/// ‖Φ*𝓛Φ‖ relative to ‖Φ‖².
pub fn lagrangian_defect(frame: &CMatrix) -> f64 {
    let m = frame.ncols();
    let scale = op_norm(frame).powi(2).max(f64::MIN_POSITIVE);
    op_norm(&(frame.adjoint() * l_form(m) * frame)) / scale
}

/// The three characterizations of dim(ΦCᴸ ∩ ΨCᴸ) for 𝓛-Lagrangian frames:
/// principal angles, dim ker Φ*𝓛Ψ, and the multiplicity of 1 in π(Φ)*π(Ψ).
pub fn intersection_dimensions(phi: &CMatrix, psi: &CMatrix, tol: f64) -> Result<[usize; 3]> {
    let m = phi.ncols();
    let qa = phi.clone().qr().q();
    let qb = psi.clone().qr().q();
    let by_angles = (qa.adjoint() * &qb).singular_values().iter().filter(|&&c| c > 1.0 - tol).count();
    let k = qa.adjoint() * l_form(m) * &qb;
    let by_kernel = k.singular_values().iter().filter(|&&s| s < tol.sqrt()).count();
    let w = stereographic(phi)?.adjoint() * stereographic(psi)?;
    let (values, _) = unitary_eigen(&w);
    let by_eigen = values.iter().filter(|v| (*v - 1.0).norm() < tol.sqrt()).count();
    Ok([by_angles, by_kernel, by_eigen])
}

/// 4×4 block interleaving of two 2m×2m matrices.
pub fn checkerboard_sum(t1: &CMatrix, t2: &CMatrix) -> Result<CMatrix> {
    if t1.shape() != t2.shape() || t1.nrows() != t1.ncols() || t1.nrows() % 2 != 0 {
        return Err(Error::SizeMismatch);
    }
    let m = t1.nrows() / 2;
    let mut out = zeros(4 * m, 4 * m);
    for (t, off) in [(t1, 0), (t2, 1)] {
        for i in 0..2 {
            for j in 0..2 {
                let b = block(t, i, j, m);
                out.view_mut(((2 * i + off) * m, (2 * j + off) * m), (m, m)).copy_from(&b);
            }
        }
    }
    Ok(out)
}

/// Ψ̂₀ = ((0,1),(1,0),(1,0),(0,1)) in L×L blocks.
pub fn psi_hat_zero(l: usize) -> CMatrix {
    let id = identity(l);
    let mut p = zeros(4 * l, 2 * l);
    p.view_mut((0, l), (l, l)).copy_from(&id);
    p.view_mut((l, 0), (l, l)).copy_from(&id);
    p.view_mut((2 * l, 0), (l, l)).copy_from(&id);
    p.view_mut((3 * l, l), (l, l)).copy_from(&id);
    p
}

enum Kind {
    Finite { v_star: CMatrix },
    Periodic,
}

/// Evaluates the Prüfer unitary θ ↦ W (or Ŵ) on a fixed transfer chain.
struct PhaseSource {
    chain: TransferChain,
    n: usize,
    kind: Kind,
}

impl PhaseSource {
    fn new(zipper: &Zipper) -> Result<PhaseSource> {
        let kind = match zipper.flavor() {
            Flavor::Finite => Kind::Finite { v_star: zipper.boundary_v().expect("finite zipper has V").adjoint() },
            Flavor::Periodic => Kind::Periodic,
            f => return Err(Error::WrongFlavor { expected: "finite or periodic", found: f.name() }),
        };
        Ok(PhaseSource { chain: TransferChain::from_zipper(zipper)?, n: zipper.n(), kind })
    }

    fn branches(&self) -> usize {
        match self.kind {
            Kind::Finite { .. } => self.chain.l(),
            Kind::Periodic => 2 * self.chain.l(),
        }
    }

    fn try_at(&self, theta: f64) -> Result<std::result::Result<CMatrix, f64>> {
        let z = Complex64::from_polar(1.0, theta);
        let l = self.chain.l();
        match &self.kind {
            Kind::Finite { v_star } => {
                let frame = propagate(&self.chain, z, self.n, true)?;
                let (phi, psi) = (frame.top(), frame.bottom());
                let s = min_singular(&phi);
                if s < SINGULAR_TOL {
                    return Ok(Err(s));
                }
                // ψ φ⁻¹ = (φ*⁻¹ ψ*)*
                Ok(Ok(solve(&phi.adjoint(), &psi.adjoint())?.adjoint() * v_star))
            }
            Kind::Periodic => {
                let mut frame = psi_hat_zero(l);
                for site in 1..=self.n {
                    let t = self.chain.at(site, z)?;
                    let mut inner = zeros(2 * l, 2 * l);
                    inner.rows_mut(0, l).copy_from(&frame.rows(l, l));
                    inner.rows_mut(l, l).copy_from(&frame.rows(3 * l, l));
                    let moved = t * inner;
                    frame.rows_mut(l, l).copy_from(&moved.rows(0, l));
                    frame.rows_mut(3 * l, l).copy_from(&moved.rows(l, l));
                    frame = frame.qr().q();
                }
                let bottom = frame.rows(2 * l, 2 * l).into_owned();
                let s = min_singular(&bottom);
                if s < SINGULAR_TOL {
                    return Ok(Err(s));
                }
                let pi_n = stereographic(&frame)?;
                let pi_0 = stereographic(&psi_hat_zero(l))?;
                Ok(Ok(pi_n.adjoint() * pi_0))
            }
        }
    }

    fn at(&self, theta: f64) -> Result<PruferPhase> {
        let mut smallest = 0.0;
        for (attempt, t) in [theta, theta + NUDGE].into_iter().enumerate() {
            match self.try_at(t)? {
                Ok(w) => return Ok(PruferPhase { z: Complex64::from_polar(1.0, t), w, nudged: attempt > 0 }),
                Err(s) => smallest = s,
            }
        }
        Err(Error::DegeneratePhiBlock(smallest))
    }

    fn phases(&self, theta: f64) -> Result<Vec<f64>> {
        Ok(self.at(theta)?.phases())
    }

    /// Smallest eigenvalue of (1/i)W*∂_θW by central differences.
    fn rotation_speed(&self, theta: f64, h: f64) -> Result<f64> {
        let w = self.at(theta)?.w;
        let d = (self.at(theta + h)?.w - self.at(theta - h)?.w) / Complex64::new(2.0 * h, 0.0);
        let m = w.adjoint() * d * (-I);
        Ok(hermitian_eigen(&hermitian_part(&m)).values[0])
    }
}

/// W = ψ_N φ_N⁻¹ V* for a finite zipper at z on the unit circle.
pub fn prufer(zipper: &Zipper, z: Complex64) -> Result<PruferPhase> {
    check_circle(z)?;
    expect(zipper, Flavor::Finite)?;
    PhaseSource::new(zipper)?.at(z.arg())
}

/// Ŵ = π̂(Ψ̂_N)* π̂(Ψ̂₀) for a periodic zipper at z on the unit circle.
pub fn prufer_periodic(zipper: &Zipper, z: Complex64) -> Result<PruferPhase> {
    check_circle(z)?;
    expect(zipper, Flavor::Periodic)?;
    PhaseSource::new(zipper)?.at(z.arg())
}

/// Smallest eigenvalue of the central-difference estimate of (1/i)W*∂_θW (Ŵ for periodic zippers).
pub fn rotation_positivity_check(zipper: &Zipper, theta: f64, h: f64) -> Result<f64> {
    PhaseSource::new(zipper)?.rotation_speed(theta, h)
}

fn check_circle(z: Complex64) -> Result<()> {
    if (z.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("z = {z} is not on the unit circle")));
    }
    Ok(())
}

fn expect(zipper: &Zipper, flavor: Flavor) -> Result<()> {
    if zipper.flavor() != flavor {
        return Err(Error::WrongFlavor { expected: flavor.name(), found: zipper.flavor().name() });
    }
    Ok(())
}

/// Number of branches passing phase 0 between sorted phase lists, with the largest and
/// smallest displacement of the matched branches.
fn match_step(p: &[f64], q: &[f64]) -> Option<(usize, f64, f64)> {
    let m = p.len();
    'shift: for c in 0..=m {
        let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
        for i in 0..m {
            let d = if i + c < m { q[i + c] - p[i] } else { q[i + c - m] + TAU - p[i] };
            if d < -NEGATIVE_SLACK {
                continue 'shift;
            }
            hi = hi.max(d);
            lo = lo.min(d);
        }
        return Some((c, hi, lo));
    }
    None
}

fn scan(
    src: &PhaseSource,
    (a, pa): (f64, &[f64]),
    (b, pb): (f64, &[f64]),
    refine_tol: f64,
    out: &mut Vec<(f64, usize)>,
) -> Result<()> {
    let step = match_step(pa, pb);
    if b - a <= refine_tol {
        if let Some((c, _, _)) = step {
            if c > 0 {
                out.push((0.5 * (a + b), c));
            }
        }
        return Ok(());
    }
    if let Some((0, d, _)) = step {
        if d < FRAC_PI_2 {
            return Ok(());
        }
    }
    let m = 0.5 * (a + b);
    let pm = src.phases(m)?;
    scan(src, (a, pa), (m, &pm), refine_tol, out)?;
    scan(src, (m, &pm), (b, pb), refine_tol, out)
}

/// Outcome of a crossing count, including grid retries.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationRun {
    pub spectrum: SpectrumResult,
    pub grid: usize,
    /// (grid size, total crossings) per attempt.
    pub attempts: Vec<(usize, usize)>,
}

fn count_crossings(src: &PhaseSource, grid: usize, refine_tol: f64) -> Result<SpectrumResult> {
    let dt = TAU / grid as f64;
    let theta0 = GRID_SHIFT * dt;
    let thetas: Vec<f64> = (0..grid).map(|j| theta0 + j as f64 * dt).collect();
    let phases = thetas.par_iter().map(|&t| src.phases(t)).collect::<Result<Vec<_>>>()?;
    let found = (0..grid)
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::new();
            let next = if j + 1 == grid { &phases[0] } else { &phases[j + 1] };
            scan(src, (thetas[j], &phases[j]), (thetas[j] + dt, next), refine_tol, &mut out)?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<(f64, usize)> = found.into_iter().flatten().collect();
    Ok(SpectrumResult::from_weighted_phases(items, 10.0 * refine_tol))
}

fn run(src: &PhaseSource, grid: usize, refine_tol: f64, expected: usize) -> Result<OscillationRun> {
    let mut g = grid.max(4 * expected).max(4);
    let mut attempts = Vec::new();
    loop {
        let spectrum = count_crossings(src, g, refine_tol)?;
        attempts.push((g, spectrum.total()));
        if spectrum.total() == expected {
            return Ok(OscillationRun { spectrum, grid: g, attempts });
        }
        if 2 * g > MAX_GRID {
            return Err(Error::CrossingCountMismatch { found: spectrum.total(), expected });
        }
        g *= 2;
    }
}

/// Eigenphase branches of W (or Ŵ) sampled on a uniform θ-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrack {
    pub thetas: Vec<f64>,
    /// Sorted eigenphases in [0, 2π) per grid point.
    pub phases: Vec<Vec<f64>>,
    /// Branches passing phase 0 over the full turn, counted on the grid alone.
    pub crossings: usize,
    /// Smallest matched displacement between adjacent grid points; negative values
    /// (or −∞ when no monotone matching exists) flag a grid that is too coarse.
    pub min_step: f64,
}

pub fn phase_track(zipper: &Zipper, grid: usize) -> Result<PhaseTrack> {
    let src = PhaseSource::new(zipper)?;
    let dt = TAU / grid.max(1) as f64;
    let thetas: Vec<f64> = (0..grid).map(|j| GRID_SHIFT * dt + j as f64 * dt).collect();
    let phases = thetas.par_iter().map(|&t| src.phases(t)).collect::<Result<Vec<_>>>()?;
    let (mut crossings, mut min_step) = (0, f64::INFINITY);
    for j in 0..grid {
        let next = &phases[(j + 1) % grid];
        match match_step(&phases[j], next) {
            Some((c, _, lo)) => {
                crossings += c;
                min_step = min_step.min(lo);
            }
            None => min_step = f64::NEG_INFINITY,
        }
    }
    Ok(PhaseTrack { thetas, phases, crossings, min_step })
}

/// Default θ-grid of 32·N·L points.
pub fn default_grid(zipper: &Zipper) -> usize {
    32 * zipper.n() * zipper.l()
}

/// Eigenvalues of a finite zipper from upward crossings of 1 by the eigenvalues of W.
pub fn spectrum_by_oscillation(zipper: &Zipper, grid: usize, refine_tol: f64) -> Result<SpectrumResult> {
    spectrum_by_oscillation_run(zipper, grid, refine_tol).map(|r| r.spectrum)
}

pub fn spectrum_by_oscillation_run(zipper: &Zipper, grid: usize, refine_tol: f64) -> Result<OscillationRun> {
    expect(zipper, Flavor::Finite)?;
    let src = PhaseSource::new(zipper)?;
    run(&src, grid, refine_tol, zipper.n() * zipper.l())
}

/// Eigenvalues of the periodic operator from crossings of 1 by the eigenvalues of Ŵ.
pub fn spectrum_periodic(zipper: &Zipper, grid: usize, refine_tol: f64) -> Result<SpectrumResult> {
    spectrum_periodic_run(zipper, grid, refine_tol).map(|r| r.spectrum)
}

pub fn spectrum_periodic_run(zipper: &Zipper, grid: usize, refine_tol: f64) -> Result<OscillationRun> {
    expect(zipper, Flavor::Periodic)?;
    let src = PhaseSource::new(zipper)?;
    debug_assert_eq!(src.branches(), 2 * zipper.l());
    run(&src, grid, refine_tol, zipper.n() * zipper.l())
}

/// Fiber spectra over a Bloch grid of 𝕋_N = (−π/N, π/N].
#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    pub n: usize,
    pub l: usize,
    pub k: Vec<f64>,
    pub spectra: Vec<SpectrumResult>,
}

impl BandStructure {
    /// Eigenphases at grid point j, repeated by multiplicity, ascending.
    pub fn phases(&self, j: usize) -> Vec<f64> {
        self.spectra[j].expanded()
    }

    /// Largest circular gap in the union of all eigenphases.
    pub fn coverage_gap(&self) -> f64 {
        let mut all: Vec<f64> = self.spectra.iter().flat_map(|s| s.expanded()).collect();
        if all.is_empty() {
            return TAU;
        }
        all.sort_by(f64::total_cmp);
        let wrap = all[0] + TAU - all[all.len() - 1];
        all.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
    }

    /// Largest change of the sorted phases between adjacent k, measured on the circle
    /// after optimal cyclic alignment.
    pub fn max_adjacent_jump(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 1..self.k.len() {
            let (p, q) = (self.phases(j - 1), self.phases(j));
            if p.len() != q.len() || p.is_empty() {
                return f64::INFINITY;
            }
            let m = p.len();
            let best = (0..m)
                .map(|c| {
                    (0..m).map(|i| crate::zipper::phase_distance(p[i], q[(i + c) % m])).fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        worst
    }

    /// Rows `k,phase_1,…,phase_{NL}`, phases ascending in [0, 2π).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k");
        for i in 1..=self.n * self.l {
            s.push_str(&format!(",phase_{i}"));
        }
        s.push('\n');
        for (j, k) in self.k.iter().enumerate() {
            s.push_str(&k.to_string());
            for p in self.phases(j) {
                s.push(',');
                s.push_str(&p.to_string());
            }
            s.push('\n');
        }
        s
    }
}

/// k_j = −π/N + (j + offset)·2π/(N·M), j = 0…M−1, for offset in (0, 1].
pub fn bloch_grid(n: usize, m: usize, offset: f64) -> Result<Vec<f64>> {
    if m == 0 || !(offset > 0.0 && offset <= 1.0) {
        return Err(Error::InvalidInput(format!("bad Bloch grid: size {m}, offset {offset}")));
    }
    let dk = TAU / (n * m) as f64;
    Ok((0..m).map(|j| -PI / n as f64 + (j as f64 + offset) * dk).collect())
}

/// Band structure on the default staggered grid.
pub fn bands(zipper: &Zipper, k_grid_size: usize, theta_tol: f64) -> Result<BandStructure> {
    bands_on_grid(zipper, &bloch_grid(zipper.n(), k_grid_size, BAND_OFFSET)?, theta_tol)
}

pub fn bands_on_grid(zipper: &Zipper, ks: &[f64], theta_tol: f64) -> Result<BandStructure> {
    expect(zipper, Flavor::Periodic)?;
    let grid = default_grid(zipper);
    let spectra = ks
        .par_iter()
        .map(|&k| spectrum_periodic(&zipper.with_momentum(k)?, grid, theta_tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(BandStructure { n: zipper.n(), l: zipper.l(), k: ks.to_vec(), spectra })
}

/// Smallest principal angle between the planes of Φ_N^z and (1; V); zero exactly at eigenvalues.
pub fn boundary_angle(zipper: &Zipper, z: Complex64) -> Result<f64> {
    expect(zipper, Flavor::Finite)?;
    let chain = TransferChain::from_zipper(zipper)?;
    let frame = propagate(&chain, z, zipper.n(), true)?;
    let v = zipper.boundary_v().expect("finite zipper has V");
    let psi_v = crate::matrix_core::vstack(&identity(zipper.l()), v);
    let qa = frame.matrix.clone().qr().q();
    let qb = psi_v.qr().q();
    let largest = (qa.adjoint() * qb).singular_values().iter().copied().fold(0.0, f64::max).min(1.0);
    Ok(largest.acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_core::{frobenius, unitarity_defect};
    use crate::random::{random_unitary, rng_from_seed};
    use crate::scattering::random_block;
    use crate::transfer::propagate;
    use crate::zipper::{assemble_finite, assemble_periodic, dense_eigen, dense_spectrum, direct_sum, Ensemble};
    use proptest::prelude::*;
    use rand::Rng;

    fn oracle(z: &Zipper) -> SpectrumResult {
        match z.flavor() {
            Flavor::Periodic => dense_spectrum(&assemble_periodic(z).unwrap()).unwrap(),
            _ => dense_spectrum(&assemble_finite(z).unwrap()).unwrap(),
        }
    }

    #[test]
    fn free_two_site_rotates_at_speed_two() {
        // W = z² for α = 0, U = V = 1.
        let z = Ensemble::Free.zipper(1, 2, Flavor::Finite, 0).unwrap();
        for theta in [0.3, 1.1, 2.9] {
            let w = prufer(&z, Complex64::from_polar(1.0, theta)).unwrap().w;
            assert!((w[(0, 0)] - Complex64::from_polar(1.0, 2.0 * theta)).norm() < 1e-13);
            let h = 1e-4;
            let a = rotation_positivity_check(&z, theta, h).unwrap();
            let b = rotation_positivity_check(&z, theta, h / 2.0).unwrap();
            assert!((a - 2.0).abs() < 1e-6 && (b - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn prufer_unitary_and_eigenvalue_one_at_spectrum() {
        for seed in 0..6 {
            let l = 1 + seed as usize % 3;
            let z = Ensemble::HaarGauge.zipper(l, 6, Flavor::Finite, seed).unwrap();
            let (values, _) = dense_eigen(&assemble_finite(&z).unwrap(), 512).unwrap();
            for lambda in values.iter().take(4) {
                let w = prufer(&z, *lambda / lambda.norm()).unwrap();
                assert!(unitarity_defect(&w.w) < 1e-8);
                let (ev, _) = unitary_eigen(&w.w);
                assert!(ev.iter().any(|e| (e - 1.0).norm() < 1e-6));
                assert!(boundary_angle(&z, *lambda / lambda.norm()).unwrap() < 1e-5);
            }
        }
    }

    #[test]
    fn raw_and_renormalized_frames_give_the_same_w() {
        let z = Ensemble::HaarGauge.zipper(2, 10, Flavor::Finite, 4).unwrap();
        let chain = TransferChain::from_zipper(&z).unwrap();
        let v = z.boundary_v().unwrap();
        for theta in [0.2, 2.0, 4.5] {
            let zz = Complex64::from_polar(1.0, theta);
            let raw = propagate(&chain, zz, 10, false).unwrap();
            let w_raw = solve(&raw.top().adjoint(), &raw.bottom().adjoint()).unwrap().adjoint() * v.adjoint();
            let w = prufer(&z, zz).unwrap().w;
            assert!(frobenius(&(w - w_raw)) < 1e-9);
        }
    }

    #[test]
    fn oscillation_matches_dense_oracle() {
        for (i, (l, n)) in [(1, 2), (1, 4), (1, 8), (2, 2), (2, 4), (2, 6), (2, 8), (1, 6)].into_iter().enumerate() {
            let z = Ensemble::HaarGauge.zipper(l, n, Flavor::Finite, 10 + i as u64).unwrap();
            let s = spectrum_by_oscillation(&z, default_grid(&z), REFINE_TOL).unwrap();
            assert_eq!(s.total(), n * l);
            let (worst, agree) = s.compare(&oracle(&z));
            assert!(worst < 1e-7 && agree, "l={l} n={n} worst={worst}");
        }
    }

    #[test]
    fn free_cases_match_the_permutation_spectrum() {
        for n in [2, 4, 6] {
            let z = Ensemble::Free.zipper(1, n, Flavor::Finite, 0).unwrap();
            let s = spectrum_by_oscillation(&z, default_grid(&z), REFINE_TOL).unwrap();
            let (worst, agree) = s.compare(&oracle(&z));
            assert!(worst < 1e-7 && agree);
        }
    }

    #[test]
    fn direct_sum_doubles_every_multiplicity() {
        let a = Ensemble::Cmv.zipper(1, 6, Flavor::Finite, 3).unwrap();
        let single = spectrum_by_oscillation(&a, default_grid(&a), REFINE_TOL).unwrap();
        let d = direct_sum(&a, &a).unwrap();
        let double = spectrum_by_oscillation(&d, default_grid(&d), REFINE_TOL).unwrap();
        assert_eq!(double.points.len(), single.points.len());
        for (p, q) in double.points.iter().zip(&single.points) {
            assert_eq!(p.multiplicity, 2 * q.multiplicity);
            assert!((p.theta - q.theta).abs() < 1e-8);
        }
        let b = Ensemble::HaarGauge.zipper(1, 4, Flavor::Periodic, 2).unwrap();
        let single = spectrum_periodic(&b, default_grid(&b), REFINE_TOL).unwrap();
        let d = direct_sum(&b, &b).unwrap();
        let double = spectrum_periodic(&d, default_grid(&d), REFINE_TOL).unwrap();
        assert_eq!(double.points.len(), single.points.len());
        assert!(double.points.iter().zip(&single.points).all(|(p, q)| p.multiplicity == 2 * q.multiplicity));
    }

    #[test]
    fn phase_track_rotates_forward_n_l_times() {
        for seed in 0..4 {
            let z = Ensemble::HaarGauge.zipper(2, 6, Flavor::Finite, seed).unwrap();
            let t = phase_track(&z, 4 * default_grid(&z)).unwrap();
            assert_eq!(t.crossings, 12);
            assert!(t.min_step >= 0.0 || t.min_step > -1e-8);
            assert!(t.phases.iter().all(|p| p.len() == 2));
        }
    }

    #[test]
    fn checkerboard_laws() {
        let mut rng = rng_from_seed(5);
        assert_eq!(checkerboard_sum(&identity(4), &identity(4)).unwrap(), identity(8));
        assert!(matches!(checkerboard_sum(&identity(4), &identity(2)), Err(Error::SizeMismatch)));
        let (t, tp) = (random_unitary(4, &mut rng), random_unitary(4, &mut rng));
        let (s, sp) = (random_unitary(4, &mut rng), random_unitary(4, &mut rng));
        let lhs = checkerboard_sum(&t, &tp).unwrap() * checkerboard_sum(&s, &sp).unwrap();
        let rhs = checkerboard_sum(&(&t * &s), &(&tp * &sp)).unwrap();
        assert!(frobenius(&(lhs - rhs)) < 1e-12);
        let lhat = checkerboard_sum(&l_form(2), &l_form(2)).unwrap();
        assert_eq!(lhat, l_form(4));
        let b = random_block(2, &mut rng);
        let tr = crate::scattering::phi(&b).unwrap();
        let that = checkerboard_sum(&identity(4), &tr).unwrap();
        assert!(frobenius(&(that.adjoint() * &lhat * &that - &lhat)) < 1e-10);
    }

    #[test]
    fn psi_hat_zero_projects_to_the_swap() {
        let p = psi_hat_zero(2);
        assert!(lagrangian_defect(&p) < 1e-15);
        let pi = stereographic(&p).unwrap();
        let mut swap = zeros(4, 4);
        swap.view_mut((0, 2), (2, 2)).copy_from(&identity(2));
        swap.view_mut((2, 0), (2, 2)).copy_from(&identity(2));
        assert_eq!(pi, swap);
    }

    #[test]
    fn periodic_spectrum_matches_oracle() {
        for (i, (l, n)) in [(1, 2), (1, 4), (1, 6), (2, 2), (2, 4), (2, 6)].into_iter().enumerate() {
            let z = Ensemble::HaarGauge.zipper(l, n, Flavor::Periodic, 40 + i as u64).unwrap();
            let s = spectrum_periodic(&z, default_grid(&z), REFINE_TOL).unwrap();
            let (worst, agree) = s.compare(&oracle(&z));
            assert!(worst < 1e-7 && agree, "l={l} n={n} worst={worst}");
            let w = prufer_periodic(&z, Complex64::from_polar(1.0, s.points[0].theta)).unwrap();
            assert!(unitarity_defect(&w.w) < 1e-8);
            assert!(unitary_eigen(&w.w).0.iter().any(|e| (e - 1.0).norm() < 1e-6));
        }
    }

    #[test]
    fn free_period_two_spectrum() {
        let z = Ensemble::Free.zipper(1, 2, Flavor::Periodic, 0).unwrap();
        let s = spectrum_periodic(&z, 64, REFINE_TOL).unwrap();
        let (worst, agree) = s.compare(&oracle(&z));
        assert!(worst < 1e-7 && agree);
    }

    #[test]
    fn rotation_is_positive_for_w_and_w_hat() {
        let mut rng = rng_from_seed(6);
        for seed in 0..10 {
            let theta = rng.random_range(0.0..TAU);
            let f = Ensemble::HaarGauge.zipper(2, 6, Flavor::Finite, seed).unwrap();
            assert!(rotation_positivity_check(&f, theta, 1e-5).unwrap() > -1e-3);
            let p = Ensemble::HaarGauge.zipper(2, 4, Flavor::Periodic, seed).unwrap();
            assert!(rotation_positivity_check(&p, theta, 1e-5).unwrap() > -1e-3);
        }
    }

    #[test]
    fn intersection_characterizations_agree() {
        let mut rng = rng_from_seed(7);
        for dim in 0..=3usize {
            let l = 3;
            // Frames (U; 1) and (U'; 1) where U*U' has eigenvalue 1 with multiplicity `dim`.
            let q = random_unitary(l, &mut rng);
            let mut d = zeros(l, l);
            for i in 0..l {
                let t = if i < dim { 0.0 } else { 0.5 + i as f64 };
                d[(i, i)] = Complex64::from_polar(1.0, t);
            }
            let u = random_unitary(l, &mut rng);
            let up = &u * &q * d * q.adjoint();
            let b = crate::random::random_matrix(l, l, &mut rng);
            let phi = crate::matrix_core::vstack(&u, &identity(l)) * &b;
            let psi = crate::matrix_core::vstack(&up, &identity(l));
            assert!(lagrangian_defect(&phi) < 1e-12);
            assert!(frobenius(&(stereographic(&phi).unwrap() - &u)) < 1e-9);
            assert_eq!(intersection_dimensions(&phi, &psi, 1e-8).unwrap(), [dim, dim, dim]);
        }
    }

    #[test]
    fn free_bands_cover_the_circle() {
        let z = Ensemble::Free.zipper(1, 2, Flavor::Periodic, 0).unwrap();
        let b = bands(&z, 64, REFINE_TOL).unwrap();
        assert!(b.coverage_gap() < TAU / 64.0);
        assert!(b.max_adjacent_jump() < 4.0 * TAU / (2.0 * 64.0));
        let zero = bands_on_grid(&z, &[0.0], REFINE_TOL).unwrap();
        let direct = spectrum_periodic(&z, default_grid(&z), REFINE_TOL).unwrap();
        assert_eq!(zero.spectra[0].compare(&direct).1, true);
        assert!(b.to_csv().starts_with("k,phase_1,phase_2\n"));
    }

    #[test]
    fn bloch_grid_offsets() {
        let g = bloch_grid(2, 4, 1.0).unwrap();
        assert!((g[3] - PI / 2.0).abs() < 1e-15 && g.iter().any(|k| k.abs() < 1e-15));
        assert!(bloch_grid(2, 4, 0.0).is_err());
        assert!(bloch_grid(2, 4, BAND_OFFSET).unwrap().iter().all(|&k| k > -PI / 2.0 && k <= PI / 2.0));
    }

    #[test]
    fn random_bands_are_continuous() {
        let z = Ensemble::HaarGauge.zipper(1, 4, Flavor::Periodic, 9).unwrap();
        let b = bands(&z, 32, REFINE_TOL).unwrap();
        let dk = TAU / (4.0 * 32.0);
        assert!(b.max_adjacent_jump() < 20.0 * dk, "{}", b.max_adjacent_jump());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn prufer_is_unitary(seed in 0u64..1000, theta in 0.0..TAU) {
            let z = Ensemble::HaarGauge.zipper(2, 4, Flavor::Finite, seed).unwrap();
            let w = prufer(&z, Complex64::from_polar(1.0, theta)).unwrap();
            prop_assert!(unitarity_defect(&w.w) < 1e-8);
        }
    }
}
