//! Desk-scale invariant suite behind `zipper verify`. Every check draws from its own
//! seeded stream, so results depend only on the seed and the optional fault.

use crate::error::Result;
use crate::io::{measure_from_json, measure_to_json, spectrum_from_json, spectrum_to_json, zipper_from_json, zipper_to_json};
use crate::matrix_core::{
    c64, cayley, frobenius, hermitian_eigen, hermitian_sqrt, identity, in_siegel_disc, in_upper_half_plane, j_form,
    l_form, mobius, mobius_inverse, op_norm, quarters, unitarity_defect, vstack, CMatrix, DEFAULT_TOL, I,
};
use crate::measures::{caratheodory, gram_schmidt, spectral_measure_finite};
use crate::oscillation::{
    default_grid, intersection_dimensions, lagrangian_defect, phase_track, spectrum_by_oscillation, stereographic,
    REFINE_TOL,
};
use crate::random::{random_contraction, random_matrix, random_point_in_disc, random_unitary, rng_stream, SeededRng};
use crate::scattering::{membership_predicates, phi, phi_inverse, random_block, MEMBERSHIP_TOL};
use crate::transfer::{max_principal_angle, p_matrix, propagate, transfer_at, TransferChain};
use crate::weyl::{
    caratheodory_margin, dense_resolvent, disc_coordinate, e_chain, e_closed_form, e_forward, f_chain, f_matrix,
    g_matrix, radial_central,
};
use crate::zipper::{assemble_finite, dense_spectrum, fiber, Ensemble, Flavor, Zipper};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Module {
    MatrixCore,
    Scattering,
    Zipper,
    Transfer,
    Weyl,
    Measures,
    Oscillation,
    Cli,
}

impl Module {
    pub const ALL: [Module; 8] = [
        Module::MatrixCore,
        Module::Scattering,
        Module::Zipper,
        Module::Transfer,
        Module::Weyl,
        Module::Measures,
        Module::Oscillation,
        Module::Cli,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Module::MatrixCore => "matrix_core",
            Module::Scattering => "scattering",
            Module::Zipper => "zipper",
            Module::Transfer => "transfer",
            Module::Weyl => "weyl",
            Module::Measures => "measures",
            Module::Oscillation => "oscillation",
            Module::Cli => "cli",
        }
    }

    pub fn parse(s: &str) -> Option<Module> {
        Module::ALL.into_iter().find(|m| m.name() == s || m.name().replace('_', "-") == s)
    }
}

/// Deliberate corruption used to confirm that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    /// Adds this amount to one entry of every scattering block before it is checked.
    CorruptBlock(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub module: Module,
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest measured defect (or failure indicator) over all cases.
    pub worst: f64,
    pub threshold: f64,
    /// Set when the check could not run to completion.
    pub error: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.error.is_none()
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} {}::{} cases={} failures={} worst={:.3e} threshold={:.1e}",
            self.module.name(),
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.threshold
        )?;
        if let Some(e) = &self.error {
            write!(f, " error={e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed()).count()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(
            f,
            "seed={} checks={} passed={} failed={}",
            self.seed,
            self.checks.len(),
            self.checks.len() - self.failures(),
            self.failures()
        )
    }
}

struct Ctx {
    rng: SeededRng,
    fault: Option<Fault>,
    seed: u64,
}

type CheckFn = fn(&mut Ctx) -> Result<Vec<f64>>;

struct Check {
    module: Module,
    name: &'static str,
    threshold: f64,
    run: CheckFn,
}

fn rel(a: &CMatrix, b: &CMatrix) -> f64 {
    frobenius(&(a - b)) / (1.0 + frobenius(b))
}

fn flag(ok: bool) -> f64 {
    if ok {
        0.0
    } else {
        1.0
    }
}

fn instance(ctx: &mut Ctx, l: usize, n: usize, flavor: Flavor) -> Result<Zipper> {
    let seed = ctx.rng.random::<u64>();
    Ensemble::HaarGauge.zipper(l, n, flavor, seed)
}

fn checks() -> Vec<Check> {
    vec![
        Check { module: Module::MatrixCore, name: "mobius_laws", threshold: 1e-9, run: mobius_laws },
        Check { module: Module::MatrixCore, name: "cayley_forms", threshold: 1e-12, run: cayley_forms },
        Check { module: Module::MatrixCore, name: "cayley_into_siegel_disc", threshold: 0.5, run: cayley_disc },
        Check { module: Module::MatrixCore, name: "sqrt_commutes", threshold: 1e-10, run: sqrt_commutes },
        Check { module: Module::Scattering, name: "block_relations", threshold: 1e-10, run: block_relations },
        Check { module: Module::Scattering, name: "phi_bijection", threshold: 1e-9, run: phi_bijection },
        Check { module: Module::Scattering, name: "membership_equivalence", threshold: 0.5, run: membership },
        Check { module: Module::Zipper, name: "unitary_five_diagonal", threshold: 1e-10, run: five_diagonal },
        Check { module: Module::Zipper, name: "fiber_unitarity", threshold: 1e-10, run: fiber_unitarity },
        Check { module: Module::Zipper, name: "spectrum_count", threshold: 0.5, run: spectrum_count },
        Check { module: Module::Transfer, name: "circle_conservation", threshold: 1e-9, run: circle_conservation },
        Check { module: Module::Transfer, name: "single_step_identity", threshold: 1e-10, run: single_step },
        Check { module: Module::Transfer, name: "p_lower_bound", threshold: 1e-10, run: p_lower_bound },
        Check { module: Module::Transfer, name: "renormalization_plane", threshold: 1e-8, run: renorm_plane },
        Check { module: Module::Transfer, name: "scattering_transfer", threshold: 1e-10, run: scattering_transfer },
        Check { module: Module::Weyl, name: "caratheodory_property", threshold: 0.5, run: caratheodory_property },
        Check { module: Module::Weyl, name: "disc_nesting", threshold: 0.5, run: disc_nesting },
        Check { module: Module::Weyl, name: "resolvent_oracle", threshold: 1e-8, run: resolvent_oracle },
        Check { module: Module::Weyl, name: "e_routes_agree", threshold: 1e-8, run: e_routes },
        Check { module: Module::Measures, name: "orthonormality", threshold: 1e-8, run: orthonormality },
        Check { module: Module::Measures, name: "leading_structure", threshold: 0.5, run: leading_structure },
        Check { module: Module::Measures, name: "recursion_residuals", threshold: 1e-7, run: recursion_residuals },
        Check { module: Module::Measures, name: "rho_alpha_identities", threshold: 1e-8, run: rho_alpha },
        Check { module: Module::Measures, name: "f_match", threshold: 1e-8, run: f_match },
        Check { module: Module::Oscillation, name: "intersection_identity", threshold: 0.5, run: intersection },
        Check { module: Module::Oscillation, name: "lagrangian_chart", threshold: 1e-9, run: lagrangian_chart },
        Check { module: Module::Oscillation, name: "monotone_rotation", threshold: 1e-8, run: monotone_rotation },
        Check { module: Module::Oscillation, name: "total_rotation", threshold: 0.5, run: total_rotation },
        Check { module: Module::Cli, name: "determinism", threshold: 0.5, run: determinism },
        Check { module: Module::Cli, name: "format_roundtrip", threshold: 0.5, run: format_roundtrip },
    ]
}

/// Runs all checks, or those of one module, in a fixed order.
pub fn run_suite(filter: Option<Module>, seed: u64, fault: Option<Fault>) -> VerifyReport {
    let selected: Vec<(usize, Check)> =
        checks().into_iter().enumerate().filter(|(_, c)| filter.is_none_or(|m| m == c.module)).collect();
    let results = selected
        .into_par_iter()
        .map(|(i, c)| {
            let mut ctx = Ctx { rng: rng_stream(seed, 1000 + i as u64), fault, seed };
            let (cases, failures, worst, error) = match (c.run)(&mut ctx) {
                Ok(values) => {
                    let failures = values.iter().filter(|&&v| !(v <= c.threshold)).count();
                    let worst = values.iter().copied().fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
                    (values.len(), failures, worst, None)
                }
                Err(e) => (0, 0, f64::NAN, Some(e.to_string())),
            };
            CheckResult { module: c.module, name: c.name, cases, failures, worst, threshold: c.threshold, error }
        })
        .collect();
    VerifyReport { seed, checks: results }
}

fn mobius_laws(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..24 {
        let l = 1 + case % 3;
        let t1 = phi(&random_block(l, &mut ctx.rng))?;
        let t2 = phi(&random_block(l, &mut ctx.rng))?;
        let z = random_contraction(l, 0.9, &mut ctx.rng);
        let w = random_contraction(l, 0.9, &mut ctx.rng);
        let image = mobius(&t1, &z, DEFAULT_TOL)?;
        out.push(rel(&mobius_inverse(&image, &t1, DEFAULT_TOL)?, &z));
        let t12 = &t1 * &t2;
        let nested = mobius(&t1, &mobius(&t2, &z, DEFAULT_TOL)?, DEFAULT_TOL)?;
        out.push(rel(&nested, &mobius(&t12, &z, DEFAULT_TOL)?));
        let w12 = mobius(&t12, &w, DEFAULT_TOL)?;
        let direct = mobius_inverse(&w12, &t12, DEFAULT_TOL)?;
        let step = mobius_inverse(&mobius_inverse(&w12, &t1, DEFAULT_TOL)?, &t2, DEFAULT_TOL)?;
        out.push(rel(&step, &direct));
        let inv1 = crate::matrix_core::inverse(&t1, 0.0)?;
        out.push(rel(&mobius_inverse(&w12, &t1, DEFAULT_TOL)?, &mobius(&inv1, &w12, DEFAULT_TOL)?));
    }
    Ok(out)
}

fn cayley_forms(_: &mut Ctx) -> Result<Vec<f64>> {
    Ok((1..=4)
        .flat_map(|l| {
            let c = cayley(l);
            let j = c.adjoint() * l_form(l) * &c * (-I);
            [unitarity_defect(&c), frobenius(&(j - j_form(l)))]
        })
        .collect())
}

/// X + iY with X Hermitian and Y ≻ 0.
fn random_upper(l: usize, rng: &mut SeededRng) -> CMatrix {
    let a = random_matrix(l, l, rng);
    let b = random_matrix(l, l, rng);
    let x = (&a + a.adjoint()) * c64(0.5, 0.0);
    let y = &b * b.adjoint() + identity(l) * c64(0.05, 0.0);
    x + y * I
}

fn cayley_disc(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..10 {
        let l = 1 + case % 3;
        let z = random_upper(l, &mut ctx.rng);
        let w = mobius(&cayley(l), &z, DEFAULT_TOL)?;
        out.push(flag(in_upper_half_plane(&z, 0.0) && in_siegel_disc(&w, true, 0.0)));
    }
    Ok(out)
}

fn sqrt_commutes(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..12 {
        let l = 1 + case % 4;
        let x = random_matrix(l, l, &mut ctx.rng);
        let m = &x * x.adjoint() + identity(l) * c64(0.1, 0.0);
        let s = hermitian_sqrt(&m, DEFAULT_TOL)?;
        out.push(frobenius(&(&s * &m - &m * &s)) / frobenius(&m).powi(2).max(1.0));
        out.push(rel(&(&s * &s), &m));
    }
    Ok(out)
}

fn corrupt(ctx: &Ctx, m: &CMatrix) -> CMatrix {
    let mut m = m.clone();
    if let Some(Fault::CorruptBlock(eps)) = ctx.fault {
        m[(0, 0)] += eps;
    }
    m
}

fn block_relations(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..30 {
        let l = 1 + case % 3;
        let b = random_block(l, &mut ctx.rng);
        let m = corrupt(ctx, b.matrix());
        let [a, b, g, d] = quarters(&m);
        let id = identity(l);
        out.push(unitarity_defect(&m));
        out.extend([
            op_norm(&(a.adjoint() * &a + g.adjoint() * &g - &id)),
            op_norm(&(d.adjoint() * &d + b.adjoint() * &b - &id)),
            op_norm(&(d.adjoint() * &g + b.adjoint() * &a)),
            op_norm(&(&a * a.adjoint() + &b * b.adjoint() - &id)),
            op_norm(&(&d * d.adjoint() + &g * g.adjoint() - &id)),
            op_norm(&(&g * a.adjoint() + &d * b.adjoint())),
        ]);
    }
    // Blocks of generated zippers, too.
    let z = instance(ctx, 2, 6, Flavor::Finite)?;
    for (_, b) in z.blocks() {
        out.push(unitarity_defect(&corrupt(ctx, b.matrix())));
    }
    Ok(out)
}

fn phi_bijection(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..30 {
        let l = 1 + case % 3;
        let s = random_block(l, &mut ctx.rng);
        let t = phi(&s)?;
        let back = phi_inverse(&t, 1e-8)?;
        out.push(rel(back.matrix(), s.matrix()));
        out.push(rel(&phi(&back)?, &t));
    }
    Ok(out)
}

fn membership(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..40 {
        let l = 1 + case % 3;
        let s = if case % 2 == 0 {
            random_unitary(2 * l, &mut ctx.rng)
        } else {
            // Block-diagonal unitaries decouple the channels: β = γ = 0.
            let mut m = crate::matrix_core::zeros(2 * l, 2 * l);
            m.view_mut((0, 0), (l, l)).copy_from(&random_unitary(l, &mut ctx.rng));
            m.view_mut((l, l), (l, l)).copy_from(&random_unitary(l, &mut ctx.rng));
            m
        };
        // The norm tests resolve 1 − ‖α‖² only down to roundoff, so the default 1e-8
        // (squared: 1e-16) is too fine for exact decoupling.
        let p = membership_predicates(&s, MEMBERSHIP_TOL * 100.0);
        out.push(flag(p.iter().all(|&x| x == p[0]) && p[0] == (case % 2 == 0)));
    }
    Ok(out)
}

fn five_diagonal(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 2), (1, 8), (2, 6), (3, 4), (2, 12)] {
        let op = assemble_finite(&instance(ctx, l, n, Flavor::Finite)?)?;
        out.push(op.unitarity_defect());
        out.push(if op.bandwidth() <= 2 { 0.0 } else { 1.0 });
    }
    Ok(out)
}

fn fiber_unitarity(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let z = instance(ctx, 2, 4, Flavor::Periodic)?;
    (0..16).map(|j| Ok(fiber(&z, -TAU / 8.0 + j as f64 * TAU / 64.0)?.unitarity_defect())).collect()
}

fn spectrum_count(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 4), (2, 6), (3, 8)] {
        let s = dense_spectrum(&assemble_finite(&instance(ctx, l, n, Flavor::Finite)?)?)?;
        out.push(flag(s.total() == n * l));
    }
    Ok(out)
}

fn circle_conservation(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 6), (2, 8), (3, 10)] {
        let z = instance(ctx, l, n, Flavor::Finite)?;
        let chain = TransferChain::from_zipper(&z)?;
        for _ in 0..4 {
            let w = Complex64::from_polar(1.0, ctx.rng.random_range(0.0..TAU));
            for site in 1..=n {
                out.push(crate::scattering::lorentz_defect(&chain.at(site, w)?));
            }
            out.push(lagrangian_defect(&propagate(&chain, w, n, true)?.matrix));
        }
    }
    Ok(out)
}

fn single_step(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..100 {
        let l = 1 + case % 3;
        let b = random_block(l, &mut ctx.rng);
        let z = random_point_in_disc(0.2, 0.95, &mut ctx.rng);
        let t = transfer_at(&b, 2, z)?.matrix;
        let lhs = t.adjoint() * l_form(l) * &t;
        let rhs = l_form(l) + p_matrix(&b, z)?.matrix;
        out.push(frobenius(&(&lhs - &rhs)) / (1.0 + frobenius(&lhs)));
    }
    Ok(out)
}

fn p_lower_bound(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..40 {
        let l = 1 + case % 3;
        let z = random_point_in_disc(0.0, 0.95, &mut ctx.rng);
        let p = p_matrix(&random_block(l, &mut ctx.rng), z)?.matrix;
        let bound = (1.0 - z.norm_sqr()) / 2.0;
        out.push((bound - hermitian_eigen(&p).values[0]).max(0.0));
    }
    Ok(out)
}

fn renorm_plane(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 12), (2, 10), (3, 8)] {
        let chain = TransferChain::from_zipper(&instance(ctx, l, n, Flavor::Finite)?)?;
        for _ in 0..3 {
            let w = random_point_in_disc(0.3, 0.9, &mut ctx.rng);
            let raw = propagate(&chain, w, n, false)?;
            let ren = propagate(&chain, w, n, true)?;
            out.push(max_principal_angle(&raw.matrix, &ren.matrix));
        }
    }
    Ok(out)
}

fn scattering_transfer(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..30 {
        let l = 1 + case % 3;
        let s = random_block(l, &mut ctx.rng);
        let psi = random_matrix(l, 1, &mut ctx.rng);
        let psi_p = random_matrix(l, 1, &mut ctx.rng);
        let out_amp = s.matrix() * vstack(&psi, &psi_p);
        let (ph, ph_p) = (out_amp.rows(0, l).into_owned(), out_amp.rows(l, l).into_owned());
        let lhs = phi(&s)? * vstack(&psi, &ph);
        out.push(rel(&lhs, &vstack(&ph_p, &psi_p)));
    }
    Ok(out)
}

fn caratheodory_property(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 4), (2, 8), (3, 6)] {
        let z = instance(ctx, l, n, Flavor::Finite)?;
        for _ in 0..5 {
            let w = random_point_in_disc(0.05, 0.95, &mut ctx.rng);
            let v = random_unitary(l, &mut ctx.rng);
            out.push(flag(caratheodory_margin(&f_matrix(&z, w, &v)?) > 0.0));
        }
    }
    Ok(out)
}

fn disc_nesting(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 6), (2, 8), (3, 6)] {
        let chain = TransferChain::from_zipper(&instance(ctx, l, n, Flavor::Finite)?)?;
        let w = random_point_in_disc(0.3, 0.8, &mut ctx.rng);
        let outer = radial_central(&chain, w, n - 2)?;
        for _ in 0..10 {
            let v = random_unitary(l, &mut ctx.rng);
            let f = f_chain(&chain, w, &v, n)?;
            out.push(flag(op_norm(&disc_coordinate(&f, &outer)?) < 1.0));
        }
    }
    Ok(out)
}

fn resolvent_oracle(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for l in 1..=3 {
        for n in (2..=12).step_by(2) {
            let z = instance(ctx, l, n, Flavor::Finite)?;
            let v = z.boundary_v().expect("finite").clone();
            for _ in 0..3 {
                let w = random_point_in_disc(0.05, 0.95, &mut ctx.rng);
                let (f, g) = dense_resolvent(&z, w)?;
                out.push(rel(&f_matrix(&z, w, &v)?, &f));
                out.push(rel(&g_matrix(&z, w, &v)?, &g));
            }
        }
    }
    Ok(out)
}

fn e_routes(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 4), (2, 6), (3, 8)] {
        let chain = TransferChain::from_zipper(&instance(ctx, l, n, Flavor::Finite)?)?;
        for _ in 0..4 {
            let w = random_point_in_disc(0.3, 0.9, &mut ctx.rng);
            let v = random_unitary(l, &mut ctx.rng);
            let e = e_chain(&chain, w, &v, n)?;
            out.push(rel(&e_closed_form(&chain, w, &v, n)?, &e));
            out.push(rel(&e_forward(&chain, w, &v, n)?, &e));
        }
    }
    Ok(out)
}

fn measure_instances(ctx: &mut Ctx) -> Result<Vec<(Zipper, crate::measures::GramSchmidt)>> {
    [(1, 6), (2, 4), (2, 6)]
        .into_iter()
        .map(|(l, n)| {
            let z = instance(ctx, l, n, Flavor::Finite)?;
            let mu = spectral_measure_finite(&z, None)?;
            let gs = gram_schmidt(&mu, z.boundary_u().expect("finite"), n + 1)?;
            Ok((z, gs))
        })
        .collect()
}

fn orthonormality(ctx: &mut Ctx) -> Result<Vec<f64>> {
    Ok(measure_instances(ctx)?.iter().map(|(_, gs)| gs.orthonormality_defect).collect())
}

fn leading_structure(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (_, gs) in measure_instances(ctx)? {
        for (i, p) in gs.phi.iter().enumerate() {
            let n = i + 1;
            let support = p.support(1e-12);
            let half = (n / 2) as i64;
            let (edge, target) = if n % 2 == 0 {
                (*support.first().unwrap_or(&0), -half)
            } else {
                (*support.last().unwrap_or(&0), half)
            };
            let kappa = p.coefficient(target);
            let invertible = crate::matrix_core::min_singular(&kappa) > 1e-12;
            out.push(flag(edge == target && invertible && hermitian_eigen(&gs.kappa[i]).values[0] > 0.0));
        }
    }
    Ok(out)
}

fn recursion_residuals(ctx: &mut Ctx) -> Result<Vec<f64>> {
    Ok(measure_instances(ctx)?.iter().map(|(_, gs)| gs.recursion_residual).collect())
}

fn rho_alpha(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (_, gs) in measure_instances(ctx)? {
        let d = &gs.data;
        for k in 0..d.alpha.len() {
            let id = identity(d.alpha[k].nrows());
            let (a, r, rt) = (&d.alpha[k], &d.rho[k], &d.rho_tilde[k]);
            out.push(frobenius(&(r * r.adjoint() + a * a.adjoint() - &id)));
            out.push(frobenius(&(rt * rt.adjoint() + a.adjoint() * a - &id)));
        }
    }
    Ok(out)
}

fn f_match(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 6), (2, 6), (3, 4)] {
        let z = instance(ctx, l, n, Flavor::Finite)?;
        let v = random_unitary(l, &mut ctx.rng);
        let mu = spectral_measure_finite(&z, Some(&v))?;
        for _ in 0..20 {
            let w = random_point_in_disc(0.0, 0.95, &mut ctx.rng);
            out.push(rel(&caratheodory(&mu, w)?, &f_matrix(&z, w, &v)?));
        }
    }
    Ok(out)
}

fn intersection(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..12 {
        let l = 1 + case % 3;
        let dim = case % (l + 1);
        let q = random_unitary(l, &mut ctx.rng);
        let mut d = crate::matrix_core::zeros(l, l);
        for i in 0..l {
            d[(i, i)] = Complex64::from_polar(1.0, if i < dim { 0.0 } else { 0.7 + i as f64 });
        }
        let u = random_unitary(l, &mut ctx.rng);
        let up = &u * &q * d * q.adjoint();
        let b = random_matrix(l, l, &mut ctx.rng) + identity(l) * c64(2.0, 0.0);
        let phi_f = vstack(&u, &identity(l)) * b;
        let psi_f = vstack(&up, &identity(l));
        out.push(flag(intersection_dimensions(&phi_f, &psi_f, 1e-8)? == [dim; 3]));
    }
    Ok(out)
}

fn lagrangian_chart(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for case in 0..15 {
        let l = 1 + case % 3;
        let u = random_unitary(l, &mut ctx.rng);
        let b = random_matrix(l, l, &mut ctx.rng) + identity(l) * c64(2.0, 0.0);
        let frame = vstack(&u, &identity(l)) * &b;
        let pi = stereographic(&frame)?;
        out.push(unitarity_defect(&pi));
        out.push(rel(&(vstack(&pi, &identity(l)) * &b), &frame));
    }
    Ok(out)
}

fn monotone_rotation(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n, flavor) in [(1, 6, Flavor::Finite), (2, 4, Flavor::Finite), (2, 4, Flavor::Periodic)] {
        let z = instance(ctx, l, n, flavor)?;
        let t = phase_track(&z, 4 * default_grid(&z))?;
        out.push((-t.min_step).max(0.0));
    }
    Ok(out)
}

fn total_rotation(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (l, n) in [(1, 6), (2, 4), (3, 4)] {
        let z = instance(ctx, l, n, Flavor::Finite)?;
        let t = phase_track(&z, 4 * default_grid(&z))?;
        out.push(flag(t.crossings == n * l));
        let s = spectrum_by_oscillation(&z, default_grid(&z), REFINE_TOL)?;
        out.push(flag(s.total() == n * l));
    }
    Ok(out)
}

fn determinism(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let seed = ctx.seed;
    let mut out = Vec::new();
    for ens in [Ensemble::Cmv, Ensemble::HaarGauge, Ensemble::Free] {
        let a = zipper_to_json(&ens.zipper(2, 6, Flavor::Finite, seed)?);
        let b = zipper_to_json(&ens.zipper(2, 6, Flavor::Finite, seed)?);
        out.push(flag(a == b));
    }
    Ok(out)
}

fn format_roundtrip(ctx: &mut Ctx) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for flavor in [Flavor::Finite, Flavor::Periodic] {
        let z = instance(ctx, 2, 4, flavor)?;
        out.push(flag(zipper_from_json(&zipper_to_json(&z))? == z));
    }
    let z = instance(ctx, 2, 4, Flavor::Finite)?;
    let mu = spectral_measure_finite(&z, None)?;
    out.push(flag(measure_from_json(&measure_to_json(&mu))? == mu));
    let s = dense_spectrum(&assemble_finite(&z)?)?;
    out.push(flag(spectrum_from_json(&spectrum_to_json(&s))? == s));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let report = run_suite(None, 2024, None);
        assert!(report.passed(), "{report}");
        assert_eq!(report.checks.len(), checks().len());
    }

    #[test]
    fn corrupted_blocks_fail_scattering() {
        let report = run_suite(Some(Module::Scattering), 7, Some(Fault::CorruptBlock(1e-3)));
        assert!(report.checks.iter().all(|c| c.module == Module::Scattering));
        let rel = report.checks.iter().find(|c| c.name == "block_relations").unwrap();
        assert!(!rel.passed());
        assert!(!report.passed());
    }

    #[test]
    fn filter_selects_one_module() {
        let report = run_suite(Some(Module::Cli), 1, None);
        assert!(report.passed());
        assert!(report.checks.iter().all(|c| c.module == Module::Cli));
        assert_eq!(Module::parse("matrix-core"), Some(Module::MatrixCore));
        assert_eq!(Module::parse("nope"), None);
    }
}
