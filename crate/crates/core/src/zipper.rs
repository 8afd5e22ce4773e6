//! Zipper data, assembly of 𝕌_N = 𝕍_N 𝕎_N as a block five-diagonal unitary,
//! Bloch fibers, seeded ensembles, and the dense spectral oracle.

use crate::error::{Error, Result};
use crate::matrix_core::{frobenius, identity, unitarity_defect, unitary_eigen, zeros, CMatrix};
use crate::random::{random_contraction, random_unitary, rng_stream};
use crate::scattering::{boundary_block, build_block, ScatteringBlock, UNITARY_TOL};
use nalgebra::DVector;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::TAU;

/// Default cap on N·L for dense eigensolves.
pub const DENSE_CAP: usize = 512;
/// Phases closer than this are one eigenvalue for multiplicity counting.
pub const TOL_CLUSTER: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Finite,
    Periodic,
    SemiInfinite,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Finite => "finite",
            Flavor::Periodic => "periodic",
            Flavor::SemiInfinite => "semi-infinite",
        }
    }

    pub fn parse(s: &str) -> Option<Flavor> {
        match s {
            "finite" => Some(Flavor::Finite),
            "periodic" => Some(Flavor::Periodic),
            "semi-infinite" => Some(Flavor::SemiInfinite),
            _ => None,
        }
    }
}

/// Anything that supplies the scattering blocks S_n along a half-line.
///
/// `site_block(1)` is the boundary scatterer [[0, 1], [U, 0]] for zippers with a
/// left boundary U, and the corner block S_1 for periodic zippers.
pub trait BlockSource: Sync {
    fn l(&self) -> usize;
    fn site_block(&self, n: usize) -> Result<ScatteringBlock>;
}

/// A finite, periodic, or (truncated) semi-infinite scattering zipper.
#[derive(Debug, Clone, PartialEq)]
pub struct Zipper {
    l: usize,
    n: usize,
    flavor: Flavor,
    boundary_u: Option<CMatrix>,
    boundary_v: Option<CMatrix>,
    blocks: BTreeMap<usize, ScatteringBlock>,
}

fn check_unitary(m: &CMatrix, l: usize) -> Result<()> {
    if m.shape() != (l, l) {
        return Err(Error::DimensionMismatch {
            expected: l,
            found: m.nrows(),
        });
    }
    let d = unitarity_defect(m);
    if d > UNITARY_TOL {
        return Err(Error::NotUnitary(d));
    }
    Ok(())
}

impl Zipper {
    /// Validating constructor. Blocks are keyed by site index n: 2..=N for finite and
    /// semi-infinite zippers, 1..=N for periodic ones.
    pub fn new(
        flavor: Flavor,
        n: usize,
        boundary_u: Option<CMatrix>,
        boundary_v: Option<CMatrix>,
        blocks: BTreeMap<usize, ScatteringBlock>,
    ) -> Result<Zipper> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::OddN(n));
        }
        let l = blocks
            .values()
            .next()
            .map(|b| b.l())
            .or_else(|| boundary_u.as_ref().map(|u| u.nrows()))
            .ok_or(Error::MissingBlock(2))?;
        let first = match flavor {
            Flavor::Periodic => 1,
            _ => 2,
        };
        for site in first..=n {
            match blocks.get(&site) {
                None if site == 1 => return Err(Error::MissingS1),
                None => return Err(Error::MissingBlock(site)),
                Some(b) if b.l() != l => {
                    return Err(Error::DimensionMismatch {
                        expected: l,
                        found: b.l(),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(&extra) = blocks.keys().find(|&&k| k < first || k > n) {
            return Err(Error::InvalidInput(format!(
                "block index {extra} outside {first}..={n}"
            )));
        }
        let needs = |present: bool, what: &str| -> Result<()> {
            if !present {
                return Err(Error::InvalidInput(format!(
                    "{} zipper needs {what}",
                    flavor.name()
                )));
            }
            Ok(())
        };
        let forbid = |present: bool, what: &str| -> Result<()> {
            if present {
                return Err(Error::InvalidInput(format!(
                    "{} zipper has no {what}",
                    flavor.name()
                )));
            }
            Ok(())
        };
        match flavor {
            Flavor::Finite => {
                needs(boundary_u.is_some(), "boundary_U")?;
                needs(boundary_v.is_some(), "boundary_V")?;
            }
            Flavor::Periodic => {
                forbid(boundary_u.is_some(), "boundary_U")?;
                forbid(boundary_v.is_some(), "boundary_V")?;
            }
            Flavor::SemiInfinite => {
                needs(boundary_u.is_some(), "boundary_U")?;
                forbid(boundary_v.is_some(), "boundary_V")?;
            }
        }
        for m in boundary_u.iter().chain(boundary_v.iter()) {
            check_unitary(m, l)?;
        }
        Ok(Zipper {
            l,
            n,
            flavor,
            boundary_u,
            boundary_v,
            blocks,
        })
    }

    /// Finite zipper from boundaries and the blocks S_2, …, S_N.
    pub fn finite(u: CMatrix, v: CMatrix, blocks: Vec<ScatteringBlock>) -> Result<Zipper> {
        let n = blocks.len() + 1;
        let map = blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| (i + 2, b))
            .collect();
        Zipper::new(Flavor::Finite, n, Some(u), Some(v), map)
    }

    /// Periodic zipper from the blocks S_1, …, S_N.
    pub fn periodic(blocks: Vec<ScatteringBlock>) -> Result<Zipper> {
        let n = blocks.len();
        let map = blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| (i + 1, b))
            .collect();
        Zipper::new(Flavor::Periodic, n, None, None, map)
    }

    pub fn l(&self) -> usize {
        self.l
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn flavor(&self) -> Flavor {
        self.flavor
    }
    pub fn boundary_u(&self) -> Option<&CMatrix> {
        self.boundary_u.as_ref()
    }
    pub fn boundary_v(&self) -> Option<&CMatrix> {
        self.boundary_v.as_ref()
    }
    pub fn block(&self, n: usize) -> Option<&ScatteringBlock> {
        self.blocks.get(&n)
    }
    pub fn blocks(&self) -> impl Iterator<Item = (usize, &ScatteringBlock)> {
        self.blocks.iter().map(|(&k, b)| (k, b))
    }

    fn expect(&self, flavor: Flavor) -> Result<()> {
        if self.flavor != flavor {
            return Err(Error::WrongFlavor {
                expected: flavor.name(),
                found: self.flavor.name(),
            });
        }
        Ok(())
    }

    /// The same finite zipper with a different right boundary.
    pub fn with_boundary_v(&self, v: &CMatrix) -> Result<Zipper> {
        if self.flavor == Flavor::Periodic {
            return Err(Error::WrongFlavor {
                expected: "finite",
                found: "periodic",
            });
        }
        check_unitary(v, self.l)?;
        let mut z = self.clone();
        z.flavor = Flavor::Finite;
        z.boundary_v = Some(v.clone());
        Ok(z)
    }

    /// Finite zipper on the first `n` sites with right boundary `v`.
    pub fn truncated(&self, n: usize, v: &CMatrix) -> Result<Zipper> {
        if self.flavor == Flavor::Periodic {
            return Err(Error::WrongFlavor {
                expected: "finite",
                found: "periodic",
            });
        }
        if n > self.n {
            return Err(Error::MissingBlock(n));
        }
        let blocks = self
            .blocks
            .range(2..=n)
            .map(|(&k, b)| (k, b.clone()))
            .collect();
        Zipper::new(
            Flavor::Finite,
            n,
            self.boundary_u.clone(),
            Some(v.clone()),
            blocks,
        )
    }

    /// Periodic zipper with every block replaced by S_j(k).
    pub fn with_momentum(&self, k: f64) -> Result<Zipper> {
        self.expect(Flavor::Periodic)?;
        let mut z = self.clone();
        for b in z.blocks.values_mut() {
            *b = b.with_momentum(k);
        }
        Ok(z)
    }
}

impl BlockSource for Zipper {
    fn l(&self) -> usize {
        self.l
    }

    fn site_block(&self, n: usize) -> Result<ScatteringBlock> {
        if n == 1 && self.flavor != Flavor::Periodic {
            let u = self.boundary_u.as_ref().ok_or(Error::MissingBlock(1))?;
            return boundary_block(&identity(self.l), u);
        }
        self.blocks.get(&n).cloned().ok_or(if n == 1 {
            Error::MissingS1
        } else {
            Error::MissingBlock(n)
        })
    }
}

/// Random instance ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ensemble {
    /// U_n = V_n = 1, random α; unit boundaries.
    Cmv,
    /// Random α with Haar gauges and Haar boundaries.
    HaarGauge,
    /// α = 0, unit gauges and boundaries.
    Free,
}

impl Ensemble {
    pub fn parse(s: &str) -> Option<Ensemble> {
        match s {
            "cmv" => Some(Ensemble::Cmv),
            "haar-gauge" => Some(Ensemble::HaarGauge),
            "free" => Some(Ensemble::Free),
            _ => None,
        }
    }

    /// Block S_n drawn from stream n of the seed, so any site is replayable on its own.
    pub fn block(self, l: usize, seed: u64, n: usize) -> ScatteringBlock {
        let mut rng = rng_stream(seed, n as u64);
        let id = identity(l);
        let result = match self {
            Ensemble::Free => build_block(&zeros(l, l), &id, &id, 0.0),
            Ensemble::Cmv => build_block(&random_contraction(l, 0.95, &mut rng), &id, &id, 0.0),
            Ensemble::HaarGauge => {
                let alpha = random_contraction(l, 0.95, &mut rng);
                let u = random_unitary(l, &mut rng);
                let v = random_unitary(l, &mut rng);
                build_block(&alpha, &u, &v, 0.0)
            }
        };
        result.expect("ensemble blocks are strict contractions with unitary gauges")
    }

    /// Boundary unitaries (U, V), drawn from stream 0.
    pub fn boundaries(self, l: usize, seed: u64) -> (CMatrix, CMatrix) {
        match self {
            Ensemble::HaarGauge => {
                let mut rng = rng_stream(seed, 0);
                let u = random_unitary(l, &mut rng);
                let v = random_unitary(l, &mut rng);
                (u, v)
            }
            _ => (identity(l), identity(l)),
        }
    }

    pub fn zipper(self, l: usize, n: usize, flavor: Flavor, seed: u64) -> Result<Zipper> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::OddN(n));
        }
        let (u, v) = self.boundaries(l, seed);
        let first = if flavor == Flavor::Periodic { 1 } else { 2 };
        let blocks = (first..=n).map(|k| (k, self.block(l, seed, k))).collect();
        match flavor {
            Flavor::Finite => Zipper::new(flavor, n, Some(u), Some(v), blocks),
            Flavor::Periodic => Zipper::new(flavor, n, None, None, blocks),
            Flavor::SemiInfinite => Zipper::new(flavor, n, Some(u), None, blocks),
        }
    }
}

/// Lazily generated semi-infinite zipper: block n is a pure function of (seed, n).
#[derive(Debug, Clone)]
pub struct SeededGenerator {
    pub l: usize,
    pub seed: u64,
    pub ensemble: Ensemble,
}

impl SeededGenerator {
    pub fn boundary_u(&self) -> CMatrix {
        self.ensemble.boundaries(self.l, self.seed).0
    }
}

impl BlockSource for SeededGenerator {
    fn l(&self) -> usize {
        self.l
    }

    fn site_block(&self, n: usize) -> Result<ScatteringBlock> {
        if n == 1 {
            return boundary_block(&identity(self.l), &self.boundary_u());
        }
        Ok(self.ensemble.block(self.l, self.seed, n))
    }
}

type BlockMap = BTreeMap<(usize, usize), CMatrix>;

/// Block-sparse N·L × N·L operator with L×L blocks keyed by 0-based (row site, column site).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBandedUnitary {
    l: usize,
    n: usize,
    periodic: bool,
    blocks: BlockMap,
}

fn put(map: &mut BlockMap, r: usize, c: usize, b: CMatrix) {
    map.insert((r, c), b);
}

fn put_pair(map: &mut BlockMap, p: usize, q: usize, s: &ScatteringBlock) {
    put(map, p, p, s.alpha().clone());
    put(map, p, q, s.beta().clone());
    put(map, q, p, s.gamma().clone());
    put(map, q, q, s.delta().clone());
}

fn multiply(a: &BlockMap, b: &BlockMap) -> BlockMap {
    let mut out: BlockMap = BTreeMap::new();
    for (&(i, k), x) in a {
        for (&(_, j), y) in b.range((k, 0)..(k + 1, 0)) {
            let prod = x * y;
            out.entry((i, j))
                .and_modify(|acc| *acc += &prod)
                .or_insert(prod);
        }
    }
    out
}

/// 𝕍_N: S_2, S_4, …, S_N on the site pairs (1,2), (3,4), … (1-based).
fn v_part(z: &Zipper) -> Result<BlockMap> {
    let mut v = BTreeMap::new();
    for k in (2..=z.n).step_by(2) {
        let s = z.block(k).ok_or(Error::MissingBlock(k))?;
        put_pair(&mut v, k - 2, k - 1, s);
    }
    Ok(v)
}

/// Odd blocks S_3, …, S_{N−1} on the site pairs (2,3), (4,5), … (1-based).
fn w_interior(z: &Zipper, w: &mut BlockMap) -> Result<()> {
    for k in (3..z.n).step_by(2) {
        let s = z.block(k).ok_or(Error::MissingBlock(k))?;
        put_pair(w, k - 2, k - 1, s);
    }
    Ok(())
}

/// 𝕌_N = 𝕍_N 𝕎_N with 𝕎_N = U ⊕ S_3 ⊕ … ⊕ S_{N−1} ⊕ V.
pub fn assemble_finite(z: &Zipper) -> Result<BlockBandedUnitary> {
    if z.flavor == Flavor::Periodic {
        return Err(Error::WrongFlavor {
            expected: "finite",
            found: z.flavor.name(),
        });
    }
    if z.n % 2 != 0 {
        return Err(Error::OddN(z.n));
    }
    let u = z
        .boundary_u
        .as_ref()
        .ok_or(Error::InvalidInput("missing boundary_U".into()))?;
    let v = z
        .boundary_v
        .as_ref()
        .ok_or(Error::InvalidInput("missing boundary_V".into()))?;
    let mut w = BTreeMap::new();
    put(&mut w, 0, 0, u.clone());
    w_interior(z, &mut w)?;
    put(&mut w, z.n - 1, z.n - 1, v.clone());
    Ok(BlockBandedUnitary {
        l: z.l,
        n: z.n,
        periodic: false,
        blocks: multiply(&v_part(z)?, &w),
    })
}

/// Periodic 𝕌_N with S_1 in the corners of 𝕎: δ₁ at (1,1), γ₁ at (1,N), β₁ at (N,1), α₁ at (N,N).
pub fn assemble_periodic(z: &Zipper) -> Result<BlockBandedUnitary> {
    z.expect(Flavor::Periodic)?;
    let s1 = z.block(1).ok_or(Error::MissingS1)?;
    let last = z.n - 1;
    let mut w = BTreeMap::new();
    put(&mut w, 0, 0, s1.delta().clone());
    put(&mut w, 0, last, s1.gamma().clone());
    put(&mut w, last, 0, s1.beta().clone());
    put(&mut w, last, last, s1.alpha().clone());
    w_interior(z, &mut w)?;
    Ok(BlockBandedUnitary {
        l: z.l,
        n: z.n,
        periodic: true,
        blocks: multiply(&v_part(z)?, &w),
    })
}

/// Bloch fiber 𝕌_N^per(k), built from the blocks S_j(k).
pub fn fiber(z: &Zipper, k: f64) -> Result<BlockBandedUnitary> {
    assemble_periodic(&z.with_momentum(k)?)
}

impl BlockBandedUnitary {
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dim(&self) -> usize {
        self.l * self.n
    }
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }
    pub fn block(&self, r: usize, c: usize) -> Option<&CMatrix> {
        self.blocks.get(&(r, c))
    }
    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &CMatrix)> {
        self.blocks.iter().map(|(&k, b)| (k, b))
    }

    pub fn to_dense(&self) -> CMatrix {
        let l = self.l;
        let mut m = zeros(self.dim(), self.dim());
        for (&(r, c), b) in &self.blocks {
            m.view_mut((r * l, c * l), (l, l)).copy_from(b);
        }
        m
    }

    /// Matrix–vector product through the stored blocks.
    pub fn apply(&self, x: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let l = self.l;
        let mut y = DVector::zeros(self.dim());
        for (&(r, c), b) in &self.blocks {
            let part = b * x.rows(c * l, l);
            let mut dst = y.rows_mut(r * l, l);
            dst += part;
        }
        Ok(y)
    }

    /// Largest site distance between nonzero blocks, cyclic for periodic operators.
    pub fn bandwidth(&self) -> usize {
        self.blocks
            .iter()
            .filter(|(_, b)| frobenius(b) > 0.0)
            .map(|(&(r, c), _)| {
                let d = r.abs_diff(c);
                if self.periodic {
                    d.min(self.n - d)
                } else {
                    d
                }
            })
            .max()
            .unwrap_or(0)
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.to_dense())
    }
}

/// One eigenvalue e^{iθ}, θ ∈ [0, 2π), with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub theta: f64,
    pub multiplicity: usize,
}

impl SpectralPoint {
    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumResult {
    pub points: Vec<SpectralPoint>,
}

/// Distance on the circle between two phases.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn normalize_phase(t: f64) -> f64 {
    let r = t.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl SpectrumResult {
    /// Groups weighted phases whose consecutive circular gaps are at most `tol`.
    pub fn from_weighted_phases(mut items: Vec<(f64, usize)>, tol: f64) -> SpectrumResult {
        for it in items.iter_mut() {
            it.0 = normalize_phase(it.0);
        }
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<Vec<(f64, usize)>> = Vec::new();
        for it in items {
            match groups.last_mut() {
                Some(g) if it.0 - g.last().unwrap().0 <= tol => g.push(it),
                _ => groups.push(vec![it]),
            }
        }
        if groups.len() > 1 {
            let head = groups[0][0].0;
            let tail = groups.last().unwrap().last().unwrap().0;
            if head + TAU - tail <= tol {
                let first = groups.remove(0);
                groups.last_mut().unwrap().extend(first);
            }
        }
        let points = groups
            .into_iter()
            .map(|g| {
                let m: usize = g.iter().map(|x| x.1).sum();
                let s: Complex64 = g
                    .iter()
                    .map(|x| Complex64::from_polar(x.1 as f64, x.0))
                    .sum();
                SpectralPoint {
                    theta: normalize_phase(s.arg()),
                    multiplicity: m,
                }
            })
            .collect::<Vec<_>>();
        let mut out = SpectrumResult { points };
        out.points.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        out
    }

    pub fn from_phases(phases: &[f64], tol: f64) -> SpectrumResult {
        SpectrumResult::from_weighted_phases(phases.iter().map(|&t| (t, 1)).collect(), tol)
    }

    pub fn total(&self) -> usize {
        self.points.iter().map(|p| p.multiplicity).sum()
    }

    /// Phases repeated by multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.points
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.theta, p.multiplicity))
            .collect()
    }

    /// (largest phase discrepancy, multiplicities agree) after matching each point of
    /// `self` to the nearest point of `other`.
    pub fn compare(&self, other: &SpectrumResult) -> (f64, bool) {
        if self.points.len() != other.points.len() {
            return (f64::INFINITY, false);
        }
        let mut worst: f64 = 0.0;
        let mut agree = true;
        let mut used = vec![false; other.points.len()];
        for p in &self.points {
            let (j, d) = other
                .points
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, q)| (j, phase_distance(p.theta, q.theta)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("equal lengths");
            used[j] = true;
            worst = worst.max(d);
            agree &= other.points[j].multiplicity == p.multiplicity;
        }
        (worst, agree)
    }
}

/// Eigenvalues and orthonormal eigenvectors of an assembled operator.
pub fn dense_eigen(op: &BlockBandedUnitary, cap: usize) -> Result<(Vec<Complex64>, CMatrix)> {
    if op.dim() > cap {
        return Err(Error::CapExceeded {
            size: op.dim(),
            cap,
        });
    }
    Ok(unitary_eigen(&op.to_dense()))
}

/// Dense oracle spectrum via the commuting Hermitian pair (H, K).
pub fn dense_spectrum(op: &BlockBandedUnitary) -> Result<SpectrumResult> {
    dense_spectrum_with(op, DENSE_CAP, TOL_CLUSTER)
}

pub fn dense_spectrum_with(
    op: &BlockBandedUnitary,
    cap: usize,
    tol_cluster: f64,
) -> Result<SpectrumResult> {
    let (values, _) = dense_eigen(op, cap)?;
    let phases: Vec<f64> = values.iter().map(|v| v.arg()).collect();
    Ok(SpectrumResult::from_phases(&phases, tol_cluster))
}


/// Block-diagonal direct sum of two zippers of equal length and flavor.
pub fn direct_sum(a: &Zipper, b: &Zipper) -> Result<Zipper> {
    if a.n != b.n || a.flavor != b.flavor {
        return Err(Error::InvalidInput(
            "direct sum needs equal N and flavor".into(),
        ));
    }
    let sum = |x: &CMatrix, y: &CMatrix| {
        let mut m = zeros(x.nrows() + y.nrows(), x.ncols() + y.ncols());
        m.view_mut((0, 0), x.shape()).copy_from(x);
        m.view_mut(x.shape(), y.shape()).copy_from(y);
        m
    };
    let blocks = a
        .blocks
        .iter()
        .map(|(&k, s)| {
            let t = &b.blocks[&k];
            let joined = build_block(
                &sum(s.alpha(), t.alpha()),
                &sum(s.u(), t.u()),
                &sum(s.v(), t.v()),
                0.0,
            )?;
            Ok((k, joined))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let bu = match (&a.boundary_u, &b.boundary_u) {
        (Some(x), Some(y)) => Some(sum(x, y)),
        _ => None,
    };
    let bv = match (&a.boundary_v, &b.boundary_v) {
        (Some(x), Some(y)) => Some(sum(x, y)),
        _ => None,
    };
    Zipper::new(a.flavor, a.n, bu, bv, blocks)
}
