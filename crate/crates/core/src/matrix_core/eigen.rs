//! Cyclic Jacobi sweeps for Hermitian matrices, and the unitary eigenproblem
//! reduced to the commuting pair H = (U+U*)/2, K = (U-U*)/2i.

use super::CMatrix;
use num_complex::Complex64;

const MAX_SWEEPS: usize = 100;
/// Relative gap below which eigenvalues of H (or K) are treated as one cluster
/// when splitting a unitary's eigenspaces.
const PAIR_CLUSTER_GAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
}

/// Diagonalises the Hermitian part of `m` by cyclic Jacobi rotations.
pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "hermitian_eigen needs a square matrix");
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
        }
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let scale = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let target = (f64::EPSILON * scale.max(f64::MIN_POSITIVE)).powi(2);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                // D = diag(1, e^{-i phi}) makes the pivot real, then a real rotation.
                let phase_conj = (apq / mag).conj();
                let tau = (aqq - app) / (2.0 * mag);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let g_pp = Complex64::new(c, 0.0);
                let g_pq = Complex64::new(s, 0.0);
                let g_qp = -phase_conj * s;
                let g_qq = phase_conj * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * g_pp + akq * g_qp;
                    a[k * n + q] = akp * g_pq + akq * g_qq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[q * n + k] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[p * n + q] = Complex64::new(0.0, 0.0);
                a[q * n + p] = Complex64::new(0.0, 0.0);
                a[p * n + p] = Complex64::new(a[p * n + p].re, 0.0);
                a[q * n + q] = Complex64::new(a[q * n + q].re, 0.0);
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * g_pp + vkq * g_qp;
                    v[k * n + q] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    HermitianEigen { values, vectors }
}

/// Splits sorted values into maximal runs whose consecutive gaps are below `gap`.
fn clusters(values: &[f64], gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > gap {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn columns(m: &CMatrix, range: std::ops::Range<usize>) -> CMatrix {
    m.columns(range.start, range.len()).into_owned()
}

/// Re-diagonalises `herm` inside the span of `basis`, ordering by its eigenvalues.
fn refine(basis: &CMatrix, herm: &CMatrix) -> (Vec<f64>, CMatrix) {
    let restricted = basis.adjoint() * herm * basis;
    let eig = hermitian_eigen(&restricted);
    (eig.values, basis * eig.vectors)
}

/// Eigen-decomposition of a normal (in practice unitary) matrix.
///
/// Returns the Rayleigh quotients `v* U v` and orthonormal eigenvectors.
pub fn unitary_eigen(u: &CMatrix) -> (Vec<Complex64>, CMatrix) {
    let n = u.nrows();
    let ua = u.adjoint();
    let h = (u + &ua) * Complex64::new(0.5, 0.0);
    let k = (u - &ua) * Complex64::new(0.0, -0.5);
    let eh = hermitian_eigen(&h);
    let mut vectors = CMatrix::zeros(n, n);
    let mut col = 0;
    for hc in clusters(&eh.values, PAIR_CLUSTER_GAP) {
        let basis = columns(&eh.vectors, hc.clone());
        if hc.len() == 1 {
            vectors.set_column(col, &basis.column(0));
            col += 1;
            continue;
        }
        let (kvals, kvecs) = refine(&basis, &k);
        for kc in clusters(&kvals, PAIR_CLUSTER_GAP) {
            let sub = columns(&kvecs, kc.clone());
            let sub = if kc.len() > 1 {
                refine(&sub, &h).1
            } else {
                sub
            };
            for j in 0..sub.ncols() {
                vectors.set_column(col, &sub.column(j));
                col += 1;
            }
        }
    }
    let values = (0..n)
        .map(|j| {
            let v = vectors.column(j);
            (v.adjoint() * u * v)[(0, 0)]
        })
        .collect();
    (values, vectors)
}
