//! Dense symmetric eigensolvers and small inverses.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Eigenpairs sorted by descending eigenvalue; eigenvectors are the matrix columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn symmetric_eig(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::usage(format!("eigendecomposition needs a square matrix, got {}x{}", n, m.ncols())));
    }
    let scale = max_abs(m);
    let asym = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .fold(0.0f64, |a, (i, j)| a.max((m[(i, j)] - m[(j, i)]).abs()));
    if asym > 1e-12 * scale {
        return Err(Error::usage(format!("matrix not symmetric: max asymmetry {asym:e} vs scale {scale:e}")));
    }
    if n == 0 {
        return Ok(SymmetricEigen { values: vec![], vectors: DMatrix::zeros(0, 0) });
    }
    // Row-major working copy (symmetrized), column-major eigenvectors.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let fro2: f64 = a.iter().map(|x| x * x).sum();
    let mut converged = false;
    for _sweep in 0..80 {
        let mut off2 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off2 += a[p * n + q] * a[p * n + q];
            }
        }
        if off2 <= 1e-32 * fro2 || off2 == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if apq.abs() < 1e-18 * (app.abs() + aqq.abs()).max(f64::MIN_POSITIVE) {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[p * n + k];
                    let akq = a[q * n + k];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    a[p * n + k] = np;
                    a[k * n + p] = np;
                    a[q * n + k] = nq;
                    a[k * n + q] = nq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                let (vp, vq) = if p < q {
                    let (lo, hi) = v.split_at_mut(q * n);
                    (&mut lo[p * n..p * n + n], &mut hi[..n])
                } else {
                    unreachable!()
                };
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (vx, vy) = (*x, *y);
                    *x = c * vx - s * vy;
                    *y = s * vx + c * vy;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical(format!("Jacobi did not converge for n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[order[c] * n + r]);
    Ok(SymmetricEigen { values, vectors })
}

/// Gauss-Jordan inverse with partial pivoting. Fails with [`Error::ContextFailure`]
/// when a pivot drops below `pivot_floor` times the largest entry of `m`.
pub fn invert(m: &DMatrix<f64>, pivot_floor: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::usage("inverse needs a square matrix"));
    }
    let scale = max_abs(m);
    let floor = pivot_floor * scale;
    let mut a = m.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pval > floor) {
            return Err(Error::ContextFailure { pivot: pval, floor });
        }
        a.swap_rows(col, piv);
        inv.swap_rows(col, piv);
        let d = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[(r, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(r, j)] -= f * a[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

/// Settings for [`top_eigenpairs`].
#[derive(Debug, Clone)]
pub struct KrylovOptions {
    /// Extra block vectors beyond the requested count.
    pub extra: usize,
    /// Largest subspace per restart cycle.
    pub max_dim: usize,
    /// Leading pairs held to `tol_strict`; the rest to `tol_loose`. Relative to the top eigenvalue.
    pub strict: usize,
    pub tol_strict: f64,
    pub tol_loose: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            extra: 8,
            max_dim: 240,
            strict: usize::MAX,
            tol_strict: 1e-10,
            tol_loose: 1e-10,
            max_restarts: 60,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopEigen {
    pub values: Vec<f64>,
    /// One unit vector per value.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthonormalizes `w` against `basis` (two Gram-Schmidt passes). `None` if `w` lies in the span.
fn orthonormalize(mut w: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let start = dot(&w, &w).sqrt();
    if start == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let c = dot(&w, b);
            axpy(&mut w, -c, b);
        }
    }
    let norm = dot(&w, &w).sqrt();
    if norm <= 1e-10 * start {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= norm);
    Some(w)
}

/// Largest `want` eigenpairs of the symmetric operator `apply` on R^n by restarted
/// block Krylov iteration with Rayleigh-Ritz extraction.
pub fn top_eigenpairs(
    n: usize,
    want: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    opts: &KrylovOptions,
) -> Result<TopEigen> {
    if want == 0 || want > n {
        return Err(Error::usage(format!("requested {want} eigenpairs of a dimension-{n} operator")));
    }
    let block = (want + opts.extra).min(n);
    let max_dim = opts.max_dim.max(2 * block).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<Vec<f64>> =
        (0..block).map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()).collect();
    let mut last = None;
    for _restart in 0..opts.max_restarts.max(1) {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
        let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
        let mut pending = std::mem::take(&mut start);
        while basis.len() < max_dim && !pending.is_empty() {
            let mut next = Vec::new();
            for w in pending {
                if basis.len() >= max_dim {
                    break;
                }
                if let Some(q) = orthonormalize(w, &basis) {
                    let mut aq = vec![0.0; n];
                    apply(&q, &mut aq);
                    next.push(aq.clone());
                    basis.push(q);
                    images.push(aq);
                }
            }
            pending = next;
        }
        // Fill with random directions if the block deflated early.
        while basis.len() < want {
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            if let Some(q) = orthonormalize(w, &basis) {
                let mut aq = vec![0.0; n];
                apply(&q, &mut aq);
                basis.push(q);
                images.push(aq);
            }
        }
        let dim = basis.len();
        let t = DMatrix::from_fn(dim, dim, |i, j| {
            0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]))
        });
        let eig = symmetric_eig(&t)?;
        let keep = block.min(dim);
        let mut ritz = Vec::with_capacity(keep);
        let mut ritz_images = Vec::with_capacity(keep);
        for c in 0..keep {
            let mut x = vec![0.0; n];
            let mut ax = vec![0.0; n];
            for j in 0..dim {
                let y = eig.vectors[(j, c)];
                axpy(&mut x, y, &basis[j]);
                axpy(&mut ax, y, &images[j]);
            }
            ritz.push(x);
            ritz_images.push(ax);
        }
        let top = eig.values[0].abs().max(f64::MIN_POSITIVE);
        let residuals: Vec<f64> = (0..want)
            .map(|i| {
                let r: f64 = ritz_images[i]
                    .iter()
                    .zip(&ritz[i])
                    .map(|(a, x)| (a - eig.values[i] * x).powi(2))
                    .sum();
                r.sqrt()
            })
            .collect();
        let converged = dim == n
            || residuals.iter().enumerate().all(|(i, &r)| {
                let tol = if i < opts.strict { opts.tol_strict } else { opts.tol_loose };
                r <= tol * top
            });
        let result = TopEigen {
            values: eig.values[..want].to_vec(),
            vectors: ritz[..want].to_vec(),
            residuals,
            converged,
        };
        if converged {
            return Ok(result);
        }
        last = Some(result);
        start = ritz;
    }
    Ok(last.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn identity_and_diagonal() {
        let e = symmetric_eig(&DMatrix::identity(4, 4)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let e = symmetric_eig(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reconstructs_random_matrix() {
        let m = random_symmetric(30, 1);
        let e = symmetric_eig(&m).unwrap();
        let w = &e.vectors;
        let rec = w * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone())) * w.transpose();
        assert!((&rec - &m).norm() < 1e-8);
        let orth = w.transpose() * w - DMatrix::identity(30, 30);
        assert!(max_abs(&orth) < 1e-8);
        assert!(e.values.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(symmetric_eig(&m), Err(Error::Usage(_))));
    }

    #[test]
    fn inverse_and_singularity() {
        let m = random_symmetric(6, 2) + DMatrix::identity(6, 6) * 3.0;
        let inv = invert(&m, 1e-10).unwrap();
        assert!(max_abs(&(&m * &inv - DMatrix::identity(6, 6))) < 1e-12);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(invert(&s, 1e-10), Err(Error::ContextFailure { .. })));
    }

    #[test]
    fn krylov_matches_jacobi() {
        let m = random_symmetric(120, 3);
        let full = symmetric_eig(&m).unwrap();
        let opts = KrylovOptions { max_dim: 40, ..Default::default() };
        let top = top_eigenpairs(120, 4, |x, y| {
            let v = &m * nalgebra::DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        }, &opts)
        .unwrap();
        assert!(top.converged);
        for i in 0..4 {
            assert!((top.values[i] - full.values[i]).abs() < 1e-9, "{i}");
        }
    }
}
