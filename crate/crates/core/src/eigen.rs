//! Dense symmetric eigensolvers.
//!
//! Two full decompositions are available: cyclic Jacobi rotations (used for
//! small matrices) and Householder tridiagonalization followed by implicit
//! QL iterations (used above [`JACOBI_MAX_DIM`]). Either way the returned
//! pairs must satisfy the residual bound `‖A v − λ v‖ ≤ tol · ‖A‖₂`, which is
//! checked before returning.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const JACOBI_MAX_DIM: usize = 128;

/// Tolerance on `|a_ij − a_ji|`, relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Jacobi,
    TridiagonalQl,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: EigenMethod,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            method: EigenMethod::Auto,
        }
    }
}

/// Eigenpairs sorted by descending eigenvalue; `vectors` holds them as
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

/// Largest `|a_ij − a_ji|`.
pub fn asymmetry(m: ArrayView2<'_, f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

fn check_symmetric(m: ArrayView2<'_, f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Flip each column so its first non-negligible component is positive.
fn fix_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.columns_mut() {
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cutoff = 1e-12 * norm.max(f64::MIN_POSITIVE);
        if let Some(&first) = col.iter().find(|x| x.abs() > cutoff) {
            if first < 0.0 {
                col.mapv_inplace(|x| -x);
            }
        }
    }
}

/// All eigenpairs, descending.
pub fn sym_eig_all(m: ArrayView2<'_, f64>, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = m.nrows();
    sym_eig_topk(m, n.max(1), opts)
}

/// The `k` algebraically largest eigenpairs of a symmetric matrix.
pub fn sym_eig_topk(m: ArrayView2<'_, f64>, k: usize, opts: &EigenOptions) -> Result<EigenPairs> {
    check_symmetric(m)?;
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, max: n });
    }
    // symmetrize exactly so both solvers see the same matrix
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m[[i, j]] + m[[j, i]]);
        }
    }
    let method = match opts.method {
        EigenMethod::Auto if n <= JACOBI_MAX_DIM => EigenMethod::Jacobi,
        EigenMethod::Auto => EigenMethod::TridiagonalQl,
        other => other,
    };
    // (values, vectors stored as rows)
    let (values, rows) = match method {
        EigenMethod::Jacobi => jacobi(&mut a, n, opts.max_iter)?,
        _ => householder_ql(&mut a, n, opts.max_iter)?,
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]).then(x.cmp(&y)));
    let norm = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));

    let mut vectors = Array2::zeros((n, k));
    let mut out_values = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        out_values.push(values[idx]);
        for r in 0..n {
            vectors[[r, c]] = rows[idx * n + r];
        }
    }
    fix_signs(&mut vectors);

    for (c, &lambda) in out_values.iter().enumerate() {
        let v = vectors.column(c);
        let res = m.dot(&v) - &(&v * lambda);
        let r = res.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > opts.tol * norm {
            return Err(Error::NoConvergence {
                iterations: opts.max_iter,
            });
        }
    }
    Ok(EigenPairs {
        values: out_values,
        vectors,
    })
}

/// Cyclic Jacobi on the upper triangle of `a` (row-major, destroyed).
/// Returns eigenvalues and eigenvectors as rows.
fn jacobi(a: &mut [f64], n: usize, max_sweeps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    // v holds eigenvectors as columns during the sweeps
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    let mut converged = false;
    for sweep in 1..=max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off == 0.0 {
            converged = true;
            break;
        }
        let thresh = if sweep < 4 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a[p * n + q] = 0.0;
                let rot = |a: &mut [f64], x: usize, y: usize| {
                    let g = a[x];
                    let h = a[y];
                    a[x] = g - s * (h + g * tau);
                    a[y] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rot(a, j * n + p, j * n + q);
                }
                for j in (p + 1)..q {
                    rot(a, p * n + j, j * n + q);
                }
                for j in (q + 1)..n {
                    rot(a, p * n + j, q * n + j);
                }
                for j in 0..n {
                    rot(&mut v, j * n + p, j * n + q);
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: max_sweeps,
        });
    }
    // transpose v so eigenvectors become rows
    let mut rows = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            rows[j * n + i] = v[i * n + j];
        }
    }
    Ok((d, rows))
}

/// Householder reduction to tridiagonal form followed by implicit QL with
/// Wilkinson-style shifts. `a` is overwritten. Returns eigenvalues and
/// eigenvectors as rows.
fn householder_ql(a: &mut [f64], n: usize, max_iter: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let v = a;
    let idx = |r: usize, c: usize| r * n + c;

    // --- tridiagonalize (V accumulates the orthogonal transform) ---
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;

    // work on the transpose so QL rotations touch contiguous rows
    let mut z = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            z[c * n + r] = v[idx(r, c)];
        }
    }

    // --- implicit QL on the tridiagonal (d, e) ---
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    let mut total_iter = 0usize;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                total_iter += 1;
                if total_iter > max_iter {
                    return Err(Error::NoConvergence { iterations: max_iter });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..(i + 1) * n];
                    let zi1 = &mut hi[..n];
                    for k in 0..n {
                        let hk = zi1[k];
                        zi1[k] = s * zi[k] + c * hk;
                        zi[k] = c * zi[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok((d, z))
}
