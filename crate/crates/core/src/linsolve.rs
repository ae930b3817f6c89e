//! Sparse storage, linear solvers and condition estimates.
//!
//! Matrices are accumulated as triplets and compressed to row-compressed
//! storage by a sorted reduction, so the assembled matrix does not depend on
//! the order in which local contributions arrive.
//!
//! [`solve`] runs restarted GMRES. Small systems use Jacobi scaling with a
//! dense LU fallback; large systems use a sparse LU factorization as the
//! preconditioner, which makes GMRES converge in one or two steps while the
//! residual contract is still checked against the original matrix.

use std::io::Write;
use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};

/// Largest system handed to the dense factorization.
pub const DENSE_LIMIT: usize = 2000;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_RESTART: usize = 100;
const CONDITION_ITERATIONS: usize = 50;

#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Compress, summing duplicates in (row, col, insertion) order.
    pub fn build(mut self) -> CsrMatrix {
        // stable sort keeps insertion order within duplicates
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Square matrix in compressed row storage with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self::from_dense(
            n,
            &(0..n * n)
                .map(|k| if k / n == k % n { 1.0 } else { 0.0 })
                .collect::<Vec<_>>(),
        )
    }

    /// Row-major dense input; zeros are dropped.
    pub fn from_dense(n: usize, a: &[f64]) -> Self {
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            for j in 0..n {
                if a[i * n + j] != 0.0 {
                    t.add(i, j, a[i * n + j]);
                }
            }
        }
        t.build()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.add(j, i, v);
            }
        }
        t.build()
    }

    /// `(A + Aᵀ)/2`
    pub fn symmetric_part(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.add(i, j, 0.5 * v);
                t.add(j, i, 0.5 * v);
            }
        }
        t.build()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ|`
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Rows without any stored entry.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.row_ptr[i] == self.row_ptr[i + 1])
            .collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[i * self.n + j] = v;
            }
        }
        a
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::Dimension(format!("sparse conversion failed: {e:?}")))
    }

    /// Coordinate text dump, one `i j value` line per entry, 0-based.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖b - A x‖₂ / ‖b‖₂`, or `‖A x‖₂` when `b = 0`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// Dense LU with partial pivoting, row-major.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Dimension(format!("expected {} entries, got {}", n * n, a.len())));
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, a[i * n + k].abs()))
                    .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pmax < 1e-14 * scale {
                return Err(Error::SingularMatrix { pivot: pmax });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / pivot;
                a[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= l * a[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solve `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P
        let mut z = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[j * n + i] * z[j]).sum();
            z[i] = (z[i] - s) / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[j * n + i] * z[j]).sum();
            z[i] -= s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }
}

static SEQUENTIAL: Once = Once::new();

/// Direct factorization of a [`CsrMatrix`], dense for small systems.
pub enum Factorization {
    Dense(DenseLu),
    Sparse(Lu<usize, f64>),
}

impl Factorization {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.dim() <= DENSE_LIMIT {
            return Ok(Factorization::Dense(DenseLu::factor(a.dim(), a.to_dense())?));
        }
        // single-threaded kernels keep results bitwise reproducible
        SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
        let lu = a.to_faer()?.sp_lu().map_err(|_| Error::SingularMatrix { pivot: 0.0 })?;
        Ok(Factorization::Sparse(lu))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Dense(lu) => lu.solve(b),
            Factorization::Sparse(lu) => {
                let mut rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
                lu.solve_in_place(rhs.as_mut());
                (0..b.len()).map(|i| rhs[(i, 0)]).collect()
            }
        }
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Dense(lu) => lu.solve_transpose(b),
            Factorization::Sparse(lu) => {
                let mut rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
                lu.solve_transpose_in_place(rhs.as_mut());
                (0..b.len()).map(|i| rhs[(i, 0)]).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    /// Pick by size: Jacobi GMRES with dense fallback, or LU-preconditioned GMRES.
    Auto,
    GmresJacobi,
    GmresDirect,
    DenseLu,
}

impl std::fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverMethod::Auto => "auto",
            SolverMethod::GmresJacobi => "gmres-jacobi",
            SolverMethod::GmresDirect => "gmres-lu",
            SolverMethod::DenseLu => "dense-lu",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    /// Defaults to `10 N` when `None`.
    pub max_iter: Option<usize>,
    pub restart: usize,
    pub method: SolverMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            restart: DEFAULT_RESTART,
            method: SolverMethod::Auto,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub method: SolverMethod,
    pub condition: Option<f64>,
}

pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES.
///
/// `precond(r)` applies `M⁻¹`. Convergence is declared on the true relative
/// residual, recomputed at the end of every cycle.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let n = a.dim();
    let nb = norm2(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return GmresOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let m = restart.max(1).min(n.max(1));
    let mut total = 0;
    let mut best = (f64::INFINITY, x.clone());

    loop {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        let rel = beta / nb;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= tol || total >= max_iter {
            let (residual, x) = best;
            return GmresOutcome {
                converged: residual <= tol,
                x,
                iterations: total,
                residual,
            };
        }

        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            if total >= max_iter {
                break;
            }
            total += 1;
            let z = precond(&v[k]);
            let mut w = a.matvec(&z);
            // modified Gram-Schmidt
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                hess[i][k] = hik;
                for (wj, vij) in w.iter_mut().zip(vi) {
                    *wj -= hik * vij;
                }
            }
            let hnext = norm2(&w);
            hess[k + 1][k] = hnext;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() / nb <= 0.5 * tol || hnext == 0.0 {
                break;
            }
            v.push(w.iter().map(|wj| wj / hnext).collect());
        }

        if k_used == 0 {
            let (residual, x) = best;
            return GmresOutcome {
                converged: residual <= tol,
                x,
                iterations: total,
                residual,
            };
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&v) {
            for (u, vij) in update.iter_mut().zip(vi) {
                *u += yi * vij;
            }
        }
        let dx = precond(&update);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
    }
}

fn jacobi(a: &CsrMatrix) -> impl Fn(&[f64]) -> Vec<f64> {
    let inv: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    move |r: &[f64]| r.iter().zip(&inv).map(|(ri, di)| ri * di).collect()
}

/// Solve `A u = b` to relative residual `opts.tol`.
pub fn solve(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<SolveReport> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::Dimension(format!("matrix is {n}x{n}, rhs has {}", b.len())));
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));

    let method = match opts.method {
        SolverMethod::Auto if n <= DENSE_LIMIT => SolverMethod::GmresJacobi,
        SolverMethod::Auto => SolverMethod::GmresDirect,
        m => m,
    };

    let finish = |x: Vec<f64>, iterations: usize, method: SolverMethod| -> Result<SolveReport> {
        let residual = relative_residual(a, &x, b);
        if !(residual <= opts.tol) {
            return Err(Error::NoConvergence {
                iterations,
                residual,
                best: x,
            });
        }
        Ok(SolveReport {
            solution: x,
            iterations,
            residual,
            method,
            condition: None,
        })
    };

    match method {
        SolverMethod::GmresJacobi => {
            let out = gmres(a, b, &jacobi(a), opts.tol, opts.restart, max_iter);
            if out.converged {
                return finish(out.x, out.iterations, method);
            }
            if opts.method == SolverMethod::Auto {
                let lu = DenseLu::factor(n, a.to_dense())?;
                return finish(lu.solve(b), out.iterations, SolverMethod::DenseLu);
            }
            Err(Error::NoConvergence {
                iterations: out.iterations,
                residual: out.residual,
                best: out.x,
            })
        }
        SolverMethod::GmresDirect => {
            let fact = Factorization::new(a)?;
            let out = gmres(a, b, &|r: &[f64]| fact.solve(r), opts.tol, opts.restart, max_iter);
            if out.converged {
                finish(out.x, out.iterations, method)
            } else {
                Err(Error::NoConvergence {
                    iterations: out.iterations,
                    residual: out.residual,
                    best: out.x,
                })
            }
        }
        SolverMethod::DenseLu => {
            let lu = DenseLu::factor(n, a.to_dense())?;
            finish(lu.solve(b), 1, method)
        }
        SolverMethod::Auto => unreachable!(),
    }
}

#[derive(Clone, Debug)]
pub struct ConditionEstimate {
    pub kappa: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// `‖AᵀA v - λ v‖ / λ` at the last power iterate.
    pub power_residual: f64,
    /// Same for the inverse iteration on `(AᵀA)⁻¹`.
    pub inverse_residual: f64,
}

/// Rough 2-norm condition number from power and inverse iteration on `AᵀA`.
pub fn estimate_condition(a: &CsrMatrix) -> Result<ConditionEstimate> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let fact = Factorization::new(a)?;
    let start = vec![1.0 / (n as f64).sqrt(); n];

    let normal = |v: &[f64]| a.matvec_transpose(&a.matvec(v));
    let inverse_normal = |v: &[f64]| fact.solve(&fact.solve_transpose(v));

    let (lambda_max, power_residual) = rayleigh_iteration(&start, normal);
    let (mu, inverse_residual) = rayleigh_iteration(&start, inverse_normal);
    let sigma_max = lambda_max.sqrt();
    let sigma_min = 1.0 / mu.sqrt();
    Ok(ConditionEstimate {
        kappa: sigma_max / sigma_min,
        sigma_max,
        sigma_min,
        power_residual,
        inverse_residual,
    })
}

fn rayleigh_iteration(start: &[f64], op: impl Fn(&[f64]) -> Vec<f64>) -> (f64, f64) {
    let mut v = start.to_vec();
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..CONDITION_ITERATIONS {
        let w = op(&v);
        lambda = dot(&v, &w);
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt()
            / lambda.abs();
        let nw = norm2(&w);
        if nw == 0.0 {
            break;
        }
        v = w.iter().map(|wi| wi / nw).collect();
    }
    (lambda, residual)
}

#[derive(Clone, Debug)]
pub struct SymmetricSpectrum {
    /// Whether a Cholesky factorization of `(A + Aᵀ)/2` exists.
    pub positive_definite: bool,
    /// Eigenvalue of smallest magnitude, by inverse iteration.
    pub lambda_min: f64,
}

/// Positive definiteness and smallest eigenvalue of the symmetric part.
pub fn symmetric_part_spectrum(a: &CsrMatrix) -> Result<SymmetricSpectrum> {
    let s = a.symmetric_part();
    let n = s.dim();
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
    let faer_s = s.to_faer()?;
    let llt: Option<Llt<usize, f64>> = faer_s.sp_cholesky(Side::Lower).ok();
    let start = vec![1.0 / (n as f64).sqrt(); n];
    let mu = match &llt {
        Some(llt) => {
            let op = |v: &[f64]| {
                let mut rhs = Mat::from_fn(n, 1, |i, _| v[i]);
                llt.solve_in_place(rhs.as_mut());
                (0..n).map(|i| rhs[(i, 0)]).collect::<Vec<_>>()
            };
            rayleigh_iteration(&start, op).0
        }
        None => {
            let fact = Factorization::new(&s)?;
            rayleigh_iteration(&start, |v| fact.solve(v)).0
        }
    };
    Ok(SymmetricSpectrum {
        positive_definite: llt.is_some(),
        lambda_min: 1.0 / mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            t.add(i, i, 2.0);
            if i > 0 {
                t.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.add(i, i + 1, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = TripletBuilder::new(2);
        t.add(1, 0, 1.0);
        t.add(0, 0, 2.0);
        t.add(1, 0, 3.0);
        let a = t.build();
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.empty_rows(), Vec::<usize>::new());
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let a = CsrMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        let rep = solve(&a, &b, &SolverOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        for (u, bi) in rep.solution.iter().zip(&b) {
            assert!((u - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_two_by_two() {
        let a = CsrMatrix::from_dense(2, &[2.0, 0.0, 0.0, 4.0]);
        let rep = solve(&a, &[2.0, 8.0], &SolverOptions::default()).unwrap();
        assert!((rep.solution[0] - 1.0).abs() < 1e-14);
        assert!((rep.solution[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn dense_lu_detects_singularity() {
        let err = DenseLu::factor(2, vec![1.0, 2.0, 2.0, 4.0]).unwrap_err();
        assert!(matches!(err, Error::SingularMatrix { .. }));
    }

    #[test]
    fn dense_lu_transpose_solve() {
        let a = vec![4.0, 1.0, 2.0, 0.5, 3.0, 1.0, 1.0, -1.0, 5.0];
        let lu = DenseLu::factor(3, a.clone()).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve_transpose(&b);
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| a[i * 3 + j] * x[i]).sum();
            assert!((s - b[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn nonsymmetric_gmres_and_sparse_lu_agree() {
        let n = 2500;
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            t.add(i, i, 3.0);
            if i > 0 {
                t.add(i, i - 1, -1.5);
            }
            if i + 1 < n {
                t.add(i, i + 1, -0.5);
            }
        }
        let a = t.build();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
        let direct = solve(&a, &b, &SolverOptions::default()).unwrap();
        assert_eq!(direct.method, SolverMethod::GmresDirect);
        assert!(direct.iterations <= 3);
        let jac = solve(
            &a,
            &b,
            &SolverOptions {
                method: SolverMethod::GmresJacobi,
                ..Default::default()
            },
        )
        .unwrap();
        for (x, y) in direct.solution.iter().zip(&jac.solution) {
            assert!((x - y).abs() < 1e-8);
        }
        let fact = Factorization::new(&a).unwrap();
        let xt = fact.solve_transpose(&b);
        assert!(relative_residual(&a.transpose(), &xt, &b) < 1e-12);
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let a = laplace_1d(400);
        let b = vec![1.0; 400];
        let err = solve(
            &a,
            &b,
            &SolverOptions {
                method: SolverMethod::GmresJacobi,
                max_iter: Some(5),
                restart: 5,
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            Error::NoConvergence { iterations, best, .. } => {
                assert_eq!(iterations, 5);
                assert_eq!(best.len(), 400);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn condition_of_identity_and_diagonal() {
        let c = estimate_condition(&CsrMatrix::identity(10)).unwrap();
        assert!((c.kappa - 1.0).abs() <= 1e-6);
        let c = estimate_condition(&CsrMatrix::from_dense(2, &[1.0, 0.0, 0.0, 100.0])).unwrap();
        assert!((c.kappa - 100.0).abs() <= 1.0, "{c:?}");
    }

    #[test]
    fn spectrum_of_symmetric_part() {
        let a = laplace_1d(50);
        let s = symmetric_part_spectrum(&a).unwrap();
        assert!(s.positive_definite);
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / 51.0).cos();
        assert!((s.lambda_min - exact).abs() < 1e-6 * exact.max(1e-3));

        let indefinite = CsrMatrix::from_dense(2, &[1.0, 0.0, 0.0, -3.0]);
        let s = symmetric_part_spectrum(&indefinite).unwrap();
        assert!(!s.positive_definite);
    }

    #[test]
    fn coordinate_dump() {
        let a = CsrMatrix::from_dense(2, &[1.0, 0.0, 0.5, 2.0]);
        let mut buf = Vec::new();
        a.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1 0 5.0"));
    }

    proptest! {
        #[test]
        fn residual_contract_holds(diag in proptest::collection::vec(1.0f64..10.0, 3..30), off in -0.4f64..0.4, seed in 0u64..1000) {
            let n = diag.len();
            let mut t = TripletBuilder::new(n);
            for i in 0..n {
                t.add(i, i, diag[i]);
                t.add(i, (i + 1) % n, off * diag[i]);
                t.add((i + 2) % n, i, -off);
            }
            let a = t.build();
            let b: Vec<f64> = (0..n).map(|i| ((i as u64 * 31 + seed) % 17) as f64 - 8.0).collect();
            let rep = solve(&a, &b, &SolverOptions::default()).unwrap();
            prop_assert!(relative_residual(&a, &rep.solution, &b) <= DEFAULT_TOL);
        }
    }
}
