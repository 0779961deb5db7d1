//! Exact solver for tiny dense convex QPs.
//!
//! Minimizes `1/2 x' H x + c' x` subject to `A x >= b` by enumerating every
//! candidate active set, solving its equality-constrained KKT system and
//! keeping the cheapest primal/dual feasible candidate. With at most three
//! variables and six constraints there are at most 42 sets of interest, so
//! enumeration is exact and fast.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAX_VARS: usize = 3;
pub const MAX_CONSTRAINTS: usize = 6;

// the feasibility check adds one slack variable and one constraint
const CAP_N: usize = MAX_VARS + 1;
const CAP_M: usize = MAX_CONSTRAINTS + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T: Real> {
    pub hessian: DMatrix<T>,
    pub linear: DVector<T>,
    /// Rows of `A` in `A x >= b`.
    pub ineq_a: DMatrix<T>,
    pub ineq_b: DVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T: Real> {
    pub x_star: DVector<T>,
    pub active_set: Vec<usize>,
    /// One multiplier per inequality, zero off the active set.
    pub multipliers: DVector<T>,
    pub objective: T,
    pub status: QpStatus,
}

impl<T: Real> QpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T: Real> {
    pub stationarity: T,
    pub primal: T,
    pub dual: T,
    pub complementarity: T,
}

impl<T: Real> KktResiduals<T> {
    pub fn max(&self) -> T {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

impl<T: Real> QpProblem<T> {
    pub fn new(hessian: DMatrix<T>, linear: DVector<T>, ineq_a: DMatrix<T>, ineq_b: DVector<T>) -> Result<Self> {
        let p = Self {
            hessian,
            linear,
            ineq_a,
            ineq_b,
        };
        p.check_shapes(MAX_VARS, MAX_CONSTRAINTS)?;
        Ok(p)
    }

    pub fn unconstrained(hessian: DMatrix<T>, linear: DVector<T>) -> Result<Self> {
        let n = linear.len();
        Self::new(hessian, linear, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.ineq_b.len()
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        (x.transpose() * &self.hessian * x)[0] / T::lit(2.0) + self.linear.dot(x)
    }

    fn check_shapes(&self, max_n: usize, max_m: usize) -> Result<()> {
        let n = self.linear.len();
        let m = self.ineq_b.len();
        if n == 0 || n > max_n {
            return Err(Error::param(format!("QP dimension {n} outside 1..={max_n}")));
        }
        if m > max_m {
            return Err(Error::param(format!("{m} constraints exceed limit {max_m}")));
        }
        if self.hessian.shape() != (n, n) || self.ineq_a.shape() != (m, n) {
            return Err(Error::param("QP matrix shapes are inconsistent"));
        }
        let finite = self.hessian.iter().chain(self.linear.iter()).chain(self.ineq_a.iter()).chain(self.ineq_b.iter());
        if !finite.into_iter().all(|v| v.is_finite_val()) {
            return Err(Error::param("QP data is not finite"));
        }
        Ok(())
    }

    /// KKT residuals of `sol` for this problem.
    pub fn kkt_residuals(&self, sol: &QpSolution<T>) -> KktResiduals<T> {
        let x = &sol.x_star;
        let mu = &sol.multipliers;
        let grad = &self.hessian * x + &self.linear - self.ineq_a.transpose() * mu;
        let slack = &self.ineq_a * x - &self.ineq_b;
        let zero = T::zero();
        KktResiduals {
            stationarity: grad.amax(),
            primal: slack.iter().fold(zero, |acc, &s| acc.max(-s)),
            dual: mu.iter().fold(zero, |acc, &m| acc.max(-m)),
            complementarity: slack.iter().zip(mu.iter()).fold(zero, |acc, (&s, &m)| acc.max((s * m).abs())),
        }
    }
}

/// Fixed-capacity copy of a problem; avoids heap traffic inside the enumeration.
struct Dense<T: Real> {
    n: usize,
    m: usize,
    h: [[T; CAP_N]; CAP_N],
    c: [T; CAP_N],
    a: [[T; CAP_N]; CAP_M],
    b: [T; CAP_M],
}

struct Candidate<T: Real> {
    x: [T; CAP_N],
    mu: [T; CAP_M],
    mask: u32,
    objective: T,
}

impl<T: Real> Dense<T> {
    fn from_problem(p: &QpProblem<T>) -> Self {
        let (n, m) = (p.dim(), p.num_constraints());
        let mut d = Self::zeroed(n, m);
        for i in 0..n {
            d.c[i] = p.linear[i];
            for j in 0..n {
                d.h[i][j] = p.hessian[(i, j)];
            }
        }
        for r in 0..m {
            d.b[r] = p.ineq_b[r];
            for j in 0..n {
                d.a[r][j] = p.ineq_a[(r, j)];
            }
        }
        d
    }

    fn zeroed(n: usize, m: usize) -> Self {
        let z = T::zero();
        Self {
            n,
            m,
            h: [[z; CAP_N]; CAP_N],
            c: [z; CAP_N],
            a: [[z; CAP_N]; CAP_M],
            b: [z; CAP_M],
        }
    }

    fn objective(&self, x: &[T; CAP_N]) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            let mut hx = T::zero();
            for j in 0..self.n {
                hx += self.h[i][j] * x[j];
            }
            acc += x[i] * (hx / T::lit(2.0) + self.c[i]);
        }
        acc
    }

    /// Inverse of the Hessian via Cholesky; fails unless the Hessian is PD.
    fn hessian_inverse(&self) -> Result<[[T; CAP_N]; CAP_N]> {
        let n = self.n;
        let z = T::zero();
        let mut l = [[z; CAP_N]; CAP_N];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.h[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= T::zero() {
                        return Err(Error::param("QP Hessian is not positive definite"));
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        // invert L, then H^-1 = L^-T L^-1
        let mut linv = [[z; CAP_N]; CAP_N];
        for i in 0..n {
            linv[i][i] = T::one() / l[i][i];
            for j in 0..i {
                let mut s = z;
                for k in j..i {
                    s -= l[i][k] * linv[k][j];
                }
                linv[i][j] = s / l[i][i];
            }
        }
        let mut inv = [[z; CAP_N]; CAP_N];
        for i in 0..n {
            for j in 0..n {
                let mut s = z;
                for k in i.max(j)..n {
                    s += linv[k][i] * linv[k][j];
                }
                inv[i][j] = s;
            }
        }
        Ok(inv)
    }

    fn enumerate(&self, hinv: &[[T; CAP_N]; CAP_N]) -> Option<Candidate<T>> {
        let (n, m) = (self.n, self.m);
        let z = T::zero();
        let tol = T::qp_tol();
        let feas_tol = tol * T::lit(10.0);

        let mut x_unc = [z; CAP_N];
        for i in 0..n {
            for j in 0..n {
                x_unc[i] -= hinv[i][j] * self.c[j];
            }
        }
        // H^-1 a_r for every row
        let mut ha = [[z; CAP_N]; CAP_M];
        for r in 0..m {
            for i in 0..n {
                for j in 0..n {
                    ha[r][i] += hinv[i][j] * self.a[r][j];
                }
            }
        }

        let mut best: Option<Candidate<T>> = None;
        let mut idx = [0usize; CAP_N];
        for mask in 0u32..(1u32 << m) {
            let k = mask.count_ones() as usize;
            if k > n {
                continue;
            }
            let mut t = 0;
            for r in 0..m {
                if mask & (1 << r) != 0 {
                    idx[t] = r;
                    t += 1;
                }
            }
            // Schur system (A_S H^-1 A_S') mu = b_S - A_S x_unc
            let mut sys = [[z; CAP_N + 1]; CAP_N];
            for p in 0..k {
                let rp = idx[p];
                for q in 0..k {
                    let rq = idx[q];
                    let mut s = z;
                    for i in 0..n {
                        s += self.a[rp][i] * ha[rq][i];
                    }
                    sys[p][q] = s;
                }
                let mut ax = z;
                for i in 0..n {
                    ax += self.a[rp][i] * x_unc[i];
                }
                sys[p][k] = self.b[rp] - ax;
            }
            let Some(mu_s) = solve_small(&mut sys, k, tol) else {
                continue;
            };
            if (0..k).any(|p| mu_s[p] < -tol) {
                continue;
            }
            let mut x = x_unc;
            let mut mu = [z; CAP_M];
            for p in 0..k {
                mu[idx[p]] = mu_s[p];
                for i in 0..n {
                    x[i] += ha[idx[p]][i] * mu_s[p];
                }
            }
            let feasible = (0..m).all(|r| {
                let mut ax = z;
                for i in 0..n {
                    ax += self.a[r][i] * x[i];
                }
                ax >= self.b[r] - feas_tol * (T::one() + self.b[r].abs())
            });
            if !feasible {
                continue;
            }
            let obj = self.objective(&x);
            let better = match &best {
                None => true,
                Some(b) => obj < b.objective - tol * (T::one() + b.objective.abs()),
            };
            if better {
                best = Some(Candidate {
                    x,
                    mu,
                    mask,
                    objective: obj,
                });
            }
        }
        best
    }
}

/// Gaussian elimination with partial pivoting on a `k x (k+1)` augmented system.
fn solve_small<T: Real>(sys: &mut [[T; CAP_N + 1]; CAP_N], k: usize, tol: T) -> Option<[T; CAP_N]> {
    let mut out = [T::zero(); CAP_N];
    if k == 0 {
        return Some(out);
    }
    let scale = (0..k).fold(T::zero(), |acc, i| (0..k).fold(acc, |a, j| a.max(sys[i][j].abs())));
    if scale <= T::zero() {
        return None;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| sys[i][col].abs().partial_cmp(&sys[j][col].abs()).unwrap())?;
        if sys[piv][col].abs() <= tol * scale {
            return None;
        }
        sys.swap(col, piv);
        for row in col + 1..k {
            let f = sys[row][col] / sys[col][col];
            for c in col..=k {
                let v = sys[col][c];
                sys[row][c] -= f * v;
            }
        }
    }
    for row in (0..k).rev() {
        let mut s = sys[row][k];
        for c in row + 1..k {
            s -= sys[row][c] * out[c];
        }
        out[row] = s / sys[row][row];
    }
    Some(out)
}

fn to_solution<T: Real>(d: &Dense<T>, cand: &Candidate<T>, status: QpStatus) -> QpSolution<T> {
    let x = DVector::from_fn(d.n, |i, _| cand.x[i]);
    let mu = DVector::from_fn(d.m, |r, _| cand.mu[r]);
    let active = (0..d.m).filter(|r| cand.mask & (1 << r) != 0).collect();
    QpSolution {
        x_star: x,
        active_set: active,
        multipliers: mu,
        objective: cand.objective,
        status,
    }
}

/// Global minimizer of a small strictly convex QP.
pub fn solve_qp<T: Real>(p: &QpProblem<T>) -> Result<QpSolution<T>> {
    p.check_shapes(MAX_VARS, MAX_CONSTRAINTS)?;
    let sym_err = (&p.hessian - p.hessian.transpose()).amax();
    if sym_err > T::qp_tol() * T::one().max(p.hessian.amax()) {
        return Err(Error::param("QP Hessian is not symmetric"));
    }
    let min_eig = p.hessian.clone().symmetric_eigenvalues().min();
    if min_eig <= T::qp_tol() {
        return Err(Error::param("QP Hessian is not positive definite"));
    }
    let d = Dense::from_problem(p);
    let hinv = d.hessian_inverse()?;
    if let Some(c) = d.enumerate(&hinv) {
        return Ok(to_solution(&d, &c, QpStatus::Optimal));
    }
    least_violation(&d)
}

/// Solves `min 1/2 s^2 + eps/2 |x - x_unc|_H^2` s.t. `A x + s >= b`, `s >= 0`.
///
/// Confirms emptiness of the feasible set and yields the least-violating point.
fn least_violation<T: Real>(d: &Dense<T>) -> Result<QpSolution<T>> {
    let n = d.n;
    let m = d.m;
    let eps = T::qp_tol().sqrt();
    let hinv = d.hessian_inverse()?;
    let mut x_unc = [T::zero(); CAP_N];
    for i in 0..n {
        for j in 0..n {
            x_unc[i] -= hinv[i][j] * d.c[j];
        }
    }
    let mut s = Dense::zeroed(n + 1, m + 1);
    for i in 0..n {
        for j in 0..n {
            s.h[i][j] = eps * d.h[i][j];
        }
        let mut hx = T::zero();
        for j in 0..n {
            hx += d.h[i][j] * x_unc[j];
        }
        s.c[i] = -eps * hx;
    }
    s.h[n][n] = T::one();
    for r in 0..m {
        for j in 0..n {
            s.a[r][j] = d.a[r][j];
        }
        s.a[r][n] = T::one();
        s.b[r] = d.b[r];
    }
    s.a[m][n] = T::one();
    let shinv = s.hessian_inverse()?;
    let cand = s
        .enumerate(&shinv)
        .ok_or_else(|| Error::numerical("slack feasibility problem has no KKT point"))?;
    let slack = cand.x[n];
    let mut x = [T::zero(); CAP_N];
    x[..n].copy_from_slice(&cand.x[..n]);
    let status = if slack > T::qp_tol() * T::lit(10.0) {
        QpStatus::Infeasible
    } else {
        QpStatus::Optimal
    };
    let obj = d.objective(&x);
    let active = (0..m).filter(|r| cand.mask & (1 << r) != 0).collect();
    Ok(QpSolution {
        x_star: DVector::from_fn(n, |i, _| x[i]),
        active_set: active,
        multipliers: DVector::zeros(m),
        objective: obj,
        status,
    })
}
