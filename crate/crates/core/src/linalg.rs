//! Small structured solvers: tridiagonal (Thomas), cyclic tridiagonal via
//! Sherman–Morrison, and symmetric banded Cholesky.

use crate::error::{Error, Result};

/// Solves `a_i y_{i-1} + b_i y_i + c_i y_{i+1} = r_i` (a_0, c_{n-1} ignored).
pub fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if b[0] == 0.0 {
        return Err(Error::numeric("zero pivot in tridiagonal solve"));
    }
    cp[0] = c[0] / b[0];
    dp[0] = r[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        if m == 0.0 || !m.is_finite() {
            return Err(Error::numeric("zero pivot in tridiagonal solve"));
        }
        cp[i] = if i + 1 < n { c[i] / m } else { 0.0 };
        dp[i] = (r[i] - a[i] * dp[i - 1]) / m;
    }
    let mut y = dp;
    for i in (0..n - 1).rev() {
        y[i] -= cp[i] * y[i + 1];
    }
    Ok(y)
}

/// Cyclic tridiagonal system: as [`solve_tridiagonal`] plus corner entries
/// `a_0` (row 0, column n-1) and `c_{n-1}` (row n-1, column 0).
pub fn solve_cyclic_tridiagonal(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if n < 3 {
        return Err(Error::invalid("cyclic tridiagonal system needs n >= 3"));
    }
    let alpha = c[n - 1];
    let beta = a[0];
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] = b[0] - gamma;
    bb[n - 1] = b[n - 1] - alpha * beta / gamma;
    let x = solve_tridiagonal(a, &bb, c, r)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(a, &bb, c, &u)?;
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    if !fact.is_finite() {
        return Err(Error::numeric("singular cyclic tridiagonal system"));
    }
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Symmetric banded matrix in lower storage: `data[i][k] = A[i][i-k]`.
#[derive(Debug, Clone)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Adds `v` to `A[i][j]` (and `A[j][i]`); silently requires `|i-j| <= bw`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = r - c;
        debug_assert!(k <= self.bw, "entry outside band");
        self.data[r * (self.bw + 1) + k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = r - c;
        if k > self.bw {
            0.0
        } else {
            self.data[r * (self.bw + 1) + k]
        }
    }

    pub fn add_diagonal(&mut self, shift: f64) {
        for i in 0..self.n {
            self.data[i * (self.bw + 1)] += shift;
        }
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * (self.bw + 1)].abs()).fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in 0..=self.bw.min(i) {
                let a = self.data[i * (self.bw + 1) + k];
                let j = i - k;
                y[i] += a * x[j];
                if k > 0 {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Banded Cholesky `A = L Lᵀ`; `None` when `A` is not positive definite.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let jstart = i.saturating_sub(bw);
            for j in jstart..=i {
                let mut s = l[i * w + (i - j)];
                let kstart = jstart.max(j.saturating_sub(bw));
                for k in kstart..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Some(BandedCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let w = self.bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + w) {
                s -= self.l[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        y
    }
}
