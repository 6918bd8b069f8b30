//! Small dense complex matrices, sized for truncated Fock spaces.

use num_complex::Complex64;

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CMat {
            nrows,
            ncols,
            data: vec![Complex64::new(0.0, 0.0); nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(d: &[Complex64]) -> Self {
        let mut m = CMat::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn adjoint(&self) -> CMat {
        let mut out = CMat::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut out = CMat::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.ncols {
                    out.data[i * other.ncols + j] += a * other.data[k * other.ncols + j];
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.ncols, v.len(), "apply dimension mismatch");
        (0..self.nrows)
            .map(|i| {
                let row = &self.data[i * self.ncols..(i + 1) * self.ncols];
                row.iter().zip(v).map(|(a, x)| a * x).sum()
            })
            .collect()
    }

    /// Scale rows by a diagonal (left multiplication by diag(d)).
    pub fn scale_rows(&mut self, d: &[Complex64]) {
        assert_eq!(d.len(), self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                self.data[i * self.ncols + j] *= d[i];
            }
        }
    }

    /// Scale columns by a diagonal (right multiplication by diag(d)).
    pub fn scale_cols(&mut self, d: &[Complex64]) {
        assert_eq!(d.len(), self.ncols);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                self.data[i * self.ncols + j] *= d[j];
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest singular value via power iteration on A†A with a fixed
    /// deterministic start vector. Accurate to ~1e-12 relative for the small
    /// well-separated spectra that arise here.
    pub fn op_norm(&self) -> f64 {
        if self.data.iter().all(|z| z.norm_sqr() == 0.0) {
            return 0.0;
        }
        let n = self.ncols;
        let mut v: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nv = norm(&v);
        v.iter_mut().for_each(|z| *z /= nv);
        let adj = self.adjoint();
        let mut last = 0.0;
        for _ in 0..500 {
            let w = adj.apply(&self.apply(&v));
            let lam = norm(&w);
            if lam == 0.0 {
                return 0.0;
            }
            v = w.into_iter().map(|z| z / lam).collect();
            if (lam.sqrt() - last).abs() <= 1e-13 * lam.sqrt().max(1.0) {
                return lam.sqrt();
            }
            last = lam.sqrt();
        }
        last
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.ncols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.ncols + j]
    }
}
