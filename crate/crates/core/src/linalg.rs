//! Small dense and tridiagonal linear algebra kernels.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square tridiagonal matrix; row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
/// `lower[0]` and `upper[n-1]` are ignored and kept at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        Self { lower: vec![T::zero(); n], diag: vec![T::zero(); n], upper: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); x.len()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[T], y: &mut [T]) {
        let n = self.len();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `I + c A`.
    pub fn shifted(&self, c: T) -> Self {
        let n = self.len();
        let mut out = Self::zeros(n);
        for i in 0..n {
            out.diag[i] = T::one() + c * self.diag[i];
            if i > 0 {
                out.lower[i] = c * self.lower[i];
            }
            if i + 1 < n {
                out.upper[i] = c * self.upper[i];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        let mut out = Self::zeros(n);
        for i in 0..n {
            out.diag[i] = self.diag[i];
            if i + 1 < n {
                out.upper[i] = self.lower[i + 1];
                out.lower[i + 1] = self.upper[i];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.len();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i > 0 {
                m[(i, i - 1)] = self.lower[i];
            }
            if i + 1 < n {
                m[(i, i + 1)] = self.upper[i];
            }
        }
        m
    }

    pub fn factor(&self) -> Result<TridiagonalLu<T>> {
        TridiagonalLu::new(self)
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let lu = self.factor()?;
        let mut x = rhs.to_vec();
        lu.solve_in_place(&mut x);
        Ok(x)
    }
}

/// Thomas-algorithm factorization, reused across repeated solves.
#[derive(Clone, Debug)]
pub struct TridiagonalLu<T> {
    lower: Vec<T>,
    c_prime: Vec<T>,
    inv_denom: Vec<T>,
}

impl<T: Scalar> TridiagonalLu<T> {
    pub fn new(m: &Tridiagonal<T>) -> Result<Self> {
        let n = m.len();
        let mut c_prime = vec![T::zero(); n];
        let mut inv_denom = vec![T::zero(); n];
        for i in 0..n {
            let denom = if i == 0 { m.diag[0] } else { m.diag[i] - m.lower[i] * c_prime[i - 1] };
            if denom == T::zero() || !denom.is_finite() {
                return Err(Error::Numerical(format!("singular tridiagonal pivot at row {i}")));
            }
            inv_denom[i] = T::one() / denom;
            if i + 1 < n {
                c_prime[i] = m.upper[i] * inv_denom[i];
            }
        }
        Ok(Self { lower: m.lower.clone(), c_prime, inv_denom })
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = x.len();
        if n == 0 {
            return;
        }
        x[0] *= self.inv_denom[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= self.c_prime[i] * next;
        }
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum()).collect()
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &Self, c: T) -> Self {
        let mut out = self.clone();
        for (o, &b) in out.data.iter_mut().zip(&other.data) {
            *o += c * b;
        }
        out
    }

    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= c);
        out
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
    }

    /// Solves `self X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(rhs.rows, self.rows);
        let n = self.rows;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[(i, col)].abs().partial_cmp(&a[(j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(col);
            if a[(pivot, col)] == T::zero() || !a[(pivot, col)].is_finite() {
                return Err(Error::Numerical("singular dense matrix".into()));
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                }
                for j in 0..b.cols {
                    b.data.swap(pivot * b.cols + j, col * b.cols + j);
                }
            }
            let inv = T::one() / a[(col, col)];
            for i in col + 1..n {
                let f = a[(i, col)] * inv;
                if f == T::zero() {
                    continue;
                }
                a[(i, col)] = f;
                for j in col + 1..n {
                    let v = a[(col, j)];
                    a[(i, j)] -= f * v;
                }
                for j in 0..b.cols {
                    let v = b[(col, j)];
                    b[(i, j)] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let inv = T::one() / a[(col, col)];
            for j in 0..b.cols {
                let mut acc = b[(col, j)];
                for k in col + 1..n {
                    acc -= a[(col, k)] * b[(k, j)];
                }
                b[(col, j)] = acc * inv;
            }
        }
        Ok(b)
    }

    pub fn solve_vec(&self, rhs: &[T]) -> Result<Vec<T>> {
        let b = Self { rows: rhs.len(), cols: 1, data: rhs.to_vec() };
        Ok(self.solve(&b)?.data)
    }

    /// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
    pub fn expm(&self) -> Result<Self> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        const B: [f64; 14] = [
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ];
        let theta13 = 5.371920351148152;
        let norm = self.norm1().as_f64();
        if !norm.is_finite() {
            return Err(Error::NonFinite("matrix exponential input".into()));
        }
        let s = if norm > theta13 { (norm / theta13).log2().ceil() as i32 } else { 0 };
        let a = self.scaled(T::of(2f64.powi(-s)));
        let b = |k: usize| T::of(B[k]);
        let id = Self::identity(n);
        let a2 = a.mul(&a);
        let a4 = a2.mul(&a2);
        let a6 = a4.mul(&a2);
        let inner_u = a6.scaled(b(13)).add_scaled(&a4, b(11)).add_scaled(&a2, b(9));
        let u = a6
            .mul(&inner_u)
            .add_scaled(&a6, b(7))
            .add_scaled(&a4, b(5))
            .add_scaled(&a2, b(3))
            .add_scaled(&id, b(1));
        let u = a.mul(&u);
        let inner_v = a6.scaled(b(12)).add_scaled(&a4, b(10)).add_scaled(&a2, b(8));
        let v = a6
            .mul(&inner_v)
            .add_scaled(&a6, b(6))
            .add_scaled(&a4, b(4))
            .add_scaled(&a2, b(2))
            .add_scaled(&id, b(0));
        let p = v.add_scaled(&u, T::one());
        let q = v.add_scaled(&u, -T::one());
        let mut r = q.solve(&p)?;
        for _ in 0..s {
            r = r.mul(&r);
        }
        Ok(r)
    }
}

/// Eigen-decomposition of a real symmetric tridiagonal matrix by implicit QL.
/// Returns eigenvalues and the row-major orthogonal matrix whose columns are eigenvectors.
pub fn symmetric_tridiagonal_eigen<T: Scalar>(diag: &[T], offdiag: &[T]) -> Result<(Vec<T>, DenseMatrix<T>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    for i in 0..n.saturating_sub(1) {
        e[i] = offdiag[i];
    }
    let mut z = DenseMatrix::identity(n);
    let two = T::of(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                return Err(Error::Numerical("tridiagonal eigensolver did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let sign_r = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f = z[(k, i + 1)];
                    let zi = z[(k, i)];
                    z[(k, i + 1)] = s * zi + c * f;
                    z[(k, i)] = c * zi - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok((d, z))
}

/// Propagator `exp(tA)` for a tridiagonal `A` that is similar to a symmetric matrix
/// (all products `lower[i+1] * upper[i]` positive).
#[derive(Clone, Debug)]
pub struct SpectralPropagator<T> {
    scale: Vec<T>,
    eigenvalues: Vec<T>,
    vectors: DenseMatrix<T>,
}

impl<T: Scalar> SpectralPropagator<T> {
    pub fn new(a: &Tridiagonal<T>) -> Result<Self> {
        let n = a.len();
        let mut scale = vec![T::one(); n];
        let mut off = vec![T::zero(); n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            let prod = a.upper[i] * a.lower[i + 1];
            if !(prod > T::zero()) {
                return Err(Error::Numerical(format!("operator is not symmetrizable at row {i}")));
            }
            scale[i + 1] = scale[i] * (a.upper[i] / a.lower[i + 1]).sqrt();
            off[i] = prod.sqrt();
        }
        let (eigenvalues, vectors) = symmetric_tridiagonal_eigen(&a.diag, &off)?;
        Ok(Self { scale, eigenvalues, vectors })
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors of the symmetrized matrix, one per column.
    pub fn vectors(&self) -> &DenseMatrix<T> {
        &self.vectors
    }

    /// Diagonal `d` with `D A D^{-1}` symmetric, `d[0] = 1`.
    pub fn scale(&self) -> &[T] {
        &self.scale
    }

    /// Dense `exp(tA)`.
    pub fn matrix(&self, t: T) -> DenseMatrix<T> {
        let n = self.scale.len();
        let ex: Vec<T> = self.eigenvalues.iter().map(|&l| (l * t).exp()).collect();
        let mut left = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for m in 0..n {
                left[(i, m)] = self.vectors[(i, m)] * ex[m] / self.scale[i];
            }
        }
        let mut right = DenseMatrix::zeros(n, n);
        for m in 0..n {
            for k in 0..n {
                right[(m, k)] = self.vectors[(k, m)] * self.scale[k];
            }
        }
        left.mul(&right)
    }

    /// `exp(tA) x`.
    pub fn apply(&self, t: T, x: &[T]) -> Vec<T> {
        let n = self.scale.len();
        let mut coef = vec![T::zero(); n];
        for m in 0..n {
            let mut acc = T::zero();
            for k in 0..n {
                acc += self.vectors[(k, m)] * self.scale[k] * x[k];
            }
            coef[m] = acc * (self.eigenvalues[m] * t).exp();
        }
        (0..n)
            .map(|i| (0..n).map(|m| self.vectors[(i, m)] * coef[m]).sum::<T>() / self.scale[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_solve() {
        let m: Tridiagonal<f64> = Tridiagonal {
            lower: vec![0.0, -1.0, 0.5, -2.0],
            diag: vec![4.0, 5.0, 6.0, 7.0],
            upper: vec![1.0, 2.0, -1.0, 0.0],
        };
        let rhs = vec![1.0, -2.0, 3.0, 0.5];
        let x = m.solve(&rhs).unwrap();
        let y = m.apply(&x);
        for (a, b) in y.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-13);
        }
        let d = m.to_dense().solve_vec(&rhs).unwrap();
        for (a, b) in x.iter().zip(&d) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn expm_of_rotation_generator() {
        let t = 0.7f64;
        let a = DenseMatrix::from_rows(&[vec![0.0, -t], vec![t, 0.0]]);
        let e = a.expm().unwrap();
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-14);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-14);
        assert!((e[(0, 1)] + t.sin()).abs() < 1e-14);
    }

    #[test]
    fn expm_of_large_generator_is_stochastic() {
        // Two-state chain with rates 300 and 100: stationary (1/4, 3/4).
        let a = DenseMatrix::from_rows(&[vec![-300.0, 300.0], vec![100.0, -100.0]]);
        let e = a.scaled(0.01).expm().unwrap();
        let decay = (-4.0f64).exp();
        assert!((e[(0, 0)] - (0.25 + 0.75 * decay)).abs() < 1e-13);
        assert!((e[(0, 0)] + e[(0, 1)] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let d = vec![2.0, -1.0, 3.0, 0.5, 1.5];
        let o = vec![1.0, 0.3, -0.7, 2.0];
        let (vals, z) = symmetric_tridiagonal_eigen(&d, &o).unwrap();
        let n = d.len();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|m| z[(i, m)] * vals[m] * z[(j, m)]).sum();
                let expect = if i == j {
                    d[i]
                } else if j == i + 1 {
                    o[i]
                } else if i == j + 1 {
                    o[j]
                } else {
                    0.0
                };
                assert!((v - expect).abs() < 1e-12, "{i} {j} {v} {expect}");
            }
        }
    }

    #[test]
    fn spectral_propagator_matches_expm() {
        let a: Tridiagonal<f64> = Tridiagonal {
            lower: vec![0.0, 2.0, 1.5, 1.0],
            diag: vec![-1.0, -3.0, -2.5, -1.0],
            upper: vec![1.0, 1.0, 1.0, 0.0],
        };
        let p = SpectralPropagator::new(&a).unwrap();
        let m = p.matrix(0.3);
        let e = a.to_dense().scaled(0.3).expm().unwrap();
        assert!(m.max_abs_diff(&e) < 1e-13);
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let y = p.apply(0.3, &x);
        let z = e.mul_vec(&x);
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
