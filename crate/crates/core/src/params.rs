use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lattice size, field strength and reservoir densities, plus the derived tilt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams<T> {
    n: usize,
    e_field: T,
    alpha: T,
    beta: T,
    gamma: T,
}

impl<T: Scalar> SystemParams<T> {
    pub fn new(n: usize, e_field: T, alpha: T, beta: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("lattice size N = {n} must be at least 2")));
        }
        if !(e_field > T::zero()) || !e_field.is_finite() {
            return Err(Error::InvalidParameter(format!("field E = {e_field} must be positive and finite")));
        }
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > T::zero() && v < T::one()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        let nt = T::of_usize(n);
        let gamma = -nt * (e_field / nt).ln_1p();
        Ok(Self { n, e_field, alpha, beta, gamma })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn e_field(&self) -> T {
        self.e_field
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// `gamma = -N ln(1 + E/N)`.
    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn n_scalar(&self) -> T {
        T::of_usize(self.n)
    }

    /// Diffusive speed-up `N^2`.
    pub fn speed(&self) -> T {
        let n = self.n_scalar();
        n * n
    }

    /// `1 + E/N = exp(-gamma/N)`.
    pub fn bias(&self) -> T {
        T::one() + self.e_field / self.n_scalar()
    }

    /// `gamma / N`.
    pub fn step_exponent(&self) -> T {
        self.gamma / self.n_scalar()
    }

    /// Boundary coefficients `(R_n, S_n)` of the order-`n` operator.
    pub fn boundary_coefficients(&self, order: u32) -> (T, T) {
        let nt = self.n_scalar();
        let k = T::of(order as f64) * self.step_exponent();
        let r = -nt * self.bias() * k.exp_m1();
        let s = nt * (-k).exp_m1();
        (r, s)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(n, self.e_field, self.alpha, self.beta)
    }

    pub fn with_e_field(&self, e: T) -> Result<Self> {
        Self::new(self.n, e, self.alpha, self.beta)
    }

    pub fn with_reservoirs(&self, alpha: T, beta: T) -> Result<Self> {
        Self::new(self.n, self.e_field, alpha, beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilt_matches_bias() {
        for &(n, e) in &[(2usize, 0.5), (16, 1.0), (256, 3.0)] {
            let p = SystemParams::new(n, e, 0.3, 0.7).unwrap();
            assert!(((-p.gamma() / n as f64).exp() - (1.0 + e / n as f64)).abs() < 1e-15);
            assert!(p.gamma() < 0.0);
        }
    }

    #[test]
    fn first_order_boundary_coefficients_equal_field() {
        let p = SystemParams::new(37, 1.7f64, 0.3, 0.7).unwrap();
        let (r, s) = p.boundary_coefficients(1);
        assert!((r - 1.7).abs() < 1e-10);
        assert!((s - 1.7).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SystemParams::new(1, 1.0, 0.5, 0.5).is_err());
        assert!(SystemParams::new(4, 0.0, 0.5, 0.5).is_err());
        assert!(SystemParams::new(4, 1.0, 0.0, 0.5).is_err());
        assert!(SystemParams::new(4, 1.0, 0.5, 1.0).is_err());
    }
}
