//! Macroscopic initial density profiles on `[0, 1]`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

type ProfileFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub enum ProfileShape<T> {
    Constant(T),
    Linear { left: T, right: T },
    /// `left + (right - left) (1 - cos(pi x)) / 2`.
    Cosine { left: T, right: T },
    Custom(ProfileFn<T>),
}

#[derive(Clone)]
pub struct DensityProfile<T> {
    shape: ProfileShape<T>,
}

impl<T: Scalar> fmt::Debug for DensityProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            ProfileShape::Constant(c) => write!(f, "Constant({c})"),
            ProfileShape::Linear { left, right } => write!(f, "Linear({left}, {right})"),
            ProfileShape::Cosine { left, right } => write!(f, "Cosine({left}, {right})"),
            ProfileShape::Custom(_) => write!(f, "Custom"),
        }
    }
}

const CHECK_POINTS: usize = 1024;

impl<T: Scalar> DensityProfile<T> {
    pub fn new(shape: ProfileShape<T>) -> Result<Self> {
        let p = Self { shape };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(c: T) -> Result<Self> {
        Self::new(ProfileShape::Constant(c))
    }

    pub fn linear(left: T, right: T) -> Result<Self> {
        Self::new(ProfileShape::Linear { left, right })
    }

    pub fn cosine(left: T, right: T) -> Result<Self> {
        Self::new(ProfileShape::Cosine { left, right })
    }

    pub fn custom<F: Fn(T) -> T + Send + Sync + 'static>(f: F) -> Result<Self> {
        Self::new(ProfileShape::Custom(Arc::new(f)))
    }

    /// Parses `constant:c`, `linear` or `cosine`; the latter two interpolate between `left` and `right`.
    pub fn parse(spec: &str, left: T, right: T) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("constant:") {
            let c: f64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad constant profile `{spec}`")))?;
            return Self::constant(T::of(c));
        }
        match spec {
            "linear" => Self::linear(left, right),
            "cosine" => Self::cosine(left, right),
            _ => Err(Error::InvalidParameter(format!("unknown profile `{spec}`"))),
        }
    }

    pub fn shape(&self) -> &ProfileShape<T> {
        &self.shape
    }

    pub fn label(&self) -> String {
        match &self.shape {
            ProfileShape::Constant(c) => format!("constant:{c}"),
            ProfileShape::Linear { .. } => "linear".into(),
            ProfileShape::Cosine { .. } => "cosine".into(),
            ProfileShape::Custom(_) => "custom".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        for i in 0..=CHECK_POINTS {
            let x = T::of_usize(i) / T::of_usize(CHECK_POINTS);
            let v = self.eval(x);
            if !v.is_finite() || v < T::zero() || v > T::one() {
                return Err(Error::ProfileOutOfRange { x: x.as_f64(), value: v.as_f64() });
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: T) -> T {
        match &self.shape {
            ProfileShape::Constant(c) => *c,
            ProfileShape::Linear { left, right } => *left + (*right - *left) * x,
            ProfileShape::Cosine { left, right } => {
                let half = T::of(0.5);
                *left + (*right - *left) * half * (T::one() - (T::PI() * x).cos())
            }
            ProfileShape::Custom(f) => f(x),
        }
    }

    /// `\int_0^x rho`.
    pub fn integral(&self, x: T) -> T {
        let half = T::of(0.5);
        match &self.shape {
            ProfileShape::Constant(c) => *c * x,
            ProfileShape::Linear { left, right } => *left * x + (*right - *left) * half * x * x,
            ProfileShape::Cosine { left, right } => {
                *left * x + (*right - *left) * half * (x - (T::PI() * x).sin() / T::PI())
            }
            ProfileShape::Custom(f) => {
                let panels = 256usize;
                let h = x / T::of_usize(2 * panels);
                let mut acc = f(T::zero()) + f(x);
                for i in 1..2 * panels {
                    let w = if i % 2 == 1 { T::of(4.0) } else { T::of(2.0) };
                    acc += w * f(h * T::of_usize(i));
                }
                acc * h / T::of(3.0)
            }
        }
    }

    /// Whether the profile takes the reservoir values at both ends.
    pub fn matches_reservoirs(&self, alpha: T, beta: T) -> bool {
        let tol = T::of(1e-12).max(T::tolerance_floor());
        (self.eval(T::zero()) - alpha).abs() <= tol && (self.eval(T::one()) - beta).abs() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_integrals_match_simpson() {
        for p in [
            DensityProfile::linear(0.3f64, 0.7).unwrap(),
            DensityProfile::cosine(0.2, 0.9).unwrap(),
            DensityProfile::constant(0.4).unwrap(),
        ] {
            let q = p.clone();
            let c = DensityProfile::custom(move |x| q.eval(x)).unwrap();
            for &x in &[0.0, 0.25, 0.6, 1.0] {
                assert!((p.integral(x) - c.integral(x)).abs() < 1e-12, "{p:?} {x}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(DensityProfile::constant(1.2f64), Err(Error::ProfileOutOfRange { .. })));
        assert!(DensityProfile::custom(|x: f64| 2.0 * x).is_err());
    }

    #[test]
    fn parse_variants() {
        let p = DensityProfile::<f64>::parse("constant:0.25", 0.1, 0.9).unwrap();
        assert_eq!(p.eval(0.7), 0.25);
        let l = DensityProfile::<f64>::parse("linear", 0.3, 0.7).unwrap();
        assert!(l.matches_reservoirs(0.3, 0.7));
        assert!(DensityProfile::<f64>::parse("zigzag", 0.3, 0.7).is_err());
    }
}
