//! Semi-discrete operators on `{0..N-1}` and `{0..N}`, the weighted space `L^2(m_N)`,
//! time evolution and heat kernels.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SpectralPropagator, Tridiagonal, TridiagonalLu};
use crate::params::SystemParams;
use crate::rng::ReplicaStream;
use crate::scalar::Scalar;

/// Real function on the consecutive sites `first..first + values.len()` of a lattice of size `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField<T> {
    n: usize,
    first: usize,
    values: Vec<T>,
}

impl<T: Scalar> LatticeField<T> {
    pub fn new(n: usize, first: usize, values: Vec<T>) -> Self {
        Self { n, first, values }
    }

    /// Function on `{0, .., N-1}`.
    pub fn bulk(n: usize, values: Vec<T>) -> Result<Self> {
        Self::checked(n, 0, n, values, "{0..N-1}")
    }

    /// Function on `{0, .., N}`.
    pub fn closed(n: usize, values: Vec<T>) -> Result<Self> {
        Self::checked(n, 0, n + 1, values, "{0..N}")
    }

    /// Function on `{1, .., N-1}`.
    pub fn interior(n: usize, values: Vec<T>) -> Result<Self> {
        Self::checked(n, 1, n - 1, values, "{1..N-1}")
    }

    fn checked(n: usize, first: usize, len: usize, values: Vec<T>, label: &str) -> Result<Self> {
        if values.len() != len {
            return Err(Error::DomainMismatch {
                expected: format!("{len} values on {label}"),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Self { n, first, values })
    }

    pub fn bulk_from_fn(n: usize, f: impl Fn(usize) -> T) -> Self {
        Self { n, first: 0, values: (0..n).map(f).collect() }
    }

    pub fn closed_from_fn(n: usize, f: impl Fn(usize) -> T) -> Self {
        Self { n, first: 0, values: (0..=n).map(f).collect() }
    }

    /// Samples `g(j/N)` on `{0..N}`.
    pub fn sample_closed(n: usize, g: impl Fn(T) -> T) -> Self {
        let nt = T::of_usize(n);
        Self::closed_from_fn(n, |j| g(T::of_usize(j) / nt))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn first(&self) -> usize {
        self.first
    }

    /// Last site covered.
    pub fn last(&self) -> usize {
        self.first + self.values.len() - 1
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, j: usize) -> Option<T> {
        j.checked_sub(self.first).and_then(|i| self.values.get(i)).copied()
    }

    #[inline]
    pub fn at(&self, j: usize) -> T {
        self.values[j - self.first]
    }

    pub fn is_bulk(&self) -> bool {
        self.first == 0 && self.values.len() == self.n
    }

    pub fn is_closed(&self) -> bool {
        self.first == 0 && self.values.len() == self.n + 1
    }

    pub fn describe(&self) -> String {
        format!("{{{}..{}}}", self.first, self.last())
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `N [f(j+1) - f(j)]`.
    GradPlus,
    /// `N [f(j) - f(j-1)]`.
    GradMinus,
    /// `N^2 [f(j+1) + f(j-1) - 2 f(j)]`.
    Laplacian,
}

/// Finite differences on every site where the stencil fits inside `f`'s domain.
pub fn apply_stencil<T: Scalar>(kind: Stencil, f: &LatticeField<T>) -> Result<LatticeField<T>> {
    let nt = T::of_usize(f.n);
    let v = &f.values;
    let (first, values): (usize, Vec<T>) = match kind {
        Stencil::GradPlus => (f.first, v.windows(2).map(|w| nt * (w[1] - w[0])).collect()),
        Stencil::GradMinus => (f.first + 1, v.windows(2).map(|w| nt * (w[1] - w[0])).collect()),
        Stencil::Laplacian => {
            (f.first + 1, v.windows(3).map(|w| nt * nt * (w[2] + w[0] - T::of(2.0) * w[1])).collect())
        }
    };
    if values.is_empty() {
        return Err(Error::DomainMismatch {
            expected: "a domain larger than the stencil footprint".into(),
            found: f.describe(),
        });
    }
    Ok(LatticeField { n: f.n, first, values })
}

/// Operators of the semi-discrete family.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorSpec<T> {
    /// Generator governing `E[xi]`.
    Omega,
    /// Adjoint of `Omega` for the counting measure.
    OmegaStar,
    /// Same interior as `Omega`, boundary coefficients `R_n`, `S_n`; order `0` is the reflecting walk.
    OmegaN(u32),
    /// Operator on `{0..N}` built from a positive weight `phi` on `{0..N-1}`; zero rows at both ends.
    APhi(LatticeField<T>),
}

impl<T: Scalar> OperatorSpec<T> {
    pub fn label(&self) -> String {
        match self {
            Self::Omega => "omega".into(),
            Self::OmegaStar => "omega_star".into(),
            Self::OmegaN(n) => format!("omega_{n}"),
            Self::APhi(_) => "a_phi".into(),
        }
    }

    fn acts_on_closed(&self) -> bool {
        matches!(self, Self::APhi(_))
    }
}

/// `theta_phi(j) = (grad^- phi)(j) / (E phi(j-1))` for `1 <= j <= N-1`.
pub fn theta<T: Scalar>(phi: &LatticeField<T>, params: &SystemParams<T>) -> Result<Vec<T>> {
    check_positive(phi)?;
    let nt = params.n_scalar();
    Ok((1..params.n()).map(|j| nt * (phi.at(j) - phi.at(j - 1)) / (params.e_field() * phi.at(j - 1))).collect())
}

fn check_positive<T: Scalar>(phi: &LatticeField<T>) -> Result<()> {
    for (i, &v) in phi.values.iter().enumerate() {
        if !(v > T::zero()) {
            return Err(Error::NonPositive { site: phi.first + i, value: v.as_f64() });
        }
    }
    Ok(())
}

/// Coefficients of the `A_phi` interior row `j`: `(lower, diag, upper)`.
#[inline]
pub fn a_phi_row<T: Scalar>(theta: T, params: &SystemParams<T>) -> (T, T, T) {
    let nt = params.n_scalar();
    let e = params.e_field();
    let n2 = nt * nt;
    let a = e * (T::one() - theta) / (T::one() + e / nt * theta);
    let b = e * theta;
    (n2 + b * nt, -(n2 + n2) - a * nt - b * nt, n2 + a * nt)
}

/// Tridiagonal matrix of the operator.
pub fn operator_matrix<T: Scalar>(spec: &OperatorSpec<T>, params: &SystemParams<T>) -> Result<Tridiagonal<T>> {
    let n = params.n();
    let nt = params.n_scalar();
    let n2 = params.speed();
    let e = params.e_field();
    let bias = params.bias();
    let (alpha, beta) = (params.alpha(), params.beta());
    let two = T::of(2.0);
    match spec {
        OperatorSpec::Omega | OperatorSpec::OmegaN(_) => {
            let (r, s) = match spec {
                OperatorSpec::OmegaN(order) => params.boundary_coefficients(*order),
                _ => (e, e),
            };
            let mut m = Tridiagonal::zeros(n);
            for j in 1..n.saturating_sub(1) {
                m.lower[j] = n2 * bias;
                m.diag[j] = -two * n2 - e * nt;
                m.upper[j] = n2;
            }
            m.diag[0] = -alpha * nt * r - n2;
            m.upper[0] = n2;
            m.lower[n - 1] = n2 * bias;
            m.diag[n - 1] = beta * nt * s - n2 * bias;
            if n == 1 {
                m.upper[0] = T::zero();
            }
            Ok(m)
        }
        OperatorSpec::OmegaStar => {
            let mut m = Tridiagonal::zeros(n);
            for j in 1..n.saturating_sub(1) {
                m.lower[j] = n2;
                m.diag[j] = -two * n2 - e * nt;
                m.upper[j] = n2 + e * nt;
            }
            m.diag[0] = (T::one() - alpha) * e * nt - nt * (e + nt);
            m.upper[0] = nt * (nt + e);
            m.lower[n - 1] = n2;
            m.diag[n - 1] = -(T::one() - beta) * e * nt - n2;
            Ok(m)
        }
        OperatorSpec::APhi(phi) => {
            if !phi.is_bulk() || phi.n != n {
                return Err(Error::DomainMismatch { expected: "weight on {0..N-1}".into(), found: phi.describe() });
            }
            let th = theta(phi, params)?;
            let mut m = Tridiagonal::zeros(n + 1);
            for j in 1..n {
                let (lo, d, up) = a_phi_row(th[j - 1], params);
                m.lower[j] = lo;
                m.diag[j] = d;
                m.upper[j] = up;
            }
            Ok(m)
        }
    }
}

pub fn apply_operator<T: Scalar>(
    spec: &OperatorSpec<T>,
    params: &SystemParams<T>,
    f: &LatticeField<T>,
) -> Result<LatticeField<T>> {
    check_domain(spec, params, f)?;
    let m = operator_matrix(spec, params)?;
    Ok(LatticeField { n: f.n, first: 0, values: m.apply(&f.values) })
}

fn check_domain<T: Scalar>(spec: &OperatorSpec<T>, params: &SystemParams<T>, f: &LatticeField<T>) -> Result<()> {
    let ok = f.n == params.n() && if spec.acts_on_closed() { f.is_closed() } else { f.is_bulk() };
    if ok {
        Ok(())
    } else {
        let expected = if spec.acts_on_closed() { "{0..N}" } else { "{0..N-1}" };
        Err(Error::DomainMismatch { expected: format!("{expected} with N = {}", params.n()), found: f.describe() })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityResidual<T> {
    pub max_abs: T,
    /// Largest magnitude among the three terms.
    pub scale: T,
    pub per_site: Vec<T>,
}

impl<T: Scalar> IdentityResidual<T> {
    pub fn relative(&self) -> T {
        if self.scale > T::zero() {
            self.max_abs / self.scale
        } else {
            self.max_abs
        }
    }
}

/// Residual of `Omega*(grad g / phi) - grad g (Omega phi) / phi^2 - grad(A_phi g) / phi` on `{0..N-1}`.
pub fn remarkable_identity_residual<T: Scalar>(
    g: &LatticeField<T>,
    phi: &LatticeField<T>,
    params: &SystemParams<T>,
) -> Result<IdentityResidual<T>> {
    let n = params.n();
    if !g.is_closed() || g.n != n {
        return Err(Error::DomainMismatch { expected: "g on {0..N}".into(), found: g.describe() });
    }
    if !phi.is_bulk() || phi.n != n {
        return Err(Error::DomainMismatch { expected: "phi on {0..N-1}".into(), found: phi.describe() });
    }
    check_positive(phi)?;
    let grad = apply_stencil(Stencil::GradPlus, g)?;
    let ratio: Vec<T> = (0..n).map(|j| grad.at(j) / phi.at(j)).collect();
    let t1 = operator_matrix(&OperatorSpec::OmegaStar, params)?.apply(&ratio);
    let omega_phi = operator_matrix(&OperatorSpec::Omega, params)?.apply(phi.values());
    let a = apply_operator(&OperatorSpec::APhi(phi.clone()), params, g)?;
    let grad_a = apply_stencil(Stencil::GradPlus, &a)?;
    let mut per_site = Vec::with_capacity(n);
    let (mut max_abs, mut scale) = (T::zero(), T::zero());
    for j in 0..n {
        let p = phi.at(j);
        let t2 = grad.at(j) * omega_phi[j] / (p * p);
        let t3 = grad_a.at(j) / p;
        let r = t1[j] - t2 - t3;
        per_site.push(r);
        max_abs = max_abs.max(r.abs());
        scale = scale.max(t1[j].abs()).max(t2.abs()).max(t3.abs());
    }
    Ok(IdentityResidual { max_abs, scale, per_site })
}

/// `L^2(m_N)` with `m_N(k) = (1 + E/N)^{-k}` on `{0..N-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSpace<T> {
    n: usize,
    weights: Vec<T>,
}

impl<T: Scalar> WeightedSpace<T> {
    pub fn new(params: &SystemParams<T>) -> Self {
        let lb = params.bias().ln();
        Self { n: params.n(), weights: (0..params.n()).map(|k| (-lb * T::of_usize(k)).exp()).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn inner(&self, f: &[T], g: &[T]) -> T {
        f.iter().zip(g).zip(&self.weights).map(|((&a, &b), &m)| a * b * m).sum()
    }

    pub fn norm_sq(&self, f: &[T]) -> T {
        self.inner(f, f)
    }

    /// `N^2 sum_{k <= N-2} (f(k+1) - f(k))^2 m_N(k)`.
    pub fn dirichlet_form(&self, f: &[T]) -> T {
        let nt = T::of_usize(self.n);
        nt * nt * (0..self.n - 1).map(|k| (f[k + 1] - f[k]).powi(2) * self.weights[k]).sum::<T>()
    }

    /// `sum f^2 log f^2 m_N`, with `0 log 0 = 0`.
    pub fn entropy(&self, f: &[T]) -> T {
        f.iter()
            .zip(&self.weights)
            .map(|(&v, &m)| {
                let s = v * v;
                if s > T::zero() {
                    s * s.ln() * m
                } else {
                    T::zero()
                }
            })
            .sum()
    }
}

pub fn dirichlet_form<T: Scalar>(f: &LatticeField<T>, space: &WeightedSpace<T>) -> Result<T> {
    if !f.is_bulk() || f.n != space.n {
        return Err(Error::DomainMismatch { expected: "{0..N-1}".into(), found: f.describe() });
    }
    Ok(space.dirichlet_form(&f.values))
}

#[derive(Clone, Debug)]
pub struct LogSobolevOptions {
    pub random_trials: usize,
    pub ascent_starts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for LogSobolevOptions {
    fn default() -> Self {
        Self { random_trials: 1000, ascent_starts: 20, max_iterations: 20_000, seed: 0x1ad5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogSobolevEstimate<T> {
    /// Largest entropy / Dirichlet ratio found; every tested unit vector satisfies the inequality with it.
    pub a0_hat: T,
    pub random_max: T,
    pub ascent_max: T,
    pub reliable: bool,
}

/// Largest supported lattice for the log-Sobolev search.
pub const LOG_SOBOLEV_MAX_N: usize = 256;

/// Searches for the smallest constant in `sum f^2 log f^2 m_N <= A D_N(f)` over `||f||_2 = 1`.
pub fn estimate_log_sobolev<T: Scalar>(
    space: &WeightedSpace<T>,
    opts: &LogSobolevOptions,
) -> Result<LogSobolevEstimate<T>> {
    let n = space.n;
    if n > LOG_SOBOLEV_MAX_N {
        return Err(Error::InvalidParameter(format!("log-Sobolev search supports N <= {LOG_SOBOLEV_MAX_N}")));
    }
    let mut stream = ReplicaStream::new(opts.seed, n as u64);
    let normalize = |f: &mut Vec<T>| {
        let s = space.norm_sq(f).sqrt();
        f.iter_mut().for_each(|v| *v /= s);
    };
    let ratio = |f: &[T]| -> T {
        let d = space.dirichlet_form(f);
        if d > T::zero() {
            space.entropy(f) / d
        } else {
            T::neg_infinity()
        }
    };
    let mut random_max = T::neg_infinity();
    for _ in 0..opts.random_trials {
        let mut f: Vec<T> = (0..n).map(|_| stream.normal::<T>()).collect::<Result<_>>()?;
        normalize(&mut f);
        random_max = random_max.max(ratio(&f));
    }
    let mut ascent_max = T::neg_infinity();
    let mut reliable = true;
    for start in 0..opts.ascent_starts {
        let mut f: Vec<T> = if start < n.min(opts.ascent_starts / 2) {
            // Localized starts: the extremizers concentrate near a single site.
            let site = start * (n - 1) / (opts.ascent_starts / 2).max(1);
            (0..n)
                .map(|k| {
                    let d = T::of_usize(k.abs_diff(site));
                    (-d).exp()
                })
                .collect()
        } else {
            (0..n).map(|_| stream.normal::<T>()).collect::<Result<_>>()?
        };
        normalize(&mut f);
        let (best, converged) = ascend(space, &mut f, opts.max_iterations, &ratio, &normalize);
        reliable &= converged;
        ascent_max = ascent_max.max(best);
    }
    let a0_hat = random_max.max(ascent_max).max(T::zero());
    Ok(LogSobolevEstimate { a0_hat, random_max, ascent_max, reliable })
}

fn ascend<T: Scalar>(
    space: &WeightedSpace<T>,
    f: &mut Vec<T>,
    iterations: usize,
    ratio: &dyn Fn(&[T]) -> T,
    normalize: &dyn Fn(&mut Vec<T>),
) -> (T, bool) {
    let n = f.len();
    let nt = T::of_usize(n);
    let m = space.weights();
    let mut value = ratio(f);
    let mut step = T::one();
    let tol = T::of(1e-10);
    for _ in 0..iterations {
        let d = space.dirichlet_form(f);
        if !(d > T::zero()) {
            return (value, true);
        }
        // Gradients in the L^2(m_N) geometry.
        let mut grad = vec![T::zero(); n];
        for k in 0..n {
            let s = f[k] * f[k];
            let dent = if s > T::zero() { T::of(2.0) * f[k] * (s.ln() + T::one()) } else { T::zero() };
            let mut lap = T::zero();
            if k > 0 {
                lap += (f[k] - f[k - 1]) * m[k - 1];
            }
            if k + 1 < n {
                lap += (f[k] - f[k + 1]) * m[k];
            }
            let dd = T::of(2.0) * nt * nt * lap / m[k];
            grad[k] = (dent - value * dd) / d;
        }
        let proj = space.inner(&grad, f);
        grad.iter_mut().zip(f.iter()).for_each(|(g, &v)| *g -= proj * v);
        let gnorm = space.norm_sq(&grad).sqrt();
        if gnorm <= tol * value.abs().max(T::one()) {
            return (value, true);
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut trial: Vec<T> = f.iter().zip(&grad).map(|(&v, &g)| v + step * g / gnorm).collect();
            normalize(&mut trial);
            let v = ratio(&trial);
            if v > value {
                let gain = v - value;
                *f = trial;
                value = v;
                step = step * T::of(1.5);
                improved = true;
                if gain <= tol * value.abs().max(T::tolerance_floor()) {
                    return (value, true);
                }
                break;
            }
            step = step * T::of(0.5);
        }
        if !improved {
            return (value, true);
        }
    }
    (value, false)
}

#[derive(Clone, Debug)]
pub struct EvolveOptions<T> {
    /// Relative sup-norm tolerance for the step-doubling error estimate.
    pub tolerance: T,
    /// Upper bound on the step; defaults to `1 / (4 N^2)`.
    pub max_dt: Option<T>,
    pub max_refinements: usize,
    /// Skip the step-doubling check and integrate once at `max_dt`.
    pub unchecked: bool,
}

impl<T: Scalar> Default for EvolveOptions<T> {
    fn default() -> Self {
        Self { tolerance: T::of(1e-8), max_dt: None, max_refinements: 12, unchecked: false }
    }
}

impl<T: Scalar> EvolveOptions<T> {
    pub fn unchecked(max_dt: Option<T>) -> Self {
        Self { unchecked: true, max_dt, ..Self::default() }
    }

    pub fn base_dt(&self, n: usize) -> T {
        let nt = T::of_usize(n);
        let cfl = T::one() / (T::of(4.0) * nt * nt);
        self.max_dt.map_or(cfl, |d| d.min(cfl))
    }
}

/// Crank-Nicolson stepper for a fixed operator and step.
#[derive(Clone, Debug)]
pub struct CrankNicolson<T> {
    explicit: Tridiagonal<T>,
    implicit: TridiagonalLu<T>,
    scratch: Vec<T>,
}

impl<T: Scalar> CrankNicolson<T> {
    pub fn new(op: &Tridiagonal<T>, dt: T) -> Result<Self> {
        let half = dt * T::of(0.5);
        Ok(Self {
            explicit: op.shifted(half),
            implicit: op.shifted(-half).factor()?,
            scratch: vec![T::zero(); op.len()],
        })
    }

    pub fn step(&mut self, u: &mut [T]) {
        self.explicit.apply_into(u, &mut self.scratch);
        u.copy_from_slice(&self.scratch);
        self.implicit.solve_in_place(u);
    }
}

/// Integrates `du/dt = A(t) u` and returns `u` at each of the sorted `times` (starting from `t = 0`).
/// `op_at` receives the midpoint time of every step.
pub fn integrate_path<T: Scalar, F>(u0: &[T], times: &[T], max_dt: T, mut op_at: Option<F>, fixed: Option<&Tridiagonal<T>>) -> Result<Vec<Vec<T>>>
where
    F: FnMut(T) -> Result<Tridiagonal<T>>,
{
    let mut u = u0.to_vec();
    let mut out = Vec::with_capacity(times.len());
    let mut now = T::zero();
    let mut cached: Option<(T, CrankNicolson<T>)> = None;
    for &target in times {
        if target < now {
            return Err(Error::InvalidParameter(format!("output times must be sorted, found {target} after {now}")));
        }
        let span = target - now;
        if span > T::zero() {
            let steps = (span / max_dt).ceil().to_usize().unwrap_or(1).max(1);
            let dt = span / T::of_usize(steps);
            for k in 0..steps {
                match (&mut op_at, fixed) {
                    (Some(f), _) => {
                        let mid = now + dt * (T::of_usize(k) + T::of(0.5));
                        let mut cn = CrankNicolson::new(&f(mid)?, dt)?;
                        cn.step(&mut u);
                    }
                    (None, Some(op)) => {
                        let reuse = matches!(&cached, Some((d, _)) if *d == dt);
                        if !reuse {
                            cached = Some((dt, CrankNicolson::new(op, dt)?));
                        }
                        cached.as_mut().expect("stepper").1.step(&mut u);
                    }
                    (None, None) => return Err(Error::InvalidParameter("no operator supplied".into())),
                }
            }
            if let Some(bad) = u.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("integrator produced {bad}")));
            }
        }
        now = target;
        out.push(u.clone());
    }
    Ok(out)
}

fn max_rel_diff<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> T {
    let mut worst = T::zero();
    for (x, y) in a.iter().zip(b) {
        let scale = y.iter().fold(T::zero(), |s, v| s.max(v.abs())).max(T::min_positive_value());
        let d = x.iter().zip(y).fold(T::zero(), |s, (p, q)| s.max((*p - *q).abs()));
        worst = worst.max(d / scale);
    }
    worst
}

/// Step-doubling driver around [`integrate_path`].
pub fn integrate_checked<T: Scalar, F>(
    u0: &[T],
    times: &[T],
    n: usize,
    opts: &EvolveOptions<T>,
    mut op_at: Option<F>,
    fixed: Option<&Tridiagonal<T>>,
) -> Result<Vec<Vec<T>>>
where
    F: FnMut(T) -> Result<Tridiagonal<T>>,
{
    let mut dt = opts.base_dt(n);
    let mut coarse = integrate_path(u0, times, dt, op_at.as_mut(), fixed)?;
    if opts.unchecked {
        return Ok(coarse);
    }
    let mut estimate = T::infinity();
    for _ in 0..=opts.max_refinements {
        dt = dt * T::of(0.5);
        let fine = integrate_path(u0, times, dt, op_at.as_mut(), fixed)?;
        estimate = max_rel_diff(&coarse, &fine) / T::of(3.0);
        if estimate <= opts.tolerance {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::IntegratorFailure { tolerance: opts.tolerance.as_f64(), estimate: estimate.as_f64() })
}

/// Solution of `d/dt f = A f` at time `t`.
pub fn evolve<T: Scalar>(
    spec: &OperatorSpec<T>,
    params: &SystemParams<T>,
    f0: &LatticeField<T>,
    t: T,
    opts: &EvolveOptions<T>,
) -> Result<LatticeField<T>> {
    let mut path = evolve_path(spec, params, f0, &[t], opts)?;
    Ok(path.pop().expect("one output"))
}

/// Solution at each of the sorted `times`.
pub fn evolve_path<T: Scalar>(
    spec: &OperatorSpec<T>,
    params: &SystemParams<T>,
    f0: &LatticeField<T>,
    times: &[T],
    opts: &EvolveOptions<T>,
) -> Result<Vec<LatticeField<T>>> {
    check_domain(spec, params, f0)?;
    if times.iter().any(|&t| !(t >= T::zero())) {
        return Err(Error::InvalidParameter("evolution times must be nonnegative".into()));
    }
    let op = operator_matrix(spec, params)?;
    let none: Option<fn(T) -> Result<Tridiagonal<T>>> = None;
    let path = integrate_checked(f0.values(), times, params.n(), opts, none, Some(&op))?;
    Ok(path.into_iter().map(|v| LatticeField { n: f0.n, first: 0, values: v }).collect())
}

/// Exact propagator of `Omega_n` by symmetrization; `kernel(t)[(j, k)] = q_t(j, k)`.
#[derive(Clone, Debug)]
pub struct HeatKernel<T> {
    propagator: SpectralPropagator<T>,
}

impl<T: Scalar> HeatKernel<T> {
    pub fn new(order: u32, params: &SystemParams<T>) -> Result<Self> {
        let op = operator_matrix(&OperatorSpec::OmegaN(order), params)?;
        Ok(Self { propagator: SpectralPropagator::new(&op)? })
    }

    /// Row `j` is the solution at time `t` started from the delta at `j`.
    pub fn kernel(&self, t: T) -> DenseMatrix<T> {
        self.propagator.matrix(t).transpose()
    }

    /// `exp(t Omega_n) f`.
    pub fn apply(&self, t: T, f: &[T]) -> Vec<T> {
        self.propagator.apply(t, f)
    }

    pub fn eigenvalues(&self) -> &[T] {
        self.propagator.eigenvalues()
    }

    pub fn propagator(&self) -> &SpectralPropagator<T> {
        &self.propagator
    }
}

/// `q_t(j, k)`, the solution at site `k` and time `t` started from the delta at `j`.
pub fn heat_kernel<T: Scalar>(order: u32, params: &SystemParams<T>, t: T) -> Result<DenseMatrix<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidParameter(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(HeatKernel::new(order, params)?.kernel(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> SystemParams<f64> {
        SystemParams::new(n, 1.0, 0.3, 0.7).unwrap()
    }

    #[test]
    fn stencils_on_linear_and_quadratic() {
        let n = 10;
        let lin = LatticeField::closed_from_fn(n, |j| j as f64 / n as f64);
        let g = apply_stencil(Stencil::GradPlus, &lin).unwrap();
        assert!(g.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let l = apply_stencil(Stencil::Laplacian, &lin).unwrap();
        assert!(l.values().iter().all(|&v| v.abs() < 1e-10));
        let quad = LatticeField::closed_from_fn(n, |j| (j as f64 / n as f64).powi(2));
        let l = apply_stencil(Stencil::Laplacian, &quad).unwrap();
        assert!((l.at(5) - 2.0).abs() < 1e-12);
        let c = LatticeField::bulk_from_fn(n, |_| 3.0);
        for k in [Stencil::GradPlus, Stencil::GradMinus, Stencil::Laplacian] {
            assert!(apply_stencil(k, &c).unwrap().values().iter().all(|&v| v == 0.0));
        }
        let tiny = LatticeField::new(n, 0, vec![1.0, 2.0]);
        assert!(apply_stencil(Stencil::Laplacian, &tiny).is_err());
    }

    #[test]
    fn omega_on_constant() {
        let p = params(8);
        let one = LatticeField::bulk_from_fn(8, |_| 1.0);
        let r = apply_operator(&OperatorSpec::Omega, &p, &one).unwrap();
        assert!((r.at(0) + 0.3 * 8.0).abs() < 1e-12);
        assert!((r.at(7) - 0.7 * 8.0).abs() < 1e-12);
        assert!(r.values()[1..7].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn first_order_matches_omega_and_adjoint_is_transpose() {
        let p = params(13);
        let a = operator_matrix(&OperatorSpec::Omega, &p).unwrap();
        let b = operator_matrix(&OperatorSpec::OmegaN(1), &p).unwrap();
        assert!(a.to_dense().max_abs_diff(&b.to_dense()) < 1e-12 * p.speed());
        let s = operator_matrix(&OperatorSpec::OmegaStar, &p).unwrap();
        assert!(s.to_dense().max_abs_diff(&a.transpose().to_dense()) < 1e-12 * p.speed());
    }

    #[test]
    fn a_phi_with_constant_weight() {
        let p = params(12);
        let phi = LatticeField::bulk_from_fn(12, |_| 2.0);
        let g = LatticeField::closed_from_fn(12, |j| ((j * j) as f64).sin());
        let a = apply_operator(&OperatorSpec::APhi(phi), &p, &g).unwrap();
        let lap = apply_stencil(Stencil::Laplacian, &g).unwrap();
        let grad = apply_stencil(Stencil::GradPlus, &g).unwrap();
        assert_eq!(a.at(0), 0.0);
        assert_eq!(a.at(12), 0.0);
        for j in 1..12 {
            assert!((a.at(j) - lap.at(j) - grad.at(j)).abs() < 1e-9);
        }
        let bad = LatticeField::bulk_from_fn(12, |j| if j == 3 { 0.0 } else { 1.0 });
        assert!(matches!(theta(&bad, &p), Err(Error::NonPositive { site: 3, .. })));
    }

    #[test]
    fn remarkable_identity_trivial_cases() {
        let p = params(9);
        let phi = LatticeField::bulk_from_fn(9, |_| 1.5);
        let zero = LatticeField::closed_from_fn(9, |_| 0.0);
        assert_eq!(remarkable_identity_residual(&zero, &phi, &p).unwrap().max_abs, 0.0);
        let g = LatticeField::closed_from_fn(9, |j| (j as f64 * 0.7).cos());
        assert!(remarkable_identity_residual(&g, &phi, &p).unwrap().relative() < 1e-10);
    }

    #[test]
    fn dirichlet_form_examples() {
        let p = SystemParams::new(2, 1.0, 0.5, 0.5).unwrap();
        let space = WeightedSpace::new(&p);
        let f = LatticeField::bulk_from_fn(2, |k| k as f64 / 2.0);
        assert!((dirichlet_form(&f, &space).unwrap() - 1.0).abs() < 1e-14);
        let c = LatticeField::bulk_from_fn(2, |_| 4.0);
        assert_eq!(dirichlet_form(&c, &space).unwrap(), 0.0);
    }

    #[test]
    fn weights_are_bounded() {
        let p = params(50);
        let s = WeightedSpace::new(&p);
        assert_eq!(s.weights()[0], 1.0);
        assert!(s.weights().windows(2).all(|w| w[1] < w[0]));
        assert!(s.weights().iter().all(|&m| m >= p.gamma().exp() && m <= 1.0));
    }

    #[test]
    fn evolve_matches_matrix_exponential() {
        let p = params(8);
        let f0 = LatticeField::bulk_from_fn(8, |j| 1.0 + (j as f64).sin().abs());
        for spec in [OperatorSpec::Omega, OperatorSpec::OmegaStar, OperatorSpec::OmegaN(3)] {
            let f = evolve(&spec, &p, &f0, 0.3, &EvolveOptions::default()).unwrap();
            let m = operator_matrix(&spec, &p).unwrap().to_dense().scaled(0.3).expm().unwrap();
            let exact = m.mul_vec(f0.values());
            for (a, b) in f.values().iter().zip(&exact) {
                assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{spec:?} {a} {b}");
            }
        }
        let same = evolve(&OperatorSpec::Omega, &p, &f0, 0.0, &EvolveOptions::default()).unwrap();
        assert_eq!(same, f0);
    }

    #[test]
    fn heat_kernel_small_time_is_identity() {
        let p = params(16);
        let t = 1e-12 / 256.0;
        let q = heat_kernel(1, &p, t).unwrap();
        assert!(q.max_abs_diff(&DenseMatrix::identity(16)) < 1e-6);
        let q = heat_kernel(2, &p, 0.05).unwrap();
        let expect = operator_matrix(&OperatorSpec::OmegaN(2), &p).unwrap().to_dense().scaled(0.05).expm().unwrap();
        assert!(q.max_abs_diff(&expect.transpose()) < 1e-12);
    }
}
