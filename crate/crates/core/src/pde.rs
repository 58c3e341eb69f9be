//! Deterministic solves: the linear K equation and the Burgers density it encodes,
//! the semi-discrete lambda equation, derived profiles and backward equations.

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::operators::{
    a_phi_row, integrate_checked, integrate_path, operator_matrix, EvolveOptions, LatticeField, OperatorSpec,
};
use crate::params::SystemParams;
use crate::profile::DensityProfile;
use crate::scalar::Scalar;

/// `n + 1` equally spaced times on `[0, t_end]`.
pub fn uniform_times<T: Scalar>(t_end: T, intervals: usize) -> Vec<T> {
    (0..=intervals).map(|i| t_end * T::of_usize(i) / T::of_usize(intervals)).collect()
}

/// Linear interpolation in time between stored snapshots.
pub fn interpolate_snapshots<T: Scalar>(times: &[T], snaps: &[Vec<T>], t: T) -> Vec<T> {
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return snaps[0].clone();
    }
    if k >= times.len() {
        return snaps[times.len() - 1].clone();
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { T::zero() };
    snaps[k - 1].iter().zip(&snaps[k]).map(|(&a, &b)| a + w * (b - a)).collect()
}

/// Spatial resolution and time step of the continuum solves.
#[derive(Clone, Debug)]
pub struct PdeOptions<T> {
    /// Number of cells on `[0, 1]`.
    pub nx: usize,
    /// Time step; defaults to `h / 4`.
    pub dt: Option<T>,
}

impl<T: Scalar> PdeOptions<T> {
    pub fn with_cells(nx: usize) -> Self {
        Self { nx, dt: None }
    }

    /// Four cells per lattice spacing, so `j / N` is a grid point.
    pub fn for_lattice(n: usize) -> Self {
        Self::with_cells(4 * n)
    }

    pub fn h(&self) -> T {
        T::one() / T::of_usize(self.nx)
    }

    pub fn time_step(&self) -> T {
        self.dt.unwrap_or_else(|| self.h() * T::of(0.25))
    }

    pub fn x(&self, i: usize) -> T {
        T::of_usize(i) * self.h()
    }
}

/// Values of a function of `(t, x)` at stored times on the uniform grid `x_i = i / nx`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeGrid<T> {
    pub times: Vec<T>,
    pub nx: usize,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> SpaceTimeGrid<T> {
    pub fn at_time(&self, t: T) -> Vec<T> {
        interpolate_snapshots(&self.times, &self.values, t)
    }

    /// Samples at `x = j / n` for `j` in `0..=n`; requires `nx` to be a multiple of `n`.
    pub fn on_lattice(&self, index: usize, n: usize) -> Result<Vec<T>> {
        lattice_samples(&self.values[index], self.nx, n)
    }
}

fn lattice_samples<T: Scalar>(row: &[T], nx: usize, n: usize) -> Result<Vec<T>> {
    if nx % n != 0 {
        return Err(Error::InvalidParameter(format!("grid with {nx} cells cannot be sampled at spacing 1/{n}")));
    }
    let stride = nx / n;
    Ok((0..=n).map(|j| row[j * stride]).collect())
}

/// `u'' + drift u'` with `u'(0) = kappa0 u(0)` and `u'(1) = kappa1 u(1)`, closed with ghost points.
pub fn robin_operator<T: Scalar>(nx: usize, drift: T, kappa0: T, kappa1: T) -> Tridiagonal<T> {
    let h = T::one() / T::of_usize(nx);
    let h2 = h * h;
    let two = T::of(2.0);
    let mut m = Tridiagonal::zeros(nx + 1);
    for i in 1..nx {
        m.lower[i] = T::one() / h2 - drift / (two * h);
        m.diag[i] = -two / h2;
        m.upper[i] = T::one() / h2 + drift / (two * h);
    }
    m.diag[0] = -two / h2 - two * kappa0 / h + drift * kappa0;
    m.upper[0] = two / h2;
    m.lower[nx] = two / h2;
    m.diag[nx] = -two / h2 + two * kappa1 / h + drift * kappa1;
    m
}

/// `u'' + b(x) u'` with homogeneous Dirichlet conditions.
pub fn dirichlet_operator<T: Scalar>(drift: &[T]) -> Tridiagonal<T> {
    let nx = drift.len() - 1;
    let h = T::one() / T::of_usize(nx);
    let h2 = h * h;
    let two = T::of(2.0);
    let mut m = Tridiagonal::zeros(nx + 1);
    for i in 1..nx {
        m.lower[i] = T::one() / h2 - drift[i] / (two * h);
        m.diag[i] = -two / h2;
        m.upper[i] = T::one() / h2 + drift[i] / (two * h);
    }
    m
}

/// Second-order derivative on the grid, one-sided at the ends.
pub fn grid_derivative<T: Scalar>(u: &[T]) -> Vec<T> {
    let nx = u.len() - 1;
    let h = T::one() / T::of_usize(nx);
    let two = T::of(2.0);
    let mut d = vec![T::zero(); nx + 1];
    for i in 1..nx {
        d[i] = (u[i + 1] - u[i - 1]) / (two * h);
    }
    if nx >= 2 {
        d[0] = (-T::of(3.0) * u[0] + T::of(4.0) * u[1] - u[2]) / (two * h);
        d[nx] = (T::of(3.0) * u[nx] - T::of(4.0) * u[nx - 1] + u[nx - 2]) / (two * h);
    } else {
        d[0] = (u[1] - u[0]) / h;
        d[1] = d[0];
    }
    d
}

/// Trapezoid rule on the uniform grid of `[0, 1]`.
pub fn grid_integral<T: Scalar>(u: &[T]) -> T {
    let nx = u.len() - 1;
    let h = T::one() / T::of_usize(nx);
    let inner: T = u[1..nx].iter().copied().sum();
    h * (inner + (u[0] + u[nx]) * T::of(0.5))
}

fn check_times<T: Scalar>(times: &[T]) -> Result<()> {
    let mut prev = T::zero();
    for &t in times {
        if !(t >= prev) {
            return Err(Error::InvalidParameter(format!("times must be sorted and nonnegative, found {t}")));
        }
        prev = t;
    }
    Ok(())
}

/// Solves `K_t = K'' - E K'`, `K'(0) = E alpha K(0)`, `K'(1) = E beta K(1)`, `K_0 = exp(E int_0^x rho_0)`.
pub fn solve_k<T: Scalar>(
    profile: &DensityProfile<T>,
    params: &SystemParams<T>,
    times: &[T],
    opts: &PdeOptions<T>,
) -> Result<SpaceTimeGrid<T>> {
    check_times(times)?;
    let e = params.e_field();
    let op = robin_operator(opts.nx, -e, e * params.alpha(), e * params.beta());
    let k0: Vec<T> = (0..=opts.nx).map(|i| (e * profile.integral(opts.x(i))).exp()).collect();
    let none: Option<fn(T) -> Result<Tridiagonal<T>>> = None;
    let values = integrate_path(&k0, times, opts.time_step(), none, Some(&op))?;
    for (row, &t) in values.iter().zip(times) {
        if let Some((i, v)) = row.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
            return Err(Error::Numerical(format!("K lost positivity at t = {t}, cell {i}: {v}")));
        }
    }
    Ok(SpaceTimeGrid { times: times.to_vec(), nx: opts.nx, values })
}

/// Admissible overshoot of the recovered density outside `[0, 1]` before clipping.
pub const DENSITY_SLACK: f64 = 1e-6;

/// `rho = K' / (E K)`, clipped to `[0, 1]`.
pub fn density_from_k<T: Scalar>(k: &SpaceTimeGrid<T>, params: &SystemParams<T>) -> Result<SpaceTimeGrid<T>> {
    let e = params.e_field();
    let slack = T::of(DENSITY_SLACK);
    let mut values = Vec::with_capacity(k.values.len());
    for (row, &t) in k.values.iter().zip(&k.times) {
        let d = grid_derivative(row);
        let mut rho = Vec::with_capacity(row.len());
        for (i, (&kd, &kv)) in d.iter().zip(row).enumerate() {
            if !(kv > T::zero()) {
                return Err(Error::NonPositive { site: i, value: kv.as_f64() });
            }
            let r = kd / (e * kv);
            if r < -slack || r > T::one() + slack || !r.is_finite() {
                return Err(Error::Numerical(format!("density {r} out of range at t = {t}, cell {i}")));
            }
            rho.push(r.max(T::zero()).min(T::one()));
        }
        values.push(rho);
    }
    Ok(SpaceTimeGrid { times: k.times.clone(), nx: k.nx, values })
}

/// Burgers density and its Cole-Hopf transform on a common grid.
#[derive(Clone, Debug)]
pub struct BurgersSolution<T> {
    pub k: SpaceTimeGrid<T>,
    pub rho: SpaceTimeGrid<T>,
}

impl<T: Scalar> BurgersSolution<T> {
    pub fn times(&self) -> &[T] {
        &self.rho.times
    }

    pub fn nx(&self) -> usize {
        self.rho.nx
    }

    pub fn rho_at(&self, t: T) -> Vec<T> {
        self.rho.at_time(t)
    }

    pub fn k_at(&self, t: T) -> Vec<T> {
        self.k.at_time(t)
    }

    /// `rho(t, j/N)` for `j` in `0..=N`.
    pub fn rho_on_lattice(&self, t: T, n: usize) -> Result<Vec<T>> {
        lattice_samples(&self.rho_at(t), self.nx(), n)
    }

    pub fn k_on_lattice(&self, t: T, n: usize) -> Result<Vec<T>> {
        lattice_samples(&self.k_at(t), self.nx(), n)
    }

    /// `sigma(rho) = rho (1 - rho)` at time `t`.
    pub fn mobility_at(&self, t: T) -> Vec<T> {
        self.rho_at(t).into_iter().map(mobility).collect()
    }
}

#[inline]
pub fn mobility<T: Scalar>(rho: T) -> T {
    rho * (T::one() - rho)
}

pub fn solve_burgers<T: Scalar>(
    profile: &DensityProfile<T>,
    params: &SystemParams<T>,
    times: &[T],
    opts: &PdeOptions<T>,
) -> Result<BurgersSolution<T>> {
    let k = solve_k(profile, params, times, opts)?;
    let rho = density_from_k(&k, params)?;
    Ok(BurgersSolution { k, rho })
}

/// `lambda_t` on `{0..N-1}` at stored times.
#[derive(Clone, Debug)]
pub struct LambdaPath<T> {
    pub times: Vec<T>,
    pub values: Vec<Vec<T>>,
    n: usize,
}

impl<T: Scalar> LambdaPath<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, t: T) -> Vec<T> {
        interpolate_snapshots(&self.times, &self.values, t)
    }

    pub fn field(&self, index: usize) -> LatticeField<T> {
        LatticeField::new(self.n, 0, self.values[index].clone())
    }
}

/// `lambda_0(j) = exp(-(gamma/N) sum_{k=1}^{j} rho_0(k/N))`.
pub fn lambda_initial<T: Scalar>(profile: &DensityProfile<T>, params: &SystemParams<T>) -> Vec<T> {
    let n = params.n();
    let c = params.step_exponent();
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(n);
    out.push(T::one());
    for j in 1..n {
        acc += profile.eval(T::of_usize(j) / params.n_scalar());
        out.push((-c * acc).exp());
    }
    out
}

/// Solves `d/dt lambda = Omega lambda` from [`lambda_initial`].
pub fn solve_lambda<T: Scalar>(
    profile: &DensityProfile<T>,
    params: &SystemParams<T>,
    times: &[T],
    opts: &EvolveOptions<T>,
) -> Result<LambdaPath<T>> {
    check_times(times)?;
    let op = operator_matrix(&OperatorSpec::Omega, params)?;
    let l0 = lambda_initial(profile, params);
    let none: Option<fn(T) -> Result<Tridiagonal<T>>> = None;
    let values = integrate_checked(&l0, times, params.n(), opts, none, Some(&op))?;
    for (row, &t) in values.iter().zip(times) {
        if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
            return Err(Error::Numerical(format!("lambda lost positivity at t = {t}, site {j}: {v}")));
        }
    }
    Ok(LambdaPath { times: times.to_vec(), values, n: params.n() })
}

/// `r(j) = -(1/gamma) (grad^- ln lambda)(j)` and `r~(j) = (grad^- lambda)(j) / (E lambda(j-1))` for `1 <= j <= N-1`.
pub fn profiles<T: Scalar>(lambda: &[T], params: &SystemParams<T>) -> Result<(Vec<T>, Vec<T>)> {
    let nt = params.n_scalar();
    let e = params.e_field();
    let g = params.gamma();
    if let Some((j, v)) = lambda.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
        return Err(Error::NonPositive { site: j, value: v.as_f64() });
    }
    let r = lambda.windows(2).map(|w| -nt / g * (w[1].ln() - w[0].ln())).collect();
    let rt = lambda.windows(2).map(|w| nt * (w[1] - w[0]) / (e * w[0])).collect();
    Ok((r, rt))
}

/// Discrete backward solution `g_s` on `{0..N}` at the requested `s`, ascending.
#[derive(Clone, Debug)]
pub struct BackwardSolution<T> {
    pub times: Vec<T>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> BackwardSolution<T> {
    pub fn at_index(&self, i: usize, n: usize) -> LatticeField<T> {
        LatticeField::new(n, 0, self.values[i].clone())
    }
}

fn a_phi_matrix<T: Scalar>(phi: &[T], params: &SystemParams<T>) -> Result<Tridiagonal<T>> {
    let n = params.n();
    let nt = params.n_scalar();
    let e = params.e_field();
    let mut m = Tridiagonal::zeros(n + 1);
    for j in 1..n {
        if !(phi[j - 1] > T::zero()) {
            return Err(Error::NonPositive { site: j - 1, value: phi[j - 1].as_f64() });
        }
        let th = nt * (phi[j] - phi[j - 1]) / (e * phi[j - 1]);
        let (lo, d, up) = a_phi_row(th, params);
        m.lower[j] = lo;
        m.diag[j] = d;
        m.upper[j] = up;
    }
    Ok(m)
}

/// Solves `-d/ds g = A_{lambda_s} g` on `[0, t]` with `g_t = G`, reporting `g` at `s_out`.
pub fn solve_backward<T: Scalar>(
    g_final: &LatticeField<T>,
    t: T,
    lambda: &LambdaPath<T>,
    params: &SystemParams<T>,
    s_out: &[T],
    opts: &EvolveOptions<T>,
) -> Result<BackwardSolution<T>> {
    let n = params.n();
    if !g_final.is_closed() || g_final.n() != n {
        return Err(Error::DomainMismatch { expected: "G on {0..N}".into(), found: g_final.describe() });
    }
    let tol = T::of(1e-12);
    if g_final.at(0).abs() > tol || g_final.at(n).abs() > tol {
        return Err(Error::InvalidParameter("final condition must vanish at both ends".into()));
    }
    check_times(s_out)?;
    if s_out.last().is_some_and(|&s| s > t) {
        return Err(Error::InvalidParameter(format!("backward output time exceeds t = {t}")));
    }
    let mut tau: Vec<T> = s_out.iter().rev().map(|&s| t - s).collect();
    tau.iter_mut().for_each(|x| *x = x.max(T::zero()));
    let op_at = |mid: T| -> Result<Tridiagonal<T>> { a_phi_matrix(&lambda.at(t - mid), params) };
    let path = integrate_checked(g_final.values(), &tau, n, opts, Some(op_at), None)?;
    let values: Vec<Vec<T>> = path.into_iter().rev().collect();
    Ok(BackwardSolution { times: s_out.to_vec(), values })
}

/// `T_{t,s} G` and its spatial derivative on the continuum grid at the requested `s`, ascending.
#[derive(Clone, Debug)]
pub struct ContinuumBackward<T> {
    pub times: Vec<T>,
    pub nx: usize,
    pub values: Vec<Vec<T>>,
    pub gradients: Vec<Vec<T>>,
}

/// Solves `-d/ds G = G'' + E (1 - 2 rho_s) G'` with Dirichlet conditions and `G_t = G`.
pub fn solve_backward_continuum<T: Scalar>(
    g_final: &dyn Fn(T) -> T,
    t: T,
    burgers: &BurgersSolution<T>,
    params: &SystemParams<T>,
    s_out: &[T],
    dt: Option<T>,
) -> Result<ContinuumBackward<T>> {
    check_times(s_out)?;
    let nx = burgers.nx();
    let h = T::one() / T::of_usize(nx);
    let mut u0: Vec<T> = (0..=nx).map(|i| g_final(T::of_usize(i) * h)).collect();
    u0[0] = T::zero();
    u0[nx] = T::zero();
    let e = params.e_field();
    let tau: Vec<T> = s_out.iter().rev().map(|&s| (t - s).max(T::zero())).collect();
    let op_at = |mid: T| -> Result<Tridiagonal<T>> {
        let drift: Vec<T> = burgers.rho_at(t - mid).into_iter().map(|r| e * (T::one() - T::of(2.0) * r)).collect();
        Ok(dirichlet_operator(&drift))
    };
    let step = dt.unwrap_or(h * T::of(0.25));
    let path = integrate_path(&u0, &tau, step, Some(op_at), None)?;
    let values: Vec<Vec<T>> = path.into_iter().rev().collect();
    let gradients = values.iter().map(|v| grid_derivative(v)).collect();
    Ok(ContinuumBackward { times: s_out.to_vec(), nx, values, gradients })
}

/// `psi_s(j) = (grad^+ g_{t-s})(j) / lambda_{t-s}(j)` on `{0..N-1}`.
pub fn psi_from_backward<T: Scalar>(g: &[T], lambda: &[T], params: &SystemParams<T>) -> Vec<T> {
    let nt = params.n_scalar();
    (0..params.n()).map(|j| nt * (g[j + 1] - g[j]) / lambda[j]).collect()
}

/// Solves `d/ds F = F'' + E F'` with `F'(0) = -(1-alpha) E F(0)`, `F'(1) = -(1-beta) E F(1)`.
pub fn solve_f_equation<T: Scalar>(
    f0: &[T],
    params: &SystemParams<T>,
    times: &[T],
    dt: Option<T>,
) -> Result<Vec<Vec<T>>> {
    let nx = f0.len() - 1;
    let e = params.e_field();
    let op = robin_operator(nx, e, -(T::one() - params.alpha()) * e, -(T::one() - params.beta()) * e);
    let step = dt.unwrap_or(T::one() / T::of_usize(4 * nx));
    let none: Option<fn(T) -> Result<Tridiagonal<T>>> = None;
    integrate_path(f0, times, step, none, Some(&op))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_profile_matches_closed_form() {
        let c = 0.4f64;
        let params = SystemParams::new(128, 1.0, c, c).unwrap();
        let prof = DensityProfile::constant(c).unwrap();
        let opts = PdeOptions::with_cells(512);
        let times = [0.0, 0.1, 0.25];
        let k = solve_k(&prof, &params, &times, &opts).unwrap();
        for (row, &t) in k.values.iter().zip(&times) {
            for (i, &v) in row.iter().enumerate() {
                let x = opts.x(i);
                let exact = (c * x - c * (1.0 - c) * t).exp();
                assert!((v - exact).abs() < 1e-6, "t={t} x={x} {v} {exact}");
            }
        }
        let rho = density_from_k(&k, &params).unwrap();
        assert!(rho.values.iter().flatten().all(|&r| (r - c).abs() < 1e-6));
    }

    #[test]
    fn second_order_grid_convergence() {
        let c = 0.3f64;
        let params = SystemParams::new(64, 2.0, c, c).unwrap();
        let prof = DensityProfile::constant(c).unwrap();
        let err = |nx: usize| {
            let k = solve_k(&prof, &params, &[0.25], &PdeOptions::with_cells(nx)).unwrap();
            k.values[0]
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let x = i as f64 / nx as f64;
                    (v - (2.0 * c * x - 4.0 * c * (1.0 - c) * 0.25).exp()).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let ratio = err(256) / err(512);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn linear_profile_respects_maximum_principle() {
        let params = SystemParams::new(64, 1.0f64, 0.3, 0.7).unwrap();
        let prof = DensityProfile::linear(0.3, 0.7).unwrap();
        let b = solve_burgers(&prof, &params, &uniform_times(0.5, 10), &PdeOptions::for_lattice(64)).unwrap();
        for row in &b.rho.values {
            let (lo, hi) = row.iter().fold((1.0f64, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
            assert!(lo >= 0.3 - 1e-5 && hi <= 0.7 + 1e-5, "{lo} {hi}");
            assert!((row[0] - 0.3).abs() < 1e-5 && (row[row.len() - 1] - 0.7).abs() < 1e-5);
        }
    }

    #[test]
    fn lambda_from_empty_profile_and_monotonicity() {
        let params = SystemParams::new(32, 1.0, 0.3, 0.7).unwrap();
        let zero = DensityProfile::constant(0.0).unwrap();
        assert!(lambda_initial(&zero, &params).iter().all(|&v| v == 1.0));
        let lin = DensityProfile::linear(0.3, 0.7).unwrap();
        let path = solve_lambda(&lin, &params, &uniform_times(0.3, 6), &EvolveOptions::default()).unwrap();
        let tilt = params.bias();
        for row in &path.values {
            for w in row.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 && w[1] <= tilt * w[0] + 1e-12);
            }
            let (_, rt) = profiles(row, &params).unwrap();
            assert!(rt.iter().all(|&v| (-1e-10..=1.0 + 1e-10).contains(&v)));
        }
    }

    #[test]
    fn saturated_profiles() {
        let params = SystemParams::new(20, 1.5f64, 0.3, 0.7).unwrap();
        let flat = vec![2.0; 20];
        let (r, rt) = profiles(&flat, &params).unwrap();
        assert!(r.iter().chain(&rt).all(|v| v.abs() < 1e-12));
        let tilted: Vec<f64> = (0..20).map(|j| (-params.gamma() * j as f64 / 20.0).exp()).collect();
        let (r, rt) = profiles(&tilted, &params).unwrap();
        assert!(r.iter().chain(&rt).all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn backward_of_zero_is_zero() {
        let params = SystemParams::new(16, 1.0, 0.3, 0.7).unwrap();
        let lin = DensityProfile::linear(0.3, 0.7).unwrap();
        let lam = solve_lambda(&lin, &params, &uniform_times(0.2, 20), &EvolveOptions::default()).unwrap();
        let zero = LatticeField::closed_from_fn(16, |_| 0.0);
        let b = solve_backward(&zero, 0.2, &lam, &params, &[0.0, 0.1], &EvolveOptions::default()).unwrap();
        assert!(b.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibrium_backward_decays_as_eigenfunction() {
        let params = SystemParams::new(64, 1.0, 0.5, 0.5).unwrap();
        let half = DensityProfile::constant(0.5).unwrap();
        let t = 0.1;
        let b = solve_burgers(&half, &params, &uniform_times(t, 50), &PdeOptions::for_lattice(64)).unwrap();
        let e1 = |x: f64| 2f64.sqrt() * (std::f64::consts::PI * x).sin();
        let c = solve_backward_continuum(&e1, t, &b, &params, &[0.0], None).unwrap();
        let decay = (-std::f64::consts::PI.powi(2) * t).exp();
        for (i, &v) in c.values[0].iter().enumerate() {
            let x = i as f64 / c.nx as f64;
            assert!((v - decay * e1(x)).abs() < 1e-5);
        }
    }
}
