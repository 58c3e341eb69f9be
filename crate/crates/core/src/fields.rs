//! Fluctuation fields paired with test functions, dual Sobolev norms and the limiting
//! covariance quadrature.

use std::fmt;
use std::sync::Arc;

use crate::cole_hopf::xi_at;
use crate::error::{Error, Result};
use crate::operators::{EvolveOptions, LatticeField};
use crate::params::SystemParams;
use crate::pde::{grid_integral, mobility, solve_backward, solve_backward_continuum, BurgersSolution, LambdaPath};
use crate::process::{Configuration, EventRecord, Observer, ProcessView};
use crate::scalar::Scalar;

/// Default spectral truncation.
pub const DEFAULT_MODES: usize = 64;
/// Default dual Sobolev order, the smallest integer above 7/2.
pub const DEFAULT_ORDER: u32 = 4;

/// Test function on `[0, 1]`.
#[derive(Clone)]
pub enum TestFunction<T> {
    /// `e_n(x) = sqrt(2) sin(n pi x)`.
    Eigen(u32),
    Callable { label: String, f: Arc<dyn Fn(T) -> T + Send + Sync> },
}

impl<T: Scalar> TestFunction<T> {
    pub fn eigen(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("eigenfunction index starts at 1".into()));
        }
        Ok(Self::Eigen(n))
    }

    pub fn callable(label: impl Into<String>, f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self::Callable { label: label.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, x: T) -> T {
        match self {
            Self::Eigen(n) => T::SQRT_2() * (T::of(f64::from(*n)) * T::PI() * x).sin(),
            Self::Callable { f, .. } => f(x),
        }
    }

    /// `(n pi)^2` for eigen presets.
    pub fn eigenvalue(&self) -> Option<T> {
        match self {
            Self::Eigen(n) => Some((T::of(f64::from(*n)) * T::PI()).powi(2)),
            Self::Callable { .. } => None,
        }
    }

    /// `G(j/N)` on `{0..N}`. Eigen presets are exactly zero at both ends.
    pub fn sample(&self, n: usize) -> LatticeField<T> {
        let mut g = LatticeField::sample_closed(n, |x| self.eval(x));
        if matches!(self, Self::Eigen(_)) {
            g.values_mut()[0] = T::zero();
            g.values_mut()[n] = T::zero();
        }
        g
    }

    pub fn vanishes_at_boundary(&self, tol: T) -> bool {
        self.eval(T::zero()).abs() <= tol && self.eval(T::one()).abs() <= tol
    }

    pub fn label(&self) -> String {
        match self {
            Self::Eigen(n) => format!("e{n}"),
            Self::Callable { label, .. } => label.clone(),
        }
    }
}

impl<T> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Eigen(n) => write!(f, "Eigen({n})"),
            Self::Callable { label, .. } => write!(f, "Callable({label})"),
        }
    }
}

/// Continuum `L^2(0,1)` product by composite Simpson on `panels` (even) panels.
pub fn l2_inner<T: Scalar>(f: &TestFunction<T>, g: &TestFunction<T>, panels: usize) -> T {
    let m = panels + panels % 2;
    let h = T::one() / T::of_usize(m);
    let mut acc = T::zero();
    for i in 0..=m {
        let x = T::of_usize(i) * h;
        let w = if i == 0 || i == m {
            T::one()
        } else if i % 2 == 1 {
            T::of(4.0)
        } else {
            T::of(2.0)
        };
        acc += w * f.eval(x) * g.eval(x);
    }
    acc * h / T::of(3.0)
}

fn reference_at<T: Scalar>(reference: &[T], n: usize, j: usize) -> T {
    if reference.len() == n + 1 {
        reference[j]
    } else {
        reference[j - 1]
    }
}

fn check_reference<T>(reference: &[T], n: usize) -> Result<()> {
    if reference.len() != n + 1 && reference.len() != n - 1 {
        return Err(Error::DomainMismatch {
            expected: format!("reference on {{0..{n}}} or {{1..{}}}", n - 1),
            found: format!("{} values", reference.len()),
        });
    }
    Ok(())
}

fn check_closed<T: Scalar>(g: &LatticeField<T>, n: usize) -> Result<()> {
    if !g.is_closed() || g.n() != n {
        return Err(Error::DomainMismatch { expected: format!("test function on {{0..{n}}}"), found: g.describe() });
    }
    Ok(())
}

fn check_bulk<T>(v: &[T], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::DomainMismatch { expected: format!("{what} on {{0..{}}}", n - 1), found: format!("{} values", v.len()) });
    }
    Ok(())
}

/// `N^{-1/2} sum_{j=1}^{N-1} G(j/N) [eta(j) - rho(j)]`.
///
/// `reference` is indexed by site when it has `N+1` entries and by `j-1` when it has `N-1`,
/// so both `rho(t, j/N)` samples and the discrete profile `r_t` can be passed directly.
pub fn eval_density_field<T: Scalar>(
    config: &Configuration,
    reference: &[T],
    g: &LatticeField<T>,
    params: &SystemParams<T>,
) -> Result<T> {
    let n = params.n();
    check_reference(reference, n)?;
    check_closed(g, n)?;
    let mut acc = T::zero();
    for j in 1..n {
        acc += g.at(j) * (T::of(f64::from(config.get(j))) - reference_at(reference, n, j));
    }
    Ok(acc / params.n_scalar().sqrt())
}

/// `(1/sqrt N) sum_j (grad^+ G)(j) / (gamma lambda(j)) (xi(j) - lambda(j))`.
pub fn eval_current_field<T: Scalar>(xi: &[T], lambda: &[T], g: &LatticeField<T>, params: &SystemParams<T>) -> Result<T> {
    let n = params.n();
    check_bulk(xi, n, "xi")?;
    check_bulk(lambda, n, "lambda")?;
    check_closed(g, n)?;
    let nt = params.n_scalar();
    let mut acc = T::zero();
    for j in 0..n {
        if !(lambda[j] > T::zero()) {
            return Err(Error::NonPositive { site: j, value: lambda[j].as_f64() });
        }
        let grad = nt * (g.at(j + 1) - g.at(j));
        acc += grad * (xi[j] / lambda[j] - T::one());
    }
    Ok(acc / (params.gamma() * nt.sqrt()))
}

/// `(1/sqrt N) sum_j (grad^+ G)(j) / gamma [ln(xi/lambda) + 1 - xi/lambda](j)`.
pub fn eval_remainder<T: Scalar>(xi: &[T], lambda: &[T], g: &LatticeField<T>, params: &SystemParams<T>) -> Result<T> {
    let n = params.n();
    check_bulk(xi, n, "xi")?;
    check_bulk(lambda, n, "lambda")?;
    check_closed(g, n)?;
    let nt = params.n_scalar();
    let mut acc = T::zero();
    for j in 0..n {
        if !(lambda[j] > T::zero()) {
            return Err(Error::NonPositive { site: j, value: lambda[j].as_f64() });
        }
        if !(xi[j] > T::zero()) {
            return Err(Error::NonPositive { site: j, value: xi[j].as_f64() });
        }
        let q = xi[j] / lambda[j];
        let grad = nt * (g.at(j + 1) - g.at(j));
        acc += grad * (q.ln() + T::one() - q);
    }
    Ok(acc / (params.gamma() * nt.sqrt()))
}

/// Values of the four fields for one test function at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldValues<T> {
    /// Density field against `rho(t, .)`.
    pub density: T,
    /// Density field against the discrete profile `r_t`.
    pub modified: T,
    pub current: T,
    pub remainder: T,
}

impl<T: Scalar> FieldValues<T> {
    /// `|modified - current - remainder|`, which vanishes for `G(0) = G(1) = 0`.
    pub fn decomposition_defect(&self) -> T {
        (self.modified - self.current - self.remainder).abs()
    }
}

/// Evaluates all four fields. `rho` is on `{0..N}`, `r` on `{1..N-1}`, `lambda` on `{0..N-1}`.
pub fn eval_fields<T: Scalar>(
    config: &Configuration,
    xi: &[T],
    rho: &[T],
    r: &[T],
    lambda: &[T],
    g: &LatticeField<T>,
    params: &SystemParams<T>,
) -> Result<FieldValues<T>> {
    Ok(FieldValues {
        density: eval_density_field(config, rho, g, params)?,
        modified: eval_density_field(config, r, g, params)?,
        current: eval_current_field(xi, lambda, g, params)?,
        remainder: eval_remainder(xi, lambda, g, params)?,
    })
}

/// Coefficients `<f, e_n>` for `n = 1..=M` and a dual Sobolev order `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoeffs<T> {
    pub coeffs: Vec<T>,
    pub order: u32,
}

impl<T: Scalar> SpectralCoeffs<T> {
    pub fn new(coeffs: Vec<T>, order: u32) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("at least one spectral coefficient is required".into()));
        }
        Ok(Self { coeffs, order })
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn with_order(&self, order: u32) -> Self {
        Self { coeffs: self.coeffs.clone(), order }
    }

    pub fn truncated(&self, modes: usize) -> Self {
        Self { coeffs: self.coeffs[..modes.min(self.coeffs.len())].to_vec(), order: self.order }
    }

    /// `sum_n (n pi)^{-2k} <f, e_n>^2`.
    pub fn norm_sq(&self) -> T {
        let k = self.order as i32;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| (T::of_usize(i + 1) * T::PI()).powi(-2 * k) * c * c)
            .sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }
}

/// Spectral coefficients of the density field: `Y(e_n)` for `n = 1..=modes`.
pub fn spectral_coeffs<T: Scalar>(
    config: &Configuration,
    reference: &[T],
    params: &SystemParams<T>,
    modes: usize,
    order: u32,
) -> Result<SpectralCoeffs<T>> {
    let n = params.n();
    let coeffs = (1..=modes)
        .map(|m| eval_density_field(config, reference, &TestFunction::Eigen(m as u32).sample(n), params))
        .collect::<Result<Vec<_>>>()?;
    SpectralCoeffs::new(coeffs, order)
}

/// Resolution of [`covariance_quadrature`].
#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    /// Time panels on `[0, t ^ s]`, rounded up to even.
    pub time_panels: usize,
    /// Backward solve step; defaults to a quarter of the grid spacing.
    pub dt: Option<f64>,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { time_panels: 200, dt: None }
    }
}

fn simpson_weights<T: Scalar>(panels: usize, length: T) -> Vec<T> {
    let h = length / T::of_usize(panels);
    (0..=panels)
        .map(|i| {
            let w = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            T::of(w) * h / T::of(3.0)
        })
        .collect()
}

/// `2 int_0^{t ^ s} int_0^1 sigma(rho(r,x)) (d_x T_{t,r} G)(d_x T_{s,r} H) dx dr`.
#[allow(clippy::too_many_arguments)]
pub fn covariance_quadrature<T: Scalar>(
    g: &TestFunction<T>,
    h: &TestFunction<T>,
    t: T,
    s: T,
    burgers: &BurgersSolution<T>,
    params: &SystemParams<T>,
    opts: &QuadratureOptions,
) -> Result<T> {
    let top = t.min(s);
    if !(top >= T::zero()) {
        return Err(Error::InvalidParameter(format!("quadrature needs nonnegative times, found {t}, {s}")));
    }
    if top == T::zero() {
        return Ok(T::zero());
    }
    let panels = opts.time_panels.max(2) + opts.time_panels % 2;
    let grid: Vec<T> = (0..=panels).map(|i| top * T::of_usize(i) / T::of_usize(panels)).collect();
    let dt = opts.dt.map(T::of);
    let gf = |x: T| g.eval(x);
    let hf = |x: T| h.eval(x);
    let bg = solve_backward_continuum(&gf, t, burgers, params, &grid, dt)?;
    let bh = solve_backward_continuum(&hf, s, burgers, params, &grid, dt)?;
    let weights = simpson_weights(panels, top);
    let mut acc = T::zero();
    for (i, &r) in grid.iter().enumerate() {
        let sigma = burgers.mobility_at(r);
        let integrand: Vec<T> =
            sigma.iter().zip(&bg.gradients[i]).zip(&bh.gradients[i]).map(|((&m, &a), &b)| m * a * b).collect();
        acc += weights[i] * grid_integral(&integrand);
    }
    Ok(T::of(2.0) * acc)
}

/// `int_0^1 sigma(rho_0) (T_{t,0} G)(T_{s,0} H) dx`, the covariance contributed by a product initial state.
pub fn initial_covariance<T: Scalar>(
    g: &TestFunction<T>,
    h: &TestFunction<T>,
    t: T,
    s: T,
    burgers: &BurgersSolution<T>,
    params: &SystemParams<T>,
    dt: Option<T>,
) -> Result<T> {
    let gf = |x: T| g.eval(x);
    let hf = |x: T| h.eval(x);
    let zero = [T::zero()];
    let bg = solve_backward_continuum(&gf, t, burgers, params, &zero, dt)?;
    let bh = solve_backward_continuum(&hf, s, burgers, params, &zero, dt)?;
    let rho0 = burgers.rho_at(T::zero());
    let integrand: Vec<T> = rho0
        .iter()
        .zip(&bg.values[0])
        .zip(&bh.values[0])
        .map(|((&r, &a), &b)| mobility(r) * a * b)
        .collect();
    Ok(grid_integral(&integrand))
}

/// `(1 - exp(-2 pi^2 t)) / 4`: the equilibrium variance for `G = e_1` at density 1/2.
pub fn equilibrium_variance<T: Scalar>(t: T) -> T {
    (T::one() - (-T::of(2.0) * T::PI() * T::PI() * t).exp()) / T::of(4.0)
}

/// Precomputed data for the martingale `M_s(t, G) = J_s(g_s) - J_0(g_0)` and its quadratic variation.
#[derive(Clone, Debug)]
pub struct MartingalePlan<T> {
    pub t: T,
    /// Slice boundaries `0 = r_0 < .. < r_M = t`.
    pub edges: Vec<T>,
    /// `E^2 / (gamma^2 N) psi_{t-r}(j)^2` at each slice midpoint, on `{0..N-1}`.
    pub weights: Vec<Vec<T>>,
    /// Discrete backward solution at the observation times, then at `0`.
    pub obs_g: Vec<LatticeField<T>>,
    pub obs_lambda: Vec<Vec<T>>,
    pub g0: LatticeField<T>,
    pub lambda0: Vec<T>,
}

impl<T: Scalar> MartingalePlan<T> {
    /// Solves the discrete backward equation from `G` at `t` along `lambda`.
    pub fn new(
        g_final: &LatticeField<T>,
        t: T,
        lambda: &LambdaPath<T>,
        params: &SystemParams<T>,
        obs_times: &[T],
        slices: usize,
        opts: &EvolveOptions<T>,
    ) -> Result<Self> {
        if slices == 0 {
            return Err(Error::InvalidParameter("at least one time slice is required".into()));
        }
        if obs_times.iter().any(|&s| s > t || s < T::zero()) {
            return Err(Error::InvalidParameter(format!("observation times must lie in [0, {t}]")));
        }
        let edges: Vec<T> = (0..=slices).map(|i| t * T::of_usize(i) / T::of_usize(slices)).collect();
        let mids: Vec<T> = edges.windows(2).map(|w| (w[0] + w[1]) * T::of(0.5)).collect();
        let mut all: Vec<T> = mids.iter().chain(obs_times).copied().chain([T::zero()]).collect();
        all.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        all.dedup();
        let back = solve_backward(g_final, t, lambda, params, &all, opts)?;
        let find = |s: T| all.iter().position(|&x| x == s).expect("time was requested");
        let nt = params.n_scalar();
        let scale = (params.e_field() / params.gamma()).powi(2) / nt;
        let weights = mids
            .iter()
            .map(|&r| {
                let g = &back.values[find(r)];
                let lam = lambda.at(r);
                (0..params.n())
                    .map(|j| {
                        let psi = nt * (g[j + 1] - g[j]) / lam[j];
                        scale * psi * psi
                    })
                    .collect()
            })
            .collect();
        let field = |s: T| LatticeField::new(params.n(), 0, back.values[find(s)].clone());
        Ok(Self {
            t,
            edges,
            weights,
            obs_g: obs_times.iter().map(|&s| field(s)).collect(),
            obs_lambda: obs_times.iter().map(|&s| lambda.at(s)).collect(),
            g0: field(T::zero()),
            lambda0: lambda.at(T::zero()),
        })
    }
}

/// Per-trajectory record of the fields at the observation times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FluctuationSample<T> {
    pub replica: u64,
    pub times: Vec<T>,
    /// `fields[i][k]` is test function `k` at time `i`.
    pub fields: Vec<Vec<FieldValues<T>>>,
    pub martingale: Vec<T>,
    pub quadratic_variation: Vec<T>,
}

/// References for the field observer at each observation time.
#[derive(Clone, Debug)]
pub struct FieldReferences<T> {
    /// `rho(t, j/N)` on `{0..N}`.
    pub rho: Vec<Vec<T>>,
    /// `r_t` on `{1..N-1}`.
    pub r: Vec<Vec<T>>,
    /// `lambda_t` on `{0..N-1}`.
    pub lambda: Vec<Vec<T>>,
}

/// Records all fields at the observation times and integrates the quadratic variation of
/// `M_s(t, G)` in `O(1)` work per event.
pub struct FluctuationObserver<'a, T> {
    params: SystemParams<T>,
    tests: &'a [LatticeField<T>],
    refs: &'a FieldReferences<T>,
    plan: Option<&'a MartingalePlan<T>>,
    xi: Vec<T>,
    terms: Vec<T>,
    rate_sum: T,
    slice: usize,
    qv: T,
    j0: T,
    // exp(gamma/N) and exp(-gamma/N).
    up: T,
    down: T,
    pub sample: FluctuationSample<T>,
}

impl<'a, T: Scalar> FluctuationObserver<'a, T> {
    pub fn new(
        params: &SystemParams<T>,
        tests: &'a [LatticeField<T>],
        refs: &'a FieldReferences<T>,
        plan: Option<&'a MartingalePlan<T>>,
        replica: u64,
    ) -> Self {
        Self {
            params: *params,
            tests,
            refs,
            plan,
            xi: Vec::new(),
            terms: Vec::new(),
            rate_sum: T::zero(),
            slice: 0,
            qv: T::zero(),
            j0: T::zero(),
            up: params.step_exponent().exp(),
            down: (-params.step_exponent()).exp(),
            sample: FluctuationSample { replica, ..FluctuationSample::default() },
        }
    }

    #[inline]
    fn term(&self, config: &Configuration, j: usize) -> T {
        let Some(p) = self.plan else { return T::zero() };
        let w = p.weights[self.slice.min(p.weights.len() - 1)][j];
        let a = config.extended::<T>(j, &self.params);
        let b = config.extended::<T>(j + 1, &self.params);
        let h = self.up * a * (T::one() - b) + b * (T::one() - a);
        w * self.xi[j] * self.xi[j] * h
    }

    /// Recomputes `xi` from the integer exponents and the rate sum from scratch.
    fn rebuild(&mut self, view: &ProcessView<'_, T>) {
        let n = self.params.n();
        self.xi = (0..n).map(|j| xi_at(view.ledger, view.initial_sums, view.params, j)).collect();
        let config = view.config;
        self.terms = (0..self.params.n()).map(|j| self.term(config, j)).collect();
        self.rate_sum = self.terms.iter().copied().sum();
    }

    /// Total accumulated quadratic variation.
    pub fn quadratic_variation(&self) -> T {
        self.qv
    }
}

impl<T: Scalar> Observer<T> for FluctuationObserver<'_, T> {
    fn on_start(&mut self, view: &ProcessView<'_, T>) -> Result<()> {
        self.slice = 0;
        self.qv = T::zero();
        self.rebuild(view);
        if let Some(p) = self.plan {
            self.j0 = eval_current_field(&self.xi, &p.lambda0, &p.g0, &self.params)?;
        }
        Ok(())
    }

    fn on_hold(&mut self, from: T, to: T, view: &ProcessView<'_, T>) -> Result<()> {
        let Some(plan) = self.plan else { return Ok(()) };
        let mut a = from;
        while self.slice + 1 < plan.weights.len() && to > plan.edges[self.slice + 1] {
            let edge = plan.edges[self.slice + 1];
            if edge > a {
                self.qv += self.rate_sum * (edge - a);
                a = edge;
            }
            self.slice += 1;
            self.rebuild(view);
        }
        let b = to.min(plan.t);
        if b > a {
            self.qv += self.rate_sum * (b - a);
        }
        Ok(())
    }

    fn on_event(&mut self, event: &EventRecord<T>, view: &ProcessView<'_, T>) -> Result<()> {
        if self.plan.is_none() {
            return Ok(());
        }
        let n = self.params.n();
        let j = event.bond;
        // A forward jump raises W(j) by one.
        self.xi[j] *= if event.direction > 0 { self.up } else { self.down };
        for b in j.saturating_sub(1)..=(j + 1).min(n - 1) {
            let new = self.term(view.config, b);
            self.rate_sum += new - self.terms[b];
            self.terms[b] = new;
        }
        Ok(())
    }

    fn on_observation(&mut self, index: usize, time: T, view: &ProcessView<'_, T>) -> Result<()> {
        let n = self.params.n();
        let xi: Vec<T> = (0..n).map(|j| xi_at(view.ledger, view.initial_sums, view.params, j)).collect();
        let values = self
            .tests
            .iter()
            .map(|g| {
                eval_fields(
                    view.config,
                    &xi,
                    &self.refs.rho[index],
                    &self.refs.r[index],
                    &self.refs.lambda[index],
                    g,
                    &self.params,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        self.sample.times.push(time);
        self.sample.fields.push(values);
        if let Some(p) = self.plan {
            let js = eval_current_field(&xi, &p.obs_lambda[index], &p.obs_g[index], &self.params)?;
            self.sample.martingale.push(js - self.j0);
            self.sample.quadratic_variation.push(self.qv);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cole_hopf::ColeHopfState;
    use crate::pde::{profiles, solve_burgers, solve_lambda, uniform_times, PdeOptions};
    use crate::process::{apply_event, initial_sums, CurrentLedger};
    use crate::profile::DensityProfile;

    #[test]
    fn eigen_presets_are_orthonormal_and_vanish() {
        for n in 1..=4u32 {
            let en = TestFunction::<f64>::Eigen(n);
            assert!(en.vanishes_at_boundary(1e-12));
            for m in 1..=4u32 {
                let v = l2_inner(&en, &TestFunction::Eigen(m), 2048);
                let want = if n == m { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-8, "{n} {m} {v}");
            }
        }
    }

    #[test]
    fn trivial_density_values() {
        let params = SystemParams::new(16, 1.0f64, 0.3, 0.7).unwrap();
        let empty = Configuration::empty(16);
        let zero_ref = vec![0.0; 17];
        let e1 = TestFunction::Eigen(1).sample(16);
        assert_eq!(eval_density_field(&empty, &zero_ref, &e1, &params).unwrap(), 0.0);
        let g0 = LatticeField::closed_from_fn(16, |_| 0.0);
        let full = Configuration::full(16);
        assert_eq!(eval_density_field(&full, &zero_ref, &g0, &params).unwrap(), 0.0);
    }

    #[test]
    fn single_event_current_field() {
        // One creation at the left boundary of an empty N = 4 system.
        let params = SystemParams::new(4, 1.0f64, 0.3, 0.7).unwrap();
        let init = Configuration::empty(4);
        let mut c = init.clone();
        let mut w = CurrentLedger::new(4);
        apply_event(&mut c, &mut w, 0, 1);
        let xi = xi_from(&w, &init, &params);
        assert!((xi[0] - 0.8).abs() < 1e-12);
        let lam = vec![1.0; 4];
        let g = TestFunction::Eigen(1).sample(4);
        let got = eval_current_field(&xi, &lam, &g, &params).unwrap();
        let grad0 = 4.0 * g.at(1);
        let want = 0.5 * grad0 / params.gamma() * (0.8 - 1.0);
        assert!((got - want).abs() < 1e-12);
        assert_eq!(eval_current_field(&lam, &lam, &g, &params).unwrap(), 0.0);
        assert_eq!(eval_remainder(&lam, &lam, &g, &params).unwrap(), 0.0);
        let flat = LatticeField::closed_from_fn(4, |_| 0.7);
        assert_eq!(eval_current_field(&xi, &lam, &flat, &params).unwrap(), 0.0);
    }

    fn xi_from(w: &CurrentLedger, init: &Configuration, params: &SystemParams<f64>) -> Vec<f64> {
        let sums = initial_sums(init);
        (0..params.n()).map(|j| xi_at(w, &sums, params, j)).collect()
    }

    #[test]
    fn remainder_is_second_order() {
        let params = SystemParams::new(64, 1.0f64, 0.3, 0.7).unwrap();
        let lam: Vec<f64> = (0..64).map(|j| 1.0 + 0.01 * j as f64).collect();
        let eps = 1e-3;
        let xi: Vec<f64> = lam.iter().map(|l| l * (1.0 + eps)).collect();
        let g = TestFunction::Eigen(1).sample(64);
        let r = eval_remainder(&xi, &lam, &g, &params).unwrap();
        let bracket = (1.0 + eps).ln() - eps;
        let want: f64 = (0..64).map(|j| 64.0 * (g.at(j + 1) - g.at(j))).sum::<f64>() * bracket / (params.gamma() * 8.0);
        assert!((r - want).abs() < 1e-15);
        assert!((bracket + eps * eps / 2.0).abs() < eps.powi(3));
    }

    #[test]
    fn spectral_norm_examples() {
        let e1 = SpectralCoeffs::new(vec![1.0f64], 3).unwrap();
        assert!((e1.norm_sq() - std::f64::consts::PI.powi(-6)).abs() < 1e-18);
        let two = SpectralCoeffs::new(vec![1.0f64, 1.0, 0.0], 0).unwrap();
        assert_eq!(two.norm_sq(), 2.0);
        let c = SpectralCoeffs::new(vec![0.3f64, -1.2, 2.0, 0.1], 0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..6 {
            let v = c.with_order(k).norm_sq();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn decomposition_is_exact_along_a_trajectory() {
        use crate::process::{Engine, Simulator};
        use crate::rng::ReplicaStream;
        let n = 32;
        let params = SystemParams::new(n, 1.0f64, 0.3, 0.7).unwrap();
        let prof = DensityProfile::linear(0.3, 0.7).unwrap();
        let lam = solve_lambda(&prof, &params, &uniform_times(0.05, 5), &EvolveOptions::default()).unwrap();
        let mut stream = ReplicaStream::new(3, 0);
        let init = crate::process::sample_initial(&prof, &params, &mut stream).unwrap();
        let mut sim = Simulator::new(params, init, Engine::Auto).unwrap();
        let g = TestFunction::Eigen(2).sample(n);
        for k in 0..200 {
            sim.step(&mut stream).unwrap();
            let l = lam.at(sim.time().min(0.05));
            let (r, _) = profiles(&l, &params).unwrap();
            let xi = ColeHopfState::from_view(&sim.view()).xi;
            let rho = vec![0.5; n + 1];
            let f = eval_fields(sim.config(), &xi, &rho, &r, &l, &g, &params).unwrap();
            assert!(f.decomposition_defect() < 1e-9, "step {k}: {}", f.decomposition_defect());
        }
    }

    #[test]
    fn covariance_quadrature_equilibrium_and_symmetry() {
        let n = 64;
        let params = SystemParams::new(n, 1.0f64, 0.5, 0.5).unwrap();
        let half = DensityProfile::constant(0.5).unwrap();
        let t = 0.25;
        let b = solve_burgers(&half, &params, &uniform_times(t, 50), &PdeOptions::for_lattice(n)).unwrap();
        let e1 = TestFunction::Eigen(1);
        let e2 = TestFunction::Eigen(2);
        let opts = QuadratureOptions::default();
        let v = covariance_quadrature(&e1, &e1, t, t, &b, &params, &opts).unwrap();
        assert!((v - equilibrium_variance(t)).abs() < 1e-4, "{v}");
        let zero = TestFunction::callable("zero", |_| 0.0);
        assert_eq!(covariance_quadrature(&zero, &e1, t, t, &b, &params, &opts).unwrap(), 0.0);
        let a = covariance_quadrature(&e1, &e2, t, 0.15, &b, &params, &opts).unwrap();
        let c = covariance_quadrature(&e2, &e1, 0.15, t, &b, &params, &opts).unwrap();
        assert!((a - c).abs() < 1e-12);
    }
}
