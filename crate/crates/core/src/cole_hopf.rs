//! Microscopic Cole-Hopf variables `xi_t(j)` carried along a particle trajectory.

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::operators::{operator_matrix, OperatorSpec};
use crate::params::SystemParams;
use crate::process::{Configuration, CurrentLedger, EventRecord, Observer, ProcessView};
use crate::scalar::Scalar;

/// `xi(j)` for `j` in `0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColeHopfState<T> {
    pub xi: Vec<T>,
}

/// `exp((gamma/N) (W(j) - S(j)))`, evaluated from the integer exponent.
#[inline]
pub fn xi_at<T: Scalar>(ledger: &CurrentLedger, sums: &[i64], params: &SystemParams<T>, j: usize) -> T {
    (params.step_exponent() * T::of_i64(ledger.get(j) - sums[j])).exp()
}

pub fn xi_from_state<T: Scalar>(ledger: &CurrentLedger, sums: &[i64], params: &SystemParams<T>) -> ColeHopfState<T> {
    ColeHopfState { xi: (0..params.n()).map(|j| xi_at(ledger, sums, params, j)).collect() }
}

impl<T: Scalar> ColeHopfState<T> {
    pub fn from_view(view: &ProcessView<'_, T>) -> Self {
        xi_from_state(view.ledger, view.initial_sums, view.params)
    }

    /// Largest relative violation of `xi(j) <= xi(j+1) <= exp(-gamma/N) xi(j)`; zero when it holds.
    /// A slack of a few ulps absorbs the rounding of the product `exp(-gamma/N) xi(j)`.
    pub fn ordering_violation(&self, params: &SystemParams<T>) -> T {
        let tilt = params.bias();
        let slack = T::epsilon() * T::of(4.0);
        self.xi
            .windows(2)
            .map(|w| {
                let low = (w[0] - w[1]) / w[0];
                let high = (w[1] - tilt * w[0]) / w[0];
                (low.max(high) - slack).max(T::zero())
            })
            .fold(T::zero(), T::max)
    }

    /// Largest relative residual of the two one-step jump identities linking `xi` to `eta`.
    pub fn jump_identity_residual(&self, config: &Configuration, params: &SystemParams<T>) -> T {
        let n = params.n();
        let up = params.bias() - T::one();
        let down = params.step_exponent().exp_m1();
        let mut worst = T::zero();
        for j in 0..n - 1 {
            let eta = T::of(config.get(j + 1) as f64);
            let r = (self.xi[j + 1] - self.xi[j] - self.xi[j] * eta * up).abs() / self.xi[j];
            worst = worst.max(r);
        }
        for k in 1..n {
            let eta = T::of(config.get(k) as f64);
            let r = (self.xi[k - 1] - self.xi[k] - self.xi[k] * eta * down).abs() / self.xi[k];
            worst = worst.max(r);
        }
        worst
    }

    /// `-(N/gamma) (ln xi(j) - ln xi(j-1))` for sites `1..N`, before rounding.
    pub fn occupations_raw(&self, params: &SystemParams<T>) -> Vec<T> {
        let c = -T::one() / params.step_exponent();
        self.xi.windows(2).map(|w| c * (w[1].ln() - w[0].ln())).collect()
    }
}

/// Recovers the configuration; entries further than `1e-6` from `{0, 1}` mean the ledger is corrupt.
pub fn invert_to_eta<T: Scalar>(state: &ColeHopfState<T>, params: &SystemParams<T>) -> Result<Configuration> {
    let raw = state.occupations_raw(params);
    let tol = T::of(1e-6);
    let mut sites = Vec::with_capacity(raw.len());
    for (i, v) in raw.iter().enumerate() {
        let bit = if (*v - T::one()).abs() <= tol {
            1
        } else if v.abs() <= tol {
            0
        } else {
            return Err(Error::InvalidConfiguration(format!("site {} inverts to {v}", i + 1)));
        };
        sites.push(bit);
    }
    Configuration::from_sites(params.n(), &sites)
}

/// `E N (eta(j+1) - eta(j))` with reservoir ghosts.
#[inline]
pub fn drift<T: Scalar>(config: &Configuration, params: &SystemParams<T>, j: usize) -> T {
    params.e_field() * params.n_scalar() * (config.extended::<T>(j + 1, params) - config.extended::<T>(j, params))
}

/// Jump-rate factor of the quadratic variation on bond `j`.
#[inline]
pub fn qv_rate<T: Scalar>(config: &Configuration, params: &SystemParams<T>, j: usize) -> T {
    let a = config.extended::<T>(j, params);
    let b = config.extended::<T>(j + 1, params);
    a * (T::one() - b) / params.bias() + b * (T::one() - a)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleSnapshot<T> {
    pub time: T,
    pub xi: Vec<T>,
    pub martingale: Vec<T>,
    pub quadratic_variation: Vec<T>,
    /// `max_j |xi_t - xi_0 - int Omega xi - M_t|`.
    pub linear_residual: T,
}

/// Per-site martingale part of `xi`, its quadratic variation, and the integral of `Omega xi`.
#[derive(Clone, Debug)]
pub struct MartingaleAccumulator<T> {
    params: SystemParams<T>,
    omega: Tridiagonal<T>,
    xi0: Vec<T>,
    drift_integral: Vec<T>,
    omega_integral: Vec<T>,
    qv: Vec<T>,
    last: Option<T>,
    pub snapshots: Vec<MartingaleSnapshot<T>>,
}

impl<T: Scalar> MartingaleAccumulator<T> {
    pub fn new(params: &SystemParams<T>) -> Result<Self> {
        let n = params.n();
        Ok(Self {
            params: *params,
            omega: operator_matrix(&OperatorSpec::Omega, params)?,
            xi0: vec![T::one(); n],
            drift_integral: vec![T::zero(); n],
            omega_integral: vec![T::zero(); n],
            qv: vec![T::zero(); n],
            last: None,
            snapshots: Vec::new(),
        })
    }

    pub fn last_time(&self) -> Option<T> {
        self.last
    }

    pub fn reset(&mut self, xi0: &[T], time: T) {
        self.xi0 = xi0.to_vec();
        self.drift_integral.iter_mut().for_each(|v| *v = T::zero());
        self.omega_integral.iter_mut().for_each(|v| *v = T::zero());
        self.qv.iter_mut().for_each(|v| *v = T::zero());
        self.last = Some(time);
        self.snapshots.clear();
    }

    /// Integrates over `[from, to)` with the state held fixed.
    pub fn accumulate(&mut self, from: T, to: T, config: &Configuration, xi: &[T]) -> Result<()> {
        match self.last {
            Some(t) if t == from => {}
            Some(t) => return Err(Error::NonContiguous { expected: t.as_f64(), found: from.as_f64() }),
            None => self.last = Some(from),
        }
        if to < from {
            return Err(Error::NonContiguous { expected: from.as_f64(), found: to.as_f64() });
        }
        let dt = to - from;
        let e2 = self.params.e_field() * self.params.e_field();
        let omega_xi = self.omega.apply(xi);
        for j in 0..xi.len() {
            self.drift_integral[j] += xi[j] * drift(config, &self.params, j) * dt;
            self.omega_integral[j] += omega_xi[j] * dt;
            self.qv[j] += e2 * xi[j] * xi[j] * qv_rate(config, &self.params, j) * dt;
        }
        self.last = Some(to);
        Ok(())
    }

    pub fn martingale(&self, xi: &[T]) -> Vec<T> {
        (0..xi.len()).map(|j| xi[j] - self.xi0[j] - self.drift_integral[j]).collect()
    }

    pub fn quadratic_variation(&self) -> &[T] {
        &self.qv
    }

    pub fn linear_residual(&self, xi: &[T]) -> T {
        let m = self.martingale(xi);
        (0..xi.len())
            .map(|j| (xi[j] - self.xi0[j] - self.omega_integral[j] - m[j]).abs())
            .fold(T::zero(), T::max)
    }

    pub fn snapshot(&self, time: T, xi: &[T]) -> MartingaleSnapshot<T> {
        MartingaleSnapshot {
            time,
            xi: xi.to_vec(),
            martingale: self.martingale(xi),
            quadratic_variation: self.qv.clone(),
            linear_residual: self.linear_residual(xi),
        }
    }
}

impl<T: Scalar> Observer<T> for MartingaleAccumulator<T> {
    fn on_start(&mut self, view: &ProcessView<'_, T>) -> Result<()> {
        let xi = ColeHopfState::from_view(view).xi;
        self.reset(&xi, view.time);
        Ok(())
    }

    fn on_hold(&mut self, from: T, to: T, view: &ProcessView<'_, T>) -> Result<()> {
        let xi = ColeHopfState::from_view(view).xi;
        self.accumulate(from, to, view.config, &xi)
    }

    fn on_observation(&mut self, _index: usize, time: T, view: &ProcessView<'_, T>) -> Result<()> {
        let xi = ColeHopfState::from_view(view).xi;
        let snap = self.snapshot(time, &xi);
        self.snapshots.push(snap);
        Ok(())
    }
}

/// Worst-case exact-identity defects seen along a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdentityReport<T> {
    pub checks: u64,
    pub ordering: T,
    pub jump: T,
    /// Largest `|raw inverted occupation - eta|`.
    pub inversion: T,
    /// Number of sites whose rounded inversion disagreed with the simulator.
    pub inversion_mismatches: u64,
    pub continuity_defect: i64,
}

/// Checks the algebraic identities at the start and after every event.
#[derive(Clone, Debug, Default)]
pub struct IdentityMonitor<T> {
    pub report: IdentityReport<T>,
}

impl<T: Scalar> IdentityMonitor<T> {
    fn check(&mut self, view: &ProcessView<'_, T>) {
        let state = ColeHopfState::from_view(view);
        let r = &mut self.report;
        r.checks += 1;
        r.ordering = r.ordering.max(state.ordering_violation(view.params));
        r.jump = r.jump.max(state.jump_identity_residual(view.config, view.params));
        for (i, v) in state.occupations_raw(view.params).iter().enumerate() {
            let eta = T::of(view.config.get(i + 1) as f64);
            let d = (*v - eta).abs();
            r.inversion = r.inversion.max(d);
            if v.round() != eta {
                r.inversion_mismatches += 1;
            }
        }
        r.continuity_defect = r.continuity_defect.max(view.ledger.continuity_defect(view.initial, view.config));
    }
}

impl<T: Scalar> Observer<T> for IdentityMonitor<T> {
    fn on_start(&mut self, view: &ProcessView<'_, T>) -> Result<()> {
        self.check(view);
        Ok(())
    }

    fn on_event(&mut self, _event: &EventRecord<T>, view: &ProcessView<'_, T>) -> Result<()> {
        self.check(view);
        Ok(())
    }
}

/// Running suprema along a trajectory: `sup_t xi_t(j)` per site, kept exactly through the integer
/// exponent `W - S`, and `sup_t (1/N) sum_j xi_t(j)^n` for each requested order.
#[derive(Clone, Debug)]
pub struct SupremumTracker<T> {
    orders: Vec<u32>,
    step: T,
    exponent: Vec<i64>,
    min_exponent: Vec<i64>,
    powers: Vec<Vec<T>>,
    sums: Vec<T>,
    max_sums: Vec<T>,
    events: u64,
}

impl<T: Scalar> SupremumTracker<T> {
    /// Exact recomputation of the power sums every this many events.
    const RESYNC: u64 = 1 << 14;

    pub fn new(params: &SystemParams<T>, orders: &[u32]) -> Self {
        Self {
            orders: orders.to_vec(),
            step: params.step_exponent(),
            exponent: Vec::new(),
            min_exponent: Vec::new(),
            powers: Vec::new(),
            sums: Vec::new(),
            max_sums: vec![T::zero(); orders.len()],
            events: 0,
        }
    }

    fn resync(&mut self) {
        for (i, &n) in self.orders.iter().enumerate() {
            let c = self.step * T::of(f64::from(n));
            self.powers[i] = self.exponent.iter().map(|&k| (c * T::of_i64(k)).exp()).collect();
            self.sums[i] = self.powers[i].iter().copied().sum();
            self.max_sums[i] = self.max_sums[i].max(self.sums[i]);
        }
    }

    /// `ln sup_t xi_t(j)` for each site.
    pub fn log_sup(&self) -> Vec<T> {
        self.min_exponent.iter().map(|&k| self.step * T::of_i64(k)).collect()
    }

    /// `ln sup_t (1/N) sum_j xi_t(j)^n`, one entry per order.
    pub fn log_sup_average(&self) -> Vec<T> {
        let nt = T::of_usize(self.exponent.len());
        self.max_sums.iter().map(|&s| (s / nt).ln()).collect()
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }
}

impl<T: Scalar> Observer<T> for SupremumTracker<T> {
    fn on_start(&mut self, view: &ProcessView<'_, T>) -> Result<()> {
        let n = view.params.n();
        self.exponent = (0..n).map(|j| view.ledger.get(j) - view.initial_sums[j]).collect();
        self.min_exponent = self.exponent.clone();
        self.powers = vec![Vec::new(); self.orders.len()];
        self.sums = vec![T::zero(); self.orders.len()];
        self.max_sums = vec![T::zero(); self.orders.len()];
        self.events = 0;
        self.resync();
        Ok(())
    }

    fn on_event(&mut self, event: &EventRecord<T>, _view: &ProcessView<'_, T>) -> Result<()> {
        let j = event.bond;
        let d = i64::from(event.direction);
        self.exponent[j] += d;
        // gamma < 0, so xi grows when the exponent falls.
        self.min_exponent[j] = self.min_exponent[j].min(self.exponent[j]);
        self.events += 1;
        if self.events % Self::RESYNC == 0 {
            self.resync();
            return Ok(());
        }
        for (i, &n) in self.orders.iter().enumerate() {
            let new = (self.step * T::of(f64::from(n)) * T::of_i64(self.exponent[j])).exp();
            self.sums[i] += new - self.powers[i][j];
            self.powers[i][j] = new;
            self.max_sums[i] = self.max_sums[i].max(self.sums[i]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{apply_event, initial_sums, simulate_trajectory, Engine};
    use crate::rng::ReplicaStream;

    #[test]
    fn empty_start_gives_unit_xi() {
        let params = SystemParams::new(6, 1.0f64, 0.3, 0.7).unwrap();
        let c = Configuration::empty(6);
        let s = xi_from_state(&CurrentLedger::new(6), &initial_sums(&c), &params);
        assert!(s.xi.iter().all(|&x| x == 1.0));
        let eta = invert_to_eta(&s, &params).unwrap();
        assert_eq!(eta.particles(), 0);
    }

    #[test]
    fn single_creation_event() {
        let params = SystemParams::new(4, 1.0f64, 0.5, 0.5).unwrap();
        let init = Configuration::empty(4);
        let sums = initial_sums(&init);
        let mut c = init.clone();
        let mut w = CurrentLedger::new(4);
        apply_event(&mut c, &mut w, 0, 1);
        let s = xi_from_state(&w, &sums, &params);
        assert!((s.xi[0] - 0.8).abs() < 1e-15);
        assert_eq!(&s.xi[1..], &[1.0, 1.0, 1.0]);
        assert_eq!(s.ordering_violation(&params), 0.0);
        assert!(s.jump_identity_residual(&c, &params) < 1e-15);
        let raw = s.occupations_raw(&params);
        assert!((raw[0] - 1.0).abs() < 1e-12);
        assert_eq!(invert_to_eta(&s, &params).unwrap(), c);
    }

    #[test]
    fn corrupted_state_is_rejected() {
        let params = SystemParams::new(4, 1.0f64, 0.5, 0.5).unwrap();
        let s = ColeHopfState { xi: vec![1.0, 0.9, 1.0, 1.0] };
        assert!(invert_to_eta(&s, &params).is_err());
    }

    #[test]
    fn frozen_segment_with_flat_neighbours_leaves_martingale() {
        let params = SystemParams::new(5, 1.0f64, 0.5, 0.5).unwrap();
        let mut acc = MartingaleAccumulator::new(&params).unwrap();
        let c = Configuration::empty(5);
        let xi = vec![1.0; 5];
        acc.reset(&xi, 0.0);
        acc.accumulate(0.0, 0.2, &c, &xi).unwrap();
        let m = acc.martingale(&xi);
        // Only the two boundary bonds see a density step.
        assert!(m[1..4].iter().all(|&v| v == 0.0));
        assert!(matches!(acc.accumulate(0.3, 0.4, &c, &xi), Err(Error::NonContiguous { .. })));
    }

    #[test]
    fn supremum_tracker_matches_direct_scan() {
        let params = SystemParams::new(12, 1.0f64, 0.3, 0.7).unwrap();
        let mut s = ReplicaStream::new(5, 0);
        let init = Configuration::from_sites(12, &[1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0]).unwrap();
        let mut sim = crate::process::Simulator::new(params, init, Engine::Direct).unwrap();
        let mut tracker = SupremumTracker::new(&params, &[1, 2]);
        tracker.on_start(&sim.view()).unwrap();
        let mut best = ColeHopfState::from_view(&sim.view()).xi;
        let mut best_avg = [0.0f64; 2];
        for _ in 0..3000 {
            let ev = sim.step(&mut s).unwrap();
            tracker.on_event(&ev, &sim.view()).unwrap();
            let xi = ColeHopfState::from_view(&sim.view()).xi;
            best.iter_mut().zip(&xi).for_each(|(b, &x)| *b = b.max(x));
            for (k, n) in [1, 2].iter().enumerate() {
                best_avg[k] = best_avg[k].max(xi.iter().map(|x| x.powi(*n)).sum::<f64>() / 12.0);
            }
        }
        for (l, b) in tracker.log_sup().iter().zip(&best) {
            assert!((l.exp() - b).abs() < 1e-12 * b);
        }
        for (l, b) in tracker.log_sup_average().iter().zip(&best_avg) {
            assert!((l.exp() - b).abs() < 1e-10 * b);
        }
        // Pathwise bound sup xi(N-1) <= exp(-gamma) sup avg xi.
        let last = tracker.log_sup()[11];
        assert!(last <= -params.gamma() + tracker.log_sup_average()[0] + 1e-12);
    }

    #[test]
    fn trajectory_identities_and_linear_residual() {
        let params = SystemParams::new(16, 1.0f64, 0.3, 0.7).unwrap();
        for rep in 0..5 {
            let mut s = ReplicaStream::new(21, rep);
            let init = crate::process::sample_initial(
                &crate::profile::DensityProfile::linear(0.3, 0.7).unwrap(),
                &params,
                &mut s,
            )
            .unwrap();
            let mut obs = (IdentityMonitor::default(), MartingaleAccumulator::new(&params).unwrap());
            simulate_trajectory(&params, &init, 0.1, &[0.05, 0.1], Engine::Direct, &mut s, &mut obs).unwrap();
            let r = &obs.0.report;
            assert!(r.checks > 10);
            assert_eq!(r.ordering, 0.0);
            assert!(r.jump < 1e-12);
            assert!(r.inversion < 1e-9);
            assert_eq!(r.inversion_mismatches, 0);
            assert_eq!(r.continuity_defect, 0);
            for snap in &obs.1.snapshots {
                assert!(snap.linear_residual < 1e-10, "{}", snap.linear_residual);
            }
        }
    }
}
