//! Exact continuous-time simulation of the speeded-up boundary-driven exclusion process.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::params::SystemParams;
use crate::profile::DensityProfile;
use crate::rng::ReplicaStream;
use crate::scalar::Scalar;

/// Occupations of sites `1..=N-1`. Reservoir values only enter through the rates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    n: usize,
    // Index 0 and N are padding so that `occ[j]` is site `j`.
    occ: Vec<u8>,
}

impl Configuration {
    pub fn empty(n: usize) -> Self {
        Self { n, occ: vec![0; n + 1] }
    }

    pub fn full(n: usize) -> Self {
        let mut c = Self::empty(n);
        for j in 1..n {
            c.occ[j] = 1;
        }
        c
    }

    /// Builds from the `N-1` interior occupations.
    pub fn from_sites(n: usize, sites: &[u8]) -> Result<Self> {
        if sites.len() + 1 != n {
            return Err(Error::InvalidConfiguration(format!("expected {} sites, got {}", n - 1, sites.len())));
        }
        if let Some(bad) = sites.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidConfiguration(format!("occupation {bad} is not 0 or 1")));
        }
        let mut c = Self::empty(n);
        c.occ[1..n].copy_from_slice(sites);
        Ok(c)
    }

    /// Bit `j-1` of `index` is the occupation of site `j`.
    pub fn from_state_index(n: usize, index: usize) -> Self {
        let mut c = Self::empty(n);
        for j in 1..n {
            c.occ[j] = ((index >> (j - 1)) & 1) as u8;
        }
        c
    }

    pub fn state_index(&self) -> usize {
        (1..self.n).map(|j| (self.occ[j] as usize) << (j - 1)).sum()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize) -> u8 {
        debug_assert!(j >= 1 && j < self.n);
        self.occ[j]
    }

    #[inline]
    pub fn set(&mut self, j: usize, v: u8) {
        debug_assert!(j >= 1 && j < self.n && v <= 1);
        self.occ[j] = v;
    }

    /// Interior occupations, site `1` first.
    pub fn sites(&self) -> &[u8] {
        &self.occ[1..self.n]
    }

    pub fn particles(&self) -> usize {
        self.sites().iter().map(|&v| v as usize).sum()
    }

    /// Occupation with the reservoir convention `eta(0) = alpha`, `eta(N) = beta`.
    #[inline]
    pub fn extended<T: Scalar>(&self, j: usize, params: &SystemParams<T>) -> T {
        if j == 0 {
            params.alpha()
        } else if j == self.n {
            params.beta()
        } else if self.occ[j] == 1 {
            T::one()
        } else {
            T::zero()
        }
    }
}

/// Net number of jumps across each bond `{j, j+1}`, `0 <= j <= N-1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurrentLedger {
    w: Vec<i64>,
}

impl CurrentLedger {
    pub fn new(n: usize) -> Self {
        Self { w: vec![0; n] }
    }

    #[inline]
    pub fn get(&self, bond: usize) -> i64 {
        self.w[bond]
    }

    pub fn values(&self) -> &[i64] {
        &self.w
    }

    /// Largest violation of `W(j-1) - W(j) = eta_t(j) - eta_0(j)`; zero for a consistent ledger.
    pub fn continuity_defect(&self, initial: &Configuration, current: &Configuration) -> i64 {
        (1..initial.n())
            .map(|j| {
                let lhs = self.w[j - 1] - self.w[j];
                let rhs = current.get(j) as i64 - initial.get(j) as i64;
                (lhs - rhs).abs()
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord<T> {
    pub time: T,
    pub bond: usize,
    /// `+1` for a rightward jump (or a creation at site 1 / removal at site N-1), `-1` otherwise.
    pub direction: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BondRates<T> {
    pub forward: T,
    pub backward: T,
}

impl<T: Scalar> BondRates<T> {
    pub fn total(&self) -> T {
        self.forward + self.backward
    }
}

/// Forward and backward jump rates on every bond.
pub fn rate_table<T: Scalar>(config: &Configuration, params: &SystemParams<T>) -> Vec<BondRates<T>> {
    let n = params.n();
    let fast = params.speed() * params.bias();
    let slow = params.speed();
    (0..n)
        .map(|j| {
            let a = config.extended::<T>(j, params);
            let b = config.extended::<T>(j + 1, params);
            BondRates { forward: fast * a * (T::one() - b), backward: slow * b * (T::one() - a) }
        })
        .collect()
}

/// Applies one jump and updates the ledger.
pub fn apply_event(config: &mut Configuration, ledger: &mut CurrentLedger, bond: usize, direction: i8) {
    let n = config.n();
    let forward = direction > 0;
    if bond == 0 {
        config.set(1, u8::from(forward));
    } else if bond == n - 1 {
        config.set(n - 1, u8::from(!forward));
    } else {
        let (from, to) = if forward { (bond, bond + 1) } else { (bond + 1, bond) };
        debug_assert_eq!(config.get(from), 1);
        debug_assert_eq!(config.get(to), 0);
        config.set(from, 0);
        config.set(to, 1);
    }
    ledger.w[bond] += direction as i64;
}

/// One step of the direct method with a full rate rescan.
pub fn gillespie_step<T: Scalar>(
    config: &mut Configuration,
    ledger: &mut CurrentLedger,
    time: T,
    params: &SystemParams<T>,
    stream: &mut ReplicaStream,
) -> Result<EventRecord<T>> {
    let rates = rate_table(config, params);
    let total: T = rates.iter().map(BondRates::total).sum();
    if !(total > T::zero()) {
        return Err(Error::Absorbing { time: time.as_f64() });
    }
    let dt = stream.exp1::<T>()? / total;
    let (bond, direction) = select_direct(&rates, stream.uniform::<T>()? * total);
    apply_event(config, ledger, bond, direction);
    Ok(EventRecord { time: time + dt, bond, direction })
}

fn select_direct<T: Scalar>(rates: &[BondRates<T>], mut u: T) -> (usize, i8) {
    let mut last = (rates.len() - 1, 1i8);
    for (j, r) in rates.iter().enumerate() {
        if r.forward > T::zero() {
            if u < r.forward {
                return (j, 1);
            }
            u -= r.forward;
            last = (j, 1);
        }
        if r.backward > T::zero() {
            if u < r.backward {
                return (j, -1);
            }
            u -= r.backward;
            last = (j, -1);
        }
    }
    // Rounding left a sliver past the last channel.
    last
}

/// Event-selection strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Engine {
    /// Rescans every bond per event.
    Direct,
    /// Keeps the sets of active interior bonds; constant cost per event.
    Grouped,
    /// `Direct` for small lattices, `Grouped` otherwise.
    #[default]
    Auto,
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct BondSet {
    members: Vec<u32>,
    pos: Vec<u32>,
}

impl BondSet {
    fn new(n: usize) -> Self {
        Self { members: Vec::with_capacity(n), pos: vec![NONE; n] }
    }

    #[inline]
    fn set(&mut self, j: usize, present: bool) {
        let p = self.pos[j];
        if present && p == NONE {
            self.pos[j] = self.members.len() as u32;
            self.members.push(j as u32);
        } else if !present && p != NONE {
            let last = *self.members.last().expect("non-empty set");
            self.members.swap_remove(p as usize);
            if last as usize != j {
                self.pos[last as usize] = p;
            }
            self.pos[j] = NONE;
        }
    }

    #[inline]
    fn len(&self) -> usize {
        self.members.len()
    }
}

#[derive(Clone, Debug)]
struct ActiveBonds {
    // Interior bonds with a particle that can jump right (`10`) or left (`01`).
    right: BondSet,
    left: BondSet,
}

impl ActiveBonds {
    fn new(config: &Configuration) -> Self {
        let n = config.n();
        let mut s = Self { right: BondSet::new(n), left: BondSet::new(n) };
        for j in 1..n.saturating_sub(1) {
            s.refresh(config, j);
        }
        s
    }

    #[inline]
    fn refresh(&mut self, config: &Configuration, j: usize) {
        let a = config.occ[j];
        let b = config.occ[j + 1];
        self.right.set(j, a == 1 && b == 0);
        self.left.set(j, a == 0 && b == 1);
    }

    /// Refreshes the interior bonds among `lo..=hi`.
    #[inline]
    fn touch_bonds(&mut self, config: &Configuration, lo: usize, hi: usize) {
        let n = config.n();
        for j in lo.max(1)..=hi.min(n.saturating_sub(2)) {
            self.refresh(config, j);
        }
    }
}

/// Read-only snapshot handed to observers.
pub struct ProcessView<'a, T> {
    pub params: &'a SystemParams<T>,
    pub time: T,
    pub initial: &'a Configuration,
    /// `S(j) = sum_{k <= j} eta_0(k)` for `0 <= j <= N-1`.
    pub initial_sums: &'a [i64],
    pub config: &'a Configuration,
    pub ledger: &'a CurrentLedger,
}

/// Hooks invoked along a trajectory. The state is constant on every `on_hold` interval.
pub trait Observer<T: Scalar> {
    fn on_start(&mut self, _view: &ProcessView<'_, T>) -> Result<()> {
        Ok(())
    }

    /// The current state held on `[from, to)`.
    fn on_hold(&mut self, _from: T, _to: T, _view: &ProcessView<'_, T>) -> Result<()> {
        Ok(())
    }

    /// Called after `event` has been applied.
    fn on_event(&mut self, _event: &EventRecord<T>, _view: &ProcessView<'_, T>) -> Result<()> {
        Ok(())
    }

    /// Observation number `index` at time `time` (right-continuous state).
    fn on_observation(&mut self, _index: usize, _time: T, _view: &ProcessView<'_, T>) -> Result<()> {
        Ok(())
    }

    fn on_finish(&mut self, _view: &ProcessView<'_, T>) -> Result<()> {
        Ok(())
    }
}

impl<T: Scalar> Observer<T> for () {}

impl<T: Scalar, O: Observer<T> + ?Sized> Observer<T> for &mut O {
    fn on_start(&mut self, view: &ProcessView<'_, T>) -> Result<()> {
        (**self).on_start(view)
    }
    fn on_hold(&mut self, from: T, to: T, view: &ProcessView<'_, T>) -> Result<()> {
        (**self).on_hold(from, to, view)
    }
    fn on_event(&mut self, event: &EventRecord<T>, view: &ProcessView<'_, T>) -> Result<()> {
        (**self).on_event(event, view)
    }
    fn on_observation(&mut self, index: usize, time: T, view: &ProcessView<'_, T>) -> Result<()> {
        (**self).on_observation(index, time, view)
    }
    fn on_finish(&mut self, view: &ProcessView<'_, T>) -> Result<()> {
        (**self).on_finish(view)
    }
}

macro_rules! tuple_observer {
    ($($name:ident),+) => {
        #[allow(non_snake_case)]
        impl<T: Scalar, $($name: Observer<T>),+> Observer<T> for ($($name,)+) {
            fn on_start(&mut self, view: &ProcessView<'_, T>) -> Result<()> {
                let ($($name,)+) = self;
                $($name.on_start(view)?;)+
                Ok(())
            }
            fn on_hold(&mut self, from: T, to: T, view: &ProcessView<'_, T>) -> Result<()> {
                let ($($name,)+) = self;
                $($name.on_hold(from, to, view)?;)+
                Ok(())
            }
            fn on_event(&mut self, event: &EventRecord<T>, view: &ProcessView<'_, T>) -> Result<()> {
                let ($($name,)+) = self;
                $($name.on_event(event, view)?;)+
                Ok(())
            }
            fn on_observation(&mut self, index: usize, time: T, view: &ProcessView<'_, T>) -> Result<()> {
                let ($($name,)+) = self;
                $($name.on_observation(index, time, view)?;)+
                Ok(())
            }
            fn on_finish(&mut self, view: &ProcessView<'_, T>) -> Result<()> {
                let ($($name,)+) = self;
                $($name.on_finish(view)?;)+
                Ok(())
            }
        }
    };
}

tuple_observer!(A, B);
tuple_observer!(A, B, C);
tuple_observer!(A, B, C, D);

/// Records every event, e.g. for CSV export.
#[derive(Clone, Debug, Default)]
pub struct EventLog<T> {
    pub events: Vec<EventRecord<T>>,
}

impl<T: Scalar> Observer<T> for EventLog<T> {
    fn on_event(&mut self, event: &EventRecord<T>, _view: &ProcessView<'_, T>) -> Result<()> {
        self.events.push(*event);
        Ok(())
    }
}

/// Copies the configuration at each observation time.
#[derive(Clone, Debug, Default)]
pub struct Snapshots {
    pub configs: Vec<Configuration>,
    pub ledgers: Vec<CurrentLedger>,
}

impl<T: Scalar> Observer<T> for Snapshots {
    fn on_observation(&mut self, _index: usize, _time: T, view: &ProcessView<'_, T>) -> Result<()> {
        self.configs.push(view.config.clone());
        self.ledgers.push(view.ledger.clone());
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySummary<T> {
    pub final_config: Configuration,
    pub ledger: CurrentLedger,
    pub horizon: T,
    pub events: u64,
}

/// Prefix sums `S(j)` of the initial occupations, `S(0) = 0`.
pub fn initial_sums(initial: &Configuration) -> Vec<i64> {
    let n = initial.n();
    let mut s = vec![0i64; n];
    for j in 1..n {
        s[j] = s[j - 1] + initial.get(j) as i64;
    }
    s
}

/// Stateful simulator.
#[derive(Clone, Debug)]
pub struct Simulator<T> {
    params: SystemParams<T>,
    initial: Configuration,
    sums: Vec<i64>,
    config: Configuration,
    ledger: CurrentLedger,
    time: T,
    events: u64,
    active: Option<ActiveBonds>,
    rates: GroupedRates<T>,
}

/// Rate constants of the grouped engine; boundary channels indexed by `2 eta(1) + eta(N-1)`.
#[derive(Clone, Debug)]
struct GroupedRates<T> {
    fast: T,
    slow: T,
    boundary: [[T; 4]; 4],
}

impl<T: Scalar> GroupedRates<T> {
    fn new(p: &SystemParams<T>) -> Self {
        let slow = p.speed();
        let fast = slow * p.bias();
        let one = T::one();
        let row = |first: T, last: T| {
            [
                fast * p.alpha() * (one - first),
                slow * first * (one - p.alpha()),
                fast * last * (one - p.beta()),
                slow * p.beta() * (one - last),
            ]
        };
        let (z, o) = (T::zero(), T::one());
        Self { fast, slow, boundary: [row(z, z), row(z, o), row(o, z), row(o, o)] }
    }
}

impl<T: Scalar> Simulator<T> {
    pub fn new(params: SystemParams<T>, initial: Configuration, engine: Engine) -> Result<Self> {
        if initial.n() != params.n() {
            return Err(Error::InvalidConfiguration(format!(
                "configuration has N = {}, parameters have N = {}",
                initial.n(),
                params.n()
            )));
        }
        let grouped = match engine {
            Engine::Direct => false,
            Engine::Grouped => true,
            Engine::Auto => params.n() > 32,
        };
        let active = grouped.then(|| ActiveBonds::new(&initial));
        Ok(Self {
            sums: initial_sums(&initial),
            config: initial.clone(),
            ledger: CurrentLedger::new(params.n()),
            initial,
            params,
            time: T::zero(),
            events: 0,
            active,
            rates: GroupedRates::new(&params),
        })
    }

    pub fn params(&self) -> &SystemParams<T> {
        &self.params
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn ledger(&self) -> &CurrentLedger {
        &self.ledger
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn initial_sums(&self) -> &[i64] {
        &self.sums
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn view(&self) -> ProcessView<'_, T> {
        ProcessView {
            params: &self.params,
            time: self.time,
            initial: &self.initial,
            initial_sums: &self.sums,
            config: &self.config,
            ledger: &self.ledger,
        }
    }

    #[inline]
    fn total_rate(&self) -> T {
        match &self.active {
            None => rate_table(&self.config, &self.params).iter().map(BondRates::total).sum(),
            Some(active) => {
                let (fast, slow, boundary) = self.grouped_parts();
                fast * T::of_usize(active.right.len()) + slow * T::of_usize(active.left.len()) + boundary.iter().copied().sum::<T>()
            }
        }
    }

    #[inline]
    fn grouped_parts(&self) -> (T, T, [T; 4]) {
        let n = self.params.n();
        let k = 2 * usize::from(self.config.occ[1]) + usize::from(self.config.occ[n - 1]);
        (self.rates.fast, self.rates.slow, self.rates.boundary[k])
    }

    fn select_grouped(&self, u: T) -> (usize, i8) {
        let active = self.active.as_ref().expect("grouped engine");
        let (fast, slow, boundary) = self.grouped_parts();
        let n = self.params.n();
        let r_right = fast * T::of_usize(active.right.len());
        if u < r_right {
            let k = (u / fast).to_usize().unwrap_or(0).min(active.right.len() - 1);
            return (active.right.members[k] as usize, 1);
        }
        let u = u - r_right;
        let r_left = slow * T::of_usize(active.left.len());
        if u < r_left {
            let k = (u / slow).to_usize().unwrap_or(0).min(active.left.len() - 1);
            return (active.left.members[k] as usize, -1);
        }
        let mut u = u - r_left;
        let channels = [(0usize, 1i8), (0, -1), (n - 1, 1), (n - 1, -1)];
        let mut last = None;
        for (rate, ch) in boundary.iter().zip(channels) {
            if *rate > T::zero() {
                if u < *rate {
                    return ch;
                }
                u -= *rate;
                last = Some(ch);
            }
        }
        // Rounding past the last positive channel.
        last.unwrap_or_else(|| {
            if active.left.len() > 0 {
                (active.left.members[active.left.len() - 1] as usize, -1)
            } else {
                (active.right.members[active.right.len() - 1] as usize, 1)
            }
        })
    }

    fn apply(&mut self, bond: usize, direction: i8) {
        apply_event(&mut self.config, &mut self.ledger, bond, direction);
        if let Some(active) = self.active.as_mut() {
            let n = self.params.n();
            // Bonds whose occupation pair contains a changed site.
            active.touch_bonds(&self.config, bond.saturating_sub(1), (bond + 1).min(n - 1));
        }
    }

    /// Samples the next event; returns its time and channel without applying it.
    fn propose(&mut self, stream: &mut ReplicaStream) -> Result<(T, T)> {
        let total = self.total_rate();
        if !(total > T::zero()) {
            return Err(Error::Absorbing { time: self.time.as_f64() });
        }
        let dt = stream.exp1::<T>()? / total;
        Ok((self.time + dt, total))
    }

    fn commit(&mut self, at: T, total: T, stream: &mut ReplicaStream) -> Result<EventRecord<T>> {
        let u = stream.uniform::<T>()? * total;
        let (bond, direction) = match &self.active {
            None => select_direct(&rate_table(&self.config, &self.params), u),
            Some(_) => self.select_grouped(u),
        };
        self.apply(bond, direction);
        self.time = at;
        self.events += 1;
        Ok(EventRecord { time: at, bond, direction })
    }

    /// Performs one event regardless of any horizon.
    pub fn step(&mut self, stream: &mut ReplicaStream) -> Result<EventRecord<T>> {
        let (at, total) = self.propose(stream)?;
        self.commit(at, total, stream)
    }

    /// Runs until `horizon`, firing observations at the sorted times `obs_times`.
    pub fn run<O: Observer<T>>(
        &mut self,
        horizon: T,
        obs_times: &[T],
        stream: &mut ReplicaStream,
        observer: &mut O,
    ) -> Result<()> {
        validate_grid(self.time, horizon, obs_times)?;
        observer.on_start(&self.view())?;
        let mut next_obs = 0usize;
        let mut clock = self.time;
        loop {
            let (at, total) = self.propose(stream)?;
            // Every observation time is <= horizon, so all remaining ones fire once `at` passes it.
            while next_obs < obs_times.len() && obs_times[next_obs] < at {
                let tau = obs_times[next_obs];
                if tau > clock {
                    observer.on_hold(clock, tau, &self.view())?;
                    clock = tau;
                }
                observer.on_observation(next_obs, tau, &self.view())?;
                next_obs += 1;
            }
            if at > horizon {
                if horizon > clock {
                    observer.on_hold(clock, horizon, &self.view())?;
                }
                self.time = horizon;
                break;
            }
            if at > clock {
                observer.on_hold(clock, at, &self.view())?;
            }
            clock = at;
            let ev = self.commit(at, total, stream)?;
            observer.on_event(&ev, &self.view())?;
        }
        observer.on_finish(&self.view())?;
        Ok(())
    }

    pub fn summary(&self) -> TrajectorySummary<T> {
        TrajectorySummary {
            final_config: self.config.clone(),
            ledger: self.ledger.clone(),
            horizon: self.time,
            events: self.events,
        }
    }
}

fn validate_grid<T: Scalar>(start: T, horizon: T, obs: &[T]) -> Result<()> {
    if !(horizon >= start) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} precedes current time {start}")));
    }
    let mut prev = start;
    for &t in obs {
        if !(t >= prev) || t > horizon {
            return Err(Error::InvalidParameter(format!(
                "observation times must be sorted within [{start}, {horizon}], found {t}"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Simulates one trajectory from `initial` up to `horizon`.
pub fn simulate_trajectory<T: Scalar, O: Observer<T>>(
    params: &SystemParams<T>,
    initial: &Configuration,
    horizon: T,
    obs_times: &[T],
    engine: Engine,
    stream: &mut ReplicaStream,
    observer: &mut O,
) -> Result<TrajectorySummary<T>> {
    let mut sim = Simulator::new(*params, initial.clone(), engine)?;
    sim.run(horizon, obs_times, stream, observer)?;
    Ok(sim.summary())
}

/// Independent Bernoulli(`rho0(j/N)`) occupations.
pub fn sample_initial<T: Scalar>(
    profile: &DensityProfile<T>,
    params: &SystemParams<T>,
    stream: &mut ReplicaStream,
) -> Result<Configuration> {
    let n = params.n();
    let mut c = Configuration::empty(n);
    for j in 1..n {
        let x = T::of_usize(j) / params.n_scalar();
        let p = profile.eval(x);
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::ProfileOutOfRange { x: x.as_f64(), value: p.as_f64() });
        }
        c.set(j, u8::from(stream.bernoulli(p)?));
    }
    Ok(c)
}

/// Largest lattice accepted by the dense oracle.
pub const ORACLE_MAX_N: usize = 12;

fn oracle_guard(n: usize) -> Result<()> {
    if n > ORACLE_MAX_N {
        return Err(Error::StateSpaceTooLarge { sites: n - 1 });
    }
    Ok(())
}

/// Dense generator on `{0,1}^{N-1}`, row `from`, column `to`.
pub fn generator_matrix<T: Scalar>(params: &SystemParams<T>) -> Result<DenseMatrix<T>> {
    let n = params.n();
    oracle_guard(n)?;
    let states = 1usize << (n - 1);
    let mut q = DenseMatrix::zeros(states, states);
    for s in 0..states {
        let c = Configuration::from_state_index(n, s);
        let rates = rate_table(&c, params);
        let mut out = T::zero();
        for (bond, r) in rates.iter().enumerate() {
            for (dir, rate) in [(1i8, r.forward), (-1i8, r.backward)] {
                if rate > T::zero() {
                    let mut next = c.clone();
                    let mut ledger = CurrentLedger::new(n);
                    apply_event(&mut next, &mut ledger, bond, dir);
                    q[(s, next.state_index())] += rate;
                    out += rate;
                }
            }
        }
        q[(s, s)] -= out;
    }
    Ok(q)
}

/// Product-Bernoulli law of the profile sampled at `j/N`.
pub fn product_distribution<T: Scalar>(profile: &DensityProfile<T>, params: &SystemParams<T>) -> Result<Vec<T>> {
    let n = params.n();
    oracle_guard(n)?;
    let states = 1usize << (n - 1);
    Ok((0..states)
        .map(|s| {
            let c = Configuration::from_state_index(n, s);
            (1..n)
                .map(|j| {
                    let p = profile.eval(T::of_usize(j) / params.n_scalar());
                    if c.get(j) == 1 {
                        p
                    } else {
                        T::one() - p
                    }
                })
                .fold(T::one(), |a, b| a * b)
        })
        .collect())
}

/// Law at time `t` from the initial law `p0` via the matrix exponential.
pub fn exact_distribution<T: Scalar>(params: &SystemParams<T>, p0: &[T], t: T) -> Result<Vec<T>> {
    let q = generator_matrix(params)?;
    if p0.len() != q.rows() {
        return Err(Error::InvalidParameter(format!("initial law has {} entries, expected {}", p0.len(), q.rows())));
    }
    if !(t >= T::zero()) {
        return Err(Error::InvalidParameter(format!("time {t} is negative")));
    }
    if t == T::zero() {
        return Ok(p0.to_vec());
    }
    let propagator = q.transpose().scaled(t).expm()?;
    clip_probabilities(propagator.mul_vec(p0))
}

fn clip_probabilities<T: Scalar>(mut p: Vec<T>) -> Result<Vec<T>> {
    let floor = T::of(-1e-12);
    for v in p.iter_mut() {
        if *v < floor || !v.is_finite() {
            return Err(Error::Numerical(format!("oracle probability {v} is negative")));
        }
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    Ok(p)
}

/// Stationary law: left null vector of the generator, normalized.
pub fn stationary_distribution<T: Scalar>(params: &SystemParams<T>) -> Result<Vec<T>> {
    let q = generator_matrix(params)?;
    let m = q.rows();
    let mut a = q.transpose();
    for j in 0..m {
        a[(m - 1, j)] = T::one();
    }
    let mut rhs = vec![T::zero(); m];
    rhs[m - 1] = T::one();
    clip_probabilities(a.solve_vec(&rhs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p4() -> SystemParams<f64> {
        SystemParams::new(4, 1.0, 0.5, 0.5).unwrap()
    }

    #[test]
    fn rates_from_empty_configuration() {
        let r = rate_table(&Configuration::empty(4), &p4());
        assert_eq!(r[0], BondRates { forward: 10.0, backward: 0.0 });
        assert_eq!(r[3], BondRates { forward: 0.0, backward: 8.0 });
        assert_eq!(r[1].total() + r[2].total(), 0.0);
        let total: f64 = r.iter().map(BondRates::total).sum();
        assert_eq!(total, 18.0);
    }

    #[test]
    fn rates_from_full_configuration() {
        let r = rate_table(&Configuration::full(4), &p4());
        assert_eq!(r[0].backward, 8.0);
        assert_eq!(r[3].forward, 10.0);
        let total: f64 = r.iter().map(BondRates::total).sum();
        assert_eq!(total, 18.0);
    }

    #[test]
    fn creation_event_updates_ledger() {
        let mut c = Configuration::empty(4);
        let mut w = CurrentLedger::new(4);
        apply_event(&mut c, &mut w, 0, 1);
        assert_eq!(c.sites(), &[1, 0, 0]);
        assert_eq!(w.get(0), 1);
        assert_eq!(w.continuity_defect(&Configuration::empty(4), &c), 0);
    }

    #[test]
    fn first_event_frequency_and_waiting_time() {
        let params = p4();
        let mut stream = ReplicaStream::new(11, 0);
        let draws = 100_000;
        let (mut at_zero, mut sum, mut sum2) = (0usize, 0.0, 0.0);
        for _ in 0..draws {
            let mut c = Configuration::empty(4);
            let mut w = CurrentLedger::new(4);
            let ev = gillespie_step(&mut c, &mut w, 0.0, &params, &mut stream).unwrap();
            if ev.bond == 0 {
                at_zero += 1;
            }
            sum += ev.time;
            sum2 += ev.time * ev.time;
        }
        let n = draws as f64;
        let p = 10.0 / 18.0;
        let phat = at_zero as f64 / n;
        assert!((phat - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt());
        let mean = sum / n;
        let se = ((sum2 / n - mean * mean) / n).sqrt();
        assert!((mean - 1.0 / 18.0).abs() < 3.0 * se);
    }

    #[test]
    fn zero_horizon_is_identity() {
        let params = p4();
        let init = Configuration::from_sites(4, &[1, 0, 1]).unwrap();
        let mut stream = ReplicaStream::new(1, 2);
        let s = simulate_trajectory(&params, &init, 0.0, &[0.0], Engine::Direct, &mut stream, &mut ()).unwrap();
        assert_eq!(s.final_config, init);
        assert_eq!(s.events, 0);
    }

    #[test]
    fn grouped_rates_agree_with_table() {
        let params = SystemParams::new(40, 1.3, 0.2, 0.9).unwrap();
        let mut stream = ReplicaStream::new(5, 0);
        let mut sim = Simulator::new(params, Configuration::empty(40), Engine::Grouped).unwrap();
        for _ in 0..2000 {
            sim.step(&mut stream).unwrap();
            let direct: f64 = rate_table(sim.config(), &params).iter().map(BondRates::total).sum();
            assert!((sim.total_rate() - direct).abs() < 1e-9 * direct);
            assert_eq!(sim.ledger().continuity_defect(sim.initial(), sim.config()), 0);
        }
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let params = SystemParams::new(5, 1.0, 0.3, 0.6).unwrap();
        let q = generator_matrix(&params).unwrap();
        for i in 0..q.rows() {
            assert!(q.row(i).iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_relaxes_to_stationary_vector() {
        let params = SystemParams::new(3, 1.0f64, 0.5, 0.5).unwrap();
        let pi = stationary_distribution(&params).unwrap();
        let p0 = vec![1.0, 0.0, 0.0, 0.0];
        assert_eq!(exact_distribution(&params, &p0, 0.0).unwrap(), p0);
        let p = exact_distribution(&params, &p0, 5.0).unwrap();
        for (a, b) in p.iter().zip(&pi) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oracle_guard_rejects_large_lattice() {
        let params = SystemParams::new(13, 1.0, 0.5, 0.5).unwrap();
        assert!(matches!(generator_matrix(&params), Err(Error::StateSpaceTooLarge { .. })));
    }

    #[test]
    fn degenerate_profiles_sample_deterministically() {
        let params = SystemParams::new(50, 1.0, 0.5, 0.5).unwrap();
        let mut s = ReplicaStream::new(3, 3);
        let empty = sample_initial(&DensityProfile::constant(0.0).unwrap(), &params, &mut s).unwrap();
        assert_eq!(empty.particles(), 0);
        let full = sample_initial(&DensityProfile::constant(1.0).unwrap(), &params, &mut s).unwrap();
        assert_eq!(full.particles(), 49);
    }

    #[test]
    fn half_profile_concentrates() {
        let params = SystemParams::new(1000, 1.0, 0.5, 0.5).unwrap();
        let mut s = ReplicaStream::new(9, 0);
        let c = sample_initial(&DensityProfile::constant(0.5).unwrap(), &params, &mut s).unwrap();
        let mean = c.particles() as f64 / 999.0;
        assert!((mean - 0.5).abs() <= 3.0 * (0.25f64 / 999.0).sqrt());
    }

    #[test]
    fn exhausted_stream_is_reported() {
        let params = p4();
        let mut stream = ReplicaStream::new(0, 0).with_budget(3);
        let mut sim = Simulator::new(params, Configuration::empty(4), Engine::Direct).unwrap();
        let err = sim.run(10.0, &[], &mut stream, &mut ()).unwrap_err();
        assert!(matches!(err, Error::RngExhausted { .. }));
    }
}
