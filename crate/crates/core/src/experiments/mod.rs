//! Claim registry, replica ensembles and pass/fail verification reports.
//!
//! Claims are grouped by the computation they share: running a group once produces the
//! reports of all of its claims, so e.g. the four fluctuation claims reuse one ensemble.

mod deterministic;
mod ensemble;
mod equilibrium;
mod fluctuation;
mod identities;
mod moments;
mod semigroup;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::profile::DensityProfile;
use crate::stats::Moments;

pub use ensemble::{derive_seed, run_ensemble, run_replicas};
pub use moments::moment_bound_check;

/// User overrides on top of the per-claim defaults; `None` keeps the default.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub ns: Option<Vec<usize>>,
    pub e_field: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// `constant:c`, `linear` or `cosine`.
    pub profile: Option<String>,
    pub t_max: Option<f64>,
    pub obs_times: Option<Vec<f64>>,
    pub replicas: Option<usize>,
    pub seed: u64,
    /// Claim ids or group names; empty selects everything.
    pub claims: Vec<String>,
    pub tolerances: BTreeMap<String, f64>,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::InvalidParameter(format!("bad entry `{s}` for `{key}`"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Applies one flat `key = value` setting, e.g. `n = 64,128` or `tolerances.oracle = 3`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "n" | "ns" => self.ns = Some(parse_list(key, value)?),
            "e_field" => self.e_field = Some(parse_one(key, value)?),
            "alpha" => self.alpha = Some(parse_one(key, value)?),
            "beta" => self.beta = Some(parse_one(key, value)?),
            "profile" => self.profile = Some(value.trim().to_string()),
            "t_max" | "t" => self.t_max = Some(parse_one(key, value)?),
            "obs_times" => self.obs_times = Some(parse_list(key, value)?),
            "replicas" => self.replicas = Some(parse_one(key, value)?),
            "seed" => self.seed = parse_one(key, value)?,
            "workers" => self.workers = Some(parse_one(key, value)?),
            "claims" | "only" => self.claims = parse_list(key, value)?,
            _ => match key.strip_prefix("tolerances.") {
                Some(id) => {
                    self.tolerances.insert(id.to_string(), parse_one(key, value)?);
                }
                None => return Err(Error::InvalidParameter(format!("unknown setting `{key}`"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(ns) = &self.ns {
            if ns.is_empty() {
                return Err(Error::InvalidConfiguration("the N list is empty".into()));
            }
            if ns.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfiguration(format!("the N list {ns:?} must be strictly ascending")));
            }
            if ns[0] < 2 {
                return Err(Error::InvalidConfiguration("lattice sizes must be at least 2".into()));
            }
        }
        if let Some(e) = self.e_field {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidParameter(format!("E = {e} must be positive")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if let Some(v) = v {
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")));
                }
            }
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("horizon {t} must be positive")));
            }
        }
        if let Some(obs) = &self.obs_times {
            if obs.iter().any(|&s| !(s >= 0.0)) || obs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfiguration("observation times must be ascending and non-negative".into()));
            }
            if let (Some(t), Some(&last)) = (self.t_max, obs.last()) {
                if last > t {
                    return Err(Error::InvalidConfiguration(format!("observation time {last} exceeds the horizon {t}")));
                }
            }
        }
        if self.replicas == Some(0) {
            return Err(Error::InvalidConfiguration("at least one replica is required".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfiguration("at least one worker is required".into()));
        }
        if let Some(p) = &self.profile {
            DensityProfile::<f64>::parse(p, 0.5, 0.5)?;
        }
        for (id, &tol) in &self.tolerances {
            claim_spec(id)?;
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::InvalidParameter(format!("tolerance for `{id}` must be positive")));
            }
        }
        self.selected_groups()?;
        Ok(())
    }

    /// Groups needed for the selected claims, in registry order.
    pub fn selected_groups(&self) -> Result<Vec<Group>> {
        if self.claims.is_empty() {
            return Ok(Group::ALL.to_vec());
        }
        let mut out = Vec::new();
        for c in &self.claims {
            let g = match Group::from_name(c) {
                Some(g) => g,
                None => claim_spec(c)?.group,
            };
            if !out.contains(&g) {
                out.push(g);
            }
        }
        out.sort();
        Ok(out)
    }

    fn wants(&self, id: &str, group: Group) -> bool {
        self.claims.is_empty() || self.claims.iter().any(|c| c == id || c == group.name())
    }
}

/// A group's defaults merged with the user overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub ns: Vec<usize>,
    pub e_field: f64,
    pub alpha: f64,
    pub beta: f64,
    pub profile: String,
    pub t_max: f64,
    pub obs_times: Option<Vec<f64>>,
    pub replicas: usize,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Settings {
    pub fn params(&self, n: usize) -> Result<SystemParams<f64>> {
        SystemParams::new(n, self.e_field, self.alpha, self.beta)
    }

    pub fn profile(&self) -> Result<DensityProfile<f64>> {
        DensityProfile::parse(&self.profile, self.alpha, self.beta)
    }

    /// Independent master seed for one sweep point of one group.
    pub fn seed_for(&self, group: Group, n: usize) -> u64 {
        derive_seed(self.seed, group.name(), n as u64)
    }

    /// The configured observation times, or `count` uniform times in `(0, t_max]`.
    pub fn obs_or_uniform(&self, count: usize) -> Vec<f64> {
        match &self.obs_times {
            Some(v) if !v.is_empty() => v.clone(),
            _ => (1..=count).map(|i| self.t_max * i as f64 / count as f64).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Defaults {
    ns: &'static [usize],
    e_field: f64,
    alpha: f64,
    beta: f64,
    profile: &'static str,
    t_max: f64,
    replicas: usize,
}

const BASE: Defaults =
    Defaults { ns: &[64, 128, 256], e_field: 1.0, alpha: 0.3, beta: 0.7, profile: "linear", t_max: 0.25, replicas: 100 };

/// Claims that share one computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Identities,
    Remarkable,
    Oracle,
    Profiles,
    Kernel,
    LogSobolev,
    Semigroup,
    Moments,
    FourthMoment,
    Remainder,
    Backward,
    Fluctuation,
    Equilibrium,
    Hydrodynamics,
    Spectral,
}

impl Group {
    pub const ALL: [Group; 15] = [
        Group::Identities,
        Group::Remarkable,
        Group::Oracle,
        Group::Profiles,
        Group::Kernel,
        Group::LogSobolev,
        Group::Semigroup,
        Group::Moments,
        Group::FourthMoment,
        Group::Remainder,
        Group::Backward,
        Group::Fluctuation,
        Group::Equilibrium,
        Group::Hydrodynamics,
        Group::Spectral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::Identities => "identities",
            Group::Remarkable => "remarkable",
            Group::Oracle => "oracle-group",
            Group::Profiles => "profiles",
            Group::Kernel => "kernel",
            Group::LogSobolev => "log-sobolev-group",
            Group::Semigroup => "semigroup",
            Group::Moments => "moments",
            Group::FourthMoment => "fourth-moment-group",
            Group::Remainder => "remainder",
            Group::Backward => "backward",
            Group::Fluctuation => "fluctuation",
            Group::Equilibrium => "equilibrium",
            Group::Hydrodynamics => "hydrodynamics-group",
            Group::Spectral => "spectral",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }

    /// Whether the group samples trajectories (and so needs at least 100 replicas).
    pub fn stochastic(self) -> bool {
        !matches!(
            self,
            Group::Remarkable | Group::Profiles | Group::Kernel | Group::LogSobolev | Group::Semigroup | Group::Backward
        )
    }

    fn defaults(self) -> Defaults {
        match self {
            Group::Identities => Defaults { ns: &[16], t_max: 0.1, ..BASE },
            Group::Remarkable => Defaults { ns: &[8, 32, 128], ..BASE },
            Group::Oracle => Defaults { ns: &[4], t_max: 0.1, replicas: 100_000, ..BASE },
            Group::Profiles => Defaults { t_max: 0.5, ..BASE },
            Group::Kernel => Defaults { t_max: 0.5, ..BASE },
            Group::LogSobolev => Defaults { ns: &[16, 32, 64, 128], ..BASE },
            Group::Semigroup => Defaults { ns: &[16, 64, 256], t_max: 1.0, ..BASE },
            Group::Moments => Defaults { ns: &[16, 32, 64, 128], t_max: 0.5, replicas: 200, ..BASE },
            Group::FourthMoment => Defaults { ns: &[16, 32, 64], replicas: 400, ..BASE },
            Group::Remainder => Defaults { replicas: 1000, ..BASE },
            Group::Backward => BASE,
            Group::Fluctuation => Defaults { ns: &[256], replicas: 10_000, ..BASE },
            Group::Equilibrium => {
                Defaults { ns: &[128], alpha: 0.5, beta: 0.5, profile: "constant:0.5", replicas: 10_000, ..BASE }
            }
            Group::Hydrodynamics => Defaults { replicas: 200, ..BASE },
            Group::Spectral => Defaults { ns: &[256], ..BASE },
        }
    }

    pub fn settings(self, cfg: &ExperimentConfig) -> Result<Settings> {
        let d = self.defaults();
        let s = Settings {
            ns: cfg.ns.clone().unwrap_or_else(|| d.ns.to_vec()),
            e_field: cfg.e_field.unwrap_or(d.e_field),
            alpha: cfg.alpha.unwrap_or(d.alpha),
            beta: cfg.beta.unwrap_or(d.beta),
            profile: cfg.profile.clone().unwrap_or_else(|| d.profile.to_string()),
            t_max: cfg.t_max.unwrap_or(d.t_max),
            obs_times: cfg.obs_times.clone(),
            replicas: cfg.replicas.unwrap_or(d.replicas),
            seed: cfg.seed,
            workers: cfg.workers,
        };
        if self.stochastic() && s.replicas < 100 {
            return Err(Error::InvalidConfiguration(format!(
                "`{}` is stochastic and needs at least 100 replicas, got {}",
                self.name(),
                s.replicas
            )));
        }
        if let Some(&last) = s.obs_times.as_ref().and_then(|v| v.last()) {
            if last > s.t_max {
                return Err(Error::InvalidConfiguration(format!("observation time {last} exceeds the horizon {}", s.t_max)));
            }
        }
        s.params(s.ns[0])?;
        s.profile()?;
        Ok(s)
    }

    pub fn claims(self) -> impl Iterator<Item = &'static ClaimSpec> {
        REGISTRY.iter().filter(move |c| c.group == self)
    }
}

/// One registered claim.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaimSpec {
    pub id: &'static str,
    pub group: Group,
    /// What is being checked.
    pub anchor: &'static str,
    /// Default tolerance; its meaning is stated in `anchor`.
    pub tolerance: f64,
}

macro_rules! claim {
    ($id:expr, $group:ident, $tol:expr, $anchor:expr) => {
        ClaimSpec { id: $id, group: Group::$group, anchor: $anchor, tolerance: $tol }
    };
}

pub const REGISTRY: &[ClaimSpec] = &[
    claim!("ordering", Identities, 1e-9, "xi(j+1) <= exp(-gamma/N) xi(j) at every event; tolerance is the largest allowed violation"),
    claim!("jump-identities", Identities, 1e-9, "occupations recovered from consecutive xi ratios and the current continuity law; largest residual"),
    claim!("inversion", Identities, 1e-9, "Cole-Hopf inversion reproduces the occupations; largest deviation, no rounding mismatch"),
    claim!("decomposition", Identities, 1e-9, "modified density field equals current field plus remainder for boundary-vanishing G; largest defect"),
    claim!("linear-evolution", Identities, 1e-9, "xi_t - xi_0 - int Omega xi equals the martingale part; largest residual"),
    claim!("remarkable-identity", Remarkable, 1e-9, "Omega* (grad g/phi) = grad g Omega phi/phi^2 + grad(A_phi g)/phi; largest relative residual over random pairs"),
    claim!("oracle", Oracle, 3.0, "state occupations and E[xi_t] against the matrix exponential; largest |z| allowed"),
    claim!("lambda-k", Profiles, 2.0, "N sup_t max_j |lambda_t(j) - K(t, j/N)| bounded in N; slack over the smallest-N fit"),
    claim!("profile-r", Profiles, 2.0, "N sup_t max_j |r_t(j) - rho(t, j/N)| bounded in N; slack over the smallest-N fit"),
    claim!("profile-r-tilde", Profiles, 2.0, "N sup_t max_j |r~_t(j) - rho(t, j/N)| bounded in N; slack over the smallest-N fit"),
    claim!("gradient-r-tilde", Profiles, 2.0, "sup_t max_j |grad r~_t(j)| bounded in N; slack over the smallest-N fit"),
    claim!("kernel-bound", Kernel, 0.25, "C(N) = max q_t(j,k) sqrt(N^2 t) over t in [10/N^2, T]; allowed relative spread across N"),
    claim!("row-sum", Kernel, 2.0, "max_k sum_j q_t(j,k) over t <= T bounded in N; slack over the smallest-N fit"),
    claim!("log-sobolev", LogSobolev, 2.0, "fitted entropy/Dirichlet constant bounded in N; slack over the smallest-N fit"),
    claim!("semigroup-monotone", Semigroup, 1e-10, "Omega_n preserves both monotone cones; largest relative violation"),
    claim!("semigroup-sup", Semigroup, 2.0, "||f_t||_M <= C e^{Ct} ||f_0||_M with C fitted at the smallest N; slack"),
    claim!("semigroup-l2", Semigroup, 2.0, "||f_t||^2 + int D_N <= e^{Ct} ||f_0||^2 with C fitted at the smallest N; slack"),
    claim!("semigroup-lower", Semigroup, 2.0, "min_{t <= T, j} f_t(j) from f_0 = 1 bounded below in N; slack under the smallest-N fit"),
    claim!("moment-bound", Moments, 2.0, "max_j E[sup_t xi_t(j)^n] bounded in N for n in 1,2,4,8; slack over the smallest-N fit"),
    claim!("fourth-moment", FourthMoment, 2.0, "N^2 max_{t,j} E[(xi_t(j) - lambda_t(j))^4] bounded in N; slack over the smallest-N fit"),
    claim!("remainder-decay", Remainder, 0.05, "P(sup_t |R_t(e_1)| <= tolerance) >= 0.95 at the largest N"),
    claim!("backward-consistency", Backward, 2.0, "N ||T_{t,0}G - g_0||_M bounded in N; slack over the smallest-N fit"),
    claim!("psi-consistency", Backward, 2.0, "N sup_s max_j |psi_s(j) - F_s(j/N)| bounded in N; slack over the smallest-N fit"),
    claim!("fluctuation-variance", Fluctuation, 0.05, "Var(Y_t(G) - Y_0(g_0)) against the covariance quadrature; relative tolerance or 3 SE"),
    claim!("fluctuation-shape", Fluctuation, 0.1, "|skewness| <= tolerance and |excess kurtosis| <= 2 tolerance (or 3 SE)"),
    claim!("fluctuation-decorrelation", Fluctuation, 3.0, "corr(Y_t(G) - Y_0(g_0), Y_0(e_2)) within tolerance standard errors of zero"),
    claim!("qv-limit", Fluctuation, 0.05, "mean quadratic variation of M(t, G) against the covariance quadrature; relative tolerance or 3 SE"),
    claim!("equilibrium-variance", Equilibrium, 0.05, "rho = 1/2: Var(Y_t(e_1) - Y_0(g_0)) against (1 - exp(-2 pi^2 t))/4; relative tolerance or 3 SE"),
    claim!("full-covariance", Equilibrium, 0.05, "rho = 1/2: Cov(Y_t(e_1), Y_s(e_1)) against initial plus dynamic covariance; relative tolerance or 3 SE"),
    claim!("hydrodynamics", Hydrodynamics, 1.0, "mean L1 distance of box-averaged density to rho(t) nonincreasing in N within tolerance SE"),
    claim!("spectral-truncation", Spectral, 1e-6, "H_{-4} norm with 64 vs 128 modes; largest difference"),
];

pub fn claim_spec(id: &str) -> Result<&'static ClaimSpec> {
    REGISTRY.iter().find(|c| c.id == id).ok_or_else(|| Error::UnknownClaim(id.to_string()))
}

/// Ensemble statistics of one observable against its target.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableReport {
    pub observable: String,
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub skew: f64,
    pub kurtosis: f64,
    pub ci: [f64; 2],
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ObservableReport {
    fn from_moments(observable: &str, n: usize, m: &Moments, target: f64, tolerance: f64, pass: bool) -> Self {
        let (lo, hi) = m.mean_ci();
        Self {
            observable: observable.to_string(),
            n,
            mean: m.mean,
            var: m.variance(),
            skew: m.skewness(),
            kurtosis: m.excess_kurtosis(),
            ci: [lo, hi],
            target,
            tolerance,
            pass,
        }
    }
}

/// Values recorded at one lattice size.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PerN {
    pub n: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClaimReport {
    pub id: String,
    pub anchor: String,
    pub constants: BTreeMap<String, f64>,
    pub per_n: Vec<PerN>,
    pub observables: Vec<ObservableReport>,
    pub tolerance: f64,
    pub pass: bool,
    pub notes: Vec<String>,
    /// Wall time of the group that produced the report; kept out of the JSON.
    #[serde(skip)]
    pub runtime: Duration,
}

impl ClaimReport {
    fn new(spec: &ClaimSpec, cfg: &ExperimentConfig) -> Self {
        Self {
            id: spec.id.to_string(),
            anchor: spec.anchor.to_string(),
            constants: BTreeMap::new(),
            per_n: Vec::new(),
            observables: Vec::new(),
            tolerance: cfg.tolerances.get(spec.id).copied().unwrap_or(spec.tolerance),
            pass: true,
            notes: Vec::new(),
            runtime: Duration::ZERO,
        }
    }

    fn constant(&mut self, key: &str, value: f64) {
        self.constants.insert(key.to_string(), value);
    }

    fn value(&mut self, n: usize, key: &str, value: f64) {
        let row = match self.per_n.iter().position(|r| r.n == n) {
            Some(i) => &mut self.per_n[i],
            None => {
                self.per_n.push(PerN { n, values: BTreeMap::new() });
                self.per_n.last_mut().expect("just pushed")
            }
        };
        row.values.insert(key.to_string(), value);
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Records a gating check; the report passes only if every check does.
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.pass = false;
            self.notes.push(format!("FAILED: {}", what.into()));
        }
    }

    /// One line summary used by the CLI and the acceptance suite.
    pub fn summary_line(&self) -> String {
        let mut s = format!("{} {}", if self.pass { "PASS" } else { "FAIL" }, self.id);
        for (k, v) in &self.constants {
            let _ = write!(s, " {k}={}", fmt_num(*v));
        }
        s
    }
}

/// Raw numbers behind a report, written as CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DataTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl DataTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt_num(v)).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip formatting, switching to exponent notation for extreme magnitudes.
pub fn fmt_num(v: f64) -> String {
    if v != 0.0 && v.is_finite() && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Reports and tables from one or more groups.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub reports: Vec<ClaimReport>,
    pub tables: Vec<DataTable>,
    pub runtimes: Vec<(Group, Duration)>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn report(&self, id: &str) -> Option<&ClaimReport> {
        self.reports.iter().find(|r| r.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.reports).map_err(|e| Error::Io(e.to_string()))
    }

    /// Flat `id, n, key, value` table of every per-N entry and fitted constant.
    pub fn summary_table(&self) -> DataTable {
        let mut t = DataTable::new("claims", &["id", "n", "key", "value"]);
        for r in &self.reports {
            for (k, v) in &r.constants {
                t.push(vec![r.id.clone(), String::new(), k.clone(), fmt_num(*v)]);
            }
            for row in &r.per_n {
                for (k, v) in &row.values {
                    t.push(vec![r.id.clone(), row.n.to_string(), k.clone(), fmt_num(*v)]);
                }
            }
        }
        t
    }
}

/// The output of a single group.
#[derive(Clone, Debug, Default)]
pub struct GroupOutput {
    pub reports: Vec<ClaimReport>,
    pub tables: Vec<DataTable>,
}

/// Runs one group with the overrides in `cfg`, returning the reports of all its claims.
pub fn run_group(group: Group, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let s = group.settings(cfg)?;
    let start = Instant::now();
    let mut out = match group {
        Group::Identities => identities::identities(&s, cfg),
        Group::Remarkable => identities::remarkable(&s, cfg),
        Group::Oracle => identities::oracle(&s, cfg),
        Group::Profiles => deterministic::profiles(&s, cfg),
        Group::Kernel => deterministic::kernel(&s, cfg),
        Group::LogSobolev => deterministic::log_sobolev(&s, cfg),
        Group::Semigroup => semigroup::semigroup(&s, cfg),
        Group::Moments => moments::moment_group(&s, cfg),
        Group::FourthMoment => moments::fourth_moment(&s, cfg),
        Group::Remainder => fluctuation::remainder(&s, cfg),
        Group::Backward => deterministic::backward(&s, cfg),
        Group::Fluctuation => fluctuation::fluctuation(&s, cfg),
        Group::Equilibrium => equilibrium::equilibrium(&s, cfg),
        Group::Hydrodynamics => fluctuation::hydrodynamics(&s, cfg),
        Group::Spectral => fluctuation::spectral(&s, cfg),
    }?;
    let runtime = start.elapsed();
    for r in &mut out.reports {
        r.runtime = runtime;
    }
    Ok(out)
}

/// Runs every selected claim; groups run sequentially, replicas in parallel.
pub fn run_claims(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut outcome = RunOutcome::default();
    for group in cfg.selected_groups()? {
        let out = run_group(group, cfg)?;
        outcome.runtimes.push((group, out.reports.first().map(|r| r.runtime).unwrap_or_default()));
        outcome.reports.extend(out.reports.into_iter().filter(|r| cfg.wants(&r.id, group)));
        outcome.tables.extend(out.tables);
    }
    Ok(outcome)
}

/// Runs the group of `id` and returns that claim's report.
pub fn run_claim(id: &str, cfg: &ExperimentConfig) -> Result<ClaimReport> {
    let spec = claim_spec(id)?;
    let out = run_group(spec.group, cfg)?;
    out.reports.into_iter().find(|r| r.id == id).ok_or_else(|| Error::UnknownClaim(id.to_string()))
}

/// Fit at the smallest N and check the others against `slack` times the fit.
fn bounded_above(report: &mut ClaimReport, key: &str, values: &[(usize, f64)]) -> f64 {
    let slack = report.tolerance;
    let Some(&(n0, fit)) = values.first() else { return f64::NAN };
    report.constant(&format!("{key}.fit"), fit);
    for &(n, v) in values {
        report.value(n, key, v);
        report.require(v.is_finite(), format!("{key} is not finite at N = {n}"));
        if n != n0 {
            report.value(n, &format!("{key}.ratio"), v / fit);
            report.require(v <= slack * fit, format!("{key} = {v} at N = {n} exceeds {slack} x {fit} (N = {n0})"));
        }
    }
    fit
}

/// Lower-bound counterpart of [`bounded_above`].
fn bounded_below(report: &mut ClaimReport, key: &str, values: &[(usize, f64)]) -> f64 {
    let slack = report.tolerance;
    let Some(&(n0, fit)) = values.first() else { return f64::NAN };
    report.constant(&format!("{key}.fit"), fit);
    for &(n, v) in values {
        report.value(n, key, v);
        if n != n0 {
            report.value(n, &format!("{key}.ratio"), v / fit);
            report.require(v >= fit / slack, format!("{key} = {v} at N = {n} is below {fit} / {slack} (N = {n0})"));
        }
    }
    fit
}

/// `max(relative tolerance, 3 standard errors)` in absolute units of `target`.
fn stochastic_band(target: f64, rel: f64, se: f64) -> f64 {
    (rel * target.abs()).max(3.0 * se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_ids_are_unique_and_grouped() {
        for (i, a) in REGISTRY.iter().enumerate() {
            assert!(REGISTRY[i + 1..].iter().all(|b| b.id != a.id), "duplicate {}", a.id);
            assert!(Group::from_name(a.id).is_none(), "claim id {} collides with a group name", a.id);
        }
        for g in Group::ALL {
            assert!(g.claims().count() > 0, "{g:?} has no claims");
        }
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = ExperimentConfig::default();
        c.set("n", "64,32").unwrap();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.set("alpha", "1.5").unwrap();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.set("claims", "no-such-claim").unwrap();
        assert!(matches!(c.validate(), Err(Error::UnknownClaim(_))));
        assert!(ExperimentConfig::default().set("bogus", "1").is_err());
        let mut c = ExperimentConfig::default();
        c.set("tolerances.oracle", "4").unwrap();
        c.set("only", "oracle, ordering").unwrap();
        c.validate().unwrap();
        assert_eq!(c.selected_groups().unwrap(), vec![Group::Identities, Group::Oracle]);
    }

    #[test]
    fn stochastic_groups_need_a_hundred_replicas() {
        let cfg = ExperimentConfig { replicas: Some(99), ..Default::default() };
        assert!(Group::Oracle.settings(&cfg).is_err());
        assert!(Group::Kernel.settings(&cfg).is_ok());
    }

    #[test]
    fn bounded_sweeps_use_the_smallest_n() {
        let spec = claim_spec("lambda-k").unwrap();
        let mut r = ClaimReport::new(spec, &ExperimentConfig::default());
        bounded_above(&mut r, "v", &[(16, 1.0), (32, 1.9)]);
        assert!(r.pass);
        bounded_above(&mut r, "w", &[(16, 1.0), (32, 2.1)]);
        assert!(!r.pass);
    }
}
