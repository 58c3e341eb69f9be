//! Exact trajectory identities, the remarkable operator identity and the small-N oracle.

use crate::cole_hopf::{ColeHopfState, IdentityMonitor, MartingaleAccumulator};
use crate::error::Result;
use crate::fields::{eval_current_field, eval_density_field, eval_remainder, TestFunction};
use crate::linalg::DenseMatrix;
use crate::operators::{operator_matrix, remarkable_identity_residual, EvolveOptions, LatticeField, OperatorSpec};
use crate::params::SystemParams;
use crate::pde::{profiles, solve_lambda, uniform_times, LambdaPath};
use crate::process::{
    exact_distribution, product_distribution, sample_initial, simulate_trajectory, Engine, EventRecord, Observer,
    ProcessView,
};
use crate::profile::DensityProfile;
use crate::rng::ReplicaStream;

use super::{
    claim_spec, fmt_num, run_replicas, ClaimReport, DataTable, ExperimentConfig, Group, GroupOutput, ObservableReport,
    Settings,
};
use crate::stats::Moments;

/// Largest `|Y~ - J - R|` over the events of a trajectory, with `lambda_t` from the deterministic path.
struct DecompositionMonitor<'a> {
    params: SystemParams<f64>,
    lambda: &'a LambdaPath<f64>,
    tests: &'a [LatticeField<f64>],
    worst: f64,
}

impl DecompositionMonitor<'_> {
    fn check(&mut self, view: &ProcessView<'_, f64>) -> Result<()> {
        let xi = ColeHopfState::from_view(view).xi;
        let lam = self.lambda.at(view.time);
        let (r, _) = profiles(&lam, &self.params)?;
        for g in self.tests {
            let y = eval_density_field(view.config, &r, g, &self.params)?;
            let j = eval_current_field(&xi, &lam, g, &self.params)?;
            let rem = eval_remainder(&xi, &lam, g, &self.params)?;
            self.worst = self.worst.max((y - j - rem).abs());
        }
        Ok(())
    }
}

impl Observer<f64> for DecompositionMonitor<'_> {
    fn on_start(&mut self, view: &ProcessView<'_, f64>) -> Result<()> {
        self.check(view)
    }

    fn on_event(&mut self, _event: &EventRecord<f64>, view: &ProcessView<'_, f64>) -> Result<()> {
        self.check(view)
    }
}

#[derive(Clone, Debug, Default)]
struct ReplicaDefects {
    ordering: f64,
    jump: f64,
    inversion: f64,
    mismatches: u64,
    continuity: i64,
    linear: f64,
    decomposition: f64,
    checks: u64,
}

pub(super) fn identities(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let ids = ["ordering", "jump-identities", "inversion", "decomposition", "linear-evolution"];
    let mut reports: Vec<ClaimReport> = ids.iter().map(|id| ClaimReport::new(claim_spec(id).unwrap(), cfg)).collect();
    let profile = s.profile()?;
    let obs = s.obs_or_uniform(10);
    for &n in &s.ns {
        let params = s.params(n)?;
        let lambda = solve_lambda(&profile, &params, &uniform_times(s.t_max, 200), &EvolveOptions::default())?;
        let tests = vec![TestFunction::Eigen(1).sample(n), TestFunction::Eigen(2).sample(n)];
        let seed = s.seed_for(Group::Identities, n);
        let per = run_replicas(s.replicas, s.workers, |rep| {
            let mut stream = ReplicaStream::new(seed, rep);
            let init = sample_initial(&profile, &params, &mut stream)?;
            let mut ids = IdentityMonitor::default();
            let mut mart = MartingaleAccumulator::new(&params)?;
            let mut dec = DecompositionMonitor { params, lambda: &lambda, tests: &tests, worst: 0.0 };
            let mut all = (&mut ids, &mut mart, &mut dec);
            simulate_trajectory(&params, &init, s.t_max, &obs, Engine::Auto, &mut stream, &mut all)?;
            let r = &ids.report;
            Ok(ReplicaDefects {
                ordering: r.ordering,
                jump: r.jump,
                inversion: r.inversion,
                mismatches: r.inversion_mismatches,
                continuity: r.continuity_defect,
                linear: mart.snapshots.iter().map(|s| s.linear_residual).fold(0.0, f64::max),
                decomposition: dec.worst,
                checks: r.checks,
            })
        })?;
        let max = |f: fn(&ReplicaDefects) -> f64| per.iter().map(f).fold(0.0, f64::max);
        let checks: u64 = per.iter().map(|d| d.checks).sum();
        let mismatches: u64 = per.iter().map(|d| d.mismatches).sum();
        let continuity = per.iter().map(|d| d.continuity).max().unwrap_or(0);
        let values = [
            max(|d| d.ordering),
            max(|d| d.jump),
            max(|d| d.inversion),
            max(|d| d.decomposition),
            max(|d| d.linear),
        ];
        for (rep, v) in reports.iter_mut().zip(values) {
            rep.value(n, "max_defect", v);
            rep.value(n, "event_checks", checks as f64);
            rep.value(n, "replicas", s.replicas as f64);
            let tol = rep.tolerance;
            rep.require(v <= tol, format!("defect {v:e} at N = {n} exceeds {tol:e}"));
        }
        reports[1].value(n, "continuity_defect", continuity as f64);
        reports[1].require(continuity == 0, format!("current continuity violated by {continuity} at N = {n}"));
        reports[2].value(n, "rounding_mismatches", mismatches as f64);
        reports[2].require(mismatches == 0, format!("{mismatches} rounded inversions disagree at N = {n}"));
    }
    for r in &mut reports {
        let worst = r.per_n.iter().map(|p| p.values["max_defect"]).fold(0.0, f64::max);
        r.constant("max_defect", worst);
    }
    Ok(GroupOutput { reports, tables: Vec::new() })
}

/// Random `g` on `{0..N}` and positive `phi` on `{0..N-1}`.
fn random_pair(n: usize, stream: &mut ReplicaStream) -> Result<(LatticeField<f64>, LatticeField<f64>)> {
    let g = (0..=n).map(|_| stream.normal::<f64>()).collect::<Result<Vec<_>>>()?;
    let phi = (0..n).map(|_| stream.normal::<f64>().map(|z| (0.5 * z).exp())).collect::<Result<Vec<_>>>()?;
    Ok((LatticeField::closed(n, g)?, LatticeField::bulk(n, phi)?))
}

pub(super) fn remarkable(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let mut rep = ClaimReport::new(claim_spec("remarkable-identity")?, cfg);
    let mut worst_all: f64 = 0.0;
    for &n in &s.ns {
        let params = s.params(n)?;
        let seed = s.seed_for(Group::Remarkable, n);
        let res = run_replicas(s.replicas, s.workers, |trial| {
            let mut stream = ReplicaStream::new(seed, trial);
            let (g, phi) = random_pair(n, &mut stream)?;
            Ok(remarkable_identity_residual(&g, &phi, &params)?.relative())
        })?;
        let worst = res.iter().copied().fold(0.0, f64::max);
        worst_all = worst_all.max(worst);
        rep.value(n, "max_relative_residual", worst);
        rep.value(n, "pairs", s.replicas as f64);
        let tol = rep.tolerance;
        rep.require(worst <= tol, format!("residual {worst:e} at N = {n} exceeds {tol:e}"));
    }
    rep.constant("max_relative_residual", worst_all);
    Ok(GroupOutput { reports: vec![rep], tables: Vec::new() })
}

/// `E[xi_0(j)] = prod_{k=1}^{j} (1 + rho_0(k/N) E/N)` under the product initial law.
pub fn initial_xi_mean(profile: &DensityProfile<f64>, params: &SystemParams<f64>) -> Vec<f64> {
    let n = params.n();
    let c = (-params.step_exponent()).exp() - 1.0;
    let mut acc = 1.0;
    let mut out = vec![1.0];
    for j in 1..n {
        acc *= 1.0 + c * profile.eval(j as f64 / n as f64);
        out.push(acc);
    }
    out
}

/// `e^{t Omega} E[xi_0]`, the exact mean of `xi_t`.
pub fn oracle_xi_mean(profile: &DensityProfile<f64>, params: &SystemParams<f64>, t: f64) -> Result<Vec<f64>> {
    let omega = operator_matrix(&OperatorSpec::Omega, params)?.to_dense();
    let prop: DenseMatrix<f64> = omega.scaled(t).expm()?;
    Ok(prop.mul_vec(&initial_xi_mean(profile, params)))
}

pub(super) fn oracle(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let mut rep = ClaimReport::new(claim_spec("oracle")?, cfg);
    let profile = s.profile()?;
    let t = s.t_max;
    let mut states_table = DataTable::new("oracle_states", &["n", "state", "probability", "count", "z"]);
    let mut xi_table = DataTable::new("oracle_xi", &["n", "site", "mean", "std_error", "lambda", "z"]);
    let zmax = rep.tolerance;
    for &n in &s.ns {
        let params = s.params(n)?;
        let p0 = product_distribution(&profile, &params)?;
        let pt = exact_distribution(&params, &p0, t)?;
        let lam = oracle_xi_mean(&profile, &params, t)?;
        let seed = s.seed_for(Group::Oracle, n);
        let samples = run_replicas(s.replicas, s.workers, |r| {
            let mut stream = ReplicaStream::new(seed, r);
            let init = sample_initial(&profile, &params, &mut stream)?;
            let sum = simulate_trajectory(&params, &init, t, &[], Engine::Auto, &mut stream, &mut ())?;
            let sums = crate::process::initial_sums(&init);
            let xi = crate::cole_hopf::xi_from_state(&sum.ledger, &sums, &params).xi;
            Ok((sum.final_config.state_index(), xi))
        })?;
        let reps = samples.len() as f64;
        let mut counts = vec![0u64; pt.len()];
        let mut moments = vec![Moments::default(); n];
        for (state, xi) in &samples {
            counts[*state] += 1;
            for (m, &x) in moments.iter_mut().zip(xi) {
                m.push(x);
            }
        }
        let mut worst_state: f64 = 0.0;
        for (state, (&p, &c)) in pt.iter().zip(&counts).enumerate() {
            let sd = (reps * p * (1.0 - p)).sqrt();
            let z = if sd > 0.0 {
                (c as f64 - reps * p) / sd
            } else if c == 0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst_state = worst_state.max(z.abs());
            states_table.push(vec![n.to_string(), state.to_string(), fmt_num(p), c.to_string(), fmt_num(z)]);
        }
        let mut worst_xi: f64 = 0.0;
        for (j, (m, &target)) in moments.iter().zip(&lam).enumerate() {
            let se = m.std_error();
            let z = if se > 0.0 { (m.mean - target) / se } else { (m.mean - target).abs() * f64::INFINITY };
            let z = if z.is_nan() { 0.0 } else { z };
            worst_xi = worst_xi.max(z.abs());
            xi_table.push_nums(&[n as f64, j as f64, m.mean, se, target, z]);
            let obs_name = format!("xi_mean[{j}]");
            rep.observables.push(ObservableReport::from_moments(&obs_name, n, m, target, zmax * se, z.abs() <= zmax));
        }
        rep.value(n, "max_state_z", worst_state);
        rep.value(n, "max_xi_z", worst_xi);
        rep.value(n, "states", pt.len() as f64);
        rep.value(n, "replicas", reps);
        rep.require(worst_state <= zmax, format!("state occupation |z| = {worst_state} at N = {n}"));
        rep.require(worst_xi <= zmax, format!("xi mean |z| = {worst_xi} at N = {n}"));
        rep.constant("max_state_z", worst_state);
        rep.constant("max_xi_z", worst_xi);
    }
    rep.note("E[xi_t] is compared with exp(t Omega) applied to the exact initial mean of xi_0");
    Ok(GroupOutput { reports: vec![rep], tables: vec![states_table, xi_table] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_mean_matches_enumeration() {
        let params = SystemParams::new(4, 1.0, 0.3, 0.7).unwrap();
        let prof = DensityProfile::linear(0.3, 0.7).unwrap();
        let p0 = product_distribution(&prof, &params).unwrap();
        let mut want = vec![0.0; 4];
        for (state, &p) in p0.iter().enumerate() {
            let c = crate::process::Configuration::from_state_index(4, state);
            let sums = crate::process::initial_sums(&c);
            let ledger = crate::process::CurrentLedger::new(4);
            let xi = crate::cole_hopf::xi_from_state(&ledger, &sums, &params).xi;
            for j in 0..4 {
                want[j] += p * xi[j];
            }
        }
        let got = initial_xi_mean(&prof, &params);
        for j in 0..4 {
            assert!((got[j] - want[j]).abs() < 1e-14, "{j}: {} {}", got[j], want[j]);
        }
    }

    #[test]
    fn remarkable_identity_holds_for_random_pairs() {
        let params = SystemParams::new(16, 1.5, 0.2, 0.9).unwrap();
        for t in 0..20 {
            let mut s = ReplicaStream::new(3, t);
            let (g, phi) = random_pair(16, &mut s).unwrap();
            let r = remarkable_identity_residual(&g, &phi, &params).unwrap().relative();
            assert!(r < 1e-12, "{r}");
        }
    }
}
