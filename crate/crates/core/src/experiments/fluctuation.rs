//! Ensembles of fluctuation fields: Gaussian limit checks, quadratic variation, remainder decay,
//! hydrodynamic convergence and spectral truncation.

use crate::error::Result;
use crate::fields::{
    covariance_quadrature, eval_density_field, spectral_coeffs, FieldReferences, FluctuationObserver, MartingalePlan,
    QuadratureOptions, TestFunction,
};
use crate::operators::EvolveOptions;
use crate::params::SystemParams;
use crate::pde::{profiles, solve_burgers, solve_lambda, uniform_times, BurgersSolution, LambdaPath, PdeOptions};
use crate::process::{sample_initial, simulate_trajectory, Configuration, Engine};
use crate::profile::DensityProfile;
use crate::rng::ReplicaStream;
use crate::stats::{CoMoments, Moments};

use super::{
    claim_spec, fmt_num, run_replicas, stochastic_band, ClaimReport, DataTable, ExperimentConfig, Group, GroupOutput,
    ObservableReport, Settings,
};

/// Slices of the piecewise-constant martingale weights on `[0, t]`.
pub const QV_SLICES: usize = 400;

/// Deterministic solutions shared by the replicas at one lattice size.
pub(super) struct Background {
    pub params: SystemParams<f64>,
    pub burgers: BurgersSolution<f64>,
    pub lambda: LambdaPath<f64>,
}

impl Background {
    pub fn new(profile: &DensityProfile<f64>, params: SystemParams<f64>, t: f64, extra: &[f64]) -> Result<Self> {
        let n = params.n();
        let mut times = uniform_times(t, 1000);
        times.extend(extra.iter().copied());
        times.sort_by(f64::total_cmp);
        times.dedup();
        let burgers = solve_burgers(profile, &params, &times, &PdeOptions::for_lattice(n))?;
        let lambda = solve_lambda(profile, &params, &times, &EvolveOptions::default())?;
        Ok(Self { params, burgers, lambda })
    }

    pub fn references(&self, obs: &[f64]) -> Result<FieldReferences<f64>> {
        let n = self.params.n();
        let mut refs = FieldReferences { rho: Vec::new(), r: Vec::new(), lambda: Vec::new() };
        for &t in obs {
            let lam = self.lambda.at(t);
            refs.rho.push(self.burgers.rho_on_lattice(t, n)?);
            refs.r.push(profiles(&lam, &self.params)?.0);
            refs.lambda.push(lam);
        }
        Ok(refs)
    }
}

/// Everything recorded from one replica of the fluctuation ensemble.
#[derive(Clone, Copy, Debug, Default)]
struct FluctRecord {
    y0: f64,
    y0_e2: f64,
    density: f64,
    modified: f64,
    current: f64,
    remainder: f64,
    martingale: f64,
    qv: f64,
}

impl FluctRecord {
    fn w(&self) -> f64 {
        self.density - self.y0
    }
}

fn fluct_ensemble(s: &Settings, n: usize, profile: &DensityProfile<f64>) -> Result<(Vec<FluctRecord>, f64)> {
    let t = s.t_max;
    let params = s.params(n)?;
    let bg = Background::new(profile, params, t, &[])?;
    let g = TestFunction::Eigen(1).sample(n);
    let e2 = TestFunction::Eigen(2).sample(n);
    let plan = MartingalePlan::new(&g, t, &bg.lambda, &params, &[t], QV_SLICES, &EvolveOptions::default())?;
    let refs = bg.references(&[t])?;
    let rho0 = bg.burgers.rho_on_lattice(0.0, n)?;
    let tests = vec![g];
    let e1 = TestFunction::Eigen(1);
    let q = covariance_quadrature(&e1, &e1, t, t, &bg.burgers, &params, &QuadratureOptions::default())?;
    let seed = s.seed_for(Group::Fluctuation, n);
    let records = run_replicas(s.replicas, s.workers, |rep| {
        let mut stream = ReplicaStream::new(seed, rep);
        let init = sample_initial(profile, &params, &mut stream)?;
        let y0 = eval_density_field(&init, &rho0, &plan.g0, &params)?;
        let y0_e2 = eval_density_field(&init, &rho0, &e2, &params)?;
        let mut obs = FluctuationObserver::new(&params, &tests, &refs, Some(&plan), rep);
        simulate_trajectory(&params, &init, t, &[t], Engine::Auto, &mut stream, &mut obs)?;
        let f = obs.sample.fields[0][0];
        Ok(FluctRecord {
            y0,
            y0_e2,
            density: f.density,
            modified: f.modified,
            current: f.current,
            remainder: f.remainder,
            martingale: obs.sample.martingale[0],
            qv: obs.sample.quadratic_variation[0],
        })
    })?;
    Ok((records, q))
}

pub(super) fn fluctuation(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let mut var = ClaimReport::new(claim_spec("fluctuation-variance")?, cfg);
    let mut shape = ClaimReport::new(claim_spec("fluctuation-shape")?, cfg);
    let mut dec = ClaimReport::new(claim_spec("fluctuation-decorrelation")?, cfg);
    let mut qvr = ClaimReport::new(claim_spec("qv-limit")?, cfg);
    let profile = s.profile()?;
    let t = s.t_max;
    let mut samples =
        DataTable::new("fluct_samples", &["n", "replica", "time", "field", "testfn", "value"]);
    for &n in &s.ns {
        let (records, q) = fluct_ensemble(s, n, &profile)?;
        let count = records.len() as f64;
        let mut w = Moments::default();
        let mut qv = Moments::default();
        let mut m2 = Moments::default();
        let mut co = CoMoments::default();
        for r in &records {
            w.push(r.w());
            qv.push(r.qv);
            m2.push(r.martingale * r.martingale);
            co.push(r.w(), r.y0_e2);
        }
        for (i, r) in records.iter().enumerate() {
            let rows: [(&str, f64, &str, f64); 9] = [
                ("initial", 0.0, "g0", r.y0),
                ("initial", 0.0, "e2", r.y0_e2),
                ("density", t, "e1", r.density),
                ("modified", t, "e1", r.modified),
                ("current", t, "e1", r.current),
                ("remainder", t, "e1", r.remainder),
                ("increment", t, "e1", r.w()),
                ("martingale", t, "e1", r.martingale),
                ("quadratic_variation", t, "e1", r.qv),
            ];
            for (field, time, testfn, value) in rows {
                samples.push(vec![
                    n.to_string(),
                    i.to_string(),
                    fmt_num(time),
                    field.to_string(),
                    testfn.to_string(),
                    fmt_num(value),
                ]);
            }
        }

        let v = w.variance();
        let band = stochastic_band(q, var.tolerance, w.variance_std_error());
        let ok = (v - q).abs() <= band;
        var.value(n, "variance", v);
        var.value(n, "quadrature", q);
        var.value(n, "relative_error", v / q - 1.0);
        var.value(n, "band", band);
        var.constant("quadrature", q);
        var.constant("variance", v);
        var.require(ok, format!("variance {v} vs quadrature {q} (band {band}) at N = {n}"));
        let mut ob = ObservableReport::from_moments("increment_variance", n, &w, q, band, ok);
        ob.mean = v;
        var.observables.push(ob);

        let (sk, ku) = (w.skewness(), w.excess_kurtosis());
        let sk_band = shape.tolerance.max(3.0 * (6.0 / count).sqrt());
        let ku_band = (2.0 * shape.tolerance).max(3.0 * (24.0 / count).sqrt());
        shape.value(n, "skewness", sk);
        shape.value(n, "excess_kurtosis", ku);
        shape.value(n, "skewness_band", sk_band);
        shape.value(n, "kurtosis_band", ku_band);
        shape.constant("skewness", sk);
        shape.constant("excess_kurtosis", ku);
        shape.require(sk.abs() <= sk_band, format!("|skewness| = {} at N = {n}", sk.abs()));
        shape.require(ku.abs() <= ku_band, format!("|excess kurtosis| = {} at N = {n}", ku.abs()));
        shape.observables.push(ObservableReport::from_moments(
            "increment",
            n,
            &w,
            0.0,
            sk_band,
            sk.abs() <= sk_band && ku.abs() <= ku_band,
        ));

        let c = co.correlation();
        let se = co.correlation_std_error();
        let ok = c.abs() <= dec.tolerance * se;
        dec.value(n, "correlation", c);
        dec.value(n, "std_error", se);
        dec.constant("correlation", c);
        dec.require(ok, format!("correlation {c} exceeds {} standard errors ({se}) at N = {n}", dec.tolerance));

        let band = stochastic_band(q, qvr.tolerance, qv.std_error());
        let ok = (qv.mean - q).abs() <= band;
        qvr.value(n, "mean_qv", qv.mean);
        qvr.value(n, "quadrature", q);
        qvr.value(n, "relative_error", qv.mean / q - 1.0);
        qvr.value(n, "mean_martingale_square", m2.mean);
        qvr.value(n, "mean_martingale_square_se", m2.std_error());
        qvr.constant("mean_qv", qv.mean);
        qvr.constant("quadrature", q);
        qvr.require(ok, format!("mean QV {} vs quadrature {q} (band {band}) at N = {n}", qv.mean));
        qvr.observables.push(ObservableReport::from_moments("quadratic_variation", n, &qv, q, band, ok));
    }
    qvr.note("mean_martingale_square estimates E[M_t^2], which equals E[QV] exactly for the discrete martingale");
    Ok(GroupOutput { reports: vec![var, shape, dec, qvr], tables: vec![samples] })
}

pub(super) fn remainder(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let mut rep = ClaimReport::new(claim_spec("remainder-decay")?, cfg);
    let profile = s.profile()?;
    let level = rep.tolerance;
    let mut obs = vec![0.0];
    obs.extend(s.obs_or_uniform(25));
    obs.dedup();
    let mut table = DataTable::new("remainder", &["n", "probability", "std_error", "mean_sup"]);
    let mut last = (0.0, 0.0);
    for &n in &s.ns {
        let params = s.params(n)?;
        let bg = Background::new(&profile, params, s.t_max, &obs)?;
        let refs = bg.references(&obs)?;
        let tests = vec![TestFunction::Eigen(1).sample(n)];
        let seed = s.seed_for(Group::Remainder, n);
        let sups = run_replicas(s.replicas, s.workers, |r| {
            let mut stream = ReplicaStream::new(seed, r);
            let init = sample_initial(&profile, &params, &mut stream)?;
            let mut ob = FluctuationObserver::new(&params, &tests, &refs, None, r);
            simulate_trajectory(&params, &init, s.t_max, &obs, Engine::Auto, &mut stream, &mut ob)?;
            Ok(ob.sample.fields.iter().map(|f| f[0].remainder.abs()).fold(0.0, f64::max))
        })?;
        let reps = sups.len() as f64;
        let p = sups.iter().filter(|&&x| x <= level).count() as f64 / reps;
        let se = (p * (1.0 - p) / reps).sqrt();
        let m = Moments::from_samples(&sups);
        rep.value(n, "probability", p);
        rep.value(n, "probability_se", se);
        rep.value(n, "mean_sup_remainder", m.mean);
        table.push_nums(&[n as f64, p, se, m.mean]);
        last = (p, se);
    }
    rep.constant("probability_at_largest_n", last.0);
    rep.require(last.0 >= 0.95, format!("P(sup |R| <= {level}) = {} < 0.95 at the largest N", last.0));
    Ok(GroupOutput { reports: vec![rep], tables: vec![table] })
}

/// Mean of `eta` over a window of `floor(sqrt N)` sites around each `j = 1..N-1`.
pub fn box_average(config: &Configuration) -> Vec<f64> {
    let n = config.n();
    let b = ((n as f64).sqrt().floor() as usize).max(1);
    let left = (b - 1) / 2;
    (1..n)
        .map(|j| {
            let lo = j.saturating_sub(left).max(1);
            let hi = (lo + b - 1).min(n - 1);
            let lo = (hi + 1).saturating_sub(b).max(1);
            (lo..=hi).map(|k| f64::from(config.get(k))).sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

pub(super) fn hydrodynamics(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let mut rep = ClaimReport::new(claim_spec("hydrodynamics")?, cfg);
    let profile = s.profile()?;
    let t = s.t_max;
    let mut dist = DataTable::new("hydro_l1", &["n", "mean_l1", "std_error"]);
    let mut prof = DataTable::new("hydro_profile", &["n", "x", "empirical", "rho"]);
    let mut points: Vec<(usize, f64, f64)> = Vec::new();
    for &n in &s.ns {
        let params = s.params(n)?;
        let burgers = solve_burgers(&profile, &params, &uniform_times(t, 200), &PdeOptions::for_lattice(n))?;
        let rho = burgers.rho_on_lattice(t, n)?;
        let seed = s.seed_for(Group::Hydrodynamics, n);
        let per = run_replicas(s.replicas, s.workers, |r| {
            let mut stream = ReplicaStream::new(seed, r);
            let init = sample_initial(&profile, &params, &mut stream)?;
            let sum = simulate_trajectory(&params, &init, t, &[], Engine::Auto, &mut stream, &mut ())?;
            let avg = box_average(&sum.final_config);
            let l1 = avg.iter().enumerate().map(|(i, a)| (a - rho[i + 1]).abs()).sum::<f64>() / (n - 1) as f64;
            Ok((l1, sum.final_config.sites().to_vec()))
        })?;
        let m = Moments::from_samples(&per.iter().map(|p| p.0).collect::<Vec<_>>());
        rep.value(n, "mean_l1", m.mean);
        rep.value(n, "std_error", m.std_error());
        dist.push_nums(&[n as f64, m.mean, m.std_error()]);
        for j in 1..n {
            let mean = per.iter().map(|p| f64::from(p.1[j - 1])).sum::<f64>() / per.len() as f64;
            prof.push_nums(&[n as f64, j as f64 / n as f64, mean, rho[j]]);
        }
        points.push((n, m.mean, m.std_error()));
    }
    let k = rep.tolerance;
    for w in points.windows(2) {
        let ((n0, d0, s0), (n1, d1, s1)) = (w[0], w[1]);
        let se = (s0 * s0 + s1 * s1).sqrt();
        rep.require(d1 <= d0 + k * se, format!("L1 distance rose from {d0} (N = {n0}) to {d1} (N = {n1})"));
    }
    if let (Some(a), Some(b)) = (points.first(), points.last()) {
        rep.constant("mean_l1_smallest_n", a.1);
        rep.constant("mean_l1_largest_n", b.1);
    }
    Ok(GroupOutput { reports: vec![rep], tables: vec![dist, prof] })
}

/// Modes kept in the reference and truncated spectral norms.
const MODES: (usize, usize) = (64, 128);
const SOBOLEV_ORDER: u32 = 4;

pub(super) fn spectral(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let mut rep = ClaimReport::new(claim_spec("spectral-truncation")?, cfg);
    let profile = s.profile()?;
    let t = s.t_max;
    for &n in &s.ns {
        let params = s.params(n)?;
        let burgers = solve_burgers(&profile, &params, &uniform_times(t, 200), &PdeOptions::for_lattice(n))?;
        let rho = burgers.rho_on_lattice(t, n)?;
        let seed = s.seed_for(Group::Spectral, n);
        let per = run_replicas(s.replicas, s.workers, |r| {
            let mut stream = ReplicaStream::new(seed, r);
            let init = sample_initial(&profile, &params, &mut stream)?;
            let sum = simulate_trajectory(&params, &init, t, &[], Engine::Auto, &mut stream, &mut ())?;
            let c = spectral_coeffs(&sum.final_config, &rho, &params, MODES.1, SOBOLEV_ORDER)?;
            let diff = (c.norm() - c.truncated(MODES.0).norm()).abs();
            let norms: Vec<f64> = (0..=SOBOLEV_ORDER).map(|k| c.with_order(k).norm_sq()).collect();
            let monotone = norms.windows(2).all(|w| w[1] <= w[0]);
            Ok((diff, monotone, c.norm()))
        })?;
        let worst = per.iter().map(|p| p.0).fold(0.0, f64::max);
        let broken = per.iter().filter(|p| !p.1).count();
        let mean_norm = per.iter().map(|p| p.2).sum::<f64>() / per.len() as f64;
        rep.value(n, "max_truncation_difference", worst);
        rep.value(n, "mean_norm", mean_norm);
        rep.value(n, "non_monotone_replicas", broken as f64);
        rep.constant("max_truncation_difference", worst);
        let tol = rep.tolerance;
        rep.require(worst < tol, format!("truncation difference {worst:e} at N = {n}"));
        rep.require(broken == 0, format!("{broken} replicas with norms increasing in the order at N = {n}"));
    }
    Ok(GroupOutput { reports: vec![rep], tables: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_average_windows_have_full_width() {
        let n = 16;
        assert!(box_average(&Configuration::full(n)).iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let mut alt = Configuration::empty(n);
        for j in (1..n).step_by(2) {
            alt.set(j, 1);
        }
        let avg = box_average(&alt);
        assert_eq!(avg.len(), n - 1);
        assert!(avg.iter().all(|&v| (v - 0.5).abs() <= 0.25 + 1e-12));
    }
}
