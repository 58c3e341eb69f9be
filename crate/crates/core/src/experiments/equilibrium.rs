//! Fluctuations started from the flat product measure with equal reservoirs.

use crate::error::Result;
use crate::fields::{
    covariance_quadrature, equilibrium_variance, eval_density_field, initial_covariance, FluctuationObserver,
    MartingalePlan, QuadratureOptions, TestFunction,
};
use crate::operators::EvolveOptions;
use crate::pde::{solve_burgers, uniform_times, PdeOptions};
use crate::process::{sample_initial, simulate_trajectory, Engine};
use crate::rng::ReplicaStream;
use crate::stats::{CoMoments, Moments};

use super::fluctuation::{Background, QV_SLICES};
use super::{
    claim_spec, fmt_num, run_replicas, stochastic_band, ClaimReport, DataTable, ExperimentConfig, Group, GroupOutput,
    ObservableReport, Settings,
};

/// Earlier observation time of the two-time covariance.
const S_EARLY: f64 = 0.1;
/// Agreement required between the quadrature at two grid resolutions before it is used as a target.
const GRID_AGREEMENT: f64 = 1e-4;

pub(super) fn equilibrium(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let mut var = ClaimReport::new(claim_spec("equilibrium-variance")?, cfg);
    let mut cov = ClaimReport::new(claim_spec("full-covariance")?, cfg);
    let profile = s.profile()?;
    let t = s.t_max;
    let early = S_EARLY.min(0.5 * t);
    let obs = [early, t];
    let e1 = TestFunction::<f64>::Eigen(1);
    let mut table = DataTable::new("equilibrium", &["n", "quantity", "sample", "target", "std_error"]);
    for &n in &s.ns {
        let params = s.params(n)?;
        let bg = Background::new(&profile, params, t, &obs)?;
        let times = uniform_times(t, 1000);
        let qopt = QuadratureOptions::default();
        let fine = solve_burgers(&profile, &params, &times, &PdeOptions::with_cells(8 * n))?;
        let q4 = covariance_quadrature(&e1, &e1, t, t, &bg.burgers, &params, &qopt)?;
        let q8 = covariance_quadrature(&e1, &e1, t, t, &fine, &params, &qopt)?;
        let analytic = equilibrium_variance(t);
        var.value(n, "quadrature_4n", q4);
        var.value(n, "quadrature_8n", q8);
        var.value(n, "analytic", analytic);
        let grid_ok = (q4 - q8).abs() <= GRID_AGREEMENT;
        var.require(grid_ok, format!("quadrature moved by {:e} between grids at N = {n}", (q4 - q8).abs()));
        var.value(n, "quadrature_vs_analytic", q8 - analytic);

        let g = e1.sample(n);
        let plan = MartingalePlan::new(&g, t, &bg.lambda, &params, &obs, QV_SLICES, &EvolveOptions::default())?;
        let refs = bg.references(&obs)?;
        let rho0 = bg.burgers.rho_on_lattice(0.0, n)?;
        let tests = vec![g.clone()];
        let seed = s.seed_for(Group::Equilibrium, n);
        let per = run_replicas(s.replicas, s.workers, |r| {
            let mut stream = ReplicaStream::new(seed, r);
            let init = sample_initial(&profile, &params, &mut stream)?;
            let y0g0 = eval_density_field(&init, &rho0, &plan.g0, &params)?;
            let y0 = eval_density_field(&init, &rho0, &g, &params)?;
            let mut ob = FluctuationObserver::new(&params, &tests, &refs, Some(&plan), r);
            simulate_trajectory(&params, &init, t, &obs, Engine::Auto, &mut stream, &mut ob)?;
            Ok((y0, y0g0, ob.sample.fields[0][0].density, ob.sample.fields[1][0].density))
        })?;

        // Increment variance against the closed form.
        let mut w = Moments::default();
        let mut y0m = Moments::default();
        let mut c = CoMoments::default();
        for &(y0, y0g0, ys, yt) in &per {
            w.push(yt - y0g0);
            y0m.push(y0);
            c.push(yt, ys);
        }
        let band = stochastic_band(analytic, var.tolerance, w.variance_std_error());
        let ok = (w.variance() - analytic).abs() <= band;
        var.value(n, "variance", w.variance());
        var.value(n, "band", band);
        var.constant("variance", w.variance());
        var.constant("analytic", analytic);
        var.require(ok, format!("variance {} vs {analytic} (band {band}) at N = {n}", w.variance()));
        var.observables.push(ObservableReport::from_moments("increment", n, &w, analytic, band, ok));
        table.push(row(n, "increment_variance", w.variance(), analytic, w.variance_std_error()));

        // The initial field alone: Var Y_0(e1) = (1/N) sum e1(j/N)^2 / 4.
        let init_target = (1..n).map(|j| g.get(j).unwrap_or(0.0).powi(2)).sum::<f64>() / (4.0 * n as f64);
        let ise = y0m.variance_std_error();
        let iok = (y0m.variance() - init_target).abs() <= 3.0 * ise;
        var.value(n, "initial_variance", y0m.variance());
        var.value(n, "initial_target", init_target);
        var.require(iok, format!("initial variance {} vs {init_target} at N = {n}", y0m.variance()));
        table.push(row(n, "initial_variance", y0m.variance(), init_target, ise));

        // Two-time covariance through the quadrature, checked against the closed form.
        let target = initial_covariance(&e1, &e1, t, early, &fine, &params, None)?
            + covariance_quadrature(&e1, &e1, t, early, &fine, &params, &qopt)?;
        let closed = (-std::f64::consts::PI.powi(2) * (t - early)).exp() / 4.0;
        let (mt, ms) = (c.mean_x, c.mean_y);
        let prods: Vec<f64> = per.iter().map(|&(_, _, ys, yt)| (yt - mt) * (ys - ms)).collect();
        let se = Moments::from_samples(&prods).std_error();
        let sample = c.covariance();
        let band = stochastic_band(target, cov.tolerance, se);
        let ok = (sample - target).abs() <= band;
        cov.value(n, "sample", sample);
        cov.value(n, "target", target);
        cov.value(n, "closed_form", closed);
        cov.value(n, "band", band);
        cov.constant("s", early);
        cov.constant("target", target);
        cov.constant("sample", sample);
        cov.require(ok, format!("covariance {sample} vs {target} (band {band}) at N = {n}"));
        cov.require(
            (target - closed).abs() <= GRID_AGREEMENT * 10.0,
            format!("quadrature covariance {target} departs from {closed} at N = {n}"),
        );
        table.push(row(n, "two_time_covariance", sample, target, se));
    }
    Ok(GroupOutput { reports: vec![var, cov], tables: vec![table] })
}

fn row(n: usize, what: &str, sample: f64, target: f64, se: f64) -> Vec<String> {
    vec![n.to_string(), what.to_string(), fmt_num(sample), fmt_num(target), fmt_num(se)]
}
