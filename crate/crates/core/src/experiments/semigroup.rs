//! Properties of the semigroups `exp(t Omega_n)`: monotone cones, sup-norm growth, the
//! `L^2(m_N)` energy inequality and the lower bound, fitted at the smallest N.

use crate::error::Result;
use crate::operators::{HeatKernel, WeightedSpace};
use crate::params::SystemParams;
use crate::rng::ReplicaStream;

use super::{bounded_below, claim_spec, ClaimReport, DataTable, ExperimentConfig, Group, GroupOutput, Settings};

const ORDERS: [u32; 3] = [1, 2, 4];
const RANDOM_FAMILIES: usize = 5;

/// `(e^{mu t} - 1) / mu`, continuous at `mu = 0`.
fn phi1(mu: f64, t: f64) -> f64 {
    let x = mu * t;
    if x.abs() < 1e-8 {
        t * (1.0 + 0.5 * x)
    } else {
        x.exp_m1() / mu
    }
}

/// Exact spectral evolution of `Omega_n` together with the Dirichlet-form Gram matrix.
struct Spectral {
    n: usize,
    eig: Vec<f64>,
    /// Column `a` is eigenvector `a` of the symmetrized operator.
    z: Vec<Vec<f64>>,
    scale: Vec<f64>,
    /// `B[a][b] = D_N`-bilinear form between eigenmodes `a` and `b`.
    gram: Vec<Vec<f64>>,
}

impl Spectral {
    fn new(order: u32, params: &SystemParams<f64>, space: &WeightedSpace<f64>) -> Result<Self> {
        let n = params.n();
        let hk = HeatKernel::new(order, params)?;
        let p = hk.propagator();
        let v = p.vectors();
        let z: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|k| v[(k, a)]).collect()).collect();
        let scale = p.scale().to_vec();
        let m = space.weights();
        let nf = n as f64;
        // w[a][k] = N sqrt(m_k) (f_a(k+1) - f_a(k)) for the mode a mapped back to f = y / d.
        let w: Vec<Vec<f64>> = z
            .iter()
            .map(|za| (0..n - 1).map(|k| nf * m[k].sqrt() * (za[k + 1] / scale[k + 1] - za[k] / scale[k])).collect())
            .collect();
        let mut gram = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in a..n {
                let v: f64 = w[a].iter().zip(&w[b]).map(|(x, y)| x * y).sum();
                gram[a][b] = v;
                gram[b][a] = v;
            }
        }
        Ok(Self { n, eig: p.eigenvalues().to_vec(), z, scale, gram })
    }

    fn coefficients(&self, f0: &[f64]) -> Vec<f64> {
        self.z.iter().map(|za| (0..self.n).map(|k| za[k] * self.scale[k] * f0[k]).sum()).collect()
    }

    fn evolve(&self, c: &[f64], t: f64) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (a, za) in self.z.iter().enumerate() {
            let ca = c[a] * (self.eig[a] * t).exp();
            y.iter_mut().zip(za).for_each(|(yk, &zk)| *yk += ca * zk);
        }
        y.iter().zip(&self.scale).map(|(v, d)| v / d).collect()
    }

    /// `int_0^t D_N(f_s) ds`, exactly in the eigenbasis.
    fn dirichlet_integral(&self, c: &[f64], t: f64) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.n {
            for b in 0..self.n {
                acc += c[a] * c[b] * self.gram[a][b] * phi1(self.eig[a] + self.eig[b], t);
            }
        }
        acc
    }

    fn top_mode(&self) -> Vec<f64> {
        let a = (0..self.n).max_by(|&x, &y| self.eig[x].total_cmp(&self.eig[y])).expect("non-empty");
        self.z[a].iter().zip(&self.scale).map(|(v, d)| v / d).collect()
    }
}

fn time_grid(t_max: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..=100).map(|i| t_max * i as f64 / 100.0).collect();
    let (a, b) = ((1e-5 * t_max).ln(), t_max.ln());
    ts.extend((0..60).map(|i| (a + (b - a) * i as f64 / 59.0).exp()));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Initial conditions for the growth fits: constant, top mode, deltas and random draws.
fn growth_families(sp: &Spectral, stream: &mut ReplicaStream) -> Result<Vec<Vec<f64>>> {
    let n = sp.n;
    let mut out = vec![vec![1.0; n], sp.top_mode()];
    let mut left = vec![0.0; n];
    left[0] = 1.0;
    let mut right = vec![0.0; n];
    right[n - 1] = 1.0;
    out.push(left);
    out.push(right);
    for _ in 0..RANDOM_FAMILIES {
        out.push((0..n).map(|_| stream.uniform::<f64>().map(|u| 0.1 + u)).collect::<Result<_>>()?);
        out.push((0..n).map(|_| stream.normal::<f64>()).collect::<Result<_>>()?);
    }
    Ok(out)
}

/// Nondecreasing non-negative starts and starts with `f(j+1) <= e^{-gamma n/N} f(j)`.
fn cone_families(params: &SystemParams<f64>, order: u32, stream: &mut ReplicaStream) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = params.n();
    let ratio = (-params.step_exponent() * f64::from(order)).exp();
    let mut up = vec![vec![1.0; n]];
    let mut down = vec![vec![1.0; n]];
    for _ in 0..RANDOM_FAMILIES {
        let mut acc = 0.0;
        let mut f = Vec::with_capacity(n);
        for _ in 0..n {
            acc += stream.uniform::<f64>()?;
            f.push(acc);
        }
        up.push(f);
        let mut g = vec![1.0];
        for j in 1..n {
            let u: f64 = stream.uniform()?;
            g.push(g[j - 1] * ratio * u);
        }
        down.push(g);
    }
    Ok((up, down))
}

/// Smallest `C` with `rho(t) <= C e^{C t}` for every grid time.
fn fit_sup_constant(ts: &[f64], rho: &[f64]) -> f64 {
    let ok = |c: f64| ts.iter().zip(rho).all(|(&t, &r)| r <= c * (c * t).exp());
    let (mut lo, mut hi) = (0.0, 1.0);
    while !ok(hi) {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

struct OrderData {
    /// Worst `||f_t||_M / ||f_0||_M` over the growth families at each grid time.
    sup_ratio: Vec<f64>,
    /// Worst `(||f_t||^2 + int D) / ||f_0||^2`.
    l2_ratio: Vec<f64>,
    lower: f64,
    cone_up: f64,
    cone_down: f64,
}

fn order_data(params: &SystemParams<f64>, order: u32, ts: &[f64], seed: u64) -> Result<OrderData> {
    let n = params.n();
    let space = WeightedSpace::new(params);
    let sp = Spectral::new(order, params, &space)?;
    let mut stream = ReplicaStream::new(seed, u64::from(order));
    let growth = growth_families(&sp, &mut stream)?;
    let mut sup_ratio = vec![0.0f64; ts.len()];
    let mut l2_ratio = vec![0.0f64; ts.len()];
    let mut lower = f64::INFINITY;
    for (fi, f0) in growth.iter().enumerate() {
        let c = sp.coefficients(f0);
        let (s0, e0) = (sup(f0), space.norm_sq(f0));
        for (i, &t) in ts.iter().enumerate() {
            let ft = sp.evolve(&c, t);
            sup_ratio[i] = sup_ratio[i].max(sup(&ft) / s0);
            let energy = space.norm_sq(&ft) + sp.dirichlet_integral(&c, t);
            l2_ratio[i] = l2_ratio[i].max(energy / e0);
            if fi == 0 {
                lower = lower.min(ft.iter().copied().fold(f64::INFINITY, f64::min));
            }
        }
    }
    let ratio = (-params.step_exponent() * f64::from(order)).exp();
    let (up, down) = cone_families(params, order, &mut stream)?;
    let mut cone_up: f64 = 0.0;
    for f0 in &up {
        let c = sp.coefficients(f0);
        for &t in ts {
            let ft = sp.evolve(&c, t);
            let v = (0..n - 1).map(|j| ft[j] - ft[j + 1]).fold(0.0, f64::max);
            cone_up = cone_up.max(v / sup(&ft));
        }
    }
    let mut cone_down: f64 = 0.0;
    for f0 in &down {
        let c = sp.coefficients(f0);
        for &t in ts {
            let ft = sp.evolve(&c, t);
            let v = (0..n - 1).map(|j| ft[j + 1] - ratio * ft[j]).fold(0.0, f64::max);
            cone_down = cone_down.max(v / sup(&ft));
        }
    }
    Ok(OrderData { sup_ratio, l2_ratio, lower, cone_up, cone_down })
}

pub(super) fn semigroup(s: &Settings, cfg: &ExperimentConfig) -> Result<GroupOutput> {
    let mut mono = ClaimReport::new(claim_spec("semigroup-monotone")?, cfg);
    let mut supr = ClaimReport::new(claim_spec("semigroup-sup")?, cfg);
    let mut l2 = ClaimReport::new(claim_spec("semigroup-l2")?, cfg);
    let mut low = ClaimReport::new(claim_spec("semigroup-lower")?, cfg);
    let ts = time_grid(s.t_max);
    let mut table = DataTable::new("semigroup", &["n", "order", "t", "sup_ratio", "l2_ratio"]);
    for order in ORDERS {
        let data = s
            .ns
            .iter()
            .map(|&n| order_data(&s.params(n)?, order, &ts, s.seed_for(Group::Semigroup, n)))
            .collect::<Result<Vec<_>>>()?;
        for (&n, d) in s.ns.iter().zip(&data) {
            for (i, &t) in ts.iter().enumerate() {
                table.push_nums(&[n as f64, f64::from(order), t, d.sup_ratio[i], d.l2_ratio[i]]);
            }
            let worst = d.cone_up.max(d.cone_down);
            mono.value(n, &format!("order{order}.nondecreasing_violation"), d.cone_up);
            mono.value(n, &format!("order{order}.geometric_violation"), d.cone_down);
            let tol = mono.tolerance;
            mono.require(worst <= tol, format!("cone violation {worst:e} for order {order} at N = {n}"));
        }
        let (n0, d0) = (s.ns[0], &data[0]);
        let c_sup = fit_sup_constant(&ts, &d0.sup_ratio);
        let c_l2 = ts
            .iter()
            .zip(&d0.l2_ratio)
            .filter(|(&t, _)| t > 0.0)
            .map(|(&t, &r)| r.ln() / t)
            .fold(f64::NEG_INFINITY, f64::max);
        supr.constant(&format!("order{order}.c_fit"), c_sup);
        l2.constant(&format!("order{order}.c_fit"), c_l2);
        let slack = supr.tolerance;
        let slack_l2 = l2.tolerance;
        for (&n, d) in s.ns.iter().zip(&data) {
            let worst_sup = ts
                .iter()
                .zip(&d.sup_ratio)
                .map(|(&t, &r)| r / (c_sup * (c_sup * t).exp()))
                .fold(0.0, f64::max);
            let worst_l2 = ts.iter().zip(&d.l2_ratio).map(|(&t, &r)| r / (c_l2 * t).exp()).fold(0.0, f64::max);
            supr.value(n, &format!("order{order}.ratio_to_bound"), worst_sup);
            l2.value(n, &format!("order{order}.ratio_to_bound"), worst_l2);
            if n != n0 {
                supr.require(worst_sup <= slack, format!("sup bound exceeded {worst_sup} x for order {order} at N = {n}"));
                l2.require(worst_l2 <= slack_l2, format!("L2 bound exceeded {worst_l2} x for order {order} at N = {n}"));
            }
        }
        let lows: Vec<(usize, f64)> = s.ns.iter().zip(&data).map(|(&n, d)| (n, d.lower)).collect();
        bounded_below(&mut low, &format!("order{order}.min_from_ones"), &lows);
    }
    let worst = mono.per_n.iter().flat_map(|r| r.values.values().copied()).fold(0.0, f64::max);
    mono.constant("max_violation", worst);
    supr.note("bound C e^{Ct} fitted over constant, top-mode, delta and random starts at the smallest N");
    l2.note("time integral of the Dirichlet form evaluated exactly in the eigenbasis");
    Ok(GroupOutput { reports: vec![mono, supr, l2, low], tables: vec![table] })
}
