//! Event-driven Deffuant dynamics with density-valued opinions on a finite
//! window of ℤ, and the diagnostics read off it.
//!
//! All edges carry independent unit-rate Poisson clocks. They are simulated as
//! one global clock with `Exp(|E|)` waiting times and a uniformly chosen edge
//! per ring. Times are kept in `f64` whatever the scalar type of the opinions.
//!
//! The metric distance of every edge is cached and refreshed whenever one of
//! its endpoints changes, so an event on a blocked edge costs O(1). The same
//! refresh keeps exact track of how long each edge has been blocked.
//!
//! Under total variation, when the log is off, a neighbouring edge is not
//! always recomputed. An update moves `f` to `f + μ(h − f)`, a TV step of
//! `μ·d`, and `simplify` adds at most its tolerance. The cache then keeps the
//! old value plus these steps as an upper bound for as long as that bound stays
//! below `θ − BOUND_MARGIN`. Such an edge is certainly open, so gate and
//! blocked bookkeeping come out the same as with exact values.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::opinions::{sample_initial, RngState};
use crate::plf::{check_mu, half_l1_distance, levy_distance, mix_pair, Cdf, PiecewiseLinearFn};
use crate::scalar::Scalar;

/// Accuracy of the Lévy distance when it gates updates.
pub const LEVY_TOL: f64 = 1e-9;

/// Distance bounds closer than this to θ are replaced by exact values.
pub const BOUND_MARGIN: f64 = 1e-9;

/// Header of the per-run time-series CSV.
pub const SERIES_HEADER: &str = "t,max_neighbor_tv,blocked_fraction,mean_tv_to_intensity,energy_total";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Site `n−1` is joined to site `0`.
    Ring,
    /// Open window, `n−1` edges.
    Path,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ring => "ring",
            Self::Path => "path",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(Self::Ring),
            "path" => Ok(Self::Path),
            _ => Err(Error::Parameter(format!("unknown boundary '{s}' (ring, path)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TotalVariation,
    Levy,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TotalVariation => "total_variation",
            Self::Levy => "levy",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total_variation" | "tv" => Ok(Self::TotalVariation),
            "levy" => Ok(Self::Levy),
            _ => Err(Error::Parameter(format!("unknown metric '{s}' (total_variation, levy)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig<T> {
    /// Confidence bound, in units of the metric.
    pub theta: T,
    pub mu: T,
    /// Minimal support width of the initial triangles.
    pub gamma: T,
    pub n_sites: usize,
    pub horizon: f64,
    pub boundary: Boundary,
    pub metric: Metric,
    pub seed: u64,
    /// Tolerance of the `simplify` applied to both opinions after every update.
    pub simplify_tol: T,
    /// Keep every event in [`LatticeState::events`].
    pub record_events: bool,
}

impl<T: Scalar> SimConfig<T> {
    /// Defaults: μ = ½, 1000 sites, horizon 1000, ring, total variation,
    /// simplify tolerance 1e-12, no event log.
    pub fn new(theta: T, gamma: T, seed: u64) -> Self {
        Self {
            theta,
            mu: T::lit(0.5),
            gamma,
            n_sites: 1000,
            horizon: 1000.0,
            boundary: Boundary::Ring,
            metric: Metric::TotalVariation,
            seed,
            simplify_tol: T::lit(1e-12),
            record_events: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= T::zero() && self.theta <= T::one()) {
            return Err(Error::Parameter(format!("theta = {} must lie in [0,1]", self.theta)));
        }
        check_mu(self.mu)?;
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return Err(Error::Parameter(format!("gamma = {} must lie in [0,1)", self.gamma)));
        }
        if self.n_sites == 0 {
            return Err(Error::Parameter("n_sites must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Parameter(format!("horizon = {} must be positive", self.horizon)));
        }
        if !(self.simplify_tol >= T::zero()) {
            return Err(Error::Parameter(format!(
                "simplify_tol = {} must be nonnegative",
                self.simplify_tol
            )));
        }
        Ok(())
    }

    /// Edges as `(left, right)` site pairs; edge `i` has left endpoint `i`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_sites;
        match (self.boundary, n) {
            (_, 0 | 1) => Vec::new(),
            (Boundary::Ring, 2) | (Boundary::Path, _) => (0..n - 1).map(|i| (i, i + 1)).collect(),
            (Boundary::Ring, _) => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        }
    }
}

/// Counters of one edge.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeStats<T> {
    /// Clock rings.
    pub events: u64,
    /// Rings that led to an update.
    pub performed: u64,
    /// Energy `2μ(1−μ)∫(f−g)²` dissipated by the updates on this edge.
    pub energy_loss: T,
    pub first_event_time: Option<f64>,
    pub last_event_time: Option<f64>,
}

/// One clock ring.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event<T> {
    pub time: f64,
    pub edge: usize,
    /// Metric distance of the two opinions when the clock rang. Exact when the
    /// configuration records events, otherwise possibly an upper bound below θ.
    pub distance: T,
    pub performed: bool,
    pub energy_loss: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics<T> {
    /// Largest metric distance across an edge.
    pub max_neighbor_tv: T,
    /// Fraction of edges at distance `> θ`.
    pub blocked_fraction: T,
    /// Mean over sites of `½∫|f_v − intensity|`.
    pub mean_tv_to_intensity: T,
    /// `Σ_v ∫ f_v²`.
    pub energy_total: T,
}

#[derive(Clone, Debug)]
pub struct LatticeState<T> {
    config: SimConfig<T>,
    time: f64,
    opinions: Vec<PiecewiseLinearFn<T>>,
    edges: Vec<(usize, usize)>,
    incident: Vec<Vec<usize>>,
    stats: Vec<EdgeStats<T>>,
    distance: Vec<T>,
    exact: Vec<bool>,
    blocked_since: Vec<Option<f64>>,
    pending: Option<(f64, usize)>,
    rng: RngState,
    events: Option<Vec<Event<T>>>,
}

impl<T: Scalar> LatticeState<T> {
    /// `n_sites` independent initial opinions drawn from `rng`, at time 0.
    pub fn init(config: &SimConfig<T>, mut rng: RngState) -> Result<Self> {
        config.validate()?;
        let opinions = (0..config.n_sites)
            .map(|_| sample_initial(&mut rng, config.gamma).map(|(_, f)| f))
            .collect::<Result<Vec<_>>>()?;
        Self::from_opinions(config, opinions, rng)
    }

    /// Starts from given opinions (one per site, all densities).
    pub fn from_opinions(config: &SimConfig<T>, opinions: Vec<PiecewiseLinearFn<T>>, rng: RngState) -> Result<Self> {
        config.validate()?;
        if opinions.len() != config.n_sites {
            return Err(Error::Parameter(format!(
                "{} opinions for {} sites",
                opinions.len(),
                config.n_sites
            )));
        }
        for f in &opinions {
            f.ensure_density("initial opinion")?;
        }
        let edges = config.edges();
        let mut incident = vec![Vec::new(); config.n_sites];
        for (e, &(a, b)) in edges.iter().enumerate() {
            incident[a].push(e);
            incident[b].push(e);
        }
        let mut state = Self {
            config: config.clone(),
            time: 0.0,
            opinions,
            stats: vec![EdgeStats::default(); edges.len()],
            distance: vec![T::zero(); edges.len()],
            exact: vec![false; edges.len()],
            blocked_since: vec![None; edges.len()],
            edges,
            incident,
            pending: None,
            rng,
            events: config.record_events.then(Vec::new),
        };
        for e in 0..state.edges.len() {
            state.refresh_edge(e)?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &SimConfig<T> {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn opinions(&self) -> &[PiecewiseLinearFn<T>] {
        &self.opinions
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_stats(&self) -> &[EdgeStats<T>] {
        &self.stats
    }

    /// Current metric distance across each edge.
    pub fn distances(&self) -> Vec<T> {
        (0..self.edges.len()).map(|e| self.distance(e)).collect()
    }

    /// Current metric distance across edge `e`.
    pub fn distance(&self, e: usize) -> T {
        if self.exact[e] {
            return self.distance[e];
        }
        let (a, b) = self.edges[e];
        metric_distance(self.config.metric, &self.opinions[a], &self.opinions[b]).expect("opinions are densities")
    }

    /// Start of the current uninterrupted blocked spell of each edge (at the
    /// configured θ), `None` if the edge is open.
    pub fn blocked_since(&self) -> &[Option<f64>] {
        &self.blocked_since
    }

    /// The event log, if the configuration asked for one.
    pub fn events(&self) -> Option<&[Event<T>]> {
        self.events.as_deref()
    }

    /// Total dissipated energy over all edges.
    pub fn cumulative_energy_loss(&self) -> T {
        self.stats.iter().fold(T::zero(), |acc, s| acc + s.energy_loss)
    }

    /// Time of the next clock ring (drawn on first request and then kept, so the
    /// trajectory does not depend on how `run` calls are chunked).
    pub fn next_event_time(&mut self) -> Option<f64> {
        if self.edges.is_empty() {
            return None;
        }
        let (t, _) = *self.pending.get_or_insert_with(|| {
            let m = self.edges.len();
            let dt = self.rng.exponential(m as f64);
            (self.time + dt, self.rng.index(m))
        });
        Some(t)
    }

    /// Processes the next clock ring, wherever it falls; `None` without edges.
    pub fn step(&mut self) -> Result<Option<Event<T>>> {
        if self.next_event_time().is_none() {
            return Ok(None);
        }
        let (t, e) = self.pending.take().expect("drawn above");
        self.time = t;
        let d = self.distance[e];
        let stats = &mut self.stats[e];
        stats.events += 1;
        stats.first_event_time.get_or_insert(t);
        stats.last_event_time = Some(t);
        let mut event = Event {
            time: t,
            edge: e,
            distance: d,
            performed: false,
            energy_loss: T::zero(),
        };
        if d <= self.config.theta {
            let (a, b) = self.edges[e];
            let mu = self.config.mu;
            let upd = mix_pair(&self.opinions[a], &self.opinions[b], mu)?;
            let loss = T::lit(2.0) * mu * (T::one() - mu) * upd.sq_distance;
            let first = upd.first.simplify(self.config.simplify_tol);
            self.opinions[b] = if upd.symmetric {
                first.clone()
            } else {
                upd.second.simplify(self.config.simplify_tol)
            };
            self.opinions[a] = first;
            let stats = &mut self.stats[e];
            stats.performed += 1;
            stats.energy_loss = stats.energy_loss + loss;
            event.performed = true;
            event.energy_loss = loss;
            self.refresh_edge(e)?;
            let bounded = self.config.metric == Metric::TotalVariation && self.events.is_none();
            let step = mu * d + self.config.simplify_tol;
            let limit = self.config.theta - T::lit(BOUND_MARGIN);
            for site in [a, b] {
                for i in 0..self.incident[site].len() {
                    let f = self.incident[site][i];
                    if f == e {
                        continue;
                    }
                    let bound = self.distance[f] + step;
                    if bounded && bound <= limit {
                        self.distance[f] = bound;
                        self.exact[f] = false;
                        self.blocked_since[f] = None;
                    } else {
                        self.refresh_edge(f)?;
                    }
                }
            }
        }
        if let Some(log) = &mut self.events {
            log.push(event.clone());
        }
        Ok(Some(event))
    }

    /// Runs every clock ring up to `until`, then sets the clock to `until`.
    pub fn run(&mut self, until: f64) -> Result<()> {
        if !(until >= self.time) {
            return Err(Error::Parameter(format!(
                "cannot run back from t = {} to {until}",
                self.time
            )));
        }
        while let Some(t) = self.next_event_time() {
            if t > until {
                break;
            }
            self.step()?;
        }
        self.time = until;
        Ok(())
    }

    fn refresh_edge(&mut self, e: usize) -> Result<()> {
        let (a, b) = self.edges[e];
        let d = metric_distance(self.config.metric, &self.opinions[a], &self.opinions[b])?;
        self.distance[e] = d;
        self.exact[e] = true;
        if d > self.config.theta {
            self.blocked_since[e].get_or_insert(self.time);
        } else {
            self.blocked_since[e] = None;
        }
        Ok(())
    }

    /// Edges whose opinions are currently at distance `> theta`.
    pub fn blocked_edges(&self, theta: T) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.distance(e) > theta).collect()
    }

    /// Fraction of edges blocked (at the configured θ) without interruption
    /// since time `since` or earlier. Zero without edges.
    pub fn persistent_blocked_fraction(&self, since: f64) -> T {
        let m = self.edges.len();
        if m == 0 {
            return T::zero();
        }
        let k = self.blocked_since.iter().filter(|s| matches!(s, Some(t) if *t <= since)).count();
        T::from_usize(k).expect("usize to float") / T::from_usize(m).expect("usize to float")
    }

    /// `Σ_v ∫ f_v²`.
    pub fn energy_total(&self) -> T {
        self.opinions.iter().fold(T::zero(), |acc, f| acc + f.l2_energy())
    }

    /// Snapshot diagnostics at the configured θ against `intensity`.
    pub fn diagnostics(&self, intensity: &PiecewiseLinearFn<T>) -> Diagnostics<T> {
        let m = self.edges.len();
        let distances = self.distances();
        let max_neighbor_tv = distances.iter().fold(T::zero(), |acc, &d| acc.max(d));
        let blocked_fraction = if m == 0 {
            T::zero()
        } else {
            let k = distances.iter().filter(|&&d| d > self.config.theta).count();
            T::from_usize(k).expect("usize to float") / T::from_usize(m).expect("usize to float")
        };
        let n = T::from_usize(self.opinions.len()).expect("usize to float");
        let mean_tv_to_intensity = self
            .opinions
            .iter()
            .fold(T::zero(), |acc, f| acc + half_l1_distance(f, intensity))
            / n;
        Diagnostics {
            max_neighbor_tv,
            blocked_fraction,
            mean_tv_to_intensity,
            energy_total: self.energy_total(),
        }
    }

    /// Lengths of the runs between consecutive edges that saw no clock ring in
    /// `[0, t]` (cyclically on a ring). With every edge quiet all gaps are 1.
    pub fn quiet_edge_gaps(&self, t: f64) -> Result<Vec<usize>> {
        if !(t >= 0.0 && t <= self.time) {
            return Err(Error::Parameter(format!(
                "gap time {t} outside the simulated span [0, {}]",
                self.time
            )));
        }
        let quiet: Vec<usize> = self
            .stats
            .iter()
            .enumerate()
            .filter(|(_, s)| s.first_event_time.is_none_or(|f| f > t))
            .map(|(e, _)| e)
            .collect();
        let mut gaps: Vec<usize> = quiet.windows(2).map(|w| w[1] - w[0]).collect();
        let cyclic = self.config.boundary == Boundary::Ring && self.edges.len() == self.config.n_sites;
        if cyclic {
            if let (Some(&first), Some(&last)) = (quiet.first(), quiet.last()) {
                gaps.push(self.edges.len() - last + first);
            }
        }
        Ok(gaps)
    }

    /// Writes `site_<v>.csv` (header `breakpoint,value`) for every site into `dir`.
    pub fn dump_opinions(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let width = self.opinions.len().saturating_sub(1).to_string().len();
        for (v, f) in self.opinions.iter().enumerate() {
            let file = std::fs::File::create(dir.join(format!("site_{v:0width$}.csv")))?;
            f.write_csv(std::io::BufWriter::new(file))?;
        }
        Ok(())
    }
}

fn metric_distance<T: Scalar>(metric: Metric, f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>) -> Result<T> {
    if f == g {
        return Ok(T::zero());
    }
    match metric {
        Metric::TotalVariation => Ok(half_l1_distance(f, g).min(T::one())),
        Metric::Levy => levy_distance(f, g, T::lit(LEVY_TOL)),
    }
}

/// Runs to `config.horizon`, recording diagnostics at `t = 0, interval, 2·interval, …`
/// and at the horizon.
pub fn run_with_series<T: Scalar>(
    state: &mut LatticeState<T>,
    intensity: &PiecewiseLinearFn<T>,
    interval: f64,
) -> Result<Vec<(f64, Diagnostics<T>)>> {
    if !(interval > 0.0) {
        return Err(Error::Parameter(format!("sampling interval {interval} must be positive")));
    }
    let horizon = state.config.horizon;
    let mut out = vec![(state.time, state.diagnostics(intensity))];
    let mut k = 1u64;
    loop {
        let t = (k as f64 * interval).min(horizon);
        if t > state.time {
            state.run(t)?;
            out.push((t, state.diagnostics(intensity)));
        }
        if t >= horizon {
            return Ok(out);
        }
        k += 1;
    }
}

/// Time-series CSV with header [`SERIES_HEADER`], 17 significant digits.
pub fn write_series_csv<T: Scalar, W: Write>(mut w: W, series: &[(f64, Diagnostics<T>)]) -> std::io::Result<()> {
    writeln!(w, "{SERIES_HEADER}")?;
    for (t, d) in series {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t,
            d.max_neighbor_tv.as_f64(),
            d.blocked_fraction.as_f64(),
            d.mean_tv_to_intensity.as_f64(),
            d.energy_total.as_f64()
        )?;
    }
    Ok(())
}

/// Flatness flags of one site.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Flatness {
    pub left: bool,
    pub right: bool,
    pub two_sided: bool,
}

/// Flatness of the scalars `s_v = cdf(f_v, delta)` around `reference`.
pub fn flatness_scan<T: Scalar>(
    initial: &[PiecewiseLinearFn<T>],
    delta: T,
    eps: T,
    reference: T,
) -> Result<Vec<Flatness>> {
    if !(delta >= T::zero() && delta <= T::one()) {
        return Err(Error::Parameter(format!("delta = {delta} must lie in [0,1]")));
    }
    let s: Vec<T> = initial.iter().map(|f| Cdf::new(f).eval(delta)).collect();
    flatness_scan_scalars(&s, eps, reference)
}

/// Site `v` is right-flat when every average `s_v..=s_{v+n}` that stays inside
/// the window is within `eps` of `reference`; left-flat likewise with
/// `s_{v−n}..=s_v`, and two-sided flat with every window `s_{v−m}..=s_{v+n}`.
/// Truncation at the window edge makes these approximations of the conditions
/// on all of ℤ.
pub fn flatness_scan_scalars<T: Scalar>(s: &[T], eps: T, reference: T) -> Result<Vec<Flatness>> {
    if !(eps >= T::zero() && eps.is_finite()) {
        return Err(Error::Parameter(format!("eps = {eps} must be finite and nonnegative")));
    }
    let n = s.len();
    // Window i..j (exclusive end) is fine iff |q_j − q_i| ≤ eps (j − i), i.e.
    // q_j − eps j ≤ q_i − eps i and q_i + eps i ≤ q_j + eps j.
    let mut q = Vec::with_capacity(n + 1);
    q.push(T::zero());
    for &x in s {
        let last = *q.last().expect("nonempty");
        q.push(last + (x - reference));
    }
    let k = |i: usize| T::from_usize(i).expect("usize to float");
    let lo: Vec<T> = (0..=n).map(|i| q[i] - eps * k(i)).collect();
    let hi: Vec<T> = (0..=n).map(|i| q[i] + eps * k(i)).collect();
    // suffix extrema over j ∈ v+1..=n and prefix extrema over i ∈ 0..=v
    let mut suf_max_lo = vec![T::neg_infinity(); n + 2];
    let mut suf_min_hi = vec![T::infinity(); n + 2];
    for j in (0..=n).rev() {
        suf_max_lo[j] = suf_max_lo[j + 1].max(lo[j]);
        suf_min_hi[j] = suf_min_hi[j + 1].min(hi[j]);
    }
    let mut pre_min_lo = T::infinity();
    let mut pre_max_hi = T::neg_infinity();
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        pre_min_lo = pre_min_lo.min(lo[v]);
        pre_max_hi = pre_max_hi.max(hi[v]);
        let right = suf_max_lo[v + 1] <= lo[v] && hi[v] <= suf_min_hi[v + 1];
        let left = pre_min_lo >= lo[v + 1] && pre_max_hi <= hi[v + 1];
        let two_sided = suf_max_lo[v + 1] <= pre_min_lo && pre_max_hi <= suf_min_hi[v + 1];
        out.push(Flatness { left, right, two_sided });
    }
    Ok(out)
}
