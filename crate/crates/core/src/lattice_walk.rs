//! Continuous-time simple random walk on `Z^d` and on discrete tori.
//!
//! The walk has generator `Δf(x) = Σ_{y~x} (f(y) - f(x))`: it waits an
//! exponential time of rate `2d`, then jumps to one of its `2d` neighbours
//! chosen uniformly. Simulation is event driven and exact in law.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kahan::{self, Compensated};
use crate::params::ProblemParams;

/// Where the walk lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    FreeLattice { d: usize },
    Torus { d: usize, n: usize },
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match *self {
            Geometry::FreeLattice { d } | Geometry::Torus { d, .. } => d,
        }
    }

    fn torus_side(&self) -> Option<usize> {
        match *self {
            Geometry::FreeLattice { .. } => None,
            Geometry::Torus { n, .. } => Some(n),
        }
    }
}

/// A lattice site. On a torus every coordinate lies in `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn origin(d: usize) -> Self {
        Site(vec![0; d])
    }
}

/// Occupation times `l(x)` of one trajectory. Sites with zero occupation are
/// never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeField {
    geometry: Geometry,
    occupation: BTreeMap<Site, f64>,
    total_time: f64,
}

impl LocalTimeField {
    /// Builds a field from explicit occupations; `total_time` is their sum.
    pub fn from_occupation(
        geometry: Geometry,
        occupation: impl IntoIterator<Item = (Site, f64)>,
    ) -> Result<Self> {
        let d = geometry.dim();
        let mut map = BTreeMap::new();
        for (site, time) in occupation {
            if site.0.len() != d {
                return Err(invalid("site dimension does not match geometry"));
            }
            if let Some(n) = geometry.torus_side() {
                if site.0.iter().any(|&c| c < 0 || c >= n as i64) {
                    return Err(invalid("torus site out of range"));
                }
            }
            if !(time.is_finite() && time >= 0.0) {
                return Err(invalid("occupation times must be finite and >= 0"));
            }
            if time > 0.0 {
                *map.entry(site).or_insert(0.0) += time;
            }
        }
        let total_time = kahan::sum(map.values().copied());
        Ok(Self {
            geometry,
            occupation: map,
            total_time,
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn occupation(&self) -> &BTreeMap<Site, f64> {
        &self.occupation
    }

    pub fn get(&self, site: &Site) -> f64 {
        self.occupation.get(site).copied().unwrap_or(0.0)
    }

    pub fn visited_sites(&self) -> usize {
        self.occupation.len()
    }

    /// Compensated sum of the stored occupation times.
    pub fn mass(&self) -> f64 {
        kahan::sum(self.occupation.values().copied())
    }
}

/// Receives `(site, duration)` holding segments from the event loop.
pub(crate) trait OccupationSink {
    fn hold(&mut self, pos: &[i64], dt: f64);
}

#[derive(Default)]
struct MapSink {
    cells: BTreeMap<Vec<i64>, Compensated>,
}

impl OccupationSink for MapSink {
    fn hold(&mut self, pos: &[i64], dt: f64) {
        if dt > 0.0 {
            match self.cells.get_mut(pos) {
                Some(c) => c.add(dt),
                None => {
                    let mut c = Compensated::default();
                    c.add(dt);
                    self.cells.insert(pos.to_vec(), c);
                }
            }
        }
    }
}

/// Runs the walk from the origin for `horizon` units of time, feeding every
/// holding segment to `sink`. Returns the number of jumps.
pub(crate) fn run_walk<R: Rng + ?Sized, S: OccupationSink>(
    d: usize,
    torus_side: Option<usize>,
    horizon: f64,
    rng: &mut R,
    sink: &mut S,
) -> u64 {
    let rate = 2.0 * d as f64;
    let holding = Exp::new(rate).expect("positive rate");
    let mut pos = vec![0i64; d];
    let mut elapsed = Compensated::default();
    let mut jumps = 0u64;
    loop {
        let dt: f64 = holding.sample(rng);
        let remaining = horizon - elapsed.value();
        if dt >= remaining {
            sink.hold(&pos, remaining.max(0.0));
            return jumps;
        }
        sink.hold(&pos, dt);
        elapsed.add(dt);
        let dir = rng.random_range(0..2 * d);
        let axis = dir / 2;
        let step = if dir % 2 == 0 { 1 } else { -1 };
        pos[axis] += step;
        if let Some(n) = torus_side {
            pos[axis] = pos[axis].rem_euclid(n as i64);
        }
        jumps += 1;
    }
}

/// Dense accumulator indexed by row-major torus site.
pub(crate) struct TorusSink {
    n: usize,
    cells: Vec<Compensated>,
}

impl OccupationSink for TorusSink {
    fn hold(&mut self, pos: &[i64], dt: f64) {
        let idx = pos.iter().fold(0usize, |acc, &c| acc * self.n + c as usize);
        self.cells[idx].add(dt);
    }
}

/// Dense occupation box `[-half, half]^d` around the origin, doubled when a
/// trajectory leaves it. Only touched cells are cleared between
/// trajectories, so one sink serves a whole batch.
pub(crate) struct DenseSink {
    d: usize,
    half: i64,
    cells: Vec<f64>,
    touched: Vec<usize>,
}

impl DenseSink {
    pub fn new(d: usize, half: i64) -> Self {
        let side = (2 * half + 1) as usize;
        Self {
            d,
            half,
            cells: vec![0.0; side.pow(d as u32)],
            touched: Vec::new(),
        }
    }

    fn index(&self, pos: &[i64]) -> Option<usize> {
        let side = 2 * self.half + 1;
        let mut idx = 0i64;
        for &c in pos {
            if c.abs() > self.half {
                return None;
            }
            idx = idx * side + c + self.half;
        }
        Some(idx as usize)
    }

    fn grow(&mut self) {
        let old_side = 2 * self.half + 1;
        let mut bigger = DenseSink::new(self.d, 2 * self.half + 1);
        let mut pos = vec![0i64; self.d];
        for &i in &self.touched {
            let mut rest = i as i64;
            for slot in pos.iter_mut().rev() {
                *slot = rest % old_side - self.half;
                rest /= old_side;
            }
            let j = bigger.index(&pos).expect("grown box contains the old one");
            bigger.cells[j] = self.cells[i];
            bigger.touched.push(j);
        }
        *self = bigger;
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.cells[i] = 0.0;
        }
        self.touched.clear();
    }

    /// `Σ_x l(x)^p` in first-visit order.
    pub fn silt(&self, p: f64) -> f64 {
        let pow = |l: f64| {
            if p == 2.0 {
                l * l
            } else if p.fract() == 0.0 {
                l.powi(p as i32)
            } else {
                l.powf(p)
            }
        };
        kahan::sum(self.touched.iter().map(|&i| pow(self.cells[i])))
    }
}

impl OccupationSink for DenseSink {
    fn hold(&mut self, pos: &[i64], dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let i = loop {
            match self.index(pos) {
                Some(i) => break i,
                None => self.grow(),
            }
        };
        if self.cells[i] == 0.0 {
            self.touched.push(i);
        }
        self.cells[i] += dt;
    }
}

/// `I_t = Σ_x l_t(x)^p` of one free-lattice trajectory, through `sink`
/// (cleared first). Same law and stream consumption as [`simulate_walk`].
pub(crate) fn sample_silt<R: Rng + ?Sized>(
    d: usize,
    horizon: f64,
    p: f64,
    rng: &mut R,
    sink: &mut DenseSink,
) -> f64 {
    sink.clear();
    run_walk(d, None, horizon, rng, sink);
    sink.silt(p)
}

/// Torus local times as a dense vector indexed like
/// [`crate::torus::TorusShape`]; same law and same stream consumption as
/// [`simulate_walk`] on `Geometry::Torus`.
pub(crate) fn torus_occupation<R: Rng + ?Sized>(
    shape: crate::torus::TorusShape,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut sink = TorusSink {
        n: shape.n,
        cells: vec![Compensated::default(); shape.volume()],
    };
    if horizon > 0.0 {
        run_walk(shape.d, Some(shape.n), horizon, rng, &mut sink);
    }
    sink.cells.iter().map(|c| c.value()).collect()
}

fn check_geometry(params: &ProblemParams, geometry: Geometry) -> Result<()> {
    if geometry.dim() != params.d() {
        return Err(invalid(format!(
            "geometry dimension {} does not match d={}",
            geometry.dim(),
            params.d()
        )));
    }
    if geometry.torus_side() == Some(0) {
        return Err(invalid("torus side must be >= 1"));
    }
    Ok(())
}

fn field_from_sink(geometry: Geometry, sink: MapSink) -> LocalTimeField {
    let occupation: BTreeMap<Site, f64> = sink
        .cells
        .into_iter()
        .map(|(k, v)| (Site(k), v.value()))
        .filter(|(_, v)| *v > 0.0)
        .collect();
    let total_time = kahan::sum(occupation.values().copied());
    LocalTimeField {
        geometry,
        occupation,
        total_time,
    }
}

/// Local times of one trajectory started at the origin and run to `horizon`.
pub fn simulate_walk<R: Rng + ?Sized>(
    params: &ProblemParams,
    geometry: Geometry,
    horizon: f64,
    rng: &mut R,
) -> Result<LocalTimeField> {
    check_geometry(params, geometry)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid(format!("horizon must be > 0, got {horizon}")));
    }
    let mut sink = MapSink::default();
    run_walk(params.d(), geometry.torus_side(), horizon, rng, &mut sink);
    let mut field = field_from_sink(geometry, sink);
    // the holding segments partition [0, horizon]
    field.total_time = horizon;
    Ok(field)
}

/// Torus walk run up to an independent `Exp(lambda)` time, drawn first
/// from `rng`. The returned field's total time is the sampled `tau`.
pub fn stop_at_exponential<R: Rng + ?Sized>(
    params: &ProblemParams,
    geometry: Geometry,
    lambda: f64,
    rng: &mut R,
) -> Result<LocalTimeField> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("lambda must be > 0, got {lambda}")));
    }
    if !matches!(geometry, Geometry::Torus { .. }) {
        return Err(invalid("exponential stopping is defined on the torus"));
    }
    let tau: f64 = Exp::new(lambda).expect("positive rate").sample(rng);
    if tau <= 0.0 {
        return LocalTimeField::from_occupation(geometry, std::iter::empty());
    }
    simulate_walk(params, geometry, tau, rng)
}

/// `I = Σ_x l(x)^p` over the stored sites.
pub fn silt(field: &LocalTimeField, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid(format!("p must be > 1, got {p}")));
    }
    Ok(kahan::sum(field.occupation.values().map(|l| l.powf(p))))
}

/// `N_p(l) = I^{1/p}`.
pub fn lp_norm(field: &LocalTimeField, p: f64) -> Result<f64> {
    Ok(silt(field, p)?.powf(1.0 / p))
}

/// Local times of the walk projected on the torus of side `n`:
/// `l_n(x) = Σ_k l(x + k n)`, summed over the finite support only.
pub fn fold_to_torus(field: &LocalTimeField, n: usize) -> Result<LocalTimeField> {
    if n == 0 {
        return Err(invalid("torus side must be >= 1"));
    }
    let d = field.geometry.dim();
    let mut cells: BTreeMap<Site, Compensated> = BTreeMap::new();
    for (site, &l) in &field.occupation {
        let folded = Site(site.0.iter().map(|c| c.rem_euclid(n as i64)).collect());
        cells.entry(folded).or_default().add(l);
    }
    let occupation: BTreeMap<Site, f64> = cells.into_iter().map(|(k, v)| (k, v.value())).collect();
    Ok(LocalTimeField {
        geometry: Geometry::Torus { d, n },
        occupation,
        total_time: field.total_time,
    })
}

/// `L_t(x) = (alpha^d / t) l_t(floor(alpha x))`, a step function constant on
/// the cells `[k/alpha, (k+1)/alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledProfile {
    pub alpha: f64,
    pub t: f64,
    pub d: usize,
    pub values: BTreeMap<Site, f64>,
}

impl RescaledProfile {
    /// `∫ |L|^r` as a step function: `Σ |v|^r alpha^{-d}`.
    pub fn integral_pow(&self, r: f64) -> f64 {
        let cell = self.alpha.powi(-(self.d as i32));
        kahan::sum(self.values.values().map(|v| v.abs().powf(r) * cell))
    }

    pub fn lp_norm(&self, r: f64) -> f64 {
        self.integral_pow(r).powf(1.0 / r)
    }

    pub fn mass(&self) -> f64 {
        self.integral_pow(1.0)
    }

    /// Value of the step function at a point of `R^d`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let site = Site(x.iter().map(|c| (c * self.alpha).floor() as i64).collect());
        self.values.get(&site).copied().unwrap_or(0.0)
    }
}

pub fn rescaled_profile(field: &LocalTimeField, alpha: f64, t: f64) -> Result<RescaledProfile> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("alpha must be > 0, got {alpha}")));
    }
    if !(t > 0.0) || (field.total_time - t).abs() > 1e-12 * t {
        return Err(invalid(format!(
            "profile time {t} does not match field total time {}",
            field.total_time
        )));
    }
    let d = field.geometry.dim();
    let scale = alpha.powi(d as i32) / t;
    Ok(RescaledProfile {
        alpha,
        t,
        d,
        values: field
            .occupation
            .iter()
            .map(|(s, &l)| (s.clone(), scale * l))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn pp(d: usize) -> ProblemParams {
        ProblemParams::new(d, 2.0).unwrap()
    }

    fn site(c: &[i64]) -> Site {
        Site(c.to_vec())
    }

    #[test]
    fn mass_equals_horizon() {
        for d in 1..=3 {
            for i in 0..200 {
                let f = simulate_walk(&pp(d), Geometry::FreeLattice { d }, 5.0, &mut stream(1, i))
                    .unwrap();
                let events = f.visited_sites() as f64 + 10.0 * 5.0 * d as f64;
                assert!((f.mass() - 5.0).abs() <= f64::EPSILON * events * 5.0);
                assert!(f.occupation().values().all(|&l| l > 0.0));
            }
        }
    }

    #[test]
    fn no_jump_trajectory_is_a_point_mass() {
        // find a seed whose first holding time exceeds the horizon
        let d = 1;
        let found = (0..10_000u64)
            .map(|i| simulate_walk(&pp(d), Geometry::FreeLattice { d }, 1.0, &mut stream(3, i)).unwrap())
            .find(|f| f.visited_sites() == 1)
            .expect("P(no jump) = e^-2 is not small");
        assert_eq!(found.get(&Site::origin(1)), 1.0);
        assert_eq!(silt(&found, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn determinism() {
        let a = simulate_walk(&pp(1), Geometry::FreeLattice { d: 1 }, 5.0, &mut stream(9, 0)).unwrap();
        let b = simulate_walk(&pp(1), Geometry::FreeLattice { d: 1 }, 5.0, &mut stream(9, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Geometry::FreeLattice { d: 1 };
        assert!(simulate_walk(&pp(1), g, 0.0, &mut stream(0, 0)).is_err());
        assert!(simulate_walk(&pp(2), g, 1.0, &mut stream(0, 0)).is_err());
        let torus = Geometry::Torus { d: 1, n: 4 };
        assert!(stop_at_exponential(&pp(1), torus, 0.0, &mut stream(0, 0)).is_err());
        assert!(silt(&LocalTimeField::from_occupation(g, []).unwrap(), 1.0).is_err());
    }

    #[test]
    fn silt_trivial_values() {
        let g = Geometry::FreeLattice { d: 2 };
        let f = LocalTimeField::from_occupation(g, [(site(&[3, -1]), 2.5)]).unwrap();
        assert_eq!(silt(&f, 3.0).unwrap(), 2.5f64.powi(3));
        let f = LocalTimeField::from_occupation(g, (0..7).map(|i| (site(&[i, 0]), 0.5))).unwrap();
        assert!((silt(&f, 2.5).unwrap() - 7.0 * 0.5f64.powf(2.5)).abs() < 1e-15);
    }

    #[test]
    fn silt_matches_direct_sum_of_squares() {
        let f = simulate_walk(&pp(2), Geometry::FreeLattice { d: 2 }, 50.0, &mut stream(4, 0)).unwrap();
        let mut brute = 0.0;
        for l in f.occupation().values() {
            brute += l * l;
        }
        let s = silt(&f, 2.0).unwrap();
        assert!((s - brute).abs() <= 1e-14 * brute);
    }

    #[test]
    fn fold_two_preimages() {
        let g = Geometry::FreeLattice { d: 1 };
        let f = LocalTimeField::from_occupation(g, [(site(&[0]), 1.25), (site(&[4]), 0.5)]).unwrap();
        let folded = fold_to_torus(&f, 4).unwrap();
        assert_eq!(folded.visited_sites(), 1);
        assert_eq!(folded.get(&site(&[0])), 1.75);
        assert_eq!(folded.geometry(), Geometry::Torus { d: 1, n: 4 });
    }

    #[test]
    fn exponential_stopping_extremes() {
        let torus = Geometry::Torus { d: 2, n: 5 };
        let f = stop_at_exponential(&pp(2), torus, 1e6, &mut stream(2, 0)).unwrap();
        assert_eq!(f.visited_sites(), 1);
        assert!(f.get(&Site::origin(2)) > 0.0);
        let g = stop_at_exponential(&pp(2), torus, 0.3, &mut stream(2, 1)).unwrap();
        let h = stop_at_exponential(&pp(2), torus, 0.3, &mut stream(2, 1)).unwrap();
        assert_eq!(g, h);
        assert!(g.occupation().keys().all(|s| s.0.iter().all(|&c| (0..5).contains(&c))));
    }

    #[test]
    fn exponential_stopping_mean() {
        let lambda = 0.7;
        let torus = Geometry::Torus { d: 1, n: 3 };
        let n = 20_000;
        let taus: Vec<f64> = (0..n)
            .map(|i| stop_at_exponential(&pp(1), torus, lambda, &mut stream(5, i)).unwrap().total_time())
            .collect();
        let mean = taus.iter().sum::<f64>() / n as f64;
        let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0 / lambda).abs() < 4.0 * se, "{mean} vs {}", 1.0 / lambda);
    }

    #[test]
    fn profile_of_point_mass() {
        let g = Geometry::FreeLattice { d: 1 };
        let f = LocalTimeField::from_occupation(g, [(Site::origin(1), 3.0)]).unwrap();
        let prof = rescaled_profile(&f, 1.0, 3.0).unwrap();
        assert_eq!(prof.values.get(&Site::origin(1)), Some(&1.0));
        assert_eq!(prof.mass(), 1.0);
        assert!(rescaled_profile(&f, 1.0, 2.0).is_err());
    }

    #[test]
    fn profile_norm_two_ways() {
        // d=1, p=2, alpha=2: ||L||_2^2 by quadrature of the step function
        let f = simulate_walk(&pp(1), Geometry::FreeLattice { d: 1 }, 7.0, &mut stream(6, 0)).unwrap();
        let alpha = 2.0;
        let prof = rescaled_profile(&f, alpha, 7.0).unwrap();
        // midpoint quadrature over every cell, 4 nodes per cell
        let lo = f.occupation().keys().next().unwrap().0[0];
        let hi = f.occupation().keys().last().unwrap().0[0];
        let nodes_per_cell = 4;
        let dx = 1.0 / (alpha * nodes_per_cell as f64);
        let mut quad = 0.0;
        for k in lo * nodes_per_cell..(hi + 1) * nodes_per_cell {
            let x = (k as f64 + 0.5) * dx;
            quad += prof.value_at(&[x]).powi(2) * dx;
        }
        let formula = (alpha.powf(0.5) / 7.0 * lp_norm(&f, 2.0).unwrap()).powi(2);
        assert!((quad - formula).abs() <= 1e-12 * formula);
        assert!((prof.mass() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dense_silt_matches_map_path() {
        let params = pp(2);
        let mut sink = DenseSink::new(2, 1);
        for seed in 0..50 {
            let mut a = crate::rng::stream(seed, 3);
            let mut b = crate::rng::stream(seed, 3);
            let field = simulate_walk(&params, Geometry::FreeLattice { d: 2 }, 30.0, &mut a).unwrap();
            let want = silt(&field, 2.5).unwrap();
            let got = sample_silt(2, 30.0, 2.5, &mut b, &mut sink);
            assert!((got - want).abs() <= 1e-12 * want, "{got} {want}");
        }
    }

    #[test]
    fn dense_torus_path_matches_map_path() {
        let shape = crate::torus::TorusShape::new(4, 2);
        let geometry = Geometry::Torus { d: 2, n: 4 };
        for i in 0..50 {
            let f = simulate_walk(&pp(2), geometry, 3.0, &mut stream(8, i)).unwrap();
            let dense = torus_occupation(shape, 3.0, &mut stream(8, i));
            for (s, l) in f.occupation() {
                let idx = shape.index(&[s.0[0] as usize, s.0[1] as usize]);
                assert_eq!(dense[idx], *l);
            }
            assert_eq!(dense.iter().filter(|&&l| l > 0.0).count(), f.visited_sites());
        }
    }

    proptest! {
        #[test]
        fn folding_increases_silt(seed in 0u64..1000, n in 1usize..9, d in 1usize..4, p in 1.05f64..4.0) {
            let f = simulate_walk(&pp(d), Geometry::FreeLattice { d }, 6.0, &mut stream(seed, 0)).unwrap();
            let folded = fold_to_torus(&f, n).unwrap();
            prop_assert!(silt(&folded, p).unwrap() >= silt(&f, p).unwrap() * (1.0 - 1e-14));
            prop_assert!((folded.mass() - f.mass()).abs() <= 1e-14 * f.mass());
            prop_assert_eq!(folded.total_time(), f.total_time());
        }

        #[test]
        fn silt_jensen_bounds(seed in 0u64..1000, d in 1usize..4, p in 1.05f64..4.0) {
            let t = 3.0;
            let f = simulate_walk(&pp(d), Geometry::FreeLattice { d }, t, &mut stream(seed, 1)).unwrap();
            let i = silt(&f, p).unwrap();
            let n = f.visited_sites() as f64;
            prop_assert!(i <= t.powf(p) * (1.0 + 1e-14));
            prop_assert!(i >= t.powf(p) / n.powf(p - 1.0) * (1.0 - 1e-14));
        }
    }
}
