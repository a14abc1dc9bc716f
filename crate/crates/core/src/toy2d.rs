//! The 2D open-boundary majority-vote memory under dephasing.
//!
//! Spins are X-basis eigenvalues on an `N×N` grid. A triple is a site with
//! an unordered pair of its lattice neighbours; it is active when the centre
//! disagrees with both, and an active triple flips its centre at rate `Γ`.

use rand::Rng;
use thiserror::Error;

use crate::engine::{
    next_event, run_trials, Cadence, Censorable, EngineError, Estimate, Parallelism, RateTable,
    Step,
};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// A centre site and an unordered pair of its neighbours, as flat indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub center: usize,
    pub pair: (usize, usize),
}

/// Grid geometry: neighbours and triples of every site.
#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    neighbors: Vec<Vec<usize>>,
    triples: Vec<Triple>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self, ToyError> {
        if n == 0 {
            return Err(ToyError::Param("N must be at least 1".into()));
        }
        let mut neighbors = vec![Vec::new(); n * n];
        for row in 0..n {
            for col in 0..n {
                let s = row * n + col;
                if row > 0 {
                    neighbors[s].push(s - n);
                }
                if col > 0 {
                    neighbors[s].push(s - 1);
                }
                if col + 1 < n {
                    neighbors[s].push(s + 1);
                }
                if row + 1 < n {
                    neighbors[s].push(s + n);
                }
            }
        }
        let mut triples = Vec::new();
        for (s, nb) in neighbors.iter().enumerate() {
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    triples.push(Triple {
                        center: s,
                        pair: (nb[i], nb[j]),
                    });
                }
            }
        }
        Ok(Self {
            n,
            neighbors,
            triples,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.n * self.n
    }

    pub fn neighbors(&self, site: usize) -> &[usize] {
        &self.neighbors[site]
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }
}

/// `6(N−2)² + 12(N−2) + 4` for `N ≥ 2`; `0` for `N = 1`.
pub fn expected_triple_count(n: usize) -> usize {
    if n < 2 {
        0
    } else {
        6 * (n - 2) * (n - 2) + 12 * (n - 2) + 4
    }
}

/// Spin configuration with per-site active-triple counts.
#[derive(Debug, Clone)]
pub struct SpinGrid<'a> {
    grid: &'a Grid,
    /// `true` for a spin pointing against the initial direction.
    down: Vec<bool>,
    /// Active triples centred at each site.
    active: Vec<u32>,
    total_active: u64,
    magnetization: i64,
}

impl<'a> SpinGrid<'a> {
    /// All spins up.
    pub fn new(grid: &'a Grid) -> Self {
        Self {
            grid,
            down: vec![false; grid.sites()],
            active: vec![0; grid.sites()],
            total_active: 0,
            magnetization: grid.sites() as i64,
        }
    }

    pub fn spin(&self, site: usize) -> i8 {
        if self.down[site] {
            -1
        } else {
            1
        }
    }

    pub fn magnetization(&self) -> i64 {
        self.magnetization
    }

    pub fn total_active(&self) -> u64 {
        self.total_active
    }

    pub fn active_at(&self, site: usize) -> u32 {
        self.active[site]
    }

    pub fn triple_active(&self, t: &Triple) -> bool {
        let c = self.down[t.center];
        self.down[t.pair.0] != c && self.down[t.pair.1] != c
    }

    /// Active triples at `site`: pairs of neighbours that both disagree with it.
    fn count_active(&self, site: usize) -> u32 {
        let c = self.down[site];
        let k = self.grid.neighbors[site]
            .iter()
            .filter(|&&r| self.down[r] != c)
            .count() as u32;
        k * k.saturating_sub(1) / 2
    }

    fn refresh(&mut self, site: usize) {
        let new = self.count_active(site);
        self.total_active = self.total_active + new as u64 - self.active[site] as u64;
        self.active[site] = new;
    }

    pub fn flip(&mut self, site: usize) {
        self.down[site] ^= true;
        self.magnetization += if self.down[site] { -2 } else { 2 };
        self.refresh(site);
        for i in 0..self.grid.neighbors[site].len() {
            let r = self.grid.neighbors[site][i];
            self.refresh(r);
        }
    }

    /// Centre of the `k`-th active triple, counting site by site.
    pub fn nth_active_center(&self, mut k: u64) -> usize {
        for (s, &a) in self.active.iter().enumerate() {
            if k < a as u64 {
                return s;
            }
            k -= a as u64;
        }
        panic!("fewer active triples than requested");
    }

    /// Brute-force list of active triples.
    pub fn active_triples(&self) -> Vec<Triple> {
        self.grid
            .triples
            .iter()
            .filter(|t| self.triple_active(t))
            .copied()
            .collect()
    }

    pub fn is_consistent(&self) -> bool {
        let brute = self.active_triples();
        let mut per_site = vec![0u32; self.grid.sites()];
        for t in &brute {
            per_site[t.center] += 1;
        }
        let m: i64 = (0..self.grid.sites()).map(|s| self.spin(s) as i64).sum();
        per_site == self.active
            && brute.len() as u64 == self.total_active
            && m == self.magnetization
    }
}

/// When a magnetization reading counts as a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// `M ≤ 0`.
    #[default]
    TieFails,
    /// `M < 0`.
    Strict,
}

impl TieRule {
    fn failed(self, m: i64) -> bool {
        match self {
            TieRule::TieFails => m <= 0,
            TieRule::Strict => m < 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyParams {
    pub n: usize,
    pub gamma_c: f64,
    pub gamma_phase: f64,
    /// Enters only through [`parity_lifetime`].
    pub gamma_dep: f64,
    pub t_max: f64,
    pub cadence: Cadence,
    pub tie: TieRule,
}

impl ToyParams {
    /// `Γ = 1`, checks every `1/Γ`, ties fail.
    pub fn new(n: usize, gamma_phase: f64, gamma_dep: f64, t_max: f64) -> Self {
        Self {
            n,
            gamma_c: 1.0,
            gamma_phase,
            gamma_dep,
            t_max,
            cadence: Cadence::Periodic(1.0),
            tie: TieRule::TieFails,
        }
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: &str| Err(ToyError::Param(m.to_string()));
        if self.n == 0 {
            return bad("N must be at least 1");
        }
        for (name, v) in [
            ("gamma_c", self.gamma_c),
            ("gamma_phase", self.gamma_phase),
            ("gamma_dep", self.gamma_dep),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ToyError::Param(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if self.t_max.is_nan() || self.t_max < 0.0 {
            return bad("t_max must be non-negative");
        }
        if !self.cadence.is_valid() {
            return bad("check interval must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyOutcome {
    pub failure_time: Option<f64>,
    pub n_noise_events: u64,
    pub n_correction_events: u64,
}

impl Censorable for ToyOutcome {
    fn failure_time(&self) -> Option<f64> {
        self.failure_time
    }
}

/// One majority-vote lifetime trial from the all-up state.
pub fn evolve_trial<R: Rng + ?Sized>(grid: &Grid, params: &ToyParams, rng: &mut R) -> ToyOutcome {
    let mut spins = SpinGrid::new(grid);
    let sites = grid.sites();
    let mut rates = RateTable::new(&["phase", "correction"]);
    rates.set(0, sites as f64 * params.gamma_phase);
    let mut out = ToyOutcome {
        failure_time: None,
        n_noise_events: 0,
        n_correction_events: 0,
    };
    let mut t = 0.0;
    loop {
        rates.set(1, spins.total_active() as f64 * params.gamma_c);
        let (t_next, class) = match next_event(&rates, rng) {
            Step::Event { wait, class } => (t + wait, Some(class)),
            Step::Stasis => (f64::INFINITY, None),
        };
        let check = params.cadence.next_check_after(t);
        if check < t_next && check <= params.t_max && params.tie.failed(spins.magnetization()) {
            out.failure_time = Some(check);
            return out;
        }
        if t_next > params.t_max {
            return out;
        }
        t = t_next;
        match class {
            Some(0) => {
                out.n_noise_events += 1;
                spins.flip(rng.random_range(0..sites));
            }
            Some(_) => {
                out.n_correction_events += 1;
                let k = rng.random_range(0..spins.total_active());
                spins.flip(spins.nth_active_center(k));
            }
            None => unreachable!("stasis has an infinite wait"),
        }
    }
}

/// Lifetime of the dephasing-immune parity under depolarization: `1/(Γ_dep·N²)`.
///
/// `None` when `Γ_dep = 0` (unbounded).
pub fn parity_lifetime(n: usize, gamma_dep: f64) -> Option<f64> {
    if gamma_dep > 0.0 {
        Some(1.0 / (gamma_dep * (n * n) as f64))
    } else {
        None
    }
}

/// Monte Carlo majority lifetime at one grid size.
pub fn majority_lifetime(
    params: &ToyParams,
    trials: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Estimate, ToyError> {
    params.validate()?;
    let grid = Grid::new(params.n)?;
    let outcomes = run_trials(trials, seed, parallelism, |_, rng| {
        evolve_trial(&grid, params, rng)
    })?;
    Ok(Estimate::from_outcomes(&outcomes))
}

/// `min(τ_majority, τ_parity)`; `None` when neither is bounded or measured.
pub fn combine_lifetimes(majority: Option<f64>, parity: Option<f64>) -> Option<f64> {
    match (majority, parity) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeScanRow {
    pub n: usize,
    pub majority: Estimate,
    pub parity: Option<f64>,
    pub qubit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeScan {
    pub rows: Vec<SizeScanRow>,
    /// Size maximizing the qubit lifetime.
    pub best_n: Option<usize>,
}

impl SizeScan {
    /// Qubit lifetime at the best size over that at the smallest scanned size.
    pub fn gain(&self) -> Option<f64> {
        let best = self.rows.iter().find(|r| Some(r.n) == self.best_n)?.qubit?;
        let first = self.rows.first()?.qubit?;
        Some(best / first)
    }
}

/// Qubit lifetime `min(τ_majority, τ_parity)` over a range of sizes.
///
/// Size `n` uses trial seed `seed + n`, so adding sizes to the scan leaves
/// existing rows unchanged.
pub fn qubit_lifetime(
    base: &ToyParams,
    sizes: &[usize],
    trials: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<SizeScan, ToyError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let params = ToyParams { n, ..*base };
        let majority =
            majority_lifetime(&params, trials, seed.wrapping_add(n as u64), parallelism)?;
        let parity = parity_lifetime(n, base.gamma_dep);
        let qubit = combine_lifetimes(majority.mean, parity);
        rows.push(SizeScanRow {
            n,
            majority,
            parity,
            qubit,
        });
    }
    let best_n = rows
        .iter()
        .filter_map(|r| r.qubit.map(|q| (r.n, q)))
        .fold(None, |best: Option<(usize, f64)>, (n, q)| match best {
            Some((_, bq)) if bq >= q => best,
            _ => Some((n, q)),
        })
        .map(|(n, _)| n);
    Ok(SizeScan { rows, best_n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RngStream;
    use std::collections::BTreeSet;

    #[test]
    fn triple_counts() {
        for n in 1..=6 {
            let g = Grid::new(n).unwrap();
            assert_eq!(g.triples().len(), expected_triple_count(n), "N = {n}");
        }
        let g = Grid::new(4).unwrap();
        let per_site = |s| g.triples().iter().filter(|t| t.center == s).count();
        assert_eq!(per_site(5), 6);
        assert_eq!(per_site(1), 3);
        assert_eq!(per_site(0), 1);
    }

    #[test]
    fn all_up_has_no_active_triple() {
        let g = Grid::new(4).unwrap();
        let s = SpinGrid::new(&g);
        assert!(s.active_triples().is_empty());
        assert_eq!(s.total_active(), 0);
    }

    #[test]
    fn single_interior_flip_activates_its_six_triples() {
        let g = Grid::new(4).unwrap();
        let mut s = SpinGrid::new(&g);
        s.flip(5);
        let active = s.active_triples();
        assert_eq!(active.len(), 6);
        assert!(active.iter().all(|t| t.center == 5));
        assert!(s.is_consistent());
    }

    #[test]
    fn two_by_two_single_flip() {
        let g = Grid::new(2).unwrap();
        let mut s = SpinGrid::new(&g);
        s.flip(3);
        let active: BTreeSet<Triple> = s.active_triples().into_iter().collect();
        assert_eq!(active.len(), 1);
        assert_eq!(active.iter().next().unwrap().center, 3);
    }

    #[test]
    fn fuzz_active_counts() {
        for n in 1..=5 {
            let g = Grid::new(n).unwrap();
            let mut s = SpinGrid::new(&g);
            let mut rng = RngStream::new(3, n as u64);
            for _ in 0..5000 {
                s.flip(rng.random_range(0..g.sites()));
                assert!(s.is_consistent());
            }
        }
    }

    #[test]
    fn no_dephasing_is_censored() {
        let g = Grid::new(3).unwrap();
        let p = ToyParams::new(3, 0.0, 0.0, 50.0);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(evolve_trial(&g, &p, &mut rng).failure_time, None);
    }

    #[test]
    fn single_site_is_exponential() {
        let mut p = ToyParams::new(1, 0.1, 0.0, 1e6);
        p.cadence = Cadence::Continuous;
        let est = majority_lifetime(&p, 10_000, 4, Parallelism(1)).unwrap();
        let (m, se) = (est.mean.unwrap(), est.std_err.unwrap());
        assert!((m - 10.0).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn parity_formula() {
        assert_eq!(parity_lifetime(1, 1.0), Some(1.0));
        assert!((parity_lifetime(4, 5e-5).unwrap() - 1250.0).abs() < 1e-9);
        assert_eq!(parity_lifetime(3, 0.0), None);
        let a = parity_lifetime(3, 2e-3).unwrap();
        let b = parity_lifetime(6, 2e-3).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn combine_takes_minimum() {
        assert_eq!(combine_lifetimes(Some(3.0), Some(5.0)), Some(3.0));
        assert_eq!(combine_lifetimes(Some(3.0), None), Some(3.0));
        assert_eq!(combine_lifetimes(None, Some(5.0)), Some(5.0));
    }

    #[test]
    fn vanishing_dephasing_prefers_one_site() {
        let mut base = ToyParams::new(1, 0.0, 1e-3, 100.0);
        base.gamma_c = 1.0;
        let scan = qubit_lifetime(&base, &[1, 2, 3], 5, 1, Parallelism(1)).unwrap();
        assert_eq!(scan.best_n, Some(1));
    }
}
