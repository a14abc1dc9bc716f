//! Event-driven sampling of master equations of the form
//! `dρ/dt = Σ_l Γ_l [T_l(ρ) − ρ]`, plus the trial orchestration and
//! summary statistics shared by every experiment.
//!
//! Each channel `T_l` is realised as a classical jump on a tracked state, so a
//! trajectory is a sequence of exponentially distributed waiting times and
//! rate-weighted event choices (Gillespie direct method). Jump channels that
//! act as the identity on the current state are left out of the rate table;
//! skipping them leaves the trajectory distribution unchanged.

use std::panic::{self, AssertUnwindSafe};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error("{} trial(s) panicked; first at index {}: {}", .0.len(), .0[0].index, .0[0].message)]
    TrialPanicked(Vec<TrialPanic>),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct TrialPanic {
    pub index: usize,
    pub message: String,
}

/// Reproducible random stream identified by `(master seed, stream index)`.
///
/// Backed by ChaCha8 using the stream index as the cipher's stream id, so two
/// streams never overlap and each draw is a pure function of
/// `(seed, stream, counter)` on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        Self {
            seed: master_seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Exponential variate with the given rate.
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        let e: f64 = Exp1.sample(&mut self.inner);
        e / rate
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Event classes with nonnegative rates and their running total.
#[derive(Debug, Clone)]
pub struct RateTable {
    names: Vec<&'static str>,
    rates: Vec<f64>,
    total: f64,
}

impl RateTable {
    pub fn new(names: &[&'static str]) -> Self {
        Self {
            names: names.to_vec(),
            rates: vec![0.0; names.len()],
            total: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn name(&self, class: usize) -> &'static str {
        self.names[class]
    }

    pub fn rate(&self, class: usize) -> f64 {
        self.rates[class]
    }

    /// Updates one class and adjusts the total incrementally.
    ///
    /// # Panics
    /// Panics on negative or non-finite rates.
    pub fn set(&mut self, class: usize, rate: f64) {
        assert!(rate >= 0.0 && rate.is_finite(), "invalid rate {rate}");
        self.total += rate - self.rates[class];
        self.rates[class] = rate;
        if self.total < 0.0 {
            self.total = 0.0;
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Re-derives the total from scratch, discarding accumulated rounding.
    pub fn recompute_total(&mut self) -> f64 {
        self.total = self.rates.iter().sum();
        self.total
    }
}

/// Outcome of one Gillespie draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Event {
        wait: f64,
        class: usize,
    },
    /// Every rate is zero; the state never changes again.
    Stasis,
}

/// Draws the waiting time to the next event and the class that fires.
pub fn next_event<R: Rng + ?Sized>(rates: &RateTable, rng: &mut R) -> Step {
    let total = rates.total;
    if total <= 0.0 {
        return Step::Stasis;
    }
    let e: f64 = Exp1.sample(rng);
    let wait = e / total;
    let mut target = rng.random::<f64>() * total;
    let mut class = rates.rates.len() - 1;
    for (i, &r) in rates.rates.iter().enumerate() {
        if target < r {
            class = i;
            break;
        }
        target -= r;
    }
    // Rounding can leave `target` just past the last positive class.
    while rates.rates[class] == 0.0 && class > 0 {
        class -= 1;
    }
    Step::Event { wait, class }
}

/// When the tracked logical observable is read out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cadence {
    /// After every event (exact first-passage time).
    Continuous,
    /// At times `Δ, 2Δ, 3Δ, …`.
    Periodic(f64),
}

impl Cadence {
    /// First readout time at or after a state change at `t`.
    #[inline]
    pub fn next_check_after(self, t: f64) -> f64 {
        match self {
            Cadence::Continuous => t,
            Cadence::Periodic(dt) => ((t / dt).floor() + 1.0) * dt,
        }
    }

    pub fn is_valid(self) -> bool {
        match self {
            Cadence::Continuous => true,
            Cadence::Periodic(dt) => dt > 0.0 && dt.is_finite(),
        }
    }
}

/// A trial that either observed a failure or hit its time horizon.
pub trait Censorable {
    fn failure_time(&self) -> Option<f64>;
}

impl Censorable for Option<f64> {
    fn failure_time(&self) -> Option<f64> {
        *self
    }
}

/// Monte Carlo mean over uncensored trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: Option<f64>,
    pub std_err: Option<f64>,
    pub n_trials: usize,
    pub n_censored: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        Self::build(values, values.len(), 0)
    }

    pub fn from_outcomes<C: Censorable>(outcomes: &[C]) -> Self {
        let values: Vec<f64> = outcomes.iter().filter_map(|o| o.failure_time()).collect();
        let n_censored = outcomes.len() - values.len();
        Self::build(&values, outcomes.len(), n_censored)
    }

    fn build(values: &[f64], n_trials: usize, n_censored: usize) -> Self {
        let (mean, std_err) = mean_and_stderr(values);
        Self {
            mean,
            std_err,
            n_trials,
            n_censored,
        }
    }

    pub fn n_observed(&self) -> usize {
        self.n_trials - self.n_censored
    }
}

/// Sample mean and standard error (`s/√n`); the error needs two values.
pub fn mean_and_stderr(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

/// Mean of `min(T, horizon)` over all trials, counting censored trials at
/// the horizon, with its standard error. A lower bound on the mean lifetime.
pub fn restricted_mean<C: Censorable>(outcomes: &[C], horizon: f64) -> (Option<f64>, Option<f64>) {
    let values: Vec<f64> = outcomes
        .iter()
        .map(|o| o.failure_time().map_or(horizon, |t| t.min(horizon)))
        .collect();
    mean_and_stderr(&values)
}

/// Binomial success fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub successes: usize,
    pub n_trials: usize,
}

impl Proportion {
    pub fn from_flags(flags: &[bool]) -> Self {
        Self {
            successes: flags.iter().filter(|&&s| s).count(),
            n_trials: flags.len(),
        }
    }

    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.n_trials as f64
    }

    pub fn std_err(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.n_trials as f64).sqrt()
    }
}

/// Worker count for [`run_trials`]. `0` defers to rayon's default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Parallelism(pub usize);

/// Runs `n` independent trials; trial `i` receives `RngStream::new(master_seed, i)`.
///
/// Results come back in index order, so anything computed from them is
/// identical for every worker count.
pub fn run_trials<T, F>(
    n: usize,
    master_seed: u64,
    parallelism: Parallelism,
    trial: F,
) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> T + Sync,
{
    if n == 0 {
        return Err(EngineError::NoTrials);
    }
    let run_one = |i: usize| {
        let mut rng = RngStream::new(master_seed, i as u64);
        panic::catch_unwind(AssertUnwindSafe(|| trial(i, &mut rng))).map_err(|payload| {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "non-string panic payload".to_string());
            TrialPanic { index: i, message }
        })
    };
    let results: Vec<Result<T, TrialPanic>> = if parallelism.0 == 1 {
        (0..n).map(run_one).collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if parallelism.0 > 0 {
            builder = builder.num_threads(parallelism.0);
        }
        let pool = builder
            .build()
            .map_err(|e| EngineError::Pool(e.to_string()))?;
        pool.install(|| (0..n).into_par_iter().map(run_one).collect())
    };
    let mut out = Vec::with_capacity(n);
    let mut panics = Vec::new();
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(p) => panics.push(p),
        }
    }
    if panics.is_empty() {
        Ok(out)
    } else {
        Err(EngineError::TrialPanicked(panics))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_always_fires() {
        let mut rates = RateTable::new(&["only"]);
        rates.set(0, 1.0);
        let mut rng = RngStream::new(1, 0);
        let mut sum = 0.0;
        let n = 100_000;
        for _ in 0..n {
            match next_event(&rates, &mut rng) {
                Step::Event { wait, class } => {
                    assert_eq!(class, 0);
                    sum += wait;
                }
                Step::Stasis => panic!("unexpected stasis"),
            }
        }
        let mean = sum / n as f64;
        // stderr of the mean of Exp(1) is 1/√n
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn class_frequencies_follow_rates() {
        let mut rates = RateTable::new(&["a", "b"]);
        rates.set(0, 1.0);
        rates.set(1, 3.0);
        let mut rng = RngStream::new(7, 3);
        let n = 100_000;
        let mut b = 0usize;
        for _ in 0..n {
            if let Step::Event { class: 1, .. } = next_event(&rates, &mut rng) {
                b += 1;
            }
        }
        // χ² with one degree of freedom, 99.9% quantile ≈ 10.83
        let expected_b = 0.75 * n as f64;
        let expected_a = 0.25 * n as f64;
        let a = (n - b) as f64;
        let chi2 =
            (b as f64 - expected_b).powi(2) / expected_b + (a - expected_a).powi(2) / expected_a;
        assert!(chi2 < 10.83, "chi2 {chi2}");
        let sigma = (0.75 * 0.25 / n as f64).sqrt();
        assert!((b as f64 / n as f64 - 0.75).abs() < 3.0 * sigma);
    }

    #[test]
    fn doubling_rates_halves_waits() {
        let mut slow = RateTable::new(&["a", "b"]);
        slow.set(0, 0.5);
        slow.set(1, 1.5);
        let mut fast = slow.clone();
        fast.set(0, 1.0);
        fast.set(1, 3.0);
        let mut r1 = RngStream::new(11, 0);
        let mut r2 = RngStream::new(11, 0);
        for _ in 0..1000 {
            let (
                Step::Event {
                    wait: w1,
                    class: c1,
                },
                Step::Event {
                    wait: w2,
                    class: c2,
                },
            ) = (next_event(&slow, &mut r1), next_event(&fast, &mut r2))
            else {
                panic!("stasis");
            };
            assert_eq!(c1, c2);
            assert!((w1 - 2.0 * w2).abs() < 1e-12 * w1.max(1.0));
        }
    }

    #[test]
    fn zero_total_is_stasis() {
        let rates = RateTable::new(&["a", "b"]);
        let mut rng = RngStream::new(0, 0);
        assert_eq!(next_event(&rates, &mut rng), Step::Stasis);
    }

    #[test]
    fn ks_exponential_waits() {
        let mut rates = RateTable::new(&["a"]);
        rates.set(0, 2.5);
        let mut rng = RngStream::new(2024, 9);
        let n = 100_000;
        let mut waits: Vec<f64> = (0..n)
            .map(|_| match next_event(&rates, &mut rng) {
                Step::Event { wait, .. } => wait,
                Step::Stasis => unreachable!(),
            })
            .collect();
        waits.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, w) in waits.iter().enumerate() {
            let cdf = 1.0 - (-2.5 * w).exp();
            d = d.max((cdf - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - cdf).abs());
        }
        // α = 0.01 critical value 1.628/√n
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn incremental_total_matches_recompute() {
        let mut rates = RateTable::new(&["a", "b", "c", "d"]);
        let mut rng = RngStream::new(5, 5);
        for _ in 0..100_000 {
            let class = rng.random_range(0..4);
            let r = rng.random::<f64>() * 10.0;
            rates.set(class, r);
        }
        let incremental = rates.total();
        let fresh = rates.recompute_total();
        assert!((incremental - fresh).abs() < 1e-9 * fresh.max(1.0));
    }

    #[test]
    fn deterministic_trial_has_zero_stderr() {
        let out = run_trials(50, 3, Parallelism(2), |_, _| Some(1.0)).unwrap();
        let est = Estimate::from_outcomes(&out);
        assert_eq!(est.mean, Some(1.0));
        assert_eq!(est.std_err, Some(0.0));
        assert_eq!(est.n_censored, 0);
    }

    #[test]
    fn results_independent_of_parallelism() {
        let trial = |_: usize, rng: &mut RngStream| Some(rng.exponential(1.0));
        let a = run_trials(200, 99, Parallelism(1), trial).unwrap();
        let b = run_trials(200, 99, Parallelism(8), trial).unwrap();
        assert_eq!(a, b);
        assert_eq!(Estimate::from_outcomes(&a), Estimate::from_outcomes(&b));
    }

    #[test]
    fn exponential_trial_mean() {
        let out = run_trials(10_000, 17, Parallelism::default(), |_, rng| {
            Some(rng.exponential(0.5))
        })
        .unwrap();
        let est = Estimate::from_outcomes(&out);
        let mean = est.mean.unwrap();
        assert!((mean - 2.0).abs() < 3.0 * est.std_err.unwrap());
    }

    #[test]
    fn censored_trials_are_counted_not_imputed() {
        let out = vec![Some(1.0), None, Some(3.0), None];
        let est = Estimate::from_outcomes(&out);
        assert_eq!(est.mean, Some(2.0));
        assert_eq!(est.n_censored, 2);
        assert_eq!(est.n_trials, 4);
    }

    #[test]
    fn panicking_trial_is_reported_by_index() {
        let err = run_trials(10, 0, Parallelism(1), |i, _| {
            if i == 4 {
                panic!("boom");
            }
            i
        })
        .unwrap_err();
        match err {
            EngineError::TrialPanicked(p) => {
                assert_eq!(p.len(), 1);
                assert_eq!(p[0].index, 4);
                assert_eq!(p[0].message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 1);
        let mut a2 = RngStream::new(1, 0);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xs2: Vec<u64> = (0..8).map(|_| a2.next_u64()).collect();
        assert_ne!(xs, ys);
        assert_eq!(xs, xs2);
        assert_eq!(a.counter(), 16);
    }

    #[test]
    fn periodic_cadence_rounds_up() {
        let c = Cadence::Periodic(1.0);
        assert_eq!(c.next_check_after(0.2), 1.0);
        assert_eq!(c.next_check_after(3.0), 4.0);
        assert_eq!(Cadence::Continuous.next_check_after(0.2), 0.2);
    }
}
