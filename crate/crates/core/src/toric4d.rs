//! One commuting sector of the 4D toric code under local Toom-style recovery.
//!
//! X errors live on faces and are detected by edge (Z-type) checks; Z errors
//! are detected by cube (X-type) checks. A face is *active* when both of its
//! lower-side checks are violated, and the recovery rule flips active faces.
//!
//! Everything inside a [`SectorState`] is indexed by *rank*, the position of
//! a face in the sweep order of its [`Sector`], so the sweep is a scan of
//! increasing rank and random choices are made by rank.

use rand::Rng;
use thiserror::Error;

use crate::engine::{
    next_event, run_trials, Cadence, Censorable, EngineError, Estimate, Parallelism, Proportion,
    RateTable, Step,
};
use crate::lattice4d::{Lattice4D, LatticeError, FACE_ORIENTATIONS};

#[derive(Debug, Error)]
pub enum ToricError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Which check type the sector's errors are detected by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SectorKind {
    /// X errors, edge checks, observables on the `Z^L` planes.
    Edge,
    /// Z errors, cube checks, observables on the `X^L` planes.
    Cube,
}

/// Incidence tables of one sector, re-indexed by sweep rank.
#[derive(Debug, Clone)]
pub struct Sector {
    kind: SectorKind,
    n: usize,
    /// Per rank: its four checks, the two lower-side checks first.
    face_checks: Vec<[u32; 4]>,
    /// Per check: ranks of its six faces.
    check_faces: Vec<[u32; 6]>,
    /// Per rank: bit `j` set when the face is in the support of observable `j`.
    logical_mask: Vec<u8>,
    /// Rank to lattice face index.
    order: Vec<u32>,
}

impl Sector {
    /// Sector with the lexicographic sweep order.
    pub fn new(lat: &Lattice4D, kind: SectorKind) -> Self {
        let order: Vec<u32> = (0..lat.num_faces() as u32).collect();
        Self::with_order(lat, kind, order, [0, 1, 2, 3, 4, 5])
            .expect("identity order is a permutation")
    }

    /// Sector with an arbitrary sweep order. `order[r]` is the face swept at
    /// step `r`; observable `j` is the plane of face orientation `observables[j]`.
    pub fn with_order(
        lat: &Lattice4D,
        kind: SectorKind,
        order: Vec<u32>,
        observables: [usize; 6],
    ) -> Result<Self, ToricError> {
        let num_faces = lat.num_faces();
        let mut rank_of = vec![u32::MAX; num_faces];
        if order.len() != num_faces {
            return Err(ToricError::Param("sweep order must list every face".into()));
        }
        for (r, &f) in order.iter().enumerate() {
            let slot = rank_of
                .get_mut(f as usize)
                .ok_or_else(|| ToricError::Param(format!("face {f} out of range")))?;
            if *slot != u32::MAX {
                return Err(ToricError::Param(format!("face {f} listed twice")));
            }
            *slot = r as u32;
        }
        let mut seen = [false; 6];
        for &o in &observables {
            if o >= 6 || std::mem::replace(&mut seen[o], true) {
                return Err(ToricError::Param("observables must permute 0..6".into()));
            }
        }
        let face_checks = order
            .iter()
            .map(|&f| match kind {
                SectorKind::Edge => *lat.face_edges_idx(f),
                SectorKind::Cube => *lat.face_cubes_idx(f),
            })
            .collect();
        let num_checks = match kind {
            SectorKind::Edge => lat.num_edges(),
            SectorKind::Cube => lat.num_cubes(),
        };
        let check_faces = (0..num_checks as u32)
            .map(|c| {
                let faces = match kind {
                    SectorKind::Edge => lat.edge_faces_idx(c),
                    SectorKind::Cube => lat.cube_faces_idx(c),
                };
                faces.map(|f| rank_of[f as usize])
            })
            .collect();
        let mut logical_mask = vec![0u8; num_faces];
        for (j, &o) in observables.iter().enumerate() {
            let support = match kind {
                SectorKind::Edge => lat.z_logical_support(o),
                SectorKind::Cube => lat.x_logical_support(o),
            };
            for &f in support {
                logical_mask[rank_of[f as usize] as usize] |= 1 << j;
            }
        }
        Ok(Self {
            kind,
            n: lat.size(),
            face_checks,
            check_faces,
            logical_mask,
            order,
        })
    }

    /// The cube sector laid out as the image of the lexicographic edge
    /// sector under [`Lattice4D::reflected_dual`].
    ///
    /// Rank `r` here is the dual of rank `r` of `Sector::new(lat, Edge)` and
    /// observable `j` is the dual of edge observable `j`, so identically
    /// seeded runs of the two sectors make identical choices.
    pub fn dual_image_of_edge(lat: &Lattice4D) -> Self {
        let order = (0..lat.num_faces() as u32)
            .map(|f| lat.index(lat.reflected_dual(lat.face(f))))
            .collect();
        let observables = FACE_ORIENTATIONS.map(|p| p.complement().rank());
        Self::with_order(lat, SectorKind::Cube, order, observables)
            .expect("reflected dual is a permutation of the faces")
    }

    pub fn kind(&self) -> SectorKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn num_faces(&self) -> usize {
        self.face_checks.len()
    }

    pub fn num_checks(&self) -> usize {
        self.check_faces.len()
    }

    /// Lattice face index swept at rank `r`.
    pub fn face_at(&self, rank: usize) -> u32 {
        self.order[rank]
    }

    pub fn face_checks(&self, rank: usize) -> &[u32; 4] {
        &self.face_checks[rank]
    }

    pub fn check_faces(&self, check: usize) -> &[u32; 6] {
        &self.check_faces[check]
    }

    pub fn logical_mask(&self, rank: usize) -> u8 {
        self.logical_mask[rank]
    }
}

/// Fixed-size bitset with a population count.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitSet {
    words: Vec<u64>,
    count: usize,
}

impl BitSet {
    fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            count: 0,
        }
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    fn assign(&mut self, i: usize, on: bool) {
        let w = &mut self.words[i >> 6];
        let bit = 1u64 << (i & 63);
        let was = *w & bit != 0;
        if was != on {
            *w ^= bit;
            if on {
                self.count += 1;
            } else {
                self.count -= 1;
            }
        }
    }

    /// Smallest set index `≥ from`.
    #[inline]
    fn next_from(&self, from: usize) -> Option<usize> {
        let mut wi = from >> 6;
        if wi >= self.words.len() {
            return None;
        }
        let mut w = self.words[wi] & (!0u64 << (from & 63));
        loop {
            if w != 0 {
                return Some((wi << 6) + w.trailing_zeros() as usize);
            }
            wi += 1;
            if wi == self.words.len() {
                return None;
            }
            w = self.words[wi];
        }
    }

    /// Index of the `k`-th set bit, counting from zero in increasing order.
    fn nth(&self, mut k: usize) -> usize {
        for (wi, &w) in self.words.iter().enumerate() {
            let c = w.count_ones() as usize;
            if k < c {
                let mut w = w;
                for _ in 0..k {
                    w &= w - 1;
                }
                return (wi << 6) + w.trailing_zeros() as usize;
            }
            k -= c;
        }
        panic!("bitset has fewer set bits than requested");
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        let mut next = self.next_from(0);
        std::iter::from_fn(move || {
            let cur = next?;
            next = self.next_from(cur + 1);
            Some(cur)
        })
    }
}

/// Result of [`SectorState::full_recovery`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryReport {
    pub sweeps: usize,
    pub flips: usize,
    /// The final sweep made no flips, so the state is a fixpoint of the rule.
    pub converged: bool,
}

/// Readout of all six error-corrected observables of a sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcReadout {
    /// Bit `j` set when observable `j` reads −1.
    pub flipped: u8,
    pub recovery: RecoveryReport,
}

impl EcReadout {
    pub fn value(&self, observable: usize) -> i8 {
        if self.flipped >> observable & 1 == 1 {
            -1
        } else {
            1
        }
    }
}

/// Error field of one sector with incrementally maintained syndromes.
#[derive(Debug, Clone)]
pub struct SectorState<'a> {
    sector: &'a Sector,
    errors: Vec<bool>,
    syndrome: Vec<bool>,
    active: BitSet,
    /// Parity of the raw error field on each observable support.
    raw_parity: u8,
    undo: Vec<u32>,
}

impl<'a> SectorState<'a> {
    pub fn new(sector: &'a Sector) -> Self {
        Self {
            sector,
            errors: vec![false; sector.num_faces()],
            syndrome: vec![false; sector.num_checks()],
            active: BitSet::new(sector.num_faces()),
            raw_parity: 0,
            undo: Vec::new(),
        }
    }

    /// State with the given error bits (indexed by rank), built from scratch.
    pub fn from_errors(sector: &'a Sector, errors: Vec<bool>) -> Self {
        assert_eq!(errors.len(), sector.num_faces(), "one error bit per face");
        let mut st = Self::new(sector);
        st.errors = errors;
        st.syndrome = st.recompute_syndromes();
        st.raw_parity = st.recompute_raw_parity();
        for r in 0..sector.num_faces() {
            let on = st.lower_violated(r);
            st.active.assign(r, on);
        }
        st
    }

    pub fn sector(&self) -> &'a Sector {
        self.sector
    }

    pub fn errors(&self) -> &[bool] {
        &self.errors
    }

    pub fn syndromes(&self) -> &[bool] {
        &self.syndrome
    }

    pub fn error_count(&self) -> usize {
        self.errors.iter().filter(|&&e| e).count()
    }

    pub fn violated_count(&self) -> usize {
        self.syndrome.iter().filter(|&&s| s).count()
    }

    pub fn is_active(&self, rank: usize) -> bool {
        self.active.get(rank)
    }

    pub fn active_count(&self) -> usize {
        self.active.count
    }

    /// Active ranks in increasing order.
    pub fn active_faces(&self) -> Vec<usize> {
        self.active.iter().collect()
    }

    /// The `k`-th active rank in sweep order.
    pub fn nth_active(&self, k: usize) -> usize {
        self.active.nth(k)
    }

    #[inline]
    fn lower_violated(&self, rank: usize) -> bool {
        let c = &self.sector.face_checks[rank];
        self.syndrome[c[0] as usize] && self.syndrome[c[1] as usize]
    }

    /// Toggles the error on face `rank` and updates everything derived from it.
    pub fn apply_flip(&mut self, rank: usize) {
        let sector = self.sector;
        self.errors[rank] ^= true;
        self.raw_parity ^= sector.logical_mask[rank];
        let checks = sector.face_checks[rank];
        for &c in &checks {
            self.syndrome[c as usize] ^= true;
        }
        for &c in &checks {
            for &g in &sector.check_faces[c as usize] {
                let on = self.lower_violated(g as usize);
                self.active.assign(g as usize, on);
            }
        }
    }

    /// One pass over all faces in sweep order, flipping each face that is
    /// active when reached. Returns the number of flips.
    pub fn recovery_sweep(&mut self) -> usize {
        let mut flips = 0;
        let mut pos = 0;
        // Jumping to the next active rank visits exactly the faces a literal
        // scan would flip, because flips only change activity of later faces
        // through the bitset we read from.
        while let Some(r) = self.active.next_from(pos) {
            self.apply_flip(r);
            self.undo.push(r as u32);
            flips += 1;
            pos = r + 1;
        }
        flips
    }

    /// Literal scan of every face; same result as [`Self::recovery_sweep`].
    pub fn recovery_sweep_dense(&mut self) -> usize {
        let mut flips = 0;
        for r in 0..self.sector.num_faces() {
            if self.lower_violated(r) {
                self.apply_flip(r);
                self.undo.push(r as u32);
                flips += 1;
            }
        }
        flips
    }

    /// Sweeps until one sweep makes no flip or `max_sweeps` sweeps have run.
    pub fn full_recovery(&mut self, max_sweeps: usize) -> RecoveryReport {
        let report = self.recover_logged(max_sweeps);
        self.undo.clear();
        report
    }

    fn recover_logged(&mut self, max_sweeps: usize) -> RecoveryReport {
        assert!(max_sweeps >= 1, "at least one sweep");
        let mut report = RecoveryReport {
            sweeps: 0,
            flips: 0,
            converged: false,
        };
        while report.sweeps < max_sweeps {
            report.sweeps += 1;
            let flips = self.recovery_sweep();
            report.flips += flips;
            if flips == 0 {
                report.converged = true;
                break;
            }
        }
        report
    }

    /// Error-corrected readout of all six observables, evaluated on a virtual
    /// copy: recovery runs in place and is then undone.
    pub fn ec_readout(&mut self, max_sweeps: usize) -> EcReadout {
        self.undo.clear();
        let recovery = if self.active.count == 0 {
            RecoveryReport {
                sweeps: 1,
                flips: 0,
                converged: true,
            }
        } else {
            self.recover_logged(max_sweeps)
        };
        let flipped = self.raw_parity;
        while let Some(r) = self.undo.pop() {
            self.apply_flip(r as usize);
        }
        EcReadout { flipped, recovery }
    }

    /// Error-corrected value of observable `j` (±1).
    pub fn ec_observable(&mut self, observable: usize, max_sweeps: usize) -> (i8, RecoveryReport) {
        let r = self.ec_readout(max_sweeps);
        (r.value(observable), r.recovery)
    }

    /// Parity of the current (uncorrected) error field on each observable support.
    pub fn raw_parity(&self) -> u8 {
        self.raw_parity
    }

    pub fn recompute_syndromes(&self) -> Vec<bool> {
        let mut syn = vec![false; self.sector.num_checks()];
        for (r, &e) in self.errors.iter().enumerate() {
            if e {
                for &c in &self.sector.face_checks[r] {
                    syn[c as usize] ^= true;
                }
            }
        }
        syn
    }

    pub fn recompute_active(&self) -> Vec<usize> {
        let syn = self.recompute_syndromes();
        (0..self.sector.num_faces())
            .filter(|&r| {
                let c = &self.sector.face_checks[r];
                syn[c[0] as usize] && syn[c[1] as usize]
            })
            .collect()
    }

    pub fn recompute_raw_parity(&self) -> u8 {
        self.errors
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .fold(0, |acc, (r, _)| acc ^ self.sector.logical_mask[r])
    }

    /// True when every maintained quantity matches a from-scratch recomputation.
    pub fn is_consistent(&self) -> bool {
        self.syndrome == self.recompute_syndromes()
            && self.active_faces() == self.recompute_active()
            && self.raw_parity == self.recompute_raw_parity()
    }
}

/// How a depolarizing event acts on the sector bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Events at rate `Γε` per face, each flipping the bit with probability ½.
    #[default]
    Depolarizing,
    /// Events at rate `Γε/2` per face, each flipping the bit.
    Thinned,
}

/// Which error-corrected observables count towards failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tracked {
    /// Failure when any of the six reads −1.
    #[default]
    All,
    /// Failure when observable `j` reads −1.
    Single(usize),
}

impl Tracked {
    fn mask(self) -> u8 {
        match self {
            Tracked::All => 0b11_1111,
            Tracked::Single(j) => 1 << j,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToomParams {
    pub n: usize,
    pub gamma_c: f64,
    pub gamma_eps: f64,
    pub check_interval: f64,
    pub t_max: f64,
    pub max_sweeps: usize,
    pub noise: NoiseModel,
    pub tracked: Tracked,
}

impl ToomParams {
    /// Defaults: `Γ = 1`, checks every `1/Γ`, `4N` sweeps.
    pub fn new(n: usize, gamma_eps: f64, t_max: f64) -> Self {
        Self {
            n,
            gamma_c: 1.0,
            gamma_eps,
            check_interval: 1.0,
            t_max,
            max_sweeps: 4 * n.max(1),
            noise: NoiseModel::Depolarizing,
            tracked: Tracked::All,
        }
    }

    pub fn validate(&self) -> Result<(), ToricError> {
        let bad = |m: &str| Err(ToricError::Param(m.to_string()));
        if self.n == 0 {
            return bad("N must be at least 1");
        }
        if !(self.gamma_c >= 0.0 && self.gamma_c.is_finite()) {
            return bad("gamma_c must be finite and non-negative");
        }
        if !(self.gamma_eps >= 0.0 && self.gamma_eps.is_finite()) {
            return bad("gamma_eps must be finite and non-negative");
        }
        if !(self.check_interval > 0.0 && self.check_interval.is_finite()) {
            return bad("check_interval must be positive");
        }
        if self.t_max.is_nan() || self.t_max < 0.0 {
            return bad("t_max must be non-negative");
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be at least 1");
        }
        if let Tracked::Single(j) = self.tracked {
            if j >= 6 {
                return bad("observable index must be below 6");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// First check time with a flipped observable; `None` when censored.
    pub failure_time: Option<f64>,
    pub n_noise_events: u64,
    pub n_correction_events: u64,
    /// Check times passed up to failure or censoring.
    pub n_checks: u64,
    /// Checks whose recovery hit the sweep cap.
    pub n_unconverged: u64,
}

impl Censorable for TrialOutcome {
    fn failure_time(&self) -> Option<f64> {
        self.failure_time
    }
}

/// Memory lifetime under noise and continuous Toom recovery, from an error-free start.
pub fn lifetime_trial<R: Rng + ?Sized>(
    sector: &Sector,
    params: &ToomParams,
    cadence: Cadence,
    rng: &mut R,
) -> TrialOutcome {
    let mut st = SectorState::new(sector);
    let faces = sector.num_faces();
    let (noise_rate, flip_prob_half) = match params.noise {
        NoiseModel::Depolarizing => (params.gamma_eps, true),
        NoiseModel::Thinned => (params.gamma_eps / 2.0, false),
    };
    let tracked = params.tracked.mask();
    let mut rates = RateTable::new(&["noise", "correction"]);
    rates.set(0, faces as f64 * noise_rate);
    let mut out = TrialOutcome {
        failure_time: None,
        n_noise_events: 0,
        n_correction_events: 0,
        n_checks: 0,
        n_unconverged: 0,
    };
    let checks_until = |t: f64| match cadence {
        Cadence::Periodic(dt) => (t / dt).floor() as u64,
        Cadence::Continuous => 0,
    };
    let mut t = 0.0;
    // The start state is clean, so its readout is known to be +1.
    let mut known_ok = true;
    loop {
        rates.set(1, st.active_count() as f64 * params.gamma_c);
        let (t_next, class) = match next_event(&rates, rng) {
            Step::Event { wait, class } => (t + wait, Some(class)),
            Step::Stasis => (f64::INFINITY, None),
        };
        let check = cadence.next_check_after(t);
        if !known_ok && check < t_next && check <= params.t_max {
            if cadence == Cadence::Continuous {
                out.n_checks += 1;
            }
            let readout = st.ec_readout(params.max_sweeps);
            if !readout.recovery.converged {
                out.n_unconverged += 1;
            }
            if readout.flipped & tracked != 0 {
                out.failure_time = Some(check);
                if let Cadence::Periodic(_) = cadence {
                    out.n_checks = checks_until(check);
                }
                return out;
            }
            known_ok = true;
        }
        if t_next > params.t_max {
            if let Cadence::Periodic(_) = cadence {
                out.n_checks = checks_until(params.t_max);
            }
            return out;
        }
        t = t_next;
        match class {
            Some(0) => {
                out.n_noise_events += 1;
                let r = rng.random_range(0..faces);
                if !flip_prob_half || rng.random::<bool>() {
                    st.apply_flip(r);
                    known_ok = false;
                }
            }
            Some(_) => {
                out.n_correction_events += 1;
                let k = rng.random_range(0..st.active_count());
                let r = st.nth_active(k);
                st.apply_flip(r);
                known_ok = false;
            }
            None => unreachable!("stasis has an infinite wait"),
        }
    }
}

/// How a per-qubit depolarization probability maps to a sector flip probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StaticConvention {
    /// Flip with probability `q/2`.
    #[default]
    Half,
    /// Flip with probability `q`.
    Full,
}

impl StaticConvention {
    pub fn flip_probability(self, q: f64) -> f64 {
        match self {
            StaticConvention::Half => q / 2.0,
            StaticConvention::Full => q,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StaticConvention::Half => "half",
            StaticConvention::Full => "full",
        }
    }
}

impl std::str::FromStr for StaticConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half" => Ok(StaticConvention::Half),
            "full" => Ok(StaticConvention::Full),
            other => Err(format!(
                "unknown convention `{other}` (expected half or full)"
            )),
        }
    }
}

/// One-shot decoding: random i.i.d. errors, full recovery, then success iff
/// all six observables read +1.
pub fn static_trial<R: Rng + ?Sized>(
    sector: &Sector,
    q: f64,
    convention: StaticConvention,
    max_sweeps: usize,
    rng: &mut R,
) -> bool {
    let p = convention.flip_probability(q).clamp(0.0, 1.0);
    let errors = (0..sector.num_faces())
        .map(|_| rng.random_bool(p))
        .collect();
    let mut st = SectorState::from_errors(sector, errors);
    st.full_recovery(max_sweeps);
    st.raw_parity() == 0
}

/// Mean lifetime over `trials` seeded trials of the edge sector.
pub fn lifetime_experiment(
    params: &ToomParams,
    trials: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<(Estimate, Vec<TrialOutcome>), ToricError> {
    params.validate()?;
    let lat = Lattice4D::build(params.n)?;
    let sector = Sector::new(&lat, SectorKind::Edge);
    let cadence = Cadence::Periodic(params.check_interval);
    let outcomes = run_trials(trials, seed, parallelism, |_, rng| {
        lifetime_trial(&sector, params, cadence, rng)
    })?;
    Ok((Estimate::from_outcomes(&outcomes), outcomes))
}

/// Success proportion of the static decoder at depolarization probability `q`.
pub fn static_experiment(
    n: usize,
    q: f64,
    convention: StaticConvention,
    max_sweeps: usize,
    trials: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Proportion, ToricError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(ToricError::Param(format!("q = {q} is not a probability")));
    }
    if max_sweeps == 0 {
        return Err(ToricError::Param("max_sweeps must be at least 1".into()));
    }
    let lat = Lattice4D::build(n)?;
    let sector = Sector::new(&lat, SectorKind::Edge);
    let flags = run_trials(trials, seed, parallelism, |_, rng| {
        static_trial(&sector, q, convention, max_sweeps, rng)
    })?;
    Ok(Proportion::from_flags(&flags))
}
