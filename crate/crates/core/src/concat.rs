//! Concatenated-code dissipation: closed-form bounds and a Pauli-frame
//! Monte Carlo of noise and level-wise recovery events.
//!
//! Blocks are addressed by height `h` (0 for physical qubits, `M` for the
//! root) and an index among the `k^(M−h)` blocks of that height; the
//! children of block `i` are `i·k + j` one level down.

use rand::Rng;
use thiserror::Error;

use crate::engine::{
    mean_and_stderr, next_event, run_trials, Cadence, Censorable, EngineError, Parallelism,
    RateTable, Step,
};

#[derive(Debug, Error)]
pub enum ConcatError {
    #[error("invalid code: {0}")]
    Code(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A single-qubit Pauli up to phase, packed as `x | z << 1`.
pub type Letter = u8;

pub const I: Letter = 0;
pub const X: Letter = 1;
pub const Z: Letter = 2;
pub const Y: Letter = 3;

pub fn letter_name(l: Letter) -> char {
    ['I', 'X', 'Z', 'Y'][l as usize & 3]
}

pub fn parse_pauli(s: &str) -> Result<Vec<Letter>, ConcatError> {
    s.chars()
        .map(|c| match c {
            'I' => Ok(I),
            'X' => Ok(X),
            'Y' => Ok(Y),
            'Z' => Ok(Z),
            other => Err(ConcatError::Code(format!(
                "`{other}` is not a Pauli letter"
            ))),
        })
        .collect()
}

pub fn format_pauli(p: &[Letter]) -> String {
    p.iter().map(|&l| letter_name(l)).collect()
}

#[inline]
fn anticommute_letters(a: Letter, b: Letter) -> bool {
    ((a & 1) & (b >> 1)) ^ ((a >> 1) & (b & 1)) == 1
}

/// Whether two Pauli strings anticommute.
pub fn anticommute(a: &[Letter], b: &[Letter]) -> bool {
    a.iter()
        .zip(b)
        .fold(false, |acc, (&x, &y)| acc ^ anticommute_letters(x, y))
}

/// Letterwise product, phases dropped.
pub fn multiply(a: &[Letter], b: &[Letter]) -> Vec<Letter> {
    a.iter().zip(b).map(|(&x, &y)| x ^ y).collect()
}

pub fn weight(p: &[Letter]) -> usize {
    p.iter().filter(|&&l| l != I).count()
}

/// A stabilizer code on `k` qubits with one logical qubit.
#[derive(Debug, Clone)]
pub struct StabilizerCode {
    k: usize,
    generators: Vec<Vec<Letter>>,
    logical_x: Vec<Letter>,
    logical_z: Vec<Letter>,
    /// Minimum-weight Pauli for each syndrome, found by enumeration.
    lookup: Vec<Vec<Letter>>,
    /// Packed child letters (2 bits each) to (syndrome, decoded letter).
    decode_table: Vec<(u32, Letter)>,
}

impl StabilizerCode {
    /// The perfect `[[5,1,3]]` code: cyclic shifts of `XZZXI`, logicals `X⊗5`, `Z⊗5`.
    pub fn five_qubit() -> Self {
        let gens = ["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"]
            .iter()
            .map(|g| parse_pauli(g).expect("valid letters"))
            .collect();
        Self::new(gens, vec![X; 5], vec![Z; 5]).expect("the five-qubit code is valid")
    }

    pub fn new(
        generators: Vec<Vec<Letter>>,
        logical_x: Vec<Letter>,
        logical_z: Vec<Letter>,
    ) -> Result<Self, ConcatError> {
        let k = logical_x.len();
        if k == 0 || k > 8 {
            return Err(ConcatError::Code(
                "block size must be between 1 and 8".into(),
            ));
        }
        if logical_z.len() != k || generators.iter().any(|g| g.len() != k) {
            return Err(ConcatError::Code("all strings must have length k".into()));
        }
        if generators.len() != k - 1 {
            return Err(ConcatError::Code(
                "need k − 1 generators for one logical qubit".into(),
            ));
        }
        for (a, g) in generators.iter().enumerate() {
            for h in &generators[a + 1..] {
                if anticommute(g, h) {
                    return Err(ConcatError::Code("generators must commute".into()));
                }
            }
            if anticommute(g, &logical_x) || anticommute(g, &logical_z) {
                return Err(ConcatError::Code(
                    "logicals must commute with generators".into(),
                ));
            }
        }
        if !anticommute(&logical_x, &logical_z) {
            return Err(ConcatError::Code("logical X and Z must anticommute".into()));
        }
        let mut code = Self {
            k,
            generators,
            logical_x,
            logical_z,
            lookup: Vec::new(),
            decode_table: Vec::new(),
        };
        code.build_lookup()?;
        code.build_decode_table();
        Ok(code)
    }

    fn build_lookup(&mut self) -> Result<(), ConcatError> {
        let n_syn = 1usize << self.generators.len();
        let mut lookup: Vec<Option<Vec<Letter>>> = vec![None; n_syn];
        let mut all: Vec<Vec<Letter>> = (0..1usize << (2 * self.k))
            .map(|packed| self.unpack(packed))
            .collect();
        // Stable sort keeps the enumeration order within each weight.
        all.sort_by_key(|p| weight(p));
        for p in all {
            let s = self.syndrome(&p) as usize;
            if lookup[s].is_none() {
                lookup[s] = Some(p);
            }
        }
        self.lookup = lookup
            .into_iter()
            .map(|r| r.ok_or_else(|| ConcatError::Code("generators are not independent".into())))
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    fn build_decode_table(&mut self) {
        self.decode_table = (0..1usize << (2 * self.k))
            .map(|packed| {
                let p = self.unpack(packed);
                let s = self.syndrome(&p);
                (s, self.decode(&p))
            })
            .collect();
    }

    fn unpack(&self, packed: usize) -> Vec<Letter> {
        (0..self.k)
            .map(|q| (packed >> (2 * q) & 3) as Letter)
            .collect()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn generators(&self) -> &[Vec<Letter>] {
        &self.generators
    }

    pub fn logical(&self, l: Letter) -> Vec<Letter> {
        let mut out = vec![I; self.k];
        if l & X != 0 {
            out = multiply(&out, &self.logical_x);
        }
        if l & Z != 0 {
            out = multiply(&out, &self.logical_z);
        }
        out
    }

    /// Bit `i` set when the string anticommutes with generator `i`.
    pub fn syndrome(&self, p: &[Letter]) -> u32 {
        self.generators
            .iter()
            .enumerate()
            .fold(0, |acc, (i, g)| acc | (anticommute(g, p) as u32) << i)
    }

    pub fn recovery(&self, syndrome: u32) -> &[Letter] {
        &self.lookup[syndrome as usize]
    }

    /// Logical class of a string, assumed to have trivial syndrome.
    pub fn logical_class(&self, p: &[Letter]) -> Letter {
        (anticommute(p, &self.logical_z) as Letter)
            | (anticommute(p, &self.logical_x) as Letter) << 1
    }

    /// Letter left after applying the lookup recovery for the string's syndrome.
    pub fn decode(&self, p: &[Letter]) -> Letter {
        let rec = self.recovery(self.syndrome(p));
        self.logical_class(&multiply(p, rec))
    }

    #[inline]
    fn decode_packed(&self, packed: usize) -> (u32, Letter) {
        self.decode_table[packed]
    }

    /// Syndrome of the single Pauli `l` on qubit `j`.
    pub fn single_syndrome(&self, j: usize, l: Letter) -> u32 {
        let mut p = vec![I; self.k];
        p[j] = l;
        self.syndrome(&p)
    }

    /// Smallest weight of a string with trivial syndrome and nontrivial class.
    pub fn distance(&self) -> usize {
        (0..1usize << (2 * self.k))
            .map(|packed| self.unpack(packed))
            .filter(|p| self.syndrome(p) == 0 && self.logical_class(p) != I)
            .map(|p| weight(&p))
            .min()
            .expect("logical operators exist")
    }
}

/// Address of a block as a list of child indices, innermost first.
///
/// The empty address is the root; `child(c)` prepends `c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BlockAddress(pub Vec<usize>);

impl BlockAddress {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn child(&self, c: usize) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(c);
        v.extend_from_slice(&self.0);
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(height, index)` in a depth-`m` hierarchy of block size `k`.
    pub fn locate(&self, k: usize, m: usize) -> Option<(usize, usize)> {
        if self.0.len() > m || self.0.iter().any(|&c| c >= k) {
            return None;
        }
        let index = self.0.iter().rev().fold(0, |acc, &c| acc * k + c);
        Some((m - self.0.len(), index))
    }
}

/// Set with O(1) insert, remove and uniform choice.
#[derive(Debug, Clone, Default)]
struct IndexedSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl IndexedSet {
    const ABSENT: u32 = u32::MAX;

    fn new(universe: usize) -> Self {
        Self {
            items: Vec::new(),
            pos: vec![Self::ABSENT; universe],
        }
    }

    fn assign(&mut self, i: usize, on: bool) {
        let present = self.pos[i] != Self::ABSENT;
        if on && !present {
            self.pos[i] = self.items.len() as u32;
            self.items.push(i as u32);
        } else if !on && present {
            let p = self.pos[i] as usize;
            let last = self.items.pop().expect("non-empty");
            if last as usize != i {
                self.items[p] = last;
                self.pos[last as usize] = p as u32;
            }
            self.pos[i] = Self::ABSENT;
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

/// Accumulated Pauli errors of a `k^M`-qubit concatenated memory with the
/// derived syndrome and decoded letter of every block.
#[derive(Debug, Clone)]
pub struct PauliFrame<'a> {
    code: &'a StabilizerCode,
    m: usize,
    /// `letters[h][i]`: decoded letter of block `i` at height `h`; physical letters at `h = 0`.
    letters: Vec<Vec<Letter>>,
    /// `syndromes[h][i]` for `h ≥ 1`; `syndromes[0]` is unused.
    syndromes: Vec<Vec<u32>>,
    has_error: Vec<IndexedSet>,
    pow: Vec<usize>,
}

impl<'a> PauliFrame<'a> {
    pub const MAX_LEVELS: usize = 8;

    pub fn new(code: &'a StabilizerCode, m: usize) -> Result<Self, ConcatError> {
        if m > Self::MAX_LEVELS {
            return Err(ConcatError::Param(format!(
                "at most {} levels are supported",
                Self::MAX_LEVELS
            )));
        }
        let k = code.k();
        let pow: Vec<usize> = (0..=m).map(|h| k.pow(h as u32)).collect();
        let letters = (0..=m).map(|h| vec![I; pow[m - h]]).collect();
        let syndromes = (0..=m)
            .map(|h| vec![0; if h == 0 { 0 } else { pow[m - h] }])
            .collect();
        let has_error = (0..=m)
            .map(|h| IndexedSet::new(if h == 0 { 0 } else { pow[m - h] }))
            .collect();
        Ok(Self {
            code,
            m,
            letters,
            syndromes,
            has_error,
            pow,
        })
    }

    pub fn levels(&self) -> usize {
        self.m
    }

    pub fn code(&self) -> &'a StabilizerCode {
        self.code
    }

    pub fn num_qubits(&self) -> usize {
        self.pow[self.m]
    }

    pub fn blocks_at(&self, height: usize) -> usize {
        self.pow[self.m - height]
    }

    pub fn physical(&self) -> &[Letter] {
        &self.letters[0]
    }

    pub fn letter(&self, height: usize, index: usize) -> Letter {
        self.letters[height][index]
    }

    pub fn syndrome(&self, height: usize, index: usize) -> u32 {
        self.syndromes[height][index]
    }

    pub fn has_error(&self, height: usize, index: usize) -> bool {
        self.syndromes[height][index] != 0
    }

    /// Number of blocks at `height ≥ 1` with a nontrivial syndrome.
    pub fn error_count(&self, height: usize) -> usize {
        self.has_error[height].len()
    }

    /// Whether a logical error at child `j` of this block would raise one here.
    pub fn enabled(&self, height: usize, index: usize, j: usize) -> bool {
        let s = self.syndromes[height][index];
        s != 0
            && [X, Y, Z]
                .iter()
                .all(|&l| s != self.code.single_syndrome(j, l))
    }

    /// Decoded letter of any block; the root's is the memory's logical state.
    pub fn decode_block(&self, address: &BlockAddress) -> Option<Letter> {
        let (h, i) = address.locate(self.code.k(), self.m)?;
        Some(self.letters[h][i])
    }

    pub fn root_letter(&self) -> Letter {
        self.letters[self.m][0]
    }

    fn recompute(&mut self, h: usize, i: usize) -> Letter {
        let k = self.code.k();
        let children = &self.letters[h - 1][i * k..i * k + k];
        let packed = children
            .iter()
            .enumerate()
            .fold(0usize, |acc, (q, &l)| acc | (l as usize) << (2 * q));
        let (s, l) = self.code.decode_packed(packed);
        self.syndromes[h][i] = s;
        self.has_error[h].assign(i, s != 0);
        self.letters[h][i] = l;
        l
    }

    /// Recomputes the ancestors of block `(h, i)`, stopping once a decoded
    /// letter is unchanged.
    fn propagate_up(&mut self, mut h: usize, mut i: usize) {
        let k = self.code.k();
        while h < self.m {
            h += 1;
            i /= k;
            let old = self.letters[h][i];
            if self.recompute(h, i) == old {
                break;
            }
        }
    }

    /// Multiplies physical qubit `leaf` by `pauli`.
    pub fn apply_physical(&mut self, leaf: usize, pauli: Letter) {
        self.letters[0][leaf] ^= pauli;
        self.propagate_up(0, leaf);
    }

    /// Applies the logical letter `l` of block `(h, i)` as a physical string.
    fn apply_logical(&mut self, h: usize, i: usize, l: Letter) {
        if h == 0 {
            self.letters[0][i] ^= l;
            return;
        }
        let k = self.code.k();
        let string = self.code.logical(l);
        for (c, &lc) in string.iter().enumerate() {
            if lc != I {
                self.apply_logical(h - 1, i * k + c, lc);
            }
        }
        for c in 0..k {
            self.recompute_subtree(h - 1, i * k + c);
        }
        self.recompute(h, i);
    }

    fn recompute_subtree(&mut self, h: usize, i: usize) {
        if h == 0 {
            return;
        }
        let k = self.code.k();
        for c in 0..k {
            self.recompute_subtree(h - 1, i * k + c);
        }
        self.recompute(h, i);
    }

    /// Lookup recovery of block `(h, i)` from its current syndrome, applied
    /// as a logical letter on one child. A trivial syndrome is a no-op.
    pub fn recovery_event(&mut self, h: usize, i: usize) {
        assert!(h >= 1 && h <= self.m, "recovery needs an encoded block");
        let s = self.syndromes[h][i];
        if s == 0 {
            return;
        }
        let k = self.code.k();
        let rec = self.code.recovery(s).to_vec();
        for (j, &l) in rec.iter().enumerate() {
            if l != I {
                self.apply_logical(h - 1, i * k + j, l);
            }
        }
        self.recompute(h, i);
        self.propagate_up(h, i);
    }

    pub fn recovery_at(&mut self, address: &BlockAddress) -> Result<(), ConcatError> {
        match address.locate(self.code.k(), self.m) {
            Some((h, i)) if h >= 1 => {
                self.recovery_event(h, i);
                Ok(())
            }
            _ => Err(ConcatError::Param(
                "recovery needs an encoded block address".into(),
            )),
        }
    }

    /// Corrects every block bottom-up, leaving all syndromes trivial.
    pub fn full_recovery(&mut self) {
        for h in 1..=self.m {
            for i in 0..self.blocks_at(h) {
                self.recovery_event(h, i);
            }
        }
    }

    /// Rebuilds every derived quantity from the physical letters and compares.
    pub fn is_consistent(&self) -> bool {
        let mut fresh = Self::new(self.code, self.m).expect("same levels");
        fresh.letters[0] = self.letters[0].clone();
        for h in 1..=self.m {
            for i in 0..fresh.blocks_at(h) {
                fresh.recompute(h, i);
            }
        }
        let sets_match = (1..=self.m).all(|h| {
            let mut a = self.has_error[h].items.clone();
            let mut b = fresh.has_error[h].items.clone();
            a.sort_unstable();
            b.sort_unstable();
            a == b
        });
        fresh.letters == self.letters && fresh.syndromes == self.syndromes && sets_match
    }

    /// Product of `Enabled` along the chain from physical qubit `leaf` up to
    /// height `top`: at each height `h`, whether the enclosing block is enabled
    /// by the child containing `leaf`.
    pub fn enabled_chain(&self, leaf: usize, top: usize) -> Vec<bool> {
        let k = self.code.k();
        (1..=top)
            .map(|h| {
                let child = leaf / self.pow[h - 1];
                self.enabled(h, child / k, child % k)
            })
            .collect()
    }
}

/// `Γ* = δ²Γ/k²`, evaluated as `(δ/k)²·Γ`.
pub fn threshold(k: usize, delta: f64, gamma: f64) -> f64 {
    let r = delta / k as f64;
    r * r * gamma
}

/// Closed-form bound on `⟨HasError⟩` at depth `n`:
/// `(Γ_noise k²/(Γ δ²))^(2^(n−1)) · δ/k`. May exceed 1 (vacuous).
pub fn p_n_bound(n: u32, gamma_noise: f64, gamma_correct: f64, delta: f64, k: usize) -> f64 {
    assert!(n >= 1, "depth starts at 1");
    let kf = k as f64;
    let base = gamma_noise * kf * kf / (gamma_correct * delta * delta);
    base.powi(1 << (n - 1)) * delta / kf
}

/// The same bound from its recursive definition with per-level rates
/// `Γ_j = Γ δ^j`: `p₁ = kΓ_noise/Γ₁`, `p_{n+1} = k^{n+1} Γ_noise ∏ p_j / Γ_{n+1}`.
pub fn p_n_recursive(
    n: u32,
    gamma_noise: f64,
    gamma_correct: f64,
    delta: f64,
    k: usize,
) -> Vec<f64> {
    let kf = k as f64;
    let rate = |j: u32| gamma_correct * delta.powi(j as i32);
    let mut p = Vec::with_capacity(n as usize);
    let mut prod = 1.0;
    for j in 1..=n {
        let pj = kf.powi(j as i32) * gamma_noise * prod / rate(j);
        prod *= pj;
        p.push(pj);
    }
    p
}

/// Clamps a probability bound to 1; the flag is set when it was vacuous.
pub fn clamp_bound(p: f64) -> (f64, bool) {
    if p > 1.0 {
        (1.0, true)
    } else {
        (p, false)
    }
}

/// Upper bound on the top-level logical error rate:
/// `Γε · δ^M · (Γε/Γε*)^(2^M − 1)`.
pub fn lifetime_bound(m: u32, gamma_noise: f64, gamma_correct: f64, delta: f64, k: usize) -> f64 {
    if m == 0 {
        return gamma_noise;
    }
    let ratio = gamma_noise / threshold(k, delta, gamma_correct);
    gamma_noise * delta.powi(m as i32) * ratio.powi((1i32 << m) - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcatParams {
    pub m: usize,
    pub gamma_correct: f64,
    pub delta: f64,
    /// Rates of X, Y and Z on each physical qubit.
    pub noise: [f64; 3],
    pub check_interval: f64,
    pub t_max: f64,
}

impl ConcatParams {
    /// Uniform Pauli noise of total rate `gamma_noise` per qubit; checks every `1/Γ`.
    pub fn new(m: usize, gamma_correct: f64, delta: f64, gamma_noise: f64, t_max: f64) -> Self {
        Self {
            m,
            gamma_correct,
            delta,
            noise: [gamma_noise / 3.0; 3],
            check_interval: 1.0 / gamma_correct,
            t_max,
        }
    }

    pub fn gamma_noise(&self) -> f64 {
        self.noise.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConcatError> {
        let bad = |m: &str| Err(ConcatError::Param(m.to_string()));
        if self.m > PauliFrame::MAX_LEVELS {
            return bad("too many levels");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta must lie in (0, 1]");
        }
        if !(self.gamma_correct >= 0.0 && self.gamma_correct.is_finite()) {
            return bad("gamma_correct must be finite and non-negative");
        }
        if self.noise.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("noise rates must be finite and non-negative");
        }
        if !(self.check_interval > 0.0 && self.check_interval.is_finite()) {
            return bad("check_interval must be positive");
        }
        if self.t_max.is_nan() || self.t_max < 0.0 {
            return bad("t_max must be non-negative");
        }
        Ok(())
    }

    fn recovery_rate(&self, h: usize) -> f64 {
        self.gamma_correct * self.delta.powi(h as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcatOutcome {
    pub failure_time: Option<f64>,
    /// Time simulated: the failure time, or `t_max` when censored.
    pub elapsed: f64,
    /// Per height `h = 1..=M`: time integral of the fraction of blocks with an error.
    pub has_error_integral: Vec<f64>,
    pub n_noise_events: u64,
    pub n_recovery_events: u64,
}

impl ConcatOutcome {
    pub fn has_error_average(&self, height: usize) -> f64 {
        self.has_error_integral[height - 1] / self.elapsed
    }
}

impl Censorable for ConcatOutcome {
    fn failure_time(&self) -> Option<f64> {
        self.failure_time
    }
}

fn pick_pauli<R: Rng + ?Sized>(noise: &[f64; 3], rng: &mut R) -> Letter {
    let total: f64 = noise.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&l, &r) in [X, Y, Z].iter().zip(noise) {
        if u < r {
            return l;
        }
        u -= r;
    }
    [X, Y, Z]
        .into_iter()
        .zip(noise)
        .rev()
        .find(|(_, &r)| r > 0.0)
        .map(|(l, _)| l)
        .expect("positive noise rate")
}

const CLASS_NAMES: [&str; PauliFrame::MAX_LEVELS + 1] = [
    "noise", "level 1", "level 2", "level 3", "level 4", "level 5", "level 6", "level 7", "level 8",
];

/// How a trial's recoveries are organised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Recovery {
    /// Every encoded block corrects itself at rate `Γδ^h`.
    LevelWise,
    /// A single full decode of the whole memory at rate `Γ`.
    Monolithic,
}

fn simulate<R: Rng + ?Sized, S: FnMut(f64, &PauliFrame<'_>)>(
    code: &StabilizerCode,
    params: &ConcatParams,
    recovery: Recovery,
    cadence: Option<Cadence>,
    rng: &mut R,
    mut sample: S,
) -> ConcatOutcome {
    let mut frame = PauliFrame::new(code, params.m).expect("validated level count");
    let m = params.m;
    let qubits = frame.num_qubits();
    let classes = match recovery {
        Recovery::LevelWise => m + 1,
        Recovery::Monolithic => 2,
    };
    let mut rates = RateTable::new(&CLASS_NAMES[..classes]);
    rates.set(0, qubits as f64 * params.gamma_noise());
    let blocks: Vec<f64> = (1..=m).map(|h| frame.blocks_at(h) as f64).collect();
    let mut out = ConcatOutcome {
        failure_time: None,
        elapsed: params.t_max,
        has_error_integral: vec![0.0; m],
        n_noise_events: 0,
        n_recovery_events: 0,
    };
    let mut t = 0.0;
    loop {
        match recovery {
            Recovery::LevelWise => {
                for h in 1..=m {
                    rates.set(h, frame.error_count(h) as f64 * params.recovery_rate(h));
                }
            }
            Recovery::Monolithic => {
                let dirty = (1..=m).any(|h| frame.error_count(h) > 0);
                rates.set(1, if dirty { params.gamma_correct } else { 0.0 });
            }
        }
        let (t_next, class) = match next_event(&rates, rng) {
            Step::Event { wait, class } => (t + wait, Some(class)),
            Step::Stasis => (f64::INFINITY, None),
        };
        sample(t_next.min(params.t_max), &frame);
        let mut t_end = t_next.min(params.t_max);
        if let Some(cadence) = cadence {
            let check = cadence.next_check_after(t);
            if check < t_next && check <= params.t_max && frame.root_letter() != I {
                out.failure_time = Some(check);
                t_end = check;
            }
        }
        for h in 1..=m {
            out.has_error_integral[h - 1] +=
                (t_end - t) * frame.error_count(h) as f64 / blocks[h - 1];
        }
        if out.failure_time.is_some() {
            out.elapsed = t_end;
            return out;
        }
        if t_next > params.t_max {
            return out;
        }
        t = t_next;
        match class {
            Some(0) => {
                out.n_noise_events += 1;
                let leaf = rng.random_range(0..qubits);
                let p = pick_pauli(&params.noise, rng);
                frame.apply_physical(leaf, p);
            }
            Some(c) => {
                out.n_recovery_events += 1;
                match recovery {
                    Recovery::LevelWise => {
                        let set = &frame.has_error[c];
                        let i = set.items[rng.random_range(0..set.len())] as usize;
                        frame.recovery_event(c, i);
                    }
                    Recovery::Monolithic => frame.full_recovery(),
                }
            }
            None => unreachable!("stasis has an infinite wait"),
        }
    }
}

/// Noise and level-wise recovery from a clean code state until the root
/// decodes to a nontrivial letter at a check, or `t_max`.
pub fn mc_trial<R: Rng + ?Sized>(
    code: &StabilizerCode,
    params: &ConcatParams,
    rng: &mut R,
) -> ConcatOutcome {
    let cadence = Cadence::Periodic(params.check_interval);
    simulate(
        code,
        params,
        Recovery::LevelWise,
        Some(cadence),
        rng,
        |_, _| {},
    )
}

/// Same noise, but the only recovery is one full decode of the memory at rate `Γ`.
pub fn single_jump_trial<R: Rng + ?Sized>(
    code: &StabilizerCode,
    params: &ConcatParams,
    rng: &mut R,
) -> ConcatOutcome {
    let cadence = Cadence::Periodic(params.check_interval);
    simulate(
        code,
        params,
        Recovery::Monolithic,
        Some(cadence),
        rng,
        |_, _| {},
    )
}

/// Per-sample `Enabled` statistics along the chains of every physical qubit
/// up to height `top`, taken from the state at time `t_sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnabledSample {
    /// Per height: fraction of physical qubits whose chain is enabled there.
    pub per_level: Vec<f64>,
    /// Fraction of physical qubits enabled at every height of the chain.
    pub joint: f64,
}

pub fn enabled_sample<R: Rng + ?Sized>(
    code: &StabilizerCode,
    params: &ConcatParams,
    top: usize,
    t_sample: f64,
    rng: &mut R,
) -> EnabledSample {
    let mut p = *params;
    p.t_max = t_sample;
    let mut snapshot: Option<EnabledSample> = None;
    simulate(code, &p, Recovery::LevelWise, None, rng, |t_next, frame| {
        if t_next >= t_sample && snapshot.is_none() {
            let n = frame.num_qubits();
            let mut per_level = vec![0.0; top];
            let mut joint = 0.0;
            for leaf in 0..n {
                let chain = frame.enabled_chain(leaf, top);
                for (acc, &e) in per_level.iter_mut().zip(&chain) {
                    *acc += e as u8 as f64;
                }
                joint += chain.iter().all(|&e| e) as u8 as f64;
            }
            per_level.iter_mut().for_each(|x| *x /= n as f64);
            snapshot = Some(EnabledSample {
                per_level,
                joint: joint / n as f64,
            });
        }
    });
    snapshot.expect("the state at t_sample is always visited")
}

/// `⟨∏ Enabled⟩ − ∏⟨Enabled⟩` with a delta-method standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub joint: f64,
    pub product: f64,
    pub per_level: Vec<f64>,
    pub difference: f64,
    pub std_err: f64,
    pub n_samples: usize,
}

pub fn factorization(samples: &[EnabledSample]) -> Factorization {
    let n = samples.len();
    assert!(n >= 2, "need at least two samples");
    let levels = samples[0].per_level.len();
    let dims = levels + 1;
    let row = |s: &EnabledSample| -> Vec<f64> {
        let mut r = s.per_level.clone();
        r.push(s.joint);
        r
    };
    let rows: Vec<Vec<f64>> = samples.iter().map(row).collect();
    let means: Vec<f64> = (0..dims)
        .map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n as f64)
        .collect();
    let product: f64 = means[..levels].iter().product();
    let joint = means[levels];
    let mut grad = vec![0.0; dims];
    for (h, g) in grad.iter_mut().enumerate().take(levels) {
        *g = -(0..levels)
            .filter(|&o| o != h)
            .map(|o| means[o])
            .product::<f64>();
    }
    grad[levels] = 1.0;
    let mut var = 0.0;
    for a in 0..dims {
        for b in 0..dims {
            let cov = rows
                .iter()
                .map(|r| (r[a] - means[a]) * (r[b] - means[b]))
                .sum::<f64>()
                / (n - 1) as f64;
            var += grad[a] * grad[b] * cov;
        }
    }
    Factorization {
        joint,
        product,
        per_level: means[..levels].to_vec(),
        difference: joint - product,
        std_err: (var.max(0.0) / n as f64).sqrt(),
        n_samples: n,
    }
}

/// Pooled results of many [`mc_trial`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatSummary {
    pub n_trials: usize,
    pub n_failures: usize,
    pub total_time: f64,
    /// Failures per unit time, with `rate/√failures` as its error.
    pub failure_rate: f64,
    pub failure_rate_err: f64,
    /// Per height: pooled time-average of `HasError` and its ratio-estimator error.
    pub has_error: Vec<(f64, f64)>,
    pub mean_lifetime: Option<f64>,
    pub lifetime_err: Option<f64>,
}

pub fn summarize(outcomes: &[ConcatOutcome]) -> ConcatSummary {
    let n = outcomes.len();
    let total_time: f64 = outcomes.iter().map(|o| o.elapsed).sum();
    let n_failures = outcomes.iter().filter(|o| o.failure_time.is_some()).count();
    let failure_rate = n_failures as f64 / total_time;
    let failure_rate_err = if n_failures > 0 {
        failure_rate / (n_failures as f64).sqrt()
    } else {
        // One-event scale when nothing failed.
        1.0 / total_time
    };
    let m = outcomes.first().map_or(0, |o| o.has_error_integral.len());
    let mean_time = total_time / n as f64;
    let has_error = (0..m)
        .map(|h| {
            let r = outcomes
                .iter()
                .map(|o| o.has_error_integral[h])
                .sum::<f64>()
                / total_time;
            let ss: f64 = outcomes
                .iter()
                .map(|o| (o.has_error_integral[h] - r * o.elapsed).powi(2))
                .sum();
            let err = if n > 1 {
                (ss / ((n - 1) as f64 * n as f64)).sqrt() / mean_time
            } else {
                f64::NAN
            };
            (r, err)
        })
        .collect();
    let lifetimes: Vec<f64> = outcomes.iter().filter_map(|o| o.failure_time).collect();
    let (mean_lifetime, lifetime_err) = mean_and_stderr(&lifetimes);
    ConcatSummary {
        n_trials: n,
        n_failures,
        total_time,
        failure_rate,
        failure_rate_err,
        has_error,
        mean_lifetime,
        lifetime_err,
    }
}

/// Runs `trials` level-wise trials of the five-qubit hierarchy.
pub fn mc_experiment(
    code: &StabilizerCode,
    params: &ConcatParams,
    trials: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<ConcatSummary, ConcatError> {
    params.validate()?;
    let outcomes = run_trials(trials, seed, parallelism, |_, rng| {
        mc_trial(code, params, rng)
    })?;
    Ok(summarize(&outcomes))
}

pub fn single_jump_experiment(
    code: &StabilizerCode,
    params: &ConcatParams,
    trials: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<ConcatSummary, ConcatError> {
    params.validate()?;
    let outcomes = run_trials(trials, seed, parallelism, |_, rng| {
        single_jump_trial(code, params, rng)
    })?;
    Ok(summarize(&outcomes))
}

pub fn factorization_experiment(
    code: &StabilizerCode,
    params: &ConcatParams,
    top: usize,
    t_sample: f64,
    samples: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Factorization, ConcatError> {
    params.validate()?;
    if top == 0 || top > params.m {
        return Err(ConcatError::Param("chain top must lie in 1..=M".into()));
    }
    let s = run_trials(samples, seed, parallelism, |_, rng| {
        enabled_sample(code, params, top, t_sample, rng)
    })?;
    Ok(factorization(&s))
}
