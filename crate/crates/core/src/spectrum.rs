//! Orbit balls and closed-geodesic pair spectra in `H^2 x H^2`.
//!
//! Both enumerations walk freely reduced (and, in genus 2, Dehn-reduced) words
//! and prune a branch once the prefix displacement of the basepoint `o = i`
//! leaves the search ball. Pair spectra are self-audited: the slack above the
//! cutoff and the word-length horizon are grown until no found class sits near
//! either bound.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moebius::{length_from_trace, MoebiusElement, TRACE_TOL};
use crate::reps::{probe_representation, MarkedRepresentation, RepError};
use crate::words::{
    canonical_class, enumerate_classes, is_cyclically_dehn_reduced, ConjClass, GroupWord, Letter, Presentation,
    PresentationMode, RunState,
};

/// Entrywise tolerance identifying two group elements in the orbit ball.
pub const ELEMENT_TOL: f64 = 1e-7;
/// Tolerance on each of the three fingerprint lengths when merging classes.
pub const CLASS_TOL: f64 = 1e-6;
/// Padding applied to the empirical dilations when certifying count regions.
pub const DILATION_PAD: f64 = 1.05;
/// Word length of the classes sampled for the length-per-letter constant.
pub const C_MIN_DEPTH: usize = 6;
/// Spectrum file header.
pub const MSPEC_HEADER: &str = "MSPEC/1";

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("budget exceeded: more than {cap} {what}")]
    BudgetExceeded { cap: usize, what: &'static str },
    #[error("horizon unsound after {attempts} attempts: {detail}")]
    HorizonUnsound { attempts: usize, detail: String },
    #[error("({x}, {y}, T={t}) exceeds the certified region (T <= {limit})")]
    UncertifiedRegion { x: f64, y: f64, t: f64, limit: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("class {word} is not hyperbolic (|trace| = {trace})")]
    NotHyperbolic { word: String, trace: f64 },
    #[error("spectrum file: {0}")]
    Format(String),
    #[error("spectrum file version: {0}")]
    Version(String),
    #[error(transparent)]
    Rep(#[from] RepError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type M2 = [f64; 4];

fn mul(x: &M2, y: &M2) -> M2 {
    [
        x[0] * y[0] + x[1] * y[2],
        x[0] * y[1] + x[1] * y[3],
        x[2] * y[0] + x[3] * y[2],
        x[2] * y[1] + x[3] * y[3],
    ]
}

/// `d(m i, i)`.
fn disp(m: &M2) -> f64 {
    (0.5 * (m[0] * m[0] + m[1] * m[1] + m[2] * m[2] + m[3] * m[3]))
        .max(1.0)
        .acosh()
}

fn abs_trace(m: &M2) -> f64 {
    (m[0] + m[3]).abs()
}

/// Images of every letter (by letter code) under both representations.
fn letter_pairs(r1: &MarkedRepresentation, r2: &MarkedRepresentation, p: &Presentation) -> Vec<(M2, M2)> {
    p.letters()
        .map(|l| (r1.letter_image(l).entries(), r2.letter_image(l).entries()))
        .collect()
}

/// Letter images of one representation as words over its base generators.
struct Marking {
    /// By letter code; `None` when the marking is the identity.
    words: Option<Vec<Vec<Letter>>>,
    /// Base generator matrices by letter code.
    base: Vec<M2>,
}

impl Marking {
    fn new(r: &MarkedRepresentation, p: &Presentation) -> Marking {
        let base = p
            .letters()
            .map(|l| {
                let g = r.base_images()[l.generator()];
                if l.is_inverse() { g.inverse() } else { g }.entries()
            })
            .collect();
        let words = r.marking().map(|_| {
            p.letters()
                .map(|l| r.substitute(&GroupWord::new(vec![l])).letters().to_vec())
                .collect()
        });
        Marking { words, base }
    }

    /// Appends `l` to the reduced substitution `sub` with product `m`;
    /// recomputes the product from scratch after a cancellation.
    fn extend(&self, sub: &[Letter], m: &M2, l: Letter) -> (Vec<Letter>, M2) {
        let Some(words) = &self.words else {
            // identity marking: the substitution is the word itself, not needed
            return (Vec::new(), mul(m, &self.base[l.code() as usize]));
        };
        let img = &words[l.code() as usize];
        let mut out = sub.to_vec();
        let mut k = 0;
        while k < img.len() && out.last() == Some(&img[k].inverse()) {
            out.pop();
            k += 1;
        }
        let start = if k == 0 { *m } else { self.product(&out) };
        let prod = img[k..]
            .iter()
            .fold(start, |acc, x| mul(&acc, &self.base[x.code() as usize]));
        out.extend_from_slice(&img[k..]);
        (out, prod)
    }

    fn product(&self, letters: &[Letter]) -> M2 {
        letters
            .iter()
            .fold([1.0, 0.0, 0.0, 1.0], |acc, l| mul(&acc, &self.base[l.code() as usize]))
    }
}

/// Running product along the freely reduced substitution of a word, with
/// every prefix product kept so cancellations restore exact earlier values.
struct Tracker<'a> {
    marking: &'a Marking,
    letters: Vec<Letter>,
    prefixes: Vec<M2>,
}

/// What one [`Tracker::push`] changed.
struct Undo {
    pushed: usize,
    popped: Vec<(Letter, M2)>,
}

impl<'a> Tracker<'a> {
    fn new(marking: &'a Marking) -> Self {
        Tracker {
            marking,
            letters: Vec::new(),
            prefixes: Vec::new(),
        }
    }

    fn current(&self) -> M2 {
        self.prefixes.last().copied().unwrap_or([1.0, 0.0, 0.0, 1.0])
    }

    fn push_base(&mut self, l: Letter) {
        let m = mul(&self.current(), &self.marking.base[l.code() as usize]);
        self.letters.push(l);
        self.prefixes.push(m);
    }

    fn push(&mut self, l: Letter) -> Undo {
        let Some(words) = &self.marking.words else {
            self.push_base(l);
            return Undo {
                pushed: 1,
                popped: Vec::new(),
            };
        };
        let img = &words[l.code() as usize];
        let mut k = 0;
        let mut popped = Vec::new();
        while k < img.len() && self.letters.last() == Some(&img[k].inverse()) {
            let x = self.letters.pop().expect("checked");
            let m = self.prefixes.pop().expect("parallel stacks");
            popped.push((x, m));
            k += 1;
        }
        for &x in &img[k..] {
            self.push_base(x);
        }
        Undo {
            pushed: img.len() - k,
            popped,
        }
    }

    fn undo(&mut self, u: Undo) {
        let n = self.letters.len() - u.pushed;
        self.letters.truncate(n);
        self.prefixes.truncate(n);
        for (x, m) in u.popped.into_iter().rev() {
            self.letters.push(x);
            self.prefixes.push(m);
        }
    }

    /// `|trace|` of the class: the product along the cyclic reduction.
    fn class_trace(&self) -> f64 {
        let n = self.letters.len();
        let mut k = 0;
        while 2 * k + 1 < n && self.letters[k] == self.letters[n - 1 - k].inverse() {
            k += 1;
        }
        if k == 0 {
            return abs_trace(&self.current());
        }
        abs_trace(&self.marking.product(&self.letters[k..n - k]))
    }
}

fn check_pair(r1: &MarkedRepresentation, r2: &MarkedRepresentation) -> Result<Presentation, SpectrumError> {
    if r1.mode() != r2.mode() {
        return Err(SpectrumError::InvalidInput(format!(
            "representations have different presentations ({} vs {})",
            r1.mode(),
            r2.mode()
        )));
    }
    Ok(r1.presentation().clone())
}

// ---------------------------------------------------------------------------
// Orbit ball

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitEntry {
    /// Shortlex-least word reaching the element during the search.
    pub word: GroupWord,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Clone, Debug)]
pub struct OrbitBall {
    reps: [MarkedRepresentation; 2],
    radius: f64,
    weights: (f64, f64),
    entries: Vec<OrbitEntry>,
    /// Largest entrywise discrepancy between two paths identified as one element.
    pub merge_discrepancy: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct OrbitOptions {
    /// Maximum number of elements kept (recorded or in the pruning margin).
    pub max_elements: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            max_elements: 20_000_000,
        }
    }
}

fn element_key(m1: &M2, m2: &M2) -> [i64; 8] {
    let mut key = [0i64; 8];
    for (k, m) in [m1, m2].into_iter().enumerate() {
        let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let lead = m.iter().find(|v| v.abs() > 1e-12 * scale).copied().unwrap_or(1.0);
        let sign = lead.signum();
        for i in 0..4 {
            key[4 * k + i] = (sign * m[i] / ELEMENT_TOL).round() as i64;
        }
    }
    key
}

pub fn orbit_ball(
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    radius: f64,
    weights: (f64, f64),
) -> Result<OrbitBall, SpectrumError> {
    orbit_ball_with(r1, r2, radius, weights, &OrbitOptions::default())
}

/// Breadth-first search by word length. A node is expanded while its weighted
/// displacement is within `radius` plus the largest one-step displacement.
pub fn orbit_ball_with(
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    radius: f64,
    weights: (f64, f64),
    opts: &OrbitOptions,
) -> Result<OrbitBall, SpectrumError> {
    let p = check_pair(r1, r2)?;
    let (x, y) = weights;
    if !(x >= 0.0 && y >= 0.0 && x + y > 0.0) || !radius.is_finite() || radius < 0.0 {
        return Err(SpectrumError::InvalidInput(format!(
            "weights ({x}, {y}) and radius {radius}"
        )));
    }
    let gens = letter_pairs(r1, r2, &p);
    let marks = [Marking::new(r1, &p), Marking::new(r2, &p)];
    let weigh = |m1: &M2, m2: &M2| x * disp(m1) + y * disp(m2);
    let step = gens.iter().map(|(g1, g2)| weigh(g1, g2)).fold(0.0, f64::max);
    let limit = radius + step;

    struct Node {
        word: Vec<Letter>,
        /// Reduced substitutions into each base group.
        subs: [Vec<Letter>; 2],
        m1: M2,
        m2: M2,
        state: RunState,
    }
    let id = [1.0, 0.0, 0.0, 1.0];
    let mut seen: HashMap<[i64; 8], (M2, M2)> = HashMap::new();
    seen.insert(element_key(&id, &id), (id, id));
    let mut entries = vec![OrbitEntry {
        word: GroupWord::empty(),
        d1: 0.0,
        d2: 0.0,
    }];
    let mut frontier = vec![Node {
        word: Vec::new(),
        subs: [Vec::new(), Vec::new()],
        m1: id,
        m2: id,
        state: RunState::START,
    }];
    let mut merge_discrepancy = 0.0f64;
    while !frontier.is_empty() {
        let children: Vec<Vec<Node>> = frontier
            .par_iter()
            .map(|node| {
                let mut out = Vec::new();
                for l in p.letters() {
                    let state = match node.word.last() {
                        None => RunState::START,
                        Some(&last) => match node.state.extend(last, l, &p) {
                            Some(s) => s,
                            None => continue,
                        },
                    };
                    let (s1, m1) = marks[0].extend(&node.subs[0], &node.m1, l);
                    let (s2, m2) = marks[1].extend(&node.subs[1], &node.m2, l);
                    if weigh(&m1, &m2) > limit {
                        continue;
                    }
                    let mut word = node.word.clone();
                    word.push(l);
                    out.push(Node {
                        word,
                        subs: [s1, s2],
                        m1,
                        m2,
                        state,
                    });
                }
                out
            })
            .collect();
        let mut next = Vec::new();
        for node in children.into_iter().flatten() {
            let key = element_key(&node.m1, &node.m2);
            if let Some((s1, s2)) = seen.get(&key) {
                let gap = entry_gap(s1, &node.m1).max(entry_gap(s2, &node.m2));
                merge_discrepancy = merge_discrepancy.max(gap);
                continue;
            }
            seen.insert(key, (node.m1, node.m2));
            if seen.len() > opts.max_elements {
                return Err(SpectrumError::BudgetExceeded {
                    cap: opts.max_elements,
                    what: "orbit elements",
                });
            }
            let (d1, d2) = (disp(&node.m1), disp(&node.m2));
            if x * d1 + y * d2 <= radius {
                entries.push(OrbitEntry {
                    word: GroupWord::new(node.word.clone()),
                    d1,
                    d2,
                });
            }
            next.push(node);
        }
        frontier = next;
    }
    Ok(OrbitBall {
        reps: [r1.clone(), r2.clone()],
        radius,
        weights,
        entries,
        merge_discrepancy,
    })
}

/// Entrywise distance up to the common sign.
fn entry_gap(a: &M2, b: &M2) -> f64 {
    let plus = (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
    let minus = (0..4).map(|i| (a[i] + b[i]).abs()).fold(0.0, f64::max);
    plus.min(minus)
}

impl OrbitBall {
    pub fn reps(&self) -> &[MarkedRepresentation; 2] {
        &self.reps
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn weights(&self) -> (f64, f64) {
        self.weights
    }

    pub fn entries(&self) -> &[OrbitEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest `T` for which counts with weights `(x', y')` are complete:
    /// `{x'd1 + y'd2 <= T}` lies in `{x d1 + y d2 <= R}` on the positive quadrant.
    pub fn certified_limit(&self, x: f64, y: f64) -> f64 {
        let (bx, by) = self.weights;
        let ratio = |b: f64, q: f64| {
            if b == 0.0 {
                0.0
            } else if q <= 0.0 {
                f64::INFINITY
            } else {
                b / q
            }
        };
        let worst = ratio(bx, x).max(ratio(by, y));
        if worst == 0.0 {
            f64::INFINITY
        } else {
            self.radius / worst
        }
    }

    pub fn count_weighted(&self, x: f64, y: f64, t: f64) -> Result<usize, SpectrumError> {
        let limit = self.certified_limit(x, y);
        if t > limit * (1.0 + 1e-12) {
            return Err(SpectrumError::UncertifiedRegion { x, y, t, limit });
        }
        Ok(self.entries.iter().filter(|e| x * e.d1 + y * e.d2 <= t).count())
    }
}

// ---------------------------------------------------------------------------
// Pair spectrum

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub class: ConjClass,
    pub l1: f64,
    pub l2: f64,
}

impl SpectrumEntry {
    pub fn ratio(&self) -> f64 {
        self.l2 / self.l1
    }
}

/// Bookkeeping of the completeness audits.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumAudit {
    /// Allowance of prefix displacement above the cutoff used in the final pass.
    pub slack: f64,
    /// Largest required slack over found classes (best rotation).
    pub max_excess: f64,
    /// Empirical minimal pair length per letter.
    pub c_min: f64,
    /// Reruns triggered by the audits.
    pub reruns: usize,
    /// Candidate classes merged into a conjugate one.
    pub merged: usize,
    /// Fingerprint collisions between non-conjugate classes (kept apart).
    pub twins: usize,
    /// Search nodes visited in the final pass.
    pub nodes: usize,
}

#[derive(Clone, Debug)]
pub struct PairSpectrum {
    reps: [MarkedRepresentation; 2],
    weights: (f64, f64),
    cutoff: f64,
    entries: Vec<SpectrumEntry>,
    completeness_bound: usize,
    audit: SpectrumAudit,
}

impl PartialEq for PairSpectrum {
    fn eq(&self, other: &Self) -> bool {
        self.cutoff == other.cutoff
            && self.weights == other.weights
            && self.entries == other.entries
            && self.completeness_bound == other.completeness_bound
            && self.audit == other.audit
            && self.reps[0].to_descriptor() == other.reps[0].to_descriptor()
            && self.reps[1].to_descriptor() == other.reps[1].to_descriptor()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SpectrumOptions {
    /// Initial prefix slack; defaults to the largest one-letter pair displacement.
    pub slack: Option<f64>,
    /// An audit fails when a found class needs more than `slack - margin`.
    pub margin: f64,
    pub max_reruns: usize,
    pub max_nodes: usize,
    pub max_classes: usize,
    /// Merge classes whose three fingerprint lengths agree (genus 2 only).
    pub merge: bool,
    /// Enumerated region is `{wx l1 + wy l2 <= T}`; prefixes are pruned on
    /// `wx d1 + wy d2`.
    pub weights: (f64, f64),
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            slack: None,
            margin: 1.0,
            max_reruns: 6,
            max_nodes: 2_000_000_000,
            max_classes: 5_000_000,
            merge: true,
            weights: (1.0, 1.0),
        }
    }
}

pub fn class_spectrum(
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    t: f64,
) -> Result<PairSpectrum, SpectrumError> {
    class_spectrum_with(r1, r2, t, &SpectrumOptions::default())
}

/// Minimal pair length per letter over canonical classes of length `<= depth`.
pub fn length_per_letter(
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    depth: usize,
) -> Result<f64, SpectrumError> {
    weighted_length_per_letter(r1, r2, depth, (1.0, 1.0))
}

fn weighted_length_per_letter(
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    depth: usize,
    (wx, wy): (f64, f64),
) -> Result<f64, SpectrumError> {
    let p = check_pair(r1, r2)?;
    let classes: Vec<ConjClass> = enumerate_classes(&p, depth).collect();
    let ratios: Vec<f64> = classes
        .par_iter()
        .map(|c| {
            let (a, b) = lengths_of(r1, r2, c.canonical())?;
            Ok((wx * a + wy * b) / c.word_length() as f64)
        })
        .collect::<Result<_, SpectrumError>>()?;
    Ok(ratios.into_iter().fold(f64::INFINITY, f64::min))
}

fn length_checked(r: &MarkedRepresentation, w: &GroupWord) -> Result<f64, SpectrumError> {
    let t = r.class_trace(w);
    if t > 2.0 + TRACE_TOL {
        Ok(length_from_trace(t))
    } else {
        Err(SpectrumError::NotHyperbolic {
            word: w.to_string(),
            trace: t,
        })
    }
}

fn lengths_of(
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    w: &GroupWord,
) -> Result<(f64, f64), SpectrumError> {
    Ok((length_checked(r1, w)?, length_checked(r2, w)?))
}

struct Search<'a> {
    p: &'a Presentation,
    weights: (f64, f64),
    cutoff: f64,
    prefix_limit: f64,
    horizon: usize,
    nodes: &'a AtomicUsize,
    max_nodes: usize,
    aborted: &'a AtomicBool,
}

impl Search<'_> {
    fn walk(&self, word: &mut Vec<Letter>, tr: &mut [Tracker; 2], state: RunState, found: &mut HashSet<GroupWord>) {
        if self.aborted.load(AtomicOrdering::Relaxed) {
            return;
        }
        let n = word.len();
        if n > 0 {
            let visited = self.nodes.fetch_add(1, AtomicOrdering::Relaxed);
            if visited >= self.max_nodes {
                self.aborted.store(true, AtomicOrdering::Relaxed);
                return;
            }
            self.record(word, tr, found);
        }
        if n == self.horizon {
            return;
        }
        let last = word.last().copied();
        for l in self.p.letters() {
            let next_state = match last {
                None => RunState::START,
                Some(last) => match state.extend(last, l, self.p) {
                    Some(s) => s,
                    None => continue,
                },
            };
            let undo = [tr[0].push(l), tr[1].push(l)];
            if self.weight(&tr[0].current(), &tr[1].current()) <= self.prefix_limit {
                word.push(l);
                self.walk(word, tr, next_state, found);
                word.pop();
            }
            let [u0, u1] = undo;
            tr[0].undo(u0);
            tr[1].undo(u1);
        }
    }

    fn weight(&self, m1: &M2, m2: &M2) -> f64 {
        self.weights.0 * disp(m1) + self.weights.1 * disp(m2)
    }

    fn record(&self, word: &[Letter], tr: &[Tracker; 2], found: &mut HashSet<GroupWord>) {
        let n = word.len();
        if n > 1 && word[0] == word[n - 1].inverse() {
            return;
        }
        let (t1, t2) = (tr[0].class_trace(), tr[1].class_trace());
        if t1 <= 2.0 || t2 <= 2.0 {
            // Kept so the canonical evaluation reports the failure.
            found.insert(GroupWord::new(word.to_vec()));
            return;
        }
        if self.weights.0 * length_from_trace(t1) + self.weights.1 * length_from_trace(t2) > self.cutoff {
            return;
        }
        let w = GroupWord::new(word.to_vec());
        if !is_cyclically_dehn_reduced(&w, self.p) {
            return;
        }
        let c = canonical_class(&w, self.p).expect("non-empty reduced word");
        found.insert(c.canonical().clone());
    }
}

/// Smallest, over rotations of `w` and of its inverse, of the largest
/// weighted prefix pair displacement.
fn best_rotation_peak(w: &GroupWord, marks: &[Marking; 2], (wx, wy): (f64, f64)) -> f64 {
    let n = w.len();
    let inv = w.inverse();
    let mut best = f64::INFINITY;
    for src in [w.letters(), inv.letters()] {
        for k in 0..n {
            let mut tr = [Tracker::new(&marks[0]), Tracker::new(&marks[1])];
            let mut peak = 0.0f64;
            for i in 0..n {
                let l = src[(k + i) % n];
                tr[0].push(l);
                tr[1].push(l);
                peak = peak.max(wx * disp(&tr[0].current()) + wy * disp(&tr[1].current()));
                if peak >= best {
                    break;
                }
            }
            best = best.min(peak);
        }
    }
    best
}

/// Pair spectrum `{(l1(c), l2(c)) : wx l1(c) + wy l2(c) <= T}` with the
/// weights of `opts` (default `(1, 1)`).
pub fn class_spectrum_with(
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    t: f64,
    opts: &SpectrumOptions,
) -> Result<PairSpectrum, SpectrumError> {
    let p = check_pair(r1, r2)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(SpectrumError::InvalidInput(format!("cutoff {t}")));
    }
    let weights = opts.weights;
    let (wx, wy) = weights;
    if !(wx >= 0.0 && wy >= 0.0 && wx + wy > 0.0 && wx.is_finite() && wy.is_finite()) {
        return Err(SpectrumError::InvalidInput(format!("weights ({wx}, {wy})")));
    }
    let gens = letter_pairs(r1, r2, &p);
    let marks = [Marking::new(r1, &p), Marking::new(r2, &p)];
    let step = gens
        .iter()
        .map(|(g1, g2)| wx * disp(g1) + wy * disp(g2))
        .fold(0.0, f64::max);
    // safety factor: longer words can be slightly less efficient per letter
    let mut c_min = 0.8 * weighted_length_per_letter(r1, r2, C_MIN_DEPTH, weights)?;
    let mut slack = opts.slack.unwrap_or(step);
    let margin = opts.margin;
    let mut reruns = 0;
    loop {
        let horizon = (t / c_min).ceil() as usize;
        let nodes = AtomicUsize::new(0);
        let aborted = AtomicBool::new(false);
        let search = Search {
            p: &p,
            weights,
            cutoff: t,
            prefix_limit: t + slack,
            horizon,
            nodes: &nodes,
            max_nodes: opts.max_nodes,
            aborted: &aborted,
        };
        // Partition by two-letter prefix; merged through an ordered set.
        let mut starts = Vec::new();
        for a in p.letters() {
            for b in p.letters() {
                if let Some(s) = RunState::START.extend(a, b, &p) {
                    starts.push((a, b, s));
                }
            }
        }
        let parts: Vec<HashSet<GroupWord>> = starts
            .par_iter()
            .map(|&(a, b, s)| {
                let mut found = HashSet::new();
                let (a1, a2) = &gens[a.code() as usize];
                if search.weight(a1, a2) > search.prefix_limit {
                    return found;
                }
                let mut tr = [Tracker::new(&marks[0]), Tracker::new(&marks[1])];
                for l in [a, b] {
                    tr[0].push(l);
                    tr[1].push(l);
                }
                if search.weight(&tr[0].current(), &tr[1].current()) <= search.prefix_limit && horizon >= 2 {
                    let mut word = vec![a, b];
                    search.walk(&mut word, &mut tr, s, &mut found);
                }
                found
            })
            .collect();
        if aborted.load(AtomicOrdering::Relaxed) {
            return Err(SpectrumError::BudgetExceeded {
                cap: opts.max_nodes,
                what: "search nodes",
            });
        }
        let mut singles = HashSet::new();
        for a in p.letters() {
            let mut tr = [Tracker::new(&marks[0]), Tracker::new(&marks[1])];
            tr[0].push(a);
            tr[1].push(a);
            search.record(&[a], &tr, &mut singles);
        }
        let words: BTreeSet<GroupWord> = parts.into_iter().flatten().chain(singles).collect();
        if words.len() > opts.max_classes {
            return Err(SpectrumError::BudgetExceeded {
                cap: opts.max_classes,
                what: "candidate classes",
            });
        }
        let words: Vec<GroupWord> = words.into_iter().collect();
        let measured: Vec<(GroupWord, f64, f64, f64)> = words
            .par_iter()
            .map(|w| {
                let (l1, l2) = lengths_of(r1, r2, w)?;
                Ok((
                    w.clone(),
                    l1,
                    l2,
                    best_rotation_peak(w, &marks, weights) - (wx * l1 + wy * l2),
                ))
            })
            .collect::<Result<_, SpectrumError>>()?;
        let kept: Vec<&(GroupWord, f64, f64, f64)> = measured.iter().filter(|e| wx * e.1 + wy * e.2 <= t).collect();

        let max_excess = kept.iter().map(|e| e.3).fold(0.0, f64::max);
        let at_horizon = kept.iter().any(|e| e.0.len() >= horizon);
        let min_ratio = kept
            .iter()
            .map(|e| (wx * e.1 + wy * e.2) / e.0.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let slack_tight = max_excess > slack - margin;
        let horizon_tight = at_horizon || min_ratio < c_min;
        if slack_tight || horizon_tight {
            if reruns >= opts.max_reruns {
                return Err(SpectrumError::HorizonUnsound {
                    attempts: reruns + 1,
                    detail: format!(
                        "slack {slack:.3} vs required {max_excess:.3}; horizon {horizon}, c_min {c_min:.4} vs observed {min_ratio:.4}"
                    ),
                });
            }
            reruns += 1;
            if slack_tight {
                slack = max_excess + 2.0 * margin;
            }
            if horizon_tight {
                c_min = c_min.min(min_ratio) * 0.8;
            }
            continue;
        }

        let mut entries: Vec<SpectrumEntry> = kept
            .iter()
            .map(|e| SpectrumEntry {
                class: ConjClass::from_canonical_unchecked(e.0.clone()),
                l1: e.1,
                l2: e.2,
            })
            .collect();
        let mut merged = 0;
        let mut twins = 0;
        if opts.merge && p.mode() == PresentationMode::GenusTwoSurface {
            let (kept_entries, n, t) = fingerprint_merge(entries)?;
            entries = kept_entries;
            merged = n;
            twins = t;
        }
        entries.sort_by(|a, b| a.class.cmp(&b.class));
        return Ok(PairSpectrum {
            reps: [r1.clone(), r2.clone()],
            weights,
            cutoff: t,
            entries,
            completeness_bound: horizon,
            audit: SpectrumAudit {
                slack,
                max_excess,
                c_min,
                reruns,
                merged,
                twins,
                nodes: nodes.load(AtomicOrdering::Relaxed),
            },
        });
    }
}

/// Merges candidate classes that are conjugate. Candidates are paired when
/// their `(l1, l2, l_probe)` agree within [`CLASS_TOL`]; a pair is merged only
/// if a conjugacy witness is found (see [`conjugate_in_probe`]), so distinct
/// classes of equal length in every structure stay separate. The
/// shortlex-least canonical word survives. Returns `(kept, merged, twins)`
/// where `twins` counts fingerprint collisions that are not conjugate.
fn fingerprint_merge(entries: Vec<SpectrumEntry>) -> Result<(Vec<SpectrumEntry>, usize, usize), SpectrumError> {
    let probe = probe_representation(PresentationMode::GenusTwoSurface);
    let probes: Vec<f64> = entries
        .par_iter()
        .map(|e| length_checked(&probe, e.class.canonical()))
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&i, &j| {
        entries[i]
            .l1
            .total_cmp(&entries[j].l1)
            .then(entries[i].class.cmp(&entries[j].class))
    });
    let mut pairs = Vec::new();
    for a in 0..order.len() {
        let i = order[a];
        for &j in &order[a + 1..] {
            if entries[j].l1 - entries[i].l1 > CLASS_TOL {
                break;
            }
            if (entries[j].l2 - entries[i].l2).abs() <= CLASS_TOL && (probes[j] - probes[i]).abs() <= CLASS_TOL {
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs.sort_unstable();
    let conjugators = short_words(&probe, CONJUGATOR_LENGTH);
    let verdicts: Vec<bool> = pairs
        .par_iter()
        .map(|&(i, j)| {
            conjugate_in_probe(
                &probe,
                &conjugators,
                entries[i].class.canonical(),
                entries[j].class.canonical(),
            )
        })
        .collect();
    let mut parent: Vec<usize> = (0..entries.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut twins = 0;
    for (&(i, j), &conj) in pairs.iter().zip(&verdicts) {
        if !conj {
            twins += 1;
            continue;
        }
        let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
        if ri != rj {
            // keep the least class as the root
            if entries[ri].class <= entries[rj].class {
                parent[rj] = ri;
            } else {
                parent[ri] = rj;
            }
        }
    }
    let mut out = Vec::new();
    let mut merged = 0;
    for (i, e) in entries.into_iter().enumerate() {
        if root(&mut parent, i) == i {
            out.push(e);
        } else {
            merged += 1;
        }
    }
    Ok((out, merged, twins))
}

/// Longest conjugator tried between two Dehn-reduced cyclic words: half the
/// relator, the widest a one-layer annular diagram can be.
const CONJUGATOR_LENGTH: usize = 4;

/// Conjugators across a one-layer annular diagram: paths along one relator
/// cell, i.e. cyclic subwords of `r^{+-1}` of length `<= n`, plus all freely
/// reduced words of length `<= 2` as a margin.
fn short_words(r: &MarkedRepresentation, n: usize) -> Vec<MoebiusElement> {
    let p = r.presentation();
    let mut words: BTreeSet<GroupWord> = BTreeSet::new();
    words.insert(GroupWord::empty());
    for a in p.letters() {
        words.insert(GroupWord::new(vec![a]));
        for b in p.letters() {
            if b != a.inverse() {
                words.insert(GroupWord::new(vec![a, b]));
            }
        }
    }
    for rel in [p.relator().clone(), p.relator().inverse()] {
        for k in 0..rel.len() {
            let rot = rel.rotated(k);
            for len in 1..=n.min(rel.len()) {
                words.insert(GroupWord::new(rot.letters()[..len].to_vec()));
            }
        }
    }
    words.iter().map(|w| r.evaluate(w)).collect()
}

/// True if some `g` among `conjugators` carries the axis of `r(u)` onto the
/// axis of a cyclic rotation of `v` or `v^-1`. In a torsion-free discrete group
/// two elements with a common axis and equal length are equal or inverse, so
/// this witnesses conjugacy of the unoriented classes.
fn conjugate_in_probe(r: &MarkedRepresentation, conjugators: &[MoebiusElement], u: &GroupWord, v: &GroupWord) -> bool {
    use crate::moebius::{IsometryClass, ProjPoint};
    let ends = |w: &GroupWord| -> Option<(ProjPoint, ProjPoint)> {
        match r.evaluate(w).classify(TRACE_TOL) {
            IsometryClass::Hyperbolic {
                attracting, repelling, ..
            } => Some((attracting, repelling)),
            _ => None,
        }
    };
    let Some((ua, ur)) = ends(u) else { return false };
    let mut targets = Vec::with_capacity(2 * v.len());
    for k in 0..v.len() {
        if let Some(e) = ends(&v.rotated(k)) {
            targets.push(e);
        }
    }
    const POINT_TOL: f64 = 1e-7;
    conjugators.iter().any(|g| {
        let (ga, gr) = (g.apply(&ua), g.apply(&ur));
        targets.iter().any(|(va, vr)| {
            // same oriented axis, or reversed (the inverse class)
            (ga.distance(va) < POINT_TOL && gr.distance(vr) < POINT_TOL)
                || (ga.distance(vr) < POINT_TOL && gr.distance(va) < POINT_TOL)
        })
    })
}

impl PairSpectrum {
    pub fn reps(&self) -> &[MarkedRepresentation; 2] {
        &self.reps
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Weights `(wx, wy)` of the enumerated region `{wx l1 + wy l2 <= cutoff}`.
    pub fn weights(&self) -> (f64, f64) {
        self.weights
    }

    pub fn entries(&self) -> &[SpectrumEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Word-length horizon of the final search pass.
    pub fn completeness_bound(&self) -> usize {
        self.completeness_bound
    }

    pub fn audit(&self) -> &SpectrumAudit {
        &self.audit
    }

    /// Copy restricted to syntactically primitive classes.
    pub fn primitive_only(&self) -> PairSpectrum {
        self.filtered(|e| e.class.is_primitive())
    }

    /// Copy restricted to entries satisfying `keep`; the certification data is unchanged.
    pub fn filtered(&self, keep: impl Fn(&SpectrumEntry) -> bool) -> PairSpectrum {
        PairSpectrum {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
            ..self.clone()
        }
    }

    /// Empirical `(min, max)` of `l2 / l1`.
    pub fn dilations(&self) -> (f64, f64) {
        self.entries
            .iter()
            .map(SpectrumEntry::ratio)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }

    /// Largest `T` such that `{x l1 + y l2 <= T}` stays inside the enumerated
    /// region `{wx l1 + wy l2 <= cutoff}` for every ratio `l2/l1` in the padded
    /// empirical dilation range.
    pub fn certified_limit(&self, x: f64, y: f64) -> f64 {
        let (wx, wy) = self.weights;
        let (lo, hi) = if self.entries.is_empty() {
            (0.0, f64::INFINITY)
        } else {
            let (lo, hi) = self.dilations();
            (lo / DILATION_PAD, hi * DILATION_PAD)
        };
        // (wx + wy lam) / (x + y lam) is monotone in lam between poles
        let worst = [lo, hi]
            .into_iter()
            .map(|lam| {
                if lam.is_infinite() {
                    return if y > 0.0 {
                        wy / y
                    } else if wy > 0.0 {
                        f64::INFINITY
                    } else {
                        wx / x.max(0.0)
                    };
                }
                let denom = x + y * lam;
                if denom <= 0.0 {
                    f64::INFINITY
                } else {
                    (wx + wy * lam) / denom
                }
            })
            .fold(0.0, f64::max);
        if worst == 0.0 {
            0.0
        } else {
            self.cutoff / worst
        }
    }

    fn certify(&self, x: f64, y: f64, t: f64, limit: f64) -> Result<(), SpectrumError> {
        if t > limit * (1.0 + 1e-12) {
            Err(SpectrumError::UncertifiedRegion { x, y, t, limit })
        } else {
            Ok(())
        }
    }

    /// `#{c : x l1(c) + y l2(c) <= T}`.
    pub fn count_weighted(&self, x: f64, y: f64, t: f64) -> Result<usize, SpectrumError> {
        self.certify(x, y, t, self.certified_limit(x, y))?;
        Ok(self.entries.iter().filter(|e| x * e.l1 + y * e.l2 <= t).count())
    }

    /// `#{c : |l2/l1 - lambda| <= eps, l1 + l2 <= T}`.
    pub fn count_band(&self, lambda: f64, eps: f64, t: f64) -> Result<usize, SpectrumError> {
        if !(lambda > 0.0 && eps >= 0.0) {
            return Err(SpectrumError::InvalidInput(format!("band lambda {lambda}, eps {eps}")));
        }
        self.certify(1.0, 1.0, t, self.certified_limit(1.0, 1.0))?;
        Ok(self
            .entries
            .iter()
            .filter(|e| e.l1 + e.l2 <= t && (e.ratio() - lambda).abs() <= eps)
            .count())
    }

    /// `#{c : l1 in [T, T+1), l2 in [lambda T, lambda T + 1)}`.
    pub fn count_box(&self, lambda: f64, t: f64) -> Result<usize, SpectrumError> {
        if !(lambda > 0.0) {
            return Err(SpectrumError::InvalidInput(format!("box slope {lambda}")));
        }
        // the far corner of the box must lie in the enumerated region
        let (wx, wy) = self.weights;
        let corner = wx * (t + 1.0) + wy * (lambda * t + 1.0);
        if corner > self.cutoff * (1.0 + 1e-12) {
            return Err(SpectrumError::UncertifiedRegion {
                x: 1.0,
                y: lambda,
                t,
                limit: self.box_limit(lambda),
            });
        }
        Ok(self
            .entries
            .iter()
            .filter(|e| e.l1 >= t && e.l1 < t + 1.0 && e.l2 >= lambda * t && e.l2 < lambda * t + 1.0)
            .count())
    }

    /// Largest box scale `T` with `count_box(lambda, T)` certified.
    pub fn box_limit(&self, lambda: f64) -> f64 {
        let (wx, wy) = self.weights;
        (self.cutoff - wx - wy) / (wx + wy * lambda)
    }

    /// Text serialization, see [`load_spectrum`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MSPEC_HEADER}");
        let _ = writeln!(out, "cutoff {:.16e}", self.cutoff);
        let _ = writeln!(out, "weights {:.16e} {:.16e}", self.weights.0, self.weights.1);
        let _ = writeln!(out, "horizon {}", self.completeness_bound);
        let a = &self.audit;
        let _ = writeln!(
            out,
            "audit {:.16e} {:.16e} {:.16e} {} {} {} {}",
            a.slack, a.max_excess, a.c_min, a.reruns, a.merged, a.twins, a.nodes
        );
        let _ = writeln!(out, "entries {}", self.entries.len());
        for (i, r) in self.reps.iter().enumerate() {
            let _ = writeln!(out, "[rep {}]", i + 1);
            out.push_str(&r.to_descriptor());
        }
        let _ = writeln!(out, "[entries]");
        for e in &self.entries {
            let _ = writeln!(out, "{} {:.16e} {:.16e}", e.class, e.l1, e.l2);
        }
        let _ = writeln!(out, "[end]");
        out
    }

    pub fn from_text(text: &str) -> Result<PairSpectrum, SpectrumError> {
        let bad = |m: String| SpectrumError::Format(m);
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some(MSPEC_HEADER) => {}
            Some(h) if h.starts_with("MSPEC/") => {
                return Err(SpectrumError::Version(format!("unsupported version {h:?}")))
            }
            _ => return Err(SpectrumError::Version("missing MSPEC/1 header".into())),
        }
        let mut meta: BTreeMap<&str, &str> = BTreeMap::new();
        let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
        let mut ended = false;
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if ended {
                return Err(bad("content after [end]".into()));
            }
            if line == "[end]" {
                ended = true;
            } else if line.starts_with('[') && line.ends_with(']') {
                sections.push((line[1..line.len() - 1].to_string(), Vec::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push(line);
            } else {
                let (k, v) = line.split_once(' ').ok_or_else(|| bad(format!("bad line {line:?}")))?;
                meta.insert(k, v);
            }
        }
        if !ended {
            return Err(bad("truncated: missing [end]".into()));
        }
        let get = |k: &str| meta.get(k).copied().ok_or_else(|| bad(format!("missing {k}")));
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
        let cutoff = float(get("cutoff")?)?;
        let weights = match get("weights")?.split_whitespace().collect::<Vec<_>>()[..] {
            [a, b] => (float(a)?, float(b)?),
            _ => return Err(bad("weights line".into())),
        };
        let horizon = int(get("horizon")?)?;
        let expected = int(get("entries")?)?;
        let audit_fields: Vec<&str> = get("audit")?.split_whitespace().collect();
        if audit_fields.len() != 7 {
            return Err(bad("audit line".into()));
        }
        let audit = SpectrumAudit {
            slack: float(audit_fields[0])?,
            max_excess: float(audit_fields[1])?,
            c_min: float(audit_fields[2])?,
            reruns: int(audit_fields[3])?,
            merged: int(audit_fields[4])?,
            twins: int(audit_fields[5])?,
            nodes: int(audit_fields[6])?,
        };
        let section = |name: &str| {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, b)| b.join("\n"))
                .ok_or_else(|| bad(format!("missing [{name}]")))
        };
        let r1 = MarkedRepresentation::from_descriptor(&section("rep 1")?)?;
        let r2 = MarkedRepresentation::from_descriptor(&section("rep 2")?)?;
        let p = check_pair(&r1, &r2)?;
        let body = section("entries")?;
        let mut entries = Vec::with_capacity(expected);
        for line in body.lines() {
            let mut parts = line.split_whitespace();
            let (Some(w), Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad(format!("bad entry {line:?}")));
            };
            let word = GroupWord::parse_in(w, &p).map_err(|e| bad(format!("{w:?}: {e}")))?;
            entries.push(SpectrumEntry {
                class: ConjClass::from_canonical_unchecked(word),
                l1: float(a)?,
                l2: float(b)?,
            });
        }
        if entries.len() != expected {
            return Err(bad(format!("expected {expected} entries, found {}", entries.len())));
        }
        Ok(PairSpectrum {
            reps: [r1, r2],
            weights,
            cutoff,
            entries,
            completeness_bound: horizon,
            audit,
        })
    }
}

pub fn save_spectrum(s: &PairSpectrum, path: &Path) -> Result<(), SpectrumError> {
    std::fs::write(path, s.to_text())?;
    Ok(())
}

pub fn load_spectrum(path: &Path) -> Result<PairSpectrum, SpectrumError> {
    PairSpectrum::from_text(&std::fs::read_to_string(path)?)
}

/// Pair length `l1 + l2` of a word, for callers holding matrices only.
pub fn word_pair_length(
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    w: &GroupWord,
) -> Result<f64, SpectrumError> {
    let (a, b) = lengths_of(r1, r2, w)?;
    Ok(a + b)
}

/// The element's displacement pair `(d(r1(w) o, o), d(r2(w) o, o))`.
pub fn word_displacements(r1: &MarkedRepresentation, r2: &MarkedRepresentation, w: &GroupWord) -> (f64, f64) {
    let e = |r: &MarkedRepresentation| {
        let m: MoebiusElement = r.evaluate(w);
        disp(&m.entries())
    };
    (e(r1), e(r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reps::FenchelNielsen;
    use crate::words::{apply_automorphism, twist_automorphism};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn fn_rep(lengths: [f64; 3], twists: [f64; 3]) -> MarkedRepresentation {
        MarkedRepresentation::from_fenchel_nielsen(&FenchelNielsen::new(lengths, twists)).unwrap()
    }

    fn symmetric() -> &'static MarkedRepresentation {
        static R: OnceLock<MarkedRepresentation> = OnceLock::new();
        R.get_or_init(|| fn_rep([2.0, 2.0, 2.0], [0.0; 3]))
    }

    fn symmetric_spectrum() -> &'static PairSpectrum {
        static S: OnceLock<PairSpectrum> = OnceLock::new();
        S.get_or_init(|| class_spectrum(symmetric(), symmetric(), 18.0).unwrap())
    }

    fn schottky() -> MarkedRepresentation {
        MarkedRepresentation::from_free_pair(10.0, 10.0, 50.0).unwrap()
    }

    fn free_pair() -> (MarkedRepresentation, MarkedRepresentation) {
        (
            MarkedRepresentation::from_free_pair(3.0, 3.0, 4.0).unwrap(),
            MarkedRepresentation::from_free_pair(3.3, 3.7, 5.1).unwrap(),
        )
    }

    fn w(s: &str) -> GroupWord {
        s.parse().unwrap()
    }

    /// All freely reduced words of length `<= depth` (rank-2 free group: one word per element).
    fn all_reduced_words(p: &Presentation, depth: usize) -> Vec<GroupWord> {
        let mut out = vec![GroupWord::empty()];
        let mut layer = vec![Vec::<Letter>::new()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for word in &layer {
                for l in p.letters() {
                    if word.last() == Some(&l.inverse()) {
                        continue;
                    }
                    let mut v = word.clone();
                    v.push(l);
                    out.push(GroupWord::new(v.clone()));
                    next.push(v);
                }
            }
            layer = next;
        }
        out
    }

    #[test]
    fn orbit_ball_trivial_cases() {
        let (r1, r2) = free_pair();
        let ball = orbit_ball(&r1, &r2, 0.5, (1.0, 1.0)).unwrap();
        assert_eq!(ball.len(), 1);
        assert_eq!(
            ball.entries()[0],
            OrbitEntry {
                word: GroupWord::empty(),
                d1: 0.0,
                d2: 0.0
            }
        );
        let big = orbit_ball(&r1, &r2, 8.0, (1.0, 1.0)).unwrap();
        assert!(big
            .entries()
            .iter()
            .any(|e| e.word.is_empty() && e.d1 == 0.0 && e.d2 == 0.0));
        assert!(big.entries().iter().all(|e| e.d1 + e.d2 <= 8.0));
        assert!(orbit_ball(&r1, &r2, 8.0, (0.0, 0.0)).is_err());
    }

    /// Oracle: unpruned enumeration to the Milnor–Švarc depth `ceil(R / c_min)`,
    /// with `c_min` the least per-letter displacement over words of length <= 6.
    fn exhaustive_orbit_count(r1: &MarkedRepresentation, r2: &MarkedRepresentation, radius: f64) -> usize {
        let p = r1.presentation().clone();
        let sample = all_reduced_words(&p, 6);
        let c_min = sample
            .iter()
            .filter(|w| !w.is_empty())
            .map(|w| {
                let (a, b) = word_displacements(r1, r2, w);
                (a + b) / w.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let depth = (radius / c_min).ceil() as usize;
        all_reduced_words(&p, depth)
            .iter()
            .filter(|w| {
                let (a, b) = word_displacements(r1, r2, w);
                a + b <= radius
            })
            .count()
    }

    #[test]
    fn schottky_orbit_count_matches_exhaustive_enumeration() {
        let s = schottky();
        let (_, r2) = free_pair();
        for radius in [6.0, 16.0] {
            let ball = orbit_ball(&s, &r2, radius, (1.0, 1.0)).unwrap();
            assert_eq!(ball.len(), exhaustive_orbit_count(&s, &r2, radius), "R = {radius}");
        }
        let (r1, r2) = free_pair();
        let ball = orbit_ball(&r1, &r2, 12.0, (1.0, 1.0)).unwrap();
        assert_eq!(ball.len(), exhaustive_orbit_count(&r1, &r2, 12.0));
    }

    #[test]
    fn genus_two_orbit_count_matches_area() {
        // #{g : d(g o, o) <= rho} ~ 2 pi (cosh rho - 1) / area, area = 4 pi
        let r = symmetric();
        let ball = orbit_ball(r, r, 18.0, (1.0, 1.0)).unwrap();
        let expected = (9.0f64.cosh() - 1.0) / 2.0;
        let rel = (ball.len() as f64 - expected).abs() / expected;
        assert!(rel < 0.05, "{} vs {expected}", ball.len());
        assert!(ball.merge_discrepancy < 1e-8);
    }

    #[test]
    fn identical_pair_has_equal_lengths() {
        let s = symmetric_spectrum();
        assert!(!s.is_empty());
        for e in s.entries() {
            assert_eq!(e.l1, e.l2);
            assert!(e.l1 > 0.0 && e.l1 + e.l2 <= s.cutoff());
        }
        let classes: BTreeSet<&ConjClass> = s.entries().iter().map(|e| &e.class).collect();
        assert_eq!(classes.len(), s.len());
    }

    #[test]
    fn symmetric_surface_smallest_entries() {
        // oracle: lengths of every class to depth 4 by direct evaluation
        let r = symmetric();
        let p = Presentation::genus_two();
        let systole = enumerate_classes(&p, 4)
            .map(|c| r.length_of(&c).unwrap())
            .fold(f64::INFINITY, f64::min);
        let s = class_spectrum(r, r, 6.0).unwrap();
        let smallest = s.entries().iter().map(|e| e.l1).fold(f64::INFINITY, f64::min);
        assert!((smallest - systole).abs() < 1e-9);
        for c in FenchelNielsen::pants_curves() {
            let class = canonical_class(&c, &p).unwrap();
            let e = s
                .entries()
                .iter()
                .find(|e| e.class == class)
                .expect("pants curve present");
            assert!((e.l1 - 2.0).abs() < 1e-9 && (e.l2 - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn torus_classes_match_the_free_spectrum_of_the_restriction() {
        // classes carried by <a1, b1> are exactly the rank-2 free-group classes
        // of the restricted representation
        let r = symmetric();
        let f = MarkedRepresentation::from_images(Presentation::free_rank2(), r.images()[..2].to_vec(), 8).unwrap();
        let g2 = symmetric_spectrum();
        let free = class_spectrum(&f, &f, g2.cutoff()).unwrap();
        let torus: BTreeSet<&ConjClass> = g2
            .entries()
            .iter()
            .map(|e| &e.class)
            .filter(|c| c.canonical().letters().iter().all(|l| l.generator() < 2))
            .collect();
        let free_set: BTreeSet<&ConjClass> = free.entries().iter().map(|e| &e.class).collect();
        assert_eq!(torus, free_set);
    }

    #[test]
    fn spectrum_is_independent_of_the_slack() {
        let r = symmetric();
        let base = class_spectrum(r, r, 14.0).unwrap();
        let opts = SpectrumOptions {
            slack: Some(base.audit().slack + 4.0),
            ..Default::default()
        };
        let wide = class_spectrum_with(r, r, 14.0, &opts).unwrap();
        assert_eq!(base.entries(), wide.entries());
    }

    #[test]
    fn remarked_pair_spectrum_is_the_image_spectrum() {
        let p = Presentation::genus_two();
        let r = fn_rep([1.9, 2.4, 2.2], [0.3, -0.2, 0.5]);
        let tau = twist_automorphism(&p, &canonical_class(&w("a"), &p).unwrap(), 1).unwrap();
        let rt = r.remark(&tau).unwrap();
        let t = 16.0;
        let s = class_spectrum(&r, &rt, t).unwrap();
        for e in s.entries() {
            let image = apply_automorphism(&tau, e.class.canonical());
            let oracle = r.length_of_word(&image).unwrap();
            assert!((e.l2 - oracle).abs() < 1e-8 * oracle.max(1.0), "{}", e.class);
            assert!((e.l1 - r.length_of(&e.class).unwrap()).abs() < 1e-12);
        }
        // every short class of the pair is present
        let found: BTreeSet<&ConjClass> = s.entries().iter().map(|e| &e.class).collect();
        for c in enumerate_classes(&p, 4) {
            let l = r.length_of(&c).unwrap() + r.length_of_word(&apply_automorphism(&tau, c.canonical())).unwrap();
            if l <= t - 1e-6 {
                let present = found.contains(&c)
                    || s.entries().iter().any(|e| {
                        (e.l1 - r.length_of(&c).unwrap()).abs() < CLASS_TOL && (e.l1 + e.l2 - l).abs() < CLASS_TOL
                    });
                assert!(present, "{c} missing");
            }
        }
    }

    #[test]
    fn random_conjugates_of_boundary_classes_are_present() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // rank 2: canonical forms are exact
        let (r1, r2) = free_pair();
        let s = class_spectrum(&r1, &r2, 18.0).unwrap();
        check_conjugates(&s, &mut rng);
        check_conjugates(symmetric_spectrum(), &mut rng);
    }

    fn check_conjugates(s: &PairSpectrum, rng: &mut ChaCha8Rng) {
        let [r1, r2] = s.reps();
        let p = r1.presentation().clone();
        let letters: Vec<Letter> = p.letters().collect();
        let boundary: Vec<&SpectrumEntry> = s.entries().iter().filter(|e| e.l1 + e.l2 > s.cutoff() - 1.5).collect();
        assert!(!boundary.is_empty());
        for e in boundary.iter().take(40) {
            let g = GroupWord::new(
                (0..rng.gen_range(1..6))
                    .map(|_| letters[rng.gen_range(0..letters.len())])
                    .collect(),
            );
            let conj = g.concat(e.class.canonical()).concat(&g.inverse());
            let c = canonical_class(&conj, &p).unwrap();
            let (l1, l2) = (r1.length_of(&c).unwrap(), r2.length_of(&c).unwrap());
            assert!((l1 - e.l1).abs() < 1e-7 && (l2 - e.l2).abs() < 1e-7);
            let present = s
                .entries()
                .iter()
                .any(|f| f.class == c || ((f.l1 - l1).abs() < CLASS_TOL && (f.l2 - l2).abs() < CLASS_TOL));
            assert!(present, "conjugate {c} of {} missing", e.class);
        }
    }

    #[test]
    fn counting_trivia() {
        let s = symmetric_spectrum();
        assert_eq!(s.count_weighted(1.0, 1.0, 0.0).unwrap(), 0);
        assert_eq!(s.count_weighted(1.0, 1.0, s.cutoff()).unwrap(), s.len());
        let limit = s.certified_limit(1.0, 0.0);
        assert!((limit - s.cutoff() / (1.0 + DILATION_PAD)).abs() < 1e-12);
        for t in [3.0, 5.0, limit] {
            assert_eq!(
                s.count_weighted(1.0, 0.0, t).unwrap(),
                s.count_weighted(0.0, 1.0, t).unwrap()
            );
        }
        assert!(matches!(
            s.count_weighted(1.0, 0.0, limit + 0.1),
            Err(SpectrumError::UncertifiedRegion { .. })
        ));
        for t in [4.0, 10.0, s.cutoff()] {
            let all = s.entries().iter().filter(|e| e.l1 + e.l2 <= t).count();
            for eps in [0.0, 0.1, 2.0] {
                assert_eq!(s.count_band(1.0, eps, t).unwrap(), all);
            }
        }
        for t in [2.0, 4.0, 7.0] {
            let oracle = s.entries().iter().filter(|e| e.l1 >= t && e.l1 < t + 1.0).count();
            assert_eq!(s.count_box(1.0, t).unwrap(), oracle);
        }
        assert!(s.count_box(1.0, s.cutoff()).is_err());
    }

    #[test]
    fn bands_outside_the_dilation_range_are_empty() {
        let (r1, r2) = free_pair();
        let s = class_spectrum(&r1, &r2, 16.0).unwrap();
        // oracle: direct scan of the ratios
        let lo = s.entries().iter().map(|e| e.l2 / e.l1).fold(f64::INFINITY, f64::min);
        let hi = s.entries().iter().map(|e| e.l2 / e.l1).fold(0.0, f64::max);
        assert_eq!(s.dilations(), (lo, hi));
        assert!(lo < hi);
        let eps = 0.01;
        for lambda in [lo - eps - 0.05, hi + eps + 0.05, hi + 1.0] {
            if lambda > 0.0 {
                assert_eq!(s.count_band(lambda, eps, s.cutoff()).unwrap(), 0);
            }
        }
        assert!(s.count_band(lo, eps, s.cutoff()).unwrap() >= 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn counts_are_monotone_and_homogeneous(x in 0.05f64..1.0, y in 0.05f64..1.0, frac in 0.0f64..1.0, k in 0.2f64..3.0) {
            let s = symmetric_spectrum();
            let t = frac * s.certified_limit(x, y);
            let n = s.count_weighted(x, y, t).unwrap();
            prop_assert!(s.count_weighted(x, y, t * 0.9).unwrap() <= n);
            prop_assert!(s.count_weighted(x * 1.1, y, t).unwrap() <= n);
            prop_assert!(s.count_weighted(x, y * 1.1, t).unwrap() <= n);
            prop_assert_eq!(s.count_weighted(k * x, k * y, k * t).unwrap(), n);
        }
    }

    #[test]
    fn orbit_counts_are_certified_by_the_ball() {
        let (r1, r2) = free_pair();
        let ball = orbit_ball(&r1, &r2, 10.0, (1.0, 1.0)).unwrap();
        assert_eq!(ball.count_weighted(1.0, 1.0, 10.0).unwrap(), ball.len());
        assert_eq!(ball.count_weighted(2.0, 2.0, 20.0).unwrap(), ball.len());
        assert!(ball.count_weighted(1.0, 0.0, 5.0).is_err());
        assert!(ball.count_weighted(2.0, 1.0, 10.0).unwrap() <= ball.len());
    }

    #[test]
    fn runs_are_deterministic() {
        let (r1, r2) = free_pair();
        let a = class_spectrum(&r1, &r2, 16.0).unwrap().to_text();
        let b = class_spectrum(&r1, &r2, 16.0).unwrap().to_text();
        assert_eq!(a, b);
        let r = symmetric();
        let a = class_spectrum(r, r, 14.0).unwrap().to_text();
        let b = class_spectrum(r, r, 14.0).unwrap().to_text();
        assert_eq!(a, b);
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mspec");
        let s = symmetric_spectrum();
        save_spectrum(s, &path).unwrap();
        let loaded = load_spectrum(&path).unwrap();
        assert_eq!(&loaded, s);
        assert_eq!(loaded.to_text(), s.to_text());

        let text = s.to_text();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            PairSpectrum::from_text(truncated),
            Err(SpectrumError::Format(_))
        ));
        let headless = text.replacen("MSPEC/1\n", "", 1);
        assert!(matches!(
            PairSpectrum::from_text(&headless),
            Err(SpectrumError::Version(_))
        ));
        let future = text.replacen("MSPEC/1", "MSPEC/2", 1);
        assert!(matches!(
            PairSpectrum::from_text(&future),
            Err(SpectrumError::Version(_))
        ));
        let miscounted = text.replacen(&format!("entries {}", s.len()), &format!("entries {}", s.len() + 1), 1);
        assert!(matches!(
            PairSpectrum::from_text(&miscounted),
            Err(SpectrumError::Format(_))
        ));
    }

    #[test]
    fn mismatched_presentations_are_rejected() {
        let (f, _) = free_pair();
        assert!(matches!(
            class_spectrum(symmetric(), &f, 5.0),
            Err(SpectrumError::InvalidInput(_))
        ));
        assert!(matches!(
            class_spectrum(&f, &f, 0.0),
            Err(SpectrumError::InvalidInput(_))
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let (r1, r2) = free_pair();
        let opts = SpectrumOptions {
            max_nodes: 100,
            ..Default::default()
        };
        assert!(matches!(
            class_spectrum_with(&r1, &r2, 20.0, &opts),
            Err(SpectrumError::BudgetExceeded { .. })
        ));
        let small = OrbitOptions { max_elements: 10 };
        assert!(matches!(
            orbit_ball_with(&r1, &r2, 20.0, (1.0, 1.0), &small),
            Err(SpectrumError::BudgetExceeded { .. })
        ));
    }
}
