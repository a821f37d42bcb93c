//! Words in the rank-2 free group and in the genus-2 surface group
//! `<a1,b1,a2,b2 | [a1,b1][a2,b2]>`.
//!
//! Letters are serialized as ASCII: `a b c d` for the generators
//! `a1 b1 a2 b2` (or `a b` in rank 2) and upper case for inverses.
//! The total order on letters is `a < A < b < B < c < C < d < D`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordError {
    #[error("word reduces to the identity")]
    TrivialWord,
    #[error("invalid letter {0:?}")]
    InvalidLetter(char),
    #[error("letter {0:?} is not a generator of this presentation")]
    ForeignLetter(char),
    #[error("unsupported twist curve {0}")]
    UnsupportedCurve(String),
    #[error("curves {0} and {1} are not a supported filling pair")]
    NotFillingPair(String, String),
    #[error("automorphism table has {found} images, presentation has {expected} generators")]
    TableSize { expected: usize, found: usize },
    #[error("relator image is not conjugate to the relator")]
    RelatorNotPreserved,
}

/// A generator or inverse generator; `code = 2 * generator + inverted`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter(u8);

impl Letter {
    pub const fn new(generator: u8, inverted: bool) -> Letter {
        Letter(2 * generator + inverted as u8)
    }

    pub const fn from_code(code: u8) -> Letter {
        Letter(code)
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn generator(self) -> usize {
        (self.0 / 2) as usize
    }

    pub fn is_inverse(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn inverse(self) -> Letter {
        Letter(self.0 ^ 1)
    }

    pub fn to_char(self) -> char {
        let base = b'a' + (self.0 / 2);
        if self.is_inverse() {
            base.to_ascii_uppercase() as char
        } else {
            base as char
        }
    }

    pub fn from_char(ch: char) -> Result<Letter, WordError> {
        if !ch.is_ascii_alphabetic() {
            return Err(WordError::InvalidLetter(ch));
        }
        let lower = ch.to_ascii_lowercase() as u8;
        if !(b'a'..=b'h').contains(&lower) {
            return Err(WordError::InvalidLetter(ch));
        }
        Ok(Letter::new(lower - b'a', ch.is_ascii_uppercase()))
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GroupWord {
    letters: Vec<Letter>,
}

impl GroupWord {
    pub fn new(letters: Vec<Letter>) -> Self {
        GroupWord { letters }
    }

    pub fn empty() -> Self {
        GroupWord { letters: vec![] }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn inverse(&self) -> GroupWord {
        GroupWord::new(self.letters.iter().rev().map(|l| l.inverse()).collect())
    }

    pub fn concat(&self, other: &GroupWord) -> GroupWord {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        free_reduce(&GroupWord::new(letters))
    }

    pub fn pow(&self, n: i64) -> GroupWord {
        let base = if n < 0 { self.inverse() } else { self.clone() };
        let mut letters = Vec::with_capacity(base.len() * n.unsigned_abs() as usize);
        for _ in 0..n.unsigned_abs() {
            letters.extend_from_slice(&base.letters);
        }
        free_reduce(&GroupWord::new(letters))
    }

    pub fn rotated(&self, k: usize) -> GroupWord {
        let n = self.len();
        if n == 0 {
            return self.clone();
        }
        let k = k % n;
        let mut letters = Vec::with_capacity(n);
        letters.extend_from_slice(&self.letters[k..]);
        letters.extend_from_slice(&self.letters[..k]);
        GroupWord::new(letters)
    }

    /// Parses and checks that every letter belongs to `p`.
    pub fn parse_in(s: &str, p: &Presentation) -> Result<GroupWord, WordError> {
        let w: GroupWord = s.parse()?;
        for l in &w.letters {
            if l.generator() >= p.rank() {
                return Err(WordError::ForeignLetter(l.to_char()));
            }
        }
        Ok(w)
    }
}

impl FromStr for GroupWord {
    type Err = WordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let letters = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '.')
            .map(Letter::from_char)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GroupWord::new(letters))
    }
}

impl fmt::Display for GroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        for l in &self.letters {
            write!(f, "{}", l.to_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for GroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupWord({self})")
    }
}

impl PartialOrd for GroupWord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortlex: length first, then letters in the fixed symbol order.
impl Ord for GroupWord {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.letters.cmp(&other.letters))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PresentationMode {
    FreeRank2,
    GenusTwoSurface,
}

impl fmt::Display for PresentationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PresentationMode::FreeRank2 => write!(f, "free-rank2"),
            PresentationMode::GenusTwoSurface => write!(f, "genus2"),
        }
    }
}

impl FromStr for PresentationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "free-rank2" | "free" | "FreeRank2" => Ok(PresentationMode::FreeRank2),
            "genus2" | "genus-2" | "GenusTwoSurface" => Ok(PresentationMode::GenusTwoSurface),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Which cyclic relator word (the relator or its inverse) a successor pair belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum RunKind {
    Relator,
    Inverse,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Presentation {
    mode: PresentationMode,
    relator: GroupWord,
    // successor of each letter inside the cyclic relator / inverse relator
    next_in_relator: Vec<Option<Letter>>,
    next_in_inverse: Vec<Option<Letter>>,
}

impl Presentation {
    pub fn free_rank2() -> Presentation {
        Presentation {
            mode: PresentationMode::FreeRank2,
            relator: GroupWord::empty(),
            next_in_relator: vec![None; 4],
            next_in_inverse: vec![None; 4],
        }
    }

    pub fn genus_two() -> Presentation {
        let relator: GroupWord = "abABcdCD".parse().expect("static relator");
        let successors = |w: &GroupWord| {
            let mut next = vec![None; 8];
            let n = w.len();
            for i in 0..n {
                next[w.letters[i].code() as usize] = Some(w.letters[(i + 1) % n]);
            }
            next
        };
        let p = Presentation {
            mode: PresentationMode::GenusTwoSurface,
            next_in_relator: successors(&relator),
            next_in_inverse: successors(&relator.inverse()),
            relator,
        };
        assert!(p.max_piece_length() * 6 < p.relator.len(), "relator violates C'(1/6)");
        p
    }

    pub fn new(mode: PresentationMode) -> Presentation {
        match mode {
            PresentationMode::FreeRank2 => Self::free_rank2(),
            PresentationMode::GenusTwoSurface => Self::genus_two(),
        }
    }

    pub fn mode(&self) -> PresentationMode {
        self.mode
    }

    pub fn rank(&self) -> usize {
        match self.mode {
            PresentationMode::FreeRank2 => 2,
            PresentationMode::GenusTwoSurface => 4,
        }
    }

    pub fn relator(&self) -> &GroupWord {
        &self.relator
    }

    pub fn generator(&self, i: usize) -> GroupWord {
        GroupWord::new(vec![Letter::new(i as u8, false)])
    }

    /// All letters (generators and inverses) in the fixed order.
    pub fn letters(&self) -> impl Iterator<Item = Letter> {
        (0..(2 * self.rank()) as u8).map(Letter::from_code)
    }

    pub fn has_relator(&self) -> bool {
        !self.relator.is_empty()
    }

    pub(crate) fn successor_kind(&self, x: Letter, y: Letter) -> Option<RunKind> {
        if !self.has_relator() {
            return None;
        }
        if self.next_in_relator[x.code() as usize] == Some(y) {
            Some(RunKind::Relator)
        } else if self.next_in_inverse[x.code() as usize] == Some(y) {
            Some(RunKind::Inverse)
        } else {
            None
        }
    }

    /// The letters of the cyclic relator (or its inverse) starting at `start`.
    fn cyclic_relator_from(&self, start: Letter, kind: RunKind) -> Vec<Letter> {
        let next = match kind {
            RunKind::Relator => &self.next_in_relator,
            RunKind::Inverse => &self.next_in_inverse,
        };
        let mut out = Vec::with_capacity(self.relator.len());
        let mut cur = start;
        for _ in 0..self.relator.len() {
            out.push(cur);
            cur = next[cur.code() as usize].expect("letter occurs in relator");
        }
        out
    }

    /// Longest common prefix between distinct cyclic permutations of r and r^-1.
    fn max_piece_length(&self) -> usize {
        let n = self.relator.len();
        let mut words = Vec::new();
        for w in [self.relator.clone(), self.relator.inverse()] {
            for k in 0..n {
                words.push(w.rotated(k));
            }
        }
        let mut best = 0;
        for i in 0..words.len() {
            for j in 0..words.len() {
                if i == j {
                    continue;
                }
                let common = words[i]
                    .letters
                    .iter()
                    .zip(words[j].letters.iter())
                    .take_while(|(x, y)| x == y)
                    .count();
                best = best.max(common);
            }
        }
        best
    }

    /// Longest subword allowed in a Dehn-reduced word that is also a relator subword.
    pub fn max_relator_run(&self) -> usize {
        self.relator.len() / 2
    }
}

pub fn free_reduce(w: &GroupWord) -> GroupWord {
    let mut out: Vec<Letter> = Vec::with_capacity(w.len());
    for &l in &w.letters {
        if out.last() == Some(&l.inverse()) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    GroupWord::new(out)
}

/// Freely reduces, then cancels inverse pairs across the wrap-around.
pub fn cyclic_reduce(w: &GroupWord) -> GroupWord {
    let r = free_reduce(w);
    let mut lo = 0;
    let mut hi = r.len();
    while hi - lo >= 2 && r.letters[lo] == r.letters[hi - 1].inverse() {
        lo += 1;
        hi -= 1;
    }
    GroupWord::new(r.letters[lo..hi].to_vec())
}

/// Finds a linear subword of more than half a relator; returns (start, len, kind).
fn find_long_run(w: &[Letter], p: &Presentation) -> Option<(usize, usize, RunKind)> {
    find_long_run_capped(w, p, usize::MAX)
}

fn find_long_run_capped(w: &[Letter], p: &Presentation, cap: usize) -> Option<(usize, usize, RunKind)> {
    let cap = cap.min(p.relator.len());
    let limit = p.max_relator_run();
    let n = w.len();
    let mut start = 0;
    let mut kind: Option<RunKind> = None;
    for i in 1..n {
        let k = p.successor_kind(w[i - 1], w[i]);
        if k.is_some() && k == kind {
            // run continues
        } else if k.is_some() {
            start = i - 1;
            kind = k;
        } else {
            kind = None;
        }
        if let Some(kd) = kind {
            let len = i + 1 - start;
            if len > limit {
                // extend greedily up to a whole relator
                let mut end = i + 1;
                while end < n && end - start < cap && p.successor_kind(w[end - 1], w[end]) == Some(kd) {
                    end += 1;
                }
                return Some((start, end - start, kd));
            }
        }
    }
    None
}

fn replace_run(w: &[Letter], start: usize, len: usize, kind: RunKind, p: &Presentation) -> Vec<Letter> {
    let full = p.cyclic_relator_from(w[start], kind);
    // w[start..start+len] * complement = 1, so the run equals complement^-1
    let complement_inv: Vec<Letter> = full[len..].iter().rev().map(|l| l.inverse()).collect();
    let mut out = Vec::with_capacity(w.len());
    out.extend_from_slice(&w[..start]);
    out.extend_from_slice(&complement_inv);
    out.extend_from_slice(&w[start + len..]);
    out
}

/// Dehn's algorithm: shortens subwords that are more than half a relator, to a fixed point.
pub fn dehn_reduce(w: &GroupWord, p: &Presentation) -> GroupWord {
    let mut cur = free_reduce(w);
    if !p.has_relator() {
        return cur;
    }
    while let Some((start, len, kind)) = find_long_run(&cur.letters, p) {
        cur = free_reduce(&GroupWord::new(replace_run(&cur.letters, start, len, kind, p)));
    }
    cur
}

/// Cyclic version of Dehn's algorithm; the result is conjugate to the input.
pub fn cyclic_dehn_reduce(w: &GroupWord, p: &Presentation) -> GroupWord {
    let mut cur = cyclic_reduce(w);
    if !p.has_relator() {
        return cur;
    }
    loop {
        let n = cur.len();
        if n == 0 {
            return cur;
        }
        match cyclic_long_run(&cur.letters, p) {
            None => return cur,
            Some(rot) => {
                let rotated = cur.rotated(rot);
                let (start, len, kind) = find_long_run(&rotated.letters, p).expect("run located by cyclic scan");
                cur = cyclic_reduce(&GroupWord::new(replace_run(&rotated.letters, start, len, kind, p)));
            }
        }
    }
}

/// If the cyclic word contains a long relator run, returns a rotation offset at which
/// that run appears linearly.
fn cyclic_long_run(w: &[Letter], p: &Presentation) -> Option<usize> {
    let n = w.len();
    let mut doubled = Vec::with_capacity(2 * n);
    doubled.extend_from_slice(w);
    doubled.extend_from_slice(w);
    match find_long_run_capped(&doubled, p, n) {
        Some((start, _, _)) if start < n => Some(start),
        _ => None,
    }
}

/// True if the (cyclically reduced) word admits no cyclic Dehn reduction.
pub fn is_cyclically_dehn_reduced(w: &GroupWord, p: &Presentation) -> bool {
    !p.has_relator() || w.is_empty() || cyclic_long_run(&w.letters, p).is_none()
}

/// Canonical unoriented conjugacy-class representative.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConjClass {
    canonical: GroupWord,
}

impl ConjClass {
    pub fn canonical(&self) -> &GroupWord {
        &self.canonical
    }

    pub fn word_length(&self) -> usize {
        self.canonical.len()
    }

    /// Smallest k such that the cyclic word is a k-th power of a shorter word.
    pub fn power(&self) -> usize {
        let n = self.canonical.len();
        let w = &self.canonical.letters;
        for period in 1..=n {
            if n.is_multiple_of(period) && (period..n).all(|i| w[i] == w[i - period]) {
                return n / period;
            }
        }
        1
    }

    /// Syntactic primitivity: the canonical cyclic word is not a proper power.
    pub fn is_primitive(&self) -> bool {
        self.power() == 1
    }

    /// Wraps a word already known to be canonical (used when loading files).
    pub fn from_canonical_unchecked(canonical: GroupWord) -> ConjClass {
        ConjClass { canonical }
    }
}

impl fmt::Display for ConjClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical)
    }
}

impl fmt::Debug for ConjClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConjClass({})", self.canonical)
    }
}

/// Least rotation of `w` or of its inverse in the fixed letter order.
fn least_rotation(w: &[Letter]) -> Vec<Letter> {
    let n = w.len();
    let inv: Vec<Letter> = w.iter().rev().map(|l| l.inverse()).collect();
    let mut best: Option<Vec<Letter>> = None;
    for src in [w, inv.as_slice()] {
        for k in 0..n {
            let better = match &best {
                None => true,
                Some(b) => {
                    let mut ord = Ordering::Equal;
                    for i in 0..n {
                        ord = src[(k + i) % n].cmp(&b[i]);
                        if ord != Ordering::Equal {
                            break;
                        }
                    }
                    ord == Ordering::Less
                }
            };
            if better {
                best = Some((0..n).map(|i| src[(k + i) % n]).collect());
            }
        }
    }
    best.unwrap_or_default()
}

pub fn canonical_class(w: &GroupWord, p: &Presentation) -> Result<ConjClass, WordError> {
    let reduced = match p.mode {
        PresentationMode::FreeRank2 => cyclic_reduce(w),
        PresentationMode::GenusTwoSurface => cyclic_dehn_reduce(w, p),
    };
    if reduced.is_empty() {
        return Err(WordError::TrivialWord);
    }
    Ok(ConjClass {
        canonical: GroupWord::new(least_rotation(&reduced.letters)),
    })
}

/// Lazily enumerates canonical classes of word length `1..=max_len`, in shortlex order.
pub struct ClassEnumerator<'a> {
    presentation: &'a Presentation,
    max_len: usize,
    next_len: usize,
    buffer: std::vec::IntoIter<ConjClass>,
}

pub fn enumerate_classes(p: &Presentation, max_len: usize) -> ClassEnumerator<'_> {
    ClassEnumerator {
        presentation: p,
        max_len,
        next_len: 1,
        buffer: Vec::new().into_iter(),
    }
}

impl Iterator for ClassEnumerator<'_> {
    type Item = ConjClass;

    fn next(&mut self) -> Option<ConjClass> {
        loop {
            if let Some(c) = self.buffer.next() {
                return Some(c);
            }
            if self.next_len > self.max_len {
                return None;
            }
            let n = self.next_len;
            self.next_len += 1;
            self.buffer = classes_of_length(self.presentation, n).into_iter();
        }
    }
}

/// Depth-first walk state over freely reduced, Dehn-reduced words.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RunState {
    pub len: u8,
    kind: Option<RunKind>,
}

impl RunState {
    pub(crate) const START: RunState = RunState { len: 1, kind: None };

    /// State after appending `next` to a word ending in `last`, or `None` if the
    /// extension is not freely reduced or creates a run longer than half a relator.
    pub(crate) fn extend(self, last: Letter, next: Letter, p: &Presentation) -> Option<RunState> {
        if next == last.inverse() {
            return None;
        }
        match p.successor_kind(last, next) {
            None => Some(RunState { len: 1, kind: None }),
            Some(k) => {
                let len = if self.kind == Some(k) { self.len + 1 } else { 2 };
                if len as usize > p.max_relator_run() {
                    None
                } else {
                    Some(RunState { len, kind: Some(k) })
                }
            }
        }
    }
}

fn classes_of_length(p: &Presentation, n: usize) -> Vec<ConjClass> {
    let mut out = Vec::new();
    let mut word: Vec<Letter> = Vec::with_capacity(n);
    for first in p.letters() {
        word.clear();
        word.push(first);
        walk_canonical(p, n, &mut word, RunState::START, &mut out);
    }
    out
}

fn walk_canonical(p: &Presentation, n: usize, word: &mut Vec<Letter>, state: RunState, out: &mut Vec<ConjClass>) {
    if word.len() == n {
        let w = GroupWord::new(word.clone());
        let first = word[0];
        let last = word[n - 1];
        if n > 1 && first == last.inverse() {
            return;
        }
        if !is_cyclically_dehn_reduced(&w, p) {
            return;
        }
        if least_rotation(&w.letters) == w.letters {
            out.push(ConjClass { canonical: w });
        }
        return;
    }
    let first = word[0];
    let last = *word.last().expect("non-empty");
    for next in p.letters() {
        // the least rotation starts with the smallest letter of the word
        if next < first || next.inverse() < first {
            continue;
        }
        if let Some(s) = state.extend(last, next, p) {
            word.push(next);
            walk_canonical(p, n, word, s, out);
            word.pop();
        }
    }
}

/// Generator substitution `g_i -> images[i]`, extended to words.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndomorphismTable {
    images: Vec<GroupWord>,
}

impl fmt::Debug for EndomorphismTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Serialized as `img0,img1,...` (images of a, b, c, d in order).
impl fmt::Display for EndomorphismTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.images.iter().map(|w| w.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for EndomorphismTable {
    type Err = WordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let images = s
            .split(',')
            .map(|part| {
                let part = part.trim();
                if part == "1" {
                    Ok(GroupWord::empty())
                } else {
                    part.parse()
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EndomorphismTable { images })
    }
}

impl EndomorphismTable {
    pub fn new(images: Vec<GroupWord>) -> Self {
        EndomorphismTable {
            images: images.iter().map(free_reduce).collect(),
        }
    }

    pub fn identity(rank: usize) -> Self {
        EndomorphismTable {
            images: (0..rank)
                .map(|i| GroupWord::new(vec![Letter::new(i as u8, false)]))
                .collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.images.len()
    }

    pub fn image(&self, generator: usize) -> &GroupWord {
        &self.images[generator]
    }

    pub fn images(&self) -> &[GroupWord] {
        &self.images
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.rank())
    }

    pub fn apply(&self, w: &GroupWord) -> GroupWord {
        let mut letters = Vec::new();
        for l in &w.letters {
            let img = &self.images[l.generator()];
            if l.is_inverse() {
                letters.extend(img.letters.iter().rev().map(|x| x.inverse()));
            } else {
                letters.extend_from_slice(&img.letters);
            }
        }
        free_reduce(&GroupWord::new(letters))
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &EndomorphismTable) -> EndomorphismTable {
        EndomorphismTable {
            images: other.images.iter().map(|w| self.apply(w)).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> EndomorphismTable {
        let mut acc = Self::identity(self.rank());
        for _ in 0..n {
            acc = self.compose(&acc);
        }
        acc
    }

    pub fn check_rank(&self, p: &Presentation) -> Result<(), WordError> {
        if self.rank() != p.rank() {
            return Err(WordError::TableSize {
                expected: p.rank(),
                found: self.rank(),
            });
        }
        Ok(())
    }

    /// In the surface group the relator must map to a conjugate of itself or its inverse.
    pub fn preserves_relator(&self, p: &Presentation) -> bool {
        if !p.has_relator() {
            return true;
        }
        let img = cyclic_reduce(&self.apply(p.relator()));
        let rel = p.relator();
        if img.len() != rel.len() {
            return false;
        }
        least_rotation(&img.letters) == least_rotation(&rel.letters)
    }
}

pub fn apply_automorphism(table: &EndomorphismTable, w: &GroupWord) -> GroupWord {
    table.apply(w)
}

fn word(s: &str) -> GroupWord {
    s.parse().expect("static word")
}

/// The separating curve `[a1, b1]` of the genus-2 surface.
pub fn separating_curve() -> GroupWord {
    word("abAB")
}

/// Supported twist curves: the generators, plus `[a1,b1]` in genus 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TwistCurve {
    Generator(usize),
    Separating,
}

fn identify_curve(p: &Presentation, curve: &ConjClass) -> Result<TwistCurve, WordError> {
    for g in 0..p.rank() {
        if canonical_class(&p.generator(g), p)? == *curve {
            return Ok(TwistCurve::Generator(g));
        }
    }
    if p.mode == PresentationMode::GenusTwoSurface {
        // the separating curve has two cyclically reduced spellings, abAB and dcDC
        for spelling in ["abAB", "dcDC"] {
            if canonical_class(&word(spelling), p)? == *curve {
                return Ok(TwistCurve::Separating);
            }
        }
    }
    Err(WordError::UnsupportedCurve(curve.to_string()))
}

/// Single positive twist and its inverse as generator tables.
fn twist_pair(p: &Presentation, c: TwistCurve) -> (EndomorphismTable, EndomorphismTable) {
    let id = EndomorphismTable::identity(p.rank());
    let with = |gen: usize, img: &str| {
        let mut t = id.clone();
        t.images[gen] = word(img);
        t
    };
    match (p.mode, c) {
        // a twist along a1 fixes a1 and drags the dual curve b1 around it
        (_, TwistCurve::Generator(0)) => (with(1, "ba"), with(1, "bA")),
        (_, TwistCurve::Generator(1)) => (with(0, "aB"), with(0, "ab")),
        (PresentationMode::GenusTwoSurface, TwistCurve::Generator(2)) => (with(3, "dc"), with(3, "dC")),
        (PresentationMode::GenusTwoSurface, TwistCurve::Generator(3)) => (with(2, "cD"), with(2, "cd")),
        (PresentationMode::GenusTwoSurface, TwistCurve::Separating) => {
            let mut fwd = id.clone();
            fwd.images[0] = word("abABabaBA");
            fwd.images[1] = word("abABbbaBA");
            let fwd = EndomorphismTable::new(fwd.images);
            let mut back = id.clone();
            back.images[0] = word("baBAaabAB");
            back.images[1] = word("baBAbabAB");
            let back = EndomorphismTable::new(back.images);
            (fwd, back)
        }
        _ => unreachable!("identify_curve only returns curves of this presentation"),
    }
}

/// Generator table of the `power`-th Dehn twist along a supported simple closed curve.
pub fn twist_automorphism(p: &Presentation, curve: &ConjClass, power: i64) -> Result<EndomorphismTable, WordError> {
    let c = identify_curve(p, curve)?;
    let (fwd, back) = twist_pair(p, c);
    let base = if power < 0 { back } else { fwd };
    let table = base.pow(power.unsigned_abs() as u32);
    if !table.preserves_relator(p) {
        return Err(WordError::RelatorNotPreserved);
    }
    Ok(table)
}

/// Penner-style composition `tau_c ∘ tau_d^-1` raised to `power` (negative powers invert).
///
/// Only the pair {a, b} of the rank-2 free group (a one-holed torus) is a supported
/// filling pair; the genus-2 twist curves available here never fill.
pub fn penner_map(p: &Presentation, c: &ConjClass, d: &ConjClass, power: i64) -> Result<EndomorphismTable, WordError> {
    let cc = identify_curve(p, c)?;
    let dd = identify_curve(p, d)?;
    let filling = p.mode == PresentationMode::FreeRank2 && cc != dd;
    if !filling {
        return Err(WordError::NotFillingPair(c.to_string(), d.to_string()));
    }
    let (tc, tc_inv) = twist_pair(p, cc);
    let (td, td_inv) = twist_pair(p, dd);
    let step = if power >= 0 {
        tc.compose(&td_inv)
    } else {
        td.compose(&tc_inv)
    };
    Ok(step.pow(power.unsigned_abs() as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn w(s: &str) -> GroupWord {
        s.parse().unwrap()
    }

    fn class(s: &str, p: &Presentation) -> ConjClass {
        canonical_class(&w(s), p).unwrap()
    }

    #[test]
    fn free_and_cyclic_reduction() {
        assert_eq!(free_reduce(&w("a A b")), w("b"));
        assert_eq!(cyclic_reduce(&w("b a B")), w("a"));
        assert_eq!(free_reduce(&GroupWord::empty()), GroupWord::empty());
        assert_eq!(cyclic_reduce(&w("aAbB")), GroupWord::empty());
    }

    #[test]
    fn dehn_reduction_examples() {
        let p = Presentation::genus_two();
        assert!(dehn_reduce(p.relator(), &p).is_empty());
        // abABc = (dCD)^-1... the complement of abABc in the relator is dCD
        assert_eq!(dehn_reduce(&w("abABc"), &p), w("dcD"));
        assert_eq!(dehn_reduce(&w("a"), &p), w("a"));
        // conjugates of the relator reduce cyclically
        assert!(cyclic_dehn_reduce(&w("cdCDabAB"), &p).is_empty());
        assert!(cyclic_dehn_reduce(&w("b abABcdCD B"), &p).is_empty());
    }

    #[test]
    fn dehn_reduction_never_lengthens() {
        let p = Presentation::genus_two();
        for s in ["abABcdC", "DCdcBAba", "abABcdCDabABcd", "aaabABcdCb"] {
            let r = dehn_reduce(&w(s), &p);
            assert!(r.len() <= w(s).len());
            assert!(find_long_run(&r.letters, &p).is_none());
        }
    }

    #[test]
    fn canonical_rotation_and_inversion() {
        let p = Presentation::free_rank2();
        assert_eq!(class("ba", &p), class("ab", &p));
        assert_eq!(class("ab", &p), class("BA", &p));
        assert_ne!(class("aB", &p), class("ab", &p));
        assert_eq!(canonical_class(&w("aA"), &p), Err(WordError::TrivialWord));
    }

    #[test]
    fn separating_curve_has_two_spellings_with_distinct_canonicals() {
        let p = Presentation::genus_two();
        assert_eq!(class("abAB", &p).to_string(), "abAB");
        assert_eq!(class("dcDC", &p).to_string(), "cdCD");
    }

    #[test]
    fn small_free_enumerations() {
        let p = Presentation::free_rank2();
        let l1: Vec<String> = enumerate_classes(&p, 1).map(|c| c.to_string()).collect();
        assert_eq!(l1, vec!["a", "b"]);
        let l2: Vec<String> = enumerate_classes(&p, 2).map(|c| c.to_string()).collect();
        assert_eq!(l2, vec!["a", "b", "aa", "ab", "aB", "bb"]);
    }

    /// Brute force: all cyclically reduced words, grouped by explicit rotation/inversion orbits.
    fn necklace_count(p: &Presentation, n: usize) -> usize {
        let letters: Vec<Letter> = p.letters().collect();
        let mut words: Vec<Vec<Letter>> = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::new();
            for wd in &words {
                for &l in &letters {
                    let mut v = wd.clone();
                    v.push(l);
                    next.push(v);
                }
            }
            words = next;
        }
        let mut seen: Vec<Vec<Letter>> = Vec::new();
        let mut count = 0;
        for wd in words {
            let g = GroupWord::new(wd.clone());
            if free_reduce(&g).len() != n || cyclic_reduce(&g).len() != n {
                continue;
            }
            if seen.contains(&wd) {
                continue;
            }
            count += 1;
            let inv: Vec<Letter> = wd.iter().rev().map(|l| l.inverse()).collect();
            for src in [&wd, &inv] {
                for k in 0..n {
                    let rot: Vec<Letter> = (0..n).map(|i| src[(k + i) % n]).collect();
                    if !seen.contains(&rot) {
                        seen.push(rot);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn free_enumeration_matches_necklace_brute_force() {
        let p = Presentation::free_rank2();
        for n in 1..=6 {
            let fast = enumerate_classes(&p, n).filter(|c| c.word_length() == n).count();
            assert_eq!(fast, necklace_count(&p, n), "length {n}");
        }
    }

    #[test]
    fn enumeration_has_no_duplicates_and_is_shortlex() {
        for p in [Presentation::free_rank2(), Presentation::genus_two()] {
            let all: Vec<ConjClass> = enumerate_classes(&p, if p.has_relator() { 4 } else { 7 }).collect();
            let set: BTreeSet<&ConjClass> = all.iter().collect();
            assert_eq!(set.len(), all.len());
            assert!(all.windows(2).all(|x| x[0].canonical < x[1].canonical));
            for c in &all {
                assert_eq!(&canonical_class(c.canonical(), &p).unwrap(), c);
            }
        }
    }

    #[test]
    fn twist_tables() {
        let p = Presentation::free_rank2();
        let a = class("a", &p);
        let t = twist_automorphism(&p, &a, 1).unwrap();
        assert_eq!(t.to_string(), "a,ba");
        assert_eq!(t.apply(&w("b")), w("ba"));
        let t3 = twist_automorphism(&p, &a, 3).unwrap();
        assert_eq!(t3.apply(&w("b")), w("baaa"));
        let inv = twist_automorphism(&p, &a, -1).unwrap();
        assert!(t.compose(&inv).is_identity());
        assert!(twist_automorphism(&p, &a, 0).unwrap().is_identity());
        assert!(matches!(
            twist_automorphism(&p, &class("ab", &p), 1),
            Err(WordError::UnsupportedCurve(_))
        ));

        let g = Presentation::genus_two();
        let t = twist_automorphism(&g, &class("a", &g), 1).unwrap();
        assert_eq!(t.to_string(), "a,ba,c,d");
        assert!(t.preserves_relator(&g));
        for spelling in ["abAB", "dcDC"] {
            let s = twist_automorphism(&g, &class(spelling, &g), 1).unwrap();
            assert!(s.preserves_relator(&g));
            let back = twist_automorphism(&g, &class(spelling, &g), -1).unwrap();
            assert!(s.compose(&back).is_identity());
        }
        for gen in ["b", "c", "d"] {
            let fwd = twist_automorphism(&g, &class(gen, &g), 2).unwrap();
            let back = twist_automorphism(&g, &class(gen, &g), -2).unwrap();
            assert!(fwd.compose(&back).is_identity());
            assert!(fwd.preserves_relator(&g));
        }
    }

    /// Abelianized action of a table on the free abelian group of rank 2.
    fn homology(t: &EndomorphismTable) -> [[i64; 2]; 2] {
        let mut m = [[0i64; 2]; 2];
        for (col, img) in t.images().iter().enumerate() {
            for l in img.letters() {
                m[l.generator()][col] += if l.is_inverse() { -1 } else { 1 };
            }
        }
        m
    }

    #[test]
    fn penner_map_is_hyperbolic_in_homology() {
        let p = Presentation::free_rank2();
        let a = class("a", &p);
        let b = class("b", &p);
        let m = homology(&penner_map(&p, &a, &b, 1).unwrap());
        let trace = m[0][0] + m[1][1];
        assert_eq!(trace, 3);
        let g = Presentation::genus_two();
        assert!(penner_map(&g, &class("a", &g), &class("b", &g), 1).is_err());
    }

    #[test]
    fn table_round_trips_through_text() {
        let t: EndomorphismTable = "a,ba".parse().unwrap();
        assert_eq!(t.to_string().parse::<EndomorphismTable>().unwrap(), t);
    }

    fn arb_word(rank: u8, max: usize) -> impl Strategy<Value = GroupWord> {
        prop::collection::vec(0..2 * rank, 0..max)
            .prop_map(|v| GroupWord::new(v.into_iter().map(Letter::from_code).collect()))
    }

    proptest! {
        #[test]
        fn canonical_is_conjugation_and_inversion_invariant(
            x in arb_word(2, 12), g in arb_word(2, 4), k in 0usize..12
        ) {
            let p = Presentation::free_rank2();
            if let Ok(c) = canonical_class(&x, &p) {
                let conj = g.concat(&x).concat(&g.inverse());
                prop_assert_eq!(&canonical_class(&conj, &p).unwrap(), &c);
                prop_assert_eq!(&canonical_class(&x.inverse(), &p).unwrap(), &c);
                let rot = x.rotated(k);
                prop_assert_eq!(&canonical_class(&rot, &p).unwrap(), &c);
                prop_assert_eq!(&canonical_class(c.canonical(), &p).unwrap(), &c);
            }
        }

        #[test]
        fn surface_canonical_is_rotation_invariant(x in arb_word(4, 14), k in 0usize..14) {
            let p = Presentation::genus_two();
            if let Ok(c) = canonical_class(&x, &p) {
                let reduced = cyclic_dehn_reduce(&x, &p);
                prop_assert!(reduced.len() <= free_reduce(&x).len());
                prop_assert_eq!(&canonical_class(&reduced.rotated(k), &p).unwrap(), &c);
                prop_assert_eq!(&canonical_class(&x.inverse(), &p).unwrap(), &c);
                prop_assert!(is_cyclically_dehn_reduced(c.canonical(), &p));
            }
        }

        #[test]
        fn dehn_reduce_shortens_or_keeps(x in arb_word(4, 20)) {
            let p = Presentation::genus_two();
            let r = dehn_reduce(&x, &p);
            prop_assert!(r.len() <= x.len());
            prop_assert_eq!(dehn_reduce(&r, &p), r);
        }

        #[test]
        fn automorphisms_compose(x in arb_word(2, 10), n in -3i64..3, m in -3i64..3) {
            let p = Presentation::free_rank2();
            let a = canonical_class(&"a".parse().unwrap(), &p).unwrap();
            let b = canonical_class(&"b".parse().unwrap(), &p).unwrap();
            let t1 = twist_automorphism(&p, &a, n).unwrap();
            let t2 = twist_automorphism(&p, &b, m).unwrap();
            prop_assert_eq!(t1.compose(&t2).apply(&x), t1.apply(&t2.apply(&x)));
        }
    }

    #[test]
    fn free_counts_through_length_eight() {
        // known necklace counts for cyclically reduced unoriented classes of F2
        let p = Presentation::free_rank2();
        let fast: Vec<usize> = (1..=8)
            .map(|n| enumerate_classes(&p, n).filter(|c| c.word_length() == n).count())
            .collect();
        let brute: Vec<usize> = (1..=8).map(|n| necklace_count(&p, n)).collect();
        assert_eq!(fast, brute);
    }
}
