//! Marked Fuchsian representations.
//!
//! Genus-2 surfaces are assembled from Fenchel–Nielsen coordinates for the
//! pants decomposition `{a1, a2, [a1,b1]}`: each one-holed torus `<a_i, b_i>` is
//! built from its trace triple, and the second torus is glued to the first
//! along the separating commutator curve. Rank-2 free groups come directly from
//! a trace triple `(tr A, tr B, tr AB)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moebius::{classify, IsometryClass, MoebiusElement, MoebiusError, TRACE_TOL};
use crate::words::{
    cyclic_reduce, enumerate_classes, free_reduce, ConjClass, EndomorphismTable, GroupWord, Letter, Presentation,
    PresentationMode, WordError,
};

/// Probe depth (canonical word length) of the discreteness witness in rank 2.
pub const DEFAULT_PROBE_DEPTH_FREE: usize = 8;
/// Probe depth in genus 2, where the class count grows like `7^n`.
pub const DEFAULT_PROBE_DEPTH_GENUS_TWO: usize = 6;
/// Largest accepted distance of the relator image from the identity, relative
/// to the product of the generator norms along the relator.
pub const RELATOR_TOL: f64 = 1e-8;

const DEGENERATE_LENGTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepError {
    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),
    #[error("representation not discerned discrete: class {word} has |trace| {trace}")]
    NotDiscernedDiscrete { word: String, trace: f64 },
    #[error("class {word} is not hyperbolic (|trace| = {trace})")]
    NotHyperbolic { word: String, trace: f64 },
    #[error("relator residual {0:e} exceeds tolerance")]
    RelatorResidual(f64),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("matrix entry: {0}")]
    Matrix(#[from] MoebiusError),
    #[error("representation descriptor: {0}")]
    Format(String),
}

/// Length and twist coordinates of the pants curves `a1`, `a2` and `[a1,b1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FenchelNielsen {
    pub lengths: [f64; 3],
    pub twists: [f64; 3],
}

impl FenchelNielsen {
    pub fn new(lengths: [f64; 3], twists: [f64; 3]) -> Self {
        FenchelNielsen { lengths, twists }
    }

    /// Words of the three pants curves, in coordinate order.
    pub fn pants_curves() -> [GroupWord; 3] {
        ["a", "c", "abAB"].map(|s| s.parse().expect("static word"))
    }
}

/// How a representation was first constructed (before any remarking).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Source {
    FenchelNielsen(FenchelNielsen),
    FreePair { tr_a: f64, tr_b: f64, tr_ab: f64 },
    Matrices,
}

/// Generator images of a marked hyperbolic structure with validation data.
///
/// A remarked representation keeps the images it was built from (`base`) and
/// the composite marking; words are evaluated by substituting the marking and
/// multiplying base images along the freely reduced result, since products of
/// the remarked images themselves cancel catastrophically.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkedRepresentation {
    presentation: Presentation,
    images: Vec<MoebiusElement>,
    base: Vec<MoebiusElement>,
    marking: Option<EndomorphismTable>,
    relator_residual: f64,
    discreteness_witness: f64,
    source: Source,
    history: Vec<EndomorphismTable>,
}

// ---------------------------------------------------------------------------
// raw SL(2,R) arithmetic; the sign of the lift matters while gluing

type M2 = [f64; 4];

fn mul(x: &M2, y: &M2) -> M2 {
    [
        x[0] * y[0] + x[1] * y[2],
        x[0] * y[1] + x[1] * y[3],
        x[2] * y[0] + x[3] * y[2],
        x[2] * y[1] + x[3] * y[3],
    ]
}

fn inv(x: &M2) -> M2 {
    [x[3], -x[1], -x[2], x[0]]
}

fn commutator(x: &M2, y: &M2) -> M2 {
    mul(&mul(x, y), &mul(&inv(x), &inv(y)))
}

fn eigvec(m: &M2, lambda: f64) -> (f64, f64) {
    let v1 = (m[1], lambda - m[0]);
    let v2 = (lambda - m[3], m[2]);
    if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) {
        v1
    } else {
        v2
    }
}

/// Columns (attracting, repelling) eigenvectors of a hyperbolic `m`, scaled to determinant 1.
fn eigenframe(m: &M2) -> Result<M2, RepError> {
    let t = m[0] + m[3];
    let disc = t * t / 4.0 - 1.0;
    if disc <= 0.0 {
        return Err(RepError::DegenerateParameters(format!("gluing curve has trace {t}")));
    }
    let big = t / 2.0 + t.signum() * disc.sqrt();
    let att = eigvec(m, big);
    let mut rep = eigvec(m, 1.0 / big);
    let mut det = att.0 * rep.1 - rep.0 * att.1;
    if det < 0.0 {
        rep = (-rep.0, -rep.1);
        det = -det;
    }
    let s = det.sqrt();
    Ok([att.0 / s, rep.0 / s, att.1 / s, rep.1 / s])
}

/// Position along the axis of the frame (the imaginary axis after `frame^-1`) of
/// the foot of the common perpendicular to the axis of `m`, plus the side of
/// the imaginary axis on which the axis of `m` lies.
fn foot_coordinate(frame: &M2, m: &M2) -> Result<(f64, f64), RepError> {
    let t = m[0] + m[3];
    let disc = t * t / 4.0 - 1.0;
    if disc <= 0.0 {
        return Err(RepError::DegenerateParameters("pants curve is not hyperbolic".into()));
    }
    let big = t / 2.0 + t.signum() * disc.sqrt();
    let pinv = inv(frame);
    let affine = |v: (f64, f64)| {
        let x = pinv[0] * v.0 + pinv[1] * v.1;
        let y = pinv[2] * v.0 + pinv[3] * v.1;
        x / y
    };
    let p = affine(eigvec(m, big));
    let q = affine(eigvec(m, 1.0 / big));
    if !(p * q > 0.0) || !p.is_finite() || !q.is_finite() {
        return Err(RepError::DegenerateParameters(
            "pants curve axis meets the gluing axis".into(),
        ));
    }
    Ok((0.5 * (p * q).ln(), p.signum()))
}

/// One-holed torus `(A, B)` with `A = diag(mu, 1/mu)` realizing the trace triple.
fn torus_from_traces(x: f64, y: f64, z: f64) -> M2Pair {
    let mu = (x + (x * x - 4.0).sqrt()) / 2.0;
    let a = [mu, 0.0, 0.0, 1.0 / mu];
    let p = (z - y / mu) / (mu - 1.0 / mu);
    let s = y - p;
    let qr = p * s - 1.0;
    let q = qr.abs().sqrt();
    let r = qr.signum() * q;
    (a, [p, q, r, s])
}

type M2Pair = (M2, M2);

/// Trace triple of the one-holed torus with interior curve length `l`, twist
/// `tau` along it and boundary length `boundary`; `tau = 0` minimizes `tr B`.
fn torus_traces(l: f64, tau: f64, boundary: f64) -> (f64, f64, f64) {
    let x = 2.0 * (l / 2.0).cosh();
    let k = x * x - 2.0 + 2.0 * (boundary / 2.0).cosh();
    let sk = k.sqrt();
    let sh = (l / 2.0).sinh();
    (x, sk * (tau / 2.0).cosh() / sh, sk * ((tau + l) / 2.0).cosh() / sh)
}

fn to_moebius(m: &M2) -> Result<MoebiusElement, RepError> {
    Ok(MoebiusElement::new(m[0], m[1], m[2], m[3])?)
}

/// Normwise relative residual of the relator: `|r(images) - I| / prod |g|`
/// over the relator letters (Frobenius norms), i.e. a backward error.
fn relator_residual(p: &Presentation, images: &[MoebiusElement]) -> f64 {
    if !p.has_relator() {
        return 0.0;
    }
    let scale: f64 = p
        .relator()
        .letters()
        .iter()
        .map(|l| {
            images[l.generator()]
                .entries()
                .iter()
                .map(|e| e * e)
                .sum::<f64>()
                .sqrt()
        })
        .product();
    evaluate_with(images, p.relator()).distance_to(&MoebiusElement::IDENTITY) / scale.max(1.0)
}

fn evaluate_with(images: &[MoebiusElement], w: &GroupWord) -> MoebiusElement {
    w.letters().iter().fold(MoebiusElement::IDENTITY, |acc, l| {
        let g = &images[l.generator()];
        if l.is_inverse() {
            acc.compose(&g.inverse())
        } else {
            acc.compose(g)
        }
    })
}

/// Shortest translation length over all classes of canonical length `<= depth`;
/// fails on the first non-hyperbolic class.
fn probe_witness(p: &Presentation, images: &[MoebiusElement], depth: usize) -> Result<f64, RepError> {
    let mut witness = f64::INFINITY;
    for class in enumerate_classes(p, depth) {
        let m = evaluate_with(images, class.canonical());
        match classify(&m, TRACE_TOL) {
            IsometryClass::Hyperbolic { translation_length, .. } => witness = witness.min(translation_length),
            _ => {
                return Err(RepError::NotDiscernedDiscrete {
                    word: class.to_string(),
                    trace: m.trace().abs(),
                })
            }
        }
    }
    Ok(witness)
}

impl MarkedRepresentation {
    pub fn from_fenchel_nielsen(fn_: &FenchelNielsen) -> Result<Self, RepError> {
        Self::from_fenchel_nielsen_with_probe(fn_, DEFAULT_PROBE_DEPTH_GENUS_TWO)
    }

    pub fn from_fenchel_nielsen_with_probe(fn_: &FenchelNielsen, probe_depth: usize) -> Result<Self, RepError> {
        let values = fn_.lengths.iter().chain(fn_.twists.iter());
        if values.clone().any(|v| !v.is_finite()) {
            return Err(RepError::DegenerateParameters("non-finite coordinate".into()));
        }
        if let Some(l) = fn_.lengths.iter().find(|&&l| l < DEGENERATE_LENGTH) {
            return Err(RepError::DegenerateParameters(format!(
                "pants length {l} below {DEGENERATE_LENGTH}"
            )));
        }
        let [l1, l2, ls] = fn_.lengths;
        let [t1, t2, ts] = fn_.twists;

        let (x1, y1, z1) = torus_traces(l1, t1, ls);
        let (x2, y2, z2) = torus_traces(l2, t2, ls);
        let (a1, b1) = torus_from_traces(x1, y1, z1);
        let (a2, b2) = torus_from_traces(x2, y2, z2);
        let c1 = commutator(&a1, &b1);
        let c2 = commutator(&a2, &b2);

        // Glue: X c2 X^-1 = c1^-1, with the feet of the perpendiculars from the
        // gluing axis to the axes of a1 and a2 offset by the twist `ts`.
        let p1 = eigenframe(&c1)?;
        let q2 = eigenframe(&c2)?;
        let (s1, side1) = foot_coordinate(&p1, &a1)?;
        let (s2, _) = foot_coordinate(&q2, &a2)?;
        let u = -s1 - s2 - ts;
        let w = [0.0, -1.0, 1.0, 0.0];
        let shift = [(u / 2.0).exp(), 0.0, 0.0, (-u / 2.0).exp()];
        let x = mul(&mul(&mul(&p1, &w), &shift), &inv(&q2));
        let xi = inv(&x);
        let a2g = mul(&mul(&x, &a2), &xi);
        let b2g = mul(&mul(&x, &b2), &xi);

        // the glued torus must lie across the gluing axis from the first one
        let (_, side2) = foot_coordinate(&p1, &a2g)?;
        if side1 == side2 {
            return Err(RepError::DegenerateParameters("glued tori overlap".into()));
        }

        // Recenter: the basepoint i goes to the point of the gluing axis halfway
        // between the two feet, with the gluing axis along the imaginary axis.
        let mid = s1 + ts / 2.0;
        let g = mul(&[(-mid / 2.0).exp(), 0.0, 0.0, (mid / 2.0).exp()], &inv(&p1));
        let gi = inv(&g);
        let centered = |m: &M2| to_moebius(&mul(&mul(&g, m), &gi));
        let images = vec![centered(&a1)?, centered(&b1)?, centered(&a2g)?, centered(&b2g)?];
        Self::validated(
            Presentation::genus_two(),
            images,
            Source::FenchelNielsen(*fn_),
            probe_depth,
        )
    }

    /// Rank-2 free group with prescribed traces of `A`, `B` and `AB`.
    pub fn from_free_pair(tr_a: f64, tr_b: f64, tr_ab: f64) -> Result<Self, RepError> {
        Self::from_free_pair_with_probe(tr_a, tr_b, tr_ab, DEFAULT_PROBE_DEPTH_FREE)
    }

    pub fn from_free_pair_with_probe(tr_a: f64, tr_b: f64, tr_ab: f64, probe_depth: usize) -> Result<Self, RepError> {
        for (word, t) in [("a", tr_a), ("b", tr_b)] {
            if !(t.abs() > 2.0 + TRACE_TOL) {
                return Err(RepError::NotDiscernedDiscrete {
                    word: word.into(),
                    trace: t.abs(),
                });
            }
        }
        if !tr_ab.is_finite() {
            return Err(RepError::DegenerateParameters("non-finite trace".into()));
        }
        let (a, b) = torus_from_traces(tr_a.abs(), tr_b.abs() * tr_a.signum(), tr_ab);
        let images = vec![to_moebius(&a)?, to_moebius(&b)?];
        Self::validated(
            Presentation::free_rank2(),
            images,
            Source::FreePair { tr_a, tr_b, tr_ab },
            probe_depth,
        )
    }

    /// Representation from explicit generator images, validated like the others.
    pub fn from_images(p: Presentation, images: Vec<MoebiusElement>, probe_depth: usize) -> Result<Self, RepError> {
        if images.len() != p.rank() {
            return Err(WordError::TableSize {
                expected: p.rank(),
                found: images.len(),
            }
            .into());
        }
        Self::validated(p, images, Source::Matrices, probe_depth)
    }

    fn validated(
        p: Presentation,
        images: Vec<MoebiusElement>,
        source: Source,
        probe_depth: usize,
    ) -> Result<Self, RepError> {
        let relator_residual = relator_residual(&p, &images);
        if relator_residual > RELATOR_TOL {
            return Err(RepError::RelatorResidual(relator_residual));
        }
        let discreteness_witness = probe_witness(&p, &images, probe_depth)?;
        Ok(MarkedRepresentation {
            presentation: p,
            base: images.clone(),
            marking: None,
            images,
            relator_residual,
            discreteness_witness,
            source,
            history: Vec::new(),
        })
    }

    /// Representation `g -> rep(auto(g))`. Lengths are marking-invariant as a set,
    /// so the discreteness witness carries over without re-probing.
    pub fn remark(&self, auto: &EndomorphismTable) -> Result<Self, RepError> {
        auto.check_rank(&self.presentation)?;
        let marking = EndomorphismTable::new(auto.images().iter().map(|w| self.substitute(w)).collect());
        let images: Vec<MoebiusElement> = marking.images().iter().map(|w| evaluate_with(&self.base, w)).collect();
        let relator_residual = relator_residual(&self.presentation, &images);
        if relator_residual > RELATOR_TOL {
            return Err(RepError::RelatorResidual(relator_residual));
        }
        let mut history = self.history.clone();
        history.push(auto.clone());
        Ok(MarkedRepresentation {
            presentation: self.presentation.clone(),
            images,
            base: self.base.clone(),
            marking: Some(marking),
            relator_residual,
            discreteness_witness: self.discreteness_witness,
            source: self.source.clone(),
            history,
        })
    }

    pub fn presentation(&self) -> &Presentation {
        &self.presentation
    }

    pub fn mode(&self) -> PresentationMode {
        self.presentation.mode()
    }

    pub fn images(&self) -> &[MoebiusElement] {
        &self.images
    }

    /// Image of a single letter.
    pub fn letter_image(&self, l: Letter) -> MoebiusElement {
        let g = self.images[l.generator()];
        if l.is_inverse() {
            g.inverse()
        } else {
            g
        }
    }

    pub fn relator_residual(&self) -> f64 {
        self.relator_residual
    }

    pub fn discreteness_witness(&self) -> f64 {
        self.discreteness_witness
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn history(&self) -> &[EndomorphismTable] {
        &self.history
    }

    /// Images before any remarking.
    pub fn base_images(&self) -> &[MoebiusElement] {
        &self.base
    }

    /// Composite marking over the base generators (`None` if never remarked).
    pub fn marking(&self) -> Option<&EndomorphismTable> {
        self.marking.as_ref()
    }

    /// `w` rewritten over the base generators, freely reduced.
    pub fn substitute(&self, w: &GroupWord) -> GroupWord {
        match &self.marking {
            Some(m) => m.apply(w),
            None => free_reduce(w),
        }
    }

    pub fn evaluate(&self, w: &GroupWord) -> MoebiusElement {
        evaluate_with(&self.base, &self.substitute(w))
    }

    /// Conjugacy-invariant evaluation: the cyclically reduced substitution.
    fn evaluate_cyclic(&self, w: &GroupWord) -> MoebiusElement {
        evaluate_with(&self.base, &cyclic_reduce(&self.substitute(w)))
    }

    /// `|trace|` of the class of `w`.
    pub fn class_trace(&self, w: &GroupWord) -> f64 {
        self.evaluate_cyclic(w).trace().abs()
    }

    pub fn length_of_word(&self, w: &GroupWord) -> Result<f64, RepError> {
        let m = self.evaluate_cyclic(w);
        match classify(&m, TRACE_TOL) {
            IsometryClass::Hyperbolic { translation_length, .. } => Ok(translation_length),
            _ => Err(RepError::NotHyperbolic {
                word: w.to_string(),
                trace: m.trace().abs(),
            }),
        }
    }

    /// Length of the closed geodesic in the class.
    pub fn length_of(&self, c: &ConjClass) -> Result<f64, RepError> {
        self.length_of_word(c.canonical())
    }

    /// Structured text descriptor; matrices are authoritative and written with
    /// 17 significant digits, so `from_descriptor` reproduces every bit.
    pub fn to_descriptor(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "REP/1");
        let _ = writeln!(out, "mode {}", self.presentation.mode());
        match &self.source {
            Source::FenchelNielsen(f) => {
                let _ = writeln!(out, "source fenchel-nielsen");
                let _ = writeln!(out, "lengths {}", fmt_floats(&f.lengths));
                let _ = writeln!(out, "twists {}", fmt_floats(&f.twists));
            }
            Source::FreePair { tr_a, tr_b, tr_ab } => {
                let _ = writeln!(out, "source free-pair");
                let _ = writeln!(out, "traces {}", fmt_floats(&[*tr_a, *tr_b, *tr_ab]));
            }
            Source::Matrices => {
                let _ = writeln!(out, "source matrices");
            }
        }
        for t in &self.history {
            let _ = writeln!(out, "history {t}");
        }
        for (i, m) in self.images.iter().enumerate() {
            let _ = writeln!(
                out,
                "image {} {}",
                Letter::new(i as u8, false).to_char(),
                fmt_floats(&m.entries())
            );
        }
        if self.marking.is_some() {
            for (i, m) in self.base.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "base {} {}",
                    Letter::new(i as u8, false).to_char(),
                    fmt_floats(&m.entries())
                );
            }
        }
        let _ = writeln!(out, "witness {:.16e}", self.discreteness_witness);
        out
    }

    pub fn from_descriptor(text: &str) -> Result<Self, RepError> {
        let bad = |msg: &str| RepError::Format(msg.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("REP/1") {
            return Err(bad("missing REP/1 header"));
        }
        let mut mode = None;
        let mut source_kind = None;
        let mut lengths = None;
        let mut twists = None;
        let mut traces = None;
        let mut history = Vec::new();
        let mut images = Vec::new();
        let mut base = Vec::new();
        let mut witness = None;
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "mode" => mode = Some(rest.parse::<PresentationMode>().map_err(RepError::Format)?),
                "source" => source_kind = Some(rest.to_string()),
                "lengths" => lengths = Some(parse_floats::<3>(rest)?),
                "twists" => twists = Some(parse_floats::<3>(rest)?),
                "traces" => traces = Some(parse_floats::<3>(rest)?),
                "history" => history.push(rest.parse::<EndomorphismTable>()?),
                "image" => {
                    let (_, nums) = rest.split_once(' ').ok_or_else(|| bad("image line"))?;
                    let [a, b, c, d] = parse_floats::<4>(nums)?;
                    images.push(MoebiusElement::from_stored(a, b, c, d)?);
                }
                "base" => {
                    let (_, nums) = rest.split_once(' ').ok_or_else(|| bad("base line"))?;
                    let [a, b, c, d] = parse_floats::<4>(nums)?;
                    base.push(MoebiusElement::from_stored(a, b, c, d)?);
                }
                "witness" => witness = Some(parse_floats::<1>(rest)?[0]),
                other => return Err(RepError::Format(format!("unknown key {other:?}"))),
            }
        }
        let presentation = Presentation::new(mode.ok_or_else(|| bad("missing mode"))?);
        if images.len() != presentation.rank() {
            return Err(bad("wrong number of images"));
        }
        let source = match source_kind.as_deref() {
            Some("fenchel-nielsen") => Source::FenchelNielsen(FenchelNielsen::new(
                lengths.ok_or_else(|| bad("missing lengths"))?,
                twists.ok_or_else(|| bad("missing twists"))?,
            )),
            Some("free-pair") => {
                let [tr_a, tr_b, tr_ab] = traces.ok_or_else(|| bad("missing traces"))?;
                Source::FreePair { tr_a, tr_b, tr_ab }
            }
            Some("matrices") => Source::Matrices,
            _ => return Err(bad("missing or unknown source")),
        };
        let relator_residual = relator_residual(&presentation, &images);
        if relator_residual > RELATOR_TOL {
            return Err(RepError::RelatorResidual(relator_residual));
        }
        let marking = if history.is_empty() {
            if !base.is_empty() {
                return Err(bad("base images without history"));
            }
            base = images.clone();
            None
        } else {
            if base.len() != presentation.rank() {
                return Err(bad("wrong number of base images"));
            }
            for t in &history {
                t.check_rank(&presentation)?;
            }
            let composite = history
                .iter()
                .fold(EndomorphismTable::identity(presentation.rank()), |acc, t| {
                    EndomorphismTable::new(t.images().iter().map(|w| acc.apply(w)).collect())
                });
            Some(composite)
        };
        Ok(MarkedRepresentation {
            presentation,
            images,
            base,
            marking,
            relator_residual,
            discreteness_witness: witness.ok_or_else(|| bad("missing witness"))?,
            source,
            history,
        })
    }
}

fn fmt_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], RepError> {
    let vals: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| RepError::Format(format!("{t:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    vals.try_into()
        .map_err(|v: Vec<f64>| RepError::Format(format!("expected {N} numbers, found {}", v.len())))
}

/// Frozen third representation used to fingerprint conjugacy classes.
pub fn probe_representation(mode: PresentationMode) -> MarkedRepresentation {
    match mode {
        PresentationMode::GenusTwoSurface => {
            MarkedRepresentation::from_fenchel_nielsen(&FenchelNielsen::new([2.3, 1.7, 2.9], [0.37, -0.61, 0.83]))
        }
        PresentationMode::FreeRank2 => MarkedRepresentation::from_free_pair(3.3, 3.7, 5.1),
    }
    .expect("frozen probe parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moebius::{length_from_trace, translation_length};
    use crate::words::{canonical_class, dehn_reduce, twist_automorphism};
    use proptest::prelude::*;

    fn w(s: &str) -> GroupWord {
        s.parse().unwrap()
    }

    fn fn_rep(lengths: [f64; 3], twists: [f64; 3]) -> MarkedRepresentation {
        MarkedRepresentation::from_fenchel_nielsen(&FenchelNielsen::new(lengths, twists)).unwrap()
    }

    fn classes(p: &Presentation, n: usize) -> Vec<ConjClass> {
        enumerate_classes(p, n).collect()
    }

    #[test]
    fn torus_traces_have_prescribed_boundary() {
        for (l, tau, b) in [(2.0, 0.0, 2.0), (0.7, 1.3, 3.1), (3.0, -2.0, 0.4)] {
            let (x, y, z) = torus_traces(l, tau, b);
            let kappa = x * x + y * y + z * z - x * y * z - 2.0;
            assert!((kappa + 2.0 * (b / 2.0).cosh()).abs() < 1e-9);
            let (a, bm) = torus_from_traces(x, y, z);
            let ab = mul(&a, &bm);
            assert!((ab[0] + ab[3] - z).abs() < 1e-9);
            assert!((bm[0] * bm[3] - bm[1] * bm[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_surface_pants_traces() {
        let rep = fn_rep([2.0, 2.0, 2.0], [0.0; 3]);
        let expected = 2.0 * 1.0f64.cosh();
        assert!((expected - 3.0862).abs() < 1e-4);
        for c in FenchelNielsen::pants_curves() {
            let tr = rep.evaluate(&c).trace().abs();
            assert!((tr - expected).abs() < 1e-8, "{c}: {tr}");
            // trace-length identity against the eigenvalue log-ratio
            let ev = (tr + (tr * tr - 4.0).sqrt()) / 2.0;
            assert!((rep.length_of_word(&c).unwrap() - 2.0 * ev.ln()).abs() < 1e-9);
        }
        assert!(rep.relator_residual() <= RELATOR_TOL);
        assert!(rep.discreteness_witness() > 0.5);
    }

    #[test]
    fn degenerate_lengths_rejected() {
        let err = MarkedRepresentation::from_fenchel_nielsen(&FenchelNielsen::new([2.0, 1e-8, 2.0], [0.0; 3]));
        assert!(matches!(err, Err(RepError::DegenerateParameters(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fn_lengths_round_trip(
            l in prop::array::uniform3(0.3f64..4.0),
            t in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let rep = MarkedRepresentation::from_fenchel_nielsen_with_probe(&FenchelNielsen::new(l, t), 3).unwrap();
            prop_assert!(rep.relator_residual() <= RELATOR_TOL);
            for (c, len) in FenchelNielsen::pants_curves().iter().zip(l) {
                prop_assert!((rep.length_of_word(c).unwrap() - len).abs() < 1e-8);
            }
        }

        #[test]
        fn marking_is_continuous(dt in -1e-6f64..1e-6) {
            let base = fn_rep([1.9, 2.4, 2.2], [0.3, -0.2, 0.5]);
            let moved = fn_rep([1.9, 2.4, 2.2], [0.3 + dt, -0.2 + dt, 0.5 + dt]);
            for (x, y) in base.images().iter().zip(moved.images()) {
                prop_assert!(x.distance_to(y) < 1e-4);
            }
        }
    }

    #[test]
    fn full_fn_twist_is_a_dehn_twist() {
        // twisting by a full pants length equals remarking by the Dehn twist
        let p = Presentation::genus_two();
        let l = [1.7, 2.3, 2.1];
        for (i, core) in [(0usize, "a"), (1, "c")] {
            let mut shifted = [0.4, -0.3, 0.2];
            let base = fn_rep(l, shifted);
            shifted[i] += l[i];
            let twisted = fn_rep(l, shifted);
            let tau = twist_automorphism(&p, &canonical_class(&w(core), &p).unwrap(), 1).unwrap();
            for c in classes(&p, 4) {
                let direct = twisted.length_of(&c).unwrap();
                let via = base.length_of_word(&tau.apply(c.canonical())).unwrap();
                assert!((direct - via).abs() < 1e-8, "{c}: {direct} vs {via}");
            }
        }
    }

    #[test]
    fn full_twist_along_separating_curve_preserves_spectrum() {
        let p = Presentation::genus_two();
        let l = [1.7, 2.3, 2.1];
        let base = fn_rep(l, [0.4, -0.3, 0.2]);
        let twisted = fn_rep(l, [0.4, -0.3, 0.2 + l[2]]);
        let sep = canonical_class(&w("abAB"), &p).unwrap();
        let mut matched = false;
        for power in [1, -1] {
            let tau = twist_automorphism(&p, &sep, power).unwrap();
            matched |= classes(&p, 4).iter().all(|c| {
                let direct = twisted.length_of(c).unwrap();
                let via = base.length_of_word(&tau.apply(c.canonical())).unwrap();
                // twisted words are ~10x longer, so allow more roundoff
                (direct - via).abs() < 1e-7 * direct.max(1.0)
            });
        }
        assert!(matched);
    }

    #[test]
    fn kerckhoff_convexity_along_twist() {
        let p = Presentation::genus_two();
        let grid: Vec<f64> = (0..24).map(|k| -3.0 + 0.25 * k as f64).collect();
        let reps: Vec<_> = grid.iter().map(|&t| fn_rep([1.8, 2.2, 2.5], [t, 0.3, -0.4])).collect();
        for c in classes(&p, 4) {
            let ls: Vec<f64> = reps.iter().map(|r| r.length_of(&c).unwrap()).collect();
            for k in 1..ls.len() - 1 {
                let second = ls[k - 1] - 2.0 * ls[k] + ls[k + 1];
                assert!(second >= -1e-6 * ls[k], "{c} at {}: {second}", grid[k]);
            }
        }
    }

    #[test]
    fn symmetrized_twist_lengths_nondecreasing() {
        let p = Presentation::genus_two();
        let rep = fn_rep([2.0, 2.0, 2.0], [0.0; 3]);
        let a = canonical_class(&w("a"), &p).unwrap();
        let fwd: Vec<_> = (0..=5).map(|n| twist_automorphism(&p, &a, n).unwrap()).collect();
        let back: Vec<_> = (0..=5).map(|n| twist_automorphism(&p, &a, -n).unwrap()).collect();
        for c in classes(&p, 4) {
            let g: Vec<f64> = (0..=5)
                .map(|n| {
                    rep.length_of_word(&fwd[n].apply(c.canonical())).unwrap()
                        + rep.length_of_word(&back[n].apply(c.canonical())).unwrap()
                })
                .collect();
            for n in 1..g.len() {
                assert!(g[n] >= g[n - 1] - 1e-8, "{c}: {g:?}");
            }
        }
    }

    #[test]
    fn dehn_reduction_agrees_with_matrices() {
        let p = Presentation::genus_two();
        let rep = fn_rep([1.9, 2.4, 2.2], [0.3, -0.2, 0.5]);
        let input = w("abABc");
        let reduced = dehn_reduce(&input, &p);
        assert_eq!(reduced, w("dcD"));
        assert!(rep.evaluate(&input).distance_to(&rep.evaluate(&reduced)) < 1e-8);
        for s in ["abABcdC", "DCdcBAba", "bbabABcdCa", "cdCDabAd"] {
            let x = w(s);
            let y = dehn_reduce(&x, &p);
            assert!(rep.evaluate(&x).distance_to(&rep.evaluate(&y)) < 1e-8, "{s} -> {y}");
        }
    }

    #[test]
    fn free_pair_examples() {
        let rep = MarkedRepresentation::from_free_pair(3.0, 3.0, 3.01).unwrap();
        assert!(rep.discreteness_witness() > 0.0);
        let tr = |s: &str| rep.evaluate(&w(s)).trace().abs();
        assert!((tr("a") - 3.0).abs() < 1e-12 && (tr("b") - 3.0).abs() < 1e-12);
        assert!((tr("ab") - 3.01).abs() < 1e-12);

        assert!(matches!(
            MarkedRepresentation::from_free_pair(2.0, 3.0, 4.0),
            Err(RepError::NotDiscernedDiscrete { .. })
        ));
        // commutator trace 2: reducible, the commutator is parabolic
        assert!(matches!(
            MarkedRepresentation::from_free_pair(10.0, 10.0, 98.0),
            Err(RepError::NotDiscernedDiscrete { .. })
        ));
        let schottky = MarkedRepresentation::from_free_pair(10.0, 10.0, 50.0).unwrap();
        assert!(schottky.discreteness_witness() > 2.0);
        assert!((schottky.discreteness_witness() - length_from_trace(10.0)).abs() < 1e-12);
    }

    #[test]
    fn remarking_laws() {
        let p = Presentation::genus_two();
        let rep = fn_rep([1.9, 2.4, 2.2], [0.3, -0.2, 0.5]);
        let same = rep.remark(&EndomorphismTable::identity(4)).unwrap();
        for (x, y) in rep.images().iter().zip(same.images()) {
            assert_eq!(x, y);
        }
        let a = canonical_class(&w("a"), &p).unwrap();
        let tau = twist_automorphism(&p, &a, 1).unwrap();
        let once = rep.remark(&tau).unwrap();
        let b = canonical_class(&w("b"), &p).unwrap();
        assert!((once.length_of(&b).unwrap() - rep.length_of_word(&w("ba")).unwrap()).abs() < 1e-10);

        let twice = once.remark(&tau).unwrap();
        let squared = rep.remark(&twist_automorphism(&p, &a, 2).unwrap()).unwrap();
        for (x, y) in twice.images().iter().zip(squared.images()) {
            assert!(x.distance_to(y) < 1e-9);
        }
        assert_eq!(twice.history().len(), 2);
    }

    #[test]
    fn length_is_unoriented_and_homogeneous() {
        let p = Presentation::genus_two();
        let rep = fn_rep([1.9, 2.4, 2.2], [0.3, -0.2, 0.5]);
        for c in classes(&p, 3) {
            let l = rep.length_of(&c).unwrap();
            assert!((rep.length_of_word(&c.canonical().inverse()).unwrap() - l).abs() < 1e-10);
            let sq = rep.length_of_word(&c.canonical().pow(2)).unwrap();
            assert!((sq - 2.0 * l).abs() < 1e-8 * l.max(1.0));
            assert!((translation_length(&rep.evaluate(c.canonical())).unwrap() - l).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn marking_invariance(gen in 0usize..5, power in -3i64..=3, idx in 0usize..200) {
            let p = Presentation::genus_two();
            let rep = fn_rep([1.9, 2.4, 2.2], [0.3, -0.2, 0.5]);
            let curve = if gen == 4 { w("abAB") } else { p.generator(gen) };
            let t = twist_automorphism(&p, &canonical_class(&curve, &p).unwrap(), power).unwrap();
            let remarked = rep.remark(&t).unwrap();
            let all = classes(&p, 3);
            let c = &all[idx % all.len()];
            let lhs = remarked.length_of(c).unwrap();
            let rhs = rep.length_of_word(&t.apply(c.canonical())).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-8 * lhs.max(1.0));
        }
    }

    #[test]
    fn descriptor_round_trip_is_exact() {
        let p = Presentation::genus_two();
        let rep = fn_rep([1.9, 2.4, 2.2], [0.3, -0.2, 0.5]);
        let a = canonical_class(&w("a"), &p).unwrap();
        let rep = rep.remark(&twist_automorphism(&p, &a, 3).unwrap()).unwrap();
        let text = rep.to_descriptor();
        let back = MarkedRepresentation::from_descriptor(&text).unwrap();
        assert_eq!(back, rep);
        assert_eq!(back.to_descriptor(), text);

        let free = MarkedRepresentation::from_free_pair(3.0, 3.0, 4.0).unwrap();
        assert_eq!(
            MarkedRepresentation::from_descriptor(&free.to_descriptor()).unwrap(),
            free
        );
        assert!(matches!(
            MarkedRepresentation::from_descriptor("mode genus2\n"),
            Err(RepError::Format(_))
        ));
    }

    #[test]
    fn probe_representations_are_valid() {
        for mode in [PresentationMode::FreeRank2, PresentationMode::GenusTwoSurface] {
            assert!(probe_representation(mode).discreteness_witness() > 0.3);
        }
    }
}
