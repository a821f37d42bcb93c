//! PSL(2,R) numerics: sign-normalized unit-determinant matrices acting on the
//! upper half-plane by Moebius transformations.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance on the trace boundary |tr| = 2.
pub const TRACE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MoebiusError {
    #[error("element is not hyperbolic (|trace| = {trace})")]
    NotHyperbolic { trace: f64 },
    #[error("determinant {det} is not positive")]
    NonPositiveDeterminant { det: f64 },
    #[error("non-finite matrix entry")]
    NonFinite,
}

/// A real 2x2 matrix of determinant one, taken modulo sign.
///
/// The stored representative has its first non-negligible entry positive, so
/// two elements of PSL(2,R) compare equal entrywise iff they are equal.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoebiusElement {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl fmt::Debug for MoebiusElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// A point of the real projective line, stored as a unit vector with its
/// first non-zero coordinate positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjPoint {
    pub x: f64,
    pub y: f64,
}

impl ProjPoint {
    pub fn new(x: f64, y: f64) -> Self {
        let n = x.hypot(y);
        let (mut x, mut y) = (x / n, y / n);
        if x < -1e-15 || (x.abs() <= 1e-15 && y < 0.0) {
            x = -x;
            y = -y;
        }
        ProjPoint { x, y }
    }

    /// Affine coordinate x/y on the boundary of the upper half-plane (infinite for [1:0]).
    pub fn affine(&self) -> f64 {
        self.x / self.y
    }

    /// Distance on the circle RP^1 (sine of the angle between representatives).
    pub fn distance(&self, other: &ProjPoint) -> f64 {
        (self.x * other.y - self.y * other.x).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum IsometryClass {
    Identity,
    Elliptic,
    Parabolic,
    Hyperbolic {
        translation_length: f64,
        attracting: ProjPoint,
        repelling: ProjPoint,
    },
}

impl IsometryClass {
    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, IsometryClass::Hyperbolic { .. })
    }
}

fn normalize_sign(m: [f64; 4]) -> [f64; 4] {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let thresh = 1e-12 * scale;
    let lead = m.iter().copied().find(|v| v.abs() > thresh).unwrap_or(1.0);
    if lead < 0.0 {
        [-m[0], -m[1], -m[2], -m[3]]
    } else {
        m
    }
}

impl MoebiusElement {
    pub const IDENTITY: MoebiusElement = MoebiusElement {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    /// Builds an element from entries, rescaling by `sqrt(det)`.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, MoebiusError> {
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(MoebiusError::NonFinite);
        }
        let det = a * d - b * c;
        if det <= 0.0 {
            return Err(MoebiusError::NonPositiveDeterminant { det });
        }
        if (det - 1.0).abs() < 1e-14 {
            return Ok(Self::from_normalized([a, b, c, d]));
        }
        let s = det.sqrt();
        Ok(Self::from_normalized([a / s, b / s, c / s, d / s]))
    }

    /// Builds an element from entries that are already normalized (e.g. read back
    /// from a file), keeping their bits; only validates the determinant to `1e-9`.
    pub fn from_stored(a: f64, b: f64, c: f64, d: f64) -> Result<Self, MoebiusError> {
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(MoebiusError::NonFinite);
        }
        let det = a * d - b * c;
        let scale = (a * d).abs() + (b * c).abs();
        if det <= 0.0 || (det - 1.0).abs() > 1e-9 * scale.max(1.0) {
            return Err(MoebiusError::NonPositiveDeterminant { det });
        }
        Ok(Self::from_normalized([a, b, c, d]))
    }

    fn from_normalized(m: [f64; 4]) -> Self {
        let [a, b, c, d] = normalize_sign(m);
        MoebiusElement { a, b, c, d }
    }

    /// Divides by `sqrt(det)` unless the deviation of the computed determinant is
    /// within its error (large entries make `ad - bc` unreliable).
    fn renormalized(m: [f64; 4]) -> Self {
        let ad = m[0] * m[3];
        let bc = m[1] * m[2];
        let det = ad - bc;
        // accumulated entry errors make the determinant of long products
        // unresolvable well before the entries overflow
        if det <= 0.0 || (det - 1.0).abs() <= 1e-9 * (ad.abs() + bc.abs()) {
            return Self::from_normalized(m);
        }
        let s = det.sqrt();
        Self::from_normalized([m[0] / s, m[1] / s, m[2] / s, m[3] / s])
    }

    pub fn diagonal(lambda: f64) -> Self {
        Self::from_normalized([lambda, 0.0, 0.0, 1.0 / lambda])
    }

    /// Hyperbolic element translating along the imaginary axis by `length`.
    pub fn translation(length: f64) -> Self {
        Self::diagonal((length / 2.0).exp())
    }

    /// Rotation by angle `theta` about i (acting on the disc model by `2 theta`).
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::from_normalized([c, -s, s, c])
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// Trace of the stored representative; only its absolute value is meaningful in PSL(2,R).
    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn compose(&self, other: &MoebiusElement) -> MoebiusElement {
        let m = [
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        ];
        Self::renormalized(m)
    }

    pub fn inverse(&self) -> MoebiusElement {
        Self::from_normalized([self.d, -self.b, -self.c, self.a])
    }

    /// `h * self * h^-1`.
    pub fn conjugate(&self, h: &MoebiusElement) -> MoebiusElement {
        h.compose(self).compose(&h.inverse())
    }

    pub fn pow(&self, n: i64) -> MoebiusElement {
        let mut base = if n < 0 { self.inverse() } else { *self };
        let mut k = n.unsigned_abs();
        let mut acc = Self::IDENTITY;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.compose(&base);
            }
            base = base.compose(&base);
            k >>= 1;
        }
        acc
    }

    /// Action on a projective point (column vector).
    pub fn apply(&self, p: &ProjPoint) -> ProjPoint {
        ProjPoint::new(self.a * p.x + self.b * p.y, self.c * p.x + self.d * p.y)
    }

    /// Largest entrywise difference between two elements of PSL(2,R).
    pub fn distance_to(&self, other: &MoebiusElement) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries().iter())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
    }

    pub fn classify(&self, tol: f64) -> IsometryClass {
        classify(self, tol)
    }

    pub fn translation_length(&self) -> Result<f64, MoebiusError> {
        translation_length(self)
    }
}

/// Classification by the trace trichotomy, with fixed points for hyperbolic elements.
pub fn classify(m: &MoebiusElement, tol: f64) -> IsometryClass {
    let t = m.trace().abs();
    if t > 2.0 + tol {
        let (translation_length, attracting, repelling) = hyperbolic_data(m);
        return IsometryClass::Hyperbolic {
            translation_length,
            attracting,
            repelling,
        };
    }
    if t < 2.0 - tol {
        return IsometryClass::Elliptic;
    }
    if m.distance_to(&MoebiusElement::IDENTITY) <= tol.max(1e-12) {
        IsometryClass::Identity
    } else {
        IsometryClass::Parabolic
    }
}

fn hyperbolic_data(m: &MoebiusElement) -> (f64, ProjPoint, ProjPoint) {
    // Work with the positive-trace lift so the large eigenvalue is positive.
    let [mut a, mut b, mut c, mut d] = m.entries();
    if a + d < 0.0 {
        a = -a;
        b = -b;
        c = -c;
        d = -d;
    }
    let half = (a + d) / 2.0;
    let disc = (half * half - 1.0).sqrt();
    let big = half + disc;
    let small = 1.0 / big;
    (
        2.0 * big.ln(),
        eigenvector(a, b, c, d, big),
        eigenvector(a, b, c, d, small),
    )
}

fn eigenvector(a: f64, b: f64, c: f64, d: f64, lambda: f64) -> ProjPoint {
    // Rows of (M - lambda I) give two candidate kernel vectors; take the better conditioned one.
    let v1 = (b, lambda - a);
    let v2 = (lambda - d, c);
    if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) {
        ProjPoint::new(v1.0, v1.1)
    } else {
        ProjPoint::new(v2.0, v2.1)
    }
}

/// `2 arccosh(|tr|/2)`; errors unless the element is hyperbolic at the default tolerance.
pub fn translation_length(m: &MoebiusElement) -> Result<f64, MoebiusError> {
    let t = m.trace().abs();
    if t > 2.0 + TRACE_TOL {
        Ok(length_from_trace(t))
    } else {
        Err(MoebiusError::NotHyperbolic { trace: t })
    }
}

/// Translation length for a given |trace| > 2, stable for traces near 2.
pub fn length_from_trace(abs_trace: f64) -> f64 {
    let h = abs_trace / 2.0;
    // arccosh(h) = ln(h + sqrt((h-1)(h+1)))
    2.0 * (h + ((h - 1.0) * (h + 1.0)).sqrt()).ln()
}

/// Hyperbolic distance between `i` and `m(i)`: cosh d = (a^2+b^2+c^2+d^2)/2.
pub fn displacement(m: &MoebiusElement) -> f64 {
    let [a, b, c, d] = m.entries();
    let ch = 0.5 * (a * a + b * b + c * c + d * d);
    ch.max(1.0).acosh()
}
