//! Anti-de Sitter layer: `AdS^3 = {X : det X = 1}` with the form `-det`,
//! acted on by `PSL2(R) x PSL2(R)` via `X -> A X B^-1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manhattan::{growth_exponent, EstimatorOptions, GrowthEstimate, ManhattanError, KAPPA_CUMULATIVE};
use crate::moebius::{IsometryClass, MoebiusElement, ProjPoint, TRACE_TOL};
use crate::spectrum::PairSpectrum;

/// Tolerance of `B(X, Y) <= -1` for spacelike separation.
pub const SPACELIKE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AdsError {
    #[error("points are not spacelike separated: B = {0}")]
    NotSpacelikeSeparated(f64),
    #[error("both components must be hyperbolic")]
    NotHyperbolicPair,
    #[error("not a point of AdS: det = {0}")]
    NotOnAds(f64),
    #[error(transparent)]
    Manhattan(#[from] ManhattanError),
}

/// A real 2x2 matrix `[[m11, m12], [m21, m22]]` with `det = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdsPoint([f64; 4]);

fn mat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn mat_det(m: &[f64; 4]) -> f64 {
    m[0] * m[3] - m[1] * m[2]
}

fn mat_inv(m: &[f64; 4]) -> [f64; 4] {
    let d = mat_det(m);
    [m[3] / d, -m[1] / d, -m[2] / d, m[0] / d]
}

impl AdsPoint {
    pub const IDENTITY: AdsPoint = AdsPoint([1.0, 0.0, 0.0, 1.0]);

    pub fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Result<Self, AdsError> {
        let m = [m11, m12, m21, m22];
        let d = mat_det(&m);
        if (d - 1.0).abs() > 1e-9 * (1.0 + m.iter().map(|v| v * v).sum::<f64>()) {
            return Err(AdsError::NotOnAds(d));
        }
        Ok(AdsPoint(m))
    }

    pub fn from_moebius(m: &MoebiusElement) -> Self {
        AdsPoint(m.entries())
    }

    /// `diag(e^t, e^-t)`: unit-speed spacelike geodesic through `I`.
    pub fn diagonal(t: f64) -> Self {
        AdsPoint([t.exp(), 0.0, 0.0, (-t).exp()])
    }

    /// Rotation by `theta`: a timelike direction from `I`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        AdsPoint([c, -s, s, c])
    }

    pub fn entries(&self) -> [f64; 4] {
        self.0
    }

    pub fn det(&self) -> f64 {
        mat_det(&self.0)
    }
}

/// Polarization of `-det`: `B(X, Y) = -(x11 y22 + y11 x22 - x12 y21 - y12 x21) / 2`.
pub fn ads_form(x: &AdsPoint, y: &AdsPoint) -> f64 {
    let (a, b) = (x.0, y.0);
    -(a[0] * b[3] + b[0] * a[3] - a[1] * b[2] - b[1] * a[2]) / 2.0
}

/// `arccosh(-B(X, Y))` along a spacelike geodesic.
pub fn spacelike_distance(x: &AdsPoint, y: &AdsPoint) -> Result<f64, AdsError> {
    let b = ads_form(x, y);
    if b > -1.0 + SPACELIKE_TOL {
        return Err(AdsError::NotSpacelikeSeparated(b));
    }
    Ok((-b).max(1.0).acosh())
}

/// `(A, B)` acting by `X -> A X B^-1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdsIsometry {
    pub left: MoebiusElement,
    pub right: MoebiusElement,
}

/// Boundary point `[u_L u_R^T]` in the Segre model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub left: ProjPoint,
    pub right: ProjPoint,
}

fn proj_vec(p: &ProjPoint) -> [f64; 2] {
    [p.x, p.y]
}

/// Lift with non-negative trace.
fn positive_lift(m: &MoebiusElement) -> [f64; 4] {
    let e = m.entries();
    if m.trace() < 0.0 {
        e.map(|v| -v)
    } else {
        e
    }
}

impl BoundaryPoint {
    /// The rank-one matrix `u_L u_R^T` (unit vectors, so the scale is fixed up to sign).
    pub fn matrix(&self) -> [f64; 4] {
        let (l, r) = (proj_vec(&self.left), proj_vec(&self.right));
        [l[0] * r[0], l[0] * r[1], l[1] * r[0], l[1] * r[1]]
    }

    /// Projective distance in each factor, maximized.
    pub fn distance(&self, other: &BoundaryPoint) -> f64 {
        self.left.distance(&other.left).max(self.right.distance(&other.right))
    }
}

/// How a fixed boundary point attracts nearby points under `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedPointKind {
    Attracting,
    Repelling,
    /// Attracting in one factor, repelling in the other.
    Saddle,
}

fn ends(m: &MoebiusElement) -> Option<(ProjPoint, ProjPoint)> {
    match m.classify(TRACE_TOL) {
        IsometryClass::Hyperbolic {
            attracting, repelling, ..
        } => Some((attracting, repelling)),
        _ => None,
    }
}

/// `B* = (B^-1)^T`, the action of `B` on the right factor of the boundary.
fn dual(m: &MoebiusElement) -> MoebiusElement {
    let [a, b, c, d] = m.inverse().entries();
    MoebiusElement::new(a, c, b, d).expect("transpose of a unimodular matrix")
}

impl AdsIsometry {
    pub fn new(left: MoebiusElement, right: MoebiusElement) -> Self {
        AdsIsometry { left, right }
    }

    pub fn apply(&self, x: &AdsPoint) -> AdsPoint {
        AdsPoint(mat_mul(
            &mat_mul(&self.left.entries(), &x.0),
            &self.right.inverse().entries(),
        ))
    }

    /// Boundary action `u_L u_R^T -> (A u_L) (B* u_R)^T`.
    pub fn apply_boundary(&self, p: &BoundaryPoint) -> BoundaryPoint {
        BoundaryPoint {
            left: self.left.apply(&p.left),
            right: dual(&self.right).apply(&p.right),
        }
    }

    pub fn compose(&self, other: &AdsIsometry) -> AdsIsometry {
        AdsIsometry::new(self.left.compose(&other.left), self.right.compose(&other.right))
    }

    pub fn inverse(&self) -> AdsIsometry {
        AdsIsometry::new(self.left.inverse(), self.right.inverse())
    }

    /// The four fixed boundary points with their type.
    pub fn boundary_fixed_points(&self) -> Result<[(BoundaryPoint, FixedPointKind); 4], AdsError> {
        let (la, lr) = ends(&self.left).ok_or(AdsError::NotHyperbolicPair)?;
        let (ra, rr) = ends(&dual(&self.right)).ok_or(AdsError::NotHyperbolicPair)?;
        let bp = |left, right| BoundaryPoint { left, right };
        Ok([
            (bp(la, ra), FixedPointKind::Attracting),
            (bp(lr, rr), FixedPointKind::Repelling),
            (bp(la, rr), FixedPointKind::Saddle),
            (bp(lr, ra), FixedPointKind::Saddle),
        ])
    }

    /// Axis endpoints `(g+, g-)`: attracting resp. repelling in both factors.
    /// The saddle pair spans the other invariant geodesic and is excluded.
    pub fn axis(&self) -> Result<(BoundaryPoint, BoundaryPoint), AdsError> {
        let pts = self.boundary_fixed_points()?;
        Ok((pts[0].0, pts[1].0))
    }

    /// A point on the axis: `o = P_L Q^-1` where `P_L` has columns
    /// (attracting, repelling) of `A` and `Q` has columns (repelling,
    /// attracting) of `B`, both scaled to determinant 1. Then
    /// `g o = P_L diag(e^{(l1+l2)/2}, e^{-(l1+l2)/2}) Q^-1`.
    pub fn axis_point(&self) -> Result<AdsPoint, AdsError> {
        let frame = |first: ProjPoint, second: ProjPoint| -> [f64; 4] {
            let (u, v) = (proj_vec(&first), proj_vec(&second));
            let mut m = [u[0], v[0], u[1], v[1]];
            let d = mat_det(&m);
            let s = d.abs().sqrt();
            // second column absorbs the sign so that det = 1
            m = [m[0] / s, m[1] / d * s, m[2] / s, m[3] / d * s];
            m
        };
        let (la, lr) = ends(&self.left).ok_or(AdsError::NotHyperbolicPair)?;
        let (ra, rr) = ends(&self.right).ok_or(AdsError::NotHyperbolicPair)?;
        let p = frame(la, lr);
        let q = frame(rr, ra);
        Ok(AdsPoint(mat_mul(&p, &mat_inv(&q))))
    }

    /// Direct Lorentzian translation length `d(o, g o)` for `o` on the axis,
    /// acting by the positive-trace lifts.
    pub fn lorentz_length(&self) -> Result<LorentzLength, AdsError> {
        let o = self.axis_point()?;
        let (a, b) = (positive_lift(&self.left), positive_lift(&self.right));
        let image = AdsPoint(mat_mul(&mat_mul(&a, &o.0), &mat_inv(&b)));
        let direct = spacelike_distance(&o, &image)?;
        let l1 = self
            .left
            .translation_length()
            .map_err(|_| AdsError::NotHyperbolicPair)?;
        let l2 = self
            .right
            .translation_length()
            .map_err(|_| AdsError::NotHyperbolicPair)?;
        let formula = (l1 + l2) / 2.0;
        Ok(LorentzLength {
            direct,
            formula,
            difference: (direct - formula).abs(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzLength {
    /// Spacelike distance from an axis point to its image.
    pub direct: f64,
    /// `(l(left) + l(right)) / 2`.
    pub formula: f64,
    pub difference: f64,
}

/// Growth of `#{c : (l1 + l2)/2 <= R}`; the counts are those of the pair
/// exponent at `T = 2R`, so the result is exactly twice it.
pub fn delta_lorentz(s: &PairSpectrum, opts: &EstimatorOptions) -> Result<GrowthEstimate, AdsError> {
    let t_max = s.certified_limit(1.0, 1.0);
    let series = opts
        .grid(t_max)
        .into_iter()
        .map(|t| Ok((t / 2.0, s.count_weighted(1.0, 1.0, t).map_err(ManhattanError::from)?)))
        .collect::<Result<Vec<_>, AdsError>>()?;
    Ok(growth_exponent(&series, KAPPA_CUMULATIVE, opts)?)
}
