//! Deformation families and the AdS battery.

use anyhow::{bail, Context, Result};
use manhattan_core::adscheck::AdsIsometry;
use manhattan_core::manhattan::{delta_pair, dilation_bounds, GrowthEstimate};
use manhattan_core::moebius::MoebiusElement;
use manhattan_core::reps::{FenchelNielsen, MarkedRepresentation};
use manhattan_core::spectrum::PairSpectrum;
use manhattan_core::words::{
    canonical_class, enumerate_classes, penner_map, twist_automorphism, ConjClass, EndomorphismTable, GroupWord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::pair_spectrum;
use crate::config::{Mode, RunConfig};
use crate::report::{csv_table, num, Check, Output, Report};
use crate::svg::{Plot, Series};

pub const EXPERIMENTS: [&str; 6] = [
    "dehn-twist",
    "fn-path",
    "pseudo-anosov",
    "shrink",
    "isolation-continuity",
    "ads-verify",
];

pub fn run(name: &str, cfg: &RunConfig) -> Result<Output> {
    match name {
        "dehn-twist" => dehn_twist(cfg),
        "fn-path" => fn_path(cfg),
        "pseudo-anosov" => pseudo_anosov(cfg),
        "shrink" => shrink(cfg),
        "isolation-continuity" => isolation_continuity(cfg),
        "ads-verify" => ads_verify(cfg),
        _ => bail!(
            "cli: unknown experiment {name:?} (expected one of {})",
            EXPERIMENTS.join(", ")
        ),
    }
}

/// One member of a deformation family.
#[derive(Clone, Debug, Serialize)]
pub struct FamilyPoint {
    pub n: usize,
    /// Deformation parameter (twist or scale), if not just `n`.
    pub t: f64,
    pub cutoff: f64,
    pub classes: usize,
    pub delta: GrowthEstimate,
    pub thurston_lower_bound: f64,
}

fn family_point(cfg: &RunConfig, n: usize, t: f64, s: &PairSpectrum) -> Result<FamilyPoint> {
    Ok(FamilyPoint {
        n,
        t,
        cutoff: s.cutoff(),
        classes: s.len(),
        delta: delta_pair(s, &cfg.estimator).context("manhattan")?,
        thurston_lower_bound: dilation_bounds(s).context("manhattan")?.thurston_lower_bound,
    })
}

/// Pair spectrum whose cutoff starts at `start` and grows by 20% until it
/// holds `experiment.population` classes or reaches `experiment.max_cutoff`.
pub fn adaptive_spectrum(
    cfg: &RunConfig,
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    start: f64,
) -> Result<PairSpectrum> {
    let e = &cfg.experiment;
    let mut t = start.min(e.max_cutoff);
    loop {
        let s = pair_spectrum(cfg, r1, r2, t, (1.0, 1.0))?;
        if s.len() >= e.population || t >= e.max_cutoff {
            return Ok(s);
        }
        t = (t * 1.2).min(e.max_cutoff);
    }
}

/// Pairs `(phi^-n S0, phi^n S0)` for `n = 0..=steps`, each enumerated adaptively.
fn automorphism_family(
    cfg: &RunConfig,
    r: &MarkedRepresentation,
    power: impl Fn(i64) -> Result<EndomorphismTable>,
) -> Result<Vec<FamilyPoint>> {
    let mut points: Vec<FamilyPoint> = Vec::new();
    let mut start = cfg.run.cutoff;
    for n in 0..=cfg.experiment.steps {
        let k = n as i64;
        let r1 = r.remark(&power(-k)?).context("reps")?;
        let r2 = r.remark(&power(k)?).context("reps")?;
        let s = adaptive_spectrum(cfg, &r1, &r2, start)?;
        start = s.cutoff();
        points.push(family_point(cfg, n, n as f64, &s)?);
    }
    Ok(points)
}

fn family_rows(points: &[FamilyPoint]) -> String {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.n.to_string(),
                num(p.t),
                num(p.cutoff),
                p.classes.to_string(),
                num(p.delta.exponent),
                num(p.delta.stderr),
                num(p.thurston_lower_bound),
            ]
        })
        .collect();
    csv_table(
        &["n", "t", "cutoff", "classes", "delta", "stderr", "thurston_lower_bound"],
        &rows,
    )
}

fn family_plot(title: &str, x_label: &str, points: &[FamilyPoint], reference: Option<f64>) -> String {
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.t, p.delta.exponent)).collect();
    let (x0, x1) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let mut series = vec![Series {
        label: "delta".into(),
        points: pts,
        color: "#1f77b4",
        dashed: false,
        markers: true,
    }];
    if let Some(r) = reference {
        series.push(Series {
            label: format!("{r}"),
            points: vec![(x0, r), (x1, r)],
            color: "#888888",
            dashed: true,
            markers: false,
        });
    }
    Plot {
        title: title.into(),
        x_label: x_label.into(),
        y_label: "delta".into(),
        x_range: (x0, x1),
        y_range: (0.0, 0.6),
        series,
    }
    .render()
}

fn family_output(
    name: &str,
    cfg: &RunConfig,
    results: impl Serialize,
    points: &[FamilyPoint],
    checks: Vec<Check>,
    x_label: &str,
) -> Output {
    let reference = (cfg.run.mode == Mode::GenusTwo).then_some(0.5);
    let mut out = Output::new(Report::new(
        &format!("experiment-{name}"),
        cfg,
        "class",
        results,
        checks,
    ));
    out.add(&format!("{name}.csv"), family_rows(points));
    out.add(&format!("{name}.svg"), family_plot(name, x_label, points, reference));
    out
}

/// `delta(n) <= delta(n-1) + tol` for consecutive members.
fn non_increasing_checks(cfg: &RunConfig, points: &[FamilyPoint]) -> Vec<Check> {
    points
        .windows(2)
        .map(|w| {
            Check::le(
                format!("delta({}) <= delta({})", w[1].n, w[0].n),
                w[1].delta.exponent,
                w[0].delta.exponent,
                cfg.estimator.tol(w[0].delta.stderr + w[1].delta.stderr),
            )
        })
        .collect()
}

/// Twist curve of the experiment: a pants curve in genus 2, `a` or `b` in the free group.
pub fn twist_curve(cfg: &RunConfig, r: &MarkedRepresentation) -> Result<ConjClass> {
    let i = cfg.experiment.curve;
    let w: GroupWord = match cfg.run.mode {
        Mode::GenusTwo => FenchelNielsen::pants_curves()[i].clone(),
        Mode::FreeRank2 => match i {
            0 => "a".parse().context("words")?,
            1 => "b".parse().context("words")?,
            _ => bail!("config: experiment.curve must be 0 or 1 in mode free-rank2"),
        },
    };
    canonical_class(&w, r.presentation()).context("words")
}

/// `g(n) = l(tau^n c) + l(tau^-n c)` over short classes.
#[derive(Clone, Debug, Serialize)]
pub struct ExactTwistLayer {
    pub word_length: usize,
    pub max_power: usize,
    pub classes: usize,
    /// Largest `g(n-1) - g(n)` over all classes and `n` (non-positive if monotone).
    pub worst_decrease: f64,
    pub worst_class: String,
}

pub fn exact_twist_layer(cfg: &RunConfig, r: &MarkedRepresentation, curve: &ConjClass) -> Result<ExactTwistLayer> {
    let e = &cfg.experiment;
    let p = r.presentation();
    let tables = (0..=e.exact_power as i64)
        .map(|n| Ok((twist_automorphism(p, curve, n)?, twist_automorphism(p, curve, -n)?)))
        .collect::<Result<Vec<_>, manhattan_core::words::WordError>>()
        .context("words")?;
    let classes: Vec<ConjClass> = enumerate_classes(p, e.exact_word_length).collect();
    let per_class = classes
        .par_iter()
        .map(|c| {
            let w = c.canonical();
            let g = tables
                .iter()
                .map(|(fwd, back)| Ok(r.length_of_word(&fwd.apply(w))? + r.length_of_word(&back.apply(w))?))
                .collect::<Result<Vec<f64>, manhattan_core::reps::RepError>>()?;
            let worst = g.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
            Ok((worst, c.to_string()))
        })
        .collect::<Result<Vec<_>, manhattan_core::reps::RepError>>()
        .context("reps")?;
    let (worst_decrease, worst_class) =
        per_class.into_iter().fold(
            (f64::NEG_INFINITY, String::new()),
            |acc, x| if x.0 > acc.0 { x } else { acc },
        );
    Ok(ExactTwistLayer {
        word_length: e.exact_word_length,
        max_power: e.exact_power,
        classes: classes.len(),
        worst_decrease,
        worst_class,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DehnTwistResults {
    pub curve: String,
    pub exact: ExactTwistLayer,
    pub family: Vec<FamilyPoint>,
}

pub fn dehn_twist_results(cfg: &RunConfig) -> Result<DehnTwistResults> {
    let r = cfg.surface1.build(cfg.run.mode).context("surface1")?;
    let curve = twist_curve(cfg, &r)?;
    let exact = exact_twist_layer(cfg, &r, &curve)?;
    let p = r.presentation().clone();
    let family = automorphism_family(cfg, &r, |k| twist_automorphism(&p, &curve, k).context("words"))?;
    Ok(DehnTwistResults {
        curve: curve.to_string(),
        exact,
        family,
    })
}

fn dehn_twist(cfg: &RunConfig) -> Result<Output> {
    let res = dehn_twist_results(cfg)?;
    let e = &cfg.experiment;
    let mut checks = vec![Check::le(
        "exact layer: max g(n-1) - g(n)",
        res.exact.worst_decrease,
        0.0,
        e.exact_tol,
    )];
    checks.extend(non_increasing_checks(cfg, &res.family));
    let (first, last) = (&res.family[0], &res.family[res.family.len() - 1]);
    checks.push(Check::le(
        format!("delta({}) <= delta(0) - min_drop", last.n),
        last.delta.exponent,
        first.delta.exponent - e.min_drop,
        0.0,
    ));
    checks.push(Check::le(
        format!("delta({}) < 1/2", last.n),
        last.delta.exponent,
        0.5,
        0.0,
    ));
    let points = res.family.clone();
    Ok(family_output("dehn-twist", cfg, &res, &points, checks, "n"))
}

#[derive(Clone, Debug, Serialize)]
pub struct PseudoAnosovResults {
    pub family: Vec<FamilyPoint>,
}

pub fn pseudo_anosov_results(cfg: &RunConfig) -> Result<PseudoAnosovResults> {
    if cfg.run.mode != Mode::FreeRank2 {
        bail!("cli: pseudo-anosov needs mode free-rank2 (the filling pair a, b of the one-holed torus)");
    }
    let r = cfg.surface1.build(cfg.run.mode).context("surface1")?;
    let p = r.presentation().clone();
    let a = canonical_class(&"a".parse().context("words")?, &p).context("words")?;
    let b = canonical_class(&"b".parse().context("words")?, &p).context("words")?;
    let family = automorphism_family(cfg, &r, |k| penner_map(&p, &a, &b, k).context("words"))?;
    Ok(PseudoAnosovResults { family })
}

fn pseudo_anosov(cfg: &RunConfig) -> Result<Output> {
    let res = pseudo_anosov_results(cfg)?;
    let f = &res.family;
    let mut checks: Vec<Check> = f
        .windows(2)
        .map(|w| {
            Check::gt(
                format!("delta({}) < delta({})", w[1].n, w[0].n),
                w[0].delta.exponent - w[1].delta.exponent,
                0.0,
            )
        })
        .collect();
    checks.push(Check::ge(
        "total drop",
        f[0].delta.exponent - f[f.len() - 1].delta.exponent,
        cfg.experiment.pa_min_drop,
        0.0,
    ));
    Ok(family_output("pseudo-anosov", cfg, &res, f, checks, "n"))
}

fn fenchel_nielsen(cfg: &RunConfig, name: &str) -> Result<FenchelNielsen> {
    if cfg.run.mode != Mode::GenusTwo {
        bail!("cli: {name} needs mode genus-two (Fenchel-Nielsen coordinates)");
    }
    let s = &cfg.surface1;
    Ok(FenchelNielsen::new(
        s.lengths.context("config: surface1 needs `lengths`")?,
        s.twists.unwrap_or([0.0; 3]),
    ))
}

/// `delta(S0, S_t)` for FN deformations `S_t`, computed concurrently.
fn fn_family(
    cfg: &RunConfig,
    base: &FenchelNielsen,
    params: &[f64],
    deform: impl Fn(f64) -> FenchelNielsen + Sync,
) -> Result<Vec<FamilyPoint>> {
    let r0 = MarkedRepresentation::from_fenchel_nielsen(base).context("reps")?;
    params
        .par_iter()
        .enumerate()
        .map(|(n, &t)| {
            let r = MarkedRepresentation::from_fenchel_nielsen(&deform(t)).context("reps")?;
            let s = pair_spectrum(cfg, &r0, &r, cfg.run.cutoff, (1.0, 1.0))?;
            family_point(cfg, n, t, &s)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FnPathResults {
    pub period: f64,
    pub family: Vec<FamilyPoint>,
    /// `delta(t + period) - delta(t)` for every grid point with a successor one period later.
    pub period_drift: Vec<(f64, f64)>,
    pub max_abs_drift: f64,
    /// `max delta - min delta` along the path.
    pub oscillation: f64,
    /// `(h, max |delta(t + h) - delta(t)|)` over grid lags `h`.
    pub modulus: Vec<(f64, f64)>,
}

pub fn fn_path_results(cfg: &RunConfig) -> Result<FnPathResults> {
    let base = fenchel_nielsen(cfg, "fn-path")?;
    let e = &cfg.experiment;
    let i = e.curve;
    let period = 2.0 * base.lengths[i];
    let ps = e.period_samples.max(1);
    let step = e.amplitude * period / ps as f64;
    let params: Vec<f64> = (0..=e.periods * ps).map(|k| base.twists[i] + k as f64 * step).collect();
    let family = fn_family(cfg, &base, &params, |t| {
        let mut f = base;
        f.twists[i] = t;
        f
    })?;
    let d: Vec<f64> = family.iter().map(|p| p.delta.exponent).collect();
    let period_drift: Vec<(f64, f64)> = (0..d.len().saturating_sub(ps))
        .map(|k| (params[k], d[k + ps] - d[k]))
        .collect();
    let modulus = (1..d.len())
        .map(|j| {
            let w = (0..d.len() - j).map(|k| (d[k + j] - d[k]).abs()).fold(0.0, f64::max);
            (j as f64 * step, w)
        })
        .collect();
    Ok(FnPathResults {
        period,
        max_abs_drift: period_drift.iter().map(|p| p.1.abs()).fold(0.0, f64::max),
        oscillation: d.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - d.iter().cloned().fold(f64::INFINITY, f64::min),
        period_drift,
        modulus,
        family,
    })
}

fn fn_path(cfg: &RunConfig) -> Result<Output> {
    let res = fn_path_results(cfg)?;
    let checks = res
        .family
        .iter()
        .map(|p| {
            Check::le(
                format!("delta(t = {}) <= 1/2", p.t),
                p.delta.exponent,
                0.5,
                cfg.estimator.tol(p.delta.stderr),
            )
        })
        .collect();
    let modulus = csv_table(
        &["h", "omega"],
        &res.modulus
            .iter()
            .map(|(h, w)| vec![num(*h), num(*w)])
            .collect::<Vec<_>>(),
    );
    let mut out = family_output("fn-path", cfg, &res, &res.family, checks, "twist t");
    out.add("fn-path-modulus.csv", modulus);
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ShrinkPoint {
    pub n: usize,
    pub length: f64,
    pub delta: GrowthEstimate,
    pub disjoint_classes: usize,
    /// Exponent of the sub-spectrum of classes disjoint from the shrunk curve.
    pub disjoint_delta: Option<GrowthEstimate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShrinkResults {
    pub curve: String,
    pub points: Vec<ShrinkPoint>,
}

/// Classes disjoint from a simple closed curve are exactly those fixed by the
/// Dehn twist along it.
fn disjoint_from(curve: &ConjClass, twist: &EndomorphismTable, c: &ConjClass, r: &MarkedRepresentation) -> bool {
    c == curve || canonical_class(&twist.apply(c.canonical()), r.presentation()).is_ok_and(|d| d == *c)
}

pub fn shrink_results(cfg: &RunConfig) -> Result<ShrinkResults> {
    let base = fenchel_nielsen(cfg, "shrink")?;
    let i = cfg.experiment.curve;
    let r0 = MarkedRepresentation::from_fenchel_nielsen(&base).context("reps")?;
    let curve = twist_curve(cfg, &r0)?;
    let twist = twist_automorphism(r0.presentation(), &curve, 1).context("words")?;
    let points = (0..=cfg.experiment.steps)
        .into_par_iter()
        .map(|n| {
            let mut f = base;
            f.lengths[i] *= (-(n as f64)).exp();
            let r = MarkedRepresentation::from_fenchel_nielsen(&f).context("reps")?;
            let s = pair_spectrum(cfg, &r0, &r, cfg.run.cutoff, (1.0, 1.0))?;
            let sub = s.filtered(|e| disjoint_from(&curve, &twist, &e.class, &r0));
            Ok(ShrinkPoint {
                n,
                length: f.lengths[i],
                delta: delta_pair(&s, &cfg.estimator).context("manhattan")?,
                disjoint_classes: sub.len(),
                disjoint_delta: delta_pair(&sub, &cfg.estimator).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShrinkResults {
        curve: curve.to_string(),
        points,
    })
}

fn shrink(cfg: &RunConfig) -> Result<Output> {
    let res = shrink_results(cfg)?;
    let min = cfg.experiment.min_exponent;
    let mut checks = Vec::new();
    for p in &res.points {
        checks.push(Check::ge(
            format!("delta(n = {}) >= min_exponent", p.n),
            p.delta.exponent,
            min,
            0.0,
        ));
        match &p.disjoint_delta {
            Some(d) => {
                checks.push(Check::ge(
                    format!("disjoint delta(n = {}) >= min_exponent", p.n),
                    d.exponent,
                    min,
                    0.0,
                ));
                checks.push(Check::ge(
                    format!("delta(n = {}) >= disjoint delta", p.n),
                    p.delta.exponent,
                    d.exponent,
                    cfg.estimator.tol(p.delta.stderr + d.stderr),
                ));
            }
            None => checks.push(Check::ge(format!("disjoint classes(n = {})", p.n), 0.0, 1.0, 0.0)),
        }
    }
    let rows: Vec<Vec<String>> = res
        .points
        .iter()
        .map(|p| {
            let (d, se) = p
                .disjoint_delta
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |d| (d.exponent, d.stderr));
            vec![
                p.n.to_string(),
                num(p.length),
                num(p.delta.exponent),
                num(p.delta.stderr),
                p.disjoint_classes.to_string(),
                num(d),
                num(se),
            ]
        })
        .collect();
    let csv = csv_table(
        &[
            "n",
            "length",
            "delta",
            "stderr",
            "disjoint_classes",
            "disjoint_delta",
            "disjoint_stderr",
        ],
        &rows,
    );
    let points: Vec<(f64, f64)> = res.points.iter().map(|p| (p.n as f64, p.delta.exponent)).collect();
    let sub: Vec<(f64, f64)> = res
        .points
        .iter()
        .filter_map(|p| p.disjoint_delta.as_ref().map(|d| (p.n as f64, d.exponent)))
        .collect();
    let svg = Plot {
        title: "shrink".into(),
        x_label: "n".into(),
        y_label: "delta".into(),
        x_range: (0.0, (res.points.len().max(2) - 1) as f64),
        y_range: (0.0, 0.6),
        series: vec![
            Series {
                label: "delta".into(),
                points,
                color: "#1f77b4",
                dashed: false,
                markers: true,
            },
            Series {
                label: "disjoint".into(),
                points: sub,
                color: "#d62728",
                dashed: true,
                markers: true,
            },
        ],
    }
    .render();
    let mut out = Output::new(Report::new("experiment-shrink", cfg, "class", &res, checks));
    out.add("shrink.csv", csv);
    out.add("shrink.svg", svg);
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct IsolationResults {
    /// `delta(S0, S0)` at the same cutoff.
    pub reference: FamilyPoint,
    pub path: Vec<FamilyPoint>,
    /// Least-squares slope through the origin of `|delta - 1/2|` against the
    /// Thurston lower bound.
    pub fitted_c: f64,
}

pub fn isolation_results(cfg: &RunConfig) -> Result<IsolationResults> {
    let base = fenchel_nielsen(cfg, "isolation-continuity")?;
    let i = cfg.experiment.curve;
    let mut params = vec![base.twists[i]];
    params.extend(cfg.experiment.path.iter().map(|t| base.twists[i] + t));
    let mut all = fn_family(cfg, &base, &params, |t| {
        let mut f = base;
        f.twists[i] = t;
        f
    })?;
    let path = all.split_off(1);
    let (num_, den) = path.iter().fold((0.0, 0.0), |(a, b), p| {
        let d = p.thurston_lower_bound;
        (a + d * (p.delta.exponent - 0.5).abs(), b + d * d)
    });
    Ok(IsolationResults {
        reference: all.remove(0),
        fitted_c: if den > 0.0 { num_ / den } else { 0.0 },
        path,
    })
}

fn isolation_continuity(cfg: &RunConfig) -> Result<Output> {
    let res = isolation_results(cfg)?;
    let opts = &cfg.estimator;
    let mut checks: Vec<Check> = res
        .path
        .iter()
        .map(|p| {
            Check::le(
                format!("|delta - 1/2| <= C d (t = {})", p.t),
                (p.delta.exponent - 0.5).abs(),
                res.fitted_c * p.thurston_lower_bound,
                opts.tol(p.delta.stderr),
            )
        })
        .collect();
    if let Some(p) = res
        .path
        .iter()
        .min_by(|a, b| a.thurston_lower_bound.total_cmp(&b.thurston_lower_bound))
    {
        checks.push(Check::near(
            format!("delta at smallest d (t = {})", p.t),
            p.delta.exponent,
            0.5,
            opts.tol(p.delta.stderr),
        ));
    }
    let mut pts: Vec<FamilyPoint> = vec![res.reference.clone()];
    pts.extend(res.path.iter().cloned());
    let mut out = family_output("isolation-continuity", cfg, &res, &pts, checks, "twist t");
    let rows: Vec<Vec<String>> = pts
        .iter()
        .map(|p| {
            vec![
                num(p.thurston_lower_bound),
                num((p.delta.exponent - 0.5).abs()),
                num(p.delta.stderr),
            ]
        })
        .collect();
    out.add(
        "isolation-continuity-fit.csv",
        csv_table(&["thurston_lower_bound", "abs_delta_minus_half", "stderr"], &rows),
    );
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct AdsResults {
    pub pairs: usize,
    pub max_deviation: f64,
    pub mean_deviation: f64,
}

/// Conjugate of a translation of length in `[0.05, 6]` by a random element of
/// Frobenius norm at most 4, so the battery stays well conditioned.
fn random_hyperbolic(rng: &mut ChaCha8Rng) -> MoebiusElement {
    let t = MoebiusElement::translation(rng.gen_range(0.05..6.0));
    loop {
        let e: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        if let Ok(h) = MoebiusElement::new(e[0], e[1], e[2], e[3]) {
            if h.entries().iter().map(|v| v * v).sum::<f64>() <= 16.0 {
                return t.conjugate(&h);
            }
        }
    }
}

pub fn ads_results(cfg: &RunConfig) -> Result<AdsResults> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let n = cfg.experiment.pairs;
    let pairs: Vec<AdsIsometry> = (0..n)
        .map(|_| AdsIsometry::new(random_hyperbolic(&mut rng), random_hyperbolic(&mut rng)))
        .collect();
    let devs = pairs
        .par_iter()
        .map(|g| g.lorentz_length().map(|l| l.difference))
        .collect::<Result<Vec<f64>, _>>()
        .context("adscheck")?;
    Ok(AdsResults {
        pairs: n,
        max_deviation: devs.iter().cloned().fold(0.0, f64::max),
        mean_deviation: devs.iter().sum::<f64>() / n.max(1) as f64,
    })
}

fn ads_verify(cfg: &RunConfig) -> Result<Output> {
    let res = ads_results(cfg)?;
    let checks = vec![Check::le(
        "max |direct - (l1 + l2)/2|",
        res.max_deviation,
        0.0,
        cfg.experiment.exact_tol,
    )];
    Ok(Output::new(Report::new(
        "experiment-ads-verify",
        cfg,
        "class",
        &res,
        checks,
    )))
}
