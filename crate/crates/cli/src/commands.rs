//! `spectrum`, `delta` and `curve`.

use anyhow::{Context, Result};
use manhattan_core::adscheck::delta_lorentz;
use manhattan_core::manhattan::{
    band_bound, box_population, correlation, curve_sample, default_band_width, default_thetas, delta_orbit, delta_pair,
    delta_slope, dilation_bounds, lambda_grid, single_exponent, slope_report, stretch_estimate, weighted_exponent,
    ConvexityCheck, CurveEstimate, DilationBounds, EstimatorOptions, GrowthEstimate, SlopeReport,
};
use manhattan_core::reps::MarkedRepresentation;
use manhattan_core::spectrum::{class_spectrum_with, orbit_ball, PairSpectrum, SpectrumOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::report::{csv_table, num, Check, Output, Report};
use crate::svg::{Plot, Series};

pub fn spectrum_options(cfg: &RunConfig, weights: (f64, f64)) -> SpectrumOptions {
    SpectrumOptions {
        weights,
        max_nodes: cfg.run.max_nodes,
        max_classes: cfg.run.max_classes,
        ..SpectrumOptions::default()
    }
}

/// The `(1, 1)` spectrum at `T` and, optionally, the `(1, 0)` and `(0, 1)` spectra at `T/2`.
pub struct Spectra {
    pub main: PairSpectrum,
    pub sides: Option<[PairSpectrum; 2]>,
}

impl Spectra {
    pub fn all(&self) -> Vec<&PairSpectrum> {
        let mut v = vec![&self.main];
        if let Some([a, b]) = &self.sides {
            v.push(a);
            v.push(b);
        }
        v
    }
}

pub fn pair_spectrum(
    cfg: &RunConfig,
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    t: f64,
    weights: (f64, f64),
) -> Result<PairSpectrum> {
    let s = class_spectrum_with(r1, r2, t, &spectrum_options(cfg, weights)).context("spectrum")?;
    Ok(if cfg.run.primitive_only { s.primitive_only() } else { s })
}

pub fn compute_spectra(
    cfg: &RunConfig,
    r1: &MarkedRepresentation,
    r2: &MarkedRepresentation,
    sides: bool,
) -> Result<Spectra> {
    let t = cfg.run.cutoff;
    let main = pair_spectrum(cfg, r1, r2, t, (1.0, 1.0))?;
    let sides = if sides {
        Some([
            pair_spectrum(cfg, r1, r2, t / 2.0, (1.0, 0.0))?,
            pair_spectrum(cfg, r1, r2, t / 2.0, (0.0, 1.0))?,
        ])
    } else {
        None
    };
    Ok(Spectra { main, sides })
}

fn spectrum_summary(s: &PairSpectrum) -> serde_json::Value {
    let (lo, hi) = s.dilations();
    serde_json::json!({
        "cutoff": s.cutoff(),
        "weights": [s.weights().0, s.weights().1],
        "classes": s.len(),
        "completeness_bound": s.completeness_bound(),
        "dil_minus": lo,
        "dil_plus": hi,
        "audit": {
            "slack": s.audit().slack,
            "max_excess": s.audit().max_excess,
            "c_min": s.audit().c_min,
            "reruns": s.audit().reruns,
            "merged": s.audit().merged,
            "twins": s.audit().twins,
            "nodes": s.audit().nodes,
        },
    })
}

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Output> {
    let (r1, r2) = cfg.representations()?;
    let sp = compute_spectra(cfg, &r1, &r2, cfg.run.side_spectra)?;
    let names = ["spectrum.mspec", "spectrum-x.mspec", "spectrum-y.mspec"];
    let summaries: Vec<serde_json::Value> = sp.all().into_iter().map(spectrum_summary).collect();
    let rows: Vec<Vec<String>> = sp
        .main
        .entries()
        .iter()
        .map(|e| vec![e.class.to_string(), num(e.l1), num(e.l2)])
        .collect();
    let report = Report::new(
        "spectrum",
        cfg,
        "class",
        serde_json::json!({ "spectra": summaries }),
        Vec::new(),
    );
    let mut out = Output::new(report);
    for (s, name) in sp.all().into_iter().zip(names) {
        out.add(name, s.to_text());
    }
    out.add("spectrum.csv", csv_table(&["class", "l1", "l2"], &rows));
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaResults {
    pub classes: usize,
    pub delta: GrowthEstimate,
    pub delta_lorentz: GrowthEstimate,
    pub orbit: Option<GrowthEstimate>,
    pub orbit_elements: Option<usize>,
    pub bounds: DilationBounds,
}

pub fn analyze_delta(cfg: &RunConfig, s: &PairSpectrum) -> Result<DeltaResults> {
    let opts = &cfg.estimator;
    let delta = delta_pair(s, opts).context("manhattan")?;
    let delta_lorentz = delta_lorentz(s, opts).context("adscheck")?;
    let (orbit, orbit_elements) = if cfg.run.orbit_radius > 0.0 {
        let [r1, r2] = s.reps();
        let ball = orbit_ball(r1, r2, cfg.run.orbit_radius, (1.0, 1.0)).context("spectrum")?;
        (Some(delta_orbit(&ball, opts).context("manhattan")?), Some(ball.len()))
    } else {
        (None, None)
    };
    Ok(DeltaResults {
        classes: s.len(),
        delta,
        delta_lorentz,
        orbit,
        orbit_elements,
        bounds: dilation_bounds(s).context("manhattan")?,
    })
}

pub fn cmd_delta(cfg: &RunConfig) -> Result<Output> {
    let (r1, r2) = cfg.representations()?;
    let s = pair_spectrum(cfg, &r1, &r2, cfg.run.cutoff, (1.0, 1.0))?;
    let d = analyze_delta(cfg, &s)?;
    let opts = &cfg.estimator;
    let mut checks = Vec::new();
    if cfg.run.mode == Mode::GenusTwo {
        checks.push(Check::le(
            "delta <= 1/2",
            d.delta.exponent,
            0.5,
            opts.tol(d.delta.stderr),
        ));
        checks.push(Check::le(
            "delta_lorentz <= 1",
            d.delta_lorentz.exponent,
            1.0,
            opts.tol(d.delta_lorentz.stderr),
        ));
    }
    if let Some(o) = &d.orbit {
        checks.push(Check::le(
            "|delta_orbit - delta_class| <= summed stderr",
            (o.exponent - d.delta.exponent).abs(),
            o.stderr + d.delta.stderr,
            0.0,
        ));
    }
    let frame = if d.orbit.is_some() { "class+orbit" } else { "class" };
    let mut rows = vec![vec![
        "class".into(),
        num(d.delta.exponent),
        num(d.delta.stderr),
        num(d.delta.window.0),
        num(d.delta.window.1),
    ]];
    rows.push(vec![
        "lorentz".into(),
        num(d.delta_lorentz.exponent),
        num(d.delta_lorentz.stderr),
        num(d.delta_lorentz.window.0),
        num(d.delta_lorentz.window.1),
    ]);
    if let Some(o) = &d.orbit {
        rows.push(vec![
            "orbit".into(),
            num(o.exponent),
            num(o.stderr),
            num(o.window.0),
            num(o.window.1),
        ]);
    }
    let csv = csv_table(&["frame", "exponent", "stderr", "window_lo", "window_hi"], &rows);
    let mut out = Output::new(Report::new("delta", cfg, frame, &d, checks));
    out.add("delta.csv", csv);
    Ok(out)
}

/// Directional quantities at one slope `lambda`.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaRow {
    pub lambda: f64,
    /// `min (x + lambda y) / (1 + lambda)` over the curve samples.
    pub bound: f64,
    /// The same bound widened to the band `|mu - lambda| <= eps`.
    pub band_bound: f64,
    pub delta_slope: Option<GrowthEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_slope_error: Option<String>,
    /// Inside the range of normal slopes the curve samples realise, where the
    /// bound is attained.
    pub tangent: bool,
    pub correlation: Option<GrowthEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation_error: Option<String>,
    pub box_population: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveAnalysis {
    pub delta: GrowthEstimate,
    /// Single exponents of each surface, from the side spectra.
    pub single: Option<[GrowthEstimate; 2]>,
    pub curve: CurveEstimate,
    /// Where the curve must meet the axes: `(h1, 0)` and `(0, h2)`.
    pub endpoint_targets: [(f64, f64); 2],
    pub endpoint_distances: [f64; 2],
    pub chord_deviation: f64,
    pub diagonal: Option<(f64, f64)>,
    pub convexity: Vec<ConvexityCheck>,
    pub bounds: DilationBounds,
    pub slopes: Option<SlopeReport>,
    pub slope_error: Option<String>,
    pub stretch: f64,
    pub band_width: f64,
    pub lambdas: Vec<LambdaRow>,
}

pub fn thetas(cfg: &RunConfig) -> Vec<f64> {
    if cfg.grids.thetas.is_empty() {
        default_thetas()
    } else {
        cfg.grids.thetas.clone()
    }
}

pub fn analyze_curve(cfg: &RunConfig, sp: &Spectra) -> Result<CurveAnalysis> {
    let opts: &EstimatorOptions = &cfg.estimator;
    let s = &sp.main;
    let delta = delta_pair(s, opts).context("manhattan")?;
    let single = match &sp.sides {
        Some([sx, sy]) => {
            let h1 = single_exponent(sx, opts).context("manhattan")?;
            let h2 = weighted_exponent(sy, 0.0, 1.0, opts).context("manhattan")?;
            Some([h1, h2])
        }
        None => None,
    };
    let curve = curve_sample(&sp.all(), &thetas(cfg), opts).context("manhattan")?;
    let endpoint_targets = match (cfg.run.mode, &single) {
        (Mode::GenusTwo, _) => [(1.0, 0.0), (0.0, 1.0)],
        (Mode::FreeRank2, Some([h1, h2])) => [(h1.exponent, 0.0), (0.0, h2.exponent)],
        (Mode::FreeRank2, None) => {
            let p = &curve.samples;
            [(p[0].x, 0.0), (0.0, p[p.len() - 1].y)]
        }
    };
    let endpoint_distances = endpoint_targets.map(|p| curve.distance_to(p));
    let bounds = dilation_bounds(s).context("manhattan")?;
    let (slopes, slope_error) = match slope_report(&curve, delta.exponent, &bounds) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(format!("manhattan: {e}"))),
    };
    let stretch_source = sp.sides.as_ref().map(|[sx, _]| sx).unwrap_or(s);
    let stretch = stretch_estimate(stretch_source).context("manhattan")?;
    let band_width = default_band_width(s).context("manhattan")?;
    let slope_range = slopes.as_ref().map(|r| {
        r.lambda_at
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, l)| {
                (lo.min(l), hi.max(l))
            })
    });
    let lambdas = lambda_grid(&bounds, cfg.grids.lambda_points)
        .into_par_iter()
        .map(|lambda| {
            let split = |r: Result<GrowthEstimate, _>| match r {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(format!("manhattan: {e}"))),
            };
            let (delta_slope, delta_slope_error) = split(delta_slope(s, lambda, band_width, opts));
            let (correlation, correlation_error) = split(correlation(s, lambda, opts));
            LambdaRow {
                lambda,
                bound: band_bound(&curve, lambda, 0.0),
                band_bound: band_bound(&curve, lambda, band_width),
                delta_slope,
                delta_slope_error,
                tangent: slope_range.is_some_and(|(lo, hi)| lambda >= lo && lambda <= hi),
                correlation,
                correlation_error,
                box_population: box_population(s, lambda).unwrap_or(0),
            }
        })
        .collect();
    Ok(CurveAnalysis {
        delta,
        single,
        chord_deviation: curve.chord_deviation(),
        diagonal: curve.diagonal_point(),
        convexity: curve.convexity(),
        curve,
        endpoint_targets,
        endpoint_distances,
        bounds,
        slopes,
        slope_error,
        stretch,
        band_width,
        lambdas,
    })
}

/// Fewest slope-grid points with an estimable directional exponent.
const MIN_SLOPE_POINTS: usize = 9;

/// Checks of `curve` under the estimator's tolerance policy.
pub fn curve_checks(cfg: &RunConfig, a: &CurveAnalysis, identical: bool) -> Vec<Check> {
    let opts = &cfg.estimator;
    let samples = &a.curve.samples;
    let max_se = samples.iter().map(|s| s.stderr).fold(0.0, f64::max);
    let mut checks = Vec::new();
    for (target, dist) in a.endpoint_targets.iter().zip(a.endpoint_distances) {
        let near = samples
            .iter()
            .min_by(|p, q| {
                let d = |s: &&manhattan_core::manhattan::CurveSample| (s.x - target.0).hypot(s.y - target.1);
                d(p).total_cmp(&d(q))
            })
            .map_or(0.0, |s| s.stderr);
        checks.push(Check::le(
            format!("distance to ({}, {})", target.0, target.1),
            dist,
            0.0,
            opts.tol(near),
        ));
    }
    let worst = a
        .convexity
        .iter()
        .max_by(|p, q| (p.defect - 3.0 * p.stderr).total_cmp(&(q.defect - 3.0 * q.stderr)));
    if let Some(c) = worst {
        checks.push(Check::le(
            format!("convexity defect at x = {}", c.x),
            c.defect,
            3.0 * c.stderr,
            0.0,
        ));
    }
    match a.diagonal {
        Some((x, se)) => checks.push(Check::near(
            "diagonal crossing",
            x,
            a.delta.exponent,
            opts.tol(se + a.delta.stderr),
        )),
        None => checks.push(Check::ge("diagonal crossing exists", 0.0, 1.0, 0.0)),
    }
    if identical {
        checks.push(Check::le("chord deviation", a.chord_deviation, 0.0, opts.tol(max_se)));
    }
    let d = a.delta.exponent;
    let tol_d = opts.tol(a.delta.stderr);
    if cfg.run.mode == Mode::GenusTwo && !identical {
        match &a.slopes {
            Some(s) => {
                checks.push(Check::between(
                    "lambda(delta)",
                    s.maximal_slope,
                    d / (1.0 - d),
                    (1.0 - d) / d,
                    tol_d,
                ));
                checks.push(Check::ge(
                    "delta >= 1/(1 + lambda(1))",
                    d,
                    1.0 / (1.0 + s.stretch),
                    tol_d,
                ));
                checks.push(Check::near("lambda(1) / stretch", s.stretch / a.stretch, 1.0, 0.1));
            }
            None => checks.push(Check::ge(
                format!("slope report ({})", a.slope_error.as_deref().unwrap_or("")),
                0.0,
                1.0,
                0.0,
            )),
        }
    }
    let estimable = a.lambdas.iter().filter(|r| r.delta_slope.is_some()).count();
    checks.push(Check::ge(
        "estimable slope-grid points",
        estimable as f64,
        MIN_SLOPE_POINTS as f64,
        0.0,
    ));
    for row in &a.lambdas {
        let Some(ds) = &row.delta_slope else { continue };
        let tol = opts.tol(ds.stderr);
        checks.push(Check::le(
            format!("delta({}) <= directional bound", row.lambda),
            ds.exponent,
            row.bound,
            tol,
        ));
        if row.tangent {
            checks.push(Check::le(
                format!("equality gap at {}", row.lambda),
                row.bound - ds.exponent,
                0.0,
                2.0 * tol,
            ));
        }
        if let (Some(m), true) = (&row.correlation, row.box_population >= 30) {
            checks.push(Check::le(
                format!("|m - (1 + lambda) delta| at {}", row.lambda),
                (m.exponent - (1.0 + row.lambda) * ds.exponent).abs(),
                0.15,
                0.0,
            ));
        }
    }
    checks
}

fn opt_est(e: &Option<GrowthEstimate>) -> [String; 2] {
    e.as_ref()
        .map_or([String::new(), String::new()], |e| [num(e.exponent), num(e.stderr)])
}

pub fn cmd_curve(cfg: &RunConfig) -> Result<Output> {
    let (r1, r2) = cfg.representations()?;
    let sp = compute_spectra(cfg, &r1, &r2, cfg.run.side_spectra)?;
    let a = analyze_curve(cfg, &sp)?;
    let identical = cfg.surface1 == cfg.surface2;
    let checks = curve_checks(cfg, &a, identical);

    let curve_rows: Vec<Vec<String>> = a
        .curve
        .samples
        .iter()
        .map(|s| {
            vec![
                num(s.theta),
                num(s.x),
                num(s.y),
                num(s.r),
                num(s.stderr),
                num(s.window.0),
                num(s.window.1),
            ]
        })
        .collect();
    let lambda_rows: Vec<Vec<String>> = a
        .lambdas
        .iter()
        .map(|r| {
            let [d, dse] = opt_est(&r.delta_slope);
            let [m, mse] = opt_est(&r.correlation);
            vec![
                num(r.lambda),
                num(r.bound),
                num(r.band_bound),
                d,
                dse,
                r.tangent.to_string(),
                m,
                mse,
                r.box_population.to_string(),
            ]
        })
        .collect();
    let slope_rows: Vec<Vec<String>> = a
        .slopes
        .iter()
        .flat_map(|s| s.lambda_at.iter().map(|(x, l)| vec![num(*x), num(*l)]))
        .collect();

    let pts = a.curve.points();
    let hi = pts.iter().fold(1.1f64, |m, p| m.max(p.0).max(p.1));
    let mut series = vec![
        Series {
            label: "x + y = 1".into(),
            points: vec![(1.0, 0.0), (0.0, 1.0)],
            color: "#888888",
            dashed: true,
            markers: false,
        },
        Series {
            label: "curve".into(),
            points: pts,
            color: "#1f77b4",
            dashed: false,
            markers: true,
        },
    ];
    if let Some((x, _)) = a.diagonal {
        series.push(Series {
            label: "diagonal".into(),
            points: vec![(x, x)],
            color: "#d62728",
            dashed: false,
            markers: true,
        });
    }
    let svg = Plot {
        title: "Manhattan curve".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        x_range: (0.0, hi),
        y_range: (0.0, hi),
        series,
    }
    .render();

    let mut out = Output::new(Report::new("curve", cfg, "class", &a, checks));
    out.add(
        "curve.csv",
        csv_table(
            &["theta", "x", "y", "r", "stderr", "window_lo", "window_hi"],
            &curve_rows,
        ),
    );
    out.add(
        "lambda.csv",
        csv_table(
            &[
                "lambda",
                "bound",
                "band_bound",
                "delta_slope",
                "stderr",
                "tangent",
                "m",
                "m_stderr",
                "box_population",
            ],
            &lambda_rows,
        ),
    );
    out.add("slopes.csv", csv_table(&["x", "lambda"], &slope_rows));
    out.add("curve.svg", svg);
    Ok(out)
}
