//! Least-squares identification of surge damping and the power coefficient
//! from steady-state telemetry.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{power_smoothed, FerryParams};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IdentifyError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("damping fit needs at least two distinct nonzero speeds, found {distinct}")]
    RankDeficient { distinct: usize },
    #[error("power fit needs at least one sample with positive thrust")]
    NoThrust,
}

/// One steady-state operating point. Missing cells are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SteadyStateSample {
    pub surge_speed: Option<f64>,
    pub thrust_total: Option<f64>,
    pub power_total: Option<f64>,
}

const HEADER: [&str; 3] = ["surge_speed", "thrust_total", "power_total"];

pub fn parse_telemetry<R: Read>(input: R) -> Result<Vec<SteadyStateSample>, IdentifyError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut out = Vec::new();
    let mut seen_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| IdentifyError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if !seen_header {
            if record.iter().ne(HEADER.iter().copied()) {
                return Err(IdentifyError::Parse { line, message: format!("expected header `{}`", HEADER.join(",")) });
            }
            seen_header = true;
            continue;
        }
        if record.len() != 3 {
            return Err(IdentifyError::Parse { line, message: format!("expected 3 columns, found {}", record.len()) });
        }
        let mut v = [None; 3];
        for (i, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            let x: f64 = cell
                .parse()
                .map_err(|_| IdentifyError::Parse { line, message: format!("column {} is not a number: {cell:?}", HEADER[i]) })?;
            if !x.is_finite() || x < 0.0 {
                return Err(IdentifyError::Parse { line, message: format!("column {} must be finite and non-negative", HEADER[i]) });
            }
            v[i] = Some(x);
        }
        out.push(SteadyStateSample { surge_speed: v[0], thrust_total: v[1], power_total: v[2] });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct DampingFit {
    pub X_u: f64,
    pub X_uu: f64,
    pub residual_sum_squares: f64,
    /// Coefficients held at zero by the non-negativity constraint.
    pub clamped: [bool; 2],
}

fn least_squares(cols: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let a = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(rhs);
    let qr = a.qr();
    let r = qr.r();
    if (0..cols.len()).any(|i| r[(i, i)].abs() <= 1e-12 * r.amax()) {
        return None;
    }
    let qtb = qr.q().transpose() * b;
    let sol = r.solve_upper_triangular(&qtb)?;
    Some(sol.iter().copied().collect())
}

fn rss(speeds: &[f64], thrusts: &[f64], xu: f64, xuu: f64) -> f64 {
    speeds.iter().zip(thrusts).map(|(v, t)| (t - xu * v - xuu * v * v).powi(2)).sum()
}

/// Fits `thrust = X_u v + X_uu v²` with both coefficients non-negative.
pub fn fit_damping(pairs: &[(f64, f64)]) -> Result<DampingFit, IdentifyError> {
    let mut distinct: Vec<f64> = pairs.iter().map(|p| p.0).filter(|v| *v != 0.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(IdentifyError::RankDeficient { distinct: distinct.len() });
    }
    let speeds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let thrusts: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let lin = speeds.clone();
    let quad: Vec<f64> = speeds.iter().map(|v| v * v).collect();

    let full = least_squares(&[lin.clone(), quad.clone()], &thrusts)
        .ok_or(IdentifyError::RankDeficient { distinct: distinct.len() })?;
    if full[0] >= 0.0 && full[1] >= 0.0 {
        return Ok(DampingFit {
            X_u: full[0],
            X_uu: full[1],
            residual_sum_squares: rss(&speeds, &thrusts, full[0], full[1]),
            clamped: [false, false],
        });
    }
    // Active set: the best non-negative solution has at least one
    // coefficient at zero.
    let mut candidates = vec![(0.0, 0.0, [true, true])];
    if let Some(s) = least_squares(&[lin], &thrusts) {
        if s[0] >= 0.0 {
            candidates.push((s[0], 0.0, [false, true]));
        }
    }
    if let Some(s) = least_squares(&[quad], &thrusts) {
        if s[0] >= 0.0 {
            candidates.push((0.0, s[0], [true, false]));
        }
    }
    let (xu, xuu, clamped) = candidates
        .into_iter()
        .min_by(|a, b| rss(&speeds, &thrusts, a.0, a.1).total_cmp(&rss(&speeds, &thrusts, b.0, b.1)))
        .expect("candidate list is never empty");
    Ok(DampingFit { X_u: xu, X_uu: xuu, residual_sum_squares: rss(&speeds, &thrusts, xu, xuu), clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub c_p_check: f64,
    pub residual_sum_squares: f64,
    pub rms_residual: f64,
    pub sample_count: usize,
}

/// Closed-form least squares for `P = 2 č_p (T²/4)^{3/4}`.
pub fn fit_power_coeff(pairs: &[(f64, f64)]) -> Result<PowerFit, IdentifyError> {
    let g: Vec<f64> = pairs.iter().map(|(t, _)| (t * t / 4.0).powf(0.75)).collect();
    let gg: f64 = g.iter().map(|g| g * g).sum();
    if !pairs.iter().any(|(t, _)| *t > 0.0) || gg == 0.0 {
        return Err(IdentifyError::NoThrust);
    }
    let pg: f64 = pairs.iter().zip(&g).map(|((_, p), g)| p * g).sum();
    let c = pg / (2.0 * gg);
    let residual_sum_squares: f64 = pairs.iter().zip(&g).map(|((_, p), g)| (p - 2.0 * c * g).powi(2)).sum();
    Ok(PowerFit {
        c_p_check: c,
        residual_sum_squares,
        rms_residual: (residual_sum_squares / pairs.len() as f64).sqrt(),
        sample_count: pairs.len(),
    })
}

/// Steady straight-ahead power in still water at each speed.
pub fn predicted_power_curve(params: &FerryParams, speeds: &[f64]) -> Vec<(f64, f64)> {
    speeds
        .iter()
        .map(|&v| {
            let thrust = params.X_u * v + params.X_uu * v * v;
            (v, power_smoothed(thrust, 0.0, params.c_p_check, 0.0))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub params: FerryParams,
    pub damping: Option<DampingFit>,
    pub power: Option<PowerFit>,
}

/// Two-stage identification. Damping uses rows with speed and thrust, the
/// power coefficient rows with thrust and power. Parameters without usable
/// rows keep their value from `base`.
pub fn identify(samples: &[SteadyStateSample], base: &FerryParams) -> Result<Identification, IdentifyError> {
    let speed_thrust: Vec<(f64, f64)> =
        samples.iter().filter_map(|s| Some((s.surge_speed?, s.thrust_total?))).collect();
    let thrust_power: Vec<(f64, f64)> =
        samples.iter().filter_map(|s| Some((s.thrust_total?, s.power_total?))).collect();
    let damping = if speed_thrust.is_empty() { None } else { Some(fit_damping(&speed_thrust)?) };
    let power = if thrust_power.is_empty() { None } else { Some(fit_power_coeff(&thrust_power)?) };
    let mut params = *base;
    if let Some(d) = &damping {
        params.X_u = d.X_u;
        params.X_uu = d.X_uu;
    }
    if let Some(p) = &power {
        params.c_p_check = p.c_p_check;
    }
    Ok(Identification { params, damping, power })
}
