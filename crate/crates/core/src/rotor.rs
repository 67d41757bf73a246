//! Rotor-angle estimation and trajectory preprocessing.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Generator, PmuRecordSet, Samples};

/// Uniformly sampled, unwrapped rotor-angle series for one generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub gen_id: String,
    pub t0: f64,
    pub dt: f64,
    /// Radians.
    pub angles: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

impl AsRef<[f64]> for Trajectory {
    fn as_ref(&self) -> &[f64] {
        &self.angles
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleMode {
    Absolute,
    #[default]
    Deviation,
    Coi,
}

impl std::str::FromStr for AngleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(AngleMode::Absolute),
            "deviation" => Ok(AngleMode::Deviation),
            "coi" => Ok(AngleMode::Coi),
            _ => Err(Error::invalid(format!(
                "angle mode '{s}' (expected absolute, deviation or coi)"
            ))),
        }
    }
}

impl std::fmt::Display for AngleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AngleMode::Absolute => "absolute",
            AngleMode::Deviation => "deviation",
            AngleMode::Coi => "coi",
        })
    }
}

/// Internal emf angle of the classical machine model, `arg(V + j X'd I)`.
pub fn estimate_rotor_angle(v: Complex64, i: Complex64, xd_prime: f64) -> Result<f64> {
    if v.norm() == 0.0 || !v.norm().is_finite() {
        return Err(Error::Unobservable {
            gen_id: String::new(),
            index: 0,
        });
    }
    let e = v + Complex64::new(0.0, xd_prime) * i;
    Ok(e.arg())
}

/// Remove 2π jumps so consecutive samples differ by at most π.
pub fn unwrap(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (k, &a) in angles.iter().enumerate() {
        if k > 0 {
            let prev = angles[k - 1] + offset;
            let mut cur = a + offset;
            let d = cur - prev;
            if d.abs() > PI {
                let turns = ((d + PI) / TAU).floor();
                // keep +π as +π rather than flipping to -π
                let turns = if d - turns * TAU == -PI { turns - 1.0 } else { turns };
                offset -= turns * TAU;
                cur = a + offset;
            }
            out.push(cur);
        } else {
            out.push(a);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOptions {
    pub mode: AngleMode,
    /// Common sample spacing; `None` uses the smallest median spacing found.
    pub dt: Option<f64>,
    /// Fraction of `dt` within which a sample time counts as on-grid.
    pub snap_tolerance: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            mode: AngleMode::Deviation,
            dt: None,
            snap_tolerance: 1e-3,
        }
    }
}

fn median_spacing(times: &[f64]) -> Option<f64> {
    let mut d: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let j = times.partition_point(|&x| x <= t);
    if j == 0 {
        return values[0];
    }
    if j >= times.len() {
        return values[times.len() - 1];
    }
    let (t0, t1) = (times[j - 1], times[j]);
    let w = (t - t0) / (t1 - t0);
    values[j - 1] + w * (values[j] - values[j - 1])
}

/// Estimate, unwrap, resample onto a shared grid and reference the angles.
///
/// The grid is `T0 + m*dt` with `T0` the earliest first sample over all
/// records, so a record with a missing prefix starts later on the same grid.
/// `generators` supplies X'd for phasor records and H for the COI mode.
pub fn preprocess(
    raw: &PmuRecordSet,
    generators: &[Generator],
    opts: &PreprocessOptions,
) -> Result<Vec<Trajectory>> {
    let machines: HashMap<&str, &Generator> =
        generators.iter().map(|g| (g.gen_id.as_str(), g)).collect();

    // Step 1: angle channel per record, unobservable samples dropped.
    let mut series: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::with_capacity(raw.records.len());
    for rec in &raw.records {
        let (times, angles) = match &rec.samples {
            Samples::Angles(a) => (rec.times.clone(), a.clone()),
            Samples::Phasors(p) => {
                let g = machines
                    .get(rec.gen_id.as_str())
                    .ok_or_else(|| Error::UnknownGenerator(rec.gen_id.clone()))?;
                let mut ts = Vec::with_capacity(p.len());
                let mut an = Vec::with_capacity(p.len());
                for (idx, s) in p.iter().enumerate() {
                    match estimate_rotor_angle(s.voltage(), s.current(), g.xd_prime_pu) {
                        Ok(a) => {
                            ts.push(rec.times[idx]);
                            an.push(a);
                        }
                        Err(_) => log::warn!(
                            "{}: sample {idx} at t={} unobservable, dropped",
                            rec.gen_id,
                            rec.times[idx]
                        ),
                    }
                }
                (ts, an)
            }
        };
        if times.len() < 2 {
            return Err(Error::TooShort {
                gen_id: rec.gen_id.clone(),
                len: times.len(),
            });
        }
        series.push((rec.gen_id.clone(), times, unwrap(&angles)));
    }
    if series.is_empty() {
        return Ok(Vec::new());
    }

    // Step 2: shared grid.
    let dt = match opts.dt {
        Some(dt) if dt > 0.0 && dt.is_finite() => dt,
        Some(dt) => return Err(Error::invalid(format!("sample spacing {dt} must be positive"))),
        None => series
            .iter()
            .filter_map(|(_, t, _)| median_spacing(t))
            .fold(f64::INFINITY, f64::min),
    };
    let tol = opts.snap_tolerance * dt;
    let grid_t0 = series
        .iter()
        .map(|(_, t, _)| t[0])
        .fold(f64::INFINITY, f64::min);

    let mut out = Vec::with_capacity(series.len());
    let mut offsets = Vec::with_capacity(series.len());
    for (gen_id, times, angles) in &series {
        let first = times[0];
        let last = times[times.len() - 1];
        let m0 = ((first - grid_t0 - tol) / dt).ceil().max(0.0) as usize;
        let m1 = ((last - grid_t0 + tol) / dt).floor() as i64;
        let len = (m1 - m0 as i64 + 1).max(0) as usize;
        if len < 2 {
            return Err(Error::TooShort {
                gen_id: gen_id.clone(),
                len,
            });
        }
        let resampled: Vec<f64> = (0..len)
            .map(|i| {
                let t = grid_t0 + (m0 + i) as f64 * dt;
                interpolate(times, angles, t.clamp(first, last))
            })
            .collect();
        offsets.push(m0);
        out.push(Trajectory {
            gen_id: gen_id.clone(),
            t0: grid_t0 + m0 as f64 * dt,
            dt,
            angles: resampled,
        });
    }

    // Step 3: reference frame.
    if opts.mode != AngleMode::Absolute {
        for tr in &mut out {
            let a0 = tr.angles[0];
            tr.angles.iter_mut().for_each(|a| *a -= a0);
        }
    }
    if opts.mode == AngleMode::Coi {
        let mut h = Vec::with_capacity(out.len());
        for tr in &out {
            let g = machines
                .get(tr.gen_id.as_str())
                .ok_or_else(|| Error::UnknownGenerator(tr.gen_id.clone()))?;
            h.push(g.inertia_h_s);
        }
        let end = out
            .iter()
            .zip(&offsets)
            .map(|(t, &m)| m + t.len())
            .max()
            .unwrap_or(0);
        let mut coi = vec![0.0; end];
        for (m, c) in coi.iter_mut().enumerate() {
            let mut num = 0.0;
            let mut den = 0.0;
            for ((tr, &off), &hi) in out.iter().zip(&offsets).zip(&h) {
                if m >= off && m - off < tr.len() {
                    num += hi * tr.angles[m - off];
                    den += hi;
                }
            }
            if den > 0.0 {
                *c = num / den;
            }
        }
        for (tr, &off) in out.iter_mut().zip(&offsets) {
            for (i, a) in tr.angles.iter_mut().enumerate() {
                *a -= coi[off + i];
            }
        }
    }
    Ok(out)
}
