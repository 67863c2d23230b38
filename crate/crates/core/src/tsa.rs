//! Largest Lyapunov exponent from sampled data (Rosenstein's method on the
//! raw state channels, no delay embedding).

use std::io::Read;

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::chaos::NULL_THRESHOLD;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Uniformly sampled multichannel series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t_s: f64,
    pub t0: f64,
    names: Vec<String>,
    channels: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(t_s: f64, t0: f64, names: Vec<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(t_s.is_finite() && t_s > 0.0) {
            return Err(Error::invalid("t_s", "must be > 0"));
        }
        if channels.is_empty() || names.len() != channels.len() {
            return Err(Error::invalid("channels", "need one name per channel and at least one channel"));
        }
        let m = channels[0].len();
        if channels.iter().any(|c| c.len() != m) {
            return Err(Error::invalid("channels", "channels differ in length"));
        }
        if m < 2 {
            return Err(Error::InsufficientData { needed: 2, got: m });
        }
        Ok(TimeSeries {
            t_s,
            t0,
            names,
            channels,
        })
    }

    /// The four state channels of a trajectory, named after the circuit
    /// variables.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        if traj.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: traj.len(),
            });
        }
        let t_s = traj.times[1] - traj.times[0];
        let names = ["v_c1", "i_l1", "v_c2", "i_l2"].map(String::from).to_vec();
        let channels = (0..4).map(|k| traj.states.iter().map(|s| s.as_array()[k]).collect()).collect();
        TimeSeries::new(t_s, traj.times[0], names, channels)
    }

    /// Reads `t,<ch1>,<ch2>,...`. When `columns` is given only those
    /// channels are kept, in that order. Sampling must be uniform to
    /// within `1e-6·t_s`.
    pub fn from_csv<R: Read>(reader: R, columns: Option<&[&str]>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if header.get(0) != Some("t") {
            return Err(Error::Parse("first column must be `t`".into()));
        }
        let picked: Vec<usize> = match columns {
            None => (1..header.len()).collect(),
            Some(cols) => cols
                .iter()
                .map(|c| {
                    header
                        .iter()
                        .position(|h| h == *c)
                        .filter(|&i| i > 0)
                        .ok_or_else(|| Error::Parse(format!("column `{c}` not found")))
                })
                .collect::<Result<_>>()?,
        };
        if picked.is_empty() {
            return Err(Error::Parse("no data columns".into()));
        }
        let names = picked.iter().map(|&i| header[i].to_string()).collect();
        let mut times = Vec::new();
        let mut channels = vec![Vec::new(); picked.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("row {}: bad value in column {}", line + 2, i + 1)))
            };
            times.push(field(0)?);
            for (c, &i) in channels.iter_mut().zip(&picked) {
                c.push(field(i)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: times.len(),
            });
        }
        let t_s = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (k, t) in times.iter().enumerate() {
            let expected = times[0] + k as f64 * t_s;
            if (t - expected).abs() > 1e-6 * t_s {
                return Err(Error::Parse(format!("non-uniform sampling at row {}", k + 2)));
            }
        }
        TimeSeries::new(t_s, times[0], names, channels)
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.channels[i].as_slice())
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.t_s
    }

    /// Index of the channel with the largest variance.
    pub fn dominant_channel(&self) -> usize {
        let var = |c: &[f64]| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        (0..self.channels.len())
            .max_by(|&a, &b| var(&self.channels[a]).total_cmp(&var(&self.channels[b])))
            .unwrap_or(0)
    }
}

/// Centered moving average over `round(window/t_s)` samples, rounded up to
/// an odd count. Windows shrink symmetrically near the ends.
pub fn moving_average(ts: &TimeSeries, window: f64) -> Result<TimeSeries> {
    if !(window >= ts.t_s * (1.0 - 1e-9)) {
        return Err(Error::invalid("window", "must be at least one sampling period"));
    }
    let mut w = ((window / ts.t_s).round() as usize).max(1);
    if w.is_multiple_of(2) {
        w += 1;
    }
    let half = w / 2;
    let channels = ts
        .channels
        .iter()
        .map(|c| {
            let m = c.len();
            let mut prefix = Vec::with_capacity(m + 1);
            prefix.push(0.0);
            for x in c {
                prefix.push(prefix.last().unwrap() + x);
            }
            (0..m)
                .map(|i| {
                    let h = half.min(i).min(m - 1 - i);
                    if h == 0 {
                        return c[i];
                    }
                    (prefix[i + h + 1] - prefix[i - h]) / (2 * h + 1) as f64
                })
                .collect()
        })
        .collect();
    TimeSeries::new(ts.t_s, ts.t0, ts.names.clone(), channels)
}

/// Reciprocal of the power-weighted mean frequency of a Hann-windowed,
/// mean-removed channel.
pub fn mean_period(samples: &[f64], t_s: f64) -> Result<f64> {
    let m = samples.len();
    if m < 16 {
        return Err(Error::InsufficientData { needed: 16, got: m });
    }
    let mean = samples.iter().sum::<f64>() / m as f64;
    let scale = samples.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if samples.iter().all(|x| (x - mean).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate("constant channel has no mean period".into()));
    }
    let mut buf: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (m - 1) as f64).cos();
            Complex64::new((x - mean) * hann, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let df = 1.0 / (m as f64 * t_s);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(m / 2 + 1).skip(1) {
        let p = c.norm_sqr();
        num += k as f64 * df * p;
        den += p;
    }
    if den <= 0.0 {
        return Err(Error::Degenerate("channel has no spectral power".into()));
    }
    Ok(den / num)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RosensteinConfig {
    /// Fit interval `[0, fit_window]` in seconds; automatic when absent.
    pub fit_window: Option<f64>,
    /// Minimum temporal separation of neighbours in seconds; the mean
    /// period of the dominant channel when absent.
    pub theiler: Option<f64>,
    /// Length of the divergence curve in seconds.
    pub horizon: f64,
}

impl Default for RosensteinConfig {
    fn default() -> Self {
        RosensteinConfig {
            fit_window: None,
            theiler: None,
            horizon: 30.0,
        }
    }
}

/// Upper bound of the automatic fit window (s).
pub const MAX_FIT_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosensteinReport {
    pub lambda: f64,
    pub is_null: bool,
    /// Seconds.
    pub fit_window: f64,
    pub fit_window_auto: bool,
    /// Seconds.
    pub theiler: f64,
    pub n_pairs: usize,
    /// `(t, ⟨ln d⟩)`.
    pub divergence_curve: Vec<(f64, f64)>,
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Recommended minimum series length.
pub const MIN_SAMPLES: usize = 100;

pub fn rosenstein_lambda(ts: &TimeSeries, cfg: &RosensteinConfig) -> Result<RosensteinReport> {
    let m = ts.len();
    if m < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES,
            got: m,
        });
    }
    if !(cfg.horizon > 0.0) {
        return Err(Error::invalid("horizon", "must be > 0"));
    }
    if let Some(w) = cfg.fit_window {
        if !(w > 0.0) {
            return Err(Error::invalid("fit_window", "must be > 0"));
        }
    }
    let theiler = match cfg.theiler {
        Some(t) if t >= 0.0 => t,
        Some(_) => return Err(Error::invalid("theiler", "must be >= 0")),
        None => mean_period(&ts.channels[ts.dominant_channel()], ts.t_s)?,
    };
    // Pairs must be separated by strictly more than this many samples.
    let sep = (theiler / ts.t_s).floor() as usize;
    let dim = ts.channels.len();
    let rows: Vec<f64> = (0..m).flat_map(|i| ts.channels.iter().map(move |c| c[i])).collect();
    let row = |i: usize| &rows[i * dim..(i + 1) * dim];
    let dist = |a: usize, b: usize| -> f64 { row(a).iter().zip(row(b)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() };

    let neighbours: Vec<Option<usize>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..m {
                if i.abs_diff(j) <= sep {
                    continue;
                }
                let d = dist(i, j);
                if d > 0.0 && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect();
    let n_pairs = neighbours.iter().flatten().count();
    if n_pairs == 0 {
        return Err(Error::NoValidNeighbor { theiler });
    }

    let horizon = cfg.horizon.max(cfg.fit_window.unwrap_or(0.0));
    let k_max = ((horizon / ts.t_s).round() as usize).min(m - 1);
    let curve: Vec<(f64, f64)> = (0..=k_max)
        .into_par_iter()
        .map(|k| {
            let (mut sum, mut count) = (0.0, 0usize);
            for (i, j) in neighbours.iter().enumerate() {
                let Some(j) = *j else { continue };
                if i + k >= m || j + k >= m {
                    continue;
                }
                let d = dist(i + k, j + k);
                if d > 0.0 {
                    sum += d.ln();
                    count += 1;
                }
            }
            (k as f64 * ts.t_s, if count > 0 { sum / count as f64 } else { f64::NAN })
        })
        .collect();
    let curve: Vec<(f64, f64)> = curve.into_iter().take_while(|(_, y)| y.is_finite()).collect();
    if curve.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: curve.len(),
        });
    }

    let (fit_window, auto) = match cfg.fit_window {
        Some(w) => (w, false),
        None => (auto_fit_window(&curve), true),
    };
    let n_fit = ((fit_window / ts.t_s).round() as usize + 1).clamp(3, curve.len());
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve[..n_fit].iter().copied().unzip();
    let lambda = least_squares_slope(&xs, &ys);
    Ok(RosensteinReport {
        lambda,
        is_null: lambda < NULL_THRESHOLD,
        fit_window,
        fit_window_auto: auto,
        theiler,
        n_pairs,
        divergence_curve: curve,
    })
}

/// Rise of the divergence curve below which no exponential regime is
/// assumed (mean separation less than doubles).
const MIN_RISE: f64 = std::f64::consts::LN_2;

/// `min(10 s, time for y to cover half its rise to the plateau)`, the
/// plateau being the mean over the last 20% of the curve. Curves that never
/// rise by [`MIN_RISE`] have no linear regime to isolate and are fitted
/// over their whole length, which averages out orbital oscillation.
fn auto_fit_window(curve: &[(f64, f64)]) -> f64 {
    let n = curve.len();
    let tail = &curve[(4 * n) / 5..];
    let plateau = tail.iter().map(|c| c.1).sum::<f64>() / tail.len() as f64;
    let y0 = curve[0].1;
    if plateau - y0 < MIN_RISE {
        return curve[n - 1].0;
    }
    let half = y0 + 0.5 * (plateau - y0);
    let t_half = curve.iter().find(|c| c.1 >= half).map_or(curve[n - 1].0, |c| c.0);
    t_half.min(MAX_FIT_WINDOW)
}
