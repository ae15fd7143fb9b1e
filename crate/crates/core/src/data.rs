//! Synthetic forecasting series, sliding windows and standardisation.
//!
//! Task formulas (index `k`, time `t = k·dt`; all constants overridable by
//! name through [`SeriesSpec::params`]):
//!
//! | task | formula / defaults |
//! |------|--------------------|
//! | `damped_oscillator` | `A·e^{-γt}·cos(ωt + φ)`, A=1, γ=0.1, ω=2, φ=0, dt=0.1 |
//! | `noisy_damped_oscillator` | damped oscillator + N(0, 0.05²) |
//! | `arma` | ARMA(2,2): AR (0.75, −0.25), MA (0.65, 0.35), N(0,1) innovations, 100 burn-in |
//! | `chaotic_logistic` | `x_{k+1} = r·x_k(1−x_k)`, r=3.9, x₀=0.5 |
//! | `piecewise_regime` | 100-sample segments alternating trend (slope 0.02) and sine (amp 1, period 20), level +10 per segment |
//! | `sawtooth` | `A·(2·(k mod P)/P − 1)`, P=40, A=1 |
//! | `square_wave` | `+A` for the first half of each period, `−A` after, P=40 |
//! | `seasonal_trend` | `0.002k + sin(2πk/50) + 0.3·sin(2πk/13)` + N(0, 0.05²) |
//!
//! Noise is drawn from stream `SERIES + task index` of the seeded generator.

use crate::error::{Error, Result};
use crate::rng::{streams, SeedStream};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    DampedOscillator,
    NoisyDampedOscillator,
    Arma,
    ChaoticLogistic,
    PiecewiseRegime,
    Sawtooth,
    SquareWave,
    SeasonalTrend,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::DampedOscillator,
        Task::NoisyDampedOscillator,
        Task::Arma,
        Task::ChaoticLogistic,
        Task::PiecewiseRegime,
        Task::Sawtooth,
        Task::SquareWave,
        Task::SeasonalTrend,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::DampedOscillator => "damped_oscillator",
            Task::NoisyDampedOscillator => "noisy_damped_oscillator",
            Task::Arma => "arma",
            Task::ChaoticLogistic => "chaotic_logistic",
            Task::PiecewiseRegime => "piecewise_regime",
            Task::Sawtooth => "sawtooth",
            Task::SquareWave => "square_wave",
            Task::SeasonalTrend => "seasonal_trend",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| {
                let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
                Error::config("task", format!("unknown task `{name}` (expected one of {})", names.join(", ")))
            })
    }

    fn index(self) -> u64 {
        Task::ALL.iter().position(|&t| t == self).expect("listed") as u64
    }

    /// Default sampling interval: 0.1 for the continuous-time oscillators,
    /// 1 for index-driven tasks.
    pub fn default_dt(self) -> f64 {
        match self {
            Task::DampedOscillator | Task::NoisyDampedOscillator => 0.1,
            _ => 1.0,
        }
    }

    /// Tunable constants and their defaults.
    pub fn default_params(self) -> &'static [(&'static str, f64)] {
        const OSC: &[(&str, f64)] = &[("amplitude", 1.0), ("gamma", 0.1), ("omega", 2.0), ("phi", 0.0)];
        match self {
            Task::DampedOscillator => OSC,
            Task::NoisyDampedOscillator => &[
                ("amplitude", 1.0),
                ("gamma", 0.1),
                ("omega", 2.0),
                ("phi", 0.0),
                ("noise_std", 0.05),
            ],
            Task::Arma => &[
                ("ar1", 0.75),
                ("ar2", -0.25),
                ("ma1", 0.65),
                ("ma2", 0.35),
                ("innovation_std", 1.0),
                ("burn_in", 100.0),
            ],
            Task::ChaoticLogistic => &[("r", 3.9), ("x0", 0.5)],
            Task::PiecewiseRegime => &[
                ("segment", 100.0),
                ("jump", 10.0),
                ("slope", 0.02),
                ("amplitude", 1.0),
                ("period", 20.0),
            ],
            Task::Sawtooth | Task::SquareWave => &[("period", 40.0), ("amplitude", 1.0)],
            Task::SeasonalTrend => &[
                ("trend", 0.002),
                ("period1", 50.0),
                ("amp1", 1.0),
                ("period2", 13.0),
                ("amp2", 0.3),
                ("noise_std", 0.05),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub task: Task,
    pub length: usize,
    /// `None` uses [`Task::default_dt`].
    pub dt: Option<f64>,
    pub seed: u64,
    /// Overrides for [`Task::default_params`].
    pub params: BTreeMap<String, f64>,
}

impl SeriesSpec {
    pub fn new(task: Task, length: usize, seed: u64) -> Self {
        Self {
            task,
            length,
            dt: None,
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.task.default_dt())
    }

    fn resolved_params(&self) -> Result<BTreeMap<&'static str, f64>> {
        let mut out: BTreeMap<&'static str, f64> = self.task.default_params().iter().copied().collect();
        for (k, &v) in &self.params {
            let key = out
                .keys()
                .find(|d| **d == k.as_str())
                .copied()
                .ok_or_else(|| {
                    Error::config(
                        format!("data.params.{k}"),
                        format!("not a parameter of task `{}`", self.task.name()),
                    )
                })?;
            if !v.is_finite() {
                return Err(Error::config(format!("data.params.{k}"), "must be finite"));
            }
            out.insert(key, v);
        }
        Ok(out)
    }

    /// Time stamps `k·dt`.
    pub fn time_axis(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.length).map(|k| k as f64 * dt).collect()
    }
}

/// Generates the series described by `spec`; a pure function of `spec`.
pub fn generate(spec: &SeriesSpec) -> Result<Vec<f64>> {
    if spec.length == 0 {
        return Err(Error::contract("series length must be positive"));
    }
    let dt = spec.dt();
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("data.dt", "must be finite and positive"));
    }
    let p = spec.resolved_params()?;
    let n = spec.length;
    let mut rng = SeedStream::new(spec.seed, streams::SERIES + spec.task.index());
    let damped = |k: usize| {
        let t = k as f64 * dt;
        p["amplitude"] * (-p["gamma"] * t).exp() * (p["omega"] * t + p["phi"]).cos()
    };
    let period = |key: &str| -> Result<f64> {
        let v = p[key];
        if v <= 0.0 {
            Err(Error::config(format!("data.params.{key}"), "must be positive"))
        } else {
            Ok(v)
        }
    };
    let series = match spec.task {
        Task::DampedOscillator => (0..n).map(damped).collect(),
        Task::NoisyDampedOscillator => (0..n)
            .map(|k| damped(k) + rng.normal_with(0.0, p["noise_std"]))
            .collect(),
        Task::Arma => {
            let burn = p["burn_in"].max(0.0) as usize;
            let (a1, a2, m1, m2) = (p["ar1"], p["ar2"], p["ma1"], p["ma2"]);
            let sd = p["innovation_std"];
            let (mut y1, mut y2, mut e1, mut e2) = (0.0, 0.0, 0.0, 0.0);
            let mut out = Vec::with_capacity(n);
            for k in 0..burn + n {
                let e = rng.normal_with(0.0, sd);
                let y = a1 * y1 + a2 * y2 + e + m1 * e1 + m2 * e2;
                (y2, y1, e2, e1) = (y1, y, e1, e);
                if k >= burn {
                    out.push(y);
                }
            }
            out
        }
        Task::ChaoticLogistic => {
            let r = p["r"];
            let mut x = p["x0"];
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(x);
                x = r * x * (1.0 - x);
            }
            out
        }
        Task::PiecewiseRegime => {
            let seg = period("segment")?.round().max(1.0) as usize;
            let per = period("period")?;
            (0..n)
                .map(|k| {
                    let s = k / seg;
                    let j = (k % seg) as f64;
                    let level = p["jump"] * s as f64;
                    if s % 2 == 0 {
                        level + p["slope"] * j
                    } else {
                        level + p["amplitude"] * (TAU * j / per).sin()
                    }
                })
                .collect()
        }
        Task::Sawtooth => {
            let per = period("period")?;
            (0..n)
                .map(|k| p["amplitude"] * (2.0 * (k as f64 % per) / per - 1.0))
                .collect()
        }
        Task::SquareWave => {
            let per = period("period")?;
            (0..n)
                .map(|k| {
                    if (k as f64 % per) < per / 2.0 {
                        p["amplitude"]
                    } else {
                        -p["amplitude"]
                    }
                })
                .collect()
        }
        Task::SeasonalTrend => {
            let (p1, p2) = (period("period1")?, period("period2")?);
            (0..n)
                .map(|k| {
                    let kf = k as f64;
                    p["trend"] * kf
                        + p["amp1"] * (TAU * kf / p1).sin()
                        + p["amp2"] * (TAU * kf / p2).sin()
                        + rng.normal_with(0.0, p["noise_std"])
                })
                .collect()
        }
    };
    Ok(series)
}

/// Sliding windows of length `seq_len` with the next value as target.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub label: String,
    pub seq_len: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl WindowedDataset {
    pub fn from_parts(label: impl Into<String>, seq_len: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if seq_len == 0 || inputs.len() != targets.len() * seq_len {
            return Err(Error::dim("WindowedDataset", &[targets.len(), seq_len], &[inputs.len()]));
        }
        Ok(Self {
            label: label.into(),
            seq_len,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn window(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.seq_len..(k + 1) * self.seq_len]
    }

    pub fn target(&self, k: usize) -> f64 {
        self.targets[k]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn windows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks(self.seq_len)
    }

    fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            label: self.label.clone(),
            seq_len: self.seq_len,
            inputs: self.inputs[range.start * self.seq_len..range.end * self.seq_len].to_vec(),
            targets: self.targets[range].to_vec(),
        }
    }

    fn standardized(&self, stats: &Stats) -> Self {
        let f = |v: &f64| (v - stats.mean) / stats.std;
        Self {
            label: self.label.clone(),
            seq_len: self.seq_len,
            inputs: self.inputs.iter().map(f).collect(),
            targets: self.targets.iter().map(f).collect(),
        }
    }

    /// Writes `window_id,pos_0..pos_{L-1},target`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("window_id");
        for i in 0..self.seq_len {
            header.push_str(&format!(",pos_{i}"));
        }
        header.push_str(",target\n");
        w.write_all(header.as_bytes())?;
        for (k, win) in self.windows().enumerate() {
            let mut line = k.to_string();
            for v in win {
                line.push_str(&format!(",{v:?}"));
            }
            line.push_str(&format!(",{:?}\n", self.targets[k]));
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Window `k` covers `series[k..k+L]`, its target is `series[k+L]`.
pub fn window(series: &[f64], seq_len: usize) -> Result<WindowedDataset> {
    if seq_len == 0 || series.len() < seq_len + 1 {
        return Err(Error::contract(format!(
            "series of length {} too short for windows of length {seq_len}",
            series.len()
        )));
    }
    let m = series.len() - seq_len;
    let mut inputs = Vec::with_capacity(m * seq_len);
    for k in 0..m {
        inputs.extend_from_slice(&series[k..k + seq_len]);
    }
    Ok(WindowedDataset {
        label: String::new(),
        seq_len,
        inputs,
        targets: series[seq_len..].to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

/// Chronological split (first `floor(ratio·M)` windows train) and
/// standardisation with statistics of the training inputs and targets.
pub fn split_and_standardize(
    ds: &WindowedDataset,
    ratio: f64,
) -> Result<(WindowedDataset, WindowedDataset, Stats)> {
    if ds.len() < 2 {
        return Err(Error::contract("need at least two windows to split"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config("data.split_ratio", "must lie strictly between 0 and 1"));
    }
    let n_train = ((ratio * ds.len() as f64).floor() as usize).clamp(1, ds.len() - 1);
    let train = ds.subset(0..n_train);
    let val = ds.subset(n_train..ds.len());

    let count = (train.inputs.len() + train.targets.len()) as f64;
    let all = || train.inputs.iter().chain(&train.targets);
    let mean = all().sum::<f64>() / count;
    let var = all().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    let std = var.sqrt();
    if !(std > 1e-12 && std.is_finite()) {
        return Err(Error::config(
            "data.task",
            format!("training split of `{}` has degenerate standard deviation {std}", ds.label),
        ));
    }
    let stats = Stats { mean, std };
    Ok((train.standardized(&stats), val.standardized(&stats), stats))
}

/// Writes `index,t,value`.
pub fn write_series_csv<W: Write>(spec: &SeriesSpec, series: &[f64], mut w: W) -> Result<()> {
    w.write_all(b"index,t,value\n")?;
    let dt = spec.dt();
    for (k, v) in series.iter().enumerate() {
        writeln!(w, "{k},{:?},{v:?}", k as f64 * dt)?;
    }
    Ok(())
}

/// Generates, windows, splits and standardises in one go.
pub fn prepare(spec: &SeriesSpec, seq_len: usize, ratio: f64) -> Result<(WindowedDataset, WindowedDataset, Stats)> {
    let series = generate(spec)?;
    let mut ds = window(&series, seq_len)?;
    ds.label = spec.task.name().to_string();
    split_and_standardize(&ds, ratio)
}
