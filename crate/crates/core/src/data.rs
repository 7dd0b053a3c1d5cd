//! Hourly price series: CSV ingestion, train/test split, normalization
//! statistics, week-window sampling and descriptive statistics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "timestamp,price";
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const ACCEPTED_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ACCEPTED_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Contiguous hourly prices in $/MWh.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    timestamps: Vec<NaiveDateTime>,
    prices: Vec<f64>,
}

impl PriceSeries {
    /// Validates hourly spacing and finiteness.
    pub fn new(timestamps: Vec<NaiveDateTime>, prices: Vec<f64>) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::Dimension {
                expected: timestamps.len(),
                got: prices.len(),
                context: "one price per timestamp",
            });
        }
        if timestamps.is_empty() {
            return Err(Error::Empty("price series has no records".into()));
        }
        for (i, p) in prices.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("non-finite price {p}"),
                });
            }
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            check_spacing(&w[0], &w[1], i + 3)?;
        }
        Ok(Self { timestamps, prices })
    }

    /// Hourly series starting at `start`.
    pub fn from_prices(start: NaiveDateTime, prices: Vec<f64>) -> Result<Self> {
        let timestamps = (0..prices.len())
            .map(|i| start + Duration::hours(i as i64))
            .collect();
        Self::new(timestamps, prices)
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn first_timestamp(&self) -> NaiveDateTime {
        self.timestamps[0]
    }

    pub fn last_timestamp(&self) -> NaiveDateTime {
        *self.timestamps.last().unwrap()
    }

    /// Records `[start, end)`; panics if the range is out of bounds.
    pub fn slice(&self, start: usize, end: usize) -> PriceSeries {
        PriceSeries {
            timestamps: self.timestamps[start..end].to_vec(),
            prices: self.prices[start..end].to_vec(),
        }
    }

    /// Appends `other`, which must continue this series hour by hour.
    pub fn concat(&self, other: &PriceSeries) -> Result<PriceSeries> {
        check_spacing(&self.last_timestamp(), &other.first_timestamp(), self.len() + 2)?;
        let mut out = self.clone();
        out.timestamps.extend_from_slice(&other.timestamps);
        out.prices.extend_from_slice(&other.prices);
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(32 * self.len());
        s.push_str(CSV_HEADER);
        s.push('\n');
        for (ts, p) in self.timestamps.iter().zip(&self.prices) {
            let _ = writeln!(s, "{},{}", format_timestamp(ts), p);
        }
        s
    }
}

fn check_spacing(prev: &NaiveDateTime, next: &NaiveDateTime, line: usize) -> Result<()> {
    let gap = *next - *prev;
    if gap != Duration::hours(1) {
        let what = if gap <= Duration::zero() {
            "duplicate or out-of-order timestamp"
        } else {
            "gap in hourly timestamps"
        };
        return Err(Error::Continuity {
            line,
            message: format!(
                "{what}: {} follows {}",
                format_timestamp(next),
                format_timestamp(prev)
            ),
        });
    }
    Ok(())
}

/// Parses the `timestamp,price` CSV format. Line numbers in errors are
/// 1-based and count the header.
pub fn parse_prices(text: &str) -> Result<PriceSeries> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i, l),
            None => return Err(Error::Empty("price file is empty".into())),
        }
    };
    let header_fields: Vec<_> = header.1.trim().trim_start_matches('\u{feff}').split(',').map(str::trim).collect();
    if header_fields != ["timestamp", "price"] {
        return Err(Error::Parse {
            line: header.0 + 1,
            message: format!("expected header `{CSV_HEADER}`, found `{}`", header.1.trim()),
        });
    }
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(ts), Some(price), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 fields, found `{line}`"),
            });
        };
        let ts = parse_timestamp(ts).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("invalid timestamp `{}`", ts.trim()),
        })?;
        let price: f64 = price.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid price `{}`", price.trim()),
        })?;
        if !price.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite price `{price}`"),
            });
        }
        if let Some(prev) = timestamps.last() {
            check_spacing(prev, &ts, line_no)?;
        }
        timestamps.push(ts);
        prices.push(price);
    }
    if prices.is_empty() {
        return Err(Error::Empty("price file has a header but no records".into()));
    }
    PriceSeries::new(timestamps, prices)
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_prices(&text)
}

/// Train is everything strictly before `boundary`, test everything at or after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub boundary: NaiveDateTime,
}

pub fn split(series: &PriceSeries, spec: SplitSpec) -> Result<(PriceSeries, PriceSeries)> {
    let idx = series.timestamps.partition_point(|ts| *ts < spec.boundary);
    if idx == 0 || idx == series.len() {
        return Err(Error::BoundaryOutOfRange(format_timestamp(&spec.boundary)));
    }
    Ok((series.slice(0, idx), series.slice(idx, series.len())))
}

/// Warm-up prices followed by the episode prices, contiguous in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceWindow {
    pub warmup: Vec<f64>,
    pub episode: Vec<f64>,
    /// Index of the first episode price in the source series.
    pub start: usize,
}

impl PriceWindow {
    pub fn new(warmup: Vec<f64>, episode: Vec<f64>) -> Self {
        Self {
            start: warmup.len(),
            warmup,
            episode,
        }
    }

    /// Window with episode `[start, start + len)` and up to `warmup` prior hours.
    pub fn at(series: &PriceSeries, start: usize, len: usize, warmup: usize) -> Result<Self> {
        if start + len > series.len() || len == 0 {
            return Err(Error::TooShort {
                needed: start + len.max(1),
                have: series.len(),
            });
        }
        let w0 = start.saturating_sub(warmup);
        Ok(Self {
            warmup: series.prices[w0..start].to_vec(),
            episode: series.prices[start..start + len].to_vec(),
            start,
        })
    }

    pub fn len(&self) -> usize {
        self.episode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode.is_empty()
    }

    pub fn all_prices(&self) -> impl Iterator<Item = f64> + '_ {
        self.warmup.iter().chain(&self.episode).copied()
    }
}

/// Uniformly random episode start in `[warmup, len - horizon]`.
pub fn sample_window<R: Rng + ?Sized>(
    train: &PriceSeries,
    horizon: usize,
    warmup: usize,
    rng: &mut R,
) -> Result<PriceWindow> {
    if horizon == 0 {
        return Err(Error::InvalidInput("episode length must be positive".into()));
    }
    if train.len() < horizon + warmup {
        return Err(Error::TooShort {
            needed: horizon + warmup,
            have: train.len(),
        });
    }
    let start = rng.gen_range(warmup..=train.len() - horizon);
    PriceWindow::at(train, start, horizon, warmup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub price_mean: f64,
    pub price_std: f64,
    /// Upper energy bound used to scale stored energy.
    pub energy_scale: f64,
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn norm_stats(train: &PriceSeries, energy_scale: f64) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::Empty("training partition".into()));
    }
    let (mean, std) = mean_std(train.prices());
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::ZeroVariance);
    }
    Ok(NormStats {
        price_mean: mean,
        price_std: std,
        energy_scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !(hi > lo) {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
            counts[b] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,lower,upper,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{},{c}", self.edges[i], self.edges[i + 1]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub prices: Histogram,
    pub changes: Histogram,
}

pub fn describe(series: &PriceSeries, bins: usize) -> Result<Summary> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            have: series.len(),
        });
    }
    let p = series.prices();
    let (mean, std) = mean_std(p);
    let changes: Vec<f64> = p.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(Summary {
        count: p.len(),
        min: p.iter().copied().fold(f64::INFINITY, f64::min),
        max: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std,
        prices: Histogram::new(p, bins),
        changes: Histogram::new(&changes, bins),
    })
}
