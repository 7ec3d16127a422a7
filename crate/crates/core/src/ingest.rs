//! Asset price panels to a population covariance.
//!
//! The pipeline is: load a `date,ASSET1,ASSET2,...` price CSV, cut the panel
//! at the earliest date from which every asset has a quote, take simple net
//! returns, and form the centered sample covariance.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::substream;

/// Prices by date; `None` marks a missing or non-numeric cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    /// One row per date, one entry per asset.
    pub prices: Vec<Vec<Option<f64>>>,
}

impl PricePanel {
    /// Index of the earliest date from which every asset is quoted on every
    /// later date, or `None` if the last row itself is incomplete.
    pub fn complete_start(&self) -> Option<usize> {
        let last_gap = self
            .prices
            .iter()
            .rposition(|row| row.iter().any(Option::is_none));
        match last_gap {
            None if self.prices.is_empty() => None,
            None => Some(0),
            Some(i) if i + 1 < self.prices.len() => Some(i + 1),
            Some(_) => None,
        }
    }
}

/// Where the completeness cut landed.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPolicy {
    pub first_complete_date: String,
    pub dropped_dates: usize,
}

/// Net returns on the complete part of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    /// Date of each return (the later of the two prices).
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    /// `T × p`.
    pub returns: DMatrix<f64>,
    pub start_policy: StartPolicy,
}

pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PricePanel> {
    parse_price_csv(BufReader::new(File::open(path)?))
}

pub fn parse_price_csv<R: Read>(input: R) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            column: header.len(),
            message: "expected a date column and at least one asset".into(),
        });
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut dates: Vec<String> = Vec::new();
    let mut prices = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Parse {
                line: pos.as_ref().map_or(0, |p| p.line()),
                column: *len as usize,
                message: format!("expected {expected_len} fields, found {len}"),
            },
            _ => Error::Csv(e),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let date = record.get(0).unwrap_or_default().to_string();
        if let Some(prev) = dates.last() {
            if date.as_str() <= prev.as_str() {
                return Err(Error::UnsortedDates { line });
            }
        }
        let row = record
            .iter()
            .skip(1)
            .map(|cell| cell.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        dates.push(date);
        prices.push(row);
    }
    Ok(PricePanel {
        dates,
        assets,
        prices,
    })
}

/// Simple net returns `p_t / p_{t−1} − 1` from the first complete date on.
pub fn net_returns(panel: &PricePanel) -> Result<ReturnsPanel> {
    let start = panel
        .complete_start()
        .ok_or_else(|| Error::InsufficientData("no date from which all assets are quoted".into()))?;
    let complete = &panel.prices[start..];
    if complete.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 complete dates, found {}",
            complete.len()
        )));
    }
    let p = panel.assets.len();
    let t = complete.len() - 1;
    let mut returns = DMatrix::zeros(t, p);
    for i in 0..t {
        for j in 0..p {
            let prev = complete[i][j].expect("complete row");
            let next = complete[i + 1][j].expect("complete row");
            if prev <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "non-positive price {prev} for {} on {}",
                    panel.assets[j],
                    panel.dates[start + i]
                )));
            }
            returns[(i, j)] = next / prev - 1.0;
        }
    }
    Ok(ReturnsPanel {
        dates: panel.dates[start + 1..].to_vec(),
        assets: panel.assets.clone(),
        returns,
        start_policy: StartPolicy {
            first_complete_date: panel.dates[start].clone(),
            dropped_dates: start,
        },
    })
}

/// Divisor of the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Divisor {
    #[default]
    T,
    TMinusOne,
}

/// Centered sample covariance of the returns with divisor `T`.
pub fn covariance_from_returns(panel: &ReturnsPanel) -> Result<DMatrix<f64>> {
    covariance_from_returns_with(panel, Divisor::T)
}

pub fn covariance_from_returns_with(panel: &ReturnsPanel, divisor: Divisor) -> Result<DMatrix<f64>> {
    let t = panel.returns.nrows();
    if t < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 returns, found {t}"
        )));
    }
    let mean = panel.returns.row_mean();
    let mut centered = panel.returns.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let d = match divisor {
        Divisor::T => t as f64,
        Divisor::TMinusOne => t as f64 - 1.0,
    };
    let cov = centered.tr_mul(&centered) / d;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Weekday dates starting 2014-01-01 in ISO format.
fn business_days(count: usize) -> Vec<String> {
    const MONTHS: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let (mut year, mut month, mut day) = (2014u32, 1u32, 1u32);
    // 2014-01-01 was a Wednesday (0 = Monday)
    let mut weekday = 2u32;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if weekday < 5 {
            out.push(format!("{year:04}-{month:02}-{day:02}"));
        }
        weekday = (weekday + 1) % 7;
        let leap = year % 4 == 0 && (year % 100 != 0 || year % 400 == 0);
        let len = MONTHS[month as usize - 1] + u32::from(month == 2 && leap);
        day += 1;
        if day > len {
            day = 1;
            month += 1;
            if month > 12 {
                month = 1;
                year += 1;
            }
        }
    }
    out
}

/// Factor-model price panel for tests and demos.
///
/// `complete_dates` rows are fully quoted; the last asset is missing for the
/// `late_listing` dates before them, so the completeness cut has work to do.
pub fn synthetic_price_panel(
    assets: usize,
    complete_dates: usize,
    late_listing: usize,
    seed: u64,
) -> PricePanel {
    const FACTORS: usize = 3;
    let mut rng = substream(seed, 0x1_0000_0000);
    let total = complete_dates + late_listing;
    let loadings = DMatrix::from_fn(assets, FACTORS, |_, k| {
        let base = if k == 0 { 1.0 } else { 0.0 };
        base + 0.5 * rng.sample::<f64, _>(StandardNormal)
    });
    let mut level = DVector::from_fn(assets, |_, _| 50.0 + 100.0 * rng.random::<f64>());
    let dates = business_days(total);
    let mut prices = Vec::with_capacity(total);
    for t in 0..total {
        if t > 0 {
            let f = DVector::from_fn(FACTORS, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
            let common = &loadings * f;
            for j in 0..assets {
                let idio = 0.015 * rng.sample::<f64, _>(StandardNormal);
                level[j] *= 1.0 + common[j] + idio;
            }
        }
        let row = (0..assets)
            .map(|j| {
                if j + 1 == assets && t < late_listing {
                    None
                } else {
                    Some(level[j])
                }
            })
            .collect();
        prices.push(row);
    }
    PricePanel {
        dates,
        assets: (1..=assets).map(|j| format!("A{j:03}")).collect(),
        prices,
    }
}

/// Writes a panel in the same CSV layout [`parse_price_csv`] reads.
pub fn write_price_csv(path: impl AsRef<Path>, panel: &PricePanel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(panel.assets.iter().cloned());
    w.write_record(&header)?;
    for (date, row) in panel.dates.iter().zip(&panel.prices) {
        let mut rec = vec![date.clone()];
        rec.extend(
            row.iter()
                .map(|v| v.map(crate::io::format_f64).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
