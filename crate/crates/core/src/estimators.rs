//! Estimating the stationary density of the price position from trade events.
//!
//! For a large-tick stock the fundamental price inside the spread is proxied
//! by the order-book imbalance V^b/(V^b + V^a). Events are filtered to
//! one-tick spreads inside the trading session and to trades that stay at the
//! best level, then binned into K equal bins J_k = [(k−1)/K, k/K) (last bin
//! closed) in one of three ways:
//!
//! * weighted: volume-weighted mix of pre-trade (weight w) and post-trade
//!   (weight 1−w) imbalances;
//! * weighted uniform: the same with one unit of weight per trade;
//! * continuous: each trade's volume is spread over the imbalances visited
//!   while it depletes the hit queue, v ↦ V^b/(V^b + V^a − v) for a buy and
//!   v ↦ (V^b − v)/(V^b + V^a − v) for a sell.
//!
//! Every estimator is a normalized histogram: (1/K) Σ_k value_k = 1.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TradeSide {
    Buy,
    Sell,
}

/// One trade with the best-level book state around it. Prices are integer
/// ticks; volumes are in shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobEvent {
    pub ts_ns: i64,
    pub side: TradeSide,
    pub size: f64,
    pub bid_px_pre: i64,
    pub ask_px_pre: i64,
    pub vb_pre: f64,
    pub va_pre: f64,
    pub bid_px_post: i64,
    pub ask_px_post: i64,
    pub vb_post: f64,
    pub va_post: f64,
    pub tick: f64,
}

/// Column order of the event CSV schema.
pub const EVENT_COLUMNS: [&str; 12] = [
    "ts_ns",
    "side",
    "size",
    "bid_px_pre",
    "ask_px_pre",
    "vb_pre",
    "va_pre",
    "bid_px_post",
    "ask_px_post",
    "vb_post",
    "va_post",
    "tick",
];

impl LobEvent {
    pub fn pre_imbalance(&self) -> Option<f64> {
        let d = self.vb_pre + self.va_pre;
        (d > 0.0).then(|| self.vb_pre / d)
    }

    pub fn post_imbalance(&self) -> Option<f64> {
        let d = self.vb_post + self.va_post;
        (d > 0.0).then(|| self.vb_post / d)
    }

    fn check(&self) -> std::result::Result<(), RejectCode> {
        if !(self.size > 0.0) {
            return Err(RejectCode::NonpositiveSize);
        }
        if [self.vb_pre, self.va_pre, self.vb_post, self.va_post]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(RejectCode::NegativeVolume);
        }
        if !(self.vb_pre + self.va_pre > 0.0) {
            return Err(RejectCode::UndefinedImbalance);
        }
        let ok = match self.side {
            TradeSide::Buy => self.va_post <= self.va_pre,
            TradeSide::Sell => self.vb_post <= self.vb_pre,
        };
        if !ok {
            return Err(RejectCode::InvariantViolation);
        }
        Ok(())
    }
}

/// Writes events in the CSV schema.
pub fn write_events<W: Write>(events: &[LobEvent], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for e in events {
        wr.serialize(e)?;
    }
    wr.flush().map_err(|e| Error::io("<events>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    Parse,
    NonpositiveSize,
    NegativeVolume,
    UndefinedImbalance,
    InvariantViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    /// 1-based line number in the file (header is line 1).
    pub line: u64,
    pub code: RejectCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub rows: u64,
    pub accepted: u64,
    pub rejects: Vec<Reject>,
    /// Lines whose timestamp precedes the previous accepted row.
    pub nonmonotone_timestamps: Vec<u64>,
}

/// Reads and validates an event CSV. Malformed rows are rejected with their
/// line numbers; out-of-order timestamps are only reported.
pub fn load_events(path: &Path) -> Result<(Vec<LobEvent>, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(
        std::io::BufReader::with_capacity(1 << 20, file),
        &path.display().to_string(),
    )
}

pub fn read_events<R: std::io::Read>(reader: R, name: &str) -> Result<(Vec<LobEvent>, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.byte_headers()?.clone();
    let mut idx = [0usize; 12];
    for (k, col) in EVENT_COLUMNS.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == col.as_bytes())
            .ok_or_else(|| Error::Schema {
                path: name.to_string(),
                reason: format!("missing column `{col}`"),
            })?;
    }
    let mut report = LoadReport::default();
    let mut events = Vec::new();
    let mut last_ts = i64::MIN;
    let mut rec = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                report.rows += 1;
                report.rejects.push(Reject {
                    line,
                    code: RejectCode::Parse,
                    message: e.to_string(),
                });
                continue;
            }
        }
        report.rows += 1;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let ev = match parse_row(&rec, &idx) {
            Ok(ev) => ev,
            Err(msg) => {
                report.rejects.push(Reject {
                    line,
                    code: RejectCode::Parse,
                    message: msg,
                });
                continue;
            }
        };
        if let Err(code) = ev.check() {
            report.rejects.push(Reject {
                line,
                code,
                message: format!("{code:?}"),
            });
            continue;
        }
        if ev.ts_ns < last_ts {
            report.nonmonotone_timestamps.push(line);
        }
        last_ts = ev.ts_ns;
        events.push(ev);
    }
    report.accepted = events.len() as u64;
    Ok((events, report))
}

fn parse_row(rec: &csv::ByteRecord, idx: &[usize; 12]) -> std::result::Result<LobEvent, String> {
    let field = |k: usize| -> std::result::Result<&str, String> {
        let raw = rec
            .get(idx[k])
            .ok_or_else(|| format!("missing field `{}`", EVENT_COLUMNS[k]))?;
        std::str::from_utf8(raw).map_err(|_| format!("non-UTF-8 field `{}`", EVENT_COLUMNS[k]))
    };
    let int = |k: usize| -> std::result::Result<i64, String> {
        let s = field(k)?;
        s.parse::<i64>()
            .map_err(|_| format!("`{}`: not an integer: `{s}`", EVENT_COLUMNS[k]))
    };
    let num = |k: usize| -> std::result::Result<f64, String> {
        let s = field(k)?;
        crate::config::parse_decimal(s).ok_or_else(|| format!("`{}`: not a number: `{s}`", EVENT_COLUMNS[k]))
    };
    let side = match field(1)? {
        "buy" | "B" | "b" => TradeSide::Buy,
        "sell" | "S" | "s" => TradeSide::Sell,
        other => return Err(format!("`side`: expected buy or sell, got `{other}`")),
    };
    Ok(LobEvent {
        ts_ns: int(0)?,
        side,
        size: num(2)?,
        bid_px_pre: int(3)?,
        ask_px_pre: int(4)?,
        vb_pre: num(5)?,
        va_pre: num(6)?,
        bid_px_post: int(7)?,
        ask_px_post: int(8)?,
        vb_post: num(9)?,
        va_post: num(10)?,
        tick: num(11)?,
    })
}

/// Trading session as nanoseconds since midnight, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Session {
    pub open_ns: i64,
    pub close_ns: i64,
}

impl Default for Session {
    /// 09:30:00 to 16:00:00.
    fn default() -> Self {
        Self {
            open_ns: 34_200_000_000_000,
            close_ns: 57_600_000_000_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterReport {
    pub total: usize,
    pub kept: usize,
    pub dropped_session: usize,
    pub dropped_spread: usize,
    pub dropped_depth: usize,
    /// Kept events whose hit side was set to zero after the spread widened.
    pub post_adjusted: usize,
    pub volume_total: f64,
    pub volume_in_session: f64,
    pub volume_kept: f64,
    /// volume_kept / volume_total
    pub fraction_of_total: f64,
    /// volume_kept / volume_in_session
    pub fraction_of_session: f64,
}

/// Keeps in-session, one-tick-spread trades no larger than the hit queue;
/// zeroes the hit side when the trade widened the spread.
pub fn filter_events(events: &[LobEvent], session: Session) -> (Vec<LobEvent>, FilterReport) {
    let mut r = FilterReport {
        total: events.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(events.len());
    for e in events {
        r.volume_total += e.size;
        if e.ts_ns < session.open_ns || e.ts_ns > session.close_ns {
            r.dropped_session += 1;
            continue;
        }
        r.volume_in_session += e.size;
        if e.ask_px_pre - e.bid_px_pre != 1 {
            r.dropped_spread += 1;
            continue;
        }
        let hit = match e.side {
            TradeSide::Buy => e.va_pre,
            TradeSide::Sell => e.vb_pre,
        };
        if e.size > hit {
            r.dropped_depth += 1;
            continue;
        }
        let mut e = e.clone();
        if e.ask_px_post - e.bid_px_post > 1 {
            match e.side {
                TradeSide::Buy => e.va_post = 0.0,
                TradeSide::Sell => e.vb_post = 0.0,
            }
            r.post_adjusted += 1;
        }
        r.volume_kept += e.size;
        kept.push(e);
    }
    r.kept = kept.len();
    r.fraction_of_total = if r.volume_total > 0.0 {
        r.volume_kept / r.volume_total
    } else {
        0.0
    };
    r.fraction_of_session = if r.volume_in_session > 0.0 {
        r.volume_kept / r.volume_in_session
    } else {
        0.0
    };
    (kept, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum EstimatorKind {
    Weighted { w: f64 },
    WeightedUniform { w: f64 },
    Continuous,
}

/// K-bin histogram estimate of the stationary density on [0,1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedDensity {
    pub kind: EstimatorKind,
    pub values: Vec<f64>,
    pub used_events: usize,
    pub skipped_events: usize,
    pub total_volume: f64,
}

impl BinnedDensity {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let n = self.k() as f64;
        (k as f64 / n, (k + 1) as f64 / n)
    }

    /// (1/K) Σ |a_k − b_k|.
    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>() / self.k() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,value")?;
        for k in 0..self.k() {
            let (lo, hi) = self.edges(k);
            writeln!(w, "{lo},{hi},{}", self.values[k])?;
        }
        Ok(())
    }
}

/// Bin index of an imbalance in [0,1] under the half-open convention with
/// the last bin closed.
pub fn bin_of(x: f64, k: usize) -> usize {
    ((x * k as f64).floor().max(0.0) as usize).min(k - 1)
}

/// Additive accumulator; shards of a stream can be merged in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAccumulator {
    pub kind: EstimatorKind,
    pub mass: Vec<f64>,
    pub used: usize,
    pub skipped: usize,
    pub volume: f64,
}

impl BinAccumulator {
    pub fn new(kind: EstimatorKind, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("bins", "need at least one bin"));
        }
        match kind {
            EstimatorKind::Weighted { w } | EstimatorKind::WeightedUniform { w } if !(0.0..=1.0).contains(&w) => {
                return Err(Error::param("w", format!("must lie in [0, 1], got {w}")))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            mass: vec![0.0; k],
            used: 0,
            skipped: 0,
            volume: 0.0,
        })
    }

    pub fn add(&mut self, e: &LobEvent) {
        let k = self.mass.len();
        match self.kind {
            EstimatorKind::Weighted { w } | EstimatorKind::WeightedUniform { w } => {
                let (Some(pre), Some(post)) = (e.pre_imbalance(), e.post_imbalance()) else {
                    self.skipped += 1;
                    return;
                };
                let weight = if matches!(self.kind, EstimatorKind::Weighted { .. }) {
                    e.size
                } else {
                    1.0
                };
                self.mass[bin_of(pre, k)] += w * weight;
                self.mass[bin_of(post, k)] += (1.0 - w) * weight;
                self.volume += weight;
            }
            EstimatorKind::Continuous => match continuous_bin_masses(e, k) {
                Some(r) => {
                    for (m, v) in self.mass.iter_mut().zip(r) {
                        *m += v;
                    }
                    self.volume += e.size;
                }
                None => {
                    self.skipped += 1;
                    return;
                }
            },
        }
        self.used += 1;
    }

    pub fn merge(&mut self, other: &BinAccumulator) {
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a += b;
        }
        self.used += other.used;
        self.skipped += other.skipped;
        self.volume += other.volume;
    }

    pub fn finish(&self) -> Result<BinnedDensity> {
        let total: f64 = self.mass.iter().sum();
        if self.used == 0 || !(total > 0.0) {
            return Err(Error::EmptySample("no usable events".into()));
        }
        let k = self.mass.len() as f64;
        Ok(BinnedDensity {
            kind: self.kind,
            values: self.mass.iter().map(|m| m * k / total).collect(),
            used_events: self.used,
            skipped_events: self.skipped,
            total_volume: self.volume,
        })
    }
}

/// Exact volume R_k that a trade spends with the imbalance in each bin while
/// depleting the hit queue. Sums to the trade size. None when the imbalance
/// path is undefined (the trade empties both sides).
pub fn continuous_bin_masses(e: &LobEvent, k: usize) -> Option<Vec<f64>> {
    let (vb, va, dv) = (e.vb_pre, e.va_pre, e.size);
    let total = vb + va;
    if !(total - dv > 0.0) {
        return None;
    }
    // breakpoints in v where the imbalance path crosses each inner bin edge;
    // clipping to [0, ΔV] and differencing gives each bin's share
    let clip = |v: f64| v.clamp(0.0, dv);
    let mut r = vec![0.0; k];
    match e.side {
        TradeSide::Buy => {
            // p(v) = vb/(total − v) increasing; p(v) ≥ c ⇔ v ≥ total − vb/c
            let cross = |c: f64| if c <= 0.0 { 0.0 } else { clip(total - vb / c) };
            let mut prev = 0.0;
            for (j, slot) in r.iter_mut().enumerate() {
                let next = if j + 1 == k {
                    dv
                } else {
                    cross((j + 1) as f64 / k as f64)
                };
                *slot = next - prev;
                prev = next;
            }
        }
        TradeSide::Sell => {
            // p(v) = (vb − v)/(total − v) decreasing; p(v) ≥ c ⇔ v ≤ (vb − c·total)/(1 − c)
            let cross = |c: f64| clip((vb - c * total) / (1.0 - c));
            let mut prev = dv;
            for (j, slot) in r.iter_mut().enumerate() {
                let next = if j + 1 == k {
                    0.0
                } else {
                    cross((j + 1) as f64 / k as f64)
                };
                *slot = prev - next;
                prev = next;
            }
        }
    }
    Some(r)
}

fn run(events: &[LobEvent], kind: EstimatorKind, k: usize) -> Result<BinnedDensity> {
    if events.is_empty() {
        return Err(Error::EmptySample("event stream is empty".into()));
    }
    let mut acc = BinAccumulator::new(kind, k)?;
    for e in events {
        acc.add(e);
    }
    acc.finish()
}

/// Volume-weighted mix of pre-trade (weight w) and post-trade imbalances.
pub fn estimate_weighted(events: &[LobEvent], w: f64, k: usize) -> Result<BinnedDensity> {
    run(events, EstimatorKind::Weighted { w }, k)
}

/// As [`estimate_weighted`] with unit weight per trade.
pub fn estimate_weighted_uniform(events: &[LobEvent], w: f64, k: usize) -> Result<BinnedDensity> {
    run(events, EstimatorKind::WeightedUniform { w }, k)
}

/// Volume spread along each trade's depletion path.
pub fn estimate_continuous(events: &[LobEvent], k: usize) -> Result<BinnedDensity> {
    run(events, EstimatorKind::Continuous, k)
}
