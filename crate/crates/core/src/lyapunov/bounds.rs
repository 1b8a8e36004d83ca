use serde::Serialize;

use super::LyapunovError;
use crate::book::{BookState, MatchRule, Side};
use crate::dist::{ArrivalSpec, BinPartition};
use crate::sim::{self, ArrivalStream, RunOptions};

/// Keep one state in this many for the tail histogram, so that retained
/// samples are close to independent.
const STRIDE: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub m: u64,
    pub empirical: f64,
    pub bound: f64,
    pub slack: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometricReport {
    pub x: f64,
    pub y: f64,
    pub rho: f64,
    pub rho_prime: f64,
    pub samples: u64,
    pub stride: u64,
    pub bid_hist: Vec<u64>,
    pub ask_hist: Vec<u64>,
    pub tail_b: Vec<TailRow>,
    pub tail_a: Vec<TailRow>,
    pub passed: bool,
}

fn tails(hist: &[u64], rho: f64, n: u64) -> Vec<TailRow> {
    let nf = n.max(1) as f64;
    let mut rows = Vec::new();
    let mut above: u64 = hist.iter().sum();
    for m in 1u64.. {
        above -= hist.get(m as usize - 1).copied().unwrap_or(0);
        let bound = rho.powi(m as i32);
        if bound < 1e-6 && above == 0 {
            break;
        }
        let slack = 3.0 * (bound * (1.0 - bound) / nf).sqrt();
        let empirical = above as f64 / nf;
        rows.push(TailRow { m, empirical, bound, slack, ok: empirical <= bound + slack });
        if m > 200 {
            break;
        }
    }
    rows
}

/// Ordinary book with a bid reservoir at `x` and an ask reservoir at `y`;
/// compares the tails of the bid and ask counts in `(x, y)` with the
/// geometric laws of ratio `ρ = (F_b(y)−F_b(x))/F_a(x)` and
/// `ρ' = (F_a(y)−F_a(x))/(1−F_b(y))`.
pub fn check_geometric_bound(x: f64, y: f64, spec: &ArrivalSpec, n_events: u64, seed: u64) -> Result<GeometricReport, LyapunovError> {
    if !(x < y) {
        return Err(LyapunovError::Domain(format!("need x < y, got x = {x}, y = {y}")));
    }
    if spec.p_bid != 0.5 {
        return Err(LyapunovError::Domain(format!("bids and asks must arrive at equal rates, p_bid = {}", spec.p_bid)));
    }
    let (fbx, fby) = (spec.bid.cdf(x), spec.bid.cdf(y));
    let (fax, fay) = (spec.ask.cdf(x), spec.ask.cdf(y));
    if !(fby < fbx + fax) {
        return Err(LyapunovError::Domain(format!("F_b(y) < F_b(x) + F_a(x) fails: {fby} >= {}", fbx + fax)));
    }
    if !(fay < fax + (1.0 - fby)) {
        return Err(LyapunovError::Domain(format!("F_a(y) < F_a(x) + (1 - F_b(y)) fails: {fay} >= {}", fax + 1.0 - fby)));
    }
    let rho = (fby - fbx) / fax;
    let rho_prime = (fay - fax) / (1.0 - fby);
    let mut book = BookState::with_reservoirs(Some(x), Some(y))?;
    let rule = MatchRule::Ordinary;
    let stream = ArrivalStream::new(seed, n_events, spec.clone());
    let burn = n_events / 2;
    let mut bid_hist = Vec::new();
    let mut ask_hist = Vec::new();
    let mut samples = 0;
    for ev in stream.iter() {
        let o = ev.order;
        // orders behind a reservoir never trade
        let behind = match o.side {
            Side::Bid => o.price <= x,
            Side::Ask => o.price >= y,
        };
        if !behind {
            book.apply_arrival(&rule, o)?;
        }
        if o.seq >= burn && (o.seq - burn) % STRIDE == 0 {
            samples += 1;
            for (h, c) in [(&mut bid_hist, book.n_bids()), (&mut ask_hist, book.n_asks())] {
                if h.len() <= c {
                    h.resize(c + 1, 0);
                }
                h[c] += 1;
            }
        }
    }
    let tail_b = tails(&bid_hist, rho, samples);
    let tail_a = tails(&ask_hist, rho_prime, samples);
    let passed = tail_b.iter().chain(&tail_a).all(|r| r.ok);
    Ok(GeometricReport { x, y, rho, rho_prime, samples, stride: STRIDE, bid_hist, ask_hist, tail_b, tail_a, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunningMaxReport {
    pub seed: u64,
    pub n_events: u64,
    pub k_b: usize,
    pub k_a: usize,
    /// `(event index, running max)` at each increase.
    pub series: Vec<(u64, u64)>,
    pub last_jump: Option<u64>,
    /// `last_jump / n_events`, zero when the max never moved.
    pub last_jump_fraction: f64,
    /// Running max after the first half of the events, and at the end.
    pub max_half: u64,
    pub max_full: u64,
}

/// Ordinary book from empty; tracks the running max of the number of bids
/// above bin `k_b` plus asks below bin `k_a`.
pub fn running_max_evidence(spec: &ArrivalSpec, part: &BinPartition, k_b: usize, k_a: usize, n_events: u64, seed: u64) -> Result<RunningMaxReport, LyapunovError> {
    if !(k_b < k_a && k_a < part.len()) {
        return Err(LyapunovError::Domain(format!("need k_b < k_a < {}, got ({k_b}, {k_a})", part.len())));
    }
    let stream = ArrivalStream::new(seed, n_events, spec.clone());
    let opts = RunOptions { record_every: (n_events / 100).max(1), recorder: part.clone(), mid_bins: Some((k_b, k_a)), ..RunOptions::default() };
    let tr = sim::run_with(&MatchRule::Ordinary, BookState::new(), &stream, &opts)?;
    let series = tr.running_max_mid.clone();
    let last_jump = tr.last_max_jump();
    let at = |n: u64| series.iter().take_while(|&&(i, _)| i <= n).last().map_or(0, |&(_, v)| v);
    Ok(RunningMaxReport {
        seed,
        n_events,
        k_b,
        k_a,
        last_jump_fraction: match last_jump {
            Some(i) if n_events > 0 => i as f64 / n_events as f64,
            _ => 0.0,
        },
        last_jump,
        max_half: at(n_events / 2),
        max_full: at(n_events),
        series,
    })
}
