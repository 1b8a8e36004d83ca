//! Arrival streams, trajectory recording and the Monte Carlo estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, BookState, MatchRule, Order, Outcome, Side};
use crate::dist::{ArrivalSpec, BinPartition, DistError};
use crate::rng::{CounterRng, Field};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Book(#[from] BookError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("need at least {need} checkpoints with positive time, trace has {got}")]
    TooFewCheckpoints { need: usize, got: usize },
    #[error("no time elapsed after burn-in")]
    ZeroElapsed,
    #[error("invalid option: {0}")]
    Option(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// Event n happens at time n/2.
    #[default]
    EventCount,
    /// Exponential gaps of mean 1/2.
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedOrder {
    pub order: Order,
    pub time: f64,
}

/// A reproducible sequence of arrivals.
#[derive(Clone, Debug)]
pub struct ArrivalStream {
    pub seed: u64,
    pub n_events: u64,
    pub spec: ArrivalSpec,
    pub time_mode: TimeMode,
    rng: CounterRng,
}

impl ArrivalStream {
    pub fn new(seed: u64, n_events: u64, spec: ArrivalSpec) -> Self {
        Self { seed, n_events, spec, time_mode: TimeMode::EventCount, rng: CounterRng::new(seed) }
    }

    pub fn with_time_mode(mut self, mode: TimeMode) -> Self {
        self.time_mode = mode;
        self
    }

    pub fn rng(&self) -> CounterRng {
        self.rng
    }

    /// Side and price of arrival `i`, independent of every other arrival.
    #[inline]
    pub fn order_at(&self, i: u64) -> Order {
        draw_order(&self.rng, &self.spec, i)
    }

    pub fn iter(&self) -> impl Iterator<Item = TimedOrder> + '_ {
        let mut t = 0.0;
        (0..self.n_events).map(move |i| {
            t = match self.time_mode {
                TimeMode::EventCount => (i + 1) as f64 / 2.0,
                TimeMode::Poisson => t + self.rng.exp_at(i, Field::Gap, 0.5),
            };
            TimedOrder { order: self.order_at(i), time: t }
        })
    }
}

#[inline]
pub(crate) fn draw_order(rng: &CounterRng, spec: &ArrivalSpec, i: u64) -> Order {
    let side = if rng.uniform_at(i, Field::Side) < spec.p_bid { Side::Bid } else { Side::Ask };
    let u = rng.uniform_at(i, Field::Price);
    let price = match side {
        Side::Bid => spec.bid.quantile_unchecked(u),
        Side::Ask => spec.ask.quantile_unchecked(u),
    };
    Order { side, price, seq: i }
}

/// Recorder settings for [`run_with`].
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Checkpoint every this many events; 0 picks n/100.
    pub record_every: u64,
    /// Bins for the occupation, joint and shape recorders.
    pub recorder: BinPartition,
    /// Bins `(k_b, k_a)` for the running max of bids above `k_b` plus asks below `k_a`.
    pub mid_bins: Option<(usize, usize)>,
    /// Depth of the top-of-book shape recorder.
    pub top_depth: usize,
    /// Shape is accumulated only while the best bid sits in this bin or higher.
    pub top_min_bin: usize,
    /// Fraction of events discarded before accumulating occupation statistics.
    pub burn_in: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { record_every: 0, recorder: BinPartition::uniform(100), mid_bins: None, top_depth: 10, top_min_bin: 50, burn_in: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub index: u64,
    pub t: f64,
    pub b_inf: u64,
    pub a_inf: u64,
    pub beta: f64,
    pub alpha: f64,
    /// Bids in the recorder bin holding the best bid.
    pub top_bin_bids: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub checkpoints: Vec<Checkpoint>,
    pub recorder: Option<BinPartition>,
    /// Time the best bid spent in each recorder bin after burn-in.
    pub occupation_b: Vec<f64>,
    pub occupation_a: Vec<f64>,
    /// Length of the accumulation window.
    pub elapsed: f64,
    /// `(event index, value)` at every increase of the running max.
    pub running_max_mid: Vec<(u64, u64)>,
    /// Time-weighted histogram over `(bin(β), bin(α))`; index `N` stands for an empty side.
    pub joint_hist: Vec<f64>,
    /// Accumulated `count of bids in bin b_t − k` for k = 0..depth, weighted by time.
    pub top_shape: Vec<f64>,
    pub top_shape_time: f64,
    pub n_events: u64,
    pub bid_arrivals: u64,
    pub ask_arrivals: u64,
    /// Bids that took part in an execution, arriving or resting.
    pub bid_executions: u64,
    pub ask_executions: u64,
    pub final_t: f64,
}

impl Trace {
    pub fn n_bins(&self) -> usize {
        self.recorder.as_ref().map_or(0, |p| p.len())
    }

    /// Joint histogram as a probability table (rows: bin of β, columns: bin of α).
    pub fn joint_mass(&self) -> Vec<f64> {
        if self.elapsed > 0.0 {
            self.joint_hist.iter().map(|v| v / self.elapsed).collect()
        } else {
            vec![0.0; self.joint_hist.len()]
        }
    }

    /// Mean top-of-book shape, or zeros if the condition never held.
    pub fn mean_top_shape(&self) -> Vec<f64> {
        if self.top_shape_time > 0.0 {
            self.top_shape.iter().map(|v| v / self.top_shape_time).collect()
        } else {
            vec![0.0; self.top_shape.len()]
        }
    }

    pub fn last_max_jump(&self) -> Option<u64> {
        self.running_max_mid.last().map(|&(i, _)| i)
    }
}

pub fn run(rule: &MatchRule, initial: BookState, stream: &ArrivalStream, record_every: u64) -> Result<Trace, SimError> {
    let opts = RunOptions { record_every, ..RunOptions::default() };
    run_with(rule, initial, stream, &opts)
}

pub fn run_with(rule: &MatchRule, initial: BookState, stream: &ArrivalStream, opts: &RunOptions) -> Result<Trace, SimError> {
    run_orders(rule, initial, stream.iter(), stream.n_events, opts).map(|(t, _)| t)
}

/// Drives a book through `orders` and records a [`Trace`]. Also returns the final book.
pub fn run_orders<I>(rule: &MatchRule, mut book: BookState, orders: I, n_events: u64, opts: &RunOptions) -> Result<(Trace, BookState), SimError>
where
    I: IntoIterator<Item = TimedOrder>,
{
    if !(0.0..1.0).contains(&opts.burn_in) {
        return Err(SimError::Option(format!("burn_in {} outside [0, 1)", opts.burn_in)));
    }
    let part = &opts.recorder;
    let nb = part.len();
    let every = if opts.record_every == 0 { (n_events / 100).max(1) } else { opts.record_every };
    let burn_index = (opts.burn_in * n_events as f64).floor() as u64;

    let mut tr = Trace {
        recorder: Some(part.clone()),
        occupation_b: vec![0.0; nb],
        occupation_a: vec![0.0; nb],
        joint_hist: vec![0.0; (nb + 1) * (nb + 1)],
        top_shape: vec![0.0; opts.top_depth],
        n_events,
        ..Trace::default()
    };
    let mut bid_bins = vec![0u64; nb];
    let mut ask_bins = vec![0u64; nb];
    for p in book.bids() {
        bid_bins[part.bin_of(p)] += 1;
    }
    for p in book.asks() {
        ask_bins[part.bin_of(p)] += 1;
    }
    let in_mid = |side: Side, k: usize| match (opts.mid_bins, side) {
        (Some((kb, _)), Side::Bid) => k > kb,
        (Some((_, ka)), Side::Ask) => k < ka,
        (None, _) => false,
    };
    let mut mid: u64 = 0;
    if opts.mid_bins.is_some() {
        mid = (0..nb).map(|k| if in_mid(Side::Bid, k) { bid_bins[k] } else { 0 } + if in_mid(Side::Ask, k) { ask_bins[k] } else { 0 }).sum();
    }
    let mut run_max = mid;

    let bin_or_empty = |x: f64| if x.is_finite() { part.bin_of(x) } else { nb };
    let mut beta = book.best_bid();
    let mut alpha = book.best_ask();
    let mut t_prev = 0.0;
    let mut b_total = book.n_bids() as u64;
    let mut a_total = book.n_asks() as u64;

    for (i, ev) in orders.into_iter().enumerate() {
        let i = i as u64;
        // statistics of the state held on [t_prev, ev.time)
        if i > burn_index {
            let dt = ev.time - t_prev;
            let (kb, ka) = (bin_or_empty(beta), bin_or_empty(alpha));
            if kb < nb {
                tr.occupation_b[kb] += dt;
                if kb >= opts.top_min_bin {
                    for k in 0..opts.top_depth.min(kb + 1) {
                        tr.top_shape[k] += dt * bid_bins[kb - k] as f64;
                    }
                    tr.top_shape_time += dt;
                }
            }
            if ka < nb {
                tr.occupation_a[ka] += dt;
            }
            tr.joint_hist[kb * (nb + 1) + ka] += dt;
            tr.elapsed += dt;
        }
        t_prev = ev.time;

        let o = ev.order;
        match o.side {
            Side::Bid => tr.bid_arrivals += 1,
            Side::Ask => tr.ask_arrivals += 1,
        }
        let eff = book.apply_arrival(rule, o)?;
        match eff.outcome {
            Outcome::Joined => {
                let k = part.bin_of(o.price);
                match o.side {
                    Side::Bid => {
                        bid_bins[k] += 1;
                        b_total += 1;
                    }
                    Side::Ask => {
                        ask_bins[k] += 1;
                        a_total += 1;
                    }
                }
                if in_mid(o.side, k) {
                    mid += 1;
                }
            }
            Outcome::Executed => {
                let c = eff.counterparty.expect("executed arrival has a counterparty");
                if !eff.from_reservoir {
                    let k = part.bin_of(c);
                    let cside = o.side.opposite();
                    match cside {
                        Side::Bid => {
                            bid_bins[k] -= 1;
                            b_total -= 1;
                        }
                        Side::Ask => {
                            ask_bins[k] -= 1;
                            a_total -= 1;
                        }
                    }
                    if in_mid(cside, k) {
                        mid -= 1;
                    }
                }
                let resting = u64::from(!eff.from_reservoir);
                match o.side {
                    Side::Bid => {
                        tr.bid_executions += 1;
                        tr.ask_executions += resting;
                    }
                    Side::Ask => {
                        tr.ask_executions += 1;
                        tr.bid_executions += resting;
                    }
                }
            }
        }
        beta = eff.new_beta;
        alpha = eff.new_alpha;
        if opts.mid_bins.is_some() && mid > run_max {
            run_max = mid;
            tr.running_max_mid.push((i + 1, mid));
        }
        if (i + 1) % every == 0 {
            let kb = bin_or_empty(beta);
            tr.checkpoints.push(Checkpoint {
                index: i + 1,
                t: ev.time,
                b_inf: b_total,
                a_inf: a_total,
                beta,
                alpha,
                top_bin_bids: if kb < nb { bid_bins[kb] } else { 0 },
            });
        }
    }
    tr.final_t = t_prev;
    Ok((tr, book))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa_b_hat: f64,
    pub kappa_a_hat: f64,
    pub fb_kappa_hat: f64,
    /// Estimate of `1 − F_a(κ_a)`.
    pub fa_tail_hat: f64,
    /// Spread of the five smallest tail ratios, the larger of the two sides.
    pub stderr_proxy: f64,
}

/// Minimum of `B_∞(T)/(bid rate · T)` over the second half of the checkpoints,
/// and likewise for asks.
pub fn estimate_kappa(trace: &Trace, spec: &ArrivalSpec) -> Result<KappaEstimate, SimError> {
    const NEED: usize = 10;
    let cps: Vec<&Checkpoint> = trace.checkpoints.iter().filter(|c| c.t > 0.0).collect();
    if cps.len() < NEED {
        return Err(SimError::TooFewCheckpoints { need: NEED, got: cps.len() });
    }
    let tail = &cps[cps.len() / 2..];
    let bid_rate = 2.0 * spec.p_bid;
    let ask_rate = 2.0 * (1.0 - spec.p_bid);
    let mut rb: Vec<f64> = tail.iter().map(|c| c.b_inf as f64 / (bid_rate * c.t)).collect();
    let mut ra: Vec<f64> = tail.iter().map(|c| c.a_inf as f64 / (ask_rate * c.t)).collect();
    rb.sort_by(f64::total_cmp);
    ra.sort_by(f64::total_cmp);
    let spread = |v: &[f64]| v[v.len().min(5) - 1] - v[0];
    let fb = rb[0].clamp(0.0, 1.0);
    let fa = ra[0].clamp(0.0, 1.0);
    Ok(KappaEstimate {
        kappa_b_hat: spec.bid.quantile(fb)?,
        kappa_a_hat: spec.ask.quantile(1.0 - fa)?,
        fb_kappa_hat: fb,
        fa_tail_hat: fa,
        stderr_proxy: spread(&rb).max(spread(&ra)),
    })
}

/// Occupation of the best-bid and best-ask bins divided by elapsed time.
pub fn empirical_pi(trace: &Trace) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    if !(trace.elapsed > 0.0) {
        return Err(SimError::ZeroElapsed);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x / trace.elapsed).collect();
    Ok((norm(&trace.occupation_b), norm(&trace.occupation_a)))
}

/// Runs `f` once per seed in parallel, preserving seed order.
pub fn par_replicas<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    seeds.par_iter().map(|&s| f(s)).collect()
}

/// Median of a slice; `NaN` if empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<_> = ArrivalStream::new(11, 5, ArrivalSpec::uniform()).iter().collect();
        let b: Vec<_> = ArrivalStream::new(11, 5, ArrivalSpec::uniform()).iter().collect();
        assert_eq!(a, b);
        assert_eq!(a[4].time, 2.5);
        let p: Vec<_> = ArrivalStream::new(11, 5, ArrivalSpec::uniform()).with_time_mode(TimeMode::Poisson).iter().collect();
        assert!(p.windows(2).all(|w| w[0].time < w[1].time));
        assert_eq!(p.iter().map(|o| o.order).collect::<Vec<_>>(), a.iter().map(|o| o.order).collect::<Vec<_>>());
    }

    #[test]
    fn empty_run() {
        let s = ArrivalStream::new(1, 0, ArrivalSpec::uniform());
        let tr = run(&MatchRule::Ordinary, BookState::new(), &s, 10).unwrap();
        assert!(tr.checkpoints.is_empty());
        assert_eq!(tr.bid_arrivals + tr.ask_arrivals, 0);
        assert!(matches!(estimate_kappa(&tr, &s.spec), Err(SimError::TooFewCheckpoints { .. })));
        assert_eq!(empirical_pi(&tr), Err(SimError::ZeroElapsed));
    }

    #[test]
    fn conservation_along_a_run() {
        let s = ArrivalStream::new(5, 20_000, ArrivalSpec::uniform());
        let opts = RunOptions { record_every: 100, mid_bins: Some((21, 79)), ..RunOptions::default() };
        let (tr, book) = run_orders(&MatchRule::Ordinary, BookState::new(), s.iter(), s.n_events, &opts).unwrap();
        assert_eq!(tr.bid_arrivals - tr.bid_executions, book.n_bids() as u64);
        assert_eq!(tr.ask_arrivals - tr.ask_executions, book.n_asks() as u64);
        let last = tr.checkpoints.last().unwrap();
        assert_eq!(last.b_inf, book.n_bids() as u64);
        assert!(tr.checkpoints.iter().all(|c| c.beta < c.alpha));
        assert!(tr.running_max_mid.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        let (pb, pa) = empirical_pi(&tr).unwrap();
        assert!(pb.iter().sum::<f64>() <= 1.0 + 1e-12);
        assert!(pa.iter().sum::<f64>() <= 1.0 + 1e-12);
        assert!((tr.joint_mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
