use serde::Serialize;

use super::{lyapunov_value_f64, q, Affine, DriftTable, DriftVec, LyapunovError, Region, Q};
use crate::book::{BookState, MatchRule, Order, Outcome, Side};
use crate::dist::{ArrivalSpec, BinPartition};
use crate::sim::ArrivalStream;

/// Bins of sizes `1/5+ε, 1/5−ε, 1/5, 1/5−ε, 1/5+ε` on [0, 1].
pub fn five_bin_partition(eps: f64) -> Result<BinPartition, LyapunovError> {
    if !(eps > 0.0 && eps < 0.2) {
        return Err(LyapunovError::Domain(format!("eps = {eps} outside (0, 1/5)")));
    }
    Ok(BinPartition::new(0.0, 1.0, vec![0.2 + eps, 0.4, 0.6, 0.8 - eps])?)
}

fn bin_probabilities() -> [Affine; 5] {
    let fifth = q(1, 5);
    let one = q(1, 1);
    [
        Affine::new(fifth, one),
        Affine::new(fifth, -one),
        Affine::constant(fifth),
        Affine::new(fifth, -one),
        Affine::new(fifth, one),
    ]
}

fn reservoir_book(part: &BinPartition) -> Result<BookState, LyapunovError> {
    let (l0, h0) = part.bounds(0);
    let (l4, h4) = part.bounds(4);
    Ok(BookState::with_reservoirs(Some(0.5 * (l0 + h0)), Some(0.5 * (l4 + h4)))?)
}

/// Change of `X` caused by one arrival.
fn jump(part: &BinPartition, order: &Order, outcome: Outcome, counterparty: Option<f64>, from_reservoir: bool) -> [i64; 3] {
    let mut d = [0i64; 3];
    let mut bump = |price: f64, v: i64| {
        let k = part.bin_of(price);
        if (1..=3).contains(&k) {
            d[k - 1] += v;
        }
    };
    match outcome {
        Outcome::Joined => bump(order.price, if order.side == Side::Bid { 1 } else { -1 }),
        Outcome::Executed if !from_reservoir => {
            // the resting order leaves its bin
            bump(counterparty.expect("counterparty"), if order.side == Side::Bid { 1 } else { -1 })
        }
        Outcome::Executed => {}
    }
    d
}

/// Drift of `X` in `region`, by sending each of the ten (side, bin) arrivals
/// into a representative book and weighting by its rate. Bids and asks each
/// arrive at rate 1.
pub fn enumerate_drift(region: Region) -> Result<DriftVec, LyapunovError> {
    if region == Region::Zzz {
        return Err(LyapunovError::Domain("region 000 carries no drift".into()));
    }
    let part = five_bin_partition(0.01)?;
    let mut book = reservoir_book(&part)?;
    let signs = region.signs();
    for (i, &s) in signs.iter().enumerate() {
        let (lo, hi) = part.bounds(i + 1);
        for frac in [0.25, 0.75] {
            match s {
                1 => book.insert(Side::Bid, lo + frac * (hi - lo))?,
                -1 => book.insert(Side::Ask, lo + frac * (hi - lo))?,
                _ => {}
            }
        }
    }
    let rule = MatchRule::OrdinaryBinned(part.clone());
    let probs = bin_probabilities();
    let mut drift = [Affine::zero(); 3];
    for side in [Side::Bid, Side::Ask] {
        for (k, p) in probs.iter().enumerate() {
            let (lo, hi) = part.bounds(k);
            let o = Order { side, price: lo + 0.6 * (hi - lo), seq: 0 };
            let mut b = book.clone();
            let e = b.apply_arrival(&rule, o)?;
            let d = jump(&part, &o, e.outcome, e.counterparty, e.from_reservoir);
            for i in 0..3 {
                drift[i] = drift[i] + *p * Q::from_integer(d[i]);
            }
        }
    }
    Ok(drift)
}

/// Drift table recomputed from the matching rule.
pub fn enumerated_table() -> Result<DriftTable, LyapunovError> {
    Region::ACTIVE.iter().map(|&r| Ok((r, enumerate_drift(r)?))).collect::<Result<Vec<_>, _>>().map(DriftTable::new)
}

#[derive(Clone, Debug)]
pub struct FiveBinOptions {
    /// Drift of ℒ is conditioned on ℒ(X) > k.
    pub k: f64,
    /// Return times are measured to the set ‖X‖₁ ≤ return_radius.
    pub return_radius: i64,
    /// Keep every this many states in the trace; 0 keeps none.
    pub record_every: u64,
}

impl Default for FiveBinOptions {
    fn default() -> Self {
        Self { k: 20.0, return_radius: 2, record_every: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionStats {
    pub region: Region,
    pub visits: u64,
    /// Mean jump of X per unit time (two arrivals).
    pub mean_jump: [f64; 3],
    pub jump_se: [f64; 3],
    pub cond_visits: u64,
    /// Mean change of ℒ per unit time, given ℒ(X) > k.
    pub cond_drift: f64,
    pub cond_drift_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiveBinReport {
    pub eps: f64,
    pub n_events: u64,
    pub seed: u64,
    pub k: f64,
    pub regions: Vec<RegionStats>,
    pub max_l: f64,
    /// Arrivals spent outside ‖X‖₁ ≤ radius per completed excursion.
    pub return_times: Vec<u64>,
    pub trace: Vec<(u64, [i64; 3])>,
    pub final_state: [i64; 3],
}

impl FiveBinReport {
    pub fn stats(&self, r: Region) -> Option<&RegionStats> {
        self.regions.iter().find(|s| s.region == r)
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: u64,
    s: [f64; 3],
    ss: [f64; 3],
    cn: u64,
    cs: f64,
    css: f64,
}

fn mean_se(n: u64, s: f64, ss: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let m = s / nf;
    let var = if n > 1 { ((ss - nf * m * m) / (nf - 1.0)).max(0.0) } else { 0.0 };
    (m, (var / nf).sqrt())
}

/// Runs the 5-bin ordinary binned book with bid and ask reservoirs in the outer
/// bins under uniform arrivals.
pub fn simulate_5bin(eps: f64, n_events: u64, seed: u64, opts: &FiveBinOptions) -> Result<FiveBinReport, LyapunovError> {
    let part = five_bin_partition(eps)?;
    let rule = MatchRule::OrdinaryBinned(part.clone());
    let mut book = reservoir_book(&part)?;
    let stream = ArrivalStream::new(seed, n_events, ArrivalSpec::uniform());
    let mut x = [0i64; 3];
    let mut l = 0.0;
    let mut max_l = 0.0f64;
    let mut acc = [Acc::default(); 10];
    let mut trace = Vec::new();
    let mut returns = Vec::new();
    let inside = |x: &[i64; 3]| x.iter().map(|c| c.abs()).sum::<i64>() <= opts.return_radius;
    let mut left_at: Option<u64> = None;
    for ev in stream.iter() {
        let i = ev.order.seq;
        let region = Region::of_state(x);
        let e = book.apply_arrival(&rule, ev.order)?;
        let d = jump(&part, &ev.order, e.outcome, e.counterparty, e.from_reservoir);
        let before = l;
        let was_inside = inside(&x);
        for k in 0..3 {
            x[k] += d[k];
        }
        l = lyapunov_value_f64(x);
        max_l = max_l.max(l);
        let a = &mut acc[region as usize];
        a.n += 1;
        for k in 0..3 {
            // per unit time: two arrivals
            let v = 2.0 * d[k] as f64;
            a.s[k] += v;
            a.ss[k] += v * v;
        }
        if before > opts.k {
            let v = 2.0 * (l - before);
            a.cn += 1;
            a.cs += v;
            a.css += v * v;
        }
        match (was_inside, inside(&x)) {
            (true, false) => left_at = Some(i),
            (false, true) => {
                if let Some(s) = left_at.take() {
                    returns.push(i - s);
                }
            }
            _ => {}
        }
        if opts.record_every > 0 && (i + 1) % opts.record_every == 0 {
            trace.push((i + 1, x));
        }
    }
    let regions = Region::ALL
        .iter()
        .zip(acc.iter())
        .map(|(&region, a)| {
            let mut mean_jump = [0.0; 3];
            let mut jump_se = [0.0; 3];
            for k in 0..3 {
                (mean_jump[k], jump_se[k]) = mean_se(a.n, a.s[k], a.ss[k]);
            }
            let (cond_drift, cond_drift_se) = mean_se(a.cn, a.cs, a.css);
            RegionStats { region, visits: a.n, mean_jump, jump_se, cond_visits: a.cn, cond_drift, cond_drift_se }
        })
        .collect();
    Ok(FiveBinReport { eps, n_events, seed, k: opts.k, regions, max_l, return_times: returns, trace, final_state: x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::q;

    fn a(c0: (i64, i64), c1: i64) -> Affine {
        Affine::new(q(c0.0, c0.1), q(c1, 1))
    }

    #[test]
    fn enumeration_by_hand() {
        // +++: bids join bins 2..4, every ask except bin 5 fills the best bid in bin 4
        assert_eq!(enumerate_drift(Region::Ppp).unwrap(), [a((1, 5), -1), a((1, 5), 0), a((-3, 5), 0)]);
        // +00: new bids and asks in the empty bins cancel
        assert_eq!(enumerate_drift(Region::Pzz).unwrap(), [a((-1, 5), -1), a((0, 1), 0), a((0, 1), 0)]);
        assert!(enumerate_drift(Region::Zzz).is_err());
    }

    #[test]
    fn partition_sizes() {
        let p = five_bin_partition(0.01).unwrap();
        let w: Vec<f64> = (0..5).map(|k| p.bounds(k).1 - p.bounds(k).0).collect();
        for (got, want) in w.iter().zip([0.21, 0.19, 0.2, 0.19, 0.21]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(five_bin_partition(0.0).is_err());
    }

    #[test]
    fn states_stay_ordered() {
        let r = simulate_5bin(0.01, 20_000, 3, &FiveBinOptions { record_every: 1, ..Default::default() }).unwrap();
        for (_, x) in &r.trace {
            // bids left of asks: no + after a −
            let first_ask = (0..3).find(|&i| x[i] < 0).unwrap_or(3);
            assert!((first_ask..3).all(|i| x[i] <= 0), "{x:?}");
        }
        assert_eq!(r.regions.iter().map(|s| s.visits).sum::<u64>(), 20_000);
    }

    #[test]
    fn empirical_jumps_match_enumeration() {
        let eps = 0.01;
        let r = simulate_5bin(eps, 300_000, 11, &FiveBinOptions::default()).unwrap();
        let e = Q::new(1, 100);
        for &reg in &Region::ACTIVE {
            let s = r.stats(reg).unwrap();
            if s.visits < 10_000 {
                continue;
            }
            let d = enumerate_drift(reg).unwrap();
            for k in 0..3 {
                let want = *d[k].eval(e).numer() as f64 / *d[k].eval(e).denom() as f64;
                // 27 comparisons, so 4σ rather than 3σ per coordinate
                assert!((s.mean_jump[k] - want).abs() <= 4.0 * s.jump_se[k] + 1e-9, "{reg} {k}: {} vs {want}", s.mean_jump[k]);
            }
        }
    }
}
