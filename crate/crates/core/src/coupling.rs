//! Pairs of books driven by shared arrivals, checked pathwise.
//!
//! A violation here is a counterexample, not noise: every comparison is an
//! almost-sure statement about the coupled paths.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::book::{ArrivalEffect, BookError, BookState, MatchRule, Order, Outcome, Side};
use crate::dist::{make_partition, ArrivalSpec, BinPartition, DistError, PriceDist};
use crate::rng::{CounterRng, Field};
use crate::sim::{self, draw_order, estimate_kappa, ArrivalStream, KappaEstimate, RunOptions, SimError, TimedOrder};

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error(transparent)]
    Book(#[from] BookError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("fine partition does not refine the coarse one")]
    NotRefinement,
    #[error("sandwich needs N >= 4, got {0}")]
    TooFewBins(usize),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Signed multiset difference `left − right`, keyed by side and exact price.
#[derive(Clone, Debug, Default)]
pub struct DiffTracker {
    map: HashMap<(Side, u64), i64>,
}

impl DiffTracker {
    pub fn bump(&mut self, side: Side, price: f64, delta: i64) {
        let e = self.map.entry((side, price.to_bits())).or_insert(0);
        *e += delta;
        if *e == 0 {
            self.map.remove(&(side, price.to_bits()));
        }
    }

    /// Folds one book's reaction to an arrival into the difference; `sign` is
    /// +1 for the left book and −1 for the right.
    pub fn record(&mut self, order: &Order, eff: &ArrivalEffect, sign: i64) {
        match eff.outcome {
            Outcome::Joined => self.bump(order.side, order.price, sign),
            Outcome::Executed if !eff.from_reservoir => {
                self.bump(order.side.opposite(), eff.counterparty.expect("counterparty"), -sign)
            }
            Outcome::Executed => {}
        }
    }

    /// Size of the symmetric difference.
    pub fn size(&self) -> u64 {
        self.map.values().map(|v| v.unsigned_abs()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `(side, price, left count − right count)`, sorted by side then price.
    pub fn entries(&self) -> Vec<(Side, f64, i64)> {
        let mut v: Vec<_> = self.map.iter().map(|(&(s, b), &c)| (s, f64::from_bits(b), c)).collect();
        v.sort_by(|a, b| (a.0 as u8).cmp(&(b.0 as u8)).then(a.1.total_cmp(&b.1)));
        v
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self.entries().iter().map(|(s, p, c)| format!("{c:+} {} @ {p}", s.as_str())).collect();
        if parts.is_empty() {
            "identical".into()
        } else {
            parts.join(", ")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub index: u64,
    pub expected: String,
    pub observed: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub seed: u64,
    pub arrivals: u64,
    pub violations: u64,
    pub first_violation: Option<Violation>,
    /// Largest symmetric difference seen, where that is meaningful.
    pub max_diff: u64,
    /// Times the kind of difference changed (extra-order check only).
    pub kind_changes: u64,
}

impl CheckReport {
    fn new(check: &str, seed: u64) -> Self {
        Self { check: check.into(), seed, arrivals: 0, violations: 0, first_violation: None, max_diff: 0, kind_changes: 0 }
    }

    fn flag(&mut self, index: u64, expected: impl Into<String>, observed: impl Into<String>) {
        self.violations += 1;
        if self.first_violation.is_none() {
            self.first_violation = Some(Violation { index, expected: expected.into(), observed: observed.into() });
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Writes `check,seed,arrivals,violations,first_violation_index` rows.
pub fn write_reports<W: Write>(w: W, reports: &[CheckReport]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["check", "seed", "arrivals", "violations", "first_violation_index"])?;
    for r in reports {
        let first = r.first_violation.as_ref().map(|v| v.index.to_string()).unwrap_or_default();
        wtr.write_record([r.check.clone(), r.seed.to_string(), r.arrivals.to_string(), r.violations.to_string(), first])?;
    }
    wtr.flush()?;
    Ok(())
}

fn step_pair(
    left: &mut BookState,
    right: &mut BookState,
    lrule: &MatchRule,
    rrule: &MatchRule,
    o: Order,
    diff: &mut DiffTracker,
) -> Result<(ArrivalEffect, ArrivalEffect), BookError> {
    let el = left.apply_arrival(lrule, o)?;
    let er = right.apply_arrival(rrule, o)?;
    diff.record(&o, &el, 1);
    diff.record(&o, &er, -1);
    Ok((el, er))
}

/// Runs `base` and `base + extra` side by side. After every arrival the two
/// books must differ by exactly one order: the perturbed book holds one extra
/// order of the same side as `extra`, or lacks one order of the other side.
pub fn check_extra_order(base: &BookState, extra: Order, stream: &ArrivalStream, rule: &MatchRule) -> Result<CheckReport, CouplingError> {
    let mut left = base.clone();
    left.insert(extra.side, extra.price)?;
    if !left.is_consistent(rule) {
        return Err(CouplingError::Precondition(format!("extra {:?} at {} crosses the book", extra.side, extra.price)));
    }
    let mut right = base.clone();
    let mut diff = DiffTracker::default();
    diff.bump(extra.side, extra.price, 1);
    let mut rep = CheckReport::new(&format!("extra_{}", extra.side.as_str()), stream.seed);
    rep.max_diff = 1;
    let kind = |d: &DiffTracker| -> Option<(bool, f64)> {
        match d.entries().as_slice() {
            [(s, p, 1)] if *s == extra.side => Some((true, *p)),
            [(s, p, -1)] if *s == extra.side.opposite() => Some((false, *p)),
            _ => None,
        }
    };
    let mut left_original = false;
    let mut last_kind = true;
    for ev in stream.iter() {
        step_pair(&mut left, &mut right, rule, rule, ev.order, &mut diff)?;
        rep.arrivals += 1;
        rep.max_diff = rep.max_diff.max(diff.size());
        match kind(&diff) {
            Some((is_extra, p)) => {
                if is_extra != last_kind {
                    rep.kind_changes += 1;
                    last_kind = is_extra;
                }
                let at_original = is_extra && p == extra.price;
                if !at_original {
                    left_original = true;
                } else if left_original {
                    rep.flag(ev.order.seq, "difference never returns to the original extra order", diff.describe());
                }
            }
            None => rep.flag(ev.order.seq, "one extra same-side order or one missing opposite order", diff.describe()),
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum EditKind {
    Add(f64),
    Remove(f64),
    RemoveBest,
}

/// A change made to the perturbed book just before arrival `at`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Edit {
    pub at: u64,
    pub side: Side,
    pub kind: EditKind,
}

/// Applies `edits` to a copy of `base` and checks the copy never differs from
/// the unedited book by more than `m` orders.
pub fn check_bounded_perturbation(
    base: &BookState,
    edits: &[Edit],
    stream: &ArrivalStream,
    rule: &MatchRule,
    m: u64,
) -> Result<CheckReport, CouplingError> {
    if edits.len() as u64 > m {
        return Err(CouplingError::Precondition(format!("{} edits exceed M = {m}", edits.len())));
    }
    let mut edits = edits.to_vec();
    edits.sort_by_key(|e| e.at);
    let mut left = base.clone();
    let mut right = base.clone();
    let mut diff = DiffTracker::default();
    let mut rep = CheckReport::new(&format!("bounded_m{m}"), stream.seed);
    let mut next = 0;
    let mut apply = |at: u64, left: &mut BookState, diff: &mut DiffTracker| -> Result<(), CouplingError> {
        while next < edits.len() && edits[next].at <= at {
            let e = edits[next];
            next += 1;
            match e.kind {
                EditKind::Add(p) => {
                    left.insert(e.side, p)?;
                    if !left.is_consistent(rule) {
                        return Err(CouplingError::Precondition(format!("added {:?} at {p} crosses the book", e.side)));
                    }
                    diff.bump(e.side, p, 1);
                }
                EditKind::Remove(p) => {
                    if left.remove(e.side, p) {
                        diff.bump(e.side, p, -1);
                    }
                }
                EditKind::RemoveBest => {
                    let best = match e.side {
                        Side::Bid => left.bids().next_back(),
                        Side::Ask => left.asks().next(),
                    };
                    if let Some(p) = best {
                        left.remove(e.side, p);
                        diff.bump(e.side, p, -1);
                    }
                }
            }
        }
        Ok(())
    };
    for ev in stream.iter() {
        apply(ev.order.seq, &mut left, &mut diff)?;
        step_pair(&mut left, &mut right, rule, rule, ev.order, &mut diff)?;
        rep.arrivals += 1;
        let d = diff.size();
        rep.max_diff = rep.max_diff.max(d);
        if d > m {
            rep.flag(ev.order.seq, format!("at most {m} differing orders"), diff.describe());
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementKind {
    Ordinary,
    Strict,
}

/// Compares binned books on a fine and a coarse partition. Ordinary books:
/// the coarse book holds no more bids at or below, and no more asks at or
/// above, any fine boundary. Strict books: the reverse.
pub fn check_refinement(
    fine: &BinPartition,
    coarse: &BinPartition,
    kind: RefinementKind,
    initial: &BookState,
    stream: &ArrivalStream,
) -> Result<CheckReport, CouplingError> {
    if !fine.refines(coarse) {
        return Err(CouplingError::NotRefinement);
    }
    let (rf, rc) = match kind {
        RefinementKind::Ordinary => (MatchRule::OrdinaryBinned(fine.clone()), MatchRule::OrdinaryBinned(coarse.clone())),
        RefinementKind::Strict => (MatchRule::StrictBinned(fine.clone()), MatchRule::StrictBinned(coarse.clone())),
    };
    let nb = fine.len();
    // per fine bin: [bids fine, bids coarse, asks fine, asks coarse]
    let mut counts = vec![[0i64; 4]; nb];
    for p in initial.bids() {
        counts[fine.bin_of(p)][0] += 1;
        counts[fine.bin_of(p)][1] += 1;
    }
    for p in initial.asks() {
        counts[fine.bin_of(p)][2] += 1;
        counts[fine.bin_of(p)][3] += 1;
    }
    let mut bf = initial.clone();
    let mut bc = initial.clone();
    let name = match kind {
        RefinementKind::Ordinary => "refinement_ordinary",
        RefinementKind::Strict => "refinement_strict",
    };
    let mut rep = CheckReport::new(name, stream.seed);
    let upd = |counts: &mut Vec<[i64; 4]>, o: &Order, e: &ArrivalEffect, col: usize| match e.outcome {
        Outcome::Joined => {
            let c = if o.side == Side::Bid { col } else { col + 2 };
            counts[fine.bin_of(o.price)][c] += 1;
        }
        Outcome::Executed if !e.from_reservoir => {
            let c = if o.side == Side::Ask { col } else { col + 2 };
            counts[fine.bin_of(e.counterparty.unwrap())][c] -= 1;
        }
        Outcome::Executed => {}
    };
    for ev in stream.iter() {
        let o = ev.order;
        let ef = bf.apply_arrival(&rf, o)?;
        let ec = bc.apply_arrival(&rc, o)?;
        upd(&mut counts, &o, &ef, 0);
        upd(&mut counts, &o, &ec, 1);
        rep.arrivals += 1;
        // bids at or below each boundary, scanning up; asks at or above, scanning down
        let ok = |coarse: i64, fine: i64| match kind {
            RefinementKind::Ordinary => coarse <= fine,
            RefinementKind::Strict => coarse >= fine,
        };
        let (mut b_f, mut b_c) = (0, 0);
        let mut bad: Option<String> = None;
        for k in 0..nb {
            b_f += counts[k][0];
            b_c += counts[k][1];
            if !ok(b_c, b_f) {
                bad = Some(format!("B at upper edge of fine bin {k}: coarse {b_c}, fine {b_f}"));
                break;
            }
        }
        if bad.is_none() {
            let (mut a_f, mut a_c) = (0, 0);
            for k in (0..nb).rev() {
                a_f += counts[k][2];
                a_c += counts[k][3];
                if !ok(a_c, a_f) {
                    bad = Some(format!("A at lower edge of fine bin {k}: coarse {a_c}, fine {a_f}"));
                    break;
                }
            }
        }
        if let Some(msg) = bad {
            let want = match kind {
                RefinementKind::Ordinary => "coarse counts <= fine counts",
                RefinementKind::Strict => "coarse counts >= fine counts",
            };
            rep.flag(o.seq, want, msg);
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SandwichEstimate {
    pub n: usize,
    pub strict: KappaEstimate,
    pub ordinary: KappaEstimate,
    pub coarse: KappaEstimate,
}

/// Strict and ordinary books on an `N`-bin partition and an ordinary book on an
/// `N/2`-bin partition, all fed the same arrivals.
///
/// The fine books use the common refinement of the two partitions, so the
/// coarse book is refined by both.
pub fn estimate_sandwich(n: usize, spec: &ArrivalSpec, n_events: u64, seed: u64) -> Result<SandwichEstimate, CouplingError> {
    if n < 4 {
        return Err(CouplingError::TooFewBins(n));
    }
    let coarse = make_partition(n / 2, spec)?;
    let fine = make_partition(n, spec)?.common_refinement(&coarse);
    let stream = ArrivalStream::new(seed, n_events, spec.clone());
    let opts = RunOptions { record_every: (n_events / 100).max(1), ..RunOptions::default() };
    let est = |rule: MatchRule| -> Result<KappaEstimate, CouplingError> {
        let tr = sim::run_with(&rule, BookState::new(), &stream, &opts)?;
        Ok(estimate_kappa(&tr, spec)?)
    };
    Ok(SandwichEstimate {
        n,
        strict: est(MatchRule::StrictBinned(fine.clone()))?,
        ordinary: est(MatchRule::OrdinaryBinned(fine))?,
        coarse: est(MatchRule::OrdinaryBinned(coarse))?,
    })
}

/// Density of the joint (side, price) law of one arrival.
fn joint_density(spec: &ArrivalSpec, o: &Order) -> f64 {
    match o.side {
        Side::Bid => spec.p_bid * spec.bid.density(o.price),
        Side::Ask => (1.0 - spec.p_bid) * spec.ask.density(o.price),
    }
}

/// Two arrival sequences built by the maximal coupling of their one-arrival laws.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledStreams {
    pub a: Vec<TimedOrder>,
    pub b: Vec<TimedOrder>,
    /// `uncoupled[i]` is true when arrival `i` differs between the streams.
    pub uncoupled: Vec<bool>,
    pub diff_rate: f64,
}

const MAX_REJECTIONS: u64 = 1_000_000;

/// Maximal coupling by rejection: draw `X ~ A` and keep it for both streams
/// with probability `min(1, q(X)/p(X))`; otherwise draw `Y ~ B` until
/// `q(Y) > W p(Y)` and pair `X` with `Y`.
pub fn perturb_arrivals(spec_a: &ArrivalSpec, spec_b: &ArrivalSpec, n_events: u64, seed: u64) -> Result<CoupledStreams, CouplingError> {
    let root = CounterRng::new(seed);
    let mut out = CoupledStreams {
        a: Vec::with_capacity(n_events as usize),
        b: Vec::with_capacity(n_events as usize),
        uncoupled: Vec::with_capacity(n_events as usize),
        diff_rate: 0.0,
    };
    let mut n_diff = 0u64;
    for i in 0..n_events {
        let t = (i + 1) as f64 / 2.0;
        let x = draw_order(&root.split(0), spec_a, i);
        let px = joint_density(spec_a, &x);
        let qx = joint_density(spec_b, &x);
        let y = if root.uniform_at(i, Field::Aux(0)) * px <= qx {
            x
        } else {
            let mut found = None;
            for j in 1..=MAX_REJECTIONS {
                let y = draw_order(&root.split(j), spec_b, i);
                let w = root.split(j).uniform_at(i, Field::Aux(0));
                if w * joint_density(spec_b, &y) > joint_density(spec_a, &y) {
                    found = Some(y);
                    break;
                }
            }
            found.ok_or_else(|| CouplingError::Precondition("residual sampler did not terminate".into()))?
        };
        let differs = x != y;
        n_diff += u64::from(differs);
        out.a.push(TimedOrder { order: x, time: t });
        out.b.push(TimedOrder { order: y, time: t });
        out.uncoupled.push(differs);
    }
    out.diff_rate = if n_events > 0 { n_diff as f64 / n_events as f64 } else { 0.0 };
    Ok(out)
}

/// Total variation distance between the one-arrival laws, by midpoint quadrature.
pub fn tv_distance(spec_a: &ArrivalSpec, spec_b: &ArrivalSpec) -> f64 {
    let side = |pa: f64, da: &PriceDist, pb: f64, db: &PriceDist| {
        let mut pts: Vec<f64> = da.breakpoints().into_iter().chain(db.breakpoints()).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut s = 0.0;
        for w in pts.windows(2) {
            let n = 4000;
            let h = (w[1] - w[0]) / n as f64;
            for k in 0..n {
                let x = w[0] + (k as f64 + 0.5) * h;
                s += (pa * da.density(x) - pb * db.density(x)).abs() * h;
            }
        }
        s
    };
    0.5 * (side(spec_a.p_bid, &spec_a.bid, spec_b.p_bid, &spec_b.bid)
        + side(1.0 - spec_a.p_bid, &spec_a.ask, 1.0 - spec_b.p_bid, &spec_b.ask))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub seed: u64,
    pub n_events: u64,
    pub diff_rate: f64,
    pub tv: f64,
    pub estimate_a: KappaEstimate,
    pub estimate_b: KappaEstimate,
    /// `|F̂_b^A − F̂_b^B|`.
    pub delta_fb: f64,
    /// Pathwise bound on `delta_fb` from the uncoupled arrivals seen by each tail checkpoint.
    pub pathwise_bound: f64,
}

/// Runs ordinary books on maximally coupled streams and compares their estimates.
pub fn perturbation_experiment(spec_a: &ArrivalSpec, spec_b: &ArrivalSpec, n_events: u64, seed: u64) -> Result<PerturbationReport, CouplingError> {
    if spec_a.p_bid != spec_b.p_bid {
        return Err(CouplingError::Precondition("both laws must share p_bid".into()));
    }
    let cs = perturb_arrivals(spec_a, spec_b, n_events, seed)?;
    let every = (n_events / 100).max(1);
    let opts = RunOptions { record_every: every, ..RunOptions::default() };
    let (ta, _) = sim::run_orders(&MatchRule::Ordinary, BookState::new(), cs.a.iter().copied(), n_events, &opts)?;
    let (tb, _) = sim::run_orders(&MatchRule::Ordinary, BookState::new(), cs.b.iter().copied(), n_events, &opts)?;
    let ea = estimate_kappa(&ta, spec_a)?;
    let eb = estimate_kappa(&tb, spec_b)?;
    let mut prefix = Vec::with_capacity(cs.uncoupled.len() + 1);
    prefix.push(0u64);
    for &u in &cs.uncoupled {
        prefix.push(prefix.last().unwrap() + u64::from(u));
    }
    let cps = &ta.checkpoints;
    let tail = &cps[cps.len() / 2..];
    // each uncoupled arrival moves B_∞ of the two books apart by at most 2
    let bound = tail
        .iter()
        .map(|c| 2.0 * prefix[c.index as usize] as f64 / (2.0 * spec_a.p_bid * c.t))
        .fold(0.0, f64::max);
    Ok(PerturbationReport {
        seed,
        n_events,
        diff_rate: cs.diff_rate,
        tv: tv_distance(spec_a, spec_b),
        estimate_a: ea,
        estimate_b: eb,
        delta_fb: (ea.fb_kappa_hat - eb.fb_kappa_hat).abs(),
        pathwise_bound: bound,
    })
}
