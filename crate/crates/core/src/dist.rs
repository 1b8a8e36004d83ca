//! Arrival price laws, the coordinate change that makes bid prices uniform,
//! and bin partitions.
//!
//! Every law is absolutely continuous with a compact support. A law exposes
//! its density, CDF and quantile; the three built-in families are uniform,
//! piecewise-linear density and CDF table (linear interpolation of the CDF,
//! i.e. piecewise-constant density). [`PriceDist::Pushforward`] is what the
//! coordinate change produces for the ask side.

use std::io::Read;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance under which two bin boundaries are considered equal.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid distribution: {0}")]
    Invalid(String),
    #[error("CDF of the bid law is not invertible: {0}")]
    NotInvertible(String),
    #[error("partition needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("arrival law must be supported on [0, 1] (got [{0}, {1}]); apply the coordinate transform first")]
    SupportNotUnit(f64, f64),
    #[error("bid probability {0} must lie strictly between 0 and 1")]
    BidProbability(f64),
    #[error("cdf table: {0}")]
    Table(String),
}

/// Piecewise-linear density through `(x[i], y[i])`, normalized to unit mass.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    x: Vec<f64>,
    y: Vec<f64>,
    cum: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(x: Vec<f64>, density: Vec<f64>) -> Result<Self, DistError> {
        if x.len() < 2 || x.len() != density.len() {
            return Err(DistError::Invalid(
                "piecewise-linear density needs >= 2 knots and matching lengths".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[0] < w[1])) || x.iter().any(|v| !v.is_finite()) {
            return Err(DistError::Invalid("knots must be finite and strictly increasing".into()));
        }
        if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(DistError::Invalid("density values must be finite and nonnegative".into()));
        }
        let mut cum = Vec::with_capacity(x.len());
        cum.push(0.0);
        for i in 1..x.len() {
            let area = 0.5 * (density[i - 1] + density[i]) * (x[i] - x[i - 1]);
            cum.push(cum[i - 1] + area);
        }
        let total = *cum.last().unwrap();
        if !(total > 0.0) {
            return Err(DistError::Invalid("density has zero mass".into()));
        }
        let y = density.iter().map(|d| d / total).collect();
        for c in cum.iter_mut() {
            *c /= total;
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self { x, y, cum })
    }

    fn segment(&self, x: f64) -> usize {
        let i = self.x.partition_point(|&k| k <= x);
        i.clamp(1, self.x.len() - 1) - 1
    }

    fn density(&self, x: f64) -> f64 {
        if x < self.x[0] || x > *self.x.last().unwrap() {
            return 0.0;
        }
        let i = self.segment(x);
        let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.y[i] + t * (self.y[i + 1] - self.y[i])
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.x[0] {
            return 0.0;
        }
        if x >= *self.x.last().unwrap() {
            return 1.0;
        }
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let t = x - self.x[i];
        let slope = (self.y[i + 1] - self.y[i]) / h;
        (self.cum[i] + self.y[i] * t + 0.5 * slope * t * t).min(1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            // leftmost point with positive mass to the right
            let i = self.cum.partition_point(|&c| c <= 0.0);
            return self.x[i.saturating_sub(1)];
        }
        if u >= 1.0 {
            let i = self.cum.partition_point(|&c| c < 1.0);
            return self.x[i.min(self.x.len() - 1)];
        }
        // first segment whose right cumulative reaches u
        let j = self.cum.partition_point(|&c| c < u).clamp(1, self.x.len() - 1);
        let i = j - 1;
        let h = self.x[j] - self.x[i];
        let slope = (self.y[j] - self.y[i]) / h;
        let r = u - self.cum[i];
        // (slope/2) t^2 + y_i t - r = 0, in the cancellation-free form
        let disc = (self.y[i] * self.y[i] + 2.0 * slope * r).max(0.0);
        let denom = self.y[i] + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        (self.x[i] + t).clamp(self.x[i], self.x[j])
    }

    fn has_flat_stretch(&self) -> bool {
        self.y.windows(2).any(|w| w[0] == 0.0 && w[1] == 0.0)
    }
}

/// CDF given at strictly increasing knots, linearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfTable {
    x: Vec<f64>,
    cdf: Vec<f64>,
}

impl CdfTable {
    pub fn new(x: Vec<f64>, cdf: Vec<f64>) -> Result<Self, DistError> {
        if x.len() < 2 || x.len() != cdf.len() {
            return Err(DistError::Table("need >= 2 rows of (price, cdf)".into()));
        }
        if x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DistError::Table("price column must be strictly increasing".into()));
        }
        if cdf.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DistError::Table("cdf column must be strictly increasing".into()));
        }
        if cdf[0].abs() > 1e-12 || (cdf[cdf.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(DistError::Table("cdf column must start at 0 and end at 1".into()));
        }
        let mut cdf = cdf;
        cdf[0] = 0.0;
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { x, cdf })
    }

    /// Reads a two-column `price,cdf` CSV. `#` lines and a non-numeric header are skipped.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, DistError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let (mut xs, mut cs) = (Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| DistError::Table(e.to_string()))?;
            if rec.len() != 2 {
                return Err(DistError::Table(format!("row {}: expected 2 columns", row + 1)));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(c)) => {
                    xs.push(x);
                    cs.push(c);
                }
                _ if row == 0 => continue,
                _ => return Err(DistError::Table(format!("row {}: not numeric", row + 1))),
            }
        }
        Self::new(xs, cs)
    }

    fn segment(&self, x: f64) -> usize {
        let i = self.x.partition_point(|&k| k <= x);
        i.clamp(1, self.x.len() - 1) - 1
    }

    fn density(&self, x: f64) -> f64 {
        if x < self.x[0] || x > *self.x.last().unwrap() {
            return 0.0;
        }
        let i = self.segment(x);
        (self.cdf[i + 1] - self.cdf[i]) / (self.x[i + 1] - self.x[i])
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.x[0] {
            return 0.0;
        }
        if x >= *self.x.last().unwrap() {
            return 1.0;
        }
        let i = self.segment(x);
        let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }

    fn quantile(&self, u: f64) -> f64 {
        let j = self.cdf.partition_point(|&c| c < u).clamp(1, self.x.len() - 1);
        let i = j - 1;
        let t = (u - self.cdf[i]) / (self.cdf[j] - self.cdf[i]);
        (self.x[i] + t * (self.x[j] - self.x[i])).clamp(self.x[i], self.x[j])
    }
}

/// Law of `map.cdf(X)` for `X ~ inner`. Supported on [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Pushforward {
    pub inner: PriceDist,
    pub map: PriceDist,
}

/// An absolutely continuous price law on a compact interval.
#[derive(Clone, Debug, PartialEq)]
pub enum PriceDist {
    Uniform { lo: f64, hi: f64 },
    PiecewiseLinear(PiecewiseLinear),
    CdfTable(CdfTable),
    Pushforward(Box<Pushforward>),
}

impl PriceDist {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DistError::Invalid(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(PriceDist::Uniform { lo, hi })
    }

    pub fn unit_uniform() -> Self {
        PriceDist::Uniform { lo: 0.0, hi: 1.0 }
    }

    pub fn piecewise_linear(x: Vec<f64>, density: Vec<f64>) -> Result<Self, DistError> {
        PiecewiseLinear::new(x, density).map(PriceDist::PiecewiseLinear)
    }

    pub fn cdf_table(x: Vec<f64>, cdf: Vec<f64>) -> Result<Self, DistError> {
        CdfTable::new(x, cdf).map(PriceDist::CdfTable)
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            PriceDist::Uniform { lo, hi } => (*lo, *hi),
            PriceDist::PiecewiseLinear(p) => (p.x[0], *p.x.last().unwrap()),
            PriceDist::CdfTable(t) => (t.x[0], *t.x.last().unwrap()),
            PriceDist::Pushforward(_) => (0.0, 1.0),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            PriceDist::Uniform { lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            PriceDist::PiecewiseLinear(p) => p.density(x),
            PriceDist::CdfTable(t) => t.density(x),
            PriceDist::Pushforward(pf) => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let q = pf.map.quantile_unchecked(x);
                let num = pf.inner.density(q);
                if num == 0.0 {
                    0.0
                } else {
                    num / pf.map.density(q)
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            PriceDist::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            PriceDist::PiecewiseLinear(p) => p.cdf(x),
            PriceDist::CdfTable(t) => t.cdf(x),
            PriceDist::Pushforward(pf) => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    pf.inner.cdf(pf.map.quantile_unchecked(x))
                }
            }
        }
    }

    /// Quantile function; `u` must lie in [0, 1].
    pub fn quantile(&self, u: f64) -> Result<f64, DistError> {
        if !(0.0..=1.0).contains(&u) {
            return Err(DistError::Domain(u));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match self {
            PriceDist::Uniform { lo, hi } => lo + u * (hi - lo),
            PriceDist::PiecewiseLinear(p) => p.quantile(u),
            PriceDist::CdfTable(t) => t.quantile(u),
            PriceDist::Pushforward(pf) => pf.map.cdf(pf.inner.quantile_unchecked(u)),
        }
    }

    /// Points where the density may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PriceDist::Uniform { lo, hi } => vec![*lo, *hi],
            PriceDist::PiecewiseLinear(p) => p.x.clone(),
            PriceDist::CdfTable(t) => t.x.clone(),
            PriceDist::Pushforward(pf) => {
                let mut pts: Vec<f64> = pf.inner.breakpoints().into_iter().map(|b| pf.map.cdf(b)).collect();
                pts.extend(pf.map.breakpoints().into_iter().map(|b| pf.map.cdf(b)));
                pts.push(0.0);
                pts.push(1.0);
                sort_dedup(&mut pts, BOUNDARY_TOL);
                pts
            }
        }
    }

    /// True when the CDF is strictly increasing on the support.
    pub fn is_invertible(&self) -> bool {
        match self {
            PriceDist::Uniform { .. } | PriceDist::CdfTable(_) => true,
            PriceDist::PiecewiseLinear(p) => !p.has_flat_stretch(),
            PriceDist::Pushforward(pf) => pf.inner.is_invertible(),
        }
    }

    pub fn is_unit_uniform(&self) -> bool {
        matches!(self, PriceDist::Uniform { lo, hi } if *lo == 0.0 && *hi == 1.0)
    }

    /// Probability mass of `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }
}

/// Who arrives and at what price.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalSpec {
    pub p_bid: f64,
    pub bid: PriceDist,
    pub ask: PriceDist,
}

impl ArrivalSpec {
    pub fn new(p_bid: f64, bid: PriceDist, ask: PriceDist) -> Result<Self, DistError> {
        if !(p_bid > 0.0 && p_bid < 1.0) {
            return Err(DistError::BidProbability(p_bid));
        }
        Ok(Self { p_bid, bid, ask })
    }

    /// Bids and asks equally likely, both uniform on [0, 1].
    pub fn uniform() -> Self {
        Self { p_bid: 0.5, bid: PriceDist::unit_uniform(), ask: PriceDist::unit_uniform() }
    }

    pub fn is_uniform(&self) -> bool {
        self.p_bid == 0.5 && self.bid.is_unit_uniform() && self.ask.is_unit_uniform()
    }
}

/// Changes coordinates by `x -> F_b(x)` so the bid law becomes uniform on [0, 1].
///
/// Matching in the ordinary book depends only on the order of prices, so
/// this is a relabeling of the model rather than a change of it.
pub fn transform_to_uniform_bid(spec: &ArrivalSpec) -> Result<ArrivalSpec, DistError> {
    if spec.bid.is_unit_uniform() {
        return Ok(spec.clone());
    }
    if !spec.bid.is_invertible() {
        return Err(DistError::NotInvertible(
            "bid density vanishes on an interval of positive length".into(),
        ));
    }
    let ask = PriceDist::Pushforward(Box::new(Pushforward { inner: spec.ask.clone(), map: spec.bid.clone() }));
    Ok(ArrivalSpec { p_bid: spec.p_bid, bid: PriceDist::unit_uniform(), ask })
}

fn sort_dedup(v: &mut Vec<f64>, tol: f64) {
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() <= tol);
}

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("support must satisfy lo < hi")]
    EmptySupport,
    #[error("cut {0} is outside the open support or out of order")]
    BadCut(f64),
}

/// Ordered bins `[e_0, e_1), [e_1, e_2), ..., [e_{N-1}, e_N]` covering `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinPartition {
    lo: f64,
    hi: f64,
    cuts: Vec<f64>,
}

impl BinPartition {
    pub fn new(lo: f64, hi: f64, cuts: Vec<f64>) -> Result<Self, PartitionError> {
        if !(lo < hi) {
            return Err(PartitionError::EmptySupport);
        }
        let mut prev = lo;
        for &c in &cuts {
            if !(c > prev && c < hi) {
                return Err(PartitionError::BadCut(c));
            }
            prev = c;
        }
        Ok(Self { lo, hi, cuts })
    }

    /// `n` equal bins on [0, 1].
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1);
        let cuts = (1..n).map(|i| i as f64 / n as f64).collect();
        Self { lo: 0.0, hi: 1.0, cuts }
    }

    pub fn len(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Interior boundaries.
    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    /// All edges including the support endpoints.
    pub fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.cuts.len() + 2);
        e.push(self.lo);
        e.extend_from_slice(&self.cuts);
        e.push(self.hi);
        e
    }

    /// Index of the bin containing `x`. Points outside the support map to the end bins.
    #[inline]
    pub fn bin_of(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c <= x)
    }

    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { self.lo } else { self.cuts[k - 1] };
        let hi = if k == self.cuts.len() { self.hi } else { self.cuts[k] };
        (lo, hi)
    }

    pub fn masses(&self, dist: &PriceDist) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let (a, b) = self.bounds(k);
                dist.mass(a, b)
            })
            .collect()
    }

    /// True iff every cut of `coarse` is a cut of `self`.
    pub fn refines(&self, coarse: &BinPartition) -> bool {
        if (self.lo - coarse.lo).abs() > BOUNDARY_TOL || (self.hi - coarse.hi).abs() > BOUNDARY_TOL {
            return false;
        }
        coarse.cuts.iter().all(|&c| {
            let i = self.cuts.partition_point(|&f| f < c - BOUNDARY_TOL);
            i < self.cuts.len() && (self.cuts[i] - c).abs() <= BOUNDARY_TOL
        })
    }

    /// Smallest partition refining both.
    pub fn common_refinement(&self, other: &BinPartition) -> BinPartition {
        let mut cuts: Vec<f64> = self.cuts.iter().chain(other.cuts.iter()).copied().collect();
        sort_dedup(&mut cuts, BOUNDARY_TOL);
        BinPartition { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi), cuts }
    }
}

/// Free function form of [`BinPartition::refines`].
pub fn refines(fine: &BinPartition, coarse: &BinPartition) -> bool {
    fine.refines(coarse)
}

/// Partition of [0, 1] in which no bin is wider than `1/n` or carries more
/// than `1/n` of the bid or of the ask mass.
pub fn make_partition(n: usize, spec: &ArrivalSpec) -> Result<BinPartition, DistError> {
    if n < 2 {
        return Err(DistError::TooFewBins(n));
    }
    for d in [&spec.bid, &spec.ask] {
        let (lo, hi) = d.support();
        if lo < -BOUNDARY_TOL || hi > 1.0 + BOUNDARY_TOL {
            return Err(DistError::SupportNotUnit(lo, hi));
        }
    }
    let mut cuts = Vec::with_capacity(3 * n);
    for i in 1..n {
        let u = i as f64 / n as f64;
        cuts.push(u);
        cuts.push(spec.bid.quantile_unchecked(u));
        cuts.push(spec.ask.quantile_unchecked(u));
    }
    sort_dedup(&mut cuts, BOUNDARY_TOL);
    cuts.retain(|&c| c > BOUNDARY_TOL && c < 1.0 - BOUNDARY_TOL);
    Ok(BinPartition { lo: 0.0, hi: 1.0, cuts })
}

/// Serializable description of a price law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistConfig {
    Uniform {
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    PiecewiseLinear { x: Vec<f64>, density: Vec<f64> },
    CdfTable {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        x: Vec<f64>,
        #[serde(default)]
        cdf: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for DistConfig {
    fn default() -> Self {
        DistConfig::Uniform { lo: 0.0, hi: 1.0 }
    }
}

impl DistConfig {
    pub fn build(&self) -> Result<PriceDist, DistError> {
        match self {
            DistConfig::Uniform { lo, hi } => PriceDist::uniform(*lo, *hi),
            DistConfig::PiecewiseLinear { x, density } => PriceDist::piecewise_linear(x.clone(), density.clone()),
            DistConfig::CdfTable { path: Some(p), x, cdf } => {
                if !x.is_empty() || !cdf.is_empty() {
                    return Err(DistError::Table("give either a path or inline x/cdf, not both".into()));
                }
                let f = std::fs::File::open(p).map_err(|e| DistError::Table(format!("{}: {e}", p.display())))?;
                CdfTable::from_csv(f).map(PriceDist::CdfTable)
            }
            DistConfig::CdfTable { path: None, x, cdf } => PriceDist::cdf_table(x.clone(), cdf.clone()),
        }
    }
}

/// Serializable arrival specification.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalConfig {
    #[serde(default = "half")]
    pub p_bid: f64,
    #[serde(default)]
    pub bid: DistConfig,
    #[serde(default)]
    pub ask: DistConfig,
}

fn half() -> f64 {
    0.5
}

impl ArrivalConfig {
    pub fn build(&self) -> Result<ArrivalSpec, DistError> {
        ArrivalSpec::new(self.p_bid, self.bid.build()?, self.ask.build()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    fn triangular() -> PriceDist {
        PriceDist::piecewise_linear(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap()
    }

    #[test]
    fn uniform_quantile_examples() {
        let u = PriceDist::unit_uniform();
        assert_eq!(u.quantile(0.3).unwrap(), 0.3);
        assert_eq!(u.quantile(0.0).unwrap(), 0.0);
        assert_eq!(u.quantile(1.2), Err(DistError::Domain(1.2)));
        assert_eq!(u.quantile(-0.1), Err(DistError::Domain(-0.1)));
    }

    #[test]
    fn triangular_quantile_matches_quadrature() {
        let t = triangular();
        let q = t.quantile(0.25).unwrap();
        assert!((q - 0.5).abs() < 1e-14);
        let mass = simpson(|x| t.density(x), 0.0, q, 1000);
        assert!((mass - 0.25).abs() < 1e-12);
    }

    #[test]
    fn densities_integrate_to_one() {
        let dists = [
            PriceDist::unit_uniform(),
            triangular(),
            PriceDist::piecewise_linear(vec![0.0, 0.3, 1.0], vec![1.0, 3.0, 0.5]).unwrap(),
            PriceDist::cdf_table(vec![0.0, 0.2, 0.7, 1.0], vec![0.0, 0.1, 0.8, 1.0]).unwrap(),
        ];
        for d in &dists {
            let mut pts = d.breakpoints();
            pts.sort_by(f64::total_cmp);
            let total: f64 = pts.windows(2).map(|w| midpoint(|x| d.density(x), w[0], w[1], 200)).sum();
            assert!((total - 1.0).abs() < 1e-8, "{d:?}: {total}");
        }
    }

    #[test]
    fn transform_uniform_is_identity() {
        let s = ArrivalSpec::uniform();
        assert_eq!(transform_to_uniform_bid(&s).unwrap(), s);
    }

    #[test]
    fn transform_square_cdf_gives_sqrt() {
        let s = ArrivalSpec::new(0.5, triangular(), PriceDist::unit_uniform()).unwrap();
        let t = transform_to_uniform_bid(&s).unwrap();
        assert!(t.bid.is_unit_uniform());
        assert_eq!(t.p_bid, 0.5);
        for i in 0..=10 {
            let u = i as f64 / 10.0;
            assert!((t.ask.cdf(u) - u.sqrt()).abs() < 1e-12, "u={u}");
        }
        for i in 0..100 {
            let u = (i as f64 + 0.5) / 100.0;
            assert!((t.bid.cdf(u) - u).abs() < 1e-10);
        }
    }

    #[test]
    fn transform_rejects_flat_cdf() {
        let bid = PriceDist::piecewise_linear(vec![0.0, 0.3, 0.6, 1.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = ArrivalSpec::new(0.5, bid, PriceDist::unit_uniform()).unwrap();
        assert!(matches!(transform_to_uniform_bid(&s), Err(DistError::NotInvertible(_))));
    }

    #[test]
    fn partition_examples() {
        let p = make_partition(4, &ArrivalSpec::uniform()).unwrap();
        assert_eq!(p.cuts(), &[0.25, 0.5, 0.75]);
        assert_eq!(p.len(), 4);

        let s = ArrivalSpec::new(0.5, triangular(), PriceDist::unit_uniform()).unwrap();
        let t = transform_to_uniform_bid(&s).unwrap();
        let p = make_partition(2, &t).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.cuts()[0] - 0.25).abs() < 1e-12);
        assert!((p.cuts()[1] - 0.5).abs() < 1e-12);

        assert_eq!(make_partition(1, &ArrivalSpec::uniform()), Err(DistError::TooFewBins(1)));
    }

    #[test]
    fn partition_requires_unit_support() {
        let s = ArrivalSpec::new(0.5, PriceDist::uniform(0.0, 2.0).unwrap(), PriceDist::unit_uniform()).unwrap();
        assert!(matches!(make_partition(3, &s), Err(DistError::SupportNotUnit(..))));
    }

    #[test]
    fn refinement_examples() {
        let coarse = BinPartition::new(0.0, 1.0, vec![0.5]).unwrap();
        let fine = BinPartition::new(0.0, 1.0, vec![0.25, 0.5, 0.75]).unwrap();
        assert!(refines(&fine, &coarse));
        assert!(!refines(&coarse, &fine));
        assert!(refines(&fine, &fine));
        let other = BinPartition::new(0.0, 1.0, vec![0.3]).unwrap();
        assert!(!refines(&other, &coarse));
        assert!(make_partition(20, &ArrivalSpec::uniform())
            .unwrap()
            .refines(&make_partition(10, &ArrivalSpec::uniform()).unwrap()));
    }

    #[test]
    fn bin_of_uses_left_closed_bins() {
        let p = BinPartition::uniform(10);
        assert_eq!(p.bin_of(0.5), 5);
        assert_eq!(p.bin_of(0.4999), 4);
        assert_eq!(p.bin_of(0.0), 0);
        assert_eq!(p.bin_of(1.0), 9);
        assert_eq!(p.bin_of(-3.0), 0);
        assert_eq!(p.bounds(9), (0.9, 1.0));
    }

    #[test]
    fn cdf_table_csv() {
        let text = "# law\nprice,cdf\n0,0\n0.5,0.25\n1,1\n";
        let t = CdfTable::from_csv(text.as_bytes()).unwrap();
        let d = PriceDist::CdfTable(t);
        assert!((d.cdf(0.25) - 0.125).abs() < 1e-15);
        assert!((d.quantile(0.625).unwrap() - 0.75).abs() < 1e-15);
        assert!(CdfTable::from_csv("0,0\n0.5,0.6\n0.4,1\n".as_bytes()).is_err());
        assert!(CdfTable::from_csv("0,0.1\n1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn config_roundtrip_and_unknown_keys() {
        let cfg: ArrivalConfig = serde_json::from_str(
            r#"{"p_bid":0.5,"bid":{"kind":"uniform"},"ask":{"kind":"piecewise_linear","x":[0,1],"density":[1,1]}}"#,
        )
        .unwrap();
        let spec = cfg.build().unwrap();
        assert!(spec.bid.is_unit_uniform());
        assert!(serde_json::from_str::<ArrivalConfig>(r#"{"bid":{"kind":"uniform","width":2}}"#).is_err());
        assert!(serde_json::from_str::<ArrivalConfig>(r#"{"pb":0.5}"#).is_err());
    }

    fn arb_pwl() -> impl Strategy<Value = PriceDist> {
        (2usize..6)
            .prop_flat_map(|n| (prop::collection::vec(0.05f64..1.0, n - 1), prop::collection::vec(0.05f64..3.0, n)))
            .prop_map(|(gaps, ys)| {
                let total: f64 = gaps.iter().sum();
                let mut x = vec![0.0];
                let mut acc = 0.0;
                for g in &gaps {
                    acc += g / total;
                    x.push(acc);
                }
                *x.last_mut().unwrap() = 1.0;
                PriceDist::piecewise_linear(x, ys).unwrap()
            })
    }

    proptest! {
        #[test]
        fn quantile_cdf_roundtrip(d in arb_pwl(), u in 0.0f64..=1.0) {
            let q = d.quantile(u).unwrap();
            prop_assert!((d.cdf(q) - u).abs() <= 1e-12);
        }

        #[test]
        fn partition_bins_are_small(n in 2usize..60, bid in arb_pwl(), ask in arb_pwl()) {
            let spec = transform_to_uniform_bid(&ArrivalSpec::new(0.5, bid, ask).unwrap()).unwrap();
            let p = make_partition(n, &spec).unwrap();
            let lim = 1.0 / n as f64 + 1e-9;
            for k in 0..p.len() {
                let (a, b) = p.bounds(k);
                prop_assert!(b > a);
                prop_assert!(b - a <= lim);
                prop_assert!(spec.bid.mass(a, b) <= lim);
                prop_assert!(spec.ask.mass(a, b) <= lim);
            }
        }

        #[test]
        fn transform_preserves_bin_masses(bid in arb_pwl(), ask in arb_pwl(), a in 0.0f64..1.0, w in 0.0f64..1.0) {
            let b = (a + w).min(1.0);
            let spec = ArrivalSpec::new(0.5, bid.clone(), ask.clone()).unwrap();
            let t = transform_to_uniform_bid(&spec).unwrap();
            let (fa, fb) = (bid.cdf(a), bid.cdf(b));
            prop_assert!((bid.mass(a, b) - t.bid.mass(fa, fb)).abs() <= 1e-10);
            prop_assert!((ask.mass(a, b) - t.ask.mass(fa, fb)).abs() <= 1e-10);
        }

        #[test]
        fn uniform_multiples_refine(m in 2usize..20, k in 1usize..5) {
            let s = ArrivalSpec::uniform();
            prop_assert!(make_partition(m * k, &s).unwrap().refines(&make_partition(m, &s).unwrap()));
        }
    }
}
