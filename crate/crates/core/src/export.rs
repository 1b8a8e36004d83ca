//! CSV output with a leading `# seed=… config=…` line.

use std::io::Write;

use serde::Serialize;

use crate::sim::{Checkpoint, Trace};

/// Provenance written as the first line of every CSV.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Meta {
    pub seed: Option<u64>,
    /// Hex digest of the resolved configuration.
    pub config: String,
}

impl Meta {
    pub fn new(seed: Option<u64>, config: impl Into<String>) -> Self {
        Self { seed, config: config.into() }
    }

    pub fn line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!("# seed={seed} config={}", self.config)
    }
}

/// Writes the meta line, a header row and one row per record. Field names of
/// `R` become the header; a header is written even when there are no rows.
pub fn write_csv<W: Write, R: Serialize>(mut w: W, meta: &Meta, header: &[&str], rows: impl IntoIterator<Item = R>) -> csv::Result<()> {
    writeln!(w, "{}", meta.line())?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(header)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_checkpoints<W: Write>(w: W, meta: &Meta, cps: &[Checkpoint]) -> csv::Result<()> {
    write_csv(w, meta, &["index", "t", "b_inf", "a_inf", "beta", "alpha", "top_bin_bids"], cps.iter())
}

/// Occupation of each recorder bin by the best bid and best ask, as fractions of time.
pub fn write_occupation<W: Write>(w: W, meta: &Meta, tr: &Trace) -> csv::Result<()> {
    let el = if tr.elapsed > 0.0 { tr.elapsed } else { 1.0 };
    let edges = tr.recorder.as_ref().map(|p| p.edges()).unwrap_or_default();
    let rows = (0..tr.occupation_b.len()).map(|k| (k, edges[k], edges[k + 1], tr.occupation_b[k] / el, tr.occupation_a[k] / el));
    write_csv(w, meta, &["bin", "lo", "hi", "pi_b", "pi_a"], rows)
}

/// Joint law of `(bin(β), bin(α))`; bin `N` marks an empty side.
pub fn write_joint<W: Write>(w: W, meta: &Meta, tr: &Trace) -> csv::Result<()> {
    let m = tr.n_bins() + 1;
    let mass = tr.joint_mass();
    let rows = (0..mass.len()).filter(|&i| mass[i] > 0.0).map(|i| (i / m, i % m, mass[i]));
    write_csv(w, meta, &["bid_bin", "ask_bin", "mass"], rows)
}

pub fn write_top_shape<W: Write>(w: W, meta: &Meta, tr: &Trace) -> csv::Result<()> {
    write_csv(w, meta, &["offset", "mean_bids"], tr.mean_top_shape().into_iter().enumerate())
}
