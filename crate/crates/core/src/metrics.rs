//! Distance-ordering preservation KPIs.
//!
//! For every anchor row the Euclidean distances to all other rows are taken
//! in the original and in the latent space. Global KPIs correlate the full
//! distance vectors; location KPIs restrict to the anchor's `l` nearest
//! neighbours in latent space.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rank;
use crate::seed;
use crate::stats;

/// Which rows act as anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AnchorSelection {
    All,
    /// A seeded random subset of this many rows.
    Subset(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KpiConfig {
    pub location_param: usize,
    pub samples: AnchorSelection,
    pub rng_seed: u64,
    pub log_offset: f64,
}

impl Default for KpiConfig {
    fn default() -> Self {
        KpiConfig {
            location_param: 50,
            samples: AnchorSelection::All,
            rng_seed: 0,
            log_offset: 1.0,
        }
    }
}

impl KpiConfig {
    pub fn validate(&self, n_rows: usize) -> Result<()> {
        if self.location_param < 2 {
            return Err(Error::Config(format!(
                "location_param must be at least 2, got {}",
                self.location_param
            )));
        }
        if self.location_param >= n_rows {
            return Err(Error::Config(format!(
                "location_param {} needs more than {} rows",
                self.location_param, n_rows
            )));
        }
        if let AnchorSelection::Subset(k) = self.samples {
            if k == 0 || k > n_rows {
                return Err(Error::Config(format!(
                    "sample_count {k} must be in 1..={n_rows}"
                )));
            }
        }
        if !(self.log_offset > 0.0) {
            return Err(Error::Config(format!(
                "log_offset must be positive, got {}",
                self.log_offset
            )));
        }
        Ok(())
    }

    /// Anchor row indices, ascending.
    pub fn anchors(&self, n_rows: usize) -> Vec<usize> {
        match self.samples {
            AnchorSelection::All => (0..n_rows).collect(),
            AnchorSelection::Subset(k) => {
                let mut rng = seed::rng(self.rng_seed);
                let mut v = index::sample(&mut rng, n_rows, k.min(n_rows)).into_vec();
                v.sort_unstable();
                v
            }
        }
    }
}

/// Distances from one anchor to every other row, in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDistances {
    pub anchor: usize,
    pub d_orig: Vec<f64>,
    pub d_lat: Vec<f64>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn check_aligned(data: &Matrix, latent: &Matrix) -> Result<()> {
    if data.rows() != latent.rows() {
        return Err(Error::dim("latent rows", data.rows(), latent.rows()));
    }
    Ok(())
}

pub fn distances_from(data: &Matrix, latent: &Matrix, anchor: usize) -> Result<AnchorDistances> {
    check_aligned(data, latent)?;
    let n = data.rows();
    if anchor >= n {
        return Err(Error::OutOfRange {
            context: "anchor".into(),
            index: anchor,
            len: n,
        });
    }
    let (xa, za) = (data.row(anchor), latent.row(anchor));
    let mut d_orig = Vec::with_capacity(n - 1);
    let mut d_lat = Vec::with_capacity(n - 1);
    for i in (0..n).filter(|&i| i != anchor) {
        d_orig.push(euclid(xa, data.row(i)));
        d_lat.push(euclid(za, latent.row(i)));
    }
    Ok(AnchorDistances { anchor, d_orig, d_lat })
}

pub fn anchor_distances(data: &Matrix, latent: &Matrix, anchors: &[usize]) -> Result<Vec<AnchorDistances>> {
    anchors.iter().map(|&a| distances_from(data, latent, a)).collect()
}

/// Pearson correlation of raw distances and of `log(d + log_offset)`.
/// `None` marks an undefined value (zero variance).
pub fn kpi_global(d_orig: &[f64], d_lat: &[f64], log_offset: f64) -> (Option<f64>, Option<f64>) {
    let corr = rank::pearson(d_orig, d_lat);
    let lo: Vec<f64> = d_orig.iter().map(|d| libm::log(d + log_offset)).collect();
    let ll: Vec<f64> = d_lat.iter().map(|d| libm::log(d + log_offset)).collect();
    (corr, rank::pearson(&lo, &ll))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationKpis {
    pub can: f64,
    pub pear: Option<f64>,
    pub spear: Option<f64>,
    pub ken: Option<f64>,
}

fn by_value_then_index(v: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&i, &j| v[i].partial_cmp(&v[j]).unwrap_or(Ordering::Equal).then(i.cmp(&j))
}

/// Indices of the `l` smallest values, in ascending order (ties by index).
fn smallest(v: &[f64], l: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let cmp = by_value_then_index(v);
    if l < idx.len() {
        idx.select_nth_unstable_by(l, &cmp);
        idx.truncate(l);
    }
    idx.sort_unstable_by(&cmp);
    idx
}

/// Indices of the `l` latent-nearest neighbours, nearest first (ties by index).
pub fn latent_neighbours(d_lat: &[f64], l: usize) -> Vec<usize> {
    smallest(d_lat, l.min(d_lat.len()))
}

/// Rank KPIs over the anchor's `l` nearest neighbours in latent space.
///
/// Canberra compares the latent ranks `1..=l` of those neighbours with their
/// ranks among all original-space distances, both capped at `l + 1`, and is
/// divided by `l`.
pub fn kpi_location(d_orig: &[f64], d_lat: &[f64], l: usize) -> Result<LocationKpis> {
    if d_orig.len() != d_lat.len() {
        return Err(Error::dim("location KPI distances", d_orig.len(), d_lat.len()));
    }
    if l == 0 || l > d_lat.len() {
        return Err(Error::Config(format!(
            "location parameter {l} needs at least {l} neighbours, have {}",
            d_lat.len()
        )));
    }
    let near = smallest(d_lat, l);
    let mut orig_rank = vec![l + 1; d_orig.len()];
    for (r, i) in smallest(d_orig, l).into_iter().enumerate() {
        orig_rank[i] = r + 1;
    }
    let lat_ranks: Vec<usize> = (1..=l).collect();
    let orig_ranks: Vec<usize> = near.iter().map(|&i| orig_rank[i]).collect();
    let lo: Vec<f64> = near.iter().map(|&i| d_orig[i]).collect();
    let ll: Vec<f64> = near.iter().map(|&i| d_lat[i]).collect();
    Ok(LocationKpis {
        can: rank::canberra_location(&lat_ranks, &orig_ranks, l),
        pear: rank::pearson(&ll, &lo),
        spear: rank::spearman(&ll, &lo),
        ken: rank::kendall_tau_b(&ll, &lo),
    })
}

/// The six KPIs of one anchor; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleKpis {
    pub anchor: usize,
    pub corr: Option<f64>,
    pub logcorr: Option<f64>,
    pub can: Option<f64>,
    pub pear: Option<f64>,
    pub spear: Option<f64>,
    pub ken: Option<f64>,
}

impl SampleKpis {
    pub fn get(&self, kpi: Kpi) -> Option<f64> {
        match kpi {
            Kpi::Corr => self.corr,
            Kpi::LogCorr => self.logcorr,
            Kpi::Can => self.can,
            Kpi::Pear => self.pear,
            Kpi::Spear => self.spear,
            Kpi::Ken => self.ken,
        }
    }
}

pub fn kpis_for_distances(anchor: usize, d_orig: &[f64], d_lat: &[f64], config: &KpiConfig) -> Result<SampleKpis> {
    let (corr, logcorr) = kpi_global(d_orig, d_lat, config.log_offset);
    let loc = kpi_location(d_orig, d_lat, config.location_param)?;
    Ok(SampleKpis {
        anchor,
        corr,
        logcorr,
        can: Some(loc.can),
        pear: loc.pear,
        spear: loc.spear,
        ken: loc.ken,
    })
}

pub fn sample_kpis(data: &Matrix, latent: &Matrix, anchor: usize, config: &KpiConfig) -> Result<SampleKpis> {
    let d = distances_from(data, latent, anchor)?;
    kpis_for_distances(anchor, &d.d_orig, &d.d_lat, config)
}

/// Per-anchor KPIs for every configured anchor, sequentially.
pub fn evaluate(data: &Matrix, latent: &Matrix, config: &KpiConfig) -> Result<Vec<SampleKpis>> {
    check_aligned(data, latent)?;
    config.validate(data.rows())?;
    config
        .anchors(data.rows())
        .into_iter()
        .map(|a| sample_kpis(data, latent, a, config))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kpi {
    Corr,
    LogCorr,
    Can,
    Pear,
    Spear,
    Ken,
}

impl Kpi {
    pub const ALL: [Kpi; 6] = [Kpi::Corr, Kpi::LogCorr, Kpi::Can, Kpi::Pear, Kpi::Spear, Kpi::Ken];

    /// Column label, e.g. `Can50`.
    pub fn label(self, l: usize) -> String {
        match self {
            Kpi::Corr => "Corr".into(),
            Kpi::LogCorr => "LogCorr".into(),
            Kpi::Can => format!("Can{l}"),
            Kpi::Pear => format!("Pear{l}"),
            Kpi::Spear => format!("Spear{l}"),
            Kpi::Ken => format!("Ken{l}"),
        }
    }

    pub fn lower_is_better(self) -> bool {
        self == Kpi::Can
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KpiStats {
    pub mean: f64,
    pub median: f64,
    pub stderr: f64,
    pub valid: usize,
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KpiReport {
    pub location_param: usize,
    pub anchors: usize,
    /// In [`Kpi::ALL`] order.
    pub stats: [KpiStats; 6],
}

impl KpiReport {
    pub fn get(&self, kpi: Kpi) -> &KpiStats {
        &self.stats[Kpi::ALL.iter().position(|&k| k == kpi).unwrap()]
    }
}

/// Valid (defined) values of one KPI.
pub fn kpi_values(samples: &[SampleKpis], kpi: Kpi) -> Vec<f64> {
    samples.iter().filter_map(|s| s.get(kpi)).collect()
}

/// Mean, median and standard error per KPI over the defined values.
pub fn aggregate(samples: &[SampleKpis], location_param: usize) -> Result<KpiReport> {
    let mut out = [KpiStats {
        mean: 0.0,
        median: 0.0,
        stderr: 0.0,
        valid: 0,
        undefined: 0,
    }; 6];
    for (slot, kpi) in out.iter_mut().zip(Kpi::ALL) {
        let mut v = kpi_values(samples, kpi);
        if v.len() < 2 {
            return Err(Error::Undefined(format!(
                "{} has {} defined sample(s) out of {}, need at least 2",
                kpi.label(location_param),
                v.len(),
                samples.len()
            )));
        }
        // sorting makes the floating-point sums independent of sample order
        v.sort_by(f64::total_cmp);
        *slot = KpiStats {
            mean: stats::mean(&v),
            median: stats::median(&v),
            stderr: stats::std_error(&v),
            valid: v.len(),
            undefined: samples.len() - v.len(),
        };
    }
    Ok(KpiReport {
        location_param,
        anchors: samples.len(),
        stats: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CanberraBaseline {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Monte Carlo expectation of the location Canberra indicator when the
/// latent and original rankings over `universe` items are independent.
pub fn random_canberra_baseline(l: usize, universe: usize, trials: usize, seed: u64) -> Result<CanberraBaseline> {
    if l == 0 || l > universe || trials < 2 {
        return Err(Error::Config(format!(
            "canberra baseline needs 0 < l <= universe and at least 2 trials (l={l}, universe={universe}, trials={trials})"
        )));
    }
    let mut rng = seed::rng(seed);
    let lat: Vec<usize> = (1..=l).collect();
    let mut values = Vec::with_capacity(trials);
    for _ in 0..trials {
        // original-space ranks of the l latent-nearest items: l distinct
        // positions of a uniformly random permutation
        let mut orig: Vec<usize> = index::sample(&mut rng, universe, l).into_iter().map(|r| r + 1).collect();
        orig.shuffle(&mut rng);
        values.push(rank::canberra_location(&lat, &orig, l));
    }
    Ok(CanberraBaseline {
        mean: stats::mean(&values),
        stderr: stats::std_error(&values),
        trials,
    })
}
