//! CSV report builders. Each returns the file contents; writing is left to
//! the caller so every output can be checksummed and written atomically.

use diresa_core::latent::ComponentOrdering;
use diresa_core::metrics::{Kpi, KpiReport, KpiStats, SampleKpis};
use diresa_core::stats::WelchTest;
use diresa_core::train::{LossMeans, TrainHistory};

/// Shortest representation that parses back to the same f64.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn csv_bytes<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header.iter().map(|h| h.as_ref())).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Epoch, learning rate, anneal weight and observed regularizer, then one
/// column per loss component present in the history, per split.
pub fn history_csv(h: &TrainHistory) -> Vec<u8> {
    type Getter = fn(&LossMeans) -> Option<f64>;
    let components: [(&str, Getter); 5] = [
        ("recon", |m| Some(m.recon)),
        ("cov", |m| m.cov),
        ("dist", |m| m.dist),
        ("kl", |m| m.kl),
        ("total", |m| Some(m.total)),
    ];
    let present: Vec<(&str, Getter)> = components
        .into_iter()
        .filter(|(_, g)| h.records.iter().any(|r| g(&r.train).is_some() || g(&r.validation).is_some()))
        .collect();
    let mut header: Vec<String> = ["epoch", "lr", "anneal_weight", "anneal_observed"].map(String::from).to_vec();
    for split in ["train", "validation"] {
        header.extend(present.iter().map(|(n, _)| format!("{split}_{n}")));
    }
    let rows: Vec<Vec<String>> = h
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.epoch.to_string(), num(r.lr), num(r.anneal_weight), opt(r.anneal_observed)];
            for m in [&r.train, &r.validation] {
                row.extend(present.iter().map(|(_, g)| opt(g(m))));
            }
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// One row per method: mean, median and standard-error blocks over the six
/// KPIs, then the anchor count.
pub fn kpi_report_csv(reports: &[(String, KpiReport)]) -> Vec<u8> {
    let l = reports.first().map_or(50, |(_, r)| r.location_param);
    let mut header = vec!["method".to_string()];
    for block in ["mean", "median", "stderr"] {
        header.extend(Kpi::ALL.iter().map(|k| format!("{}_{block}", k.label(l))));
    }
    header.push("anchors".into());
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.clone()];
            let blocks: [fn(&KpiStats) -> f64; 3] = [|s| s.mean, |s| s.median, |s| s.stderr];
            for pick in blocks {
                row.extend(Kpi::ALL.iter().map(|&k| num(pick(r.get(k)))));
            }
            row.push(r.anchors.to_string());
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Per-anchor KPI values of one method.
pub fn samples_csv(samples: &[SampleKpis], l: usize) -> Vec<u8> {
    let mut header = vec!["anchor".to_string()];
    header.extend(Kpi::ALL.iter().map(|k| k.label(l)));
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let mut row = vec![s.anchor.to_string()];
            row.extend(Kpi::ALL.iter().map(|&k| opt(s.get(k))));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Pairwise Welch p-values: one row per method pair, one column per KPI.
/// Empty cells mark pairs where the test is undefined.
pub fn pvalues_csv(pairs: &[(String, String, Vec<Option<WelchTest>>)], l: usize) -> Vec<u8> {
    let mut header = vec!["method_a".to_string(), "method_b".to_string()];
    header.extend(Kpi::ALL.iter().map(|k| k.label(l)));
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .map(|(a, b, tests)| {
            let mut row = vec![a.clone(), b.clone()];
            row.extend(tests.iter().map(|t| opt(t.map(|t| t.p_value))));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Components in decreasing decoded-variance order, then a `residual` row
/// carrying the unexplained fraction.
pub fn components_csv(o: &ComponentOrdering) -> Vec<u8> {
    let mut rows: Vec<Vec<String>> = o
        .permutation
        .iter()
        .enumerate()
        .map(|(rank, &j)| vec![rank.to_string(), j.to_string(), num(o.decoded_variance[j]), num(o.explained_fraction[j])])
        .collect();
    rows.push(vec![
        "residual".into(),
        String::new(),
        num(o.unexplained_fraction * o.total_variance),
        num(o.unexplained_fraction),
    ]);
    csv_bytes(&["rank", "latent_index", "decoded_variance", "explained_fraction"], &rows)
}

/// Decoded ±σ difference per ordered component, one column per feature.
pub fn deltas_csv(o: &ComponentOrdering, deltas: &[Vec<f64>]) -> Vec<u8> {
    let d = deltas.first().map_or(0, Vec::len);
    let mut header = vec!["rank".to_string(), "latent_index".to_string()];
    header.extend((0..d).map(|i| format!("feature_{i}")));
    let rows: Vec<Vec<String>> = o
        .permutation
        .iter()
        .enumerate()
        .map(|(rank, &j)| {
            let mut row = vec![rank.to_string(), j.to_string()];
            row.extend(deltas[j].iter().map(|&v| num(v)));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Two columns, original and latent distance, in input order.
pub fn scatter_csv(points: &[(f64, f64)]) -> Vec<u8> {
    let rows: Vec<Vec<String>> = points.iter().map(|&(a, b)| vec![num(a), num(b)]).collect();
    csv_bytes(&["original_distance", "latent_distance"], &rows)
}

/// Parses a scatter export back into its pairs.
pub fn read_scatter(bytes: &[u8]) -> Result<Vec<(f64, f64)>, String> {
    let mut r = csv::Reader::from_reader(bytes);
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            let get = |i: usize| -> Result<f64, String> {
                rec.get(i).ok_or("missing column")?.parse::<f64>().map_err(|e| e.to_string())
            };
            Ok((get(0)?, get(1)?))
        })
        .collect()
}
