//! CSV emission: one row per (cell, seed, scheme) and one aggregate row per
//! (cell, scheme).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::config::{to_toml, SweepSpec, SystemConfig};
use super::runner::{ResultRow, ResultTable};
use crate::error::Result;
use crate::evaluation::SchemeKind;

pub const ROW_HEADER: [&str; 16] = [
    "scenario_id",
    "seed",
    "scheme",
    "metric",
    "K",
    "K_prime",
    "N_tx",
    "N_rx",
    "L_rx",
    "min_unicast_sinr",
    "unicast_se",
    "min_multicast_sinr",
    "feasible",
    "ccp_iterations",
    "runtime_ms",
    "channel_fingerprint",
];

pub const AGGREGATE_HEADER: [&str; 20] = [
    "scenario_id",
    "scheme",
    "metric",
    "K",
    "K_prime",
    "N_tx",
    "N_rx",
    "L_rx",
    "n_seeds",
    "n_feasible",
    "feasibility_rate",
    "min_unicast_sinr_mean",
    "min_unicast_sinr_std",
    "unicast_se_mean",
    "unicast_se_std",
    "min_multicast_sinr_mean",
    "min_multicast_sinr_std",
    "ccp_iterations_mean",
    "converged_rate",
    "runtime_ms_mean",
];

/// 15 significant digits; parses back to within one part in 1e14.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.14e}")
    } else {
        x.to_string()
    }
}

pub fn write_rows_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario_id.clone(),
            r.seed.to_string(),
            r.scheme.to_string(),
            r.metric_name().to_string(),
            r.k.to_string(),
            r.k_prime.to_string(),
            r.n_tx.to_string(),
            r.n_rx.to_string(),
            r.l_rx.to_string(),
            fmt_float(r.min_unicast_sinr),
            fmt_float(r.unicast_se),
            fmt_float(r.min_multicast_sinr),
            r.feasible.to_string(),
            r.ccp_iterations.to_string(),
            fmt_float(r.runtime_ms),
            format!("{:016x}", r.channel_fingerprint),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scenario_id: String,
    pub scheme: SchemeKind,
    pub k: usize,
    pub k_prime: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub l_rx: usize,
    pub n_seeds: usize,
    pub n_feasible: usize,
    pub min_unicast_sinr: (f64, f64),
    pub unicast_se: (f64, f64),
    pub min_multicast_sinr: (f64, f64),
    pub ccp_iterations_mean: f64,
    pub converged_rate: f64,
    pub runtime_ms_mean: f64,
}

impl AggregateRow {
    pub fn feasibility_rate(&self) -> f64 {
        self.n_feasible as f64 / self.n_seeds as f64
    }
}

/// Mean and sample standard deviation; NaN mean for no samples, zero
/// deviation for one.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Statistics per (cell, scheme) over the feasible seeds, in table order.
pub fn aggregate(table: &ResultTable) -> Vec<AggregateRow> {
    let mut out = Vec::with_capacity(table.cells.len() * table.schemes.len());
    for cell in &table.cells {
        for &scheme in &table.schemes {
            let rows: Vec<&ResultRow> = table
                .rows
                .iter()
                .filter(|r| r.cell == cell.index && r.scheme == scheme)
                .collect();
            let ok: Vec<&&ResultRow> = rows.iter().filter(|r| r.feasible).collect();
            let col =
                |f: fn(&ResultRow) -> f64| mean_std(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let cfg = &cell.config;
            out.push(AggregateRow {
                scenario_id: cell.scenario_id.clone(),
                scheme,
                k: cfg.k,
                k_prime: cfg.k_prime,
                n_tx: cfg.n_tx,
                n_rx: cfg.n_rx,
                l_rx: cfg.l_rx,
                n_seeds: rows.len(),
                n_feasible: ok.len(),
                min_unicast_sinr: col(|r| r.min_unicast_sinr),
                unicast_se: col(|r| r.unicast_se),
                min_multicast_sinr: col(|r| r.min_multicast_sinr),
                ccp_iterations_mean: col(|r| r.ccp_iterations as f64).0,
                converged_rate: if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().filter(|r| r.converged).count() as f64 / ok.len() as f64
                },
                runtime_ms_mean: mean_std(&rows.iter().map(|r| r.runtime_ms).collect::<Vec<_>>()).0,
            });
        }
    }
    out
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for a in rows {
        w.write_record([
            a.scenario_id.clone(),
            a.scheme.to_string(),
            a.scheme.metric().map_or("", |m| m.name()).to_string(),
            a.k.to_string(),
            a.k_prime.to_string(),
            a.n_tx.to_string(),
            a.n_rx.to_string(),
            a.l_rx.to_string(),
            a.n_seeds.to_string(),
            a.n_feasible.to_string(),
            fmt_float(a.feasibility_rate()),
            fmt_float(a.min_unicast_sinr.0),
            fmt_float(a.min_unicast_sinr.1),
            fmt_float(a.unicast_se.0),
            fmt_float(a.unicast_se.1),
            fmt_float(a.min_multicast_sinr.0),
            fmt_float(a.min_multicast_sinr.1),
            fmt_float(a.ccp_iterations_mean),
            fmt_float(a.converged_rate),
            fmt_float(a.runtime_ms_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, `aggregate.csv` and the resolved `config.toml`
/// into `dir`, creating it if needed.
pub fn write_outputs(
    dir: &Path,
    cfg: &SystemConfig,
    sweep: &SweepSpec,
    table: &ResultTable,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rows_csv(
        BufWriter::new(File::create(dir.join("results.csv"))?),
        &table.rows,
    )?;
    write_aggregate_csv(
        BufWriter::new(File::create(dir.join("aggregate.csv"))?),
        &aggregate(table),
    )?;
    std::fs::write(dir.join("config.toml"), to_toml(cfg, sweep)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_gives_header_only() {
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with(
            "scenario_id,seed,scheme,metric,K,K_prime,N_tx,N_rx,L_rx,min_unicast_sinr"
        ));
    }

    #[test]
    fn floats_keep_enough_digits() {
        for x in [
            std::f64::consts::PI * 1e5,
            1.0 / 3.0,
            2.5e-11,
            123456.789012345,
        ] {
            let s = fmt_float(x);
            let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
            assert!(mantissa.len() >= 12, "{s}");
            let back: f64 = s.parse().unwrap();
            assert!((back - x).abs() <= 1e-9 * x.abs());
        }
        assert_eq!(fmt_float(f64::NAN), "NaN");
    }

    #[test]
    fn mean_std_edge_cases() {
        assert!(mean_std(&[]).0.is_nan());
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
