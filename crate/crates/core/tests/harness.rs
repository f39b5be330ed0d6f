use std::collections::BTreeMap;
use std::path::Path;

use ldm_core::harness::{
    aggregate, parse_config, run_experiment, write_aggregate_csv, write_outputs, write_rows_csv, ResultTable,
    RunOptions, SweepSpec, SystemConfig,
};

const SMALL: &str = r#"
[system]
k = 4
k_prime = 2
n_tx = 8
n_seeds = 3
master_seed = 11

[sweep]
schemes = ["BEAMWAVE-KING", "BEAMWAVE-CORR", "RANDOM", "XHAUS", "TDM-75%"]

[[sweep.axis]]
field = "n_tx"
values = [8, 10]
"#;

fn small() -> (SystemConfig, SweepSpec) {
    parse_config(SMALL).unwrap()
}

fn csv_bytes(workers: usize) -> (Vec<u8>, Vec<u8>) {
    let (cfg, sweep) = small();
    let opts = RunOptions {
        workers,
        record_timing: false,
        progress_every: 0,
    };
    let table = run_experiment(&cfg, &sweep, &opts).unwrap();
    let mut rows = Vec::new();
    write_rows_csv(&mut rows, &table.rows).unwrap();
    let mut agg = Vec::new();
    write_aggregate_csv(&mut agg, &aggregate(&table)).unwrap();
    (rows, agg)
}

#[test]
fn output_is_identical_for_any_worker_count() {
    let one = csv_bytes(1);
    let three = csv_bytes(3);
    assert_eq!(one.0, three.0);
    assert_eq!(one.1, three.1);
}

fn records(bytes: &[u8]) -> Vec<BTreeMap<String, String>> {
    let mut rd = csv::Reader::from_reader(bytes);
    let headers = rd.headers().unwrap().clone();
    rd.records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

#[test]
fn rows_cover_every_cell_seed_and_scheme_with_shared_channels() {
    let (rows, _) = csv_bytes(1);
    let recs = records(&rows);
    assert_eq!(recs.len(), 2 * 3 * 5);
    let mut fp: BTreeMap<(String, String), String> = BTreeMap::new();
    for r in &recs {
        let key = (r["scenario_id"].clone(), r["seed"].clone());
        let f = fp.entry(key).or_insert_with(|| r["channel_fingerprint"].clone());
        assert_eq!(f, &r["channel_fingerprint"], "schemes of one seed saw different channels");
    }
    assert_eq!(fp.len(), 6);
}

#[test]
fn aggregates_match_recomputation_from_rows() {
    let (rows, agg) = csv_bytes(1);
    let rows = records(&rows);
    for a in records(&agg) {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r["scenario_id"] == a["scenario_id"] && r["scheme"] == a["scheme"] && r["feasible"] == "true")
            .map(|r| r["min_unicast_sinr"].parse().unwrap())
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let got_mean: f64 = a["min_unicast_sinr_mean"].parse().unwrap();
        let got_std: f64 = a["min_unicast_sinr_std"].parse().unwrap();
        assert_eq!(a["n_feasible"].parse::<usize>().unwrap(), vals.len());
        assert!((got_mean - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{got_mean} vs {mean}");
        assert!((got_std - std).abs() <= 1e-12 * mean.abs().max(1.0), "{got_std} vs {std}");
    }
}

#[test]
fn floats_parse_back_to_the_table_values() {
    let (cfg, sweep) = small();
    let opts = RunOptions {
        workers: 1,
        record_timing: false,
        progress_every: 0,
    };
    let table = run_experiment(&cfg, &sweep, &opts).unwrap();
    let mut bytes = Vec::new();
    write_rows_csv(&mut bytes, &table.rows).unwrap();
    for (row, rec) in table.rows.iter().zip(records(&bytes)) {
        for (value, col) in [
            (row.min_unicast_sinr, "min_unicast_sinr"),
            (row.unicast_se, "unicast_se"),
            (row.min_multicast_sinr, "min_multicast_sinr"),
        ] {
            let back: f64 = rec[col].parse().unwrap();
            if value.is_nan() {
                assert!(back.is_nan());
            } else {
                assert!((back - value).abs() <= 1e-9 * value.abs(), "{col}: {back} vs {value}");
            }
        }
    }
}

#[test]
fn xhaus_dominates_beamwave_on_every_seed() {
    let (rows, _) = csv_bytes(1);
    let recs = records(&rows);
    for r in recs.iter().filter(|r| r["scheme"].starts_with("BEAMWAVE") && r["feasible"] == "true") {
        let x = recs
            .iter()
            .find(|x| x["scheme"] == "XHAUS" && x["scenario_id"] == r["scenario_id"] && x["seed"] == r["seed"])
            .unwrap();
        let (xv, bv): (f64, f64) = (x["min_unicast_sinr"].parse().unwrap(), r["min_unicast_sinr"].parse().unwrap());
        assert!(xv >= bv * (1.0 - 1e-12));
    }
}

#[test]
fn run_writes_all_outputs() {
    let (mut cfg, sweep) = small();
    cfg.n_seeds = 1;
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        workers: 1,
        record_timing: true,
        progress_every: 0,
    };
    let table = run_experiment(&cfg, &sweep, &opts).unwrap();
    write_outputs(dir.path(), &cfg, &sweep, &table).unwrap();
    for f in ["results.csv", "aggregate.csv", "config.toml"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let text = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(parse_config(&text).unwrap(), (cfg, sweep));
}

#[test]
fn unwritable_destination_is_an_io_error() {
    let (cfg, sweep) = small();
    let table = ResultTable {
        cells: sweep.cells(&cfg).unwrap(),
        schemes: sweep.schemes.clone(),
        rows: Vec::new(),
    };
    let err = write_outputs(Path::new("/proc/no/such/dir"), &cfg, &sweep, &table).unwrap_err();
    assert!(matches!(err, ldm_core::Error::Io(_)), "{err:?}");
}

#[test]
fn fig2_config_expands_to_nine_cells_of_six_schemes() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/fig2.toml")).unwrap();
    let (cfg, sweep) = parse_config(&text).unwrap();
    let table = ResultTable {
        cells: sweep.cells(&cfg).unwrap(),
        schemes: sweep.schemes.clone(),
        rows: Vec::new(),
    };
    assert_eq!(table.cells.len(), 9);
    assert_eq!(sweep.schemes.len(), 6);
    let agg = aggregate(&table);
    assert_eq!(agg.len(), 54);
    assert!(agg.iter().all(|a| a.n_seeds == 0 && a.unicast_se.0.is_nan()));
    let mut bytes = Vec::new();
    write_rows_csv(&mut bytes, &table.rows).unwrap();
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 1);
}

#[test]
fn shipped_configs_parse() {
    for name in ["fig2", "fig3", "fig4"] {
        let path = format!("{}/../../configs/{name}.toml", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(&path).unwrap();
        parse_config(&text).unwrap_or_else(|e| panic!("{path}: {e}"));
    }
}
