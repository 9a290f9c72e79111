//! End-to-end checks of the command-line tool: input validation, output
//! schemas and round trips through the library readers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dreamespase::gibbs::SelectionReport;
use dreamespase::hsm::{simulate_poisson, simulate_second_type_exact, HsmParams, Window};
use dreamespase::io;
use dreamespase::seeds::stream;
use dreamespase::sim::GeneSets;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dreamespase")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Four biopsies, each a three-node path, two covariates.
fn fit_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let mut outcomes = String::from("biopsy_id,subregion_id,y\n");
    let mut adjacency = String::from("biopsy_id,node_a,node_b\n");
    let mut covariates = String::from("biopsy_id,cd8,pdl1\n");
    for (i, id) in ["b1", "b2", "b3", "b4"].iter().enumerate() {
        let x = [i as f64 * 0.5 - 0.7, (i as f64 * 1.3).sin()];
        for k in 0..3 {
            outcomes.push_str(&format!("{id},s{k},{}\n", 0.8 * x[0] + 0.1 * k as f64 - 0.05 * i as f64));
        }
        adjacency.push_str(&format!("{id},0,1\n{id},1,2\n"));
        covariates.push_str(&format!("{id},{},{}\n", x[0], x[1]));
    }
    (
        write(dir, "outcomes.csv", &outcomes),
        write(dir, "adjacency.csv", &adjacency),
        write(dir, "covariates.csv", &covariates),
    )
}

fn cells_fixture(dir: &Path, biopsies: &[(&str, f64, bool)]) -> PathBuf {
    let mut text = String::from("biopsy_id,x,y,type\n");
    for &(id, theta, with_immune) in biopsies {
        let mut rng = stream(3, id);
        let w = Window::new(0.0, 200.0, 0.0, 200.0).unwrap();
        let beta1 = (200.0 / w.area()).ln();
        let x1 = simulate_poisson(beta1, &w, &mut rng).unwrap();
        let params = HsmParams { beta1, beta2: (150.0 / w.area()).ln(), theta, r: 15.0 };
        let x2 = simulate_second_type_exact(&x1, &params, &w, &mut rng).unwrap();
        for p in &x1 {
            text.push_str(&format!("{id},{},{},1\n", p[0], p[1]));
        }
        if with_immune {
            for p in &x2 {
                text.push_str(&format!("{id},{},{},2\n", p[0], p[1]));
            }
        }
    }
    write(dir, "cells.csv", &text)
}

const HSM_CONFIG: &str = r#"{"rows": 2, "cols": 2, "r": 15.0, "mh": {"iterations": 600, "burn_in": 200}}"#;
const FIT_CONFIG: &str = r#"{"iterations": 300, "burn_in": 100, "thin": 2}"#;

#[test]
fn malformed_inputs_exit_nonzero_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (outcomes, adjacency, covariates) = fit_fixture(d);
    let fit_cfg = write(d, "fit.json", FIT_CONFIG);

    let nan_cov = write(d, "nan_cov.csv", "biopsy_id,cd8,pdl1\nb1,1,NaN\nb2,0,1\nb3,1,1\nb4,0,0\n");
    let missing_biopsy = write(d, "short_cov.csv", "biopsy_id,cd8,pdl1\nb1,1,0\nb2,0,1\nb3,1,1\nb9,0,0\n");
    let isolated = write(d, "isolated.csv", "biopsy_id,node_a,node_b\nb1,0,1\nb2,0,1\nb2,1,2\nb3,0,1\nb3,1,2\nb4,0,1\nb4,1,2\n");
    let self_edge = write(d, "self.csv", "biopsy_id,node_a,node_b\nb1,1,1\n");
    let bad_header = write(d, "bad_header.csv", "biopsy,sub,y\nb1,s0,1\n");
    let dup_sub = write(d, "dup.csv", "biopsy_id,subregion_id,y\nb1,s0,1\nb1,s0,2\n");
    let text_value = write(d, "text.csv", "biopsy_id,subregion_id,y\nb1,s0,high\n");
    let bad_type = write(d, "cells_bad.csv", "biopsy_id,x,y,type\nA,1,1,1\nA,2,2,3\n");
    let ragged_genes = write(d, "genes_bad.csv", "gene,group,s1,s2\ng1,a,1,2\ng2,a,1\n");
    let bad_trace = write(d, "trace_bad.csv", "iteration,log_likelihood\n1,-3\n2,inf\n");
    let unknown_field = write(d, "unknown.json", r#"{"iterations": 300, "burnin": 10}"#);
    let bad_value = write(d, "bad_value.json", r#"{"iterations": 10, "burn_in": 20}"#);
    let not_json = write(d, "not.json", "{iterations: 3");

    let fit = |o: &Path, a: &Path, c: &Path, cfg: &Path| -> Vec<String> {
        ["fit", "--config", s(cfg), "--outcomes", s(o), "--adjacency", s(a), "--covariates", s(c)]
            .map(String::from)
            .to_vec()
    };
    let cases: Vec<(&str, Vec<String>, i32)> = vec![
        ("non-finite covariate", fit(&outcomes, &adjacency, &nan_cov, &fit_cfg), 2),
        ("id mismatch", fit(&outcomes, &adjacency, &missing_biopsy, &fit_cfg), 2),
        ("isolated sub-region", fit(&outcomes, &isolated, &covariates, &fit_cfg), 2),
        ("self edge", fit(&outcomes, &self_edge, &covariates, &fit_cfg), 2),
        ("outcome header", fit(&bad_header, &adjacency, &covariates, &fit_cfg), 2),
        ("duplicate sub-region", fit(&dup_sub, &adjacency, &covariates, &fit_cfg), 2),
        ("non-numeric outcome", fit(&text_value, &adjacency, &covariates, &fit_cfg), 2),
        ("unknown config field", fit(&outcomes, &adjacency, &covariates, &unknown_field), 2),
        ("burn-in past chain", fit(&outcomes, &adjacency, &covariates, &bad_value), 2),
        ("config not json", fit(&outcomes, &adjacency, &covariates, &not_json), 2),
        ("missing input file", fit(&d.join("nope.csv"), &adjacency, &covariates, &fit_cfg), 4),
        ("unknown type code", vec!["hsm-fit".into(), "--cells".into(), s(&bad_type).into()], 2),
        ("ragged gene row", vec!["preprocess".into(), "--genes".into(), s(&ragged_genes).into()], 2),
        ("non-finite trace", vec!["diagnose".into(), "--trace".into(), s(&bad_trace).into()], 2),
        ("missing required flag", vec!["fit".into(), "--outcomes".into(), s(&outcomes).into()], 2),
    ];
    for (k, (name, mut args, code)) in cases.into_iter().enumerate() {
        let out_dir = d.join(format!("out{k}"));
        args.extend(["--out".into(), s(&out_dir).into()]);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(&args);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(code), "{name}: {stderr}");
        assert!(!out_dir.exists(), "{name}: output directory left behind");
        let leftovers: Vec<_> = std::fs::read_dir(d)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains("staging"))
            .collect();
        assert!(leftovers.is_empty(), "{name}: staging directory left behind");
    }
}

#[test]
fn errors_name_lines_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (outcomes, adjacency, _) = fit_fixture(d);
    let cov = write(d, "cov.csv", "biopsy_id,cd8,pdl1\nb1,1,0\nb2,0,1\nb3,1,x\nb4,0,0\n");
    let out = run(&["fit", "--outcomes", s(&outcomes), "--adjacency", s(&adjacency), "--covariates", s(&cov), "--out", s(&d.join("o"))]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cov.csv:4"), "{stderr}");

    let cfg = write(d, "c.json", r#"{"setting": {"lattice": [3, "x"]}}"#);
    let out = run(&["simulate", "--config", s(&cfg), "--out", s(&d.join("o"))]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr.contains("setting.lattice"), "{stderr}");
}

#[test]
fn hsm_fit_two_biopsies_and_an_immune_free_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cells = cells_fixture(d, &[("A", 0.3, true), ("B", -0.3, true), ("C", 0.0, false)]);
    let cfg = write(d, "hsm.json", HSM_CONFIG);
    let out = d.join("hsm");
    ok(&["hsm-fit", "--seed", "1", "--config", s(&cfg), "--cells", s(&cells), "--out", s(&out)]);

    let rows = io::read_hsm_output(&out.join("subregions.csv")).unwrap();
    let mut per: BTreeMap<String, usize> = BTreeMap::new();
    for (id, _) in &rows {
        *per.entry(id.clone()).or_default() += 1;
    }
    assert_eq!(per.keys().cloned().collect::<Vec<_>>(), ["A", "B"]);
    assert!(per.values().all(|&n| n <= 4));
    // adjacency stays within each biopsy's kept sub-regions and uses grid
    // neighbours only
    let edges = io::read_adjacency(&out.join("adjacency.csv")).unwrap();
    for (id, list) in &edges {
        let n = per[id];
        assert!(list.iter().all(|&(a, b)| a < n && b < n));
    }
    let dropped: serde_json::Value = io::read_json(&out.join("dropped.json")).unwrap();
    assert!(dropped.to_string().contains('C'), "{dropped}");

    // the interaction estimates feed straight into `fit` as outcomes
    let outcomes = io::read_outcomes(&out.join("subregions.csv")).unwrap();
    assert_eq!(outcomes.len(), 2);
}

#[test]
fn fit_reports_and_nsds_variant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (outcomes, adjacency, covariates) = fit_fixture(d);
    for variant in ["spatial", "nsds"] {
        let cfg = write(d, &format!("{variant}.json"), &format!(r#"{{"iterations": 300, "burn_in": 100, "thin": 2, "variant": "{variant}"}}"#));
        let out = d.join(variant);
        ok(&[
            "fit", "--seed", "9", "--config", s(&cfg), "--outcomes", s(&outcomes), "--adjacency", s(&adjacency),
            "--covariates", s(&covariates), "--out", s(&out),
        ]);
        let report: SelectionReport = io::read_json(&out.join("selection.json")).unwrap();
        assert_eq!(report.covariates, ["cd8", "pdl1"]);
        assert_eq!(report.fixed_probability.len(), 2);
        assert_eq!(report.random_probability.len(), 2);
        assert!(report.geweke.is_some());
        let manifest: serde_json::Value = io::read_json(&out.join("manifest.json")).unwrap();
        assert_eq!(manifest["config"]["variant"], variant);
        assert_eq!(manifest["seed"], 9);
        let alpha = io::read_long(&out.join("posterior_alpha.csv")).unwrap();
        assert_eq!(alpha.rows.len(), 100 * 2);
        assert_eq!(io::read_trace(&out.join("loglik.csv")).unwrap().len(), 300);
    }
}

#[test]
fn evaluate_three_method_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(
        d,
        "eval.json",
        r#"{"settings": [{"n_biopsies": 24, "lattice": [3, 3]}], "replicates": 2,
            "methods": ["dreamespase", "nsds", "analyst"], "chain": {"iterations": 200, "burn_in": 100, "thin": 2}}"#,
    );
    let out = d.join("eval");
    ok(&["evaluate", "--seed", "2", "--config", s(&cfg), "--out", s(&out)]);
    let table = io::read_aggregate(&out.join("aggregate.csv")).unwrap();
    assert_eq!(table.methods.len(), 3);
    let tpr_rows = table.rows.iter().filter(|r| r.3 == "tpr").count();
    assert_eq!(tpr_rows, 2 * 3);
    assert!(table.rows.iter().all(|r| r.5.len() == 3));
    let summary = io::read_replicate_summary(&out.join("replicate_summary.csv")).unwrap();
    assert_eq!(summary.len(), 2 * 3);
    assert!(summary.iter().all(|r| r.geweke_p.is_some() == (r.method.name() != "analyst")));
}

#[test]
fn preprocess_merges_a_transitive_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // g1~g2 and g2~g3 correlate at 0.76, g1~g3 only at 0.52
    let genes = write(
        d,
        "genes.csv",
        "gene,group,s1,s2,s3,s4,s5,s6,s7,s8\n\
         g1,a,1,2,3,4,5,6,7,8\n\
         g2,a,1,2,3,4,8,7,6,5\n\
         g3,a,4,3,2,1,8,7,6,5\n\
         g4,b,3,1,2,1,3,2,1,3\n",
    );
    let cfg = write(d, "pre.json", r#"{"threshold": 0.7}"#);
    let out = d.join("pre");
    ok(&["preprocess", "--config", s(&cfg), "--genes", s(&genes), "--out", s(&out)]);
    let sets: GeneSets = io::read_json(&out.join("gene_sets.json")).unwrap();
    let chain: Vec<_> = sets.sets.iter().filter(|s| s.genes.len() > 1).collect();
    assert_eq!(chain.len(), 1);
    assert_eq!(chain[0].genes, ["g1", "g2", "g3"]);
    let cov = io::read_covariates(&out.join("covariates.csv")).unwrap();
    assert_eq!(cov.names.len(), 2);
}

/// Reads every CSV the tool wrote and writes it back with the library
/// writers; the bytes must match.
#[test]
fn csv_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim_cfg = write(d, "sim.json", r#"{"setting": {"n_biopsies": 24, "lattice": [3, 3]}, "replicates": 1}"#);
    let fit_cfg = write(d, "fit.json", FIT_CONFIG);
    let hsm_cfg = write(d, "hsm.json", HSM_CONFIG);
    let eval_cfg = write(
        d,
        "eval.json",
        r#"{"settings": [{"n_biopsies": 24, "lattice": [3, 3]}], "replicates": 1,
            "methods": ["analyst", "dreamespase"], "chain": {"iterations": 200, "burn_in": 100, "thin": 2}}"#,
    );
    let genes = write(d, "genes.csv", "gene,group,s1,s2,s3,s4\ng1,a,1,2,3,4.5\ng2,a,1.1,2,3.2,4\ng3,b,0,1,0,1\n");
    let cells = cells_fixture(d, &[("A", 0.3, true), ("B", -0.3, true)]);

    let sim = d.join("sim");
    ok(&["simulate", "--seed", "1", "--config", s(&sim_cfg), "--out", s(&sim)]);
    let rep = sim.join("rep_000");
    let fit = d.join("fit");
    ok(&[
        "fit", "--config", s(&fit_cfg), "--outcomes", s(&rep.join("outcomes.csv")), "--adjacency",
        s(&rep.join("adjacency.csv")), "--covariates", s(&rep.join("covariates.csv")), "--out", s(&fit),
    ]);
    let hsm = d.join("hsm");
    ok(&["hsm-fit", "--config", s(&hsm_cfg), "--cells", s(&cells), "--out", s(&hsm)]);
    let eval = d.join("eval");
    ok(&["evaluate", "--config", s(&eval_cfg), "--out", s(&eval)]);
    let pre = d.join("pre");
    ok(&["preprocess", "--genes", s(&genes), "--out", s(&pre)]);

    let copy = d.join("copy.csv");
    let same = |original: &Path| {
        assert_eq!(std::fs::read(original).unwrap(), std::fs::read(&copy).unwrap(), "{}", original.display());
    };

    // simulate
    let cov = io::read_covariates(&rep.join("covariates.csv")).unwrap();
    io::write_covariates(&copy, &cov).unwrap();
    same(&rep.join("covariates.csv"));
    let outcomes = io::read_outcomes(&rep.join("outcomes.csv")).unwrap();
    let edges = io::read_adjacency(&rep.join("adjacency.csv")).unwrap();
    let biopsies = io::assemble_biopsies(&outcomes, &edges, &cov).unwrap();
    io::write_outcomes(&copy, &biopsies).unwrap();
    same(&rep.join("outcomes.csv"));
    io::write_adjacency(&copy, biopsies.iter().map(|b| (b.id.as_str(), b.adjacency.as_ref()))).unwrap();
    same(&rep.join("adjacency.csv"));
    io::write_simulation_summary(&copy, &io::read_simulation_summary(&sim.join("summary.csv")).unwrap()).unwrap();
    same(&sim.join("summary.csv"));

    // fit
    let mut families = 0;
    for e in std::fs::read_dir(&fit).unwrap() {
        let p = e.unwrap().path();
        if p.file_name().unwrap().to_string_lossy().starts_with("posterior_") {
            io::write_long(&copy, &io::read_long(&p).unwrap()).unwrap();
            same(&p);
            families += 1;
        }
    }
    assert_eq!(families, 9);
    io::write_trace(&copy, &io::read_trace(&fit.join("loglik.csv")).unwrap()).unwrap();
    same(&fit.join("loglik.csv"));

    // hsm-fit
    let rows = io::read_hsm_output(&hsm.join("subregions.csv")).unwrap();
    let mut grouped: Vec<(String, Vec<_>)> = Vec::new();
    for (id, cell) in rows {
        match grouped.last_mut() {
            Some((last, cells)) if *last == id => cells.push(cell),
            _ => grouped.push((id, vec![cell])),
        }
    }
    io::write_hsm_output(&copy, grouped.iter().map(|(id, c)| (id.as_str(), c.as_slice()))).unwrap();
    same(&hsm.join("subregions.csv"));
    let edges = io::read_adjacency(&hsm.join("adjacency.csv")).unwrap();
    let mut text = String::from("biopsy_id,node_a,node_b\n");
    for (id, list) in &edges {
        for (a, b) in list {
            text.push_str(&format!("{id},{a},{b}\n"));
        }
    }
    std::fs::write(&copy, text).unwrap();
    same(&hsm.join("adjacency.csv"));

    // evaluate
    let metrics = io::read_replicate_metrics(&eval.join("replicates.csv")).unwrap();
    let mut w = csv::Writer::from_path(&copy).unwrap();
    for r in &metrics {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();
    drop(w);
    same(&eval.join("replicates.csv"));
    io::write_replicate_summary(&copy, &io::read_replicate_summary(&eval.join("replicate_summary.csv")).unwrap())
        .unwrap();
    same(&eval.join("replicate_summary.csv"));
    io::write_aggregate(&copy, &io::read_aggregate(&eval.join("aggregate.csv")).unwrap()).unwrap();
    same(&eval.join("aggregate.csv"));

    // preprocess
    io::write_covariates(&copy, &io::read_covariates(&pre.join("covariates.csv")).unwrap()).unwrap();
    same(&pre.join("covariates.csv"));
}
