use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn laborscope(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laborscope"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = laborscope(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Dense region x occupation CSV built straight from the synth records.
fn raw_matrix_csv(table: &Path, year: i32) -> String {
    use std::collections::{BTreeMap, BTreeSet};
    let mut rdr = csv::Reader::from_path(table).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (area, occ, emp, yr) = (col("AREA"), col("OCC_CODE"), col("TOT_EMP"), col("YEAR"));
    let mut cells = BTreeMap::new();
    let mut occs = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if rec[yr].parse::<i32>().unwrap() != year {
            continue;
        }
        occs.insert(rec[occ].to_string());
        cells.insert((rec[area].to_string(), rec[occ].to_string()), rec[emp].to_string());
    }
    let regions: BTreeSet<&String> = cells.keys().map(|(r, _)| r).collect();
    let mut out = String::from("region");
    for o in &occs {
        out.push(',');
        out.push_str(o);
    }
    out.push('\n');
    for r in regions {
        out.push_str(r);
        for o in &occs {
            out.push(',');
            out.push_str(cells.get(&(r.clone(), o.clone())).map_or("0", |v| v.as_str()));
        }
        out.push('\n');
    }
    out
}

#[test]
fn subcommands_chain_on_synthetic_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["synth", "--regions", "24", "--occupations", "50", "--topics", "3", "--seed", "7", "--noise", "0.01", "--years", "2", "--out", "corpus"], d);
    assert!(d.join("corpus/planted_h_2015.csv").exists());

    ok(&["ingest", "--input", "corpus/table.csv", "--crosswalk", "corpus/crosswalk.csv", "--out", "table.lscope"], d);
    ok(&["tfidf", "--table", "table.lscope", "--year", "2014", "--out", "tfidf14.csv"], d);
    ok(&["tfidf", "--table", "table.lscope", "--year", "2015", "--out", "tfidf15.lscope"], d);
    let top = ok(&["tfidf", "--table", "table.lscope", "--region", "R0001", "--top", "3"], d);
    ok(&["tfidf", "--table", "table.lscope", "--year", "2014", "--prune", "--out", "tfidf14_pruned.csv"], d);
    // a raw matrix weighs the same as the table it came from
    fs::write(d.join("raw14.csv"), raw_matrix_csv(&d.join("corpus/table.csv"), 2014)).unwrap();
    ok(&["tfidf", "--in", "raw14.csv", "--prune-empty", "--out", "tfidf14_raw.csv"], d);
    assert_eq!(fs::read(d.join("tfidf14_pruned.csv")).unwrap(), fs::read(d.join("tfidf14_raw.csv")).unwrap());
    assert_eq!(String::from_utf8(top.stdout).unwrap().lines().count(), 4);

    ok(&["fit", "--in", "tfidf14.csv", "--k", "3", "--year", "2014", "--out", "m14"], d);
    ok(&["fit", "--in", "tfidf15.lscope", "--k", "3", "--solver", "hals", "--year", "2015", "--out", "m15"], d);
    for f in ["w.csv", "h.csv", "trace.csv", "meta.json"] {
        assert!(d.join("m14").join(f).exists());
    }

    let topics = ok(&["topics", "--model", "m14", "--top-n", "5", "--labels", "a,b,c", "--out", "-"], d);
    let json: serde_json::Value = serde_json::from_slice(&topics.stdout).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);
    assert_eq!(json[1]["label"], "b");

    ok(&["compose", "--model", "m14", "--out", "comp.csv"], d);
    ok(&["prevalence", "--model", "m14", "--out", "prev.csv"], d);
    let one = ok(&["prevalence", "--model", "m14", "--topic", "2"], d);
    assert!(String::from_utf8(one.stdout).unwrap().starts_with("region,name,weight"));

    let align = ok(&["align", "--models", "m14", "m15", "--alpha", "0.5"], d);
    let json: serde_json::Value = serde_json::from_slice(&align.stdout).unwrap();
    assert_eq!(json["years"], serde_json::json!([2014, 2015]));

    ok(&["cluster", "--model", "m14", "--table", "table.lscope", "--top", "10", "--heatmap", "heat.csv", "--out", "tree.json"], d);
    let tree: serde_json::Value = serde_json::from_slice(&fs::read(d.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree["merges"].as_array().unwrap().len(), 9);
    assert!(tree["newick"].as_str().unwrap().ends_with(';'));
    assert_eq!(fs::read_to_string(d.join("heat.csv")).unwrap().lines().count(), 11);

    ok(&["lq", "--table", "table.lscope", "--sectors", "corpus/sectors.csv", "--out", "lq.csv"], d);
    let moran = ok(&["moran", "--values", "prev.csv", "lq.csv", "--coordinates", "corpus/coordinates.csv", "--knn", "4"], d);
    let text = String::from_utf8(moran.stdout).unwrap();
    assert!(text.starts_with("group,variable,morans_i,p_value"));
    assert!(text.contains("prev,topic_1"));
    assert!(text.contains("lq,S01"));
}

#[test]
fn run_writes_manifest_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["synth", "--regions", "20", "--occupations", "40", "--topics", "3", "--years", "2", "--out", "corpus"], d);
    fs::write(
        d.join("run.toml"),
        "k = 3\ntop_regions = 10\ncrosswalk = \"corpus/crosswalk.csv\"\ncoordinates = \"corpus/coordinates.csv\"\n\
         sectors = \"corpus/sectors.csv\"\nout_dir = \"out\"\n[[inputs]]\npath = \"corpus/table.csv\"\n[weights]\nknn = 3\n",
    )
    .unwrap();
    ok(&["run", "--config", "run.toml", "--seed", "3"], d);
    let first = fs::read(d.join("out/manifest.json")).unwrap();
    ok(&["run", "--config", "run.toml", "--seed", "3"], d);
    assert_eq!(first, fs::read(d.join("out/manifest.json")).unwrap());
    assert!(!d.join("out/.partial").exists());
    assert!(d.join("out/alignment.json").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    // config errors
    assert_eq!(laborscope(&["run"], d).status.code(), Some(2));
    assert_eq!(laborscope(&["fit", "--in", "x.csv", "--solver", "nope"], d).status.code(), Some(2));
    ok(&["synth", "--regions", "6", "--occupations", "10", "--topics", "2", "--out", "c"], d);
    ok(&["tfidf", "--table", "c/table.csv", "--out", "t.csv"], d);
    let too_many = laborscope(&["fit", "--in", "t.csv", "--k", "20", "--out", "m"], d);
    assert_eq!(too_many.status.code(), Some(2));
    assert!(!too_many.stderr.is_empty());
    assert!(too_many.stdout.is_empty());

    // data errors
    assert_eq!(laborscope(&["tfidf", "--table", "missing.csv"], d).status.code(), Some(3));
    fs::write(d.join("bad.csv"), "AREA,AREA_NAME\n1,x\n").unwrap();
    assert_eq!(laborscope(&["ingest", "--input", "bad.csv"], d).status.code(), Some(3));

    // multi-year run without a crosswalk
    ok(&["synth", "--regions", "6", "--occupations", "10", "--topics", "2", "--years", "2", "--out", "c2"], d);
    fs::write(d.join("r.toml"), "k = 2\nout_dir = \"o\"\n[[inputs]]\npath = \"c2/table.csv\"\n").unwrap();
    let run = laborscope(&["run", "--config", "r.toml"], d);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("ingest"));
    assert!(d.join("o/.partial").exists());
}
