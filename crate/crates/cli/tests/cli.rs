use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::{json, Value};
use treegls::gls::with_intercept;
use treegls::report::{to_json_string, to_json_value};
use treegls::*;

const TREE: &str = "(((A:0.2,B:0.2)ab:0.3,C:0.5):0.5,((D:0.4,E:0.4):0.2,F:0.6):0.4)r;";
const TRAITS: &str =
    "tip,y,x1\nA,2.1,0.3\nB,2.9,-0.2\nC,0.4,1.1\nD,-0.3,0.5\nE,0.2,-0.7\nF,0.8,0.1\n";

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.nwk"), TREE).unwrap();
        std::fs::write(dir.path().join("t.csv"), TRAITS).unwrap();
        std::fs::write(dir.path().join("star4.nwk"), "(A:1,B:1,C:1,D:1);").unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn tree(&self) -> String {
        self.path("t.nwk").display().to_string()
    }

    fn traits(&self) -> String {
        self.path("t.csv").display().to_string()
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treegls"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn err_json(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(1), "{args:?}");
    assert!(out.stdout.is_empty());
    serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap()
}

fn lib() -> (PhyloTree, TraitTable) {
    let t = parse_newick(TREE).unwrap();
    let table = read_trait_table(TRAITS, &t).unwrap();
    (t, table)
}

#[test]
fn ess_star_is_n() {
    let f = Fixture::new();
    let v = ok_json(&["ess", "--tree", f.path("star4.nwk").to_str().unwrap()]);
    assert_eq!(v["n_e"].to_string(), "4.0000000000000000e+0");
    assert_eq!(v["n"], 4);
}

#[test]
fn ess_matches_library() {
    let f = Fixture::new();
    let (t, _) = lib();
    assert_eq!(
        ok_json(&["ess", "--tree", &f.tree()]),
        to_json_value(&ess_intercept(&t).unwrap())
    );
    let max = ok_json(&["ess", "--tree", &f.tree(), "--t-policy", "max"]);
    assert_eq!(
        max,
        to_json_value(&ess_intercept_with(&t, HeightPolicy::Max).unwrap())
    );
    let v = ok_json(&[
        "ess",
        "--tree",
        &f.tree(),
        "--shift-node",
        "ab",
        "--shift-mode",
        "S",
    ]);
    let spec = ShiftSpec::new(
        &t,
        t.resolve_node("ab").unwrap(),
        ShiftMode::PureShift,
        HeightPolicy::Mean,
    )
    .unwrap();
    assert_eq!(
        v["lineage"],
        to_json_value(&ess_lineage(&t, &spec, HeightPolicy::Mean).unwrap())
    );
}

#[test]
fn fit_matches_library() {
    let f = Fixture::new();
    let (t, table) = lib();
    let fit = gls_fit(&t, &with_intercept(&table.x), &table.y, CovarianceSpec::Bm).unwrap();
    let expect = to_json_value(&fit.summary(vec!["intercept".into(), "x1".into()]).unwrap());
    let v = ok_json(&["fit", "--tree", &f.tree(), "--traits", &f.traits()]);
    assert_eq!(v["fit"], expect);
    assert_eq!(v["response"], "y");

    let ou = gls_fit(
        &t,
        &with_intercept(&table.x),
        &table.y,
        CovarianceSpec::Ou {
            alpha: 1.5,
            stationary: true,
        },
    )
    .unwrap();
    let v = ok_json(&[
        "fit",
        "--tree",
        &f.tree(),
        "--traits",
        &f.traits(),
        "--model",
        "ou",
        "--alpha",
        "1.5",
        "--stationary",
    ]);
    assert_eq!(
        v["fit"],
        to_json_value(&ou.summary(vec!["intercept".into(), "x1".into()]).unwrap())
    );
    assert_eq!(
        v["fit"]["covariance"],
        to_json_value(&json!({"kind": "ou", "alpha": 1.5, "stationary": true}))
    );

    let csv = ok(&[
        "fit",
        "--tree",
        &f.tree(),
        "--traits",
        &f.traits(),
        "--format",
        "csv",
    ]);
    assert!(csv.starts_with("term,estimate,std_error\nintercept,"));
}

#[test]
fn fit_dumps_covariance_only_when_asked() {
    let f = Fixture::new();
    let before: Vec<_> = std::fs::read_dir(f.dir.path()).unwrap().collect();
    ok(&["fit", "--tree", &f.tree(), "--traits", &f.traits()]);
    assert_eq!(
        std::fs::read_dir(f.dir.path()).unwrap().count(),
        before.len()
    );
    let dump = f.path("v.csv");
    ok(&[
        "fit",
        "--tree",
        &f.tree(),
        "--traits",
        &f.traits(),
        "--dump-cov",
        dump.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&dump).unwrap();
    let (t, _) = lib();
    assert_eq!(
        text,
        treegls::cov::covariance_csv(&t, &bm_covariance(&t).unwrap())
    );
}

#[test]
fn shift_matches_library() {
    let f = Fixture::new();
    let (t, table) = lib();
    for (flag, mode) in [("S", ShiftMode::PureShift), ("SB", ShiftMode::ActualChange)] {
        let spec =
            ShiftSpec::new(&t, t.resolve_node("A,B").unwrap(), mode, HeightPolicy::Mean).unwrap();
        let fit = fit_shift_model(&t, &table.x, &table.y, &spec).unwrap();
        let v = ok_json(&[
            "shift",
            "--tree",
            &f.tree(),
            "--traits",
            &f.traits(),
            "--shift-node",
            "A,B",
            "--shift-mode",
            flag,
        ]);
        let expect = fit
            .fit
            .summary(vec!["intercept".into(), "shift".into(), "x1".into()])
            .unwrap();
        assert_eq!(v["fit"], to_json_value(&expect));
        assert_eq!(v["mode"], flag);
        assert_eq!(v["shift_estimate"], to_json_value(&fit.shift_estimate()));
        assert_eq!(v["top_tips"], json!(["A", "B"]));
    }
}

#[test]
fn score_matches_library() {
    let f = Fixture::new();
    let (t, table) = lib();
    let f0 = gls_fit(&t, &with_intercept(&table.x), &table.y, CovarianceSpec::Bm).unwrap();
    let s0 = bic_corrected_m0(&f0, &ess_intercept(&t).unwrap()).unwrap();
    let spec = ShiftSpec::new(
        &t,
        t.resolve_node("ab").unwrap(),
        ShiftMode::ActualChange,
        HeightPolicy::Mean,
    )
    .unwrap();
    let f1 = fit_shift_model(&t, &table.x, &table.y, &spec).unwrap();
    let s1 = bic_corrected_m1(&f1, &ess_lineage(&t, &spec, HeightPolicy::Mean).unwrap()).unwrap();
    let v = ok_json(&[
        "score",
        "--tree",
        &f.tree(),
        "--traits",
        &f.traits(),
        "--shift-node",
        "ab",
    ]);
    assert_eq!(v, to_json_value(&vec![s0.clone(), s1.clone()]));
    let csv = ok(&[
        "score",
        "--tree",
        &f.tree(),
        "--traits",
        &f.traits(),
        "--shift-node",
        "ab",
        "--format",
        "csv",
    ]);
    assert_eq!(csv, treegls::modelsel::scorecard_csv(&[s0, s1]));
}

#[test]
fn design_matches_library() {
    let f = Fixture::new();
    let (t, _) = lib();
    for (flag, method) in [
        ("forward", DesignMethod::Forward),
        ("backward", DesignMethod::Backward),
    ] {
        let v = ok_json(&[
            "design",
            "--tree",
            &f.tree(),
            "--size",
            "3",
            "--method",
            flag,
        ]);
        assert_eq!(v, to_json_value(&stepwise_design(&t, 3, method).unwrap()));
    }
    let v = ok_json(&[
        "design",
        "--tree",
        &f.tree(),
        "--size",
        "3",
        "--method",
        "exhaustive",
    ]);
    assert_eq!(
        v,
        to_json_value(&exhaustive_design(&t, 3, treegls::design::DEFAULT_BUDGET).unwrap())
    );
    let v = ok_json(&[
        "design",
        "--tree",
        &f.tree(),
        "--size",
        "4",
        "--method",
        "random",
        "--reps",
        "100",
        "--seed",
        "9",
    ]);
    assert_eq!(
        v,
        to_json_value(&random_design_bands(&t, 4, 100, 9, HeightPolicy::Mean).unwrap())
    );
    let csv = ok(&[
        "design",
        "--tree",
        &f.tree(),
        "--size",
        "5",
        "--reps",
        "100",
        "--seed",
        "9",
        "--format",
        "csv",
    ]);
    let (bands, optima) = treegls::design::design_band_table(&t, 5, 100, 9).unwrap();
    assert_eq!(csv, treegls::design::band_table_csv(&bands, &optima));
    assert_eq!(
        err_json(&[
            "design",
            "--tree",
            &f.tree(),
            "--size",
            "3",
            "--method",
            "random"
        ])["code"],
        "usage"
    );
}

#[test]
fn simulate_matches_library() {
    let f = Fixture::new();
    let cfg = "family = fixed_root\nroot_degree = 2\nroot_edge = 0.3\nsizes = 8, 16\nreps = 40\nseed = 5\nbeta = 1, 0.5\n";
    std::fs::write(f.path("exp.cfg"), cfg).unwrap();
    let report = convergence_experiment(&ConvergenceConfig::parse(cfg).unwrap()).unwrap();
    let p = f.path("exp.cfg");
    assert_eq!(ok(&["simulate", p.to_str().unwrap()]), report.to_csv());
    assert_eq!(
        ok(&["simulate", p.to_str().unwrap(), "--format", "json"]).trim_end(),
        to_json_string(&report)
    );

    let (t, _) = lib();
    let y = simulate_bm(&t, 0.0, 1.0, 17).unwrap();
    let v = ok_json(&[
        "simulate",
        "--tree",
        &f.tree(),
        "--seed",
        "17",
        "--format",
        "json",
    ]);
    assert_eq!(v["y"], to_json_value(&y.as_slice()));
    assert_eq!(
        err_json(&["simulate", "--tree", &f.tree()])["code"],
        "usage"
    );
    std::fs::write(f.path("bad.cfg"), "family = star\nsizes = 8\nreps = 10\n").unwrap();
    let e = err_json(&["simulate", f.path("bad.cfg").to_str().unwrap()]);
    assert_eq!(e["code"], "config");
    assert!(e["location"].as_str().unwrap().ends_with("bad.cfg"));
}

#[test]
fn phase_and_eigs_match_library() {
    let csv = ok(&["phase", "--d", "2", "--q", "0.8", "--m-max", "20"]);
    assert_eq!(
        csv,
        treegls::sim::phase_csv(&phase_transition_curve(2, 0.8, 20).unwrap())
    );
    assert_eq!(
        csv,
        ok(&["phase", "--d", "2", "--q", "0.8", "--m-max", "20"])
    );
    let v = ok_json(&["eigs", "--d", "3,2", "--t", "0.4,0.6"]);
    let e = symmetric_tree_eigenvalues(&[3, 2], &[0.4, 0.6]).unwrap();
    for (i, (l, m)) in e.iter().enumerate() {
        assert_eq!(v[i]["eigenvalue"], to_json_value(l));
        assert_eq!(v[i]["multiplicity"], json!(m));
    }
    assert_eq!(
        err_json(&["phase", "--d", "2", "--q", "1.5", "--m-max", "5"])["code"],
        "invalid_parameter"
    );
    assert_eq!(
        err_json(&["eigs", "--d", "1", "--t", "1"])["code"],
        "invalid_parameter"
    );
}

#[test]
fn errors_are_structured() {
    let f = Fixture::new();
    let write = |name: &str, text: &str| {
        std::fs::write(f.path(name), text).unwrap();
        f.path(name).display().to_string()
    };
    let syntax = write("bad.nwk", "((A:1,B:1");
    let e = err_json(&["ess", "--tree", &syntax]);
    assert_eq!(e["code"], "newick_syntax");
    assert!(e["location"].as_str().unwrap().contains("byte"));
    let neg = write("neg.nwk", "(A:1,B:-1);");
    assert_eq!(
        err_json(&["ess", "--tree", &neg])["code"],
        "negative_branch_length"
    );
    let missing = write("missing.csv", "tip,y\nA,1\n");
    assert_eq!(
        err_json(&["fit", "--tree", &f.tree(), "--traits", &missing])["code"],
        "trait_table"
    );
    assert_eq!(
        err_json(&["fit", "--tree", "/nonexistent.nwk", "--traits", &f.traits()])["code"],
        "io"
    );
    assert_eq!(
        err_json(&[
            "fit",
            "--tree",
            &f.tree(),
            "--traits",
            &f.traits(),
            "--model",
            "ou"
        ])["code"],
        "usage"
    );
    assert_eq!(
        err_json(&[
            "shift",
            "--tree",
            &f.tree(),
            "--traits",
            &f.traits(),
            "--shift-node",
            "r"
        ])["code"],
        "invalid_parameter"
    );
    assert_eq!(
        err_json(&[
            "shift",
            "--tree",
            &f.tree(),
            "--traits",
            &f.traits(),
            "--shift-node",
            "zz"
        ])["code"],
        "unknown_node"
    );
    assert_eq!(
        err_json(&["design", "--tree", &f.tree(), "--size", "9"])["code"],
        "invalid_parameter"
    );
    assert_eq!(err_json(&["bogus"])["code"], "usage");
    let flat = write("flat.csv", "tip,y\nA,1\nB,1\nC,1\nD,1\nE,1\nF,1\n");
    assert_eq!(
        err_json(&["score", "--tree", &f.tree(), "--traits", &flat])["code"],
        "degenerate_likelihood"
    );
}

#[test]
fn seeded_commands_ignore_thread_count() {
    let f = Fixture::new();
    let cfg = f.path("exp.cfg");
    std::fs::write(
        &cfg,
        "family = star\nsizes = 8, 16, 32\nreps = 200\nseed = 11\nbeta = 0, 1\n",
    )
    .unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["simulate".into(), cfg.display().to_string()],
        vec![
            "design".into(),
            "--tree".into(),
            f.tree(),
            "--size".into(),
            "4".into(),
            "--format".into(),
            "csv".into(),
            "--seed".into(),
            "3".into(),
        ],
        vec![
            "design".into(),
            "--tree".into(),
            f.tree(),
            "--size".into(),
            "3".into(),
            "--method".into(),
            "exhaustive".into(),
        ],
    ];
    for args in cases {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        let one = ok(&[&["--threads", "1"], a.as_slice()].concat());
        let eight = ok(&[&["--threads", "8"], a.as_slice()].concat());
        assert_eq!(one, eight, "{a:?}");
        assert_eq!(one, ok(&a), "{a:?}");
    }
}
