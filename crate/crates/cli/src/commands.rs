use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use treegls::cov::covariance_csv;
use treegls::design::{band_table_csv, design_band_table, DEFAULT_BUDGET};
use treegls::gls::with_intercept;
use treegls::modelsel::scorecard_csv;
use treegls::report::{to_json_string, to_json_value, Cell, CsvTable};
use treegls::sim::phase_csv;
use treegls::{
    bic_corrected_m0, bic_corrected_m1, convergence_experiment, ess_intercept_with, ess_lineage,
    exhaustive_design, fit_shift_model, gls_fit, parse_newick, phase_transition_curve,
    random_design_bands, read_trait_table, simulate_bm, stepwise_design,
    symmetric_tree_eigenvalues, ConvergenceConfig, CovarianceSpec, DesignMethod, HeightPolicy,
    PhyloTree, ShiftMode, ShiftSpec, TraitTable,
};

use crate::{
    Command, DesignArgs, EigsArgs, EssArgs, FitArgs, Format, Method, Mode, Model, PhaseArgs,
    Policy, ScoreArgs, ShiftArgs, SimulateArgs,
};

/// Structured failure: printed as `{code, message, location}` on stderr.
#[derive(Debug)]
pub struct CliError {
    code: String,
    message: String,
    location: Option<String>,
}

impl CliError {
    pub fn usage(message: &str) -> Self {
        Self {
            code: "usage".into(),
            message: message.into(),
            location: None,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: "io".into(),
            message: e.to_string(),
            location: Some(path.display().to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "code": self.code, "message": self.message, "location": self.location }).to_string()
    }
}

impl From<treegls::Error> for CliError {
    fn from(e: treegls::Error) -> Self {
        Self {
            code: e.code().into(),
            message: e.to_string(),
            location: e.location().map(|b| format!("byte {b}")),
        }
    }
}

/// Attach the input file to a library error.
fn at(path: &Path) -> impl Fn(treegls::Error) -> CliError + '_ {
    move |e| {
        let mut c = CliError::from(e);
        c.location = Some(match c.location {
            Some(inner) => format!("{}:{inner}", path.display()),
            None => path.display().to_string(),
        });
        c
    }
}

type Out = Result<String, CliError>;

pub fn run(cmd: Command) -> Out {
    match cmd {
        Command::Ess(a) => ess(a),
        Command::Fit(a) => fit(a),
        Command::Shift(a) => shift(a),
        Command::Design(a) => design(a),
        Command::Score(a) => score(a),
        Command::Simulate(a) => simulate(a),
        Command::Phase(a) => phase(a),
        Command::Eigs(a) => eigs(a),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_tree(path: &Path) -> Result<PhyloTree, CliError> {
    parse_newick(&read(path)?).map_err(at(path))
}

fn load_traits(path: &Path, tree: &PhyloTree) -> Result<TraitTable, CliError> {
    read_trait_table(&read(path)?, tree).map_err(at(path))
}

fn policy(p: Policy) -> HeightPolicy {
    match p {
        Policy::Mean => HeightPolicy::Mean,
        Policy::Max => HeightPolicy::Max,
    }
}

fn mode(m: Mode) -> ShiftMode {
    match m {
        Mode::S => ShiftMode::PureShift,
        Mode::Sb => ShiftMode::ActualChange,
    }
}

fn shift_spec(tree: &PhyloTree, node: &str, m: Mode, p: Policy) -> Result<ShiftSpec, CliError> {
    let focal = tree.resolve_node(node)?;
    Ok(ShiftSpec::new(tree, focal, mode(m), policy(p))?)
}

/// One CSV row from the scalar leaves of a JSON object; nested keys are
/// joined with `.`.
fn flat_csv(value: &Value) -> String {
    fn walk(prefix: &str, v: &Value, keys: &mut Vec<String>, cells: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, inner) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, inner, keys, cells);
                }
            }
            Value::Array(_) => {}
            Value::Null => {
                keys.push(prefix.to_string());
                cells.push(String::new());
            }
            Value::String(s) => {
                keys.push(prefix.to_string());
                cells.push(s.clone());
            }
            other => {
                keys.push(prefix.to_string());
                cells.push(other.to_string());
            }
        }
    }
    let (mut keys, mut cells) = (Vec::new(), Vec::new());
    walk("", value, &mut keys, &mut cells);
    format!("{}\n{}\n", keys.join(","), cells.join(","))
}

fn emit<T: Serialize>(value: &T, format: Format) -> String {
    match format {
        Format::Json => to_json_string(value),
        Format::Csv => flat_csv(&to_json_value(value)),
    }
}

fn coefficient_csv(summary: &treegls::FitSummary) -> String {
    let mut t = CsvTable::new(&["term", "estimate", "std_error"]);
    for ((name, b), se) in summary
        .terms
        .iter()
        .zip(&summary.beta)
        .zip(&summary.std_error)
    {
        t.push(&[Cell::Text(name), Cell::Float(*b), Cell::Float(*se)]);
    }
    t.render()
}

fn ess(a: EssArgs) -> Out {
    let tree = load_tree(&a.tree)?;
    let intercept = ess_intercept_with(&tree, policy(a.t_policy))?;
    match a.lineage.shift_node {
        None => Ok(emit(&intercept, a.format)),
        Some(node) => {
            let spec = shift_spec(&tree, &node, a.lineage.shift_mode, a.t_policy)?;
            let lineage = ess_lineage(&tree, &spec, policy(a.t_policy))?;
            Ok(emit(
                &json!({ "intercept": to_json_value(&intercept), "lineage": to_json_value(&lineage) }),
                a.format,
            ))
        }
    }
}

fn fit(a: FitArgs) -> Out {
    let tree = load_tree(&a.tree)?;
    let table = load_traits(&a.traits, &tree)?;
    let cov = match a.model {
        Model::Bm => {
            if a.alpha.is_some() || a.stationary {
                return Err(CliError::usage(
                    "--alpha and --stationary apply only to --model ou",
                ));
            }
            CovarianceSpec::Bm
        }
        Model::Ou => {
            let alpha = a
                .alpha
                .ok_or_else(|| CliError::usage("--model ou needs --alpha"))?;
            CovarianceSpec::Ou {
                alpha,
                stationary: a.stationary,
            }
        }
    };
    let fit = gls_fit(&tree, &with_intercept(&table.x), &table.y, cov)?;
    if let Some(path) = &a.dump_cov {
        let v = cov.matrix(&tree)?;
        fs::write(path, covariance_csv(&tree, &v)).map_err(|e| CliError::io(path, e))?;
    }
    let mut terms = vec!["intercept".to_string()];
    terms.extend(table.covariates.iter().cloned());
    let summary = fit.summary(terms)?;
    Ok(match a.format {
        Format::Json => {
            to_json_string(&json!({ "response": table.response, "fit": to_json_value(&summary) }))
        }
        Format::Csv => coefficient_csv(&summary),
    })
}

fn shift(a: ShiftArgs) -> Out {
    let tree = load_tree(&a.tree)?;
    let table = load_traits(&a.traits, &tree)?;
    let spec = shift_spec(&tree, &a.shift_node, a.shift_mode, a.t_policy)?;
    let fit = fit_shift_model(&tree, &table.x, &table.y, &spec)?;
    let mut terms = vec!["intercept".to_string(), "shift".to_string()];
    terms.extend(table.covariates.iter().cloned());
    let summary = fit.fit.summary(terms)?;
    if a.format == Format::Csv {
        return Ok(coefficient_csv(&summary));
    }
    let labels = tree.tip_labels();
    let mut notes = Vec::new();
    if spec.mode == ShiftMode::ActualChange {
        notes.push("the intercept is the state at the original root, which is the root of the bottom subtree");
    }
    if spec.mode == ShiftMode::PureShift && !table.covariates.is_empty() {
        notes.push("covariates alongside a pure shift: fitted the same way, but outside the settings the theory covers");
    }
    let report = json!({
        "response": table.response,
        "shift_node": a.shift_node,
        "mode": spec.mode,
        "top_tips": spec.top_tips.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        "t1": spec.t1,
        "top_height": spec.top_height,
        "k_top": spec.k_top,
        "t_top": spec.t_top,
        "shift_estimate": fit.shift_estimate(),
        "shift_std_error": summary.std_error[1],
        "fit": to_json_value(&summary),
        "notes": notes,
    });
    Ok(to_json_string(&report))
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::usage(&format!("{what} needs --seed")))
}

fn design(a: DesignArgs) -> Out {
    let tree = load_tree(&a.tree)?;
    if a.format == Format::Csv {
        let seed = require_seed(a.seed, "the band table")?;
        let (bands, optima) = design_band_table(&tree, a.size, a.reps, seed)?;
        return Ok(band_table_csv(&bands, &optima));
    }
    Ok(match a.method {
        Method::Forward => to_json_string(&stepwise_design(&tree, a.size, DesignMethod::Forward)?),
        Method::Backward => {
            to_json_string(&stepwise_design(&tree, a.size, DesignMethod::Backward)?)
        }
        Method::Exhaustive => to_json_string(&exhaustive_design(&tree, a.size, DEFAULT_BUDGET)?),
        Method::Random => {
            let seed = require_seed(a.seed, "a random design")?;
            to_json_string(&random_design_bands(
                &tree,
                a.size,
                a.reps,
                seed,
                HeightPolicy::Mean,
            )?)
        }
    })
}

fn score(a: ScoreArgs) -> Out {
    let tree = load_tree(&a.tree)?;
    let table = load_traits(&a.traits, &tree)?;
    let f0 = gls_fit(
        &tree,
        &with_intercept(&table.x),
        &table.y,
        CovarianceSpec::Bm,
    )?;
    let mut scores = vec![bic_corrected_m0(
        &f0,
        &ess_intercept_with(&tree, policy(a.t_policy))?,
    )?];
    if let Some(node) = &a.lineage.shift_node {
        let spec = shift_spec(&tree, node, a.lineage.shift_mode, a.t_policy)?;
        let f1 = fit_shift_model(&tree, &table.x, &table.y, &spec)?;
        scores.push(bic_corrected_m1(
            &f1,
            &ess_lineage(&tree, &spec, policy(a.t_policy))?,
        )?);
    }
    Ok(match a.format {
        Format::Json => to_json_string(&scores),
        Format::Csv => scorecard_csv(&scores),
    })
}

fn simulate(a: SimulateArgs) -> Out {
    match (&a.config, &a.tree) {
        (Some(path), None) => {
            if a.seed.is_some() {
                return Err(CliError::usage(
                    "the experiment seed is set in the config file",
                ));
            }
            let cfg = ConvergenceConfig::parse(&read(path)?).map_err(at(path))?;
            let report = convergence_experiment(&cfg)?;
            Ok(match a.format {
                Format::Json => to_json_string(&report),
                Format::Csv => report.to_csv(),
            })
        }
        (None, Some(path)) => {
            let tree = load_tree(path)?;
            let seed = require_seed(a.seed, "simulate --tree")?;
            let y = simulate_bm(&tree, 0.0, 1.0, seed)?;
            let labels = tree.tip_labels();
            Ok(match a.format {
                Format::Csv => {
                    let mut t = CsvTable::new(&["tip", "y"]);
                    for (l, v) in labels.iter().zip(y.iter()) {
                        t.push(&[Cell::Text(l), Cell::Float(*v)]);
                    }
                    t.render()
                }
                Format::Json => {
                    to_json_string(&json!({ "seed": seed, "tip": labels, "y": y.as_slice() }))
                }
            })
        }
        _ => Err(CliError::usage("simulate needs a CONFIG file or --tree")),
    }
}

fn phase(a: PhaseArgs) -> Out {
    let rows = phase_transition_curve(a.d, a.q, a.m_max)?;
    Ok(match a.format {
        Format::Csv => phase_csv(&rows),
        Format::Json => to_json_string(&rows),
    })
}

fn eigs(a: EigsArgs) -> Out {
    let levels = symmetric_tree_eigenvalues(&a.d, &a.t)?;
    Ok(match a.format {
        Format::Csv => {
            let mut t = CsvTable::new(&["level", "eigenvalue", "multiplicity"]);
            for (i, (l, m)) in levels.iter().enumerate() {
                t.push(&[
                    Cell::Int(i as u64 + 1),
                    Cell::Float(*l),
                    Cell::Int(*m as u64),
                ]);
            }
            t.render()
        }
        Format::Json => {
            let rows: Vec<Value> = levels
                .iter()
                .enumerate()
                .map(|(i, (l, m))| json!({ "level": i + 1, "eigenvalue": l, "multiplicity": m }))
                .collect();
            to_json_string(&rows)
        }
    })
}
