use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::artifact::{write_csv_artifact, write_json, ModelArtifact, Provenance};
use super::benchmark::{format_summary_table, run_benchmark, summarize, BenchmarkConfig};
use super::io::{
    csv_error, csv_reader, data_csv_bytes, groups_csv_bytes, parse_data_csv, parse_groups_csv, parse_number,
    read_bytes, rows_csv_bytes, write_bytes, DataTable,
};
use super::preprocess::{column_variances, selection_frequency, variance_filter, FrequencyConfig};
use super::*;
use crate::model_selection::{cv_predictive_loglik_until, default_lambdas, make_folds, refit_at_best, CvSettings};
use crate::penalty::PenaltyFamily;
use crate::simulate::{scenario_presets, SignMode, SimulationScenario, Simulator};
use crate::solver::{fit_path, fit_penalized};

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Path(a) => cmd_path(a),
        Command::FilterVariance(a) => cmd_filter_variance(a),
        Command::SelectFrequency(a) => cmd_select_frequency(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configuration serializes")
}

/// Data table, groups, and a provenance block holding both digests.
fn load_inputs(
    input: &InputArgs,
    command: &str,
    seed: Option<u64>,
) -> Result<(DataTable, GroupStructure, Provenance), CliError> {
    let bytes = read_bytes(&input.data)?;
    let table = parse_data_csv(&bytes)?;
    let mut prov = Provenance::new(command, seed, Value::Null);
    prov.add_input("data", &input.data, &bytes);
    let groups = match &input.groups {
        Some(path) => {
            let gbytes = read_bytes(path)?;
            prov.add_input("groups", path, &gbytes);
            parse_groups_csv(&gbytes, &table.names)?
        }
        None => GroupStructure::with_names((0..table.names.len()).collect(), table.names.clone())?,
    };
    Ok((table, groups, prov))
}

fn ipf_config(family: &FamilyArgs, solver: &SolverConfig, cv: &CvSettings) -> IpfConfig {
    IpfConfig {
        step_one: family.ipf_step_one,
        solver: solver.clone(),
        cv: cv.clone(),
        ..IpfConfig::default()
    }
}

fn patience(m: usize) -> Option<usize> {
    (m > 0).then_some(m)
}

fn resolve_lambdas(
    grid: &GridArgs,
    data: &SurvivalDataset,
    groups: &GroupStructure,
    spec: &PenaltySpec,
) -> Result<Vec<f64>, CliError> {
    match &grid.lambdas {
        Some(l) => Ok(l.0.clone()),
        None => Ok(default_lambdas(
            data,
            groups,
            spec,
            &CvSettings {
                grid_size: grid.grid_size,
                grid_min_ratio: grid.grid_min_ratio,
                ..CvSettings::default()
            },
        )?),
    }
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    let (table, groups, mut prov) = load_inputs(&a.input, "fit", Some(a.seed))?;
    let solver = a.solver.config();
    let cv = CvSettings {
        seed: a.seed,
        ..CvSettings::default()
    };
    let template = family_template(
        a.family.family,
        a.family.alpha,
        a.family.ipf_factors.clone().map(|l| l.0),
        &table.dataset,
        &groups,
        &ipf_config(&a.family, &solver, &cv),
    )?;
    let spec = template.with_lambda(a.lambda);
    let model = fit_penalized(&table.dataset, &groups, &spec, &solver)?;
    prov.config = json!({ "penalty": spec, "solver": solver });
    write_json(&a.out, &ModelArtifact::new(&model, &table.names, &groups, prov))?;
    println!(
        "{} lambda={} nonzero={}/{} converged={} sweeps={}",
        spec.family,
        a.lambda,
        model.support().len(),
        model.beta.len(),
        model.converged,
        model.sweeps_used
    );
    Ok(())
}

#[derive(Serialize)]
struct CvArtifact<'a> {
    family: PenaltyFamily,
    k: usize,
    repeats: usize,
    lambdas: &'a [f64],
    mean_cv_loglik: &'a [f64],
    se_cv_loglik: &'a [f64],
    best_lambda: f64,
    best_index: usize,
    fold_assignments: &'a [Vec<usize>],
    provenance: &'a Provenance,
}

fn cmd_cv(a: CvArgs) -> Result<(), CliError> {
    let (table, groups, mut prov) = load_inputs(&a.input, "cv", Some(a.folds.seed))?;
    let data = &table.dataset;
    let solver = a.solver.config();
    let settings = CvSettings {
        k: a.folds.k,
        repeats: a.folds.repeats,
        seed: a.folds.seed,
        grid_size: a.grid.grid_size,
        grid_min_ratio: a.grid.grid_min_ratio,
        patience: patience(a.folds.patience),
    };
    let plan = make_folds(data, settings.k, settings.repeats, settings.seed)?;
    let template = family_template(
        a.family.family,
        a.family.alpha,
        a.family.ipf_factors.clone().map(|l| l.0),
        data,
        &groups,
        &ipf_config(&a.family, &solver, &settings),
    )?;
    let lambdas = resolve_lambdas(&a.grid, data, &groups, &template)?;
    let cv = cv_predictive_loglik_until(data, &groups, &template, &solver, &plan, &lambdas, settings.patience)?;
    let model = refit_at_best(data, &groups, &template, &solver, &cv)?;
    prov.config = json!({ "penalty": template, "solver": solver, "cv": settings, "lambdas": lambdas });
    write_json(
        &a.out.join("cv.json"),
        &CvArtifact {
            family: template.family,
            k: plan.k,
            repeats: plan.repeats,
            lambdas: &cv.lambdas,
            mean_cv_loglik: &cv.mean_cv_loglik,
            se_cv_loglik: &cv.se_cv_loglik,
            best_lambda: cv.best_lambda,
            best_index: cv.best_index,
            fold_assignments: &plan.fold_assignments,
            provenance: &prov,
        },
    )?;
    write_json(&a.out.join("model.json"), &ModelArtifact::new(&model, &table.names, &groups, prov))?;
    println!(
        "{} best_lambda={} cv_loglik={:.6} nonzero={}/{}",
        template.family,
        cv.best_lambda,
        cv.mean_cv_loglik[cv.best_index],
        model.support().len(),
        model.beta.len()
    );
    Ok(())
}

fn scenario_from_args(a: &SimulateArgs) -> Result<SimulationScenario, CliError> {
    let mut sc = match (a.scenario, &a.group_sizes, &a.signals_per_group) {
        (Some(id), None, None) => scenario_presets(id, a.signals)?,
        (None, Some(List(sizes)), Some(List(signals))) => {
            if sizes.len() != signals.len() {
                return Err(CliError::Usage(format!(
                    "{} group sizes but {} signal counts",
                    sizes.len(),
                    signals.len()
                )));
            }
            SimulationScenario {
                group_sizes: sizes.clone(),
                signals_per_group: signals.clone(),
                ..SimulationScenario::default()
            }
        }
        (None, None, None) => scenario_presets(1, a.signals)?,
        _ => {
            return Err(CliError::Usage(
                "give either --scenario or both --group-sizes and --signals-per-group".into(),
            ))
        }
    };
    if let Some(n) = a.n {
        sc.n = n;
    }
    if let Some(r) = a.within_rho {
        sc.within_rho = r;
    }
    if let Some(r) = a.between_rho {
        sc.between_rho = r;
    }
    if let Some(r) = a.censor_rate {
        sc.censor_rate = r;
    }
    if let Some(m) = a.baseline_median {
        sc.baseline_median = m;
    }
    if a.positive {
        sc.sign_mode = SignMode::Positive;
    }
    sc.seed = a.seed;
    sc.validate()?;
    Ok(sc)
}

fn variable_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let sc = scenario_from_args(&a)?;
    let sim = Simulator::new(&sc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let truth = sim.generate_with(&mut rng)?;
    let names = variable_names(sc.p());
    let mut prov = Provenance::new("simulate", Some(sc.seed), to_value(&sc));
    prov.config["validation_n"] = json!(a.validation_n);

    let data_path = a.out.join("data.csv");
    write_csv_artifact(&data_path, &data_csv_bytes(&names, &truth.dataset)?, sc.n, &prov)?;
    write_csv_artifact(
        &a.out.join("groups.csv"),
        &groups_csv_bytes(&names, &truth.groups)?,
        sc.p(),
        &prov,
    )?;
    if let Some(nv) = a.validation_n {
        let valid = sim.draw_dataset(nv, &truth.true_beta, &mut rng)?;
        write_csv_artifact(&a.out.join("validation.csv"), &data_csv_bytes(&names, &valid)?, nv, &prov)?;
    }
    let beta: serde_json::Map<String, Value> = names
        .iter()
        .zip(&truth.true_beta)
        .map(|(n, &b)| (n.clone(), json!(b)))
        .collect();
    let support: Vec<&str> = truth.true_support.iter().map(|&j| names[j].as_str()).collect();
    write_json(
        &a.out.join("truth.json"),
        &json!({
            "true_beta": beta,
            "support": support,
            "support_indices": truth.true_support,
            "groups": { "names": truth.groups.names(), "sizes": truth.groups.sizes() },
            "scenario": sc,
            "seed": sc.seed,
            "cross_group_covariance": "between_rho^|i-j| with global column indices",
            "provenance": prov,
        }),
    )?;
    println!(
        "simulated n={} p={} signals={} events={}",
        sc.n,
        sc.p(),
        truth.true_support.len(),
        truth.dataset.n_events()
    );
    Ok(())
}

#[derive(Serialize)]
struct ResultRow<'a> {
    scenario: &'a str,
    model: &'a str,
    metric: &'a str,
    replicate: usize,
    value: f64,
}

#[derive(Serialize)]
struct SummaryCsvRow<'a> {
    scenario: &'a str,
    model: &'a str,
    metric: &'a str,
    count: usize,
    mean: f64,
    se: f64,
}

fn parse_scenarios(s: &str) -> Result<Vec<(u8, usize)>, CliError> {
    s.split(',')
        .map(|item| {
            let (a, b) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("scenario `{item}` is not `id:signals`")))?;
            let id = a.parse().map_err(|_| CliError::Usage(format!("bad scenario id `{a}`")))?;
            let signals = b.parse().map_err(|_| CliError::Usage(format!("bad signal count `{b}`")))?;
            Ok((id, signals))
        })
        .collect()
}

fn parse_families(s: &str) -> Result<Vec<PenaltyFamily>, CliError> {
    s.split(',')
        .map(|f| parse_family(f.trim()).map_err(CliError::Usage))
        .collect()
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<(), CliError> {
    if a.replicates == 0 {
        return Err(CliError::Usage("replicates must be at least 1".into()));
    }
    let scenarios = parse_scenarios(&a.scenarios)?;
    let families = parse_families(&a.families)?;
    let mut rows_out = Vec::new();
    let mut summary_out = Vec::new();
    let mut text = String::new();
    let mut runs = Vec::new();
    let mut results: Vec<(String, Vec<crate::metrics::MetricRecord>)> = Vec::new();
    for &(id, signals) in &scenarios {
        let mut scenario = scenario_presets(id, signals)?;
        if let Some(n) = a.n {
            scenario.n = n;
        }
        scenario.seed = a.seed;
        let config = BenchmarkConfig {
            scenario,
            families: families.clone(),
            replicates: a.replicates,
            seed: a.seed,
            n_validation: a.n_validation,
            solver: a.solver.config(),
            cv: CvSettings {
                k: a.k,
                repeats: 1,
                seed: a.seed,
                grid_size: a.grid_size,
                grid_min_ratio: a.grid_min_ratio,
                patience: patience(a.patience),
            },
            ipf_repeats: a.ipf_repeats,
            alpha: a.alpha,
            ipf_step_one: a.ipf_step_one,
            ibs_horizon: a.ibs_horizon,
        };
        let outcomes = run_benchmark(&config)?;
        let label = format!("{id}:{signals}");
        let failures: Vec<Value> = outcomes
            .iter()
            .flat_map(|o| {
                o.failures
                    .iter()
                    .map(move |(m, e)| json!({ "replicate": o.replicate, "model": m, "error": e }))
            })
            .collect();
        for f in &failures {
            eprintln!("scenario {label}: replicate failed: {f}");
        }
        let records: Vec<_> = outcomes.into_iter().flat_map(|o| o.records).collect();
        runs.push(json!({ "scenario": label, "config": config, "failures": failures }));
        results.push((label, records));
    }
    for (label, records) in &results {
        rows_out.extend(records.iter().map(|r| ResultRow {
            scenario: label,
            model: &r.model,
            metric: &r.metric,
            replicate: r.replicate,
            value: r.value,
        }));
        let summary = summarize(records);
        text.push_str(&format!("scenario {label}\n{}\n", format_summary_table(&summary)));
        summary_out.push((label, summary));
    }
    let summary_rows: Vec<SummaryCsvRow> = summary_out
        .iter()
        .flat_map(|(label, s)| {
            s.iter().map(move |r| SummaryCsvRow {
                scenario: label,
                model: &r.model,
                metric: &r.metric,
                count: r.count,
                mean: r.mean,
                se: r.se,
            })
        })
        .collect();
    let prov = Provenance::new("benchmark", Some(a.seed), json!({ "runs": runs }));
    write_csv_artifact(&a.out.join("results.csv"), &rows_csv_bytes(&rows_out)?, rows_out.len(), &prov)?;
    write_csv_artifact(
        &a.out.join("summary.csv"),
        &rows_csv_bytes(&summary_rows)?,
        summary_rows.len(),
        &prov,
    )?;
    write_bytes(&a.out.join("summary.txt"), text.as_bytes())?;
    write_json(&a.out.join("benchmark.json"), &prov)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct PathRow<'a> {
    lambda: f64,
    variable: &'a str,
    coefficient: f64,
}

fn cmd_path(a: PathArgs) -> Result<(), CliError> {
    let (table, groups, mut prov) = load_inputs(&a.input, "path", Some(a.seed))?;
    let data = &table.dataset;
    let solver = a.solver.config();
    let cv = CvSettings {
        seed: a.seed,
        ..CvSettings::default()
    };
    let template = family_template(
        a.family.family,
        a.family.alpha,
        a.family.ipf_factors.clone().map(|l| l.0),
        data,
        &groups,
        &ipf_config(&a.family, &solver, &cv),
    )?;
    let lambdas = resolve_lambdas(&a.grid, data, &groups, &template)?;
    let models = fit_path(data, &groups, &template, &solver, &lambdas)?;
    let rows: Vec<PathRow> = models
        .iter()
        .flat_map(|m| {
            table.names.iter().zip(&m.beta).map(|(name, &b)| PathRow {
                lambda: m.lambda(),
                variable: name,
                coefficient: b,
            })
        })
        .collect();
    prov.config = json!({ "penalty": template, "solver": solver, "lambdas": lambdas });
    write_csv_artifact(&a.out, &rows_csv_bytes(&rows)?, rows.len(), &prov)?;
    println!("{} path: {} lambdas x {} variables", template.family, lambdas.len(), table.names.len());
    Ok(())
}

fn cmd_filter_variance(a: FilterArgs) -> Result<(), CliError> {
    let bytes = read_bytes(&a.data)?;
    let table = parse_data_csv(&bytes)?;
    let mut prov = Provenance::new("filter-variance", None, Value::Null);
    prov.add_input("data", &a.data, &bytes);
    let groups = match &a.groups {
        Some(path) => {
            let gbytes = read_bytes(path)?;
            prov.add_input("groups", path, &gbytes);
            Some(parse_groups_csv(&gbytes, &table.names)?)
        }
        None => None,
    };
    let mut protected = vec![false; table.names.len()];
    for name in &a.protected {
        let g = groups
            .as_ref()
            .and_then(|g| g.names().iter().position(|n| n == name))
            .ok_or_else(|| CliError::Schema(format!("protected group `{name}` not found in the groups file")))?;
        for &j in groups.as_ref().expect("checked above").members(g) {
            protected[j] = true;
        }
    }
    let unprotected = protected.iter().filter(|p| !**p).count();
    if let Some(k) = a.top_k {
        if k > unprotected {
            return Err(CliError::Schema(format!(
                "top-k {k} exceeds the {unprotected} unprotected variables"
            )));
        }
    }
    let variances = column_variances(&table.dataset);
    let keep = variance_filter(&variances, &protected, a.top_k, a.min_var)?;
    let names: Vec<String> = keep.iter().map(|&j| table.names[j].clone()).collect();
    let x: Array2<f64> = table.dataset.covariates().select(Axis(1), &keep);
    if keep.is_empty() {
        return Err(CliError::Schema("filter keeps no variables".into()));
    }
    let filtered = SurvivalDataset::new(table.dataset.times().to_vec(), table.dataset.events().to_vec(), x)?;
    prov.config = json!({ "protected": a.protected, "top_k": a.top_k, "min_var": a.min_var });
    write_csv_artifact(&a.out, &data_csv_bytes(&names, &filtered)?, filtered.n(), &prov)?;
    if let (Some(path), Some(gs)) = (&a.groups_out, &groups) {
        let labels: Vec<usize> = keep.iter().map(|&j| gs.group_of(j)).collect();
        let mut used: Vec<usize> = labels.clone();
        used.sort_unstable();
        used.dedup();
        let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let sub = GroupStructure::with_names(
            labels.iter().map(|l| remap[l]).collect(),
            used.iter().map(|&g| gs.names()[g].clone()).collect(),
        )?;
        write_csv_artifact(path, &groups_csv_bytes(&names, &sub)?, names.len(), &prov)?;
    }
    println!("kept {} of {} variables", names.len(), table.names.len());
    Ok(())
}

fn cmd_select_frequency(a: FrequencyArgs) -> Result<(), CliError> {
    let (table, groups, mut prov) = load_inputs(&a.input, "select-frequency", Some(a.seed))?;
    if a.family.ipf_factors.is_some() && a.family.family != PenaltyFamily::Ipf {
        return Err(CliError::Usage("--ipf-factors needs --family ipf".into()));
    }
    let solver = a.solver.config();
    let cv = CvSettings {
        k: a.k,
        repeats: 1,
        seed: a.seed,
        grid_size: a.grid_size,
        grid_min_ratio: a.grid_min_ratio,
        patience: patience(a.patience),
    };
    let config = FrequencyConfig {
        family: a.family.family,
        alpha: a.family.alpha,
        ipf_factors: a.family.ipf_factors.clone().map(|l| l.0),
        fraction: a.fraction,
        repeats: a.repeats,
        seed: a.seed,
        solver: solver.clone(),
        cv: cv.clone(),
        ipf: ipf_config(&a.family, &solver, &cv),
    };
    let rows = selection_frequency(&table.dataset, &table.names, &groups, &config)?;
    prov.config = to_value(&config);
    write_csv_artifact(&a.out, &rows_csv_bytes(&rows)?, rows.len(), &prov)?;
    for r in rows.iter().take(10) {
        println!("{}\t{}\t{}", r.variable, r.group, r.count);
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let model_bytes = read_bytes(&a.model)?;
    let model: ModelArtifact = serde_json::from_slice(&model_bytes)
        .map_err(|e| CliError::Schema(format!("{}: not a model file: {e}", a.model.display())))?;
    let (names, beta) = model.coefficient_vector()?;
    let data_bytes = read_bytes(&a.data)?;
    let mut reader = csv_reader(&data_bytes);
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    let columns: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| CliError::Schema(format!("data lacks model variable `{n}`")))
        })
        .collect::<Result<_, _>>()?;
    if a.times.0.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Usage("prediction times must be finite".into()));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["row".to_string(), "linear_predictor".to_string()];
    head.extend(a.times.0.iter().map(|t| format!("survival_at_{t}")));
    out.write_record(&head).map_err(csv_error)?;
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut lp = 0.0;
        for (k, &c) in columns.iter().enumerate() {
            lp += beta[k] * parse_number(&record[c], line, &names[k])?;
        }
        n += 1;
        let mut fields = vec![n.to_string(), lp.to_string()];
        fields.extend(
            a.times
                .0
                .iter()
                .map(|&t| (-model.baseline_hazard.at(t) * lp.exp()).exp().to_string()),
        );
        out.write_record(&fields).map_err(csv_error)?;
    }
    let bytes = out.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let mut prov = Provenance::new("predict", None, json!({ "times": a.times.0 }));
    prov.add_input("model", &a.model, &model_bytes);
    prov.add_input("data", &a.data, &data_bytes);
    write_csv_artifact(&a.out, &bytes, n, &prov)?;
    println!("predicted {n} rows at {} times", a.times.0.len());
    Ok(())
}
