use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use pooltest_core::dilution::{load_observations, pcr_observations, PCR_FIT_ALPHA, PCR_FIT_BETA};
use pooltest_core::report::{
    fp_table, min_tests_table, read_sweep_csv, sig6, write_fp_csv, write_min_tests_csv, write_mrse_csv,
    write_simulation_csv, write_sweep_csv, FN_CAPS,
};
use pooltest_core::sim::{compare, summarize, verification_configs, VERIFICATION_PREVALENCES};
use pooltest_core::{
    evaluate, fit_dilution_model_with, simulate, sweep, DilutionModel, Error, FitOptions, LinearTerm, ParetoPoint,
    Prevalence, ProcedureConfig, RatioOrientation, Result, SimConfig, SweepSpec, TestKit,
};
use serde::Serialize;

use crate::artifacts::Artifacts;
use crate::{Command, GridArgs, Kind, Linear, ModelArgs, Orientation, ProcedureArgs, SimArgs};

/// Everything needed to rerun a command, written as `run.toml`.
#[derive(Serialize, Default)]
struct RunRecord {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subjects: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    from: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_mse: Option<f64>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<DilutionModel>,
}

impl RunRecord {
    fn new(command: &'static str) -> Self {
        Self {
            tool: "pooltest",
            version: env!("CARGO_PKG_VERSION"),
            command,
            ..Default::default()
        }
    }
}

impl From<Orientation> for RatioOrientation {
    fn from(o: Orientation) -> Self {
        match o {
            Orientation::KOverN => Self::KOverN,
            Orientation::NOverK => Self::NOverK,
        }
    }
}

impl From<Linear> for LinearTerm {
    fn from(l: Linear) -> Self {
        match l {
            Linear::PoolSize => Self::PoolSize,
            Linear::PositiveCount => Self::PositiveCount,
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn prevalences(ps: &[f64]) -> Result<Vec<Prevalence>> {
    ps.iter().map(|&p| Prevalence::new(p)).collect()
}

struct ResolvedModel {
    model: DilutionModel,
    fit_mse: Option<f64>,
}

fn fit_options(orientation: Orientation, linear: Linear) -> FitOptions {
    FitOptions {
        orientation: orientation.into(),
        linear_term: linear.into(),
        ..FitOptions::default()
    }
}

fn resolve_model(args: &ModelArgs) -> Result<ResolvedModel> {
    let kit = TestKit::new(args.se_i, args.sp)?;
    if let Some(path) = &args.fit_data {
        let obs = load_observations(path)?;
        let fit = fit_dilution_model_with(&obs, kit, &fit_options(args.ratio_orientation, args.linear_term))?;
        return Ok(ResolvedModel {
            model: fit.model,
            fit_mse: Some(fit.mse),
        });
    }
    let alpha = args.alpha.unwrap_or(PCR_FIT_ALPHA);
    let beta = args.beta.unwrap_or(PCR_FIT_BETA);
    if !alpha.is_finite() || !beta.is_finite() {
        return usage("alpha and beta must be finite");
    }
    let model = DilutionModel::new(kit, alpha, beta)
        .with_orientation(args.ratio_orientation.into())
        .with_linear_term(args.linear_term.into());
    Ok(ResolvedModel { model, fit_mse: None })
}

fn procedure(args: &ProcedureArgs) -> Result<ProcedureConfig> {
    match args.kind {
        Kind::Individual => Ok(ProcedureConfig::individual()),
        Kind::Dorfman => {
            let Some(n) = args.n else {
                return usage("--n is required for dorfman");
            };
            if args.r.is_some_and(|r| r != 1) {
                return usage("dorfman uses a single pool test; drop --r or use --kind modified");
            }
            ProcedureConfig::dorfman(n)
        }
        Kind::Modified => match (args.n, args.r) {
            (Some(n), Some(r)) => ProcedureConfig::modified(n, r),
            _ => usage("--n and --r are required for modified"),
        },
    }
}

fn record_model(record: &mut RunRecord, args: &ModelArgs, resolved: &ResolvedModel) {
    record.model = Some(resolved.model);
    record.fit_data = args.fit_data.as_deref().map(path_string);
    record.fit_mse = resolved.fit_mse;
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Evaluate {
            procedure: proc_args,
            model,
            out,
        } => cmd_evaluate(&proc_args, &model, out),
        Command::Simulate {
            procedure: proc_args,
            model,
            sim,
            out,
        } => cmd_simulate(&proc_args, &model, &sim, out),
        Command::Sweep { grid, model, out } => cmd_sweep(&grid, &model, out),
        Command::Fit {
            fit_data,
            se_i,
            sp,
            ratio_orientation,
            linear_term,
            max_iterations,
            out,
        } => {
            let opts = FitOptions {
                max_iterations,
                ..fit_options(ratio_orientation, linear_term)
            };
            cmd_fit(fit_data, TestKit::new(se_i, sp)?, &opts, out)
        }
        Command::Verify { p, model, sim, out } => cmd_verify(p, &model, &sim, out),
        Command::Tables { from, grid, model, out } => cmd_tables(from, &grid, &model, out),
    }
}

fn cmd_evaluate(proc_args: &ProcedureArgs, model_args: &ModelArgs, out: Option<PathBuf>) -> Result<()> {
    let resolved = resolve_model(model_args)?;
    let config = procedure(proc_args)?;
    let ps = prevalences(&proc_args.p)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "p",
        "kind",
        "n",
        "r",
        "e_tests",
        "e_fn",
        "e_fp",
        "relative_tests",
        "relative_fn_increase",
    ])?;
    for p in ps {
        let pt = ParetoPoint::new(
            p,
            config,
            evaluate(&resolved.model, p, &config),
            resolved.model.kit.se_i,
        );
        w.write_record([
            sig6(p.get()),
            config.kind.to_string(),
            config.n.to_string(),
            config.r.to_string(),
            sig6(pt.metrics.e_tests),
            sig6(pt.metrics.e_fn),
            sig6(pt.metrics.e_fp),
            sig6(pt.relative_tests),
            sig6(pt.relative_fn_increase),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    print!("{}", String::from_utf8_lossy(&bytes));

    if let Some(dir) = out {
        let mut files = Artifacts::new(dir);
        files.add("evaluate.csv", bytes);
        let mut record = RunRecord::new("evaluate");
        record.p = Some(proc_args.p.clone());
        record.kind = Some(config.kind.to_string());
        record.n = Some(config.n);
        record.r = Some(config.r);
        record_model(&mut record, model_args, &resolved);
        record.outputs = files.names();
        files.commit(&record)?;
    }
    Ok(())
}

fn cmd_simulate(proc_args: &ProcedureArgs, model_args: &ModelArgs, sim: &SimArgs, out: PathBuf) -> Result<()> {
    let resolved = resolve_model(model_args)?;
    let config = procedure(proc_args)?;
    let mut rows = Vec::new();
    for p in prevalences(&proc_args.p)? {
        let c = SimConfig {
            subjects: sim.subjects,
            seed: sim.seed,
            procedure: config,
            model: resolved.model,
            p,
        };
        let result = simulate(&c)?;
        let row = compare(&c, result);
        println!(
            "p={} {} n={} r={}: tests/subject {} (analytic {}), FN {} ({}), FP {} ({})",
            sig6(p.get()),
            config.kind,
            config.n,
            config.r,
            sig6(row.comparisons[0].simulated),
            sig6(row.comparisons[0].analytic),
            sig6(row.comparisons[1].simulated),
            sig6(row.comparisons[1].analytic),
            sig6(row.comparisons[2].simulated),
            sig6(row.comparisons[2].analytic),
        );
        rows.push(row);
    }

    let mut files = Artifacts::new(out);
    files.add("simulate.csv", csv_bytes(|b| write_simulation_csv(&rows, b))?);
    let mut record = RunRecord::new("simulate");
    record.seed = Some(sim.seed);
    record.subjects = Some(sim.subjects);
    record.p = Some(proc_args.p.clone());
    record.kind = Some(config.kind.to_string());
    record.n = Some(config.n);
    record.r = Some(config.r);
    record_model(&mut record, model_args, &resolved);
    record.outputs = files.names();
    files.commit(&record)
}

fn grid_spec(grid: &GridArgs, model: DilutionModel) -> Result<(SweepSpec, Vec<f64>)> {
    let ps = grid
        .p
        .clone()
        .unwrap_or_else(|| pooltest_core::pareto::REFERENCE_PREVALENCES.to_vec());
    let mut spec = SweepSpec::new(prevalences(&ps)?, model);
    spec.n_range = 2..=grid.n_max;
    spec.r_range = 2..=grid.r_max;
    Ok((spec, ps))
}

fn cmd_sweep(grid: &GridArgs, model_args: &ModelArgs, out: PathBuf) -> Result<()> {
    let resolved = resolve_model(model_args)?;
    let (spec, ps) = grid_spec(grid, resolved.model)?;
    let points = sweep(&spec)?;
    let front: Vec<&ParetoPoint> = points.iter().filter(|pt| !pt.dominated).collect();
    println!(
        "{} settings evaluated, {} on their family's front",
        points.len(),
        front.len()
    );

    let mut files = Artifacts::new(out);
    files.add("grid.csv", csv_bytes(|b| write_sweep_csv(&points, b))?);
    files.add("front.csv", csv_bytes(|b| write_sweep_csv(front.iter().copied(), b))?);
    let mut record = RunRecord::new("sweep");
    record.p = Some(ps);
    record.n_max = Some(grid.n_max);
    record.r_max = Some(grid.r_max);
    record_model(&mut record, model_args, &resolved);
    record.outputs = files.names();
    files.commit(&record)
}

fn cmd_fit(fit_data: Option<PathBuf>, kit: TestKit, opts: &FitOptions, out: PathBuf) -> Result<()> {
    let obs = match &fit_data {
        Some(path) => load_observations(path)?,
        None => pcr_observations(),
    };
    let fit = fit_dilution_model_with(&obs, kit, opts)?;
    println!(
        "alpha={} beta={} mse={} iterations={}",
        fit.model.alpha, fit.model.beta, fit.mse, fit.iterations
    );

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "beta", "mse", "iterations", "se_i", "sp"])?;
    w.write_record([
        fit.model.alpha.to_string(),
        fit.model.beta.to_string(),
        fit.mse.to_string(),
        fit.iterations.to_string(),
        kit.se_i.to_string(),
        kit.sp.to_string(),
    ])?;
    let mut files = Artifacts::new(out);
    files.add("fit.csv", w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    let mut record = RunRecord::new("fit");
    record.fit_data = fit_data.as_deref().map(path_string);
    record.fit_mse = Some(fit.mse);
    record.model = Some(fit.model);
    record.outputs = files.names();
    files.commit(&record)
}

fn cmd_verify(p: Option<Vec<f64>>, model_args: &ModelArgs, sim: &SimArgs, out: PathBuf) -> Result<()> {
    let resolved = resolve_model(model_args)?;
    let ps = p.unwrap_or_else(|| VERIFICATION_PREVALENCES.to_vec());
    let configs = verification_configs(resolved.model, &prevalences(&ps)?, sim.subjects, sim.seed);
    let rows = configs
        .iter()
        .map(|c| simulate(c).map(|r| compare(c, r)))
        .collect::<Result<Vec<_>>>()?;
    let report = summarize(rows);
    for cell in &report.cells {
        println!(
            "{:<10} {:<5} mrse {}",
            cell.kind.as_str(),
            cell.metric.as_str(),
            cell.mrse.map(|m| format!("{m:.3e}")).unwrap_or_else(|| "-".into())
        );
    }

    let mut files = Artifacts::new(out);
    files.add("verify_mrse.csv", csv_bytes(|b| write_mrse_csv(&report.cells, b))?);
    files.add(
        "verify_detail.csv",
        csv_bytes(|b| write_simulation_csv(&report.rows, b))?,
    );
    let mut record = RunRecord::new("verify");
    record.seed = Some(sim.seed);
    record.subjects = Some(sim.subjects);
    record.p = Some(ps);
    record_model(&mut record, model_args, &resolved);
    record.outputs = files.names();
    files.commit(&record)
}

fn cmd_tables(from: Option<PathBuf>, grid: &GridArgs, model_args: &ModelArgs, out: PathBuf) -> Result<()> {
    let mut record = RunRecord::new("tables");
    let points = match &from {
        Some(path) => {
            record.from = Some(path_string(path));
            read_sweep_csv(BufReader::new(File::open(path)?))?
        }
        None => {
            let resolved = resolve_model(model_args)?;
            let (spec, ps) = grid_spec(grid, resolved.model)?;
            record.p = Some(ps);
            record.n_max = Some(grid.n_max);
            record.r_max = Some(grid.r_max);
            record_model(&mut record, model_args, &resolved);
            sweep(&spec)?
        }
    };
    let min_tests = min_tests_table(&points, &FN_CAPS);
    let fp = fp_table(&points);
    for row in &min_tests {
        let cells: Vec<String> = row
            .cells
            .iter()
            .map(|c| match c.point {
                Some(pt) => format!(
                    "{:5.1}% r={} n={:<2}",
                    pt.relative_tests * 100.0,
                    pt.config.r,
                    pt.config.n
                ),
                None => format!("{:>15}", "-"),
            })
            .collect();
        println!("p={:<6} {}", sig6(row.p.get()).trim_end_matches('0'), cells.join(" | "));
    }

    let mut files = Artifacts::new(out);
    files.add("min_tests.csv", csv_bytes(|b| write_min_tests_csv(&min_tests, b))?);
    files.add("false_positives.csv", csv_bytes(|b| write_fp_csv(&fp, b))?);
    record.outputs = files.names();
    files.commit(&record)
}
