use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use srivc::diagnostics::{
    analytic_average_power, check_power_resonance, empirical_average_power, empirical_psi,
    normal_matrix_condition_sweep, phi_star_min_eig, write_condition_csv,
};
use srivc::estimator::{initialize, srivc, srivc_c, EstimatorConfig, EstimatorKind, ModelOrder};
use srivc::harness::{
    export_summary, format_table, param_names, preset_fig1_fig2, preset_fig3, preset_table1,
    run_experiment_detailed, write_plot, write_raw, Sweep,
};
use srivc::io::{load_dataset, load_multisine, save_dataset, save_multisine, write_report, DatasetFile};
use srivc::signals::{derive_seed, generate_dataset, GridKind, NoiseModel, SamplingGrid};

use crate::config::{EstimatorArgs, EstimatorChoice, FileConfig, GridChoice, Scenario, ScenarioArgs};
use crate::{CliError, DiagnosticKind, Preset};

/// `dir/run.csv` -> `dir/run<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

const DEFAULT_GRID: GridChoice = GridChoice::Regular(0.3);

fn build_grid(sc: &Scenario, default_samples: usize, seed: u64) -> Result<SamplingGrid, CliError> {
    let kind = sc.grid.unwrap_or(DEFAULT_GRID).kind(seed);
    Ok(SamplingGrid::generate(kind, sc.samples.unwrap_or(default_samples), 0.0)?)
}

pub fn generate(args: &ScenarioArgs, output: Option<PathBuf>, input_out: Option<PathBuf>) -> Result<(), CliError> {
    let output = output.ok_or_else(|| CliError::Usage("missing --output <PATH> for the dataset".into()))?;
    let file = FileConfig::load(args.config.as_deref())?;
    let sc = Scenario::resolve(&file, args)?;
    let grid = build_grid(&sc, 2000, derive_seed(sc.seed, &[1]))?;
    let noise = NoiseModel::new(sc.variance, derive_seed(sc.seed, &[0]))?;
    let data = generate_dataset(&sc.system, &sc.input, &grid, &noise)?;
    let input_path = input_out.unwrap_or_else(|| sibling(&output, ".input.csv"));
    save_dataset(&DatasetFile::from_dataset(&data), &output)?;
    save_multisine(&sc.input, &input_path)?;
    println!("seed: {}", sc.seed);
    println!("wrote {} samples to {}", data.len(), output.display());
    println!("input definition: {}", input_path.display());
    Ok(())
}

pub fn estimate(
    data_path: &Path,
    input_def: Option<PathBuf>,
    config: Option<PathBuf>,
    args: &EstimatorArgs,
    report: Option<PathBuf>,
) -> Result<(), CliError> {
    let file = FileConfig::load(config.as_deref())?;
    let est = EstimatorChoice::resolve(&file, args)?;
    let data = load_dataset(data_path)?;
    let input_path = input_def.or_else(|| {
        let p = sibling(data_path, ".input.csv");
        p.exists().then_some(p)
    });
    let ms = input_path.as_deref().map(load_multisine).transpose()?;
    let u = data.input_signal()?;
    let y = data.output_signal()?;
    let cutoff = est.cutoff.or_else(|| ms.as_ref().and_then(|m| m.max_frequency()));
    let theta1 = initialize(&u, &y, est.order, cutoff, &est.config)?;
    let result = match est.kind {
        EstimatorKind::Srivc => srivc(&u, &y, &theta1, &est.config)?,
        EstimatorKind::SrivcC => {
            let ms = ms.ok_or_else(|| CliError::Usage("srivc-c needs the input definition (--input-def)".into()))?;
            srivc_c(&ms, &y, &theta1, &est.config)?
        }
    };
    println!("estimator: {}", est.kind);
    for (name, v) in param_names(est.order).iter().zip(result.theta.values()) {
        println!("{name} = {v:.6}");
    }
    println!("converged: {}", result.converged);
    println!("iterations: {}", result.iteration_count());
    let report = report.unwrap_or_else(|| sibling(data_path, ".report.txt"));
    write_report(est.kind, &result, BufWriter::new(fs::File::create(&report)?))?;
    println!("report: {}", report.display());
    if result.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

pub struct ReproduceOptions {
    pub config: Option<PathBuf>,
    pub runs: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub max_iter: Option<usize>,
    pub out_dir: PathBuf,
    pub raw: bool,
}

pub fn reproduce(preset: Preset, opts: ReproduceOptions) -> Result<(), CliError> {
    let file = FileConfig::load(opts.config.as_deref())?;
    let exp = &file.experiment;
    let (name, mut spec) = match preset {
        Preset::Fig1 => ("fig1", preset_fig1_fig2()),
        Preset::Fig2 => ("fig2", preset_fig1_fig2()),
        Preset::Table1 => ("table1", preset_table1()),
        Preset::Fig3 => ("fig3", preset_fig3()),
    };
    if let Some(runs) = opts.runs.or(exp.runs) {
        spec.runs = runs;
    }
    if let Some(seed) = opts.seed.or(exp.seed) {
        spec.master_seed = seed;
    }
    let sizes = opts.n_list.or_else(|| exp.sizes.clone());
    match &mut spec.sweep {
        Sweep::SampleSizes { sizes: s, .. } => {
            if let Some(v) = sizes {
                *s = v;
            }
        }
        Sweep::RegularPeriods { periods, .. } => {
            if sizes.is_some() {
                return Err(CliError::Usage("--n-list applies to fig1/fig2 only".into()));
            }
            if let Some(v) = &exp.periods {
                *periods = v.clone();
            }
        }
        Sweep::IrregularBounds { h_lb, upper, .. } => {
            if sizes.is_some() {
                return Err(CliError::Usage("--n-list applies to fig1/fig2 only".into()));
            }
            if let Some(v) = &exp.upper_bounds {
                *upper = v.clone();
            }
            if let Some(v) = exp.h_lb {
                *h_lb = v;
            }
        }
    }
    if let Some(v) = opts.epsilon.or(file.estimator.epsilon) {
        spec.config.epsilon = v;
    }
    if let Some(v) = opts.max_iter.or(file.estimator.max_iter) {
        spec.config.max_iter = v;
    }

    let out = run_experiment_detailed(&spec)?;
    fs::create_dir_all(&opts.out_dir)?;
    let summary_path = opts.out_dir.join(format!("{name}_summary.csv"));
    let plot_path = opts.out_dir.join(format!("{name}_plot.csv"));
    export_summary(&out.summary, &summary_path)?;
    write_plot(&out.summary, spec.sweep.axis(), BufWriter::new(fs::File::create(&plot_path)?))?;
    if opts.raw {
        let raw_path = opts.out_dir.join(format!("{name}_raw.csv"));
        write_raw(&out, spec.order, BufWriter::new(fs::File::create(&raw_path)?))?;
        println!("raw: {}", raw_path.display());
    }
    if !matches!(spec.sweep, Sweep::SampleSizes { .. }) {
        print!("{}", format_table(&out.summary));
    }
    let failed = out.records.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        println!("failed estimations: {failed} of {}", out.records.len());
    }
    println!("summary: {}", summary_path.display());
    println!("plot: {}", plot_path.display());
    Ok(())
}

fn verdict(pass: bool, what: &str) -> Result<(), CliError> {
    if pass {
        println!("PASS {what}");
        Ok(())
    } else {
        println!("FAIL {what}");
        Err(CliError::Diagnostic(format!("{what} check failed")))
    }
}

pub fn diagnose(
    kind: DiagnosticKind,
    args: &ScenarioArgs,
    order_n: Option<usize>,
    order_m: Option<usize>,
    h_list: Option<Vec<f64>>,
    seeds: u64,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let sc = Scenario::resolve(&file, args)?;
    let order = ModelOrder::new(
        order_n.or(file.estimator.n).unwrap_or(2),
        order_m.or(file.estimator.m).unwrap_or(0),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;

    match kind {
        DiagnosticKind::Psi => {
            if seeds == 0 {
                return Err(CliError::Usage("--seeds must be at least 1".into()));
            }
            let aj = sc.system.den().normalized_constant()?;
            let mut violations = 0;
            let mut writer = match &output {
                Some(p) => Some(BufWriter::new(fs::File::create(p)?)),
                None => None,
            };
            if let Some(w) = writer.as_mut() {
                use std::io::Write;
                writeln!(w, "seed,entry_i,entry_j,value,stderr")?;
            }
            for s in 0..seeds {
                let seed = derive_seed(sc.seed, &[s]);
                let grid = build_grid(&sc, 100_000, derive_seed(seed, &[1]))?;
                let noise = NoiseModel::new(sc.variance, derive_seed(seed, &[0]))?;
                let psi = empirical_psi(&aj, &sc.input, &noise, &grid, order)?;
                let bad = psi
                    .value
                    .iter()
                    .zip(psi.stderr.iter())
                    .filter(|(v, e)| v.abs() > 4.0 * **e)
                    .count();
                violations += bad;
                println!(
                    "seed {s}: N = {}, max |entry| = {:.3e}, max |entry|/stderr = {:.2}, entries beyond 4 stderr: {bad}",
                    psi.samples,
                    psi.max_abs(),
                    psi.max_z_score()
                );
                if let Some(w) = writer.as_mut() {
                    use std::io::Write;
                    for i in 0..psi.value.nrows() {
                        for j in 0..psi.value.ncols() {
                            writeln!(w, "{s},{i},{j},{:e},{:e}", psi.value[(i, j)], psi.stderr[(i, j)])?;
                        }
                    }
                }
            }
            let allowed = if seeds > 1 { 1 } else { 0 };
            verdict(violations <= allowed, "cross moment within 4 stderr of zero")
        }
        DiagnosticKind::Power => {
            let grid = build_grid(&sc, 100_000, derive_seed(sc.seed, &[1]))?;
            if let GridKind::Regular { h } = grid.kind() {
                if let Err(e) = check_power_resonance(&sc.input, h) {
                    println!("warning: {e}");
                }
            }
            let analytic = analytic_average_power(&sc.system, &sc.input)?;
            let empirical = empirical_average_power(&sc.system, &sc.input, &grid)?;
            let rel = (empirical.scalar() - analytic).abs() / analytic.abs();
            println!("analytic average power: {analytic:.6e}");
            println!(
                "empirical average power: {:.6e} (stderr {:.2e}, N = {})",
                empirical.scalar(),
                empirical.scalar_stderr(),
                empirical.samples
            );
            println!("relative difference: {rel:.3e}");
            if let Some(p) = &output {
                use std::io::Write;
                let mut w = BufWriter::new(fs::File::create(p)?);
                writeln!(w, "analytic,empirical,stderr,relative_error")?;
                writeln!(w, "{analytic:e},{:e},{:e},{rel:e}", empirical.scalar(), empirical.scalar_stderr())?;
            }
            verdict(rel < 0.01, "analytic and empirical power agree within 1%")
        }
        DiagnosticKind::Phistar => match phi_star_min_eig(&sc.system, &sc.input, order) {
            Ok(eig) => {
                println!("smallest eigenvalue: {eig:.6e}");
                verdict(eig > 0.0, "limiting instrument Gram matrix positive definite")
            }
            Err(srivc::Error::AssumptionA3Violated(msg)) => {
                println!("FAIL AssumptionA3Violated: {msg}");
                Err(CliError::Diagnostic(format!("insufficient excitation: {msg}")))
            }
            Err(e) => Err(e.into()),
        },
        DiagnosticKind::Condsweep => {
            let h_list = h_list.unwrap_or_else(|| vec![0.06, 0.2, 0.6]);
            let samples = sc.samples.unwrap_or(2000);
            let rows = normal_matrix_condition_sweep(&sc.system, &sc.input, order, &h_list, samples)?;
            println!("h,condition");
            for (h, c) in &rows {
                println!("{h},{c:.4e}");
            }
            if let Some(p) = &output {
                write_condition_csv(BufWriter::new(fs::File::create(p)?), &rows)?;
            }
            let limit = EstimatorConfig::default().condition_limit;
            verdict(
                rows.iter().all(|(_, c)| *c <= limit),
                "normal matrix well conditioned at every sampling period",
            )
        }
    }
}
