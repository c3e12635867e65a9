//! Command-line driver for the stochastic Stokes convergence studies.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use sstokes::assemble::AssembledOperators;
use sstokes::config::{parse_f64, parse_f64_list, parse_usize_list, RunSettings};
use sstokes::error::Error;
use sstokes::experiments::{
    run_convergence_study, stability_audit, write_results, write_slopes, ConvergenceTable,
    LevelErrorRow, SlopeFit, StudyKind,
};
use sstokes::mesh::Mesh;
use sstokes::noise::{standard_normal_at, BrownianTableau, NoiseModel};
use sstokes::quadrature::QuadratureRule;
use sstokes::semigroup::{
    check_discrete_energy_decay, check_fn_bounds, check_projection_stability,
    check_rational_stability, render_reports, standard_lambda_grid,
};
use sstokes::solver::{run_trajectory, DivFreeProjector, Forcing, StepSystem};
use sstokes::space::MiniSpace;
use sstokes::svg::{write_loglog_plot, Series};

#[derive(Parser)]
#[command(
    name = "sstokes",
    version,
    about = "Stochastic Stokes solver: MINI elements, semi-implicit Euler, Monte Carlo rate studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Temporal convergence study at a fixed mesh resolution
    ConvergeTime(CommonOpts),
    /// Spatial convergence study at a fixed time step
    ConvergeSpace(CommonOpts),
    /// Spatial study across noise cases (order reduction comparison)
    CaseCompare(CommonOpts),
    /// Zero-noise sanity studies in space and time
    Deterministic(CommonOpts),
    /// Monte Carlo energy-stability audit for tau and tau/2
    Stability(CommonOpts),
    /// Scalar semigroup and projection-stability audits
    SemigroupCheck(CommonOpts),
    /// One noise path at a single discretization, with per-step diagnostics
    SingleRun(CommonOpts),
}

#[derive(Args, Debug, Clone)]
struct CommonOpts {
    /// Flat key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noise case: I (r=2), II (r=1), III (r=0.5)
    #[arg(long)]
    case: Option<String>,
    /// Noise regularity exponent, overrides the case default
    #[arg(long)]
    r: Option<f64>,
    /// Spectral truncation level, overrides the case default
    #[arg(long = "L")]
    l_max: Option<usize>,
    /// Basis kind: cosine or sine
    #[arg(long)]
    basis: Option<String>,
    /// Final time
    #[arg(long = "T")]
    t_final: Option<f64>,
    /// Comma-separated time steps (accepts 2^-k)
    #[arg(long)]
    tau_list: Option<String>,
    /// Comma-separated mesh resolutions
    #[arg(long)]
    n_list: Option<String>,
    /// Reference time step
    #[arg(long)]
    ref_tau: Option<String>,
    /// Reference mesh resolution
    #[arg(long)]
    ref_n: Option<usize>,
    /// Monte Carlo sample count
    #[arg(long)]
    samples: Option<usize>,
    /// Base seed of the reproducible noise streams
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: machine parallelism or SSTOKES_WORKERS)
    #[arg(long)]
    workers: Option<usize>,
    /// Keep only the first K levels of the study
    #[arg(long)]
    levels: Option<usize>,
    /// Fixed mesh resolution (shorthand for a one-entry n_list)
    #[arg(long)]
    n: Option<usize>,
    /// Fixed time step (shorthand for a one-entry tau_list)
    #[arg(long)]
    tau: Option<String>,
    /// Cases for case-compare, e.g. I,III
    #[arg(long)]
    cases: Option<String>,
    /// Print the effective configuration and exit
    #[arg(long)]
    show_config: bool,
}

impl CommonOpts {
    fn settings(&self, mut base: RunSettings) -> Result<RunSettings, Error> {
        if let Some(path) = &self.config {
            base.merge_file(path)?;
        }
        let flag_err = |msg: String| Error::Config(msg);
        if let Some(v) = &self.case {
            base.case = v.clone();
        }
        if let Some(v) = self.r {
            base.r = Some(v);
        }
        if let Some(v) = self.l_max {
            base.l_max = Some(v);
        }
        if let Some(v) = &self.basis {
            base.basis = v.clone();
        }
        if let Some(v) = self.t_final {
            base.t_final = v;
        }
        if let Some(v) = &self.tau_list {
            base.tau_list = parse_f64_list(v).map_err(flag_err)?;
        }
        if let Some(v) = &self.n_list {
            base.n_list = parse_usize_list(v).map_err(flag_err)?;
        }
        if let Some(v) = &self.ref_tau {
            base.ref_tau = parse_f64(v).map_err(flag_err)?;
        }
        if let Some(v) = self.ref_n {
            base.ref_n = v;
        }
        if let Some(v) = self.samples {
            base.samples = v;
        }
        if let Some(v) = self.seed {
            base.base_seed = v;
        }
        if let Some(v) = &self.out {
            base.out_dir = v.clone();
        }
        if let Some(v) = self.workers {
            base.workers = v;
        }
        if let Some(v) = self.n {
            base.n_list = vec![v];
        }
        if let Some(v) = &self.tau {
            base.tau_list = vec![parse_f64(v).map_err(flag_err)?];
        }
        if let Some(v) = &self.cases {
            base.cases = v.split(',').map(|s| s.trim().to_string()).collect();
        }
        if let Some(k) = self.levels {
            if k == 0 {
                return Err(Error::Config("--levels must be at least 1".into()));
            }
            base.tau_list.truncate(k);
            base.n_list.truncate(k);
        }
        Ok(base)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match &e {
                Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) => "config",
                Error::Io(_) => "io",
                _ => "numerical",
            };
            eprintln!("error: kind={kind} msg=\"{e}\"");
            match kind {
                "config" => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::ConvergeTime(opts) => converge(&opts, StudyKind::Time, false),
        Command::ConvergeSpace(opts) => converge(&opts, StudyKind::Space, false),
        Command::CaseCompare(opts) => case_compare(&opts),
        Command::Deterministic(opts) => deterministic(&opts),
        Command::Stability(opts) => stability(&opts),
        Command::SemigroupCheck(opts) => semigroup_check(&opts),
        Command::SingleRun(opts) => single_run(&opts),
    }
}

fn defaults_for(kind: StudyKind) -> RunSettings {
    match kind {
        StudyKind::Time => RunSettings::time_defaults(),
        StudyKind::Space => RunSettings::space_defaults(),
    }
}

fn print_table(table: &ConvergenceTable) {
    println!("{}", sstokes::experiments::RESULTS_HEADER);
    for r in &table.rows {
        println!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.study,
            r.case,
            r.n,
            r.h,
            r.tau,
            r.m_samples,
            r.err_u_ms,
            r.err_u_se,
            r.err_pint_ms,
            r.err_pint_se
        );
    }
    for s in &table.slopes {
        println!("slope {} = {:.4} (fit residual {:.4})", s.quantity, s.slope, s.residual);
    }
    for w in &table.warnings {
        println!("warning: {w}");
    }
}

fn plot_table(
    out: &std::path::Path,
    name: &str,
    kind: StudyKind,
    tables: &[(&str, &ConvergenceTable)],
) -> Result<(), Error> {
    let mut series = Vec::new();
    for (label, table) in tables {
        let xs: Vec<f64> = table
            .rows
            .iter()
            .map(|r| match kind {
                StudyKind::Time => r.tau,
                StudyKind::Space => r.h,
            })
            .collect();
        series.push(Series {
            label: format!("velocity {label}"),
            xs: xs.clone(),
            ys: table.rows.iter().map(|r| r.err_u_ms.sqrt()).collect(),
        });
        series.push(Series {
            label: format!("pressure-int {label}"),
            xs,
            ys: table.rows.iter().map(|r| r.err_pint_ms.sqrt()).collect(),
        });
    }
    let x_label = match kind {
        StudyKind::Time => "tau",
        StudyKind::Space => "h",
    };
    write_loglog_plot(
        &out.join(name),
        &format!("strong errors vs {x_label}"),
        x_label,
        &series,
        &[0.5, 1.0, 2.0],
    )
}

fn converge(opts: &CommonOpts, kind: StudyKind, zero_noise: bool) -> Result<(), Error> {
    let settings = opts.settings(defaults_for(kind))?;
    if opts.show_config {
        print!("{}", settings.render());
        return Ok(());
    }
    let cfg = settings.to_experiment(kind, zero_noise)?;
    let table = run_convergence_study(&cfg)?;
    let tag = cfg.tag();
    write_results(&cfg.out_dir.join(format!("results_{tag}.csv")), &table.rows)?;
    write_slopes(&cfg.out_dir.join(format!("slopes_{tag}.csv")), &table.slopes)?;
    plot_table(&cfg.out_dir, &format!("plot_{tag}.svg"), kind, &[("", &table)])?;
    print_table(&table);
    Ok(())
}

fn case_compare(opts: &CommonOpts) -> Result<(), Error> {
    let settings = opts.settings(RunSettings::space_defaults())?;
    if opts.show_config {
        print!("{}", settings.render());
        return Ok(());
    }
    let mut rows: Vec<LevelErrorRow> = Vec::new();
    let mut slopes: Vec<SlopeFit> = Vec::new();
    let mut tables = Vec::new();
    for case in settings.cases.clone() {
        let mut per_case = settings.clone();
        per_case.case = case.clone();
        per_case.r = None;
        per_case.l_max = settings.l_max;
        let cfg = per_case.to_experiment(StudyKind::Space, false)?;
        let table = run_convergence_study(&cfg)?;
        print_table(&table);
        rows.extend(table.rows.clone());
        slopes.extend(table.slopes.clone());
        tables.push((case, table));
    }
    let out = &settings.out_dir;
    write_results(&out.join("results_space_compare.csv"), &rows)?;
    write_slopes(&out.join("slopes_space_compare.csv"), &slopes)?;
    let named: Vec<(&str, &ConvergenceTable)> = tables
        .iter()
        .map(|(c, t)| (c.as_str(), t))
        .collect();
    plot_table(out, "plot_space_compare.svg", StudyKind::Space, &named)?;
    Ok(())
}

fn deterministic(opts: &CommonOpts) -> Result<(), Error> {
    // space part
    let space_settings = opts.settings(RunSettings::space_defaults())?;
    if opts.show_config {
        print!("{}", space_settings.render());
        return Ok(());
    }
    let cfg_space = space_settings.to_experiment(StudyKind::Space, true)?;
    let table_space = run_convergence_study(&cfg_space)?;
    print_table(&table_space);
    // time part reuses the temporal defaults but keeps explicit overrides
    let time_settings = opts.settings(RunSettings::time_defaults())?;
    let cfg_time = time_settings.to_experiment(StudyKind::Time, true)?;
    let table_time = run_convergence_study(&cfg_time)?;
    print_table(&table_time);

    let out = &space_settings.out_dir;
    let mut rows = table_space.rows.clone();
    rows.extend(table_time.rows.clone());
    let mut slopes = table_space.slopes.clone();
    slopes.extend(table_time.slopes.clone());
    write_results(&out.join("results_deterministic.csv"), &rows)?;
    write_slopes(&out.join("slopes_deterministic.csv"), &slopes)?;
    plot_table(
        out,
        "plot_deterministic_space.svg",
        StudyKind::Space,
        &[("det", &table_space)],
    )?;
    plot_table(
        out,
        "plot_deterministic_time.svg",
        StudyKind::Time,
        &[("det", &table_time)],
    )?;
    Ok(())
}

fn stability(opts: &CommonOpts) -> Result<(), Error> {
    let mut base = RunSettings::time_defaults();
    base.n_list = vec![16];
    base.tau_list = vec![2f64.powi(-4)];
    base.ref_tau = 2f64.powi(-5);
    base.samples = 32;
    let settings = opts.settings(base)?;
    if opts.show_config {
        print!("{}", settings.render());
        return Ok(());
    }
    let cfg = settings.to_experiment(StudyKind::Time, false)?;
    let report = stability_audit(&cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut text = String::from("tau,e_max_l2_sq,e_sum_incr_sq,e_sum_h1_sq\n");
    for row in &report.rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            row.tau, row.e_max_l2_sq, row.e_sum_incr_sq, row.e_sum_h1_sq
        ));
    }
    text.push_str(&format!(
        "# ratios fine/coarse: {} {} {}\n# pass: {}\n",
        report.ratios[0], report.ratios[1], report.ratios[2], report.pass
    ));
    std::fs::write(cfg.out_dir.join("stability.csv"), &text)?;
    print!("{text}");
    if !report.pass {
        return Err(Error::InvalidArgument(
            "stability audit failed: halving tau changed an energy statistic by more than 2x"
                .into(),
        ));
    }
    Ok(())
}

fn semigroup_check(opts: &CommonOpts) -> Result<(), Error> {
    let settings = opts.settings(RunSettings::time_defaults())?;
    if opts.show_config {
        print!("{}", settings.render());
        return Ok(());
    }
    let grid = standard_lambda_grid();
    let tau = 2f64.powi(-6);
    let mut reports = Vec::new();
    for gamma in [0.0, 0.5, 1.0] {
        reports.push(check_rational_stability(gamma, tau, &grid, 64)?);
    }
    for tau_fn in [2f64.powi(-4), 2f64.powi(-6)] {
        reports.push(check_fn_bounds(tau_fn, &grid, 64)?);
    }
    // discrete energy decay on a random projected vector
    let mesh = Arc::new(Mesh::uniform(8)?);
    let space = Arc::new(MiniSpace::new(Arc::clone(&mesh)));
    let ops = Arc::new(AssembledOperators::assemble(&space));
    let projector = DivFreeProjector::new(&ops)?;
    let coeffs: Vec<f64> = (0..space.num_velocity_dofs())
        .map(|k| standard_normal_at(settings.base_seed, 0, 4, 4, k))
        .collect();
    let v = projector.project(&ops, &space.velocity_fn(coeffs)?)?;
    reports.push(check_discrete_energy_decay(
        &space,
        &ops,
        2f64.powi(-4),
        &v,
        64,
    )?);
    reports.push(check_projection_stability(&[4, 8, 16, 32], 20)?);

    let text = render_reports(&reports);
    std::fs::create_dir_all(&settings.out_dir)?;
    std::fs::write(settings.out_dir.join("semigroup_report.txt"), &text)?;
    print!("{text}");
    if reports.iter().any(|r| !r.pass) {
        return Err(Error::InvalidArgument(
            "a semigroup audit exceeded its threshold".into(),
        ));
    }
    Ok(())
}

fn single_run(opts: &CommonOpts) -> Result<(), Error> {
    let mut base = RunSettings::time_defaults();
    base.n_list = vec![16];
    base.tau_list = vec![2f64.powi(-5)];
    base.ref_tau = 2f64.powi(-5);
    let settings = opts.settings(base)?;
    if opts.show_config {
        print!("{}", settings.render());
        return Ok(());
    }
    let n = settings.n_list[0];
    let tau = settings.tau_list[0];
    let rule = QuadratureRule::degree6();
    let mesh = Arc::new(Mesh::uniform(n)?);
    let space = Arc::new(MiniSpace::new(Arc::clone(&mesh)));
    let ops = Arc::new(AssembledOperators::assemble(&space));
    let system = StepSystem::build(&ops, tau)?;
    let model = NoiseModel::build(
        settings.effective_r()?,
        settings.effective_l_max()?,
        settings.effective_basis()?,
        &mesh,
        &rule,
    )?;
    let n_steps = sstokes::solver::steps_dividing(settings.t_final, tau)?;
    let tableau = BrownianTableau::sample(&model, tau, n_steps, settings.base_seed, 0)?;
    let traj = run_trajectory(
        &space,
        &ops,
        &system,
        &model,
        &tableau,
        &Forcing::Constant(sstokes::config::FORCING),
        settings.t_final,
        &[settings.t_final],
        None,
    )?;
    let u = space.velocity_fn(traj.checkpoints.last().unwrap().1.clone())?;
    let p = space.pressure_fn(traj.pressure_integral.clone())?;
    let summary = format!(
        "n,tau,case,steps,final_u_l2,final_u_h1,pressure_integral_l2,max_div_residual,max_energy_residual\n{},{},{},{},{},{},{},{},{}\n",
        n,
        tau,
        settings.case,
        traj.n_steps,
        ops.norm(&u, sstokes::assemble::NormKind::L2),
        ops.norm(&u, sstokes::assemble::NormKind::H1),
        ops.norm(&p, sstokes::assemble::NormKind::L2),
        traj.max_divergence_residual,
        traj.max_energy_residual,
    );
    std::fs::create_dir_all(&settings.out_dir)?;
    std::fs::write(settings.out_dir.join("single_run.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}
