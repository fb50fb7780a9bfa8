//! Pipelines behind the subcommands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use livsic_core::cocycles::{
    AlgebraMap, ConstantFlow, FlowAlgebra, FlowCoboundary, Generator, SuspendedGenerator,
    SuspensionFlow,
};
use livsic_core::conformal::{self, DistortionReport};
use livsic_core::groups::{self, AlgebraElement, GroupElement, GroupKind};
use livsic_core::livsic::{self, grid_centers, value_entries, SolverMetric, Verdict, Warning};
use livsic_core::periodic::{
    self, closing_point, count_periodic, enumerate_periodic, fixed_points_of_power,
};
use livsic_core::ToralAutomorphism;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::battery;
use crate::config::{ExperimentConfig, FlowGeneratorKind};
use crate::error::{io_err, Context, LabError, Result, EXIT_OBSTRUCTION_FAILS};
use crate::report::{emit_all_plot_data, write_text, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Orbits,
    Close,
    Obstruction,
    Solve,
    FlowSolve,
    DiffSolve,
    Distortion,
    Conformal,
    Proptest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Orbits => "orbits",
            Command::Close => "close",
            Command::Obstruction => "obstruction",
            Command::Solve => "solve",
            Command::FlowSolve => "flowsolve",
            Command::DiffSolve => "diffsolve",
            Command::Distortion => "distortion",
            Command::Conformal => "conformal",
            Command::Proptest => "proptest",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "orbits" => Command::Orbits,
            "close" => Command::Close,
            "obstruction" => Command::Obstruction,
            "solve" => Command::Solve,
            "flowsolve" => Command::FlowSolve,
            "diffsolve" => Command::DiffSolve,
            "distortion" => Command::Distortion,
            "conformal" => Command::Conformal,
            "proptest" => Command::Proptest,
            _ => return Err(LabError::ConfigParse(format!("unknown command {s:?}"))),
        })
    }
}

/// A finished run: the report and any extra files (CSV, JSON) by name.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    /// Writes `report.json`, the extra files and every plot series.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut paths = vec![write_text(dir, "report.json", &self.report.to_json())?];
        for (name, text) in &self.files {
            paths.push(write_text(dir, name, text)?);
        }
        paths.extend(emit_all_plot_data(&self.report, dir)?);
        Ok(paths)
    }

    pub fn exit_code(&self) -> i32 {
        self.report.status.exit_code
    }
}

struct Ctx {
    report: RunReport,
    files: Vec<(String, String)>,
}

impl Ctx {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f();
        self.report
            .timing
            .stages_ms
            .push((name.to_string(), t0.elapsed().as_secs_f64() * 1e3));
        out
    }

    fn file(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text));
    }

    fn fail_obstruction(&mut self, max_defect: f64, tol: f64) {
        self.report.warnings.push(Warning {
            kind: "obstruction_fails".into(),
            inequality: "d(Phi(p, period), Id) <= tol at every periodic point".into(),
            margin: max_defect - tol,
        });
        self.report.status.exit_code = EXIT_OBSTRUCTION_FAILS;
        self.report.status.message = Some(format!(
            "periodic orbit obstruction fails: max defect {max_defect:e} > {tol:e}"
        ));
    }
}

/// Runs one subcommand. The thread count, when configured, bounds rayon
/// workers for the whole run.
pub fn run(command: Command, config: ExperimentConfig) -> Result<RunOutput> {
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| LabError::ConfigParse(format!("threads: {e}")))?;
            pool.install(|| run_inner(command, config))
        }
        None => run_inner(command, config),
    }
}

fn run_inner(command: Command, config: ExperimentConfig) -> Result<RunOutput> {
    let mut cx = Ctx {
        report: RunReport::new(command.name(), config.clone()),
        files: Vec::new(),
    };
    let sys = config.system.build()?;
    match command {
        Command::Orbits => orbits(&mut cx, &config, &sys)?,
        Command::Close => close(&mut cx, &config, &sys)?,
        Command::Obstruction => {
            obstruction(&mut cx, &config, &sys)?;
        }
        Command::Solve => solve(&mut cx, &config, &sys)?,
        Command::FlowSolve => flowsolve(&mut cx, &config, &sys)?,
        Command::DiffSolve => diffsolve(&mut cx, &config, &sys)?,
        Command::Distortion => distortion(&mut cx, &config, &sys)?,
        Command::Conformal => conformal_cmd(&mut cx, &config, &sys)?,
        Command::Proptest => {
            let rep = cx.stage("battery", || {
                battery::run_battery(&sys, config.proptest.samples, config.seed)
            })?;
            if !rep.all_passed() {
                cx.report.status.exit_code = 1;
                cx.report.status.message = Some("property violations found".into());
            }
            cx.report.insert("battery", rep);
        }
    }
    Ok(RunOutput {
        report: cx.report,
        files: cx.files,
    })
}

fn build_generator(config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<Generator> {
    config
        .generator()?
        .build(sys, config.diffeo)
        .ctx("generator")
}

#[derive(Serialize)]
struct PeriodCount {
    n: u32,
    enumerated: usize,
    formula: String,
}

fn orbits(cx: &mut Ctx, config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<()> {
    let o = &config.orbits;
    let counts = cx.stage("counts", || {
        (1..=o.n_max)
            .map(|n| {
                Ok(PeriodCount {
                    n,
                    enumerated: fixed_points_of_power(sys, n, o.cap).ctx("orbits")?.len(),
                    formula: count_periodic(sys, n).to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let orbits = cx.stage("enumerate", || {
        enumerate_periodic(sys, o.n_max, o.cap).ctx("orbits")
    })?;
    let mut csv = String::from("orbit,period,numerators,denominators\n");
    for (i, orb) in orbits.iter().enumerate() {
        let (num, den) = orb.representative().fraction_parts();
        csv.push_str(&format!(
            "{i},{},{},{}\n",
            orb.period,
            num.join(" "),
            den.join(" ")
        ));
    }
    cx.file("periodic_orbits.csv", csv);
    cx.report.insert("counts", &counts);
    cx.report.insert("orbit_count", orbits.len());
    cx.report.insert(
        "counts_match",
        counts.iter().all(|c| c.enumerated.to_string() == c.formula),
    );
    Ok(())
}

#[derive(Serialize, Default)]
struct CloseSummary {
    samples: usize,
    exact_periodic: usize,
    bound_violations: usize,
    max_messenger_residual: f64,
    max_k_used: f64,
    /// Largest `d(x, p) / (K·d(fⁿx, x))`.
    max_start_ratio: f64,
}

fn close(cx: &mut Ctx, config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<()> {
    let o = config.close.clone();
    let summary = cx.stage("closing", || {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = CloseSummary::default();
        for _ in 0..o.samples {
            let n = rng.gen_range(1..=o.n_max.max(1));
            let x = periodic::near_return_point(sys, n, o.gap, &mut rng).ctx("close")?;
            let r = closing_point(sys, &x, n, o.eps0).ctx("close")?;
            s.samples += 1;
            if sys.apply(&r.p, n).ctx("close")? == r.p {
                s.exact_periodic += 1;
            }
            if !(r.bounds_ok.start && r.bounds_ok.end) {
                s.bound_violations += 1;
            }
            s.max_messenger_residual = s.max_messenger_residual.max(r.messenger_residual);
            s.max_k_used = s.max_k_used.max(r.k_used);
            if r.delta > 0.0 {
                s.max_start_ratio = s.max_start_ratio.max(r.dist_x_p / (r.k_used * r.delta));
            }
        }
        Ok(s)
    })?;
    cx.report.insert("closing", summary);
    Ok(())
}

/// Returns whether the obstruction vanishes.
fn obstruction(cx: &mut Ctx, config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<bool> {
    let gen = build_generator(config, sys)?;
    let o = config.obstruction.clone();
    let rep = cx.stage("obstruction", || {
        livsic::check_obstruction(sys, &gen, o.n_max, o.tol, o.cap).ctx("obstruction")
    })?;
    let mut csv = String::from("orbit,period,defect,defect_second_point\n");
    for d in &rep.per_orbit {
        csv.push_str(&format!(
            "{},{},{:e},{:e}\n",
            d.orbit, d.period, d.defect, d.defect_second_point
        ));
    }
    cx.file("defects.csv", csv);
    let ok = matches!(rep.verdict, Verdict::Vanishes { .. });
    if !ok {
        cx.fail_obstruction(rep.max_defect, o.tol);
    }
    cx.report.insert(
        "obstruction",
        serde_json::json!({
            "n_max": rep.n_max,
            "orbits": rep.per_orbit.len(),
            "max_defect": rep.max_defect,
            "verdict": rep.verdict,
        }),
    );
    Ok(ok)
}

fn grid_csv(dim: usize, grid_res: usize, values: &[GroupElement]) -> String {
    let centers = grid_centers(dim, grid_res);
    let mut csv = String::from("cell");
    for i in 0..dim {
        csv.push_str(&format!(",y{i}"));
    }
    csv.push_str(",value\n");
    for (i, (c, v)) in centers.iter().zip(values).enumerate() {
        csv.push_str(&i.to_string());
        for y in c {
            csv.push_str(&format!(",{y}"));
        }
        let entries: Vec<String> = value_entries(v).iter().map(|e| format!("{e:e}")).collect();
        csv.push_str(&format!(",{}\n", entries.join(" ")));
    }
    csv
}

fn solve(cx: &mut Ctx, config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<()> {
    if !obstruction(cx, config, sys)? && !config.solve.force {
        return Ok(());
    }
    let gen = build_generator(config, sys)?;
    let id = GroupElement::identity(gen.target());
    let params = config.solver.clone();
    let sol = cx.stage("solve", || {
        livsic::solve_transfer(sys, &gen, &params, &id, SolverMetric::Group).ctx("solve")
    })?;
    cx.report.warnings.extend(sol.warnings.iter().cloned());
    cx.report.insert("solution", sol.summary());
    if let Some(psi) = gen.coboundary_psi() {
        let rec = cx.stage("recovery", || sol.recovery_error(psi).ctx("recovery"))?;
        cx.report.insert("recovery_error", rec);
    }
    cx.file(
        "transfer_grid.csv",
        grid_csv(sys.dim(), sol.grid_res, &sol.grid_values),
    );
    if !config.solve.ladder.is_empty() {
        let rungs = cx.stage("ladder", || {
            livsic::coverage_ladder(
                sys,
                &gen,
                &params,
                &config.solve.ladder,
                &id,
                SolverMetric::Group,
            )
            .ctx("ladder")
        })?;
        let mut by_cov: Vec<_> = rungs.iter().collect();
        by_cov.sort_by(|a, b| a.coverage_radius.total_cmp(&b.coverage_radius));
        cx.report.series.insert(
            "residual_vs_coverage".into(),
            by_cov
                .iter()
                .map(|r| (r.coverage_radius, r.residual))
                .collect(),
        );
        let rec: Vec<(f64, f64)> = by_cov
            .iter()
            .filter_map(|r| r.recovery.map(|e| (r.coverage_radius, e)))
            .collect();
        if !rec.is_empty() {
            cx.report.series.insert("recovery_vs_coverage".into(), rec);
        }
        cx.report.insert("ladder", &rungs);
    }
    Ok(())
}

fn flow_algebra(
    config: &ExperimentConfig,
    sys: &ToralAutomorphism,
) -> Result<Arc<dyn FlowAlgebra>> {
    let spec = config.generator()?;
    let kind = GroupKind::parse(&spec.group, config.diffeo).ctx("generator")?;
    let GroupKind::Matrix(group, _) = kind else {
        return Err(LabError::ConfigParse(
            "flow generators must be matrix valued".into(),
        ));
    };
    Ok(match config.flowsolve.kind {
        FlowGeneratorKind::Constant => {
            let mut v = AlgebraElement::zero(kind);
            for t in &spec.coeffs {
                v.add_scaled(
                    &groups::basis_element(kind, &t.basis).ctx("generator")?,
                    t.amp,
                )
                .ctx("generator")?;
            }
            let AlgebraElement::Matrix(x) = v else {
                unreachable!()
            };
            Arc::new(ConstantFlow { group, x })
        }
        FlowGeneratorKind::Suspended => Arc::new(SuspendedGenerator {
            gen: build_generator(config, sys)?,
        }),
        FlowGeneratorKind::Coboundary => Arc::new(FlowCoboundary {
            psi: AlgebraMap::new(kind, &spec.coeffs, None).ctx("generator")?,
            base: sys.clone(),
            group,
        }),
    })
}

fn flowsolve(cx: &mut Ctx, config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<()> {
    let gen = flow_algebra(config, sys)?;
    let flow = SuspensionFlow::new(sys.clone());
    let alpha = config.generator()?.alpha;
    let sol = cx.stage("flowsolve", || {
        livsic::solve_transfer_flow(&flow, gen.as_ref(), &config.flow, alpha).ctx("flowsolve")
    })?;
    cx.report.warnings.extend(sol.warnings.iter().cloned());
    cx.report.insert(
        "solution",
        serde_json::json!({
            "base_point": sol.base_point,
            "grid_res": sol.grid_res,
            "s_res": sol.s_res,
            "coverage_radius": sol.coverage_radius,
            "residual": sol.residual,
            "orbit_residual": sol.orbit_residual,
            "localization": sol.localization,
        }),
    );
    if config.flowsolve.kind == FlowGeneratorKind::Coboundary {
        let spec = config.generator()?;
        let kind = GroupKind::parse(&spec.group, config.diffeo).ctx("generator")?;
        let GroupKind::Matrix(group, _) = kind else {
            unreachable!()
        };
        let cob = FlowCoboundary {
            psi: AlgebraMap::new(kind, &spec.coeffs, None).ctx("generator")?,
            base: sys.clone(),
            group,
        };
        let rec = cx.stage("recovery", || {
            sol.recovery_error(|x, s| cob.psi_at(x, s)).ctx("recovery")
        })?;
        cx.report.insert("recovery_error", rec);
    }
    let per_level = sol.grid_values.len() / sol.s_res;
    let mut csv = String::new();
    for j in 0..sol.s_res {
        let part = grid_csv(
            sys.dim(),
            sol.grid_res,
            &sol.grid_values[j * per_level..(j + 1) * per_level],
        );
        for (k, line) in part.lines().enumerate() {
            if k == 0 {
                if j == 0 {
                    csv.push_str(&format!("s,{line}\n"));
                }
                continue;
            }
            csv.push_str(&format!("{},{line}\n", sol.level_s(j)));
        }
    }
    cx.file("transfer_grid.csv", csv);
    Ok(())
}

fn diffsolve(cx: &mut Ctx, config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<()> {
    if !obstruction(cx, config, sys)? && !config.diffsolve.force {
        return Ok(());
    }
    let gen = build_generator(config, sys)?;
    let o = config.diffsolve.clone();
    let sol = cx.stage("diffsolve", || {
        livsic::solve_transfer_diffeo(sys, &gen, &config.solver, o.r, o.kappa).ctx("diffsolve")
    })?;
    cx.report
        .warnings
        .extend(sol.solution.warnings.iter().cloned());
    cx.report.insert("solution", sol.solution.summary());
    cx.report.insert("residual_low_order", sol.residual_low);
    cx.report.insert("hyperbolicity", &sol.hyperbolicity);
    if let Some(psi) = gen.coboundary_psi() {
        let rec = cx.stage("recovery", || {
            sol.solution.recovery_error(psi).ctx("recovery")
        })?;
        cx.report.insert("recovery_error", rec);
    }
    cx.file(
        "transfer_grid.csv",
        grid_csv(sys.dim(), sol.solution.grid_res, &sol.solution.grid_values),
    );
    Ok(())
}

fn distortion(cx: &mut Ctx, config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<()> {
    let o = config.distortion.clone();
    let rep: DistortionReport = match config.system.build_perturbed()? {
        Some(pert) => cx.stage("distortion", || {
            let g = DMatrix::identity(sys.dim(), sys.dim());
            conformal::distortion_growth(&pert, &g, &grid_centers(sys.dim(), o.res), o.n_max)
                .ctx("distortion")
        })?,
        None => {
            let rep = cx.stage("distortion", || {
                conformal::distortion_growth_linear(sys, o.metric, o.n_max, o.res, o.per_n_max)
                    .ctx("distortion")
            })?;
            let uni = cx.stage("uniform", || {
                conformal::uniform_distortion_experiment(sys, o.n_max, o.per_n_max).ctx("uniform")
            })?;
            cx.report.insert("uniform", uni);
            rep
        }
    };
    let mut csv = String::from("n,K\n");
    for (i, k) in rep.k_per_n.iter().enumerate() {
        csv.push_str(&format!("{},{k:e}\n", i + 1));
    }
    cx.file("distortion.csv", csv);
    cx.report.series.insert(
        "distortion_growth".into(),
        rep.k_per_n
            .iter()
            .enumerate()
            .map(|(i, k)| ((i + 1) as f64, k.ln()))
            .collect(),
    );
    cx.report.insert("distortion", rep);
    Ok(())
}

fn conformal_cmd(cx: &mut Ctx, config: &ExperimentConfig, sys: &ToralAutomorphism) -> Result<()> {
    let o = config.conformal.clone();
    let s = cx.stage("construct", || {
        conformal::build_conformal_structure(sys, o.grid_res, o.orbit_len, o.seed_form, config.seed)
            .ctx("conformal")
    })?;
    let periodic = cx.stage("periodic", || {
        conformal::periodic_conformality_check(sys, o.periodic_n_max).ctx("conformal")
    })?;
    let scalar = periodic.iter().map(|p| p.scalar_defect).fold(0.0, f64::max);
    let conf = periodic
        .iter()
        .map(|p| p.conformality_defect)
        .fold(0.0, f64::max);
    if scalar > 1e-9 {
        // the construction can succeed without this hypothesis
        cx.report.warnings.push(Warning {
            kind: "periodic_derivative_not_scalar".into(),
            inequality: "Df^N|E^s = gamma Id at periodic points".into(),
            margin: scalar,
        });
    }
    cx.report.insert("structure", s.summary());
    cx.report.insert(
        "periodic",
        serde_json::json!({
            "orbits": periodic.len(),
            "max_scalar_defect": scalar,
            "max_conformality_defect": conf,
        }),
    );
    cx.report.series.insert(
        "form_distance".into(),
        s.distance_to_eigen
            .iter()
            .enumerate()
            .map(|(n, d)| (n as f64, *d))
            .collect(),
    );
    let k = s.fiber_dim;
    let cells: Vec<Vec<f64>> = s
        .grid_forms
        .iter()
        .map(|g| {
            (0..k)
                .flat_map(|i| (i..k).map(move |j| (i, j)))
                .map(|(i, j)| g[(i, j)])
                .collect()
        })
        .collect();
    let forms = serde_json::json!({
        "fiber_dim": k,
        "grid_res": s.grid_res,
        "upper_triangular": cells,
    });
    cx.file(
        "forms.json",
        serde_json::to_string(&forms).expect("forms serialize"),
    );
    Ok(())
}
