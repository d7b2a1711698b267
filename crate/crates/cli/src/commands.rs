use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use pfit::classify::{classify as run_classify, PairPlan};
use pfit::placement::{
    self, controllability_vector, minimum_full_cover, reachable_cells, write_coverage_heatmap,
    PlacementProblem, PlacementSolution,
};
use pfit::systems::{load_gridded_flow, make_builtin, DEFAULT_STEP};
use pfit::transfer::{default_horizon, total_transfer, transfer_matrix};
use pfit::{build as build_matrix, CellSet, Grid, LogBase, Matrix, Measure, System, Transfer};

use crate::config::RunConfig;
use crate::{BuildArgs, ClassifyArgs, ConfigError, ControllabilityArgs, InfoArgs, PlaceArgs, TransferArgs};

fn system(cfg: &RunConfig) -> anyhow::Result<System> {
    let sc = &cfg.system;
    if sc.name == "gridded-flow" {
        let path = sc
            .velocity_file
            .as_ref()
            .ok_or_else(|| ConfigError::new("gridded-flow needs system.velocity_file"))?;
        let sys = load_gridded_flow(path, sc.step.unwrap_or(DEFAULT_STEP), sc.substeps.unwrap_or(1))
            .with_context(|| format!("loading {}", path.display()))?;
        return Ok(sys);
    }
    let sys = make_builtin(&sc.name, &sc.params)?;
    if sc.step.is_some() || sc.substeps.is_some() {
        let step = sc.step.or(sys.step()).unwrap_or(DEFAULT_STEP);
        let substeps = sc.substeps.or(sys.substeps()).unwrap_or(1);
        return Ok(sys.with_step(step, substeps)?);
    }
    Ok(sys)
}

fn partition(cfg: &RunConfig, sys: &System) -> anyhow::Result<Grid> {
    Ok(Grid::new(*sys.domain(), &cfg.dims)?)
}

/// Sidecar path of a matrix CSV: `name.csv` -> `name.meta.json`.
fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

struct Pipeline {
    cfg: RunConfig,
    sys: System,
    grid: Grid,
    p: Matrix,
}

impl Pipeline {
    fn new(cfg: RunConfig, matrix: Option<&Path>) -> anyhow::Result<Self> {
        let sys = system(&cfg)?;
        let grid = partition(&cfg, &sys)?;
        let p = match matrix {
            Some(path) => {
                let p = Matrix::load(path, meta_path(path)).with_context(|| format!("loading {}", path.display()))?;
                if p.n() != grid.len() {
                    return Err(ConfigError::new(format!(
                        "matrix {} has {} cells but the configured partition has {}",
                        path.display(),
                        p.n(),
                        grid.len()
                    ))
                    .into());
                }
                p
            }
            None => build_matrix(&sys, &grid, cfg.samples_per_cell, cfg.sampling, cfg.outside_policy)?,
        };
        Ok(Self { cfg, sys, grid, p })
    }

    fn measure(&self) -> anyhow::Result<Measure> {
        match self.cfg.measure.as_str() {
            "lebesgue" => Ok(Measure::lebesgue(&self.grid)),
            "uniform" => Ok(Measure::uniform(self.p.n())),
            path => {
                let weights: Vec<f64> = serde_json::from_reader(File::open(path)?)
                    .map_err(|e| ConfigError::new(format!("invalid measure file {path}: {e}")))?;
                if weights.len() != self.p.n() {
                    return Err(ConfigError::new(format!(
                        "measure file {path} has {} weights for {} cells",
                        weights.len(),
                        self.p.n()
                    ))
                    .into());
                }
                Ok(Measure::new(weights)?)
            }
        }
    }

    fn n_max(&self) -> usize {
        self.cfg.n_max.unwrap_or_else(|| default_horizon(self.p.n()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Velocity at every cell centre of a flow system (`None` for maps), in the
/// heatmap's grid layout.
fn write_velocity_field(path: &Path, sys: &System, grid: &Grid) -> anyhow::Result<bool> {
    if sys.velocity(&grid.cell_center(0)).is_none() {
        return Ok(false);
    }
    let nx = grid.dims()[0];
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    let label: Vec<String> = grid.dims().iter().map(|d| d.to_string()).collect();
    writeln!(w, "# dims: {}", label.join("x"))?;
    writeln!(w, "ix,iy,cell,x,y,u,v")?;
    for cell in 0..grid.len() {
        let c = grid.cell_center(cell);
        let u = sys.velocity(&c).unwrap_or([0.0, 0.0]);
        writeln!(w, "{},{},{cell},{},{},{},{}", cell % nx, cell / nx, c[0], c[1], u[0], u[1])?;
    }
    w.flush()?;
    Ok(true)
}

fn cells(arg: &[usize], n: usize) -> anyhow::Result<CellSet> {
    let set = CellSet::new(arg.to_vec());
    set.check(n)?;
    Ok(set)
}

pub fn build(args: &BuildArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&args.ov)?;
    let pipe = Pipeline::new(cfg, None)?;
    let csv = pipe.cfg.out("matrix.csv")?;
    pipe.p.save(&csv, meta_path(&csv))?;
    let audit = pipe.p.audit();
    println!("cells: {}", pipe.p.n());
    println!("nonzeros: {}", pipe.p.nnz());
    match audit.exact {
        Some(exact) => println!("row sums exact (integer counts): {exact}"),
        None => println!("row sums exact (integer counts): n/a"),
    }
    println!("max row-sum deviation: {:e}", audit.max_deviation);
    println!("rows with outside mass: {}", audit.rows_with_outside_mass);
    println!("rows with escaped samples: {}", audit.rows_with_escapes);
    println!("total outside mass: {:e}", audit.total_outside_mass);
    println!("wrote {}", csv.display());
    Ok(())
}

#[derive(Serialize)]
struct TransferOutput<'a> {
    source: &'a CellSet,
    target: &'a CellSet,
    n_max: usize,
    measure: &'a str,
    log_base: LogBase,
    mass_by_step: &'a [f64],
    transfer_by_step: Vec<f64>,
    total: f64,
}

pub fn transfer(args: &TransferArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&args.ov)?;
    let pipe = Pipeline::new(cfg, args.matrix.as_deref())?;
    let mu = pipe.measure()?;
    let n_max = pipe.n_max();
    let base = pipe.cfg.log_base;
    match (&args.source, &args.target) {
        (Some(src), Some(dst)) => {
            let a = cells(src, pipe.p.n())?;
            let b = cells(dst, pipe.p.n())?;
            let report = total_transfer(&pipe.p, &mu, &a, &b, n_max)?;
            let out = TransferOutput {
                source: &a,
                target: &b,
                n_max,
                measure: &pipe.cfg.measure,
                log_base: base,
                mass_by_step: &report.mass_by_step,
                transfer_by_step: report.transfer_by_step.iter().map(|&t| base.convert(t)).collect(),
                total: base.convert(report.total),
            };
            let json = pipe.cfg.out("transfer_report.json")?;
            write_json(&json, &out)?;
            report.write_steps_csv(pipe.cfg.out("transfer_steps.csv")?, base)?;
            println!("total transfer: {} {}", out.total, base_name(base));
            println!("wrote {}", json.display());
        }
        _ => {
            let t = transfer_matrix(&pipe.p, &mu, n_max)?;
            let csv = pipe.cfg.out("transfer_matrix.csv")?;
            t.save(&csv, meta_path(&csv), base, &pipe.cfg.measure)?;
            println!("nonzero transfers: {}", t.nnz());
            println!("largest entry: {} {}", base.convert(t.max_value()), base_name(base));
            println!("wrote {}", csv.display());
        }
    }
    Ok(())
}

fn base_name(base: LogBase) -> &'static str {
    match base {
        LogBase::Nats => "nats",
        LogBase::Bits => "bits",
    }
}

pub fn classify(args: &ClassifyArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::resolve(&args.ov)?;
    if let Some(v) = args.mixing_n_max {
        cfg.classify.n_max = Some(v);
    }
    if let Some(v) = args.tol {
        cfg.classify.tol = v;
    }
    if args.all_pairs {
        cfg.classify.pairs = PairPlan::AllPairs;
    }
    let pipe = Pipeline::new(cfg, args.matrix.as_deref())?;
    let mu = pipe.measure()?;
    let opts = pipe.cfg.classify.mixing_options(pipe.n_max());
    let report = run_classify(&pipe.p, &mu, pipe.cfg.classify.mass_threshold, &opts)?;
    let json = pipe.cfg.out("classification.json")?;
    write_json(&json, &report)?;
    println!("resolution: {:?}", report.resolution);
    println!("ergodic: {}", report.ergodic.verdict);
    println!("mixing: {}", report.mixing.verdict);
    if let Some(note) = &report.note {
        println!("note: {note}");
    }
    println!("wrote {}", json.display());
    Ok(())
}

#[derive(Serialize)]
struct Reachability {
    n_max: usize,
    covered: usize,
    coverage_fraction: f64,
    uncovered: Vec<usize>,
}

#[derive(Serialize)]
struct PlacementOutput<'a> {
    #[serde(flatten)]
    solution: &'a PlacementSolution,
    /// Cells reachable along positive transition entries, for comparison
    /// with transfer-based coverage.
    reachability: Reachability,
}

pub fn place(args: &PlaceArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::resolve(&args.ov)?;
    let pc = &mut cfg.placement;
    if let Some(v) = args.count {
        pc.count = v;
    }
    if let Some(v) = args.mode {
        pc.mode = v;
    }
    if let Some(v) = args.solver {
        pc.solver = v;
    }
    if let Some(v) = args.epsilon {
        pc.epsilon = v;
    }
    if let Some(v) = &args.admissible {
        pc.admissible = Some(v.clone());
    }
    if let Some(v) = args.full_cover_max {
        pc.full_cover_max = Some(v);
    }
    let pipe = Pipeline::new(cfg, args.matrix.as_deref())?;
    let n_max = pipe.n_max();
    let t = match &args.transfer_matrix {
        Some(path) => {
            let t = Transfer::load(path, meta_path(path)).with_context(|| format!("loading {}", path.display()))?;
            if t.n() != pipe.p.n() {
                return Err(ConfigError::new(format!(
                    "transfer matrix {} has {} cells, expected {}",
                    path.display(),
                    t.n(),
                    pipe.p.n()
                ))
                .into());
            }
            t
        }
        None => {
            let t = transfer_matrix(&pipe.p, &pipe.measure()?, n_max)?;
            if args.save_transfer {
                let csv = pipe.cfg.out("transfer_matrix.csv")?;
                t.save(&csv, meta_path(&csv), pipe.cfg.log_base, &pipe.cfg.measure)?;
            }
            t
        }
    };
    let pc = &pipe.cfg.placement;
    let admissible = pc.admissible.clone().unwrap_or_else(|| (0..t.n()).collect());
    let prob = PlacementProblem::with_options(&t, pc.count, pc.mode, admissible, pc.epsilon)?;
    let mut sol = placement::solve(&prob, pc.solver)?;
    if let Some(max) = pc.full_cover_max {
        sol.full_cover = Some(minimum_full_cover(&prob, max)?);
    }
    let reach = reachable_cells(&pipe.p, &sol.selected, pc.mode, n_max);
    let out = PlacementOutput {
        solution: &sol,
        reachability: Reachability {
            n_max,
            covered: reach.len(),
            coverage_fraction: reach.len() as f64 / t.n() as f64,
            uncovered: (0..t.n()).filter(|&j| !reach.contains(j)).collect(),
        },
    };
    let json = pipe.cfg.out("placement.json")?;
    write_json(&json, &out)?;
    let heat: Vec<f64> = sol.coverage_values.iter().map(|&v| pipe.cfg.log_base.convert(v)).collect();
    write_coverage_heatmap(pipe.cfg.out("coverage_heatmap.csv")?, &pipe.cfg.dims, &heat)?;
    write_velocity_field(&pipe.cfg.out("velocity_field.csv")?, &pipe.sys, &pipe.grid)?;
    println!("selected: {:?}", sol.selected);
    println!("coverage fraction (transfer >= epsilon): {}", sol.coverage_fraction);
    println!("coverage fraction (reachability): {}", out.reachability.coverage_fraction);
    println!("wrote {}", json.display());
    Ok(())
}

pub fn controllability(args: &ControllabilityArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&args.ov)?;
    let pipe = Pipeline::new(cfg, args.matrix.as_deref())?;
    let actuators = match (&args.actuators, &args.from_placement) {
        (Some(a), _) => a.clone(),
        (None, Some(path)) => {
            let sol = PlacementSolution::load_json(path)?;
            sol.selected
        }
        (None, None) => return Err(ConfigError::new("--actuators or --from-placement is required").into()),
    };
    let alpha = args.alpha.unwrap_or(pipe.cfg.placement.alpha);
    let report = controllability_vector(&pipe.p, &actuators, alpha, pipe.n_max(), args.threshold)?;
    let json = pipe.cfg.out("controllability.json")?;
    write_json(&json, &report)?;
    println!("coarse controllable: {}", report.coarse_controllable);
    println!("unreached cells: {}", report.unreached.len());
    println!("wrote {}", json.display());
    Ok(())
}

pub fn info(args: &InfoArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&args.ov)?;
    let sys = system(&cfg)?;
    let grid = partition(&cfg, &sys)?;
    println!("system: {} ({})", sys.name(), serde_json::to_value(sys.kind())?.as_str().unwrap_or(""));
    if let (Some(step), Some(sub)) = (sys.step(), sys.substeps()) {
        println!("euler step: {step} ({sub} substeps)");
    }
    let d = sys.domain();
    println!("domain: {:?} to {:?}", d.lo(), d.hi());
    println!("dims: {:?}", grid.dims());
    println!("cells: {}", grid.len());
    println!("cell measure: {:e}", grid.cell_measure(0));
    println!("partition hash: {}", grid.fingerprint());
    println!("samples per cell: {}", cfg.samples_per_cell);
    println!("sampling: {}", serde_json::to_string(&cfg.sampling)?);
    println!("transfer horizon: {}", cfg.n_max.unwrap_or_else(|| default_horizon(grid.len())));
    if let Some(path) = &args.matrix {
        let p = Matrix::load(path, meta_path(path)).with_context(|| format!("loading {}", path.display()))?;
        let audit = p.audit();
        println!("matrix: {} cells, {} nonzeros", p.n(), p.nnz());
        println!("matrix audit: {}", serde_json::to_string(&audit)?);
    }
    Ok(())
}
