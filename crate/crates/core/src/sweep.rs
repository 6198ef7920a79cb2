//! Depth sweeps over random networks and fixture generation.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{check_bounds, moment_matrix, BoundCheck, VANISHING_THRESHOLD};
use crate::bounds::bounds_for;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::pipeline::{diagnose_prepared, solve_target, Prepared};
use crate::sdpform::{InputScaling, Variant};
use crate::solver::{SolverConfig, Status};

pub const CSV_COLUMNS: [&str; 10] =
    ["seed", "L", "variant", "target", "gamma", "status", "gap", "lambda_star", "min_eig_bound", "runtime_ms"];

/// A relaxation variant plus optional scaling pre-passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub variant: Variant,
    pub dscale: bool,
    pub wscale: bool,
}

impl Method {
    pub const fn plain(variant: Variant) -> Self {
        Self { variant, dscale: false, wscale: false }
    }

    pub fn label(&self) -> String {
        match (self.variant, self.dscale, self.wscale) {
            (Variant::Base, true, false) => "dscale".into(),
            (Variant::Base, false, true) => "wscale".into(),
            (v, d, w) => {
                let mut s = v.name().to_string();
                if d {
                    s.push_str("+dscale");
                }
                if w {
                    s.push_str("+wscale");
                }
                s
            }
        }
    }

    /// Whether every feasible point obeys the trace and diagonal bounds.
    pub fn has_lemma_bounds(&self) -> bool {
        matches!(self.variant, Variant::Base | Variant::BRemove | Variant::ProblemB | Variant::Leaky(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `base`, `eps=0.05`, `dscale`, `wscale`, `bremove+dscale`, ...
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('+');
        let head = parts.next().unwrap_or_default();
        let mut m = match head {
            "dscale" => Method { variant: Variant::Base, dscale: true, wscale: false },
            "wscale" => Method { variant: Variant::Base, dscale: false, wscale: true },
            other => Method::plain(other.parse()?),
        };
        for p in parts {
            match p {
                "dscale" => m.dscale = true,
                "wscale" => m.wscale = true,
                _ => return Err(Error::Parameter(format!("unknown modifier {p:?} in {s:?}"))),
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub width: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub radius: f64,
    pub methods: Vec<Method>,
    pub solver: SolverConfig,
    /// Solver settings for the strict-feasibility problems.
    pub diagnose_solver: SolverConfig,
    /// Record wall-clock time per cell (makes the CSV non-reproducible).
    pub timing: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            depths: vec![2, 4, 6, 8, 10, 12],
            seeds: (0..5).collect(),
            width: 8,
            input_dim: 4,
            output_dim: 3,
            radius: 0.05,
            methods: vec![Method::plain(Variant::Base), Method::plain(Variant::BRemove)],
            solver: SolverConfig::default(),
            diagnose_solver: SolverConfig::diagnostic(),
            timing: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::Parameter("sweep needs at least one depth, seed and variant".into()));
        }
        if self.width == 0 || self.input_dim == 0 || self.output_dim < 2 {
            return Err(Error::Parameter("width and input dimension must be >= 1, outputs >= 2".into()));
        }
        if self.depths.contains(&0) {
            return Err(Error::Parameter("depth must be >= 1".into()));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Radius(self.radius));
        }
        self.solver.validate()?;
        self.diagnose_solver.validate()
    }
}

/// One random verification instance of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub depth: usize,
    pub seed: u64,
    pub net: Network,
    pub center: Vec<f64>,
    pub target: usize,
}

const MAX_CENTER_DRAWS: usize = 1000;

/// Deterministic instance for `(depth, seed)`: weights `N(0, 1/fan_in)`,
/// biases `U[-0.1, 0.1]`, center uniform in `[-1, 1]`, random non-predicted target.
///
/// Centers whose `radius`-box leaves some hidden layer without a possibly
/// active neuron are redrawn, since pruning cannot handle them.
pub fn instance(depth: usize, seed: u64, width: usize, input_dim: usize, output_dim: usize, radius: f64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ depth as u64);
    let net = Network::random(input_dim, &vec![width; depth], output_dim, &mut rng)?;
    for _ in 0..MAX_CENTER_DRAWS {
        let center: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let bounds = bounds_for(&net, &center, radius)?;
        if (1..=depth).any(|i| bounds.layer(i).upper.iter().all(|&u| u <= 0.0)) {
            continue;
        }
        let predicted = net.predict(&center)?;
        let others: Vec<usize> = (0..output_dim).filter(|&t| t != predicted).collect();
        let target = others[rng.random_range(0..others.len())];
        return Ok(Instance { depth, seed, net, center, target });
    }
    Err(Error::Parameter(format!("no center with a live neuron in every layer for depth {depth}, seed {seed}")))
}

/// Full outcome of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub seed: u64,
    pub depth: usize,
    pub method: Method,
    pub target: usize,
    pub gamma: f64,
    pub status: Status,
    pub gap: f64,
    pub lambda_star: f64,
    pub lambda_status: Status,
    pub min_eig_bound: f64,
    pub runtime_ms: Option<f64>,
    /// Bound checks of the returned moment matrix (Optimal solves only).
    pub bounds: Option<BoundCheck>,
    /// `tr(P)` of the returned moment matrix.
    pub trace: f64,
    pub hidden_after_prune: usize,
}

impl SweepRecord {
    pub fn row(&self) -> SweepRow {
        SweepRow {
            seed: self.seed,
            depth: self.depth,
            variant: self.method.label(),
            target: self.target,
            gamma: self.gamma,
            status: self.status,
            gap: self.gap,
            lambda_star: self.lambda_star,
            min_eig_bound: self.min_eig_bound,
            runtime_ms: self.runtime_ms,
        }
    }

    pub fn solved(&self) -> bool {
        self.status == Status::Optimal
    }

    /// `lambda*` with failed or non-positive results counted as zero.
    pub fn lambda_or_zero(&self) -> f64 {
        if self.lambda_status == Status::Optimal && self.lambda_star > VANISHING_THRESHOLD {
            self.lambda_star
        } else {
            0.0
        }
    }
}

/// Flat view of a record with the CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    #[serde(rename = "L")]
    pub depth: usize,
    pub variant: String,
    pub target: usize,
    pub gamma: f64,
    pub status: Status,
    pub gap: f64,
    pub lambda_star: f64,
    pub min_eig_bound: f64,
    pub runtime_ms: Option<f64>,
}

/// Runs one cell: verification of the instance's target plus the
/// strict-feasibility diagnosis, both under `method`.
pub fn run_cell(spec: &SweepSpec, inst: &Instance, method: &Method) -> Result<SweepRecord> {
    let start = std::time::Instant::now();
    let prep = Prepared::new(&inst.net, &inst.center, spec.radius, true, method.wscale)?;
    let dscale = method.dscale.then_some(InputScaling::UpperMagnitude);
    let solved = solve_target(&prep, inst.target, method.variant, dscale, &spec.solver)?;
    let diag = diagnose_prepared(&prep, method.variant, dscale, &spec.diagnose_solver)?;
    let p = moment_matrix(&solved.problem, &solved.solution.x);
    let bounds = match (&p, solved.solution.status, &solved.problem.meta.layout) {
        (Some(p), Status::Optimal, Some(layout)) => Some(check_bounds(p, layout, &prep.analytic)?),
        _ => None,
    };
    Ok(SweepRecord {
        seed: inst.seed,
        depth: inst.depth,
        method: *method,
        target: inst.target,
        gamma: solved.report.gamma,
        status: solved.report.status,
        gap: solved.report.gap,
        lambda_star: diag.strict.lambda_star,
        lambda_status: diag.strict.status,
        min_eig_bound: prep.analytic.min_eig_bound,
        runtime_ms: spec.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
        bounds,
        trace: p.map_or(f64::NAN, |p| p.trace()),
        hidden_after_prune: prep.net.hidden_neurons(),
    })
}

/// Runs every `(depth, seed, method)` cell; records come back in that order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let instances: Vec<Instance> = spec
        .depths
        .iter()
        .flat_map(|&d| spec.seeds.iter().map(move |&s| (d, s)))
        .map(|(d, s)| instance(d, s, spec.width, spec.input_dim, spec.output_dim, spec.radius))
        .collect::<Result<_>>()?;
    let cells: Vec<(&Instance, &Method)> =
        instances.iter().flat_map(|inst| spec.methods.iter().map(move |m| (inst, m))).collect();
    cells.par_iter().map(|(inst, m)| run_cell(spec, inst, m)).collect()
}

pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        w.serialize(r.row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(records: &[SweepRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

/// Median of `values`; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub width: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub radius: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let s = SweepSpec::default();
        Self {
            depths: s.depths,
            seeds: s.seeds,
            width: s.width,
            input_dim: s.input_dim,
            output_dim: s.output_dim,
            radius: s.radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub file: String,
    pub depth: usize,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    pub input: Vec<f64>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: FixtureSpec,
    pub fixtures: Vec<FixtureEntry>,
    /// Centers in fixture order, so `manifest.json#k` selects the k-th input.
    pub inputs: Vec<Vec<f64>>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes one network file per `(depth, seed)` plus `manifest.json`.
pub fn gen_fixtures(dir: &Path, spec: &FixtureSpec) -> Result<Manifest> {
    if spec.depths.is_empty() || spec.seeds.is_empty() {
        return Err(Error::Parameter("fixture spec needs at least one depth and seed".into()));
    }
    fs::create_dir_all(dir)?;
    let mut fixtures = Vec::new();
    for &d in &spec.depths {
        for &s in &spec.seeds {
            let inst = instance(d, s, spec.width, spec.input_dim, spec.output_dim, spec.radius)?;
            let file = format!("net_L{d}_s{s}.json");
            inst.net.save(dir.join(&file))?;
            fixtures.push(FixtureEntry {
                file,
                depth: d,
                seed: s,
                layer_sizes: inst.net.layer_sizes(),
                input: inst.center,
                target: inst.target,
            });
        }
    }
    let inputs = fixtures.iter().map(|f| f.input.clone()).collect();
    let manifest = Manifest { spec: spec.clone(), fixtures, inputs };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(manifest)
}
