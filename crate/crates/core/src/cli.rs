//! Batch front-end: configuration, command dispatch and artifact emission.
//!
//! A run reads one JSON document ([`RunConfig`]) and writes its artifacts
//! plus a `manifest.json` into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundstate::{ground_slopes, ground_space, ground_space_adapted, perturbation_rank, slope_validation};
use crate::io::{sha256_hex, write_atomic, write_json};
use crate::lattice::{cutoff_modes, dual_basis, kpath, DualLattice, KPath, Lattice, ModeSet};
use crate::linalg::{norm, Vec3};
use crate::material::{
    check_structure, check_weights, coefficients_from_primitives, coefficients_from_samples, validate_weights, GeometryPrimitive,
    MaterialWeights, ModulationPair, SampledGrid,
};
use crate::planewave::{assemble_gram, FiberBasis, FiberProblem};
use crate::projections::{discontinuity_probe, intersection_dimension, write_discontinuity_csv};
use crate::spectrum::{
    analytic_free_spectrum, label_bands, multiset_rel_deviation, solve_fiber_values, solve_many, write_band_csv,
};
use crate::symbol::{symbol_residuals, SymbolContext, SymbolPoint, SymbolResiduals, LAMBDA_MAX};

/// Exit status for a failed verification check.
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bands,
    Groundstate,
    Projections,
    SymbolCheck,
    Validate,
    Oracle,
    Convergence,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Bands,
        Command::Groundstate,
        Command::Projections,
        Command::SymbolCheck,
        Command::Validate,
        Command::Oracle,
        Command::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Groundstate => "groundstate",
            Command::Projections => "projections",
            Command::SymbolCheck => "symbol-check",
            Command::Validate => "validate",
            Command::Oracle => "oracle",
            Command::Convergence => "convergence",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatticeSpec {
    Preset { preset: LatticePreset, #[serde(default = "one")] a: f64 },
    Basis { basis: [Vec3; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticePreset {
    Cubic,
    Fcc,
}

fn one() -> f64 {
    1.0
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec::Preset { preset: LatticePreset::Cubic, a: 1.0 }
    }
}

impl LatticeSpec {
    pub fn build(&self) -> Result<Lattice> {
        match self {
            LatticeSpec::Preset { preset, a } => {
                if !(*a > 0.0) {
                    return Err(Error::Config(format!("lattice constant must be positive, got {a}")));
                }
                Ok(match preset {
                    LatticePreset::Cubic => Lattice::cubic(*a),
                    LatticePreset::Fcc => Lattice::fcc(*a),
                })
            }
            LatticeSpec::Basis { basis } => Lattice::new(*basis),
        }
    }
}

/// Where the material weights come from. Relative paths are resolved
/// against the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsSpec {
    Primitives(Vec<GeometryPrimitive>),
    /// JSON coefficient tables as written by [`MaterialWeights::to_json`].
    CoefficientFile(PathBuf),
    /// JSON [`SampledGrid`].
    GridFile(PathBuf),
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec::Primitives(vec![GeometryPrimitive::Background { eps: 1.0.into(), mu: 1.0.into() }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KUnits {
    /// Coordinates in the dual basis.
    #[default]
    Fractional,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KPathSpec {
    pub vertices: Vec<Vec3>,
    pub samples_per_segment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub zero_tol: f64,
    pub residual_tol: f64,
    /// Relative deviation allowed against the free-operator oracle.
    pub oracle_tol: f64,
    /// Symbol identities (entrywise).
    pub symbol_tol: f64,
    pub equivariance_tol: f64,
    /// Relative slope error allowed at the smallest `t`.
    pub slope_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            zero_tol: 1e-8,
            residual_tol: 1e-8,
            oracle_tol: 1e-10,
            symbol_tol: 1e-8,
            equivariance_tol: 1e-10,
            slope_tol: 5e-2,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        let all = [
            ("zero_tol", self.zero_tol),
            ("residual_tol", self.residual_tol),
            ("oracle_tol", self.oracle_tol),
            ("symbol_tol", self.symbol_tol),
            ("equivariance_tol", self.equivariance_tol),
            ("slope_tol", self.slope_tol),
        ];
        for (name, v) in all {
            if !(v > 0.0) {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Settings for `groundstate` and `projections`; `ts` are in units of `|e*₁|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSpec {
    pub direction: Vec3,
    pub ts: Vec<f64>,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { direction: [1.0, 0.3, 0.1], ts: vec![1e-1, 3e-2, 1e-2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolSpec {
    pub samples: usize,
    pub seed: u64,
    pub lambda_max: f64,
    /// Dual-lattice index used for the equivariance shift.
    pub shift: [i32; 3],
}

impl Default for SymbolSpec {
    fn default() -> Self {
        Self { samples: 20, seed: 7, lambda_max: LAMBDA_MAX, shift: [1, 0, 0] }
    }
}

/// One flat JSON document per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the command given on the command line, when present.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub weights: WeightsSpec,
    /// Mode cutoff radius in units of `|e*₁|`.
    pub cutoff: f64,
    #[serde(default)]
    pub k_path: Option<KPathSpec>,
    #[serde(default)]
    pub k_list: Option<Vec<Vec3>>,
    #[serde(default)]
    pub k_units: KUnits,
    /// Number of random k-points drawn when no k-path or k-list is given.
    #[serde(default = "default_random_k")]
    pub random_k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bands")]
    pub n_bands: usize,
    #[serde(default)]
    pub modulation: ModulationPair,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub groundstate: ProbeSpec,
    #[serde(default)]
    pub projections: ProbeSpec,
    #[serde(default)]
    pub symbol: SymbolSpec,
    /// Cutoffs (units of `|e*₁|`) for the `convergence` command.
    #[serde(default)]
    pub cutoffs: Vec<f64>,
    #[serde(default = "default_probe")]
    pub n_probe: usize,
}

fn default_random_k() -> usize {
    10
}

fn default_bands() -> usize {
    8
}

fn default_probe() -> usize {
    256
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff >= 0.0) || !self.cutoff.is_finite() {
            return Err(Error::Config(format!("cutoff must be finite and non-negative, got {}", self.cutoff)));
        }
        if self.k_path.is_some() && self.k_list.is_some() {
            return Err(Error::Config("give either k_path or k_list, not both".into()));
        }
        if self.n_bands == 0 {
            return Err(Error::Config("n_bands must be positive".into()));
        }
        self.tolerances.validate()?;
        self.modulation.validate()?;
        if !(self.symbol.lambda_max >= 0.0) {
            return Err(Error::Config("symbol.lambda_max must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything derived from a configuration before any solve.
pub struct Setup {
    pub lattice: Lattice,
    pub dual: DualLattice,
    pub basis: FiberBasis,
    pub weights: MaterialWeights,
    pub weights_hash: String,
    /// `|e*₁|`.
    pub unit: f64,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Material weights tabulated on every difference of `modes`.
pub fn load_weights(spec: &WeightsSpec, lattice: &Lattice, dual: &DualLattice, modes: &ModeSet, base: &Path) -> Result<MaterialWeights> {
    match spec {
        WeightsSpec::Primitives(p) => coefficients_from_primitives(p, lattice, &modes.differences(dual)),
        WeightsSpec::CoefficientFile(path) => MaterialWeights::from_json(&std::fs::read_to_string(resolve(base, path))?),
        WeightsSpec::GridFile(path) => {
            let grid: SampledGrid = serde_json::from_str(&std::fs::read_to_string(resolve(base, path))?)?;
            coefficients_from_samples(&grid, Some(&modes.differences(dual)))
        }
    }
}

impl Setup {
    pub fn new(config: &RunConfig, base: &Path) -> Result<Self> {
        Self::with_cutoff(config, config.cutoff, base)
    }

    pub fn with_cutoff(config: &RunConfig, cutoff: f64, base: &Path) -> Result<Self> {
        let lattice = config.lattice.build()?;
        let dual = dual_basis(&lattice)?;
        let unit = norm(dual.basis[0]);
        let modes = cutoff_modes(&dual, cutoff * unit);
        let weights = load_weights(&config.weights, &lattice, &dual, &modes, base)?;
        let weights_hash = sha256_hex(weights.to_json()?.as_bytes());
        Ok(Self { lattice, dual, basis: FiberBasis::new(modes), weights, weights_hash, unit })
    }

    fn to_cartesian(&self, units: KUnits, k: Vec3) -> Vec3 {
        match units {
            KUnits::Cartesian => k,
            KUnits::Fractional => {
                let mut out = [0.0; 3];
                for j in 0..3 {
                    for (o, b) in out.iter_mut().zip(self.dual.basis[j]) {
                        *o += k[j] * b;
                    }
                }
                out
            }
        }
    }

    /// The configured k-path or k-list, or `random_k` seeded points in the
    /// fundamental cell.
    pub fn k_samples(&self, config: &RunConfig) -> Result<KPath> {
        if let Some(p) = &config.k_path {
            let v: Vec<Vec3> = p.vertices.iter().map(|k| self.to_cartesian(config.k_units, *k)).collect();
            return kpath(&v, p.samples_per_segment);
        }
        if let Some(list) = &config.k_list {
            if list.is_empty() {
                return Err(Error::Config("k_list is empty".into()));
            }
            return Ok(KPath::from_points(list.iter().map(|k| self.to_cartesian(config.k_units, *k)).collect()));
        }
        Ok(KPath::from_points(random_cell_points(&self.dual, config.random_k.max(1), config.seed)))
    }
}

/// Seeded uniform points in the fundamental cell `[-½, ½)³` (dual coordinates).
pub fn random_cell_points(dual: &DualLattice, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let f: Vec3 = std::array::from_fn(|_| rng.random::<f64>() - 0.5);
            let mut k = [0.0; 3];
            for j in 0..3 {
                for (o, b) in k.iter_mut().zip(dual.basis[j]) {
                    *o += f[j] * b;
                }
            }
            k
        })
        .collect()
}

/// Result of a command: its exit status and the files it produced.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: Command,
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    weights_sha256: Option<String>,
    n_modes: Option<usize>,
    wall_time_s: f64,
    exit_code: i32,
    artifacts: Vec<String>,
    version: &'static str,
}

/// Runs `command` on the configuration text `config_text`.
///
/// `base` resolves relative file references in the configuration; `out`
/// overrides the configured output directory.
pub fn run(command: Command, config_text: &str, base: &Path, out: Option<&Path>) -> Result<Outcome> {
    let start = Instant::now();
    let config = RunConfig::from_json(config_text)?;
    if let Some(c) = config.command {
        if c != command {
            return Err(Error::Config(format!(
                "configuration is for `{}` but `{}` was requested",
                c.name(),
                command.name()
            )));
        }
    }
    let out_dir = match (out, &config.out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => resolve(base, o),
        (None, None) => PathBuf::from("out"),
    };
    let (mut outcome, setup_info) = match command {
        Command::Convergence => (run_convergence(&config, base, &out_dir)?, None),
        _ => {
            let setup = Setup::new(&config, base)?;
            let info = (setup.weights_hash.clone(), setup.basis.n_modes());
            let o = match command {
                Command::Bands => run_bands(&config, &setup, &out_dir)?,
                Command::Groundstate => run_groundstate(&config, &setup, &out_dir)?,
                Command::Projections => run_projections(&config, &setup, &out_dir)?,
                Command::SymbolCheck => run_symbol_check(&config, &setup, &out_dir)?,
                Command::Validate => run_validate(&config, &setup, &out_dir)?,
                Command::Oracle => run_oracle(&config, &setup, &out_dir)?,
                Command::Convergence => unreachable!(),
            };
            (o, Some(info))
        }
    };
    let manifest_path = out_dir.join("manifest.json");
    let manifest = Manifest {
        command: command.name(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        weights_sha256: setup_info.as_ref().map(|i| i.0.clone()),
        n_modes: setup_info.map(|i| i.1),
        wall_time_s: start.elapsed().as_secs_f64(),
        exit_code: outcome.exit_code,
        artifacts: outcome.artifacts.iter().map(|p| p.display().to_string()).collect(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&manifest_path, &manifest)?;
    outcome.artifacts.push(manifest_path);
    Ok(outcome)
}

fn status(pass: bool) -> i32 {
    if pass {
        0
    } else {
        EXIT_CHECK_FAILED
    }
}

fn gram_of(setup: &Setup) -> Result<Arc<crate::planewave::Gram>> {
    Ok(Arc::new(assemble_gram(&setup.weights, &setup.basis)?))
}

fn is_vacuum(w: &MaterialWeights) -> bool {
    w == &MaterialWeights::vacuum()
        || [&w.eps, &w.mu].iter().all(|t| {
            t.iter().all(|(idx, m)| {
                if *idx == [0, 0, 0] {
                    m.sub(&crate::linalg::Mat3::identity()).is_zero()
                } else {
                    m.is_zero()
                }
            })
        })
}

#[derive(Serialize)]
struct BandsSidecar<'a> {
    weights_sha256: &'a str,
    n_modes: usize,
    n_bands: usize,
    ks: &'a [Vec3],
    params: &'a [f64],
    zero_counts: &'a [usize],
    expected_zero_counts: &'a [usize],
    on_lattice: &'a [bool],
    oracle_deviation: Option<f64>,
}

fn gnuplot_script(csv: &str, labels: &[i32]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set xlabel 's'");
    let _ = writeln!(s, "set ylabel 'omega'");
    let _ = writeln!(s, "set key off");
    let plots: Vec<String> = labels
        .iter()
        .map(|n| format!("'{csv}' every ::1 using 1:($5=={n}?$6:1/0) with lines"))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

fn run_bands(config: &RunConfig, setup: &Setup, out: &Path) -> Result<Outcome> {
    check_structure(&setup.weights, config.n_probe)?;
    let path = setup.k_samples(config)?;
    let gram = gram_of(setup)?;
    let spectra = solve_many(&path.samples, &setup.basis, &gram, config.tolerances.zero_tol)?;
    let bands = label_bands(&spectra, &path, &setup.dual, setup.basis.n_modes(), config.n_bands)?;
    let oracle_deviation = if is_vacuum(&setup.weights) {
        let mut worst = 0.0f64;
        for sp in &spectra {
            let want = analytic_free_spectrum(sp.k, &setup.basis.modes);
            match multiset_rel_deviation(&sp.eigenvalues, &want, setup.unit) {
                Some(d) => worst = worst.max(d),
                None => worst = f64::INFINITY,
            }
        }
        Some(worst)
    } else {
        None
    };
    let csv = out.join("bands.csv");
    write_band_csv(&csv, &bands)?;
    let sidecar = out.join("bands.json");
    write_json(
        &sidecar,
        &BandsSidecar {
            weights_sha256: &setup.weights_hash,
            n_modes: setup.basis.n_modes(),
            n_bands: config.n_bands,
            ks: &bands.ks,
            params: &bands.params,
            zero_counts: &bands.zero_counts,
            expected_zero_counts: &bands.expected_zero_counts,
            on_lattice: &bands.on_lattice,
            oracle_deviation,
        },
    )?;
    let gp = out.join("bands.gp");
    write_atomic(&gp, gnuplot_script("bands.csv", &bands.labels()).as_bytes())?;
    let pass = oracle_deviation.is_none_or(|d| d <= config.tolerances.oracle_tol);
    let summary = match oracle_deviation {
        Some(d) => format!("{} samples, free-oracle deviation {d:.3e}", bands.len()),
        None => format!("{} samples, {} labels", bands.len(), bands.labels().len()),
    };
    Ok(Outcome { command: Command::Bands, exit_code: status(pass), artifacts: vec![csv, sidecar, gp], summary })
}

#[derive(Serialize)]
struct GroundStateReport {
    dimension: usize,
    kernel_residual: f64,
    rank_samples: Vec<(Vec3, usize)>,
    slopes: [f64; 4],
    singular_values: [f64; 3],
    validation: crate::groundstate::SlopeReport,
    passed: bool,
}

fn run_groundstate(config: &RunConfig, setup: &Setup, out: &Path) -> Result<Outcome> {
    check_structure(&setup.weights, config.n_probe)?;
    let gram = gram_of(setup)?;
    let dir = config.groundstate.direction;
    let gs = ground_space_adapted(&setup.basis, &gram, dir)?;
    let slopes = ground_slopes(&gs, dir)?;
    let ts: Vec<f64> = config.groundstate.ts.iter().map(|t| t * setup.unit).collect();
    let validation = slope_validation(&setup.basis, &gram, &gs, dir, &ts)?;
    let plain = ground_space(&setup.basis, &gram)?;
    let rank_samples: Vec<(Vec3, usize)> = random_cell_points(&setup.dual, config.random_k, config.seed)
        .into_iter()
        .map(|k| (k, perturbation_rank(&plain, k)))
        .collect();
    let last = validation.validation.len() - 1;
    let passed = gs.vectors.ncols() == 6
        && rank_samples.iter().all(|r| r.1 == 4)
        && validation.decreasing
        && validation.max_error(last) <= config.tolerances.slope_tol;
    let report = GroundStateReport {
        dimension: gs.vectors.ncols(),
        kernel_residual: gs.kernel_residual,
        rank_samples,
        slopes: slopes.slopes,
        singular_values: slopes.singular_values,
        validation,
        passed,
    };
    let path = out.join("groundstate.json");
    write_json(&path, &report)?;
    let summary = format!(
        "slopes {:?}, smallest-t error {:.3e}",
        report.slopes,
        report.validation.max_error(last)
    );
    Ok(Outcome { command: Command::Groundstate, exit_code: status(passed), artifacts: vec![path], summary })
}

#[derive(Serialize)]
struct ProjectionsReport {
    intersection: Vec<(Vec3, usize)>,
    intersection_at_zero: usize,
    discontinuity: Vec<crate::projections::DiscontinuityRow>,
    /// `‖Qreg(t k̂) − Qreg(0)‖ / t` per row.
    regular_ratios: Vec<f64>,
    passed: bool,
}

fn run_projections(config: &RunConfig, setup: &Setup, out: &Path) -> Result<Outcome> {
    check_structure(&setup.weights, config.n_probe)?;
    let gram = gram_of(setup)?;
    let ks = setup.k_samples(config)?.samples;
    let intersection: Vec<(Vec3, usize)> = ks
        .par_iter()
        .map(|&k| intersection_dimension(k, &setup.basis, &gram).map(|r| (k, r.0)))
        .collect::<Result<_>>()?;
    let intersection_at_zero = intersection_dimension([0.0; 3], &setup.basis, &gram)?.0;
    let ts: Vec<f64> = config.projections.ts.iter().map(|t| t * setup.unit).collect();
    let rows = discontinuity_probe(&ts, config.projections.direction, &setup.basis, &gram)?;
    let regular_ratios: Vec<f64> = rows.iter().map(|r| r.norm_reg / r.t).collect();
    let lo = regular_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = regular_ratios.iter().copied().fold(0.0, f64::max);
    let on_lattice = |k: &Vec3| setup.dual.snap(*k, crate::spectrum::SNAP_TOL).1;
    let passed = intersection.iter().all(|(k, d)| *d == if on_lattice(k) { 0 } else { 2 })
        && intersection_at_zero == 0
        && rows.iter().all(|r| r.norm_plain >= 0.999)
        && hi <= 2.0 * lo;
    let csv = out.join("projections.csv");
    write_discontinuity_csv(&csv, &rows)?;
    let json = out.join("projections.json");
    let report = ProjectionsReport { intersection, intersection_at_zero, discontinuity: rows, regular_ratios, passed };
    write_json(&json, &report)?;
    let summary = format!("intersection dims {:?}, regular ratio spread {:.3}", report.intersection.iter().map(|r| r.1).collect::<Vec<_>>(), hi / lo);
    Ok(Outcome { command: Command::Projections, exit_code: status(passed), artifacts: vec![csv, json], summary })
}

/// Seeded sample points for the symbol identities: `r` in the unit cell,
/// `k` in the fundamental cell, `λ ∈ [0, λ_max]`.
pub fn symbol_points(lattice: &Lattice, dual: &DualLattice, n: usize, seed: u64, lambda_max: f64) -> Vec<SymbolPoint> {
    let ks = random_cell_points(dual, n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    ks.into_iter()
        .map(|k| {
            let s: Vec3 = std::array::from_fn(|_| rng.random::<f64>());
            let lambda = lambda_max * rng.random::<f64>();
            SymbolPoint { r: lattice.to_cartesian(s), k, lambda }
        })
        .collect()
}

#[derive(Serialize)]
struct SymbolReport {
    samples: Vec<SymbolResiduals>,
    max_physical: f64,
    max_rescaled: f64,
    max_second_order: f64,
    max_equivariance: f64,
    passed: bool,
}

fn run_symbol_check(config: &RunConfig, setup: &Setup, out: &Path) -> Result<Outcome> {
    check_structure(&setup.weights, config.n_probe)?;
    let ctx = SymbolContext::new(&setup.weights, setup.basis.clone());
    let spec = &config.symbol;
    let points = symbol_points(&setup.lattice, &setup.dual, spec.samples, spec.seed, spec.lambda_max);
    let shift_vector = setup.dual.vector(spec.shift);
    let samples: Vec<SymbolResiduals> = points
        .par_iter()
        .map(|p| symbol_residuals(p, &config.modulation, &ctx, spec.shift, shift_vector))
        .collect::<Result<_>>()?;
    let max = |f: fn(&SymbolResiduals) -> f64| samples.iter().map(f).fold(0.0, f64::max);
    let max_physical = max(|s| s.physical);
    let max_rescaled = max(|s| s.rescaled);
    let max_second_order = max(|s| s.second_order);
    let max_equivariance = max(|s| s.equivariance_physical.max(s.equivariance_rescaled));
    let tol = &config.tolerances;
    let passed = max_physical <= tol.symbol_tol
        && max_rescaled <= tol.symbol_tol
        && max_second_order == 0.0
        && max_equivariance <= tol.equivariance_tol;
    let path = out.join("symbol-check.json");
    write_json(&path, &SymbolReport { samples, max_physical, max_rescaled, max_second_order, max_equivariance, passed })?;
    let summary = format!(
        "physical {max_physical:.2e}, rescaled {max_rescaled:.2e}, second order {max_second_order:.1e}, equivariance {max_equivariance:.2e}"
    );
    Ok(Outcome { command: Command::SymbolCheck, exit_code: status(passed), artifacts: vec![path], summary })
}

fn run_validate(config: &RunConfig, setup: &Setup, out: &Path) -> Result<Outcome> {
    let report = validate_weights(&setup.weights, config.n_probe);
    let path = out.join("validate.json");
    write_json(&path, &report)?;
    // surfaces the violated invariant as a numerical failure
    check_weights(&setup.weights, config.n_probe)?;
    let summary = format!("eigenvalues in [{:.4}, {:.4}]", report.min_eigenvalue, report.max_eigenvalue);
    Ok(Outcome { command: Command::Validate, exit_code: 0, artifacts: vec![path], summary })
}

#[derive(Serialize)]
struct OracleRow {
    k: Vec3,
    nonzero_count: usize,
    expected_count: usize,
    deviation: Option<f64>,
}

fn run_oracle(config: &RunConfig, setup: &Setup, out: &Path) -> Result<Outcome> {
    let gram = Arc::new(assemble_gram(&MaterialWeights::vacuum(), &setup.basis)?);
    let ks = setup.k_samples(config)?.samples;
    let rows: Vec<OracleRow> = ks
        .par_iter()
        .map(|&k| {
            let sp = solve_fiber_values(&FiberProblem::new(k, &setup.basis, gram.clone()), config.tolerances.zero_tol)?;
            let got = sp.nonzero();
            let want: Vec<f64> = analytic_free_spectrum(k, &setup.basis.modes).into_iter().filter(|w| *w != 0.0).collect();
            Ok(OracleRow {
                k,
                nonzero_count: got.len(),
                expected_count: want.len(),
                deviation: multiset_rel_deviation(&got, &want, 0.0),
            })
        })
        .collect::<Result<_>>()?;
    let worst = rows.iter().map(|r| r.deviation.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    let passed = worst <= config.tolerances.oracle_tol;
    let path = out.join("oracle.json");
    write_json(&path, &rows)?;
    Ok(Outcome {
        command: Command::Oracle,
        exit_code: status(passed),
        artifacts: vec![path],
        summary: format!("{} k-points, max relative deviation {worst:.3e}", rows.len()),
    })
}

/// Positive bands at one `k` for each cutoff, and their drift between
/// consecutive cutoffs.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub k: Vec3,
    pub cutoffs: Vec<f64>,
    pub n_modes: Vec<usize>,
    /// `omegas[c][n-1] = ω_n` at cutoff `c`.
    pub omegas: Vec<Vec<f64>>,
    /// `drift[c][n-1] = |ω_n(c+1) − ω_n(c)|`.
    pub drift: Vec<Vec<f64>>,
    /// Bands whose drift grows from one cutoff step to the next.
    pub non_monotone: Vec<usize>,
}

/// Drift of the lowest `n_bands` positive bands at `k` across `cutoffs`
/// (units of `|e*₁|`), which must be at least three and increasing.
pub fn convergence_report(config: &RunConfig, cutoffs: &[f64], k: Vec3, base: &Path) -> Result<ConvergenceTable> {
    if cutoffs.len() < 3 {
        return Err(Error::Config(format!("convergence needs at least 3 cutoffs, got {}", cutoffs.len())));
    }
    if cutoffs.windows(2).any(|w| !(w[1] > w[0])) || !(cutoffs[0] >= 0.0) {
        return Err(Error::Config("cutoffs must be non-negative and strictly increasing".into()));
    }
    let mut omegas = Vec::with_capacity(cutoffs.len());
    let mut n_modes = Vec::with_capacity(cutoffs.len());
    for &c in cutoffs {
        let setup = Setup::with_cutoff(config, c, base)?;
        let gram = gram_of(&setup)?;
        let sp = solve_fiber_values(&FiberProblem::new(k, &setup.basis, gram), config.tolerances.zero_tol)?;
        let path = KPath::from_points(vec![k]);
        let bands = label_bands(&[sp], &path, &setup.dual, setup.basis.n_modes(), config.n_bands)?;
        omegas.push(bands.positive[0].clone());
        n_modes.push(setup.basis.n_modes());
    }
    let n = omegas.iter().map(Vec::len).min().unwrap_or(0);
    let drift: Vec<Vec<f64>> = omegas
        .windows(2)
        .map(|w| (0..n).map(|i| (w[1][i] - w[0][i]).abs()).collect())
        .collect();
    let non_monotone = (0..n)
        .filter(|&i| drift.windows(2).any(|d| d[1][i] > d[0][i]))
        .map(|i| i + 1)
        .collect();
    Ok(ConvergenceTable { k, cutoffs: cutoffs.to_vec(), n_modes, omegas, drift, non_monotone })
}

fn run_convergence(config: &RunConfig, base: &Path, out: &Path) -> Result<Outcome> {
    let probe = Setup::with_cutoff(config, 0.0, base)?;
    let k = probe.k_samples(config)?.samples[0];
    let table = convergence_report(config, &config.cutoffs, k, base)?;
    let mut csv = String::from("cutoff,n_modes,n,omega,drift\n");
    for (c, row) in table.omegas.iter().enumerate() {
        for (i, w) in row.iter().enumerate() {
            let d = if c == 0 { f64::NAN } else { table.drift[c - 1].get(i).copied().unwrap_or(f64::NAN) };
            let _ = writeln!(csv, "{:.16e},{},{},{:.16e},{:.16e}", table.cutoffs[c], table.n_modes[c], i + 1, w, d);
        }
    }
    let csv_path = out.join("convergence.csv");
    write_atomic(&csv_path, csv.as_bytes())?;
    let json = out.join("convergence.json");
    write_json(&json, &table)?;
    let passed = table.non_monotone.is_empty();
    Ok(Outcome {
        command: Command::Convergence,
        exit_code: status(passed),
        artifacts: vec![csv_path, json],
        summary: format!("{} cutoffs, non-monotone bands {:?}", table.cutoffs.len(), table.non_monotone),
    })
}

/// Thread count from the command line, else `PCE_THREADS`, else rayon's default.
pub fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return if n == 0 { Err(Error::Config("--threads must be positive".into())) } else { Ok(Some(n)) };
    }
    match std::env::var("PCE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("PCE_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Configures the global rayon pool; a second call is a no-op.
pub fn init_threads(n: Option<usize>) {
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
        }
        assert!("plot".parse::<Command>().is_err());
    }

    #[test]
    fn minimal_config_defaults() {
        let c = RunConfig::from_json(r#"{"cutoff": 1.0}"#).unwrap();
        assert_eq!(c.lattice, LatticeSpec::default());
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.n_bands, 8);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            r#"{"cutoff": -1.0}"#,
            r#"{"cutoff": 1.0, "tolerances": {"zero_tol": 0.0}}"#,
            r#"{"cutoff": 1.0, "k_list": [[0,0,0]], "k_path": {"vertices": [[0,0,0],[0.5,0,0]], "samples_per_segment": 2}}"#,
            r#"{"cutoff": 1.0, "unknown": 3}"#,
            r#"{"cutoff": 1.0, "modulation": {"eps": {"kind": "cosine", "alpha": 1.5, "q": [1,0,0]}, "mu": {"kind": "constant"}}}"#,
            "not json",
        ] {
            let e = RunConfig::from_json(text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}: {e}");
        }
    }

    #[test]
    fn fractional_k_maps_to_dual_vectors() {
        let c = RunConfig::from_json(r#"{"cutoff": 0.0, "lattice": {"preset": "fcc", "a": 2.0}, "k_list": [[1, 0, 0], [0, 0.5, 0.5]]}"#).unwrap();
        let s = Setup::new(&c, Path::new(".")).unwrap();
        let ks = s.k_samples(&c).unwrap().samples;
        let want0 = s.dual.vector([1, 0, 0]);
        assert!((0..3).all(|j| (ks[0][j] - want0[j]).abs() < 1e-14));
        let f = s.dual.fractional(ks[1]);
        assert!((f[1] - 0.5).abs() < 1e-14 && (f[2] - 0.5).abs() < 1e-14 && f[0].abs() < 1e-14);
    }

    #[test]
    fn random_points_are_seeded_and_in_cell() {
        let dual = dual_basis(&Lattice::cubic(1.0)).unwrap();
        let a = random_cell_points(&dual, 5, 3);
        assert_eq!(a, random_cell_points(&dual, 5, 3));
        assert_ne!(a, random_cell_points(&dual, 5, 4));
        for k in a {
            assert!(dual.fractional(k).iter().all(|f| (-0.5..0.5).contains(f)));
        }
    }

    #[test]
    fn thread_flag_takes_precedence() {
        assert_eq!(thread_count(Some(3)).unwrap(), Some(3));
        assert!(thread_count(Some(0)).is_err());
    }
}
