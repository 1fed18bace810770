//! Experiment runner: configuration, subcommands and artifact emission.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use klfield::covariance_op::{CovarianceError, SampleMatrix};
use klfield::error_lab::{ErrorLabError, Balance};
use klfield::field_models::Expr;
use klfield::io::fmt17;
use klfield::lattice_qmc::LatticeError;
use klfield::pde_app::{Forcing, PdeError, StudyOptions};
use klfield::spectral::SpectralError;
use klfield::{
    assemble_sample_matrix, balance_parameters, cbc_construct, constraint_check, diagnose_spectral_gap,
    perturbation_study, rmse_profile_with, solve_kl_eigen_up_to, worst_case_error, DiscreteKl, FeSpace,
    FieldModel, GaussianSampleSet, KlRealization, LatticeRule, WeightSchedule,
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{parse_config, ConfigError, ExperimentConfig, FieldChoice, PsiChoice, WeightsError};

/// Points of the uniform output grid for fields and eigenvectors.
pub const GRID_POINTS: usize = 1001;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("weights: {0}")]
    Weights(#[from] WeightsError),
    #[error("{0}")]
    Validation(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numeric(#[from] klfield::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Weights(_) | CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io { .. } | CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

macro_rules! numeric_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Numeric(e.into())
            }
        }
    )*};
}
numeric_from!(LatticeError, CovarianceError, SpectralError, ErrorLabError, PdeError, klfield::fem1d::FemError);

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The subcommands and their command-specific options.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// Generating vector and worst-case error. `points` also exports the
    /// shifted construction points.
    Cbc { file: Option<PathBuf>, points: bool },
    /// Discrete spectrum and leading eigenvectors at `h_list[0]`.
    Spectrum {
        dump_g: Option<PathBuf>,
        load_g: Option<PathBuf>,
    },
    /// One realization of the truncated field on the output grid.
    Realize,
    RmseTable,
    PdeStudy,
    Balance,
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Cbc { .. } => "cbc",
            Command::Spectrum { .. } => "spectrum",
            Command::Realize => "realize",
            Command::RmseTable => "rmse-table",
            Command::PdeStudy => "pde-study",
            Command::Balance => "balance",
            Command::Check => "check",
        }
    }
}

/// Artifacts of one run, in write order.
#[derive(Debug, Default)]
struct Artifacts {
    files: Vec<(String, String)>,
    meta: Vec<(String, String)>,
}

impl Artifacts {
    fn file(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }
}

/// Writes through a temporary sibling and renames into place.
fn write_atomic(path: &Path, body: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// SHA-256 of the rendered config; the output directory is left out so that
/// identical experiments written to different places hash the same.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let text: String = config
        .render()
        .lines()
        .filter(|l| !l.starts_with("out = "))
        .flat_map(|l| [l, "\n"])
        .collect();
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Runs `command` and writes its CSVs plus `run.meta` into `config.out`,
/// returning that directory.
pub fn run(config: &ExperimentConfig, command: &Command) -> Result<PathBuf, CliError> {
    config.validate()?;
    let start = Instant::now();
    let mut art = Artifacts::default();
    match command {
        Command::Cbc { points, .. } => cmd_cbc(config, *points, &mut art)?,
        Command::Spectrum { dump_g, load_g } => cmd_spectrum(config, dump_g.as_deref(), load_g.as_deref(), &mut art)?,
        Command::Realize => cmd_realize(config, &mut art)?,
        Command::RmseTable => cmd_rmse_table(config, &mut art)?,
        Command::PdeStudy => cmd_pde_study(config, &mut art)?,
        Command::Balance => cmd_balance(config, &mut art)?,
        Command::Check => cmd_check(config, &mut art)?,
    }
    let wall = start.elapsed().as_secs_f64();

    let dir = config.out.clone();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (name, body) in &art.files {
        let path = match (command, name.as_str()) {
            (Command::Cbc { file: Some(f), .. }, "cbc.csv") => f.clone(),
            _ => dir.join(name),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        write_atomic(&path, body)?;
    }

    let mut meta = String::new();
    let _ = writeln!(meta, "command = {}", command.name());
    let _ = writeln!(meta, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(meta, "config_sha256 = {}", config_hash(config));
    let _ = writeln!(meta, "construction_seed = {}", config.construction_seed);
    let _ = writeln!(meta, "eval_seed = {}", config.eval_seed);
    let _ = writeln!(meta, "psi_seed = {}", config.psi_seed);
    let _ = writeln!(meta, "rng = ChaCha20 (rand_chacha), seed_from_u64");
    for (k, v) in &art.meta {
        let _ = writeln!(meta, "{k} = {v}");
    }
    let _ = writeln!(meta, "threads = {}", rayon::current_num_threads());
    let _ = writeln!(meta, "wall_time_s = {wall:.3}");
    let _ = writeln!(meta, "[config]");
    meta.push_str(&config.render());
    write_atomic(&dir.join("run.meta"), &meta)?;
    Ok(dir)
}

fn weights(config: &ExperimentConfig) -> Result<WeightSchedule<f64>, CliError> {
    let w = match &config.weights_file {
        Some(p) => config::read_weights(p)?,
        None => WeightSchedule::pod_default(config.dprime()),
    };
    if w.len() < config.dprime() {
        return Err(CliError::Validation(format!(
            "weights cover {} dimensions but dprime = {}",
            w.len(),
            config.dprime()
        )));
    }
    Ok(w)
}

/// Lattice rules and sample sets shared by the table commands.
struct Sampling {
    model: FieldModel,
    z: Vec<u64>,
    wce: f64,
    samples: GaussianSampleSet<f64>,
    eval: GaussianSampleSet<f64>,
}

fn sampling(config: &ExperimentConfig, eval_points: u64, art: &mut Artifacts) -> Result<Sampling, CliError> {
    let model = config.model()?;
    let d = config.dprime();
    if model.dprime() != d {
        return Err(CliError::Validation(format!(
            "field {} has {} stochastic dimensions, dprime = {d}",
            model.name(),
            model.dprime()
        )));
    }
    let w = weights(config)?;
    let z = cbc_construct(config.n, d, &w)?;
    let wce = worst_case_error(&z, config.n, &w)?;
    let rule = LatticeRule::with_seeded_shift(z.clone(), config.n, config.construction_seed)?;
    let samples = GaussianSampleSet::from_rule(&rule)?;
    let ez = if eval_points == config.n {
        z.clone()
    } else {
        cbc_construct(eval_points, d, &w)?
    };
    let erule = LatticeRule::with_seeded_shift(ez.clone(), eval_points, config.eval_seed)?;
    let eval = GaussianSampleSet::from_rule(&erule)?;
    art.meta("field", model.name());
    art.meta("dprime", d);
    art.meta("n", config.n);
    art.meta("generating_vector", join_u64(&z));
    art.meta("wce", fmt17(wce));
    art.meta("wce_kernel", "unanchored, nu = 1, closed form");
    art.meta("eval_points", eval_points);
    if eval_points != config.n {
        art.meta("eval_generating_vector", join_u64(&ez));
    }
    Ok(Sampling {
        model,
        z,
        wce,
        samples,
        eval,
    })
}

fn join_u64(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

fn build_kl(
    config: &ExperimentConfig,
    s: &Sampling,
    h_den: usize,
    m: usize,
) -> Result<DiscreteKl<f64>, CliError> {
    let k = config.degree()?;
    let space = FeSpace::<f64>::new(h_den, k)?;
    let g = assemble_sample_matrix(&space, &s.model, &s.samples)?;
    kl_from_matrix(config, s, &space, &g, m)
}

fn kl_from_matrix(
    config: &ExperimentConfig,
    s: &Sampling,
    space: &FeSpace<f64>,
    g: &SampleMatrix<f64>,
    m: usize,
) -> Result<DiscreteKl<f64>, CliError> {
    let max = space.ndofs().min(g.cols());
    if m > max {
        return Err(CliError::Validation(format!(
            "M = {m} exceeds min(Q, N) = {max} at h = 1/{}",
            space.n_elements()
        )));
    }
    Ok(solve_kl_eigen_up_to(space, &s.model, g, m)?.with_construction_seed(Some(config.construction_seed)))
}

fn grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|i| i as f64 / (GRID_POINTS - 1) as f64).collect()
}

fn max_m(config: &ExperimentConfig) -> usize {
    config.m_list.iter().copied().max().unwrap_or(1)
}

fn cmd_cbc(config: &ExperimentConfig, points: bool, art: &mut Artifacts) -> Result<(), CliError> {
    let w = weights(config)?;
    let z = cbc_construct(config.n, config.dprime(), &w)?;
    let wce = worst_case_error(&z, config.n, &w)?;
    let mut body = String::from("component,value\n");
    for (j, zj) in z.iter().enumerate() {
        let _ = writeln!(body, "{},{zj}", j + 1);
    }
    let _ = writeln!(body, "wce,{}", fmt17(wce));
    art.file("cbc.csv", body);
    if points {
        let rule = LatticeRule::<f64>::with_seeded_shift(z.clone(), config.n, config.construction_seed)?;
        art.file("points.csv", rule.shifted_points().to_csv());
    }
    art.meta("n", config.n);
    art.meta("dprime", config.dprime());
    art.meta("wce", fmt17(wce));
    art.meta("wce_kernel", "unanchored, nu = 1, closed form");
    Ok(())
}

fn cmd_spectrum(
    config: &ExperimentConfig,
    dump_g: Option<&Path>,
    load_g: Option<&Path>,
    art: &mut Artifacts,
) -> Result<(), CliError> {
    let s = sampling(config, config.eval_points(), art)?;
    let h_den = config.h_list[0];
    let k = config.degree()?;
    let space = FeSpace::<f64>::new(h_den, k)?;
    let g = match load_g {
        Some(p) => {
            let f = fs::File::open(p).map_err(io_err(p))?;
            let g = SampleMatrix::<f64>::read_binary(std::io::BufReader::new(f))?;
            if g.rows() != space.ndofs() {
                return Err(CliError::Validation(format!(
                    "{} holds {} rows, the space has {} dofs",
                    p.display(),
                    g.rows(),
                    space.ndofs()
                )));
            }
            g
        }
        None => assemble_sample_matrix(&space, &s.model, &s.samples)?,
    };
    if let Some(p) = dump_g {
        let f = fs::File::create(p).map_err(io_err(p))?;
        g.write_binary(std::io::BufWriter::new(f))?;
    }
    let kl = kl_from_matrix(config, &s, &space, &g, max_m(config))?;
    let mut body = String::from("n,lambda\n");
    for (n, l) in kl.spectrum().iter().enumerate() {
        let _ = writeln!(body, "{},{}", n + 1, fmt17(*l));
    }
    art.file("spectrum.csv", body);

    let xs = grid();
    let mut vecs = String::from("x");
    for n in 1..=kl.len() {
        let _ = write!(vecs, ",phi_{n}");
    }
    vecs.push('\n');
    for &x in &xs {
        vecs.push_str(&fmt17(x));
        for n in 0..kl.len() {
            let v = space.eval_fe(kl.eigenvector(n), x)?;
            let _ = write!(vecs, ",{}", fmt17(v));
        }
        vecs.push('\n');
    }
    art.file("eigenvectors.csv", vecs);

    let gaps = diagnose_spectral_gap(&kl.spectrum()[..kl.rank()], g.cols());
    let flagged: Vec<String> = gaps.flagged().map(|e| format!("{}|{}", e.upper, e.lower)).collect();
    art.meta("h", format!("1/{h_den}"));
    art.meta("k", k);
    art.meta("rank", kl.rank());
    art.meta("modes_written", kl.len());
    art.meta("gap_threshold", fmt17(gaps.threshold));
    art.meta("gap_flagged", if flagged.is_empty() { "none".to_string() } else { flagged.join(",") });
    Ok(())
}

fn cmd_realize(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let s = sampling(config, config.eval_points(), art)?;
    let h_den = config.h_list[0];
    let kl = build_kl(config, &s, h_den, max_m(config))?;
    let r = KlRealization::with_mode(&kl, s.eval.sample(0), 0, config.psi())?;
    let xs = grid();
    let mut body = String::from("x,logkappa,kappa\n");
    for &x in &xs {
        let lk = r.synthesize_log_field(x)?;
        let k = klfield::spectral::guarded_exp(lk);
        let _ = writeln!(body, "{},{},{}", fmt17(x), fmt17(lk), fmt17(k));
    }
    art.file("realize.csv", body);
    art.meta("h", format!("1/{h_den}"));
    art.meta("m", kl.len());
    art.meta("psi_mode", config.psi_mode.as_str());
    if config.psi_mode == PsiChoice::Projected {
        art.meta("y_source", "evaluation sample 0");
    }
    Ok(())
}

/// One `h` row of the RMSE grid.
struct TableCell {
    h_den: usize,
    rank: usize,
    rmse: Vec<f64>,
}

fn cmd_rmse_table(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let s = sampling(config, config.eval_points(), art)?;
    let mmax = max_m(config);
    let cells = config
        .h_list
        .par_iter()
        .map(|&h_den| {
            let kl = build_kl(config, &s, h_den, mmax)?;
            let ms: Vec<usize> = config.m_list.iter().map(|&m| m.min(kl.len())).collect();
            let rmse = rmse_profile_with(&kl, &s.eval, &ms, config.psi())?;
            Ok(TableCell {
                h_den,
                rank: kl.len(),
                rmse,
            })
        })
        .collect::<Result<Vec<TableCell>, CliError>>()?;

    let mut clamped = Vec::new();
    let mut body = format!(
        "# field={} dprime={} n={} k={} psi_mode={} construction_seed={} eval_seed={} wce={}\n",
        s.model.name(),
        config.dprime(),
        config.n,
        config.degree()?,
        config.psi_mode.as_str(),
        config.construction_seed,
        config.eval_seed,
        fmt17(s.wce)
    );
    body.push_str("h,M,rmse\n");
    for cell in &cells {
        for (&m, &e) in config.m_list.iter().zip(&cell.rmse) {
            if m > cell.rank {
                clamped.push(format!("M{m}->{}@h1/{}", cell.rank, cell.h_den));
            }
            let _ = writeln!(body, "{},{m},{}", fmt17(1.0 / cell.h_den as f64), fmt17(e));
        }
    }
    art.file("rmse_table.csv", body);
    art.meta("k", config.degree()?);
    art.meta("psi_mode", config.psi_mode.as_str());
    art.meta("generating_vector_len", s.z.len());
    art.meta(
        "rank_clamped",
        if clamped.is_empty() { "none".to_string() } else { clamped.join(",") },
    );
    Ok(())
}

fn forcing(config: &ExperimentConfig) -> Result<Forcing<f64>, CliError> {
    let expr = Expr::parse(&config.forcing, 0).map_err(|e| CliError::Validation(format!("forcing: {e}")))?;
    Ok(Arc::new(move |x: f64| expr.eval::<f64>(&[], x)))
}

fn cmd_pde_study(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let s = sampling(config, config.samples, art)?;
    let kl = build_kl(config, &s, config.pde_h, max_m(config))?;
    let ms: Vec<usize> = config.m_list.iter().map(|&m| m.min(kl.len())).collect();
    let options = StudyOptions {
        moments: config.p_list.clone(),
        ..StudyOptions::default()
    };
    let report = perturbation_study(&kl, &ms, forcing(config)?, &s.eval, &options)?;
    let mut body = String::from("M,p,error_estimate,kappa_min_mean,kappa_max_mean\n");
    let mut bound = String::from("M,p,lhs,rhs,ratio\n");
    let per_m = config.p_list.len();
    for (i, row) in report.rows.iter().enumerate() {
        let m = config.m_list[i / per_m];
        let _ = writeln!(
            body,
            "{m},{},{},{},{}",
            row.p,
            fmt17(row.error_estimate),
            fmt17(row.kappa_min_mean),
            fmt17(row.kappa_max_mean)
        );
        let _ = writeln!(bound, "{m},{},{},{},{}", row.p, fmt17(row.lhs), fmt17(row.rhs), fmt17(row.ratio));
    }
    art.file("pde_study.csv", body);
    art.file("pde_bound.csv", bound);
    art.meta("h", format!("1/{}", config.pde_h));
    art.meta("k", config.degree()?);
    art.meta("modes", kl.len());
    art.meta("reference_space", format!("1/{} degree {}", report.reference_elements, report.reference_degree));
    art.meta("energy_violations", report.energy_violations);
    art.meta("norm_ratio", fmt17(report.norm_ratio));
    art.meta("forcing", &config.forcing);
    Ok(())
}

fn cmd_balance(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let sv = config.smoothness_value()?;
    let Balance {
        n,
        m,
        h,
        h_denominator,
    } = balance_parameters(config.epsilon, sv, 1)?;
    let mut body = String::from("quantity,value\n");
    let _ = writeln!(body, "epsilon,{}", fmt17(config.epsilon));
    let _ = writeln!(body, "s,{}", fmt17(sv));
    let _ = writeln!(body, "N,{n}");
    let _ = writeln!(body, "M,{m}");
    let _ = writeln!(body, "h,{}", fmt17(h));
    let _ = writeln!(body, "h_denominator,{h_denominator}");
    art.file("balance.csv", body);
    Ok(())
}

fn cmd_check(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let sv = config.smoothness_value()?;
    let mut body = String::from("h,M,m_bound,m_pass,h_bound,h_pass\n");
    let mut failures = 0usize;
    for &h_den in &config.h_list {
        for &m in &config.m_list {
            let h = 1.0 / h_den as f64;
            let r = constraint_check(m, config.n as usize, h, sv, 1);
            failures += usize::from(!r.all_pass());
            let _ = writeln!(
                body,
                "{},{m},{},{},{},{}",
                fmt17(h),
                fmt17(r.m_bound),
                r.m_pass,
                fmt17(r.h_bound),
                r.h_pass
            );
        }
    }
    art.file("check.csv", body);
    art.meta("s", fmt17(sv));
    art.meta("failing_cells", failures);
    Ok(())
}
