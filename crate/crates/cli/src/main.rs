use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use klfield_cli::{parse_config, run, CliError, Command, ExperimentConfig, FieldChoice, EXIT_VALIDATION};

#[derive(Parser, Debug)]
#[command(name = "klfield", version, about = "Karhunen-Loeve expansion experiments for lognormal fields")]
struct Cli {
    /// Experiment configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; for `cbc`, a path ending in `.csv` names the file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Base seed; sets construction, evaluation and iid seeds to seed, seed+1, seed+2.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Catalog field: 1 or 2.
    #[arg(long)]
    example: Option<u8>,
    /// Lattice points.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    m_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<usize>>,
    /// Stochastic dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Finite-element degree.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Component-by-component generating vector and worst-case error.
    Cbc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights_file: Option<PathBuf>,
        /// Also export the shifted lattice points.
        #[arg(long)]
        points: bool,
    },
    /// Discrete spectrum and eigenvectors at the first mesh of the h list.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Write the sample matrix G to this file.
        #[arg(long)]
        dump_g: Option<PathBuf>,
        /// Read G from a previous dump instead of assembling it.
        #[arg(long)]
        load_g: Option<PathBuf>,
    },
    /// One realization of the truncated field on a 1001-point grid.
    Realize {
        #[command(flatten)]
        common: Common,
    },
    /// RMSE grid over the M and h lists.
    RmseTable {
        #[command(flatten)]
        common: Common,
    },
    /// Perturbation study of the elliptic problem.
    PdeStudy {
        #[command(flatten)]
        common: Common,
        /// Mesh denominator of the expansion.
        #[arg(long)]
        h: Option<usize>,
        /// Evaluation samples.
        #[arg(long)]
        samples: Option<u64>,
        /// Moment orders.
        #[arg(long, value_delimiter = ',')]
        p: Option<Vec<f64>>,
    },
    /// Balanced N, M, h for a target accuracy.
    Balance {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        example: Option<u8>,
    },
    /// Checks the M and h constraints for every grid cell.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        s: Option<f64>,
    },
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) -> Result<(), CliError> {
    if let Some(e) = c.example {
        cfg.field = match e {
            1 => FieldChoice::Example1,
            2 => FieldChoice::Example2,
            _ => return Err(CliError::Validation(format!("--example must be 1 or 2, got {e}"))),
        };
        cfg.expression = None;
        cfg.smoothness = None;
        cfg.kinks.clear();
        if e == 1 {
            cfg.dprime = None;
        }
    }
    if let Some(n) = c.n {
        cfg.n = n;
    }
    if let Some(m) = &c.m_list {
        cfg.m_list = m.clone();
    }
    if let Some(h) = &c.h_list {
        cfg.h_list = h.clone();
    }
    if c.dim.is_some() {
        cfg.dprime = c.dim;
    }
    if c.k.is_some() {
        cfg.k = c.k;
    }
    Ok(())
}

fn resolve(cli: &Cli) -> Result<(ExperimentConfig, Command), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            parse_config(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let mut cbc_file = None;
    if let Some(out) = &cli.out {
        if matches!(cli.command, Sub::Cbc { .. }) && out.extension().is_some_and(|e| e == "csv") {
            cbc_file = Some(out.clone());
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                cfg.out = parent.to_path_buf();
            }
        } else {
            cfg.out = out.clone();
        }
    }
    let command = match &cli.command {
        Sub::Cbc {
            common,
            weights_file,
            points,
        } => {
            apply_common(&mut cfg, common)?;
            if weights_file.is_some() {
                cfg.weights_file = weights_file.clone();
            }
            Command::Cbc {
                file: cbc_file,
                points: *points,
            }
        }
        Sub::Spectrum { common, dump_g, load_g } => {
            apply_common(&mut cfg, common)?;
            Command::Spectrum {
                dump_g: dump_g.clone(),
                load_g: load_g.clone(),
            }
        }
        Sub::Realize { common } => {
            apply_common(&mut cfg, common)?;
            Command::Realize
        }
        Sub::RmseTable { common } => {
            apply_common(&mut cfg, common)?;
            Command::RmseTable
        }
        Sub::PdeStudy { common, h, samples, p } => {
            apply_common(&mut cfg, common)?;
            if let Some(h) = h {
                cfg.pde_h = *h;
            }
            if let Some(s) = samples {
                cfg.samples = *s;
            }
            if let Some(p) = p {
                cfg.p_list = p.clone();
            }
            Command::PdeStudy
        }
        Sub::Balance { epsilon, s, example } => {
            apply_common(
                &mut cfg,
                &Common {
                    example: *example,
                    ..Common::default()
                },
            )?;
            if let Some(e) = epsilon {
                cfg.epsilon = *e;
            }
            if s.is_some() {
                cfg.s = *s;
            }
            Command::Balance
        }
        Sub::Check { common, s } => {
            apply_common(&mut cfg, common)?;
            if s.is_some() {
                cfg.s = *s;
            }
            Command::Check
        }
    };
    cfg.validate()?;
    Ok((cfg, command))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let result = resolve(&cli).and_then(|(cfg, command)| run(&cfg, &command).map(|dir| (command, dir)));
    match result {
        Ok((command, dir)) => {
            println!("[{}] wrote {}", command.name(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
